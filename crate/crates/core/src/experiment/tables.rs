//! CSV and JSON artifacts. Floats in CSV files use `sci`, so reruns on the
//! same summary produce identical bytes.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::{Analysis, ExperimentError, RunSummary, SUMMARY_SCHEMA_VERSION};

/// Scientific notation with 7 significant digits and a signed exponent of
/// at least two digits, e.g. `6.200000E-04`.
pub fn sci(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.6E}");
    let (mantissa, exp) = s.split_once('E').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}E{sign}{:02}", exp.abs())
}

fn opt_len(v: Option<usize>) -> String {
    v.map(|l| l.to_string()).unwrap_or_default()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| ExperimentError::io(path, e))
}

fn prior_csv(s: &RunSummary) -> String {
    let mut out = String::from("length,count,prior\n");
    let total: u64 = s
        .length_histogram
        .iter()
        .filter(|(&l, _)| l >= 3 && l <= s.max_route_len)
        .map(|(_, &c)| c)
        .sum();
    for (&l, &c) in &s.length_histogram {
        let p = if l >= 3 && l <= s.max_route_len && total > 0 {
            c as f64 / total as f64
        } else {
            0.0
        };
        writeln!(out, "{l},{c},{}", sci(p)).unwrap();
    }
    out
}

fn posterior_csv(s: &RunSummary) -> String {
    let mut out = String::from("length,prior,posterior,route_prob,class_size\n");
    for r in &s.posterior {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.length,
            sci(r.prior),
            sci(r.posterior),
            sci(r.route_prob),
            sci(r.class_size)
        )
        .unwrap();
    }
    out
}

fn subsets_by_pair_csv(s: &RunSummary) -> String {
    let mut out = String::from(
        "scenario,eps1,spoil_min_len,alice,bob,shared_routes,usable_routes,subsets,remainder\n",
    );
    for p in &s.pairs {
        let sc = &s.scenarios[p.scenario];
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            p.scenario,
            sci(sc.eps1),
            opt_len(sc.spoil_min_len),
            p.alice,
            p.bob,
            p.shared_routes,
            p.usable_routes,
            p.subsets,
            p.remainder
        )
        .unwrap();
    }
    out
}

/// One row per scenario, one column per subset count.
fn subset_histogram_csv(s: &RunSummary) -> String {
    let width = s
        .scenarios
        .iter()
        .filter_map(|sc| sc.subset_histogram.keys().next_back().copied())
        .max()
        .unwrap_or(0)
        .max(7);
    let mut out = String::from("scenario,eps1,spoil_min_len");
    for k in 1..=width {
        write!(out, ",{k}").unwrap();
    }
    out.push_str(",total_subsets,h_min,b_total\n");
    for sc in &s.scenarios {
        write!(out, "{},{},{}", sc.index, sci(sc.eps1), opt_len(sc.spoil_min_len)).unwrap();
        for k in 1..=width {
            write!(out, ",{}", sc.subset_histogram.get(&k).copied().unwrap_or(0)).unwrap();
        }
        writeln!(out, ",{},{},{}", sc.total_subsets, sci(sc.h_min), sci(sc.b_total)).unwrap();
    }
    out
}

fn summary_json(s: &RunSummary) -> Result<String, ExperimentError> {
    let mut text =
        serde_json::to_string_pretty(s).map_err(|e| ExperimentError::Summary(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Writes prior.csv, posterior.csv, subsets_by_pair.csv,
/// subset_histogram.csv and summary.json.
pub fn emit_tables(summary: &RunSummary, dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    write_file(&dir.join("prior.csv"), prior_csv(summary).as_bytes())?;
    write_file(&dir.join("posterior.csv"), posterior_csv(summary).as_bytes())?;
    write_file(
        &dir.join("subsets_by_pair.csv"),
        subsets_by_pair_csv(summary).as_bytes(),
    )?;
    write_file(
        &dir.join("subset_histogram.csv"),
        subset_histogram_csv(summary).as_bytes(),
    )?;
    write_file(&dir.join("summary.json"), summary_json(summary)?.as_bytes())
}

/// The tables plus subsets.csv, secrets.json and reconciliation.jsonl.
pub fn emit_artifacts(a: &Analysis, dir: &Path) -> Result<(), ExperimentError> {
    emit_tables(&a.summary, dir)?;

    let mut subsets =
        String::from("scenario,alice,bob,subset_index,size,min_column_slack,compromised\n");
    for r in &a.subsets {
        writeln!(
            subsets,
            "{},{},{},{},{},{},{}",
            r.scenario,
            r.alice,
            r.bob,
            r.subset_index,
            r.size,
            sci(r.min_column_slack),
            r.compromised
        )
        .unwrap();
    }
    write_file(&dir.join("subsets.csv"), subsets.as_bytes())?;

    #[derive(serde::Serialize)]
    struct SecretsFile<'a> {
        schema_version: u32,
        secrets: &'a [super::SecretRow],
    }
    let secrets = SecretsFile {
        schema_version: SUMMARY_SCHEMA_VERSION,
        secrets: &a.secrets,
    };
    let mut text = serde_json::to_string_pretty(&secrets)
        .map_err(|e| ExperimentError::Summary(e.to_string()))?;
    text.push('\n');
    write_file(&dir.join("secrets.json"), text.as_bytes())?;

    let mut lines = String::new();
    for l in &a.reconciliation {
        lines.push_str(
            &serde_json::to_string(l).map_err(|e| ExperimentError::Summary(e.to_string()))?,
        );
        lines.push('\n');
    }
    write_file(&dir.join("reconciliation.jsonl"), lines.as_bytes())
}

pub fn read_summary(path: &Path) -> Result<RunSummary, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    let s: RunSummary =
        serde_json::from_str(&text).map_err(|e| ExperimentError::Summary(e.to_string()))?;
    if s.schema_version != SUMMARY_SCHEMA_VERSION {
        return Err(ExperimentError::Summary(format!(
            "unsupported schema_version {}",
            s.schema_version
        )));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sci_format() {
        assert_eq!(sci(0.00062), "6.200000E-04");
        assert_eq!(sci(4978.22), "4.978220E+03");
        assert_eq!(sci(0.0), "0.000000E+00");
        assert_eq!(sci(-1.5e-120), "-1.500000E-120");
        assert_eq!(sci(1.0), "1.000000E+00");
    }
}
