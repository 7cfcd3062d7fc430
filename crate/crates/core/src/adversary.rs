//! The eavesdropper's belief about a route it has not overheard.
//!
//! Eve's view of an unknown full route through Alice and Bob is built in three
//! steps:
//!
//! 1. the worst-case probability that she overhears a route of length `l`
//!    ([`p_overhear`]), the union area of `l` collinear disks of radius `d_e`
//!    spaced `d_e` apart, divided by the playground area;
//! 2. a Bayes update of the empirical length prior on the event that she did
//!    *not* overhear it ([`length_posterior`]);
//! 3. a uniform split of each length class over its
//!    `C(N - 2, l - 2) * l!` equally likely routes ([`RoutePosterior`]).
//!
//! Min-entropy and smooth min-entropy are then functions of the per-class
//! route probabilities only.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::route::{RouteError, RouteSpace, MIN_KEY_ROUTE_LEN};

/// Linear coefficient of the overhearing area, `pi - 2 (pi/3 - sqrt(3)/4)`,
/// rounded as in the closed form used by the protocol analysis.
pub const OVERHEAR_SLOPE: f64 = 1.91;
/// Constant term, `2 (pi/3 - sqrt(3)/4)`, rounded likewise.
pub const OVERHEAR_INTERCEPT: f64 = 1.23;

#[derive(Debug, Error, PartialEq)]
pub enum AdversaryError {
    #[error("route length {0} is too short (need >= 2)")]
    ShortRoute(usize),
    #[error("{0} must be positive, got {1}")]
    BadGeometry(&'static str, f64),
    #[error("no routes of length >= 3 to estimate a prior from")]
    EmptyLog,
    #[error("length {0} is outside the support")]
    OutsideSupport(usize),
    #[error("probabilities must be finite, non-negative and sum to a positive value")]
    BadDistribution,
    #[error("every length is certainly overheard; posterior undefined")]
    DegenerateLikelihood,
    #[error("smoothing parameter {0} outside [0, 1)")]
    BadSmoothing(f64),
    #[error("spoiling at length {0} leaves no support")]
    EmptySpoil(usize),
    #[error(transparent)]
    Route(#[from] RouteError),
}

/// Worst-case probability that a node off a route of length `l` overhears it:
/// `d_e^2 (1.91 l + 1.23) / s_total`, clamped to 1.
pub fn p_overhear(l: usize, d_e: f64, s_total: f64) -> Result<f64, AdversaryError> {
    if l < 2 {
        return Err(AdversaryError::ShortRoute(l));
    }
    if !(d_e >= 0.0) {
        return Err(AdversaryError::BadGeometry("d_e", d_e));
    }
    if !(s_total > 0.0) {
        return Err(AdversaryError::BadGeometry("s_total", s_total));
    }
    let p = d_e * d_e * (OVERHEAR_SLOPE * l as f64 + OVERHEAR_INTERCEPT) / s_total;
    if p > 1.0 {
        log::warn!("overhearing probability {p} for l={l} clamped to 1");
        return Ok(1.0);
    }
    Ok(p)
}

/// `a_ij`: probability that node `j` knows full route `i`.
pub fn selection_prob(
    node_on_route: bool,
    l: usize,
    d_e: f64,
    s_total: f64,
) -> Result<f64, AdversaryError> {
    if node_on_route {
        Ok(1.0)
    } else {
        p_overhear(l, d_e, s_total)
    }
}

/// Empirical `p(L_r = l)` over key-bearing lengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthPrior {
    probs: BTreeMap<usize, f64>,
}

impl LengthPrior {
    pub fn new(probs: BTreeMap<usize, f64>) -> Result<Self, AdversaryError> {
        let probs: BTreeMap<usize, f64> = probs.into_iter().filter(|&(_, p)| p > 0.0).collect();
        let total: f64 = probs.values().sum();
        if probs.is_empty()
            || !total.is_finite()
            || probs.values().any(|p| !p.is_finite())
            || probs.keys().any(|&l| l < MIN_KEY_ROUTE_LEN)
        {
            return Err(AdversaryError::BadDistribution);
        }
        Ok(Self {
            probs: probs.into_iter().map(|(l, p)| (l, p / total)).collect(),
        })
    }

    pub fn from_counts(counts: &BTreeMap<usize, u64>) -> Result<Self, AdversaryError> {
        let kept: BTreeMap<usize, f64> = counts
            .iter()
            .filter(|&(&l, &c)| l >= MIN_KEY_ROUTE_LEN && c > 0)
            .map(|(&l, &c)| (l, c as f64))
            .collect();
        if kept.is_empty() {
            return Err(AdversaryError::EmptyLog);
        }
        Self::new(kept)
    }

    pub fn probs(&self) -> &BTreeMap<usize, f64> {
        &self.probs
    }

    pub fn get(&self, l: usize) -> f64 {
        self.probs.get(&l).copied().unwrap_or(0.0)
    }

    pub fn min_len(&self) -> usize {
        *self.probs.keys().next().expect("prior is nonempty")
    }

    pub fn max_len(&self) -> usize {
        *self.probs.keys().next_back().expect("prior is nonempty")
    }

    /// Restricts to lengths `>= min_len` and renormalises.
    pub fn spoil(&self, min_len: usize) -> Result<LengthPrior, AdversaryError> {
        let kept: BTreeMap<usize, f64> = self
            .probs
            .range(min_len..)
            .map(|(&l, &p)| (l, p))
            .collect();
        if kept.is_empty() {
            return Err(AdversaryError::EmptySpoil(min_len));
        }
        LengthPrior::new(kept)
    }
}

/// Normalised histogram of route lengths; lengths below 3 carry no key
/// material and are ignored.
pub fn estimate_length_prior<I>(lengths: I) -> Result<LengthPrior, AdversaryError>
where
    I: IntoIterator<Item = usize>,
{
    let mut counts = BTreeMap::new();
    for l in lengths {
        *counts.entry(l).or_insert(0u64) += 1;
    }
    LengthPrior::from_counts(&counts)
}

/// `p(L_r = l | K_Eve = 0)` from a prior and the overhearing likelihood.
pub fn length_posterior(
    prior: &LengthPrior,
    d_e: f64,
    s_total: f64,
) -> Result<BTreeMap<usize, f64>, AdversaryError> {
    let mut unnorm = BTreeMap::new();
    for (&l, &p) in prior.probs() {
        let miss = 1.0 - p_overhear(l, d_e, s_total)?;
        unnorm.insert(l, p * miss);
    }
    let z: f64 = unnorm.values().sum();
    if !(z > 0.0) {
        return Err(AdversaryError::DegenerateLikelihood);
    }
    Ok(unnorm.into_iter().map(|(l, v)| (l, v / z)).collect())
}

/// How min-entropy is accounted after discarding short lengths.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpoilAccounting {
    /// Surviving routes keep their unconditioned probabilities.
    #[default]
    Unconditioned,
    /// The posterior is conditioned on the surviving lengths.
    Conditioned,
}

impl std::str::FromStr for SpoilAccounting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unconditioned" => Ok(Self::Unconditioned),
            "conditioned" => Ok(Self::Conditioned),
            other => Err(format!("unknown spoil accounting {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthClass {
    pub length: usize,
    /// `p(L_r = l | K_Eve = 0)`
    pub length_prob: f64,
    /// Probability of one specific route of this length.
    pub route_prob: f64,
    pub class_size: f64,
}

/// Eve's belief over full routes through a fixed pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutePosterior {
    space: RouteSpace,
    classes: Vec<LengthClass>,
}

impl RoutePosterior {
    pub fn new(
        space: RouteSpace,
        length_probs: &BTreeMap<usize, f64>,
    ) -> Result<Self, AdversaryError> {
        let mut classes = Vec::with_capacity(length_probs.len());
        for (&l, &p) in length_probs {
            if !p.is_finite() || p < 0.0 {
                return Err(AdversaryError::BadDistribution);
            }
            let size = space.class_size_f64(l)?;
            classes.push(LengthClass {
                length: l,
                length_prob: p,
                route_prob: p / size,
                class_size: size,
            });
        }
        if classes.is_empty() {
            return Err(AdversaryError::BadDistribution);
        }
        Ok(Self { space, classes })
    }

    /// Prior to posterior in one step.
    pub fn from_prior(
        space: RouteSpace,
        prior: &LengthPrior,
        d_e: f64,
        s_total: f64,
    ) -> Result<Self, AdversaryError> {
        Self::new(space, &length_posterior(prior, d_e, s_total)?)
    }

    /// Builds the posterior from per-route probabilities, one per length.
    pub fn from_route_probs(
        space: RouteSpace,
        route_probs: &BTreeMap<usize, f64>,
    ) -> Result<Self, AdversaryError> {
        let mut lengths = BTreeMap::new();
        for (&l, &p) in route_probs {
            lengths.insert(l, p * space.class_size_f64(l)?);
        }
        Self::new(space, &lengths)
    }

    pub fn space(&self) -> &RouteSpace {
        &self.space
    }

    pub fn classes(&self) -> &[LengthClass] {
        &self.classes
    }

    pub fn total_mass(&self) -> f64 {
        self.classes.iter().map(|c| c.length_prob).sum()
    }

    pub fn route_probability(&self, l: usize) -> Result<f64, AdversaryError> {
        self.classes
            .iter()
            .find(|c| c.length == l)
            .map(|c| c.route_prob)
            .ok_or(AdversaryError::OutsideSupport(l))
    }

    /// Length achieving the largest per-route probability.
    pub fn argmax_length(&self) -> usize {
        self.classes
            .iter()
            .fold(None::<&LengthClass>, |best, c| match best {
                Some(b) if b.route_prob >= c.route_prob => Some(b),
                _ => Some(c),
            })
            .map(|c| c.length)
            .expect("posterior is nonempty")
    }

    pub fn min_entropy(&self) -> f64 {
        let max = self
            .classes
            .iter()
            .map(|c| c.route_prob)
            .fold(0.0f64, f64::max);
        -max.log2()
    }

    /// Smooth min-entropy over the sub-distribution ball of total removed
    /// mass `eps3`, by water-filling the largest per-route probabilities.
    pub fn smooth_min_entropy(&self, eps3: f64) -> Result<f64, AdversaryError> {
        let classes: Vec<(f64, f64)> = self
            .classes
            .iter()
            .map(|c| (c.route_prob, c.class_size))
            .collect();
        Ok(-water_fill_level(&classes, eps3)?.log2())
    }

    /// Discards lengths below `min_len` under the given accounting.
    pub fn spoil(
        &self,
        min_len: usize,
        accounting: SpoilAccounting,
    ) -> Result<RoutePosterior, AdversaryError> {
        let kept: Vec<LengthClass> = self
            .classes
            .iter()
            .filter(|c| c.length >= min_len)
            .copied()
            .collect();
        if kept.is_empty() {
            return Err(AdversaryError::EmptySpoil(min_len));
        }
        let mut out = RoutePosterior {
            space: self.space,
            classes: kept,
        };
        if accounting == SpoilAccounting::Conditioned {
            let z = out.total_mass();
            for c in &mut out.classes {
                c.length_prob /= z;
                c.route_prob /= z;
            }
        }
        Ok(out)
    }

    pub fn report(&self, eps3: f64) -> Result<EntropyReport, AdversaryError> {
        Ok(EntropyReport {
            h_min: self.min_entropy(),
            h_min_smooth: self.smooth_min_entropy(eps3)?,
            argmax_length: self.argmax_length(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub h_min: f64,
    pub h_min_smooth: f64,
    pub argmax_length: usize,
}

impl EntropyReport {
    /// Entropy budget handed to the extractor.
    pub fn extractable(&self) -> f64 {
        self.h_min.max(self.h_min_smooth)
    }
}

/// Lowest cap `t` such that clipping every probability to `t` removes at most
/// `eps` mass. `classes` holds `(probability, multiplicity)` pairs.
pub fn water_fill_level(classes: &[(f64, f64)], eps: f64) -> Result<f64, AdversaryError> {
    if !(0.0..1.0).contains(&eps) {
        return Err(AdversaryError::BadSmoothing(eps));
    }
    let mut sorted: Vec<(f64, f64)> = classes.iter().copied().filter(|c| c.0 > 0.0).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let Some(&(top, _)) = sorted.first() else {
        return Err(AdversaryError::BadDistribution);
    };
    if eps == 0.0 {
        return Ok(top);
    }
    let mut count = 0.0;
    let mut mass = 0.0;
    for (i, &(p, c)) in sorted.iter().enumerate() {
        count += c;
        mass += p * c;
        let next = sorted.get(i + 1).map_or(0.0, |n| n.0);
        // Cost of clipping everything so far down to the next level.
        if mass - count * next > eps {
            return Ok((mass - eps) / count);
        }
    }
    // Everything can be shaved away.
    Ok(0.0)
}
