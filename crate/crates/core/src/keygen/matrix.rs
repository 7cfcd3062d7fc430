//! Selection matrix and the greedy eps1-secure partition.

use serde::Serialize;

use super::KeygenError;
use crate::adversary::selection_prob;
use crate::bits::BitString;
use crate::route::{trim_route, FullRoute, NodeId, RouteCodec, RouteSpace, TrimmedRoute};

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixRow {
    pub trimmed: TrimmedRoute,
    /// `a_ij` for every column, in column order.
    pub probs: Vec<f64>,
}

impl MatrixRow {
    pub fn full(&self) -> &FullRoute {
        self.trimmed.full()
    }
}

/// Rows are shared routes in SRT order, columns are every node except
/// the two key-agreeing ones, in ascending id order.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionMatrix {
    pub alice: NodeId,
    pub bob: NodeId,
    pub columns: Vec<NodeId>,
    pub rows: Vec<MatrixRow>,
}

impl SelectionMatrix {
    /// Builds a matrix from raw probabilities; mostly for tests and oracles.
    pub fn from_probs(probs: Vec<Vec<f64>>) -> Self {
        let n_cols = probs.first().map_or(0, Vec::len);
        let columns = (0..n_cols as u32).map(|j| NodeId(j + 2)).collect();
        let rows = probs
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                assert_eq!(p.len(), n_cols, "ragged matrix");
                // Placeholder route; only the probabilities matter here.
                let full = FullRoute::from_ids(&[0, 1, 100_000 + i as u32]).expect("distinct");
                MatrixRow {
                    trimmed: trim_route(&full, NodeId(0), NodeId(1)).expect("on route"),
                    probs: p,
                }
            })
            .collect();
        Self {
            alice: NodeId(0),
            bob: NodeId(1),
            columns,
            rows,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].probs[j]
    }
}

pub fn build_selection_matrix(
    shared: &[FullRoute],
    alice: NodeId,
    bob: NodeId,
    n_nodes: usize,
    radio_range: f64,
    s_total: f64,
) -> Result<SelectionMatrix, KeygenError> {
    let columns: Vec<NodeId> = (0..n_nodes as u32)
        .map(NodeId)
        .filter(|&n| n != alice && n != bob)
        .collect();
    let mut rows = Vec::with_capacity(shared.len());
    for route in shared {
        let trimmed = trim_route(route, alice, bob)?;
        let off = selection_prob(false, route.len(), radio_range, s_total)?;
        let probs = columns
            .iter()
            .map(|&j| if route.contains(j) { 1.0 } else { off })
            .collect();
        rows.push(MatrixRow { trimmed, probs });
    }
    Ok(SelectionMatrix {
        alice,
        bob,
        columns,
        rows,
    })
}

/// One eps1-secure group of rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Subset {
    pub rows: Vec<usize>,
    /// Per-column `log2` of the product of the chosen entries.
    #[serde(skip)]
    pub column_log2: Vec<f64>,
}

impl Subset {
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    /// Largest column product, as `log2`.
    pub fn max_column_log2(&self) -> f64 {
        self.column_log2
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `log2(eps1)` minus the largest column `log2` product; positive when secure.
    pub fn min_column_slack(&self, eps1: f64) -> f64 {
        eps1.log2() - self.max_column_log2()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Partition {
    pub subsets: Vec<Subset>,
    /// Trailing rows that never reached the bound.
    pub remainder: Vec<usize>,
}

fn column_log2(m: &SelectionMatrix, rows: &[usize]) -> Vec<f64> {
    (0..m.n_cols())
        .map(|j| rows.iter().map(|&i| m.get(i, j).log2()).sum())
        .collect()
}

/// Checks that every column product over `rows` is below `eps1`, summing
/// logarithms so long products cannot underflow to a false pass.
pub fn is_eps1_secure(m: &SelectionMatrix, rows: &[usize], eps1: f64) -> bool {
    if rows.is_empty() {
        return false;
    }
    let bound = eps1.log2();
    column_log2(m, rows).into_iter().all(|s| s < bound)
}

/// Scans rows in order, growing the current group until it is eps1-secure.
pub fn naive_partition(m: &SelectionMatrix, eps1: f64) -> Partition {
    let bound = eps1.log2();
    let mut out = Partition::default();
    let mut current: Vec<usize> = Vec::new();
    let mut acc = vec![0.0f64; m.n_cols()];
    for i in 0..m.n_rows() {
        current.push(i);
        for (a, p) in acc.iter_mut().zip(&m.rows[i].probs) {
            *a += p.log2();
        }
        if acc.iter().all(|&s| s < bound) {
            out.subsets.push(Subset {
                rows: std::mem::take(&mut current),
                column_log2: std::mem::replace(&mut acc, vec![0.0; m.n_cols()]),
            });
        }
    }
    out.remainder = current;
    out
}

/// XOR of the codes of `routes` in the space of routes through `(a, b)`.
pub fn xor_combine(
    routes: &[&FullRoute],
    space: &RouteSpace,
    a: NodeId,
    b: NodeId,
) -> Result<BitString, KeygenError> {
    let codec = RouteCodec::new(*space, a, b)?;
    let mut it = routes.iter();
    let first = it.next().ok_or(KeygenError::Empty)?;
    let mut acc = codec.encode(first)?;
    for r in it {
        acc.xor_assign(&codec.encode(r)?)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn on_route_entries_are_one() {
        let r = FullRoute::from_ids(&[0, 5, 1]).unwrap();
        let m = build_selection_matrix(&[r], NodeId(0), NodeId(1), 50, 12.0, 1e4).unwrap();
        assert_eq!(m.n_cols(), 48);
        assert!(!m.columns.contains(&NodeId(0)) && !m.columns.contains(&NodeId(1)));
        for (j, &node) in m.columns.iter().enumerate() {
            if node == NodeId(5) {
                assert_eq!(m.get(0, j), 1.0);
            } else {
                assert!((m.get(0, j) - 0.100224).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn destination_counts_as_on_route() {
        let r = FullRoute::from_ids(&[0, 1, 7]).unwrap();
        let m = build_selection_matrix(&[r], NodeId(0), NodeId(1), 10, 12.0, 1e4).unwrap();
        let j = m.columns.iter().position(|&n| n == NodeId(7)).unwrap();
        assert_eq!(m.get(0, j), 1.0);
    }

    #[test]
    fn single_short_route_is_never_secure() {
        let r = FullRoute::from_ids(&[0, 1, 7]).unwrap();
        let m = build_selection_matrix(&[r], NodeId(0), NodeId(1), 10, 12.0, 1e4).unwrap();
        let p = naive_partition(&m, 1e-3);
        assert!(p.subsets.is_empty());
        assert_eq!(p.remainder, vec![0]);
    }

    #[test]
    fn shared_on_route_node_blocks_the_column() {
        let m = SelectionMatrix::from_probs(vec![vec![1.0, 0.1], vec![1.0, 0.1], vec![1.0, 0.1]]);
        let p = naive_partition(&m, 0.5);
        assert!(p.subsets.is_empty());
        assert_eq!(p.remainder, vec![0, 1, 2]);
    }

    #[test]
    fn greedy_by_hand() {
        // Columns: products must drop below 0.05.
        let m = SelectionMatrix::from_probs(vec![
            vec![1.0, 0.1, 0.1],
            vec![0.1, 1.0, 0.1],
            vec![0.1, 0.1, 1.0],
            vec![0.1, 0.1, 0.1],
            vec![1.0, 1.0, 0.1],
            vec![0.1, 0.1, 1.0],
        ]);
        let p = naive_partition(&m, 0.05);
        // rows 0,1: col2 = 0.01 but col0 = 0.1, col1 = 0.1 -> not yet
        // rows 0,1,2: every column 0.01 -> emit
        // row 3 alone: 0.1 each -> not yet; rows 3,4: col0 0.1 -> not yet
        // rows 3,4,5: col0 0.01, col1 0.01, col2 0.01 -> emit
        let rows: Vec<Vec<usize>> = p.subsets.iter().map(|s| s.rows.clone()).collect();
        assert_eq!(rows, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert!(p.remainder.is_empty());
        for s in &p.subsets {
            assert!(is_eps1_secure(&m, &s.rows, 0.05));
            assert!(s.min_column_slack(0.05) > 0.0);
        }
    }

    #[test]
    fn log_space_audit_avoids_underflow() {
        let m = SelectionMatrix::from_probs(vec![vec![1e-200, 1.0]; 3]);
        // column 0 product underflows to 0 in linear space; column 1 stays 1
        assert!(!is_eps1_secure(&m, &[0, 1, 2], 1e-3));
        let m = SelectionMatrix::from_probs(vec![vec![1e-200]; 3]);
        assert!(is_eps1_secure(&m, &[0, 1, 2], 1e-300));
    }

    #[test]
    fn greedy_is_deterministic() {
        let m = SelectionMatrix::from_probs(vec![vec![0.3, 0.02], vec![0.02, 0.3], vec![0.5, 0.5]]);
        assert_eq!(naive_partition(&m, 0.01), naive_partition(&m, 0.01));
    }

    #[test]
    fn xor_semantics() {
        let space = RouteSpace::new(10, 5).unwrap();
        let r1 = FullRoute::from_ids(&[0, 3, 1]).unwrap();
        let r2 = FullRoute::from_ids(&[2, 0, 4, 1]).unwrap();
        let r3 = FullRoute::from_ids(&[1, 9, 8, 0, 5]).unwrap();
        let (a, b) = (NodeId(0), NodeId(1));
        let single = xor_combine(&[&r1], &space, a, b).unwrap();
        assert_eq!(single, crate::route::encode_full_route(&space, a, b, &r1).unwrap());
        let zero = xor_combine(&[&r1, &r1], &space, a, b).unwrap();
        assert_eq!(zero.count_ones(), 0);

        // Byte-wise oracle.
        let codes: Vec<BitString> = [&r1, &r2, &r3]
            .iter()
            .map(|r| crate::route::encode_full_route(&space, a, b, r).unwrap())
            .collect();
        let mut bytes = codes[0].as_bytes().to_vec();
        for c in &codes[1..] {
            for (x, y) in bytes.iter_mut().zip(c.as_bytes()) {
                *x ^= y;
            }
        }
        let combined = xor_combine(&[&r1, &r2, &r3], &space, a, b).unwrap();
        assert_eq!(combined.as_bytes(), &bytes[..]);
        assert_eq!(combined.len(), space.bit_width());
        assert_eq!(xor_combine(&[], &space, a, b), Err(KeygenError::Empty));
    }
}
