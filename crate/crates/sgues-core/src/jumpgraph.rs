//! Combined switching weights over the jump graph.
//!
//! The combined weight `R(L)` is the maximum product of jump gains
//! `r_bar(i, j)` along admissible walks of length `L` through the switching
//! edges. Products are evaluated in log space as max-plus matrix powers, with
//! `-inf` marking absent edges, so long sequence lengths neither overflow nor
//! underflow. `R(0) = 1` by the empty-product convention, and
//! `hat_R(L) = max_{0 <= l <= L-1} R(l)` caps the contribution of an
//! incomplete trailing block of switches.

use nalgebra::DMatrix;

use crate::lyapunov::LyapunovData;
use crate::model::JumpGraph;

/// Largest sequence length accepted by the max-plus power computation.
pub const MAX_SEQUENCE_LENGTH: u64 = 1_000_000;

/// Jump graph with log-space switching weights on its edges.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedJumpGraph {
    mode_count: usize,
    /// `log_weights[(i, j)] = ln r_bar(i, j)` for edges, `-inf` elsewhere.
    log_weights: DMatrix<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum JumpGraphError {
    #[error("edge weight for ({0}, {1}) must be positive and finite")]
    BadWeight(usize, usize),
    #[error("edge ({0}, {1}) outside the mode range or a self pair")]
    BadEdge(usize, usize),
    #[error("sequence length {0} exceeds the supported maximum {MAX_SEQUENCE_LENGTH}")]
    LengthTooLarge(u64),
    #[error("enumeration bound exceeded: length {length} over {modes} modes")]
    EnumerationBound { length: u64, modes: usize },
}

impl WeightedJumpGraph {
    /// Builds from explicit `(from, to, r_bar)` weights (zero-based modes).
    pub fn from_weights(
        mode_count: usize,
        weights: &[(usize, usize, f64)],
    ) -> Result<Self, JumpGraphError> {
        let mut log_weights = DMatrix::from_element(mode_count, mode_count, f64::NEG_INFINITY);
        for &(i, j, w) in weights {
            if i >= mode_count || j >= mode_count || i == j {
                return Err(JumpGraphError::BadEdge(i, j));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(JumpGraphError::BadWeight(i, j));
            }
            log_weights[(i, j)] = w.ln();
        }
        Ok(WeightedJumpGraph { mode_count, log_weights })
    }

    /// Extracts the switching-edge weights `r_bar(i, j)`, `i != j`, from
    /// Lyapunov data.
    pub fn from_lyapunov(graph: &JumpGraph, lyap: &LyapunovData) -> Result<Self, JumpGraphError> {
        let weights: Vec<(usize, usize, f64)> = graph
            .edges
            .iter()
            .filter_map(|&(i, j)| lyap.jump_gain.get(&(i, j)).map(|&w| (i, j, w)))
            .collect();
        Self::from_weights(graph.mode_count, &weights)
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn edge_log_weight(&self, from: usize, to: usize) -> f64 {
        self.log_weights[(from, to)]
    }

    pub fn has_edges(&self) -> bool {
        self.log_weights.iter().any(|w| w.is_finite())
    }

    /// `ln R(L)`: the maximum total log weight over admissible walks of
    /// length `L`, or `None` when no walk of that length exists.
    /// `L = 0` returns `Some(0.0)`.
    pub fn log_combined_weight(&self, length: u64) -> Result<Option<f64>, JumpGraphError> {
        if length == 0 {
            return Ok(Some(0.0));
        }
        if length > MAX_SEQUENCE_LENGTH {
            return Err(JumpGraphError::LengthTooLarge(length));
        }
        let power = maxplus_power(&self.log_weights, length);
        let best = power.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(if best.is_finite() { Some(best) } else { None })
    }

    /// `R(L)` in linear scale; `None` when the graph admits no walk of
    /// length `L`.
    pub fn combined_weight(&self, length: u64) -> Result<Option<f64>, JumpGraphError> {
        Ok(self.log_combined_weight(length)?.map(f64::exp))
    }

    /// `ln hat_R(L) = max_{0 <= l <= L-1} ln R(l)`; lengths without walks
    /// contribute nothing, and the `l = 0` term pins the result at >= 0.
    ///
    /// Joining the weight matrix with the max-plus identity lets walks pad
    /// themselves with zero-weight stays, so the `(L-1)`-th power of the
    /// joined matrix ranges over all walks of length at most `L - 1` and a
    /// single repeated-squaring power suffices.
    pub fn log_hat_combined_weight(&self, length: u64) -> Result<f64, JumpGraphError> {
        assert!(length >= 1, "hat weight needs a positive length");
        if length == 1 {
            return Ok(0.0);
        }
        if length - 1 > MAX_SEQUENCE_LENGTH {
            return Err(JumpGraphError::LengthTooLarge(length));
        }
        let n = self.mode_count;
        let mut joined = self.log_weights.clone();
        for i in 0..n {
            joined[(i, i)] = joined[(i, i)].max(0.0);
        }
        let power = maxplus_power(&joined, length - 1);
        let best = power.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(best.max(0.0))
    }

    pub fn hat_combined_weight(&self, length: u64) -> Result<f64, JumpGraphError> {
        Ok(self.log_hat_combined_weight(length)?.exp())
    }
}

/// Max-plus matrix product: `c[i][j] = max_k a[i][k] + b[k][j]`.
fn maxplus_mul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut c = DMatrix::from_element(n, n, f64::NEG_INFINITY);
    for i in 0..n {
        for k in 0..n {
            let aik = a[(i, k)];
            if aik == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..n {
                let candidate = aik + b[(k, j)];
                if candidate > c[(i, j)] {
                    c[(i, j)] = candidate;
                }
            }
        }
    }
    c
}

/// Max-plus power by repeated squaring.
fn maxplus_power(m: &DMatrix<f64>, exponent: u64) -> DMatrix<f64> {
    debug_assert!(exponent >= 1);
    let mut result: Option<DMatrix<f64>> = None;
    let mut base = m.clone();
    let mut e = exponent;
    loop {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => maxplus_mul(&r, &base),
            });
        }
        e >>= 1;
        if e == 0 {
            break;
        }
        base = maxplus_mul(&base, &base);
    }
    result.expect("exponent >= 1")
}

/// Exhaustively enumerates all admissible walks of length `length` and
/// returns the maximum weight product. Test oracle for
/// [`WeightedJumpGraph::combined_weight`]; bounded to small graphs.
pub fn brute_force_combined_weight(
    graph: &WeightedJumpGraph,
    length: u64,
) -> Result<Option<f64>, JumpGraphError> {
    if length == 0 {
        return Ok(Some(1.0));
    }
    if length > 12 || graph.mode_count > 8 {
        return Err(JumpGraphError::EnumerationBound { length, modes: graph.mode_count });
    }
    let n = graph.mode_count;
    let mut best: Option<f64> = None;
    let mut stack: Vec<(usize, u64, f64)> = (0..n).map(|start| (start, 0, 0.0)).collect();
    while let Some((node, steps, log_product)) = stack.pop() {
        if steps == length {
            let candidate = log_product;
            best = Some(match best {
                None => candidate,
                Some(b) => b.max(candidate),
            });
            continue;
        }
        for next in 0..n {
            let w = graph.log_weights[(node, next)];
            if w.is_finite() {
                stack.push((next, steps + 1, log_product + w));
            }
        }
    }
    Ok(best.map(f64::exp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng as _;
    use rand::SeedableRng as _;
    use rand_chacha::ChaCha8Rng;

    /// Three-mode chain with edges 1->2, 2->1, 2->3, 3->1 (zero-based).
    fn three_mode() -> WeightedJumpGraph {
        WeightedJumpGraph::from_weights(
            3,
            &[(0, 1, 0.003), (1, 0, 0.274), (1, 2, 0.195), (2, 0, 1.656)],
        )
        .unwrap()
    }

    /// Two-mode cycle with the reference switching gains.
    fn two_mode() -> WeightedJumpGraph {
        WeightedJumpGraph::from_weights(2, &[(0, 1, 1.570_096_198_632_21), (1, 0, 0.0122482)]).unwrap()
    }

    #[test]
    fn empty_length_is_neutral() {
        assert_eq!(three_mode().combined_weight(0).unwrap(), Some(1.0));
    }

    #[test]
    fn three_mode_weights_match_reference() {
        let g = three_mode();
        assert_relative_eq!(g.combined_weight(1).unwrap().unwrap(), 1.656, epsilon = 1e-12);
        assert_relative_eq!(
            g.combined_weight(2).unwrap().unwrap(),
            0.195 * 1.656,
            epsilon = 1e-12
        );
    }

    #[test]
    fn two_mode_weights_match_reference() {
        let g = two_mode();
        assert_relative_eq!(g.combined_weight(1).unwrap().unwrap(), 1.5701, max_relative = 1e-4);
        assert_relative_eq!(g.combined_weight(2).unwrap().unwrap(), 0.0192, max_relative = 1e-2);
        assert_relative_eq!(g.combined_weight(3).unwrap().unwrap(), 0.0302, max_relative = 1e-2);
    }

    #[test]
    fn hat_weight_takes_the_running_maximum() {
        assert_eq!(two_mode().hat_combined_weight(1).unwrap(), 1.0);
        let hat3 = two_mode().hat_combined_weight(3).unwrap();
        assert_relative_eq!(hat3, 1.5701, max_relative = 1e-4);
    }

    #[test]
    fn no_walk_is_reported_as_none() {
        let g = WeightedJumpGraph::from_weights(1, &[]).unwrap();
        assert_eq!(g.combined_weight(1).unwrap(), None);
        let chain = WeightedJumpGraph::from_weights(2, &[(0, 1, 2.0)]).unwrap();
        assert_eq!(chain.combined_weight(2).unwrap(), None);
        assert_eq!(chain.hat_combined_weight(3).unwrap(), 2.0);
    }

    #[test]
    fn complete_two_graph_powers_the_weight() {
        let g = WeightedJumpGraph::from_weights(2, &[(0, 1, 0.5), (1, 0, 0.5)]).unwrap();
        for l in 1..=10u64 {
            assert_relative_eq!(
                g.combined_weight(l).unwrap().unwrap(),
                0.5_f64.powi(l as i32),
                epsilon = 1e-12
            );
        }
    }

    fn random_graph(rng: &mut ChaCha8Rng, max_modes: usize) -> WeightedJumpGraph {
        let n = rng.random_range(2..=max_modes);
        let mut weights = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random_bool(0.55) {
                    let w = (rng.random_range(-3.0..3.0_f64)).exp();
                    weights.push((i, j, w));
                }
            }
        }
        WeightedJumpGraph::from_weights(n, &weights).unwrap()
    }

    #[test]
    fn dynamic_program_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..40 {
            let g = random_graph(&mut rng, 6);
            let l = rng.random_range(1..=6u64);
            let dp = g.combined_weight(l).unwrap();
            let brute = brute_force_combined_weight(&g, l).unwrap();
            match (dp, brute) {
                (None, None) => {}
                (Some(a), Some(b)) => assert_relative_eq!(a, b, max_relative = 1e-12),
                other => panic!("disagreement: {other:?}"),
            }
        }
    }

    #[test]
    fn per_switch_weight_never_improves_with_block_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let g = random_graph(&mut rng, 6);
            for l0 in 1..=3u64 {
                let Some(base) = g.log_combined_weight(l0).unwrap() else { continue };
                for m in 1..=4u64 {
                    let l = l0 * m;
                    let Some(long) = g.log_combined_weight(l).unwrap() else { continue };
                    assert!(
                        long / l as f64 <= base / l0 as f64 + 1e-12,
                        "per-switch weight must not increase with block length"
                    );
                }
            }
        }
    }

    #[test]
    fn submultiplicative_in_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..30 {
            let g = random_graph(&mut rng, 5);
            for (l1, l2) in [(1u64, 1u64), (1, 2), (2, 2), (2, 3)] {
                let (Some(a), Some(b), Some(ab)) = (
                    g.log_combined_weight(l1).unwrap(),
                    g.log_combined_weight(l2).unwrap(),
                    g.log_combined_weight(l1 + l2).unwrap(),
                ) else {
                    continue;
                };
                assert!(ab <= a + b + 1e-12);
            }
        }
    }

    #[test]
    fn repeated_squaring_matches_sequential_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let g = random_graph(&mut rng, 5);
        let mut sequential: Option<DMatrix<f64>> = None;
        for l in 1..=9u64 {
            sequential = Some(match sequential {
                None => g.log_weights.clone(),
                Some(p) => maxplus_mul(&p, &g.log_weights),
            });
            let via_power = maxplus_power(&g.log_weights, l);
            let seq = sequential.as_ref().unwrap();
            for (a, b) in via_power.iter().zip(seq.iter()) {
                if a.is_finite() || b.is_finite() {
                    assert_relative_eq!(a, b, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn enumeration_bound_is_enforced() {
        let g = two_mode();
        assert!(brute_force_combined_weight(&g, 13).is_err());
    }

    #[test]
    fn hat_weight_matches_sequential_scan_and_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..20 {
            let g = random_graph(&mut rng, 5);
            for l in 1..=10u64 {
                let mut expected = 0.0_f64;
                for level in 1..l {
                    if let Some(log_r) = g.log_combined_weight(level).unwrap() {
                        expected = expected.max(log_r);
                    }
                }
                let hat = g.log_hat_combined_weight(l).unwrap();
                assert_relative_eq!(
                    hat,
                    expected,
                    max_relative = 1e-12,
                    epsilon = 1e-12
                );
            }
        }
        // Large lengths stay cheap through repeated squaring.
        let g = two_mode();
        let hat = g.log_hat_combined_weight(100_000).unwrap();
        assert_relative_eq!(hat, 1.570_096_198_632_21_f64.ln(), max_relative = 1e-12);
    }
}
