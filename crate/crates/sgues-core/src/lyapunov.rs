//! Quadratic Lyapunov data for linear switched impulsive systems.
//!
//! For each mode `i` a symmetric positive-definite `P_i` defines
//! `V_i(x) = x^T P_i x`. The extracted scalars are
//!
//! - sandwich constants `K_lower = lambda_min(P_i)`, `K_upper = lambda_max(P_i)`,
//! - flow rates `lambda_bar(i)` with `d/dt V_i <= lambda_bar(i) V_i` along the
//!   mode's linear flow,
//! - jump gains `r_bar(i, j)` with `V_j(J_{i,j} x) <= r_bar(i, j) V_i(x)`.
//!
//! `P_i` comes from the continuous Lyapunov equation `A^T P + P A = -Q` for
//! modes with Hurwitz flow, from the Stein equation `J^T P J - P = -Q` for
//! modes with Schur self jumps, or from the user for the remaining modes.
//! Both equations are solved through their Kronecker vectorizations, which is
//! exact up to one dense LU solve and adequate for the small dimensions this
//! crate targets. Generalized eigenvalue extremes of a symmetric pencil
//! `(Q, P)` are computed by Cholesky reduction of `P`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::SwitchedImpulsiveSystem;

/// Spectral strictness margin for the Hurwitz/Schur tests.
pub const STABILITY_TOL: f64 = 1e-9;

/// Relative Frobenius residual allowed for a Lyapunov/Stein solution.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum LyapunovError {
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("flow matrix of mode {0} is not Hurwitz")]
    NotHurwitz(usize),
    #[error("self jump map of mode {0} is not Schur")]
    NotSchur(usize),
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("user matrix P for mode {0} is not symmetric positive definite")]
    UserPNotPositiveDefinite(usize),
    #[error("mode {0}: {1} matrix required by the classification is missing")]
    MissingChoice(usize, &'static str),
    #[error("classification must place every mode in exactly one of the three sets")]
    NotAPartition,
    #[error("classification mismatch: {0}")]
    ClassificationMismatch(String),
    #[error("linear solve for mode {0} failed")]
    SolveFailed(usize),
    #[error("solution residual {residual:.3e} exceeds {max:.3e}")]
    ResidualTooLarge { residual: f64, max: f64 },
    #[error("system has nonlinear flows; synthesis needs the linear part only")]
    NonlinearFlow,
}

/// Partition of the mode set for synthesis: `continuous` modes solve the
/// continuous Lyapunov equation, `discrete` modes solve the Stein equation,
/// `user` modes take a supplied `P`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeClassification {
    pub continuous: BTreeSet<usize>,
    pub discrete: BTreeSet<usize>,
    pub user: BTreeSet<usize>,
}

impl ModeClassification {
    pub fn place_of(&self, mode: usize) -> Option<Placement> {
        if self.continuous.contains(&mode) {
            Some(Placement::Continuous)
        } else if self.discrete.contains(&mode) {
            Some(Placement::Discrete)
        } else if self.user.contains(&mode) {
            Some(Placement::User)
        } else {
            None
        }
    }

    fn check_partition(&self, modes: usize) -> Result<(), LyapunovError> {
        let mut seen = vec![0usize; modes];
        for set in [&self.continuous, &self.discrete, &self.user] {
            for &i in set.iter() {
                if i >= modes {
                    return Err(LyapunovError::NotAPartition);
                }
                seen[i] += 1;
            }
        }
        if seen.iter().all(|&c| c == 1) {
            Ok(())
        } else {
            Err(LyapunovError::NotAPartition)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Continuous,
    Discrete,
    User,
}

/// Synthesized (or user-supplied) Lyapunov data.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovData {
    pub p: Vec<DMatrix<f64>>,
    pub k_lower: Vec<f64>,
    pub k_upper: Vec<f64>,
    /// Flow rate `lambda_bar(i)` per mode.
    pub flow_rate: Vec<f64>,
    /// Jump gain `r_bar(i, j)` per admissible pair, self pairs included.
    pub jump_gain: BTreeMap<(usize, usize), f64>,
    /// `Q_tilde = -(A^T P + P A)` for discrete/user modes (reporting).
    pub q_tilde: Vec<Option<DMatrix<f64>>>,
    pub classification: ModeClassification,
    /// Norm exponent `m` of the sandwich bounds; 2 for quadratic data.
    pub exponent: u32,
}

impl LyapunovData {
    pub fn mode_count(&self) -> usize {
        self.p.len()
    }

    pub fn self_gain(&self, mode: usize) -> f64 {
        self.jump_gain.get(&(mode, mode)).copied().unwrap_or(1.0)
    }

    pub fn max_condition_ratio(&self) -> f64 {
        let max_upper = self.k_upper.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min_lower = self.k_lower.iter().cloned().fold(f64::INFINITY, f64::min);
        max_upper / min_lower
    }
}

/// True when every eigenvalue of `a` has real part below `-STABILITY_TOL`.
pub fn is_hurwitz(a: &DMatrix<f64>) -> Result<bool, LyapunovError> {
    ensure_square(a)?;
    Ok(a.complex_eigenvalues().iter().all(|e| e.re < -STABILITY_TOL))
}

/// True when the spectral radius of `j` is below `1 - STABILITY_TOL`.
pub fn is_schur(j: &DMatrix<f64>) -> Result<bool, LyapunovError> {
    ensure_square(j)?;
    Ok(j.complex_eigenvalues().iter().all(|e| e.norm() < 1.0 - STABILITY_TOL))
}

fn ensure_square(m: &DMatrix<f64>) -> Result<(), LyapunovError> {
    if m.is_square() {
        Ok(())
    } else {
        Err(LyapunovError::NotSquare(m.nrows(), m.ncols()))
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_spd(m: &DMatrix<f64>) -> bool {
    m.is_square()
        && (m - m.transpose()).amax() <= 1e-10 * (1.0 + m.amax())
        && nalgebra::Cholesky::new(symmetrize(m)).is_some()
}

fn check_residual(residual: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<(), LyapunovError> {
    let rel = residual.norm() / q.norm();
    if rel <= RESIDUAL_TOL {
        Ok(())
    } else {
        Err(LyapunovError::ResidualTooLarge { residual: rel, max: RESIDUAL_TOL })
    }
}

/// Solves `A^T P + P A = -Q` for Hurwitz `A` and symmetric positive-definite
/// `Q` through the Kronecker vectorization
/// `(I (x) A^T + A^T (x) I) vec(P) = -vec(Q)`.
pub fn solve_continuous_lyapunov(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LyapunovError> {
    ensure_square(a)?;
    if !is_hurwitz(a)? {
        return Err(LyapunovError::NotHurwitz(0));
    }
    if !check_spd(q) {
        return Err(LyapunovError::NotPositiveDefinite);
    }
    let n = a.nrows();
    let at = a.transpose();
    let eye = DMatrix::identity(n, n);
    let system = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_column_slice((-q).as_slice());
    let sol = system.lu().solve(&rhs).ok_or(LyapunovError::SolveFailed(0))?;
    let p = symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice()));
    check_residual(&(a.transpose() * &p + &p * a + q), q)?;
    if !check_spd(&p) {
        return Err(LyapunovError::NotPositiveDefinite);
    }
    Ok(p)
}

/// Solves the Stein equation `J^T P J - P = -Q` for Schur `J` and symmetric
/// positive-definite `Q` through
/// `(J^T (x) J^T - I) vec(P) = -vec(Q)`.
pub fn solve_discrete_lyapunov(
    j: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LyapunovError> {
    ensure_square(j)?;
    if !is_schur(j)? {
        return Err(LyapunovError::NotSchur(0));
    }
    if !check_spd(q) {
        return Err(LyapunovError::NotPositiveDefinite);
    }
    let n = j.nrows();
    let jt = j.transpose();
    let system = jt.kronecker(&jt) - DMatrix::identity(n * n, n * n);
    let rhs = DVector::from_column_slice((-q).as_slice());
    let sol = system.lu().solve(&rhs).ok_or(LyapunovError::SolveFailed(0))?;
    let p = symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice()));
    check_residual(&(j.transpose() * &p * j - &p + q), q)?;
    if !check_spd(&p) {
        return Err(LyapunovError::NotPositiveDefinite);
    }
    Ok(p)
}

/// Extreme generalized eigenvalues of the symmetric pencil `(Q, P)` with
/// `P` positive definite: the extreme Rayleigh quotients
/// `x^T Q x / x^T P x`. Computed as the symmetric eigenvalue extremes of
/// `L^{-1} Q L^{-T}` where `P = L L^T`.
pub fn generalized_eig_extremes(
    q: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<(f64, f64), LyapunovError> {
    ensure_square(q)?;
    ensure_square(p)?;
    let chol = nalgebra::Cholesky::new(symmetrize(p)).ok_or(LyapunovError::NotPositiveDefinite)?;
    let l = chol.l();
    let qs = symmetrize(q);
    let half = l
        .solve_lower_triangular(&qs)
        .ok_or(LyapunovError::NotPositiveDefinite)?;
    let reduced = l
        .solve_lower_triangular(&half.transpose())
        .ok_or(LyapunovError::NotPositiveDefinite)?;
    let eigs = symmetrize(&reduced).symmetric_eigenvalues();
    let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((min, max))
}

fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eigs = symmetrize(m).symmetric_eigenvalues();
    let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Picks a classification automatically: Hurwitz-flow modes with non-Schur
/// self jumps go continuous, Schur-jump modes with non-Hurwitz flows go
/// discrete, doubly unstable modes need user data, and doubly stable modes
/// take whichever placement gives the smaller combined rate
/// `lambda_bar(i) + ln(r_bar(i,i)) / T_J^i`.
pub fn auto_classification(
    system: &SwitchedImpulsiveSystem,
    q_choices: &BTreeMap<usize, DMatrix<f64>>,
    t_j: &[Option<f64>],
) -> Result<ModeClassification, LyapunovError> {
    let n = system.dimension;
    let mut classification = ModeClassification::default();
    for i in 0..system.mode_count() {
        let hurwitz = is_hurwitz(system.flows[i].matrix())?;
        let default_q = DMatrix::identity(n, n);
        let j_self = system.jump(i, i).cloned().unwrap_or_else(|| DMatrix::identity(n, n));
        let schur = is_schur(&j_self)?;
        match (hurwitz, schur) {
            (true, false) => classification.continuous.insert(i),
            (false, true) => classification.discrete.insert(i),
            (false, false) => classification.user.insert(i),
            (true, true) => {
                let q = q_choices.get(&i).unwrap_or(&default_q);
                let horizon = t_j.get(i).copied().flatten().unwrap_or(f64::INFINITY);
                let rate = |p: &DMatrix<f64>, r_self: f64, lambda: f64| {
                    if horizon.is_infinite() || r_self == 1.0 {
                        let _ = p;
                        lambda
                    } else {
                        lambda + r_self.ln() / horizon
                    }
                };
                let cont = solve_continuous_lyapunov(system.flows[i].matrix(), q)?;
                let (lm_c, _) = generalized_eig_extremes(q, &cont)?;
                let (_, r_c) = generalized_eig_extremes(&(j_self.transpose() * &cont * &j_self), &cont)?;
                let score_c = rate(&cont, r_c, -lm_c);
                let disc = solve_discrete_lyapunov(&j_self, q)?;
                let (lm_d, _) = generalized_eig_extremes(q, &disc)?;
                let q_tilde =
                    -(system.flows[i].matrix().transpose() * &disc + &disc * system.flows[i].matrix());
                let (lm_t, _) = generalized_eig_extremes(&q_tilde, &disc)?;
                let score_d = rate(&disc, 1.0 - lm_d, -lm_t);
                if score_d <= score_c {
                    classification.discrete.insert(i)
                } else {
                    classification.continuous.insert(i)
                }
            }
        };
    }
    Ok(classification)
}

/// Synthesizes Lyapunov data for a linear system under a classification.
///
/// `q_choices` supplies `Q_i` for continuous/discrete modes (identity when
/// absent); `p_choices` supplies `P_i` for user modes.
pub fn synthesize(
    system: &SwitchedImpulsiveSystem,
    classification: &ModeClassification,
    q_choices: &BTreeMap<usize, DMatrix<f64>>,
    p_choices: &BTreeMap<usize, DMatrix<f64>>,
) -> Result<LyapunovData, LyapunovError> {
    if !system.is_linear() && system.flows.iter().any(|f| f.matrix().nrows() != system.dimension) {
        return Err(LyapunovError::NonlinearFlow);
    }
    let modes = system.mode_count();
    classification.check_partition(modes)?;
    let n = system.dimension;
    let identity = DMatrix::identity(n, n);

    let mut p = Vec::with_capacity(modes);
    let mut q_used: Vec<Option<DMatrix<f64>>> = vec![None; modes];
    #[allow(clippy::needless_range_loop)]
    for i in 0..modes {
        let a = system.flows[i].matrix();
        match classification.place_of(i).expect("partition checked") {
            Placement::Continuous => {
                if !is_hurwitz(a)? {
                    return Err(LyapunovError::ClassificationMismatch(format!(
                        "mode {} is classified continuous but its flow is not Hurwitz",
                        i + 1
                    )));
                }
                let q = q_choices.get(&i).unwrap_or(&identity).clone();
                let solved = solve_continuous_lyapunov(a, &q).map_err(|e| match e {
                    LyapunovError::SolveFailed(_) => LyapunovError::SolveFailed(i),
                    other => other,
                })?;
                q_used[i] = Some(q);
                p.push(solved);
            }
            Placement::Discrete => {
                let j_self =
                    system.jump(i, i).cloned().unwrap_or_else(|| identity.clone());
                if !is_schur(&j_self)? {
                    return Err(LyapunovError::ClassificationMismatch(format!(
                        "mode {} is classified discrete but its self jump is not Schur",
                        i + 1
                    )));
                }
                let q = q_choices.get(&i).unwrap_or(&identity).clone();
                let solved = solve_discrete_lyapunov(&j_self, &q).map_err(|e| match e {
                    LyapunovError::SolveFailed(_) => LyapunovError::SolveFailed(i),
                    other => other,
                })?;
                q_used[i] = Some(q);
                p.push(solved);
            }
            Placement::User => {
                let supplied =
                    p_choices.get(&i).ok_or(LyapunovError::MissingChoice(i, "P"))?;
                if !check_spd(supplied) {
                    return Err(LyapunovError::UserPNotPositiveDefinite(i));
                }
                p.push(symmetrize(supplied));
            }
        }
    }

    let mut k_lower = Vec::with_capacity(modes);
    let mut k_upper = Vec::with_capacity(modes);
    for pi in &p {
        let (lo, hi) = symmetric_extremes(pi);
        k_lower.push(lo);
        k_upper.push(hi);
    }

    let mut flow_rate = Vec::with_capacity(modes);
    let mut q_tilde: Vec<Option<DMatrix<f64>>> = vec![None; modes];
    #[allow(clippy::needless_range_loop)]
    for i in 0..modes {
        let a = system.flows[i].matrix();
        match classification.place_of(i).unwrap() {
            Placement::Continuous => {
                let (lm, _) = generalized_eig_extremes(q_used[i].as_ref().unwrap(), &p[i])?;
                flow_rate.push(-lm);
            }
            Placement::Discrete | Placement::User => {
                let qt = -(a.transpose() * &p[i] + &p[i] * a);
                let (lm, _) = generalized_eig_extremes(&qt, &p[i])?;
                flow_rate.push(-lm);
                q_tilde[i] = Some(qt);
            }
        }
    }

    let mut jump_gain = BTreeMap::new();
    for (from, to) in system.graph.jump_pairs() {
        let jump = system
            .jump(from, to)
            .cloned()
            .unwrap_or_else(|| identity.clone());
        let gain = if from == to && jump == identity {
            // Identity self jumps are exactly neutral.
            1.0
        } else if from == to && classification.discrete.contains(&from) {
            let (lm, _) = generalized_eig_extremes(q_used[from].as_ref().unwrap(), &p[from])?;
            1.0 - lm
        } else {
            let (_, lm) = generalized_eig_extremes(&(jump.transpose() * &p[to] * &jump), &p[from])?;
            lm
        };
        jump_gain.insert((from, to), gain);
    }

    Ok(LyapunovData {
        p,
        k_lower,
        k_upper,
        flow_rate,
        jump_gain,
        q_tilde,
        classification: classification.clone(),
        exponent: 2,
    })
}

/// Samples random states and reports the largest violation of the three
/// pointwise inequalities backing the data: the sandwich bounds, the flow
/// rate bound and each jump gain bound. Used to vet user-supplied data.
pub fn pointwise_violation(
    system: &SwitchedImpulsiveSystem,
    lyap: &LyapunovData,
    samples: usize,
    seed: u64,
) -> f64 {
    use rand::Rng as _;
    use rand::SeedableRng as _;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = system.dimension;
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..samples {
        let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        if x.norm() < 1e-9 {
            continue;
        }
        for i in 0..system.mode_count() {
            let v = (x.transpose() * &lyap.p[i] * &x)[0];
            let norm_m = x.norm().powi(lyap.exponent as i32);
            worst = worst.max(lyap.k_lower[i] * norm_m - v);
            worst = worst.max(v - lyap.k_upper[i] * norm_m);
            let gradient_flow = 2.0 * (x.transpose() * &lyap.p[i] * system.flows[i].matrix() * &x)[0];
            worst = worst.max(gradient_flow - lyap.flow_rate[i] * v);
        }
        for (&(from, to), &gain) in &lyap.jump_gain {
            if let Some(jump) = system.jump(from, to) {
                let jx = jump * &x;
                let v_to = (jx.transpose() * &lyap.p[to] * &jx)[0];
                let v_from = (x.transpose() * &lyap.p[from] * &x)[0];
                worst = worst.max(v_to - gain * v_from);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FlowMap, JumpGraph};
    use approx::assert_abs_diff_eq;
    use rand::Rng as _;
    use rand::SeedableRng as _;
    use rand_chacha::ChaCha8Rng;

    fn mat2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    fn flow_one() -> DMatrix<f64> {
        mat2(-1.4, 0.6, -0.5, -0.3)
    }

    fn flow_two() -> DMatrix<f64> {
        mat2(4.0, 3.0, -1.0, 2.0)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_hurwitz(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let m = random_matrix(rng, n);
        let shift = m.complex_eigenvalues().iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
        m - DMatrix::identity(n, n) * (shift + rng.random_range(0.3..1.5))
    }

    fn random_schur(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let m = random_matrix(rng, n);
        let radius = m.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max);
        let target = rng.random_range(0.2..0.9);
        if radius < 1e-6 {
            m
        } else {
            m * (target / radius)
        }
    }

    #[test]
    fn hurwitz_test_matches_reference_modes() {
        assert!(is_hurwitz(&flow_one()).unwrap());
        assert!(!is_hurwitz(&flow_two()).unwrap());
        assert!(!is_hurwitz(&DMatrix::zeros(2, 2)).unwrap());
        assert!(is_hurwitz(&DMatrix::from_row_slice(1, 2, &[1.0, 2.0])).is_err());
    }

    #[test]
    fn schur_test_matches_reference_jumps() {
        assert!(is_schur(&mat2(0.105, 0.0, 0.0, 0.11)).unwrap());
        assert!(!is_schur(&(DMatrix::identity(2, 2) * 1.26)).unwrap());
        assert!(!is_schur(&DMatrix::identity(2, 2)).unwrap());
    }

    #[test]
    fn continuous_solution_matches_hand_solved_system() {
        // Frozen solution of the 3x3 linear system in (p11, p12, p22) for
        // the first reference flow with Q = I.
        let p = solve_continuous_lyapunov(&flow_one(), &DMatrix::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 0.4330065359477124, epsilon = 1e-9);
        assert_abs_diff_eq!(p[(0, 1)], -0.2124183006535948, epsilon = 1e-9);
        assert_abs_diff_eq!(p[(1, 1)], 1.2418300653594772, epsilon = 1e-9);
        // The induced flow rate -1/lambda_max(P).
        let (lm, _) = generalized_eig_extremes(&DMatrix::identity(2, 2), &p).unwrap();
        assert_abs_diff_eq!(-lm, -0.7727, epsilon = 5e-4);
    }

    #[test]
    fn continuous_solution_identity_case() {
        let a = DMatrix::identity(2, 2) * -0.5;
        let p = solve_continuous_lyapunov(&a, &DMatrix::identity(2, 2)).unwrap();
        assert_abs_diff_eq!((p - DMatrix::identity(2, 2)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn continuous_rejects_unstable_flow() {
        assert!(solve_continuous_lyapunov(&flow_two(), &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn continuous_residuals_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.random_range(2..=4);
            let a = random_hurwitz(&mut rng, n);
            let q = DMatrix::identity(n, n);
            let p = solve_continuous_lyapunov(&a, &q).unwrap();
            let residual = (a.transpose() * &p + &p * &a + &q).norm() / q.norm();
            assert!(residual < 1e-8, "residual {residual}");
        }
    }

    #[test]
    fn discrete_solution_matches_reference_mode() {
        let j = mat2(0.105, 0.0, 0.0, 0.11);
        let p = solve_discrete_lyapunov(&j, &DMatrix::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 1.0 / (1.0 - 0.105_f64.powi(2)), epsilon = 1e-12);
        assert_abs_diff_eq!(p[(1, 1)], 1.0 / (1.0 - 0.11_f64.powi(2)), epsilon = 1e-12);
        assert_abs_diff_eq!(p[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn discrete_solution_zero_map_returns_q() {
        let q = mat2(2.0, 0.5, 0.5, 3.0);
        let p = solve_discrete_lyapunov(&DMatrix::zeros(2, 2), &q).unwrap();
        assert_abs_diff_eq!((p - q).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn discrete_residuals_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(2..=4);
            let j = random_schur(&mut rng, n);
            let q = DMatrix::identity(n, n);
            let p = solve_discrete_lyapunov(&j, &q).unwrap();
            let residual = (j.transpose() * &p * &j - &p + &q).norm() / q.norm();
            assert!(residual < 1e-8, "residual {residual}");
        }
    }

    #[test]
    fn pencil_extremes_match_reference_values() {
        let q = mat2(-8.0, -2.0, -2.0, -4.0);
        let (lm, _) = generalized_eig_extremes(&q, &DMatrix::identity(2, 2)).unwrap();
        // Closed form: -6 - 2 sqrt(2).
        assert_abs_diff_eq!(lm, -6.0 - 8.0_f64.sqrt(), epsilon = 1e-12);
        let p = mat2(2.0, 0.3, 0.3, 1.0);
        let (min_p, max_p) = generalized_eig_extremes(&p, &p).unwrap();
        assert_abs_diff_eq!(min_p, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(max_p, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pencil_extremes_bound_sampled_rayleigh_quotients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let n = 3;
            let q_raw = random_matrix(&mut rng, n);
            let q = &q_raw + q_raw.transpose();
            let base = random_matrix(&mut rng, n);
            let p = &base * base.transpose() + DMatrix::identity(n, n) * 0.5;
            let (lo, hi) = generalized_eig_extremes(&q, &p).unwrap();
            let mut sample_lo = f64::INFINITY;
            let mut sample_hi = f64::NEG_INFINITY;
            for _ in 0..100_000 {
                let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0_f64));
                let quotient = (x.transpose() * &q * &x)[0] / (x.transpose() * &p * &x)[0];
                sample_lo = sample_lo.min(quotient);
                sample_hi = sample_hi.max(quotient);
            }
            assert!(sample_lo >= lo - 1e-9 && sample_lo <= lo + 1e-1);
            assert!(sample_hi <= hi + 1e-9 && sample_hi >= hi - 1e-1);
        }
    }

    #[test]
    fn pencil_extremes_invariant_under_congruence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q_raw = random_matrix(&mut rng, 3);
        let q = &q_raw + q_raw.transpose();
        let base = random_matrix(&mut rng, 3);
        let p = &base * base.transpose() + DMatrix::identity(3, 3);
        let (lo, hi) = generalized_eig_extremes(&q, &p).unwrap();
        let t = random_matrix(&mut rng, 3) + DMatrix::identity(3, 3) * 2.0;
        let qt = t.transpose() * &q * &t;
        let pt = t.transpose() * &p * &t;
        let (lo_t, hi_t) = generalized_eig_extremes(&qt, &pt).unwrap();
        assert_abs_diff_eq!(lo, lo_t, epsilon = 1e-8);
        assert_abs_diff_eq!(hi, hi_t, epsilon = 1e-8);
    }

    fn two_mode_system(self_jumps_identity: bool) -> SwitchedImpulsiveSystem {
        let scale = DMatrix::identity(2, 2) * 1.26;
        let contract = mat2(0.105, 0.0, 0.0, 0.11);
        let (self_one, self_two, self_loops) = if self_jumps_identity {
            (DMatrix::identity(2, 2), DMatrix::identity(2, 2), vec![])
        } else {
            (contract.clone(), scale.clone(), vec![0usize, 1])
        };
        SwitchedImpulsiveSystem {
            dimension: 2,
            flows: vec![FlowMap::Linear(flow_one()), FlowMap::Linear(flow_two())],
            jumps: BTreeMap::from([
                ((0usize, 1usize), scale),
                ((1, 0), contract),
                ((0, 0), self_one),
                ((1, 1), self_two),
            ]),
            graph: JumpGraph::new(2, [(0, 1), (1, 0)], self_loops),
        }
    }

    #[test]
    fn synthesize_reproduces_reference_data_with_self_impulses() {
        let system = two_mode_system(false);
        let classification = ModeClassification {
            discrete: BTreeSet::from([0]),
            user: BTreeSet::from([1]),
            ..Default::default()
        };
        let p_choices = BTreeMap::from([(1usize, DMatrix::identity(2, 2))]);
        let lyap = synthesize(&system, &classification, &BTreeMap::new(), &p_choices).unwrap();

        assert_abs_diff_eq!(lyap.flow_rate[0], -0.5955, epsilon = 5e-4);
        assert_abs_diff_eq!(lyap.flow_rate[1], 8.8284, epsilon = 5e-4);
        assert_abs_diff_eq!(lyap.jump_gain[&(0, 0)], 0.0121, epsilon = 5e-4);
        assert_abs_diff_eq!(lyap.jump_gain[&(0, 1)], 1.5701, epsilon = 5e-4);
        assert_abs_diff_eq!(lyap.jump_gain[&(1, 0)], 0.0122, epsilon = 5e-4);
        assert_abs_diff_eq!(lyap.jump_gain[&(1, 1)], 1.5876, epsilon = 5e-4);
        let qt = lyap.q_tilde[1].as_ref().unwrap();
        assert_abs_diff_eq!(qt[(0, 0)], -8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(qt[(0, 1)], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(qt[(1, 1)], -4.0, epsilon = 1e-12);
    }

    #[test]
    fn synthesize_reproduces_reference_data_with_identity_self_jumps() {
        let system = two_mode_system(true);
        let classification = ModeClassification {
            continuous: BTreeSet::from([0]),
            user: BTreeSet::from([1]),
            ..Default::default()
        };
        let p_choices = BTreeMap::from([(1usize, DMatrix::identity(2, 2))]);
        let lyap = synthesize(&system, &classification, &BTreeMap::new(), &p_choices).unwrap();

        assert_abs_diff_eq!(lyap.flow_rate[0], -0.7727, epsilon = 5e-4);
        assert_abs_diff_eq!(lyap.flow_rate[1], 8.8284, epsilon = 5e-4);
        assert_eq!(lyap.jump_gain[&(0, 0)], 1.0);
        assert_eq!(lyap.jump_gain[&(1, 1)], 1.0);
        assert_abs_diff_eq!(lyap.jump_gain[&(0, 1)], 4.1712, epsilon = 5e-4);
        assert_abs_diff_eq!(lyap.jump_gain[&(1, 0)], 0.0156, epsilon = 5e-4);
    }

    #[test]
    fn synthesize_single_mode_closed_form() {
        let system = SwitchedImpulsiveSystem {
            dimension: 2,
            flows: vec![FlowMap::Linear(DMatrix::identity(2, 2) * -1.0)],
            jumps: BTreeMap::from([((0usize, 0usize), DMatrix::identity(2, 2))]),
            graph: JumpGraph::new(1, [], []),
        };
        let classification =
            ModeClassification { continuous: BTreeSet::from([0]), ..Default::default() };
        let q_choices = BTreeMap::from([(0usize, DMatrix::identity(2, 2) * 2.0)]);
        let lyap = synthesize(&system, &classification, &q_choices, &BTreeMap::new()).unwrap();
        assert_abs_diff_eq!((lyap.p[0].clone() - DMatrix::identity(2, 2)).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lyap.flow_rate[0], -2.0, epsilon = 1e-12);
        assert_eq!(lyap.self_gain(0), 1.0);
    }

    #[test]
    fn synthesize_rejects_classification_mismatch() {
        let system = two_mode_system(false);
        let classification = ModeClassification {
            continuous: BTreeSet::from([1]),
            discrete: BTreeSet::from([0]),
            ..Default::default()
        };
        let err = synthesize(&system, &classification, &BTreeMap::new(), &BTreeMap::new());
        assert!(matches!(err, Err(LyapunovError::ClassificationMismatch(_))));
    }

    #[test]
    fn synthesized_data_passes_pointwise_sampling() {
        let system = two_mode_system(false);
        let classification = ModeClassification {
            discrete: BTreeSet::from([0]),
            user: BTreeSet::from([1]),
            ..Default::default()
        };
        let p_choices = BTreeMap::from([(1usize, DMatrix::identity(2, 2))]);
        let lyap = synthesize(&system, &classification, &BTreeMap::new(), &p_choices).unwrap();
        let worst = pointwise_violation(&system, &lyap, 10_000, 42);
        assert!(worst <= 1e-9, "worst violation {worst}");
    }

    #[test]
    fn auto_classification_places_modes() {
        let system = two_mode_system(false);
        let classification =
            auto_classification(&system, &BTreeMap::new(), &[Some(0.085), Some(0.024)]).unwrap();
        // Mode 0 is (Hurwitz, Schur); with the reference dwell times the
        // continuous placement gives the smaller combined rate, so auto mode
        // picks it. Mode 1 is doubly unstable and needs user data.
        assert!(classification.continuous.contains(&0));
        assert!(classification.user.contains(&1));

        // Without a finite impulse dwell time the score reduces to the flow
        // rate alone and the comparison still resolves.
        let open =
            auto_classification(&system, &BTreeMap::new(), &[None, None]).unwrap();
        assert_eq!(open.continuous.len() + open.discrete.len(), 1);
        assert!(open.user.contains(&1));
    }
}
