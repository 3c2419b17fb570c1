//! Data model: systems, jump graphs, constraint profiles and hybrid signals.
//!
//! Modes are indexed from zero internally; the JSON document schema in
//! [`document`] uses one-based indices.

pub mod document;
pub mod signal;
pub mod time;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use signal::{signal_counters, EventKind, HybridSignal, SignalCounters, SignalError, SignalEvent};
pub use time::{Time, TICKS_PER_SEC};

/// Directed graph of admissible mode transitions.
///
/// `edges` holds the admissible switches (ordered pairs with distinct
/// endpoints). Self pairs always exist implicitly; `self_loops` marks the
/// modes whose self jump map is an actual impulse rather than the identity,
/// i.e. the modes in which nonswitching impulse times may occur.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JumpGraph {
    pub mode_count: usize,
    pub edges: BTreeSet<(usize, usize)>,
    pub self_loops: BTreeSet<usize>,
}

impl JumpGraph {
    pub fn new(
        mode_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        self_loops: impl IntoIterator<Item = usize>,
    ) -> Self {
        JumpGraph {
            mode_count,
            edges: edges.into_iter().collect(),
            self_loops: self_loops.into_iter().collect(),
        }
    }

    /// All pairs carrying a jump map: edges plus every self pair.
    pub fn jump_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<_> = self.edges.iter().copied().collect();
        pairs.extend((0..self.mode_count).map(|i| (i, i)));
        pairs
    }
}

/// Time dependence of the perturbation gain `a (1 + trig(t))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrigKind {
    Sin,
    Cos,
}

impl TrigKind {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            TrigKind::Sin => t.sin(),
            TrigKind::Cos => t.cos(),
        }
    }
}

/// Input coupling `(state_gain |x| + offset) u^power` applied along the
/// first basis direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputTerm {
    #[serde(default)]
    pub state_gain: f64,
    #[serde(default)]
    pub offset: f64,
    pub power: u32,
}

/// Named nonlinearity library: a state-aligned perturbation
/// `gain (1 + trig(t)) x` plus an optional input term, added to the linear
/// flow. The perturbation norm is exactly `gain (1 + trig(t)) |x|` when the
/// input is zero, and the flow vanishes at the origin for zero input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub gain: f64,
    pub trig: TrigKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputTerm>,
}

/// Flow map of one mode.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowMap {
    Linear(DMatrix<f64>),
    /// `x' = A x + gain (1 + trig(t)) x + input(t, x, u) e_1`.
    Perturbed { matrix: DMatrix<f64>, perturbation: Perturbation },
}

impl FlowMap {
    pub fn matrix(&self) -> &DMatrix<f64> {
        match self {
            FlowMap::Linear(m) => m,
            FlowMap::Perturbed { matrix, .. } => matrix,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, FlowMap::Linear(_))
    }

    /// Evaluates the vector field at `(t, x)` with input value `u`.
    pub fn eval(&self, t: f64, x: &DVector<f64>, u: f64) -> DVector<f64> {
        match self {
            FlowMap::Linear(a) => a * x,
            FlowMap::Perturbed { matrix, perturbation } => {
                let mut dx = matrix * x;
                let gain = perturbation.gain * (1.0 + perturbation.trig.eval(t));
                dx += x * gain;
                if let Some(input) = perturbation.input {
                    if u != 0.0 {
                        dx[0] += (input.state_gain * x.norm() + input.offset) * u.powi(input.power as i32);
                    }
                }
                dx
            }
        }
    }
}

/// A switched impulsive system: per-mode flows, per-pair jump maps and the
/// jump graph. Jump maps are linear; identity self jumps are stored
/// explicitly so the no-self-impulse case is detectable from the data.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedImpulsiveSystem {
    pub dimension: usize,
    pub flows: Vec<FlowMap>,
    pub jumps: BTreeMap<(usize, usize), DMatrix<f64>>,
    pub graph: JumpGraph,
}

impl SwitchedImpulsiveSystem {
    pub fn mode_count(&self) -> usize {
        self.graph.mode_count
    }

    pub fn jump(&self, from: usize, to: usize) -> Option<&DMatrix<f64>> {
        self.jumps.get(&(from, to))
    }

    pub fn is_linear(&self) -> bool {
        self.flows.iter().all(FlowMap::is_linear)
    }

    /// True when every self jump map is the identity, so nonswitching
    /// impulse times are absent (or act trivially) for this system.
    pub fn self_jumps_are_identity(&self) -> bool {
        (0..self.mode_count()).all(|i| match self.jumps.get(&(i, i)) {
            Some(j) => *j == DMatrix::identity(self.dimension, self.dimension),
            None => true,
        })
    }
}

/// Direction of an affine dwell-time or activation bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundDirection {
    Upper,
    Lower,
}

/// Per-mode impulse average dwell-time pair `(N0, T_J)`.
///
/// Direction `Upper` bounds the impulse count from above (destabilizing or
/// neutral self jumps, `N0 >= 1`); `Lower` bounds it from below
/// (stabilizing self jumps, `N0 <= -1`). `T_J` may be infinite, with the
/// convention `s / inf = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpulseAdt {
    pub n0: f64,
    pub t_j: f64,
    pub direction: BoundDirection,
}

/// Switching average dwell-time pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdtPair {
    pub n0: f64,
    pub t_s: f64,
}

/// Declared switching constraints. Either or both directions may be present;
/// an admissible signal must satisfy at least one declared direction in
/// full, and a certificate requires the direction matching the sign of the
/// combined weight at its sequence length.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SwitchingAdt {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<AdtPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<AdtPair>,
}

/// Activation-time bound for a group of modes:
/// `sum_{i in modes} t_a(i, t, t0) <= / >= t_a + n_a (t - t0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationGroup {
    pub modes: Vec<usize>,
    pub n_a: f64,
    pub t_a: f64,
    pub direction: BoundDirection,
}

/// Declared admissibility constraints for the family of signals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintProfile {
    /// One entry per mode; `None` leaves the mode's impulse count
    /// unconstrained (only sound when its self jumps are neutral).
    pub impulse_adt: Vec<Option<ImpulseAdt>>,
    pub switching_adt: SwitchingAdt,
    pub activation_groups: Vec<ActivationGroup>,
}

impl ConstraintProfile {
    pub fn impulse_t_j(&self, mode: usize) -> Option<f64> {
        self.impulse_adt.get(mode).copied().flatten().map(|a| a.t_j)
    }
}

/// One schema violation found by [`validate_system`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub message: String,
}

/// Validation outcome: `violations` break the model contracts, `warnings`
/// flag suspicious but admissible data.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn violation(&mut self, message: impl Into<String>) {
        self.violations.push(Violation { message: message.into() });
    }
}

/// Checks the structural invariants of a system/profile pair. Pure; returns
/// findings instead of failing.
pub fn validate_system(
    system: &SwitchedImpulsiveSystem,
    profile: &ConstraintProfile,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = system.dimension;
    let modes = system.mode_count();

    if system.flows.len() != modes {
        report.violation(format!(
            "system declares {} modes but {} flow maps",
            modes,
            system.flows.len()
        ));
    }
    for (i, flow) in system.flows.iter().enumerate() {
        let m = flow.matrix();
        if m.nrows() != n || m.ncols() != n {
            report.violation(format!("flow matrix of mode {} is not {n}x{n}", i + 1));
        }
    }
    for &(i, j) in &system.graph.edges {
        if i >= modes || j >= modes {
            report.violation(format!("edge ({}, {}) leaves the mode range", i + 1, j + 1));
        }
        if i == j {
            report.violation(format!("edge ({}, {}) is a self pair", i + 1, j + 1));
        }
    }
    for pair in system.graph.jump_pairs() {
        match system.jumps.get(&pair) {
            None => report.violation(format!(
                "missing jump map for pair ({}, {})",
                pair.0 + 1,
                pair.1 + 1
            )),
            Some(m) if m.nrows() != n || m.ncols() != n => {
                report.violation(format!(
                    "jump map for pair ({}, {}) is not {n}x{n}",
                    pair.0 + 1,
                    pair.1 + 1
                ));
            }
            _ => {}
        }
    }
    for i in 0..modes {
        if !system.graph.self_loops.contains(&i) {
            if let Some(j) = system.jumps.get(&(i, i)) {
                if *j != DMatrix::identity(n, n) {
                    report.violation(format!(
                        "mode {} has no declared self loop but a non-identity self jump map",
                        i + 1
                    ));
                }
            }
        }
    }

    if profile.impulse_adt.len() != modes && !profile.impulse_adt.is_empty() {
        report.violation(format!(
            "impulse dwell-time list has {} entries for {} modes",
            profile.impulse_adt.len(),
            modes
        ));
    }
    for (i, adt) in profile.impulse_adt.iter().enumerate() {
        if let Some(adt) = adt {
            match adt.direction {
                BoundDirection::Upper if adt.n0 < 1.0 => {
                    report.violation(format!(
                        "sign convention: upper impulse bound of mode {} needs N0 >= 1, got {}",
                        i + 1,
                        adt.n0
                    ));
                }
                BoundDirection::Lower if adt.n0 > -1.0 => {
                    report.violation(format!(
                        "sign convention: lower impulse bound of mode {} needs N0 <= -1, got {}",
                        i + 1,
                        adt.n0
                    ));
                }
                _ => {}
            }
            if adt.t_j.is_nan() || adt.t_j <= 0.0 {
                report.violation(format!("impulse dwell time of mode {} must be positive", i + 1));
            }
        }
    }

    if let Some(upper) = profile.switching_adt.upper {
        if upper.n0 < 1.0 {
            report.violation(format!("upper switching bound needs N0 >= 1, got {}", upper.n0));
        }
        if !(upper.t_s.is_finite() && upper.t_s > 0.0) {
            report.violation("upper switching dwell time must be finite positive".to_string());
        }
    }
    if let Some(lower) = profile.switching_adt.lower {
        if lower.n0 > -1.0 {
            report.violation(format!("lower switching bound needs N0 <= -1, got {}", lower.n0));
        }
        if lower.t_s.is_nan() || lower.t_s <= 0.0 {
            report.violation("lower switching dwell time must be positive".to_string());
        }
    }

    let mut covered = vec![0usize; modes];
    for (g, group) in profile.activation_groups.iter().enumerate() {
        for &i in &group.modes {
            if i >= modes {
                report.violation(format!(
                    "activation group {} references mode {} outside the mode range",
                    g + 1,
                    i + 1
                ));
            } else {
                covered[i] += 1;
            }
        }
        if group.n_a < 0.0 {
            report.violation(format!("activation group {} needs N_a >= 0", g + 1));
        }
        match group.direction {
            BoundDirection::Upper if group.t_a < 0.0 => {
                report.violation(format!("sign convention: upper activation group {} needs T_a >= 0", g + 1));
            }
            BoundDirection::Lower if group.t_a > 0.0 => {
                report.violation(format!("sign convention: lower activation group {} needs T_a <= 0", g + 1));
            }
            _ => {}
        }
    }
    if !profile.activation_groups.is_empty() && covered.iter().any(|&c| c != 1) {
        report.violation("activation groups must partition the mode set".to_string());
    }
    if !profile.activation_groups.is_empty() {
        let t_sum: f64 = profile.activation_groups.iter().map(|g| g.t_a).sum();
        let n_sum: f64 = profile.activation_groups.iter().map(|g| g.n_a).sum();
        if t_sum.abs() > 1e-12 {
            report.warnings.push(format!(
                "activation T_a values sum to {t_sum}; a zero sum usually tightens the bound"
            ));
        }
        if (n_sum - 1.0).abs() > 1e-12 {
            report.warnings.push(format!(
                "activation N_a values sum to {n_sum}; summing to one usually tightens the bound"
            ));
        }
    }

    report
}

/// Embeds a discrete-time switched system `x_{k+1} = h_{zeta(k)}(x_k)` as a
/// switched impulsive system: zero flows, jump maps `g_{i,j} = h_i` for
/// every pair, and unit-spaced event times up to the schedule length.
pub fn from_discrete_switched(
    step_maps: Vec<DMatrix<f64>>,
    schedule: &[usize],
) -> Result<(SwitchedImpulsiveSystem, HybridSignal), SignalError> {
    if schedule.is_empty() {
        return Err(SignalError::EmptySchedule);
    }
    let modes = step_maps.len();
    for &m in schedule {
        if m >= modes {
            return Err(SignalError::ModeOutOfRange(m, modes));
        }
    }
    let n = step_maps[0].nrows();
    let edges: Vec<(usize, usize)> =
        (0..modes).flat_map(|i| (0..modes).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let graph = JumpGraph::new(modes, edges, 0..modes);
    let mut jumps = BTreeMap::new();
    for (i, h) in step_maps.iter().enumerate() {
        for j in 0..modes {
            jumps.insert((i, j), h.clone());
        }
    }
    let system = SwitchedImpulsiveSystem {
        dimension: n,
        flows: (0..modes).map(|_| FlowMap::Linear(DMatrix::zeros(n, n))).collect(),
        jumps,
        graph,
    };

    let mut events = Vec::new();
    for k in 1..schedule.len() {
        let time = Time::from_ticks(k as i64 * TICKS_PER_SEC);
        let kind = if schedule[k] != schedule[k - 1] {
            EventKind::Switch(schedule[k])
        } else {
            EventKind::SelfImpulse
        };
        events.push(SignalEvent { time, kind });
    }
    let horizon = Time::from_ticks(schedule.len() as i64 * TICKS_PER_SEC);
    let signal = HybridSignal::new(schedule[0], events, horizon, modes)?;
    Ok((system, signal))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag2(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![a, b]))
    }

    #[test]
    fn validate_flags_missing_jump_map() {
        let graph = JumpGraph::new(2, [(0, 1)], []);
        let system = SwitchedImpulsiveSystem {
            dimension: 2,
            flows: vec![
                FlowMap::Linear(DMatrix::zeros(2, 2)),
                FlowMap::Linear(DMatrix::zeros(2, 2)),
            ],
            jumps: BTreeMap::from([
                ((0usize, 0usize), DMatrix::identity(2, 2)),
                ((1, 1), DMatrix::identity(2, 2)),
            ]),
            graph,
        };
        let report = validate_system(&system, &ConstraintProfile::default());
        assert!(report.violations.iter().any(|v| v.message.contains("missing jump map")));
    }

    #[test]
    fn validate_flags_sign_convention() {
        let graph = JumpGraph::new(1, [], []);
        let system = SwitchedImpulsiveSystem {
            dimension: 1,
            flows: vec![FlowMap::Linear(DMatrix::zeros(1, 1))],
            jumps: BTreeMap::from([((0usize, 0usize), DMatrix::identity(1, 1))]),
            graph,
        };
        let profile = ConstraintProfile {
            impulse_adt: vec![Some(ImpulseAdt {
                n0: 0.5,
                t_j: 0.1,
                direction: BoundDirection::Upper,
            })],
            switching_adt: SwitchingAdt::default(),
            activation_groups: vec![ActivationGroup {
                modes: vec![0],
                n_a: 1.0,
                t_a: -0.2,
                direction: BoundDirection::Upper,
            }],
        };
        let report = validate_system(&system, &profile);
        assert!(report.violations.iter().filter(|v| v.message.contains("sign convention")).count() >= 2);
    }

    #[test]
    fn validate_is_pure_and_idempotent() {
        let graph = JumpGraph::new(1, [], []);
        let system = SwitchedImpulsiveSystem {
            dimension: 1,
            flows: vec![FlowMap::Linear(DMatrix::zeros(1, 1))],
            jumps: BTreeMap::from([((0usize, 0usize), DMatrix::identity(1, 1))]),
            graph,
        };
        let profile = ConstraintProfile::default();
        let a = validate_system(&system, &profile);
        let b = validate_system(&system, &profile);
        assert_eq!(a.violations.len(), b.violations.len());
        assert!(a.is_clean());
    }

    #[test]
    fn discrete_embedding_identity_maps_keep_state_constant() {
        let (system, signal) =
            from_discrete_switched(vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)], &[0, 1, 0, 1])
                .unwrap();
        assert!(system.flows.iter().all(|f| f.matrix().iter().all(|&v| v == 0.0)));
        assert_eq!(signal.events.len(), 3);
        assert!(signal.events.iter().all(|e| matches!(e.kind, EventKind::Switch(_))));
    }

    #[test]
    fn discrete_embedding_uses_source_mode_map() {
        let (system, _) = from_discrete_switched(vec![diag2(0.5, 0.5), diag2(2.0, 2.0)], &[0, 1]).unwrap();
        assert_eq!(system.jump(0, 1).unwrap()[(0, 0)], 0.5);
        assert_eq!(system.jump(1, 0).unwrap()[(0, 0)], 2.0);
    }

    #[test]
    fn discrete_embedding_rejects_empty_schedule() {
        assert!(from_discrete_switched(vec![DMatrix::identity(1, 1)], &[]).is_err());
    }
}
