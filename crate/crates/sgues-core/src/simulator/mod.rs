//! Hybrid trajectory simulation and empirical certificate checks.
//!
//! Trajectories follow the active mode's flow between event times and jump
//! through the corresponding jump map at event times, right-continuously:
//! the post value at an event is the jump map applied to the left limit, and
//! a solution restarted at an event time starts with a flow. Linear flows
//! are integrated exactly per segment through the matrix exponential, so
//! samples do not depend on the sampling step; perturbed flows use the
//! classical fixed-step fourth-order Runge-Kutta scheme with steps aligned
//! to event times.

pub mod audit;
pub mod generate;

use nalgebra::DVector;
use serde::Serialize;

use crate::certifier::CombinedBound;
use crate::lyapunov::LyapunovData;
use crate::model::{
    EventKind, FlowMap, HybridSignal, SwitchedImpulsiveSystem, Time, TrigKind,
};

pub use audit::{audit_signal, AuditReport, InequalityAudit};
pub use generate::{generate_signal, GenerateError, SignalStyle};

/// Norm threshold beyond which a trajectory is flagged divergent.
pub const DIVERGENCE_CUTOFF: f64 = 1e300;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("step {step} exceeds a quarter of the smallest inter-event gap {min_gap}")]
    StepTooLarge { step: f64, min_gap: f64 },
    #[error("step must be positive")]
    NonPositiveStep,
    #[error("initial state must be nonzero for bound verification")]
    ZeroInitialState,
    #[error("signal event at {0} has no jump map for edge ({1}, {2})")]
    MissingJumpMap(Time, usize, usize),
    #[error("state dimension {0} does not match the system dimension {1}")]
    DimensionMismatch(usize, usize),
}

/// Exogenous input for perturbed flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum InputSignal {
    Zero,
    Constant(f64),
    Sinusoid { amplitude: f64, frequency: f64 },
}

impl InputSignal {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            InputSignal::Zero => 0.0,
            InputSignal::Constant(c) => c,
            InputSignal::Sinusoid { amplitude, frequency } => amplitude * (frequency * t).sin(),
        }
    }
}

/// One trajectory sample. Event times carry two samples: the left limit
/// (`pre_event`) and the post-jump value; counters count events in
/// `(start, time]`, with the event at the sample's own time excluded on the
/// pre sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub time: Time,
    pub state: DVector<f64>,
    pub pre_event: bool,
    pub mode: usize,
    pub n_switch: u64,
    pub n_self: u64,
}

impl TrajectorySample {
    /// Strong-bound abscissa `s = t - t0 + n(t, t0)`.
    pub fn strong_abscissa(&self, start: Time) -> f64 {
        (self.time - start).as_secs_f64() + (self.n_switch + self.n_self) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridTrajectory {
    pub start: Time,
    pub samples: Vec<TrajectorySample>,
    pub signal: HybridSignal,
    pub diverged: bool,
}

impl HybridTrajectory {
    pub fn initial_state(&self) -> &DVector<f64> {
        &self.samples[0].state
    }

    pub fn final_sample(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectory has at least the initial sample")
    }
}

/// Largest sampling step accepted by [`simulate`] for this signal: a
/// quarter of the smallest inter-event gap after `t0` (capped by the given
/// ceiling), on the millisecond grid when possible.
pub fn max_admissible_step(signal: &HybridSignal, t0: Time, ceiling: Time) -> Time {
    let mut min_gap = (signal.horizon - t0).ticks().max(1);
    let mut prev = t0;
    for ev in signal.events.iter().filter(|e| e.time > t0 && e.time <= signal.horizon) {
        min_gap = min_gap.min((ev.time - prev).ticks());
        prev = ev.time;
    }
    if signal.horizon > prev {
        min_gap = min_gap.min((signal.horizon - prev).ticks());
    }
    let raw = (min_gap / 4).min(ceiling.ticks()).max(1);
    let rounded = (raw / 1_000) * 1_000;
    Time::from_ticks(if rounded > 0 { rounded } else { raw })
}

/// Integrates the system along `signal` from `(t0, x0)`.
///
/// `step` is the largest sampling interval; each inter-event segment is
/// sampled on a uniform grid that lands exactly on the segment end. The
/// precondition `step <= min inter-event gap / 4` keeps at least a few
/// samples per segment. A state norm above [`DIVERGENCE_CUTOFF`] flags the
/// trajectory divergent and stops integration.
pub fn simulate(
    system: &SwitchedImpulsiveSystem,
    signal: &HybridSignal,
    x0: &DVector<f64>,
    t0: Time,
    step: Time,
    input: &InputSignal,
) -> Result<HybridTrajectory, SimError> {
    if x0.len() != system.dimension {
        return Err(SimError::DimensionMismatch(x0.len(), system.dimension));
    }
    if step.ticks() <= 0 {
        return Err(SimError::NonPositiveStep);
    }
    let events: Vec<_> =
        signal.events.iter().copied().filter(|e| e.time > t0 && e.time <= signal.horizon).collect();
    let mut min_gap = i64::MAX;
    let mut prev = t0;
    for ev in &events {
        min_gap = min_gap.min((ev.time - prev).ticks());
        prev = ev.time;
    }
    if signal.horizon > prev {
        min_gap = min_gap.min((signal.horizon - prev).ticks());
    }
    if min_gap != i64::MAX && step.ticks() * 4 > min_gap {
        return Err(SimError::StepTooLarge {
            step: step.as_secs_f64(),
            min_gap: Time::from_ticks(min_gap).as_secs_f64(),
        });
    }

    let mut samples = Vec::new();
    let mut diverged = false;
    let mut mode = signal.mode_at(t0);
    let mut x = x0.clone();
    let mut n_switch = 0u64;
    let mut n_self = 0u64;
    samples.push(TrajectorySample {
        time: t0,
        state: x.clone(),
        pre_event: false,
        mode,
        n_switch,
        n_self,
    });

    let mut seg_start = t0;
    let mut boundaries: Vec<(Time, Option<EventKind>)> =
        events.iter().map(|e| (e.time, Some(e.kind))).collect();
    if signal.horizon > prev {
        boundaries.push((signal.horizon, None));
    }

    'segments: for (seg_end, event) in boundaries {
        let seg_ticks = (seg_end - seg_start).ticks();
        let substeps = (seg_ticks + step.ticks() - 1) / step.ticks();
        let flow = &system.flows[mode];
        let seg_state = x.clone();
        let mut rk_state = seg_state.clone();
        let mut rk_time = seg_start;
        for k in 1..=substeps {
            let target = if k == substeps {
                seg_end
            } else {
                Time::from_ticks(seg_start.ticks() + k * seg_ticks / substeps)
            };
            let state = match flow {
                FlowMap::Linear(a) => {
                    let dt = (target - seg_start).as_secs_f64();
                    (a * dt).exp() * &seg_state
                }
                FlowMap::Perturbed { .. } => {
                    let h = (target - rk_time).as_secs_f64();
                    rk_state = rk4_step(flow, rk_time.as_secs_f64(), &rk_state, h, input);
                    rk_time = target;
                    rk_state.clone()
                }
            };
            x = state;
            let is_event_end = k == substeps && event.is_some();
            samples.push(TrajectorySample {
                time: target,
                state: x.clone(),
                pre_event: is_event_end,
                mode,
                n_switch,
                n_self,
            });
            if x.norm() > DIVERGENCE_CUTOFF {
                diverged = true;
                break 'segments;
            }
        }
        if let Some(kind) = event {
            let (from, to) = match kind {
                EventKind::Switch(to) => (mode, to),
                EventKind::SelfImpulse => (mode, mode),
            };
            let jump = system
                .jump(from, to)
                .ok_or(SimError::MissingJumpMap(seg_end, from, to))?;
            x = jump * &x;
            match kind {
                EventKind::Switch(to) => {
                    n_switch += 1;
                    mode = to;
                }
                EventKind::SelfImpulse => n_self += 1,
            }
            samples.push(TrajectorySample {
                time: seg_end,
                state: x.clone(),
                pre_event: false,
                mode,
                n_switch,
                n_self,
            });
            if x.norm() > DIVERGENCE_CUTOFF {
                diverged = true;
                break;
            }
        }
        seg_start = seg_end;
    }

    Ok(HybridTrajectory { start: t0, samples, signal: signal.clone(), diverged })
}

fn rk4_step(
    flow: &FlowMap,
    t: f64,
    x: &DVector<f64>,
    h: f64,
    input: &InputSignal,
) -> DVector<f64> {
    let f = |t: f64, x: &DVector<f64>| flow.eval(t, x, input.eval(t));
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Outcome of checking a trajectory against a strong-stability envelope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyOutcome {
    /// Largest ratio `|x(t)| / envelope(t)` over all samples and one-sided
    /// event limits; at most one for a sound certificate.
    pub max_ratio: f64,
    pub worst_time: Option<Time>,
    pub diverged: bool,
}

/// Evaluates `max_t |x(t)| / (beta(|x0|, t - t0 + n(t, t0)))` where `beta`
/// is the pointwise-minimum envelope. Ratios are evaluated in log space so
/// deeply decayed states do not underflow.
pub fn verify_bound(
    trajectory: &HybridTrajectory,
    bound: &CombinedBound,
) -> Result<VerifyOutcome, SimError> {
    let x0_norm = trajectory.initial_state().norm();
    if x0_norm == 0.0 {
        return Err(SimError::ZeroInitialState);
    }
    let log_x0 = x0_norm.ln();
    let mut max_log_ratio = f64::NEG_INFINITY;
    let mut worst_time = None;
    for sample in &trajectory.samples {
        let norm = sample.state.norm();
        if norm == 0.0 {
            continue;
        }
        let s = sample.strong_abscissa(trajectory.start);
        let log_ratio = norm.ln() - (bound.log_eval(s) + log_x0);
        if log_ratio > max_log_ratio {
            max_log_ratio = log_ratio;
            worst_time = Some(sample.time);
        }
    }
    let max_ratio =
        if max_log_ratio == f64::NEG_INFINITY { 0.0 } else { max_log_ratio.min(700.0).exp() };
    Ok(VerifyOutcome { max_ratio, worst_time, diverged: trajectory.diverged })
}

/// Outcome of the Lyapunov-functional comparison check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalOutcome {
    /// Largest ratio of `w(t) = V_{mode(t)}(x(t))` to its comparison bound
    /// `exp(sum_i lambda_bar(i) t_a(i) + sum_events ln r_bar) w(t0)`.
    pub max_ratio: f64,
    pub worst_time: Option<Time>,
}

/// Checks the switched comparison bound along the trajectory. Both sides
/// are evaluated in log space; the per-mode activation integrals and the
/// accumulated jump log-gains are maintained incrementally over the sample
/// sequence.
///
/// The data must belong to the simulated system: a traversed edge without
/// a jump gain panics.
pub fn lyapunov_functional_check(
    trajectory: &HybridTrajectory,
    lyap: &LyapunovData,
) -> FunctionalOutcome {
    let log_w = |state: &DVector<f64>, mode: usize| -> Option<f64> {
        let norm = state.norm();
        if norm == 0.0 {
            return None;
        }
        let unit = state / norm;
        let quad = (unit.transpose() * &lyap.p[mode] * &unit)[0];
        Some(2.0 * norm.ln() + quad.ln())
    };

    let first = &trajectory.samples[0];
    let Some(log_w0) = log_w(&first.state, first.mode) else {
        return FunctionalOutcome { max_ratio: 0.0, worst_time: None };
    };

    let mut max_log_ratio = f64::NEG_INFINITY;
    let mut worst_time = None;
    let mut exponent = 0.0; // running sum of flow-rate integrals and jump log-gains
    let mut prev_time = first.time;
    let mut prev_mode = first.mode;
    let mut prev_was_pre = first.pre_event;
    for sample in &trajectory.samples[1..] {
        exponent += lyap.flow_rate[prev_mode] * (sample.time - prev_time).as_secs_f64();
        if prev_was_pre && !sample.pre_event && sample.time == prev_time {
            // Post-jump twin of the preceding left-limit sample.
            exponent += lyap.jump_gain[&(prev_mode, sample.mode)].ln();
        }
        if let Some(log_w_t) = log_w(&sample.state, sample.mode) {
            let log_ratio = log_w_t - (exponent + log_w0);
            if log_ratio > max_log_ratio {
                max_log_ratio = log_ratio;
                worst_time = Some(sample.time);
            }
        }
        prev_time = sample.time;
        prev_mode = sample.mode;
        prev_was_pre = sample.pre_event;
    }
    let max_ratio =
        if max_log_ratio == f64::NEG_INFINITY { 0.0 } else { max_log_ratio.min(700.0).exp() };
    FunctionalOutcome { max_ratio, worst_time }
}

/// Per-mode affine perturbation bound `gain (1 + trig(t))` used by the
/// margin bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationBound {
    pub gain: f64,
    pub trig: TrigKind,
}

/// Accumulated excess of the perturbation bounds over the admissible
/// margin `n_tilde`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaDeficit {
    /// Per mode: integral of `max{gain (1 + trig(t)) - n_tilde, 0}` over
    /// `[0, horizon]` plus its value at the supplied event times.
    pub per_mode: Vec<f64>,
    pub total: f64,
}

/// Evaluates the deficit by composite Simpson quadrature on a fine grid
/// plus point masses at event times. A zero total certifies that the
/// perturbation never exceeds the margin.
pub fn theta_deficit(
    bounds: &[PerturbationBound],
    n_tilde: f64,
    horizon: Time,
    events: &[Time],
) -> ThetaDeficit {
    let t_end = horizon.as_secs_f64();
    let panels = 20_000usize;
    let h = t_end / panels as f64;
    let mut per_mode = Vec::with_capacity(bounds.len());
    for bound in bounds {
        let theta = |t: f64| (bound.gain * (1.0 + bound.trig.eval(t)) - n_tilde).max(0.0);
        let mut integral = 0.0;
        if t_end > 0.0 {
            for k in 0..panels {
                let a = k as f64 * h;
                integral += h / 6.0 * (theta(a) + 4.0 * theta(a + 0.5 * h) + theta(a + h));
            }
        }
        let point_mass: f64 = events.iter().map(|&tau| theta(tau.as_secs_f64())).sum();
        per_mode.push(integral + point_mass);
    }
    let total = per_mode.iter().sum();
    ThetaDeficit { per_mode, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpGraph, Perturbation, SignalEvent};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::collections::BTreeMap;

    fn secs(s: &str) -> Time {
        Time::parse_decimal(s).unwrap()
    }

    fn single_mode_system(a: nalgebra::DMatrix<f64>) -> SwitchedImpulsiveSystem {
        let n = a.nrows();
        SwitchedImpulsiveSystem {
            dimension: n,
            flows: vec![FlowMap::Linear(a)],
            jumps: BTreeMap::from([((0usize, 0usize), nalgebra::DMatrix::identity(n, n))]),
            graph: JumpGraph::new(1, [], []),
        }
    }

    #[test]
    fn zero_flow_keeps_state_constant() {
        let system = single_mode_system(nalgebra::DMatrix::zeros(2, 2));
        let signal = HybridSignal::new(0, vec![], secs("1"), 1).unwrap();
        let x0 = nalgebra::DVector::from_vec(vec![0.3, -0.7]);
        let traj =
            simulate(&system, &signal, &x0, Time::ZERO, secs("0.1"), &InputSignal::Zero).unwrap();
        for sample in &traj.samples {
            assert_abs_diff_eq!((&sample.state - &x0).norm(), 0.0, epsilon = 0.0);
        }
    }

    #[test]
    fn linear_flow_matches_eigendecomposition_oracle() {
        // Closed-form exponential of the first reference flow through its
        // eigendecomposition, evaluated at t = 1.
        let a = nalgebra::DMatrix::from_row_slice(2, 2, &[-1.4, 0.6, -0.5, -0.3]);
        let system = single_mode_system(a.clone());
        let signal = HybridSignal::new(0, vec![], secs("1"), 1).unwrap();
        let x0 = nalgebra::DVector::from_vec(vec![1.0, 2.0]);
        let traj =
            simulate(&system, &signal, &x0, Time::ZERO, secs("0.25"), &InputSignal::Zero).unwrap();
        let last = traj.final_sample();
        assert_eq!(last.time, secs("1"));

        // Trace -1.7, determinant 0.72: real eigenvalues -0.8 and -0.9, so
        // exp(At) = e^{alpha t} (cosh(beta t) I + sinh(beta t)/beta (A - alpha I))
        // with alpha the mean and beta the half-gap.
        let alpha = -0.85_f64;
        let beta = 0.05_f64;
        let t = 1.0_f64;
        let rot = nalgebra::DMatrix::identity(2, 2) * (beta * t).cosh()
            + (&a - nalgebra::DMatrix::identity(2, 2) * alpha) * ((beta * t).sinh() / beta);
        let expected = rot * (alpha * t).exp() * &x0;
        assert_abs_diff_eq!((&last.state - &expected).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn samples_are_step_independent_for_linear_flows() {
        let a = nalgebra::DMatrix::from_row_slice(2, 2, &[-1.4, 0.6, -0.5, -0.3]);
        let system = single_mode_system(a);
        let signal = HybridSignal::new(0, vec![], secs("1"), 1).unwrap();
        let x0 = nalgebra::DVector::from_vec(vec![1.0, -1.0]);
        let coarse =
            simulate(&system, &signal, &x0, Time::ZERO, secs("0.2"), &InputSignal::Zero).unwrap();
        let fine =
            simulate(&system, &signal, &x0, Time::ZERO, secs("0.1"), &InputSignal::Zero).unwrap();
        for sample in &coarse.samples {
            let twin = fine
                .samples
                .iter()
                .find(|s| s.time == sample.time && s.pre_event == sample.pre_event)
                .expect("shared grid point");
            assert!((&sample.state - &twin.state).norm() <= 1e-12);
        }
    }

    #[test]
    fn jumps_are_right_continuous_and_counted() {
        let contract = nalgebra::DMatrix::identity(2, 2) * 0.5;
        let mut system = single_mode_system(nalgebra::DMatrix::zeros(2, 2));
        system.jumps.insert((0, 0), contract);
        system.graph.self_loops.insert(0);
        let signal = HybridSignal::new(
            0,
            vec![SignalEvent { time: secs("0.5"), kind: EventKind::SelfImpulse }],
            secs("1"),
            1,
        )
        .unwrap();
        let x0 = nalgebra::DVector::from_vec(vec![2.0, 0.0]);
        let traj =
            simulate(&system, &signal, &x0, Time::ZERO, secs("0.1"), &InputSignal::Zero).unwrap();
        let pre = traj.samples.iter().find(|s| s.pre_event).unwrap();
        assert_eq!(pre.time, secs("0.5"));
        assert_abs_diff_eq!(pre.state[0], 2.0, epsilon = 1e-12);
        assert_eq!(pre.n_self, 0);
        let post = traj
            .samples
            .iter()
            .find(|s| s.time == secs("0.5") && !s.pre_event)
            .unwrap();
        assert_abs_diff_eq!(post.state[0], 1.0, epsilon = 1e-12);
        assert_eq!(post.n_self, 1);
        assert_abs_diff_eq!(traj.final_sample().state[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn restart_from_an_event_reproduces_the_tail() {
        let contract = nalgebra::DMatrix::identity(2, 2) * 0.5;
        let a = nalgebra::DMatrix::from_row_slice(2, 2, &[-0.2, 0.1, 0.0, -0.3]);
        let mut system = single_mode_system(a);
        system.jumps.insert((0, 0), contract);
        system.graph.self_loops.insert(0);
        let signal = HybridSignal::new(
            0,
            vec![
                SignalEvent { time: secs("0.4"), kind: EventKind::SelfImpulse },
                SignalEvent { time: secs("0.8"), kind: EventKind::SelfImpulse },
            ],
            secs("1.2"),
            1,
        )
        .unwrap();
        let x0 = nalgebra::DVector::from_vec(vec![1.0, 1.0]);
        let step = secs("0.05");
        let full = simulate(&system, &signal, &x0, Time::ZERO, step, &InputSignal::Zero).unwrap();

        let restart_time = secs("0.4");
        let restart_state = full
            .samples
            .iter()
            .find(|s| s.time == restart_time && !s.pre_event)
            .unwrap()
            .state
            .clone();
        let tail = signal.restarted_at(restart_time);
        let resumed =
            simulate(&system, &tail, &restart_state, restart_time, step, &InputSignal::Zero)
                .unwrap();
        for sample in &resumed.samples {
            let twin = full
                .samples
                .iter()
                .find(|s| s.time == sample.time && s.pre_event == sample.pre_event);
            if let Some(twin) = twin {
                assert!(
                    (&sample.state - &twin.state).norm() <= 1e-10,
                    "mismatch at {}",
                    sample.time
                );
            }
        }
    }

    #[test]
    fn identical_inputs_give_bitwise_identical_trajectories() {
        let (profile, graph) = {
            let p = crate::simulator::generate::tests::reference_profile();
            let g = crate::model::JumpGraph::new(2, [(0, 1), (1, 0)], [0, 1]);
            (p, g)
        };
        let horizon = secs("2");
        let signal_a =
            generate_signal(&profile, &graph, horizon, 9, SignalStyle::Randomized).unwrap();
        let signal_b =
            generate_signal(&profile, &graph, horizon, 9, SignalStyle::Randomized).unwrap();
        assert_eq!(signal_a, signal_b);

        let mat2 = |a, b, c, d| nalgebra::DMatrix::from_row_slice(2, 2, &[a, b, c, d]);
        let system = SwitchedImpulsiveSystem {
            dimension: 2,
            flows: vec![
                FlowMap::Linear(mat2(-1.4, 0.6, -0.5, -0.3)),
                FlowMap::Linear(mat2(4.0, 3.0, -1.0, 2.0)),
            ],
            jumps: std::collections::BTreeMap::from([
                ((0usize, 1usize), nalgebra::DMatrix::identity(2, 2) * 1.26),
                ((1, 0), mat2(0.105, 0.0, 0.0, 0.11)),
                ((0, 0), mat2(0.105, 0.0, 0.0, 0.11)),
                ((1, 1), nalgebra::DMatrix::identity(2, 2) * 1.26),
            ]),
            graph,
        };
        let x0 = nalgebra::DVector::from_vec(vec![0.6, -0.8]);
        let step = max_admissible_step(&signal_a, Time::ZERO, secs("0.002"));
        let run = || {
            simulate(&system, &signal_a, &x0, Time::ZERO, step, &InputSignal::Zero).unwrap()
        };
        let (first, second) = (run(), run());
        assert_eq!(first.samples.len(), second.samples.len());
        for (a, b) in first.samples.iter().zip(&second.samples) {
            assert_eq!(a.time, b.time);
            assert_eq!(a.state, b.state);
        }
    }

    #[test]
    fn step_precondition_is_enforced() {
        let system = single_mode_system(nalgebra::DMatrix::zeros(1, 1));
        let signal = HybridSignal::new(
            0,
            vec![SignalEvent { time: secs("0.2"), kind: EventKind::SelfImpulse }],
            secs("1"),
            1,
        )
        .unwrap();
        let x0 = nalgebra::DVector::from_vec(vec![1.0]);
        let err = simulate(&system, &signal, &x0, Time::ZERO, secs("0.1"), &InputSignal::Zero);
        assert!(matches!(err, Err(SimError::StepTooLarge { .. })));
    }

    #[test]
    fn perturbed_flow_converges_at_fourth_order() {
        let a = nalgebra::DMatrix::from_row_slice(2, 2, &[-1.4, 0.6, -0.5, -0.3]);
        let perturbation =
            Perturbation { gain: 0.01, trig: TrigKind::Sin, input: None };
        let system = SwitchedImpulsiveSystem {
            dimension: 2,
            flows: vec![FlowMap::Perturbed { matrix: a, perturbation }],
            jumps: BTreeMap::from([((0usize, 0usize), nalgebra::DMatrix::identity(2, 2))]),
            graph: JumpGraph::new(1, [], []),
        };
        let signal = HybridSignal::new(0, vec![], secs("1"), 1).unwrap();
        let x0 = nalgebra::DVector::from_vec(vec![1.0, -0.5]);
        let run = |step: &str| {
            simulate(&system, &signal, &x0, Time::ZERO, secs(step), &InputSignal::Zero)
                .unwrap()
                .final_sample()
                .state
                .clone()
        };
        let reference = run("0.00125"); // step/16 reference
        let err_coarse = (run("0.02") - &reference).norm();
        let err_half = (run("0.01") - &reference).norm();
        let order = (err_coarse / err_half).log2();
        assert!(
            (3.0..5.0).contains(&order),
            "observed order {order} (errors {err_coarse:.3e} / {err_half:.3e})"
        );
    }

    #[test]
    fn discrete_embedding_matches_matrix_product() {
        // Alternating two-mode schedule with diagonal step maps: the state
        // at integer times equals the ordered product of step maps.
        let h0 = nalgebra::DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.8]);
        let h1 = nalgebra::DMatrix::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 0.3]);
        let schedule = [0usize, 1, 0, 1, 0];
        let (system, signal) =
            crate::model::from_discrete_switched(vec![h0.clone(), h1.clone()], &schedule).unwrap();
        let x0 = nalgebra::DVector::from_vec(vec![1.0, -2.0]);
        let traj =
            simulate(&system, &signal, &x0, Time::ZERO, secs("0.25"), &InputSignal::Zero).unwrap();
        let mut expected = x0.clone();
        for k in 1..schedule.len() {
            expected = match schedule[k - 1] {
                0 => &h0 * &expected,
                _ => &h1 * &expected,
            };
            let t = Time::from_ticks(k as i64 * crate::model::TICKS_PER_SEC);
            let sample = traj.samples.iter().find(|s| s.time == t && !s.pre_event).unwrap();
            assert_abs_diff_eq!((&sample.state - &expected).norm(), 0.0, epsilon = 1e-12);
        }

        // Constant schedule: every integer event is a self impulse and the
        // state contracts geometrically.
        let contract = nalgebra::DMatrix::identity(2, 2) * 0.5;
        let (system, signal) =
            crate::model::from_discrete_switched(vec![contract], &[0, 0, 0, 0]).unwrap();
        assert!(signal.events.iter().all(|e| e.kind == crate::model::EventKind::SelfImpulse));
        let traj =
            simulate(&system, &signal, &x0, Time::ZERO, secs("0.25"), &InputSignal::Zero).unwrap();
        for k in 1..4i64 {
            let t = Time::from_ticks(k * crate::model::TICKS_PER_SEC);
            let sample = traj.samples.iter().find(|s| s.time == t && !s.pre_event).unwrap();
            let expected = &x0 * 0.5_f64.powi(k as i32);
            assert_abs_diff_eq!((&sample.state - &expected).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_state_trajectory_has_zero_ratio() {
        let system = single_mode_system(nalgebra::DMatrix::zeros(2, 2));
        let signal = HybridSignal::new(0, vec![], secs("1"), 1).unwrap();
        let x0 = nalgebra::DVector::from_vec(vec![0.0, 0.0]);
        let traj =
            simulate(&system, &signal, &x0, Time::ZERO, secs("0.1"), &InputSignal::Zero).unwrap();
        let bound = CombinedBound { components: vec![(2.0, 0.5)] };
        assert!(matches!(verify_bound(&traj, &bound), Err(SimError::ZeroInitialState)));
        let x0 = nalgebra::DVector::from_vec(vec![1.0, 0.0]);
        let traj =
            simulate(&system, &signal, &x0, Time::ZERO, secs("0.1"), &InputSignal::Zero).unwrap();
        let outcome = verify_bound(&traj, &bound).unwrap();
        assert!(outcome.max_ratio <= 1.0);
    }

    #[test]
    fn functional_check_single_mode_groenwall() {
        let a = nalgebra::DMatrix::from_row_slice(2, 2, &[-1.4, 0.6, -0.5, -0.3]);
        let system = single_mode_system(a.clone());
        let p = crate::lyapunov::solve_continuous_lyapunov(&a, &nalgebra::DMatrix::identity(2, 2))
            .unwrap();
        let (lm, _) =
            crate::lyapunov::generalized_eig_extremes(&nalgebra::DMatrix::identity(2, 2), &p)
                .unwrap();
        let lyap = LyapunovData {
            k_lower: vec![p.symmetric_eigenvalues().min()],
            k_upper: vec![p.symmetric_eigenvalues().max()],
            flow_rate: vec![-lm],
            jump_gain: BTreeMap::from([((0usize, 0usize), 1.0)]),
            q_tilde: vec![None],
            p: vec![p],
            classification: Default::default(),
            exponent: 2,
        };
        let signal = HybridSignal::new(0, vec![], secs("2"), 1).unwrap();
        let x0 = nalgebra::DVector::from_vec(vec![1.0, 0.3]);
        let traj =
            simulate(&system, &signal, &x0, Time::ZERO, secs("0.05"), &InputSignal::Zero).unwrap();
        let outcome = lyapunov_functional_check(&traj, &lyap);
        assert!(outcome.max_ratio <= 1.0 + 1e-9, "ratio {}", outcome.max_ratio);
    }

    #[test]
    fn functional_check_equality_dynamics_is_tight() {
        // Scalar comparison system with equality dynamics: V = x^2,
        // dV/dt = lambda V along the flow and V^+ = r V at impulses.
        let lambda_bar = -0.8_f64;
        let r_gain = 0.25_f64;
        let mut system =
            single_mode_system(nalgebra::DMatrix::from_element(1, 1, lambda_bar / 2.0));
        system
            .jumps
            .insert((0, 0), nalgebra::DMatrix::from_element(1, 1, r_gain.sqrt()));
        system.graph.self_loops.insert(0);
        let events = (1..=8)
            .map(|k| SignalEvent {
                time: Time::from_ticks(k * 250_000_000),
                kind: EventKind::SelfImpulse,
            })
            .collect();
        let signal = HybridSignal::new(0, events, secs("2.5"), 1).unwrap();
        let lyap = LyapunovData {
            p: vec![nalgebra::DMatrix::identity(1, 1)],
            k_lower: vec![1.0],
            k_upper: vec![1.0],
            flow_rate: vec![lambda_bar],
            jump_gain: BTreeMap::from([((0usize, 0usize), r_gain.sqrt().powi(2))]),
            q_tilde: vec![None],
            classification: Default::default(),
            exponent: 2,
        };
        let x0 = nalgebra::DVector::from_vec(vec![1.0]);
        let traj =
            simulate(&system, &signal, &x0, Time::ZERO, secs("0.05"), &InputSignal::Zero).unwrap();
        let outcome = lyapunov_functional_check(&traj, &lyap);
        assert_relative_eq!(outcome.max_ratio, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn theta_deficit_reference_cases() {
        let bounds = [
            PerturbationBound { gain: 0.001, trig: TrigKind::Sin },
            PerturbationBound { gain: 0.005, trig: TrigKind::Cos },
        ];
        let horizon = secs("50");
        let events: Vec<Time> = (1..=100).map(|k| Time::from_ticks(k * 500_000_000)).collect();
        // Both bounds stay below the margin, so the deficit vanishes.
        let deficit = theta_deficit(&bounds, 0.012, horizon, &events);
        assert_eq!(deficit.total, 0.0);

        // A zero margin makes the deficit the full integral of the bound:
        // gain * (t + 1 - cos t) for the sine case.
        let deficit = theta_deficit(&bounds[..1], 0.0, horizon, &[]);
        let expected = 0.001 * (50.0 + 1.0 - 50.0_f64.cos());
        assert_relative_eq!(deficit.per_mode[0], expected, max_relative = 1e-6);

        // A larger gain exceeds the margin on part of each period.
        let big = [PerturbationBound { gain: 0.01, trig: TrigKind::Sin }];
        let deficit = theta_deficit(&big, 0.012, horizon, &[]);
        assert!(deficit.total > 0.0);
    }
}
