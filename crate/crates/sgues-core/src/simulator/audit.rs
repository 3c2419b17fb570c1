//! Admissibility audit of hybrid signals against a constraint profile.
//!
//! Every declared inequality is checked over all event-aligned window pairs
//! `(t0, t]`, one-sided limits at events included. This grid is sufficient:
//! each inequality compares a piecewise-constant counter against an affine
//! function of elapsed or activation time, so extremes occur at event
//! boundaries. Counts are exact on the tick grid.
//!
//! The two switching directions form an either/or pair: a signal is
//! admissible when it fully satisfies at least one declared direction. Both are audited and reported; certificate
//! verification can then insist on the direction matching its combined
//! weight. (For profiles that declare both directions alongside tight
//! activation bounds, no signal can satisfy both directions on every
//! window: equal-spacing forced by the pair of switching bounds contradicts
//! the activation budget.)

use serde::Serialize;

use crate::model::{
    BoundDirection, ConstraintProfile, EventKind, HybridSignal, JumpGraph, Time,
};

/// Worst-window outcome for one inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityAudit {
    pub name: String,
    /// Smallest margin by which the inequality holds; negative means a
    /// violation on `worst_window`.
    pub min_slack: f64,
    pub worst_window: Option<(Time, Time)>,
    pub satisfied: bool,
}

impl InequalityAudit {
    fn new(name: String) -> Self {
        InequalityAudit { name, min_slack: f64::INFINITY, worst_window: None, satisfied: true }
    }

    fn update(&mut self, slack: f64, window: (Time, Time)) {
        if slack < self.min_slack {
            self.min_slack = slack;
            self.worst_window = Some(window);
        }
    }

    fn finish(mut self) -> Self {
        self.satisfied = self.min_slack >= 0.0;
        self
    }
}

/// Full audit outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub graph_admissible: bool,
    /// Per mode, when an impulse dwell-time pair is declared.
    pub impulse: Vec<Option<InequalityAudit>>,
    /// Per activation group.
    pub activation: Vec<InequalityAudit>,
    pub switching_upper: Option<InequalityAudit>,
    pub switching_lower: Option<InequalityAudit>,
    pub passed: bool,
}

impl AuditReport {
    /// Either/or switching admissibility over the declared directions.
    pub fn switching_ok(&self) -> bool {
        match (&self.switching_upper, &self.switching_lower) {
            (None, None) => true,
            (upper, lower) => {
                upper.as_ref().is_some_and(|a| a.satisfied)
                    || lower.as_ref().is_some_and(|a| a.satisfied)
            }
        }
    }

    /// True when the signal satisfies the declared direction required by a
    /// combined weight of the given sign.
    pub fn switching_ok_for(&self, log_combined_weight: f64) -> bool {
        if log_combined_weight >= 0.0 {
            self.switching_upper.as_ref().is_some_and(|a| a.satisfied)
        } else {
            self.switching_lower.as_ref().is_some_and(|a| a.satisfied)
        }
    }

    pub fn worst_violation(&self) -> Option<&InequalityAudit> {
        self.impulse
            .iter()
            .flatten()
            .chain(self.activation.iter())
            .chain(self.switching_upper.iter())
            .chain(self.switching_lower.iter())
            .filter(|a| !a.satisfied)
            .min_by(|a, b| a.min_slack.total_cmp(&b.min_slack))
    }
}

/// Per-anchor cumulative data: counts over `(0, anchor]` and activation
/// over `[0, anchor]`.
struct Prefixes {
    anchors: Vec<Time>,
    /// Event kind at each anchor (`None` for the artificial start/horizon
    /// anchors): `(is_switch, mode for self impulses)`.
    event: Vec<Option<(bool, usize)>>,
    cum_switch: Vec<u64>,
    cum_self: Vec<Vec<u64>>,
    cum_act: Vec<Vec<i64>>,
}

fn build_prefixes(signal: &HybridSignal, mode_count: usize) -> Prefixes {
    let mut anchors = vec![Time::ZERO];
    let mut event: Vec<Option<(bool, usize)>> = vec![None];
    let mut cum_switch = vec![0u64];
    let mut cum_self = vec![vec![0u64; mode_count]];
    let mut cum_act = vec![vec![0i64; mode_count]];

    let mut mode = signal.initial_mode;
    let mut last_time = Time::ZERO;
    for ev in &signal.events {
        let mut act = cum_act.last().unwrap().clone();
        act[mode] += (ev.time - last_time).ticks();
        let mut selfs = cum_self.last().unwrap().clone();
        let mut switches = *cum_switch.last().unwrap();
        match ev.kind {
            EventKind::Switch(to) => {
                switches += 1;
                event.push(Some((true, mode)));
                mode = to;
            }
            EventKind::SelfImpulse => {
                selfs[mode] += 1;
                event.push(Some((false, mode)));
            }
        }
        anchors.push(ev.time);
        cum_switch.push(switches);
        cum_self.push(selfs);
        cum_act.push(act);
        last_time = ev.time;
    }
    if signal.horizon > last_time {
        let mut act = cum_act.last().unwrap().clone();
        act[mode] += (signal.horizon - last_time).ticks();
        anchors.push(signal.horizon);
        event.push(None);
        cum_switch.push(*cum_switch.last().unwrap());
        cum_self.push(cum_self.last().unwrap().clone());
        cum_act.push(act);
    }
    Prefixes { anchors, event, cum_switch, cum_self, cum_act }
}

/// Audits `signal` against every inequality declared in `profile` plus
/// jump-graph admissibility.
pub fn audit_signal(
    signal: &HybridSignal,
    profile: &ConstraintProfile,
    graph: &JumpGraph,
) -> AuditReport {
    let modes = graph.mode_count;
    let prefixes = build_prefixes(signal, modes);
    let n = prefixes.anchors.len();

    let mut impulse: Vec<Option<InequalityAudit>> = (0..modes)
        .map(|i| {
            profile.impulse_adt.get(i).copied().flatten().map(|adt| {
                let dir = match adt.direction {
                    BoundDirection::Upper => "upper",
                    BoundDirection::Lower => "lower",
                };
                InequalityAudit::new(format!("impulse {dir} bound, mode {}", i + 1))
            })
        })
        .collect();
    let mut activation: Vec<InequalityAudit> = profile
        .activation_groups
        .iter()
        .enumerate()
        .map(|(g, group)| {
            let dir = match group.direction {
                BoundDirection::Upper => "upper",
                BoundDirection::Lower => "lower",
            };
            InequalityAudit::new(format!("activation {dir} bound, group {}", g + 1))
        })
        .collect();
    let mut switching_upper = profile
        .switching_adt
        .upper
        .map(|_| InequalityAudit::new("switching upper bound".to_string()));
    let mut switching_lower = profile
        .switching_adt
        .lower
        .map(|_| InequalityAudit::new("switching lower bound".to_string()));

    for j in 0..n {
        let t0 = prefixes.anchors[j];
        // Contribution of the event sitting at the window start; pulling it
        // into the window is the left one-sided limit.
        let start_event = prefixes.event[j];
        for k in j..n {
            let t = prefixes.anchors[k];
            let window = (t0, t);
            let dt = (t - t0).as_secs_f64();
            let end_event = prefixes.event[k];

            if let Some(audit) = &mut switching_upper {
                let pair = profile.switching_adt.upper.unwrap();
                let mut count =
                    (prefixes.cum_switch[k] - prefixes.cum_switch[j]) as f64;
                if let Some((true, _)) = start_event {
                    count += 1.0;
                }
                audit.update(pair.n0 + dt / pair.t_s - count, window);
            }
            if let Some(audit) = &mut switching_lower {
                let pair = profile.switching_adt.lower.unwrap();
                if k > j {
                    let mut count =
                        (prefixes.cum_switch[k] - prefixes.cum_switch[j]) as f64;
                    if let Some((true, _)) = end_event {
                        count -= 1.0;
                    }
                    let quota = if pair.t_s.is_infinite() { 0.0 } else { dt / pair.t_s };
                    audit.update(count - pair.n0 - quota, window);
                }
            }
            for (i, slot) in impulse.iter_mut().enumerate() {
                let Some(audit) = slot else { continue };
                let adt = profile.impulse_adt[i].unwrap();
                let ta = (prefixes.cum_act[k][i] - prefixes.cum_act[j][i]) as f64 / 1e9;
                let quota = if adt.t_j.is_infinite() { 0.0 } else { ta / adt.t_j };
                match adt.direction {
                    BoundDirection::Upper => {
                        let mut count =
                            (prefixes.cum_self[k][i] - prefixes.cum_self[j][i]) as f64;
                        if let Some((false, m)) = start_event {
                            if m == i {
                                count += 1.0;
                            }
                        }
                        audit.update(adt.n0 + quota - count, window);
                    }
                    BoundDirection::Lower => {
                        if k == j {
                            continue;
                        }
                        let mut count =
                            (prefixes.cum_self[k][i] - prefixes.cum_self[j][i]) as f64;
                        if let Some((false, m)) = end_event {
                            if m == i {
                                count -= 1.0;
                            }
                        }
                        audit.update(count - adt.n0 - quota, window);
                    }
                }
            }
            for (g, audit) in activation.iter_mut().enumerate() {
                let group = &profile.activation_groups[g];
                let ta: f64 = group
                    .modes
                    .iter()
                    .map(|&i| (prefixes.cum_act[k][i] - prefixes.cum_act[j][i]) as f64 / 1e9)
                    .sum();
                let affine = group.t_a + group.n_a * dt;
                let slack = match group.direction {
                    BoundDirection::Upper => affine - ta,
                    BoundDirection::Lower => ta - affine,
                };
                audit.update(slack, window);
            }
        }
    }

    let graph_admissible = signal.is_graph_admissible(graph);
    let impulse: Vec<Option<InequalityAudit>> =
        impulse.into_iter().map(|a| a.map(InequalityAudit::finish)).collect();
    let activation: Vec<InequalityAudit> =
        activation.into_iter().map(InequalityAudit::finish).collect();
    let switching_upper = switching_upper.map(InequalityAudit::finish);
    let switching_lower = switching_lower.map(InequalityAudit::finish);

    let mut report = AuditReport {
        graph_admissible,
        impulse,
        activation,
        switching_upper,
        switching_lower,
        passed: false,
    };
    report.passed = report.graph_admissible
        && report.impulse.iter().flatten().all(|a| a.satisfied)
        && report.activation.iter().all(|a| a.satisfied)
        && report.switching_ok();
    report
}
