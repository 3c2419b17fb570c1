//! Constructive generation of admissible hybrid signals.
//!
//! The generator builds a duty-cycled base pattern and verifies it with the
//! audit before returning:
//!
//! 1. target activation fractions come from the declared activation groups
//!    (equal split inside a group) or default to uniform;
//! 2. a closed walk through the switching edges visiting every active mode
//!    fixes the cycle order; per-occurrence durations are the fractions of
//!    a cycle period chosen small enough that single-run activation
//!    deviations stay inside each group's additive budget and every
//!    inter-switch gap respects the targeted switching direction;
//! 3. self impulses are placed by activation offset: modes whose impulse
//!    count is bounded from below get impulses at half their dwell-time
//!    spacing, modes bounded from above get them at a safety factor above
//!    it;
//! 4. the whole pattern is phase-shifted by a seeded offset (and, in the
//!    randomized style, cycle periods and impulse offsets are jittered and
//!    destabilizing impulses randomly thinned);
//! 5. the audit must pass, otherwise the pattern is tightened and rebuilt a
//!    bounded number of times.
//!
//! When both switching directions are declared the generator targets the
//! lower one: certificates built from combined weights below one require
//! it, and it composes with tight activation budgets.

use rand::Rng as _;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    BoundDirection, ConstraintProfile, EventKind, HybridSignal, ImpulseAdt, JumpGraph,
    SignalEvent, Time,
};

use super::audit::audit_signal;

/// Scheduling flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalStyle {
    /// Deterministic duty cycle with a seeded phase shift.
    Periodic,
    /// Seeded per-cycle period jitter and impulse thinning on top of the
    /// duty cycle, greedily tightened until the audit passes.
    Randomized,
}

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("horizon must be positive")]
    EmptyHorizon,
    #[error("no closed walk through the switching edges covers the active modes")]
    NoModeCycle,
    #[error("profile appears infeasible: {0}")]
    InfeasibleProfile(String),
}

/// Fraction of an additive budget the base pattern may consume; the rest
/// absorbs rounding and jitter.
const BUDGET_SAFETY: f64 = 0.82;

/// The pattern keeps its times on a one-microsecond grid.
const GRID: i64 = 1_000;

struct CyclePlan {
    /// Cycle mode order.
    order: Vec<usize>,
    /// Duration share of each occurrence (sums to one).
    share: Vec<f64>,
    /// Base cycle period in ticks.
    period: i64,
    /// Per-mode impulse activation spacing in ticks (None: no impulses).
    impulse_spacing: Vec<Option<i64>>,
    /// Per-mode leading offset factor relative to the spacing.
    impulse_lead: Vec<f64>,
    /// Modes whose impulses are optional (upper-bounded direction).
    impulse_optional: Vec<bool>,
}

fn mode_fractions(profile: &ConstraintProfile, modes: usize) -> Vec<f64> {
    if profile.activation_groups.is_empty() {
        return vec![1.0 / modes as f64; modes];
    }
    let mut fractions = vec![0.0; modes];
    for group in &profile.activation_groups {
        if group.modes.is_empty() {
            continue;
        }
        let share = group.n_a / group.modes.len() as f64;
        for &i in &group.modes {
            fractions[i] = share;
        }
    }
    fractions
}

/// Searches for a closed walk covering `active`: breadth-first over
/// `(node, covered-set)` states with predecessor tracking, so the state
/// space is at most `modes * 2^modes`.
fn closed_cover_walk(graph: &JumpGraph, active: &[usize]) -> Option<Vec<usize>> {
    use std::collections::{BTreeMap, BTreeSet, VecDeque};
    if active.len() == 1 {
        return Some(vec![active[0]]);
    }
    let active_set: BTreeSet<usize> = active.iter().copied().collect();
    let start = active[0];
    let full: u64 = active.iter().map(|&i| 1u64 << i).sum();
    let mut parent: BTreeMap<(usize, u64), (usize, u64)> = BTreeMap::new();
    let mut queue = VecDeque::new();
    let initial = (start, 1u64 << start);
    parent.insert(initial, initial);
    queue.push_back(initial);
    while let Some(state @ (node, covered)) = queue.pop_front() {
        for &(from, to) in &graph.edges {
            if from != node || !active_set.contains(&to) {
                continue;
            }
            if to == start && covered == full {
                // Reconstruct the walk backwards from `state`.
                let mut walk = Vec::new();
                let mut cursor = state;
                loop {
                    walk.push(cursor.0);
                    let prev = parent[&cursor];
                    if prev == cursor {
                        break;
                    }
                    cursor = prev;
                }
                walk.reverse();
                return Some(walk);
            }
            let next = (to, covered | (1u64 << to));
            if let std::collections::btree_map::Entry::Vacant(slot) = parent.entry(next) {
                slot.insert(state);
                queue.push_back(next);
            }
        }
    }
    None
}

fn round_down_to_grid(ticks: i64) -> i64 {
    (ticks / GRID) * GRID
}

struct PlanParams {
    period_shrink: f64,
    impulse_tighten: f64,
    keep_optional_impulses: bool,
}

fn build_plan(
    profile: &ConstraintProfile,
    graph: &JumpGraph,
    horizon: Time,
    params: &PlanParams,
) -> Result<CyclePlan, GenerateError> {
    let modes = graph.mode_count;
    let fractions = mode_fractions(profile, modes);
    let active: Vec<usize> = (0..modes).filter(|&i| fractions[i] > 0.0).collect();
    if active.is_empty() {
        return Err(GenerateError::InfeasibleProfile(
            "every mode has a zero activation share".to_string(),
        ));
    }

    let order = closed_cover_walk(graph, &active).ok_or(GenerateError::NoModeCycle)?;
    let mut occurrences = vec![0usize; modes];
    for &m in &order {
        occurrences[m] += 1;
    }
    let share: Vec<f64> =
        order.iter().map(|&m| fractions[m] / occurrences[m] as f64).collect();
    let total_share: f64 = share.iter().sum();
    let share: Vec<f64> = share.iter().map(|s| s / total_share).collect();

    // Cycle-period ceiling from the activation budgets: a single
    // continuous run of a partially-active group drifts by
    // (1 - F) * run length against its affine bound.
    let mut period_max = horizon.as_secs_f64().min(1.0);
    for group in &profile.activation_groups {
        let f_group: f64 = group.modes.iter().map(|&i| fractions[i]).sum();
        if f_group <= 0.0 || f_group >= 1.0 {
            continue;
        }
        let budget = group.t_a.abs() * BUDGET_SAFETY;
        if budget <= 0.0 {
            return Err(GenerateError::InfeasibleProfile(format!(
                "activation group over modes {:?} has no additive slack",
                group.modes
            )));
        }
        period_max = period_max.min(budget / ((1.0 - f_group) * f_group));
    }

    let switches_per_cycle = if order.len() > 1 { order.len() as f64 } else { 0.0 };
    let target_lower = profile.switching_adt.lower.is_some() && switches_per_cycle > 0.0;
    let mut period_min = 0.0_f64;
    if target_lower {
        let pair = profile.switching_adt.lower.unwrap();
        if pair.t_s.is_finite() {
            // Rate at least one switch per dwell time, and no switch-free
            // stretch beyond the additive grace.
            period_max = period_max.min(switches_per_cycle * pair.t_s);
            let gap_max = -pair.n0 * pair.t_s;
            let max_share = share.iter().cloned().fold(0.0, f64::max);
            period_max = period_max.min(gap_max / max_share * 0.999);
        }
    } else if let Some(pair) = profile.switching_adt.upper {
        if switches_per_cycle > 0.0 {
            // Every gap at least the dwell time (covered by the additive
            // grace of at least one) and the long-run rate below it.
            let min_share = share.iter().cloned().fold(f64::INFINITY, f64::min);
            period_min = (pair.t_s * 1.05 / min_share).max(switches_per_cycle * pair.t_s * 1.05);
        }
    }

    let mut period = period_max * params.period_shrink;
    if period_min > 0.0 {
        if period_min > period_max {
            return Err(GenerateError::InfeasibleProfile(format!(
                "switching gaps of at least {period_min:.4} conflict with the activation budget cap {period_max:.4}"
            )));
        }
        period = period.max(period_min);
    }
    let period_ticks = round_down_to_grid((period * 1e9) as i64);
    if period_ticks < GRID {
        return Err(GenerateError::InfeasibleProfile(
            "activation budgets force a sub-microsecond cycle".to_string(),
        ));
    }

    let mut impulse_spacing = vec![None; modes];
    let mut impulse_lead = vec![0.5; modes];
    let mut impulse_optional = vec![false; modes];
    for i in 0..modes {
        if !graph.self_loops.contains(&i) {
            continue;
        }
        let Some(ImpulseAdt { n0, t_j, direction }) = profile.impulse_adt.get(i).copied().flatten()
        else {
            continue;
        };
        match direction {
            BoundDirection::Lower => {
                // Impulses are mandatory: keep activation runs well below
                // both the dwell time and the additive grace.
                let cap = if t_j.is_finite() { t_j.min(-n0 * t_j) } else { f64::INFINITY };
                if cap.is_finite() {
                    let spacing = cap * 0.5 * params.impulse_tighten;
                    impulse_spacing[i] = Some(((spacing * 1e9) as i64).max(GRID));
                    impulse_lead[i] = 0.5;
                }
            }
            BoundDirection::Upper => {
                if params.keep_optional_impulses && t_j.is_finite() {
                    let spacing = t_j * 1.3;
                    impulse_spacing[i] = Some(((spacing * 1e9) as i64).max(GRID));
                    impulse_lead[i] = 0.7;
                    impulse_optional[i] = true;
                }
            }
        }
    }

    Ok(CyclePlan {
        order,
        share,
        period: period_ticks,
        impulse_spacing,
        impulse_lead,
        impulse_optional,
    })
}

/// Local (within-cycle) events of one cycle instance of length
/// `period` ticks: `(offset, kind)` plus the mode layout.
fn cycle_events(
    plan: &CyclePlan,
    profile: &ConstraintProfile,
    period: i64,
    rng: &mut ChaCha8Rng,
    randomized: bool,
) -> (Vec<i64>, Vec<(i64, EventKind)>) {
    let m = plan.order.len();
    // Durations on the grid; remainder goes to the occurrence whose mode
    // tolerates extra activation (a lower-bounded group mode if any,
    // otherwise the last occurrence).
    let mut durations: Vec<i64> =
        plan.share.iter().map(|s| round_down_to_grid((s * period as f64) as i64)).collect();
    let assigned: i64 = durations.iter().sum();
    let mut sink = m - 1;
    for (q, &mode) in plan.order.iter().enumerate() {
        let in_lower_group = profile
            .activation_groups
            .iter()
            .any(|g| g.direction == BoundDirection::Lower && g.modes.contains(&mode));
        if in_lower_group {
            sink = q;
            break;
        }
    }
    durations[sink] += period - assigned;

    let mut events = Vec::new();
    let mut offset = 0i64;
    for (q, &mode) in plan.order.iter().enumerate() {
        if m > 1 {
            events.push((offset, EventKind::Switch(mode)));
        }
        if let Some(spacing) = plan.impulse_spacing[mode] {
            if plan.impulse_optional[mode] && randomized && rng.random_bool(0.3) {
                offset += durations[q];
                continue;
            }
            let lead = (plan.impulse_lead[mode] * spacing as f64) as i64;
            let mut local = lead;
            let tail_margin = if plan.impulse_optional[mode] {
                ((1.0 - plan.impulse_lead[mode]) * spacing as f64) as i64
            } else {
                0
            };
            while local < durations[q] - tail_margin {
                let jitter = if randomized {
                    let span = (spacing / 20).max(1);
                    rng.random_range(-span..=span)
                } else {
                    0
                };
                let at = (local + jitter).clamp(GRID, durations[q] - GRID);
                events.push((offset + at, EventKind::SelfImpulse));
                local += spacing;
            }
        }
        offset += durations[q];
    }
    events.sort_by_key(|&(t, _)| t);
    events.dedup_by_key(|&mut (t, _)| t);
    (durations, events)
}

fn assemble(
    plan: &CyclePlan,
    profile: &ConstraintProfile,
    graph: &JumpGraph,
    horizon: Time,
    seed: u64,
    randomized: bool,
) -> Result<HybridSignal, GenerateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = round_down_to_grid(rng.random_range(0..plan.period));
    let horizon_ticks = horizon.ticks();

    let mut events: Vec<SignalEvent> = Vec::new();
    let mut initial_mode = None;
    let mut base = -phase;
    while base <= horizon_ticks {
        let period = if randomized {
            round_down_to_grid((plan.period as f64 * rng.random_range(0.85..1.0)) as i64)
                .max(GRID * plan.order.len() as i64)
        } else {
            plan.period
        };
        let (durations, local_events) = cycle_events(plan, profile, period, &mut rng, randomized);
        if initial_mode.is_none() {
            // The first cycle starts at -phase; find the mode active at 0.
            let mut acc = base;
            for (q, &mode) in plan.order.iter().enumerate() {
                if acc <= 0 && 0 < acc + durations[q] {
                    initial_mode = Some(mode);
                }
                acc += durations[q];
            }
            if initial_mode.is_none() {
                initial_mode = Some(plan.order[0]);
            }
        }
        for &(local, kind) in &local_events {
            let t = base + local;
            if t > 0 && t <= horizon_ticks {
                events.push(SignalEvent { time: Time::from_ticks(t), kind });
            }
        }
        base += period;
    }

    events.sort_by_key(|e| e.time);
    events.dedup_by_key(|e| e.time);
    // Drop switches that restate the active mode (can appear at the seam
    // when the phase lands exactly on a cycle boundary).
    let mut mode = initial_mode.unwrap_or(plan.order[0]);
    let mut cleaned = Vec::with_capacity(events.len());
    for ev in events {
        match ev.kind {
            EventKind::Switch(to) if to == mode => continue,
            EventKind::Switch(to) => {
                mode = to;
                cleaned.push(ev);
            }
            EventKind::SelfImpulse => cleaned.push(ev),
        }
    }

    HybridSignal::new(initial_mode.unwrap_or(plan.order[0]), cleaned, horizon, graph.mode_count)
        .map_err(|e| GenerateError::InfeasibleProfile(e.to_string()))
}

/// Generates an admissible signal for `profile` over `(0, horizon]`.
///
/// The returned signal has passed [`audit_signal`]: jump-graph
/// admissibility, every declared impulse and activation inequality, and at
/// least one declared switching direction in full.
pub fn generate_signal(
    profile: &ConstraintProfile,
    graph: &JumpGraph,
    horizon: Time,
    seed: u64,
    style: SignalStyle,
) -> Result<HybridSignal, GenerateError> {
    if horizon.ticks() < 0 {
        return Err(GenerateError::EmptyHorizon);
    }
    if horizon.ticks() == 0 {
        // Zero-length run: a single initial mode and no events. All window
        // inequalities degenerate to their additive graces.
        let params =
            PlanParams { period_shrink: 1.0, impulse_tighten: 1.0, keep_optional_impulses: false };
        let plan = build_plan(profile, graph, Time::from_ticks(1_000_000_000), &params)?;
        return HybridSignal::new(plan.order[0], vec![], horizon, graph.mode_count)
            .map_err(|e| GenerateError::InfeasibleProfile(e.to_string()));
    }
    let randomized = style == SignalStyle::Randomized;
    let mut params = PlanParams {
        period_shrink: 1.0,
        impulse_tighten: 1.0,
        keep_optional_impulses: true,
    };
    let mut last_failure = String::new();
    for attempt in 0..6 {
        let plan = build_plan(profile, graph, horizon, &params)?;
        let signal = assemble(&plan, profile, graph, horizon, seed, randomized)?;
        let report = audit_signal(&signal, profile, graph);
        if report.passed {
            return Ok(signal);
        }
        last_failure = report
            .worst_violation()
            .map(|v| format!("{} (slack {:.3e})", v.name, v.min_slack))
            .unwrap_or_else(|| "switching directions".to_string());
        params.period_shrink *= 0.8;
        params.impulse_tighten *= 0.6;
        if attempt >= 1 {
            params.keep_optional_impulses = false;
        }
    }
    Err(GenerateError::InfeasibleProfile(last_failure))
}
