//! Hybrid signals: event times, switching signal and counting machinery.
//!
//! A signal is determined by an initial mode, a strictly increasing sequence
//! of event times and, per event, whether the event is a switch to another
//! mode or a self impulse within the active mode. The switching signal is
//! right-continuous: at a switch time `tau` the new mode is already active at
//! `tau`. Counters count events over the half-open interval `(t0, t]` while
//! activation times integrate over `[t0, t]`.

use serde::{Deserialize, Serialize};

use super::time::Time;
use super::JumpGraph;

/// What happens at one event time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "to")]
pub enum EventKind {
    /// Mode change along a jump-graph edge; the payload is the target mode.
    Switch(usize),
    /// State jump through the active mode's self jump map.
    SelfImpulse,
}

/// One event of a hybrid signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalEvent {
    pub time: Time,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// A finite-horizon admissible hybrid signal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridSignal {
    pub initial_mode: usize,
    pub events: Vec<SignalEvent>,
    /// Declared horizon; events beyond it are not represented.
    pub horizon: Time,
}

/// Counter values over a window, exact on the tick grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalCounters {
    /// Number of switching times in `(t0, t]`.
    pub n_switch: u64,
    /// Number of nonswitching impulse times in `(t0, t]`.
    pub n_self: u64,
    /// Per-mode self-impulse counts in `(t0, t]`.
    pub per_mode_impulses: Vec<u64>,
    /// Per-mode activation time over `[t0, t]`, in ticks.
    pub activation: Vec<i64>,
}

impl SignalCounters {
    pub fn total(&self) -> u64 {
        self.n_switch + self.n_self
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SignalError {
    #[error("event times must be strictly increasing and positive")]
    NonIncreasingEvents,
    #[error("event at {0} switches to the currently active mode {1}")]
    SwitchToSelf(Time, usize),
    #[error("mode index {0} out of range for {1} modes")]
    ModeOutOfRange(usize, usize),
    #[error("window end {t} precedes window start {t0}")]
    ReversedWindow { t0: Time, t: Time },
    #[error("empty schedule")]
    EmptySchedule,
}

impl HybridSignal {
    /// Validates ordering and mode ranges, returning the signal.
    pub fn new(
        initial_mode: usize,
        events: Vec<SignalEvent>,
        horizon: Time,
        mode_count: usize,
    ) -> Result<Self, SignalError> {
        if initial_mode >= mode_count {
            return Err(SignalError::ModeOutOfRange(initial_mode, mode_count));
        }
        let mut prev = Time::ZERO;
        let mut mode = initial_mode;
        for ev in &events {
            if ev.time <= prev {
                return Err(SignalError::NonIncreasingEvents);
            }
            prev = ev.time;
            if let EventKind::Switch(to) = ev.kind {
                if to >= mode_count {
                    return Err(SignalError::ModeOutOfRange(to, mode_count));
                }
                if to == mode {
                    return Err(SignalError::SwitchToSelf(ev.time, mode));
                }
                mode = to;
            }
        }
        Ok(HybridSignal { initial_mode, events, horizon })
    }

    /// Active mode at time `t` (right-continuous).
    pub fn mode_at(&self, t: Time) -> usize {
        let mut mode = self.initial_mode;
        for ev in &self.events {
            if ev.time > t {
                break;
            }
            if let EventKind::Switch(to) = ev.kind {
                mode = to;
            }
        }
        mode
    }

    /// Mode just before each event, paired with the mode right after it.
    pub fn event_edges(&self) -> Vec<(Time, usize, usize)> {
        let mut mode = self.initial_mode;
        self.events
            .iter()
            .map(|ev| {
                let before = mode;
                if let EventKind::Switch(to) = ev.kind {
                    mode = to;
                }
                (ev.time, before, mode)
            })
            .collect()
    }

    /// Checks that every switch follows an edge of `graph` and every self
    /// impulse occurs in a mode with a declared self loop.
    pub fn is_graph_admissible(&self, graph: &JumpGraph) -> bool {
        let mut mode = self.initial_mode;
        if mode >= graph.mode_count {
            return false;
        }
        for ev in &self.events {
            match ev.kind {
                EventKind::Switch(to) => {
                    if !graph.edges.contains(&(mode, to)) {
                        return false;
                    }
                    mode = to;
                }
                EventKind::SelfImpulse => {
                    if !graph.self_loops.contains(&mode) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// The sub-signal observed when restarting at `t0`: initial mode
    /// `mode_at(t0)` and only the events strictly after `t0`. A solution
    /// restarted at an event time starts with a flow, so the event at `t0`
    /// itself is dropped.
    pub fn restarted_at(&self, t0: Time) -> HybridSignal {
        HybridSignal {
            initial_mode: self.mode_at(t0),
            events: self.events.iter().copied().filter(|ev| ev.time > t0).collect(),
            horizon: self.horizon,
        }
    }

    /// Builds one straight pass over the events; see [`signal_counters`].
    fn count_window(&self, t0: Time, t: Time, mode_count: usize) -> SignalCounters {
        let mut counters = SignalCounters {
            n_switch: 0,
            n_self: 0,
            per_mode_impulses: vec![0; mode_count],
            activation: vec![0; mode_count],
        };
        let mut mode = self.initial_mode;
        let mut seg_start = Time::ZERO;
        for ev in &self.events {
            if ev.time > t {
                break;
            }
            let overlap = segment_overlap(seg_start, ev.time, t0, t);
            counters.activation[mode] += overlap;
            match ev.kind {
                EventKind::Switch(to) => {
                    if ev.time > t0 {
                        counters.n_switch += 1;
                    }
                    mode = to;
                }
                EventKind::SelfImpulse => {
                    if ev.time > t0 {
                        counters.n_self += 1;
                        counters.per_mode_impulses[mode] += 1;
                    }
                }
            }
            seg_start = ev.time;
        }
        counters.activation[mode] += segment_overlap(seg_start, t, t0, t);
        counters
    }
}

fn segment_overlap(seg_start: Time, seg_end: Time, t0: Time, t: Time) -> i64 {
    let lo = seg_start.max(t0).ticks();
    let hi = seg_end.min(t).ticks();
    (hi - lo).max(0)
}

/// Counts switching/nonswitching events over `(t0, t]` and integrates the
/// per-mode activation times over `[t0, t]`. The activation entries sum to
/// `t - t0` exactly in ticks, and per-mode impulse counts sum to the
/// nonswitching total.
pub fn signal_counters(
    signal: &HybridSignal,
    t0: Time,
    t: Time,
    mode_count: usize,
) -> Result<SignalCounters, SignalError> {
    if t < t0 {
        return Err(SignalError::ReversedWindow { t0, t });
    }
    Ok(signal.count_window(t0, t, mode_count))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_switches() -> HybridSignal {
        // Switch 0 -> 1 at t = 1 and 1 -> 0 at t = 2.
        HybridSignal::new(
            0,
            vec![
                SignalEvent { time: Time::parse_decimal("1").unwrap(), kind: EventKind::Switch(1) },
                SignalEvent { time: Time::parse_decimal("2").unwrap(), kind: EventKind::Switch(0) },
            ],
            Time::parse_decimal("3").unwrap(),
            2,
        )
        .unwrap()
    }

    #[test]
    fn empty_window_counts_nothing() {
        let sig = two_switches();
        let t0 = Time::parse_decimal("2.5").unwrap();
        let t = Time::parse_decimal("3").unwrap();
        let c = signal_counters(&sig, t0, t, 2).unwrap();
        assert_eq!(c.n_switch, 0);
        assert_eq!(c.n_self, 0);
        assert_eq!(c.per_mode_impulses, vec![0, 0]);
        assert_eq!(c.activation[0], (t - t0).ticks());
        assert_eq!(c.activation[1], 0);
    }

    #[test]
    fn boundary_times_use_half_open_interval() {
        let sig = two_switches();
        let c = signal_counters(&sig, Time::ZERO, Time::parse_decimal("2").unwrap(), 2).unwrap();
        assert_eq!(c.n_switch, 2);
        assert_eq!(c.n_self, 0);
        // t0 = 1 excludes the event at 1.
        let c = signal_counters(
            &sig,
            Time::parse_decimal("1").unwrap(),
            Time::parse_decimal("2").unwrap(),
            2,
        )
        .unwrap();
        assert_eq!(c.n_switch, 1);
    }

    #[test]
    fn activation_partitions_elapsed_time() {
        let sig = two_switches();
        let t0 = Time::parse_decimal("0.5").unwrap();
        let t = Time::parse_decimal("2.5").unwrap();
        let c = signal_counters(&sig, t0, t, 2).unwrap();
        assert_eq!(c.activation.iter().sum::<i64>(), (t - t0).ticks());
        assert_eq!(c.activation[0], Time::parse_decimal("1").unwrap().ticks());
        assert_eq!(c.activation[1], Time::parse_decimal("1").unwrap().ticks());
    }

    #[test]
    fn counters_are_additive_over_adjacent_windows() {
        let sig = two_switches();
        let t0 = Time::ZERO;
        let t1 = Time::parse_decimal("1.5").unwrap();
        let t2 = Time::parse_decimal("3").unwrap();
        let full = signal_counters(&sig, t0, t2, 2).unwrap();
        let a = signal_counters(&sig, t0, t1, 2).unwrap();
        let b = signal_counters(&sig, t1, t2, 2).unwrap();
        assert_eq!(full.n_switch, a.n_switch + b.n_switch);
        assert_eq!(full.activation[0], a.activation[0] + b.activation[0]);
        assert_eq!(full.activation[1], a.activation[1] + b.activation[1]);
    }

    #[test]
    fn rejects_reversed_window() {
        let sig = two_switches();
        assert!(signal_counters(&sig, Time::parse_decimal("2").unwrap(), Time::ZERO, 2).is_err());
    }

    #[test]
    fn restart_drops_the_event_at_the_restart_time() {
        let sig = two_switches();
        let sub = sig.restarted_at(Time::parse_decimal("1").unwrap());
        assert_eq!(sub.initial_mode, 1);
        assert_eq!(sub.events.len(), 1);
    }
}
