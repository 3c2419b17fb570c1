//! Certificate assembly for strong exponential stability.
//!
//! The strong bound `|x(t)| <= K e^{-lambda (t - t0 + n(t, t0))} |x0|` is
//! produced from per-mode rates and switching weights:
//!
//! - per-mode balancing: `lambda_i(c) = lambda_bar(i) + c ln(r_bar(i,i)) / T_J^i`
//!   and `r_i(c) = (1 - c) ln(r_bar(i,i))` split each mode's self-impulse
//!   effect between its activation time and its impulse count;
//! - switching balancing: with `R = R(L)` the combined weight at sequence
//!   length `L`, `lambda_s = c_s ln(R) / (T_S L)` and
//!   `r_s = (1 - c_s) ln(R) / L`, where `(T_S, N_S)` come from the declared
//!   switching dwell-time pair matching the sign of `ln R`;
//! - aggregation over activation groups gives `lambda_J`, `r_J` and the
//!   offset `C = C0 + C1`, and `lambda_0 = -max{lambda_J + lambda_s, r_s, r_J}`;
//! - finally `K = e^{C/m} (max K_upper / min K_lower)^{1/m}` and
//!   `lambda = lambda_0 / m`.
//!
//! A certificate with `lambda_0 <= 0` is an ordinary value, not an error:
//! divergent bounds are still useful in pointwise-minimum combinations.

use serde::{Deserialize, Serialize};

use crate::jumpgraph::{JumpGraphError, WeightedJumpGraph};
use crate::lyapunov::LyapunovData;
use crate::model::{signal_counters, ConstraintProfile, HybridSignal, Time};

#[derive(Debug, thiserror::Error)]
pub enum CertifyError {
    #[error("no admissible walk of length {0} exists in the jump graph")]
    NoWalk(u64),
    #[error("the {0} switching dwell-time pair is required but not declared")]
    MissingSwitchingPair(&'static str),
    #[error("mode {0} needs an impulse dwell-time pair (its self gain is not neutral)")]
    MissingImpulsePair(usize),
    #[error(
        "mode {mode}: impulse bound direction {declared:?} contradicts its self gain {self_gain} \
         (expanding gains need an upper bound, shrinking gains a lower bound)"
    )]
    ImpulseDirectionMismatch { mode: usize, declared: crate::model::BoundDirection, self_gain: f64 },
    #[error("activation groups are required for systems with more than one mode")]
    MissingActivationGroups,
    #[error(
        "every self gain is neutral; no impulse-count decay is available — \
         use the no-self-impulse certificate"
    )]
    AllSelfNeutral,
    #[error("the no-self-impulse certificate requires identity self jumps")]
    SelfImpulsesPresent,
    #[error("the no-self-impulse certificate requires c_s in [0, 1), got {0}")]
    SwitchCoefficientOutOfRange(f64),
    #[error("coefficient target {target:?} inconsistent with lambda_i(1) = {lambda_one}")]
    TargetMismatch { target: StabilityTarget, lambda_one: f64 },
    #[error("certificate is not valid; the requested quantity needs lambda_0 > 0")]
    InvalidCertificate,
    #[error("no certificates supplied")]
    EmptyCombination,
    #[error(transparent)]
    Graph(#[from] JumpGraphError),
}

/// Coefficient configuration for one certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertConfig {
    /// Mode-sequence length `L`; zero is the no-switching special case.
    pub sequence_length: u64,
    pub c_switch: f64,
    pub c_mode: Vec<f64>,
}

/// Side conditions backing the certificate construction. A
/// violated hypothesis does not abort certification — the resulting
/// `lambda_0` is non-positive and the certificate reports itself invalid —
/// but callers can route such configurations through the direct inequality
/// check instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// `r_s(c_s, L) < 0` (strict, zero tolerance).
    pub switching_rate_negative: bool,
    /// Per mode: `r_i(c_i) < 0`, or the self gain is neutral.
    pub mode_rates_negative: Vec<bool>,
}

/// An assembled certificate. `valid` holds exactly when `lambda_0 > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub config: CertConfig,
    pub combined_weight: f64,
    pub hat_combined_weight: f64,
    pub t_s: f64,
    pub n_s: f64,
    pub lambda_s: f64,
    pub r_s: f64,
    pub lambda_mode: Vec<f64>,
    pub r_mode: Vec<f64>,
    pub lambda_j: f64,
    /// Worst balanced impulse rate over modes with non-neutral self gain;
    /// `None` when every self gain is neutral (no-self-impulse route).
    pub r_j: Option<f64>,
    pub c0: f64,
    pub c1: f64,
    pub c: f64,
    pub lambda0: f64,
    pub k: f64,
    pub lambda: f64,
    pub exponent: u32,
    pub valid: bool,
    pub hypothesis: HypothesisReport,
}

impl Certificate {
    /// Envelope value `K e^{-lambda s} r` for `s = t - t0 + n(t, t0)`.
    pub fn envelope(&self, r: f64, s: f64) -> f64 {
        self.log_envelope(s).exp() * r
    }

    pub fn log_envelope(&self, s: f64) -> f64 {
        self.k.ln() - self.lambda * s
    }
}

/// Sign target for coefficient selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityTarget {
    /// `lambda_i(c) < 0` together with `r_i(c) < 0`.
    Stable,
    /// `lambda_i(c) >= 0` tolerated while `r_i(c) < 0`.
    Unstable,
}

/// Balanced activation rate `lambda_i(c)`; a neutral self gain and an
/// infinite dwell time both zero out the impulse term.
pub fn lambda_mode(lambda_bar: f64, r_bar_self: f64, t_j: f64, c: f64) -> f64 {
    if r_bar_self == 1.0 || t_j.is_infinite() || c == 0.0 {
        lambda_bar
    } else {
        lambda_bar + c * r_bar_self.ln() / t_j
    }
}

/// Balanced impulse rate `r_i(c)`.
pub fn r_mode(r_bar_self: f64, c: f64) -> f64 {
    if r_bar_self == 1.0 {
        0.0
    } else {
        (1.0 - c) * r_bar_self.ln()
    }
}

/// `lambda_i(1)`, the rate deciding whether a mode counts as stabilizing.
pub fn lambda_mode_one(
    lyap: &LyapunovData,
    profile: &ConstraintProfile,
    mode: usize,
) -> Result<f64, CertifyError> {
    let r_self = lyap.self_gain(mode);
    if r_self == 1.0 {
        return Ok(lyap.flow_rate[mode]);
    }
    let t_j = profile.impulse_t_j(mode).ok_or(CertifyError::MissingImpulsePair(mode))?;
    Ok(lambda_mode(lyap.flow_rate[mode], r_self, t_j, 1.0))
}

/// Splits the mode set into `(unstable, stable)` by the sign of
/// `lambda_i(1)`; the boundary `lambda_i(1) = 0` counts as unstable.
pub fn mode_partition(
    lyap: &LyapunovData,
    profile: &ConstraintProfile,
) -> Result<(Vec<usize>, Vec<usize>), CertifyError> {
    let mut unstable = Vec::new();
    let mut stable = Vec::new();
    for i in 0..lyap.mode_count() {
        if lambda_mode_one(lyap, profile, i)? < 0.0 {
            stable.push(i);
        } else {
            unstable.push(i);
        }
    }
    Ok((unstable, stable))
}

/// The open interval of balancing coefficients `c` for which `r_i(c) < 0`
/// and `lambda_i(c)` has the targeted sign, or `None` when no such
/// coefficient exists (neutral self gain). The upper endpoint may be
/// infinite.
pub fn admissible_c_interval(
    lambda_bar: f64,
    r_bar_self: f64,
    t_j: f64,
    target: StabilityTarget,
) -> Result<Option<(f64, f64)>, CertifyError> {
    if r_bar_self == 1.0 {
        return Ok(None);
    }
    let log_r = r_bar_self.ln();
    let lambda_one = lambda_mode(lambda_bar, r_bar_self, t_j, 1.0);
    let mismatch = || CertifyError::TargetMismatch { target, lambda_one };
    match target {
        StabilityTarget::Stable => {
            if lambda_one >= 0.0 {
                return Err(mismatch());
            }
            if log_r < 0.0 {
                if lambda_bar <= 0.0 {
                    Ok(Some((0.0, 1.0)))
                } else {
                    Ok(Some((-lambda_bar * t_j / log_r, 1.0)))
                }
            } else {
                // log_r > 0 forces lambda_bar < 0 here.
                Ok(Some((1.0, -lambda_bar * t_j / log_r)))
            }
        }
        StabilityTarget::Unstable => {
            if lambda_one < 0.0 {
                return Err(mismatch());
            }
            if log_r > 0.0 {
                Ok(Some((1.0, f64::INFINITY)))
            } else if lambda_bar > 0.0 {
                Ok(Some((0.0, 1.0)))
            } else {
                // Only reachable on the degenerate boundary lambda_i(1) = 0
                // with an infinite dwell time; no coefficient helps.
                Ok(None)
            }
        }
    }
}

/// Switching rates and the `(T_S, N_S)` pair for a combined weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchingRates {
    pub lambda_s: f64,
    pub r_s: f64,
    pub t_s: f64,
    pub n_s: f64,
}

/// Evaluates the switching rates for `ln R(L)` under the declared pair
/// matching the weight's sign: the upper pair when `R(L) >= 1`, the lower
/// pair otherwise.
pub fn switching_rates(
    log_r: f64,
    length: u64,
    profile: &ConstraintProfile,
    c_switch: f64,
) -> Result<SwitchingRates, CertifyError> {
    if length == 0 {
        return Ok(SwitchingRates { lambda_s: 0.0, r_s: 0.0, t_s: f64::INFINITY, n_s: 0.0 });
    }
    let l = length as f64;
    let (t_s, n_s) = if log_r >= 0.0 {
        let pair =
            profile.switching_adt.upper.ok_or(CertifyError::MissingSwitchingPair("upper"))?;
        (pair.t_s, c_switch * pair.n0)
    } else {
        let pair =
            profile.switching_adt.lower.ok_or(CertifyError::MissingSwitchingPair("lower"))?;
        (pair.t_s, c_switch * pair.n0 - l)
    };
    let lambda_s =
        if t_s.is_infinite() || c_switch == 0.0 { 0.0 } else { c_switch * log_r / (t_s * l) };
    let r_s = (1.0 - c_switch) * log_r / l;
    Ok(SwitchingRates { lambda_s, r_s, t_s, n_s })
}

struct GroupTerms {
    c0: f64,
    lambda_j: f64,
}

/// `C0 = sum_j T_a^j max_{i in I_j} rate(i)` and
/// `lambda_J = sum_j N_a^j max_{i in I_j} rate(i)`.
fn group_terms(
    profile: &ConstraintProfile,
    mode_count: usize,
    rate: &[f64],
) -> Result<GroupTerms, CertifyError> {
    if profile.activation_groups.is_empty() {
        if mode_count == 1 {
            // A single always-active mode satisfies t_a = t - t0 exactly, so
            // the implicit group (N_a = 1, T_a = 0) is admissible.
            return Ok(GroupTerms { c0: 0.0, lambda_j: rate[0] });
        }
        return Err(CertifyError::MissingActivationGroups);
    }
    let mut c0 = 0.0;
    let mut lambda_j = 0.0;
    for group in &profile.activation_groups {
        let peak = group.modes.iter().map(|&i| rate[i]).fold(f64::NEG_INFINITY, f64::max);
        c0 += group.t_a * peak;
        lambda_j += group.n_a * peak;
    }
    Ok(GroupTerms { c0, lambda_j })
}

#[allow(clippy::too_many_arguments)]
fn finish_certificate(
    lyap: &LyapunovData,
    config: CertConfig,
    log_r: f64,
    log_hat: f64,
    rates: SwitchingRates,
    lambda_modes: Vec<f64>,
    r_modes: Vec<f64>,
    terms: GroupTerms,
    r_j: Option<f64>,
    c1_impulse: f64,
) -> Certificate {
    let l = config.sequence_length;
    let switch_terms = if l == 0 { 0.0 } else { rates.n_s * log_r / l as f64 + log_hat };
    let c1 = c1_impulse + switch_terms;
    let c = terms.c0 + c1;
    let mut worst = terms.lambda_j + rates.lambda_s;
    if l > 0 {
        worst = worst.max(rates.r_s);
    }
    if let Some(r_j) = r_j {
        worst = worst.max(r_j);
    }
    let lambda0 = -worst;
    let m = lyap.exponent;
    let k = (c / m as f64).exp() * lyap.max_condition_ratio().powf(1.0 / m as f64);
    let lambda = lambda0 / m as f64;
    let hypothesis = HypothesisReport {
        switching_rate_negative: l == 0 || rates.r_s < 0.0,
        mode_rates_negative: (0..lyap.mode_count())
            .map(|i| lyap.self_gain(i) == 1.0 || r_modes[i] < 0.0)
            .collect(),
    };
    Certificate {
        config,
        combined_weight: log_r.exp(),
        hat_combined_weight: log_hat.exp(),
        t_s: rates.t_s,
        n_s: rates.n_s,
        lambda_s: rates.lambda_s,
        r_s: rates.r_s,
        lambda_mode: lambda_modes,
        r_mode: r_modes,
        lambda_j: terms.lambda_j,
        r_j,
        c0: terms.c0,
        c1,
        c,
        lambda0,
        k,
        lambda,
        exponent: m,
        valid: lambda0 > 0.0,
        hypothesis,
    }
}

/// Assembles the general certificate (self impulses allowed).
pub fn certify_main(
    lyap: &LyapunovData,
    profile: &ConstraintProfile,
    weighted: &WeightedJumpGraph,
    config: &CertConfig,
) -> Result<Certificate, CertifyError> {
    let modes = lyap.mode_count();
    let l = config.sequence_length;
    let (log_r, log_hat) = if l == 0 {
        (0.0, 0.0)
    } else {
        let log_r = weighted.log_combined_weight(l)?.ok_or(CertifyError::NoWalk(l))?;
        (log_r, weighted.log_hat_combined_weight(l)?)
    };
    let rates = switching_rates(log_r, l, profile, config.c_switch)?;

    let mut lambda_modes = Vec::with_capacity(modes);
    let mut r_modes = Vec::with_capacity(modes);
    let mut c1_impulse = 0.0;
    let mut r_j: Option<f64> = None;
    for i in 0..modes {
        let r_self = lyap.self_gain(i);
        let c_i = config.c_mode.get(i).copied().unwrap_or(0.0);
        if r_self == 1.0 {
            lambda_modes.push(lyap.flow_rate[i]);
            r_modes.push(0.0);
            continue;
        }
        let adt = profile.impulse_adt.get(i).copied().flatten();
        let (n0, t_j) = match adt {
            Some(a) => {
                // Direction flags are declared up front while the self
                // gains arrive with the Lyapunov data; cross-check here.
                use crate::model::BoundDirection;
                let expected =
                    if r_self >= 1.0 { BoundDirection::Upper } else { BoundDirection::Lower };
                if a.direction != expected {
                    return Err(CertifyError::ImpulseDirectionMismatch {
                        mode: i,
                        declared: a.direction,
                        self_gain: r_self,
                    });
                }
                (a.n0, a.t_j)
            }
            None if c_i == 0.0 => (0.0, f64::INFINITY),
            None => return Err(CertifyError::MissingImpulsePair(i)),
        };
        lambda_modes.push(lambda_mode(lyap.flow_rate[i], r_self, t_j, c_i));
        let r_i = r_mode(r_self, c_i);
        r_modes.push(r_i);
        c1_impulse += c_i * n0 * r_self.ln();
        r_j = Some(match r_j {
            None => r_i,
            Some(prev) => prev.max(r_i),
        });
    }
    if r_j.is_none() {
        return Err(CertifyError::AllSelfNeutral);
    }

    let terms = group_terms(profile, modes, &lambda_modes)?;
    Ok(finish_certificate(
        lyap,
        config.clone(),
        log_r,
        log_hat,
        rates,
        lambda_modes,
        r_modes,
        terms,
        r_j,
        c1_impulse,
    ))
}

/// Assembles the simplified certificate for systems whose impulses occur
/// only at switching times (identity self jumps). Requires
/// `c_s in [0, 1)`; the per-mode coefficients are unused and forced to zero.
pub fn certify_no_self_impulses(
    lyap: &LyapunovData,
    profile: &ConstraintProfile,
    weighted: &WeightedJumpGraph,
    config: &CertConfig,
    self_jumps_identity: bool,
) -> Result<Certificate, CertifyError> {
    if !self_jumps_identity {
        return Err(CertifyError::SelfImpulsesPresent);
    }
    if !(0.0..1.0).contains(&config.c_switch) {
        return Err(CertifyError::SwitchCoefficientOutOfRange(config.c_switch));
    }
    let modes = lyap.mode_count();
    let l = config.sequence_length;
    let (log_r, log_hat) = if l == 0 {
        (0.0, 0.0)
    } else {
        let log_r = weighted.log_combined_weight(l)?.ok_or(CertifyError::NoWalk(l))?;
        (log_r, weighted.log_hat_combined_weight(l)?)
    };
    let rates = switching_rates(log_r, l, profile, config.c_switch)?;
    let lambda_modes: Vec<f64> = lyap.flow_rate.clone();
    let r_modes = vec![0.0; modes];
    let terms = group_terms(profile, modes, &lambda_modes)?;
    let mut config = config.clone();
    config.c_mode = vec![0.0; modes];
    Ok(finish_certificate(
        lyap, config, log_r, log_hat, rates, lambda_modes, r_modes, terms, None, 0.0,
    ))
}

/// Result of evaluating the pointwise inequality behind a certificate along
/// a concrete signal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H3Report {
    pub holds: bool,
    /// Largest value of `lhs - rhs` over the event-aligned grid; negative
    /// slack everywhere means the inequality holds with margin.
    pub worst_slack: f64,
    pub worst_window: Option<(Time, Time)>,
}

/// Checks the balanced-rate inequality
/// `lambda_s (t - t0) + r_s n_nu + sum_i [lambda_i t_a(i) + r_i n(i)]
///  <= C0 - lambda0 (t - t0 + n_mu + n_nu)`
/// for all event-aligned windows of `signal`, one-sided limits at events
/// included.
pub fn check_h3(cert: &Certificate, signal: &HybridSignal, c0: f64, lambda0: f64) -> H3Report {
    let modes = cert.lambda_mode.len();
    let mut anchors: Vec<Time> = vec![Time::ZERO];
    anchors.extend(signal.events.iter().map(|e| e.time));
    if signal.horizon > *anchors.last().unwrap() {
        anchors.push(signal.horizon);
    }

    let event_at = |at: Time| {
        signal
            .events
            .binary_search_by_key(&at, |e| e.time)
            .ok()
            .map(|idx| &signal.events[idx])
    };

    let mut worst = f64::NEG_INFINITY;
    let mut worst_window = None;
    for (a, &t0) in anchors.iter().enumerate() {
        for &t in &anchors[a..] {
            let base = signal_counters(signal, t0, t, modes).expect("ordered window");
            // One-sided limits: optionally pull the event at t0 into the
            // window (t0 -> t0^-) or push the event at t out of it
            // (t -> t^-); elapsed time and activation are continuous.
            for include_left in [false, true] {
                for include_right in [true, false] {
                    let mut n_switch = base.n_switch as f64;
                    let mut n_self = base.n_self as f64;
                    let mut per_mode: Vec<f64> =
                        base.per_mode_impulses.iter().map(|&c| c as f64).collect();
                    let mut apply = |sign: f64, at: Time| {
                        if let Some(ev) = event_at(at) {
                            match ev.kind {
                                crate::model::EventKind::Switch(_) => n_switch += sign,
                                crate::model::EventKind::SelfImpulse => {
                                    n_self += sign;
                                    per_mode[signal.mode_at(at)] += sign;
                                }
                            }
                        }
                    };
                    if include_left && t0 > Time::ZERO {
                        apply(1.0, t0);
                    }
                    if !include_right && t > t0 {
                        apply(-1.0, t);
                    }
                    if n_switch < 0.0 || n_self < 0.0 {
                        continue;
                    }
                    let dt = (t - t0).as_secs_f64();
                    let mut lhs = cert.lambda_s * dt + cert.r_s * n_switch;
                    #[allow(clippy::needless_range_loop)]
                    for i in 0..modes {
                        lhs += cert.lambda_mode[i] * base.activation[i] as f64 / 1e9
                            + cert.r_mode[i] * per_mode[i];
                    }
                    let rhs = c0 - lambda0 * (dt + n_self + n_switch);
                    let slack = lhs - rhs;
                    if slack > worst {
                        worst = slack;
                        worst_window = Some((t0, t));
                    }
                }
            }
        }
    }
    H3Report { holds: worst <= 1e-9, worst_slack: worst, worst_window }
}

/// Pointwise minimum of several certificate envelopes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinedBound {
    /// `(K, lambda)` per component.
    pub components: Vec<(f64, f64)>,
}

impl CombinedBound {
    pub fn new(certs: &[Certificate]) -> Result<Self, CertifyError> {
        if certs.is_empty() {
            return Err(CertifyError::EmptyCombination);
        }
        Ok(CombinedBound { components: certs.iter().map(|c| (c.k, c.lambda)).collect() })
    }

    /// `beta(r, s) = min_k K_k e^{-lambda_k s} r`.
    pub fn eval(&self, r: f64, s: f64) -> f64 {
        self.log_eval(s).exp() * r
    }

    pub fn log_eval(&self, s: f64) -> f64 {
        self.components
            .iter()
            .map(|&(k, lambda)| k.ln() - lambda * s)
            .fold(f64::INFINITY, f64::min)
    }

    /// The combination decays iff some component has a positive rate.
    pub fn is_decaying(&self) -> bool {
        self.components.iter().any(|&(_, lambda)| lambda > 0.0)
    }
}

/// Perturbation margin `lambda / (K e^lambda)` below which an affine
/// state-bounded perturbation preserves strong integral input-to-state
/// stability. Only meaningful for valid certificates.
pub fn iiss_margin(cert: &Certificate) -> Result<f64, CertifyError> {
    if !cert.valid {
        return Err(CertifyError::InvalidCertificate);
    }
    Ok(cert.lambda / (cert.k * cert.lambda.exp()))
}

/// Objective for coefficient sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepObjective {
    /// Largest decay rate among valid certificates.
    MaxLambda,
    /// Smallest overshoot among valid certificates.
    MinK,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub best: Certificate,
    /// True when `best` is valid; otherwise `best` is the least-invalid
    /// certificate encountered (largest `lambda_0`).
    pub found_valid: bool,
    pub evaluated: usize,
}

fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let lo = lo.max(1e-3);
    let hi = if hi.is_finite() { hi } else { 1e3 };
    let inner_lo = lo + 1e-3 * (hi - lo).min(1.0);
    let inner_hi = hi - 1e-3 * (hi - lo).min(1.0);
    if inner_hi <= inner_lo {
        return vec![0.5 * (lo + hi)];
    }
    let ratio = (inner_hi / inner_lo).powf(1.0 / (points - 1) as f64);
    (0..points).map(|k| inner_lo * ratio.powi(k as i32)).collect()
}

fn candidate_c_grid(
    lyap: &LyapunovData,
    profile: &ConstraintProfile,
    mode: usize,
    points: usize,
) -> Result<Vec<f64>, CertifyError> {
    let r_self = lyap.self_gain(mode);
    if r_self == 1.0 {
        return Ok(vec![0.0]);
    }
    let t_j = profile.impulse_t_j(mode).ok_or(CertifyError::MissingImpulsePair(mode))?;
    let lambda_one = lambda_mode(lyap.flow_rate[mode], r_self, t_j, 1.0);
    let target =
        if lambda_one < 0.0 { StabilityTarget::Stable } else { StabilityTarget::Unstable };
    match admissible_c_interval(lyap.flow_rate[mode], r_self, t_j, target)? {
        Some((lo, hi)) => Ok(geometric_grid(lo, hi, points)),
        None => Ok(vec![0.0]),
    }
}

/// Deterministic scan over sequence lengths and coefficient grids.
///
/// The switching grid is `{0, 0.05, ..., 0.95}` plus `1 + 1e-3` for lengths
/// whose combined weight is at least one (a negative balanced switching rate
/// then needs `c_s > 1`). Mode grids are geometric inside each admissible
/// interval. Ties break toward smaller `L`, then smaller `c_s`, then
/// lexicographically smaller mode coefficients.
pub fn sweep(
    lyap: &LyapunovData,
    profile: &ConstraintProfile,
    weighted: &WeightedJumpGraph,
    lengths: &[u64],
    objective: SweepObjective,
    self_jumps_identity: bool,
) -> Result<SweepOutcome, CertifyError> {
    use rayon::prelude::*;

    let modes = lyap.mode_count();
    let all_neutral = (0..modes).all(|i| lyap.self_gain(i) == 1.0);
    let points = if modes > 4 { 5 } else { 20 };
    let mode_grids: Vec<Vec<f64>> = if all_neutral {
        vec![vec![0.0]; modes]
    } else {
        (0..modes)
            .map(|i| candidate_c_grid(lyap, profile, i, points))
            .collect::<Result<_, _>>()?
    };

    let mut configs = Vec::new();
    for &l in lengths {
        let log_r = match weighted.log_combined_weight(l)? {
            Some(v) => v,
            None => continue,
        };
        let mut cs_grid: Vec<f64> = (0..20).map(|k| k as f64 * 0.05).collect();
        if log_r >= 0.0 && !(all_neutral && self_jumps_identity) {
            cs_grid.push(1.0 + 1e-3);
        }
        let mut stack: Vec<Vec<f64>> = vec![Vec::new()];
        for grid in &mode_grids {
            let mut next = Vec::new();
            for prefix in &stack {
                for &c in grid {
                    let mut extended = prefix.clone();
                    extended.push(c);
                    next.push(extended);
                }
            }
            stack = next;
        }
        for cs in &cs_grid {
            for c_mode in &stack {
                configs.push(CertConfig {
                    sequence_length: l,
                    c_switch: *cs,
                    c_mode: c_mode.clone(),
                });
            }
        }
    }
    if configs.is_empty() {
        return Err(CertifyError::NoWalk(*lengths.first().unwrap_or(&1)));
    }

    let certs: Vec<Certificate> = configs
        .par_iter()
        .filter_map(|config| {
            if all_neutral && self_jumps_identity {
                certify_no_self_impulses(lyap, profile, weighted, config, true).ok()
            } else {
                certify_main(lyap, profile, weighted, config).ok()
            }
        })
        .collect();
    if certs.is_empty() {
        return Err(CertifyError::NoWalk(*lengths.first().unwrap_or(&1)));
    }

    let tie_key =
        |c: &Certificate| (c.config.sequence_length, c.config.c_switch, c.config.c_mode.clone());
    // True when `a` is strictly better than `b` under the objective.
    let better = |a: &Certificate, b: &Certificate| -> bool {
        match (a.valid, b.valid) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => {
                let (ka, kb) = match objective {
                    SweepObjective::MaxLambda => (-a.lambda, -b.lambda),
                    SweepObjective::MinK => (a.k, b.k),
                };
                if ka != kb {
                    return ka < kb;
                }
                tie_key(a) < tie_key(b)
            }
            (false, false) => {
                if a.lambda0 != b.lambda0 {
                    return a.lambda0 > b.lambda0;
                }
                tie_key(a) < tie_key(b)
            }
        }
    };
    let mut best = certs[0].clone();
    for cert in &certs[1..] {
        if better(cert, &best) {
            best = cert.clone();
        }
    }
    let found_valid = best.valid;
    Ok(SweepOutcome { best, found_valid, evaluated: certs.len() })
}
