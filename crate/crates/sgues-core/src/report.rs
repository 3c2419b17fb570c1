//! Report documents written by the pipeline commands.
//!
//! Reports are self-contained: they echo the input document so a report
//! alone reproduces a run. Data files (CSV) print 17 significant digits;
//! human-readable summaries print 6.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::certifier::Certificate;
use crate::lyapunov::{LyapunovData, ModeClassification};
use crate::simulator::AuditReport;

/// Full-precision formatting for CSV cells.
pub fn csv_num(value: f64) -> String {
    format!("{value:.16e}")
}

/// Six-significant-digit formatting for summaries.
pub fn human_num(value: f64) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let magnitude = value.abs().log10().floor() as i32;
    if !(-4..6).contains(&magnitude) {
        return format!("{value:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{value:.decimals$}")
}

/// Run manifest, written before any output so runs are reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub input_path: String,
    pub output_dir: String,
    /// Resolved configuration (lengths, coefficients, seeds, horizon, step).
    pub resolved: Value,
    /// Wall-clock stamp; the only timestamp in any output.
    pub created: String,
}

/// Matrix serialized row-major for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub rows: usize,
    pub data: Vec<f64>,
}

impl MatrixEntry {
    pub fn from_matrix(m: &nalgebra::DMatrix<f64>) -> Self {
        MatrixEntry {
            rows: m.nrows(),
            data: (0..m.nrows())
                .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
                .map(|(r, c)| m[(r, c)])
                .collect(),
        }
    }
}

/// Synthesis results: per-mode matrices and extracted rates.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    pub classification: ModeClassification,
    pub p: Vec<MatrixEntry>,
    pub q_tilde: Vec<Option<MatrixEntry>>,
    pub lambda_bar: Vec<f64>,
    /// Jump-gain table with one-based indices.
    pub r_bar: Vec<JumpGainEntry>,
    pub k_lower: Vec<f64>,
    pub k_upper: Vec<f64>,
    pub exponent: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct JumpGainEntry {
    pub from: usize,
    pub to: usize,
    pub gain: f64,
}

impl LyapunovReport {
    pub fn from_data(lyap: &LyapunovData) -> Self {
        LyapunovReport {
            classification: lyap.classification.clone(),
            p: lyap.p.iter().map(MatrixEntry::from_matrix).collect(),
            q_tilde: lyap
                .q_tilde
                .iter()
                .map(|q| q.as_ref().map(MatrixEntry::from_matrix))
                .collect(),
            lambda_bar: lyap.flow_rate.clone(),
            r_bar: lyap
                .jump_gain
                .iter()
                .map(|(&(i, j), &gain)| JumpGainEntry { from: i + 1, to: j + 1, gain })
                .collect(),
            k_lower: lyap.k_lower.clone(),
            k_upper: lyap.k_upper.clone(),
            exponent: lyap.exponent,
        }
    }
}

/// One row of the combined-weight table.
#[derive(Debug, Clone, Serialize)]
pub struct CombinedWeightRow {
    pub length: u64,
    pub combined_weight: Option<f64>,
    pub hat_combined_weight: Option<f64>,
}

/// Certification report document.
#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub input: Value,
    pub lyapunov: LyapunovReport,
    pub mode_partition: PartitionReport,
    pub combined_weights: Vec<CombinedWeightRow>,
    pub certificates: Vec<Certificate>,
    pub any_valid: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionReport {
    /// One-based indices of modes with nonnegative balanced rate.
    pub unstable: Vec<usize>,
    pub stable: Vec<usize>,
    pub lambda_one: Vec<f64>,
}

/// Writes the sampled combined-bound curve `s, beta(1, s)` as CSV text.
pub fn combined_bound_csv(
    bound: &crate::certifier::CombinedBound,
    s_max: f64,
    points: usize,
) -> String {
    let mut out = String::from("s,beta\n");
    for k in 0..=points {
        let s = s_max * k as f64 / points as f64;
        out.push_str(&format!("{},{}\n", csv_num(s), csv_num(bound.eval(1.0, s))));
    }
    out
}

/// Writes a trajectory as CSV text: `t, x_1..x_n, mode, n_nu, n_mu,
/// bound_value`, two rows per event (pre and post).
pub fn trajectory_csv(
    trajectory: &crate::simulator::HybridTrajectory,
    bound: Option<&crate::certifier::CombinedBound>,
) -> String {
    let n = trajectory.initial_state().len();
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",x_{i}"));
    }
    out.push_str(",mode,n_nu,n_mu,bound_value\n");
    let x0 = trajectory.initial_state().norm();
    for sample in &trajectory.samples {
        out.push_str(&csv_num(sample.time.as_secs_f64()));
        for value in sample.state.iter() {
            out.push(',');
            out.push_str(&csv_num(*value));
        }
        let bound_value = match bound {
            Some(b) => b.eval(x0, sample.strong_abscissa(trajectory.start)),
            None => f64::NAN,
        };
        out.push_str(&format!(
            ",{},{},{},{}\n",
            sample.mode + 1,
            sample.n_switch,
            sample.n_self,
            csv_num(bound_value)
        ));
    }
    out
}

/// Per-seed simulation summary inside the run report.
#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub audit_passed: bool,
    /// Worst state-norm ratio against the combined (pointwise-minimum)
    /// envelope of all certificates.
    pub max_ratio: f64,
    /// Worst ratio against the best valid certificate alone; this gates
    /// the exit code.
    pub valid_certificate_ratio: f64,
    pub diverged: bool,
    pub trajectory_file: String,
}

/// Simulation run report.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub input: Value,
    pub certificate: Certificate,
    pub audits: Vec<AuditSummary>,
    pub seeds: Vec<SeedSummary>,
    pub all_ratios_within_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditSummary {
    pub seed: u64,
    pub passed: bool,
    pub report: AuditReport,
}
