//! JSON document schema for system specification files.
//!
//! A document carries the system (`dimension`, `modes`, `edges`,
//! `self_jumps`), the admissibility constraints and optional user-supplied
//! Lyapunov data. Matrix entries are row-major and may be decimal strings
//! (preserving the author's literal values) or plain numbers. All mode
//! indices in documents are one-based.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{
    ActivationGroup, AdtPair, BoundDirection, ConstraintProfile, FlowMap, ImpulseAdt, JumpGraph,
    Perturbation, SwitchedImpulsiveSystem, SwitchingAdt,
};

/// A real number parsed from a JSON number or a decimal string; strings may
/// also be `"inf"` for an infinite dwell time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            serializer.serialize_str(if self.0 > 0.0 { "inf" } else { "-inf" })
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = Real;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or a decimal string")
            }
            fn visit_f64<E: serde::de::Error>(self, v: f64) -> Result<Real, E> {
                Ok(Real(v))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Real, E> {
                match v.trim() {
                    "inf" | "+inf" | "infinity" => Ok(Real(f64::INFINITY)),
                    "-inf" | "-infinity" => Ok(Real(f64::NEG_INFINITY)),
                    s => s.parse::<f64>().map(Real).map_err(|_| E::custom(format!("bad decimal `{s}`"))),
                }
            }
        }
        deserializer.deserialize_any(Visitor)
    }
}

/// One mode: a bare row-major flow matrix or an object with an optional
/// perturbation from the named nonlinearity library.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModeEntry {
    Matrix(Vec<Real>),
    Detailed {
        flow: Vec<Real>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        perturbation: Option<Perturbation>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImpulseAdtEntry {
    pub n0: Real,
    pub t_j: Real,
    pub direction: BoundDirection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdtPairEntry {
    pub n0: Real,
    pub t_s: Real,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SwitchingAdtEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<AdtPairEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<AdtPairEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivationGroupEntry {
    /// One-based mode indices.
    pub modes: Vec<usize>,
    pub n_a: Real,
    pub t_a: Real,
    pub direction: BoundDirection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConstraintsEntry {
    /// Aligned with `modes`; `null` leaves a mode unconstrained.
    #[serde(default)]
    pub impulse_adt: Vec<Option<ImpulseAdtEntry>>,
    #[serde(default)]
    pub switching_adt: SwitchingAdtEntry,
    #[serde(default)]
    pub activation_groups: Vec<ActivationGroupEntry>,
}

/// Mode classification for Lyapunov synthesis, one-based indices.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClassificationEntry {
    #[serde(default)]
    pub continuous: Vec<usize>,
    #[serde(default)]
    pub discrete: Vec<usize>,
    #[serde(default)]
    pub user: Vec<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LyapunovEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationEntry>,
    /// `[mode, row-major Q]` pairs for modes solved through a Lyapunov or
    /// Stein equation.
    #[serde(default)]
    pub q: Vec<(usize, Vec<Real>)>,
    /// `[mode, row-major P]` pairs for user-supplied functions.
    #[serde(default)]
    pub p: Vec<(usize, Vec<Real>)>,
}

/// Top-level system specification document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemDocument {
    pub dimension: usize,
    pub modes: Vec<ModeEntry>,
    /// `[from, to, row-major J]` with one-based mode indices.
    #[serde(default)]
    pub edges: Vec<(usize, usize, Vec<Real>)>,
    /// `[mode, row-major J]` for modes with nonswitching impulses.
    #[serde(default)]
    pub self_jumps: Vec<(usize, Vec<Real>)>,
    #[serde(default)]
    pub constraints: ConstraintsEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum DocumentError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

fn bad(msg: impl Into<String>) -> DocumentError {
    DocumentError::Invalid(msg.into())
}

fn parse_matrix(entries: &[Real], n: usize, what: &str) -> Result<DMatrix<f64>, DocumentError> {
    if entries.len() != n * n {
        return Err(bad(format!("{what}: expected {} entries for a {n}x{n} matrix, got {}", n * n, entries.len())));
    }
    let values: Vec<f64> = entries.iter().map(|r| r.0).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad(format!("{what}: matrix entries must be finite")));
    }
    Ok(DMatrix::from_row_slice(n, n, &values))
}

fn to_zero_based(index: usize, modes: usize, what: &str) -> Result<usize, DocumentError> {
    if index == 0 || index > modes {
        return Err(bad(format!("{what}: mode index {index} outside 1..={modes}")));
    }
    Ok(index - 1)
}

impl SystemDocument {
    pub fn from_json(text: &str) -> Result<Self, DocumentError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Builds the in-memory system and constraint profile. User Lyapunov
    /// data, when present, is resolved by the synthesis layer.
    pub fn build(&self) -> Result<(SwitchedImpulsiveSystem, ConstraintProfile), DocumentError> {
        let n = self.dimension;
        if n == 0 {
            return Err(bad("dimension must be positive"));
        }
        let modes = self.modes.len();
        if modes == 0 {
            return Err(bad("at least one mode is required"));
        }

        let mut flows = Vec::with_capacity(modes);
        for (i, entry) in self.modes.iter().enumerate() {
            let what = format!("mode {}", i + 1);
            let flow = match entry {
                ModeEntry::Matrix(m) => FlowMap::Linear(parse_matrix(m, n, &what)?),
                ModeEntry::Detailed { flow, perturbation } => {
                    let matrix = parse_matrix(flow, n, &what)?;
                    match perturbation {
                        None => FlowMap::Linear(matrix),
                        Some(p) => FlowMap::Perturbed { matrix, perturbation: p.clone() },
                    }
                }
            };
            flows.push(flow);
        }

        let mut jumps = BTreeMap::new();
        let mut edges = Vec::new();
        for (from, to, m) in &self.edges {
            let what = format!("edge ({from}, {to})");
            let i = to_zero_based(*from, modes, &what)?;
            let j = to_zero_based(*to, modes, &what)?;
            if i == j {
                return Err(bad(format!("{what}: self pairs belong in self_jumps")));
            }
            jumps.insert((i, j), parse_matrix(m, n, &what)?);
            edges.push((i, j));
        }
        let mut self_loops = Vec::new();
        for (mode, m) in &self.self_jumps {
            let what = format!("self jump of mode {mode}");
            let i = to_zero_based(*mode, modes, &what)?;
            jumps.insert((i, i), parse_matrix(m, n, &what)?);
            self_loops.push(i);
        }
        for i in 0..modes {
            jumps.entry((i, i)).or_insert_with(|| DMatrix::identity(n, n));
        }

        let graph = JumpGraph::new(modes, edges, self_loops);
        let system = SwitchedImpulsiveSystem { dimension: n, flows, jumps, graph };

        let mut impulse_adt = vec![None; modes];
        for (i, entry) in self.constraints.impulse_adt.iter().enumerate() {
            if i >= modes {
                return Err(bad("impulse_adt has more entries than modes"));
            }
            if let Some(e) = entry {
                impulse_adt[i] =
                    Some(ImpulseAdt { n0: e.n0.0, t_j: e.t_j.0, direction: e.direction });
            }
        }
        let switching_adt = SwitchingAdt {
            upper: self
                .constraints
                .switching_adt
                .upper
                .as_ref()
                .map(|p| AdtPair { n0: p.n0.0, t_s: p.t_s.0 }),
            lower: self
                .constraints
                .switching_adt
                .lower
                .as_ref()
                .map(|p| AdtPair { n0: p.n0.0, t_s: p.t_s.0 }),
        };
        let mut activation_groups = Vec::new();
        for (g, entry) in self.constraints.activation_groups.iter().enumerate() {
            let mut group_modes = Vec::new();
            for &m in &entry.modes {
                group_modes.push(to_zero_based(m, modes, &format!("activation group {}", g + 1))?);
            }
            activation_groups.push(ActivationGroup {
                modes: group_modes,
                n_a: entry.n_a.0,
                t_a: entry.t_a.0,
                direction: entry.direction,
            });
        }
        let profile = ConstraintProfile { impulse_adt, switching_adt, activation_groups };
        Ok((system, profile))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "dimension": 2,
        "modes": [
            ["-1.4", "0.6", "-0.5", "-0.3"],
            ["4", "3", "-1", "2"]
        ],
        "edges": [
            [1, 2, ["1.26", "0", "0", "1.26"]],
            [2, 1, ["0.105", "0", "0", "0.11"]]
        ],
        "self_jumps": [
            [1, ["0.105", "0", "0", "0.11"]],
            [2, ["1.26", "0", "0", "1.26"]]
        ],
        "constraints": {
            "impulse_adt": [
                {"n0": -1, "t_j": 0.085, "direction": "lower"},
                {"n0": 1, "t_j": 0.024, "direction": "upper"}
            ],
            "switching_adt": {
                "upper": {"n0": 1, "t_s": 0.1},
                "lower": {"n0": -1, "t_s": 0.1}
            },
            "activation_groups": [
                {"modes": [2], "n_a": 0.56, "t_a": 0.03, "direction": "upper"},
                {"modes": [1], "n_a": 0.44, "t_a": -0.03, "direction": "lower"}
            ]
        },
        "lyapunov": {
            "classification": {"discrete": [1], "user": [2]},
            "q": [[1, ["1", "0", "0", "1"]]],
            "p": [[2, ["1", "0", "0", "1"]]]
        }
    }"#;

    #[test]
    fn parses_and_builds_two_mode_document() {
        let doc = SystemDocument::from_json(DOC).unwrap();
        let (system, profile) = doc.build().unwrap();
        assert_eq!(system.dimension, 2);
        assert_eq!(system.mode_count(), 2);
        assert_eq!(system.jump(0, 1).unwrap()[(0, 0)], 1.26);
        assert_eq!(system.graph.self_loops.len(), 2);
        assert_eq!(profile.impulse_adt[0].unwrap().t_j, 0.085);
        assert_eq!(profile.activation_groups[0].modes, vec![1]);
        let report = super::super::validate_system(&system, &profile);
        assert!(report.is_clean(), "{:?}", report.violations);
    }

    #[test]
    fn accepts_inf_dwell_time() {
        let text = r#"{"n0": 1, "t_j": "inf", "direction": "upper"}"#;
        let entry: ImpulseAdtEntry = serde_json::from_str(text).unwrap();
        assert!(entry.t_j.0.is_infinite());
    }

    #[test]
    fn rejects_out_of_range_indices() {
        let mut doc = SystemDocument::from_json(DOC).unwrap();
        doc.edges[0].0 = 3;
        assert!(doc.build().is_err());
    }

    #[test]
    fn rejects_misshapen_matrix() {
        let mut doc = SystemDocument::from_json(DOC).unwrap();
        if let ModeEntry::Matrix(m) = &mut doc.modes[0] {
            m.pop();
        }
        assert!(doc.build().is_err());
    }
}
