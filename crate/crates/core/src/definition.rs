//! System definition files: a JSON document describing the model, the feedback
//! law and the run parameters. See `docs/formats.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{from_pair, matrix_to_rows, rows_to_matrix, vector_to_pairs, Pair};
use crate::control::{ControlLaw, ControllerConfig, DEFAULT_PHASE_TOL};
use crate::ensemble::DEFAULT_RECORD_POINTS;
use crate::error::{QlyapError, Result};
use crate::model::SystemModel;
use crate::quantum::{CVector, HermitianOperator, QuantumState};

type Rows = Vec<Vec<Pair>>;

fn default_controller() -> String {
    "lyapunov".to_owned()
}

fn default_phase_tol() -> f64 {
    DEFAULT_PHASE_TOL
}

fn default_sizes() -> Vec<f64> {
    vec![0.3, 0.1, 0.03]
}

fn default_t_probe() -> f64 {
    0.5
}

fn default_record_points() -> usize {
    DEFAULT_RECORD_POINTS
}

/// On-disk layout. Complex numbers are `[re, im]`; matrices are row-major lists of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDefinitionFile {
    pub n: usize,
    pub hbar: f64,
    pub k_strength: f64,
    #[serde(rename = "H0")]
    pub h0: Rows,
    pub controls: Vec<Rows>,
    #[serde(rename = "X")]
    pub x: Rows,
    pub psi_f: Vec<Pair>,
    pub psi_0: Vec<Pair>,
    pub gains: Vec<f64>,
    pub dt: f64,
    pub t_final: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(rename = "R_list")]
    pub r_list: Vec<f64>,
    #[serde(default = "default_controller")]
    pub controller: String,
    #[serde(default = "default_phase_tol")]
    pub phase_tol: f64,
    #[serde(default = "default_sizes")]
    pub perturbation_sizes: Vec<f64>,
    #[serde(default = "default_t_probe")]
    pub t_probe: f64,
    #[serde(default = "default_record_points")]
    pub record_points: usize,
}

#[derive(Clone, Debug)]
pub struct RunParams {
    pub psi0: QuantumState,
    pub dt: f64,
    pub t_final: f64,
    pub trials: usize,
    pub seed: u64,
    pub r_list: Vec<f64>,
    pub controller: String,
    pub perturbation_sizes: Vec<f64>,
    pub t_probe: f64,
    pub record_points: usize,
}

/// A validated definition.
#[derive(Clone, Debug)]
pub struct Definition {
    pub model: SystemModel,
    pub law: ControlLaw,
    pub params: RunParams,
}

fn field_err(field: impl Into<String>, reason: impl Into<String>) -> QlyapError {
    QlyapError::Definition {
        field: field.into(),
        reason: reason.into(),
    }
}

fn operator(field: &str, rows: &Rows, n: usize) -> Result<HermitianOperator> {
    if rows.len() != n {
        return Err(field_err(field, format!("expected {n} rows, found {}", rows.len())));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(field_err(field, format!("row {i} has {} entries, expected {n}", r.len())));
    }
    if rows.iter().flatten().flatten().any(|x| !x.is_finite()) {
        return Err(field_err(field, "entries must be finite"));
    }
    let m = rows_to_matrix(rows).expect("shape checked");
    HermitianOperator::named(field, m)
}

fn state(field: &str, pairs: &[Pair], n: usize) -> Result<QuantumState> {
    if pairs.len() != n {
        return Err(field_err(field, format!("expected {n} amplitudes, found {}", pairs.len())));
    }
    QuantumState::named(field, CVector::from_iterator(n, pairs.iter().map(|p| from_pair(*p))))
}

fn positive(field: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(field_err(field, format!("must be finite and positive, got {x}")))
    }
}

impl SystemDefinitionFile {
    pub fn validate(&self) -> Result<Definition> {
        let n = self.n;
        if n < 2 {
            return Err(field_err("n", format!("must be at least 2, got {n}")));
        }
        let h0 = operator("H0", &self.h0, n)?;
        let controls = self
            .controls
            .iter()
            .enumerate()
            .map(|(k, rows)| operator(&format!("controls[{k}]"), rows, n))
            .collect::<Result<Vec<_>>>()?;
        let x = operator("X", &self.x, n)?;
        let psi_f = state("psi_f", &self.psi_f, n)?;
        let psi0 = state("psi_0", &self.psi_0, n)?;
        let model = SystemModel::new(h0, controls, x, self.k_strength, self.hbar, psi_f).map_err(|e| match e {
            QlyapError::InvalidParameter { name, reason } => field_err(name, reason),
            other => other,
        })?;
        if self.gains.len() != model.num_controls() {
            return Err(field_err(
                "gains",
                format!("expected {} gains, found {}", model.num_controls(), self.gains.len()),
            ));
        }
        let law = ControlLaw::new(self.gains.clone(), self.phase_tol).map_err(|e| match e {
            QlyapError::InvalidParameter { name, reason } => field_err(name, reason),
            other => other,
        })?;
        positive("dt", self.dt)?;
        positive("t_final", self.t_final)?;
        positive("t_probe", self.t_probe)?;
        if self.trials == 0 {
            return Err(field_err("trials", "must be at least 1"));
        }
        if self.record_points == 0 {
            return Err(field_err("record_points", "must be at least 1"));
        }
        for (i, r) in self.r_list.iter().enumerate() {
            if !(*r > 0.0 && *r < 2.0) {
                return Err(field_err(format!("R_list[{i}]"), format!("must lie in (0, 2), got {r}")));
            }
        }
        for (i, s) in self.perturbation_sizes.iter().enumerate() {
            if !(*s >= 0.0 && s.is_finite()) {
                return Err(field_err(format!("perturbation_sizes[{i}]"), format!("must be >= 0, got {s}")));
            }
        }
        Ok(Definition {
            model,
            law,
            params: RunParams {
                psi0,
                dt: self.dt,
                t_final: self.t_final,
                trials: self.trials,
                seed: self.seed,
                r_list: self.r_list.clone(),
                controller: self.controller.clone(),
                perturbation_sizes: self.perturbation_sizes.clone(),
                t_probe: self.t_probe,
                record_points: self.record_points,
            },
        })
    }
}

impl Definition {
    pub fn controller_config(&self) -> ControllerConfig {
        ControllerConfig {
            gains: self.law.gains().to_vec(),
            phase_tol: self.law.phase_tol(),
        }
    }

    pub fn to_file(&self) -> SystemDefinitionFile {
        let m = &self.model;
        let p = &self.params;
        SystemDefinitionFile {
            n: m.dim(),
            hbar: m.hbar(),
            k_strength: m.k_strength(),
            h0: matrix_to_rows(m.h0().matrix()),
            controls: m.controls().iter().map(|h| matrix_to_rows(h.matrix())).collect(),
            x: matrix_to_rows(m.observable().matrix()),
            psi_f: vector_to_pairs(m.target().amplitudes()),
            psi_0: vector_to_pairs(p.psi0.amplitudes()),
            gains: self.law.gains().to_vec(),
            dt: p.dt,
            t_final: p.t_final,
            trials: p.trials,
            seed: p.seed,
            r_list: p.r_list.clone(),
            controller: p.controller.clone(),
            phase_tol: self.law.phase_tol(),
            perturbation_sizes: p.perturbation_sizes.clone(),
            t_probe: p.t_probe,
            record_points: p.record_points,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }
}

pub fn parse_definition_str(text: &str) -> Result<Definition> {
    serde_json::from_str::<SystemDefinitionFile>(text)?.validate()
}

pub fn parse_definition(path: impl AsRef<Path>) -> Result<Definition> {
    parse_definition_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUBIT: &str = r#"{
        "n": 2, "hbar": 1.0, "k_strength": 1.0,
        "H0": [[[1,0],[0,0]],[[0,0],[-1,0]]],
        "controls": [[[[0,0],[1,0]],[[1,0],[0,0]]]],
        "X": [[[1,0],[0,0]],[[0,0],[-1,0]]],
        "psi_f": [[1,0],[0,0]],
        "psi_0": [[0.6,0],[0,0.8]],
        "gains": [1.0], "dt": 0.001, "t_final": 10.0, "trials": 2000, "seed": 7,
        "R_list": [0.3, 0.5, 1.0]
    }"#;

    fn edited(f: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(QUBIT).unwrap();
        f(&mut v);
        v.to_string()
    }

    #[test]
    fn loads_with_defaults() {
        let d = parse_definition_str(QUBIT).unwrap();
        assert_eq!(d.model.dim(), 2);
        assert_eq!(d.params.controller, "lyapunov");
        assert_eq!(d.params.perturbation_sizes, vec![0.3, 0.1, 0.03]);
        assert_eq!(d.law.phase_tol(), DEFAULT_PHASE_TOL);
    }

    #[test]
    fn anti_hermitian_perturbation_names_h0() {
        let text = edited(|v| v["H0"][0][1] = serde_json::json!([0.0, 1e-3]));
        let err = parse_definition_str(&text).unwrap_err();
        assert!(matches!(&err, QlyapError::NotHermitian { name, row: 0, col: 1, .. } if name == "H0"), "{err}");
    }

    #[test]
    fn rejects_field_violations() {
        type Edit = Box<dyn Fn(&mut serde_json::Value)>;
        let cases: Vec<(Edit, &str)> = vec![
            (Box::new(|v| v["psi_f"] = serde_json::json!([[0.9, 0.0], [0.0, 0.0]])), "psi_f"),
            (Box::new(|v| v["controls"][0][1] = serde_json::json!([[1, 0]])), "controls[0]"),
            (Box::new(|v| v["gains"] = serde_json::json!([1.0, 2.0])), "gains"),
            (Box::new(|v| v["gains"] = serde_json::json!([-1.0])), "gains"),
            (Box::new(|v| v["dt"] = serde_json::json!(0.0)), "dt"),
            (Box::new(|v| v["R_list"] = serde_json::json!([0.5, 2.5])), "R_list[1]"),
            (Box::new(|v| v["hbar"] = serde_json::json!(-1.0)), "hbar"),
            (Box::new(|v| v["H0"] = serde_json::json!([[[1,0],[0,0]],[[0,0],[1,0]]])), "H0"),
        ];
        for (edit, field) in cases {
            let err = parse_definition_str(&edited(edit)).unwrap_err();
            assert!(err.to_string().contains(field), "{field}: {err}");
            assert!(err.is_validation());
        }
        assert!(matches!(parse_definition_str("{"), Err(QlyapError::Parse(_))));
        assert!(parse_definition_str(&edited(|v| v["extra"] = serde_json::json!(1))).is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let text = edited(|v| {
            v["H0"] = serde_json::json!([[[0.1 + 0.2, 0], [1.0 / 3.0, -2.0 / 7.0]], [[1.0 / 3.0, 2.0 / 7.0], [-(0.1 + 0.2), 0]]]);
            v["dt"] = serde_json::json!(1.0 / 3.0 * 1e-3);
        });
        let d = parse_definition_str(&text).unwrap();
        let again = parse_definition_str(&d.to_json().unwrap()).unwrap();
        assert_eq!(d.to_file(), again.to_file());
        let raw: SystemDefinitionFile = serde_json::from_str(&text).unwrap();
        assert_eq!(raw, d.to_file());
    }
}
