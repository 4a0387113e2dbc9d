//! Feedback controllers and the name-keyed registry used to select one at runtime.

use std::collections::BTreeMap;
use std::fmt::Debug;

use crate::error::{QlyapError, Result};
use crate::model::SystemModel;
use crate::quantum::{CVector, QuantumState, C64};

/// Default threshold on `|<psi_f|psi>|` below which the phase factor is 1.
pub const DEFAULT_PHASE_TOL: f64 = 1e-12;

/// A state-feedback rule producing one real amplitude per control Hamiltonian.
pub trait FeedbackController: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    /// Control amplitudes `u_1..u_m` for the (unit) state `psi`.
    fn controls(&self, model: &SystemModel, psi: &CVector) -> Vec<f64>;
}

/// Lyapunov feedback `u_k = alpha_k Im(e^{i arg<psi|psi_f>} <psi_f|H_k|psi>)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlLaw {
    gains: Vec<f64>,
    phase_tol: f64,
}

impl ControlLaw {
    pub fn new(gains: Vec<f64>, phase_tol: f64) -> Result<Self> {
        if let Some(g) = gains.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(QlyapError::InvalidParameter {
                name: "gains",
                reason: format!("every gain must be finite and positive, got {g}"),
            });
        }
        if !(phase_tol > 0.0 && phase_tol.is_finite()) {
            return Err(QlyapError::InvalidParameter {
                name: "phase_tol",
                reason: format!("must be positive, got {phase_tol}"),
            });
        }
        Ok(Self { gains, phase_tol })
    }

    /// Unit gains for `m` controls.
    pub fn unit(m: usize) -> Self {
        Self {
            gains: vec![1.0; m],
            phase_tol: DEFAULT_PHASE_TOL,
        }
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn phase_tol(&self) -> f64 {
        self.phase_tol
    }

    /// `e^{i arg<psi|psi_f>}`, or 1 when the overlap is below `phase_tol`.
    pub fn phase_factor(&self, model: &SystemModel, psi: &CVector) -> C64 {
        let overlap = model.target_overlap(psi).conj();
        let r = overlap.norm();
        if r < self.phase_tol {
            C64::new(1.0, 0.0)
        } else {
            overlap / r
        }
    }

    /// The phase-rotated matrix elements `Im(e^{i arg<psi|psi_f>} <psi_f|H_k|psi>)`.
    pub(crate) fn rotated_elements(&self, model: &SystemModel, psi: &CVector) -> Vec<f64> {
        let phase = self.phase_factor(model, psi);
        model
            .controls()
            .iter()
            .map(|hk| (phase * model.target_overlap(&hk.apply(psi))).im)
            .collect()
    }

    fn check_len(&self, model: &SystemModel) {
        assert_eq!(
            self.gains.len(),
            model.num_controls(),
            "control law has {} gains but model has {} control Hamiltonians",
            self.gains.len(),
            model.num_controls()
        );
    }
}

impl FeedbackController for ControlLaw {
    fn name(&self) -> &'static str {
        "lyapunov"
    }

    fn controls(&self, model: &SystemModel, psi: &CVector) -> Vec<f64> {
        self.check_len(model);
        self.rotated_elements(model, psi)
            .into_iter()
            .zip(&self.gains)
            .map(|(im, a)| a * im)
            .collect()
    }
}

/// All controls held at zero.
#[derive(Clone, Debug, Default)]
pub struct OpenLoop;

impl FeedbackController for OpenLoop {
    fn name(&self) -> &'static str {
        "open-loop"
    }

    fn controls(&self, model: &SystemModel, _psi: &CVector) -> Vec<f64> {
        vec![0.0; model.num_controls()]
    }
}

/// The Lyapunov law with every gain negated. Drives `V` upward; used as an
/// adversarial reference for the supermartingale gate.
#[derive(Clone, Debug)]
pub struct ReversedLyapunov(pub ControlLaw);

impl FeedbackController for ReversedLyapunov {
    fn name(&self) -> &'static str {
        "reversed-lyapunov"
    }

    fn controls(&self, model: &SystemModel, psi: &CVector) -> Vec<f64> {
        self.0.controls(model, psi).into_iter().map(|u| -u).collect()
    }
}

/// `control_signals` for a validated state.
pub fn control_signals(model: &SystemModel, law: &ControlLaw, state: &QuantumState) -> Result<Vec<f64>> {
    state.check_dim(model.dim(), "control_signals")?;
    if law.gains().len() != model.num_controls() {
        return Err(QlyapError::Dimension {
            context: "control gains",
            expected: model.num_controls(),
            found: law.gains().len(),
        });
    }
    Ok(law.controls(model, state.amplitudes()))
}

/// Parameters shared by every registered controller builder.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerConfig {
    pub gains: Vec<f64>,
    pub phase_tol: f64,
}

pub type ControllerBuilder = fn(&ControllerConfig) -> Result<Box<dyn FeedbackController>>;

/// Maps controller names to builders.
#[derive(Clone)]
pub struct ControllerRegistry {
    builders: BTreeMap<&'static str, ControllerBuilder>,
}

impl ControllerRegistry {
    pub fn empty() -> Self {
        Self {
            builders: BTreeMap::new(),
        }
    }

    /// `lyapunov`, `open-loop` and `reversed-lyapunov`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("lyapunov", |cfg| {
            Ok(Box::new(ControlLaw::new(cfg.gains.clone(), cfg.phase_tol)?))
        });
        reg.register("open-loop", |_| Ok(Box::new(OpenLoop)));
        reg.register("reversed-lyapunov", |cfg| {
            Ok(Box::new(ReversedLyapunov(ControlLaw::new(
                cfg.gains.clone(),
                cfg.phase_tol,
            )?)))
        });
        reg
    }

    pub fn register(&mut self, name: &'static str, builder: ControllerBuilder) {
        self.builders.insert(name, builder);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.builders.keys().copied()
    }

    pub fn build(&self, name: &str, config: &ControllerConfig) -> Result<Box<dyn FeedbackController>> {
        let builder = self
            .builders
            .get(name)
            .ok_or_else(|| QlyapError::UnknownController(name.to_owned()))?;
        builder(config)
    }
}

impl Default for ControllerRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl Debug for ControllerRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.builders.keys()).finish()
    }
}
