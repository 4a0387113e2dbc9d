use crate::error::{QlyapError, Result};
use crate::quantum::{CMatrix, CVector, HermitianOperator, QuantumState, C64, HERMITIAN_TOL};

/// Free Hamiltonian, affine control Hamiltonians, measured observable and target
/// state of a continuously observed `n`-level system.
#[derive(Clone, Debug)]
pub struct SystemModel {
    h0: HermitianOperator,
    controls: Vec<HermitianOperator>,
    observable: HermitianOperator,
    k_strength: f64,
    hbar: f64,
    target: QuantumState,
}

impl SystemModel {
    /// Validates dimensions, tracelessness of `h0` and every control Hamiltonian,
    /// `k_strength >= 0` and `hbar > 0`.
    pub fn new(
        h0: HermitianOperator,
        controls: Vec<HermitianOperator>,
        observable: HermitianOperator,
        k_strength: f64,
        hbar: f64,
        target: QuantumState,
    ) -> Result<Self> {
        let n = target.dim();
        h0.check_dim(n, "H0")?;
        observable.check_dim(n, "X")?;
        check_traceless("H0", &h0)?;
        for (k, h) in controls.iter().enumerate() {
            h.check_dim(n, "controls")?;
            check_traceless(&format!("controls[{k}]"), h)?;
        }
        if !(k_strength >= 0.0 && k_strength.is_finite()) {
            return Err(QlyapError::InvalidParameter {
                name: "k_strength",
                reason: format!("must be finite and >= 0, got {k_strength}"),
            });
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(QlyapError::InvalidParameter {
                name: "hbar",
                reason: format!("must be finite and > 0, got {hbar}"),
            });
        }
        Ok(Self {
            h0,
            controls,
            observable,
            k_strength,
            hbar,
            target,
        })
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn num_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn h0(&self) -> &HermitianOperator {
        &self.h0
    }

    pub fn controls(&self) -> &[HermitianOperator] {
        &self.controls
    }

    pub fn observable(&self) -> &HermitianOperator {
        &self.observable
    }

    pub fn k_strength(&self) -> f64 {
        self.k_strength
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn target(&self) -> &QuantumState {
        &self.target
    }

    pub fn with_k_strength(&self, k_strength: f64) -> Result<Self> {
        Self::new(
            self.h0.clone(),
            self.controls.clone(),
            self.observable.clone(),
            k_strength,
            self.hbar,
            self.target.clone(),
        )
    }

    pub fn with_target(&self, target: QuantumState) -> Result<Self> {
        Self::new(
            self.h0.clone(),
            self.controls.clone(),
            self.observable.clone(),
            self.k_strength,
            self.hbar,
            target,
        )
    }

    /// `H(U) = H0 + sum_k u_k H_k`.
    pub fn hamiltonian(&self, u: &[f64]) -> Result<CMatrix> {
        self.check_controls_len(u)?;
        let mut h = self.h0.matrix().clone();
        for (uk, hk) in u.iter().zip(&self.controls) {
            h += hk.matrix().map(|z| z * *uk);
        }
        Ok(h)
    }

    /// `H(U) |psi>` without forming `H(U)`.
    pub(crate) fn apply_hamiltonian(&self, u: &[f64], psi: &CVector) -> CVector {
        let mut out = self.h0.apply(psi);
        for (uk, hk) in u.iter().zip(&self.controls) {
            if *uk != 0.0 {
                out += hk.apply(psi).map(|z| z * *uk);
            }
        }
        out
    }

    pub(crate) fn check_controls_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.controls.len() {
            return Err(QlyapError::Dimension {
                context: "control vector",
                expected: self.controls.len(),
                found: u.len(),
            });
        }
        Ok(())
    }

    /// `<psi_f| v>`.
    pub(crate) fn target_overlap(&self, v: &CVector) -> C64 {
        self.target.amplitudes().dotc(v)
    }
}

fn check_traceless(name: &str, h: &HermitianOperator) -> Result<()> {
    let trace = h.trace();
    if trace.abs() > HERMITIAN_TOL {
        return Err(QlyapError::NotTraceless {
            name: name.to_owned(),
            trace,
        });
    }
    Ok(())
}
