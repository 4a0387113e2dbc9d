//! The fidelity-based Lyapunov function, its directional gradients, the exact
//! two-term increment and the extended-Itô generator.

use crate::control::ControlLaw;
use crate::error::{QlyapError, Result};
use crate::model::SystemModel;
use crate::quantum::{braket, eigen_residual, CMatrix, CVector, QuantumState, C64};

/// Tolerance used when checking that the target is an eigenket of `H0` and `X`.
pub const ASSUMPTION_TOL: f64 = 1e-9;

/// `V = 1/2 (1 - |<psi_f|psi>|^2)` for unit `psi`, as `1/2 ||psi - <psi_f|psi> psi_f||^2`
/// so that values near the target keep full relative precision.
pub(crate) fn lyapunov_of(psi: &CVector, target: &CVector) -> f64 {
    let c = braket(target, psi);
    let perp: f64 = psi
        .iter()
        .zip(target.iter())
        .map(|(p, f)| (p - f * c).norm_sqr())
        .sum();
    (0.5 * perp).clamp(0.0, 0.5)
}

pub fn lyapunov_value(state: &QuantumState, target: &QuantumState) -> Result<f64> {
    state.check_dim(target.dim(), "lyapunov_value")?;
    Ok(lyapunov_of(state.amplitudes(), target.amplitudes()))
}

/// `1/2 (1 - |<psi_f|v>|^2)` for arbitrary (non-normalized) `v`.
pub fn lyapunov_value_raw(v: &CVector, target: &QuantumState) -> f64 {
    0.5 * (1.0 - braket(target.amplitudes(), v).norm_sqr())
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0 && r < 2.0) {
        return Err(QlyapError::InvalidParameter {
            name: "R",
            reason: format!("must lie in (0, 2), got {r}"),
        });
    }
    Ok(())
}

/// `R^2 - R^4/4`, the published lower-bound constant for `V` outside the
/// `R`-neighbourhood of the target class. It overestimates the true infimum by
/// a factor of two; see [`nu_effective`].
pub fn nu_bound(r: f64) -> Result<f64> {
    check_radius(r)?;
    Ok(r * r - r.powi(4) / 4.0)
}

/// Tight infimum of `V` over states at class distance `>= R`.
///
/// Distance `>= R` forces `|<psi_f|psi>| <= 1 - R^2/2`, hence
/// `V >= 1/2 (1 - (1 - R^2/2)^2) = 1/2 (R^2 - R^4/4)`. For `R > sqrt 2` no unit state
/// is that far and the infimum over the empty set is `+inf`.
pub fn nu_effective(r: f64) -> Result<f64> {
    check_radius(r)?;
    if r * r > 2.0 {
        return Ok(f64::INFINITY);
    }
    Ok(0.5 * (r * r - r.powi(4) / 4.0))
}

/// First and second directional gradients of `V` at a state.
#[derive(Clone, Debug)]
pub struct DirectionalGradients {
    /// Row vector `r = <psi|psi_f> <psi_f|`; the gradient maps `d` to `-Re(r d)`.
    pub grad: CVector,
    /// `-|psi_f><psi_f|`.
    pub hessian: CMatrix,
}

impl DirectionalGradients {
    pub fn grad_along(&self, d: &CVector) -> f64 {
        -self
            .grad
            .iter()
            .zip(d.iter())
            .map(|(r, x)| r * x)
            .sum::<C64>()
            .re
    }

    /// `<d| hessian |d>`.
    pub fn hessian_form(&self, d: &CVector) -> f64 {
        braket(d, &(&self.hessian * d)).re
    }
}

pub fn directional_gradients(state: &QuantumState, target: &QuantumState) -> Result<DirectionalGradients> {
    state.check_dim(target.dim(), "directional_gradients")?;
    let f = target.amplitudes();
    let overlap = braket(state.amplitudes(), f);
    let grad = f.map(|z| overlap * z.conj());
    let hessian = -(f * f.adjoint());
    Ok(DirectionalGradients { grad, hessian })
}

/// `V(psi + delta) - V(psi)` as `-Re(<psi|psi_f><psi_f|delta>) - 1/2 |<psi_f|delta>|^2`,
/// exact for any `delta`.
pub fn exact_increment(state: &QuantumState, delta: &CVector, target: &QuantumState) -> Result<f64> {
    state.check_dim(target.dim(), "exact_increment")?;
    if delta.len() != target.dim() {
        return Err(QlyapError::Dimension {
            context: "exact_increment delta",
            expected: target.dim(),
            found: delta.len(),
        });
    }
    let f = target.amplitudes();
    let a = braket(state.amplitudes(), f);
    let b = braket(f, delta);
    Ok(-(a * b).re - 0.5 * b.norm_sqr())
}

/// The `dt` and `dW` coefficients of the Itô increment of `V`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorTerms {
    /// Infinitesimal generator `LV`.
    pub drift: f64,
    pub diffusion: f64,
}

/// `LV` and the `dW` coefficient for arbitrary held controls.
pub fn generator_lv_general(model: &SystemModel, controls_now: &[f64], state: &QuantumState) -> Result<GeneratorTerms> {
    state.check_dim(model.dim(), "generator_lv_general")?;
    model.check_controls_len(controls_now)?;
    let psi = state.amplitudes();
    let a = model.target_overlap(psi).conj(); // <psi|psi_f>
    let h_psi = model.apply_hamiltonian(controls_now, psi);
    let x_psi = model.observable().apply(psi);
    let mean = braket(psi, &x_psi).re;
    let centered = x_psi - psi.map(|z| z * mean);
    let sq = model.observable().apply(&centered) - centered.map(|z| z * mean);
    let k = model.k_strength();
    let f_centered = model.target_overlap(&centered);
    let drift = -(a * model.target_overlap(&h_psi)).im / model.hbar()
        + k * (a * model.target_overlap(&sq)).re
        - k * f_centered.norm_sqr();
    let diffusion = -(2.0 * k).sqrt() * (a * f_centered).re;
    Ok(GeneratorTerms { drift, diffusion })
}

/// Closed-loop `LV = -(1/hbar) sum_k alpha_k |<psi|psi_f>| (Im(e^{i arg<psi|psi_f>} <psi_f|H_k|psi>))^2`,
/// valid only when the target is an eigenket of both `H0` and `X`.
pub fn generator_lv_reduced(model: &SystemModel, law: &ControlLaw, state: &QuantumState) -> Result<f64> {
    state.check_dim(model.dim(), "generator_lv_reduced")?;
    require_target_eigenket(model)?;
    if law.gains().len() != model.num_controls() {
        return Err(QlyapError::Dimension {
            context: "control gains",
            expected: model.num_controls(),
            found: law.gains().len(),
        });
    }
    let psi = state.amplitudes();
    let r = model.target_overlap(psi).norm();
    let sum: f64 = law
        .rotated_elements(model, psi)
        .iter()
        .zip(law.gains())
        .map(|(im, a)| a * im * im)
        .sum();
    Ok(-r * sum / model.hbar())
}

/// Errors unless the target is an eigenket of `H0` (A2) and of `X` (A4).
pub(crate) fn require_target_eigenket(model: &SystemModel) -> Result<()> {
    let f = model.target().amplitudes();
    if eigen_residual(f, model.h0(), ASSUMPTION_TOL).is_none() {
        return Err(QlyapError::AssumptionFailed {
            assumption: "A2",
            detail: "target state is not an eigenket of H0".into(),
        });
    }
    if eigen_residual(f, model.observable(), ASSUMPTION_TOL).is_none() {
        return Err(QlyapError::AssumptionFailed {
            assumption: "A4",
            detail: "target state is not an eigenket of X".into(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::control_signals;
    use crate::quantum::HermitianOperator;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_vector(n: usize, scale: f64, rng: &mut ChaCha20Rng) -> CVector {
        CVector::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).scale(scale)
    }

    #[test]
    fn value_cases() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let f = QuantumState::random(3, &mut rng);
        assert_eq!(lyapunov_value(&f.with_phase(2.1), &f).unwrap(), 0.0);
        let e1 = QuantumState::basis(3, 0);
        assert_eq!(lyapunov_value(&QuantumState::basis(3, 2), &e1).unwrap(), 0.5);
        let psi = QuantumState::from_slice(&[C64::new(0.6, 0.0), C64::new(0.0, 0.8), C64::new(0.0, 0.0)]).unwrap();
        assert!((lyapunov_value(&psi, &e1).unwrap() - 0.32).abs() < 1e-15);
    }

    #[test]
    fn nu_values() {
        assert_eq!(nu_bound(0.5).unwrap(), 0.234375);
        assert!(nu_bound(1e-6).unwrap() < 1e-11);
        assert!(nu_bound(0.0).is_err() && nu_bound(2.0).is_err());
        assert_eq!(nu_effective(0.5).unwrap(), 0.1171875);
        assert_eq!(nu_effective(1.9).unwrap(), f64::INFINITY);
    }

    #[test]
    fn nu_effective_is_attained_and_bounds_rejection_samples() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let target = QuantumState::basis(3, 0);
        let class = crate::quantum::EquivalenceClass::new(target.clone());
        for &r in &[0.3, 0.5, 1.0, 1.3] {
            let nu = nu_effective(r).unwrap();
            let mut min_v = f64::INFINITY;
            let mut accepted = 0;
            while accepted < 100 {
                let psi = QuantumState::random(3, &mut rng);
                if crate::quantum::equivalence_distance(&psi, &class).unwrap() >= r {
                    accepted += 1;
                    min_v = min_v.min(lyapunov_value(&psi, &target).unwrap());
                }
            }
            assert!(min_v >= nu - 1e-9, "R={r}: {min_v} < {nu}");
            // boundary state with overlap exactly 1 - R^2/2 attains the bound
            let c = 1.0 - r * r / 2.0;
            let s = (1.0 - c * c).sqrt();
            let edge = QuantumState::from_slice(&[C64::new(c, 0.0), C64::new(0.0, s), C64::new(0.0, 0.0)]).unwrap();
            assert!((crate::quantum::equivalence_distance(&edge, &class).unwrap() - r).abs() < 1e-12);
            assert!((lyapunov_value(&edge, &target).unwrap() - nu).abs() < 1e-12);
        }
        // the published constant exceeds the attained minimum
        assert!(nu_bound(1.0).unwrap() > nu_effective(1.0).unwrap() + 0.1);
    }

    #[test]
    fn gradients_structure() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let f = QuantumState::basis(3, 0);
        let g = directional_gradients(&QuantumState::basis(3, 1), &f).unwrap();
        assert_eq!(g.grad.norm(), 0.0);
        let target = QuantumState::random(4, &mut rng);
        let g = directional_gradients(&QuantumState::random(4, &mut rng), &target).unwrap();
        let h = HermitianOperator::new(g.hessian.clone()).unwrap();
        let spec = h.spectrum();
        assert!((spec.values[0] + 1.0).abs() < 1e-12);
        assert!(spec.values[1..].iter().all(|v| v.abs() < 1e-12));
        assert!((h.trace() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn second_order_expansion_is_exact() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let target = QuantumState::random(3, &mut rng);
        for _ in 0..50 {
            let psi = QuantumState::random(3, &mut rng);
            let dir = random_vector(3, 1.0, &mut rng);
            let dir = dir.unscale(dir.norm());
            let g = directional_gradients(&psi, &target).unwrap();
            for &h in &[1e-1, 1e-3] {
                let d = dir.scale(h);
                let direct = lyapunov_value_raw(&(psi.amplitudes() + &d), &target) - lyapunov_value_raw(psi.amplitudes(), &target);
                let model = g.grad_along(&d) + 0.5 * g.hessian_form(&d);
                assert!((direct - model).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn increment_cases() {
        let e1 = QuantumState::basis(2, 0);
        let e2 = QuantumState::basis(2, 1);
        assert_eq!(exact_increment(&e2, &CVector::zeros(2), &e1).unwrap(), 0.0);
        assert_eq!(exact_increment(&e2, e1.amplitudes(), &e1).unwrap(), -0.5);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let target = QuantumState::random(4, &mut rng);
        for _ in 0..1000 {
            let psi = QuantumState::random(4, &mut rng);
            let scale = rng.random_range(0.0..1.0);
            let mut d = random_vector(4, 1.0, &mut rng);
            d = d.unscale(d.norm()).scale(scale);
            let direct = lyapunov_value_raw(&(psi.amplitudes() + &d), &target) - lyapunov_value_raw(psi.amplitudes(), &target);
            assert!((exact_increment(&psi, &d, &target).unwrap() - direct).abs() < 1e-12);
        }
    }

    fn a2_a4_model(rng: &mut ChaCha20Rng) -> SystemModel {
        let h0 = HermitianOperator::from_real_diagonal(&[1.0, 0.2, -1.2]);
        let x = HermitianOperator::from_real_diagonal(&[2.0, -0.5, 0.3]);
        let hs = vec![
            HermitianOperator::random_traceless(3, rng),
            HermitianOperator::random_traceless(3, rng),
        ];
        SystemModel::new(h0, hs, x, 0.9, 1.0, QuantumState::basis(3, 0)).unwrap()
    }

    #[test]
    fn generator_vanishes_at_target() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let m = a2_a4_model(&mut rng);
        let t = generator_lv_general(&m, &[0.0, 0.0], &m.target().with_phase(0.3)).unwrap();
        assert!(t.drift.abs() < 1e-15 && t.diffusion.abs() < 1e-15);
        let law = ControlLaw::unit(2);
        assert_eq!(generator_lv_reduced(&m, &law, m.target()).unwrap(), 0.0);
        let orth = QuantumState::basis(3, 2);
        assert_eq!(generator_lv_reduced(&m, &law, &orth).unwrap(), 0.0);
    }

    #[test]
    fn general_reduces_under_a2_a4() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let m = a2_a4_model(&mut rng);
        let law = ControlLaw::new(vec![0.7, 1.9], 1e-12).unwrap();
        for _ in 0..1000 {
            let psi = QuantumState::random(3, &mut rng);
            let u = control_signals(&m, &law, &psi).unwrap();
            let general = generator_lv_general(&m, &u, &psi).unwrap().drift;
            let reduced = generator_lv_reduced(&m, &law, &psi).unwrap();
            assert!(reduced <= 1e-12);
            assert!((general - reduced).abs() < 1e-12, "{general} vs {reduced}");
            // open-loop measurement terms cancel as well
            let free = generator_lv_general(&m, &[0.0, 0.0], &psi).unwrap().drift;
            assert!(free.abs() < 1e-12);
        }
    }

    #[test]
    fn reduced_requires_eigenket_target() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let m = a2_a4_model(&mut rng);
        let bad_x = m
            .with_target(QuantumState::basis(3, 0))
            .and_then(|m| {
                SystemModel::new(
                    m.h0().clone(),
                    m.controls().to_vec(),
                    HermitianOperator::random(3, &mut rng),
                    1.0,
                    1.0,
                    QuantumState::basis(3, 0),
                )
            })
            .unwrap();
        match generator_lv_reduced(&bad_x, &ControlLaw::unit(2), &QuantumState::basis(3, 1)) {
            Err(QlyapError::AssumptionFailed { assumption, .. }) => assert_eq!(assumption, "A4"),
            other => panic!("unexpected {other:?}"),
        }
        let bad_h0 = m.with_target(QuantumState::random(3, &mut rng)).unwrap();
        match generator_lv_reduced(&bad_h0, &ControlLaw::unit(2), &QuantumState::basis(3, 1)) {
            Err(QlyapError::AssumptionFailed { assumption, .. }) => assert_eq!(assumption, "A2"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
