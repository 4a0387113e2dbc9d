//! Drift and diffusion of the stochastic Schrödinger equation and its seeded
//! Euler-Maruyama integration under state feedback.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::control::FeedbackController;
use crate::error::{QlyapError, Result};
use crate::lyapunov::lyapunov_of;
use crate::model::SystemModel;
use crate::quantum::{braket, CVector, QuantumState, C64};

/// Post-update norms below this abort the integration.
pub const MIN_UPDATE_NORM: f64 = 1e-6;

/// `(X - <X>) psi` and `<X>` for a unit vector.
fn centered_observable(model: &SystemModel, psi: &CVector) -> (CVector, f64) {
    let x_psi = model.observable().apply(psi);
    let mean = braket(psi, &x_psi).re;
    let centered = x_psi - psi.map(|z| z * mean);
    (centered, mean)
}

/// Drift `(-(i/hbar) H(U) - k (X - <X>)^2) psi`, with `<X>` taken on `psi`.
pub fn drift(model: &SystemModel, controls_now: &[f64], state: &QuantumState) -> Result<CVector> {
    state.check_dim(model.dim(), "drift")?;
    model.check_controls_len(controls_now)?;
    Ok(drift_raw(model, controls_now, state.amplitudes()))
}

/// Diffusion `sqrt(2k) (X - <X>) psi`.
pub fn diffusion(model: &SystemModel, state: &QuantumState) -> Result<CVector> {
    state.check_dim(model.dim(), "diffusion")?;
    let (centered, _) = centered_observable(model, state.amplitudes());
    Ok(centered.map(|z| z * (2.0 * model.k_strength()).sqrt()))
}

pub(crate) fn drift_raw(model: &SystemModel, u: &[f64], psi: &CVector) -> CVector {
    let (centered, mean) = centered_observable(model, psi);
    drift_with(model, u, psi, &centered, mean)
}

fn drift_with(model: &SystemModel, u: &[f64], psi: &CVector, centered: &CVector, mean: f64) -> CVector {
    let h_psi = model.apply_hamiltonian(u, psi);
    let x_centered = model.observable().apply(centered);
    let sq = x_centered - centered.map(|z| z * mean);
    let coeff = C64::new(0.0, -1.0 / model.hbar());
    let k = model.k_strength();
    h_psi.zip_map(&sq, |h, s| coeff * h - s * k)
}

/// One Euler-Maruyama update with renormalization; controls are the ones
/// supplied (already evaluated on `psi`).
pub(crate) fn em_update(
    model: &SystemModel,
    u: &[f64],
    psi: &CVector,
    dt: f64,
    dw: f64,
    step: usize,
) -> Result<CVector> {
    let (centered, mean) = centered_observable(model, psi);
    let f = drift_with(model, u, psi, &centered, mean);
    let g_scale = (2.0 * model.k_strength()).sqrt() * dw;
    let mut next = psi.clone();
    for ((n, fi), gi) in next.iter_mut().zip(f.iter()).zip(centered.iter()) {
        *n += fi * dt + gi * g_scale;
    }
    let norm = next.norm();
    if !(norm >= MIN_UPDATE_NORM && norm.is_finite()) {
        return Err(QlyapError::Integration { step, norm });
    }
    next.unscale_mut(norm);
    Ok(next)
}

/// `normalize(psi + drift dt + diffusion dW)` with feedback evaluated on `psi`.
pub fn em_step(
    model: &SystemModel,
    controller: &dyn FeedbackController,
    state: &QuantumState,
    dt: f64,
    dw: f64,
) -> Result<QuantumState> {
    state.check_dim(model.dim(), "em_step")?;
    check_dt(dt)?;
    let u = controller.controls(model, state.amplitudes());
    em_update(model, &u, state.amplitudes(), dt, dw, 0).map(QuantumState::from_unit_unchecked)
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(QlyapError::InvalidParameter {
            name: "dt",
            reason: format!("must be finite and positive, got {dt}"),
        });
    }
    Ok(())
}

/// Number of steps covering `[0, t_final]` at spacing `dt`.
pub fn step_count(dt: f64, t_final: f64) -> Result<usize> {
    check_dt(dt)?;
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(QlyapError::InvalidParameter {
            name: "t_final",
            reason: format!("must be finite and >= 0, got {t_final}"),
        });
    }
    Ok((t_final / dt).round() as usize)
}

/// Seeded stream of `N(0, dt)` Wiener increments.
#[derive(Clone, Debug)]
pub struct WienerSource {
    rng: ChaCha20Rng,
    sqrt_dt: f64,
}

impl WienerSource {
    pub fn new(seed: u64, dt: f64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            sqrt_dt: dt.sqrt(),
        }
    }

    pub fn next_increment(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        z * self.sqrt_dt
    }
}

/// A materialized Wiener path: `increments[i]` drives step `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct WienerPath {
    pub seed: u64,
    pub dt: f64,
    pub increments: Vec<f64>,
}

impl WienerPath {
    pub fn generate(seed: u64, dt: f64, steps: usize) -> Self {
        let mut src = WienerSource::new(seed, dt);
        let increments = (0..steps).map(|_| src.next_increment()).collect();
        Self { seed, dt, increments }
    }

    /// The same Brownian path sampled at `factor` times the spacing.
    pub fn coarsen(&self, factor: usize) -> Self {
        assert!(factor >= 1 && self.increments.len().is_multiple_of(factor));
        Self {
            seed: self.seed,
            dt: self.dt * factor as f64,
            increments: self.increments.chunks(factor).map(|c| c.iter().sum()).collect(),
        }
    }
}

/// One sampled quantum trajectory, recorded at every step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<QuantumState>,
    pub lyapunov: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub observable_mean: Vec<f64>,
    /// `controls_applied[i]` holds `u_1..u_m` over `[t_i, t_{i+1})`.
    pub controls_applied: Vec<Vec<f64>>,
    pub increments: Vec<f64>,
    pub seed: u64,
}

impl TrajectoryRecord {
    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn final_state(&self) -> &QuantumState {
        self.states.last().expect("record holds at least the initial state")
    }

    fn push_state(&mut self, model: &SystemModel, t: f64, psi: CVector) {
        let overlap = model.target_overlap(&psi);
        let x_mean = braket(&psi, &model.observable().apply(&psi)).re;
        self.times.push(t);
        self.lyapunov.push(lyapunov_of(&psi, model.target().amplitudes()));
        self.fidelity.push(overlap.norm_sqr().min(1.0));
        self.observable_mean.push(x_mean);
        self.states.push(QuantumState::from_unit_unchecked(psi));
    }
}

/// Incremental closed-loop integrator: holds the current state and applies one
/// zero-order-hold feedback step per call.
#[derive(Debug)]
pub struct Propagator<'a> {
    model: &'a SystemModel,
    controller: &'a dyn FeedbackController,
    psi: CVector,
    dt: f64,
    step: usize,
}

impl<'a> Propagator<'a> {
    pub fn new(
        model: &'a SystemModel,
        controller: &'a dyn FeedbackController,
        psi0: &QuantumState,
        dt: f64,
    ) -> Result<Self> {
        psi0.check_dim(model.dim(), "initial state")?;
        check_dt(dt)?;
        Ok(Self {
            model,
            controller,
            psi: psi0.amplitudes().clone(),
            dt,
            step: 0,
        })
    }

    pub fn state(&self) -> &CVector {
        &self.psi
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    /// Advances by `dt` under increment `dw`; returns the controls that were held.
    pub fn advance(&mut self, dw: f64) -> Result<Vec<f64>> {
        let u = self.controller.controls(self.model, &self.psi);
        self.psi = em_update(self.model, &u, &self.psi, self.dt, dw, self.step)?;
        self.step += 1;
        Ok(u)
    }
}

/// Deterministic trajectory for `(inputs, seed)` over `[0, t_final]`.
pub fn simulate_trajectory(
    model: &SystemModel,
    controller: &dyn FeedbackController,
    psi0: &QuantumState,
    dt: f64,
    t_final: f64,
    seed: u64,
) -> Result<TrajectoryRecord> {
    let steps = step_count(dt, t_final)?;
    let path = WienerPath::generate(seed, dt, steps);
    simulate_with_path(model, controller, psi0, &path)
}

/// Trajectory driven by an explicit Wiener path.
pub fn simulate_with_path(
    model: &SystemModel,
    controller: &dyn FeedbackController,
    psi0: &QuantumState,
    path: &WienerPath,
) -> Result<TrajectoryRecord> {
    let mut prop = Propagator::new(model, controller, psi0, path.dt)?;
    let steps = path.increments.len();
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        lyapunov: Vec::with_capacity(steps + 1),
        fidelity: Vec::with_capacity(steps + 1),
        observable_mean: Vec::with_capacity(steps + 1),
        controls_applied: Vec::with_capacity(steps),
        increments: path.increments.clone(),
        seed: path.seed,
    };
    rec.push_state(model, 0.0, psi0.amplitudes().clone());
    for &dw in &path.increments {
        let u = prop.advance(dw)?;
        rec.controls_applied.push(u);
        rec.push_state(model, prop.time(), prop.state().clone());
    }
    Ok(rec)
}
