#![allow(dead_code)]

use qlyap::control::{ControlLaw, FeedbackController, OpenLoop};
use qlyap::ensemble::lyapunov_noise_coefficient;
use qlyap::lyapunov::{generator_lv_general, lyapunov_value};
use qlyap::quantum::{CVector, HermitianOperator, QuantumState, C64};
use qlyap::sse::{em_step, WienerSource};
use qlyap::structure::sample_orthogonal_complement;
use qlyap::SystemModel;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Smallest `sum_k |<f|H_k|x>|^2` over unit `x` orthogonal to the target: best of
/// `samples` Haar draws, then projected gradient descent from the best draw.
pub fn escape_gain_search(model: &SystemModel, samples: usize, seed: u64) -> f64 {
    let f = model.target().amplitudes().clone();
    let rows: Vec<CVector> = model.controls().iter().map(|h| h.apply(&f)).collect();
    let gain = |x: &CVector| rows.iter().map(|r| r.dotc(x).norm_sqr()).sum::<f64>();
    let mut r = rng(seed);
    let mut best = sample_orthogonal_complement(model.target(), &mut r).into_amplitudes();
    let mut best_gain = gain(&best);
    for _ in 1..samples {
        let x = sample_orthogonal_complement(model.target(), &mut r).into_amplitudes();
        let g = gain(&x);
        if g < best_gain {
            best = x;
            best_gain = g;
        }
    }
    let scale: f64 = rows.iter().map(|r| r.norm_squared()).sum::<f64>().max(1e-300);
    let step = 0.5 / scale;
    let mut x = best;
    for _ in 0..20_000 {
        // gradient of x^H (sum r r^H) x is 2 sum r <r|x>
        let mut grad = CVector::zeros(x.len());
        for row in &rows {
            grad += row.map(|z| z * row.dotc(&x));
        }
        x -= grad.map(|z| z * step);
        let proj = f.dotc(&x);
        x -= f.map(|z| z * proj);
        let n = x.norm();
        x.unscale_mut(n);
    }
    gain(&x).min(best_gain)
}

/// Pure measurement of `diag(1, -1)` on a qubit.
pub fn measured_qubit(k: f64) -> SystemModel {
    let z = HermitianOperator::from_real_diagonal(&[1.0, -1.0]);
    SystemModel::new(HermitianOperator::zeros(2), vec![], z, k, 1.0, QuantumState::basis(2, 0)).unwrap()
}

pub fn plus_state() -> QuantumState {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    QuantumState::from_slice(&[c(s, 0.0), c(s, 0.0)]).unwrap()
}

/// Final `|<1|psi>|^2` of `seeds` pure-measurement runs from `|+>`.
pub fn born_populations(k: f64, dt: f64, t_final: f64, seeds: u64) -> Vec<f64> {
    let m = measured_qubit(k);
    let steps = (t_final / dt).round() as usize;
    (0..seeds)
        .map(|seed| {
            let mut psi = plus_state();
            let mut noise = WienerSource::new(seed, dt);
            for _ in 0..steps {
                psi = em_step(&m, &OpenLoop, &psi, dt, noise.next_increment()).unwrap();
            }
            psi.amplitudes()[0].norm_sqr()
        })
        .collect()
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub struct GeneratorCheck {
    pub lv: f64,
    /// Plain `(V(h) - V)/h` estimate.
    pub raw: (f64, f64),
    /// Same with the `dW` term of `dV` subtracted sample by sample.
    pub compensated: (f64, f64),
}

/// One-step Monte Carlo estimate of the generator of `V` at `psi`.
pub fn generator_mc(model: &SystemModel, law: &ControlLaw, psi: &QuantumState, h: f64, samples: u64, seed: u64) -> GeneratorCheck {
    let u = law.controls(model, psi.amplitudes());
    let lv = generator_lv_general(model, &u, psi).unwrap().drift;
    let v0 = lyapunov_value(psi, model.target()).unwrap();
    let g = lyapunov_noise_coefficient(model, psi.amplitudes());
    let mut noise = WienerSource::new(seed, h);
    let mut raw = Vec::with_capacity(samples as usize);
    let mut comp = Vec::with_capacity(samples as usize);
    for _ in 0..samples {
        let dw = noise.next_increment();
        let next = em_step(model, law as &dyn FeedbackController, psi, h, dw).unwrap();
        let dv = lyapunov_value(&next, model.target()).unwrap() - v0;
        raw.push(dv / h);
        comp.push((dv - g * dw) / h);
    }
    GeneratorCheck {
        lv,
        raw: mean_stderr(&raw),
        compensated: mean_stderr(&comp),
    }
}

/// Three levels whose controls are block diagonal and share exactly `|3>`.
pub fn shared_eigenket_model() -> SystemModel {
    let z = c(0.0, 0.0);
    let h1 = HermitianOperator::from_rows(
        3,
        &[c(0.3, 0.0), c(0.5, 0.2), z, c(0.5, -0.2), c(-0.7, 0.0), z, z, z, c(0.4, 0.0)],
    )
    .unwrap();
    let h2 = HermitianOperator::from_rows(
        3,
        &[c(-0.1, 0.0), c(0.0, 0.9), z, c(0.0, -0.9), c(0.6, 0.0), z, z, z, c(-0.5, 0.0)],
    )
    .unwrap();
    let h0 = HermitianOperator::from_real_diagonal(&[1.0, -0.2, -0.8]);
    let x = HermitianOperator::from_real_diagonal(&[1.0, 0.0, -1.0]);
    SystemModel::new(h0, vec![h1, h2], x, 0.5, 1.0, QuantumState::basis(3, 0)).unwrap()
}

/// Diagonal `H0`, target `|1>`, `n - 1` random traceless controls.
pub fn random_a5_model(n: usize, seed: u64) -> SystemModel {
    let mut r = rng(seed);
    let diag: Vec<f64> = (0..n).map(|i| 1.0 - 2.0 * i as f64 / (n - 1) as f64 + 0.1 * i as f64 * i as f64).collect();
    let mean = diag.iter().sum::<f64>() / n as f64;
    let h0 = HermitianOperator::from_real_diagonal(&diag.iter().map(|d| d - mean).collect::<Vec<_>>());
    let controls = (0..n - 1).map(|_| HermitianOperator::random_traceless(n, &mut r)).collect();
    SystemModel::new(h0.clone(), controls, h0, 0.5, 1.0, QuantumState::basis(n, 0)).unwrap()
}
