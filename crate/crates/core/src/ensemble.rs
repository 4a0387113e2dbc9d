//! Seeded trajectory ensembles and the statistical gates built on them.
//!
//! Trajectory `i` of an ensemble uses seed `base_seed + i`. Trajectories run in
//! parallel, results are collected in index order and reduced sequentially, so
//! summaries are bit-identical regardless of thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::control::FeedbackController;
use crate::error::{QlyapError, Result};
use crate::lyapunov::{lyapunov_of, lyapunov_value, nu_bound, nu_effective};
use crate::model::SystemModel;
use crate::quantum::{class_distance, CVector, QuantumState};
use crate::sse::{step_count, Propagator, WienerSource};
use crate::structure::sample_orthogonal_complement;

/// Default number of recorded time points (besides `t = 0`) per trajectory.
pub const DEFAULT_RECORD_POINTS: usize = 200;
/// Absolute slack added to every 3-sigma gate to absorb rounding.
pub const GATE_SLACK: f64 = 1e-12;
const HISTOGRAM_BINS: usize = 10;

#[derive(Clone, Debug)]
pub struct EnsembleConfig {
    pub dt: f64,
    pub t_final: f64,
    pub trials: usize,
    pub base_seed: u64,
    /// Radii for exceedance probabilities and first exit times.
    pub r_list: Vec<f64>,
    /// Target number of recorded intervals; the stride is `steps / record_points`.
    pub record_points: usize,
}

impl EnsembleConfig {
    pub fn new(dt: f64, t_final: f64, trials: usize, base_seed: u64) -> Self {
        Self {
            dt,
            t_final,
            trials,
            base_seed,
            r_list: Vec::new(),
            record_points: DEFAULT_RECORD_POINTS,
        }
    }

    pub fn with_r_list(mut self, r_list: Vec<f64>) -> Self {
        self.r_list = r_list;
        self
    }

    pub fn with_record_points(mut self, points: usize) -> Self {
        self.record_points = points;
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Exceedance {
    pub r: f64,
    /// Fraction of trajectories whose class distance exceeded `r` before the horizon.
    pub probability: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExitTimes {
    pub r: f64,
    /// Per completed trajectory; `None` (JSON `null`) if it never left the ball.
    pub times: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FailedTrajectory {
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleSummary {
    pub trials: usize,
    pub completed: usize,
    pub failed: Vec<FailedTrajectory>,
    /// Inclusive seed range `[base_seed, base_seed + trials - 1]`.
    pub seeds: [u64; 2],
    pub dt: f64,
    /// Finite horizon standing in for `t -> infinity`.
    pub horizon: f64,
    pub record_stride: usize,
    pub times: Vec<f64>,
    pub mean_v: Vec<f64>,
    pub stderr_v: Vec<f64>,
    /// Mean and standard error of `V(t_{i+1}) - V(t_i)` over trajectories.
    pub mean_dv: Vec<f64>,
    pub stderr_dv: Vec<f64>,
    pub mean_fidelity: Vec<f64>,
    pub stderr_fidelity: Vec<f64>,
    pub sup_distance_exceed_prob: Vec<Exceedance>,
    pub first_exit_times: Vec<ExitTimes>,
    pub final_fidelity_histogram: Histogram,
}

struct TrajectoryStats {
    v: Vec<f64>,
    fidelity: Vec<f64>,
    exits: Vec<Option<f64>>,
}

fn record_stride(steps: usize, points: usize) -> usize {
    (steps / points.max(1)).max(1)
}

fn run_one(
    model: &SystemModel,
    controller: &dyn FeedbackController,
    psi0: &QuantumState,
    cfg: &EnsembleConfig,
    steps: usize,
    stride: usize,
    seed: u64,
) -> Result<TrajectoryStats> {
    let f = model.target().amplitudes();
    let mut prop = Propagator::new(model, controller, psi0, cfg.dt)?;
    let mut noise = WienerSource::new(seed, cfg.dt);
    let mut stats = TrajectoryStats {
        v: Vec::with_capacity(steps / stride + 1),
        fidelity: Vec::with_capacity(steps / stride + 1),
        exits: vec![None; cfg.r_list.len()],
    };
    let observe = |stats: &mut TrajectoryStats, psi: &CVector, t: f64, record: bool| {
        if record {
            stats.v.push(lyapunov_of(psi, f));
            stats.fidelity.push(f.dotc(psi).norm_sqr());
        }
        let d = class_distance(psi, f);
        for (exit, r) in stats.exits.iter_mut().zip(&cfg.r_list) {
            if exit.is_none() && d > *r {
                *exit = Some(t);
            }
        }
    };
    observe(&mut stats, prop.state(), 0.0, true);
    for step in 1..=steps {
        prop.advance(noise.next_increment())?;
        observe(&mut stats, prop.state(), prop.time(), step % stride == 0);
    }
    Ok(stats)
}

fn mean_stderr(values: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn binomial_stderr(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(QlyapError::InvalidParameter {
            name: "trials",
            reason: "must be at least 1".into(),
        });
    }
    Ok(())
}

/// Runs `cfg.trials` trajectories from `psi0` and reduces them to a summary.
/// Trajectories that fail to integrate are excluded and listed in `failed`.
pub fn run_ensemble(
    model: &SystemModel,
    controller: &dyn FeedbackController,
    psi0: &QuantumState,
    cfg: &EnsembleConfig,
) -> Result<EnsembleSummary> {
    check_trials(cfg.trials)?;
    psi0.check_dim(model.dim(), "initial state")?;
    for r in &cfg.r_list {
        if !(*r > 0.0 && r.is_finite()) {
            return Err(QlyapError::InvalidParameter {
                name: "R_list",
                reason: format!("radii must be positive, got {r}"),
            });
        }
    }
    let steps = step_count(cfg.dt, cfg.t_final)?;
    let stride = record_stride(steps, cfg.record_points);
    let results: Vec<(u64, Result<TrajectoryStats>)> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.base_seed.wrapping_add(i);
            (seed, run_one(model, controller, psi0, cfg, steps, stride, seed))
        })
        .collect();

    let mut ok = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(s) => ok.push(s),
            Err(e) => failed.push(FailedTrajectory {
                seed,
                message: e.to_string(),
            }),
        }
    }
    if ok.is_empty() {
        return Err(QlyapError::Precondition(format!(
            "all {} trajectories failed to integrate",
            cfg.trials
        )));
    }

    let points = ok[0].v.len();
    let times: Vec<f64> = (0..points).map(|j| (j * stride) as f64 * cfg.dt).collect();
    let column = |j: usize, pick: fn(&TrajectoryStats) -> &Vec<f64>| {
        mean_stderr(ok.iter().map(move |s| pick(s)[j]))
    };
    let (mean_v, stderr_v): (Vec<f64>, Vec<f64>) = (0..points).map(|j| column(j, |s| &s.v)).unzip();
    let (mean_fidelity, stderr_fidelity): (Vec<f64>, Vec<f64>) =
        (0..points).map(|j| column(j, |s| &s.fidelity)).unzip();
    let (mean_dv, stderr_dv): (Vec<f64>, Vec<f64>) = (1..points)
        .map(|j| mean_stderr(ok.iter().map(|s| s.v[j] - s.v[j - 1])))
        .unzip();

    let n = ok.len();
    let mut sup_distance_exceed_prob = Vec::new();
    let mut first_exit_times = Vec::new();
    for (ri, r) in cfg.r_list.iter().enumerate() {
        let exits: Vec<Option<f64>> = ok.iter().map(|s| s.exits[ri]).collect();
        let p = exits.iter().filter(|e| e.is_some()).count() as f64 / n as f64;
        sup_distance_exceed_prob.push(Exceedance {
            r: *r,
            probability: p,
            stderr: binomial_stderr(p, n),
        });
        first_exit_times.push(ExitTimes { r: *r, times: exits });
    }

    let mut counts = vec![0; HISTOGRAM_BINS];
    for s in &ok {
        let fid = s.fidelity[points - 1];
        let bin = ((fid * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    let edges = (0..=HISTOGRAM_BINS).map(|i| i as f64 / HISTOGRAM_BINS as f64).collect();

    Ok(EnsembleSummary {
        trials: cfg.trials,
        completed: n,
        failed,
        seeds: [cfg.base_seed, cfg.base_seed.wrapping_add(cfg.trials as u64 - 1)],
        dt: cfg.dt,
        horizon: steps as f64 * cfg.dt,
        record_stride: stride,
        times,
        mean_v,
        stderr_v,
        mean_dv,
        stderr_dv,
        mean_fidelity,
        stderr_fidelity,
        sup_distance_exceed_prob,
        first_exit_times,
        final_fidelity_histogram: Histogram { edges, counts },
    })
}

/// Minimum ensemble size accepted by [`supermartingale_test`].
pub const MIN_SUPERMARTINGALE_TRIALS: usize = 100;

#[derive(Clone, Debug, Serialize)]
pub struct SupermartingaleResult {
    pub passes: bool,
    /// Largest `mean_dV / stderr_dV` over recorded intervals (positive means `V` rose).
    pub worst_violation_sigma: f64,
    /// Index of the interval attaining it.
    pub worst_interval: usize,
}

/// `E[V]` non-increasing: every recorded increment satisfies
/// `mean_dV <= 3 stderr_dV + GATE_SLACK`.
pub fn supermartingale_test(summary: &EnsembleSummary) -> Result<SupermartingaleResult> {
    if summary.completed < MIN_SUPERMARTINGALE_TRIALS {
        return Err(QlyapError::Precondition(format!(
            "supermartingale test needs at least {MIN_SUPERMARTINGALE_TRIALS} trajectories, got {}",
            summary.completed
        )));
    }
    let mut passes = true;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_interval = 0;
    for (i, (m, se)) in summary.mean_dv.iter().zip(&summary.stderr_dv).enumerate() {
        if *m > 3.0 * se + GATE_SLACK {
            passes = false;
        }
        let sigma = if *se > 0.0 {
            m / se
        } else if *m > GATE_SLACK {
            f64::INFINITY
        } else {
            0.0
        };
        if sigma > worst {
            worst = sigma;
            worst_interval = i;
        }
    }
    Ok(SupermartingaleResult {
        passes,
        worst_violation_sigma: if worst.is_finite() || worst == f64::INFINITY { worst } else { 0.0 },
        worst_interval,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityRow {
    pub perturbation: f64,
    pub r: f64,
    pub v0: f64,
    pub nu_effective: f64,
    /// `R^2 - R^4/4`, twice `nu_effective`.
    pub nu_full: f64,
    pub empirical_p: f64,
    pub stderr: f64,
    /// `V(psi0) / nu_effective(R)`.
    pub bound: f64,
    pub passes: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub horizon: f64,
    pub trials: usize,
    pub rows: Vec<StabilityRow>,
    /// Exceedance does not grow (beyond 3 sigma) as the perturbation shrinks.
    pub monotone: bool,
    pub passes: bool,
}

/// `normalize(psi_f + s * direction)`.
pub fn perturbed_target(model: &SystemModel, direction: &CVector, s: f64) -> Result<QuantumState> {
    let f = model.target().amplitudes();
    QuantumState::normalize(f + direction.map(|z| z * s))
}

/// Unit direction orthogonal to the target, drawn from `seed`.
pub fn default_direction(model: &SystemModel, seed: u64) -> CVector {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    sample_orthogonal_complement(model.target(), &mut rng).into_amplitudes()
}

/// Exceedance of each radius in `r_list` from `normalize(psi_f + s u)` for each
/// `s` in `sizes`, against `V(psi0)/nu_effective(R)` plus 3 binomial sigma.
pub fn stability_bound_test(
    model: &SystemModel,
    controller: &dyn FeedbackController,
    direction: &CVector,
    sizes: &[f64],
    cfg: &EnsembleConfig,
) -> Result<StabilityReport> {
    if direction.len() != model.dim() {
        return Err(QlyapError::Dimension {
            context: "perturbation direction",
            expected: model.dim(),
            found: direction.len(),
        });
    }
    let unit = direction.unscale(direction.norm());
    for r in &cfg.r_list {
        if !(*r > 0.0 && *r < 2.0) {
            return Err(QlyapError::InvalidParameter {
                name: "R",
                reason: format!("must lie in (0, 2), got {r}"),
            });
        }
    }
    let mut rows = Vec::new();
    let mut horizon = 0.0;
    for &s in sizes {
        let psi0 = perturbed_target(model, &unit, s)?;
        let v0 = lyapunov_value(&psi0, model.target())?;
        let summary = run_ensemble(model, controller, &psi0, cfg)?;
        horizon = summary.horizon;
        for ex in &summary.sup_distance_exceed_prob {
            let nu = nu_effective(ex.r)?;
            let bound = if v0 == 0.0 { 0.0 } else { v0 / nu };
            rows.push(StabilityRow {
                perturbation: s,
                r: ex.r,
                v0,
                nu_effective: nu,
                nu_full: nu_bound(ex.r)?,
                empirical_p: ex.probability,
                stderr: ex.stderr,
                bound,
                passes: ex.probability <= bound + 3.0 * ex.stderr + GATE_SLACK,
            });
        }
    }
    let mut monotone = true;
    for r in &cfg.r_list {
        let mut by_size: Vec<&StabilityRow> = rows.iter().filter(|row| row.r == *r).collect();
        by_size.sort_by(|a, b| a.perturbation.total_cmp(&b.perturbation));
        for w in by_size.windows(2) {
            let slack = 3.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt() + GATE_SLACK;
            if w[0].empirical_p > w[1].empirical_p + slack {
                monotone = false;
            }
        }
    }
    let passes = monotone && rows.iter().all(|r| r.passes);
    Ok(StabilityReport {
        horizon,
        trials: cfg.trials,
        rows,
        monotone,
        passes,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeResult {
    pub v0: f64,
    /// Drift estimates with the discrete martingale part `sum g(psi_i) dW_i`
    /// subtracted per trajectory; unbiased and much less noisy than the raw ones.
    pub mean_drift_v: f64,
    pub stderr_drift_v: f64,
    pub mean_drift_distance: f64,
    pub stderr_drift_distance: f64,
    /// Plain `V(t_probe) - V(0)` averages.
    pub mean_raw_drift_v: f64,
    pub stderr_raw_drift_v: f64,
    /// `-2 *` the compensated V drift.
    pub mean_fidelity_growth: f64,
    pub stderr_fidelity_growth: f64,
    /// Both drifts within 3 sigma of zero.
    pub stationary: bool,
    /// Mean fidelity grew by more than 3 sigma.
    pub fidelity_grows: bool,
}

/// `dW` coefficient of `dV`: `-sqrt(2k) Re(<psi|psi_f><psi_f|(X - <X>) psi>)`.
pub fn lyapunov_noise_coefficient(model: &SystemModel, psi: &CVector) -> f64 {
    let f = model.target().amplitudes();
    let x_psi = model.observable().apply(psi);
    let mean = psi.dotc(&x_psi).re;
    let centered = x_psi - psi.map(|z| z * mean);
    -(2.0 * model.k_strength()).sqrt() * (psi.dotc(f) * f.dotc(&centered)).re
}

/// `dD/dV` for the class distance `D = sqrt(2 - 2 sqrt(1 - 2V))`, or 0 where it blows up.
fn distance_slope(v: f64, d: f64) -> f64 {
    let root = (1.0 - 2.0 * v).max(0.0).sqrt();
    if d > 1e-8 && root > 1e-8 {
        1.0 / (d * root)
    } else {
        0.0
    }
}

struct ProbeSample {
    dv: f64,
    dv_comp: f64,
    dd_comp: f64,
}

/// Runs `trials` trajectories of length `t_probe` from each candidate and tests
/// whether `V` and the class distance stay put on average.
pub fn invariance_probe(
    model: &SystemModel,
    controller: &dyn FeedbackController,
    candidates: &[QuantumState],
    dt: f64,
    t_probe: f64,
    trials: usize,
    base_seed: u64,
) -> Result<Vec<ProbeResult>> {
    check_trials(trials)?;
    let steps = step_count(dt, t_probe)?;
    let f = model.target().amplitudes();
    candidates
        .iter()
        .map(|psi0| {
            psi0.check_dim(model.dim(), "probe candidate")?;
            let v0 = lyapunov_of(psi0.amplitudes(), f);
            let d0 = class_distance(psi0.amplitudes(), f);
            let samples: Vec<ProbeSample> = (0..trials as u64)
                .into_par_iter()
                .map(|i| {
                    let mut prop = Propagator::new(model, controller, psi0, dt)?;
                    let mut noise = WienerSource::new(base_seed.wrapping_add(i), dt);
                    let (mut mart_v, mut mart_d) = (0.0, 0.0);
                    for _ in 0..steps {
                        let psi = prop.state();
                        let g = lyapunov_noise_coefficient(model, psi);
                        let slope = distance_slope(lyapunov_of(psi, f), class_distance(psi, f));
                        let dw = noise.next_increment();
                        mart_v += g * dw;
                        mart_d += slope * g * dw;
                        prop.advance(dw)?;
                    }
                    let dv = lyapunov_of(prop.state(), f) - v0;
                    let dd = class_distance(prop.state(), f) - d0;
                    Ok(ProbeSample {
                        dv,
                        dv_comp: dv - mart_v,
                        dd_comp: dd - mart_d,
                    })
                })
                .collect::<Result<_>>()?;
            let (mean_drift_v, stderr_drift_v) = mean_stderr(samples.iter().map(|s| s.dv_comp));
            let (mean_drift_distance, stderr_drift_distance) = mean_stderr(samples.iter().map(|s| s.dd_comp));
            let (mean_raw_drift_v, stderr_raw_drift_v) = mean_stderr(samples.iter().map(|s| s.dv));
            let within = |m: f64, se: f64| m.abs() <= 3.0 * se + GATE_SLACK;
            let growth = -2.0 * mean_drift_v;
            let growth_se = 2.0 * stderr_drift_v;
            Ok(ProbeResult {
                v0,
                mean_drift_v,
                stderr_drift_v,
                mean_drift_distance,
                stderr_drift_distance,
                mean_raw_drift_v,
                stderr_raw_drift_v,
                mean_fidelity_growth: growth,
                stderr_fidelity_growth: growth_se,
                stationary: within(mean_drift_v, stderr_drift_v)
                    && within(mean_drift_distance, stderr_drift_distance),
                fidelity_grows: growth > 3.0 * growth_se + GATE_SLACK,
            })
        })
        .collect()
}
