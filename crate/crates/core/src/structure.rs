//! Static structure of a model: the standing assumptions on target and
//! Hamiltonians, independence of shifted control families, the zero set of the
//! closed-loop generator, and the escape condition on the target's orthogonal
//! complement.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::control::ControlLaw;
use crate::error::{QlyapError, Result};
use crate::model::SystemModel;
use crate::quantum::{braket, eigen_residual, CMatrix, CVector, HermitianOperator, QuantumState, C64};

/// Default tolerance for eigenket membership and rank decisions.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Relative eigenvalue gap (times spectral radius) under which eigenvalues cluster.
pub const CLUSTER_REL_TOL: f64 = 1e-8;
/// Relative singular-value threshold for rank and nullspace decisions.
pub const RANK_REL_TOL: f64 = 1e-9;
const INDEPENDENCE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct A2Report {
    pub holds: bool,
    pub lambda_hf: Option<f64>,
    /// Multiplicity of `lambda_hf` in the spectrum of `H0` (0 when A2 fails).
    pub degeneracy: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct A3Report {
    pub holds: bool,
    /// 1-based indices `k` of control Hamiltonians lacking the target as eigenket.
    pub witnesses: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct A4Report {
    pub holds: bool,
    pub lambda_xf: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct A5Report {
    pub holds: bool,
    /// Real rank of `{H0, H_1, ..., H_m}`.
    pub rank: usize,
    pub num_controls: usize,
    /// The two smallest singular values behind the rank decision.
    pub smallest_singular_values: Vec<f64>,
    #[serde(serialize_with = "crate::codec::serialize_states")]
    pub common_eigenkets: Vec<QuantumState>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub dimension: usize,
    pub a2: A2Report,
    pub a3: A3Report,
    pub a4: A4Report,
    pub a5: A5Report,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.a2.holds && self.a3.holds && self.a4.holds && self.a5.holds
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(QlyapError::InvalidParameter {
            name: "tol",
            reason: format!("must be positive, got {tol}"),
        });
    }
    Ok(())
}

/// Eigenvalue clusters of a Hermitian operator as `(mean eigenvalue, eigenspace basis)`.
fn eigen_clusters(h: &HermitianOperator) -> Vec<(f64, CMatrix)> {
    let spec = h.spectrum();
    let gap = CLUSTER_REL_TOL * spec.spectral_radius() + 1e-14;
    let mut clusters: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
    for (i, &v) in spec.values.iter().enumerate() {
        match clusters.last_mut() {
            Some((vals, idx)) if v - vals[vals.len() - 1] <= gap => {
                vals.push(v);
                idx.push(i);
            }
            _ => clusters.push((vec![v], vec![i])),
        }
    }
    clusters
        .into_iter()
        .map(|(vals, idx)| {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let cols: Vec<CVector> = idx.iter().map(|&i| spec.vector(i)).collect();
            (mean, CMatrix::from_columns(&cols))
        })
        .collect()
}

fn multiplicity(h: &HermitianOperator, lambda: f64) -> usize {
    let spec = h.spectrum();
    let gap = CLUSTER_REL_TOL * spec.spectral_radius() + 1e-12;
    spec.values.iter().filter(|v| (*v - lambda).abs() <= gap).count()
}

/// Stacks real and imaginary parts of each matrix into a real row.
fn real_vectorized(mats: &[CMatrix]) -> DMatrix<f64> {
    let cols = mats.first().map_or(0, |m| 2 * m.len());
    DMatrix::from_fn(mats.len(), cols, |r, c| {
        let z = mats[r][c / 2];
        if c % 2 == 0 {
            z.re
        } else {
            z.im
        }
    })
}

/// Rank with relative threshold, plus all singular values in descending order.
fn real_rank(m: &DMatrix<f64>, rel_tol: f64) -> (usize, Vec<f64>) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0, Vec::new());
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let max = sv[0];
    let rank = if max > 0.0 {
        sv.iter().filter(|s| **s > rel_tol * max).count()
    } else {
        0
    };
    (rank, sv)
}

fn two_smallest(sv: &[f64]) -> Vec<f64> {
    sv.iter().rev().take(2).copied().collect::<Vec<_>>().into_iter().rev().collect()
}

/// Evaluates A2 (target eigenket of `H0`), A3 (some control lacks it), A4 (target
/// eigenket of `X`) and A5 (`n - 1` controls, none with the target as eigenket,
/// `{H0, H_k}` linearly independent).
pub fn check_assumptions(model: &SystemModel, tol: f64) -> Result<AssumptionReport> {
    check_tol(tol)?;
    let n = model.dim();
    let f = model.target().amplitudes();

    let lambda_hf = eigen_residual(f, model.h0(), tol);
    let a2 = A2Report {
        holds: lambda_hf.is_some(),
        lambda_hf,
        degeneracy: lambda_hf.map_or(0, |l| multiplicity(model.h0(), l)),
    };

    let witnesses: Vec<usize> = model
        .controls()
        .iter()
        .enumerate()
        .filter(|(_, h)| eigen_residual(f, h, tol).is_none())
        .map(|(k, _)| k + 1)
        .collect();
    let a3 = A3Report {
        holds: !witnesses.is_empty(),
        witnesses: witnesses.clone(),
    };

    let lambda_xf = eigen_residual(f, model.observable(), tol);
    let a4 = A4Report {
        holds: lambda_xf.is_some(),
        lambda_xf,
    };

    let m = model.num_controls();
    let mut mats = vec![model.h0().matrix().clone()];
    mats.extend(model.controls().iter().map(|h| h.matrix().clone()));
    let (rank, sv) = real_rank(&real_vectorized(&mats), tol);
    let common = if m >= 2 {
        common_eigenkets(model.controls(), tol)?
    } else {
        Vec::new()
    };
    let a5 = A5Report {
        holds: m == n - 1 && rank == n && witnesses.len() == m,
        rank,
        num_controls: m,
        smallest_singular_values: two_smallest(&sv),
        common_eigenkets: common,
    };

    Ok(AssumptionReport {
        dimension: n,
        a2,
        a3,
        a4,
        a5,
    })
}

/// Whether `{H_k - lambda_k I}` is linearly independent over the reals.
pub fn shifted_family_independent(controls: &[HermitianOperator], lambda: &[f64]) -> Result<bool> {
    if lambda.len() != controls.len() {
        return Err(QlyapError::Dimension {
            context: "lambda",
            expected: controls.len(),
            found: lambda.len(),
        });
    }
    let mats: Vec<CMatrix> = controls
        .iter()
        .zip(lambda)
        .map(|(h, l)| h.shifted(-l).matrix().clone())
        .collect();
    let (rank, _) = real_rank(&real_vectorized(&mats), RANK_REL_TOL);
    Ok(rank == controls.len())
}

/// Independence of the model's shifted control family for one choice of `lambda`.
pub fn lemma5_independence(model: &SystemModel, lambda: &[f64]) -> Result<bool> {
    shifted_family_independent(model.controls(), lambda)
}

/// Nullspace basis of `a` (rows x n) as orthonormal columns, with the singular
/// values of `a` sorted descending.
fn nullspace(a: &CMatrix, rel_tol: f64) -> (Vec<CVector>, Vec<f64>) {
    let n = a.ncols();
    let rows = a.nrows().max(n);
    let mut padded = CMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^H");
    let sv = &svd.singular_values;
    let max = sv.iter().fold(0.0_f64, |acc, s| acc.max(*s));
    let thresh = rel_tol * max.max(1.0);
    let mut pairs: Vec<(f64, CVector)> = (0..n)
        .map(|j| (sv[j], v_t.row(j).adjoint()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    values.truncate(a.nrows().min(n).max(1).min(n));
    let basis = pairs
        .into_iter()
        .filter(|(s, _)| *s <= thresh)
        .map(|(_, v)| crate::quantum::phase_fixed(v))
        .collect();
    (basis, values)
}

/// Maximal independent set of unit vectors that are eigenkets of at least two
/// of the given operators, from pairwise eigenspace intersections.
pub fn common_eigenkets(controls: &[HermitianOperator], tol: f64) -> Result<Vec<QuantumState>> {
    check_tol(tol)?;
    if controls.len() < 2 {
        return Err(QlyapError::Precondition(
            "common_eigenkets needs at least two operators".into(),
        ));
    }
    let n = controls[0].dim();
    for h in controls {
        h.check_dim(n, "common_eigenkets")?;
    }
    let clusters: Vec<_> = controls.iter().map(eigen_clusters).collect();
    let mut found: Vec<CVector> = Vec::new();
    let mut ortho: Vec<CVector> = Vec::new();
    for a in 0..controls.len() {
        for b in a + 1..controls.len() {
            let scale = controls[b].spectrum().spectral_radius().max(1.0);
            for (_, space) in &clusters[a] {
                for (mu, _) in &clusters[b] {
                    let restricted = controls[b].shifted(-mu).matrix() * space;
                    let (coeffs, _) = nullspace(&restricted, tol / scale);
                    for c in coeffs {
                        let v = space * c;
                        let v = v.unscale(v.norm());
                        if eigen_residual(&v, &controls[a], tol * 10.0 * scale).is_none()
                            || eigen_residual(&v, &controls[b], tol * 10.0 * scale).is_none()
                        {
                            continue;
                        }
                        let mut r = v.clone();
                        for _ in 0..2 {
                            for q in &ortho {
                                r -= q.map(|z| z * braket(q, &r));
                            }
                        }
                        let rn = r.norm();
                        if rn > INDEPENDENCE_TOL {
                            ortho.push(r.unscale(rn));
                            found.push(crate::quantum::phase_fixed(v));
                        }
                    }
                }
            }
        }
    }
    Ok(found.into_iter().map(QuantumState::from_unit_unchecked).collect())
}

/// Solutions of `<psi_f|H_k - lambda_k I|psi> = 0` for all `k`.
#[derive(Clone, Debug, Serialize)]
pub struct InvariantSetResult {
    pub lambda: Vec<f64>,
    pub dimension: usize,
    #[serde(serialize_with = "crate::codec::serialize_states")]
    pub basis: Vec<QuantumState>,
    pub contains_target: bool,
    /// Singular values of the constraint matrix, descending.
    pub singular_values: Vec<f64>,
}

pub fn invariant_set_b(model: &SystemModel, lambda: &[f64], tol: f64) -> Result<InvariantSetResult> {
    check_tol(tol)?;
    let m = model.num_controls();
    if lambda.len() != m {
        return Err(QlyapError::Dimension {
            context: "lambda",
            expected: m,
            found: lambda.len(),
        });
    }
    let n = model.dim();
    let f = model.target().amplitudes();
    let mut a = CMatrix::zeros(m, n);
    for (k, (h, l)) in model.controls().iter().zip(lambda).enumerate() {
        let row = h.shifted(-l).apply(f);
        for j in 0..n {
            a[(k, j)] = row[j].conj();
        }
    }
    let (basis, singular_values) = nullspace(&a, tol);
    let mut residual = f.clone();
    for v in &basis {
        residual -= v.map(|z| z * braket(v, f));
    }
    Ok(InvariantSetResult {
        lambda: lambda.to_vec(),
        dimension: basis.len(),
        contains_target: residual.norm() <= tol.max(1e-12) * 10.0,
        basis: basis.into_iter().map(QuantumState::from_unit_unchecked).collect(),
        singular_values,
    })
}

/// `lambda_k = <psi_f|H_k|psi_f>`, for which the target solves every constraint.
pub fn target_lambda(model: &SystemModel) -> Vec<f64> {
    let f = model.target().amplitudes();
    model.controls().iter().map(|h| braket(f, &h.apply(f)).re).collect()
}

/// Per-control grid of `points` values over `[lambda_min - 1, lambda_max + 1]`
/// merged with the exact eigenvalues.
pub fn lambda_grid(h: &HermitianOperator, points: usize) -> Vec<f64> {
    let spec = h.spectrum();
    let lo = spec.values[0] - 1.0;
    let hi = spec.values[spec.values.len() - 1] + 1.0;
    let mut grid: Vec<f64> = (0..points)
        .map(|i| {
            if points == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (points - 1) as f64
            }
        })
        .collect();
    grid.extend(spec.values.iter().copied());
    grid.sort_by(f64::total_cmp);
    grid
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaSweep {
    pub grid_points_per_control: usize,
    pub evaluated: usize,
    pub max_dimension: usize,
    /// Nullspace dimension -> number of grid points.
    pub dimension_histogram: BTreeMap<usize, usize>,
    /// The choice `lambda_k = <psi_f|H_k|psi_f>`.
    pub target_choice: InvariantSetResult,
    /// Grid points whose solution set contains the target.
    pub target_hits: Vec<Vec<f64>>,
    /// Grid points with more than one independent solution.
    pub multi_dimensional: Vec<InvariantSetResult>,
}

const MAX_SWEEP_POINTS: usize = 2_000_000;

/// Evaluates [`invariant_set_b`] over the Cartesian product of per-control grids.
pub fn lambda_sweep(model: &SystemModel, points: usize, tol: f64) -> Result<LambdaSweep> {
    check_tol(tol)?;
    let grids: Vec<Vec<f64>> = model.controls().iter().map(|h| lambda_grid(h, points)).collect();
    let total = grids.iter().try_fold(1usize, |acc, g| acc.checked_mul(g.len()));
    let total = match total {
        Some(t) if t <= MAX_SWEEP_POINTS => t,
        _ => {
            return Err(QlyapError::InvalidParameter {
                name: "grid_points",
                reason: "lambda grid product exceeds 2e6 points".into(),
            })
        }
    };
    let results: Vec<InvariantSetResult> = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let lambda: Vec<f64> = grids
                .iter()
                .map(|g| {
                    let v = g[idx % g.len()];
                    idx /= g.len();
                    v
                })
                .collect();
            invariant_set_b(model, &lambda, tol)
        })
        .collect::<Result<_>>()?;
    let mut hist = BTreeMap::new();
    for r in &results {
        *hist.entry(r.dimension).or_insert(0) += 1;
    }
    Ok(LambdaSweep {
        grid_points_per_control: points,
        evaluated: total,
        max_dimension: results.iter().map(|r| r.dimension).max().unwrap_or(0),
        dimension_histogram: hist,
        target_choice: invariant_set_b(model, &target_lambda(model), tol)?,
        target_hits: results
            .iter()
            .filter(|r| r.contains_target)
            .map(|r| r.lambda.clone())
            .collect(),
        multi_dimensional: results.into_iter().filter(|r| r.dimension > 1).collect(),
    })
}

/// Orthonormal completion of the target: the target first, then deterministic
/// Gram-Schmidt over the standard basis.
pub fn completed_basis(target: &QuantumState) -> Vec<CVector> {
    let n = target.dim();
    let mut basis = vec![target.amplitudes().clone()];
    for j in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = CVector::zeros(n);
        v[j] = C64::new(1.0, 0.0);
        for _ in 0..2 {
            for q in &basis {
                v -= q.map(|z| z * braket(q, &v));
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v.unscale(norm));
        }
    }
    basis
}

#[derive(Clone, Debug, Serialize)]
pub struct EscapeMatrix {
    /// `m x (n-1)`, entries `<psi_f|H_k|j>` for the completed basis `|2>..|n>`.
    #[serde(serialize_with = "crate::codec::serialize_matrix")]
    pub matrix: CMatrix,
    pub rank: usize,
    pub full_rank: bool,
    /// Descending singular values of `matrix`.
    pub singular_values: Vec<f64>,
}

/// Coefficient matrix of `<psi_f|H_k|psi> = 0` over the orthogonal complement;
/// full column rank means no complement state is invisible to every control.
pub fn escape_matrix(model: &SystemModel) -> Result<EscapeMatrix> {
    if eigen_residual(model.target().amplitudes(), model.h0(), DEFAULT_TOL).is_none() {
        return Err(QlyapError::AssumptionFailed {
            assumption: "A2",
            detail: "escape matrix needs the target to be an eigenket of H0".into(),
        });
    }
    let basis = completed_basis(model.target());
    escape_matrix_with_basis(model, &basis[1..])
}

/// [`escape_matrix`] over a caller-supplied orthonormal basis of the complement.
pub fn escape_matrix_with_basis(model: &SystemModel, complement: &[CVector]) -> Result<EscapeMatrix> {
    let n = model.dim();
    if complement.len() != n - 1 {
        return Err(QlyapError::Dimension {
            context: "complement basis",
            expected: n - 1,
            found: complement.len(),
        });
    }
    let f = model.target().amplitudes();
    let m = model.num_controls();
    let matrix = CMatrix::from_fn(m, n - 1, |k, j| braket(f, &model.controls()[k].apply(&complement[j])));
    let (rank, singular_values) = if m == 0 {
        (0, Vec::new())
    } else {
        let mut sv: Vec<f64> = matrix.clone().svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let max = sv[0];
        let rank = if max > 0.0 {
            sv.iter().filter(|s| **s > RANK_REL_TOL * max).count()
        } else {
            0
        };
        (rank, sv)
    };
    Ok(EscapeMatrix {
        matrix,
        rank,
        full_rank: rank == n - 1,
        singular_values,
    })
}

/// `E[<psi_f|psi(dt)>]/dt` for a state orthogonal to the target:
/// `(-i/hbar) sum_k u_k <psi_f|H_k|psi>` with `u_k` the feedback at `psi`
/// (equal to `alpha_k Im<psi_f|H_k|psi>` there).
pub fn expected_escape_increment(model: &SystemModel, law: &ControlLaw, state: &QuantumState) -> Result<C64> {
    state.check_dim(model.dim(), "expected_escape_increment")?;
    let psi = state.amplitudes();
    let overlap = model.target_overlap(psi).norm();
    if overlap > 1e-10 {
        return Err(QlyapError::Precondition(format!(
            "state must be orthogonal to the target (|<psi_f|psi>| = {overlap:e})"
        )));
    }
    let u = crate::control::control_signals(model, law, state)?;
    let f = model.target().amplitudes();
    let sum: C64 = model
        .controls()
        .iter()
        .zip(&u)
        .map(|(h, uk)| braket(f, &h.apply(psi)) * *uk)
        .sum();
    Ok(sum * C64::new(0.0, -1.0 / model.hbar()))
}

/// Haar-random unit state in the orthogonal complement of `target`.
pub fn sample_orthogonal_complement<R: Rng + ?Sized>(target: &QuantumState, rng: &mut R) -> QuantumState {
    loop {
        let psi = QuantumState::random(target.dim(), rng);
        let f = target.amplitudes();
        let mut v = psi.amplitudes().clone();
        for _ in 0..2 {
            let c = braket(f, &v);
            v -= f.map(|z| z * c);
        }
        if let Ok(s) = QuantumState::normalize(v) {
            return s;
        }
    }
}
