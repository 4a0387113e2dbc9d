//! States, Hermitian operators and the phase-equivalence geometry of the unit
//! sphere in `C^n`.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{QlyapError, Result};

pub type C64 = Complex<f64>;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// Accepted deviation of a state's 2-norm from one.
pub const NORM_TOL: f64 = 1e-9;
/// Accepted entrywise deviation from Hermiticity, and from zero trace.
pub const HERMITIAN_TOL: f64 = 1e-12;

const PHASE_FIX_TOL: f64 = 1e-12;

/// `<a|b>`, antilinear in the first argument.
#[inline]
pub fn braket(a: &CVector, b: &CVector) -> C64 {
    a.dotc(b)
}

/// A normalized ket `|psi>` with at least two levels.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    amplitudes: CVector,
}

impl QuantumState {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        Self::named("state", amplitudes)
    }

    /// Validates `amplitudes`, naming the offending field in errors.
    pub fn named(name: &str, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(QlyapError::TooSmall {
                name: name.to_owned(),
                dim: amplitudes.len(),
            });
        }
        let norm = amplitudes.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(QlyapError::NotNormalized {
                name: name.to_owned(),
                norm,
            });
        }
        Ok(Self { amplitudes })
    }

    /// Rescales an arbitrary nonzero vector onto the unit sphere.
    pub fn normalize(v: CVector) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(QlyapError::NotNormalized {
                name: "vector".to_owned(),
                norm,
            });
        }
        Self::new(v.unscale(norm))
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(amplitudes))
    }

    /// Standard basis ket `|j>` (zero-based).
    pub fn basis(n: usize, j: usize) -> Self {
        assert!(n >= 2 && j < n, "basis ket {j} out of range for n = {n}");
        let mut v = CVector::zeros(n);
        v[j] = C64::new(1.0, 0.0);
        Self { amplitudes: v }
    }

    /// Haar-random state drawn from complex Gaussian amplitudes.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let v = CVector::from_fn(n, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        Self::normalize(v).expect("gaussian vector is nonzero almost surely")
    }

    pub(crate) fn from_unit_unchecked(amplitudes: CVector) -> Self {
        debug_assert!((amplitudes.norm() - 1.0).abs() < 1e-6);
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &QuantumState) -> C64 {
        braket(&self.amplitudes, &other.amplitudes)
    }

    /// `e^{i phi} |self>`.
    pub fn with_phase(&self, phi: f64) -> Self {
        Self {
            amplitudes: self.amplitudes.scale_complex(C64::from_polar(1.0, phi)),
        }
    }

    pub(crate) fn check_dim(&self, n: usize, context: &'static str) -> Result<()> {
        if self.dim() != n {
            return Err(QlyapError::Dimension {
                context,
                expected: n,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

trait ScaleComplex {
    fn scale_complex(&self, c: C64) -> Self;
}

impl ScaleComplex for CVector {
    fn scale_complex(&self, c: C64) -> Self {
        self.map(|z| z * c)
    }
}

/// Self-adjoint `n x n` matrix: Hamiltonians and observables.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    entries: CMatrix,
}

/// Eigenvalues in ascending order with phase-fixed eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Spectrum {
    pub fn vector(&self, i: usize) -> CVector {
        self.vectors.column(i).into_owned()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

impl HermitianOperator {
    pub fn new(entries: CMatrix) -> Result<Self> {
        Self::named("operator", entries)
    }

    pub fn named(name: &str, entries: CMatrix) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(QlyapError::NotSquare {
                name: name.to_owned(),
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        let n = entries.nrows();
        let mut worst = (0, 0, 0.0_f64);
        for i in 0..n {
            for j in i..n {
                let dev = (entries[(i, j)] - entries[(j, i)].conj()).norm();
                if !dev.is_finite() || dev > worst.2 {
                    worst = (i, j, if dev.is_finite() { dev } else { f64::INFINITY });
                }
            }
        }
        if worst.2 > HERMITIAN_TOL {
            return Err(QlyapError::NotHermitian {
                name: name.to_owned(),
                row: worst.0,
                col: worst.1,
                deviation: worst.2,
            });
        }
        Ok(Self { entries })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let entries = CMatrix::from_diagonal(&CVector::from_iterator(
            diag.len(),
            diag.iter().map(|&d| C64::new(d, 0.0)),
        ));
        Self { entries }
    }

    /// Builds from row-major complex entries.
    pub fn from_rows(n: usize, rows: &[C64]) -> Result<Self> {
        if rows.len() != n * n {
            return Err(QlyapError::Dimension {
                context: "operator entries",
                expected: n * n,
                found: rows.len(),
            });
        }
        Self::new(CMatrix::from_row_slice(n, n, rows))
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            entries: CMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: CMatrix::identity(n, n),
        }
    }

    /// Random Hermitian matrix with complex Gaussian entries.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let a = CMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let h = (&a + a.adjoint()).scale(0.5);
        Self { entries: h }
    }

    /// Random Hermitian matrix projected onto zero trace.
    pub fn random_traceless<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let h = Self::random(n, rng);
        let t = h.trace() / n as f64;
        h.shifted(-t)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.entries * v
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    /// `A + c I`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut entries = self.entries.clone();
        for i in 0..entries.nrows() {
            entries[(i, i)] += C64::new(c, 0.0);
        }
        Self { entries }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            entries: self.entries.scale(c),
        }
    }

    pub fn hs_norm(&self) -> f64 {
        self.entries.norm()
    }

    /// Deterministic eigendecomposition: eigenvalues ascending, each eigenvector's
    /// first non-negligible component real and positive.
    pub fn spectrum(&self) -> Spectrum {
        let eig = self.entries.clone().symmetric_eigen();
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = CMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let col = eig.eigenvectors.column(src).into_owned();
            vectors.set_column(dst, &phase_fixed(col));
        }
        Spectrum { values, vectors }
    }

    pub(crate) fn check_dim(&self, n: usize, context: &'static str) -> Result<()> {
        if self.dim() != n {
            return Err(QlyapError::Dimension {
                context,
                expected: n,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

/// Rotates `v` so that its first component above tolerance is real positive.
pub fn phase_fixed(v: CVector) -> CVector {
    let scale = v.iter().fold(0.0_f64, |m, z| m.max(z.norm())).max(f64::MIN_POSITIVE);
    match v.iter().find(|z| z.norm() > PHASE_FIX_TOL * scale) {
        Some(&z) => {
            let phase = z.conj() / z.norm();
            v.map(|c| c * phase)
        }
        None => v,
    }
}

/// The set `{ e^{i phi} |psi> : phi real }`.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceClass {
    representative: QuantumState,
}

impl EquivalenceClass {
    pub fn new(representative: QuantumState) -> Self {
        Self { representative }
    }

    pub fn representative(&self) -> &QuantumState {
        &self.representative
    }

    pub fn contains(&self, state: &QuantumState, tol: f64) -> Result<bool> {
        Ok(equivalence_distance(state, self)? <= tol)
    }
}

/// `<psi|X|psi>`; the (rounding-level) imaginary part is discarded.
pub fn expectation_value(state: &QuantumState, op: &HermitianOperator) -> Result<f64> {
    op.check_dim(state.dim(), "expectation_value")?;
    let q = braket(state.amplitudes(), &op.apply(state.amplitudes()));
    debug_assert!(q.im.abs() < 1e-10 * (1.0 + op.hs_norm()));
    Ok(q.re)
}

/// `min_phi || psi - e^{i phi} psi_f ||`, evaluated without cancellation near zero.
pub fn equivalence_distance(state: &QuantumState, target: &EquivalenceClass) -> Result<f64> {
    let f = target.representative();
    state.check_dim(f.dim(), "equivalence_distance")?;
    Ok(class_distance(state.amplitudes(), f.amplitudes()))
}

pub(crate) fn class_distance(psi: &CVector, target: &CVector) -> f64 {
    let overlap = braket(target, psi);
    let r = overlap.norm();
    if r == 0.0 {
        return (psi.norm_squared() + target.norm_squared()).sqrt();
    }
    let phase = overlap / r;
    psi.iter()
        .zip(target.iter())
        .map(|(a, b)| (a - b * phase).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Returns `<psi|A|psi>` when `|| A psi - lambda psi || < tol`.
pub fn is_eigenstate(state: &QuantumState, op: &HermitianOperator, tol: f64) -> Result<Option<f64>> {
    op.check_dim(state.dim(), "is_eigenstate")?;
    if tol.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(QlyapError::InvalidParameter {
            name: "tol",
            reason: format!("must be positive, got {tol}"),
        });
    }
    Ok(eigen_residual(state.amplitudes(), op, tol))
}

pub(crate) fn eigen_residual(psi: &CVector, op: &HermitianOperator, tol: f64) -> Option<f64> {
    let a_psi = op.apply(psi);
    let lambda = braket(psi, &a_psi).re;
    let residual = (a_psi - psi.map(|z| z * lambda)).norm();
    (residual < tol).then_some(lambda)
}

/// A pair `(epsilon, H')` with `psi1 = exp(i epsilon H') psi2` and `||H'||_HS = 1`.
#[derive(Clone, Debug)]
pub struct ConnectingGenerator {
    pub epsilon: f64,
    pub generator: HermitianOperator,
}

impl ConnectingGenerator {
    /// `exp(i epsilon H')` through the spectral decomposition of `H'`.
    pub fn unitary(&self) -> CMatrix {
        hermitian_exp(&self.generator, self.epsilon)
    }
}

/// `exp(i t H)` for Hermitian `H`.
pub fn hermitian_exp(h: &HermitianOperator, t: f64) -> CMatrix {
    let spec = h.spectrum();
    let phases = CVector::from_iterator(
        spec.values.len(),
        spec.values.iter().map(|&l| C64::from_polar(1.0, t * l)),
    );
    let scaled = CMatrix::from_fn(spec.vectors.nrows(), spec.vectors.ncols(), |i, j| {
        spec.vectors[(i, j)] * phases[j]
    });
    scaled * spec.vectors.adjoint()
}

/// Builds the planar rotation carrying `psi2` to `psi1` (identity on the orthogonal
/// complement of their span) and returns its principal logarithm split into
/// Hilbert-Schmidt magnitude and unit-norm direction.
pub fn connecting_generator(psi1: &QuantumState, psi2: &QuantumState) -> Result<ConnectingGenerator> {
    psi1.check_dim(psi2.dim(), "connecting_generator")?;
    let dist = class_distance(psi1.amplitudes(), psi2.amplitudes());
    if dist <= 1e-8 {
        return Err(QlyapError::Precondition(format!(
            "connecting_generator requires non-equivalent states (class distance {dist:e})"
        )));
    }
    let a = psi2.amplitudes();
    let b = psi1.amplitudes();
    // psi1 = c psi2 + s e2 with s > 0 real and e2 orthogonal to psi2
    let c = braket(a, b);
    let w = b - a.map(|z| z * c);
    let s = w.norm();
    let e2 = w.unscale(s);
    // SU(2) block [[c, -s], [s, conj c]] has eigenvalues e^{±i theta}, cos theta = Re c
    let sin_theta = (c.im * c.im + s * s).sqrt();
    let theta = sin_theta.atan2(c.re);
    let scale = theta / sin_theta;
    let i = C64::i();
    let n = psi1.dim();
    let mut g = CMatrix::zeros(n, n);
    g += (a * a.adjoint() - &e2 * e2.adjoint()).scale(c.im);
    g += (a * e2.adjoint()).map(|z| z * i * s);
    g -= (&e2 * a.adjoint()).map(|z| z * i * s);
    let g = g.scale(scale);
    let epsilon = g.norm();
    let entries = g.unscale(epsilon);
    // symmetrize away rounding so the Hermitian check is exact
    let entries = (&entries + entries.adjoint()).scale(0.5);
    Ok(ConnectingGenerator {
        epsilon,
        generator: HermitianOperator { entries },
    })
}
