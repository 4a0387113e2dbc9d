//! Reference models used by tests, benchmarks and the bundled definition files.

use crate::control::ControlLaw;
use crate::model::SystemModel;
use crate::quantum::{HermitianOperator, QuantumState, C64};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn herm(n: usize, rows: &[C64]) -> HermitianOperator {
    HermitianOperator::from_rows(n, rows).expect("fixture matrix is Hermitian")
}

pub fn sigma_x() -> HermitianOperator {
    herm(2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

/// Qubit with `H0 = X = diag(1, -1)`, `H1 = sigma_x`, target `|1>`, `k = 1`.
pub fn two_level() -> SystemModel {
    let z = HermitianOperator::from_real_diagonal(&[1.0, -1.0]);
    SystemModel::new(z.clone(), vec![sigma_x()], z, 1.0, 1.0, QuantumState::basis(2, 0))
        .expect("valid fixture")
}

pub fn two_level_law() -> ControlLaw {
    ControlLaw::unit(1)
}

/// `(0.6, 0.8i)`.
pub fn two_level_psi0() -> QuantumState {
    QuantumState::from_slice(&[c(0.6, 0.0), c(0.0, 0.8)]).expect("unit")
}

/// Three levels, two dense complex controls, non-degenerate diagonal `H0` and
/// `X`; the controls share no eigenket and neither has the target as one.
pub fn three_level(k_strength: f64) -> SystemModel {
    let h0 = HermitianOperator::from_real_diagonal(&[1.0, -0.2, -0.8]);
    let x = HermitianOperator::from_real_diagonal(&[1.0, 0.0, -1.0]);
    let h1 = herm(
        3,
        &[
            c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.3),
            c(1.0, 0.0), c(0.4, 0.0), c(0.7, 0.0),
            c(0.0, -0.3), c(0.7, 0.0), c(-0.4, 0.0),
        ],
    );
    let h2 = herm(
        3,
        &[
            c(0.5, 0.0), c(0.2, -0.6), c(1.0, 0.0),
            c(0.2, 0.6), c(-0.9, 0.0), c(0.0, 0.1),
            c(1.0, 0.0), c(0.0, -0.1), c(0.4, 0.0),
        ],
    );
    SystemModel::new(h0, vec![h1, h2], x, k_strength, 1.0, QuantumState::basis(3, 0))
        .expect("valid fixture")
}

/// Four levels with three controls, each coupling the target to a different
/// complement direction, so the escape matrix has full rank.
pub fn four_level_escape(k_strength: f64) -> SystemModel {
    let h0 = HermitianOperator::from_real_diagonal(&[1.5, 0.5, -0.5, -1.5]);
    let x = HermitianOperator::from_real_diagonal(&[1.0, 0.3, -0.4, -0.9]);
    let z = c(0.0, 0.0);
    let h1 = herm(
        4,
        &[
            z, c(1.0, 0.0), z, z,
            c(1.0, 0.0), z, c(0.3, 0.0), z,
            z, c(0.3, 0.0), z, z,
            z, z, z, z,
        ],
    );
    let h2 = herm(
        4,
        &[
            z, z, c(0.0, -1.0), z,
            z, z, z, c(0.5, 0.0),
            c(0.0, 1.0), z, z, z,
            z, c(0.5, 0.0), z, z,
        ],
    );
    let h3 = herm(
        4,
        &[
            z, c(0.2, 0.0), z, c(0.8, 0.4),
            c(0.2, 0.0), c(1.0, 0.0), z, z,
            z, z, c(-1.0, 0.0), z,
            c(0.8, -0.4), z, z, z,
        ],
    );
    SystemModel::new(h0, vec![h1, h2, h3], x, k_strength, 1.0, QuantumState::basis(4, 0))
        .expect("valid fixture")
}

/// Like [`four_level_escape`] but every control couples the target only to
/// `|2>`, leaving a two-dimensional invisible subspace.
pub fn four_level_blind(k_strength: f64) -> SystemModel {
    let h0 = HermitianOperator::from_real_diagonal(&[1.5, 0.5, -0.5, -1.5]);
    let x = HermitianOperator::from_real_diagonal(&[1.0, 0.3, -0.4, -0.9]);
    let z = c(0.0, 0.0);
    let coupling = |a: C64, d: f64| {
        herm(
            4,
            &[
                z, a, z, z,
                a.conj(), c(d, 0.0), z, z,
                z, z, c(-d, 0.0), z,
                z, z, z, z,
            ],
        )
    };
    let hs = vec![coupling(c(1.0, 0.0), 0.0), coupling(c(0.0, 1.0), 0.5), coupling(c(0.6, 0.8), -0.3)];
    SystemModel::new(h0, hs, x, k_strength, 1.0, QuantumState::basis(4, 0)).expect("valid fixture")
}

/// `(H1, 2 H1)`: a linearly dependent control pair.
pub fn dependent_pair() -> Vec<HermitianOperator> {
    let h1 = three_level(0.0).controls()[0].clone();
    let h2 = h1.scaled(2.0);
    vec![h1, h2]
}
