//! Seeded random sampling of matrices, states, unitaries and isometries.
//!
//! Unitaries and isometries are obtained by Gram-Schmidt orthonormalization
//! of complex Gaussian matrices, which yields the Haar measure.

use crate::tensor::{HermitianOperator, SubsystemLayout};
use faer::{c64, Mat};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// Deterministic random source.
pub struct Rng(ChaCha20Rng);

impl Rng {
    /// A generator seeded with `seed`.
    pub fn seed(seed: u64) -> Self {
        Self(ChaCha20Rng::seed_from_u64(seed))
    }

    /// A standard normal real number.
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }

    /// A uniform number in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        rand::Rng::gen::<f64>(&mut self.0)
    }

    /// A uniform integer in `lo..=hi`.
    pub fn int_in(&mut self, lo: usize, hi: usize) -> usize {
        rand::Rng::gen_range(&mut self.0, lo..=hi)
    }

    /// A complex number with independent standard normal parts.
    pub fn complex_normal(&mut self) -> c64 {
        c64::new(self.normal(), self.normal())
    }

    /// A fresh 64-bit seed, for spawning independent generators.
    pub fn next_seed(&mut self) -> u64 {
        rand::RngCore::next_u64(&mut self.0)
    }
}

/// A `rows x cols` matrix of complex standard normal entries.
pub fn random_complex_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Mat<c64> {
    let mut m = Mat::<c64>::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = rng.complex_normal();
        }
    }
    m
}

/// Orthonormalizes the columns of `m` in place (modified Gram-Schmidt).
/// Returns `false` if a column became numerically dependent.
pub(crate) fn orthonormalize_columns(m: &mut Mat<c64>) -> bool {
    let (rows, cols) = (m.nrows(), m.ncols());
    for j in 0..cols {
        for k in 0..j {
            let mut dot = c64::new(0.0, 0.0);
            for i in 0..rows {
                dot += m[(i, k)].conj() * m[(i, j)];
            }
            for i in 0..rows {
                let v = m[(i, k)];
                m[(i, j)] -= dot * v;
            }
        }
        let norm = (0..rows).map(|i| m[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return false;
        }
        for i in 0..rows {
            m[(i, j)] /= norm;
        }
    }
    true
}

/// A Haar-random isometry with `cols` orthonormal columns in dimension `rows`.
pub fn random_isometry(rng: &mut Rng, rows: usize, cols: usize) -> Mat<c64> {
    assert!(cols <= rows, "an isometry needs cols <= rows");
    loop {
        let mut m = random_complex_matrix(rng, rows, cols);
        if orthonormalize_columns(&mut m) {
            return m;
        }
    }
}

/// A Haar-random unitary of side `d`.
pub fn haar_unitary(rng: &mut Rng, d: usize) -> Mat<c64> {
    random_isometry(rng, d, d)
}

/// A random Hermitian operator `(G + G^dagger)/2` with Gaussian `G`.
pub fn random_hermitian(rng: &mut Rng, layout: SubsystemLayout) -> HermitianOperator {
    let n = layout.dim();
    let g = random_complex_matrix(rng, n, n);
    HermitianOperator::from_hermitian_part(layout, g).expect("side matches layout")
}

/// A random density operator `G G^dagger / Tr(G G^dagger)` (Ginibre ensemble).
pub fn random_density(rng: &mut Rng, layout: SubsystemLayout) -> HermitianOperator {
    let n = layout.dim();
    let g = random_complex_matrix(rng, n, n);
    let m = &g * g.adjoint();
    let rho = HermitianOperator::from_hermitian_part(layout, m).expect("side matches layout");
    let t = rho.trace();
    rho.scale(1.0 / t)
}

/// A random pure density operator.
pub fn random_pure_density(rng: &mut Rng, layout: SubsystemLayout) -> HermitianOperator {
    let n = layout.dim();
    let v = random_isometry(rng, n, 1);
    let m = Mat::from_fn(n, n, |i, j| v[(i, 0)] * v[(j, 0)].conj());
    HermitianOperator::from_hermitian_part(layout, m).expect("side matches layout")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::max_abs;

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = Rng::seed(1);
        for d in 1..6 {
            let u = haar_unitary(&mut rng, d);
            let p = u.adjoint() * &u;
            let eye = Mat::<c64>::identity(d, d);
            assert!(max_abs(&(&p - &eye)) < 1e-12);
        }
    }

    #[test]
    fn isometry_has_orthonormal_columns() {
        let mut rng = Rng::seed(2);
        let v = random_isometry(&mut rng, 8, 3);
        let p = v.adjoint() * &v;
        assert!(max_abs(&(&p - &Mat::<c64>::identity(3, 3))) < 1e-12);
    }

    #[test]
    fn densities_are_states() {
        let mut rng = Rng::seed(3);
        let layout = SubsystemLayout::new([("A", 2), ("B", 3)]).unwrap();
        let rho = random_density(&mut rng, layout.clone());
        assert!((rho.trace() - 1.0).abs() < 1e-12);
        assert!(rho.min_eigenvalue() > -1e-12);
        let psi = random_pure_density(&mut rng, layout);
        assert!((psi.trace() - 1.0).abs() < 1e-12);
        assert!((psi.max_eigenvalue() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn seeding_is_deterministic() {
        let a = random_complex_matrix(&mut Rng::seed(9), 3, 3);
        let b = random_complex_matrix(&mut Rng::seed(9), 3, 3);
        assert_eq!(max_abs(&(&a - &b)), 0.0);
    }
}
