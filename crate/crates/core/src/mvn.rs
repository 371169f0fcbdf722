//! Multivariate normal sampling by `x = μ + Lz`, `LLᵀ = Σ`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::score::DataMatrix;

#[derive(Debug, Clone)]
pub struct MvnSampler {
    mean: Vec<f64>,
    /// Lower Cholesky factor, row-major, zeros above the diagonal kept.
    l: Vec<f64>,
    d: usize,
}

impl MvnSampler {
    pub fn new(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Model("mean and covariance dimensions disagree".into()));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Model("covariance is not positive definite".into()))?;
        let lm = chol.l();
        let mut l = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..=r {
                l[r * d + c] = lm[(r, c)];
            }
        }
        Ok(MvnSampler {
            mean: mean.to_vec(),
            l,
            d,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// One draw into `out`. Consumes exactly `d` standard normals.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.d;
        let mut z = [0.0f64; 64];
        let mut heap;
        let z: &mut [f64] = if d <= 64 {
            &mut z[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap[..]
        };
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        for (r, o) in out.iter_mut().enumerate().take(d) {
            let row = &self.l[r * d..r * d + r + 1];
            *o = self.mean[r] + row.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<DataMatrix> {
        let mut values = vec![0.0; n * self.d];
        for row in values.chunks_mut(self.d) {
            self.draw(rng, row);
        }
        DataMatrix::from_rows(n, self.d, values)
    }
}

/// `n` i.i.d. draws from `N(mean, cov)`.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &[f64], cov: &DMatrix<f64>, n: usize, rng: &mut R) -> Result<DataMatrix> {
    MvnSampler::new(mean, cov)?.sample(n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn same_seed_same_draws() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a = sample_mvn(&[0.0, 1.0], &cov, 50, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        let b = sample_mvn(&[0.0, 1.0], &cov, 50, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scalar_variance() {
        let cov = DMatrix::from_element(1, 1, 4.0);
        let x = sample_mvn(&[0.0], &cov, 100_000, &mut ChaCha20Rng::seed_from_u64(11)).unwrap();
        let n = x.nrows() as f64;
        let mean = x.values().iter().sum::<f64>() / n;
        let var = x.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!((3.8..=4.2).contains(&var), "{var}");
    }

    #[test]
    fn identity_moments() {
        let d = 3;
        let x = sample_mvn(
            &[0.0; 3],
            &DMatrix::identity(d, d),
            100_000,
            &mut ChaCha20Rng::seed_from_u64(5),
        )
        .unwrap();
        let n = x.nrows() as f64;
        let band = 4.0 / n.sqrt();
        let means = x.column_means();
        for j in 0..d {
            assert!(means[j].abs() < band);
            for k in 0..d {
                let c: f64 = x.rows().map(|r| r[j] * r[k]).sum::<f64>() / n;
                let target = if j == k { 1.0 } else { 0.0 };
                // variance of a product of independent normals is 1, of a square 2
                assert!((c - target).abs() < band * if j == k { 2f64.sqrt() } else { 1.0 });
            }
        }
    }

    #[test]
    fn rejects_indefinite() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(MvnSampler::new(&[0.0, 0.0], &cov).is_err());
    }
}
