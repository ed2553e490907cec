//! Per-feature batch normalization over [batch, features] arrays.

use ndarray::{Array2, Axis};

#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
    pub momentum: f32,
}

pub struct BnCache {
    pub xhat: Array2<f32>,
    pub inv_std: Vec<f32>,
}

impl BatchNorm1d {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes with batch statistics and updates the running estimates
    /// (unbiased variance in the running buffer, biased for normalization).
    pub fn forward_train(&mut self, z: &Array2<f32>) -> (Array2<f32>, BnCache) {
        let b = z.nrows();
        let f = z.ncols();
        debug_assert_eq!(f, self.features());
        let mean = z.mean_axis(Axis(0)).unwrap();
        let mut var = vec![0.0f32; f];
        for row in z.rows() {
            for (j, &v) in row.iter().enumerate() {
                let d = v - mean[j];
                var[j] += d * d;
            }
        }
        let bf = b as f32;
        for v in &mut var {
            *v /= bf;
        }

        let unbias = if b > 1 { bf / (bf - 1.0) } else { 1.0 };
        for j in 0..f {
            self.running_mean[j] =
                (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
            self.running_var[j] =
                (1.0 - self.momentum) * self.running_var[j] + self.momentum * var[j] * unbias;
        }

        let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = z.clone();
        for mut row in xhat.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean[j]) * inv_std[j];
            }
        }
        let mut y = xhat.clone();
        for mut row in y.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.gamma[j] + self.beta[j];
            }
        }
        (y, BnCache { xhat, inv_std })
    }

    pub fn forward_eval(&self, z: &Array2<f32>) -> Array2<f32> {
        let mut y = z.clone();
        for mut row in y.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                let inv = 1.0 / (self.running_var[j] + self.eps).sqrt();
                *v = (*v - self.running_mean[j]) * inv * self.gamma[j] + self.beta[j];
            }
        }
        y
    }

    /// Gradients wrt input, gamma, and beta given upstream dY.
    pub fn backward(
        &self,
        dy: &Array2<f32>,
        cache: &BnCache,
    ) -> (Array2<f32>, Vec<f32>, Vec<f32>) {
        let b = dy.nrows() as f32;
        let f = dy.ncols();
        let mut dgamma = vec![0.0f32; f];
        let mut dbeta = vec![0.0f32; f];
        for (dy_row, xh_row) in dy.rows().into_iter().zip(cache.xhat.rows()) {
            for j in 0..f {
                dgamma[j] += dy_row[j] * xh_row[j];
                dbeta[j] += dy_row[j];
            }
        }

        // dz = inv_std/B * gamma * (B dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
        // with dxhat = dy * gamma; the sums reuse dgamma and dbeta
        let mut dz = dy.clone();
        for (mut dz_row, xh_row) in dz.rows_mut().into_iter().zip(cache.xhat.rows()) {
            for j in 0..f {
                let dxhat = dz_row[j] * self.gamma[j];
                let term = b * dxhat - self.gamma[j] * dbeta[j] - xh_row[j] * self.gamma[j] * dgamma[j];
                dz_row[j] = cache.inv_std[j] / b * term;
            }
        }
        (dz, dgamma, dbeta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn train_forward_normalizes() {
        let mut bn = BatchNorm1d::new(2);
        let z = arr2(&[[1.0f32, 10.0], [3.0, 30.0], [5.0, 50.0], [7.0, 70.0]]);
        let (y, _) = bn.forward_train(&z);
        for j in 0..2 {
            let col: Vec<f32> = y.column(j).to_vec();
            let mean: f32 = col.iter().sum::<f32>() / 4.0;
            let var: f32 = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / 4.0;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        // numeric gradient of a scalar loss sum(y^2)/2 through the batchnorm
        let z0 = arr2(&[
            [0.5f32, -1.0, 2.0],
            [1.5, 0.25, -0.75],
            [-0.5, 1.0, 0.5],
            [2.0, -2.0, 1.25],
        ]);
        let mut bn = BatchNorm1d::new(3);
        bn.gamma = vec![1.2, -0.7, 0.5];
        bn.beta = vec![0.1, 0.0, -0.2];

        let loss = |bn: &BatchNorm1d, z: &Array2<f32>| -> f64 {
            let mut b = bn.clone();
            let (y, _) = b.forward_train(z);
            y.iter().map(|&v| 0.5 * (v as f64) * (v as f64)).sum()
        };

        let (y, cache) = bn.clone().forward_train(&z0);
        let (dz, dgamma, dbeta) = bn.backward(&y, &cache);

        let eps = 1e-3f32;
        for (idx, _) in z0.indexed_iter() {
            let mut zp = z0.clone();
            zp[idx] += eps;
            let mut zm = z0.clone();
            zm[idx] -= eps;
            let num = (loss(&bn, &zp) - loss(&bn, &zm)) / (2.0 * eps as f64);
            let got = dz[idx] as f64;
            assert!(
                (num - got).abs() < 2e-2 * (1.0 + num.abs()),
                "dz[{idx:?}] numeric {num} vs analytic {got}"
            );
        }
        for j in 0..3 {
            let mut bp = bn.clone();
            bp.gamma[j] += eps;
            let mut bm = bn.clone();
            bm.gamma[j] -= eps;
            let num = (loss(&bp, &z0) - loss(&bm, &z0)) / (2.0 * eps as f64);
            assert!((num - dgamma[j] as f64).abs() < 2e-2 * (1.0 + num.abs()));

            let mut bp = bn.clone();
            bp.beta[j] += eps;
            let mut bm = bn.clone();
            bm.beta[j] -= eps;
            let num = (loss(&bp, &z0) - loss(&bm, &z0)) / (2.0 * eps as f64);
            assert!((num - dbeta[j] as f64).abs() < 2e-2 * (1.0 + num.abs()));
        }
    }
}
