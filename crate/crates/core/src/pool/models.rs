//! Covariance models of the four pool members.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::strategy::{csa_update, EsCore, StrategyParams};

const LIMITED_MEMORY_VECTORS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Model {
    /// Diagonal covariance, stored as variances.
    Separable { variances: Vec<f64> },
    /// Limited-memory matrix adaptation with up to ten direction vectors.
    LimitedMemory { directions: Vec<Vec<f64>> },
    /// Full covariance with its cached eigendecomposition (row-major).
    Full {
        covariance: Vec<f64>,
        basis: Vec<f64>,
        scales: Vec<f64>,
        decomposed_at: u64,
    },
    /// Dense factor `A` with `C = A A^T` and its inverse, rank-one updates only.
    RankOne { factor: Vec<f64>, inverse: Vec<f64> },
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| m[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn direction_rates(n: usize, lambda: usize, j: usize) -> (f64, f64) {
    let nf = n as f64;
    let decay = 1.0 / (1.5f64.powi(j as i32) * nf);
    let learn = (lambda as f64 / (4f64.powi(j as i32) * nf)).min(1.0);
    (decay, learn)
}

impl Model {
    pub fn separable(n: usize) -> Self {
        Model::Separable {
            variances: vec![1.0; n],
        }
    }

    pub fn limited_memory(_n: usize) -> Self {
        Model::LimitedMemory {
            directions: Vec::new(),
        }
    }

    pub fn full(n: usize) -> Self {
        Model::Full {
            covariance: identity(n),
            basis: identity(n),
            scales: vec![1.0; n],
            decomposed_at: 0,
        }
    }

    pub fn rank_one(n: usize) -> Self {
        Model::RankOne {
            factor: identity(n),
            inverse: identity(n),
        }
    }

    /// Number of stored reals.
    pub fn state_len(&self) -> usize {
        match self {
            Model::Separable { variances } => variances.len(),
            Model::LimitedMemory { directions } => directions.iter().map(Vec::len).sum(),
            Model::Full {
                covariance,
                basis,
                scales,
                ..
            } => covariance.len() + basis.len() + scales.len(),
            Model::RankOne { factor, inverse } => factor.len() + inverse.len(),
        }
    }

    /// Map a standard normal draw to the model's search distribution.
    pub fn transform(&self, z: &[f64], params: &StrategyParams) -> Vec<f64> {
        match self {
            Model::Separable { variances } => z.iter().zip(variances).map(|(a, v)| a * v.sqrt()).collect(),
            Model::LimitedMemory { directions } => {
                let mut d = z.to_vec();
                for (j, m) in directions.iter().enumerate() {
                    let (decay, _) = direction_rates(params.n, params.lambda, j);
                    let proj = dot(m, &d);
                    for (di, mi) in d.iter_mut().zip(m) {
                        *di = (1.0 - decay) * *di + decay * mi * proj;
                    }
                }
                d
            }
            Model::Full { basis, scales, .. } => {
                let scaled: Vec<f64> = z.iter().zip(scales).map(|(a, s)| a * s).collect();
                mat_vec(basis, &scaled)
            }
            Model::RankOne { factor, .. } => mat_vec(factor, z),
        }
    }

    pub fn adapt(
        &mut self,
        core: &mut EsCore,
        params: &StrategyParams,
        z_w: &[f64],
        y_w: &[f64],
        selected_y: &[&[f64]],
    ) {
        let n = params.n;
        match self {
            Model::Separable { variances } => {
                let h_sigma = csa_update(core, params, z_w, y_w);
                let scale = (n as f64 + 2.0) / 3.0;
                let c1 = (params.c_1 * scale).min(1.0);
                let cmu = (params.c_mu * scale).min(1.0 - c1);
                let cc = params.c_c;
                let correction = if h_sigma { 0.0 } else { cc * (2.0 - cc) };
                for (i, v) in variances.iter_mut().enumerate() {
                    let rank_mu: f64 = params
                        .weights
                        .iter()
                        .zip(selected_y)
                        .map(|(w, y)| w * y[i] * y[i])
                        .sum();
                    let pc = core.path_c[i];
                    *v = (1.0 - c1 - cmu) * *v + c1 * (pc * pc + correction * *v) + cmu * rank_mu;
                    *v = v.max(1e-300);
                }
            }
            Model::LimitedMemory { directions } => {
                // step size: rank-based path length control with the fast LM-MA rate
                let cs = (2.0 * params.lambda as f64 / n as f64).min(1.0);
                let coef = (params.mu_eff * cs * (2.0 - cs)).sqrt();
                for (p, z) in core.path_sigma.iter_mut().zip(z_w) {
                    *p = (1.0 - cs) * *p + coef * z;
                }
                if directions.len() < LIMITED_MEMORY_VECTORS.min(n) {
                    directions.push(vec![0.0; n]);
                }
                for (j, m) in directions.iter_mut().enumerate() {
                    let (_, learn) = direction_rates(n, params.lambda, j);
                    let c = (params.mu_eff * learn * (2.0 - learn)).sqrt();
                    for (mi, z) in m.iter_mut().zip(z_w) {
                        *mi = (1.0 - learn) * *mi + c * z;
                    }
                }
                let ps_sq: f64 = core.path_sigma.iter().map(|p| p * p).sum();
                core.sigma *= (cs / 4.0 * (ps_sq / n as f64 - 1.0)).exp();
            }
            Model::Full {
                covariance,
                basis,
                scales,
                decomposed_at,
            } => {
                let whitened = mat_vec(basis, z_w);
                let h_sigma = csa_update(core, params, &whitened, y_w);
                let (c1, cmu, cc) = (params.c_1, params.c_mu, params.c_c);
                let correction = if h_sigma { 0.0 } else { cc * (2.0 - cc) };
                let pc = &core.path_c;
                for i in 0..n {
                    for j in 0..=i {
                        let rank_mu: f64 = params
                            .weights
                            .iter()
                            .zip(selected_y)
                            .map(|(w, y)| w * y[i] * y[j])
                            .sum();
                        let old = covariance[i * n + j];
                        let v = (1.0 - c1 - cmu) * old + c1 * (pc[i] * pc[j] + correction * old) + cmu * rank_mu;
                        covariance[i * n + j] = v;
                        covariance[j * n + i] = v;
                    }
                }
                let interval = (1.0 / ((c1 + cmu) * n as f64 * 10.0)).floor().max(1.0) as u64;
                let next = core.generation + 1;
                if next - *decomposed_at >= interval {
                    let eig = DMatrix::from_row_slice(n, n, covariance).symmetric_eigen();
                    for i in 0..n {
                        scales[i] = eig.eigenvalues[i].max(1e-300).sqrt();
                        for j in 0..n {
                            basis[i * n + j] = eig.eigenvectors[(i, j)];
                        }
                    }
                    *decomposed_at = next;
                }
            }
            Model::RankOne { factor, inverse } => {
                let h_sigma = csa_update(core, params, z_w, y_w);
                let c1 = params.c_1;
                let cc = params.c_c;
                // with h_sigma false the path stalls; shrink C as in the full update
                let alpha = if h_sigma { 1.0 - c1 } else { 1.0 - c1 + c1 * cc * (2.0 - cc) };
                let v = mat_vec(inverse, &core.path_c);
                let nv = dot(&v, &v);
                if nv > 1e-300 && alpha > 0.0 {
                    let sa = alpha.sqrt();
                    let root = (alpha + c1 * nv).sqrt();
                    let gamma = (root - sa) / nv;
                    let pc = &core.path_c;
                    // A' = sqrt(a) A + gamma (A v) v^T, where A v = p_c
                    for i in 0..n {
                        for j in 0..n {
                            factor[i * n + j] = sa * factor[i * n + j] + gamma * pc[i] * v[j];
                        }
                    }
                    // A'^-1 = A^-1 / sqrt(a) - gamma / (sqrt(a) root) v (v^T A^-1)
                    let vt_inv: Vec<f64> = (0..n).map(|j| (0..n).map(|i| v[i] * inverse[i * n + j]).sum()).collect();
                    let k = gamma / (sa * root);
                    for i in 0..n {
                        for j in 0..n {
                            inverse[i * n + j] = inverse[i * n + j] / sa - k * v[i] * vt_inv[j];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::strategy::run_generation;

    fn minimise(mut model: Model, n: usize, generations: usize, f: fn(&[f64]) -> f64) -> f64 {
        let params = StrategyParams::new(n);
        let mut core = EsCore::new(vec![3.0; n], 2.0, 11);
        let mut best = f64::INFINITY;
        for _ in 0..generations {
            let g = run_generation(&mut core, &mut model, &params, (-10.0, 10.0), &mut |x| f(x));
            best = best.min(g.costs[0]);
        }
        best
    }

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn ellipsoid(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        x.iter()
            .enumerate()
            .map(|(i, v)| 1e6f64.powf(i as f64 / (n - 1.0)) * v * v)
            .sum()
    }

    fn rotated_ellipsoid(x: &[f64]) -> f64 {
        // pairwise rotation by 45 degrees
        let mut y = x.to_vec();
        for i in (0..x.len() - 1).step_by(2) {
            let (a, b) = (x[i], x[i + 1]);
            y[i] = (a + b) / 2f64.sqrt();
            y[i + 1] = (a - b) / 2f64.sqrt();
        }
        ellipsoid(&y)
    }

    #[test]
    fn every_model_solves_sphere() {
        let n = 10;
        for model in [Model::separable(n), Model::limited_memory(n), Model::full(n), Model::rank_one(n)] {
            let name = format!("{model:?}").chars().take(12).collect::<String>();
            let best = minimise(model, n, 2500, sphere);
            assert!(best < 1e-10, "{name}: {best}");
        }
    }

    #[test]
    fn separable_model_learns_axis_scaling() {
        assert!(minimise(Model::separable(10), 10, 3000, ellipsoid) < 1e-8);
    }

    #[test]
    fn full_model_learns_rotated_scaling() {
        assert!(minimise(Model::full(10), 10, 3000, rotated_ellipsoid) < 1e-8);
    }

    #[test]
    fn rank_one_factor_stays_inverse() {
        let n = 6;
        let params = StrategyParams::new(n);
        let mut core = EsCore::new(vec![3.0; n], 2.0, 5);
        let mut model = Model::rank_one(n);
        for _ in 0..200 {
            run_generation(&mut core, &mut model, &params, (-10.0, 10.0), &mut |x| rotated_ellipsoid(x));
        }
        let Model::RankOne { factor, inverse } = &model else { unreachable!() };
        let a = DMatrix::from_row_slice(n, n, factor);
        let b = DMatrix::from_row_slice(n, n, inverse);
        let err = (a * b - DMatrix::<f64>::identity(n, n)).abs().max();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn limited_memory_keeps_at_most_ten_vectors() {
        let n = 40;
        let params = StrategyParams::new(n);
        let mut core = EsCore::new(vec![1.0; n], 1.0, 5);
        let mut model = Model::limited_memory(n);
        for _ in 0..30 {
            run_generation(&mut core, &mut model, &params, (-10.0, 10.0), &mut |x| sphere(x));
        }
        assert_eq!(model.state_len(), LIMITED_MEMORY_VECTORS * n);
    }
}
