//! Shared evolution-strategy machinery: strategy constants, the serialisable
//! RNG, bound repair and the generation loop common to every pool member.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::models::Model;

/// Default offspring count for dimension `dim`.
pub fn population_size(dim: usize) -> usize {
    4 + (3.0 * (dim.max(1) as f64).ln()).floor() as usize
}

/// Constants of a weighted-recombination ES in dimension `n`.
#[derive(Debug, Clone)]
pub struct StrategyParams {
    pub n: usize,
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
}

impl StrategyParams {
    pub fn new(n: usize) -> Self {
        let nf = n as f64;
        let lambda = population_size(n);
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        StrategyParams {
            n,
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

/// ChaCha8 generator whose position is part of the serialised state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    seed: [u8; 32],
    stream: u64,
    word_pos: u128,
}

impl RngState {
    pub fn from_seed(seed: u64) -> Self {
        Self::capture(&ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Reflect once off the violated bound, then clamp.
pub fn reflect_into(x: &mut [f64], lo: f64, hi: f64) {
    for v in x.iter_mut() {
        if *v < lo {
            *v = lo + (lo - *v);
        } else if *v > hi {
            *v = hi - (*v - hi);
        }
        *v = v.clamp(lo, hi);
    }
}

fn inside(x: &[f64], lo: f64, hi: f64) -> bool {
    x.iter().all(|v| *v >= lo && *v <= hi)
}

/// State every pool member carries besides its covariance model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsCore {
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub path_sigma: Vec<f64>,
    pub path_c: Vec<f64>,
    pub generation: u64,
    pub rng: RngState,
    /// Solution placed into the first slot of the next generation.
    pub pending_elite: Option<Vec<f64>>,
}

impl EsCore {
    pub fn new(mean: Vec<f64>, sigma: f64, seed: u64) -> Self {
        let n = mean.len();
        EsCore {
            mean,
            sigma,
            path_sigma: vec![0.0; n],
            path_c: vec![0.0; n],
            generation: 0,
            rng: RngState::from_seed(seed),
            pending_elite: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// One evaluated generation, best first.
pub struct Generation {
    pub positions: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
}

fn standard_normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Sample, evaluate and adapt for one generation.
pub fn run_generation(
    core: &mut EsCore,
    model: &mut Model,
    params: &StrategyParams,
    bounds: (f64, f64),
    objective: &mut dyn FnMut(&[f64]) -> f64,
) -> Generation {
    let n = core.dim();
    let (lo, hi) = bounds;
    let mut rng = core.rng.restore();
    let mut zs = Vec::with_capacity(params.lambda);
    let mut ys = Vec::with_capacity(params.lambda);
    let mut xs = Vec::with_capacity(params.lambda);
    let elite = core.pending_elite.take();

    for i in 0..params.lambda {
        if i == 0 {
            if let Some(e) = &elite {
                // only injected into a freshly initialised identity model
                let y: Vec<f64> = e.iter().zip(&core.mean).map(|(a, m)| (a - m) / core.sigma).collect();
                zs.push(y.clone());
                ys.push(y);
                xs.push(e.clone());
                continue;
            }
        }
        let mut attempt = 0;
        loop {
            let z = standard_normal(&mut rng, n);
            let y = model.transform(&z, params);
            let mut x: Vec<f64> = core.mean.iter().zip(&y).map(|(m, v)| m + core.sigma * v).collect();
            if inside(&x, lo, hi) || attempt == 1 {
                reflect_into(&mut x, lo, hi);
                zs.push(z);
                ys.push(y);
                xs.push(x);
                break;
            }
            attempt += 1;
        }
    }

    let costs: Vec<f64> = xs
        .iter()
        .map(|x| {
            let c = objective(x);
            if c.is_finite() {
                c
            } else {
                f64::MAX
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..params.lambda).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));

    let selected = &order[..params.mu];
    let mut z_w = vec![0.0; n];
    let mut y_w = vec![0.0; n];
    let mut new_mean = vec![0.0; n];
    for (w, &i) in params.weights.iter().zip(selected) {
        for d in 0..n {
            z_w[d] += w * zs[i][d];
            y_w[d] += w * ys[i][d];
            new_mean[d] += w * xs[i][d];
        }
    }
    core.mean = new_mean;

    let selected_y: Vec<&[f64]> = selected.iter().map(|&i| ys[i].as_slice()).collect();
    model.adapt(core, params, &z_w, &y_w, &selected_y);
    core.sigma = core.sigma.clamp(1e-300, 1e3 * (hi - lo));
    core.generation += 1;
    core.rng = RngState::capture(&rng);

    Generation {
        positions: order.iter().map(|&i| xs[i].clone()).collect(),
        costs: order.iter().map(|&i| costs[i]).collect(),
    }
}

/// Cumulative step-size adaptation shared by the CMA-family members.
pub(crate) fn csa_update(core: &mut EsCore, params: &StrategyParams, whitened: &[f64], y_w: &[f64]) -> bool {
    let cs = params.c_sigma;
    let coef = (cs * (2.0 - cs) * params.mu_eff).sqrt();
    for (p, w) in core.path_sigma.iter_mut().zip(whitened) {
        *p = (1.0 - cs) * *p + coef * w;
    }
    let ps_norm = norm_sq(&core.path_sigma).sqrt();
    let g = (core.generation + 1) as f64;
    let h_sigma = ps_norm / (1.0 - (1.0 - cs).powf(2.0 * g)).sqrt()
        < (1.4 + 2.0 / (params.n as f64 + 1.0)) * params.chi_n;
    let cc = params.c_c;
    let coef_c = if h_sigma { (cc * (2.0 - cc) * params.mu_eff).sqrt() } else { 0.0 };
    for (p, y) in core.path_c.iter_mut().zip(y_w) {
        *p = (1.0 - cc) * *p + coef_c * y;
    }
    core.sigma *= ((cs / params.d_sigma) * (ps_norm / params.chi_n - 1.0)).exp();
    h_sigma
}
