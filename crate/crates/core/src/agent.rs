//! Actor-critic policy over the optimizer pool: shared tanh embedding,
//! masked softmax actor, scalar critic, PPO loss gradients and checkpoints.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::features::StateVector;

pub const EMBED: usize = 64;
pub const HIDDEN: usize = 16;
/// Logit offset applied to masked actions before the softmax.
pub const MASK_LOGIT: f64 = -1e9;
/// Dimension feature above which the low tier is masked.
pub const MASK_THRESHOLD: f64 = 0.5;

const MAGIC: &[u8; 8] = b"LHCCAGNT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub state_dim: usize,
    pub actions: usize,
    pub w_embed: Range<usize>,
    pub b_embed: Range<usize>,
    pub w_actor1: Range<usize>,
    pub b_actor1: Range<usize>,
    pub w_actor2: Range<usize>,
    pub b_actor2: Range<usize>,
    pub w_critic1: Range<usize>,
    pub b_critic1: Range<usize>,
    pub w_critic2: Range<usize>,
    pub b_critic2: Range<usize>,
    pub len: usize,
}

impl Layout {
    pub fn new(state_dim: usize, actions: usize) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let w_embed = take(EMBED * state_dim);
        let b_embed = take(EMBED);
        let w_actor1 = take(HIDDEN * EMBED);
        let b_actor1 = take(HIDDEN);
        let w_actor2 = take(actions * HIDDEN);
        let b_actor2 = take(actions);
        let w_critic1 = take(HIDDEN * EMBED);
        let b_critic1 = take(HIDDEN);
        let w_critic2 = take(HIDDEN);
        let b_critic2 = take(1);
        Layout {
            state_dim,
            actions,
            w_embed,
            b_embed,
            w_actor1,
            b_actor1,
            w_actor2,
            b_actor2,
            w_critic1,
            b_critic1,
            w_critic2,
            b_critic2,
            len: at,
        }
    }
}

/// `y = W x + b` with `W` row-major `out x in`.
fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(r, bias)| bias + w[r * x.len()..(r + 1) * x.len()].iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
        .collect()
}

/// Accumulate `dW += g x^T`, `db += g` and return `W^T g`.
fn affine_backward(w: &[f64], x: &[f64], g: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let n = x.len();
    let mut dx = vec![0.0; n];
    for (r, gr) in g.iter().enumerate() {
        db[r] += gr;
        let row = &w[r * n..(r + 1) * n];
        let drow = &mut dw[r * n..(r + 1) * n];
        for c in 0..n {
            drow[c] += gr * x[c];
            dx[c] += gr * row[c];
        }
    }
    dx
}

fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let big = rows.max(cols);
    let small = rows.min(cols);
    let g = DMatrix::<f64>::from_fn(big, small, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..small {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = gain * if rows >= cols { q[(i, j)] } else { q[(j, i)] };
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub policy: Vec<f64>,
    pub value: f64,
    pub embedding: Vec<f64>,
    pub logits: Vec<f64>,
    pub mask: Vec<bool>,
    actor_hidden: Vec<f64>,
    critic_hidden: Vec<f64>,
}

/// One recorded decision used in a PPO update.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action: usize,
    pub advantage: f64,
    pub ret: f64,
    pub old_log_prob: f64,
    pub old_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub clip: f64,
    pub value: f64,
    pub entropy: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            clip: 0.2,
            value: 0.5,
            entropy: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Network weights for a pool of `L` optimizers whose first `high_tier`
/// members are always selectable.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    layout: Layout,
    high_tier: usize,
    params: Vec<f64>,
}

impl Agent {
    pub fn new(state_dim: usize, actions: usize, high_tier: usize, seed: u64) -> Result<Self> {
        if actions == 0 || high_tier == 0 || high_tier > actions {
            return Err(Error::config("the pool needs at least one always-available optimizer"));
        }
        let layout = Layout::new(state_dim, actions);
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let mut params = vec![0.0; layout.len];
        let mut fill = |r: &Range<usize>, rows: usize, cols: usize, gain: f64| {
            params[r.clone()].copy_from_slice(&orthogonal(rows, cols, gain, &mut rng));
        };
        fill(&layout.w_embed, EMBED, state_dim, 1.0);
        fill(&layout.w_actor1, HIDDEN, EMBED, 1.0);
        fill(&layout.w_actor2, actions, HIDDEN, 0.01);
        fill(&layout.w_critic1, HIDDEN, EMBED, 1.0);
        fill(&layout.w_critic2, 1, HIDDEN, 1.0);
        Ok(Agent {
            layout,
            high_tier,
            params,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn pool_size(&self) -> usize {
        self.layout.actions
    }

    pub fn high_tier(&self) -> usize {
        self.high_tier
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn mask(&self, state: &[f64]) -> Vec<bool> {
        let restricted = state[0] > MASK_THRESHOLD;
        (0..self.layout.actions).map(|l| restricted && l >= self.high_tier).collect()
    }

    pub fn forward(&self, state: &StateVector) -> Result<ForwardOutput> {
        self.forward_slice(state.as_slice())
    }

    fn forward_slice(&self, s: &[f64]) -> Result<ForwardOutput> {
        let ly = &self.layout;
        if s.len() != ly.state_dim {
            return Err(Error::contract(format!(
                "state has {} entries, the network expects {}",
                s.len(),
                ly.state_dim
            )));
        }
        let p = &self.params;
        let embedding: Vec<f64> = affine(&p[ly.w_embed.clone()], &p[ly.b_embed.clone()], s)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let actor_hidden: Vec<f64> = affine(&p[ly.w_actor1.clone()], &p[ly.b_actor1.clone()], &embedding)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let mask = self.mask(s);
        let logits: Vec<f64> = affine(&p[ly.w_actor2.clone()], &p[ly.b_actor2.clone()], &actor_hidden)
            .into_iter()
            .zip(&mask)
            .map(|(z, &m)| if m { z + MASK_LOGIT } else { z })
            .collect();
        let top = logits
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| !m)
            .map(|(z, _)| *z)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut policy: Vec<f64> = logits
            .iter()
            .zip(&mask)
            .map(|(z, &m)| if m { 0.0 } else { (z - top).exp() })
            .collect();
        let total: f64 = policy.iter().sum();
        policy.iter_mut().for_each(|q| *q /= total);

        let critic_hidden: Vec<f64> = affine(&p[ly.w_critic1.clone()], &p[ly.b_critic1.clone()], &embedding)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let value = affine(&p[ly.w_critic2.clone()], &p[ly.b_critic2.clone()], &critic_hidden)[0];
        Ok(ForwardOutput {
            policy,
            value,
            embedding,
            logits,
            mask,
            actor_hidden,
            critic_hidden,
        })
    }

    /// Draw an action; returns it with its log-probability and the value estimate.
    pub fn sample_action(&self, state: &StateVector, rng: &mut ChaCha8Rng) -> Result<(usize, f64, f64)> {
        let out = self.forward(state)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut action = None;
        for (l, q) in out.policy.iter().enumerate() {
            if *q > 0.0 {
                acc += q;
                action = Some(l);
                if u < acc {
                    break;
                }
            }
        }
        let action = action.ok_or_else(|| Error::contract("every action is masked"))?;
        Ok((action, out.policy[action].ln(), out.value))
    }

    /// Most probable action, lowest index on ties.
    pub fn greedy_action(&self, state: &StateVector) -> Result<(usize, f64, f64)> {
        let out = self.forward(state)?;
        let mut best = 0;
        for (l, q) in out.policy.iter().enumerate() {
            if *q > out.policy[best] {
                best = l;
            }
        }
        Ok((best, out.policy[best].ln(), out.value))
    }

    /// PPO loss over the batch and its gradient in the flat parameter layout.
    pub fn gradients(&self, batch: &[Transition], w: &LossWeights) -> Result<(Vec<f64>, LossReport)> {
        if batch.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let ly = &self.layout;
        let p = &self.params;
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; ly.len];
        let mut report = LossReport::default();

        for (index, tr) in batch.iter().enumerate() {
            let s = tr.state.as_slice();
            let out = self.forward_slice(s)?;
            let log_pi = out.policy[tr.action].ln();
            let ratio = (log_pi - tr.old_log_prob).exp();
            let clipped = ratio.clamp(1.0 - w.clip, 1.0 + w.clip);
            let surr1 = ratio * tr.advantage;
            let surr2 = clipped * tr.advantage;
            let policy_loss = -surr1.min(surr2);

            let entropy: f64 = -out
                .policy
                .iter()
                .filter(|q| **q > 0.0)
                .map(|q| q * q.ln())
                .sum::<f64>();

            let v = out.value;
            let v_clip = tr.old_value + (v - tr.old_value).clamp(-w.clip, w.clip);
            let plain = (v - tr.ret).powi(2);
            let limited = (v_clip - tr.ret).powi(2);
            let value_loss = plain.max(limited);

            let loss = policy_loss + w.value * value_loss - w.entropy * entropy;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { index });
            }
            report.total += scale * loss;
            report.policy += scale * policy_loss;
            report.value += scale * value_loss;
            report.entropy += scale * entropy;
            report.approx_kl += scale * (tr.old_log_prob - log_pi);
            if (ratio - 1.0).abs() > w.clip {
                report.clip_fraction += scale;
            }

            // d loss / d logits over the unmasked support
            let d_log_pi = if surr1 <= surr2 { -tr.advantage * ratio } else { 0.0 };
            let mut d_logits = vec![0.0; ly.actions];
            for l in 0..ly.actions {
                let q = out.policy[l];
                if out.mask[l] || q == 0.0 {
                    continue;
                }
                let onehot = if l == tr.action { 1.0 } else { 0.0 };
                d_logits[l] = d_log_pi * (onehot - q) + w.entropy * q * (q.ln() + entropy);
                d_logits[l] *= scale;
            }
            let d_value = scale
                * w.value
                * if plain >= limited {
                    2.0 * (v - tr.ret)
                } else if (v - tr.old_value).abs() < w.clip {
                    2.0 * (v_clip - tr.ret)
                } else {
                    0.0
                };

            let (wa2, ba2) = grad.split_at_mut(ly.b_actor2.start);
            let dh = affine_backward(
                &p[ly.w_actor2.clone()],
                &out.actor_hidden,
                &d_logits,
                &mut wa2[ly.w_actor2.clone()],
                &mut ba2[..ly.actions],
            );
            let dpre: Vec<f64> = dh.iter().zip(&out.actor_hidden).map(|(g, h)| g * (1.0 - h * h)).collect();
            let (wa1, ba1) = grad.split_at_mut(ly.b_actor1.start);
            let mut de = affine_backward(
                &p[ly.w_actor1.clone()],
                &out.embedding,
                &dpre,
                &mut wa1[ly.w_actor1.clone()],
                &mut ba1[..HIDDEN],
            );

            let (wc2, bc2) = grad.split_at_mut(ly.b_critic2.start);
            let dhc = affine_backward(
                &p[ly.w_critic2.clone()],
                &out.critic_hidden,
                &[d_value],
                &mut wc2[ly.w_critic2.clone()],
                &mut bc2[..1],
            );
            let dprec: Vec<f64> = dhc.iter().zip(&out.critic_hidden).map(|(g, h)| g * (1.0 - h * h)).collect();
            let (wc1, bc1) = grad.split_at_mut(ly.b_critic1.start);
            let de_critic = affine_backward(
                &p[ly.w_critic1.clone()],
                &out.embedding,
                &dprec,
                &mut wc1[ly.w_critic1.clone()],
                &mut bc1[..HIDDEN],
            );
            de.iter_mut().zip(&de_critic).for_each(|(a, b)| *a += b);

            let dpre_e: Vec<f64> = de.iter().zip(&out.embedding).map(|(g, e)| g * (1.0 - e * e)).collect();
            let (we, be) = grad.split_at_mut(ly.b_embed.start);
            affine_backward(&p[ly.w_embed.clone()], s, &dpre_e, &mut we[ly.w_embed.clone()], &mut be[..EMBED]);
        }
        Ok((grad, report))
    }

    /// The scalar loss alone, for finite-difference checks.
    pub fn loss(&self, batch: &[Transition], w: &LossWeights) -> Result<f64> {
        Ok(self.gradients(batch, w)?.1.total)
    }

    /// Checkpoint layout: magic `LHCCAGNT`, then little-endian u32 version,
    /// state length, L, high-tier size, embedding width and hidden width,
    /// a u64 parameter count and that many f64 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        for v in [
            CHECKPOINT_VERSION,
            self.layout.state_dim as u32,
            self.layout.actions as u32,
            self.high_tier as u32,
            EMBED as u32,
            HIDDEN as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in &self.params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decode a checkpoint, refusing one built for a different pool size.
    pub fn from_bytes(bytes: &[u8], expected_pool: Option<usize>) -> Result<Self> {
        let bad = |message: String| Error::Parse {
            line: 0,
            field: "checkpoint".into(),
            message,
        };
        if bytes.len() < 40 || &bytes[..8] != MAGIC {
            return Err(bad("not an agent checkpoint".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().expect("4 bytes")) as usize;
        let (version, state_dim, actions, high_tier, embed, hidden) = (word(0), word(1), word(2), word(3), word(4), word(5));
        if version as u32 > CHECKPOINT_VERSION {
            return Err(bad(format!("checkpoint version {version} is newer than {CHECKPOINT_VERSION}")));
        }
        if embed != EMBED || hidden != HIDDEN {
            return Err(bad(format!("layer widths {embed}/{hidden} differ from {EMBED}/{HIDDEN}")));
        }
        if let Some(l) = expected_pool {
            if l != actions {
                return Err(Error::config(format!("checkpoint was trained for a pool of {actions}, not {l}")));
            }
        }
        let layout = Layout::new(state_dim, actions);
        let count = u64::from_le_bytes(bytes[32..40].try_into().expect("8 bytes")) as usize;
        if count != layout.len || bytes.len() != 40 + 8 * count {
            return Err(bad(format!("payload holds {count} values, the header implies {}", layout.len)));
        }
        let params: Vec<f64> = bytes[40..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if params.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite weight".into()));
        }
        if high_tier == 0 || high_tier > actions {
            return Err(bad(format!("high tier {high_tier} out of range")));
        }
        Ok(Agent {
            layout,
            high_tier,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path, expected_pool: Option<usize>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, expected_pool)
    }
}
