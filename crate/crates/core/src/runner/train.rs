//! PPO training over a set of problem instances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episode::{EpisodeConfig, Environment};
use crate::agent::{Agent, LossReport, LossWeights, Transition};
use crate::assembly::{mix_seed, ProblemInstance};
use crate::decomp::DecompositionResult;
use crate::error::{Error, Result};
use crate::features::{clamp_cost, StateVector};
use crate::pool::PoolConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_step: usize,
    pub k_epoch: usize,
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate after every iteration.
    pub lr_decay: f64,
    pub clip: f64,
    pub value_weight: f64,
    pub entropy_weight: f64,
    pub gae_lambda: f64,
    pub grad_norm_clip: f64,
    pub parallel_envs: usize,
    pub iterations: usize,
    pub episode: EpisodeConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_step: 10,
            k_epoch: 12,
            learning_rate: 1e-5,
            lr_decay: 0.95,
            clip: 0.2,
            value_weight: 0.5,
            entropy_weight: 0.01,
            gae_lambda: 0.95,
            grad_norm_clip: 0.5,
            parallel_envs: 4,
            iterations: 30,
            episode: EpisodeConfig {
                max_fes: 1_000_000,
                ..Default::default()
            },
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.n_step as f64,
            self.k_epoch as f64,
            self.learning_rate,
            self.lr_decay,
            self.value_weight,
            self.gae_lambda,
            self.grad_norm_clip,
            self.parallel_envs as f64,
            self.iterations as f64,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.entropy_weight < 0.0 {
            return Err(Error::config("training parameters must be positive"));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::config("clip must lie in (0, 1)"));
        }
        self.episode.validate()
    }

    fn weights(&self) -> LossWeights {
        LossWeights {
            clip: self.clip,
            value: self.value_weight,
            entropy: self.entropy_weight,
        }
    }
}

/// Adam with global gradient-norm clipping.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], max_norm: f64) {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if norm > max_norm { max_norm / norm } else { 1.0 };
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i] * scale;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.learning_rate * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

struct Decision {
    state: StateVector,
    action: usize,
    reward: f64,
    log_prob: f64,
    value: f64,
}

struct Segment {
    decisions: Vec<Decision>,
    bootstrap: f64,
}

/// n-step returns and GAE advantages of one segment.
fn returns_and_advantages(seg: &Segment, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = seg.decisions.len();
    let mut returns = vec![0.0; n];
    let mut advantages = vec![0.0; n];
    let mut ret = seg.bootstrap;
    let mut gae = 0.0;
    let mut next_value = seg.bootstrap;
    for i in (0..n).rev() {
        let d = &seg.decisions[i];
        ret = d.reward + gamma * ret;
        returns[i] = ret;
        let delta = d.reward + gamma * next_value - d.value;
        gae = delta + gamma * lambda * gae;
        advantages[i] = gae;
        next_value = d.value;
    }
    (returns, advantages)
}

/// Per-iteration training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub learning_rate: f64,
    pub updates: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_reward: f64,
    /// Mean of log10(c*_0 / c*_end) over the iteration's episodes.
    pub mean_log_gain: f64,
    pub events: Vec<String>,
}

pub struct TrainingProblem<'a> {
    pub instance: &'a ProblemInstance,
    pub decomposition: &'a DecompositionResult,
}

fn collect_segment(env: &mut Environment, agent: &Agent, rng: &mut ChaCha8Rng, n_step: usize) -> Result<Segment> {
    let mut decisions = Vec::with_capacity(n_step);
    for _ in 0..n_step {
        let Some(state) = env.observe()? else { break };
        let (action, log_prob, value) = agent.sample_action(&state, rng)?;
        let outcome = env.act(action)?;
        decisions.push(Decision {
            state,
            action,
            reward: outcome.reward,
            log_prob,
            value,
        });
        if outcome.done {
            break;
        }
    }
    let bootstrap = match env.observe()? {
        Some(next) => agent.forward(&next)?.value,
        None => 0.0,
    };
    Ok(Segment { decisions, bootstrap })
}

/// Train `agent` in place; returns one log entry per iteration.
pub fn train(
    problems: &[TrainingProblem],
    pool: &PoolConfig,
    agent: &mut Agent,
    cfg: &TrainConfig,
) -> Result<Vec<IterationLog>> {
    cfg.validate()?;
    if problems.is_empty() {
        return Err(Error::config("the training set is empty"));
    }
    if agent.pool_size() != pool.len() {
        return Err(Error::config("agent and pool sizes differ"));
    }
    let weights = cfg.weights();
    let mut adam = Adam::new(agent.params().len(), cfg.learning_rate);
    let mut logs = Vec::with_capacity(cfg.iterations);

    for iteration in 0..cfg.iterations {
        let mut log = IterationLog {
            iteration,
            learning_rate: adam.learning_rate,
            updates: 0,
            policy_loss: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
            mean_reward: 0.0,
            mean_log_gain: 0.0,
            events: Vec::new(),
        };
        let mut reward_sum = 0.0;
        let mut reward_count = 0usize;
        let mut gains = Vec::new();

        for (chunk_index, chunk) in problems.chunks(cfg.parallel_envs).enumerate() {
            // Each environment counts evaluations on its own copy of the instance.
            let instances: Vec<ProblemInstance> = chunk.iter().map(|p| p.instance.clone()).collect();
            let mut envs = chunk
                .iter()
                .zip(&instances)
                .enumerate()
                .map(|(i, (p, instance))| {
                    let seed = mix_seed(cfg.seed, ((iteration as u64) << 32) | ((chunk_index * cfg.parallel_envs + i) as u64));
                    let env = Environment::new(instance, p.decomposition, pool.clone(), cfg.episode.clone(), seed)?;
                    Ok((env, ChaCha8Rng::seed_from_u64(mix_seed(seed, 2))))
                })
                .collect::<Result<Vec<_>>>()?;

            while envs.iter().any(|(e, _)| !e.is_done()) {
                let frozen: &Agent = agent;
                let segments = envs
                    .par_iter_mut()
                    .filter(|(e, _)| !e.is_done())
                    .map(|(env, rng)| collect_segment(env, frozen, rng, cfg.n_step))
                    .collect::<Result<Vec<_>>>()?;

                let mut batch = Vec::new();
                for seg in &segments {
                    let (returns, advantages) = returns_and_advantages(seg, cfg.episode.gamma, cfg.gae_lambda);
                    for ((d, ret), adv) in seg.decisions.iter().zip(returns).zip(advantages) {
                        reward_sum += d.reward;
                        reward_count += 1;
                        batch.push(Transition {
                            state: d.state.clone(),
                            action: d.action,
                            advantage: adv,
                            ret,
                            old_log_prob: d.log_prob,
                            old_value: d.value,
                        });
                    }
                }
                if batch.is_empty() {
                    break;
                }
                let mean_adv = batch.iter().map(|t| t.advantage).sum::<f64>() / batch.len() as f64;
                let var = batch.iter().map(|t| (t.advantage - mean_adv).powi(2)).sum::<f64>() / batch.len() as f64;
                let sd = var.sqrt().max(1e-8);
                for t in &mut batch {
                    t.advantage = (t.advantage - mean_adv) / sd;
                }

                let remaining: f64 = envs
                    .iter()
                    .map(|(e, _)| e.remaining() as f64 / cfg.episode.max_fes as f64)
                    .sum::<f64>()
                    / envs.len() as f64;
                let epochs = ((cfg.k_epoch as f64 * remaining).round() as usize).max(1);
                let mut last = LossReport::default();
                for _ in 0..epochs {
                    let (grad, report) = agent.gradients(&batch, &weights)?;
                    if report.value > 1e6 {
                        adam.learning_rate *= 0.5;
                        log.events.push(format!(
                            "value loss {:.3e} above 1e6, learning rate halved to {:.3e}",
                            report.value, adam.learning_rate
                        ));
                    }
                    adam.step(agent.params_mut(), &grad, cfg.grad_norm_clip);
                    last = report;
                    log.updates += 1;
                }
                log.policy_loss = last.policy;
                log.value_loss = last.value;
                log.entropy = last.entropy;
            }
            for (env, _) in &envs {
                gains.push(clamp_cost(env.initial_cost()).log10() - clamp_cost(env.best_cost()).log10());
            }
        }
        log.mean_reward = reward_sum / reward_count.max(1) as f64;
        log.mean_log_gain = gains.iter().sum::<f64>() / gains.len().max(1) as f64;
        logs.push(log);
        adam.learning_rate *= cfg.lr_decay;
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::LossWeights;
    use crate::assembly::InstanceConfig;
    use crate::bench::BasicFunction;
    use crate::decomp::ground_truth_decompose;
    use crate::features::state_len;

    #[test]
    fn returns_bootstrap_and_discount() {
        let d = |r: f64, v: f64| Decision {
            state: StateVector::from_vec(vec![]),
            action: 0,
            reward: r,
            log_prob: 0.0,
            value: v,
        };
        let seg = Segment {
            decisions: vec![d(1.0, 0.5), d(2.0, 0.25)],
            bootstrap: 4.0,
        };
        let (ret, adv) = returns_and_advantages(&seg, 0.5, 1.0);
        assert_eq!(ret, vec![1.0 + 0.5 * 2.0 + 0.25 * 4.0, 2.0 + 0.5 * 4.0]);
        // with lambda = 1 the advantage is the return minus the value
        assert_eq!(adv, vec![3.0 - 0.5, 4.0 - 0.25]);
    }

    #[test]
    fn adam_clips_the_gradient_norm() {
        let mut adam = Adam::new(2, 0.1);
        let mut p = vec![0.0, 0.0];
        adam.step(&mut p, &[300.0, 400.0], 0.5);
        // first Adam step moves each coordinate by lr * sign
        assert!((p[0] + 0.1).abs() < 1e-6 && (p[1] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn zero_advantage_without_entropy_keeps_policy() {
        let agent = Agent::new(state_len(4), 4, 2, 1).unwrap();
        let state = StateVector::from_vec((0..20).map(|i| i as f64 / 40.0).collect());
        let lp = agent.forward(&state).unwrap().policy[1].ln();
        let batch = vec![Transition {
            state,
            action: 1,
            advantage: 0.0,
            ret: 0.3,
            old_log_prob: lp,
            old_value: 0.0,
        }];
        let w = LossWeights {
            entropy: 0.0,
            ..Default::default()
        };
        let (grad, _) = agent.gradients(&batch, &w).unwrap();
        let mut trained = agent.clone();
        Adam::new(grad.len(), 1e-2).step(trained.params_mut(), &grad, 0.5);
        let ly = agent.layout();
        for r in [ly.w_actor1.clone(), ly.b_actor1.clone(), ly.w_actor2.clone(), ly.b_actor2.clone()] {
            assert_eq!(trained.params()[r.clone()], agent.params()[r]);
        }
    }

    #[test]
    fn short_training_run_logs_each_iteration() {
        let inst = ProblemInstance::build(InstanceConfig::new(
            vec![10, 20],
            vec![BasicFunction::Rastrigin, BasicFunction::Elliptic],
            1,
            0,
        ))
        .unwrap();
        let dec = ground_truth_decompose(&inst);
        let problems = [TrainingProblem {
            instance: &inst,
            decomposition: &dec,
        }];
        let mut agent = Agent::new(state_len(4), 4, 2, 0).unwrap();
        let before = agent.clone();
        let cfg = TrainConfig {
            iterations: 2,
            learning_rate: 1e-3,
            episode: EpisodeConfig {
                max_fes: 6000,
                step_fes: 500,
                ..Default::default()
            },
            ..Default::default()
        };
        let logs = train(&problems, &PoolConfig::default(), &mut agent, &cfg).unwrap();
        assert_eq!(logs.len(), 2);
        assert!(logs[0].updates > 0);
        assert!((logs[1].learning_rate - 0.95e-3).abs() < 1e-15);
        assert_ne!(agent, before);
        assert!(agent.params().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn repeated_problem_in_one_batch() {
        let inst = ProblemInstance::build(InstanceConfig::new(vec![8, 8], vec![BasicFunction::Sphere; 2], 1, 3)).unwrap();
        let dec = ground_truth_decompose(&inst);
        let problems: Vec<TrainingProblem> = (0..3)
            .map(|_| TrainingProblem {
                instance: &inst,
                decomposition: &dec,
            })
            .collect();
        let mut agent = Agent::new(state_len(4), 4, 2, 1).unwrap();
        let cfg = TrainConfig {
            iterations: 1,
            parallel_envs: 3,
            episode: EpisodeConfig {
                max_fes: 3000,
                step_fes: 400,
                ..Default::default()
            },
            ..Default::default()
        };
        let logs = train(&problems, &PoolConfig::default(), &mut agent, &cfg).unwrap();
        assert_eq!(logs.len(), 1);
        assert_eq!(inst.fe_count(), 0);
    }
}
