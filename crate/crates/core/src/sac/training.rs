//! The full run: demos and random data, pretraining, then interleaved
//! updates and environment interaction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{greedy_action, pretrain, standard_normal, train_step, AgentNets, StepDiagnostics};
use super::losses::stack_rows;
use super::metrics::{EpisodeRecord, MetricsLog, ROLLING_WINDOW};
use super::{SacConfig, SacError};
use crate::env::{observe, EnvConfig, Reacher, ReacherState};
use crate::expert::{generate_demos, DemoSet, ExpertConfig, ExpertDemoSource};
use crate::nn::policy_sample;
use crate::replay::{relabel_success, BufferMode, Episode, ReplayConfig, ReplayStore, Transition};

/// Expert episodes generated only to measure `N` when no demos are inserted.
pub const REFERENCE_DEMOS: usize = 200;

const AGENT_EPISODE_BASE: u64 = 1 << 32;
const EXTRA_DEMO_BASE: u64 = 1 << 48;

/// Everything a single seeded run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub expert: ExpertConfig,
    pub agent: SacConfig,
    pub replay: ReplayConfig,
    pub max_env_steps: usize,
    /// Stop once the full-window rolling success reaches this value.
    pub stop_at_success: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: MetricsLog,
    pub nets: AgentNets,
    pub relabel_window: usize,
    pub env_steps: usize,
    pub train_steps: usize,
    /// Demo transitions inserted after the initial set to hold the ratio.
    pub demo_transitions_added: usize,
    pub final_buffer_demo_ratio: f64,
}

/// Independent rng streams derived from the run seed.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

mod streams {
    pub const ENV: u64 = 1;
    pub const INIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const BEHAVIOUR: u64 = 4;
    pub const DEMOS: u64 = 5;
    pub const EXTRA_DEMOS: u64 = 6;
}

struct EpisodeInProgress {
    state: ReacherState,
    transitions: Vec<Transition>,
    id: u64,
}

/// Mean diagnostics over the updates since the last logged episode.
#[derive(Default)]
struct LossAccumulator {
    critic: f64,
    actor: f64,
    demo_fraction: f64,
    count: usize,
    last: StepDiagnostics,
}

impl LossAccumulator {
    fn add(&mut self, d: &StepDiagnostics) {
        self.critic += d.critic_loss;
        self.actor += d.actor_loss;
        self.demo_fraction += d.demo_fraction;
        self.count += 1;
        self.last = *d;
    }

    fn take(&mut self) -> (f64, f64, f64) {
        let out = if self.count == 0 {
            (self.last.critic_loss, self.last.actor_loss, self.last.demo_fraction)
        } else {
            let n = self.count as f64;
            (self.critic / n, self.actor / n, self.demo_fraction / n)
        };
        *self = Self {
            last: self.last,
            ..Self::default()
        };
        out
    }
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    env: Reacher,
    store: ReplayStore,
    nets: AgentNets,
    demos: Option<DemoSet>,
    extra_demos: ExpertDemoSource,
    window: usize,
    env_rng: ChaCha8Rng,
    train_rng: ChaCha8Rng,
    behaviour_rng: ChaCha8Rng,
    env_steps: usize,
    train_steps: usize,
    next_episode_id: u64,
    demo_transitions_added: usize,
}

impl Runner<'_> {
    fn agent(&self) -> &SacConfig {
        &self.cfg.agent
    }

    fn start_episode(&mut self) -> Result<EpisodeInProgress, SacError> {
        let reset_p = self.agent().reset_to_demo_prob;
        let state = match &self.demos {
            Some(d) if reset_p > 0.0 && self.behaviour_rng.random::<f64>() < reset_p => {
                let ep = &d.episodes[self.behaviour_rng.random_range(0..d.episodes.len())];
                let t = &ep.transitions[self.behaviour_rng.random_range(0..ep.len())];
                ReacherState::from_observation(&t.s, self.env.config())?
            }
            _ => self.env.reset(&mut self.env_rng),
        };
        let id = self.next_episode_id;
        self.next_episode_id += 1;
        Ok(EpisodeInProgress {
            state,
            transitions: Vec::new(),
            id,
        })
    }

    /// Advances one step; returns the finished episode when it ends.
    fn env_step(&mut self, ep: &mut EpisodeInProgress, action: Vec<f64>) -> Result<Option<Episode>, SacError> {
        let out = self.env.step(&ep.state, &action)?;
        self.env_steps += 1;
        ep.transitions.push(Transition {
            s: observe(&ep.state),
            a: action,
            r: out.reward,
            s_next: observe(&out.state),
            done: out.done,
            truncated: out.done && !out.success,
            is_demo: false,
            episode_id: ep.id,
            step_idx: ep.transitions.len(),
        });
        ep.state = out.state;
        Ok(out.done.then(|| Episode {
            transitions: std::mem::take(&mut ep.transitions),
            success: out.success,
        }))
    }

    fn policy_action(&mut self, obs: &[f64]) -> Result<Vec<f64>, SacError> {
        let x = stack_rows(std::iter::once(obs), obs.len());
        let noise = standard_normal(1, self.nets.action_dim(), &mut self.behaviour_rng);
        let (out, _) = policy_sample(&self.nets.actor, x.view(), noise.view())?;
        Ok(out.action.row(0).to_vec())
    }

    fn random_action(&mut self) -> Vec<f64> {
        (0..self.env.config().action_dim())
            .map(|_| self.behaviour_rng.random_range(-1.0..=1.0))
            .collect()
    }

    fn maintain_ratio(&mut self) -> Result<(), SacError> {
        if self.demos.is_some() && self.store.mode() == BufferMode::Single {
            let b = self.agent().b;
            self.demo_transitions_added += self.store.maintain_demo_ratio(&mut self.extra_demos, b)?;
        }
        Ok(())
    }

    fn random_phase(&mut self) -> Result<(), SacError> {
        let target = self.agent().random_steps.min(self.cfg.max_env_steps);
        let mut collected = 0;
        while collected < target {
            let mut ep = self.start_episode()?;
            loop {
                let a = self.random_action();
                collected += 1;
                if let Some(done) = self.env_step(&mut ep, a)? {
                    self.store.push_episode(&done);
                    break;
                }
            }
        }
        self.maintain_ratio()
    }

    fn finish_episode(&mut self, episode: Episode) -> Result<(), SacError> {
        let stored = if episode.success && self.agent().relabel_success {
            relabel_success(&episode, self.agent().b, self.window)?
        } else {
            episode
        };
        self.store.push_episode(&stored);
        self.maintain_ratio()
    }

    fn run(mut self) -> Result<RunResult, SacError> {
        if let Some(d) = &self.demos {
            self.store.insert_demoset(d, self.cfg.agent.b)?;
        }
        self.random_phase()?;
        if !self.store.is_empty() {
            let diags = pretrain(&mut self.nets, &mut self.store, &self.cfg.agent, &mut self.train_rng)?;
            self.train_steps += diags.len();
        }

        let mut log = MetricsLog::new();
        let mut losses = LossAccumulator::default();
        let mut current: Option<EpisodeInProgress> = None;
        let per_train = self.agent().env_steps_per_train();
        'outer: while self.env_steps < self.cfg.max_env_steps {
            if !self.store.is_empty() {
                let d = train_step(&mut self.nets, &mut self.store, &self.cfg.agent, &mut self.train_rng)
                    .map_err(|e| match e {
                        SacError::NonFinite(msg) => SacError::NonFinite(format!(
                            "{msg} at train step {} / env step {}",
                            self.train_steps, self.env_steps
                        )),
                        other => other,
                    })?;
                self.train_steps += 1;
                losses.add(&d);
            }
            for _ in 0..per_train {
                if self.env_steps >= self.cfg.max_env_steps {
                    break 'outer;
                }
                let mut ep = match current.take() {
                    Some(ep) => ep,
                    None => self.start_episode()?,
                };
                let obs = observe(&ep.state);
                let action = self.policy_action(&obs)?;
                match self.env_step(&mut ep, action)? {
                    None => current = Some(ep),
                    Some(done) => {
                        let (critic_loss, actor_loss, demo_batch_fraction) = losses.take();
                        let rec = *log.push(EpisodeRecord {
                            episode: 0,
                            env_steps: self.env_steps,
                            train_steps: self.train_steps,
                            success: u8::from(done.success),
                            length: done.len(),
                            rolling_success: 0.0,
                            critic_loss,
                            actor_loss,
                            demo_batch_fraction,
                        });
                        self.finish_episode(done)?;
                        if let Some(stop) = self.cfg.stop_at_success {
                            if rec.episode >= ROLLING_WINDOW && rec.rolling_success >= stop {
                                break 'outer;
                            }
                        }
                    }
                }
            }
        }

        Ok(RunResult {
            log,
            relabel_window: self.window,
            env_steps: self.env_steps,
            train_steps: self.train_steps,
            demo_transitions_added: self.demo_transitions_added,
            final_buffer_demo_ratio: self.store.demo_ratio(),
            nets: self.nets,
        })
    }
}

/// Runs one seeded experiment to its env-step budget (or early stop).
pub fn run_training(cfg: &RunConfig, seed: u64) -> Result<RunResult, SacError> {
    cfg.agent.validate()?;
    let env = Reacher::new(cfg.env.clone())?;
    let store = ReplayStore::new(cfg.replay.clone())?;
    let demo_seed = stream(seed, streams::DEMOS).random::<u64>();
    let demos = match cfg.expert.n_demos {
        0 => None,
        n => Some(generate_demos(n, &env, &cfg.expert, demo_seed)?),
    };
    let window = match (cfg.agent.relabel_window, &demos) {
        (Some(n), _) => n,
        (None, Some(d)) => d.mean_length,
        (None, None) => generate_demos(REFERENCE_DEMOS, &env, &cfg.expert, demo_seed)?.mean_length,
    };
    let extra_seed = stream(seed, streams::EXTRA_DEMOS).random::<u64>();
    let mut init_rng = stream(seed, streams::INIT);
    let nets = AgentNets::new(
        cfg.env.obs_dim(),
        cfg.env.action_dim(),
        &cfg.agent,
        &mut init_rng,
    );
    Runner {
        cfg,
        extra_demos: ExpertDemoSource::new(env.clone(), cfg.expert.clone(), extra_seed, EXTRA_DEMO_BASE),
        env,
        store,
        nets,
        demos,
        window,
        env_rng: stream(seed, streams::ENV),
        train_rng: stream(seed, streams::TRAIN),
        behaviour_rng: stream(seed, streams::BEHAVIOUR),
        env_steps: 0,
        train_steps: 0,
        next_episode_id: AGENT_EPISODE_BASE,
        demo_transitions_added: 0,
    }
    .run()
}

/// Greedy-policy success rate on `n_targets` fresh targets.
pub fn evaluate_greedy<R: Rng + ?Sized>(
    nets: &AgentNets,
    env: &Reacher,
    n_targets: usize,
    rng: &mut R,
) -> Result<f64, SacError> {
    let mut successes = 0;
    for _ in 0..n_targets {
        let mut state = env.reset(rng);
        loop {
            let a = greedy_action(nets, &observe(&state))?;
            let out = env.step(&state, &a)?;
            if out.done {
                successes += usize::from(out.success);
                break;
            }
            state = out.state;
        }
    }
    Ok(successes as f64 / n_targets.max(1) as f64)
}
