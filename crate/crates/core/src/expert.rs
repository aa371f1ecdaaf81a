//! Scripted Jacobian-transpose demonstrator and the demo file format.
//!
//! Demo file layout (numeric text, shortest round-trip float formatting):
//!
//! ```text
//! SACR2DEMO v1 <env_hash> <n_episodes> <N>
//! <episode_id> <step_idx> <s...> <a...> <r> <s'...> <done>
//! ```

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{observe, EnvConfig, EnvError, Reacher, ReacherState};
use crate::replay::{Episode, Transition};

const MAGIC: &str = "SACR2DEMO";
const VERSION: &str = "v1";

/// Highest tolerated share of failed expert rollouts.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ExpertError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("expert failed {failures} of {attempts} rollouts (limit {:.0}%)", MAX_FAILURE_RATE * 100.0)]
    TooManyFailures { failures: usize, attempts: usize },
    #[error("need at least one demonstration episode")]
    NoEpisodes,
    #[error("demo set has mean length {0}, need N >= 2")]
    DegenerateLength(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("unsupported demo file version {found:?} (expected {VERSION})")]
    Version { found: String },
    #[error("demo file was produced for env {found}, but the current env is {expected}")]
    EnvHashMismatch { expected: String, found: String },
    #[error("demo file parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertConfig {
    /// Fraction of the first-order Jacobian-transpose step taken each tick.
    pub gain: f64,
    /// Half-width of the uniform noise added to every expert action.
    pub jitter: f64,
    /// Number of demonstrations placed in the buffer before training.
    pub n_demos: usize,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            gain: 0.7,
            jitter: 0.02,
            n_demos: 200,
        }
    }
}

/// Source of fresh demonstration episodes, consumed incrementally.
pub trait DemoSource {
    fn next_demo(&mut self) -> Result<Episode, ExpertError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub episodes: Vec<Episode>,
    /// Rounded mean episode length.
    pub mean_length: usize,
    pub env_hash: String,
}

impl DemoSet {
    pub fn new(episodes: Vec<Episode>, env: &EnvConfig) -> Result<Self, ExpertError> {
        let mean_length = mean_length(&episodes)?;
        Ok(Self {
            episodes,
            mean_length,
            env_hash: env.hash(),
        })
    }

    pub fn transition_count(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }
}

fn mean_length(episodes: &[Episode]) -> Result<usize, ExpertError> {
    if episodes.is_empty() {
        return Err(ExpertError::NoEpisodes);
    }
    let total: usize = episodes.iter().map(Episode::len).sum();
    let n = (total as f64 / episodes.len() as f64).round() as usize;
    if n < 2 {
        return Err(ExpertError::DegenerateLength(n));
    }
    Ok(n)
}

/// Partial derivatives of the end effector w.r.t. each joint angle.
fn jacobian(angles: &[f64], lengths: &[f64]) -> Vec<[f64; 2]> {
    let n = angles.len();
    let mut heading = 0.0;
    let mut links = Vec::with_capacity(n);
    for (theta, len) in angles.iter().zip(lengths) {
        heading += theta;
        links.push([len * heading.cos(), len * heading.sin()]);
    }
    // Column j sums the rotated contributions of links j..n.
    let mut cols = vec![[0.0; 2]; n];
    let mut acc = [0.0, 0.0];
    for j in (0..n).rev() {
        acc[0] += links[j][0];
        acc[1] += links[j][1];
        cols[j] = [-acc[1], acc[0]];
    }
    cols
}

/// Deterministic part of the expert: `clamp(k · Jᵀ(θ)·(target − ee), −1, 1)`.
///
/// `k` is set per step by the classic Jacobian-transpose step rule
/// `⟨e, JJᵀe⟩ / ‖JJᵀe‖²`, which moves the end effector onto the target to first
/// order, scaled by `gain` (a fraction of that step) and divided by the action
/// scale. A fixed `k` either chatters near the target or crawls through
/// near-singular stretched poses.
pub fn expert_action(state: &ReacherState, env: &EnvConfig, gain: f64) -> Vec<f64> {
    let err = [
        state.target_position[0] - state.ee_position[0],
        state.target_position[1] - state.ee_position[1],
    ];
    let cols = jacobian(&state.joint_angles, &env.link_lengths);
    let jt_e: Vec<f64> = cols.iter().map(|c| c[0] * err[0] + c[1] * err[1]).collect();
    let mut jjt_e = [0.0, 0.0];
    for (c, g) in cols.iter().zip(&jt_e) {
        jjt_e[0] += c[0] * g;
        jjt_e[1] += c[1] * g;
    }
    let den = jjt_e[0] * jjt_e[0] + jjt_e[1] * jjt_e[1];
    let k = if den > 0.0 {
        gain * (err[0] * jjt_e[0] + err[1] * jjt_e[1]) / (den * env.action_scale)
    } else {
        0.0
    };
    jt_e.iter().map(|g| (k * g).clamp(-1.0, 1.0)).collect()
}

/// Expert action with uniform jitter of half-width `config.jitter`.
pub fn noisy_expert_action<R: Rng + ?Sized>(
    state: &ReacherState,
    env: &EnvConfig,
    config: &ExpertConfig,
    rng: &mut R,
) -> Vec<f64> {
    let mut a = expert_action(state, env, config.gain);
    if config.jitter > 0.0 {
        for x in &mut a {
            *x = (*x + rng.random_range(-config.jitter..=config.jitter)).clamp(-1.0, 1.0);
        }
    }
    a
}

/// Rolls out the expert from `start` to the end of the episode.
pub fn rollout_expert<R: Rng + ?Sized>(
    env: &Reacher,
    start: ReacherState,
    config: &ExpertConfig,
    episode_id: u64,
    rng: &mut R,
) -> Result<Episode, ExpertError> {
    let mut state = start;
    let mut transitions = Vec::new();
    loop {
        let a = noisy_expert_action(&state, env.config(), config, rng);
        let out = env.step(&state, &a)?;
        transitions.push(Transition {
            s: observe(&state),
            a,
            r: out.reward,
            s_next: observe(&out.state),
            done: out.done,
            truncated: out.done && !out.success,
            is_demo: true,
            episode_id,
            step_idx: transitions.len(),
        });
        state = out.state;
        if out.done {
            return Ok(Episode {
                transitions,
                success: out.success,
            });
        }
    }
}

/// Successful expert episodes on fresh targets, one independent rng stream
/// per attempt derived from the master stream.
#[derive(Debug, Clone)]
pub struct ExpertDemoSource {
    env: Reacher,
    config: ExpertConfig,
    master: ChaCha8Rng,
    next_id: u64,
    pub attempts: usize,
    pub failures: usize,
}

impl ExpertDemoSource {
    pub fn new(env: Reacher, config: ExpertConfig, seed: u64, first_id: u64) -> Self {
        Self {
            env,
            config,
            master: ChaCha8Rng::seed_from_u64(seed),
            next_id: first_id,
            attempts: 0,
            failures: 0,
        }
    }

    fn failure_limit_hit(&self) -> bool {
        // Needs a handful of attempts before the rate means anything.
        self.attempts >= 20 && self.failures as f64 > MAX_FAILURE_RATE * self.attempts as f64
    }
}

impl DemoSource for ExpertDemoSource {
    fn next_demo(&mut self) -> Result<Episode, ExpertError> {
        loop {
            let mut rng = ChaCha8Rng::seed_from_u64(self.master.next_u64());
            let start = self.env.reset(&mut rng);
            self.attempts += 1;
            let ep = rollout_expert(&self.env, start, &self.config, self.next_id, &mut rng)?;
            if ep.success {
                self.next_id += 1;
                return Ok(ep);
            }
            self.failures += 1;
            if self.failure_limit_hit() || self.failures > 20 + self.attempts / 2 {
                return Err(ExpertError::TooManyFailures {
                    failures: self.failures,
                    attempts: self.attempts,
                });
            }
        }
    }
}

/// Generates exactly `n_episodes` successful demonstrations (raw env rewards).
pub fn generate_demos(
    n_episodes: usize,
    env: &Reacher,
    config: &ExpertConfig,
    seed: u64,
) -> Result<DemoSet, ExpertError> {
    if n_episodes == 0 {
        return Err(ExpertError::NoEpisodes);
    }
    let mut source = ExpertDemoSource::new(env.clone(), config.clone(), seed, 0);
    let episodes = (0..n_episodes)
        .map(|_| source.next_demo())
        .collect::<Result<Vec<_>, _>>()?;
    if source.failures as f64 > MAX_FAILURE_RATE * source.attempts as f64 {
        return Err(ExpertError::TooManyFailures {
            failures: source.failures,
            attempts: source.attempts,
        });
    }
    DemoSet::new(episodes, env.config())
}

pub(crate) fn write_record<W: Write>(w: &mut W, t: &Transition) -> io::Result<()> {
    write!(w, "{} {}", t.episode_id, t.step_idx)?;
    for v in t.s.iter().chain(&t.a) {
        write!(w, " {v}")?;
    }
    write!(w, " {}", t.r)?;
    for v in &t.s_next {
        write!(w, " {v}")?;
    }
    write!(w, " {}", u8::from(t.done))
}

pub fn write_demos<W: Write>(demos: &DemoSet, mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "{MAGIC} {VERSION} {} {} {}",
        demos.env_hash,
        demos.episodes.len(),
        demos.mean_length
    )?;
    for ep in &demos.episodes {
        for t in &ep.transitions {
            write_record(&mut w, t)?;
            writeln!(w)?;
        }
    }
    w.flush()
}

pub fn save_demos(demos: &DemoSet, path: &Path) -> Result<(), ExpertError> {
    let file = fs::File::create(path)?;
    write_demos(demos, BufWriter::new(file))?;
    Ok(())
}

pub fn load_demos(path: &Path, env: &EnvConfig) -> Result<DemoSet, ExpertError> {
    read_demos(BufReader::new(fs::File::open(path)?), env)
}

pub fn read_demos<R: BufRead>(reader: R, env: &EnvConfig) -> Result<DemoSet, ExpertError> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.ok_or(ExpertError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let parse_err = |line: usize, msg: String| ExpertError::Parse { line, msg };
    if fields.len() != 5 || fields[0] != MAGIC {
        return Err(parse_err(1, format!("bad header {header:?}")));
    }
    if fields[1] != VERSION {
        return Err(ExpertError::Version {
            found: fields[1].to_string(),
        });
    }
    let expected_hash = env.hash();
    if fields[2] != expected_hash {
        return Err(ExpertError::EnvHashMismatch {
            expected: expected_hash,
            found: fields[2].to_string(),
        });
    }
    let n_episodes: usize = fields[3]
        .parse()
        .map_err(|e| parse_err(1, format!("episode count: {e}")))?;
    let stored_n: usize = fields[4]
        .parse()
        .map_err(|e| parse_err(1, format!("mean length: {e}")))?;

    let obs = env.obs_dim();
    let act = env.action_dim();
    let width = 2 + obs + act + 1 + obs + 1;
    let mut episodes: Vec<Episode> = Vec::with_capacity(n_episodes);
    let mut open: Option<Episode> = None;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != width {
            return Err(parse_err(
                lineno,
                format!("expected {width} fields, found {}", toks.len()),
            ));
        }
        let num = |k: usize| -> Result<f64, ExpertError> {
            toks[k]
                .parse::<f64>()
                .map_err(|e| parse_err(lineno, format!("field {k}: {e}")))
        };
        let episode_id: u64 = toks[0]
            .parse()
            .map_err(|e| parse_err(lineno, format!("episode id: {e}")))?;
        let step_idx: usize = toks[1]
            .parse()
            .map_err(|e| parse_err(lineno, format!("step index: {e}")))?;
        let mut k = 2;
        let mut take = |n: usize| -> Result<Vec<f64>, ExpertError> {
            let v = (k..k + n).map(num).collect::<Result<Vec<_>, _>>()?;
            k += n;
            Ok(v)
        };
        let s = take(obs)?;
        let a = take(act)?;
        let r = take(1)?[0];
        let s_next = take(obs)?;
        let done = match toks[width - 1] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(lineno, format!("bad done flag {other:?}"))),
        };
        let ep = open.get_or_insert_with(|| Episode {
            transitions: Vec::new(),
            success: false,
        });
        if step_idx != ep.len()
            || ep
                .transitions
                .first()
                .is_some_and(|t| t.episode_id != episode_id)
        {
            return Err(parse_err(
                lineno,
                format!("record ({episode_id}, {step_idx}) breaks episode contiguity"),
            ));
        }
        ep.transitions.push(Transition {
            s,
            a,
            r,
            s_next,
            done,
            // Only successful episodes are ever written.
            truncated: false,
            is_demo: true,
            episode_id,
            step_idx,
        });
        if done {
            let mut ep = open.take().expect("episode is open");
            ep.success = r == env.sparse_reward;
            if !ep.success {
                return Err(parse_err(lineno, "demo episode is not successful".into()));
            }
            episodes.push(ep);
        }
    }
    if open.is_some() {
        return Err(parse_err(0, "file ends inside an episode (truncated?)".into()));
    }
    if episodes.len() != n_episodes {
        return Err(parse_err(
            0,
            format!("header promises {n_episodes} episodes, found {}", episodes.len()),
        ));
    }
    let set = DemoSet::new(episodes, env)?;
    if set.mean_length != stored_n {
        return Err(parse_err(
            1,
            format!("stored N {stored_n} disagrees with recomputed {}", set.mean_length),
        ));
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::forward_kinematics;

    fn env() -> Reacher {
        Reacher::new(EnvConfig::default()).unwrap()
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let cfg = EnvConfig::default();
        let angles = [0.3, -0.7, 1.1, 0.2];
        let j = jacobian(&angles, &cfg.link_lengths);
        for k in 0..4 {
            let mut p = angles;
            let mut m = angles;
            p[k] += 1e-6;
            m[k] -= 1e-6;
            let fp = forward_kinematics(&p, &cfg.link_lengths);
            let fm = forward_kinematics(&m, &cfg.link_lengths);
            for d in 0..2 {
                let fd = (fp[d] - fm[d]) / 2e-6;
                assert!((fd - j[k][d]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn action_vanishes_at_target() {
        let e = env();
        let mut s = e.reset_with_target([0.0, 0.0]);
        s.target_position = s.ee_position;
        let a = expert_action(&s, e.config(), ExpertConfig::default().gain);
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 0.05);
    }

    #[test]
    fn actions_are_bounded() {
        let e = env();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = ExpertConfig {
            gain: 50.0,
            ..ExpertConfig::default()
        };
        for _ in 0..200 {
            let s = e.reset(&mut rng);
            let a = noisy_expert_action(&s, e.config(), &cfg, &mut rng);
            assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn demos_are_successful_and_deterministic() {
        let e = env();
        let cfg = ExpertConfig::default();
        let d = generate_demos(20, &e, &cfg, 1).unwrap();
        assert_eq!(d.episodes.len(), 20);
        for ep in &d.episodes {
            assert!(ep.success && ep.len() <= 100);
            assert_eq!(ep.transitions.last().unwrap().r, 100.0);
            assert!(ep.transitions[..ep.len() - 1].iter().all(|t| t.r == 0.0 && !t.done));
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_demos(&d, &mut a).unwrap();
        write_demos(&generate_demos(20, &e, &cfg, 1).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn file_round_trip_and_errors() {
        let e = env();
        let d = generate_demos(5, &e, &ExpertConfig::default(), 2).unwrap();
        let mut buf = Vec::new();
        write_demos(&d, &mut buf).unwrap();
        let back = read_demos(&buf[..], e.config()).unwrap();
        assert_eq!(back, d);

        let mut other = EnvConfig::default();
        other.reach_threshold = 0.04;
        match read_demos(&buf[..], &other) {
            Err(ExpertError::EnvHashMismatch { expected, found }) => {
                assert_eq!(found, d.env_hash);
                assert_eq!(expected, other.hash());
                let msg = ExpertError::EnvHashMismatch {
                    expected: expected.clone(),
                    found: found.clone(),
                }
                .to_string();
                assert!(msg.contains(&expected) && msg.contains(&found));
            }
            other => panic!("expected hash mismatch, got {other:?}"),
        }

        let text = String::from_utf8(buf.clone()).unwrap();
        let cut = &text[..text.len() - 40];
        assert!(matches!(
            read_demos(cut.as_bytes(), e.config()),
            Err(ExpertError::Parse { .. })
        ));
        let v2 = text.replacen("v1", "v2", 1);
        assert!(matches!(
            read_demos(v2.as_bytes(), e.config()),
            Err(ExpertError::Version { .. })
        ));
    }
}
