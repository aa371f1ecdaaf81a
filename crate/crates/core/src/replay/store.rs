use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{apply_demo_bonus, Episode, ReplayError, SumTree, Transition};
use crate::expert::{DemoSet, DemoSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferMode {
    /// Demonstrations and collected data share one prioritized buffer.
    Single,
    /// Separate demo and agent buffers with a fixed demo share per batch.
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityMode {
    /// `p = δ² + ε`
    Standard,
    /// `p = δ² + λ_actor·ℓ² + ε + ε_D·[demo]`
    Modified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayConfig {
    pub mode: BufferMode,
    pub agent_capacity: usize,
    pub demo_capacity: usize,
    /// Share of each batch drawn from the demo buffer (dual mode).
    pub demo_fraction: f64,
    /// Minimum share of demo transitions kept in the buffer (single mode).
    pub target_demo_ratio: f64,
    pub priority: PriorityMode,
    pub per_alpha: f64,
    pub per_beta: f64,
    pub per_eps: f64,
    pub per_eps_demo: f64,
    pub per_lambda_actor: f64,
    pub importance_weights: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            mode: BufferMode::Single,
            agent_capacity: 1_000_000,
            demo_capacity: 100_000,
            demo_fraction: 0.1,
            target_demo_ratio: 0.1,
            priority: PriorityMode::Standard,
            per_alpha: 0.3,
            per_beta: 1.0,
            per_eps: 1e-3,
            per_eps_demo: 1.0,
            per_lambda_actor: 1.0,
            importance_weights: true,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<(), ReplayError> {
        let bad = |m: String| Err(ReplayError::InvalidConfig(m));
        if self.agent_capacity == 0 || self.demo_capacity == 0 {
            return bad("capacities must be positive".into());
        }
        for (name, v) in [
            ("demo_fraction", self.demo_fraction),
            ("target_demo_ratio", self.target_demo_ratio),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, v) in [
            ("per_alpha", self.per_alpha),
            ("per_beta", self.per_beta),
            ("per_eps_demo", self.per_eps_demo),
            ("per_lambda_actor", self.per_lambda_actor),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.per_eps.is_finite() && self.per_eps > 0.0) {
            return bad(format!("per_eps must be > 0, got {}", self.per_eps));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BufferKind {
    Agent,
    Demo,
}

impl fmt::Display for BufferKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BufferKind::Agent => "agent",
            BufferKind::Demo => "demo",
        })
    }
}

/// Reference to a stored transition. Goes stale once the slot is overwritten.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Handle {
    pub buffer: BufferKind,
    pub slot: usize,
    pub serial: u64,
}

#[derive(Debug, Clone)]
pub struct SampledBatch {
    pub transitions: Vec<Transition>,
    /// Importance-sampling weights, normalized so the largest is 1.
    pub weights: Vec<f64>,
    pub handles: Vec<Handle>,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn demo_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.transitions.iter().filter(|t| t.is_demo).count() as f64 / self.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NStepReturn {
    pub ret: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    /// The episode ended within the lookahead by hitting the step limit.
    pub truncated: bool,
    pub steps_used: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PriorityUpdate {
    pub applied: usize,
    pub skipped_stale: usize,
}

/// FIFO ring of transitions with a priority sum tree over its slots.
#[derive(Debug, Clone)]
struct Ring {
    kind: BufferKind,
    capacity: usize,
    slots: Vec<Transition>,
    serials: Vec<u64>,
    priorities: Vec<f64>,
    tree: SumTree,
    write: usize,
    next_serial: u64,
    demo_count: usize,
}

impl Ring {
    fn new(kind: BufferKind, capacity: usize) -> Self {
        Self {
            kind,
            capacity,
            slots: Vec::new(),
            serials: Vec::new(),
            priorities: Vec::new(),
            tree: SumTree::new(capacity.min(1 << 16)),
            write: 0,
            next_serial: 0,
            demo_count: 0,
        }
    }

    fn len(&self) -> usize {
        self.slots.len()
    }

    fn grow_tree(&mut self, needed: usize) {
        if needed <= self.tree.capacity() {
            return;
        }
        let mut tree = SumTree::new((needed * 2).min(self.capacity));
        for slot in 0..self.slots.len() {
            tree.set(slot, self.tree.get(slot));
        }
        self.tree = tree;
    }

    fn push(&mut self, t: Transition, alpha: f64) -> Handle {
        let leaf = if self.len() == 0 { 1.0 } else { self.tree.max() };
        let raw = if alpha > 0.0 { leaf.powf(1.0 / alpha) } else { 1.0 };
        let serial = self.next_serial;
        self.next_serial += 1;
        let slot = self.write;
        if t.is_demo {
            self.demo_count += 1;
        }
        if slot == self.slots.len() {
            self.grow_tree(slot + 1);
            self.slots.push(t);
            self.serials.push(serial);
            self.priorities.push(raw);
        } else {
            if self.slots[slot].is_demo {
                self.demo_count -= 1;
            }
            self.slots[slot] = t;
            self.serials[slot] = serial;
            self.priorities[slot] = raw;
        }
        self.tree.set(slot, leaf);
        self.write = (slot + 1) % self.capacity;
        Handle {
            buffer: self.kind,
            slot,
            serial,
        }
    }

    fn resolve(&self, h: &Handle) -> Option<&Transition> {
        match self.serials.get(h.slot) {
            Some(&s) if s == h.serial => Some(&self.slots[h.slot]),
            _ => None,
        }
    }

    /// Draws one slot proportionally to its leaf; returns the handle and its probability.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Handle, f64) {
        let total = self.tree.total();
        let slot = self.tree.find(rng.random::<f64>() * total);
        let p = self.tree.get(slot) / total;
        (
            Handle {
                buffer: self.kind,
                slot,
                serial: self.serials[slot],
            },
            p,
        )
    }
}

/// Single- or dual-buffer replay with proportional prioritized sampling.
#[derive(Debug, Clone)]
pub struct ReplayStore {
    config: ReplayConfig,
    agent: Ring,
    demo: Option<Ring>,
    stale_updates: usize,
}

impl ReplayStore {
    pub fn new(config: ReplayConfig) -> Result<Self, ReplayError> {
        config.validate()?;
        let demo = match config.mode {
            BufferMode::Single => None,
            BufferMode::Dual => Some(Ring::new(BufferKind::Demo, config.demo_capacity)),
        };
        Ok(Self {
            agent: Ring::new(BufferKind::Agent, config.agent_capacity),
            demo,
            config,
            stale_updates: 0,
        })
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.config
    }

    pub fn mode(&self) -> BufferMode {
        self.config.mode
    }

    pub fn len(&self) -> usize {
        self.agent.len() + self.demo.as_ref().map_or(0, Ring::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn demo_len(&self) -> usize {
        self.agent.demo_count + self.demo.as_ref().map_or(0, |d| d.demo_count)
    }

    /// Fraction of stored transitions that come from demonstrations.
    pub fn demo_ratio(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.demo_len() as f64 / self.len() as f64
        }
    }

    /// Stale handles ignored by `update_priorities` so far.
    pub fn stale_updates(&self) -> usize {
        self.stale_updates
    }

    fn ring(&self, kind: BufferKind) -> Option<&Ring> {
        match kind {
            BufferKind::Agent => Some(&self.agent),
            BufferKind::Demo => self.demo.as_ref(),
        }
    }

    fn ring_mut(&mut self, kind: BufferKind) -> Option<&mut Ring> {
        match kind {
            BufferKind::Agent => Some(&mut self.agent),
            BufferKind::Demo => self.demo.as_mut(),
        }
    }

    pub fn get(&self, handle: &Handle) -> Option<&Transition> {
        self.ring(handle.buffer)?.resolve(handle)
    }

    /// Raw priority `p` of a stored transition (before the `α` exponent).
    pub fn priority(&self, handle: &Handle) -> Option<f64> {
        let ring = self.ring(handle.buffer)?;
        ring.resolve(handle).map(|_| ring.priorities[handle.slot])
    }

    /// Probability that one proportional draw from the handle's buffer returns it.
    pub fn sample_probability(&self, handle: &Handle) -> Option<f64> {
        let ring = self.ring(handle.buffer)?;
        ring.resolve(handle)
            .map(|_| ring.tree.get(handle.slot) / ring.tree.total())
    }

    /// Sum tree root and the directly recomputed leaf sum, per buffer.
    pub fn tree_sums(&self) -> Vec<(BufferKind, f64, f64)> {
        std::iter::once(&self.agent)
            .chain(self.demo.as_ref())
            .map(|r| (r.kind, r.tree.total(), r.tree.leaf_sum()))
            .collect()
    }

    /// All live handles of one buffer, oldest first.
    pub fn handles(&self, kind: BufferKind) -> Vec<Handle> {
        let Some(ring) = self.ring(kind) else {
            return Vec::new();
        };
        let mut hs: Vec<Handle> = (0..ring.len())
            .map(|slot| Handle {
                buffer: kind,
                slot,
                serial: ring.serials[slot],
            })
            .collect();
        hs.sort_by_key(|h| h.serial);
        hs
    }

    fn push_transition(&mut self, t: Transition) -> Handle {
        let alpha = self.config.per_alpha;
        let kind = if t.is_demo && self.demo.is_some() {
            BufferKind::Demo
        } else {
            BufferKind::Agent
        };
        self.ring_mut(kind).expect("buffer exists").push(t, alpha)
    }

    /// Inserts a demonstration episode with the demo reward bonus applied.
    pub fn insert_demo_episode(&mut self, episode: &Episode, b: f64) -> Result<(), ReplayError> {
        let ep = apply_demo_bonus(episode, b)?;
        for t in ep.transitions {
            self.push_transition(t);
        }
        Ok(())
    }

    /// Inserts every episode of a demo set: non-final rewards become `b`,
    /// final rewards stay at the sparse reward, all flagged as demos.
    pub fn insert_demoset(&mut self, demos: &DemoSet, b: f64) -> Result<usize, ReplayError> {
        let mut n = 0;
        for ep in &demos.episodes {
            self.insert_demo_episode(ep, b)?;
            n += ep.len();
        }
        Ok(n)
    }

    /// Appends a collected episode (agent buffer in dual mode).
    pub fn push_episode(&mut self, episode: &Episode) {
        for t in &episode.transitions {
            let mut t = t.clone();
            t.is_demo = false;
            self.push_transition(t);
        }
    }

    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<SampledBatch, ReplayError> {
        let mut draws: Vec<(Handle, f64, usize)> = Vec::with_capacity(batch_size);
        match &self.demo {
            None => {
                if self.agent.len() == 0 {
                    return Err(ReplayError::EmptyBuffer(BufferKind::Agent));
                }
                for _ in 0..batch_size {
                    let (h, p) = self.agent.draw(rng);
                    draws.push((h, p, self.agent.len()));
                }
            }
            Some(demo) => {
                let n_demo = self.dual_demo_count(batch_size);
                if n_demo > 0 && demo.len() == 0 {
                    return Err(ReplayError::EmptyBuffer(BufferKind::Demo));
                }
                if n_demo < batch_size && self.agent.len() == 0 {
                    return Err(ReplayError::EmptyBuffer(BufferKind::Agent));
                }
                for i in 0..batch_size {
                    let ring = if i < n_demo { demo } else { &self.agent };
                    let (h, p) = ring.draw(rng);
                    draws.push((h, p, ring.len()));
                }
            }
        }

        let weights = if self.config.importance_weights {
            let beta = self.config.per_beta;
            let raw: Vec<f64> = draws
                .iter()
                .map(|&(_, p, size)| (size as f64 * p).powf(-beta))
                .collect();
            let max = raw.iter().cloned().fold(f64::MIN, f64::max);
            raw.into_iter().map(|w| w / max).collect()
        } else {
            vec![1.0; draws.len()]
        };

        let handles: Vec<Handle> = draws.iter().map(|d| d.0).collect();
        let transitions = handles
            .iter()
            .map(|h| self.get(h).expect("freshly drawn handle").clone())
            .collect();
        Ok(SampledBatch {
            transitions,
            weights,
            handles,
        })
    }

    /// Number of demo transitions in a dual-mode batch (round half to even).
    pub fn dual_demo_count(&self, batch_size: usize) -> usize {
        ((self.config.demo_fraction * batch_size as f64).round_ties_even() as usize).min(batch_size)
    }

    /// Raw priority for one transition under the configured mode.
    pub fn compute_priority(&self, td_error: f64, actor_term: f64, is_demo: bool) -> f64 {
        let c = &self.config;
        match c.priority {
            PriorityMode::Standard => td_error * td_error + c.per_eps,
            PriorityMode::Modified => {
                let bonus = if is_demo { c.per_eps_demo } else { 0.0 };
                td_error * td_error + c.per_lambda_actor * actor_term * actor_term + c.per_eps + bonus
            }
        }
    }

    /// Writes new priorities for sampled transitions. Stale handles are
    /// skipped and counted. `actor_terms` is only read in modified mode.
    pub fn update_priorities(
        &mut self,
        handles: &[Handle],
        td_errors: &[f64],
        actor_terms: Option<&[f64]>,
    ) -> PriorityUpdate {
        assert_eq!(handles.len(), td_errors.len());
        let mut out = PriorityUpdate::default();
        let alpha = self.config.per_alpha;
        for (i, h) in handles.iter().enumerate() {
            let Some(t) = self.get(h) else {
                out.skipped_stale += 1;
                continue;
            };
            let actor = actor_terms.map_or(0.0, |a| a[i]);
            let p = self.compute_priority(td_errors[i], actor, t.is_demo);
            let ring = self.ring_mut(h.buffer).expect("resolved above");
            ring.priorities[h.slot] = p;
            ring.tree.set(h.slot, p.powf(alpha));
            out.applied += 1;
        }
        self.stale_updates += out.skipped_stale;
        out
    }

    /// Discounted return over up to `n` steps from `handle`, never crossing
    /// the end of its episode.
    pub fn assemble_nstep(
        &self,
        handle: &Handle,
        n: usize,
        gamma: f64,
    ) -> Result<NStepReturn, ReplayError> {
        let ring = self
            .ring(handle.buffer)
            .ok_or(ReplayError::StaleHandle(*handle))?;
        let first = ring.resolve(handle).ok_or(ReplayError::StaleHandle(*handle))?;
        let mut ret = 0.0;
        let mut discount = 1.0;
        let mut current = first;
        let mut steps_used = 0;
        for k in 0..n.max(1) {
            if k > 0 {
                let slot = (handle.slot + k) % ring.capacity;
                let next = match ring.serials.get(slot) {
                    Some(&s) if s == handle.serial + k as u64 => &ring.slots[slot],
                    _ => break,
                };
                if next.episode_id != first.episode_id || next.step_idx != first.step_idx + k {
                    break;
                }
                current = next;
            }
            ret += discount * current.r;
            discount *= gamma;
            steps_used = k + 1;
            if current.done {
                break;
            }
        }
        Ok(NStepReturn {
            ret,
            next_obs: current.s_next.clone(),
            done: current.done,
            truncated: current.truncated,
            steps_used,
        })
    }

    /// Tops the buffer back up to `target_demo_ratio` with fresh demos
    /// (single mode only). Returns the number of demo transitions inserted.
    pub fn maintain_demo_ratio(
        &mut self,
        source: &mut dyn DemoSource,
        b: f64,
    ) -> Result<usize, ReplayError> {
        if self.config.mode == BufferMode::Dual {
            return Ok(0);
        }
        let target = self.config.target_demo_ratio;
        let mut inserted = 0;
        while (self.demo_len() as f64) < target * self.len() as f64 {
            let ep = source.next_demo()?;
            inserted += ep.len();
            self.insert_demo_episode(&ep, b)?;
        }
        Ok(inserted)
    }

    /// Debug dump: one line per stored transition in the demo-file record
    /// layout followed by the buffer name and raw priority.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "SACR2BUF v1 {} {}", self.len(), self.demo_len())?;
        for ring in std::iter::once(&self.agent).chain(self.demo.as_ref()) {
            for h in self.handles(ring.kind) {
                let t = &ring.slots[h.slot];
                crate::expert::write_record(&mut w, t)?;
                writeln!(w, " {} {}", ring.kind, ring.priorities[h.slot])?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::synthetic_episode;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store(mode: BufferMode, cap: usize) -> ReplayStore {
        ReplayStore::new(ReplayConfig {
            mode,
            agent_capacity: cap,
            demo_capacity: cap,
            ..ReplayConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn push_grows_until_capacity() {
        let mut s = store(BufferMode::Single, 25);
        for i in 0..5 {
            s.push_episode(&synthetic_episode(i, 7, false, 0.0));
            assert_eq!(s.len(), (7 * (i as usize + 1)).min(25));
        }
    }

    #[test]
    fn evicted_transitions_are_never_sampled() {
        let mut s = store(BufferMode::Single, 10);
        for i in 0..4 {
            s.push_episode(&synthetic_episode(i, 4, false, 0.0));
        }
        // 16 pushed into 10 slots: episodes 0 and the first 2 steps of 1 are gone.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..2000 {
            let b = s.sample_batch(8, &mut rng).unwrap();
            for t in b.transitions {
                assert!(t.episode_id >= 1);
                assert!(!(t.episode_id == 1 && t.step_idx < 2));
                seen.insert((t.episode_id, t.step_idx));
            }
        }
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn stale_handles_are_skipped() {
        let mut s = store(BufferMode::Single, 4);
        s.push_episode(&synthetic_episode(0, 4, false, 0.0));
        let old = s.handles(BufferKind::Agent);
        s.push_episode(&synthetic_episode(1, 2, false, 0.0));
        let upd = s.update_priorities(&old, &[1.0; 4], None);
        assert_eq!(upd, PriorityUpdate { applied: 2, skipped_stale: 2 });
        assert_eq!(s.stale_updates(), 2);
    }

    #[test]
    fn standard_priority_formula() {
        let mut s = store(BufferMode::Single, 16);
        s.push_episode(&synthetic_episode(0, 3, false, 0.0));
        let hs = s.handles(BufferKind::Agent);
        s.update_priorities(&hs[..1], &[2.0], None);
        assert!((s.priority(&hs[0]).unwrap() - 4.001).abs() < 1e-12);
    }

    #[test]
    fn new_transitions_get_current_max_leaf() {
        let mut s = store(BufferMode::Single, 16);
        s.push_episode(&synthetic_episode(0, 3, false, 0.0));
        let hs = s.handles(BufferKind::Agent);
        s.update_priorities(&hs, &[3.0, 0.5, 1.0], None);
        s.push_episode(&synthetic_episode(1, 1, false, 0.0));
        let new = *s.handles(BufferKind::Agent).last().unwrap();
        let ring = &s.agent;
        assert_eq!(ring.tree.get(new.slot), ring.tree.get(hs[0].slot));
        assert!((s.priority(&new).unwrap() - 9.001).abs() < 1e-9);
    }

    #[test]
    fn dual_mode_routes_and_composes() {
        let mut s = store(BufferMode::Dual, 1000);
        s.insert_demo_episode(&synthetic_episode(0, 20, true, 100.0), 5.0)
            .unwrap();
        s.push_episode(&synthetic_episode(1, 50, false, 0.0));
        assert_eq!(s.demo.as_ref().unwrap().len(), 20);
        assert_eq!(s.agent.len(), 50);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = s.sample_batch(64, &mut rng).unwrap();
        assert_eq!(b.transitions.iter().filter(|t| t.is_demo).count(), 6);
        assert!(b.weights.iter().all(|w| *w > 0.0 && *w <= 1.0));
    }

    #[test]
    fn dual_mode_needs_both_buffers() {
        let mut s = store(BufferMode::Dual, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            s.sample_batch(64, &mut rng),
            Err(ReplayError::EmptyBuffer(BufferKind::Demo))
        ));
        s.insert_demo_episode(&synthetic_episode(0, 5, true, 100.0), 5.0)
            .unwrap();
        assert!(matches!(
            s.sample_batch(64, &mut rng),
            Err(ReplayError::EmptyBuffer(BufferKind::Agent))
        ));
    }

    #[test]
    fn nstep_worked_example() {
        let mut s = store(BufferMode::Single, 100);
        let mut ep = synthetic_episode(0, 4, true, 100.0);
        ep.transitions[2].r = 5.0;
        s.push_episode(&ep);
        let hs = s.handles(BufferKind::Agent);
        let r = s.assemble_nstep(&hs[0], 3, 0.9).unwrap();
        assert!((r.ret - 4.05).abs() < 1e-12);
        assert_eq!(r.next_obs, ep.transitions[2].s_next);
        assert!(!r.done);
        assert_eq!(r.steps_used, 3);

        let r1 = s.assemble_nstep(&hs[1], 1, 0.9).unwrap();
        assert_eq!(r1.ret, ep.transitions[1].r);
        assert_eq!(r1.next_obs, ep.transitions[1].s_next);

        let last = s.assemble_nstep(&hs[3], 5, 0.9).unwrap();
        assert_eq!((last.ret, last.done, last.steps_used), (100.0, true, 1));
    }

    #[test]
    fn nstep_wraps_around_the_ring() {
        let mut s = store(BufferMode::Single, 6);
        s.push_episode(&synthetic_episode(0, 4, false, 0.0));
        s.push_episode(&synthetic_episode(1, 4, true, 1.0));
        // Episode 1 occupies slots 4, 5, 0, 1.
        let h = s
            .handles(BufferKind::Agent)
            .into_iter()
            .find(|h| s.get(h).unwrap().episode_id == 1 && s.get(h).unwrap().step_idx == 0)
            .unwrap();
        assert_eq!(h.slot, 4);
        let r = s.assemble_nstep(&h, 5, 0.5).unwrap();
        assert_eq!(r.steps_used, 4);
        assert!(r.done);
        assert!((r.ret - 0.125).abs() < 1e-15);
    }

    struct FixedDemos(u64);
    impl DemoSource for FixedDemos {
        fn next_demo(&mut self) -> Result<Episode, crate::expert::ExpertError> {
            self.0 += 1;
            Ok(synthetic_episode(1000 + self.0, 21, true, 100.0))
        }
    }

    #[test]
    fn demo_ratio_maintenance() {
        let mut s = store(BufferMode::Single, 1_000_000);
        for i in 0..200 {
            s.insert_demo_episode(&synthetic_episode(i, 21, true, 100.0), 5.0)
                .unwrap();
        }
        for i in 0..378 {
            s.push_episode(&synthetic_episode(10_000 + i, 100, false, 0.0));
        }
        assert!((s.demo_ratio() - 0.1).abs() < 1e-12);
        let mut src = FixedDemos(0);
        assert_eq!(s.maintain_demo_ratio(&mut src, 5.0).unwrap(), 0);

        for i in 0..90 {
            s.push_episode(&synthetic_episode(20_000 + i, 100, false, 0.0));
        }
        assert!(s.demo_ratio() < 0.0915);
        assert!(s.maintain_demo_ratio(&mut src, 5.0).unwrap() > 0);
        let r = s.demo_ratio();
        assert!((0.10..=0.11).contains(&r), "ratio {r}");

        let mut dual = store(BufferMode::Dual, 1000);
        dual.push_episode(&synthetic_episode(0, 50, false, 0.0));
        assert_eq!(dual.maintain_demo_ratio(&mut src, 5.0).unwrap(), 0);
    }

    #[test]
    fn snapshot_lists_every_transition() {
        let mut s = store(BufferMode::Dual, 100);
        s.insert_demo_episode(&synthetic_episode(0, 3, true, 100.0), 5.0)
            .unwrap();
        s.push_episode(&synthetic_episode(1, 2, false, 0.0));
        let mut out = Vec::new();
        s.write_snapshot(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().nth(1).unwrap().ends_with(" agent 1"));
    }
}
