//! Transition storage, reward relabeling and prioritized sampling.

mod store;
mod sum_tree;

pub use store::{
    BufferKind, BufferMode, Handle, NStepReturn, PriorityMode, PriorityUpdate, ReplayConfig,
    ReplayStore, SampledBatch,
};
pub use sum_tree::SumTree;

use thiserror::Error;

use crate::expert::ExpertError;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot sample from an empty {0} buffer")]
    EmptyBuffer(BufferKind),
    #[error("relabel_success called on an unsuccessful episode")]
    UnsuccessfulEpisode,
    #[error("relabel window N must be >= 2, got {0}")]
    BadWindow(usize),
    #[error("reward bonus must be finite and >= 0, got {0}")]
    BadBonus(f64),
    #[error("handle {0:?} no longer refers to a stored transition")]
    StaleHandle(Handle),
    #[error("invalid replay config: {0}")]
    InvalidConfig(String),
    #[error("demo source failed while restoring the demo ratio: {0}")]
    DemoSource(#[from] ExpertError),
    #[error("episode has no transitions")]
    EmptyEpisode,
}

/// One `(s, a, r, s', done)` tuple plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    /// Set only on the last transition of an episode (success or timeout).
    pub done: bool,
    /// Set on the last transition of an episode cut off by the step limit.
    pub truncated: bool,
    pub is_demo: bool,
    pub episode_id: u64,
    pub step_idx: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub success: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.r).sum()
    }
}

fn check_bonus(b: f64) -> Result<(), ReplayError> {
    if b.is_finite() && b >= 0.0 {
        Ok(())
    } else {
        Err(ReplayError::BadBonus(b))
    }
}

/// Demonstration treatment: every non-final transition gets reward `b`, the
/// final transition keeps its environment reward, and all are flagged `is_demo`.
pub fn apply_demo_bonus(episode: &Episode, b: f64) -> Result<Episode, ReplayError> {
    check_bonus(b)?;
    let last = episode.len().checked_sub(1).ok_or(ReplayError::EmptyEpisode)?;
    let mut out = episode.clone();
    for (i, t) in out.transitions.iter_mut().enumerate() {
        t.is_demo = true;
        if i != last {
            t.r = b;
        }
    }
    Ok(out)
}

/// Success relabeling: the last `min(N-1, len-1)` non-final transitions of a
/// successful episode get reward `b`. Earlier transitions and the final one
/// are left untouched.
pub fn relabel_success(episode: &Episode, b: f64, window: usize) -> Result<Episode, ReplayError> {
    if !episode.success {
        return Err(ReplayError::UnsuccessfulEpisode);
    }
    if window < 2 {
        return Err(ReplayError::BadWindow(window));
    }
    check_bonus(b)?;
    let len = episode.len();
    if len == 0 {
        return Err(ReplayError::EmptyEpisode);
    }
    let count = (window - 1).min(len - 1);
    let mut out = episode.clone();
    for t in &mut out.transitions[len - 1 - count..len - 1] {
        t.r = b;
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub fn synthetic_episode(id: u64, len: usize, success: bool, reward: f64) -> Episode {
        let transitions = (0..len)
            .map(|i| {
                let last = i + 1 == len;
                Transition {
                    s: vec![id as f64, i as f64],
                    a: vec![0.1 * i as f64],
                    r: if last && success { reward } else { 0.0 },
                    s_next: vec![id as f64, (i + 1) as f64],
                    done: last,
                    truncated: last && !success,
                    is_demo: false,
                    episode_id: id,
                    step_idx: i,
                }
            })
            .collect();
        Episode {
            transitions,
            success,
        }
    }

    #[test]
    fn relabel_long_episode() {
        let ep = synthetic_episode(0, 30, true, 100.0);
        let out = relabel_success(&ep, 5.0, 21).unwrap();
        for t in &out.transitions {
            let expected = match t.step_idx {
                0..=8 => 0.0,
                9..=28 => 5.0,
                _ => 100.0,
            };
            assert_eq!(t.r, expected, "step {}", t.step_idx);
        }
    }

    #[test]
    fn relabel_short_episodes() {
        let out = relabel_success(&synthetic_episode(0, 10, true, 100.0), 5.0, 21).unwrap();
        assert_eq!(out.transitions.iter().filter(|t| t.r == 5.0).count(), 9);
        let out = relabel_success(&synthetic_episode(0, 2, true, 100.0), 5.0, 21).unwrap();
        assert_eq!(out.transitions[0].r, 5.0);
        assert_eq!(out.transitions[1].r, 100.0);
        let out = relabel_success(&synthetic_episode(0, 1, true, 100.0), 5.0, 21).unwrap();
        assert_eq!(out.transitions[0].r, 100.0);
    }

    #[test]
    fn relabel_rejects_failures_and_bad_window() {
        let fail = synthetic_episode(0, 100, false, 100.0);
        assert!(matches!(
            relabel_success(&fail, 5.0, 21),
            Err(ReplayError::UnsuccessfulEpisode)
        ));
        let ok = synthetic_episode(0, 5, true, 100.0);
        assert!(matches!(relabel_success(&ok, 5.0, 1), Err(ReplayError::BadWindow(1))));
    }

    #[test]
    fn demo_bonus_sets_non_final_rewards() {
        let ep = synthetic_episode(3, 15, true, 100.0);
        let out = apply_demo_bonus(&ep, 5.0).unwrap();
        assert!(out.transitions[..14].iter().all(|t| t.r == 5.0 && t.is_demo));
        assert_eq!(out.transitions[14].r, 100.0);
        let raw = apply_demo_bonus(&ep, 0.0).unwrap();
        for (a, b) in raw.transitions.iter().zip(&ep.transitions) {
            assert_eq!(a.r, b.r);
        }
    }

    proptest! {
        #[test]
        fn relabel_changes_exactly_the_window(len in 1usize..=100, n in prop::sample::select(vec![2usize, 5, 21]), b in 0.5f64..20.0) {
            let ep = synthetic_episode(1, len, true, 100.0);
            let out = relabel_success(&ep, b, n).unwrap();
            let changed = ep.transitions.iter().zip(&out.transitions).filter(|(x, y)| x.r != y.r).count();
            prop_assert_eq!(changed, (n - 1).min(len - 1));
            for (x, y) in ep.transitions.iter().zip(&out.transitions) {
                prop_assert_eq!(&x.s, &y.s);
                prop_assert_eq!(&x.a, &y.a);
                prop_assert_eq!(&x.s_next, &y.s_next);
                prop_assert_eq!(x.done, y.done);
                prop_assert_eq!(x.step_idx, y.step_idx);
                if x.r != y.r { prop_assert_eq!(y.r, b); }
            }
            prop_assert_eq!(out.transitions[len - 1].r, 100.0);
        }
    }
}
