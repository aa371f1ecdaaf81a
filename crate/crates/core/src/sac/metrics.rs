use std::collections::VecDeque;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub const ROLLING_WINDOW: usize = 100;

/// One row of the per-seed CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub env_steps: usize,
    pub train_steps: usize,
    pub success: u8,
    pub length: usize,
    pub rolling_success: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub demo_batch_fraction: f64,
}

/// Append-only per-episode log with a rolling success rate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<EpisodeRecord>,
    recent: VecDeque<bool>,
    recent_successes: usize,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rolling_success(&self) -> f64 {
        if self.recent.is_empty() {
            0.0
        } else {
            self.recent_successes as f64 / self.recent.len() as f64
        }
    }

    /// Appends an episode; `episode` and `rolling_success` are filled in here.
    pub fn push(&mut self, mut record: EpisodeRecord) -> &EpisodeRecord {
        let success = record.success != 0;
        self.recent.push_back(success);
        self.recent_successes += usize::from(success);
        if self.recent.len() > ROLLING_WINDOW {
            let dropped = self.recent.pop_front().expect("non-empty");
            self.recent_successes -= usize::from(dropped);
        }
        record.episode = self.records.len() + 1;
        record.rolling_success = self.rolling_success();
        self.records.push(record);
        self.records.last().expect("just pushed")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.records {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads records back; the rolling state is rebuilt from the success flags.
    pub fn read_csv<R: Read>(r: R) -> csv::Result<Self> {
        let mut log = Self::new();
        for rec in csv::Reader::from_reader(r).deserialize() {
            let rec: EpisodeRecord = rec?;
            let stored = rec.rolling_success;
            log.push(rec);
            log.records.last_mut().expect("pushed").rolling_success = stored;
        }
        Ok(log)
    }

    /// First episode (1-based) with a full window at or above `threshold`.
    pub fn episodes_to(&self, threshold: f64) -> Option<usize> {
        episodes_to(&self.records, threshold)
    }

    /// Demo share of sampled batches over the online run, each episode
    /// weighted by the gradient steps taken during it. The first record is
    /// skipped because its step count also holds pretraining.
    pub fn training_demo_fraction(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for w in self.records.windows(2) {
            let steps = w[1].train_steps.saturating_sub(w[0].train_steps) as f64;
            num += steps * w[1].demo_batch_fraction;
            den += steps;
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }
}

pub fn episodes_to(records: &[EpisodeRecord], threshold: f64) -> Option<usize> {
    records
        .iter()
        .find(|r| r.episode >= ROLLING_WINDOW && r.rolling_success >= threshold)
        .map(|r| r.episode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn demo_fraction_is_weighted_by_train_steps() {
        let mut log = MetricsLog::new();
        for (train_steps, dbf) in [(3000, 0.9), (3010, 0.5), (3040, 0.1), (3040, 0.7)] {
            log.push(EpisodeRecord {
                train_steps,
                demo_batch_fraction: dbf,
                ..rec(true)
            });
        }
        // (10 * 0.5 + 30 * 0.1) / 40
        assert!((log.training_demo_fraction() - 0.2).abs() < 1e-15);
        assert_eq!(MetricsLog::new().training_demo_fraction(), 0.0);
    }

    fn rec(success: bool) -> EpisodeRecord {
        EpisodeRecord {
            episode: 0,
            env_steps: 0,
            train_steps: 0,
            success: u8::from(success),
            length: 10,
            rolling_success: 0.0,
            critic_loss: 0.5,
            actor_loss: -1.0,
            demo_batch_fraction: 0.1,
        }
    }

    proptest! {
        #[test]
        fn rolling_is_exact_window_mean(flags in prop::collection::vec(any::<bool>(), 1..400)) {
            let mut log = MetricsLog::new();
            for (k, f) in flags.iter().enumerate() {
                let r = *log.push(rec(*f));
                let lo = (k + 1).saturating_sub(ROLLING_WINDOW);
                let window = &flags[lo..=k];
                let expected = window.iter().filter(|x| **x).count() as f64 / window.len() as f64;
                prop_assert_eq!(r.rolling_success, expected);
                prop_assert_eq!(r.episode, k + 1);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut log = MetricsLog::new();
        for i in 0..150 {
            log.push(rec(i % 3 != 0));
        }
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with(
            "episode,env_steps,train_steps,success,length,rolling_success,critic_loss,actor_loss,demo_batch_fraction\n"
        ));
        assert_eq!(MetricsLog::read_csv(&buf[..]).unwrap(), log);
    }

    #[test]
    fn episodes_to_needs_a_full_window() {
        let mut log = MetricsLog::new();
        for _ in 0..120 {
            log.push(rec(true));
        }
        assert_eq!(log.episodes_to(0.9), Some(100));
        let mut late = MetricsLog::new();
        for i in 0..300 {
            late.push(rec(i >= 150));
        }
        // window of 100 reaches 90 successes at episode 240
        assert_eq!(late.episodes_to(0.9), Some(240));
    }
}
