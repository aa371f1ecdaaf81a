use crate::sac::{episodes_to, MetricsLog};

use super::HarnessError;

/// Success level behind the headline episodes-to statistic.
pub const HEADLINE_THRESHOLD: f64 = 0.9;

/// Mean and standard error (sample standard deviation over √n).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Episode-indexed rolling success across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSummary {
    pub label: String,
    /// Number of seeds every point is computed over.
    pub n_seeds: usize,
    /// Episode `k` (1-based) lives at index `k - 1`; truncated to the shortest seed.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Per seed, first episode whose full window reached the threshold.
    pub episodes_to_90: Vec<Option<usize>>,
    /// Per seed, episodes actually run.
    pub episodes_run: Vec<usize>,
}

impl CurveSummary {
    pub fn from_logs(label: &str, logs: &[MetricsLog]) -> Result<Self, HarnessError> {
        if logs.is_empty() {
            return Err(HarnessError::NoCurves);
        }
        let len = logs.iter().map(MetricsLog::len).min().unwrap_or(0);
        let (mean, stderr) = (0..len)
            .map(|k| {
                let vals: Vec<f64> = logs.iter().map(|l| l.records[k].rolling_success).collect();
                mean_stderr(&vals)
            })
            .unzip();
        Ok(Self {
            label: label.to_string(),
            n_seeds: logs.len(),
            mean,
            stderr,
            episodes_to_90: logs
                .iter()
                .map(|l| episodes_to(&l.records, HEADLINE_THRESHOLD))
                .collect(),
            episodes_run: logs.iter().map(MetricsLog::len).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn seeds_reaching_90(&self) -> usize {
        self.episodes_to_90.iter().flatten().count()
    }

    /// Seed mean of episodes-to-90; a seed that never gets there counts as
    /// infinitely slow, so any miss makes the mean infinite.
    pub fn mean_episodes_to_90(&self) -> f64 {
        let v: Vec<f64> = self
            .episodes_to_90
            .iter()
            .map(|e| e.map_or(f64::INFINITY, |x| x as f64))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Seed mean of episodes-to-90 where a seed that never got there counts
    /// as one episode past its budget: a lower bound on the true mean.
    pub fn mean_episodes_to_90_lower_bound(&self) -> f64 {
        let total: usize = self
            .episodes_to_90
            .iter()
            .zip(&self.episodes_run)
            .map(|(e, run)| e.unwrap_or(run + 1))
            .sum();
        total as f64 / self.episodes_to_90.len() as f64
    }
}

/// Env-step-indexed rolling success: at each grid point a seed contributes the
/// rolling rate of its last episode finished by then (0 before the first).
/// The grid stops at the shortest seed's final step count.
pub fn step_curve(logs: &[MetricsLog], every: usize) -> Vec<(usize, f64, f64)> {
    let every = every.max(1);
    let last = logs
        .iter()
        .map(|l| l.records.last().map_or(0, |r| r.env_steps))
        .min()
        .unwrap_or(0);
    let mut cursors = vec![0usize; logs.len()];
    let mut out = Vec::new();
    let mut step = every;
    while step <= last {
        let vals: Vec<f64> = logs
            .iter()
            .zip(&mut cursors)
            .map(|(l, c)| {
                while *c < l.records.len() && l.records[*c].env_steps <= step {
                    *c += 1;
                }
                if *c == 0 {
                    0.0
                } else {
                    l.records[*c - 1].rolling_success
                }
            })
            .collect();
        let (m, se) = mean_stderr(&vals);
        out.push((step, m, se));
        step += every;
    }
    out
}
