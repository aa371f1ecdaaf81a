use super::{ExperimentConfig, HarnessError};
use crate::replay::{BufferMode, PriorityMode};

/// Every preset name accepted by [`preset`].
pub const PRESETS: &[&str] = &[
    "sac_demo",
    "sac_demo_nstep",
    "sac_demo_bc",
    "sac_demo_star",
    "sacr2_b5",
    "sacr2_b10",
    "sacr2_norelabel_b5",
    "two_buffers",
    "reset_demo",
    "pretrain_heavy",
    "per_modified",
    "sacr2_star",
    "sac_plain",
    "sacr2_nodemo",
];

/// The demonstration baseline: 200 demos at a 10% buffer ratio, standard PER,
/// 1000 random steps, 3000 pretraining updates, L2 on, and no auxiliary losses,
/// bonus or relabeling.
fn sac_demo() -> ExperimentConfig {
    let mut c = ExperimentConfig {
        preset: "sac_demo".into(),
        ..ExperimentConfig::default()
    };
    c.expert.n_demos = 200;
    c.replay.mode = BufferMode::Single;
    c.replay.priority = PriorityMode::Standard;
    c.agent.b = 0.0;
    c.agent.relabel_success = false;
    c.agent.nstep_loss = false;
    c.agent.bc_loss = false;
    c.agent.pretrain_iters = 3000;
    c
}

fn star(mut c: ExperimentConfig) -> ExperimentConfig {
    c.agent.nstep_loss = true;
    c.agent.bc_loss = true;
    c
}

fn sacr2(mut c: ExperimentConfig, b: f64) -> ExperimentConfig {
    c.agent.b = b;
    c.agent.relabel_success = true;
    c
}

fn no_demos(mut c: ExperimentConfig) -> ExperimentConfig {
    c.expert.n_demos = 0;
    c.agent.pretrain_iters = 0;
    c
}

pub fn preset(name: &str) -> Result<ExperimentConfig, HarnessError> {
    let base = sac_demo();
    let mut c = match name {
        "sac_demo" => base,
        "sac_demo_nstep" => {
            let mut c = base;
            c.agent.nstep_loss = true;
            c
        }
        "sac_demo_bc" => {
            let mut c = base;
            c.agent.bc_loss = true;
            c
        }
        "sac_demo_star" => star(base),
        "sacr2_b5" => sacr2(base, 5.0),
        "sacr2_b10" => sacr2(base, 10.0),
        "sacr2_norelabel_b5" => {
            let mut c = base;
            c.agent.b = 5.0;
            c
        }
        "two_buffers" => {
            let mut c = base;
            c.replay.mode = BufferMode::Dual;
            c
        }
        "reset_demo" => {
            let mut c = base;
            c.agent.reset_to_demo_prob = 0.1;
            c
        }
        "pretrain_heavy" => {
            let mut c = base;
            c.agent.pretrain_iters = 10_000;
            c.expert.n_demos = 800;
            c
        }
        "per_modified" => {
            let mut c = base;
            c.replay.priority = PriorityMode::Modified;
            c
        }
        "sacr2_star" => sacr2(star(base), 5.0),
        "sac_plain" => no_demos(base),
        "sacr2_nodemo" => sacr2(no_demos(base), 5.0),
        other => return Err(HarnessError::UnknownPreset(other.to_string())),
    };
    c.preset = name.to_string();
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_preset_builds_and_validates() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            assert_eq!(c.preset, *name);
            c.validate().unwrap();
        }
        assert!(matches!(preset("nope"), Err(HarnessError::UnknownPreset(_))));
    }

    #[test]
    fn baseline_toggles() {
        let c = preset("sac_demo").unwrap();
        assert_eq!(c.expert.n_demos, 200);
        assert_eq!(c.replay.target_demo_ratio, 0.1);
        assert_eq!(c.replay.priority, PriorityMode::Standard);
        assert_eq!(c.agent.replay_ratio, 32);
        assert_eq!(c.agent.batch_size, 64);
        assert_eq!(c.agent.pretrain_iters, 3000);
        assert!(c.agent.l2_actor > 0.0 && c.agent.l2_critic > 0.0);
        assert!(!c.agent.bc_loss && !c.agent.nstep_loss && !c.agent.relabel_success);
        assert_eq!(c.agent.b, 0.0);
    }

    #[test]
    fn no_demo_preset() {
        let c = preset("sacr2_nodemo").unwrap();
        assert_eq!(c.expert.n_demos, 0);
        assert_eq!(c.agent.pretrain_iters, 0);
        assert!(c.agent.relabel_success);
        assert_eq!(c.agent.b, 5.0);
    }

    #[test]
    fn b10_differs_from_b5_only_in_b() {
        let mut b10 = preset("sacr2_b10").unwrap();
        let b5 = preset("sacr2_b5").unwrap();
        assert_eq!(b10.agent.b, 10.0);
        b10.agent.b = 5.0;
        b10.preset = b5.preset.clone();
        assert_eq!(b10, b5);
    }

    #[test]
    fn star_variants_enable_both_losses() {
        for name in ["sac_demo_star", "sacr2_star"] {
            let c = preset(name).unwrap();
            assert!(c.agent.bc_loss && c.agent.nstep_loss);
        }
        assert!(!preset("sac_demo_star").unwrap().agent.relabel_success);
        assert!(preset("sacr2_star").unwrap().agent.relabel_success);
    }
}
