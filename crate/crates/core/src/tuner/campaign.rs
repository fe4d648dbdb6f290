//! Hyperparameter search against the closed-loop simulator.

use std::io::Write;

use serde::Serialize;

use super::{maximize, reward, BoSettings, RewardConfig, SearchSpace};
use crate::error::Result;
use crate::harness::report::RunRecord;
use crate::harness::{run_conditions, Condition, ExperimentConfig};
use crate::world::MotionKind;

/// Motions used to score a candidate; the stationary gate is left out.
pub const TUNING_MOTIONS: [MotionKind; 4] = [
    MotionKind::LinearSlow,
    MotionKind::LinearFast,
    MotionKind::Planar,
    MotionKind::Knot,
];

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub iteration: usize,
    pub k_pn: f64,
    pub gamma_bar_deg: f64,
    pub mean_reward: f64,
    pub runs: Vec<RunRecord>,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub best_k_pn: f64,
    pub best_gamma_bar_deg: f64,
    pub best_reward: f64,
    pub history: Vec<Evaluation>,
}

/// Reward of one run; failed runs score zero.
pub fn run_reward(cfg: &RewardConfig, run: &RunRecord) -> f64 {
    if run.success {
        reward(cfg, run.t_gate, run.d_center)
    } else {
        0.0
    }
}

/// Score `(k_pn, γ̄)` on fresh seeds: `runs_per_motion` runs of each tuning motion.
pub fn evaluate(
    base: &ExperimentConfig,
    reward_cfg: &RewardConfig,
    k_pn: f64,
    gamma_bar_deg: f64,
    runs_per_motion: usize,
    seed: u64,
    group: &str,
) -> Result<(f64, Vec<RunRecord>, Vec<f64>)> {
    let mut cfg = base.clone();
    cfg.trajectories = false;
    let conds: Vec<Condition> = TUNING_MOTIONS
        .iter()
        .map(|&m| {
            let label = format!("{group} {m}");
            let mut c = Condition::new("tune", group, &label, m, base.tune.radius, &cfg);
            c.sim = cfg.with_hyper(k_pn, gamma_bar_deg);
            c
        })
        .collect();
    let runs = run_conditions(&conds, runs_per_motion, seed)?.report.runs;
    let rewards: Vec<f64> = runs.iter().map(|r| run_reward(reward_cfg, r)).collect();
    let mean = rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;
    Ok((mean, runs, rewards))
}

/// GP-UCB search over `space`. Each iteration draws new scenario seeds, so the
/// optimum is not fitted to one fixed set of engagements.
pub fn bo_campaign(
    space: &SearchSpace,
    reward_cfg: &RewardConfig,
    runs_per_eval: usize,
    iterations: usize,
    seed: u64,
    base: &ExperimentConfig,
) -> Result<Campaign> {
    space.validate()?;
    reward_cfg.validate()?;
    let iterations = if space.is_degenerate() {
        iterations.min(1)
    } else {
        iterations
    };
    let mut history = Vec::with_capacity(iterations);
    let mut settings = BoSettings::new(iterations, seed);
    settings.beta = base.tune.beta;
    let observations = maximize(
        |it, u| {
            let (k_pn, gamma) = space.from_unit(u);
            let eval_seed = crate::mix_seed(seed, it as u64, 1);
            let (mean, runs, rewards) = evaluate(
                base,
                reward_cfg,
                k_pn,
                gamma,
                runs_per_eval,
                eval_seed,
                &format!("iter={it}"),
            )?;
            history.push(Evaluation {
                iteration: it,
                k_pn,
                gamma_bar_deg: gamma,
                mean_reward: mean,
                runs,
                rewards,
            });
            Ok(mean)
        },
        &settings,
    )?;
    let best = super::best_index(&observations).map(|i| &history[i]);
    Ok(Campaign {
        best_k_pn: best.map_or(space.k_pn.0, |e| e.k_pn),
        best_gamma_bar_deg: best.map_or(space.gamma_bar_deg.0, |e| e.gamma_bar_deg),
        best_reward: best.map_or(0.0, |e| e.mean_reward),
        history,
    })
}

#[derive(Serialize)]
struct HistoryRow<'a> {
    iteration: usize,
    k_pn: f64,
    gamma_bar_deg: f64,
    mean_reward: f64,
    motion: &'a str,
    run: usize,
    seed: u64,
    success: bool,
    t_gate: f64,
    d_center: f64,
    reward: f64,
}

impl Campaign {
    /// One row per simulated run, tagged with its iteration's candidate.
    pub fn write_history_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.history {
            for (r, rew) in e.runs.iter().zip(&e.rewards) {
                w.serialize(HistoryRow {
                    iteration: e.iteration,
                    k_pn: e.k_pn,
                    gamma_bar_deg: e.gamma_bar_deg,
                    mean_reward: e.mean_reward,
                    motion: r.motion.name(),
                    run: r.run,
                    seed: r.seed,
                    success: r.success,
                    t_gate: r.t_gate,
                    d_center: r.d_center,
                    reward: *rew,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
