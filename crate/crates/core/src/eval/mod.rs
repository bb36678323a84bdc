//! Episode sets, navigation metrics, policy evaluation, the ablation
//! runner and the point-to-point safety trials.

pub mod ablation;
pub mod config;
pub mod episodes;
pub mod metrics;
pub mod plots;
pub mod runner;
pub mod trials;

pub use ablation::{evaluation_episodes, evaluation_env, run_cell, train_run, AblationRow, Variant, VARIANTS};
pub use config::EvalConfig;
pub use episodes::{generate_episode_set, WorldCache};
pub use metrics::{compute_spl, compute_sr, spl_term, EpisodeResult, EvalResult};
pub use runner::{
    evaluate_agent, evaluate_policy, read_trajectory, run_episode, write_trajectory, NavAgent, PolicyAgent, Safety,
    ScriptedAgent, TrajectoryRow,
};
pub use trials::{
    crossing_pairs, fit_trial_model, heading_command, run_safety_trials, run_trial, trial_rng, PairReport, TrialOutcome, TrialPair,
    TrialReport,
};
