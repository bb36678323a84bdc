use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use crate::config::Settings;
use crate::error::Result;
use crate::eval::episodes::{generate_episode_set, WorldCache};
use crate::eval::metrics::EvalResult;
use crate::eval::runner::evaluate_policy;
use crate::scalar::Scalar;
use crate::sim::{EnvConfig, EpisodeSpec};
use crate::train::{StatsLog, Trainer, UpdateStats};

/// Which auxiliary losses a run trains with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub name: &'static str,
    pub use_fp: bool,
    pub use_rs: bool,
}

pub const FULL: Variant = Variant {
    name: "fp+rs",
    use_fp: true,
    use_rs: true,
};
pub const FP_ONLY: Variant = Variant {
    name: "fp",
    use_fp: true,
    use_rs: false,
};
pub const RS_ONLY: Variant = Variant {
    name: "rs",
    use_fp: false,
    use_rs: true,
};
pub const VANILLA: Variant = Variant {
    name: "vanilla",
    use_fp: false,
    use_rs: false,
};

pub const VARIANTS: [Variant; 4] = [FULL, FP_ONLY, RS_ONLY, VANILLA];

pub fn variant_by_name(name: &str) -> Option<Variant> {
    VARIANTS.iter().copied().find(|v| v.name == name)
}

/// Evaluation episodes named by the settings: the evaluation worlds if
/// configured, the training worlds otherwise.
pub fn evaluation_episodes(settings: &Settings) -> Result<Vec<EpisodeSpec>> {
    let e = &settings.eval;
    let (profile, seeds) = match e.eval_world_seed {
        Some(s) => (e.eval_profile, (0..e.eval_world_count as u64).map(|i| s + i).collect()),
        None => (settings.train.profile, settings.train.world_seeds()),
    };
    generate_episode_set(e.eval_episodes, e.eval_difficulty, e.eval_seed, profile, &seeds)
}

pub fn evaluation_env(settings: &Settings) -> EnvConfig {
    EnvConfig {
        max_steps: settings.eval.eval_max_steps,
        ..settings.train.env_config()
    }
}

/// Trains one run. With `dir`, writes `train_stats.csv`, `policy.ckpt`
/// and `qc.ckpt` there.
pub fn train_run<T: Scalar, F: FnMut(&UpdateStats)>(
    settings: &Settings,
    dir: Option<&Path>,
    mut progress: F,
) -> Result<Trainer<T>> {
    let mut trainer = Trainer::<T>::new(settings.train.clone(), settings.shield.beta)?;
    let mut log = dir.map(|d| StatsLog::create(&d.join("train_stats.csv"))).transpose()?;
    let every = settings.train.checkpoint_every;
    trainer.run(|row, t| {
        if let Some(l) = log.as_mut() {
            l.write(row)?;
        }
        if let (Some(d), true) = (dir, every > 0 && row.update % every == 0) {
            save_models(t, d)?;
        }
        progress(row);
        Ok(())
    })?;
    if let Some(d) = dir {
        save_models(&trainer, d)?;
    }
    Ok(trainer)
}

pub fn save_models<T: Scalar>(trainer: &Trainer<T>, dir: &Path) -> Result<()> {
    trainer.policy.store.save(BufWriter::new(File::create(dir.join("policy.ckpt"))?))?;
    trainer.qc.store.save(BufWriter::new(File::create(dir.join("qc.ckpt"))?))?;
    std::fs::write(dir.join("model_card.txt"), trainer.policy.card())?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub steps: usize,
    pub train_rolling_sr: f64,
    pub eval_sr: f64,
    pub eval_spl: f64,
    pub eval_episodes: usize,
}

/// Trains `variant` with `seed` and evaluates it deterministically on the
/// held-out episode set.
pub fn run_cell<T: Scalar, F: FnMut(&UpdateStats)>(
    base: &Settings,
    variant: Variant,
    seed: u64,
    dir: Option<&Path>,
    progress: F,
) -> Result<(AblationRow, EvalResult)> {
    let mut settings = base.clone();
    settings.train.use_fp = variant.use_fp;
    settings.train.use_rs = variant.use_rs;
    settings.train.seed = seed;
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
        std::fs::write(d.join("config.txt"), settings.to_text())?;
    }
    let trainer = train_run::<T, F>(&settings, dir, progress)?;
    let episodes = evaluation_episodes(&settings)?;
    let mut cache = WorldCache::new();
    let result = evaluate_policy(&trainer.policy, None, &episodes, evaluation_env(&settings), &mut cache)?;
    Ok((
        AblationRow {
            variant: variant.name.to_string(),
            seed,
            steps: trainer.steps,
            train_rolling_sr: trainer.collector.rolling_success(),
            eval_sr: result.sr(),
            eval_spl: result.spl(),
            eval_episodes: result.episodes.len(),
        },
        result,
    ))
}
