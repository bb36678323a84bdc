use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use imagenav_core::eval::{
    self, ablation, crossing_pairs, fit_trial_model, plots, run_safety_trials, run_trial, trial_rng, write_trajectory, EvalResult,
    Safety, WorldCache,
};
use imagenav_core::shield::{CollisionModel, SafetyShield};
use imagenav_core::sim::{generate_world, read_episodes, write_episodes, Difficulty, Profile};
use imagenav_core::{CollisionPredictor, Policy, Settings};

/// Image-goal navigation: training, evaluation and safety trials.
#[derive(Parser, Debug)]
#[command(name = "imagenav", version)]
struct Cli {
    /// Key-value config file applied on top of the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory; defaults to `$IMAGENAV_OUTPUT_ROOT/<command>-seed<seed>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key=value` override, repeatable; applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a policy and its collision predictor.
    Train {
        /// Overrides `total_steps`.
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        ablate: Ablate,
    },
    /// Evaluate a checkpoint on an episode set.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Collision predictor checkpoint; enables the shield unless `--no-shield`.
        #[arg(long)]
        qc: Option<PathBuf>,
        /// Episode CSV; generated from the evaluation settings when absent.
        #[arg(long)]
        episodes: Option<PathBuf>,
        #[arg(long)]
        no_shield: bool,
        /// Write trajectory CSV and SVG files for the first N episodes.
        #[arg(long, default_value_t = 0)]
        trajectories: usize,
    },
    /// Point-to-point trials in the poles world, with and without the shield.
    SafetyTrials {
        /// Collision predictor checkpoint; fitted on exploration data when absent.
        #[arg(long)]
        qc: Option<PathBuf>,
        /// Only run the unshielded trials.
        #[arg(long)]
        no_shield: bool,
    },
    /// Write an episode set.
    GenEpisodes {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        difficulty: Difficulty,
        #[arg(long, default_value_t = Profile::Sparse)]
        profile: Profile,
        /// First world seed; the set spans `eval_world_count` worlds.
        #[arg(long, default_value_t = 0)]
        world_seed: u64,
    },
    /// Training curves from run directories.
    Plot {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Train and evaluate several loss variants over several seeds.
    Ablation {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "fp+rs,vanilla")]
        variants: Vec<String>,
        #[arg(long)]
        steps: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct Ablate {
    #[arg(long)]
    no_fp: bool,
    #[arg(long)]
    no_rs: bool,
    /// Skip joint collision-predictor training.
    #[arg(long)]
    no_qc: bool,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::SafetyTrials { .. } => "safety-trials",
            Command::GenEpisodes { .. } => "gen-episodes",
            Command::Plot { .. } => "plot",
            Command::Ablation { .. } => "ablation",
        }
    }
}

fn settings(cli: &Cli) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        s.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    s.apply_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        s.train.seed = seed;
    }
    match &cli.command {
        Command::Train { steps, ablate } => {
            if let Some(n) = steps {
                s.train.total_steps = *n;
            }
            s.train.use_fp &= !ablate.no_fp;
            s.train.use_rs &= !ablate.no_rs;
            s.train.train_qc &= !ablate.no_qc;
        }
        Command::Ablation { steps: Some(n), .. } => s.train.total_steps = *n,
        _ => {}
    }
    s.validate()?;
    Ok(s)
}

fn out_dir(cli: &Cli, s: &Settings) -> Result<PathBuf> {
    let dir = match &cli.out {
        Some(d) => d.clone(),
        None => {
            let root = std::env::var_os("IMAGENAV_OUTPUT_ROOT").map_or_else(|| PathBuf::from("runs"), PathBuf::from);
            root.join(format!("{}-seed{}", cli.command.name(), s.train.seed))
        }
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn load_policy(s: &Settings, path: &Path) -> Result<Policy> {
    let mut p = Policy::new(s.train.policy_config(), 0)?;
    let f = File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    p.store.load_from(BufReader::new(f))?;
    Ok(p)
}

fn load_qc(path: &Path) -> Result<CollisionPredictor> {
    let mut q = CollisionPredictor::new(0)?;
    let f = File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    q.store.load_from(BufReader::new(f))?;
    Ok(q)
}

/// `Q_c` fitted on random-exploration data from poles worlds other than
/// the trial world.
fn exploration_qc(s: &Settings) -> Result<CollisionPredictor> {
    Ok(fit_trial_model(&s.eval, s.shield.beta)?)
}

fn write_summary(path: &Path, rows: &[(&str, String)]) -> Result<()> {
    let mut text = String::from("metric,value\n");
    for (k, v) in rows {
        text.push_str(&format!("{k},{v}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

fn eval_summary(r: &EvalResult) -> Vec<(&'static str, String)> {
    vec![
        ("episodes", r.episodes.len().to_string()),
        ("skipped", r.skipped.len().to_string()),
        ("sr", r.sr().to_string()),
        ("spl", r.spl().to_string()),
        ("correction_rate", r.correction_rate().to_string()),
        ("collisions", r.collisions().to_string()),
    ]
}

fn run(cli: Cli) -> Result<()> {
    let s = settings(&cli)?;
    if let Command::Plot { runs } = &cli.command {
        let dir = out_dir(&cli, &s)?;
        let mut sr = Vec::new();
        let mut reward = Vec::new();
        for run in runs {
            let stats = run.join("train_stats.csv");
            let name = run.file_name().map_or("run".into(), |n| n.to_string_lossy().into_owned());
            sr.push(plots::read_series(&stats, &name, "steps", "rolling_sr")?);
            reward.push(plots::read_series(&stats, &name, "steps", "mean_reward")?);
        }
        plots::emit_curves(&dir, "success_rate", &sr, "Rolling training success rate", "steps", "SR")?;
        plots::emit_curves(&dir, "mean_reward", &reward, "Mean step reward", "steps", "reward")?;
        println!("wrote plots to {}", dir.display());
        return Ok(());
    }
    let dir = out_dir(&cli, &s)?;
    fs::write(dir.join("config.txt"), s.to_text())?;

    match &cli.command {
        Command::Train { .. } => {
            let trainer = ablation::train_run::<f32, _>(&s, Some(&dir), |row| {
                eprintln!(
                    "update {:>4}  steps {:>8}  reward {:+.4}  sr {:.3}  spl {:.3}",
                    row.update, row.steps, row.mean_reward, row.rolling_sr, row.rolling_spl
                );
            })?;
            let sr = plots::read_series(&dir.join("train_stats.csv"), "train", "steps", "rolling_sr")?;
            plots::emit_curves(&dir, "success_rate", &[sr], "Rolling training success rate", "steps", "SR")?;
            println!("trained {} steps, checkpoints in {}", trainer.steps, dir.display());
        }
        Command::Eval {
            checkpoint,
            qc,
            episodes,
            no_shield,
            trajectories,
        } => {
            let policy = load_policy(&s, checkpoint)?;
            let qc = qc.as_deref().map(load_qc).transpose()?;
            let shield = SafetyShield::new(s.shield)?;
            let shield_on = !no_shield;
            let safety = qc.as_ref().map(|q| Safety {
                model: q as &dyn CollisionModel,
                shield: shield_on.then_some(&shield),
            });
            let eps = match episodes {
                Some(p) => read_episodes(p)?,
                None => eval::evaluation_episodes(&s)?,
            };
            write_episodes(&dir.join("episodes.csv"), &eps)?;
            let mut cache = WorldCache::new();
            let env_cfg = eval::evaluation_env(&s);
            let result = eval::evaluate_policy(&policy, safety, &eps, env_cfg, &mut cache)?;
            let mut w = csv_writer(&dir.join("eval_episodes.csv"))?;
            for e in &result.episodes {
                w.serialize(e)?;
            }
            w.flush()?;
            write_summary(&dir.join("eval_summary.csv"), &eval_summary(&result))?;
            for (i, spec) in eps.iter().take(*trajectories).enumerate() {
                let world = cache.get(spec.profile, spec.world_seed)?;
                let mut agent = eval::PolicyAgent::new(&policy);
                let mut rows = Vec::new();
                eval::run_episode(&mut agent, Arc::clone(&world), spec, i, env_cfg, safety, Some(&mut rows))?;
                write_trajectory(&dir.join(format!("trajectory_{i}.csv")), &rows)?;
                fs::write(
                    dir.join(format!("trajectory_{i}.svg")),
                    plots::trajectory_svg(&world, &rows, spec.goal.position),
                )?;
            }
            println!(
                "episodes {}  SR {:.3}  SPL {:.3}  correction rate {:.4}",
                result.episodes.len(),
                result.sr(),
                result.spl(),
                result.correction_rate()
            );
        }
        Command::SafetyTrials { qc, no_shield } => {
            let e = &s.eval;
            let world = generate_world(e.trial_world_seed, Profile::Poles)?;
            fs::write(dir.join("world.txt"), world.to_text())?;
            let pairs = crossing_pairs(&world, e.trial_pairs, e.trial_seed)?;
            let q = match qc {
                Some(p) => load_qc(p)?,
                None => exploration_qc(&s)?,
            };
            let shield = SafetyShield::new(s.shield)?;
            let mut summary = Vec::new();
            let modes: &[(&str, bool)] = if *no_shield { &[("off", false)] } else { &[("on", true), ("off", false)] };
            for &(tag, on) in modes {
                let safety = Safety {
                    model: &q,
                    shield: on.then_some(&shield),
                };
                let report = run_safety_trials(&world, &pairs, e.trial_count, Some(safety), e)?;
                eval::trials::write_trial_report(&dir.join(format!("trials_{tag}.csv")), &report)?;
                for (p, pair) in pairs.iter().enumerate() {
                    let mut rows = Vec::new();
                    let mut rng = trial_rng(e.trial_seed, p, 0);
                    run_trial(&world, pair, Some(safety), e, &mut rng, Some(&mut rows))?;
                    write_trajectory(&dir.join(format!("trajectory_{tag}_{p}.csv")), &rows)?;
                    fs::write(
                        dir.join(format!("trajectory_{tag}_{p}.svg")),
                        plots::trajectory_svg(&world, &rows, pair.goal()),
                    )?;
                }
                println!(
                    "shield {tag}: SR {:.3}  SPL {:.3}  correction rate {:.4}  collisions {}",
                    report.sr, report.spl, report.correction_rate, report.collisions
                );
                summary.push((tag, report));
            }
            let mut text = String::from("shield,sr,spl,correction_rate,collisions\n");
            for (tag, r) in &summary {
                text.push_str(&format!("{tag},{},{},{},{}\n", r.sr, r.spl, r.correction_rate, r.collisions));
            }
            fs::write(dir.join("trials_summary.csv"), text)?;
        }
        Command::GenEpisodes {
            n,
            difficulty,
            profile,
            world_seed,
        } => {
            let seeds: Vec<u64> = (0..s.eval.eval_world_count as u64).map(|i| world_seed + i).collect();
            let eps = eval::generate_episode_set(*n, *difficulty, s.train.seed, *profile, &seeds)?;
            let path = dir.join("episodes.csv");
            write_episodes(&path, &eps)?;
            println!("wrote {} episodes to {}", eps.len(), path.display());
        }
        Command::Ablation { seeds, variants, .. } => {
            let variants = variants
                .iter()
                .map(|v| ablation::variant_by_name(v).with_context(|| format!("unknown variant `{v}`")))
                .collect::<Result<Vec<_>>>()?;
            let mut w = csv_writer(&dir.join("ablation.csv"))?;
            for v in &variants {
                for &seed in seeds {
                    let cell = dir.join(format!("{}-seed{seed}", v.name.replace('+', "_")));
                    let (row, _) = ablation::run_cell::<f32, _>(&s, *v, seed, Some(&cell), |r| {
                        eprintln!("{} seed {seed}: update {} steps {} sr {:.3}", v.name, r.update, r.steps, r.rolling_sr);
                    })?;
                    println!("{} seed {seed}: eval SR {:.3} SPL {:.3}", row.variant, row.eval_sr, row.eval_spl);
                    w.serialize(&row)?;
                    w.flush()?;
                }
            }
        }
        Command::Plot { .. } => unreachable!(),
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
