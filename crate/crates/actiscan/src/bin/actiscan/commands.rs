use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actiscan::clock::InstantClock;
use actiscan::config::{Config, NoiseLevel, Phantom, ScorerChoice};
use actiscan::experiment::run_experiment;
use actiscan::io::{
    load_checkpoint, read_image_raw, read_sinogram_raw, save_checkpoint, write_image_raw,
    write_pgm, write_sinogram_raw, write_trace, write_train_log, Checkpoint,
};
use actiscan_core::agent::{CandidateScorer, ConstantScorer, OracleScorer, ScorerModel};
use actiscan_core::clock::NoClock;
use actiscan_core::gradcheck::{gradient_suite, FD_STEP};
use actiscan_core::phantom::make_roi_mask;
use actiscan_core::policy::{EpisodeRunner, MeasurementSource, NoiseConfig, PolicyKind};
use actiscan_core::recon::{fbp, sart, Reconstructor};
use actiscan_core::training::{train_alternating, TrainSample};
use actiscan_core::{Image, Sinogram};
use anyhow::{Context, Result};
use clap::{Args, ValueEnum};

use crate::{Cli, Command};

/// Tolerance on the relative finite-difference error.
const GRADCHECK_TOL: f64 = 1e-4;

/// Bad command-line usage that clap cannot detect; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Args)]
pub struct PhantomArgs {}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Raw image to scan.
    #[arg(long)]
    pub image: PathBuf,
    /// Output sinogram (raw).
    #[arg(long)]
    pub output: PathBuf,
    /// none, L1, L2 or an incident photon count.
    #[arg(long, default_value = "none")]
    pub noise: NoiseLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Fbp,
    Sart,
    /// FBP, SART, then the post-filter from the configured checkpoint.
    Model,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Raw sinogram; any subset of angles.
    #[arg(long)]
    pub sinogram: PathBuf,
    /// Output image (raw); a PGM preview is written next to it.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Sart)]
    pub method: Method,
}

#[derive(Debug, Args)]
pub struct TrainArgs {}

#[derive(Debug, Args)]
pub struct RunPolicyArgs {
    /// Label or short name of a configured policy.
    #[arg(long)]
    pub policy: String,
    /// Name of a configured phantom; the first one when omitted.
    #[arg(long)]
    pub phantom: Option<String>,
    /// Noise level of the scan.
    #[arg(long, default_value = "none")]
    pub noise: NoiseLevel,
    /// Overrides the policy's configured scorer.
    #[arg(long, value_enum)]
    pub scorer: Option<ScorerArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerArg {
    Model,
    Oracle,
    Constant,
}

impl From<ScorerArg> for ScorerChoice {
    fn from(s: ScorerArg) -> Self {
        match s {
            ScorerArg::Model => ScorerChoice::Model,
            ScorerArg::Oracle => ScorerChoice::Oracle,
            ScorerArg::Constant => ScorerChoice::Constant,
        }
    }
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Finite-difference step.
    #[arg(long, default_value_t = FD_STEP)]
    pub step: f64,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn preview_path(path: &Path) -> PathBuf {
    path.with_extension("pgm")
}

pub fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Phantom(_) => phantom(&cfg),
        Command::Scan(a) => scan(&cfg, a),
        Command::Reconstruct(a) => reconstruct(&cfg, a),
        Command::Train(_) => train(&cfg),
        Command::RunPolicy(a) => run_policy(&cfg, a),
        Command::Compare => compare(&cfg, cli.threads),
        Command::Gradcheck(a) => gradcheck(cfg.seed, a),
    }
}

fn phantom(cfg: &Config) -> Result<ExitCode> {
    let dir = cfg.output_dir.join("phantoms");
    create_dir(&dir)?;
    for p in cfg.phantoms()? {
        let raw = dir.join(format!("{}.raw", p.name));
        write_image_raw(&raw, &p.image)?;
        write_pgm(&preview_path(&raw), &p.image, None)?;
        println!("{}", raw.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn scan(cfg: &Config, a: &ScanArgs) -> Result<ExitCode> {
    let image = read_image_raw(&a.image)?;
    let mut gc = cfg.geometry.clone();
    if image.h() != image.w() {
        return Err(usage("scan expects a square image"));
    }
    gc.size = image.h();
    let geom = gc.build()?;
    let noise = a.noise.photons().map(|photons| NoiseConfig {
        photons,
        seed: cfg.seed,
    });
    let source = MeasurementSource::simulate(&image, &geom, noise)?;
    write_sinogram_raw(&a.output, source.full())?;
    log::info!(
        "{} angles x {} bins written to {}",
        geom.num_angles,
        geom.num_detectors,
        a.output.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_post_filter(cfg: &Config) -> Result<Reconstructor> {
    let mut r = cfg.recon.reconstructor()?;
    if let Some(path) = &cfg.model {
        if let Some(pf) = load_checkpoint(path)?.post_filter {
            r.model = pf;
        }
    }
    Ok(r)
}

fn reconstruct(cfg: &Config, a: &ReconstructArgs) -> Result<ExitCode> {
    let sino: Sinogram = read_sinogram_raw(&a.sinogram)?;
    let geom = *sino.geometry();
    let r = match a.method {
        Method::Model => {
            if cfg.model.is_none() {
                return Err(usage("--method model needs a model checkpoint in the configuration"));
            }
            load_post_filter(cfg)?
        }
        _ => cfg.recon.reconstructor()?,
    };
    let image: Image = match a.method {
        Method::Fbp => fbp(&sino, &geom, r.filter)?,
        Method::Sart => sart(&sino, &geom, &fbp(&sino, &geom, r.filter)?, &r.sart)?,
        Method::Model => r.reconstruct(&sino, &geom)?,
    };
    write_image_raw(&a.output, &image)?;
    write_pgm(&preview_path(&a.output), &image, None)?;
    Ok(ExitCode::SUCCESS)
}

fn train(cfg: &Config) -> Result<ExitCode> {
    cfg.validate_training()?;
    let geom = cfg.geometry.build()?;
    let phantoms = cfg.phantoms()?;
    let roi = match (&cfg.metrics.roi, cfg.train.roi_mode) {
        (Some(roi), true) => Some(roi),
        (None, true) => return Err(usage("train.roi_mode needs metrics.roi")),
        _ => None,
    };
    let dataset = phantoms
        .iter()
        .map(|p| {
            let mask = match roi {
                Some(r) => Some(make_roi_mask(&r.spec(p)?, &p.image)?),
                None => None,
            };
            Ok(TrainSample {
                image: p.image.clone(),
                roi: mask,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let tcfg = cfg.train.train_config(cfg.seed);
    let policy = cfg.train.policy.policy_config(cfg.seed);
    let base = cfg.recon.reconstructor()?;
    let clock = InstantClock::new();
    let outcome = train_alternating(&dataset, &tcfg, &policy, &base, &geom, &clock)?;

    create_dir(&cfg.output_dir)?;
    let ck_path = cfg.output_dir.join("model.ckpt");
    save_checkpoint(
        &ck_path,
        &Checkpoint {
            post_filter: Some(outcome.post_filter),
            scorer: Some(outcome.scorer),
        },
    )?;
    write_train_log(&cfg.output_dir.join("train_log.csv"), &outcome.log)?;
    for e in &outcome.log {
        log::info!("epoch {} {} loss {:.6e}", e.epoch, e.phase.as_str(), e.mean_loss);
    }
    println!("{}", ck_path.display());
    Ok(ExitCode::SUCCESS)
}

fn pick_phantom(cfg: &Config, name: Option<&str>) -> Result<Phantom> {
    let mut all = cfg.phantoms()?;
    match name {
        None if all.is_empty() => Err(usage("no phantoms configured")),
        None => Ok(all.swap_remove(0)),
        Some(n) => all
            .into_iter()
            .find(|p| p.name == n)
            .ok_or_else(|| usage(format!("no configured phantom named {n:?}"))),
    }
}

fn run_policy(cfg: &Config, a: &RunPolicyArgs) -> Result<ExitCode> {
    let geom = cfg.geometry.build()?;
    let mut entry = cfg
        .policies
        .iter()
        .find(|p| p.label() == a.policy)
        .cloned()
        .or_else(|| {
            let kind: PolicyKind = a.policy.parse().ok()?;
            Some(
                cfg.policies
                    .iter()
                    .find(|p| p.kind == kind)
                    .cloned()
                    .unwrap_or_else(|| actiscan::config::PolicyEntry::new(kind)),
            )
        })
        .ok_or_else(|| usage(format!("unknown policy {:?}", a.policy)))?;
    if let Some(s) = a.scorer {
        entry.scorer = s.into();
    }
    entry.policy_config(cfg.seed).validate(&geom)?;
    let phantom = pick_phantom(cfg, a.phantom.as_deref())?;
    let noise = a.noise.photons().map(|photons| NoiseConfig {
        photons,
        seed: cfg.seed,
    });
    let source = MeasurementSource::simulate(&phantom.image, &geom, noise)?;
    let reconstructor = load_post_filter(cfg)?;

    let model: Option<ScorerModel>;
    let oracle: OracleScorer;
    let constant = ConstantScorer(0.5);
    let scorer: &dyn CandidateScorer = match entry.scorer {
        ScorerChoice::Model if entry.kind.is_active() => {
            let path = cfg
                .model
                .as_ref()
                .ok_or_else(|| usage("the model scorer needs a model checkpoint"))?;
            model = load_checkpoint(path)?.scorer;
            model
                .as_ref()
                .ok_or_else(|| usage(format!("{} has no scorer section", path.display())))?
        }
        ScorerChoice::Oracle => {
            oracle = OracleScorer::new(source.clean_rows());
            &oracle
        }
        _ => &constant,
    };
    let roi = match &cfg.metrics.roi {
        Some(r) => Some(make_roi_mask(&r.spec(&phantom)?, &phantom.image)?),
        None => None,
    };
    let instant = InstantClock::new();
    let runner = EpisodeRunner::new(&reconstructor, scorer)
        .with_roi(roi.as_ref())
        .with_clock(if cfg.metrics.record_timing { &instant } else { &NoClock });
    let trace = runner.run(&source, &entry.policy_config(cfg.seed))?;

    create_dir(&cfg.output_dir)?;
    let stem = format!("{}__{}__{}", phantom.name, entry.label(), a.noise);
    write_trace(&cfg.output_dir.join(format!("{stem}.csv")), &trace, |i| geom.angle_deg(i))?;
    let raw = cfg.output_dir.join(format!("{stem}.raw"));
    write_image_raw(&raw, &trace.final_recon)?;
    let (lo, hi) = phantom.image.min_max();
    write_pgm(&preview_path(&raw), &trace.final_recon, (hi > lo).then_some((lo, hi)))?;
    if let Some(m) = trace.final_metrics() {
        println!(
            "{} {} views: psnr {:.3} dB, ssim {:.4}, rmse {:.5}",
            entry.label(),
            trace.angles.len(),
            m.psnr,
            m.ssim,
            m.rmse
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn compare(cfg: &Config, threads: usize) -> Result<ExitCode> {
    let report = run_experiment(cfg, threads)?;
    let failed = report.failures();
    println!(
        "{} cells, {} failed; results in {}",
        report.cells.len(),
        failed,
        report.output_dir.display()
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn gradcheck(seed: u64, a: &GradcheckArgs) -> Result<ExitCode> {
    if !(a.step > 0.0 && a.step.is_finite()) {
        return Err(usage("--step must be positive"));
    }
    let mut all_pass = true;
    for c in gradient_suite(seed, a.step)? {
        let pass = c.passes(GRADCHECK_TOL);
        all_pass &= pass;
        println!(
            "{:<5} {:<28} {:>6} coords  max rel err {:.3e}",
            if pass { "ok" } else { "FAIL" },
            c.name,
            c.checked,
            c.max_rel_err
        );
    }
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
