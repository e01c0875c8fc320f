//! The comparison grid: every (phantom, policy, noise) cell run in a thread
//! pool, with per-cell outputs and an aggregate table.
//!
//! Output layout under the configured directory:
//!
//! ```text
//! cells.csv            one row per cell
//! summary.csv          mean and unbiased std per (policy, noise)
//! trajectories.csv     acquisition order of every cell
//! recon/<cell>.pgm     final reconstruction, ground-truth display window
//! recon/<cell>.raw     the same, lossless
//! traces/<cell>.csv    per-pick trace
//! ```
//!
//! Every random stream is derived from the master seed and the cell's
//! indices, so results do not depend on the thread count or schedule.

use std::path::{Path, PathBuf};

use actiscan_core::agent::{CandidateScorer, ConstantScorer, OracleScorer, ScorerModel};
use actiscan_core::clock::{Clock, NoClock};
use actiscan_core::metrics::MetricReport;
use actiscan_core::phantom::{make_roi_mask, RoiMask};
use actiscan_core::policy::{EpisodeRunner, EpisodeTrace, MeasurementSource, NoiseConfig, PolicyKind};
use actiscan_core::recon::Reconstructor;
use actiscan_core::Geometry;
use rayon::prelude::*;

use crate::clock::InstantClock;
use crate::config::{Config, NoiseLevel, Phantom, PolicyEntry, ScorerChoice};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, load_checkpoint, write_atomic, write_image_raw, write_pgm, write_trace};

pub const CELLS_HEADER: [&str; 11] = [
    "phantom", "policy", "noise", "psnr", "ssim", "rmse", "roi_psnr", "roi_ssim", "roi_rmse",
    "wall_ms", "status",
];

pub const SUMMARY_HEADER: [&str; 15] = [
    "policy",
    "noise",
    "cells",
    "psnr_mean",
    "psnr_std",
    "ssim_mean",
    "ssim_std",
    "rmse_mean",
    "rmse_std",
    "roi_psnr_mean",
    "roi_psnr_std",
    "roi_ssim_mean",
    "roi_ssim_std",
    "roi_rmse_mean",
    "roi_rmse_std",
];

pub const TRAJECTORY_HEADER: [&str; 6] =
    ["phantom", "policy", "noise", "order", "angle_index", "angle_deg"];

/// SplitMix64 finalizer; decorrelates seeds derived from small integers.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stream `parts` under `master`.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

/// Outcome of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub phantom: String,
    pub policy: String,
    pub noise: String,
    /// Averaged over the random-sampling seeds for RS cells.
    pub metrics: Option<MetricReport>,
    pub wall_ms: f64,
    /// Angle indices in acquisition order (first seed for RS).
    pub trajectory: Vec<usize>,
    pub error: Option<String>,
}

impl CellResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    fn stem(&self) -> String {
        format!("{}__{}__{}", self.phantom, self.policy, self.noise)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub cells: Vec<CellResult>,
    pub output_dir: PathBuf,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| !c.ok()).count()
    }
}

/// Shared, read-only state of a run.
struct Plan<'a> {
    cfg: &'a Config,
    geom: Geometry,
    reconstructor: Reconstructor,
    scorer_model: Option<ScorerModel>,
    phantoms: Vec<Phantom>,
    masks: Vec<Option<RoiMask>>,
}

/// Artifacts kept from a cell for writing.
struct CellOutput {
    result: CellResult,
    trace: Option<EpisodeTrace>,
}

fn noise_label(n: NoiseLevel) -> String {
    n.to_string()
}

impl Plan<'_> {
    fn scorer_for<'s>(
        &'s self,
        entry: &PolicyEntry,
        source: &MeasurementSource,
    ) -> Result<Box<dyn CandidateScorer + 's>> {
        Ok(match entry.scorer {
            ScorerChoice::Model => match &self.scorer_model {
                Some(m) => Box::new(m),
                None if !entry.kind.is_active() => Box::new(ConstantScorer(0.5)),
                None => {
                    return Err(Error::Config("model scorer requested without a checkpoint".into()))
                }
            },
            ScorerChoice::Oracle => Box::new(OracleScorer::new(source.clean_rows())),
            ScorerChoice::Constant => Box::new(ConstantScorer(0.5)),
        })
    }

    fn run_cell(&self, pi: usize, qi: usize, ni: usize) -> CellOutput {
        let phantom = &self.phantoms[pi];
        let entry = &self.cfg.policies[qi];
        let noise = self.cfg.noise[ni];
        let mut result = CellResult {
            phantom: phantom.name.clone(),
            policy: entry.label(),
            noise: noise_label(noise),
            metrics: None,
            wall_ms: 0.0,
            trajectory: Vec::new(),
            error: None,
        };
        match self.try_cell(pi, qi, ni) {
            Ok((metrics, wall_ms, trace)) => {
                result.metrics = Some(metrics);
                result.wall_ms = wall_ms;
                result.trajectory = trace.picks.iter().map(|p| p.angle).collect();
                CellOutput {
                    result,
                    trace: Some(trace),
                }
            }
            Err(e) => {
                log::error!("cell {} failed: {e}", result.stem());
                result.error = Some(e.to_string());
                CellOutput {
                    result,
                    trace: None,
                }
            }
        }
    }

    fn try_cell(&self, pi: usize, qi: usize, ni: usize) -> Result<(MetricReport, f64, EpisodeTrace)> {
        let phantom = &self.phantoms[pi];
        let entry = &self.cfg.policies[qi];
        let noise = self.cfg.noise[ni].photons().map(|photons| NoiseConfig {
            photons,
            // shared by all policies of this phantom and noise level
            seed: derive_seed(self.cfg.seed, &[1, pi as u64, ni as u64]),
        });
        let source = MeasurementSource::simulate(&phantom.image, &self.geom, noise)?;
        let scorer = self.scorer_for(entry, &source)?;
        let instant;
        let clock: &dyn Clock = if self.cfg.metrics.record_timing {
            instant = InstantClock::new();
            &instant
        } else {
            &NoClock
        };
        let runner = EpisodeRunner::new(&self.reconstructor, scorer.as_ref())
            .with_clock(clock)
            .with_roi(self.masks[pi].as_ref());

        let repeats = if entry.kind == PolicyKind::Rs {
            self.cfg.metrics.rs_seeds
        } else {
            1
        };
        let mut first = None;
        let mut reports = Vec::with_capacity(repeats);
        let mut wall = 0.0;
        for r in 0..repeats {
            let seed = derive_seed(self.cfg.seed, &[2, pi as u64, qi as u64, ni as u64, r as u64]);
            let trace = runner.run(&source, &entry.policy_config(seed))?;
            reports.push(
                trace
                    .final_metrics()
                    .ok_or(Error::Config("episode produced no metrics".into()))?,
            );
            wall += trace.total_wall_ms();
            first.get_or_insert(trace);
        }
        let trace = first.expect("at least one repeat");
        Ok((mean_report(&reports), wall / repeats as f64, trace))
    }
}

fn mean_report(reports: &[MetricReport]) -> MetricReport {
    if reports.len() == 1 {
        return reports[0];
    }
    let n = reports.len() as f64;
    let avg = |f: &dyn Fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let roi = if reports.iter().all(|r| r.roi.is_some()) {
        Some(actiscan_core::metrics::RoiReport {
            psnr: avg(&|r| r.roi.unwrap().psnr),
            ssim: avg(&|r| r.roi.unwrap().ssim),
            rmse: avg(&|r| r.roi.unwrap().rmse),
        })
    } else {
        None
    };
    MetricReport {
        psnr: avg(&|r| r.psnr),
        ssim: avg(&|r| r.ssim),
        rmse: avg(&|r| r.rmse),
        roi,
    }
}

/// Mean and unbiased (n - 1) standard deviation; std is NaN for one sample.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn cells_csv(cells: &[CellResult]) -> Result<String> {
    csv_string(
        &CELLS_HEADER,
        cells.iter().map(|c| {
            let m = c.metrics;
            let g = |f: fn(&MetricReport) -> f64| fmt_f64(m.as_ref().map_or(f64::NAN, f));
            let roi = m.and_then(|m| m.roi);
            let r = |f: fn(&actiscan_core::metrics::RoiReport) -> f64| {
                fmt_f64(roi.as_ref().map_or(f64::NAN, f))
            };
            vec![
                c.phantom.clone(),
                c.policy.clone(),
                c.noise.clone(),
                g(|m| m.psnr),
                g(|m| m.ssim),
                g(|m| m.rmse),
                r(|r| r.psnr),
                r(|r| r.ssim),
                r(|r| r.rmse),
                fmt_f64(c.wall_ms),
                if c.ok() { "ok".into() } else { "failed".into() },
            ]
        }),
    )
}

/// Aggregates successful cells per (policy, noise), in configuration order.
pub fn summary_csv(cells: &[CellResult], policies: &[String], noises: &[String]) -> Result<String> {
    let mut rows = Vec::new();
    for p in policies {
        for n in noises {
            let group: Vec<&MetricReport> = cells
                .iter()
                .filter(|c| &c.policy == p && &c.noise == n)
                .filter_map(|c| c.metrics.as_ref())
                .collect();
            let stat = |f: &dyn Fn(&MetricReport) -> Option<f64>| -> [String; 2] {
                let v: Option<Vec<f64>> = group.iter().map(|m| f(m)).collect();
                let (mean, std) = mean_std(&v.unwrap_or_default());
                [fmt_f64(mean), fmt_f64(std)]
            };
            let mut row = vec![p.clone(), n.clone(), group.len().to_string()];
            row.extend(stat(&|m| Some(m.psnr)));
            row.extend(stat(&|m| Some(m.ssim)));
            row.extend(stat(&|m| Some(m.rmse)));
            row.extend(stat(&|m| m.roi.map(|r| r.psnr)));
            row.extend(stat(&|m| m.roi.map(|r| r.ssim)));
            row.extend(stat(&|m| m.roi.map(|r| r.rmse)));
            rows.push(row);
        }
    }
    csv_string(&SUMMARY_HEADER, rows)
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Runs the full grid with `threads` workers (0 = rayon's default) and
/// writes all outputs. Cell failures are recorded, not propagated; only
/// configuration and output errors abort the run.
pub fn run_experiment(cfg: &Config, threads: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let geom = cfg.geometry.build()?;
    let mut reconstructor = cfg.recon.reconstructor()?;
    let mut scorer_model = None;
    if let Some(path) = &cfg.model {
        let ck = load_checkpoint(path)?;
        if let Some(pf) = ck.post_filter {
            reconstructor.model = pf;
        }
        if let Some(sc) = ck.scorer {
            if sc.input_dim() != geom.num_detectors {
                return Err(Error::Config(format!(
                    "scorer expects {} detector bins, geometry has {}",
                    sc.input_dim(),
                    geom.num_detectors
                )));
            }
            scorer_model = Some(sc);
        }
    }
    let uses_model = cfg
        .policies
        .iter()
        .any(|p| p.kind.is_active() && p.scorer == ScorerChoice::Model);
    if uses_model && scorer_model.is_none() {
        return Err(Error::Config("model checkpoint has no scorer section".into()));
    }
    let phantoms = cfg.phantoms()?;
    let masks = match &cfg.metrics.roi {
        Some(roi) => phantoms
            .iter()
            .map(|p| Ok(Some(make_roi_mask(&roi.spec(p)?, &p.image)?)))
            .collect::<Result<Vec<_>>>()?,
        None => vec![None; phantoms.len()],
    };
    let plan = Plan {
        cfg,
        geom,
        reconstructor,
        scorer_model,
        phantoms,
        masks,
    };

    let out = &cfg.output_dir;
    ensure_dir(out)?;
    ensure_dir(&out.join("recon"))?;
    ensure_dir(&out.join("traces"))?;

    let jobs: Vec<(usize, usize, usize)> = (0..plan.phantoms.len())
        .flat_map(|p| {
            (0..cfg.policies.len()).flat_map(move |q| (0..cfg.noise.len()).map(move |n| (p, q, n)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    let outputs: Vec<Result<CellResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, q, n)| {
                let cell = plan.run_cell(p, q, n);
                write_cell(&plan, p, &cell, out)?;
                Ok(cell.result)
            })
            .collect()
    });
    let cells = outputs.into_iter().collect::<Result<Vec<_>>>()?;

    let labels: Vec<String> = cfg.policies.iter().map(PolicyEntry::label).collect();
    let noises: Vec<String> = cfg.noise.iter().map(|&n| noise_label(n)).collect();
    write_atomic(&out.join("cells.csv"), cells_csv(&cells)?.as_bytes())?;
    write_atomic(
        &out.join("summary.csv"),
        summary_csv(&cells, &labels, &noises)?.as_bytes(),
    )?;
    write_trajectories(&plan, &cells, out)?;
    Ok(ExperimentReport {
        cells,
        output_dir: out.clone(),
    })
}

fn write_cell(plan: &Plan<'_>, pi: usize, cell: &CellOutput, out: &Path) -> Result<()> {
    let Some(trace) = &cell.trace else {
        return Ok(());
    };
    let stem = cell.result.stem();
    let gt = &plan.phantoms[pi].image;
    let (lo, hi) = gt.min_max();
    let window = if hi > lo { (lo, hi) } else { (lo, lo + 1.0) };
    write_pgm(&out.join("recon").join(format!("{stem}.pgm")), &trace.final_recon, Some(window))?;
    write_image_raw(&out.join("recon").join(format!("{stem}.raw")), &trace.final_recon)?;
    let geom = plan.geom;
    write_trace(&out.join("traces").join(format!("{stem}.csv")), trace, |a| {
        geom.angle_deg(a)
    })
}

fn write_trajectories(plan: &Plan<'_>, cells: &[CellResult], out: &Path) -> Result<()> {
    let rows = cells.iter().flat_map(|c| {
        c.trajectory.iter().enumerate().map(move |(order, &angle)| {
            vec![
                c.phantom.clone(),
                c.policy.clone(),
                c.noise.clone(),
                order.to_string(),
                angle.to_string(),
                fmt_f64(plan.geom.angle_deg(angle)),
            ]
        })
    });
    write_atomic(
        &out.join("trajectories.csv"),
        csv_string(&TRAJECTORY_HEADER, rows)?.as_bytes(),
    )
}
