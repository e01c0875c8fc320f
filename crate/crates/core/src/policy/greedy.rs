use alloc::string::String;
use alloc::vec::Vec;

use super::{EpisodeRunner, EpisodeTrace, MeasurementSource, Pick, PolicyKind, StepRecord};
use crate::error::{config, Error, Result};
use crate::geometry::AngleSet;
use crate::image::Image;
use crate::metrics::psnr;

/// PSNR on the ground truth's min-max window, as in the reported metrics.
pub(crate) fn normalized_psnr(gt: &Image, recon: &Image) -> Result<f64> {
    let (lo, hi) = gt.min_max();
    psnr(&gt.normalized_by(lo, hi), &recon.normalized_by(lo, hi), 1.0)
}

/// Training-free oracle: starting from `start`, repeatedly adds the single
/// view whose reconstruction is closest to the ground truth (highest PSNR,
/// lowest index on ties). The score column of each pick holds that PSNR.
pub fn greedy_episode(
    source: &MeasurementSource,
    k_max: usize,
    start: usize,
    runner: &EpisodeRunner<'_>,
) -> Result<EpisodeTrace> {
    let geom = source.geometry();
    let gt = source
        .ground_truth()
        .ok_or(Error::Empty("ground truth for greedy search"))?;
    if k_max == 0 || k_max > geom.num_angles {
        return Err(config("k_max must be in 1..=T"));
    }
    geom.check_angle(start)?;
    let clock = runner.clock;
    let recon_of = |s: &crate::sinogram::Sinogram| runner.reconstructor.reconstruct(s, geom);

    let mut t = clock.now_ms();
    let mut sampled = AngleSet::new(alloc::vec![start], geom.num_angles)?;
    let mut sino = source.measure_set(&sampled)?;
    let mut recon = recon_of(&sino)?;
    let mut picks = alloc::vec![Pick {
        step: 0,
        angle: start,
        score: Some(normalized_psnr(gt, &recon)?),
        fallback: false,
    }];
    let mut steps = Vec::with_capacity(k_max);
    let mut intermediate = Vec::new();
    let wall_ms = clock.now_ms() - t;
    steps.push(StepRecord {
        step: 0,
        views: 1,
        metrics: runner.metrics(source, &recon)?,
        wall_ms,
    });

    for step in 1..k_max {
        if runner.keep_intermediate {
            intermediate.push(recon.clone());
        }
        t = clock.now_ms();
        let mut best: Option<(usize, f64, Image)> = None;
        for cand in 0..geom.num_angles {
            if sampled.contains(cand) {
                continue;
            }
            let mut trial = sino.clone();
            trial.insert_row(cand, source.measure(cand)?.to_vec())?;
            let r = recon_of(&trial)?;
            let p = normalized_psnr(gt, &r)?;
            if best.as_ref().map_or(true, |b| p > b.1) {
                best = Some((cand, p, r));
            }
        }
        let (angle, p, r) = best.ok_or(Error::Exhausted)?;
        sino.insert_row(angle, source.measure(angle)?.to_vec())?;
        sampled.insert(angle);
        recon = r;
        picks.push(Pick {
            step,
            angle,
            score: Some(p),
            fallback: false,
        });
        let wall_ms = clock.now_ms() - t;
        steps.push(StepRecord {
            step,
            views: step + 1,
            metrics: runner.metrics(source, &recon)?,
            wall_ms,
        });
    }
    if runner.keep_intermediate {
        intermediate.push(recon.clone());
    }
    Ok(EpisodeTrace {
        kind: PolicyKind::Gs,
        picks,
        steps,
        final_recon: recon,
        angles: sampled,
        intermediate,
        label: String::from(PolicyKind::Gs.as_str()),
    })
}
