use alloc::string::String;
use alloc::vec::Vec;

use super::{
    greedy_episode, random_angles, uniform_angles, EpisodeTrace, MeasurementSource, Pick,
    PolicyConfig, PolicyKind, StepRecord,
};
use crate::agent::{score_all_candidates, select_topk_in_range, CandidateScorer, SelectionState};
use crate::clock::{Clock, NoClock};
use crate::error::Result;
use crate::geometry::AngleSet;
use crate::image::Image;
use crate::metrics::MetricReport;
use crate::phantom::RoiMask;
use crate::recon::Reconstructor;

/// Everything an episode needs besides the scan and the policy settings.
#[derive(Clone, Copy)]
pub struct EpisodeRunner<'a> {
    pub reconstructor: &'a Reconstructor,
    pub scorer: &'a dyn CandidateScorer,
    pub clock: &'a dyn Clock,
    /// Adds RoI-restricted values to every step's metrics.
    pub roi: Option<&'a RoiMask>,
    /// Keep the reconstruction of every step in the trace.
    pub keep_intermediate: bool,
}

impl<'a> EpisodeRunner<'a> {
    pub fn new(reconstructor: &'a Reconstructor, scorer: &'a dyn CandidateScorer) -> Self {
        Self {
            reconstructor,
            scorer,
            clock: &NoClock,
            roi: None,
            keep_intermediate: false,
        }
    }

    pub fn with_clock(mut self, clock: &'a dyn Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_roi(mut self, roi: Option<&'a RoiMask>) -> Self {
        self.roi = roi;
        self
    }

    pub fn keeping_intermediate(mut self) -> Self {
        self.keep_intermediate = true;
        self
    }

    pub(crate) fn metrics(&self, source: &MeasurementSource, recon: &Image) -> Result<Option<MetricReport>> {
        source
            .ground_truth()
            .map(|gt| MetricReport::evaluate(gt, recon, self.roi))
            .transpose()
    }

    pub fn run(&self, source: &MeasurementSource, cfg: &PolicyConfig) -> Result<EpisodeTrace> {
        run_episode(source, cfg, self)
    }
}

/// Dispatches on the policy kind.
pub fn run_episode(
    source: &MeasurementSource,
    cfg: &PolicyConfig,
    runner: &EpisodeRunner<'_>,
) -> Result<EpisodeTrace> {
    let geom = source.geometry();
    cfg.validate(geom)?;
    match cfg.kind {
        PolicyKind::Us => {
            let angles = uniform_angles(cfg.k_max, geom.num_angles)?;
            run_fixed_episode(source, &angles, PolicyKind::Us, runner)
        }
        PolicyKind::Rs => {
            let angles = random_angles(cfg.k_max, geom.num_angles, cfg.seed)?;
            run_fixed_episode(source, &angles, PolicyKind::Rs, runner)
        }
        PolicyKind::Sas | PolicyKind::Gds => run_active_episode(source, cfg, runner),
        PolicyKind::Gs => greedy_episode(source, cfg.k_max, cfg.greedy_start, runner),
    }
}

/// Measures a predetermined angle set in one step. The scorer is not used.
pub fn run_fixed_episode(
    source: &MeasurementSource,
    angles: &AngleSet,
    kind: PolicyKind,
    runner: &EpisodeRunner<'_>,
) -> Result<EpisodeTrace> {
    let t0 = runner.clock.now_ms();
    let sino = source.measure_set(angles)?;
    let recon = runner.reconstructor.reconstruct(&sino, source.geometry())?;
    let wall_ms = runner.clock.now_ms() - t0;
    let metrics = runner.metrics(source, &recon)?;
    Ok(EpisodeTrace {
        kind,
        picks: angles
            .iter()
            .map(|angle| Pick {
                step: 0,
                angle,
                score: None,
                fallback: false,
            })
            .collect(),
        steps: alloc::vec![StepRecord {
            step: 0,
            views: angles.len(),
            metrics,
            wall_ms,
        }],
        intermediate: if runner.keep_intermediate {
            alloc::vec![recon.clone()]
        } else {
            Vec::new()
        },
        final_recon: recon,
        angles: angles.clone(),
        label: String::from(kind.as_str()),
    })
}

/// The inference loop of the active policies: `k0` uniform views, then
/// `(k_max - k0) / k` rounds of reconstruct, score every angle, pick the
/// best `k` inside the window and measure them. The final reconstruction uses
/// all `k_max` views.
pub fn run_active_episode(
    source: &MeasurementSource,
    cfg: &PolicyConfig,
    runner: &EpisodeRunner<'_>,
) -> Result<EpisodeTrace> {
    let geom = source.geometry();
    cfg.validate(geom)?;
    let clock = runner.clock;
    let n_steps = cfg.active_steps();
    let switch_at = (n_steps as f64 * cfg.gds.switch_fraction) as usize;
    let window_for = |n: usize| match cfg.kind {
        PolicyKind::Gds if n < switch_at => cfg.gds.global,
        PolicyKind::Gds => cfg.gds.detail,
        _ => cfg.window,
    };

    let mut t = clock.now_ms();
    let init = uniform_angles(cfg.k0, geom.num_angles)?;
    let mut sino = source.measure_set(&init)?;
    let mut recon = runner.reconstructor.reconstruct(&sino, geom)?;
    let mut picks: Vec<Pick> = init
        .iter()
        .map(|angle| Pick {
            step: 0,
            angle,
            score: None,
            fallback: false,
        })
        .collect();
    let mut steps = Vec::with_capacity(n_steps + 1);
    let mut intermediate = Vec::new();
    let wall_ms = clock.now_ms() - t;
    steps.push(StepRecord {
        step: 0,
        views: cfg.k0,
        metrics: runner.metrics(source, &recon)?,
        wall_ms,
    });
    let mut state = SelectionState::new(init, window_for(0), geom)?;

    for n in 1..=n_steps {
        if runner.keep_intermediate {
            intermediate.push(recon.clone());
        }
        t = clock.now_ms();
        state.window = window_for(n - 1);
        let scores = score_all_candidates(&recon, runner.scorer, geom)?;
        let sel = select_topk_in_range(&scores, &state, cfg.k, geom)?;
        for &(angle, score) in &sel.picks {
            sino.insert_row(angle, source.measure(angle)?.to_vec())?;
            picks.push(Pick {
                step: n,
                angle,
                score: Some(score),
                fallback: sel.fallback,
            });
        }
        state.record(&sel);
        recon = runner.reconstructor.reconstruct(&sino, geom)?;
        let wall_ms = clock.now_ms() - t;
        steps.push(StepRecord {
            step: n,
            views: state.sampled.len(),
            metrics: runner.metrics(source, &recon)?,
            wall_ms,
        });
    }
    if runner.keep_intermediate {
        intermediate.push(recon.clone());
    }
    log::debug!("{} episode finished with {} views", cfg.kind, state.sampled.len());
    Ok(EpisodeTrace {
        kind: cfg.kind,
        picks,
        steps,
        final_recon: recon,
        angles: state.sampled,
        intermediate,
        label: String::from(cfg.kind.as_str()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{ConstantScorer, CountingScorer, OracleScorer};
    use crate::geometry::Geometry;
    use crate::phantom::shepp_logan;
    use crate::policy::GdsWindows;
    use crate::recon::SartConfig;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fast_recon() -> Reconstructor {
        Reconstructor {
            sart: SartConfig {
                num_iterations: 3,
                ..SartConfig::default()
            },
            ..Reconstructor::default()
        }
    }

    fn source(n: usize, t: usize) -> MeasurementSource {
        let g = Geometry::new(n, n, t, 180.0).unwrap();
        MeasurementSource::simulate(&shepp_logan(n, n).unwrap(), &g, None).unwrap()
    }

    #[test]
    fn forced_path_is_an_arithmetic_chain() {
        // 5 degree steps; window (5, 5) admits only the two neighbours of the
        // last pick, and a constant scorer takes the lower one unless sampled
        let src = source(16, 36);
        let r = fast_recon();
        let scorer = ConstantScorer(0.5);
        let runner = EpisodeRunner::new(&r, &scorer);
        let cfg = PolicyConfig {
            kind: PolicyKind::Sas,
            k0: 2,
            k: 1,
            k_max: 8,
            window: (5.0, 5.0),
            ..PolicyConfig::default()
        };
        let trace = runner.run(&src, &cfg).unwrap();
        let order: Vec<usize> = trace.picks.iter().map(|p| p.angle).collect();
        // initial {0, 18}; first active pick is the lowest unsampled angle
        assert_eq!(order, vec![0, 18, 1, 2, 3, 4, 5, 6]);
        assert!(trace.picks.iter().all(|p| !p.fallback));
        assert_eq!(trace.steps.len(), 7);
    }

    #[test]
    fn structural_invariants_on_random_configs() {
        let src = source(16, 24);
        let geom = *src.geometry();
        let r = fast_recon();
        let scorer = crate::agent::ScorerModel::random(geom.num_detectors, 1).unwrap();
        let runner = EpisodeRunner::new(&r, &scorer);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let kind = [PolicyKind::Us, PolicyKind::Rs, PolicyKind::Sas, PolicyKind::Gds][rng.random_range(0..4)];
            let k = rng.random_range(1..4);
            let k0 = rng.random_range(1..6);
            let k_max = (k0 + k * rng.random_range(0..5)).min(24);
            let k_max = k0 + (k_max - k0) / k * k;
            let p = rng.random_range(0..4) as f64 * 7.5;
            let cfg = PolicyConfig {
                kind,
                k0,
                k,
                k_max,
                window: (p, p + rng.random_range(0..4) as f64 * 7.5),
                gds: GdsWindows {
                    global: (15.0, 60.0),
                    detail: (0.0, 15.0),
                    switch_fraction: 0.5,
                },
                seed: rng.random(),
                ..PolicyConfig::default()
            };
            let trace = runner.run(&src, &cfg).unwrap();
            assert_eq!(trace.picks.len(), k_max);
            assert_eq!(trace.angles.len(), k_max);
            assert_eq!(trace.picks.last().unwrap().step + 1, trace.steps.len());
            for (i, s) in trace.steps.iter().enumerate() {
                assert_eq!(s.step, i);
            }
            assert_eq!(trace.steps.last().unwrap().views, k_max);
            let rows = src.measure_set(&trace.angles).unwrap();
            for a in trace.angles.iter() {
                assert_eq!(rows.row(a).unwrap(), src.measure(a).unwrap());
            }
        }
    }

    #[test]
    fn fixed_policies_never_score() {
        let src = source(16, 30);
        let r = fast_recon();
        let counter = CountingScorer::new(ConstantScorer(0.1));
        let runner = EpisodeRunner::new(&r, &counter);
        for kind in [PolicyKind::Us, PolicyKind::Rs] {
            let trace = runner.run(&src, &PolicyConfig::with_kind(kind)).unwrap();
            assert_eq!(trace.picks.len(), 15);
        }
        assert_eq!(counter.calls(), 0);
        runner.run(&src, &PolicyConfig::with_kind(PolicyKind::Sas)).unwrap();
        assert_eq!(counter.calls(), 10);
    }

    #[test]
    fn oracle_sas_never_resamples() {
        let src = source(24, 60);
        let r = fast_recon();
        let oracle = OracleScorer::new(src.clean_rows());
        let runner = EpisodeRunner::new(&r, &oracle).keeping_intermediate();
        let cfg = PolicyConfig {
            k0: 3,
            k_max: 9,
            ..PolicyConfig::default()
        };
        let trace = runner.run(&src, &cfg).unwrap();
        assert_eq!(trace.intermediate.len(), 7);
        assert_eq!(trace.intermediate.last().unwrap(), &trace.final_recon);
        for p in trace.picks.iter().filter(|p| p.step > 0) {
            let s = p.score.unwrap();
            assert!(s > 0.0 && s <= 1.0);
        }
        let mut seen = alloc::collections::BTreeSet::new();
        assert!(trace.picks.iter().all(|p| seen.insert(p.angle)));
    }

    #[test]
    fn gds_switches_windows() {
        let src = source(16, 36);
        let r = fast_recon();
        let scorer = ConstantScorer(0.0);
        let runner = EpisodeRunner::new(&r, &scorer);
        let cfg = PolicyConfig {
            kind: PolicyKind::Gds,
            k0: 1,
            k: 1,
            k_max: 5,
            gds: GdsWindows {
                global: (50.0, 50.0),
                detail: (5.0, 5.0),
                switch_fraction: 0.5,
            },
            ..PolicyConfig::default()
        };
        let trace = runner.run(&src, &cfg).unwrap();
        let order: Vec<usize> = trace.picks.iter().map(|p| p.angle).collect();
        // steps 1-2 use the global window (10 angles away), then detail
        assert_eq!(order, vec![0, 1, 11, 10, 9]);
    }

    #[test]
    fn metrics_are_reported_per_step() {
        let src = source(16, 30);
        let r = fast_recon();
        let scorer = ConstantScorer(0.0);
        let trace = EpisodeRunner::new(&r, &scorer)
            .run(&src, &PolicyConfig::default())
            .unwrap();
        assert!(trace.steps.iter().all(|s| s.metrics.is_some()));
        assert_eq!(trace.total_wall_ms(), 0.0);
        let wrapped = MeasurementSource::from_sinogram(src.full().clone()).unwrap();
        let trace = EpisodeRunner::new(&r, &scorer)
            .run(&wrapped, &PolicyConfig::default())
            .unwrap();
        assert!(trace.final_metrics().is_none());
    }
}
