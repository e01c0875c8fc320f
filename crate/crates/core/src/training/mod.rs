//! Losses, Adam and the alternating optimization of reconstructor and agent.
//!
//! Each epoch runs a full sampling episode per training image with the current
//! models, then updates exactly one of them: the post-filter on reconstruction
//! epochs, the scorer on agent epochs. The discrete selection is treated as a
//! constant; no gradient flows through it.

mod adam;
mod loss;

pub use adam::{adam_step, AdamState};
pub use loss::{loss_agent, loss_recon, loss_recon_roi};

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::agent::{reliability_score, ScorerModel};
use crate::clock::{Clock, NoClock};
use crate::error::{config, Error, Result};
use crate::geometry::Geometry;
use crate::image::Image;
use crate::phantom::RoiMask;
use crate::policy::{uniform_angles, EpisodeRunner, MeasurementSource, NoiseConfig, PolicyConfig};
use crate::projector::forward_project_all;
use crate::recon::{PostFilterModel, Reconstructor};

/// Losses above this abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Post-filter update, scorer frozen.
    Recon,
    /// Scorer update, post-filter frozen.
    Agent,
    /// Scorer-only warm start on uniform-sampling reconstructions.
    Warmup,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Recon => "R",
            Phase::Agent => "A",
            Phase::Warmup => "W",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_recon: f64,
    pub lr_agent: f64,
    /// Weight RoI pixels in the reconstruction loss.
    pub roi_mode: bool,
    /// Leading epochs that all update the reconstructor.
    pub recon_warmup_epochs: usize,
    /// Scorer-only epochs before alternation starts.
    pub scorer_warmup_epochs: usize,
    /// Post-filter channel widths.
    pub channels: Vec<usize>,
    pub kernel: usize,
    /// Photon count for simulated scans; `None` trains on clean data.
    pub photons: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr_recon: 1e-4,
            lr_agent: 2e-4,
            roi_mode: false,
            recon_warmup_epochs: 0,
            scorer_warmup_epochs: 0,
            channels: vec![1, 8, 1],
            kernel: 5,
            photons: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 2 {
            return Err(config("training needs at least two epochs"));
        }
        if self.recon_warmup_epochs >= self.epochs {
            return Err(config("reconstructor warm-up must leave room for agent epochs"));
        }
        for lr in [self.lr_recon, self.lr_agent] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(config("learning rates must be positive"));
            }
        }
        if let Some(p) = self.photons {
            if !(p.is_finite() && p > 0.0) {
                return Err(config("photon count must be positive"));
            }
        }
        Ok(())
    }

    pub fn phase(&self, epoch: usize) -> Phase {
        if epoch < self.recon_warmup_epochs || epoch % 2 == 0 {
            Phase::Recon
        } else {
            Phase::Agent
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub image: Image,
    pub roi: Option<RoiMask>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// Warm-up epochs are numbered before the first alternating epoch, from 0.
    pub epoch: usize,
    pub phase: Phase,
    pub mean_loss: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub post_filter: PostFilterModel,
    pub scorer: ScorerModel,
    pub log: Vec<EpochLog>,
    /// Number of epochs that updated the post-filter.
    pub recon_phases: usize,
    /// Number of epochs that updated the scorer (warm-up included).
    pub agent_phases: usize,
}

/// Training state; [`train_alternating`] drives it epoch by epoch.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    policy: PolicyConfig,
    geom: Geometry,
    samples: Vec<(MeasurementSource, Option<&'a RoiMask>)>,
    reconstructor: Reconstructor,
    scorer: ScorerModel,
    adam_r: AdamState,
    adam_a: AdamState,
    clock: &'a dyn Clock,
    recon_phases: usize,
    agent_phases: usize,
}

fn sum_of_squares(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

impl<'a> Trainer<'a> {
    pub fn new(
        dataset: &'a [TrainSample],
        cfg: &TrainConfig,
        policy: &PolicyConfig,
        geom: &Geometry,
    ) -> Result<Self> {
        cfg.validate()?;
        policy.validate(geom)?;
        if dataset.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if cfg.roi_mode && dataset.iter().any(|s| s.roi.is_none()) {
            return Err(config("RoI training needs a mask for every image"));
        }
        let mut samples = Vec::with_capacity(dataset.len());
        for (i, s) in dataset.iter().enumerate() {
            let noise = cfg.photons.map(|photons| NoiseConfig {
                photons,
                seed: cfg.seed.wrapping_add(i as u64),
            });
            samples.push((MeasurementSource::simulate(&s.image, geom, noise)?, s.roi.as_ref()));
        }
        let scale = samples
            .iter()
            .map(|(src, _)| src.max_abs())
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut scorer = ScorerModel::random(geom.num_detectors, cfg.seed ^ 0x5c0e)?;
        scorer.set_input_scale(scale)?;
        let model = PostFilterModel::identity_init(cfg.channels.clone(), cfg.kernel, cfg.seed ^ 0xf117)?;
        let reconstructor = Reconstructor::with_model(model);
        Ok(Self {
            adam_r: AdamState::new(reconstructor.model.num_params(), cfg.lr_recon),
            adam_a: AdamState::new(scorer.num_params(), cfg.lr_agent),
            cfg: cfg.clone(),
            policy: *policy,
            geom: *geom,
            samples,
            reconstructor,
            scorer,
            clock: &NoClock,
            recon_phases: 0,
            agent_phases: 0,
        })
    }

    pub fn with_clock(mut self, clock: &'a dyn Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Replaces the classical-solver settings of the reconstructor.
    pub fn with_reconstructor_settings(mut self, base: &Reconstructor) -> Self {
        self.reconstructor.filter = base.filter;
        self.reconstructor.sart = base.sart;
        self
    }

    pub fn reconstructor(&self) -> &Reconstructor {
        &self.reconstructor
    }

    pub fn scorer(&self) -> &ScorerModel {
        &self.scorer
    }

    fn check_loss(&self, epoch: usize, loss: f64) -> Result<()> {
        if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { epoch, loss });
        }
        Ok(())
    }

    /// Mean agent loss over `images` and its parameter gradient.
    fn agent_gradient(&self, images: &[Image], clean: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        let mut grads = vec![0.0; self.scorer.num_params()];
        let mut total = 0.0;
        for u in images {
            let rows = forward_project_all(u, &self.geom)?;
            let mut scores = Vec::with_capacity(rows.len());
            let mut targets = Vec::with_capacity(rows.len());
            for (row, gt) in rows.iter().zip(clean) {
                scores.push(self.scorer.forward(row)?);
                targets.push(reliability_score(row, gt)?);
            }
            let (loss, dl) = loss_agent(&scores, &targets)?;
            total += loss;
            let inv = 1.0 / images.len() as f64;
            for (row, d) in rows.iter().zip(&dl) {
                self.scorer.accumulate_grad(row, d * inv, &mut grads);
            }
        }
        Ok((total / images.len() as f64, grads))
    }

    /// Scorer-only epoch on uniform-sampling reconstructions at every view
    /// count the active policy passes through.
    pub fn warmup_epoch(&mut self, epoch: usize) -> Result<EpochLog> {
        let t0 = self.clock.now_ms();
        let mut total = 0.0;
        for i in 0..self.samples.len() {
            let src = &self.samples[i].0;
            let mut images = Vec::new();
            let mut views = self.policy.k0.max(1);
            loop {
                let angles = uniform_angles(views, self.geom.num_angles)?;
                images.push(self.reconstructor.reconstruct(&src.measure_set(&angles)?, &self.geom)?);
                views += self.policy.k.max(1);
                if views >= self.policy.k_max {
                    break;
                }
            }
            let (loss, grads) = self.agent_gradient(&images, &src.clean_rows())?;
            self.check_loss(epoch, loss)?;
            adam_step(self.scorer.params_mut(), &grads, &mut self.adam_a)?;
            total += loss;
        }
        self.agent_phases += 1;
        Ok(EpochLog {
            epoch,
            phase: Phase::Warmup,
            mean_loss: total / self.samples.len() as f64,
            wall_ms: self.clock.now_ms() - t0,
        })
    }

    /// One alternating epoch; the phase follows from the epoch index.
    pub fn run_epoch(&mut self, epoch: usize) -> Result<EpochLog> {
        let t0 = self.clock.now_ms();
        let phase = self.cfg.phase(epoch);
        let mut total = 0.0;
        for i in 0..self.samples.len() {
            let (src, roi) = (&self.samples[i].0, self.samples[i].1);
            let runner = EpisodeRunner::new(&self.reconstructor, &self.scorer).keeping_intermediate();
            let trace = runner.run(src, &self.policy)?;
            let loss = match phase {
                Phase::Recon => {
                    let gt = src.ground_truth().expect("simulated source");
                    let sino = src.measure_set(&trace.angles)?;
                    let classical = self.reconstructor.classical(&sino, &self.geom)?;
                    let out = self.reconstructor.model.forward(&classical);
                    let (loss, upstream) = match (self.cfg.roi_mode, roi) {
                        (true, Some(mask)) => loss_recon_roi(&out, gt, mask)?,
                        _ => loss_recon(&out, gt)?,
                    };
                    self.check_loss(epoch, loss)?;
                    let (grads, _) = self.reconstructor.model.backward(&classical, &upstream)?;
                    adam_step(self.reconstructor.model.params_mut(), &grads, &mut self.adam_r)?;
                    loss
                }
                _ => {
                    // the estimates the agent actually scored
                    let n = trace.intermediate.len().saturating_sub(1).max(1);
                    let (loss, grads) = self.agent_gradient(&trace.intermediate[..n], &src.clean_rows())?;
                    self.check_loss(epoch, loss)?;
                    adam_step(self.scorer.params_mut(), &grads, &mut self.adam_a)?;
                    loss
                }
            };
            total += loss;
        }
        match phase {
            Phase::Recon => self.recon_phases += 1,
            _ => self.agent_phases += 1,
        }
        let log = EpochLog {
            epoch,
            phase,
            mean_loss: total / self.samples.len() as f64,
            wall_ms: self.clock.now_ms() - t0,
        };
        log::info!("epoch {} [{}] mean loss {:.6e}", epoch, phase, log.mean_loss);
        Ok(log)
    }

    /// Sum of squares of the post-filter and scorer parameters.
    pub fn checksums(&self) -> (f64, f64) {
        (
            sum_of_squares(self.reconstructor.model.params()),
            sum_of_squares(self.scorer.params()),
        )
    }

    pub fn finish(self, log: Vec<EpochLog>) -> TrainOutcome {
        TrainOutcome {
            post_filter: self.reconstructor.model,
            scorer: self.scorer,
            log,
            recon_phases: self.recon_phases,
            agent_phases: self.agent_phases,
        }
    }
}

/// Trains post-filter and scorer from scratch; deterministic for a fixed seed.
pub fn train_alternating(
    dataset: &[TrainSample],
    cfg: &TrainConfig,
    policy: &PolicyConfig,
    base: &Reconstructor,
    geom: &Geometry,
    clock: &dyn Clock,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(dataset, cfg, policy, geom)?
        .with_clock(clock)
        .with_reconstructor_settings(base);
    let mut log = Vec::with_capacity(cfg.epochs + cfg.scorer_warmup_epochs);
    for w in 0..cfg.scorer_warmup_epochs {
        log.push(trainer.warmup_epoch(w)?);
    }
    for epoch in 0..cfg.epochs {
        log.push(trainer.run_epoch(epoch)?);
    }
    Ok(trainer.finish(log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{render_phantom, shepp_logan_family};
    use crate::policy::PolicyKind;
    use crate::recon::SartConfig;

    fn small_setup(n_images: usize) -> (Vec<TrainSample>, PolicyConfig, Reconstructor, Geometry) {
        let geom = Geometry::new(16, 16, 36, 180.0).unwrap();
        let data = shepp_logan_family(n_images)
            .iter()
            .map(|s| TrainSample {
                image: render_phantom(s, 16, 16).unwrap(),
                roi: Some(RoiMask::full(16, 16)),
            })
            .collect();
        let policy = PolicyConfig {
            kind: PolicyKind::Sas,
            k0: 3,
            k: 1,
            k_max: 6,
            window: (2.0, 30.0),
            ..PolicyConfig::default()
        };
        let base = Reconstructor {
            sart: SartConfig {
                num_iterations: 3,
                ..SartConfig::default()
            },
            ..Reconstructor::default()
        };
        (data, policy, base, geom)
    }

    #[test]
    fn two_epochs_update_each_model_once() {
        let (data, policy, base, geom) = small_setup(1);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let out = train_alternating(&data, &cfg, &policy, &base, &geom, &NoClock).unwrap();
        assert_eq!(out.recon_phases, 1);
        assert_eq!(out.agent_phases, 1);
        assert_eq!(out.log.len(), 2);
        assert_eq!(out.log[0].phase, Phase::Recon);
        assert_eq!(out.log[1].phase, Phase::Agent);
        assert!(out.log.iter().all(|l| l.mean_loss >= 0.0));
    }

    #[test]
    fn epochs_change_exactly_one_model() {
        let (data, policy, base, geom) = small_setup(2);
        let cfg = TrainConfig {
            epochs: 4,
            recon_warmup_epochs: 2,
            ..TrainConfig::default()
        };
        let mut tr = Trainer::new(&data, &cfg, &policy, &geom)
            .unwrap()
            .with_reconstructor_settings(&base);
        let expected = [Phase::Recon, Phase::Recon, Phase::Recon, Phase::Agent];
        for (e, want) in expected.into_iter().enumerate() {
            let (r0, a0) = tr.checksums();
            let log = tr.run_epoch(e).unwrap();
            let (r1, a1) = tr.checksums();
            assert_eq!(log.phase, want);
            match want {
                Phase::Recon => assert!(r1 != r0 && a1 == a0),
                _ => assert!(r1 == r0 && a1 != a0),
            }
        }
    }

    #[test]
    fn seeded_training_is_bit_identical() {
        let (data, policy, base, geom) = small_setup(2);
        let cfg = TrainConfig {
            epochs: 3,
            scorer_warmup_epochs: 1,
            seed: 7,
            ..TrainConfig::default()
        };
        let a = train_alternating(&data, &cfg, &policy, &base, &geom, &NoClock).unwrap();
        let b = train_alternating(&data, &cfg, &policy, &base, &geom, &NoClock).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.log[0].phase, Phase::Warmup);
        assert_eq!(a.agent_phases, 2);
    }

    #[test]
    fn roi_mode_needs_masks() {
        let (mut data, policy, _, geom) = small_setup(2);
        data[1].roi = None;
        let cfg = TrainConfig {
            roi_mode: true,
            ..TrainConfig::default()
        };
        assert!(Trainer::new(&data, &cfg, &policy, &geom).is_err());
        assert!(Trainer::new(&[], &TrainConfig::default(), &policy, &geom).is_err());
        let one = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        assert!(one.validate().is_err());
    }

    #[test]
    fn huge_learning_rate_is_reported_as_divergence() {
        let (data, policy, base, geom) = small_setup(1);
        let cfg = TrainConfig {
            epochs: 4,
            lr_recon: 1e6,
            ..TrainConfig::default()
        };
        let err = train_alternating(&data, &cfg, &policy, &base, &geom, &NoClock).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err:?}");
    }
}
