//! Sampling policies and the episode runners that drive them.
//!
//! An episode starts from a few measured views, then alternates reconstruct,
//! score, select and measure until `k_max` views are in hand. Uniform and
//! random sampling fix all views up front; the greedy oracle tries every
//! remaining candidate against the ground truth.

mod episode;
mod greedy;
mod source;

pub use episode::{run_active_episode, run_episode, run_fixed_episode, EpisodeRunner};
pub use greedy::greedy_episode;
pub use source::{MeasurementSource, NoiseConfig};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{config, Error, Result};
use crate::geometry::{AngleSet, Geometry};
use crate::image::Image;
use crate::metrics::MetricReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    /// Uniform sampling.
    Us,
    /// Random sampling.
    Rs,
    /// Learned active sampling with one window.
    Sas,
    /// Active sampling with a global window first, then a detail window.
    Gds,
    /// Greedy search against the ground truth.
    Gs,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [Self::Us, Self::Rs, Self::Sas, Self::Gds, Self::Gs];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Us => "US",
            Self::Rs => "RS",
            Self::Sas => "SAS",
            Self::Gds => "GDS",
            Self::Gs => "GS",
        }
    }

    pub fn is_active(self) -> bool {
        matches!(self, Self::Sas | Self::Gds)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| config(alloc::format!("unknown policy {s:?}")))
    }
}

/// Window schedule of the two-stage policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdsWindows {
    pub global: (f64, f64),
    pub detail: (f64, f64),
    /// Fraction of active steps spent in the global window.
    pub switch_fraction: f64,
}

impl Default for GdsWindows {
    fn default() -> Self {
        Self {
            global: (20.0, 60.0),
            detail: (5.0, 10.0),
            switch_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Uniform views measured before the first active step.
    pub k0: usize,
    /// Views added per active step.
    pub k: usize,
    pub k_max: usize,
    /// `(alpha_p, alpha_q)` in degrees.
    pub window: (f64, f64),
    pub gds: GdsWindows,
    /// First view of the greedy search.
    pub greedy_start: usize,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Sas,
            k0: 5,
            k: 1,
            k_max: 15,
            window: (5.0, 10.0),
            gds: GdsWindows::default(),
            greedy_start: 0,
            seed: 0,
        }
    }
}

fn check_window(w: (f64, f64), geom: &Geometry, what: &str) -> Result<()> {
    let (p, q) = w;
    if !(p.is_finite() && q.is_finite()) || p < 0.0 || p > q || q > geom.alpha_max / 2.0 {
        return Err(config(alloc::format!(
            "{what} window ({p}, {q}) needs 0 <= alpha_p <= alpha_q <= {}",
            geom.alpha_max / 2.0
        )));
    }
    Ok(())
}

impl PolicyConfig {
    pub fn with_kind(kind: PolicyKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    /// Number of active steps, `(k_max - k0) / k`.
    pub fn active_steps(&self) -> usize {
        (self.k_max - self.k0) / self.k
    }

    pub fn validate(&self, geom: &Geometry) -> Result<()> {
        let t = geom.num_angles;
        if self.k_max == 0 || self.k_max > t {
            return Err(config(alloc::format!("k_max must be in 1..={t}")));
        }
        match self.kind {
            PolicyKind::Us | PolicyKind::Rs => Ok(()),
            PolicyKind::Gs => geom.check_angle(self.greedy_start),
            PolicyKind::Sas | PolicyKind::Gds => {
                if self.k0 == 0 || self.k0 > self.k_max {
                    return Err(config("k0 must be in 1..=k_max"));
                }
                if self.k == 0 || (self.k_max - self.k0) % self.k != 0 {
                    return Err(config("k_max - k0 must be a positive multiple of k"));
                }
                if self.kind == PolicyKind::Sas {
                    check_window(self.window, geom, "selection")
                } else {
                    check_window(self.gds.global, geom, "global")?;
                    check_window(self.gds.detail, geom, "detail")?;
                    let f = self.gds.switch_fraction;
                    if !(f > 0.0 && f < 1.0) {
                        return Err(config("switch fraction must lie in (0, 1)"));
                    }
                    Ok(())
                }
            }
        }
    }
}

/// `floor(j * T / k_max)` for `j < k_max`.
pub fn uniform_angles(k_max: usize, num_angles: usize) -> Result<AngleSet> {
    if k_max == 0 || k_max > num_angles {
        return Err(config(alloc::format!("cannot place {k_max} uniform views among {num_angles}")));
    }
    let idx: Vec<usize> = (0..k_max).map(|j| j * num_angles / k_max).collect();
    let set = AngleSet::new(idx, num_angles)?;
    if set.len() != k_max {
        return Err(config("uniform angle collision"));
    }
    Ok(set)
}

/// `k_max` distinct angles drawn by a seeded partial Fisher-Yates shuffle.
pub fn random_angles(k_max: usize, num_angles: usize, seed: u64) -> Result<AngleSet> {
    if k_max == 0 || k_max > num_angles {
        return Err(config(alloc::format!("cannot draw {k_max} views among {num_angles}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<usize> = (0..num_angles).collect();
    let (chosen, _) = all.partial_shuffle(&mut rng, k_max);
    AngleSet::new(chosen.to_vec(), num_angles)
}

/// One acquired view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pick {
    pub step: usize,
    pub angle: usize,
    /// Agent score at selection time; `None` for views the agent did not pick.
    pub score: Option<f64>,
    pub fallback: bool,
}

/// Quality and timing after one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Number of views measured after this step.
    pub views: usize,
    /// `None` when the source has no ground truth.
    pub metrics: Option<MetricReport>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub kind: PolicyKind,
    pub picks: Vec<Pick>,
    pub steps: Vec<StepRecord>,
    /// Reconstruction from all `k_max` views.
    pub final_recon: Image,
    pub angles: AngleSet,
    /// Reconstruction after each step, kept only on request.
    pub intermediate: Vec<Image>,
    pub label: String,
}

impl EpisodeTrace {
    pub fn total_wall_ms(&self) -> f64 {
        self.steps.iter().map(|s| s.wall_ms).sum()
    }

    pub fn final_metrics(&self) -> Option<MetricReport> {
        self.steps.last().and_then(|s| s.metrics)
    }

    /// Picks grouped with the metrics of their step.
    pub fn rows(&self) -> impl Iterator<Item = (&Pick, &StepRecord)> {
        self.picks.iter().map(move |p| (p, &self.steps[p.step]))
    }
}
