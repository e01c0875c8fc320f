//! Experiment configuration, read from TOML.
//!
//! Every section and key is optional; omitted values take the defaults below
//! (the README lists the full schema). Unknown keys are rejected.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use actiscan_core::phantom::{
    off_center_feature, off_center_suite, render_phantom, rescale_unit, shepp_logan,
    shepp_logan_family, Ellipse, EllipsePhantom, RoiSpec,
};
use actiscan_core::policy::{GdsWindows, PolicyConfig, PolicyKind};
use actiscan_core::recon::{RampFilter, Reconstructor, SartConfig};
use actiscan_core::training::TrainConfig;
use actiscan_core::{Geometry, Image};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_image_raw;

pub use actiscan_core::noise::{PHOTONS_L1, PHOTONS_L2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Checkpoint supplying the post-filter and the `model` scorer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    pub geometry: GeometryConfig,
    pub recon: ReconConfig,
    pub metrics: MetricsConfig,
    pub train: TrainSection,
    pub noise: Vec<NoiseLevel>,
    pub phantoms: Vec<PhantomSource>,
    pub policies: Vec<PolicyEntry>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            model: None,
            geometry: GeometryConfig::default(),
            recon: ReconConfig::default(),
            metrics: MetricsConfig::default(),
            train: TrainSection::default(),
            noise: vec![NoiseLevel::None],
            phantoms: vec![PhantomSource::SheppLoganFamily { count: 5 }],
            policies: vec![
                PolicyEntry::new(PolicyKind::Us),
                PolicyEntry::new(PolicyKind::Rs),
                PolicyEntry {
                    scorer: ScorerChoice::Oracle,
                    ..PolicyEntry::new(PolicyKind::Sas)
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    /// Side length of the square image grid in pixels.
    pub size: usize,
    pub num_angles: usize,
    /// Degrees.
    pub alpha_max: f64,
    /// Defaults to the smallest odd count covering the image diagonal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_detectors: Option<usize>,
    /// Defaults to `2 / size`, so the object spans two length units.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pixel_size: Option<f64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            size: 64,
            num_angles: 180,
            alpha_max: 180.0,
            num_detectors: None,
            pixel_size: None,
        }
    }
}

impl GeometryConfig {
    pub fn build(&self) -> Result<Geometry> {
        let g = match self.num_detectors {
            Some(d) => Geometry::with_detectors(self.size, self.size, d, self.num_angles, self.alpha_max)?,
            None => Geometry::new(self.size, self.size, self.num_angles, self.alpha_max)?,
        };
        let ps = self.pixel_size.unwrap_or(2.0 / self.size.max(1) as f64);
        Ok(g.scaled(ps)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterName {
    #[default]
    Ramp,
    Hann,
}

impl From<FilterName> for RampFilter {
    fn from(f: FilterName) -> Self {
        match f {
            FilterName::Ramp => RampFilter::Ramp,
            FilterName::Hann => RampFilter::Hann,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    pub filter: FilterName,
    pub sart_iterations: usize,
    pub relaxation: f64,
    pub nonnegativity: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        let s = SartConfig::default();
        Self {
            filter: FilterName::Ramp,
            sart_iterations: s.num_iterations,
            relaxation: s.relaxation,
            nonnegativity: s.nonnegativity,
        }
    }
}

impl ReconConfig {
    /// Classical settings with an identity post-filter.
    pub fn reconstructor(&self) -> Result<Reconstructor> {
        let sart = SartConfig {
            num_iterations: self.sart_iterations,
            relaxation: self.relaxation,
            nonnegativity: self.nonnegativity,
        };
        sart.validate()?;
        Ok(Reconstructor {
            filter: self.filter.into(),
            sart,
            ..Reconstructor::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roi: Option<RoiConfig>,
    /// Random-sampling cells average over this many seeds.
    pub rs_seeds: usize,
    /// Record wall-clock times. Off by default so outputs are reproducible
    /// byte for byte.
    pub record_timing: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            roi: None,
            rs_seeds: 5,
            record_timing: false,
        }
    }
}

/// Region of interest, in the phantom's `[-1, 1]` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RoiConfig {
    Ellipse(EllipseConfig),
    /// Pixels of the ground truth with value `>= tau`.
    Threshold { tau: f64 },
    /// Disc of `radius` around an off-centre phantom's feature cluster.
    Feature { radius: f64 },
}

impl RoiConfig {
    /// Resolves to a concrete mask spec for one phantom.
    pub fn spec(&self, phantom: &Phantom) -> Result<RoiSpec> {
        Ok(match self {
            RoiConfig::Ellipse(e) => RoiSpec::Ellipse(e.to_ellipse(1.0)),
            RoiConfig::Threshold { tau } => RoiSpec::Threshold(*tau),
            RoiConfig::Feature { radius } => {
                let (x, y) = phantom.feature.ok_or_else(|| {
                    Error::Config(format!(
                        "phantom {:?} has no feature cluster for a feature RoI",
                        phantom.name
                    ))
                })?;
                RoiSpec::Ellipse(Ellipse::new(x, y, *radius, *radius, 0.0, 1.0))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipseConfig {
    pub center_x: f64,
    pub center_y: f64,
    pub semi_a: f64,
    pub semi_b: f64,
    /// Degrees, counter-clockwise.
    #[serde(default)]
    pub rotation: f64,
    #[serde(default = "one")]
    pub intensity: f64,
}

fn one() -> f64 {
    1.0
}

impl EllipseConfig {
    fn to_ellipse(&self, intensity: f64) -> Ellipse {
        Ellipse::new(self.center_x, self.center_y, self.semi_a, self.semi_b, self.rotation, intensity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhantomSource {
    SheppLogan {},
    SheppLoganFamily { count: usize },
    OffCenter { count: usize },
    Ellipses { name: String, ellipses: Vec<EllipseConfig> },
    /// An `ACTISCAN1` raw image of the configured size.
    File { path: PathBuf },
}

/// A rendered test image.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub name: String,
    pub image: Image,
    /// Centre of the off-centre feature cluster, when there is one.
    pub feature: Option<(f64, f64)>,
}

impl PhantomSource {
    pub fn render(&self, size: usize) -> Result<Vec<Phantom>> {
        let draw = |spec: &EllipsePhantom| -> Result<Image> {
            Ok(rescale_unit(&render_phantom(spec, size, size)?))
        };
        Ok(match self {
            PhantomSource::SheppLogan {} => vec![Phantom {
                name: "shepp_logan".into(),
                image: shepp_logan(size, size)?,
                feature: None,
            }],
            PhantomSource::SheppLoganFamily { count } => shepp_logan_family(*count)
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    Ok(Phantom {
                        name: format!("sl_family_{i:02}"),
                        image: draw(s)?,
                        feature: None,
                    })
                })
                .collect::<Result<_>>()?,
            PhantomSource::OffCenter { count } => off_center_suite(*count)
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    Ok(Phantom {
                        name: format!("off_center_{i:02}"),
                        image: draw(s)?,
                        feature: Some(off_center_feature(i)),
                    })
                })
                .collect::<Result<_>>()?,
            PhantomSource::Ellipses { name, ellipses } => {
                let spec = EllipsePhantom::new(
                    ellipses.iter().map(|e| e.to_ellipse(e.intensity)).collect(),
                );
                spec.validate()?;
                vec![Phantom {
                    name: name.clone(),
                    image: draw(&spec)?,
                    feature: None,
                }]
            }
            PhantomSource::File { path } => {
                let image = read_image_raw(path)?;
                if image.dims() != (size, size) {
                    return Err(Error::Config(format!(
                        "{} is {}x{}, expected {size}x{size}",
                        path.display(),
                        image.h(),
                        image.w()
                    )));
                }
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "file".into());
                vec![Phantom {
                    name,
                    image,
                    feature: None,
                }]
            }
        })
    }
}

/// Noise applied to simulated scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseRepr", into = "NoiseRepr")]
pub enum NoiseLevel {
    None,
    /// 5e5 incident photons.
    L1,
    /// 1e5 incident photons.
    L2,
    Photons(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NoiseRepr {
    Name(String),
    Photons(f64),
}

impl TryFrom<NoiseRepr> for NoiseLevel {
    type Error = String;

    fn try_from(r: NoiseRepr) -> std::result::Result<Self, String> {
        match r {
            NoiseRepr::Name(s) => s.parse(),
            NoiseRepr::Photons(p) if p > 0.0 && p.is_finite() => Ok(NoiseLevel::Photons(p)),
            NoiseRepr::Photons(p) => Err(format!("photon count must be positive, got {p}")),
        }
    }
}

impl From<NoiseLevel> for NoiseRepr {
    fn from(n: NoiseLevel) -> Self {
        match n {
            NoiseLevel::Photons(p) => NoiseRepr::Photons(p),
            other => NoiseRepr::Name(other.to_string()),
        }
    }
}

impl std::str::FromStr for NoiseLevel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(NoiseLevel::None),
            "L1" | "l1" => Ok(NoiseLevel::L1),
            "L2" | "l2" => Ok(NoiseLevel::L2),
            _ => match s.parse::<f64>() {
                Ok(p) if p > 0.0 && p.is_finite() => Ok(NoiseLevel::Photons(p)),
                _ => Err(format!("unknown noise level {s:?} (none, L1, L2 or a photon count)")),
            },
        }
    }
}

impl fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseLevel::None => f.write_str("none"),
            NoiseLevel::L1 => f.write_str("L1"),
            NoiseLevel::L2 => f.write_str("L2"),
            NoiseLevel::Photons(p) => write!(f, "{p}"),
        }
    }
}

impl NoiseLevel {
    pub fn photons(self) -> Option<f64> {
        match self {
            NoiseLevel::None => None,
            NoiseLevel::L1 => Some(PHOTONS_L1),
            NoiseLevel::L2 => Some(PHOTONS_L2),
            NoiseLevel::Photons(p) => Some(p),
        }
    }
}

/// Where active policies get their candidate scores from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScorerChoice {
    /// The trained scorer from the checkpoint.
    #[default]
    Model,
    /// Exact reliability against the clean sinogram.
    Oracle,
    /// Every candidate scores 0.5; selection falls back to index order.
    Constant,
}

mod kind_serde {
    use actiscan_core::policy::PolicyKind;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &PolicyKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(k.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<PolicyKind, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    #[serde(with = "kind_serde")]
    pub kind: PolicyKind,
    /// Column label in the outputs; defaults to the policy's short name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default = "d_k0")]
    pub k0: usize,
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default = "d_k_max")]
    pub k_max: usize,
    /// `[alpha_p, alpha_q]` in degrees (SAS).
    #[serde(default = "d_window")]
    pub window: [f64; 2],
    #[serde(default = "d_global")]
    pub global_window: [f64; 2],
    #[serde(default = "d_detail")]
    pub detail_window: [f64; 2],
    #[serde(default = "d_switch")]
    pub switch_fraction: f64,
    #[serde(default)]
    pub scorer: ScorerChoice,
    #[serde(default)]
    pub greedy_start: usize,
}

fn d_k0() -> usize {
    PolicyConfig::default().k0
}
fn d_k() -> usize {
    PolicyConfig::default().k
}
fn d_k_max() -> usize {
    PolicyConfig::default().k_max
}
fn d_window() -> [f64; 2] {
    let (p, q) = PolicyConfig::default().window;
    [p, q]
}
fn d_global() -> [f64; 2] {
    let (p, q) = GdsWindows::default().global;
    [p, q]
}
fn d_detail() -> [f64; 2] {
    let (p, q) = GdsWindows::default().detail;
    [p, q]
}
fn d_switch() -> f64 {
    GdsWindows::default().switch_fraction
}

impl PolicyEntry {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            label: None,
            k0: d_k0(),
            k: d_k(),
            k_max: d_k_max(),
            window: d_window(),
            global_window: d_global(),
            detail_window: d_detail(),
            switch_fraction: d_switch(),
            scorer: ScorerChoice::default(),
            greedy_start: 0,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.as_str().to_string())
    }

    pub fn policy_config(&self, seed: u64) -> PolicyConfig {
        PolicyConfig {
            kind: self.kind,
            k0: self.k0,
            k: self.k,
            k_max: self.k_max,
            window: (self.window[0], self.window[1]),
            gds: GdsWindows {
                global: (self.global_window[0], self.global_window[1]),
                detail: (self.detail_window[0], self.detail_window[1]),
                switch_fraction: self.switch_fraction,
            },
            greedy_start: self.greedy_start,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr_recon: f64,
    pub lr_agent: f64,
    pub roi_mode: bool,
    pub recon_warmup_epochs: usize,
    pub scorer_warmup_epochs: usize,
    pub channels: Vec<usize>,
    pub kernel: usize,
    /// Noise applied to training scans.
    pub noise: NoiseLevel,
    /// Policy driving the training episodes.
    pub policy: PolicyEntry,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let mut policy = PolicyEntry::new(PolicyKind::Sas);
        policy.window = [2.0, 30.0];
        Self {
            epochs: t.epochs,
            lr_recon: t.lr_recon,
            lr_agent: t.lr_agent,
            roi_mode: t.roi_mode,
            recon_warmup_epochs: t.recon_warmup_epochs,
            scorer_warmup_epochs: t.scorer_warmup_epochs,
            channels: t.channels,
            kernel: t.kernel,
            noise: NoiseLevel::None,
            policy,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr_recon: self.lr_recon,
            lr_agent: self.lr_agent,
            roi_mode: self.roi_mode,
            recon_warmup_epochs: self.recon_warmup_epochs,
            scorer_warmup_epochs: self.scorer_warmup_epochs,
            channels: self.channels.clone(),
            kernel: self.kernel,
            photons: self.noise.photons(),
            seed,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        let geom = self.geometry.build()?;
        self.recon.reconstructor()?;
        if self.metrics.rs_seeds == 0 {
            return Err(Error::Config("metrics.rs_seeds must be at least 1".into()));
        }
        let mut labels = HashSet::new();
        for p in &self.policies {
            p.policy_config(0).validate(&geom)?;
            if !labels.insert(p.label()) {
                return Err(Error::Config(format!("duplicate policy label {:?}", p.label())));
            }
            if p.kind.is_active() && p.scorer == ScorerChoice::Model && self.model.is_none() {
                return Err(Error::Config(format!(
                    "policy {:?} uses the model scorer but no model checkpoint is configured",
                    p.label()
                )));
            }
        }
        let mut noise = HashSet::new();
        for n in &self.noise {
            if !noise.insert(n.to_string()) {
                return Err(Error::Config(format!("duplicate noise level {n}")));
            }
        }
        Ok(())
    }

    /// Checks the `train` section against the geometry.
    pub fn validate_training(&self) -> Result<()> {
        let geom = self.geometry.build()?;
        self.train.train_config(self.seed).validate()?;
        self.train.policy.policy_config(0).validate(&geom)?;
        Ok(())
    }

    /// Renders every configured phantom; names must be unique.
    pub fn phantoms(&self) -> Result<Vec<Phantom>> {
        let mut out = Vec::new();
        let mut names = HashSet::new();
        for src in &self.phantoms {
            for p in src.render(self.geometry.size)? {
                if !names.insert(p.name.clone()) {
                    return Err(Error::Config(format!("duplicate phantom name {:?}", p.name)));
                }
                out.push(p);
            }
        }
        Ok(out)
    }
}
