//! Resolved run configurations. Each subcommand merges defaults, an optional
//! TOML file and its flags (in that order of increasing precedence), and
//! writes the result next to its outputs as `config.resolved.toml`. Feeding
//! that file back through `--config` reproduces the run.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use mom_core::classical::BaselinePoints;
use mom_core::evalkit::DistanceMode;
use mom_core::mom_net::{Architecture, DecoderMode, TrainConfig};
use mom_core::scene::SceneSpec;

pub const SNAPSHOT_FILE: &str = "config.resolved.toml";
pub const OUTPUT_ENV: &str = "MOM_OUTPUT_DIR";

pub fn default_output() -> PathBuf {
    std::env::var_os(OUTPUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_snapshot<T: Serialize>(dir: &Path, config: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    let text = toml::to_string(config).context("serializing resolved config")?;
    fs::write(dir.join(SNAPSHOT_FILE), text)?;
    Ok(())
}

/// Parses a lowercase enum name through its serde representation.
pub fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    use serde::de::value::{Error, StrDeserializer};
    T::deserialize(StrDeserializer::<Error>::new(s)).map_err(|e| e.to_string())
}

/// Which records of a dataset a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Test,
    Train,
    All,
}

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

fn check_fraction(f: f64) -> Result<()> {
    if !(f > 0.0 && f < 1.0) {
        bail!("test fraction must lie in (0, 1), got {f}");
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub output: Option<PathBuf>,
    /// Maximum rigid per-camera pixel offset applied after rendering.
    pub camera_offset: f64,
    /// Extra per-keypoint Gaussian noise applied after rendering.
    pub added_noise: f64,
    pub scene: SceneSpec,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            output: None,
            camera_offset: 0.0,
            added_noise: 0.0,
            scene: SceneSpec::walk_2cam(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRun {
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub test_fraction: f64,
    /// Estimator-batch draws averaged per predicted frame.
    pub predict_draws: usize,
    pub train: TrainConfig,
}

impl Default for TrainRun {
    fn default() -> Self {
        Self {
            data: None,
            output: None,
            test_fraction: DEFAULT_TEST_FRACTION,
            predict_draws: 1,
            train: TrainConfig::default(),
        }
    }
}

impl TrainRun {
    pub fn validate(&self) -> Result<()> {
        check_fraction(self.test_fraction)?;
        if self.predict_draws == 0 {
            bail!("predict_draws must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineRun {
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub points: BaselinePoints,
    /// Calibration markers used per camera; all when absent.
    pub markers: Option<usize>,
    pub split: Split,
    pub test_fraction: f64,
}

impl Default for BaselineRun {
    fn default() -> Self {
        Self {
            data: None,
            output: None,
            points: BaselinePoints::Keypoints,
            markers: None,
            split: Split::Test,
            test_fraction: DEFAULT_TEST_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledPath {
    pub label: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalRun {
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Distance mode; follows the manifest's planar flag when absent.
    pub mode: Option<DistanceMode>,
    pub predictions: Vec<LabeledPath>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    #[default]
    CameraOffset,
    KeypointNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepRun {
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub kind: SweepKind,
    /// Perturbation levels in pixels.
    pub grid: Vec<f64>,
    pub seed: u64,
    pub split: Split,
    pub test_fraction: f64,
    pub predict_draws: usize,
    pub mode: Option<DistanceMode>,
    /// Also evaluate the calibrated baseline at every level.
    pub baseline: bool,
    pub baseline_points: BaselinePoints,
}

impl Default for SweepRun {
    fn default() -> Self {
        Self {
            data: None,
            checkpoint: None,
            output: None,
            kind: SweepKind::CameraOffset,
            grid: (0..20).map(f64::from).collect(),
            seed: 7,
            split: Split::Test,
            test_fraction: DEFAULT_TEST_FRACTION,
            predict_draws: 1,
            mode: None,
            baseline: false,
            baseline_points: BaselinePoints::Keypoints,
        }
    }
}

impl SweepRun {
    pub fn validate(&self) -> Result<()> {
        check_fraction(self.test_fraction)?;
        if self.grid.is_empty() {
            bail!("sweep grid is empty");
        }
        if let Some(l) = self.grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            bail!("sweep levels must be finite and non-negative, got {l}");
        }
        if self.predict_draws == 0 {
            bail!("predict_draws must be at least 1");
        }
        Ok(())
    }
}

/// `a..b` (inclusive, unit step) or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: i64 = a.trim().parse().map_err(|_| format!("bad range start in {s:?}"))?;
        let b: i64 = b.trim().parse().map_err(|_| format!("bad range end in {s:?}"))?;
        if b < a {
            return Err(format!("empty range {s:?}"));
        }
        return Ok((a..=b).map(|v| v as f64).collect());
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad grid value {v:?}")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckRun {
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub step: f64,
    pub lambda: f64,
    pub decoder_mode: DecoderMode,
    /// Frames (one training pair each) in the checked batch.
    pub frames: usize,
    pub tolerance: f64,
    pub architecture: Architecture,
}

impl Default for GradcheckRun {
    fn default() -> Self {
        Self {
            output: None,
            seed: 0,
            step: 1e-5,
            lambda: 1.0,
            decoder_mode: DecoderMode::Linear,
            frames: 8,
            tolerance: 1e-4,
            architecture: Architecture {
                local_hidden: vec![8, 8],
                global_hidden: vec![8],
            },
        }
    }
}
