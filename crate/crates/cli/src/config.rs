//! Study configuration: every knob of the pipeline with its default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use voltplace::agd::AgdOptions;
use voltplace::cla::OutputKind;
use voltplace::placement::PlacementOptions;
use voltplace::sampling::RangeOverride;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "VOLTPLACE_OUT";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseFormat {
    /// `.m` is MATPOWER, anything else the native JSON format.
    #[default]
    Auto,
    Matpower,
    Native,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub n_initial: usize,
    pub n_selection: usize,
    pub n_validate: usize,
    pub seed_initial: u64,
    pub seed_selection: u64,
    pub seed_validate: u64,
    /// Apply volt-VAR curves attached to buses when solving power flows.
    pub voltvar: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_initial: 1000,
            n_selection: 4000,
            n_validate: 10000,
            seed_initial: 1,
            seed_selection: 2,
            seed_validate: 3,
            voltvar: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaConfig {
    pub output_kind: OutputKind,
    pub top_k: usize,
    pub rounds: usize,
}

impl Default for ClaConfig {
    fn default() -> Self {
        Self {
            output_kind: OutputKind::VSquared,
            top_k: 100,
            rounds: 5,
        }
    }
}

/// Injection box as fractions of the nominal injections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangeConfig {
    pub lo: f64,
    pub hi: f64,
    pub overrides: Vec<RangeOverride>,
}

impl Default for RangeConfig {
    fn default() -> Self {
        Self {
            lo: 0.5,
            hi: 1.5,
            overrides: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsConfig {
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub case: Option<PathBuf>,
    pub format: CaseFormat,
    /// Multiplies every nominal injection before the range is built.
    pub loads_scale: f64,
    /// Configuration names to study; empty means all.
    pub configurations: Vec<String>,
    /// Replaces the case's own range when given.
    pub range: Option<RangeConfig>,
    /// Replaces the case's own limits when given.
    pub limits: Option<LimitsConfig>,
    pub sampling: SamplingConfig,
    pub cla: ClaConfig,
    pub placement: PlacementOptions,
    pub agd: AgdOptions,
    pub output: Option<PathBuf>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            case: None,
            format: CaseFormat::Auto,
            loads_scale: 1.0,
            configurations: Vec::new(),
            range: None,
            limits: None,
            sampling: SamplingConfig::default(),
            cla: ClaConfig::default(),
            placement: PlacementOptions::default(),
            agd: AgdOptions::default(),
            output: None,
        }
    }
}

impl StudyConfig {
    /// Parses TOML (or JSON for `.json` files), rejecting unknown keys.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: StudyConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.case.is_none() {
            bail!("no case file given (use --case or `case` in the config)");
        }
        if !(self.loads_scale.is_finite() && self.loads_scale > 0.0) {
            bail!("loads_scale must be positive");
        }
        let s = &self.sampling;
        if s.n_initial == 0 || s.n_validate == 0 {
            bail!("sample counts must be at least 1");
        }
        if self.cla.top_k == 0 {
            bail!("cla.top_k must be at least 1");
        }
        if let Some(r) = &self.range {
            if r.lo > r.hi {
                bail!("range.lo exceeds range.hi");
            }
        }
        if !(self.agd.step > 0.0) {
            bail!("agd.step must be positive");
        }
        self.placement.validate().map_err(anyhow::Error::from)?;
        Ok(())
    }

    pub fn case_path(&self) -> &Path {
        self.case.as_deref().expect("validated")
    }

    pub fn format(&self) -> CaseFormat {
        match self.format {
            CaseFormat::Auto if self.case_path().extension().is_some_and(|e| e == "m") => CaseFormat::Matpower,
            CaseFormat::Auto => CaseFormat::Native,
            f => f,
        }
    }

    /// Output directory: explicit setting, then the environment, then `out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}
