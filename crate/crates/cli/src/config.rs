//! Pipeline configuration, read from TOML.

use std::path::{Path, PathBuf};

use chimera_core::exec::Parallelism;
use chimera_core::region::{AssignMode, DEFAULT_DISTANCE_FLOOR, DEFAULT_K};
use chimera_core::skeleton::DEFAULT_PRUNE_FRACTION;
use chimera_core::voxel::{ComposeConfig, Neighborhood, DEFAULT_COARSE_RESOLUTION};
use chimera_gateway::{BackendConfig, Service, RULE_PLANNER};
use serde::{Deserialize, Serialize};

use crate::{EngineError, Result};

/// Where one source asset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum AssetSource {
    /// Built-in procedural creature.
    Fixture(String),
    /// Text prompt sent to the 3D generation backend, then rigged.
    Prompt(String),
    /// Bundle JSON on disk.
    Path(PathBuf),
}

impl AssetSource {
    /// `fixture:<name>` or a file path.
    pub fn parse(s: &str) -> Self {
        match s.strip_prefix("fixture:") {
            Some(name) => AssetSource::Fixture(name.to_string()),
            None => AssetSource::Path(PathBuf::from(s)),
        }
    }

    /// Id derived from the source when none is given.
    pub fn default_id(&self, index: usize) -> String {
        match self {
            AssetSource::Fixture(n) => n.clone(),
            AssetSource::Path(p) => p
                .file_name()
                .and_then(|f| f.to_str())
                .map(|f| f.split('.').next().unwrap_or(f).to_string())
                .filter(|f| !f.is_empty())
                .unwrap_or_else(|| format!("asset{index}")),
            AssetSource::Prompt(_) => format!("asset{index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetEntry {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(flatten)]
    pub source: AssetSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComposerParams {
    /// Neighbors used when carrying region weights onto voxels.
    pub k: usize,
    pub distance_floor: f64,
    pub prune_fraction: f64,
    pub passes: usize,
    pub coarse_resolution: u16,
    pub neighborhood: Neighborhood,
    /// `"argmax"` or a minimum weight in `(0, 1]`.
    pub assign: AssignSetting,
    pub parallel: bool,
}

impl Default for ComposerParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            distance_floor: DEFAULT_DISTANCE_FLOOR,
            prune_fraction: DEFAULT_PRUNE_FRACTION,
            passes: 2,
            coarse_resolution: DEFAULT_COARSE_RESOLUTION,
            neighborhood: Neighborhood::TwentySix,
            assign: AssignSetting::default(),
            parallel: true,
        }
    }
}

/// TOML-friendly form of [`AssignMode`]: `"argmax"` or a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AssignSetting {
    #[default]
    Argmax,
    Threshold(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AssignWire {
    Word(String),
    Number(f64),
}

impl Serialize for AssignSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AssignSetting::Argmax => AssignWire::Word("argmax".into()),
            AssignSetting::Threshold(t) => AssignWire::Number(*t),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AssignSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match AssignWire::deserialize(d)? {
            AssignWire::Word(w) if w == "argmax" => Ok(AssignSetting::Argmax),
            AssignWire::Word(w) => Err(serde::de::Error::custom(format!("expected \"argmax\" or a number, got {w:?}"))),
            AssignWire::Number(t) => Ok(AssignSetting::Threshold(t)),
        }
    }
}

impl AssignSetting {
    pub fn mode(self) -> AssignMode {
        match self {
            AssignSetting::Argmax => AssignMode::Argmax,
            AssignSetting::Threshold(t) => AssignMode::Threshold(t),
        }
    }
}

impl ComposerParams {
    pub fn parallelism(&self) -> Parallelism {
        if self.parallel {
            Parallelism::Parallel
        } else {
            Parallelism::Sequential
        }
    }

    pub fn compose_config(&self) -> ComposeConfig {
        ComposeConfig {
            coarse_resolution: self.coarse_resolution,
            passes: self.passes,
            neighborhood: self.neighborhood,
            parallelism: self.parallelism(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EngineError::Config(m));
        if self.k == 0 || self.k > 64 {
            return bad(format!("k = {} outside 1..=64", self.k));
        }
        if !(self.distance_floor > 0.0 && self.distance_floor < 1.0) {
            return bad(format!("distance_floor = {} outside (0, 1)", self.distance_floor));
        }
        if !(0.0..0.5).contains(&self.prune_fraction) {
            return bad(format!("prune_fraction = {} outside [0, 0.5)", self.prune_fraction));
        }
        if self.passes > 64 {
            return bad(format!("passes = {} above 64", self.passes));
        }
        if self.coarse_resolution == 0 || !self.coarse_resolution.is_power_of_two() {
            return bad(format!("coarse_resolution = {} is not a power of two", self.coarse_resolution));
        }
        if let AssignSetting::Threshold(t) = self.assign {
            if !(t > 0.0 && t <= 1.0) {
                return bad(format!("assign threshold {t} outside (0, 1]"));
            }
        }
        Ok(())
    }
}

/// Backends for each service. Unset entries come from the environment and
/// fall back to offline fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backends {
    pub planner: BackendConfig,
    pub gen3d: BackendConfig,
    /// Rigging for prompt-generated assets; the generation backend when unset.
    #[serde(default)]
    pub rig: Option<BackendConfig>,
    pub image_edit: BackendConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackendsFile {
    planner: Option<BackendConfig>,
    gen3d: Option<BackendConfig>,
    rig: Option<BackendConfig>,
    image_edit: Option<BackendConfig>,
}

impl Backends {
    pub fn from_env() -> Result<Self> {
        Self::resolve(BackendsFile::default())
    }

    fn resolve(f: BackendsFile) -> Result<Self> {
        let env = |s, fallback: &str| BackendConfig::from_env(s, fallback).map_err(EngineError::from);
        Ok(Self {
            planner: f.planner.map_or_else(|| env(Service::Llm, &format!("fixture:{RULE_PLANNER}")), Ok)?,
            gen3d: f.gen3d.map_or_else(|| env(Service::Gen3d, "fixture:quadruped"), Ok)?,
            rig: f.rig,
            image_edit: f.image_edit.map_or_else(|| env(Service::ImageEdit, "fixture:identity"), Ok)?,
        })
    }

    pub fn rig(&self) -> &BackendConfig {
        self.rig.as_ref().unwrap_or(&self.gen3d)
    }

    pub fn validate(&self) -> Result<()> {
        for b in [&self.planner, &self.gen3d, self.rig(), &self.image_edit] {
            b.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    /// Description of the creature to build; the planner's request.
    pub prompt: String,
    pub assets: Vec<AssetEntry>,
    pub backends: Backends,
    pub composer: ComposerParams,
    pub output: PathBuf,
    pub style: Option<String>,
    pub negative_style: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    prompt: String,
    #[serde(default)]
    assets: Vec<AssetEntry>,
    #[serde(default)]
    backends: BackendsFile,
    #[serde(default)]
    composer: ComposerParams,
    #[serde(default = "default_output")]
    output: PathBuf,
    #[serde(default)]
    style: Option<String>,
    #[serde(default)]
    negative_style: Option<String>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    /// Parses TOML text. Relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let f: ConfigFile = toml::from_str(text).map_err(|e| EngineError::Config(e.to_string()))?;
        let rebase = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        let assets = f
            .assets
            .into_iter()
            .map(|mut a| {
                if let AssetSource::Path(p) = a.source {
                    a.source = AssetSource::Path(rebase(p));
                }
                a
            })
            .collect();
        Ok(Self {
            prompt: f.prompt,
            assets,
            backends: Backends::resolve(f.backends)?,
            composer: f.composer,
            output: rebase(f.output),
            style: f.style,
            negative_style: f.negative_style,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Config with fixture backends and default parameters.
    pub fn offline(prompt: &str, assets: Vec<AssetEntry>, output: PathBuf) -> Self {
        Self {
            prompt: prompt.to_string(),
            assets,
            backends: Backends {
                planner: BackendConfig::fixture(RULE_PLANNER),
                gen3d: BackendConfig::fixture("quadruped"),
                rig: None,
                image_edit: BackendConfig::fixture("identity"),
            },
            composer: ComposerParams::default(),
            output,
            style: None,
            negative_style: None,
        }
    }

    /// Asset ids in order, checked for duplicates.
    pub fn asset_ids(&self) -> Result<Vec<String>> {
        let mut ids: Vec<String> = Vec::new();
        for (i, a) in self.assets.iter().enumerate() {
            let id = a.id.clone().unwrap_or_else(|| a.source.default_id(i));
            if id.is_empty() || id.contains('/') || id.contains('#') {
                return Err(EngineError::Config(format!("asset id {id:?} is empty or contains '/' or '#'")));
            }
            if ids.contains(&id) {
                return Err(EngineError::Config(format!("duplicate asset id {id:?}")));
            }
            ids.push(id);
        }
        Ok(ids)
    }

    pub fn validate(&self) -> Result<()> {
        if self.assets.is_empty() {
            return Err(EngineError::Config("at least one asset is required".into()));
        }
        self.asset_ids()?;
        self.composer.validate()?;
        self.backends.validate()
    }
}

pub fn entry(source: AssetSource) -> AssetEntry {
    AssetEntry { id: None, source }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_file() {
        let text = r#"
            prompt = "a quadruped with wings"
            output = "run"
            style = "steampunk"

            [[assets]]
            fixture = "quadruped"

            [[assets]]
            id = "donor"
            path = "bundles/w.json"

            [backends.planner]
            endpoint = "fixture:quadruped-wings"

            [composer]
            k = 4
            assign = 0.3
            neighborhood = "six"
        "#;
        let c = PipelineConfig::from_toml(text, Path::new("/cfg")).unwrap();
        assert_eq!(c.assets[1].source, AssetSource::Path("/cfg/bundles/w.json".into()));
        assert_eq!(c.asset_ids().unwrap(), ["quadruped", "donor"]);
        assert_eq!(c.output, PathBuf::from("/cfg/run"));
        assert_eq!(c.composer.k, 4);
        assert_eq!(c.composer.assign, AssignSetting::Threshold(0.3));
        assert_eq!(c.composer.neighborhood, Neighborhood::Six);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let base = Path::new(".");
        assert!(PipelineConfig::from_toml("[[assets]]\nfixture = \"fish\"\nbogus = 1\n", base).is_err());
        assert!(PipelineConfig::from_toml("[composer]\nassign = \"most\"\n", base).is_err());
        let c = PipelineConfig::from_toml("[composer]\nk = 0\n[[assets]]\nfixture = \"fish\"\n", base).unwrap();
        assert!(c.validate().is_err());
        let c = PipelineConfig::from_toml("prompt = \"x\"\n", base).unwrap();
        assert!(c.validate().is_err());
        let dup = "[[assets]]\nfixture = \"fish\"\n[[assets]]\nfixture = \"fish\"\n";
        assert!(PipelineConfig::from_toml(dup, base).unwrap().validate().is_err());
    }
}
