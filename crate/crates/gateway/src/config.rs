use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{GatewayError, Result};

pub const DEFAULT_GUIDANCE_SCALE: f64 = 5.0;
pub const DEFAULT_SAMPLING_STEPS: u32 = 25;
pub const DEFAULT_TIMEOUT_SECS: f64 = 60.0;

pub const LLM_ENDPOINT_VAR: &str = "MUSES_LLM_ENDPOINT";
pub const LLM_API_KEY_VAR: &str = "MUSES_LLM_API_KEY";
pub const GEN3D_ENDPOINT_VAR: &str = "MUSES_GEN3D_ENDPOINT";
pub const IMGEDIT_ENDPOINT_VAR: &str = "MUSES_IMGEDIT_ENDPOINT";

/// Where a backend lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Offline stand-in, `fixture:<name>`.
    Fixture(String),
    Http(String),
}

impl Endpoint {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(name) = s.strip_prefix("fixture:") {
            if name.is_empty() {
                return Err(GatewayError::InvalidConfig("fixture endpoint without a name".into()));
            }
            return Ok(Endpoint::Fixture(name.to_string()));
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(Endpoint::Http(s.trim_end_matches('/').to_string()));
        }
        Err(GatewayError::InvalidConfig(format!("endpoint {s:?} is neither fixture:<name> nor an http(s) URL")))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Fixture(n) => write!(f, "fixture:{n}"),
            Endpoint::Http(u) => f.write_str(u),
        }
    }
}

impl Serialize for Endpoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Endpoint::parse(&String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Settings for one backend. The API key is referenced by environment
/// variable name and read only when a request is sent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub endpoint: Endpoint,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_guidance")]
    pub guidance_scale: f64,
    #[serde(default = "default_steps")]
    pub sampling_steps: u32,
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_SECS
}

fn default_guidance() -> f64 {
    DEFAULT_GUIDANCE_SCALE
}

fn default_steps() -> u32 {
    DEFAULT_SAMPLING_STEPS
}

/// The remote services the pipeline talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Service {
    /// Planner language model.
    Llm,
    /// Text-to-3D generation, rigging and latent regeneration.
    Gen3d,
    ImageEdit,
}

impl BackendConfig {
    pub fn fixture(name: &str) -> Self {
        Self {
            endpoint: Endpoint::Fixture(name.to_string()),
            api_key_env: None,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
            guidance_scale: DEFAULT_GUIDANCE_SCALE,
            sampling_steps: DEFAULT_SAMPLING_STEPS,
        }
    }

    pub fn http(url: &str) -> Result<Self> {
        let endpoint = Endpoint::parse(url)?;
        Ok(Self { endpoint, ..Self::fixture("unused") })
    }

    /// Reads the service's endpoint variable, falling back to `fallback`
    /// when it is unset or empty.
    pub fn from_env(service: Service, fallback: &str) -> Result<Self> {
        let (var, key) = match service {
            Service::Llm => (LLM_ENDPOINT_VAR, Some(LLM_API_KEY_VAR)),
            Service::Gen3d => (GEN3D_ENDPOINT_VAR, None),
            Service::ImageEdit => (IMGEDIT_ENDPOINT_VAR, None),
        };
        let raw = std::env::var(var).ok().filter(|v| !v.trim().is_empty()).unwrap_or_else(|| fallback.to_string());
        let mut cfg = Self { endpoint: Endpoint::parse(&raw)?, ..Self::fixture("unused") };
        cfg.api_key_env = key.map(str::to_string);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(GatewayError::InvalidConfig("timeout must be positive".into()));
        }
        if !(self.guidance_scale > 0.0 && self.guidance_scale.is_finite()) {
            return Err(GatewayError::InvalidConfig("guidance scale must be positive".into()));
        }
        if self.sampling_steps < 1 {
            return Err(GatewayError::InvalidConfig("sampling steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn is_fixture(&self) -> bool {
        matches!(self.endpoint, Endpoint::Fixture(_))
    }

    /// Resolves the key from the environment. The value is never stored.
    pub(crate) fn api_key(&self) -> Option<String> {
        self.api_key_env.as_deref().and_then(|v| std::env::var(v).ok()).filter(|k| !k.is_empty())
    }
}
