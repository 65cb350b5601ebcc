//! Orchestration for the creature assembly pipeline.
//!
//! Stage I loads or generates the source assets and classifies their
//! skeletons. Stage II plans and executes the assembly, carries region
//! weights onto each latent and composes the result. Stage III restyles the
//! composed latent through an image-editing backend and is skipped when no
//! such backend is configured.
//!
//! The same stage functions back the `chimera` command and the HTTP service
//! in [`server`].

pub mod artifacts;
pub mod config;
pub mod engine;
pub mod pipeline;
pub mod server;

use std::fmt;
use std::path::PathBuf;

use chimera_core::layout::LayoutError;
use chimera_core::region::RegionError;
use chimera_core::skeleton::SkeletonError;
use chimera_core::voxel::VoxelError;
use chimera_gateway::GatewayError;
use thiserror::Error;

pub use config::{AssetEntry, AssetSource, Backends, ComposerParams, PipelineConfig};
pub use engine::LoadedAsset;
pub use pipeline::{run_pipeline, PipelineReport};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    Voxel(#[from] VoxelError),
    #[error("{}: {err}", path.display())]
    Io { path: PathBuf, err: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    /// Load, rig and classify.
    Design,
    /// Plan, execute, map and compose.
    Compose,
    /// Restyle.
    Generate,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Design => 10,
            Stage::Compose => 20,
            Stage::Generate => 30,
        }
    }

    /// Directory name for the stage's artifacts.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Design => "stage1",
            Stage::Compose => "stage2",
            Stage::Generate => "stage3",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Design => "stage I",
            Stage::Compose => "stage II",
            Stage::Generate => "stage III",
        })
    }
}

/// An error tagged with the stage it happened in. The message already
/// includes the underlying error's.
#[derive(Debug, Error)]
#[error("{stage}: {error}")]
pub struct PipelineError {
    pub stage: Stage,
    pub error: EngineError,
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        self.stage.exit_code()
    }
}

pub(crate) trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError>;
}

impl<T, E: Into<EngineError>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError> {
        self.map_err(|e| PipelineError { stage, error: e.into() })
    }
}
