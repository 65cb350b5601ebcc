//! Creature assembly engine.
//!
//! The crate is organized around the three-step flow used to build a
//! composite creature from rigged source assets:
//!
//! * [`skeleton`] cleans, orients and classifies skeletons into body, legs,
//!   wings, tail and head regions.
//! * [`layout`] represents rotate/translate/scale edits, plans an assembly
//!   and executes it into a merged skeleton.
//! * [`region`] carries skinning weights from mesh vertices to latent voxels.
//! * [`voxel`] extracts, transforms and blends sparse latents into one asset.
//!
//! [`templates`] generates procedural creatures with ground-truth labels,
//! used as fixtures and as the oracle for classification tests.

pub mod exec;
pub mod geometry;
pub mod layout;
pub mod region;
pub mod skeleton;
pub mod templates;
pub mod voxel;

pub use geometry::{Affine3, Vec3};
