//! End-to-end run writing every intermediate artifact.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json
//! stage1/<asset>.bundle.json          mesh, rig, skinning and latent
//! stage1/<asset>.classification.json  cleaned skeleton and partition
//! stage2/plan.json
//! stage2/assembled.skeleton.json
//! stage2/provenance.json
//! stage2/<input>.slat                 each compose input before placement
//! stage2/composed.slat
//! stage2/composed.sources.json        per-voxel dominant input
//! stage2/seams.json
//! stage3/reference.png, stage3/edited.png, stage3/styled.slat
//! ```

use std::path::PathBuf;

use chimera_core::layout::{execute_plan, AssemblyPlan, JointProvenance, PartTransform};
use chimera_core::voxel::{compose, ComposedLatent};
use chimera_gateway::Gateway;
use serde::{Deserialize, Serialize};

use crate::artifacts::{ArtifactWriter, Manifest};
use crate::engine::{self, seam_report, ClassificationRecord, LoadedAsset, SeamReport};
use crate::{AtStage, PipelineConfig, PipelineError, Stage};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub out: PathBuf,
    pub assets: Vec<String>,
    pub plan: AssemblyPlan,
    pub seams: SeamReport,
    /// Why the restyling stage did not run, if it did not.
    pub skipped_style: Option<String>,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceReport {
    pub joints: Vec<JointProvenance>,
    pub transforms: Vec<PartTransform>,
    /// Largest gap between a merged joint and its mapped source joint.
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelSources {
    pub sources: Vec<String>,
    pub provenance: Vec<usize>,
}

impl VoxelSources {
    pub fn of(c: &ComposedLatent) -> Self {
        Self { sources: c.sources.clone(), provenance: c.provenance.clone() }
    }
}

/// File-name form of a compose input label such as `winged/wing/0#1`.
pub fn input_file_name(label: &str) -> String {
    format!("{}.slat", label.replace(['/', '#'], "."))
}

pub fn run_pipeline(cfg: &PipelineConfig, gateway: &Gateway) -> Result<PipelineReport, PipelineError> {
    cfg.validate().at(Stage::Config)?;
    let ids = cfg.asset_ids().at(Stage::Config)?;
    let mut w = ArtifactWriter::create(&cfg.output).at(Stage::Config)?;

    let mut assets: Vec<LoadedAsset> = Vec::with_capacity(ids.len());
    for (entry, id) in cfg.assets.iter().zip(&ids) {
        log::info!("stage I: {id}");
        let bundle = engine::load_bundle(&entry.source, gateway, &cfg.backends).at(Stage::Design)?;
        w.write_json(Stage::Design, &format!("{id}.bundle.json"), &bundle.to_wire()).at(Stage::Design)?;
        let a = engine::classify(id, bundle, cfg.composer.prune_fraction).at(Stage::Design)?;
        let record = ClassificationRecord::of(&a.classified);
        w.write_json(Stage::Design, &format!("{id}.classification.json"), &record).at(Stage::Design)?;
        assets.push(a);
    }
    w.mark(Stage::Design, "done").at(Stage::Design)?;

    log::info!("stage II: planning {:?}", cfg.prompt);
    let plan = engine::plan(&assets, &cfg.prompt, gateway, &cfg.backends).at(Stage::Compose)?;
    w.write(Stage::Compose, "plan.json", (plan.to_json_pretty() + "\n").as_bytes()).at(Stage::Compose)?;
    let classified = engine::classified(&assets);
    let assembled = execute_plan(&plan, &classified).at(Stage::Compose)?;
    w.write(Stage::Compose, "assembled.skeleton.json", (assembled.skeleton.to_json() + "\n").as_bytes())
        .at(Stage::Compose)?;
    let provenance = ProvenanceReport {
        max_error: assembled.provenance_error(&classified).at(Stage::Compose)?,
        joints: assembled.provenance.clone(),
        transforms: assembled.transforms.clone(),
    };
    w.write_json(Stage::Compose, "provenance.json", &provenance).at(Stage::Compose)?;
    let inputs = engine::compose_inputs(&assets, &assembled, &cfg.composer).at(Stage::Compose)?;
    for i in &inputs {
        w.write(Stage::Compose, &input_file_name(&i.label), &i.latent.to_slat()).at(Stage::Compose)?;
    }
    let composed = compose(&inputs, &cfg.composer.compose_config()).at(Stage::Compose)?;
    w.write(Stage::Compose, "composed.slat", &composed.latent.to_slat()).at(Stage::Compose)?;
    w.write_json(Stage::Compose, "composed.sources.json", &VoxelSources::of(&composed)).at(Stage::Compose)?;
    let seams = seam_report(&composed, &assembled);
    w.write_json(Stage::Compose, "seams.json", &seams).at(Stage::Compose)?;
    w.mark(Stage::Compose, "done").at(Stage::Compose)?;

    let skipped_style = match &cfg.style {
        None => Some("no style prompt".to_string()),
        Some(_) if cfg.backends.image_edit.is_fixture() => Some("no image-editing backend configured".to_string()),
        Some(style) => {
            log::info!("stage III: restyling");
            let r = engine::restyle(&composed.latent, style, cfg.negative_style.as_deref(), gateway, &cfg.backends)
                .at(Stage::Generate)?;
            w.write(Stage::Generate, "reference.png", &r.reference.to_png().at(Stage::Generate)?)
                .at(Stage::Generate)?;
            w.write(Stage::Generate, "edited.png", &r.edited.to_png().at(Stage::Generate)?).at(Stage::Generate)?;
            w.write(Stage::Generate, "styled.slat", &r.latent.to_slat()).at(Stage::Generate)?;
            None
        }
    };
    let status = skipped_style.as_ref().map_or_else(|| "done".to_string(), |why| format!("skipped: {why}"));
    w.mark(Stage::Generate, status).at(Stage::Generate)?;

    Ok(PipelineReport {
        out: w.out().to_path_buf(),
        assets: ids,
        plan,
        seams,
        skipped_style,
        manifest: w.manifest().clone(),
    })
}
