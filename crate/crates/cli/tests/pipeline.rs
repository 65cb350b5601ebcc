use std::path::Path;

use chimera::artifacts::{sha256_hex, Manifest};
use chimera::config::entry;
use chimera::engine::{ClassificationRecord, SeamReport};
use chimera::pipeline::{ProvenanceReport, VoxelSources};
use chimera::{run_pipeline, AssetSource, PipelineConfig, Stage};
use chimera_core::layout::AssemblyPlan;
use chimera_core::skeleton::{RegionLabel, Skeleton};
use chimera_core::voxel::SparseLatent;
use chimera_gateway::{fixture_bundle, AssetBundle, Gateway};

fn fixtures(names: &[&str]) -> Vec<chimera::AssetEntry> {
    names.iter().map(|n| entry(AssetSource::Fixture(n.to_string()))).collect()
}

fn read(out: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(out.join(rel)).unwrap()
}

fn text(out: &Path, rel: &str) -> String {
    String::from_utf8(read(out, rel)).unwrap()
}

#[test]
fn wings_on_the_quadruped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::offline("wings on the quadruped", fixtures(&["quadruped", "winged"]), dir.path().into());
    let report = run_pipeline(&cfg, &Gateway::offline()).unwrap();
    let out = dir.path();

    let z = SparseLatent::from_slat(&read(out, "stage2/composed.slat")).unwrap();
    SparseLatent::new(z.resolution(), z.channels(), z.positions().to_vec(), z.features().to_vec()).unwrap();
    assert!(z.features().iter().all(|x| x.is_finite()));
    assert!(z.positions().windows(2).all(|w| w[0] < w[1]));

    let seams: SeamReport = serde_json::from_str(&text(out, "stage2/seams.json")).unwrap();
    assert_eq!(seams, report.seams);
    assert!(seams.seam_voxels > 0);
    let wing_joins: Vec<_> = seams.junctions.iter().filter(|j| j.to.contains("/wing/")).collect();
    assert_eq!(wing_joins.len(), 2);
    assert!(wing_joins.iter().all(|j| j.seam_voxels > 0), "{wing_joins:?}");

    let plan = AssemblyPlan::from_json(&text(out, "stage2/plan.json")).unwrap();
    assert_eq!(plan.parts.iter().filter(|p| p.region == RegionLabel::Wing && p.asset == "winged").count(), 2);
    let prov: ProvenanceReport = serde_json::from_str(&text(out, "stage2/provenance.json")).unwrap();
    assert!(prov.max_error <= 1e-9);
    let sk = Skeleton::from_json(&text(out, "stage2/assembled.skeleton.json")).unwrap();
    assert_eq!(sk.joint_count(), prov.joints.len());
    let sources: VoxelSources = serde_json::from_str(&text(out, "stage2/composed.sources.json")).unwrap();
    assert_eq!(sources.provenance.len(), z.len());
    assert_eq!(report.skipped_style.as_deref(), Some("no style prompt"));
}

#[test]
fn every_artifact_reloads_and_matches_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        PipelineConfig::offline("a big cat with the head of a ram", fixtures(&["quadruped", "ram"]), dir.path().into());
    run_pipeline(&cfg, &Gateway::offline()).unwrap();
    let out = dir.path();
    let m = Manifest::load(out).unwrap();
    assert_eq!(m.stages["stage1"], "done");
    assert_eq!(m.stages["stage2"], "done");
    assert!(m.stages["stage3"].starts_with("skipped"));
    for (rel, e) in &m.files {
        let bytes = read(out, rel);
        assert_eq!(sha256_hex(&bytes), e.sha256, "{rel}");
        let s = || String::from_utf8(bytes.clone()).unwrap();
        if rel.ends_with(".slat") {
            assert_eq!(SparseLatent::from_slat(&bytes).unwrap().to_slat(), bytes, "{rel}");
        } else if rel.ends_with(".bundle.json") {
            let b = AssetBundle::from_json(&s()).unwrap();
            assert_eq!(serde_json::to_string_pretty(&b.to_wire()).unwrap() + "\n", s());
        } else if rel.ends_with(".classification.json") {
            let r: ClassificationRecord = serde_json::from_str(&s()).unwrap();
            assert_eq!(serde_json::to_string_pretty(&r).unwrap() + "\n", s());
        } else if rel.ends_with("plan.json") {
            assert_eq!(AssemblyPlan::from_json(&s()).unwrap().to_json_pretty() + "\n", s());
        } else if rel.ends_with(".skeleton.json") {
            assert_eq!(Skeleton::from_json(&s()).unwrap().to_json() + "\n", s());
        } else if rel.ends_with("provenance.json") {
            let r: ProvenanceReport = serde_json::from_str(&s()).unwrap();
            assert_eq!(serde_json::to_string_pretty(&r).unwrap() + "\n", s());
        } else {
            let v: serde_json::Value = serde_json::from_str(&s()).unwrap();
            assert!(v.is_object(), "{rel}");
        }
    }
    assert!(m.files.keys().any(|k| k.starts_with("stage2/ram.head.0.0")));
}

#[test]
fn fixture_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let cfg =
            PipelineConfig::offline("a quadruped with wings", fixtures(&["quadruped", "winged"]), d.path().into());
        run_pipeline(&cfg, &Gateway::offline()).unwrap();
    }
    let (ma, mb) = (Manifest::load(a.path()).unwrap(), Manifest::load(b.path()).unwrap());
    assert_eq!(ma, mb);
    assert_eq!(read(a.path(), "manifest.json"), read(b.path(), "manifest.json"));
    for rel in ma.files.keys() {
        assert_eq!(read(a.path(), rel), read(b.path(), rel), "{rel}");
    }
}

#[test]
fn single_asset_passes_through_unchanged() {
    for name in ["quadruped", "fish"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::offline("", fixtures(&[name]), dir.path().into());
        let report = run_pipeline(&cfg, &Gateway::offline()).unwrap();
        assert!(report.plan.ops.is_empty());
        assert_eq!(read(dir.path(), "stage2/composed.slat"), fixture_bundle(name).unwrap().slat.to_slat(), "{name}");
        assert_eq!(report.seams.seam_voxels, 0);
    }
}

#[test]
fn failures_carry_their_stage() {
    let dir = tempfile::tempdir().unwrap();
    let missing = vec![entry(AssetSource::Path(dir.path().join("nope.bundle.json")))];
    let err =
        run_pipeline(&PipelineConfig::offline("x", missing, dir.path().join("o")), &Gateway::offline()).unwrap_err();
    assert_eq!(err.stage, Stage::Design);
    assert_eq!(err.exit_code(), 10);

    let mut cfg = PipelineConfig::offline("x", fixtures(&["quadruped", "winged"]), dir.path().join("p"));
    cfg.backends.planner = chimera_gateway::BackendConfig::fixture("no-such-recording");
    let err = run_pipeline(&cfg, &Gateway::offline()).unwrap_err();
    assert_eq!(err.stage, Stage::Compose);
    assert_eq!(err.exit_code(), 20);
    // Stage I output stays on disk for inspection.
    let m = Manifest::load(&dir.path().join("p")).unwrap();
    assert_eq!(m.stages["stage1"], "done");
    assert!(m.files.contains_key("stage1/winged.bundle.json"));

    let mut cfg = PipelineConfig::offline("x", fixtures(&["quadruped"]), dir.path().join("q"));
    cfg.composer.k = 0;
    assert_eq!(run_pipeline(&cfg, &Gateway::offline()).unwrap_err().exit_code(), 2);
}

#[test]
fn bundle_files_work_as_sources() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("donor.bundle.json");
    std::fs::write(&path, fixture_bundle("winged").unwrap().to_json()).unwrap();
    let mut assets = fixtures(&["quadruped"]);
    assets.push(entry(AssetSource::Path(path)));
    let cfg = PipelineConfig::offline("a quadruped with wings", assets, dir.path().join("out"));
    let report = run_pipeline(&cfg, &Gateway::offline()).unwrap();
    assert_eq!(report.assets, ["quadruped", "donor"]);
    assert!(report.plan.parts.iter().any(|p| p.asset == "donor" && p.region == RegionLabel::Wing));
}

#[test]
fn restyling_runs_when_an_edit_backend_is_configured() {
    use base64::Engine;
    use chimera_gateway::transport::RecordingTransport;
    use chimera_gateway::{BackendConfig, RgbaImage};

    let edited = RgbaImage::new(3, 1, vec![9; 12]).unwrap();
    let png = base64::engine::general_purpose::STANDARD.encode(edited.to_png().unwrap());
    let t = std::sync::Arc::new(RecordingTransport::new(vec![Ok(serde_json::json!({ "image": png }))]));
    let dir = tempfile::tempdir().unwrap();
    let mut cfg =
        PipelineConfig::offline("wings on the quadruped", fixtures(&["quadruped", "winged"]), dir.path().into());
    cfg.backends.image_edit = BackendConfig::http("http://edit.test").unwrap();
    cfg.style = Some("mythological bronze".into());
    let report = run_pipeline(&cfg, &Gateway::new(t.clone())).unwrap();
    assert_eq!(report.skipped_style, None);
    let out = dir.path();
    assert_eq!(RgbaImage::from_png(&read(out, "stage3/edited.png")).unwrap(), edited);
    let styled = SparseLatent::from_slat(&read(out, "stage3/styled.slat")).unwrap();
    let composed = SparseLatent::from_slat(&read(out, "stage2/composed.slat")).unwrap();
    assert_eq!(styled.positions(), composed.positions());
    assert_ne!(styled.features(), composed.features());
    let sent = &t.requests()[0];
    assert_eq!(sent.url, "http://edit.test/edit");
    assert_eq!(sent.body["positive_prompt"], "mythological bronze");
    assert_eq!(sent.body["negative_prompt"], chimera_gateway::DEFAULT_NEGATIVE_PROMPT);
    let reference = RgbaImage::from_png(&read(out, "stage3/reference.png")).unwrap();
    assert_eq!((reference.width, reference.height), (64, 64));
    assert!(reference.pixels.chunks(4).any(|p| p[3] == 255));

    // A failing edit backend is a stage III error.
    let t = std::sync::Arc::new(RecordingTransport::new(vec![Err(
        chimera_gateway::transport::TransportError::Unreachable("down".into()),
    )]));
    cfg.output = dir.path().join("again");
    let err = run_pipeline(&cfg, &Gateway::new(t)).unwrap_err();
    assert_eq!(err.exit_code(), 30);
    assert_eq!(Manifest::load(&cfg.output).unwrap().stages["stage2"], "done");
}
