use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use chimera::artifacts::ArtifactWriter;
use chimera::config::entry;
use chimera::engine::{self, seam_report, ClassificationRecord, LoadedAsset, SeamReport};
use chimera::server::{self, AppState};
use chimera::{run_pipeline, AssetSource, Backends, PipelineConfig, PipelineError, Stage};
use chimera_core::layout::{execute_plan, AssemblyPlan};
use chimera_gateway::{BackendConfig, Endpoint, Gateway};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chimera", version, about = "Assemble composite creatures from rigged source assets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and classify each asset's skeleton; prints the partitions as JSON.
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Produce a validated assembly plan for the prompt.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Execute a plan file and compose the latent into the output directory.
    Compose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        plan: PathBuf,
    },
    /// Run every stage, writing all artifacts and a manifest.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Style prompt for the restyling stage.
        #[arg(long)]
        style: Option<String>,
    },
    /// Serve the session API.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Assets as `fixture:<name>` or bundle JSON paths; replace the config's list.
    assets: Vec<String>,
    /// Creature description passed to the planner.
    #[arg(short, long)]
    prompt: Option<String>,
    /// Planner endpoint, `fixture:<name>` or a URL.
    #[arg(long)]
    planner: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    passes: Option<usize>,
    #[arg(long)]
    prune_fraction: Option<f64>,
    /// Run single-threaded.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let cfg = self.resolve()?;
        cfg.validate().map_err(|error| PipelineError { stage: Stage::Config, error })?;
        Ok(cfg)
    }

    fn resolve(&self) -> Result<PipelineConfig, PipelineError> {
        let at_config = |e| PipelineError { stage: Stage::Config, error: e };
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path).map_err(at_config)?,
            None => {
                let mut c = PipelineConfig::offline("", Vec::new(), PathBuf::from("out"));
                c.backends = Backends::from_env().map_err(at_config)?;
                c
            }
        };
        if !self.assets.is_empty() {
            cfg.assets = self.assets.iter().map(|a| entry(AssetSource::parse(a))).collect();
        }
        if let Some(p) = &self.prompt {
            cfg.prompt = p.clone();
        }
        if let Some(p) = &self.planner {
            let endpoint = Endpoint::parse(p).map_err(|e| at_config(e.into()))?;
            cfg.backends.planner = BackendConfig { endpoint, ..cfg.backends.planner };
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        let c = &mut cfg.composer;
        c.k = self.k.unwrap_or(c.k);
        c.passes = self.passes.unwrap_or(c.passes);
        c.prune_fraction = self.prune_fraction.unwrap_or(c.prune_fraction);
        c.parallel &= !self.sequential;
        Ok(cfg)
    }
}

fn stage<T>(stage: Stage, r: chimera::Result<T>) -> Result<T, PipelineError> {
    r.map_err(|error| PipelineError { stage, error })
}

fn gateway(cfg: &PipelineConfig) -> anyhow::Result<Gateway> {
    let b = &cfg.backends;
    let remote = [&b.planner, &b.gen3d, b.rig(), &b.image_edit].iter().any(|c| !c.is_fixture());
    Ok(if remote { Gateway::http().context("cannot start the HTTP client")? } else { Gateway::offline() })
}

fn load_assets(cfg: &PipelineConfig, gw: &Gateway) -> Result<Vec<LoadedAsset>, PipelineError> {
    let ids = stage(Stage::Config, cfg.asset_ids())?;
    cfg.assets
        .iter()
        .zip(&ids)
        .map(|(a, id)| {
            let b = engine::load_bundle(&a.source, gw, &cfg.backends)?;
            engine::classify(id, b, cfg.composer.prune_fraction)
        })
        .collect::<chimera::Result<_>>()
        .map_err(|error| PipelineError { stage: Stage::Design, error })
}

fn emit(output: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match output {
        Some(p) => std::fs::write(p, format!("{text}\n")).with_context(|| format!("cannot write {}", p.display())),
        None => match writeln!(std::io::stdout(), "{text}") {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => r.context("cannot write to stdout"),
        },
    }
}

fn compose_plan(cfg: &PipelineConfig, assets: &[LoadedAsset], plan: &str) -> chimera::Result<SeamReport> {
    let plan = AssemblyPlan::from_json(plan)?;
    let assembled = execute_plan(&plan, &engine::classified(assets))?;
    let composed = engine::compose_assembly(assets, &assembled, &cfg.composer)?;
    let mut w = ArtifactWriter::create(&cfg.output)?;
    w.write(Stage::Compose, "plan.json", (plan.to_json_pretty() + "\n").as_bytes())?;
    w.write(Stage::Compose, "assembled.skeleton.json", (assembled.skeleton.to_json() + "\n").as_bytes())?;
    w.write(Stage::Compose, "composed.slat", &composed.latent.to_slat())?;
    let seams = seam_report(&composed, &assembled);
    w.write_json(Stage::Compose, "seams.json", &seams)?;
    w.mark(Stage::Compose, "done")?;
    Ok(seams)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Classify { common, output } => {
            let cfg = common.config()?;
            let assets = load_assets(&cfg, &gateway(&cfg)?)?;
            let records: Vec<ClassificationRecord> =
                assets.iter().map(|a| ClassificationRecord::of(&a.classified)).collect();
            emit(output.as_deref(), &serde_json::to_string_pretty(&records)?)
        }
        Command::Plan { common, output } => {
            let cfg = common.config()?;
            let gw = gateway(&cfg)?;
            let assets = load_assets(&cfg, &gw)?;
            let plan = stage(Stage::Compose, engine::plan(&assets, &cfg.prompt, &gw, &cfg.backends))?;
            emit(output.as_deref(), &plan.to_json_pretty())
        }
        Command::Compose { common, plan } => {
            let cfg = common.config()?;
            let assets = load_assets(&cfg, &gateway(&cfg)?)?;
            let text = std::fs::read_to_string(&plan).with_context(|| format!("cannot read {}", plan.display()))?;
            let seams = stage(Stage::Compose, compose_plan(&cfg, &assets, &text))?;
            println!(
                "{} voxels, {} from gap filling, written to {}",
                seams.voxels,
                seams.seam_voxels,
                cfg.output.display()
            );
            Ok(())
        }
        Command::Pipeline { common, style } => {
            let mut cfg = common.config()?;
            if style.is_some() {
                cfg.style = style;
            }
            let report = run_pipeline(&cfg, &gateway(&cfg)?)?;
            println!(
                "{} files written to {}; {} voxels, {} from gap filling",
                report.manifest.files.len(),
                report.out.display(),
                report.seams.voxels,
                report.seams.seam_voxels
            );
            if let Some(why) = report.skipped_style {
                println!("restyling skipped: {why}");
            }
            Ok(())
        }
        Command::Serve { common, bind } => {
            // Assets arrive per session, so only parameters and backends are checked.
            let cfg = common.resolve()?;
            stage(Stage::Config, cfg.composer.validate().and_then(|_| cfg.backends.validate()))?;
            let state = Arc::new(AppState::new(cfg.backends.clone(), cfg.composer, gateway(&cfg)?));
            let rt = tokio::runtime::Runtime::new().context("cannot start the runtime")?;
            rt.block_on(server::serve(&bind, state)).with_context(|| format!("cannot serve on {bind}"))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<PipelineError>().map_or(1, PipelineError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
