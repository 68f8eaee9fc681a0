//! `stentrecon`: staged pipeline runner and annotation service.
//!
//! Exit codes: 0 ok, 2 acceptance thresholds missed, 3 a stage ran before
//! its inputs exist, 4 bad input or arguments.

pub mod api;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use stentrecon_core::phantom::PhantomConfig;
use stentrecon_core::pipeline::{
    artifacts, run_stage, stages_for_all, AnnotationSession, PipelineError, Project, ProjectManifest, SessionError,
    Stage, StageReport,
};

pub const EXIT_INPUT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "stentrecon", version, about = "Stent reconstruction from intravascular image stacks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic phantom (phantom projects only)
    Phantom(RunArgs),
    /// Detect strut candidates in every frame
    Detect(RunArgs),
    /// Apply operator patches, lift to 3D and flatten
    Flatten(RunArgs),
    /// Classify against the annotation lines and place frames on the wire
    Register(RunArgs),
    /// Fit ring and beam splines
    Skeleton(RunArgs),
    /// Sweep the stent surface and write the STL
    Mesh(RunArgs),
    /// Compare against the reference mesh
    Validate(RunArgs),
    /// Run every configured stage in order
    All(RunArgs),
    /// Serve the annotation API
    Serve(ServeArgs),
    /// Write a phantom project manifest
    Init(InitArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Override a manifest field, e.g. `--set phantom.slice.spacing=0.2`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Project directory; the manifest is written as `project.json`
    #[arg(long)]
    pub dir: PathBuf,
    /// Frame spacing of the phantom pullback, mm
    #[arg(long, default_value_t = 0.1)]
    pub spacing: f64,
}

/// Parse `args` and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            code
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Phantom(a) => run_stages(&a, &[Stage::Phantom]),
        Command::Detect(a) => run_stages(&a, &[Stage::Detect]),
        Command::Flatten(a) => run_stages(&a, &[Stage::Flatten]),
        Command::Register(a) => run_stages(&a, &[Stage::Register]),
        Command::Skeleton(a) => run_stages(&a, &[Stage::Skeleton]),
        Command::Mesh(a) => run_stages(&a, &[Stage::Mesh]),
        Command::Validate(a) => run_stages(&a, &[Stage::Validate]),
        Command::All(a) => load(&a).and_then(|p| run_project(&p, &stages_for_all(&p.manifest))),
        Command::Serve(a) => serve(&a),
        Command::Init(a) => init(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn load(a: &RunArgs) -> Result<Project, PipelineError> {
    let mut project = Project::load(&a.manifest)?;
    project.manifest = project.manifest.with_overrides(&a.overrides)?;
    Ok(project)
}

fn run_stages(a: &RunArgs, stages: &[Stage]) -> Result<(), PipelineError> {
    run_project(&load(a)?, stages)
}

fn run_project(project: &Project, stages: &[Stage]) -> Result<(), PipelineError> {
    for &stage in stages {
        let outcome = run_stage(project, stage);
        if stage == Stage::Validate {
            print_accuracy(project);
        }
        println!("{}", summary(&outcome?));
    }
    Ok(())
}

fn summary(r: &StageReport) -> String {
    if r.cached {
        return format!("{}: unchanged, skipped", r.stage);
    }
    let counts: Vec<String> = r.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{}: done in {:.0} ms ({})", r.stage, r.duration_ms, counts.join(", "))
}

fn print_accuracy(project: &Project) {
    if let Ok(table) = std::fs::read_to_string(project.artifact(artifacts::ACCURACY_TABLE)) {
        print!("{table}");
    }
}

fn serve(a: &ServeArgs) -> Result<(), PipelineError> {
    let project = load(&a.run)?;
    let session = AnnotationSession::open(project).map_err(|e| match e {
        SessionError::Pipeline(p) => p,
        other => PipelineError::Input(other.to_string()),
    })?;
    let app = api::router(session);
    let addr = format!("{}:{}", a.host, a.port);
    let rt = tokio::runtime::Runtime::new().map_err(|e| PipelineError::Input(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| PipelineError::Input(format!("bind {addr}: {e}")))?;
        eprintln!("annotation API listening on http://{addr}");
        axum::serve(listener, app)
            .await
            .map_err(|e| PipelineError::Input(e.to_string()))
    })
}

/// Manifest of a phantom project with outputs under `out/`.
pub fn phantom_manifest(spacing: f64) -> ProjectManifest {
    let mut cfg = PhantomConfig::default();
    cfg.slice.spacing = spacing;
    ProjectManifest::phantom(cfg, "out")
}

fn init(a: &InitArgs) -> Result<(), PipelineError> {
    let path = manifest_path(&a.dir);
    std::fs::create_dir_all(&a.dir).map_err(|e| PipelineError::Input(format!("{}: {e}", a.dir.display())))?;
    let text = phantom_manifest(a.spacing).to_json();
    std::fs::write(&path, text).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
    println!("{}", path.display());
    Ok(())
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("project.json")
}
