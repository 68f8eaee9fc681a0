//! Project manifest, staged execution and the annotation session.
//!
//! Every stage reads plain files and writes plain files under the project's
//! output directory, so any artifact can be inspected or replaced by hand.
//! A stage is skipped when the sha256 of its inputs matches the value
//! recorded in `stage_state.json` and all of its outputs exist.

mod session;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detection::{apply_patch, load_stack_manifest, DetectionConfig, DetectionSet, FramePatch, StackManifest};
use crate::fsutil::write_atomic;
use crate::phantom::{generate_phantom, write_phantom, PhantomConfig};
use crate::registration::{place_frames, register_cloud, FramedPath, Landmark, PullbackDirection, WirePath};
use crate::skeleton::{build_skeleton, SkeletonConfig, StentSkeleton};
use crate::surface::{build_surface, read_stl, write_stl, SurfaceConfig};
use crate::topology::{
    classify_points, flatten, lift_to_3d, wrap_ring_groups, AnnotationSet, ClassifiedCloud, FlattenedPoint, StrutCloud,
};
use crate::validation::{accuracy, accuracy_table, mesh_volume, voxel_overlap, AccuracyReport, DEFAULT_VOXEL};

pub use session::{AnnotationSession, CommitReport, FlatView, FlatViewPoint, FrameState, PatchRequest, SessionError};

/// Failure of a stage, carrying the process exit code class.
#[derive(Debug, Error)]
pub enum PipelineError {
    /// Acceptance thresholds missed; artifacts were still written.
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("stage `{stage}` needs `{missing}`; run `{run_first}` first")]
    Dependency {
        stage: Stage,
        run_first: Stage,
        missing: PathBuf,
    },
    #[error("input error: {0}")]
    Input(String),
}

impl PipelineError {
    /// 2 validation failure, 3 dependency error, 4 input error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 2,
            PipelineError::Dependency { .. } => 3,
            PipelineError::Input(_) => 4,
        }
    }
}

fn input<E: fmt::Display>(context: impl fmt::Display) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Input(format!("{context}: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Phantom,
    Detect,
    Flatten,
    Register,
    Skeleton,
    Mesh,
    Validate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Phantom,
        Stage::Detect,
        Stage::Flatten,
        Stage::Register,
        Stage::Skeleton,
        Stage::Mesh,
        Stage::Validate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Phantom => "phantom",
            Stage::Detect => "detect",
            Stage::Flatten => "flatten",
            Stage::Register => "register",
            Stage::Skeleton => "skeleton",
            Stage::Mesh => "mesh",
            Stage::Validate => "validate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// VA/PA band a validation run must meet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceBand {
    pub va_min: f64,
    pub va_max: f64,
    pub pa_min: f64,
}

impl AcceptanceBand {
    /// Bands of the phantom round trip at the two reference spacings.
    pub fn for_spacing(spacing: f64) -> Option<Self> {
        if (spacing - 0.1).abs() < 1e-9 {
            Some(Self {
                va_min: 97.0,
                va_max: 103.0,
                pa_min: 70.0,
            })
        } else if (spacing - 0.2).abs() < 1e-9 {
            Some(Self {
                va_min: 92.0,
                va_max: 103.0,
                pa_min: 50.0,
            })
        } else {
            None
        }
    }

    pub fn check(&self, r: &AccuracyReport) -> Result<(), String> {
        let mut misses = Vec::new();
        if !(r.va >= self.va_min && r.va <= self.va_max) {
            misses.push(format!("VA {:.2}% outside [{}, {}]", r.va, self.va_min, self.va_max));
        }
        if !(r.pa >= self.pa_min) {
            misses.push(format!("PA {:.2}% below {}", r.pa, self.pa_min));
        }
        if misses.is_empty() {
            Ok(())
        } else {
            Err(misses.join("; "))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    /// Reference solid (binary STL).
    pub phantom_mesh: PathBuf,
    #[serde(default = "default_voxel")]
    pub voxel: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<AcceptanceBand>,
}

fn default_voxel() -> f64 {
    DEFAULT_VOXEL
}

fn default_frame_step() -> f64 {
    0.005
}

fn default_search_radius() -> f64 {
    0.05
}

fn default_patches() -> PathBuf {
    PathBuf::from("patches.json")
}

fn default_landmark() -> Landmark {
    Landmark {
        frame_index: 0,
        arclength: 0.0,
    }
}

/// Surface settings used for reconstructions: dense ring sampling so the
/// swept solid follows the fitted splines closely.
pub fn reconstruction_surface() -> SurfaceConfig {
    SurfaceConfig {
        ring_sections: 1000,
        beam_sections: 100,
        ..Default::default()
    }
}

/// One reconstruction project. Relative paths resolve against the
/// directory holding the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectManifest {
    /// Stack manifest (frame PNGs, resolution, spacing, wire tips).
    pub stack: PathBuf,
    /// Overrides the stack manifest's mm per pixel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution_mm_per_px: Option<f64>,
    /// Overrides the stack manifest's inter-frame spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_mm: Option<f64>,
    /// Catheter wire path: JSON `[[x, y, z], ...]` or CSV lines.
    pub wire: PathBuf,
    #[serde(default = "default_landmark")]
    pub landmark: Landmark,
    #[serde(default)]
    pub pullback: PullbackDirection,
    /// Image roll about the wire tangent, degrees.
    #[serde(default)]
    pub roll_deg: f64,
    /// Wire resampling step before framing, mm.
    #[serde(default = "default_frame_step")]
    pub frame_step: f64,
    #[serde(default)]
    pub detection: DetectionConfig,
    /// Ring/beam polylines in flattened coordinates.
    pub annotations: PathBuf,
    /// Per-frame operator patches written by the annotation service.
    #[serde(default = "default_patches")]
    pub patches: PathBuf,
    /// Classification distance to an annotation line, mm.
    #[serde(default = "default_search_radius")]
    pub search_radius: f64,
    #[serde(default)]
    pub skeleton: SkeletonConfig,
    #[serde(default = "reconstruction_surface")]
    pub surface: SurfaceConfig,
    /// Present on phantom projects: the `phantom` stage generates the stack,
    /// wire, truth annotations and reference solid under `output/phantom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom: Option<PhantomConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationConfig>,
    pub output: PathBuf,
}

impl ProjectManifest {
    /// Phantom project writing everything under `output`, with the
    /// acceptance band of `cfg.slice.spacing` when one is defined.
    pub fn phantom(cfg: PhantomConfig, output: impl Into<PathBuf>) -> Self {
        let output = output.into();
        let ph = output.join("phantom");
        let thresholds = AcceptanceBand::for_spacing(cfg.slice.spacing);
        Self {
            stack: ph.join("stack").join("manifest.json"),
            resolution_mm_per_px: None,
            spacing_mm: None,
            wire: ph.join("centerline.json"),
            landmark: default_landmark(),
            pullback: PullbackDirection::DistalToProximal,
            roll_deg: 0.0,
            frame_step: cfg.slice.frame_step,
            detection: DetectionConfig::default(),
            annotations: ph.join("annotations.json"),
            patches: output.join("patches.json"),
            search_radius: default_search_radius(),
            skeleton: SkeletonConfig {
                allow_undersized_beams: true,
                ..Default::default()
            },
            surface: reconstruction_surface(),
            phantom: Some(cfg),
            validation: Some(ValidationConfig {
                phantom_mesh: ph.join("phantom.stl"),
                voxel: DEFAULT_VOXEL,
                thresholds,
            }),
            output,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(input("project manifest"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Apply `key=value` overrides. Keys are dotted paths into the manifest
    /// JSON; values parse as JSON and fall back to a plain string.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, PipelineError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = serde_json::to_value(self).expect("manifest serializes");
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| PipelineError::Input(format!("override `{o}` is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, key, value)?;
        }
        serde_json::from_value(doc).map_err(input("manifest after overrides"))
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), PipelineError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(PipelineError::Input(format!("bad override key `{key}`")));
    }
    let mut cur = doc;
    for (i, p) in parts.iter().enumerate() {
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| PipelineError::Input(format!("override `{key}`: `{p}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(p.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(p.to_string()).or_insert(Value::Null);
    }
    unreachable!("keys have at least one part")
}

/// Manifest plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Project {
    pub manifest: ProjectManifest,
    pub root: PathBuf,
}

/// Fixed artifact names under the output directory.
pub mod artifacts {
    pub const STATE: &str = "stage_state.json";
    pub const DETECTIONS: &str = "detections.json";
    pub const CLOUD: &str = "cloud.json";
    pub const FLATTENED: &str = "flattened.json";
    pub const CLASSIFIED: &str = "classified.json";
    pub const TRANSFORMS: &str = "transforms.json";
    pub const REGISTERED: &str = "registered.json";
    pub const SKELETON: &str = "skeleton.json";
    pub const MESH: &str = "stent.stl";
    pub const MESH_REPORT: &str = "mesh_report.json";
    pub const ACCURACY: &str = "accuracy.json";
    pub const ACCURACY_TABLE: &str = "accuracy.txt";
    pub const REPORTS: &str = "reports";
}

impl Project {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(input(path.display()))?;
        let manifest = ProjectManifest::from_json(&text)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { manifest, root })
    }

    pub fn new(manifest: ProjectManifest, root: impl Into<PathBuf>) -> Self {
        Self {
            manifest,
            root: root.into(),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.manifest.output)
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.output_dir().join(name)
    }

    pub fn stack_path(&self) -> PathBuf {
        self.resolve(&self.manifest.stack)
    }

    pub fn annotations_path(&self) -> PathBuf {
        self.resolve(&self.manifest.annotations)
    }

    pub fn patches_path(&self) -> PathBuf {
        self.resolve(&self.manifest.patches)
    }

    /// Stack manifest with the project's overrides applied.
    pub fn stack_manifest(&self) -> Result<StackManifest, PipelineError> {
        let path = self.stack_path();
        if !path.exists() && self.manifest.phantom.is_some() {
            return Err(PipelineError::Dependency {
                stage: Stage::Detect,
                run_first: Stage::Phantom,
                missing: path,
            });
        }
        let mut m = load_stack_manifest(&path).map_err(input("stack"))?;
        if let Some(r) = self.manifest.resolution_mm_per_px {
            m.resolution_mm_per_px = r;
        }
        if let Some(s) = self.manifest.spacing_mm {
            m.spacing_mm = s;
        }
        m.validate().map_err(|e| PipelineError::Input(format!("stack: {e}")))?;
        Ok(m)
    }

    fn stack_dir(&self) -> PathBuf {
        self.stack_path().parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

/// Operator patches keyed by frame index, with their optimistic versions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchFile {
    pub frames: BTreeMap<usize, VersionedPatch>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VersionedPatch {
    pub version: u64,
    pub patch: FramePatch,
}

impl PatchFile {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path).map_err(input(path.display()))?;
        serde_json::from_str(&text).map_err(input(path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("patches serialize")
    }
}

/// Detections with every frame's patch applied.
pub fn patched_detections(raw: &DetectionSet, patches: &PatchFile) -> Result<DetectionSet, PipelineError> {
    let mut out = raw.clone();
    for (index, vp) in &patches.frames {
        let slot = out
            .frames
            .iter_mut()
            .find(|f| f.frame_index == *index)
            .ok_or_else(|| PipelineError::Input(format!("patch for unknown frame {index}")))?;
        *slot = apply_patch(slot, &vp.patch).map_err(input("patch"))?;
    }
    Ok(out)
}

/// Stage timing and counts, written to `reports/<stage>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub cached: bool,
    pub duration_ms: f64,
    pub counts: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct StageRecord {
    input_hash: String,
    outputs: Vec<String>,
}

type StageState = BTreeMap<Stage, StageRecord>;

fn load_state(project: &Project) -> StageState {
    std::fs::read_to_string(project.artifact(artifacts::STATE))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default()
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    write_atomic(path, bytes).map_err(input(path.display()))
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s.into_bytes()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(input(path.display()))?;
    serde_json::from_str(&text).map_err(input(path.display()))
}

/// Incremental sha256 over labeled parts. Files are labeled by their path
/// relative to the project root so relocated projects hash the same.
struct InputHash {
    sha: Sha256,
    root: PathBuf,
}

impl InputHash {
    fn new(stage: Stage, root: &Path) -> Self {
        let mut sha = Sha256::new();
        sha.update(stage.name().as_bytes());
        Self {
            sha,
            root: root.to_path_buf(),
        }
    }

    fn label(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).to_string_lossy().into_owned()
    }

    fn bytes(&mut self, label: &str, b: &[u8]) {
        self.sha.update((label.len() as u64).to_le_bytes());
        self.sha.update(label.as_bytes());
        self.sha.update((b.len() as u64).to_le_bytes());
        self.sha.update(b);
    }

    fn value<T: Serialize>(&mut self, label: &str, v: &T) {
        self.bytes(label, &serde_json::to_vec(v).expect("config serializes"));
    }

    fn file(&mut self, path: &Path) -> Result<(), PipelineError> {
        let b = std::fs::read(path).map_err(input(path.display()))?;
        self.bytes(&self.label(path), &b);
        Ok(())
    }

    fn optional_file(&mut self, path: &Path) -> Result<(), PipelineError> {
        if path.exists() {
            self.file(path)
        } else {
            self.bytes(&self.label(path), b"<absent>");
            Ok(())
        }
    }

    fn finish(self) -> String {
        hex::encode(self.sha.finalize())
    }
}

/// Artifacts a stage consumes from upstream stages.
fn upstream(stage: Stage) -> &'static [(&'static str, Stage)] {
    use artifacts::*;
    match stage {
        Stage::Phantom | Stage::Detect => &[],
        Stage::Flatten => &[(DETECTIONS, Stage::Detect)],
        Stage::Register => &[(CLOUD, Stage::Flatten), (FLATTENED, Stage::Flatten)],
        Stage::Skeleton => &[(REGISTERED, Stage::Register)],
        Stage::Mesh => &[(SKELETON, Stage::Skeleton)],
        Stage::Validate => &[(MESH, Stage::Mesh)],
    }
}

fn require_upstream(project: &Project, stage: Stage) -> Result<(), PipelineError> {
    for (name, from) in upstream(stage) {
        let p = project.artifact(name);
        if !p.exists() {
            return Err(PipelineError::Dependency {
                stage,
                run_first: *from,
                missing: p,
            });
        }
    }
    Ok(())
}

fn require_input(project: &Project, stage: Stage, path: &Path, what: &str) -> Result<(), PipelineError> {
    if path.exists() {
        return Ok(());
    }
    if project.manifest.phantom.is_some() {
        return Err(PipelineError::Dependency {
            stage,
            run_first: Stage::Phantom,
            missing: path.to_path_buf(),
        });
    }
    Err(PipelineError::Input(format!("{what} {} does not exist", path.display())))
}

/// Hash of everything `stage` reads.
fn input_hash(project: &Project, stage: Stage) -> Result<String, PipelineError> {
    let m = &project.manifest;
    let mut h = InputHash::new(stage, &project.root);
    for (name, _) in upstream(stage) {
        h.file(&project.artifact(name))?;
    }
    match stage {
        Stage::Phantom => {
            let cfg = m
                .phantom
                .as_ref()
                .ok_or_else(|| PipelineError::Input("manifest has no `phantom` section".into()))?;
            h.value("phantom", cfg);
        }
        Stage::Detect => {
            let stack = project.stack_manifest()?;
            h.value("stack", &stack);
            let dir = project.stack_dir();
            for e in &stack.frames {
                h.file(&dir.join(&e.file))?;
            }
            h.value("detection", &m.detection);
        }
        Stage::Flatten => h.optional_file(&project.patches_path())?,
        Stage::Register => {
            let ann = project.annotations_path();
            require_input(project, stage, &ann, "annotation file")?;
            h.file(&ann)?;
            let wire = project.resolve(&m.wire);
            require_input(project, stage, &wire, "wire path")?;
            h.file(&wire)?;
            h.value(
                "registration",
                &(m.landmark, m.pullback, m.roll_deg, m.frame_step, m.search_radius, m.spacing_mm),
            );
            h.value("stack_spacing", &project.stack_manifest()?.spacing_mm);
        }
        Stage::Skeleton => h.value("skeleton", &m.skeleton),
        Stage::Mesh => h.value("surface", &m.surface),
        Stage::Validate => {
            let v = m
                .validation
                .as_ref()
                .ok_or_else(|| PipelineError::Input("manifest has no `validation` section".into()))?;
            let ref_mesh = project.resolve(&v.phantom_mesh);
            require_input(project, stage, &ref_mesh, "reference mesh")?;
            h.file(&ref_mesh)?;
            h.value("validation", v);
        }
    }
    Ok(h.finish())
}

/// Paths a stage writes, relative to the output directory.
fn outputs(project: &Project, stage: Stage) -> Vec<PathBuf> {
    use artifacts::*;
    let names: &[&str] = match stage {
        Stage::Phantom => {
            return ["stack/manifest.json", "truth.json", "centerline.json", "annotations.json", "phantom.stl"]
                .iter()
                .map(|n| project.artifact("phantom").join(n))
                .collect()
        }
        Stage::Detect => &[DETECTIONS],
        Stage::Flatten => &[CLOUD, FLATTENED],
        Stage::Register => &[CLASSIFIED, TRANSFORMS, REGISTERED],
        Stage::Skeleton => &[SKELETON],
        Stage::Mesh => &[MESH, MESH_REPORT],
        Stage::Validate => &[ACCURACY, ACCURACY_TABLE],
    };
    names.iter().map(|n| project.artifact(n)).collect()
}

/// Run one stage, or skip it when its inputs are unchanged.
pub fn run_stage(project: &Project, stage: Stage) -> Result<StageReport, PipelineError> {
    require_upstream(project, stage)?;
    let hash = input_hash(project, stage)?;
    let outs = outputs(project, stage);
    let mut state = load_state(project);
    let t0 = Instant::now();
    let cached = state.get(&stage).is_some_and(|r| r.input_hash == hash) && outs.iter().all(|p| p.exists());
    let counts = if cached {
        let mut c = BTreeMap::new();
        if stage == Stage::Validate {
            check_accuracy(project)?;
        }
        c.insert("cached".into(), 1.0);
        c
    } else {
        let counts = execute(project, stage)?;
        state.insert(
            stage,
            StageRecord {
                input_hash: hash,
                outputs: outs
                    .iter()
                    .map(|p| p.strip_prefix(project.output_dir()).unwrap_or(p).to_string_lossy().into_owned())
                    .collect(),
            },
        );
        write(&project.artifact(artifacts::STATE), &json(&state))?;
        counts
    };
    let report = StageReport {
        stage,
        cached,
        duration_ms: t0.elapsed().as_secs_f64() * 1e3,
        counts,
    };
    let path = project.artifact(artifacts::REPORTS).join(format!("{stage}.json"));
    write(&path, &json(&report))?;
    if stage == Stage::Validate && !cached {
        check_accuracy(project)?;
    }
    Ok(report)
}

/// Stages run by `all`: `phantom` only on phantom projects, `validate` only
/// when a reference mesh is configured.
pub fn stages_for_all(m: &ProjectManifest) -> Vec<Stage> {
    Stage::ALL
        .into_iter()
        .filter(|s| match s {
            Stage::Phantom => m.phantom.is_some(),
            Stage::Validate => m.validation.is_some(),
            _ => true,
        })
        .collect()
}

pub fn run_all(project: &Project) -> Result<Vec<StageReport>, PipelineError> {
    stages_for_all(&project.manifest)
        .into_iter()
        .map(|s| run_stage(project, s))
        .collect()
}

fn check_accuracy(project: &Project) -> Result<(), PipelineError> {
    let report: AccuracyReport = read_json(&project.artifact(artifacts::ACCURACY))?;
    let band = project.manifest.validation.as_ref().and_then(|v| v.thresholds);
    match band {
        Some(b) => b.check(&report).map_err(PipelineError::Validation),
        None => Ok(()),
    }
}

fn count(c: &mut BTreeMap<String, f64>, k: &str, v: usize) {
    c.insert(k.into(), v as f64);
}

fn execute(project: &Project, stage: Stage) -> Result<BTreeMap<String, f64>, PipelineError> {
    let m = &project.manifest;
    let mut c = BTreeMap::new();
    match stage {
        Stage::Phantom => {
            let cfg = m.phantom.as_ref().expect("checked by input_hash");
            let (_, stack) = generate_phantom(cfg).map_err(input("phantom"))?;
            write_phantom(cfg, &stack, &project.artifact("phantom")).map_err(input("phantom"))?;
            count(&mut c, "frames", stack.frames.len());
            count(&mut c, "truth_struts", stack.truth.len());
            count(&mut c, "hidden_beams", crate::phantom::hidden_beams(&stack.truth).len());
            c.insert("exact_volume".into(), stack.exact_volume);
        }
        Stage::Detect => {
            let stack = project.stack_manifest()?;
            let det = DetectionSet::detect(&stack, &project.stack_dir(), &m.detection).map_err(input("detect"))?;
            write(&project.artifact(artifacts::DETECTIONS), &json(&det))?;
            count(&mut c, "frames", det.frames.len());
            count(&mut c, "unusable_frames", det.frames.iter().filter(|f| !f.usable).count());
            count(&mut c, "accepted", det.frames.iter().map(|f| f.active().count()).sum());
            count(&mut c, "candidates", det.frames.iter().map(|f| f.candidates.len()).sum());
        }
        Stage::Flatten => {
            let raw: DetectionSet = read_json(&project.artifact(artifacts::DETECTIONS))?;
            let patches = PatchFile::load(&project.patches_path())?;
            let det = patched_detections(&raw, &patches)?;
            let cloud = lift_to_3d(&det).map_err(input("flatten"))?;
            let flat = flatten(&cloud).map_err(input("flatten"))?;
            write(&project.artifact(artifacts::CLOUD), &json(&cloud))?;
            write(&project.artifact(artifacts::FLATTENED), &json(&flat))?;
            count(&mut c, "points", cloud.points.len());
            count(&mut c, "patched_frames", patches.frames.len());
        }
        Stage::Register => {
            let cloud: StrutCloud = read_json(&project.artifact(artifacts::CLOUD))?;
            let flat: Vec<FlattenedPoint> = read_json(&project.artifact(artifacts::FLATTENED))?;
            let lines: AnnotationSet = read_json(&project.annotations_path())?;
            let classified = wrap_ring_groups(
                classify_points(&cloud, &flat, &lines, m.search_radius).map_err(input("classification"))?,
            );
            let spacing = project.stack_manifest()?.spacing_mm;
            let wire = WirePath::load(&project.resolve(&m.wire)).map_err(input("wire"))?;
            let framed = FramedPath::new(&wire, m.frame_step).map_err(input("wire"))?;
            let mut frames: Vec<usize> = cloud
                .points
                .iter()
                .map(|p| p.frame_index)
                .chain(cloud.lumen_centers.iter().map(|l| l.frame_index))
                .collect();
            frames.sort_unstable();
            frames.dedup();
            let transforms = place_frames(
                &framed,
                &m.landmark,
                spacing,
                &frames,
                m.pullback,
                m.roll_deg.to_radians(),
            )
            .map_err(input("registration"))?;
            let registered = register_cloud(&classified, &transforms).map_err(input("registration"))?;
            write(&project.artifact(artifacts::CLASSIFIED), &json(&classified))?;
            write(&project.artifact(artifacts::TRANSFORMS), &json(&transforms))?;
            write(&project.artifact(artifacts::REGISTERED), &json(&registered))?;
            count(&mut c, "points", classified.points.len());
            count(&mut c, "unassigned", classified.unassigned.len());
            count(&mut c, "rings", classified.rings().count());
            count(&mut c, "beams", classified.beams().count());
        }
        Stage::Skeleton => {
            let cloud: ClassifiedCloud = read_json(&project.artifact(artifacts::REGISTERED))?;
            let sk = build_skeleton(&cloud, &m.skeleton).map_err(input("skeleton"))?;
            write(&project.artifact(artifacts::SKELETON), &json(&sk))?;
            count(&mut c, "rings", sk.rings.len());
            count(&mut c, "beams", sk.beams.len());
            count(&mut c, "junctions", sk.junctions.len());
            count(&mut c, "warnings", sk.warnings.len());
        }
        Stage::Mesh => {
            let sk: StentSkeleton = read_json(&project.artifact(artifacts::SKELETON))?;
            let (mesh, join) = build_surface(&sk, &m.surface).map_err(input("mesh"))?;
            let path = project.artifact(artifacts::MESH);
            write_stl(&mesh, &path).map_err(input(path.display()))?;
            let census = mesh.edge_census();
            let report = MeshReport {
                triangles: mesh.len(),
                vertices: mesh.vertices.len(),
                watertight: mesh.is_watertight(),
                components: mesh.components().len(),
                boundary_edges: census.boundary.len(),
                nonmanifold_edges: census.non_manifold.len(),
                join,
            };
            write(&project.artifact(artifacts::MESH_REPORT), &json(&report))?;
            count(&mut c, "triangles", report.triangles);
            count(&mut c, "joined_ends", report.join.joined);
            count(&mut c, "capped_ends", report.join.capped.len());
        }
        Stage::Validate => {
            let v = m.validation.as_ref().expect("checked by input_hash");
            let rec_path = project.artifact(artifacts::MESH);
            let ref_path = project.resolve(&v.phantom_mesh);
            let rec = read_stl(&rec_path).map_err(input(rec_path.display()))?;
            let reference = read_stl(&ref_path).map_err(input(ref_path.display()))?;
            let v_r = mesh_volume(&rec).map_err(input("reconstructed mesh"))?;
            let v_p = mesh_volume(&reference).map_err(input("reference mesh"))?;
            let ov = voxel_overlap(&rec, &reference, v.voxel).map_err(input("overlap"))?;
            let mut report = accuracy(v_r, v_p, ov.v_o).map_err(input("accuracy"))?;
            report.spacing = Some(project.stack_manifest()?.spacing_mm);
            report.voxel_size = Some(v.voxel);
            report.reconstructed_mesh = Some(artifacts::MESH.into());
            report.phantom_mesh = Some(v.phantom_mesh.to_string_lossy().into_owned());
            report.config_hash = Some(input_hash(project, Stage::Validate)?);
            write(&project.artifact(artifacts::ACCURACY), &json(&report))?;
            write(&project.artifact(artifacts::ACCURACY_TABLE), accuracy_table(&[report.clone()]).as_bytes())?;
            c.insert("VA".into(), report.va);
            c.insert("PA".into(), report.pa);
        }
    }
    Ok(c)
}

/// Summary of the reconstructed mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshReport {
    pub triangles: usize,
    pub vertices: usize,
    pub watertight: bool,
    pub components: usize,
    pub boundary_edges: usize,
    pub nonmanifold_edges: usize,
    pub join: crate::surface::JoinReport,
}
