//! Pipeline orchestration: ingest -> features -> encode -> activations ->
//! probe -> report, with persisted intermediates, per-stage manifests and
//! hash-checked resumption. A (config, seeds) pair fully determines every
//! output byte.

use crate::activations::{gpac, init_network, LayerActivations, LayerTensor, NetworkSpec};
use crate::encode::{encode_corpus, PlaneFormat};
use crate::features::{build_feature_matrix, ClassSelection};
use crate::probe::{
    self, assign_folds, assign_folds_by_position, probe_grid, FeatureMatrix, LogisticOptions,
};
use crate::sgf::{ingest_corpus, read_corpus, write_corpus, GameRecord, IngestOptions};
use crate::text::Vocabulary;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub mod report;
pub mod synth;

pub use report::{build_report, write_report_files, Report, ReportInputs};
pub use synth::{generate_synthetic_corpus, SynthManifest, SynthOptions};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Coarse classification for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Internal,
}

impl PipelineError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            PipelineError::Config(_) => ErrorKind::Usage,
            PipelineError::Stage { .. } => ErrorKind::Data,
            PipelineError::Io { .. } => ErrorKind::Internal,
        }
    }
}

fn stage_err<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldMode {
    Game,
    Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    None,
    ChannelMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub sgf_dir: PathBuf,
    pub out_dir: PathBuf,
    pub format: PlaneFormat,
    pub k: usize,
    pub lambda: f64,
    pub network_seed: u64,
    pub fold_seed: u64,
    pub classes: ClassSelection,
    pub fold_mode: FoldMode,
    pub pooling: Pooling,
    pub include_all_sizes: bool,
    /// Optional vocabulary file; the bundled default when absent.
    pub vocabulary: Option<PathBuf>,
    /// Optional network spec JSON; the desk-scale default when absent.
    pub network_spec: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn defaults(sgf_dir: PathBuf, out_dir: PathBuf) -> PipelineConfig {
        PipelineConfig {
            sgf_dir,
            out_dir,
            format: PlaneFormat::Planes7,
            k: 10,
            lambda: 1.0,
            network_seed: 0,
            fold_seed: 0,
            classes: ClassSelection::default(),
            fold_mode: FoldMode::Game,
            pooling: Pooling::None,
            include_all_sizes: false,
            vocabulary: None,
            network_spec: None,
        }
    }

    /// Parse the `key = value` config format. `#` starts a comment.
    pub fn parse(text: &str) -> Result<PipelineConfig, PipelineError> {
        let mut map: BTreeMap<&str, &str> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("line {}: expected key = value", i + 1))
            })?;
            map.insert(key.trim(), value.trim());
        }
        let required = |key: &str| {
            map.get(key)
                .copied()
                .ok_or_else(|| PipelineError::Config(format!("missing required key '{key}'")))
        };
        let mut config = PipelineConfig::defaults(
            PathBuf::from(required("sgf_dir")?),
            PathBuf::from(required("out_dir")?),
        );
        for (key, value) in &map {
            match *key {
                "sgf_dir" | "out_dir" => {}
                "format" => {
                    config.format = PlaneFormat::parse(value).ok_or_else(|| {
                        PipelineError::Config(format!("format must be planes7 or planes17, got '{value}'"))
                    })?;
                }
                "k" => {
                    config.k = value
                        .parse()
                        .map_err(|_| PipelineError::Config(format!("bad k '{value}'")))?;
                }
                "lambda" => {
                    config.lambda = value
                        .parse()
                        .map_err(|_| PipelineError::Config(format!("bad lambda '{value}'")))?;
                }
                "network_seed" => {
                    config.network_seed = value
                        .parse()
                        .map_err(|_| PipelineError::Config(format!("bad network_seed '{value}'")))?;
                }
                "fold_seed" => {
                    config.fold_seed = value
                        .parse()
                        .map_err(|_| PipelineError::Config(format!("bad fold_seed '{value}'")))?;
                }
                "classes" => {
                    config.classes = ClassSelection::parse(value).ok_or_else(|| {
                        PipelineError::Config(format!("bad classes '{value}'"))
                    })?;
                }
                "fold_mode" => {
                    config.fold_mode = match *value {
                        "game" => FoldMode::Game,
                        "position" => FoldMode::Position,
                        other => {
                            return Err(PipelineError::Config(format!(
                                "fold_mode must be game or position, got '{other}'"
                            )))
                        }
                    };
                }
                "pooling" => {
                    config.pooling = match *value {
                        "none" => Pooling::None,
                        "mean" => Pooling::ChannelMean,
                        other => {
                            return Err(PipelineError::Config(format!(
                                "pooling must be none or mean, got '{other}'"
                            )))
                        }
                    };
                }
                "include_all_sizes" => {
                    config.include_all_sizes = match *value {
                        "true" => true,
                        "false" => false,
                        other => {
                            return Err(PipelineError::Config(format!(
                                "include_all_sizes must be true or false, got '{other}'"
                            )))
                        }
                    };
                }
                "vocabulary" => config.vocabulary = Some(PathBuf::from(value)),
                "network_spec" => config.network_spec = Some(PathBuf::from(value)),
                other => {
                    return Err(PipelineError::Config(format!("unknown key '{other}'")));
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k < 2 {
            return Err(PipelineError::Config(format!(
                "k must be at least 2, got {}",
                self.k
            )));
        }
        if !(self.lambda >= 0.0) {
            return Err(PipelineError::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Canonical text form; its hash identifies the run configuration.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        let mut push = |key: &str, value: String| {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        };
        push("sgf_dir", self.sgf_dir.display().to_string());
        push("out_dir", self.out_dir.display().to_string());
        push("format", self.format.name().to_owned());
        push("k", self.k.to_string());
        push("lambda", format!("{:?}", self.lambda));
        push("network_seed", self.network_seed.to_string());
        push("fold_seed", self.fold_seed.to_string());
        push("classes", self.classes.to_spec());
        push(
            "fold_mode",
            match self.fold_mode {
                FoldMode::Game => "game".into(),
                FoldMode::Position => "position".into(),
            },
        );
        push(
            "pooling",
            match self.pooling {
                Pooling::None => "none".into(),
                Pooling::ChannelMean => "mean".into(),
            },
        );
        push("include_all_sizes", self.include_all_sizes.to_string());
        if let Some(v) = &self.vocabulary {
            push("vocabulary", v.display().to_string());
        }
        if let Some(n) = &self.network_spec {
            push("network_spec", n.display().to_string());
        }
        out
    }

    pub fn config_hash(&self) -> String {
        hex_digest(self.canonical_text().as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_digest(path: &Path) -> Result<String, PipelineError> {
    Ok(hex_digest(&std::fs::read(path).map_err(io_err(path))?))
}

// ---------------------------------------------------------------------------
// Stage manifests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub tool_version: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub complete: bool,
}

fn manifest_path(out_dir: &Path, stage: &str) -> PathBuf {
    out_dir.join(format!("{stage}.manifest.json"))
}

fn read_manifest(out_dir: &Path, stage: &str) -> Option<StageManifest> {
    let text = std::fs::read_to_string(manifest_path(out_dir, stage)).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_manifest(out_dir: &Path, manifest: &StageManifest) -> Result<(), PipelineError> {
    let path = manifest_path(out_dir, &manifest.stage);
    std::fs::write(
        &path,
        serde_json::to_string_pretty(manifest).expect("manifest serializes"),
    )
    .map_err(io_err(&path))
}

/// Runs `stage` unless a complete manifest with matching config hash,
/// inputs and outputs already exists.
fn run_stage<F>(
    out_dir: &Path,
    config_hash: &str,
    stage: &'static str,
    inputs: BTreeMap<String, String>,
    output_paths: &[PathBuf],
    body: F,
) -> Result<bool, PipelineError>
where
    F: FnOnce() -> Result<(), PipelineError>,
{
    if let Some(manifest) = read_manifest(out_dir, stage) {
        if manifest.complete
            && manifest.config_hash == config_hash
            && manifest.tool_version == TOOL_VERSION
            && manifest.inputs == inputs
        {
            let outputs_match = output_paths.iter().all(|p| {
                manifest
                    .outputs
                    .get(&p.display().to_string())
                    .map(|recorded| file_digest(p).map(|d| &d == recorded).unwrap_or(false))
                    .unwrap_or(false)
            });
            if outputs_match {
                return Ok(false);
            }
        }
    }
    // Mark the stage in progress so an interrupted run is never mistaken
    // for a finished one.
    write_manifest(
        out_dir,
        &StageManifest {
            stage: stage.to_owned(),
            tool_version: TOOL_VERSION.to_owned(),
            config_hash: config_hash.to_owned(),
            inputs: inputs.clone(),
            outputs: BTreeMap::new(),
            complete: false,
        },
    )?;
    body()?;
    let mut outputs = BTreeMap::new();
    for path in output_paths {
        outputs.insert(path.display().to_string(), file_digest(path)?);
    }
    write_manifest(
        out_dir,
        &StageManifest {
            stage: stage.to_owned(),
            tool_version: TOOL_VERSION.to_owned(),
            config_hash: config_hash.to_owned(),
            inputs,
            outputs,
            complete: true,
        },
    )
    .map(|_| true)
}

// ---------------------------------------------------------------------------
// The pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: String,
    pub ran: bool,
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: Report,
    pub stages: Vec<StageOutcome>,
}

pub struct PipelinePaths {
    pub corpus: PathBuf,
    pub corpus_summary: PathBuf,
    pub features: PathBuf,
    pub boards: PathBuf,
    pub activations: PathBuf,
    pub results: PathBuf,
    pub report_dir: PathBuf,
}

impl PipelinePaths {
    pub fn new(out_dir: &Path) -> PipelinePaths {
        PipelinePaths {
            corpus: out_dir.join("corpus.jsonl"),
            corpus_summary: out_dir.join("corpus_summary.json"),
            features: out_dir.join("features.csv"),
            boards: out_dir.join("boards.gpac"),
            activations: out_dir.join("acts.gpac"),
            results: out_dir.join("results.jsonl"),
            report_dir: out_dir.join("report"),
        }
    }
}

fn load_vocabulary(config: &PipelineConfig) -> Result<Vocabulary, PipelineError> {
    match &config.vocabulary {
        None => Ok(Vocabulary::default_paper()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            let vocab = Vocabulary::from_text(&text).map_err(stage_err("features"))?;
            vocab.validate_standard().map_err(stage_err("features"))?;
            Ok(vocab)
        }
    }
}

fn load_network_spec(config: &PipelineConfig) -> Result<NetworkSpec, PipelineError> {
    let mut spec = match &config.network_spec {
        None => NetworkSpec::default_desk(config.format.plane_count(), config.network_seed),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            serde_json::from_str(&text).map_err(|e| PipelineError::Stage {
                stage: "activations",
                message: format!("bad network spec: {e}"),
            })?
        }
    };
    spec.seed = config.network_seed;
    if spec.input_planes != config.format.plane_count() {
        return Err(PipelineError::Stage {
            stage: "activations",
            message: format!(
                "network expects {} input planes but format {} provides {}",
                spec.input_planes,
                config.format.name(),
                config.format.plane_count()
            ),
        });
    }
    Ok(spec)
}

/// Digest of the SGF directory: sorted file names and contents.
fn sgf_dir_digest(dir: &Path) -> Result<String, PipelineError> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("sgf"))
                .unwrap_or(false)
        })
        .collect();
    names.sort();
    let mut hasher = Sha256::new();
    for path in names {
        hasher.update(path.file_name().expect("file").to_string_lossy().as_bytes());
        hasher.update([0]);
        hasher.update(std::fs::read(&path).map_err(io_err(&path))?);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Encode PlaneStacks as single-layer GPAC records (layer name "input").
fn stacks_to_records(
    stacks: Vec<(u32, u32, crate::encode::PlaneStack)>,
) -> (gpac::LayerTable, Vec<LayerActivations>) {
    let batch: Vec<LayerActivations> = stacks
        .into_iter()
        .map(|(game_id, move_index, stack)| {
            let dims = vec![
                stack.plane_count() as u32,
                stack.size as u32,
                stack.size as u32,
            ];
            LayerActivations {
                game_id,
                move_index,
                layers: vec![LayerTensor {
                    name: "input".to_owned(),
                    dims,
                    values: stack.to_f32(),
                }],
            }
        })
        .collect();
    let table = batch
        .first()
        .map(|r| r.layer_table())
        .unwrap_or_else(|| vec![("input".to_owned(), vec![1, 1, 1])]);
    (table, batch)
}

/// Pool or flatten GPAC records into per-layer datasets.
pub fn datasets_from_batch(
    batch: &[LayerActivations],
    features: &FeatureMatrix,
    pooling: Pooling,
) -> Result<Vec<probe::LayerDataset>, probe::ProbeError> {
    let mut layers = probe::align_datasets(batch, features)?;
    if pooling == Pooling::ChannelMean {
        let table = batch[0].layer_table();
        for (layer, (_, dims)) in layers.iter_mut().zip(&table) {
            if dims.len() == 3 {
                let channels = dims[0] as usize;
                let cells = (dims[1] * dims[2]) as usize;
                let mut pooled = vec![0.0f32; layer.rows * channels];
                for row in 0..layer.rows {
                    for ch in 0..channels {
                        let base = row * layer.cols + ch * cells;
                        let mut acc = 0.0f64;
                        for v in &layer.data[base..base + cells] {
                            acc += f64::from(*v);
                        }
                        pooled[row * channels + ch] = (acc / cells as f64) as f32;
                    }
                }
                layer.cols = channels;
                layer.data = pooled;
            }
        }
    }
    Ok(layers)
}

/// Execute all stages, reusing any intermediate whose manifest still
/// matches. Returns the report plus which stages actually ran.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    config.validate()?;
    if !config.sgf_dir.is_dir() {
        return Err(PipelineError::Config(format!(
            "sgf_dir {} is not a directory",
            config.sgf_dir.display()
        )));
    }
    std::fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;
    let paths = PipelinePaths::new(&config.out_dir);
    let config_hash = config.config_hash();
    let vocab = load_vocabulary(config)?;
    let spec = load_network_spec(config)?;
    let mut stages = Vec::new();

    // ingest
    let sgf_digest = sgf_dir_digest(&config.sgf_dir)?;
    let ran = run_stage(
        &config.out_dir,
        &config_hash,
        "ingest",
        BTreeMap::from([("sgf_dir".to_owned(), sgf_digest)]),
        &[paths.corpus.clone(), paths.corpus_summary.clone()],
        || {
            let (records, summary) = ingest_corpus(
                &config.sgf_dir,
                &IngestOptions {
                    include_all_sizes: config.include_all_sizes,
                },
            )
            .map_err(stage_err("ingest"))?;
            if records.is_empty() {
                return Err(PipelineError::Stage {
                    stage: "ingest",
                    message: "no usable games in corpus".into(),
                });
            }
            let file = std::fs::File::create(&paths.corpus).map_err(io_err(&paths.corpus))?;
            write_corpus(&records, std::io::BufWriter::new(file))
                .map_err(io_err(&paths.corpus))?;
            std::fs::write(
                &paths.corpus_summary,
                serde_json::to_string_pretty(&summary).expect("summary serializes"),
            )
            .map_err(io_err(&paths.corpus_summary))?;
            Ok(())
        },
    )?;
    stages.push(StageOutcome {
        stage: "ingest".into(),
        ran,
    });

    let load_records = || -> Result<Vec<GameRecord>, PipelineError> {
        let file = std::fs::File::open(&paths.corpus).map_err(io_err(&paths.corpus))?;
        read_corpus(std::io::BufReader::new(file)).map_err(stage_err("features"))
    };

    // features
    let corpus_digest = file_digest(&paths.corpus)?;
    let vocab_digest = hex_digest(vocab.to_text().as_bytes());
    let ran = run_stage(
        &config.out_dir,
        &config_hash,
        "features",
        BTreeMap::from([
            ("corpus".to_owned(), corpus_digest.clone()),
            ("vocabulary".to_owned(), vocab_digest),
        ]),
        &[paths.features.clone()],
        || {
            let records = load_records()?;
            let matrix = build_feature_matrix(&records, &vocab, config.classes);
            if matrix.rows() == 0 {
                return Err(PipelineError::Stage {
                    stage: "features",
                    message: "no annotated positions in corpus".into(),
                });
            }
            matrix
                .write_csv(&paths.features)
                .map_err(stage_err("features"))
        },
    )?;
    stages.push(StageOutcome {
        stage: "features".into(),
        ran,
    });

    // encode
    let ran = run_stage(
        &config.out_dir,
        &config_hash,
        "encode",
        BTreeMap::from([("corpus".to_owned(), corpus_digest.clone())]),
        &[paths.boards.clone()],
        || {
            let records = load_records()?;
            let stacks = encode_corpus(&records, config.format).map_err(stage_err("encode"))?;
            let (table, batch) = stacks_to_records(stacks);
            gpac::write_activations(&table, &batch, &paths.boards).map_err(stage_err("encode"))
        },
    )?;
    stages.push(StageOutcome {
        stage: "encode".into(),
        ran,
    });

    // activations
    let boards_digest = file_digest(&paths.boards)?;
    let spec_digest = hex_digest(
        serde_json::to_string(&spec)
            .expect("spec serializes")
            .as_bytes(),
    );
    let ran = run_stage(
        &config.out_dir,
        &config_hash,
        "activations",
        BTreeMap::from([
            ("boards".to_owned(), boards_digest),
            ("network_spec".to_owned(), spec_digest),
        ]),
        &[paths.activations.clone()],
        || {
            let boards = gpac::read_activations(&paths.boards).map_err(stage_err("activations"))?;
            let weights = init_network(&spec).map_err(stage_err("activations"))?;
            let inputs: Vec<(u32, u32, &[f32])> = boards
                .iter()
                .map(|b| (b.game_id, b.move_index, b.layers[0].values.as_slice()))
                .collect();
            let batch = crate::activations::forward_collect_raw_batch(&weights, &inputs)
                .map_err(stage_err("activations"))?;
            gpac::write_activations(&spec.layer_table(), &batch, &paths.activations)
                .map_err(stage_err("activations"))
        },
    )?;
    stages.push(StageOutcome {
        stage: "activations".into(),
        ran,
    });

    // probe
    let features_digest = file_digest(&paths.features)?;
    let acts_digest = file_digest(&paths.activations)?;
    let ran = run_stage(
        &config.out_dir,
        &config_hash,
        "probe",
        BTreeMap::from([
            ("activations".to_owned(), acts_digest),
            ("features".to_owned(), features_digest),
        ]),
        &[paths.results.clone()],
        || {
            let batch =
                gpac::read_activations(&paths.activations).map_err(stage_err("probe"))?;
            let matrix = FeatureMatrix::read_csv(&paths.features).map_err(stage_err("probe"))?;
            let layers =
                datasets_from_batch(&batch, &matrix, config.pooling).map_err(stage_err("probe"))?;
            let groups: Vec<u32> = matrix.keys.iter().map(|&(g, _)| g).collect();
            let folds = match config.fold_mode {
                FoldMode::Game => assign_folds(&groups, config.k, config.fold_seed),
                FoldMode::Position => {
                    assign_folds_by_position(matrix.rows(), config.k, config.fold_seed)
                }
            }
            .map_err(stage_err("probe"))?;
            let opts = LogisticOptions {
                lambda: config.lambda,
                ..LogisticOptions::default()
            };
            let grid = probe_grid(&layers, &matrix, &folds, &opts).map_err(stage_err("probe"))?;
            probe::write_results_jsonl(&grid, &paths.results).map_err(stage_err("probe"))
        },
    )?;
    stages.push(StageOutcome {
        stage: "probe".into(),
        ran,
    });

    // report
    let results_digest = file_digest(&paths.results)?;
    let report_json = paths.report_dir.join("report.json");
    let ran = run_stage(
        &config.out_dir,
        &config_hash,
        "report",
        BTreeMap::from([
            ("results".to_owned(), results_digest),
            ("corpus".to_owned(), corpus_digest),
        ]),
        &[report_json.clone()],
        || {
            let records = load_records()?;
            let result_records =
                probe::read_results_jsonl(&paths.results).map_err(stage_err("report"))?;
            let report = build_report(&ReportInputs {
                runs: vec![("run".to_owned(), result_records)],
                vocabulary: vocab.clone(),
                corpus: Some(records),
                config_hash: config_hash.clone(),
                seeds: BTreeMap::from([
                    ("network_seed".to_owned(), config.network_seed),
                    ("fold_seed".to_owned(), config.fold_seed),
                ]),
            })
            .map_err(stage_err("report"))?;
            write_report_files(&report, &paths.report_dir).map_err(stage_err("report"))
        },
    )?;
    stages.push(StageOutcome {
        stage: "report".into(),
        ran,
    });

    let report_text =
        std::fs::read_to_string(&report_json).map_err(io_err(&report_json))?;
    let report: Report = serde_json::from_str(&report_text).map_err(|e| PipelineError::Stage {
        stage: "report",
        message: format!("report.json unreadable: {e}"),
    })?;
    Ok(RunOutput { report, stages })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parse_round_trip() {
        let text = "\
# comment
sgf_dir = games/
out_dir = out/
format = planes17
k = 5
lambda = 0.25
network_seed = 42
fold_seed = 9
classes = pattern,keyword
fold_mode = position
pooling = mean
include_all_sizes = true
";
        let config = PipelineConfig::parse(text).unwrap();
        assert_eq!(config.format, PlaneFormat::Planes17);
        assert_eq!(config.k, 5);
        assert_eq!(config.lambda, 0.25);
        assert_eq!(config.fold_mode, FoldMode::Position);
        assert_eq!(config.pooling, Pooling::ChannelMean);
        assert!(config.include_all_sizes);
        let reparsed = PipelineConfig::parse(&config.canonical_text()).unwrap();
        assert_eq!(config, reparsed);
        assert_eq!(config.config_hash(), reparsed.config_hash());
    }

    #[test]
    fn config_rejections() {
        assert!(PipelineConfig::parse("out_dir = x/").is_err()); // missing sgf_dir
        let bad_k = "sgf_dir = a/\nout_dir = b/\nk = 1\n";
        assert!(matches!(
            PipelineConfig::parse(bad_k).unwrap_err(),
            PipelineError::Config(_)
        ));
        let unknown = "sgf_dir = a/\nout_dir = b/\nwhatever = 3\n";
        assert!(PipelineConfig::parse(unknown).is_err());
        let bad_format = "sgf_dir = a/\nout_dir = b/\nformat = planes9\n";
        assert!(PipelineConfig::parse(bad_format).is_err());
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = PipelineConfig::defaults("a".into(), "b".into());
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.lambda = 2.0;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
