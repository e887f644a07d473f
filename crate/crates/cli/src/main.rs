//! goprobe: replay annotated Go games, extract features, capture policy
//! network activations, train linear probes and report where concepts are
//! represented.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use clap::{Args, Parser, Subcommand};
use goprobe_core::activations::{gpac, init_network, NetworkSpec};
use goprobe_core::encode::{encode_corpus, PlaneFormat};
use goprobe_core::features::{build_feature_matrix, ClassSelection};
use goprobe_core::pipeline::{
    self, build_report, datasets_from_batch, generate_synthetic_corpus, run_pipeline,
    write_report_files, ErrorKind, PipelineConfig, Pooling, ReportInputs, SynthOptions,
};
use goprobe_core::probe::{
    assign_folds, assign_folds_by_position, probe_grid, FeatureMatrix, LogisticOptions,
};
use goprobe_core::sgf::{ingest_corpus, read_corpus, write_corpus, IngestOptions};
use goprobe_core::text::Vocabulary;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "goprobe",
    version,
    about = "Probing pipeline for Go policy networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a directory of SGF files into a corpus file.
    Ingest(IngestArgs),
    /// Build the binary feature matrix from a corpus.
    Features(FeaturesArgs),
    /// Encode corpus positions as input planes (GPAC).
    Encode(EncodeArgs),
    /// Run the random baseline network over encoded boards.
    Activations(ActivationsArgs),
    /// Train the probe grid and write per-(feature, layer, fold) AUCs.
    Probe(ProbeArgs),
    /// Summarize results into tables, histograms, tests and plots.
    Report(ReportArgs),
    /// Generate a synthetic SGF corpus with planted comments.
    Synth(SynthArgs),
    /// Run the whole pipeline from a config file.
    Run(RunArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, value_name = "DIR")]
    sgf_dir: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Where to write the ingest summary (default: <out>.summary.json).
    #[arg(long, value_name = "FILE")]
    summary: Option<PathBuf>,
    /// Keep games of any supported size, not just 19x19.
    #[arg(long)]
    all_sizes: bool,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Vocabulary file (bundled default when omitted).
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Comma-separated classes: pattern,keyword,control.
    #[arg(long, default_value = "pattern,keyword,control")]
    classes: String,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    #[arg(long, value_name = "FORMAT", default_value = "planes7")]
    format: String,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct ActivationsArgs {
    /// Network spec JSON (desk-scale default when omitted).
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "FILE")]
    boards: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long, value_name = "FILE")]
    acts: PathBuf,
    #[arg(long, value_name = "FILE")]
    feats: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, default_value = "game")]
    fold_mode: String,
    #[arg(long, default_value = "none")]
    pooling: String,
}

#[derive(Args)]
struct ReportArgs {
    /// One or more results files; the first is the primary run.
    #[arg(long, value_name = "FILE", required = true, num_args = 1..)]
    results: Vec<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Corpus file for keyword-frequency data (optional).
    #[arg(long, value_name = "FILE")]
    corpus: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    games: usize,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 60)]
    moves: usize,
    #[arg(long, default_value_t = 0.35)]
    comment_prob: f64,
    #[arg(long, default_value_t = 0.9)]
    hit_rate: f64,
    #[arg(long, default_value_t = 0.05)]
    false_rate: f64,
    #[arg(long, default_value_t = 19)]
    board_size: usize,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
}

#[derive(Debug)]
struct CliError {
    message: String,
    kind: ErrorKind,
}

impl CliError {
    fn usage(message: impl Into<String>) -> CliError {
        CliError {
            message: message.into(),
            kind: ErrorKind::Usage,
        }
    }

    fn data(message: impl Into<String>) -> CliError {
        CliError {
            message: message.into(),
            kind: ErrorKind::Data,
        }
    }

    fn internal(message: impl Into<String>) -> CliError {
        CliError {
            message: message.into(),
            kind: ErrorKind::Internal,
        }
    }
}

type CliResult = Result<(), CliError>;

fn data_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::data(e.to_string())
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

fn load_vocab(path: &Option<PathBuf>) -> Result<Vocabulary, CliError> {
    match path {
        None => Ok(Vocabulary::default_paper()),
        Some(p) => Vocabulary::from_text(&read_to_string(p)?).map_err(data_err),
    }
}

fn load_corpus(path: &Path) -> Result<Vec<goprobe_core::sgf::GameRecord>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    read_corpus(std::io::BufReader::new(file)).map_err(data_err)
}

fn parse_format(s: &str) -> Result<PlaneFormat, CliError> {
    PlaneFormat::parse(s)
        .ok_or_else(|| CliError::usage(format!("format must be planes7 or planes17, got '{s}'")))
}

fn cmd_ingest(args: &IngestArgs) -> CliResult {
    let (records, summary) = ingest_corpus(
        &args.sgf_dir,
        &IngestOptions {
            include_all_sizes: args.all_sizes,
        },
    )
    .map_err(data_err)?;
    let file = std::fs::File::create(&args.out)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", args.out.display())))?;
    write_corpus(&records, std::io::BufWriter::new(file))
        .map_err(|e| CliError::internal(e.to_string()))?;
    let summary_path = args.summary.clone().unwrap_or_else(|| {
        let mut os = args.out.as_os_str().to_owned();
        os.push(".summary.json");
        PathBuf::from(os)
    });
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
    .map_err(|e| CliError::internal(e.to_string()))?;
    println!("{summary}");
    Ok(())
}

fn cmd_features(args: &FeaturesArgs) -> CliResult {
    let classes = ClassSelection::parse(&args.classes)
        .ok_or_else(|| CliError::usage(format!("bad classes '{}'", args.classes)))?;
    let vocab = load_vocab(&args.vocab)?;
    let records = load_corpus(&args.corpus)?;
    let matrix = build_feature_matrix(&records, &vocab, classes);
    if matrix.rows() == 0 {
        return Err(CliError::data("no annotated positions in corpus"));
    }
    matrix.write_csv(&args.out).map_err(data_err)?;
    println!(
        "{} rows x {} features -> {}",
        matrix.rows(),
        matrix.feature_names.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_encode(args: &EncodeArgs) -> CliResult {
    let format = parse_format(&args.format)?;
    let records = load_corpus(&args.corpus)?;
    let stacks = encode_corpus(&records, format).map_err(data_err)?;
    let batch: Vec<_> = stacks
        .into_iter()
        .map(|(game_id, move_index, stack)| goprobe_core::activations::LayerActivations {
            game_id,
            move_index,
            layers: vec![goprobe_core::activations::LayerTensor {
                name: "input".to_owned(),
                dims: vec![
                    stack.plane_count() as u32,
                    stack.size as u32,
                    stack.size as u32,
                ],
                values: stack.to_f32(),
            }],
        })
        .collect();
    if batch.is_empty() {
        return Err(CliError::data("no annotated positions to encode"));
    }
    let table = batch[0].layer_table();
    gpac::write_activations(&table, &batch, &args.out).map_err(data_err)?;
    println!("{} positions -> {}", batch.len(), args.out.display());
    Ok(())
}

fn cmd_activations(args: &ActivationsArgs) -> CliResult {
    let boards = gpac::read_activations(&args.boards).map_err(data_err)?;
    if boards.is_empty() {
        return Err(CliError::data("boards file has no records"));
    }
    let dims = &boards[0].layers[0].dims;
    if dims.len() != 3 {
        return Err(CliError::data("boards file layer 0 is not plane-shaped"));
    }
    let mut spec: NetworkSpec = match &args.spec {
        None => NetworkSpec::default_desk(dims[0] as usize, args.seed),
        Some(p) => serde_json::from_str(&read_to_string(p)?)
            .map_err(|e| CliError::data(format!("bad network spec: {e}")))?,
    };
    spec.seed = args.seed;
    if spec.input_planes != dims[0] as usize || spec.board_size != dims[1] as usize {
        return Err(CliError::data(format!(
            "network expects {}x{}x{} inputs, boards provide {:?}",
            spec.input_planes, spec.board_size, spec.board_size, dims
        )));
    }
    let weights = init_network(&spec).map_err(data_err)?;
    let inputs: Vec<(u32, u32, &[f32])> = boards
        .iter()
        .map(|b| (b.game_id, b.move_index, b.layers[0].values.as_slice()))
        .collect();
    let batch = goprobe_core::activations::forward_collect_raw_batch(&weights, &inputs)
        .map_err(data_err)?;
    gpac::write_activations(&spec.layer_table(), &batch, &args.out).map_err(data_err)?;
    println!(
        "{} positions x {} layers -> {}",
        batch.len(),
        spec.layer_table().len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_probe(args: &ProbeArgs) -> CliResult {
    if args.k < 2 {
        return Err(CliError::usage(format!("k must be at least 2, got {}", args.k)));
    }
    if !(args.lambda >= 0.0) {
        return Err(CliError::usage("lambda must be non-negative"));
    }
    let pooling = match args.pooling.as_str() {
        "none" => Pooling::None,
        "mean" => Pooling::ChannelMean,
        other => return Err(CliError::usage(format!("bad pooling '{other}'"))),
    };
    let batch = gpac::read_activations(&args.acts).map_err(data_err)?;
    let matrix = FeatureMatrix::read_csv(&args.feats).map_err(data_err)?;
    let layers = datasets_from_batch(&batch, &matrix, pooling).map_err(data_err)?;
    let folds = match args.fold_mode.as_str() {
        "game" => {
            let groups: Vec<u32> = matrix.keys.iter().map(|&(g, _)| g).collect();
            assign_folds(&groups, args.k, args.seed)
        }
        "position" => assign_folds_by_position(matrix.rows(), args.k, args.seed),
        other => return Err(CliError::usage(format!("bad fold mode '{other}'"))),
    }
    .map_err(data_err)?;
    let opts = LogisticOptions {
        lambda: args.lambda,
        ..LogisticOptions::default()
    };
    let grid = probe_grid(&layers, &matrix, &folds, &opts).map_err(data_err)?;
    goprobe_core::probe::write_results_jsonl(&grid, &args.out).map_err(data_err)?;
    println!(
        "{} probes ({} features x {} layers x {} folds) -> {}",
        matrix.feature_names.len() * layers.len() * args.k,
        matrix.feature_names.len(),
        layers.len(),
        args.k,
        args.out.display()
    );
    if !grid.diagnostics.degenerate_features.is_empty() {
        println!(
            "degenerate features (single class): {}",
            grid.diagnostics.degenerate_features.join(", ")
        );
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> CliResult {
    let mut runs = Vec::new();
    for (i, path) in args.results.iter().enumerate() {
        let records = goprobe_core::probe::read_results_jsonl(path).map_err(data_err)?;
        let name = if args.results.len() == 1 {
            "run".to_owned()
        } else {
            format!("run{}", i + 1)
        };
        runs.push((name, records));
    }
    let corpus = match &args.corpus {
        None => None,
        Some(path) => Some(load_corpus(path)?),
    };
    let report = build_report(&ReportInputs {
        runs,
        vocabulary: load_vocab(&args.vocab)?,
        corpus,
        config_hash: String::new(),
        seeds: BTreeMap::new(),
    })
    .map_err(data_err)?;
    write_report_files(&report, &args.out).map_err(data_err)?;
    println!(
        "{} features, {} tests -> {}",
        report.feature_table.len(),
        report.tests.len(),
        args.out.display()
    );
    for test in &report.tests {
        if test.p_value.is_nan() {
            println!("  {}: statistic {:.4} (n={})", test.name, test.statistic, test.n_effective);
        } else {
            println!(
                "  {}: statistic {:.4}, p = {:.3e} ({}, n={})",
                test.name, test.statistic, test.p_value, test.method, test.n_effective
            );
        }
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> CliResult {
    if args.games == 0 {
        return Err(CliError::usage("need at least one game"));
    }
    let options = SynthOptions {
        games: args.games,
        moves_per_game: args.moves,
        board_size: args.board_size,
        comment_probability: args.comment_prob,
        hit_rate: args.hit_rate,
        false_rate: args.false_rate,
    };
    let manifest = generate_synthetic_corpus(args.seed, &options, &args.out)
        .map_err(|e| CliError::internal(e.to_string()))?;
    println!(
        "{} games, {} moves, {} comments -> {}",
        manifest.games,
        manifest.total_moves,
        manifest.comments,
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: &RunArgs) -> CliResult {
    let config = PipelineConfig::parse(&read_to_string(&args.config)?).map_err(|e| CliError {
        message: e.to_string(),
        kind: e.kind(),
    })?;
    let output = run_pipeline(&config).map_err(|e| CliError {
        message: e.to_string(),
        kind: e.kind(),
    })?;
    for stage in &output.stages {
        println!(
            "{}: {}",
            stage.stage,
            if stage.ran { "ran" } else { "reused" }
        );
    }
    println!(
        "report: {} features, {} tests -> {}",
        output.report.feature_table.len(),
        output.report.tests.len(),
        pipeline::PipelinePaths::new(&config.out_dir).report_dir.display()
    );
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes, not usage errors.
            use clap::error::ErrorKind as ClapKind;
            let code = match e.kind() {
                ClapKind::DisplayHelp | ClapKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match &cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Features(args) => cmd_features(args),
        Command::Encode(args) => cmd_encode(args),
        Command::Activations(args) => cmd_activations(args),
        Command::Probe(args) => cmd_probe(args),
        Command::Report(args) => cmd_report(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Run(args) => cmd_run(args),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message);
            std::process::exit(match e.kind {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Internal => 3,
            });
        }
    }
}
