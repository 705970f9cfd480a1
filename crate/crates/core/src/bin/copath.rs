//! Command-line entry point: synthetic task generation, graph
//! construction from triplet files, training, evaluation, single-instance
//! reasoning, answer assembly, and horizon sweeps.
//!
//! Every command with a fixed seed produces byte-identical outputs across
//! runs. Flag values override config-file values, which override defaults.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use copath::assemble::assemble_answer;
use copath::config::RunConfig;
use copath::dataset::{load_instances, save_instances, TaskInstance};
use copath::error::{CopathError, Result};
use copath::eval::{
    decode_instance, evaluate, evaluate_with_comparisons, report_to_json, DecodeSpec, EvalConfig,
};
use copath::learn::{load_checkpoint, prepare_instance, save_checkpoint, train, LoadedCheckpoint};
use copath::lexicon::{load_word_vectors, save_word_vectors, WordVectors};
use copath::model::AblationMode;
use copath::policy::AgentStepRecord;
use copath::reward::Reference;
use copath::semgraph::{
    build_graph, filter_video_triplets, load_graph, load_triplets, merge_similar_entities,
    save_graph, save_merge_map, surface_form, tokenize, SemanticGraph,
};
use copath::synth::{
    gen_coordination_tasks, gen_tasks, synth_word_vectors, CoordinationConfig, SynthConfig,
};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "copath",
    version,
    about = "Collaborative two-agent path reasoning over video and dialogue graphs"
)]
struct Cli {
    /// Configuration file (JSON). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run seed. Drives model init, shuffling, episode sampling, and plain
    /// `--decode sample`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Ablation mode: full, no-comm, no-vgraph, no-ugraph.
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Walk horizon (moves per agent).
    #[arg(long, global = true)]
    horizon: Option<usize>,

    /// Decode strategy: greedy, sample[:seed], beam:width.
    #[arg(long, global = true)]
    decode: Option<String>,

    /// Output path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic task instances (and optionally word vectors).
    GenTasks(GenTasksArgs),
    /// Build a semantic graph file from a triplet file.
    BuildGraph(BuildGraphArgs),
    /// Train a model and write a checkpoint plus a JSON-lines log.
    Train(TrainArgs),
    /// Evaluate a checkpoint over task instances and write a report.
    Eval(EvalArgs),
    /// Decode one instance from two graph files and an utterance.
    Reason(ReasonArgs),
    /// Join two serialized paths and an utterance into one answer line.
    Assemble(AssembleArgs),
    /// Train and evaluate once per horizon and print a comparison table.
    SweepT(SweepArgs),
}

#[derive(Args, Debug)]
struct GenTasksArgs {
    /// Task family: planted (per-side walks) or coordination (reward
    /// depends on the pairing of both sides' walks).
    #[arg(long, default_value = "planted")]
    family: String,
    /// Number of instances.
    #[arg(long, default_value_t = 50)]
    count: usize,
    /// Entities per graph (planted family).
    #[arg(long)]
    nodes: Option<usize>,
    /// Non-wait out-edges per planted node (planted family).
    #[arg(long)]
    branching: Option<usize>,
    /// Start entities per side (coordination family).
    #[arg(long)]
    starts: Option<usize>,
    /// Also write an orthogonal word-vector table covering the tasks.
    #[arg(long)]
    vectors_out: Option<PathBuf>,
    /// Width of the generated word vectors.
    #[arg(long)]
    embed_dim: Option<usize>,
}

#[derive(Args, Debug)]
struct BuildGraphArgs {
    /// Triplet file (JSON lines).
    #[arg(long)]
    input: PathBuf,
    /// Graph kind: video (confidence-filtered then merged) or context
    /// (merged only).
    #[arg(long, default_value = "video")]
    kind: String,
    /// Cosine similarity at or above which entities merge.
    #[arg(long, default_value_t = 0.9)]
    tau: f64,
    /// Keep detector triplets with confidence strictly above this.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Word vectors used for the similarity merge.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Also write the merge report here.
    #[arg(long)]
    merge_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training task file (JSON lines).
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Validation task file (JSON lines).
    #[arg(long)]
    val_tasks: Option<PathBuf>,
    /// Without --val-tasks, hold out this many instances from the end of
    /// the task list.
    #[arg(long)]
    val_count: Option<usize>,
    /// Word-vector table.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Training log path (default: the checkpoint path + .log.jsonl).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Optimizer steps (overrides the config file).
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Model checkpoint.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Task file (JSON lines).
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Word-vector table.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Also compute each instance's exhaustive-search reward ceiling.
    #[arg(long)]
    oracle: bool,
    /// Re-evaluate under every ablation the checkpoint's wiring supports.
    #[arg(long)]
    compare_ablations: bool,
}

#[derive(Args, Debug)]
struct ReasonArgs {
    /// Model checkpoint.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Video-side graph file.
    #[arg(long)]
    video_graph: Option<PathBuf>,
    /// Dialogue-context graph file.
    #[arg(long)]
    context_graph: Option<PathBuf>,
    /// Word-vector table.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Query utterance text.
    #[arg(long)]
    utterance: String,
}

#[derive(Args, Debug)]
struct AssembleArgs {
    /// Serialized video path tokens.
    #[arg(long, default_value = "")]
    path_v: String,
    /// Serialized context path tokens.
    #[arg(long, default_value = "")]
    path_u: String,
    /// Utterance tokens.
    #[arg(long, default_value = "")]
    utterance: String,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Comma-separated horizons to train and evaluate, e.g. 1,2,3.
    #[arg(long)]
    horizons: String,
    /// Training task file (JSON lines).
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Validation task file (JSON lines).
    #[arg(long)]
    val_tasks: Option<PathBuf>,
    /// Without --val-tasks, hold out this many instances from the end of
    /// the task list.
    #[arg(long)]
    val_count: Option<usize>,
    /// Word-vector table.
    #[arg(long)]
    vectors: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        // Usage problems are input errors.
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

/// Load the config file (if any) and overlay the global flags.
fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut rc = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        rc.train.seed = seed;
    }
    if let Some(mode) = &cli.mode {
        rc.train.ablation = mode.parse()?;
    }
    if let Some(horizon) = cli.horizon {
        rc.train.horizon = horizon;
    }
    if let Some(decode) = &cli.decode {
        // Plain `sample` draws its stream from the run seed.
        rc.decode = if decode == "sample" {
            DecodeSpec::Sample { seed: rc.train.seed }
        } else {
            decode.parse()?
        };
    }
    if let Some(out) = &cli.out {
        rc.out = Some(out.clone());
    }
    Ok(rc)
}

fn run(cli: Cli) -> Result<()> {
    let rc = resolve(&cli)?;
    // Evaluation only honors an ablation override that was actually given;
    // the checkpoint's own mode wins otherwise.
    let mode_overridden = cli.mode.is_some();
    match &cli.command {
        Command::GenTasks(args) => cmd_gen_tasks(&rc, args),
        Command::BuildGraph(args) => cmd_build_graph(&rc, args),
        Command::Train(args) => cmd_train(&rc, args),
        Command::Eval(args) => cmd_eval(&rc, args, mode_overridden),
        Command::Reason(args) => cmd_reason(&rc, args, mode_overridden),
        Command::Assemble(args) => cmd_assemble(args),
        Command::SweepT(args) => cmd_sweep_t(&rc, args),
    }
}

/// Create the parent directory of an output path if needed.
fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| CopathError::io(parent, e))?;
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CopathError::io(path, e))
}

/// Print to stdout, or write to the output path when one is set.
fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_gen_tasks(rc: &RunConfig, args: &GenTasksArgs) -> Result<()> {
    if args.count == 0 {
        return Err(CopathError::InvalidInput(
            "task count must be at least 1".into(),
        ));
    }
    let seed = rc.train.seed;
    let instances = match args.family.as_str() {
        "planted" => {
            let defaults = SynthConfig::default();
            let cfg = SynthConfig {
                nodes: args.nodes.unwrap_or(defaults.nodes),
                branching: args.branching.unwrap_or(defaults.branching),
                horizon: rc.train.horizon,
            };
            gen_tasks(&cfg, seed, args.count)?
        }
        "coordination" => {
            let defaults = CoordinationConfig::default();
            let cfg = CoordinationConfig {
                starts: args.starts.unwrap_or(defaults.starts),
            };
            gen_coordination_tasks(&cfg, seed, args.count)?
        }
        other => {
            return Err(CopathError::InvalidInput(format!(
                "unknown task family '{other}' (expected planted or coordination)"
            )));
        }
    };
    let out = RunConfig::require(&rc.out, "output")?;
    ensure_parent(&out)?;
    save_instances(&instances, &out)?;
    if let Some(vectors_out) = &args.vectors_out {
        let dim = args.embed_dim.unwrap_or(rc.train.embed_dim);
        let vectors = synth_word_vectors(&instances, dim)?;
        ensure_parent(vectors_out)?;
        save_word_vectors(&vectors, vectors_out)?;
        println!(
            "wrote {} instances to {} and {} word vectors to {}",
            instances.len(),
            out.display(),
            vectors.len(),
            vectors_out.display()
        );
    } else {
        println!("wrote {} instances to {}", instances.len(), out.display());
    }
    Ok(())
}

fn cmd_build_graph(rc: &RunConfig, args: &BuildGraphArgs) -> Result<()> {
    let records = load_triplets(&args.input)?;
    let filtered = match args.kind.as_str() {
        "video" => filter_video_triplets(&records, args.threshold)?,
        "context" => records,
        other => {
            return Err(CopathError::InvalidInput(format!(
                "unknown graph kind '{other}' (expected video or context)"
            )));
        }
    };
    let vectors = match args.vectors.as_ref().or(rc.vectors.as_ref()) {
        Some(path) => load_word_vectors(path)?,
        None => WordVectors::from_entries(Vec::new())?,
    };
    let (merged, merge_map) = merge_similar_entities(&filtered, &vectors, args.tau)?;
    let graph = build_graph(&merged)?;
    let out = RunConfig::require(&rc.out, "output")?;
    ensure_parent(&out)?;
    save_graph(&graph, &out)?;
    if let Some(merge_out) = &args.merge_out {
        ensure_parent(merge_out)?;
        save_merge_map(&merge_map, merge_out)?;
    }
    println!(
        "built {} graph: {} entities, {} relations, {} edges -> {}",
        args.kind,
        graph.entity_count(),
        graph.relation_count(),
        graph.edge_count(),
        out.display()
    );
    Ok(())
}

/// Split a task list into train/validation per the resolved settings.
fn split_tasks(
    rc: &RunConfig,
    tasks: Option<&PathBuf>,
    val_tasks: Option<&PathBuf>,
    val_count: Option<usize>,
) -> Result<(Vec<TaskInstance>, Vec<TaskInstance>)> {
    let tasks_path = tasks
        .cloned()
        .map_or_else(|| RunConfig::require(&rc.tasks, "tasks"), Ok)?;
    let mut train_set = load_instances(&tasks_path)?;
    let val_path = val_tasks.cloned().or_else(|| rc.val_tasks.clone());
    let val_set = match val_path {
        Some(path) => load_instances(&path)?,
        None => {
            let k = val_count.unwrap_or(rc.val_count);
            if k >= train_set.len() {
                return Err(CopathError::InvalidInput(format!(
                    "cannot hold out {k} validation instances from {} tasks",
                    train_set.len()
                )));
            }
            train_set.split_off(train_set.len() - k)
        }
    };
    Ok((train_set, val_set))
}

fn load_vectors_from(rc: &RunConfig, flag: Option<&PathBuf>) -> Result<WordVectors> {
    let path = flag
        .cloned()
        .map_or_else(|| RunConfig::require(&rc.vectors, "vectors"), Ok)?;
    load_word_vectors(&path)
}

fn cmd_train(rc: &RunConfig, args: &TrainArgs) -> Result<()> {
    let mut config = rc.train.clone();
    if let Some(steps) = args.steps {
        config.total_steps = steps;
    }
    let (train_set, val_set) = split_tasks(
        rc,
        args.tasks.as_ref(),
        args.val_tasks.as_ref(),
        args.val_count,
    )?;
    let vectors = load_vectors_from(rc, args.vectors.as_ref())?;
    let out = RunConfig::require(&rc.out, "output")?;
    let log_path = args
        .log
        .clone()
        .or_else(|| rc.log.clone())
        .unwrap_or_else(|| {
            let mut s = out.as_os_str().to_owned();
            s.push(".log.jsonl");
            PathBuf::from(s)
        });
    ensure_parent(&log_path)?;
    let mut log = fs::File::create(&log_path).map_err(|e| CopathError::io(&log_path, e))?;
    let output = train(&config, &train_set, &val_set, &vectors, &mut log)?;
    log.flush().map_err(|e| CopathError::io(&log_path, e))?;
    ensure_parent(&out)?;
    save_checkpoint(
        &out,
        &output.params,
        &output.vocab,
        config.ablation,
        &output.config_hash,
    )?;
    match output.best_validation {
        Some(best) => println!(
            "trained {} steps (best validation reward {best:.6}); checkpoint {} log {}",
            output.steps_run,
            out.display(),
            log_path.display()
        ),
        None => println!(
            "trained {} steps; checkpoint {} log {}",
            output.steps_run,
            out.display(),
            log_path.display()
        ),
    }
    Ok(())
}

/// Pick the evaluation-time ablation: the checkpoint's own, unless a
/// wiring-compatible override was given.
fn eval_ablation(checkpoint: &LoadedCheckpoint, rc: &RunConfig, overridden: bool) -> Result<AblationMode> {
    if !overridden {
        return Ok(checkpoint.ablation);
    }
    let requested = rc.train.ablation;
    if requested.wiring_kind() != checkpoint.params.comm.kind() {
        return Err(CopathError::InvalidInput(format!(
            "ablation '{requested}' needs {:?} wiring but the checkpoint has {:?}",
            requested.wiring_kind(),
            checkpoint.params.comm.kind()
        )));
    }
    Ok(requested)
}

fn cmd_eval(rc: &RunConfig, args: &EvalArgs, mode_overridden: bool) -> Result<()> {
    let model_path = args
        .model
        .clone()
        .map_or_else(|| RunConfig::require(&rc.model, "model"), Ok)?;
    let checkpoint = load_checkpoint(&model_path)?;
    let tasks_path = args
        .tasks
        .clone()
        .map_or_else(|| RunConfig::require(&rc.tasks, "tasks"), Ok)?;
    let instances = load_instances(&tasks_path)?;
    let vectors = load_vectors_from(rc, args.vectors.as_ref())?;
    let ablation = eval_ablation(&checkpoint, rc, mode_overridden)?;
    let cfg = EvalConfig {
        horizon: rc.train.horizon,
        decode: rc.decode,
        variant: rc.train.rouge_variant,
        oracle: args.oracle || rc.oracle,
        ..EvalConfig::default()
    };
    let report = if args.compare_ablations {
        evaluate_with_comparisons(
            &checkpoint.params,
            &checkpoint.vocab,
            ablation,
            &checkpoint.config_hash,
            &instances,
            &vectors,
            &cfg,
        )?
    } else {
        evaluate(
            &checkpoint.params,
            &checkpoint.vocab,
            ablation,
            &checkpoint.config_hash,
            &instances,
            &vectors,
            &cfg,
        )?
    };
    emit(&rc.out, &report_to_json(&report)?)
}

#[derive(Serialize)]
struct ReasonStep {
    src: String,
    relation: String,
    dst: String,
    log_prob: f64,
}

#[derive(Serialize)]
struct ReasonRecord {
    config_hash: String,
    ablation: AblationMode,
    decode: DecodeSpec,
    horizon: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    start_v: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    start_u: Option<String>,
    path_v: String,
    path_u: String,
    steps_v: Vec<ReasonStep>,
    steps_u: Vec<ReasonStep>,
    log_prob: f64,
    answer: String,
}

fn reason_steps(graph: &SemanticGraph, steps: Option<&Vec<AgentStepRecord>>) -> Result<Vec<ReasonStep>> {
    let Some(steps) = steps else {
        return Ok(Vec::new());
    };
    steps
        .iter()
        .map(|record| {
            let edge = graph.edge(record.chosen_edge())?;
            Ok(ReasonStep {
                src: surface_form(graph.entity_tokens(edge.src)?),
                relation: surface_form(graph.relation_tokens(edge.rel)?),
                dst: surface_form(graph.entity_tokens(edge.dst)?),
                log_prob: record.log_prob,
            })
        })
        .collect()
}

fn cmd_reason(rc: &RunConfig, args: &ReasonArgs, mode_overridden: bool) -> Result<()> {
    let model_path = args
        .model
        .clone()
        .map_or_else(|| RunConfig::require(&rc.model, "model"), Ok)?;
    let checkpoint = load_checkpoint(&model_path)?;
    let video_path = args
        .video_graph
        .clone()
        .map_or_else(|| RunConfig::require(&rc.video_graph, "video_graph"), Ok)?;
    let context_path = args
        .context_graph
        .clone()
        .map_or_else(|| RunConfig::require(&rc.context_graph, "context_graph"), Ok)?;
    let vectors = load_vectors_from(rc, args.vectors.as_ref())?;
    let utterance = tokenize(&args.utterance);
    if utterance.is_empty() {
        return Err(CopathError::InvalidInput(
            "the utterance has no tokens".into(),
        ));
    }
    let instance = TaskInstance {
        seed: rc.train.seed,
        graph_v: load_graph(&video_path)?,
        graph_u: load_graph(&context_path)?,
        utterance,
        reference: Reference {
            video: Vec::new(),
            context: Vec::new(),
        },
        planted_v: None,
        planted_u: None,
    };
    let ablation = eval_ablation(&checkpoint, rc, mode_overridden)?;
    let prep = prepare_instance(&instance, &checkpoint.vocab, &vectors)?;
    let cfg = EvalConfig {
        horizon: rc.train.horizon,
        decode: rc.decode,
        variant: rc.train.rouge_variant,
        ..EvalConfig::default()
    };
    let outcome = decode_instance(&checkpoint.params, &instance, &prep, &cfg, 0, ablation)?;
    let entity_name = |graph: &SemanticGraph, id: Option<usize>| -> Result<Option<String>> {
        id.map(|id| Ok(surface_form(graph.entity_tokens(id)?)))
            .transpose()
    };
    let record = ReasonRecord {
        config_hash: checkpoint.config_hash.clone(),
        ablation,
        decode: cfg.decode,
        horizon: cfg.horizon,
        start_v: entity_name(&instance.graph_v, outcome.start_v)?,
        start_u: entity_name(&instance.graph_u, outcome.start_u)?,
        steps_v: reason_steps(&instance.graph_v, outcome.trace.steps_v.as_ref())?,
        steps_u: reason_steps(&instance.graph_u, outcome.trace.steps_u.as_ref())?,
        log_prob: outcome.trace.log_prob,
        answer: assemble_answer(&outcome.path_v, &outcome.path_u, &instance.utterance.join(" ")),
        path_v: outcome.path_v,
        path_u: outcome.path_u,
    };
    let mut text = serde_json::to_string_pretty(&record)
        .map_err(|e| CopathError::InvalidInput(format!("cannot serialize record: {e}")))?;
    text.push('\n');
    emit(&rc.out, &text)
}

fn cmd_assemble(args: &AssembleArgs) -> Result<()> {
    println!(
        "{}",
        assemble_answer(&args.path_v, &args.path_u, &args.utterance)
    );
    Ok(())
}

fn cmd_sweep_t(rc: &RunConfig, args: &SweepArgs) -> Result<()> {
    let horizons: Vec<usize> = args
        .horizons
        .split(',')
        .map(|part| {
            part.trim().parse::<usize>().map_err(|_| {
                CopathError::InvalidInput(format!("bad horizon '{part}' in --horizons"))
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    if horizons.is_empty() {
        return Err(CopathError::InvalidInput("no horizons given".into()));
    }
    if horizons.contains(&0) {
        return Err(CopathError::InvalidInput(
            "horizons must be at least 1".into(),
        ));
    }
    let (train_set, val_set) = split_tasks(
        rc,
        args.tasks.as_ref(),
        args.val_tasks.as_ref(),
        args.val_count,
    )?;
    let vectors = load_vectors_from(rc, args.vectors.as_ref())?;
    // With no held-out split, evaluate on the training set itself.
    let eval_set = if val_set.is_empty() { &train_set } else { &val_set };

    let mut table = String::from("T\tmean_reward\trecovery\n");
    for &horizon in &horizons {
        let mut config = rc.train.clone();
        config.horizon = horizon;
        let mut sink = std::io::sink();
        let output = train(&config, &train_set, &val_set, &vectors, &mut sink)?;
        let cfg = EvalConfig {
            horizon,
            decode: rc.decode,
            variant: config.rouge_variant,
            ..EvalConfig::default()
        };
        let report = evaluate(
            &output.params,
            &output.vocab,
            config.ablation,
            &output.config_hash,
            eval_set,
            &vectors,
            &cfg,
        )?;
        let recovery = report
            .recovery_rate
            .map_or_else(|| "-".to_string(), |r| format!("{r:.6}"));
        table.push_str(&format!(
            "{horizon}\t{:.6}\t{recovery}\n",
            report.mean_reward
        ));
    }
    emit(&rc.out, &table)
}
