use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use flowmine::eval::{acceptance_ratio, Strategy};
use flowmine::extract::{annotated_graph, ExtractConfig, ReductionOrder};
use flowmine::flowsim::{generate_with_truth, ground_truth_fsa, parse_flowspec, GenConfig};
use flowmine::fsa::Fsa;
use flowmine::graph::WindowPolicy;
use flowmine::message::{parse_message_table, MessageTable};
use flowmine::pipeline::{mine, MineConfig, WindowMode};
use flowmine::slicer::{slice_all, SliceSpec};
use flowmine::solver::{build_constraints, export_smtlib};
use flowmine::trace::{parse_trace, serialize_trace, Trace};

#[derive(Parser)]
#[command(name = "flowmine", version, about = "Mine message-flow models from communication traces")]
struct Cli {
    /// Message table mapping indices to `src:dest:cmd` triples.
    #[arg(long, global = true)]
    table: Option<PathBuf>,

    /// TOML file with defaults for `[gen]`, `[mine]` and `[eval]`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic trace from a flow spec.
    Gen(GenArgs),
    /// Split a trace into per-key slices.
    Slice(SliceArgs),
    /// Mine the best model from one or more traces.
    Mine(MineArgs),
    /// Acceptance ratio of a model on a trace.
    Eval(EvalArgs),
    /// Write the consistency problem as an SMT-LIB2 script.
    ExportSmt(ExportArgs),
    /// Render a model as Graphviz DOT.
    Dot(DotArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Most foreign messages between two messages of one instance.
    #[arg(long)]
    gap: Option<usize>,
    /// Probability that two consecutive messages share an event.
    #[arg(long)]
    simul: Option<f64>,
    /// Tag each instance with a `pid` attribute.
    #[arg(long)]
    pid: bool,
    /// Trace output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the ground-truth model JSON here.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct SliceArgs {
    #[arg(long)]
    trace: PathBuf,
    /// e.g. `pid`, `addr:block=64`, `pid+addr:block=64:drop`.
    #[arg(long)]
    policy: String,
    /// Overrides the block size of every address-mapped policy.
    #[arg(long)]
    line_size: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MineArgs {
    #[arg(long = "trace", required = true)]
    traces: Vec<PathBuf>,
    /// auto, off, or a fixed window size.
    #[arg(long)]
    window: Option<WindowMode>,
    /// Largest window tried by `--window auto`.
    #[arg(long)]
    max_window: Option<usize>,
    #[arg(long)]
    slice: Option<String>,
    #[arg(long)]
    sz: Option<usize>,
    #[arg(long)]
    top: Option<usize>,
    /// ascending-support, descending-support or input-order.
    #[arg(long)]
    order: Option<ReductionOrder>,
    /// Shuffle the solver's value order with this seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    /// oldest-first, newest-first, exhaustive or exhaustive:N.
    #[arg(long)]
    strategy: Option<Strategy>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long = "trace", required = true)]
    traces: Vec<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    slice: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DotArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    gen: GenFile,
    #[serde(default)]
    mine: MineFile,
    #[serde(default)]
    eval: EvalFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenFile {
    instances: Option<usize>,
    seed: Option<u64>,
    gap: Option<usize>,
    simul: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MineFile {
    window: Option<String>,
    max_window: Option<usize>,
    slice: Option<String>,
    sz: Option<usize>,
    top: Option<usize>,
    order: Option<String>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalFile {
    strategy: Option<String>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes to stdout; a reader that went away early is not an error.
fn say(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text),
        None => say(text),
    }
}

fn load_table(path: Option<&Path>) -> Result<MessageTable> {
    match path {
        Some(p) => parse_message_table(&read(p)?).with_context(|| format!("parsing {}", p.display())),
        None => Ok(MessageTable::new()),
    }
}

fn load_trace(path: &Path, table: &MessageTable) -> Result<Trace> {
    parse_trace(&read(path)?, table).with_context(|| format!("parsing {}", path.display()))
}

fn load_model(path: &Path) -> Result<Fsa> {
    let m = Fsa::from_json(&read(path)?).with_context(|| format!("loading {}", path.display()))?;
    for w in m.structural_warnings() {
        log::warn!("{}: {w}", path.display());
    }
    Ok(m)
}

fn parse_opt<T: std::str::FromStr>(what: &str, s: Option<String>) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    s.map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("config {what}: {e}"))).transpose()
}

fn parse_slices(spec: Option<String>, line_size: Option<u64>) -> Result<Option<SliceSpec>> {
    let Some(text) = spec else {
        return Ok(None);
    };
    let mut spec: SliceSpec = text.parse()?;
    if let Some(n) = line_size {
        for p in spec.0.iter_mut() {
            if p.address_mode != Default::default() {
                *p = p.clone().with_block(n)?;
            }
        }
    }
    Ok(Some(spec))
}

fn cmd_gen(a: GenArgs, file: GenFile, table: &MessageTable) -> Result<()> {
    let spec =
        parse_flowspec(&read(&a.spec)?, table).with_context(|| format!("parsing {}", a.spec.display()))?;
    let defaults = GenConfig::default();
    let cfg = GenConfig {
        instances_per_flow: a.instances.or(file.instances).unwrap_or(defaults.instances_per_flow),
        seed: a.seed.or(file.seed).unwrap_or(defaults.seed),
        max_gap: a.gap.or(file.gap).unwrap_or(defaults.max_gap),
        simul_prob: a.simul.or(file.simul).unwrap_or(defaults.simul_prob),
        tag_pid: a.pid,
    };
    let g = generate_with_truth(&spec, &cfg)?;
    let table = table.extended(&spec.messages());
    emit(a.out.as_deref(), &serialize_trace(&g.trace, Some(&table)))?;
    if let Some(p) = &a.truth {
        write(p, &ground_truth_fsa(&spec)?.to_json())?;
    }
    Ok(())
}

fn cmd_slice(a: SliceArgs, table: &MessageTable, has_table: bool) -> Result<()> {
    let trace = load_trace(&a.trace, table)?;
    let spec = parse_slices(Some(a.policy), a.line_size)?.expect("policy given");
    let parts = slice_all(&trace, &spec)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let table = has_table.then_some(table);
    for (i, part) in parts.iter().enumerate() {
        write(&a.out.join(format!("slice_{i:04}.trace")), &serialize_trace(part, table))?;
    }
    say(&format!("{} slices written to {}\n", parts.len(), a.out.display()))
}

fn cmd_mine(a: MineArgs, file: MineFile, table: &MessageTable) -> Result<()> {
    let started = Instant::now();
    let traces = a.traces.iter().map(|p| load_trace(p, table)).collect::<Result<Vec<_>>>()?;
    if traces.iter().all(Trace::is_empty) {
        bail!(
            "no messages in {}",
            a.traces.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
        );
    }
    let defaults = ExtractConfig::default();
    let cfg = MineConfig {
        window: match a.window {
            Some(w) => w,
            None => parse_opt("mine.window", file.window)?.unwrap_or_default(),
        },
        max_window: a.max_window.or(file.max_window),
        slices: parse_slices(a.slice.or(file.slice), None)?,
        extract: ExtractConfig {
            sz: a.sz.or(file.sz).unwrap_or(defaults.sz),
            top: a.top.or(file.top).unwrap_or(defaults.top),
            reduction_order: match a.order {
                Some(o) => o,
                None => parse_opt("mine.order", file.order)?.unwrap_or_default(),
            },
            seed: a.seed.or(file.seed),
        },
    };
    let r = mine(table, &traces, &cfg)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let labels = (!table.is_empty()).then(|| r.graph.table());
    write(&a.out.join("model.json"), &r.model.to_json())?;
    write(&a.out.join("model.dot"), &r.model.to_dot(labels))?;
    write(&a.out.join("graph.json"), &serde_json::to_string_pretty(&r.graph.dump())?)?;
    let summary = r.summary();
    let report = json!({
        "summary": summary,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "best": r.extraction.best,
        "top_k": r.extraction.top_k,
        "candidates": r.extraction.candidates,
        "warnings": r.problem.warnings(),
    });
    write(&a.out.join("report.json"), &serde_json::to_string_pretty(&report)?)?;

    let window = summary.window.map_or("unbounded".to_owned(), |w| w.to_string());
    say(&format!(
        "window: {window}\ngraph: {} nodes, {} edges\n\
         best model: {} non-zero edges, {} states, {} transitions ({} distinct reduced of {} candidates)\n\
         wall time: {:.3}s\n",
        summary.nodes,
        summary.edges,
        summary.best_size,
        summary.states,
        summary.transitions,
        summary.distinct_reduced,
        summary.candidates,
        started.elapsed().as_secs_f64()
    ))?;
    Ok(())
}

fn cmd_eval(a: EvalArgs, file: EvalFile, table: &MessageTable) -> Result<()> {
    let model = load_model(&a.model)?;
    let trace = load_trace(&a.trace, table)?;
    let strategy = match a.strategy {
        Some(s) => s,
        None => parse_opt("eval.strategy", file.strategy)?.unwrap_or_default(),
    };
    let report = acceptance_ratio(&model, &trace, strategy)
        .with_context(|| format!("evaluating {}", a.trace.display()))?;
    say(&format!("{}\n", serde_json::to_string_pretty(&report)?))
}

fn cmd_export(a: ExportArgs, table: &MessageTable) -> Result<()> {
    let traces = a.traces.iter().map(|p| load_trace(p, table)).collect::<Result<Vec<_>>>()?;
    let window = a.window.map_or(WindowPolicy::Unbounded, WindowPolicy::Fixed);
    let slices = parse_slices(a.slice, None)?;
    let graph = annotated_graph(table, &traces, window, slices.as_ref())?;
    emit(a.out.as_deref(), &export_smtlib(&build_constraints(&graph)))
}

fn cmd_dot(a: DotArgs, table: &MessageTable) -> Result<()> {
    let model = load_model(&a.model)?;
    emit(a.out.as_deref(), &model.to_dot((!table.is_empty()).then_some(table)))
}

fn run(cli: Cli) -> Result<()> {
    let table = load_table(cli.table.as_deref())?;
    let file: FileConfig = match &cli.config {
        Some(p) => toml::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => FileConfig::default(),
    };
    match cli.cmd {
        Cmd::Gen(a) => cmd_gen(a, file.gen, &table),
        Cmd::Slice(a) => cmd_slice(a, &table, cli.table.is_some()),
        Cmd::Mine(a) => cmd_mine(a, file.mine, &table),
        Cmd::Eval(a) => cmd_eval(a, file.eval, &table),
        Cmd::ExportSmt(a) => cmd_export(a, &table),
        Cmd::Dot(a) => cmd_dot(a, &table),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Ok(n) = std::env::var("FLOWMINE_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("FLOWMINE_THREADS ignored: {e}");
                }
            }
            _ => log::warn!("FLOWMINE_THREADS={n:?} is not a positive integer"),
        }
    }

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let infeasible = e.downcast_ref::<flowmine::Error>().is_some_and(flowmine::Error::is_infeasible);
            ExitCode::from(if infeasible { 2 } else { 1 })
        }
    }
}
