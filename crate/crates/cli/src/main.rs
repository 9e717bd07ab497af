//! `gtc`: build supervision graphs from N-best lists, evaluate losses and
//! oracle error rates, and run the self-training demo.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or parse error, 3 infeasible or
//! numeric failure.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gtc::alphabet::{Alphabet, Symbol};
use gtc::graph::GtcGraph;
use gtc::loss::{gradient, loss, GtcError};
use gtc::oracle::{finite_diff_with, relative_error};
use gtc::pipeline::{
    build_supervision_graph, graph_oracle_ler, nbest_oracle_ler, parse_nbest, NBestList, PipelineConfig,
};
use gtc::posterior::{parse_matrix_tsv, write_matrix_tsv, LogitMatrix, PosteriorMatrix};
use gtc::toyasr::{self_train_experiment, ExperimentConfig};
use gtc::Error;
use log::info;

/// Finite-difference disagreement above which `gradcheck` fails.
const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Gradient entries smaller than this are compared absolutely.
const GRADCHECK_FLOOR: f64 = 1e-3;

#[derive(Parser)]
#[command(name = "gtc", version, about = "Graph-based temporal classification tools")]
struct Cli {
    /// Worker threads for per-utterance parallelism (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// More log output; repeat for debug detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn N-best lists into one `.gtc` supervision graph per utterance.
    BuildGraph(BuildGraphArgs),
    /// Loss of a graph against a posterior matrix.
    Loss(LossArgs),
    /// Compare the analytic gradient with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Oracle label error rate of a graph or an N-best list.
    OracleLer(OracleLerArgs),
    /// Run the self-training experiment and write its report.
    Demo(DemoArgs),
}

#[derive(Args)]
struct BuildGraphArgs {
    #[arg(long)]
    nbest: PathBuf,
    #[arg(long)]
    alphabet: PathBuf,
    /// Scale applied to hypothesis scores before normalization.
    #[arg(long, default_value_t = 0.6)]
    mu: f64,
    /// Pruning threshold; 0 disables pruning.
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    /// Replace every transition weight by 1.
    #[arg(long)]
    unit_weights: bool,
    /// Optional references; densities are relative to the 1-best length
    /// without them.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LossArgs {
    #[arg(long)]
    graph: PathBuf,
    /// TSV matrix whose header names the alphabet.
    #[arg(long)]
    posteriors: PathBuf,
    /// Require the matrix header to match this alphabet file.
    #[arg(long)]
    alphabet: Option<PathBuf>,
    /// Write the gradient with respect to the logits here.
    #[arg(long)]
    grad: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    logits: PathBuf,
    #[arg(long)]
    alphabet: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
}

#[derive(Args)]
struct OracleLerArgs {
    #[arg(long, conflicts_with = "nbest", required_unless_present = "nbest")]
    graph: Option<PathBuf>,
    #[arg(long)]
    nbest: Option<PathBuf>,
    #[arg(long)]
    alphabet: PathBuf,
    /// `<utterance>\t<tokens>` lines.
    #[arg(long = "ref")]
    reference: PathBuf,
}

#[derive(Args)]
struct DemoArgs {
    /// Overrides on top of the bundled default configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn io(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn numeric(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Loss(GtcError::Infeasible) => CliError::numeric(e.to_string()),
            e => CliError::io(e.to_string()),
        }
    }
}

impl From<GtcError> for CliError {
    fn from(e: GtcError) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T> = Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn source(path: &Path) -> String {
    path.display().to_string()
}

/// Writes through a temporary sibling so readers never see partial files.
fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let err = |e: std::io::Error| CliError::io(format!("{}: {e}", path.display()));
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(contents.as_bytes()))
        .map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}

fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn ensure_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::io(format!("{}: no such file", path.display())))
    }
}

fn load_alphabet(path: &Path) -> CliResult<Alphabet> {
    Ok(Alphabet::parse(&read(path)?, &source(path)).map_err(Error::from)?)
}

/// Matrix plus the alphabet named by its header.
fn load_matrix(path: &Path, alphabet: Option<&Path>) -> CliResult<(Alphabet, ndarray::Array2<f64>)> {
    let expected = alphabet.map(load_alphabet).transpose()?;
    Ok(parse_matrix_tsv(&read(path)?, expected.as_ref(), &source(path)).map_err(Error::from)?)
}

fn load_graph(path: &Path, alphabet: &Alphabet) -> CliResult<GtcGraph> {
    Ok(GtcGraph::parse(&read(path)?, alphabet, &source(path)).map_err(Error::from)?)
}

/// `<utterance>\t<tokens>` lines, in file order.
fn load_references(path: &Path, alphabet: &Alphabet) -> CliResult<Vec<(String, Vec<Symbol>)>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |m: String| CliError::io(format!("{}:{}: {m}", path.display(), i + 1));
        let (utt, tokens) = line
            .split_once('\t')
            .ok_or_else(|| at("expected <utterance>\\t<tokens>".into()))?;
        let syms = alphabet.encode(tokens).map_err(at)?;
        if syms.is_empty() {
            return Err(at("empty reference".into()));
        }
        out.push((utt.to_string(), syms));
    }
    Ok(out)
}

fn cmd_build_graph(a: &BuildGraphArgs) -> CliResult<()> {
    ensure_file(&a.nbest)?;
    ensure_file(&a.alphabet)?;
    if let Some(r) = &a.reference {
        ensure_file(r)?;
    }
    let config = PipelineConfig {
        mu: a.mu,
        eta: a.eta,
        unit_weights: a.unit_weights,
        ..Default::default()
    };
    config.validate().map_err(|e| CliError::io(e.to_string()))?;
    let alphabet = load_alphabet(&a.alphabet)?;
    let lists = parse_nbest(&read(&a.nbest)?, &alphabet, &source(&a.nbest)).map_err(Error::from)?;
    let refs = match &a.reference {
        Some(p) => Some(load_references(p, &alphabet)?),
        None => None,
    };
    ensure_dir(&a.out)?;

    let built: Vec<CliResult<GtcGraph>> = {
        use rayon::prelude::*;
        lists
            .par_iter()
            .map(|nb| {
                build_supervision_graph(nb, &alphabet, &config)
                    .map_err(|e| CliError::io(format!("{}: {e}", nb.utterance)))
            })
            .collect()
    };
    let mut stdout = String::from("utterance\tnodes\tdensity\n");
    for (nb, g) in lists.iter().zip(built) {
        let g = g?;
        let ref_len = match &refs {
            Some(r) => r
                .iter()
                .find(|(u, _)| u == &nb.utterance)
                .map(|(_, s)| s.len())
                .ok_or_else(|| CliError::io(format!("no reference for {}", nb.utterance)))?,
            None => nb.best().tokens.len().max(1),
        };
        let density = g.density(ref_len).map_err(|e| CliError::io(e.to_string()))?;
        write_atomic(
            &a.out.join(format!("{}.gtc", nb.utterance)),
            &g.to_text(&alphabet),
        )?;
        stdout.push_str(&format!("{}\t{}\t{density}\n", nb.utterance, g.num_label_nodes()));
    }
    print!("{stdout}");
    info!("wrote {} graphs to {}", lists.len(), a.out.display());
    Ok(())
}

fn cmd_loss(a: &LossArgs) -> CliResult<()> {
    ensure_file(&a.graph)?;
    ensure_file(&a.posteriors)?;
    let (alphabet, m) = load_matrix(&a.posteriors, a.alphabet.as_deref())?;
    let graph = load_graph(&a.graph, &alphabet)?;
    let post = PosteriorMatrix::new(m)?;
    let value = loss(&graph, &post)?;
    if !value.is_finite() {
        return Err(GtcError::Infeasible.into());
    }
    println!("{value}");
    if let Some(out) = &a.grad {
        let grad = gradient(&graph, &post)?;
        write_atomic(out, &write_matrix_tsv(&alphabet, &grad))?;
    }
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> CliResult<()> {
    ensure_file(&a.graph)?;
    ensure_file(&a.logits)?;
    let (alphabet, m) = load_matrix(&a.logits, a.alphabet.as_deref())?;
    let graph = load_graph(&a.graph, &alphabet)?;
    let logits = LogitMatrix::new(m)?;
    let analytic = gradient(&graph, &logits.softmax())?;
    let fd = finite_diff_with(&logits, a.step, |p| loss(&graph, p).unwrap_or(f64::NAN))
        .map_err(|e| CliError::numeric(e.to_string()))?;
    let worst = analytic
        .iter()
        .zip(fd.iter())
        .map(|(x, z)| relative_error(*x, *z, GRADCHECK_FLOOR))
        .fold(0.0f64, f64::max);
    println!("max_relative_error\t{worst:e}");
    if worst > GRADCHECK_TOLERANCE {
        return Err(CliError::numeric(format!(
            "gradient check failed: {worst:e} > {GRADCHECK_TOLERANCE:e}"
        )));
    }
    Ok(())
}

fn cmd_oracle_ler(a: &OracleLerArgs) -> CliResult<()> {
    let input = a
        .graph
        .as_ref()
        .or(a.nbest.as_ref())
        .expect("clap enforces one input");
    ensure_file(input)?;
    ensure_file(&a.alphabet)?;
    ensure_file(&a.reference)?;
    let alphabet = load_alphabet(&a.alphabet)?;
    let refs = load_references(&a.reference, &alphabet)?;
    if let Some(path) = &a.graph {
        let graph = load_graph(path, &alphabet)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        let reference = match refs.iter().find(|(u, _)| Some(u) == stem.as_ref()) {
            Some((_, r)) => r,
            None if refs.len() == 1 => &refs[0].1,
            None => {
                return Err(CliError::io(format!(
                    "{}: no reference named {}",
                    a.reference.display(),
                    stem.unwrap_or_default()
                )))
            }
        };
        let ler = graph_oracle_ler(&graph, reference).map_err(|e| CliError::numeric(e.to_string()))?;
        println!("{ler}");
        return Ok(());
    }
    let lists: Vec<NBestList> = parse_nbest(&read(input)?, &alphabet, &source(input)).map_err(Error::from)?;
    let (mut errors, mut total) = (0.0, 0usize);
    let mut stdout = String::from("utterance\toracle_ler\n");
    for nb in &lists {
        let (_, reference) = refs
            .iter()
            .find(|(u, _)| u == &nb.utterance)
            .ok_or_else(|| CliError::io(format!("no reference for {}", nb.utterance)))?;
        let ler = nbest_oracle_ler(nb, reference).map_err(|e| CliError::io(e.to_string()))?;
        errors += ler * reference.len() as f64;
        total += reference.len();
        stdout.push_str(&format!("{}\t{ler}\n", nb.utterance));
    }
    stdout.push_str(&format!("corpus\t{}\n", errors / total.max(1) as f64));
    print!("{stdout}");
    Ok(())
}

fn cmd_demo(a: &DemoArgs) -> CliResult<()> {
    let mut config = match &a.config {
        Some(p) => ExperimentConfig::parse(&read(p)?, &source(p)).map_err(Error::from)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    config.validate()?;
    ensure_dir(&a.out)?;
    let report = self_train_experiment(&config)?;
    write_atomic(&a.out.join("config.txt"), &config.to_text())?;
    write_atomic(&a.out.join("report.tsv"), &report.to_tsv())?;
    let summary = report.summary();
    write_atomic(&a.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::numeric(e.to_string()))?;
    }
    match &cli.command {
        Command::BuildGraph(a) => cmd_build_graph(a),
        Command::Loss(a) => cmd_loss(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::OracleLer(a) => cmd_oracle_ler(a),
        Command::Demo(a) => cmd_demo(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
