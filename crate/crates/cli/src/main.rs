use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use revdyn::analysis::{
    consecutive_pairs, consecutive_pairs_csv, interarrival_histogram, restaurant_correlation,
    state_means_csv, user_state_means,
};
use revdyn::cluster::{louvain, ClusterQuality, LabelAssignment, WeightedGraph};
use revdyn::coburst::{
    annotate_states, build_coburst_graph, build_coreview_graph, CoburstConfig, CoburstGraph,
    StateModel, DEFAULT_OMEGA,
};
use revdyn::datamodel::{build_user_sequences, ingest_reviews, Dataset, UserSequence};
use revdyn::eval::{cross_validate, CvConfig};
use revdyn::hmm::{baum_welch_fit, BaumWelchConfig, HmmParams};
use revdyn::lhmm::{lhmm_classify_all, lhmm_fit, LhmmConfig, LhmmParams};
use revdyn::synth::{gen_dataset, SynthConfig};
use revdyn::Execution;

/// Review-timing spam analysis: HMM fitting, labeled classification,
/// co-burst graphs and group clustering.
#[derive(Parser)]
#[command(name = "revdyn", version)]
struct Cli {
    /// Run every stage on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a review file; optionally write its canonical form.
    IngestValidate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic labeled dataset with planted spam campaigns.
    Synth(SynthArgs),
    /// Fit an HMM (or a labeled HMM with --labeled) and write its parameters.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Fit one HMM per class plus the class prior.
        #[arg(long)]
        labeled: bool,
        /// Replace learned transitions by uniform rows (labeled models only).
        #[arg(long, requires = "labeled")]
        uniform_transitions: bool,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Classify every user with a labeled model.
    Classify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Decode the hidden state of every review.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build a co-burst or co-review user graph as a TSV edge list.
    BuildGraph {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = GraphKind::Coburst)]
        kind: GraphKind,
        /// Window in seconds.
        #[arg(long, default_value_t = DEFAULT_OMEGA)]
        omega: i64,
        /// Model used to decode states; required for co-burst graphs.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Louvain clustering of a TSV graph.
    Cluster {
        /// Graph TSV from build-graph.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Review file supplying user labels; its users without edges join as singletons.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Where to write the purity/entropy report (requires --labels).
        #[arg(long, requires = "labels")]
        report: Option<PathBuf>,
    },
    /// k-fold cross-validation of the labeled HMM.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        uniform_transitions: bool,
        /// Per-fold metrics as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Data exports for plotting.
    Stats {
        #[arg(value_enum)]
        kind: StatsKind,
        #[command(flatten)]
        args: StatsArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphKind {
    Coburst,
    Coreview,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatsKind {
    Histogram,
    StateMeans,
    Pairs,
    Correlation,
}

#[derive(Args)]
struct SynthArgs {
    /// Review file to write (.csv or .jsonl).
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1600)]
    n_genuine: usize,
    #[arg(long, default_value_t = 400)]
    n_spammers: usize,
    #[arg(long, default_value_t = 200)]
    n_restaurants: usize,
    #[arg(long, default_value_t = 50)]
    reviews_per_user: usize,
    #[arg(long, default_value_t = 4)]
    n_groups: usize,
    #[arg(long, default_value_t = 0.1)]
    raised_fraction: f64,
    /// Truth sidecar `user_id,label,group_id,is_raised`; default `<output stem>.users.csv`.
    #[arg(long)]
    truth_users: Option<PathBuf>,
    /// Truth sidecar `review_id,true_state`; default `<output stem>.states.csv`.
    #[arg(long)]
    truth_states: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    #[arg(long)]
    split_by_label: bool,
    /// Model used to decode states (state-means).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    rest_a: Option<String>,
    #[arg(long)]
    rest_b: Option<String>,
    #[arg(long, default_value_t = 14)]
    smooth_days: usize,
}

/// Parameters of either a plain or a labeled model.
enum Model {
    Plain(HmmParams),
    Labeled(LhmmParams),
}

impl StateModel for Model {
    fn params_for(&self, seq: &UserSequence) -> revdyn::Result<HmmParams> {
        match self {
            Model::Plain(p) => StateModel::params_for(p, seq),
            Model::Labeled(p) => StateModel::params_for(p, seq),
        }
    }
}

fn load_model(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let labeled = text
        .lines()
        .any(|l| l.split('=').next().is_some_and(|k| k.trim() == "prior"));
    let model = if labeled {
        Model::Labeled(LhmmParams::from_text(&text)?)
    } else {
        Model::Plain(HmmParams::from_text(&text)?)
    };
    Ok(model)
}

fn load(path: &Path) -> Result<Dataset> {
    ingest_reviews(path).with_context(|| format!("reading {}", path.display()))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    let mut w = sink(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn sidecar(output: &Path, suffix: &str) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    output.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match cli.command {
        Command::IngestValidate { input, output } => {
            let ds = load(&input)?;
            let labeled = ds.reviews().iter().filter(|r| r.label.is_some()).count();
            eprintln!(
                "ok: {} reviews, {} users, {} restaurants, {labeled} labeled",
                ds.len(),
                ds.n_users(),
                ds.n_restaurants()
            );
            if let Some(out) = output {
                ds.write_path(&out)?;
            }
        }
        Command::Synth(a) => {
            let cfg = SynthConfig {
                seed: a.seed,
                n_genuine: a.n_genuine,
                n_spammers: a.n_spammers,
                n_restaurants: a.n_restaurants,
                reviews_per_user: a.reviews_per_user,
                n_groups: a.n_groups,
                raised_fraction: a.raised_fraction,
                exec,
                ..SynthConfig::default()
            };
            let truth = gen_dataset(&cfg)?;
            truth.dataset.write_path(&a.output)?;
            let users = a.truth_users.unwrap_or_else(|| sidecar(&a.output, "users"));
            truth.write_users_csv(sink(Some(&users))?)?;
            let states = a
                .truth_states
                .unwrap_or_else(|| sidecar(&a.output, "states"));
            truth.write_states_csv(sink(Some(&states))?)?;
        }
        Command::Fit {
            input,
            output,
            labeled,
            uniform_transitions,
            max_iter,
            tol,
        } => {
            let seqs = build_user_sequences(&load(&input)?);
            let bw = BaumWelchConfig {
                max_iter,
                tol,
                exec,
            };
            let text = if labeled {
                lhmm_fit(
                    &seqs,
                    &LhmmConfig {
                        baum_welch: bw,
                        uniform_transitions,
                    },
                )?
                .to_text()
            } else {
                let fit = baum_welch_fit(&seqs, &bw)?;
                if !fit.converged {
                    eprintln!(
                        "warning: stopped after {} iterations without converging",
                        fit.iterations
                    );
                }
                fit.params.to_text()
            };
            emit(output.as_deref(), &text)?;
        }
        Command::Classify {
            input,
            params,
            output,
        } => {
            let Model::Labeled(model) = load_model(&params)? else {
                bail!("classify needs a labeled model (fit --labeled)");
            };
            let seqs = build_user_sequences(&load(&input)?);
            let mut w = sink(output.as_deref())?;
            writeln!(
                w,
                "user_id,predicted,spam_log_odds,log_posterior_pos,log_posterior_neg,label"
            )?;
            for (r, s) in lhmm_classify_all(&seqs, &model, exec)?.iter().zip(&seqs) {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    csv_field(&r.user_id),
                    r.predicted,
                    r.spam_log_odds,
                    r.log_posterior_pos,
                    r.log_posterior_neg,
                    s.label.map(|l| l.as_str()).unwrap_or("")
                )?;
            }
            w.flush()?;
        }
        Command::Decode {
            input,
            params,
            output,
        } => {
            let model = load_model(&params)?;
            let ds = load(&input)?;
            annotate_states(&ds, &model, exec)?.write_csv(sink(output.as_deref())?)?;
        }
        Command::BuildGraph {
            input,
            output,
            kind,
            omega,
            params,
        } => {
            let ds = load(&input)?;
            let g = match kind {
                GraphKind::Coreview => build_coreview_graph(&ds),
                GraphKind::Coburst => {
                    let Some(params) = params else {
                        bail!("--params is required for co-burst graphs");
                    };
                    let ads = annotate_states(&ds, &load_model(&params)?, exec)?;
                    build_coburst_graph(&ads, &CoburstConfig { omega, exec })?
                }
            };
            g.write_tsv(sink(output.as_deref())?)?;
        }
        Command::Cluster {
            input,
            output,
            seed,
            labels,
            report,
        } => {
            let file =
                File::open(&input).with_context(|| format!("reading {}", input.display()))?;
            let mut graph = CoburstGraph::read_tsv(BufReader::new(file))?;
            let mut assignment = LabelAssignment::new();
            if let Some(path) = &labels {
                let ds = load(path)?;
                graph = with_users(graph, ds.by_user().keys());
                assignment = ds.user_labels();
            }
            let clustering = louvain(&WeightedGraph::from_coburst(&graph), seed);
            clustering.write_tsv(sink(output.as_deref())?)?;
            if let Some(path) = report {
                emit(
                    Some(&path),
                    &ClusterQuality::evaluate(&clustering, &assignment)?.to_text(),
                )?;
            }
        }
        Command::Evaluate {
            input,
            output,
            folds,
            seed,
            uniform_transitions,
            csv,
        } => {
            let ds = load(&input)?;
            let lhmm = LhmmConfig {
                baum_welch: BaumWelchConfig {
                    exec,
                    ..BaumWelchConfig::default()
                },
                uniform_transitions,
            };
            let rep = cross_validate(&ds, folds, seed, &CvConfig { lhmm, exec })?;
            emit(output.as_deref(), &rep.to_text())?;
            if let Some(path) = csv {
                emit(Some(&path), &rep.to_csv())?;
            }
        }
        Command::Stats { kind, args } => stats(kind, args, exec)?,
    }
    Ok(())
}

/// Adds every user in `users` as a node, keeping existing edges.
fn with_users<'a>(g: CoburstGraph, users: impl Iterator<Item = &'a String>) -> CoburstGraph {
    let mut nodes: Vec<String> = g.nodes.iter().cloned().chain(users.cloned()).collect();
    nodes.sort();
    nodes.dedup();
    let pos = |n: &str| {
        nodes
            .binary_search_by(|x| x.as_str().cmp(n))
            .expect("node present")
    };
    let edges = g
        .edge_list()
        .into_iter()
        .map(|(a, b, w)| (pos(a), pos(b), w))
        .collect();
    CoburstGraph {
        nodes: nodes.clone(),
        edges,
    }
}

fn stats(kind: StatsKind, a: StatsArgs, exec: Execution) -> Result<()> {
    let ds = load(&a.input)?;
    let out = a.output.as_deref();
    match kind {
        StatsKind::Histogram => emit(
            out,
            &interarrival_histogram(&ds, a.bins, a.split_by_label)?.to_csv(),
        ),
        StatsKind::Pairs => emit(
            out,
            &consecutive_pairs_csv(&consecutive_pairs(&ds)?, a.split_by_label),
        ),
        StatsKind::StateMeans => {
            let Some(params) = a.params else {
                bail!("--params is required for state-means");
            };
            let ads = annotate_states(&ds, &load_model(&params)?, exec)?;
            emit(out, &state_means_csv(&user_state_means(&ads)))
        }
        StatsKind::Correlation => {
            let (Some(ra), Some(rb)) = (a.rest_a, a.rest_b) else {
                bail!("--rest-a and --rest-b are required for correlation");
            };
            let r = restaurant_correlation(&ds, &ra, &rb, a.smooth_days)?;
            emit(
                out,
                &format!(
                    "rest_a,rest_b,smooth_days,pearson_r\n{},{},{},{r}\n",
                    csv_field(&ra),
                    csv_field(&rb),
                    a.smooth_days
                ),
            )
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
