//! `adgap` command line: graph generation, exact and sampled evaluation, and the
//! experiment reports.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cascade::{spread, spread_mc};
use crate::error::{AdgapError, Result};
use crate::graph::{make_line_instance, random_family, FamilyParams, GraphKind, InfluenceGraph, NodeId, ProbSpec};
use crate::lab::{
    invariant_suite, lower_bound_experiment, measure_gap, multilinear_ratio_experiment, random_walk_ratio_experiment,
    SuiteOptions,
};
use crate::mc::{self, substream, Moments};
use crate::oracles::{multilinear_exact, opt_a_exact, opt_n_exact, poisson_expected_exact, Witness};
use crate::poisson::poisson_process_run;
use crate::policy::{adaptive_greedy_policy, nonadaptive_greedy, policy_spread, FrontPolicy};
use crate::report::{Report, Row};
use crate::{cascade, Caps, Method};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CAP: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "adgap", version, about = "Adaptivity-gap experiments for influence maximization")]
pub struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Emit CSV instead of JSON.
    #[arg(long, global = true)]
    pub csv: bool,
    /// Omit the wall-clock timestamp so reruns are byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Worker threads; output does not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Override the exact-enumeration edge cap.
    #[arg(long, global = true)]
    pub edge_cap: Option<usize>,
    /// Override the subset-enumeration node cap.
    #[arg(long, global = true)]
    pub node_cap: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Exact,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Adaptive,
    Nonadaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Line,
    #[value(alias = "in_arborescence")]
    InArborescence,
    #[value(alias = "out_arborescence")]
    OutArborescence,
    Bipartite,
    General,
}

#[derive(Debug, Args)]
pub struct MethodOpts {
    #[arg(long, value_enum, default_value = "exact")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct LineOpts {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub t: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a graph file.
    Gen {
        #[arg(value_enum)]
        family: Family,
        /// Line instance: seeds budget.
        #[arg(long)]
        k: Option<usize>,
        /// Line instance: segment length.
        #[arg(long)]
        t: Option<usize>,
        /// Node count (trees, general).
        #[arg(long)]
        n: Option<usize>,
        /// Edge count (general).
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        left: Option<usize>,
        #[arg(long)]
        right: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long, default_value_t = 0.0)]
        p_lo: f64,
        #[arg(long, default_value_t = 1.0)]
        p_hi: f64,
        /// Output path; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Influence spread of a seed set.
    Spread {
        file: PathBuf,
        /// Comma-separated node ids.
        #[arg(long, default_value = "")]
        seeds: String,
        #[command(flatten)]
        method: MethodOpts,
    },
    /// Optimal (exact) or best-effort (mc) spread for a budget.
    Opt {
        file: PathBuf,
        #[arg(long)]
        budget: usize,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[command(flatten)]
        method: MethodOpts,
    },
    /// Adaptive versus non-adaptive optimum.
    Gap {
        file: PathBuf,
        #[arg(long)]
        budget: usize,
        #[command(flatten)]
        method: MethodOpts,
    },
    /// Front policy against the non-adaptive optimum on line(k, t).
    Lowerbound(LineOpts),
    /// Multilinear relaxation ratio on line(k, t).
    Mlratio(LineOpts),
    /// Random-walk transform ratio on line(k, t).
    Rwratio(LineOpts),
    /// Poisson-clock seeding with rates x.
    Poisson {
        file: PathBuf,
        /// Comma-separated non-negative rates, one per node.
        #[arg(long)]
        x: String,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Run the invariant suite.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        trials: Option<usize>,
    },
}

/// Process entry point; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    run(args, &mut out)
}

/// Parses `args` and writes the command's output to `out`; diagnostics go to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // help and version are normal output
            if !e.use_stderr() {
                return finish(out, &e.render().to_string(), EXIT_OK);
            }
            eprint!("{}", e.render());
            return EXIT_USAGE;
        }
    };
    let result = match cli.threads {
        Some(0) => Err(AdgapError::invalid("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| AdgapError::invalid(e.to_string()))
            .and_then(|pool| pool.install(|| execute(&cli))),
        None => execute(&cli),
    };
    match result {
        Ok(Output::Text(text)) => finish(out, &text, EXIT_OK),
        Ok(Output::Report(mut report)) => {
            if !cli.deterministic {
                report.stamp_now();
            }
            let code = if report.experiment == "verify" && !report.passed() { EXIT_VIOLATION } else { EXIT_OK };
            let text = if cli.csv {
                Ok(report.to_csv())
            } else {
                report.to_json().map(|mut s| {
                    s.push('\n');
                    s
                })
            };
            match text {
                Ok(t) => finish(out, &t, code),
                Err(e) => fail(&e),
            }
        }
        Err(e) => fail(&e),
    }
}

fn finish(out: &mut dyn Write, text: &str, code: i32) -> i32 {
    if let Err(e) = out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        eprintln!("adgap: {e}");
        return EXIT_USAGE;
    }
    code
}

fn fail(e: &AdgapError) -> i32 {
    eprintln!("adgap: {e}");
    match e {
        AdgapError::CapExceeded { .. } => EXIT_CAP,
        _ => EXIT_USAGE,
    }
}

enum Output {
    Text(String),
    Report(Report),
}

fn caps_of(cli: &Cli) -> Result<Caps> {
    let mut caps = Caps::from_env();
    if let Some(e) = cli.edge_cap {
        caps.edges = e;
    }
    if let Some(n) = cli.node_cap {
        caps.nodes = n;
    }
    if caps.edges == 0 || caps.nodes == 0 {
        return Err(AdgapError::invalid("caps must be at least 1"));
    }
    Ok(caps)
}

fn method_of(opts: &MethodOpts, seed: u64) -> Result<Method> {
    match opts.method {
        MethodArg::Exact => Ok(Method::Exact),
        MethodArg::Mc if opts.samples == 0 => Err(AdgapError::invalid("--samples must be at least 1")),
        MethodArg::Mc => Ok(Method::mc(opts.samples, seed)),
    }
}

fn method_name(m: &Method) -> &'static str {
    match m {
        Method::Exact => "exact",
        Method::MonteCarlo { .. } => "mc",
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| AdgapError::invalid(format!("bad {what} entry {p:?}"))))
        .collect()
}

fn required(v: Option<usize>, flag: &str) -> Result<usize> {
    v.ok_or_else(|| AdgapError::invalid(format!("--{flag} is required for this family")))
}

fn execute(cli: &Cli) -> Result<Output> {
    let caps = caps_of(cli)?;
    let seed = cli.seed;
    let report = match &cli.command {
        Command::Gen { family, k, t, n, m, left, right, density, p_lo, p_hi, output } => {
            let probs = ProbSpec::Range(*p_lo, *p_hi);
            let mut rng = substream(seed, 0);
            let graph = match family {
                Family::Line => make_line_instance(required(*k, "k")?, required(*t, "t")?)?,
                Family::InArborescence | Family::OutArborescence => {
                    let kind = if *family == Family::InArborescence {
                        GraphKind::InArborescence
                    } else {
                        GraphKind::OutArborescence
                    };
                    random_family(kind, FamilyParams::Tree { n: required(*n, "n")? }, &probs, &mut rng)?
                }
                Family::Bipartite => {
                    let params = FamilyParams::Bipartite {
                        left: required(*left, "left")?,
                        right: required(*right, "right")?,
                        density: *density,
                    };
                    random_family(GraphKind::Bipartite, params, &probs, &mut rng)?
                }
                Family::General => {
                    let params = FamilyParams::General { n: required(*n, "n")?, m: required(*m, "m")? };
                    random_family(GraphKind::General, params, &probs, &mut rng)?
                }
            };
            return match output {
                Some(path) => {
                    graph.save(path)?;
                    Ok(Output::Text(String::new()))
                }
                None => Ok(Output::Text(graph.to_json()? + "\n")),
            };
        }
        Command::Spread { file, seeds, method } => {
            let graph = InfluenceGraph::load(file)?;
            let seeds: Vec<NodeId> = parse_list(seeds, "seed")?;
            let m = method_of(method, seed)?;
            let est = spread(&graph, &seeds, m, &caps)?;
            let mut r = graph_header("spread", seed, &graph).param("seeds", seeds).param("method", method_name(&m));
            let mut row = Row::new("spread", est.value).method(est.method.label());
            if !matches!(m, Method::Exact) {
                row.stderr = Some(est.stderr);
            }
            r.push(row);
            r
        }
        Command::Opt { file, budget, mode, method } => {
            let graph = InfluenceGraph::load(file)?;
            let m = method_of(method, seed)?;
            let mut r = graph_header("opt", seed, &graph)
                .param("budget", *budget)
                .param("mode", if *mode == ModeArg::Adaptive { "adaptive" } else { "nonadaptive" })
                .param("method", method_name(&m));
            match (mode, m) {
                (ModeArg::Nonadaptive, Method::Exact) => {
                    let res = opt_n_exact(&graph, *budget, &caps)?;
                    r = r.param("witness", res.seeds().unwrap_or_default().to_vec());
                    r.push(Row::new("opt_n", res.value).method("exact"));
                }
                (ModeArg::Adaptive, Method::Exact) => {
                    let res = opt_a_exact(&graph, *budget, &caps)?;
                    if let Witness::Policy(p) = &res.witness {
                        r = r.param("policy_states", p.states());
                    }
                    r.push(Row::new("opt_a", res.value).method("exact"));
                }
                (ModeArg::Nonadaptive, Method::MonteCarlo { samples, seed: s }) => {
                    let seeds = nonadaptive_greedy(&graph, *budget, m, &caps)?;
                    let est = spread_mc(&graph, &seeds, samples, s.wrapping_add(1))?;
                    r = r.param("witness", seeds);
                    r.push(Row::new("opt_n", est.value).stderr(est.stderr).method("lower_bound").note("greedy"));
                }
                (ModeArg::Adaptive, Method::MonteCarlo { seed: s, .. }) => {
                    let est = if graph.line_order().is_some() {
                        policy_spread(&graph, &FrontPolicy::budgeted(*budget), *budget, m, &caps)?
                    } else {
                        let inner = if graph.edge_count() <= caps.edges { Method::Exact } else { Method::mc(256, s) };
                        policy_spread(&graph, &adaptive_greedy_policy(inner, caps), *budget, m, &caps)?
                    };
                    r.push(Row::new("opt_a", est.value).stderr(est.stderr).method("lower_bound"));
                }
            }
            r
        }
        Command::Gap { file, budget, method } => {
            let graph = InfluenceGraph::load(file)?;
            let m = method_of(method, seed)?;
            measure_gap(&graph, *budget, m, &caps)?.to_report(seed).param("method", method_name(&m))
        }
        Command::Lowerbound(o) => lower_bound_experiment(o.k, o.t, o.samples, seed)?,
        Command::Mlratio(o) => multilinear_ratio_experiment(o.k, o.t, o.samples, seed)?,
        Command::Rwratio(o) => random_walk_ratio_experiment(o.k, o.t, o.samples, seed)?,
        Command::Poisson { file, x, samples } => {
            let graph = InfluenceGraph::load(file)?;
            let rates: Vec<f64> = parse_list(x, "rate")?;
            poisson_report(&graph, &rates, *samples, seed, &caps)?
        }
        Command::Verify { suite, trials } => {
            let opts = SuiteOptions {
                trials: *trials,
                only: (suite != "all").then(|| suite.clone()),
                inject_bug: false,
                caps,
            };
            invariant_suite(seed, &opts)?
        }
    };
    Ok(Output::Report(report))
}

fn graph_header(experiment: &str, seed: u64, graph: &InfluenceGraph) -> Report {
    Report::new(experiment, seed)
        .param("kind", graph.kind().as_str())
        .param("nodes", graph.node_count())
        .param("edges", graph.edge_count())
}

/// Sampled `E[f(Psi(1))]` of the Poisson-clock process, checked against the exact
/// value and the multilinear extension at `1 - exp(-x)` when enumeration is feasible.
fn poisson_report(graph: &InfluenceGraph, rates: &[f64], samples: usize, seed: u64, caps: &Caps) -> Result<Report> {
    if samples == 0 {
        return Err(AdgapError::invalid("--samples must be at least 1"));
    }
    if rates.len() != graph.node_count() {
        return Err(AdgapError::invalid("--x needs one rate per node"));
    }
    let parts = mc::run_chunks(samples, seed, |rng, len| -> Result<Moments> {
        let mut m = Moments::default();
        for _ in 0..len {
            let live = cascade::sample_live_edges(graph, rng);
            m.push(poisson_process_run(graph, rates, &live, &[], rng)?.final_value as f64);
        }
        Ok(m)
    });
    let mut m = Moments::default();
    for p in parts {
        m.merge(&p?);
    }
    let mut r = graph_header("poisson", seed, graph).param("x", rates.to_vec()).param("samples", samples);
    let exact = poisson_expected_exact(graph, rates, caps).ok();
    let mut row = Row::new("poisson_mc", m.mean).stderr(m.stderr()).method("monte_carlo");
    if let Some(e) = exact {
        row = row.bound(e).pass((m.mean - e).abs() <= (4.0 * m.stderr()).max(1e-9));
    }
    r.push(row);
    if let Some(e) = exact {
        r.push(Row::new("poisson_exact", e).method("exact"));
        let y: Vec<f64> = rates.iter().map(|v| -(-v).exp_m1()).collect();
        if let Ok(f) = multilinear_exact(graph, &y, caps) {
            r.push(Row::new("multilinear_transformed", f).bound(e).pass((f - e).abs() <= 1e-9).method("exact"));
        }
    }
    Ok(r)
}
