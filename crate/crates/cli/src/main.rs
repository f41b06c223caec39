use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use qdcc::anneal::AnnealParams;
use qdcc::bench::{generate, Family};
use qdcc::expand::to_sim_ops;
use qdcc::partition::Mapping;
use qdcc::pipeline::{
    baseline_compile, baseline_evaluate, compile, evaluate, size_buffers, Options, Pipeline, Report, SCHEMA_VERSION,
};
use qdcc::route::Routing;
use qdcc::schedule::{compare_metrics, EprTiming, Metrics};
use qdcc::verify::check_equivalence;
use qdcc::{Circuit, Error, HardwareModel};

/// Exit codes, one per failure class.
mod code {
    pub const OTHER: u8 = 1;
    pub const PARSE: u8 = 3;
    pub const CAPACITY: u8 = 4;
    pub const ROUTING: u8 = 5;
    pub const CONFIG: u8 = 6;
    pub const MISMATCH: u8 = 7;
}

#[derive(Parser)]
#[command(name = "qdcc", version, about = "Compiler for distributed quantum circuits on clustered ion-trap networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a benchmark circuit.
    Gen {
        family: FamilyArg,
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compile a circuit and print a JSON report.
    Compile {
        circuit: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        opts: CompileArgs,
        /// Also run the baseline and add the comparison fields.
        #[arg(long)]
        compare_baseline: bool,
        /// Report file; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Write the annealing run log here as CSV.
        #[arg(long)]
        anneal_log: Option<PathBuf>,
        /// Fix the node of every qubit, e.g. `0,1,2,2`, instead of searching
        /// for a placement. Disables annealing.
        #[arg(long, value_delimiter = ',')]
        placement: Vec<usize>,
    },
    /// Compile a small circuit and check it against the input by simulation.
    Verify {
        circuit: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        opts: CompileArgs,
        /// Random input states to try.
        #[arg(long, default_value_t = 20)]
        states: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Run every family at every size under both pipelines.
    BenchSuite {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        opts: CompileArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [100, 200, 300])]
        sizes: Vec<u32>,
        #[arg(long, value_delimiter = ',')]
        families: Vec<FamilyArg>,
        /// Print an aligned text table instead of JSON.
        #[arg(long)]
        table: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(multiple = false)]
struct ModelArgs {
    /// Hardware model as TOML.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Two clusters of four nodes, 40 data and 1 communication qubit each.
    /// Used when no model file is given.
    #[arg(long)]
    default_model: bool,
}

impl ModelArgs {
    fn load(&self) -> anyhow::Result<HardwareModel> {
        match &self.model {
            Some(p) => Ok(HardwareModel::load(&read(p)?)?),
            None => Ok(HardwareModel::default_model()),
        }
    }
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long, value_enum, default_value_t = PipelineArg::Collcomm)]
    pipeline: PipelineArg,
    #[arg(long)]
    no_fusion: bool,
    #[arg(long)]
    no_split: bool,
    #[arg(long)]
    no_lazy: bool,
    #[arg(long, value_enum, default_value_t = RoutingArg::Mst)]
    routing: RoutingArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Annealing iterations per phase; 0 keeps the initial mapping.
    #[arg(long, default_value_t = 0)]
    anneal_iters: usize,
    #[arg(long, default_value_t = AnnealParams::default().alpha)]
    anneal_alpha: f64,
    /// Use the decoherence factor 1 - e^(-t/T) instead of e^(-t/T).
    #[arg(long)]
    cost_as_printed: bool,
    /// When EPR pairs are generated.
    #[arg(long, value_enum, default_value_t = TimingArg::Prefilled)]
    epr_timing: TimingArg,
}

impl CompileArgs {
    fn options(&self) -> Options {
        let mut o = Options {
            pipeline: match self.pipeline {
                PipelineArg::Collcomm => Pipeline::Collcomm,
                PipelineArg::Baseline => Pipeline::Baseline,
            },
            fusion: !self.no_fusion,
            split: !self.no_split,
            lazy: !self.no_lazy,
            routing: match self.routing {
                RoutingArg::Mst => Routing::Mst,
                RoutingArg::Shortest => Routing::Shortest,
                RoutingArg::Parallel => Routing::Parallel,
            },
            anneal: AnnealParams { iters: self.anneal_iters, alpha: self.anneal_alpha, seed: self.seed },
            cost_as_printed: self.cost_as_printed,
            ..Options::default()
        };
        o.sched.epr = match self.epr_timing {
            TimingArg::Prefilled => EprTiming::Prefilled,
            TimingArg::Pipelined => EprTiming::Pipelined,
        };
        o
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    Collcomm,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoutingArg {
    Mst,
    Shortest,
    Parallel,
}

#[derive(Clone, Copy, ValueEnum)]
enum TimingArg {
    Prefilled,
    Pipelined,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Mctr,
    Rca,
    Csp,
    Qft,
    Bv,
    Qaoa,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::Mctr => Family::Mctr,
            FamilyArg::Rca => Family::Rca,
            FamilyArg::Csp => Family::Csp,
            FamilyArg::Qft => Family::Qft,
            FamilyArg::Bv => Family::Bv,
            FamilyArg::Qaoa => Family::Qaoa,
        }
    }
}

fn read(p: &Path) -> anyhow::Result<String> {
    fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn fixed_mapping(c: &Circuit, model: &HardwareModel, nodes: Vec<usize>) -> qdcc::Result<Mapping> {
    let nn = model.num_nodes();
    if nodes.len() != c.num_qubits as usize {
        return Err(Error::Invalid(format!("placement lists {} qubits, circuit has {}", nodes.len(), c.num_qubits)));
    }
    if let Some(v) = nodes.iter().find(|&&v| v >= nn) {
        return Err(Error::Invalid(format!("placement names node {v}, model has {nn}")));
    }
    let mut m = Mapping::from_nodes(nodes, nn);
    m.validate(model)?;
    m.s = size_buffers(c, model, &m);
    Ok(m)
}

fn row(m: &Metrics) -> serde_json::Value {
    json!({
        "nodes": m.nodes,
        "avg_cb": m.avg_buffer,
        "epr": m.epr(),
        "cross_epr": m.n_oep,
        "latency": m.latency,
        "fidelity": m.fidelity,
        "log_fidelity": m.log_fidelity,
    })
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.cmd {
        Cmd::Gen { family, n, seed, output } => {
            let c = generate(family.into(), n, seed)?;
            emit(output.as_deref(), &c.to_text())?;
        }
        Cmd::Compile { circuit, model, opts, compare_baseline, output, anneal_log, placement } => {
            let c = Circuit::parse(&read(&circuit)?)?;
            let model = model.load()?;
            let o = opts.options();
            let (r, base) = if placement.is_empty() {
                let base = if compare_baseline { Some(baseline_compile(&c, &model, &o)?) } else { None };
                (compile(&c, &model, &o)?, base)
            } else {
                let m = fixed_mapping(&c, &model, placement)?;
                let ours = match o.pipeline {
                    Pipeline::Collcomm => evaluate(&c, &model, &m, &o)?,
                    Pipeline::Baseline => baseline_evaluate(&c, &model, &m, &o)?,
                };
                let base = if compare_baseline { Some(baseline_evaluate(&c, &model, &m, &o)?) } else { None };
                (ours, base)
            };
            if let Some(p) = anneal_log {
                let csv = r.anneal.as_ref().map(|t| t.to_csv()).unwrap_or_default();
                fs::write(&p, csv).with_context(|| format!("cannot write {}", p.display()))?;
            }
            let mut text = Report::new(&c, &o, &r, base.as_ref()).to_json();
            text.push('\n');
            emit(output.as_deref(), &text)?;
        }
        Cmd::Verify { circuit, model, opts, states, tol } => {
            let c = Circuit::parse(&read(&circuit)?)?;
            let model = model.load()?;
            let o = opts.options();
            let r = compile(&c, &model, &o)?;
            let eq = check_equivalence(&c, &to_sim_ops(&r.expanded), &r.expanded.outputs, states, o.anneal.seed)?;
            let ok = eq.holds(tol);
            let out = json!({
                "schema_version": SCHEMA_VERSION,
                "equivalent": ok,
                "states": eq.states,
                "branches": eq.branches,
                "max_error": eq.max_error,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            if !ok {
                return Ok(code::MISMATCH);
            }
        }
        Cmd::BenchSuite { model, opts, sizes, families, table, output } => {
            let model = model.load()?;
            let o = Options { pipeline: Pipeline::Collcomm, ..opts.options() };
            let families: Vec<Family> =
                if families.is_empty() { Family::ALL.to_vec() } else { families.into_iter().map(Family::from).collect() };
            let mut rows = Vec::new();
            for f in families {
                for &n in &sizes {
                    let c = generate(f, n, o.anneal.seed)?;
                    let ours = compile(&c, &model, &o).with_context(|| format!("{f}({n})"))?;
                    let base = baseline_compile(&c, &model, &o).with_context(|| format!("{f}({n}) baseline"))?;
                    rows.push((f, n, ours.metrics, base.metrics));
                }
            }
            let text = if table { render_table(&rows) } else { render_json(&rows)? };
            emit(output.as_deref(), &text)?;
        }
    }
    Ok(0)
}

fn render_json(rows: &[(Family, u32, Metrics, Metrics)]) -> anyhow::Result<String> {
    let rows: Vec<_> = rows
        .iter()
        .map(|(f, n, ours, base)| {
            json!({
                "family": f.as_str(),
                "n": n,
                "collcomm": row(ours),
                "baseline": row(base),
                "comparison": compare_metrics(ours, base),
            })
        })
        .collect();
    let doc = json!({ "schema_version": SCHEMA_VERSION, "rows": rows });
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

fn render_table(rows: &[(Family, u32, Metrics, Metrics)]) -> String {
    let pct = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.1}%", 100.0 * v));
    let mut s = format!(
        "{:<6} {:>4} {:>5} {:>6} {:>5} {:>6} {:>10} | {:>5} {:>6} {:>10} | {:>8} {:>8} {:>8} {:>10}\n",
        "name", "n", "nodes", "avg_cb", "epr", "cross", "latency", "b_epr", "b_cross", "b_latency", "epr_dec", "cross_dec",
        "lat_dec", "fd_inc"
    );
    for (f, n, m, b) in rows {
        let cmp = compare_metrics(m, b);
        s.push_str(&format!(
            "{:<6} {:>4} {:>5} {:>6.1} {:>5} {:>6} {:>10.1} | {:>5} {:>6} {:>10.1} | {:>8} {:>8} {:>8} {:>10}\n",
            f.as_str(),
            n,
            m.nodes,
            m.avg_buffer,
            m.epr(),
            m.n_oep,
            m.latency,
            b.epr(),
            b.n_oep,
            b.latency,
            pct(cmp.epr_dec),
            pct(cmp.cross_dec),
            pct(cmp.lat_dec),
            cmp.fd_inc.map_or("-".to_string(), |v| format!("{v:.3e}")),
        ));
    }
    s
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::Parse { .. }) => code::PARSE,
        Some(Error::Capacity(_)) => code::CAPACITY,
        Some(Error::Routing(_)) => code::ROUTING,
        Some(Error::Config(_) | Error::Invalid(_)) => code::CONFIG,
        _ => code::OTHER,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_distinct_codes() {
        let codes: Vec<u8> = [
            Error::Parse { line: 1, msg: "x".into() },
            Error::Capacity("x".into()),
            Error::Routing("x".into()),
            Error::Config("x".into()),
        ]
        .into_iter()
        .map(|e| exit_code(&anyhow::Error::from(e).context("while compiling")))
        .collect();
        assert_eq!(codes, [code::PARSE, code::CAPACITY, code::ROUTING, code::CONFIG]);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), code::OTHER);
    }

    #[test]
    fn flags_reach_options() {
        let cli = Cli::parse_from(["qdcc", "compile", "a.qc", "--no-split", "--routing", "shortest", "--seed", "9"]);
        let Cmd::Compile { opts, .. } = cli.cmd else { panic!() };
        let o = opts.options();
        assert!(!o.split && o.fusion && o.lazy);
        assert_eq!(o.routing, Routing::Shortest);
        assert_eq!(o.anneal.seed, 9);
    }
}
