//! End-to-end compilation: placement, buffer sizing, communication
//! transformation, expansion, scheduling and metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::anneal::{anneal_two_phase, AnnealParams, Trace};
use crate::baseline::burst_aggregate;
use crate::bench::{counts, BenchCounts};
use crate::buffer::{buffer_size_init, neighbor_buffer, shrink_proportional, BlockProfile};
use crate::cost::CostParams;
use crate::error::{Error, Result};
use crate::expand::{expand, Expanded};
use crate::hw::HardwareModel;
use crate::ir::{Circuit, GateKind, NodeId};
use crate::lower::lowered_duration;
use crate::partition::{interaction_graph, neighbor_mapping, oee_partition, Mapping};
use crate::program::{Ctx, Program, Seg, SplitMode};
use crate::route::{Router, Routing};
use crate::schedule::{compare_metrics, compute_metrics, schedule, Comparison, Metrics, SchedOptions, Schedule};
use crate::transform::{fixpoint, replan};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    #[default]
    Collcomm,
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Options {
    pub pipeline: Pipeline,
    pub fusion: bool,
    pub split: bool,
    pub lazy: bool,
    pub routing: Routing,
    pub anneal: AnnealParams,
    pub cost_as_printed: bool,
    pub sched: SchedOptions,
}

impl Default for Options {
    fn default() -> Options {
        Options {
            pipeline: Pipeline::Collcomm,
            fusion: true,
            split: true,
            lazy: true,
            routing: Routing::Mst,
            anneal: AnnealParams { iters: 0, ..AnnealParams::default() },
            cost_as_printed: false,
            sched: SchedOptions::default(),
        }
    }
}

impl Options {
    pub fn cost(&self, model: &HardwareModel) -> CostParams {
        CostParams { as_printed: self.cost_as_printed, ..CostParams::from_timing(&model.timing) }
    }
}

#[derive(Clone, Debug)]
pub struct Compiled {
    pub mapping: Mapping,
    pub program: Program,
    pub expanded: Expanded,
    pub schedule: Schedule,
    pub metrics: Metrics,
    /// EPR cost estimate after each accepted transformation stage.
    pub trace: Vec<f64>,
    pub anneal: Option<Trace>,
}

/// Free data slots kept per node by the initial placement.
const RESERVE: usize = 1;

fn reserve_for(circ: &Circuit, model: &HardwareModel) -> Result<usize> {
    let total = model.total_data_qubits();
    let n = circ.num_qubits as usize;
    if n > total {
        return Err(Error::Capacity(format!("{n} qubits do not fit in {total} data qubits")));
    }
    let with_reserve: usize = model.nodes.iter().map(|s| s.data_qubits.saturating_sub(RESERVE)).sum();
    Ok(if n <= with_reserve { RESERVE } else { 0 })
}

/// Initial placement: contiguous fill refined by exchanges.
pub fn initial_mapping(circ: &Circuit, model: &HardwareModel) -> Result<Mapping> {
    let reserve = reserve_for(circ, model)?;
    oee_partition(&interaction_graph(circ), model, reserve)
}

/// Remote blocks of the burst-aggregated circuit with their dependency
/// levels and serial local latency.
pub fn block_profiles(circ: &Circuit, model: &HardwareModel, m: &Mapping) -> Vec<BlockProfile> {
    let t = &model.timing;
    let prog = burst_aggregate(circ, m);
    let mut level_of = vec![0usize; circ.num_qubits as usize];
    let mut out = Vec::new();
    for seg in &prog.segs {
        let Seg::Block(b) = seg else { continue };
        let qs = b.qubits();
        let level = qs.iter().map(|&q| level_of[q as usize]).max().unwrap_or(0);
        for &q in &qs {
            level_of[q as usize] = level + 1;
        }
        let t_b = b
            .gates
            .iter()
            .map(|g| match g.kind {
                GateKind::Mcx { controls } => lowered_duration(controls as usize, 0, t.t_1q, t.t_2q),
                GateKind::Measure { .. } => t.t_ms,
                _ if g.is_multi() => t.t_2q,
                _ => t.t_1q,
            })
            .sum();
        let nodes: BTreeSet<NodeId> = qs.iter().map(|&q| m.node_of[q as usize]).collect();
        out.push(BlockProfile { nodes, t_b, level });
    }
    out
}

/// Initial buffer sizes, clamped to each node's free data qubits and scaled
/// to the idle-qubit budget.
pub fn size_buffers(circ: &Circuit, model: &HardwareModel, m: &Mapping) -> Vec<usize> {
    let profiles = block_profiles(circ, model, m);
    let nn = model.num_nodes();
    let t_ep = |b: &BlockProfile| {
        let inter = b.nodes.iter().any(|&x| b.nodes.iter().any(|&y| !model.same_cluster(x, y)));
        if inter {
            model.timing.t_oep
        } else {
            model.timing.t_iep
        }
    };
    let counts = m.counts();
    let caps: Vec<usize> = (0..nn).map(|v| model.nodes[v].data_qubits.saturating_sub(counts[v])).collect();
    let raw: Vec<usize> = (0..nn).map(|v| buffer_size_init(v, &profiles, t_ep).min(caps[v])).collect();
    let keep: Vec<bool> = raw.iter().map(|&x| x > 0).collect();
    shrink_proportional(&raw, m.n_idleq(model), &keep, &caps)
}

fn ctx_for<'a>(model: &'a HardwareModel, router: &'a Router, s: Vec<usize>, o: &Options) -> Ctx<'a> {
    Ctx {
        lazy: o.lazy,
        split: if o.split { SplitMode::Collective } else { SplitMode::Basis },
        ..Ctx::new(model, router, s)
    }
}

/// Everything downstream of placement and buffer sizes.
pub fn evaluate(circ: &Circuit, model: &HardwareModel, m: &Mapping, o: &Options) -> Result<Compiled> {
    let router = Router::new(model, o.routing);
    let ctx = ctx_for(model, &router, m.s.clone(), o);
    let (program, trace) = fixpoint(&ctx, &burst_aggregate(circ, m), o.fusion)?;
    finish(model, m.clone(), program, trace, o)
}

fn finish(model: &HardwareModel, mapping: Mapping, program: Program, trace: Vec<f64>, o: &Options) -> Result<Compiled> {
    let expanded = expand(model, &mapping.s, &program)?;
    let schedule = schedule(&expanded, model, &o.sched);
    let metrics = compute_metrics(&expanded, &schedule, &o.cost(model));
    Ok(Compiled { mapping, program, expanded, schedule, metrics, trace, anneal: None })
}

/// The full pipeline, annealing over buffer sizes then placement when
/// `o.anneal.iters > 0`.
pub fn compile(circ: &Circuit, model: &HardwareModel, o: &Options) -> Result<Compiled> {
    circ.validate()?;
    if o.pipeline == Pipeline::Baseline {
        return baseline_compile(circ, model, o);
    }
    let mut m = initial_mapping(circ, model)?;
    m.s = size_buffers(circ, model, &m);
    let first = evaluate(circ, model, &m, o)?;
    if o.anneal.iters == 0 {
        return Ok(first);
    }
    let reserve = reserve_for(circ, model)?;
    let caps = |m: &Mapping| -> Vec<usize> {
        let c = m.counts();
        (0..model.num_nodes()).map(|v| model.nodes[v].data_qubits.saturating_sub(c[v])).collect()
    };
    let energy = |s: &Vec<usize>, m: &Mapping| -> f64 {
        let mut m = m.clone();
        m.s = s.clone();
        evaluate(circ, model, &m, o).map(|c| c.metrics.energy).unwrap_or(f64::INFINITY)
    };
    let (s, m, _, trace) = anneal_two_phase(
        m.s.clone(),
        m.clone(),
        &o.anneal,
        |s, m, seed| neighbor_buffer(s, &caps(m), m.n_idleq(model), seed),
        |s, m, seed| {
            let mut x = m.clone();
            x.s = s.clone();
            let mut y = neighbor_mapping(&x, model, reserve, seed);
            y.s = s.clone();
            y
        },
        energy,
    );
    let mut best_m = m;
    best_m.s = s;
    let mut best = evaluate(circ, model, &best_m, o)?;
    if best.metrics.energy > first.metrics.energy {
        best = first;
    }
    best.anneal = Some(trace);
    Ok(best)
}

/// Burst aggregation only: no buffer, no fusion, shortest-path relays and
/// every teleported qubit returns home. Multi-controlled gates still get the
/// one-ancilla split, within what the communication qubits alone can hold.
pub fn baseline_compile(circ: &Circuit, model: &HardwareModel, o: &Options) -> Result<Compiled> {
    circ.validate()?;
    let m = initial_mapping(circ, model)?;
    baseline_evaluate(circ, model, &m, o)
}

/// The baseline on a fixed placement; buffer sizes in `m` are ignored.
pub fn baseline_evaluate(circ: &Circuit, model: &HardwareModel, m: &Mapping, o: &Options) -> Result<Compiled> {
    let mut m = m.clone();
    m.s = vec![0; model.num_nodes()];
    let router = Router::new(model, Routing::Shortest);
    let ctx = Ctx { lazy: false, ..Ctx::new(model, &router, m.s.clone()) };
    let program = replan(&ctx, &burst_aggregate(circ, &m))?;
    let trace = vec![ctx.cost(&program)];
    finish(model, m, program, trace, o)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node: NodeId,
    pub program_qubits: usize,
    pub buffer: usize,
    pub peak_buffered: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub pipeline: Pipeline,
    pub circuit: BenchCounts,
    pub options: Options,
    pub nodes: Vec<NodeReport>,
    pub blocks: usize,
    pub estimate_trace: Vec<f64>,
    pub metrics: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
}

impl Report {
    pub fn new(circ: &Circuit, o: &Options, c: &Compiled, base: Option<&Compiled>) -> Report {
        let counts_per = c.mapping.counts();
        let nodes = (0..counts_per.len())
            .map(|v| NodeReport {
                node: v,
                program_qubits: counts_per[v],
                buffer: c.mapping.s[v],
                peak_buffered: c.expanded.peak_buffer[v],
            })
            .collect();
        Report {
            schema_version: SCHEMA_VERSION,
            pipeline: o.pipeline,
            circuit: counts(circ),
            options: o.clone(),
            nodes,
            blocks: c.program.blocks().count(),
            estimate_trace: c.trace.clone(),
            metrics: c.metrics.clone(),
            baseline: base.map(|b| b.metrics.clone()),
            comparison: base.map(|b| compare_metrics(&c.metrics, &b.metrics)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
