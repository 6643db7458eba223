//! Model extraction: enumerate consistent solutions, reduce each by pinning
//! edges to zero, and keep the smallest.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ExtractError;
use crate::graph::{CausalityGraph, Edge, WindowPolicy};
use crate::message::MessageTable;
use crate::slicer::{slice_all, SliceSpec};
use crate::solver::{build_constraints, ConstraintProblem, Solution, SolverConfig, ValueOrder};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionOrder {
    /// Weakest observed evidence first.
    #[default]
    AscendingSupport,
    DescendingSupport,
    InputOrder,
}

impl fmt::Display for ReductionOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReductionOrder::AscendingSupport => "ascending-support",
            ReductionOrder::DescendingSupport => "descending-support",
            ReductionOrder::InputOrder => "input-order",
        })
    }
}

impl FromStr for ReductionOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ascending-support" => Ok(ReductionOrder::AscendingSupport),
            "descending-support" => Ok(ReductionOrder::DescendingSupport),
            "input-order" => Ok(ReductionOrder::InputOrder),
            _ => Err(format!("unknown reduction order {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub sz: usize,
    pub top: usize,
    pub reduction_order: ReductionOrder,
    /// Shuffles the solver's value order; `None` keeps it deterministic
    /// descending.
    pub seed: Option<u64>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig { sz: 200, top: 20, reduction_order: ReductionOrder::AscendingSupport, seed: None }
    }
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<(), ExtractError> {
        if self.top == 0 || self.top > self.sz {
            return Err(ExtractError::Config(format!(
                "need 1 <= top <= sz, got top = {} and sz = {}",
                self.top, self.sz
            )));
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            value_order: match self.seed {
                Some(s) => ValueOrder::Shuffled(s),
                None => ValueOrder::Descending,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reduction {
    pub solution: Solution,
    /// Edges pinned to zero when the reduction stopped.
    pub pinned: BTreeSet<Edge>,
    /// Successful pin steps.
    pub steps: usize,
}

fn ordered_candidates(p: &ConstraintProblem, sol: &Solution, order: ReductionOrder) -> Vec<Edge> {
    let mut vars: Vec<(usize, Edge, u64)> = p
        .vars()
        .iter()
        .enumerate()
        .filter(|(_, v)| sol.get(v.edge) > 0)
        .map(|(i, v)| (i, v.edge, v.upper))
        .collect();
    match order {
        ReductionOrder::AscendingSupport => vars.sort_by_key(|(i, _, s)| (*s, *i)),
        ReductionOrder::DescendingSupport => vars.sort_by_key(|(i, _, s)| (std::cmp::Reverse(*s), *i)),
        ReductionOrder::InputOrder => {}
    }
    vars.into_iter().map(|(_, e, _)| e).collect()
}

/// Repeatedly zeroes one more non-zero edge of the current solution while the
/// problem stays feasible.
///
/// Each step pins every edge that is already zero together with one
/// candidate, trying candidates in `order`; the reduction stops once no
/// candidate can be pinned. The result satisfies `p` and no single non-zero
/// edge of it can be zeroed on top of its own zero set.
pub fn reduce_model(
    p: &ConstraintProblem,
    sol: &Solution,
    order: ReductionOrder,
) -> Result<Reduction, ExtractError> {
    reduce_model_with(p, sol, order, SolverConfig::default())
}

pub fn reduce_model_with(
    p: &ConstraintProblem,
    sol: &Solution,
    order: ReductionOrder,
    cfg: SolverConfig,
) -> Result<Reduction, ExtractError> {
    p.check(sol)?;
    let mut current = sol.clone();
    let mut steps = 0;
    loop {
        let zeros: Vec<Edge> = p.vars().iter().map(|v| v.edge).filter(|e| current.get(*e) == 0).collect();
        let base = p.pin_zeros(zeros.iter().copied())?;
        let mut next = None;
        for cand in ordered_candidates(p, &current, order) {
            if let Some(s) = base.pin_zero(cand)?.solve_with(cfg) {
                next = Some(s);
                break;
            }
        }
        match next {
            Some(s) => {
                current = s;
                steps += 1;
            }
            None => return Ok(Reduction { solution: current, pinned: zeros.into_iter().collect(), steps }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub initial_size: usize,
    pub reduced_size: usize,
    pub pins: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub best: Solution,
    pub top_k: Vec<Solution>,
    /// Distinct reduced solutions found.
    pub distinct: usize,
    pub candidates: Vec<CandidateReport>,
}

fn rank_key(s: &Solution) -> (usize, Vec<Edge>, Vec<(Edge, u64)>) {
    (s.size(), s.nonzero_edges(), s.assignment().iter().map(|(e, v)| (*e, *v)).collect())
}

/// Enumerates up to `cfg.sz` solutions of `p`, reduces each, and ranks the
/// distinct reduced solutions by size, then by their sorted non-zero edges.
pub fn model_extract(p: &ConstraintProblem, cfg: &ExtractConfig) -> Result<Extraction, ExtractError> {
    cfg.validate()?;
    let scfg = cfg.solver_config();
    let initial = p.enumerate_with(cfg.sz, scfg);
    if initial.is_empty() {
        return Err(ExtractError::Infeasible);
    }
    let reduced: Vec<Reduction> = initial
        .par_iter()
        .map(|s| reduce_model_with(p, s, cfg.reduction_order, scfg))
        .collect::<Result<_, _>>()?;

    let candidates = initial
        .iter()
        .zip(&reduced)
        .map(|(s, r)| CandidateReport {
            initial_size: s.size(),
            reduced_size: r.solution.size(),
            pins: r.pinned.len(),
            steps: r.steps,
        })
        .collect();
    let mut ranked: Vec<(_, Solution)> =
        reduced.into_iter().map(|r| (rank_key(&r.solution), r.solution)).collect();
    ranked.sort_by(|a, b| a.0.cmp(&b.0));
    ranked.dedup_by(|a, b| a.0 == b.0);
    let distinct = ranked.len();
    let top_k: Vec<Solution> = ranked.into_iter().take(cfg.top).map(|(_, s)| s).collect();
    Ok(Extraction { best: top_k[0].clone(), top_k, distinct, candidates })
}

/// Causality graph over `traces`. Node supports count the unsliced traces;
/// edge supports are counted per slice of `slices` (or per whole trace) under
/// `window`.
pub fn annotated_graph(
    table: &MessageTable,
    traces: &[Trace],
    window: WindowPolicy,
    slices: Option<&SliceSpec>,
) -> Result<CausalityGraph, ExtractError> {
    let mut g = CausalityGraph::from_traces(table, traces);
    for t in traces {
        let nodes = g.node_support_deltas(t)?;
        g.add_node_supports(&nodes);
        let parts = match slices {
            Some(spec) => slice_all(t, spec)?,
            None => vec![t.clone()],
        };
        let deltas =
            parts.par_iter().map(|s| g.edge_support_deltas(s, window)).collect::<Result<Vec<_>, _>>()?;
        for d in &deltas {
            g.add_edge_supports(d);
        }
    }
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct WindowedExtraction {
    pub window: usize,
    pub graph: CausalityGraph,
    pub problem: ConstraintProblem,
    pub extraction: Extraction,
}

/// Tries windows `0, 1, .., max_w` and returns the first whose problem is
/// feasible, with its extraction.
pub fn auto_window(
    table: &MessageTable,
    traces: &[Trace],
    slices: Option<&SliceSpec>,
    cfg: &ExtractConfig,
    max_w: usize,
) -> Result<WindowedExtraction, ExtractError> {
    cfg.validate()?;
    for w in 0..=max_w {
        let graph = annotated_graph(table, traces, WindowPolicy::Fixed(w), slices)?;
        let problem = build_constraints(&graph);
        match model_extract(&problem, cfg) {
            Ok(extraction) => {
                log::info!("window {w} is feasible");
                return Ok(WindowedExtraction { window: w, graph, problem, extraction });
            }
            Err(ExtractError::Infeasible) => log::debug!("window {w} is infeasible"),
            Err(e) => return Err(e),
        }
    }
    Err(ExtractError::NoFeasibleWindow { max_w })
}
