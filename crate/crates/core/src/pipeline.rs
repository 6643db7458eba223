//! End-to-end mining: traces in, best model out.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::extract::{annotated_graph, auto_window, model_extract, ExtractConfig, Extraction};
use crate::fsa::{derive_fsa, Fsa};
use crate::graph::{CausalityGraph, WindowPolicy};
use crate::message::MessageTable;
use crate::slicer::SliceSpec;
use crate::solver::{build_constraints, ConstraintProblem};
use crate::trace::Trace;

pub const DEFAULT_MAX_WINDOW: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowMode {
    /// Smallest feasible fixed window up to the configured maximum.
    #[default]
    Auto,
    Off,
    Fixed(usize),
}

impl fmt::Display for WindowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowMode::Auto => f.write_str("auto"),
            WindowMode::Off => f.write_str("off"),
            WindowMode::Fixed(w) => write!(f, "{w}"),
        }
    }
}

impl FromStr for WindowMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(WindowMode::Auto),
            "off" | "unbounded" => Ok(WindowMode::Off),
            n => n
                .parse()
                .map(WindowMode::Fixed)
                .map_err(|_| format!("window must be auto, off or a number, got {n:?}")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MineConfig {
    pub window: WindowMode,
    pub max_window: Option<usize>,
    pub slices: Option<SliceSpec>,
    pub extract: ExtractConfig,
}

#[derive(Debug, Clone)]
pub struct MineResult {
    pub window: WindowPolicy,
    pub graph: CausalityGraph,
    pub problem: ConstraintProblem,
    pub extraction: Extraction,
    pub model: Fsa,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MineSummary {
    pub window: Option<usize>,
    pub nodes: usize,
    pub edges: usize,
    pub best_size: usize,
    pub distinct_reduced: usize,
    pub candidates: usize,
    pub states: usize,
    pub transitions: usize,
}

impl MineResult {
    pub fn summary(&self) -> MineSummary {
        MineSummary {
            window: match self.window {
                WindowPolicy::Unbounded => None,
                WindowPolicy::Fixed(w) => Some(w),
            },
            nodes: self.graph.nodes().len(),
            edges: self.graph.edges().len(),
            best_size: self.extraction.best.size(),
            distinct_reduced: self.extraction.distinct,
            candidates: self.extraction.candidates.len(),
            states: self.model.states().len(),
            transitions: self.model.transition_count(),
        }
    }
}

pub fn mine(table: &MessageTable, traces: &[Trace], cfg: &MineConfig) -> Result<MineResult, Error> {
    if traces.iter().all(Trace::is_empty) {
        return Err(Error::Input("no messages to mine".into()));
    }
    cfg.extract.validate()?;
    let slices = cfg.slices.as_ref();
    let (window, graph, problem, extraction) = match cfg.window {
        WindowMode::Auto => {
            let max_w = cfg.max_window.unwrap_or(DEFAULT_MAX_WINDOW);
            let r = auto_window(table, traces, slices, &cfg.extract, max_w)?;
            (WindowPolicy::Fixed(r.window), r.graph, r.problem, r.extraction)
        }
        mode => {
            let window = match mode {
                WindowMode::Fixed(w) => WindowPolicy::Fixed(w),
                _ => WindowPolicy::Unbounded,
            };
            let graph = annotated_graph(table, traces, window, slices)?;
            let problem = build_constraints(&graph);
            let extraction = model_extract(&problem, &cfg.extract)?;
            (window, graph, problem, extraction)
        }
    };
    let model = derive_fsa(&extraction.best, &graph)?;
    Ok(MineResult { window, graph, problem, extraction, model })
}
