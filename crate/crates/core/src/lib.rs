//! Mining finite-state models of message flows from concurrent communication
//! traces.
//!
//! The pipeline: parse traces ([`trace`]), build and annotate a structural
//! causality graph ([`graph`], optionally sliced by [`slicer`]), solve the
//! support-consistency problem ([`solver`]), reduce and rank solutions
//! ([`extract`]), derive a model and score it ([`fsa`], [`eval`]).
//! [`flowsim`] generates synthetic traces with known ground truth.

pub mod error;
pub mod eval;
pub mod extract;
pub mod flowsim;
pub mod fsa;
pub mod graph;
pub mod message;
pub mod pipeline;
pub mod slicer;
pub mod solver;
pub mod trace;

pub use error::Error;
pub use eval::{acceptance_ratio, AcceptanceReport, Strategy};
pub use extract::{auto_window, model_extract, reduce_model, ExtractConfig, Extraction, ReductionOrder};
pub use flowsim::{generate, ground_truth_fsa, parse_flowspec, FlowSpec, GenConfig};
pub use fsa::{derive_fsa, Fsa};
pub use graph::{CausalityGraph, Edge, WindowPolicy};
pub use message::{parse_message_table, Message, MessageTable};
pub use pipeline::{mine, MineConfig, MineResult, WindowMode};
pub use slicer::{slice, slice_all, SlicePolicy, SliceSpec};
pub use solver::{build_constraints, ConstraintProblem, Solution};
pub use trace::{parse_trace, serialize_trace, Trace};
