//! Deterministic finite-state models over unique messages, their derivation
//! from consistent solutions, and JSON / DOT serialization.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::FsaError;
use crate::graph::CausalityGraph;
use crate::message::{causal, Message, MessageTable};
use crate::solver::Solution;

pub type StateId = usize;

/// `(Q, q0, Σ, F = {q0}, Δ)` with a partial deterministic transition map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fsa {
    states: Vec<String>,
    initial: StateId,
    alphabet: Vec<Message>,
    symbol_of: HashMap<Message, usize>,
    transitions: BTreeMap<(StateId, usize), StateId>,
}

impl Fsa {
    /// A model with a single initial state named `q0` and no transitions.
    pub fn new() -> Self {
        Fsa {
            states: vec!["q0".to_owned()],
            initial: 0,
            alphabet: Vec::new(),
            symbol_of: HashMap::new(),
            transitions: BTreeMap::new(),
        }
    }

    pub fn add_state(&mut self, name: impl Into<String>) -> StateId {
        self.states.push(name.into());
        self.states.len() - 1
    }

    pub fn add_symbol(&mut self, m: &Message) -> usize {
        if let Some(s) = self.symbol_of.get(m) {
            return *s;
        }
        self.alphabet.push(m.clone());
        self.symbol_of.insert(m.clone(), self.alphabet.len() - 1);
        self.alphabet.len() - 1
    }

    /// Adds `from --m--> to`. Re-adding an identical transition is a no-op.
    pub fn add_transition(&mut self, from: StateId, m: &Message, to: StateId) -> Result<(), FsaError> {
        for s in [from, to] {
            if s >= self.states.len() {
                return Err(FsaError::DanglingState(format!("#{s}")));
            }
        }
        let sym = self.add_symbol(m);
        match self.transitions.get(&(from, sym)) {
            Some(existing) if *existing != to => {
                Err(FsaError::Nondeterministic { state: self.states[from].clone(), msg: m.to_string() })
            }
            _ => {
                self.transitions.insert((from, sym), to);
                Ok(())
            }
        }
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.states[s]
    }

    pub fn alphabet(&self) -> &[Message] {
        &self.alphabet
    }

    pub fn symbol(&self, m: &Message) -> Option<usize> {
        self.symbol_of.get(m).copied()
    }

    pub fn step(&self, from: StateId, sym: usize) -> Option<StateId> {
        self.transitions.get(&(from, sym)).copied()
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.len()
    }

    /// `(from, message, to)` in canonical order.
    pub fn transitions(&self) -> impl Iterator<Item = (StateId, &Message, StateId)> {
        self.transitions.iter().map(|((from, sym), to)| (*from, &self.alphabet[*sym], *to))
    }

    /// Messages that open a flow instance: `Δ(q0, m)` is defined.
    pub fn start_messages(&self) -> Vec<&Message> {
        self.transitions().filter(|(from, _, _)| *from == self.initial).map(|(_, m, _)| m).collect()
    }

    /// States that are unreachable from `q0` or cannot return to it.
    pub fn structural_warnings(&self) -> Vec<String> {
        let n = self.states.len();
        let mut fwd = vec![Vec::new(); n];
        let mut bwd = vec![Vec::new(); n];
        for (from, _, to) in self.transitions() {
            fwd[from].push(to);
            bwd[to].push(from);
        }
        let reach = |adj: &Vec<Vec<StateId>>| {
            let mut seen = vec![false; n];
            let mut q = VecDeque::from([self.initial]);
            seen[self.initial] = true;
            while let Some(s) = q.pop_front() {
                for &t in &adj[s] {
                    if !seen[t] {
                        seen[t] = true;
                        q.push_back(t);
                    }
                }
            }
            seen
        };
        let from_init = reach(&fwd);
        let to_init = reach(&bwd);
        let mut out = Vec::new();
        for s in 0..n {
            if !from_init[s] {
                out.push(format!(
                    "state {} is unreachable from {}",
                    self.states[s], self.states[self.initial]
                ));
            }
            if !to_init[s] {
                out.push(format!("state {} cannot return to {}", self.states[s], self.states[self.initial]));
            }
        }
        out
    }

    /// Consecutive transition pairs `q -m-> q' -m'-> q''` with `q' != q0`
    /// whose labels are not structurally causal.
    pub fn non_causal_pairs(&self) -> Vec<(Message, Message)> {
        let mut out = Vec::new();
        for (_, m, mid) in self.transitions() {
            if mid == self.initial {
                continue;
            }
            for (from, m2, _) in self.transitions() {
                if from == mid && !causal(m, m2) {
                    out.push((m.clone(), m2.clone()));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let repr = FsaJson {
            states: self.states.clone(),
            initial: self.states[self.initial].clone(),
            alphabet: self.alphabet.clone(),
            transitions: self
                .transitions()
                .map(|(from, m, to)| TransitionJson {
                    from: self.states[from].clone(),
                    msg: m.clone(),
                    to: self.states[to].clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&repr).expect("model serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Fsa, FsaError> {
        let repr: FsaJson = serde_json::from_str(text).map_err(|e| FsaError::Json(e.to_string()))?;
        let mut index: HashMap<&str, StateId> = HashMap::new();
        for (i, s) in repr.states.iter().enumerate() {
            if index.insert(s.as_str(), i).is_some() {
                return Err(FsaError::Invalid(format!("duplicate state {s}")));
            }
        }
        let initial =
            *index.get(repr.initial.as_str()).ok_or_else(|| FsaError::DanglingState(repr.initial.clone()))?;
        let mut fsa = Fsa {
            states: repr.states.clone(),
            initial,
            alphabet: Vec::new(),
            symbol_of: HashMap::new(),
            transitions: BTreeMap::new(),
        };
        for m in &repr.alphabet {
            if fsa.symbol(m).is_some() {
                return Err(FsaError::Invalid(format!("duplicate alphabet entry {m}")));
            }
            fsa.add_symbol(m);
        }
        for t in &repr.transitions {
            let lookup = |s: &str| index.get(s).copied().ok_or_else(|| FsaError::DanglingState(s.to_owned()));
            let (from, to) = (lookup(&t.from)?, lookup(&t.to)?);
            fsa.add_transition(from, &t.msg, to)?;
        }
        for w in fsa.structural_warnings() {
            log::warn!("{w}");
        }
        Ok(fsa)
    }

    /// Graphviz rendering. With a table, edge labels are message indices.
    pub fn to_dot(&self, table: Option<&MessageTable>) -> String {
        let mut s = String::from("digraph fsa {\n  rankdir=LR;\n  node [shape=circle];\n");
        for (i, name) in self.states.iter().enumerate() {
            if i == self.initial {
                writeln!(s, "  \"{name}\" [shape=doublecircle];").unwrap();
            } else {
                writeln!(s, "  \"{name}\";").unwrap();
            }
        }
        for (from, m, to) in self.transitions() {
            let label = table.and_then(|t| t.index_of(m)).map_or_else(|| m.to_string(), |i| i.to_string());
            writeln!(s, "  \"{}\" -> \"{}\" [label=\"{label}\"];", self.states[from], self.states[to])
                .unwrap();
        }
        s.push_str("}\n");
        s
    }
}

impl Default for Fsa {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FsaJson {
    states: Vec<String>,
    initial: String,
    #[serde(default)]
    alphabet: Vec<Message>,
    transitions: Vec<TransitionJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TransitionJson {
    from: String,
    msg: Message,
    to: String,
}

/// Builds the model of a consistent solution: one state per non-terminal
/// message that carries flow, `q0` as the flow boundary, and a transition for
/// every initial message and every non-zero edge. Transitions on terminal
/// messages return to `q0`.
pub fn derive_fsa(sol: &Solution, graph: &CausalityGraph) -> Result<Fsa, FsaError> {
    let mut fsa = Fsa::new();
    for n in graph.nodes().values() {
        fsa.add_symbol(&n.message);
    }

    let mut carries: HashSet<u32> = HashSet::new();
    for e in sol.nonzero_edges() {
        if graph.node(e.head).is_none() || graph.node(e.tail).is_none() {
            return Err(FsaError::Invalid(format!("solution edge {e} is not in the graph")));
        }
        carries.insert(e.head);
        carries.insert(e.tail);
    }
    let mut state_of: BTreeMap<u32, StateId> = BTreeMap::new();
    for (idx, n) in graph.nodes() {
        let live = carries.contains(idx) || (n.initial && n.support > 0);
        if live && !n.terminal {
            state_of.insert(*idx, fsa.add_state(format!("q{idx}")));
        }
    }
    let target = |idx: u32| -> StateId {
        if graph.node(idx).is_some_and(|n| n.terminal) {
            0
        } else {
            state_of[&idx]
        }
    };

    for (idx, n) in graph.nodes() {
        if n.initial && n.support > 0 {
            fsa.add_transition(0, &n.message, target(*idx))?;
        }
    }
    for e in sol.nonzero_edges() {
        let from = state_of[&e.head];
        fsa.add_transition(from, &graph.nodes()[&e.tail].message, target(e.tail))?;
    }
    Ok(fsa)
}
