//! Consistency constraints over an annotated causality graph and a small
//! finite-domain solver for them.
//!
//! Every edge gets an integer variable `c(e)` in `[0, sup(e)]`. For every
//! node side that has edges, the variables on that side must sum to the
//! node's support. The solver propagates interval bounds through these
//! equalities and searches depth-first, branching on the variable with the
//! smallest domain and trying values from the upper bound down.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::graph::{CausalityGraph, Edge};

/// Default cap on the brute-force search space.
pub const BRUTE_FORCE_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Out,
    In,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub edge: Edge,
    pub upper: u64,
}

/// `sum(vars) == total` for one side of one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Balance {
    pub node: u32,
    pub side: Side,
    pub vars: Vec<usize>,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConstraintProblem {
    vars: Vec<Variable>,
    balances: Vec<Balance>,
    pinned_zero: BTreeSet<usize>,
    blocked: Vec<Vec<u64>>,
    warnings: Vec<String>,
}

/// Consistent edge supports; edges absent from the map are zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(into = "Vec<EdgeValue>", from = "Vec<EdgeValue>")]
pub struct Solution {
    assignment: BTreeMap<Edge, u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeValue {
    pub head: u32,
    pub tail: u32,
    pub value: u64,
}

impl From<Solution> for Vec<EdgeValue> {
    fn from(s: Solution) -> Self {
        s.assignment.into_iter().map(|(e, value)| EdgeValue { head: e.head, tail: e.tail, value }).collect()
    }
}

impl From<Vec<EdgeValue>> for Solution {
    fn from(v: Vec<EdgeValue>) -> Self {
        Solution { assignment: v.into_iter().map(|ev| (Edge::new(ev.head, ev.tail), ev.value)).collect() }
    }
}

impl Solution {
    pub fn from_assignment(assignment: BTreeMap<Edge, u64>) -> Self {
        Solution { assignment }
    }

    pub fn get(&self, e: Edge) -> u64 {
        self.assignment.get(&e).copied().unwrap_or(0)
    }

    pub fn assignment(&self) -> &BTreeMap<Edge, u64> {
        &self.assignment
    }

    /// Number of edges with non-zero consistent support.
    pub fn size(&self) -> usize {
        self.assignment.values().filter(|v| **v > 0).count()
    }

    /// Non-zero edges in ascending edge order.
    pub fn nonzero_edges(&self) -> Vec<Edge> {
        self.assignment.iter().filter(|(_, v)| **v > 0).map(|(e, _)| *e).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueOrder {
    /// Upper bound first.
    #[default]
    Descending,
    /// Per-branch random value order from a seeded generator.
    Shuffled(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolverConfig {
    pub value_order: ValueOrder,
}

/// Builds the consistency problem for an annotated graph.
pub fn build_constraints(graph: &CausalityGraph) -> ConstraintProblem {
    let vars: Vec<Variable> = graph.edges().iter().map(|(e, s)| Variable { edge: *e, upper: *s }).collect();
    let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let mut inc: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, v) in vars.iter().enumerate() {
        out.entry(v.edge.head).or_default().push(i);
        inc.entry(v.edge.tail).or_default().push(i);
    }

    let mut balances = Vec::new();
    let mut warnings = Vec::new();
    for (idx, node) in graph.nodes() {
        match out.remove(idx) {
            Some(vs) => balances.push(Balance { node: *idx, side: Side::Out, vars: vs, total: node.support }),
            None if !node.terminal && node.support > 0 => {
                warnings.push(format!("non-terminal node {idx} has no outgoing edges"))
            }
            None => {}
        }
        match inc.remove(idx) {
            Some(vs) => balances.push(Balance { node: *idx, side: Side::In, vars: vs, total: node.support }),
            None if !node.initial && node.support > 0 => {
                warnings.push(format!("non-initial node {idx} has no incoming edges"))
            }
            None => {}
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    ConstraintProblem { vars, balances, pinned_zero: BTreeSet::new(), blocked: Vec::new(), warnings }
}

impl ConstraintProblem {
    pub fn new(vars: Vec<Variable>, balances: Vec<Balance>) -> Self {
        ConstraintProblem { vars, balances, ..Default::default() }
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn balances(&self) -> &[Balance] {
        &self.balances
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn pinned_zero(&self) -> impl Iterator<Item = Edge> + '_ {
        self.pinned_zero.iter().map(|i| self.vars[*i].edge)
    }

    pub fn blocked_count(&self) -> usize {
        self.blocked.len()
    }

    fn var_index(&self, e: Edge) -> Option<usize> {
        self.vars.binary_search_by(|v| v.edge.cmp(&e)).ok().or_else(|| {
            // Hand-built problems need not be sorted.
            self.vars.iter().position(|v| v.edge == e)
        })
    }

    /// A copy with `c(e) = 0` added.
    pub fn pin_zero(&self, e: Edge) -> Result<ConstraintProblem, SolverError> {
        let i = self.var_index(e).ok_or_else(|| SolverError::UnknownEdge(e.to_string()))?;
        let mut p = self.clone();
        p.pinned_zero.insert(i);
        Ok(p)
    }

    /// A copy with every edge of `edges` pinned to zero.
    pub fn pin_zeros<I: IntoIterator<Item = Edge>>(
        &self,
        edges: I,
    ) -> Result<ConstraintProblem, SolverError> {
        let mut p = self.clone();
        for e in edges {
            let i = self.var_index(e).ok_or_else(|| SolverError::UnknownEdge(e.to_string()))?;
            p.pinned_zero.insert(i);
        }
        Ok(p)
    }

    /// A copy that excludes exactly this full assignment.
    pub fn block(&self, sol: &Solution) -> ConstraintProblem {
        let mut p = self.clone();
        p.blocked.push(self.values_of(sol));
        p
    }

    fn values_of(&self, sol: &Solution) -> Vec<u64> {
        self.vars.iter().map(|v| sol.get(v.edge)).collect()
    }

    fn solution_of(&self, values: &[u64]) -> Solution {
        Solution { assignment: self.vars.iter().zip(values).map(|(v, x)| (v.edge, *x)).collect() }
    }

    /// Re-checks an assignment against every constraint, independently of
    /// the search.
    pub fn check(&self, sol: &Solution) -> Result<(), SolverError> {
        let err = |m: String| Err(SolverError::NotASolution(m));
        for e in sol.assignment.keys() {
            if self.var_index(*e).is_none() {
                return err(format!("edge {e} is not a variable"));
            }
        }
        let values = self.values_of(sol);
        for (i, v) in self.vars.iter().enumerate() {
            if values[i] > v.upper {
                return err(format!("c({}) = {} exceeds {}", v.edge, values[i], v.upper));
            }
            if self.pinned_zero.contains(&i) && values[i] != 0 {
                return err(format!("c({}) is pinned to 0", v.edge));
            }
        }
        for b in &self.balances {
            let sum: u64 = b.vars.iter().map(|i| values[*i]).sum();
            if sum != b.total {
                return err(format!("{:?} sum of node {} is {sum}, expected {}", b.side, b.node, b.total));
            }
        }
        if self.blocked.contains(&values) {
            return err("assignment is blocked".into());
        }
        Ok(())
    }

    /// First solution in search order, or `None` when infeasible.
    pub fn solve(&self) -> Option<Solution> {
        self.solve_with(SolverConfig::default())
    }

    pub fn solve_with(&self, cfg: SolverConfig) -> Option<Solution> {
        self.enumerate_with(1, cfg).into_iter().next()
    }

    pub fn is_feasible(&self) -> bool {
        self.solve().is_some()
    }

    /// Up to `k` pairwise distinct solutions. Equivalent to repeatedly
    /// solving and blocking each returned assignment.
    pub fn enumerate(&self, k: usize) -> Vec<Solution> {
        self.enumerate_with(k, SolverConfig::default())
    }

    pub fn enumerate_with(&self, k: usize, cfg: SolverConfig) -> Vec<Solution> {
        let mut out = Vec::new();
        if k == 0 {
            return out;
        }
        let mut search = Search::new(self, cfg);
        let mut lo = vec![0u64; self.vars.len()];
        let mut hi: Vec<u64> = self
            .vars
            .iter()
            .enumerate()
            .map(|(i, v)| if self.pinned_zero.contains(&i) { 0 } else { v.upper })
            .collect();
        if !search.propagate(&mut lo, &mut hi) {
            return out;
        }
        search.dfs(lo, hi, &mut |values| {
            out.push(self.solution_of(values));
            out.len() < k
        });
        out
    }
}

struct Search<'a> {
    p: &'a ConstraintProblem,
    blocked: HashSet<&'a [u64]>,
    rng: Option<ChaCha8Rng>,
}

impl<'a> Search<'a> {
    fn new(p: &'a ConstraintProblem, cfg: SolverConfig) -> Self {
        Search {
            p,
            blocked: p.blocked.iter().map(Vec::as_slice).collect(),
            rng: match cfg.value_order {
                ValueOrder::Descending => None,
                ValueOrder::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            },
        }
    }

    /// Bounds propagation to a fixpoint. Returns false on a wipe-out.
    fn propagate(&self, lo: &mut [u64], hi: &mut [u64]) -> bool {
        loop {
            let mut changed = false;
            for b in &self.p.balances {
                let sum_lo: u64 = b.vars.iter().map(|i| lo[*i]).sum();
                let sum_hi: u64 = b.vars.iter().map(|i| hi[*i]).sum();
                if sum_lo > b.total || sum_hi < b.total {
                    return false;
                }
                for &i in &b.vars {
                    // Others can contribute at most sum_hi - hi[i] and at least sum_lo - lo[i].
                    let new_lo = lo[i].max(b.total.saturating_sub(sum_hi - hi[i]));
                    let new_hi = hi[i].min(b.total - (sum_lo - lo[i]));
                    if new_lo > new_hi {
                        return false;
                    }
                    if new_lo != lo[i] || new_hi != hi[i] {
                        lo[i] = new_lo;
                        hi[i] = new_hi;
                        changed = true;
                        // Sums are now stale; restart this balance on the next pass.
                        break;
                    }
                }
            }
            if !changed {
                return true;
            }
        }
    }

    /// Returns false once `visit` asks to stop.
    fn dfs(&mut self, lo: Vec<u64>, hi: Vec<u64>, visit: &mut dyn FnMut(&[u64]) -> bool) -> bool {
        let branch = (0..lo.len()).filter(|&i| hi[i] > lo[i]).min_by_key(|&i| (hi[i] - lo[i], i));
        let Some(var) = branch else {
            if self.blocked.contains(lo.as_slice()) {
                return true;
            }
            return visit(&lo);
        };
        let mut values: Vec<u64> = (lo[var]..=hi[var]).rev().collect();
        if let Some(rng) = self.rng.as_mut() {
            values.shuffle(rng);
        }
        for v in values {
            let mut l2 = lo.clone();
            let mut h2 = hi.clone();
            l2[var] = v;
            h2[var] = v;
            if self.propagate(&mut l2, &mut h2) && !self.dfs(l2, h2, visit) {
                return false;
            }
        }
        true
    }
}

/// Every solution of `p` by exhaustive enumeration, in lexicographic order of
/// the value vector. Fails when the product of domain sizes exceeds `cap`.
pub fn brute_force_solutions(p: &ConstraintProblem, cap: u128) -> Result<Vec<Solution>, SolverError> {
    let upper: Vec<u64> = p
        .vars
        .iter()
        .enumerate()
        .map(|(i, v)| if p.pinned_zero.contains(&i) { 0 } else { v.upper })
        .collect();
    let size = upper.iter().try_fold(1u128, |acc, u| acc.checked_mul(*u as u128 + 1)).unwrap_or(u128::MAX);
    if size > cap {
        return Err(SolverError::CapExceeded { size, cap });
    }
    let n = p.vars.len();
    let mut values = vec![0u64; n];
    let mut out = Vec::new();
    loop {
        let balanced = p.balances.iter().all(|b| b.vars.iter().map(|i| values[*i]).sum::<u64>() == b.total);
        if balanced && !p.blocked.contains(&values) {
            out.push(p.solution_of(&values));
        }
        // Odometer increment, last variable fastest.
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if values[i] < upper[i] {
                values[i] += 1;
                break;
            }
            values[i] = 0;
        }
    }
}

fn smt_var(e: Edge) -> String {
    format!("c_{}_{}", e.head, e.tail)
}

fn smt_sum(p: &ConstraintProblem, vars: &[usize]) -> String {
    match vars {
        [one] => smt_var(p.vars[*one].edge),
        many => {
            let terms: Vec<String> = many.iter().map(|i| smt_var(p.vars[*i].edge)).collect();
            format!("(+ {})", terms.join(" "))
        }
    }
}

/// SMT-LIB2 (QF_LIA) encoding of the problem, ending in `(check-sat)` and
/// `(get-model)`.
pub fn export_smtlib(p: &ConstraintProblem) -> String {
    let mut s = String::new();
    s.push_str("(set-logic QF_LIA)\n");
    for v in &p.vars {
        let name = smt_var(v.edge);
        writeln!(s, "(declare-const {name} Int)").unwrap();
        writeln!(s, "(assert (>= {name} 0))").unwrap();
        writeln!(s, "(assert (<= {name} {}))", v.upper).unwrap();
    }
    for b in &p.balances {
        let side = match b.side {
            Side::Out => "out",
            Side::In => "in",
        };
        writeln!(s, "; node {} {side}", b.node).unwrap();
        writeln!(s, "(assert (= {} {}))", smt_sum(p, &b.vars), b.total).unwrap();
    }
    for i in &p.pinned_zero {
        writeln!(s, "(assert (= {} 0))", smt_var(p.vars[*i].edge)).unwrap();
    }
    for blk in &p.blocked {
        if blk.is_empty() {
            // Blocking the only (empty) assignment leaves nothing.
            s.push_str("(assert false)\n");
            continue;
        }
        let eqs: Vec<String> =
            p.vars.iter().zip(blk).map(|(v, x)| format!("(= {} {x})", smt_var(v.edge))).collect();
        writeln!(s, "(assert (not (and {})))", eqs.join(" ")).unwrap();
    }
    s.push_str("(check-sat)\n(get-model)\n");
    s
}
