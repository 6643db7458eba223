//! Structural-causality graph over unique messages, annotated with node and
//! edge supports mined from traces.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::message::{causal, Message, MessageTable};
use crate::trace::{Position, Trace};

/// A causal edge between two unique messages, named by their table indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub head: u32,
    pub tail: u32,
}

impl Edge {
    pub fn new(head: u32, tail: u32) -> Self {
        Edge { head, tail }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.head, self.tail)
    }
}

/// Distance constraint for pairing instances when counting edge supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WindowPolicy {
    #[default]
    Unbounded,
    /// A head at flattened position `i` may pair with a tail at `j` only if
    /// `j <= i + w + 1`.
    Fixed(usize),
}

impl WindowPolicy {
    fn admits(self, head_flat: usize, tail_flat: usize) -> bool {
        match self {
            WindowPolicy::Unbounded => true,
            WindowPolicy::Fixed(w) => tail_flat <= head_flat + w + 1,
        }
    }
}

/// Messages whose first occurrence in every trace containing them has no
/// earlier causal predecessor.
pub fn detect_initials(traces: &[Trace], msgs: &[Message]) -> BTreeSet<Message> {
    let mut present: HashSet<&Message> = HashSet::new();
    let mut disqualified: HashSet<&Message> = HashSet::new();
    for trace in traces {
        let mut seen_dests: HashSet<&str> = HashSet::new();
        let mut checked: HashSet<&Message> = HashSet::new();
        for ev in trace.events() {
            for inst in ev.messages() {
                let m = &inst.message;
                if checked.insert(m) {
                    present.insert(m);
                    if seen_dests.contains(m.src.as_str()) {
                        disqualified.insert(m);
                    }
                }
            }
            seen_dests.extend(ev.messages().iter().map(|i| i.message.dest.as_str()));
        }
    }
    msgs.iter().filter(|m| present.contains(m) && !disqualified.contains(m)).cloned().collect()
}

/// Mirror of [`detect_initials`]: scanning each trace from the end, the last
/// occurrence of a terminal message has no later causal successor.
pub fn detect_terminals(traces: &[Trace], msgs: &[Message]) -> BTreeSet<Message> {
    let mut present: HashSet<&Message> = HashSet::new();
    let mut disqualified: HashSet<&Message> = HashSet::new();
    for trace in traces {
        let mut seen_srcs: HashSet<&str> = HashSet::new();
        let mut checked: HashSet<&Message> = HashSet::new();
        for ev in trace.events().iter().rev() {
            for inst in ev.messages() {
                let m = &inst.message;
                if checked.insert(m) {
                    present.insert(m);
                    if seen_srcs.contains(m.dest.as_str()) {
                        disqualified.insert(m);
                    }
                }
            }
            seen_srcs.extend(ev.messages().iter().map(|i| i.message.src.as_str()));
        }
    }
    msgs.iter().filter(|m| present.contains(m) && !disqualified.contains(m)).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub message: Message,
    pub support: u64,
    pub initial: bool,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalityGraph {
    table: MessageTable,
    nodes: BTreeMap<u32, NodeInfo>,
    edges: BTreeMap<Edge, u64>,
}

impl CausalityGraph {
    /// Nodes for all `msgs` with zero supports and an edge for every causal
    /// pair, except edges into initial and out of terminal messages.
    ///
    /// Messages missing from `table` are appended to a private copy of it.
    pub fn build(
        table: &MessageTable,
        msgs: &[Message],
        initials: &BTreeSet<Message>,
        terminals: &BTreeSet<Message>,
    ) -> Self {
        let table = table.extended(msgs);
        let mut nodes = BTreeMap::new();
        for m in msgs {
            let idx = table.index_of(m).expect("extended table covers msgs");
            nodes.insert(
                idx,
                NodeInfo {
                    message: m.clone(),
                    support: 0,
                    initial: initials.contains(m),
                    terminal: terminals.contains(m),
                },
            );
        }
        let mut edges = BTreeMap::new();
        for (&h, hn) in &nodes {
            if hn.terminal {
                continue;
            }
            for (&t, tn) in &nodes {
                if !tn.initial && causal(&hn.message, &tn.message) {
                    edges.insert(Edge::new(h, t), 0);
                }
            }
        }
        CausalityGraph { table, nodes, edges }
    }

    /// Unique messages, initial/terminal detection and an empty graph over
    /// `traces`, numbered through `table` where it already knows a message.
    pub fn from_traces(table: &MessageTable, traces: &[Trace]) -> Self {
        let msgs = crate::trace::unique_messages(traces);
        let initials = detect_initials(traces, &msgs);
        let terminals = detect_terminals(traces, &msgs);
        Self::build(table, &msgs, &initials, &terminals)
    }

    pub fn table(&self) -> &MessageTable {
        &self.table
    }

    pub fn nodes(&self) -> &BTreeMap<u32, NodeInfo> {
        &self.nodes
    }

    pub fn node(&self, idx: u32) -> Option<&NodeInfo> {
        self.nodes.get(&idx)
    }

    pub fn edges(&self) -> &BTreeMap<Edge, u64> {
        &self.edges
    }

    pub fn edge_support(&self, e: Edge) -> Option<u64> {
        self.edges.get(&e).copied()
    }

    pub fn index_of(&self, m: &Message) -> Option<u32> {
        self.table.index_of(m).filter(|i| self.nodes.contains_key(i))
    }

    pub fn message(&self, idx: u32) -> Option<&Message> {
        self.nodes.get(&idx).map(|n| &n.message)
    }

    pub fn initials(&self) -> impl Iterator<Item = u32> + '_ {
        self.nodes.iter().filter(|(_, n)| n.initial).map(|(i, _)| *i)
    }

    pub fn terminals(&self) -> impl Iterator<Item = u32> + '_ {
        self.nodes.iter().filter(|(_, n)| n.terminal).map(|(i, _)| *i)
    }

    fn positions_by_node(&self, trace: &Trace) -> Result<HashMap<u32, Vec<Position>>, GraphError> {
        let mut out: HashMap<u32, Vec<Position>> = HashMap::new();
        for (pos, inst) in trace.instances() {
            let idx = self
                .index_of(&inst.message)
                .ok_or_else(|| GraphError::UnknownMessage(inst.message.to_string()))?;
            out.entry(idx).or_default().push(pos);
        }
        Ok(out)
    }

    /// Instance counts per node contributed by `trace`.
    pub fn node_support_deltas(&self, trace: &Trace) -> Result<BTreeMap<u32, u64>, GraphError> {
        Ok(self.positions_by_node(trace)?.into_iter().map(|(k, v)| (k, v.len() as u64)).collect())
    }

    /// Edge supports contributed by `trace`.
    ///
    /// Tails are scanned left to right; each is matched to the nearest
    /// earlier, still unmatched head instance, which must also lie inside the
    /// window. Instances of the same event never match each other.
    pub fn edge_support_deltas(
        &self,
        trace: &Trace,
        window: WindowPolicy,
    ) -> Result<BTreeMap<Edge, u64>, GraphError> {
        let positions = self.positions_by_node(trace)?;
        let empty = Vec::new();
        let mut out = BTreeMap::new();
        for edge in self.edges.keys() {
            let heads = positions.get(&edge.head).unwrap_or(&empty);
            let tails = positions.get(&edge.tail).unwrap_or(&empty);
            let count = match_instances(heads, tails, window);
            if count > 0 {
                out.insert(*edge, count);
            }
        }
        Ok(out)
    }

    pub fn add_node_supports(&mut self, deltas: &BTreeMap<u32, u64>) {
        for (idx, d) in deltas {
            if let Some(n) = self.nodes.get_mut(idx) {
                n.support += d;
            }
        }
    }

    pub fn add_edge_supports(&mut self, deltas: &BTreeMap<Edge, u64>) {
        for (e, d) in deltas {
            if let Some(s) = self.edges.get_mut(e) {
                *s += d;
            }
        }
    }

    /// Adds this trace's node and edge supports to the running totals.
    pub fn annotate(&mut self, trace: &Trace, window: WindowPolicy) -> Result<(), GraphError> {
        let nodes = self.node_support_deltas(trace)?;
        let edges = self.edge_support_deltas(trace, window)?;
        self.add_node_supports(&nodes);
        self.add_edge_supports(&edges);
        Ok(())
    }

    /// Edges lying on a directed cycle.
    pub fn cyclic_edges(&self) -> BTreeSet<Edge> {
        let mut succ: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for e in self.edges.keys() {
            succ.entry(e.head).or_default().push(e.tail);
        }
        let reach = |from: u32, to: u32| -> bool {
            let mut stack = vec![from];
            let mut seen = HashSet::new();
            while let Some(n) = stack.pop() {
                if n == to {
                    return true;
                }
                if seen.insert(n) {
                    stack.extend(succ.get(&n).into_iter().flatten().copied());
                }
            }
            false
        };
        self.edges.keys().filter(|e| reach(e.tail, e.head)).copied().collect()
    }

    pub fn dump(&self) -> GraphDump {
        let cyclic = self.cyclic_edges();
        GraphDump {
            nodes: self
                .nodes
                .iter()
                .map(|(idx, n)| NodeDump {
                    index: *idx,
                    message: n.message.to_string(),
                    support: n.support,
                    initial: n.initial,
                    terminal: n.terminal,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|(e, s)| EdgeDump {
                    head: e.head,
                    tail: e.tail,
                    support: *s,
                    cyclic: cyclic.contains(e),
                })
                .collect(),
            has_cycles: !cyclic.is_empty(),
        }
    }
}

/// Greedy nearest-head matching of `tails` against `heads` (both sorted by
/// flattened position).
fn match_instances(heads: &[Position], tails: &[Position], window: WindowPolicy) -> u64 {
    let mut stack: Vec<Position> = Vec::new();
    let mut next_head = 0;
    let mut count = 0;
    for t in tails {
        while next_head < heads.len() && heads[next_head].precedes(t) {
            stack.push(heads[next_head]);
            next_head += 1;
        }
        if let Some(h) = stack.last() {
            if window.admits(h.flat, t.flat) {
                stack.pop();
                count += 1;
            }
        }
    }
    count
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDump {
    pub index: u32,
    pub message: String,
    pub support: u64,
    pub initial: bool,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeDump {
    pub head: u32,
    pub tail: u32,
    pub support: u64,
    pub cyclic: bool,
}

/// Deterministic listing of a graph, sorted by message index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDump {
    pub nodes: Vec<NodeDump>,
    pub edges: Vec<EdgeDump>,
    pub has_cycles: bool,
}

impl GraphDump {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("node {} {} support={}", n.index, n.message, n.support));
            if n.initial {
                out.push_str(" initial");
            }
            if n.terminal {
                out.push_str(" terminal");
            }
            out.push('\n');
        }
        for e in &self.edges {
            out.push_str(&format!("edge {} -> {} support={}", e.head, e.tail, e.support));
            if e.cyclic {
                out.push_str(" cycle");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::parse_message_table;
    use crate::trace::parse_trace;

    fn table() -> MessageTable {
        parse_message_table(
            "1 (cpu0:cache:rd_req)\n2 (cache:cpu0:rd_resp)\n3 (cpu1:cache:rd_req)\n\
             4 (cache:cpu1:rd_resp)\n5 (cache:mem:rd_req)\n6 (mem:cache:rd_resp)\n",
        )
        .unwrap()
    }

    fn seq(t: &MessageTable, s: &str) -> Trace {
        parse_trace(&s.split(',').collect::<Vec<_>>().join("\n"), t).unwrap()
    }

    fn idx(t: &MessageTable, set: &BTreeSet<Message>) -> Vec<u32> {
        let mut v: Vec<u32> = set.iter().map(|m| t.index_of(m).unwrap()).collect();
        v.sort();
        v
    }

    #[test]
    fn initials_and_terminals_of_trace_four() {
        let t = table();
        let tr = seq(&t, "1,3,5,6,4,2,3,1,5,6,2,4");
        let msgs = tr.unique_messages();
        assert_eq!(idx(&t, &detect_initials(std::slice::from_ref(&tr), &msgs)), vec![1, 3]);
        assert_eq!(idx(&t, &detect_terminals(&[tr], &msgs)), vec![2, 4]);
    }

    #[test]
    fn terminals_of_trace_one() {
        let t = table();
        let tr = parse_trace("1 3\n1\n2\n5\n1\n5\n6\n2\n4\n6\n2\n", &t).unwrap();
        let msgs = tr.unique_messages();
        assert_eq!(idx(&t, &detect_terminals(&[tr], &msgs)), vec![2, 4]);
    }

    #[test]
    fn single_message_is_initial_and_terminal() {
        let t = table();
        let tr = seq(&t, "1");
        let msgs = tr.unique_messages();
        assert_eq!(idx(&t, &detect_initials(std::slice::from_ref(&tr), &msgs)), vec![1]);
        assert_eq!(idx(&t, &detect_terminals(&[tr], &msgs)), vec![1]);
    }

    #[test]
    fn initial_flag_is_a_conjunction_over_traces() {
        let t = table();
        // 5 opens the second trace but follows 1 in the first.
        let a = seq(&t, "1,5");
        let b = seq(&t, "5,6");
        let msgs = unique_messages_of(&[a.clone(), b.clone()]);
        assert_eq!(idx(&t, &detect_initials(std::slice::from_ref(&a), &msgs)), vec![1]);
        assert_eq!(idx(&t, &detect_initials(std::slice::from_ref(&b), &msgs)), vec![5]);
        assert_eq!(idx(&t, &detect_initials(&[a, b], &msgs)), vec![1]);
    }

    fn unique_messages_of(ts: &[Trace]) -> Vec<Message> {
        crate::trace::unique_messages(ts)
    }

    #[test]
    fn build_prunes_initial_and_terminal_sides() {
        let t = table();
        let msgs: Vec<Message> = t.iter().map(|(_, m)| m.clone()).collect();
        let initials: BTreeSet<Message> = [1, 3].iter().map(|i| t.get(*i).unwrap().clone()).collect();
        let terminals: BTreeSet<Message> = [2, 4].iter().map(|i| t.get(*i).unwrap().clone()).collect();
        let g = CausalityGraph::build(&t, &msgs, &initials, &terminals);

        // Brute-force the expected edge set from the causality definition.
        let mut expected = BTreeSet::new();
        for (h, hm) in t.iter() {
            for (tl, tm) in t.iter() {
                if causal(hm, tm) && !terminals.contains(hm) && !initials.contains(tm) {
                    expected.insert(Edge::new(h, tl));
                }
            }
        }
        let got: BTreeSet<Edge> = g.edges().keys().copied().collect();
        assert_eq!(got, expected);
        for e in [(1, 2), (1, 4), (1, 5), (3, 2), (3, 4), (3, 5), (5, 6), (6, 2), (6, 4)] {
            assert!(got.contains(&Edge::new(e.0, e.1)), "{e:?}");
        }
        assert!(got.iter().all(|e| e.tail != 1 && e.tail != 3 && e.head != 2 && e.head != 4));
        // 5 <-> 6 closes a cycle that the dump flags.
        assert!(g.dump().has_cycles);
        assert!(g.cyclic_edges().contains(&Edge::new(5, 6)));
    }

    #[test]
    fn build_degenerate() {
        let t = table();
        let g = CausalityGraph::build(&t, &[], &BTreeSet::new(), &BTreeSet::new());
        assert!(g.nodes().is_empty() && g.edges().is_empty());
        let two = vec![t.get(1).unwrap().clone(), t.get(3).unwrap().clone()];
        let g = CausalityGraph::build(&t, &two, &BTreeSet::new(), &BTreeSet::new());
        assert_eq!(g.nodes().len(), 2);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn annotate_unbounded_trace_four() {
        let t = table();
        let tr = seq(&t, "1,3,5,6,4,2,3,1,5,6,2,4");
        let mut g = CausalityGraph::from_traces(&t, std::slice::from_ref(&tr));
        g.annotate(&tr, WindowPolicy::Unbounded).unwrap();
        assert!(g.nodes().values().all(|n| n.support == 2));
        assert_eq!(g.edge_support(Edge::new(1, 5)), Some(2));
        // Only one 6 precedes a 5.
        assert_eq!(g.edge_support(Edge::new(6, 5)), Some(1));
    }

    #[test]
    fn annotate_window_two_trace_four() {
        let t = table();
        let tr = seq(&t, "1,3,5,6,4,2,3,1,5,6,2,4");
        let mut g = CausalityGraph::from_traces(&t, std::slice::from_ref(&tr));
        g.annotate(&tr, WindowPolicy::Fixed(2)).unwrap();
        assert_eq!(g.edge_support(Edge::new(1, 2)), Some(1));
        assert_eq!(g.edge_support(Edge::new(3, 4)), Some(1));
        assert_eq!(g.edge_support(Edge::new(1, 4)), Some(0));
        assert_eq!(g.edge_support(Edge::new(3, 2)), Some(0));
    }

    #[test]
    fn annotate_accumulates_over_traces() {
        let t = table();
        let t4 = seq(&t, "1,3,5,6,4,2,3,1,5,6,2,4");
        let t5 = seq(&t, "1,3,2,4");
        let mut g = CausalityGraph::from_traces(&t, &[t4.clone(), t5.clone()]);
        g.annotate(&t4, WindowPolicy::Unbounded).unwrap();
        g.annotate(&t5, WindowPolicy::Unbounded).unwrap();
        for i in 1..=4 {
            assert_eq!(g.node(i).unwrap().support, 3);
        }
        assert_eq!(g.node(5).unwrap().support, 2);
        assert_eq!(g.node(6).unwrap().support, 2);
        assert_eq!(g.edge_support(Edge::new(3, 4)), Some(3));
    }

    #[test]
    fn same_event_instances_never_match() {
        let t = table();
        let tr = parse_trace("1 2\n", &t).unwrap();
        let mut g = CausalityGraph::build(&t, &tr.unique_messages(), &BTreeSet::new(), &BTreeSet::new());
        g.annotate(&tr, WindowPolicy::Unbounded).unwrap();
        assert_eq!(g.edge_support(Edge::new(1, 2)), Some(0));
    }

    #[test]
    fn unknown_message_is_an_error() {
        let t = table();
        let g = CausalityGraph::from_traces(&t, &[seq(&t, "1,2")]);
        let mut g2 = g.clone();
        let err = g2.annotate(&seq(&t, "1,5"), WindowPolicy::Unbounded).unwrap_err();
        assert!(matches!(err, GraphError::UnknownMessage(_)));
    }

    #[test]
    fn dump_is_sorted_and_textual() {
        let t = table();
        let tr = seq(&t, "1,5,6,2");
        let mut g = CausalityGraph::from_traces(&t, std::slice::from_ref(&tr));
        g.annotate(&tr, WindowPolicy::Unbounded).unwrap();
        let d = g.dump();
        assert!(d.nodes.windows(2).all(|w| w[0].index < w[1].index));
        assert!(d.edges.windows(2).all(|w| (w[0].head, w[0].tail) < (w[1].head, w[1].tail)));
        let text = d.to_text();
        assert!(text.contains("node 1 cpu0:cache:rd_req support=1 initial"));
        assert!(text.contains("edge 5 -> 6 support=1"));
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<GraphDump>(&json).unwrap(), d);
    }
}
