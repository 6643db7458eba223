//! Synthetic traces from declarative message flows.
//!
//! Flow-spec format:
//!
//! ```text
//! # cpu0 read, hit or miss
//! flow cpu0_read:
//!   branch: 1 2
//!   branch: 1 5 6 2
//! ```
//!
//! Branch tokens are message-table indices or inline `src:dest:cmd` triples.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FlowSpecError, ParseError};
use crate::fsa::Fsa;
use crate::message::{AttrValue, Message, MessageTable};
use crate::trace::{MessageInstance, Trace, TraceEvent};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flow {
    pub name: String,
    pub branches: Vec<Vec<Message>>,
}

impl Flow {
    pub fn initial(&self) -> &Message {
        &self.branches[0][0]
    }

    pub fn terminals(&self) -> Vec<&Message> {
        let mut out: Vec<&Message> = self.branches.iter().filter_map(|b| b.last()).collect();
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FlowSpec {
    pub flows: Vec<Flow>,
}

impl FlowSpec {
    pub fn new(flows: Vec<Flow>) -> Result<Self, FlowSpecError> {
        let spec = FlowSpec { flows };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), FlowSpecError> {
        let mut names = HashSet::new();
        for flow in &self.flows {
            let invalid = |msg: &str| FlowSpecError::Invalid { flow: flow.name.clone(), msg: msg.to_owned() };
            if !names.insert(flow.name.as_str()) {
                return Err(invalid("flow declared twice"));
            }
            if flow.branches.is_empty() {
                return Err(invalid("flow has no branches"));
            }
            let init = &flow.branches[0].first().ok_or_else(|| invalid("empty branch"))?;
            for (bi, branch) in flow.branches.iter().enumerate() {
                let first = branch.first().ok_or_else(|| invalid("empty branch"))?;
                if first != *init {
                    return Err(FlowSpecError::InitialMismatch {
                        flow: flow.name.clone(),
                        branch: bi + 1,
                        expected: init.to_string(),
                        found: first.to_string(),
                    });
                }
                for w in branch.windows(2) {
                    if !w[0].causes(&w[1]) {
                        return Err(FlowSpecError::NotCausal {
                            flow: flow.name.clone(),
                            branch: bi + 1,
                            from: w[0].to_string(),
                            to: w[1].to_string(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Messages of all flows in first-mention order.
    pub fn messages(&self) -> Vec<Message> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for m in self.flows.iter().flat_map(|f| f.branches.iter().flatten()) {
            if seen.insert(m) {
                out.push(m.clone());
            }
        }
        out
    }
}

fn resolve(tok: &str, line: usize, table: &MessageTable) -> Result<Message, ParseError> {
    if tok.bytes().all(|b| b.is_ascii_digit()) {
        let index: u32 = tok
            .parse()
            .map_err(|_| ParseError::Malformed { line, msg: format!("index {tok:?} out of range") })?;
        table.get(index).cloned().ok_or(ParseError::UnknownIndex { line, index })
    } else {
        tok.parse().map_err(|e| ParseError::Malformed { line, msg: format!("bad branch token {tok:?}: {e}") })
    }
}

pub fn parse_flowspec(text: &str, table: &MessageTable) -> Result<FlowSpec, FlowSpecError> {
    let mut flows: Vec<Flow> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let body = raw.split('#').next().unwrap_or_default().trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix("flow ") {
            let name = rest.trim().strip_suffix(':').map(str::trim).unwrap_or_default();
            if !crate::message::is_valid_token(name) {
                return Err(ParseError::Malformed {
                    line,
                    msg: format!("bad flow header {body:?}, expected `flow <name>:`"),
                }
                .into());
            }
            flows.push(Flow { name: name.to_owned(), branches: Vec::new() });
        } else if let Some(rest) = body.strip_prefix("branch:") {
            let flow = flows
                .last_mut()
                .ok_or(ParseError::Malformed { line, msg: "branch before any flow header".into() })?;
            let branch = rest
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| resolve(t, line, table))
                .collect::<Result<Vec<_>, _>>()?;
            if branch.is_empty() {
                return Err(ParseError::Malformed { line, msg: "branch lists no messages".into() }.into());
            }
            flow.branches.push(branch);
        } else {
            return Err(ParseError::Malformed {
                line,
                msg: format!("expected `flow <name>:` or `branch: ...`, got {body:?}"),
            }
            .into());
        }
    }
    FlowSpec::new(flows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub instances_per_flow: usize,
    pub seed: u64,
    /// Most foreign messages allowed between two consecutive messages of
    /// one instance.
    pub max_gap: usize,
    pub simul_prob: f64,
    /// Tag every instance with a `pid` attribute.
    pub tag_pid: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { instances_per_flow: 1, seed: 0, max_gap: 10, simul_prob: 0.0, tag_pid: false }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), FlowSpecError> {
        if self.instances_per_flow == 0 {
            return Err(FlowSpecError::Config("instances_per_flow must be positive".into()));
        }
        if self.max_gap == 0 {
            return Err(FlowSpecError::Config("max_gap must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.simul_prob) {
            return Err(FlowSpecError::Config(format!("simul_prob {} is outside [0, 1]", self.simul_prob)));
        }
        Ok(())
    }
}

/// Where one generated flow instance ended up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub flow: usize,
    pub branch: usize,
    pub pid: u64,
    /// Flattened trace positions of the instance's messages, in branch order.
    pub positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrace {
    pub trace: Trace,
    pub instances: Vec<InstanceRecord>,
}

#[derive(Debug, Clone, Copy)]
struct Active {
    id: usize,
    next: usize,
    slack: usize,
}

/// Every active instance can still be served in time: with slacks sorted
/// ascending, the j-th one tolerates at least j foreign messages.
fn schedulable(slacks: &mut [usize]) -> bool {
    slacks.sort_unstable();
    slacks.iter().enumerate().all(|(j, s)| *s >= j)
}

#[derive(Debug, Clone, Copy)]
enum Pick {
    Advance(usize),
    Start,
}

pub fn generate(spec: &FlowSpec, cfg: &GenConfig) -> Result<Trace, FlowSpecError> {
    generate_with_truth(spec, cfg).map(|g| g.trace)
}

/// Runs `cfg.instances_per_flow` instances of every flow concurrently. Each
/// step emits the next message of a uniformly chosen instance among the
/// active ones plus "start a new instance", skipping choices after which
/// some active instance could no longer meet its gap bound.
pub fn generate_with_truth(spec: &FlowSpec, cfg: &GenConfig) -> Result<GeneratedTrace, FlowSpecError> {
    spec.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut records = Vec::new();
    for (fi, flow) in spec.flows.iter().enumerate() {
        for _ in 0..cfg.instances_per_flow {
            records.push(InstanceRecord {
                flow: fi,
                branch: rng.gen_range(0..flow.branches.len()),
                pid: records.len() as u64 + 1,
                positions: Vec::new(),
            });
        }
    }
    let branch_of = |r: &InstanceRecord| &spec.flows[r.flow].branches[r.branch];

    let mut unstarted: Vec<usize> = (0..records.len()).collect();
    let mut active: Vec<Active> = Vec::new();
    let mut emitted: Vec<usize> = Vec::new();

    while !unstarted.is_empty() || !active.is_empty() {
        let mut picks: Vec<Pick> = (0..active.len()).map(Pick::Advance).collect();
        if !unstarted.is_empty() {
            picks.push(Pick::Start);
        }
        let feasible: Vec<Pick> = picks
            .into_iter()
            .filter(|p| {
                let mut slacks: Vec<usize> = Vec::with_capacity(active.len() + 1);
                for (i, a) in active.iter().enumerate() {
                    match p {
                        Pick::Advance(j) if *j == i => {
                            if a.next + 1 < branch_of(&records[a.id]).len() {
                                slacks.push(cfg.max_gap);
                            }
                        }
                        _ => match a.slack.checked_sub(1) {
                            Some(s) => slacks.push(s),
                            None => return false,
                        },
                    }
                }
                // A fresh instance with a single-message branch finishes at
                // once; otherwise it joins with a full budget.
                if matches!(p, Pick::Start) {
                    slacks.push(cfg.max_gap);
                }
                schedulable(&mut slacks)
            })
            .collect();
        let pick = *feasible.choose(&mut rng).expect("the most urgent instance is always schedulable");

        let (slot, id) = match pick {
            Pick::Advance(i) => (i, active[i].id),
            Pick::Start => {
                let id = unstarted.remove(rng.gen_range(0..unstarted.len()));
                active.push(Active { id, next: 0, slack: cfg.max_gap });
                (active.len() - 1, id)
            }
        };
        records[id].positions.push(emitted.len());
        emitted.push(id);
        for (i, a) in active.iter_mut().enumerate() {
            if i == slot {
                a.next += 1;
                a.slack = cfg.max_gap;
            } else {
                a.slack -= 1;
            }
        }
        if active[slot].next == branch_of(&records[id]).len() {
            active.remove(slot);
        }
    }

    let instance_at = |pos: usize| -> MessageInstance {
        let r = &records[emitted[pos]];
        let k = r.positions.iter().position(|p| *p == pos).expect("recorded position");
        let inst = MessageInstance::new(branch_of(r)[k].clone());
        if cfg.tag_pid {
            inst.with_attr("pid", AttrValue::Int(r.pid as i64))
        } else {
            inst
        }
    };
    let mut trace = Trace::default();
    let mut pos = 0;
    while pos < emitted.len() {
        let pair = pos + 1 < emitted.len()
            && emitted[pos] != emitted[pos + 1]
            && cfg.simul_prob > 0.0
            && rng.gen_bool(cfg.simul_prob);
        let width = if pair { 2 } else { 1 };
        let members = (pos..pos + width).map(instance_at).collect();
        trace.push(TraceEvent::new(members).expect("non-empty"));
        pos += width;
    }
    Ok(GeneratedTrace { trace, instances: records })
}

/// Reference model of a spec: per flow, a trie over its branches with
/// private states; the last message of every branch returns to `q0`.
pub fn ground_truth_fsa(spec: &FlowSpec) -> Result<Fsa, FlowSpecError> {
    spec.validate()?;
    let mut fsa = Fsa::new();
    let mut initials = HashSet::new();
    for flow in &spec.flows {
        if !initials.insert(flow.initial()) {
            return Err(FlowSpecError::Nondeterministic(format!(
                "initial message {} starts more than one flow",
                flow.initial()
            )));
        }
    }
    for m in spec.messages() {
        fsa.add_symbol(&m);
    }
    let mut next_name = 1;
    for flow in &spec.flows {
        for branch in &flow.branches {
            let mut at = fsa.initial();
            for (k, m) in branch.iter().enumerate() {
                let last = k + 1 == branch.len();
                let sym = fsa.symbol(m).expect("symbol registered");
                let existing = fsa.step(at, sym);
                let to = match (existing, last) {
                    (Some(q), true) if q == fsa.initial() => q,
                    (Some(q), false) if q != fsa.initial() => q,
                    (Some(_), _) => {
                        return Err(FlowSpecError::Nondeterministic(format!(
                            "flow {}: branches disagree after {}",
                            flow.name, m
                        )))
                    }
                    (None, true) => fsa.initial(),
                    (None, false) => {
                        let q = fsa.add_state(format!("q{next_name}"));
                        next_name += 1;
                        q
                    }
                };
                fsa.add_transition(at, m, to).map_err(|e| FlowSpecError::Nondeterministic(e.to_string()))?;
                at = to;
            }
        }
    }
    Ok(fsa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{acceptance_ratio, Strategy};
    use crate::message::parse_message_table;
    use crate::trace::parse_trace;

    const FIG1: &str =
        "flow cpu0:\n  branch: 1 2\n  branch: 1 5 6 2\nflow cpu1:\n  branch: 3 4\n  branch: 3 5 6 4\n";

    fn table() -> MessageTable {
        parse_message_table(
            "1 (cpu0:cache:rd_req)\n2 (cache:cpu0:rd_resp)\n3 (cpu1:cache:rd_req)\n\
             4 (cache:cpu1:rd_resp)\n5 (cache:mem:rd_req)\n6 (mem:cache:rd_resp)\n",
        )
        .unwrap()
    }

    fn spec() -> FlowSpec {
        parse_flowspec(FIG1, &table()).unwrap()
    }

    fn idx(t: &MessageTable, m: &Message) -> u32 {
        t.index_of(m).unwrap()
    }

    #[test]
    fn parses_two_flows() {
        let t = table();
        let s = spec();
        assert_eq!(s.flows.len(), 2);
        let b: Vec<Vec<u32>> =
            s.flows[0].branches.iter().map(|b| b.iter().map(|m| idx(&t, m)).collect()).collect();
        assert_eq!(b, vec![vec![1, 2], vec![1, 5, 6, 2]]);
        assert_eq!(s.flows[1].terminals().len(), 1);
    }

    #[test]
    fn rejects_non_causal_branch() {
        let err = parse_flowspec("flow f:\n branch: 1 3\n", &table()).unwrap_err();
        assert!(matches!(err, FlowSpecError::NotCausal { .. }));
    }

    #[test]
    fn rejects_mismatched_initial() {
        let err = parse_flowspec("flow f:\n branch: 1 2\n branch: 3 4\n", &table()).unwrap_err();
        assert!(matches!(err, FlowSpecError::InitialMismatch { .. }));
    }

    #[test]
    fn rejects_unknown_index_and_garbage() {
        assert!(matches!(
            parse_flowspec("flow f:\n branch: 1 9\n", &table()),
            Err(FlowSpecError::Parse(ParseError::UnknownIndex { line: 2, index: 9 }))
        ));
        assert!(parse_flowspec("branch: 1 2\n", &table()).is_err());
        assert!(parse_flowspec("flow f\n", &table()).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = GenConfig { simul_prob: 1.5, ..GenConfig::default() };
        assert!(generate(&spec(), &bad).is_err());
        let bad = GenConfig { max_gap: 0, ..GenConfig::default() };
        assert!(generate(&spec(), &bad).is_err());
    }

    #[test]
    fn single_instance_is_contiguous() {
        let s = parse_flowspec("flow f:\n branch: 1 5 6 2\n", &table()).unwrap();
        let cfg = GenConfig { max_gap: 1, ..GenConfig::default() };
        let t = generate(&s, &cfg).unwrap();
        let got: Vec<u32> = t.instances().map(|(_, i)| idx(&table(), &i.message)).collect();
        assert_eq!(got, vec![1, 5, 6, 2]);
    }

    #[test]
    fn gap_bound_and_completion() {
        for seed in 0..30 {
            for gap in [1, 2, 3, 10] {
                let cfg =
                    GenConfig { instances_per_flow: 6, seed, max_gap: gap, simul_prob: 0.3, tag_pid: false };
                let g = generate_with_truth(&spec(), &cfg).unwrap();
                assert_eq!(g.instances.len(), 12);
                let total: usize =
                    g.instances.iter().map(|r| spec().flows[r.flow].branches[r.branch].len()).sum();
                assert_eq!(g.trace.msg_count(), total);
                for r in &g.instances {
                    for w in r.positions.windows(2) {
                        assert!(w[1] - w[0] - 1 <= gap, "seed {seed} gap {gap}: {r:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = GenConfig {
            instances_per_flow: 5,
            seed: 42,
            simul_prob: 0.2,
            tag_pid: true,
            ..GenConfig::default()
        };
        let a = generate(&spec(), &cfg).unwrap();
        let b = generate(&spec(), &cfg).unwrap();
        assert_eq!(a, b);
        let c = generate(&spec(), &GenConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    /// Backtracking decomposition of a sequential trace into flow instances.
    fn decomposes(
        spec: &FlowSpec,
        msgs: &[Message],
        open: &mut Vec<(usize, Vec<Message>)>,
        done: &mut Vec<usize>,
    ) -> bool {
        let Some((m, rest)) = msgs.split_first() else {
            return open.is_empty();
        };
        for i in 0..open.len() {
            let (f, prefix) = open[i].clone();
            let mut ext = prefix.clone();
            ext.push(m.clone());
            let branches = &spec.flows[f].branches;
            if !branches.iter().any(|b| b.starts_with(&ext)) {
                continue;
            }
            if branches.contains(&ext) {
                open.remove(i);
                done.push(f);
                if decomposes(spec, rest, open, done) {
                    return true;
                }
                done.pop();
                open.insert(i, (f, prefix.clone()));
            }
            if branches.iter().any(|b| b.len() > ext.len() && b.starts_with(&ext)) {
                open[i].1 = ext;
                if decomposes(spec, rest, open, done) {
                    return true;
                }
                open[i].1 = prefix;
            }
        }
        for (f, flow) in spec.flows.iter().enumerate() {
            if flow.initial() == m {
                let single = flow.branches.iter().any(|b| b.len() == 1);
                if single {
                    done.push(f);
                    if decomposes(spec, rest, open, done) {
                        return true;
                    }
                    done.pop();
                }
                open.push((f, vec![m.clone()]));
                if decomposes(spec, rest, open, done) {
                    return true;
                }
                open.pop();
            }
        }
        false
    }

    #[test]
    fn one_instance_per_flow_decomposes() {
        let s = spec();
        for seed in 0..20 {
            let cfg = GenConfig { seed, ..GenConfig::default() };
            let t = generate(&s, &cfg).unwrap();
            let msgs: Vec<Message> = t.instances().map(|(_, i)| i.message.clone()).collect();
            let mut done = Vec::new();
            assert!(decomposes(&s, &msgs, &mut Vec::new(), &mut done), "seed {seed}");
            done.sort();
            assert_eq!(done, vec![0, 1]);
        }
    }

    #[test]
    fn pid_tags_follow_instances() {
        let cfg = GenConfig { instances_per_flow: 3, tag_pid: true, ..GenConfig::default() };
        let g = generate_with_truth(&spec(), &cfg).unwrap();
        let flat: Vec<_> = g.trace.instances().map(|(_, i)| i.clone()).collect();
        for r in &g.instances {
            for p in &r.positions {
                assert_eq!(flat[*p].attrs["pid"], AttrValue::Int(r.pid as i64));
            }
        }
    }

    #[test]
    fn ground_truth_paths() {
        let t = table();
        let f = ground_truth_fsa(&spec()).unwrap();
        let sym = |i: u32| f.symbol(t.get(i).unwrap()).unwrap();
        let q1 = f.step(0, sym(1)).unwrap();
        assert_eq!(f.state_name(q1), "q1");
        assert_eq!(f.step(q1, sym(2)), Some(0));
        let q3 = f.step(0, sym(3)).unwrap();
        assert_ne!(f.step(q1, sym(5)), f.step(q3, sym(5)));
        assert_eq!(f.states().len(), 7);
    }

    #[test]
    fn ground_truth_single_branch() {
        let s = parse_flowspec("flow f:\n branch: 1 2\n", &table()).unwrap();
        let f = ground_truth_fsa(&s).unwrap();
        assert_eq!(f.states().len(), 2);
        assert_eq!(f.transition_count(), 2);
    }

    #[test]
    fn ground_truth_rejects_shared_initial() {
        let s = parse_flowspec("flow a:\n branch: 1 2\nflow b:\n branch: 1 5 6 2\n", &table()).unwrap();
        assert!(matches!(ground_truth_fsa(&s), Err(FlowSpecError::Nondeterministic(_))));
    }

    #[test]
    fn ground_truth_accepts_trace_one() {
        let t = table();
        let f = ground_truth_fsa(&spec()).unwrap();
        let tr = parse_trace("1 3\n1\n2\n5\n1\n5\n6\n2\n4\n6\n2\n", &t).unwrap();
        let r = acceptance_ratio(&f, &tr, Strategy::OldestFirst).unwrap();
        assert_eq!((r.accepted, r.total), (12, 12));
    }
}
