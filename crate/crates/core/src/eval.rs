//! Acceptance ratio of a model on a trace.
//!
//! Every message either opens a new model instance (when `Δ(q0, m)` is
//! defined), advances one active instance, or is rejected. Instances that
//! return to `q0` are retired. Which instance advances is the strategy's
//! choice; the exhaustive strategy searches over those choices and over
//! member orders of simultaneous events for the maximum accepted count.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::FsaError;
use crate::fsa::{Fsa, StateId};
use crate::trace::Trace;

pub const DEFAULT_EXHAUSTIVE_LIMIT: u64 = 100_000;

/// Events larger than this are not permuted by the exhaustive search.
const MAX_PERMUTED_EVENT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    OldestFirst,
    NewestFirst,
    /// Bounded backtracking; `limit` search nodes, then oldest-first.
    Exhaustive {
        limit: u64,
    },
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::OldestFirst => f.write_str("oldest-first"),
            Strategy::NewestFirst => f.write_str("newest-first"),
            Strategy::Exhaustive { limit } => write!(f, "exhaustive:{limit}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oldest-first" | "oldest" => Ok(Strategy::OldestFirst),
            "newest-first" | "newest" => Ok(Strategy::NewestFirst),
            "exhaustive" => Ok(Strategy::Exhaustive { limit: DEFAULT_EXHAUSTIVE_LIMIT }),
            other => match other.strip_prefix("exhaustive:") {
                Some(n) => n
                    .parse()
                    .map(|limit| Strategy::Exhaustive { limit })
                    .map_err(|_| format!("bad exhaustive budget {n:?}")),
                None => {
                    Err(format!("unknown strategy {other:?} (oldest-first, newest-first, exhaustive[:N])"))
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedMessage {
    pub event: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub accepted: usize,
    pub total: usize,
    pub ratio: f64,
    pub rejected_positions: Vec<RejectedMessage>,
    pub strategy: String,
}

/// Current states of the active model instances, in creation order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecutionScenario {
    pub instances: Vec<StateId>,
}

impl ExecutionScenario {
    /// Greedy acceptance of one symbol. Returns whether it was accepted.
    fn accept(&mut self, fsa: &Fsa, sym: usize, newest_first: bool) -> bool {
        let q0 = fsa.initial();
        if let Some(q1) = fsa.step(q0, sym) {
            if q1 != q0 {
                self.instances.push(q1);
            }
            return true;
        }
        let pick = if newest_first {
            self.instances.iter().rposition(|q| fsa.step(*q, sym).is_some())
        } else {
            self.instances.iter().position(|q| fsa.step(*q, sym).is_some())
        };
        match pick {
            Some(i) => {
                self.advance(fsa, i, sym);
                true
            }
            None => false,
        }
    }

    fn advance(&mut self, fsa: &Fsa, i: usize, sym: usize) {
        let next = fsa.step(self.instances[i], sym).expect("caller checked the transition");
        if next == fsa.initial() {
            self.instances.remove(i);
        } else {
            self.instances[i] = next;
        }
    }
}

/// Per event, member indices sorted by the model's alphabet order; unknown
/// messages last. Returned as `(member index, symbol)`.
fn canonical_events(fsa: &Fsa, trace: &Trace) -> Vec<Vec<(usize, Option<usize>)>> {
    trace
        .events()
        .iter()
        .map(|ev| {
            let mut v: Vec<(usize, Option<usize>)> =
                ev.messages().iter().enumerate().map(|(i, inst)| (i, fsa.symbol(&inst.message))).collect();
            v.sort_by_key(|(i, s)| (s.is_none(), *s, *i));
            v
        })
        .collect()
}

fn report(trace: &Trace, rejected: Vec<(usize, usize)>, strategy: Strategy) -> AcceptanceReport {
    let total = trace.msg_count();
    let accepted = total - rejected.len();
    let mut rejected_positions: Vec<RejectedMessage> = rejected
        .into_iter()
        .map(|(event, member)| RejectedMessage {
            event,
            message: trace.events()[event].messages()[member].message.to_string(),
        })
        .collect();
    rejected_positions.sort_by(|a, b| (a.event, &a.message).cmp(&(b.event, &b.message)));
    AcceptanceReport {
        accepted,
        total,
        ratio: accepted as f64 / total as f64,
        rejected_positions,
        strategy: strategy.to_string(),
    }
}

fn greedy(fsa: &Fsa, trace: &Trace, newest_first: bool) -> Vec<(usize, usize)> {
    let mut scenario = ExecutionScenario::default();
    let mut rejected = Vec::new();
    for (ei, ev) in canonical_events(fsa, trace).into_iter().enumerate() {
        for (member, sym) in ev {
            let ok = sym.is_some_and(|s| scenario.accept(fsa, s, newest_first));
            if !ok {
                rejected.push((ei, member));
            }
        }
    }
    rejected
}

/// Acceptance ratio of `fsa` on `trace` under `strategy`.
pub fn acceptance_ratio(fsa: &Fsa, trace: &Trace, strategy: Strategy) -> Result<AcceptanceReport, FsaError> {
    if trace.msg_count() == 0 {
        return Err(FsaError::EmptyTrace);
    }
    let rejected = match strategy {
        Strategy::OldestFirst => greedy(fsa, trace, false),
        Strategy::NewestFirst => greedy(fsa, trace, true),
        Strategy::Exhaustive { limit } => {
            let baseline = greedy(fsa, trace, false);
            if baseline.is_empty() {
                baseline
            } else {
                let searched = exhaustive(fsa, trace, limit);
                if searched.len() <= baseline.len() {
                    searched
                } else {
                    baseline
                }
            }
        }
    };
    Ok(report(trace, rejected, strategy))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Action {
    Spawn,
    Advance(usize),
    Reject,
}

struct Exhaustive<'a> {
    fsa: &'a Fsa,
    events: Vec<Vec<(usize, Option<usize>)>>,
    /// Messages in events strictly after index i.
    after: Vec<usize>,
    memo: HashMap<(usize, u64, Vec<StateId>), usize>,
    nodes: u64,
    limit: u64,
}

impl<'a> Exhaustive<'a> {
    fn full_mask(&self, ei: usize) -> u64 {
        let n = self.events[ei].len().min(64);
        if n == 64 {
            u64::MAX
        } else {
            (1u64 << n) - 1
        }
    }

    /// Members that may be processed next from `mask`.
    fn next_members(&self, ei: usize, mask: u64) -> Vec<usize> {
        let ev = &self.events[ei];
        let set: Vec<usize> = (0..ev.len().min(64)).filter(|j| mask & (1 << j) != 0).collect();
        if ev.len() > MAX_PERMUTED_EVENT {
            return set.into_iter().take(1).collect();
        }
        let mut seen_syms = Vec::new();
        set.into_iter()
            .filter(|&j| {
                let s = ev[j].1;
                if seen_syms.contains(&s) {
                    false
                } else {
                    seen_syms.push(s);
                    true
                }
            })
            .collect()
    }

    fn actions(&self, sym: Option<usize>, scen: &[StateId]) -> Vec<Action> {
        let mut out = Vec::new();
        if let Some(s) = sym {
            if self.fsa.step(self.fsa.initial(), s).is_some() {
                out.push(Action::Spawn);
            }
            let mut tried: Vec<StateId> = Vec::new();
            for (i, q) in scen.iter().enumerate() {
                if !tried.contains(q) && self.fsa.step(*q, s).is_some() {
                    tried.push(*q);
                    out.push(Action::Advance(i));
                }
            }
        }
        out.push(Action::Reject);
        out
    }

    fn apply(&self, scen: &[StateId], sym: Option<usize>, a: Action) -> (usize, Vec<StateId>) {
        let mut next = ExecutionScenario { instances: scen.to_vec() };
        match (a, sym) {
            (Action::Spawn, Some(s)) => {
                let q1 = self.fsa.step(self.fsa.initial(), s).expect("spawn checked");
                if q1 != self.fsa.initial() {
                    next.instances.push(q1);
                }
                (1, next.instances)
            }
            (Action::Advance(i), Some(s)) => {
                next.advance(self.fsa, i, s);
                (1, next.instances)
            }
            _ => (0, next.instances),
        }
    }

    fn remaining(&self, ei: usize, mask: u64) -> usize {
        mask.count_ones() as usize + self.after[ei]
    }

    /// Oldest-first completion from the given point.
    fn greedy_from(&self, ei: usize, mask: u64, scen: &[StateId]) -> usize {
        let mut s = ExecutionScenario { instances: scen.to_vec() };
        let mut accepted = 0;
        for (e, ev) in self.events.iter().enumerate().skip(ei) {
            for (j, (_, sym)) in ev.iter().enumerate() {
                if e == ei && j < 64 && mask & (1 << j) == 0 {
                    continue;
                }
                if sym.is_some_and(|x| s.accept(self.fsa, x, false)) {
                    accepted += 1;
                }
            }
        }
        accepted
    }

    /// Maximum number of messages still acceptable from this point.
    fn best(&mut self, ei: usize, mask: u64, scen: &[StateId]) -> usize {
        if ei == self.events.len() {
            return 0;
        }
        if mask == 0 {
            let next_mask = if ei + 1 < self.events.len() { self.full_mask(ei + 1) } else { 0 };
            return self.best(ei + 1, next_mask, scen);
        }
        let mut key_states = scen.to_vec();
        key_states.sort_unstable();
        let key = (ei, mask, key_states);
        if let Some(v) = self.memo.get(&key) {
            return *v;
        }
        self.nodes += 1;
        let value = if self.nodes > self.limit {
            self.greedy_from(ei, mask, scen)
        } else {
            let perfect = self.remaining(ei, mask);
            let mut best = 0;
            'outer: for j in self.next_members(ei, mask) {
                let sym = self.events[ei][j].1;
                let rest = mask & !(1 << j);
                for a in self.actions(sym, scen) {
                    if a == Action::Reject && best + 1 >= perfect {
                        continue;
                    }
                    let (gain, next) = self.apply(scen, sym, a);
                    let v = gain + self.best(ei, rest, &next);
                    if v > best {
                        best = v;
                    }
                    if best == perfect {
                        break 'outer;
                    }
                }
            }
            best
        };
        self.memo.insert(key, value);
        value
    }

    /// Walks one optimal path and records the rejected members.
    fn replay(&mut self) -> Vec<(usize, usize)> {
        let mut rejected = Vec::new();
        let mut scen: Vec<StateId> = Vec::new();
        let mut ei = 0;
        let mut mask = if self.events.is_empty() { 0 } else { self.full_mask(0) };
        let mut target = self.best(ei, mask, &scen);
        while ei < self.events.len() {
            if mask == 0 {
                ei += 1;
                if ei < self.events.len() {
                    mask = self.full_mask(ei);
                }
                continue;
            }
            let mut chosen = None;
            'outer: for j in self.next_members(ei, mask) {
                let sym = self.events[ei][j].1;
                let rest = mask & !(1 << j);
                for a in self.actions(sym, &scen) {
                    let (gain, next) = self.apply(&scen, sym, a);
                    if gain + self.best(ei, rest, &next) == target {
                        chosen = Some((j, gain, next, rest));
                        break 'outer;
                    }
                }
            }
            let (j, gain, next, rest) = chosen.expect("an optimal action exists");
            if gain == 0 {
                rejected.push((ei, self.events[ei][j].0));
            }
            target -= gain;
            scen = next;
            mask = rest;
        }
        rejected
    }
}

fn exhaustive(fsa: &Fsa, trace: &Trace, limit: u64) -> Vec<(usize, usize)> {
    // Members beyond the 64-bit mask are never branched on; treat them as
    // separate single-message events so that they are still processed.
    let mut split = Vec::new();
    for ev in canonical_events(fsa, trace) {
        for chunk in ev.chunks(64) {
            split.push(chunk.to_vec());
        }
    }
    let events = split;
    let mut after = vec![0; events.len()];
    for i in (0..events.len().saturating_sub(1)).rev() {
        after[i] = after[i + 1] + events[i + 1].len();
    }
    let mut search = Exhaustive { fsa, events, after, memo: HashMap::new(), nodes: 0, limit };
    // Recursion depth grows with trace length.
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(512 << 20)
            .spawn_scoped(s, || search.replay())
            .expect("spawn evaluation thread")
            .join()
            .expect("evaluation thread panicked")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::{Message, MessageTable};
    use crate::trace::parse_trace;

    fn msg(s: &str) -> Message {
        s.parse().unwrap()
    }

    fn trace(text: &str) -> Trace {
        parse_trace(text, &MessageTable::new()).unwrap()
    }

    #[test]
    fn no_start_match_rejects() {
        let mut f = Fsa::new();
        let q1 = f.add_state("q1");
        f.add_transition(0, &msg("a:b:one"), q1).unwrap();
        let r = acceptance_ratio(&f, &trace("b:a:two"), Strategy::OldestFirst).unwrap();
        assert_eq!(r.ratio, 0.0);
        assert_eq!(r.rejected_positions, vec![RejectedMessage { event: 0, message: "b:a:two".into() }]);
    }

    #[test]
    fn empty_trace_is_an_error() {
        assert_eq!(
            acceptance_ratio(&Fsa::new(), &Trace::default(), Strategy::OldestFirst),
            Err(FsaError::EmptyTrace)
        );
    }

    #[test]
    fn strategy_strings() {
        assert_eq!("oldest-first".parse::<Strategy>().unwrap(), Strategy::OldestFirst);
        assert_eq!("exhaustive:5".parse::<Strategy>().unwrap(), Strategy::Exhaustive { limit: 5 });
        assert!("random".parse::<Strategy>().is_err());
        assert_eq!(Strategy::NewestFirst.to_string(), "newest-first");
    }

    /// q0 -a-> s1 -b-> q0, s1 -c-> s2 -b-> q0: `b` is ambiguous between s1
    /// and s2 once two instances are active.
    fn ambiguous() -> Fsa {
        let mut f = Fsa::new();
        let s1 = f.add_state("s1");
        let s2 = f.add_state("s2");
        f.add_transition(0, &msg("x:y:a"), s1).unwrap();
        f.add_transition(s1, &msg("y:x:b"), 0).unwrap();
        f.add_transition(s1, &msg("y:y:c"), s2).unwrap();
        f.add_transition(s2, &msg("y:x:b"), 0).unwrap();
        f
    }

    #[test]
    fn exhaustive_beats_greedy_on_ambiguous_choice() {
        // Instance A: a c b, instance B: a b. Oldest-first gives the first b
        // to A (at s2), leaving B at s1; the trailing c then has no taker.
        let t = trace("x:y:a\nx:y:a\ny:y:c\ny:x:b\ny:y:c\ny:x:b\n");
        // Two a's, c (A->s2), b, c, b.
        let f = ambiguous();
        let greedy = acceptance_ratio(&f, &t, Strategy::OldestFirst).unwrap();
        let best = acceptance_ratio(&f, &t, Strategy::Exhaustive { limit: 10_000 }).unwrap();
        assert!(best.accepted >= greedy.accepted);
        assert_eq!(best.accepted, 6);
        assert_eq!(best.accepted + best.rejected_positions.len(), best.total);
    }

    #[test]
    fn exhaustive_permutes_simultaneous_members() {
        let mut f = Fsa::new();
        let s1 = f.add_state("s1");
        f.add_transition(0, &msg("p:q:start"), s1).unwrap();
        f.add_transition(s1, &msg("q:p:end"), 0).unwrap();
        // Canonical order puts start (symbol 0) first anyway; put end first
        // in the alphabet to force a bad greedy order.
        let mut g = Fsa::new();
        g.add_symbol(&msg("q:p:end"));
        let s1g = g.add_state("s1");
        g.add_transition(0, &msg("p:q:start"), s1g).unwrap();
        g.add_transition(s1g, &msg("q:p:end"), 0).unwrap();
        let t = trace("{p:q:start,q:p:end}\n");
        assert_eq!(acceptance_ratio(&g, &t, Strategy::OldestFirst).unwrap().accepted, 1);
        assert_eq!(acceptance_ratio(&g, &t, Strategy::Exhaustive { limit: 100 }).unwrap().accepted, 2);
        assert_eq!(acceptance_ratio(&f, &t, Strategy::OldestFirst).unwrap().accepted, 2);
    }

    #[test]
    fn newest_first_differs_from_oldest_first() {
        let f = ambiguous();
        let t = trace("x:y:a\ny:y:c\nx:y:a\ny:x:b\n");
        let o = acceptance_ratio(&f, &t, Strategy::OldestFirst).unwrap();
        let n = acceptance_ratio(&f, &t, Strategy::NewestFirst).unwrap();
        assert_eq!(o.accepted, 4);
        assert_eq!(n.accepted, 4);
        assert_eq!(n.strategy, "newest-first");
    }

    #[test]
    fn tiny_budget_falls_back_but_never_loses_to_greedy() {
        let f = ambiguous();
        let t = trace("x:y:a\nx:y:a\ny:y:c\ny:x:b\ny:y:c\ny:x:b\n");
        let greedy = acceptance_ratio(&f, &t, Strategy::OldestFirst).unwrap();
        let r = acceptance_ratio(&f, &t, Strategy::Exhaustive { limit: 1 }).unwrap();
        assert!(r.accepted >= greedy.accepted);
    }
}
