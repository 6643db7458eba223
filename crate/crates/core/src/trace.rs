//! Traces: ordered sequences of events, each event a non-empty multiset of
//! message instances observed at the same tick.
//!
//! Text format, one event per line:
//!
//! ```text
//! # comment
//! {1,3}
//! 1
//! cpu0:cache:rd_req;addr=4096;pid=7
//! 2;pid=7 5
//! ```
//!
//! A token is a message-table index or an inline `src:dest:cmd` triple,
//! optionally followed by `;key=value` attributes. Several tokens on one line
//! (plain or inside `{..}`) form a simultaneous event.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::ParseError;
use crate::message::{is_valid_token, AttrValue, Attrs, Message, MessageTable};

/// One observed occurrence of a message with its runtime attributes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MessageInstance {
    pub message: Message,
    #[serde(default, skip_serializing_if = "Attrs::is_empty")]
    pub attrs: Attrs,
}

impl MessageInstance {
    pub fn new(message: Message) -> Self {
        MessageInstance { message, attrs: Attrs::new() }
    }

    pub fn with_attr(mut self, key: &str, value: AttrValue) -> Self {
        self.attrs.insert(key.to_owned(), value);
        self
    }
}

impl From<Message> for MessageInstance {
    fn from(message: Message) -> Self {
        MessageInstance::new(message)
    }
}

/// Messages observed at one tick. No order is defined among members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    messages: Vec<MessageInstance>,
}

impl TraceEvent {
    /// `None` for an empty member list.
    pub fn new(messages: Vec<MessageInstance>) -> Option<Self> {
        (!messages.is_empty()).then_some(TraceEvent { messages })
    }

    pub fn messages(&self) -> &[MessageInstance] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

/// Location of a message instance: its event index and its index in the
/// flattened message sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Position {
    pub event: usize,
    pub flat: usize,
}

impl Position {
    /// `<_ρ`: strictly earlier event. Members of one event are unordered.
    pub fn precedes(&self, other: &Position) -> bool {
        self.event < other.event
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    events: Vec<TraceEvent>,
    msg_count: usize,
}

impl Trace {
    pub fn new(events: Vec<TraceEvent>) -> Self {
        let msg_count = events.iter().map(TraceEvent::len).sum();
        Trace { events, msg_count }
    }

    /// One single-message event per item.
    pub fn from_messages<I: IntoIterator<Item = Message>>(msgs: I) -> Self {
        Trace::new(msgs.into_iter().map(|m| TraceEvent { messages: vec![m.into()] }).collect())
    }

    pub fn push(&mut self, event: TraceEvent) {
        self.msg_count += event.len();
        self.events.push(event);
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn msg_count(&self) -> usize {
        self.msg_count
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Every instance with its position, in event order then member order.
    pub fn instances(&self) -> impl Iterator<Item = (Position, &MessageInstance)> {
        self.events
            .iter()
            .enumerate()
            .flat_map(|(ei, ev)| ev.messages.iter().map(move |m| (ei, m)))
            .enumerate()
            .map(|(flat, (event, m))| (Position { event, flat }, m))
    }

    /// Messages in the order they first occur.
    pub fn unique_messages(&self) -> Vec<Message> {
        unique_messages(std::slice::from_ref(self))
    }
}

/// Unique messages over all traces, deduplicated on identity, in
/// first-occurrence order.
pub fn unique_messages(traces: &[Trace]) -> Vec<Message> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in traces {
        for (_, inst) in t.instances() {
            if seen.insert(&inst.message) {
                out.push(inst.message.clone());
            }
        }
    }
    out
}

fn parse_token(tok: &str, line: usize, table: &MessageTable) -> Result<MessageInstance, ParseError> {
    let malformed = |msg: String| ParseError::Malformed { line, msg };
    let mut parts = tok.split(';');
    let head = parts.next().unwrap_or_default();
    let message = if !head.is_empty() && head.bytes().all(|b| b.is_ascii_digit()) {
        let index: u32 = head.parse().map_err(|_| malformed(format!("index {head:?} out of range")))?;
        table.get(index).cloned().ok_or(ParseError::UnknownIndex { line, index })?
    } else {
        head.parse::<Message>().map_err(|e| malformed(format!("bad token {tok:?}: {e}")))?
    };

    let mut attrs = Attrs::new();
    for kv in parts {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| malformed(format!("attribute {kv:?} is not key=value")))?;
        if !is_valid_token(k) || !is_valid_token(v) {
            return Err(malformed(format!("bad attribute {kv:?}")));
        }
        if attrs.insert(k.to_owned(), AttrValue::parse(v)).is_some() {
            return Err(malformed(format!("attribute {k:?} given twice")));
        }
    }
    Ok(MessageInstance { message, attrs })
}

/// Parses the line-per-event trace format. Index tokens resolve through
/// `table`; inline triples need no table.
pub fn parse_trace(text: &str, table: &MessageTable) -> Result<Trace, ParseError> {
    let mut trace = Trace::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut body = line;
        if let Some(inner) = body.strip_prefix('{') {
            body = inner
                .strip_suffix('}')
                .ok_or(ParseError::Malformed { line: line_no, msg: "unterminated `{`".into() })?;
        }
        let mut members = Vec::new();
        for tok in body.split(|c: char| c == ',' || c.is_whitespace()) {
            if tok.is_empty() {
                continue;
            }
            members.push(parse_token(tok, line_no, table)?);
        }
        let event = TraceEvent::new(members).ok_or(ParseError::EmptyEvent { line: line_no })?;
        trace.push(event);
    }
    Ok(trace)
}

fn write_instance(out: &mut String, inst: &MessageInstance, table: Option<&MessageTable>) {
    match table.and_then(|t| t.index_of(&inst.message)) {
        Some(idx) => out.push_str(&idx.to_string()),
        None => out.push_str(&inst.message.to_string()),
    }
    for (k, v) in &inst.attrs {
        out.push(';');
        out.push_str(k);
        out.push('=');
        out.push_str(&v.to_string());
    }
}

/// Serializes in the line-per-event format. With a table, known messages are
/// written as indices; everything else as inline triples.
pub fn serialize_trace(trace: &Trace, table: Option<&MessageTable>) -> String {
    let mut out = String::new();
    for ev in trace.events() {
        let multi = ev.len() > 1;
        if multi {
            out.push('{');
        }
        for (i, inst) in ev.messages().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write_instance(&mut out, inst, table);
        }
        if multi {
            out.push('}');
        }
        out.push('\n');
    }
    out
}
