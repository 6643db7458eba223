//! Message identities, per-instance attributes and the index table that maps
//! small integers to unique `(src, dest, cmd)` triples.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ParseError;

/// Characters that delimit tokens in the text formats and therefore may not
/// appear inside component names, commands, attribute keys or values.
pub const RESERVED_CHARS: &[char] = &[':', ';', '=', ',', '{', '}', '(', ')', '#', '"'];

pub fn is_valid_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || RESERVED_CHARS.contains(&c))
}

/// A unique message: the identity of a communication between two components.
///
/// Runtime data such as addresses or packet ids is attached to
/// [`MessageInstance`](crate::trace::MessageInstance)s, never to the identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Message {
    pub src: String,
    pub dest: String,
    pub cmd: String,
}

impl Message {
    pub fn new(src: &str, dest: &str, cmd: &str) -> Result<Self, String> {
        for (what, tok) in [("src", src), ("dest", dest), ("cmd", cmd)] {
            if !is_valid_token(tok) {
                return Err(format!("invalid {what} token {tok:?}"));
            }
        }
        Ok(Message { src: src.to_owned(), dest: dest.to_owned(), cmd: cmd.to_owned() })
    }

    /// Structural causality: `self` may trigger `next` when the component
    /// receiving `self` is the one that emits `next`.
    pub fn causes(&self, next: &Message) -> bool {
        self.dest == next.src
    }
}

/// `causal(m1, m2)` holds iff `m1.dest == m2.src`.
pub fn causal(m1: &Message, m2: &Message) -> bool {
    m1.causes(m2)
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.src, self.dest, self.cmd)
    }
}

impl FromStr for Message {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [src, dest, cmd] => Message::new(src, dest, cmd),
            _ => Err(format!("expected src:dest:cmd, got {s:?}")),
        }
    }
}

/// Value of a per-instance attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Int(i64),
    Str(String),
}

impl AttrValue {
    /// Canonical integers become `Int`, everything else stays a string, so
    /// that printing and reparsing is lossless.
    pub fn parse(s: &str) -> AttrValue {
        match s.parse::<i64>() {
            Ok(v) if v.to_string() == s => AttrValue::Int(v),
            _ => AttrValue::Str(s.to_owned()),
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            AttrValue::Int(v) => Some(*v),
            AttrValue::Str(_) => None,
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Int(v) => write!(f, "{v}"),
            AttrValue::Str(s) => f.write_str(s),
        }
    }
}

pub type Attrs = BTreeMap<String, AttrValue>;

/// Bijection between dense indices `1..=n` and unique messages.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageTable {
    entries: BTreeMap<u32, Message>,
    lookup: HashMap<Message, u32>,
}

impl MessageTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a table numbering `msgs` from 1 in the given order.
    pub fn from_messages<I: IntoIterator<Item = Message>>(msgs: I) -> Self {
        let mut table = Self::new();
        for m in msgs {
            table.push(m);
        }
        table
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u32) -> Option<&Message> {
        self.entries.get(&index)
    }

    pub fn index_of(&self, msg: &Message) -> Option<u32> {
        self.lookup.get(msg).copied()
    }

    /// Appends `msg` with the next free index, or returns its existing index.
    pub fn push(&mut self, msg: Message) -> u32 {
        if let Some(idx) = self.lookup.get(&msg) {
            return *idx;
        }
        let idx = self.entries.keys().next_back().map_or(1, |k| k + 1);
        self.lookup.insert(msg.clone(), idx);
        self.entries.insert(idx, msg);
        idx
    }

    /// Entries in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, &Message)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    /// A copy of this table extended with every message of `msgs` it lacks.
    pub fn extended<'a, I: IntoIterator<Item = &'a Message>>(&self, msgs: I) -> MessageTable {
        let mut out = self.clone();
        for m in msgs {
            out.push(m.clone());
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (idx, m) in self.iter() {
            out.push_str(&format!("{idx} ({m})\n"));
        }
        out
    }
}

/// Parses lines of the form `<index> (<src>:<dest>:<cmd>)`.
pub fn parse_message_table(text: &str) -> Result<MessageTable, ParseError> {
    let mut entries: BTreeMap<u32, Message> = BTreeMap::new();
    let mut lookup: HashMap<Message, u32> = HashMap::new();
    let mut first_line: BTreeMap<u32, usize> = BTreeMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |msg: String| ParseError::Malformed { line: line_no, msg };
        let (idx_str, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| malformed("expected `<index> (<src>:<dest>:<cmd>)`".into()))?;
        let index: u32 = idx_str.parse().map_err(|_| malformed(format!("bad index {idx_str:?}")))?;
        if index == 0 {
            return Err(malformed("indices start at 1".into()));
        }
        let triple = rest
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| malformed(format!("expected parenthesized triple, got {:?}", rest.trim())))?;
        let msg: Message = triple.trim().parse().map_err(malformed)?;

        if entries.contains_key(&index) {
            return Err(ParseError::DuplicateIndex { line: line_no, index });
        }
        if lookup.contains_key(&msg) {
            return Err(ParseError::DuplicateMessage { line: line_no, message: msg.to_string() });
        }
        lookup.insert(msg.clone(), index);
        entries.insert(index, msg);
        first_line.insert(index, line_no);
    }

    for (expected, (&index, &line)) in (1u32..).zip(first_line.iter()) {
        if index != expected {
            return Err(ParseError::Malformed {
                line,
                msg: format!("index {index} leaves a gap, expected {expected}"),
            });
        }
    }
    Ok(MessageTable { entries, lookup })
}
