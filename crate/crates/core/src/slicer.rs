//! Trace slicing on runtime attributes (packet id, context id, cache-block
//! address). Edge supports are then counted per slice so that instances
//! carrying different keys are never correlated.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::SliceError;
use crate::message::AttrValue;
use crate::trace::{Trace, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AddressMode {
    #[default]
    Off,
    /// Map address `p` to block `p / line_size`.
    Block(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingAttr {
    /// Each instance without the attribute becomes its own slice.
    #[default]
    Isolate,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlicePolicy {
    pub attribute: String,
    pub address_mode: AddressMode,
    pub missing_attr: MissingAttr,
}

impl SlicePolicy {
    pub fn new(attribute: &str) -> Self {
        SlicePolicy {
            attribute: attribute.to_owned(),
            address_mode: AddressMode::Off,
            missing_attr: MissingAttr::Isolate,
        }
    }

    pub fn with_block(mut self, line_size: u64) -> Result<Self, SliceError> {
        if line_size == 0 || !line_size.is_power_of_two() {
            return Err(SliceError::Policy(
                self.to_string(),
                format!("line size {line_size} is not a positive power of two"),
            ));
        }
        self.address_mode = AddressMode::Block(line_size);
        Ok(self)
    }

    pub fn with_missing(mut self, missing: MissingAttr) -> Self {
        self.missing_attr = missing;
        self
    }
}

impl fmt::Display for SlicePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.attribute)?;
        if let AddressMode::Block(n) = self.address_mode {
            write!(f, ":block={n}")?;
        }
        if self.missing_attr == MissingAttr::Drop {
            f.write_str(":drop")?;
        }
        Ok(())
    }
}

/// One or more policies applied in sequence; several policies slice on a
/// composite key.
///
/// String form: `pid`, `addr:block=64`, `ctx:drop`, `pid+addr:block=64`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceSpec(pub Vec<SlicePolicy>);

impl FromStr for SliceSpec {
    type Err = SliceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| SliceError::Policy(s.to_owned(), why.to_owned());
        let mut parts = Vec::new();
        for part in s.split('+') {
            let mut fields = part.trim().split(':');
            let attr = fields.next().unwrap_or_default();
            if !crate::message::is_valid_token(attr) {
                return Err(bad("missing attribute name"));
            }
            let mut policy = SlicePolicy::new(attr);
            for opt in fields {
                match opt.split_once('=') {
                    Some(("block", n)) => {
                        let n: u64 = n.parse().map_err(|_| bad("block size must be an integer"))?;
                        policy = policy.with_block(n)?;
                    }
                    None if opt == "drop" => policy.missing_attr = MissingAttr::Drop,
                    None if opt == "isolate" => policy.missing_attr = MissingAttr::Isolate,
                    _ => return Err(bad(&format!("unknown option {opt:?}"))),
                }
            }
            parts.push(policy);
        }
        Ok(SliceSpec(parts))
    }
}

impl fmt::Display for SliceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Cache-block number of an address: `floor(addr / line_size)`.
pub fn address_block(addr: u64, line_size: u64) -> u64 {
    addr / line_size
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Key {
    Value(AttrValue),
    Isolated(usize, usize),
}

fn key_of(policy: &SlicePolicy, value: &AttrValue) -> Result<AttrValue, SliceError> {
    match policy.address_mode {
        AddressMode::Off => Ok(value.clone()),
        AddressMode::Block(n) => {
            let v = value.as_int().ok_or_else(|| SliceError::NonIntegerAddress {
                attr: policy.attribute.clone(),
                value: value.to_string(),
            })?;
            let addr = u64::try_from(v).map_err(|_| SliceError::NegativeAddress(v))?;
            Ok(AttrValue::Int(address_block(addr, n) as i64))
        }
    }
}

/// Splits `trace` into one sub-trace per distinct key, ordered by the first
/// occurrence of each key. Sub-traces keep the original event grouping and
/// order restricted to their own instances.
pub fn slice(trace: &Trace, policy: &SlicePolicy) -> Result<Vec<Trace>, SliceError> {
    let mut slot_of: HashMap<Key, usize> = HashMap::new();
    let mut slices: Vec<Trace> = Vec::new();
    for (ei, ev) in trace.events().iter().enumerate() {
        let mut per_slot: Vec<(usize, Vec<_>)> = Vec::new();
        for (mi, inst) in ev.messages().iter().enumerate() {
            let key = match inst.attrs.get(&policy.attribute) {
                Some(v) => Key::Value(key_of(policy, v)?),
                None => match policy.missing_attr {
                    MissingAttr::Drop => continue,
                    MissingAttr::Isolate => Key::Isolated(ei, mi),
                },
            };
            let slot = *slot_of.entry(key).or_insert_with(|| {
                slices.push(Trace::default());
                slices.len() - 1
            });
            match per_slot.iter_mut().find(|(s, _)| *s == slot) {
                Some((_, v)) => v.push(inst.clone()),
                None => per_slot.push((slot, vec![inst.clone()])),
            }
        }
        for (slot, members) in per_slot {
            slices[slot].push(TraceEvent::new(members).expect("non-empty by construction"));
        }
    }
    Ok(slices)
}

/// Applies every policy of `spec` in turn, refining slices into composite-key
/// slices.
pub fn slice_all(trace: &Trace, spec: &SliceSpec) -> Result<Vec<Trace>, SliceError> {
    let mut current = vec![trace.clone()];
    for policy in &spec.0 {
        let mut next = Vec::new();
        for t in &current {
            next.extend(slice(t, policy)?);
        }
        current = next;
    }
    Ok(current)
}
