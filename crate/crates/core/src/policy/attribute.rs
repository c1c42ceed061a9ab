//! Contextual attributes and their "bag of bits" tokens.
//!
//! A string attribute becomes one token. A `w`-bit number becomes `w`
//! tokens, each revealing a single bit position and wildcarding the rest,
//! so that comparisons against a threshold reduce to AND/OR trees over
//! single-bit leaves.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tree::ConditionTree;
use crate::error::PolicyError;

pub const MIN_BIT_WIDTH: u32 = 2;
pub const MAX_BIT_WIDTH: u32 = 32;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeValue {
    Number { value: u64, bit_width: u32 },
    Text(String),
}

/// One piece of contextual information, e.g. `Location = Cardiology-ward` or
/// `AT = 10` in five bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeAssertion {
    pub name: String,
    pub value: AttributeValue,
}

impl AttributeAssertion {
    pub fn text(name: impl Into<String>, value: impl Into<String>) -> Self {
        AttributeAssertion {
            name: name.into(),
            value: AttributeValue::Text(value.into()),
        }
    }

    pub fn number(name: impl Into<String>, value: u64, bit_width: u32) -> Self {
        AttributeAssertion {
            name: name.into(),
            value: AttributeValue::Number { value, bit_width },
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.name.is_empty() {
            return Err(PolicyError::Empty("attribute name"));
        }
        match &self.value {
            AttributeValue::Text(v) if v.is_empty() => Err(PolicyError::Empty("attribute value")),
            AttributeValue::Text(_) => Ok(()),
            AttributeValue::Number { value, bit_width } => check_number(*value, *bit_width),
        }
    }

    /// Every token the assertion presents.
    pub fn tokens(&self) -> Result<Vec<String>, PolicyError> {
        match self.value {
            AttributeValue::Text(_) => Ok(vec![tokenize_string_attribute(self)?]),
            AttributeValue::Number { .. } => tokenize_numeric_attribute(self),
        }
    }
}

/// Parses `name=value` (string) or `name=value#bits` (numeric).
impl FromStr for AttributeAssertion {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, rest) = s
            .split_once('=')
            .ok_or_else(|| PolicyError::BadAssertion(format!("missing '=' in {s:?}")))?;
        let assertion = match rest.rsplit_once('#') {
            Some((v, w)) if v.parse::<u64>().is_ok() => {
                let bits = w
                    .parse::<u32>()
                    .map_err(|_| PolicyError::BadAssertion(format!("bad bit width in {s:?}")))?;
                AttributeAssertion::number(name, v.parse().unwrap(), bits)
            }
            _ => AttributeAssertion::text(name, rest),
        };
        assertion.validate()?;
        Ok(assertion)
    }
}

impl fmt::Display for AttributeAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            AttributeValue::Text(v) => write!(f, "{}={}", self.name, v),
            AttributeValue::Number { value, bit_width } => write!(f, "{}={}#{}", self.name, value, bit_width),
        }
    }
}

fn check_width(bit_width: u32) -> Result<(), PolicyError> {
    if !(MIN_BIT_WIDTH..=MAX_BIT_WIDTH).contains(&bit_width) {
        return Err(PolicyError::BitWidth(bit_width));
    }
    Ok(())
}

fn check_number(value: u64, bit_width: u32) -> Result<(), PolicyError> {
    check_width(bit_width)?;
    if value >> bit_width != 0 {
        return Err(PolicyError::ValueOutOfRange { value, bit_width });
    }
    Ok(())
}

/// `attr:<name>=<value>`
pub fn tokenize_string_attribute(assertion: &AttributeAssertion) -> Result<String, PolicyError> {
    assertion.validate()?;
    match &assertion.value {
        AttributeValue::Text(v) => Ok(string_token(&assertion.name, v)),
        AttributeValue::Number { .. } => Err(PolicyError::WrongAttributeKind("string")),
    }
}

/// One `attr:<name>#<w>:<pattern>` token per bit, most significant first.
pub fn tokenize_numeric_attribute(assertion: &AttributeAssertion) -> Result<Vec<String>, PolicyError> {
    assertion.validate()?;
    match assertion.value {
        AttributeValue::Number { value, bit_width } => Ok((0..bit_width)
            .map(|pos| bit_token(&assertion.name, bit_width, pos, bit_at(value, bit_width, pos)))
            .collect()),
        AttributeValue::Text(_) => Err(PolicyError::WrongAttributeKind("numeric")),
    }
}

pub fn string_token(name: &str, value: &str) -> String {
    format!("attr:{name}={value}")
}

/// Token revealing bit `pos` (0 = most significant) of a `width`-bit value.
pub fn bit_token(name: &str, width: u32, pos: u32, bit: bool) -> String {
    let pattern: String = (0..width)
        .map(|i| match (i == pos, bit) {
            (false, _) => '*',
            (true, true) => '1',
            (true, false) => '0',
        })
        .collect();
    format!("attr:{name}#{width}:{pattern}")
}

fn bit_at(value: u64, width: u32, pos: u32) -> bool {
    (value >> (width - 1 - pos)) & 1 == 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl CompareOp {
    pub const ALL: [CompareOp; 5] = [CompareOp::Lt, CompareOp::Gt, CompareOp::Eq, CompareOp::Le, CompareOp::Ge];

    pub fn holds(self, value: u64, threshold: u64) -> bool {
        match self {
            CompareOp::Lt => value < threshold,
            CompareOp::Gt => value > threshold,
            CompareOp::Eq => value == threshold,
            CompareOp::Le => value <= threshold,
            CompareOp::Ge => value >= threshold,
        }
    }
}

/// Builds a tree over bit tokens that is true under the tokens of `v` iff
/// `v op threshold`, for every `v` that fits in `bit_width` bits.
///
/// Strict comparisons walk the threshold from the most significant bit:
/// for `<`, a one bit in the threshold yields `OR(bit = 0, rest)` and a zero
/// bit yields `AND(bit = 0, rest)`; the walk stops after the last one bit.
/// `>` is the dual. Each bit position contributes at most one leaf, so a
/// comparison never needs more than `bit_width` leaves. Constant outcomes
/// (`< 0`, `>= 0`, ...) are expressed over the top bit so the tree still
/// requires the attribute to be present.
pub fn expand_numeric_comparison(
    name: &str,
    op: CompareOp,
    threshold: u64,
    bit_width: u32,
) -> Result<ConditionTree, PolicyError> {
    if name.is_empty() {
        return Err(PolicyError::Empty("attribute name"));
    }
    check_number(threshold, bit_width)?;
    let max = (1u64 << bit_width) - 1;
    let leaf = |pos: u32, bit: bool| ConditionTree::leaf(bit_token(name, bit_width, pos, bit));
    let always = || ConditionTree::or(vec![leaf(0, false), leaf(0, true)]);
    let never = || ConditionTree::and(vec![leaf(0, false), leaf(0, true)]);

    let strict = |less: bool, t: u64| -> Option<ConditionTree> {
        // Walk from the least significant end so each step wraps the rest.
        let mut rest: Option<ConditionTree> = None;
        for pos in (0..bit_width).rev() {
            let t_bit = bit_at(t, bit_width, pos);
            // For `<` the decisive bits are the threshold's ones; for `>` its zeros.
            let decisive = t_bit == less;
            let here = leaf(pos, !less);
            rest = match (decisive, rest) {
                (true, None) => Some(here),
                (true, Some(r)) => Some(ConditionTree::or(vec![here, r])),
                (false, None) => None,
                (false, Some(r)) => Some(ConditionTree::and(vec![leaf(pos, t_bit), r])),
            };
        }
        rest
    };

    let tree = match op {
        CompareOp::Eq => ConditionTree::and(
            (0..bit_width)
                .map(|pos| leaf(pos, bit_at(threshold, bit_width, pos)))
                .collect(),
        ),
        CompareOp::Lt => strict(true, threshold).unwrap_or_else(never),
        CompareOp::Gt => strict(false, threshold).unwrap_or_else(never),
        CompareOp::Le if threshold == max => always(),
        CompareOp::Le => strict(true, threshold + 1).unwrap_or_else(never),
        CompareOp::Ge if threshold == 0 => always(),
        CompareOp::Ge => strict(false, threshold - 1).unwrap_or_else(never),
    };
    Ok(tree.flattened())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn patterns(tokens: &[String]) -> Vec<String> {
        tokens.iter().map(|t| t.rsplit(':').next().unwrap().to_owned()).collect()
    }

    #[test]
    fn string_tokens() {
        let a = AttributeAssertion::text("Location", "Cardiology-ward");
        assert_eq!(tokenize_string_attribute(&a).unwrap(), "attr:Location=Cardiology-ward");
        assert_eq!(tokenize_string_attribute(&a), tokenize_string_attribute(&a));
        assert_eq!(
            tokenize_string_attribute(&AttributeAssertion::text("x", "")),
            Err(PolicyError::Empty("attribute value"))
        );
    }

    #[test]
    fn numeric_tokens() {
        let at = AttributeAssertion::number("AT", 10, 5);
        let toks = tokenize_numeric_attribute(&at).unwrap();
        assert_eq!(patterns(&toks), vec!["0****", "*1***", "**0**", "***1*", "****0"]);
        assert_eq!(toks[0], "attr:AT#5:0****");
        let zero = tokenize_numeric_attribute(&AttributeAssertion::number("x", 0, 2)).unwrap();
        assert_eq!(patterns(&zero), vec!["0*", "*0"]);
        let three = tokenize_numeric_attribute(&AttributeAssertion::number("x", 3, 2)).unwrap();
        assert_eq!(patterns(&three), vec!["1*", "*1"]);
        assert!(tokenize_numeric_attribute(&AttributeAssertion::number("x", 4, 2)).is_err());
        assert!(tokenize_numeric_attribute(&AttributeAssertion::number("x", 0, 1)).is_err());
    }

    #[test]
    fn less_than_fifteen_in_four_bits() {
        let t = expand_numeric_comparison("x", CompareOp::Lt, 15, 4).unwrap();
        let leaves: Vec<_> = t.leaves().cloned().collect();
        assert!(matches!(t, ConditionTree::Node { gate: super::super::Gate::Or, .. }));
        assert_eq!(patterns(&leaves), vec!["0***", "*0**", "**0*", "***0"]);
    }

    #[test]
    fn equality_is_bitwise_and() {
        let t = expand_numeric_comparison("x", CompareOp::Eq, 5, 3).unwrap();
        let leaves: Vec<_> = t.leaves().cloned().collect();
        assert_eq!(patterns(&leaves), vec!["1**", "*0*", "**1"]);
    }

    #[test]
    fn greater_than_nine_exhaustive() {
        let t = expand_numeric_comparison("AT", CompareOp::Gt, 9, 5).unwrap();
        let accepted: Vec<u64> = (0..32)
            .filter(|v| {
                let toks: HashSet<String> = tokenize_numeric_attribute(&AttributeAssertion::number("AT", *v, 5))
                    .unwrap()
                    .into_iter()
                    .collect();
                t.evaluate_tokens(&toks)
            })
            .collect();
        assert_eq!(accepted, (10..32).collect::<Vec<_>>());
    }

    #[test]
    fn threshold_out_of_range() {
        assert!(expand_numeric_comparison("x", CompareOp::Lt, 16, 4).is_err());
    }

    #[test]
    fn parse_assertions() {
        assert_eq!(
            "AT=10#5".parse::<AttributeAssertion>().unwrap(),
            AttributeAssertion::number("AT", 10, 5)
        );
        assert_eq!(
            "Location=Cardiology-ward".parse::<AttributeAssertion>().unwrap(),
            AttributeAssertion::text("Location", "Cardiology-ward")
        );
        assert_eq!(
            "Room=A#1".parse::<AttributeAssertion>().unwrap(),
            AttributeAssertion::text("Room", "A#1")
        );
        assert!("novalue".parse::<AttributeAssertion>().is_err());
        assert!("AT=40#5".parse::<AttributeAssertion>().is_err());
    }
}
