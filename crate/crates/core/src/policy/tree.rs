use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::PolicyError;

/// Internal node type of a condition tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    And,
    Or,
    /// At least `k` children true. Evaluated by the plaintext oracle only.
    Threshold(usize),
}

impl Gate {
    /// Whether a node with `satisfied` of `total` children true is true.
    pub fn fold(self, satisfied: usize, total: usize) -> bool {
        match self {
            Gate::And => satisfied == total,
            Gate::Or => satisfied >= 1,
            Gate::Threshold(k) => satisfied >= k,
        }
    }
}

/// AND/OR/threshold tree over leaves of type `L`.
///
/// Plaintext policies use token strings as leaves; the same shape carries
/// client ciphertexts and server ciphertexts after each encryption round,
/// with the gates left in the clear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConditionTree<L = String> {
    Leaf { leaf: L },
    Node { gate: Gate, children: Vec<ConditionTree<L>> },
}

impl<L> ConditionTree<L> {
    pub fn leaf(leaf: L) -> Self {
        ConditionTree::Leaf { leaf }
    }

    pub fn and(children: Vec<Self>) -> Self {
        ConditionTree::Node { gate: Gate::And, children }
    }

    pub fn or(children: Vec<Self>) -> Self {
        ConditionTree::Node { gate: Gate::Or, children }
    }

    pub fn threshold(k: usize, children: Vec<Self>) -> Self {
        ConditionTree::Node {
            gate: Gate::Threshold(k),
            children,
        }
    }

    /// Checks the structural invariants shared by every leaf type.
    pub fn validate_shape(&self) -> Result<(), PolicyError> {
        match self {
            ConditionTree::Leaf { .. } => Ok(()),
            ConditionTree::Node { gate, children } => {
                if children.is_empty() {
                    return Err(PolicyError::ChildlessGate);
                }
                if let Gate::Threshold(k) = *gate {
                    if k == 0 || k > children.len() {
                        return Err(PolicyError::ThresholdOutOfRange {
                            k,
                            children: children.len(),
                        });
                    }
                }
                children.iter().try_for_each(Self::validate_shape)
            }
        }
    }

    pub fn contains_threshold(&self) -> bool {
        match self {
            ConditionTree::Leaf { .. } => false,
            ConditionTree::Node { gate, children } => {
                matches!(gate, Gate::Threshold(_)) || children.iter().any(Self::contains_threshold)
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    pub fn depth(&self) -> usize {
        match self {
            ConditionTree::Leaf { .. } => 0,
            ConditionTree::Node { children, .. } => {
                1 + children.iter().map(Self::depth).max().unwrap_or(0)
            }
        }
    }

    /// Leaves in depth-first, left-to-right order.
    pub fn leaves(&self) -> impl Iterator<Item = &L> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            while let Some(n) = stack.pop() {
                match n {
                    ConditionTree::Leaf { leaf } => return Some(leaf),
                    ConditionTree::Node { children, .. } => stack.extend(children.iter().rev()),
                }
            }
            None
        })
    }

    pub fn map_leaves<M>(&self, f: &mut impl FnMut(&L) -> M) -> ConditionTree<M> {
        match self {
            ConditionTree::Leaf { leaf } => ConditionTree::Leaf { leaf: f(leaf) },
            ConditionTree::Node { gate, children } => ConditionTree::Node {
                gate: *gate,
                children: children.iter().map(|c| c.map_leaves(f)).collect(),
            },
        }
    }

    pub fn try_map_leaves<M, E>(&self, f: &mut impl FnMut(&L) -> Result<M, E>) -> Result<ConditionTree<M>, E> {
        Ok(match self {
            ConditionTree::Leaf { leaf } => ConditionTree::Leaf { leaf: f(leaf)? },
            ConditionTree::Node { gate, children } => ConditionTree::Node {
                gate: *gate,
                children: children
                    .iter()
                    .map(|c| c.try_map_leaves(f))
                    .collect::<Result<_, _>>()?,
            },
        })
    }

    /// Same gates, same arities, same nesting.
    pub fn same_shape<M>(&self, other: &ConditionTree<M>) -> bool {
        match (self, other) {
            (ConditionTree::Leaf { .. }, ConditionTree::Leaf { .. }) => true,
            (
                ConditionTree::Node { gate: g1, children: c1 },
                ConditionTree::Node { gate: g2, children: c2 },
            ) => g1 == g2 && c1.len() == c2.len() && c1.iter().zip(c2).all(|(a, b)| a.same_shape(b)),
            _ => false,
        }
    }

    /// Standard boolean semantics with leaves decided by `leaf_true`.
    pub fn evaluate_with(&self, leaf_true: &mut impl FnMut(&L) -> bool) -> bool {
        match self {
            ConditionTree::Leaf { leaf } => leaf_true(leaf),
            ConditionTree::Node { gate, children } => {
                let satisfied = children.iter().filter(|c| c.evaluate_with(leaf_true)).count();
                gate.fold(satisfied, children.len())
            }
        }
    }

    /// Merges directly nested gates of the same AND/OR kind.
    pub fn flattened(self) -> Self {
        match self {
            leaf @ ConditionTree::Leaf { .. } => leaf,
            ConditionTree::Node { gate, children } => {
                let mut out = Vec::with_capacity(children.len());
                for child in children.into_iter().map(Self::flattened) {
                    match child {
                        ConditionTree::Node { gate: g, children: grand }
                            if g == gate && matches!(gate, Gate::And | Gate::Or) =>
                        {
                            out.extend(grand)
                        }
                        other => out.push(other),
                    }
                }
                if out.len() == 1 && !matches!(gate, Gate::Threshold(_)) {
                    return out.pop().unwrap();
                }
                ConditionTree::Node { gate, children: out }
            }
        }
    }
}

impl ConditionTree<String> {
    /// Shape checks plus non-empty tokens.
    pub fn validate(&self) -> Result<(), PolicyError> {
        self.validate_shape()?;
        if self.leaves().any(|t| t.is_empty()) {
            return Err(PolicyError::Empty("leaf token"));
        }
        Ok(())
    }

    /// Evaluates against a set of presented tokens.
    pub fn evaluate_tokens(&self, tokens: &HashSet<String>) -> bool {
        self.evaluate_with(&mut |t| tokens.contains(t))
    }
}
