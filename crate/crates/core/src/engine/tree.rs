use serde::{Deserialize, Serialize};

use crate::error::EngineError;
use crate::policy::{ConditionTree, Gate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Leaf,
    Gate(Gate),
}

/// A condition-tree node annotated with its decision field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionNode {
    pub kind: NodeKind,
    pub children: Vec<usize>,
    pub decision: Option<bool>,
}

/// Arena form of a condition tree whose leaves already carry decisions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<DecisionNode>,
    pub root: usize,
}

impl DecisionTree {
    pub fn from_tree(tree: &ConditionTree<bool>) -> Self {
        let mut nodes = Vec::new();
        let root = Self::push(tree, &mut nodes);
        DecisionTree { nodes, root }
    }

    fn push(tree: &ConditionTree<bool>, nodes: &mut Vec<DecisionNode>) -> usize {
        let id = nodes.len();
        match tree {
            ConditionTree::Leaf { leaf } => nodes.push(DecisionNode {
                kind: NodeKind::Leaf,
                children: Vec::new(),
                decision: Some(*leaf),
            }),
            ConditionTree::Node { gate, children } => {
                nodes.push(DecisionNode {
                    kind: NodeKind::Gate(*gate),
                    children: Vec::new(),
                    decision: None,
                });
                let ids = children.iter().map(|c| Self::push(c, nodes)).collect();
                nodes[id].children = ids;
            }
        }
        id
    }
}

/// Folds AND/OR gates bottom-up, filling in each node's decision field.
/// A node that already has a decision is not recomputed.
pub fn evaluate_tree(tree: &mut DecisionTree) -> Result<bool, EngineError> {
    evaluate_node(tree, tree.root)
}

fn evaluate_node(tree: &mut DecisionTree, id: usize) -> Result<bool, EngineError> {
    if let Some(d) = tree.nodes[id].decision {
        return Ok(d);
    }
    let gate = match tree.nodes[id].kind {
        NodeKind::Gate(g @ (Gate::And | Gate::Or)) => g,
        NodeKind::Gate(Gate::Threshold(_)) => return Err(EngineError::UnsupportedGate),
        NodeKind::Leaf => return Err(EngineError::MalformedBundle("leaf without decision".into())),
    };
    let children = tree.nodes[id].children.clone();
    if children.is_empty() {
        return Err(EngineError::MalformedBundle("gate without children".into()));
    }
    let mut satisfied = 0;
    for c in &children {
        if evaluate_node(tree, *c)? {
            satisfied += 1;
        }
    }
    let d = gate.fold(satisfied, children.len());
    tree.nodes[id].decision = Some(d);
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(b: bool) -> ConditionTree<bool> {
        ConditionTree::leaf(b)
    }

    #[test]
    fn basic_gates() {
        let mut t = DecisionTree::from_tree(&ConditionTree::and(vec![l(true), l(true)]));
        assert!(evaluate_tree(&mut t).unwrap());
        let mut t = DecisionTree::from_tree(&ConditionTree::or(vec![l(false), l(false), l(true)]));
        assert!(evaluate_tree(&mut t).unwrap());
        assert_eq!(t.nodes[0].decision, Some(true));
        let mut t = DecisionTree::from_tree(&ConditionTree::and(vec![l(true), ConditionTree::or(vec![l(false)])]));
        assert!(!evaluate_tree(&mut t).unwrap());
    }

    #[test]
    fn threshold_rejected() {
        let mut t = DecisionTree::from_tree(&ConditionTree::threshold(1, vec![l(true)]));
        assert_eq!(evaluate_tree(&mut t), Err(EngineError::UnsupportedGate));
    }
}
