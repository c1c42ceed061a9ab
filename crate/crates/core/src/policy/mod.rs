//! Plaintext RBAC policies as the admin writes them, before any encryption.

mod attribute;
mod hierarchy;
mod tree;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use attribute::{
    bit_token, expand_numeric_comparison, string_token, tokenize_numeric_attribute,
    tokenize_string_attribute, AttributeAssertion, AttributeValue, CompareOp, MAX_BIT_WIDTH,
    MIN_BIT_WIDTH,
};
pub use hierarchy::{find_cycle, reachable_bases, Extends, RoleHierarchyGraph};
pub use tree::{ConditionTree, Gate};

use crate::error::PolicyError;
use crate::ids::UserId;

/// Canonical element strings. The prefixes keep a role and a target with
/// the same name from producing the same trapdoor.
pub fn role_element(name: &str) -> String {
    format!("role:{name}")
}

pub fn action_element(name: &str) -> String {
    format!("action:{name}")
}

pub fn target_element(name: &str) -> String {
    format!("target:{name}")
}

/// "If the condition holds, `requester` may be active in any of `roles`."
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAssignmentPolicy {
    pub requester: UserId,
    pub roles: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<ConditionTree>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permission {
    pub action: String,
    pub target: String,
}

impl Permission {
    pub fn new(action: impl Into<String>, target: impl Into<String>) -> Self {
        Permission {
            action: action.into(),
            target: target.into(),
        }
    }
}

/// "If the condition holds, `role` may execute any of `permissions`."
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionAssignmentPolicy {
    pub role: String,
    pub permissions: Vec<Permission>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<ConditionTree>,
}

fn check_names<'a>(kind: &'static str, names: impl Iterator<Item = &'a str>) -> Result<(), PolicyError> {
    let mut seen = HashSet::new();
    for n in names {
        if n.is_empty() {
            return Err(PolicyError::Empty(kind));
        }
        if !seen.insert(n) {
            return Err(PolicyError::Duplicate {
                kind,
                value: n.to_owned(),
            });
        }
    }
    Ok(())
}

impl RoleAssignmentPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.roles.is_empty() {
            return Err(PolicyError::Empty("role list"));
        }
        check_names("role", self.roles.iter().map(String::as_str))?;
        self.condition.as_ref().map_or(Ok(()), ConditionTree::validate)
    }
}

impl PermissionAssignmentPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.role.is_empty() {
            return Err(PolicyError::Empty("role name"));
        }
        if self.permissions.is_empty() {
            return Err(PolicyError::Empty("permission list"));
        }
        let mut seen = HashSet::new();
        for p in &self.permissions {
            if p.action.is_empty() || p.target.is_empty() {
                return Err(PolicyError::Empty("permission action or target"));
            }
            if !seen.insert(p) {
                return Err(PolicyError::Duplicate {
                    kind: "permission",
                    value: format!("({}, {})", p.action, p.target),
                });
            }
        }
        self.condition.as_ref().map_or(Ok(()), ConditionTree::validate)
    }
}

/// Leaf of a hand-written condition: a raw token, a string equality, or a
/// numeric comparison that expands into a bit-level subtree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConditionLeaf {
    Compare {
        attribute: String,
        op: CompareOp,
        value: u64,
        bits: u32,
    },
    Equals {
        attribute: String,
        equals: String,
    },
    Token(String),
}

/// Expands comparison leaves into bit-token subtrees.
pub fn compile_condition(spec: &ConditionTree<ConditionLeaf>) -> Result<ConditionTree, PolicyError> {
    spec.validate_shape()?;
    let tree = compile_node(spec)?.flattened();
    tree.validate()?;
    Ok(tree)
}

fn compile_node(spec: &ConditionTree<ConditionLeaf>) -> Result<ConditionTree, PolicyError> {
    match spec {
        ConditionTree::Leaf { leaf } => match leaf {
            ConditionLeaf::Token(t) => Ok(ConditionTree::leaf(t.clone())),
            ConditionLeaf::Equals { attribute, equals } => Ok(ConditionTree::leaf(tokenize_string_attribute(
                &AttributeAssertion::text(attribute.as_str(), equals.as_str()),
            )?)),
            ConditionLeaf::Compare {
                attribute,
                op,
                value,
                bits,
            } => expand_numeric_comparison(attribute, *op, *value, *bits),
        },
        ConditionTree::Node { gate, children } => Ok(ConditionTree::Node {
            gate: *gate,
            children: children.iter().map(compile_node).collect::<Result<_, _>>()?,
        }),
    }
}

/// Evaluates a condition against the tokens of a set of assertions.
pub fn evaluate_plaintext(tree: &ConditionTree, assertions: &[AttributeAssertion]) -> Result<bool, PolicyError> {
    let mut tokens = HashSet::new();
    for a in assertions {
        tokens.extend(a.tokens()?);
    }
    Ok(tree.evaluate_tokens(&tokens))
}

/// The location-and-office-hours condition used throughout the docs:
/// `Location = Cardiology-ward AND AT > 9 AND AT < 17`, AT in five bits.
pub fn ward_hours_condition() -> ConditionTree {
    ConditionTree::and(vec![
        ConditionTree::leaf(string_token("Location", "Cardiology-ward")),
        expand_numeric_comparison("AT", CompareOp::Gt, 9, 5).expect("9 fits in 5 bits"),
        expand_numeric_comparison("AT", CompareOp::Lt, 17, 5).expect("17 fits in 5 bits"),
    ])
    .flattened()
}

/// Cardiologist extends Cardiologist Assistant and Doctor, both of which
/// extend Intern.
pub fn hospital_hierarchy() -> RoleHierarchyGraph {
    let e = |r: &str, b: &str| Extends {
        role: r.into(),
        base: b.into(),
    };
    RoleHierarchyGraph::new(
        ["Cardiologist", "Cardiologist Assistant", "Doctor", "Intern"]
            .map(String::from)
            .to_vec(),
        vec![
            e("Cardiologist Assistant", "Intern"),
            e("Doctor", "Intern"),
            e("Cardiologist", "Cardiologist Assistant"),
            e("Cardiologist", "Doctor"),
        ],
    )
    .expect("acyclic")
}

/// A JSON policy file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyDocument {
    RoleAssignment {
        requester: UserId,
        roles: Vec<String>,
        #[serde(default)]
        condition: Option<ConditionTree<ConditionLeaf>>,
    },
    PermissionAssignment {
        role: String,
        permissions: Vec<Permission>,
        #[serde(default)]
        condition: Option<ConditionTree<ConditionLeaf>>,
    },
    Hierarchy(RoleHierarchyGraph),
    Condition { tree: ConditionTree<ConditionLeaf> },
}

/// A policy document with its conditions compiled to tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Policy {
    RoleAssignment(RoleAssignmentPolicy),
    PermissionAssignment(PermissionAssignmentPolicy),
    Hierarchy(RoleHierarchyGraph),
    Condition(ConditionTree),
}

impl PolicyDocument {
    pub fn compile(&self) -> Result<Policy, PolicyError> {
        let cond = |c: &Option<ConditionTree<ConditionLeaf>>| c.as_ref().map(compile_condition).transpose();
        let policy = match self {
            PolicyDocument::RoleAssignment {
                requester,
                roles,
                condition,
            } => Policy::RoleAssignment(RoleAssignmentPolicy {
                requester: requester.clone(),
                roles: roles.clone(),
                condition: cond(condition)?,
            }),
            PolicyDocument::PermissionAssignment {
                role,
                permissions,
                condition,
            } => Policy::PermissionAssignment(PermissionAssignmentPolicy {
                role: role.clone(),
                permissions: permissions.clone(),
                condition: cond(condition)?,
            }),
            PolicyDocument::Hierarchy(g) => Policy::Hierarchy(g.clone()),
            PolicyDocument::Condition { tree } => Policy::Condition(compile_condition(tree)?),
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl Policy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        match self {
            Policy::RoleAssignment(p) => p.validate(),
            Policy::PermissionAssignment(p) => p.validate(),
            Policy::Hierarchy(g) => g.validate(),
            Policy::Condition(t) => t.validate(),
        }
    }
}
