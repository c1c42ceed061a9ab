use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::client::{HierarchyNode, PermissionPair};
use crate::crypto::{ServerCiphertext, ServerKeySet, ServerTrapdoor};
use crate::ids::UserId;
use crate::policy::ConditionTree;

/// `user_id -> ServerKeySet`, one entry per user.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyStore {
    pub keys: BTreeMap<UserId, ServerKeySet>,
}

/// A requester's assigned roles, replaced wholesale on redeploy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredRoleAssignment {
    pub roles: Vec<ServerCiphertext>,
    #[serde(default)]
    pub condition: Option<ConditionTree<ServerCiphertext>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredPermissionAssignment {
    pub role: ServerCiphertext,
    pub permissions: Vec<PermissionPair<ServerCiphertext>>,
    #[serde(default)]
    pub condition: Option<ConditionTree<ServerCiphertext>>,
}

/// Role nodes as `(c(r), td(r))` pairs with `(derived, base)` index edges.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredHierarchy {
    pub nodes: Vec<HierarchyNode<ServerCiphertext, ServerTrapdoor>>,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyStore {
    pub role_repository: BTreeMap<UserId, StoredRoleAssignment>,
    pub permission_repository: Vec<StoredPermissionAssignment>,
    pub role_hierarchy: StoredHierarchy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveRole {
    pub trapdoor: ServerTrapdoor,
    /// Unix time in milliseconds.
    pub activated_at: u64,
}

/// Active roles per requester.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub active: BTreeMap<UserId, Vec<ActiveRole>>,
}

impl Session {
    pub fn active_roles(&self, user: &UserId) -> &[ActiveRole] {
        self.active.get(user).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Appends unless already present. Returns whether the session grew.
    pub fn activate(&mut self, user: &UserId, trapdoor: ServerTrapdoor, now: u64) -> bool {
        let roles = self.active.entry(user.clone()).or_default();
        if let Some(existing) = roles.iter_mut().find(|r| r.trapdoor == trapdoor) {
            existing.activated_at = now;
            return false;
        }
        roles.push(ActiveRole {
            trapdoor,
            activated_at: now,
        });
        true
    }

    pub fn deactivate(&mut self, user: &UserId, trapdoor: &ServerTrapdoor) -> bool {
        let Some(roles) = self.active.get_mut(user) else {
            return false;
        };
        let before = roles.len();
        roles.retain(|r| &r.trapdoor != trapdoor);
        let removed = roles.len() != before;
        if roles.is_empty() {
            self.active.remove(user);
        }
        removed
    }

    pub fn size(&self) -> usize {
        self.active.values().map(Vec::len).sum()
    }
}
