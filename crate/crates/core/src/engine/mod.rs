//! The service provider side. Holds server key halves, encrypted policies
//! and sessions, and decides requests without seeing any plaintext.

mod store;
mod tree;

use std::cell::OnceCell;
use std::collections::HashSet;
use std::sync::{Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use store::{
    ActiveRole, KeyStore, PolicyStore, Session, StoredHierarchy, StoredPermissionAssignment, StoredRoleAssignment,
};
pub use tree::{evaluate_tree, DecisionNode, DecisionTree, NodeKind};

use crate::client::{
    AccessRequest, ActivationRequest, AttributeBatch, BundlePayload, ClientEncryptedPolicyBundle, HierarchyNode,
    PermissionPair,
};
use crate::crypto::{
    match_prepared, server_reencrypt, server_trapdoor, ClientCiphertext, ClientTrapdoor, PreparedTrapdoor,
    PublicParams, ServerCiphertext, ServerKeySet, ServerTrapdoor,
};
use crate::error::EngineError;
use crate::ids::UserId;
use crate::policy::{find_cycle, reachable_bases, ConditionTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    NoRoleMatch,
    ConditionFalse,
    ConditionUnresolved,
    NoActiveRole,
    NoPermission,
}

impl DenyReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DenyReason::NoRoleMatch => "no_role_match",
            DenyReason::ConditionFalse => "condition_false",
            DenyReason::ConditionUnresolved => "condition_unresolved",
            DenyReason::NoActiveRole => "no_active_role",
            DenyReason::NoPermission => "no_permission",
        }
    }

    // Higher is more informative to the requester.
    fn specificity(self) -> u8 {
        match self {
            DenyReason::NoActiveRole => 0,
            DenyReason::NoRoleMatch | DenyReason::NoPermission => 1,
            DenyReason::ConditionUnresolved => 2,
            DenyReason::ConditionFalse => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "reason", rename_all = "snake_case")]
pub enum Decision {
    Permit,
    Deny(DenyReason),
}

impl Decision {
    pub fn is_permit(self) -> bool {
        self == Decision::Permit
    }
}

/// Where the PDP gets contextual attributes. Consulted at most once per
/// decision, and only when a condition actually has to be evaluated.
pub trait ContextSource {
    fn attributes(&self) -> Option<AttributeBatch>;
}

/// No PIP: any condition is unresolved.
pub struct NoContext;

impl ContextSource for NoContext {
    fn attributes(&self) -> Option<AttributeBatch> {
        None
    }
}

impl ContextSource for AttributeBatch {
    fn attributes(&self) -> Option<AttributeBatch> {
        Some(self.clone())
    }
}

impl<F: Fn() -> Option<AttributeBatch>> ContextSource for F {
    fn attributes(&self) -> Option<AttributeBatch> {
        self()
    }
}

/// What a deployment produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Deployed {
    RoleAssignment { requester: UserId, roles: usize },
    PermissionAssignment { index: usize, permissions: usize },
    Hierarchy { nodes: usize },
    /// Standalone conditions are returned to the caller, not stored.
    Condition(ConditionTree<ServerCiphertext>),
}

/// Full engine state, for snapshots.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineState {
    pub key_store: KeyStore,
    pub policy_store: PolicyStore,
    pub session: Session,
}

/// Lazily fetched and server-completed PIP trapdoors for one decision.
struct Context<'a> {
    source: &'a dyn ContextSource,
    completed: OnceCell<Result<Option<Vec<PreparedTrapdoor>>, EngineError>>,
}

impl<'a> Context<'a> {
    fn new(source: &'a dyn ContextSource) -> Self {
        Context {
            source,
            completed: OnceCell::new(),
        }
    }
}

pub struct Engine {
    params: PublicParams,
    keys: RwLock<KeyStore>,
    policies: RwLock<PolicyStore>,
    session: Mutex<Session>,
    session_ttl: Option<Duration>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Engine {
    pub fn new(params: PublicParams) -> Self {
        Engine::from_state(params, EngineState::default())
    }

    pub fn from_state(params: PublicParams, state: EngineState) -> Self {
        Engine {
            params,
            keys: RwLock::new(state.key_store),
            policies: RwLock::new(state.policy_store),
            session: Mutex::new(state.session),
            session_ttl: None,
        }
    }

    /// Active roles older than `ttl` are ignored by access decisions.
    pub fn with_session_ttl(mut self, ttl: Duration) -> Self {
        self.session_ttl = Some(ttl);
        self
    }

    pub fn params(&self) -> &PublicParams {
        &self.params
    }

    /// Consistent point-in-time copy of all three stores.
    pub fn export_state(&self) -> EngineState {
        let keys = self.keys.read().unwrap();
        let policies = self.policies.read().unwrap();
        let session = self.session.lock().unwrap();
        EngineState {
            key_store: keys.clone(),
            policy_store: policies.clone(),
            session: session.clone(),
        }
    }

    /// Replaces all three stores at once.
    pub fn replace_state(&self, state: EngineState) {
        let mut keys = self.keys.write().unwrap();
        let mut policies = self.policies.write().unwrap();
        let mut session = self.session.lock().unwrap();
        *keys = state.key_store;
        *policies = state.policy_store;
        *session = state.session;
    }

    pub fn policy_store(&self) -> PolicyStore {
        self.policies.read().unwrap().clone()
    }

    pub fn session(&self) -> Session {
        self.session.lock().unwrap().clone()
    }

    pub fn install_keyset(&self, skey: ServerKeySet) -> Result<(), EngineError> {
        self.params.group.validate_scalar(&skey.server_exponent, false)?;
        self.keys.write().unwrap().keys.insert(skey.user_id.clone(), skey);
        Ok(())
    }

    pub fn has_key(&self, user: &UserId) -> bool {
        self.keys.read().unwrap().keys.contains_key(user)
    }

    fn key(&self, user: &UserId) -> Result<ServerKeySet, EngineError> {
        self.keys
            .read()
            .unwrap()
            .keys
            .get(user)
            .cloned()
            .ok_or_else(|| EngineError::KeyNotFound(user.clone()))
    }

    /// Deletes the user's server half. Stored policies are left untouched.
    pub fn revoke_user(&self, user: &UserId) -> bool {
        self.keys.write().unwrap().keys.remove(user).is_some()
    }

    fn complete(&self, td: &ClientTrapdoor, skey: &ServerKeySet) -> Result<ServerTrapdoor, EngineError> {
        Ok(server_trapdoor(&self.params, td, skey)?)
    }

    fn reencrypt_tree(
        &self,
        tree: &ConditionTree<ClientCiphertext>,
        skey: &ServerKeySet,
    ) -> Result<ConditionTree<ServerCiphertext>, EngineError> {
        tree.validate_shape()?;
        if tree.contains_threshold() {
            return Err(EngineError::UnsupportedGate);
        }
        Ok(tree.try_map_leaves(&mut |ct| server_reencrypt(&self.params, ct, skey))?)
    }

    /// Second-round encryption with the issuer's server half, then storage
    /// in the matching repository. Nothing is stored if any element fails.
    pub fn reencrypt_bundle(&self, bundle: &ClientEncryptedPolicyBundle) -> Result<Deployed, EngineError> {
        let skey = self.key(&bundle.issuer)?;
        let reenc = |ct: &ClientCiphertext| server_reencrypt(&self.params, ct, &skey);
        let cond = |c: &Option<ConditionTree<ClientCiphertext>>| {
            c.as_ref().map(|t| self.reencrypt_tree(t, &skey)).transpose()
        };
        match &bundle.payload {
            BundlePayload::RoleAssignment {
                requester,
                roles,
                condition,
            } => {
                if roles.is_empty() {
                    return Err(EngineError::MalformedBundle("empty role list".into()));
                }
                let entry = StoredRoleAssignment {
                    roles: roles.iter().map(reenc).collect::<Result<_, _>>()?,
                    condition: cond(condition)?,
                };
                let n = entry.roles.len();
                self.policies
                    .write()
                    .unwrap()
                    .role_repository
                    .insert(requester.clone(), entry);
                Ok(Deployed::RoleAssignment {
                    requester: requester.clone(),
                    roles: n,
                })
            }
            BundlePayload::PermissionAssignment {
                role,
                permissions,
                condition,
            } => {
                if permissions.is_empty() {
                    return Err(EngineError::MalformedBundle("empty permission list".into()));
                }
                let entry = StoredPermissionAssignment {
                    role: reenc(role)?,
                    permissions: permissions
                        .iter()
                        .map(|p| {
                            Ok(PermissionPair {
                                action: reenc(&p.action)?,
                                target: reenc(&p.target)?,
                            })
                        })
                        .collect::<Result<_, EngineError>>()?,
                    condition: cond(condition)?,
                };
                let n = entry.permissions.len();
                let mut store = self.policies.write().unwrap();
                store.permission_repository.push(entry);
                Ok(Deployed::PermissionAssignment {
                    index: store.permission_repository.len() - 1,
                    permissions: n,
                })
            }
            BundlePayload::Condition { tree } => Ok(Deployed::Condition(self.reencrypt_tree(tree, &skey)?)),
            BundlePayload::Hierarchy { nodes, edges } => {
                if edges.iter().any(|&(d, b)| d >= nodes.len() || b >= nodes.len()) {
                    return Err(EngineError::MalformedBundle("hierarchy edge out of range".into()));
                }
                if find_cycle(nodes.len(), edges).is_some() {
                    return Err(EngineError::MalformedBundle("hierarchy contains a cycle".into()));
                }
                let stored = StoredHierarchy {
                    nodes: nodes
                        .iter()
                        .map(|n| {
                            Ok(HierarchyNode {
                                ciphertext: reenc(&n.ciphertext)?,
                                trapdoor: self.complete(&n.trapdoor, &skey)?,
                            })
                        })
                        .collect::<Result<_, EngineError>>()?,
                    edges: edges.clone(),
                };
                let n = stored.nodes.len();
                self.policies.write().unwrap().role_hierarchy = stored;
                Ok(Deployed::Hierarchy { nodes: n })
            }
        }
    }

    /// Completes `role_td` once and scans `list` in order, stopping at the
    /// first match. The completed trapdoor is returned for reuse.
    pub fn search_role(
        &self,
        role_td: &ClientTrapdoor,
        list: &[ServerCiphertext],
        requester: &UserId,
    ) -> Result<(bool, ServerTrapdoor), EngineError> {
        let td = self.complete_trapdoor(role_td, requester)?;
        let found = self.scan_roles(&td.prepare(&self.params), list);
        Ok((found, td))
    }

    /// Server half of a trapdoor for `user`.
    pub fn complete_trapdoor(&self, td: &ClientTrapdoor, user: &UserId) -> Result<ServerTrapdoor, EngineError> {
        let skey = self.key(user)?;
        self.complete(td, &skey)
    }

    /// The matching loop of [`Engine::search_role`], for an already completed
    /// trapdoor.
    pub fn scan_roles(&self, role: &PreparedTrapdoor, list: &[ServerCiphertext]) -> bool {
        list.iter().any(|ct| match_prepared(&self.params, ct, role))
    }

    /// True iff some pair matches on both action and target.
    pub fn search_permission(
        &self,
        action_td: &ClientTrapdoor,
        target_td: &ClientTrapdoor,
        perms: &[PermissionPair<ServerCiphertext>],
        requester: &UserId,
    ) -> Result<bool, EngineError> {
        let skey = self.key(requester)?;
        let action = self.complete(action_td, &skey)?.prepare(&self.params);
        let target = self.complete(target_td, &skey)?.prepare(&self.params);
        Ok(self.scan_permissions(&action, &target, perms))
    }

    /// The matching loop of [`Engine::search_permission`].
    pub fn scan_permissions(
        &self,
        action: &PreparedTrapdoor,
        target: &PreparedTrapdoor,
        perms: &[PermissionPair<ServerCiphertext>],
    ) -> bool {
        perms.iter().any(|p| {
            match_prepared(&self.params, &p.action, action) && match_prepared(&self.params, &p.target, target)
        })
    }

    /// Completes every PIP trapdoor, decides each leaf by whether any of
    /// them matches, then folds the gates.
    pub fn evaluate_condition(
        &self,
        trapdoors: &[ClientTrapdoor],
        tree: &ConditionTree<ServerCiphertext>,
        pip_id: &UserId,
    ) -> Result<bool, EngineError> {
        let prepared = self.complete_batch(trapdoors, pip_id)?;
        self.evaluate_prepared(&prepared, tree)
    }

    fn complete_batch(&self, trapdoors: &[ClientTrapdoor], pip_id: &UserId) -> Result<Vec<PreparedTrapdoor>, EngineError> {
        let skey = self.key(pip_id)?;
        trapdoors
            .iter()
            .map(|td| Ok(self.complete(td, &skey)?.prepare(&self.params)))
            .collect()
    }

    /// [`Engine::evaluate_condition`] for trapdoors already completed under
    /// the PIP's key.
    pub fn evaluate_prepared(
        &self,
        trapdoors: &[PreparedTrapdoor],
        tree: &ConditionTree<ServerCiphertext>,
    ) -> Result<bool, EngineError> {
        let decided = tree.map_leaves(&mut |ct| trapdoors.iter().any(|td| match_prepared(&self.params, ct, td)));
        evaluate_tree(&mut DecisionTree::from_tree(&decided))
    }

    /// `Ok(None)` when the PIP supplied nothing.
    fn condition_holds(&self, tree: &ConditionTree<ServerCiphertext>, ctx: &Context<'_>) -> Result<Option<bool>, EngineError> {
        let completed = ctx.completed.get_or_init(|| match ctx.source.attributes() {
            None => Ok(None),
            Some(batch) => {
                batch.validate()?;
                self.complete_batch(&batch.trapdoors, &batch.pip_id).map(Some)
            }
        });
        match completed {
            Err(e) => Err(e.clone()),
            Ok(None) => Ok(None),
            Ok(Some(tds)) => self.evaluate_prepared(tds, tree).map(Some),
        }
    }

    /// Stored trapdoors of every base role reachable from the node matching
    /// `role_td`, breadth first. Empty if no node matches.
    pub fn hierarchy_bases(&self, role_td: &ServerTrapdoor) -> Vec<ServerTrapdoor> {
        self.hierarchy_bases_prepared(&role_td.prepare(&self.params))
    }

    pub fn hierarchy_bases_prepared(&self, role_td: &PreparedTrapdoor) -> Vec<ServerTrapdoor> {
        let store = self.policies.read().unwrap();
        self.bases_in(&store.role_hierarchy, role_td)
    }

    fn bases_in(&self, graph: &StoredHierarchy, role: &PreparedTrapdoor) -> Vec<ServerTrapdoor> {
        let Some(start) = graph
            .nodes
            .iter()
            .position(|n| match_prepared(&self.params, &n.ciphertext, role))
        else {
            return Vec::new();
        };
        reachable_bases(graph.nodes.len(), &graph.edges, start)
            .into_iter()
            .map(|i| graph.nodes[i].trapdoor.clone())
            .collect()
    }

    pub fn activate_role(&self, req: &ActivationRequest, ctx: &dyn ContextSource) -> Result<Decision, EngineError> {
        let ctx = Context::new(ctx);
        let skey = self.key(&req.requester)?;
        let td = self.complete(&req.role_td, &skey)?;
        let prepared = td.prepare(&self.params);
        let store = self.policies.read().unwrap();
        let Some(entry) = store.role_repository.get(&req.requester) else {
            return Ok(Decision::Deny(DenyReason::NoRoleMatch));
        };
        if !entry.roles.iter().any(|ct| match_prepared(&self.params, ct, &prepared)) {
            return Ok(Decision::Deny(DenyReason::NoRoleMatch));
        }
        if let Some(cond) = &entry.condition {
            match self.condition_holds(cond, &ctx)? {
                None => return Ok(Decision::Deny(DenyReason::ConditionUnresolved)),
                Some(false) => return Ok(Decision::Deny(DenyReason::ConditionFalse)),
                Some(true) => {}
            }
        }
        self.session.lock().unwrap().activate(&req.requester, td, now_ms());
        Ok(Decision::Permit)
    }

    /// Removes an active role. The trapdoor is completed like any other.
    pub fn deactivate(&self, requester: &UserId, role_td: &ClientTrapdoor) -> Result<bool, EngineError> {
        let skey = self.key(requester)?;
        let td = self.complete(role_td, &skey)?;
        Ok(self.session.lock().unwrap().deactivate(requester, &td))
    }

    fn is_active(&self, requester: &UserId, td: &ServerTrapdoor) -> bool {
        let session = self.session.lock().unwrap();
        let cutoff = self
            .session_ttl
            .map(|ttl| now_ms().saturating_sub(ttl.as_millis() as u64));
        session
            .active_roles(requester)
            .iter()
            .any(|r| &r.trapdoor == td && cutoff.is_none_or(|c| r.activated_at >= c))
    }

    pub fn authorize_access(&self, req: &AccessRequest, ctx: &dyn ContextSource) -> Result<Decision, EngineError> {
        let ctx = Context::new(ctx);
        let skey = self.key(&req.requester)?;
        let role = self.complete(&req.role_td, &skey)?;
        if !self.is_active(&req.requester, &role) {
            return Ok(Decision::Deny(DenyReason::NoActiveRole));
        }
        let action = self.complete(&req.action_td, &skey)?.prepare(&self.params);
        let target = self.complete(&req.target_td, &skey)?.prepare(&self.params);
        let store = self.policies.read().unwrap();

        let mut reason = DenyReason::NoPermission;
        let prepared = role.prepare(&self.params);
        if let Some(d) = self.decide_for_role(&store, &prepared, &action, &target, &ctx, &mut reason)? {
            return Ok(d);
        }
        let mut seen: HashSet<ServerTrapdoor> = HashSet::from([role.clone()]);
        for base in self.bases_in(&store.role_hierarchy, &prepared) {
            if !seen.insert(base.clone()) {
                continue;
            }
            let base = base.prepare(&self.params);
            if let Some(d) = self.decide_for_role(&store, &base, &action, &target, &ctx, &mut reason)? {
                return Ok(d);
            }
        }
        Ok(Decision::Deny(reason))
    }

    /// Permit if some permission entry of `role` grants the pair and its
    /// condition holds. Otherwise records the most specific deny reason.
    fn decide_for_role(
        &self,
        store: &PolicyStore,
        role: &PreparedTrapdoor,
        action: &PreparedTrapdoor,
        target: &PreparedTrapdoor,
        ctx: &Context<'_>,
        reason: &mut DenyReason,
    ) -> Result<Option<Decision>, EngineError> {
        for entry in &store.permission_repository {
            if !match_prepared(&self.params, &entry.role, role) {
                continue;
            }
            if !self.scan_permissions(action, target, &entry.permissions) {
                continue;
            }
            let outcome = match &entry.condition {
                None => Some(true),
                Some(cond) => self.condition_holds(cond, ctx)?,
            };
            let r = match outcome {
                Some(true) => return Ok(Some(Decision::Permit)),
                Some(false) => DenyReason::ConditionFalse,
                None => DenyReason::ConditionUnresolved,
            };
            if r.specificity() > reason.specificity() {
                *reason = r;
            }
        }
        Ok(None)
    }
}

/// Administration point: key installation, deployment and revocation.
pub struct Admin<'a>(pub &'a Engine);

impl Admin<'_> {
    pub fn install_keyset(&self, skey: ServerKeySet) -> Result<(), EngineError> {
        self.0.install_keyset(skey)
    }

    pub fn deploy(&self, bundle: &ClientEncryptedPolicyBundle) -> Result<Deployed, EngineError> {
        self.0.reencrypt_bundle(bundle)
    }

    pub fn revoke(&self, user: &UserId) -> bool {
        self.0.revoke_user(user)
    }
}

/// Policy decision point.
pub struct Pdp<'a>(pub &'a Engine);

impl Pdp<'_> {
    pub fn decide_activation(&self, req: &ActivationRequest, ctx: &dyn ContextSource) -> Result<Decision, EngineError> {
        self.0.activate_role(req, ctx)
    }

    pub fn decide_access(&self, req: &AccessRequest, ctx: &dyn ContextSource) -> Result<Decision, EngineError> {
        self.0.authorize_access(req, ctx)
    }
}

/// Policy enforcement point: the requester-facing entry.
pub struct Pep<'a>(pub &'a Engine);

impl Pep<'_> {
    pub fn activate(&self, req: &ActivationRequest, ctx: &dyn ContextSource) -> Result<Decision, EngineError> {
        Pdp(self.0).decide_activation(req, ctx)
    }

    pub fn access(&self, req: &AccessRequest, ctx: &dyn ContextSource) -> Result<Decision, EngineError> {
        Pdp(self.0).decide_access(req, ctx)
    }
}
