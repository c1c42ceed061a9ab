//! Trusted-side operations: key issuance, first-round policy encryption,
//! request construction and attribute trapdoors for the PIP.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::Path;

use rand::{CryptoRng, RngCore};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::crypto::{
    self, client_encrypt, client_trapdoor, ClientCiphertext, ClientKeySet, ClientTrapdoor, MasterSecret,
    PublicParams, ServerKeySet,
};
use crate::error::{ClientError, CryptoError, PolicyError};
use crate::group::{GroupParams, SecurityProfile};
use crate::ids::UserId;
use crate::policy::{
    action_element, role_element, target_element, AttributeAssertion, ConditionTree, PermissionAssignmentPolicy,
    Policy, RoleAssignmentPolicy, RoleHierarchyGraph,
};

pub const KEY_FILE_VERSION: u32 = 1;

/// The key management authority: holds `msk` and issues split key pairs.
#[derive(Clone, Serialize, Deserialize)]
pub struct Tkma {
    pub params: PublicParams,
    msk: MasterSecret,
    issued: BTreeSet<UserId>,
}

impl std::fmt::Debug for Tkma {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tkma").field("issued", &self.issued).finish_non_exhaustive()
    }
}

impl Tkma {
    pub fn init<R: RngCore + CryptoRng>(profile: SecurityProfile, rng: &mut R) -> Result<Self, CryptoError> {
        let (params, msk) = crypto::init(profile, rng)?;
        Ok(Tkma::from_parts(params, msk))
    }

    pub fn with_group<R: RngCore + CryptoRng>(group: GroupParams, rng: &mut R) -> Self {
        let (params, msk) = crypto::init_with_group(group, rng);
        Tkma::from_parts(params, msk)
    }

    pub fn from_parts(params: PublicParams, msk: MasterSecret) -> Self {
        Tkma {
            params,
            msk,
            issued: BTreeSet::new(),
        }
    }

    /// Issues a fresh pair for `user`. Re-issuing replaces the previous pair;
    /// the caller must install the new server half.
    pub fn enroll<R: RngCore + CryptoRng>(&mut self, user: &UserId, rng: &mut R) -> (ClientKeySet, ServerKeySet) {
        self.issued.insert(user.clone());
        crypto::keygen(&self.msk, user, &self.params, rng)
    }

    pub fn issued(&self) -> impl Iterator<Item = &UserId> {
        self.issued.iter()
    }

    pub fn master_secret(&self) -> &MasterSecret {
        &self.msk
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        write_private_json(path, self)
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let t: Tkma = read_json(path)?;
        t.params.validate().map_err(io::Error::other)?;
        Ok(t)
    }
}

/// On-disk form of a client key set.
#[derive(Clone, Serialize, Deserialize)]
pub struct KeyFile {
    pub version: u32,
    pub params: PublicParams,
    pub keyset: ClientKeySet,
}

impl KeyFile {
    pub fn new(params: PublicParams, keyset: ClientKeySet) -> Self {
        KeyFile {
            version: KEY_FILE_VERSION,
            params,
            keyset,
        }
    }

    /// Written with mode 0600 on unix.
    pub fn save(&self, path: &Path) -> io::Result<()> {
        write_private_json(path, self)
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let f: KeyFile = read_json(path)?;
        if f.version != KEY_FILE_VERSION {
            return Err(io::Error::other(format!("unsupported key file version {}", f.version)));
        }
        f.params.validate().map_err(io::Error::other)?;
        f.params
            .group
            .validate_scalar(&f.keyset.client_exponent, true)
            .map_err(io::Error::other)?;
        Ok(f)
    }
}

pub(crate) fn write_private_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let json = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts.open(path)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        f.set_permissions(fs::Permissions::from_mode(0o600))?;
    }
    io::Write::write_all(&mut f, &json)?;
    f.sync_all()
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> io::Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// An `(action, target)` pair in either encrypted form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionPair<C> {
    pub action: C,
    pub target: C,
}

/// A hierarchy node: the role's ciphertext and its trapdoor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyNode<C, T> {
    pub ciphertext: C,
    pub trapdoor: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BundlePayload {
    RoleAssignment {
        requester: UserId,
        roles: Vec<ClientCiphertext>,
        #[serde(default)]
        condition: Option<ConditionTree<ClientCiphertext>>,
    },
    PermissionAssignment {
        role: ClientCiphertext,
        permissions: Vec<PermissionPair<ClientCiphertext>>,
        #[serde(default)]
        condition: Option<ConditionTree<ClientCiphertext>>,
    },
    Condition {
        tree: ConditionTree<ClientCiphertext>,
    },
    Hierarchy {
        nodes: Vec<HierarchyNode<ClientCiphertext, ClientTrapdoor>>,
        edges: Vec<(usize, usize)>,
    },
}

/// A policy after the admin's round of encryption. Protected, but not yet
/// enforceable until the server applies its half.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientEncryptedPolicyBundle {
    pub issuer: UserId,
    pub payload: BundlePayload,
}

impl ClientEncryptedPolicyBundle {
    pub fn kind(&self) -> &'static str {
        match self.payload {
            BundlePayload::RoleAssignment { .. } => "role_assignment",
            BundlePayload::PermissionAssignment { .. } => "permission_assignment",
            BundlePayload::Condition { .. } => "condition",
            BundlePayload::Hierarchy { .. } => "hierarchy",
        }
    }

    /// Number of ciphertexts and trapdoors the server will have to process.
    pub fn element_count(&self) -> usize {
        let cond = |c: &Option<ConditionTree<ClientCiphertext>>| c.as_ref().map_or(0, ConditionTree::leaf_count);
        match &self.payload {
            BundlePayload::RoleAssignment { roles, condition, .. } => roles.len() + cond(condition),
            BundlePayload::PermissionAssignment {
                permissions, condition, ..
            } => 1 + 2 * permissions.len() + cond(condition),
            BundlePayload::Condition { tree } => tree.leaf_count(),
            BundlePayload::Hierarchy { nodes, .. } => 2 * nodes.len(),
        }
    }
}

/// Encrypts every leaf token of a condition, leaving the gates in clear.
pub fn encrypt_condition<R: RngCore + CryptoRng>(
    tree: &ConditionTree,
    keyset: &ClientKeySet,
    params: &PublicParams,
    rng: &mut R,
) -> Result<ConditionTree<ClientCiphertext>, ClientError> {
    tree.validate()?;
    if tree.contains_threshold() {
        return Err(PolicyError::ThresholdUnsupported.into());
    }
    Ok(tree.try_map_leaves(&mut |token: &String| client_encrypt(params, keyset, token, rng))?)
}

fn encrypt_optional<R: RngCore + CryptoRng>(
    tree: &Option<ConditionTree>,
    keyset: &ClientKeySet,
    params: &PublicParams,
    rng: &mut R,
) -> Result<Option<ConditionTree<ClientCiphertext>>, ClientError> {
    tree.as_ref()
        .map(|t| encrypt_condition(t, keyset, params, rng))
        .transpose()
}

pub fn encrypt_role_assignment<R: RngCore + CryptoRng>(
    policy: &RoleAssignmentPolicy,
    keyset: &ClientKeySet,
    params: &PublicParams,
    rng: &mut R,
) -> Result<ClientEncryptedPolicyBundle, ClientError> {
    policy.validate()?;
    let roles = policy
        .roles
        .iter()
        .map(|r| client_encrypt(params, keyset, &role_element(r), rng))
        .collect::<Result<_, _>>()?;
    Ok(ClientEncryptedPolicyBundle {
        issuer: keyset.user_id.clone(),
        payload: BundlePayload::RoleAssignment {
            requester: policy.requester.clone(),
            roles,
            condition: encrypt_optional(&policy.condition, keyset, params, rng)?,
        },
    })
}

pub fn encrypt_permission_assignment<R: RngCore + CryptoRng>(
    policy: &PermissionAssignmentPolicy,
    keyset: &ClientKeySet,
    params: &PublicParams,
    rng: &mut R,
) -> Result<ClientEncryptedPolicyBundle, ClientError> {
    policy.validate()?;
    let role = client_encrypt(params, keyset, &role_element(&policy.role), rng)?;
    let mut permissions = Vec::with_capacity(policy.permissions.len());
    for p in &policy.permissions {
        permissions.push(PermissionPair {
            action: client_encrypt(params, keyset, &action_element(&p.action), rng)?,
            target: client_encrypt(params, keyset, &target_element(&p.target), rng)?,
        });
    }
    Ok(ClientEncryptedPolicyBundle {
        issuer: keyset.user_id.clone(),
        payload: BundlePayload::PermissionAssignment {
            role,
            permissions,
            condition: encrypt_optional(&policy.condition, keyset, params, rng)?,
        },
    })
}

pub fn encrypt_condition_bundle<R: RngCore + CryptoRng>(
    tree: &ConditionTree,
    keyset: &ClientKeySet,
    params: &PublicParams,
    rng: &mut R,
) -> Result<ClientEncryptedPolicyBundle, ClientError> {
    Ok(ClientEncryptedPolicyBundle {
        issuer: keyset.user_id.clone(),
        payload: BundlePayload::Condition {
            tree: encrypt_condition(tree, keyset, params, rng)?,
        },
    })
}

pub fn encrypt_hierarchy<R: RngCore + CryptoRng>(
    graph: &RoleHierarchyGraph,
    keyset: &ClientKeySet,
    params: &PublicParams,
    rng: &mut R,
) -> Result<ClientEncryptedPolicyBundle, ClientError> {
    graph.validate()?;
    let edges = graph.edge_indices()?;
    let mut nodes = Vec::with_capacity(graph.roles.len());
    for r in &graph.roles {
        let e = role_element(r);
        nodes.push(HierarchyNode {
            ciphertext: client_encrypt(params, keyset, &e, rng)?,
            trapdoor: client_trapdoor(params, keyset, &e, rng)?,
        });
    }
    Ok(ClientEncryptedPolicyBundle {
        issuer: keyset.user_id.clone(),
        payload: BundlePayload::Hierarchy { nodes, edges },
    })
}

/// Dispatches on the policy kind.
pub fn encrypt_policy<R: RngCore + CryptoRng>(
    policy: &Policy,
    keyset: &ClientKeySet,
    params: &PublicParams,
    rng: &mut R,
) -> Result<ClientEncryptedPolicyBundle, ClientError> {
    match policy {
        Policy::RoleAssignment(p) => encrypt_role_assignment(p, keyset, params, rng),
        Policy::PermissionAssignment(p) => encrypt_permission_assignment(p, keyset, params, rng),
        Policy::Hierarchy(g) => encrypt_hierarchy(g, keyset, params, rng),
        Policy::Condition(t) => encrypt_condition_bundle(t, keyset, params, rng),
    }
}

/// `ACT = (i, R)`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationRequest {
    pub requester: UserId,
    pub role_td: ClientTrapdoor,
}

/// `REQ = (R, A, T)` from requester `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub requester: UserId,
    pub role_td: ClientTrapdoor,
    pub action_td: ClientTrapdoor,
    pub target_td: ClientTrapdoor,
}

pub fn make_activation_request<R: RngCore + CryptoRng>(
    keyset: &ClientKeySet,
    role: &str,
    params: &PublicParams,
    rng: &mut R,
) -> Result<ActivationRequest, ClientError> {
    Ok(ActivationRequest {
        requester: keyset.user_id.clone(),
        role_td: client_trapdoor(params, keyset, &role_element(role), rng)?,
    })
}

pub fn make_access_request<R: RngCore + CryptoRng>(
    keyset: &ClientKeySet,
    role: &str,
    action: &str,
    target: &str,
    params: &PublicParams,
    rng: &mut R,
) -> Result<AccessRequest, ClientError> {
    Ok(AccessRequest {
        requester: keyset.user_id.clone(),
        role_td: client_trapdoor(params, keyset, &role_element(role), rng)?,
        action_td: client_trapdoor(params, keyset, &action_element(action), rng)?,
        target_td: client_trapdoor(params, keyset, &target_element(target), rng)?,
    })
}

/// One trapdoor per token: a string attribute yields one, a `w`-bit number
/// yields `w`.
pub fn pip_collect<R: RngCore + CryptoRng>(
    assertions: &[AttributeAssertion],
    keyset: &ClientKeySet,
    params: &PublicParams,
    rng: &mut R,
) -> Result<Vec<ClientTrapdoor>, ClientError> {
    let mut out = Vec::new();
    for a in assertions {
        for token in a.tokens()? {
            out.push(client_trapdoor(params, keyset, &token, rng)?);
        }
    }
    Ok(out)
}

/// Everything the PIP knows about one pending decision, sent in one message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeBatch {
    pub pip_id: UserId,
    pub correlation_id: String,
    pub trapdoors: Vec<ClientTrapdoor>,
}

impl AttributeBatch {
    pub fn collect<R: RngCore + CryptoRng>(
        correlation_id: impl Into<String>,
        assertions: &[AttributeAssertion],
        keyset: &ClientKeySet,
        params: &PublicParams,
        rng: &mut R,
    ) -> Result<Self, ClientError> {
        if assertions.is_empty() {
            return Err(PolicyError::Empty("attribute batch").into());
        }
        Ok(AttributeBatch {
            pip_id: keyset.user_id.clone(),
            correlation_id: correlation_id.into(),
            trapdoors: pip_collect(assertions, keyset, params, rng)?,
        })
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.trapdoors.is_empty() {
            return Err(PolicyError::Empty("attribute batch"));
        }
        if self.correlation_id.is_empty() {
            return Err(PolicyError::Empty("correlation id"));
        }
        Ok(())
    }
}
