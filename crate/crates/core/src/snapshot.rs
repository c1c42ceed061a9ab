//! Whole-store snapshots as a single versioned JSON document.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::crypto::{PublicParams, ServerCiphertext};
use crate::engine::{Engine, EngineState, PolicyStore};
use crate::error::CryptoError;
use crate::group::GroupElement;
use crate::policy::{find_cycle, ConditionTree};

pub const FORMAT_VERSION: &str = "1.0";
const SUPPORTED_MAJOR: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported snapshot version {0}")]
    Version(String),
    #[error("snapshot digest mismatch")]
    Digest,
    #[error("invalid snapshot contents: {0}")]
    Invalid(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format_version: String,
    pub params: PublicParams,
    pub state: EngineState,
    /// SHA-256 of the canonical JSON of the policy store alone.
    pub policy_digest: String,
    /// SHA-256 of the canonical JSON of `params` and `state`.
    pub digest: String,
}

#[derive(Serialize)]
struct Body<'a> {
    params: &'a PublicParams,
    state: &'a EngineState,
}

fn sha256_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("store types serialize");
    hex::encode(Sha256::digest(&bytes))
}

pub fn policy_digest(store: &PolicyStore) -> String {
    sha256_json(store)
}

pub fn store_digest(params: &PublicParams, state: &EngineState) -> String {
    sha256_json(&Body { params, state })
}

impl Snapshot {
    pub fn capture(engine: &Engine) -> Self {
        Snapshot::from_state(engine.params().clone(), engine.export_state())
    }

    pub fn from_state(params: PublicParams, state: EngineState) -> Self {
        Snapshot {
            format_version: FORMAT_VERSION.to_owned(),
            policy_digest: policy_digest(&state.policy_store),
            digest: store_digest(&params, &state),
            params,
            state,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("store types serialize")
    }

    /// Parses and fully validates a snapshot.
    pub fn from_json(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let snap: Snapshot = serde_json::from_slice(bytes)?;
        snap.validate()?;
        Ok(snap)
    }

    pub fn validate(&self) -> Result<(), SnapshotError> {
        let major = self
            .format_version
            .split('.')
            .next()
            .and_then(|m| m.parse::<u32>().ok());
        if major != Some(SUPPORTED_MAJOR) {
            return Err(SnapshotError::Version(self.format_version.clone()));
        }
        if self.digest != store_digest(&self.params, &self.state)
            || self.policy_digest != policy_digest(&self.state.policy_store)
        {
            return Err(SnapshotError::Digest);
        }
        self.params.validate()?;
        validate_state(&self.params, &self.state)
    }

    /// An engine holding exactly this snapshot's state.
    pub fn into_engine(self) -> Engine {
        Engine::from_state(self.params, self.state)
    }

    /// Writes to a temporary sibling, syncs, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<(), SnapshotError> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let name = path
            .file_name()
            .ok_or_else(|| SnapshotError::Invalid("snapshot path has no file name".into()))?;
        let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_json())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        if let Ok(d) = fs::File::open(dir) {
            let _ = d.sync_all();
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SnapshotError> {
        Snapshot::from_json(&fs::read(path)?)
    }
}

fn validate_state(params: &PublicParams, state: &EngineState) -> Result<(), SnapshotError> {
    let g = &params.group;
    let elem = |e: &GroupElement| g.validate(e).map(|_| ());
    let ct = |c: &ServerCiphertext| elem(&c.c1);
    let tree = |t: &Option<ConditionTree<ServerCiphertext>>| -> Result<(), SnapshotError> {
        if let Some(t) = t {
            t.validate_shape().map_err(|e| SnapshotError::Invalid(e.to_string()))?;
            if t.contains_threshold() {
                return Err(SnapshotError::Invalid("threshold gate in stored condition".into()));
            }
            t.leaves().try_for_each(ct)?;
        }
        Ok(())
    };
    for (id, k) in &state.key_store.keys {
        if id != &k.user_id {
            return Err(SnapshotError::Invalid(format!("key store entry {id} holds key of {}", k.user_id)));
        }
        g.validate_scalar(&k.server_exponent, false)?;
    }
    let ps = &state.policy_store;
    for entry in ps.role_repository.values() {
        entry.roles.iter().try_for_each(ct)?;
        tree(&entry.condition)?;
    }
    for entry in &ps.permission_repository {
        ct(&entry.role)?;
        for p in &entry.permissions {
            ct(&p.action)?;
            ct(&p.target)?;
        }
        tree(&entry.condition)?;
    }
    let h = &ps.role_hierarchy;
    for n in &h.nodes {
        ct(&n.ciphertext)?;
        elem(&n.trapdoor.value)?;
    }
    if h.edges.iter().any(|&(d, b)| d >= h.nodes.len() || b >= h.nodes.len()) || find_cycle(h.nodes.len(), &h.edges).is_some() {
        return Err(SnapshotError::Invalid("bad hierarchy edges".into()));
    }
    for roles in state.session.active.values() {
        for r in roles {
            elem(&r.trapdoor.value)?;
        }
    }
    Ok(())
}
