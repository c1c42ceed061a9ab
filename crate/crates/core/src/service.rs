//! Request/response service over newline-delimited JSON on TCP.
//!
//! Each request is one `WireEnvelope` line and gets one `WireResponse`
//! line back. Group elements are hex strings throughout.

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::client::{AccessRequest, ActivationRequest, AttributeBatch, ClientEncryptedPolicyBundle};
use crate::crypto::ServerKeySet;
use crate::engine::{ContextSource, Decision, Deployed, Engine};
use crate::error::EngineError;
use crate::ids::UserId;
use crate::snapshot::{Snapshot, SnapshotError};

pub const WIRE_VERSION: u32 = 1;
pub const DEFAULT_LISTEN: &str = "127.0.0.1:7878";
pub const DEFAULT_ATTRIBUTE_TIMEOUT: Duration = Duration::from_millis(2000);

pub const ENV_LISTEN: &str = "SEALED_RBAC_LISTEN";
pub const ENV_SNAPSHOT: &str = "SEALED_RBAC_SNAPSHOT";
pub const ENV_ATTRIBUTE_TIMEOUT_MS: &str = "SEALED_RBAC_ATTRIBUTE_TIMEOUT_MS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    InstallKeyset,
    DeployPolicy,
    Activate,
    Access,
    Attributes,
    Revoke,
    Snapshot,
    Restore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireEnvelope {
    pub version: u32,
    pub op: Op,
    pub principal: UserId,
    #[serde(default)]
    pub correlation_id: String,
    #[serde(default)]
    pub body: Value,
}

impl WireEnvelope {
    pub fn new<T: Serialize>(op: Op, principal: impl Into<UserId>, correlation_id: impl Into<String>, body: &T) -> Self {
        WireEnvelope {
            version: WIRE_VERSION,
            op,
            principal: principal.into(),
            correlation_id: correlation_id.into(),
            body: serde_json::to_value(body).expect("request bodies serialize"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub status: u16,
    pub body: Value,
}

impl WireResponse {
    fn ok(body: Value) -> Self {
        WireResponse { status: 200, body }
    }

    fn error(status: u16, message: impl std::fmt::Display) -> Self {
        WireResponse {
            status,
            body: json!({ "error": message.to_string() }),
        }
    }

    /// The decision carried by an activate/access response.
    pub fn decision(&self) -> Option<Decision> {
        serde_json::from_value(self.body.get("decision")?.clone()).ok()
    }
}

impl From<EngineError> for WireResponse {
    fn from(e: EngineError) -> Self {
        let status = match e {
            EngineError::KeyNotFound(_) => 403,
            EngineError::UnsupportedGate
            | EngineError::MalformedBundle(_)
            | EngineError::Crypto(_)
            | EngineError::Policy(_) => 400,
        };
        WireResponse::error(status, e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevokeBody {
    pub user_id: UserId,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: String,
    pub snapshot_path: Option<PathBuf>,
    pub attribute_timeout: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: DEFAULT_LISTEN.to_owned(),
            snapshot_path: None,
            attribute_timeout: DEFAULT_ATTRIBUTE_TIMEOUT,
        }
    }
}

impl ServiceConfig {
    pub fn from_env() -> Self {
        let mut c = ServiceConfig::default();
        if let Ok(v) = std::env::var(ENV_LISTEN) {
            c.listen = v;
        }
        if let Ok(v) = std::env::var(ENV_SNAPSHOT) {
            c.snapshot_path = Some(v.into());
        }
        if let Some(ms) = std::env::var(ENV_ATTRIBUTE_TIMEOUT_MS).ok().and_then(|v| v.parse().ok()) {
            c.attribute_timeout = Duration::from_millis(ms);
        }
        c
    }
}

/// Attribute batches waiting for the decision they belong to. A batch may
/// arrive before or after the request that needs it.
#[derive(Default)]
pub struct AttributeMailbox {
    pending: Mutex<HashMap<String, (AttributeBatch, Instant)>>,
    arrived: Condvar,
}

impl AttributeMailbox {
    const MAX_AGE: Duration = Duration::from_secs(300);

    pub fn post(&self, batch: AttributeBatch) {
        let mut pending = self.pending.lock().unwrap();
        pending.retain(|_, (_, at)| at.elapsed() < Self::MAX_AGE);
        pending.insert(batch.correlation_id.clone(), (batch, Instant::now()));
        self.arrived.notify_all();
    }

    pub fn take(&self, correlation_id: &str) -> Option<AttributeBatch> {
        self.pending.lock().unwrap().remove(correlation_id).map(|(b, _)| b)
    }

    pub fn wait(&self, correlation_id: &str, timeout: Duration) -> Option<AttributeBatch> {
        let deadline = Instant::now() + timeout;
        let mut pending = self.pending.lock().unwrap();
        loop {
            if let Some((b, _)) = pending.remove(correlation_id) {
                return Some(b);
            }
            let left = deadline.checked_duration_since(Instant::now())?;
            pending = self.arrived.wait_timeout(pending, left).unwrap().0;
        }
    }

    pub fn len(&self) -> usize {
        self.pending.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A PIP the service can call when a condition needs attributes.
pub trait PipCallback: Send + Sync {
    fn request_attributes(&self, correlation_id: &str) -> Option<AttributeBatch>;
}

impl<F: Fn(&str) -> Option<AttributeBatch> + Send + Sync> PipCallback for F {
    fn request_attributes(&self, correlation_id: &str) -> Option<AttributeBatch> {
        self(correlation_id)
    }
}

struct WireContext<'a> {
    service: &'a Service,
    correlation_id: &'a str,
}

impl ContextSource for WireContext<'_> {
    fn attributes(&self) -> Option<AttributeBatch> {
        let mailbox = &self.service.mailbox;
        if let Some(b) = mailbox.take(self.correlation_id) {
            return Some(b);
        }
        if let Some(pip) = &self.service.pip {
            if let Some(b) = pip.request_attributes(self.correlation_id) {
                return Some(b);
            }
        }
        mailbox.wait(self.correlation_id, self.service.config.attribute_timeout)
    }
}

pub struct Service {
    engine: Engine,
    mailbox: AttributeMailbox,
    pip: Option<Box<dyn PipCallback>>,
    config: ServiceConfig,
    save_lock: Mutex<()>,
}

fn parse<T: DeserializeOwned>(body: &Value) -> Result<T, WireResponse> {
    T::deserialize(body).map_err(|e| WireResponse::error(400, format!("invalid body: {e}")))
}

fn check_principal(principal: &UserId, expected: &UserId) -> Result<(), WireResponse> {
    if principal != expected {
        return Err(WireResponse::error(
            403,
            format!("principal {principal} does not match {expected}"),
        ));
    }
    Ok(())
}

impl Service {
    pub fn new(engine: Engine, config: ServiceConfig) -> Self {
        Service {
            engine,
            mailbox: AttributeMailbox::default(),
            pip: None,
            config,
            save_lock: Mutex::new(()),
        }
    }

    pub fn with_pip(mut self, pip: impl PipCallback + 'static) -> Self {
        self.pip = Some(Box::new(pip));
        self
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn mailbox(&self) -> &AttributeMailbox {
        &self.mailbox
    }

    /// Parses one request line and handles it.
    pub fn handle_line(&self, line: &str) -> WireResponse {
        match serde_json::from_str::<WireEnvelope>(line) {
            Ok(env) => self.handle(&env),
            Err(e) => WireResponse::error(400, format!("invalid envelope: {e}")),
        }
    }

    pub fn handle(&self, env: &WireEnvelope) -> WireResponse {
        if env.version != WIRE_VERSION {
            return WireResponse::error(400, format!("unsupported wire version {}", env.version));
        }
        let result = self.dispatch(env);
        let response = result.unwrap_or_else(|r| r);
        if response.status == 200 && matches!(env.op, Op::InstallKeyset | Op::DeployPolicy | Op::Activate | Op::Revoke | Op::Restore) {
            if let Err(e) = self.autosave() {
                return WireResponse::error(500, format!("snapshot write failed: {e}"));
            }
        }
        response
    }

    fn dispatch(&self, env: &WireEnvelope) -> Result<WireResponse, WireResponse> {
        let ctx = WireContext {
            service: self,
            correlation_id: &env.correlation_id,
        };
        match env.op {
            Op::InstallKeyset => {
                let skey: ServerKeySet = parse(&env.body)?;
                let user = skey.user_id.clone();
                self.engine.install_keyset(skey)?;
                Ok(WireResponse::ok(json!({ "installed": user })))
            }
            Op::DeployPolicy => {
                let bundle: ClientEncryptedPolicyBundle = parse(&env.body)?;
                check_principal(&env.principal, &bundle.issuer)?;
                let body = match self.engine.reencrypt_bundle(&bundle)? {
                    Deployed::RoleAssignment { requester, roles } => {
                        json!({ "kind": "role_assignment", "requester": requester, "roles": roles })
                    }
                    Deployed::PermissionAssignment { index, permissions } => {
                        json!({ "kind": "permission_assignment", "index": index, "permissions": permissions })
                    }
                    Deployed::Hierarchy { nodes } => json!({ "kind": "hierarchy", "nodes": nodes }),
                    Deployed::Condition(tree) => json!({ "kind": "condition", "tree": tree }),
                };
                Ok(WireResponse::ok(body))
            }
            Op::Activate => {
                let req: ActivationRequest = parse(&env.body)?;
                check_principal(&env.principal, &req.requester)?;
                let d = self.engine.activate_role(&req, &ctx)?;
                Ok(WireResponse::ok(json!({ "decision": d })))
            }
            Op::Access => {
                let req: AccessRequest = parse(&env.body)?;
                check_principal(&env.principal, &req.requester)?;
                let d = self.engine.authorize_access(&req, &ctx)?;
                Ok(WireResponse::ok(json!({ "decision": d })))
            }
            Op::Attributes => {
                let batch: AttributeBatch = parse(&env.body)?;
                check_principal(&env.principal, &batch.pip_id)?;
                batch.validate().map_err(|e| WireResponse::error(400, e))?;
                if !self.engine.has_key(&batch.pip_id) {
                    return Err(EngineError::KeyNotFound(batch.pip_id).into());
                }
                self.mailbox.post(batch);
                Ok(WireResponse::ok(json!({ "accepted": env.correlation_id })))
            }
            Op::Revoke => {
                let body: RevokeBody = parse(&env.body)?;
                let removed = self.engine.revoke_user(&body.user_id);
                Ok(WireResponse::ok(json!({ "removed": removed })))
            }
            Op::Snapshot => {
                let snap = Snapshot::capture(&self.engine);
                Ok(WireResponse::ok(serde_json::to_value(&snap).expect("snapshot serializes")))
            }
            Op::Restore => {
                let snap: Snapshot = parse(&env.body)?;
                snap.validate().map_err(|e| WireResponse::error(400, e))?;
                if snap.params != *self.engine.params() {
                    return Err(WireResponse::error(400, "snapshot was taken with different public parameters"));
                }
                let digest = snap.digest.clone();
                self.engine.replace_state(snap.state);
                Ok(WireResponse::ok(json!({ "digest": digest })))
            }
        }
    }

    fn autosave(&self) -> Result<(), SnapshotError> {
        let Some(path) = &self.config.snapshot_path else {
            return Ok(());
        };
        let _guard = self.save_lock.lock().unwrap();
        Snapshot::capture(&self.engine).save(path)
    }
}

fn serve_connection(service: &Service, stream: TcpStream) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = service.handle_line(&line);
        serde_json::to_writer(&mut writer, &response)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

/// A running listener. Dropping the handle stops accepting connections.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_accepting();
        }
    }
}

/// Binds `addr` and serves each connection on its own thread.
pub fn spawn_server(service: Arc<Service>, addr: impl ToSocketAddrs) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let thread = thread::spawn(move || {
        for stream in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let service = service.clone();
            thread::spawn(move || {
                let _ = serve_connection(&service, stream);
            });
        }
    });
    Ok(ServerHandle {
        addr,
        stop,
        thread: Some(thread),
    })
}

/// Blocking client for one connection.
pub struct ServiceClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl ServiceClient {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        Ok(ServiceClient {
            writer: stream.try_clone()?,
            reader: BufReader::new(stream),
        })
    }

    pub fn call(&mut self, env: &WireEnvelope) -> io::Result<WireResponse> {
        serde_json::to_writer(&mut self.writer, env)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "service closed the connection"));
        }
        serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mailbox_wait_times_out_and_delivers() {
        let mb = Arc::new(AttributeMailbox::default());
        assert!(mb.wait("x", Duration::from_millis(20)).is_none());
        let batch = AttributeBatch {
            pip_id: "pip".into(),
            correlation_id: "x".into(),
            trapdoors: vec![],
        };
        let poster = {
            let mb = mb.clone();
            let batch = batch.clone();
            thread::spawn(move || {
                thread::sleep(Duration::from_millis(20));
                mb.post(batch);
            })
        };
        assert_eq!(mb.wait("x", Duration::from_secs(5)), Some(batch));
        poster.join().unwrap();
        assert!(mb.is_empty());
    }

    #[test]
    fn envelope_json_shape() {
        let env = WireEnvelope::new(Op::Revoke, "tkma", "c-1", &RevokeBody { user_id: "bob".into() });
        let json = serde_json::to_string(&env).unwrap();
        assert_eq!(
            json,
            r#"{"version":1,"op":"revoke","principal":"tkma","correlation_id":"c-1","body":{"user_id":"bob"}}"#
        );
    }
}
