//! Command-line drivers for the TKMA operator, admin, requester, PIP and
//! service operator.
//!
//! Every command works either in-process against a snapshot file
//! (`--store`) or against a running service (`--connect`).
//!
//! Exit codes: 0 success or permit, 1 error, 3 deny, 4 unknown or revoked
//! user.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::rngs::OsRng;
use serde::Serialize;
use serde_json::Value;

use crate::bench::{bench_run, flat_vs_rbac, request_cost, BenchFixture, BenchScenario, Workload};
use crate::client::{
    encrypt_policy, make_access_request, make_activation_request, read_json, AttributeBatch, KeyFile, Tkma,
};
use crate::crypto::ServerKeySet;
use crate::engine::{ContextSource, Decision, Deployed, Engine, NoContext};
use crate::error::EngineError;
use crate::group::{GroupParams, SecurityProfile};
use crate::ids::UserId;
use crate::policy::{AttributeAssertion, PolicyDocument};
use crate::service::{
    spawn_server, Op, RevokeBody, Service, ServiceClient, ServiceConfig, WireEnvelope, WireResponse,
};
use crate::snapshot::Snapshot;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_DENY: i32 = 3;
pub const EXIT_KEY_NOT_FOUND: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "sealed-rbac", version, about = "Encrypted role-based access control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Target {
    /// Snapshot file of an in-process service provider.
    #[arg(long, conflicts_with = "connect")]
    pub store: Option<PathBuf>,
    /// Address of a running `sealed-rbac serve`.
    #[arg(long)]
    pub connect: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate system parameters and the master secret.
    TkmaInit {
        /// Bit length of p: 5 (toy), 256 (test) or 2048 (production).
        #[arg(long, default_value_t = 2048)]
        bits: u32,
        /// For 2048 bits, use the built-in group instead of generating one.
        #[arg(long)]
        standard_group: bool,
        /// Where to write the TKMA state (mode 0600).
        #[arg(long)]
        tkma: PathBuf,
        /// Also create an empty service provider snapshot here.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Issue a split key pair for a user and install the server half.
    TkmaKeygen {
        #[arg(long)]
        tkma: PathBuf,
        #[arg(long)]
        user: String,
        /// Client key file to write (mode 0600).
        #[arg(long)]
        key_out: PathBuf,
        /// Write the server half here instead of installing it.
        #[arg(long)]
        server_key_out: Option<PathBuf>,
        #[command(flatten)]
        target: Target,
    },
    /// Encrypt a JSON policy document and deploy it.
    AdminDeploy {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[command(flatten)]
        target: Target,
    },
    /// Ask to activate a role.
    RequesterActivate {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        role: String,
        #[command(flatten)]
        context: ContextArgs,
        #[command(flatten)]
        target: Target,
    },
    /// Ask to perform an action on a target under an active role.
    RequesterAccess {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        role: String,
        #[arg(long)]
        action: String,
        #[arg(long = "target")]
        target_object: String,
        #[command(flatten)]
        context: ContextArgs,
        #[command(flatten)]
        target: Target,
    },
    /// Send contextual attributes for a pending decision.
    PipSend {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        correlation_id: String,
        /// `name=value` or `name=value#bits`, repeatable.
        #[arg(long = "attr", required = true)]
        attrs: Vec<String>,
        /// Write the batch to a file (for in-process use) instead of sending.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        connect: Option<String>,
    },
    /// Delete a user's server half.
    SpRevoke {
        #[arg(long)]
        user: String,
        #[command(flatten)]
        target: Target,
    },
    /// Write a snapshot of the whole store.
    SpSnapshot {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        target: Target,
    },
    /// Serve a snapshot over TCP. Configured by SEALED_RBAC_LISTEN,
    /// SEALED_RBAC_SNAPSHOT and SEALED_RBAC_ATTRIBUTE_TIMEOUT_MS.
    Serve {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
    },
    /// Run the scaling benchmarks.
    Bench {
        /// Workload name, or `all`.
        #[arg(long, default_value = "all")]
        workload: String,
        #[arg(long, default_value_t = 7)]
        repetitions: usize,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
        /// Also run the request-cost and flat-baseline comparisons.
        #[arg(long)]
        compare: bool,
    },
}

#[derive(Args, Debug, Clone)]
pub struct ContextArgs {
    /// Attribute batch file written by `pip-send --out`.
    #[arg(long)]
    pub attributes: Option<PathBuf>,
    /// Correlation id the PIP sends its batch under (with `--connect`).
    #[arg(long, default_value = "")]
    pub correlation_id: String,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn error(message: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_ERROR,
            message: message.to_string(),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let code = match e {
            EngineError::KeyNotFound(_) => EXIT_KEY_NOT_FOUND,
            _ => EXIT_ERROR,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

macro_rules! impl_failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::error(e)
            }
        }
    )*};
}

impl_failure_from!(
    std::io::Error,
    serde_json::Error,
    crate::error::ClientError,
    crate::error::CryptoError,
    crate::error::PolicyError,
    crate::snapshot::SnapshotError
);

type Outcome = Result<i32, Failure>;

/// Runs the CLI and returns the process exit code.
pub fn main() -> i32 {
    run(Cli::parse())
}

pub fn run(cli: Cli) -> i32 {
    match execute(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

enum Backend {
    Local { path: PathBuf, engine: Engine },
    Remote(ServiceClient),
}

impl Backend {
    fn open(target: &Target) -> Result<Self, Failure> {
        match (&target.store, &target.connect) {
            (Some(path), None) => Ok(Backend::Local {
                engine: Snapshot::load(path)?.into_engine(),
                path: path.clone(),
            }),
            (None, Some(addr)) => Ok(Backend::Remote(ServiceClient::connect(addr.as_str())?)),
            _ => Err(Failure::error("give exactly one of --store or --connect")),
        }
    }

    fn save(&self) -> Result<(), Failure> {
        if let Backend::Local { path, engine } = self {
            Snapshot::capture(engine).save(path)?;
        }
        Ok(())
    }

    fn call<T: Serialize>(&mut self, op: Op, principal: &UserId, correlation_id: &str, body: &T) -> Result<Value, Failure> {
        let Backend::Remote(client) = self else {
            unreachable!("remote call on a local backend")
        };
        let response: WireResponse = client.call(&WireEnvelope::new(op, principal.clone(), correlation_id, body))?;
        match response.status {
            200 => Ok(response.body),
            403 => Err(Failure {
                code: EXIT_KEY_NOT_FOUND,
                message: remote_message(&response),
            }),
            _ => Err(Failure::error(remote_message(&response))),
        }
    }
}

fn remote_message(r: &WireResponse) -> String {
    r.body
        .get("error")
        .and_then(Value::as_str)
        .map_or_else(|| format!("status {}", r.status), str::to_owned)
}

const OPERATOR: &str = "operator";

fn report_decision(d: Decision) -> i32 {
    match d {
        Decision::Permit => {
            println!("permit");
            EXIT_OK
        }
        Decision::Deny(reason) => {
            println!("deny: {}", reason.as_str());
            EXIT_DENY
        }
    }
}

fn remote_decision(body: &Value) -> Result<Decision, Failure> {
    serde_json::from_value(body.get("decision").cloned().unwrap_or_default())
        .map_err(|_| Failure::error("service reply carries no decision"))
}

fn local_context(args: &ContextArgs) -> Result<Box<dyn ContextSource>, Failure> {
    Ok(match &args.attributes {
        Some(path) => Box::new(read_json::<AttributeBatch>(path)?),
        None => Box::new(NoContext),
    })
}

fn load_key(path: &Path) -> Result<KeyFile, Failure> {
    Ok(KeyFile::load(path)?)
}

fn execute(command: Command) -> Outcome {
    let mut rng = OsRng;
    match command {
        Command::TkmaInit {
            bits,
            standard_group,
            tkma,
            store,
        } => {
            let profile = SecurityProfile::from_bits(bits)?;
            let authority = if standard_group {
                if profile != SecurityProfile::Production {
                    return Err(Failure::error("--standard-group needs --bits 2048"));
                }
                Tkma::with_group(GroupParams::standard_2048(), &mut rng)
            } else {
                Tkma::init(profile, &mut rng)?
            };
            authority.save(&tkma)?;
            if let Some(store) = store {
                Snapshot::capture(&Engine::new(authority.params.clone())).save(&store)?;
            }
            println!("initialized {bits}-bit parameters");
            Ok(EXIT_OK)
        }
        Command::TkmaKeygen {
            tkma,
            user,
            key_out,
            server_key_out,
            target,
        } => {
            let mut authority = Tkma::load(&tkma)?;
            let user = UserId::new(user);
            let (client, server) = authority.enroll(&user, &mut rng);
            KeyFile::new(authority.params.clone(), client).save(&key_out)?;
            authority.save(&tkma)?;
            match server_key_out {
                Some(path) => crate::client::write_private_json(&path, &server)?,
                None => install(&target, server)?,
            }
            println!("issued key pair for {user}");
            Ok(EXIT_OK)
        }
        Command::AdminDeploy { key, policy, target } => {
            let key = load_key(&key)?;
            let doc: PolicyDocument = read_json(&policy)?;
            let compiled = doc.compile()?;
            let bundle = encrypt_policy(&compiled, &key.keyset, &key.params, &mut rng)?;
            let mut backend = Backend::open(&target)?;
            let kind = bundle.kind();
            match &mut backend {
                Backend::Local { engine, .. } => {
                    if let Deployed::Condition(tree) = engine.reencrypt_bundle(&bundle)? {
                        println!("{}", serde_json::to_string(&tree)?);
                    }
                }
                remote => {
                    let body = remote.call(Op::DeployPolicy, &key.keyset.user_id, "", &bundle)?;
                    if let Some(tree) = body.get("tree") {
                        println!("{tree}");
                    }
                }
            }
            backend.save()?;
            println!("deployed {kind}");
            Ok(EXIT_OK)
        }
        Command::RequesterActivate {
            key,
            role,
            context,
            target,
        } => {
            let key = load_key(&key)?;
            let req = make_activation_request(&key.keyset, &role, &key.params, &mut rng)?;
            let mut backend = Backend::open(&target)?;
            let d = match &mut backend {
                Backend::Local { engine, .. } => engine.activate_role(&req, local_context(&context)?.as_ref())?,
                remote => remote_decision(&remote.call(Op::Activate, &req.requester, &context.correlation_id, &req)?)?,
            };
            backend.save()?;
            Ok(report_decision(d))
        }
        Command::RequesterAccess {
            key,
            role,
            action,
            target_object,
            context,
            target,
        } => {
            let key = load_key(&key)?;
            let req = make_access_request(&key.keyset, &role, &action, &target_object, &key.params, &mut rng)?;
            let mut backend = Backend::open(&target)?;
            let d = match &mut backend {
                Backend::Local { engine, .. } => engine.authorize_access(&req, local_context(&context)?.as_ref())?,
                remote => remote_decision(&remote.call(Op::Access, &req.requester, &context.correlation_id, &req)?)?,
            };
            Ok(report_decision(d))
        }
        Command::PipSend {
            key,
            correlation_id,
            attrs,
            out,
            connect,
        } => {
            let key = load_key(&key)?;
            let assertions = attrs
                .iter()
                .map(|a| a.parse::<AttributeAssertion>())
                .collect::<Result<Vec<_>, _>>()?;
            let batch = AttributeBatch::collect(correlation_id.as_str(), &assertions, &key.keyset, &key.params, &mut rng)?;
            match (out, connect) {
                (Some(path), None) => {
                    std::fs::write(&path, serde_json::to_vec_pretty(&batch)?)?;
                    println!("wrote {} attribute trapdoors", batch.trapdoors.len());
                }
                (None, Some(addr)) => {
                    let mut backend = Backend::Remote(ServiceClient::connect(addr.as_str())?);
                    backend.call(Op::Attributes, &batch.pip_id, &correlation_id, &batch)?;
                    println!("sent {} attribute trapdoors", batch.trapdoors.len());
                }
                _ => return Err(Failure::error("give exactly one of --out or --connect")),
            }
            Ok(EXIT_OK)
        }
        Command::SpRevoke { user, target } => {
            let user = UserId::new(user);
            let mut backend = Backend::open(&target)?;
            let removed = match &mut backend {
                Backend::Local { engine, .. } => engine.revoke_user(&user),
                remote => {
                    let body = remote.call(Op::Revoke, &OPERATOR.into(), "", &RevokeBody { user_id: user.clone() })?;
                    body.get("removed").and_then(Value::as_bool).unwrap_or(false)
                }
            };
            backend.save()?;
            if removed {
                println!("revoked {user}");
                Ok(EXIT_OK)
            } else {
                Err(Failure {
                    code: EXIT_KEY_NOT_FOUND,
                    message: format!("no server key set for user {user}"),
                })
            }
        }
        Command::SpSnapshot { out, target } => {
            let mut backend = Backend::open(&target)?;
            let snap = match &mut backend {
                Backend::Local { engine, .. } => Snapshot::capture(engine),
                remote => {
                    let body = remote.call(Op::Snapshot, &OPERATOR.into(), "", &Value::Null)?;
                    let snap: Snapshot = serde_json::from_value(body)?;
                    snap.validate()?;
                    snap
                }
            };
            snap.save(&out)?;
            println!("snapshot {}", snap.digest);
            Ok(EXIT_OK)
        }
        Command::Serve { store, listen } => {
            let mut config = ServiceConfig::from_env();
            if let Some(l) = listen {
                config.listen = l;
            }
            if let Some(s) = store {
                config.snapshot_path = Some(s);
            }
            let path = config
                .snapshot_path
                .clone()
                .ok_or_else(|| Failure::error("--store or SEALED_RBAC_SNAPSHOT is required"))?;
            let engine = Snapshot::load(&path)?.into_engine();
            let listen = config.listen.clone();
            let service = Arc::new(Service::new(engine, config));
            let handle = spawn_server(service, listen.as_str())?;
            println!("listening on {}", handle.local_addr());
            handle.join();
            Ok(EXIT_OK)
        }
        Command::Bench {
            workload,
            repetitions,
            out,
            compare,
        } => {
            let workloads: Vec<Workload> = if workload == "all" {
                Workload::ALL.to_vec()
            } else {
                vec![Workload::parse(&workload).ok_or_else(|| Failure::error(format!("unknown workload {workload}")))?]
            };
            let mut fx = BenchFixture::new(GroupParams::standard_2048(), 1);
            for w in workloads {
                let mut s = BenchScenario::new(w, repetitions);
                s.output = Some(out.clone());
                let r = bench_run(&s, &mut fx).map_err(Failure::error)?;
                println!(
                    "{:<22} client R2 {:.4}  server R2 {:.4}",
                    r.name, r.client_r2, r.server_r2
                );
            }
            if compare {
                let rc = request_cost(&mut fx, repetitions);
                println!(
                    "ACT {:.3} ms ({} trapdoor), REQ {:.3} ms ({} trapdoors), ratio {:.2}",
                    rc.act_ms,
                    rc.act_trapdoors,
                    rc.req_ms,
                    rc.req_trapdoors,
                    rc.time_ratio()
                );
                let fc = flat_vs_rbac(&mut fx, 50, 10, repetitions);
                println!(
                    "access decision median: RBAC {:.3} ms, flat {:.3} ms",
                    fc.rbac_median_ms, fc.flat_median_ms
                );
            }
            Ok(EXIT_OK)
        }
    }
}

fn install(target: &Target, server: ServerKeySet) -> Result<(), Failure> {
    let mut backend = Backend::open(target)?;
    match &mut backend {
        Backend::Local { engine, .. } => engine.install_keyset(server)?,
        remote => {
            remote.call(Op::InstallKeyset, &OPERATOR.into(), "", &server)?;
        }
    }
    backend.save()
}

