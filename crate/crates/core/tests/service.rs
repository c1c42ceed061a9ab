mod common;

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use common::*;
use sealed_rbac::client::{make_access_request, make_activation_request, AttributeBatch};
use sealed_rbac::engine::{Decision, DenyReason, Engine};
use sealed_rbac::ids::UserId;
use sealed_rbac::service::{
    spawn_server, Op, RevokeBody, Service, ServiceClient, ServiceConfig, WireEnvelope, WireResponse,
};
use sealed_rbac::snapshot::Snapshot;

fn service_for(enc: &Encrypted, timeout: Duration) -> Arc<Service> {
    let engine = Engine::from_state(enc.params.clone(), enc.engine.export_state());
    Arc::new(Service::new(
        engine,
        ServiceConfig {
            attribute_timeout: timeout,
            ..ServiceConfig::default()
        },
    ))
}

fn send_batch(client: &mut ServiceClient, enc: &mut Encrypted, attrs: &Attrs, cid: &str) {
    let batch = AttributeBatch::collect(cid, &assertions(attrs), &enc.pip, &enc.params, &mut enc.rng).unwrap();
    let r = client
        .call(&WireEnvelope::new(Op::Attributes, "pip", cid, &batch))
        .unwrap();
    assert_eq!(r.status, 200, "{:?}", r.body);
}

#[test]
fn wire_decisions_match_in_process_decisions() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let group = test_group(21);
    for i in 0..15u64 {
        let sc = random_scenario(&mut rng);
        let mut enc = Encrypted::new(group.clone(), 300 + i);
        enc.deploy(&sc);
        let service = service_for(&enc, Duration::from_millis(50));
        let server = spawn_server(service.clone(), "127.0.0.1:0").unwrap();
        let mut client = ServiceClient::connect(server.local_addr()).unwrap();
        let mut oracle = Oracle::new(&sc);
        for (n, step) in sc.steps.iter().enumerate() {
            let want = oracle.step(step);
            let local = enc.step(step).unwrap();
            assert_eq!(local, want, "scenario {i} step {n}");
            let cid = format!("s{i}-{n}");
            let p = enc.params.clone();
            let env = match step {
                Step::Activate { role, attrs } => {
                    if let Some(a) = attrs {
                        send_batch(&mut client, &mut enc, a, &cid);
                    }
                    let req = make_activation_request(&enc.requester, role, &p, &mut enc.rng).unwrap();
                    WireEnvelope::new(Op::Activate, REQUESTER, cid.as_str(), &req)
                }
                Step::Access { role, action, target, attrs } => {
                    if let Some(a) = attrs {
                        send_batch(&mut client, &mut enc, a, &cid);
                    }
                    let req = make_access_request(&enc.requester, role, action, target, &p, &mut enc.rng).unwrap();
                    WireEnvelope::new(Op::Access, REQUESTER, cid.as_str(), &req)
                }
            };
            let r = client.call(&env).unwrap();
            assert_eq!(r.status, 200, "{:?}", r.body);
            assert_eq!(r.decision(), Some(want), "scenario {i} step {n} over the wire");
        }
        server.shutdown();
    }
}

/// One requester assigned `Cardiologist` under the ward/hours condition.
fn ward_world(seed: u64) -> (Encrypted, Scenario) {
    let sc = Scenario {
        roles: vec!["Cardiologist".into()],
        assigned: vec!["Cardiologist".into()],
        assignment_cond: Some(Cond::and(vec![
            Cond::leaf(Atom::Location("ward-a".into())),
            Cond::leaf(Atom::Time(sealed_rbac::policy::CompareOp::Gt, 9)),
            Cond::leaf(Atom::Time(sealed_rbac::policy::CompareOp::Lt, 17)),
        ])),
        permissions: vec![PermEntry {
            role: "Cardiologist".into(),
            perms: vec![("read".into(), "report".into())],
            cond: None,
        }],
        hierarchy_nodes: vec![],
        hierarchy_edges: vec![],
        steps: vec![],
    };
    let mut enc = Encrypted::new(test_group(seed), seed);
    enc.deploy(&sc);
    (enc, sc)
}

#[test]
fn missing_attributes_time_out_as_unresolved() {
    let (mut enc, _) = ward_world(22);
    let service = service_for(&enc, Duration::from_millis(200));
    let p = enc.params.clone();
    let req = make_activation_request(&enc.requester, "Cardiologist", &p, &mut enc.rng).unwrap();
    let start = Instant::now();
    let r = service.handle(&WireEnvelope::new(Op::Activate, REQUESTER, "nobody-answers", &req));
    assert!(start.elapsed() >= Duration::from_millis(200));
    assert_eq!(r.decision(), Some(Decision::Deny(DenyReason::ConditionUnresolved)));
}

#[test]
fn late_attributes_are_picked_up_while_waiting() {
    let (mut enc, _) = ward_world(23);
    let service = service_for(&enc, Duration::from_secs(5));
    let server = spawn_server(service.clone(), "127.0.0.1:0").unwrap();
    let addr = server.local_addr();
    let batch = AttributeBatch::collect(
        "late",
        &assertions(&Attrs {
            location: Some("ward-a".into()),
            time: Some(12),
        }),
        &enc.pip,
        &enc.params,
        &mut enc.rng,
    )
    .unwrap();
    let pip = thread::spawn(move || {
        thread::sleep(Duration::from_millis(150));
        let mut c = ServiceClient::connect(addr).unwrap();
        c.call(&WireEnvelope::new(Op::Attributes, "pip", "late", &batch)).unwrap()
    });
    let p = enc.params.clone();
    let req = make_activation_request(&enc.requester, "Cardiologist", &p, &mut enc.rng).unwrap();
    let mut client = ServiceClient::connect(addr).unwrap();
    let r = client
        .call(&WireEnvelope::new(Op::Activate, REQUESTER, "late", &req))
        .unwrap();
    assert_eq!(pip.join().unwrap().status, 200);
    assert_eq!(r.decision(), Some(Decision::Permit));
    assert!(service.mailbox().is_empty());
}

#[test]
fn pip_callback_is_consulted() {
    let (mut enc, _) = ward_world(24);
    let batch = AttributeBatch::collect(
        "cb",
        &assertions(&Attrs {
            location: Some("ward-a".into()),
            time: Some(20),
        }),
        &enc.pip,
        &enc.params,
        &mut enc.rng,
    )
    .unwrap();
    let engine = Engine::from_state(enc.params.clone(), enc.engine.export_state());
    let service = Service::new(engine, ServiceConfig::default())
        .with_pip(move |cid: &str| (cid == "cb").then(|| batch.clone()));
    let p = enc.params.clone();
    let req = make_activation_request(&enc.requester, "Cardiologist", &p, &mut enc.rng).unwrap();
    let r = service.handle(&WireEnvelope::new(Op::Activate, REQUESTER, "cb", &req));
    assert_eq!(r.decision(), Some(Decision::Deny(DenyReason::ConditionFalse)));
}

#[test]
fn principal_must_match_the_request() {
    let (mut enc, _) = ward_world(25);
    let service = service_for(&enc, Duration::from_millis(10));
    let p = enc.params.clone();
    let req = make_activation_request(&enc.requester, "Cardiologist", &p, &mut enc.rng).unwrap();
    let r = service.handle(&WireEnvelope::new(Op::Activate, "admin", "x", &req));
    assert_eq!(r.status, 403);
    assert!(r.decision().is_none());
}

#[test]
fn revoke_then_requests_fail_over_the_wire() {
    let (mut enc, _) = ward_world(26);
    let service = service_for(&enc, Duration::from_millis(10));
    let server = spawn_server(service.clone(), "127.0.0.1:0").unwrap();
    let mut client = ServiceClient::connect(server.local_addr()).unwrap();
    let r = client
        .call(&WireEnvelope::new(
            Op::Revoke,
            "operator",
            "",
            &RevokeBody {
                user_id: UserId::new(REQUESTER),
            },
        ))
        .unwrap();
    assert_eq!(r.body, json!({ "removed": true }));
    let p = enc.params.clone();
    let req = make_access_request(&enc.requester, "Cardiologist", "read", "report", &p, &mut enc.rng).unwrap();
    let r = client
        .call(&WireEnvelope::new(Op::Access, REQUESTER, "", &req))
        .unwrap();
    assert_eq!(r.status, 403);
    assert!(r.body["error"].as_str().unwrap().contains(REQUESTER));
}

#[test]
fn snapshot_and_restore_over_the_wire() {
    let (mut enc, _) = ward_world(27);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.json");
    let engine = Engine::from_state(enc.params.clone(), enc.engine.export_state());
    let service = Arc::new(Service::new(
        engine,
        ServiceConfig {
            snapshot_path: Some(path.clone()),
            attribute_timeout: Duration::from_millis(10),
            ..ServiceConfig::default()
        },
    ));
    let call = |op: Op, body: &serde_json::Value| -> WireResponse {
        service.handle(&WireEnvelope::new(op, "operator", "", body))
    };
    let taken = call(Op::Snapshot, &json!(null));
    assert_eq!(taken.status, 200);
    let snap: Snapshot = serde_json::from_value(taken.body.clone()).unwrap();

    // Mutate, autosave, then roll back.
    let batch = AttributeBatch::collect(
        "ok",
        &assertions(&Attrs {
            location: Some("ward-a".into()),
            time: Some(10),
        }),
        &enc.pip,
        &enc.params,
        &mut enc.rng,
    )
    .unwrap();
    assert_eq!(service.handle(&WireEnvelope::new(Op::Attributes, "pip", "ok", &batch)).status, 200);
    let p = enc.params.clone();
    let req = make_activation_request(&enc.requester, "Cardiologist", &p, &mut enc.rng).unwrap();
    let r = service.handle(&WireEnvelope::new(Op::Activate, REQUESTER, "ok", &req));
    assert_eq!(r.decision(), Some(Decision::Permit));
    let saved = Snapshot::load(&path).unwrap();
    assert_ne!(saved.digest, snap.digest);

    let r = call(Op::Restore, &taken.body);
    assert_eq!(r.status, 200);
    assert_eq!(r.body["digest"], json!(snap.digest));
    assert_eq!(Snapshot::capture(service.engine()).digest, snap.digest);
    assert_eq!(Snapshot::load(&path).unwrap().digest, snap.digest);

    let mut other = snap.clone();
    other.params = Encrypted::new(test_group(99), 1).params;
    let other = Snapshot::from_state(other.params, other.state);
    let r = call(Op::Restore, &serde_json::to_value(&other).unwrap());
    assert_eq!(r.status, 400);
}

#[test]
fn wrong_wire_version_is_rejected() {
    let (enc, _) = ward_world(28);
    let service = service_for(&enc, Duration::from_millis(10));
    let mut env = WireEnvelope::new(Op::Snapshot, "operator", "", &json!(null));
    env.version = 2;
    assert_eq!(service.handle(&env).status, 400);
    assert_eq!(service.handle_line("not json").status, 400);
}
