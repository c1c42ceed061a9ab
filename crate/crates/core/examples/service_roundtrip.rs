//! Talk to the service over TCP: deploy, send attributes, activate.

use std::sync::Arc;

use rand::thread_rng;
use sealed_rbac::client::{encrypt_role_assignment, make_activation_request, AttributeBatch, Tkma};
use sealed_rbac::engine::Engine;
use sealed_rbac::group::GroupParams;
use sealed_rbac::ids::UserId;
use sealed_rbac::policy::{ward_hours_condition, AttributeAssertion, RoleAssignmentPolicy};
use sealed_rbac::service::{spawn_server, Op, Service, ServiceClient, ServiceConfig, WireEnvelope};

fn main() {
    let mut rng = thread_rng();
    let mut tkma = Tkma::with_group(GroupParams::standard_2048(), &mut rng);
    let params = tkma.params.clone();
    let service = Arc::new(Service::new(Engine::new(params.clone()), ServiceConfig::default()));
    let server = spawn_server(service, "127.0.0.1:0").unwrap();
    let mut client = ServiceClient::connect(server.local_addr()).unwrap();
    println!("listening on {}", server.local_addr());

    let mut keys = Vec::new();
    for name in ["admin", "bob", "pip"] {
        let (c, s) = tkma.enroll(&UserId::new(name), &mut rng);
        let r = client.call(&WireEnvelope::new(Op::InstallKeyset, "operator", "", &s)).unwrap();
        println!("install {name}: {}", r.status);
        keys.push(c);
    }
    let (admin, bob, pip) = (&keys[0], &keys[1], &keys[2]);

    let ra = RoleAssignmentPolicy {
        requester: "bob".into(),
        roles: vec!["Cardiologist".into()],
        condition: Some(ward_hours_condition()),
    };
    let bundle = encrypt_role_assignment(&ra, admin, &params, &mut rng).unwrap();
    let r = client.call(&WireEnvelope::new(Op::DeployPolicy, "admin", "", &bundle)).unwrap();
    println!("deploy: {} {}", r.status, r.body);

    let attrs = [
        AttributeAssertion::text("Location", "Cardiology-ward"),
        AttributeAssertion::number("AT", 14, 5),
    ];
    let batch = AttributeBatch::collect("req-1", &attrs, pip, &params, &mut rng).unwrap();
    client.call(&WireEnvelope::new(Op::Attributes, "pip", "req-1", &batch)).unwrap();
    let act = make_activation_request(bob, "Cardiologist", &params, &mut rng).unwrap();
    let r = client.call(&WireEnvelope::new(Op::Activate, "bob", "req-1", &act)).unwrap();
    println!("activate: {:?}", r.decision());
    server.shutdown();
}
