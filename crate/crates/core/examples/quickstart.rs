//! The hospital walk-through: enroll, deploy, activate, access.

use rand::thread_rng;
use sealed_rbac::client::{
    encrypt_hierarchy, encrypt_permission_assignment, encrypt_role_assignment, make_access_request,
    make_activation_request, AttributeBatch, Tkma,
};
use sealed_rbac::engine::{Engine, NoContext};
use sealed_rbac::group::GroupParams;
use sealed_rbac::ids::UserId;
use sealed_rbac::policy::{
    hospital_hierarchy, ward_hours_condition, AttributeAssertion, Permission, PermissionAssignmentPolicy,
    RoleAssignmentPolicy,
};

fn main() {
    let mut rng = thread_rng();
    let mut tkma = Tkma::with_group(GroupParams::standard_2048(), &mut rng);
    let params = tkma.params.clone();
    let engine = Engine::new(params.clone());

    let mut enroll = |name: &str| {
        let (client, server) = tkma.enroll(&UserId::new(name), &mut rng);
        engine.install_keyset(server).unwrap();
        client
    };
    let admin = enroll("admin");
    let bob = enroll("bob");
    let pip = enroll("pip");

    let ra = RoleAssignmentPolicy {
        requester: "bob".into(),
        roles: vec!["Cardiologist".into()],
        condition: Some(ward_hours_condition()),
    };
    let pa = PermissionAssignmentPolicy {
        role: "Intern".into(),
        permissions: vec![Permission::new("read", "cardiology-report")],
        condition: None,
    };
    engine.reencrypt_bundle(&encrypt_role_assignment(&ra, &admin, &params, &mut rng).unwrap()).unwrap();
    engine.reencrypt_bundle(&encrypt_permission_assignment(&pa, &admin, &params, &mut rng).unwrap()).unwrap();
    engine.reencrypt_bundle(&encrypt_hierarchy(&hospital_hierarchy(), &admin, &params, &mut rng).unwrap()).unwrap();

    let act = make_activation_request(&bob, "Cardiologist", &params, &mut rng).unwrap();
    println!("activate without attributes: {:?}", engine.activate_role(&act, &NoContext).unwrap());

    let on_shift = [
        AttributeAssertion::text("Location", "Cardiology-ward"),
        AttributeAssertion::number("AT", 10, 5),
    ];
    let batch = AttributeBatch::collect("shift", &on_shift, &pip, &params, &mut rng).unwrap();
    println!("activate on shift: {:?}", engine.activate_role(&act, &batch).unwrap());

    // Cardiologist inherits Intern's permission through the hierarchy.
    let req = make_access_request(&bob, "Cardiologist", "read", "cardiology-report", &params, &mut rng).unwrap();
    println!("read report: {:?}", engine.authorize_access(&req, &NoContext).unwrap());
    let req = make_access_request(&bob, "Cardiologist", "delete", "cardiology-report", &params, &mut rng).unwrap();
    println!("delete report: {:?}", engine.authorize_access(&req, &NoContext).unwrap());
}
