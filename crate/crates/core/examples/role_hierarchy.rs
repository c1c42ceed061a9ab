//! Inherited permissions through an encrypted role hierarchy.

use rand::thread_rng;
use sealed_rbac::client::{
    encrypt_hierarchy, encrypt_permission_assignment, encrypt_role_assignment, make_access_request,
    make_activation_request, Tkma,
};
use sealed_rbac::engine::{Engine, NoContext};
use sealed_rbac::group::GroupParams;
use sealed_rbac::ids::UserId;
use sealed_rbac::policy::{hospital_hierarchy, Permission, PermissionAssignmentPolicy, RoleAssignmentPolicy};

fn main() {
    let mut rng = thread_rng();
    let mut tkma = Tkma::with_group(GroupParams::standard_2048(), &mut rng);
    let params = tkma.params.clone();
    let engine = Engine::new(params.clone());
    let mut enroll = |name: &str| {
        let (c, s) = tkma.enroll(&UserId::new(name), &mut rng);
        engine.install_keyset(s).unwrap();
        c
    };
    let admin = enroll("admin");
    let bob = enroll("bob");

    let graph = hospital_hierarchy();
    for e in &graph.extends {
        println!("{} extends {}", e.role, e.base);
    }
    engine.reencrypt_bundle(&encrypt_hierarchy(&graph, &admin, &params, &mut rng).unwrap()).unwrap();
    let grants = [("Intern", "read", "chart"), ("Doctor", "prescribe", "drug"), ("Cardiologist Assistant", "schedule", "echo")];
    for (role, action, target) in grants {
        let p = PermissionAssignmentPolicy {
            role: role.into(),
            permissions: vec![Permission::new(action, target)],
            condition: None,
        };
        engine.reencrypt_bundle(&encrypt_permission_assignment(&p, &admin, &params, &mut rng).unwrap()).unwrap();
    }
    let ra = RoleAssignmentPolicy {
        requester: "bob".into(),
        roles: vec!["Cardiologist".into(), "Doctor".into()],
        condition: None,
    };
    engine.reencrypt_bundle(&encrypt_role_assignment(&ra, &admin, &params, &mut rng).unwrap()).unwrap();

    for role in ["Cardiologist", "Doctor"] {
        let act = make_activation_request(&bob, role, &params, &mut rng).unwrap();
        engine.activate_role(&act, &NoContext).unwrap();
        for (_, action, target) in grants {
            let req = make_access_request(&bob, role, action, target, &params, &mut rng).unwrap();
            let d = engine.authorize_access(&req, &NoContext).unwrap();
            println!("{role:<13} {action:>9} {target:<6} {d:?}");
        }
    }
}
