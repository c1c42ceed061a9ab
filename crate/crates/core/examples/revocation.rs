//! Deleting a server half locks a user out without touching the policies.

use rand::thread_rng;
use sealed_rbac::client::{encrypt_role_assignment, make_activation_request, Tkma};
use sealed_rbac::engine::{Engine, NoContext};
use sealed_rbac::group::GroupParams;
use sealed_rbac::ids::UserId;
use sealed_rbac::policy::RoleAssignmentPolicy;
use sealed_rbac::snapshot::policy_digest;

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
    let ra = RoleAssignmentPolicy {
        requester: "bob".into(),
        roles: vec!["Nurse".into()],
        condition: None,
    };
    engine.reencrypt_bundle(&encrypt_role_assignment(&ra, &admin, &params, &mut rng).unwrap()).unwrap();

    let act = make_activation_request(&bob, "Nurse", &params, &mut rng).unwrap();
    println!("before: {:?}", engine.activate_role(&act, &NoContext));
    let digest = policy_digest(&engine.policy_store());
    engine.revoke_user(&UserId::new("bob"));
    println!("after:  {:?}", engine.activate_role(&act, &NoContext));
    println!("policies untouched: {}", digest == policy_digest(&engine.policy_store()));
}
