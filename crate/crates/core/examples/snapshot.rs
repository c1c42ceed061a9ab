//! Save a store to disk and load it back.

use rand::thread_rng;
use sealed_rbac::client::{encrypt_role_assignment, Tkma};
use sealed_rbac::engine::Engine;
use sealed_rbac::group::GroupParams;
use sealed_rbac::ids::UserId;
use sealed_rbac::policy::RoleAssignmentPolicy;
use sealed_rbac::snapshot::Snapshot;

fn main() {
    let mut rng = thread_rng();
    let mut tkma = Tkma::with_group(GroupParams::standard_2048(), &mut rng);
    let params = tkma.params.clone();
    let engine = Engine::new(params.clone());
    let (admin, admin_s) = tkma.enroll(&UserId::new("admin"), &mut rng);
    engine.install_keyset(admin_s).unwrap();
    let ra = RoleAssignmentPolicy {
        requester: "carol".into(),
        roles: vec!["Auditor".into()],
        condition: None,
    };
    engine.reencrypt_bundle(&encrypt_role_assignment(&ra, &admin, &params, &mut rng).unwrap()).unwrap();

    let path = std::env::temp_dir().join("sealed-rbac-example-store.json");
    let snap = Snapshot::capture(&engine);
    snap.save(&path).unwrap();
    let back = Snapshot::load(&path).unwrap();
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path).unwrap().len());
    println!("digest {}", snap.digest);
    println!("restored digest matches: {}", Snapshot::capture(&back.into_engine()).digest == snap.digest);
}
