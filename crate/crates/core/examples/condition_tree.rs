//! How a numeric comparison turns into bit tokens, and how a condition
//! evaluates in plaintext and encrypted form.

use rand::thread_rng;
use sealed_rbac::client::{encrypt_condition, pip_collect, Tkma};
use sealed_rbac::crypto::server_reencrypt;
use sealed_rbac::engine::Engine;
use sealed_rbac::group::GroupParams;
use sealed_rbac::ids::UserId;
use sealed_rbac::policy::{
    evaluate_plaintext, expand_numeric_comparison, ward_hours_condition, AttributeAssertion, CompareOp,
};

fn main() {
    let t = expand_numeric_comparison("AT", CompareOp::Gt, 9, 5).unwrap();
    println!("AT > 9 over 5 bits:\n{}", serde_json::to_string_pretty(&t).unwrap());

    let cond = ward_hours_condition();
    let mut rng = thread_rng();
    let mut tkma = Tkma::with_group(GroupParams::standard_2048(), &mut rng);
    let params = tkma.params.clone();
    let engine = Engine::new(params.clone());
    let (admin, admin_s) = tkma.enroll(&UserId::new("admin"), &mut rng);
    let (pip, pip_s) = tkma.enroll(&UserId::new("pip"), &mut rng);
    engine.install_keyset(pip_s).unwrap();
    let stored = encrypt_condition(&cond, &admin, &params, &mut rng)
        .unwrap()
        .try_map_leaves(&mut |c| server_reencrypt(&params, c, &admin_s))
        .unwrap();

    for hour in [8, 10, 16, 17] {
        let attrs = [
            AttributeAssertion::text("Location", "Cardiology-ward"),
            AttributeAssertion::number("AT", hour, 5),
        ];
        let plain = evaluate_plaintext(&cond, &attrs).unwrap();
        let tds = pip_collect(&attrs, &pip, &params, &mut rng).unwrap();
        let enc = engine.evaluate_condition(&tds, &stored, &UserId::new("pip")).unwrap();
        println!("hour {hour:>2}: plaintext {plain}, encrypted {enc}");
    }
}
