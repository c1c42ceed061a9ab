//! The randomized decision differential at 2048-bit parameters. Slow, so
//! opt-in: `cargo test --test production -- --ignored`. Set
//! `SEALED_RBAC_PROD_SCENARIOS` to change the count (default 1000).

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{compare_scenario, random_scenario};
use sealed_rbac::group::GroupParams;

#[test]
#[ignore]
fn decisions_match_oracle_at_production_size() {
    let n: u64 = std::env::var("SEALED_RBAC_PROD_SCENARIOS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut decisions = 0;
    for i in 0..n {
        let sc = random_scenario(&mut rng);
        match compare_scenario(&sc, GroupParams::standard_2048(), 7000 + i) {
            Ok(k) => decisions += k,
            Err(e) => panic!("scenario {i}: {e}"),
        }
    }
    println!("{n} scenarios, {decisions} decisions, all agree");
}
