//! Access-decision latency: 50 roles x 10 permissions against 500 flat rules.

use sealed_rbac::bench::{flat_vs_rbac, request_cost, BenchFixture};
use sealed_rbac::group::GroupParams;

fn main() {
    let mut fx = BenchFixture::new(GroupParams::standard_2048(), 13);
    let cost = request_cost(&mut fx, 21);
    println!(
        "ACT {:.2} ms ({} trapdoor), REQ {:.2} ms ({} trapdoors), ratio {:.2}",
        cost.act_ms,
        cost.act_trapdoors,
        cost.req_ms,
        cost.req_trapdoors,
        cost.time_ratio()
    );
    let cmp = flat_vs_rbac(&mut fx, 50, 10, 5);
    println!("rbac median {:.1} ms, flat median {:.1} ms", cmp.rbac_median_ms, cmp.flat_median_ms);
}
