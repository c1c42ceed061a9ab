//! Runs every scaling sweep and writes CSV plus gnuplot scripts.
//!
//! cargo run --release --example bench_scaling -- [out-dir] [repetitions]

use sealed_rbac::bench::{bench_run, BenchFixture, BenchScenario, Workload};
use sealed_rbac::group::GroupParams;

fn main() {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "bench-out".into());
    let reps = args.next().and_then(|r| r.parse().ok()).unwrap_or(7);
    let mut fx = BenchFixture::new(GroupParams::standard_2048(), 2024);
    println!("{:<24} {:>10} {:>10} {:>9} {:>9}", "workload", "client R2", "server R2", "mono(c)", "mono(s)");
    for w in Workload::ALL {
        let mut s = BenchScenario::new(w, reps);
        s.output = Some(out.clone().into());
        let r = bench_run(&s, &mut fx).expect("valid scenario");
        println!(
            "{:<24} {:>10.4} {:>10.4} {:>9} {:>9}",
            r.name, r.client_r2, r.server_r2, r.client_monotone, r.server_monotone
        );
    }
    println!("wrote CSV and .gp files to {out}");
}
