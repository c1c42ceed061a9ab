//! Runs every acceptance criterion in sequence and prints one line each.
//! Sequential on purpose: several criteria time things.

mod common;

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use sealed_rbac::bench::{bench_run, flat_vs_rbac, request_cost, BenchFixture, BenchScenario, Workload};
use sealed_rbac::client::{
    encrypt_condition, encrypt_role_assignment, make_access_request, make_activation_request, pip_collect, Tkma,
};
use sealed_rbac::crypto::{client_encrypt, client_trapdoor, match_prepared, server_reencrypt, server_trapdoor};
use sealed_rbac::engine::{evaluate_tree, Decision, DecisionTree, Engine, NoContext};
use sealed_rbac::error::EngineError;
use sealed_rbac::group::GroupParams;
use sealed_rbac::ids::UserId;
use sealed_rbac::metrics;
use sealed_rbac::policy::{
    expand_numeric_comparison, string_token, AttributeAssertion, CompareOp, ConditionTree, Gate,
    PermissionAssignmentPolicy, Permission, RoleAssignmentPolicy,
};
use sealed_rbac::snapshot::{policy_digest, store_digest, Snapshot};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn match_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tkma = Tkma::with_group(GroupParams::standard_2048(), &mut rng);
    let p = tkma.params.clone();
    let (a, a_s) = tkma.enroll(&UserId::new("user-a"), &mut rng);
    let (b, b_s) = tkma.enroll(&UserId::new("user-b"), &mut rng);
    let vocab: Vec<String> = (0..64).map(|i| format!("element-{i}")).collect();
    let cts: Vec<_> = vocab
        .iter()
        .map(|e| server_reencrypt(&p, &client_encrypt(&p, &a, e, &mut rng).unwrap(), &a_s).unwrap())
        .collect();
    let tds: Vec<_> = vocab
        .iter()
        .map(|e| {
            server_trapdoor(&p, &client_trapdoor(&p, &b, e, &mut rng).unwrap(), &b_s)
                .unwrap()
                .prepare(&p)
        })
        .collect();
    let mut errors = 0;
    for (i, ct) in cts.iter().enumerate() {
        for (j, td) in tds.iter().enumerate() {
            if match_prepared(&p, ct, td) != (i == j) {
                errors += 1;
            }
        }
    }
    let took = start.elapsed();
    ensure(errors == 0, || format!("{errors} wrong outcomes of 4096"))?;
    ensure(took < Duration::from_secs(120), || format!("took {took:?}"))?;
    Ok(format!("4096 pairs, 0 errors, {:.1}s", took.as_secs_f64()))
}

fn numeric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tkma = Tkma::with_group(test_group(2), &mut rng);
    let p = tkma.params.clone();
    let engine = Engine::new(p.clone());
    let (admin, admin_s) = tkma.enroll(&UserId::new("admin"), &mut rng);
    let (pip, pip_s) = tkma.enroll(&UserId::new("pip"), &mut rng);
    engine.install_keyset(admin_s.clone()).unwrap();
    engine.install_keyset(pip_s.clone()).unwrap();
    let (mut cases, mut mismatches) = (0u64, 0u64);
    for width in 2..=8u32 {
        let max = 1u64 << width;
        // One completed batch per value, reused across every condition.
        let batches: Vec<_> = (0..max)
            .map(|v| {
                pip_collect(&[AttributeAssertion::number("n", v, width)], &pip, &p, &mut rng)
                    .unwrap()
                    .iter()
                    .map(|td| server_trapdoor(&p, td, &pip_s).unwrap().prepare(&p))
                    .collect::<Vec<_>>()
            })
            .collect();
        for op in CompareOp::ALL {
            for t in 0..max {
                let tree = expand_numeric_comparison("n", op, t, width).unwrap();
                let enc = encrypt_condition(&tree, &admin, &p, &mut rng)
                    .unwrap()
                    .try_map_leaves(&mut |c| server_reencrypt(&p, c, &admin_s))
                    .unwrap();
                for (v, batch) in batches.iter().enumerate() {
                    let v = v as u64;
                    let got = engine.evaluate_prepared(batch, &enc).unwrap();
                    let want = match op {
                        CompareOp::Lt => v < t,
                        CompareOp::Gt => v > t,
                        CompareOp::Eq => v == t,
                        CompareOp::Le => v <= t,
                        CompareOp::Ge => v >= t,
                    };
                    cases += 1;
                    if got != want {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches in {cases} cases"))?;
    Ok(format!("{cases} cases, 0 mismatches"))
}

fn decision_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let group = test_group(3);
    let mut steps = 0;
    for i in 0..1000u64 {
        let sc = random_scenario(&mut rng);
        steps += compare_scenario(&sc, group.clone(), 1000 + i).map_err(|e| format!("scenario {i}: {e}"))?;
    }
    let mut prod_steps = 0;
    for i in 0..3u64 {
        let sc = random_scenario(&mut rng);
        prod_steps += compare_scenario(&sc, GroupParams::standard_2048(), 5000 + i)
            .map_err(|e| format!("2048-bit scenario {i}: {e}"))?;
    }
    Ok(format!(
        "1000 scenarios ({steps} decisions) at 256 bits, 3 scenarios ({prod_steps} decisions) at 2048 bits, all agree"
    ))
}

fn revocation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut tkma = Tkma::with_group(test_group(4), &mut rng);
    let p = tkma.params.clone();
    let engine = Engine::new(p.clone());
    let (admin, admin_s) = tkma.enroll(&UserId::new("admin"), &mut rng);
    engine.install_keyset(admin_s).unwrap();
    let mut users = Vec::new();
    for u in 0..4 {
        let id = format!("user-{u}");
        let (c, s) = tkma.enroll(&UserId::new(&id), &mut rng);
        engine.install_keyset(s).unwrap();
        let ra = RoleAssignmentPolicy {
            requester: UserId::new(&id),
            roles: vec![format!("r{u}"), "shared".into()],
            condition: None,
        };
        engine
            .reencrypt_bundle(&encrypt_role_assignment(&ra, &admin, &p, &mut rng).unwrap())
            .unwrap();
        users.push(c);
    }
    for role in ["r0", "r1", "r2", "r3", "shared"] {
        let pa = PermissionAssignmentPolicy {
            role: role.into(),
            permissions: vec![Permission::new("read", role), Permission::new("read", "common")],
            condition: None,
        };
        engine
            .reencrypt_bundle(&sealed_rbac::client::encrypt_permission_assignment(&pa, &admin, &p, &mut rng).unwrap())
            .unwrap();
    }
    // A fixed request sequence per user, replayed against a revoked and an
    // unrevoked copy of the same store.
    enum Req {
        Act(sealed_rbac::client::ActivationRequest),
        Acc(sealed_rbac::client::AccessRequest),
    }
    let mut reqs = Vec::new();
    for (u, c) in users.iter().enumerate() {
        for role in [format!("r{u}"), "shared".into(), "r9".into()] {
            reqs.push((u, Req::Act(make_activation_request(c, &role, &p, &mut rng).unwrap())));
            for target in [role.as_str(), "common", "other"] {
                reqs.push((u, Req::Acc(make_access_request(c, &role, "read", target, &p, &mut rng).unwrap())));
            }
        }
    }
    let control = Engine::from_state(p.clone(), engine.export_state());
    let before = policy_digest(&engine.policy_store());
    let revoked = UserId::new("user-1");
    ensure(engine.revoke_user(&revoked), || "revoke_user found no key".into())?;
    ensure(policy_digest(&engine.policy_store()) == before, || "policy digest changed".into())?;
    let run = |e: &Engine, r: &Req| match r {
        Req::Act(a) => e.activate_role(a, &NoContext),
        Req::Acc(a) => e.authorize_access(a, &NoContext),
    };
    let (mut denied, mut compared, mut permits) = (0, 0, 0);
    for (u, r) in &reqs {
        let got = run(&engine, r);
        let want = run(&control, r);
        if *u == 1 {
            ensure(matches!(got, Err(EngineError::KeyNotFound(ref id)) if *id == revoked), || {
                format!("revoked user got {got:?}")
            })?;
            denied += 1;
        } else {
            ensure(got == want, || format!("user-{u}: {got:?} after revocation, {want:?} without"))?;
            if got == Ok(Decision::Permit) {
                permits += 1;
            }
            compared += 1;
        }
    }
    ensure(policy_digest(&engine.policy_store()) == before, || "policy digest changed".into())?;
    Ok(format!(
        "{denied}/{denied} revoked requests key-not-found, {compared} others unchanged ({permits} permits), digest stable"
    ))
}

fn probabilistic_encryption() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tkma = Tkma::with_group(test_group(5), &mut rng);
    let p = tkma.params.clone();
    let (c, s) = tkma.enroll(&UserId::new("admin"), &mut rng);
    let element = "role:Cardiologist";
    let mut seen = HashSet::new();
    let mut blobs = Vec::new();
    for _ in 0..1000 {
        let ct = client_encrypt(&p, &c, element, &mut rng).unwrap();
        seen.insert(serde_json::to_string(&ct.c1_hat).unwrap());
        let sct = server_reencrypt(&p, &ct, &s).unwrap();
        let td = client_trapdoor(&p, &c, element, &mut rng).unwrap();
        let std = server_trapdoor(&p, &td, &s).unwrap();
        blobs.push(serde_json::to_string(&(ct, sct, td, std)).unwrap());
    }
    ensure(seen.len() == 1000, || format!("{} distinct c1 values", seen.len()))?;
    let ra = RoleAssignmentPolicy {
        requester: "someone".into(),
        roles: vec!["Cardiologist".into(), "Nurse".into()],
        condition: Some(sealed_rbac::policy::ward_hours_condition()),
    };
    blobs.push(serde_json::to_string(&encrypt_role_assignment(&ra, &c, &p, &mut rng).unwrap()).unwrap());
    let needles = ["Cardiologist", "cardiologist", "Nurse", "role:", "attr:", "Location", "ward", "AT#"];
    for b in &blobs {
        if let Some(n) = needles.iter().find(|n| b.contains(*n)) {
            return Err(format!("serialized form contains {n:?}"));
        }
    }
    Ok(format!("1000 distinct c1 values, {} serialized objects free of plaintext", blobs.len()))
}

fn scaling() -> Outcome {
    let mut fx = BenchFixture::new(GroupParams::standard_2048(), 6);
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for w in Workload::ALL {
        let report = bench_run(&BenchScenario::new(w, 5), &mut fx)?;
        let mut check = |side: &str, r2: f64| {
            lines.push(format!("{} {side} {r2:.3}", w.name()));
            if r2 < 0.95 {
                failures.push(format!("{} {side} R2 {r2:.3}", w.name()));
            }
        };
        if w.client_scales() {
            check("client", report.client_r2);
        }
        check("server", report.server_r2);
        for row in &report.rows {
            let n = row.parameter as u64;
            let want = match w {
                Workload::StringComparisons => Some(n),
                Workload::NumericComparisons => Some(4 * n),
                Workload::NumericBits => Some(n),
                _ => None,
            };
            if let Some(want) = want {
                if row.client_ops != want || row.server_ops != want {
                    failures.push(format!(
                        "{} at {n}: {}/{} ops, model {want}",
                        w.name(),
                        row.client_ops,
                        row.server_ops
                    ));
                }
            }
        }
    }
    // Mixed grid: m string equalities plus n comparisons over s bits.
    let p = fx.params.clone();
    let admin_s = fx.server_half(&fx.admin.user_id).clone();
    let mut grid = 0;
    for m in 0..=3u64 {
        for n in 0..=3u64 {
            for s in [2u32, 5, 8] {
                if m + n == 0 {
                    continue;
                }
                let mut kids: Vec<ConditionTree> =
                    (0..m).map(|i| ConditionTree::leaf(string_token(&format!("s{i}"), "v"))).collect();
                for j in 0..n {
                    kids.push(expand_numeric_comparison(&format!("x{j}"), CompareOp::Lt, (1 << s) - 1, s).unwrap());
                }
                let tree = ConditionTree::and(kids).flattened();
                let (enc, cops) = metrics::measure(|| encrypt_condition(&tree, &fx.admin, &p, &mut fx.rng).unwrap());
                let (_, sops) =
                    metrics::measure(|| enc.try_map_leaves(&mut |c| server_reencrypt(&p, c, &admin_s)).unwrap());
                let want = m + n * s as u64;
                if cops.client_encrypt != want || sops.server_reencrypt != want {
                    failures.push(format!(
                        "m={m} n={n} s={s}: {}/{} ops, model {want}",
                        cops.client_encrypt, sops.server_reencrypt
                    ));
                }
                grid += 1;
            }
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("all R2 >= 0.95 [{}]; counts exact incl. {grid}-point m+n*s grid", lines.join(", ")))
}

fn request_ratio() -> Outcome {
    let mut fx = BenchFixture::new(GroupParams::standard_2048(), 7);
    let cost = request_cost(&mut fx, 31);
    ensure(cost.act_trapdoors == 1 && cost.req_trapdoors == 3, || {
        format!("trapdoors ACT {} REQ {}", cost.act_trapdoors, cost.req_trapdoors)
    })?;
    let r = cost.time_ratio();
    ensure((2.1..=3.9).contains(&r), || format!("time ratio {r:.2}"))?;
    Ok(format!(
        "trapdoors 3:1, ACT {:.2} ms, REQ {:.2} ms, ratio {r:.2}",
        cost.act_ms, cost.req_ms
    ))
}

fn flat_comparison() -> Outcome {
    let mut fx = BenchFixture::new(GroupParams::standard_2048(), 8);
    let cmp = flat_vs_rbac(&mut fx, 50, 10, 5);
    ensure(cmp.rbac_median_ms < cmp.flat_median_ms, || {
        format!("rbac {:.1} ms, flat {:.1} ms", cmp.rbac_median_ms, cmp.flat_median_ms)
    })?;
    Ok(format!(
        "rbac median {:.1} ms < flat median {:.1} ms",
        cmp.rbac_median_ms, cmp.flat_median_ms
    ))
}

fn random_bool_tree(rng: &mut impl Rng, depth: usize) -> ConditionTree<bool> {
    if depth == 0 || rng.gen_bool(0.3) {
        return ConditionTree::leaf(rng.gen_bool(0.5));
    }
    let kids = (0..rng.gen_range(1..=4)).map(|_| random_bool_tree(rng, depth - 1)).collect();
    if rng.gen_bool(0.5) {
        ConditionTree::and(kids)
    } else {
        ConditionTree::or(kids)
    }
}

fn brute(t: &ConditionTree<bool>) -> bool {
    match t {
        ConditionTree::Leaf { leaf } => *leaf,
        ConditionTree::Node { gate: Gate::And, children } => {
            let mut all = true;
            for c in children {
                all &= brute(c);
            }
            all
        }
        ConditionTree::Node { children, .. } => {
            let mut any = false;
            for c in children {
                any |= brute(c);
            }
            any
        }
    }
}

fn tree_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = 0;
    let mut max_depth = 0;
    for _ in 0..10_000 {
        let t = random_bool_tree(&mut rng, 5);
        max_depth = max_depth.max(t.depth());
        let got = evaluate_tree(&mut DecisionTree::from_tree(&t)).map_err(|e| e.to_string())?;
        if got != brute(&t) {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches"))?;
    Ok(format!("10000 trees (max depth {max_depth}), 0 mismatches"))
}

fn snapshot_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let group = test_group(10);
    for i in 0..100u64 {
        let sc = random_scenario(&mut rng);
        let mut enc = Encrypted::new(group.clone(), 2000 + i);
        enc.deploy(&sc);
        for step in &sc.steps {
            enc.step(step).map_err(|e| e.to_string())?;
        }
        let snap = Snapshot::capture(&enc.engine);
        let bytes = snap.to_json();
        let restored = Snapshot::from_json(&bytes).map_err(|e| format!("store {i}: {e}"))?.into_engine();
        let again = Snapshot::capture(&restored);
        ensure(again.digest == snap.digest, || format!("store {i}: digest differs"))?;
        ensure(
            store_digest(restored.params(), &restored.export_state()) == snap.digest,
            || format!("store {i}: recomputed digest differs"),
        )?;
        ensure(again.to_json() == bytes, || format!("store {i}: bytes differ"))?;
    }
    Ok("100 stores restored with equal digests and identical bytes".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("match oracle", match_oracle),
        ("numeric comparison oracle", numeric_oracle),
        ("decision equivalence", decision_equivalence),
        ("revocation", revocation),
        ("probabilistic encryption", probabilistic_encryption),
        ("scaling trends", scaling),
        ("request cost ratio", request_ratio),
        ("rbac vs flat", flat_comparison),
        ("tree evaluator", tree_equivalence),
        ("snapshot round trip", snapshot_round_trip),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({secs:.1}s) {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({secs:.1}s) {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
