//! Scaling benchmarks for deployment, search and request generation, plus
//! the flat `<subject, action, target, condition>` baseline.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::client::{
    encrypt_condition_bundle, encrypt_hierarchy, encrypt_permission_assignment, encrypt_role_assignment,
    make_access_request, make_activation_request, pip_collect, AccessRequest, AttributeBatch, Tkma,
};
use crate::crypto::{
    client_encrypt, client_trapdoor, match_prepared, server_reencrypt, server_trapdoor, ClientKeySet, PreparedTrapdoor, PublicParams,
    ServerCiphertext, ServerKeySet,
};
use crate::engine::{evaluate_tree, Decision, DecisionTree, Deployed, Engine, NoContext};
use crate::error::EngineError;
use crate::group::GroupParams;
use crate::ids::UserId;
use crate::metrics::{self, OpCounts};
use crate::policy::{
    action_element, expand_numeric_comparison, string_token, target_element, ward_hours_condition,
    AttributeAssertion, CompareOp, ConditionTree, Permission, PermissionAssignmentPolicy, RoleAssignmentPolicy,
    RoleHierarchyGraph,
};

pub const MIN_REPETITIONS: usize = 5;

/// What one sweep point measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Workload {
    /// Deploy a role assignment of `n` roles.
    RoleAssignment,
    /// Deploy a permission assignment of `n` permissions.
    PermissionAssignment,
    /// Deploy a condition of `n` string equalities.
    StringComparisons,
    /// Deploy a condition of `n` four-bit `< 15` comparisons.
    NumericComparisons,
    /// Deploy one `< 2^s - 1` comparison over `s` bits.
    NumericBits,
    /// Deploy an `n`-node chain hierarchy.
    Hierarchy,
    /// Search an absent role in an `n`-role assignment. For the three search
    /// workloads the server time covers the matching loop only; completing
    /// the request trapdoor is a constant cost shared with every request.
    SearchRole,
    /// Search an absent permission among `n`.
    SearchPermission,
    /// Evaluate `n` four-bit comparisons against `n` numeric attributes.
    ConditionEvaluation,
    /// Look up an absent role in an `n`-node hierarchy.
    HierarchySearch,
}

impl Workload {
    pub const ALL: [Workload; 10] = [
        Workload::RoleAssignment,
        Workload::PermissionAssignment,
        Workload::StringComparisons,
        Workload::NumericComparisons,
        Workload::NumericBits,
        Workload::Hierarchy,
        Workload::SearchRole,
        Workload::SearchPermission,
        Workload::ConditionEvaluation,
        Workload::HierarchySearch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Workload::RoleAssignment => "role_assignment",
            Workload::PermissionAssignment => "permission_assignment",
            Workload::StringComparisons => "string_comparisons",
            Workload::NumericComparisons => "numeric_comparisons",
            Workload::NumericBits => "numeric_bits",
            Workload::Hierarchy => "hierarchy",
            Workload::SearchRole => "search_role",
            Workload::SearchPermission => "search_permission",
            Workload::ConditionEvaluation => "condition_evaluation",
            Workload::HierarchySearch => "hierarchy_search",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Workload::ALL.into_iter().find(|w| w.name() == name)
    }

    /// Parameter range used for the published scaling curves.
    pub fn default_sweep(self) -> Vec<u32> {
        match self {
            Workload::RoleAssignment
            | Workload::PermissionAssignment
            | Workload::SearchRole
            | Workload::SearchPermission => (1..=20).collect(),
            Workload::StringComparisons | Workload::NumericComparisons | Workload::ConditionEvaluation => {
                (1..=10).collect()
            }
            Workload::NumericBits => (2..=20).collect(),
            Workload::Hierarchy | Workload::HierarchySearch => (5..=25).collect(),
        }
    }

    /// Whether the client side of this workload grows with the parameter.
    /// Search workloads generate a constant-size request.
    pub fn client_scales(self) -> bool {
        !matches!(self, Workload::SearchRole | Workload::SearchPermission | Workload::HierarchySearch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchScenario {
    pub name: String,
    pub workload: Workload,
    pub sweep: Vec<u32>,
    pub repetitions: usize,
    pub output: Option<PathBuf>,
}

impl BenchScenario {
    pub fn new(workload: Workload, repetitions: usize) -> Self {
        BenchScenario {
            name: workload.name().to_owned(),
            workload,
            sweep: workload.default_sweep(),
            repetitions,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.sweep.is_empty() {
            return Err("empty sweep".into());
        }
        if self.repetitions < MIN_REPETITIONS {
            return Err(format!("need at least {MIN_REPETITIONS} repetitions"));
        }
        if self.workload == Workload::NumericBits && self.sweep.iter().any(|&s| !(2..=32).contains(&s)) {
            return Err("bit widths must lie in [2, 32]".into());
        }
        if self.sweep.contains(&0) {
            return Err("sweep values must be positive".into());
        }
        Ok(())
    }
}

/// Medians over the repetitions of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub parameter: u32,
    pub client_ms: f64,
    pub server_ms: f64,
    pub client_ops: u64,
    pub server_ops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub name: String,
    pub workload: Workload,
    pub rows: Vec<BenchRow>,
    pub client_r2: f64,
    pub server_r2: f64,
    pub client_monotone: bool,
    pub server_monotone: bool,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("parameter,client_ms,server_ms,client_ops,server_ops\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.4},{:.4},{},{}",
                r.parameter, r.client_ms, r.server_ms, r.client_ops, r.server_ops
            );
        }
        s
    }

    /// A gnuplot script plotting the CSV written next to it.
    pub fn gnuplot_script(&self, csv_name: &str) -> String {
        format!(
            "set datafile separator ','\n\
             set key autotitle columnhead\n\
             set title '{name}'\n\
             set xlabel 'parameter'\n\
             set ylabel 'ms'\n\
             set terminal pngcairo size 800,500\n\
             set output '{name}.png'\n\
             # client R^2 = {cr:.4}, server R^2 = {sr:.4}\n\
             plot '{csv}' using 1:2 with linespoints, '{csv}' using 1:3 with linespoints\n",
            name = self.name,
            csv = csv_name,
            cr = self.client_r2,
            sr = self.server_r2,
        )
    }

    /// Writes `<dir>/<name>.csv` and `<dir>/<name>.gp`.
    pub fn write(&self, dir: &Path) -> io::Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv_name = format!("{}.csv", self.name);
        let csv = dir.join(&csv_name);
        let gp = dir.join(format!("{}.gp", self.name));
        fs::write(&csv, self.to_csv())?;
        fs::write(&gp, self.gnuplot_script(&csv_name))?;
        Ok((csv, gp))
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Coefficient of determination of the least-squares line through `points`.
pub fn linear_r2(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 1.0;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    if sxx == 0.0 {
        return 0.0;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - (slope * p.0 + intercept)).powi(2)).sum();
    1.0 - ss_res / syy
}

/// Nondecreasing, allowing each point to dip below the running maximum by
/// `tolerance` (relative) to absorb timer noise.
pub fn is_monotone(values: &[f64], tolerance: f64) -> bool {
    let mut best = f64::MIN;
    for &v in values {
        if v < best * (1.0 - tolerance) {
            return false;
        }
        best = best.max(v);
    }
    true
}

const MONOTONE_TOLERANCE: f64 = 0.10;

/// Enrolled principals shared by all benchmark runs.
pub struct BenchFixture {
    pub params: PublicParams,
    pub tkma: Tkma,
    pub admin: ClientKeySet,
    pub requester: ClientKeySet,
    pub pip: ClientKeySet,
    server_halves: Vec<ServerKeySet>,
    pub rng: StdRng,
}

impl BenchFixture {
    pub fn new(group: GroupParams, seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut tkma = Tkma::with_group(group, &mut rng);
        let mut halves = Vec::new();
        let mut enroll = |id: &str| {
            let (c, s) = tkma.enroll(&UserId::new(id), &mut rng);
            halves.push(s);
            c
        };
        let admin = enroll("admin");
        let requester = enroll("requester");
        let pip = enroll("pip");
        BenchFixture {
            params: tkma.params.clone(),
            tkma,
            admin,
            requester,
            pip,
            server_halves: halves,
            rng,
        }
    }

    /// An engine with every fixture principal's server half installed.
    pub fn engine(&self) -> Engine {
        let e = Engine::new(self.params.clone());
        for s in &self.server_halves {
            e.install_keyset(s.clone()).expect("fixture key is valid");
        }
        e
    }

    pub fn server_half(&self, user: &UserId) -> &ServerKeySet {
        self.server_halves
            .iter()
            .find(|s| &s.user_id == user)
            .expect("fixture principal")
    }
}

fn roles(n: u32) -> Vec<String> {
    (0..n).map(|i| format!("role-{i}")).collect()
}

fn comparison_condition(n: u32) -> ConditionTree {
    let leaves = (0..n)
        .map(|i| expand_numeric_comparison(&format!("n{i}"), CompareOp::Lt, 15, 4).expect("15 fits in 4 bits"))
        .collect();
    ConditionTree::and(leaves).flattened()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64, OpCounts) {
    let start = Instant::now();
    let (out, ops) = metrics::measure(f);
    (out, start.elapsed().as_secs_f64() * 1e3, ops)
}

/// Matching loops take microseconds, so search timings average over
/// repeated scans. Op counts are per scan.
const SCAN_LOOPS: u32 = 50;

fn timed_scan<T>(mut f: impl FnMut() -> T) -> (T, f64, OpCounts) {
    let (out, ops) = metrics::measure(&mut f);
    let start = Instant::now();
    for _ in 1..SCAN_LOOPS {
        std::hint::black_box(f());
    }
    let ms = start.elapsed().as_secs_f64() * 1e3 / (SCAN_LOOPS - 1) as f64;
    (out, ms, ops)
}

struct Sample {
    client_ms: f64,
    server_ms: f64,
    client_ops: u64,
    server_ops: u64,
}

fn client_count(ops: &OpCounts) -> u64 {
    ops.client_encrypt + ops.client_trapdoor
}

fn server_count(ops: &OpCounts) -> u64 {
    ops.server_reencrypt + ops.server_trapdoor
}

fn deploy_sample(
    fx: &mut BenchFixture,
    encrypt: impl FnOnce(&mut BenchFixture) -> crate::client::ClientEncryptedPolicyBundle,
) -> Sample {
    let engine = fx.engine();
    let (bundle, client_ms, cops) = timed(|| encrypt(fx));
    let (deployed, server_ms, sops) = timed(|| engine.reencrypt_bundle(&bundle));
    deployed.expect("benchmark bundle deploys");
    Sample {
        client_ms,
        server_ms,
        client_ops: client_count(&cops),
        server_ops: server_count(&sops),
    }
}

fn run_point(fx: &mut BenchFixture, workload: Workload, n: u32) -> Sample {
    let params = fx.params.clone();
    let requester_id = fx.requester.user_id.clone();
    match workload {
        Workload::RoleAssignment => deploy_sample(fx, |fx| {
            let p = RoleAssignmentPolicy {
                requester: requester_id.clone(),
                roles: roles(n),
                condition: None,
            };
            encrypt_role_assignment(&p, &fx.admin, &params, &mut fx.rng).expect("valid policy")
        }),
        Workload::PermissionAssignment => deploy_sample(fx, |fx| {
            let p = PermissionAssignmentPolicy {
                role: "role-0".into(),
                permissions: (0..n).map(|i| Permission::new(format!("a{i}"), format!("t{i}"))).collect(),
                condition: None,
            };
            encrypt_permission_assignment(&p, &fx.admin, &params, &mut fx.rng).expect("valid policy")
        }),
        Workload::StringComparisons => deploy_sample(fx, |fx| {
            let t = ConditionTree::and((0..n).map(|i| ConditionTree::leaf(string_token(&format!("s{i}"), "v"))).collect());
            encrypt_condition_bundle(&t, &fx.admin, &params, &mut fx.rng).expect("valid condition")
        }),
        Workload::NumericComparisons => deploy_sample(fx, |fx| {
            encrypt_condition_bundle(&comparison_condition(n), &fx.admin, &params, &mut fx.rng)
                .expect("valid condition")
        }),
        Workload::NumericBits => deploy_sample(fx, |fx| {
            let t = expand_numeric_comparison("x", CompareOp::Lt, (1u64 << n) - 1, n).expect("threshold fits");
            encrypt_condition_bundle(&t, &fx.admin, &params, &mut fx.rng).expect("valid condition")
        }),
        Workload::Hierarchy => deploy_sample(fx, |fx| {
            encrypt_hierarchy(&RoleHierarchyGraph::chain(n as usize), &fx.admin, &params, &mut fx.rng)
                .expect("acyclic")
        }),
        Workload::SearchRole => {
            let engine = fx.engine();
            let p = RoleAssignmentPolicy {
                requester: requester_id.clone(),
                roles: roles(n),
                condition: None,
            };
            let b = encrypt_role_assignment(&p, &fx.admin, &params, &mut fx.rng).expect("valid policy");
            engine.reencrypt_bundle(&b).expect("deploys");
            let list = engine.policy_store().role_repository[&requester_id].roles.clone();
            let (req, client_ms, cops) =
                timed(|| make_activation_request(&fx.requester, "absent", &params, &mut fx.rng).expect("trapdoor"));
            let td = engine.complete_trapdoor(&req.role_td, &requester_id).expect("enrolled");
            let td = td.prepare(&params);
            let (found, server_ms, sops) = timed_scan(|| engine.scan_roles(&td, &list));
            assert!(!found);
            Sample {
                client_ms,
                server_ms,
                client_ops: client_count(&cops),
                server_ops: sops.matches,
            }
        }
        Workload::SearchPermission => {
            let engine = fx.engine();
            let p = PermissionAssignmentPolicy {
                role: "role-0".into(),
                permissions: (0..n).map(|i| Permission::new(format!("a{i}"), format!("t{i}"))).collect(),
                condition: None,
            };
            let b = encrypt_permission_assignment(&p, &fx.admin, &params, &mut fx.rng).expect("valid policy");
            engine.reencrypt_bundle(&b).expect("deploys");
            let perms = engine.policy_store().permission_repository[0].permissions.clone();
            let (req, client_ms, cops) = timed(|| {
                make_access_request(&fx.requester, "role-0", "absent", "absent", &params, &mut fx.rng).expect("trapdoors")
            });
            let action = engine.complete_trapdoor(&req.action_td, &requester_id).expect("enrolled");
            let target = engine.complete_trapdoor(&req.target_td, &requester_id).expect("enrolled");
            let (action, target) = (action.prepare(&params), target.prepare(&params));
            let (found, server_ms, sops) = timed_scan(|| engine.scan_permissions(&action, &target, &perms));
            assert!(!found);
            Sample {
                client_ms,
                server_ms,
                client_ops: client_count(&cops),
                server_ops: sops.matches,
            }
        }
        Workload::ConditionEvaluation => {
            let engine = fx.engine();
            let b = encrypt_condition_bundle(&comparison_condition(n), &fx.admin, &params, &mut fx.rng)
                .expect("valid condition");
            let Ok(Deployed::Condition(tree)) = engine.reencrypt_bundle(&b) else {
                panic!("condition bundle deploys to a tree")
            };
            let assertions: Vec<_> = (0..n).map(|i| AttributeAssertion::number(format!("n{i}"), 3, 4)).collect();
            let (tds, client_ms, cops) =
                timed(|| pip_collect(&assertions, &fx.pip, &params, &mut fx.rng).expect("valid assertions"));
            let pip_id = fx.pip.user_id.clone();
            let (ok, server_ms, sops) = timed(|| engine.evaluate_condition(&tds, &tree, &pip_id));
            assert!(ok.expect("enrolled"));
            Sample {
                client_ms,
                server_ms,
                client_ops: client_count(&cops),
                server_ops: server_count(&sops),
            }
        }
        Workload::HierarchySearch => {
            let engine = fx.engine();
            let b = encrypt_hierarchy(&RoleHierarchyGraph::chain(n as usize), &fx.admin, &params, &mut fx.rng)
                .expect("acyclic");
            engine.reencrypt_bundle(&b).expect("deploys");
            let (req, client_ms, cops) =
                timed(|| make_activation_request(&fx.requester, "absent", &params, &mut fx.rng).expect("trapdoor"));
            let td = engine.complete_trapdoor(&req.role_td, &requester_id).expect("enrolled");
            let td = td.prepare(&params);
            let (bases, server_ms, sops) = timed_scan(|| engine.hierarchy_bases_prepared(&td));
            assert!(bases.is_empty());
            Sample {
                client_ms,
                server_ms,
                client_ops: client_count(&cops),
                server_ops: sops.matches,
            }
        }
    }
}

/// Runs every sweep point `repetitions` times and reports medians. Store
/// setup is excluded from the timings.
pub fn bench_run(scenario: &BenchScenario, fx: &mut BenchFixture) -> Result<BenchReport, String> {
    scenario.validate()?;
    // Rounds sweep the whole range so that a burst of machine noise spreads
    // over all points instead of skewing one. Round 0 is a warm-up.
    let mut samples: Vec<Vec<Sample>> = scenario.sweep.iter().map(|_| Vec::new()).collect();
    for round in 0..=scenario.repetitions {
        for (i, &n) in scenario.sweep.iter().enumerate() {
            let s = run_point(fx, scenario.workload, n);
            if round > 0 {
                samples[i].push(s);
            }
        }
    }
    let mut rows = Vec::with_capacity(scenario.sweep.len());
    for (&n, samples) in scenario.sweep.iter().zip(&samples) {
        let mut c: Vec<f64> = samples.iter().map(|s| s.client_ms).collect();
        let mut s: Vec<f64> = samples.iter().map(|s| s.server_ms).collect();
        rows.push(BenchRow {
            parameter: n,
            client_ms: median(&mut c),
            server_ms: median(&mut s),
            client_ops: samples[0].client_ops,
            server_ops: samples[0].server_ops,
        });
    }
    let pts = |f: fn(&BenchRow) -> f64| rows.iter().map(|r| (r.parameter as f64, f(r))).collect::<Vec<_>>();
    let client_r2 = linear_r2(&pts(|r| r.client_ms));
    let server_r2 = linear_r2(&pts(|r| r.server_ms));
    let client_monotone = is_monotone(&rows.iter().map(|r| r.client_ms).collect::<Vec<_>>(), MONOTONE_TOLERANCE);
    let server_monotone = is_monotone(&rows.iter().map(|r| r.server_ms).collect::<Vec<_>>(), MONOTONE_TOLERANCE);
    let report = BenchReport {
        name: scenario.name.clone(),
        workload: scenario.workload,
        rows,
        client_r2,
        server_r2,
        client_monotone,
        server_monotone,
    };
    if let Some(dir) = &scenario.output {
        report.write(dir).map_err(|e| e.to_string())?;
    }
    Ok(report)
}

/// Client-side cost of one `ACT` against one `REQ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestCost {
    pub act_ms: f64,
    pub req_ms: f64,
    pub act_trapdoors: u64,
    pub req_trapdoors: u64,
}

impl RequestCost {
    pub fn time_ratio(&self) -> f64 {
        self.req_ms / self.act_ms
    }
}

pub fn request_cost(fx: &mut BenchFixture, repetitions: usize) -> RequestCost {
    let params = fx.params.clone();
    let mut act = Vec::new();
    let mut req = Vec::new();
    let (mut act_tds, mut req_tds) = (0, 0);
    for i in 0..repetitions + 1 {
        let (_, a_ms, a_ops) =
            timed(|| make_activation_request(&fx.requester, "Cardiologist", &params, &mut fx.rng).expect("trapdoor"));
        let (_, r_ms, r_ops) = timed(|| {
            make_access_request(&fx.requester, "Cardiologist", "read", "cardiology-report", &params, &mut fx.rng)
                .expect("trapdoors")
        });
        if i == 0 {
            continue;
        }
        act.push(a_ms);
        req.push(r_ms);
        act_tds = a_ops.client_trapdoor;
        req_tds = r_ops.client_trapdoor;
    }
    RequestCost {
        act_ms: median(&mut act),
        req_ms: median(&mut req),
        act_trapdoors: act_tds,
        req_trapdoors: req_tds,
    }
}

/// One flat rule: `subject` may do `action` on `target` when `condition`
/// holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatPolicy {
    pub subject: ServerCiphertext,
    pub action: ServerCiphertext,
    pub target: ServerCiphertext,
    pub condition: ConditionTree<ServerCiphertext>,
}

/// Flat rule base evaluated without roles or sessions: every request scans
/// all rules and evaluates the matching rule's condition.
pub struct FlatStore {
    params: PublicParams,
    pub policies: Vec<FlatPolicy>,
}

fn subject_element(name: &str) -> String {
    format!("subject:{name}")
}

/// `requester_name` attribute token used to bind a flat rule to its subject.
pub fn requester_name_token(name: &str) -> String {
    string_token("RequesterName", name)
}

impl FlatStore {
    pub fn new(params: PublicParams) -> Self {
        FlatStore {
            params,
            policies: Vec::new(),
        }
    }

    /// Encrypts and re-encrypts one rule under the admin's key pair.
    pub fn deploy<R: Rng + rand::CryptoRng>(
        &mut self,
        admin: &ClientKeySet,
        admin_server: &ServerKeySet,
        rule: (&str, &str, &str, &ConditionTree),
        rng: &mut R,
    ) -> Result<(), EngineError> {
        let p = &self.params;
        let mut enc = |e: &str| -> Result<ServerCiphertext, EngineError> {
            let ct = client_encrypt(p, admin, e, rng)?;
            Ok(server_reencrypt(p, &ct, admin_server)?)
        };
        let (subject, action, target, cond) = rule;
        let subject = enc(&subject_element(subject))?;
        let action = enc(&action_element(action))?;
        let target = enc(&target_element(target))?;
        let condition = cond.try_map_leaves(&mut |t: &String| enc(t))?;
        self.policies.push(FlatPolicy {
            subject,
            action,
            target,
            condition,
        });
        Ok(())
    }

    /// Permit iff some rule matches subject, action and target and its
    /// condition holds on the PIP's attributes.
    pub fn decide(
        &self,
        req: &AccessRequest,
        requester: &ServerKeySet,
        batch: &AttributeBatch,
        pip: &ServerKeySet,
    ) -> Result<bool, EngineError> {
        let p = &self.params;
        let complete = |td, k| -> Result<PreparedTrapdoor, EngineError> { Ok(server_trapdoor(p, td, k)?.prepare(p)) };
        let subject = complete(&req.role_td, requester)?;
        let action = complete(&req.action_td, requester)?;
        let target = complete(&req.target_td, requester)?;
        let mut attrs: Option<Vec<PreparedTrapdoor>> = None;
        for rule in &self.policies {
            if !(match_prepared(p, &rule.subject, &subject)
                && match_prepared(p, &rule.action, &action)
                && match_prepared(p, &rule.target, &target))
            {
                continue;
            }
            if attrs.is_none() {
                attrs = Some(batch.trapdoors.iter().map(|td| complete(td, pip)).collect::<Result<_, _>>()?);
            }
            let tds = attrs.as_ref().expect("just filled");
            let decided = rule.condition.map_leaves(&mut |ct| tds.iter().any(|td| match_prepared(p, ct, td)));
            if evaluate_tree(&mut DecisionTree::from_tree(&decided))? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Medians of the encrypted access decision for both designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatComparison {
    pub subjects: usize,
    pub permissions_per_subject: usize,
    pub rbac_median_ms: f64,
    pub flat_median_ms: f64,
}

/// `subjects` roles with `per_subject` permissions each, against a flat
/// store of `subjects * per_subject` rules carrying the ward/hours condition
/// plus a requester-name check. In the RBAC store the condition is enforced
/// at activation, so access decisions need no attributes.
pub fn flat_vs_rbac(fx: &mut BenchFixture, subjects: usize, per_subject: usize, repetitions: usize) -> FlatComparison {
    let params = fx.params.clone();
    let requester = fx.requester.user_id.clone();
    let admin_server = fx.server_half(&fx.admin.user_id).clone();
    let requester_server = fx.server_half(&requester).clone();
    let pip_server = fx.server_half(&fx.pip.user_id).clone();

    let engine = fx.engine();
    let role_names: Vec<String> = (0..subjects).map(|i| format!("role-{i}")).collect();
    for role in &role_names {
        let p = PermissionAssignmentPolicy {
            role: role.clone(),
            permissions: (0..per_subject).map(|j| Permission::new(format!("a{j}"), format!("t{j}"))).collect(),
            condition: None,
        };
        let b = encrypt_permission_assignment(&p, &fx.admin, &params, &mut fx.rng).expect("valid policy");
        engine.reencrypt_bundle(&b).expect("deploys");
    }
    let ra = RoleAssignmentPolicy {
        requester: requester.clone(),
        roles: role_names.clone(),
        condition: Some(ward_hours_condition()),
    };
    let b = encrypt_role_assignment(&ra, &fx.admin, &params, &mut fx.rng).expect("valid policy");
    engine.reencrypt_bundle(&b).expect("deploys");

    let subject_names: Vec<String> = (0..subjects).map(|i| format!("user-{i}")).collect();
    let mut flat = FlatStore::new(params.clone());
    for s in &subject_names {
        let cond = ConditionTree::and(vec![ward_hours_condition(), ConditionTree::leaf(requester_name_token(s))]).flattened();
        for j in 0..per_subject {
            flat.deploy(&fx.admin, &admin_server, (s, &format!("a{j}"), &format!("t{j}"), &cond), &mut fx.rng)
                .expect("deploys");
        }
    }

    let mut rbac_ms = Vec::new();
    let mut flat_ms = Vec::new();
    for rep in 0..repetitions + 1 {
        let i = fx.rng.gen_range(0..subjects);
        let j = fx.rng.gen_range(0..per_subject);
        let (action, target) = (format!("a{j}"), format!("t{j}"));

        // RBAC: activation happens once per session, outside the timing.
        let attrs = [
            AttributeAssertion::text("Location", "Cardiology-ward"),
            AttributeAssertion::number("AT", 10, 5),
        ];
        let batch = AttributeBatch::collect("act", &attrs, &fx.pip, &params, &mut fx.rng).expect("valid");
        let act = make_activation_request(&fx.requester, &role_names[i], &params, &mut fx.rng).expect("trapdoor");
        assert_eq!(engine.activate_role(&act, &batch), Ok(Decision::Permit));
        let req =
            make_access_request(&fx.requester, &role_names[i], &action, &target, &params, &mut fx.rng).expect("trapdoors");
        let (d, ms, _) = timed(|| engine.authorize_access(&req, &NoContext));
        assert_eq!(d, Ok(Decision::Permit));
        if rep > 0 {
            rbac_ms.push(ms);
        }

        let mut flat_attrs = attrs.to_vec();
        flat_attrs.push(AttributeAssertion::text("RequesterName", subject_names[i].as_str()));
        let batch = AttributeBatch::collect("flat", &flat_attrs, &fx.pip, &params, &mut fx.rng).expect("valid");
        let subject_td = client_trapdoor(&params, &fx.requester, &subject_element(&subject_names[i]), &mut fx.rng)
            .expect("trapdoor");
        let freq = AccessRequest {
            requester: requester.clone(),
            role_td: subject_td,
            action_td: req.action_td.clone(),
            target_td: req.target_td.clone(),
        };
        let (d, ms, _) = timed(|| flat.decide(&freq, &requester_server, &batch, &pip_server));
        assert_eq!(d, Ok(true));
        if rep > 0 {
            flat_ms.push(ms);
        }
    }
    FlatComparison {
        subjects,
        permissions_per_subject: per_subject,
        rbac_median_ms: median(&mut rbac_ms),
        flat_median_ms: median(&mut flat_ms),
    }
}
