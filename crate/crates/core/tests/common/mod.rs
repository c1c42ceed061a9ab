#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sealed_rbac::client::{
    encrypt_hierarchy, encrypt_permission_assignment, encrypt_role_assignment, make_access_request,
    make_activation_request, AttributeBatch, Tkma,
};
use sealed_rbac::crypto::{ClientKeySet, PublicParams};
use sealed_rbac::engine::{Decision, DenyReason, Engine, NoContext};
use sealed_rbac::error::EngineError;
use sealed_rbac::group::GroupParams;
use sealed_rbac::ids::UserId;
use sealed_rbac::policy::{
    compile_condition, AttributeAssertion, CompareOp, ConditionLeaf, ConditionTree, Extends, Permission,
    PermissionAssignmentPolicy, RoleAssignmentPolicy, RoleHierarchyGraph,
};

pub const AT_BITS: u32 = 5;
pub const LOCATIONS: [&str; 3] = ["ward-a", "ward-b", "lobby"];

/// A condition atom as the oracle sees it: no tokens, no bits.
#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    Location(String),
    Time(CompareOp, u64),
}

pub type Cond = ConditionTree<Atom>;

#[derive(Debug, Clone, PartialEq)]
pub struct Attrs {
    pub location: Option<String>,
    pub time: Option<u64>,
}

#[derive(Debug, Clone)]
pub enum Step {
    Activate {
        role: String,
        attrs: Option<Attrs>,
    },
    Access {
        role: String,
        action: String,
        target: String,
        attrs: Option<Attrs>,
    },
}

#[derive(Debug, Clone)]
pub struct PermEntry {
    pub role: String,
    pub perms: Vec<(String, String)>,
    pub cond: Option<Cond>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub roles: Vec<String>,
    pub assigned: Vec<String>,
    pub assignment_cond: Option<Cond>,
    pub permissions: Vec<PermEntry>,
    /// Hierarchy nodes (role names) and `(derived, base)` edges by position.
    pub hierarchy_nodes: Vec<String>,
    pub hierarchy_edges: Vec<(usize, usize)>,
    pub steps: Vec<Step>,
}

fn holds(op: CompareOp, v: u64, t: u64) -> bool {
    match op {
        CompareOp::Lt => v < t,
        CompareOp::Gt => v > t,
        CompareOp::Eq => v == t,
        CompareOp::Le => v <= t,
        CompareOp::Ge => v >= t,
    }
}

pub fn eval_cond(c: &Cond, attrs: &Attrs) -> bool {
    match c {
        ConditionTree::Leaf { leaf } => match leaf {
            Atom::Location(l) => attrs.location.as_deref() == Some(l.as_str()),
            Atom::Time(op, t) => attrs.time.is_some_and(|v| holds(*op, v, *t)),
        },
        ConditionTree::Node { gate, children } => {
            let vals: Vec<bool> = children.iter().map(|c| eval_cond(c, attrs)).collect();
            match gate {
                sealed_rbac::policy::Gate::And => vals.iter().all(|&b| b),
                sealed_rbac::policy::Gate::Or => vals.iter().any(|&b| b),
                sealed_rbac::policy::Gate::Threshold(k) => vals.iter().filter(|&&b| b).count() >= *k,
            }
        }
    }
}

pub fn compile(c: &Cond) -> ConditionTree {
    let spec = c.map_leaves(&mut |a| match a {
        Atom::Location(l) => ConditionLeaf::Equals {
            attribute: "location".into(),
            equals: l.clone(),
        },
        Atom::Time(op, t) => ConditionLeaf::Compare {
            attribute: "time".into(),
            op: *op,
            value: *t,
            bits: AT_BITS,
        },
    });
    compile_condition(&spec).expect("generated conditions are valid")
}

pub fn assertions(attrs: &Attrs) -> Vec<AttributeAssertion> {
    let mut out = Vec::new();
    if let Some(l) = &attrs.location {
        out.push(AttributeAssertion::text("location", l.as_str()));
    }
    if let Some(t) = attrs.time {
        out.push(AttributeAssertion::number("time", t, AT_BITS));
    }
    out
}

fn random_atom(rng: &mut impl Rng) -> Atom {
    if rng.gen_bool(0.4) {
        Atom::Location(LOCATIONS.choose(rng).unwrap().to_string())
    } else {
        Atom::Time(*CompareOp::ALL.choose(rng).unwrap(), rng.gen_range(0..32))
    }
}

fn combine(mut parts: Vec<Cond>, rng: &mut impl Rng) -> Cond {
    while parts.len() > 1 {
        let k = rng.gen_range(2..=parts.len());
        let group: Vec<Cond> = parts.drain(..k).collect();
        let node = if rng.gen_bool(0.5) {
            ConditionTree::and(group)
        } else {
            ConditionTree::or(group)
        };
        let at = rng.gen_range(0..=parts.len());
        parts.insert(at, node);
    }
    parts.pop().unwrap()
}

/// A random condition of at most `max_leaves` token leaves once compiled.
pub fn random_cond(rng: &mut impl Rng, max_leaves: usize) -> Cond {
    loop {
        let n = rng.gen_range(1..=3);
        let atoms = (0..n).map(|_| ConditionTree::leaf(random_atom(rng))).collect();
        let c = combine(atoms, rng);
        if compile(&c).leaf_count() <= max_leaves {
            return c;
        }
    }
}

pub fn random_attrs(rng: &mut impl Rng) -> Option<Attrs> {
    if rng.gen_bool(0.15) {
        return None;
    }
    let location = rng
        .gen_bool(0.85)
        .then(|| LOCATIONS.choose(rng).unwrap().to_string());
    let time = rng.gen_bool(0.85).then(|| rng.gen_range(0..32));
    if location.is_none() && time.is_none() {
        return None;
    }
    Some(Attrs { location, time })
}

const ACTIONS: [&str; 3] = ["read", "write", "sign"];
const TARGETS: [&str; 3] = ["chart", "report", "order"];

pub fn random_scenario(rng: &mut impl Rng) -> Scenario {
    let n_roles = rng.gen_range(1..=20);
    let roles: Vec<String> = (0..n_roles).map(|i| format!("role{i}")).collect();
    let mut assigned: Vec<String> = roles.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();
    if assigned.is_empty() {
        assigned.push(roles[0].clone());
    }
    assigned.shuffle(rng);
    let assignment_cond = rng.gen_bool(0.5).then(|| random_cond(rng, 8));

    let mut permissions = Vec::new();
    for r in &roles {
        if !rng.gen_bool(0.6) {
            continue;
        }
        let mut pairs = BTreeSet::new();
        for _ in 0..rng.gen_range(1..=10) {
            pairs.insert((
                ACTIONS.choose(rng).unwrap().to_string(),
                TARGETS.choose(rng).unwrap().to_string(),
            ));
        }
        permissions.push(PermEntry {
            role: r.clone(),
            perms: pairs.into_iter().collect(),
            cond: rng.gen_bool(0.4).then(|| random_cond(rng, 8)),
        });
    }

    let mut hierarchy_nodes: Vec<String> = roles.clone();
    hierarchy_nodes.shuffle(rng);
    hierarchy_nodes.truncate(rng.gen_range(0..=roles.len().min(10)));
    let mut hierarchy_edges = Vec::new();
    for d in 0..hierarchy_nodes.len() {
        for b in d + 1..hierarchy_nodes.len() {
            if rng.gen_bool(0.3) {
                hierarchy_edges.push((d, b));
            }
        }
    }

    let steps = (0..rng.gen_range(4..=12))
        .map(|_| {
            let role = roles.choose(rng).unwrap().clone();
            let attrs = random_attrs(rng);
            if rng.gen_bool(0.4) {
                Step::Activate { role, attrs }
            } else {
                Step::Access {
                    role,
                    action: ACTIONS.choose(rng).unwrap().to_string(),
                    target: TARGETS.choose(rng).unwrap().to_string(),
                    attrs,
                }
            }
        })
        .collect();

    Scenario {
        roles,
        assigned,
        assignment_cond,
        permissions,
        hierarchy_nodes,
        hierarchy_edges,
        steps,
    }
}

/// Plaintext RBAC with inheritance closure.
pub struct Oracle<'a> {
    sc: &'a Scenario,
    pub session: HashSet<String>,
}

fn cond_outcome(c: &Option<Cond>, attrs: &Option<Attrs>) -> Option<bool> {
    match (c, attrs) {
        (None, _) => Some(true),
        (Some(_), None) => None,
        (Some(c), Some(a)) => Some(eval_cond(c, a)),
    }
}

impl<'a> Oracle<'a> {
    pub fn new(sc: &'a Scenario) -> Self {
        Oracle {
            sc,
            session: HashSet::new(),
        }
    }

    /// The role itself plus everything it transitively extends.
    pub fn closure(&self, role: &str) -> Vec<String> {
        let mut out = vec![role.to_owned()];
        let Some(start) = self.sc.hierarchy_nodes.iter().position(|r| r == role) else {
            return out;
        };
        let mut seen = vec![false; self.sc.hierarchy_nodes.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(n) = stack.pop() {
            for &(d, b) in &self.sc.hierarchy_edges {
                if d == n && !seen[b] {
                    seen[b] = true;
                    out.push(self.sc.hierarchy_nodes[b].clone());
                    stack.push(b);
                }
            }
        }
        out
    }

    pub fn step(&mut self, step: &Step) -> Decision {
        match step {
            Step::Activate { role, attrs } => {
                if !self.sc.assigned.contains(role) {
                    return Decision::Deny(DenyReason::NoRoleMatch);
                }
                match cond_outcome(&self.sc.assignment_cond, attrs) {
                    None => Decision::Deny(DenyReason::ConditionUnresolved),
                    Some(false) => Decision::Deny(DenyReason::ConditionFalse),
                    Some(true) => {
                        self.session.insert(role.clone());
                        Decision::Permit
                    }
                }
            }
            Step::Access {
                role,
                action,
                target,
                attrs,
            } => {
                if !self.session.contains(role) {
                    return Decision::Deny(DenyReason::NoActiveRole);
                }
                let (mut saw_false, mut saw_unresolved) = (false, false);
                for r in self.closure(role) {
                    for e in self.sc.permissions.iter().filter(|e| e.role == r) {
                        if !e.perms.iter().any(|(a, t)| a == action && t == target) {
                            continue;
                        }
                        match cond_outcome(&e.cond, attrs) {
                            Some(true) => return Decision::Permit,
                            Some(false) => saw_false = true,
                            None => saw_unresolved = true,
                        }
                    }
                }
                Decision::Deny(if saw_false {
                    DenyReason::ConditionFalse
                } else if saw_unresolved {
                    DenyReason::ConditionUnresolved
                } else {
                    DenyReason::NoPermission
                })
            }
        }
    }
}

/// The same scenario run through the encrypted pipeline.
pub struct Encrypted {
    pub engine: Engine,
    pub params: PublicParams,
    pub admin: ClientKeySet,
    pub requester: ClientKeySet,
    pub pip: ClientKeySet,
    pub rng: ChaCha8Rng,
}

pub const REQUESTER: &str = "requester";

impl Encrypted {
    pub fn new(group: GroupParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tkma = Tkma::with_group(group, &mut rng);
        let engine = Engine::new(tkma.params.clone());
        let mut enroll = |id: &str| {
            let (c, s) = tkma.enroll(&UserId::new(id), &mut rng);
            engine.install_keyset(s).unwrap();
            c
        };
        let admin = enroll("admin");
        let requester = enroll(REQUESTER);
        let pip = enroll("pip");
        Encrypted {
            params: tkma.params.clone(),
            engine,
            admin,
            requester,
            pip,
            rng,
        }
    }

    pub fn deploy(&mut self, sc: &Scenario) {
        let p = self.params.clone();
        let ra = RoleAssignmentPolicy {
            requester: REQUESTER.into(),
            roles: sc.assigned.clone(),
            condition: sc.assignment_cond.as_ref().map(compile),
        };
        let b = encrypt_role_assignment(&ra, &self.admin, &p, &mut self.rng).unwrap();
        self.engine.reencrypt_bundle(&b).unwrap();
        for e in &sc.permissions {
            let pa = PermissionAssignmentPolicy {
                role: e.role.clone(),
                permissions: e.perms.iter().map(|(a, t)| Permission::new(a.as_str(), t.as_str())).collect(),
                condition: e.cond.as_ref().map(compile),
            };
            let b = encrypt_permission_assignment(&pa, &self.admin, &p, &mut self.rng).unwrap();
            self.engine.reencrypt_bundle(&b).unwrap();
        }
        let graph = RoleHierarchyGraph::new(
            sc.hierarchy_nodes.clone(),
            sc.hierarchy_edges
                .iter()
                .map(|&(d, b)| Extends {
                    role: sc.hierarchy_nodes[d].clone(),
                    base: sc.hierarchy_nodes[b].clone(),
                })
                .collect(),
        )
        .unwrap();
        let b = encrypt_hierarchy(&graph, &self.admin, &p, &mut self.rng).unwrap();
        self.engine.reencrypt_bundle(&b).unwrap();
    }

    fn batch(&mut self, attrs: &Option<Attrs>) -> Option<AttributeBatch> {
        let a = attrs.as_ref()?;
        let corr = format!("c{}", self.rng.next_u32());
        Some(AttributeBatch::collect(corr, &assertions(a), &self.pip, &self.params, &mut self.rng).unwrap())
    }

    pub fn step(&mut self, step: &Step) -> Result<Decision, EngineError> {
        let p = self.params.clone();
        match step {
            Step::Activate { role, attrs } => {
                let batch = self.batch(attrs);
                let req = make_activation_request(&self.requester, role, &p, &mut self.rng).unwrap();
                match &batch {
                    Some(b) => self.engine.activate_role(&req, b),
                    None => self.engine.activate_role(&req, &NoContext),
                }
            }
            Step::Access {
                role,
                action,
                target,
                attrs,
            } => {
                let batch = self.batch(attrs);
                let req = make_access_request(&self.requester, role, action, target, &p, &mut self.rng).unwrap();
                match &batch {
                    Some(b) => self.engine.authorize_access(&req, b),
                    None => self.engine.authorize_access(&req, &NoContext),
                }
            }
        }
    }
}

/// Runs a scenario through both and returns the first disagreement.
pub fn compare_scenario(sc: &Scenario, group: GroupParams, seed: u64) -> Result<usize, String> {
    let mut enc = Encrypted::new(group, seed);
    enc.deploy(sc);
    let mut oracle = Oracle::new(sc);
    for (i, step) in sc.steps.iter().enumerate() {
        let want = oracle.step(step);
        let got = enc.step(step).map_err(|e| format!("step {i}: engine error {e}"))?;
        if got != want {
            return Err(format!("step {i} {step:?}: engine {got:?}, oracle {want:?}"));
        }
    }
    Ok(sc.steps.len())
}

/// A 256-bit test-profile group, generated once per seed.
pub fn test_group(seed: u64) -> GroupParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GroupParams::generate(256, 64, &mut rng).expect("test group")
}
