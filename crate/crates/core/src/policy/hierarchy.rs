use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::PolicyError;

/// `role extends base`: the derived role inherits every permission of the
/// base role.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Extends {
    pub role: String,
    pub base: String,
}

/// Directed acyclic graph of role inheritance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleHierarchyGraph {
    pub roles: Vec<String>,
    pub extends: Vec<Extends>,
}

impl RoleHierarchyGraph {
    pub fn new(roles: Vec<String>, extends: Vec<Extends>) -> Result<Self, PolicyError> {
        let g = RoleHierarchyGraph { roles, extends };
        g.validate()?;
        Ok(g)
    }

    /// `R_0 extends R_1 extends ... extends R_{n-1}`.
    pub fn chain(n: usize) -> Self {
        let roles: Vec<String> = (0..n).map(|i| format!("R_{i}")).collect();
        let extends = roles
            .windows(2)
            .map(|w| Extends {
                role: w[0].clone(),
                base: w[1].clone(),
            })
            .collect();
        RoleHierarchyGraph { roles, extends }
    }

    pub fn index_of(&self, role: &str) -> Option<usize> {
        self.roles.iter().position(|r| r == role)
    }

    /// Edges as `(derived, base)` node indices, in declaration order.
    pub fn edge_indices(&self) -> Result<Vec<(usize, usize)>, PolicyError> {
        self.extends
            .iter()
            .map(|e| {
                let d = self
                    .index_of(&e.role)
                    .ok_or_else(|| PolicyError::UnknownRole(e.role.clone()))?;
                let b = self
                    .index_of(&e.base)
                    .ok_or_else(|| PolicyError::UnknownRole(e.base.clone()))?;
                Ok((d, b))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let mut seen = HashSet::new();
        for r in &self.roles {
            if r.is_empty() {
                return Err(PolicyError::Empty("role name"));
            }
            if !seen.insert(r) {
                return Err(PolicyError::Duplicate {
                    kind: "role",
                    value: r.clone(),
                });
            }
        }
        let edges = self.edge_indices()?;
        if let Some(node) = find_cycle(self.roles.len(), &edges) {
            return Err(PolicyError::Cycle(self.roles[node].clone()));
        }
        Ok(())
    }

    /// Every role reachable over `extends` edges from `role`, breadth first,
    /// without duplicates and without `role` itself.
    pub fn topological_bases(&self, role: &str) -> Result<Vec<String>, PolicyError> {
        let start = self
            .index_of(role)
            .ok_or_else(|| PolicyError::UnknownRole(role.to_owned()))?;
        let edges = self.edge_indices()?;
        Ok(reachable_bases(self.roles.len(), &edges, start)
            .into_iter()
            .map(|i| self.roles[i].clone())
            .collect())
    }
}

/// Breadth-first closure over `(derived, base)` edges, excluding `start`.
pub fn reachable_bases(node_count: usize, edges: &[(usize, usize)], start: usize) -> Vec<usize> {
    let mut adjacency: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(d, b) in edges {
        adjacency.entry(d).or_default().push(b);
    }
    let mut visited = vec![false; node_count];
    visited[start] = true;
    let mut order = Vec::new();
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        for &b in adjacency.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
            if !visited[b] {
                visited[b] = true;
                order.push(b);
                queue.push_back(b);
            }
        }
    }
    order
}

/// Some node on a cycle, if there is one.
pub fn find_cycle(node_count: usize, edges: &[(usize, usize)]) -> Option<usize> {
    // Kahn's algorithm; whatever is left unprocessed lies on or behind a cycle.
    let mut indegree = vec![0usize; node_count];
    let mut adjacency = vec![Vec::new(); node_count];
    for &(d, b) in edges {
        adjacency[d].push(b);
        indegree[b] += 1;
    }
    let mut queue: VecDeque<usize> = (0..node_count).filter(|&n| indegree[n] == 0).collect();
    let mut done = 0;
    while let Some(n) = queue.pop_front() {
        done += 1;
        for &b in &adjacency[n] {
            indegree[b] -= 1;
            if indegree[b] == 0 {
                queue.push_back(b);
            }
        }
    }
    if done == node_count {
        None
    } else {
        (0..node_count).find(|&n| indegree[n] > 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hospital_graph_bases() {
        let g = crate::policy::hospital_hierarchy();
        assert_eq!(
            g.topological_bases("Cardiologist").unwrap(),
            vec!["Cardiologist Assistant", "Doctor", "Intern"]
        );
        assert!(g.topological_bases("Intern").unwrap().is_empty());
        assert!(g.topological_bases("Nurse").is_err());
    }

    #[test]
    fn chain_bases() {
        let g = RoleHierarchyGraph::chain(5);
        assert_eq!(g.topological_bases("R_0").unwrap(), vec!["R_1", "R_2", "R_3", "R_4"]);
    }

    #[test]
    fn rejects_cycles_and_duplicates() {
        let mut g = RoleHierarchyGraph::chain(3);
        g.extends.push(Extends {
            role: "R_2".into(),
            base: "R_0".into(),
        });
        assert!(matches!(g.validate(), Err(PolicyError::Cycle(_))));
        let dup = RoleHierarchyGraph::new(vec!["a".into(), "a".into()], vec![]);
        assert!(matches!(dup, Err(PolicyError::Duplicate { .. })));
        let unknown = RoleHierarchyGraph::new(
            vec!["a".into()],
            vec![Extends {
                role: "a".into(),
                base: "b".into(),
            }],
        );
        assert_eq!(unknown, Err(PolicyError::UnknownRole("b".into())));
    }
}
