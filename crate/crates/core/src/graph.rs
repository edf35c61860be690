//! The plan graph: groups as nodes, an edge wherever two groups define a
//! common predicate key.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::partition::{GroupId, PartitionSet};
use crate::rml::PredicateKey;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanGraph {
    pub nodes: Vec<GroupId>,
    /// Defined predicate keys per node, aligned with `nodes`.
    pub predicates: Vec<BTreeSet<PredicateKey>>,
    /// Keyed by (smaller id, larger id).
    pub labels: BTreeMap<(GroupId, GroupId), BTreeSet<PredicateKey>>,
}

fn edge_key(a: GroupId, b: GroupId) -> (GroupId, GroupId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl PlanGraph {
    pub fn from_nodes(nodes: Vec<(GroupId, BTreeSet<PredicateKey>)>) -> PlanGraph {
        let mut index: HashMap<&PredicateKey, Vec<usize>> = HashMap::new();
        for (i, (_, keys)) in nodes.iter().enumerate() {
            for k in keys {
                index.entry(k).or_default().push(i);
            }
        }
        let mut labels: BTreeMap<(GroupId, GroupId), BTreeSet<PredicateKey>> = BTreeMap::new();
        for (key, holders) in &index {
            for (x, &i) in holders.iter().enumerate() {
                for &j in &holders[x + 1..] {
                    labels
                        .entry(edge_key(nodes[i].0, nodes[j].0))
                        .or_default()
                        .insert((*key).clone());
                }
            }
        }
        let (nodes, predicates) = nodes.into_iter().unzip();
        PlanGraph {
            nodes,
            predicates,
            labels,
        }
    }

    pub fn label(&self, a: GroupId, b: GroupId) -> Option<&BTreeSet<PredicateKey>> {
        self.labels.get(&edge_key(a, b))
    }

    pub fn edge_count(&self) -> usize {
        self.labels.len()
    }

    pub fn node_index(&self, id: GroupId) -> Option<usize> {
        self.nodes.iter().position(|n| *n == id)
    }

    pub fn predicates_of(&self, id: GroupId) -> &BTreeSet<PredicateKey> {
        &self.predicates[self.node_index(id).expect("node in graph")]
    }

    pub fn neighbors(&self, id: GroupId) -> Vec<GroupId> {
        self.labels
            .keys()
            .filter_map(|&(a, b)| {
                if a == id {
                    Some(b)
                } else if b == id {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    /// DOT rendering: edge labels are comma-joined predicate local names.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph plan {\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  \"{n}\";");
        }
        for ((a, b), keys) in &self.labels {
            let names: Vec<&str> = keys.iter().map(PredicateKey::local_name).collect();
            let _ = writeln!(out, "  \"{a}\" -- \"{b}\" [label=\"{}\"];", names.join(","));
        }
        out.push_str("}\n");
        out
    }
}

pub fn build_plan_graph(p: &PartitionSet) -> PlanGraph {
    PlanGraph::from_nodes(p.groups.iter().map(|g| (g.id, g.defined_predicates.clone())).collect())
}
