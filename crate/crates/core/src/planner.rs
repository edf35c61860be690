//! Greedy hyper-node agglomeration: turns a plan graph into a bushy tree
//! whose duplicate-removing unions sit as deep as possible.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::graph::PlanGraph;
use crate::partition::GroupId;
use crate::tree::{BushyTree, UnionOp};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanOutcome {
    pub tree: BushyTree,
    /// Initial hyper-nodes plus one per merge.
    pub hypernodes_created: usize,
    pub merges: usize,
}

struct HyperNode {
    tree: BushyTree,
    smallest: GroupId,
    /// Interned predicate keys, sorted.
    keys: Vec<u32>,
    neighbors: BTreeSet<usize>,
    alive: bool,
}

fn intersection_len(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn union_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            out.push(b[j]);
            j += 1;
        } else {
            out.push(a[i]);
            i += 1;
            j += 1;
        }
    }
    out
}

/// Builds the bushy tree for `g`. Returns `None` for an empty graph.
pub fn generate_bushy_tree(g: &PlanGraph) -> Option<PlanOutcome> {
    if g.nodes.is_empty() {
        return None;
    }
    let mut intern: HashMap<&crate::rml::PredicateKey, u32> = HashMap::new();
    let mut nodes: Vec<HyperNode> = Vec::with_capacity(2 * g.nodes.len());
    let position: HashMap<GroupId, usize> = g.nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    for (id, keys) in g.nodes.iter().zip(&g.predicates) {
        let mut k: Vec<u32> = keys
            .iter()
            .map(|key| {
                let next = intern.len() as u32;
                *intern.entry(key).or_insert(next)
            })
            .collect();
        k.sort_unstable();
        nodes.push(HyperNode {
            tree: BushyTree::Leaf(*id),
            smallest: *id,
            keys: k,
            neighbors: BTreeSet::new(),
            alive: true,
        });
    }
    let mut shared = vec![0usize; nodes.len()];
    for ((a, b), label) in &g.labels {
        let (ia, ib) = (position[a], position[b]);
        nodes[ia].neighbors.insert(ib);
        nodes[ib].neighbors.insert(ia);
        shared[ia] += label.len();
        shared[ib] += label.len();
    }

    // Ordered list: descending degree, then descending shared count, then id.
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by_key(|&i| (Reverse(nodes[i].neighbors.len()), Reverse(shared[i]), nodes[i].smallest));
    let mut ol: VecDeque<usize> = order.into();

    // Live hyper-nodes by connection count, for the no-neighbor fallback.
    let mut by_degree: BTreeSet<(Reverse<usize>, GroupId, usize)> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (Reverse(n.neighbors.len()), n.smallest, i))
        .collect();

    let mut merges = 0;
    loop {
        while ol.front().is_some_and(|&i| !nodes[i].alive) {
            ol.pop_front();
        }
        let Some(&hn) = ol.front() else { break };
        if by_degree.len() == 1 {
            break;
        }

        let best = nodes[hn]
            .neighbors
            .iter()
            .map(|&nb| (intersection_len(&nodes[hn].keys, &nodes[nb].keys), nodes[nb].smallest, nb))
            .max_by_key(|&(common, smallest, _)| (common, Reverse(smallest)))
            .map(|(_, _, nb)| nb);
        let (partner, op) = match best {
            Some(nb) => (nb, UnionOp::Dr),
            None => {
                let nb = by_degree
                    .iter()
                    .map(|&(_, _, i)| i)
                    .find(|&i| i != hn)
                    .expect("at least two live hyper-nodes");
                (nb, UnionOp::Ndr)
            }
        };

        let id = nodes.len();
        let mut neighbors: BTreeSet<usize> = nodes[hn].neighbors.union(&nodes[partner].neighbors).copied().collect();
        neighbors.remove(&hn);
        neighbors.remove(&partner);
        for &nb in &neighbors {
            by_degree.remove(&(Reverse(nodes[nb].neighbors.len()), nodes[nb].smallest, nb));
            nodes[nb].neighbors.remove(&hn);
            nodes[nb].neighbors.remove(&partner);
            nodes[nb].neighbors.insert(id);
            by_degree.insert((Reverse(nodes[nb].neighbors.len()), nodes[nb].smallest, nb));
        }
        for &x in &[hn, partner] {
            by_degree.remove(&(Reverse(nodes[x].neighbors.len()), nodes[x].smallest, x));
            nodes[x].alive = false;
        }
        let tree = BushyTree::node(
            op,
            std::mem::replace(&mut nodes[hn].tree, BushyTree::Leaf(GroupId(0))),
            std::mem::replace(&mut nodes[partner].tree, BushyTree::Leaf(GroupId(0))),
        );
        let keys = union_sorted(&nodes[hn].keys, &nodes[partner].keys);
        let smallest = nodes[hn].smallest.min(nodes[partner].smallest);
        by_degree.insert((Reverse(neighbors.len()), smallest, id));
        nodes.push(HyperNode {
            tree,
            smallest,
            keys,
            neighbors,
            alive: true,
        });
        ol.push_back(id);
        merges += 1;
    }

    let created = nodes.len();
    let root = nodes.into_iter().rev().find(|n| n.alive).expect("one live hyper-node");
    Some(PlanOutcome {
        tree: root.tree,
        hypernodes_created: created,
        merges,
    })
}
