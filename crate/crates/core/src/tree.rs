//! Bushy plan trees over assertion groups.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::partition::GroupId;
use crate::rml::PredicateKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnionOp {
    /// Union with duplicate removal.
    #[serde(rename = "DR")]
    Dr,
    /// Plain concatenating union.
    #[serde(rename = "NDR")]
    Ndr,
}

impl fmt::Display for UnionOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnionOp::Dr => "DR",
            UnionOp::Ndr => "NDR",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BushyTree {
    Leaf(GroupId),
    Node {
        op: UnionOp,
        left: Box<BushyTree>,
        right: Box<BushyTree>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlatKind {
    Leaf(GroupId),
    /// Children are indices into the flattened list.
    Union { op: UnionOp, left: usize, right: usize },
}

/// A tree node in post-order position. Leaves are named after their group,
/// unions `U1`, `U2`, ... in post-order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatNode {
    pub name: String,
    pub kind: FlatKind,
    /// Distance from the deepest leaf below; leaves are 0.
    pub height: usize,
}

impl BushyTree {
    pub fn node(op: UnionOp, left: BushyTree, right: BushyTree) -> BushyTree {
        BushyTree::Node {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Leaves from left to right.
    pub fn leaves(&self) -> Vec<GroupId> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<GroupId>) {
        match self {
            BushyTree::Leaf(g) => out.push(*g),
            BushyTree::Node { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    pub fn count_ops(&self, which: UnionOp) -> usize {
        match self {
            BushyTree::Leaf(_) => 0,
            BushyTree::Node { op, left, right } => {
                usize::from(*op == which) + left.count_ops(which) + right.count_ops(which)
            }
        }
    }

    pub fn internal_count(&self) -> usize {
        self.count_ops(UnionOp::Dr) + self.count_ops(UnionOp::Ndr)
    }

    pub fn height(&self) -> usize {
        match self {
            BushyTree::Leaf(_) => 0,
            BushyTree::Node { left, right, .. } => 1 + left.height().max(right.height()),
        }
    }

    pub fn root_op(&self) -> Option<UnionOp> {
        match self {
            BushyTree::Leaf(_) => None,
            BushyTree::Node { op, .. } => Some(*op),
        }
    }

    pub fn flatten(&self) -> Vec<FlatNode> {
        let mut out = Vec::new();
        let mut unions = 0;
        self.flatten_into(&mut out, &mut unions);
        out
    }

    fn flatten_into(&self, out: &mut Vec<FlatNode>, unions: &mut usize) -> usize {
        match self {
            BushyTree::Leaf(g) => {
                out.push(FlatNode {
                    name: g.to_string(),
                    kind: FlatKind::Leaf(*g),
                    height: 0,
                });
            }
            BushyTree::Node { op, left, right } => {
                let l = left.flatten_into(out, unions);
                let r = right.flatten_into(out, unions);
                *unions += 1;
                let height = 1 + out[l].height.max(out[r].height);
                out.push(FlatNode {
                    name: format!("U{unions}"),
                    kind: FlatKind::Union {
                        op: *op,
                        left: l,
                        right: r,
                    },
                    height,
                });
            }
        }
        out.len() - 1
    }

    /// Union of the predicate keys the leaves define.
    pub fn producible_predicates<'a>(
        &self,
        keys: &impl Fn(GroupId) -> &'a BTreeSet<PredicateKey>,
    ) -> BTreeSet<PredicateKey> {
        self.leaves().into_iter().flat_map(|g| keys(g).iter().cloned()).collect()
    }

    /// Same shape, with each union annotated DR exactly when the predicate
    /// sets of its two subtrees intersect.
    pub fn with_overlap_ops<'a>(&self, keys: &impl Fn(GroupId) -> &'a BTreeSet<PredicateKey>) -> BushyTree {
        self.annotate(keys).0
    }

    fn annotate<'a>(&self, keys: &impl Fn(GroupId) -> &'a BTreeSet<PredicateKey>) -> (BushyTree, BTreeSet<PredicateKey>) {
        match self {
            BushyTree::Leaf(g) => (self.clone(), keys(*g).clone()),
            BushyTree::Node { left, right, .. } => {
                let (l, mut lk) = left.annotate(keys);
                let (r, rk) = right.annotate(keys);
                let op = if lk.is_disjoint(&rk) { UnionOp::Ndr } else { UnionOp::Dr };
                lk.extend(rk);
                (BushyTree::node(op, l, r), lk)
            }
        }
    }

    /// Same shape with duplicate removal postponed to the root: every union
    /// is NDR except the root, which is DR when any overlap exists below it.
    pub fn lazy<'a>(&self, keys: &impl Fn(GroupId) -> &'a BTreeSet<PredicateKey>) -> BushyTree {
        let needs_dr = self.with_overlap_ops(keys).count_ops(UnionOp::Dr) > 0;
        match self.map_ops(&|_| UnionOp::Ndr) {
            BushyTree::Node { left, right, .. } if needs_dr => BushyTree::Node {
                op: UnionOp::Dr,
                left,
                right,
            },
            t => t,
        }
    }

    fn map_ops(&self, f: &impl Fn(UnionOp) -> UnionOp) -> BushyTree {
        match self {
            BushyTree::Leaf(_) => self.clone(),
            BushyTree::Node { op, left, right } => BushyTree::node(f(*op), left.map_ops(f), right.map_ops(f)),
        }
    }

    /// `g1 ∪ (g2 ∪ (... ∪ gn))`, all NDR; annotate afterwards as needed.
    pub fn right_linear(order: &[GroupId]) -> Option<BushyTree> {
        let (last, rest) = order.split_last()?;
        Some(
            rest.iter()
                .rev()
                .fold(BushyTree::Leaf(*last), |acc, g| BushyTree::node(UnionOp::Ndr, BushyTree::Leaf(*g), acc)),
        )
    }

    /// `((g1 ∪ g2) ∪ ...) ∪ gn`, all NDR.
    pub fn left_linear(order: &[GroupId]) -> Option<BushyTree> {
        let (first, rest) = order.split_first()?;
        Some(
            rest.iter()
                .fold(BushyTree::Leaf(*first), |acc, g| BushyTree::node(UnionOp::Ndr, acc, BushyTree::Leaf(*g))),
        )
    }

    /// Indented text, one node per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.text_into(&mut out, 0);
        out
    }

    fn text_into(&self, out: &mut String, depth: usize) {
        let pad = "  ".repeat(depth);
        match self {
            BushyTree::Leaf(g) => {
                let _ = writeln!(out, "{pad}{g}");
            }
            BushyTree::Node { op, left, right } => {
                let _ = writeln!(out, "{pad}{op}");
                left.text_into(out, depth + 1);
                right.text_into(out, depth + 1);
            }
        }
    }

    pub fn to_dot(&self) -> String {
        let flat = self.flatten();
        let mut out = String::from("digraph tree {\n");
        for n in &flat {
            match &n.kind {
                FlatKind::Leaf(_) => {
                    let _ = writeln!(out, "  \"{}\" [shape=box];", n.name);
                }
                FlatKind::Union { op, left, right } => {
                    let _ = writeln!(out, "  \"{}\" [label=\"{op}\"];", n.name);
                    let _ = writeln!(out, "  \"{}\" -> \"{}\";", n.name, flat[*left].name);
                    let _ = writeln!(out, "  \"{}\" -> \"{}\";", n.name, flat[*right].name);
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

impl fmt::Display for BushyTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BushyTree::Leaf(g) => write!(f, "{g}"),
            BushyTree::Node { op, left, right } => write!(f, "{op}({left}, {right})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(n: u32) -> BushyTree {
        BushyTree::Leaf(GroupId(n))
    }

    #[test]
    fn flatten_is_post_order() {
        let t = BushyTree::node(
            UnionOp::Ndr,
            leaf(3),
            BushyTree::node(UnionOp::Ndr, leaf(1), BushyTree::node(UnionOp::Dr, leaf(2), leaf(4))),
        );
        let names: Vec<_> = t.flatten().iter().map(|n| n.name.clone()).collect();
        assert_eq!(names, ["G3", "G1", "G2", "G4", "U1", "U2", "U3"]);
        assert_eq!(t.to_string(), "NDR(G3, NDR(G1, DR(G2, G4)))");
        assert_eq!(t.height(), 3);
        assert_eq!(t.leaves(), [GroupId(3), GroupId(1), GroupId(2), GroupId(4)]);
    }

    #[test]
    fn linear_shapes() {
        let ids = [GroupId(1), GroupId(2), GroupId(3)];
        assert_eq!(BushyTree::right_linear(&ids).unwrap().to_string(), "NDR(G1, NDR(G2, G3))");
        assert_eq!(BushyTree::left_linear(&ids).unwrap().to_string(), "NDR(NDR(G1, G2), G3)");
        assert_eq!(BushyTree::right_linear(&ids[..1]).unwrap(), leaf(1));
        assert!(BushyTree::right_linear(&[]).is_none());
    }

    #[test]
    fn overlap_annotation_and_lazy() {
        let k = |n: &[&str]| -> BTreeSet<PredicateKey> { n.iter().map(|s| PredicateKey::Property(s.to_string())).collect() };
        let sets = [k(&["a"]), k(&["b", "x"]), k(&["c"]), k(&["x"])];
        let keys = |g: GroupId| &sets[g.0 as usize - 1];
        let t = BushyTree::right_linear(&[GroupId(3), GroupId(1), GroupId(2), GroupId(4)]).unwrap();
        assert_eq!(t.with_overlap_ops(&keys).to_string(), "NDR(G3, NDR(G1, DR(G2, G4)))");
        assert_eq!(t.lazy(&keys).to_string(), "DR(G3, NDR(G1, NDR(G2, G4)))");
        assert_eq!(t.producible_predicates(&keys).len(), 4);
    }
}
