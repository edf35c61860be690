//! Plan cost: leaf execution cost plus union cost, summed over the tree.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::partition::{AssertionGroup, GroupId, PartitionSet};
use crate::rml::{AssertionKind, DataIntegrationSystem};
use crate::tree::{BushyTree, FlatKind, UnionOp};

#[derive(Debug, thiserror::Error)]
pub enum CostError {
    #[error("no statistics for source {0}")]
    MissingStats(String),
    #[error("no measured time for group {0}")]
    MissingMeasurement(String),
    #[error("no leaf profile for group {0}")]
    MissingLeaf(GroupId),
    #[error("{path}: {message}")]
    Source { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CostMode {
    #[default]
    AbstractOps,
    MeasuredSeconds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Coefficients {
    pub unit_row_cost: f64,
    pub join_cost_factor: f64,
    /// Multiplier of `N log2 N` for DR unions.
    pub dedup_cost_factor: f64,
    /// Multiplier of `N` for NDR unions.
    pub linear_union_cost: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Coefficients {
            unit_row_cost: 1.0,
            join_cost_factor: 1.0,
            dedup_cost_factor: 1.0,
            linear_union_cost: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SourceStats {
    pub rows: u64,
    /// 1 - distinct rows / rows.
    pub duplicate_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub sources: BTreeMap<String, SourceStats>,
    /// Wall time per group name, from an earlier run.
    #[serde(default)]
    pub measured_seconds: BTreeMap<String, f64>,
}

impl Stats {
    /// Row counts and duplicate rates read from the CSV files of `dis`.
    pub fn from_sources(dis: &DataIntegrationSystem) -> Result<Stats, CostError> {
        let mut stats = Stats::default();
        for s in &dis.sources {
            let err = |e: csv::Error| CostError::Source {
                path: s.path.clone(),
                message: e.to_string(),
            };
            let mut reader = csv::Reader::from_path(&s.path).map_err(err)?;
            let mut rows = 0u64;
            let mut distinct: HashSet<Vec<Vec<u8>>> = HashSet::new();
            for rec in reader.byte_records() {
                let rec = rec.map_err(err)?;
                rows += 1;
                distinct.insert(rec.iter().map(<[u8]>::to_vec).collect());
            }
            let duplicate_rate = if rows == 0 {
                0.0
            } else {
                1.0 - distinct.len() as f64 / rows as f64
            };
            stats.sources.insert(s.id.clone(), SourceStats { rows, duplicate_rate });
        }
        Ok(stats)
    }

    fn source(&self, id: &str) -> Result<SourceStats, CostError> {
        self.sources.get(id).copied().ok_or_else(|| CostError::MissingStats(id.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostModel {
    pub mode: CostMode,
    pub coefficients: Coefficients,
}

/// What the tree-level cost needs to know about one leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafProfile {
    pub delta: f64,
    /// Estimated triple count.
    pub cardinality: f64,
    /// (source id, duplicate rate) for each source the group reads.
    pub sources: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub value: f64,
    /// Contribution of each tree node, keyed by node name.
    pub breakdown: BTreeMap<String, f64>,
    /// Estimated cardinality of the root.
    pub cardinality: f64,
}

impl CostModel {
    pub fn delta(&self, g: &AssertionGroup, dis: &DataIntegrationSystem, stats: &Stats) -> Result<f64, CostError> {
        match self.mode {
            CostMode::MeasuredSeconds => stats
                .measured_seconds
                .get(&g.id.to_string())
                .copied()
                .ok_or_else(|| CostError::MissingMeasurement(g.id.to_string())),
            CostMode::AbstractOps => {
                let c = &self.coefficients;
                let mut total = 0.0;
                for a in g.executed().map(|id| dis.assertion(id)) {
                    let child = stats.source(a.child_source())?.rows as f64;
                    total += match a.kind {
                        AssertionKind::MultiSourceRole => {
                            let parent = stats.source(a.parent_source().unwrap_or(a.child_source()))?.rows as f64;
                            c.join_cost_factor * (child + parent)
                        }
                        _ => c.unit_row_cost * child,
                    };
                }
                Ok(total)
            }
        }
    }

    pub fn phi(&self, op: UnionOp, left_cardinality: f64, right_cardinality: f64) -> f64 {
        let n = left_cardinality + right_cardinality;
        match op {
            UnionOp::Dr => self.coefficients.dedup_cost_factor * n * n.max(2.0).log2(),
            UnionOp::Ndr => self.coefficients.linear_union_cost * n,
        }
    }

    pub fn leaf_profile(
        &self,
        g: &AssertionGroup,
        dis: &DataIntegrationSystem,
        stats: &Stats,
    ) -> Result<LeafProfile, CostError> {
        let mut cardinality = 0.0;
        for a in g.executed().map(|id| dis.assertion(id)) {
            cardinality += stats.source(a.child_source())?.rows as f64;
        }
        let mut sources = Vec::new();
        for s in &g.source_footprint {
            sources.push((s.clone(), stats.source(s)?.duplicate_rate));
        }
        Ok(LeafProfile {
            delta: self.delta(g, dis, stats)?,
            cardinality,
            sources,
        })
    }

    pub fn leaf_profiles(
        &self,
        p: &PartitionSet,
        dis: &DataIntegrationSystem,
        stats: &Stats,
    ) -> Result<HashMap<GroupId, LeafProfile>, CostError> {
        p.groups
            .iter()
            .map(|g| Ok((g.id, self.leaf_profile(g, dis, stats)?)))
            .collect()
    }

    /// Recursive cost of `t`. After a DR union the cardinality is discounted
    /// by the mean duplicate rate of the sources below it.
    pub fn fu(&self, t: &BushyTree, leaves: &HashMap<GroupId, LeafProfile>) -> Result<CostEstimate, CostError> {
        let flat = t.flatten();
        let mut card = vec![0.0; flat.len()];
        let mut sources: Vec<BTreeMap<&str, f64>> = vec![BTreeMap::new(); flat.len()];
        let mut breakdown = BTreeMap::new();
        let mut value = 0.0;
        for (i, n) in flat.iter().enumerate() {
            let contribution = match &n.kind {
                FlatKind::Leaf(g) => {
                    let leaf = leaves.get(g).ok_or(CostError::MissingLeaf(*g))?;
                    card[i] = leaf.cardinality;
                    sources[i] = leaf.sources.iter().map(|(s, d)| (s.as_str(), *d)).collect();
                    leaf.delta
                }
                FlatKind::Union { op, left, right } => {
                    let (l, r) = (card[*left], card[*right]);
                    let mut merged = sources[*left].clone();
                    merged.extend(sources[*right].iter().map(|(k, v)| (*k, *v)));
                    let n_out = l + r;
                    card[i] = match op {
                        UnionOp::Dr if !merged.is_empty() => {
                            let mean = merged.values().sum::<f64>() / merged.len() as f64;
                            n_out * (1.0 - mean)
                        }
                        _ => n_out,
                    };
                    sources[i] = merged;
                    self.phi(*op, l, r)
                }
            };
            value += contribution;
            breakdown.insert(n.name.clone(), contribution);
        }
        Ok(CostEstimate {
            value,
            breakdown,
            cardinality: card.last().copied().unwrap_or(0.0),
        })
    }
}

/// Sources read by any leaf of `t`.
pub fn tree_sources(t: &BushyTree, leaves: &HashMap<GroupId, LeafProfile>) -> BTreeSet<String> {
    t.leaves()
        .iter()
        .filter_map(|g| leaves.get(g))
        .flat_map(|l| l.sources.iter().map(|(s, _)| s.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::partition;
    use crate::rml::{extract_assertions, parse_mappings};
    use std::path::Path;

    fn leaf(delta: f64, cardinality: f64) -> LeafProfile {
        LeafProfile {
            delta,
            cardinality,
            sources: Vec::new(),
        }
    }

    #[test]
    fn phi_values() {
        let m = CostModel::default();
        assert_eq!(m.phi(UnionOp::Ndr, 3.0, 5.0), 8.0);
        assert_eq!(m.phi(UnionOp::Dr, 4.0, 4.0), 24.0);
        assert_eq!(m.phi(UnionOp::Dr, 0.0, 0.0), 0.0);
    }

    #[test]
    fn delta_by_kind() {
        let doc = r#"@prefix rr: <http://www.w3.org/ns/r2rml#> .
            @prefix rml: <http://semweb.mmlab.be/ns/rml#> .
            <#A> rml:logicalSource [ rml:source "a.csv" ] ;
                 rr:subjectMap [ rr:template "http://x/a/{id}" ; rr:class <http://x/A> ] ;
                 rr:predicateObjectMap [ rr:predicate <http://x/p> ;
                    rr:objectMap [ rr:parentTriplesMap <#B> ; rr:joinCondition [ rr:child "id" ; rr:parent "id" ] ] ] .
            <#B> rml:logicalSource [ rml:source "b.csv" ] ;
                 rr:subjectMap [ rr:template "http://x/b/{id}" ; rr:class <http://x/B> ] .
            <#V> rml:logicalSource [ rml:source "v.csv" ] ;
                 rr:subjectMap [ rr:template "http://x/v/{id}" ] ;
                 rr:predicateObjectMap [ rr:predicate <http://x/q> ; rr:objectMap [ rml:reference "id" ] ] ."#;
        let dis = extract_assertions(&parse_mappings(doc).unwrap(), Path::new("")).unwrap();
        let p = partition(&dis);
        let mut stats = Stats::default();
        stats.sources.insert("a".into(), SourceStats { rows: 100, duplicate_rate: 0.0 });
        stats.sources.insert("b".into(), SourceStats { rows: 50, duplicate_rate: 0.0 });
        stats.sources.insert("v".into(), SourceStats { rows: 10_000, duplicate_rate: 0.0 });
        let m = CostModel::default();
        // concept over the child plus the join
        let mut join_group = p.groups[0].clone();
        join_group.members = [crate::rml::AssertionId(0), crate::rml::AssertionId(1)].into();
        join_group.copies.clear();
        let join_group = &join_group;
        assert_eq!(m.delta(join_group, &dis, &stats).unwrap(), 250.0);
        let mut attr_group = join_group.clone();
        attr_group.members = [crate::rml::AssertionId(3)].into();
        let attr_group = &attr_group;
        assert_eq!(m.delta(attr_group, &dis, &stats).unwrap(), 10_000.0);

        stats.sources.remove("b");
        assert!(matches!(m.delta(join_group, &dis, &stats), Err(CostError::MissingStats(_))));
        let measured = CostModel {
            mode: CostMode::MeasuredSeconds,
            ..CostModel::default()
        };
        assert!(matches!(
            measured.delta(attr_group, &dis, &stats),
            Err(CostError::MissingMeasurement(_))
        ));
    }

    #[test]
    fn fu_unfolds_and_conserves() {
        let m = CostModel::default();
        let leaves: HashMap<_, _> = [(GroupId(1), leaf(10.0, 3.0)), (GroupId(2), leaf(20.0, 5.0))].into();
        let t = BushyTree::node(UnionOp::Ndr, BushyTree::Leaf(GroupId(1)), BushyTree::Leaf(GroupId(2)));
        let e = m.fu(&t, &leaves).unwrap();
        assert_eq!(e.value, 38.0);
        assert_eq!(e.breakdown.values().sum::<f64>(), e.value);
        assert_eq!(m.fu(&BushyTree::Leaf(GroupId(1)), &leaves).unwrap().value, 10.0);
    }

    #[test]
    fn dr_discounts_by_duplicate_rate() {
        let m = CostModel::default();
        let with_dup = |s: &str| LeafProfile {
            delta: 0.0,
            cardinality: 100.0,
            sources: vec![(s.to_string(), 0.25)],
        };
        let leaves: HashMap<_, _> = [(GroupId(1), with_dup("a")), (GroupId(2), with_dup("b"))].into();
        let t = BushyTree::node(UnionOp::Dr, BushyTree::Leaf(GroupId(1)), BushyTree::Leaf(GroupId(2)));
        assert_eq!(m.fu(&t, &leaves).unwrap().cardinality, 150.0);
    }
}
