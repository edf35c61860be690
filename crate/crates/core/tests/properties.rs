use std::collections::{BTreeMap, BTreeSet, HashMap};

use kgplan::cost::{Coefficients, CostModel, LeafProfile, Stats};
use kgplan::emit::{gamma, EngineProfile};
use kgplan::graph::build_plan_graph;
use kgplan::materialize::triples::parse_line;
use kgplan::materialize::{decode_base36, encode_base36, execute_tree, ExecOptions};
use kgplan::oracle::{generate, naive_kg, GeneratorConfig};
use kgplan::partition::{merge_to_fixed_point, partition, GroupId};
use kgplan::planner::generate_bushy_tree;
use kgplan::rml::{load_mapping_files, DataIntegrationSystem, PredicateKey};
use kgplan::tree::{BushyTree, UnionOp};
use proptest::prelude::*;

fn random_dis(seed: u64) -> (tempfile::TempDir, DataIntegrationSystem) {
    let dir = tempfile::tempdir().unwrap();
    let g = generate(&GeneratorConfig::default(), seed, dir.path()).unwrap();
    let dis = load_mapping_files(&[g.mapping], None).unwrap();
    (dir, dis)
}

fn key(s: String) -> PredicateKey {
    PredicateKey::Property(s)
}

/// Random tree over leaves 1..=n: repeatedly join two random live subtrees.
fn random_tree(n: u32, picks: &[(usize, usize)]) -> BushyTree {
    let mut live: Vec<BushyTree> = (1..=n).map(|i| BushyTree::Leaf(GroupId(i))).collect();
    let mut k = 0;
    while live.len() > 1 {
        let (a, b) = picks[k % picks.len()];
        k += 1;
        let i = a % live.len();
        let l = live.remove(i);
        let j = b % live.len();
        let r = live.remove(j);
        live.push(BushyTree::node(UnionOp::Ndr, l, r));
    }
    live.pop().unwrap()
}

fn profiles(cards: &[(u32, f64)]) -> HashMap<GroupId, LeafProfile> {
    cards
        .iter()
        .enumerate()
        .map(|(i, &(c, d))| {
            (
                GroupId(i as u32 + 1),
                LeafProfile {
                    delta: f64::from(c),
                    cardinality: f64::from(c),
                    sources: vec![(format!("S{}", i + 1), d)],
                },
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partitions_cover_and_merge_is_idempotent(seed in any::<u64>()) {
        let (_d, dis) = random_dis(seed);
        let p = partition(&dis);
        prop_assert!(p.check_laws(&dis).is_ok(), "{:?}", p.check_laws(&dis));
        prop_assert_eq!(merge_to_fixed_point(&p, &dis), p.clone());
        for g in &p.groups {
            prop_assert!(g.source_footprint.len() <= 2 || g.parts.len() > 1);
        }
    }

    #[test]
    fn plan_graph_labels_are_symmetric_intersections(seed in any::<u64>()) {
        let (_d, dis) = random_dis(seed);
        let p = partition(&dis);
        let g = build_plan_graph(&p);
        for a in &p.groups {
            for b in &p.groups {
                if a.id == b.id {
                    continue;
                }
                let common: BTreeSet<_> = a.defined_predicates.intersection(&b.defined_predicates).cloned().collect();
                prop_assert_eq!(g.label(a.id, b.id), g.label(b.id, a.id));
                prop_assert_eq!(g.label(a.id, b.id).cloned(), (!common.is_empty()).then_some(common));
            }
        }
    }

    #[test]
    fn greedy_tree_keeps_leaves_and_is_sound(seed in any::<u64>()) {
        let (_d, dis) = random_dis(seed);
        let p = partition(&dis);
        let out = generate_bushy_tree(&build_plan_graph(&p)).unwrap();
        let mut leaves = out.tree.leaves();
        leaves.sort();
        prop_assert_eq!(leaves, p.groups.iter().map(|g| g.id).collect::<Vec<_>>());
        prop_assert_eq!(out.hypernodes_created, 2 * p.len() - 1);
        let keys = |g: GroupId| &p.group(g).unwrap().defined_predicates;
        prop_assert_eq!(out.tree.with_overlap_ops(&keys), out.tree);
    }

    #[test]
    fn planned_execution_matches_nested_loop_oracle(seed in any::<u64>(), compress in any::<bool>()) {
        let (d, dis) = random_dis(seed);
        let p = partition(&dis);
        let t = generate_bushy_tree(&build_plan_graph(&p)).unwrap().tree;
        let out = d.path().join("kg.nt");
        let opts = ExecOptions { compress, ..ExecOptions::default() };
        execute_tree(Some(&t), &p, &dis, &d.path().join("run"), &out, &opts).unwrap();
        let got = std::fs::read_to_string(&out).unwrap();
        prop_assert_eq!(&got, &naive_kg(&dis).unwrap());
        for line in got.lines() {
            prop_assert!(parse_line(line).is_some(), "{}", line);
        }
    }

    #[test]
    fn cost_is_conserved_and_monotone(
        cards in prop::collection::vec((0u32..10_000, 0.0f64..0.9), 2..8),
        picks in prop::collection::vec((any::<usize>(), any::<usize>()), 1..8),
        overlap in any::<bool>(),
    ) {
        let n = cards.len() as u32;
        let leaves = profiles(&cards);
        let sets: BTreeMap<GroupId, BTreeSet<PredicateKey>> = (1..=n)
            .map(|i| {
                let mut s: BTreeSet<_> = [key(format!("p{i}"))].into();
                if overlap && i <= 2 {
                    s.insert(key("shared".into()));
                }
                (GroupId(i), s)
            })
            .collect();
        let model = CostModel::default();
        let t = random_tree(n, &picks).with_overlap_ops(&|g| &sets[&g]);
        let c = model.fu(&t, &leaves).unwrap();
        let sum: f64 = c.breakdown.values().sum();
        prop_assert!((sum - c.value).abs() <= 1e-9 * c.value.max(1.0));
        let smaller = random_tree(n - 1, &picks);
        let grown = BushyTree::node(UnionOp::Ndr, smaller.clone(), BushyTree::Leaf(GroupId(n)));
        prop_assert!(model.fu(&grown, &leaves).unwrap().value >= model.fu(&smaller, &leaves).unwrap().value);
    }

    #[test]
    fn eager_duplicate_removal_is_never_worse(
        cards in prop::collection::vec((0u32..10_000, 0.0f64..0.9), 2..8),
        picks in prop::collection::vec((any::<usize>(), any::<usize>()), 1..8),
        pair in (any::<usize>(), any::<usize>()),
        lin in 0.0f64..4.0,
        extra in 0.0f64..4.0,
    ) {
        let n = cards.len() as u32;
        let a = pair.0 as u32 % n + 1;
        let b = (a + pair.1 as u32 % (n - 1)) % n + 1;
        let sets: BTreeMap<GroupId, BTreeSet<PredicateKey>> = (1..=n)
            .map(|i| {
                let mut s: BTreeSet<_> = [key(format!("p{i}"))].into();
                if i == a || i == b {
                    s.insert(key("shared".into()));
                }
                (GroupId(i), s)
            })
            .collect();
        let keys = |g: GroupId| &sets[&g];
        let model = CostModel {
            coefficients: Coefficients {
                linear_union_cost: lin,
                dedup_cost_factor: lin + extra,
                ..Coefficients::default()
            },
            ..CostModel::default()
        };
        let leaves = profiles(&cards);
        let shape = random_tree(n, &picks);
        let eager = shape.with_overlap_ops(&keys);
        let lazy = shape.lazy(&keys);
        prop_assert_eq!(eager.count_ops(UnionOp::Dr), 1);
        let (e, l) = (model.fu(&eager, &leaves).unwrap().value, model.fu(&lazy, &leaves).unwrap().value);
        prop_assert!(e <= l + 1e-9 * l.max(1.0), "eager {} lazy {}", e, l);
    }

    #[test]
    fn base36_round_trips(n in any::<u64>()) {
        prop_assert_eq!(decode_base36(&encode_base36(n)), Some(n));
    }

    #[test]
    fn emitted_script_counts_nodes(
        n in 1u32..10,
        picks in prop::collection::vec((any::<usize>(), any::<usize>()), 1..8),
        dr in prop::collection::vec(any::<bool>(), 10),
    ) {
        let mut sets: BTreeMap<GroupId, BTreeSet<PredicateKey>> = BTreeMap::new();
        for i in 1..=n {
            let mut s: BTreeSet<_> = [key(format!("p{i}"))].into();
            if dr[i as usize % dr.len()] {
                s.insert(key("shared".into()));
            }
            sets.insert(GroupId(i), s);
        }
        let t = random_tree(n, &picks).with_overlap_ops(&|g| &sets[&g]);
        let files = (1..=n).map(|i| (GroupId(i), format!("/m/G{i}.ttl").into())).collect();
        let profile = EngineProfile::builtin("rmlmapper").unwrap();
        let run = std::path::Path::new("/run");
        let a = gamma(&t, &profile, &files, run, std::path::Path::new("/out.nt")).unwrap();
        let b = gamma(&t, &profile, &files, run, std::path::Path::new("/out.nt")).unwrap();
        prop_assert_eq!(&a.script, &b.script);
        let count = |needle: &str| a.script.lines().filter(|l| l.starts_with(needle)).count();
        prop_assert_eq!(count("timeout "), n as usize);
        prop_assert_eq!(count("sort -u "), t.count_ops(UnionOp::Dr));
        prop_assert_eq!(count("cat "), t.count_ops(UnionOp::Ndr));
        prop_assert_eq!(count("mv "), 1);
    }
}

#[test]
fn stats_see_duplicate_rows() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/motivating");
    let dis = load_mapping_files(&[dir.join("mapping.ttl")], None).unwrap();
    let stats = Stats::from_sources(&dis).unwrap();
    assert!(stats.sources["S5"].duplicate_rate > 0.0);
    assert_eq!(stats.sources["S3"].duplicate_rate, 0.0);
}
