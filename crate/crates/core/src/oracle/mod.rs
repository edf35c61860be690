//! Brute-force checks over the whole bushy-tree space of a partitioning.

pub mod generator;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::cost::{CostError, CostEstimate, CostModel, LeafProfile};
use crate::graph::build_plan_graph;
use crate::materialize::triples::{self, IndexedRow};
use crate::materialize::{execute_tree, ExecOptions, MaterializeError};
use crate::partition::{theorem1_conditions, GroupId, PartitionSet};
use crate::planner::generate_bushy_tree;
use crate::rml::{vocab, AssertionKind, AssertionObject, DataIntegrationSystem, PredicateKey};
use crate::tree::{BushyTree, UnionOp};

pub use generator::{generate, generate_benchmark, GeneratedDis, GeneratorConfig};

pub const DEFAULT_ENUMERATION_LIMIT: usize = 7;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("{n} groups exceed the enumeration limit of {limit}")]
    TooManyGroups { n: usize, limit: usize },
    #[error("nothing to enumerate")]
    Empty,
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("tree {tree}: {source}")]
    Execution {
        tree: String,
        #[source]
        source: MaterializeError,
    },
    #[error("source {source_id}: {message}")]
    Source { source_id: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Number of ordered full binary trees over `n` labelled leaves,
/// `(2n-2)! / (n-1)!`.
pub fn plan_space_size(n: usize) -> u128 {
    if n == 0 {
        return 0;
    }
    (n as u128..=(2 * n - 2) as u128).product()
}

#[derive(Debug, Clone)]
enum Shape {
    Leaf,
    Node(Box<Shape>, Box<Shape>),
}

fn shapes(n: usize, memo: &mut HashMap<usize, Vec<Shape>>) -> Vec<Shape> {
    if let Some(s) = memo.get(&n) {
        return s.clone();
    }
    let out = if n == 1 {
        vec![Shape::Leaf]
    } else {
        let mut out = Vec::new();
        for k in 1..n {
            let left = shapes(k, memo);
            let right = shapes(n - k, memo);
            for l in &left {
                for r in &right {
                    out.push(Shape::Node(Box::new(l.clone()), Box::new(r.clone())));
                }
            }
        }
        out
    };
    memo.insert(n, out.clone());
    out
}

fn fill(shape: &Shape, leaves: &mut impl Iterator<Item = GroupId>) -> BushyTree {
    match shape {
        Shape::Leaf => BushyTree::Leaf(leaves.next().expect("leaf count matches shape")),
        Shape::Node(l, r) => {
            let l = fill(l, leaves);
            let r = fill(r, leaves);
            BushyTree::node(UnionOp::Ndr, l, r)
        }
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else { return false };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot has a successor");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Every ordered bushy tree over a fixed set of groups.
#[derive(Debug, Clone)]
pub struct PlanSpace {
    pub groups: Vec<GroupId>,
    pub count: u128,
    keys: BTreeMap<GroupId, BTreeSet<PredicateKey>>,
    shapes: Vec<Shape>,
}

impl PlanSpace {
    pub fn new(groups: Vec<(GroupId, BTreeSet<PredicateKey>)>, limit: usize) -> Result<PlanSpace, OracleError> {
        let n = groups.len();
        if n == 0 {
            return Err(OracleError::Empty);
        }
        if n > limit {
            return Err(OracleError::TooManyGroups { n, limit });
        }
        Ok(PlanSpace {
            groups: groups.iter().map(|(g, _)| *g).collect(),
            count: plan_space_size(n),
            shapes: shapes(n, &mut HashMap::new()),
            keys: groups.into_iter().collect(),
        })
    }

    /// Trees in enumeration order: leaf permutations in lexicographic order,
    /// and for each permutation every shape. Unions are DR exactly where
    /// the two sides share a predicate.
    pub fn trees(&self) -> impl Iterator<Item = BushyTree> + '_ {
        let mut perm: Vec<usize> = (0..self.groups.len()).collect();
        let mut shape = 0;
        let mut done = false;
        std::iter::from_fn(move || {
            if done {
                return None;
            }
            let mut leaves = perm.iter().map(|&i| self.groups[i]);
            let t = fill(&self.shapes[shape], &mut leaves).with_overlap_ops(&|g| &self.keys[&g]);
            shape += 1;
            if shape == self.shapes.len() {
                shape = 0;
                done = !next_permutation(&mut perm);
            }
            Some(t)
        })
    }
}

pub fn enumerate_trees(p: &PartitionSet, limit: usize) -> Result<PlanSpace, OracleError> {
    PlanSpace::new(p.groups.iter().map(|g| (g.id, g.defined_predicates.clone())).collect(), limit)
}

/// Exhaustive minimum of `fu`; the first minimizer in enumeration order wins.
pub fn optimal_plan(
    space: &PlanSpace,
    model: &CostModel,
    leaves: &HashMap<GroupId, LeafProfile>,
) -> Result<(BushyTree, CostEstimate), OracleError> {
    let mut best: Option<(BushyTree, CostEstimate)> = None;
    for t in space.trees() {
        let c = model.fu(&t, leaves)?;
        if best.as_ref().is_none_or(|(_, b)| c.value < b.value) {
            best = Some((t, c));
        }
    }
    best.ok_or(OracleError::Empty)
}

struct Table {
    header: HashMap<String, usize>,
    rows: Vec<Vec<String>>,
}

fn read_table(dis: &DataIntegrationSystem, id: &str) -> Result<Table, OracleError> {
    let err = |message: String| OracleError::Source {
        source_id: id.to_string(),
        message,
    };
    let source = dis.source(id).ok_or_else(|| err("unknown source".into()))?;
    let mut r = csv::Reader::from_path(&source.path).map_err(|e| err(e.to_string()))?;
    let header = r
        .headers()
        .map_err(|e| err(e.to_string()))?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_string(), i))
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(|e| err(e.to_string()))?.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows })
}

/// The knowledge graph of `dis` computed without any partitioning: every
/// assertion evaluated by nested loops, the result as canonical N-Triples.
pub fn naive_kg(dis: &DataIntegrationSystem) -> Result<String, OracleError> {
    let mut tables: BTreeMap<&str, Table> = BTreeMap::new();
    for s in &dis.sources {
        tables.insert(&s.id, read_table(dis, &s.id)?);
    }
    let mut out: BTreeSet<String> = BTreeSet::new();
    for a in &dis.assertions {
        let child = &tables[a.child_source()];
        let predicate = if a.kind == AssertionKind::Concept {
            triples::iri(vocab::RDF_TYPE)
        } else {
            triples::iri(&a.predicate)
        };
        for cells in &child.rows {
            let row = IndexedRow {
                header: &child.header,
                cells,
            };
            let Some(s) = triples::render(&a.subject, &row) else { continue };
            match (&a.object, &a.join) {
                (AssertionObject::Term(f), _) => {
                    if let Some(o) = triples::render(f, &row) {
                        out.insert(triples::line(&s, &predicate, &o));
                    }
                }
                (AssertionObject::Assertion(r), None) => {
                    if let Some(o) = triples::render(&dis.assertion(*r).subject, &row) {
                        out.insert(triples::line(&s, &predicate, &o));
                    }
                }
                (AssertionObject::Assertion(r), Some(join)) => {
                    let parent = &tables[a.parent_source().unwrap_or(a.child_source())];
                    let Some(cv) = row.cells.get(child.header[&join.child_attribute]) else { continue };
                    for pcells in &parent.rows {
                        let pv = &pcells[parent.header[&join.parent_attribute]];
                        if cv.is_empty() || cv != pv {
                            continue;
                        }
                        let prow = IndexedRow {
                            header: &parent.header,
                            cells: pcells,
                        };
                        if let Some(o) = triples::render(&dis.assertion(*r).subject, &prow) {
                            out.insert(triples::line(&s, &predicate, &o));
                        }
                    }
                }
            }
        }
    }
    let mut text = String::new();
    for l in out {
        text.push_str(&l);
        text.push('\n');
    }
    Ok(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Difference {
    pub tree: String,
    /// First line where the tree's output and the oracle's differ.
    pub line: usize,
    pub expected: Option<String>,
    pub actual: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub trees_checked: usize,
    pub equivalent: bool,
    pub first_difference: Option<Difference>,
}

fn first_difference(tree: &BushyTree, expected: &str, actual: &str) -> Option<Difference> {
    if expected == actual {
        return None;
    }
    let (mut e, mut a) = (expected.lines(), actual.lines());
    let mut line = 1;
    loop {
        match (e.next(), a.next()) {
            (x, y) if x == y && x.is_some() => line += 1,
            (x, y) => {
                return Some(Difference {
                    tree: tree.to_string(),
                    line,
                    expected: x.map(str::to_string),
                    actual: y.map(str::to_string),
                })
            }
        }
    }
}

/// Executes every tree of `space` and compares each canonical output with
/// the unpartitioned oracle. Trees are spread over `workers` threads, each
/// in its own run directory under `work_dir`.
pub fn check_equivalence(
    space: &PlanSpace,
    p: &PartitionSet,
    dis: &DataIntegrationSystem,
    work_dir: &Path,
    workers: usize,
) -> Result<EquivalenceReport, OracleError> {
    let expected = naive_kg(dis)?;
    let trees: Vec<BushyTree> = space.trees().collect();
    let next = AtomicUsize::new(0);
    let failures: Mutex<Vec<(usize, Result<Difference, OracleError>)>> = Mutex::new(Vec::new());
    let opts = ExecOptions {
        parallelism: 1,
        ..ExecOptions::default()
    };
    std::thread::scope(|scope| {
        for w in 0..workers.max(1).min(trees.len()) {
            let (trees, next, failures, expected, opts) = (&trees, &next, &failures, &expected, &opts);
            scope.spawn(move || {
                let dir = work_dir.join(format!("worker{w}"));
                loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(t) = trees.get(i) else { break };
                    let out = dir.join("kg.nt");
                    let result = execute_tree(Some(t), p, dis, &dir.join("run"), &out, opts)
                        .map_err(|source| OracleError::Execution {
                            tree: t.to_string(),
                            source,
                        })
                        .and_then(|_| Ok(std::fs::read_to_string(&out)?));
                    let failure = match result {
                        Ok(actual) => first_difference(t, expected, &actual).map(Ok),
                        Err(e) => Some(Err(e)),
                    };
                    let _ = std::fs::remove_dir_all(dir.join("run"));
                    if let Some(f) = failure {
                        failures.lock().expect("failure lock").push((i, f));
                    }
                }
            });
        }
    });
    let mut failures = failures.into_inner().expect("failure lock");
    failures.sort_by_key(|(i, _)| *i);
    match failures.into_iter().next() {
        None => Ok(EquivalenceReport {
            trees_checked: trees.len(),
            equivalent: true,
            first_difference: None,
        }),
        Some((_, Ok(d))) => Ok(EquivalenceReport {
            trees_checked: trees.len(),
            equivalent: false,
            first_difference: Some(d),
        }),
        Some((_, Err(e))) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub n: usize,
    pub tree_count: u128,
    pub equivalent: bool,
    pub greedy_cost: f64,
    pub optimal_cost: f64,
    pub gap: f64,
    pub theorem1_conditions_met: bool,
    pub greedy_tree: String,
    pub optimal_tree: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_difference: Option<Difference>,
}

pub struct VerifyOptions<'a> {
    pub limit: usize,
    pub workers: usize,
    pub work_dir: &'a Path,
    /// Skip plan executions and only compare costs.
    pub cost_only: bool,
}

/// Greedy cost vs the exhaustive optimum, plus all-plans equivalence.
pub fn verify(
    dis: &DataIntegrationSystem,
    p: &PartitionSet,
    model: &CostModel,
    leaves: &HashMap<GroupId, LeafProfile>,
    opts: &VerifyOptions<'_>,
) -> Result<VerifyReport, OracleError> {
    let space = enumerate_trees(p, opts.limit)?;
    let greedy = generate_bushy_tree(&build_plan_graph(p)).ok_or(OracleError::Empty)?.tree;
    let greedy_cost = model.fu(&greedy, leaves)?.value;
    let (optimal, best) = optimal_plan(&space, model, leaves)?;
    let equivalence = if opts.cost_only {
        None
    } else {
        Some(check_equivalence(&space, p, dis, opts.work_dir, opts.workers)?)
    };
    Ok(VerifyReport {
        n: space.groups.len(),
        tree_count: space.count,
        equivalent: equivalence.as_ref().is_none_or(|e| e.equivalent),
        greedy_cost,
        optimal_cost: best.value,
        gap: greedy_cost - best.value,
        theorem1_conditions_met: theorem1_conditions(dis).met,
        greedy_tree: greedy.to_string(),
        optimal_tree: optimal.to_string(),
        first_difference: equivalence.and_then(|e| e.first_difference),
    })
}
