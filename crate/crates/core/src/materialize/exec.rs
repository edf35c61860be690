use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::base36::ResourceDictionary;
use super::extsort::{self, Run, Spiller};
use super::triples::{self, IndexedRow};
use super::MaterializeError;
use crate::partition::{AssertionGroup, GroupId, PartitionSet};
use crate::rml::{vocab, AssertionKind, AssertionObject, DataIntegrationSystem, PredicateKey, TemplateFunction};
use crate::tree::{BushyTree, FlatKind, UnionOp};

pub const DEFAULT_MEMORY_THRESHOLD: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct ExecOptions {
    pub parallelism: usize,
    /// Per-leaf wall-time limit.
    pub timeout: Option<Duration>,
    /// Dictionary-encode resources in intermediate files.
    pub compress: bool,
    /// Lines held in memory before a sort spills to disk.
    pub memory_threshold: usize,
    /// Artificial delay before a leaf starts working, for fault injection.
    pub inject_delay: BTreeMap<GroupId, Duration>,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            parallelism: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            timeout: None,
            compress: false,
            memory_threshold: DEFAULT_MEMORY_THRESHOLD,
            inject_delay: BTreeMap::new(),
        }
    }
}

/// Triples in a file, as one or more sorted, duplicate-free runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleSet {
    pub path: PathBuf,
    pub cardinality: u64,
    pub runs: Vec<Run>,
    /// The whole file is one sorted, duplicate-free run.
    pub sorted: bool,
    pub keys: BTreeSet<PredicateKey>,
}

impl TripleSet {
    fn single(path: PathBuf, run: Run, keys: BTreeSet<PredicateKey>) -> TripleSet {
        TripleSet {
            path,
            cardinality: run.lines,
            runs: vec![run],
            sorted: true,
            keys,
        }
    }

    fn inputs(&self) -> Vec<(PathBuf, Run)> {
        self.runs.iter().map(|r| (self.path.clone(), *r)).collect()
    }
}

/// Optional dictionary encoding of intermediate lines.
pub struct Codec {
    dict: Option<Mutex<ResourceDictionary>>,
}

impl Codec {
    pub fn new(compress: bool) -> Codec {
        Codec {
            dict: compress.then(|| Mutex::new(ResourceDictionary::new())),
        }
    }

    fn line(&self, s: &str, p: &str, o: &str) -> String {
        match &self.dict {
            None => triples::line(s, p, o),
            Some(d) => {
                let mut d = d.lock().expect("dictionary lock");
                format!("{} {} {}", d.encode(s), d.encode(p), d.encode(o))
            }
        }
    }

    fn decode(&self, line: &str) -> Result<String, MaterializeError> {
        match &self.dict {
            None => Ok(line.to_string()),
            Some(d) => {
                let d = d.lock().expect("dictionary lock");
                let mut parts = line.split(' ').map(|code| d.decode(code));
                match (parts.next(), parts.next(), parts.next(), parts.next()) {
                    (Some(Some(s)), Some(Some(p)), Some(Some(o)), None) => Ok(triples::line(s, p, o)),
                    _ => Err(MaterializeError::Corrupt(format!("undecodable line {line:?}"))),
                }
            }
        }
    }
}

struct Loaded {
    header: HashMap<String, usize>,
    rows: Vec<Vec<String>>,
}

fn load_source(dis: &DataIntegrationSystem, id: &str) -> Result<Loaded, MaterializeError> {
    let source = dis.source(id).ok_or_else(|| MaterializeError::UnknownSource(id.to_string()))?;
    let err = |e: csv::Error| MaterializeError::Source {
        path: source.path.clone(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(&source.path)
        .map_err(err)?;
    let header: HashMap<String, usize> = reader
        .headers()
        .map_err(err)?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_string(), i))
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        rows.push(rec.map_err(err)?.iter().map(str::to_string).collect());
    }
    Ok(Loaded { header, rows })
}

/// Parsed sources shared by the leaves of one run, each read at most once.
#[derive(Default)]
pub struct SourceCache {
    slots: Mutex<HashMap<String, Arc<Mutex<Option<Arc<Loaded>>>>>>,
}

impl SourceCache {
    fn get(&self, dis: &DataIntegrationSystem, id: &str) -> Result<Arc<Loaded>, MaterializeError> {
        let slot = self.slots.lock().expect("cache poisoned").entry(id.to_string()).or_default().clone();
        let mut slot = slot.lock().expect("cache poisoned");
        if let Some(l) = &*slot {
            return Ok(l.clone());
        }
        let l = Arc::new(load_source(dis, id)?);
        *slot = Some(l.clone());
        Ok(l)
    }
}

struct Deadline(Option<Instant>);

impl Deadline {
    fn check(&self) -> Result<(), MaterializeError> {
        match self.0 {
            Some(at) if Instant::now() >= at => Err(MaterializeError::Timeout),
            _ => Ok(()),
        }
    }
}

pub struct LeafContext<'a> {
    pub name: &'a str,
    pub run_dir: &'a Path,
    pub codec: &'a Codec,
    pub memory_threshold: usize,
    pub sources: Option<&'a SourceCache>,
    deadline: Deadline,
}

impl<'a> LeafContext<'a> {
    pub fn new(name: &'a str, run_dir: &'a Path, codec: &'a Codec, memory_threshold: usize) -> Self {
        LeafContext {
            name,
            run_dir,
            codec,
            memory_threshold,
            sources: None,
            deadline: Deadline(None),
        }
    }
}

enum Object<'a> {
    /// Rendered over the same row as the subject.
    SameRow(&'a TemplateFunction),
    /// Parent subjects by join value; `column` is the child's join column.
    Join { column: usize, index: HashMap<&'a str, Vec<String>> },
}

struct Output<'a> {
    subject: usize,
    predicate: String,
    object: Object<'a>,
}

struct Scan<'a> {
    source: &'a str,
    subjects: Vec<&'a TemplateFunction>,
    outputs: Vec<Output<'a>>,
}

/// Executes every assertion the group runs and writes the sorted,
/// deduplicated result to `<run_dir>/<name>.nt`.
pub fn materialize_group(
    g: &AssertionGroup,
    dis: &DataIntegrationSystem,
    ctx: &LeafContext<'_>,
) -> Result<TripleSet, MaterializeError> {
    let mut needed: Vec<&str> = Vec::new();
    for a in g.executed().map(|id| dis.assertion(id)) {
        for s in &a.sources {
            if !needed.contains(&s.as_str()) {
                needed.push(s);
            }
        }
    }
    let mut loaded: HashMap<&str, Arc<Loaded>> = HashMap::new();
    for s in needed {
        let l = match ctx.sources {
            Some(cache) => cache.get(dis, s)?,
            None => Arc::new(load_source(dis, s)?),
        };
        loaded.insert(s, l);
    }
    let check_columns = |source: &str, columns: &mut dyn Iterator<Item = &str>| -> Result<(), MaterializeError> {
        let l = &loaded[source];
        for c in columns {
            if !l.header.contains_key(c) {
                return Err(MaterializeError::MissingColumn {
                    source_id: source.to_string(),
                    column: c.to_string(),
                });
            }
        }
        Ok(())
    };

    let tmp = ctx.run_dir.join("tmp");
    let mut spill = Spiller::new(ctx.memory_threshold, &tmp);
    let rdf_type = triples::iri(vocab::RDF_TYPE);
    let mut ticks = 0usize;
    let mut tick = |deadline: &Deadline| -> Result<(), MaterializeError> {
        ticks += 1;
        if ticks % 1024 == 0 {
            deadline.check()?;
        }
        Ok(())
    };
    ctx.deadline.check()?;

    // One scan per child source; each distinct subject template is rendered
    // once per row and shared by the assertions that use it.
    let mut scans: Vec<Scan<'_>> = Vec::new();
    for a in g.executed().map(|id| dis.assertion(id)) {
        let source = a.child_source();
        check_columns(source, &mut a.subject.references())?;
        let pos = match scans.iter().position(|s| s.source == source) {
            Some(p) => p,
            None => {
                scans.push(Scan {
                    source,
                    subjects: Vec::new(),
                    outputs: Vec::new(),
                });
                scans.len() - 1
            }
        };
        let object = match (&a.object, &a.join) {
            (AssertionObject::Term(f), _) => {
                check_columns(source, &mut f.references())?;
                Object::SameRow(f)
            }
            (AssertionObject::Assertion(r), None) => {
                let f = &dis.assertion(*r).subject;
                check_columns(source, &mut f.references())?;
                Object::SameRow(f)
            }
            (AssertionObject::Assertion(r), Some(join)) => {
                let parent_id = a.parent_source().unwrap_or(source);
                let parent_src = &loaded[parent_id];
                let parent = dis.assertion(*r);
                check_columns(parent_id, &mut parent.subject.references())?;
                check_columns(parent_id, &mut std::iter::once(join.parent_attribute.as_str()))?;
                check_columns(source, &mut std::iter::once(join.child_attribute.as_str()))?;
                // build on the parent, probe with the child
                let pcol = parent_src.header[&join.parent_attribute];
                let mut index: HashMap<&str, Vec<String>> = HashMap::new();
                for cells in &parent_src.rows {
                    tick(&ctx.deadline)?;
                    let key = cells[pcol].as_str();
                    if key.is_empty() {
                        continue;
                    }
                    let row = IndexedRow {
                        header: &parent_src.header,
                        cells,
                    };
                    if let Some(o) = triples::render(&parent.subject, &row) {
                        index.entry(key).or_default().push(o);
                    }
                }
                for objects in index.values_mut() {
                    objects.sort_unstable();
                    objects.dedup();
                }
                Object::Join {
                    column: loaded[source].header[&join.child_attribute],
                    index,
                }
            }
        };
        let scan = &mut scans[pos];
        let subject = match scan.subjects.iter().position(|f| *f == &a.subject) {
            Some(i) => i,
            None => {
                scan.subjects.push(&a.subject);
                scan.subjects.len() - 1
            }
        };
        let predicate = if a.kind == AssertionKind::Concept {
            rdf_type.clone()
        } else {
            triples::iri(&a.predicate)
        };
        scan.outputs.push(Output {
            subject,
            predicate,
            object,
        });
    }

    for scan in &scans {
        let child = &loaded[scan.source];
        let mut subjects: Vec<Option<Option<String>>> = vec![None; scan.subjects.len()];
        for cells in &child.rows {
            tick(&ctx.deadline)?;
            let row = IndexedRow {
                header: &child.header,
                cells,
            };
            subjects.iter_mut().for_each(|s| *s = None);
            for out in &scan.outputs {
                let Some(s) = subjects[out.subject]
                    .get_or_insert_with(|| triples::render(scan.subjects[out.subject], &row))
                    .as_deref()
                else {
                    continue;
                };
                match &out.object {
                    Object::SameRow(f) => {
                        if let Some(o) = triples::render(f, &row) {
                            spill.push(ctx.codec.line(s, &out.predicate, &o))?;
                        }
                    }
                    Object::Join { column, index } => {
                        for o in index.get(cells[*column].as_str()).into_iter().flatten() {
                            spill.push(ctx.codec.line(s, &out.predicate, o))?;
                        }
                    }
                }
            }
        }
    }
    ctx.deadline.check()?;
    let path = ctx.run_dir.join(format!("{}.nt", ctx.name));
    let run = spill.finish(&path)?;
    Ok(TripleSet::single(path, run, g.defined_predicates.clone()))
}

/// DR merges all runs and drops duplicates; NDR concatenates, after checking
/// that the two sides really are disjoint when their keys overlap.
pub fn union_triples(
    op: UnionOp,
    left: &TripleSet,
    right: &TripleSet,
    out: &Path,
    codec: &Codec,
) -> Result<TripleSet, MaterializeError> {
    let mut keys = left.keys.clone();
    keys.extend(right.keys.iter().cloned());
    match op {
        UnionOp::Dr => {
            let mut inputs = left.inputs();
            inputs.extend(right.inputs());
            let run = extsort::merge_runs(&inputs, out)?;
            Ok(TripleSet::single(out.to_path_buf(), run, keys))
        }
        UnionOp::Ndr => {
            if !left.keys.is_disjoint(&right.keys) {
                if let Some(line) = first_common_line(left, right)? {
                    return Err(MaterializeError::Soundness {
                        triple: codec.decode(&line)?,
                    });
                }
            }
            let mut w = BufWriter::new(File::create(out)?);
            let mut runs = Vec::with_capacity(left.runs.len() + right.runs.len());
            let mut offset = 0;
            for side in [left, right] {
                let mut f = File::open(&side.path)?;
                let copied = io::copy(&mut f, &mut w)?;
                runs.extend(side.runs.iter().map(|r| Run {
                    offset: r.offset + offset,
                    ..*r
                }));
                offset += copied;
            }
            w.flush()?;
            Ok(TripleSet {
                path: out.to_path_buf(),
                cardinality: left.cardinality + right.cardinality,
                sorted: runs.len() <= 1,
                runs,
                keys,
            })
        }
    }
}

fn first_common_line(a: &TripleSet, b: &TripleSet) -> Result<Option<String>, MaterializeError> {
    let (small, large) = if a.cardinality <= b.cardinality { (a, b) } else { (b, a) };
    let mut seen = HashSet::new();
    extsort::read_runs(&small.inputs(), |l| {
        seen.insert(l);
        Ok(())
    })?;
    let mut found = None;
    extsort::read_runs(&large.inputs(), |l| {
        if found.is_none() && seen.contains(&l) {
            found = Some(l);
        }
        Ok(())
    })?;
    Ok(found)
}

/// Writes the canonical form of `set` (decoded, sorted, no duplicates).
pub fn canonicalize(
    set: Option<&TripleSet>,
    out: &Path,
    codec: &Codec,
    tmp_dir: &Path,
    memory_threshold: usize,
) -> Result<u64, MaterializeError> {
    let Some(set) = set else {
        File::create(out)?;
        return Ok(0);
    };
    if codec.dict.is_none() {
        return Ok(extsort::merge_runs(&set.inputs(), out)?.lines);
    }
    let mut spill = Spiller::new(memory_threshold, tmp_dir);
    let mut failure = None;
    extsort::read_runs(&set.inputs(), |l| {
        match codec.decode(&l) {
            Ok(d) => spill.push(d)?,
            Err(e) => failure = Some(e),
        }
        Ok(())
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(spill.finish(out)?.lines)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafStatus {
    Completed,
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafReport {
    pub node: String,
    pub group: GroupId,
    pub seconds: f64,
    pub triples: u64,
    pub status: LeafStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnionReport {
    pub node: String,
    pub op: UnionOp,
    pub seconds: f64,
    pub triples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub leaves: Vec<LeafReport>,
    pub unions: Vec<UnionReport>,
    pub leaf_phase_seconds: f64,
    pub union_phase_seconds: f64,
    pub total_seconds: f64,
    pub peak_parallelism: usize,
    pub final_triples: u64,
    pub completion_percent: f64,
    pub complete: bool,
    pub output: PathBuf,
}

enum LeafOutcome {
    Done(TripleSet, f64),
    TimedOut(f64),
    Failed(MaterializeError),
}

/// Runs `t` over the groups of `p`: leaves in parallel, then unions bottom-up,
/// then the canonical result into `output`. A leaf that times out is left
/// out and the run finishes with the surviving subtrees.
pub fn execute_tree(
    t: Option<&BushyTree>,
    p: &PartitionSet,
    dis: &DataIntegrationSystem,
    run_dir: &Path,
    output: &Path,
    opts: &ExecOptions,
) -> Result<ExecutionReport, MaterializeError> {
    let started = Instant::now();
    std::fs::create_dir_all(run_dir)?;
    let codec = Codec::new(opts.compress);
    let sources = SourceCache::default();
    let flat = t.map(BushyTree::flatten).unwrap_or_default();
    let leaves: Vec<(usize, GroupId)> = flat
        .iter()
        .enumerate()
        .filter_map(|(i, n)| match n.kind {
            FlatKind::Leaf(g) => Some((i, g)),
            FlatKind::Union { .. } => None,
        })
        .collect();
    for (_, g) in &leaves {
        if p.group(*g).is_none() {
            return Err(MaterializeError::UnknownGroup(*g));
        }
    }

    let queue = Mutex::new(leaves.iter().copied().collect::<VecDeque<_>>());
    let outcomes: Mutex<HashMap<usize, LeafOutcome>> = Mutex::new(HashMap::new());
    let active = AtomicUsize::new(0);
    let peak = AtomicUsize::new(0);
    let workers = opts.parallelism.max(1).min(leaves.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let Some((i, g)) = queue.lock().expect("queue lock").pop_front() else { break };
                let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(now, Ordering::SeqCst);
                let leaf_start = Instant::now();
                let ctx = LeafContext {
                    name: &flat[i].name,
                    run_dir,
                    codec: &codec,
                    memory_threshold: opts.memory_threshold,
                    sources: Some(&sources),
                    deadline: Deadline(opts.timeout.map(|d| leaf_start + d)),
                };
                let result = injected_delay(opts.inject_delay.get(&g).copied(), &ctx.deadline)
                    .and_then(|()| materialize_group(p.group(g).expect("checked above"), dis, &ctx));
                let secs = leaf_start.elapsed().as_secs_f64();
                let outcome = match result {
                    Ok(set) => LeafOutcome::Done(set, secs),
                    Err(MaterializeError::Timeout) => LeafOutcome::TimedOut(secs),
                    Err(e) => LeafOutcome::Failed(e),
                };
                active.fetch_sub(1, Ordering::SeqCst);
                outcomes.lock().expect("outcome lock").insert(i, outcome);
            });
        }
    });
    let leaf_phase_seconds = started.elapsed().as_secs_f64();

    let mut outcomes = outcomes.into_inner().expect("outcome lock");
    let mut sets: Vec<Option<TripleSet>> = vec![None; flat.len()];
    let mut leaf_reports = Vec::new();
    let mut completed = 0usize;
    for (i, g) in &leaves {
        let (status, seconds, triples) = match outcomes.remove(i).expect("every leaf ran") {
            LeafOutcome::Failed(e) => return Err(e),
            LeafOutcome::TimedOut(s) => (LeafStatus::TimedOut, s, 0),
            LeafOutcome::Done(set, s) => {
                completed += 1;
                let n = set.cardinality;
                sets[*i] = Some(set);
                (LeafStatus::Completed, s, n)
            }
        };
        leaf_reports.push(LeafReport {
            node: flat[*i].name.clone(),
            group: *g,
            seconds,
            triples,
            status,
        });
    }

    let union_start = Instant::now();
    let mut union_reports = Vec::new();
    for (i, n) in flat.iter().enumerate() {
        let FlatKind::Union { op, left, right } = n.kind else { continue };
        let t0 = Instant::now();
        let out = run_dir.join(format!("{}.nt", n.name));
        let merged = match (sets[left].take(), sets[right].take()) {
            (Some(l), Some(r)) => Some(union_triples(op, &l, &r, &out, &codec)?),
            (Some(one), None) | (None, Some(one)) => Some(one),
            (None, None) => None,
        };
        union_reports.push(UnionReport {
            node: n.name.clone(),
            op,
            seconds: t0.elapsed().as_secs_f64(),
            triples: merged.as_ref().map_or(0, |s| s.cardinality),
        });
        sets[i] = merged;
    }
    let root = sets.last().and_then(Option::as_ref);
    let final_triples = canonicalize(root, output, &codec, &run_dir.join("tmp"), opts.memory_threshold)?;
    let union_phase_seconds = union_start.elapsed().as_secs_f64();

    let total = leaves.len();
    let completion_percent = if total == 0 {
        100.0
    } else {
        completed as f64 * 100.0 / total as f64
    };
    Ok(ExecutionReport {
        leaves: leaf_reports,
        unions: union_reports,
        leaf_phase_seconds,
        union_phase_seconds,
        total_seconds: started.elapsed().as_secs_f64(),
        peak_parallelism: peak.load(Ordering::SeqCst),
        final_triples,
        completion_percent,
        complete: completed == total,
        output: output.to_path_buf(),
    })
}

fn injected_delay(delay: Option<Duration>, deadline: &Deadline) -> Result<(), MaterializeError> {
    let Some(delay) = delay else { return Ok(()) };
    let until = Instant::now() + delay;
    while Instant::now() < until {
        deadline.check()?;
        std::thread::sleep(Duration::from_millis(5).min(until.saturating_duration_since(Instant::now())));
    }
    deadline.check()
}
