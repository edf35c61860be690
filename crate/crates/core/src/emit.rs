//! Lowering of a bushy tree to a shell script that drives an external
//! mapping engine, plus per-group mapping documents for it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::partition::{GroupId, PartitionSet};
use crate::rml::{
    self, AssertionKind, AssertionObject, DataIntegrationSystem, MappingAssertion, TemplateFunction, TemplateKind,
    TermType,
};
use crate::tree::{BushyTree, FlatKind, UnionOp};

pub const DEFAULT_TIMEOUT_SECONDS: u64 = 18000;

#[derive(Debug, thiserror::Error)]
pub enum EmitError {
    #[error("engine profile {name}: {reason}")]
    InvalidProfile { name: String, reason: String },
    #[error("unknown engine profile {0}")]
    UnknownEngine(String),
    #[error("no mapping file for group {0}")]
    MissingMappingFile(GroupId),
    #[error("group {group}: emitted mapping does not round-trip: {reason}")]
    RoundTrip { group: GroupId, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// How to invoke one external engine. Templates may use `{mapping_file}`,
/// `{output_file}`, `{config_file}`, `{output_dir}` and `{name}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineProfile {
    #[serde(default)]
    pub name: String,
    pub command_template: String,
    /// Contents of a per-group configuration file, for engines that take one.
    #[serde(default)]
    pub config_template: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECONDS
}

impl EngineProfile {
    pub fn validate(&self) -> Result<(), EmitError> {
        let invalid = |reason: &str| EmitError::InvalidProfile {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.timeout_seconds == 0 {
            return Err(invalid("timeout_seconds must be positive"));
        }
        let all = format!("{}\n{}", self.command_template, self.config_template.as_deref().unwrap_or(""));
        for needed in ["{mapping_file}", "{output_file}"] {
            if !all.contains(needed) {
                return Err(invalid(&format!("templates never mention {needed}")));
            }
        }
        if self.config_template.is_some() && !self.command_template.contains("{config_file}") {
            return Err(invalid("config_template is set but command_template never mentions {config_file}"));
        }
        Ok(())
    }

    pub fn builtin(name: &str) -> Option<EngineProfile> {
        let (command, config) = match name {
            "rmlmapper" => ("java -jar rmlmapper.jar -m {mapping_file} -o {output_file} -s ntriples", None),
            "rocketrml" => ("node rocketrml.js {mapping_file} {output_file}", None),
            "morph-kgc" => (
                "python3 -m morph_kgc {config_file}",
                Some(
                    "[CONFIGURATION]\noutput_format=N-TRIPLES\noutput_file={output_file}\n\n[DataSource1]\nmappings={mapping_file}\n",
                ),
            ),
            "sdm-rdfizer" => (
                "python3 -m rdfizer -c {config_file}",
                Some(
                    "[default]\nmain_directory: .\n\n[datasets]\nnumber_of_datasets: 1\noutput_folder: {output_dir}\nall_in_one_file: no\nremove_duplicate: yes\nenrichment: yes\nname: {name}\nordered: no\n\n[dataset1]\nname: {name}\nmapping: {mapping_file}\n",
                ),
            ),
            _ => return None,
        };
        Some(EngineProfile {
            name: name.to_string(),
            command_template: command.to_string(),
            config_template: config.map(str::to_string),
            timeout_seconds: DEFAULT_TIMEOUT_SECONDS,
        })
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["rmlmapper", "morph-kgc", "sdm-rdfizer", "rocketrml"]
    }
}

fn quote(path: &Path) -> String {
    let s = path.to_string_lossy();
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "/._-+=:,@%".contains(c)) {
        s.into_owned()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

fn fill(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicalPlan {
    pub script: String,
    pub group_mapping_files: BTreeMap<GroupId, PathBuf>,
    /// Per-group engine configuration files and their contents.
    pub config_files: BTreeMap<PathBuf, String>,
    pub final_output: PathBuf,
}

impl PhysicalPlan {
    /// Writes the script as `plan.sh` and the configuration files.
    pub fn write(&self, run_dir: &Path) -> Result<PathBuf, EmitError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| EmitError::Io { path, source }
        };
        for (path, text) in &self.config_files {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(io(dir))?;
            }
            std::fs::write(path, text).map_err(io(path))?;
        }
        std::fs::create_dir_all(run_dir).map_err(io(run_dir))?;
        let script = run_dir.join("plan.sh");
        std::fs::write(&script, &self.script).map_err(io(&script))?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            let _ = std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755));
        }
        Ok(script)
    }
}

/// The script for `t`: every leaf runs in the background under `timeout`,
/// then unions run level by level with a `wait` barrier after each level.
pub fn gamma(
    t: &BushyTree,
    profile: &EngineProfile,
    files: &BTreeMap<GroupId, PathBuf>,
    run_dir: &Path,
    final_output: &Path,
) -> Result<PhysicalPlan, EmitError> {
    profile.validate()?;
    let flat = t.flatten();
    let node_file = |name: &str| run_dir.join(format!("{name}.nt"));
    let mut config_files = BTreeMap::new();
    let mut levels: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for n in &flat {
        let line = match &n.kind {
            FlatKind::Leaf(g) => {
                let mapping = files.get(g).ok_or(EmitError::MissingMappingFile(*g))?;
                let output = node_file(&n.name);
                let config = run_dir.join("groups").join(format!("{}.ini", n.name));
                let vars = [
                    ("mapping_file", quote(mapping)),
                    ("output_file", quote(&output)),
                    ("config_file", quote(&config)),
                    ("output_dir", quote(run_dir)),
                    ("name", n.name.clone()),
                ];
                if let Some(ct) = &profile.config_template {
                    let raw_vars = [
                        ("mapping_file", mapping.to_string_lossy().into_owned()),
                        ("output_file", output.to_string_lossy().into_owned()),
                        ("config_file", config.to_string_lossy().into_owned()),
                        ("output_dir", run_dir.to_string_lossy().into_owned()),
                        ("name", n.name.clone()),
                    ];
                    config_files.insert(config.clone(), fill(ct, &raw_vars));
                }
                let ecall = fill(&profile.command_template, &vars);
                format!("timeout {} {ecall} & ", profile.timeout_seconds)
            }
            FlatKind::Union { op, left, right } => {
                let cmd = match op {
                    UnionOp::Dr => "sort -u",
                    UnionOp::Ndr => "cat",
                };
                format!(
                    "{cmd} {} {} > {}",
                    quote(&node_file(&flat[*left].name)),
                    quote(&node_file(&flat[*right].name)),
                    quote(&node_file(&n.name))
                )
            }
        };
        levels.entry(n.height).or_default().push(line);
    }
    let mut script = String::from("#!/bin/sh\nexport LC_ALL=C\n");
    for lines in levels.values() {
        for l in lines {
            script.push_str(l);
            script.push('\n');
        }
        script.push_str("wait\n");
    }
    let root = flat.last().expect("tree has a node");
    let _ = writeln!(script, "mv {} {}", quote(&node_file(&root.name)), quote(final_output));
    Ok(PhysicalPlan {
        script,
        group_mapping_files: files.clone(),
        config_files,
        final_output: final_output.to_path_buf(),
    })
}

fn turtle_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn term_map(t: &TemplateFunction) -> String {
    match t.kind {
        TemplateKind::IriTemplate => format!("rr:template {}", turtle_string(&t.template_text())),
        TemplateKind::Reference => format!(
            "rml:reference {}",
            turtle_string(t.references().next().unwrap_or_default())
        ),
        TemplateKind::Constant => {
            let v = t.constant_value().unwrap_or_default();
            match t.term_type {
                TermType::Iri => format!("rr:constant <{v}>"),
                TermType::Literal => format!("rr:constant {}", turtle_string(v)),
            }
        }
    }
}

/// One standalone mapping document per group, holding the group's members
/// and copies; triples maps referenced as parents are written out too.
pub fn split_mappings(p: &PartitionSet, dis: &DataIntegrationSystem) -> BTreeMap<GroupId, String> {
    p.groups
        .iter()
        .map(|g| {
            let assertions: Vec<&MappingAssertion> = g.executed().map(|a| dis.assertion(a)).collect();
            (g.id, serialize_assertions(&assertions, dis))
        })
        .collect()
}

fn serialize_assertions(assertions: &[&MappingAssertion], dis: &DataIntegrationSystem) -> String {
    // triples maps in order of their first assertion id
    let mut order: Vec<&str> = Vec::new();
    let mut by_map: HashMap<&str, Vec<&MappingAssertion>> = HashMap::new();
    let mut sorted = assertions.to_vec();
    sorted.sort_by_key(|a| a.id);
    for a in &sorted {
        if !by_map.contains_key(a.triples_map.as_str()) {
            order.push(&a.triples_map);
        }
        by_map.entry(&a.triples_map).or_default().push(a);
    }

    let mut out = String::from(
        "@prefix rr: <http://www.w3.org/ns/r2rml#> .\n@prefix rml: <http://semweb.mmlab.be/ns/rml#> .\n@prefix ql: <http://semweb.mmlab.be/ns/ql#> .\n",
    );
    for tm in order {
        let members = &by_map[tm];
        let first = members[0];
        let source = dis.source(first.child_source()).expect("source resolves");
        let _ = write!(
            out,
            "\n<{tm}>\n    rml:logicalSource [ rml:source {} ; rml:referenceFormulation ql:CSV ] ;\n    rr:subjectMap [ {}",
            turtle_string(&source.path.to_string_lossy()),
            term_map(&first.subject)
        );
        let classes: Vec<&str> = members.iter().filter_map(|a| a.class()).collect();
        if !classes.is_empty() {
            let list: Vec<String> = classes.iter().map(|c| format!("<{c}>")).collect();
            let _ = write!(out, " ; rr:class {}", list.join(", "));
        }
        out.push_str(" ]");
        for a in members.iter().filter(|a| a.kind != AssertionKind::Concept) {
            let object = match &a.object {
                AssertionObject::Term(t) => format!("[ {} ]", term_map(t)),
                AssertionObject::Assertion(r) => {
                    let parent = &dis.assertion(*r).triples_map;
                    match &a.join {
                        Some(j) => format!(
                            "[ rr:parentTriplesMap <{parent}> ; rr:joinCondition [ rr:child {} ; rr:parent {} ] ]",
                            turtle_string(&j.child_attribute),
                            turtle_string(&j.parent_attribute)
                        ),
                        None => format!("[ rr:parentTriplesMap <{parent}> ]"),
                    }
                }
            };
            let _ = write!(
                out,
                " ;\n    rr:predicateObjectMap [ rr:predicate <{}> ; rr:objectMap {object} ]",
                a.predicate
            );
        }
        out.push_str(" .\n");
    }
    out
}

/// A structural fingerprint of an assertion that does not depend on ids.
fn signature(a: &MappingAssertion, dis: &DataIntegrationSystem) -> String {
    let path = |s: &str| dis.source(s).map(|s| s.path.to_string_lossy().into_owned()).unwrap_or_default();
    let object = match &a.object {
        AssertionObject::Term(t) => format!("{t:?}"),
        AssertionObject::Assertion(r) => {
            let p = dis.assertion(*r);
            format!("ref({:?},{:?},{})", p.subject, p.class(), path(p.child_source()))
        }
    };
    let sources: Vec<String> = a.sources.iter().map(|s| path(s)).collect();
    format!(
        "{:?}|{:?}|{}|{}|{:?}|{:?}",
        a.kind, a.subject, a.predicate, object, sources, a.join
    )
}

/// Re-parses every emitted document and checks that it extracts exactly the
/// group's assertions.
pub fn check_round_trip(
    p: &PartitionSet,
    dis: &DataIntegrationSystem,
    docs: &BTreeMap<GroupId, String>,
) -> Result<(), EmitError> {
    for g in &p.groups {
        let doc = docs.get(&g.id).ok_or(EmitError::MissingMappingFile(g.id))?;
        let fail = |reason: String| EmitError::RoundTrip { group: g.id, reason };
        let records = rml::parse_mappings(doc).map_err(|e| fail(e.to_string()))?;
        let back = rml::extract_assertions(&records, Path::new("")).map_err(|e| fail(e.to_string()))?;
        let mut want: Vec<String> = g.executed().map(|a| signature(dis.assertion(a), dis)).collect();
        let mut got: Vec<String> = back.assertions.iter().map(|a| signature(a, &back)).collect();
        want.sort();
        got.sort();
        if want != got {
            let missing: BTreeSet<_> = want.iter().filter(|w| !got.contains(w)).collect();
            return Err(fail(format!("{} assertions differ, e.g. {:?}", missing.len().max(1), missing.first())));
        }
    }
    Ok(())
}

/// Writes each group's document to `<dir>/<group>.rml.ttl`.
pub fn write_group_mappings(
    docs: &BTreeMap<GroupId, String>,
    dir: &Path,
) -> Result<BTreeMap<GroupId, PathBuf>, EmitError> {
    std::fs::create_dir_all(dir).map_err(|source| EmitError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = BTreeMap::new();
    for (g, text) in docs {
        let path = dir.join(format!("{g}.rml.ttl"));
        std::fs::write(&path, text).map_err(|source| EmitError::Io {
            path: path.clone(),
            source,
        })?;
        files.insert(*g, path);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::partition;
    use crate::rml::{extract_assertions, parse_mappings};

    fn fig5a() -> BushyTree {
        let leaf = |n| BushyTree::Leaf(GroupId(n));
        BushyTree::node(
            UnionOp::Ndr,
            leaf(3),
            BushyTree::node(UnionOp::Ndr, leaf(1), BushyTree::node(UnionOp::Dr, leaf(2), leaf(4))),
        )
    }

    fn files() -> BTreeMap<GroupId, PathBuf> {
        (1..=4).map(|i| (GroupId(i), PathBuf::from(format!("run/groups/G{i}.rml.ttl")))).collect()
    }

    #[test]
    fn script_census() {
        let profile = EngineProfile::builtin("rmlmapper").unwrap();
        let plan = gamma(&fig5a(), &profile, &files(), Path::new("run"), Path::new("kg.nt")).unwrap();
        let s = &plan.script;
        assert!(s.starts_with("#!/bin/sh\n"));
        assert_eq!(s.matches("timeout 18000 java -jar").count(), 4);
        assert_eq!(s.lines().filter(|l| l.starts_with("sort -u ")).count(), 1);
        assert_eq!(s.lines().filter(|l| l.starts_with("cat ")).count(), 2);
        assert_eq!(s.lines().filter(|l| l.starts_with("mv ")).count(), 1);
        assert!(s.contains("sort -u run/G2.nt run/G4.nt > run/U1.nt\n"));
        assert!(s.ends_with("mv run/U3.nt kg.nt\n"));
        assert_eq!(s.lines().filter(|l| *l == "wait").count(), 4);
        let again = gamma(&fig5a(), &profile, &files(), Path::new("run"), Path::new("kg.nt")).unwrap();
        assert_eq!(plan.script, again.script);
    }

    #[test]
    fn config_profiles() {
        let profile = EngineProfile::builtin("morph-kgc").unwrap();
        let plan = gamma(&BushyTree::Leaf(GroupId(1)), &profile, &files(), Path::new("run"), Path::new("kg.nt")).unwrap();
        assert_eq!(plan.config_files.len(), 1);
        let cfg = plan.config_files.values().next().unwrap();
        assert!(cfg.contains("mappings=run/groups/G1.rml.ttl"));
        assert!(plan.script.contains("timeout 18000 python3 -m morph_kgc run/groups/G1.ini & \n"));

        let bad = EngineProfile {
            name: "x".into(),
            command_template: "engine {mapping_file}".into(),
            config_template: None,
            timeout_seconds: 5,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn missing_group_file() {
        let profile = EngineProfile::builtin("rocketrml").unwrap();
        let err = gamma(&BushyTree::Leaf(GroupId(9)), &profile, &files(), Path::new("r"), Path::new("k"));
        assert!(matches!(err, Err(EmitError::MissingMappingFile(_))));
    }

    #[test]
    fn split_round_trips() {
        for doc in [
            include_str!("../tests/data/running_example/mapping.ttl"),
            include_str!("../tests/data/motivating/mapping.ttl"),
        ] {
            let dis = extract_assertions(&parse_mappings(doc).unwrap(), Path::new("/data")).unwrap();
            let p = partition(&dis);
            let docs = split_mappings(&p, &dis);
            assert_eq!(docs.len(), p.len());
            check_round_trip(&p, &dis, &docs).unwrap();
        }
    }
}
