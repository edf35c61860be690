//! Seeded random data integration systems: CSV sources plus an RML document.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const PREFIXES: &str = "@prefix rr: <http://www.w3.org/ns/r2rml#> .
@prefix rml: <http://semweb.mmlab.be/ns/rml#> .
@prefix ql: <http://semweb.mmlab.be/ns/ql#> .
@prefix ex: <http://example.com/> .
";

const COLUMNS: [&str; 5] = ["id", "k", "a0", "a1", "a2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub min_sources: usize,
    pub max_sources: usize,
    /// Assertions per triples map, the concept included.
    pub min_assertions: usize,
    pub max_assertions: usize,
    pub msr_probability: f64,
    pub shared_probability: f64,
    pub max_rows: usize,
    /// Every class and predicate defined once, and every referenced concept
    /// reached from a single child source.
    pub theorem1: bool,
    /// Add one attribute predicate defined on two different sources.
    pub overlap_pair: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            min_sources: 2,
            max_sources: 6,
            min_assertions: 1,
            max_assertions: 5,
            msr_probability: 0.3,
            shared_probability: 0.2,
            max_rows: 100,
            theorem1: false,
            overlap_pair: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedDis {
    pub mapping: PathBuf,
    pub sources: Vec<PathBuf>,
}

enum Object {
    Reference(&'static str),
    Template(&'static str),
    SelfRef,
    Join { parent: usize, child: &'static str, parent_col: &'static str },
}

struct Map {
    keyed_subject: bool,
    class: String,
    poms: Vec<(String, Object)>,
}

/// Writes `mapping.ttl` and `S1.csv`..`Sn.csv` into `dir`.
pub fn generate(cfg: &GeneratorConfig, seed: u64, dir: &Path) -> io::Result<GeneratedDis> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(cfg.min_sources..=cfg.max_sources.max(cfg.min_sources));
    let shared = |rng: &mut ChaCha8Rng| !cfg.theorem1 && rng.gen_bool(cfg.shared_probability);
    // parent source -> the one child source allowed to reference it
    let mut referenced_by: Vec<Option<usize>> = vec![None; n];
    let mut maps = Vec::with_capacity(n);
    for i in 0..n {
        let keyed_subject = rng.gen_bool(0.5);
        let class = if shared(&mut rng) {
            "Shared".to_string()
        } else {
            format!("C{}", i + 1)
        };
        let m = rng.gen_range(cfg.min_assertions.max(1)..=cfg.max_assertions.max(cfg.min_assertions.max(1)));
        let mut poms = Vec::new();
        for j in 1..m {
            let predicate = if shared(&mut rng) {
                format!("s{}", rng.gen_range(0..3))
            } else {
                format!("p{}_{}", i + 1, j)
            };
            let roll: f64 = rng.gen();
            let parents: Vec<usize> = (0..n)
                .filter(|&p| p != i && (!cfg.theorem1 || referenced_by[p].is_none_or(|c| c == i)))
                .collect();
            let object = if roll < cfg.msr_probability && !parents.is_empty() {
                let parent = *parents.choose(&mut rng).expect("non-empty");
                referenced_by[parent] = Some(i);
                let (child, parent_col) = *[("k", "k"), ("a0", "a0"), ("a1", "k")].choose(&mut rng).expect("non-empty");
                Object::Join { parent, child, parent_col }
            } else if roll < cfg.msr_probability + 0.15 {
                Object::SelfRef
            } else {
                let col = *["a0", "a1", "a2"].choose(&mut rng).expect("non-empty");
                if rng.gen_bool(0.5) {
                    Object::Reference(col)
                } else {
                    Object::Template(col)
                }
            };
            poms.push((predicate, object));
        }
        maps.push(Map { keyed_subject, class, poms });
    }
    if cfg.overlap_pair && n >= 2 {
        let mut pick: Vec<usize> = (0..n).collect();
        pick.shuffle(&mut rng);
        for &i in &pick[..2] {
            maps[i].poms.push(("overlap".to_string(), Object::Reference("a0")));
        }
    }

    fs::create_dir_all(dir)?;
    let mut sources = Vec::with_capacity(n);
    for i in 0..n {
        let rows = rng.gen_range(1..=cfg.max_rows.max(1));
        let mut w = csv::Writer::from_path(dir.join(format!("S{}.csv", i + 1)))?;
        w.write_record(COLUMNS)?;
        for _ in 0..rows {
            let id = rng.gen_range(0..rows).to_string();
            let k = format!("k{}", rng.gen_range(0..6));
            let mut cells = vec![id, k];
            for _ in 0..3 {
                cells.push(if rng.gen_bool(0.05) {
                    String::new()
                } else {
                    format!("v{}", rng.gen_range(0..5))
                });
            }
            w.write_record(&cells)?;
        }
        w.flush()?;
        sources.push(dir.join(format!("S{}.csv", i + 1)));
    }

    let mut ttl = String::from(PREFIXES);
    for (i, m) in maps.iter().enumerate() {
        let subject = if m.keyed_subject {
            "http://example.com/e/{k}".to_string()
        } else {
            format!("http://example.com/s{}/{{id}}", i + 1)
        };
        let _ = write!(
            ttl,
            "\n<#TM{n}>\n    rml:logicalSource [ rml:source \"S{n}.csv\" ; rml:referenceFormulation ql:CSV ] ;\n    rr:subjectMap [ rr:template \"{subject}\" ; rr:class ex:{class} ]",
            n = i + 1,
            class = m.class
        );
        for (p, o) in &m.poms {
            let object = match o {
                Object::Reference(c) => format!("rml:reference \"{c}\""),
                Object::Template(c) => format!("rr:template \"http://example.com/o/{{{c}}}\""),
                Object::SelfRef => format!("rr:parentTriplesMap <#TM{}>", i + 1),
                Object::Join { parent, child, parent_col } => format!(
                    "rr:parentTriplesMap <#TM{}> ; rr:joinCondition [ rr:child \"{child}\" ; rr:parent \"{parent_col}\" ]",
                    parent + 1
                ),
            };
            let _ = write!(ttl, " ;\n    rr:predicateObjectMap [ rr:predicate ex:{p} ; rr:objectMap [ {object} ] ]");
        }
        ttl.push_str(" .\n");
    }
    let mapping = dir.join("mapping.ttl");
    fs::write(&mapping, ttl)?;
    Ok(GeneratedDis { mapping, sources })
}

/// A four-group system shaped like a record source joined with three
/// product and code sources, `rows` rows per source with about
/// `duplicate_rate` repeated rows.
pub fn generate_benchmark(dir: &Path, rows: usize, duplicate_rate: f64, seed: u64) -> io::Result<GeneratedDis> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fs::create_dir_all(dir)?;
    let mut write = |name: &str, header: &[&str], row: &mut dyn FnMut(&mut ChaCha8Rng, usize) -> Vec<String>| -> io::Result<PathBuf> {
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        let mut written: Vec<Vec<String>> = Vec::with_capacity(rows);
        for i in 0..rows {
            let r = if i > 0 && rng.gen_bool(duplicate_rate) {
                written[rng.gen_range(0..written.len())].clone()
            } else {
                row(&mut rng, i)
            };
            w.write_record(&r)?;
            written.push(r);
        }
        w.flush()?;
        Ok(path)
    };
    let keys = rows.max(1);
    let s1 = write("S1.csv", &["ID", "name", "value", "attribute", "target"], &mut |rng, i| {
        vec![
            i.to_string(),
            format!("name{}", rng.gen_range(0..keys)),
            rng.gen_range(0..1000).to_string(),
            format!("d{}", rng.gen_range(0..keys)),
            format!("K{}", rng.gen_range(0..keys)),
        ]
    })?;
    let s3 = write("S3.csv", &["DrugName"], &mut |rng, _| vec![format!("d{}", rng.gen_range(0..keys))])?;
    let s4 = write("S4.csv", &["code"], &mut |_, i| vec![format!("K{i}")])?;
    let s5 = write("S5.csv", &["DrugName"], &mut |rng, _| vec![format!("d{}", rng.gen_range(0..keys))])?;
    let mapping = dir.join("mapping.ttl");
    fs::write(&mapping, BENCHMARK_MAPPING)?;
    Ok(GeneratedDis {
        mapping,
        sources: vec![s1, s3, s4, s5],
    })
}

const BENCHMARK_MAPPING: &str = r#"@prefix rr: <http://www.w3.org/ns/r2rml#> .
@prefix rml: <http://semweb.mmlab.be/ns/rml#> .
@prefix ql: <http://semweb.mmlab.be/ns/ql#> .
@prefix ex: <http://example.com/> .

<#Record>
    rml:logicalSource [ rml:source "S1.csv" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template "http://example.com/record/{ID}" ; rr:class ex:C2 ] ;
    rr:predicateObjectMap [ rr:predicate ex:p1 ; rr:objectMap [ rml:reference "name" ] ] ;
    rr:predicateObjectMap [ rr:predicate ex:p5 ; rr:objectMap [ rml:reference "value" ] ] ;
    rr:predicateObjectMap [ rr:predicate ex:p4 ; rr:objectMap [ rr:parentTriplesMap <#Product3> ; rr:joinCondition [ rr:child "attribute" ; rr:parent "DrugName" ] ] ] ;
    rr:predicateObjectMap [ rr:predicate ex:p7 ; rr:objectMap [ rr:parentTriplesMap <#Code> ; rr:joinCondition [ rr:child "target" ; rr:parent "code" ] ] ] ;
    rr:predicateObjectMap [ rr:predicate ex:p8 ; rr:objectMap [ rr:parentTriplesMap <#Product5> ; rr:joinCondition [ rr:child "attribute" ; rr:parent "DrugName" ] ] ] .

<#Product3>
    rml:logicalSource [ rml:source "S3.csv" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template "http://example.com/product/{DrugName}" ; rr:class ex:C3 ] .

<#Drug3>
    rml:logicalSource [ rml:source "S3.csv" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template "http://example.com/drug/{DrugName}" ; rr:class ex:C1 ] ;
    rr:predicateObjectMap [ rr:predicate ex:p3 ; rr:objectMap [ rr:parentTriplesMap <#Product3> ] ] .

<#Code>
    rml:logicalSource [ rml:source "S4.csv" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template "http://example.com/code/{code}" ; rr:class ex:C4 ] .

<#Product5>
    rml:logicalSource [ rml:source "S5.csv" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template "http://example.com/product/{DrugName}" ; rr:class ex:C5 ] .

<#Drug5>
    rml:logicalSource [ rml:source "S5.csv" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template "http://example.com/drug/{DrugName}" ; rr:class ex:C1 ] ;
    rr:predicateObjectMap [ rr:predicate ex:p3 ; rr:objectMap [ rr:parentTriplesMap <#Product5> ] ] .
"#;
