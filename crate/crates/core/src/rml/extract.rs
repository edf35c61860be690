use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use super::records::{self, ObjectMapRecord, TriplesMapRecord};
use super::template::{TemplateKind, TemplateFunction, TermType};
use super::{
    vocab, AssertionId, AssertionKind, AssertionObject, DataIntegrationSystem, LogicalSource, MappingAssertion,
    RmlError, SourceFormat,
};

/// Classifies the predicate definitions of `records` into mapping assertions.
/// Relative source paths are resolved against `base_dir`.
pub fn extract_assertions(records: &[TriplesMapRecord], base_dir: &Path) -> Result<DataIntegrationSystem, RmlError> {
    let by_id: HashMap<&str, usize> = records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();

    let mut dis = DataIntegrationSystem::default();
    let mut source_of_path: HashMap<PathBuf, String> = HashMap::new();
    let mut tm_source = Vec::with_capacity(records.len());
    for r in records {
        let path = resolve(base_dir, &r.source.path);
        let id = match source_of_path.get(&path) {
            Some(id) => id.clone(),
            None => {
                let id = fresh_source_id(&dis, &path);
                source_of_path.insert(path.clone(), id.clone());
                dis.sources.push(LogicalSource {
                    id: id.clone(),
                    path,
                    format: SourceFormat::Csv,
                    attributes: Vec::new(),
                });
                id
            }
        };
        tm_source.push(id);
    }

    // Concept ids are fixed up front so that references may point forward.
    let mut first_id = Vec::with_capacity(records.len());
    let mut next = 0u32;
    for r in records {
        first_id.push(next);
        next += (r.classes.len() + r.predicate_object_maps.len()) as u32;
    }

    for (i, r) in records.iter().enumerate() {
        let source = tm_source[i].clone();
        if r.classes.len() > 1 {
            dis.flags.push(format!(
                "triples map {} declares {} classes; one Concept assertion each",
                r.id,
                r.classes.len()
            ));
        }
        let mut id = first_id[i];
        for class in &r.classes {
            dis.ontology_predicates.insert(class.clone());
            dis.assertions.push(MappingAssertion {
                id: AssertionId(id),
                kind: AssertionKind::Concept,
                triples_map: r.id.clone(),
                subject: r.subject.clone(),
                predicate: vocab::RDF_TYPE.to_string(),
                object: AssertionObject::Term(TemplateFunction::constant(class, TermType::Iri)),
                sources: vec![source.clone()],
                join: None,
                referenced_assertion: None,
            });
            id += 1;
        }
        for pom in &r.predicate_object_maps {
            dis.ontology_predicates.insert(pom.predicate.clone());
            let assertion = match &pom.object {
                ObjectMapRecord::Term(t) => {
                    let kind = match (t.kind, t.term_type) {
                        (TemplateKind::Reference, _) => AssertionKind::Attribute,
                        (TemplateKind::IriTemplate, _) => AssertionKind::SingleSourceRole,
                        (TemplateKind::Constant, TermType::Iri) => AssertionKind::SingleSourceRole,
                        (TemplateKind::Constant, TermType::Literal) => AssertionKind::Attribute,
                    };
                    MappingAssertion {
                        id: AssertionId(id),
                        kind,
                        triples_map: r.id.clone(),
                        subject: r.subject.clone(),
                        predicate: pom.predicate.clone(),
                        object: AssertionObject::Term(t.clone()),
                        sources: vec![source.clone()],
                        join: None,
                        referenced_assertion: None,
                    }
                }
                ObjectMapRecord::Parent { triples_map, joins } => {
                    let p = *by_id.get(triples_map.as_str()).ok_or_else(|| RmlError::DanglingParent {
                        triples_map: r.id.clone(),
                        parent: triples_map.clone(),
                    })?;
                    if records[p].classes.is_empty() {
                        return Err(RmlError::ParentWithoutClass {
                            triples_map: r.id.clone(),
                            parent: triples_map.clone(),
                        });
                    }
                    if joins.len() > 1 {
                        return Err(RmlError::MultipleJoins {
                            triples_map: r.id.clone(),
                        });
                    }
                    let referenced = AssertionId(first_id[p]);
                    let parent_source = tm_source[p].clone();
                    let (kind, sources, join) = match joins.first() {
                        None if parent_source == source => {
                            (AssertionKind::ReferencedSourceRole, vec![source.clone()], None)
                        }
                        None => {
                            return Err(RmlError::MissingJoin {
                                triples_map: r.id.clone(),
                                parent: triples_map.clone(),
                            })
                        }
                        Some(j) => (
                            AssertionKind::MultiSourceRole,
                            vec![source.clone(), parent_source],
                            Some(j.clone()),
                        ),
                    };
                    MappingAssertion {
                        id: AssertionId(id),
                        kind,
                        triples_map: r.id.clone(),
                        subject: r.subject.clone(),
                        predicate: pom.predicate.clone(),
                        object: AssertionObject::Assertion(referenced),
                        sources,
                        join,
                        referenced_assertion: Some(referenced),
                    }
                }
            };
            dis.assertions.push(assertion);
            id += 1;
        }
    }
    Ok(dis)
}

fn resolve(base_dir: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

fn fresh_source_id(dis: &DataIntegrationSystem, path: &Path) -> String {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .unwrap_or("source")
        .to_string();
    if dis.source(&stem).is_none() {
        return stem;
    }
    (2..)
        .map(|n| format!("{stem}_{n}"))
        .find(|c| dis.source(c).is_none())
        .expect("unbounded suffixes")
}

/// Reads and extracts several mapping files into one system. Source paths
/// resolve against `source_root` when given, else the mapping file's
/// directory. With more than one file, relative triples-map names are
/// qualified by the file name so they cannot collide.
pub fn load_mapping_files(paths: &[PathBuf], source_root: Option<&Path>) -> Result<DataIntegrationSystem, RmlError> {
    let mut all = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path).map_err(|source| RmlError::Io {
            path: path.clone(),
            source,
        })?;
        let mut recs = records::parse_mappings(&text)?;
        let base = match source_root {
            Some(root) => root.to_path_buf(),
            None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        let prefix = if paths.len() > 1 {
            path.file_name().map(|f| f.to_string_lossy().into_owned())
        } else {
            None
        };
        let qualify = |id: &str| match &prefix {
            Some(p) if id.starts_with('#') => format!("{p}{id}"),
            _ => id.to_string(),
        };
        for r in &mut recs {
            r.source.path = resolve(&base, &r.source.path).to_string_lossy().into_owned();
            r.id = qualify(&r.id);
            for pom in &mut r.predicate_object_maps {
                if let ObjectMapRecord::Parent { triples_map, .. } = &mut pom.object {
                    *triples_map = qualify(triples_map);
                }
            }
        }
        all.extend(recs);
    }
    let mut seen = BTreeSet::new();
    for r in &all {
        if !seen.insert(r.id.as_str()) {
            return Err(RmlError::Ambiguous {
                triples_map: r.id.clone(),
                predicate: "triples map name".into(),
                line: r.line,
            });
        }
    }
    extract_assertions(&all, Path::new(""))
}
