//! Triples-map records: the structural reading of a mapping document before
//! any classification.

use std::collections::{BTreeMap, HashMap};

use super::template::{TemplateFunction, TermType};
use super::turtle::{self, Term, Triple};
use super::{vocab, JoinCondition, RmlError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRecord {
    pub path: String,
    pub reference_formulation: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObjectMapRecord {
    Term(TemplateFunction),
    Parent {
        triples_map: String,
        joins: Vec<JoinCondition>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateObjectRecord {
    pub line: usize,
    pub predicate: String,
    pub object: ObjectMapRecord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriplesMapRecord {
    pub id: String,
    pub line: usize,
    pub source: SourceRecord,
    pub subject: TemplateFunction,
    pub classes: Vec<String>,
    pub predicate_object_maps: Vec<PredicateObjectRecord>,
}

struct Graph {
    by_subject: HashMap<Term, Vec<(String, Term, usize)>>,
}

impl Graph {
    fn values(&self, node: &Term, predicate: &str) -> std::vec::IntoIter<(&Term, usize)> {
        self.by_subject
            .get(node)
            .into_iter()
            .flatten()
            .filter(|(p, _, _)| p == predicate)
            .map(|(_, o, l)| (o, *l))
            .collect::<Vec<_>>()
            .into_iter()
    }

    fn single(&self, node: &Term, predicate: &str, owner: &str) -> Result<Option<(&Term, usize)>, RmlError> {
        let mut it = self.values(node, predicate);
        let first = it.next();
        if let Some((_, line)) = it.next() {
            return Err(RmlError::Ambiguous {
                triples_map: owner.to_string(),
                predicate: predicate.to_string(),
                line,
            });
        }
        Ok(first)
    }
}

fn term_text(term: &Term) -> &str {
    match term {
        Term::Iri(s) | Term::Literal(s) | Term::Blank(s) => s,
    }
}

/// Parses a mapping document into one record per triples map, in document order.
pub fn parse_mappings(document: &str) -> Result<Vec<TriplesMapRecord>, RmlError> {
    let triples = turtle::parse(document)?;
    records_from_triples(&triples)
}

pub(crate) fn records_from_triples(triples: &[Triple]) -> Result<Vec<TriplesMapRecord>, RmlError> {
    for t in triples {
        if !vocab::is_accepted_predicate(&t.predicate) {
            return Err(RmlError::UnknownVocabulary {
                iri: t.predicate.clone(),
                line: t.line,
            });
        }
    }
    let mut graph = Graph {
        by_subject: HashMap::new(),
    };
    // first line each subject is seen on, and its position in the document
    let mut first_seen: BTreeMap<usize, (Term, usize)> = BTreeMap::new();
    let mut seen: HashMap<Term, usize> = HashMap::new();
    for (i, t) in triples.iter().enumerate() {
        graph
            .by_subject
            .entry(t.subject.clone())
            .or_default()
            .push((t.predicate.clone(), t.object.clone(), t.line));
        let is_map_marker = t.predicate == vocab::LOGICAL_SOURCE
            || t.predicate == vocab::SUBJECT_MAP
            || t.predicate == vocab::PREDICATE_OBJECT_MAP
            || (t.predicate == vocab::RDF_TYPE && t.object == Term::Iri(vocab::TRIPLES_MAP.into()));
        if is_map_marker && !seen.contains_key(&t.subject) {
            seen.insert(t.subject.clone(), i);
            first_seen.insert(i, (t.subject.clone(), t.line));
        }
    }

    let mut records = Vec::new();
    for (node, line) in first_seen.into_values() {
        let id = term_text(&node).to_string();
        records.push(read_triples_map(&graph, &node, id, line)?);
    }
    Ok(records)
}

fn read_triples_map(graph: &Graph, node: &Term, id: String, line: usize) -> Result<TriplesMapRecord, RmlError> {
    let (ls_node, _) = graph
        .single(node, vocab::LOGICAL_SOURCE, &id)?
        .ok_or_else(|| RmlError::MissingLogicalSource { triples_map: id.clone() })?;
    let (path, _) = graph
        .single(ls_node, vocab::SOURCE, &id)?
        .ok_or_else(|| RmlError::MissingLogicalSource { triples_map: id.clone() })?;
    let reference_formulation = match graph.single(ls_node, vocab::REFERENCE_FORMULATION, &id)? {
        Some((Term::Iri(rf), _)) if rf == vocab::QL_CSV => rf.clone(),
        None => vocab::QL_CSV.to_string(),
        Some((other, line)) => {
            return Err(RmlError::UnsupportedReferenceFormulation {
                triples_map: id.clone(),
                formulation: term_text(other).to_string(),
                line,
            })
        }
    };
    let source = SourceRecord {
        path: term_text(path).to_string(),
        reference_formulation,
    };

    let (sm_node, sm_line) = graph
        .single(node, vocab::SUBJECT_MAP, &id)?
        .ok_or_else(|| RmlError::MissingSubjectMap { triples_map: id.clone() })?;
    let subject = read_term_map(graph, sm_node, &id, sm_line, TermType::Iri)?
        .ok_or(RmlError::VacuousTermMap {
            triples_map: id.clone(),
            line: sm_line,
        })?;
    let mut classes = Vec::new();
    for (class, line) in graph.values(sm_node, vocab::CLASS) {
        match class {
            Term::Iri(c) => classes.push(c.clone()),
            _ => {
                return Err(RmlError::InvalidValue {
                    triples_map: id.clone(),
                    predicate: vocab::CLASS.into(),
                    line,
                })
            }
        }
    }

    let mut predicate_object_maps = Vec::new();
    for (pom, pom_line) in graph.values(node, vocab::PREDICATE_OBJECT_MAP) {
        let mut predicates = graph.values(pom, vocab::PREDICATE);
        let predicate = match (predicates.next(), predicates.next()) {
            (Some((Term::Iri(p), _)), None) => p.clone(),
            (None, _) | (Some(_), Some(_)) => {
                return Err(RmlError::PredicateObjectShape {
                    triples_map: id.clone(),
                    line: pom_line,
                })
            }
            (Some((_, line)), None) => {
                return Err(RmlError::InvalidValue {
                    triples_map: id.clone(),
                    predicate: vocab::PREDICATE.into(),
                    line,
                })
            }
        };
        let mut objects = graph.values(pom, vocab::OBJECT_MAP);
        let (om, om_line) = match (objects.next(), objects.next()) {
            (Some(o), None) => o,
            _ => {
                return Err(RmlError::PredicateObjectShape {
                    triples_map: id.clone(),
                    line: pom_line,
                })
            }
        };
        let object = read_object_map(graph, om, &id, om_line)?;
        predicate_object_maps.push(PredicateObjectRecord {
            line: pom_line,
            predicate,
            object,
        });
    }

    Ok(TriplesMapRecord {
        id,
        line,
        source,
        subject,
        classes,
        predicate_object_maps,
    })
}

/// Reads a template / reference / constant term map. `default_type` is the
/// term type of a plain reference in this position.
fn read_term_map(
    graph: &Graph,
    node: &Term,
    owner: &str,
    line: usize,
    default_type: TermType,
) -> Result<Option<TemplateFunction>, RmlError> {
    let template = graph.single(node, vocab::TEMPLATE, owner)?;
    let reference = match graph.single(node, vocab::REFERENCE, owner)? {
        Some(r) => Some(r),
        None => graph.single(node, vocab::COLUMN, owner)?,
    };
    let constant = graph.single(node, vocab::CONSTANT, owner)?;
    let present = [template.is_some(), reference.is_some(), constant.is_some()]
        .iter()
        .filter(|b| **b)
        .count();
    if present > 1 {
        return Err(RmlError::Ambiguous {
            triples_map: owner.to_string(),
            predicate: "term map (template/reference/constant)".into(),
            line,
        });
    }
    if let Some((t, _)) = template {
        return TemplateFunction::iri_template(term_text(t)).map(Some);
    }
    if let Some((r, _)) = reference {
        return Ok(Some(TemplateFunction::reference(term_text(r), default_type)));
    }
    if let Some((c, _)) = constant {
        let tt = match c {
            Term::Iri(_) => TermType::Iri,
            _ => TermType::Literal,
        };
        return Ok(Some(TemplateFunction::constant(term_text(c), tt)));
    }
    Ok(None)
}

fn read_object_map(graph: &Graph, node: &Term, owner: &str, line: usize) -> Result<ObjectMapRecord, RmlError> {
    if let Some((parent, pline)) = graph.single(node, vocab::PARENT_TRIPLES_MAP, owner)? {
        let Term::Iri(parent) = parent else {
            return Err(RmlError::InvalidValue {
                triples_map: owner.to_string(),
                predicate: vocab::PARENT_TRIPLES_MAP.into(),
                line: pline,
            });
        };
        let mut joins = Vec::new();
        for (jc, jline) in graph.values(node, vocab::JOIN_CONDITION) {
            let child = graph.single(jc, vocab::CHILD, owner)?;
            let parent_attr = graph.single(jc, vocab::PARENT, owner)?;
            match (child, parent_attr) {
                (Some((c, _)), Some((p, _))) => joins.push(JoinCondition {
                    child_attribute: term_text(c).to_string(),
                    parent_attribute: term_text(p).to_string(),
                }),
                _ => {
                    return Err(RmlError::IncompleteJoin {
                        triples_map: owner.to_string(),
                        line: jline,
                    })
                }
            }
        }
        return Ok(ObjectMapRecord::Parent {
            triples_map: parent.clone(),
            joins,
        });
    }
    if graph.values(node, vocab::JOIN_CONDITION).next().is_some() {
        return Err(RmlError::VacuousObjectMap {
            triples_map: owner.to_string(),
            line,
        });
    }
    match read_term_map(graph, node, owner, line, TermType::Literal)? {
        Some(t) => Ok(ObjectMapRecord::Term(t)),
        None => Err(RmlError::VacuousObjectMap {
            triples_map: owner.to_string(),
            line,
        }),
    }
}
