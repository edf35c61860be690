//! Mapping model: parsing of RML/R2RML documents and classification of their
//! predicate definitions into mapping assertions.

pub mod extract;
pub mod records;
pub mod template;
pub mod turtle;
pub mod vocab;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use extract::{extract_assertions, load_mapping_files};
pub use records::{parse_mappings, ObjectMapRecord, PredicateObjectRecord, SourceRecord, TriplesMapRecord};
pub use template::{TemplateFunction, TemplateKind, TemplatePart, TermType};

#[derive(Debug, thiserror::Error)]
pub enum RmlError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("line {line}: unknown vocabulary <{iri}>")]
    UnknownVocabulary { iri: String, line: usize },
    #[error("triples map {triples_map}: missing rml:logicalSource")]
    MissingLogicalSource { triples_map: String },
    #[error("triples map {triples_map}: missing rr:subjectMap")]
    MissingSubjectMap { triples_map: String },
    #[error("triples map {triples_map}, line {line}: term map has no template, reference or constant")]
    VacuousTermMap { triples_map: String, line: usize },
    #[error("triples map {triples_map}, line {line}: object map has no template, reference, constant or parentTriplesMap")]
    VacuousObjectMap { triples_map: String, line: usize },
    #[error("triples map {triples_map}, line {line}: more than one value for {predicate}")]
    Ambiguous { triples_map: String, predicate: String, line: usize },
    #[error("triples map {triples_map}, line {line}: invalid value for {predicate}")]
    InvalidValue { triples_map: String, predicate: String, line: usize },
    #[error("triples map {triples_map}, line {line}: a predicate-object map needs exactly one rr:predicate and one rr:objectMap")]
    PredicateObjectShape { triples_map: String, line: usize },
    #[error("triples map {triples_map}, line {line}: join condition needs rr:child and rr:parent")]
    IncompleteJoin { triples_map: String, line: usize },
    #[error("triples map {triples_map}, line {line}: unsupported reference formulation <{formulation}>")]
    UnsupportedReferenceFormulation { triples_map: String, formulation: String, line: usize },
    #[error("invalid template {template:?}: {reason}")]
    InvalidTemplate { template: String, reason: String },
    #[error("triples map {triples_map}: parentTriplesMap {parent} does not resolve")]
    DanglingParent { triples_map: String, parent: String },
    #[error("triples map {triples_map}: parent {parent} is over a different source and needs rr:joinCondition")]
    MissingJoin { triples_map: String, parent: String },
    #[error("triples map {triples_map}: only one rr:joinCondition per object map is supported")]
    MultipleJoins { triples_map: String },
    #[error("triples map {triples_map}: parent {parent} has no rr:class to reference")]
    ParentWithoutClass { triples_map: String, parent: String },
    #[error("source {source_id}: column {column:?} not in header")]
    MissingColumn { source_id: String, column: String },
    #[error("source {path}: {message}")]
    Source { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AssertionId(pub u32);

impl fmt::Display for AssertionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MA{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceFormat {
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalSource {
    pub id: String,
    pub path: PathBuf,
    pub format: SourceFormat,
    /// Column names; empty until the header has been read.
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JoinCondition {
    pub child_attribute: String,
    pub parent_attribute: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AssertionKind {
    Concept,
    Attribute,
    SingleSourceRole,
    ReferencedSourceRole,
    MultiSourceRole,
}

impl AssertionKind {
    pub fn name(self) -> &'static str {
        match self {
            AssertionKind::Concept => "Concept",
            AssertionKind::Attribute => "Attribute",
            AssertionKind::SingleSourceRole => "SingleSourceRole",
            AssertionKind::ReferencedSourceRole => "ReferencedSourceRole",
            AssertionKind::MultiSourceRole => "MultiSourceRole",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssertionObject {
    Term(TemplateFunction),
    /// The subject of another (Concept) assertion.
    Assertion(AssertionId),
}

/// What an assertion contributes to the graph: a class membership or a
/// property. Two groups overlap when they share a key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PredicateKey {
    Class(String),
    Property(String),
}

impl PredicateKey {
    pub fn local_name(&self) -> &str {
        match self {
            PredicateKey::Class(c) | PredicateKey::Property(c) => vocab::local_name(c),
        }
    }
}

impl fmt::Display for PredicateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredicateKey::Class(c) => write!(f, "rdf:type {c}"),
            PredicateKey::Property(p) => f.write_str(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingAssertion {
    pub id: AssertionId,
    pub kind: AssertionKind,
    /// IRI of the triples map the assertion was read from.
    pub triples_map: String,
    pub subject: TemplateFunction,
    /// rdf:type for a Concept.
    pub predicate: String,
    /// The class IRI for a Concept.
    pub object: AssertionObject,
    /// Child source first.
    pub sources: Vec<String>,
    pub join: Option<JoinCondition>,
    pub referenced_assertion: Option<AssertionId>,
}

impl MappingAssertion {
    pub fn key(&self) -> PredicateKey {
        match (&self.kind, &self.object) {
            (AssertionKind::Concept, AssertionObject::Term(t)) => {
                PredicateKey::Class(t.constant_value().unwrap_or_default().to_string())
            }
            _ => PredicateKey::Property(self.predicate.clone()),
        }
    }

    pub fn class(&self) -> Option<&str> {
        match (&self.kind, &self.object) {
            (AssertionKind::Concept, AssertionObject::Term(t)) => t.constant_value(),
            _ => None,
        }
    }

    pub fn child_source(&self) -> &str {
        &self.sources[0]
    }

    pub fn parent_source(&self) -> Option<&str> {
        self.sources.get(1).map(String::as_str)
    }

    /// Short human label: class or predicate local name.
    pub fn label(&self) -> String {
        match self.class() {
            Some(c) => vocab::local_name(c).to_string(),
            None => vocab::local_name(&self.predicate).to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataIntegrationSystem {
    pub ontology_predicates: BTreeSet<String>,
    /// In order of first use.
    pub sources: Vec<LogicalSource>,
    /// Indexed by assertion id.
    pub assertions: Vec<MappingAssertion>,
    /// Notes raised during extraction, e.g. triples maps with several classes.
    pub flags: Vec<String>,
}

impl DataIntegrationSystem {
    pub fn assertion(&self, id: AssertionId) -> &MappingAssertion {
        &self.assertions[id.0 as usize]
    }

    pub fn source(&self, id: &str) -> Option<&LogicalSource> {
        self.sources.iter().find(|s| s.id == id)
    }

    pub fn source_index(&self, id: &str) -> Option<usize> {
        self.sources.iter().position(|s| s.id == id)
    }

    pub fn count(&self, kind: AssertionKind) -> usize {
        self.assertions.iter().filter(|a| a.kind == kind).count()
    }

    /// Reads each source's CSV header and checks that every column an
    /// assertion refers to exists.
    pub fn load_headers(&mut self) -> Result<(), RmlError> {
        for source in &mut self.sources {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_path(&source.path)
                .map_err(|e| RmlError::Source {
                    path: source.path.clone(),
                    message: e.to_string(),
                })?;
            let headers = reader.headers().map_err(|e| RmlError::Source {
                path: source.path.clone(),
                message: e.to_string(),
            })?;
            source.attributes = headers.iter().map(str::to_string).collect();
            if source.attributes.is_empty() {
                return Err(RmlError::Source {
                    path: source.path.clone(),
                    message: "missing header row".into(),
                });
            }
        }
        self.check_columns()
    }

    fn check_columns(&self) -> Result<(), RmlError> {
        let has = |source: &str, column: &str| -> Result<(), RmlError> {
            let s = self.source(source).expect("assertion source resolves");
            if s.attributes.iter().any(|a| a == column) {
                Ok(())
            } else {
                Err(RmlError::MissingColumn {
                    source_id: source.to_string(),
                    column: column.to_string(),
                })
            }
        };
        for a in &self.assertions {
            let child = a.child_source();
            for c in a.subject.references() {
                has(child, c)?;
            }
            if let AssertionObject::Term(t) = &a.object {
                for c in t.references() {
                    has(child, c)?;
                }
            }
            if let AssertionObject::Assertion(r) = a.object {
                let parent = self.assertion(r);
                let parent_source = a.parent_source().unwrap_or(child);
                for c in parent.subject.references() {
                    has(parent_source, c)?;
                }
            }
            if let (Some(j), Some(p)) = (&a.join, a.parent_source()) {
                has(child, &j.child_attribute)?;
                has(p, &j.parent_attribute)?;
            }
        }
        Ok(())
    }
}
