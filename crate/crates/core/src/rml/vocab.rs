//! IRIs of the accepted mapping vocabulary.

pub const RR: &str = "http://www.w3.org/ns/r2rml#";
pub const RML: &str = "http://semweb.mmlab.be/ns/rml#";
pub const QL: &str = "http://semweb.mmlab.be/ns/ql#";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

pub const TRIPLES_MAP: &str = "http://www.w3.org/ns/r2rml#TriplesMap";

pub const LOGICAL_SOURCE: &str = "http://semweb.mmlab.be/ns/rml#logicalSource";
pub const SOURCE: &str = "http://semweb.mmlab.be/ns/rml#source";
pub const REFERENCE_FORMULATION: &str = "http://semweb.mmlab.be/ns/rml#referenceFormulation";
pub const REFERENCE: &str = "http://semweb.mmlab.be/ns/rml#reference";
pub const QL_CSV: &str = "http://semweb.mmlab.be/ns/ql#CSV";

pub const SUBJECT_MAP: &str = "http://www.w3.org/ns/r2rml#subjectMap";
pub const TEMPLATE: &str = "http://www.w3.org/ns/r2rml#template";
pub const CONSTANT: &str = "http://www.w3.org/ns/r2rml#constant";
/// R2RML spelling of a column reference; treated as `rml:reference`.
pub const COLUMN: &str = "http://www.w3.org/ns/r2rml#column";
pub const CLASS: &str = "http://www.w3.org/ns/r2rml#class";
pub const PREDICATE_OBJECT_MAP: &str = "http://www.w3.org/ns/r2rml#predicateObjectMap";
pub const PREDICATE: &str = "http://www.w3.org/ns/r2rml#predicate";
pub const OBJECT_MAP: &str = "http://www.w3.org/ns/r2rml#objectMap";
pub const PARENT_TRIPLES_MAP: &str = "http://www.w3.org/ns/r2rml#parentTriplesMap";
pub const JOIN_CONDITION: &str = "http://www.w3.org/ns/r2rml#joinCondition";
pub const CHILD: &str = "http://www.w3.org/ns/r2rml#child";
pub const PARENT: &str = "http://www.w3.org/ns/r2rml#parent";

/// Every predicate a mapping document may use.
pub const ACCEPTED_PREDICATES: &[&str] = &[
    RDF_TYPE,
    LOGICAL_SOURCE,
    SOURCE,
    REFERENCE_FORMULATION,
    SUBJECT_MAP,
    TEMPLATE,
    REFERENCE,
    COLUMN,
    CONSTANT,
    PREDICATE_OBJECT_MAP,
    PREDICATE,
    OBJECT_MAP,
    PARENT_TRIPLES_MAP,
    JOIN_CONDITION,
    CHILD,
    PARENT,
    CLASS,
];

pub fn is_accepted_predicate(iri: &str) -> bool {
    ACCEPTED_PREDICATES.contains(&iri)
}

/// Local name of an IRI: the part after the last `#` or `/`.
pub fn local_name(iri: &str) -> &str {
    let cut = iri.rfind(['#', '/']).map(|i| i + 1).unwrap_or(0);
    if cut >= iri.len() {
        iri
    } else {
        &iri[cut..]
    }
}
