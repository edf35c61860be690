use serde::{Deserialize, Serialize};

use super::RmlError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplatePart {
    Literal(String),
    Reference(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateKind {
    IriTemplate,
    Reference,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TermType {
    Iri,
    Literal,
}

/// A term-generating function: an IRI template, a plain column reference or
/// a constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TemplateFunction {
    pub kind: TemplateKind,
    pub parts: Vec<TemplatePart>,
    pub term_type: TermType,
}

impl TemplateFunction {
    /// Parses `rr:template` text; `{column}` marks a reference.
    pub fn iri_template(text: &str) -> Result<Self, RmlError> {
        let invalid = |reason: &str| RmlError::InvalidTemplate {
            template: text.to_string(),
            reason: reason.to_string(),
        };
        let mut parts = Vec::new();
        let mut literal = String::new();
        let mut chars = text.chars();
        while let Some(c) = chars.next() {
            match c {
                '{' => {
                    let mut column = String::new();
                    loop {
                        match chars.next() {
                            Some('}') => break,
                            Some('{') => return Err(invalid("nested '{'")),
                            Some(c) => column.push(c),
                            None => return Err(invalid("unterminated '{'")),
                        }
                    }
                    if column.is_empty() {
                        return Err(invalid("empty reference"));
                    }
                    if !literal.is_empty() {
                        parts.push(TemplatePart::Literal(std::mem::take(&mut literal)));
                    }
                    parts.push(TemplatePart::Reference(column));
                }
                '}' => return Err(invalid("unmatched '}'")),
                c => literal.push(c),
            }
        }
        if !literal.is_empty() {
            parts.push(TemplatePart::Literal(literal));
        }
        if parts.is_empty() {
            return Err(invalid("empty template"));
        }
        Ok(Self {
            kind: TemplateKind::IriTemplate,
            parts,
            term_type: TermType::Iri,
        })
    }

    pub fn reference(column: &str, term_type: TermType) -> Self {
        Self {
            kind: TemplateKind::Reference,
            parts: vec![TemplatePart::Reference(column.to_string())],
            term_type,
        }
    }

    pub fn constant(value: &str, term_type: TermType) -> Self {
        Self {
            kind: TemplateKind::Constant,
            parts: vec![TemplatePart::Literal(value.to_string())],
            term_type,
        }
    }

    pub fn references(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            TemplatePart::Reference(c) => Some(c.as_str()),
            TemplatePart::Literal(_) => None,
        })
    }

    /// Template text in `rr:template` syntax.
    pub fn template_text(&self) -> String {
        self.parts
            .iter()
            .map(|p| match p {
                TemplatePart::Literal(l) => l.clone(),
                TemplatePart::Reference(c) => format!("{{{c}}}"),
            })
            .collect()
    }

    /// Constant value, when this is a constant.
    pub fn constant_value(&self) -> Option<&str> {
        match (self.kind, self.parts.first()) {
            (TemplateKind::Constant, Some(TemplatePart::Literal(v))) => Some(v),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_references_and_literals() {
        let t = TemplateFunction::iri_template("http://ex.org/{id}/x/{name}").unwrap();
        assert_eq!(
            t.parts,
            vec![
                TemplatePart::Literal("http://ex.org/".into()),
                TemplatePart::Reference("id".into()),
                TemplatePart::Literal("/x/".into()),
                TemplatePart::Reference("name".into()),
            ]
        );
        assert_eq!(t.references().collect::<Vec<_>>(), ["id", "name"]);
        assert_eq!(t.template_text(), "http://ex.org/{id}/x/{name}");
    }

    #[test]
    fn rejects_malformed_templates() {
        for bad in ["", "http://x/{", "http://x/}", "http://x/{}", "a{b{c}}"] {
            assert!(TemplateFunction::iri_template(bad).is_err(), "{bad}");
        }
    }
}
