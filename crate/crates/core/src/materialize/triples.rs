//! Canonical N-Triples terms and lines.

use crate::rml::{TemplateFunction, TemplateKind, TemplatePart, TermType};

/// A CSV row addressed by column name.
pub trait Row {
    fn get(&self, column: &str) -> Option<&str>;
}

pub struct IndexedRow<'a> {
    pub header: &'a std::collections::HashMap<String, usize>,
    pub cells: &'a [String],
}

impl Row for IndexedRow<'_> {
    fn get(&self, column: &str) -> Option<&str> {
        self.header.get(column).and_then(|&i| self.cells.get(i)).map(String::as_str)
    }
}

fn is_unreserved(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~')
}

/// Percent-encodes everything outside the RFC 3986 unreserved set.
pub fn percent_encode(value: &str, out: &mut String) {
    for &b in value.as_bytes() {
        if is_unreserved(b) {
            out.push(b as char);
        } else {
            out.push('%');
            out.push(char::from_digit((b >> 4) as u32, 16).unwrap().to_ascii_uppercase());
            out.push(char::from_digit((b & 0xF) as u32, 16).unwrap().to_ascii_uppercase());
        }
    }
}

/// Escapes characters that may not appear inside an N-Triples IRIREF.
fn escape_iri(value: &str, out: &mut String) {
    for c in value.chars() {
        if c <= ' ' || "<>\"{}|^`\\".contains(c) {
            let mut buf = [0u8; 4];
            for b in c.encode_utf8(&mut buf).bytes() {
                out.push_str(&format!("%{b:02X}"));
            }
        } else {
            out.push(c);
        }
    }
}

fn escape_literal(value: &str, out: &mut String) {
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
}

/// Renders `f` over `row` as an N-Triples term, or `None` when a referenced
/// cell is missing or empty.
pub fn render(f: &TemplateFunction, row: &impl Row) -> Option<String> {
    let mut out = String::new();
    match (f.kind, f.term_type) {
        (TemplateKind::IriTemplate, _) => {
            out.push('<');
            for part in &f.parts {
                match part {
                    TemplatePart::Literal(l) => escape_iri(l, &mut out),
                    TemplatePart::Reference(c) => {
                        let v = row.get(c).filter(|v| !v.is_empty())?;
                        percent_encode(v, &mut out);
                    }
                }
            }
            out.push('>');
        }
        (TemplateKind::Reference, tt) => {
            let column = f.references().next()?;
            let v = row.get(column).filter(|v| !v.is_empty())?;
            wrap(v, tt, &mut out);
        }
        (TemplateKind::Constant, tt) => wrap(f.constant_value()?, tt, &mut out),
    }
    Some(out)
}

fn wrap(v: &str, tt: TermType, out: &mut String) {
    match tt {
        TermType::Iri => {
            out.push('<');
            escape_iri(v, out);
            out.push('>');
        }
        TermType::Literal => {
            out.push('"');
            escape_literal(v, out);
            out.push('"');
        }
    }
}

pub fn iri(value: &str) -> String {
    let mut out = String::from("<");
    escape_iri(value, &mut out);
    out.push('>');
    out
}

pub fn line(s: &str, p: &str, o: &str) -> String {
    let mut l = String::with_capacity(s.len() + p.len() + o.len() + 4);
    l.push_str(s);
    l.push(' ');
    l.push_str(p);
    l.push(' ');
    l.push_str(o);
    l.push_str(" .");
    l
}

/// Splits a canonical N-Triples line into its three terms; `None` if it is
/// not well formed.
pub fn parse_line(line: &str) -> Option<(&str, &str, &str)> {
    let body = line.strip_suffix(" .")?;
    let (s, rest) = iri_term(body)?;
    let rest = rest.strip_prefix(' ')?;
    let (p, rest) = iri_term(rest)?;
    let o = rest.strip_prefix(' ')?;
    let valid_object = if o.starts_with('<') {
        iri_term(o).is_some_and(|(_, r)| r.is_empty())
    } else {
        literal_ok(o)
    };
    valid_object.then_some((s, p, o))
}

fn iri_term(text: &str) -> Option<(&str, &str)> {
    if !text.starts_with('<') {
        return None;
    }
    let end = text.find('>')?;
    let inner = &text[1..end];
    if inner.is_empty() || inner.chars().any(|c| c <= ' ' || "<\"{}|^`\\".contains(c)) {
        return None;
    }
    Some((&text[..=end], &text[end + 1..]))
}

fn literal_ok(text: &str) -> bool {
    let Some(inner) = text.strip_prefix('"').and_then(|t| t.strip_suffix('"')) else {
        return false;
    };
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                if !matches!(chars.next(), Some('"' | '\\' | 'n' | 'r' | 't')) {
                    return false;
                }
            }
            '"' | '\n' | '\r' => return false,
            _ => {}
        }
    }
    true
}
