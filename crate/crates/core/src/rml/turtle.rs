//! A small Turtle reader covering what mapping documents use in practice:
//! prefix/base directives, IRIs, prefixed names, `a`, blank node labels and
//! property lists, and string/numeric/boolean literals. Collections and
//! nested quoting are not supported.

use std::collections::HashMap;

use super::RmlError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(String),
    Blank(String),
    Literal(String),
}

impl Term {
    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub subject: Term,
    pub predicate: String,
    pub object: Term,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Iri(String),
    PName(String, String),
    Blank(String),
    Str(String),
    LangTag,
    Caret2,
    Number(String),
    Bool(String),
    A,
    Dot,
    Semi,
    Comma,
    LBracket,
    RBracket,
    AtPrefix,
    AtBase,
    SparqlPrefix,
    SparqlBase,
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> RmlError {
    RmlError::Syntax {
        line,
        col,
        message: message.into(),
    }
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '%')
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            chars: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn tokens(mut self) -> Result<Vec<Spanned>, RmlError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            let (line, col) = (self.line, self.col);
            let Some(c) = self.peek() else {
                out.push(Spanned {
                    tok: Tok::Eof,
                    line,
                    col,
                });
                return Ok(out);
            };
            let tok = match c {
                '<' => {
                    self.bump();
                    let mut s = String::new();
                    loop {
                        match self.bump() {
                            Some('>') => break,
                            Some('\n') | None => return Err(syntax(line, col, "unterminated IRI")),
                            Some(c) => s.push(c),
                        }
                    }
                    Tok::Iri(s)
                }
                '"' | '\'' => Tok::Str(self.string(c, line, col)?),
                '@' => {
                    self.bump();
                    let word = self.word();
                    match word.as_str() {
                        "prefix" => Tok::AtPrefix,
                        "base" => Tok::AtBase,
                        w if !w.is_empty() => Tok::LangTag,
                        _ => return Err(syntax(line, col, "expected directive or language tag after '@'")),
                    }
                }
                '^' => {
                    self.bump();
                    if self.bump() != Some('^') {
                        return Err(syntax(line, col, "expected '^^'"));
                    }
                    Tok::Caret2
                }
                '.' => {
                    self.bump();
                    Tok::Dot
                }
                ';' => {
                    self.bump();
                    Tok::Semi
                }
                ',' => {
                    self.bump();
                    Tok::Comma
                }
                '[' => {
                    self.bump();
                    Tok::LBracket
                }
                ']' => {
                    self.bump();
                    Tok::RBracket
                }
                '_' => {
                    self.bump();
                    if self.bump() != Some(':') {
                        return Err(syntax(line, col, "expected ':' in blank node label"));
                    }
                    let label = self.word();
                    if label.is_empty() {
                        return Err(syntax(line, col, "empty blank node label"));
                    }
                    Tok::Blank(label)
                }
                c if c.is_ascii_digit() || c == '+' || c == '-' => {
                    let mut s = String::new();
                    while let Some(c) = self.peek() {
                        if c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.') {
                            // a trailing '.' terminates the statement
                            if c == '.' {
                                let mut look = self.chars.clone();
                                look.next();
                                if !look.peek().is_some_and(|d| d.is_ascii_digit()) {
                                    break;
                                }
                            }
                            s.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Tok::Number(s)
                }
                c if c.is_alphabetic() || c == ':' => {
                    let word = self.word();
                    match word.split_once(':') {
                        Some((prefix, local)) => Tok::PName(prefix.to_string(), local.to_string()),
                        None => match word.as_str() {
                            "a" => Tok::A,
                            "true" | "false" => Tok::Bool(word),
                            w if w.eq_ignore_ascii_case("prefix") => Tok::SparqlPrefix,
                            w if w.eq_ignore_ascii_case("base") => Tok::SparqlBase,
                            _ => return Err(syntax(line, col, format!("unexpected word '{word}'"))),
                        },
                    }
                }
                other => return Err(syntax(line, col, format!("unexpected character '{other}'"))),
            };
            out.push(Spanned { tok, line, col });
        }
    }

    /// Reads name characters; a trailing '.' is left for the statement terminator.
    fn word(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if !is_name_char(c) {
                break;
            }
            if c == '.' {
                let mut look = self.chars.clone();
                look.next();
                if !look.peek().is_some_and(|&d| is_name_char(d) && d != '.') {
                    break;
                }
            }
            s.push(c);
            self.bump();
        }
        s
    }

    fn string(&mut self, quote: char, line: usize, col: usize) -> Result<String, RmlError> {
        self.bump();
        let mut long = false;
        if self.peek() == Some(quote) {
            self.bump();
            if self.peek() == Some(quote) {
                self.bump();
                long = true;
            } else {
                return Ok(String::new());
            }
        }
        let mut s = String::new();
        loop {
            let Some(c) = self.bump() else {
                return Err(syntax(line, col, "unterminated string literal"));
            };
            match c {
                '\\' => {
                    let e = self
                        .bump()
                        .ok_or_else(|| syntax(line, col, "unterminated escape"))?;
                    match e {
                        't' => s.push('\t'),
                        'n' => s.push('\n'),
                        'r' => s.push('\r'),
                        'b' => s.push('\u{8}'),
                        'f' => s.push('\u{c}'),
                        '"' | '\'' | '\\' => s.push(e),
                        'u' | 'U' => {
                            let len = if e == 'u' { 4 } else { 8 };
                            let hex: String = (0..len).filter_map(|_| self.bump()).collect();
                            let ch = u32::from_str_radix(&hex, 16)
                                .ok()
                                .and_then(char::from_u32)
                                .ok_or_else(|| syntax(line, col, "invalid unicode escape"))?;
                            s.push(ch);
                        }
                        other => return Err(syntax(line, col, format!("invalid escape '\\{other}'"))),
                    }
                }
                '\n' if !long => return Err(syntax(line, col, "newline in string literal")),
                c if c == quote => {
                    if !long {
                        return Ok(s);
                    }
                    let mut look = self.chars.clone();
                    if look.next() == Some(quote) && look.next() == Some(quote) {
                        self.bump();
                        self.bump();
                        return Ok(s);
                    }
                    s.push(c);
                }
                c => s.push(c),
            }
        }
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    prefixes: HashMap<String, String>,
    base: String,
    next_blank: usize,
    triples: Vec<Triple>,
}

/// Parses a Turtle document into triples in document order.
pub fn parse(text: &str) -> Result<Vec<Triple>, RmlError> {
    let toks = Lexer::new(text).tokens()?;
    let mut p = Parser {
        toks,
        pos: 0,
        prefixes: HashMap::new(),
        base: String::new(),
        next_blank: 0,
        triples: Vec::new(),
    };
    p.document()?;
    Ok(p.triples)
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, message: impl Into<String>) -> RmlError {
        let t = self.peek();
        syntax(t.line, t.col, message)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), RmlError> {
        if self.peek().tok == tok {
            self.next();
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn document(&mut self) -> Result<(), RmlError> {
        loop {
            match self.peek().tok.clone() {
                Tok::Eof => return Ok(()),
                Tok::AtPrefix | Tok::SparqlPrefix => {
                    let sparql = self.next().tok == Tok::SparqlPrefix;
                    let Tok::PName(prefix, local) = self.next().tok else {
                        return Err(self.err("expected prefix name"));
                    };
                    if !local.is_empty() {
                        return Err(self.err("prefix name must end with ':'"));
                    }
                    let Tok::Iri(iri) = self.next().tok else {
                        return Err(self.err("expected IRI after prefix name"));
                    };
                    let iri = self.resolve(&iri);
                    self.prefixes.insert(prefix, iri);
                    if !sparql {
                        self.expect(Tok::Dot, "'.' after @prefix")?;
                    }
                }
                Tok::AtBase | Tok::SparqlBase => {
                    let sparql = self.next().tok == Tok::SparqlBase;
                    let Tok::Iri(iri) = self.next().tok else {
                        return Err(self.err("expected IRI after base"));
                    };
                    self.base = self.resolve(&iri);
                    if !sparql {
                        self.expect(Tok::Dot, "'.' after @base")?;
                    }
                }
                _ => {
                    self.statement()?;
                }
            }
        }
    }

    fn statement(&mut self) -> Result<(), RmlError> {
        let subject = if self.peek().tok == Tok::LBracket {
            let node = self.blank_property_list()?;
            if self.peek().tok == Tok::Dot {
                self.next();
                return Ok(());
            }
            node
        } else {
            self.subject()?
        };
        self.predicate_object_list(&subject)?;
        self.expect(Tok::Dot, "'.' at end of statement")
    }

    fn subject(&mut self) -> Result<Term, RmlError> {
        let t = self.next();
        match t.tok {
            Tok::Iri(i) => Ok(Term::Iri(self.resolve(&i))),
            Tok::PName(p, l) => Ok(Term::Iri(self.expand(&p, &l, t.line, t.col)?)),
            Tok::Blank(b) => Ok(Term::Blank(b)),
            _ => Err(syntax(t.line, t.col, "expected subject")),
        }
    }

    fn predicate_object_list(&mut self, subject: &Term) -> Result<(), RmlError> {
        loop {
            let t = self.next();
            let predicate = match t.tok {
                Tok::A => super::vocab::RDF_TYPE.to_string(),
                Tok::Iri(i) => self.resolve(&i),
                Tok::PName(p, l) => self.expand(&p, &l, t.line, t.col)?,
                _ => return Err(syntax(t.line, t.col, "expected predicate")),
            };
            loop {
                let line = self.peek().line;
                let object = self.object()?;
                self.triples.push(Triple {
                    subject: subject.clone(),
                    predicate: predicate.clone(),
                    object,
                    line,
                });
                if self.peek().tok == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
            if self.peek().tok != Tok::Semi {
                return Ok(());
            }
            while self.peek().tok == Tok::Semi {
                self.next();
            }
            if matches!(self.peek().tok, Tok::Dot | Tok::RBracket) {
                return Ok(());
            }
        }
    }

    fn blank_property_list(&mut self) -> Result<Term, RmlError> {
        self.expect(Tok::LBracket, "'['")?;
        self.next_blank += 1;
        let node = Term::Blank(format!("genid{}", self.next_blank));
        if self.peek().tok != Tok::RBracket {
            self.predicate_object_list(&node)?;
        }
        self.expect(Tok::RBracket, "']'")?;
        Ok(node)
    }

    fn object(&mut self) -> Result<Term, RmlError> {
        if self.peek().tok == Tok::LBracket {
            return self.blank_property_list();
        }
        let t = self.next();
        match t.tok {
            Tok::Iri(i) => Ok(Term::Iri(self.resolve(&i))),
            Tok::PName(p, l) => Ok(Term::Iri(self.expand(&p, &l, t.line, t.col)?)),
            Tok::Blank(b) => Ok(Term::Blank(b)),
            Tok::Str(s) => {
                match self.peek().tok {
                    Tok::LangTag => {
                        self.next();
                    }
                    Tok::Caret2 => {
                        self.next();
                        let d = self.next();
                        if !matches!(d.tok, Tok::Iri(_) | Tok::PName(..)) {
                            return Err(syntax(d.line, d.col, "expected datatype IRI"));
                        }
                    }
                    _ => {}
                }
                Ok(Term::Literal(s))
            }
            Tok::Number(n) => Ok(Term::Literal(n)),
            Tok::Bool(b) => Ok(Term::Literal(b)),
            _ => Err(syntax(t.line, t.col, "expected object")),
        }
    }

    fn expand(&self, prefix: &str, local: &str, line: usize, col: usize) -> Result<String, RmlError> {
        match self.prefixes.get(prefix) {
            Some(ns) => Ok(format!("{ns}{local}")),
            None => Err(syntax(line, col, format!("undeclared prefix '{prefix}:'"))),
        }
    }

    fn resolve(&self, iri: &str) -> String {
        let has_scheme = iri
            .find(':')
            .is_some_and(|i| !iri[..i].contains(['/', '#', '?']) && i > 0);
        if has_scheme || self.base.is_empty() {
            return iri.to_string();
        }
        if iri.starts_with('#') {
            let base = self.base.split('#').next().unwrap_or("");
            return format!("{base}{iri}");
        }
        match self.base.rfind('/') {
            Some(i) => format!("{}{}", &self.base[..=i], iri),
            None => format!("{}{}", self.base, iri),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefixes_blank_nodes_and_lists() {
        let doc = r#"
            @prefix ex: <http://ex.org/> .
            # comment
            ex:s a ex:C ;
                ex:p [ ex:q "v" , 'w' ] ;
                ex:n 42 .
        "#;
        let triples = parse(doc).unwrap();
        assert_eq!(triples.len(), 5);
        assert_eq!(triples[0].predicate, super::super::vocab::RDF_TYPE);
        assert_eq!(triples[0].object, Term::Iri("http://ex.org/C".into()));
        // nested triples for the blank node come before the outer triple
        assert_eq!(triples[1].object, Term::Literal("v".into()));
        assert_eq!(triples[2].object, Term::Literal("w".into()));
        assert!(matches!(triples[3].object, Term::Blank(_)));
        assert_eq!(triples[4].object, Term::Literal("42".into()));
        assert_eq!(triples[4].line, 6);
    }

    #[test]
    fn relative_iris_stay_relative_without_base() {
        let triples = parse("<#TM1> <http://x/p> <#TM2> .").unwrap();
        assert_eq!(triples[0].subject, Term::Iri("#TM1".into()));
        let triples = parse("@base <http://b.org/m.ttl> . <#TM1> <http://x/p> \"a\" .").unwrap();
        assert_eq!(triples[0].subject, Term::Iri("http://b.org/m.ttl#TM1".into()));
    }

    #[test]
    fn escapes_and_long_strings() {
        let triples = parse(r#"<a:s> <a:p> "x\"yA" . <a:s> <a:p> """multi
line""" ."#)
        .unwrap();
        assert_eq!(triples[0].object, Term::Literal("x\"yA".into()));
        assert_eq!(triples[1].object, Term::Literal("multi\nline".into()));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse("@prefix ex: <http://ex.org/> .\nex:s ex:p ex:o").unwrap_err();
        match err {
            RmlError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse("ex:s ex:p ex:o .").unwrap_err();
        assert!(matches!(err, RmlError::Syntax { line: 1, col: 1, .. }));
        assert!(parse("<a:s> <a:p> \"open .").is_err());
    }

    #[test]
    fn trailing_dot_after_prefixed_name() {
        let triples = parse("@prefix ex: <http://ex.org/> . ex:s ex:p ex:o.").unwrap();
        assert_eq!(triples[0].object, Term::Iri("http://ex.org/o".into()));
    }
}
