//! Lightweight SPARQL handling: tokenizing, structural validation, query
//! extraction from model output, and entity/predicate term extraction.
//! Full grammar conformance is left to the endpoint.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dialect {
    /// DBpedia 2016 namespaces.
    Dbpedia2016,
    Wikidata,
    /// Surface-form queries: entities appear as string literals and
    /// predicates as bare `<name>` IRIs.
    KqaproLiteral,
}

impl Dialect {
    pub fn as_str(self) -> &'static str {
        match self {
            Dialect::Dbpedia2016 => "dbpedia-2016",
            Dialect::Wikidata => "wikidata",
            Dialect::KqaproLiteral => "kqapro-literal",
        }
    }

    /// Prefixes usable without a `PREFIX` declaration.
    pub fn default_prefixes(self) -> BTreeMap<&'static str, &'static str> {
        let mut m: BTreeMap<&str, &str> = [
            ("rdf", "http://www.w3.org/1999/02/22-rdf-syntax-ns#"),
            ("rdfs", "http://www.w3.org/2000/01/rdf-schema#"),
            ("xsd", "http://www.w3.org/2001/XMLSchema#"),
            ("owl", "http://www.w3.org/2002/07/owl#"),
            ("skos", "http://www.w3.org/2004/02/skos/core#"),
        ]
        .into_iter()
        .collect();
        match self {
            Dialect::Wikidata => m.extend([
                ("wd", WD_ENTITY),
                ("wdt", "http://www.wikidata.org/prop/direct/"),
                ("p", "http://www.wikidata.org/prop/"),
                ("ps", "http://www.wikidata.org/prop/statement/"),
                ("pq", "http://www.wikidata.org/prop/qualifier/"),
                ("wds", "http://www.wikidata.org/entity/statement/"),
                ("wikibase", "http://wikiba.se/ontology#"),
                ("bd", "http://www.bigdata.com/rdf#"),
                ("schema", "http://schema.org/"),
            ]),
            Dialect::Dbpedia2016 => m.extend([
                ("dbr", DBR),
                ("res", DBR),
                ("dbo", DBO),
                ("dbp", DBP),
                ("foaf", "http://xmlns.com/foaf/0.1/"),
                ("dct", "http://purl.org/dc/terms/"),
                ("yago", YAGO),
            ]),
            Dialect::KqaproLiteral => {}
        }
        m
    }

    /// Namespace classification table, longest namespace first.
    fn namespaces(self) -> &'static [(&'static str, TermRule)] {
        match self {
            Dialect::Wikidata => &[
                ("http://www.wikidata.org/prop/qualifier/", TermRule::Predicate("")),
                ("http://www.wikidata.org/prop/statement/", TermRule::Predicate("")),
                ("http://www.wikidata.org/prop/direct/", TermRule::Predicate("")),
                ("http://www.wikidata.org/prop/", TermRule::Predicate("")),
                (WD_ENTITY, TermRule::Entity("")),
            ],
            Dialect::Dbpedia2016 => &[
                (YAGO, TermRule::Entity("yago:")),
                (DBR, TermRule::Entity("dbr:")),
                (DBO, TermRule::OntologyCase("dbo:")),
                (DBP, TermRule::Predicate("dbp:")),
            ],
            Dialect::KqaproLiteral => &[],
        }
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dialect {
    type Err = SpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dbpedia-2016" | "dbpedia" | "lcquad1" => Ok(Dialect::Dbpedia2016),
            "wikidata" | "lcquad2" => Ok(Dialect::Wikidata),
            "kqapro-literal" | "kqapro" => Ok(Dialect::KqaproLiteral),
            other => Err(SpError::Config(format!("unknown SPARQL dialect {other:?}"))),
        }
    }
}

pub(crate) const WD_ENTITY: &str = "http://www.wikidata.org/entity/";
const DBR: &str = "http://dbpedia.org/resource/";
const DBO: &str = "http://dbpedia.org/ontology/";
const DBP: &str = "http://dbpedia.org/property/";
const YAGO: &str = "http://dbpedia.org/class/yago/";

/// Object-position predicates whose literals are values, not entity names.
const KQAPRO_VALUE_PREDICATES: &[&str] = &["pred:value", "pred:unit", "pred:date", "pred:year"];

#[derive(Debug, Clone, Copy)]
enum TermRule {
    /// Rendered as `prefix` + local name.
    Entity(&'static str),
    Predicate(&'static str),
    /// Lowercase local name is a property, uppercase a class (entity).
    OntologyCase(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryForm {
    Select,
    Ask,
    /// SELECT whose projection aggregates with COUNT.
    Count,
    /// CONSTRUCT or DESCRIBE.
    Other,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedTerms {
    /// First-occurrence order, deduplicated.
    pub entities: Vec<String>,
    pub predicates: Vec<String>,
}

/// A structurally valid query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparqlQuery {
    pub text: String,
    pub form: QueryForm,
    pub terms: ExtractedTerms,
}

impl SparqlQuery {
    /// Validates and extracts terms.
    pub fn parse(text: &str, dialect: Dialect) -> Result<Self, SpError> {
        let text = text.trim();
        let form = validate(text, dialect)?;
        let terms = extract_terms_from_sparql(text, dialect)?;
        Ok(Self {
            text: text.to_owned(),
            form,
            terms,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok<'a> {
    /// Contents between `<` and `>`.
    Iri(&'a str),
    PName {
        prefix: &'a str,
        local: &'a str,
    },
    Var(&'a str),
    Str {
        value: String,
        typed: bool,
    },
    Number(&'a str),
    Word(&'a str),
    Punct(char),
    Op(&'a str),
    Other(char),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token<'a> {
    pub tok: Tok<'a>,
    pub start: usize,
    pub end: usize,
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

fn is_local_char(c: char) -> bool {
    is_name_char(c) || c == '.' || c == '%' || c == ':'
}

/// Advances over name characters, never ending on a `.`.
fn scan_name(s: &str, from: usize, pred: fn(char) -> bool) -> usize {
    let mut last_good = from;
    for (i, c) in s[from..].char_indices() {
        if !pred(c) {
            break;
        }
        if c != '.' {
            last_good = from + i + c.len_utf8();
        }
    }
    last_good
}

pub(crate) fn tokenize(s: &str) -> Result<Vec<Token<'_>>, SpError> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.len() {
        let c = s[i..].chars().next().expect("in bounds");
        let start = i;
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if c == '#' {
            i = s[i..].find('\n').map_or(s.len(), |p| i + p);
            continue;
        }
        let (tok, end) = match c {
            '<' => {
                let rest = &s[i + 1..];
                let close = rest.find(|ch: char| {
                    ch == '>' || ch.is_whitespace() || "<\"{}|^`".contains(ch)
                });
                match close {
                    Some(p) if rest.as_bytes()[p] == b'>' => (Tok::Iri(&rest[..p]), i + 1 + p + 1),
                    _ if rest.starts_with('=') => (Tok::Op("<="), i + 2),
                    _ => (Tok::Op("<"), i + 1),
                }
            }
            '"' | '\'' => {
                let (value, mut end) = scan_string(s, i)?;
                let mut typed = false;
                if s[end..].starts_with('@') {
                    end = scan_name(s, end + 1, is_name_char);
                } else if s[end..].starts_with("^^") {
                    typed = true;
                    end += 2;
                    if s[end..].starts_with('<') {
                        end = s[end..].find('>').map_or(s.len(), |p| end + p + 1);
                    } else {
                        end = scan_name(s, end, is_local_char);
                    }
                }
                (Tok::Str { value, typed }, end)
            }
            '?' | '$' => {
                let end = scan_name(s, i + 1, is_name_char);
                if end == i + 1 {
                    (Tok::Punct(c), end)
                } else {
                    (Tok::Var(&s[i + 1..end]), end)
                }
            }
            c if c.is_ascii_digit() => {
                let mut end = i;
                while end < s.len() && bytes[end].is_ascii_digit() {
                    end += 1;
                }
                if end + 1 < s.len() && bytes[end] == b'.' && bytes[end + 1].is_ascii_digit() {
                    end += 1;
                    while end < s.len() && bytes[end].is_ascii_digit() {
                        end += 1;
                    }
                }
                if end < s.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                    let mut e = end + 1;
                    if e < s.len() && (bytes[e] == b'+' || bytes[e] == b'-') {
                        e += 1;
                    }
                    if e < s.len() && bytes[e].is_ascii_digit() {
                        end = e;
                        while end < s.len() && bytes[end].is_ascii_digit() {
                            end += 1;
                        }
                    }
                }
                (Tok::Number(&s[i..end]), end)
            }
            ':' => {
                let end = scan_name(s, i + 1, is_local_char);
                (
                    Tok::PName {
                        prefix: "",
                        local: &s[i + 1..end],
                    },
                    end,
                )
            }
            c if c.is_alphabetic() || c == '_' => {
                let end = scan_name(s, i, is_name_char);
                if s[end..].starts_with(':') {
                    let lend = scan_name(s, end + 1, is_local_char);
                    (
                        Tok::PName {
                            prefix: &s[i..end],
                            local: &s[end + 1..lend],
                        },
                        lend,
                    )
                } else {
                    (Tok::Word(&s[i..end]), end)
                }
            }
            '{' | '}' | '(' | ')' | '[' | ']' | '.' | ';' | ',' | '*' | '+' | '-' | '/'
            | '^' => (Tok::Punct(c), i + 1),
            '!' | '=' | '>' | '&' | '|' => {
                let two = s.get(i..i + 2).unwrap_or("");
                if ["!=", ">=", "&&", "||"].contains(&two) {
                    (Tok::Op(two), i + 2)
                } else {
                    (Tok::Op(&s[i..i + 1]), i + 1)
                }
            }
            other => (Tok::Other(other), i + other.len_utf8()),
        };
        out.push(Token { tok, start, end });
        i = end;
    }
    Ok(out)
}

fn scan_string(s: &str, start: usize) -> Result<(String, usize), SpError> {
    let quote = s[start..].chars().next().expect("quote");
    let triple: String = std::iter::repeat(quote).take(3).collect();
    let long = s[start..].starts_with(&triple);
    let mut i = start + if long { 3 } else { 1 };
    let mut value = String::new();
    while i < s.len() {
        let c = s[i..].chars().next().expect("in bounds");
        if c == '\\' {
            let next = s[i + 1..].chars().next();
            match next {
                Some('n') => value.push('\n'),
                Some('t') => value.push('\t'),
                Some('r') => value.push('\r'),
                Some(other) => value.push(other),
                None => break,
            }
            i += 1 + next.map_or(0, char::len_utf8);
            continue;
        }
        if long {
            if s[i..].starts_with(&triple) {
                return Ok((value, i + 3));
            }
        } else if c == quote {
            return Ok((value, i + 1));
        } else if c == '\n' {
            break;
        }
        value.push(c);
        i += c.len_utf8();
    }
    Err(SpError::Invalid(format!(
        "unterminated string literal starting at byte {start}"
    )))
}

fn is_kw(tok: &Tok<'_>, kw: &str) -> bool {
    matches!(tok, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
}

const FORMS: [&str; 4] = ["SELECT", "ASK", "CONSTRUCT", "DESCRIBE"];

fn form_keyword(tok: &Tok<'_>) -> Option<&'static str> {
    FORMS.into_iter().find(|f| is_kw(tok, f))
}

/// Structural check: balanced delimiters outside strings and IRIs, exactly
/// one top-level query form keyword, at least one `{ }` group, and every
/// prefix declared or known to the dialect.
pub fn validate(text: &str, dialect: Dialect) -> Result<QueryForm, SpError> {
    let tokens = tokenize(text)?;
    let mut stack: Vec<(char, usize)> = Vec::new();
    let mut forms = Vec::new();
    let mut has_group = false;
    let mut declared: HashSet<&str> = HashSet::new();
    let defaults = dialect.default_prefixes();
    let mut used: Vec<(&str, usize)> = Vec::new();

    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        match &t.tok {
            Tok::Punct(c @ ('{' | '(' | '[')) => {
                if *c == '{' {
                    has_group = true;
                }
                stack.push((*c, t.start));
            }
            Tok::Punct(c @ ('}' | ')' | ']')) => {
                let want = match c {
                    '}' => '{',
                    ')' => '(',
                    _ => '[',
                };
                match stack.pop() {
                    Some((open, _)) if open == want => {}
                    Some((open, at)) => {
                        return Err(SpError::Invalid(format!(
                            "mismatched delimiters: '{open}' at byte {at} closed by '{c}' at byte {}",
                            t.start
                        )))
                    }
                    None => {
                        return Err(SpError::Invalid(format!(
                            "unbalanced delimiters: '{c}' at byte {} has no matching opener",
                            t.start
                        )))
                    }
                }
            }
            Tok::Word(_) if is_kw(&t.tok, "PREFIX") => {
                if let Some(Token {
                    tok: Tok::PName { prefix, local: "" },
                    ..
                }) = tokens.get(i + 1)
                {
                    declared.insert(prefix);
                    i += 2;
                    continue;
                }
                return Err(SpError::Invalid(format!(
                    "malformed PREFIX declaration at byte {}",
                    t.start
                )));
            }
            tok if stack.is_empty() => {
                if let Some(f) = form_keyword(tok) {
                    forms.push((f, i));
                }
            }
            _ => {}
        }
        if let Tok::PName { prefix, .. } = &t.tok {
            used.push((prefix, t.start));
        }
        i += 1;
    }
    if let Some((open, at)) = stack.last() {
        return Err(SpError::Invalid(format!(
            "unbalanced delimiters: '{open}' at byte {at} is never closed"
        )));
    }
    let (form, at) = match forms.as_slice() {
        [] => {
            return Err(SpError::Invalid(
                "missing query form keyword (SELECT, ASK, CONSTRUCT or DESCRIBE)".into(),
            ))
        }
        [one] => *one,
        _ => {
            return Err(SpError::Invalid(format!(
                "{} top-level query forms found; expected exactly one",
                forms.len()
            )))
        }
    };
    if !has_group {
        return Err(SpError::Invalid("query has no { } group pattern".into()));
    }
    for (prefix, pos) in used {
        if !declared.contains(prefix) && !defaults.contains_key(prefix) {
            return Err(SpError::Invalid(format!(
                "undeclared prefix '{prefix}:' at byte {pos}"
            )));
        }
    }
    Ok(match form {
        "ASK" => QueryForm::Ask,
        "SELECT" => {
            let counts = tokens[at..]
                .iter()
                .take_while(|t| t.tok != Tok::Punct('{') && !is_kw(&t.tok, "WHERE"))
                .any(|t| is_kw(&t.tok, "COUNT"));
            if counts {
                QueryForm::Count
            } else {
                QueryForm::Select
            }
        }
        _ => QueryForm::Other,
    })
}

/// Candidate query blocks in model output: fenced code blocks when present,
/// otherwise spans starting at a `PREFIX` or query form keyword and running
/// to the end of the outermost group plus trailing solution modifiers.
pub fn candidate_blocks(raw: &str) -> Vec<&str> {
    let fenced = fenced_blocks(raw);
    if !fenced.is_empty() {
        return fenced;
    }
    keyword_blocks(raw)
}

fn fenced_blocks(raw: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = raw;
    let mut offset = 0;
    while let Some(open) = rest.find("```") {
        let after = open + 3;
        let body_start = rest[after..].find('\n').map_or(rest.len(), |p| after + p + 1);
        let Some(close) = rest[body_start..].find("```") else {
            break;
        };
        let body = raw[offset + body_start..offset + body_start + close].trim();
        if !body.is_empty() {
            out.push(body);
        }
        let consumed = body_start + close + 3;
        offset += consumed;
        rest = &raw[offset..];
    }
    out
}

fn word_at(raw: &str, pos: usize) -> Option<&str> {
    let end = scan_name(raw, pos, |c| c.is_ascii_alphabetic());
    Some(&raw[pos..end]).filter(|w| !w.is_empty())
}

fn keyword_blocks(raw: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < raw.len() {
        let Some(start) = next_keyword(raw, pos) else {
            break;
        };
        let end = block_end(raw, start);
        out.push(raw[start..end].trim());
        pos = end.max(start + 1);
    }
    out
}

fn next_keyword(raw: &str, from: usize) -> Option<usize> {
    let mut i = from;
    while i < raw.len() {
        let c = raw[i..].chars().next()?;
        let boundary = i == 0
            || !raw[..i]
                .chars()
                .next_back()
                .is_some_and(|p| p.is_alphanumeric() || p == '_' || p == '?' || p == '$');
        if boundary && c.is_ascii_alphabetic() {
            if let Some(w) = word_at(raw, i) {
                if w.eq_ignore_ascii_case("PREFIX") || FORMS.iter().any(|f| w.eq_ignore_ascii_case(f))
                {
                    return Some(i);
                }
            }
        }
        i += c.len_utf8();
    }
    None
}

/// Next keyword that starts a line.
fn next_line_keyword(raw: &str, from: usize) -> Option<usize> {
    let mut pos = from;
    while let Some(k) = next_keyword(raw, pos) {
        if raw[..k].trim_end_matches([' ', '\t']).ends_with('\n') {
            return Some(k);
        }
        pos = k + 1;
    }
    None
}

/// End of the block beginning at `start`: the close of the first top-level
/// group after a form keyword, extended over ORDER BY / GROUP BY / HAVING /
/// LIMIT / OFFSET clauses.
fn block_end(raw: &str, start: usize) -> usize {
    let slice = &raw[start..];
    let Ok(tokens) = tokenize(slice) else {
        return raw.len();
    };
    let mut depth = 0i32;
    let mut seen_form = false;
    let mut group_closed = None;
    for (idx, t) in tokens.iter().enumerate() {
        if form_keyword(&t.tok).is_some() && depth == 0 {
            if seen_form && group_closed.is_none() {
                continue;
            }
            seen_form = true;
        }
        match t.tok {
            Tok::Punct('{') => depth += 1,
            Tok::Punct('}') => {
                depth -= 1;
                if depth == 0 && seen_form {
                    group_closed = Some(idx);
                    break;
                }
            }
            _ => {}
        }
    }
    let Some(close) = group_closed else {
        return next_line_keyword(raw, start + 1).unwrap_or(raw.len());
    };
    let mut end = tokens[close].end;
    let mut j = close + 1;
    const MODIFIERS: [&str; 8] = ["ORDER", "GROUP", "BY", "HAVING", "LIMIT", "OFFSET", "ASC", "DESC"];
    let mut in_modifier = false;
    while j < tokens.len() {
        let t = &tokens[j];
        let is_mod = MODIFIERS.iter().any(|m| is_kw(&t.tok, m));
        if is_mod {
            in_modifier = true;
        } else if !in_modifier {
            break;
        }
        match &t.tok {
            _ if is_mod => {}
            Tok::Var(_) | Tok::Number(_) => {}
            Tok::Punct('(') => {
                let mut d = 0;
                while j < tokens.len() {
                    match tokens[j].tok {
                        Tok::Punct('(') => d += 1,
                        Tok::Punct(')') => {
                            d -= 1;
                            if d == 0 {
                                break;
                            }
                        }
                        _ => {}
                    }
                    j += 1;
                }
                if j == tokens.len() {
                    break;
                }
            }
            _ => break,
        }
        end = tokens[j].end;
        j += 1;
    }
    start + end
}

/// The first candidate block that passes [`validate`].
pub fn extract_query(raw: &str, dialect: Dialect) -> Result<SparqlQuery, SpError> {
    let mut last_err = None;
    for block in candidate_blocks(raw) {
        match SparqlQuery::parse(block, dialect) {
            Ok(q) => return Ok(q),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| SpError::Invalid("no SPARQL query found in the output".into())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Subject,
    Predicate,
    Object,
    AfterObject,
}

struct Collector {
    entities: Vec<String>,
    predicates: Vec<String>,
    seen_e: HashSet<String>,
    seen_p: HashSet<String>,
}

impl Collector {
    fn entity(&mut self, s: String) {
        if !s.is_empty() && self.seen_e.insert(s.clone()) {
            self.entities.push(s);
        }
    }

    fn predicate(&mut self, s: String) {
        if !s.is_empty() && self.seen_p.insert(s.clone()) {
            self.predicates.push(s);
        }
    }
}

enum TermClass {
    Entity(String),
    Predicate(String),
}

fn classify_iri(iri: &str, dialect: Dialect) -> Option<TermClass> {
    if dialect == Dialect::KqaproLiteral {
        let scheme = iri.starts_with("http://") || iri.starts_with("https://");
        return (!scheme && !iri.is_empty()).then(|| TermClass::Predicate(iri.to_owned()));
    }
    for (ns, rule) in dialect.namespaces() {
        let Some(local) = iri.strip_prefix(ns) else {
            continue;
        };
        if local.is_empty() || local.contains('/') {
            return None;
        }
        return Some(match rule {
            TermRule::Entity(p) => TermClass::Entity(format!("{p}{local}")),
            TermRule::Predicate(p) => TermClass::Predicate(format!("{p}{local}")),
            TermRule::OntologyCase(p) => {
                if local.starts_with(|c: char| c.is_uppercase()) {
                    TermClass::Entity(format!("{p}{local}"))
                } else {
                    TermClass::Predicate(format!("{p}{local}"))
                }
            }
        });
    }
    None
}

/// Entity and predicate terms of a valid query.
///
/// IRIs are classified by the dialect's namespace table. For
/// [`Dialect::KqaproLiteral`], bare `<name>` IRIs are predicates and untyped
/// string literals in subject or object position are entity surface forms,
/// except objects of value predicates.
pub fn extract_terms_from_sparql(text: &str, dialect: Dialect) -> Result<ExtractedTerms, SpError> {
    validate(text, dialect)?;
    let tokens = tokenize(text)?;
    let mut prefixes: BTreeMap<String, String> = dialect
        .default_prefixes()
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect();
    let mut c = Collector {
        entities: Vec::new(),
        predicates: Vec::new(),
        seen_e: HashSet::new(),
        seen_p: HashSet::new(),
    };

    let mut depth = 0usize;
    let mut slot = Slot::Subject;
    let mut predicate: Option<String> = None;
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i].tok;
        if is_kw(tok, "PREFIX") {
            if let (Some(Tok::PName { prefix, .. }), Some(Tok::Iri(iri))) = (
                tokens.get(i + 1).map(|t| &t.tok),
                tokens.get(i + 2).map(|t| &t.tok),
            ) {
                prefixes.insert((*prefix).to_owned(), (*iri).to_owned());
                i += 3;
                continue;
            }
        }
        let expanded = match tok {
            Tok::Iri(iri) => Some((*iri).to_owned()),
            Tok::PName { prefix, local } => prefixes.get(*prefix).map(|ns| format!("{ns}{local}")),
            _ => None,
        };
        if let Some(iri) = &expanded {
            match classify_iri(iri, dialect) {
                Some(TermClass::Entity(e)) => c.entity(e),
                Some(TermClass::Predicate(p)) => c.predicate(p),
                None => {}
            }
        }
        match tok {
            Tok::Punct('{') => {
                depth += 1;
                slot = Slot::Subject;
            }
            Tok::Punct('}') => {
                depth = depth.saturating_sub(1);
                slot = Slot::Subject;
            }
            Tok::Punct('.') => slot = Slot::Subject,
            Tok::Punct(';') => slot = Slot::Predicate,
            Tok::Punct(',') => slot = Slot::Object,
            Tok::Punct('(') | Tok::Punct('[') => {
                i = skip_balanced(&tokens, i);
                if depth > 0 {
                    slot = advance(slot);
                }
            }
            Tok::Word(w)
                if ["FILTER", "BIND", "HAVING"]
                    .iter()
                    .any(|k| w.eq_ignore_ascii_case(k)) =>
            {
                if matches!(tokens.get(i + 1).map(|t| &t.tok), Some(Tok::Punct('('))) {
                    i = skip_balanced(&tokens, i + 1);
                }
                slot = Slot::Subject;
            }
            Tok::Word(w) if w.eq_ignore_ascii_case("VALUES") => {
                let mut j = i + 1;
                while j < tokens.len() && tokens[j].tok != Tok::Punct('{') {
                    j += 1;
                }
                i = skip_balanced(&tokens, j);
                slot = Slot::Subject;
            }
            _ if depth == 0 => {}
            Tok::Word(w) if *w != "a" && !w.eq_ignore_ascii_case("true") && !w.eq_ignore_ascii_case("false") => {
                slot = Slot::Subject;
            }
            Tok::Str { value, typed } => {
                let is_entity = dialect == Dialect::KqaproLiteral
                    && !typed
                    && match slot {
                        Slot::Subject | Slot::AfterObject => true,
                        Slot::Object => !predicate
                            .as_deref()
                            .is_some_and(|p| KQAPRO_VALUE_PREDICATES.contains(&p)),
                        Slot::Predicate => false,
                    };
                if is_entity {
                    c.entity(value.clone());
                }
                slot = advance(slot);
            }
            Tok::Iri(_) | Tok::PName { .. } | Tok::Var(_) | Tok::Number(_) | Tok::Word(_) => {
                if slot == Slot::Predicate {
                    predicate = match tok {
                        Tok::Iri(iri) => Some((*iri).to_owned()),
                        _ => expanded.clone(),
                    };
                }
                slot = advance(slot);
            }
            _ => {}
        }
        i += 1;
    }
    Ok(ExtractedTerms {
        entities: c.entities,
        predicates: c.predicates,
    })
}

fn advance(slot: Slot) -> Slot {
    match slot {
        Slot::Subject | Slot::AfterObject => Slot::Predicate,
        Slot::Predicate => Slot::Object,
        Slot::Object => Slot::AfterObject,
    }
}

/// Index of the token closing the bracket opened at `open`.
fn skip_balanced(tokens: &[Token<'_>], open: usize) -> usize {
    let mut depth = 0i32;
    let mut j = open;
    while j < tokens.len() {
        match tokens[j].tok {
            Tok::Punct('(' | '[' | '{') => depth += 1,
            Tok::Punct(')' | ']' | '}') => {
                depth -= 1;
                if depth <= 0 {
                    return j;
                }
            }
            _ => {}
        }
        j += 1;
    }
    tokens.len()
}
