use std::fmt::Write as _;

use super::catalog::EntityId;
use super::graph::KnowledgeGraph;
use super::StoreError;

/// All outgoing neighbors of one movie, grouped by relation label.
///
/// Relations appear in the order of their first triple in the source file, and
/// neighbors in triple order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MovieDictionary {
    pub entries: Vec<(String, Vec<String>)>,
}

impl MovieDictionary {
    pub fn get(&self, relation: &str) -> Option<&[String]> {
        self.entries
            .iter()
            .find(|(r, _)| r == relation)
            .map(|(_, v)| v.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Python-style pretty repr (IPython layout, 79 columns): one entry per
    /// line when the dict does not fit, and a list broken one item per line
    /// when its entry does not fit.
    pub fn to_pretty_repr(&self) -> String {
        const WIDTH: usize = 79;
        let entry_flat: Vec<String> = self
            .entries
            .iter()
            .map(|(k, v)| format!("{}: {}", py_repr(k), list_repr(v)))
            .collect();
        let flat = format!("{{{}}}", entry_flat.join(", "));
        if flat.len() <= WIDTH {
            return flat;
        }

        let mut out = String::new();
        let last = self.entries.len().saturating_sub(1);
        for (i, ((key, values), flat_entry)) in self.entries.iter().zip(&entry_flat).enumerate()
        {
            out.push(if i == 0 { '{' } else { ' ' });
            let closer = if i == last { "}" } else { "," };
            if 1 + flat_entry.len() + 1 <= WIDTH || values.len() <= 1 {
                out.push_str(flat_entry);
            } else {
                let _ = write!(out, "{}: [", py_repr(key));
                for (j, value) in values.iter().enumerate() {
                    if j > 0 {
                        out.push_str("  ");
                    }
                    out.push_str(&py_repr(value));
                    out.push_str(if j + 1 == values.len() { "]" } else { ",\n" });
                }
            }
            out.push_str(closer);
            if i != last {
                out.push('\n');
            }
        }
        out
    }
}

fn list_repr(values: &[String]) -> String {
    let items: Vec<String> = values.iter().map(|v| py_repr(v)).collect();
    format!("[{}]", items.join(", "))
}

/// Python `repr` of a `str`.
fn py_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') {
        '"'
    } else {
        '\''
    };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

pub fn build_movie_dictionary(
    graph: &KnowledgeGraph,
    movie: EntityId,
) -> Result<MovieDictionary, StoreError> {
    if !graph.entities().contains_id(movie) {
        return Err(StoreError::UnknownEntity(movie.to_string()));
    }
    let mut dict = MovieDictionary::default();
    for &(rel, tail) in graph.outgoing(movie) {
        let label = graph.relations().display(rel);
        let value = graph.entities().display(tail).to_owned();
        match dict.entries.iter_mut().find(|(r, _)| r == label) {
            Some((_, values)) => values.push(value),
            None => dict.entries.push((label.to_owned(), vec![value])),
        }
    }
    Ok(dict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::GraphBuilder;

    #[test]
    fn groups_by_relation_in_source_order() {
        let mut b = GraphBuilder::labeled();
        b.add("m", "directed_by", "d");
        b.add("m", "release_year", "1999");
        b.add("x", "directed_by", "m");
        let g = b.build();
        let m = g.entities().id_of("m").unwrap();
        let dict = build_movie_dictionary(&g, m).unwrap();
        assert_eq!(
            dict.entries,
            vec![
                ("directed_by".to_owned(), vec!["d".to_owned()]),
                ("release_year".to_owned(), vec!["1999".to_owned()]),
            ]
        );
        assert_eq!(
            dict.to_pretty_repr(),
            "{'directed_by': ['d'], 'release_year': ['1999']}"
        );
    }

    #[test]
    fn movie_without_outgoing_edges_is_empty() {
        let mut b = GraphBuilder::labeled();
        b.add("x", "directed_by", "m");
        let g = b.build();
        let m = g.entities().id_of("m").unwrap();
        assert!(build_movie_dictionary(&g, m).unwrap().is_empty());
    }

    #[test]
    fn unknown_movie_is_an_error() {
        let g = GraphBuilder::labeled().build();
        assert!(build_movie_dictionary(&g, EntityId(3)).is_err());
    }

    #[test]
    fn repr_quotes_like_python() {
        assert_eq!(py_repr("bd-r"), "'bd-r'");
        assert_eq!(py_repr("Schindler's List"), "\"Schindler's List\"");
        assert_eq!(py_repr("a'b\"c"), "'a\\'b\"c'");
    }
}
