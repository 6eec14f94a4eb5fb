//! Turning model text into item lists. Every parsed item is a trimmed
//! substring of the raw text.

use super::SkillKind;

/// Strips `1.`, `2)`, `-`, `*` or `•` list markers and surrounding quotes or
/// backticks.
pub fn strip_list_marker(line: &str) -> &str {
    let mut s = line.trim();
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            s = r.trim_start();
        }
    }
    for marker in ["- ", "* ", "• "] {
        if let Some(r) = s.strip_prefix(marker) {
            s = r.trim_start();
            break;
        }
    }
    let s = s.trim();
    let s = s.trim_matches(|c| c == '`' || c == '"' || c == '\'');
    s.trim()
}

fn split_items<'a>(raw: &'a str, seps: &[char]) -> Vec<String> {
    raw.split(|c: char| c == '\n' || seps.contains(&c))
        .map(strip_list_marker)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Strips a leading `answer:` tag, case-insensitively.
pub(crate) fn strip_answer_tag(raw: &str) -> &str {
    let t = raw.trim_start();
    if t.len() >= 7 && t[..7].eq_ignore_ascii_case("answer:") {
        &t[7..]
    } else {
        t
    }
}

/// Per-skill output parser.
///
/// Relation and id skills split on newlines and commas; entity answers split
/// on newlines, `;` and `|` (labels may contain commas); path prediction splits
/// on lines; SPARQL generation returns candidate query blocks.
pub fn parse_items(skill: SkillKind, raw: &str) -> Vec<String> {
    match skill {
        SkillKind::RelationFilter
        | SkillKind::RelationMulti
        | SkillKind::EntityIdentify
        | SkillKind::PredicateIdentify => split_items(raw, &[',']),
        SkillKind::EntityFilter => split_items(strip_answer_tag(raw), &[';', '|']),
        SkillKind::PathPredict => split_items(raw, &[]),
        SkillKind::SparqlGenerate => crate::sp::candidate_blocks(raw)
            .into_iter()
            .map(str::to_owned)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbered_lists_split_into_items() {
        assert_eq!(
            parse_items(SkillKind::RelationMulti, "1. a\n2. b"),
            vec!["a", "b"]
        );
        assert_eq!(
            parse_items(SkillKind::RelationFilter, "directed_by"),
            vec!["directed_by"]
        );
        assert_eq!(
            parse_items(SkillKind::RelationFilter, "`x`, y\n- z\n\n"),
            vec!["x", "y", "z"]
        );
    }

    #[test]
    fn entity_answers_keep_commas() {
        assert_eq!(
            parse_items(SkillKind::EntityFilter, "answer: Washington, D.C.; Paris"),
            vec!["Washington, D.C.", "Paris"]
        );
        assert_eq!(
            parse_items(SkillKind::EntityFilter, "Answer: Justin Bieber"),
            vec!["Justin Bieber"]
        );
    }

    #[test]
    fn items_are_substrings_of_raw_text() {
        let raw = "1) \"alpha\"\n* beta, gamma";
        for item in parse_items(SkillKind::RelationMulti, raw) {
            assert!(raw.contains(&item), "{item}");
        }
    }
}
