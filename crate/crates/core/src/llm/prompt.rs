use std::collections::HashMap;
use std::fmt::Write as _;

use super::{LlmError, SkillKind, SkillRequest};

/// Instruction text for one skill. `{k}` in `instruction` is replaced by the
/// request's `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillTemplate {
    pub system: String,
    pub instruction: String,
    pub context_heading: String,
    pub solution_label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    /// Text whose size is checked against the context window.
    pub fn full_text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

/// Renders the user prompt. Sections always appear in this order:
/// instruction, context items, few-shot examples (omitted when empty),
/// feedback (omitted when empty), question.
pub fn render_prompt(request: &SkillRequest, template: &SkillTemplate) -> RenderedPrompt {
    let mut user = template.instruction.replace("{k}", &request.k.to_string());
    user.push_str("\n\n");
    let _ = writeln!(user, "### {}", template.context_heading);
    for item in &request.context_items {
        if item.text.is_empty() || item.text == item.id {
            let _ = writeln!(user, "- {}", item.id);
        } else {
            let _ = writeln!(user, "- {}: {}", item.id, item.text);
        }
    }
    if !request.few_shot.is_empty() {
        user.push_str("\n### Examples\n");
        for ex in &request.few_shot {
            let _ = writeln!(user, "Question: {}", ex.question);
            let _ = writeln!(user, "{}: {}", template.solution_label, ex.solution);
            user.push('\n');
        }
    } else {
        user.push('\n');
    }
    if !request.feedback.is_empty() {
        user.push_str("### Feedback on previous answers\n");
        for msg in &request.feedback {
            let _ = writeln!(user, "- {msg}");
        }
        user.push('\n');
    }
    user.push_str("### Question\n");
    user.push_str(&request.question);
    user.push('\n');
    RenderedPrompt {
        system: template.system.clone(),
        user,
    }
}

#[derive(Debug, Clone, Default)]
pub struct PromptTemplates {
    templates: HashMap<SkillKind, SkillTemplate>,
}

const SYSTEM: &str = "You answer questions over a knowledge graph. Use only the \
items listed in the prompt and follow the output format exactly.";

fn template(instruction: &str, heading: &str, label: &str) -> SkillTemplate {
    SkillTemplate {
        system: SYSTEM.to_owned(),
        instruction: instruction.to_owned(),
        context_heading: heading.to_owned(),
        solution_label: label.to_owned(),
    }
}

impl PromptTemplates {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The built-in templates for every skill.
    pub fn builtin() -> Self {
        let mut t = Self::empty();
        t.insert(
            SkillKind::RelationFilter,
            template(
                "Select the {k} relation(s) from the candidate list that lead from the topic \
                 entities toward the answer of the question. Reply with the relation names \
                 only, one per line.",
                "Candidate relations",
                "Relation path",
            ),
        );
        t.insert(
            SkillKind::RelationMulti,
            template(
                "Select every relation from the candidate list that could lead from the topic \
                 entities toward the answer. Reply with a numbered list of relation names, \
                 most likely first.",
                "Candidate relations",
                "Relation path",
            ),
        );
        t.insert(
            SkillKind::EntityFilter,
            template(
                "Decide whether any candidate entity answers the question. If so reply \
                 `answer: ` followed by the answer names separated by `; `. If none of them \
                 answers it, reply `none`.",
                "Candidate entities",
                "Answer",
            ),
        );
        t.insert(
            SkillKind::PathPredict,
            template(
                "Choose the query path type that must be followed from the topic entity to \
                 answer the question. Reply with exactly one path type from the list.",
                "Path types",
                "Path",
            ),
        );
        t.insert(
            SkillKind::EntityIdentify,
            template(
                "Pick up to {k} entities from the list that the question refers to. Reply with \
                 their ids, one per line.",
                "Entity descriptions",
                "Entities",
            ),
        );
        t.insert(
            SkillKind::PredicateIdentify,
            template(
                "Pick up to {k} predicates from the list needed to answer the question. Reply \
                 with their ids, one per line.",
                "Predicate descriptions",
                "Predicates",
            ),
        );
        t.insert(
            SkillKind::SparqlGenerate,
            template(
                "Write one SPARQL query that answers the question using the listed entities \
                 and predicates. Reply with the query in a ```sparql fenced block.",
                "Entities and predicates",
                "SPARQL",
            ),
        );
        t
    }

    pub fn insert(&mut self, kind: SkillKind, template: SkillTemplate) {
        self.templates.insert(kind, template);
    }

    pub fn get(&self, kind: SkillKind) -> Result<&SkillTemplate, LlmError> {
        self.templates
            .get(&kind)
            .ok_or(LlmError::MissingTemplate(kind))
    }

    pub fn render(&self, request: &SkillRequest) -> Result<RenderedPrompt, LlmError> {
        Ok(render_prompt(request, self.get(request.skill)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ContextItem, FewShotExample};

    fn request() -> SkillRequest {
        SkillRequest::new(SkillKind::RelationFilter, "who directed Kismet?").with_context(vec![
            ContextItem::new("directed_by", "directed_by"),
            ContextItem::new("written_by", "written_by"),
        ])
    }

    #[test]
    fn zero_shot_prompt_has_no_examples_or_feedback() {
        let p = PromptTemplates::builtin().render(&request()).unwrap();
        assert!(p.user.contains("### Candidate relations\n- directed_by\n- written_by\n"));
        assert!(!p.user.contains("### Examples"));
        assert!(!p.user.contains("### Feedback"));
        assert!(p.user.ends_with("### Question\nwho directed Kismet?\n"));
    }

    #[test]
    fn feedback_section_carries_exact_message() {
        let req = request().with_feedback(vec!["relation X not in graph".into()]);
        let p = PromptTemplates::builtin().render(&req).unwrap();
        assert!(p
            .user
            .contains("### Feedback on previous answers\n- relation X not in graph\n"));
    }

    #[test]
    fn sections_keep_fixed_order() {
        let req = request()
            .with_few_shot(vec![FewShotExample {
                question: "who wrote Kismet?".into(),
                solution: "written_by".into(),
                source_id: "t1".into(),
            }])
            .with_feedback(vec!["try again".into()]);
        let p = PromptTemplates::builtin().render(&req).unwrap();
        let pos = |s: &str| p.user.find(s).unwrap();
        assert!(pos("Select the 1 relation") < pos("### Candidate"));
        assert!(pos("### Candidate") < pos("### Examples"));
        assert!(pos("### Examples") < pos("### Feedback"));
        assert!(pos("### Feedback") < pos("### Question"));
    }

    #[test]
    fn rendering_is_byte_stable() {
        let t = PromptTemplates::builtin();
        assert_eq!(t.render(&request()).unwrap(), t.render(&request()).unwrap());
    }

    #[test]
    fn missing_template_is_a_config_error() {
        let err = PromptTemplates::empty().render(&request()).unwrap_err();
        assert!(matches!(err, LlmError::MissingTemplate(SkillKind::RelationFilter)));
    }
}
