//! Query-path strategy for the movie graph: pick one of the fixed path types
//! and walk it from the topic movie.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use super::IrError;
use crate::embed::{Embedder, FewShotCorpus};
use crate::eval::QuestionInstance;
use crate::llm::{ContextItem, FewShotExample, LlmError, LlmGateway, SkillKind, SkillRequest};
use crate::pipeline::{AnswerSet, PipelineError, QaPipeline};
use crate::store::{EntityId, KnowledgeGraph, RelationId};
use crate::trace::{digest, TraceEvent, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Movie,
    Actor,
    Director,
    Writer,
    Genre,
    Language,
    Year,
    Tags,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Movie,
        Category::Actor,
        Category::Director,
        Category::Writer,
        Category::Genre,
        Category::Language,
        Category::Year,
        Category::Tags,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Movie => "movie",
            Category::Actor => "actor",
            Category::Director => "director",
            Category::Writer => "writer",
            Category::Genre => "genre",
            Category::Language => "language",
            Category::Year => "year",
            Category::Tags => "tags",
        }
    }

    /// Relation linking a movie to this category; `None` for movies.
    pub fn relation(self) -> Option<&'static str> {
        match self {
            Category::Movie => None,
            Category::Actor => Some("starred_actors"),
            Category::Director => Some("directed_by"),
            Category::Writer => Some("written_by"),
            Category::Genre => Some("has_genre"),
            Category::Language => Some("in_language"),
            Category::Year => Some("release_year"),
            Category::Tags => Some("has_tags"),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = IrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| IrError::Config(format!("unknown path category {s:?}")))
    }
}

/// One relation traversal. `forward` follows head → tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PathStep {
    pub relation: &'static str,
    pub forward: bool,
}

/// A path type such as `movie_to_actor_to_movie_to_year`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryPath {
    key: String,
    waypoints: Vec<Category>,
    steps: Vec<PathStep>,
}

impl QueryPath {
    /// Waypoints must start at a movie and alternate between movies and
    /// other categories.
    pub fn parse(key: &str) -> Result<Self, IrError> {
        let waypoints: Vec<Category> = key
            .trim()
            .split("_to_")
            .map(Category::from_str)
            .collect::<Result<_, _>>()?;
        if waypoints.len() < 2 || waypoints[0] != Category::Movie {
            return Err(IrError::Config(format!("path {key:?} must start at a movie and have a step")));
        }
        let mut steps = Vec::new();
        for (i, pair) in waypoints.windows(2).enumerate() {
            let (from, to) = (pair[0], pair[1]);
            let movie_side = i % 2 == 0;
            let step = match (from, to) {
                (Category::Movie, c) if movie_side && c != Category::Movie => PathStep {
                    relation: c.relation().expect("non-movie category"),
                    forward: true,
                },
                (c, Category::Movie) if !movie_side && c != Category::Movie => PathStep {
                    relation: c.relation().expect("non-movie category"),
                    forward: false,
                },
                _ => return Err(IrError::Config(format!("path {key:?} does not alternate through movies"))),
            };
            steps.push(step);
        }
        Ok(Self {
            key: key.trim().to_owned(),
            waypoints,
            steps,
        })
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn waypoints(&self) -> &[Category] {
        &self.waypoints
    }

    pub fn steps(&self) -> &[PathStep] {
        &self.steps
    }
}

impl fmt::Display for QueryPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key)
    }
}

fn normalize_key(s: &str) -> String {
    s.trim()
        .trim_matches(|c| c == '`' || c == '"' || c == '\'' || c == '.')
        .to_lowercase()
        .replace([' ', '-'], "_")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathCatalog {
    paths: Vec<QueryPath>,
}

impl PathCatalog {
    /// The 15 three-hop types: movie, then actor, director or writer, then
    /// movie, then any other person category, genre, language or year.
    pub fn builtin() -> Self {
        let middles = [Category::Actor, Category::Director, Category::Writer];
        let ends = [
            Category::Actor,
            Category::Director,
            Category::Writer,
            Category::Genre,
            Category::Language,
            Category::Year,
        ];
        let mut paths = Vec::new();
        for m in middles {
            for e in ends.iter().filter(|&&e| e != m) {
                let key = format!("movie_to_{m}_to_movie_to_{e}");
                paths.push(QueryPath::parse(&key).expect("builtin path"));
            }
        }
        Self { paths }
    }

    pub fn from_keys<'a>(keys: impl IntoIterator<Item = &'a str>) -> Result<Self, IrError> {
        let mut paths: Vec<QueryPath> = Vec::new();
        for k in keys {
            let p = QueryPath::parse(k)?;
            if !paths.contains(&p) {
                paths.push(p);
            }
        }
        if paths.is_empty() {
            return Err(IrError::Config("empty path catalog".into()));
        }
        Ok(Self { paths })
    }

    /// One path type per line; blank lines and `#` comments are skipped.
    pub fn read(path: &Path) -> Result<Self, IrError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IrError::Config(format!("{}: {e}", path.display())))?;
        Self::from_keys(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn paths(&self) -> &[QueryPath] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Lookup tolerant of case, quotes and space or hyphen separators.
    pub fn find(&self, text: &str) -> Option<&QueryPath> {
        let want = normalize_key(text);
        self.paths.iter().find(|p| p.key == want)
    }
}

fn relation_id(graph: &KnowledgeGraph, label: &str) -> Option<RelationId> {
    graph
        .relations()
        .id_of(label)
        .or_else(|| graph.contains_relation(label).map(|r| r.id))
}

/// Walks `path` from `movie` layer by layer. Each layer is deduplicated and,
/// from the second step on, loses the entities of the layer two steps back.
pub fn traverse_path(graph: &KnowledgeGraph, movie: EntityId, path: &QueryPath) -> AnswerSet {
    let mut layers: Vec<BTreeSet<EntityId>> = vec![BTreeSet::from([movie])];
    for (i, step) in path.steps().iter().enumerate() {
        let Some(rel) = relation_id(graph, step.relation) else {
            return dead_end(i + 1, step);
        };
        let prev = &layers[i];
        let mut next = BTreeSet::new();
        for &e in prev {
            let edges = if step.forward { graph.outgoing(e) } else { graph.incoming(e) };
            next.extend(edges.iter().filter(|&&(r, _)| r == rel).map(|&(_, n)| n));
        }
        if i >= 1 {
            for e in &layers[i - 1] {
                next.remove(e);
            }
        }
        if next.is_empty() {
            return dead_end(i + 1, step);
        }
        layers.push(next);
    }
    let last = layers.last().expect("at least the start layer");
    let answers: Vec<String> = last.iter().map(|&e| graph.entities().display(e).to_owned()).collect();
    let mut out = AnswerSet::accepted(answers);
    out.hops_used = path.steps().len();
    out
}

fn dead_end(step: usize, s: &PathStep) -> AnswerSet {
    let mut out = AnswerSet::rejected(Some(format!("dead end at step {step} ({})", s.relation)));
    out.hops_used = step;
    out
}

/// Most frequent path. Ties go to the path of the most similar example, then
/// to the path seen first.
pub fn majority_path(examples: &[(QueryPath, f64)]) -> Option<QueryPath> {
    struct Tally {
        count: usize,
        best: f64,
        first: usize,
    }
    let mut tallies: HashMap<&QueryPath, Tally> = HashMap::new();
    for (i, (p, score)) in examples.iter().enumerate() {
        let t = tallies.entry(p).or_insert(Tally {
            count: 0,
            best: f64::NEG_INFINITY,
            first: i,
        });
        t.count += 1;
        t.best = t.best.max(*score);
    }
    tallies
        .into_iter()
        .max_by(|(_, a), (_, b)| {
            a.count
                .cmp(&b.count)
                .then(a.best.total_cmp(&b.best))
                .then(b.first.cmp(&a.first))
        })
        .map(|(p, _)| p.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStrategy {
    /// The model picks a path with no examples.
    ZeroShot,
    /// The model picks a path with similar training examples in the prompt.
    FewShot,
    /// The most frequent path among similar training examples; no model call.
    Majority,
    /// The instance's own `key`, for oracle runs.
    GoldKey,
}

impl FromStr for PathStrategy {
    type Err = IrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero-shot" => Ok(Self::ZeroShot),
            "few-shot" => Ok(Self::FewShot),
            "majority" => Ok(Self::Majority),
            "gold-key" => Ok(Self::GoldKey),
            _ => Err(IrError::Config(format!("unknown path strategy {s:?}"))),
        }
    }
}

pub struct MetaqaEngine {
    graph: Arc<KnowledgeGraph>,
    gateway: Arc<LlmGateway>,
    embedder: Arc<dyn Embedder>,
    few_shot: Option<Arc<FewShotCorpus>>,
    catalog: PathCatalog,
    strategy: PathStrategy,
    retries: usize,
    few_shot_n: usize,
}

impl MetaqaEngine {
    pub fn new(
        graph: Arc<KnowledgeGraph>,
        gateway: Arc<LlmGateway>,
        embedder: Arc<dyn Embedder>,
        catalog: PathCatalog,
        strategy: PathStrategy,
    ) -> Self {
        Self {
            graph,
            gateway,
            embedder,
            few_shot: None,
            catalog,
            strategy,
            retries: 2,
            few_shot_n: 5,
        }
    }

    pub fn with_few_shot(mut self, corpus: Arc<FewShotCorpus>) -> Self {
        self.few_shot = Some(corpus);
        self
    }

    pub fn with_budgets(mut self, retries: usize, few_shot_n: usize) -> Self {
        self.retries = retries;
        self.few_shot_n = few_shot_n;
        self
    }

    pub fn catalog(&self) -> &PathCatalog {
        &self.catalog
    }

    fn similar(&self, question: &str) -> Result<Vec<(FewShotExample, f64)>, IrError> {
        match &self.few_shot {
            Some(c) => Ok(c.select(self.embedder.as_ref(), question, self.few_shot_n)?),
            None => Ok(Vec::new()),
        }
    }

    /// Path named by the model, validated against the catalog with feedback
    /// retries. An empty `few_shot` gives a zero-shot prompt.
    pub fn predict_query_path(&self, question: &str, few_shot: &[FewShotExample]) -> Result<QueryPath, IrError> {
        let mut trace = Vec::new();
        let mut calls = 0;
        self.predict(question, few_shot, &mut trace, &mut calls)
    }

    fn predict(
        &self,
        question: &str,
        few_shot: &[FewShotExample],
        trace: &mut Vec<TraceRecord>,
        calls: &mut usize,
    ) -> Result<QueryPath, IrError> {
        let items: Vec<ContextItem> = self.catalog.paths().iter().map(|p| ContextItem::new(p.key(), "")).collect();
        let mut feedback: Vec<String> = Vec::new();
        let mut last_raw = String::new();
        for _ in 0..=self.retries {
            let request = SkillRequest::new(SkillKind::PathPredict, question)
                .with_context(items.clone())
                .with_few_shot(few_shot.to_vec())
                .with_feedback(feedback.clone());
            let resp = self.gateway.complete(&request).map_err(|e: LlmError| IrError::from(e))?;
            *calls += 1;
            trace.push(TraceRecord {
                step: 1,
                skill: SkillKind::PathPredict.as_str().to_owned(),
                event: TraceEvent::LlmCall,
                inputs_digest: resp.prompt_digest.clone(),
                outputs: resp.parsed_items.clone(),
                feedback: feedback.len(),
            });
            if let Some(p) = resp.parsed_items.iter().find_map(|i| self.catalog.find(i)) {
                return Ok(p.clone());
            }
            let shown = resp.parsed_items.first().cloned().unwrap_or_default();
            feedback.push(format!(
                "`{shown}` is not one of the listed path types. Reply with exactly one path type from the list."
            ));
            last_raw = resp.raw_text;
        }
        Err(IrError::Skill {
            skill: SkillKind::PathPredict,
            message: format!("no valid path type after {} attempts", self.retries + 1),
            last_raw,
        })
    }

    fn choose_path(
        &self,
        instance: &QuestionInstance,
        trace: &mut Vec<TraceRecord>,
        calls: &mut usize,
    ) -> Result<QueryPath, IrError> {
        match self.strategy {
            PathStrategy::GoldKey => {
                let key = instance
                    .extras
                    .get("key")
                    .ok_or_else(|| IrError::Config("instance has no path key".into()))?;
                self.catalog
                    .find(key)
                    .cloned()
                    .ok_or_else(|| IrError::Config(format!("path key {key:?} is not in the catalog")))
            }
            PathStrategy::ZeroShot => self.predict(&instance.question, &[], trace, calls),
            PathStrategy::FewShot => {
                let ex: Vec<FewShotExample> = self.similar(&instance.question)?.into_iter().map(|(e, _)| e).collect();
                self.predict(&instance.question, &ex, trace, calls)
            }
            PathStrategy::Majority => {
                let scored: Vec<(QueryPath, f64)> = self
                    .similar(&instance.question)?
                    .into_iter()
                    .filter_map(|(e, s)| self.catalog.find(&e.solution).map(|p| (p.clone(), s)))
                    .collect();
                trace.push(TraceRecord {
                    step: 1,
                    skill: SkillKind::PathPredict.as_str().to_owned(),
                    event: TraceEvent::Retrieval,
                    inputs_digest: digest(&instance.question),
                    outputs: scored.iter().map(|(p, _)| p.key().to_owned()).collect(),
                    feedback: 0,
                });
                majority_path(&scored).ok_or_else(|| IrError::Config("no examples with a known path".into()))
            }
        }
    }
}

impl QaPipeline for MetaqaEngine {
    fn answer(&self, instance: &QuestionInstance) -> Result<AnswerSet, PipelineError> {
        let err = |message: String| PipelineError::Instance {
            id: instance.id.clone(),
            message,
        };
        let topic = instance
            .topic_entities
            .as_deref()
            .and_then(|t| t.first())
            .ok_or_else(|| err("no topic movie".into()))?;
        let movie = self
            .graph
            .entities()
            .resolve(topic)
            .ok_or_else(|| err(format!("unknown topic movie {topic:?}")))?;
        let mut trace = Vec::new();
        let mut calls = 0;
        let path = match self.choose_path(instance, &mut trace, &mut calls) {
            Ok(p) => p,
            Err(e) => {
                let mut out = AnswerSet::rejected(Some(e.to_string()));
                out.llm_calls = calls;
                out.trace = trace;
                return Ok(out);
            }
        };
        let mut out = traverse_path(&self.graph, movie, &path);
        trace.push(TraceRecord {
            step: 2,
            skill: SkillKind::PathPredict.as_str().to_owned(),
            event: TraceEvent::Retrieval,
            inputs_digest: digest(path.key()),
            outputs: out.answers.clone(),
            feedback: 0,
        });
        out.llm_calls = calls;
        out.trace = trace;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;
    use crate::llm::{GatewayConfig, ScriptEntry, ScriptedBackend};
    use crate::store::GraphBuilder;

    fn p(key: &str) -> QueryPath {
        QueryPath::parse(key).unwrap()
    }

    #[test]
    fn builtin_catalog_has_fifteen_distinct_paths() {
        let c = PathCatalog::builtin();
        assert_eq!(c.len(), 15);
        assert!(c.find("movie_to_actor_to_movie_to_year").is_some());
        assert!(c.find(" Movie to actor to movie to year ").is_some());
        assert!(c.find("movie_to_actor_to_movie_to_actor").is_none());
    }

    #[test]
    fn parse_rejects_non_alternating_paths() {
        assert!(QueryPath::parse("movie_to_movie").is_err());
        assert!(QueryPath::parse("actor_to_movie").is_err());
        assert!(QueryPath::parse("movie_to_actor_to_year").is_err());
        assert_eq!(
            p("movie_to_actor_to_movie").steps(),
            &[
                PathStep { relation: "starred_actors", forward: true },
                PathStep { relation: "starred_actors", forward: false }
            ]
        );
    }

    #[test]
    fn shared_actor_year_excludes_start_movie() {
        let mut b = GraphBuilder::labeled();
        b.add("m1", "starred_actors", "a");
        b.add("m2", "starred_actors", "a");
        b.add("m2", "release_year", "1999");
        b.add("m1", "release_year", "1950");
        let g = b.build();
        let m1 = g.entities().id_of("m1").unwrap();
        let out = traverse_path(&g, m1, &p("movie_to_actor_to_movie_to_year"));
        assert!(out.accepted);
        assert_eq!(out.answers, vec!["1999"]);
    }

    #[test]
    fn missing_edges_are_a_dead_end() {
        let mut b = GraphBuilder::labeled();
        b.add("m1", "starred_actors", "a");
        let g = b.build();
        let m1 = g.entities().id_of("m1").unwrap();
        let out = traverse_path(&g, m1, &p("movie_to_director_to_movie_to_year"));
        assert!(!out.accepted);
        assert!(out.answers.is_empty());
    }

    #[test]
    fn majority_and_tie_break() {
        let a = p("movie_to_actor_to_movie_to_year");
        let b = p("movie_to_writer_to_movie_to_genre");
        assert_eq!(majority_path(&[(a.clone(), 0.1), (a.clone(), 0.2), (b.clone(), 0.9)]), Some(a.clone()));
        assert_eq!(majority_path(&[(a.clone(), 0.5), (b.clone(), 0.9)]), Some(b.clone()));
        assert_eq!(majority_path(&[(a.clone(), 0.5), (b.clone(), 0.5)]), Some(a.clone()));
        assert_eq!(majority_path(&[(b.clone(), 0.3)]), Some(b));
        assert_eq!(majority_path(&[]), None);
    }

    fn engine(responses: &[&str]) -> MetaqaEngine {
        let backend = Arc::new(ScriptedBackend::new(vec![ScriptEntry {
            skill: SkillKind::PathPredict,
            question: "*".into(),
            context: None,
            prompt_hash: None,
            responses: responses.iter().map(|s| s.to_string()).collect(),
        }]));
        let gw = Arc::new(LlmGateway::new(backend, GatewayConfig::default()));
        MetaqaEngine::new(
            Arc::new(GraphBuilder::labeled().build()),
            gw,
            Arc::new(HashEmbedder::default()),
            PathCatalog::builtin(),
            PathStrategy::ZeroShot,
        )
    }

    #[test]
    fn predicted_path_is_validated() {
        let e = engine(&["movie_to_actor_to_movie_to_year"]);
        assert_eq!(e.predict_query_path("q", &[]).unwrap().key(), "movie_to_actor_to_movie_to_year");
        let mut trace = Vec::new();
        let mut calls = 0;
        let e = engine(&["movie_to_cast_to_year", "movie_to_actor_to_movie_to_year"]);
        let got = e.predict("q", &[], &mut trace, &mut calls).unwrap();
        assert_eq!(got.key(), "movie_to_actor_to_movie_to_year");
        assert_eq!(calls, 2);
        assert_eq!(trace[1].feedback, 1);
        assert!(engine(&["bogus"]).predict_query_path("q", &[]).is_err());
    }
}
