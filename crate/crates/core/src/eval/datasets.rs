//! Loaders for the native layouts of the supported datasets.
//!
//! | tag | layout |
//! |-----|--------|
//! | `webqsp` | preprocessed JSONL (`id`, `question`, `entities`, `answers`) or the official `{"Questions": [...]}` JSON |
//! | `metaqa3` | `qa_<split>.txt` lines `question with [topic]<TAB>a1\|a2`, plus `qa_<split>_qtype.txt` holding one path key per line |
//! | `cwq` | official JSON array (`ID`, `question`, `answers`, `sparql`) or preprocessed JSONL as for `webqsp` |
//! | `lcquad1` | JSON array (`_id`, `corrected_question`, `sparql_query`) |
//! | `lcquad2` | JSON array (`uid`, `question`, `NNQT_question`, `paraphrased_question`, `sparql_wikidata`) |
//! | `kqapro` | JSON array (`question`, `sparql`, `answer`, `choices`) |

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{EvalError, QuestionInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetTag {
    Webqsp,
    Metaqa3,
    Cwq,
    Lcquad1,
    Lcquad2,
    Kqapro,
}

impl DatasetTag {
    pub const ALL: [DatasetTag; 6] = [
        DatasetTag::Webqsp,
        DatasetTag::Metaqa3,
        DatasetTag::Cwq,
        DatasetTag::Lcquad1,
        DatasetTag::Lcquad2,
        DatasetTag::Kqapro,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetTag::Webqsp => "webqsp",
            DatasetTag::Metaqa3 => "metaqa3",
            DatasetTag::Cwq => "cwq",
            DatasetTag::Lcquad1 => "lcquad1",
            DatasetTag::Lcquad2 => "lcquad2",
            DatasetTag::Kqapro => "kqapro",
        }
    }

    /// Answers are compared case-insensitively for graph-label datasets.
    pub fn default_normalize(self) -> bool {
        matches!(self, DatasetTag::Webqsp | DatasetTag::Metaqa3 | DatasetTag::Cwq)
    }
}

impl fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetTag {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DatasetTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| EvalError::Config(format!("unknown dataset {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadedDataset {
    pub tag: DatasetTag,
    pub instances: Vec<QuestionInstance>,
    /// Records present in the file, including skipped ones.
    pub records: usize,
    /// Ids of records without a usable question.
    pub skipped: Vec<String>,
}

pub fn load_dataset(tag: DatasetTag, path: &Path) -> Result<LoadedDataset, EvalError> {
    let mut out = LoadedDataset {
        tag,
        instances: Vec::new(),
        records: 0,
        skipped: Vec::new(),
    };
    match tag {
        DatasetTag::Metaqa3 => load_metaqa(path, &mut out)?,
        _ => {
            let rows = read_records(path)?;
            out.records = rows.len();
            for (n, row) in rows.iter().enumerate() {
                let ctx = RecordCtx { path, index: n };
                let inst = match tag {
                    DatasetTag::Webqsp => {
                        if row.get("Questions").is_some() {
                            unreachable!("flattened by read_records")
                        }
                        webqsp_record(row, &ctx)?
                    }
                    DatasetTag::Cwq => cwq_record(row, &ctx)?,
                    DatasetTag::Lcquad1 => lcquad1_record(row, &ctx)?,
                    DatasetTag::Lcquad2 => lcquad2_record(row, &ctx)?,
                    DatasetTag::Kqapro => kqapro_record(row, &ctx)?,
                    DatasetTag::Metaqa3 => unreachable!(),
                };
                match inst {
                    Some(mut i) => {
                        i.dataset = tag;
                        out.instances.push(i);
                    }
                    None => out.skipped.push(record_id(row, n)),
                }
            }
        }
    }
    Ok(out)
}

fn record_id(row: &Value, n: usize) -> String {
    ["uid", "_id", "ID", "id", "QuestionId"]
        .iter()
        .find_map(|k| row.get(*k).map(value_text))
        .unwrap_or_else(|| n.to_string())
}

struct RecordCtx<'a> {
    path: &'a Path,
    index: usize,
}

impl RecordCtx<'_> {
    fn schema(&self, field: &str, message: &str) -> EvalError {
        EvalError::Schema {
            path: self.path.display().to_string(),
            record: self.index,
            field: field.to_owned(),
            message: message.to_owned(),
        }
    }

    fn string(&self, row: &Value, field: &str) -> Result<String, EvalError> {
        match row.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(_) => Err(self.schema(field, "expected a string")),
            None => Err(self.schema(field, "missing")),
        }
    }

    fn opt_string(&self, row: &Value, field: &str) -> Result<Option<String>, EvalError> {
        match row.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.schema(field, "expected a string or null")),
        }
    }
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// JSON array, a `{"Questions": [...]}` wrapper, or one JSON object per line.
fn read_records(path: &Path) -> Result<Vec<Value>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') || trimmed.starts_with('{') {
        if let Ok(v) = serde_json::from_str::<Value>(&text) {
            return match v {
                Value::Array(a) => Ok(a),
                Value::Object(mut o) => match o.remove("Questions") {
                    Some(Value::Array(a)) => Ok(a),
                    Some(_) => Err(EvalError::Schema {
                        path: path.display().to_string(),
                        record: 0,
                        field: "Questions".into(),
                        message: "expected an array".into(),
                    }),
                    None => Ok(vec![Value::Object(o)]),
                },
                _ => Err(EvalError::Schema {
                    path: path.display().to_string(),
                    record: 0,
                    field: "$".into(),
                    message: "expected a JSON array or object".into(),
                }),
            };
        }
    }
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(line).map_err(|e| EvalError::Schema {
            path: path.display().to_string(),
            record: n,
            field: "$".into(),
            message: format!("line {}: {e}", n + 1),
        })?);
    }
    Ok(rows)
}

fn instance(id: String, question: String) -> QuestionInstance {
    QuestionInstance {
        id,
        question,
        topic_entities: None,
        gold_answers: Vec::new(),
        gold_sparql: None,
        dataset: DatasetTag::Webqsp,
        extras: BTreeMap::new(),
    }
}

/// Preprocessed layout shared by WebQSP and CWQ: `entities` and `answers`
/// hold ids or `{kb_id, text}` objects.
fn preprocessed_record(row: &Value, ctx: &RecordCtx<'_>) -> Result<QuestionInstance, EvalError> {
    let id = ctx.string(row, "id")?;
    let question = ctx.string(row, "question")?;
    let mut inst = instance(id, question);
    let entities = row
        .get("entities")
        .and_then(Value::as_array)
        .ok_or_else(|| ctx.schema("entities", "expected an array"))?;
    inst.topic_entities = Some(
        entities
            .iter()
            .map(|e| match e {
                Value::Object(o) => o.get("kb_id").map(value_text).unwrap_or_default(),
                other => value_text(other),
            })
            .filter(|s| !s.is_empty())
            .collect(),
    );
    let answers = row
        .get("answers")
        .and_then(Value::as_array)
        .ok_or_else(|| ctx.schema("answers", "expected an array"))?;
    for a in answers {
        let text = match a {
            Value::Object(o) => o
                .get("text")
                .filter(|t| !t.is_null())
                .or_else(|| o.get("kb_id"))
                .map(value_text),
            other => Some(value_text(other)),
        };
        if let Some(t) = text.filter(|t| !t.is_empty()) {
            inst.gold_answers.push(t);
        }
    }
    Ok(inst)
}

fn webqsp_record(row: &Value, ctx: &RecordCtx<'_>) -> Result<Option<QuestionInstance>, EvalError> {
    if row.get("QuestionId").is_none() {
        return preprocessed_record(row, ctx).map(Some);
    }
    let id = ctx.string(row, "QuestionId")?;
    let question = ctx
        .opt_string(row, "RawQuestion")?
        .or(ctx.opt_string(row, "ProcessedQuestion")?)
        .ok_or_else(|| ctx.schema("RawQuestion", "missing"))?;
    let mut inst = instance(id, question);
    let parses = row
        .get("Parses")
        .and_then(Value::as_array)
        .ok_or_else(|| ctx.schema("Parses", "expected an array"))?;
    let mut topics = Vec::new();
    for p in parses {
        if let Some(mid) = p.get("TopicEntityMid").and_then(Value::as_str) {
            if !topics.iter().any(|t| t == mid) {
                topics.push(mid.to_owned());
            }
        }
        if inst.gold_sparql.is_none() {
            inst.gold_sparql = p.get("Sparql").and_then(Value::as_str).map(str::to_owned);
        }
        for a in p.get("Answers").and_then(Value::as_array).into_iter().flatten() {
            let text = a
                .get("EntityName")
                .filter(|v| !v.is_null())
                .or_else(|| a.get("AnswerArgument"))
                .map(value_text);
            if let Some(t) = text {
                if !inst.gold_answers.contains(&t) {
                    inst.gold_answers.push(t);
                }
            }
        }
    }
    inst.topic_entities = Some(topics);
    Ok(Some(inst))
}

/// Freebase ids (`ns:m.xxx`, `ns:g.xxx`) mentioned in a query.
fn freebase_ids(sparql: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut rest = sparql;
    while let Some(p) = rest.find("ns:") {
        let tail = &rest[p + 3..];
        let end = tail
            .find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.'))
            .unwrap_or(tail.len());
        let id = tail[..end].trim_end_matches('.');
        if (id.starts_with("m.") || id.starts_with("g.")) && !out.iter().any(|o| o == id) {
            out.push(id.to_owned());
        }
        rest = &tail[end..];
    }
    out
}

fn cwq_record(row: &Value, ctx: &RecordCtx<'_>) -> Result<Option<QuestionInstance>, EvalError> {
    if row.get("ID").is_none() {
        return preprocessed_record(row, ctx).map(Some);
    }
    let id = ctx.string(row, "ID")?;
    let question = ctx.string(row, "question")?;
    let mut inst = instance(id, question);
    inst.gold_sparql = ctx.opt_string(row, "sparql")?;
    inst.topic_entities = inst.gold_sparql.as_deref().map(freebase_ids);
    for a in row.get("answers").and_then(Value::as_array).into_iter().flatten() {
        if let Some(t) = a.get("answer").filter(|v| !v.is_null()).map(value_text) {
            inst.gold_answers.push(t);
        }
    }
    for key in ["machine_question", "compositionality_type"] {
        if let Some(v) = ctx.opt_string(row, key)? {
            inst.extras.insert(key.to_owned(), v);
        }
    }
    Ok(Some(inst))
}

fn lcquad1_record(row: &Value, ctx: &RecordCtx<'_>) -> Result<Option<QuestionInstance>, EvalError> {
    let id = ctx.string(row, "_id")?;
    let question = ctx.string(row, "corrected_question")?;
    let mut inst = instance(id, question);
    inst.gold_sparql = Some(ctx.string(row, "sparql_query")?);
    if let Some(v) = ctx.opt_string(row, "intermediary_question")? {
        inst.extras.insert("intermediary_question".into(), v);
    }
    Ok(Some(inst))
}

/// Records whose `question` is null or blank are skipped; the annotated
/// variants are kept in `extras` but never used as the question.
fn lcquad2_record(row: &Value, ctx: &RecordCtx<'_>) -> Result<Option<QuestionInstance>, EvalError> {
    let id = ctx.string(row, "uid")?;
    let Some(question) = ctx.opt_string(row, "question")?.filter(|q| !q.trim().is_empty()) else {
        return Ok(None);
    };
    let mut inst = instance(id, question);
    inst.gold_sparql = ctx.opt_string(row, "sparql_wikidata")?;
    for key in ["NNQT_question", "paraphrased_question", "sparql_dbpedia18", "template"] {
        match row.get(key) {
            Some(Value::String(s)) => {
                inst.extras.insert(key.to_owned(), s.clone());
            }
            Some(Value::Null) | None => {}
            Some(other) => {
                inst.extras.insert(key.to_owned(), other.to_string());
            }
        }
    }
    Ok(Some(inst))
}

fn kqapro_record(row: &Value, ctx: &RecordCtx<'_>) -> Result<Option<QuestionInstance>, EvalError> {
    let question = ctx.string(row, "question")?;
    let mut inst = instance(ctx.index.to_string(), question);
    inst.gold_sparql = ctx.opt_string(row, "sparql")?;
    if let Some(a) = row.get("answer").filter(|v| !v.is_null()) {
        inst.gold_answers.push(value_text(a));
    }
    if let Some(choices) = row.get("choices").and_then(Value::as_array) {
        let list: Vec<String> = choices.iter().map(value_text).collect();
        inst.extras.insert("choices".into(), list.join("|"));
    }
    Ok(Some(inst))
}

/// The path-key sidecar of a MetaQA split: `qa_test.txt` → `qa_test_qtype.txt`.
pub fn metaqa_qtype_path(qa: &Path) -> PathBuf {
    let stem = qa.file_stem().and_then(|s| s.to_str()).unwrap_or("qa");
    qa.with_file_name(format!("{stem}_qtype.txt"))
}

fn load_metaqa(path: &Path, out: &mut LoadedDataset) -> Result<(), EvalError> {
    let file = std::fs::File::open(path).map_err(|e| EvalError::io(path, e))?;
    let qtype_path = metaqa_qtype_path(path);
    let keys: Option<Vec<String>> = if qtype_path.exists() {
        let text = std::fs::read_to_string(&qtype_path).map_err(|e| EvalError::io(&qtype_path, e))?;
        Some(text.lines().map(|l| l.trim().to_owned()).collect())
    } else {
        None
    };
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("qa");
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| EvalError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ctx = RecordCtx { path, index: n };
        let (q, answers) = line
            .split_once('\t')
            .ok_or_else(|| ctx.schema("answers", "expected question<TAB>answers"))?;
        let open = q.find('[');
        let close = q.find(']');
        let (Some(o), Some(c)) = (open, close) else {
            return Err(ctx.schema("topic", "question has no [topic] marker"));
        };
        if c < o {
            return Err(ctx.schema("topic", "malformed [topic] marker"));
        }
        let topic = q[o + 1..c].to_owned();
        let question = format!("{}{}{}", &q[..o], &q[o + 1..c], &q[c + 1..]);
        let mut inst = instance(format!("{stem}-{}", out.records), question);
        inst.dataset = DatasetTag::Metaqa3;
        inst.topic_entities = Some(vec![topic]);
        inst.gold_answers = answers
            .split('|')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .map(str::to_owned)
            .collect();
        if let Some(keys) = &keys {
            let key = keys
                .get(out.records)
                .ok_or_else(|| ctx.schema("key", "qtype file has fewer lines than the question file"))?;
            inst.extras.insert("key".into(), key.clone());
        }
        out.records += 1;
        out.instances.push(inst);
    }
    Ok(())
}
