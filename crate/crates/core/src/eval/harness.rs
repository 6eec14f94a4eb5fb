use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{exact_match, f1, hits_at_1};
use super::{EvalError, QuestionInstance};
use crate::pipeline::QaPipeline;
use crate::sp::SparqlEndpoint;
use crate::trace::TraceEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sample {
    All,
    First(usize),
    /// `n` instances drawn without replacement, kept in dataset order.
    Random { n: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Lowercase and trim answers before comparison.
    pub normalize: bool,
    pub workers: usize,
    pub sample: Sample,
    /// Line-delimited JSON, one completed instance per line.
    pub checkpoint: Option<PathBuf>,
    /// Reuse instances already present in `checkpoint`.
    pub resume: bool,
    /// Stop after this many newly evaluated instances; the report is marked incomplete.
    pub interrupt_after: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            normalize: false,
            workers: 1,
            sample: Sample::All,
            checkpoint: None,
            resume: false,
            interrupt_after: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    /// Position in the evaluated selection.
    pub index: usize,
    pub id: String,
    pub predicted: Vec<String>,
    pub gold: Vec<String>,
    pub accepted: bool,
    pub hit: bool,
    pub em: bool,
    pub f1: f64,
    pub llm_calls: usize,
    pub hops_used: usize,
    pub trace_steps: usize,
    pub feedback_rounds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Wall-clock time; excluded from `records.jsonl` so records are reproducible.
    #[serde(default, skip_serializing)]
    pub latency_ms: f64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointLine {
    #[serde(flatten)]
    record: InstanceRecord,
    latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub total: usize,
    pub accepted: usize,
    pub failures: usize,
    pub hits_at_1: f64,
    pub exact_match: f64,
    pub macro_f1: f64,
    pub llm_calls: usize,
}

impl Aggregates {
    pub fn recompute(records: &[InstanceRecord]) -> Self {
        let n = records.len();
        let mean = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
        Self {
            total: n,
            accepted: records.iter().filter(|r| r.accepted).count(),
            failures: records.iter().filter(|r| r.failure.is_some()).count(),
            hits_at_1: mean(records.iter().filter(|r| r.hit).count() as f64),
            exact_match: mean(records.iter().filter(|r| r.em).count() as f64),
            macro_f1: mean(records.iter().map(|r| r.f1).sum()),
            llm_calls: records.iter().map(|r| r.llm_calls).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub records: Vec<InstanceRecord>,
    pub aggregates: Aggregates,
    /// Ids left out because they have no gold answers.
    pub not_evaluable: Vec<String>,
    /// False when the run stopped early.
    pub complete: bool,
    pub normalize: bool,
}

impl EvalReport {
    fn assemble(records: Vec<InstanceRecord>, not_evaluable: Vec<String>, complete: bool, normalize: bool) -> Self {
        let aggregates = Aggregates::recompute(&records);
        Self {
            records,
            aggregates,
            not_evaluable,
            complete,
            normalize,
        }
    }

    /// Aggregates and per-instance flags must agree with the raw answers.
    pub fn self_check(&self) -> Result<(), EvalError> {
        for r in &self.records {
            let hit = hits_at_1(&r.predicted, &r.gold, self.normalize);
            let em = exact_match(&r.predicted, &r.gold, self.normalize);
            let f = f1(&r.predicted, &r.gold, self.normalize);
            if hit != r.hit || em != r.em || (f - r.f1).abs() > 1e-12 {
                return Err(EvalError::Inconsistent(format!("record {} disagrees with its answers", r.id)));
            }
        }
        let again = Aggregates::recompute(&self.records);
        if again != self.aggregates {
            return Err(EvalError::Inconsistent("aggregates differ from recomputation".into()));
        }
        Ok(())
    }

    pub fn summary_text(&self) -> String {
        let a = &self.aggregates;
        format!(
            "instances={}\naccepted={}\nfailures={}\nnot_evaluable={}\nhits@1={:.4}\nem={:.4}\nmacro_f1={:.4}\nllm_calls={}\ncomplete={}\n",
            a.total,
            a.accepted,
            a.failures,
            self.not_evaluable.len(),
            a.hits_at_1,
            a.exact_match,
            a.macro_f1,
            a.llm_calls,
            self.complete
        )
    }

    pub fn metrics_tsv(&self) -> String {
        let a = &self.aggregates;
        format!(
            "metric\tvalue\ninstances\t{}\nhits@1\t{:.6}\nem\t{:.6}\nmacro_f1\t{:.6}\naccepted\t{}\nfailures\t{}\nllm_calls\t{}\n",
            a.total, a.hits_at_1, a.exact_match, a.macro_f1, a.accepted, a.failures, a.llm_calls
        )
    }

    pub fn records_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    /// Writes `records.jsonl`, `summary.txt`, `metrics.tsv` and `timings.tsv`.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        self.self_check()?;
        std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
        let mut timings = String::from("id\tlatency_ms\n");
        for r in &self.records {
            timings.push_str(&format!("{}\t{:.3}\n", r.id, r.latency_ms));
        }
        for (name, body) in [
            ("records.jsonl", self.records_jsonl()),
            ("summary.txt", self.summary_text()),
            ("metrics.tsv", self.metrics_tsv()),
            ("timings.tsv", timings),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| EvalError::io(&p, e))?;
        }
        Ok(())
    }
}

fn select(instances: &[QuestionInstance], sample: Sample) -> Vec<usize> {
    let all: Vec<usize> = (0..instances.len()).collect();
    match sample {
        Sample::All => all,
        Sample::First(n) => all.into_iter().take(n).collect(),
        Sample::Random { n, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = rand::seq::index::sample(&mut rng, all.len(), n.min(all.len())).into_vec();
            picked.sort_unstable();
            picked
        }
    }
}

/// Completed records in a checkpoint; a torn final line is ignored.
pub fn read_checkpoint(path: &Path) -> Result<Vec<InstanceRecord>, EvalError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(EvalError::io(path, e)),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| EvalError::io(path, e))?;
    let last = lines.len().saturating_sub(1);
    let mut out = Vec::new();
    for (n, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CheckpointLine>(line) {
            Ok(c) => {
                let mut r = c.record;
                r.latency_ms = c.latency_ms;
                out.push(r);
            }
            Err(_) if n == last => {}
            Err(e) => {
                return Err(EvalError::Schema {
                    path: path.display().to_string(),
                    record: n,
                    field: "$".into(),
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

fn run_one(pipeline: &dyn QaPipeline, index: usize, inst: &QuestionInstance, normalize: bool) -> InstanceRecord {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| pipeline.answer(inst)));
    let latency_ms = start.elapsed().as_secs_f64() * 1e3;
    let (answers, accepted, llm_calls, hops_used, trace, failure) = match outcome {
        Ok(Ok(a)) => (a.answers, a.accepted, a.llm_calls, a.hops_used, a.trace, a.failure),
        Ok(Err(e)) => (Vec::new(), false, 0, 0, Vec::new(), Some(e.to_string())),
        Err(_) => (Vec::new(), false, 0, 0, Vec::new(), Some("pipeline panicked".to_owned())),
    };
    let predicted = if accepted { answers } else { Vec::new() };
    InstanceRecord {
        index,
        id: inst.id.clone(),
        hit: hits_at_1(&predicted, &inst.gold_answers, normalize),
        em: exact_match(&predicted, &inst.gold_answers, normalize),
        f1: f1(&predicted, &inst.gold_answers, normalize),
        gold: inst.gold_answers.clone(),
        predicted,
        accepted,
        llm_calls,
        hops_used,
        trace_steps: trace.len(),
        feedback_rounds: trace
            .iter()
            .filter(|t| t.event == TraceEvent::LlmCall && t.feedback > 0)
            .count(),
        failure,
        latency_ms,
    }
}

/// Runs `pipeline` over the selected instances.
///
/// Per-instance errors and panics become failed records. Records are ordered
/// by selection regardless of worker count.
pub fn evaluate(
    pipeline: &dyn QaPipeline,
    instances: &[QuestionInstance],
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let (evaluable, not_evaluable): (Vec<&QuestionInstance>, Vec<&QuestionInstance>) =
        instances.iter().partition(|i| i.is_evaluable());
    let owned: Vec<QuestionInstance> = evaluable.into_iter().cloned().collect();
    let selection = select(&owned, config.sample);

    let mut done: HashMap<String, InstanceRecord> = HashMap::new();
    let writer = match &config.checkpoint {
        Some(path) => {
            if config.resume {
                for r in read_checkpoint(path)? {
                    done.insert(r.id.clone(), r);
                }
            }
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| EvalError::io(parent, e))?;
            }
            let file = OpenOptions::new()
                .create(true)
                .append(config.resume)
                .write(true)
                .truncate(!config.resume)
                .open(path)
                .map_err(|e| EvalError::io(path, e))?;
            Some(Mutex::new(file))
        }
        None => None,
    };

    let pending: Vec<(usize, usize)> = selection
        .iter()
        .enumerate()
        .filter(|(_, &i)| !done.contains_key(&owned[i].id))
        .map(|(pos, &i)| (pos, i))
        .collect();
    let budget = config.interrupt_after.unwrap_or(usize::MAX).min(pending.len());
    let complete = budget == pending.len();
    let todo = &pending[..budget];

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| EvalError::Config(e.to_string()))?;
    let checkpoint_error: Mutex<Option<EvalError>> = Mutex::new(None);
    let fresh: Vec<InstanceRecord> = pool.install(|| {
        todo.par_iter()
            .map(|&(pos, i)| {
                let rec = run_one(pipeline, pos, &owned[i], config.normalize);
                if let (Some(w), Some(path)) = (&writer, &config.checkpoint) {
                    let line = CheckpointLine {
                        record: rec.clone(),
                        latency_ms: rec.latency_ms,
                    };
                    let mut text = serde_json::to_string(&line).expect("records serialize");
                    text.push('\n');
                    let mut f = w.lock().expect("checkpoint lock");
                    if let Err(e) = f.write_all(text.as_bytes()).and_then(|_| f.flush()) {
                        *checkpoint_error.lock().expect("error lock") = Some(EvalError::io(path, e));
                    }
                }
                rec
            })
            .collect()
    });
    if let Some(e) = checkpoint_error.into_inner().expect("error lock") {
        return Err(e);
    }

    let mut by_pos: BTreeMap<usize, InstanceRecord> = BTreeMap::new();
    for (pos, &i) in selection.iter().enumerate() {
        if let Some(mut r) = done.remove(&owned[i].id) {
            r.index = pos;
            by_pos.insert(pos, r);
        }
    }
    for r in fresh {
        by_pos.insert(r.index, r);
    }
    let report = EvalReport::assemble(
        by_pos.into_values().collect(),
        not_evaluable.iter().map(|i| i.id.clone()).collect(),
        complete,
        config.normalize,
    );
    report.self_check()?;
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldFill {
    pub cached: usize,
    pub executed: usize,
    pub failed: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct GoldLine {
    id: String,
    answers: Vec<String>,
}

/// Fills empty `gold_answers` by executing `gold_sparql` once per instance.
///
/// Results are cached in `cache` as `{"id", "answers"}` lines; cached ids are
/// never re-executed.
pub fn fill_gold_answers(
    instances: &mut [QuestionInstance],
    endpoint: &dyn SparqlEndpoint,
    cache: Option<&Path>,
) -> Result<GoldFill, EvalError> {
    let mut known: HashMap<String, Vec<String>> = HashMap::new();
    if let Some(path) = cache.filter(|p| p.exists()) {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let g: GoldLine = serde_json::from_str(line).map_err(|e| EvalError::Schema {
                path: path.display().to_string(),
                record: n,
                field: "$".into(),
                message: e.to_string(),
            })?;
            known.insert(g.id, g.answers);
        }
    }
    let mut out = GoldFill::default();
    let mut appended = String::new();
    for inst in instances.iter_mut().filter(|i| i.gold_answers.is_empty()) {
        if let Some(a) = known.get(&inst.id) {
            inst.gold_answers = a.clone();
            out.cached += 1;
            continue;
        }
        let Some(q) = &inst.gold_sparql else { continue };
        match endpoint.execute(q) {
            Ok(b) => {
                inst.gold_answers = b.answers();
                out.executed += 1;
                let line = GoldLine {
                    id: inst.id.clone(),
                    answers: inst.gold_answers.clone(),
                };
                appended.push_str(&serde_json::to_string(&line).expect("gold serialize"));
                appended.push('\n');
            }
            Err(_) => out.failed.push(inst.id.clone()),
        }
    }
    if let (Some(path), false) = (cache, appended.is_empty()) {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| EvalError::io(path, e))?;
        f.write_all(appended.as_bytes()).map_err(|e| EvalError::io(path, e))?;
    }
    Ok(out)
}
