//! Run configuration: defaults, then a flat `key=value` file, then flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use kgqa_core::eval::DatasetTag;
use kgqa_core::ir::PathStrategy;
use kgqa_core::sp::Dialect;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Ir,
    Sp,
    MetaqaPath,
}

impl FromStr for Strategy {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ir" => Ok(Self::Ir),
            "sp" => Ok(Self::Sp),
            "metaqa-path" => Ok(Self::MetaqaPath),
            _ => Err(CliError::usage(format!("unknown strategy {s:?} (ir, sp, metaqa-path)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Scripted,
    Remote,
}

impl FromStr for BackendKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scripted" => Ok(Self::Scripted),
            "remote" => Ok(Self::Remote),
            _ => Err(CliError::usage(format!("unknown backend {s:?} (scripted, remote)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub dataset: Option<DatasetTag>,
    pub graph: Option<PathBuf>,
    pub graph_format: String,
    pub cvt_ids: Option<PathBuf>,
    pub snapshot: Option<PathBuf>,
    pub backend: BackendKind,
    pub script: Option<PathBuf>,
    pub llm_url: Option<String>,
    pub llm_model: String,
    pub embed_url: Option<String>,
    pub embed_model: String,
    pub embed_dim: usize,
    pub few_shot: Option<PathBuf>,
    pub few_shot_index: Option<PathBuf>,
    pub descriptions: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub endpoint_fixtures: Option<PathBuf>,
    pub gold_cache: Option<PathBuf>,
    pub dialect: Dialect,
    pub k: usize,
    pub max_hops: usize,
    pub retries: usize,
    pub few_shot_n: usize,
    pub always_few_shot: bool,
    pub k_entities: usize,
    pub k_predicates: usize,
    pub known_entities: bool,
    pub path_strategy: PathStrategy,
    pub path_catalog: Option<PathBuf>,
    pub normalize: Option<bool>,
    pub window: usize,
    pub timeout_secs: u64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Ir,
            dataset: None,
            graph: None,
            graph_format: "tsv".into(),
            cvt_ids: None,
            snapshot: None,
            backend: BackendKind::Scripted,
            script: None,
            llm_url: None,
            llm_model: "gpt-3.5-turbo".into(),
            embed_url: None,
            embed_model: "text-embedding-ada-002".into(),
            embed_dim: 256,
            few_shot: None,
            few_shot_index: None,
            descriptions: None,
            endpoint: None,
            endpoint_fixtures: None,
            gold_cache: None,
            dialect: Dialect::Wikidata,
            k: 1,
            max_hops: 4,
            retries: 2,
            few_shot_n: 5,
            always_few_shot: false,
            k_entities: 10,
            k_predicates: 10,
            known_entities: false,
            path_strategy: PathStrategy::FewShot,
            path_catalog: None,
            normalize: None,
            window: 4096,
            timeout_secs: 60,
            seed: 0,
            workers: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::usage(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::usage(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl RunConfig {
    /// Applies one setting. Relative paths are joined onto `base`.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<(), CliError> {
        let path = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        };
        let value = value.trim();
        match key {
            "strategy" => self.strategy = value.parse()?,
            "dataset" => {
                self.dataset = Some(value.parse().map_err(|e: kgqa_core::eval::EvalError| CliError::usage(e.to_string()))?)
            }
            "graph" => self.graph = Some(path(value)),
            "graph_format" => self.graph_format = value.to_owned(),
            "cvt_ids" => self.cvt_ids = Some(path(value)),
            "snapshot" => self.snapshot = Some(path(value)),
            "backend" => self.backend = value.parse()?,
            "script" => self.script = Some(path(value)),
            "llm_url" => self.llm_url = Some(value.to_owned()),
            "llm_model" => self.llm_model = value.to_owned(),
            "embed_url" => self.embed_url = Some(value.to_owned()),
            "embed_model" => self.embed_model = value.to_owned(),
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "few_shot" => self.few_shot = Some(path(value)),
            "few_shot_index" => self.few_shot_index = Some(path(value)),
            "descriptions" => self.descriptions = Some(path(value)),
            "endpoint" => self.endpoint = Some(value.to_owned()),
            "endpoint_fixtures" => self.endpoint_fixtures = Some(path(value)),
            "gold_cache" => self.gold_cache = Some(path(value)),
            "dialect" => self.dialect = value.parse().map_err(|_| CliError::usage(format!("unknown dialect {value:?}")))?,
            "k" => self.k = parse(key, value)?,
            "max_hops" => self.max_hops = parse(key, value)?,
            "retries" => self.retries = parse(key, value)?,
            "few_shot_n" => self.few_shot_n = parse(key, value)?,
            "always_few_shot" => self.always_few_shot = parse_bool(key, value)?,
            "k_entities" => self.k_entities = parse(key, value)?,
            "k_predicates" => self.k_predicates = parse(key, value)?,
            "known_entities" => self.known_entities = parse_bool(key, value)?,
            "path_strategy" => {
                self.path_strategy = value.parse().map_err(|_| CliError::usage(format!("unknown path strategy {value:?}")))?
            }
            "path_catalog" => self.path_catalog = Some(path(value)),
            "normalize" => self.normalize = Some(parse_bool(key, value)?),
            "window" => self.window = parse(key, value)?,
            "timeout_secs" => self.timeout_secs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse::<usize>(key, value)?.max(1),
            "api_key" | "llm_api_key" => {
                return Err(CliError::usage("secrets are read from the environment only"))
            }
            _ => return Err(CliError::usage(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// `key=value` lines; `#` starts a comment line.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf);
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("{} line {}: expected key=value", path.display(), n + 1)))?;
            self.set(k.trim(), v, base.as_deref())?;
        }
        Ok(())
    }

    /// A `key=value` override from the command line.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), CliError> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("expected key=value, got {kv:?}")))?;
        self.set(k.trim(), v, None)
    }

    pub fn normalize_for(&self, tag: Option<DatasetTag>) -> bool {
        self.normalize
            .unwrap_or_else(|| tag.map(DatasetTag::default_normalize).unwrap_or(false))
    }
}
