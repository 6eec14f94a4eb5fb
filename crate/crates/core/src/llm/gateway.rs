use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::{
    parse_items, ByteEstimator, ChatBackend, ChatCall, LlmError, PromptTemplates,
    SkillRequest, SkillResponse, TokenEstimator, Usage,
};
use crate::trace::digest;

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Context window in estimated tokens.
    pub window: usize,
    pub max_output_tokens: usize,
    pub temperature: f32,
    /// Maximum in-flight backend calls.
    pub max_concurrency: usize,
    pub timeout: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            window: 4096,
            max_output_tokens: 512,
            temperature: 0.0,
            max_concurrency: 4,
            timeout: Duration::from_secs(60),
        }
    }
}

struct Permits {
    free: Mutex<usize>,
    ready: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            ready: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().expect("permit lock");
        while *free == 0 {
            free = self.ready.wait(free).expect("permit lock");
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock") += 1;
        self.0.ready.notify_one();
    }
}

/// Renders, budgets and dispatches skill requests. Stateless per call.
pub struct LlmGateway {
    backend: Arc<dyn ChatBackend>,
    templates: PromptTemplates,
    estimator: Arc<dyn TokenEstimator>,
    config: GatewayConfig,
    permits: Permits,
}

impl LlmGateway {
    pub fn new(backend: Arc<dyn ChatBackend>, config: GatewayConfig) -> Self {
        Self::with_templates(backend, PromptTemplates::builtin(), config)
    }

    pub fn with_templates(
        backend: Arc<dyn ChatBackend>,
        templates: PromptTemplates,
        config: GatewayConfig,
    ) -> Self {
        let permits = Permits::new(config.max_concurrency);
        Self {
            backend,
            templates,
            estimator: Arc::new(ByteEstimator::default()),
            config,
            permits,
        }
    }

    pub fn with_estimator(mut self, estimator: Arc<dyn TokenEstimator>) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn templates(&self) -> &PromptTemplates {
        &self.templates
    }

    /// Estimated prompt size, or the budget error `complete` would return.
    pub fn check_budget(&self, request: &SkillRequest) -> Result<usize, LlmError> {
        let prompt = self.templates.render(request)?;
        let estimated = self.estimator.estimate(&prompt.full_text());
        if estimated > self.config.window {
            return Err(LlmError::Budget {
                estimated,
                window: self.config.window,
                overflow: estimated - self.config.window,
            });
        }
        Ok(estimated)
    }

    /// One backend call. Over-budget requests are rejected before the backend
    /// is touched.
    pub fn complete(&self, request: &SkillRequest) -> Result<SkillResponse, LlmError> {
        let prompt = self.templates.render(request)?;
        let full = prompt.full_text();
        let estimated = self.estimator.estimate(&full);
        if estimated > self.config.window {
            return Err(LlmError::Budget {
                estimated,
                window: self.config.window,
                overflow: estimated - self.config.window,
            });
        }
        let key = request.key();
        let raw = {
            let _permit = self.permits.acquire();
            self.backend.chat(&ChatCall {
                key: &key,
                prompt: &prompt,
                temperature: self.config.temperature,
                max_tokens: self.config.max_output_tokens,
                timeout: self.config.timeout,
            })
        }
        .map_err(LlmError::Backend)?;
        Ok(SkillResponse {
            parsed_items: parse_items(request.skill, &raw),
            usage: Usage {
                prompt_tokens: estimated,
                completion_tokens: self.estimator.estimate(&raw),
            },
            raw_text: raw,
            prompt_digest: digest(&full),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{BackendError, ContextItem, ScriptEntry, ScriptedBackend, SkillKind};

    fn scripted(responses: &[&str]) -> Arc<ScriptedBackend> {
        Arc::new(ScriptedBackend::new(vec![ScriptEntry {
            skill: SkillKind::RelationFilter,
            question: "*".into(),
            context: None,
            prompt_hash: None,
            responses: responses.iter().map(|s| s.to_string()).collect(),
        }]))
    }

    #[test]
    fn scripted_completion_is_parsed() {
        let backend = scripted(&["directed_by"]);
        let gw = LlmGateway::new(backend.clone(), GatewayConfig::default());
        let req = SkillRequest::new(SkillKind::RelationFilter, "who directed Kismet?")
            .with_context(vec![ContextItem::new("directed_by", "")]);
        let resp = gw.complete(&req).unwrap();
        assert_eq!(resp.parsed_items, vec!["directed_by"]);
        assert!(resp.usage.prompt_tokens > 0);
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn overflow_is_rejected_without_backend_call() {
        let backend = scripted(&["x"]);
        let gw = LlmGateway::new(
            backend.clone(),
            GatewayConfig {
                window: 50,
                ..GatewayConfig::default()
            },
        );
        let items = (0..100)
            .map(|i| ContextItem::new(format!("relation_{i}"), ""))
            .collect();
        let req = SkillRequest::new(SkillKind::RelationFilter, "q").with_context(items);
        match gw.complete(&req) {
            Err(LlmError::Budget {
                overflow, window, ..
            }) => {
                assert_eq!(window, 50);
                assert!(overflow > 0);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
        assert_eq!(backend.calls(), 0);
    }

    #[test]
    fn identical_sequences_give_identical_responses() {
        let run = || {
            let gw = LlmGateway::new(scripted(&["a", "b"]), GatewayConfig::default());
            let req = SkillRequest::new(SkillKind::RelationFilter, "q");
            (0..3)
                .map(|_| gw.complete(&req).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn concurrency_cap_bounds_in_flight_calls() {
        use std::sync::atomic::{AtomicUsize, Ordering};

        struct Slow {
            now: AtomicUsize,
            peak: AtomicUsize,
        }
        impl ChatBackend for Slow {
            fn chat(&self, _: &ChatCall<'_>) -> Result<String, BackendError> {
                let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(n, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(20));
                self.now.fetch_sub(1, Ordering::SeqCst);
                Ok("x".into())
            }
        }
        let backend = Arc::new(Slow {
            now: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let gw = LlmGateway::new(
            backend.clone(),
            GatewayConfig {
                max_concurrency: 2,
                ..GatewayConfig::default()
            },
        );
        std::thread::scope(|s| {
            for _ in 0..6 {
                s.spawn(|| {
                    gw.complete(&SkillRequest::new(SkillKind::RelationFilter, "q"))
                        .unwrap()
                });
            }
        });
        assert!(backend.peak.load(Ordering::SeqCst) <= 2);
    }
}
