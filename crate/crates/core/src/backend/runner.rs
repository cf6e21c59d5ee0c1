use std::collections::BTreeMap;
use std::io;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Backend, BackendError, GenerationParams, TrialError, TrialRecord};
use crate::experiment::TrialSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Self::default()
        }
    }

    /// Delay before retry number `retry` (0-based). A server-provided
    /// retry-after wins when present, capped at `max_delay_ms`.
    pub fn delay(&self, retry: u32, error: &BackendError) -> Duration {
        let cap = Duration::from_millis(self.max_delay_ms);
        if let BackendError::RateLimited {
            retry_after: Some(after),
        } = error
        {
            return (*after).min(cap);
        }
        let factor = 1u64.checked_shl(retry.min(63)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor)).min(cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub parallelism: usize,
    pub retry: RetryPolicy,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            parallelism: 4,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub retries: u64,
    /// Failure counts keyed by error kind.
    pub errors_by_kind: BTreeMap<String, usize>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("parallelism must be at least 1")]
    InvalidParallelism,
    #[error("invalid generation parameters: {0}")]
    InvalidParams(BackendError),
    #[error("run aborted at trial {trial_id}: {source}")]
    Aborted {
        trial_id: String,
        source: BackendError,
    },
    #[error("writing records: {0}")]
    Sink(#[from] io::Error),
}

fn execute(
    spec: &TrialSpec,
    params: &GenerationParams,
    backend: &dyn Backend,
    retry: &RetryPolicy,
) -> Result<TrialRecord, Box<(TrialRecord, BackendError)>> {
    let prompt = match spec.render() {
        Ok(p) => p,
        Err(e) => {
            let err = BackendError::Config(format!("rendering {}: {e}", spec.trial_id));
            return Err(Box::new((
                failed_record(spec, String::new(), backend, &err, 1),
                err,
            )));
        }
    };
    let mut attempts = 0;
    loop {
        attempts += 1;
        match backend.complete(&prompt, params, Some(spec)) {
            Ok(c) => {
                return Ok(TrialRecord {
                    spec: spec.clone(),
                    rendered_prompt: prompt,
                    response_text: Some(c.text),
                    error: None,
                    backend_id: c.backend_id,
                    latency_ms: c.latency_ms,
                    timestamp: c.timestamp,
                    attempts,
                })
            }
            Err(e) if e.is_retryable() && attempts <= retry.max_retries => {
                log::debug!("trial {} attempt {attempts} failed: {e}", spec.trial_id);
                thread::sleep(retry.delay(attempts - 1, &e));
            }
            Err(e) => {
                return Err(Box::new((
                    failed_record(spec, prompt, backend, &e, attempts),
                    e,
                )))
            }
        }
    }
}

fn failed_record(
    spec: &TrialSpec,
    prompt: String,
    backend: &dyn Backend,
    error: &BackendError,
    attempts: u32,
) -> TrialRecord {
    TrialRecord {
        spec: spec.clone(),
        rendered_prompt: prompt,
        response_text: None,
        error: Some(TrialError::from(error)),
        backend_id: backend.id().to_string(),
        latency_ms: 0,
        timestamp: backend.now(),
        attempts,
    }
}

/// Runs every spec against `backend` with up to `opts.parallelism` requests
/// in flight. Records are handed to `sink` in plan order as soon as the
/// prefix before them is complete. Per-trial failures become records with an
/// error marker; credential, configuration and (after retries) connection
/// failures abort the run.
pub fn run_plan(
    specs: &[TrialSpec],
    params: &GenerationParams,
    backend: &dyn Backend,
    opts: &RunOptions,
    sink: &mut dyn FnMut(&TrialRecord) -> io::Result<()>,
) -> Result<RunSummary, RunError> {
    if opts.parallelism == 0 {
        return Err(RunError::InvalidParallelism);
    }
    params.validate().map_err(RunError::InvalidParams)?;

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let mut summary = RunSummary {
        total: specs.len(),
        ..RunSummary::default()
    };
    let workers = opts.parallelism.min(specs.len().max(1));

    thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop) = (&next, &stop);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(spec) = specs.get(i) else { break };
                let outcome = execute(spec, params, backend, &opts.retry);
                if tx.send((i, outcome)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending: BTreeMap<usize, TrialRecord> = BTreeMap::new();
        let mut flushed = 0usize;
        let mut result = Ok(());
        for (i, outcome) in rx {
            let record = match outcome {
                Ok(r) => r,
                Err(failed) => {
                    let (r, e) = *failed;
                    if e.is_fatal() && result.is_ok() {
                        stop.store(true, Ordering::SeqCst);
                        result = Err(RunError::Aborted {
                            trial_id: r.spec.trial_id.clone(),
                            source: e,
                        });
                    }
                    r
                }
            };
            if result.is_err() {
                continue;
            }
            pending.insert(i, record);
            while let Some(r) = pending.remove(&flushed) {
                summary.retries += u64::from(r.attempts.saturating_sub(1));
                match &r.error {
                    None => summary.succeeded += 1,
                    Some(e) => {
                        summary.failed += 1;
                        *summary.errors_by_kind.entry(e.kind.clone()).or_default() += 1;
                    }
                }
                if let Err(e) = sink(&r) {
                    stop.store(true, Ordering::SeqCst);
                    result = Err(RunError::Sink(e));
                    break;
                }
                flushed += 1;
            }
        }
        result
    })?;
    Ok(summary)
}

/// Convenience wrapper collecting the records in memory.
pub fn run_plan_collect(
    specs: &[TrialSpec],
    params: &GenerationParams,
    backend: &dyn Backend,
    opts: &RunOptions,
) -> Result<(Vec<TrialRecord>, RunSummary), RunError> {
    let mut records = Vec::with_capacity(specs.len());
    let summary = run_plan(specs, params, backend, opts, &mut |r| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok((records, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{chat_completion_json, Completion, MockBackend, MockProfile};
    use crate::data;
    use crate::experiment::{build_plan, PlanInputs, PlanOptions};
    use chrono::DateTime;
    use std::sync::Mutex;

    fn sector_specs() -> Vec<TrialSpec> {
        build_plan(
            &PlanInputs::Sector(data::default_sector_prompts()),
            &PlanOptions::new(1),
        )
        .unwrap()
        .specs
    }

    struct Scripted {
        fail_on: usize,
        error: BackendError,
        failures_left: Mutex<u32>,
        specs: Vec<TrialSpec>,
    }

    impl Backend for Scripted {
        fn id(&self) -> &str {
            "scripted"
        }

        fn complete(
            &self,
            _prompt: &str,
            _params: &GenerationParams,
            metadata: Option<&TrialSpec>,
        ) -> Result<Completion, BackendError> {
            let spec = metadata.unwrap();
            let idx = self.specs.iter().position(|s| s == spec).unwrap();
            if idx == self.fail_on {
                let mut left = self.failures_left.lock().unwrap();
                if *left > 0 {
                    *left -= 1;
                    return Err(self.error.clone());
                }
            }
            // Stagger completion so workers finish out of order.
            thread::sleep(Duration::from_millis(((12 - idx) % 4) as u64));
            let text = format!("answer {idx}");
            Ok(Completion {
                raw: chat_completion_json("x", "m", &text),
                text,
                backend_id: "scripted".into(),
                latency_ms: 0,
                timestamp: DateTime::UNIX_EPOCH,
            })
        }

        fn now(&self) -> chrono::DateTime<chrono::Utc> {
            DateTime::UNIX_EPOCH
        }
    }

    fn fast() -> RunOptions {
        RunOptions {
            parallelism: 4,
            retry: RetryPolicy {
                max_retries: 3,
                base_delay_ms: 1,
                max_delay_ms: 2,
            },
        }
    }

    #[test]
    fn forced_correct_sector_run() {
        let specs = sector_specs();
        let mock = MockBackend::new(MockProfile::forced_correct(3)).unwrap();
        let (records, summary) =
            run_plan_collect(&specs, &GenerationParams::default(), &mock, &fast()).unwrap();
        assert_eq!(records.len(), 12);
        assert_eq!(summary.failed, 0);
        for (r, s) in records.iter().zip(&specs) {
            assert_eq!(&r.spec, s);
            assert!(r.is_success());
        }
    }

    #[test]
    fn permanent_failure_is_recorded_in_place() {
        let specs = sector_specs();
        let backend = Scripted {
            fail_on: 4,
            error: BackendError::MalformedResponse("garbage".into()),
            failures_left: Mutex::new(u32::MAX),
            specs: specs.clone(),
        };
        let (records, summary) =
            run_plan_collect(&specs, &GenerationParams::default(), &backend, &fast()).unwrap();
        assert_eq!(records.len(), 12);
        assert_eq!(summary.failed, 1);
        assert_eq!(
            records[4].error.as_ref().unwrap().kind,
            "malformed_response"
        );
        assert!(records[4].response_text.is_none());
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.spec, specs[i]);
            if i != 4 {
                assert_eq!(
                    r.response_text.as_deref(),
                    Some(format!("answer {i}").as_str())
                );
            }
        }
    }

    #[test]
    fn transient_failures_are_retried() {
        let specs = sector_specs();
        let backend = Scripted {
            fail_on: 2,
            error: BackendError::RateLimited { retry_after: None },
            failures_left: Mutex::new(2),
            specs: specs.clone(),
        };
        let (records, summary) =
            run_plan_collect(&specs, &GenerationParams::default(), &backend, &fast()).unwrap();
        assert_eq!(summary.failed, 0);
        assert_eq!(summary.retries, 2);
        assert_eq!(records[2].attempts, 3);
    }

    #[test]
    fn auth_failure_aborts() {
        let specs = sector_specs();
        let backend = Scripted {
            fail_on: 0,
            error: BackendError::Auth {
                status: 401,
                body: "bad key".into(),
            },
            failures_left: Mutex::new(u32::MAX),
            specs: specs.clone(),
        };
        let err =
            run_plan_collect(&specs, &GenerationParams::default(), &backend, &fast()).unwrap_err();
        assert!(matches!(err, RunError::Aborted { .. }));
    }

    #[test]
    fn zero_parallelism_rejected() {
        let mock = MockBackend::new(MockProfile::forced_correct(3)).unwrap();
        let opts = RunOptions {
            parallelism: 0,
            ..RunOptions::default()
        };
        assert!(matches!(
            run_plan_collect(&sector_specs(), &GenerationParams::default(), &mock, &opts),
            Err(RunError::InvalidParallelism)
        ));
    }

    #[test]
    fn mock_output_independent_of_parallelism() {
        let specs = sector_specs();
        let mock = MockBackend::new(MockProfile::default()).unwrap();
        let params = GenerationParams::default();
        let one = run_plan_collect(
            &specs,
            &params,
            &mock,
            &RunOptions {
                parallelism: 1,
                ..fast()
            },
        )
        .unwrap()
        .0;
        let eight = run_plan_collect(
            &specs,
            &params,
            &mock,
            &RunOptions {
                parallelism: 8,
                ..fast()
            },
        )
        .unwrap()
        .0;
        assert_eq!(one, eight);
    }

    #[test]
    fn backoff_grows_and_caps() {
        let p = RetryPolicy::default();
        assert_eq!(
            p.delay(0, &BackendError::Timeout),
            Duration::from_millis(500)
        );
        assert_eq!(
            p.delay(2, &BackendError::Timeout),
            Duration::from_millis(2000)
        );
        assert_eq!(
            p.delay(20, &BackendError::Timeout),
            Duration::from_millis(30_000)
        );
        let limited = BackendError::RateLimited {
            retry_after: Some(Duration::from_secs(3)),
        };
        assert_eq!(p.delay(0, &limited), Duration::from_secs(3));
    }
}
