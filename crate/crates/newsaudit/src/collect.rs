//! Probe execution: topics strictly in order, engines in parallel within a
//! topic, one writer persisting every result before the next topic starts.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use newsaudit_core::probe::{ProbeFailure, ProbeKey, ProbeSpec, RawAnswer};

use crate::agents::{AgentError, Registry};
use crate::config::RetryPolicy;
use crate::error::{Error, Result};
use crate::store::{self, Layout};

pub trait Sleeper: Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Receives each topic's results, in plan order, before the next topic runs.
pub trait AnswerSink {
    fn persist(&mut self, answers: &[RawAnswer], failures: &[ProbeFailure]) -> Result<()>;
}

/// Appends to the run layout: `raw/answers-<day>.jsonl` and `raw/failures.jsonl`.
pub struct FileSink {
    layout: Layout,
}

impl FileSink {
    pub fn new(layout: Layout) -> Self {
        FileSink { layout }
    }
}

impl AnswerSink for FileSink {
    fn persist(&mut self, answers: &[RawAnswer], failures: &[ProbeFailure]) -> Result<()> {
        let mut by_day: BTreeMap<_, Vec<&RawAnswer>> = BTreeMap::new();
        for a in answers {
            by_day.entry(a.key.day).or_default().push(a);
        }
        for (day, list) in by_day {
            store::append_jsonl(&self.layout.answers_file(day), &list)?;
        }
        store::append_jsonl(&self.layout.failures_file(), failures)
    }
}

#[derive(Debug, Default)]
pub struct MemorySink {
    pub answers: Vec<RawAnswer>,
    pub failures: Vec<ProbeFailure>,
    /// Number of persist calls, i.e. topic groups.
    pub flushes: usize,
}

impl AnswerSink for MemorySink {
    fn persist(&mut self, answers: &[RawAnswer], failures: &[ProbeFailure]) -> Result<()> {
        self.answers.extend_from_slice(answers);
        self.failures.extend_from_slice(failures);
        self.flushes += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CollectionOutcome {
    pub probes: usize,
    pub answers: usize,
    pub failures: usize,
    /// Probes already answered in an earlier run.
    pub skipped: usize,
}

pub struct Collector<'a> {
    pub registry: &'a Registry,
    pub retry: RetryPolicy,
    pub sleeper: &'a dyn Sleeper,
    pub clock: fn() -> String,
}

enum Outcome {
    Answer(RawAnswer),
    Failure(ProbeFailure),
}

impl<'a> Collector<'a> {
    pub fn new(registry: &'a Registry, retry: RetryPolicy) -> Self {
        Collector {
            registry,
            retry,
            sleeper: &ThreadSleeper,
            clock: crate::now_rfc3339,
        }
    }

    fn attempt(&self, probe: &ProbeSpec) -> Outcome {
        let agent = self.registry.get(&probe.key.engine).expect("registry verified");
        let mut attempts = 0;
        loop {
            attempts += 1;
            match agent.query(probe) {
                Ok(reply) => {
                    return Outcome::Answer(RawAnswer {
                        key: probe.key.clone(),
                        fetched_at: reply.fetched_at.unwrap_or_else(self.clock),
                        text: reply.text,
                        meta: reply.meta,
                    })
                }
                Err(AgentError { message, retryable }) => {
                    if retryable && attempts <= self.retry.max_retries {
                        log::warn!("{}: attempt {attempts} failed ({message}), retrying", probe.key);
                        self.sleeper.sleep(self.retry.delay(attempts));
                        continue;
                    }
                    log::warn!("{}: giving up after {attempts} attempt(s): {message}", probe.key);
                    return Outcome::Failure(ProbeFailure {
                        key: probe.key.clone(),
                        error: message,
                        attempts,
                        retryable,
                    });
                }
            }
        }
    }

    /// Runs `plan`, skipping keys in `done`. Consecutive probes sharing
    /// (day, topic) form one group; within a group each engine gets its own
    /// thread and works through its probes in plan order.
    pub fn run(&self, plan: &[ProbeSpec], done: &BTreeSet<ProbeKey>, sink: &mut dyn AnswerSink) -> Result<CollectionOutcome> {
        for p in plan {
            if self.registry.get(&p.key.engine).is_none() {
                return Err(Error::UnknownEngine(p.key.engine.clone()));
            }
        }
        let mut outcome = CollectionOutcome {
            probes: plan.len(),
            ..Default::default()
        };
        let todo: Vec<&ProbeSpec> = plan.iter().filter(|p| !done.contains(&p.key)).collect();
        outcome.skipped = plan.len() - todo.len();

        for group in todo.chunk_by(|a, b| a.key.day == b.key.day && a.key.topic == b.key.topic) {
            let mut per_engine: BTreeMap<&str, Vec<(usize, &ProbeSpec)>> = BTreeMap::new();
            for (i, p) in group.iter().enumerate() {
                per_engine.entry(p.key.engine.as_str()).or_default().push((i, p));
            }
            let mut results: Vec<Option<Outcome>> = (0..group.len()).map(|_| None).collect();
            std::thread::scope(|s| {
                let handles: Vec<_> = per_engine
                    .values()
                    .map(|probes| {
                        s.spawn(move || {
                            probes
                                .iter()
                                .map(|(i, p)| (*i, self.attempt(p)))
                                .collect::<Vec<_>>()
                        })
                    })
                    .collect();
                for h in handles {
                    for (i, o) in h.join().expect("agent thread panicked") {
                        results[i] = Some(o);
                    }
                }
            });
            let mut answers = Vec::new();
            let mut failures = Vec::new();
            for o in results.into_iter().flatten() {
                match o {
                    Outcome::Answer(a) => answers.push(a),
                    Outcome::Failure(f) => failures.push(f),
                }
            }
            outcome.answers += answers.len();
            outcome.failures += failures.len();
            sink.persist(&answers, &failures)?;
        }
        Ok(outcome)
    }
}

/// Keys already answered under `layout`.
pub fn answered_keys(layout: &Layout) -> Result<BTreeSet<ProbeKey>> {
    let mut keys = BTreeSet::new();
    for file in layout.answer_files()? {
        for a in store::read_jsonl::<RawAnswer>(&file)? {
            keys.insert(a.key);
        }
    }
    Ok(keys)
}

/// All persisted answers, by day file then line order.
pub fn load_answers(layout: &Layout) -> Result<Vec<RawAnswer>> {
    let mut out = Vec::new();
    for file in layout.answer_files()? {
        out.extend(store::read_jsonl::<RawAnswer>(&file)?);
    }
    Ok(out)
}
