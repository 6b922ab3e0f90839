//! Batch runner: dataset loading, a resumable JSONL transcript, and
//! bounded-parallelism sketch-then-refine over a dataset.

use std::collections::{HashMap, HashSet};
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{refine, render_sketch_prompt, PipelineError, PromptBundle, SketcherClient};
use crate::decoder::{DecodeConfig, Scorer};
use crate::grammar::ConstraintAutomaton;
use crate::vocab::Tokenizer;

/// One triplet-extraction example: gold is a list of
/// `[subject, relation, object]` triples.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct IeExample {
    pub id: String,
    pub input: String,
    pub gold: Vec<(String, String, String)>,
}

/// One constituency-parsing example with a bracketed gold tree.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct CpExample {
    pub id: String,
    pub input: String,
    pub gold_tree: String,
}

fn load_jsonl<T: DeserializeOwned>(
    path: &Path,
) -> Result<(Vec<T>, Vec<PipelineError>), PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(line) {
            Ok(row) => rows.push(row),
            Err(e) => bad.push(PipelineError::BadRecord { line: idx + 1, message: e.to_string() }),
        }
    }
    Ok((rows, bad))
}

/// Loads a triplet-extraction dataset from JSON-lines. Unreadable files
/// are fatal; malformed rows are returned alongside the good ones so the
/// caller can report them without aborting the run.
pub fn load_ie_dataset(
    path: &Path,
) -> Result<(Vec<IeExample>, Vec<PipelineError>), PipelineError> {
    load_jsonl(path)
}

/// Loads a constituency-parsing dataset from JSON-lines; same error
/// policy as [`load_ie_dataset`].
pub fn load_cp_dataset(
    path: &Path,
) -> Result<(Vec<CpExample>, Vec<PipelineError>), PipelineError> {
    load_jsonl(path)
}

/// One line of the run transcript. `error` is present only for examples
/// whose sketch or refinement failed; such lines have empty `output` and
/// `valid: false`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TranscriptRecord {
    pub id: String,
    pub input: String,
    pub sketch: String,
    pub output: String,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// How many examples this invocation processed, resumed past, or failed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTally {
    /// Newly processed with a usable output.
    pub completed: usize,
    /// Already present in the transcript; not re-run.
    pub skipped: usize,
    /// Newly processed but recorded with an error.
    pub failed: usize,
}

/// Result of a batch run: every record for the dataset (resumed and new,
/// in dataset order) plus the invocation tally.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<TranscriptRecord>,
    pub tally: RunTally,
}

/// Serializes request starts to at most `per_second` per second across
/// threads. Each acquisition reserves the next free slot, so bursts are
/// spread out instead of merely averaged.
struct RateLimiter {
    interval: Duration,
    next_free: Mutex<Instant>,
}

impl RateLimiter {
    fn new(per_second: f64) -> Self {
        assert!(per_second > 0.0, "rate limit must be positive");
        RateLimiter {
            interval: Duration::from_secs_f64(1.0 / per_second),
            next_free: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        let wait = {
            let mut slot = self.next_free.lock().unwrap();
            let now = Instant::now();
            let start = (*slot).max(now);
            *slot = start + self.interval;
            start.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

fn failed_record(id: &str, input: &str, sketch: String, error: &PipelineError) -> TranscriptRecord {
    TranscriptRecord {
        id: id.to_string(),
        input: input.to_string(),
        sketch,
        output: String::new(),
        valid: false,
        error: Some(error.to_string()),
    }
}

/// Builds the constraint automaton for one example input. Tasks whose
/// constraint is input-independent ignore the argument; per-sentence
/// constraints (constituency parsing) rebuild from it.
pub type AutomatonFor<'a, A> = dyn Fn(&str) -> Result<A, PipelineError> + Sync + 'a;

fn process_one<A: ConstraintAutomaton>(
    id: &str,
    input: &str,
    sketcher: &dyn SketcherClient,
    scorer: &dyn Scorer,
    automaton_for: &AutomatonFor<'_, A>,
    tokenizer: &dyn Tokenizer,
    bundle: &PromptBundle,
    cfg: &DecodeConfig,
    limiter: Option<&RateLimiter>,
) -> TranscriptRecord {
    let automaton = match automaton_for(input) {
        Ok(automaton) => automaton,
        Err(e) => return failed_record(id, input, String::new(), &e),
    };
    if let Some(limiter) = limiter {
        limiter.acquire();
    }
    let sketch = match sketcher.sketch(&render_sketch_prompt(bundle, input)) {
        Ok(sketch) => sketch,
        Err(e) => return failed_record(id, input, String::new(), &e),
    };
    match refine(scorer, &automaton, tokenizer, bundle, input, &sketch, cfg) {
        Ok(tokens) => TranscriptRecord {
            id: id.to_string(),
            input: input.to_string(),
            sketch: sketch.text,
            output: tokenizer.detokenize(&tokens),
            valid: automaton.accepts(&tokens),
            error: None,
        },
        Err(e) => failed_record(id, input, sketch.text, &e),
    }
}

/// Runs sketch-then-refine over `(id, input)` examples, appending one
/// JSONL record per example to `transcript_path`.
///
/// Ids already present in the transcript are skipped, so an interrupted
/// run can be resumed by re-invoking with the same path; records are
/// appended in dataset order batch by batch, which keeps the transcript
/// byte-identical regardless of `parallelism`. Per-example failures are
/// recorded, not raised; only I/O and transcript corruption are fatal.
#[allow(clippy::too_many_arguments)]
pub fn run_sgcd<A: ConstraintAutomaton>(
    examples: &[(String, String)],
    sketcher: &dyn SketcherClient,
    scorer: &dyn Scorer,
    automaton_for: &AutomatonFor<'_, A>,
    tokenizer: &dyn Tokenizer,
    bundle: &PromptBundle,
    cfg: &DecodeConfig,
    transcript_path: &Path,
    parallelism: usize,
    rate_limit: Option<f64>,
) -> Result<RunOutcome, PipelineError> {
    let parallelism = parallelism.max(1);
    let limiter = rate_limit.map(RateLimiter::new);

    let mut existing: HashMap<String, TranscriptRecord> = HashMap::new();
    if transcript_path.exists() {
        let text = std::fs::read_to_string(transcript_path)?;
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: TranscriptRecord =
                serde_json::from_str(line).map_err(|e| PipelineError::BadRecord {
                    line: idx + 1,
                    message: format!("corrupt transcript: {e}"),
                })?;
            existing.insert(record.id.clone(), record);
        }
    }

    let mut writer = OpenOptions::new().create(true).append(true).open(transcript_path)?;
    let pending: Vec<&(String, String)> = examples
        .iter()
        .filter(|(id, _)| !existing.contains_key(id))
        .collect();

    let mut fresh: HashMap<String, TranscriptRecord> = HashMap::new();
    let mut tally = RunTally { skipped: examples.len() - pending.len(), ..RunTally::default() };

    for batch in pending.chunks(parallelism) {
        let records: Vec<TranscriptRecord> = std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .iter()
                .map(|(id, input)| {
                    let limiter = limiter.as_ref();
                    scope.spawn(move || {
                        process_one(
                            id, input, sketcher, scorer, automaton_for, tokenizer, bundle, cfg,
                            limiter,
                        )
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        for record in records {
            if record.error.is_some() {
                tally.failed += 1;
            } else {
                tally.completed += 1;
            }
            writeln!(writer, "{}", serde_json::to_string(&record)?)?;
            fresh.insert(record.id.clone(), record);
        }
        writer.flush()?;
    }

    let mut records = Vec::with_capacity(examples.len());
    let mut seen = HashSet::new();
    for (id, _) in examples {
        if !seen.insert(id.as_str()) {
            continue;
        }
        if let Some(record) = existing.get(id).or_else(|| fresh.get(id)) {
            records.push(record.clone());
        }
    }
    Ok(RunOutcome { records, tally })
}
