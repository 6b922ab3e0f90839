//! Subcommand implementations: compile, run, eval, cost.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context};
use serde_json::json;

use sgcd_core::catalog::{
    build_ie_automaton, parse_marker_triplets, Catalog, CatalogKind, Markers, Triplet, TripletSet,
};
use sgcd_core::cp::{
    build_sophisticated_automaton, parse_linearized, CpOptions, ParseTree, TagInventory,
};
use sgcd_core::decoder::{BigramScorer, ContextCopyScorer, ProductScorer, Scorer};
use sgcd_core::eval::{cp_report, ie_report, EvalError};
use sgcd_core::grammar::ebnf::parse_grammar;
use sgcd_core::grammar::{compile_regular, ConstraintAutomaton, GrammarError};
use sgcd_core::pipeline::{
    iterative_api_cost, load_cp_dataset, load_ie_dataset, run_sgcd, speculative_calls,
    CostModelParams, HttpSketcher, PipelineError, PromptBundle, RunOutcome, Sketch,
    SketcherClient, TranscriptRecord, UreqTransport,
};
use sgcd_core::vocab::{BracketTokenizer, TokenId, Tokenizer, Vocabulary, WhitespaceTokenizer};

use crate::config::{RunConfig, Task};
use crate::{runtime, usage, CmdResult, Failure};

/// Bootstrap rounds behind every reported confidence interval.
const N_RESAMPLES: usize = 1000;

/// Copy-scorer settings shared by both tasks: suffix-match cap, smoothing
/// floor, and the damping that keeps an immediate stop from outranking a
/// full copy of the draft.
const COPY_MAX_SUFFIX: usize = 12;
const COPY_FLOOR: f64 = 1e-4;
const COPY_END_WEIGHT: f64 = 0.25;
const BIGRAM_SMOOTHING: f64 = 0.1;

/// Log-linear weight of the copy scorer against the bigram prior. Above
/// one, so the beam commits to paths that keep following the draft and
/// the input instead of wandering off into structure the prior happens to
/// like; wandering pays the copy floor twice per step.
const COPY_WEIGHT: f64 = 2.0;

/// Per-token insertion bonus folded into the extraction refinement
/// product. The product of per-step probabilities shrinks with every
/// extra token, so left alone the search prefers the shortest legal
/// output — for triplet extraction that is the empty string, which the
/// constraint legally accepts. A flat per-token bonus (the insertion
/// bonus of classic speech decoders) counterweights that brevity bias
/// without touching the relative ranking of same-length candidates.
/// Bracketing needs no bonus: its shortest legal output already covers
/// every word, and a bonus just pays the beam to nest brackets forever.
const IE_STEP_BONUS: f64 = 1.5;

/// Cap on synthesized catalog training lines for the structural prior.
const SYNTH_TRAINING_CAP: usize = 64;

// ---------------------------------------------------------------------------
// compile

pub fn cmd_compile(grammar: &Path, vocab: &Path, out: Option<&Path>) -> CmdResult {
    let grammar_text = std::fs::read_to_string(grammar)
        .with_context(|| format!("reading grammar {}", grammar.display()))
        .map_err(usage)?;
    let spec = parse_grammar(&grammar_text)
        .map_err(|e| usage(anyhow!(e).context(format!("parsing {}", grammar.display()))))?;
    let vocabulary = Vocabulary::load(vocab)
        .map_err(|e| usage(anyhow!(e).context(format!("loading vocabulary {}", vocab.display()))))?;
    let tok = WhitespaceTokenizer::new(Arc::new(vocabulary));
    let dfa = compile_regular(&spec, &tok)
        .and_then(|dfa| dfa.trim())
        .map_err(grammar_failure)?;
    println!("states: {}", dfa.num_states());
    println!("transitions: {}", dfa.num_transitions());
    if let Some(out) = out {
        let body = serde_json::to_string_pretty(&automaton_json(&dfa)).map_err(runtime)?;
        write_atomic(out, &(body + "\n")).map_err(runtime)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn grammar_failure(error: GrammarError) -> Failure {
    match error {
        GrammarError::EmptyLanguage => usage(anyhow!("EmptyLanguage: {error}")),
        other => usage(anyhow!(other)),
    }
}

/// Materializes any constraint automaton reachable from its start state
/// into a plain JSON table: per-state accepting flag and non-EOS edges.
fn automaton_json<A: ConstraintAutomaton>(automaton: &A) -> serde_json::Value {
    let eos = automaton.eos_id();
    let start = automaton.start_state();
    let mut seen: HashSet<u32> = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    let mut states = Vec::new();
    while let Some(state) = queue.pop_front() {
        let mut edges = BTreeMap::new();
        for token in automaton.allowed_tokens(state).iter() {
            if token == eos {
                continue;
            }
            let next = automaton.advance(state, token).expect("token came from allowed set");
            edges.insert(token.to_string(), next);
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
        states.push(json!({
            "id": state,
            "accepting": automaton.is_accepting(state),
            "edges": edges,
        }));
    }
    states.sort_by_key(|s| s["id"].as_u64());
    json!({
        "vocab_size": automaton.vocab_size(),
        "eos": eos,
        "start": start,
        "states": states,
    })
}

// ---------------------------------------------------------------------------
// run

pub fn cmd_run(config_path: &Path) -> CmdResult {
    let config = RunConfig::load(config_path).map_err(usage)?;
    // Resolve the credential before touching anything else so a missing
    // environment variable fails fast, before any network call.
    let credential = config.credential().map_err(usage)?;
    match config.task {
        Task::Ie => run_ie(&config, credential),
        Task::Cp => run_cp(&config, credential),
    }
}

fn run_ie(config: &RunConfig, credential: Option<String>) -> CmdResult {
    let dataset = &config.paths.dataset;
    let rows = usable_rows(load_ie_dataset(dataset).map_err(usage)?, |r| &r.id, dataset)?;
    let entities = Catalog::load(
        config.paths.entities.as_ref().expect("validated at load"),
        CatalogKind::Entity,
    )
    .map_err(usage)?;
    let relations = Catalog::load(
        config.paths.relations.as_ref().expect("validated at load"),
        CatalogKind::Relation,
    )
    .map_err(usage)?;
    let markers = Markers::default();
    let mut bundle = PromptBundle::ie_default();
    bundle.include_input = config.flags.include_input;

    // The run vocabulary covers everything local decoding can see:
    // markers, catalog surfaces, demonstration outputs, and the dataset
    // inputs themselves. Prompt prose outside it is dropped by lossy
    // tokenization rather than breaking decoding.
    let mut corpus: Vec<String> = vec![format!(
        "{} {} {} {}",
        markers.subject, markers.relation, markers.object, markers.end
    )];
    corpus.extend(entities.iter().map(|(_, surface)| surface.to_string()));
    corpus.extend(relations.iter().map(|(_, surface)| surface.to_string()));
    corpus.extend(bundle_text(&bundle, |t| t.to_string()));
    corpus.extend(rows.iter().map(|r| r.input.clone()));
    let vocab = Arc::new(Vocabulary::from_corpus(&corpus).map_err(usage)?);
    let tok = WhitespaceTokenizer::new(Arc::clone(&vocab));

    let mut training = training_text(&bundle);
    training.extend(synth_ie_training(&entities, &relations, &markers, SYNTH_TRAINING_CAP));
    let scorer = refinement_scorer(&training, &tok, IE_STEP_BONUS)?;
    let mock = Box::new(ExtractiveIeSketcher::new(&entities, &relations, &markers));
    let sketcher = assemble_sketcher(config, credential, mock)?;

    let examples: Vec<(String, String)> =
        rows.iter().map(|r| (r.id.clone(), r.input.clone())).collect();
    let outcome = run_sgcd(
        &examples,
        sketcher.as_ref(),
        &scorer,
        &|_: &str| {
            build_ie_automaton(&entities, &relations, &markers, &tok)
                .map_err(|e| PipelineError::Constraint(e.to_string()))
        },
        &tok,
        &bundle,
        &config.decode.to_core(),
        &config.paths.transcript,
        config.sketcher.parallelism,
        config.sketcher.rate_limit,
    )
    .map_err(runtime)?;
    log_outcome(&outcome);

    let preds: Vec<TripletSet> = outcome
        .records
        .iter()
        .map(|r| parse_marker_triplets(&r.output, &markers))
        .collect();
    let golds: Vec<TripletSet> =
        rows.iter().map(|r| r.gold.iter().cloned().map(Triplet::from).collect()).collect();
    let valid: Vec<bool> = outcome.records.iter().map(|r| r.valid).collect();
    let report =
        ie_report(&preds, &golds, &valid, N_RESAMPLES, config.decode.seed).map_err(eval_failure)?;
    write_report(&config.paths.report, &report)
}

fn run_cp(config: &RunConfig, credential: Option<String>) -> CmdResult {
    let dataset = &config.paths.dataset;
    let rows = usable_rows(load_cp_dataset(dataset).map_err(usage)?, |r| &r.id, dataset)?;
    let owned_tags;
    let tags: &TagInventory = match config.paths.tags.as_deref() {
        Some(path) => {
            owned_tags = TagInventory::load(path).map_err(usage)?;
            &owned_tags
        }
        None => TagInventory::ptb(),
    };
    let mut gold_trees = Vec::with_capacity(rows.len());
    for row in &rows {
        let tree = parse_linearized(&row.gold_tree, tags)
            .map_err(|e| usage(anyhow!("gold tree for {}: {e}", row.id)))?;
        if tree.yield_words() != row.input.split_whitespace().collect::<Vec<_>>() {
            return Err(usage(anyhow!("gold tree for {} does not yield its input", row.id)));
        }
        gold_trees.push(tree);
    }
    let mut bundle = PromptBundle::cp_default();
    bundle.include_input = config.flags.include_input;

    // Bracket glyphs are their own tokens, so corpus lines space them out;
    // demonstration trees get the same normalization.
    let mut corpus: Vec<String> = vec!["[ ]".to_string()];
    corpus.push(tags.all_tags().collect::<Vec<_>>().join(" "));
    corpus.extend(bundle_text(&bundle, spaced_brackets));
    corpus.extend(rows.iter().map(|r| r.input.clone()));
    let vocab = Arc::new(Vocabulary::from_corpus(&corpus).map_err(usage)?);
    let tok = BracketTokenizer::new(Arc::clone(&vocab));

    // Synthesized flat clauses over the run's own inputs keep the prior
    // from treating word emission as pure floor cost; without them the
    // beam finds opening yet another bracket locally cheaper than
    // committing to the next word, and never finishes. Inputs are search
    // guidance here, not labels.
    let mut training = training_text(&bundle);
    training
        .extend(rows.iter().take(SYNTH_TRAINING_CAP).map(|r| format!("[S {} ]", r.input)));
    let scorer = refinement_scorer(&training, &tok, 0.0)?;
    let mock = Box::new(FlatTreeSketcher::new(&bundle, tags));
    let sketcher = assemble_sketcher(config, credential, mock)?;

    let options = CpOptions { single_root: config.flags.single_root, ..CpOptions::default() };
    let examples: Vec<(String, String)> =
        rows.iter().map(|r| (r.id.clone(), r.input.clone())).collect();
    let outcome = run_sgcd(
        &examples,
        sketcher.as_ref(),
        &scorer,
        &|input: &str| {
            let words: Vec<&str> = input.split_whitespace().collect();
            build_sophisticated_automaton(&words, tags, &tok, &options)
                .map_err(|e| PipelineError::Constraint(e.to_string()))
        },
        &tok,
        &bundle,
        &config.decode.to_core(),
        &config.paths.transcript,
        config.sketcher.parallelism,
        config.sketcher.rate_limit,
    )
    .map_err(runtime)?;
    log_outcome(&outcome);

    let outputs: Vec<&str> = outcome.records.iter().map(|r| r.output.as_str()).collect();
    let inputs: Vec<&str> = rows.iter().map(|r| r.input.as_str()).collect();
    let report = cp_report(&outputs, &inputs, &gold_trees, tags, N_RESAMPLES, config.decode.seed)
        .map_err(eval_failure)?;
    write_report(&config.paths.report, &report)
}

/// Post-processes a loaded dataset for a run: warns about malformed rows,
/// drops duplicate ids (first occurrence wins) so transcript alignment
/// stays one-to-one, and rejects datasets with nothing usable.
fn usable_rows<T>(
    (rows, bad): (Vec<T>, Vec<PipelineError>),
    id_of: impl Fn(&T) -> &str,
    path: &Path,
) -> Result<Vec<T>, Failure> {
    for error in &bad {
        eprintln!("warning: {}: {error}", path.display());
    }
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let id = id_of(&row).to_string();
        if seen.insert(id.clone()) {
            out.push(row);
        } else {
            eprintln!("warning: {}: duplicate id {id}, skipped", path.display());
        }
    }
    if out.is_empty() {
        return Err(usage(anyhow!("dataset {} has no usable rows", path.display())));
    }
    Ok(out)
}

/// All demonstration text that belongs in the vocabulary, mapped through
/// a per-task normalizer.
fn bundle_text(bundle: &PromptBundle, normalize: impl Fn(&str) -> String) -> Vec<String> {
    let mut out = Vec::new();
    for demo in &bundle.demonstrations {
        out.push(normalize(&demo.output));
    }
    for demo in &bundle.refine_demonstrations {
        out.push(normalize(&demo.sketch));
        out.push(normalize(&demo.output));
    }
    out
}

fn spaced_brackets(text: &str) -> String {
    text.replace('[', "[ ").replace(']', " ]")
}

/// Demonstration outputs used to train the structural bigram prior.
fn training_text(bundle: &PromptBundle) -> Vec<String> {
    bundle
        .demonstrations
        .iter()
        .map(|d| d.output.clone())
        .chain(bundle.refine_demonstrations.iter().map(|d| d.output.clone()))
        .collect()
}

/// Synthesizes well-formed two-triplet chains over the run's own catalogs
/// for the structural prior. Trained on demonstration outputs alone, every
/// catalog surface would sit at the bigram's smoothing floor and the prior
/// could not tell a plausible extraction from noise. Entities rotate
/// through the subject and object slots and relations round-robin, so each
/// surface is seen in every position it can occupy, capped to keep huge
/// catalogs from dominating training.
fn synth_ie_training(
    entities: &Catalog,
    relations: &Catalog,
    markers: &Markers,
    cap: usize,
) -> Vec<String> {
    let es: Vec<&str> = entities.iter().map(|(_, surface)| surface).collect();
    let rs: Vec<&str> = relations.iter().map(|(_, surface)| surface).collect();
    if es.is_empty() || rs.is_empty() {
        return Vec::new();
    }
    let triplet = |k: usize| {
        format!(
            "{} {} {} {} {} {} {}",
            markers.subject,
            es[k % es.len()],
            markers.relation,
            rs[k % rs.len()],
            markers.object,
            es[(k + 1) % es.len()],
            markers.end,
        )
    };
    (0..es.len().max(rs.len()).min(cap))
        .map(|k| format!("{} {}", triplet(k), triplet(k + 1)))
        .collect()
}

/// Flat per-token score; see [`IE_STEP_BONUS`].
struct LengthBonus {
    vocab_size: usize,
    bonus: f64,
}

impl Scorer for LengthBonus {
    fn score_next(&self, _context: &[TokenId], _prefix: &[TokenId]) -> Vec<f64> {
        vec![self.bonus; self.vocab_size]
    }
}

/// The local refinement scorer: a bigram prior over well-formed outputs,
/// times a context-copying scorer that pulls content from the prompt and
/// draft, times an optional per-token insertion bonus for task languages
/// where brevity alone would otherwise win.
fn refinement_scorer(
    training: &[String],
    tok: &dyn Tokenizer,
    step_bonus: f64,
) -> Result<ProductScorer, Failure> {
    let bigram = BigramScorer::from_text(training, tok, BIGRAM_SMOOTHING).map_err(runtime)?;
    let copy = ContextCopyScorer::new(
        tok.vocab().len(),
        tok.vocab().eos_id(),
        COPY_MAX_SUFFIX,
        COPY_FLOOR,
    )
    .map_err(runtime)?
    .with_end_weight(COPY_END_WEIGHT);
    let mut components: Vec<(f64, Box<dyn Scorer>)> =
        vec![(1.0, Box::new(bigram)), (COPY_WEIGHT, Box::new(copy))];
    if step_bonus > 0.0 {
        components
            .push((1.0, Box::new(LengthBonus { vocab_size: tok.vocab().len(), bonus: step_bonus })));
    }
    Ok(ProductScorer::new(components))
}

/// The query sentence of a rendered prompt: the last `Input:` line.
fn last_input_line(prompt: &str) -> Option<&str> {
    prompt.lines().rev().find_map(|line| line.strip_prefix("Input: "))
}

fn mock_sketch(text: String, prompt: &str) -> Sketch {
    Sketch {
        completion_tokens: text.split_whitespace().count() as u64,
        prompt_tokens: prompt.split_whitespace().count() as u64,
        provenance: "mock".to_string(),
        text,
    }
}

/// Offline stand-in for the remote sketching model on the extraction
/// task. It scans the prompt's query line for catalog surfaces and drafts
/// one triplet per adjacent pair of entity mentions, joined by the first
/// relation surface the line mentions (falling back to the catalog's
/// first). The draft is plausible but nothing enforces the output
/// language — exactly the contract the refiner is built for.
struct ExtractiveIeSketcher {
    entities: Vec<String>,
    relations: Vec<String>,
    markers: Markers,
}

impl ExtractiveIeSketcher {
    fn new(entities: &Catalog, relations: &Catalog, markers: &Markers) -> Self {
        ExtractiveIeSketcher {
            entities: entities.iter().map(|(_, surface)| surface.to_string()).collect(),
            relations: relations.iter().map(|(_, surface)| surface.to_string()).collect(),
            markers: markers.clone(),
        }
    }

    fn draft(&self, input: &str) -> String {
        let mut mentions: Vec<(usize, &str)> = self
            .entities
            .iter()
            .filter_map(|e| input.find(e.as_str()).map(|at| (at, e.as_str())))
            .collect();
        // Keep the longest surface at each position and drop mentions
        // nested inside an earlier one.
        mentions.sort_by_key(|&(at, s)| (at, std::cmp::Reverse(s.len())));
        let mut kept: Vec<(usize, &str)> = Vec::new();
        for (at, surface) in mentions {
            if kept.last().is_none_or(|&(prev, s)| at >= prev + s.len()) {
                kept.push((at, surface));
            }
        }
        let Some(relation) = self
            .relations
            .iter()
            .find(|r| input.contains(r.as_str()))
            .or_else(|| self.relations.first())
        else {
            return String::new();
        };
        let m = &self.markers;
        kept.windows(2)
            .map(|pair| {
                format!(
                    "{} {} {} {} {} {} {}",
                    m.subject, pair[0].1, m.relation, relation, m.object, pair[1].1, m.end
                )
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl SketcherClient for ExtractiveIeSketcher {
    fn sketch(&self, prompt: &str) -> Result<Sketch, PipelineError> {
        let input = last_input_line(prompt).unwrap_or("");
        Ok(mock_sketch(self.draft(input), prompt))
    }
}

/// Offline stand-in for the remote sketching model on the bracketing
/// task: drafts the flattest clause over the query words, tagging each
/// word the way the prompt's demonstrations did (defaulting to `NN`).
/// Plausible and deliberately lazy about structure — refinement owes the
/// draft nothing but its word order.
struct FlatTreeSketcher {
    word_tags: HashMap<String, String>,
}

impl FlatTreeSketcher {
    fn new(bundle: &PromptBundle, tags: &TagInventory) -> Self {
        let mut word_tags = HashMap::new();
        let demo_trees = bundle
            .demonstrations
            .iter()
            .map(|d| d.output.as_str())
            .chain(bundle.refine_demonstrations.iter().map(|d| d.output.as_str()));
        for text in demo_trees {
            // Corrupt demonstrations are fine to skip; they only teach
            // the remote model what a draft may look like.
            if let Ok(tree) = parse_linearized(text, tags) {
                collect_word_tags(&tree, &mut word_tags);
            }
        }
        FlatTreeSketcher { word_tags }
    }

    fn draft(&self, input: &str) -> String {
        let leaves: Vec<String> = input
            .split_whitespace()
            .map(|word| {
                let tag = self.word_tags.get(word).map_or("NN", String::as_str);
                format!("[{tag} {word}]")
            })
            .collect();
        format!("[S {}]", leaves.join(" "))
    }
}

fn collect_word_tags(tree: &ParseTree, out: &mut HashMap<String, String>) {
    match tree {
        ParseTree::Internal { children, .. } => {
            for child in children {
                collect_word_tags(child, out);
            }
        }
        ParseTree::Leaf { tag, word } => {
            out.entry(word.clone()).or_insert_with(|| tag.clone());
        }
    }
}

impl SketcherClient for FlatTreeSketcher {
    fn sketch(&self, prompt: &str) -> Result<Sketch, PipelineError> {
        let input = last_input_line(prompt).unwrap_or("");
        Ok(mock_sketch(self.draft(input), prompt))
    }
}

/// Builds the sketching client: the HTTP endpoint from the config, or the
/// given offline stand-in for `endpoint = "mock"`.
fn assemble_sketcher(
    config: &RunConfig,
    credential: Option<String>,
    mock: Box<dyn SketcherClient>,
) -> Result<Box<dyn SketcherClient>, Failure> {
    if config.mock_sketcher() {
        Ok(mock)
    } else {
        let transport = UreqTransport::new(Duration::from_millis(config.sketcher.timeout_ms));
        Ok(Box::new(
            HttpSketcher::new(
                Box::new(transport),
                config.sketcher.endpoint.clone(),
                config.sketcher.model.clone(),
                credential,
            )
            .with_sampling(0.0, config.sketcher.max_tokens),
        ))
    }
}

fn log_outcome(outcome: &RunOutcome) {
    for record in &outcome.records {
        match &record.error {
            Some(error) => println!("{}: failed ({error})", record.id),
            None => println!("{}: ok (valid={})", record.id, record.valid),
        }
    }
    let t = outcome.tally;
    println!("completed {} / skipped {} / failed {}", t.completed, t.skipped, t.failed);
}

fn eval_failure(error: EvalError) -> Failure {
    match error {
        EvalError::EmptyEval => usage(anyhow!(error)),
        other => runtime(anyhow!(other)),
    }
}

fn write_report<R: serde::Serialize>(path: &Path, report: &R) -> CmdResult {
    let body = serde_json::to_string_pretty(report).map_err(runtime)?;
    write_atomic(path, &(body + "\n")).map_err(runtime)?;
    println!("report: {}", path.display());
    Ok(())
}

/// Write-temp-then-rename so readers never observe a partial report.
fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = parent.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

// ---------------------------------------------------------------------------
// eval

pub fn cmd_eval(task: Task, pred: &Path, gold: &Path, seed: u64) -> CmdResult {
    let records = read_transcript(pred)?;
    let by_id: HashMap<&str, &TranscriptRecord> =
        records.iter().map(|r| (r.id.as_str(), r)).collect();
    let report = match task {
        Task::Ie => {
            let rows = strict_gold(load_ie_dataset(gold), gold)?;
            let markers = Markers::default();
            let mut preds = Vec::new();
            let mut golds: Vec<TripletSet> = Vec::new();
            let mut valid = Vec::new();
            for row in &rows {
                let (p, v) = match by_id.get(row.id.as_str()) {
                    Some(r) => (parse_marker_triplets(&r.output, &markers), r.valid),
                    None => (TripletSet::new(), false),
                };
                preds.push(p);
                valid.push(v);
                golds.push(row.gold.iter().cloned().map(Triplet::from).collect());
            }
            serde_json::to_value(
                ie_report(&preds, &golds, &valid, N_RESAMPLES, seed).map_err(eval_failure)?,
            )
        }
        Task::Cp => {
            let rows = strict_gold(load_cp_dataset(gold), gold)?;
            let tags = TagInventory::ptb();
            let mut outputs = Vec::new();
            let mut inputs = Vec::new();
            let mut gold_trees: Vec<ParseTree> = Vec::new();
            for row in &rows {
                let tree = parse_linearized(&row.gold_tree, tags)
                    .map_err(|e| usage(anyhow!("gold tree for {}: {e}", row.id)))?;
                if tree.yield_words() != row.input.split_whitespace().collect::<Vec<_>>() {
                    return Err(usage(anyhow!(
                        "gold tree for {} does not yield its input",
                        row.id
                    )));
                }
                gold_trees.push(tree);
                outputs.push(by_id.get(row.id.as_str()).map(|r| r.output.clone()).unwrap_or_default());
                inputs.push(row.input.clone());
            }
            serde_json::to_value(
                cp_report(&outputs, &inputs, &gold_trees, tags, N_RESAMPLES, seed)
                    .map_err(eval_failure)?,
            )
        }
    }
    .map_err(runtime)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?);
    Ok(())
}

fn read_transcript(path: &Path) -> Result<Vec<TranscriptRecord>, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading transcript {}", path.display()))
        .map_err(usage)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptRecord = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", path.display(), idx + 1))
            .map_err(usage)?;
        records.push(record);
    }
    Ok(records)
}

/// Strict gold loading: any malformed row is a usage error, since scoring
/// against a partial gold set would silently skew the metrics.
fn strict_gold<T>(
    loaded: Result<(Vec<T>, Vec<PipelineError>), PipelineError>,
    path: &Path,
) -> Result<Vec<T>, Failure> {
    let (rows, bad) = loaded
        .with_context(|| format!("reading gold dataset {}", path.display()))
        .map_err(usage)?;
    if let Some(first) = bad.first() {
        return Err(usage(anyhow!("gold dataset {}: {first}", path.display())));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// cost

pub fn cmd_cost(
    n: u64,
    context: u64,
    price_in: f64,
    price_out: f64,
    spec: Option<u64>,
) -> CmdResult {
    let breakdown = iterative_api_cost(&CostModelParams {
        context_tokens: context,
        output_tokens: n,
        price_in,
        price_out,
    });
    println!("iterative calls:           {}", breakdown.iterative_calls);
    println!("iterative input tokens:    {}", breakdown.iterative_input_tokens);
    println!("iterative output tokens:   {}", breakdown.iterative_output_tokens);
    println!("iterative price:           {:.4}", breakdown.iterative_price);
    println!("single-call input tokens:  {}", breakdown.single_call_input_tokens);
    println!("single-call output tokens: {}", breakdown.single_call_output_tokens);
    println!("single-call price:         {:.4}", breakdown.single_call_price);
    if let Some(accepted) = spec {
        println!(
            "speculative calls (accept {accepted}/call): {}",
            speculative_calls(n, accepted)
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use sgcd_core::catalog::CatalogKind;

    use super::*;

    fn toy_catalogs() -> (Catalog, Catalog) {
        let entities = Catalog::parse(
            "Q1\tMona Lisa\nQ2\tLouvre Museum\nQ3\tLouvre\n",
            CatalogKind::Entity,
        )
        .unwrap();
        let relations =
            Catalog::parse("R1\tlocated in\nR2\tnear\n", CatalogKind::Relation).unwrap();
        (entities, relations)
    }

    #[test]
    fn last_input_line_takes_the_query_block() {
        let prompt = "Do the thing.\n\nInput: demo one\nOutput: x\n\nInput: the query\nOutput:";
        assert_eq!(last_input_line(prompt), Some("the query"));
        assert_eq!(last_input_line("no blocks here"), None);
    }

    #[test]
    fn synthesized_chains_cover_slots_and_respect_the_cap() {
        let (entities, relations) = toy_catalogs();
        let lines = synth_ie_training(&entities, &relations, &Markers::default(), 64);
        // One line per entity (3 > 2 relations), two triplets each.
        assert_eq!(lines.len(), 3);
        for line in &lines {
            assert_eq!(line.matches("[s]").count(), 2, "{line}");
            assert_eq!(line.matches("[e]").count(), 2, "{line}");
        }
        // Every entity shows up as a subject and every relation is used.
        let all = lines.join(" ");
        for surface in ["Mona Lisa", "Louvre Museum", "located in", "near"] {
            assert!(all.contains(surface), "{surface} missing from {all}");
        }
        assert_eq!(synth_ie_training(&entities, &relations, &Markers::default(), 2).len(), 2);
        let empty = Catalog::parse("", CatalogKind::Relation).unwrap();
        assert!(synth_ie_training(&entities, &empty, &Markers::default(), 64).is_empty());
    }

    #[test]
    fn extractive_drafts_pair_adjacent_mentions() {
        let (entities, relations) = toy_catalogs();
        let sketcher = ExtractiveIeSketcher::new(&entities, &relations, &Markers::default());
        // "Louvre" is inside "Louvre Museum"; the longer surface wins.
        assert_eq!(
            sketcher.draft("The Mona Lisa sits near the Louvre Museum."),
            "[s] Mona Lisa [r] near [o] Louvre Museum [e]"
        );
        // No mentioned relation falls back to the catalog's first.
        assert_eq!(
            sketcher.draft("Mona Lisa, Louvre Museum."),
            "[s] Mona Lisa [r] located in [o] Louvre Museum [e]"
        );
        // Fewer than two mentions: nothing worth drafting.
        assert_eq!(sketcher.draft("The Mona Lisa is famous."), "");
    }

    #[test]
    fn extractive_sketcher_reads_the_query_line() {
        let (entities, relations) = toy_catalogs();
        let sketcher = ExtractiveIeSketcher::new(&entities, &relations, &Markers::default());
        let prompt = "Input: decoy without mentions\nOutput: old\n\n\
                      Input: Mona Lisa near Louvre Museum\nOutput:";
        let sketch = sketcher.sketch(prompt).unwrap();
        assert_eq!(sketch.text, "[s] Mona Lisa [r] near [o] Louvre Museum [e]");
        assert_eq!(sketch.provenance, "mock");
        assert_eq!(sketch.completion_tokens, 9);
    }

    #[test]
    fn flat_tree_drafts_reuse_demonstration_tags() {
        let sketcher = FlatTreeSketcher::new(&PromptBundle::cp_default(), TagInventory::ptb());
        // "dogs" and "bark" are tagged in the default demonstrations;
        // an unseen word falls back to NN.
        assert_eq!(
            sketcher.draft("dogs bark loudly"),
            "[S [NNS dogs] [VBP bark] [NN loudly]]"
        );
    }

    #[test]
    fn insertion_bonus_is_flat_across_the_vocabulary() {
        let bonus = LengthBonus { vocab_size: 3, bonus: 1.5 };
        assert_eq!(bonus.score_next(&[], &[0]), vec![1.5, 1.5, 1.5]);
    }
}
