//! Out-of-domain training data synthesis through a text-generation endpoint.
//!
//! Each example chains five prompts: objective, plan, page URL, actions and
//! observation. New objectives must stay below a similarity ceiling against
//! every objective generated before them.

mod generator;
mod parse;
pub mod prompts;

use std::fmt;
use std::sync::LazyLock;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generator::{GenError, GenerationParams, HttpGenerator, TextGenerator};

use crate::datafilter::{Domain, Origin, TrainingExample};
use crate::embedder::{EmbedError, Embedder, Vector};
use crate::metrics::cosine_similarity;
use crate::trajlog::Action;

/// Objectives at or above this similarity to a pooled objective are rejected.
pub const MAX_OBJECTIVE_SIMILARITY: f64 = 0.70;

/// Used for a few-shot example whose observation names no page URL.
const FALLBACK_EXAMPLE_URL: &str = "about:blank";

static OBSERVATION_URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"https?://[^\s'"\]\)]+"#).expect("valid regex"));

pub fn passes_gate(max_similarity: f64) -> bool {
    max_similarity < MAX_OBJECTIVE_SIMILARITY
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub intent: String,
    /// Bare hostname.
    pub url: String,
    pub embedding: Vector,
}

/// A benchmark intent used as few-shot material for new objectives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedIntent {
    pub intent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectivePool {
    pub seed_intents: Vec<SeedIntent>,
    pub generated: Vec<Objective>,
}

impl ObjectivePool {
    pub fn new(seed_intents: Vec<SeedIntent>) -> Self {
        Self { seed_intents, generated: Vec::new() }
    }

    /// Highest similarity between `embedding` and any generated objective; 0 when none.
    pub fn max_similarity(&self, embedding: &Vector) -> f64 {
        self.generated.iter().map(|o| cosine_similarity(&o.embedding, embedding)).fold(0.0, f64::max)
    }

    /// Highest similarity between any two generated objectives; 0 below two.
    pub fn max_pairwise_similarity(&self) -> f64 {
        let g = &self.generated;
        let mut best = 0.0f64;
        for i in 0..g.len() {
            for j in i + 1..g.len() {
                best = best.max(cosine_similarity(&g[i].embedding, &g[j].embedding));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub objective: Objective,
    pub steps: Vec<String>,
    /// 1-based.
    pub selected_step: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Objective,
    Plan,
    Url,
    Actions,
    Observation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Objective => "objective",
            Stage::Plan => "plan",
            Stage::Url => "url",
            Stage::Actions => "actions",
            Stage::Observation => "observation",
        })
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{stage} stage: {source}")]
    Transport { stage: Stage, source: GenError },
    #[error("{stage} stage: malformed response: {reason}")]
    Format { stage: Stage, reason: String },
    #[error(
        "no sufficiently novel objective after {attempts} attempts; best was {best:?} at similarity {similarity:.4}"
    )]
    DiversityExhausted { attempts: usize, best: String, similarity: f64 },
    #[error("embedding objective: {0}")]
    Embed(#[from] EmbedError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("{skipped} of {requested} examples skipped; last error: {last_error}")]
    TooManySkips { skipped: usize, requested: usize, last_error: String },
}

fn format_err(stage: Stage) -> impl FnOnce(String) -> SynthError {
    move |reason| SynthError::Format { stage, reason }
}

fn call(gen: &dyn TextGenerator, stage: Stage, prompt: &str, params: &GenerationParams) -> Result<String, SynthError> {
    gen.generate(prompt, params).map_err(|source| SynthError::Transport { stage, source })
}

fn fill(template: &str, values: &[(&str, &str)]) -> String {
    prompts::fill(template, values).expect("built-in templates match their value sets")
}

fn sample<'a, T>(rng: &mut impl Rng, items: &'a [T], amount: usize) -> Vec<&'a T> {
    let amount = amount.min(items.len());
    index::sample(rng, items.len(), amount).into_iter().map(|i| &items[i]).collect()
}

fn objective_prompt(pool: &ObjectivePool, rng: &mut impl Rng) -> String {
    let mut blocks: Vec<String> = sample(rng, &pool.seed_intents, 2)
        .into_iter()
        .map(|s| match &s.url {
            Some(url) => format!("OBJECTIVE: {}\nURL: {}", s.intent, url),
            None => format!("OBJECTIVE: {}", s.intent),
        })
        .collect();
    blocks.extend(
        sample(rng, &pool.generated, 2).into_iter().map(|o| format!("OBJECTIVE: {}\nURL: {}", o.intent, o.url)),
    );
    fill(prompts::OBJECTIVE, &[("examples", &blocks.join("\n\n"))])
}

/// Generates an objective below the similarity ceiling and appends it to the pool.
pub fn generate_objective(
    gen: &dyn TextGenerator,
    embedder: &Embedder,
    pool: &mut ObjectivePool,
    params: &GenerationParams,
    seed: u64,
) -> Result<Objective, SynthError> {
    if pool.seed_intents.len() < 2 {
        return Err(SynthError::Precondition("objective generation needs at least 2 seed intents".into()));
    }
    if params.max_retries == 0 {
        return Err(SynthError::Precondition("max_retries must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(String, f64)> = None;
    for _ in 0..params.max_retries {
        let prompt = objective_prompt(pool, &mut rng);
        let text = call(gen, Stage::Objective, &prompt, params)?;
        let (intent, url) = parse::objective(&text).map_err(format_err(Stage::Objective))?;
        let embedding = embedder.embed_texts(&[intent.as_str()])?.remove(0);
        let similarity = pool.max_similarity(&embedding);
        if passes_gate(similarity) {
            let objective = Objective { intent, url, embedding };
            pool.generated.push(objective.clone());
            return Ok(objective);
        }
        if best.as_ref().is_none_or(|(_, s)| similarity < *s) {
            best = Some((intent, similarity));
        }
    }
    let (best, similarity) = best.expect("at least one attempt was made");
    Err(SynthError::DiversityExhausted { attempts: params.max_retries, best, similarity })
}

/// Probability of each 1-based step: a quarter each for the first and last,
/// the remaining half spread over interior steps.
pub fn step_distribution(plan_length: usize) -> Vec<f64> {
    match plan_length {
        0 => Vec::new(),
        1 => vec![1.0],
        2 => vec![0.5, 0.5],
        n => {
            let interior = 0.5 / (n - 2) as f64;
            (0..n).map(|i| if i == 0 || i == n - 1 { 0.25 } else { interior }).collect()
        }
    }
}

pub fn select_step_with(plan_length: usize, rng: &mut impl Rng) -> usize {
    assert!(plan_length >= 1, "plan length must be positive");
    if plan_length == 1 {
        return 1;
    }
    let dist = WeightedIndex::new(step_distribution(plan_length)).expect("weights are positive");
    dist.sample(rng) + 1
}

/// Draws a 1-based plan step; see [`step_distribution`].
pub fn select_step(plan_length: usize, seed: u64) -> usize {
    select_step_with(plan_length, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn origin_of(step: usize, plan_length: usize) -> Origin {
    if step == 1 {
        Origin::Initial
    } else if step == plan_length {
        Origin::Final
    } else {
        Origin::Intermediate
    }
}

fn envelope(action: &Action) -> String {
    format!("In summary, the next action I will perform is ```{}```", action.render())
}

fn render_prev(prev: Option<&Action>) -> String {
    prev.map_or_else(|| "None".to_string(), Action::render)
}

fn example_url(observation: &str) -> &str {
    OBSERVATION_URL.find(observation).map_or(FALLBACK_EXAMPLE_URL, |m| m.as_str())
}

struct Shot {
    objective: String,
    url: String,
    webpage: String,
    previous_action: String,
    next_action: String,
}

impl Shot {
    fn of(ex: &TrainingExample) -> Self {
        Self {
            objective: ex.intent.clone(),
            url: example_url(&ex.observation).to_string(),
            webpage: ex.observation.clone(),
            previous_action: render_prev(ex.prev_action.as_ref()),
            next_action: format!("Let's think step-by-step. {}", envelope(&ex.target_action)),
        }
    }
}

fn with_shots<'a>(shots: &'a [Shot; 2], action_space: &'a str, rest: &[(&'a str, &'a str)]) -> Vec<(&'a str, &'a str)> {
    let [a, b] = shots;
    let mut values = vec![
        ("action_space", action_space),
        ("example_1_objective", a.objective.as_str()),
        ("example_1_url", a.url.as_str()),
        ("example_1_webpage", a.webpage.as_str()),
        ("example_1_previous_action", a.previous_action.as_str()),
        ("example_1_next_action", a.next_action.as_str()),
        ("example_2_objective", b.objective.as_str()),
        ("example_2_url", b.url.as_str()),
        ("example_2_webpage", b.webpage.as_str()),
        ("example_2_previous_action", b.previous_action.as_str()),
        ("example_2_next_action", b.next_action.as_str()),
    ];
    values.extend_from_slice(rest);
    values
}

/// Runs every stage for one example. The accepted objective is removed from
/// the pool again if a later stage fails.
pub fn generate_example(
    gen: &dyn TextGenerator,
    embedder: &Embedder,
    pool: &mut ObjectivePool,
    in_domain: &[TrainingExample],
    params: &GenerationParams,
    seed: u64,
) -> Result<TrainingExample, SynthError> {
    if in_domain.len() < 2 {
        return Err(SynthError::Precondition("at least 2 in-domain examples are needed as few-shot material".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objective = generate_objective(gen, embedder, pool, params, rng.next_u64())?;
    let pool_index = pool.generated.len() - 1;
    let result = downstream(gen, objective, pool_index, in_domain, params, &mut rng);
    if result.is_err() {
        pool.generated.pop();
    }
    result
}

fn downstream(
    gen: &dyn TextGenerator,
    objective: Objective,
    pool_index: usize,
    in_domain: &[TrainingExample],
    params: &GenerationParams,
    rng: &mut ChaCha8Rng,
) -> Result<TrainingExample, SynthError> {
    let text = call(
        gen,
        Stage::Plan,
        &fill(prompts::PLAN, &[("objective", &objective.intent), ("url", &objective.url)]),
        params,
    )?;
    let steps = parse::plan(&text).map_err(format_err(Stage::Plan))?;
    let k = select_step_with(steps.len(), rng);
    let plan = Plan { objective, steps, selected_step: Some(k) };
    let step_text = k.to_string();
    let joined = plan.steps.join("\n");

    let prompt = fill(
        prompts::URL,
        &[
            ("objective", &plan.objective.intent),
            ("website", &plan.objective.url),
            ("steps", &joined),
            ("step", &step_text),
        ],
    );
    let page_url = parse::page_url(&call(gen, Stage::Url, &prompt, params)?).map_err(format_err(Stage::Url))?;

    let picked = sample(rng, in_domain, 2);
    let shots = [Shot::of(picked[0]), Shot::of(picked[1])];
    let action_space = prompts::ACTION_SPACE.trim_end();
    let values = with_shots(
        &shots,
        action_space,
        &[
            ("step", &step_text),
            ("objective", &plan.objective.intent),
            ("url", &page_url),
            ("plan", &joined),
            ("current_step", &plan.steps[k - 1]),
        ],
    );
    let text = call(gen, Stage::Actions, &fill(prompts::ACTIONS, &values), params)?;
    let (prev, next) = parse::actions(&text).map_err(format_err(Stage::Actions))?;
    // nothing precedes the first step
    let prev = if k == 1 { None } else { prev };

    let prev_text = render_prev(prev.as_ref());
    let next_text = envelope(&next);
    let values = with_shots(
        &shots,
        action_space,
        &[
            ("objective", &plan.objective.intent),
            ("url", &page_url),
            ("previous_action", &prev_text),
            ("next_action", &next_text),
        ],
    );
    let text = call(gen, Stage::Observation, &fill(prompts::OBSERVATION, &values), params)?;
    let observation = parse::webpage(&text).map_err(format_err(Stage::Observation))?;

    Ok(TrainingExample {
        intent: plan.objective.intent,
        observation,
        prev_action: prev,
        target_action: next,
        origin: origin_of(k, plan.steps.len()),
        source_task: format!("ood-{pool_index}"),
        domain: Domain::OutOfDomain,
    })
}

/// An example that failed every attempt.
#[derive(Debug)]
pub struct Skip {
    pub index: usize,
    pub error: SynthError,
}

#[derive(Debug)]
pub struct GeneratedDataset {
    pub examples: Vec<TrainingExample>,
    pub skips: Vec<Skip>,
}

/// Generates `n` examples, retrying each up to `max_retries` times before
/// skipping it. Exhausting the diversity gate ends the run.
pub fn generate_dataset(
    gen: &dyn TextGenerator,
    embedder: &Embedder,
    pool: &mut ObjectivePool,
    in_domain: &[TrainingExample],
    n: usize,
    params: &GenerationParams,
    seed: u64,
) -> Result<GeneratedDataset, SynthError> {
    if n == 0 {
        return Err(SynthError::Precondition("n must be positive".into()));
    }
    if params.max_retries == 0 {
        return Err(SynthError::Precondition("max_retries must be positive".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(n);
    let mut skips = Vec::new();
    for j in 0..n {
        let mut last = None;
        for _ in 0..params.max_retries {
            match generate_example(gen, embedder, pool, in_domain, params, master.next_u64()) {
                Ok(ex) => {
                    examples.push(ex);
                    last = None;
                    break;
                }
                Err(e @ (SynthError::DiversityExhausted { .. } | SynthError::Precondition(_))) => return Err(e),
                Err(e) => last = Some(e),
            }
        }
        if let Some(error) = last {
            skips.push(Skip { index: j, error });
        }
    }
    if 2 * skips.len() > n {
        let last_error = skips.last().map(|s| s.error.to_string()).unwrap_or_default();
        return Err(SynthError::TooManySkips { skipped: skips.len(), requested: n, last_error });
    }
    Ok(GeneratedDataset { examples, skips })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::{EmbeddingCache, HashingProvider};
    use crate::trajlog::parse_action;
    use std::sync::Mutex;

    fn embedder() -> Embedder {
        Embedder::new(Box::new(HashingProvider::new(64)), EmbeddingCache::in_memory())
    }

    fn in_domain() -> Vec<TrainingExample> {
        (0..3)
            .map(|i| TrainingExample {
                intent: format!("seed task {i}"),
                observation: format!("Tab 0 (current): Page\n[1] RootWebArea 'Page' url: http://shop.test/{i}"),
                prev_action: None,
                target_action: parse_action("click [1]"),
                origin: Origin::Initial,
                source_task: i.to_string(),
                domain: Domain::InDomain,
            })
            .collect()
    }

    fn seeds() -> Vec<SeedIntent> {
        ["List the open issues", "What is the price of the cheapest laptop"]
            .map(|s| SeedIntent { intent: s.into(), url: None })
            .to_vec()
    }

    /// Answers by stage, recognised from the prompt text.
    struct Scripted {
        objectives: Mutex<Vec<String>>,
        plan: String,
        next: String,
    }

    impl Scripted {
        fn new(objectives: &[&str], plan: &str, next: &str) -> Self {
            let mut o: Vec<String> = objectives.iter().map(|s| s.to_string()).collect();
            o.reverse();
            Self { objectives: Mutex::new(o), plan: plan.into(), next: next.into() }
        }
    }

    impl TextGenerator for Scripted {
        fn generate(&self, prompt: &str, _: &GenerationParams) -> Result<String, GenError> {
            Ok(if prompt.starts_with("Here are a few example objectives") {
                let mut o = self.objectives.lock().unwrap();
                let intent = if o.len() > 1 { o.pop().unwrap() } else { o[0].clone() };
                format!("OBJECTIVE: {intent}\nURL: www.example-store.com")
            } else if prompt.contains("output the required / necessary steps") {
                self.plan.clone()
            } else if prompt.contains("Output a realistic and valid URL") {
                "https://www.example-store.com/search?q=lamp".into()
            } else if prompt
                .contains("generate a realistic full-length webpage accessibility tree, realistic previous action")
            {
                format!("WEBPAGE: [1] RootWebArea 'Store'\nPREVIOUS ACTION: None\nNEXT ACTION: {}", self.next)
            } else {
                "WEBPAGE: [1] RootWebArea 'Store'\n[7] button 'Buy'".into()
            })
        }
    }

    const NEXT: &str = "Let's think step-by-step. In summary, the next action I will perform is ```click [7]```";

    #[test]
    fn distribution() {
        assert_eq!(step_distribution(1), [1.0]);
        assert_eq!(step_distribution(2), [0.5, 0.5]);
        assert_eq!(step_distribution(4), [0.25; 4]);
        let d = step_distribution(6);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(select_step(1, 9), 1);
        assert_eq!(select_step(5, 3), select_step(5, 3));
    }

    #[test]
    fn gate_is_strict() {
        assert!(passes_gate(0.0));
        assert!(passes_gate(0.69));
        assert!(!passes_gate(0.70));
    }

    #[test]
    fn pipes_canned_content_through() {
        let gen = Scripted::new(&["Find the return policy for lamps"], "Click on lamps", NEXT);
        let mut pool = ObjectivePool::new(seeds());
        let ex = generate_example(&gen, &embedder(), &mut pool, &in_domain(), &GenerationParams::default(), 1).unwrap();
        assert_eq!(ex.intent, "Find the return policy for lamps");
        assert_eq!(ex.observation, "[1] RootWebArea 'Store'\n[7] button 'Buy'");
        assert_eq!(ex.target_action, parse_action("click [7]"));
        assert_eq!(ex.origin, Origin::Initial);
        assert_eq!(ex.domain, Domain::OutOfDomain);
        assert_eq!(ex.source_task, "ood-0");
        assert_eq!(pool.generated[0].url, "www.example-store.com");
    }

    #[test]
    fn missing_envelope_names_actions_stage() {
        let gen = Scripted::new(&["Find the return policy for lamps"], "Click on lamps", "click [7]");
        let mut pool = ObjectivePool::new(seeds());
        let err =
            generate_example(&gen, &embedder(), &mut pool, &in_domain(), &GenerationParams::default(), 1).unwrap_err();
        assert!(matches!(err, SynthError::Format { stage: Stage::Actions, .. }), "{err}");
        assert!(pool.generated.is_empty());
    }

    #[test]
    fn repeated_intent_exhausts_gate() {
        let gen = Scripted::new(&["Find the return policy for lamps"], "Click on lamps", NEXT);
        let mut pool = ObjectivePool::new(seeds());
        let params = GenerationParams { max_retries: 3, ..Default::default() };
        let err = generate_dataset(&gen, &embedder(), &mut pool, &in_domain(), 2, &params, 5).unwrap_err();
        match err {
            SynthError::DiversityExhausted { attempts, similarity, .. } => {
                assert_eq!(attempts, 3);
                assert!(similarity >= MAX_OBJECTIVE_SIMILARITY);
            }
            other => panic!("unexpected {other}"),
        }
        assert_eq!(pool.generated.len(), 1);
    }

    #[test]
    fn dataset_preconditions() {
        let gen = Scripted::new(&["x"], "y", NEXT);
        let mut pool = ObjectivePool::new(seeds());
        let p = GenerationParams::default();
        assert!(matches!(
            generate_dataset(&gen, &embedder(), &mut pool, &in_domain(), 0, &p, 0),
            Err(SynthError::Precondition(_))
        ));
        assert!(matches!(
            generate_dataset(&gen, &embedder(), &mut pool, &in_domain()[..1], 1, &p, 0),
            Err(SynthError::Precondition(_))
        ));
    }

    #[test]
    fn url_extraction() {
        assert_eq!(example_url("[1] RootWebArea 'x' url: http://a.test/b?c=1\n"), "http://a.test/b?c=1");
        assert_eq!(example_url("no link"), FALLBACK_EXAMPLE_URL);
    }
}
