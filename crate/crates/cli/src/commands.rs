use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use trajeval::datafilter::{
    assemble_mixture, balanced_sample, filter_plausible, merge_with_fallback, read_training_set, write_training_set,
    MixtureKind, TrainingSet,
};
use trajeval::embedder::{render_step, Embedder};
use trajeval::metrics::{
    capability_diff, cluster_templates, detect_trivial, earned_groups, functional_correctness, task_group_index,
    CapabilityGroup, TemplateEntry, TemplateRecord, TrivialTaskSet,
};
use trajeval::synthgen::{generate_dataset, GenerationParams, HttpGenerator, ObjectivePool, SeedIntent};
use trajeval::trajlog::{
    load_trajectories, read_jsonl, trivial_agent_trajectory, write_trajectories, TaskResult, Trajectory,
};
use trajeval::vertex::{
    aggregate_scores, score_task, AggregateOptions, AlignMode, NodeSimilarityConfig, TaskScore, Weighting,
};

use crate::files::{ensure_distinct, write_atomic, write_json, Inputs, Manifest};
use crate::{
    CapabilityArgs, DiffArgs, EmbedArgs, FcArgs, FilterArgs, GenerateArgs, MixArgs, ReportArgs, SampleArgs,
    ScoreVertexArgs,
};

fn load_log(inputs: &mut Inputs, path: &Path) -> Result<Vec<Trajectory>> {
    let bytes = inputs.read(path)?;
    load_trajectories(bytes.as_slice()).with_context(|| format!("trajlog: {}", path.display()))
}

fn load_results(inputs: &mut Inputs, path: &Path) -> Result<Vec<TaskResult>> {
    let bytes = inputs.read(path)?;
    Ok(read_jsonl::<TaskResult>(bytes.as_slice())
        .with_context(|| format!("metrics: {}", path.display()))?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

fn load_examples(inputs: &mut Inputs, path: &Path) -> Result<Vec<trajeval::datafilter::TrainingExample>> {
    let bytes = inputs.read(path)?;
    read_training_set(bytes.as_slice()).with_context(|| format!("datafilter: {}", path.display()))
}

fn load_templates(inputs: &mut Inputs, path: &Path) -> Result<Vec<TemplateRecord>> {
    let bytes = inputs.read(path)?;
    Ok(read_jsonl::<TemplateRecord>(bytes.as_slice())
        .with_context(|| format!("metrics: {}", path.display()))?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

fn load_trivial(inputs: &mut Inputs, path: Option<&Path>) -> Result<TrivialTaskSet> {
    match path {
        Some(p) => {
            let results = load_results(inputs, p)?;
            detect_trivial(&results).with_context(|| format!("metrics: {}", p.display()))
        }
        None => Ok(TrivialTaskSet::default()),
    }
}

fn group_templates(records: Vec<TemplateRecord>, embedder: &Embedder, threshold: f64) -> Result<Vec<CapabilityGroup>> {
    let texts: Vec<&str> = records.iter().map(|r| r.template_text.as_str()).collect();
    let vectors = embedder.embed_texts(&texts).map_err(|e| anyhow!("embedder: templates: {e}"))?;
    let entries: Vec<TemplateEntry> = records
        .into_iter()
        .zip(vectors)
        .map(|(r, embedding)| TemplateEntry {
            template_id: r.template_id,
            template_text: r.template_text,
            task_ids: r.task_ids,
            embedding,
        })
        .collect();
    cluster_templates(&entries, threshold).map_err(|e| anyhow!("metrics: {e}"))
}

fn training_set_bytes(set: &TrainingSet) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    write_training_set(&mut bytes, set)?;
    Ok(bytes)
}

pub fn filter(a: FilterArgs) -> Result<()> {
    ensure_distinct(&a.out, std::iter::once(a.input.as_path()).chain(a.fallback.as_deref()))?;
    let mut inputs = Inputs::default();
    let primary = load_log(&mut inputs, &a.input)?;
    let (plausible, counts) = filter_plausible(&primary);
    let kept = match &a.fallback {
        Some(path) => {
            let fallback = load_log(&mut inputs, path)?;
            merge_with_fallback(&primary, &fallback).map_err(|e| anyhow!("datafilter: {e}"))?
        }
        None => plausible.into_inner(),
    };
    let mut bytes = Vec::new();
    write_trajectories(&mut bytes, &kept)?;
    write_atomic(&a.out, &bytes)?;
    let summary: Vec<String> = counts.iter().map(|(s, n)| format!("{s:?}={n}")).collect();
    eprintln!("kept {} of {} trajectories ({})", kept.len(), primary.len(), summary.join(", "));
    Ok(())
}

pub fn sample(a: SampleArgs, seed: u64) -> Result<()> {
    ensure_distinct(&a.out, [a.input.as_path()])?;
    let mut inputs = Inputs::default();
    let log = load_log(&mut inputs, &a.input)?;
    let (plausible, _) = filter_plausible(&log);
    if plausible.len() != log.len() {
        bail!(
            "datafilter: {}: {} trajectories are not plausible; run `filter` first",
            a.input.display(),
            log.len() - plausible.len()
        );
    }
    let examples = balanced_sample(&plausible, seed);
    let set = TrainingSet { examples, mixture: MixtureKind::A, seed };
    write_atomic(&a.out, &training_set_bytes(&set)?)
}

pub fn mix(a: MixArgs, seed: u64) -> Result<()> {
    ensure_distinct(&a.out, a.input.iter().chain(&a.ood).map(|p| p.as_path()))?;
    let mut inputs = Inputs::default();
    let in_domain = match &a.input {
        Some(p) => load_examples(&mut inputs, p)?,
        None => Vec::new(),
    };
    let ood = match &a.ood {
        Some(p) => load_examples(&mut inputs, p)?,
        None => Vec::new(),
    };
    let set = assemble_mixture(a.mixture, &in_domain, &ood, seed).map_err(|e| anyhow!("datafilter: {e}"))?;
    write_atomic(&a.out, &training_set_bytes(&set)?)
}

pub fn generate(a: GenerateArgs, seed: u64) -> Result<()> {
    ensure_distinct(&a.out, [a.input.as_path(), a.intents.as_path()].into_iter().chain(a.embed.embeddings.as_deref()))?;
    let mut inputs = Inputs::default();
    let in_domain = load_examples(&mut inputs, &a.input)?;
    let bytes = inputs.read(&a.intents)?;
    let seeds: Vec<SeedIntent> = read_jsonl::<SeedIntent>(bytes.as_slice())
        .with_context(|| format!("synthgen: {}", a.intents.display()))?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    let embedder = a.embed.build(&mut inputs)?;
    let generator = HttpGenerator::new(&a.gen_endpoint);
    let params = GenerationParams { temperature: a.temperature, top_p: a.top_p, max_retries: a.max_retries };
    let n = a.n.unwrap_or(in_domain.len());
    let mut pool = ObjectivePool::new(seeds);
    let run = generate_dataset(&generator, &embedder, &mut pool, &in_domain, n, &params, seed)
        .map_err(|e| anyhow!("synthgen: {e}"))?;
    for skip in &run.skips {
        eprintln!("skipped example {}: {}", skip.index, skip.error);
    }
    let set = TrainingSet { examples: run.examples, mixture: MixtureKind::C, seed };
    write_atomic(&a.out, &training_set_bytes(&set)?)
}

pub fn embed(a: EmbedArgs) -> Result<()> {
    let sources = a.input.iter().chain(&a.refs).chain(&a.templates).chain(&a.embed.embeddings);
    ensure_distinct(&a.out, sources.map(|p| p.as_path()))?;
    let mut inputs = Inputs::default();
    let embedder = a.embed.build(&mut inputs)?;
    let mut texts: Vec<String> = Vec::new();
    for path in &a.input {
        texts.extend(load_log(&mut inputs, path)?.iter().flat_map(|t| t.steps.iter().map(render_step)));
    }
    for path in &a.refs {
        for r in load_log(&mut inputs, path)? {
            texts.extend(r.steps.iter().map(render_step));
            texts.extend(trivial_baseline(&r).steps.iter().map(render_step));
        }
    }
    if let Some(path) = &a.templates {
        texts.extend(load_templates(&mut inputs, path)?.into_iter().map(|t| t.template_text));
    }
    embedder.embed_texts(&texts).map_err(|e| anyhow!("embedder: {e}"))?;
    let mut bytes = Vec::new();
    embedder.cache().write_all(&mut bytes)?;
    write_atomic(&a.out, &bytes)?;
    eprintln!("{} embeddings", embedder.cache().len());
    Ok(())
}

/// The trivial agent's trajectory on a reference's starting page.
fn trivial_baseline(reference: &Trajectory) -> Trajectory {
    trivial_agent_trajectory(&reference.task_id, reference.intent(), &reference.steps[0].observation)
}

#[derive(Serialize)]
struct VertexReport {
    kind: &'static str,
    aggregate: f64,
    weighting: Weighting,
    exclude_trivial: bool,
    tasks: Vec<TaskScore>,
    manifest: Manifest,
}

pub fn score_vertex(a: ScoreVertexArgs, seed: u64) -> Result<()> {
    let sources = [a.input.as_path(), a.refs.as_path()]
        .into_iter()
        .chain(a.baseline.as_deref())
        .chain(a.templates.as_deref())
        .chain(a.trivial_results.as_deref())
        .chain(a.embed.embeddings.as_deref());
    ensure_distinct(&a.out, sources)?;
    if a.weighting == Weighting::ByCapability && a.templates.is_none() {
        bail!("--weighting capability needs --templates");
    }
    if a.exclude_trivial && a.trivial_results.is_none() {
        bail!("--exclude-trivial needs --trivial-results");
    }

    let mut inputs = Inputs::default();
    let mut tests = load_log(&mut inputs, &a.input)?;
    let mut refs: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
    for r in load_log(&mut inputs, &a.refs)? {
        refs.entry(r.task_id.clone()).or_default().push(r);
    }
    let baselines: HashMap<String, Trajectory> = match &a.baseline {
        Some(p) => load_log(&mut inputs, p)?.into_iter().map(|t| (t.task_id.clone(), t)).collect(),
        None => HashMap::new(),
    };
    let templates = a.templates.as_deref().map(|p| load_templates(&mut inputs, p)).transpose()?;
    let trivial = load_trivial(&mut inputs, a.trivial_results.as_deref())?;
    let embedder = a.embed.build(&mut inputs)?;

    tests.sort_by(|x, y| x.task_id.cmp(&y.task_id));
    if let Some(w) = tests.windows(2).find(|w| w[0].task_id == w[1].task_id) {
        bail!("trajlog: {}: task {} appears twice", a.input.display(), w[0].task_id);
    }
    let config = NodeSimilarityConfig {
        bandwidth: a.sigma,
        align: a.radius.map_or(AlignMode::Exact, |radius| AlignMode::Fast { radius }),
    };

    let scores: Vec<TaskScore> = tests
        .par_iter()
        .map(|test| -> Result<TaskScore> {
            let id = &test.task_id;
            let task_refs = refs.get(id).ok_or_else(|| anyhow!("vertex: task {id} has no reference trajectory"))?;
            let baseline = match baselines.get(id) {
                Some(b) => b.clone(),
                None if a.baseline.is_some() => bail!("vertex: task {id} has no baseline trajectory"),
                None => trivial_baseline(&task_refs[0]),
            };
            let embed = |t: &Trajectory| embedder.embed_trajectory(t).map_err(|e| anyhow!("embedder: task {id}: {e}"));
            let ref_vecs = task_refs.iter().map(embed).collect::<Result<Vec<_>>>()?;
            score_task(&ref_vecs, &embed(test)?, &embed(&baseline)?, &config)
                .map_err(|e| anyhow!("vertex: task {id}: {e}"))
        })
        .collect::<Result<_>>()?;

    let groups = match templates {
        Some(t) => Some(task_group_index(&group_templates(t, &embedder, a.threshold)?)),
        None => None,
    };
    let options = AggregateOptions {
        exclude_trivial: a.exclude_trivial,
        capability_groups: groups.as_ref(),
        trivial_tasks: Some(&trivial.task_ids),
    };
    let aggregate = aggregate_scores(&scores, a.weighting, &options).map_err(|e| anyhow!("vertex: {e}"))?;

    let config_json = json!({
        "sigma": config.bandwidth,
        "align": config.align,
        "weighting": a.weighting,
        "exclude_trivial": a.exclude_trivial,
        "threshold": a.threshold,
        "baseline": a.baseline.is_some(),
        "embed": a.embed,
    });
    let report = VertexReport {
        kind: "vertex",
        aggregate,
        weighting: a.weighting,
        exclude_trivial: a.exclude_trivial,
        tasks: scores,
        manifest: inputs.manifest("score-vertex", seed, &config_json),
    };
    write_json(&a.out, &report)
}

#[derive(Serialize)]
struct GroupOut {
    group_id: usize,
    template_ids: Vec<String>,
    earned: bool,
}

#[derive(Serialize)]
struct CapabilityReport {
    kind: &'static str,
    score: f64,
    earned: usize,
    total: usize,
    groups: Vec<GroupOut>,
    manifest: Manifest,
}

pub fn score_capability(a: CapabilityArgs, seed: u64) -> Result<()> {
    let sources = [a.templates.as_path(), a.results.as_path()]
        .into_iter()
        .chain(a.trivial_results.as_deref())
        .chain(a.embed.embeddings.as_deref());
    ensure_distinct(&a.out, sources)?;
    let mut inputs = Inputs::default();
    let templates = load_templates(&mut inputs, &a.templates)?;
    let results = load_results(&mut inputs, &a.results)?;
    let trivial = load_trivial(&mut inputs, a.trivial_results.as_deref())?;
    let embedder = a.embed.build(&mut inputs)?;
    let groups = group_templates(templates, &embedder, a.threshold)?;
    if groups.is_empty() {
        bail!("metrics: {}: no templates", a.templates.display());
    }
    let earned = earned_groups(&groups, &results, &trivial).map_err(|e| anyhow!("metrics: {e}"))?;
    let config = json!({ "threshold": a.threshold, "embed": a.embed });
    let report = CapabilityReport {
        kind: "capability",
        score: earned.len() as f64 / groups.len() as f64,
        earned: earned.len(),
        total: groups.len(),
        groups: groups
            .iter()
            .map(|g| GroupOut {
                group_id: g.group_id,
                template_ids: g.members.iter().map(|m| m.template_id.clone()).collect(),
                earned: earned.contains(&g.group_id),
            })
            .collect(),
        manifest: inputs.manifest("score-capability", seed, &config),
    };
    write_json(&a.out, &report)
}

#[derive(Serialize)]
struct FcReport {
    kind: &'static str,
    functional_correctness: f64,
    completed: usize,
    total: usize,
    manifest: Manifest,
}

pub fn score_fc(a: FcArgs, seed: u64) -> Result<()> {
    ensure_distinct(&a.out, [a.results.as_path()])?;
    let mut inputs = Inputs::default();
    let results = load_results(&mut inputs, &a.results)?;
    let fc = functional_correctness(&results).map_err(|e| anyhow!("metrics: {}: {e}", a.results.display()))?;
    let report = FcReport {
        kind: "functional_correctness",
        functional_correctness: fc,
        completed: results.iter().filter(|r| r.completed).count(),
        total: results.len(),
        manifest: inputs.manifest("score-fc", seed, &json!({})),
    };
    write_json(&a.out, &report)
}

#[derive(Serialize)]
struct DiffReport {
    kind: &'static str,
    acquired: Vec<usize>,
    lost: Vec<usize>,
    manifest: Manifest,
}

pub fn diff_capabilities(a: DiffArgs, seed: u64) -> Result<()> {
    let sources = [a.templates.as_path(), a.results.as_path(), a.compare.as_path()]
        .into_iter()
        .chain(a.trivial_results.as_deref())
        .chain(a.embed.embeddings.as_deref());
    ensure_distinct(&a.out, sources)?;
    let mut inputs = Inputs::default();
    let templates = load_templates(&mut inputs, &a.templates)?;
    let before = load_results(&mut inputs, &a.results)?;
    let after = load_results(&mut inputs, &a.compare)?;
    let trivial = load_trivial(&mut inputs, a.trivial_results.as_deref())?;
    let embedder = a.embed.build(&mut inputs)?;
    let groups = group_templates(templates, &embedder, a.threshold)?;
    let diff = capability_diff(&groups, &before, &after, &trivial).map_err(|e| anyhow!("metrics: {e}"))?;
    let config = json!({ "threshold": a.threshold, "embed": a.embed });
    let report = DiffReport {
        kind: "capability_diff",
        acquired: diff.acquired.into_iter().collect(),
        lost: diff.lost.into_iter().collect(),
        manifest: inputs.manifest("diff-capabilities", seed, &config),
    };
    write_json(&a.out, &report)
}

fn headline(report: &serde_json::Value) -> Result<Vec<(&'static str, String)>> {
    let num = |key: &str| report.get(key).and_then(|v| v.as_f64()).ok_or_else(|| anyhow!("missing field {key}"));
    let list = |key: &str| -> Result<String> {
        let items = report.get(key).and_then(|v| v.as_array()).ok_or_else(|| anyhow!("missing field {key}"))?;
        Ok(items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
    };
    let kind = report.get("kind").and_then(|v| v.as_str()).ok_or_else(|| anyhow!("not a trajeval report"))?;
    Ok(match kind {
        "vertex" => {
            vec![("vertex aggregate", format!("{:.4}", num("aggregate")?)), ("tasks", list_len(report, "tasks")?)]
        }
        "capability" => vec![
            ("capability score", format!("{:.2}%", 100.0 * num("score")?)),
            ("groups earned", format!("{} / {}", num("earned")?, num("total")?)),
        ],
        "functional_correctness" => vec![
            ("functional correctness", format!("{:.2}%", 100.0 * num("functional_correctness")?)),
            ("completed", format!("{} / {}", num("completed")?, num("total")?)),
        ],
        "capability_diff" => vec![("acquired", list("acquired")?), ("lost", list("lost")?)],
        other => bail!("unknown report kind {other:?}"),
    })
}

fn list_len(report: &serde_json::Value, key: &str) -> Result<String> {
    Ok(report.get(key).and_then(|v| v.as_array()).ok_or_else(|| anyhow!("missing field {key}"))?.len().to_string())
}

pub fn report(a: ReportArgs) -> Result<()> {
    ensure_distinct(&a.out, a.input.iter().map(|p| p.as_path()))?;
    let mut inputs = Inputs::default();
    let mut out = String::from("| report | metric | value |\n|---|---|---|\n");
    let mut seen = HashSet::new();
    for path in &a.input {
        let bytes = inputs.read(path)?;
        let value: serde_json::Value =
            serde_json::from_slice(&bytes).with_context(|| format!("report: {}", path.display()))?;
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        if !seen.insert(name.clone()) {
            bail!("report: {name} given twice");
        }
        for (metric, val) in headline(&value).with_context(|| format!("report: {}", path.display()))? {
            out.push_str(&format!("| {name} | {metric} | {val} |\n"));
        }
    }
    write_atomic(&a.out, out.as_bytes())
}
