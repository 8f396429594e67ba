//! Pipeline stages behind the command-line tool. Each stage writes its artifacts into
//! an output directory together with a `manifest.json` that records the command line,
//! effective configuration, seed and SHA-256 digests of inputs and outputs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::ego::EgoParams;
use super::evaluate::{evaluate, EgoSpec};
use super::manifest::RunManifest;
use super::perturb::{GeneratorPreset, Models};
use super::suite::{evaluation_suite, split_80_20, synthetic_suite, training_suite};
use super::train::{train_ego, TrainResult};
use crate::criticality::scorer::{train_scorer, ScorerModel};
use crate::criticality::{build_oracle_corpus, read_corpus, write_corpus};
use crate::error::{Error, Result};
use crate::metrics::{write_episode_csv, MetricsReport};
use crate::scenario::{load_manifest, load_scenario, save_manifest, save_scenario, Scenario};
use crate::sim::episode::{read_rollouts, write_rollouts};
use crate::skills::{build_library, collect_demonstrations, observe_record, segment_and_label, DemoEpisode, Label, SkillLibrary};

pub const TOOL: &str = "seal";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where a stage writes, and what to record about how it was invoked.
#[derive(Debug, Clone)]
pub struct StageContext {
    pub out: PathBuf,
    pub config: RunConfig,
    pub config_path: Option<PathBuf>,
    pub command: String,
    pub args: Vec<String>,
}

impl StageContext {
    fn begin(&self) -> Result<RunManifest> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let config = serde_json::to_value(&self.config).expect("config serializes");
        let mut m = RunManifest::new(TOOL, VERSION, &self.command, self.args.clone(), self.config.seed, config);
        if let Some(p) = &self.config_path {
            m.add_input(p)?;
        }
        Ok(m)
    }

    fn finish(&self, mut m: RunManifest) -> Result<RunManifest> {
        m.record_outputs(&self.out)?;
        m.save(&self.out)?;
        Ok(m)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Which part of a scenario set a stage works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    All,
    /// The 80% training part.
    Train,
    /// The 20% held-out part.
    HeldOut,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Split::All),
            "train" => Ok(Split::Train),
            "held-out" => Ok(Split::HeldOut),
            _ => Err(Error::Config(format!("unknown split `{s}`"))),
        }
    }
}

fn apply_split(all: Vec<Scenario>, split: Split) -> Vec<Scenario> {
    match split {
        Split::All => all,
        Split::Train => split_80_20(&all).0,
        Split::HeldOut => split_80_20(&all).1,
    }
}

/// Scenario source of a stage: a manifest file, or a built-in synthetic suite.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Manifest(PathBuf),
    /// The training suite sized by the configuration.
    TrainingSuite,
    EvaluationSuite,
}

fn load_source(src: &ScenarioSource, split: Split, cfg: &RunConfig, m: &mut RunManifest) -> Result<Vec<Scenario>> {
    let all = match src {
        ScenarioSource::Manifest(path) => {
            m.add_input(path)?;
            let mut out = Vec::new();
            for p in load_manifest(path)? {
                m.add_input(&p)?;
                out.push(load_scenario(&p)?);
            }
            out
        }
        ScenarioSource::TrainingSuite => training_suite(cfg.suite.train_count),
        ScenarioSource::EvaluationSuite => evaluation_suite(),
    };
    let picked = apply_split(all, split);
    if picked.is_empty() {
        return Err(Error::Validation("no scenarios selected".into()));
    }
    Ok(picked)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(what, e.to_string()))
}

/// Writes scenarios as `scenarios/<id>.json` plus a `scenarios.txt` manifest.
fn write_scenario_set(dir: &Path, scenarios: &[Scenario]) -> Result<()> {
    let sub = dir.join("scenarios");
    std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    let mut entries = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let rel = PathBuf::from("scenarios").join(format!("{}.json", s.id));
        save_scenario(s, &dir.join(&rel))?;
        entries.push(rel);
    }
    save_manifest(&dir.join("scenarios.txt"), &entries)
}

pub fn gen_scenarios(ctx: &StageContext, count: usize, background: usize) -> Result<RunManifest> {
    if count == 0 {
        return Err(Error::Validation("count must be positive".into()));
    }
    let m = ctx.begin()?;
    let scenarios = synthetic_suite(ctx.config.seed, count, background);
    write_scenario_set(&ctx.out, &scenarios)?;
    ctx.finish(m)
}

/// Runs IDM demonstrations; the output directory is self-contained for `build_skills`.
pub fn collect_demos(ctx: &StageContext, src: &ScenarioSource, split: Split) -> Result<RunManifest> {
    let mut m = ctx.begin()?;
    let scenarios = load_source(src, split, &ctx.config, &mut m)?;
    let demos = collect_demonstrations(&scenarios, ctx.config.seed)?;
    write_scenario_set(&ctx.out, &scenarios)?;
    let records: Vec<_> = demos.into_iter().map(|d| d.record).collect();
    write_rollouts(&ctx.path("demos.jsonl"), &records)?;
    ctx.finish(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillSummary {
    pub episodes: usize,
    pub segments: usize,
    pub adversarial_segments: usize,
    pub cluster_sizes: Vec<usize>,
}

pub fn build_skills(ctx: &StageContext, corpus_dir: &Path) -> Result<RunManifest> {
    let mut m = ctx.begin()?;
    let manifest = corpus_dir.join("scenarios.txt");
    let demos_path = corpus_dir.join("demos.jsonl");
    m.add_input(&manifest)?;
    m.add_input(&demos_path)?;
    let mut scenarios = std::collections::BTreeMap::new();
    for p in load_manifest(&manifest)? {
        let s = load_scenario(&p)?;
        scenarios.insert(s.id.clone(), s);
    }
    let corpus = read_rollouts(&demos_path)?
        .into_iter()
        .map(|record| {
            let s = scenarios.get(&record.scenario_id).ok_or_else(|| {
                Error::Validation(format!("demonstration for unknown scenario {}", record.scenario_id))
            })?;
            let obs = observe_record(s, &record);
            Ok(DemoEpisode { record, obs })
        })
        .collect::<Result<Vec<_>>>()?;
    let segments = segment_and_label(&corpus, ctx.config.horizon)?;
    let lib = build_library(&segments, ctx.config.clusters, ctx.config.seed)?;
    lib.save(&ctx.path("skills.json"))?;
    let summary = SkillSummary {
        episodes: corpus.len(),
        segments: segments.len(),
        adversarial_segments: segments.iter().filter(|s| s.label == Label::Adversarial).count(),
        cluster_sizes: (0..lib.clusters()).map(|c| lib.cluster_members(c).len()).collect(),
    };
    write_json(&ctx.path("skills_summary.json"), &summary)?;
    ctx.finish(m)
}

pub fn gen_corpus(ctx: &StageContext, src: &ScenarioSource, split: Split) -> Result<RunManifest> {
    let mut m = ctx.begin()?;
    let scenarios = load_source(src, split, &ctx.config, &mut m)?;
    let corpus = build_oracle_corpus(&scenarios, ctx.config.seed, ctx.config.b)?;
    write_corpus(&ctx.path("corpus.jsonl"), &corpus)?;
    ctx.finish(m)
}

/// `corpus` may be the corpus file or a `gen_corpus` output directory.
pub fn train_scorer_stage(ctx: &StageContext, corpus: &Path) -> Result<RunManifest> {
    let mut m = ctx.begin()?;
    let file = if corpus.is_dir() { corpus.join("corpus.jsonl") } else { corpus.to_path_buf() };
    m.add_input(&file)?;
    let entries = read_corpus(&file)?;
    let (model, report) = train_scorer(&entries, ctx.config.seed, &ctx.config.scorer)?;
    model.save(&ctx.path("scorer.json"))?;
    write_json(&ctx.path("train_report.json"), &report)?;
    ctx.finish(m)
}

/// Trained models used by the generator; files are hashed into the manifest.
#[derive(Debug, Clone, Default)]
pub struct ModelPaths {
    pub scorer: Option<PathBuf>,
    pub skills: Option<PathBuf>,
}

fn resolve(p: &Path, file: &str) -> PathBuf {
    if p.is_dir() {
        p.join(file)
    } else {
        p.to_path_buf()
    }
}

fn load_models(paths: &ModelPaths, g: GeneratorPreset, m: &mut RunManifest) -> Result<Models> {
    let cfg = g.config();
    let mut models = Models::default();
    if cfg.needs_scorer() {
        if let Some(p) = &paths.scorer {
            let p = resolve(p, "scorer.json");
            m.add_input(&p)?;
            models.scorer = Some(Arc::new(ScorerModel::load(&p)?));
        }
    }
    if cfg.needs_library() {
        if let Some(p) = &paths.skills {
            let p = resolve(p, "skills.json");
            m.add_input(&p)?;
            models.library = Some(Arc::new(SkillLibrary::load(&p)?));
        }
    }
    models.check(&cfg)?;
    Ok(models)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GenerationRow {
    generation: usize,
    perturb_probability: f64,
    perturbed: usize,
    mean_fitness: f64,
    best_fitness: f64,
    final_fitness: f64,
}

pub fn train_ego_stage(ctx: &StageContext, src: &ScenarioSource, split: Split, models: &ModelPaths) -> Result<RunManifest> {
    let mut m = ctx.begin()?;
    let g = ctx.config.generator;
    let models = load_models(models, g, &mut m)?;
    let scenarios = load_source(src, split, &ctx.config, &mut m)?;
    let result: TrainResult = train_ego(
        &scenarios,
        &g.config(),
        &models,
        &ctx.config.cem,
        &ctx.config.ego_bounds,
        &ctx.config.train_settings(),
    )?;
    write_json(&ctx.path("ego.json"), &result.params)?;
    write_json(&ctx.path("train_result.json"), &result)?;
    let mut w = csv::Writer::from_path(ctx.path("training_log.csv")).map_err(|e| Error::Validation(e.to_string()))?;
    for l in &result.log {
        w.serialize(GenerationRow {
            generation: l.generation,
            perturb_probability: l.perturb_probability,
            perturbed: l.perturbed,
            mean_fitness: l.mean_fitness,
            best_fitness: l.best_fitness,
            final_fitness: l.final_fitness,
        })
        .map_err(|e| Error::Validation(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(ctx.path("training_log.csv"), e))?;
    ctx.finish(m)
}

/// Ego choice on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgoKind {
    Replay,
    Idm,
    Trainable,
}

impl std::str::FromStr for EgoKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replay" => Ok(EgoKind::Replay),
            "idm" => Ok(EgoKind::Idm),
            "trainable" => Ok(EgoKind::Trainable),
            _ => Err(Error::Config(format!("unknown ego `{s}`"))),
        }
    }
}

/// Identifies an evaluation run for the report tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub run_id: String,
    pub generator: GeneratorPreset,
    pub ego: EgoSpec,
    pub k: usize,
    pub scenarios: usize,
}

pub fn evaluate_stage(
    ctx: &StageContext,
    src: &ScenarioSource,
    split: Split,
    ego: EgoKind,
    ego_params: Option<&Path>,
    models: &ModelPaths,
) -> Result<RunManifest> {
    let mut m = ctx.begin()?;
    let g = ctx.config.generator;
    let models = load_models(models, g, &mut m)?;
    let ego = match ego {
        EgoKind::Replay => EgoSpec::Replay,
        EgoKind::Idm => EgoSpec::Idm,
        EgoKind::Trainable => {
            let params = match ego_params {
                Some(p) => {
                    let p = resolve(p, "ego.json");
                    m.add_input(&p)?;
                    let params: EgoParams = read_json(&p, "ego parameters")?;
                    if !ctx.config.ego_bounds.contains(&params) {
                        return Err(Error::Validation("ego parameters outside the configured bounds".into()));
                    }
                    params
                }
                None => EgoParams::default(),
            };
            EgoSpec::Trainable { params }
        }
    };
    let scenarios = load_source(src, split, &ctx.config, &mut m)?;
    let run_id = format!("{}:{}", g.name(), ego.name());
    let eval = evaluate(&run_id, &scenarios, &ego, &g.config(), &models, &ctx.config.eval_settings())?;
    eval.report.save(&ctx.path("report.json"))?;
    write_episode_csv(&ctx.path("episodes.csv"), &eval.rows)?;
    write_rollouts(&ctx.path("rollouts.jsonl"), &eval.records())?;
    let traces: Vec<String> = eval
        .scenarios
        .iter()
        .map(|s| {
            serde_json::json!({"scenario_id": s.scenario_id, "iterations": s.iterations}).to_string()
        })
        .collect();
    std::fs::write(ctx.path("iterations.jsonl"), traces.join("\n") + "\n")
        .map_err(|e| Error::io(ctx.path("iterations.jsonl"), e))?;
    write_json(
        &ctx.path("run.json"),
        &RunInfo {
            run_id,
            generator: g,
            ego,
            k: ctx.config.k,
            scenarios: scenarios.len(),
        },
    )?;
    ctx.finish(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AblationRow {
    run: String,
    run_id: String,
    generator: String,
    ego: String,
    episodes: usize,
    success: f64,
    crash: f64,
    offroad: f64,
    timeout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RealismRow {
    run: String,
    run_id: String,
    generator: String,
    ego: String,
    yaw_wd: f64,
    acc_wd: f64,
    road_wd: f64,
    realism: f64,
    collision_velocity: f64,
    head_on: f64,
    severe_head_on: f64,
    crashes: usize,
}

/// Collects evaluation runs into plot-ready tables (`ablation.csv`, `realism.csv`).
pub fn report(ctx: &StageContext, runs: &[PathBuf]) -> Result<RunManifest> {
    if runs.is_empty() {
        return Err(Error::Validation("no evaluation runs given".into()));
    }
    let mut m = ctx.begin()?;
    let mut loaded = Vec::new();
    for dir in runs {
        let (rp, ip) = (dir.join("report.json"), dir.join("run.json"));
        m.add_input(&rp)?;
        m.add_input(&ip)?;
        let info: RunInfo = read_json(&ip, "run info")?;
        let name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        loaded.push((name, info, MetricsReport::load(&rp)?));
    }
    loaded.sort_by(|a, b| (&a.0, &a.1.run_id).cmp(&(&b.0, &b.1.run_id)));
    let csv_err = |e: csv::Error| Error::Validation(e.to_string());
    let mut ab = csv::Writer::from_path(ctx.path("ablation.csv")).map_err(csv_err)?;
    let mut re = csv::Writer::from_path(ctx.path("realism.csv")).map_err(csv_err)?;
    for (name, info, r) in &loaded {
        ab.serialize(AblationRow {
            run: name.clone(),
            run_id: info.run_id.clone(),
            generator: info.generator.name().into(),
            ego: info.ego.name().into(),
            episodes: r.n_episodes,
            success: r.rates.success,
            crash: r.rates.crash,
            offroad: r.rates.offroad,
            timeout: r.rates.timeout,
        })
        .map_err(csv_err)?;
        re.serialize(RealismRow {
            run: name.clone(),
            run_id: info.run_id.clone(),
            generator: info.generator.name().into(),
            ego: info.ego.name().into(),
            yaw_wd: r.realism.yaw,
            acc_wd: r.realism.acc,
            road_wd: r.realism.road,
            realism: r.realism.mean,
            collision_velocity: r.collision.mean_vel,
            head_on: r.collision.head_on,
            severe_head_on: r.collision.severe_head_on,
            crashes: r.collision.n_crashes,
        })
        .map_err(csv_err)?;
    }
    ab.flush().map_err(|e| Error::io(ctx.path("ablation.csv"), e))?;
    re.flush().map_err(|e| Error::io(ctx.path("realism.csv"), e))?;
    let reports: Vec<&MetricsReport> = loaded.iter().map(|(_, _, r)| r).collect();
    write_json(&ctx.path("summary.json"), &reports)?;
    ctx.finish(m)
}
