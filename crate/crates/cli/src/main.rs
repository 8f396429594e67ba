//! `seal` command-line tool: scenario generation, model training, ego training,
//! evaluation and reporting. Every subcommand writes into `--out` with a manifest.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use seal_core::harness::manifest::{RunManifest, MANIFEST_FILE};
use seal_core::harness::perturb::GeneratorPreset;
use seal_core::harness::pipeline::{self, EgoKind, ModelPaths, ScenarioSource, Split, StageContext};
use seal_core::harness::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "seal", version, about = "Adversarial scenario perturbation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Output directory; receives the artifacts and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Run configuration (TOML). Defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct Source {
    /// Scenario manifest (one path per line). Defaults to the built-in synthetic suite.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Part of the scenario set to use: all, train (80%) or held-out (20%).
    #[arg(long)]
    split: Option<Split>,
}

#[derive(Args, Debug, Clone)]
struct Generator {
    /// Generator preset, e.g. seal, cat-heuristic, no-adv or an ablation name.
    #[arg(long)]
    generator: Option<GeneratorPreset>,
    /// Trained scorer (file or train-scorer output directory).
    #[arg(long)]
    scorer: Option<PathBuf>,
    /// Skill library (file or build-skills output directory).
    #[arg(long)]
    skills: Option<PathBuf>,
    /// Number of perturbation iterations and history length.
    #[arg(long)]
    k: Option<usize>,
    /// Distance scale of the criticality scores (m).
    #[arg(long)]
    b: Option<f64>,
    /// Steps between skill switch-over and the anticipated risk step.
    #[arg(long)]
    offset: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic base scenarios.
    GenScenarios {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 2)]
        background: usize,
    },
    /// Run IDM demonstrations for skill learning.
    CollectDemos {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
    },
    /// Segment, label and cluster demonstrations into a skill library.
    BuildSkills {
        #[command(flatten)]
        common: Common,
        /// Output directory of collect-demos.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Score candidate sets with the simulation oracle.
    GenCorpus {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        b: Option<f64>,
    },
    /// Train the learned criticality scorer.
    TrainScorer {
        #[command(flatten)]
        common: Common,
        /// Corpus file or gen-corpus output directory.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the parameterized ego with a perturbation curriculum.
    TrainEgo {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        generator: Generator,
        /// Fix the perturbation probability at 0.9 instead of ramping it.
        #[arg(long)]
        no_curriculum: bool,
        /// Overrides the configured number of CEM generations.
        #[arg(long)]
        generations: Option<usize>,
    },
    /// Run the K-step perturb-and-simulate evaluation.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        generator: Generator,
        /// replay, idm or trainable.
        #[arg(long, default_value = "replay")]
        ego: EgoKind,
        /// Trained ego parameters (file or train-ego output directory).
        #[arg(long)]
        ego_params: Option<PathBuf>,
    },
    /// Collect evaluation runs into CSV tables.
    Report {
        #[command(flatten)]
        common: Common,
        /// Output directories of evaluate runs.
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
    },
    /// Re-run a stage from its manifest and compare the outputs.
    Rerun {
        /// manifest.json of the original run.
        #[arg(long)]
        manifest: PathBuf,
        /// Fresh output directory for the re-run.
        #[arg(long)]
        out: PathBuf,
    },
}

fn context(name: &str, common: &Common, args: &[String], edit: impl FnOnce(&mut RunConfig)) -> anyhow::Result<StageContext> {
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    edit(&mut config);
    config.validate()?;
    Ok(StageContext {
        out: common.out.clone(),
        config,
        config_path: common.config.clone(),
        command: name.into(),
        args: args.to_vec(),
    })
}

fn source(s: &Source, default: ScenarioSource) -> ScenarioSource {
    s.scenarios.clone().map(ScenarioSource::Manifest).unwrap_or(default)
}

fn apply_generator(c: &mut RunConfig, g: &Generator) {
    if let Some(p) = g.generator {
        c.generator = p;
    }
    if let Some(k) = g.k {
        c.k = k;
    }
    if let Some(b) = g.b {
        c.b = b;
    }
    if let Some(o) = g.offset {
        c.offset = o;
    }
}

fn models(g: &Generator) -> ModelPaths {
    ModelPaths {
        scorer: g.scorer.clone(),
        skills: g.skills.clone(),
    }
}

fn run(cli: Cli, args: &[String]) -> anyhow::Result<()> {
    match cli.command {
        Command::GenScenarios {
            common,
            count,
            background,
        } => {
            let ctx = context("gen-scenarios", &common, args, |_| {})?;
            pipeline::gen_scenarios(&ctx, count, background)?;
        }
        Command::CollectDemos { common, source: s } => {
            let ctx = context("collect-demos", &common, args, |_| {})?;
            let src = source(&s, ScenarioSource::TrainingSuite);
            pipeline::collect_demos(&ctx, &src, s.split.unwrap_or(Split::Train))?;
        }
        Command::BuildSkills {
            common,
            corpus,
            clusters,
            horizon,
        } => {
            let ctx = context("build-skills", &common, args, |c| {
                if let Some(n) = clusters {
                    c.clusters = n;
                }
                if let Some(h) = horizon {
                    c.horizon = h;
                }
            })?;
            pipeline::build_skills(&ctx, &corpus)?;
        }
        Command::GenCorpus { common, source: s, b } => {
            let ctx = context("gen-corpus", &common, args, |c| {
                if let Some(b) = b {
                    c.b = b;
                }
            })?;
            let src = source(&s, ScenarioSource::TrainingSuite);
            pipeline::gen_corpus(&ctx, &src, s.split.unwrap_or(Split::Train))?;
        }
        Command::TrainScorer { common, corpus, epochs } => {
            let ctx = context("train-scorer", &common, args, |c| {
                if let Some(e) = epochs {
                    c.scorer.epochs = e;
                }
            })?;
            pipeline::train_scorer_stage(&ctx, &corpus)?;
        }
        Command::TrainEgo {
            common,
            source: s,
            generator,
            no_curriculum,
            generations,
        } => {
            let ctx = context("train-ego", &common, args, |c| {
                apply_generator(c, &generator);
                if no_curriculum {
                    c.cem.curriculum = seal_core::harness::Curriculum::Fixed { p: 0.9 };
                }
                if let Some(n) = generations {
                    c.cem.generations = n;
                }
            })?;
            let src = source(&s, ScenarioSource::TrainingSuite);
            pipeline::train_ego_stage(&ctx, &src, s.split.unwrap_or(Split::Train), &models(&generator))?;
        }
        Command::Evaluate {
            common,
            source: s,
            generator,
            ego,
            ego_params,
        } => {
            let ctx = context("evaluate", &common, args, |c| apply_generator(c, &generator))?;
            let src = source(&s, ScenarioSource::EvaluationSuite);
            pipeline::evaluate_stage(
                &ctx,
                &src,
                s.split.unwrap_or(Split::All),
                ego,
                ego_params.as_deref(),
                &models(&generator),
            )?;
        }
        Command::Report { common, runs } => {
            let ctx = context("report", &common, args, |_| {})?;
            pipeline::report(&ctx, &runs)?;
        }
        Command::Rerun { manifest, out } => rerun(&manifest, &out)?,
    }
    Ok(())
}

/// Replaces the value of `--out` in a recorded argument list.
fn with_out(args: &[String], out: &Path) -> Vec<String> {
    let mut v = Vec::with_capacity(args.len());
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
            v.push("--out".into());
            v.push(out.to_string_lossy().into_owned());
        } else if a.starts_with("--out=") {
            v.push(format!("--out={}", out.display()));
        } else {
            v.push(a.clone());
        }
    }
    v
}

fn rerun(manifest: &Path, out: &Path) -> anyhow::Result<()> {
    let original = RunManifest::load(manifest)?;
    original.verify_inputs()?;
    let args = with_out(&original.args, out);
    let cli = Cli::try_parse_from(std::iter::once("seal".to_string()).chain(args.iter().cloned()))
        .context("recorded arguments no longer parse")?;
    if matches!(cli.command, Command::Rerun { .. }) {
        bail!("a rerun manifest cannot be rerun");
    }
    run(cli, &args)?;
    let fresh = RunManifest::load(&out.join(MANIFEST_FILE))?;
    if fresh.outputs != original.outputs {
        let differing: Vec<String> = original
            .outputs
            .iter()
            .filter(|d| !fresh.outputs.contains(d))
            .map(|d| d.path.display().to_string())
            .collect();
        bail!(seal_core::Error::Validation(format!(
            "outputs differ from the recorded run: {}",
            differing.join(", ")
        )));
    }
    println!("reproduced {} outputs", fresh.outputs.len());
    Ok(())
}

fn main() -> ExitCode {
    let raw: Vec<OsString> = std::env::args_os().collect();
    let cli = match Cli::try_parse_from(&raw) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let args: Vec<String> = raw.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
