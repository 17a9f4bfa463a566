use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lateral_core::adjudicator::{load_predictions, metrics_csv, score_run};
use lateral_core::dataset::{derive_groups, load_split_with, LoadOptions, SplitRole, Subtask};
use lateral_core::orchestrator::driver::{
    build_embedder, build_gateway, configured_subtasks, generate_reasoning, load_datasets, load_results,
    plan_with_overrides, render_run, run_all, split_path, GatewayOverrides,
};
use lateral_core::orchestrator::{emit_report, ExecuteOptions, ExperimentConfig, OrchestratorError, RunSpec, Workspace};
use lateral_core::reasoning::{import_reasoning, ReasoningStore};
use lateral_core::retrieval::{embed_questions, embedding_inputs, EmbeddingStore};

#[derive(Parser)]
#[command(name = "lateral", version, about = "Evaluate prompting strategies on lateral-thinking puzzles")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, default_value = "lateral.toml")]
    config: PathBuf,
    /// Root of every generated artifact.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Completion cache location (default: <out-dir>/cache).
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct GatewayFlags {
    /// Execute through this provider profile instead of the configured one.
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    rpm: Option<u32>,
}

impl GatewayFlags {
    fn overrides(&self) -> GatewayOverrides {
        GatewayOverrides {
            provider: self.provider.clone(),
            max_in_flight: self.max_in_flight,
            rpm: self.rpm,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSON-Lines split and copy it into the configured data directory.
    Ingest {
        #[arg(long)]
        subtask: Subtask,
        #[arg(long)]
        role: SplitRole,
        #[arg(long)]
        input: PathBuf,
        /// Derive missing group ids by stripping variant suffixes from ids.
        #[arg(long)]
        group_from_id_suffix: bool,
    },
    /// Embed a split and write its embedding store.
    Embed {
        #[arg(long)]
        subtask: Subtask,
        #[arg(long)]
        role: SplitRole,
        /// Embedder name from [embedders] (default: [retrieval] embedder).
        #[arg(long)]
        provider: Option<String>,
        /// Store path (default: <out-dir>/embeddings/<subtask>_<role>.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate reasoning for every train instance under a generator tag.
    GenReasoning {
        #[arg(long)]
        subtask: Subtask,
        #[arg(long)]
        generator: String,
        #[arg(long)]
        provider: String,
        #[arg(long)]
        max_in_flight: Option<usize>,
        #[arg(long)]
        rpm: Option<u32>,
    },
    /// Import externally produced reasoning (`{instance_id, reasoning_text}` lines).
    ImportReasoning {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        generator: String,
        #[arg(long)]
        subtask: Subtask,
    },
    /// Execute (or resume) every planned run, then write the reports.
    Run {
        #[command(flatten)]
        gateway: GatewayFlags,
        /// Stop after this many new instances per run.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Re-score a finished run directory.
    Score { run_dir: PathBuf },
    /// Rebuild the reports from every finished run.
    Report,
    /// Print the prompts planned runs would send.
    Render {
        /// Render without contacting any provider.
        #[arg(long)]
        dry_run: bool,
        /// Only this run.
        #[arg(long)]
        run_id: Option<String>,
        /// At most this many prompts per run.
        #[arg(long)]
        limit: Option<usize>,
        #[command(flatten)]
        gateway: GatewayFlags,
    },
}

fn workspace(cli: &Cli) -> Workspace {
    let ws = Workspace::new(&cli.out_dir);
    match &cli.cache_dir {
        Some(dir) => ws.with_cache_dir(dir),
        None => ws,
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn ingest(config: &ExperimentConfig, subtask: Subtask, role: SplitRole, input: &Path, suffix: bool) -> Result<()> {
    let options = LoadOptions {
        group_from_id_suffix: suffix || config.data.group_from_id_suffix,
    };
    let split = load_split_with(input, subtask, role, options)?;
    let groups = derive_groups(&split)?;
    let complete = groups.iter().filter(|g| g.is_complete()).count();
    let target = split_path(config, subtask, role);
    if let Some(dir) = target.parent() {
        std::fs::create_dir_all(dir)?;
    }
    split.save(&target)?;
    println!(
        "{subtask} {role}: {} instances, {} groups ({complete} complete) -> {}",
        split.len(),
        groups.len(),
        target.display()
    );
    Ok(())
}

fn embed(
    config: &ExperimentConfig,
    ws: &Workspace,
    subtask: Subtask,
    role: SplitRole,
    provider: Option<&str>,
    out: Option<&Path>,
) -> Result<()> {
    let name = provider
        .or(config.retrieval.embedder.as_deref())
        .context("no embedder given and none configured under [retrieval]")?;
    let data = load_datasets(config, &[subtask].into())?;
    let split = data.split(subtask, role)?;
    let embedder = build_embedder(config, name)?;
    let items = embedding_inputs(split, config.retrieval.embed_input);
    let store = EmbeddingStore::from_records(embed_questions(embedder.as_ref(), &items)?)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| ws.embeddings_path(subtask, role));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    store.save(&path)?;
    println!("{} vectors of dim {} ({}) -> {}", store.len(), store.dim(), store.provider_tag(), path.display());
    Ok(())
}

fn score(config: &ExperimentConfig, run_dir: &Path) -> Result<()> {
    let spec_text = std::fs::read_to_string(run_dir.join("spec.json"))
        .with_context(|| format!("{} is not a run directory", run_dir.display()))?;
    let spec: RunSpec = serde_json::from_str(&spec_text).context("parsing spec.json")?;
    let data = load_datasets(config, &[spec.subtask].into())?;
    let test = data.split(spec.subtask, SplitRole::Test)?;
    let predictions = load_predictions(&run_dir.join("predictions.jsonl"))?;
    let metrics = score_run(&predictions, test, &derive_groups(test)?)?;
    print!("{}", metrics_csv(&spec.strategy.label(), &metrics));
    Ok(())
}

fn render(config: &ExperimentConfig, ws: &Workspace, run_id: Option<&str>, limit: Option<usize>, gateway: &GatewayFlags) -> Result<()> {
    let data = load_datasets(config, &configured_subtasks(config))?;
    let specs = plan_with_overrides(config, &data, &gateway.overrides())?;
    let mut shown = 0;
    for spec in specs.iter().filter(|s| run_id.is_none_or(|id| s.run_id == id)) {
        let prompts = render_run(config, ws, &data, spec)?;
        for prompt in prompts.iter().take(limit.unwrap_or(usize::MAX)) {
            println!("=== {} {} | {} ===", spec.run_id, spec.strategy.label(), prompt.target_id);
            println!("{}\n", prompt.text);
        }
        shown += 1;
    }
    if let Some(id) = run_id {
        if shown == 0 {
            bail!("no planned run has id {id}");
        }
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    let config = load_config(&cli.config)?;
    let ws = workspace(cli);
    match &cli.command {
        Command::Ingest {
            subtask,
            role,
            input,
            group_from_id_suffix,
        } => ingest(&config, *subtask, *role, input, *group_from_id_suffix),
        Command::Embed {
            subtask,
            role,
            provider,
            out,
        } => embed(&config, &ws, *subtask, *role, provider.as_deref(), out.as_deref()),
        Command::GenReasoning {
            subtask,
            generator,
            provider,
            max_in_flight,
            rpm,
        } => {
            let data = load_datasets(&config, &[*subtask].into())?;
            let overrides = GatewayOverrides {
                provider: None,
                max_in_flight: *max_in_flight,
                rpm: *rpm,
            };
            let gateway = build_gateway(&config, &ws, provider, &overrides, &data)?;
            let s = generate_reasoning(&config, &ws, &data, *subtask, generator, provider, &gateway)?;
            println!(
                "{generator}: {} generated, {} failed, {} already present -> {}",
                s.generated,
                s.failed,
                s.skipped,
                ws.reasoning_path(*subtask).display()
            );
            Ok(())
        }
        Command::ImportReasoning {
            file,
            generator,
            subtask,
        } => {
            let path = ws.reasoning_path(*subtask);
            let mut store = ReasoningStore::load_or_default(&path)?;
            let s = import_reasoning(&mut store, file, generator, config.reasoning.max_chars)?;
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            store.save(&path)?;
            println!("{generator}: {} imported, {} rejected -> {}", s.generated, s.failed, path.display());
            Ok(())
        }
        Command::Run { gateway, limit } => {
            let options = ExecuteOptions { limit: *limit };
            let results = run_all(&config, &ws, &gateway.overrides(), &options)?;
            for r in &results {
                let spec = r.spec();
                println!(
                    "{} {:<8} {:<40} Overall {}",
                    r.run_id,
                    spec.subtask,
                    r.manifest.label,
                    r.metrics.rendered()[5]
                );
            }
            println!("reports in {}", ws.reports_dir().display());
            Ok(())
        }
        Command::Score { run_dir } => score(&config, run_dir),
        Command::Report => {
            let results = load_results(&ws)?;
            for path in emit_report(&results, &ws.reports_dir())? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Render {
            dry_run,
            run_id,
            limit,
            gateway,
        } => {
            if !dry_run {
                bail!("render only previews prompts; pass --dry-run");
            }
            render(&config, &ws, run_id.as_deref(), *limit, gateway)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(OrchestratorError::Interrupted { completed, total }) = e.downcast_ref() {
                eprintln!("interrupted: {completed}/{total} instances done; run again to resume");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::FAILURE
        }
    }
}
