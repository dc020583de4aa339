use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use simulacra_app::provider::{gateway, ProviderChoice};
use simulacra_app::runs::{Pipeline, RunOutcome, RunRequest, SelfReportResults};
use simulacra_app::server::{recover, router, AppState};
use simulacra_core::conformity::Condition;
use simulacra_core::simulacrum::Method;
use simulacra_core::store::{read_json, write_json, ArtifactKind, ProjectStore, RunKind, RunState};
use simulacra_core::story::ReviewMode;

#[derive(Parser)]
#[command(name = "simulacra", version, about = "Build, run and evaluate virtual character simulacra")]
struct Cli {
    /// Project directory holding characters, queues and reports.
    #[arg(long, global = true, env = "SIMULACRA_PROJECT", default_value = ".")]
    project: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "mock")]
    provider: ProviderChoice,
    /// Remote provider settings (TOML); defaults to <project>/provider.toml.
    #[arg(long, global = true)]
    provider_config: Option<PathBuf>,
    /// Mock fixture scenario, for scripted runs.
    #[arg(long, global = true, hide = true)]
    scenario: Option<String>,
    /// Also write the command's result as JSON to this file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Interactive,
    Queued,
    AutoApprove,
}

impl From<ModeArg> for ReviewMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Interactive => ReviewMode::Interactive,
            ModeArg::Queued => ReviewMode::Queued,
            ModeArg::AutoApprove => ReviewMode::AutoApprove,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Observer,
    SelfReport,
    Conformity,
}

#[derive(Subcommand)]
enum Command {
    /// Draft, rank and recheck character profiles.
    ForgeProfile {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        drafts: usize,
        #[arg(long, default_value_t = 1)]
        keep: usize,
        #[arg(long, value_enum, default_value = "auto-approve")]
        review_mode: ModeArg,
    },
    /// Write the biography and grow the life story.
    ForgeStory {
        #[arg(long)]
        character: String,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        iterations: usize,
        #[arg(long, value_enum, default_value = "auto-approve")]
        review_mode: ModeArg,
    },
    /// Turn the life story into long-term memory records.
    BuildMemory {
        #[arg(long)]
        character: String,
        #[command(flatten)]
        common: Common,
    },
    /// Ask the questionnaire and score the answers.
    RunSelfReport {
        #[arg(long)]
        character: String,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "macm")]
        method: Method,
        /// Independent runs to average.
        #[arg(long, default_value_t = 1)]
        runs: usize,
    },
    /// Collect situational answers into the judging queue.
    RunObserverExport {
        /// Repeatable; all characters when omitted.
        #[arg(long)]
        character: Vec<String>,
        #[command(flatten)]
        common: Common,
        /// Repeatable; every method when omitted.
        #[arg(long)]
        method: Vec<Method>,
    },
    /// Run the line-judgement experiment.
    RunConformity {
        /// Repeatable; all characters when omitted.
        #[arg(long)]
        character: Vec<String>,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "macm")]
        method: Method,
        #[arg(long, default_value = "group")]
        condition: Condition,
        /// Ask each participant the follow-up question afterwards.
        #[arg(long)]
        interview: bool,
    },
    /// Continue a parked run after its review was decided.
    Resume { run_id: String },
    /// Serve the review and judging API with its web UI.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Print a stored report.
    Report {
        #[arg(value_enum)]
        kind: ReportKind,
        #[arg(long)]
        character: Option<String>,
        #[arg(long, default_value = "macm")]
        method: Method,
        #[arg(long, default_value = "group")]
        condition: Condition,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let store = ProjectStore::open(&cli.project).with_context(|| format!("opening project {}", cli.project.display()))?;
    let gw = gateway(&cli.project, cli.provider, cli.provider_config.as_deref())?;
    let pipeline = Pipeline::new(store, gw);
    let base = RunRequest {
        scenario: cli.scenario.clone(),
        ..RunRequest::default()
    };

    let req = match cli.command {
        Command::ForgeProfile {
            common,
            drafts,
            keep,
            review_mode,
        } => RunRequest {
            kind: RunKind::ForgeProfile,
            seed: common.seed,
            drafts,
            keep,
            review_mode: review_mode.into(),
            ..base
        },
        Command::ForgeStory {
            character,
            common,
            iterations,
            review_mode,
        } => RunRequest {
            kind: RunKind::ForgeStory,
            characters: vec![character],
            seed: common.seed,
            iterations,
            review_mode: review_mode.into(),
            ..base
        },
        Command::BuildMemory { character, common } => RunRequest {
            kind: RunKind::BuildMemory,
            characters: vec![character],
            seed: common.seed,
            ..base
        },
        Command::RunSelfReport {
            character,
            common,
            method,
            runs,
        } => RunRequest {
            kind: RunKind::SelfReport,
            characters: vec![character],
            seed: common.seed,
            method,
            runs,
            ..base
        },
        Command::RunObserverExport { character, common, method } => RunRequest {
            kind: RunKind::ObserverExport,
            characters: character,
            seed: common.seed,
            methods: method,
            ..base
        },
        Command::RunConformity {
            character,
            common,
            method,
            condition,
            interview,
        } => RunRequest {
            kind: RunKind::Conformity,
            characters: character,
            seed: common.seed,
            method,
            condition,
            interview,
            ..base
        },
        Command::Resume { run_id } => {
            let mut run = pipeline.store.load_run(&run_id)?;
            if run.state != RunState::Parked {
                bail!("run {run_id} is {:?}, not parked", run.state);
            }
            let req = pipeline.load_request(&run_id)?;
            let outcome = pipeline.execute(&mut run, &req)?;
            return finish(&pipeline, &req, &run.id, outcome, cli.out.as_deref());
        }
        Command::Serve { addr } => return serve(pipeline, addr),
        Command::Report {
            kind,
            character,
            method,
            condition,
        } => return report(&pipeline, kind, character, method, condition, cli.out.as_deref()),
    };

    let mut run = pipeline.start(&req)?;
    let outcome = pipeline.execute(&mut run, &req)?;
    finish(&pipeline, &req, &run.id, outcome, cli.out.as_deref())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CommandResult {
    run_id: String,
    state: RunState,
    summary: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pending_review: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<serde_json::Value>,
}

fn finish(pipeline: &Pipeline, req: &RunRequest, run_id: &str, outcome: RunOutcome, out: Option<&Path>) -> Result<()> {
    let (state, summary, pending_review) = match outcome {
        RunOutcome::Completed(s) => (RunState::Completed, s, None),
        RunOutcome::Parked { task_id, iterations_done } => (
            RunState::Parked,
            format!("parked after {iterations_done} iteration(s); decide review {task_id}, then run `simulacra resume {run_id}`"),
            Some(task_id),
        ),
    };
    println!("{run_id}: {summary}");
    if let Some(path) = out {
        let result = if state == RunState::Completed { primary_result(pipeline, req)? } else { None };
        write_json(
            path,
            &CommandResult {
                run_id: run_id.to_string(),
                state,
                summary,
                pending_review,
                result,
            },
        )?;
    }
    Ok(())
}

/// The artifact a completed run produced, as JSON.
fn primary_result(pipeline: &Pipeline, req: &RunRequest) -> Result<Option<serde_json::Value>> {
    let store = &pipeline.store;
    let one = || req.characters.first().cloned().unwrap_or_default();
    let artifact = |kind| -> Result<Option<serde_json::Value>> {
        Ok(store.load_artifact::<serde_json::Value>(&one(), kind)?.map(|a| a.data))
    };
    match req.kind {
        RunKind::ForgeProfile => Ok(Some(serde_json::to_value(store.characters()?)?)),
        RunKind::ForgeStory => artifact(ArtifactKind::Story),
        RunKind::BuildMemory => artifact(ArtifactKind::Memory),
        RunKind::SelfReport => artifact(ArtifactKind::SelfReport),
        RunKind::ObserverExport => Ok(Some(serde_json::to_value(store.cases()?.len())?)),
        RunKind::Conformity => Ok(read_json(&pipeline.conformity_report_path(req.method, req.condition))?),
    }
}

fn report(
    pipeline: &Pipeline,
    kind: ReportKind,
    character: Option<String>,
    method: Method,
    condition: Condition,
    out: Option<&Path>,
) -> Result<()> {
    let value: serde_json::Value = match kind {
        ReportKind::Observer => {
            let Some(r) = pipeline.store.observer_report()? else {
                bail!("no observer report yet; judging has not completed any case");
            };
            print!("{}", r.report.table());
            println!("{} complete case(s), {} pending", r.complete_cases, r.pending_cases);
            serde_json::to_value(r)?
        }
        ReportKind::SelfReport => {
            let Some(slug) = character else { bail!("--character is required for self-report") };
            let r = pipeline.store.require_artifact::<SelfReportResults>(&slug, ArtifactKind::SelfReport)?.data;
            println!("Method | Cloze | SC | MC | Sum");
            for (m, s) in &r.methods {
                let [a, b, c, d] = s.average.columns();
                println!("{} | {a} | {b} | {c} | {d}", m.label());
            }
            serde_json::to_value(r)?
        }
        ReportKind::Conformity => {
            let path = pipeline.conformity_report_path(method, condition);
            let Some(r) = read_json::<simulacra_core::conformity::ExperimentReport>(&path)? else {
                bail!("no conformity report at {}", path.display());
            };
            print!("{}", r.table());
            serde_json::to_value(r)?
        }
    };
    if let Some(path) = out {
        write_json(path, &value)?;
    }
    Ok(())
}

fn serve(pipeline: Pipeline, addr: SocketAddr) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        eprintln!("serving on http://{}", listener.local_addr()?);
        let state = AppState::new(pipeline);
        for id in recover(&state)? {
            eprintln!("resuming run {id}");
        }
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
