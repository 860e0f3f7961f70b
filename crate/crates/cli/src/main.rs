use std::collections::BTreeMap;
use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mhte_core::bench::{
    build_session, default_identity, judge_fixture_eval, run_cell, run_matrix, synthetic_suite, CellKey, Grouping,
    MatrixSpec,
};
use mhte_core::planning::{generate_daily, parse_identity, Identity, ObjectiveTemplate, PlanBook};
use mhte_core::runtime::{PolicyKind, RuntimeConfig};
use mhte_core::suite::TaskSuite;
use mhte_core::task::TaskStatus;
use mhte_core::time::SimTime;

type Result<T> = std::result::Result<T, Box<dyn Error>>;

/// Multi-horizon task environment runner.
///
/// Budgets and cost constants can be overridden with MHTE_MAX_MINUTES,
/// MHTE_MAX_TOOL_CALLS, MHTE_CONTEXT_BUDGET, MHTE_COST_REPRIORITIZE,
/// MHTE_COST_RELOAD, MHTE_PROBE_STEPS, MHTE_MEMORY_K, MHTE_DEMO_K,
/// MHTE_DEMO_THRESHOLD, MHTE_CLOCK (standard|fast) and MHTE_FLAKY_PERIOD.
#[derive(Parser)]
#[command(name = "mhte", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one agent-day and write its report.
    Run(RunArgs),
    /// Benchmark matrices and the judge fixture.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
    /// Show generated plans.
    Plan {
        #[command(subcommand)]
        command: PlanCommand,
    },
}

#[derive(Args)]
struct SuiteArg {
    /// Task suite file; the shipped 46-task suite when omitted.
    #[arg(long)]
    suite: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    suite: SuiteArg,
    /// flat, cognitive_model, cognitive_tools, exp_learning or scripted.
    #[arg(long)]
    policy: PolicyKind,
    /// Load percentage: 25, 50, 75 or 100.
    #[arg(long, default_value_t = 100, conflicts_with = "app")]
    load: u32,
    /// Run every task of one application instead of a load sample.
    #[arg(long)]
    app: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for the day report; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run every policy, load and seed combination.
    Matrix(MatrixArgs),
    /// Evaluate the judge on the labelled fixture.
    JudgeFixture {
        /// Fixture file; the shipped one when omitted.
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
}

#[derive(Args)]
struct MatrixArgs {
    #[command(flatten)]
    suite: SuiteArg,
    #[arg(long, value_delimiter = ',', default_value = "flat,cognitive_model,cognitive_tools,exp_learning")]
    policies: Vec<PolicyKind>,
    #[arg(long, value_delimiter = ',', default_value = "25,50,75,100")]
    loads: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    /// Also run one session per application.
    #[arg(long)]
    per_app: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum PlanCommand {
    /// Print the monthly plan and one day's plan.
    Show {
        #[command(flatten)]
        suite: SuiteArg,
        /// Identity file; the shipped employee when omitted.
        #[arg(long)]
        identity: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        day: u64,
    },
}

fn load_suite(arg: &SuiteArg) -> Result<TaskSuite> {
    Ok(match &arg.suite {
        Some(p) => TaskSuite::load(p)?,
        None => synthetic_suite(),
    })
}

fn load_identity(path: Option<&Path>) -> Result<(Identity, Vec<ObjectiveTemplate>)> {
    Ok(match path {
        Some(p) => parse_identity(&std::fs::read_to_string(p)?)?,
        None => default_identity(),
    })
}

fn config_from_env(policy: PolicyKind) -> Result<RuntimeConfig> {
    let mut config = RuntimeConfig::new(policy);
    config.apply_env(|k| std::env::var(k).ok())?;
    Ok(config)
}

fn run(args: RunArgs) -> Result<()> {
    let suite = load_suite(&args.suite)?;
    let mut spec = MatrixSpec::new(vec![args.policy], vec![], vec![args.seed]);
    spec.config = config_from_env(args.policy)?;
    let grouping = match args.app {
        Some(app) => Grouping::App(app.into()),
        None => Grouping::Load(args.load),
    };
    let key = CellKey {
        policy: args.policy,
        grouping,
    };
    let report = run_cell(&suite, &spec, &key, args.seed);
    let text = report.render();
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(report.file_name());
            std::fs::write(&path, &text)?;
            println!("{}", path.display());
        }
        None => print!("{text}"),
    }
    if let Err(e) = &report.day {
        return Err(e.clone().into());
    }
    if report.warnings > 0 {
        eprintln!("warning: {} dependency edge(s) to unsampled tasks dropped", report.warnings);
    }
    Ok(())
}

fn matrix(args: MatrixArgs) -> Result<()> {
    let suite = load_suite(&args.suite)?;
    let mut spec = MatrixSpec::new(args.policies, args.loads, args.seeds);
    spec.per_app = args.per_app;
    spec.config = config_from_env(PolicyKind::FlatBaseline)?;
    let report = run_matrix(&suite, &spec)?;
    report.write(&args.out)?;
    print!("{}", report.render_table());
    let failures = report.failures();
    if failures > 0 {
        eprintln!("{failures} run(s) failed; see {}", args.out.join("runs.tsv").display());
    }
    Ok(())
}

fn plan_show(suite: &SuiteArg, identity: Option<&Path>, day: u64) -> Result<()> {
    let suite = load_suite(suite)?;
    let (identity, templates) = load_identity(identity)?;
    let session = build_session(&suite, &suite.tasks)?.session;
    let month = SimTime::at(day, 0, 0).month();
    let mut book = PlanBook::new();
    let monthly = book.generate_monthly(&identity, month, &templates)?;
    monthly.attach_backlog(&session.tasks);
    let statuses: BTreeMap<_, _> = session.tasks.iter().map(|t| (t.task_id.clone(), TaskStatus::new())).collect();
    let daily = generate_daily(monthly, day, &session.tasks, &session.graph, &statuses);
    print!("{}", monthly.render());
    println!();
    print!("{}", daily.render());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Bench { command } => match command {
            BenchCommand::Matrix(args) => matrix(args),
            BenchCommand::JudgeFixture { fixture } => judge_fixture_eval(fixture.as_deref())
                .map(|r| print!("{}", r.render()))
                .map_err(Into::into),
        },
        Command::Plan { command } => match command {
            PlanCommand::Show { suite, identity, day } => plan_show(&suite, identity.as_deref(), day),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
