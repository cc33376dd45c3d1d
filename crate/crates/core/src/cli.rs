use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use dualnav::agentcore::{write_trajectories_jsonl, CostModel};
use dualnav::harness::{
    ablate, anchor_configs, estimate_intelligence, evaluate, read_points_csv, write_ablation_csv, write_report_csv,
    AblationRow, Agent, FastSystem, Planner, RunLimits, SlowSystem,
};
use dualnav::switch::{label_switch_data, read_switch_jsonl, train_gate, write_switch_jsonl, GateOptions, GateParams, LabelOptions};
use dualnav::system1::{
    oracle_demos, read_demos_jsonl, train_offline, write_demos_jsonl, Architecture, DemoOptions, FastPolicy,
    NegativeStrategy, Objective, ScorerParams, TrainOptions,
};
use dualnav::system2::{train_online, write_experiences_jsonl, OnlineOptions, OnlinePolicyParams, PlannerConfig};
use dualnav::webenv::{generate_environment, read_tasks_jsonl, sample_tasks, write_tasks_jsonl, DifficultyLaw, EnvSpec, Environment};

#[derive(Parser)]
#[command(name = "dualnav", version, about = "Synthetic web navigation with a fast/slow dual-system agent")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random site.
    GenEnv {
        #[arg(long)]
        pages: usize,
        #[arg(long, default_value_t = 3.0)]
        degree: f64,
        #[arg(long, default_value_t = 200)]
        vocab: u32,
        #[arg(long, default_value_t = 0.0)]
        drift: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample tasks with geometric difficulty.
    GenTasks {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long = "geom-p", default_value_t = 0.25)]
        geom_p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Oracle demonstrations with sampled negatives.
    GenDemos {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, default_value_t = 4)]
        negatives: usize,
        #[arg(long, value_enum, default_value_t = Strategy::Random)]
        strategy: Strategy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the fast reranker offline.
    TrainS1 {
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long)]
        demos: PathBuf,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Sft)]
        objective: ObjectiveArg,
        #[arg(long, value_enum, default_value_t = Arch::Cross)]
        arch: Arch,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the planner's prior online against the advantage oracle.
    TrainS2 {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, default_value_t = 30)]
        rounds: usize,
        /// KL coefficient.
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label states with the system that should act there.
    LabelSwitch {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        s1: PathBuf,
        #[arg(long, default_value_t = 5000)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the switch gate.
    TrainSwitch {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 500)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the agent on a task file; writes report, trajectories and experiences.
    Run(RunArgs),
    /// Like run, but writes only the report.
    Eval(RunArgs),
    /// Evaluate rows of removed components.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Choose fast and slow anchor configurations.
    Anchor {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Complexity-weighted performance over generated sites.
    Intel {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        envs: PathBuf,
        #[arg(long = "tasks-per-env", default_value_t = 20)]
        tasks_per_env: usize,
        #[arg(long = "geom-p", default_value_t = 0.25)]
        geom_p: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Random,
    Semantic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Sft,
    Wepo,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arch {
    Bi,
    Cross,
}

/// Shared agent and run options. Every flag overrides the same field of
/// the `--config` file.
#[derive(Args, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    s1: Option<PathBuf>,
    /// Planner configuration (JSON).
    #[arg(long = "s2-config")]
    s2_config: Option<PathBuf>,
    /// Trained online policy used as the planner's prior.
    #[arg(long = "s2-params")]
    s2_params: Option<PathBuf>,
    #[arg(long)]
    gate: Option<PathBuf>,
    /// Comma-separated `key=value` run limits, e.g. `max_steps=30,epochs=2`.
    #[arg(long)]
    limits: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    memory: Option<bool>,
    #[arg(long = "no-s1")]
    no_s1: bool,
    #[arg(long = "no-s2")]
    no_s2: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Run configuration file.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    env: Option<PathBuf>,
    tasks: Option<PathBuf>,
    s1: Option<PathBuf>,
    s2_config: Option<PathBuf>,
    s2_params: Option<PathBuf>,
    gate: Option<PathBuf>,
    limits: Option<RunLimits>,
    cost: Option<CostModel>,
    seed: Option<u64>,
    jobs: Option<usize>,
    memory: Option<bool>,
    no_s1: bool,
    no_s2: bool,
    out: Option<PathBuf>,
}

/// Planner settings file: the search configuration plus the prior.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct S2Config {
    #[serde(flatten)]
    planner: PlannerConfig,
    /// "label-match" or "none"; ignored when trained params are given.
    prior: Option<String>,
    recall: Option<usize>,
    working_memory: Option<usize>,
}

struct Resolved {
    agent: Agent,
    env: Option<Environment>,
    tasks: Option<PathBuf>,
    limits: RunLimits,
    jobs: usize,
    out: Option<PathBuf>,
}

fn parse_limits(base: RunLimits, spec: &str) -> Result<RunLimits> {
    let mut v = serde_json::to_value(base)?;
    for pair in spec.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, val) = pair.split_once('=').with_context(|| format!("limit `{pair}` is not key=value"))?;
        let k = k.trim().replace('-', "_");
        if v.get(&k).is_none() {
            bail!("unknown limit `{k}`");
        }
        let n: u64 = val.trim().parse().with_context(|| format!("limit `{k}` needs an integer"))?;
        v[&k] = n.into();
    }
    Ok(serde_json::from_value(v)?)
}

fn resolve(args: RunArgs) -> Result<Resolved> {
    let cfg: RunConfig = match &args.config {
        Some(p) => serde_json::from_reader(BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?))
            .with_context(|| format!("parsing {}", p.display()))?,
        None => RunConfig::default(),
    };
    let env_path = args.env.or(cfg.env);
    let env = env_path
        .as_ref()
        .map(|p| Environment::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let mut limits = cfg.limits.unwrap_or_default();
    if let Some(spec) = &args.limits {
        limits = parse_limits(limits, spec)?;
    }
    if let Some(seed) = args.seed.or(cfg.seed) {
        limits.seed = seed;
    }
    let no_s1 = args.no_s1 || cfg.no_s1;
    let no_s2 = args.no_s2 || cfg.no_s2;

    let s1: Option<Arc<dyn FastSystem>> = match (args.s1.or(cfg.s1), no_s1) {
        (Some(p), false) => Some(Arc::new(FastPolicy::new(
            ScorerParams::load(&p).with_context(|| format!("loading {}", p.display()))?,
        ))),
        _ => None,
    };
    let s2cfg: S2Config = match args.s2_config.or(cfg.s2_config) {
        Some(p) => serde_json::from_reader(BufReader::new(File::open(&p).with_context(|| format!("opening {}", p.display()))?))?,
        None => S2Config::default(),
    };
    let prior = match args.s2_params.or(cfg.s2_params) {
        Some(p) => Some(OnlinePolicyParams::load(&p).with_context(|| format!("loading {}", p.display()))?),
        None => match s2cfg.prior.as_deref().unwrap_or("label-match") {
            "label-match" => Some(OnlinePolicyParams::label_match(dualnav::agentcore::DEFAULT_DIM, 1.0)),
            "none" => None,
            other => bail!("unknown prior `{other}`"),
        },
    };
    let s2: Option<Arc<dyn SlowSystem>> = (!no_s2).then(|| {
        Arc::new(Planner {
            config: s2cfg.planner,
            prior,
        }) as Arc<dyn SlowSystem>
    });
    let gate = match args.gate.or(cfg.gate) {
        Some(p) => GateParams::load(&p).with_context(|| format!("loading {}", p.display()))?,
        None => GateParams::default(),
    };
    let mut agent = Agent {
        s1,
        s2,
        gate,
        memory: args.memory.or(cfg.memory).unwrap_or(true),
        cost: cfg.cost.unwrap_or_default(),
        ..Agent::new(match (no_s1, no_s2) {
            (true, _) => "s2-only",
            (_, true) => "s1-only",
            _ => "dual",
        })
    };
    if let Some(m) = s2cfg.recall {
        agent.recall = m;
    }
    if let Some(k) = s2cfg.working_memory {
        agent.working_k = k;
    }
    Ok(Resolved {
        agent,
        env,
        tasks: args.tasks.or(cfg.tasks),
        limits,
        jobs: args.jobs.or(cfg.jobs).unwrap_or(1),
        out: args.out.or(cfg.out),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.with_context(|| format!("--{flag} is required (flag or config file)"))
}

fn run_command(args: RunArgs, full: bool) -> Result<()> {
    let r = resolve(args)?;
    let env = need(r.env, "env")?;
    let tasks = read_tasks_jsonl(need(r.tasks, "tasks")?)?;
    let out = need(r.out, "out")?;
    fs::create_dir_all(&out)?;
    let run = evaluate(&r.agent, &env, &tasks, &r.limits, Vec::new(), r.jobs)?;
    write_report_csv(create(&out.join("report.csv"))?, &run.report)?;
    if full {
        write_trajectories_jsonl(create(&out.join("trajectories.jsonl"))?, &run.trajectories)?;
        write_experiences_jsonl(create(&out.join("experiences.jsonl"))?, &run.pool)?;
    }
    println!(
        "{}: success {:.4} mean tokens {:.2} s2 step fraction {:.4} over {} episodes",
        run.report.config_id,
        run.report.success_rate,
        run.report.mean_tokens,
        run.report.s2_step_fraction,
        run.report.rows.len()
    );
    Ok(())
}

pub fn main_with(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenEnv {
            pages,
            degree,
            vocab,
            drift,
            seed,
            out,
        } => {
            let env = generate_environment(&EnvSpec {
                pages,
                mean_out_degree: degree,
                vocab,
                seed,
            })?
            .with_drift_rate(drift)?;
            env.save(&out)?;
            println!("{} pages, {} links", env.page_count(), env.edge_count());
        }
        Command::GenTasks {
            env,
            n,
            geom_p,
            seed,
            out,
        } => {
            let env = Environment::load(&env)?;
            let tasks = sample_tasks(&env, n, &DifficultyLaw::Geometric { p: geom_p }, seed)?;
            write_tasks_jsonl(&out, &tasks)?;
        }
        Command::GenDemos {
            env,
            tasks,
            negatives,
            strategy,
            seed,
            out,
        } => {
            let env = Environment::load(&env)?;
            let tasks = read_tasks_jsonl(&tasks)?;
            let demos = oracle_demos(
                &env,
                &tasks,
                &DemoOptions {
                    negatives,
                    strategy: match strategy {
                        Strategy::Random => NegativeStrategy::Random,
                        Strategy::Semantic => NegativeStrategy::Semantic,
                    },
                    seed,
                    ..Default::default()
                },
            )?;
            write_demos_jsonl(&out, &demos)?;
            println!("{} demonstration steps", demos.items.len());
        }
        Command::TrainS1 {
            env: _,
            demos,
            objective,
            arch,
            epochs,
            lr,
            seed,
            out,
        } => {
            let demos = read_demos_jsonl(&demos)?;
            let arch = match arch {
                Arch::Bi => Architecture::BiEncoder,
                Arch::Cross => Architecture::CrossEncoder,
            };
            let init = ScorerParams::init(arch, dualnav::agentcore::DEFAULT_DIM, ScorerParams::default_width(arch), seed);
            let res = train_offline(
                &init,
                &demos,
                &TrainOptions {
                    objective: match objective {
                        ObjectiveArg::Sft => Objective::Sft,
                        ObjectiveArg::Wepo => Objective::Wepo,
                    },
                    learning_rate: lr,
                    epochs,
                    seed,
                    ..Default::default()
                },
            )?;
            res.params.save(&out)?;
            if let Some(l) = res.loss_curve.last() {
                println!("final loss {l:.6}");
            }
        }
        Command::TrainS2 {
            env,
            tasks,
            rounds,
            theta,
            seed,
            out,
        } => {
            let env = Environment::load(&env)?;
            let tasks = read_tasks_jsonl(&tasks)?;
            let init = OnlinePolicyParams::label_match(dualnav::agentcore::DEFAULT_DIM, theta);
            let res = train_online(
                &init,
                &env,
                &tasks,
                &OnlineOptions {
                    rounds,
                    kl_coef: theta,
                    seed,
                    ..Default::default()
                },
            )?;
            res.params.save(&out)?;
            if let Some(s) = res.success_curve.last() {
                println!("final round success {s:.4}");
            }
        }
        Command::LabelSwitch {
            env,
            tasks,
            s1,
            budget,
            seed,
            out,
        } => {
            let env = Environment::load(&env)?;
            let tasks = read_tasks_jsonl(&tasks)?;
            let s1 = FastPolicy::new(ScorerParams::load(&s1)?);
            let data = label_switch_data(
                &env,
                &tasks,
                &s1,
                &LabelOptions {
                    budget,
                    seed,
                    ..Default::default()
                },
            )?;
            write_switch_jsonl(create(&out)?, &data)?;
            println!("{} labeled states", data.len());
        }
        Command::TrainSwitch {
            data,
            iterations,
            seed,
            out,
        } => {
            let data = read_switch_jsonl(BufReader::new(File::open(&data)?))?;
            let res = train_gate(
                &GateParams::default(),
                &data,
                &GateOptions {
                    iterations,
                    seed,
                    ..Default::default()
                },
            )?;
            res.gate.save(&out)?;
            if let Some(a) = res.accuracy_curve.last() {
                println!("training accuracy {a:.4}");
            }
        }
        Command::Run(args) => run_command(args, true)?,
        Command::Eval(args) => run_command(args, false)?,
        Command::Ablate { run, matrix } => {
            let rows: Vec<AblationRow> = serde_json::from_reader(BufReader::new(File::open(&matrix)?))?;
            let r = resolve(run)?;
            let env = need(r.env, "env")?;
            let tasks = read_tasks_jsonl(need(r.tasks, "tasks")?)?;
            let reports = ablate(&r.agent, &rows, &env, &tasks, &r.limits, r.jobs)?;
            match r.out {
                Some(out) => {
                    fs::create_dir_all(&out)?;
                    write_ablation_csv(create(&out.join("ablation.csv"))?, &reports)?;
                }
                None => write_ablation_csv(std::io::stdout().lock(), &reports)?,
            }
        }
        Command::Anchor { points, out } => {
            let points = read_points_csv(File::open(&points)?)?;
            let anchors = anchor_configs(&points)?;
            let json = serde_json::to_string_pretty(&anchors)?;
            match out {
                Some(out) => {
                    let mut w = create(&out)?;
                    writeln!(w, "{json}")?;
                }
                None => println!("{json}"),
            }
        }
        Command::Intel {
            run,
            envs,
            tasks_per_env,
            geom_p,
        } => {
            let specs: Vec<EnvSpec> = serde_json::from_reader(BufReader::new(File::open(&envs)?))?;
            let r = resolve(run)?;
            let est = estimate_intelligence(
                &r.agent,
                &specs,
                tasks_per_env,
                &DifficultyLaw::Geometric { p: geom_p },
                r.agent.cost.discount,
                &r.limits,
            )?;
            let json = serde_json::to_string_pretty(&est)?;
            match r.out {
                Some(out) => {
                    let mut w = create(&out)?;
                    writeln!(w, "{json}")?;
                }
                None => println!("{json}"),
            }
        }
    }
    Ok(())
}
