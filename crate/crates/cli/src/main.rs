//! `edgesched`: dataset generation, training, evaluation, benchmarking and
//! one-off scheduling from the command line.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use edgesched::dataset::{generate, manifest_path, oracle_audit, read_dataset, write_dataset};
use edgesched::ga::GAConfig;
use edgesched::harness::{
    run_benchmark, run_scheduler, BenchConfig, BenchmarkRow, SchedulerKind,
};
use edgesched::metrics::{metrics_report, DEFAULT_EPSILON};
use edgesched::neural::{
    load_checkpoint, predict_batch, save_checkpoint, split_indices, train, TrainConfig,
};
use edgesched::{
    evaluate, EvaluationContext, ProblemInstance, Result, SchedError, TaskCatalog,
};

#[derive(Parser)]
#[command(
    name = "edgesched",
    version,
    about = "Deadline-aware task scheduling workbench",
    propagate_version = true
)]
struct Cli {
    /// Master RNG seed; fixed seeds give byte-identical outputs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Weight of the drop ratio in the objective.
    #[arg(long, global = true, default_value_t = 0.9)]
    lambda: f64,

    /// Time units per second of measured solver execution.
    #[arg(long, global = true, default_value_t = 1.0)]
    time_unit_scale: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GaArgs {
    /// Start from the reduced desk-scale GA budget.
    #[arg(long)]
    ga_desk_scale: bool,

    #[arg(long)]
    ga_population: Option<usize>,

    #[arg(long)]
    ga_generations: Option<usize>,

    #[arg(long)]
    ga_patience: Option<usize>,

    /// Offspring mutation probability.
    #[arg(long)]
    ga_mutation: Option<f64>,
}

impl GaArgs {
    fn config(&self) -> GAConfig {
        let mut cfg = if self.ga_desk_scale {
            GAConfig::desk_scale()
        } else {
            GAConfig::default()
        };
        if let Some(v) = self.ga_population {
            cfg.population_size = v;
        }
        if let Some(v) = self.ga_generations {
            cfg.generations = v;
        }
        if let Some(v) = self.ga_patience {
            cfg.patience = v;
        }
        if let Some(v) = self.ga_mutation {
            cfg.mutation_probability = v;
        }
        cfg
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 128)]
    embed_dim: usize,

    #[arg(long, default_value_t = 128)]
    hidden_dim: usize,

    #[arg(long, default_value_t = 128)]
    batch_size: usize,

    #[arg(long, default_value_t = 0.001)]
    learning_rate: f64,

    #[arg(long, default_value_t = 20)]
    epochs: usize,

    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,

    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,

    /// Weight loss positions by a descending schedule.
    #[arg(long)]
    weighted_loss: bool,

    /// Exponential instead of linear descending weights.
    #[arg(long, requires = "weighted_loss")]
    exponential_weights: bool,

    /// Feed ground-truth tokens to the decoder during training.
    #[arg(long)]
    teacher_forcing: bool,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            max_epochs: self.epochs,
            train_fraction: self.train_fraction,
            test_fraction: self.test_fraction,
            weighted_loss: self.weighted_loss,
            exponential_weights: self.exponential_weights,
            teacher_forcing: self.teacher_forcing,
            rng_seed: seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a GA-labeled JSONL dataset plus its manifest.
    GenData {
        /// Number of samples.
        #[arg(long)]
        count: usize,

        /// Output JSONL path; the manifest lands next to it.
        #[arg(long)]
        out: PathBuf,

        #[command(flatten)]
        ga: GaArgs,
    },

    /// Train the scheduler on a generated dataset.
    Train {
        /// Dataset JSONL path.
        #[arg(long)]
        data: PathBuf,

        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,

        /// Per-epoch loss CSV; defaults to the checkpoint path with a
        /// .loss.csv extension.
        #[arg(long)]
        loss_csv: Option<PathBuf>,

        #[command(flatten)]
        train: TrainArgs,
    },

    /// Score a checkpoint on its held-out test split.
    Eval {
        #[arg(long)]
        data: PathBuf,

        #[arg(long)]
        checkpoint: PathBuf,

        /// Metrics CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Time every scheduler and re-evaluate drops with the measured
    /// execution time.
    Bench {
        /// Needed whenever pnt-net is among the schedulers.
        #[arg(long)]
        checkpoint: Option<PathBuf>,

        /// Comma-separated task counts.
        #[arg(long, default_value = "10,20,30,40,50")]
        n: String,

        #[arg(long, default_value_t = 20)]
        trials: usize,

        /// Comma-separated scheduler names.
        #[arg(long, default_value = "fifo,stf,sdf,ga-integer,ga-binary,pnt-net")]
        schedulers: String,

        /// Output stem; writes <stem>.csv and <stem>.dat.
        #[arg(long)]
        out: PathBuf,

        #[command(flatten)]
        ga: GaArgs,
    },

    /// Schedule one instance and print the evaluation.
    Schedule {
        /// fifo | stf | sdf | ga-integer | ga-binary | pnt-net | brute-force
        #[arg(long)]
        scheduler: String,

        /// Comma-separated type ids (0 to 8).
        #[arg(long)]
        tasks: String,

        /// Needed for pnt-net.
        #[arg(long)]
        checkpoint: Option<PathBuf>,

        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,

        #[command(flatten)]
        ga: GaArgs,
    },
}

fn main() -> ExitCode {
    // Die quietly when a pipe reader goes away, like other line tools.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            if err.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn context(cli: &Cli) -> Result<EvaluationContext> {
    let ctx = EvaluationContext {
        lambda: cli.lambda,
        time_unit_scale: cli.time_unit_scale,
        ..EvaluationContext::default()
    };
    ctx.validate()?;
    Ok(ctx)
}

fn parse_list<T: std::str::FromStr>(what: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| SchedError::InvalidConfig(format!("bad {what} entry {s:?}")))
        })
        .collect()
}

fn dispatch(cli: Cli) -> Result<()> {
    let ctx = context(&cli)?;
    let catalog = TaskCatalog::standard();
    match &cli.command {
        Command::GenData { count, out, ga } => {
            cmd_gen_data(&cli, &ctx, &catalog, *count, out, &ga.config())
        }
        Command::Train {
            data,
            out,
            loss_csv,
            train,
        } => cmd_train(&cli, data, out, loss_csv.as_deref(), train),
        Command::Eval {
            data,
            checkpoint,
            out,
        } => cmd_eval(data, checkpoint, out.as_deref()),
        Command::Bench {
            checkpoint,
            n,
            trials,
            schedulers,
            out,
            ga,
        } => cmd_bench(
            &cli,
            &catalog,
            checkpoint.as_deref(),
            n,
            *trials,
            schedulers,
            out,
            &ga.config(),
        ),
        Command::Schedule {
            scheduler,
            tasks,
            checkpoint,
            json,
            ga,
        } => cmd_schedule(
            &ctx,
            &catalog,
            scheduler,
            tasks,
            checkpoint.as_deref(),
            *json,
            &ga.config(),
        ),
    }
}

fn cmd_gen_data(
    cli: &Cli,
    ctx: &EvaluationContext,
    catalog: &TaskCatalog,
    count: usize,
    out: &Path,
    ga: &GAConfig,
) -> Result<()> {
    let mut ga = ga.clone();
    ga.rng_seed = cli.seed;
    let (samples, manifest) = generate(count, catalog, ctx, &ga, cli.seed)?;
    write_dataset(&samples, &manifest, out)?;
    println!(
        "wrote {count} samples to {} (manifest {})",
        out.display(),
        manifest_path(out).display()
    );

    let probe: Vec<_> = samples
        .iter()
        .filter(|s| s.actual_length <= 8)
        .take(200)
        .cloned()
        .collect();
    let (checked, optimal) = oracle_audit(&probe, catalog, ctx, 8)?;
    println!("label audit: {optimal}/{checked} GA labels oracle-optimal on an N<=8 probe");
    Ok(())
}

fn cmd_train(
    cli: &Cli,
    data: &Path,
    out: &Path,
    loss_csv: Option<&Path>,
    args: &TrainArgs,
) -> Result<()> {
    let (samples, _manifest) = read_dataset(data)?;
    let cfg = args.config(cli.seed);
    println!(
        "training on {} samples ({} epochs, batch {}, {}x{} model)",
        samples.len(),
        cfg.max_epochs,
        cfg.batch_size,
        cfg.embed_dim,
        cfg.hidden_dim
    );
    std::io::stdout().flush().ok();

    let (params, report) = train(&samples, &cfg)?;
    save_checkpoint(out, &params, &cfg)?;

    let loss_path = loss_csv
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.with_extension("loss.csv"));
    let mut csv = String::from("epoch,train_loss,val_loss\n");
    for (i, (t, v)) in report
        .train_losses
        .iter()
        .zip(&report.val_losses)
        .enumerate()
    {
        csv.push_str(&format!("{},{t},{v}\n", i + 1));
    }
    std::fs::write(&loss_path, csv).map_err(|e| SchedError::io(&loss_path, e))?;

    for (i, ((t, v), s)) in report
        .train_losses
        .iter()
        .zip(&report.val_losses)
        .zip(&report.epoch_seconds)
        .enumerate()
    {
        println!("epoch {:>3}  train {t:.6}  val {v:.6}  ({s:.1}s)", i + 1);
    }
    let m = &report.final_metrics;
    println!(
        "best epoch {} | test soft accuracy {:.4}, soft precision {:.4}, soft recall {:.4}, weighted F1 {:.4}",
        report.best_epoch, m.avg_soft_accuracy, m.avg_soft_precision, m.avg_soft_recall, m.weighted_f1
    );
    println!(
        "checkpoint {} | losses {}",
        out.display(),
        loss_path.display()
    );
    Ok(())
}

fn cmd_eval(data: &Path, checkpoint: &Path, out: Option<&Path>) -> Result<()> {
    let (params, cfg) = load_checkpoint(checkpoint)?;
    let (samples, _manifest) = read_dataset(data)?;
    let (_, test_idx, _) = split_indices(samples.len(), &cfg);
    if test_idx.is_empty() {
        return Err(SchedError::InvalidConfig(format!(
            "dataset of {} samples has an empty test split",
            samples.len()
        )));
    }
    let test: Vec<_> = test_idx.iter().map(|&i| samples[i].clone()).collect();
    let predictions = predict_batch(&params, &test, cfg.batch_size)?;
    let report = metrics_report(&predictions, DEFAULT_EPSILON)?;

    let mut csv = String::from("metric,value\n");
    csv.push_str(&format!("test_sequences,{}\n", test.len()));
    csv.push_str(&format!("avg_soft_accuracy,{}\n", report.avg_soft_accuracy));
    csv.push_str(&format!("avg_soft_precision,{}\n", report.avg_soft_precision));
    csv.push_str(&format!("avg_soft_recall,{}\n", report.avg_soft_recall));
    csv.push_str(&format!("weighted_f1,{}\n", report.weighted_f1));
    for (c, f1) in report.per_class_f1.iter().enumerate() {
        csv.push_str(&format!("f1_class_{c},{f1}\n"));
    }
    match out {
        Some(path) => {
            std::fs::write(path, &csv).map_err(|e| SchedError::io(path, e))?;
            println!(
                "evaluated {} test sequences | soft accuracy {:.4}, weighted F1 {:.4} -> {}",
                test.len(),
                report.avg_soft_accuracy,
                report.weighted_f1,
                path.display()
            );
        }
        None => print!("{csv}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    cli: &Cli,
    catalog: &TaskCatalog,
    checkpoint: Option<&Path>,
    n: &str,
    trials: usize,
    schedulers: &str,
    out: &Path,
    ga: &GAConfig,
) -> Result<()> {
    let kinds: Vec<SchedulerKind> = parse_list("scheduler", schedulers)?;
    let model = match checkpoint {
        Some(path) => Some(load_checkpoint(path)?.0),
        None => None,
    };
    let cfg = BenchConfig {
        schedulers: kinds,
        n_values: parse_list("task count", n)?,
        trials,
        seed: cli.seed,
        lambda: cli.lambda,
        time_unit_scale: cli.time_unit_scale,
        ga: ga.clone(),
    };
    let rows = run_benchmark(&cfg, catalog, model.as_ref())?;
    print_rows(&rows);
    edgesched::harness::write_benchmark_files(&rows, out)?;
    println!(
        "wrote {} and {}",
        out.with_extension("csv").display(),
        out.with_extension("dat").display()
    );
    Ok(())
}

fn print_rows(rows: &[BenchmarkRow]) {
    println!(
        "{:<11} {:>4} {:>13} {:>13} {:>15} {:>13}",
        "scheduler", "n", "drop_no_exec", "exec_seconds", "drop_with_exec", "mean_waiting"
    );
    for r in rows {
        println!(
            "{:<11} {:>4} {:>13.4} {:>13.6} {:>15.4} {:>13.4}",
            r.scheduler.name(),
            r.n,
            r.drop_no_exec,
            r.exec_seconds,
            r.drop_with_exec,
            r.mean_waiting
        );
    }
}

fn cmd_schedule(
    ctx: &EvaluationContext,
    catalog: &TaskCatalog,
    scheduler: &str,
    tasks: &str,
    checkpoint: Option<&Path>,
    json: bool,
    ga: &GAConfig,
) -> Result<()> {
    let kind: SchedulerKind = scheduler.parse()?;
    let type_ids: Vec<usize> = parse_list("type id", tasks)?;
    let instance = ProblemInstance::from_type_ids(catalog, &type_ids)?;
    let model = match checkpoint {
        Some(path) => Some(load_checkpoint(path)?.0),
        None => None,
    };
    if kind.needs_model() && model.is_none() {
        return Err(SchedError::InvalidConfig(
            "pnt-net requires --checkpoint".into(),
        ));
    }
    let schedule = run_scheduler(kind, &instance, ctx, ga, model.as_ref())?;
    let report = evaluate(&instance, &schedule, ctx)?;

    if json {
        let payload = serde_json::json!({
            "scheduler": kind.name(),
            "type_ids": type_ids,
            "order": schedule.order(),
            "served_type_ids": schedule.apply_to_type_ids(&instance),
            "waiting_times": report.waiting_times,
            "drop_flags": report.drop_flags,
            "drop_ratio": report.drop_ratio,
            "avg_waiting": report.avg_waiting,
            "objective": report.objective,
        });
        println!("{}", serde_json::to_string_pretty(&payload).expect("plain data"));
        return Ok(());
    }

    let order = schedule.order();
    println!(
        "{} order: {}",
        kind.name(),
        order
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    );
    println!("{:>4} {:>5} {:>5} {:>11} {:>9} {:>8} {:>8}", "pos", "task", "type", "processing", "deadline", "waiting", "status");
    for (pos, &task) in order.iter().enumerate() {
        let t = &instance.tasks()[task];
        println!(
            "{:>4} {:>5} {:>5} {:>11} {:>9} {:>8} {:>8}",
            pos,
            task,
            t.type_id,
            t.processing_time,
            t.deadline,
            report.waiting_times[task],
            if report.drop_flags[task] { "dropped" } else { "served" }
        );
    }
    println!(
        "drop ratio {:.4} | avg waiting {:.4} | objective {:.6}",
        report.drop_ratio, report.avg_waiting, report.objective
    );
    Ok(())
}
