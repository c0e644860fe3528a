//! `ratebench`: learning-rate policy benchmarking from the command line.

mod args;

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ratebench_core::engine::{train, DataError, EngineError, TrainConfig};
use ratebench_core::metrics::{MetricReport, MetricsError};
use ratebench_core::schedules::{schedule_series, ScheduleError};
use ratebench_core::store::{PolicyStore, StoreError, TrialRecord, STORE_ENV};
use ratebench_core::surface::{self, Surface, SurfaceError};
use ratebench_core::tuner::{self, EngineContext, GridSpec, TrialConfig, TunerError};

use args::{DataArgs, ModelArgs, PolicyArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or values; exit 1.
    Usage(String),
    /// Input that parses but fails validation; exit 1.
    Invalid(String),
    /// Exit 2.
    Io(String),
}

impl CliError {
    pub fn invalid(e: impl std::fmt::Display) -> Self {
        CliError::Invalid(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Invalid(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Data(d) => d.into(),
            e => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<TunerError> for CliError {
    fn from(e: TunerError) -> Self {
        match e {
            TunerError::Data(d) => d.into(),
            TunerError::Engine(d) => d.into(),
            e => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } => CliError::Io(e.to_string()),
            e => CliError::Invalid(e.to_string()),
        }
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Invalid(e.to_string())
            }
        }
    )*};
}
invalid_from!(ScheduleError, SurfaceError, MetricsError);

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "ratebench", version, about = "Benchmark and tune learning-rate policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a policy's learning rate as CSV `t,lr`
    Schedule {
        #[command(flatten)]
        policy: PolicyArgs,
        /// Last iteration sampled (inclusive)
        #[arg(long)]
        t_end: u64,
        #[arg(long, default_value_t = 1)]
        stride: u64,
        /// Write here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model under one policy and write its evaluation trace
    Train {
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 100)]
        batch_size: usize,
        /// Training iterations
        #[arg(long)]
        max_iter: u64,
        /// Evaluate every this many iterations
        #[arg(long)]
        eval_interval: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the trace here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the metric report CSV here
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// FIX range test: coarse sweep then zoom; CSV of accuracy by value and probe epoch
    RangeTest {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 100)]
        batch_size: usize,
        #[arg(long)]
        eval_interval: u64,
        /// Coarse values, ascending
        #[arg(long, value_delimiter = ',', default_value = "0.0001,0.001,0.01,0.1,1")]
        values: Vec<f64>,
        /// Probe lengths in epochs
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        epochs: Vec<u64>,
        /// Relative accuracy tolerance for the good range
        #[arg(long, default_value_t = tuner::DEFAULT_DELTA)]
        delta: f64,
        /// Zoom values between adjacent coarse values
        #[arg(long, default_value_t = tuner::DEFAULT_ZOOM_POINTS)]
        zoom: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every policy of a grid file and write one result row per policy
    Grid {
        /// Grid file (JSON)
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Override the grid file's trial seed
        #[arg(long)]
        seed: Option<u64>,
        /// Include wall-clock seconds (makes output non-reproducible)
        #[arg(long)]
        timing: bool,
        /// Append results to this store
        #[arg(long, env = STORE_ENV)]
        store: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank a results CSV written by `grid`
    Rank {
        /// Results CSV
        #[arg(long)]
        results: PathBuf,
        /// Keep the top N
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient descent on a 2-D surface; CSV `t,x,y,f,lr`
    Simulate {
        /// double-well or quadratic
        #[arg(long, default_value = "double-well")]
        surface: String,
        /// Quadratic Hessian entries h11,h12,h22
        #[arg(long, value_delimiter = ',', default_value = "3,1,3", allow_hyphen_values = true)]
        hessian: Vec<f64>,
        /// Without a policy the three comparison policies run and a `policy` column leads each row
        #[command(flatten)]
        policy: PolicyArgs,
        /// Start point x,y; drawn from --seed when absent
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// Iterations
        #[arg(long, default_value_t = surface::DEFAULT_STEPS)]
        t: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List stored results for a dataset, best top-1 first
    StoreQuery {
        #[arg(long, env = STORE_ENV)]
        store: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recommend starting policies from stored results
    StoreRecommend {
        #[arg(long, env = STORE_ENV)]
        store: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        model: String,
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let mut f = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            f.write_all(bytes)?;
            Ok(())
        }
        None => {
            io::stdout().lock().write_all(bytes)?;
            Ok(())
        }
    }
}

fn report_cells(report: &MetricReport) -> [String; 8] {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    [
        report.top1.to_string(),
        report.top5.to_string(),
        opt(report.ac),
        opt(report.cd),
        opt(report.cdac),
        report.ld.to_string(),
        report.best_iter.to_string(),
        report.param_count.to_string(),
    ]
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, CliError> {
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Schedule { policy, t_end, stride, out } => {
            let policy = policy.build(None)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["t", "lr"])?;
            for p in schedule_series(&policy, t_end, stride)? {
                w.write_record([p.t.to_string(), p.lr.to_string()])?;
            }
            emit(&out, &finish(w)?)
        }
        Command::Train { policy, data, model, batch_size, max_iter, eval_interval, seed, out, report } => {
            let policy = policy.build(Some(max_iter))?;
            let (model_spec, optimizer) = (model.model_spec()?, model.optimizer_spec()?);
            let (train_set, test_set) = data.load(seed)?;
            let config = TrainConfig { policy: policy.clone(), batch_size, max_iter, eval_interval, seed };
            let trace = train(&config, &model_spec, &optimizer, &train_set, &test_set)?;
            if let Some(t) = trace.diverged_at {
                eprintln!("diverged at iteration {t}");
            }
            let mut buf = Vec::new();
            trace.write_csv(&mut buf)?;
            emit(&out, &buf)?;
            if let Some(path) = report {
                let r = MetricReport::from_trace(&trace, &policy, max_iter)?;
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(MetricReport::CSV_HEADER)?;
                w.write_record(report_cells(&r))?;
                emit(&Some(path), &finish(w)?)?;
            }
            Ok(())
        }
        Command::RangeTest { data, model, batch_size, eval_interval, values, epochs, delta, zoom, seed, out } => {
            let (model_spec, optimizer) = (model.model_spec()?, model.optimizer_spec()?);
            let (train_set, test_set) = data.load(seed)?;
            let trial = TrialConfig { batch_size, max_iter: 0, eval_interval, seed };
            let ctx = EngineContext { train_set: &train_set, test_set: &test_set, model: &model_spec, optimizer: &optimizer, trial };
            let report = tuner::fix_range_test(&ctx, &epochs, &values, delta, zoom)?;
            eprintln!(
                "good range [{}, {}], best {} at {}%, search space reduced by {:.3}%",
                report.good_range.0, report.good_range.1, report.best_value, report.best_accuracy, report.reduction_percent
            );
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            emit(&out, &buf)
        }
        Command::Grid { spec, workers, seed, timing, store, out } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| CliError::Io(format!("{}: {e}", spec.display())))?;
            let mut grid: GridSpec = serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", spec.display())))?;
            if let Some(s) = seed {
                grid.trial.seed = s;
            }
            grid.validate()?;
            let base = spec.parent().map(Path::to_path_buf).unwrap_or_default();
            let (train_set, test_set) = grid.data.load(&base)?;
            let ctx = EngineContext {
                train_set: &train_set,
                test_set: &test_set,
                model: &grid.model,
                optimizer: &grid.optimizer,
                trial: grid.trial,
            };
            let results = tuner::run_grid(&grid.policies, &ctx, workers)?;
            if let Some(path) = store {
                let mut store = PolicyStore::open(&path)?;
                for r in &results {
                    if let Some(report) = &r.report {
                        let mut rec = TrialRecord::new(&grid.dataset_id, grid.model_id(), &grid.task, r.policy.clone(), report.clone(), grid.trial.seed);
                        rec.diverged = r.diverged;
                        store.put_result(rec)?;
                    }
                }
            }
            let mut buf = Vec::new();
            tuner::write_results_csv(&results, &mut buf, "trial", timing)?;
            emit(&out, &buf)
        }
        Command::Rank { results, n, timing, out } => {
            if n == 0 {
                return Err(CliError::Usage("--n must be at least 1".into()));
            }
            let file = File::open(&results).map_err(|e| CliError::Io(format!("{}: {e}", results.display())))?;
            let trials = tuner::read_results_csv(file)?;
            let mut buf = Vec::new();
            tuner::write_results_csv(&tuner::rank_policies(&trials, n), &mut buf, "rank", timing)?;
            emit(&out, &buf)
        }
        Command::Simulate { surface: kind, hessian, policy, x0, t, seed, out } => {
            let surface = match kind.as_str() {
                "double-well" => Surface::DoubleWell,
                "quadratic" => match hessian[..] {
                    [a, b, c] => Surface::quadratic([[a, b], [b, c]])?,
                    _ => return Err(CliError::Usage("--hessian takes three values h11,h12,h22".into())),
                },
                s => return Err(CliError::Usage(format!("unknown surface `{s}`"))),
            };
            let start = match x0.as_deref() {
                None => surface::seeded_start(seed),
                Some(&[x, y]) => [x, y],
                Some(_) => return Err(CliError::Usage("--x0 takes two values x,y".into())),
            };
            if policy.is_given() {
                let policy = policy.build(Some(t))?;
                let traj = surface::simulate(&surface, &policy, start, t)?;
                let mut buf = Vec::new();
                traj.write_csv(&mut buf)?;
                return emit(&out, &buf);
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["policy", "t", "x", "y", "f", "lr"])?;
            for (name, policy) in surface::default_policies() {
                for p in surface::simulate(&surface, &policy, start, t)?.points {
                    w.write_record([name.to_string(), p.t.to_string(), p.x.to_string(), p.y.to_string(), p.f.to_string(), p.lr.to_string()])?;
                }
            }
            emit(&out, &finish(w)?)
        }
        Command::StoreQuery { store, dataset, model, task, out } => {
            let store = PolicyStore::open(&store)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["id", "dataset_id", "model_id", "task", "kind", "policy", "diverged", "seed"];
            header.extend(MetricReport::CSV_HEADER);
            w.write_record(&header)?;
            for r in store.query(&dataset, model.as_deref(), task.as_deref()) {
                let mut rec = vec![
                    r.id.to_string(),
                    r.dataset_id.clone(),
                    r.model_id.clone(),
                    r.task.clone(),
                    r.policy.kind.as_str().to_string(),
                    r.policy.canonical(),
                    r.diverged.to_string(),
                    r.seed.to_string(),
                ];
                rec.extend(report_cells(&r.report));
                w.write_record(&rec)?;
            }
            emit(&out, &finish(w)?)
        }
        Command::StoreRecommend { store, dataset, model, task, n, out } => {
            if n == 0 {
                return Err(CliError::Usage("--n must be at least 1".into()));
            }
            let store = PolicyStore::open(&store)?;
            let rec = store.recommend(&dataset, &model, &task, n);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["rank", "tier", "kind", "policy"])?;
            match rec.tier {
                None => eprintln!("no related records; run range-test first"),
                Some(tier) => {
                    for (i, p) in rec.policies.iter().enumerate() {
                        w.write_record([(i + 1).to_string(), tier.as_str().to_string(), p.kind.as_str().to_string(), p.canonical()])?;
                    }
                }
            }
            emit(&out, &finish(w)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("run with --help for usage");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
