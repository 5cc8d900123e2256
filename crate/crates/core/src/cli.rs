//! Command-line driver.
//!
//! Exit codes: 0 on success, 2 for invalid input (including usage errors),
//! 3 when the data is degenerate or empty.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cluster::{cluster, fit_standard, single_equation, MegpConfig, MegpModel};
use crate::data::{clean, describe, save_csv, synth_regimes, CleaningRules, Dataset, SynthSpec, Table};
use crate::error::{Error, Result};
use crate::eval::{run_experiment, ExperimentOptions, Method, RankTest};
use crate::expr::Expression;
use crate::predict::{evaluate_clusters, DistanceMeasure, DistanceNorm, PredictionApproach};

/// File-backed run configuration. Every key is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// GP and clustering settings; when absent the `--profile` preset is used.
    pub megp: Option<MegpConfig>,
    pub cleaning: CleaningRules,
    pub folds: usize,
    pub methods: Vec<Method>,
    pub measures: Vec<DistanceMeasure>,
    pub distance_norm: DistanceNorm,
    pub rank_test: RankTest,
    pub seed: Option<u64>,
    pub target: Option<String>,
    pub features: Option<Vec<String>>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            megp: None,
            cleaning: CleaningRules::default(),
            folds: 10,
            methods: Method::ALL.to_vec(),
            measures: DistanceMeasure::ALL.to_vec(),
            distance_norm: DistanceNorm::Max,
            rank_test: RankTest::RankSum,
            seed: None,
            target: None,
            features: None,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        if let Some(m) = &config.megp {
            m.validate()?;
        }
        if config.folds < 1 {
            return Err(Error::input("folds must be >= 1"));
        }
        Ok(config)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// Population 200, 500 generations, 30 runs per cluster.
    Paper,
    /// Population 100, 50 generations, 5 runs per cluster.
    Fast,
}

#[derive(Debug, Parser)]
#[command(name = "megp", version, about = "Multi-equation genetic programming for symbolic regression")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (outputs do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// GP budget preset, used when the configuration has no `megp` section.
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
    /// Parse an s-expression and print its canonical form, depth and size.
    #[arg(long)]
    expr: Option<String>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Input CSV with a header row.
    input: PathBuf,
    /// Target column (default: the last column).
    #[arg(long)]
    target: Option<String>,
    /// Feature columns (default: every other column).
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TrainMode {
    Megp,
    Std,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Remove erroneous rows; writes cleaned.csv and report.json.
    Clean {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',')]
        nonnegative: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        percent: Option<Vec<String>>,
        #[arg(long)]
        outlier: Option<String>,
        #[arg(long)]
        iqr_multiplier: Option<f64>,
    },
    /// Column statistics and correlations; writes describe.json.
    Describe {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Generate a piecewise synthetic series; writes synth.csv and labels.csv.
    Synth {
        /// JSON synthesis spec.
        spec: PathBuf,
    },
    /// Fit a model; writes model.json.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "megp")]
        mode: TrainMode,
        /// Skip feature standardization before distance computations.
        #[arg(long)]
        no_standardize: bool,
    },
    /// Apply a model to a CSV; writes predictions.csv.
    Predict {
        model: PathBuf,
        input: PathBuf,
        #[arg(long, default_value = "GP-w-avg(nd)")]
        approach: PredictionApproach,
        #[arg(long, default_value = "euclidean")]
        measure: DistanceMeasure,
        #[arg(long)]
        distance_norm: Option<DistanceNorm>,
    },
    /// Rolling-split comparison; writes table3.csv, table4.csv and report.json.
    Experiment {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long, value_delimiter = ',')]
        measures: Option<Vec<DistanceMeasure>>,
        #[arg(long)]
        distance_norm: Option<DistanceNorm>,
        #[arg(long)]
        rank_test: Option<RankTest>,
        #[arg(long)]
        no_standardize: bool,
    },
}

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Degenerate(_) => 3,
        _ => 2,
    }
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(text) = &cli.expr {
        let e = Expression::parse(text)?;
        println!("{e}");
        println!("depth: {}", e.depth());
        println!("size: {}", e.len());
        if cli.command.is_none() {
            return Ok(());
        }
    }
    let Some(command) = &cli.command else {
        return Err(Error::input("no subcommand given (see --help)"));
    };
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Context::new(cli, config)?;
    match cli.threads {
        Some(0) => Err(Error::input("--threads must be >= 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::input(format!("thread pool: {e}")))?;
            pool.install(|| ctx.dispatch(command))
        }
        None => ctx.dispatch(command),
    }
}

struct Context {
    config: RunConfig,
    megp: MegpConfig,
    out: PathBuf,
}

impl Context {
    fn new(cli: &Cli, config: RunConfig) -> Result<Self> {
        let mut megp = match (&config.megp, cli.profile) {
            (Some(m), profile) => {
                if profile.is_some() {
                    log::warn!("--profile ignored: the configuration has a `megp` section");
                }
                m.clone()
            }
            (None, Some(Profile::Fast)) => MegpConfig::fast(),
            (None, _) => MegpConfig::default(),
        };
        if let Some(seed) = cli.seed.or(config.seed) {
            megp.gp.seed = seed;
        }
        let out = cli.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("."));
        Ok(Context { config, megp, out })
    }

    fn dispatch(&self, command: &Command) -> Result<()> {
        match command {
            Command::Clean { data, nonnegative, percent, outlier, iqr_multiplier } => {
                let mut rules = self.config.cleaning.clone();
                if let Some(v) = nonnegative {
                    rules.nonnegative_columns = v.clone();
                }
                if let Some(v) = percent {
                    rules.percent_columns = v.clone();
                }
                if let Some(v) = outlier {
                    rules.outlier_column = Some(v.clone());
                }
                if let Some(v) = iqr_multiplier {
                    rules.iqr_multiplier = *v;
                }
                self.clean(data, &rules)
            }
            Command::Describe { data } => self.describe(data),
            Command::Synth { spec } => self.synth(spec),
            Command::Train { data, mode, no_standardize } => self.train(data, *mode, *no_standardize),
            Command::Predict { model, input, approach, measure, distance_norm } => {
                self.predict(model, input, *approach, *measure, distance_norm.unwrap_or(self.config.distance_norm))
            }
            Command::Experiment { data, folds, methods, measures, distance_norm, rank_test, no_standardize } => {
                let options = ExperimentOptions {
                    folds: folds.unwrap_or(self.config.folds),
                    methods: methods.clone().unwrap_or_else(|| self.config.methods.clone()),
                    measures: measures.clone().unwrap_or_else(|| self.config.measures.clone()),
                    distance_norm: distance_norm.unwrap_or(self.config.distance_norm),
                    rank_test: rank_test.unwrap_or(self.config.rank_test),
                };
                self.experiment(data, &options, *no_standardize)
            }
        }
    }

    fn load(&self, args: &DataArgs) -> Result<Dataset> {
        let table = Table::load(&args.input)?;
        let target = match args.target.clone().or_else(|| self.config.target.clone()) {
            Some(t) => t,
            None => table.headers.last().cloned().ok_or_else(|| Error::input("CSV has no columns"))?,
        };
        let features = args.features.clone().or_else(|| self.config.features.clone());
        let data = table.into_dataset(&target, features.as_deref())?;
        if data.is_empty() {
            return Err(Error::Degenerate(format!("{} has no usable rows", args.input.display())));
        }
        Ok(data)
    }

    fn out_path(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }

    fn clean(&self, args: &DataArgs, rules: &CleaningRules) -> Result<()> {
        let data = self.load(args)?;
        let (cleaned, report) = clean(&data, rules)?;
        let report_path = self.out_path("report.json")?;
        fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
        if cleaned.is_empty() {
            return Err(Error::Degenerate("every row was removed by the cleaning rules".into()));
        }
        save_csv(&cleaned, self.out_path("cleaned.csv")?)?;
        println!(
            "rows: {} -> {} (nonnegative {}, percent {}, outlier {})",
            report.input_rows,
            report.output_rows,
            report.removed_nonnegative,
            report.removed_percent,
            report.removed_outlier
        );
        Ok(())
    }

    fn describe(&self, args: &DataArgs) -> Result<()> {
        let data = self.load(args)?;
        let d = describe(&data);
        fs::write(self.out_path("describe.json")?, serde_json::to_string_pretty(&d)? + "\n")?;
        let mut text = format!("{:<20} {:>14} {:>14} {:>14} {:>14}\n", "column", "min", "max", "mean", "sd");
        for c in &d.columns {
            let _ = writeln!(text, "{:<20} {:>14.4} {:>14.4} {:>14.4} {:>14.4}", c.name, c.min, c.max, c.mean, c.sd);
        }
        print!("{text}");
        Ok(())
    }

    fn synth(&self, spec_path: &Path) -> Result<()> {
        let text = fs::read_to_string(spec_path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", spec_path.display()))))?;
        let spec: SynthSpec =
            serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", spec_path.display())))?;
        let data = synth_regimes(&spec, self.megp.gp.seed)?;
        save_csv(&data, self.out_path("synth.csv")?)?;
        let mut labels = String::from("regime\n");
        for l in data.labels().unwrap_or_default() {
            let _ = writeln!(labels, "{l}");
        }
        fs::write(self.out_path("labels.csv")?, labels)?;
        println!("wrote {} rows", data.len());
        Ok(())
    }

    fn train(&self, args: &DataArgs, mode: TrainMode, no_standardize: bool) -> Result<()> {
        let data = self.load(args)?;
        let mut config = self.megp.clone();
        if no_standardize {
            config.standardize = false;
        }
        let model = match mode {
            TrainMode::Megp => cluster(&data, &config)?,
            TrainMode::Std => {
                let fit = fit_standard(&data, &config)?;
                single_equation(&data, &config, fit)?
            }
        };
        model.save(self.out_path("model.json")?)?;
        println!("clusters: {}", model.clusters.len());
        for (i, c) in model.clusters.iter().enumerate() {
            println!("  {i}: size {} epsilon {} equation {}", c.member_count, c.epsilon, c.equation);
        }
        println!("leftover: {}", model.leftover_count);
        Ok(())
    }

    fn predict(
        &self,
        model_path: &Path,
        input: &Path,
        approach: PredictionApproach,
        measure: DistanceMeasure,
        norm: DistanceNorm,
    ) -> Result<()> {
        let model = MegpModel::load(model_path)?;
        let table = Table::load(input)?;
        let idx = model
            .feature_names
            .iter()
            .map(|n| table.column_index(n).ok_or_else(|| Error::input(format!("feature column `{n}` not found"))))
            .collect::<Result<Vec<_>>>()?;
        let target = table.column_index(&model.target_name);

        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["index", "actual", "predicted", "approach", "measure", "best_cluster_index"])?;
        for (i, row) in table.rows.iter().enumerate() {
            let x: Vec<f64> = idx.iter().map(|&j| row[j]).collect();
            let b = evaluate_clusters(&model, &x, measure)?.breakdown(approach, norm);
            wtr.write_record([
                i.to_string(),
                target.map_or_else(String::new, |t| row[t].to_string()),
                b.prediction.to_string(),
                approach.label().to_string(),
                measure.name().to_string(),
                b.best_cluster.to_string(),
            ])?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        fs::write(self.out_path("predictions.csv")?, bytes)?;
        println!("predicted {} rows", table.rows.len());
        Ok(())
    }

    fn experiment(&self, args: &DataArgs, options: &ExperimentOptions, no_standardize: bool) -> Result<()> {
        let data = self.load(args)?;
        let mut config = self.megp.clone();
        if no_standardize {
            config.standardize = false;
        }
        let report = run_experiment(&data, &config, options)?;
        let table3 = report.table3_csv()?;
        fs::write(self.out_path("table3.csv")?, &table3)?;
        fs::write(self.out_path("table4.csv")?, report.table4_csv()?)?;
        fs::write(self.out_path("report.json")?, report.to_json()? + "\n")?;
        print!("{table3}");
        Ok(())
    }
}
