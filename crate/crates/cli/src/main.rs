use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use rarerisk::archetype::{commonality_importance, commonality_stability, nearest_match, reverse_coding_importance};
use rarerisk::boosting::{confusion, fit_boost_cv, in_sample_importance, BoostModel};
use rarerisk::clustering::{agnes_average_linkage, cut_clusters, gower_binary_dissimilarity, Dendrogram};
use rarerisk::dataset::{load_csv, split_train_test, DataSet};
use rarerisk::genetic::{evolve, GaConfig};
use rarerisk::logistic::fit_logistic;
use rarerisk::pipeline::{load_data, run_pipeline, ArtifactSink, OutputLock, PipelineConfig, PlantedSpec};
use rarerisk::report::{self, ImportanceTable};
use rarerisk::{Error, RiskModel};

const DEFAULT_OUT_DIR: &str = "rarerisk-out";
const OUT_DIR_ENV: &str = "RARERISK_OUT_DIR";

/// Rare-event risk analysis: cost-weighted boosting, genetic profile
/// synthesis and predictor clustering.
#[derive(Debug, Parser)]
#[command(name = "rarerisk", version)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

/// Accepted both before and after the subcommand; `--set` values from both
/// places apply, the later ones last.
#[derive(Debug, Clone, Default, Args)]
struct Common {
    /// TOML configuration file. Without one, planted synthetic data and
    /// default settings are used.
    #[arg(long, short)]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set boost.max_trees=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory [env: RARERISK_OUT_DIR]; falls back to the config's
    /// `output_dir`, then `rarerisk-out`.
    #[arg(long, short)]
    out: Option<PathBuf>,

    /// Log more (repeatable).
    #[arg(long, short, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Common {
    fn merge(mut self, later: Common) -> Common {
        self.overrides.extend(later.overrides);
        Common {
            config: later.config.or(self.config),
            overrides: self.overrides,
            out: later.out.or(self.out),
            verbose: self.verbose + later.verbose,
        }
    }
}

#[derive(Debug, Args)]
struct Plain {
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the configured dataset to data.csv.
    Synth(Plain),
    /// Split the dataset into train.csv and test.csv.
    Split {
        /// Dataset to split; defaults to data.csv in the output directory if
        /// present, otherwise the configured source.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the unweighted logistic baseline on train.csv.
    Baseline(Plain),
    /// Fit the cost-weighted boosted model on train.csv and score test.csv.
    Train(Plain),
    /// Evolve a high-risk population with model.json as fitness.
    Evolve {
        /// Run the GA once per seed and report commonality stability.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Commonality, reverse-coding and nearest-match analysis of population.csv.
    Analyze(Plain),
    /// Cluster the predictors of population.csv.
    Cluster(Plain),
    /// Render dendrogram.svg and print the text reports.
    Report(Plain),
    /// Run every stage and write a manifest.
    Pipeline(Plain),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Split { common, .. } | Command::Evolve { common, .. } => common,
            Command::Synth(a)
            | Command::Baseline(a)
            | Command::Train(a)
            | Command::Analyze(a)
            | Command::Cluster(a)
            | Command::Report(a)
            | Command::Pipeline(a) => &a.common,
        }
    }

    fn stage(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Split { .. } => "split",
            Command::Baseline(_) => "baseline",
            Command::Train(_) => "train",
            Command::Evolve { .. } => "evolve",
            Command::Analyze(_) => "analyze",
            Command::Cluster(_) => "cluster",
            Command::Report(_) => "report",
            Command::Pipeline(_) => "pipeline",
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
    let common = cli.common.clone().merge(cli.command.common().clone());
    let level = match common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli.command, &common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        _ => 2,
    }
}

fn load_config(common: &Common) -> rarerisk::Result<PipelineConfig> {
    match &common.config {
        Some(path) => PipelineConfig::load(path, &common.overrides).map_err(|e| match e {
            Error::Io { .. } => Error::Config(e.to_string()),
            e => e,
        }),
        None => {
            let base = PipelineConfig::planted(PlantedSpec::default()).to_toml()?;
            PipelineConfig::from_toml_with_overrides(&base, &common.overrides)
        }
    }
}

fn out_dir(common: &Common, cfg: &PipelineConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn run(command: &Command, common: &Common) -> rarerisk::Result<()> {
    let cfg = load_config(common)?;
    let dir = out_dir(common, &cfg);

    if let Command::Pipeline(_) = command {
        let outputs = run_pipeline(&cfg, Some(&dir))?;
        let m = &outputs.manifest;
        println!("wrote {} artifacts to {}", m.artifacts.len(), dir.display());
        if let Some(t) = &m.summary.confusion {
            println!("{}", report::confusion_text(t));
        }
        return Ok(());
    }

    let _lock = OutputLock::acquire(&dir)?;
    let mut sink = ArtifactSink::new(&dir)?;
    match command {
        Command::Synth(_) => synth(&cfg, &mut sink),
        Command::Split { data, .. } => split(&cfg, data.as_deref(), &mut sink),
        Command::Baseline(_) => baseline(&cfg, &mut sink),
        Command::Train(_) => train(&cfg, &mut sink),
        Command::Evolve { seeds, .. } => evolve_cmd(&cfg, seeds, &mut sink),
        Command::Analyze(_) => analyze(&cfg, &mut sink),
        Command::Cluster(_) => cluster(&cfg, &mut sink),
        Command::Report(_) => report_cmd(&mut sink),
        Command::Pipeline(_) => unreachable!(),
    }
    .map_err(|e| e.in_stage(command.stage()))?;
    for a in sink.artifacts() {
        println!("{}  {}", a.sha256, a.path);
    }
    Ok(())
}

fn read_input(sink: &ArtifactSink, name: &str) -> rarerisk::Result<String> {
    let path = sink.dir().join(name);
    std::fs::read_to_string(&path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn load_split(sink: &ArtifactSink, name: &str) -> rarerisk::Result<DataSet> {
    load_csv(&sink.dir().join(name), None)
}

fn load_model(sink: &ArtifactSink) -> rarerisk::Result<BoostModel> {
    BoostModel::from_json(&read_input(sink, "model.json")?)
}

fn csv_bytes(ds: &DataSet) -> rarerisk::Result<Vec<u8>> {
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    Ok(buf)
}

fn share_above(risk: &[f64], threshold: f64) -> f64 {
    risk.iter().filter(|&&r| r > threshold).count() as f64 / risk.len() as f64
}

fn synth(cfg: &PipelineConfig, sink: &mut ArtifactSink) -> rarerisk::Result<()> {
    let ds = load_data(&cfg.data)?;
    sink.write("data", "data.csv", csv_bytes(&ds)?)?;
    info!("{} rows, {} predictors, {} positives", ds.n(), ds.p(), ds.positives());
    Ok(())
}

fn split(cfg: &PipelineConfig, data: Option<&Path>, sink: &mut ArtifactSink) -> rarerisk::Result<()> {
    let local = sink.dir().join("data.csv");
    let ds = match data {
        Some(p) => load_csv(p, None)?,
        None if local.exists() => load_csv(&local, None)?,
        None => load_data(&cfg.data)?,
    };
    let (train, test) = split_train_test(&ds, cfg.split.n_train, cfg.split.seed)?;
    sink.write("train_data", "train.csv", csv_bytes(&train)?)?;
    sink.write("test_data", "test.csv", csv_bytes(&test)?)?;
    Ok(())
}

fn baseline(cfg: &PipelineConfig, sink: &mut ArtifactSink) -> rarerisk::Result<()> {
    let train = load_split(sink, "train.csv")?;
    let test = load_split(sink, "test.csv")?;
    let m = fit_logistic(&train, cfg.logistic.max_iter, cfg.logistic.tol)?;
    let fitted = m.predict(train.x())?;
    let test_risk = m.predict(test.x())?;
    sink.write("baseline_model", "baseline_model.json", serde_json::to_string_pretty(&m)?)?;
    sink.write(
        "histogram",
        "histogram_logistic.svg",
        report::histogram_svg(&test_risk, cfg.report.bins, "Risk Probabilities from Logistic Regression")?,
    )?;
    println!(
        "logistic: status {:?}, max fitted {:.4}, test share above {} = {:.4}",
        m.status,
        fitted.iter().copied().fold(0.0, f64::max),
        cfg.evaluation.threshold,
        share_above(&test_risk, cfg.evaluation.threshold)
    );
    Ok(())
}

fn train(cfg: &PipelineConfig, sink: &mut ArtifactSink) -> rarerisk::Result<()> {
    let train = load_split(sink, "train.csv")?;
    let test = load_split(sink, "test.csv")?;
    let mut m = fit_boost_cv(&train, &cfg.boost)?;
    m.truncate_to_used();
    sink.write("boost_model", "model.json", m.to_json()?)?;
    let mut curve = String::from("trees,cv_deviance\n");
    for (k, d) in m.cv_curve.iter().enumerate() {
        curve.push_str(&format!("{},{}\n", k + 1, d));
    }
    sink.write("cv_curve", "cv_curve.csv", curve)?;
    let test_risk = m.predict(test.x())?;
    sink.write(
        "histogram",
        "histogram_boosting.svg",
        report::histogram_svg(&test_risk, cfg.report.bins, "Risk Probabilities from Stochastic Gradient Boosting")?,
    )?;
    let t = confusion(&m, &test, cfg.evaluation.threshold)?;
    sink.write("confusion_table", "confusion.csv", report::confusion_csv(&t))?;
    sink.write("confusion_text", "confusion.txt", report::confusion_text(&t))?;
    println!("boosting: {} trees selected", m.n_trees_used);
    println!("{}", report::confusion_text(&t));
    Ok(())
}

fn evolve_cmd(cfg: &PipelineConfig, seeds: &[u64], sink: &mut ArtifactSink) -> rarerisk::Result<()> {
    let model = load_model(sink)?;
    let names = load_split(sink, "train.csv")?.schema().names().to_vec();
    let seeds = if seeds.is_empty() { vec![cfg.ga.seed] } else { seeds.to_vec() };
    let mut reports = Vec::with_capacity(seeds.len());
    for (k, &seed) in seeds.iter().enumerate() {
        let ga = GaConfig { seed, ..cfg.ga.clone() };
        let trace = evolve(|g| model.risk(g), model.n_predictors(), &ga)?;
        let pop = &trace.final_population;
        let suffix = if seeds.len() > 1 { format!("_seed{seed}") } else { String::new() };
        sink.write("ga_trace", &format!("ga_trace{suffix}.csv"), report::ga_trace_csv(&trace))?;
        sink.write("population", &format!("population{suffix}.csv"), report::population_csv(pop, &names)?)?;
        if k == 0 {
            if seeds.len() > 1 {
                sink.write("ga_trace", "ga_trace.csv", report::ga_trace_csv(&trace))?;
                sink.write("population", "population.csv", report::population_csv(pop, &names)?)?;
            }
            sink.write(
                "histogram",
                "histogram_ga.svg",
                report::histogram_svg(pop.fitness(), cfg.report.bins, "Risk Probabilities from the Genetic Algorithm")?,
            )?;
        }
        if let Some(last) = trace.generations.last() {
            println!("seed {seed}: best {:.4}, mean {:.4}", last.best, last.mean);
        }
        reports.push(commonality_importance(pop, cfg.analysis.epsilon)?);
    }
    if seeds.len() > 1 {
        let st = commonality_stability(seeds, &reports)?;
        sink.write("commonality_stability", "stability.json", serde_json::to_string_pretty(&st)?)?;
        println!("predictor  mean   min    max    same class");
        for (j, name) in names.iter().enumerate() {
            println!(
                "{name:<10} {:.3}  {:.3}  {:.3}  {}/{}",
                st.mean[j],
                st.min[j],
                st.max[j],
                st.class_agreement[j],
                st.seeds.len()
            );
        }
    }
    Ok(())
}

fn load_population(sink: &ArtifactSink) -> rarerisk::Result<(rarerisk::genetic::Population, Vec<String>)> {
    report::read_population_csv(read_input(sink, "population.csv")?.as_bytes())
}

fn analyze(cfg: &PipelineConfig, sink: &mut ArtifactSink) -> rarerisk::Result<()> {
    let model = load_model(sink)?;
    let (pop, names) = load_population(sink)?;
    let train = load_split(sink, "train.csv")?;
    let c = commonality_importance(&pop, cfg.analysis.epsilon)?;
    let rc = reverse_coding_importance(&model, &pop, &c)?;
    let table = ImportanceTable::build(&names, &in_sample_importance(&model), &c, &rc)?;
    sink.write("importance_table", "importance.csv", table.to_csv()?)?;
    sink.write("importance_json", "importance.json", table.to_json()?)?;
    sink.write("importance_text", "importance.txt", table.to_text())?;
    let nm = nearest_match(&pop, &train)?;
    sink.write("nearest_match", "nearest_match.json", serde_json::to_string_pretty(&nm)?)?;
    print!("{}", table.to_text());
    println!("closest real profile matches {} of {} predictors", nm.max, names.len());
    Ok(())
}

fn cluster(cfg: &PipelineConfig, sink: &mut ArtifactSink) -> rarerisk::Result<()> {
    let (pop, names) = load_population(sink)?;
    let d = gower_binary_dissimilarity(&pop)?.with_labels(names.clone())?;
    let dg = agnes_average_linkage(&d);
    sink.write("dendrogram", "dendrogram.json", serde_json::to_string_pretty(&dg)?)?;
    sink.write("dendrogram_newick", "dendrogram.nwk", dg.to_newick() + "\n")?;
    sink.write("dendrogram_text", "dendrogram.txt", dg.to_text())?;
    if let Some(cut) = cfg.clustering.cut() {
        let parts = cut_clusters(&dg, cut)?;
        let labelled: Vec<Vec<&str>> = parts.iter().map(|c| c.iter().map(|&j| names[j].as_str()).collect()).collect();
        sink.write("clusters", "clusters.json", serde_json::to_string_pretty(&labelled)?)?;
    }
    println!("agglomerative coefficient {:.4}", dg.agglomerative_coefficient);
    Ok(())
}

fn report_cmd(sink: &mut ArtifactSink) -> rarerisk::Result<()> {
    let dg: Dendrogram = serde_json::from_str(&read_input(sink, "dendrogram.json")?)?;
    sink.write("dendrogram_svg", "dendrogram.svg", report::dendrogram_svg(&dg, "Clustering of Predictors"))?;
    for name in ["confusion.txt", "importance.txt", "dendrogram.txt"] {
        if let Ok(text) = read_input(sink, name) {
            println!("== {name}\n{text}");
        }
    }
    Ok(())
}
