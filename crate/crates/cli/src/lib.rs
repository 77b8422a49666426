//! The `fpt` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 undefined prediction (the query conditions on something the training
//! data never reached).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fpt_core::decision::{apply_substitutions, classify, Setting};
use fpt_core::evaluation::{
    bootstrap_compare, render_table, BootstrapConfig, Metric, ModelBuilder, TreeBuilder,
};
use fpt_core::inference::ContributionSource;
use fpt_core::{
    CounterfactualResult, Dataset, IngestReport, Model, PatientQuery, Prediction, Substitution,
    Weighting,
};
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_UNDEFINED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fpt", version, about = "Fuzzy probability trees for binary classification")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Model spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Training data (CSV).
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug, Args)]
struct QueryArgs {
    /// Patient query: a JSON file, or inline `Var=value,Var=value`.
    #[arg(long)]
    query: Option<String>,
    /// Class whose probability is reported.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    class: Option<u8>,
    /// Refuse to fall back when a branch has no training rows.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the data, build the tree and report what was ingested.
    Build {
        #[command(flatten)]
        model: ModelArgs,
        /// Also write the tree here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tree density statistics.
    Stats {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Probability of a class for one patient.
    Predict {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        query: QueryArgs,
        /// Set or override one query value, `Var=value`; repeatable.
        #[arg(long = "set", value_name = "VAR=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_enum, default_value_t = WeightingArg::Fuzzy)]
        weighting: WeightingArg,
    },
    /// Compare a patient with an altered version of themselves.
    Counterfactual {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        query: QueryArgs,
        /// Substitution `Var=value`, `Var=<number>` for a raw value, or
        /// `Var=` to drop the variable; repeatable.
        #[arg(long = "set", value_name = "VAR=VALUE", required = true)]
        set: Vec<String>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Bootstrap comparison of the fuzzy tree and the crisp tree.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1000)]
        resamples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long)]
        threshold: Option<f64>,
        /// Models to evaluate.
        #[arg(long, value_delimiter = ',', default_values = ["FPT", "PT"])]
        models: Vec<ModelName>,
        /// Run resamples one after another.
        #[arg(long)]
        serial: bool,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the tree as JSON.
    ExportTree {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the model over HTTP.
    Serve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Permissive CORS headers for a locally served UI.
        #[arg(long)]
        dev: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightingArg {
    Fuzzy,
    Projected,
    Crisp,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Fuzzy => Weighting::Fuzzy,
            WeightingArg::Projected => Weighting::Projected,
            WeightingArg::Crisp => Weighting::Crisp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelName {
    #[value(name = "FPT", alias = "fpt")]
    Fpt,
    #[value(name = "PT", alias = "pt")]
    Pt,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] fpt_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) if e.is_undefined() => EXIT_UNDEFINED,
            CliError::Core(_) | CliError::Io { .. } => EXIT_DATA,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Runs one invocation and returns its exit code. Results go to `out`,
/// diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if let CliError::Core(fpt_core::Error::UndefinedConditional { conditions }) = &e {
                let _ = writeln!(err, "conditions: {}", json!(conditions));
            }
            e.exit_code()
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn emit_json(out: &mut dyn Write, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON serialises");
    text.push('\n');
    emit(out, &text)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load(args: &ModelArgs) -> Result<(Model, Dataset, IngestReport)> {
    Ok(Model::load(&args.spec, &args.data)?)
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let format = cli.format;
    match cli.command {
        Command::Build { model, out: path } => {
            let (model, _, report) = load(&model)?;
            if let Some(path) = path {
                write_file(&path, &model.tree().to_json())?;
            }
            let stats = model.stats();
            match format {
                Format::Json => emit_json(
                    out,
                    &json!({ "name": model.spec().name, "ingest": report, "stats": stats }),
                ),
                Format::Table => {
                    let mut text = String::new();
                    let _ = writeln!(text, "Rows read      {}", report.rows_read);
                    let _ = writeln!(text, "Rows retained  {}", report.rows_retained);
                    let _ = writeln!(text, "Rows flagged   {}", report.rows_flagged);
                    for e in &report.exclusions {
                        let _ = writeln!(text, "Excluded       {} ({})", e.count, e.rule);
                    }
                    let _ = writeln!(text, "Tree rows      {}", stats.training_rows);
                    let _ = writeln!(text, "Realisations   {}", stats.realisations);
                    emit(out, &text)
                }
            }
        }
        Command::Stats { model } => {
            let (model, _, _) = load(&model)?;
            let stats = model.stats();
            match format {
                Format::Json => emit_json(out, &json!(stats)),
                Format::Table => emit(
                    out,
                    &format!(
                        "Training rows                {}\nRealisations                 {}\nNon-empty leaves             {}\nMean rows per realisation    {:.2}\n",
                        stats.training_rows,
                        stats.realisations,
                        stats.nonzero_leaves,
                        stats.mean_rows_per_realisation
                    ),
                ),
            }
        }
        Command::Predict {
            model,
            query,
            set,
            threshold,
            weighting,
        } => {
            let (model, _, _) = load(&model)?;
            let mut q = build_query(&model, &query)?;
            if !set.is_empty() {
                let subs = parse_sets(&model, &set)?;
                q = apply_substitutions(model.tree(), &q, &subs)?.0;
            }
            let threshold = threshold.unwrap_or(model.threshold());
            let weighting = Weighting::from(weighting);
            let p1 = model.predict_with(&q.clone().with_class(1), weighting)?;
            let p0 = model.predict_with(&q.clone().with_class(0), weighting)?;
            let decision = classify(p1.probability, threshold)?;
            let queried = if q.class == 1 { &p1 } else { &p0 };
            let statements = q.normalized(model.tree())?.statements;
            match format {
                Format::Json => emit_json(
                    out,
                    &json!({
                        "class": q.class,
                        "probability": queried.probability,
                        "p0": p0.probability,
                        "p1": p1.probability,
                        "label": decision.label,
                        "threshold": threshold,
                        "statements": statements,
                        "raw_values": q.raw_values,
                        "contributions": queried.contributions,
                    }),
                ),
                Format::Table => emit(out, &prediction_table(&p0, &p1, q.class, decision.label, threshold)),
            }
        }
        Command::Counterfactual {
            model,
            query,
            set,
            threshold,
        } => {
            let (model, _, _) = load(&model)?;
            let q = build_query(&model, &query)?;
            let subs = parse_sets(&model, &set)?;
            let result = model.counterfactual(&q, &subs, threshold)?;
            match format {
                Format::Json => emit_json(out, &json!(result)),
                Format::Table => emit(out, &counterfactual_table(&result)),
            }
        }
        Command::Evaluate {
            model,
            resamples,
            seed,
            test_fraction,
            threshold,
            models,
            serial,
            out: path,
        } => {
            let (model, dataset, _) = load(&model)?;
            let config = BootstrapConfig {
                resamples,
                seed,
                test_fraction,
                threshold: threshold.unwrap_or(model.threshold()),
                parallel: !serial,
                ..BootstrapConfig::default()
            };
            fpt_core::decision::check_threshold(config.threshold)?;
            let mut names = models;
            names.dedup();
            let builders: Vec<TreeBuilder> = names
                .iter()
                .map(|m| match m {
                    ModelName::Fpt => TreeBuilder::fuzzy(model.spec().clone()),
                    ModelName::Pt => TreeBuilder::crisp(model.spec().clone()),
                })
                .collect();
            let refs: Vec<&dyn ModelBuilder> = builders.iter().map(|b| b as &dyn ModelBuilder).collect();
            let comparison = bootstrap_compare(&dataset.records, &refs, &config)?;
            let mut report = json!({ "reports": comparison.reports });
            let mut differences = Vec::new();
            if refs.len() == 2 {
                differences = Metric::ALL
                    .iter()
                    .map(|m| comparison.paired_difference(*m, 0, 1))
                    .collect();
                report["paired_differences"] = json!({
                    "minuend": refs[0].name(),
                    "subtrahend": refs[1].name(),
                    "metrics": differences,
                });
            }
            if let Some(path) = path {
                let mut text = serde_json::to_string_pretty(&report).expect("JSON serialises");
                text.push('\n');
                write_file(&path, &text)?;
            }
            match format {
                Format::Json => emit_json(out, &report),
                Format::Table => {
                    let mut text = render_table(&comparison.reports);
                    if !differences.is_empty() {
                        let _ = writeln!(
                            text,
                            "\nPaired difference {} - {} (95% CI)",
                            refs[0].name(),
                            refs[1].name()
                        );
                        for d in &differences {
                            let _ = match (d.mean, d.ci_lower, d.ci_upper) {
                                (Some(m), Some(lo), Some(hi)) => writeln!(
                                    text,
                                    "  {:<12} {:+.3} [{:+.3}, {:+.3}]",
                                    d.metric.title(),
                                    m,
                                    lo,
                                    hi
                                ),
                                _ => writeln!(text, "  {:<12} undefined", d.metric.title()),
                            };
                        }
                    }
                    emit(out, &text)
                }
            }
        }
        Command::ExportTree { model, out: path } => {
            let (model, _, _) = load(&model)?;
            let mut text = model.tree().to_json();
            text.push('\n');
            match path {
                Some(path) => write_file(&path, &text),
                None => emit(out, &text),
            }
        }
        Command::Serve {
            model,
            port,
            host,
            dev,
        } => {
            let state = fpt_server::AppState::load(fpt_server::Sources {
                spec: model.spec.clone(),
                data: model.data.clone(),
            })?;
            let addr = SocketAddr::new(host, port);
            let _ = writeln!(
                err,
                "serving {} on http://{addr} (model {})",
                model.spec.display(),
                &state.session().fingerprint[..12]
            );
            let runtime = tokio::runtime::Runtime::new().map_err(|source| CliError::Io {
                path: PathBuf::from("<runtime>"),
                source,
            })?;
            runtime
                .block_on(fpt_server::serve(state, addr, dev))
                .map_err(|source| CliError::Io {
                    path: PathBuf::from(addr.to_string()),
                    source,
                })
        }
    }
}

fn build_query(model: &Model, args: &QueryArgs) -> Result<PatientQuery> {
    let mut query = match args.query.as_deref() {
        None => PatientQuery::default(),
        Some(text) if Path::new(text).is_file() => {
            let raw = std::fs::read_to_string(text).map_err(|source| CliError::Io {
                path: PathBuf::from(text),
                source,
            })?;
            let value: Value = serde_json::from_str(&raw).map_err(fpt_core::Error::from)?;
            model.query_from_json(&value)?
        }
        Some(text) if text.contains('=') => {
            let pairs = text
                .split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| {
                    p.split_once('=')
                        .ok_or_else(|| CliError::Usage(format!("`{p}` is not Var=value")))
                })
                .collect::<Result<Vec<_>>>()?;
            model.query_from_pairs(pairs)?
        }
        Some(text) => {
            return Err(CliError::Io {
                path: PathBuf::from(text),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such query file"),
            })
        }
    };
    if let Some(class) = args.class {
        query.class = class;
    }
    if args.strict {
        query.strict = true;
    }
    Ok(query)
}

fn parse_sets(model: &Model, sets: &[String]) -> Result<Vec<Substitution>> {
    sets.iter()
        .map(|s| {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set `{s}` is not Var=value")))?;
            Ok(model.substitution(k, v)?)
        })
        .collect()
}

fn prediction_table(p0: &Prediction, p1: &Prediction, class: u8, label: u8, threshold: f64) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "P(class = 1)  {:.4}", p1.probability);
    let _ = writeln!(text, "P(class = 0)  {:.4}", p0.probability);
    let _ = writeln!(text, "Label         {label} (threshold {threshold:.2})");
    let _ = writeln!(text, "\nWeight   Value   Path");
    let queried = if class == 1 { p1 } else { p0 };
    for c in &queried.contributions {
        let path: Vec<String> = c
            .path
            .iter()
            .map(|s| format!("{}={} ({:.3})", s.statement.variable, s.statement.value, s.weight))
            .collect();
        let source = match &c.source {
            ContributionSource::Leaf { node } => format!("leaf {node}"),
            ContributionSource::Conditional { conditions } => {
                let list: Vec<String> = conditions.iter().map(ToString::to_string).collect();
                format!("P(. | {})", list.join(", "))
            }
        };
        let _ = writeln!(
            text,
            "{:.4}   {:.4}  {}  [{source}]",
            c.weight,
            c.value,
            if path.is_empty() { "(root)".to_string() } else { path.join(" > ") }
        );
    }
    text
}

fn setting(s: &Option<Setting>) -> String {
    match s {
        Some(Setting::Value(v)) => v.clone(),
        Some(Setting::Raw(x)) => format!("{x}"),
        None => "(unset)".into(),
    }
}

fn counterfactual_table(result: &CounterfactualResult) -> String {
    let mut text = String::new();
    for s in &result.substitutions {
        let _ = writeln!(text, "{}: {} -> {}", s.variable, setting(&s.old), setting(&s.new));
    }
    let _ = writeln!(
        text,
        "Factual         {:.4} (label {})",
        result.factual.probability, result.factual.label
    );
    let _ = writeln!(
        text,
        "Counterfactual  {:.4} (label {})",
        result.counterfactual.probability, result.counterfactual.label
    );
    let _ = writeln!(text, "Delta           {:+.4}", result.delta);
    text
}
