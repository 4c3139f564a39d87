//! `xspn`: generate data, train, evaluate, classify and inspect networks.
//!
//! Reports go to stdout as `key=value` lines. Exit codes: 0 success, 2 usage,
//! 3 data or model error, 4 capacity error. `XSPN_THREADS` caps the worker
//! threads (0 or unset: one per core).

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use xspn_core::classifier::GenerativeClassifier;
use xspn_core::datagen::{self, ConstraintSpec, MevmSpec};
use xspn_core::learn::{learn_with_stats, TestMode, Variant};
use xspn_core::model::NodeKind;
use xspn_core::stats::{self, PairCorrection};
use xspn_core::{BinaryDataset, Hyperparams, Network, PartialEvidence, XspnError};

#[derive(Parser)]
#[command(name = "xspn", version, about = "Exchangeability-aware sum-product networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset.
    Generate(GenerateArgs),
    /// Learn a network from a dataset and write the model file.
    Train(TrainArgs),
    /// Mean per-sample log-likelihood of a dataset under a model.
    Eval(EvalArgs),
    /// Train one network per class and report test accuracy.
    Classify(ClassifyArgs),
    /// Summarize a model file.
    Inspect(InspectArgs),
    /// Check a model file for structural violations.
    Validate(ValidateArgs),
    /// Train over the hyperparameter grid and keep the best validation model.
    Grid(GridArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Threshold,
    Exact,
    Parity,
    Counting,
    Mevm,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Number of variables.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Threshold: keep rows with fewer than this many ones.
    #[arg(long)]
    bound: Option<usize>,
    /// Exact and counting: divisor of the one-count.
    #[arg(long, default_value_t = 5)]
    divisor: usize,
    /// Counting: required residue of the one-count.
    #[arg(long, default_value_t = 3)]
    residue: usize,
    /// Sample uniform rows and append a label column that is 1 when the constraint holds.
    #[arg(long)]
    labeled: bool,
    /// MEVM mixture components.
    #[arg(long, default_value_t = 1)]
    components: usize,
    /// MEVM exchangeable blocks per component.
    #[arg(long, default_value_t = 4)]
    blocks: usize,
}

#[derive(Args, Clone)]
struct HyperArgs {
    #[arg(long, default_value = "XSPN_TF", value_parser = parse_variant)]
    variant: Variant,
    /// g-test threshold on the raw statistic.
    #[arg(long, default_value_t = 5.0)]
    rho: f64,
    #[arg(long, default_value_t = 200)]
    min_instances: usize,
    /// Significance level of the exchangeability test.
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 2)]
    max_children: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    full_test_max_vars: usize,
    #[arg(long, default_value = "pairwise", value_parser = parse_test_mode)]
    test_mode: TestMode,
    /// Test each variable pair at p divided by the number of pairs.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    bonferroni: bool,
}

impl HyperArgs {
    fn params(&self) -> Hyperparams {
        Hyperparams {
            rho: self.rho,
            min_instances: self.min_instances,
            exch_significance: self.p,
            alpha: self.alpha,
            variant: self.variant,
            max_children: self.max_children,
            seed: self.seed,
            full_test_max_vars: self.full_test_max_vars,
            test_mode: self.test_mode,
            pair_correction: if self.bonferroni {
                PairCorrection::Bonferroni
            } else {
                PairCorrection::None
            },
            ..Hyperparams::default()
        }
    }
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: XspnError| e.to_string())
}

fn parse_test_mode(s: &str) -> Result<TestMode, String> {
    s.parse().map_err(|e: XspnError| e.to_string())
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also report the mean log-likelihood on this dataset.
    #[arg(long)]
    test: Option<PathBuf>,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// 0/1 mask file, 1 = observed; one row for all samples or one row per sample.
    #[arg(long)]
    marginal: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Zero-based label column; defaults to the last column.
    #[arg(long)]
    label_column: Option<usize>,
    /// Write the fitted classifier here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Replay the learner's tests on each node scope of this dataset.
    #[arg(long)]
    tests: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long, default_value_t = 5.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    hyper: HyperArgs,
}

enum Failure {
    Usage(String),
    Core(XspnError),
}

impl From<XspnError> for Failure {
    fn from(e: XspnError) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Core(XspnError::Input(_)) => 2,
            Failure::Core(XspnError::Capacity(_)) => 4,
            Failure::Core(_) => 3,
        }
    }
}

impl Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

type CmdResult = Result<(), Failure>;

/// Ordered `key=value` report.
#[derive(Default)]
struct Report(Vec<(String, String)>);

impl Report {
    fn put(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        self.0.push((key.into(), value.to_string()));
        self
    }

    fn put_params(&mut self, hp: &Hyperparams) -> &mut Self {
        self.put("variant", hp.variant)
            .put("rho", hp.rho)
            .put("min_instances", hp.min_instances)
            .put("p", hp.exch_significance)
            .put("alpha", hp.alpha)
            .put("max_children", hp.max_children)
            .put("seed", hp.seed)
            .put("full_test_max_vars", hp.full_test_max_vars)
            .put("test_mode", format!("{:?}", hp.test_mode).to_lowercase())
            .put("pair_correction", format!("{:?}", hp.pair_correction).to_lowercase())
    }

    fn put_network(&mut self, net: &Network) -> &mut Self {
        self.put("nodes", net.len())
            .put("parameters", net.parameter_count())
            .put("depth", net.depth().map_or("n/a".to_string(), |d| d.to_string()));
        let census = net.leaf_census();
        for kind in xspn_core::leaves::LeafKind::ALL {
            self.put(format!("leaves.{}", kind.as_str()), census.get(&kind).copied().unwrap_or(0));
        }
        self
    }

    fn print(&self) {
        for (k, v) in &self.0 {
            emit(format_args!("{k}={v}"));
        }
    }
}

/// Writes one stdout line, ignoring a closed pipe.
fn emit(line: std::fmt::Arguments) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn args_line() -> String {
    std::env::args().skip(1).collect::<Vec<_>>().join(" ")
}

fn generate(a: GenerateArgs) -> CmdResult {
    let constraint = |a: &GenerateArgs| -> Result<ConstraintSpec, Failure> {
        Ok(match a.kind {
            Kind::Threshold => {
                let bound = a.bound.ok_or_else(|| Failure::Usage("--bound is required for threshold".into()))?;
                ConstraintSpec::threshold(a.n, bound)
            }
            Kind::Exact => ConstraintSpec::exact(a.n, a.divisor),
            Kind::Parity => ConstraintSpec::parity(a.n),
            Kind::Counting => ConstraintSpec::counting(a.n, a.divisor, a.residue),
            Kind::Mevm => unreachable!(),
        })
    };
    let mut report = Report::default();
    report.put("command", "generate").put("args", args_line());
    let data = match a.kind {
        Kind::Mevm => {
            if a.labeled {
                return Err(Failure::Usage("--labeled is not available for mevm".into()));
            }
            let spec = MevmSpec::random(a.n, a.components, a.blocks, a.seed)?;
            let data = datagen::generate_mevm(&spec, a.samples, a.seed);
            if a.samples > 0 {
                report.put("true_mean_log_likelihood", datagen::mevm_loglik(&spec, &data)?);
            }
            data
        }
        _ => {
            let spec = constraint(&a)?;
            spec.check()?;
            report.put("analytic_log_likelihood", datagen::analytic_loglik(&spec)?);
            if a.labeled {
                datagen::generate_labeled(&spec, a.samples, a.seed)?
            } else {
                datagen::generate_constraint(&spec, a.samples, a.seed)?
            }
        }
    };
    data.save(&a.out)?;
    report
        .put("rows", data.rows())
        .put("columns", data.cols())
        .put("seed", a.seed)
        .put("out", a.out.display());
    report.print();
    Ok(())
}

fn train(a: TrainArgs) -> CmdResult {
    let hp = a.hyper.params();
    let data = BinaryDataset::load(&a.train)?;
    let start = Instant::now();
    let (net, stats) = learn_with_stats(&data, &hp)?;
    let seconds = start.elapsed().as_secs_f64();
    net.save(&a.out)?;
    let mut report = Report::default();
    report.put("command", "train").put("args", args_line()).put_params(&hp);
    report
        .put("train_rows", data.rows())
        .put("variables", data.cols())
        .put_network(&net)
        .put("train_mean_log_likelihood", net.mean_log_likelihood(&data)?);
    if let Some(test) = &a.test {
        let test = BinaryDataset::load(test)?;
        report.put("test_mean_log_likelihood", net.mean_log_likelihood(&test)?);
    }
    report
        .put("exchangeability_tests", stats.exchangeability_tests)
        .put("clusterings", stats.clusterings)
        .put("degenerate_clusterings", stats.degenerate_clusterings)
        .put("wall_seconds", format!("{seconds:.3}"))
        .put("out", a.out.display());
    report.print();
    Ok(())
}

fn eval(a: EvalArgs) -> CmdResult {
    let net = Network::load(&a.model)?;
    let data = BinaryDataset::load(&a.data)?;
    let mut report = Report::default();
    report.put("command", "eval").put("args", args_line()).put("rows", data.rows());
    let mean = match &a.marginal {
        None => net.mean_log_likelihood(&data)?,
        Some(path) => {
            let mask = BinaryDataset::load(path)?;
            if mask.cols() != data.cols() {
                return Err(XspnError::Input(format!(
                    "mask has {} columns, data has {}",
                    mask.cols(),
                    data.cols()
                ))
                .into());
            }
            if mask.rows() != 1 && mask.rows() != data.rows() {
                return Err(XspnError::Input(format!(
                    "mask needs 1 or {} rows, has {}",
                    data.rows(),
                    mask.rows()
                ))
                .into());
            }
            if data.is_empty() {
                return Err(XspnError::Input("cannot average over an empty dataset".into()).into());
            }
            let mut total = 0.0;
            for r in 0..data.rows() {
                let m: Vec<bool> = mask.row(if mask.rows() == 1 { 0 } else { r }).iter().map(|&v| v == 1).collect();
                total += net.log_marginal(&PartialEvidence::masked(data.row(r), &m))?;
            }
            report.put("mode", "marginal");
            total / data.rows() as f64
        }
    };
    report.put("mean_log_likelihood", mean);
    report.print();
    Ok(())
}

fn split_labels(data: &BinaryDataset, column: Option<usize>) -> Result<(BinaryDataset, Vec<u32>), Failure> {
    let column = column.unwrap_or(data.cols().saturating_sub(1));
    Ok(data.split_label_column(column)?)
}

fn classify(a: ClassifyArgs) -> CmdResult {
    let hp = a.hyper.params();
    let (x, y) = split_labels(&BinaryDataset::load(&a.train)?, a.label_column)?;
    let (tx, ty) = split_labels(&BinaryDataset::load(&a.test)?, a.label_column)?;
    let start = Instant::now();
    let clf = GenerativeClassifier::fit(&x, &y, &hp)?;
    let predictions = clf.predict_dataset(&tx)?;
    let seconds = start.elapsed().as_secs_f64();
    if let Some(out) = &a.out {
        clf.save(out)?;
    }
    let mut per_class: BTreeMap<u32, (usize, usize)> = clf.labels().into_iter().map(|l| (l, (0, 0))).collect();
    let mut correct = 0;
    for (p, &label) in predictions.iter().zip(&ty) {
        let entry = per_class.entry(label).or_insert((0, 0));
        entry.0 += 1;
        if p.label == label {
            entry.1 += 1;
            correct += 1;
        }
    }
    let mut report = Report::default();
    report.put("command", "classify").put("args", args_line()).put_params(&hp);
    report
        .put("train_rows", x.rows())
        .put("test_rows", tx.rows())
        .put("classes", clf.classes().len())
        .put(
            "accuracy",
            if ty.is_empty() { 0.0 } else { correct as f64 / ty.len() as f64 },
        );
    for c in clf.classes() {
        let (n, ok) = per_class[&c.label];
        report
            .put(format!("class.{}.prior", c.label), c.log_prior.exp())
            .put(format!("class.{}.test_rows", c.label), n)
            .put(
                format!("class.{}.accuracy", c.label),
                if n == 0 { "n/a".to_string() } else { (ok as f64 / n as f64).to_string() },
            )
            .put(format!("class.{}.nodes", c.label), c.network.len())
            .put(format!("class.{}.parameters", c.label), c.network.parameter_count());
    }
    for (label, (n, _)) in &per_class {
        if clf.labels().binary_search(label).is_err() {
            report.put(format!("class.{label}.test_rows_unseen"), n);
        }
    }
    report.put("wall_seconds", format!("{seconds:.3}"));
    report.print();
    Ok(())
}

fn inspect(a: InspectArgs) -> CmdResult {
    let net = Network::load(&a.model)?;
    let mut report = Report::default();
    report
        .put("command", "inspect")
        .put("args", args_line())
        .put("variable_count", net.variable_count());
    let root_kind = match &net.root_node().kind {
        NodeKind::Sum { .. } => "sum".to_string(),
        NodeKind::Product { .. } => "product".to_string(),
        NodeKind::Leaf(d) => format!("leaf:{}", d.kind().as_str()),
    };
    report.put("root", root_kind).put_network(&net);
    report.put("violations", net.validate().len());
    if let Some(path) = &a.tests {
        let data = BinaryDataset::load(path)?;
        if data.cols() != net.variable_count() {
            return Err(XspnError::Input(format!(
                "dataset has {} columns, model has {} variables",
                data.cols(),
                net.variable_count()
            ))
            .into());
        }
        for (i, node) in net.nodes().iter().enumerate() {
            if node.scope.len() < 2 {
                continue;
            }
            let cols: Vec<usize> = node.scope.iter().map(|v| v.index()).collect();
            let sub = data.select_columns(&cols);
            let pair = stats::chi2_exchangeability_pairwise(&sub, a.p, PairCorrection::Bonferroni);
            let min_p = pair.pairs.iter().map(|(_, _, r)| r.p_value).fold(1.0, f64::min);
            let groups = stats::split_variables(&sub, a.rho, a.alpha);
            report
                .put(format!("node.{i}.scope_size"), node.scope.len())
                .put(format!("node.{i}.exchangeable"), pair.verdict.is_exchangeable())
                .put(format!("node.{i}.min_pair_p_value"), min_p)
                .put(format!("node.{i}.independent_groups"), groups.len());
        }
    }
    report.print();
    Ok(())
}

fn validate(a: ValidateArgs) -> CmdResult {
    let net = Network::load(&a.model)?;
    let violations = net.validate();
    let mut report = Report::default();
    report
        .put("command", "validate")
        .put("valid", violations.is_empty())
        .put("violations", violations.len());
    report.print();
    for v in &violations {
        eprintln!("violation: {v}");
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(XspnError::Structure(format!("{} violation(s)", violations.len())).into())
    }
}

fn grid(a: GridArgs) -> CmdResult {
    let base = a.hyper.params();
    let train = BinaryDataset::load(&a.train)?;
    let valid = BinaryDataset::load(&a.valid)?;
    let start = Instant::now();
    let mut best: Option<(f64, Network, Hyperparams)> = None;
    for (i, hp) in base.grid().into_iter().enumerate() {
        let (net, _) = learn_with_stats(&train, &hp)?;
        let v = net.mean_log_likelihood(&valid)?;
        emit(format_args!(
            "config.{i}=rho:{} min_instances:{} p:{} valid_mean_log_likelihood:{v}",
            hp.rho, hp.min_instances, hp.exch_significance
        ));
        if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
            best = Some((v, net, hp));
        }
    }
    let (v, net, hp) = best.expect("grid is not empty");
    let mut report = Report::default();
    report.put("command", "grid").put("args", args_line()).put_params(&hp);
    report.put("valid_mean_log_likelihood", v).put_network(&net);
    if let Some(test) = &a.test {
        report.put("test_mean_log_likelihood", net.mean_log_likelihood(&BinaryDataset::load(test)?)?);
    }
    if let Some(out) = &a.out {
        net.save(out)?;
        report.put("out", out.display());
    }
    report.put("wall_seconds", format!("{:.3}", start.elapsed().as_secs_f64()));
    report.print();
    Ok(())
}

fn configure_threads() -> CmdResult {
    let Ok(raw) = std::env::var("XSPN_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("XSPN_THREADS must be a non-negative integer, got {raw:?}")))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Classify(a) => classify(a),
        Command::Inspect(a) => inspect(a),
        Command::Validate(a) => validate(a),
        Command::Grid(a) => grid(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xspn: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
