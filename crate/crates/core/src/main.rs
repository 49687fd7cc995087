// negated comparisons are used deliberately to reject NaN flag values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use limeaudit::audit::audit_dataset;
use limeaudit::blackbox::{
    train_kernel_logistic_traced, KernelLogisticModel, Scorer, TrainParams,
};
use limeaudit::config::{sha256_hex, AuditConfig, Provenance, ReferenceStrategy};
use limeaudit::corpus::generate_corpus;
use limeaudit::dataset::{load_svmlight, save_svmlight, Dataset};
use limeaudit::external::{run_echo_scorer, EchoMode, ExternalScorer};
use limeaudit::lime::{explain_detail, LimeParams};
use limeaudit::numkit::KernelSpec;
use limeaudit::report::{
    format_sig, load_report, render_markdown, render_report_csv, write_partial, write_report_dir,
};
use limeaudit::stream::derive_key;
use limeaudit::Error;

#[derive(Parser)]
#[command(
    name = "limeaudit",
    version,
    about = "Sparse linear LIME explanations with MMD-based shift audits",
    after_help = "Exit codes: 0 success, 1 runtime/audit failure, 2 usage or validation error."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the built-in kernel logistic scorer and write a model file
    Train(TrainArgs),
    /// Explain one instance with a sparse linear surrogate
    Explain(ExplainArgs),
    /// Run the shift-and-fidelity audit over a test set
    Audit(AuditArgs),
    /// Re-render a finished report directory without recomputation
    Report(ReportArgs),
    /// Loopback scorer speaking the external wire protocol (for testing)
    EchoScorer(EchoArgs),
    /// Generate the bundled synthetic two-class corpus
    GenCorpus(GenArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// svmlight-style training data
    #[arg(long)]
    dataset: PathBuf,
    /// where to write the JSON model file
    #[arg(long)]
    out: PathBuf,
    /// kernel for the built-in model
    #[arg(long, default_value = "cosine")]
    kernel: String,
    /// rbf bandwidth; omit for the median heuristic
    #[arg(long)]
    gamma: Option<f64>,
    /// l2 penalty on the dual coefficients
    #[arg(long, default_value_t = 1e-4)]
    reg: f64,
    #[arg(long, default_value_t = 1500)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
}

#[derive(Args)]
struct ScorerArgs {
    /// JSON model file for the built-in scorer
    #[arg(long, conflicts_with = "external")]
    model: Option<PathBuf>,
    /// external scorer command line (whitespace-split)
    #[arg(long)]
    external: Option<String>,
    /// class count of the external scorer (classes are positional ids 0..)
    #[arg(long, default_value_t = 2)]
    external_classes: usize,
    /// seconds to wait for each external response
    #[arg(long, default_value_t = 30)]
    external_timeout: u64,
}

impl ScorerArgs {
    fn build(&self, dim: usize) -> Result<(Box<dyn Scorer>, String), Error> {
        match (&self.model, &self.external) {
            (Some(path), None) => {
                let text = std::fs::read_to_string(path)?;
                let model = KernelLogisticModel::from_json(&text)?;
                let digest = sha256_hex(text.as_bytes());
                Ok((Box::new(model), format!("builtin:{digest}")))
            }
            (None, Some(cmdline)) => {
                let parts: Vec<String> = cmdline.split_whitespace().map(String::from).collect();
                let scorer = ExternalScorer::spawn(
                    &parts,
                    dim,
                    self.external_classes,
                    Duration::from_secs(self.external_timeout),
                )?;
                Ok((Box::new(scorer), format!("external:{cmdline}")))
            }
            _ => Err(Error::Config(
                "exactly one of --model or --external is required".into(),
            )),
        }
    }
}

#[derive(Args)]
struct ExplainArgs {
    /// svmlight-style data holding the instance to explain
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    scorer: ScorerArgs,
    /// 0-based index into the dataset
    #[arg(long)]
    instance: usize,
    /// class label to explain
    #[arg(long)]
    class: i32,
    #[arg(long, default_value_t = 1000)]
    num_samples: usize,
    #[arg(long, default_value_t = 6)]
    num_features: usize,
    #[arg(long, default_value_t = 1.0)]
    ridge: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// also write the explanation as JSON to this path
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
#[command(after_help = "\
Report directory layout:
  report.json           full-precision AuditReport
  report.csv            test,n,instances,reject_count,reject_fraction,fail_count,\
fail_fraction,mmd_b_mean,mmd_b_std,scaled_mean,scaled_std,fidelity_mean,fidelity_std,pearson_mmd_fidelity
  rows.csv              instance_id,n,data_mmd_b,data_scaled,data_threshold,data_reject,\
label_mmd_b,label_scaled,label_threshold,label_reject,fidelity,f_y_at_x,g_y_at_x
  plot_fidelity.csv     n,fidelity_mean,fidelity_std
  plot_mmd_fidelity.csv test,n,instance_id,mmd_b,fidelity
  report.md             the rendered tables
  MANIFEST.json         provenance plus digests of the files above
CSV files start with '#'-prefixed provenance lines; rendered numbers carry six
significant digits. On failure the directory holds rows_partial.csv and
error_manifest.json instead.")]
struct AuditArgs {
    /// svmlight-style training data (reference pool and scorer support)
    #[arg(long)]
    train: PathBuf,
    /// svmlight-style instances to explain and audit
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    scorer: ScorerArgs,
    /// class label to explain
    #[arg(long)]
    class: i32,
    /// comma-separated perturbation counts
    #[arg(long, value_delimiter = ',', default_value = "2,5,10,20,50,100,200,500")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// reference strategy
    #[arg(long, value_enum, default_value_t = ReferenceStrategy::Knn)]
    reference: ReferenceStrategy,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// report directory to create
    #[arg(long)]
    out: PathBuf,
    /// worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value_t = 6)]
    num_features: usize,
    #[arg(long, default_value_t = 1.0)]
    ridge: f64,
    /// compare only the explained-class scalar in the label-shift test
    #[arg(long)]
    label_shift_scalar: bool,
    /// diagnostic: replace perturbations with a disjoint reference draw
    #[arg(long)]
    null_mode: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// directory produced by `audit`
    #[arg(long = "in")]
    input: PathBuf,
    /// md, csv, or json
    #[arg(long)]
    format: String,
}

#[derive(Args)]
struct EchoArgs {
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// protocol misbehaviour to simulate
    #[arg(long, value_enum, default_value_t = EchoMode::Normal)]
    malform: EchoMode,
}

#[derive(Args)]
struct GenArgs {
    /// directory for train.svm and test.svm
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

/// (exit code, message)
type CmdResult = Result<(), (i32, String)>;

fn usage(e: impl std::fmt::Display) -> (i32, String) {
    (2, e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> (i32, String) {
    (1, e.to_string())
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Train(args) => cmd_train(args),
        Cmd::Explain(args) => cmd_explain(args),
        Cmd::Audit(args) => cmd_audit(args),
        Cmd::Report(args) => cmd_report(args),
        Cmd::EchoScorer(args) => run_echo_scorer(args.malform, args.classes)
            .map_err(|e| runtime(format!("echo scorer failed: {e}"))),
        Cmd::GenCorpus(args) => cmd_gen_corpus(args),
    };
    if let Err((code, message)) = outcome {
        eprintln!("error: {message}");
        std::process::exit(code);
    }
}

fn load_dataset_or_usage(path: &std::path::Path) -> Result<Dataset, (i32, String)> {
    load_svmlight(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let kernel = match args.kernel.as_str() {
        "cosine" => KernelSpec::cosine(),
        "rbf" => match args.gamma {
            Some(g) => KernelSpec::rbf(g).map_err(usage)?,
            None => KernelSpec::rbf_median_heuristic(),
        },
        other => return Err(usage(format!("unknown kernel {other:?}"))),
    };
    if args.kernel == "cosine" && args.gamma.is_some() {
        return Err(usage("--gamma applies only to the rbf kernel"));
    }
    if let Some(g) = args.gamma {
        if !(g > 0.0) {
            return Err(usage(format!("gamma must be positive, got {g}")));
        }
    }
    if !(args.reg > 0.0) || !(args.lr > 0.0) || args.epochs == 0 {
        return Err(usage("reg, lr, and epochs must be positive"));
    }
    let data = load_dataset_or_usage(&args.dataset)?;
    let params = TrainParams {
        reg: args.reg,
        epochs: args.epochs,
        lr: args.lr,
    };
    let (model, trace) =
        train_kernel_logistic_traced(&data.instances, &data.labels, &kernel, &params)
            .map_err(runtime)?;
    model.save(&args.out).map_err(runtime)?;
    let accuracy = model
        .accuracy(&data.instances, &data.labels)
        .map_err(runtime)?;
    println!(
        "trained on {} instances ({} classes {:?})",
        data.len(),
        data.classes().len(),
        data.classes()
    );
    println!(
        "final training loss: {}",
        format_sig(trace.last().copied().unwrap_or(f64::NAN))
    );
    println!("training accuracy: {}", format_sig(accuracy));
    println!("model written to {}", args.out.display());
    Ok(())
}

fn cmd_explain(args: ExplainArgs) -> CmdResult {
    let data = load_dataset_or_usage(&args.dataset)?;
    if args.instance >= data.len() {
        return Err(usage(format!(
            "instance index {} out of range [0, {})",
            args.instance,
            data.len()
        )));
    }
    let (scorer, _) = args.scorer.build(data.dim).map_err(usage)?;
    let x = &data.instances[args.instance];
    let params = LimeParams {
        n_samples: args.num_samples,
        k_features: args.num_features,
        proximity: KernelSpec::cosine(),
        ridge: args.ridge,
        seed: derive_key(args.seed, &[args.instance as u64]),
    };
    let detail = explain_detail(x, args.class, scorer.as_ref(), &params).map_err(runtime)?;
    let expl = &detail.explanation;
    let f_y = scorer
        .score(x)
        .and_then(|s| s.score_for(args.class))
        .map_err(runtime)?;
    let g_y = expl.surrogate_at_parent();
    let fid = limeaudit::audit::fidelity(f_y, g_y).map_err(runtime)?;

    println!(
        "explanation for instance {} class {} ({} samples, seed {})",
        args.instance, args.class, args.num_samples, args.seed
    );
    println!("features (id weight):");
    for fw in &expl.features {
        println!("  {:>6}  {}", fw.feature, format_sig(fw.weight));
    }
    println!("intercept: {}", format_sig(expl.intercept));
    println!("loss: {}", format_sig(expl.loss));
    println!("f_y(x): {}", format_sig(f_y));
    println!("g_y(x): {}", format_sig(g_y));
    println!("fidelity: {}", format_sig(fid));
    if let Some(path) = &args.json {
        std::fs::write(
            path,
            serde_json::to_string(expl).map_err(runtime)? + "\n",
        )
        .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> CmdResult {
    let config = AuditConfig {
        seed: args.seed,
        alpha: args.alpha,
        n_grid: args.n.clone(),
        explained_class: args.class,
        k_features: args.num_features,
        ridge: args.ridge,
        proximity_kernel: KernelSpec::cosine(),
        data_shift_kernel: KernelSpec::cosine(),
        label_shift_kernel: KernelSpec::rbf_median_heuristic(),
        reference: args.reference,
        label_shift_scalar: args.label_shift_scalar,
        null_mode: args.null_mode,
    };
    config.validate().map_err(usage)?;
    let train_text = std::fs::read_to_string(&args.train)
        .map_err(|e| usage(format!("{}: {e}", args.train.display())))?;
    let test_text = std::fs::read_to_string(&args.test)
        .map_err(|e| usage(format!("{}: {e}", args.test.display())))?;
    let train = limeaudit::dataset::parse_svmlight(&train_text).map_err(usage)?;
    let test = limeaudit::dataset::parse_svmlight(&test_text).map_err(usage)?;
    if train.dim != test.dim {
        return Err(usage(format!(
            "train dim {} does not match test dim {}",
            train.dim, test.dim
        )));
    }
    let (scorer, scorer_desc) = args.scorer.build(train.dim).map_err(usage)?;
    let provenance = Provenance::new(&config, &train_text, &test_text, scorer_desc);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| runtime(format!("worker pool: {e}")))?;
    let outcome = pool.install(|| {
        audit_dataset(
            &test.instances,
            scorer.as_ref(),
            &train.instances,
            &config,
            provenance.clone(),
        )
    });
    match outcome {
        Ok((report, rows)) => {
            write_report_dir(&args.out, &report, &rows).map_err(runtime)?;
            println!(
                "audited {} instances over n grid {:?}",
                test.len(),
                config.n_grid
            );
            for agg in &report.aggregates {
                println!(
                    "n={:<4} data-shift reject {}/{} (mmd {} ± {})  label-shift reject {}/{} (mmd {} ± {})  fidelity {} ± {}",
                    agg.n,
                    agg.data_shift.reject_count,
                    agg.instances,
                    format_sig(agg.data_shift.mmd_mean),
                    format_sig(agg.data_shift.mmd_std),
                    agg.label_shift.reject_count,
                    agg.instances,
                    format_sig(agg.label_shift.mmd_mean),
                    format_sig(agg.label_shift.mmd_std),
                    format_sig(agg.fidelity_mean),
                    format_sig(agg.fidelity_std),
                );
            }
            println!("report written to {}", args.out.display());
            Ok(())
        }
        Err(failure) => {
            write_partial(&args.out, &provenance, &failure.partial_rows, &failure.error)
                .map_err(runtime)?;
            Err(runtime(format!(
                "audit aborted: {} ({} rows completed; partial results in {})",
                failure.error,
                failure.partial_rows.len(),
                args.out.display()
            )))
        }
    }
}

fn cmd_report(args: ReportArgs) -> CmdResult {
    let report = load_report(&args.input).map_err(usage)?;
    let rendered = match args.format.as_str() {
        "md" => render_markdown(&report),
        "csv" => render_report_csv(&report),
        "json" => serde_json::to_string(&report).map_err(usage)? + "\n",
        other => return Err(usage(format!("unknown format {other:?} (md, csv, json)"))),
    };
    print!("{rendered}");
    Ok(())
}

fn cmd_gen_corpus(args: GenArgs) -> CmdResult {
    std::fs::create_dir_all(&args.out).map_err(|e| runtime(format!("{e}")))?;
    let (train, test) = generate_corpus(args.seed);
    save_svmlight(&train, &args.out.join("train.svm")).map_err(runtime)?;
    save_svmlight(&test, &args.out.join("test.svm")).map_err(runtime)?;
    println!(
        "wrote {} train and {} test documents (dim {}) to {}",
        train.len(),
        test.len(),
        train.dim,
        args.out.display()
    );
    Ok(())
}
