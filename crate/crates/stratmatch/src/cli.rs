//! Command-line interface.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stratmatch_core::att::Method;
use stratmatch_core::{build_tree, post_match_balance, pre_match_balance, Dataset, DgpSpec, PipelineConfig};

use crate::bench::{fix_probabilities, run_bias_study, run_bootstrap_study, BenchResult};
use crate::config::{parse_method, read_config, FileConfig, PipelineOverrides};
use crate::error::{AppError, AppResult};
use crate::io::{load_dataset, parse_delimiter, write_dataset, LoadOptions};
use crate::pipeline::estimate;
use crate::report::{self, AuditLine, EstimatePayload, InputSummary, Timing};

pub const DEFAULT_TREATMENT: &str = "treatment";
pub const DEFAULT_OUTCOME: &str = "outcome";
pub const DEFAULT_OUT_DIR: &str = "stratmatch-out";

#[derive(Debug, Parser)]
#[command(name = "stratmatch", version, about = "Model-tree stratified matching estimates of the ATT")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses every core
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Treatment column (0/1)
    #[arg(long, global = true)]
    pub treatment: Option<String>,
    #[arg(long, global = true)]
    pub outcome: Option<String>,
    /// Field delimiter: `,`, `tab` or any single character
    #[arg(long, global = true)]
    pub delimiter: Option<String>,
    /// Comma-separated columns to one-hot encode
    #[arg(long, global = true, value_delimiter = ',')]
    pub categorical: Option<Vec<String>>,
    /// Seed for every random stream
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Validate configuration and inputs, then exit without computing
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[command(flatten)]
    pub pipeline: PipelineOverrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the ATT of a data file
    Estimate {
        #[arg(long)]
        data: PathBuf,
        /// m5c-mf, m5c-m, naive, strategy-1:1, strategy-1:k or strategy-k:k
        #[arg(long)]
        method: Option<String>,
    },
    /// Replicated bias study on synthetic data, or a bootstrap study over
    /// treated units of a data file
    Bench {
        #[arg(long, value_enum, default_value_t = Preset::Hyb20varDesk)]
        preset: Preset,
        #[arg(long, default_value_t = 30)]
        reps: usize,
        /// Comma-separated methods
        #[arg(long, value_delimiter = ',', default_value = "m5c-mf,naive")]
        methods: Vec<String>,
        /// Draw the binary-feature probabilities once for all replications
        #[arg(long)]
        fixed_p: bool,
        /// Bootstrap over the treated units of this file instead
        #[arg(long, requires = "treated_sample")]
        data: Option<PathBuf>,
        /// Treated units drawn per bootstrap replication
        #[arg(long, requires = "data")]
        treated_sample: Option<usize>,
    },
    /// Covariate balance before and after matching, from an estimate audit log
    Balance {
        #[arg(long)]
        data: PathBuf,
        /// audit.jsonl written by `estimate`
        #[arg(long)]
        audit: PathBuf,
    },
    /// Build the control model tree and export it
    Tree {
        #[command(subcommand)]
        action: TreeAction,
    },
    /// Write a synthetic dataset
    Gen {
        #[arg(long, value_enum, default_value_t = Preset::Hyb20varDesk)]
        preset: Preset,
        #[arg(long)]
        output: PathBuf,
        /// Override the number of treated units
        #[arg(long)]
        n_treated: Option<usize>,
        /// Override the number of controls
        #[arg(long)]
        n_control: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum TreeAction {
    /// Write tree.txt (one rule per leaf) and tree.json (nested)
    Export {
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 100 treated, 4,900 controls
    #[value(name = "hyb20var-desk")]
    Hyb20varDesk,
    /// 200 treated, 19,800 controls
    #[value(name = "hyb20var")]
    Hyb20var,
}

impl Preset {
    pub fn spec(self, seed: u64) -> DgpSpec {
        match self {
            Preset::Hyb20varDesk => DgpSpec::hyb20var_desk(seed),
            Preset::Hyb20var => DgpSpec::hyb20var(seed),
        }
    }
}

/// Flags merged over the config file merged over defaults.
#[derive(Debug, Clone)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub load: LoadOptions,
    pub method: Option<String>,
    pub seed: u64,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub dry_run: bool,
}

impl Settings {
    pub fn resolve(common: &CommonArgs) -> AppResult<Self> {
        let file = match &common.config {
            Some(p) => read_config(p)?,
            None => FileConfig::default(),
        };
        let pipeline = common.pipeline.apply(&file.pipeline)?;
        let pick = |flag: &Option<String>, file: &Option<String>, default: &str| {
            flag.clone().or_else(|| file.clone()).unwrap_or_else(|| default.to_string())
        };
        let mut load = LoadOptions::new(
            &pick(&common.treatment, &file.treatment, DEFAULT_TREATMENT),
            &pick(&common.outcome, &file.outcome, DEFAULT_OUTCOME),
        );
        let delim = pick(&common.delimiter, &file.delimiter, ",");
        load.delimiter = parse_delimiter(&delim).ok_or_else(|| AppError::Usage(format!("invalid delimiter `{delim}`")))?;
        load.categorical = common.categorical.clone().or(file.categorical).unwrap_or_default();
        Ok(Self {
            pipeline,
            load,
            method: file.method,
            seed: common.seed.or(file.seed).unwrap_or(0),
            threads: common.threads.or(file.threads).unwrap_or(0),
            out_dir: common.out.clone().or(file.out_dir).unwrap_or_else(|| DEFAULT_OUT_DIR.into()),
            dry_run: common.dry_run,
        })
    }
}

fn require_file(path: &Path) -> AppResult<()> {
    fs::metadata(path).map(|_| ()).map_err(|e| AppError::io(path, e))
}

fn create_dir(path: &Path) -> AppResult<()> {
    fs::create_dir_all(path).map_err(|e| AppError::io(path, e))
}

fn load_normalized(path: &Path, s: &Settings) -> AppResult<Dataset> {
    let d = load_dataset(path, &s.load)?;
    log::info!(
        "{}: {} rows, {} features, {} treated",
        path.display(),
        d.len(),
        d.feature_count(),
        d.treated_count()
    );
    Ok(d.normalize_min_max())
}

fn dry_run_report(command: &str, s: &Settings) {
    let body = serde_json::json!({
        "command": command,
        "valid": true,
        "pipeline": s.pipeline,
        "treatment": s.load.treatment,
        "outcome": s.load.outcome,
        "seed": s.seed,
        "threads": s.threads,
        "out_dir": s.out_dir,
    });
    println!("{}", serde_json::to_string_pretty(&body).expect("serializes"));
}

pub fn run(cli: Cli) -> AppResult<()> {
    let s = Settings::resolve(&cli.common)?;
    match cli.command {
        Command::Estimate { data, method } => {
            let method = parse_method(method.as_deref().or(s.method.as_deref()).unwrap_or("m5c-mf"))?;
            require_file(&data)?;
            if s.dry_run {
                dry_run_report("estimate", &s);
                return Ok(());
            }
            cmd_estimate(&data, method, &s)
        }
        Command::Bench {
            preset,
            reps,
            methods,
            fixed_p,
            data,
            treated_sample,
        } => {
            let methods = methods.iter().map(|m| parse_method(m)).collect::<AppResult<Vec<_>>>()?;
            if reps == 0 {
                return Err(AppError::Usage("--reps must be at least 1".into()));
            }
            if let Some(p) = &data {
                require_file(p)?;
            }
            if s.dry_run {
                dry_run_report("bench", &s);
                return Ok(());
            }
            create_dir(&s.out_dir)?;
            let result = match (data, treated_sample) {
                (Some(path), Some(k)) => {
                    let d = load_normalized(&path, &s)?;
                    run_bootstrap_study(&d, k, reps, &methods, &s.pipeline, s.seed, s.threads)?
                }
                _ => {
                    let mut spec = preset.spec(s.seed);
                    if fixed_p {
                        spec = fix_probabilities(&spec);
                    }
                    run_bias_study(&spec, &methods, reps, &s.pipeline, s.threads)?
                }
            };
            write_bench(&s.out_dir, &result)
        }
        Command::Balance { data, audit } => {
            require_file(&data)?;
            if !audit.exists() {
                return Err(AppError::AuditNotFound(audit));
            }
            if s.dry_run {
                dry_run_report("balance", &s);
                return Ok(());
            }
            cmd_balance(&data, &audit, &s)
        }
        Command::Tree {
            action: TreeAction::Export { data },
        } => {
            require_file(&data)?;
            if s.dry_run {
                dry_run_report("tree export", &s);
                return Ok(());
            }
            let d = load_normalized(&data, &s)?;
            let (control, _) = d.split_by_treatment();
            let tree = build_tree(&control, &s.pipeline.tree_params())?;
            for w in &tree.warnings {
                log::warn!("{w}");
            }
            create_dir(&s.out_dir)?;
            report::write_tree(&s.out_dir, &tree)?;
            print!("{}", tree.rules().join("\n") + "\n");
            Ok(())
        }
        Command::Gen {
            preset,
            output,
            n_treated,
            n_control,
        } => {
            let base = preset.spec(s.seed);
            let spec = base.clone().with_scale(n_treated.unwrap_or(base.n_treated), n_control.unwrap_or(base.n_control));
            spec.validate()?;
            if s.dry_run {
                dry_run_report("gen", &s);
                return Ok(());
            }
            let d = spec.generate()?;
            if let Some(dir) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
                create_dir(dir)?;
            }
            write_dataset(&d, &output, &s.load.treatment, &s.load.outcome, s.load.delimiter)?;
            log::info!("wrote {} rows to {}", d.len(), output.display());
            Ok(())
        }
    }
}

fn cmd_estimate(data: &Path, method: Method, s: &Settings) -> AppResult<()> {
    let start = Instant::now();
    let d = load_normalized(data, s)?;
    let est = estimate(&d, method, &s.pipeline, s.threads)?;
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    for w in &est.report.warnings {
        log::warn!("{w}");
    }
    create_dir(&s.out_dir)?;
    let input = InputSummary::new(&d, Some(report::file_sha256(data)?));
    let payload = EstimatePayload::new(input, &s.pipeline, &est.report, est.tree.as_ref());
    let written = report::write_report(
        &s.out_dir.join("report.json"),
        payload,
        Timing {
            elapsed_ms,
            threads: s.threads,
        },
    )?;
    let summary = report::summary_table(&est.report, est.tree.as_ref());
    fs::write(s.out_dir.join("summary.txt"), &summary).map_err(|e| AppError::io(&s.out_dir.join("summary.txt"), e))?;
    if let Some(tree) = &est.tree {
        report::write_tree(&s.out_dir, tree)?;
    }
    report::write_audit(&s.out_dir.join("audit.jsonl"), &est.report)?;
    print!("{summary}");
    log::info!("payload sha256 {}", written.payload_sha256);
    Ok(())
}

fn cmd_balance(data: &Path, audit: &Path, s: &Settings) -> AppResult<()> {
    let d = load_normalized(data, s)?;
    let mut matches = Vec::new();
    for line in report::read_audit(audit)? {
        if let AuditLine::Unit(u) = line {
            let bad = |row: usize| row >= d.len();
            if bad(u.treated) || !d.is_treated(u.treated) || u.matched.iter().any(|&c| bad(c) || d.is_treated(c)) {
                return Err(AppError::Format {
                    path: audit.to_path_buf(),
                    line: 0,
                    message: format!("unit {} does not match the rows of {}", u.treated, data.display()),
                });
            }
            if !u.matched.is_empty() {
                matches.push((u.treated, u.matched));
            }
        }
    }
    let pre = pre_match_balance(&d, s.pipeline.bins)?;
    let post = post_match_balance(&d, &matches, s.pipeline.bins)?;
    create_dir(&s.out_dir)?;
    report::write_balance(&s.out_dir, &pre, &post)?;
    print!("{}\n{}", report::balance_table(&pre), report::balance_table(&post));
    Ok(())
}

fn write_bench(dir: &Path, r: &BenchResult) -> AppResult<()> {
    r.write_csv(&dir.join("bench.csv"))?;
    r.write_summary_json(&dir.join("bench_summary.json"))?;
    for m in &r.summary {
        match &m.estimate {
            Some(e) => println!(
                "{:<14} mean {:.4}  95% CI [{:.4}, {:.4}]  failures {}",
                m.method, e.mean, e.low, e.high, m.failures
            ),
            None => println!("{:<14} no successful replications", m.method),
        }
    }
    Ok(())
}
