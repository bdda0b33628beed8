use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use neutrality_core::alignment::{parse_fasta, write_site_table};
use neutrality_core::inference::{analyze, AnalysisConfig, KMode, Sidedness, Theta0Mode, VarianceSource};
use neutrality_core::{Alignment, ModelSpec, NeutralityReport, StudySpec, T2Normalization, ThetaSquaredPlugin};

mod demo;

const EXIT_INPUT: u8 = 1;
const EXIT_UNDEFINED: u8 = 2;

#[derive(Parser)]
#[command(name = "neutrality-kit", version, about = "U-statistic test of selective neutrality for DNA alignments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Subcommand)]
enum Command {
    /// Run the neutrality test on a FASTA alignment.
    ///
    /// Exit status: 0 on success, 1 on input errors, 2 when the test is
    /// undefined (for example monomorphic data). The report is written in
    /// every case except 1.
    Analyze {
        /// Aligned FASTA file.
        input: PathBuf,
        /// Normalization of the reported T2 value: per-site-pair, per-pair or per-segregating.
        #[arg(long, default_value = "per-site-pair")]
        t2_mode: T2Normalization,
        /// Null value theta0: pooled, sitewise or value=<x>.
        #[arg(long, default_value = "pooled")]
        theta0_mode: Theta0Mode,
        /// Variance of T2: jackknife, or model=<spec.json> for the exact model variance.
        #[arg(long, default_value = "jackknife")]
        variance: String,
        /// Sites entering T2 and K: all or segregating.
        #[arg(long, default_value = "all")]
        k_mode: KMode,
        /// Alternative: left, right or two.
        #[arg(long, default_value = "two")]
        sided: Sidedness,
        /// Significance level recorded with the decision.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Bootstrap replicates for Tajima's D p-value (0 disables; otherwise at least 100).
        #[arg(long = "bootstrap-B", default_value_t = 0)]
        bootstrap_b: usize,
        /// Estimator of theta^2 in Var(D1).
        #[arg(long, value_enum, default_value = "unbiased")]
        theta_sq: ThetaSq,
        /// Random seed for the bootstrap.
        #[arg(long, env = "NEUTRALITY_KIT_SEED", default_value_t = 0)]
        seed: u64,
        /// Worker threads (0 = all cores). Results do not depend on it.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Write the report here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write the per-site classification table (TSV) to this path.
        #[arg(long)]
        site_table: Option<PathBuf>,
    },
    /// Run a Monte Carlo study described by a JSON config.
    Simulate {
        /// Study config (see the bundled files under configs/).
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long, env = "NEUTRALITY_KIT_SEED")]
        seed: Option<u64>,
        /// Worker threads (0 = all cores). Results do not depend on it.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Write the table here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Walk through the five-sequence worked example.
    Demo,
}

#[derive(Clone, Copy, ValueEnum)]
enum ThetaSq {
    Unbiased,
    Squared,
}

impl From<ThetaSq> for ThetaSquaredPlugin {
    fn from(t: ThetaSq) -> Self {
        match t {
            ThetaSq::Unbiased => ThetaSquaredPlugin::Unbiased,
            ThetaSq::Squared => ThetaSquaredPlugin::Squared,
        }
    }
}

#[derive(Serialize)]
struct ToolInfo {
    name: &'static str,
    version: &'static str,
}

const TOOL: ToolInfo = ToolInfo {
    name: env!("CARGO_PKG_NAME"),
    version: env!("CARGO_PKG_VERSION"),
};

#[derive(Serialize)]
struct AnalyzeOutput<'a> {
    tool: ToolInfo,
    input_path: String,
    #[serde(flatten)]
    report: &'a NeutralityReport,
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    tool: ToolInfo,
    config: &'a StudySpec,
    result: neutrality_core::StudyOutput,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Demo => demo::run(&mut io::stdout().lock()).map(|_| 0).map_err(Into::into),
        Command::Analyze {
            input,
            t2_mode,
            theta0_mode,
            variance,
            k_mode,
            sided,
            alpha,
            bootstrap_b,
            theta_sq,
            seed,
            threads,
            format,
            output,
            site_table,
        } => parse_variance(&variance).and_then(|variance| {
            let config = AnalysisConfig {
                t2_mode,
                theta0_mode,
                variance,
                k_mode,
                sided,
                alpha,
                bootstrap_replicates: bootstrap_b,
                seed,
                theta_squared: theta_sq.into(),
            };
            with_threads(threads, || {
                cmd_analyze(&input, &config, format, output.as_deref(), site_table.as_deref())
            })
        }),
        Command::Simulate {
            config,
            seed,
            threads,
            format,
            output,
        } => with_threads(threads, || cmd_simulate(&config, seed, format, output.as_deref())),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn with_threads<T>(threads: usize, f: impl FnOnce() -> anyhow::Result<T> + Send) -> anyhow::Result<T>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building thread pool")?;
    pool.install(f)
}

fn parse_variance(arg: &str) -> anyhow::Result<VarianceSource> {
    if arg == "jackknife" {
        return Ok(VarianceSource::Jackknife);
    }
    let path = arg
        .strip_prefix("model=")
        .ok_or_else(|| anyhow!("--variance must be jackknife or model=<spec.json>, got '{arg}'"))?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model spec {path}"))?;
    let spec = ModelSpec::from_json(&text).with_context(|| format!("in model spec {path}"))?;
    Ok(VarianceSource::Model { spec })
}

fn read_alignment(path: &Path) -> anyhow::Result<Alignment> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    parse_fasta(BufReader::new(file)).with_context(|| format!("in {}", path.display()))
}

fn emit(text: &str, output: Option<&Path>) -> anyhow::Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_analyze(
    input: &Path,
    config: &AnalysisConfig,
    format: Format,
    output: Option<&Path>,
    site_table: Option<&Path>,
) -> anyhow::Result<u8> {
    config.validate()?;
    let alignment = read_alignment(input)?;
    let report = analyze(&alignment, config)?;
    if let Some(path) = site_table {
        let f = File::create(path).with_context(|| format!("writing {}", path.display()))?;
        write_site_table(&alignment, io::BufWriter::new(f))?;
    }
    let text = match format {
        Format::Json => {
            let out = AnalyzeOutput {
                tool: TOOL,
                input_path: input.display().to_string(),
                report: &report,
            };
            serde_json::to_string_pretty(&out)? + "\n"
        }
        Format::Tsv => format!("{}\n{}\n", NeutralityReport::TSV_HEADER, report.tsv_line()),
    };
    emit(&text, output)?;
    if let neutrality_core::inference::Outcome::Undefined { undefined } = &report.test {
        eprintln!("test undefined: {undefined}");
        return Ok(EXIT_UNDEFINED);
    }
    Ok(0)
}

fn cmd_simulate(config: &Path, seed: Option<u64>, format: Format, output: Option<&Path>) -> anyhow::Result<u8> {
    let text = std::fs::read_to_string(config).with_context(|| format!("cannot open {}", config.display()))?;
    let mut spec = StudySpec::from_json(&text).with_context(|| format!("in {}", config.display()))?;
    if let Some(s) = seed {
        spec = spec.with_seed(s);
    }
    let result = spec.run()?;
    let text = match format {
        Format::Json => {
            serde_json::to_string_pretty(&SimulateOutput {
                tool: TOOL,
                config: &spec,
                result,
            })? + "\n"
        }
        Format::Tsv => result.to_tsv(),
    };
    emit(&text, output)?;
    Ok(0)
}
