//! The `motionleak` command line. Each subcommand maps to one library entry
//! point and returns a process exit code.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::dataset::{binarize, AttributeSpec, SurveyTable};
use crate::experiment::{
    null_baseline, read_results, render_report, run_experiment, write_reports, ExperimentConfig, ExperimentError,
    NullOutcome, Preset, NULL_FILE,
};
use crate::stats::pairwise_r2;
use crate::synth::{generate_cohort, CohortSpec, RecordingFormat, SynthError};
use crate::telemetry::{parse_bsor, read_canonical, write_bsor, write_canonical, TelemetryError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
/// Invalid input: unparsable recordings, invalid configs or specs.
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "motionleak", version, about = "Attribute inference from VR motion telemetry")]
pub struct Cli {
    /// Overrides the seed of the config or spec.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the model/protocol preset of an experiment.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    /// Worker threads for training jobs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert recordings between BSOR and the canonical text format.
    Convert {
        /// A recording file or a directory of them.
        input: PathBuf,
        /// Output file, or output directory when the input is a directory.
        output: PathBuf,
        #[arg(long, value_enum, default_value = "bsor")]
        from: RecordingFormat,
        #[arg(long, value_enum, default_value = "canonical")]
        to: RecordingFormat,
        /// Continue past files that fail to parse.
        #[arg(long)]
        keep_going: bool,
    },
    /// Materialize a synthetic cohort from a spec file.
    Synth {
        spec: PathBuf,
        /// Output directory (or use --out).
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "canonical")]
        format: RecordingFormat,
    },
    /// Train and evaluate every attribute × fold of an experiment config.
    Run { config: PathBuf },
    /// Evaluate a finished run's models on fictitious input and test macro significance.
    Null { results: PathBuf },
    /// Pairwise R² between binarized attributes.
    Corr {
        survey: PathBuf,
        /// Attribute spec files or directories.
        #[arg(required = true)]
        attributes: Vec<PathBuf>,
    },
    /// Re-render the reports of a finished run and print the text table.
    Report { results: PathBuf },
}

pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Convert {
            input,
            output,
            from,
            to,
            keep_going,
        } => return cmd_convert(input, output, *from, *to, *keep_going),
        Command::Synth { spec, output, format } => cmd_synth(spec, output.as_deref().or(cli.out.as_deref()), *format, cli.seed),
        Command::Run { config } => cmd_run(config, &cli),
        Command::Null { results } => cmd_null(results, cli.seed.unwrap_or(0)),
        Command::Corr { survey, attributes } => cmd_corr(survey, attributes, cli.out.as_deref()),
        Command::Report { results } => cmd_report(results),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> i32 {
    if let Some(e) = e.downcast_ref::<ExperimentError>() {
        return match e {
            ExperimentError::Io { .. } => EXIT_IO,
            ExperimentError::InvalidConfig(_) | ExperimentError::Format(_) | ExperimentError::Dataset(_) => EXIT_INVALID,
            ExperimentError::Synth(SynthError::InvalidSpec(_)) => EXIT_INVALID,
            _ => EXIT_FAILED,
        };
    }
    if let Some(e) = e.downcast_ref::<SynthError>() {
        return match e {
            SynthError::Io(_) => EXIT_IO,
            SynthError::InvalidSpec(_) | SynthError::InvalidProfile(_) => EXIT_INVALID,
            _ => EXIT_FAILED,
        };
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return EXIT_IO;
    }
    if e.downcast_ref::<crate::dataset::DatasetError>().is_some() {
        return EXIT_INVALID;
    }
    EXIT_FAILED
}

fn decode(bytes: &[u8], format: RecordingFormat) -> Result<crate::telemetry::Recording, TelemetryError> {
    match format {
        RecordingFormat::Bsor => parse_bsor(bytes),
        RecordingFormat::Canonical => read_canonical(bytes),
    }
}

fn encode(rec: &crate::telemetry::Recording, format: RecordingFormat) -> Result<Vec<u8>, TelemetryError> {
    match format {
        RecordingFormat::Bsor => write_bsor(rec),
        RecordingFormat::Canonical => write_canonical(rec),
    }
}

enum ConvertFailure {
    Parse(String),
    Io(String),
}

fn convert_file(input: &Path, output: &Path, from: RecordingFormat, to: RecordingFormat) -> Result<(), ConvertFailure> {
    let bytes = std::fs::read(input).map_err(|e| ConvertFailure::Io(format!("{}: {e}", input.display())))?;
    let rec = decode(&bytes, from).map_err(|e| ConvertFailure::Parse(format!("{}: {e}", input.display())))?;
    let out = encode(&rec, to).map_err(|e| ConvertFailure::Parse(format!("{}: {e}", input.display())))?;
    let tmp = output.with_extension(format!("{}.partial", to.extension()));
    std::fs::write(&tmp, &out)
        .and_then(|_| std::fs::rename(&tmp, output))
        .map_err(|e| {
            let _ = std::fs::remove_file(&tmp);
            ConvertFailure::Io(format!("{}: {e}", output.display()))
        })
}

/// Converts one file, or every `*.{ext}` file of a directory in name order.
/// Exit 2 if any file failed to parse, 3 on I/O errors (which take precedence).
pub fn cmd_convert(input: &Path, output: &Path, from: RecordingFormat, to: RecordingFormat, keep_going: bool) -> i32 {
    let pairs: Vec<(PathBuf, PathBuf)> = if input.is_dir() {
        let mut files: Vec<PathBuf> = match std::fs::read_dir(input) {
            Ok(entries) => entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == from.extension()))
                .collect(),
            Err(e) => {
                eprintln!("error: {}: {e}", input.display());
                return EXIT_IO;
            }
        };
        files.sort();
        if let Err(e) = std::fs::create_dir_all(output) {
            eprintln!("error: {}: {e}", output.display());
            return EXIT_IO;
        }
        files
            .into_iter()
            .map(|f| {
                let name = Path::new(f.file_stem().expect("file has a name")).with_extension(to.extension());
                (f, output.join(name))
            })
            .collect()
    } else if input.is_file() {
        vec![(input.to_path_buf(), output.to_path_buf())]
    } else {
        eprintln!("error: {} does not exist", input.display());
        return EXIT_IO;
    };

    let (mut parse_errors, mut io_errors, mut converted) = (0usize, 0usize, 0usize);
    for (src, dst) in &pairs {
        match convert_file(src, dst, from, to) {
            Ok(()) => converted += 1,
            Err(failure) => {
                match failure {
                    ConvertFailure::Parse(m) => {
                        parse_errors += 1;
                        eprintln!("parse error: {m}");
                    }
                    ConvertFailure::Io(m) => {
                        io_errors += 1;
                        eprintln!("I/O error: {m}");
                    }
                }
                if !keep_going {
                    break;
                }
            }
        }
    }
    println!("converted {converted} of {} file(s)", pairs.len());
    if io_errors > 0 {
        EXIT_IO
    } else if parse_errors > 0 {
        EXIT_INVALID
    } else {
        EXIT_OK
    }
}

pub fn cmd_synth(spec: &Path, output: Option<&Path>, format: RecordingFormat, seed: Option<u64>) -> anyhow::Result<i32> {
    let Some(output) = output else {
        anyhow::bail!(SynthError::InvalidSpec("no output directory given".into()));
    };
    let mut spec = CohortSpec::from_path(spec)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let cohort = generate_cohort(&spec)?;
    cohort.write_dir(output, format)?;
    println!(
        "cohort: {} users, {} recordings, {} attribute(s) -> {}",
        cohort.users.len(),
        cohort.manifest.entries().len(),
        cohort.attributes.len(),
        output.display()
    );
    println!("manifest: {}", output.join("manifest.csv").display());
    Ok(EXIT_OK)
}

pub fn cmd_run(config: &Path, cli: &Cli) -> anyhow::Result<i32> {
    let mut cfg = ExperimentConfig::from_path(config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(preset) = cli.preset {
        cfg.preset = preset;
    }
    let base = config.parent().unwrap_or(Path::new("."));
    let exp = cfg.resolve(base)?;
    let out = cli.out.clone().unwrap_or_else(|| base.join("results"));
    let jobs = cli.jobs.or(cfg.jobs).unwrap_or_else(rayon::current_num_threads);
    let summary = run_experiment(&exp, &out, jobs)?;
    print!("{}", render_report(&summary.results, None));
    println!(
        "{} job(s) trained, {} resumed; results in {}",
        summary.trained,
        summary.resumed,
        out.display()
    );
    Ok(if summary.all_ok() { EXIT_OK } else { EXIT_FAILED })
}

pub fn cmd_null(results: &Path, seed: u64) -> anyhow::Result<i32> {
    let outcome = null_baseline(results, seed)?;
    print!("{}", outcome.render());
    Ok(EXIT_OK)
}

pub fn cmd_corr(survey: &Path, attributes: &[PathBuf], out: Option<&Path>) -> anyhow::Result<i32> {
    let table = SurveyTable::from_path(survey)?;
    let mut specs = Vec::new();
    for p in attributes {
        if p.is_dir() {
            specs.extend(AttributeSpec::load_dir(p)?);
        } else {
            specs.push(AttributeSpec::from_path(p)?);
        }
    }
    let mut labels = BTreeMap::new();
    for spec in &specs {
        let per_user = binarize(&table, spec)?
            .into_iter()
            .filter_map(|(u, b)| b.label().map(|l| (u, l)))
            .collect::<BTreeMap<_, _>>();
        labels.insert(spec.name.clone(), per_user);
    }
    let m = pairwise_r2(&labels);
    let out = out.unwrap_or(Path::new("."));
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("r2.tsv"), m.to_tsv())?;
    std::fs::write(out.join("r2_long.tsv"), m.to_long_tsv())?;
    print!("{}", m.to_tsv());
    for (a, b) in m.degenerate_pairs() {
        eprintln!("degenerate: {a} x {b} (a column has one class only or no shared users)");
    }
    Ok(EXIT_OK)
}

pub fn cmd_report(results: &Path) -> anyhow::Result<i32> {
    let r = read_results(results)?;
    let null_path = results.join(NULL_FILE);
    let null: Option<NullOutcome> = if null_path.exists() {
        Some(serde_json::from_str(&std::fs::read_to_string(&null_path)?)?)
    } else {
        None
    };
    write_reports(results, &r, null.as_ref())?;
    print!("{}", render_report(&r, null.as_ref()));
    Ok(if r.attributes.iter().all(|a| a.ok) { EXIT_OK } else { EXIT_FAILED })
}
