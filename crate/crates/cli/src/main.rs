//! `rad`: sample mixtures, inject domain noise, fit, tune and sweep from the shell.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use rad_core::augment::Method;
use rad_core::harness::config::Hyper;
use rad_core::harness::io::{load_embeddings, save_embeddings};
use rad_core::harness::report::{curves_csv, read_records, summary_csv, write_report};
use rad_core::harness::tune::fit_point;
use rad_core::harness::{
    prepare_data, read_structured, summarize, sweep, tune_prepared, ExperimentConfig, Standardizer,
};
use rad_core::metrics::per_group_accuracy;
use rad_core::noise::inject;
use rad_core::synthgen::sample;
use rad_core::theory::theory_curve;
use rad_core::{Error, MixtureSpec, NoiseModel, Result, RngSeed, Stream};

#[derive(Parser)]
#[command(
    name = "rad",
    version,
    about = "Worst-group retraining experiments on labeled embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a Gaussian mixture into an embedding CSV.
    Synth {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Flip domain labels with probability p.
    Inject {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one method at one grid point and print the model as JSON.
    Train {
        #[arg(long)]
        input: PathBuf,
        /// Report group accuracies on this CSV as well.
        #[arg(long)]
        eval: Option<PathBuf>,
        #[arg(long, default_value = "llr")]
        method: Method,
        /// Inverse penalty strength of the final fit.
        #[arg(long)]
        c: Option<f64>,
        /// Inverse penalty strength of the identification model (rad-uw).
        #[arg(long)]
        c_id: Option<f64>,
        /// Upweight factor for pseudo-minority samples (rad-uw).
        #[arg(long)]
        upweight: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// z-score features with training statistics.
        #[arg(long)]
        standardize: bool,
        /// Also write the JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tune the configured methods on the clean holdout and print the choices.
    Tune {
        #[arg(long)]
        config: PathBuf,
        /// Restrict to these methods.
        #[arg(long, value_delimiter = ',')]
        method: Vec<Method>,
        /// Restrict to these noise levels.
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
    },
    /// Run a full sweep and write records.jsonl, summary.csv and curves.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form worst-group accuracy against the noise level, as CSV.
    Theory {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0,0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5"
        )]
        p_grid: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild summary.csv and curves.csv from a records file.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct SpecArgs {
    /// Mixture spec file (TOML or JSON).
    #[arg(long, conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// Built-in mixture.
    #[arg(long, value_parser = ["spurious-2d"])]
    preset: Option<String>,
    /// Override the minority prior.
    #[arg(long)]
    pi0: Option<f64>,
}

impl SpecArgs {
    fn load(&self) -> Result<MixtureSpec> {
        let spec = match &self.spec {
            Some(path) => read_structured(path)?,
            None => MixtureSpec::spurious_2d(),
        };
        let spec = match self.pi0 {
            Some(pi0) => spec.with_pi0(pi0),
            None => spec,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

/// Prints to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn group_names(meta: Option<rad_core::harness::EmbeddingMeta>) -> Vec<String> {
    meta.map(|m| m.group_names).unwrap_or_default()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { spec, n, seed, out } => {
            let data = sample(&spec.load()?, n, RngSeed::new(seed, Stream::Data))?;
            save_embeddings(&data, &out, &[])
        }
        Command::Inject {
            input,
            p,
            seed,
            out,
        } => {
            let (data, meta) = load_embeddings(&input)?;
            let noisy = inject(
                &data,
                NoiseModel::new(p, data.num_domains())?,
                RngSeed::new(seed, Stream::Noise),
            )?;
            save_embeddings(&noisy, &out, &group_names(meta))
        }
        Command::Train {
            input,
            eval,
            method,
            c,
            c_id,
            upweight,
            seed,
            standardize,
            out,
        } => {
            let (data, _) = load_embeddings(&input)?;
            let cfg = ExperimentConfig {
                standardize,
                ..ExperimentConfig::default()
            };
            let hyper = Hyper {
                lambda: Some(c.unwrap_or(1.0)),
                lambda_id: Some(c_id.unwrap_or(1.0)),
                upweight: Some(upweight.unwrap_or(1.0)),
            };
            let scaler = if standardize {
                Some(Standardizer::fit(&data)?)
            } else {
                None
            };
            let train = match &scaler {
                Some(s) => s.apply(&data)?,
                None => data.clone(),
            };
            let fitted = fit_point(
                &cfg,
                method,
                &hyper,
                &train,
                RngSeed::new(seed, Stream::Downsample),
            )?;
            let model = match &scaler {
                Some(s) => s.unstandardize(&fitted.model)?,
                None => fitted.model,
            };
            let train_acc = per_group_accuracy(&model, &data)?;
            let eval_acc = match eval {
                Some(path) => Some(per_group_accuracy(&model, &load_embeddings(&path)?.0)?),
                None => None,
            };
            let json = to_json(&serde_json::json!({
                "method": method,
                "hyper": hyper,
                "model": model,
                "diagnostics": fitted.diagnostics,
                "flags": fitted.flags,
                "minority_count": fitted.minority_count,
                "train_wga": train_acc.worst(),
                "train_accuracy": train_acc,
                "eval_wga": eval_acc.as_ref().and_then(|a| a.worst()),
                "eval_accuracy": eval_acc,
            }));
            emit(&format!("{json}\n"));
            match out {
                Some(path) => write_file(&path, &json),
                None => Ok(()),
            }
        }
        Command::Tune { config, method, p } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if !method.is_empty() {
                cfg.methods = method;
            }
            if !p.is_empty() {
                cfg.noise_levels = p;
            }
            let (tuning, warnings) = tune_prepared(&cfg, &prepare_data(&cfg)?)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            emit(&format!(
                "{}\n",
                to_json(&serde_json::json!({ "tuning": tuning, "warnings": warnings }))
            ));
            Ok(())
        }
        Command::Sweep { config, out } => {
            let output = sweep(&ExperimentConfig::from_file(&config)?)?;
            for w in &output.warnings {
                eprintln!("warning: {w}");
            }
            let files = write_report(&output, &out)?;
            write_file(&out.join("tuning.json"), &to_json(&output.tuning))?;
            eprintln!("wrote {}", files.records.display());
            Ok(())
        }
        Command::Theory { spec, p_grid, out } => {
            let spec = spec.load()?;
            let mut csv = String::from(
                "p,pi0,pi_noisy,pi_ds,c_tilde,wga_erm,wga_ds,wga_uw,minority_acc,majority_acc\n",
            );
            for t in theory_curve(&spec, &p_grid)? {
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},{}",
                    t.p,
                    t.pi0,
                    t.pi_noisy,
                    t.pi_ds,
                    t.c_tilde,
                    t.wga_erm,
                    t.wga_ds,
                    t.wga_uw,
                    t.minority_acc,
                    t.majority_acc
                )
                .expect("string write");
            }
            match out {
                Some(path) => write_file(&path, &csv),
                None => {
                    emit(&csv);
                    Ok(())
                }
            }
        }
        Command::Report { records, out } => {
            let records = read_records(&records)?;
            if records.is_empty() {
                return Err(Error::EmptyDataset("no records to report".into()));
            }
            let summary = summarize(&records);
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_file(&out.join("summary.csv"), &summary_csv(&summary))?;
            write_file(&out.join("curves.csv"), &curves_csv(&summary, None))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
