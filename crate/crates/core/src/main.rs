use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use clsurrogate::datasets::{generate_synthetic, write_csv, SyntheticSpec};
use clsurrogate::harness::{
    demo_forgetting_in, export_results, load_report, run_benchmark_in, summarize_ranks,
    BenchmarkConfig, SummaryRow, RECORDS_FILE,
};
use clsurrogate::{CoreError, Result};

#[derive(Parser)]
#[command(
    name = "clsurrogate",
    version,
    about = "Continual-learning benchmarks for regression surrogates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic regression dataset to CSV.
    GenData {
        #[arg(long, default_value_t = 2000)]
        n_samples: usize,
        #[arg(long, default_value_t = 8)]
        feature_dim: usize,
        #[arg(long, default_value_t = 3)]
        n_categories: usize,
        #[arg(long, default_value_t = 0.005)]
        noise_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark and write runs.jsonl and summary.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Run one job at a time regardless of the configured parallelism.
        #[arg(long)]
        sequential: bool,
    },
    /// Train Naive on a bin-incremental stream and dump per-bin predictions.
    DemoForgetting {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to demo.json in the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean ranks of strategies across benchmark record files.
    Rank {
        /// runs.jsonl files or directories containing one.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path) -> Result<(BenchmarkConfig, PathBuf)> {
    let config = BenchmarkConfig::from_file(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((config, base))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CoreError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| CoreError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|e| CoreError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenData {
            n_samples,
            feature_dim,
            n_categories,
            noise_std,
            seed,
            out,
        } => {
            let spec = SyntheticSpec {
                n_samples,
                feature_dim,
                n_categories,
                noise_std,
                seed,
            };
            let data = generate_synthetic(&spec)?;
            let schema = write_csv(&data, &out)?;
            println!(
                "wrote {} samples to {} (features: {})",
                data.len(),
                out.display(),
                schema.feature_columns.join(",")
            );
        }
        Command::Run {
            config,
            output_dir,
            sequential,
        } => {
            let (mut cfg, base) = load_config(&config)?;
            if sequential {
                cfg.parallelism = 1;
            }
            let dir = output_dir.unwrap_or_else(|| base.join(&cfg.output_dir));
            let report = run_benchmark_in(&cfg, &base)?;
            let (records, summary) = export_results(&report, &dir)?;
            println!(
                "{:<8} {:>14} {:>12} {:>10} {:>12}",
                "strategy", "final_mpe", "mpe_std", "best_fr", "runtime_s"
            );
            for (row, s) in SummaryRow::of(&report).iter().zip(&report.summaries) {
                println!(
                    "{:<8} {:>14} {:>12} {:>10} {:>12.3}{}",
                    row.strategy.as_str(),
                    fmt_opt(row.final_mpe_mean),
                    fmt_opt(row.final_mpe_std),
                    fmt_opt(row.best_fr),
                    row.runtime_mean_s,
                    if s.degraded {
                        format!("  degraded ({} failed)", s.n_failed)
                    } else {
                        String::new()
                    }
                );
            }
            println!(
                "records: {}\nsummary: {}",
                records.display(),
                summary.display()
            );
        }
        Command::DemoForgetting { config, out } => {
            let (cfg, base) = load_config(&config)?;
            let out = out.unwrap_or_else(|| base.join(&cfg.output_dir).join("demo.json"));
            let demo = demo_forgetting_in(&cfg, &base)?;
            for t in &demo.trials {
                let errors: Vec<String> = t
                    .bins
                    .iter()
                    .map(|b| format!("{:.2}", b.percent_error))
                    .collect();
                println!(
                    "seed {:>4}: percent error per bin [{}], first/last {:.2}, late-bin share {:.3}",
                    t.seed,
                    errors.join(", "),
                    t.error_ratio,
                    t.late_fraction
                );
            }
            println!(
                "median first/last ratio {:.2}, median late-bin share {:.3}",
                demo.median_error_ratio, demo.median_late_fraction
            );
            write_json(&demo, &out)?;
            println!("demo report: {}", out.display());
        }
        Command::Rank { reports, out } => {
            let loaded = reports
                .iter()
                .map(|p| {
                    load_report(if p.is_dir() {
                        p.join(RECORDS_FILE)
                    } else {
                        p.clone()
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let table = summarize_ranks(&loaded)?;
            print!("{table}");
            if let Some(out) = out {
                write_json(&table, &out)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
