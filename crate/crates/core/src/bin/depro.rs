use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use depro::data::{generate, load_csv, CsvSchema};
use depro::harness::{decorr_study, evaluate, RunConfig, SweepAxis};
use depro::model::DeproModel;
use depro::netcore::ParamSet;
use depro::{Error, Result};

#[derive(Parser)]
#[command(
    name = "depro",
    version,
    about = "Feature decorrelation and purification experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat JSON run config; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Config overrides as `--key value` pairs, e.g. `--alpha 0.001 --seeds 0,1`.
    #[arg(
        trailing_var_arg = true,
        allow_hyphen_values = true,
        value_name = "OVERRIDES"
    )]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write train/dev/ood CSV files for the configured task.
    GenerateData(Common),
    /// Train every configured seed.
    Train(Common),
    /// Score a saved model on a CSV dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Number of label classes in the CSV.
        #[arg(long, default_value_t = 2)]
        num_classes: usize,
    },
    /// Train once per swept value and seed.
    Sweep {
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Reweighted run against a frozen-weight control.
    DecorrStudy(Common),
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        base.with_overrides(parse_pairs(&self.overrides)?)
    }
}

fn parse_pairs(raw: &[String]) -> Result<Vec<(&str, &str)>> {
    if !raw.len().is_multiple_of(2) {
        return Err(Error::Config(
            "overrides must be `--key value` pairs".into(),
        ));
    }
    raw.chunks(2)
        .map(|p| match p[0].strip_prefix("--") {
            Some(k) => Ok((k, p[1].as_str())),
            None => Err(Error::Config(format!("expected `--key`, got `{}`", p[0]))),
        })
        .collect()
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenerateData(c) => {
            let cfg = c.resolve()?;
            let splits = generate(&cfg.task_spec())?;
            std::fs::create_dir_all(&c.out)?;
            splits.train.write_csv(&c.out.join("train.csv"))?;
            splits.dev.write_csv(&c.out.join("dev.csv"))?;
            splits.ood.write_csv(&c.out.join("ood.csv"))?;
            println!(
                "wrote {} train, {} dev, {} ood rows to {}",
                splits.train.len(),
                splits.dev.len(),
                splits.ood.len(),
                c.out.display()
            );
            Ok(true)
        }
        Command::Train(c) => {
            let cfg = c.resolve()?;
            let report = depro::harness::train(&cfg)?;
            report.write_outputs(&c.out)?;
            for r in &report.runs {
                println!("seed {}: dev {:.4} ood {:.4}", r.seed, r.dev_acc, r.ood_acc);
            }
            for f in &report.failures {
                eprintln!("seed {} failed: {}", f.seed, f.error);
            }
            let (d, o) = (report.dev_summary(), report.ood_summary());
            println!(
                "mean: dev {:.4} ± {:.4}, ood {:.4} ± {:.4}",
                d.mean, d.stdev, o.mean, o.stdev
            );
            Ok(report.all_succeeded())
        }
        Command::Eval {
            checkpoint,
            data,
            num_classes,
        } => {
            let model = DeproModel::from_params(ParamSet::load(&checkpoint)?)?;
            let schema = CsvSchema {
                kslots: model.config.kslots,
                num_classes,
                vocab: Some(model.config.vocab),
                first_id: 0,
            };
            let ds = load_csv(&data, &schema)?;
            println!("{:.6}", evaluate(&model, &ds)?);
            Ok(true)
        }
        Command::Sweep {
            axis,
            values,
            common,
        } => {
            let cfg = common.resolve()?;
            let table = depro::harness::sweep(&cfg, axis, &values)?;
            let mut out = create(&common.out, "sweep.csv")?;
            table.write_csv(&mut out)?;
            out.flush()?;
            for (v, acc) in table.mean_ood_by_value() {
                println!("{} = {v}: mean ood {acc:.4}", axis.key());
            }
            Ok(table.failed() == 0)
        }
        Command::DecorrStudy(c) => {
            let cfg = c.resolve()?;
            let study = decorr_study(&cfg)?;
            let mut pairs = create(&c.out, "pairs.csv")?;
            study.write_pairs_csv(&mut pairs)?;
            pairs.flush()?;
            let mut curve = create(&c.out, "decorr_curve.csv")?;
            study.write_curve_csv(&mut curve)?;
            curve.flush()?;
            study.reweighted.write_outputs(&c.out.join("reweighted"))?;
            study.control.write_outputs(&c.out.join("control"))?;
            let (r, k) = (study.reweighted_summary(), study.control_summary());
            println!(
                "reweighted: {:.6} -> {:.6} (ratio {:.3})",
                r.first_epoch, r.final_epoch, r.ratio
            );
            println!(
                "control:    {:.6} -> {:.6} (ratio {:.3})",
                k.first_epoch, k.final_epoch, k.ratio
            );
            Ok(study.reweighted.all_succeeded() && study.control.all_succeeded())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
