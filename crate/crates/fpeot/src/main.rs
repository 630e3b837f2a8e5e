//! Command line: `run`, `gaussian-check`, `trajectories` and `table`.
//!
//! Exit status is 0 on success, 2 for an invalid configuration, 3 when a
//! suite exceeds its failure budget and 1 for any other error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fpeot::harness::{self, table_csv, table_markdown, table_rows, Progress};
use fpeot::{io, ExperimentConfig, Family, GaussianCheck, HarnessError, Preset, Result, SuiteSummary};
use fpeot_core::GaussianSpec;
use nalgebra::DMatrix;

#[derive(Parser)]
#[command(name = "fpeot", version, about = "Probability-flow encoder versus optimal transport experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over a suite of random densities.
    Run(ConfigArgs),
    /// Compare the pipeline with the closed-form Gaussian solution.
    GaussianCheck {
        #[command(flatten)]
        config: ConfigArgs,
        /// Initial mean, comma separated. Defaults to (1, 0, …).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        mean: Option<Vec<f64>>,
        /// Initial covariance, row-major and comma separated. Defaults to
        /// diag(2, 0.5, 1, …).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        cov: Option<Vec<f64>>,
    },
    /// Write flow paths and their straightness for one density.
    Trajectories {
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of paths to dump.
        #[arg(long, default_value_t = 20)]
        paths: usize,
        /// Density index within the suite.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Reuse a trajectory directory written by `--save-snapshots`
        /// instead of solving again.
        #[arg(long)]
        from: Option<PathBuf>,
        /// Also store the density snapshots under `<out>/trajectory`.
        #[arg(long)]
        save_snapshots: bool,
    },
    /// Aggregate suite summaries into a table.
    Table {
        /// `summary.json` files.
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = TableFormat::Markdown)]
        format: TableFormat,
        /// Write to this file instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Markdown,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    dim: Option<usize>,
    /// Chebyshev nodes per dimension.
    #[arg(long)]
    grid: Option<usize>,
    /// Time steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Box as `lo,hi`.
    #[arg(long = "box", value_name = "LO,HI", value_parser = parse_box, allow_hyphen_values = true)]
    bounds: Option<[f64; 2]>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    densities: Option<usize>,
    #[arg(long, value_enum)]
    family: Option<Family>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = self.preset {
            p.apply(&mut c);
        }
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = self.$field.clone() { c.$target = v; })*
            };
        }
        set!(dim => dim, grid => grid, steps => steps, t_max => t_max, samples => samples,
             densities => densities, family => family, seed => seed, workers => workers, out => out);
        if let Some(b) = self.bounds {
            c.bounds = b;
        }
        c.validate()?;
        Ok(c)
    }
}

fn default_gaussian(d: usize, mean: Option<Vec<f64>>, cov: Option<Vec<f64>>) -> Result<GaussianSpec> {
    let mean = mean.unwrap_or_else(|| (0..d).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect());
    let cov = match cov {
        Some(v) if v.len() == d * d => DMatrix::from_row_slice(d, d, &v),
        Some(v) => return Err(HarnessError::Config(format!("{} covariance entries for dim {d}", v.len()))),
        None => DMatrix::from_fn(d, d, |i, j| match (i == j, i) {
            (true, 0) => 2.0,
            (true, 1) => 0.5,
            (true, _) => 1.0,
            _ => 0.0,
        }),
    };
    if mean.len() != d {
        return Err(HarnessError::Config(format!("{}-d mean for dim {d}", mean.len())));
    }
    GaussianSpec::new(mean, cov).map_err(|e| HarnessError::Config(e.to_string()))
}

fn parse_box(s: &str) -> std::result::Result<[f64; 2], String> {
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    match v[..] {
        [lo, hi] => Ok([lo, hi]),
        _ => Err(format!("expected `lo,hi`, got {} values", v.len())),
    }
}

fn print_summary(s: &SuiteSummary) {
    let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.3e}"));
    println!(
        "{} d={} N={} M={}: {}/{} completed, max eps_rel {}, median {}, mean {:.1} s per density",
        s.config.family.name(),
        s.config.dim,
        s.config.grid,
        s.config.steps,
        s.completed,
        s.config.densities,
        fmt(s.max_epsilon_rel),
        fmt(s.median_epsilon_rel),
        s.mean_total_s
    );
}

fn print_check(c: &GaussianCheck) {
    println!("max density L2 error   {:.3e}", c.max_density_l2);
    println!("max map error          {:.3e}", c.max_map_error);
    println!("max limit-map error    {:.3e} (finite-horizon gap {:.3e})", c.max_limit_error, c.limit_gap);
    println!("eps_rel                {:.3e}", c.transport.epsilon_rel);
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = args.resolve()?;
            let result = harness::run_suite_with(&config, |p| match p {
                Progress::Done(r) => eprintln!(
                    "density {:>4}: eps_rel {:.3e}  identity {:.3}  {:.1} s",
                    r.index, r.transport.epsilon_rel, r.transport.identity_fraction, r.transport.timings.total_s
                ),
                Progress::Failed(f) => eprintln!("density {:>4}: failed: {}", f.index, f.error),
            });
            match &result {
                Ok(s) => print_summary(s),
                Err(HarnessError::SuiteFailed { .. }) => {
                    if let Ok(s) = io::read_json::<SuiteSummary>(&config.out.join(io::SUMMARY)) {
                        print_summary(&s);
                    }
                }
                Err(_) => {}
            }
            result.map(|_| ())
        }
        Command::GaussianCheck { config, mean, cov } => {
            let config = config.resolve()?;
            let spec = default_gaussian(config.dim, mean, cov)?;
            let check = harness::gaussian_check(&config, &spec)?;
            io::write_json(&config.out.join("gaussian_check.json"), &check)?;
            print_check(&check);
            Ok(())
        }
        Command::Trajectories { config, paths, index, from, save_snapshots } => {
            let config = config.resolve()?;
            let flow = match from {
                Some(dir) => {
                    let traj = io::load_trajectory(&dir)?;
                    harness::transport_samples(&traj, config.samples, config.density_seed(index))?.1
                }
                None => {
                    let run = harness::run_density(&config, index)?;
                    if save_snapshots {
                        io::save_trajectory(&run.trajectory, &config.out.join("trajectory"))?;
                    }
                    io::write_json(&io::density_report_path(&config.out, index), &run.report)?;
                    run.flow
                }
            };
            let dump = harness::dump_trajectories(&flow, paths, config.density_seed(index), &config.out)?;
            let bent = dump.straightness.iter().filter(|&&s| s > 1e-3).count();
            println!(
                "wrote {} paths to {} ({} with straightness above 1e-3)",
                dump.ids.len(),
                config.out.join("trajectories.csv").display(),
                bent
            );
            Ok(())
        }
        Command::Table { summaries, format, output } => {
            let loaded = summaries.iter().map(|p| io::read_json(p)).collect::<Result<Vec<SuiteSummary>>>()?;
            let rows = table_rows(&loaded);
            let text = match format {
                TableFormat::Csv => table_csv(&rows)?,
                TableFormat::Markdown => table_markdown(&rows),
            };
            match output {
                Some(path) => std::fs::write(&path, text).map_err(|e| HarnessError::Io { path, source: e }),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
