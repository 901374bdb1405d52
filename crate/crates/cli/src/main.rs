use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use surfops::geometry::{generate_nodes, NodeFamily, PointCloud, SurfaceModel};
use surfops::harness::{
    default_levels, run_convergence, run_efficiency, run_tangent_study, run_tau_study, write_report, Check,
    ConvergenceConfig, EfficiencyConfig, RunSettings, TangentStudyConfig, TauStudyConfig,
};
use surfops::operator::{build_operator, FieldValues, Method, OperatorParams, SdoKind, SurfaceOperator, TangentMode};

#[derive(Parser, Debug)]
#[command(name = "surfops", version, about = "Meshfree surface differential operators on point clouds")]
struct Cli {
    /// Seed for random node sets (overrides config files).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Use the larger problem sizes.
    #[arg(long, global = true)]
    full: bool,
    /// Exit with status 2 if any acceptance band is violated.
    #[arg(long, global = true)]
    check: bool,
    /// Report wall times as 0 so that reports are reproducible.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a node set and write it as "x y z" lines.
    GenNodes {
        #[arg(long, default_value = "sphere")]
        surface: SurfaceModel,
        #[arg(long, default_value = "icosahedral")]
        family: NodeFamily,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a sparse operator from a node file.
    BuildOp(BuildOpArgs),
    /// Apply an exported operator to a values file.
    Apply {
        #[arg(long)]
        op_file: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error and order of accuracy over a sequence of node sets.
    Convergence {
        #[command(flatten)]
        common: ExperimentArgs,
        #[arg(long)]
        surface: Option<SurfaceModel>,
        #[arg(long)]
        family: Option<NodeFamily>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        op: Option<SdoKind>,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        tangent: Option<TangentMode>,
        /// Comma-separated node counts.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
    },
    /// Laplacian error of both methods as the stencil radius factor varies.
    TauStudy {
        #[command(flatten)]
        common: ExperimentArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
    },
    /// Laplacian error with exact and approximate tangent frames.
    TangentStudy {
        #[command(flatten)]
        common: ExperimentArgs,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
    },
    /// Error against modelled setup and evaluation cost.
    Efficiency {
        #[command(flatten)]
        common: ExperimentArgs,
        #[arg(long, value_delimiter = ',')]
        degrees: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
    },
}

#[derive(Args, Debug)]
struct BuildOpArgs {
    #[arg(long)]
    nodes: PathBuf,
    #[arg(long)]
    surface: SurfaceModel,
    #[arg(long)]
    method: Method,
    #[arg(long)]
    op: SdoKind,
    #[arg(long)]
    degree: usize,
    #[arg(long, default_value_t = 1.5)]
    tau: f64,
    /// PHS parameter for RBF-FD (default: the degree).
    #[arg(long, conflicts_with = "m")]
    kappa: Option<usize>,
    /// Weight-kernel exponent for GMLS.
    #[arg(long)]
    m: Option<u32>,
    #[arg(long, default_value = "exact")]
    tangent: TangentMode,
    #[arg(long, default_value_t = 1)]
    tangent_iters: usize,
    /// Retry failing stencils with a larger radius.
    #[arg(long)]
    retry_tau: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// TOML configuration; command-line options override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for CSV and SVG output.
    #[arg(long, default_value = "reports")]
    out_dir: PathBuf,
    /// Skip SVG plots.
    #[arg(long)]
    no_plot: bool,
    #[arg(long)]
    tangent_iters: Option<usize>,
    /// Enable or disable radius retries for failing stencils.
    #[arg(long)]
    retry_tau: Option<bool>,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

impl Cli {
    fn apply_run(&self, common: &ExperimentArgs, run: &mut RunSettings) {
        if let Some(seed) = self.seed {
            run.seed = seed;
        }
        if self.no_timing {
            run.timing = false;
        }
        if let Some(k) = common.tangent_iters {
            run.tangent_iters = k;
        }
        if let Some(r) = common.retry_tau {
            run.retry_tau = r;
        }
    }
}

fn emit(common: &ExperimentArgs, name: &str, csv: &str, plots: &[(&str, String)], checks: &[Check]) -> Result<bool> {
    let csv_path = common.out_dir.join(format!("{name}.csv"));
    write_report(&csv_path, csv)?;
    println!("wrote {}", csv_path.display());
    if !common.no_plot {
        for (suffix, svg) in plots {
            let p = common.out_dir.join(format!("{name}{suffix}.svg"));
            write_report(&p, svg)?;
            println!("wrote {}", p.display());
        }
    }
    print!("{csv}");
    for c in checks {
        println!("{c}");
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::GenNodes {
            surface,
            family,
            n,
            out,
        } => {
            let cloud = generate_nodes(*surface, *family, *n, cli.seed.unwrap_or(1))?;
            let comment = format!("{} {} nodes on the {}", cloud.len(), family.name(), surface.name());
            cloud.write(out, Some(&comment))?;
            println!("wrote {} nodes to {}", cloud.len(), out.display());
            Ok(true)
        }
        Command::BuildOp(a) => {
            let cloud = PointCloud::read(&a.nodes)?;
            let mut params = OperatorParams::new(a.method, a.degree, a.tau).with_tangent(a.tangent);
            params.kappa = a.kappa;
            if let Some(m) = a.m {
                params.kernel_exponent = m;
            }
            params.tangent_iters = a.tangent_iters;
            params.retry_tau = a.retry_tau;
            if a.kappa.is_some() && a.method != Method::Rbffd {
                bail!("--kappa only applies to rbffd");
            }
            if a.m.is_some() && a.method != Method::Gmls {
                bail!("--m only applies to gmls");
            }
            let op = build_operator(&cloud, Some(a.surface), a.op, &params)?;
            op.export(&a.out)?;
            let sizes = op.stencil_sizes();
            println!(
                "wrote {} operator ({} nodes, mean stencil {:.1}) to {}",
                op.kind,
                op.nodes(),
                sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
                a.out.display()
            );
            Ok(true)
        }
        Command::Apply { op_file, input, out } => {
            let op = SurfaceOperator::import(op_file)?;
            let values = FieldValues::read(input)?;
            op.apply(&values)?.write(out)?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Convergence {
            common,
            surface,
            family,
            method,
            op,
            degree,
            tau,
            tangent,
            levels,
        } => {
            let mut cfg: ConvergenceConfig = load_config(common.config.as_deref())?;
            let from_file = common.config.is_some();
            cfg.surface = surface.unwrap_or(cfg.surface);
            if let Some(f) = family {
                cfg.family = *f;
            } else if !from_file && cfg.surface == SurfaceModel::Torus {
                cfg.family = NodeFamily::PoissonDisk;
            }
            cfg.method = method.unwrap_or(cfg.method);
            cfg.op = op.unwrap_or(cfg.op);
            cfg.degree = degree.unwrap_or(cfg.degree);
            cfg.tau = tau.unwrap_or(cfg.tau);
            cfg.tangent = tangent.unwrap_or(cfg.tangent);
            match levels {
                Some(l) => cfg.levels = l.clone(),
                None if !from_file || cli.full => cfg.levels = default_levels(cfg.family, cli.full),
                None => {}
            }
            cli.apply_run(common, &mut cfg.run);
            let report = run_convergence(&cfg)?;
            let name = format!(
                "convergence_{}_{}_{}_{}_l{}",
                cfg.surface.name(),
                cfg.family.name(),
                cfg.method,
                cfg.op,
                cfg.degree
            );
            emit(common, &name, &report.to_csv(), &[("", report.plot().to_svg())], &report.checks())
        }
        Command::TauStudy {
            common,
            n,
            degree,
            taus,
        } => {
            let mut cfg: TauStudyConfig = load_config(common.config.as_deref())?;
            if cli.full && n.is_none() {
                cfg.n = 130463;
            }
            cfg.n = n.unwrap_or(cfg.n);
            cfg.degree = degree.unwrap_or(cfg.degree);
            if let Some(t) = taus {
                cfg.taus = t.clone();
            }
            cli.apply_run(common, &mut cfg.run);
            let report = run_tau_study(&cfg)?;
            emit(common, "tau_study", &report.to_csv(), &[("", report.plot().to_svg())], &report.checks())
        }
        Command::TangentStudy { common, degree, levels } => {
            let mut cfg: TangentStudyConfig = load_config(common.config.as_deref())?;
            cfg.degree = degree.unwrap_or(cfg.degree);
            match levels {
                Some(l) => cfg.levels = l.clone(),
                None if cli.full => cfg.levels = default_levels(cfg.family, true),
                None => {}
            }
            cli.apply_run(common, &mut cfg.run);
            let report = run_tangent_study(&cfg)?;
            emit(common, "tangent_study", &report.to_csv(), &[("", report.plot().to_svg())], &report.checks())
        }
        Command::Efficiency {
            common,
            degrees,
            levels,
        } => {
            let mut cfg: EfficiencyConfig = load_config(common.config.as_deref())?;
            if let Some(d) = degrees {
                cfg.degrees = d.clone();
            }
            match levels {
                Some(l) => cfg.levels = l.clone(),
                None if cli.full => cfg.levels = default_levels(cfg.family, true),
                None => {}
            }
            cli.apply_run(common, &mut cfg.run);
            let report = run_efficiency(&cfg)?;
            let (total, eval) = report.plots();
            emit(
                common,
                "efficiency",
                &report.to_csv(),
                &[("_total", total.to_svg()), ("_eval", eval.to_svg())],
                &report.checks(),
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) if cli.check => {
            eprintln!("acceptance check failed");
            ExitCode::from(2)
        }
        Ok(false) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
