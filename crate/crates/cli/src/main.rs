use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kltrend::limit_law::{DEFAULT_REPS, DEFAULT_STEPS};
use kltrend::loadings::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use kltrend::mc::{self, DgpConfig};
use kltrend::Error;

mod args;
mod commands;

use args::{CenterArg, InputArgs, MethodArg, NormArg, TableArgs};
use commands::{CmdResult, Failure};

/// Inference on the number of stochastic trends in a multivariate time series.
#[derive(Debug, Parser)]
#[command(name = "kltrend", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct LoadingArgs {
    /// Number of trends; defaults to the max-gap estimate.
    #[arg(long)]
    s: Option<usize>,
    /// Columns whose coordinate vectors form b, e.g. `1-3`.
    #[arg(long)]
    b: Option<String>,
    /// Columns whose coordinate vectors form c; defaults to the rest.
    #[arg(long, requires = "b")]
    c: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
}

impl LoadingArgs {
    fn options(&self) -> commands::LoadingOptions {
        commands::LoadingOptions {
            s: self.s,
            b: self.b.clone(),
            c: self.c.clone(),
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full pipeline: trend counts, loadings, misspecification diagnostic.
    Analyze {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        tables: TableArgs,
        /// Count methods; the first one fixes s unless --s is given.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "maxgap,f1,f2,f3")]
        methods: Vec<MethodArg>,
        #[arg(long, default_value_t = 0.05)]
        eta: f64,
        #[arg(long)]
        include_zero: bool,
        #[command(flatten)]
        loadings: LoadingArgs,
        /// Step of the K grid for the misspecification diagnostic.
        #[arg(long, default_value_t = 1)]
        misspec_j: usize,
        /// Extra grid points for the misspecification diagnostic.
        #[arg(long, default_value_t = 3)]
        misspec_m: usize,
        #[arg(long, value_enum, default_value = "one")]
        norm: NormArg,
        #[arg(long, value_enum, default_value = "mean")]
        center: CenterArg,
        /// Restriction matrix for a Wald test on vec(ψ_*), header-less CSV.
        #[arg(long = "R", requires = "h")]
        r: Option<PathBuf>,
        /// Right-hand side of the Wald restriction.
        #[arg(long, requires = "r")]
        h: Option<PathBuf>,
        /// Directory for eigenvalues.csv, gaps.csv and stripe.csv.
        #[arg(long)]
        emit_plots: Option<PathBuf>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the number of trends with one method.
    Count {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        tables: TableArgs,
        #[arg(long, value_enum, default_value = "maxgap")]
        method: MethodArg,
        #[arg(long, default_value_t = 0.05)]
        eta: f64,
        #[arg(long)]
        include_zero: bool,
        /// Step of the K grid for the sequential tests.
        #[arg(long, default_value_t = 1)]
        grid_j: usize,
        /// Extra K grid points for the sequential tests; 0 uses K only.
        #[arg(long, default_value_t = 0)]
        grid_m: usize,
    },
    /// Loading and cointegrating matrices with long-run variance.
    Loadings {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        loadings: LoadingArgs,
    },
    /// Wald test of linear restrictions on the loadings.
    Wald {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        loadings: LoadingArgs,
        #[arg(long = "R")]
        r: PathBuf,
        #[arg(long)]
        h: PathBuf,
    },
    /// Misspecification diagnostic over a grid of K.
    Misspec {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        tables: TableArgs,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 1)]
        j: usize,
        #[arg(long, default_value_t = 3)]
        m: usize,
        #[arg(long, value_enum, default_value = "one")]
        norm: NormArg,
        #[arg(long, default_value_t = 0.05)]
        eta: f64,
        #[arg(long, value_enum, default_value = "mean")]
        center: CenterArg,
        /// CSV with logK,logStat,stripeLow,stripeHigh.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate, cache or list critical value tables.
    Critval {
        #[arg(long, default_value_t = 20)]
        s_max: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
        eta: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_REPS)]
        reps: usize,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the table here instead of the cache.
        #[arg(long)]
        out: Option<PathBuf>,
        /// List cached tables and exit.
        #[arg(long)]
        list: bool,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Monte Carlo experiment over a design grid.
    Mc {
        /// JSON array of {p, s, a, T} points.
        #[arg(long, group = "design")]
        grid: Option<PathBuf>,
        /// p in {10, 20} over the standard design.
        #[arg(long, group = "design")]
        desk: bool,
        /// p in {10, 20, 50, 100, 200, 300} over the standard design.
        #[arg(long, group = "design")]
        full: bool,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "maxgap")]
        methods: Vec<MethodArg>,
        #[arg(long, default_value_t = 0.05)]
        eta: f64,
        #[arg(long)]
        include_zero: bool,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long = "mc-seed", default_value_t = 0)]
        mc_seed: u64,
        /// Fixed K; default ⌈T^{3/4}⌉ per point.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tables: TableArgs,
    },
    /// Simulate a panel from the error-correction DGP.
    Simulate {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 0.1)]
        a: f64,
        #[arg(long = "T")]
        t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else if matches!(e, Error::Table(_)) {
        4
    } else {
        2
    }
}

fn run(cli: Cli) -> CmdResult<()> {
    match cli.command {
        Command::Analyze {
            input,
            tables,
            methods,
            eta,
            include_zero,
            loadings,
            misspec_j,
            misspec_m,
            norm,
            center,
            r,
            h,
            emit_plots,
            out,
        } => {
            let opts = commands::AnalyzeOptions {
                methods,
                eta,
                include_zero,
                s: loadings.s,
                loadings: loadings.options(),
                misspec_j,
                misspec_m,
                norm: norm.into(),
                center: center.into(),
                r,
                h,
                emit_plots,
            };
            let report = commands::analyze(&input, &tables, &opts)?;
            commands::write_json(&report, out.as_deref())
        }
        Command::Count {
            input,
            tables,
            method,
            eta,
            include_zero,
            grid_j,
            grid_m,
        } => {
            let opts = commands::CountOptions {
                method,
                eta,
                include_zero,
                grid_j,
                grid_m,
            };
            commands::write_json(&commands::count(&input, &tables, &opts)?, None)
        }
        Command::Loadings { input, loadings } => {
            commands::write_json(&commands::loadings(&input, &loadings.options())?, None)
        }
        Command::Wald {
            input,
            loadings,
            r,
            h,
        } => commands::write_json(&commands::wald_cmd(&input, &loadings.options(), &r, &h)?, None),
        Command::Misspec {
            input,
            tables,
            s,
            j,
            m,
            norm,
            eta,
            center,
            out,
        } => {
            let opts = commands::MisspecOptions {
                s,
                j,
                m,
                norm: norm.into(),
                eta,
                center: center.into(),
            };
            let report = commands::misspec(&input, &tables, &opts, out.as_deref())?;
            commands::write_json(&report, None)
        }
        Command::Critval {
            s_max,
            eta,
            reps,
            steps,
            seed,
            out,
            list,
            cache_dir,
        } => {
            let cache = commands::cache_for(&TableArgs {
                table_steps: steps,
                table_reps: reps,
                seed,
                no_simulate: false,
                cache_dir,
            });
            if list {
                for line in commands::critval_list(&cache) {
                    println!("{line}");
                }
                return Ok(());
            }
            let opts = commands::CritvalOptions {
                s_max,
                etas: eta,
                reps,
                steps,
                seed,
                out,
            };
            commands::write_json(&commands::critval(&cache, &opts)?, None)
        }
        Command::Mc {
            grid,
            desk,
            full,
            methods,
            eta,
            include_zero,
            reps,
            mc_seed,
            k,
            out,
            tables,
        } => {
            let grid = match grid {
                Some(path) => commands::read_grid(&path).map_err(|error| Failure { stage: "mc", error })?,
                None if full => mc::full_grid(),
                None if desk => mc::desk_grid(),
                None => {
                    return Err(Failure {
                        stage: "mc",
                        error: Error::InvalidArgument("one of --grid, --desk or --full is required".into()),
                    })
                }
            };
            let opts = commands::McOptions {
                grid,
                methods: methods.iter().map(|m| m.to_method(eta, include_zero)).collect(),
                reps,
                seed: mc_seed,
                k,
                out,
            };
            let files = commands::run_mc(&opts, &tables, eta)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::Simulate {
            p,
            s,
            a,
            t,
            seed,
            out,
        } => commands::simulate(&DgpConfig { p, s, a, t, seed }, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { stage, error }) => {
            eprintln!("error [{stage}]: {error}");
            ExitCode::from(exit_code(&error))
        }
    }
}
