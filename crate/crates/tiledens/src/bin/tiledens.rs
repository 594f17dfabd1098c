//! Command-line front end: thin wrappers over the library calls.
//!
//! Results go to standard output, diagnostics to standard error. Exit codes:
//! 0 success, 1 usage error, 2 data or parse error, 3 solver failure.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tiledens::{
    embed_points, fit_points, intersect, read_density, read_points_csv, run_experiment, union,
    write_density, Bounds, CellRect, Error, ExperimentConfig, FitConfig, GmmSpec, GridSpec,
    KdeConfig, SparseDensity,
};

#[derive(Parser)]
#[command(
    name = "tiledens",
    version,
    about = "Fit, query, and combine sparse quadtree-tile spatial densities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a sparse density to x,y points from a CSV file
    Fit(FitArgs),
    /// Evaluate a density at one grid cell or data-unit point
    Eval(EvalArgs),
    /// Probability mass of a rectangle of grid cells
    Query(QueryArgs),
    /// Prior-weighted union of several densities
    Union(UnionArgs),
    /// Normalized pointwise product of two densities
    Intersect(IntersectArgs),
    /// Export a density as a dense grid CSV or tile polygons
    Export(ExportArgs),
    /// Fit the benchmark mixture over a grid of depths and exponents
    Simulate(SimulateArgs),
    /// Describe a density document
    Info(InfoArgs),
}

#[derive(Args)]
struct FitArgs {
    /// CSV of points with an `x,y` or `lon,lat` header
    #[arg(long)]
    input: PathBuf,
    /// Grid depth: the grid is 2^k cells per side
    #[arg(long)]
    k: u8,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.001)]
    delta: f64,
    /// Kernel bandwidth in cell units for both axes (default: Silverman)
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grid bounds `xmin,xmax,ymin,ymax` (default: square over the data)
    #[arg(long)]
    bounds: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    density: PathBuf,
    #[arg(long)]
    col: Option<u32>,
    #[arg(long)]
    row: Option<u32>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    y: Option<f64>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    density: PathBuf,
    /// Inclusive cell rectangle `c0,c1,r0,r1`
    #[arg(long)]
    rect: String,
}

#[derive(Args)]
struct UnionArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.001)]
    delta: f64,
    /// Prior weight for each density, in order (default: equal weights)
    #[arg(long = "prior")]
    priors: Vec<f64>,
    /// Density documents to merge
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

#[derive(Args)]
struct IntersectArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.001)]
    delta: f64,
    first: PathBuf,
    second: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    density: PathBuf,
    /// Write a `col,row,value` CSV of all cells
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Write a GeoJSON feature collection with one polygon per tile
    #[arg(long)]
    tiles: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Benchmark mixture; `gmm6` is the committed six-mode fixture
    #[arg(long, default_value = "gmm6")]
    fixture: String,
    #[arg(long, default_value_t = 200_000)]
    n: usize,
    #[arg(long = "k-list", default_value = "3,4,5,6")]
    k_list: String,
    #[arg(long = "alpha-list", default_value = "0,0.25,0.5,0.75,1")]
    alpha_list: String,
    #[arg(long, default_value_t = 0.001)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Worker threads (default: TILEDENS_JOBS or all cores)
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(long)]
    density: PathBuf,
}

enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        CliError::Lib(e)
    }
}

type CliResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Query(args) => cmd_query(args),
        Command::Union(args) => cmd_union(args),
        Command::Intersect(args) => cmd_intersect(args),
        Command::Export(args) => cmd_export(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Info(args) => cmd_info(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Lib(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Solver(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|_| usage(format!("invalid {what} `{tok}`")))
        })
        .collect()
}

fn load_density(path: &Path) -> Result<SparseDensity, CliError> {
    read_density(path).map_err(|e| match e {
        Error::Parse { line, message } => CliError::Lib(Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        }),
        other => CliError::Lib(other),
    })
}

fn cmd_fit(args: FitArgs) -> CliResult {
    let file = File::open(&args.input).map_err(Error::Io)?;
    let points = read_points_csv(file)?;
    let bounds = match &args.bounds {
        Some(text) => {
            let v: Vec<f64> = parse_list(text, "bound")?;
            if v.len() != 4 {
                return Err(usage("--bounds needs xmin,xmax,ymin,ymax"));
            }
            Bounds::new(v[0], v[1], v[2], v[3])?
        }
        None => Bounds::of_points(&points)
            .ok_or_else(|| Error::EmptyData("no points in input".into()))?,
    };
    let spec = GridSpec::square_covering(args.k, bounds)?;
    let embedding = embed_points(&points, &spec)?;
    if embedding.dropped > 0 {
        eprintln!(
            "note: {} of {} points fell outside the bounds and were dropped",
            embedding.dropped,
            points.len()
        );
    }
    let kde = args.bandwidth.map(KdeConfig::fixed).unwrap_or_default();
    let cfg = FitConfig {
        alpha: args.alpha,
        delta: args.delta,
        seed: args.seed,
        ..FitConfig::default()
    };
    let fit = fit_points(&points, &spec, &kde, &cfg)?;
    write_density(&args.out, &fit.density)?;
    let selected = fit.path.selected_point().expect("cv path always selects");
    println!("nnz {}", fit.density.nnz());
    println!("lambda {}", fit.lambda);
    println!("cv_error {}", selected.cv_mean.unwrap_or(f64::NAN));
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult {
    let address = match (args.col, args.row, args.x, args.y) {
        (Some(col), Some(row), None, None) => Ok((col, row)),
        (None, None, Some(x), Some(y)) => Err((x, y)),
        _ => return Err(usage("give either --col and --row, or --x and --y")),
    };
    let density = load_density(&args.density)?;
    let (col, row) = match address {
        Ok(cell) => cell,
        Err((x, y)) => density
            .spec()
            .cell_of_point(x, y)
            .ok_or_else(|| Error::Argument(format!("point ({x}, {y}) is outside the bounds")))?,
    };
    println!("{}", density.eval(col, row)?);
    Ok(())
}

fn cmd_query(args: QueryArgs) -> CliResult {
    let density = load_density(&args.density)?;
    let v: Vec<u32> = parse_list(&args.rect, "cell index")?;
    if v.len() != 4 {
        return Err(usage("--rect needs c0,c1,r0,r1"));
    }
    let rect = CellRect::new(v[0], v[1], v[2], v[3])?;
    println!("{}", density.region_sum(&rect)?);
    Ok(())
}

fn cmd_union(args: UnionArgs) -> CliResult {
    let densities: Vec<SparseDensity> = args
        .files
        .iter()
        .map(|p| load_density(p))
        .collect::<Result<_, _>>()?;
    let priors = if args.priors.is_empty() {
        eprintln!(
            "warning: no --prior weights given; assuming {} equal priors",
            densities.len()
        );
        vec![1.0 / densities.len() as f64; densities.len()]
    } else if args.priors.len() != densities.len() {
        return Err(usage(format!(
            "{} --prior weights for {} densities",
            args.priors.len(),
            densities.len()
        )));
    } else {
        args.priors.clone()
    };
    let entries: Vec<(f64, &SparseDensity)> = priors.into_iter().zip(densities.iter()).collect();
    let merged = union(&entries, args.delta)?;
    write_density(&args.out, &merged)?;
    println!("nnz {}", merged.nnz());
    Ok(())
}

fn cmd_intersect(args: IntersectArgs) -> CliResult {
    let a = load_density(&args.first)?;
    let b = load_density(&args.second)?;
    let product = intersect(&a, &b, args.delta)?;
    write_density(&args.out, &product)?;
    println!("nnz {}", product.nnz());
    Ok(())
}

fn cmd_export(args: ExportArgs) -> CliResult {
    if args.grid.is_none() && args.tiles.is_none() {
        return Err(usage("give --grid and/or --tiles output paths"));
    }
    let density = load_density(&args.density)?;
    if let Some(path) = args.grid {
        std::fs::write(path, tiledens::export_grid(&density)).map_err(Error::Io)?;
    }
    if let Some(path) = args.tiles {
        std::fs::write(path, tiledens::export_tiles(&density)).map_err(Error::Io)?;
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    if args.fixture != "gmm6" {
        return Err(usage(format!(
            "unknown fixture `{}`; available: gmm6",
            args.fixture
        )));
    }
    let gmm = GmmSpec::six_mode_fixture(args.seed);
    let mut cfg = ExperimentConfig::new(
        args.n,
        parse_list(&args.k_list, "grid depth")?,
        parse_list(&args.alpha_list, "alpha")?,
    )?;
    cfg.delta = args.delta;
    cfg.fit_seed = args.seed;
    if let Some(b) = args.bandwidth {
        cfg.kde = KdeConfig::fixed(b);
    }

    let jobs = args.jobs.or_else(|| {
        std::env::var("TILEDENS_JOBS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    let rows = match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| usage(format!("cannot build a {n}-thread pool: {e}")))?;
            pool.install(|| run_experiment(&gmm, &cfg))?
        }
        None => run_experiment(&gmm, &cfg)?,
    };

    let mut out = String::from("k,alpha,tv,nnz,tv_hist\n");
    for r in &rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.k, r.alpha, r.tv, r.nnz, r.tv_hist
        ));
    }
    std::fs::write(&args.out, out).map_err(Error::Io)?;
    eprintln!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_info(args: InfoArgs) -> CliResult {
    let density = load_density(&args.density)?;
    let spec = density.spec();
    let b = spec.bounds();
    println!("k {}", spec.k());
    println!("bounds {} {} {} {}", b.x_min, b.x_max, b.y_min, b.y_max);
    println!("nnz {}", density.nnz());
    println!("unique_values {}", density.unique_values().len());
    match density.meta() {
        Some(meta) => {
            println!("alpha {}", meta.alpha);
            println!("delta {}", meta.delta);
            println!("lambda {}", meta.lambda);
        }
        None => println!("metadata none"),
    }
    Ok(())
}
