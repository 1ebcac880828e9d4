//! `spatmix` command-line driver: fit, sweep, simulate, study and evaluate.

mod error;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spatmix::{
    ari, check_identifiability, default_age_midpoints, fit, mean_age, moran_permutation_test, morans_i, run_study,
    simulate_dataset, sweep, AdjacencyGraph, FitConfig, FitResult, GibbsMethod, LatticeScheme, MoranWeights,
    SimConfig,
};

use crate::error::{CliError, CliResult};
use crate::io::Dataset;

const FORMAT_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "spatmix", version, about = "Spatial multinomial mixtures with a Gibbs label prior")]
struct Cli {
    /// Worker threads for restarts and replicates (0 = all cores).
    #[arg(long, global = true, env = "SPATMIX_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model and write a result file.
    Fit(FitArgs),
    /// Fit a range of K and select by BIC.
    Sweep(SweepArgs),
    /// Simulate one lattice dataset.
    Simulate(SimulateArgs),
    /// Run the simulation study and write the ARI quantile table.
    Study(StudyArgs),
    /// Evaluation metrics.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Counts CSV (wide: `region,<cat>,...`).
    counts: PathBuf,
    /// Edge list over the rows of the counts file (0-based).
    graph: PathBuf,
    /// Read the counts in long form `region,group,count`.
    #[arg(long)]
    long: bool,
}

#[derive(Args, Clone)]
struct EngineArgs {
    #[arg(long, env = "SPATMIX_SEED", default_value_t = 0)]
    seed: u64,
    /// Fit the standard mixture (β fixed at zero, no field).
    #[arg(long)]
    no_spatial: bool,
    /// Keep the field step but hold β at zero.
    #[arg(long)]
    pin_beta: bool,
    #[arg(long, value_enum, default_value_t = Method::Newton)]
    gibbs_method: Method,
    #[arg(long, default_value_t = 20)]
    n_starts: usize,
    #[arg(long, default_value_t = 10)]
    short_run_iter: usize,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value_t = 50)]
    patience: usize,
    #[arg(long, default_value_t = 1)]
    field_sweeps: usize,
    /// Fit α, β against the hard labels rather than the responsibilities.
    #[arg(long)]
    hard_gibbs_weights: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Newton,
    Anneal,
}

impl EngineArgs {
    fn config(&self, k: usize) -> FitConfig {
        FitConfig {
            k,
            seed: self.seed,
            spatial: !self.no_spatial,
            pin_beta: self.pin_beta,
            gibbs_method: match self.gibbs_method {
                Method::Newton => GibbsMethod::Newton,
                Method::Anneal => GibbsMethod::Anneal,
            },
            n_starts: self.n_starts,
            short_run_iter: self.short_run_iter,
            max_iter: self.max_iter,
            patience: self.patience,
            field_sweeps: self.field_sweeps,
            hard_gibbs_weights: self.hard_gibbs_weights,
            ..FitConfig::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[command(flatten)]
    engine: EngineArgs,
    /// Result file (JSON); standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    #[arg(long)]
    k_max: usize,
    /// Fit every K from scratch instead of warm-starting from K-1.
    #[arg(long)]
    cold: bool,
    #[command(flatten)]
    engine: EngineArgs,
    /// Directory for the per-K result files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Sweep table (CSV); standard output when omitted.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// Lattice side length.
    #[arg(long)]
    side: Option<usize>,
    #[arg(long, value_enum)]
    scheme: Option<Scheme>,
    /// Multinomial total per region.
    #[arg(long)]
    m: Option<u64>,
    /// Interaction strengths, comma separated, first entry zero.
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    burn_in: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Rook,
    Queen,
}

impl SimArgs {
    fn apply(&self, cfg: &mut SimConfig) {
        if let Some(s) = self.side {
            cfg.side = s;
        }
        if let Some(s) = self.scheme {
            cfg.scheme = match s {
                Scheme::Rook => LatticeScheme::Rook,
                Scheme::Queen => LatticeScheme::Queen,
            };
        }
        if let Some(m) = self.m {
            cfg.m = m;
        }
        if let Some(b) = &self.beta {
            cfg.beta = b.clone();
        }
        if let Some(a) = &self.alpha {
            cfg.alpha = a.clone();
        }
        if let Some(b) = self.burn_in {
            cfg.burn_in = b;
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON SimConfig; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, env = "SPATMIX_SEED", default_value_t = 0)]
    seed: u64,
    /// Directory receiving counts.csv, labels.csv and graph.txt.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long, value_delimiter = ',', default_value = "8,10,20")]
    sides: Vec<usize>,
    /// β values of the second component.
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,0.2")]
    betas: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long)]
    m: Option<u64>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[command(flatten)]
    engine: EngineArgs,
    /// Quantile table (CSV); standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Full report including per-replicate ARI (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Adjusted Rand index between two `region,label` files.
    Ari {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        column: Option<String>,
    },
    /// Moran's I with an optional permutation test.
    Moran(MoranArgs),
}

#[derive(Args)]
struct MoranArgs {
    /// `region,<value>` file, or a counts file with `--counts`.
    input: PathBuf,
    graph: PathBuf,
    #[arg(long, conflicts_with = "counts")]
    column: Option<String>,
    /// Treat the input as counts and use the grouped mean (mean age).
    #[arg(long)]
    counts: bool,
    #[arg(long, requires = "counts")]
    long: bool,
    /// Group midpoints for `--counts`; defaults to 2.5, 7.5, ...
    #[arg(long, value_delimiter = ',', requires = "counts")]
    midpoints: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Weights::Binary)]
    weights: Weights,
    /// Permutations for the p-value (at least 99); none when omitted.
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long, env = "SPATMIX_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Weights {
    Binary,
    Row,
}

#[derive(Serialize)]
struct ResultFile<'a> {
    format_version: u32,
    tool_version: &'static str,
    config: &'a FitConfig,
    seed: u64,
    n: usize,
    categories: &'a [String],
    regions: &'a [String],
    k: usize,
    spatial: bool,
    lambda: &'a [Vec<f64>],
    alpha: &'a [f64],
    beta: &'a [f64],
    labels: &'a [usize],
    responsibilities: Vec<Vec<f64>>,
    occupancy: Vec<usize>,
    loglik_trace: &'a [f64],
    best_loglik: f64,
    best_iteration: usize,
    iterations: usize,
    d: usize,
    bic: f64,
    converged: bool,
    warnings: &'a [String],
}

fn result_json(ds: &Dataset, cfg: &FitConfig, r: &FitResult) -> String {
    let file = ResultFile {
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        seed: r.seed,
        n: ds.counts.n(),
        categories: &ds.categories,
        regions: &ds.regions,
        k: r.k,
        spatial: r.spatial,
        lambda: r.component.rows(),
        alpha: &r.gibbs.alpha,
        beta: &r.gibbs.beta,
        labels: &r.labels,
        responsibilities: r.w.to_rows(),
        occupancy: r.occupancy(),
        loglik_trace: &r.loglik_trace,
        best_loglik: r.best_loglik,
        best_iteration: r.best_iteration,
        iterations: r.iterations,
        d: r.d,
        bic: r.bic,
        converged: r.converged,
        warnings: &r.warnings,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("result serialises");
    s.push('\n');
    s
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => io::write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(data: &DataArgs) -> CliResult<(Dataset, AdjacencyGraph)> {
    let ds = io::read_counts(&data.counts, data.long)?;
    let graph = io::read_graph(&data.graph, ds.counts.n())?;
    Ok((ds, graph))
}

fn warn_identifiability(ds: &Dataset, k: usize) {
    if let spatmix::Identifiability::Warn { min_total, required } = check_identifiability(&ds.counts, k) {
        eprintln!("warning: smallest region total {min_total} is below 2K - 1 = {required}; K = {k} may not be identifiable");
    }
}

fn cmd_fit(args: FitArgs) -> CliResult<()> {
    let (ds, graph) = load(&args.data)?;
    let cfg = args.engine.config(args.k);
    warn_identifiability(&ds, args.k);
    let result = fit(&ds.counts, &graph, &cfg)?;
    emit(args.out.as_deref(), &result_json(&ds, &cfg, &result))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn cmd_sweep(args: SweepArgs) -> CliResult<()> {
    if args.k_min == 0 || args.k_min > args.k_max {
        return Err(CliError::Usage(format!("need 1 <= k-min <= k-max, got {}..{}", args.k_min, args.k_max)));
    }
    let (ds, graph) = load(&args.data)?;
    let ks: Vec<usize> = (args.k_min..=args.k_max).collect();
    let cfg = args.engine.config(args.k_min);
    let result = sweep(&ds.counts, &graph, &ks, &cfg, !args.cold)?;
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for rec in &result.records {
            if let Some(f) = &rec.fit {
                let cfg_k = FitConfig { k: rec.k, ..cfg.clone() };
                io::write_text(&dir.join(format!("result_k{}.json", rec.k)), &result_json(&ds, &cfg_k, f))?;
            }
        }
    }
    let mut table = String::from("k,loglik,d,bic,selected,error\n");
    for rec in &result.records {
        let selected = result.selected_k == Some(rec.k);
        table.push_str(&format!(
            "{},{},{},{},{},{}\n",
            rec.k,
            fmt_opt(rec.loglik),
            rec.d,
            fmt_opt(rec.bic),
            if selected { "*" } else { "" },
            rec.error.as_deref().unwrap_or("").replace([',', '\n'], " ")
        ));
    }
    emit(args.table.as_deref(), &table)
}

fn load_sim_config(path: Option<&Path>) -> CliResult<SimConfig> {
    match path {
        Some(p) => serde_json::from_str(&io::read_text(p)?).map_err(|e| CliError::parse(p, e)),
        None => Ok(SimConfig::default()),
    }
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let mut cfg = load_sim_config(args.config.as_deref())?;
    args.sim.apply(&mut cfg);
    cfg.seed = args.seed;
    let sim = simulate_dataset(&cfg, args.seed)?;
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let regions: Vec<String> = (0..sim.counts.n()).map(|i| i.to_string()).collect();
    let categories: Vec<String> = (1..=cfg.j()).map(|j| format!("c{j}")).collect();
    io::write_text(&dir.join("counts.csv"), &io::counts_to_csv(&regions, &categories, &sim.counts))?;
    io::write_text(&dir.join("labels.csv"), &io::labels_to_csv(&regions, &sim.truth))?;
    io::write_text(&dir.join("graph.txt"), &sim.graph.to_edge_list())?;
    Ok(())
}

fn cmd_study(args: StudyArgs) -> CliResult<()> {
    let mut cfgs = Vec::new();
    for (cell, (&side, &b)) in
        args.sides.iter().flat_map(|s| args.betas.iter().map(move |b| (s, b))).enumerate()
    {
        let mut cfg = SimConfig {
            side,
            beta: vec![0.0, b],
            replicates: args.reps,
            seed: spatmix::derive_seed(args.engine.seed, cell as u64),
            ..SimConfig::default()
        };
        if let Some(m) = args.m {
            cfg.m = m;
        }
        if let Some(bi) = args.burn_in {
            cfg.burn_in = bi;
        }
        cfgs.push(cfg);
    }
    let report = run_study(&cfgs, &args.engine.config(2))?;
    if let Some(p) = &args.report {
        let mut s = serde_json::to_string_pretty(&report).expect("report serialises");
        s.push('\n');
        io::write_text(p, &s)?;
    }
    let mut table = String::from("side,beta,replicates,failures,min,q1,median,q3,max,iqr\n");
    for c in &report.cells {
        let q = c.summary.map(|s| {
            format!("{},{},{},{},{},{}", s.min, s.q1, s.median, s.q3, s.max, s.iqr())
        });
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            c.side,
            c.beta[1],
            c.replicates,
            c.failures.len(),
            q.unwrap_or_else(|| ",,,,,".into())
        ));
    }
    emit(args.out.as_deref(), &table)
}

fn cmd_ari(a: &Path, b: &Path, column: Option<&str>) -> CliResult<()> {
    let (ra, la) = io::read_column(a, column)?;
    let (rb, lb) = io::read_column(b, column)?;
    if ra != rb {
        return Err(CliError::Dimension(format!(
            "{} and {} do not list the same regions in the same order",
            a.display(),
            b.display()
        )));
    }
    println!("{}", ari(&la, &lb)?);
    Ok(())
}

fn cmd_moran(args: MoranArgs) -> CliResult<()> {
    if let Some(p) = args.permutations {
        if p < 99 {
            return Err(CliError::Usage(format!("--permutations must be at least 99, got {p}")));
        }
    }
    let values: Vec<f64> = if args.counts {
        let ds = io::read_counts(&args.input, args.long)?;
        let mids = args.midpoints.clone().unwrap_or_else(|| default_age_midpoints(ds.counts.num_categories()));
        if mids.len() != ds.counts.num_categories() {
            return Err(CliError::Dimension(format!(
                "{} midpoints for {} categories",
                mids.len(),
                ds.counts.num_categories()
            )));
        }
        ds.counts.rows().map(|row| mean_age(row, &mids)).collect::<spatmix::Result<_>>()?
    } else {
        let (_, raw) = io::read_column(&args.input, args.column.as_deref())?;
        raw.iter()
            .enumerate()
            .map(|(i, s)| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::parse(&args.input, format!("row {}: {s:?} is not a number", i + 2)))
            })
            .collect::<CliResult<_>>()?
    };
    let graph = io::read_graph(&args.graph, values.len())?;
    let weights = match args.weights {
        Weights::Binary => MoranWeights::Binary,
        Weights::Row => MoranWeights::RowStandardized,
    };
    let numeric = |e: spatmix::Error| CliError::Numeric(format!("moran: {e}"));
    match args.permutations {
        Some(p) => {
            let r = moran_permutation_test(&values, &graph, weights, p, args.seed).map_err(numeric)?;
            println!("I = {}", r.i);
            println!("p = {} ({} permutations, seed {})", r.p_value, r.n_permutations, args.seed);
        }
        None => println!("I = {}", morans_i(&values, &graph, weights).map_err(numeric)?),
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Study(a) => cmd_study(a),
        Command::Eval(EvalCommand::Ari { a, b, column }) => cmd_ari(&a, &b, column.as_deref()),
        Command::Eval(EvalCommand::Moran(a)) => cmd_moran(a),
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
