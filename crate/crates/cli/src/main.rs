use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use l1dual::experiments::{format_value, run_table};
use l1dual::pipeline::{
    solve_dual_with, solve_min_norm_interp_with, solve_regularized_with, Branch, N0Strategy,
    RegularizationProblem, SolverOptions,
};
use l1dual::polytope::{find_n0_by_vertices, vertex_enumerate_with, vertex_sweep, Backend, EnumerationLimits, SlabSystem};
use l1dual::{Error, SparseSeq};
use serde_json::json;

mod manifest;

use manifest::Manifest;

#[derive(Parser)]
#[command(name = "l1dual", version, about = "Dual solver for l1-regularized problems over sequences")]
struct Cli {
    /// Print machine-readable JSON instead of the text report.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the dual problem for one rho.
    Dual {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rho: f64,
    },
    /// Full solve for one rho; writes x as (index, value) CSV.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rho: f64,
        /// Destination of the solution CSV (defaults to the manifest output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vertex counts of the slab polytopes for a range of n.
    Vertices {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long)]
        n_from: usize,
        #[arg(long)]
        n_to: usize,
        /// Include the box |lambda_j| <= 1.
        #[arg(long = "box")]
        with_box: bool,
        /// Use subset enumeration (m <= 3).
        #[arg(long)]
        brute: bool,
        /// Also report the first n whose polytope equals the next one.
        #[arg(long)]
        find_n0: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One table row per rho in the manifest; CSV plus a JSON sidecar.
    Table {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimum-norm interpolation of the (noisy) data.
    Interp {
        #[command(flatten)]
        common: Common,
        /// Interpolate the clean data instead of the noisy data.
        #[arg(long)]
        clean: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON or TOML manifest.
    manifest: PathBuf,
    /// `vertices`, `objective` or a fixed number of constraints.
    #[arg(long)]
    n0: Option<String>,
    #[arg(long)]
    sup_tol: Option<f64>,
    #[arg(long)]
    support_tol: Option<f64>,
    #[arg(long)]
    objective_tol: Option<f64>,
    #[arg(long)]
    fppa_tol: Option<f64>,
    #[arg(long)]
    fppa_max_iter: Option<usize>,
    /// Skip the exact finite LP that cross-checks FPPA.
    #[arg(long)]
    no_lp_check: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

type CliResult<T> = std::result::Result<T, Failure>;

impl Common {
    fn load(&self) -> CliResult<(Manifest, N0Strategy, SolverOptions)> {
        let mut manifest = Manifest::load(&self.manifest)?;
        let strategy = match self.n0.as_deref() {
            None => manifest.strategy(),
            Some("vertices") => N0Strategy::Vertices,
            Some("objective") => N0Strategy::Objective,
            Some(n) => match n.parse::<usize>() {
                Ok(n) if n > 0 => N0Strategy::Fixed { n },
                _ => return Err(usage(format!("--n0 must be vertices, objective or a positive integer, got {n:?}"))),
            },
        };
        let s = &mut manifest.solver;
        if let Some(v) = self.sup_tol {
            s.sup_rel_tol = v;
        }
        if let Some(v) = self.support_tol {
            s.support_rel_tol = v;
        }
        if let Some(v) = self.objective_tol {
            s.objective_tol = v;
        }
        if let Some(v) = self.fppa_tol {
            s.fppa_tol = v;
        }
        if let Some(v) = self.fppa_max_iter {
            s.fppa_max_iter = v;
        }
        if self.no_lp_check {
            s.lp_check = false;
        }
        manifest.n0_strategy = Some(strategy);
        let opts = manifest.solver;
        Ok((manifest, strategy, opts))
    }
}

fn check_rho(rho: f64) -> CliResult<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("rho must be positive, got {rho}")))
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Failure { code: 1, message: format!("cannot write {}: {e}", path.display()) })
}

fn sequence_csv(x: &SparseSeq) -> String {
    let mut out = String::from("index,value\n");
    for (k, v) in x.entries() {
        out.push_str(&format!("{k},{v:e}\n"));
    }
    out
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable report"));
}

fn cmd_dual(json_out: bool, common: &Common, rho: f64) -> CliResult<()> {
    check_rho(rho)?;
    let (manifest, strategy, opts) = common.load()?;
    let data = manifest.data()?;
    let problem = RegularizationProblem::new(data.rows, data.y0, rho)?;
    let dual = solve_dual_with(&problem, strategy, &opts)?;
    if json_out {
        print_json(&json!({
            "rho": rho,
            "n0": dual.n0,
            "S": dual.s,
            "lambda": dual.lambda,
            "lambda_inf": dual.lambda.sup_norm(),
            "astar_lambda_inf": dual.mu_supnorm,
            "peak": dual.peak,
            "cuts": dual.cuts,
        }));
    } else {
        println!("rho                 {}", format_value(rho));
        println!("n0                  {}", dual.n0);
        println!("S                   {}", format_value(dual.s));
        println!("rho |lambda|_inf    {}", format_value(rho * dual.lambda.sup_norm()));
        println!("|A_* lambda|_inf    {}", format_value(dual.mu_supnorm));
        println!("peak set            {:?}", dual.peak);
        let lambda: Vec<String> = dual.lambda.iter().map(|v| format_value(*v)).collect();
        println!("lambda              [{}]", lambda.join(", "));
    }
    Ok(())
}

fn cmd_solve(json_out: bool, common: &Common, rho: f64, out: Option<&Path>) -> CliResult<()> {
    check_rho(rho)?;
    let (manifest, strategy, opts) = common.load()?;
    let data = manifest.data()?;
    let problem = RegularizationProblem::new(data.rows, data.y0, rho)?;
    let sol = solve_regularized_with(&problem, strategy, &opts)?;
    let dest = out.map(Path::to_path_buf).or(manifest.output.clone());
    if let Some(path) = &dest {
        write_file(path, &sequence_csv(&sol.x))?;
    }
    let branch = match sol.branch {
        Branch::ZeroSolution => "zero",
        Branch::FiniteSolve => "finite",
    };
    if json_out {
        print_json(&json!({
            "rho": rho,
            "branch": branch,
            "SL": sol.sparsity,
            "f_r": sol.f_r,
            "S": sol.dual.s,
            "x": sol.x.entries(),
            "diagnostics": sol.diagnostics,
        }));
    } else {
        println!("branch              {branch}");
        println!("SL                  {}", sol.sparsity);
        println!("f_r                 {}", format_value(sol.f_r));
        println!("S                   {}", format_value(sol.dual.s));
        for (name, v) in &sol.diagnostics {
            println!("{name:<20}{}", format_value(*v));
        }
        if let Some(path) = &dest {
            println!("solution written to {}", path.display());
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_vertices(
    json_out: bool,
    common: &Common,
    rho: f64,
    n_from: usize,
    n_to: usize,
    with_box: bool,
    brute: bool,
    find_n0: bool,
    out: Option<&Path>,
) -> CliResult<()> {
    check_rho(rho)?;
    if n_from == 0 || n_to < n_from {
        return Err(usage("need 1 <= n-from <= n-to"));
    }
    let (manifest, _, _) = common.load()?;
    let rows = manifest.rows()?;
    let slabs = SlabSystem::from_rows(&rows, n_to, rho, with_box)?;
    let limits = EnumerationLimits::default();
    let ns: Vec<usize> = (n_from..=n_to).collect();
    let counts: Vec<(usize, Option<usize>)> = if brute {
        ns.iter()
            .map(|&n| {
                vertex_enumerate_with(&slabs, n, Backend::BruteForce, &limits)
                    .map(|v| (n, v.bounded.then(|| v.len())))
            })
            .collect::<l1dual::Result<_>>()?
    } else {
        vertex_sweep(&slabs, &ns, &limits)?
    };
    let n0 = if find_n0 {
        let start = manifest.solver.n_start.unwrap_or(manifest.m);
        Some(find_n0_by_vertices(&rows, rho, start, manifest.solver.n_cap, with_box, &limits)?)
    } else {
        None
    };
    let mut csv = String::from("n,count\n");
    for (n, c) in &counts {
        csv.push_str(&format!("{n},{}\n", c.map_or("unbounded".to_string(), |c| c.to_string())));
    }
    if let Some(path) = out.map(Path::to_path_buf).or(manifest.output.clone()) {
        write_file(&path, &csv)?;
    }
    if json_out {
        print_json(&json!({
            "counts": counts,
            "n0": n0.as_ref().map(|r| r.n0),
            "n0_count": n0.as_ref().map(|r| r.final_count),
        }));
    } else {
        print!("{csv}");
        if let Some(r) = n0 {
            println!("n0 = {} ({} vertices)", r.n0, r.final_count);
        }
    }
    Ok(())
}

fn cmd_table(json_out: bool, common: &Common, jobs: usize, out: Option<&Path>) -> CliResult<()> {
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let (manifest, _, _) = common.load()?;
    let config = manifest.experiment()?;
    let table = run_table(&config, jobs)?;
    let csv = table.to_csv();
    let sidecar = table.to_json()?;
    if let Some(path) = out.map(Path::to_path_buf).or(manifest.output.clone()) {
        write_file(&path, &csv)?;
        write_file(&path.with_extension("json"), &sidecar)?;
    }
    if json_out {
        println!("{sidecar}");
    } else {
        print!("{csv}");
    }
    let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(Failure { code: 1, message: format!("{failed} table rows failed") });
    }
    Ok(())
}

fn cmd_interp(json_out: bool, common: &Common, clean: bool, out: Option<&Path>) -> CliResult<()> {
    let (manifest, strategy, opts) = common.load()?;
    let data = manifest.data()?;
    let y = if clean { &data.y } else { &data.y0 };
    let strategy = match strategy {
        N0Strategy::Vertices => N0Strategy::Objective,
        s => s,
    };
    let interp = solve_min_norm_interp_with(&data.rows, y, strategy, &opts)?;
    if let Some(path) = out.map(Path::to_path_buf).or(manifest.output.clone()) {
        write_file(&path, &sequence_csv(&interp.x))?;
    }
    if json_out {
        let mut report = BTreeMap::new();
        report.insert("l1_norm", json!(interp.x.l1_norm()));
        report.insert("dual_value", json!(interp.dual_value));
        report.insert("n0", json!(interp.n0));
        report.insert("peak", json!(interp.peak));
        report.insert("x", json!(interp.x.entries()));
        print_json(&json!(report));
    } else {
        println!("|x|_1               {}", format_value(interp.x.l1_norm()));
        println!("dual value          {}", format_value(interp.dual_value));
        println!("n0                  {}", interp.n0);
        println!("support             {:?}", interp.x.support());
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let j = cli.json;
    match &cli.command {
        Command::Dual { common, rho } => cmd_dual(j, common, *rho),
        Command::Solve { common, rho, out } => cmd_solve(j, common, *rho, out.as_deref()),
        Command::Vertices { common, rho, n_from, n_to, with_box, brute, find_n0, out } => {
            cmd_vertices(j, common, *rho, *n_from, *n_to, *with_box, *brute, *find_n0, out.as_deref())
        }
        Command::Table { common, jobs, out } => cmd_table(j, common, *jobs, out.as_deref()),
        Command::Interp { common, clean, out } => cmd_interp(j, common, *clean, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
