use std::path::PathBuf;
use std::process::ExitCode;

use bezmortar::fem::ManufacturedSolution;
use bezmortar::model::load_model;
use bezmortar::mortar::{
    build_constraints, null_space, null_space_residual, Continuity, Family, Strategy,
};
use bezmortar::study::{emit_sparsity, emit_spectrum, run_study, Problem, StudyConfig, StudyResult};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bezmortar", version, about = "Dual mortar studies on multi-patch B-spline models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct StudyArgs {
    /// Model definition file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Coupling strategy: G, B, MG, MB, OG or OB.
    #[arg(long, default_value = "B")]
    strategy: String,
    /// Comma-separated polynomial degrees (2..=5).
    #[arg(long, default_value = "2,3")]
    degrees: String,
    /// Comma-separated refinement levels (0..=8).
    #[arg(long, default_value = "0,1,2,3")]
    refines: String,
    /// Output directory for results.csv / meta.txt.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Conjugate gradient relative-residual tolerance.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a model and report constraint/null-space diagnostics.
    Verify {
        #[command(flatten)]
        common: StudyArgs,
    },
    /// 1D dual projection studies (sinusoid; optionally Legendre orders).
    Project {
        #[command(flatten)]
        common: StudyArgs,
        /// Project Legendre polynomials on two elements instead of the sinusoid.
        #[arg(long)]
        legendre: bool,
    },
    /// Clamped biharmonic convergence sweep with a manufactured solution.
    SolveBiharmonic {
        #[command(flatten)]
        common: StudyArgs,
        /// Manufactured solution: square-sine, triangle-sine or square-sine-squared.
        #[arg(long, default_value = "square-sine")]
        exact: String,
    },
    /// Best H²∗ approximation sweep in the condensed space.
    H2Project {
        #[command(flatten)]
        common: StudyArgs,
        #[arg(long, default_value = "square-sine")]
        exact: String,
    },
    /// Membrane eigenvalue sweep (full spectrum extremes per row).
    Eigen {
        #[command(flatten)]
        common: StudyArgs,
        /// Coupling continuity: c0 or c1.
        #[arg(long, default_value = "c1")]
        continuity: String,
        /// Also write the normalized spectrum of the first degree/refine.
        #[arg(long)]
        spectrum: bool,
    },
    /// Dump stiffness sparsity patterns (uncoupled / global / Bézier).
    Sparsity {
        #[command(flatten)]
        common: StudyArgs,
    },
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .filter(|t| !t.is_empty())
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad list entry '{t}': {e}")))
        .collect()
}

fn build_config(problem: Problem, args: &StudyArgs) -> Result<StudyConfig, String> {
    let strategy = Strategy::parse(&args.strategy).ok_or_else(|| format!("unknown strategy '{}'", args.strategy))?;
    let mut cfg = StudyConfig::new(problem, strategy);
    cfg.model = args.model.clone();
    cfg.degrees = parse_list(&args.degrees)?;
    cfg.refines = parse_list(&args.refines)?;
    cfg.out_dir = args.out.clone();
    cfg.cg_tol = args.tol;
    Ok(cfg)
}

fn print_rows(result: &StudyResult) {
    println!("degree refine      dofs condensed        l2_err        h2_err  l2_rate  h2_rate     omega_max");
    for row in &result.rows {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:12.4e}")).unwrap_or_else(|| format!("{:>12}", "-"));
        let fr = |v: Option<f64>| v.map(|x| format!("{x:8.2}")).unwrap_or_else(|| format!("{:>8}", "-"));
        println!(
            "{:>6} {:>6} {:>9} {:>9} {} {} {} {} {}",
            row.degree,
            row.refine,
            row.dofs,
            row.condensed_dofs,
            fmt(row.l2_err),
            fmt(row.h2_err),
            fr(row.l2_rate),
            fr(row.h2_rate),
            fmt(row.omega_max),
        );
    }
    for (degree, l2, h2) in &result.slopes {
        let f = |v: &Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
        println!("degree {degree}: ls3 slopes  l2 {}  h2 {}", f(l2), f(h2));
    }
    for (d, r, reason) in &result.skipped {
        println!("skipped degree {d} refine {r}: {reason}");
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Verify { common } => {
            let model_path = common.model.clone().ok_or("verify needs --model")?;
            let degrees = parse_list(&common.degrees)?;
            let refines = parse_list(&common.refines)?;
            let degree = *degrees.first().unwrap_or(&2);
            let refine = *refines.first().unwrap_or(&1);
            let base = load_model(&model_path).map_err(|e| e.to_string())?;
            let model = base.discretize(degree, refine).map_err(|e| e.to_string())?;
            let report = model.validate();
            for (sev, msg) in &report.findings {
                println!("{sev:?}: {msg}");
            }
            if !report.passed() {
                return Ok(false);
            }
            let strategy = Strategy::parse(&common.strategy).ok_or("unknown strategy")?;
            let interior = model.vertices.iter().any(|v| v.interior);
            if strategy.is_two_patch_only() && interior {
                return Err(format!("strategy {} needs a model without interior vertices", strategy.name()));
            }
            let cs = build_constraints(&model, strategy, Continuity::C1).map_err(|e| e.to_string())?;
            let basis = null_space(&cs).map_err(|e| e.to_string())?;
            let res = null_space_residual(&cs, &basis);
            let value_rows = cs.rows.iter().filter(|r| r.family == Family::ValueJump).count();
            let deriv_rows = cs.rows.len() - value_rows;
            println!("interface,value_rows,derivative_rows,scaling");
            for (fi, c) in cs.scalings.iter().enumerate() {
                let v = cs.rows.iter().filter(|r| r.interface == Some(fi) && r.family == Family::ValueJump).count();
                let d = cs.rows.iter().filter(|r| r.interface == Some(fi) && r.family == Family::DerivativeJump).count();
                println!("{fi},{v},{d},{c:.6e}");
            }
            println!(
                "rows: {} value + {} derivative; vertex rows {}; split columns {}; vertex rank {}",
                value_rows,
                deriv_rows,
                basis.diagnostics.vertex_rows,
                basis.diagnostics.split_columns,
                basis.diagnostics.vertex_rank,
            );
            println!("condensed dofs: {} of {} free", basis.n_condensed(), cs.free_dofs());
            println!("null-space residual: {res:.3e}");
            if res > 1e-10 {
                println!("FAIL: residual above 1e-10");
                return Ok(false);
            }
            println!("verify: all checks passed");
            Ok(true)
        }
        Command::Project { common, legendre } => {
            let problem = if legendre { Problem::LegendreReproduction } else { Problem::L2Projection1D };
            let cfg = build_config(problem, &common)?;
            let result = run_study(&cfg).map_err(|e| e.to_string())?;
            print_rows(&result);
            Ok(result.skipped.is_empty())
        }
        Command::SolveBiharmonic { common, exact } => {
            let mut cfg = build_config(Problem::Biharmonic, &common)?;
            cfg.exact = Some(ManufacturedSolution::parse(&exact).ok_or_else(|| format!("unknown solution '{exact}'"))?);
            let result = run_study(&cfg).map_err(|e| e.to_string())?;
            print_rows(&result);
            Ok(result.skipped.is_empty())
        }
        Command::H2Project { common, exact } => {
            let mut cfg = build_config(Problem::H2Projection, &common)?;
            cfg.exact = Some(ManufacturedSolution::parse(&exact).ok_or_else(|| format!("unknown solution '{exact}'"))?);
            let result = run_study(&cfg).map_err(|e| e.to_string())?;
            print_rows(&result);
            Ok(result.skipped.is_empty())
        }
        Command::Eigen {
            common,
            continuity,
            spectrum,
        } => {
            let mut cfg = build_config(Problem::MembraneEigen, &common)?;
            cfg.continuity = Continuity::parse(&continuity).ok_or_else(|| format!("unknown continuity '{continuity}'"))?;
            let result = run_study(&cfg).map_err(|e| e.to_string())?;
            print_rows(&result);
            if spectrum {
                let rows = emit_spectrum(&cfg).map_err(|e| e.to_string())?;
                println!("spectrum: {} modes (ratio range {:.4} .. {:.4})",
                    rows.len(),
                    rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
                    rows.iter().map(|r| r.1).fold(0.0f64, f64::max));
            }
            Ok(result.skipped.is_empty())
        }
        Command::Sparsity { common } => {
            let cfg = build_config(Problem::Biharmonic, &common).map(|mut c| {
                c.exact = Some(ManufacturedSolution::SquareSine);
                c
            })?;
            let outputs = emit_sparsity(&cfg).map_err(|e| e.to_string())?;
            for (name, nnz) in outputs {
                println!("{name}: {nnz} nonzeros");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
