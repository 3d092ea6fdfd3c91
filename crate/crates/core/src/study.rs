//! Study configuration, refinement sweeps and the CSV emitters behind the
//! command-line interface.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::dual::{best_span_approximation_error, build_dual, DualKind};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_biharmonic, assemble_laplace_and_mass, condensed_error_norms, h2star_projection,
    solve_cg, solve_generalized_eigen, EigenRange, ManufacturedSolution,
};
use crate::gauss::legendre_shifted;
use crate::model::{load_model, MultiPatchModel};
use crate::mortar::{build_constraints, condense, null_space, Continuity, NullSpaceBasis, Strategy};
use crate::spline::SplineSpace1D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    /// Best approximation of `sin(4πx)` in the dual span, 1D.
    L2Projection1D,
    /// Best approximation of the Legendre polynomials on two elements, 1D.
    LegendreReproduction,
    /// Clamped biharmonic solve with a manufactured load.
    Biharmonic,
    /// Best H²∗ approximation in the condensed space.
    H2Projection,
    /// Membrane eigenproblem (full spectrum).
    MembraneEigen,
}

impl Problem {
    pub fn parse(s: &str) -> Option<Problem> {
        match s {
            "l2-projection-1d" => Some(Problem::L2Projection1D),
            "legendre-reproduction" => Some(Problem::LegendreReproduction),
            "biharmonic" => Some(Problem::Biharmonic),
            "h2-projection" => Some(Problem::H2Projection),
            "membrane-eigen" => Some(Problem::MembraneEigen),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Problem::L2Projection1D => "l2-projection-1d",
            Problem::LegendreReproduction => "legendre-reproduction",
            Problem::Biharmonic => "biharmonic",
            Problem::H2Projection => "h2-projection",
            Problem::MembraneEigen => "membrane-eigen",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub problem: Problem,
    /// Unused by the 1D studies.
    pub model: Option<PathBuf>,
    pub strategy: Strategy,
    pub continuity: Continuity,
    pub degrees: Vec<usize>,
    pub refines: Vec<usize>,
    pub exact: Option<ManufacturedSolution>,
    pub out_dir: Option<PathBuf>,
    pub cg_tol: f64,
}

impl StudyConfig {
    pub fn new(problem: Problem, strategy: Strategy) -> StudyConfig {
        StudyConfig {
            problem,
            model: None,
            strategy,
            continuity: Continuity::C1,
            degrees: vec![2, 3],
            refines: (0..5).collect(),
            exact: None,
            out_dir: None,
            cg_tol: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degrees.iter().any(|&d| !(2..=5).contains(&d)) {
            return Err(Error::Config("degrees must lie in 2..=5".into()));
        }
        if self.refines.iter().any(|&r| r > 8) {
            return Err(Error::Config("refinement levels must lie in 0..=8".into()));
        }
        let needs_model = matches!(
            self.problem,
            Problem::Biharmonic | Problem::H2Projection | Problem::MembraneEigen
        );
        if needs_model && self.model.is_none() {
            return Err(Error::Config(format!("{} needs a model file", self.problem.name())));
        }
        if matches!(self.problem, Problem::Biharmonic | Problem::H2Projection) {
            if self.exact.is_none() {
                return Err(Error::Config("manufactured solution required".into()));
            }
            if self.continuity != Continuity::C1 {
                return Err(Error::Config("fourth-order problems need C1 coupling".into()));
            }
        }
        Ok(())
    }

    /// FNV-1a over the canonical description; stamped into every output row.
    pub fn hash(&self) -> u64 {
        let mut s = String::new();
        let _ = write!(
            s,
            "{}|{}|{:?}|{:?}|{:?}|{:?}|{}",
            self.problem.name(),
            self.strategy.name(),
            self.continuity,
            self.degrees,
            self.refines,
            self.model,
            self.cg_tol,
        );
        if let Some(e) = self.exact {
            let _ = write!(s, "|{}", e.name());
        }
        let mut h: u64 = 0xcbf29ce484222325;
        for b in s.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

/// One sweep entry. Optional fields stay empty in the CSV when a problem
/// does not produce them.
#[derive(Debug, Clone)]
pub struct StudyRow {
    pub degree: usize,
    pub refine: usize,
    pub dofs: usize,
    pub condensed_dofs: usize,
    pub nnz: usize,
    pub l2_err: Option<f64>,
    pub h2_err: Option<f64>,
    pub l2_rate: Option<f64>,
    pub h2_rate: Option<f64>,
    pub omega_max: Option<f64>,
    pub omega_min: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    /// `(degree, refine, reason)` for configurations that could not run.
    pub skipped: Vec<(usize, usize, String)>,
    /// Least-squares slopes over the last three levels, per degree.
    pub slopes: Vec<(usize, Option<f64>, Option<f64>)>,
}

impl StudyResult {
    pub fn rows_for_degree(&self, degree: usize) -> Vec<&StudyRow> {
        self.rows.iter().filter(|r| r.degree == degree).collect()
    }

    /// Least-squares slope of `log2(err)` against the level index over the
    /// last `window` rows of one degree.
    pub fn ls_slope(&self, degree: usize, window: usize, h2: bool) -> Option<f64> {
        let errs: Vec<f64> = self
            .rows_for_degree(degree)
            .iter()
            .filter_map(|r| if h2 { r.h2_err } else { r.l2_err })
            .collect();
        ls_slope_of(&errs, window)
    }
}

/// Least-squares slope of `-log2(e)` versus level over the trailing window.
pub fn ls_slope_of(errs: &[f64], window: usize) -> Option<f64> {
    let vals: Vec<f64> = errs.iter().copied().filter(|e| *e > 0.0).collect();
    if vals.len() < 2 {
        return None;
    }
    let tail = &vals[vals.len().saturating_sub(window)..];
    let n = tail.len() as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (i, e) in tail.iter().enumerate() {
        let x = i as f64;
        let y = -e.log2();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

fn push_rates(rows: &mut [StudyRow]) {
    // consecutive-pair rates within one degree, in level order
    for i in 1..rows.len() {
        if rows[i].degree != rows[i - 1].degree || rows[i].refine != rows[i - 1].refine + 1 {
            continue;
        }
        if let (Some(a), Some(b)) = (rows[i - 1].l2_err, rows[i].l2_err) {
            if a > 0.0 && b > 0.0 {
                rows[i].l2_rate = Some((a / b).log2());
            }
        }
        if let (Some(a), Some(b)) = (rows[i - 1].h2_err, rows[i].h2_err) {
            if a > 0.0 && b > 0.0 {
                rows[i].h2_rate = Some((a / b).log2());
            }
        }
    }
}

/// Run a full refinement/degree sweep and (optionally) write `results.csv`
/// and `meta.txt` into the configured output directory.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let mut result = StudyResult::default();

    let model = match &cfg.model {
        Some(path) => Some(load_model(path)?),
        None => None,
    };

    for &degree in &cfg.degrees {
        for &refine in &cfg.refines {
            let start = Instant::now();
            let outcome = run_row(cfg, model.as_ref(), degree, refine);
            match outcome {
                Ok(mut row) => {
                    row.seconds = start.elapsed().as_secs_f64();
                    result.rows.push(row);
                }
                Err(e) => result.skipped.push((degree, refine, e.to_string())),
            }
        }
    }
    push_rates(&mut result.rows);
    for &degree in &cfg.degrees {
        let l2 = result.ls_slope(degree, 3, false);
        let h2 = result.ls_slope(degree, 3, true);
        result.slopes.push((degree, l2, h2));
    }

    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        write_results_csv(&dir.join("results.csv"), cfg, &result)?;
        write_meta(&dir.join("meta.txt"), cfg, &result)?;
    }
    Ok(result)
}

fn run_row(
    cfg: &StudyConfig,
    model: Option<&MultiPatchModel>,
    degree: usize,
    refine: usize,
) -> Result<StudyRow> {
    match cfg.problem {
        Problem::L2Projection1D => {
            let elems = 8usize << refine;
            let space = SplineSpace1D::open_uniform(degree, elems)?;
            let dual = build_dual(&space, two_patch_dual_kind(cfg.strategy))?;
            let err = best_span_approximation_error(&dual, |t| (4.0 * std::f64::consts::PI * t).sin());
            Ok(StudyRow {
                degree,
                refine,
                dofs: space.dimension(),
                condensed_dofs: dual.dual_dimension(),
                nnz: 0,
                l2_err: Some(err),
                h2_err: None,
                l2_rate: None,
                h2_rate: None,
                omega_max: None,
                omega_min: None,
                seconds: 0.0,
            })
        }
        Problem::LegendreReproduction => {
            // `refine` indexes the Legendre order here
            let order = refine;
            let space = SplineSpace1D::open_uniform(degree, 2)?;
            let dual = build_dual(&space, two_patch_dual_kind(cfg.strategy))?;
            let err = best_span_approximation_error(&dual, |t| legendre_shifted(order, t));
            Ok(StudyRow {
                degree,
                refine,
                dofs: space.dimension(),
                condensed_dofs: dual.dual_dimension(),
                nnz: 0,
                l2_err: Some(err),
                h2_err: None,
                l2_rate: None,
                h2_rate: None,
                omega_max: None,
                omega_min: None,
                seconds: 0.0,
            })
        }
        Problem::Biharmonic => {
            let model = model.unwrap().discretize(degree, refine)?;
            let exact = cfg.exact.unwrap();
            let sys = assemble_biharmonic(&model, Some(exact));
            let (basis, km, fm) = condensed_system(cfg, &model, &sys.stiffness, &sys.load)?;
            let um = solve_cg(&km, &fm, cfg.cg_tol, cg_iters(km.nrows()))?;
            let (l2, h2) = condensed_error_norms(&model, &basis, &um, exact);
            Ok(StudyRow {
                degree,
                refine,
                dofs: model.total_dofs(),
                condensed_dofs: km.nrows(),
                nnz: km.nnz(),
                l2_err: Some(l2),
                h2_err: Some(h2),
                l2_rate: None,
                h2_rate: None,
                omega_max: None,
                omega_min: None,
                seconds: 0.0,
            })
        }
        Problem::H2Projection => {
            let model = model.unwrap().discretize(degree, refine)?;
            let exact = cfg.exact.unwrap();
            let duals = crate::mortar::build_interface_duals(&model, cfg.strategy)?;
            let cs = crate::mortar::assemble_constraints(&model, &duals, cfg.strategy, cfg.continuity)?;
            let basis = null_space(&cs)?;
            let um = h2star_projection(&model, &basis, exact, cfg.cg_tol)?;
            let (l2, h2) = condensed_error_norms(&model, &basis, &um, exact);
            Ok(StudyRow {
                degree,
                refine,
                dofs: model.total_dofs(),
                condensed_dofs: basis.n_condensed(),
                nnz: 0,
                l2_err: Some(l2),
                h2_err: Some(h2),
                l2_rate: None,
                h2_rate: None,
                omega_max: None,
                omega_min: None,
                seconds: 0.0,
            })
        }
        Problem::MembraneEigen => {
            let model = model.unwrap().discretize(degree, refine)?;
            let sys = assemble_laplace_and_mass(&model);
            let (basis, km, _) = condensed_system(cfg, &model, &sys.stiffness, &sys.load)?;
            let (mm, _) = condense(sys.mass.as_ref().unwrap(), &sys.load, &basis)?;
            let vals = solve_generalized_eigen(&km, &mm, EigenRange::Full)?;
            let omega_min = vals.first().map(|v| v.max(0.0).sqrt());
            let omega_max = vals.last().map(|v| v.max(0.0).sqrt());
            Ok(StudyRow {
                degree,
                refine,
                dofs: model.total_dofs(),
                condensed_dofs: km.nrows(),
                nnz: km.nnz(),
                l2_err: None,
                h2_err: None,
                l2_rate: None,
                h2_rate: None,
                omega_max,
                omega_min,
                seconds: 0.0,
            })
        }
    }
}

/// Strategies `G`/`OG` and `B`/`OB` share the two-patch dual kinds in the
/// 1D studies; the coarsened kinds keep their own.
fn two_patch_dual_kind(strategy: Strategy) -> DualKind {
    match strategy {
        Strategy::G | Strategy::OG => DualKind::Global,
        Strategy::B | Strategy::OB => DualKind::Bezier,
        Strategy::MG => DualKind::GlobalCoarsened,
        Strategy::MB => DualKind::BezierModified,
    }
}

fn cg_iters(n: usize) -> usize {
    (400 * n).max(20_000)
}

fn condensed_system(
    cfg: &StudyConfig,
    model: &MultiPatchModel,
    k: &nalgebra_sparse::CsrMatrix<f64>,
    f: &nalgebra::DVector<f64>,
) -> Result<(NullSpaceBasis, nalgebra_sparse::CsrMatrix<f64>, nalgebra::DVector<f64>)> {
    let cs = build_constraints(model, cfg.strategy, cfg.continuity)?;
    let basis = null_space(&cs)?;
    let (km, fm) = condense(k, f, &basis)?;
    Ok((basis, km, fm))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

fn write_results_csv(path: &Path, cfg: &StudyConfig, result: &StudyResult) -> Result<()> {
    let mut out = String::new();
    out.push_str(
        "degree,refine,dofs,condensed_dofs,nnz,l2_err,h2_err,l2_rate,h2_rate,omega_max,omega_min,seconds,l2_slope3,h2_slope3,config_hash\n",
    );
    let hash = cfg.hash();
    for row in &result.rows {
        let slopes = result
            .slopes
            .iter()
            .find(|(d, _, _)| *d == row.degree)
            .map(|(_, l2, h2)| (*l2, *h2))
            .unwrap_or((None, None));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{:.6},{},{},{hash:016x}",
            row.degree,
            row.refine,
            row.dofs,
            row.condensed_dofs,
            row.nnz,
            fmt_opt(row.l2_err),
            fmt_opt(row.h2_err),
            fmt_opt(row.l2_rate),
            fmt_opt(row.h2_rate),
            fmt_opt(row.omega_max),
            fmt_opt(row.omega_min),
            row.seconds,
            fmt_opt(slopes.0),
            fmt_opt(slopes.1),
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_meta(path: &Path, cfg: &StudyConfig, result: &StudyResult) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "problem: {}", cfg.problem.name());
    let _ = writeln!(out, "strategy: {}", cfg.strategy.name());
    let _ = writeln!(out, "continuity: {:?}", cfg.continuity);
    let _ = writeln!(out, "degrees: {:?}", cfg.degrees);
    let _ = writeln!(out, "refines: {:?}", cfg.refines);
    if let Some(m) = &cfg.model {
        let _ = writeln!(out, "model: {}", m.display());
    }
    if let Some(e) = cfg.exact {
        let _ = writeln!(out, "exact: {}", e.name());
    }
    let _ = writeln!(out, "cg_tol: {:e}", cfg.cg_tol);
    let _ = writeln!(out, "config_hash: {:016x}", cfg.hash());
    for (d, r, reason) in &result.skipped {
        let _ = writeln!(out, "skipped: degree {d} refine {r}: {reason}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Coordinate-format sparsity dumps of the uncoupled, global-dual coupled
/// and Bézier-dual coupled stiffness matrices at one configuration.
pub fn emit_sparsity(cfg: &StudyConfig) -> Result<Vec<(String, usize)>> {
    cfg.validate()?;
    let model_path = cfg
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("sparsity needs a model".into()))?;
    let degree = *cfg.degrees.first().unwrap_or(&2);
    let refine = *cfg.refines.first().unwrap_or(&0);
    let model = load_model(model_path)?.discretize(degree, refine)?;
    let sys = assemble_biharmonic(&model, None);

    let mut outputs = Vec::new();
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;

    let dump = |name: &str, m: &nalgebra_sparse::CsrMatrix<f64>| -> Result<usize> {
        let mut text = String::new();
        for (i, j, v) in m.triplet_iter() {
            let _ = writeln!(text, "{i} {j} {v:.17e}");
        }
        std::fs::write(dir.join(name), text)?;
        Ok(m.nnz())
    };

    outputs.push(("sparsity_uncoupled.txt".to_string(), dump("sparsity_uncoupled.txt", &sys.stiffness)?));
    for (label, strategy) in [("global", global_variant(cfg.strategy)), ("bezier", bezier_variant(cfg.strategy))] {
        let cs = build_constraints(&model, strategy, Continuity::C1)?;
        let basis = null_space(&cs)?;
        let (km, _) = condense(&sys.stiffness, &sys.load, &basis)?;
        let name = format!("sparsity_{label}.txt");
        let nnz = dump(&name, &km)?;
        outputs.push((name, nnz));
    }
    Ok(outputs)
}

fn global_variant(s: Strategy) -> Strategy {
    match s {
        Strategy::MG | Strategy::MB => Strategy::MG,
        Strategy::OG | Strategy::OB => Strategy::OG,
        _ => Strategy::G,
    }
}

fn bezier_variant(s: Strategy) -> Strategy {
    match s {
        Strategy::MG | Strategy::MB => Strategy::MB,
        Strategy::OG | Strategy::OB => Strategy::OB,
        _ => Strategy::B,
    }
}

/// Normalized spectrum `(k/N, ω_h(k)/ω_exact(k))` of the membrane problem,
/// using the analytic square-membrane frequencies as the reference.
pub fn emit_spectrum(cfg: &StudyConfig) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    if cfg.problem != Problem::MembraneEigen {
        return Err(Error::Config("spectrum output needs the membrane problem".into()));
    }
    let model_path = cfg.model.as_ref().unwrap();
    let degree = *cfg.degrees.first().unwrap_or(&2);
    let refine = *cfg.refines.first().unwrap_or(&0);
    let model = load_model(model_path)?.discretize(degree, refine)?;

    let sys = assemble_laplace_and_mass(&model);
    let (basis, km, _) = condensed_system(cfg, &model, &sys.stiffness, &sys.load)?;
    let (mm, _) = condense(sys.mass.as_ref().unwrap(), &sys.load, &basis)?;
    let vals = solve_generalized_eigen(&km, &mm, EigenRange::Full)?;
    let n = vals.len();
    let _ = basis;

    let side = domain_side_length(&model);
    let exact = exact_membrane_frequencies(side, n);
    let rows: Vec<(f64, f64)> = vals
        .iter()
        .enumerate()
        .map(|(k, &l)| ((k + 1) as f64 / n as f64, l.max(0.0).sqrt() / exact[k]))
        .collect();

    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        let mut text = String::from("mode_fraction,omega_ratio\n");
        for (x, y) in &rows {
            let _ = writeln!(text, "{x:.12e},{y:.12e}");
        }
        std::fs::write(dir.join("spectrum.csv"), text)?;
    }
    Ok(rows)
}

/// Side length of the (square) membrane domain from the geometry hull.
pub fn domain_side_length(model: &MultiPatchModel) -> f64 {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &model.patches {
        for pt in &p.geometry.points {
            for d in 0..2 {
                lo[d] = lo[d].min(pt[d]);
                hi[d] = hi[d].max(pt[d]);
            }
        }
    }
    (hi[0] - lo[0]).max(hi[1] - lo[1])
}

/// The analytic fixed-membrane frequencies `π √((m/L)² + (n/L)²)` in
/// ascending order.
pub fn exact_membrane_frequencies(side: f64, count: usize) -> Vec<f64> {
    // enumerate enough (m, n) pairs to cover `count` modes
    let mut grid = 2;
    loop {
        let mut freqs = Vec::with_capacity(grid * grid);
        for m in 1..=grid {
            for n in 1..=grid {
                freqs.push(std::f64::consts::PI * ((m * m + n * n) as f64).sqrt() / side);
            }
        }
        freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if freqs.len() >= count && grid * grid >= 2 * count {
            freqs.truncate(count);
            return freqs;
        }
        grid *= 2;
    }
}
