//! Galerkin assembly and solves: biharmonic and Laplace stiffness, mass
//! matrices, manufactured-solution loads, preconditioned conjugate
//! gradients, dense generalized eigensolves and broken-norm evaluation.

use crate::error::{Error, Result};
use crate::gauss::GaussRule;
use crate::jet::Jet2;
use crate::model::{det2, inv2, MultiPatchModel};
use crate::mortar::NullSpaceBasis;
use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

/// Assembled (uncondensed) patch-local operators on the broken space.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub stiffness: CsrMatrix<f64>,
    pub mass: Option<CsrMatrix<f64>>,
    pub load: DVector<f64>,
    /// Dofs eliminated by the strong boundary conditions.
    pub boundary_dofs: Vec<bool>,
}

/// Closed-form benchmark solutions with exact derivatives through order four.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManufacturedSolution {
    /// `sin(2πx) sin(2πy) (x y (x-1) (y-1))²` on the unit square, clamped.
    SquareSine,
    /// `sin(2πx) sin(2πy) (y (3x-y) (3x+2y-9))²` on the triangle, clamped.
    TriangleSine,
    /// `sin²(2πx) sin²(2πy)` on the unit square, clamped.
    SquareSineSquared,
}

impl ManufacturedSolution {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "square-sine" => Some(Self::SquareSine),
            "triangle-sine" => Some(Self::TriangleSine),
            "square-sine-squared" => Some(Self::SquareSineSquared),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SquareSine => "square-sine",
            Self::TriangleSine => "triangle-sine",
            Self::SquareSineSquared => "square-sine-squared",
        }
    }

    /// Taylor data at `(x, y)` through fourth order.
    pub fn jet(self, x: f64, y: f64) -> Jet2 {
        let tau = 2.0 * std::f64::consts::PI;
        match self {
            Self::SquareSine => {
                let jx = Jet2::x(x);
                let jy = Jet2::y(y);
                let one = Jet2::constant(1.0);
                let poly = jx * jy * (jx - one) * (jy - one);
                Jet2::sin_ax(tau, 0.0, x) * Jet2::sin_ay(tau, 0.0, y) * poly.powi(2)
            }
            Self::TriangleSine => {
                let jx = Jet2::x(x);
                let jy = Jet2::y(y);
                let f1 = jx * 3.0 - jy;
                let f2 = jx * 3.0 + jy * 2.0 - Jet2::constant(9.0);
                let poly = jy * f1 * f2;
                Jet2::sin_ax(tau, 0.0, x) * Jet2::sin_ay(tau, 0.0, y) * poly.powi(2)
            }
            Self::SquareSineSquared => {
                let sx = Jet2::sin_ax(tau, 0.0, x);
                let sy = Jet2::sin_ay(tau, 0.0, y);
                sx * sx * sy * sy
            }
        }
    }

    pub fn value(self, x: f64, y: f64) -> f64 {
        self.jet(x, y).value()
    }
}

/// Values, physical gradients and physical Hessians of all basis functions
/// supported at one quadrature point of a patch.
struct PointBasis {
    /// Local univariate windows.
    first_u: usize,
    first_v: usize,
    n_u: usize,
    n_v: usize,
    value: Vec<f64>,
    grad: Vec<[f64; 2]>,
    hess: Vec<[f64; 3]>,
    jac_det: f64,
    phys: [f64; 2],
}

impl PointBasis {
    fn local(&self, a: usize, b: usize) -> usize {
        a + self.n_u * b
    }
}

fn point_basis(model: &MultiPatchModel, patch: usize, xi: f64, eta: f64, with_hessian: bool) -> PointBasis {
    let p = &model.patches[patch];
    let order = if with_hessian { 2 } else { 1 };
    let (fu, du) = p.space.u.eval_ders(xi, order.min(p.space.u.degree())).unwrap();
    let (fv, dv) = p.space.v.eval_ders(eta, order.min(p.space.v.degree())).unwrap();
    let get = |t: &Vec<Vec<f64>>, o: usize, i: usize| if o < t.len() { t[o][i] } else { 0.0 };

    let jac = p.geometry.jacobian(xi, eta);
    let jac_det = det2(&jac);
    let inv = inv2(&jac);
    let phys = p.geometry.eval(xi, eta);
    let geo2 = if with_hessian {
        p.geometry.second_derivatives(xi, eta)
    } else {
        [[0.0; 2]; 3]
    };

    let n_u = du[0].len();
    let n_v = dv[0].len();
    let mut value = Vec::with_capacity(n_u * n_v);
    let mut grad = Vec::with_capacity(n_u * n_v);
    let mut hess = Vec::with_capacity(n_u * n_v);
    for b in 0..n_v {
        for a in 0..n_u {
            let n = du[0][a] * dv[0][b];
            let n_xi = du[1][a] * dv[0][b];
            let n_eta = du[0][a] * dv[1][b];
            // physical gradient: ∇_x N = (∂param/∂phys)ᵀ ∇_ξ N
            let gx = inv[0][0] * n_xi + inv[1][0] * n_eta;
            let gy = inv[0][1] * n_xi + inv[1][1] * n_eta;
            value.push(n);
            grad.push([gx, gy]);
            if with_hessian {
                let n_xx = get(&du, 2, a) * dv[0][b];
                let n_xe = du[1][a] * dv[1][b];
                let n_ee = du[0][a] * get(&dv, 2, b);
                // subtract the geometry curvature term before the pullback
                let h = [
                    [n_xx - gx * geo2[0][0] - gy * geo2[0][1], n_xe - gx * geo2[1][0] - gy * geo2[1][1]],
                    [n_xe - gx * geo2[1][0] - gy * geo2[1][1], n_ee - gx * geo2[2][0] - gy * geo2[2][1]],
                ];
                let mut hp = [0.0; 3]; // xx, xy, yy
                for (slot, (aa, bb)) in [(0usize, (0usize, 0usize)), (1, (0, 1)), (2, (1, 1))] {
                    let mut s = 0.0;
                    for k in 0..2 {
                        for l in 0..2 {
                            s += inv[k][aa] * h[k][l] * inv[l][bb];
                        }
                    }
                    hp[slot] = s;
                }
                hess.push(hp);
            }
        }
    }
    PointBasis {
        first_u: fu,
        first_v: fv,
        n_u,
        n_v,
        value,
        grad,
        hess,
        jac_det,
        phys,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Operator {
    Biharmonic,
    LaplaceWithMass,
    /// Full H² inner product (L² + H¹ + Hessian contraction).
    H2Inner,
}

fn assemble_operator(
    model: &MultiPatchModel,
    op: Operator,
    forcing: Option<ManufacturedSolution>,
    quad_extra: usize,
) -> AssembledSystem {
    let offsets = model.dof_offsets();
    let n = model.total_dofs();
    let mut k_coo = CooMatrix::new(n, n);
    let mut m_coo = CooMatrix::new(n, n);
    let mut load = DVector::zeros(n);
    let with_hessian = matches!(op, Operator::Biharmonic | Operator::H2Inner);

    for (pid, patch) in model.patches.iter().enumerate() {
        let pu = patch.space.u.degree();
        let pv = patch.space.v.degree();
        let rule_u = GaussRule::legendre(pu + 1 + quad_extra);
        let rule_v = GaussRule::legendre(pv + 1 + quad_extra);
        let n_local = (pu + 1) * (pv + 1);
        let mut k_local = DMatrix::<f64>::zeros(n_local, n_local);
        let mut m_local = DMatrix::<f64>::zeros(n_local, n_local);
        let mut f_local = DVector::<f64>::zeros(n_local);

        for (au, bu) in patch.space.u.elements() {
            for (av, bv) in patch.space.v.elements() {
                k_local.fill(0.0);
                m_local.fill(0.0);
                f_local.fill(0.0);
                let mut first = (0, 0);
                for (xi, wu) in rule_u.mapped(au, bu) {
                    for (eta, wv) in rule_v.mapped(av, bv) {
                        let pb = point_basis(model, pid, xi, eta, with_hessian);
                        first = (pb.first_u, pb.first_v);
                        let w = wu * wv * pb.jac_det;
                        for i in 0..n_local {
                            for j in i..n_local {
                                let kij = match op {
                                    Operator::Biharmonic => {
                                        let li = pb.hess[i][0] + pb.hess[i][2];
                                        let lj = pb.hess[j][0] + pb.hess[j][2];
                                        li * lj
                                    }
                                    Operator::LaplaceWithMass => {
                                        pb.grad[i][0] * pb.grad[j][0] + pb.grad[i][1] * pb.grad[j][1]
                                    }
                                    Operator::H2Inner => {
                                        pb.value[i] * pb.value[j]
                                            + pb.grad[i][0] * pb.grad[j][0]
                                            + pb.grad[i][1] * pb.grad[j][1]
                                            + pb.hess[i][0] * pb.hess[j][0]
                                            + 2.0 * pb.hess[i][1] * pb.hess[j][1]
                                            + pb.hess[i][2] * pb.hess[j][2]
                                    }
                                };
                                k_local[(i, j)] += w * kij;
                            }
                        }
                        match op {
                            Operator::LaplaceWithMass => {
                                for i in 0..n_local {
                                    for j in i..n_local {
                                        m_local[(i, j)] += w * pb.value[i] * pb.value[j];
                                    }
                                }
                            }
                            Operator::Biharmonic => {
                                if let Some(exact) = forcing {
                                    let f = exact.jet(pb.phys[0], pb.phys[1]).bilaplacian();
                                    for i in 0..n_local {
                                        f_local[i] += w * f * pb.value[i];
                                    }
                                }
                            }
                            Operator::H2Inner => {
                                if let Some(exact) = forcing {
                                    let jet = exact.jet(pb.phys[0], pb.phys[1]);
                                    let (v, gx, gy) = (jet.value(), jet.dx(), jet.dy());
                                    let (hxx, hxy, hyy) = (jet.dxx(), jet.dxy(), jet.dyy());
                                    for i in 0..n_local {
                                        f_local[i] += w
                                            * (pb.value[i] * v
                                                + pb.grad[i][0] * gx
                                                + pb.grad[i][1] * gy
                                                + pb.hess[i][0] * hxx
                                                + 2.0 * pb.hess[i][1] * hxy
                                                + pb.hess[i][2] * hyy);
                                    }
                                }
                            }
                        }
                    }
                }
                // scatter (symmetric fill of the upper local triangle)
                let nu = pu + 1;
                for j in 0..n_local {
                    let (ju, jv) = (j % nu, j / nu);
                    let gj = offsets[pid] + patch.space.index(first.0 + ju, first.1 + jv);
                    for i in 0..=j {
                        let (iu, iv) = (i % nu, i / nu);
                        let gi = offsets[pid] + patch.space.index(first.0 + iu, first.1 + iv);
                        let v = k_local[(i, j)];
                        if v != 0.0 {
                            k_coo.push(gi, gj, v);
                            if gi != gj {
                                k_coo.push(gj, gi, v);
                            }
                        }
                        let mv = m_local[(i, j)];
                        if mv != 0.0 {
                            m_coo.push(gi, gj, mv);
                            if gi != gj {
                                m_coo.push(gj, gi, mv);
                            }
                        }
                    }
                    load[gj] += f_local[j];
                }
            }
        }
    }

    AssembledSystem {
        stiffness: CsrMatrix::from(&k_coo),
        mass: if matches!(op, Operator::LaplaceWithMass) {
            Some(CsrMatrix::from(&m_coo))
        } else {
            None
        },
        load,
        boundary_dofs: model.boundary_dofs(),
    }
}

/// Clamped-plate stiffness `∫ ΔN_i ΔN_j` and load `∫ (Δ²u) N_i`.
pub fn assemble_biharmonic(model: &MultiPatchModel, exact: Option<ManufacturedSolution>) -> AssembledSystem {
    assemble_operator(model, Operator::Biharmonic, exact, 0)
}

/// Membrane stiffness `∫ ∇N_i · ∇N_j` and consistent mass `∫ N_i N_j`.
pub fn assemble_laplace_and_mass(model: &MultiPatchModel) -> AssembledSystem {
    assemble_operator(model, Operator::LaplaceWithMass, None, 0)
}

/// Full broken H² inner-product Gramian and the right-hand side pairing with
/// `exact`, used by the best-approximation projection.
pub fn assemble_h2_product(model: &MultiPatchModel, exact: ManufacturedSolution) -> AssembledSystem {
    assemble_operator(model, Operator::H2Inner, Some(exact), 0)
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// definite sparse system.
pub fn solve_cg(
    a: &CsrMatrix<f64>,
    b: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<DVector<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Dimension("cg: matrix and vector sizes differ".into()));
    }
    let diag: Vec<f64> = (0..n)
        .map(|i| {
            let row = a.row(i);
            row.col_indices()
                .iter()
                .zip(row.values())
                .find(|(&c, _)| c == i)
                .map(|(_, &v)| v)
                .unwrap_or(1.0)
        })
        .collect();
    let precond = |r: &DVector<f64>| -> DVector<f64> {
        DVector::from_fn(n, |i, _| r[i] / diag[i])
    };

    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(DVector::zeros(n));
    }
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut history = Vec::new();
    for it in 0..max_iters {
        let ap = a * &p;
        let alpha = rz / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rel = r.norm() / b_norm;
        history.push(rel);
        if rel <= tol {
            return Ok(x);
        }
        z = precond(&r);
        let rz_next = r.dot(&z);
        let beta = rz_next / rz;
        rz = rz_next;
        p = &z + beta * &p;
        if !rel.is_finite() {
            return Err(Error::CgDiverged {
                iters: it + 1,
                residual: rel,
                history,
            });
        }
    }
    Err(Error::CgDiverged {
        iters: max_iters,
        residual: r.norm() / b_norm,
        history,
    })
}

/// Which eigenvalues to return.
#[derive(Debug, Clone, Copy)]
pub enum EigenRange {
    Smallest(usize),
    Largest(usize),
    Full,
}

fn csr_to_faer(a: &CsrMatrix<f64>) -> faer::Mat<f64> {
    let mut m = faer::Mat::<f64>::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        m[(i, j)] += v;
    }
    m
}

/// Generalized symmetric eigenvalues `K x = ω² M x` by dense reduction:
/// `M = L Lᵀ`, then a full symmetric eigensolve of `L⁻¹ K L⁻ᵀ`.
/// Returns eigenvalues sorted ascending.
pub fn solve_generalized_eigen(
    k: &CsrMatrix<f64>,
    m: &CsrMatrix<f64>,
    range: EigenRange,
) -> Result<Vec<f64>> {
    let n = k.nrows();
    if m.nrows() != n || k.ncols() != n || m.ncols() != n {
        return Err(Error::Dimension("eigen: K and M sizes differ".into()));
    }
    let kf = csr_to_faer(k);
    let mf = csr_to_faer(m);
    let llt = mf
        .llt(faer::Side::Lower)
        .map_err(|_| Error::Eigen("mass matrix not positive definite".into()))?;
    let l = llt.L();
    let par = faer::get_global_parallelism();

    // A = L⁻¹ K L⁻ᵀ, symmetric
    let mut a = kf;
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, a.as_mut(), par);
    let mut at = a.transpose().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, at.as_mut(), par);

    let evd = at
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let mut vals: Vec<f64> = (0..n).map(|i| evd.S()[i]).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(match range {
        EigenRange::Full => vals,
        EigenRange::Smallest(k) => vals.into_iter().take(k).collect(),
        EigenRange::Largest(k) => {
            let skip = vals.len().saturating_sub(k);
            vals.into_iter().skip(skip).collect()
        }
    })
}

/// Best approximation of `exact` in the condensed space under the broken
/// full-H² inner product. Returns condensed coefficients.
pub fn h2star_projection(
    model: &MultiPatchModel,
    basis: &NullSpaceBasis,
    exact: ManufacturedSolution,
    tol: f64,
) -> Result<DVector<f64>> {
    let sys = assemble_h2_product(model, exact);
    let (gram, rhs) = crate::mortar::condense(&sys.stiffness, &sys.load, basis)?;
    solve_cg(&gram, &rhs, tol, 40 * gram.nrows().max(100))
}

/// Evaluate a broken-space field (value, gradient, Hessian) at a parametric
/// point of one patch.
pub fn field_at(
    model: &MultiPatchModel,
    coeffs: &DVector<f64>,
    patch: usize,
    xi: f64,
    eta: f64,
) -> (f64, [f64; 2], [f64; 3]) {
    let offsets = model.dof_offsets();
    let pb = point_basis(model, patch, xi, eta, true);
    let space = &model.patches[patch].space;
    let mut v = 0.0;
    let mut g = [0.0; 2];
    let mut h = [0.0; 3];
    for b in 0..pb.n_v {
        for a in 0..pb.n_u {
            let c = coeffs[offsets[patch] + space.index(pb.first_u + a, pb.first_v + b)];
            let l = pb.local(a, b);
            v += c * pb.value[l];
            g[0] += c * pb.grad[l][0];
            g[1] += c * pb.grad[l][1];
            h[0] += c * pb.hess[l][0];
            h[1] += c * pb.hess[l][1];
            h[2] += c * pb.hess[l][2];
        }
    }
    (v, g, h)
}

/// Broken L² and H²∗ errors against the exact solution, with an
/// over-integrated Gauss rule (`p + 2` points per direction).
pub fn error_norms(
    model: &MultiPatchModel,
    coeffs: &DVector<f64>,
    exact: ManufacturedSolution,
) -> (f64, f64) {
    let mut l2 = 0.0;
    let mut h2 = 0.0;
    for (pid, patch) in model.patches.iter().enumerate() {
        let rule_u = GaussRule::legendre(patch.space.u.degree() + 2);
        let rule_v = GaussRule::legendre(patch.space.v.degree() + 2);
        for (au, bu) in patch.space.u.elements() {
            for (av, bv) in patch.space.v.elements() {
                for (xi, wu) in rule_u.mapped(au, bu) {
                    for (eta, wv) in rule_v.mapped(av, bv) {
                        let (v, g, h) = field_at(model, coeffs, pid, xi, eta);
                        let jet = {
                            let p = patch.geometry.eval(xi, eta);
                            exact.jet(p[0], p[1])
                        };
                        let w = wu * wv * det2(&patch.geometry.jacobian(xi, eta));
                        let dv = v - jet.value();
                        let dgx = g[0] - jet.dx();
                        let dgy = g[1] - jet.dy();
                        let dxx = h[0] - jet.dxx();
                        let dxy = h[1] - jet.dxy();
                        let dyy = h[2] - jet.dyy();
                        l2 += w * dv * dv;
                        h2 += w
                            * (dv * dv
                                + dgx * dgx
                                + dgy * dgy
                                + dxx * dxx
                                + 2.0 * dxy * dxy
                                + dyy * dyy);
                    }
                }
            }
        }
    }
    (l2.sqrt(), h2.sqrt())
}

/// H²∗ norm of the error of a condensed coefficient vector.
pub fn condensed_error_norms(
    model: &MultiPatchModel,
    basis: &NullSpaceBasis,
    condensed: &DVector<f64>,
    exact: ManufacturedSolution,
) -> (f64, f64) {
    let full = &basis.matrix * condensed;
    error_norms(model, &full, exact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use crate::mortar::{build_constraints, condense, null_space, Continuity, Strategy};
    use rand::{Rng, SeedableRng};

    fn unit_square(degree: usize, refines: usize) -> MultiPatchModel {
        let text = r#"
        patch {
          id 0
          degree_u 1  degree_v 1
          knots_u { 0 0 1 1 }
          knots_v { 0 0 1 1 }
          control_points { 0 0  1 0  0 1  1 1 }
          elems_u 2  elems_v 2
        }
        bc { type clamped }
        "#;
        parse_model(text).unwrap().discretize(degree, refines).unwrap()
    }

    #[test]
    fn manufactured_solutions_satisfy_their_boundary_conditions() {
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            for (x, y, nx, ny) in [
                (t, 0.0, 0.0, -1.0),
                (t, 1.0, 0.0, 1.0),
                (0.0, t, -1.0, 0.0),
                (1.0, t, 1.0, 0.0),
            ] {
                for exact in [ManufacturedSolution::SquareSine, ManufacturedSolution::SquareSineSquared] {
                    let jet = exact.jet(x, y);
                    assert!(jet.value().abs() < 1e-12);
                    assert!((jet.dx() * nx + jet.dy() * ny).abs() < 1e-12);
                }
            }
            // triangle edges: y = 0, y = 3x, 3x + 2y = 9
            let exact = ManufacturedSolution::TriangleSine;
            for (x, y) in [
                (3.0 * t, 0.0),
                (t, 3.0 * t),
                (3.0 - 2.0 * t / 3.0, t),
            ] {
                let jet = exact.jet(x, y);
                assert!(jet.value().abs() < 1e-10, "triangle u({x},{y}) = {}", jet.value());
                assert!(jet.dx().abs() < 1e-9 && jet.dy().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stiffness_matches_overintegrated_oracle() {
        let model = unit_square(2, 0);
        let base = assemble_biharmonic(&model, None);
        let oracle = assemble_operator(&model, Operator::Biharmonic, None, 3);
        let diff = DMatrix::from(&base.stiffness) - DMatrix::from(&oracle.stiffness);
        assert!(diff.abs().max() < 1e-12);
    }

    #[test]
    fn stiffness_is_symmetric() {
        let model = unit_square(3, 1);
        let sys = assemble_biharmonic(&model, Some(ManufacturedSolution::SquareSine));
        let k = DMatrix::from(&sys.stiffness);
        let rel = (k.clone() - k.transpose()).abs().max() / k.abs().max();
        assert!(rel < 1e-12);
    }

    #[test]
    fn hessian_pullback_matches_finite_differences() {
        // distorted biquadratic geometry exercises the curvature terms
        let text = r#"
        patch {
          id 0
          degree_u 2  degree_v 2
          knots_u { 0 0 0 1 1 1 }
          knots_v { 0 0 0 1 1 1 }
          control_points {
            0 0   0.55 0   1 0
            0 0.5   0.45 0.55   1 0.5
            0 1   0.5 1   1 1
          }
          elems_u 2  elems_v 2
        }
        bc { type clamped }
        "#;
        let model = parse_model(text).unwrap().discretize(3, 0).unwrap();
        let geom = &model.patches[0].geometry;
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        let mut coeffs = DVector::zeros(model.total_dofs());
        for v in coeffs.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for _ in 0..10 {
            let (xi, eta): (f64, f64) = (rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9));
            let (_, _, h) = field_at(&model, &coeffs, 0, xi, eta);
            // central differences of the physical gradient in physical space:
            // use the parametric chart to locate offset points
            let phys = geom.eval(xi, eta);
            let hfd = 1e-5;
            let invert = |target: [f64; 2]| -> (f64, f64) {
                // Newton in two variables, seeded at the base point
                let (mut u, mut v) = (xi, eta);
                for _ in 0..50 {
                    let f = geom.eval(u, v);
                    let r = [f[0] - target[0], f[1] - target[1]];
                    if (r[0] * r[0] + r[1] * r[1]).sqrt() < 1e-13 {
                        break;
                    }
                    let inv = inv2(&geom.jacobian(u, v));
                    u -= inv[0][0] * r[0] + inv[0][1] * r[1];
                    v -= inv[1][0] * r[0] + inv[1][1] * r[1];
                }
                (u, v)
            };
            let grad_at = |target: [f64; 2], invert: &mut dyn FnMut([f64; 2]) -> (f64, f64)| {
                let (u, v) = invert(target);
                let (_, g, _) = field_at(&model, &coeffs, 0, u, v);
                g
            };
            let gxp = grad_at([phys[0] + hfd, phys[1]], &mut |t| invert(t));
            let gxm = grad_at([phys[0] - hfd, phys[1]], &mut |t| invert(t));
            let gyp = grad_at([phys[0], phys[1] + hfd], &mut |t| invert(t));
            let gym = grad_at([phys[0], phys[1] - hfd], &mut |t| invert(t));
            let fd = [
                (gxp[0] - gxm[0]) / (2.0 * hfd),
                (gyp[0] - gym[0]) / (2.0 * hfd),
                (gyp[1] - gym[1]) / (2.0 * hfd),
            ];
            for (have, want) in [(h[0], fd[0]), (h[1], fd[1]), (h[2], fd[2])] {
                let scale = want.abs().max(1.0);
                assert!(
                    (have - want).abs() / scale < 1e-5,
                    "hessian {have} vs fd {want}"
                );
            }
        }
    }

    #[test]
    fn biharmonic_patch_test_quadratic() {
        // Δ²(x² + xy - y²) = 0: the Galerkin residual vanishes on the free
        // dofs when the exact interpolant is inserted
        let model = unit_square(2, 1);
        let sys = assemble_biharmonic(&model, None);
        let space = &model.patches[0].space;
        let grev = |s: &crate::spline::SplineSpace1D| -> Vec<f64> {
            let p = s.degree();
            (0..s.dimension())
                .map(|i| s.knots()[i + 1..i + p + 1].iter().sum::<f64>() / p as f64)
                .collect()
        };
        let poly = |x: f64, y: f64| x * x + x * y - y * y;
        let gu = grev(&space.u);
        let gv = grev(&space.v);
        let colloc = |s: &crate::spline::SplineSpace1D, pts: &[f64]| {
            let n = s.dimension();
            let mut a = DMatrix::<f64>::zeros(n, n);
            for (r, &x) in pts.iter().enumerate() {
                let (first, vals) = s.eval_basis(x, 0).unwrap();
                for (j, v) in vals.iter().enumerate() {
                    a[(r, first + j)] = *v;
                }
            }
            a.try_inverse().unwrap()
        };
        let au = colloc(&space.u, &gu);
        let av = colloc(&space.v, &gv);
        let mut vals = DMatrix::<f64>::zeros(gu.len(), gv.len());
        for (i, &x) in gu.iter().enumerate() {
            for (j, &y) in gv.iter().enumerate() {
                vals[(i, j)] = poly(x, y);
            }
        }
        let c = au * vals * av.transpose();
        let mut u = DVector::zeros(model.total_dofs());
        for iu in 0..gu.len() {
            for iv in 0..gv.len() {
                u[space.index(iu, iv)] = c[(iu, iv)];
            }
        }
        let residual = &sys.stiffness * &u; // zero forcing
        for d in 0..model.total_dofs() {
            if !sys.boundary_dofs[d] {
                assert!(residual[d].abs() < 1e-9, "dof {d}: {}", residual[d]);
            }
        }
    }

    #[test]
    fn mass_row_sums_are_basis_integrals() {
        let model = unit_square(2, 1);
        let sys = assemble_laplace_and_mass(&model);
        let m = sys.mass.as_ref().unwrap();
        // row sums equal ∫ N_i dΩ by partition of unity
        let space = &model.patches[0].space;
        let iu = space.u.basis_integrals();
        let iv = space.v.basis_integrals();
        for d in 0..model.total_dofs() {
            let (a, b) = space.unindex(d);
            let expect = iu[a] * iv[b];
            let sum: f64 = m.row(d).values().iter().sum();
            assert!((sum - expect).abs() < 1e-13);
        }
        // SPD
        assert!(DMatrix::from(m).cholesky().is_some());
    }

    #[test]
    fn cg_solves_identity_and_random_spd() {
        let mut coo = CooMatrix::new(4, 4);
        for i in 0..4 {
            coo.push(i, i, 1.0);
        }
        let eye = CsrMatrix::from(&coo);
        let b = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        let x = solve_cg(&eye, &b, 1e-14, 10).unwrap();
        assert!((x - b).norm() < 1e-14);

        let mut rng = rand::rngs::StdRng::seed_from_u64(23);
        let a = DMatrix::<f64>::from_fn(50, 50, |_, _| rng.gen_range(-1.0..1.0));
        let spd = &a * a.transpose() + DMatrix::identity(50, 50) * 50.0;
        let mut coo = CooMatrix::new(50, 50);
        for i in 0..50 {
            for j in 0..50 {
                coo.push(i, j, spd[(i, j)]);
            }
        }
        let asp = CsrMatrix::from(&coo);
        let b = DVector::from_fn(50, |i, _| (i as f64 * 0.7).sin());
        let x = solve_cg(&asp, &b, 1e-14, 500).unwrap();
        let oracle = spd.lu().solve(&b).unwrap();
        assert!((x - oracle).norm() < 1e-9);
    }

    #[test]
    fn cg_divergence_reports_history() {
        // indefinite system: CG cannot converge
        let mut coo = CooMatrix::new(2, 2);
        coo.push(0, 0, 1.0);
        coo.push(1, 1, -1.0);
        let a = CsrMatrix::from(&coo);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        match solve_cg(&a, &b, 1e-14, 7) {
            Err(crate::error::Error::CgDiverged { iters, history, .. }) => {
                assert!(iters <= 7);
                assert_eq!(history.len(), iters);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn membrane_fundamental_frequency() {
        // single patch (0,3)², p = 2 refined: ω²₁₁ = 2π²/9
        let text = r#"
        patch {
          id 0
          degree_u 1  degree_v 1
          knots_u { 0 0 1 1 }
          knots_v { 0 0 1 1 }
          control_points { 0 0  3 0  0 3  3 3 }
          elems_u 3  elems_v 3
        }
        bc { type fixed }
        "#;
        let model = parse_model(text).unwrap().discretize(2, 2).unwrap();
        let sys = assemble_laplace_and_mass(&model);
        let cs = build_constraints(&model, Strategy::B, Continuity::C0).unwrap();
        let basis = null_space(&cs).unwrap();
        let (km, _) = condense(&sys.stiffness, &sys.load, &basis).unwrap();
        let (mm, _) = condense(sys.mass.as_ref().unwrap(), &sys.load, &basis).unwrap();
        let vals = solve_generalized_eigen(&km, &mm, EigenRange::Smallest(1)).unwrap();
        let exact = 2.0 * std::f64::consts::PI.powi(2) / 9.0;
        let rel = (vals[0] - exact).abs() / exact;
        assert!(rel < 1e-3, "ω²₁₁ = {} vs {exact} (rel {rel:.2e})", vals[0]);
    }

    #[test]
    fn error_norms_vanish_for_exact_interpolant_and_match_zero_field() {
        let model = unit_square(3, 2);
        let zero = DVector::zeros(model.total_dofs());
        let (l2, h2) = error_norms(&model, &zero, ManufacturedSolution::SquareSineSquared);
        // ‖sin²(2πx)sin²(2πy)‖ = 3/8
        assert!((l2 - 0.375).abs() < 1e-10, "l2 = {l2}");
        assert!(h2 > l2);
    }
}
