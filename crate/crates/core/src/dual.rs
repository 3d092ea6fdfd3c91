//! Dual bases for univariate spline spaces: the global dual (Gramian
//! inverse), the compactly supported Bézier dual built from element
//! extraction, and the end-coarsened variants used near patch vertices.

use crate::error::{Error, Result};
use crate::gauss::GaussRule;
use crate::spline::{bernstein_values, extraction_operators, SplineSpace1D};
use nalgebra::DMatrix;

/// Which dual construction a [`DualBasis`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualKind {
    /// Dense dual from the inverse primal Gramian.
    Global,
    /// Element-local dual with the same support as the primal functions.
    Bezier,
    /// Global dual of the end-coarsened space, biorthogonal to the interior
    /// primal functions under an index shift of two.
    GlobalCoarsened,
    /// Bézier dual with the three functions nearest each end summed.
    BezierModified,
}

#[derive(Debug, Clone)]
enum Repr {
    /// Dual functions as coefficient rows over `basis_space`.
    Coefficients {
        basis_space: SplineSpace1D,
        coeffs: DMatrix<f64>,
    },
    /// Per-element dual extraction operators.
    Elementwise { elements: Vec<BezierDualElement> },
}

#[derive(Debug, Clone)]
pub struct BezierDualElement {
    pub span: (f64, f64),
    pub first_function: usize,
    /// `diag(ω) (Rᵉ)ᵀ (Gᵉ)⁻¹` on this element; row `i` holds the Bernstein
    /// coefficients of dual `first_function + i` restricted to the element.
    pub dual_extraction: DMatrix<f64>,
    /// Bézier projection weights of the supported functions.
    pub weights: Vec<f64>,
}

/// A dual basis for (part of) a univariate spline space.
///
/// Plain kinds satisfy `⟨N̂_i, N_j⟩ = δ_ij`; coarsened kinds satisfy the
/// shifted relation `⟨N̂_i, N_{j+2}⟩ = δ_ij` against the original space and
/// skip the two primal functions nearest each end.
#[derive(Debug, Clone)]
pub struct DualBasis {
    kind: DualKind,
    space: SplineSpace1D,
    dual_dimension: usize,
    index_shift: usize,
    repr: Repr,
}

impl DualBasis {
    pub fn kind(&self) -> DualKind {
        self.kind
    }

    /// The primal space the duals pair with.
    pub fn space(&self) -> &SplineSpace1D {
        &self.space
    }

    pub fn dual_dimension(&self) -> usize {
        self.dual_dimension
    }

    /// Dual `i` pairs with primal `i + index_shift()`.
    pub fn index_shift(&self) -> usize {
        self.index_shift
    }

    /// Values of the dual functions possibly nonzero at `t`, as
    /// `(first_dual_index, values)`.
    pub fn eval_window(&self, t: f64) -> (usize, Vec<f64>) {
        match &self.repr {
            Repr::Coefficients { basis_space, coeffs } => {
                let (first, vals) = basis_space
                    .eval_basis(t, 0)
                    .expect("dual evaluation inside the knot range");
                let mut out = vec![0.0; self.dual_dimension];
                for (i, o) in out.iter_mut().enumerate() {
                    for (j, v) in vals.iter().enumerate() {
                        *o += coeffs[(i, first + j)] * v;
                    }
                }
                (0, out)
            }
            Repr::Elementwise { elements } => {
                let e = self.space.element_of(t);
                let el = &elements[e];
                let (a, b) = el.span;
                let bern = bernstein_values(self.space.degree(), (t - a) / (b - a));
                let rows = el.dual_extraction.nrows();
                let mut vals = vec![0.0; rows];
                for (i, v) in vals.iter_mut().enumerate() {
                    for (j, bj) in bern.iter().enumerate() {
                        *v += el.dual_extraction[(i, j)] * bj;
                    }
                }
                if self.kind == DualKind::BezierModified {
                    merge_modified_window(el.first_function, &vals, self.space.dimension())
                } else {
                    (el.first_function, vals)
                }
            }
        }
    }

    /// `⟨N̂_i, f⟩` for every dual function, by per-element Gauss quadrature
    /// with the same rule used for the Gramians.
    pub fn quasi_interpolate(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let rule = GaussRule::legendre(self.space.degree() + 1);
        let mut out = vec![0.0; self.dual_dimension];
        for (a, b) in self.space.elements() {
            for (t, w) in rule.mapped(a, b) {
                let (first, vals) = self.eval_window(t);
                let ft = f(t);
                for (i, v) in vals.iter().enumerate() {
                    out[first + i] += w * v * ft;
                }
            }
        }
        out
    }

    /// Evaluate the quasi-interpolant `Σ_i c_i N_{i+shift}` at `x`.
    pub fn quasi_interpolant_value(&self, coeffs: &[f64], x: f64) -> f64 {
        let (first, vals) = self.space.eval_basis(x, 0).expect("inside knot range");
        let mut sum = 0.0;
        for (j, v) in vals.iter().enumerate() {
            let primal = first + j;
            if primal >= self.index_shift {
                let i = primal - self.index_shift;
                if i < self.dual_dimension {
                    sum += coeffs[i] * v;
                }
            }
        }
        sum
    }

    /// Pairing `⟨N̂_i, N_j⟩` against the primal space, by quadrature.
    /// Biorthogonality checks compare this against the (shifted) identity.
    pub fn pairing_matrix(&self) -> DMatrix<f64> {
        let rule = GaussRule::legendre(self.space.degree() + 1);
        let n = self.space.dimension();
        let mut g = DMatrix::zeros(self.dual_dimension, n);
        for (a, b) in self.space.elements() {
            for (t, w) in rule.mapped(a, b) {
                let (df, dv) = self.eval_window(t);
                let (pf, pv) = self.space.eval_basis(t, 0).unwrap();
                for (i, di) in dv.iter().enumerate() {
                    for (j, pj) in pv.iter().enumerate() {
                        g[(df + i, pf + j)] += w * di * pj;
                    }
                }
            }
        }
        g
    }
}

/// Gramian `⟨N_i, N_j⟩` of a spline space, exact Gauss quadrature.
pub fn primal_gramian(space: &SplineSpace1D) -> DMatrix<f64> {
    let rule = GaussRule::legendre(space.degree() + 1);
    let n = space.dimension();
    let mut g = DMatrix::zeros(n, n);
    for (a, b) in space.elements() {
        for (t, w) in rule.mapped(a, b) {
            let (first, vals) = space.eval_basis(t, 0).unwrap();
            for (i, vi) in vals.iter().enumerate() {
                for (j, vj) in vals.iter().enumerate() {
                    g[(first + i, first + j)] += w * vi * vj;
                }
            }
        }
    }
    g
}

/// Global dual basis: `N̂ᴳ_i = Σ_j (G⁻¹)_ij N_j`.
pub fn build_global_dual(space: &SplineSpace1D) -> Result<DualBasis> {
    let g = primal_gramian(space);
    let coeffs = g
        .cholesky()
        .ok_or_else(|| Error::Internal("singular primal Gramian".into()))?
        .inverse();
    Ok(DualBasis {
        kind: DualKind::Global,
        space: space.clone(),
        dual_dimension: space.dimension(),
        index_shift: 0,
        repr: Repr::Coefficients {
            basis_space: space.clone(),
            coeffs,
        },
    })
}

/// Bézier dual basis from element extraction and Bézier projection weights.
pub fn build_bezier_dual(space: &SplineSpace1D) -> Result<DualBasis> {
    Ok(DualBasis {
        kind: DualKind::Bezier,
        space: space.clone(),
        dual_dimension: space.dimension(),
        index_shift: 0,
        repr: Repr::Elementwise {
            elements: bezier_dual_elements(space),
        },
    })
}

fn bezier_dual_elements(space: &SplineSpace1D) -> Vec<BezierDualElement> {
    let p = space.degree();
    let ops = extraction_operators(space);
    let totals = space.basis_integrals();
    ops.into_iter()
        .map(|el| {
            let (a, b) = el.span;
            // ∫_e N_i = row of Cᵉ times the Bernstein integrals (uniform h/(p+1))
            let bern_int = (b - a) / (p as f64 + 1.0);
            let weights: Vec<f64> = (0..=p)
                .map(|i| {
                    let row_sum: f64 = (0..=p).map(|j| el.extraction[(i, j)]).sum();
                    row_sum * bern_int / totals[el.first_function + i]
                })
                .collect();
            let ginv = el
                .gramian
                .clone()
                .cholesky()
                .expect("Bernstein Gramian is SPD")
                .inverse();
            let mut dual = el.reconstruction.transpose() * ginv;
            for (i, w) in weights.iter().enumerate() {
                for j in 0..=p {
                    dual[(i, j)] *= w;
                }
            }
            BezierDualElement {
                span: el.span,
                first_function: el.first_function,
                dual_extraction: dual,
                weights,
            }
        })
        .collect()
}

/// Coarsened global dual: duals live in the end-coarsened space and are
/// biorthogonal to the interior primal functions, `⟨N̂_i, N_{j+2}⟩ = δ_ij`.
pub fn build_global_dual_coarsened(space: &SplineSpace1D) -> Result<DualBasis> {
    let coarse = space.remove_knots_near_ends()?;
    let m = coarse.dimension();
    debug_assert_eq!(m, space.dimension() - 4);
    // mixed Gramian ⟨coarse_i, fine_{j+2}⟩; the coarse breakpoints are a
    // subset of the fine ones, so fine-element quadrature is exact
    let rule = GaussRule::legendre(space.degree() + 1);
    let mut mixed = DMatrix::zeros(m, m);
    for (a, b) in space.elements() {
        for (t, w) in rule.mapped(a, b) {
            let (cf, cv) = coarse.eval_basis(t, 0).unwrap();
            let (pf, pv) = space.eval_basis(t, 0).unwrap();
            for (i, ci) in cv.iter().enumerate() {
                for (j, pj) in pv.iter().enumerate() {
                    let col = pf + j;
                    if col >= 2 && col - 2 < m {
                        mixed[(cf + i, col - 2)] += w * ci * pj;
                    }
                }
            }
        }
    }
    let coeffs = mixed
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Internal("singular mixed Gramian in coarsened dual".into()))?;
    Ok(DualBasis {
        kind: DualKind::GlobalCoarsened,
        space: space.clone(),
        dual_dimension: m,
        index_shift: 2,
        repr: Repr::Coefficients {
            basis_space: coarse,
            coeffs,
        },
    })
}

/// Modified Bézier dual: the three duals nearest each end are summed, the
/// `n - 6` interior duals keep their original shapes re-indexed so the
/// shifted biorthogonality `⟨N̂ᵐᵒᵈ_i, N_{j+2}⟩ = δ_ij` holds.
pub fn build_bezier_dual_modified(space: &SplineSpace1D) -> Result<DualBasis> {
    let n = space.dimension();
    if n < 8 {
        return Err(Error::SpaceTooSmall(n));
    }
    Ok(DualBasis {
        kind: DualKind::BezierModified,
        space: space.clone(),
        dual_dimension: n - 4,
        index_shift: 2,
        repr: Repr::Elementwise {
            elements: bezier_dual_elements(space),
        },
    })
}

/// Fold plain Bézier dual values into the modified numbering: originals
/// `{0,1,2} → 0`, `{n-3,n-2,n-1} → n-5`, interior `o → o - 2`.
fn merge_modified_window(first: usize, vals: &[f64], n: usize) -> (usize, Vec<f64>) {
    let modified_of = |o: usize| -> usize {
        if o <= 2 {
            0
        } else if o >= n - 3 {
            n - 5
        } else {
            o - 2
        }
    };
    let lo = modified_of(first);
    let hi = modified_of(first + vals.len() - 1);
    let mut out = vec![0.0; hi - lo + 1];
    for (k, v) in vals.iter().enumerate() {
        out[modified_of(first + k) - lo] += v;
    }
    (lo, out)
}

/// Dual of the requested kind.
pub fn build_dual(space: &SplineSpace1D, kind: DualKind) -> Result<DualBasis> {
    match kind {
        DualKind::Global => build_global_dual(space),
        DualKind::Bezier => build_bezier_dual(space),
        DualKind::GlobalCoarsened => build_global_dual_coarsened(space),
        DualKind::BezierModified => build_bezier_dual_modified(space),
    }
}

/// L² distance between `f` and the quasi-interpolant induced by `dual`.
///
/// The quasi-interpolant reproduces every primal spline, so this error is
/// optimal for both dual kinds.
pub fn quasi_interpolation_error(dual: &DualBasis, f: impl Fn(f64) -> f64 + Copy) -> f64 {
    let coeffs = dual.quasi_interpolate(f);
    let rule = GaussRule::legendre(dual.space().degree() + 3);
    let mut err2 = 0.0;
    for (a, b) in dual.space().elements() {
        for (t, w) in rule.mapped(a, b) {
            let d = dual.quasi_interpolant_value(&coeffs, t) - f(t);
            err2 += w * d * d;
        }
    }
    err2.sqrt()
}

/// L² distance between `f` and its best approximation in the span of the
/// dual functions themselves.
///
/// This measures the approximation power of the multiplier space. The global
/// dual spans the primal space and converges optimally; the Bézier dual span
/// reproduces only constants and its error is first order.
pub fn best_span_approximation_error(dual: &DualBasis, f: impl Fn(f64) -> f64 + Copy) -> f64 {
    let space = dual.space();
    let m = dual.dual_dimension();
    let rule_exact = GaussRule::legendre(space.degree() + 1);
    let rule_fine = GaussRule::legendre(space.degree() + 3);

    // dual Gramian (piecewise polynomial products: exact)
    let mut gram = DMatrix::<f64>::zeros(m, m);
    for (a, b) in space.elements() {
        for (t, w) in rule_exact.mapped(a, b) {
            let (first, vals) = dual.eval_window(t);
            for (i, vi) in vals.iter().enumerate() {
                for (j, vj) in vals.iter().enumerate() {
                    gram[(first + i, first + j)] += w * vi * vj;
                }
            }
        }
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(m);
    for (a, b) in space.elements() {
        for (t, w) in rule_fine.mapped(a, b) {
            let (first, vals) = dual.eval_window(t);
            let ft = f(t);
            for (i, vi) in vals.iter().enumerate() {
                rhs[first + i] += w * vi * ft;
            }
        }
    }
    let coeffs = gram
        .clone()
        .cholesky()
        .expect("dual Gramian is SPD")
        .solve(&rhs);

    let mut err2 = 0.0;
    for (a, b) in space.elements() {
        for (t, w) in rule_fine.mapped(a, b) {
            let (first, vals) = dual.eval_window(t);
            let approx: f64 = vals.iter().enumerate().map(|(i, v)| coeffs[first + i] * v).sum();
            let d = approx - f(t);
            err2 += w * d * d;
        }
    }
    err2.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::legendre_shifted;
    use rand::{Rng, SeedableRng};

    fn shifted_identity_error(dual: &DualBasis) -> f64 {
        let g = dual.pairing_matrix();
        let shift = dual.index_shift();
        let mut worst = 0.0f64;
        for i in 0..dual.dual_dimension() {
            for j in 0..dual.dual_dimension() {
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j + shift)] - expect).abs());
            }
        }
        worst
    }

    #[test]
    fn global_dual_linear_closed_form() {
        let s = SplineSpace1D::new(1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let d = build_global_dual(&s).unwrap();
        match &d.repr {
            Repr::Coefficients { coeffs, .. } => {
                let expected = [[4.0, -2.0], [-2.0, 4.0]];
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((coeffs[(i, j)] - expected[i][j]).abs() < 1e-12);
                    }
                }
            }
            _ => unreachable!(),
        }
        // N̂_1(x) = 4 - 6x: ∫ (4-6x)(1-x) dx = 1 and ∫ (4-6x)x dx = 0
        let rule = GaussRule::legendre(3);
        let i1: f64 = rule.mapped(0.0, 1.0).map(|(x, w)| w * (4.0 - 6.0 * x) * (1.0 - x)).sum();
        let i2: f64 = rule.mapped(0.0, 1.0).map(|(x, w)| w * (4.0 - 6.0 * x) * x).sum();
        assert!((i1 - 1.0).abs() < 1e-13);
        assert!(i2.abs() < 1e-13);
    }

    #[test]
    fn biorthogonality_global_and_bezier() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let p = rng.gen_range(2..=5);
            let ne = rng.gen_range(4..=32);
            let s = SplineSpace1D::open_uniform(p, ne).unwrap();
            for kind in [DualKind::Global, DualKind::Bezier] {
                let d = build_dual(&s, kind).unwrap();
                let err = shifted_identity_error(&d);
                assert!(err < 1e-10, "p = {p}, ne = {ne}, {kind:?}: {err}");
            }
        }
    }

    #[test]
    fn single_element_global_equals_bezier() {
        for p in 2..=5 {
            let s = SplineSpace1D::open_uniform(p, 1).unwrap();
            let g = build_global_dual(&s).unwrap();
            let b = build_bezier_dual(&s).unwrap();
            for k in 0..50 {
                let t = (k as f64 + 0.5) / 50.0;
                let (fg, vg) = g.eval_window(t);
                let (fb, vb) = b.eval_window(t);
                assert_eq!(fg, fb);
                for (x, y) in vg.iter().zip(&vb) {
                    assert!((x - y).abs() < 1e-10, "p = {p}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn bezier_weights_sum_to_one() {
        let s = SplineSpace1D::from_breakpoints(3, &[0.0, 0.2, 0.5, 0.6, 1.0]).unwrap();
        let els = bezier_dual_elements(&s);
        let mut sums = vec![0.0; s.dimension()];
        for el in &els {
            for (i, w) in el.weights.iter().enumerate() {
                sums[el.first_function + i] += w;
            }
        }
        for (i, sum) in sums.iter().enumerate() {
            assert!((sum - 1.0).abs() < 1e-12, "function {i}: {sum}");
        }
    }

    #[test]
    fn symmetric_middle_function_splits_evenly() {
        // cubic two-element space: the middle function is symmetric about 1/2
        let s = SplineSpace1D::new(3, vec![0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let els = bezier_dual_elements(&s);
        let w0 = els[0].weights[2];
        let w1 = els[1].weights[2 - els[1].first_function];
        assert!((w0 - 0.5).abs() < 1e-12);
        assert!((w1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_quadratic_weights_closed_form() {
        // p = 2, knots {0,0,0,.5,1,1,1}: N_1 = 2x(2-3x) on [0,.5), 2(1-x)² on
        // [.5,1); element integrals 1/4 and 1/12 give weights (3/4, 1/4)
        let s = SplineSpace1D::new(2, vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]).unwrap();
        let els = bezier_dual_elements(&s);
        assert!((els[0].weights[1] - 0.75).abs() < 1e-12);
        assert!((els[1].weights[1 - els[1].first_function] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn element_level_biorthogonality() {
        let s = SplineSpace1D::from_breakpoints(3, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let d = build_bezier_dual(&s).unwrap();
        let els = match &d.repr {
            Repr::Elementwise { elements } => elements.clone(),
            _ => unreachable!(),
        };
        let rule = GaussRule::legendre(s.degree() + 1);
        for el in &els {
            let (a, b) = el.span;
            let w_count = el.weights.len();
            for i in 0..w_count {
                for j in 0..w_count {
                    let mut integral = 0.0;
                    for (t, w) in rule.mapped(a, b) {
                        let (df, dv) = d.eval_window(t);
                        let (pf, pv) = s.eval_basis(t, 0).unwrap();
                        let gi = el.first_function + i;
                        let gj = el.first_function + j;
                        let dvi = if gi >= df && gi < df + dv.len() { dv[gi - df] } else { 0.0 };
                        let pvj = if gj >= pf && gj < pf + pv.len() { pv[gj - pf] } else { 0.0 };
                        integral += w * dvi * pvj;
                    }
                    let expect = if i == j { el.weights[i] } else { 0.0 };
                    assert!(
                        (integral - expect).abs() < 1e-10,
                        "element {:?}, ({i},{j}): {integral} vs {expect}",
                        el.span
                    );
                }
            }
        }
    }

    #[test]
    fn bezier_dual_vanishes_outside_primal_support() {
        let s = SplineSpace1D::open_uniform(3, 8).unwrap();
        let d = build_bezier_dual(&s).unwrap();
        for i in 0..s.dimension() {
            let (lo, hi) = s.support(i);
            for (a, b) in s.elements() {
                if b <= lo + 1e-14 || a >= hi - 1e-14 {
                    for k in 0..50 {
                        let t = a + (b - a) * (k as f64 + 0.5) / 50.0;
                        let (first, vals) = d.eval_window(t);
                        let v = if i >= first && i < first + vals.len() { vals[i - first] } else { 0.0 };
                        assert!(v.abs() < 1e-14, "dual {i} leaked into ({a}, {b})");
                    }
                }
            }
        }
    }

    #[test]
    fn coarsened_dual_dimension_and_shifted_biorthogonality() {
        let s = SplineSpace1D::open_uniform(3, 8).unwrap();
        assert_eq!(s.dimension(), 11);
        let d = build_global_dual_coarsened(&s).unwrap();
        assert_eq!(d.dual_dimension(), 7);
        assert_eq!(d.index_shift(), 2);
        assert!(shifted_identity_error(&d) < 1e-10);
    }

    #[test]
    fn coarsened_dual_skips_end_functions() {
        // the two primal functions nearest each end have no dual partner
        let s = SplineSpace1D::open_uniform(2, 8).unwrap();
        let d = build_global_dual_coarsened(&s).unwrap();
        assert_eq!(d.dual_dimension(), s.dimension() - 4);
    }

    #[test]
    fn modified_bezier_small_case() {
        // n = 8 for p = 2 needs 6 elements
        let s = SplineSpace1D::open_uniform(2, 6).unwrap();
        assert_eq!(s.dimension(), 8);
        let d = build_bezier_dual_modified(&s).unwrap();
        assert_eq!(d.dual_dimension(), 4);
        // first modified dual is the sum of the three first originals
        let plain = build_bezier_dual(&s).unwrap();
        for k in 0..40 {
            let t = (k as f64 + 0.5) / 40.0;
            let (mf, mv) = d.eval_window(t);
            let (pf, pv) = plain.eval_window(t);
            let first_mod = if mf == 0 { mv[0] } else { 0.0 };
            let mut sum3 = 0.0;
            for o in 0..=2usize {
                if o >= pf && o < pf + pv.len() {
                    sum3 += pv[o - pf];
                }
            }
            assert!((first_mod - sum3).abs() < 1e-12);
        }
        assert!(shifted_identity_error(&d) < 1e-10);
    }

    #[test]
    fn modified_bezier_rejects_small_spaces() {
        let s = SplineSpace1D::open_uniform(2, 4).unwrap(); // n = 6
        assert!(matches!(build_bezier_dual_modified(&s), Err(Error::SpaceTooSmall(6))));
    }

    #[test]
    fn modified_support_is_union_of_summands() {
        let s = SplineSpace1D::open_uniform(2, 8).unwrap();
        let d = build_bezier_dual_modified(&s).unwrap();
        let (_, sup_end) = s.support(2); // third original function
        for (a, b) in s.elements() {
            if a >= sup_end - 1e-14 {
                let t = 0.5 * (a + b);
                let (mf, mv) = d.eval_window(t);
                let v = if mf == 0 { mv[0] } else { 0.0 };
                assert!(v.abs() < 1e-14, "modified first dual leaked past {sup_end}");
            }
        }
    }

    #[test]
    fn quasi_interpolation_reproduces_constants_and_partners() {
        let s = SplineSpace1D::open_uniform(3, 5).unwrap();
        let b = build_bezier_dual(&s).unwrap();
        for c in b.quasi_interpolate(|_| 1.0) {
            assert!((c - 1.0).abs() < 1e-12);
        }
        let g = build_global_dual(&s).unwrap();
        let k = 3usize;
        let coeffs = g.quasi_interpolate(|t| s.eval_one(k, t, 0).unwrap());
        for (i, c) in coeffs.iter().enumerate() {
            let expect = if i == k { 1.0 } else { 0.0 };
            assert!((c - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn boundary_interpolation_for_nested_end_elements() {
        // slave end elements nested in the master's: quasi-interpolant of a
        // master spline matches the endpoint values
        let master = SplineSpace1D::from_breakpoints(3, &[0.0, 0.5, 1.0]).unwrap();
        let slave = SplineSpace1D::from_breakpoints(3, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let dual = build_bezier_dual(&slave).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for _ in 0..5 {
            let coeffs: Vec<f64> = (0..master.dimension()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = |t: f64| {
                let (first, vals) = master.eval_basis(t, 0).unwrap();
                vals.iter().enumerate().map(|(j, v)| coeffs[first + j] * v).sum::<f64>()
            };
            let qi = dual.quasi_interpolate(f);
            let left = dual.quasi_interpolant_value(&qi, 0.0);
            let right = dual.quasi_interpolant_value(&qi, 1.0);
            assert!((left - f(0.0)).abs() < 1e-10, "{left} vs {}", f(0.0));
            assert!((right - f(1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn legendre_reproduction_stops_at_constants() {
        let s = SplineSpace1D::open_uniform(3, 2).unwrap();
        let d = build_bezier_dual(&s).unwrap();
        let e0 = best_span_approximation_error(&d, |t| legendre_shifted(0, t));
        let e1 = best_span_approximation_error(&d, |t| legendre_shifted(1, t));
        assert!(e0 < 1e-10, "constant not reproduced: {e0}");
        assert!(e1 > 1e-3, "linear unexpectedly reproduced: {e1}");
    }

    #[test]
    fn sinusoid_span_projection_first_order_for_bezier() {
        let f = |t: f64| (4.0 * std::f64::consts::PI * t).sin();
        let mut errs = Vec::new();
        for ne in [32, 64, 128] {
            let s = SplineSpace1D::open_uniform(3, ne).unwrap();
            let d = build_bezier_dual(&s).unwrap();
            errs.push(best_span_approximation_error(&d, f));
        }
        let r1 = (errs[0] / errs[1]).log2();
        let r2 = (errs[1] / errs[2]).log2();
        assert!((r1 - 1.0).abs() < 0.3, "rate {r1}");
        assert!((r2 - 1.0).abs() < 0.3, "rate {r2}");
    }

    #[test]
    fn quasi_interpolation_stays_optimal_for_bezier() {
        // contrast with the span projection: the quasi-interpolant of the
        // Bézier dual converges at the full rate p + 1
        let f = |t: f64| (4.0 * std::f64::consts::PI * t).sin();
        let mut errs = Vec::new();
        for ne in [8, 16] {
            let s = SplineSpace1D::open_uniform(3, ne).unwrap();
            let d = build_bezier_dual(&s).unwrap();
            errs.push(quasi_interpolation_error(&d, f));
        }
        let rate = (errs[0] / errs[1]).log2();
        assert!(rate > 3.0, "rate {rate}");
    }
}
