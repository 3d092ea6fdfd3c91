//! Univariate and tensor-product B-spline spaces: evaluation, differentiation,
//! Bernstein polynomials, Bézier extraction and knot-vector manipulation.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Highest polynomial degree exercised by the shipped studies.
pub const MAX_DEGREE: usize = 5;

/// A univariate B-spline space defined by a degree and an open knot vector.
///
/// Knots are stored with explicit multiplicity and never merged by tolerance;
/// the first and last knots must each appear `degree + 1` times.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpace1D {
    degree: usize,
    knots: Vec<f64>,
}

impl SplineSpace1D {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        if degree < 1 || degree > MAX_DEGREE {
            return Err(Error::UnsupportedDegree(degree));
        }
        let p = degree;
        if knots.len() < 2 * (p + 1) {
            return Err(Error::InvalidSpace(format!(
                "knot vector of length {} too short for degree {}",
                knots.len(),
                p
            )));
        }
        if knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidSpace("knots must be non-decreasing".into()));
        }
        let first = knots[0];
        let last = *knots.last().unwrap();
        if knots[..=p].iter().any(|&k| k != first) || knots[knots.len() - p - 1..].iter().any(|&k| k != last) {
            return Err(Error::InvalidSpace(
                "knot vector must be open (end knots repeated degree + 1 times)".into(),
            ));
        }
        if first >= last {
            return Err(Error::InvalidSpace("empty parametric interval".into()));
        }
        // interior multiplicities at most p
        let interior = &knots[p + 1..knots.len() - p - 1];
        let mut run = 1usize;
        for w in interior.windows(2) {
            run = if w[0] == w[1] { run + 1 } else { 1 };
            if run > p {
                return Err(Error::InvalidSpace(format!(
                    "interior knot {} has multiplicity greater than degree",
                    w[0]
                )));
            }
        }
        Ok(SplineSpace1D { degree, knots })
    }

    /// Open knot vector with `n_elems` uniform elements on `[0, 1]`.
    pub fn open_uniform(degree: usize, n_elems: usize) -> Result<Self> {
        let breaks: Vec<f64> = (0..=n_elems).map(|i| i as f64 / n_elems as f64).collect();
        Self::from_breakpoints(degree, &breaks)
    }

    /// Open knot vector with the given distinct breakpoints (single interior multiplicity).
    pub fn from_breakpoints(degree: usize, breaks: &[f64]) -> Result<Self> {
        if breaks.len() < 2 {
            return Err(Error::InvalidSpace("need at least two breakpoints".into()));
        }
        let mut knots = Vec::with_capacity(breaks.len() + 2 * degree);
        for _ in 0..degree {
            knots.push(breaks[0]);
        }
        knots.extend_from_slice(breaks);
        for _ in 0..degree {
            knots.push(*breaks.last().unwrap());
        }
        Self::new(degree, knots)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions.
    pub fn dimension(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    /// Distinct knot values.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for &k in &self.knots {
            if out.last().map_or(true, |&l: &f64| k > l) {
                out.push(k);
            }
        }
        out
    }

    /// Nonempty knot spans as `(a, b)` intervals.
    pub fn elements(&self) -> Vec<(f64, f64)> {
        self.breakpoints().windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn num_elements(&self) -> usize {
        self.breakpoints().len() - 1
    }

    /// Index of the element containing `x` (right-closed at the final knot).
    pub fn element_of(&self, x: f64) -> usize {
        let breaks = self.breakpoints();
        match breaks.windows(2).position(|w| x >= w[0] && x < w[1]) {
            Some(e) => e,
            None => breaks.len() - 2,
        }
    }

    /// Knot span index for evaluation: largest `i` with `knots[i] <= x < knots[i+1]`.
    fn find_span(&self, x: f64) -> usize {
        let n = self.dimension();
        let p = self.degree;
        if x >= self.knots[n] {
            return n - 1;
        }
        let mut lo = p;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Values (and derivatives up to order `n_ders`) of the `p + 1` basis
    /// functions active at `x`.
    ///
    /// Returns the index of the first active function and a table whose row
    /// `k` holds the `k`-th derivatives. Cox–de Boor recursion.
    pub fn eval_ders(&self, x: f64, n_ders: usize) -> Result<(usize, Vec<Vec<f64>>)> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) || !x.is_finite() {
            return Err(Error::OutOfRange { value: x, lo, hi });
        }
        if n_ders > self.degree {
            return Err(Error::DerivativeOrder {
                order: n_ders,
                degree: self.degree,
            });
        }
        let p = self.degree;
        let span = self.find_span(x);
        let u = &self.knots;

        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![0.0; p + 1]; n_ders + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let mut s1 = 0;
            let mut s2 = 1;
            a[0][0] = 1.0;
            for k in 1..=n_ders {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][(rk + j as isize) as usize];
                    d += a[s2][j] * ndu[(rk + j as isize) as usize][pk];
                }
                if r as isize <= pk as isize {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=n_ders {
            for j in 0..=p {
                ders[k][j] *= factor;
            }
            factor *= (p - k) as f64;
        }
        Ok((span - p, ders))
    }

    /// Values (or the `deriv_order`-th derivatives) of the active basis functions at `x`.
    pub fn eval_basis(&self, x: f64, deriv_order: usize) -> Result<(usize, Vec<f64>)> {
        let (first, ders) = self.eval_ders(x, deriv_order)?;
        Ok((first, ders.into_iter().nth(deriv_order).unwrap()))
    }

    /// Value (or derivative) of the single basis function `i` at `x`.
    pub fn eval_one(&self, i: usize, x: f64, deriv_order: usize) -> Result<f64> {
        let (first, vals) = self.eval_basis(x, deriv_order)?;
        if i >= first && i < first + vals.len() {
            Ok(vals[i - first])
        } else {
            Ok(0.0)
        }
    }

    /// Closed support of function `i` as a knot interval.
    pub fn support(&self, i: usize) -> (f64, f64) {
        (self.knots[i], self.knots[i + self.degree + 1])
    }

    /// Indices of the functions supported on element `e`.
    pub fn element_functions(&self, e: usize) -> std::ops::Range<usize> {
        let (a, _) = self.elements()[e];
        // first active index at the span start
        let span = self.find_span(a.max(self.knots[self.degree]));
        let span = if a >= self.knots[self.dimension()] {
            self.dimension() - 1
        } else {
            span
        };
        (span - self.degree)..(span + 1)
    }

    /// Bisect every nonzero span, repeated `levels` times.
    pub fn refine_bisect(&self, levels: usize) -> Self {
        let mut breaks = self.breakpoints();
        for _ in 0..levels {
            let mut next = Vec::with_capacity(breaks.len() * 2);
            for w in breaks.windows(2) {
                next.push(w[0]);
                next.push(0.5 * (w[0] + w[1]));
            }
            next.push(*breaks.last().unwrap());
            breaks = next;
        }
        Self::from_breakpoints(self.degree, &breaks).expect("refinement preserves validity")
    }

    /// Same breakpoints, different degree (single interior multiplicity).
    pub fn with_degree(&self, degree: usize) -> Result<Self> {
        Self::from_breakpoints(degree, &self.breakpoints())
    }

    /// Drop the two interior knots nearest each end of the domain.
    ///
    /// The resulting space has dimension `n - 4` and is the source of the
    /// coarsened dual bases used near patch vertices. Fails when fewer than
    /// four distinct interior knots exist, so callers can skip the
    /// configuration.
    pub fn remove_knots_near_ends(&self) -> Result<Self> {
        let breaks = self.breakpoints();
        let interior = breaks.len() - 2;
        if interior < 4 {
            return Err(Error::TooCoarseForCoarsening(interior));
        }
        let mut kept = Vec::with_capacity(breaks.len() - 4);
        kept.push(breaks[0]);
        kept.extend_from_slice(&breaks[3..breaks.len() - 3]);
        kept.push(*breaks.last().unwrap());
        Self::from_breakpoints(self.degree, &kept)
    }

    /// `∫ N_i` over the whole domain, for every `i`. Exact Gauss quadrature.
    pub fn basis_integrals(&self) -> Vec<f64> {
        let rule = crate::gauss::GaussRule::legendre(self.degree + 1);
        let mut out = vec![0.0; self.dimension()];
        for (a, b) in self.elements() {
            for (x, w) in rule.mapped(a, b) {
                let (first, vals) = self.eval_basis(x, 0).unwrap();
                for (j, v) in vals.iter().enumerate() {
                    out[first + j] += w * v;
                }
            }
        }
        out
    }
}

/// Bernstein basis values `B_{0..=p}` at `t` in `[0, 1]`.
pub fn bernstein_values(p: usize, t: f64) -> Vec<f64> {
    let mut b = vec![0.0; p + 1];
    b[0] = 1.0;
    let s = 1.0 - t;
    for j in 1..=p {
        let mut saved = 0.0;
        for k in 0..j {
            let temp = b[k];
            b[k] = saved + s * temp;
            saved = t * temp;
        }
        b[j] = saved;
    }
    b
}

/// First derivatives of the Bernstein basis at `t` (reference interval `[0, 1]`).
pub fn bernstein_derivatives(p: usize, t: f64) -> Vec<f64> {
    let lower = bernstein_values(p - 1, t);
    let pf = p as f64;
    (0..=p)
        .map(|i| {
            let a = if i > 0 { lower[i - 1] } else { 0.0 };
            let b = if i < p { lower[i] } else { 0.0 };
            pf * (a - b)
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut num = 1.0;
    let mut den = 1.0;
    for i in 0..k {
        num *= (n - i) as f64;
        den *= (i + 1) as f64;
    }
    num / den
}

/// Gramian of the degree-`p` Bernstein basis on a span of the given length.
///
/// Closed form: `∫₀¹ B_i B_j dt = C(p,i) C(p,j) / ((2p + 1) C(2p, i + j))`,
/// scaled by the span length.
pub fn bernstein_gramian(p: usize, span_length: f64) -> DMatrix<f64> {
    assert!(p >= 1 && span_length > 0.0);
    DMatrix::from_fn(p + 1, p + 1, |i, j| {
        span_length * binomial(p, i) * binomial(p, j) / ((2 * p + 1) as f64 * binomial(2 * p, i + j))
    })
}

/// Per-element Bézier data: extraction/reconstruction operators and the
/// Bernstein Gramian on the element span.
#[derive(Debug, Clone)]
pub struct BezierElement1D {
    pub index: usize,
    pub span: (f64, f64),
    /// First global basis function supported on the element.
    pub first_function: usize,
    /// Extraction operator: rows are B-splines, columns Bernstein polynomials.
    pub extraction: DMatrix<f64>,
    /// Reconstruction operator, the inverse of `extraction`.
    pub reconstruction: DMatrix<f64>,
    /// Bernstein Gramian on the element (includes the span length).
    pub gramian: DMatrix<f64>,
}

/// Element extraction operators for every nonempty knot span.
///
/// Classical operator construction by repeated knot insertion up to full
/// interior multiplicity; reconstruction operators by direct LU inversion.
pub fn extraction_operators(space: &SplineSpace1D) -> Vec<BezierElement1D> {
    let p = space.degree();
    let u = space.knots();
    let m = u.len();
    let elements = space.elements();
    let n_elems = elements.len();

    let mut operators: Vec<DMatrix<f64>> = Vec::with_capacity(n_elems);
    let mut current = DMatrix::<f64>::identity(p + 1, p + 1);
    let mut next = DMatrix::<f64>::identity(p + 1, p + 1);
    let mut alphas = vec![0.0; p];

    // 0-indexed translation of the standard extraction algorithm
    let mut a = p;
    let mut b = a + 1;
    while b < m - 1 {
        let i = b;
        while b < m - 1 && u[b + 1] == u[b] {
            b += 1;
        }
        let mult = b - i + 1;
        if mult < p {
            let numer = u[b] - u[a];
            for j in ((mult + 1)..=p).rev() {
                alphas[j - mult - 1] = numer / (u[a + j] - u[a]);
            }
            let r = p - mult;
            for j in 1..=r {
                let save = r - j;
                let s = mult + j;
                for k in (s..=p).rev() {
                    let alpha = alphas[k - s];
                    for row in 0..=p {
                        current[(row, k)] = alpha * current[(row, k)] + (1.0 - alpha) * current[(row, k - 1)];
                    }
                }
                if b < m - 1 {
                    // overlapping coefficients carry into the next operator
                    for off in 0..=j {
                        next[(save + off, save)] = current[(p - j + off, p)];
                    }
                }
            }
        }
        operators.push(current);
        current = next;
        next = DMatrix::<f64>::identity(p + 1, p + 1);
        a = b;
        b += 1;
    }
    debug_assert_eq!(operators.len(), n_elems);

    operators
        .into_iter()
        .enumerate()
        .map(|(e, c)| {
            let reconstruction = c
                .clone()
                .try_inverse()
                .expect("extraction operators of valid open knot vectors are invertible");
            let (lo, hi) = elements[e];
            let first_function = space.element_functions(e).start;
            BezierElement1D {
                index: e,
                span: (lo, hi),
                first_function,
                extraction: c,
                reconstruction,
                gramian: bernstein_gramian(p, hi - lo),
            }
        })
        .collect()
}

/// A tensor-product space with lexicographic numbering: global index
/// `i = iu + n_u * iv` (the `ξ` index runs fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpace2D {
    pub u: SplineSpace1D,
    pub v: SplineSpace1D,
}

impl TensorSpace2D {
    pub fn new(u: SplineSpace1D, v: SplineSpace1D) -> Self {
        TensorSpace2D { u, v }
    }

    pub fn dimension(&self) -> usize {
        self.u.dimension() * self.v.dimension()
    }

    pub fn index(&self, iu: usize, iv: usize) -> usize {
        iu + self.u.dimension() * iv
    }

    pub fn unindex(&self, i: usize) -> (usize, usize) {
        (i % self.u.dimension(), i / self.u.dimension())
    }

    pub fn refine_bisect(&self, levels: usize) -> Self {
        TensorSpace2D {
            u: self.u.refine_bisect(levels),
            v: self.v.refine_bisect(levels),
        }
    }
}
