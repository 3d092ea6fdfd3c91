//! Truncated bivariate Taylor arithmetic.
//!
//! A [`Jet2`] carries the Taylor coefficients of a smooth function at a point
//! up to total order four, enough for values, gradients, Hessians and the
//! bi-Laplacian of manufactured solutions without symbolic differentiation
//! or finite-difference noise.

pub const JET_ORDER: usize = 4;

/// Taylor coefficients `c[i][j] = ∂^{i+j} f / (∂x^i ∂y^j) / (i! j!)` at a
/// point, truncated to total order `i + j ≤ 4`.
#[derive(Debug, Clone, Copy)]
pub struct Jet2 {
    c: [[f64; JET_ORDER + 1]; JET_ORDER + 1],
}

impl Jet2 {
    pub fn zero() -> Self {
        Jet2 {
            c: [[0.0; JET_ORDER + 1]; JET_ORDER + 1],
        }
    }

    pub fn constant(v: f64) -> Self {
        let mut j = Self::zero();
        j.c[0][0] = v;
        j
    }

    /// The coordinate function `x` expanded at `x0`.
    pub fn x(x0: f64) -> Self {
        let mut j = Self::zero();
        j.c[0][0] = x0;
        j.c[1][0] = 1.0;
        j
    }

    /// The coordinate function `y` expanded at `y0`.
    pub fn y(y0: f64) -> Self {
        let mut j = Self::zero();
        j.c[0][0] = y0;
        j.c[0][1] = 1.0;
        j
    }

    /// `sin(a x + b)` expanded at `x0`.
    pub fn sin_ax(a: f64, b: f64, x0: f64) -> Self {
        let mut j = Self::zero();
        let mut fact = 1.0;
        for k in 0..=JET_ORDER {
            if k > 0 {
                fact *= k as f64;
            }
            // d^k/dx^k sin(ax + b) = a^k sin(ax + b + kπ/2)
            let phase = a * x0 + b + k as f64 * std::f64::consts::FRAC_PI_2;
            j.c[k][0] = a.powi(k as i32) * phase.sin() / fact;
        }
        j
    }

    /// `sin(a y + b)` expanded at `y0`.
    pub fn sin_ay(a: f64, b: f64, y0: f64) -> Self {
        let mut j = Self::zero();
        let mut fact = 1.0;
        for k in 0..=JET_ORDER {
            if k > 0 {
                fact *= k as f64;
            }
            let phase = a * y0 + b + k as f64 * std::f64::consts::FRAC_PI_2;
            j.c[0][k] = a.powi(k as i32) * phase.sin() / fact;
        }
        j
    }

    pub fn powi(self, n: usize) -> Self {
        let mut out = Jet2::constant(1.0);
        for _ in 0..n {
            out = out * self;
        }
        out
    }

    /// Raw partial derivative `∂^{i+j} f / ∂x^i ∂y^j`.
    pub fn derivative(&self, i: usize, j: usize) -> f64 {
        let mut fact = 1.0;
        for k in 2..=i {
            fact *= k as f64;
        }
        for k in 2..=j {
            fact *= k as f64;
        }
        self.c[i][j] * fact
    }

    pub fn value(&self) -> f64 {
        self.c[0][0]
    }

    pub fn dx(&self) -> f64 {
        self.derivative(1, 0)
    }

    pub fn dy(&self) -> f64 {
        self.derivative(0, 1)
    }

    pub fn dxx(&self) -> f64 {
        self.derivative(2, 0)
    }

    pub fn dxy(&self) -> f64 {
        self.derivative(1, 1)
    }

    pub fn dyy(&self) -> f64 {
        self.derivative(0, 2)
    }

    pub fn laplacian(&self) -> f64 {
        self.dxx() + self.dyy()
    }

    /// `Δ²f = f_xxxx + 2 f_xxyy + f_yyyy`.
    pub fn bilaplacian(&self) -> f64 {
        self.derivative(4, 0) + 2.0 * self.derivative(2, 2) + self.derivative(0, 4)
    }
}

impl std::ops::Add for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        let mut out = Jet2::zero();
        for i in 0..=JET_ORDER {
            for j in 0..=JET_ORDER - i {
                out.c[i][j] = self.c[i][j] + rhs.c[i][j];
            }
        }
        out
    }
}

impl std::ops::Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        let mut out = Jet2::zero();
        for i in 0..=JET_ORDER {
            for j in 0..=JET_ORDER - i {
                out.c[i][j] = self.c[i][j] - rhs.c[i][j];
            }
        }
        out
    }
}

impl std::ops::Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        let mut out = Jet2::zero();
        for i1 in 0..=JET_ORDER {
            for j1 in 0..=JET_ORDER - i1 {
                let a = self.c[i1][j1];
                if a == 0.0 {
                    continue;
                }
                let rem = JET_ORDER - i1 - j1;
                for i2 in 0..=rem {
                    for j2 in 0..=rem - i2 {
                        out.c[i1 + i2][j1 + j2] += a * rhs.c[i2][j2];
                    }
                }
            }
        }
        out
    }
}

impl std::ops::Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, s: f64) -> Jet2 {
        let mut out = self;
        for row in out.c.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd4<F: Fn(f64, f64) -> f64>(f: &F, x: f64, y: f64, i: usize, j: usize) -> f64 {
        // central differences, accurate enough for a 1e-4 relative check
        let h = 1e-3;
        match (i, j) {
            (0, 0) => f(x, y),
            (1, 0) => (f(x + h, y) - f(x - h, y)) / (2.0 * h),
            (0, 1) => (f(x, y + h) - f(x, y - h)) / (2.0 * h),
            (2, 0) => (f(x + h, y) - 2.0 * f(x, y) + f(x - h, y)) / (h * h),
            (1, 1) => (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h),
            (0, 2) => (f(x, y + h) - 2.0 * f(x, y) + f(x, y - h)) / (h * h),
            _ => unreachable!(),
        }
    }

    #[test]
    fn polynomial_product_derivatives_are_exact() {
        // f = x² y (x - 1)
        let at = |x0: f64, y0: f64| {
            let x = Jet2::x(x0);
            let y = Jet2::y(y0);
            x * x * y * (x - Jet2::constant(1.0))
        };
        let j = at(0.7, -0.3);
        assert!((j.value() - (0.49 * -0.3 * -0.3)).abs() < 1e-14);
        // ∂³/∂x²∂y (x³y - x²y) = 6x - 2
        assert!((j.derivative(2, 1) - (6.0 * 0.7 - 2.0)).abs() < 1e-13);
        assert!((j.derivative(4, 0)).abs() < 1e-13);
    }

    #[test]
    fn sine_jet_matches_finite_differences() {
        let f = |x: f64, y: f64| (2.0 * x).sin() * (3.0 * y).sin() * x * y;
        let at = |x0: f64, y0: f64| {
            Jet2::sin_ax(2.0, 0.0, x0) * Jet2::sin_ay(3.0, 0.0, y0) * Jet2::x(x0) * Jet2::y(y0)
        };
        let (x, y) = (0.42, 0.77);
        let j = at(x, y);
        for i in 0..=2 {
            for jj in 0..=2 - i {
                let fd = fd4(&f, x, y, i, jj);
                let scale = fd.abs().max(1.0);
                assert!(
                    (j.derivative(i, jj) - fd).abs() / scale < 1e-4,
                    "({i},{jj}): {} vs {}",
                    j.derivative(i, jj),
                    fd
                );
            }
        }
    }

    #[test]
    fn bilaplacian_of_biharmonic_polynomial_vanishes() {
        // x³ - 3xy² is harmonic, so its bi-Laplacian is zero
        let at = |x0: f64, y0: f64| {
            let x = Jet2::x(x0);
            let y = Jet2::y(y0);
            x * x * x - x * y * y * 3.0
        };
        let j = at(1.3, -2.1);
        assert!(j.laplacian().abs() < 1e-12);
        assert!(j.bilaplacian().abs() < 1e-12);
    }

    #[test]
    fn bilaplacian_of_quartic() {
        // Δ²(x⁴) = 24, Δ²(x²y²) = 8
        let x4 = |x0: f64, y0: f64| {
            let x = Jet2::x(x0);
            let _ = y0;
            x * x * x * x
        };
        assert!((x4(0.3, 0.9).bilaplacian() - 24.0).abs() < 1e-12);
        let x2y2 = |x0: f64, y0: f64| {
            let x = Jet2::x(x0);
            let y = Jet2::y(y0);
            x * x * y * y
        };
        assert!((x2y2(0.3, 0.9).bilaplacian() - 8.0).abs() < 1e-12);
    }
}
