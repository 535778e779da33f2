//! Dense bivariate polynomials in graded monomial order.

use std::ops::{Add, Mul, Neg, Sub};

/// Index of x^a y^b in graded order (1, x, y, x², xy, y², ...).
pub fn monomial_index(a: usize, b: usize) -> usize {
    let d = a + b;
    d * (d + 1) / 2 + b
}

/// Number of monomials of total degree ≤ `degree`.
pub fn monomial_count(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Exponents (a, b) of all monomials of degree ≤ `degree`, in graded order.
pub fn monomial_exponents(degree: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(monomial_count(degree));
    for d in 0..=degree {
        for b in 0..=d {
            out.push((d - b, b));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    degree: usize,
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn zero(degree: usize) -> Poly {
        Poly {
            degree,
            coeffs: vec![0.0; monomial_count(degree)],
        }
    }

    pub fn constant(c: f64) -> Poly {
        Poly { degree: 0, coeffs: vec![c] }
    }

    /// c x^a y^b
    pub fn monomial(a: usize, b: usize, c: f64) -> Poly {
        let mut p = Poly::zero(a + b);
        p.coeffs[monomial_index(a, b)] = c;
        p
    }

    pub fn x() -> Poly {
        Poly::monomial(1, 0, 1.0)
    }

    pub fn y() -> Poly {
        Poly::monomial(0, 1, 1.0)
    }

    pub fn from_coeffs(degree: usize, coeffs: Vec<f64>) -> Poly {
        assert_eq!(coeffs.len(), monomial_count(degree));
        Poly { degree, coeffs }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, a: usize, b: usize) -> f64 {
        if a + b > self.degree {
            0.0
        } else {
            self.coeffs[monomial_index(a, b)]
        }
    }

    fn raised(&self, degree: usize) -> Poly {
        if degree <= self.degree {
            return self.clone();
        }
        let mut p = Poly::zero(degree);
        p.coeffs[..self.coeffs.len()].copy_from_slice(&self.coeffs);
        p
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut xp = [1.0f64; 16];
        let mut yp = [1.0f64; 16];
        let n = self.degree.min(15);
        for i in 1..=n {
            xp[i] = xp[i - 1] * x;
            yp[i] = yp[i - 1] * y;
        }
        let mut sum = 0.0;
        let mut idx = 0;
        for d in 0..=self.degree {
            for b in 0..=d {
                sum += self.coeffs[idx] * xp[d - b] * yp[b];
                idx += 1;
            }
        }
        sum
    }

    pub fn dx(&self) -> Poly {
        let deg = self.degree.saturating_sub(1);
        let mut p = Poly::zero(deg);
        for (a, b) in monomial_exponents(self.degree) {
            if a > 0 {
                p.coeffs[monomial_index(a - 1, b)] += a as f64 * self.coeff(a, b);
            }
        }
        p
    }

    pub fn dy(&self) -> Poly {
        let deg = self.degree.saturating_sub(1);
        let mut p = Poly::zero(deg);
        for (a, b) in monomial_exponents(self.degree) {
            if b > 0 {
                p.coeffs[monomial_index(a, b - 1)] += b as f64 * self.coeff(a, b);
            }
        }
        p
    }

    pub fn scale(&self, c: f64) -> Poly {
        Poly {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|v| v * c).collect(),
        }
    }

    /// Substitutes x = ax + bx ξ + cx η and y = ay + by ξ + cy η.
    pub fn compose_affine(&self, xmap: [f64; 3], ymap: [f64; 3]) -> Poly {
        let xs = Poly::from_coeffs(1, xmap.to_vec());
        let ys = Poly::from_coeffs(1, ymap.to_vec());
        let mut xpow = vec![Poly::constant(1.0)];
        let mut ypow = vec![Poly::constant(1.0)];
        for i in 1..=self.degree {
            xpow.push(&xpow[i - 1] * &xs);
            ypow.push(&ypow[i - 1] * &ys);
        }
        let mut out = Poly::zero(self.degree);
        for (a, b) in monomial_exponents(self.degree) {
            let c = self.coeff(a, b);
            if c != 0.0 {
                out = &out + &(&xpow[a] * &ypow[b]).scale(c);
            }
        }
        out
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let deg = self.degree.max(rhs.degree);
        let mut p = self.raised(deg);
        for (i, c) in rhs.coeffs.iter().enumerate() {
            p.coeffs[i] += c;
        }
        p
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self + &(-rhs)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut p = Poly::zero(self.degree + rhs.degree);
        for (a1, b1) in monomial_exponents(self.degree) {
            let c1 = self.coeff(a1, b1);
            if c1 == 0.0 {
                continue;
            }
            for (a2, b2) in monomial_exponents(rhs.degree) {
                p.coeffs[monomial_index(a1 + a2, b1 + b2)] += c1 * rhs.coeff(a2, b2);
            }
        }
        p
    }
}

/// Two-component polynomial vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyVec(pub Poly, pub Poly);

impl PolyVec {
    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        [self.0.eval(x, y), self.1.eval(x, y)]
    }

    pub fn div(&self) -> Poly {
        &self.0.dx() + &self.1.dy()
    }
}
