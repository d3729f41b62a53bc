//! Scalar fields used as PDE data: univariate and bivariate polynomials with
//! monomial coefficients, plus a wrapper for arbitrary closures.

use serde::{Deserialize, Serialize};

/// Largest polynomial degree accepted by the assembly routines.
pub const MAX_DEGREE: usize = 8;

/// A real function on the unit interval or unit square.
pub trait Field: Sync {
    fn eval(&self, x: &[f64]) -> f64;

    /// Total polynomial degree, or `None` for non-polynomial data.
    fn degree(&self) -> Option<usize>;
}

/// Univariate polynomial `c[0] + c[1] x + c[2] x^2 + ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut p = Self { coeffs };
        p.trim();
        p
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    fn trim(&mut self) {
        while matches!(self.coeffs.last(), Some(c) if *c == 0.0) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree of the polynomial; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * i as f64)
                .collect(),
        )
    }

    pub fn nth_derivative(&self, n: usize) -> Self {
        (0..n).fold(self.clone(), |p, _| p.derivative())
    }

    /// Antiderivative vanishing at zero.
    pub fn antiderivative(&self) -> Self {
        let mut c = Vec::with_capacity(self.coeffs.len() + 1);
        c.push(0.0);
        c.extend(self.coeffs.iter().enumerate().map(|(i, a)| a / (i + 1) as f64));
        Self::new(c)
    }

    /// Iterated antiderivatives `F_1, ..., F_order`, each vanishing at zero.
    pub fn antiderivatives(&self, order: usize) -> Vec<Self> {
        let mut out = Vec::with_capacity(order);
        let mut cur = self.clone();
        for _ in 0..order {
            cur = cur.antiderivative();
            out.push(cur.clone());
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut c = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Self::new(c)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// `q(t) = p(a + t)`.
    pub fn shift(&self, a: f64) -> Self {
        // Horner in the shifted variable: q = (...(c_n (t + a) + c_{n-1})(t + a) + ...).
        let mut out = vec![0.0; self.coeffs.len()];
        for &c in self.coeffs.iter().rev() {
            for j in (1..out.len()).rev() {
                out[j] = out[j] * a + out[j - 1];
            }
            if let Some(first) = out.first_mut() {
                *first = *first * a + c;
            }
        }
        Self::new(out)
    }
}

impl Field for Polynomial {
    fn eval(&self, x: &[f64]) -> f64 {
        Polynomial::eval(self, x[0])
    }

    fn degree(&self) -> Option<usize> {
        Some(Polynomial::degree(self))
    }
}

/// Bivariate polynomial `sum c[i][j] x^i y^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Polynomial2 {
    pub coeffs: Vec<Vec<f64>>,
}

impl Polynomial2 {
    pub fn new(coeffs: Vec<Vec<f64>>) -> Self {
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![vec![c]])
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, row| acc * x + row.iter().rev().fold(0.0, |a, c| a * y + c))
    }

    pub fn total_degree(&self) -> usize {
        let mut deg = 0;
        for (i, row) in self.coeffs.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if *c != 0.0 {
                    deg = deg.max(i + j);
                }
            }
        }
        deg
    }
}

impl Field for Polynomial2 {
    fn eval(&self, x: &[f64]) -> f64 {
        Polynomial2::eval(self, x[0], x[1])
    }

    fn degree(&self) -> Option<usize> {
        Some(self.total_degree())
    }
}

/// Non-polynomial data sampled by quadrature.
pub struct FnField<F>(pub F);

impl<F> Field for FnField<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn eval(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }

    fn degree(&self) -> Option<usize> {
        None
    }
}
