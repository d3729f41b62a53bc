//! Gauss–Legendre rules on the unit interval and the reference triangle.

use std::f64::consts::PI;

use crate::poly::Field;

/// Gauss–Legendre rule mapped to `[0, 1]`. Exact for polynomials of degree `2n - 1`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature rule needs at least one point");
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        // Newton iteration on P_n from the Chebyshev-like initial guess.
        for i in 0..n.div_ceil(2) {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            points[i] = 0.5 * (1.0 - z);
            points[n - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { points, weights }
    }

    /// Smallest rule exact for polynomials of the given degree.
    pub fn exact_for(degree: usize) -> Self {
        Self::new(degree / 2 + 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let len = b - a;
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * f(a + len * t))
            .sum::<f64>()
            * len
    }
}

/// Returns `(P_n(z), P_n'(z))`.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Collapsed (Duffy) tensor rule on the reference triangle
/// `{(s, t) : s, t >= 0, s + t <= 1}`; weights sum to 1/2.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn exact_for(degree: usize) -> Self {
        // The collapse adds one power of the radial variable.
        let g = GaussRule::exact_for(degree + 1);
        let mut points = Vec::with_capacity(g.len() * g.len());
        let mut weights = Vec::with_capacity(g.len() * g.len());
        for (u, wu) in g.points.iter().zip(&g.weights) {
            for (v, wv) in g.points.iter().zip(&g.weights) {
                points.push([u * (1.0 - v), u * v]);
                weights.push(wu * wv * u);
            }
        }
        Self { points, weights }
    }
}

/// Adaptive Gauss–Legendre integration on `[a, b]`: each panel is accepted when
/// the 10-point rule agrees with two 10-point half-panel rules to `tol`.
pub fn adaptive_integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let rule = GaussRule::new(10);
    fn recurse(
        f: &impl Fn(f64) -> f64,
        rule: &GaussRule,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let left = rule.integrate(a, m, f);
        let right = rule.integrate(m, b, f);
        if depth == 0 || (left + right - whole).abs() <= tol {
            return left + right;
        }
        recurse(f, rule, a, m, left, 0.5 * tol, depth - 1)
            + recurse(f, rule, m, b, right, 0.5 * tol, depth - 1)
    }
    let whole = rule.integrate(a, b, f);
    recurse(f, &rule, a, b, whole, tol, 40)
}

/// Integral of `g(f(x))` over `[0,1]^d` (`d` in 1..=2) by a composite tensor
/// Gauss rule on `cells^d` subcells.
pub fn integrate_unit_cube(f: &dyn Field, dimension: usize, cells: usize, g: impl Fn(f64) -> f64) -> f64 {
    let rule = GaussRule::new(10);
    let h = 1.0 / cells as f64;
    let mut total = 0.0;
    match dimension {
        1 => {
            for c in 0..cells {
                total += rule.integrate(c as f64 * h, (c + 1) as f64 * h, |x| g(f.eval(&[x])));
            }
        }
        _ => {
            for cx in 0..cells {
                for cy in 0..cells {
                    total += rule.integrate(cx as f64 * h, (cx + 1) as f64 * h, |x| {
                        rule.integrate(cy as f64 * h, (cy + 1) as f64 * h, |y| g(f.eval(&[x, y])))
                    });
                }
            }
        }
    }
    total
}

/// `||f||_{L2([0,1]^d)}`.
pub fn l2_norm(f: &dyn Field, dimension: usize) -> f64 {
    integrate_unit_cube(f, dimension, 32, |v| v * v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_exactness() {
        for n in 1..=12 {
            let rule = GaussRule::new(n);
            assert_relative_eq!(rule.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            for p in 0..2 * n {
                let got = rule.integrate(0.0, 1.0, |x| x.powi(p as i32));
                assert_relative_eq!(got, 1.0 / (p as f64 + 1.0), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn triangle_exactness() {
        // int_T s^a t^b = a! b! / (a + b + 2)!
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        for deg in 0..=6u32 {
            let rule = TriangleRule::exact_for(deg as usize);
            for a in 0..=deg {
                let b = deg - a;
                let got: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                    .sum();
                let want = fact(a) * fact(b) / fact(a + b + 2);
                assert_relative_eq!(got, want, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn adaptive_handles_smooth_peaks() {
        let got = adaptive_integrate(&|x: f64| (-x * x * 400.0).exp(), -1.0, 1.0, 1e-13);
        assert_relative_eq!(got, (PI / 400.0).sqrt(), epsilon = 1e-12);
    }
}
