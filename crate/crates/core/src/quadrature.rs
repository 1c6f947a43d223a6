//! Quadrature rules on segments and triangles.
//!
//! Segment rules live on `[0, 1]`, triangle rules are given in barycentric
//! coordinates with weights summing to one (multiply by the area).

use std::sync::OnceLock;

/// Gauss-Legendre rule on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Nodes by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            points[i] = 0.5 * (1.0 - x);
            points[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    /// Integrate `g` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
        let h = b - a;
        self.iter().map(|(t, w)| w * g(a + t * h)).sum::<f64>() * h
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Cached Gauss rule of order `n` (n <= 32).
pub fn gauss(n: usize) -> &'static GaussRule {
    static RULES: OnceLock<Vec<GaussRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (1..=32).map(GaussRule::new).collect());
    &rules[n - 1]
}

/// Integrate over `[0, 1]` with geometric grading toward `t = 0`, for
/// integrands with an endpoint singularity such as `t log t`.
pub fn graded_toward_zero(mut g: impl FnMut(f64) -> f64) -> f64 {
    const SIGMA: f64 = 0.25;
    const LEVELS: usize = 26;
    let rule = gauss(16);
    let mut total = 0.0;
    let mut hi = 1.0;
    for _ in 0..LEVELS {
        let lo = hi * SIGMA;
        total += rule.integrate(lo, hi, &mut g);
        hi = lo;
    }
    total + rule.integrate(0.0, hi, &mut g)
}

/// Triangle rule in barycentric coordinates.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    fn from_orbits(orbits: &[(f64, [f64; 3])]) -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &(w, [a, b, c]) in orbits {
            let perms = [
                [a, b, c],
                [b, c, a],
                [c, a, b],
                [a, c, b],
                [c, b, a],
                [b, a, c],
            ];
            let mut uniq: Vec<[f64; 3]> = Vec::new();
            for p in perms {
                if !uniq.contains(&p) {
                    uniq.push(p);
                }
            }
            for p in uniq {
                points.push(p);
                weights.push(w);
            }
        }
        Self { points, weights }
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Degree 2, three interior points.
pub fn triangle_degree2() -> &'static TriangleRule {
    static RULE: OnceLock<TriangleRule> = OnceLock::new();
    RULE.get_or_init(|| {
        TriangleRule::from_orbits(&[(1.0 / 3.0, [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0])])
    })
}

/// Dunavant degree 4, six points.
pub fn triangle_degree4() -> &'static TriangleRule {
    static RULE: OnceLock<TriangleRule> = OnceLock::new();
    RULE.get_or_init(|| {
        TriangleRule::from_orbits(&[
            (
                0.223381589678011,
                [0.108103018168070, 0.445948490915965, 0.445948490915965],
            ),
            (
                0.109951743655322,
                [0.816847572980459, 0.091576213509771, 0.091576213509771],
            ),
        ])
    })
}

/// Dunavant degree 6, twelve points.
pub fn triangle_degree6() -> &'static TriangleRule {
    static RULE: OnceLock<TriangleRule> = OnceLock::new();
    RULE.get_or_init(|| {
        TriangleRule::from_orbits(&[
            (
                0.116786275726379,
                [0.501426509658179, 0.249286745170910, 0.249286745170910],
            ),
            (
                0.050844906370207,
                [0.873821971016996, 0.063089014491502, 0.063089014491502],
            ),
            (
                0.082851075618374,
                [0.053145049844817, 0.310352451033784, 0.636502499121399],
            ),
        ])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_on_reference(rule: &TriangleRule, p: i32, q: i32) -> f64 {
        // reference triangle (0,0),(1,0),(0,1), area 1/2
        rule.iter()
            .map(|([_, l1, l2], w)| w * l1.powi(p) * l2.powi(q))
            .sum::<f64>()
            * 0.5
    }

    fn factorial(n: i32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn gauss_rules_are_exact_to_degree_2n_minus_1() {
        for n in 1..=20 {
            let rule = gauss(n);
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for k in 0..(2 * n) as i32 {
                let val = rule.integrate(0.0, 1.0, |t| t.powi(k));
                assert!((val - 1.0 / f64::from(k + 1)).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn triangle_rules_reach_stated_degree() {
        for (rule, degree, count) in [
            (triangle_degree2(), 2, 3),
            (triangle_degree4(), 4, 6),
            (triangle_degree6(), 6, 12),
        ] {
            assert_eq!(rule.len(), count);
            for p in 0..=degree {
                for q in 0..=(degree - p) {
                    let exact = factorial(p) * factorial(q) / factorial(p + q + 2);
                    let got = monomial_on_reference(rule, p, q);
                    assert!((got - exact).abs() < 1e-14, "deg {degree}: x^{p} y^{q}");
                }
            }
        }
    }

    #[test]
    fn graded_rule_handles_log_endpoint() {
        // int_0^1 t ln t dt = -1/4, int_0^1 ln t dt = -1
        assert!((graded_toward_zero(|t| t * t.ln()) + 0.25).abs() < 1e-14);
        assert!((graded_toward_zero(|t| t.ln()) + 1.0).abs() < 1e-12);
    }
}
