//! Quadrature on reference simplices.
//!
//! Points are stored in barycentric coordinates (`dim + 1` per point) and
//! weights are normalized to sum to one, so an integral over a physical
//! cell is `volume * Σ w_q f(x_q)`.  The fixed per-dimension rules are
//! exact for all polynomials that appear in the assembled forms (degree 4:
//! cubic terms against a linear test function).  [`grundmann_moeller`]
//! provides arbitrary-degree rules used as independent cross-checks.

use std::sync::OnceLock;

/// A quadrature rule on the reference `dim`-simplex.
#[derive(Debug, Clone)]
pub struct SimplexRule {
    pub dim: usize,
    /// Largest total polynomial degree integrated exactly.
    pub degree: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl SimplexRule {
    fn new(dim: usize, degree: usize, points: Vec<f64>, weights: Vec<f64>) -> Self {
        assert_eq!(points.len(), weights.len() * (dim + 1));
        SimplexRule {
            dim,
            degree,
            points,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Barycentric coordinates of point `q` (length `dim + 1`).
    pub fn point(&self, q: usize) -> &[f64] {
        let n = self.dim + 1;
        &self.points[q * n..(q + 1) * n]
    }

    pub fn weight(&self, q: usize) -> f64 {
        self.weights[q]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.len()).map(|q| (self.point(q), self.weight(q)))
    }
}

/// The fixed assembly rule for dimension `dim` (1, 2, or 3).
pub fn default_rule(dim: usize) -> &'static SimplexRule {
    static RULES: [OnceLock<SimplexRule>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    assert!((1..=3).contains(&dim), "unsupported dimension {dim}");
    RULES[dim - 1].get_or_init(|| match dim {
        1 => gauss_interval_3(),
        2 => triangle_6(),
        _ => tetrahedron_14(),
    })
}

/// Three-point Gauss-Legendre on the unit interval, degree 5.
fn gauss_interval_3() -> SimplexRule {
    let s = (15.0f64).sqrt() / 10.0;
    let ts = [0.5 - s, 0.5, 0.5 + s];
    let ws = [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0];
    let mut points = Vec::with_capacity(6);
    for &t in &ts {
        points.extend_from_slice(&[1.0 - t, t]);
    }
    SimplexRule::new(1, 5, points, ws.to_vec())
}

/// Six-point symmetric triangle rule, degree 4.
fn triangle_6() -> SimplexRule {
    let orbits = [
        (
            0.816_847_572_980_459,
            0.091_576_213_509_771,
            0.109_951_743_655_322,
        ),
        (
            0.108_103_018_168_070,
            0.445_948_490_915_965,
            0.223_381_589_678_011,
        ),
    ];
    let mut points = Vec::with_capacity(18);
    let mut weights = Vec::with_capacity(6);
    for &(a, b, w) in &orbits {
        for bary in [[a, b, b], [b, a, b], [b, b, a]] {
            points.extend_from_slice(&bary);
            weights.push(w);
        }
    }
    SimplexRule::new(2, 4, points, weights)
}

/// Fourteen-point symmetric tetrahedron rule, degree 5.
fn tetrahedron_14() -> SimplexRule {
    let mut points = Vec::with_capacity(56);
    let mut weights = Vec::with_capacity(14);
    // Two vertex-type orbits (a, b, b, b) with a = 1 - 3b.
    let vertex_orbits = [
        (0.310_885_919_263_300_6, 0.112_687_925_718_015_9),
        (0.092_735_250_310_891_23, 0.073_493_043_116_361_95),
    ];
    for &(b, w) in &vertex_orbits {
        let a = 1.0 - 3.0 * b;
        for pos in 0..4 {
            let mut bary = [b; 4];
            bary[pos] = a;
            points.extend_from_slice(&bary);
            weights.push(w);
        }
    }
    // Edge-type orbit (c, c, d, d) with d = 1/2 - c.
    let c = 0.045_503_704_125_649_65;
    let d = 0.5 - c;
    let w = 0.042_546_020_777_081_47;
    for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
        let mut bary = [d; 4];
        bary[i] = c;
        bary[j] = c;
        points.extend_from_slice(&bary);
        weights.push(w);
    }
    SimplexRule::new(3, 5, points, weights)
}

/// Grundmann-Moeller rule of index `s` on the `dim`-simplex, exact for
/// polynomials of total degree `2s + 1`.  Weights come from an exact
/// combinatorial formula, which makes these rules a convenient refined
/// reference for validating the fixed rules and the assembled integrals.
pub fn grundmann_moeller(dim: usize, s: usize) -> SimplexRule {
    assert!(dim >= 1);
    let n = dim + 1;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let dfact = factorial(dim);
    for i in 0..=s {
        let t = (dim + 1 + 2 * (s - i)) as f64;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let coeff = sign * t.powi(2 * s as i32 + 1)
            / (2f64.powi(2 * s as i32) * factorial(i) * factorial(dim + 2 * s + 1 - i))
            * dfact;
        for k in compositions(s - i, n) {
            for &kj in &k {
                points.push((2 * kj + 1) as f64 / t);
            }
            weights.push(coeff);
        }
    }
    SimplexRule::new(dim, 2 * s + 1, points, weights)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0f64, |acc, k| acc * k as f64)
}

/// All ways to write `total` as an ordered sum of `slots` non-negative
/// integers, in lexicographic order.
fn compositions(total: usize, slots: usize) -> Vec<Vec<usize>> {
    fn rec(total: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=total {
            prefix.push(first);
            rec(total - first, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, slots, &mut Vec::new(), &mut out);
    out
}
