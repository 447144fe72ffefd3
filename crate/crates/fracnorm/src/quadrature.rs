//! Fixed quadrature rules: Gauss-Legendre on intervals, symmetric interior
//! rules on triangles, and a deterministic pairwise summation helper.

use crate::geometry::Point2;

/// Gauss-Legendre nodes/weights on `[-1, 1]`.
pub const GL2: [(f64, f64); 2] = [
    (-0.5773502691896257, 1.0),
    (0.5773502691896257, 1.0),
];

pub const GL4: [(f64, f64); 4] = [
    (-0.8611363115940526, 0.3478548451374538),
    (-0.3399810435848563, 0.6521451548625461),
    (0.3399810435848563, 0.6521451548625461),
    (0.8611363115940526, 0.3478548451374538),
];

pub const GL8: [(f64, f64); 8] = [
    (-0.9602898564975363, 0.1012285362903763),
    (-0.7966664774136267, 0.2223810344533745),
    (-0.5255324099163290, 0.3137066458778873),
    (-0.1834346424956498, 0.3626837833783620),
    (0.1834346424956498, 0.3626837833783620),
    (0.5255324099163290, 0.3137066458778873),
    (0.7966664774136267, 0.2223810344533745),
    (0.9602898564975363, 0.1012285362903763),
];

/// Maps a rule on `[-1,1]` to `[a,b]`.
pub fn scaled<const N: usize>(rule: &[(f64, f64); N], a: f64, b: f64) -> [(f64, f64); N] {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    rule.map(|(x, w)| (mid + half * x, w * half))
}

/// Barycentric triangle rule: `(l1, l2, weight)`, weights summing to one.
/// Degree-4 accurate, six strictly interior points.
pub const TRI6: [(f64, f64, f64); 6] = [
    (0.445948490915965, 0.445948490915965, 0.223381589678011),
    (0.445948490915965, 0.108103018168070, 0.223381589678011),
    (0.108103018168070, 0.445948490915965, 0.223381589678011),
    (0.091576213509771, 0.091576213509771, 0.109951743655322),
    (0.091576213509771, 0.816847572980459, 0.109951743655322),
    (0.816847572980459, 0.091576213509771, 0.109951743655322),
];

/// Degree-6 accurate, twelve interior points.
pub const TRI12: [(f64, f64, f64); 12] = [
    (0.249286745170910, 0.249286745170910, 0.116786275726379),
    (0.249286745170910, 0.501426509658179, 0.116786275726379),
    (0.501426509658179, 0.249286745170910, 0.116786275726379),
    (0.063089014491502, 0.063089014491502, 0.050844906370207),
    (0.063089014491502, 0.873821971016996, 0.050844906370207),
    (0.873821971016996, 0.063089014491502, 0.050844906370207),
    (0.310352451033784, 0.636502499121399, 0.082851075618374),
    (0.636502499121399, 0.053145049844817, 0.082851075618374),
    (0.053145049844817, 0.310352451033784, 0.082851075618374),
    (0.636502499121399, 0.310352451033784, 0.082851075618374),
    (0.310352451033784, 0.053145049844817, 0.082851075618374),
    (0.053145049844817, 0.636502499121399, 0.082851075618374),
];

/// Physical quadrature points and weights (weights include the area) for a
/// triangle given by its corners.
pub fn tri_points(rule: &[(f64, f64, f64)], v: [Point2; 3], area: f64) -> Vec<(Point2, f64)> {
    rule.iter()
        .map(|&(l1, l2, w)| {
            let l3 = 1.0 - l1 - l2;
            (v[0] * l1 + v[1] * l2 + v[2] * l3, w * area)
        })
        .collect()
}

/// Summation with a fixed reduction tree so the result does not depend on
/// chunking or thread count.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// `|v|^p` with fast paths for the exponents the experiments actually use.
#[inline]
pub fn abs_pow(v: f64, p: f64) -> f64 {
    let a = v.abs();
    if p == 2.0 {
        a * a
    } else if p == 1.0 {
        a
    } else if p == 1.5 {
        a * a.sqrt()
    } else if p == 3.0 {
        a * a * a
    } else {
        a.powf(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate_tri(rule: &[(f64, f64, f64)], f: impl Fn(f64, f64) -> f64) -> f64 {
        // Reference triangle (0,0),(1,0),(0,1), area 1/2.
        let v = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)];
        tri_points(rule, v, 0.5).iter().map(|(p, w)| w * f(p.x, p.y)).sum()
    }

    #[test]
    fn tri6_degree4_exact() {
        // int over ref triangle of x^a y^b = a! b! / (a+b+2)!
        let cases = [
            ((0, 0), 0.5),
            ((1, 0), 1.0 / 6.0),
            ((2, 1), 1.0 / 60.0),
            ((2, 2), 1.0 / 180.0),
            ((4, 0), 1.0 / 30.0),
        ];
        for ((a, b), exact) in cases {
            let got = integrate_tri(&TRI6, |x, y| x.powi(a) * y.powi(b));
            assert!((got - exact).abs() < 1e-14, "x^{a} y^{b}: {got} vs {exact}");
        }
    }

    #[test]
    fn tri12_degree6_exact() {
        let cases = [((6, 0), 1.0 / 56.0), ((3, 3), 1.0 / 1120.0), ((2, 4), 1.0 / 840.0)];
        for ((a, b), exact) in cases {
            let got = integrate_tri(&TRI12, |x, y| x.powi(a) * y.powi(b));
            assert!((got - exact).abs() < 1e-14, "x^{a} y^{b}: {got} vs {exact}");
        }
    }

    #[test]
    fn gauss_exactness() {
        for (rule, deg) in [(GL4.to_vec(), 7usize), (GL8.to_vec(), 15usize)] {
            for k in 0..=deg {
                let got: f64 = rule.iter().map(|&(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
                assert!((got - exact).abs() < 1e-13, "deg {k}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn pairwise_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-9);
    }
}
