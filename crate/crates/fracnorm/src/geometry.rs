//! Planar polygonal domains with holes and zero-width fractures (slits).
//!
//! A [`DomainSpec`] is an outer polygon, a list of hole polygons and a list
//! of open polygonal chains of zero width. Membership, boundary distance and
//! the restricted-pair predicate `|x - y| < d(x)/2` are all answered here;
//! everything downstream (meshing, quadrature, Monte Carlo sampling) goes
//! through these queries.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points closer than this to any boundary chain are classified as boundary.
pub const BOUNDARY_EPS: f64 = 1e-12;

/// A point (or vector) in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2 { x: v[0], y: v[1] }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, rhs: Point2) -> f64 {
        self.x * rhs.x + self.y * rhs.y
    }

    /// z-component of the cross product (signed parallelogram area).
    pub fn cross(self, rhs: Point2) -> f64 {
        self.x * rhs.y - self.y * rhs.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dist(self, rhs: Point2) -> f64 {
        (self - rhs).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector at angle `theta` from the positive x-axis.
    pub fn unit(theta: f64) -> Self {
        Point2::new(theta.cos(), theta.sin())
    }

    pub fn rotated(self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Div<f64> for Point2 {
    type Output = Point2;
    fn div(self, rhs: f64) -> Point2 {
        Point2::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Minimal distance between the closed segments `[a,b]` and `[c,d]`.
/// Zero when they intersect.
pub fn segment_segment_distance(a: Point2, b: Point2, c: Point2, d: Point2) -> f64 {
    if segments_properly_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

/// True when the open interiors of the segments cross (shared endpoints or
/// collinear touching do not count; those cases are caught by the distance
/// checks where they matter).
pub fn segments_properly_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// A polygonal chain. Closed chains imply an edge from the last vertex back
/// to the first; open chains (slits) do not.
#[derive(Debug, Clone)]
pub struct Chain {
    pub points: Vec<Point2>,
    pub closed: bool,
}

impl Chain {
    pub fn segments(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.points.len();
        let count = if self.closed { n } else { n.saturating_sub(1) };
        (0..count).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    /// Signed area of a closed chain (positive for counterclockwise).
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        let mut acc = 0.0;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            acc += a.cross(b);
        }
        0.5 * acc
    }

    pub fn min_segment_length(&self) -> f64 {
        self.segments()
            .map(|(a, b)| a.dist(b))
            .fold(f64::INFINITY, f64::min)
    }

    fn distance_to(&self, p: Point2) -> f64 {
        self.segments()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Even-odd crossing test for a closed chain.
    fn contains_point(&self, p: Point2) -> bool {
        debug_assert!(self.closed);
        let n = self.points.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[j];
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }
}

/// Fractional-order and integrability exponents `0 < s < 1`, `1 <= p < inf`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Exponents {
    pub s: f64,
    pub p: f64,
}

impl Exponents {
    pub fn new(s: f64, p: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Validation(format!("s must lie in (0,1), got {s}")));
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::Validation(format!("p must lie in [1,inf), got {p}")));
        }
        Ok(Exponents { s, p })
    }

    /// Conjugate exponent, `1/p + 1/p' = 1` (infinite for p = 1).
    pub fn conjugate(&self) -> f64 {
        if self.p == 1.0 {
            f64::INFINITY
        } else {
            self.p / (self.p - 1.0)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DomainJson {
    outer: Vec<[f64; 2]>,
    #[serde(default)]
    holes: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    slits: Vec<Vec<[f64; 2]>>,
}

/// A planar polygonal domain: one outer boundary, interior holes, and
/// zero-width slits. The interior is the open set bounded by the outer chain,
/// minus closed holes, minus the slit chains themselves.
#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub outer: Chain,
    pub holes: Vec<Chain>,
    pub slits: Vec<Chain>,
}

impl DomainSpec {
    /// Validates and normalizes chains: outer counterclockwise, holes
    /// clockwise, duplicate closing vertices stripped.
    pub fn new(
        outer: Vec<Point2>,
        holes: Vec<Vec<Point2>>,
        slits: Vec<Vec<Point2>>,
    ) -> Result<Self> {
        let outer = normalize_closed(outer, true)?;
        let holes = holes
            .into_iter()
            .map(|h| normalize_closed(h, false))
            .collect::<Result<Vec<_>>>()?;
        let slits = slits
            .into_iter()
            .map(|s| {
                if s.len() < 2 {
                    return Err(Error::Validation("slit needs at least 2 points".into()));
                }
                if s.iter().any(|p| !p.is_finite()) {
                    return Err(Error::Validation("non-finite slit coordinate".into()));
                }
                Ok(Chain { points: s, closed: false })
            })
            .collect::<Result<Vec<_>>>()?;
        let domain = DomainSpec { outer, holes, slits };
        domain.validate()?;
        Ok(domain)
    }

    pub fn unit_square() -> Self {
        DomainSpec::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            vec![],
            vec![],
        )
        .expect("unit square is valid")
    }

    /// The square `(-1,1)^2` minus the slit `(0,1) x {0}`.
    pub fn slit_square() -> Self {
        DomainSpec::new(
            vec![
                Point2::new(-1.0, -1.0),
                Point2::new(1.0, -1.0),
                Point2::new(1.0, 1.0),
                Point2::new(-1.0, 1.0),
            ],
            vec![],
            vec![vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)]],
        )
        .expect("slit square is valid")
    }

    fn validate(&self) -> Result<()> {
        if self.outer.signed_area() <= 0.0 {
            return Err(Error::Validation("outer chain has no area".into()));
        }
        let chains = self.all_chains();
        for (ci, chain) in chains.iter().enumerate() {
            check_simple(chain, ci)?;
        }
        // Holes strictly inside the outer polygon and disjoint from each other.
        for (hi, hole) in self.holes.iter().enumerate() {
            for &p in &hole.points {
                if !self.outer.contains_point(p) || self.outer.distance_to(p) <= BOUNDARY_EPS {
                    return Err(Error::Validation(format!(
                        "hole {hi} is not strictly inside the outer polygon"
                    )));
                }
            }
        }
        // Cross-chain contacts: only slit endpoints may touch another chain.
        for i in 0..chains.len() {
            for j in (i + 1)..chains.len() {
                self.check_chain_pair(chains[i], i, chains[j], j)?;
            }
        }
        // Slit endpoints: strictly inside or touching another boundary chain.
        for (si, slit) in self.slits.iter().enumerate() {
            for &p in &slit.points {
                if !self.outer.contains_point(p) && self.outer.distance_to(p) > BOUNDARY_EPS {
                    return Err(Error::Validation(format!(
                        "slit {si} leaves the outer polygon"
                    )));
                }
            }
            let chain_idx = 1 + self.holes.len() + si;
            for (k, &p) in slit.points.iter().enumerate() {
                let endpoint = k == 0 || k == slit.points.len() - 1;
                if !endpoint && self.boundary_distance_excluding(p, chain_idx) <= BOUNDARY_EPS {
                    return Err(Error::Validation(format!(
                        "interior vertex of slit {si} touches another chain"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_chain_pair(&self, a: &Chain, ai: usize, b: &Chain, bi: usize) -> Result<()> {
        let slit_endpoints: Vec<Point2> = self
            .slits
            .iter()
            .flat_map(|s| [s.points[0], *s.points.last().unwrap()])
            .collect();
        for (sa, sb) in a.segments() {
            for (sc, sd) in b.segments() {
                let d = segment_segment_distance(sa, sb, sc, sd);
                if d <= BOUNDARY_EPS {
                    // Allowed only if the contact is at a slit endpoint.
                    let near_slit_end = slit_endpoints.iter().any(|&e| {
                        point_segment_distance(e, sa, sb) <= BOUNDARY_EPS
                            && point_segment_distance(e, sc, sd) <= BOUNDARY_EPS
                    });
                    if !near_slit_end {
                        return Err(Error::Validation(format!(
                            "chains {ai} and {bi} touch or cross"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn all_chains(&self) -> Vec<&Chain> {
        let mut v = vec![&self.outer];
        v.extend(self.holes.iter());
        v.extend(self.slits.iter());
        v
    }

    fn boundary_distance_excluding(&self, p: Point2, skip: usize) -> f64 {
        self.all_chains()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != skip)
            .map(|(_, c)| c.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance from `p` to the union of all boundary chains (no membership
    /// precondition; see [`boundary_distance`] for the checked operation).
    pub fn distance_to_boundary(&self, p: Point2) -> f64 {
        self.all_chains()
            .iter()
            .map(|c| c.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Area of the interior (outer minus holes; slits have measure zero).
    pub fn area(&self) -> f64 {
        self.outer.signed_area() + self.holes.iter().map(|h| h.signed_area()).sum::<f64>()
    }

    pub fn bbox(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.outer.points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let pts = &self.outer.points;
        let mut best: f64 = 0.0;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                best = best.max(pts[i].dist(pts[j]));
            }
        }
        best
    }

    pub fn translated(&self, t: Point2) -> DomainSpec {
        let map = |c: &Chain| Chain {
            points: c.points.iter().map(|&p| p + t).collect(),
            closed: c.closed,
        };
        DomainSpec {
            outer: map(&self.outer),
            holes: self.holes.iter().map(map).collect(),
            slits: self.slits.iter().map(map).collect(),
        }
    }

    pub fn rotated(&self, theta: f64) -> DomainSpec {
        let map = |c: &Chain| Chain {
            points: c.points.iter().map(|p| p.rotated(theta)).collect(),
            closed: c.closed,
        };
        DomainSpec {
            outer: map(&self.outer),
            holes: self.holes.iter().map(map).collect(),
            slits: self.slits.iter().map(map).collect(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let conv = |c: &Chain| -> Vec<[f64; 2]> { c.points.iter().map(|&p| p.into()).collect() };
        serde_json::json!({
            "outer": conv(&self.outer),
            "holes": self.holes.iter().map(conv).collect::<Vec<_>>(),
            "slits": self.slits.iter().map(conv).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let dto: DomainJson = serde_json::from_value(v.clone())?;
        DomainSpec::new(
            dto.outer.into_iter().map(Point2::from).collect(),
            dto.holes
                .into_iter()
                .map(|h| h.into_iter().map(Point2::from).collect())
                .collect(),
            dto.slits
                .into_iter()
                .map(|s| s.into_iter().map(Point2::from).collect())
                .collect(),
        )
    }

    /// Shortest boundary segment over all chains.
    pub fn min_segment_length(&self) -> f64 {
        self.all_chains()
            .iter()
            .map(|c| c.min_segment_length())
            .fold(f64::INFINITY, f64::min)
    }
}

fn normalize_closed(mut pts: Vec<Point2>, ccw: bool) -> Result<Chain> {
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    if pts.len() < 3 {
        return Err(Error::Validation("closed chain needs at least 3 vertices".into()));
    }
    if pts.iter().any(|p| !p.is_finite()) {
        return Err(Error::Validation("non-finite coordinate".into()));
    }
    let mut chain = Chain { points: pts, closed: true };
    let area = chain.signed_area();
    if area.abs() < 1e-300 {
        return Err(Error::Validation("degenerate closed chain".into()));
    }
    if (area > 0.0) != ccw {
        chain.points.reverse();
    }
    Ok(chain)
}

fn check_simple(chain: &Chain, ci: usize) -> Result<()> {
    let segs: Vec<(Point2, Point2)> = chain.segments().collect();
    let n = segs.len();
    for i in 0..n {
        let (a, b) = segs[i];
        if a.dist(b) <= BOUNDARY_EPS {
            return Err(Error::Validation(format!("chain {ci} has a zero-length segment")));
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (chain.closed && i == 0 && j == n - 1);
            let (c, d) = segs[j];
            if adjacent {
                if segments_properly_intersect(a, b, c, d) {
                    return Err(Error::Validation(format!("chain {ci} self-intersects")));
                }
            } else if segment_segment_distance(a, b, c, d) <= BOUNDARY_EPS {
                return Err(Error::Validation(format!("chain {ci} self-intersects")));
            }
        }
    }
    Ok(())
}

/// True iff `pt` lies in the open interior. Points within [`BOUNDARY_EPS`] of
/// any boundary chain (including slits) are classified as boundary.
pub fn contains(domain: &DomainSpec, pt: Point2) -> bool {
    if !pt.is_finite() {
        return false;
    }
    if domain.distance_to_boundary(pt) <= BOUNDARY_EPS {
        return false;
    }
    if !domain.outer.contains_point(pt) {
        return false;
    }
    !domain.holes.iter().any(|h| h.contains_point(pt))
}

/// Distance of an interior point to the boundary, the `d(x)` entering the
/// restricted seminorm. Errors when `pt` is not interior.
pub fn boundary_distance(domain: &DomainSpec, pt: Point2) -> Result<f64> {
    if !contains(domain, pt) {
        return Err(Error::Domain(format!(
            "point ({}, {}) is not in the open interior",
            pt.x, pt.y
        )));
    }
    Ok(domain.distance_to_boundary(pt))
}

/// The (asymmetric) restricted-pair predicate `|x - y| < d(x)/2`.
pub fn in_restricted_pair(domain: &DomainSpec, x: Point2, y: Point2) -> Result<bool> {
    let d = boundary_distance(domain, x)?;
    Ok(x.dist(y) < 0.5 * d)
}

/// True iff the closed segment `[x, y]` lies in the open interior.
pub fn segment_in_domain(domain: &DomainSpec, x: Point2, y: Point2) -> bool {
    if !contains(domain, x) || !contains(domain, y) {
        return false;
    }
    for chain in domain.all_chains() {
        for (a, b) in chain.segments() {
            if segment_segment_distance(x, y, a, b) <= BOUNDARY_EPS {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slit_domain() -> DomainSpec {
        DomainSpec::slit_square()
    }

    #[test]
    fn contains_basic() {
        let sq = DomainSpec::unit_square();
        assert!(contains(&sq, Point2::new(0.5, 0.5)));
        assert!(!contains(&sq, Point2::new(1.5, 0.5)));
        assert!(!contains(&sq, Point2::new(0.5, 0.0)));
        let slit = slit_domain();
        assert!(!contains(&slit, Point2::new(0.5, 0.0)));
        assert!(contains(&slit, Point2::new(0.5, 0.1)));
        assert!(contains(&slit, Point2::new(-0.5, 0.0)));
    }

    #[test]
    fn boundary_distance_examples() {
        let sq = DomainSpec::unit_square();
        assert!((boundary_distance(&sq, Point2::new(0.5, 0.5)).unwrap() - 0.5).abs() < 1e-15);
        assert!((boundary_distance(&sq, Point2::new(0.25, 0.5)).unwrap() - 0.25).abs() < 1e-15);
        let slit = slit_domain();
        assert!((boundary_distance(&slit, Point2::new(0.5, 0.1)).unwrap() - 0.1).abs() < 1e-15);
        assert!(boundary_distance(&slit, Point2::new(0.5, 0.0)).is_err());
    }

    #[test]
    fn restricted_pair_examples() {
        let sq = DomainSpec::unit_square();
        assert!(in_restricted_pair(&sq, Point2::new(0.5, 0.5), Point2::new(0.6, 0.5)).unwrap());
        assert!(!in_restricted_pair(&sq, Point2::new(0.5, 0.5), Point2::new(0.8, 0.5)).unwrap());
        let slit = slit_domain();
        assert!(!in_restricted_pair(&slit, Point2::new(0.5, 0.1), Point2::new(0.5, -0.1)).unwrap());
    }

    #[test]
    fn segment_examples() {
        let sq = DomainSpec::unit_square();
        assert!(segment_in_domain(&sq, Point2::new(0.1, 0.1), Point2::new(0.9, 0.9)));
        let slit = slit_domain();
        assert!(!segment_in_domain(&slit, Point2::new(0.5, 0.1), Point2::new(0.5, -0.1)));
        assert!(segment_in_domain(&slit, Point2::new(-0.5, 0.1), Point2::new(-0.5, -0.1)));
    }

    #[test]
    fn exponents_validation() {
        assert!(Exponents::new(0.5, 2.0).is_ok());
        assert!(Exponents::new(0.0, 2.0).is_err());
        assert!(Exponents::new(0.5, 0.9).is_err());
        let e = Exponents::new(0.5, 1.5).unwrap();
        assert!((e.conjugate() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn area_and_bbox() {
        let slit = slit_domain();
        assert!((slit.area() - 4.0).abs() < 1e-12);
        let (lo, hi) = slit.bbox();
        assert_eq!((lo.x, lo.y, hi.x, hi.y), (-1.0, -1.0, 1.0, 1.0));
    }

    #[test]
    fn rejects_crossing_chains() {
        let r = DomainSpec::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            vec![],
            vec![vec![Point2::new(-0.5, 0.5), Point2::new(0.5, 0.5)]],
        );
        assert!(r.is_err());
    }

    #[test]
    fn slit_touching_outer_is_valid() {
        // This is exactly the canonical slit domain: endpoint (1,0) on the
        // outer boundary.
        assert!(slit_domain().validate().is_ok());
    }
}
