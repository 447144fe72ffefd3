//! Element-pair quadrature for the Gagliardo double integral
//! `int int |f(x)-f(y)|^p / |x-y|^{2+sp} dy dx`, full or restricted to
//! `|x-y| < d(x)/2`.
//!
//! Far pairs (separated by at least one element diameter) use cached tensor
//! Gauss rules. Identical, adjacent and ball-straddling pairs integrate the
//! inner variable in polar coordinates around each outer quadrature node;
//! the radial substitution `u = t^{p-sp}` absorbs the kernel, so locally
//! linear fields are integrated exactly in the radius. The ladder refines
//! the mesh and reports the per-level history together with the geometric
//! divergence flag.

use rayon::prelude::*;

use crate::field::FieldFn;
use crate::geometry::{DomainSpec, Exponents, Point2};
use crate::meshing::Mesh;
use crate::quadrature::{abs_pow, pairwise_sum, scaled, tri_points, GL4, TRI6};
use crate::seminorms::SeminormResult;
use crate::tri::Triangle;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
/// Angular sectors for a full turn in the near-singular polar rule.
const SECTORS_PER_TURN: usize = 16;

pub struct GagliardoEngine<'a> {
    pub domain: &'a DomainSpec,
    pub e: Exponents,
    pub restricted: bool,
}

struct LevelData {
    tris: Vec<Triangle>,
    bbox: Vec<(Point2, Point2)>,
    diam: Vec<f64>,
    /// Quadrature nodes with area-weights, per triangle.
    qpts: Vec<Vec<(Point2, f64)>>,
    fvals: Vec<Vec<f64>>,
    /// Ball radii `d(x)/2` per node (restricted mode only).
    radii: Vec<Vec<f64>>,
}

impl<'a> GagliardoEngine<'a> {
    pub fn new(domain: &'a DomainSpec, e: Exponents, restricted: bool) -> Self {
        GagliardoEngine { domain, e, restricted }
    }

    /// Runs the ladder starting from `base`, refining `n_levels - 1` times.
    pub fn run(
        &self,
        f: &FieldFn,
        base: &Mesh,
        first_level: usize,
        n_levels: usize,
    ) -> SeminormResult {
        assert!(n_levels >= 1);
        let p = self.e.p;
        let mut history = Vec::with_capacity(n_levels);
        let mut mesh = base.clone();
        for lvl in 0..n_levels {
            if lvl > 0 {
                mesh = mesh.refine();
            }
            let integral = self.integral_on_mesh(f, &mesh);
            history.push(integral.max(0.0).powf(1.0 / p));
        }
        SeminormResult::from_history(history, first_level)
    }

    fn prepare(&self, f: &FieldFn, mesh: &Mesh) -> LevelData {
        let n = mesh.n_triangles();
        let tris: Vec<Triangle> = (0..n).map(|t| mesh.tri(t)).collect();
        let bbox: Vec<_> = tris.iter().map(|t| t.bbox()).collect();
        let diam: Vec<f64> = tris.iter().map(|t| t.diameter()).collect();
        let qpts: Vec<Vec<(Point2, f64)>> = tris
            .par_iter()
            .map(|t| tri_points(&TRI6, t.v, t.area()))
            .collect();
        let fvals: Vec<Vec<f64>> = qpts
            .par_iter()
            .map(|pts| pts.iter().map(|&(p, _)| f.eval(p)).collect())
            .collect();
        let radii: Vec<Vec<f64>> = if self.restricted {
            qpts.par_iter()
                .map(|pts| {
                    pts.iter()
                        .map(|&(p, _)| 0.5 * self.domain.distance_to_boundary(p))
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        LevelData { tris, bbox, diam, qpts, fvals, radii }
    }

    /// The p-th power of the seminorm on one mesh.
    fn integral_on_mesh(&self, f: &FieldFn, mesh: &Mesh) -> f64 {
        let data = self.prepare(f, mesh);
        let n = data.tris.len();
        let sp = self.e.s * self.e.p;
        let per_tx: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|tx| {
                let mut acc = 0.0;
                for ty in 0..n {
                    if self.restricted {
                        acc += self.pair_restricted(f, &data, tx, ty, sp);
                    } else {
                        match pair_class(&data, tx, ty) {
                            PairClass::Near => acc += self.pair_polar(f, &data, tx, ty, sp, None),
                            PairClass::Far => {
                                // Symmetric kernel: count (tx, ty) once, doubled.
                                if ty > tx {
                                    acc += 2.0 * pair_tensor(&data, tx, ty, self.e.p, sp);
                                }
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        pairwise_sum(&per_tx)
    }

    /// Restricted-mode contribution of the ordered pair `(tx, ty)`.
    fn pair_restricted(&self, f: &FieldFn, data: &LevelData, tx: usize, ty: usize, sp: f64) -> f64 {
        let p = self.e.p;
        match pair_class(data, tx, ty) {
            PairClass::Near => self.pair_polar(f, data, tx, ty, sp, Some(&data.radii[tx])),
            PairClass::Far => {
                let ty_tri = &data.tris[ty];
                let mut acc = 0.0;
                for (qi, &(x, wx)) in data.qpts[tx].iter().enumerate() {
                    let radius = data.radii[tx][qi];
                    let dmin = point_triangle_distance(x, ty_tri);
                    if dmin >= radius {
                        continue;
                    }
                    let dmax = ty_tri.v.iter().map(|&v| v.dist(x)).fold(0.0f64, f64::max);
                    if dmax <= radius {
                        // Fully inside the ball: plain tensor row.
                        let fx = data.fvals[tx][qi];
                        for (&(y, wy), &fy) in data.qpts[ty].iter().zip(&data.fvals[ty]) {
                            let r = x.dist(y);
                            acc += wx * wy * abs_pow(fx - fy, p) / kernel_pow(r, sp);
                        }
                    } else if bbox_distance(&data.bbox[tx], &data.bbox[ty])
                        <= 3.0 * data.diam[tx].max(data.diam[ty])
                    {
                        // Ball edge close by: polar handles the cap exactly.
                        acc += self.node_polar(f, data, tx, qi, ty, sp, Some(radius)) * wx;
                    } else {
                        // One subdivision layer, then a per-node indicator.
                        let fx = data.fvals[tx][qi];
                        for child in subdivide_once(ty_tri) {
                            for (y, wy) in tri_points(&TRI6, child.v, child.area()) {
                                let r = x.dist(y);
                                if r < radius {
                                    acc += wx * wy * abs_pow(fx - f.eval(y), p) / kernel_pow(r, sp);
                                }
                            }
                        }
                    }
                }
                acc
            }
        }
    }

    /// Polar integration over `ty` for every outer node of `tx`.
    fn pair_polar(
        &self,
        f: &FieldFn,
        data: &LevelData,
        tx: usize,
        ty: usize,
        sp: f64,
        radii: Option<&[f64]>,
    ) -> f64 {
        let mut acc = 0.0;
        for qi in 0..data.qpts[tx].len() {
            let wx = data.qpts[tx][qi].1;
            let rmax = radii.map(|r| r[qi]);
            acc += self.node_polar(f, data, tx, qi, ty, sp, rmax) * wx;
        }
        acc
    }

    /// Inner integral over triangle `ty` (optionally capped at `rmax`) around
    /// outer node `qi` of `tx`.
    fn node_polar(
        &self,
        f: &FieldFn,
        data: &LevelData,
        tx: usize,
        qi: usize,
        ty: usize,
        sp: f64,
        rmax: Option<f64>,
    ) -> f64 {
        let (x, _) = data.qpts[tx][qi];
        let fx = data.fvals[tx][qi];
        let tri = &data.tris[ty];
        if let Some(r) = rmax {
            if point_triangle_distance(x, tri) >= r {
                return 0.0;
            }
        }
        let p = self.e.p;
        let kappa = p - sp;
        let mut acc = 0.0;
        for (a0, a1) in angular_arcs(x, tri) {
            let span = a1 - a0;
            let n_sect = ((SECTORS_PER_TURN as f64 * span / TWO_PI).ceil() as usize).max(1);
            let dt = span / n_sect as f64;
            for k in 0..n_sect {
                let lo = a0 + k as f64 * dt;
                for (theta, wt) in scaled(&GL4, lo, lo + dt) {
                    let dir = Point2::unit(theta);
                    let Some((mut t0, mut t1)) = tri.ray_interval(x, dir) else {
                        continue;
                    };
                    t0 = t0.max(0.0);
                    if let Some(r) = rmax {
                        t1 = t1.min(r);
                    }
                    if t1 <= t0 {
                        continue;
                    }
                    // int_{t0}^{t1} G(t) t^{kappa - 1} dt with u = t^kappa.
                    let (u0, u1) = (t0.powf(kappa), t1.powf(kappa));
                    for (u, wu) in scaled(&GL4, u0, u1) {
                        let t = u.powf(1.0 / kappa);
                        let fy = f.eval(x + dir * t);
                        let g = abs_pow((fx - fy) / t, p);
                        acc += wt * wu * g / kappa;
                    }
                }
            }
        }
        acc
    }
}

#[derive(PartialEq)]
enum PairClass {
    Near,
    Far,
}

fn pair_class(data: &LevelData, tx: usize, ty: usize) -> PairClass {
    if tx == ty {
        return PairClass::Near;
    }
    let sep = bbox_distance(&data.bbox[tx], &data.bbox[ty]);
    if sep >= data.diam[tx].max(data.diam[ty]) {
        PairClass::Far
    } else {
        PairClass::Near
    }
}

fn bbox_distance(a: &(Point2, Point2), b: &(Point2, Point2)) -> f64 {
    let dx = (a.0.x - b.1.x).max(b.0.x - a.1.x).max(0.0);
    let dy = (a.0.y - b.1.y).max(b.0.y - a.1.y).max(0.0);
    dx.hypot(dy)
}

fn point_triangle_distance(p: Point2, tri: &Triangle) -> f64 {
    if tri.contains(p, 0.0) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for i in 0..3 {
        best = best.min(crate::geometry::point_segment_distance(
            p,
            tri.v[i],
            tri.v[(i + 1) % 3],
        ));
    }
    best
}

#[inline]
fn kernel_pow(r: f64, sp: f64) -> f64 {
    // r^{2+sp}
    r * r * r.powf(sp)
}

fn pair_tensor(data: &LevelData, tx: usize, ty: usize, p: f64, sp: f64) -> f64 {
    let mut acc = 0.0;
    for (&(x, wx), &fx) in data.qpts[tx].iter().zip(&data.fvals[tx]) {
        for (&(y, wy), &fy) in data.qpts[ty].iter().zip(&data.fvals[ty]) {
            let r = x.dist(y);
            acc += wx * wy * abs_pow(fx - fy, p) / kernel_pow(r, sp);
        }
    }
    acc
}

fn subdivide_once(tri: &Triangle) -> [Triangle; 4] {
    let [a, b, c] = tri.v;
    let (ab, bc, ca) = ((a + b) * 0.5, (b + c) * 0.5, (c + a) * 0.5);
    [
        Triangle::new(a, ab, ca),
        Triangle::new(ab, b, bc),
        Triangle::new(ca, bc, c),
        Triangle::new(ab, bc, ca),
    ]
}

/// Angular arcs covering the triangle as seen from `x`, split at vertex
/// directions so the radial limits are smooth within each arc.
fn angular_arcs(x: Point2, tri: &Triangle) -> Vec<(f64, f64)> {
    let inside = tri.contains(x, 1e-12);
    if inside {
        let mut angles: Vec<f64> = tri
            .v
            .iter()
            .map(|&v| {
                let d = v - x;
                d.y.atan2(d.x)
            })
            .collect();
        angles.sort_by(f64::total_cmp);
        vec![
            (angles[0], angles[1]),
            (angles[1], angles[2]),
            (angles[2], angles[0] + TWO_PI),
        ]
        .into_iter()
        .filter(|(a, b)| b > a)
        .collect()
    } else {
        let base_dir = tri.centroid() - x;
        let base = base_dir.y.atan2(base_dir.x);
        let mut angles: Vec<f64> = tri
            .v
            .iter()
            .map(|&v| {
                let d = v - x;
                let mut a = d.y.atan2(d.x);
                while a < base - std::f64::consts::PI {
                    a += TWO_PI;
                }
                while a > base + std::f64::consts::PI {
                    a -= TWO_PI;
                }
                a
            })
            .collect();
        angles.sort_by(f64::total_cmp);
        vec![(angles[0], angles[1]), (angles[1], angles[2])]
            .into_iter()
            .filter(|(a, b)| *b > a + 1e-15)
            .collect()
    }
}

/// Full Gagliardo seminorm on a refinement ladder starting from `mesh`.
pub fn gagliardo_full(
    f: &FieldFn,
    e: &Exponents,
    domain: &DomainSpec,
    mesh: &Mesh,
    levels: usize,
) -> SeminormResult {
    GagliardoEngine::new(domain, *e, false).run(f, mesh, 0, levels)
}

/// Restricted Gagliardo seminorm (`|x-y| < d(x)/2`) on a refinement ladder.
pub fn gagliardo_restricted(
    f: &FieldFn,
    e: &Exponents,
    domain: &DomainSpec,
    mesh: &Mesh,
    levels: usize,
) -> SeminormResult {
    GagliardoEngine::new(domain, *e, true).run(f, mesh, 0, levels)
}
