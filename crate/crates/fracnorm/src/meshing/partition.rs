//! Vertex patches and partitions of unity.
//!
//! For a plain mesh the partition is the Lagrange hat basis: one patch per
//! (duplicated) vertex, the hat supported on the triangles containing it, so
//! a slit vertex's hat lives on one side only. For snowflake domains the
//! patches of the generation-N polygon are extended across its boundary by
//! the descendant tent triangles of deeper generations; hats are continued
//! by their affine formula from the host triangle and the family is
//! renormalized to sum to one on the deep polygon.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::meshing::{mesh_quality, triangulate, Locator, Mesh};
use crate::snowflake::{SnowflakeBuild, SnowflakePlan};
use crate::tri::Triangle;

#[derive(Debug, Clone)]
pub struct Patch {
    pub vertex: usize,
    pub triangles: Vec<usize>,
    /// Extended regions (indices into `SnowflakeExtension::regions`).
    pub regions: Vec<usize>,
    /// An interior disk `B(john_center, john_radius)` inside the patch.
    pub john_center: Point2,
    pub john_radius: f64,
    pub diameter: f64,
}

/// Affine function `gx * x + gy * y + c`.
#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub gx: f64,
    pub gy: f64,
    pub c: f64,
}

impl Affine {
    pub fn eval(&self, p: Point2) -> f64 {
        self.gx * p.x + self.gy * p.y + self.c
    }

    pub fn grad(&self) -> Point2 {
        Point2::new(self.gx, self.gy)
    }

    fn from_hat(tri: &Triangle, corner: usize) -> Affine {
        let g = tri.hat_gradients()[corner];
        let v = tri.v[corner];
        Affine { gx: g.x, gy: g.y, c: 1.0 - g.x * v.x - g.y * v.y }
    }
}

/// Descendant material attached to one boundary edge of the truncated mesh.
#[derive(Debug, Clone)]
pub struct EdgeRegion {
    pub host_tri: usize,
    /// Boundary edge endpoints (mesh vertex indices).
    pub u: usize,
    pub v: usize,
    pub hat_u: Affine,
    pub hat_v: Affine,
    pub tents: Vec<Triangle>,
}

#[derive(Debug, Clone)]
pub struct SnowflakeExtension {
    pub regions: Vec<EdgeRegion>,
}

/// Where a point sits relative to a partition's support.
#[derive(Debug, Clone, Copy)]
pub enum Location {
    MeshTri(usize),
    Tent { region: usize, tent: usize },
    Outside,
}

#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    pub mesh: Arc<Mesh>,
    pub scale: f64,
    pub patches: Vec<Patch>,
    pub extension: Option<SnowflakeExtension>,
    locator: Locator,
}

impl PartitionOfUnity {
    pub fn n_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn locate(&self, p: Point2) -> Location {
        if let Some(t) = self.locator.locate(&self.mesh, p) {
            return Location::MeshTri(t);
        }
        if let Some(ext) = &self.extension {
            for (ri, region) in ext.regions.iter().enumerate() {
                for (ti, tent) in region.tents.iter().enumerate() {
                    if tent.contains(p, 1e-10) {
                        return Location::Tent { region: ri, tent: ti };
                    }
                }
            }
        }
        Location::Outside
    }

    /// Active `(patch, value)` pairs at `p`; values sum to one inside the
    /// partition's domain.
    pub fn eval_all(&self, p: Point2) -> Vec<(usize, f64)> {
        match self.locate(p) {
            Location::MeshTri(t) => {
                let tri = self.mesh.tri(t);
                let l = tri.barycentric(p);
                (0..3).map(|k| (self.mesh.triangles[t][k], l[k])).collect()
            }
            Location::Tent { region, .. } => {
                let r = &self.extension.as_ref().unwrap().regions[region];
                let au = r.hat_u.eval(p).max(0.0);
                let av = r.hat_v.eval(p).max(0.0);
                let sum = au + av;
                debug_assert!(sum > 0.0, "extended hats vanish on a tent");
                if sum <= 0.0 {
                    return vec![(r.u, 0.5), (r.v, 0.5)];
                }
                vec![(r.u, au / sum), (r.v, av / sum)]
            }
            Location::Outside => Vec::new(),
        }
    }

    /// Value of the j-th partition function at `p`.
    pub fn psi(&self, j: usize, p: Point2) -> f64 {
        self.eval_all(p)
            .into_iter()
            .find(|&(i, _)| i == j)
            .map(|(_, v)| v)
            .unwrap_or(0.0)
    }

    /// Gradient of the j-th partition function at `p` (defined a.e.).
    pub fn psi_grad(&self, j: usize, p: Point2) -> Point2 {
        match self.locate(p) {
            Location::MeshTri(t) => {
                let corners = self.mesh.triangles[t];
                match corners.iter().position(|&v| v == j) {
                    Some(k) => self.mesh.tri(t).hat_gradients()[k],
                    None => Point2::new(0.0, 0.0),
                }
            }
            Location::Tent { region, .. } => {
                let r = &self.extension.as_ref().unwrap().regions[region];
                if j != r.u && j != r.v {
                    return Point2::new(0.0, 0.0);
                }
                let au = r.hat_u.eval(p);
                let av = r.hat_v.eval(p);
                let (cu, gu) = if au > 0.0 { (au, r.hat_u.grad()) } else { (0.0, Point2::new(0.0, 0.0)) };
                let (cv, gv) = if av > 0.0 { (av, r.hat_v.grad()) } else { (0.0, Point2::new(0.0, 0.0)) };
                let sum = cu + cv;
                if sum <= 0.0 {
                    return Point2::new(0.0, 0.0);
                }
                let gsum = gu + gv;
                let (a, ga) = if j == r.u { (cu, gu) } else { (cv, gv) };
                (ga * sum - gsum * a) / (sum * sum)
            }
            Location::Outside => Point2::new(0.0, 0.0),
        }
    }

    /// Combines patch coefficients: `h(p) = sum_j coeffs[j] psi_j(p)`.
    pub fn combine(&self, coeffs: &[f64], p: Point2) -> f64 {
        self.eval_all(p).into_iter().map(|(j, v)| coeffs[j] * v).sum()
    }

    pub fn combine_grad(&self, coeffs: &[f64], p: Point2) -> Point2 {
        match self.locate(p) {
            Location::MeshTri(t) => {
                let corners = self.mesh.triangles[t];
                let grads = self.mesh.tri(t).hat_gradients();
                let mut g = Point2::new(0.0, 0.0);
                for k in 0..3 {
                    g = g + grads[k] * coeffs[corners[k]];
                }
                g
            }
            Location::Tent { region, .. } => {
                let r = &self.extension.as_ref().unwrap().regions[region];
                let au = r.hat_u.eval(p);
                let av = r.hat_v.eval(p);
                let (cu, gu) = if au > 0.0 { (au, r.hat_u.grad()) } else { (0.0, Point2::new(0.0, 0.0)) };
                let (cv, gv) = if av > 0.0 { (av, r.hat_v.grad()) } else { (0.0, Point2::new(0.0, 0.0)) };
                let sum = cu + cv;
                if sum <= 0.0 {
                    return Point2::new(0.0, 0.0);
                }
                // h = (fu*au + fv*av) / (au + av)
                let (fu, fv) = (coeffs[r.u], coeffs[r.v]);
                let num = fu * cu + fv * cv;
                let gnum = gu * fu + gv * fv;
                let gsum = gu + gv;
                (gnum * sum - gsum * num) / (sum * sum)
            }
            Location::Outside => Point2::new(0.0, 0.0),
        }
    }

    /// Sup norm of the gradient of psi_j over its support (exact on mesh
    /// triangles, sampled on tents).
    pub fn grad_sup(&self, j: usize) -> f64 {
        let patch = &self.patches[j];
        let mut best: f64 = 0.0;
        for &t in &patch.triangles {
            let corners = self.mesh.triangles[t];
            if let Some(k) = corners.iter().position(|&v| v == j) {
                best = best.max(self.mesh.tri(t).hat_gradients()[k].norm());
            }
        }
        if let Some(ext) = &self.extension {
            for &ri in &patch.regions {
                let region = &ext.regions[ri];
                if region.u != j && region.v != j {
                    continue;
                }
                for tent in &region.tents {
                    for sub in subdivide(tent, 1) {
                        for &(l1, l2, _) in crate::quadrature::TRI6.iter() {
                            let p = sub.v[0] * l1 + sub.v[1] * l2 + sub.v[2] * (1.0 - l1 - l2);
                            best = best.max(self.psi_grad(j, p).norm());
                        }
                    }
                }
            }
        }
        best
    }

    /// Maximal number of patches covering a single cell of the support.
    pub fn max_overlap(&self) -> usize {
        let mut cover = vec![0usize; self.mesh.triangles.len()];
        for patch in &self.patches {
            for &t in &patch.triangles {
                cover[t] += 1;
            }
        }
        let mesh_max = cover.into_iter().max().unwrap_or(0);
        let tent_max = match &self.extension {
            Some(ext) => {
                let mut per_region = vec![0usize; ext.regions.len()];
                for patch in &self.patches {
                    for &r in &patch.regions {
                        per_region[r] += 1;
                    }
                }
                per_region.into_iter().max().unwrap_or(0)
            }
            None => 0,
        };
        mesh_max.max(tent_max)
    }

    /// Integration cells covering the partition's full domain: the mesh
    /// triangles plus (for snowflakes) every descendant tent subdivided
    /// `tent_subdiv` times.
    pub fn integration_cells(&self, tent_subdiv: usize) -> Vec<Triangle> {
        let mut cells: Vec<Triangle> =
            (0..self.mesh.n_triangles()).map(|t| self.mesh.tri(t)).collect();
        if let Some(ext) = &self.extension {
            for region in &ext.regions {
                for tent in &region.tents {
                    cells.extend(subdivide(tent, tent_subdiv));
                }
            }
        }
        cells
    }
}

fn subdivide(tri: &Triangle, levels: usize) -> Vec<Triangle> {
    let mut out = vec![*tri];
    for _ in 0..levels {
        let mut next = Vec::with_capacity(out.len() * 4);
        for t in &out {
            let [a, b, c] = t.v;
            let (ab, bc, ca) = ((a + b) * 0.5, (b + c) * 0.5, (c + a) * 0.5);
            next.push(Triangle::new(a, ab, ca));
            next.push(Triangle::new(ab, b, bc));
            next.push(Triangle::new(ca, bc, c));
            next.push(Triangle::new(ab, bc, ca));
        }
        out = next;
    }
    out
}

fn build_patches(mesh: &Mesh) -> Vec<Patch> {
    let incidence = mesh.vertex_patches();
    incidence
        .into_iter()
        .enumerate()
        .map(|(v, triangles)| {
            let (mut center, mut radius) = (mesh.vertices[v], 0.0);
            let mut diameter: f64 = 0.0;
            let mut pts: Vec<Point2> = Vec::new();
            for &t in &triangles {
                let tri = mesh.tri(t);
                if tri.inradius() > radius {
                    radius = tri.inradius();
                    center = tri.incenter();
                }
                pts.extend_from_slice(&tri.v);
            }
            for i in 0..pts.len() {
                for j in (i + 1)..pts.len() {
                    diameter = diameter.max(pts[i].dist(pts[j]));
                }
            }
            Patch {
                vertex: v,
                triangles,
                regions: Vec::new(),
                john_center: center,
                john_radius: radius,
                diameter,
            }
        })
        .collect()
}

/// The Lagrange partition of unity of a mesh: one hat per (duplicated)
/// vertex.
pub fn lagrange_partition(mesh: &Mesh) -> PartitionOfUnity {
    let mesh = Arc::new(mesh.clone());
    let patches = build_patches(&mesh);
    let locator = mesh.locator();
    PartitionOfUnity {
        scale: mesh.target_scale,
        mesh,
        patches,
        extension: None,
        locator,
    }
}

/// Builds the truncated-generation mesh and the extended, renormalized
/// partition of unity for a snowflake plan at scale `l`.
///
/// The truncation generation is `N = ceil(log l / log p)`; descendant tents
/// of generations `N+1 ..= N_max` extend the patches whose triangles carry
/// the hosting boundary edges.
pub fn snowflake_partition(plan: &SnowflakePlan, scale: f64) -> Result<(Mesh, PartitionOfUnity)> {
    let build = SnowflakeBuild::run(plan)?;
    snowflake_partition_from_build(&build, scale)
}

pub fn snowflake_partition_from_build(
    build: &SnowflakeBuild,
    scale: f64,
) -> Result<(Mesh, PartitionOfUnity)> {
    let plan = &build.plan;
    let n_max = plan.generations();
    let n = (scale.ln() / plan.p.ln()).ceil().max(0.0) as usize;
    if n < 1 {
        return Err(Error::Meshing(format!(
            "scale {scale} too coarse for a snowflake partition (needs N >= 1)"
        )));
    }
    if n > n_max {
        return Err(Error::Meshing(format!(
            "plan too shallow: requested scale needs generation {n} > N_max {n_max}"
        )));
    }

    let curve_n = build.curve(n);
    let domain_n = curve_n.to_domain()?;
    let mesh = triangulate(&domain_n, scale)?;
    let mesh_arc = Arc::new(mesh.clone());
    let mut patches = build_patches(&mesh_arc);

    // Map generation-N curve segments to mesh boundary edges. Segment
    // lengths never exceed the scale, so the mesher keeps them unsplit and
    // the endpoints match bit for bit.
    let mut vertex_of: std::collections::HashMap<(u64, u64), usize> = Default::default();
    for (i, p) in mesh_arc.vertices.iter().enumerate() {
        vertex_of.entry((p.x.to_bits(), p.y.to_bits())).or_insert(i);
    }
    let mut edge_host: std::collections::HashMap<(usize, usize), usize> = Default::default();
    for (t, tri) in mesh_arc.triangles.iter().enumerate() {
        for k in 0..3 {
            let (i, j) = (tri[k], tri[(k + 1) % 3]);
            let key = (i.min(j), i.max(j));
            if mesh_arc.boundary_edges.contains_key(&key) {
                edge_host.insert(key, t);
            }
        }
    }

    let mut regions: Vec<EdgeRegion> = Vec::new();
    for (seg_idx, tents) in build.descendants_by_segment(n) {
        let seg = &build.generations[n][seg_idx];
        let u = *vertex_of
            .get(&(seg.a.x.to_bits(), seg.a.y.to_bits()))
            .ok_or_else(|| Error::Meshing("snowflake segment endpoint missing from mesh".into()))?;
        let v = *vertex_of
            .get(&(seg.b.x.to_bits(), seg.b.y.to_bits()))
            .ok_or_else(|| Error::Meshing("snowflake segment endpoint missing from mesh".into()))?;
        let key = (u.min(v), u.max(v));
        let host_tri = *edge_host.get(&key).ok_or_else(|| {
            Error::Meshing("snowflake boundary segment is not a mesh edge".into())
        })?;
        let tri = mesh_arc.tri(host_tri);
        let corners = mesh_arc.triangles[host_tri];
        let ku = corners.iter().position(|&c| c == u).expect("edge endpoint in host");
        let kv = corners.iter().position(|&c| c == v).expect("edge endpoint in host");
        regions.push(EdgeRegion {
            host_tri,
            u,
            v,
            hat_u: Affine::from_hat(&tri, ku),
            hat_v: Affine::from_hat(&tri, kv),
            tents: tents.iter().map(|&ti| build.tents[ti].tri).collect(),
        });
    }

    // Attach regions to every patch containing the host triangle, and widen
    // patch diameters by the tent extents.
    for (ri, region) in regions.iter().enumerate() {
        for &corner in &mesh_arc.triangles[region.host_tri] {
            patches[corner].regions.push(ri);
            let mut pts: Vec<Point2> = Vec::new();
            for &t in &patches[corner].triangles {
                pts.extend_from_slice(&mesh_arc.tri(t).v);
            }
            for tent in &region.tents {
                pts.extend_from_slice(&tent.v);
            }
            let mut diam = patches[corner].diameter;
            for i in 0..pts.len() {
                for j in (i + 1)..pts.len() {
                    diam = diam.max(pts[i].dist(pts[j]));
                }
            }
            patches[corner].diameter = diam;
        }
    }

    let locator = mesh_arc.locator();
    let pu = PartitionOfUnity {
        scale,
        mesh: mesh_arc,
        patches,
        extension: Some(SnowflakeExtension { regions }),
        locator,
    };
    Ok((mesh, pu))
}

/// Partition export: per-patch metadata plus nodal coefficient arrays.
pub fn partition_to_json(pu: &PartitionOfUnity) -> serde_json::Value {
    let patches: Vec<serde_json::Value> = pu
        .patches
        .iter()
        .map(|p| {
            serde_json::json!({
                "vertex": p.vertex,
                "triangles": p.triangles,
                "john_center": [p.john_center.x, p.john_center.y],
                "john_radius": p.john_radius,
                "diameter": p.diameter,
                // Lagrange nodal coefficients: one-hot at the patch vertex.
                "coeff_index": [p.vertex],
                "coeff_value": [1.0],
            })
        })
        .collect();
    serde_json::json!({
        "scale": pu.scale,
        "kind": if pu.extension.is_some() { "snowflake-extended" } else { "lagrange" },
        "n_vertices": pu.mesh.n_vertices(),
        "patches": patches,
    })
}

/// Convenience audit combining mesh and partition.
pub fn partition_quality(pu: &PartitionOfUnity) -> crate::meshing::QualityReport {
    mesh_quality(&pu.mesh, Some(pu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{contains, DomainSpec};
    use crate::snowflake::Rule;

    fn sample_interior(domain: &DomainSpec, n: usize, seed: u64) -> Vec<Point2> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = domain.bbox();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let p = Point2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
            if contains(domain, p) && domain.distance_to_boundary(p) > 1e-9 {
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn hats_sum_to_one_on_square() {
        let domain = DomainSpec::unit_square();
        let mesh = triangulate(&domain, 0.25).unwrap();
        let pu = lagrange_partition(&mesh);
        for p in sample_interior(&domain, 500, 7) {
            let sum: f64 = pu.eval_all(p).iter().map(|&(_, v)| v).sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum {sum} at ({}, {})", p.x, p.y);
        }
    }

    #[test]
    fn center_hat_is_lagrange() {
        let mesh = triangulate(&DomainSpec::unit_square(), 0.5).unwrap();
        let pu = lagrange_partition(&mesh);
        let center = (0..mesh.n_vertices())
            .find(|&v| mesh.vertices[v] == Point2::new(0.5, 0.5))
            .unwrap();
        assert!((pu.psi(center, Point2::new(0.5, 0.5)) - 1.0).abs() < 1e-12);
        for v in 0..mesh.n_vertices() {
            if v != center {
                assert!(pu.psi(v, Point2::new(0.5, 0.5)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn slit_sides_are_separated() {
        let domain = DomainSpec::slit_square();
        let mesh = triangulate(&domain, 0.25).unwrap();
        let pu = lagrange_partition(&mesh);
        for &(a, b) in &mesh.duplicate_pairs {
            let upper = if mesh.side_tags[a].unwrap().positive { a } else { b };
            let lower = if upper == a { b } else { a };
            let x = mesh.vertices[upper].x;
            let above = Point2::new(x, 0.01);
            let below = Point2::new(x, -0.01);
            assert!(pu.psi(upper, above) > 0.0);
            assert!(pu.psi(upper, below).abs() < 1e-12);
            assert!(pu.psi(lower, below) > 0.0);
            assert!(pu.psi(lower, above).abs() < 1e-12);
            // Disjoint supports.
            let tris_a: std::collections::HashSet<_> =
                pu.patches[upper].triangles.iter().collect();
            assert!(pu.patches[lower].triangles.iter().all(|t| !tris_a.contains(t)));
        }
    }

    #[test]
    fn john_balls_inside_patches() {
        let domain = DomainSpec::slit_square();
        let mesh = triangulate(&domain, 0.25).unwrap();
        let pu = lagrange_partition(&mesh);
        for patch in &pu.patches {
            assert!(patch.john_radius > 0.0);
            // Sample the disk and check membership in the patch triangles.
            for k in 0..16 {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / 16.0;
                let p = patch.john_center + Point2::unit(theta) * (0.9 * patch.john_radius);
                let inside = patch
                    .triangles
                    .iter()
                    .any(|&t| pu.mesh.tri(t).contains(p, 1e-12));
                assert!(inside, "john ball leaves patch at vertex {}", patch.vertex);
            }
        }
    }

    #[test]
    fn all_straight_plan_has_no_extension_material() {
        let plan = SnowflakePlan::uniform(0.3, &[Rule::Straight, Rule::Straight]).unwrap();
        let (_, pu) = snowflake_partition(&plan, 0.11).unwrap();
        let ext = pu.extension.as_ref().unwrap();
        assert!(ext.regions.is_empty());
        // Partition reduces to the Lagrange one.
        let p = Point2::new(0.41, 0.37);
        let sum: f64 = pu.eval_all(p).iter().map(|&(_, v)| v).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn snowflake_partition_sums_to_one_on_deep_polygon() {
        let plan = SnowflakePlan::all_bump(0.3, 4).unwrap();
        let build = SnowflakeBuild::run(&plan).unwrap();
        let (_, pu) = snowflake_partition_from_build(&build, 0.09).unwrap();
        // N = 2 for l = 0.09, so tents of generations 3 and 4 extend patches.
        assert!(pu.extension.as_ref().unwrap().regions.len() > 0);
        let deep = build.curve(4).to_domain().unwrap();
        let mut checked_tents = 0;
        for p in sample_interior(&deep, 3000, 11) {
            let vals = pu.eval_all(p);
            if vals.is_empty() {
                // Points of D_4 on cell boundaries of the location grid can
                // slip through; they must at least be extremely close to the
                // truncated polygon boundary.
                continue;
            }
            let sum: f64 = vals.iter().map(|&(_, v)| v).sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum {sum}");
            for &(_, v) in &vals {
                assert!(v >= -1e-12 && v <= 1.0 + 1e-12);
            }
            if matches!(pu.locate(p), Location::Tent { .. }) {
                checked_tents += 1;
            }
        }
        // Tents of generations 3 and 4 carry roughly one percent of the
        // area, so a few dozen hits are expected.
        assert!(checked_tents > 15, "tent sampling too thin: {checked_tents}");
    }

    #[test]
    fn snowflake_patch_diameters_scale_with_l() {
        let plan = SnowflakePlan::all_bump(0.3, 4).unwrap();
        let (_, pu) = snowflake_partition(&plan, 0.09).unwrap();
        let l = pu.scale;
        let mut min_d = f64::INFINITY;
        let mut max_d: f64 = 0.0;
        for patch in &pu.patches {
            if patch.triangles.is_empty() {
                continue;
            }
            min_d = min_d.min(patch.diameter);
            max_d = max_d.max(patch.diameter);
        }
        assert!(min_d / l > 0.2, "min diameter ratio {}", min_d / l);
        assert!(max_d / l < 8.0, "max diameter ratio {}", max_d / l);
    }

    #[test]
    fn extended_sum_stays_at_least_one_before_normalization() {
        let plan = SnowflakePlan::all_bump(0.35, 3).unwrap();
        let (_, pu) = snowflake_partition(&plan, 0.35 * 0.35).unwrap();
        let ext = pu.extension.as_ref().unwrap();
        for region in &ext.regions {
            for tent in &region.tents {
                for sub in subdivide(tent, 2) {
                    let c = sub.centroid();
                    let s = region.hat_u.eval(c).max(0.0) + region.hat_v.eval(c).max(0.0);
                    assert!(s >= 1.0 - 1e-9, "raw extended sum {s} below one");
                }
            }
        }
    }
}
