//! Scalar fields on a domain: analytic expressions with exact gradients,
//! piecewise-linear fields on a mesh, and partition-of-unity combinations.
//! All variants are cheap to clone and safe to evaluate from many threads.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, Point2};
use crate::meshing::partition::PartitionOfUnity;
use crate::meshing::{triangulate, Locator, Mesh};

/// Piecewise-linear field given by nodal coefficients on a mesh.
#[derive(Clone)]
pub struct DiscreteField {
    pub mesh: Arc<Mesh>,
    pub coeffs: Arc<Vec<f64>>,
    locator: Arc<Locator>,
}

impl DiscreteField {
    pub fn new(mesh: Arc<Mesh>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), mesh.n_vertices());
        let locator = Arc::new(mesh.locator());
        DiscreteField { mesh, coeffs: Arc::new(coeffs), locator }
    }

    fn eval(&self, p: Point2) -> f64 {
        match self.locator.locate(&self.mesh, p) {
            Some(t) => {
                let l = self.mesh.tri(t).barycentric(p);
                let c = self.mesh.triangles[t];
                l[0] * self.coeffs[c[0]] + l[1] * self.coeffs[c[1]] + l[2] * self.coeffs[c[2]]
            }
            None => 0.0,
        }
    }

    fn grad(&self, p: Point2) -> Point2 {
        match self.locator.locate(&self.mesh, p) {
            Some(t) => {
                let g = self.mesh.tri(t).hat_gradients();
                let c = self.mesh.triangles[t];
                g[0] * self.coeffs[c[0]] + g[1] * self.coeffs[c[1]] + g[2] * self.coeffs[c[2]]
            }
            None => Point2::new(0.0, 0.0),
        }
    }
}

impl fmt::Debug for DiscreteField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DiscreteField({} dofs)", self.coeffs.len())
    }
}

/// Combination `sum_j coeffs[j] psi_j` over a partition of unity.
#[derive(Clone)]
pub struct PouCombo {
    pub pu: Arc<PartitionOfUnity>,
    pub coeffs: Arc<Vec<f64>>,
}

impl fmt::Debug for PouCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PouCombo({} patches)", self.coeffs.len())
    }
}

#[derive(Debug, Clone)]
pub enum FieldFn {
    Const(f64),
    /// `a x + b y + c`
    Linear { a: f64, b: f64, c: f64 },
    /// Smooth compactly supported bump `amp * exp(1 - 1/(1 - (r/radius)^2))`.
    Bump { center: Point2, radius: f64, amplitude: f64 },
    /// Smooth transition in the angle around the slit tip at the origin with
    /// branch cut along the positive x-axis: one above the cut, zero below,
    /// `C^1` in between. In `W^{1,p}` exactly for `p < 2`.
    SlitAngle,
    Discrete(DiscreteField),
    PouCombo(PouCombo),
    /// Pointwise difference, used for lazily evaluated remainders `g = f - h`.
    Diff(Box<FieldFn>, Box<FieldFn>),
    /// Pointwise scaling `c * f`.
    Scaled(f64, Box<FieldFn>),
}

const HALF_PI: f64 = std::f64::consts::FRAC_PI_2;
const PI: f64 = std::f64::consts::PI;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn slit_theta(p: Point2) -> f64 {
    let mut theta = p.y.atan2(p.x);
    if theta < 0.0 {
        theta += TWO_PI;
    }
    theta
}

/// `C^1` monotone transition: one on `[0, pi/2]`, zero on `[3pi/2, 2pi]`.
fn transition(theta: f64) -> f64 {
    if theta <= HALF_PI {
        1.0
    } else if theta >= 3.0 * HALF_PI {
        0.0
    } else {
        let u = (theta - HALF_PI) / PI;
        1.0 - (3.0 * u * u - 2.0 * u * u * u)
    }
}

fn transition_deriv(theta: f64) -> f64 {
    if theta <= HALF_PI || theta >= 3.0 * HALF_PI {
        0.0
    } else {
        let u = (theta - HALF_PI) / PI;
        -(6.0 * u - 6.0 * u * u) / PI
    }
}

impl FieldFn {
    pub fn constant(c: f64) -> Self {
        FieldFn::Const(c)
    }

    pub fn linear(a: f64, b: f64, c: f64) -> Self {
        FieldFn::Linear { a, b, c }
    }

    pub fn bump(center: Point2, radius: f64, amplitude: f64) -> Self {
        FieldFn::Bump { center, radius, amplitude }
    }

    pub fn slit_angle() -> Self {
        FieldFn::SlitAngle
    }

    pub fn discrete(mesh: Arc<Mesh>, coeffs: Vec<f64>) -> Self {
        FieldFn::Discrete(DiscreteField::new(mesh, coeffs))
    }

    pub fn pou_combo(pu: Arc<PartitionOfUnity>, coeffs: Vec<f64>) -> Self {
        FieldFn::PouCombo(PouCombo { pu, coeffs: Arc::new(coeffs) })
    }

    pub fn eval(&self, p: Point2) -> f64 {
        match self {
            FieldFn::Const(c) => *c,
            FieldFn::Linear { a, b, c } => a * p.x + b * p.y + c,
            FieldFn::Bump { center, radius, amplitude } => {
                let r2 = (p - *center).norm_sq() / (radius * radius);
                if r2 >= 1.0 {
                    0.0
                } else {
                    amplitude * (1.0 - 1.0 / (1.0 - r2)).exp()
                }
            }
            FieldFn::SlitAngle => transition(slit_theta(p)),
            FieldFn::Discrete(d) => d.eval(p),
            FieldFn::PouCombo(c) => c.pu.combine(&c.coeffs, p),
            FieldFn::Diff(f, g) => f.eval(p) - g.eval(p),
            FieldFn::Scaled(c, f) => c * f.eval(p),
        }
    }

    /// Gradient, defined almost everywhere.
    pub fn grad(&self, p: Point2) -> Point2 {
        match self {
            FieldFn::Const(_) => Point2::new(0.0, 0.0),
            FieldFn::Linear { a, b, .. } => Point2::new(*a, *b),
            FieldFn::Bump { center, radius, amplitude } => {
                let d = p - *center;
                let r2 = d.norm_sq() / (radius * radius);
                if r2 >= 1.0 {
                    Point2::new(0.0, 0.0)
                } else {
                    let denom = 1.0 - r2;
                    let val = amplitude * (1.0 - 1.0 / denom).exp();
                    // d/dx of -1/(1-r2): -(1/(1-r2)^2) * d(r2)/dx
                    let factor = -val / (denom * denom) * (2.0 / (radius * radius));
                    d * factor
                }
            }
            FieldFn::SlitAngle => {
                let r2 = p.norm_sq();
                if r2 == 0.0 {
                    return Point2::new(0.0, 0.0);
                }
                let dt = transition_deriv(slit_theta(p));
                Point2::new(-p.y / r2, p.x / r2) * dt
            }
            FieldFn::Discrete(d) => d.grad(p),
            FieldFn::PouCombo(c) => c.pu.combine_grad(&c.coeffs, p),
            FieldFn::Diff(f, g) => f.grad(p) - g.grad(p),
            FieldFn::Scaled(c, f) => f.grad(p) * *c,
        }
    }

    /// Same field after translating the coordinate frame by `t` (the new
    /// field takes values `f(p - t)`); `None` when a variant has no cheap
    /// translate.
    pub fn translated(&self, t: Point2) -> Option<FieldFn> {
        match self {
            FieldFn::Const(c) => Some(FieldFn::Const(*c)),
            FieldFn::Linear { a, b, c } => Some(FieldFn::Linear {
                a: *a,
                b: *b,
                c: c - a * t.x - b * t.y,
            }),
            FieldFn::Bump { center, radius, amplitude } => Some(FieldFn::Bump {
                center: *center + t,
                radius: *radius,
                amplitude: *amplitude,
            }),
            FieldFn::Scaled(c, f) => f.translated(t).map(|g| FieldFn::Scaled(*c, Box::new(g))),
            _ => None,
        }
    }

    /// Parses expression strings: `const c`, `linear a b c`,
    /// `bump cx cy radius amp`, `slit_angle`, `hat scale`. The `hat` form
    /// needs the domain to build its mesh on.
    pub fn parse(expr: &str, domain: Option<&DomainSpec>) -> Result<FieldFn> {
        let toks: Vec<&str> = expr.split_whitespace().collect();
        let num = |i: usize| -> Result<f64> {
            toks.get(i)
                .ok_or_else(|| Error::Validation(format!("expression `{expr}`: missing argument")))?
                .parse()
                .map_err(|_| Error::Validation(format!("expression `{expr}`: bad number")))
        };
        match toks.first().copied() {
            Some("const") => Ok(FieldFn::Const(num(1)?)),
            Some("linear") => Ok(FieldFn::Linear { a: num(1)?, b: num(2)?, c: num(3)? }),
            Some("bump") => Ok(FieldFn::Bump {
                center: Point2::new(num(1)?, num(2)?),
                radius: num(3)?,
                amplitude: num(4)?,
            }),
            Some("slit_angle") => Ok(FieldFn::SlitAngle),
            Some("hat") => {
                let scale = num(1)?;
                let domain = domain.ok_or_else(|| {
                    Error::Validation("`hat` needs a domain to build its mesh on".into())
                })?;
                Ok(center_hat(domain, scale)?)
            }
            _ => Err(Error::Validation(format!("unknown field expression `{expr}`"))),
        }
    }

    pub fn id(&self) -> String {
        match self {
            FieldFn::Const(c) => format!("const {c}"),
            FieldFn::Linear { a, b, c } => format!("linear {a} {b} {c}"),
            FieldFn::Bump { center, radius, amplitude } => {
                format!("bump {} {} {radius} {amplitude}", center.x, center.y)
            }
            FieldFn::SlitAngle => "slit_angle".into(),
            FieldFn::Discrete(d) => format!("pl[{}]", d.coeffs.len()),
            FieldFn::PouCombo(c) => format!("pou[{}]", c.coeffs.len()),
            FieldFn::Diff(f, g) => format!("({}) - ({})", f.id(), g.id()),
            FieldFn::Scaled(c, f) => format!("{c} * ({})", f.id()),
        }
    }
}

/// Hat function at the mesh vertex closest to the domain's centroid.
pub fn center_hat(domain: &DomainSpec, scale: f64) -> Result<FieldFn> {
    let mesh = triangulate(domain, scale)?;
    let (lo, hi) = domain.bbox();
    let target = (lo + hi) * 0.5;
    let center = (0..mesh.n_vertices())
        .min_by(|&a, &b| {
            mesh.vertices[a]
                .dist(target)
                .total_cmp(&mesh.vertices[b].dist(target))
        })
        .ok_or_else(|| Error::Meshing("empty mesh".into()))?;
    let mut coeffs = vec![0.0; mesh.n_vertices()];
    coeffs[center] = 1.0;
    Ok(FieldFn::discrete(Arc::new(mesh), coeffs))
}

/// Nodal interpolation of `f` onto the piecewise-linear space of `mesh`.
/// Slit-side copies are evaluated slightly inside their own side so
/// discontinuous fields pick the right branch. A discrete field living on
/// the very same mesh interpolates to itself.
pub fn nodal_interpolate(f: &FieldFn, mesh: &Arc<Mesh>) -> Vec<f64> {
    if let FieldFn::Discrete(d) = f {
        if Arc::ptr_eq(&d.mesh, mesh)
            || (d.mesh.n_vertices() == mesh.n_vertices() && d.mesh.vertices == mesh.vertices)
        {
            return d.coeffs.as_ref().clone();
        }
    }
    let patches = mesh.vertex_patches();
    (0..mesh.n_vertices())
        .map(|v| {
            let p = mesh.vertices[v];
            if mesh.side_tags[v].is_some() {
                if let Some(&t) = patches[v].first() {
                    let c = mesh.tri(t).centroid();
                    return f.eval(p + (c - p) * 1e-6);
                }
            }
            f.eval(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slit_angle_matches_example_regions() {
        let f = FieldFn::slit_angle();
        // One on the upper right block, zero on the lower right block.
        for &(x, y) in &[(0.6, 0.2), (0.9, 0.9), (0.51, 0.05)] {
            assert_eq!(f.eval(Point2::new(x, y)), 1.0);
            assert_eq!(f.eval(Point2::new(x, -y)), 0.0);
        }
        // Smooth in between: check the gradient against finite differences.
        let p = Point2::new(-0.3, 0.2);
        let g = f.grad(p);
        let h = 1e-7;
        let fd_x = (f.eval(Point2::new(p.x + h, p.y)) - f.eval(Point2::new(p.x - h, p.y))) / (2.0 * h);
        let fd_y = (f.eval(Point2::new(p.x, p.y + h)) - f.eval(Point2::new(p.x, p.y - h))) / (2.0 * h);
        assert!((g.x - fd_x).abs() < 1e-6);
        assert!((g.y - fd_y).abs() < 1e-6);
    }

    #[test]
    fn slit_angle_gradient_scales_like_inverse_radius() {
        let f = FieldFn::slit_angle();
        let g1 = f.grad(Point2::new(-0.1, 0.0)).norm();
        let g2 = f.grad(Point2::new(-0.2, 0.0)).norm();
        assert!((g1 / g2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bump_is_smooth_and_compact() {
        let f = FieldFn::bump(Point2::new(0.5, 0.5), 0.25, 2.0);
        assert_eq!(f.eval(Point2::new(0.5, 0.5)), 2.0);
        assert_eq!(f.eval(Point2::new(0.9, 0.5)), 0.0);
        assert_eq!(f.grad(Point2::new(0.9, 0.5)), Point2::new(0.0, 0.0));
        let p = Point2::new(0.6, 0.45);
        let g = f.grad(p);
        let h = 1e-7;
        let fd_x = (f.eval(Point2::new(p.x + h, p.y)) - f.eval(Point2::new(p.x - h, p.y))) / (2.0 * h);
        assert!((g.x - fd_x).abs() < 1e-5);
    }

    #[test]
    fn parse_round_trips() {
        for expr in ["const 3", "linear 1 0 0", "slit_angle", "bump 0.5 0.5 0.25 1"] {
            let f = FieldFn::parse(expr, None).unwrap();
            let back = FieldFn::parse(&f.id(), None).unwrap();
            let p = Point2::new(0.3, 0.4);
            assert_eq!(f.eval(p), back.eval(p));
        }
        assert!(FieldFn::parse("nope 1", None).is_err());
        assert!(FieldFn::parse("hat 0.25", None).is_err());
    }

    #[test]
    fn discrete_interpolates_itself() {
        let mesh = Arc::new(triangulate(&DomainSpec::unit_square(), 0.25).unwrap());
        let coeffs: Vec<f64> = (0..mesh.n_vertices()).map(|i| i as f64).collect();
        let f = FieldFn::discrete(mesh.clone(), coeffs.clone());
        assert_eq!(nodal_interpolate(&f, &mesh), coeffs);
    }

    #[test]
    fn interpolation_respects_slit_sides() {
        let domain = DomainSpec::slit_square();
        let mesh = Arc::new(triangulate(&domain, 0.25).unwrap());
        let vals = nodal_interpolate(&FieldFn::slit_angle(), &mesh);
        for &(a, b) in &mesh.duplicate_pairs {
            let (upper, lower) = if mesh.side_tags[a].unwrap().positive { (a, b) } else { (b, a) };
            if mesh.vertices[upper].x > 0.4 {
                assert!((vals[upper] - 1.0).abs() < 1e-9, "upper {}", vals[upper]);
                assert!(vals[lower].abs() < 1e-9, "lower {}", vals[lower]);
            }
        }
    }
}
