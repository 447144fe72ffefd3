//! Triangle primitives shared by meshing, quadrature and the seminorm engine.

use crate::geometry::Point2;

#[derive(Debug, Clone, Copy)]
pub struct Triangle {
    pub v: [Point2; 3],
}

impl Triangle {
    pub fn new(a: Point2, b: Point2, c: Point2) -> Self {
        Triangle { v: [a, b, c] }
    }

    pub fn signed_area(&self) -> f64 {
        0.5 * (self.v[1] - self.v[0]).cross(self.v[2] - self.v[0])
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn centroid(&self) -> Point2 {
        (self.v[0] + self.v[1] + self.v[2]) / 3.0
    }

    pub fn side_lengths(&self) -> [f64; 3] {
        [
            self.v[1].dist(self.v[2]),
            self.v[2].dist(self.v[0]),
            self.v[0].dist(self.v[1]),
        ]
    }

    pub fn diameter(&self) -> f64 {
        let s = self.side_lengths();
        s[0].max(s[1]).max(s[2])
    }

    pub fn circumradius(&self) -> f64 {
        let [a, b, c] = self.side_lengths();
        a * b * c / (4.0 * self.area())
    }

    pub fn inradius(&self) -> f64 {
        let [a, b, c] = self.side_lengths();
        2.0 * self.area() / (a + b + c)
    }

    pub fn incenter(&self) -> Point2 {
        let [a, b, c] = self.side_lengths();
        (self.v[0] * a + self.v[1] * b + self.v[2] * c) / (a + b + c)
    }

    /// Barycentric coordinates of `p` with respect to this triangle.
    pub fn barycentric(&self, p: Point2) -> [f64; 3] {
        let det = (self.v[1] - self.v[0]).cross(self.v[2] - self.v[0]);
        let l1 = (self.v[1] - p).cross(self.v[2] - p) / det;
        let l2 = (self.v[2] - p).cross(self.v[0] - p) / det;
        [l1, l2, 1.0 - l1 - l2]
    }

    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        let l = self.barycentric(p);
        l.iter().all(|&x| x >= -tol)
    }

    /// Gradients of the three linear nodal basis functions (constant on the
    /// triangle). `grad[i]` is the gradient of the function that is one at
    /// vertex `i` and zero at the others.
    pub fn hat_gradients(&self) -> [Point2; 3] {
        let det = (self.v[1] - self.v[0]).cross(self.v[2] - self.v[0]);
        let edge = |a: Point2, b: Point2| Point2::new(a.y - b.y, b.x - a.x) / det;
        [
            edge(self.v[1], self.v[2]),
            edge(self.v[2], self.v[0]),
            edge(self.v[0], self.v[1]),
        ]
    }

    pub fn bbox(&self) -> (Point2, Point2) {
        let xs = [self.v[0].x, self.v[1].x, self.v[2].x];
        let ys = [self.v[0].y, self.v[1].y, self.v[2].y];
        (
            Point2::new(xs.iter().cloned().fold(f64::INFINITY, f64::min), ys.iter().cloned().fold(f64::INFINITY, f64::min)),
            Point2::new(xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max), ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        )
    }

    /// Intersection of the ray `origin + t * dir` (unit `dir`) with the
    /// closed triangle, as a parameter interval. Empty intervals come back
    /// as `None`. Works for origins inside (interval starts at 0) and
    /// outside the triangle.
    pub fn ray_interval(&self, origin: Point2, dir: Point2) -> Option<(f64, f64)> {
        // The triangle is the intersection of three half planes
        // n_i . x >= o_i with inward normals.
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        let sign = self.signed_area().signum();
        for i in 0..3 {
            let a = self.v[i];
            let b = self.v[(i + 1) % 3];
            let e = b - a;
            // inward normal for CCW orientation, flipped otherwise
            let n = Point2::new(-e.y, e.x) * sign;
            let num = n.dot(origin - a);
            let den = n.dot(dir);
            if den.abs() < 1e-300 {
                if num < 0.0 {
                    return None;
                }
            } else {
                let t = -num / den;
                if den > 0.0 {
                    t0 = t0.max(t);
                } else {
                    t1 = t1.min(t);
                }
            }
        }
        if t1 > t0 {
            Some((t0, t1))
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_triangle_radii() {
        // Legs 1/2: the building block of the structured unit-square mesh.
        let t = Triangle::new(Point2::new(0.0, 0.0), Point2::new(0.5, 0.0), Point2::new(0.0, 0.5));
        assert!((t.circumradius() - 2f64.sqrt() / 4.0).abs() < 1e-15);
        let r_expected = (1.0 - 2f64.sqrt() / 2.0) / 2.0;
        assert!((t.inradius() - r_expected).abs() < 1e-15);
    }

    #[test]
    fn ray_interval_inside_outside() {
        let t = Triangle::new(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0));
        let (t0, t1) = t.ray_interval(Point2::new(0.25, 0.25), Point2::new(1.0, 0.0)).unwrap();
        assert!((t0 - 0.0).abs() < 1e-14 && (t1 - 0.5).abs() < 1e-14);
        let (t0, t1) = t.ray_interval(Point2::new(-1.0, 0.25), Point2::new(1.0, 0.0)).unwrap();
        assert!((t0 - 1.0).abs() < 1e-14 && (t1 - 1.75).abs() < 1e-14);
        assert!(t.ray_interval(Point2::new(-1.0, 0.25), Point2::new(-1.0, 0.0)).is_none());
    }

    #[test]
    fn hat_gradient_magnitude_is_inverse_altitude() {
        let t = Triangle::new(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0));
        let g = t.hat_gradients();
        // vertex 0 opposite the hypotenuse: altitude = 1/sqrt(2)
        assert!((g[0].norm() - 2f64.sqrt()).abs() < 1e-14);
        assert!((g[1].norm() - 1.0).abs() < 1e-14);
    }
}
