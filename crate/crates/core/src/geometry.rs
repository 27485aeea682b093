//! Convex planar regions as intersections of closed half-planes, with derived
//! boundary edges. Pieces of a surface are such regions, possibly unbounded
//! (polygons, strips, sectors, half-planes, or the whole plane).

use serde::{Deserialize, Serialize};

use crate::affine::{c, C};

pub fn dot(a: C, b: C) -> f64 {
    a.re * b.re + a.im * b.im
}

pub fn cross(a: C, b: C) -> f64 {
    a.re * b.im - a.im * b.re
}

/// A closed half-plane given by a point on its boundary line and the inward
/// unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub p: C,
    pub n: C,
}

impl HalfPlane {
    pub fn new(p: C, n: C) -> Self {
        let n = n / n.norm();
        HalfPlane { p, n }
    }

    /// Signed distance to the boundary line, positive inside.
    pub fn side(&self, z: C) -> f64 {
        dot(z - self.p, self.n)
    }

    /// Boundary direction with the interior on the left.
    pub fn dir(&self) -> C {
        -crate::affine::I * self.n
    }
}

/// One boundary edge of a convex region: a clipped portion of a half-plane
/// boundary line, parametrized as `base + t·dir` for `t ∈ [lo, hi]`.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    /// Index of the generating half-plane in the region.
    pub halfplane: usize,
    pub base: C,
    pub dir: C,
    pub lo: f64,
    pub hi: f64,
}

impl Edge {
    pub fn at(&self, t: f64) -> C {
        self.base + self.dir * t
    }

    pub fn start(&self) -> Option<C> {
        self.lo.is_finite().then(|| self.at(self.lo))
    }

    pub fn end(&self) -> Option<C> {
        self.hi.is_finite().then(|| self.at(self.hi))
    }

    /// Edge parameter of the orthogonal projection of `z`.
    pub fn param_of(&self, z: C) -> f64 {
        dot(z - self.base, self.dir)
    }

    pub fn is_segment(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Distance from `z` to the clipped edge.
    pub fn distance(&self, z: C) -> f64 {
        let t = self.param_of(z).clamp(self.lo, self.hi);
        if t.is_finite() {
            (z - self.at(t)).norm()
        } else {
            // Full line.
            cross(self.dir, z - self.base).abs()
        }
    }
}

/// Convex intersection of closed half-planes. An empty list denotes the
/// whole plane.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Region {
    pub halfplanes: Vec<HalfPlane>,
}

impl Region {
    pub fn whole_plane() -> Self {
        Region { halfplanes: Vec::new() }
    }

    pub fn new(halfplanes: Vec<HalfPlane>) -> Self {
        Region { halfplanes }
    }

    pub fn half_plane(p: C, n: C) -> Self {
        Region { halfplanes: vec![HalfPlane::new(p, n)] }
    }

    /// Axis-aligned box; infinite bounds drop the corresponding constraint.
    pub fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let mut hps = Vec::new();
        if x0.is_finite() {
            hps.push(HalfPlane::new(c(x0, 0.0), c(1.0, 0.0)));
        }
        if x1.is_finite() {
            hps.push(HalfPlane::new(c(x1, 0.0), c(-1.0, 0.0)));
        }
        if y0.is_finite() {
            hps.push(HalfPlane::new(c(0.0, y0), c(0.0, 1.0)));
        }
        if y1.is_finite() {
            hps.push(HalfPlane::new(c(0.0, y1), c(0.0, -1.0)));
        }
        Region { halfplanes: hps }
    }

    /// Convex polygon from counterclockwise vertices.
    pub fn polygon(vertices: &[C]) -> Self {
        let k = vertices.len();
        let mut hps = Vec::with_capacity(k);
        for i in 0..k {
            let a = vertices[i];
            let b = vertices[(i + 1) % k];
            let d = (b - a) / (b - a).norm();
            hps.push(HalfPlane::new(a, crate::affine::I * d));
        }
        Region { halfplanes: hps }
    }

    /// Sector `arg(z - apex) ∈ [theta0, theta1]`, for `theta1 - theta0 ≤ π`.
    pub fn sector(apex: C, theta0: f64, theta1: f64) -> Self {
        let n0 = c(0.0, 1.0) * c(theta0.cos(), theta0.sin());
        let n1 = c(0.0, -1.0) * c(theta1.cos(), theta1.sin());
        Region { halfplanes: vec![HalfPlane::new(apex, n0), HalfPlane::new(apex, n1)] }
    }

    pub fn signed_inset(&self, z: C) -> f64 {
        self.halfplanes.iter().map(|h| h.side(z)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, z: C, tol: f64) -> bool {
        self.signed_inset(z) >= -tol
    }

    /// Restrict by one more half-plane.
    pub fn with(&self, h: HalfPlane) -> Region {
        let mut hps = self.halfplanes.clone();
        hps.push(h);
        Region { halfplanes: hps }
    }

    /// Boundary edges in counterclockwise order, starting from the
    /// lexicographically smallest inward normal. Degenerate half-planes
    /// (empty trace on the boundary) contribute nothing.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for (i, h) in self.halfplanes.iter().enumerate() {
            let dir = h.dir();
            let base = h.p;
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            let mut dead = false;
            for (j, g) in self.halfplanes.iter().enumerate() {
                if i == j {
                    continue;
                }
                let s0 = dot(base - g.p, g.n);
                let sn = dot(dir, g.n);
                if sn.abs() < 1e-14 {
                    if s0 < -1e-12 {
                        dead = true;
                        break;
                    }
                    // Parallel duplicate: the line lies on g's boundary too;
                    // keep only the first copy.
                    if s0 <= 1e-12 && j < i {
                        dead = true;
                        break;
                    }
                    continue;
                }
                let t = -s0 / sn;
                if sn > 0.0 {
                    lo = lo.max(t);
                } else {
                    hi = hi.min(t);
                }
            }
            if dead || hi - lo < 1e-12 {
                continue;
            }
            out.push(Edge { halfplane: i, base, dir, lo, hi });
        }
        sort_ccw(&mut out);
        out
    }

    /// Finite corner points.
    pub fn vertices(&self) -> Vec<C> {
        let mut vs: Vec<C> = Vec::new();
        for e in self.edges() {
            for p in [e.start(), e.end()].into_iter().flatten() {
                if !vs.iter().any(|&q| (q - p).norm() < 1e-9) {
                    vs.push(p);
                }
            }
        }
        vs
    }

    pub fn is_bounded(&self) -> bool {
        let edges = self.edges();
        !edges.is_empty() && edges.iter().all(|e| e.is_segment())
    }

    /// A characteristic length for tolerance scaling.
    pub fn scale(&self) -> f64 {
        let vs = self.vertices();
        let mut s: f64 = 1.0;
        for v in &vs {
            s = s.max(v.norm());
        }
        for h in &self.halfplanes {
            s = s.max(h.p.norm());
        }
        s
    }

    /// Distance from a point to the region (0 inside).
    pub fn distance(&self, z: C) -> f64 {
        if self.contains(z, 0.0) {
            return 0.0;
        }
        let edges = self.edges();
        if edges.is_empty() {
            // A whole plane contains everything; a contradictory region is
            // empty and infinitely far.
            return if self.halfplanes.is_empty() { 0.0 } else { f64::INFINITY };
        }
        edges.iter().map(|e| e.distance(z)).fold(f64::INFINITY, f64::min)
    }
}

/// Order edges counterclockwise around the region, starting at the
/// lexicographically smallest inward normal.
fn sort_ccw(edges: &mut [Edge]) {
    if edges.len() < 2 {
        return;
    }
    // Counterclockwise boundary order = increasing angle of the boundary
    // direction, equivalently of the inward normal.
    edges.sort_by(|a, b| {
        let ta = (-a.dir.im).atan2(-a.dir.re); // placeholder ordering angle
        let tb = (-b.dir.im).atan2(-b.dir.re);
        ta.total_cmp(&tb)
    });
    // Re-anchor explicitly at the lexicographically smallest inward normal
    // (normals are (-i)·dir rotations of dir; compare the normals directly).
    let normal = |e: &Edge| crate::affine::I * e.dir;
    let mut start = 0;
    for (i, e) in edges.iter().enumerate() {
        let ni = normal(e);
        let ns = normal(&edges[start]);
        if (ni.re, ni.im) < (ns.re, ns.im) {
            start = i;
        }
    }
    edges.rotate_left(start);
    // Walk the boundary: each next edge is the one starting where the
    // current ends, when the region has a connected boundary cycle.
    let k = edges.len();
    for i in 0..k.saturating_sub(1) {
        let Some(endpt) = edges[i].end() else { continue };
        for j in (i + 1)..k {
            if let Some(st) = edges[j].start() {
                if (st - endpt).norm() < 1e-9 * (1.0 + endpt.norm()) {
                    edges.swap(i + 1, j);
                    break;
                }
            }
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_edges() {
        let r = Region::rect(0.0, 1.0, 0.0, 1.0);
        let edges = r.edges();
        assert_eq!(edges.len(), 4);
        for e in &edges {
            assert!(e.is_segment());
            assert!(((e.hi - e.lo) - 1.0).abs() < 1e-12);
        }
        assert!(r.contains(c(0.5, 0.5), 0.0));
        assert!(!r.contains(c(1.5, 0.5), 1e-9));
        assert_eq!(r.vertices().len(), 4);
        assert!(r.is_bounded());
    }

    #[test]
    fn edge_boundary_walk_is_cyclic() {
        let r = Region::polygon(&[c(0.0, 0.0), c(2.0, 0.0), c(2.0, 1.0), c(0.5, 1.5)]);
        let edges = r.edges();
        assert_eq!(edges.len(), 4);
        for i in 0..4 {
            let e = &edges[i];
            let f = &edges[(i + 1) % 4];
            let gap = (e.end().unwrap() - f.start().unwrap()).norm();
            assert!(gap < 1e-9, "edges {i} and next disconnect by {gap}");
        }
    }

    #[test]
    fn strip_and_half_plane() {
        let strip = Region::rect(f64::NEG_INFINITY, f64::INFINITY, 0.0, 1.0);
        let edges = strip.edges();
        assert_eq!(edges.len(), 2);
        assert!(edges.iter().all(|e| !e.lo.is_finite() && !e.hi.is_finite()));
        assert!(!strip.is_bounded());

        let hp = Region::half_plane(c(0.0, 0.0), c(0.0, 1.0));
        assert_eq!(hp.edges().len(), 1);
        assert!(hp.contains(c(3.0, 2.0), 0.0));
        assert!(!hp.contains(c(3.0, -2.0), 1e-9));
    }

    #[test]
    fn sector_region() {
        let s = Region::sector(c(0.0, 0.0), 0.0, std::f64::consts::FRAC_PI_2);
        assert!(s.contains(c(1.0, 0.5), 0.0));
        assert!(!s.contains(c(-1.0, 0.5), 1e-9));
        assert!(!s.contains(c(1.0, -0.5), 1e-9));
        let edges = s.edges();
        assert_eq!(edges.len(), 2);
    }

    #[test]
    fn distances() {
        let r = Region::rect(0.0, 1.0, 0.0, 1.0);
        assert_eq!(r.distance(c(0.5, 0.5)), 0.0);
        assert!((r.distance(c(2.0, 0.5)) - 1.0).abs() < 1e-12);
        assert!((r.distance(c(2.0, 2.0)) - 2f64.sqrt()).abs() < 1e-12);
    }
}
