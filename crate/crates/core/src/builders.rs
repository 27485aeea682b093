//! Builders for the library of reference surfaces.

use std::f64::consts::{PI, TAU};

use crate::affine::{c, AffineMap, C, I};
use crate::error::SurfaceError;
use crate::geometry::{cross, HalfPlane, Region};
use crate::irregular::AsymptoticFamily;
use crate::surface::{
    EdgeRef, EndKind, Pairing, Piece, PieceKind, SingLocation, SingularityRecord, Surface,
    TrapMember, TrapTest,
};

fn piece(id: usize, kind: PieceKind, region: Region) -> Piece {
    Piece::new(id, kind, region)
}

/// Index of the edge of `region` lying on the boundary of half-plane `hp`.
fn edge_index_for(region: &Region, hp: usize) -> usize {
    region
        .edges()
        .iter()
        .position(|e| e.halfplane == hp)
        .expect("half-plane contributes a boundary edge")
}

fn edge_ref(p: &Piece, hp: usize) -> EdgeRef {
    EdgeRef { piece: p.id, edge: edge_index_for(&p.region, hp) }
}

/// Flat torus `ℂ/(ℤu + ℤv)` with optional marked points (given in the
/// fundamental parallelogram).
pub fn flat_torus(u: C, v: C, marks: &[C]) -> Result<Surface, SurfaceError> {
    if cross(u, v).abs() <= 1e-12 * (u.norm() * v.norm()).max(1e-300) {
        return Err(SurfaceError::DegenerateLattice);
    }
    // Orient the fundamental parallelogram counterclockwise.
    let (u, v) = if cross(u, v) > 0.0 { (u, v) } else { (v, u) };
    let zero = c(0.0, 0.0);
    let region = Region::polygon(&[zero, u, u + v, v]);
    let p0 = piece(0, PieceKind::Flat, region.clone());
    // polygon(): half-plane i runs from vertex i to vertex i+1.
    let bottom = edge_ref(&p0, 0);
    let right = edge_ref(&p0, 1);
    let top = edge_ref(&p0, 2);
    let left = edge_ref(&p0, 3);
    let pairings = vec![
        Pairing {
            side1: bottom,
            side2: top,
            dev: AffineMap::translation(v),
            anchor: None,
            interval1: None,
            interval2: None,
        },
        Pairing {
            side1: left,
            side2: right,
            dev: AffineMap::translation(u),
            anchor: None,
            interval1: None,
            interval2: None,
        },
    ];
    let singularities = marks
        .iter()
        .enumerate()
        .map(|(i, &z)| SingularityRecord {
            id: i,
            location: SingLocation::Interior { piece: 0, z },
            order: 0,
            residue: zero,
            cone: Some((TAU, 1.0)),
            family: None,
            shifted: None,
        })
        .collect();
    Surface::new(vec![p0], pairings, singularities, 1)
}

/// The cushion: two unit squares with corresponding edges glued, i.e. the
/// quotient of the plane by `z ↦ -z` and the lattice `2ℤ + 2iℤ`, scaled by
/// `side`. Four conical points of angle π and residue 1/2.
pub fn cushion(side: f64) -> Result<Surface, SurfaceError> {
    let s = side;
    let s1 = piece(0, PieceKind::Flat, Region::rect(0.0, s, 0.0, s));
    let s2 = piece(1, PieceKind::Flat, Region::rect(s, 2.0 * s, 0.0, s));
    let b1 = edge_ref(&s1, 2);
    let t1 = edge_ref(&s1, 3);
    let r1 = edge_ref(&s1, 1);
    let l1 = edge_ref(&s1, 0);
    let b2 = edge_ref(&s2, 2);
    let t2 = edge_ref(&s2, 3);
    let r2 = edge_ref(&s2, 1);
    let l2 = edge_ref(&s2, 0);
    let two = c(2.0 * s, 0.0);
    let pairings = vec![
        // Bottom fold: (x,0) ~ (2s-x, 0).
        Pairing {
            side1: b1,
            side2: b2,
            dev: AffineMap::new(c(-1.0, 0.0), two),
            anchor: None,
            interval1: None,
            interval2: None,
        },
        // Top fold: (x,s) ~ (2s-x, s).
        Pairing {
            side1: t1,
            side2: t2,
            dev: AffineMap::new(c(-1.0, 0.0), two + c(0.0, 2.0 * s)),
            anchor: None,
            interval1: None,
            interval2: None,
        },
        // Side wrap: (0,y) ~ (2s,y).
        Pairing {
            side1: l1,
            side2: r2,
            dev: AffineMap::translation(two),
            anchor: None,
            interval1: None,
            interval2: None,
        },
        // Middle seam.
        Pairing {
            side1: r1,
            side2: l2,
            dev: AffineMap::identity(),
            anchor: None,
            interval1: None,
            interval2: None,
        },
    ];
    // The four conical points: identified corner classes.
    let half = c(0.5, 0.0);
    let mk = |id: usize, pc: usize, corner: usize| SingularityRecord {
        id,
        location: SingLocation::Corner { piece: pc, corner },
        order: 1,
        residue: half,
        cone: Some((PI, 1.0)),
        family: None,
        shifted: None,
    };
    // Corner indexing: corner i of a piece sits between boundary edges i and
    // i+1 of the compiled edge order; resolve actual indices post hoc.
    let mut surface = Surface::new(vec![s1, s2], pairings, Vec::new(), 0)?;
    let mut records = Vec::new();
    let classes = crate::surface::vertex_residues(&surface);
    for (i, (cycle, residue)) in classes.iter().enumerate() {
        let cnr = cycle.corners[0];
        let mut rec = mk(i, cnr.piece, cnr.edge_in);
        rec.residue = *residue;
        records.push(rec);
    }
    surface.singularities = records;
    Ok(surface)
}

/// Full translation cylinder `ℂ/ℤ·w` (an infinite vertical strip of width
/// `|w|` glued by the translation). Two cylindrical ends of residue 1.
pub fn translation_cylinder(width: f64) -> Result<Surface, SurfaceError> {
    let w = width;
    let strip = piece(0, PieceKind::Flat, Region::rect(0.0, w, f64::NEG_INFINITY, f64::INFINITY));
    let left = edge_ref(&strip, 0);
    let right = edge_ref(&strip, 1);
    let pairings = vec![Pairing {
        side1: left,
        side2: right,
        dev: AffineMap::translation(c(w, 0.0)),
        anchor: None,
        interval1: None,
        interval2: None,
    }];
    let singularities = vec![
        SingularityRecord {
            id: 0,
            location: SingLocation::Ends { ends: vec![(0, EndKind::FlatDirection { dir: I })] },
            order: 1,
            residue: c(1.0, 0.0),
            cone: None,
            family: None,
            shifted: None,
        },
        SingularityRecord {
            id: 1,
            location: SingLocation::Ends { ends: vec![(0, EndKind::FlatDirection { dir: -I })] },
            order: 1,
            residue: c(1.0, 0.0),
            cone: None,
            family: None,
            shifted: None,
        },
    ];
    Surface::new(vec![strip], pairings, singularities, 0)
}

/// Skew cone of factor `s > 0` and angle `alpha > 0`: quotient of the slit
/// universal cover of `ℂ*` by `z ↦ s e^{iα} z`. Built from flat sector
/// pieces of opening at most π/2 chained by identity gluings, with the outer
/// pairing carrying the dilation. One-point compactified: a conical tip and
/// an anti-conical point at infinity.
pub fn skew_cone(factor: f64, alpha: f64) -> Result<Surface, SurfaceError> {
    assert!(factor > 0.0 && alpha > 0.0);
    let k = (alpha / (PI / 2.0)).ceil().max(1.0) as usize;
    let step = alpha / k as f64;
    let zero = c(0.0, 0.0);
    let mut pieces = Vec::new();
    let mut pairings = Vec::new();
    for i in 0..k {
        pieces.push(piece(i, PieceKind::Flat, Region::sector(zero, 0.0, step)));
    }
    // Sector edges: halfplane 0 is the lower boundary (arg = 0), halfplane 1
    // the upper (arg = step). Piece i charts the lifted angles
    // [i·step, (i+1)·step] rotated back to [0, step]; crossing the upper
    // seam rotates clockwise by `step`, and the closing seam additionally
    // divides by the dilation factor, so the cycle holonomy is s·e^{iα}.
    let rot = c(step.cos(), -step.sin());
    for i in 0..k {
        let j = (i + 1) % k;
        let dev = if j == 0 {
            AffineMap::new(rot / factor, zero)
        } else {
            AffineMap::new(rot, zero)
        };
        let upper = edge_ref(&pieces[i], 1);
        let lower = edge_ref(&pieces[j], 0);
        pairings.push(Pairing {
            side1: upper,
            side2: lower,
            dev,
            anchor: None,
            interval1: None,
            interval2: None,
        });
    }
    // Residues: tip 1 - α/2π + i·log s/2π, infinity the complement to 2.
    let tip_res = c(1.0 - alpha / TAU, factor.ln() / TAU);
    let inf_res = c(2.0, 0.0) - tip_res;
    let mut surface = Surface::new(pieces, pairings, Vec::new(), 0)?;
    let tip_corner = crate::surface::corner_at(&surface, 0, zero).expect("sector tip corner");
    surface.singularities = vec![
        SingularityRecord {
            id: 0,
            location: SingLocation::Corner { piece: 0, corner: tip_corner },
            order: 1,
            residue: tip_res,
            cone: Some((alpha, factor)),
            family: None,
            shifted: None,
        },
        SingularityRecord {
            id: 1,
            location: SingLocation::Ends {
                ends: (0..k)
                    .map(|i| {
                        (i, EndKind::FlatDirection { dir: c((0.5 * step).cos(), (0.5 * step).sin()) })
                    })
                    .collect(),
            },
            order: 1,
            residue: inf_res,
            cone: None,
            family: None,
            shifted: None,
        },
    ];
    add_anticonical_trap(&mut surface, k, step, factor);
    Ok(surface)
}

/// Polygonal trap around the anti-conical end of a skew cone: a spiral
/// inscribed in the radii `r(θ) = r₀ s^{θ/α}`, one chord per sector piece,
/// meeting the seams with inner angles ≥ π.
fn add_anticonical_trap(surface: &mut Surface, k: usize, step: f64, factor: f64) {
    let r0 = 4.0;
    let mut members = Vec::new();
    for i in 0..k {
        let ra = r0 * factor.powf(i as f64 / k as f64);
        let rb = r0 * factor.powf((i + 1) as f64 / k as f64);
        let a = c(ra, 0.0);
        let b = c(rb * step.cos(), rb * step.sin());
        let d = (b - a) / (b - a).norm();
        // Side of the chord away from the tip.
        let mut n = I * d;
        if crate::geometry::dot(zero_c() - a, n) > 0.0 {
            n = -n;
        }
        members.push(TrapMember { piece: i, test: TrapTest::Region(vec![HalfPlane::new(a, n)]) });
    }
    surface.add_trap("anticonical-standard-neighborhood", members);
}

fn zero_c() -> C {
    c(0.0, 0.0)
}

/// The exponential-affine plane: one log piece covering ℂ, with an order-2
/// pole of residue 2 at the right end and the focus at the left end.
pub fn exp_affine_plane() -> Result<Surface, SurfaceError> {
    let p0 = piece(0, PieceKind::Log, Region::whole_plane());
    let fam = AsymptoticFamily::new(2, c(2.0, 0.0), vec![c(0.0, 0.0)], c(0.0, 0.0))
        .expect("valid centered family");
    // The pole sits at the right end of the log chart; the focus of its
    // single repelling petal at the left end.
    let singularities = vec![SingularityRecord {
        id: 0,
        location: SingLocation::Ends { ends: vec![(0, EndKind::LogRight), (0, EndKind::LogLeft)] },
        order: 2,
        residue: c(2.0, 0.0),
        cone: None,
        family: Some(fam),
        shifted: None,
    }];
    let mut s = Surface::new(vec![p0], Vec::new(), singularities, 0)?;
    s.atlas = true; // the log chart wraps over the punctured plane
    Ok(s)
}

/// Affine torus: quotient of the exponential-affine plane by the log-lattice
/// `ℤu + ℤv` (translations in the log chart).
pub fn affine_torus(u: C, v: C) -> Result<Surface, SurfaceError> {
    if cross(u, v).abs() <= 1e-12 * (u.norm() * v.norm()).max(1e-300) {
        return Err(SurfaceError::DegenerateLattice);
    }
    let (u, v) = if cross(u, v) > 0.0 { (u, v) } else { (v, u) };
    let zero = c(0.0, 0.0);
    let region = Region::polygon(&[zero, u, u + v, v]);
    let p0 = piece(0, PieceKind::Log, region.clone());
    let bottom = edge_ref(&p0, 0);
    let right = edge_ref(&p0, 1);
    let top = edge_ref(&p0, 2);
    let left = edge_ref(&p0, 3);
    let mid_b = 0.5 * u;
    let mid_l = 0.5 * v;
    let pairings = vec![
        Pairing {
            side1: bottom,
            side2: top,
            dev: AffineMap::new(v.exp(), zero),
            anchor: Some((mid_b, mid_b + v)),
            interval1: None,
            interval2: None,
        },
        Pairing {
            side1: left,
            side2: right,
            dev: AffineMap::new(u.exp(), zero),
            anchor: Some((mid_l, mid_l + u)),
            interval1: None,
            interval2: None,
        },
    ];
    Surface::new(vec![p0], pairings, Vec::new(), 1)
}

/// Affine cylinder: quotient of the exponential-affine plane by one
/// translation `z ↦ z + mu` of the log chart. Two Fuchsian ends of residues
/// `1 ± α` where `mu = 2πiα`.
pub fn affine_cylinder(mu: C) -> Result<Surface, SurfaceError> {
    if mu.norm() <= 1e-12 {
        return Err(SurfaceError::DegenerateLattice);
    }
    let zero = c(0.0, 0.0);
    // A fundamental strip transverse to mu, bounded by the boundary lines
    // through 0 and mu.
    let nn = mu / mu.norm();
    let strip = piece(
        0,
        PieceKind::Log,
        Region::new(vec![HalfPlane::new(zero, nn), HalfPlane::new(mu, -nn)]),
    );
    let e0 = edge_ref(&strip, 0);
    let e1 = edge_ref(&strip, 1);
    let alpha = mu / c(0.0, TAU);
    let pairings = vec![Pairing {
        side1: e0,
        side2: e1,
        dev: AffineMap::new(mu.exp(), zero),
        anchor: Some((zero, mu)),
        interval1: None,
        interval2: None,
    }];
    let dirn = I * nn;
    let singularities = vec![
        SingularityRecord {
            id: 0,
            location: SingLocation::Ends { ends: vec![(0, EndKind::FlatDirection { dir: dirn })] },
            order: 1,
            residue: c(1.0, 0.0) + alpha,
            cone: None,
            family: None,
            shifted: None,
        },
        SingularityRecord {
            id: 1,
            location: SingLocation::Ends { ends: vec![(0, EndKind::FlatDirection { dir: -dirn })] },
            order: 1,
            residue: c(1.0, 0.0) - alpha,
            cone: None,
            family: None,
            shifted: None,
        },
    ];
    Surface::new(vec![strip], pairings, singularities, 0)
}

/// Whole affine plane with its Fuchsian point of residue 2 at infinity.
pub fn whole_plane() -> Result<Surface, SurfaceError> {
    let p0 = piece(0, PieceKind::Flat, Region::whole_plane());
    let singularities = vec![SingularityRecord {
        id: 0,
        location: SingLocation::Ends { ends: vec![(0, EndKind::FlatDirection { dir: c(1.0, 0.0) })] },
        order: 1,
        residue: c(2.0, 0.0),
        cone: None,
        family: None,
        shifted: None,
    }];
    Surface::new(vec![p0], Vec::new(), singularities, 0)
}

/// Flat torus with marks, as a convenience.
pub fn square_torus(marks: &[C]) -> Result<Surface, SurfaceError> {
    flat_torus(c(1.0, 0.0), I, marks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{validate, vertex_residues};

    #[test]
    fn torus_validates() {
        let s = flat_torus(c(1.0, 0.0), I, &[]).unwrap();
        let report = validate(&s);
        assert!(report.ok, "issues: {:?}", report.issues);
        assert_eq!(report.genus, 1);
        assert_eq!(report.n, 0);
        let (re, im) = report.residue_sum.unwrap();
        assert!(re.abs() < 1e-9 && im.abs() < 1e-9);
    }

    #[test]
    fn hexagonal_torus_validates() {
        let s = flat_torus(c(1.0, 0.0), c(0.5, 0.75f64.sqrt()), &[]).unwrap();
        let report = validate(&s);
        assert!(report.ok, "issues: {:?}", report.issues);
    }

    #[test]
    fn torus_with_mark_counts() {
        let s = square_torus(&[c(0.25, 0.25)]).unwrap();
        assert_eq!(s.total_multiplicity(), 1);
        assert_eq!(s.complexity(), 3);
    }

    #[test]
    fn cushion_four_half_residues() {
        let s = cushion(1.0).unwrap();
        let report = validate(&s);
        assert!(report.ok, "issues: {:?}", report.issues);
        assert_eq!(report.genus, 0);
        let rs = vertex_residues(&s);
        assert_eq!(rs.len(), 4, "four conical classes, got {}", rs.len());
        for (_, r) in &rs {
            assert!((r - c(0.5, 0.0)).norm() < 1e-9, "residue {r}");
        }
        let (re, im) = report.residue_sum.unwrap();
        assert!((re - 2.0).abs() < 1e-9 && im.abs() < 1e-9);
        assert_eq!(report.n, 4);
    }

    #[test]
    fn cylinder_residues() {
        let s = translation_cylinder(1.0).unwrap();
        let report = validate(&s);
        assert!(report.ok, "issues: {:?}", report.issues);
        let sum = report.residue_sum.unwrap();
        assert!((sum.0 - 2.0).abs() < 1e-9);
        assert_eq!(s.total_multiplicity(), 2);
    }

    #[test]
    fn skew_cone_matches_figure() {
        // Angle 30°, factor 3.
        let s = skew_cone(3.0, PI / 6.0).unwrap();
        let report = validate(&s);
        assert!(report.ok, "issues: {:?}", report.issues);
        let rs = vertex_residues(&s);
        assert_eq!(rs.len(), 1);
        let tip = rs[0].1;
        assert!((tip.re - 0.916_666_666_666).abs() < 1e-9, "tip {tip}");
        assert!((tip.im - 3f64.ln() / TAU).abs() < 1e-9);
        assert!((tip.im - 0.174_849_576_3).abs() < 1e-8);
    }

    #[test]
    fn skew_cone_plane_case() {
        // s=1, α=2π: marked plane; tip residue 0.
        let s = skew_cone(1.0, TAU).unwrap();
        let rs = vertex_residues(&s);
        assert_eq!(rs.len(), 1);
        assert!(rs[0].1.norm() < 1e-9, "tip residue {}", rs[0].1);
        // s=1, α=4π: tip residue -1.
        let s = skew_cone(1.0, 2.0 * TAU).unwrap();
        let rs = vertex_residues(&s);
        assert!((rs[0].1 - c(-1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn affine_torus_validates() {
        let s = affine_torus(c(0.0, TAU * 0.3), c(2f64.ln(), 0.0)).unwrap();
        let report = validate(&s);
        assert!(report.ok, "issues: {:?}", report.issues);
        assert_eq!(report.n, 0);
        // Slanted lattice too.
        let s = affine_torus(c(0.3, 1.1), c(-0.7, 0.9)).unwrap();
        let report = validate(&s);
        assert!(report.ok, "issues: {:?}", report.issues);
    }

    #[test]
    fn exp_plane_counts() {
        let s = exp_affine_plane().unwrap();
        assert_eq!(s.total_multiplicity(), 2);
        assert_eq!(s.complexity(), 2);
        let report = validate(&s);
        assert!(report.ok, "issues: {:?}", report.issues);
    }

    #[test]
    fn affine_cylinder_residues() {
        let alpha = c(0.25, 0.1);
        let s = affine_cylinder(TAU * I * alpha).unwrap();
        let report = validate(&s);
        assert!(report.ok, "issues: {:?}", report.issues);
        let sum = report.residue_sum.unwrap();
        assert!((sum.0 - 2.0).abs() < 1e-9 && sum.1.abs() < 1e-9);
    }
}
