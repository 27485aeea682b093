//! Realize a canonical irregular-singularity model as a `Surface` of log
//! charts: per period index `n`, the three half-planes of `A_n` (upper,
//! left, lower) and the right half-plane `B_{n+1/2}`, glued atlas-style with
//! identity overlaps inside `A_n`, identity lower gluings, and the upper
//! `G_{s,b}` gluings. Sepals and attracting petals are declared as traps.

use std::f64::consts::PI;

use crate::affine::{c, AffineMap};
use crate::error::SurfaceError;
use crate::geometry::{HalfPlane, Region};
use crate::irregular::CanonicalModel;
use crate::surface::{
    EdgeRef, EndKind, Pairing, Piece, PieceKind, Pullback, SingLocation, SingularityRecord,
    Surface, Transfer, TrapMember, TrapTest,
};

/// Piece ids of the chart complex for one period index.
#[derive(Debug, Clone, Copy)]
pub struct ModelPieceIds {
    pub upper: usize,
    pub left: usize,
    pub lower: usize,
    pub b: usize,
}

pub fn model_piece_ids(m: usize, n: usize) -> ModelPieceIds {
    ModelPieceIds { upper: 3 * n, left: 3 * n + 1, lower: 3 * n + 2, b: 3 * m + n }
}

pub fn model_to_surface(model: &CanonicalModel) -> Result<Surface, SurfaceError> {
    let m = model.family.period();
    let r = model.radius;
    let mut pieces = Vec::new();
    for n in 0..m {
        let ids = model_piece_ids(m, n);
        debug_assert_eq!(ids.upper, pieces.len());
        pieces.push(Piece::new(ids.upper, PieceKind::Log, Region::half_plane(c(0.0, r), c(0.0, 1.0))));
        pieces.push(Piece::new(ids.left, PieceKind::Log, Region::half_plane(c(-r, 0.0), c(-1.0, 0.0))));
        pieces.push(Piece::new(ids.lower, PieceKind::Log, Region::half_plane(c(0.0, -r), c(0.0, -1.0))));
    }
    for n in 0..m {
        let ids = model_piece_ids(m, n);
        debug_assert_eq!(ids.b, pieces.len());
        pieces.push(Piece::new(ids.b, PieceKind::Log, Region::half_plane(c(r, 0.0), c(1.0, 0.0))));
    }

    let mut pairings = Vec::new();
    let ident = AffineMap::identity();
    for n in 0..m {
        let ids = model_piece_ids(m, n);
        // Upper ↔ left overlap: exits of the upper piece's edge (param x) at
        // x ≤ -r land in the left piece; exits of the left edge (param y) at
        // y ≥ r land back in the upper piece.
        pairings.push(Pairing {
            side1: EdgeRef { piece: ids.upper, edge: 0 },
            side2: EdgeRef { piece: ids.left, edge: 0 },
            dev: ident,
            anchor: Some((c(-r - 1.0, r), c(-r - 1.0, r))),
            interval1: Some((f64::NEG_INFINITY, -r)),
            interval2: Some((r, f64::INFINITY)),
        });
        // Lower ↔ left overlap. Lower edge has direction -1 (param -x);
        // left edge param y.
        pairings.push(Pairing {
            side1: EdgeRef { piece: ids.lower, edge: 0 },
            side2: EdgeRef { piece: ids.left, edge: 0 },
            dev: ident,
            anchor: Some((c(-r - 1.0, -r), c(-r - 1.0, -r))),
            interval1: Some((r, f64::INFINITY)),
            interval2: Some((f64::NEG_INFINITY, -r)),
        });
        // Lower_{n+1} ↔ B_{n+1/2}: the lower gluings are the identity in the
        // canonical model. Lower edge param -x at x ≥ r is (-∞, -r]; B edge
        // param -y at y ≤ -r is [r, ∞).
        let ids_next = model_piece_ids(m, (n + 1) % m);
        pairings.push(Pairing {
            side1: EdgeRef { piece: ids_next.lower, edge: 0 },
            side2: EdgeRef { piece: ids.b, edge: 0 },
            dev: ident,
            anchor: Some((c(r + 1.0, -r), c(r + 1.0, -r))),
            interval1: Some((f64::NEG_INFINITY, -r)),
            interval2: Some((r, f64::INFINITY)),
        });
        // Upper_n ↔ B_{n+1/2} through G_{n+1/4}.
        let glue = model.upper_glue(n as i64);
        let x_up = threshold(|x| (glue.apply(c(x, r)).map(|w| w.re - r)).unwrap_or(-1.0), -r, r);
        let y_up = {
            let ginv = glue.inverse();
            threshold(|y| (ginv.apply(c(r, y)).map(|w| w.im - r)).unwrap_or(-1.0), -r, r)
        };
        let anchor_x = x_up + 3.0 + r;
        let a1 = c(anchor_x, r);
        let a2 = glue
            .apply(a1)
            .map_err(|_| SurfaceError::UnsupportedGluing("gluing anchor on cut".into()))?;
        pairings.push(Pairing {
            side1: EdgeRef { piece: ids.upper, edge: 0 },
            side2: EdgeRef { piece: ids.b, edge: 0 },
            dev: glue.descended(),
            anchor: Some((a1, a2)),
            interval1: Some((x_up, f64::INFINITY)),
            // B edge param is -y: images with Im ≥ y_up.
            interval2: Some((f64::NEG_INFINITY, -y_up)),
        });
    }

    // One irregular record owning all ideal ends.
    let mut ends = Vec::new();
    for n in 0..m {
        let ids = model_piece_ids(m, n);
        for p in [ids.upper, ids.left, ids.lower] {
            ends.push((p, EndKind::LogLeft));
        }
        ends.push((ids.upper, EndKind::LogRight));
        ends.push((ids.lower, EndKind::LogRight));
        ends.push((ids.b, EndKind::LogRight));
    }
    let record = SingularityRecord {
        id: 0,
        location: SingLocation::Ends { ends },
        order: model.family.d as u32,
        residue: model.family.res,
        cone: None,
        family: Some(model.family.clone()),
        shifted: None,
    };

    let mut surface = Surface::new(pieces, pairings, vec![record], 0)?;
    surface.atlas = true;

    // Sepals: |Im w| > R + π inside A_n, carried into B through the gluings.
    for n in 0..m {
        let ids = model_piece_ids(m, n);
        let glue = model.upper_glue(n as i64);
        let to_upper = Transfer {
            dev: glue
                .descended()
                .inverse()
                .map_err(|_| SurfaceError::UnsupportedGluing("degenerate gluing".into()))?,
            pullback: glued_pullback(&glue.inverse()),
        };
        surface.add_trap(
            &format!("sepal-upper-{n}"),
            vec![
                TrapMember {
                    piece: ids.upper,
                    test: TrapTest::Region(vec![HalfPlane::new(c(0.0, r + PI), c(0.0, 1.0))]),
                },
                TrapMember {
                    piece: ids.b,
                    test: TrapTest::Mapped {
                        transfer: to_upper,
                        source_kind: PieceKind::Log,
                        region: vec![HalfPlane::new(c(0.0, r + PI), c(0.0, 1.0))],
                    },
                },
            ],
        );
        let prev_b = model_piece_ids(m, (n + m - 1) % m).b;
        surface.add_trap(
            &format!("sepal-lower-{n}"),
            vec![
                TrapMember {
                    piece: ids.lower,
                    test: TrapTest::Region(vec![HalfPlane::new(c(0.0, -r - PI), c(0.0, -1.0))]),
                },
                // The lower gluing is the identity: the continuation into
                // B_{n-1/2} keeps the same coordinates.
                TrapMember {
                    piece: prev_b,
                    test: TrapTest::Region(vec![HalfPlane::new(c(0.0, -r - PI), c(0.0, -1.0))]),
                },
            ],
        );
        // Attracting petal π(B_{n+1/2}).
        let to_b = Transfer { dev: glue.descended(), pullback: glued_pullback(&glue) };
        surface.add_trap(
            &format!("attracting-petal-{n}"),
            vec![
                TrapMember { piece: ids.b, test: TrapTest::Region(vec![]) },
                TrapMember {
                    piece: ids.upper,
                    test: TrapTest::Mapped {
                        transfer: to_b,
                        source_kind: PieceKind::Log,
                        region: vec![HalfPlane::new(c(r, 0.0), c(1.0, 0.0))],
                    },
                },
                TrapMember {
                    piece: model_piece_ids(m, (n + 1) % m).lower,
                    test: TrapTest::Region(vec![HalfPlane::new(c(r, 0.0), c(1.0, 0.0))]),
                },
            ],
        );
    }
    Ok(surface)
}

/// A `Pullback::LogGlued` equivalent to the exact model gluing: the stored
/// branch uses the principal log of the linear factor, compensated by `k`.
fn glued_pullback(glue: &crate::affine::LogGlue) -> Pullback {
    let a = glue.s.exp();
    let s_principal = a.ln();
    let k = ((glue.s - s_principal).im / std::f64::consts::TAU).round() as i64;
    Pullback::LogGlued { glue: crate::affine::LogGlue::new(s_principal, glue.b), k }
}

/// Smallest `t` past which `f` is positive, located by expanding brackets and
/// bisection.
fn threshold<F: Fn(f64) -> f64>(f: F, lo0: f64, hint: f64) -> f64 {
    let mut lo = lo0;
    let mut hi = hint.max(lo0 + 1.0);
    let mut guard = 0;
    while f(hi) <= 0.0 && guard < 200 {
        hi += (hi - lo0).abs() + 1.0;
        guard += 1;
    }
    if f(lo) > 0.0 {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesics::{trace, GeodesicState, TraceOptions};
    use crate::irregular::{build_canonical_model, AsymptoticFamily};
    use crate::surface::validate;

    fn sample_model() -> CanonicalModel {
        let fam = AsymptoticFamily::new(
            4,
            c(1.3, -0.2),
            vec![c(0.0, 0.0), c(1.0, 0.5), c(-0.4, 2.0)],
            c(0.7, -0.3),
        )
        .unwrap();
        build_canonical_model(&fam, None)
    }

    #[test]
    fn model_surface_validates() {
        let model = sample_model();
        let surface = model_to_surface(&model).unwrap();
        let report = validate(&surface);
        assert!(report.ok, "issues: {:?}", report.issues);
        assert!(report.has_boundary);
        assert_eq!(surface.total_multiplicity(), 4);
        // The record carries the pole residue.
        assert!((surface.singularities[0].residue - model.family.res).norm() < 1e-12);
    }

    #[test]
    fn centered_double_pole_model_is_exponential_plane_like(){
        let fam = AsymptoticFamily::new(2, c(2.0, 0.0), vec![c(0.0, 0.0)], c(0.0, 0.0)).unwrap();
        let model = build_canonical_model(&fam, None);
        let surface = model_to_surface(&model).unwrap();
        let report = validate(&surface);
        assert!(report.ok, "issues: {:?}", report.issues);
        // A leftward trace in the left piece converges to the focus.
        let ids = model_piece_ids(1, 0);
        let start = GeodesicState {
            piece: ids.left,
            position: c(-model.radius - 1.0, 0.3),
            velocity: c(-1.0, 0.0),
            time: 0.0,
        };
        let res = trace(&surface, start, TraceOptions::default()).unwrap();
        assert!(
            matches!(res.termination, crate::geodesics::Termination::HitApex { .. }),
            "got {:?}",
            res.termination
        );
    }

    #[test]
    fn sepal_traces_stay_in_enclosing_region() {
        let model = sample_model();
        let surface = model_to_surface(&model).unwrap();
        let r = model.radius;
        let m = model.family.period();
        // Several geodesics started inside upper sepals stay above Im = R in
        // their chart track.
        for n in 0..m {
            let ids = model_piece_ids(m, n);
            for k in 0..5 {
                let ang = -0.8 + 0.4 * k as f64;
                let start = GeodesicState {
                    piece: ids.upper,
                    position: c(-2.0 + 3.0 * k as f64, r + PI + 1.0 + k as f64),
                    velocity: c(ang.cos(), ang.sin()),
                    time: 0.0,
                };
                let res = trace(
                    &surface,
                    start,
                    TraceOptions { t_max: 1e4, ..Default::default() },
                )
                .unwrap();
                for (pc, pts) in &res.polyline {
                    for p in pts {
                        if *pc == ids.upper {
                            assert!(p.im > r - 1e-9, "left S' at {p} (n={n}, k={k})");
                        } else if *pc == ids.b {
                            // Still in the image of the upper half-plane.
                            let w = model.upper_glue(n as i64).inverse().apply(*p).unwrap();
                            assert!(w.im > r - 1e-9, "left S' through B at {p} -> {w}");
                        } else {
                            panic!("sepal trace entered unexpected piece {pc}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn attracting_petal_is_forward_invariant() {
        let model = sample_model();
        let surface = model_to_surface(&model).unwrap();
        let r = model.radius;
        let m = model.family.period();
        for n in 0..m.min(2) {
            let ids = model_piece_ids(m, n);
            for k in 0..6 {
                let ang = -1.2 + 0.45 * k as f64;
                let start = GeodesicState {
                    piece: ids.b,
                    position: c(r + 1.0 + k as f64, -3.0 + k as f64),
                    velocity: c(ang.cos(), ang.sin()),
                    time: 0.0,
                };
                let res = trace(
                    &surface,
                    start,
                    TraceOptions { t_max: 1e4, ..Default::default() },
                )
                .unwrap();
                // Never exits the petal: every chart point is in the trap.
                for (pc, pts) in &res.polyline {
                    for p in pts {
                        let trap = surface.trap_at(*pc, *p);
                        assert!(
                            trap.map(|t| surface.traps[t].label.starts_with("attracting")
                                || surface.traps[t].label.starts_with("sepal"))
                                .unwrap_or(false),
                            "petal trace escaped at piece {pc} point {p}"
                        );
                    }
                }
            }
        }
    }
}
