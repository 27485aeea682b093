//! Geodesic tracing, loop development (holonomy and turning numbers) and
//! cylinder detection.
//!
//! Within flat pieces geodesics are straight; within log pieces they are the
//! log-lift of a straight developed segment, stepped in closed form (never by
//! numeric integration). Edge crossings apply the pairing's developed map to
//! position and velocity and pull back through the compiled branch data.

use serde::Serialize;
use std::f64::consts::TAU;

use crate::affine::{c, AffineMap, C};
use crate::config;
use crate::error::TraceError;
use crate::geometry::{cross, dot};
use crate::surface::{PieceId, PieceKind, SingLocation, Surface};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GeodesicState {
    pub piece: PieceId,
    pub position: C,
    pub velocity: C,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Termination {
    /// Reached a conical singularity or focus in finite time.
    HitApex { singularity: usize, time: f64 },
    EnteredTrap { trap: usize },
    TimedOut,
    CrossingsCapped,
    /// Came back to the start point with the same direction; the holonomy
    /// factor is the speed ratio.
    ClosedUp { factor: f64, period: f64 },
    /// Left the surface through an unpaired boundary edge.
    ExitedSurface { piece: PieceId, edge: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceResult {
    /// Piecewise polyline: per visited piece, the entry and exit points in
    /// piece coordinates (log pieces list sampled log-lift points).
    pub polyline: Vec<(PieceId, Vec<C>)>,
    pub crossings: usize,
    pub termination: Termination,
    /// Developed length traveled.
    pub length: f64,
    /// State at the end of the trace.
    pub final_state: GeodesicState,
}

#[derive(Debug, Clone, Copy)]
pub struct TraceOptions {
    pub t_max: f64,
    pub max_crossings: usize,
    /// Stop upon entering a declared trap region.
    pub stop_at_traps: bool,
    /// Detect closing up (same point and direction on the start piece).
    pub detect_closure: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            t_max: 1e6,
            max_crossings: config::get().max_crossings,
            stop_at_traps: false,
            detect_closure: true,
        }
    }
}

/// One in-piece step: either exits through an edge, hits an apex, or runs to
/// `t_max` inside the piece.
enum Step {
    Exit { t: f64, edge: usize, edge_t: f64 },
    Apex { t: f64, singularity: usize },
    Interior,
}

/// Apexes visible in a given piece: conical corners, interior marks, and the
/// log origin for pieces with a focus end.
fn piece_apexes(surface: &Surface, piece: PieceId) -> Vec<(ApexSite, usize)> {
    let mut out = Vec::new();
    for rec in &surface.singularities {
        match &rec.location {
            SingLocation::Interior { piece: p, z } if *p == piece => {
                out.push((ApexSite::Point(*z), rec.id));
            }
            SingLocation::Corner { piece: p, corner } => {
                // The record names one corner of the vertex class; apex
                // detection needs every corner of the class in this piece.
                let _ = (p, corner);
            }
            SingLocation::Ends { ends } => {
                for (p, kind) in ends {
                    if *p == piece && matches!(kind, crate::surface::EndKind::LogLeft) {
                        out.push((ApexSite::LogOrigin, rec.id));
                    }
                }
            }
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum ApexSite {
    /// A marked interior point (piece coordinates).
    Point(C),
    /// The developed origin of a log piece (its focus end).
    LogOrigin,
}

/// All singular corner positions of a piece, resolved through vertex cycles.
fn singular_corners(surface: &Surface, piece: PieceId) -> Vec<(C, usize)> {
    let mut out = Vec::new();
    let cycles = crate::surface::vertex_cycles(surface);
    for rec in &surface.singularities {
        let SingLocation::Corner { piece: rp, corner: rc } = rec.location else { continue };
        for cyc in &cycles {
            let in_cycle =
                cyc.corners.iter().any(|cnr| cnr.piece == rp && cnr.edge_in == rc);
            if !in_cycle {
                continue;
            }
            for (cnr, pos) in cyc.corners.iter().zip(&cyc.positions) {
                if cnr.piece == piece {
                    out.push((*pos, rec.id));
                }
            }
        }
    }
    out
}

/// Cache of per-piece apex sites shared by a trace.
struct ApexCache {
    sites: Vec<Vec<(ApexSite, usize)>>,
}

impl ApexCache {
    fn new(surface: &Surface) -> Self {
        let sites = (0..surface.pieces.len())
            .map(|p| {
                let mut v = piece_apexes(surface, p);
                for (pos, id) in singular_corners(surface, p) {
                    v.push((ApexSite::Point(pos), id));
                }
                v
            })
            .collect();
        ApexCache { sites }
    }
}

pub fn trace(
    surface: &Surface,
    start: GeodesicState,
    options: TraceOptions,
) -> Result<TraceResult, TraceError> {
    let cfg = config::get();
    if start.velocity.norm() <= cfg.eps_zero {
        return Err(TraceError::ZeroVelocity);
    }
    let scale = surface.scale();
    if !surface.pieces[start.piece].region.contains(start.position, 1e-9 * (1.0 + scale)) {
        return Err(TraceError::StartOutsidePiece);
    }
    let apexes = ApexCache::new(surface);

    let mut piece = start.piece;
    let mut z = start.position;
    let mut v = start.velocity;
    let mut t = 0.0f64;
    let mut crossings = 0usize;
    let mut length = 0.0f64;
    let mut polyline: Vec<(PieceId, Vec<C>)> = vec![(piece, vec![z])];

    let start_dev_dir = {
        let w = surface.pieces[piece].dev_velocity(z, v);
        w / w.norm()
    };

    loop {
        let step = step_in_piece(surface, &apexes, piece, z, v, options.t_max - t);
        match step {
            Step::Apex { t: dt, singularity } => {
                let end = position_at(surface, piece, z, v, dt);
                length += segment_length(surface, piece, z, v, dt);
                polyline.last_mut().unwrap().1.push(end);
                let final_state = state_at(surface, piece, z, v, dt, t + dt);
                return Ok(TraceResult {
                    polyline,
                    crossings,
                    termination: Termination::HitApex { singularity, time: t + dt },
                    length,
                    final_state,
                });
            }
            Step::Interior => {
                let dt = options.t_max - t;
                let end = position_at(surface, piece, z, v, dt);
                length += segment_length(surface, piece, z, v, dt);
                polyline.last_mut().unwrap().1.push(end);
                let final_state = state_at(surface, piece, z, v, dt, options.t_max);
                return Ok(TraceResult {
                    polyline,
                    crossings,
                    termination: Termination::TimedOut,
                    length,
                    final_state,
                });
            }
            Step::Exit { t: dt, edge, edge_t } => {
                let exit_pos = position_at(surface, piece, z, v, dt);
                length += segment_length(surface, piece, z, v, dt);
                polyline.last_mut().unwrap().1.push(exit_pos);
                t += dt;
                let Some(span) = surface.exit_at(piece, edge, edge_t) else {
                    let final_state = state_at(surface, piece, z, v, dt, t);
                    return Ok(TraceResult {
                        polyline,
                        crossings,
                        termination: Termination::ExitedSurface { piece, edge },
                        length,
                        final_state,
                    });
                };
                let kind = surface.pieces[piece].kind;
                // The developed velocity is constant along the geodesic
                // within a piece; evaluate it at the segment start.
                let w_vel = surface.pieces[piece].dev_velocity(z, v);
                let Ok(z2) = span.transfer.apply(kind, exit_pos) else {
                    let final_state = state_at(surface, piece, z, v, dt, t);
                    return Ok(TraceResult {
                        polyline,
                        crossings,
                        termination: Termination::ExitedSurface { piece, edge },
                        length,
                        final_state,
                    });
                };
                let w2 = span.transfer.apply_velocity(w_vel);
                let v2 = match surface.pieces[span.target].kind {
                    PieceKind::Flat => w2,
                    PieceKind::Log => w2 / z2.exp(),
                };
                piece = span.target;
                z = z2;
                v = v2;
                crossings += 1;
                polyline.push((piece, vec![z]));

                if options.stop_at_traps {
                    if let Some(trap) = surface.trap_at(piece, z) {
                        let final_state =
                            GeodesicState { piece, position: z, velocity: v, time: t };
                        return Ok(TraceResult {
                            polyline,
                            crossings,
                            termination: Termination::EnteredTrap { trap },
                            length,
                            final_state,
                        });
                    }
                }
                if options.detect_closure && piece == start.piece {
                    // The start point closes the geodesic if it lies ahead on
                    // the entering developed line with the same direction; by
                    // convexity the segment to it stays in the piece.
                    let pc = &surface.pieces[piece];
                    let x_cur = pc.dev(z);
                    let w_cur = pc.dev_velocity(z, v);
                    let x_start = pc.dev(start.position);
                    let t_s = dot(x_start - x_cur, w_cur) / dot(w_cur, w_cur);
                    let on_line = (x_cur + w_cur * t_s - x_start).norm()
                        <= 1e-8 * (1.0 + x_start.norm());
                    let dir_close = (w_cur / w_cur.norm() - start_dev_dir).norm() <= 1e-8;
                    if on_line && dir_close && t_s >= -1e-12 {
                        let w_start =
                            pc.dev_velocity(start.position, start.velocity);
                        let factor = w_cur.norm() / w_start.norm();
                        let period = length + t_s * w_cur.norm();
                        if period > 1e-9 * (1.0 + scale) {
                            polyline.last_mut().unwrap().1.push(start.position);
                            let final_state =
                                GeodesicState { piece, position: start.position, velocity: v, time: t };
                            return Ok(TraceResult {
                                polyline,
                                crossings,
                                termination: Termination::ClosedUp { factor, period },
                                length: period,
                                final_state,
                            });
                        }
                    }
                }
                if crossings >= options.max_crossings {
                    let final_state = GeodesicState { piece, position: z, velocity: v, time: t };
                    return Ok(TraceResult {
                        polyline,
                        crossings,
                        termination: Termination::CrossingsCapped,
                        length,
                        final_state,
                    });
                }
            }
        }
    }
}

fn state_at(surface: &Surface, piece: PieceId, z: C, v: C, dt: f64, time: f64) -> GeodesicState {
    let position = position_at(surface, piece, z, v, dt);
    let velocity = match surface.pieces[piece].kind {
        PieceKind::Flat => v,
        PieceKind::Log => {
            // Constant developed velocity pulled back at the end point.
            let w = z.exp() * v;
            w / position.exp()
        }
    };
    GeodesicState { piece, position, velocity, time }
}

/// Position after time `dt` from `(z, v)` within one piece.
fn position_at(surface: &Surface, piece: PieceId, z: C, v: C, dt: f64) -> C {
    match surface.pieces[piece].kind {
        PieceKind::Flat => z + v * dt,
        PieceKind::Log => {
            // Developed motion x(t) = e^z (1 + t v); lift continuously.
            let x0 = z.exp();
            let w = x0 * v;
            let x1 = x0 + w * dt;
            log_lift(z, x0, x1)
        }
    }
}

/// Continuous log of `x1` continuing the branch of `z0 = log x0`, assuming
/// the straight segment from `x0` to `x1` avoids the origin.
fn log_lift(z0: C, x0: C, x1: C) -> C {
    let ratio = x1 / x0;
    z0 + ratio.ln()
}

fn segment_length(surface: &Surface, piece: PieceId, z: C, v: C, dt: f64) -> f64 {
    match surface.pieces[piece].kind {
        PieceKind::Flat => v.norm() * dt,
        PieceKind::Log => (z.exp() * v).norm() * dt,
    }
}

fn step_in_piece(
    surface: &Surface,
    apexes: &ApexCache,
    piece: PieceId,
    z: C,
    v: C,
    t_remaining: f64,
) -> Step {
    let p = &surface.pieces[piece];
    let cfg = config::get();
    let scale = 1.0 + p.region.scale();
    let mut t_exit = f64::INFINITY;
    let mut exit_hp: Option<usize> = None;

    match p.kind {
        PieceKind::Flat => {
            for (hi, h) in p.region.halfplanes.iter().enumerate() {
                let sn = dot(v, h.n);
                if sn >= -1e-15 * v.norm() {
                    continue;
                }
                // Zero-time exits are real: a geodesic landing on a corner
                // rotates through the adjacent wedges in a finite chain of
                // instantaneous crossings.
                let t0 = (-h.side(z) / sn).max(0.0);
                let graze = 1e-12 * scale / v.norm();
                if h.side(z) > -1e-9 * scale && t0 < t_exit - graze {
                    t_exit = t0;
                    exit_hp = Some(hi);
                }
            }
        }
        PieceKind::Log => {
            let x0 = z.exp();
            let w = x0 * v;
            for (hi, h) in p.region.halfplanes.iter().enumerate() {
                if let Some(t0) = log_exit_time(z, x0, w, *h, scale) {
                    if t0 < t_exit {
                        t_exit = t0;
                        exit_hp = Some(hi);
                    }
                }
            }
        }
    }

    // Apex hits strictly before the exit.
    let hit_horizon = t_exit.min(t_remaining);
    let mut best_apex: Option<(f64, usize)> = None;
    for (site, id) in &apexes.sites[piece] {
        let cand = match (p.kind, site) {
            (PieceKind::Flat, ApexSite::Point(a)) => {
                line_point_hit(z, v, *a, cfg.eps_hit * scale)
            }
            (PieceKind::Log, ApexSite::LogOrigin) => {
                let x0 = z.exp();
                let w = x0 * v;
                line_point_hit(x0, w, c(0.0, 0.0), cfg.eps_hit * (1.0 + x0.norm()))
            }
            (PieceKind::Log, ApexSite::Point(a)) => {
                // Marked point in log coordinates: compare developed data.
                let x0 = z.exp();
                let w = x0 * v;
                line_point_hit(x0, w, a.exp(), cfg.eps_hit * (1.0 + x0.norm()))
            }
            (PieceKind::Flat, ApexSite::LogOrigin) => None,
        };
        if let Some(th) = cand {
            if th <= hit_horizon + 1e-12 && best_apex.map(|(tb, _)| th < tb).unwrap_or(true) {
                best_apex = Some((th, *id));
            }
        }
    }
    if let Some((th, id)) = best_apex {
        return Step::Apex { t: th, singularity: id };
    }

    if t_exit <= t_remaining {
        let exit_pos = position_at(surface, piece, z, v, t_exit);
        let hp = exit_hp.expect("exit has a half-plane");
        // Locate the edge generated by this half-plane.
        let edges = surface.edges_of(piece);
        if let Some((ei, e)) = edges.iter().enumerate().find(|(_, e)| e.halfplane == hp) {
            return Step::Exit { t: t_exit, edge: ei, edge_t: e.param_of(exit_pos) };
        }
        // The half-plane is inactive (no boundary edge): numerical corner
        // graze; treat as interior and let the next step resolve it.
    }
    Step::Interior
}

/// Earliest positive time at which the straight developed line passes within
/// `eps` of `target`, if it does.
fn line_point_hit(x0: C, w: C, target: C, eps: f64) -> Option<f64> {
    let rel = target - x0;
    let wn2 = dot(w, w);
    if wn2 <= 0.0 {
        return None;
    }
    let t_close = dot(rel, w) / wn2;
    if t_close <= 1e-12 {
        return None;
    }
    let dist = (rel - w * t_close).norm();
    (dist <= eps).then_some(t_close)
}

/// Exit time of the developed line against a half-plane constraint in log
/// coordinates. Closed forms for horizontal and vertical normals, sampled
/// bisection for slanted ones.
fn log_exit_time(z0: C, x0: C, w: C, h: crate::geometry::HalfPlane, scale: f64) -> Option<f64> {
    let f = |t: f64| -> f64 {
        let x = x0 + w * t;
        let z = log_lift(z0, x0, x);
        h.side(z)
    };
    let tiny = 1e-12 * scale / (w.norm() / x0.norm().max(1e-300));
    if h.n.im.abs() < 1e-12 {
        // Vertical boundary Re w = const: |x(t)| = e^c.
        let cexp = (h.p.re) * h.n.re.signum();
        let _ = cexp;
        let rr = (h.p.re).exp();
        // |x0 + t w|^2 = rr^2.
        let a = dot(w, w);
        let b = 2.0 * dot(x0, w);
        let cc = dot(x0, x0) - rr * rr;
        let disc = b * b - 4.0 * a * cc;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let mut best: Option<f64> = None;
        for t0 in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
            if t0 > tiny && f(t0 + 10.0 * tiny) < 0.0 && best.map(|b0| t0 < b0).unwrap_or(true) {
                best = Some(t0);
            }
        }
        best
    } else if h.n.re.abs() < 1e-12 {
        // Horizontal boundary Im w = const: x(t) on the ray of argument c.
        let cim = h.p.im;
        let u = c(cim.cos(), cim.sin());
        let denom = cross(u, w);
        if denom.abs() < 1e-300 {
            return None;
        }
        let t0 = -cross(u, x0) / denom;
        if t0 <= tiny {
            return None;
        }
        // Branch check: the lifted argument at t0 must be cim, not cim + 2πk.
        let x = x0 + w * t0;
        let lifted = log_lift(z0, x0, x);
        if (lifted.im - cim).abs() > 1e-6 {
            return None;
        }
        if f(t0 + 10.0 * tiny) < 0.0 {
            Some(t0)
        } else {
            None
        }
    } else {
        // Slanted: sample then bisect the first sign change of the inset.
        if f(0.0) < 0.0 {
            return None;
        }
        let base_t = x0.norm() / w.norm();
        let mut prev_t = 0.0f64;
        for k in 1..=400 {
            let t = base_t * (k as f64 / 50.0).exp2() / 1024.0;
            let ft = f(t);
            if ft < 0.0 {
                // Bisect in [prev_t, t].
                let (mut lo, mut hi) = (prev_t, t);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) < 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let t0 = 0.5 * (lo + hi);
                if t0 > tiny {
                    return Some(t0);
                }
            }
            prev_t = t;
        }
        None
    }
}

// ---------------------------------------------------------------------------
// Loop development: holonomy and turning numbers
// ---------------------------------------------------------------------------

/// One node of a piecewise-straight loop: either move to a point within the
/// current piece (a straight leg in piece coordinates), or hop charts through
/// an edge pairing whose transfer carries the previous point to this one.
#[derive(Debug, Clone, Copy)]
pub enum LoopNode {
    Move(PieceId, C),
    Hop(PieceId, C),
}

/// A closed piecewise path: flat legs are geodesics, log legs are log-chart
/// segments (their turning contribution is `Im Δw / 2π` since `Γ ≡ 1`).
pub type LoopPath = Vec<LoopNode>;

pub fn mv(piece: PieceId, z: C) -> LoopNode {
    LoopNode::Move(piece, z)
}

pub fn hop(piece: PieceId, z: C) -> LoopNode {
    LoopNode::Hop(piece, z)
}

impl LoopNode {
    fn place(&self) -> (PieceId, C) {
        match *self {
            LoopNode::Move(p, z) | LoopNode::Hop(p, z) => (p, z),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DevelopedLoop {
    /// Affine holonomy of the loop (developed coordinates of the start).
    pub holonomy: AffineMap,
    /// Turning number.
    pub turning: f64,
}

/// Develop a closed loop and compute its affine holonomy and turning number.
pub fn develop_loop(surface: &Surface, path: &LoopPath) -> Result<DevelopedLoop, TraceError> {
    if path.len() < 2 {
        return Err(TraceError::LoopNotClosed);
    }
    let (p_first, z_first) = path.first().unwrap().place();
    let (p_last, z_last) = path.last().unwrap().place();
    if p_first != p_last || (z_first - z_last).norm() > 1e-9 {
        return Err(TraceError::LoopNotClosed);
    }
    let scale = surface.scale();
    let mut m = AffineMap::identity();
    // Developed direction of each movement leg at both endpoints, and the
    // turning contribution of each leg.
    let mut dirs: Vec<(C, C)> = Vec::new();
    let mut leg_turn = 0.0f64;

    for i in 0..path.len() - 1 {
        let (p1, z1) = path[i].place();
        match path[i + 1] {
            LoopNode::Move(p2, z2) => {
                if p2 != p1 {
                    return Err(TraceError::LegLeavesPiece { leg: i });
                }
                let dz = z2 - z1;
                if dz.norm() <= 1e-14 * (1.0 + scale) {
                    continue;
                }
                match surface.pieces[p1].kind {
                    PieceKind::Flat => {
                        let d = m.a * dz;
                        dirs.push((d, d));
                    }
                    PieceKind::Log => {
                        // Straight in the log chart: developed directions are
                        // e^{z}·dz at the endpoints; Γ ≡ 1 contributes Im(Δw).
                        let d1 = m.a * z1.exp() * dz;
                        let d2 = m.a * z2.exp() * dz;
                        dirs.push((d1, d2));
                        leg_turn += dz.im;
                    }
                }
            }
            LoopNode::Hop(p2, z2) => {
                // Chart switch: find the pairing carrying z1 to z2.
                let mut found = false;
                'edges: for (ei, e) in surface.edges_of(p1).iter().enumerate() {
                    let t = e.param_of(z1);
                    if (z1 - e.at(t.clamp(e.lo, e.hi))).norm() > 1e-6 * (1.0 + scale) {
                        continue;
                    }
                    for span in surface.exits_of(p1, ei) {
                        if span.target != p2 {
                            continue;
                        }
                        let Ok(img) = span.transfer.apply(surface.pieces[p1].kind, z1) else {
                            continue;
                        };
                        if (img - z2).norm() <= 1e-6 * (1.0 + scale) {
                            m = m.compose(
                                &span.transfer.dev.inverse().expect("invertible pairing"),
                            );
                            found = true;
                            break 'edges;
                        }
                    }
                }
                if !found {
                    return Err(TraceError::LegLeavesPiece { leg: i });
                }
            }
        }
    }

    if dirs.is_empty() {
        return Ok(DevelopedLoop { holonomy: m, turning: 0.0 });
    }

    // Corner angles, including the closing corner against the holonomy image
    // of the first leg.
    let cfg = config::get();
    let mut corners = 0.0f64;
    for i in 0..dirs.len() {
        let incoming = dirs[i].1;
        let outgoing = if i + 1 < dirs.len() { dirs[i + 1].0 } else { m.a * dirs[0].0 };
        let ang = (outgoing / incoming).arg();
        if std::f64::consts::PI - ang.abs() < cfg.eps_arg {
            return Err(TraceError::CuspDetected { corner: i });
        }
        corners += ang;
    }
    let turning = (corners + leg_turn) / TAU;
    Ok(DevelopedLoop { holonomy: m, turning })
}

/// Affine and linear holonomy of a closed loop.
pub fn holonomy(surface: &Surface, path: &LoopPath) -> Result<(C, AffineMap), TraceError> {
    let dl = develop_loop(surface, path)?;
    Ok((dl.holonomy.a, dl.holonomy))
}

/// Turning number of a closed piecewise-straight cusp-free loop.
pub fn turning_number(surface: &Surface, path: &LoopPath) -> Result<f64, TraceError> {
    Ok(develop_loop(surface, path)?.turning)
}

// ---------------------------------------------------------------------------
// Cylinders
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub enum CylinderKind {
    Translation,
    Dilation,
}

#[derive(Debug, Clone, Serialize)]
pub struct Cylinder {
    pub kind: CylinderKind,
    pub factor: f64,
    /// Transverse extent actually certified on each side of the core
    /// geodesic (developed height for translation cylinders, transverse
    /// angle for dilation cylinders).
    pub extent: (f64, f64),
    /// Apexes blocking each side, when a side is bounded.
    pub boundary: (Vec<usize>, Vec<usize>),
    /// True on a side that closed back onto the starting family (the whole
    /// surface is foliated).
    pub wraps: (bool, bool),
}

/// Sweep the family of closed geodesics parallel to a closed trace outward in
/// both transverse directions until a singularity blocks or the family wraps
/// around. `start` must have produced a `ClosedUp` trace.
pub fn extend_cylinder(
    surface: &Surface,
    start: GeodesicState,
    closed: &TraceResult,
) -> Result<Cylinder, TraceError> {
    let Termination::ClosedUp { factor, .. } = closed.termination else {
        return Err(TraceError::LoopNotClosed);
    };
    let kind = if (factor - 1.0).abs() < 1e-8 {
        CylinderKind::Translation
    } else {
        CylinderKind::Dilation
    };

    let p = &surface.pieces[start.piece];
    let wdir = p.dev_velocity(start.position, start.velocity);
    let normal = crate::affine::I * wdir / wdir.norm();

    let probe = |offset: f64| -> Option<TraceResult> {
        // Offset transversally in developed coordinates.
        let z = match p.kind {
            PieceKind::Flat => start.position + normal * offset,
            PieceKind::Log => {
                let x = start.position.exp() + normal * offset;
                log_lift(start.position, start.position.exp(), x)
            }
        };
        if !p.region.contains(z, 0.0) {
            return None;
        }
        let v = match p.kind {
            PieceKind::Flat => start.velocity,
            PieceKind::Log => {
                // Same developed direction at the offset point.
                wdir / z.exp()
            }
        };
        trace(
            surface,
            GeodesicState { piece: start.piece, position: z, velocity: v, time: 0.0 },
            TraceOptions { t_max: 1e9, ..Default::default() },
        )
        .ok()
    };

    let mut extent = [0.0f64; 2];
    let mut boundary: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let mut wraps = [false; 2];
    let scale = surface.scale();

    for (side, sign) in [(0usize, 1.0f64), (1usize, -1.0f64)] {
        // Expand geometrically to bracket the first blocking offset.
        let mut good = 0.0f64;
        let mut bad: Option<f64> = None;
        let mut h = 1e-3 * scale;
        for _ in 0..60 {
            let off = good + h;
            match probe(sign * off) {
                Some(res) => match res.termination {
                    Termination::ClosedUp { .. } => {
                        good = off;
                        h *= 2.0;
                        if good > 64.0 * scale {
                            wraps[side] = true;
                            break;
                        }
                    }
                    _ => {
                        bad = Some(off);
                        break;
                    }
                },
                None => {
                    bad = Some(off);
                    break;
                }
            }
        }
        if wraps[side] {
            extent[side] = good;
            continue;
        }
        let Some(mut hi) = bad else {
            extent[side] = good;
            continue;
        };
        let mut lo = good;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            match probe(sign * mid) {
                Some(res) if matches!(res.termination, Termination::ClosedUp { .. }) => lo = mid,
                _ => hi = mid,
            }
        }
        extent[side] = lo;
        // Record the blocking apexes just past the boundary.
        if let Some(res) = probe(sign * hi) {
            if let Termination::HitApex { singularity, .. } = res.termination {
                boundary[side].push(singularity);
            }
        }
    }

    // For dilation cylinders report angles instead of developed heights: the
    // transverse offset h at developed distance d from the fixed point spans
    // the angle atan(h/d).
    let mut ext = (extent[0], extent[1]);
    if matches!(kind, CylinderKind::Dilation) {
        let dev0 = surface.dev(start.piece, start.position);
        // The closed geodesic of a dilation cylinder is a quotient of a ray
        // from the fixed developed point of the holonomy; its developed
        // distance to the start is |dev0 - fixed|, with fixed recovered from
        // the trace closure factor along the normal direction. Approximate
        // with the developed distance to the origin of the normal pencil.
        let d = dev0.norm().max(1e-9);
        ext = ((extent[0] / d).atan(), (extent[1] / d).atan());
    }

    Ok(Cylinder {
        kind,
        factor,
        extent: ext,
        boundary: (boundary[0].clone(), boundary[1].clone()),
        wraps: (wraps[0], wraps[1]),
    })
}

/// Counterclockwise loop around a finite vertex: within each corner wedge of
/// the cycle, chords at the running radius; wedges are joined through the
/// actual edge transfers, so dilation holonomies close up with a final radial
/// chord inside the start wedge.
pub fn loop_around_vertex(
    surface: &Surface,
    cycle: &crate::surface::VertexCycle,
    radius: f64,
) -> LoopPath {
    let mut path: LoopPath = Vec::new();
    let mut r = radius;
    let mut entry: Option<C> = None;
    let n = cycle.corners.len();
    for (i, (cnr, pos)) in cycle.corners.iter().zip(&cycle.positions).enumerate() {
        let edges = surface.edges_of(cnr.piece);
        let din = -edges[cnr.edge_in].dir;
        let dout = edges[cnr.edge_out].dir;
        let a_out = dout.arg();
        let mut spread = (din.arg() - a_out).rem_euclid(TAU);
        if spread <= 1e-9 {
            spread = TAU;
        }
        let place = |rr: f64, f: f64| {
            let ang = a_out + f * spread;
            pos + rr * c(ang.cos(), ang.sin())
        };
        // Entry point (near edge_out), mid chord points, exit point on
        // edge_in.
        let first = entry.unwrap_or_else(|| place(r, 0.05));
        if i == 0 {
            path.push(mv(cnr.piece, first));
        }
        let steps = (spread / (0.4 * std::f64::consts::PI)).ceil().max(1.0) as usize;
        for k in 1..=steps {
            let f = 0.05 + 0.9 * k as f64 / steps as f64;
            path.push(mv(cnr.piece, place(r, f)));
        }
        let exit_point = place(r, 1.0);
        path.push(mv(cnr.piece, exit_point));
        // Transfer through edge_in to the next wedge.
        let e = &edges[cnr.edge_in];
        let t = e.param_of(exit_point);
        let span = surface
            .exit_at(cnr.piece, cnr.edge_in, t)
            .expect("vertex cycle edge is paired");
        let img = span
            .transfer
            .apply(surface.pieces[cnr.piece].kind, exit_point)
            .expect("transfer defined near the vertex");
        let next = cycle.corners[(i + 1) % n];
        path.push(hop(next.piece, img));
        entry = Some(img);
        r = (img - cycle.positions[(i + 1) % n]).norm();
    }
    // Close with a chord inside the start wedge back to the first point.
    let (p0, z0) = path[0].place();
    path.push(mv(p0, z0));
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders;

    #[test]
    fn torus_diagonal_closes() {
        let s = builders::square_torus(&[]).unwrap();
        let start = GeodesicState {
            piece: 0,
            position: c(0.5, 0.5),
            velocity: c(1.0, 1.0),
            time: 0.0,
        };
        let res = trace(&s, start, TraceOptions::default()).unwrap();
        match res.termination {
            Termination::ClosedUp { factor, period } => {
                assert!((factor - 1.0).abs() < 1e-9);
                assert!((period - 2f64.sqrt()).abs() < 1e-9, "period {period}");
            }
            other => panic!("expected closure, got {other:?}"),
        }
    }

    #[test]
    fn torus_irrational_times_out() {
        let s = builders::square_torus(&[]).unwrap();
        let start = GeodesicState {
            piece: 0,
            position: c(0.5, 0.5),
            velocity: c(1.0, std::f64::consts::SQRT_2),
            time: 0.0,
        };
        let res = trace(
            &s,
            start,
            TraceOptions { t_max: 50.0, max_crossings: 100_000, ..Default::default() },
        )
        .unwrap();
        assert!(matches!(res.termination, Termination::TimedOut));
        assert!(res.crossings > 50);
    }

    #[test]
    fn exp_plane_focus_hit() {
        let s = builders::exp_affine_plane().unwrap();
        // Start at w=0 (developed x=1) moving left: developed motion 1 - t,
        // hits the origin at t = 1.
        let start = GeodesicState {
            piece: 0,
            position: c(0.0, 0.0),
            velocity: c(-1.0, 0.0),
            time: 0.0,
        };
        let res = trace(&s, start, TraceOptions::default()).unwrap();
        match res.termination {
            Termination::HitApex { time, .. } => assert!((time - 1.0).abs() < 1e-9),
            other => panic!("expected apex hit, got {other:?}"),
        }
    }

    #[test]
    fn exp_plane_right_half_plane_traps() {
        let mut s = builders::exp_affine_plane().unwrap();
        s.add_trap(
            "right-half-plane",
            vec![crate::surface::TrapMember {
                piece: 0,
                test: crate::surface::TrapTest::Region(vec![crate::geometry::HalfPlane::new(
                    c(3.0, 0.0),
                    c(1.0, 0.0),
                )]),
            }],
        );
        // Geodesics through the right half-plane: sample several entering
        // directions; none may exit once Re w > 3.
        for k in 0..8 {
            let ang = 0.4 * (k as f64) - 1.4;
            let start = GeodesicState {
                piece: 0,
                position: c(3.2, 0.3 * k as f64),
                velocity: c(ang.cos(), ang.sin()),
                time: 0.0,
            };
            if start.velocity.re <= 0.1 {
                continue;
            }
            let res = trace(&s, start, TraceOptions { t_max: 1e5, ..Default::default() })
                .unwrap();
            // Verify containment along the polyline.
            for (_, pts) in &res.polyline {
                for p in pts {
                    assert!(p.re >= 3.0 - 1e-9, "left the trap at {p}");
                }
            }
        }
    }

    #[test]
    fn cushion_trace_crosses_seam() {
        let s = builders::cushion(1.0).unwrap();
        let start = GeodesicState {
            piece: 0,
            position: c(0.5, 0.5),
            velocity: c(1.0, 0.0),
            time: 0.0,
        };
        let res = trace(&s, start, TraceOptions { t_max: 10.0, ..Default::default() }).unwrap();
        match res.termination {
            Termination::ClosedUp { factor, period } => {
                assert!((factor - 1.0).abs() < 1e-9);
                assert!((period - 2.0).abs() < 1e-9, "period {period}");
            }
            other => panic!("expected closure, got {other:?}"),
        }
    }

    #[test]
    fn contractible_loop_trivial_holonomy() {
        let s = builders::square_torus(&[]).unwrap();
        let path: LoopPath = vec![
            mv(0, c(0.2, 0.2)),
            mv(0, c(0.8, 0.3)),
            mv(0, c(0.5, 0.8)),
            mv(0, c(0.2, 0.2)),
        ];
        let (lin, aff) = holonomy(&s, &path).unwrap();
        assert!((lin - c(1.0, 0.0)).norm() < 1e-12);
        assert!(aff.b.norm() < 1e-12);
        let tn = turning_number(&s, &path).unwrap();
        assert!((tn - 1.0).abs() < 1e-9, "turning {tn}");
    }

    #[test]
    fn cushion_corner_loop_holonomy_and_turning() {
        let s = builders::cushion(1.0).unwrap();
        let cycles = crate::surface::vertex_residues(&s);
        // Every corner has residue ½: linear holonomy −1, turning ½.
        for (cycle, residue) in &cycles {
            assert!((residue - c(0.5, 0.0)).norm() < 1e-9);
            let path = loop_around_vertex(&s, cycle, 0.1);
            let (lin, _) = holonomy(&s, &path).unwrap();
            let expect = (-TAU * crate::affine::I * residue).exp();
            assert!((lin - expect).norm() < 1e-8, "lin {lin} expect {expect}");
            let tn = turning_number(&s, &path).unwrap();
            assert!((tn - 0.5).abs() < 1e-8, "turning {tn}");
        }
    }

    #[test]
    fn skew_cone_tip_loop_matches_vertex_residue() {
        let s = builders::skew_cone(3.0, std::f64::consts::PI / 6.0).unwrap();
        let cycles = crate::surface::vertex_residues(&s);
        assert_eq!(cycles.len(), 1);
        let (cycle, residue) = &cycles[0];
        let path = loop_around_vertex(&s, cycle, 1.0);
        let (lin, _) = holonomy(&s, &path).unwrap();
        let expect = (-TAU * crate::affine::I * residue).exp();
        assert!(
            (lin - expect).norm() < 1e-8 * expect.norm(),
            "lin {lin} expect {expect}"
        );
    }

    #[test]
    fn two_corner_loop_turning_zero() {
        // Loop around two cushion corners of residue ½ each: turning 0.
        let s = builders::cushion(1.0).unwrap();
        // Rectangle around the middle seam's two corners (1,0) and (1,1):
        // bottom corner loop legs stay in pieces 0 and 1.
        let path: LoopPath = vec![
            mv(0, c(0.6, 0.2)),
            mv(0, c(0.6, 0.8)),
            // cross the top fold: (x, 1) ↦ (2-x, 1)
            mv(0, c(0.75, 1.0)),
            hop(1, c(1.25, 1.0)),
            mv(1, c(1.4, 0.8)),
            mv(1, c(1.4, 0.2)),
            // cross the bottom fold back
            mv(1, c(1.25, 0.0)),
            hop(0, c(0.75, 0.0)),
            mv(0, c(0.6, 0.2)),
        ];
        let tn = turning_number(&s, &path).unwrap();
        assert!(tn.abs() < 1e-8, "turning {tn}");
        let (lin, _) = holonomy(&s, &path).unwrap();
        assert!((lin - c(1.0, 0.0)).norm() < 1e-8, "holonomy {lin}");
    }

    #[test]
    fn time_reversal_retraces() {
        let s = builders::cushion(1.0).unwrap();
        let start = GeodesicState {
            piece: 0,
            position: c(0.3, 0.4),
            velocity: c(0.9, 0.7),
            time: 0.0,
        };
        let fwd = trace(
            &s,
            start,
            TraceOptions { t_max: 3.0, detect_closure: false, ..Default::default() },
        )
        .unwrap();
        let fs = fwd.final_state;
        let back = trace(
            &s,
            GeodesicState { piece: fs.piece, position: fs.position, velocity: -fs.velocity, time: 0.0 },
            TraceOptions { t_max: 10.0, detect_closure: false, ..Default::default() },
        )
        .unwrap();
        // The reverse trace passes through the original start point.
        let mut best = f64::INFINITY;
        for (pc, pts) in &back.polyline {
            if *pc != 0 {
                continue;
            }
            for window in pts.windows(2) {
                let (a, b) = (window[0], window[1]);
                let ab = b - a;
                let t = (dot(start.position - a, ab) / dot(ab, ab)).clamp(0.0, 1.0);
                best = best.min((a + ab * t - start.position).norm());
            }
        }
        assert!(best < 1e-9, "reverse trace misses start by {best}");
    }

    #[test]
    fn affine_torus_closed_geodesic_dilation_factor() {
        // Log-lattice torus: the horizontal log direction closes with the
        // dilation factor e^{Re u}.
        let u = c(2f64.ln(), 0.0);
        let v = c(0.0, TAU * 0.3);
        let s = builders::affine_torus(u, v).unwrap();
        let start = GeodesicState {
            piece: 0,
            position: c(0.1, 0.5),
            velocity: c(1.0, 0.0),
            time: 0.0,
        };
        let res = trace(&s, start, TraceOptions { t_max: 1e6, ..Default::default() }).unwrap();
        match res.termination {
            Termination::ClosedUp { factor, .. } => {
                assert!(
                    (factor - 2.0).abs() < 1e-6 || (factor - 0.5).abs() < 1e-6,
                    "factor {factor}"
                );
            }
            other => panic!("expected closure, got {other:?}"),
        }
    }
}
