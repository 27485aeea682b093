//! The Delaunay decomposition: certified segments from maximal immersed
//! disks and pivoting, component classification, core/exterior partition and
//! the counting identities `t + β = 4g - 4 + 2n`, `|segments| ≤ 6g - 6 + 3n`.

use serde::Serialize;
use std::f64::consts::{PI, TAU};

use crate::affine::{c, AffineMap, C};
use crate::config;
use crate::error::DelaunayError;
use crate::geodesics::{trace, GeodesicState, TraceOptions, TraceResult};
use crate::geometry::{cross, dot};
use crate::surface::{EndKind, PieceId, PieceKind, SingLocation, Surface, VertexCycle};

// ---------------------------------------------------------------------------
// Apexes
// ---------------------------------------------------------------------------

/// A finite-time reachable singular point: a conical singularity (including
/// marked points) or a focus of an irregular singularity.
#[derive(Debug, Clone)]
pub struct Apex {
    pub id: usize,
    /// Owning singularity record.
    pub record: usize,
    pub site: ApexSite,
}

#[derive(Debug, Clone)]
pub enum ApexSite {
    /// A finite vertex class with its corner cycle.
    Vertex { cycle: VertexCycle },
    /// An interior marked point.
    Mark { piece: PieceId, z: C },
    /// A focus: the developed origin of a group of log pieces.
    Focus { pieces: Vec<PieceId> },
}

/// Enumerate the apexes of a surface.
pub fn apexes(surface: &Surface) -> Vec<Apex> {
    let mut out = Vec::new();
    let cycles = crate::surface::vertex_cycles(surface);
    for rec in &surface.singularities {
        match &rec.location {
            SingLocation::Interior { piece, z } => {
                if rec.order == 0 || rec.residue.re < 1.0 - 1e-9 {
                    out.push(Apex {
                        id: out.len(),
                        record: rec.id,
                        site: ApexSite::Mark { piece: *piece, z: *z },
                    });
                }
            }
            SingLocation::Corner { piece, corner } => {
                if rec.residue.re < 1.0 - 1e-9 {
                    if let Some(cycle) = cycles.iter().find(|cy| {
                        cy.corners.iter().any(|cnr| cnr.piece == *piece && cnr.edge_in == *corner)
                    }) {
                        out.push(Apex {
                            id: out.len(),
                            record: rec.id,
                            site: ApexSite::Vertex { cycle: cycle.clone() },
                        });
                    }
                }
            }
            SingLocation::Ends { ends } => {
                if rec.order >= 2 {
                    // Foci: groups of log-left pieces joined by identity
                    // overlaps. Group by walking shared identity pairings.
                    let left_pieces: Vec<PieceId> = ends
                        .iter()
                        .filter(|(_, k)| matches!(k, EndKind::LogLeft))
                        .map(|(p, _)| *p)
                        .collect();
                    for group in group_focus_pieces(surface, &left_pieces) {
                        out.push(Apex {
                            id: out.len(),
                            record: rec.id,
                            site: ApexSite::Focus { pieces: group },
                        });
                    }
                }
            }
        }
    }
    out
}

/// Partition log-left pieces into focus groups: pieces connected by pairings
/// whose developed map fixes the origin (the focus develops consistently).
fn group_focus_pieces(surface: &Surface, pieces: &[PieceId]) -> Vec<Vec<PieceId>> {
    let mut groups: Vec<Vec<PieceId>> = Vec::new();
    let mut assigned = vec![false; pieces.len()];
    for (i, &p) in pieces.iter().enumerate() {
        if assigned[i] {
            continue;
        }
        let mut group = vec![p];
        assigned[i] = true;
        let mut frontier = vec![p];
        while let Some(q) = frontier.pop() {
            for pr in &surface.pairings {
                let (qa, qb) = (pr.side1.piece, pr.side2.piece);
                if qa != q && qb != q {
                    continue;
                }
                if pr.dev.b.norm() > 1e-9 {
                    continue; // the gluing moves the developed origin
                }
                let other = if qa == q { qb } else { qa };
                if let Some(j) = pieces.iter().position(|&x| x == other) {
                    if !assigned[j] {
                        assigned[j] = true;
                        group.push(other);
                        frontier.push(other);
                    }
                }
            }
        }
        group.sort_unstable();
        groups.push(group);
    }
    groups
}

// ---------------------------------------------------------------------------
// Developments: cells and apex copies
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Cell {
    piece: PieceId,
    /// Affine map from the piece's developing coordinates to the plane.
    map: AffineMap,
}

#[derive(Debug, Clone)]
struct ApexCopy {
    point: C,
    apex: usize,
}

#[derive(Debug)]
pub struct Development<'a> {
    surface: &'a Surface,
    apex_list: &'a [Apex],
    cells: Vec<Cell>,
    copies: Vec<ApexCopy>,
    scale: f64,
}

impl<'a> Development<'a> {
    fn new(surface: &'a Surface, apex_list: &'a [Apex], seed_piece: PieceId) -> Self {
        let mut dev = Development {
            surface,
            apex_list,
            cells: Vec::new(),
            copies: Vec::new(),
            scale: surface.scale(),
        };
        dev.admit(Cell { piece: seed_piece, map: AffineMap::identity() });
        dev
    }

    fn admit(&mut self, cell: Cell) -> Option<usize> {
        let tol = 1e-7 * (1.0 + self.scale) * (1.0 + cell.map.a.norm());
        if self.cells.iter().any(|cl| {
            cl.piece == cell.piece
                && (cl.map.a - cell.map.a).norm() < tol
                && (cl.map.b - cell.map.b).norm() < tol
        }) {
            return None;
        }
        let idx = self.cells.len();
        self.cells.push(cell.clone());
        // Collect the apex copies visible in this cell.
        let mut new_copies = Vec::new();
        for apex in self.apex_list {
            match &apex.site {
                ApexSite::Vertex { cycle } => {
                    for (cnr, pos) in cycle.corners.iter().zip(&cycle.positions) {
                        if cnr.piece == cell.piece {
                            let pt = cell.map.apply(self.surface.pieces[cnr.piece].dev(*pos));
                            new_copies.push(ApexCopy { point: pt, apex: apex.id });
                        }
                    }
                }
                ApexSite::Mark { piece, z } => {
                    if *piece == cell.piece {
                        let pt = cell.map.apply(self.surface.pieces[*piece].dev(*z));
                        new_copies.push(ApexCopy { point: pt, apex: apex.id });
                    }
                }
                ApexSite::Focus { pieces } => {
                    if pieces.contains(&cell.piece) {
                        let pt = cell.map.apply(c(0.0, 0.0));
                        new_copies.push(ApexCopy { point: pt, apex: apex.id });
                    }
                }
            }
        }
        for cp in new_copies {
            self.push_copy(cp);
        }
        Some(idx)
    }

    fn push_copy(&mut self, copy: ApexCopy) {
        let tol = 1e-8 * (1.0 + self.scale);
        if self
            .copies
            .iter()
            .any(|cp| cp.apex == copy.apex && (cp.point - copy.point).norm() < tol)
        {
            return;
        }
        self.copies.push(copy);
    }

    /// True if the cell's claim could intersect the disk.
    fn cell_touches(&self, cell: &Cell, center: C, radius: f64) -> bool {
        let piece = &self.surface.pieces[cell.piece];
        let inv = cell.map.inverse().expect("cell maps invertible");
        let c_dev = inv.apply(center);
        let r_dev = radius / cell.map.a.norm();
        match piece.kind {
            PieceKind::Flat => piece.region.distance(c_dev) <= r_dev,
            PieceKind::Log => {
                let d = c_dev.norm();
                if d <= r_dev {
                    // The disk engulfs the developed origin; the log image
                    // reaches arbitrarily far left. Conservative: touch when
                    // the region has points with any Re.
                    return true;
                }
                let re_lo = (d - r_dev).ln();
                let re_hi = (d + r_dev).ln();
                let half = (r_dev / d).asin();
                let theta = c_dev.arg();
                // Boxes at every vertical period.
                let (im_lo, im_hi) = region_im_extent(&piece.region);
                let mut k = ((im_lo - theta) / TAU).floor() as i64 - 1;
                let k_hi = ((im_hi - theta) / TAU).ceil() as i64 + 1;
                while k <= k_hi {
                    let box_c = c(0.5 * (re_lo + re_hi), theta + TAU * k as f64);
                    let box_r = (0.5 * (re_hi - re_lo)).hypot(half);
                    if piece.region.distance(box_c) <= box_r {
                        return true;
                    }
                    k += 1;
                    if k - ((im_lo - theta) / TAU).floor() as i64 > 10_000 {
                        break;
                    }
                }
                false
            }
        }
    }

    /// Expand cells until every cell whose claim touches `D(center, radius)`
    /// has its neighbors admitted too.
    fn cover(&mut self, center: C, radius: f64, budget: usize) -> Result<(), DelaunayError> {
        let mut frontier: Vec<usize> = (0..self.cells.len()).collect();
        let mut steps = 0usize;
        while let Some(ci) = frontier.pop() {
            steps += 1;
            if steps > budget {
                return Err(DelaunayError::SpineTraversalCapped { budget });
            }
            let cell = self.cells[ci].clone();
            if !self.cell_touches(&cell, center, radius) {
                continue;
            }
            for ei in 0..self.surface.edges_of(cell.piece).len() {
                for span in self.surface.exits_of(cell.piece, ei) {
                    let g_inv = span
                        .transfer
                        .dev
                        .inverse()
                        .expect("pairing maps invertible");
                    let next = Cell { piece: span.target, map: cell.map.compose(&g_inv) };
                    if self.cell_touches(&next, center, radius) {
                        if let Some(idx) = self.admit(next) {
                            frontier.push(idx);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn region_im_extent(region: &crate::geometry::Region) -> (f64, f64) {
    // Coarse: all finite vertices plus unbounded margins.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in region.vertices() {
        lo = lo.min(v.im);
        hi = hi.max(v.im);
    }
    for e in region.edges() {
        if !e.lo.is_finite() || !e.hi.is_finite() {
            if e.dir.im.abs() > 1e-12 {
                return (f64::NEG_INFINITY, f64::INFINITY);
            }
            lo = lo.min(e.base.im);
            hi = hi.max(e.base.im);
        }
    }
    for h in &region.halfplanes {
        // A half-plane with horizontal boundary bounds Im on one side.
        let _ = h;
    }
    if !lo.is_finite() {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        (lo - TAU, hi + TAU)
    }
}

// ---------------------------------------------------------------------------
// Maximal disks
// ---------------------------------------------------------------------------

/// A maximal immersed disk, pinned by its boundary singular hits.
#[derive(Debug, Clone)]
pub struct MaxDisk {
    pub center: C,
    pub radius: f64,
    /// Boundary hits sorted by boundary angle: (angle, apex id, plane point).
    pub hits: Vec<(f64, usize, C)>,
}

impl MaxDisk {
    pub fn is_type_a(&self) -> bool {
        self.hits.len() == 2
    }
}

pub enum GrowOutcome {
    Disk(MaxDisk),
    /// The growth escaped: evidence that the seed lies in the exterior.
    HalfPlaneRegime,
}

/// Grow the maximal immersed disk around a seed point.
pub fn grow_max_disk(
    surface: &Surface,
    apex_list: &[Apex],
    seed: (PieceId, C),
) -> Result<GrowOutcome, DelaunayError> {
    let scale = surface.scale();
    let mut dev = Development::new(surface, apex_list, seed.0);
    let c0 = surface.pieces[seed.0].dev(seed.1);
    let budget = 40_000;

    // Phase 1: nearest apex distance.
    let mut r_try = 0.25 * (1.0 + scale);
    let r1;
    loop {
        dev.cover(c0, r_try, budget)?;
        let best = dev
            .copies
            .iter()
            .map(|cp| (cp.point - c0).norm())
            .fold(f64::INFINITY, f64::min);
        if best <= r_try {
            r1 = best;
            break;
        }
        r_try *= 2.0;
        if r_try > 512.0 * (1.0 + scale) {
            return Ok(GrowOutcome::HalfPlaneRegime);
        }
    }
    if r1 < 1e-9 * (1.0 + scale) {
        return Err(DelaunayError::SeedOnSingularity);
    }
    let first = dev
        .copies
        .iter()
        .min_by(|a, b| (a.point - c0).norm().total_cmp(&(b.point - c0).norm()))
        .unwrap()
        .clone();

    // Phase 2: inflate away from the first hit A keeping it on the boundary:
    // c(λ) = A + λ(c0 - A), r(λ) = λ·r1. An apex copy P enters the boundary
    // at λ_P = |P-A|² / (2 (P-A)·(c0-A)), linearly.
    let a_pt = first.point;
    let v = c0 - a_pt;
    let entry = |p: C| -> Option<f64> {
        let w = p - a_pt;
        if w.norm() < 1e-9 * (1.0 + scale) {
            return None;
        }
        let den = 2.0 * dot(w, v);
        if den <= 1e-300 {
            return None; // never enters (behind A)
        }
        let lam = dot(w, w) / den;
        lam.is_finite().then_some(lam)
    };
    let mut lambda = 1.0f64;
    loop {
        let cc = a_pt + v * lambda;
        let rr = lambda * r1;
        if rr > 256.0 * (1.0 + scale) {
            return Ok(GrowOutcome::HalfPlaneRegime);
        }
        let before = dev.copies.len();
        dev.cover(cc, rr * (1.0 + 1e-9), budget)?;
        if dev.copies.len() > before {
            // New copies may pin an earlier maximal disk.
            let earliest = dev
                .copies
                .iter()
                .filter_map(|cp| entry(cp.point))
                .filter(|l| *l < lambda * (1.0 - 1e-12) && *l >= 1.0 - 1e-12)
                .fold(f64::INFINITY, f64::min);
            if earliest.is_finite() {
                lambda = earliest;
                continue;
            }
        }
        let disk = collect_hits(&dev, cc, rr, scale);
        if std::env::var("AFF_DBG").is_ok() {
            eprintln!("λ={lambda} cc={cc} rr={rr} cells={} copies={} hits={}", dev.cells.len(), dev.copies.len(), disk.hits.len());
        }
        if disk.hits.len() >= 2 {
            return Ok(GrowOutcome::Disk(disk));
        }
        // Advance to the next entry event, or expand the horizon.
        let next = dev
            .copies
            .iter()
            .filter_map(|cp| entry(cp.point))
            .filter(|l| *l > lambda * (1.0 + 1e-12))
            .fold(f64::INFINITY, f64::min);
        if next.is_finite() {
            lambda = next;
        } else {
            lambda *= 4.0;
        }
    }
}

fn collect_hits(dev: &Development, center: C, radius: f64, scale: f64) -> MaxDisk {
    let tol = 1e-7 * (radius + 1.0 + scale);
    let mut hits: Vec<(f64, usize, C)> = Vec::new();
    for cp in &dev.copies {
        let d = (cp.point - center).norm();
        if (d - radius).abs() <= tol {
            let ang = (cp.point - center).arg();
            if !hits
                .iter()
                .any(|(a, id, _)| *id == cp.apex && crate::affine::wrap_angle(a - ang).abs() < 1e-7)
            {
                hits.push((ang, cp.apex, cp.point));
            }
        }
    }
    hits.sort_by(|x, y| x.0.total_cmp(&y.0));
    MaxDisk { center, radius, hits }
}

/// Pivot a maximal disk through the egress arc between consecutive hits
/// `(i, i+1)`: sweep the pencil of circles through the two bounding apexes
/// until a new hit pins the next maximal element.
pub fn pivot(
    surface: &Surface,
    apex_list: &[Apex],
    disk: &MaxDisk,
    egress: usize,
    seed_piece_hint: PieceId,
) -> Result<Option<MaxDisk>, DelaunayError> {
    let scale = surface.scale();
    let n = disk.hits.len();
    let (_, _, a_pt) = disk.hits[egress];
    let (_, _, b_pt) = disk.hits[(egress + 1) % n];
    if ((a_pt - b_pt).norm()) < 1e-9 * (1.0 + scale) {
        return Ok(None);
    }
    let mid = 0.5 * (a_pt + b_pt);
    let mut nrm = crate::affine::I * (b_pt - a_pt) / (b_pt - a_pt).norm();
    // Sweep into the side of the egress arc: the arc midpoint of the egress
    // (between angles of A and B through the gap) indicates the side.
    let ang_a = (a_pt - disk.center).arg();
    let ang_b = (b_pt - disk.center).arg();
    let mut gap = ang_b - ang_a;
    while gap <= 0.0 {
        gap += TAU;
    }
    let arc_mid = disk.center + radius_dir(ang_a + 0.5 * gap) * disk.radius;
    if dot(nrm, arc_mid - mid) < 0.0 {
        nrm = -nrm;
    }
    let tau0 = dot(disk.center - mid, nrm);
    let h2 = dot(a_pt - mid, a_pt - mid);

    // Fresh development anchored at the hint piece: re-develop around the
    // pencil. Reuse the global frame: the disk's data is already in plane
    // coordinates of its own development, so we rebuild one.
    let mut dev = Development::new(surface, apex_list, seed_piece_hint);
    let budget = 40_000;
    dev.cover(disk.center, disk.radius * 1.01, budget)?;

    let mut tau_limit = tau0;
    let mut result: Option<MaxDisk> = None;
    for _ in 0..64 {
        // Candidate: earliest entering apex among discovered copies.
        let mut best: Option<f64> = None;
        for cp in &dev.copies {
            let p = cp.point;
            if (p - a_pt).norm() < 1e-9 * (1.0 + scale) || (p - b_pt).norm() < 1e-9 * (1.0 + scale)
            {
                continue;
            }
            let denom = 2.0 * dot(nrm, mid - p);
            if denom.abs() < 1e-300 {
                continue;
            }
            let tau_p = (h2 - dot(mid - p, mid - p)) / denom;
            if tau_p > tau0 + 1e-10 && best.map(|b| tau_p < b).unwrap_or(true) {
                best = Some(tau_p);
            }
        }
        let Some(tau) = best else {
            // Expand farther along the pencil; stop at the cap.
            tau_limit = if tau_limit <= 0.0 { 1.0 + tau_limit * 0.0 } else { tau_limit * 3.0 };
            let cc = mid + nrm * tau_limit;
            let rr = (h2 + tau_limit * tau_limit).sqrt();
            if rr > 512.0 * (1.0 + scale) {
                return Ok(None); // unbounded egress: half-plane regime
            }
            dev.cover(cc, rr, budget)?;
            let any_new = dev.copies.iter().any(|cp| {
                let denom = 2.0 * dot(nrm, mid - cp.point);
                if denom.abs() < 1e-300 {
                    return false;
                }
                let tau_p = (h2 - dot(mid - cp.point, mid - cp.point)) / denom;
                tau_p > tau0 + 1e-10
            });
            if !any_new && tau_limit > 256.0 * (1.0 + scale) {
                return Ok(None);
            }
            continue;
        };
        let cc = mid + nrm * tau;
        let rr = (h2 + tau * tau).sqrt();
        let before = dev.copies.len();
        dev.cover(cc, rr * (1.0 + 1e-9), budget)?;
        if dev.copies.len() > before {
            continue;
        }
        result = Some(collect_hits(&dev, cc, rr, scale));
        break;
    }
    Ok(result)
}

fn radius_dir(ang: f64) -> C {
    c(ang.cos(), ang.sin())
}

// ---------------------------------------------------------------------------
// Segments
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DelaunaySegment {
    pub endpoints: (usize, usize),
    /// Developed length of the chord.
    pub length: f64,
    /// Polyline across pieces, in piece coordinates.
    pub path: Vec<(PieceId, Vec<C>)>,
    /// Canonical key for deduplication.
    pub key: (usize, usize, i64, usize, i64, i64),
}

fn log_branch_in_region(region: &crate::geometry::Region, x: C, scale: f64) -> Option<C> {
    let base = x.ln();
    let (lo, hi) = region_im_extent(region);
    let mut k = if lo.is_finite() { ((lo - base.im) / TAU).floor() as i64 } else { -3 };
    let k_hi = if hi.is_finite() { ((hi - base.im) / TAU).ceil() as i64 } else { 3 };
    while k <= k_hi {
        let zz = base + c(0.0, TAU * k as f64);
        if region.contains(zz, 1e-9 * (1.0 + scale)) {
            return Some(zz);
        }
        k += 1;
    }
    None
}

/// Pull a chord [P, Q] back to a surface polyline by tracing from just off P.
fn chord_to_path(
    surface: &Surface,
    dev_cell: &Cell,
    p: C,
    q: C,
    expect_apex_dist: f64,
) -> Option<(Vec<(PieceId, Vec<C>)>, TraceResult)> {
    let u = (q - p) / (q - p).norm();
    let eps = 1e-7 * expect_apex_dist;
    let start_plane = p + u * eps;
    let inv = dev_cell.map.inverse().ok()?;
    let x_dev = inv.apply(start_plane);
    let w_dev = inv.a * u;
    let piece = dev_cell.piece;
    let (z0, v0) = match surface.pieces[piece].kind {
        PieceKind::Flat => (x_dev, w_dev),
        PieceKind::Log => {
            let z = log_branch_in_region(
                &surface.pieces[piece].region,
                x_dev,
                surface.scale(),
            )?;
            (z, w_dev / x_dev)
        }
    };
    let res = trace(
        surface,
        GeodesicState { piece, position: z0, velocity: v0, time: 0.0 },
        TraceOptions {
            t_max: ((q - p).norm() + 10.0 * eps) / w_dev.norm() * inv.a.norm(),
            max_crossings: config::get().max_crossings,
            stop_at_traps: false,
            detect_closure: false,
        },
    )
    .ok()?;
    Some((res.polyline.clone(), res))
}

/// Find the cell of a development whose claim contains the point, preferring
/// low piece ids, and return the pulled-back surface point.
fn locate(surface: &Surface, dev: &Development, point: C) -> Option<(PieceId, C)> {
    let mut best: Option<(PieceId, C)> = None;
    for cell in &dev.cells {
        let inv = cell.map.inverse().ok()?;
        let x = inv.apply(point);
        let piece = &surface.pieces[cell.piece];
        let z = match piece.kind {
            PieceKind::Flat => x,
            PieceKind::Log => {
                if x.norm() < 1e-12 {
                    continue;
                }
                // Choose the branch inside the region when one exists.
                let base = x.ln();
                let (lo, hi) = region_im_extent(&piece.region);
                let mut found = None;
                let mut k = if lo.is_finite() { ((lo - base.im) / TAU).floor() as i64 } else { -3 };
                let k_hi = if hi.is_finite() { ((hi - base.im) / TAU).ceil() as i64 } else { 3 };
                while k <= k_hi {
                    let zz = base + c(0.0, TAU * k as f64);
                    if piece.region.contains(zz, 1e-9 * (1.0 + dev.scale)) {
                        found = Some(zz);
                        break;
                    }
                    k += 1;
                }
                match found {
                    Some(zz) => zz,
                    None => continue,
                }
            }
        };
        if piece.region.contains(z, 1e-9 * (1.0 + dev.scale))
            && best.map(|(bp, _)| cell.piece < bp).unwrap_or(true)
        {
            best = Some((cell.piece, z));
        }
    }
    best
}

/// Full Delaunay segment enumeration by spine traversal.
pub fn delaunay_segments(
    surface: &Surface,
    apex_list: &[Apex],
) -> Result<Vec<DelaunaySegment>, DelaunayError> {
    let scale = surface.scale();
    let cfg = config::get();
    let mut segments: Vec<DelaunaySegment> = Vec::new();
    let mut visited_disks: Vec<((PieceId, i64, i64), f64)> = Vec::new();
    let mut queue: Vec<(MaxDisk, PieceId)> = Vec::new();
    let mut pivots = 0usize;

    // Seeds near every apex.
    for apex in apex_list {
        for (piece, z) in apex_seeds(surface, apex, scale) {
            match grow_max_disk(surface, apex_list, (piece, z)) {
                Ok(GrowOutcome::Disk(d)) if d.hits.len() >= 2 => queue.push((d, piece)),
                Ok(_) => {}
                Err(DelaunayError::SeedOnSingularity) => {}
                Err(e) => return Err(e),
            }
        }
    }

    while let Some((disk, hint)) = queue.pop() {
        // Canonical identity of the disk: surface location of its center.
        let mut dev = Development::new(surface, apex_list, hint);
        dev.cover(disk.center, disk.radius.max(1e-6), 40_000)?;
        let Some(center_loc) = locate(surface, &dev, disk.center) else { continue };
        let qkey = canonical_point(surface, center_loc.0, center_loc.1, scale);
        if visited_disks.iter().any(|(key, r)| {
            *key == qkey && (r - disk.radius).abs() < 1e-6 * (1.0 + scale)
        }) {
            continue;
        }
        visited_disks.push((qkey, disk.radius));

        let n = disk.hits.len();
        for i in 0..n {
            let (_, apex_a, pa) = disk.hits[i];
            let (_, apex_b, pb) = disk.hits[(i + 1) % n];
            if n == 2 && i == 1 {
                // The two egress arcs of a type-A disk certify the same chord.
            } else if n >= 3 || i == 0 {
                // Consecutive hits around the circle bound a polygon side.
                if let Some(seg) =
                    build_segment(surface, &dev, apex_a, apex_b, pa, pb, scale)
                {
                    if !segments.iter().any(|s| s.key == seg.key) {
                        segments.push(seg);
                    }
                }
            }
            // Pivot through this egress for the next maximal element.
            pivots += 1;
            if pivots > cfg.max_pivots {
                return Err(DelaunayError::SpineTraversalCapped { budget: cfg.max_pivots });
            }
            if let Some(next) = pivot(surface, apex_list, &disk, i, hint)? {
                if next.hits.len() >= 2 {
                    queue.push((next, hint));
                }
            }
        }
    }

    segments.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(segments)
}

fn quant(x: f64, scale: f64) -> i64 {
    (x / (1e-6 * (1.0 + scale))).round() as i64
}

/// Canonical representative of a surface point: the lexicographically
/// smallest (piece, quantized position) among the point and its transfers
/// across any edges it lies on.
fn canonical_point(surface: &Surface, piece: PieceId, z: C, scale: f64) -> (PieceId, i64, i64) {
    let mut best = (piece, quant(z.re, scale), quant(z.im, scale));
    let tol = 1e-6 * (1.0 + scale);
    for (ei, e) in surface.edges_of(piece).iter().enumerate() {
        let t = e.param_of(z);
        if t < e.lo - tol || t > e.hi + tol || (z - e.at(t)).norm() > tol {
            continue;
        }
        for span in surface.exits_of(piece, ei) {
            if t < span.t0 - tol || t > span.t1 + tol {
                continue;
            }
            if let Ok(img) = span.transfer.apply(surface.pieces[piece].kind, z) {
                let cand = (span.target, quant(img.re, scale), quant(img.im, scale));
                if cand < best {
                    best = cand;
                }
            }
        }
    }
    best
}

fn build_segment(
    surface: &Surface,
    dev: &Development,
    apex_a: usize,
    apex_b: usize,
    pa: C,
    pb: C,
    scale: f64,
) -> Option<DelaunaySegment> {
    let length = (pb - pa).norm();
    // Pull the midpoint back for the dedup key.
    let midpoint = locate(surface, dev, 0.5 * (pa + pb))?;
    let (lo, hi) = if apex_a <= apex_b { (apex_a, apex_b) } else { (apex_b, apex_a) };
    let canon = canonical_point(surface, midpoint.0, midpoint.1, scale);
    let key = (
        lo,
        hi,
        (length / (1e-8 * (1.0 + scale))).round() as i64,
        canon.0,
        canon.1,
        canon.2,
    );
    // Find a cell containing the start of the path trace (just off pa), and
    // fall back to tracing from the other end.
    let mut path = Vec::new();
    'tries: for (from, to, flip) in [(pa, pb, false), (pb, pa, true)] {
        let u = (to - from) / (to - from).norm();
        let start = from + u * (1e-7 * length);
        for cl in &dev.cells {
            let Ok(inv) = cl.map.inverse() else { continue };
            let x = inv.apply(start);
            let piece = &surface.pieces[cl.piece];
            let inside = match piece.kind {
                PieceKind::Flat => piece.region.contains(x, 1e-9 * (1.0 + scale)),
                PieceKind::Log => {
                    x.norm() > 1e-12 && log_branch_in_region(&piece.region, x, scale).is_some()
                }
            };
            if !inside {
                continue;
            }
            if let Some((poly, res)) = chord_to_path(surface, cl, from, to, length) {
                if matches!(res.termination, crate::geodesics::Termination::HitApex { .. }) {
                    path = poly;
                    if flip {
                        path.reverse();
                        for (_, pts) in &mut path {
                            pts.reverse();
                        }
                    }
                    break 'tries;
                }
            }
        }
    }
    Some(DelaunaySegment { endpoints: (apex_a, apex_b), length, path, key })
}

/// Seed points just inside an apex.
fn apex_seeds(surface: &Surface, apex: &Apex, scale: f64) -> Vec<(PieceId, C)> {
    let mut out = Vec::new();
    match &apex.site {
        ApexSite::Vertex { cycle } => {
            for (cnr, pos) in cycle.corners.iter().zip(&cycle.positions) {
                let edges = surface.edges_of(cnr.piece);
                let dout = edges[cnr.edge_out].dir;
                let din = -edges[cnr.edge_in].dir;
                let a0 = dout.arg();
                let mut spread = (din.arg() - a0).rem_euclid(TAU);
                if spread <= 1e-9 {
                    spread = TAU;
                }
                let samples = (spread / (PI / 8.0)).ceil().max(1.0) as usize;
                let delta = 1e-3 * (1.0 + scale);
                for s in 0..samples {
                    let ang = a0 + spread * (s as f64 + 0.5) / samples as f64;
                    out.push((cnr.piece, pos + delta * radius_dir(ang)));
                }
            }
        }
        ApexSite::Mark { piece, z } => {
            let delta = 1e-3 * (1.0 + scale);
            for s in 0..8 {
                let ang = TAU * (s as f64 + 0.3) / 8.0;
                out.push((*piece, z + delta * radius_dir(ang)));
            }
        }
        ApexSite::Focus { pieces } => {
            // Seeds at developed distance e^{-R-1} from the focus, i.e. at
            // Re w = -R-1 in the log chart.
            for &p in pieces {
                let region = &surface.pieces[p].region;
                let re = region
                    .halfplanes
                    .iter()
                    .filter(|h| h.n.re.abs() > 0.5)
                    .map(|h| h.p.re)
                    .fold(0.0f64, f64::min)
                    - 1.0;
                let (lo, hi) = region_im_extent(region);
                let lo = if lo.is_finite() { lo } else { -2.0 };
                let hi = if hi.is_finite() { hi } else { 2.0 };
                for s in 0..4 {
                    let im = lo + (hi - lo) * (s as f64 + 0.5) / 4.0;
                    let z = c(re, im);
                    if region.contains(z, 0.0) {
                        out.push((p, z));
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Exceptionality
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExceptionalTag {
    WholePlane,
    TranslationCylinder,
    TranslationTorus,
    InfiniteAngleCone,
    AffineCylinder,
    AffineTorus,
}

/// `2g + n ≤ 2` detection with the model tag of the classification.
pub fn is_exceptional(surface: &Surface) -> (bool, Option<ExceptionalTag>) {
    let complexity = surface.complexity();
    if complexity > 2 {
        return (false, None);
    }
    let g = surface.genus;
    let n = surface.total_multiplicity();
    let all_flat = surface.pieces.iter().all(|p| p.kind == PieceKind::Flat);
    let tag = if g == 1 && n == 0 {
        if all_flat {
            ExceptionalTag::TranslationTorus
        } else {
            ExceptionalTag::AffineTorus
        }
    } else if surface.singularities.iter().any(|s| s.order >= 2) {
        ExceptionalTag::InfiniteAngleCone
    } else if n == 2 {
        let both_res_one = surface
            .singularities
            .iter()
            .all(|s| (s.residue - c(1.0, 0.0)).norm() < 1e-9);
        if both_res_one && all_flat {
            ExceptionalTag::TranslationCylinder
        } else {
            ExceptionalTag::AffineCylinder
        }
    } else {
        ExceptionalTag::WholePlane
    };
    (true, Some(tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders;

    #[test]
    fn exceptional_tags() {
        let cases: Vec<(Surface, ExceptionalTag)> = vec![
            (builders::whole_plane().unwrap(), ExceptionalTag::WholePlane),
            (builders::translation_cylinder(1.0).unwrap(), ExceptionalTag::TranslationCylinder),
            (builders::square_torus(&[]).unwrap(), ExceptionalTag::TranslationTorus),
            (builders::exp_affine_plane().unwrap(), ExceptionalTag::InfiniteAngleCone),
            (
                builders::affine_cylinder(c(0.0, TAU * 0.25)).unwrap(),
                ExceptionalTag::AffineCylinder,
            ),
            (builders::affine_torus(c(0.7, 0.1), c(0.0, 2.0)).unwrap(), ExceptionalTag::AffineTorus),
        ];
        for (s, expect) in cases {
            let (ex, tag) = is_exceptional(&s);
            assert!(ex, "{expect:?} not flagged exceptional");
            assert_eq!(tag, Some(expect));
        }
        let cushion = builders::cushion(1.0).unwrap();
        assert_eq!(is_exceptional(&cushion), (false, None));
    }

    #[test]
    fn square_torus_mark_disk() {
        let s = builders::square_torus(&[c(0.0, 0.0)]).unwrap();
        let apx = apexes(&s);
        assert_eq!(apx.len(), 1);
        // Seed at the square center: the maximal disk has radius 1/√2 and
        // four cocircular hits (the lattice of mark copies).
        let out = grow_max_disk(&s, &apx, (0, c(0.5, 0.5))).unwrap();
        match out {
            GrowOutcome::Disk(d) => {
                assert!((d.radius - 0.5f64.sqrt()).abs() < 1e-7, "radius {}", d.radius);
                assert_eq!(d.hits.len(), 4, "hits: {:?}", d.hits);
            }
            GrowOutcome::HalfPlaneRegime => panic!("unexpected escape"),
        }
    }

    #[test]
    fn cushion_center_disk() {
        let s = builders::cushion(1.0).unwrap();
        let apx = apexes(&s);
        assert_eq!(apx.len(), 4);
        let out = grow_max_disk(&s, &apx, (0, c(0.5, 0.5))).unwrap();
        match out {
            GrowOutcome::Disk(d) => {
                assert!((d.radius - 0.5f64.sqrt()).abs() < 1e-7, "radius {}", d.radius);
                assert_eq!(d.hits.len(), 4, "hits: {:?}", d.hits);
            }
            GrowOutcome::HalfPlaneRegime => panic!("unexpected escape"),
        }
    }

    #[test]
    fn square_torus_mark_segments() {
        let s = builders::square_torus(&[c(0.0, 0.0)]).unwrap();
        let apx = apexes(&s);
        let segs = delaunay_segments(&s, &apx).unwrap();
        // Horizontal and vertical unit saddle connections; the diagonal is
        // excluded by cocircularity.
        assert_eq!(segs.len(), 2, "segments: {:?}", segs.iter().map(|s| s.length).collect::<Vec<_>>());
        for seg in &segs {
            assert!((seg.length - 1.0).abs() < 1e-7, "length {}", seg.length);
        }
    }

    #[test]
    fn cushion_decomposition() {
        let s = builders::cushion(1.0).unwrap();
        let dec = decompose(&s).unwrap();
        assert_eq!(dec.segments.len(), 4);
        let polys: Vec<_> = dec
            .components
            .iter()
            .filter(|cmp| matches!(cmp.kind, ComponentType::Polygon { .. }))
            .collect();
        assert_eq!(polys.len(), 2, "components: {:?}", dec.components);
        assert!(polys.iter().all(|cmp| cmp.sides == 4));
        assert_eq!(dec.t, 4);
        assert_eq!(dec.beta, 0);
        assert!(dec.identity_ok, "t+β = {} vs {}", dec.t + dec.beta, 4 * dec.genus - 4 + 2 * dec.n);
        assert!(dec.segment_bound_ok);
        assert!(verify_disjointness(&dec.segments));
    }

    #[test]
    fn torus_mark_decomposition() {
        let s = builders::square_torus(&[c(0.3, 0.4)]).unwrap();
        let dec = decompose(&s).unwrap();
        assert_eq!(dec.segments.len(), 2);
        assert_eq!(dec.components.len(), 1, "components: {:?}", dec.components);
        assert!(matches!(dec.components[0].kind, ComponentType::Polygon { sides: 4 }));
        assert_eq!(dec.t, 2);
        assert_eq!(dec.beta, 0);
        assert!(dec.identity_ok);
    }

    #[test]
    fn hex_torus_mark_decomposition() {
        let s = builders::flat_torus(c(1.0, 0.0), c(0.5, 0.75f64.sqrt()), &[c(0.6, 0.4)]).unwrap();
        let dec = decompose(&s).unwrap();
        assert_eq!(dec.segments.len(), 3, "lengths: {:?}", dec.segments.iter().map(|x| x.length).collect::<Vec<_>>());
        let polys: Vec<_> = dec
            .components
            .iter()
            .filter(|cmp| matches!(cmp.kind, ComponentType::Polygon { .. }))
            .collect();
        assert_eq!(polys.len(), 2);
        assert!(polys.iter().all(|cmp| cmp.sides == 3));
        assert_eq!(dec.t, 2);
        assert!(dec.identity_ok);
    }

    #[test]
    fn cushion_segments() {
        let s = builders::cushion(1.0).unwrap();
        let apx = apexes(&s);
        let segs = delaunay_segments(&s, &apx).unwrap();
        assert_eq!(segs.len(), 4, "got {} segments", segs.len());
        for seg in &segs {
            assert!((seg.length - 1.0).abs() < 1e-7);
        }
    }
}

// ---------------------------------------------------------------------------
// Components
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ComponentType {
    Polygon { sides: usize },
    ReebFinite { sides: usize },
    ReebSemiInfinite,
    TranslationSemiInfinite,
    AntiConical,
    Swath,
}

#[derive(Debug, Clone, Serialize)]
pub struct DelaunayComponent {
    pub kind: ComponentType,
    pub sides: usize,
    /// Singularity record owning the component, for exterior types.
    pub record: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DelaunayDecomposition {
    pub segments: Vec<DelaunaySegment>,
    pub components: Vec<DelaunayComponent>,
    pub t: i64,
    pub beta: i64,
    pub genus: i64,
    pub n: i64,
    pub identity_ok: bool,
    pub segment_bound_ok: bool,
}

/// One end of a segment at an apex, with its lifted angular coordinate.
#[derive(Debug, Clone, Copy)]
struct SegEnd {
    seg: usize,
    /// 0 = the `endpoints.0` end, 1 = the other.
    end: usize,
    apex: usize,
    /// Lifted angle of the outgoing direction at the apex (mod cone angle
    /// for finite vertices, linear for foci).
    angle: f64,
}

/// Angular data of the apexes: total angle for cyclic ones, None for foci.
fn apex_total_angle(apex: &Apex) -> Option<f64> {
    match &apex.site {
        ApexSite::Vertex { cycle } => Some(cycle.angle),
        ApexSite::Mark { .. } => Some(TAU),
        ApexSite::Focus { .. } => None,
    }
}

/// Lifted angle of a direction `d` leaving the apex inside the wedge of
/// corner `j` of its cycle.
fn vertex_lifted_angle(
    surface: &Surface,
    cycle: &VertexCycle,
    piece: PieceId,
    at: C,
    d: C,
) -> Option<f64> {
    let mut offset = 0.0;
    let scale = surface.scale();
    for (cnr, pos) in cycle.corners.iter().zip(&cycle.positions) {
        let edges = surface.edges_of(cnr.piece);
        let dout = edges[cnr.edge_out].dir;
        let din = -edges[cnr.edge_in].dir;
        let a0 = dout.arg();
        let mut spread = (din.arg() - a0).rem_euclid(TAU);
        if spread <= 1e-9 {
            spread = TAU;
        }
        if cnr.piece == piece && (pos - at).norm() < 1e-6 * (1.0 + scale) {
            let rel = (d.arg() - a0).rem_euclid(TAU);
            if rel <= spread + 1e-6 {
                return Some(offset + rel);
            }
        }
        offset += spread;
    }
    None
}

/// Ends of all segments with lifted angles at their apexes.
fn segment_ends(
    surface: &Surface,
    apex_list: &[Apex],
    segments: &[DelaunaySegment],
) -> Result<Vec<SegEnd>, DelaunayError> {
    let mut out = Vec::new();
    for (si, seg) in segments.iter().enumerate() {
        if seg.path.is_empty() {
            return Err(DelaunayError::UnclassifiedComponent(format!(
                "segment {si} has no path"
            )));
        }
        for end in 0..2usize {
            let apex_id = if end == 0 { seg.endpoints.0 } else { seg.endpoints.1 };
            let apex = &apex_list[apex_id];
            // Outgoing data at this end from the path polyline.
            let (piece, at, d) = end_direction(seg, end)?;
            let angle = match &apex.site {
                ApexSite::Vertex { cycle } => vertex_lifted_angle(surface, cycle, piece, at, d)
                    .ok_or_else(|| {
                        DelaunayError::UnclassifiedComponent(format!(
                            "segment {si} end {end} direction not in any wedge"
                        ))
                    })?,
                ApexSite::Mark { .. } => d.arg().rem_euclid(TAU),
                ApexSite::Focus { .. } => at.im,
            };
            out.push(SegEnd { seg: si, end, apex: apex_id, angle });
        }
    }
    Ok(out)
}

/// Position and outgoing direction (in piece coordinates) of a segment end.
fn end_direction(seg: &DelaunaySegment, end: usize) -> Result<(PieceId, C, C), DelaunayError> {
    let err = || DelaunayError::UnclassifiedComponent("degenerate segment path".into());
    if end == 0 {
        let (piece, pts) = seg.path.first().ok_or_else(err)?;
        if pts.len() < 2 {
            return Err(err());
        }
        let d = pts[1] - pts[0];
        Ok((*piece, pts[0], d / d.norm()))
    } else {
        let (piece, pts) = seg.path.last().ok_or_else(err)?;
        if pts.len() < 2 {
            return Err(err());
        }
        let a = pts[pts.len() - 2];
        let b = pts[pts.len() - 1];
        let d = a - b;
        Ok((*piece, b, d / d.norm()))
    }
}

/// A directed segment side: travels the segment from `end` toward the other
/// endpoint with its face on the left.
#[derive(Clone, Copy, PartialEq, Debug)]
struct DSide {
    seg: usize,
    end: usize,
}

/// Face walk over directed segment sides.
pub fn components(
    surface: &Surface,
    apex_list: &[Apex],
    segments: &[DelaunaySegment],
) -> Result<DelaunayDecomposition, DelaunayError> {
    let ends = segment_ends(surface, apex_list, segments)?;
    // Group ends per apex, sorted by angle.
    let mut per_apex: Vec<Vec<usize>> = vec![Vec::new(); apex_list.len()];
    for (i, e) in ends.iter().enumerate() {
        per_apex[e.apex].push(i);
    }
    for list in &mut per_apex {
        list.sort_by(|&a, &b| ends[a].angle.total_cmp(&ends[b].angle));
    }
    for (aid, apex) in apex_list.iter().enumerate() {
        if per_apex[aid].is_empty() {
            return Err(DelaunayError::UnclassifiedComponent(format!(
                "apex {aid} ({:?}) is not an endpoint of any segment",
                std::mem::discriminant(&apex.site)
            )));
        }
    }

    // next(directed side): a directed side travels a segment from its `end`
    // toward the other, keeping the face on the LEFT; arriving at the far
    // apex, turn clockwise to the cyclic predecessor end and travel it away.
    // A swath passage happens at a focus when the walk rotates past ±∞.
    let end_index = |seg: usize, end: usize| -> usize {
        ends.iter().position(|e| e.seg == seg && e.end == end).expect("end exists")
    };
    let step = |h: DSide| -> (DSide, bool) {
        // Arrive at the far end of h.seg.
        let far_end = 1 - h.end;
        let far = end_index(h.seg, far_end);
        let apex = ends[far].apex;
        let list = &per_apex[apex];
        let pos = list.iter().position(|&e| e == far).expect("listed");
        let total = apex_total_angle(&apex_list[apex]);
        let k = list.len() as i64;
        let mut idx = pos as i64 - 1;
        let mut swath_passage = false;
        if idx < 0 {
            idx += k;
            if total.is_none() {
                swath_passage = true;
            }
        }
        let next_end = list[idx as usize];
        let e = ends[next_end];
        (DSide { seg: e.seg, end: e.end }, swath_passage)
    };

    // Walk all faces: every directed side is traversed by exactly one face.
    let mut seen: Vec<DSide> = Vec::new();
    let mut faces: Vec<(Vec<DSide>, usize)> = Vec::new(); // sides + swath passages
    for seg in 0..segments.len() {
        for end in 0..2 {
            let start = DSide { seg, end };
            if seen.contains(&start) {
                continue;
            }
            let mut walk = vec![start];
            let mut passages = 0usize;
            let mut cur = start;
            for _ in 0..(4 * segments.len() + 8) {
                let (nxt, passed) = step(cur);
                if passed {
                    passages += 1;
                }
                if nxt == start {
                    break;
                }
                walk.push(nxt);
                cur = nxt;
            }
            for h in &walk {
                seen.push(*h);
            }
            faces.push((walk, passages));
        }
    }

    // Exterior claims: map each non-conical Fuchsian record to a face via a
    // probe geodesic from its standard neighborhood.
    let mut face_claims: Vec<Option<(usize, ComponentType)>> = vec![None; faces.len()];
    for rec in &surface.singularities {
        let kind = exterior_kind(rec);
        let Some(kind) = kind else { continue };
        if matches!(kind, ComponentType::Swath) {
            continue; // swath faces identified by their passages
        }
        let Some((piece, z, v)) = exterior_probe(surface, rec) else {
            return Err(DelaunayError::UnclassifiedComponent(format!(
                "no probe for record {}",
                rec.id
            )));
        };
        let Some(from_side) = first_crossing(surface, segments, piece, z, v) else {
            return Err(DelaunayError::UnclassifiedComponent(format!(
                "probe for record {} crossed no segment",
                rec.id
            )));
        };
        if let Some(fi) = faces.iter().position(|(walk, _)| walk.contains(&from_side)) {
            face_claims[fi] = Some((rec.id, kind.clone()));
        } else {
            return Err(DelaunayError::UnclassifiedComponent(format!(
                "record {} probe side unclaimed",
                rec.id
            )));
        }
    }

    // Assemble components.
    let mut components = Vec::new();
    let mut t: i64 = 0;
    let mut beta: i64 = 0;
    for (fi, (walk, passages)) in faces.iter().enumerate() {
        let sides = walk.len();
        if *passages > 0 {
            // Swath domain: find the irregular record.
            let rec = surface.singularities.iter().find(|r| r.order >= 2).map(|r| r.id);
            components.push(DelaunayComponent {
                kind: ComponentType::Swath,
                sides,
                record: rec,
            });
            beta += sides as i64;
        } else if let Some((rec, kind)) = &face_claims[fi] {
            components.push(DelaunayComponent { kind: kind.clone(), sides, record: Some(*rec) });
            beta += sides as i64;
        } else {
            components.push(DelaunayComponent {
                kind: ComponentType::Polygon { sides },
                sides,
                record: None,
            });
            t += sides as i64 - 2;
        }
    }

    let g = surface.genus;
    let n = surface.total_multiplicity();
    let identity_ok = t + beta == 4 * g - 4 + 2 * n;
    let segment_bound_ok = (segments.len() as i64) <= 6 * g - 6 + 3 * n;
    Ok(DelaunayDecomposition {
        segments: segments.to_vec(),
        components,
        t,
        beta,
        genus: g,
        n,
        identity_ok,
        segment_bound_ok,
    })
}

fn exterior_kind(rec: &crate::surface::SingularityRecord) -> Option<ComponentType> {
    if rec.order >= 2 {
        return Some(ComponentType::Swath);
    }
    if rec.order == 0 {
        return None;
    }
    let rho = rec.residue;
    if rho.re < 1.0 - 1e-9 {
        return None; // conical
    }
    if (rho.re - 1.0).abs() <= 1e-9 {
        if rho.im.abs() <= 1e-9 {
            Some(ComponentType::TranslationSemiInfinite)
        } else {
            Some(ComponentType::ReebSemiInfinite)
        }
    } else {
        Some(ComponentType::AntiConical)
    }
}

/// A start state inside the record's standard neighborhood pointing toward
/// the core.
fn exterior_probe(surface: &Surface, rec: &crate::surface::SingularityRecord) -> Option<(PieceId, C, C)> {
    if let SingLocation::Ends { ends } = &rec.location {
        for (piece, kind) in ends {
            match kind {
                EndKind::FlatDirection { dir } => {
                    // Far out toward the end, heading back.
                    let region = &surface.pieces[*piece].region;
                    let vs = region.vertices();
                    let base = if vs.is_empty() {
                        c(0.0, 0.0)
                    } else {
                        vs.iter().sum::<C>() / c(vs.len() as f64, 0.0)
                    };
                    let far = base + dir * (8.0 * (1.0 + surface.scale()));
                    if region.contains(far, 0.0) {
                        return Some((*piece, far, -dir * c(1.0, 0.13)));
                    }
                }
                EndKind::LogRight => {
                    let region = &surface.pieces[*piece].region;
                    let far = c(6.0 * (1.0 + surface.scale()), 0.4);
                    if region.contains(far, 0.0) {
                        return Some((*piece, far, c(-1.0, 0.1)));
                    }
                }
                EndKind::LogLeft => {}
            }
        }
    }
    None
}

/// First crossing of a probe geodesic with any segment path: the directed
/// side whose face the probe came from.
fn first_crossing(
    surface: &Surface,
    segments: &[DelaunaySegment],
    piece: PieceId,
    z: C,
    v: C,
) -> Option<DSide> {
    let res = trace(
        surface,
        GeodesicState { piece, position: z, velocity: v, time: 0.0 },
        TraceOptions { t_max: 1e5, detect_closure: false, ..Default::default() },
    )
    .ok()?;
    let mut best: Option<(f64, DSide)> = None;
    let mut travelled = 0.0f64;
    for (pc, pts) in &res.polyline {
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            for (si, seg) in segments.iter().enumerate() {
                for (sp, spts) in &seg.path {
                    if sp != pc {
                        continue;
                    }
                    for sw in spts.windows(2) {
                        if let Some((tt, _uu)) = segment_intersection(a, b, sw[0], sw[1]) {
                            let dist = travelled + tt * (b - a).norm();
                            // The probe crosses the path (oriented from its
                            // end 0 to end 1): coming from the right of the
                            // path means the face-left of the reverse travel.
                            let from_right = cross(sw[1] - sw[0], b - a) > 0.0;
                            let came_from = if from_right {
                                DSide { seg: si, end: 1 }
                            } else {
                                DSide { seg: si, end: 0 }
                            };
                            if best.map(|(bd, _)| dist < bd).unwrap_or(true) {
                                best = Some((dist, came_from));
                            }
                        }
                    }
                }
            }
            travelled += (b - a).norm();
        }
    }
    best.map(|(_, side)| side)
}

/// Intersection parameters of open segments (a,b) and (p,q).
pub fn segment_intersection(a: C, b: C, p: C, q: C) -> Option<(f64, f64)> {
    let r = b - a;
    let s = q - p;
    let den = cross(r, s);
    if den.abs() < 1e-14 * (r.norm() * s.norm()).max(1e-300) {
        return None;
    }
    let t = cross(p - a, s) / den;
    let u = cross(p - a, r) / den;
    let eps = 1e-9;
    if t > eps && t < 1.0 - eps && u > eps && u < 1.0 - eps {
        Some((t, u))
    } else {
        None
    }
}

/// Verify the segment set: pairwise disjoint interiors and no
/// self-crossings, at geometric tolerance.
pub fn verify_disjointness(segments: &[DelaunaySegment]) -> bool {
    for (i, s1) in segments.iter().enumerate() {
        for (j, s2) in segments.iter().enumerate() {
            if j < i {
                continue;
            }
            for (p1, pts1) in &s1.path {
                for w1 in pts1.windows(2) {
                    for (p2, pts2) in &s2.path {
                        if p1 != p2 {
                            continue;
                        }
                        for w2 in pts2.windows(2) {
                            if i == j && w1[0] == w2[0] && w1[1] == w2[1] {
                                continue;
                            }
                            if segment_intersection(w1[0], w1[1], w2[0], w2[1]).is_some() {
                                return false;
                            }
                        }
                    }
                }
            }
        }
    }
    true
}

/// Run the full decomposition.
pub fn decompose(surface: &Surface) -> Result<DelaunayDecomposition, DelaunayError> {
    let (exceptional, _) = is_exceptional(surface);
    if exceptional {
        return Err(DelaunayError::ExceptionalSkip { complexity: surface.complexity() });
    }
    let apex_list = apexes(surface);
    let segments = delaunay_segments(surface, &apex_list)?;
    components(surface, &apex_list, &segments)
}
