//! Sector grafting: insert an angle-θ, dilation-s sector (or, for infinite
//! angle, two exponential half-planes) along a geodesic slit running from a
//! conical point or marked point out to an infinite-time singularity.
//!
//! The surgery shifts the endpoint residues by `∓(log s + iθ)/(2πi)`; the
//! infinite variant merges the endpoints into one singularity of order
//! `d₂ + 1` and residue `res₁ + res₂`.

use std::f64::consts::{PI, TAU};

use crate::affine::{c, AffineMap, C, I};
use crate::error::GraftError;
use crate::geometry::{cross, dot, HalfPlane, Region};
use crate::surface::{
    corner_at, EdgeRef, EndKind, Pairing, Piece, PieceId, PieceKind, SingLocation,
    SingularityRecord, Surface,
};

/// A slit for grafting: a straight ray inside one flat piece, starting at
/// `from` (a vertex, mark, or edge point) in direction `dir`, running to the
/// piece's ideal end.
#[derive(Debug, Clone, Copy)]
pub struct SlitRay {
    pub piece: PieceId,
    pub from: C,
    pub dir: C,
}

/// Residue shift of the slit base under a graft of angle `theta` and
/// dilation `s`: `-(log s + iθ)/(2πi)`.
pub fn base_residue_shift(theta: f64, dilation: f64) -> C {
    c(-theta / TAU, dilation.ln() / TAU)
}

pub fn graft_sector(
    surface: &Surface,
    slit: SlitRay,
    theta: Option<f64>,
    dilation: f64,
) -> Result<Surface, GraftError> {
    let p = &surface.pieces[slit.piece];
    if p.kind != PieceKind::Flat {
        return Err(GraftError::BadEndpointType("slit must lie in a flat piece".into()));
    }
    let u = slit.dir / slit.dir.norm();
    let scale = 1.0 + surface.scale();
    // The ray must stay inside the piece (it then is a geodesic with no
    // self-crossing).
    for h in &p.region.halfplanes {
        if h.side(slit.from) < -1e-9 * scale {
            return Err(GraftError::SlitNotGeodesic);
        }
        if dot(u, h.n) < -1e-12 && h.side(slit.from) < 1e-9 * scale {
            return Err(GraftError::SlitNotGeodesic);
        }
        if dot(u, h.n) < -1e-12 {
            // The constraint eventually stops the ray.
            return Err(GraftError::SlitNotGeodesic);
        }
    }

    // Identify the base singularity S1: a corner vertex, an interior mark, or
    // an edge mark.
    let s1 = find_base_record(surface, slit.piece, slit.from)
        .ok_or_else(|| GraftError::BadEndpointType("slit base carries no singularity".into()))?;
    if surface.singularities[s1].order >= 1
        && surface.singularities[s1]
            .cone
            .is_none()
    {
        return Err(GraftError::BadEndpointType("slit base must be conical or marked".into()));
    }
    // Identify the far singularity S2: the ideal end of the piece in
    // direction `dir`.
    let s2 = find_end_record(surface, slit.piece, u)
        .ok_or_else(|| GraftError::BadEndpointType("slit tail reaches no recorded end".into()))?;
    if s1 == s2 {
        return Err(GraftError::BadEndpointType("slit endpoints coincide".into()));
    }
    {
        let rec2 = &surface.singularities[s2];
        let reeb = rec2.order == 1
            && (rec2.residue.re - 1.0).abs() < 1e-9
            && rec2.residue.im.abs() > 1e-9;
        if reeb || (rec2.order == 1 && rec2.residue.re < 1.0 - 1e-9) {
            return Err(GraftError::BadEndpointType(
                "slit tail singularity must be non-conical and non-Reeb".into(),
            ));
        }
    }

    // ---------------------------------------------------------------------
    // Cut the piece along the full line through the slit.
    // ---------------------------------------------------------------------
    let n_left = I * u;
    let mut pieces: Vec<Piece> = surface.pieces.clone();
    let mut pairings: Vec<Pairing> = surface.pairings.clone();
    let left_id = slit.piece; // reuse the id for the left half
    let right_id = pieces.len();
    let mut left = Piece::new(
        left_id,
        PieceKind::Flat,
        p.region.with(HalfPlane::new(slit.from, n_left)),
    );
    let mut right = Piece::new(
        right_id,
        PieceKind::Flat,
        p.region.with(HalfPlane::new(slit.from, -n_left)),
    );
    let cut_hp_left = left.region.halfplanes.len() - 1;
    let cut_hp_right = right.region.halfplanes.len() - 1;

    // Where does the cut line leave the piece backwards?
    let mut t_back = f64::NEG_INFINITY; // cut-line parameter (along u) of the back end
    let mut back_hp: Option<usize> = None;
    for (hi, h) in p.region.halfplanes.iter().enumerate() {
        let sn = dot(u, h.n);
        if sn > 1e-12 {
            let t0 = -h.side(slit.from) / sn;
            if t0 > t_back {
                t_back = t0;
                back_hp = Some(hi);
            }
        }
    }
    let interior_start = t_back < -1e-9 * scale;
    if t_back > 1e-9 * scale {
        return Err(GraftError::SlitNotGeodesic);
    }
    if !interior_start {
        // The slit base sits on the boundary: no backward cut.
        back_hp = None;
        t_back = 0.0;
    }

    // T-point at the slit base when the cut extends backwards.
    if interior_start {
        left.splits.push((cut_hp_left, split_param(&left, cut_hp_left, slit.from)));
        right.splits.push((cut_hp_right, split_param(&right, cut_hp_right, slit.from)));
    }

    // A slit base sitting mid-edge splits the partner edge of every pairing
    // through it, so the new corner exists on both sides of the seam.
    let mut partner_splits: Vec<(PieceId, usize, f64)> = Vec::new();
    for (ei, e) in surface.edges_of(slit.piece).iter().enumerate() {
        let tb = e.param_of(slit.from);
        if (slit.from - e.at(tb)).norm() > 1e-9 * scale || tb <= e.lo + 1e-9 || tb >= e.hi - 1e-9 {
            continue;
        }
        for span in surface.exits_of(slit.piece, ei) {
            if span.target == slit.piece {
                continue;
            }
            if let Ok(img) = span.transfer.apply(PieceKind::Flat, slit.from) {
                let q_edges = surface.edges_of(span.target);
                if let Some(qe) = q_edges.iter().find(|qe| {
                    let tq = qe.param_of(img);
                    (img - qe.at(tq.clamp(qe.lo, qe.hi))).norm() < 1e-7 * scale
                }) {
                    partner_splits.push((span.target, qe.halfplane, qe.param_of(img)));
                }
            }
        }
    }
    for (piece_id, hp, tq) in partner_splits {
        pieces[piece_id].splits.push((hp, tq));
    }

    // Redistribute original pairings touching the cut piece: each side of a
    // pairing that referenced an edge of `p` now references the matching
    // (sub-)edge of `left` or `right`; edges crossed by the cut line split
    // between the two halves, and their partners get a matching split.
    let old_edges = p.boundary_edges();
    let back_cross = back_hp.map(|hb| {
        let pt = slit.from + u * t_back;
        (hb, pt)
    });
    // Split the partner edge of a crossed edge.
    if let Some((hb, pt)) = back_cross {
        if let Some((old_e_idx, _)) = old_edges
            .iter()
            .enumerate()
            .find(|(_, e)| e.halfplane == hb && e.param_of(pt) >= e.lo - 1e-9 && e.param_of(pt) <= e.hi + 1e-9)
        {
            // Mark the partner's split; the re-indexing below rebuilds the
            // pairings against sub-edges.
            for pr in surface.pairings.iter() {
                for (this, that) in [(pr.side1, pr.side2), (pr.side2, pr.side1)] {
                    if this.piece == slit.piece && this.edge == old_e_idx {
                        if that.piece == slit.piece {
                            continue; // self-pairings resolved by geometry below
                        }
                        // Image of the crossing point on the partner edge.
                        let span = surface
                            .exits_of(this.piece, this.edge)
                            .iter()
                            .find(|s| {
                                s.target == that.piece
                            })
                            .expect("compiled span");
                        if let Ok(img) = span.transfer.apply(PieceKind::Flat, pt) {
                            let q = &mut pieces[that.piece];
                            let e_hp = q.boundary_edges()[that.edge].halfplane;
                            let tq = param_on_hp(q, e_hp, img);
                            q.splits.push((e_hp, tq));
                        }
                    }
                }
            }
        }
    }

    pieces[left_id] = left.clone();
    pieces.push(right.clone());

    // Rebuild every pairing side that referenced the cut piece by matching
    // edge geometry: for each old sub-edge, find which half (or both, when
    // split by the cut) carries it now.
    let mut rebuilt: Vec<Pairing> = Vec::new();
    for (pi, pr) in pairings.drain(..).enumerate() {
        rebuilt.extend(redistribute_pairing(
            surface, &pieces, pi, pr, slit.piece, left_id, right_id,
        )?);
    }
    let mut pairings = rebuilt;

    // Re-glue the backward part of the cut line (identity).
    if interior_start || back_cross.is_some() {
        let le = edge_index_on(&pieces[left_id], cut_hp_left, slit.from - u * 1.0, interior_start);
        let re = edge_index_on(&pieces[right_id], cut_hp_right, slit.from - u * 1.0, interior_start);
        if let (Some(le), Some(re)) = (le, re) {
            pairings.push(Pairing {
                side1: EdgeRef { piece: left_id, edge: le },
                side2: EdgeRef { piece: right_id, edge: re },
                dev: AffineMap::identity(),
                anchor: None,
                interval1: None,
                interval2: None,
            });
        }
    }

    // The slit sub-edges (forward part of the cut).
    let slit_left = edge_index_on(&pieces[left_id], cut_hp_left, slit.from + u * 1.0, true)
        .ok_or_else(|| GraftError::BadEndpointType("left slit edge missing".into()))?;
    let slit_right = edge_index_on(&pieces[right_id], cut_hp_right, slit.from + u * 1.0, true)
        .ok_or_else(|| GraftError::BadEndpointType("right slit edge missing".into()))?;

    let mut singularities = surface.singularities.clone();
    let mut genus = surface.genus;
    let _ = &mut genus;

    match theta {
        Some(theta) => {
            // Chain of flat sectors of opening ≤ π/2 covering angle θ.
            let k = (theta / (PI / 2.0)).ceil().max(1.0) as usize;
            let step = theta / k as f64;
            let first_sector = pieces.len();
            for j in 0..k {
                let id = pieces.len();
                let _ = j;
                pieces.push(Piece::new(id, PieceKind::Flat, Region::sector(c(0.0, 0.0), 0.0, step)));
            }
            // Chain gluings: rotate by -step crossing upward.
            let rot = c(step.cos(), -step.sin());
            for j in 0..k - 1 {
                let a_id = first_sector + j;
                let b_id = first_sector + j + 1;
                let upper = edge_on_hp(&pieces[a_id], 1);
                let lower = edge_on_hp(&pieces[b_id], 0);
                pairings.push(Pairing {
                    side1: EdgeRef { piece: a_id, edge: upper },
                    side2: EdgeRef { piece: b_id, edge: lower },
                    dev: AffineMap::new(rot, c(0.0, 0.0)),
                    anchor: None,
                    interval1: None,
                    interval2: None,
                });
            }
            // Right bank ↔ sector ray arg 0: (r,0) ~ γ(r).
            let g_right = AffineMap::new(c(1.0, 0.0) / u, -slit.from / u);
            pairings.push(Pairing {
                side1: EdgeRef { piece: right_id, edge: slit_right },
                side2: EdgeRef { piece: first_sector, edge: edge_on_hp(&pieces[first_sector], 0) },
                dev: g_right,
                anchor: None,
                interval1: None,
                interval2: None,
            });
            // Left bank ↔ last sector's upper ray: (s·r, θ) ~ γ(r).
            let last = first_sector + k - 1;
            let a = c(dilation * step.cos(), dilation * step.sin()) / u;
            let g_left = AffineMap::new(a, -slit.from * a);
            pairings.push(Pairing {
                side1: EdgeRef { piece: left_id, edge: slit_left },
                side2: EdgeRef { piece: last, edge: edge_on_hp(&pieces[last], 1) },
                dev: g_left,
                anchor: None,
                interval1: None,
                interval2: None,
            });
            // Residue updates.
            let shift = base_residue_shift(theta, dilation);
            singularities[s1].residue += shift;
            if let Some((angle, factor)) = singularities[s1].cone {
                singularities[s1].cone = Some((angle + theta, factor * dilation));
            }
            if singularities[s1].order == 0 && (theta.abs() > 1e-12 || (dilation - 1.0).abs() > 1e-12) {
                singularities[s1].order = 1;
            }
            if let SingLocation::Interior { piece: ip, z } = singularities[s1].location {
                if ip == slit.piece {
                    // Relocated positionally after the rebuild.
                    singularities[s1].location = SingLocation::Interior { piece: ip, z };
                }
            }
            singularities[s2].residue -= shift;
        }
        None => {
            // Infinite angle: two log half-planes, tops to the left bank,
            // bottoms to the right.
            let up_id = pieces.len();
            pieces.push(Piece::new(
                up_id,
                PieceKind::Log,
                Region::half_plane(c(0.0, 0.0), c(0.0, 1.0)),
            ));
            let low_id = pieces.len();
            pieces.push(Piece::new(
                low_id,
                PieceKind::Log,
                Region::half_plane(c(0.0, 0.0), c(0.0, -1.0)),
            ));
            let g = AffineMap::new(c(1.0, 0.0) / u, -slit.from / u);
            for (bank_id, bank_edge, log_id) in
                [(left_id, slit_left, up_id), (right_id, slit_right, low_id)]
            {
                pairings.push(Pairing {
                    side1: EdgeRef { piece: bank_id, edge: bank_edge },
                    side2: EdgeRef { piece: log_id, edge: 0 },
                    dev: g,
                    anchor: Some((slit.from + u, c(0.0, 0.0))),
                    interval1: None,
                    interval2: None,
                });
            }
            // Merge the records.
            let res1 = singularities[s1].residue;
            let rec2 = singularities[s2].clone();
            let mut ends = vec![
                (up_id, EndKind::LogLeft),
                (low_id, EndKind::LogLeft),
                (up_id, EndKind::LogRight),
                (low_id, EndKind::LogRight),
            ];
            if let SingLocation::Ends { ends: old } = &rec2.location {
                ends.extend(old.iter().cloned());
            }
            let merged = SingularityRecord {
                id: 0,
                location: SingLocation::Ends { ends },
                order: rec2.order + 1,
                residue: res1 + rec2.residue,
                cone: None,
                family: None,
                shifted: None,
            };
            let mut keep: Vec<SingularityRecord> = singularities
                .into_iter()
                .filter(|r| r.id != s1 && r.id != s2)
                .collect();
            keep.push(merged);
            for (i, r) in keep.iter_mut().enumerate() {
                r.id = i;
            }
            singularities = keep;
        }
    }

    let mut out = Surface::new(pieces, pairings, singularities, genus)
        .map_err(|e| GraftError::BadEndpointType(format!("rebuilt surface invalid: {e}")))?;
    out.atlas = surface.atlas || theta.is_none();
    out.traps = Vec::new();
    relocate_corner_records(&mut out, surface, slit.piece, left_id, right_id);
    Ok(out)
}

/// Corner records keep (piece, corner-index) addresses; after the surgery,
/// re-resolve them positionally (the cut piece's corners moved to the two
/// halves, and partner-edge splits shift corner indices).
fn relocate_corner_records(out: &mut Surface, old: &Surface, cut: PieceId, left: PieceId, right: PieceId) {
    let mut updates: Vec<(usize, SingLocation)> = Vec::new();
    for rec in &out.singularities {
        let (old_piece, z) = match rec.location {
            SingLocation::Corner { piece, corner } => {
                let Some(pos) = old
                    .pieces
                    .get(piece)
                    .map(|p| p.boundary_edges())
                    .and_then(|edges| edges.get(corner).and_then(|e| e.end()))
                else {
                    continue;
                };
                (piece, pos)
            }
            SingLocation::Interior { piece, z } if rec.order >= 1 && piece == cut => (piece, z),
            _ => continue,
        };
        let candidates: Vec<PieceId> =
            if old_piece == cut { vec![left, right] } else { vec![old_piece] };
        for cand in candidates {
            if let Some(idx) = corner_at(out, cand, z) {
                updates.push((rec.id, SingLocation::Corner { piece: cand, corner: idx }));
                break;
            }
        }
    }
    for (id, loc) in updates {
        if let Some(rec) = out.singularities.iter_mut().find(|r| r.id == id) {
            rec.location = loc;
        }
    }
}

/// Mark a regular point so a graft can start there.
pub fn add_mark(surface: &mut Surface, piece: PieceId, z: C) -> usize {
    let id = surface.singularities.len();
    surface.singularities.push(SingularityRecord {
        id,
        location: SingLocation::Interior { piece, z },
        order: 0,
        residue: c(0.0, 0.0),
        cone: Some((TAU, 1.0)),
        family: None,
        shifted: None,
    });
    id
}

fn find_base_record(surface: &Surface, piece: PieceId, z: C) -> Option<usize> {
    let scale = 1.0 + surface.scale();
    // Interior or edge mark?
    for rec in &surface.singularities {
        if let SingLocation::Interior { piece: p, z: w } = rec.location {
            if p == piece && (w - z).norm() < 1e-7 * scale {
                return Some(rec.id);
            }
        }
    }
    // A corner of this piece matching a vertex record.
    let corner = corner_at(surface, piece, z)?;
    let cycles = crate::surface::vertex_cycles(surface);
    for rec in &surface.singularities {
        if let SingLocation::Corner { piece: rp, corner: rc } = rec.location {
            for cyc in &cycles {
                let has_rec = cyc.corners.iter().any(|c| c.piece == rp && c.edge_in == rc);
                let has_here = cyc.corners.iter().any(|c| c.piece == piece && c.edge_in == corner);
                if has_rec && has_here {
                    return Some(rec.id);
                }
            }
        }
    }
    None
}

fn find_end_record(surface: &Surface, piece: PieceId, dir: C) -> Option<usize> {
    for rec in &surface.singularities {
        if let SingLocation::Ends { ends } = &rec.location {
            for (p, kind) in ends {
                if *p != piece {
                    continue;
                }
                match kind {
                    EndKind::FlatDirection { dir: d } => {
                        if dot(*d, dir) > 1e-9 && cross(*d, dir).abs() < 0.999 * d.norm() * dir.norm() + 1.0
                        {
                            // Same open half of directions is enough: the ray
                            // escapes toward this end.
                            if dot(*d, dir) / (d.norm() * dir.norm()) > 0.1 {
                                return Some(rec.id);
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    None
}

fn split_param(piece: &Piece, hp: usize, z: C) -> f64 {
    let h = &piece.region.halfplanes[hp];
    let dir = h.dir();
    dot(z - h.p, dir)
}

fn param_on_hp(piece: &Piece, hp: usize, z: C) -> f64 {
    split_param(piece, hp, z)
}

/// Edge index of the sub-edge of half-plane `hp` containing the probe point
/// direction; `forward` distinguishes the sub-edge ahead of a split.
fn edge_index_on(piece: &Piece, hp: usize, probe: C, _forward: bool) -> Option<usize> {
    let edges = piece.boundary_edges();
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in edges.iter().enumerate() {
        if e.halfplane != hp {
            continue;
        }
        let t = e.param_of(probe);
        let d = if t < e.lo {
            e.lo - t
        } else if t > e.hi {
            t - e.hi
        } else {
            0.0
        };
        if best.map(|(_, bd)| d < bd).unwrap_or(true) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

fn edge_on_hp(piece: &Piece, hp: usize) -> usize {
    piece
        .boundary_edges()
        .iter()
        .position(|e| e.halfplane == hp)
        .expect("half-plane has a boundary edge")
}

/// Re-point a pairing onto the matching sub-edges after the cut: sides on
/// the cut piece move to the two halves; sides on pieces that received edge
/// splits re-resolve positionally; edges split by the cut emit one pairing
/// per part, matched through the old compiled transfer.
fn redistribute_pairing(
    surface: &Surface,
    pieces: &[Piece],
    pairing_idx: usize,
    pr: Pairing,
    cut_piece: PieceId,
    left_id: PieceId,
    right_id: PieceId,
) -> Result<Vec<Pairing>, GraftError> {
    let scale = 1.0 + surface.scale();
    // Parts of a side in the rebuilt complex: (new edge ref, sample point).
    let enumerate = |side: EdgeRef| -> Vec<(EdgeRef, C)> {
        let e_old = surface.edges_of(side.piece)[side.edge];
        let hosts: Vec<PieceId> =
            if side.piece == cut_piece { vec![left_id, right_id] } else { vec![side.piece] };
        let mut out = Vec::new();
        for host in hosts {
            for (i, e_new) in pieces[host].boundary_edges().iter().enumerate() {
                if e_new.halfplane != e_old.halfplane {
                    continue;
                }
                let lo = e_new.lo.max(e_old.lo);
                let hi = e_new.hi.min(e_old.hi);
                if hi - lo < 1e-9 * scale {
                    continue;
                }
                let flo = if lo.is_finite() { lo } else { hi.min(0.0) - 8.0 * scale };
                let fhi = if hi.is_finite() { hi } else { lo.max(0.0) + 8.0 * scale };
                let sample = e_new.at(0.5 * (flo + fhi));
                out.push((EdgeRef { piece: host, edge: i }, sample));
            }
        }
        out
    };
    if pr.side1.piece != cut_piece
        && pr.side2.piece != cut_piece
        && pieces[pr.side1.piece].splits.len() == surface.pieces[pr.side1.piece].splits.len()
        && pieces[pr.side2.piece].splits.len() == surface.pieces[pr.side2.piece].splits.len()
    {
        return Ok(vec![pr]);
    }
    let span = surface
        .exits_of(pr.side1.piece, pr.side1.edge)
        .iter()
        .find(|s| s.pairing == pairing_idx)
        .ok_or_else(|| GraftError::BadEndpointType("missing compiled span".into()))?;
    let kind1 = surface.pieces[pr.side1.piece].kind;
    let parts1 = enumerate(pr.side1);
    let parts2 = enumerate(pr.side2);
    let mut out = Vec::new();
    for (ref1, s1) in &parts1 {
        let Ok(img) = span.transfer.apply(kind1, *s1) else { continue };
        // Find the part of side2 containing the image.
        let hit = parts2.iter().find(|(ref2, _)| {
            let e = &pieces[ref2.piece].boundary_edges()[ref2.edge];
            let t = e.param_of(img);
            t >= e.lo - 1e-9 * scale
                && t <= e.hi + 1e-9 * scale
                && (img - e.at(t.clamp(e.lo, e.hi))).norm() < 1e-6 * scale
        });
        if let Some((ref2, _)) = hit {
            out.push(Pairing { side1: *ref1, side2: *ref2, ..pr.clone() });
        }
    }
    if out.is_empty() {
        return Err(GraftError::BadEndpointType("pairing lost in the surgery".into()));
    }
    out.dedup_by(|a, b| a.side1 == b.side1 && a.side2 == b.side2);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders;
    use crate::surface::{validate, vertex_residues};

    #[test]
    fn finite_graft_on_skew_cone_shifts_residues() {
        let alpha = 1.1;
        let s0 = 1.7;
        let surface = builders::skew_cone(s0, alpha).unwrap();
        let tip_res = c(1.0 - alpha / TAU, s0.ln() / TAU);
        // Radial slit in piece 0 from the tip to infinity.
        let slit = SlitRay { piece: 0, from: c(0.0, 0.0), dir: c(0.3f64.cos(), 0.3f64.sin()) };
        let theta = 0.8;
        let s_graft = 1.3;
        let grafted = graft_sector(&surface, slit, Some(theta), s_graft).unwrap();
        let report = validate(&grafted);
        assert!(report.ok, "issues: {:?}", report.issues);
        let sum = report.residue_sum.unwrap();
        assert!((sum.0 - 2.0).abs() < 1e-9 && sum.1.abs() < 1e-9, "sum {sum:?}");
        // Tip residue shifted by -(log s + iθ)/2πi.
        let rs = vertex_residues(&grafted);
        assert_eq!(rs.len(), 1);
        let expect = tip_res + base_residue_shift(theta, s_graft);
        assert!((rs[0].1 - expect).norm() < 1e-10, "tip {} expect {expect}", rs[0].1);
        assert_eq!(report.genus, 0);
    }

    #[test]
    fn finite_graft_from_interior_mark_on_cylinder() {
        let mut surface = builders::translation_cylinder(1.0).unwrap();
        let m = add_mark(&mut surface, 0, c(0.5, 0.0));
        let slit = SlitRay { piece: 0, from: c(0.5, 0.0), dir: c(0.0, 1.0) };
        let theta = 2.0;
        let s_graft = 0.7;
        let grafted = graft_sector(&surface, slit, Some(theta), s_graft).unwrap();
        let report = validate(&grafted);
        assert!(report.ok, "issues: {:?}", report.issues);
        let sum = report.residue_sum.unwrap();
        assert!((sum.0 - 2.0).abs() < 1e-9 && sum.1.abs() < 1e-9, "sum {sum:?}");
        // The mark became a cone of angle 2π + θ and factor s.
        let rs = vertex_residues(&grafted);
        assert_eq!(rs.len(), 1);
        let expect = base_residue_shift(theta, s_graft);
        assert!((rs[0].1 - expect).norm() < 1e-10, "marked {} expect {expect}", rs[0].1);
        let _ = m;
    }

    #[test]
    fn infinite_graft_merges_to_double_pole() {
        // Second construction: skew cone, radial slit from a mark to the
        // anti-conical end; merging gives an order-2 pole of residue
        // res_mark + res_infinity, the conical tip untouched.
        let alpha = 0.9;
        let s0 = 2.0;
        let mut surface = builders::skew_cone(s0, alpha).unwrap();
        let tip_res = c(1.0 - alpha / TAU, s0.ln() / TAU);
        let inf_res = c(2.0, 0.0) - tip_res;
        add_mark(&mut surface, 0, c(2.0 * (0.4f64).cos() * 0.0 + 2.0, 0.0) * c(0.45f64.cos(), 0.45f64.sin()));
        let from = c(2.0, 0.0) * c(0.45f64.cos(), 0.45f64.sin());
        let surface = {
            let mut s = builders::skew_cone(s0, alpha).unwrap();
            add_mark(&mut s, 0, from);
            s
        };
        let slit = SlitRay { piece: 0, from, dir: from / from.norm() };
        let grafted = graft_sector(&surface, slit, None, 1.0).unwrap();
        let report = validate(&grafted);
        assert!(report.ok, "issues: {:?}", report.issues);
        // Roster: conical tip + an order-2 pole of residue res_mark + res_inf.
        let pole = grafted
            .singularities
            .iter()
            .find(|r| r.order == 2)
            .expect("merged double pole");
        assert!((pole.residue - inf_res).norm() < 1e-10, "pole {}", pole.residue);
        assert_eq!(grafted.total_multiplicity(), 3); // tip + order-2
        let rs = vertex_residues(&grafted);
        assert_eq!(rs.len(), 1);
        assert!((rs[0].1 - tip_res).norm() < 1e-10);
        let sum: C = rs[0].1 + pole.residue;
        assert!((sum - c(2.0, 0.0)).norm() < 1e-9);
    }
}
