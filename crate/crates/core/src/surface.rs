//! Finite-type affine surfaces as complexes of convex planar pieces, flat or
//! log, glued by maps that are affine at the level of developing coordinates
//! (`dev = z` on flat pieces, `dev = e^w` on log pieces).
//!
//! Classic complexes glue whole edges onto whole edges. Surfaces built from
//! irregular-singularity models additionally use atlas-style pairings, where
//! crossing out of an edge interval lands in the interior of an overlapping
//! chart; both flavors compile to per-edge exit spans used by tracing,
//! validation and the Delaunay engine.


use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::affine::{c, wrap_angle, AffineMap, LogGlue, C};
use crate::config;
use crate::error::SurfaceError;
use crate::geometry::{Edge, HalfPlane, Region};
use crate::irregular::AsymptoticFamily;

pub type PieceId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PieceKind {
    /// Developing coordinate is the piece coordinate itself.
    Flat,
    /// The piece lives in a global log-chart; developing coordinate is `e^w`.
    Log,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Piece {
    pub id: PieceId,
    pub kind: PieceKind,
    pub region: Region,
    /// Subdivision points of boundary edges, as `(halfplane index, edge
    /// parameter)`: the edge splits there into collinear sub-edges meeting at
    /// a straight (angle π) corner. Used by surgeries that attach different
    /// pairings to parts of a line.
    #[serde(default)]
    pub splits: Vec<(usize, f64)>,
}

impl Piece {
    pub fn new(id: PieceId, kind: PieceKind, region: Region) -> Piece {
        Piece { id, kind, region, splits: Vec::new() }
    }

    /// Boundary edges with subdivision applied.
    pub fn boundary_edges(&self) -> Vec<Edge> {
        let mut edges = self.region.edges();
        if self.splits.is_empty() {
            return edges;
        }
        let mut out = Vec::new();
        for e in edges.drain(..) {
            let mut cuts: Vec<f64> = self
                .splits
                .iter()
                .filter(|(hp, t)| *hp == e.halfplane && *t > e.lo + 1e-12 && *t < e.hi - 1e-12)
                .map(|&(_, t)| t)
                .collect();
            cuts.sort_by(f64::total_cmp);
            let mut lo = e.lo;
            for t in cuts {
                out.push(Edge { lo, hi: t, ..e });
                lo = t;
            }
            out.push(Edge { lo, ..e });
        }
        out
    }
}

impl Piece {
    pub fn dev(&self, z: C) -> C {
        match self.kind {
            PieceKind::Flat => z,
            PieceKind::Log => z.exp(),
        }
    }

    /// Developed velocity of a tangent vector at `z`.
    pub fn dev_velocity(&self, z: C, v: C) -> C {
        match self.kind {
            PieceKind::Flat => v,
            PieceKind::Log => z.exp() * v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRef {
    pub piece: PieceId,
    pub edge: usize,
}

/// How a developed point is pulled back into the target piece's coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Pullback {
    /// Target flat: `z' = dev`.
    Flat,
    /// Log to log with zero developed offset: `w' = w + s` (branch included).
    LogShift { s: C },
    /// Log to log in general: `w' = G_{s,b}(w) + 2πik`.
    LogGlued { glue: LogGlue, k: i64 },
    /// Into a log piece along a horizontal edge of constant imaginary part:
    /// `w' = ln|dev| + i·im`. Only valid on the matched edge.
    LogHorizontal { im: f64 },
}

/// A compiled one-way crossing: developed map plus pullback rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    /// Affine map on developing coordinates.
    pub dev: AffineMap,
    pub pullback: Pullback,
}

impl Transfer {
    pub fn apply(&self, source_kind: PieceKind, z: C) -> Result<C, crate::error::AffineError> {
        let x = match source_kind {
            PieceKind::Flat => z,
            PieceKind::Log => z.exp(),
        };
        match self.pullback {
            Pullback::Flat => Ok(self.dev.apply(x)),
            Pullback::LogShift { s } => Ok(z + s),
            Pullback::LogGlued { glue, k } => {
                Ok(glue.apply(z)? + c(0.0, TAU * k as f64))
            }
            Pullback::LogHorizontal { im } => {
                let y = self.dev.apply(x);
                Ok(c(y.norm().ln(), im))
            }
        }
    }

    /// Transport a developed velocity.
    pub fn apply_velocity(&self, w: C) -> C {
        self.dev.a * w
    }
}

/// A declared gluing between two piece sides. `interval*` restricts the part
/// of each edge that exits through this pairing (atlas-style charts); `None`
/// means the whole edge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pairing {
    pub side1: EdgeRef,
    pub side2: EdgeRef,
    /// Developed map from side1's developing chart to side2's.
    pub dev: AffineMap,
    /// Matched point pair `(z1, z2)` in piece coordinates, pinning log
    /// branches. Required whenever either side is a log piece.
    pub anchor: Option<(C, C)>,
    pub interval1: Option<(f64, f64)>,
    pub interval2: Option<(f64, f64)>,
}

/// Per-edge compiled exit: crossing `edge` at parameter `t ∈ [t0, t1]` lands
/// in `target` via `transfer`.
#[derive(Debug, Clone)]
pub struct ExitSpan {
    pub t0: f64,
    pub t1: f64,
    pub target: PieceId,
    pub transfer: Transfer,
    pub pairing: usize,
}

/// Where a singularity lives on the complex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SingLocation {
    /// A marked point in the interior of a piece.
    Interior { piece: PieceId, z: C },
    /// A finite vertex, identified by one of its corners (piece, corner
    /// index). Corner `i` of a piece sits between boundary edges `i` and
    /// `i+1` in counterclockwise order.
    Corner { piece: PieceId, corner: usize },
    /// An ideal end of one or more pieces.
    Ends { ends: Vec<(PieceId, EndKind)> },
}

/// Kinds of ideal piece ends that carry singularities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EndKind {
    /// `Re w → -∞` in a log piece: a focus of an irregular singularity, or
    /// the regular center of an exponential-affine chart.
    LogLeft,
    /// `Re w → +∞` in a log piece: a swath / the irregular pole direction,
    /// or an anti-conical point.
    LogRight,
    /// Unbounded flat direction (unit vector): cylindrical ends and the like.
    FlatDirection { dir: C },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityRecord {
    pub id: usize,
    pub location: SingLocation,
    /// 0 = marked point, 1 = Fuchsian, d ≥ 2 = irregular.
    pub order: u32,
    pub residue: C,
    /// Cone data `(angle, factor)` for conical points, where known.
    pub cone: Option<(f64, f64)>,
    /// Asymptotic family for irregular singularities.
    pub family: Option<AsymptoticFamily>,
    /// Optional disambiguation for anti-conical residues in `{2,3,…}`.
    pub shifted: Option<bool>,
}

impl SingularityRecord {
    /// Multiplicity in the singularity count `n`: marked points count 1.
    pub fn multiplicity(&self) -> i64 {
        (self.order as i64).max(1)
    }
}

/// Membership test of a declared trap region.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TrapTest {
    /// Half-plane constraints in this piece's own coordinates (empty list:
    /// the whole piece).
    Region(Vec<HalfPlane>),
    /// Apply `transfer` to the point first and test in the target chart.
    Mapped { transfer: Transfer, source_kind: PieceKind, region: Vec<HalfPlane> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrapMember {
    pub piece: PieceId,
    pub test: TrapTest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trap {
    pub id: usize,
    pub label: String,
    pub members: Vec<TrapMember>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Surface {
    pub pieces: Vec<Piece>,
    pub pairings: Vec<Pairing>,
    pub singularities: Vec<SingularityRecord>,
    pub traps: Vec<Trap>,
    /// Declared genus. For classic complexes `validate` recomputes and
    /// cross-checks it from the cell counts.
    pub genus: i64,
    /// True when the complex contains atlas-style overlapping charts, in
    /// which case cell-counting invariants are skipped.
    pub atlas: bool,
    #[serde(skip)]
    compiled: Option<Compiled>,
}

#[derive(Debug, Clone, Default)]
struct Compiled {
    edges: Vec<Vec<Edge>>,
    exits: Vec<Vec<Vec<ExitSpan>>>,
}

impl Surface {
    pub fn new(
        pieces: Vec<Piece>,
        pairings: Vec<Pairing>,
        singularities: Vec<SingularityRecord>,
        genus: i64,
    ) -> Result<Surface, SurfaceError> {
        let mut s = Surface {
            pieces,
            pairings,
            singularities,
            traps: Vec::new(),
            genus,
            atlas: false,
            compiled: None,
        };
        s.atlas = s.pairings.iter().any(|p| p.interval1.is_some() || p.interval2.is_some());
        s.compile()?;
        Ok(s)
    }

    pub fn piece(&self, id: PieceId) -> &Piece {
        &self.pieces[id]
    }

    pub fn edges_of(&self, id: PieceId) -> &[Edge] {
        &self.compiled.as_ref().expect("surface compiled").edges[id]
    }

    pub fn exits_of(&self, id: PieceId, edge: usize) -> &[ExitSpan] {
        &self.compiled.as_ref().expect("surface compiled").exits[id][edge]
    }

    /// A characteristic length of the whole complex.
    pub fn scale(&self) -> f64 {
        self.pieces.iter().map(|p| p.region.scale()).fold(1.0, f64::max)
    }

    /// Recompile derived data (edges and exit spans).
    pub fn compile(&mut self) -> Result<(), SurfaceError> {
        let mut edges = Vec::with_capacity(self.pieces.len());
        for (idx, p) in self.pieces.iter().enumerate() {
            if p.id != idx {
                return Err(SurfaceError::UnknownPiece { piece: p.id });
            }
            let es = p.boundary_edges();
            if !p.region.halfplanes.is_empty() && es.is_empty() {
                return Err(SurfaceError::EmptyPiece { piece: idx });
            }
            edges.push(es);
        }
        let mut exits: Vec<Vec<Vec<ExitSpan>>> =
            edges.iter().map(|es| vec![Vec::new(); es.len()]).collect();
        for (pi, pairing) in self.pairings.iter().enumerate() {
            for dirn in [true, false] {
                let (from, to, interval) = if dirn {
                    (pairing.side1, pairing.side2, pairing.interval1)
                } else {
                    (pairing.side2, pairing.side1, pairing.interval2)
                };
                let transfer = self.compile_transfer(pairing, dirn, &edges)?;
                let from_edges = edges
                    .get(from.piece)
                    .ok_or(SurfaceError::UnknownPiece { piece: from.piece })?;
                let e = from_edges
                    .get(from.edge)
                    .ok_or(SurfaceError::UnknownEdge { piece: from.piece, edge: from.edge })?;
                let (t0, t1) = interval.unwrap_or((e.lo, e.hi));
                exits[from.piece][from.edge].push(ExitSpan {
                    t0,
                    t1,
                    target: to.piece,
                    transfer,
                    pairing: pi,
                });
            }
        }
        for per_piece in &mut exits {
            for spans in per_piece {
                spans.sort_by(|a, b| a.t0.total_cmp(&b.t0));
            }
        }
        self.compiled = Some(Compiled { edges, exits });
        Ok(())
    }

    fn compile_transfer(
        &self,
        pairing: &Pairing,
        forward: bool,
        edges: &[Vec<Edge>],
    ) -> Result<Transfer, SurfaceError> {
        let (from, to) = if forward { (pairing.side1, pairing.side2) } else { (pairing.side2, pairing.side1) };
        let dev = if forward {
            pairing.dev
        } else {
            pairing.dev.inverse().map_err(|_| {
                SurfaceError::UnsupportedGluing("pairing developed map is degenerate".into())
            })?
        };
        let from_kind = self
            .pieces
            .get(from.piece)
            .ok_or(SurfaceError::UnknownPiece { piece: from.piece })?
            .kind;
        let to_kind = self
            .pieces
            .get(to.piece)
            .ok_or(SurfaceError::UnknownPiece { piece: to.piece })?
            .kind;
        let anchor = pairing.anchor.map(|(a1, a2)| if forward { (a1, a2) } else { (a2, a1) });
        let pullback = match to_kind {
            PieceKind::Flat => Pullback::Flat,
            PieceKind::Log => {
                let (a_from, a_to) = anchor.ok_or_else(|| {
                    SurfaceError::UnsupportedGluing(
                        "log-side pairing requires a branch anchor".into(),
                    )
                })?;
                match from_kind {
                    PieceKind::Log => {
                        if dev.b.norm() <= config::get().eps_zero * (1.0 + dev.a.norm()) {
                            // Pure shift: w' = w + s, pinned by the anchor.
                            let s = a_to - a_from;
                            let check = (s.exp() - dev.a).norm();
                            if check > 1e-6 * (1.0 + dev.a.norm()) {
                                return Err(SurfaceError::UnsupportedGluing(format!(
                                    "anchor inconsistent with developed map (err {check:.2e})"
                                )));
                            }
                            Pullback::LogShift { s }
                        } else {
                            let glue = LogGlue::new(dev.a.ln(), dev.b);
                            let image = glue.apply(a_from).map_err(|_| {
                                SurfaceError::UnsupportedGluing(
                                    "anchor lies on the gluing branch cut".into(),
                                )
                            })?;
                            let k = ((a_to - image).im / TAU).round() as i64;
                            let resid = (a_to - image - c(0.0, TAU * k as f64)).norm();
                            if resid > 1e-6 * (1.0 + a_to.norm()) {
                                return Err(SurfaceError::UnsupportedGluing(format!(
                                    "anchor inconsistent with log gluing (err {resid:.2e})"
                                )));
                            }
                            Pullback::LogGlued { glue, k }
                        }
                    }
                    PieceKind::Flat => {
                        // Supported only along horizontal target edges.
                        let e = edges
                            .get(to.piece)
                            .and_then(|es| es.get(to.edge))
                            .ok_or(SurfaceError::UnknownEdge { piece: to.piece, edge: to.edge })?;
                        if e.dir.im.abs() > 1e-9 {
                            return Err(SurfaceError::UnsupportedGluing(
                                "flat-to-log pairing needs a horizontal log edge".into(),
                            ));
                        }
                        let im = e.base.im;
                        if (a_to.im - im).abs() > 1e-6 {
                            return Err(SurfaceError::UnsupportedGluing(
                                "anchor off the horizontal log edge".into(),
                            ));
                        }
                        Pullback::LogHorizontal { im }
                    }
                }
            }
        };
        Ok(Transfer { dev, pullback })
    }

    /// Developed position of a point of a piece.
    pub fn dev(&self, piece: PieceId, z: C) -> C {
        self.pieces[piece].dev(z)
    }

    /// Find the exit span covering parameter `t` of `(piece, edge)`. When
    /// several spans cover it (an edge paired onto sub-edges of a partner),
    /// the one whose transfer lands inside its target wins.
    pub fn exit_at(&self, piece: PieceId, edge: usize, t: f64) -> Option<&ExitSpan> {
        let slack = 1e-7 * (1.0 + self.scale());
        let covering = || {
            self.exits_of(piece, edge)
                .iter()
                .filter(move |s| t >= s.t0 - slack && t <= s.t1 + slack)
        };
        if covering().count() > 1 {
            let z = self.edges_of(piece)[edge].at(t);
            let kind = self.pieces[piece].kind;
            let mut best: Option<(&ExitSpan, f64)> = None;
            for s in covering() {
                if let Ok(w) = s.transfer.apply(kind, z) {
                    let inset = self.pieces[s.target].region.signed_inset(w);
                    if best.map(|(_, b)| inset > b).unwrap_or(true) {
                        best = Some((s, inset));
                    }
                }
            }
            if let Some((s, inset)) = best {
                if inset > -1e-6 * (1.0 + self.scale()) {
                    return Some(s);
                }
            }
        }
        covering().next()
    }

    /// Total singularity multiplicity `n`.
    pub fn total_multiplicity(&self) -> i64 {
        self.singularities.iter().map(|s| s.multiplicity()).sum()
    }

    /// `2g + n`, the exceptionality complexity.
    pub fn complexity(&self) -> i64 {
        2 * self.genus + self.total_multiplicity()
    }

    pub fn add_trap(&mut self, label: &str, members: Vec<TrapMember>) -> usize {
        let id = self.traps.len();
        self.traps.push(Trap { id, label: label.to_string(), members });
        id
    }

    /// Which trap, if any, contains the given chart point.
    pub fn trap_at(&self, piece: PieceId, z: C) -> Option<usize> {
        let kind = self.pieces[piece].kind;
        for trap in &self.traps {
            for m in &trap.members {
                if m.piece != piece {
                    continue;
                }
                let inside = match &m.test {
                    TrapTest::Region(hps) => hps.iter().all(|h| h.side(z) >= 0.0),
                    TrapTest::Mapped { transfer, source_kind, region } => {
                        debug_assert_eq!(*source_kind, kind);
                        match transfer.apply(kind, z) {
                            Ok(w) => region.iter().all(|h| h.side(w) >= 0.0),
                            Err(_) => false,
                        }
                    }
                };
                if inside {
                    return Some(trap.id);
                }
            }
        }
        None
    }
}

// ---------------------------------------------------------------------------
// Vertex cycles and validation
// ---------------------------------------------------------------------------

/// A corner of a piece: the boundary vertex between edges `edge` and
/// `edge + 1` (cyclically) when they share an endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Corner {
    pub piece: PieceId,
    /// Index of the incoming edge (the one that ends at this corner).
    pub edge_in: usize,
    pub edge_out: usize,
}

#[derive(Debug, Clone)]
pub struct VertexCycle {
    /// Corners in counterclockwise cycle order.
    pub corners: Vec<Corner>,
    /// Positions of each corner in its own piece coordinates.
    pub positions: Vec<C>,
    /// Total developed angle (lifted, may exceed 2π).
    pub angle: f64,
    /// Composed developed holonomy of the cycle.
    pub holonomy: AffineMap,
    /// True when the walk closed up; open walks ran into log ends.
    pub closed: bool,
}

impl VertexCycle {
    /// Residue `1 - α/2π + i·log s/2π` of a closed cycle.
    pub fn residue(&self) -> C {
        let s = self.holonomy.a.norm();
        c(1.0 - self.angle / TAU, s.ln() / TAU)
    }

    pub fn dilation(&self) -> f64 {
        self.holonomy.a.norm()
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub enum Issue {
    MismatchedEdge { pairing: usize, error: f64 },
    OpenVertexCycle { piece: PieceId, corner: usize },
    ResidueSumViolation { sum: (f64, f64), expected: (f64, f64) },
    AngleHolonomyMismatch { piece: PieceId, corner: usize, error: f64 },
    UnmatchedSingularity { id: usize },
    VertexNotFixed { piece: PieceId, corner: usize, error: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub genus: i64,
    pub n: i64,
    pub residue_sum: Option<(f64, f64)>,
    pub euler_characteristic: Option<i64>,
    pub has_boundary: bool,
    pub issues: Vec<Issue>,
    #[serde(skip)]
    pub cycles: Vec<VertexCycle>,
}

/// All corners of a piece, from consecutive edges sharing an endpoint.
pub fn corners_of(surface: &Surface, piece: PieceId) -> Vec<(Corner, C)> {
    let edges = surface.edges_of(piece);
    let k = edges.len();
    let mut out = Vec::new();
    if k < 2 {
        return out;
    }
    let scale = surface.pieces[piece].region.scale();
    for i in 0..k {
        let j = (i + 1) % k;
        if let (Some(e), Some(s)) = (edges[i].end(), edges[j].start()) {
            if (e - s).norm() < 1e-7 * (1.0 + scale) {
                out.push((Corner { piece, edge_in: i, edge_out: j }, e));
            }
        }
    }
    out
}

fn wedge_angle(surface: &Surface, corner: &Corner) -> f64 {
    let edges = surface.edges_of(corner.piece);
    let din = -edges[corner.edge_in].dir;
    let dout = edges[corner.edge_out].dir;
    // Interior wedge from the outgoing edge direction counterclockwise to the
    // reversed incoming direction.
    let mut a = din.arg() - dout.arg();
    while a <= 1e-12 {
        a += TAU;
    }
    while a > TAU + 1e-12 {
        a -= TAU;
    }
    a
}

/// Walk counterclockwise around a vertex starting from `start`. Returns the
/// cycle, closed or open (open walks stopped where a crossing failed or ran
/// toward a log end).
pub fn walk_vertex(surface: &Surface, start: Corner, start_pos: C) -> VertexCycle {
    let mut corners = vec![start];
    let mut positions = vec![start_pos];
    let mut angle = wedge_angle(surface, &start);
    let mut dev_acc = AffineMap::identity();
    let mut closed = false;
    let scale = surface.scale();
    let max_steps = 64 * (surface.pieces.len() + 2);

    let mut cur = start;
    let mut pos = start_pos;
    for _ in 0..max_steps {
        // Rotate counterclockwise: exit through the incoming edge.
        let edges = surface.edges_of(cur.piece);
        let e = &edges[cur.edge_in];
        let t = e.param_of(pos);
        let Some(span) = surface.exit_at(cur.piece, cur.edge_in, t) else {
            break; // boundary edge: open walk
        };
        let kind = surface.pieces[cur.piece].kind;
        // Log-end detection: developed image collapsing to the origin of a
        // log target means the "corner" is an ideal focus.
        let x = surface.pieces[cur.piece].dev(pos);
        let y = span.transfer.dev.apply(x);
        let target_kind = surface.pieces[span.target].kind;
        if target_kind == PieceKind::Log && y.norm() < 1e-12 * (1.0 + scale) {
            break;
        }
        let Ok(next_pos) = span.transfer.apply(kind, pos) else {
            break;
        };
        dev_acc = dev_acc.compose(
            &span
                .transfer
                .dev
                .inverse()
                .expect("pairing developed maps are invertible"),
        );
        // Find the corner of the target piece at the image point whose
        // outgoing edge contains it.
        let target_corners = corners_of(surface, span.target);
        let hit = target_corners.iter().find(|(_, p)| {
            (p - next_pos).norm() < 1e-6 * (1.0 + scale)
        });
        let Some((next_corner, exact_pos)) = hit.map(|(cnr, p)| (*cnr, *p)) else {
            break;
        };
        if next_corner == start {
            closed = true;
            break;
        }
        if corners.contains(&next_corner) {
            break; // safety: should not happen on valid complexes
        }
        angle += wedge_angle(surface, &next_corner);
        corners.push(next_corner);
        positions.push(exact_pos);
        cur = next_corner;
        pos = exact_pos;
    }

    VertexCycle { corners, positions, angle, holonomy: dev_acc, closed }
}

/// Group all corners into vertex cycles / open arcs.
pub fn vertex_cycles(surface: &Surface) -> Vec<VertexCycle> {
    let mut seen: Vec<Corner> = Vec::new();
    let mut out = Vec::new();
    for piece in 0..surface.pieces.len() {
        for (corner, pos) in corners_of(surface, piece) {
            if seen.contains(&corner) {
                continue;
            }
            let cycle = walk_vertex(surface, corner, pos);
            // For open arcs, also walk clockwise from the start to collect
            // the full arc; approximate by walking from each corner and
            // keeping the longest arc containing it.
            for cnr in &cycle.corners {
                seen.push(*cnr);
            }
            out.push(cycle);
        }
    }
    // Merge open arcs that are sub-arcs of one another (walks started in the
    // middle of an open arc produce suffixes; keep maximal ones).
    merge_open_arcs(out)
}

fn merge_open_arcs(mut cycles: Vec<VertexCycle>) -> Vec<VertexCycle> {
    // Arcs whose corner set is a subset of another arc are dropped; angle
    // information of the maximal is recomputed from scratch by the walker
    // already, so nothing else to do.
    cycles.sort_by_key(|c| std::cmp::Reverse(c.corners.len()));
    let mut kept: Vec<VertexCycle> = Vec::new();
    for cyc in cycles {
        let covered = kept.iter().any(|k| cyc.corners.iter().all(|c| k.corners.contains(c)));
        if !covered {
            kept.push(cyc);
        }
    }
    kept
}

/// Computed residues at finite vertices: `(cycle, residue)`.
pub fn vertex_residues(surface: &Surface) -> Vec<(VertexCycle, C)> {
    vertex_cycles(surface)
        .into_iter()
        .filter(|cyc| cyc.closed)
        .map(|cyc| {
            let r = cyc.residue();
            (cyc, r)
        })
        .collect()
}

pub fn validate(surface: &Surface) -> ValidationReport {
    let cfg = config::get();
    let scale = surface.scale();
    let mut issues = Vec::new();

    // 1. Pairing geometry: sampled transfer followed by the reverse transfer
    //    must be the identity, and images must land in the target piece.
    for (pi, pairing) in surface.pairings.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for dirn in [true, false] {
            let (from, _to) = if dirn { (pairing.side1, pairing.side2) } else { (pairing.side2, pairing.side1) };
            let edges = surface.edges_of(from.piece);
            if from.edge >= edges.len() {
                issues.push(Issue::MismatchedEdge { pairing: pi, error: f64::INFINITY });
                continue;
            }
            let e = &edges[from.edge];
            let interval = if dirn { pairing.interval1 } else { pairing.interval2 };
            let (t0, t1) = interval.unwrap_or((e.lo, e.hi));
            let samples = sample_params(t0, t1, scale);
            let Some(span) = surface
                .exits_of(from.piece, from.edge)
                .iter()
                .find(|s| s.pairing == pi)
            else {
                continue;
            };
            for &t in &samples {
                let z = e.at(t);
                let kind = surface.pieces[from.piece].kind;
                let Ok(w) = span.transfer.apply(kind, z) else {
                    worst = worst.max(1.0);
                    continue;
                };
                let inset = surface.pieces[span.target].region.signed_inset(w);
                if inset < -1e-6 * (1.0 + scale) {
                    worst = worst.max(-inset);
                }
                // Round trip through the reverse span of the same pairing.
                if let Some(back) = surface
                    .exits_of(span.target, reverse_edge(surface, pairing, dirn))
                    .iter()
                    .find(|s| s.pairing == pi)
                {
                    if let Ok(z2) = back.transfer.apply(surface.pieces[span.target].kind, w) {
                        worst = worst.max((z2 - z).norm());
                    }
                }
            }
        }
        if worst > 1e-6 * (1.0 + scale) {
            issues.push(Issue::MismatchedEdge { pairing: pi, error: worst });
        }
    }

    // 2. Vertex cycles.
    let cycles = vertex_cycles(surface);
    let mut finite_residue_sum = c(0.0, 0.0);
    for cyc in &cycles {
        if !cyc.closed {
            if !surface.atlas && !open_arc_is_ideal(surface, cyc) {
                let cnr = cyc.corners.last().unwrap();
                issues.push(Issue::OpenVertexCycle { piece: cnr.piece, corner: cnr.edge_in });
            }
            continue;
        }
        // Closed: the holonomy must fix the developed vertex and match the
        // accumulated angle.
        let v = surface.pieces[cyc.corners[0].piece].dev(cyc.positions[0]);
        let err = (cyc.holonomy.apply(v) - v).norm();
        if err > 1e-6 * (1.0 + scale) {
            issues.push(Issue::VertexNotFixed {
                piece: cyc.corners[0].piece,
                corner: cyc.corners[0].edge_in,
                error: err,
            });
        }
        let arg_err = wrap_angle(cyc.holonomy.a.arg() - cyc.angle).abs();
        if arg_err > 1e-6 {
            issues.push(Issue::AngleHolonomyMismatch {
                piece: cyc.corners[0].piece,
                corner: cyc.corners[0].edge_in,
                error: arg_err,
            });
        }
        finite_residue_sum += cyc.residue();
    }

    // 3. Residue sum (closed surfaces only).
    let has_boundary = surface_has_boundary(surface);
    let end_sum: C = surface
        .singularities
        .iter()
        .filter(|s| matches!(s.location, SingLocation::Ends { .. }))
        .map(|s| s.residue)
        .sum();
    let residue_sum = finite_residue_sum + end_sum;
    let expected = c(2.0 - 2.0 * surface.genus as f64, 0.0);
    if !has_boundary && (residue_sum - expected).norm() > 1e-9 * (1.0 + residue_sum.norm()) {
        issues.push(Issue::ResidueSumViolation {
            sum: (residue_sum.re, residue_sum.im),
            expected: (expected.re, expected.im),
        });
    }

    // 4. Euler characteristic cross-check for classic closed complexes.
    let euler = if !surface.atlas && !has_boundary {
        let f = surface.pieces.len() as i64;
        let e = surface.pairings.len() as i64;
        let v_finite = cycles.iter().filter(|cy| cy.closed).count() as i64;
        let v_ends = surface
            .singularities
            .iter()
            .filter(|s| matches!(s.location, SingLocation::Ends { .. }))
            .count() as i64;
        Some(v_finite + v_ends - e + f)
    } else {
        None
    };
    if let Some(chi) = euler {
        if chi != 2 - 2 * surface.genus {
            issues.push(Issue::ResidueSumViolation {
                sum: (chi as f64, f64::NAN),
                expected: ((2 - 2 * surface.genus) as f64, f64::NAN),
            });
        }
    }

    // 5. Declared corner singularities must match a computed cycle.
    for s in &surface.singularities {
        if let SingLocation::Corner { piece, corner } = s.location {
            let found = cycles.iter().any(|cyc| {
                cyc.closed && cyc.corners.iter().any(|c| c.piece == piece && c.edge_in == corner)
            });
            if !found {
                issues.push(Issue::UnmatchedSingularity { id: s.id });
            }
        }
    }

    let _ = cfg;
    ValidationReport {
        ok: issues.is_empty(),
        genus: surface.genus,
        n: surface.total_multiplicity(),
        residue_sum: (!has_boundary).then_some((residue_sum.re, residue_sum.im)),
        euler_characteristic: euler,
        has_boundary,
        issues,
        cycles,
    }
}

fn reverse_edge(surface: &Surface, pairing: &Pairing, forward: bool) -> usize {
    let _ = surface;
    if forward {
        pairing.side2.edge
    } else {
        pairing.side1.edge
    }
}

/// An open corner arc is fine when both of its loose ends ran toward log-end
/// ideal points (focus arcs at irregular singularities).
fn open_arc_is_ideal(surface: &Surface, cyc: &VertexCycle) -> bool {
    // Both the ccw continuation from the last corner and the cw continuation
    // from the first end at a log end or an unpaired edge of a log piece.
    let check = |corner: &Corner, pos: C, edge: usize| -> bool {
        let piece = &surface.pieces[corner.piece];
        match piece.kind {
            PieceKind::Log => true,
            PieceKind::Flat => {
                // Crossing into a log piece whose developed image vanishes.
                let t = surface.edges_of(corner.piece)[edge].param_of(pos);
                match surface.exit_at(corner.piece, edge, t) {
                    None => false,
                    Some(span) => {
                        let x = piece.dev(pos);
                        let y = span.transfer.dev.apply(x);
                        surface.pieces[span.target].kind == PieceKind::Log
                            && y.norm() < 1e-9 * (1.0 + surface.scale())
                    }
                }
            }
        }
    };
    let first = cyc.corners.first().unwrap();
    let last = cyc.corners.last().unwrap();
    check(first, cyc.positions[0], first.edge_out)
        && check(last, *cyc.positions.last().unwrap(), last.edge_in)
}

pub fn surface_has_boundary(surface: &Surface) -> bool {
    for piece in 0..surface.pieces.len() {
        for (ei, e) in surface.edges_of(piece).iter().enumerate() {
            let spans = surface.exits_of(piece, ei);
            if spans.is_empty() {
                return true;
            }
            if !surface.atlas {
                continue;
            }
            // With atlas gluings, uncovered sub-intervals count as boundary.
            let mut covered_lo = e.lo;
            for s in spans {
                if s.t0 > covered_lo + 1e-9 {
                    return true;
                }
                covered_lo = covered_lo.max(s.t1);
            }
            if covered_lo < e.hi - 1e-9 {
                return true;
            }
        }
    }
    false
}

fn sample_params(t0: f64, t1: f64, scale: f64) -> Vec<f64> {
    let lo = if t0.is_finite() { t0 } else { -4.0 * scale };
    let hi = if t1.is_finite() { t1 } else { 4.0 * scale };
    let mid = 0.5 * (lo + hi);
    let w = hi - lo;
    vec![lo + 0.17 * w, mid, hi - 0.13 * w]
}


/// Corner index (its `edge_in`) of the piece corner at a given position.
pub fn corner_at(surface: &Surface, piece: PieceId, z: C) -> Option<usize> {
    let scale = 1.0 + surface.pieces[piece].region.scale();
    corners_of(surface, piece)
        .into_iter()
        .find(|(_, p)| (p - z).norm() < 1e-7 * scale)
        .map(|(cnr, _)| cnr.edge_in)
}

/// Index of an edge whose clipped span contains a given boundary point.
pub fn edge_containing(surface: &Surface, piece: PieceId, z: C, tol: f64) -> Option<(usize, f64)> {
    for (i, e) in surface.edges_of(piece).iter().enumerate() {
        let t = e.param_of(z);
        if t >= e.lo - tol && t <= e.hi + tol && (z - e.at(t)).norm() <= tol {
            return Some((i, t));
        }
    }
    None
}

pub fn unit(v: C) -> C {
    v / v.norm()
}
