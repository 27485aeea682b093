//! The `affsurf-v1` surface file format (UTF-8 JSON).
//!
//! Core schema:
//! `{version:"affsurf-v1", pieces:[{id, kind:"flat"|"log", halfplanes:[{p:[re,im], n:[re,im]}]}],
//!   pairings:[{s1:{piece,edge}, s2:{piece,edge}, a:[re,im], b:[re,im], anchors:[...]}],
//!   marks:[{piece, z:[re,im]}]}`
//! Numbers are JSON numbers or decimal strings; small rationals are written
//! as `"p/q"` strings. Edge indices are 0-based in boundary order starting
//! from the lexicographically smallest inward normal.
//!
//! Extensions carried by this implementation (ignored by readers of the core
//! schema): `genus`, `singularities`, `traps`, `atlas`, and per-pairing
//! `t1`/`t2` interval bounds for atlas-style chart gluings.

use serde_json::{json, Map, Value};

use crate::affine::{c, AffineMap, C};
use crate::error::SurfaceError;
use crate::geometry::{HalfPlane, Region};
use crate::surface::{
    EdgeRef, Pairing, Piece, PieceKind, SingLocation, SingularityRecord, Surface, Trap,
};

pub const VERSION: &str = "affsurf-v1";

/// Render a float as an exact small rational where possible, else as the
/// shortest round-trip decimal string.
fn num_to_value(v: f64) -> Value {
    if v == 0.0 {
        return Value::String("0".to_string());
    }
    if v.is_finite() {
        for q in 1..=64u32 {
            let p = v * q as f64;
            if p.abs() < 1e15 && p == p.round() && p / q as f64 == v {
                return if q == 1 {
                    Value::String(format!("{}", p as i64))
                } else {
                    Value::String(format!("{}/{}", p as i64, q))
                };
            }
        }
    }
    Value::String(format!("{v:?}"))
}

fn num_from_value(v: &Value) -> Result<f64, SurfaceError> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| SurfaceError::Format("bad number".into())),
        Value::String(s) => {
            if let Some((p, q)) = s.split_once('/') {
                let p: f64 =
                    p.trim().parse().map_err(|_| SurfaceError::Format(format!("bad rational {s}")))?;
                let q: f64 =
                    q.trim().parse().map_err(|_| SurfaceError::Format(format!("bad rational {s}")))?;
                if q == 0.0 {
                    return Err(SurfaceError::Format(format!("zero denominator in {s}")));
                }
                Ok(p / q)
            } else {
                s.trim().parse().map_err(|_| SurfaceError::Format(format!("bad number {s}")))
            }
        }
        _ => Err(SurfaceError::Format("expected number or string".into())),
    }
}

fn complex_to_value(z: C) -> Value {
    Value::Array(vec![num_to_value(z.re), num_to_value(z.im)])
}

fn complex_from_value(v: &Value) -> Result<C, SurfaceError> {
    let arr = v.as_array().ok_or_else(|| SurfaceError::Format("expected [re, im]".into()))?;
    if arr.len() != 2 {
        return Err(SurfaceError::Format("expected [re, im]".into()));
    }
    Ok(c(num_from_value(&arr[0])?, num_from_value(&arr[1])?))
}

pub fn surface_to_json(surface: &Surface) -> Value {
    let pieces: Vec<Value> = surface
        .pieces
        .iter()
        .map(|p| {
            let mut m = Map::new();
            m.insert("id".into(), json!(p.id));
            m.insert(
                "kind".into(),
                json!(match p.kind {
                    PieceKind::Flat => "flat",
                    PieceKind::Log => "log",
                }),
            );
            m.insert(
                "halfplanes".into(),
                Value::Array(
                    p.region
                        .halfplanes
                        .iter()
                        .map(|h| json!({"p": complex_to_value(h.p), "n": complex_to_value(h.n)}))
                        .collect(),
                ),
            );
            if !p.splits.is_empty() {
                m.insert(
                    "splits".into(),
                    Value::Array(
                        p.splits
                            .iter()
                            .map(|&(hp, t)| json!([hp, num_to_value(t)]))
                            .collect(),
                    ),
                );
            }
            Value::Object(m)
        })
        .collect();
    let pairings: Vec<Value> = surface
        .pairings
        .iter()
        .map(|pr| {
            let mut m = Map::new();
            m.insert("s1".into(), json!({"piece": pr.side1.piece, "edge": pr.side1.edge}));
            m.insert("s2".into(), json!({"piece": pr.side2.piece, "edge": pr.side2.edge}));
            m.insert("a".into(), complex_to_value(pr.dev.a));
            m.insert("b".into(), complex_to_value(pr.dev.b));
            m.insert(
                "anchors".into(),
                match pr.anchor {
                    Some((a1, a2)) => {
                        Value::Array(vec![complex_to_value(a1), complex_to_value(a2)])
                    }
                    None => Value::Array(vec![]),
                },
            );
            if let Some((t0, t1)) = pr.interval1 {
                m.insert("t1".into(), json!([num_to_value(t0), num_to_value(t1)]));
            }
            if let Some((t0, t1)) = pr.interval2 {
                m.insert("t2".into(), json!([num_to_value(t0), num_to_value(t1)]));
            }
            Value::Object(m)
        })
        .collect();
    let marks: Vec<Value> = surface
        .singularities
        .iter()
        .filter_map(|s| match &s.location {
            SingLocation::Interior { piece, z } if s.order == 0 => {
                Some(json!({"piece": piece, "z": complex_to_value(*z)}))
            }
            _ => None,
        })
        .collect();
    let records: Vec<Value> = surface
        .singularities
        .iter()
        .filter(|s| !matches!(&s.location, SingLocation::Interior { .. } if s.order == 0))
        .map(|s| serde_json::to_value(s).expect("record serializes"))
        .collect();
    let traps = serde_json::to_value(&surface.traps).expect("traps serialize");

    json!({
        "version": VERSION,
        "pieces": pieces,
        "pairings": pairings,
        "marks": marks,
        "genus": surface.genus,
        "atlas": surface.atlas,
        "singularities": records,
        "traps": traps,
    })
}

pub fn surface_to_string(surface: &Surface) -> String {
    serde_json::to_string_pretty(&surface_to_json(surface)).expect("serializable")
}

pub fn surface_from_json(value: &Value) -> Result<Surface, SurfaceError> {
    let obj = value.as_object().ok_or_else(|| SurfaceError::Format("not an object".into()))?;
    match obj.get("version").and_then(|v| v.as_str()) {
        Some(VERSION) => {}
        Some(other) => return Err(SurfaceError::Format(format!("unknown version {other}"))),
        None => return Err(SurfaceError::Format("missing version".into())),
    }
    let pieces_v = obj
        .get("pieces")
        .and_then(|v| v.as_array())
        .ok_or_else(|| SurfaceError::Format("missing pieces".into()))?;
    if pieces_v.len() > 100_000 {
        return Err(SurfaceError::Format("too many pieces".into()));
    }
    let mut pieces = Vec::with_capacity(pieces_v.len());
    for (idx, pv) in pieces_v.iter().enumerate() {
        let po = pv.as_object().ok_or_else(|| SurfaceError::Format("piece not an object".into()))?;
        let id = po.get("id").and_then(|v| v.as_u64()).unwrap_or(idx as u64) as usize;
        if id != idx {
            return Err(SurfaceError::Format(format!("piece ids must be dense, got {id} at {idx}")));
        }
        let kind = match po.get("kind").and_then(|v| v.as_str()) {
            Some("flat") => PieceKind::Flat,
            Some("log") => PieceKind::Log,
            other => return Err(SurfaceError::Format(format!("bad piece kind {other:?}"))),
        };
        let hps_v = po
            .get("halfplanes")
            .and_then(|v| v.as_array())
            .ok_or_else(|| SurfaceError::Format("missing halfplanes".into()))?;
        if hps_v.len() > 10_000 {
            return Err(SurfaceError::Format("too many halfplanes".into()));
        }
        let mut hps = Vec::with_capacity(hps_v.len());
        for hv in hps_v {
            let ho =
                hv.as_object().ok_or_else(|| SurfaceError::Format("halfplane not an object".into()))?;
            let p = complex_from_value(
                ho.get("p").ok_or_else(|| SurfaceError::Format("halfplane missing p".into()))?,
            )?;
            let n = complex_from_value(
                ho.get("n").ok_or_else(|| SurfaceError::Format("halfplane missing n".into()))?,
            )?;
            if !p.re.is_finite() || !p.im.is_finite() || !n.re.is_finite() || !n.im.is_finite() {
                return Err(SurfaceError::Format("non-finite halfplane data".into()));
            }
            if n.norm() < 1e-12 {
                return Err(SurfaceError::Format("zero halfplane normal".into()));
            }
            hps.push(HalfPlane::new(p, n));
        }
        let mut piece = Piece::new(id, kind, Region::new(hps));
        if let Some(splits) = po.get("splits").and_then(|v| v.as_array()) {
            for sv in splits {
                let sa = sv
                    .as_array()
                    .ok_or_else(|| SurfaceError::Format("split must be [hp, t]".into()))?;
                if sa.len() != 2 {
                    return Err(SurfaceError::Format("split must be [hp, t]".into()));
                }
                let hp = sa[0]
                    .as_u64()
                    .ok_or_else(|| SurfaceError::Format("bad split halfplane".into()))?
                    as usize;
                let t = num_from_value(&sa[1])?;
                if !t.is_finite() {
                    return Err(SurfaceError::Format("non-finite split".into()));
                }
                piece.splits.push((hp, t));
            }
        }
        pieces.push(piece);
    }

    let mut pairings = Vec::new();
    if let Some(prs) = obj.get("pairings").and_then(|v| v.as_array()) {
        for prv in prs {
            let po =
                prv.as_object().ok_or_else(|| SurfaceError::Format("pairing not an object".into()))?;
            let side = |key: &str| -> Result<EdgeRef, SurfaceError> {
                let sv = po
                    .get(key)
                    .and_then(|v| v.as_object())
                    .ok_or_else(|| SurfaceError::Format(format!("pairing missing {key}")))?;
                Ok(EdgeRef {
                    piece: sv.get("piece").and_then(|v| v.as_u64()).unwrap_or(u64::MAX) as usize,
                    edge: sv.get("edge").and_then(|v| v.as_u64()).unwrap_or(u64::MAX) as usize,
                })
            };
            let a = complex_from_value(
                po.get("a").ok_or_else(|| SurfaceError::Format("pairing missing a".into()))?,
            )?;
            let b = complex_from_value(
                po.get("b").ok_or_else(|| SurfaceError::Format("pairing missing b".into()))?,
            )?;
            if !(a.re.is_finite() && a.im.is_finite() && b.re.is_finite() && b.im.is_finite()) {
                return Err(SurfaceError::Format("non-finite pairing map".into()));
            }
            if a.norm() < 1e-12 {
                return Err(SurfaceError::Format("degenerate pairing map".into()));
            }
            let anchor = match po.get("anchors") {
                Some(Value::Array(arr)) if arr.len() >= 2 => {
                    Some((complex_from_value(&arr[0])?, complex_from_value(&arr[1])?))
                }
                _ => None,
            };
            let interval = |key: &str| -> Result<Option<(f64, f64)>, SurfaceError> {
                match po.get(key) {
                    Some(Value::Array(arr)) if arr.len() == 2 => {
                        Ok(Some((num_from_value(&arr[0])?, num_from_value(&arr[1])?)))
                    }
                    _ => Ok(None),
                }
            };
            pairings.push(Pairing {
                side1: side("s1")?,
                side2: side("s2")?,
                dev: AffineMap::new(a, b),
                anchor,
                interval1: interval("t1")?,
                interval2: interval("t2")?,
            });
        }
    }

    let mut singularities: Vec<SingularityRecord> = Vec::new();
    if let Some(recs) = obj.get("singularities").and_then(|v| v.as_array()) {
        for rv in recs {
            let rec: SingularityRecord = serde_json::from_value(rv.clone())
                .map_err(|e| SurfaceError::Format(format!("bad singularity record: {e}")))?;
            singularities.push(rec);
        }
    }
    if let Some(marks) = obj.get("marks").and_then(|v| v.as_array()) {
        for mv in marks {
            let mo =
                mv.as_object().ok_or_else(|| SurfaceError::Format("mark not an object".into()))?;
            let piece = mo.get("piece").and_then(|v| v.as_u64()).unwrap_or(u64::MAX) as usize;
            if piece >= pieces.len() {
                return Err(SurfaceError::Format("mark on unknown piece".into()));
            }
            let z = complex_from_value(
                mo.get("z").ok_or_else(|| SurfaceError::Format("mark missing z".into()))?,
            )?;
            singularities.push(SingularityRecord {
                id: singularities.len(),
                location: SingLocation::Interior { piece, z },
                order: 0,
                residue: c(0.0, 0.0),
                cone: Some((std::f64::consts::TAU, 1.0)),
                family: None,
                shifted: None,
            });
        }
    }
    let genus = obj.get("genus").and_then(|v| v.as_i64()).unwrap_or(0);
    let mut surface = Surface::new(pieces, pairings, singularities, genus)?;
    if let Some(true) = obj.get("atlas").and_then(|v| v.as_bool()) {
        surface.atlas = true;
    }
    if let Some(traps_v) = obj.get("traps") {
        if !traps_v.is_null() {
            let traps: Vec<Trap> = serde_json::from_value(traps_v.clone())
                .map_err(|e| SurfaceError::Format(format!("bad traps: {e}")))?;
            surface.traps = traps;
        }
    }
    Ok(surface)
}

pub fn surface_from_str(text: &str) -> Result<Surface, SurfaceError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| SurfaceError::Format(format!("json: {e}")))?;
    surface_from_json(&value)
}

/// Laurent series wire form: a JSON array of `[order, re, im]` triples plus
/// an optional truncation order.
pub fn series_from_str(text: &str) -> Result<crate::fuchsian::LaurentSeries, SurfaceError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| SurfaceError::Format(format!("json: {e}")))?;
    series_from_json(&value)
}

pub fn series_from_json(value: &Value) -> Result<crate::fuchsian::LaurentSeries, SurfaceError> {
    let arr = match value {
        Value::Array(a) => a.as_slice(),
        Value::Object(o) => o
            .get("terms")
            .and_then(|v| v.as_array())
            .map(|a| a.as_slice())
            .ok_or_else(|| SurfaceError::Format("series object missing terms".into()))?,
        _ => return Err(SurfaceError::Format("series must be an array".into())),
    };
    if arr.len() > 100_000 {
        return Err(SurfaceError::Format("series too long".into()));
    }
    let mut terms = Vec::with_capacity(arr.len());
    for tv in arr {
        let t = tv.as_array().ok_or_else(|| SurfaceError::Format("term must be [n, re, im]".into()))?;
        if t.len() != 3 {
            return Err(SurfaceError::Format("term must be [n, re, im]".into()));
        }
        let n = num_from_value(&t[0])?;
        if !n.is_finite() || n != n.round() || n.abs() > 1e6 {
            return Err(SurfaceError::Format(format!("bad term order {n}")));
        }
        let re = num_from_value(&t[1])?;
        let im = num_from_value(&t[2])?;
        if !re.is_finite() || !im.is_finite() {
            return Err(SurfaceError::Format("non-finite coefficient".into()));
        }
        terms.push((n as i64, c(re, im)));
    }
    let top = match value {
        Value::Object(o) => o.get("top").and_then(|v| v.as_i64()),
        _ => None,
    };
    let default_top = terms.iter().map(|&(n, _)| n).max().unwrap_or(0).max(0)
        + terms.iter().map(|&(n, _)| -n).max().unwrap_or(0).max(0)
        + 10;
    Ok(crate::fuchsian::LaurentSeries::from_terms(&terms, top.unwrap_or(default_top)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders;
    use crate::surface::validate;

    #[test]
    fn number_round_trip() {
        for v in [0.0, 1.0, -3.5, 1.0 / 3.0, 0.1, std::f64::consts::PI, -1e-17] {
            let back = num_from_value(&num_to_value(v)).unwrap();
            assert_eq!(v, back, "value {v}");
        }
        assert_eq!(num_to_value(0.5), Value::String("1/2".into()));
        assert_eq!(num_from_value(&serde_json::json!(2.5)).unwrap(), 2.5);
        assert!(num_from_value(&Value::String("1/0".into())).is_err());
    }

    #[test]
    fn surface_round_trip_preserves_reports() {
        for surface in [
            builders::cushion(1.0).unwrap(),
            builders::square_torus(&[c(0.25, 0.5)]).unwrap(),
            builders::skew_cone(3.0, std::f64::consts::PI / 6.0).unwrap(),
            builders::affine_torus(c(0.3, 1.1), c(-0.7, 0.9)).unwrap(),
        ] {
            let text = surface_to_string(&surface);
            let back = surface_from_str(&text).unwrap();
            let r1 = validate(&surface);
            let r2 = validate(&back);
            assert_eq!(r1.ok, r2.ok);
            assert_eq!(r1.n, r2.n);
            assert_eq!(r1.genus, r2.genus);
            if let (Some(a), Some(b)) = (r1.residue_sum, r2.residue_sum) {
                assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
            }
            // Byte-identical re-serialization.
            let text2 = surface_to_string(&back);
            assert_eq!(text, text2);
        }
    }

    #[test]
    fn rejects_malformed() {
        assert!(surface_from_str("{}").is_err());
        assert!(surface_from_str("not json").is_err());
        assert!(surface_from_str(r#"{"version":"affsurf-v1"}"#).is_err());
        assert!(surface_from_str(
            r#"{"version":"affsurf-v1","pieces":[{"id":0,"kind":"flat","halfplanes":[{"p":["0","0"],"n":["0","0"]}]}]}"#
        )
        .is_err());
    }

    #[test]
    fn series_wire_form() {
        let s = series_from_str("[[-2, 1, 0], [0, \"1/2\", 0]]").unwrap();
        assert_eq!(s.pole_order(), 2);
        assert!((s.coeff(0).re - 0.5).abs() < 1e-15);
        assert!(series_from_str("[[1e99, 0, 0]]").is_err());
    }
}
