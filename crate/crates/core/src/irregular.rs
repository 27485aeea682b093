//! Asymptotic-value invariants of irregular singularities and the canonical
//! local models realizing them.
//!
//! A pole of order `d ≥ 2` with residue `res` carries a ℤ-indexed family of
//! asymptotic values subject to `u_{k+m} = a u_k + b` with `m = d-1` and
//! `a = e^{-2πi·res}`. The family, modulo the affine action and index shifts,
//! is a complete analytic invariant. The canonical model glues `2m` log
//! half-plane charts `A_n`, `B_{n+1/2}` with maps `G_{s,b}` so that a
//! developing map restricted to `AB_x` is `Λ_x ∘ exp`.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::affine::{c, AffineMap, LogGlue, C, I};
use crate::error::IrregularError;

/// One period of asymptotic values, plus the holonomy offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFamily {
    /// Pole order, at least 2.
    pub d: usize,
    pub res: C,
    /// `u_0 … u_{m-1}` with `m = d - 1`.
    pub base: Vec<C>,
    /// Offset of the holonomy `L(z) = a z + b`.
    pub offset: C,
}

impl AsymptoticFamily {
    pub fn new(d: usize, res: C, base: Vec<C>, offset: C) -> Result<Self, IrregularError> {
        if d < 2 {
            return Err(IrregularError::OrderTooLow(d));
        }
        assert_eq!(base.len(), d - 1, "one period of u-values required");
        Ok(AsymptoticFamily { d, res, base, offset })
    }

    pub fn period(&self) -> usize {
        self.d - 1
    }

    /// Linear factor `a = exp(-2πi·res)` of the holonomy.
    pub fn holonomy_factor(&self) -> C {
        (-TAU * I * self.res).exp()
    }

    pub fn holonomy(&self) -> AffineMap {
        AffineMap::new(self.holonomy_factor(), self.offset)
    }

    /// `u_n` for any `n ∈ ℤ` through the recurrence `u_{k+m} = a u_k + b`.
    pub fn value(&self, n: i64) -> C {
        let m = self.period() as i64;
        let r = n.rem_euclid(m);
        let q = (n - r) / m;
        let mut u = self.base[r as usize];
        let a = self.holonomy_factor();
        if q >= 0 {
            for _ in 0..q {
                u = a * u + self.offset;
            }
        } else {
            for _ in 0..(-q) {
                u = (u - self.offset) / a;
            }
        }
        u
    }

    /// Constant family fixed by the holonomy.
    pub fn is_centered(&self) -> bool {
        let tol = 1e-9 * (1.0 + self.base[0].norm());
        let u0 = self.base[0];
        if self.base.iter().any(|u| (u - u0).norm() > tol) {
            return false;
        }
        (self.holonomy().apply(u0) - u0).norm() <= tol
    }

    /// Index-shifted family: `u'_n = u_{n+s}` with the same `(d, res)`.
    pub fn shifted(&self, s: i64) -> AsymptoticFamily {
        let base = (0..self.period() as i64).map(|n| self.value(n + s)).collect::<Vec<_>>();
        let offset = self.value(self.period() as i64 + s) - self.holonomy_factor() * base[0];
        AsymptoticFamily { d: self.d, res: self.res, base, offset }
    }

    /// Post-composed family `A ∘ u`.
    pub fn mapped(&self, g: &AffineMap) -> AsymptoticFamily {
        let base = self.base.iter().map(|&u| g.apply(u)).collect::<Vec<_>>();
        let m = self.period() as i64;
        let offset = g.apply(self.value(m)) - self.holonomy_factor() * base[0];
        AsymptoticFamily { d: self.d, res: self.res, base, offset }
    }
}

/// Directions of the `d-1` repelling axes for leading coefficient `a_lead`:
/// the `θ` with `-a_lead e^{-i(d-1)θ} ∈ ℝ₋`.
pub fn repelling_axes(a_lead: C, d: usize) -> Result<Vec<f64>, IrregularError> {
    axes(a_lead, d, 0.0)
}

/// Attracting axes: `-a_lead e^{-i(d-1)θ} ∈ ℝ₊`; they alternate with the
/// repelling ones.
pub fn attracting_axes(a_lead: C, d: usize) -> Result<Vec<f64>, IrregularError> {
    axes(a_lead, d, std::f64::consts::PI)
}

fn axes(a_lead: C, d: usize, shift: f64) -> Result<Vec<f64>, IrregularError> {
    if a_lead.norm() <= crate::config::get().eps_zero {
        return Err(IrregularError::DegenerateLeadingCoefficient);
    }
    if d < 2 {
        return Err(IrregularError::OrderTooLow(d));
    }
    let m = (d - 1) as f64;
    let base = (a_lead.arg() + shift) / m;
    Ok((0..d - 1).map(|k| crate::affine::wrap_angle(base + k as f64 * TAU / m)).collect())
}

/// Witness of equality of two invariants: the affine bijection and the shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualityWitness {
    pub map: AffineMap,
    pub shift: i64,
}

/// Test whether two families define the same invariant: an affine `g` with
/// `g(u_k) = u'_{k+s}` over a verification window of length `2m + 2`.
pub fn invariants_equal(
    f1: &AsymptoticFamily,
    f2: &AsymptoticFamily,
    allow_shift: bool,
) -> Option<EqualityWitness> {
    if f1.d != f2.d || (f1.res - f2.res).norm() > 1e-9 {
        return None;
    }
    let m = f1.period() as i64;
    let shifts: Vec<i64> = if allow_shift { (0..m).collect() } else { vec![0] };
    let window = 2 * m + 2;
    let scale: f64 = (0..window).map(|k| f1.value(k).norm()).fold(1.0, f64::max);
    for s in shifts {
        // Solve g from the first two distinct values, then verify everywhere.
        let mut g = None;
        'solve: for k1 in 0..window {
            for k2 in (k1 + 1)..window {
                let d1 = f1.value(k2) - f1.value(k1);
                if d1.norm() > 1e-9 * scale {
                    let a = (f2.value(k2 + s) - f2.value(k1 + s)) / d1;
                    if a.norm() <= crate::config::get().eps_zero {
                        continue;
                    }
                    let b = f2.value(k1 + s) - a * f1.value(k1);
                    g = Some(AffineMap::new(a, b));
                    break 'solve;
                }
            }
        }
        let g = g.unwrap_or_else(|| {
            // Constant family: translate value onto value.
            AffineMap::translation(f2.value(s) - f1.value(0))
        });
        let tol = 1e-8 * (1.0 + scale) * (1.0 + g.a.norm());
        let ok = (0..window).all(|k| (g.apply(f1.value(k)) - f2.value(k + s)).norm() <= tol);
        if ok {
            return Some(EqualityWitness { map: g, shift: s });
        }
    }
    None
}

/// Deterministic representative of an invariant class, for hashing and
/// reporting: translate `u_0` to 0, scale the first nonzero increment to 1,
/// and (over allowed shifts) pick the lexicographically smallest tuple.
pub fn canonical_invariant(fam: &AsymptoticFamily, allow_shift: bool) -> (Vec<C>, bool) {
    let m = fam.period() as i64;
    let shifts: Vec<i64> = if allow_shift { (0..m).collect() } else { vec![0] };
    let mut best: Option<Vec<C>> = None;
    let mut centered = false;
    for s in shifts {
        let f = fam.shifted(s);
        let u0 = f.value(0);
        let window = 2 * m + 2;
        let incr = (0..window).map(|k| f.value(k + 1) - f.value(k)).find(|v| v.norm() > 1e-9);
        let tuple: Vec<C> = match incr {
            None => {
                centered = f.is_centered();
                vec![c(0.0, 0.0); m as usize]
            }
            Some(step) => (0..m).map(|k| (f.value(k) - u0) / step).collect(),
        };
        let better = match &best {
            None => true,
            Some(cur) => lex_less(&tuple, cur),
        };
        if better {
            best = Some(tuple);
        }
    }
    (best.unwrap(), centered)
}

fn lex_less(a: &[C], b: &[C]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if (x.re, x.im) < (y.re, y.im) {
            return true;
        }
        if (x.re, x.im) > (y.re, y.im) {
            return false;
        }
    }
    false
}

/// The canonical model realizing an asymptotic family: lower gluings are the
/// identity, upper gluings share the value `s = 2πi(res - d)/(d-1)`, and
/// `Λ_n(z) = e^{-ns} z + u_n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanonicalModel {
    pub family: AsymptoticFamily,
    /// Common `s` of the upper gluings.
    pub s: C,
    /// `Λ_n` for `n = 0 … m-1`.
    pub lambda: Vec<AffineMap>,
    /// Upper gluings `G_{n+1/4}` for `n = 0 … m-1`.
    pub upper: Vec<LogGlue>,
    /// Half-plane parameter, a power of two above `2π` satisfying the
    /// admissibility condition with margin.
    pub radius: f64,
    /// Holonomy `L` of the pole: `Λ_{x+m} = L ∘ Λ_x`.
    pub holonomy: AffineMap,
}

impl CanonicalModel {
    /// `Λ_x` for any `x ∈ ½ℤ`; half-integer indices share the map of the
    /// integer above them (`Λ_{n+1/2} = Λ_{n+1}`, lower gluings being trivial).
    pub fn lambda_at(&self, x2: i64) -> AffineMap {
        // x2 = 2x: even for A_n, odd for B_{n+1/2}.
        let n = if x2 % 2 == 0 { x2 / 2 } else { (x2 + 1) / 2 };
        let m = self.family.period() as i64;
        let r = n.rem_euclid(m);
        let q = (n - r) / m;
        let mut map = self.lambda[r as usize];
        if q >= 0 {
            for _ in 0..q {
                map = self.holonomy.compose(&map);
            }
        } else {
            let inv = self.holonomy.inverse().expect("holonomy is invertible");
            for _ in 0..(-q) {
                map = inv.compose(&map);
            }
        }
        map
    }

    /// Upper gluing `G_{n+1/4}` for any `n ∈ ℤ`.
    pub fn upper_glue(&self, n: i64) -> LogGlue {
        let m = self.family.period() as i64;
        self.upper[n.rem_euclid(m) as usize]
    }

    /// Sum of the `s`-values of all `2m` gluings in one period. Equals
    /// `2πi(res - d)` exactly by construction.
    pub fn glue_exponent_sum(&self) -> C {
        self.s * c(self.family.period() as f64, 0.0)
    }

    /// Membership test for the model piece `AB_x` (`x2 = 2x`): the union of
    /// three half-planes for `A_n`, a right half-plane for `B`.
    pub fn piece_contains(&self, x2: i64, w: C) -> bool {
        let r = self.radius;
        if x2 % 2 == 0 {
            w.im > r || w.im < -r || w.re < -r
        } else {
            w.re > r
        }
    }

    /// Evaluate the developing map `φ_x = Λ_x ∘ exp` on piece `AB_x`.
    pub fn developing_eval(&self, x2: i64, w: C) -> Result<C, IrregularError> {
        if !self.piece_contains(x2, w) {
            return Err(IrregularError::OutsidePiece(format!("AB_{}", x2 as f64 / 2.0)));
        }
        Ok(self.lambda_at(x2).apply(w.exp()))
    }

    /// Recover the family as `u_n = Λ_n(0)`.
    pub fn extract_family(&self) -> AsymptoticFamily {
        let m = self.family.period();
        let base = (0..m as i64).map(|n| self.lambda_at(2 * n).b).collect::<Vec<_>>();
        let u_m = self.holonomy.apply(base[0]);
        let offset = u_m - self.family.holonomy_factor() * base[0];
        AsymptoticFamily { d: self.family.d, res: self.family.res, base, offset }
    }
}

/// Admissibility condition for a gluing `G_{s,b}` at half-plane parameter R:
/// `e^R > |b| + e^{Re s} e^{-R}`.
pub fn admissible(radius: f64, s: C, b: C) -> f64 {
    radius.exp() - (b.norm() + s.re.exp() * (-radius).exp())
}

/// Build the canonical model of a family. When `radius` is absent, the
/// smallest power of two exceeding `2π` and satisfying the admissibility
/// condition with margin `2π` on every gluing is used.
pub fn build_canonical_model(fam: &AsymptoticFamily, radius: Option<f64>) -> CanonicalModel {
    let m = fam.period();
    let d = fam.d as f64;
    let s = TAU * I * (fam.res - c(d, 0.0)) / c(m as f64, 0.0);
    let lambda: Vec<AffineMap> =
        (0..m as i64).map(|n| AffineMap::new((-s * c(n as f64, 0.0)).exp(), fam.value(n))).collect();
    // Λ_n = Λ_{n+1} ∘ L_{n+1/4} forces b_{n+1/4} = (u_n - u_{n+1}) e^{(n+1)s}.
    let upper: Vec<LogGlue> = (0..m as i64)
        .map(|n| {
            let b = (fam.value(n) - fam.value(n + 1)) * (s * c((n + 1) as f64, 0.0)).exp();
            LogGlue::new(s, b)
        })
        .collect();
    let radius = radius.unwrap_or_else(|| {
        let mut r = 1.0f64;
        loop {
            let ok = r > TAU
                && upper.iter().all(|g| admissible(r, g.s, g.b) > TAU)
                && admissible(r, c(0.0, 0.0), c(0.0, 0.0)) > TAU;
            if ok {
                break r;
            }
            r *= 2.0;
        }
    });
    let holonomy = fam.holonomy();
    CanonicalModel { family: fam.clone(), s, lambda, upper, radius, holonomy }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C, b: C, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn family_expand_cases() {
        // Centered family.
        let fam = AsymptoticFamily::new(3, c(1.5, 0.0), vec![c(0.0, 0.0); 2], c(0.0, 0.0)).unwrap();
        for n in [-7, -1, 0, 3, 12] {
            assert!(fam.value(n).norm() < 1e-12);
        }
        // d=2, res ∈ ℤ, u_0 = 0, b = 1 gives u_n = n.
        let fam = AsymptoticFamily::new(2, c(2.0, 0.0), vec![c(0.0, 0.0)], c(1.0, 0.0)).unwrap();
        for n in [-5i64, -1, 0, 1, 8] {
            assert!(close(fam.value(n), c(n as f64, 0.0), 1e-9), "u_{n} = {}", fam.value(n));
        }
        // d=2, res=0.25, u_0=1, b=0: u_n = (-i)^n.
        let fam = AsymptoticFamily::new(2, c(0.25, 0.0), vec![c(1.0, 0.0)], c(0.0, 0.0)).unwrap();
        assert!(close(fam.value(1), c(0.0, -1.0), 1e-12));
        assert!(close(fam.value(2), c(-1.0, 0.0), 1e-12));
        assert!(close(fam.value(-1), c(0.0, 1.0), 1e-12));
    }

    #[test]
    fn recurrence_closure_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let fam = AsymptoticFamily::new(
            4,
            c(1.3, -0.2),
            vec![c(0.5, 0.1), c(-1.0, 0.4), c(2.0, -0.7)],
            c(0.3, 0.9),
        )
        .unwrap();
        let a = fam.holonomy_factor();
        for _ in 0..200 {
            let k: i64 = rng.gen_range(-40..40);
            let lhs = fam.value(k + 3);
            let rhs = a * fam.value(k) + fam.offset;
            assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
        }
    }

    #[test]
    fn axes_examples() {
        let rep = repelling_axes(c(1.0, 0.0), 2).unwrap();
        assert_eq!(rep.len(), 1);
        assert!(rep[0].abs() < 1e-12);
        let att = attracting_axes(c(1.0, 0.0), 2).unwrap();
        assert!((att[0].abs() - std::f64::consts::PI).abs() < 1e-12);

        let rep4 = repelling_axes(c(1.0, 0.0), 4).unwrap();
        assert_eq!(rep4.len(), 3);
        let mut sorted = rep4.clone();
        sorted.sort_by(f64::total_cmp);
        assert!((sorted[1] - sorted[0] - TAU / 3.0).abs() < 1e-12);
        assert!((sorted[2] - sorted[1] - TAU / 3.0).abs() < 1e-12);
        // Defining condition: -a e^{-i(d-1)θ} ∈ ℝ₋.
        for &t in &rep4 {
            let v = -c(1.0, 0.0) * (-I * c(3.0 * t, 0.0)).exp();
            assert!(v.im.abs() < 1e-12 && v.re < 0.0);
        }
    }

    #[test]
    fn equality_affine_relation() {
        let f1 = AsymptoticFamily::new(2, c(2.0, 0.0), vec![c(0.0, 0.0)], c(1.0, 0.0)).unwrap();
        // u'_n = 2n + 5.
        let f2 = AsymptoticFamily::new(2, c(2.0, 0.0), vec![c(5.0, 0.0)], c(2.0, 0.0)).unwrap();
        let w = invariants_equal(&f1, &f2, false).expect("families are affinely related");
        assert!(close(w.map.a, c(2.0, 0.0), 1e-9));
        assert!(close(w.map.b, c(5.0, 0.0), 1e-9));

        // Centered vs non-centered never match.
        let centered = AsymptoticFamily::new(2, c(2.0, 0.0), vec![c(0.0, 0.0)], c(0.0, 0.0)).unwrap();
        assert!(invariants_equal(&centered, &f1, true).is_none());
    }

    #[test]
    fn equality_needs_shift() {
        // Period-2 families (0,1) vs (1,0) are already equal without a shift
        // through z ↦ 1 - z.
        let f1 = AsymptoticFamily::new(3, c(3.0, 0.0), vec![c(0.0, 0.0), c(1.0, 0.0)], c(0.0, 0.0)).unwrap();
        let f2 = AsymptoticFamily::new(3, c(3.0, 0.0), vec![c(1.0, 0.0), c(0.0, 0.0)], c(0.0, 0.0)).unwrap();
        let w = invariants_equal(&f1, &f2, false).expect("affinely related without shift");
        assert!(close(w.map.apply(c(0.0, 0.0)), c(1.0, 0.0), 1e-9));

        // Period-3 family (0,1,3): its shift is not affinely related to it,
        // so the shifted copy matches only when shifts are allowed.
        let g1 = AsymptoticFamily::new(
            4,
            c(4.0, 0.0),
            vec![c(0.0, 0.0), c(1.0, 0.0), c(3.0, 0.0)],
            c(0.0, 0.0),
        )
        .unwrap();
        let g2 = g1.shifted(1);
        assert!(invariants_equal(&g1, &g2, false).is_none());
        // g2_k = g1_{k+1}, and g1 is 3-periodic, so the witnessing shift is 2.
        let w = invariants_equal(&g1, &g2, true).expect("equal up to shift");
        assert_eq!(w.shift, 2);
    }

    #[test]
    fn centeredness() {
        let f = AsymptoticFamily::new(2, c(2.0, 0.0), vec![c(0.0, 0.0)], c(0.0, 0.0)).unwrap();
        assert!(f.is_centered());
        let f = AsymptoticFamily::new(2, c(2.0, 0.0), vec![c(0.0, 0.0)], c(1.0, 0.0)).unwrap();
        assert!(!f.is_centered());
        // Non-constant family.
        let f = AsymptoticFamily::new(2, c(0.5, 0.0), vec![c(1.0, 0.0)], c(0.0, 0.0)).unwrap();
        assert!(!f.is_centered());
    }

    #[test]
    fn canonical_model_centered_is_trivial() {
        let fam = AsymptoticFamily::new(2, c(2.0, 0.0), vec![c(0.0, 0.0)], c(0.0, 0.0)).unwrap();
        let model = build_canonical_model(&fam, None);
        assert!(model.s.norm() < 1e-12);
        assert!(close(model.lambda[0].a, c(1.0, 0.0), 1e-12));
        assert!(model.lambda[0].b.norm() < 1e-12);
        assert!(model.upper[0].b.norm() < 1e-12);
    }

    #[test]
    fn canonical_model_integer_family() {
        // d=2, res=2, u_n = n: s = 0, b_{n+1/4} = -1.
        let fam = AsymptoticFamily::new(2, c(2.0, 0.0), vec![c(0.0, 0.0)], c(1.0, 0.0)).unwrap();
        let model = build_canonical_model(&fam, None);
        assert!(model.s.norm() < 1e-12);
        assert!(close(model.upper[0].b, c(-1.0, 0.0), 1e-12));
        // Developing value along a leftward ray tends to u_n.
        let v = model.developing_eval(2, c(-40.0, 0.0)).unwrap();
        assert!(close(v, c(1.0, 0.0), 1e-12));
    }

    #[test]
    fn model_consistency_and_round_trip() {
        let fam = AsymptoticFamily::new(
            4,
            c(1.3, -0.2),
            vec![c(0.0, 0.0), c(1.0, 0.5), c(-0.4, 2.0)],
            c(0.7, -0.3),
        )
        .unwrap();
        let model = build_canonical_model(&fam, None);
        // Gluing-sum identity.
        let expect = TAU * I * (fam.res - c(4.0, 0.0));
        assert!(close(model.glue_exponent_sum(), expect, 1e-12));
        // Λ recurrence: Λ_n = Λ_{n+1} ∘ L_{n+1/4}.
        for n in 0..6i64 {
            let lhs = model.lambda_at(2 * n);
            let rhs = model.lambda_at(2 * (n + 1)).compose(&model.upper_glue(n).descended());
            assert!(close(lhs.a, rhs.a, 1e-10) && close(lhs.b, rhs.b, 1e-10), "n = {n}");
        }
        // Developing consistency across an upper gluing: points of A_n with
        // Im > R glued to B_{n+1/2}.
        let w = c(model.radius + 1.0, model.radius + 2.0);
        for n in 0..3i64 {
            let g = model.upper_glue(n);
            let w2 = g.apply(w).unwrap();
            let v1 = model.lambda_at(2 * n).apply(w.exp());
            let v2 = model.lambda_at(2 * n + 1).apply(w2.exp());
            assert!((v1 - v2).norm() <= 1e-10 * (1.0 + v1.norm()), "gluing {n}: {v1} vs {v2}");
        }
        // Holonomy: eval at (x+m, w) = L(eval at (x, w)).
        let w = c(-model.radius - 3.0, 0.5);
        let lhs = model.developing_eval(2 * 3, w).unwrap();
        let rhs = model.holonomy.apply(model.developing_eval(0, w).unwrap());
        assert!(close(lhs, rhs, 1e-9));
        // Round trip.
        let back = model.extract_family();
        let w = invariants_equal(&fam, &back, false).expect("round trip");
        assert_eq!(w.shift, 0);
        assert!(close(w.map.a, c(1.0, 0.0), 1e-9) && w.map.b.norm() < 1e-9);
        // Numeric probe: developing value near the focus approaches u_n.
        let t = model.radius + 5.0;
        for n in 0..3i64 {
            let v = model.developing_eval(2 * n, c(-t, 0.0)).unwrap();
            let lam = model.lambda_at(2 * n);
            assert!((v - fam.value(n)).norm() < (-t + 1.0).exp() * lam.a.norm());
        }
    }

    #[test]
    fn canonical_invariant_representative() {
        let f1 = AsymptoticFamily::new(3, c(3.0, 0.0), vec![c(2.0, 1.0), c(4.0, 1.0)], c(0.0, 0.0)).unwrap();
        let (tuple, _) = canonical_invariant(&f1, false);
        assert!(close(tuple[0], c(0.0, 0.0), 1e-12));
        assert!(close(tuple[1], c(1.0, 0.0), 1e-12));
    }
}
