//! Invertible complex-affine maps `z ↦ a z + b` and the log-chart gluing
//! maps `G_{s,b}(z) = z + s + log_p(1 + b e^{-z-s})`.
//!
//! Affine maps are the universal gluing and holonomy objects of the crate:
//! every edge pairing and every developed holonomy is one of them. `LogGlue`
//! is the canonical lift of `z ↦ e^s z + b` through `exp`, used to glue
//! log-charts of irregular singularity models.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::config;
use crate::error::AffineError;

pub type C = Complex64;

pub const I: C = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C {
    Complex64::new(re, im)
}

/// An invertible affine self-map of the plane, `z ↦ a z + b` with `a ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub a: C,
    pub b: C,
}

impl AffineMap {
    pub fn new(a: C, b: C) -> Self {
        AffineMap { a, b }
    }

    pub fn identity() -> Self {
        AffineMap { a: c(1.0, 0.0), b: c(0.0, 0.0) }
    }

    pub fn translation(b: C) -> Self {
        AffineMap { a: c(1.0, 0.0), b }
    }

    pub fn apply(&self, z: C) -> C {
        self.a * z + self.b
    }

    /// `self ∘ other`, i.e. `z ↦ self(other(z))`.
    pub fn compose(&self, other: &AffineMap) -> AffineMap {
        AffineMap { a: self.a * other.a, b: self.a * other.b + self.b }
    }

    pub fn inverse(&self) -> Result<AffineMap, AffineError> {
        if self.a.norm() <= config::get().eps_zero {
            return Err(AffineError::DegenerateMap { modulus: self.a.norm() });
        }
        let ai = c(1.0, 0.0) / self.a;
        Ok(AffineMap { a: ai, b: -self.b * ai })
    }

    /// Fixed point `b / (1 - a)`, when `a ≠ 1`.
    pub fn fixed_point(&self) -> Option<C> {
        let one = c(1.0, 0.0);
        if (self.a - one).norm() <= config::get().eps_zero {
            None
        } else {
            Some(self.b / (one - self.a))
        }
    }

    pub fn classify(&self) -> MapClass {
        let cfg = config::get();
        let one = c(1.0, 0.0);
        if (self.a - one).norm() <= cfg.eps_arg {
            if self.b.norm() <= cfg.eps_zero {
                return MapClass::Identity;
            }
            return MapClass::Translation { offset: self.b };
        }
        let fixed = self.b / (one - self.a);
        let arg = self.a.arg();
        if arg.abs() <= cfg.eps_arg && self.a.re > 0.0 {
            MapClass::Dilation { factor: self.a.re, fixed }
        } else {
            MapClass::Spiral { arg, modulus: self.a.norm(), fixed }
        }
    }
}

/// Coarse dynamical type of an affine map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapClass {
    Identity,
    Translation { offset: C },
    /// `a ∈ ℝ₊ \ {1}`: fixes a point and scales around it.
    Dilation { factor: f64, fixed: C },
    /// Any other linear factor: rotation and/or scaling around the fixed point.
    Spiral { arg: f64, modulus: f64, fixed: C },
}

/// Principal branch logarithm; errors when `z` is within `eps_geom` of the
/// cut `(-∞, 0]`.
pub fn log_principal(z: C) -> Result<C, AffineError> {
    let eps = config::get().eps_geom;
    let cut_dist = if z.re <= 0.0 { z.im.abs() } else { z.norm() };
    if cut_dist < eps {
        return Err(AffineError::OnSlit { value: z });
    }
    Ok(z.ln())
}

/// The gluing map `G_{s,b}(z) = z + s + log_p(1 + b e^{-z-s})`.
///
/// It is the lift through `exp` of `z ↦ e^s z + b`: `exp(G(z)) = e^s e^z + b`,
/// and it commutes with `z ↦ z + 2πi`, which makes it injective on its domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGlue {
    pub s: C,
    pub b: C,
}

impl LogGlue {
    pub fn new(s: C, b: C) -> Self {
        LogGlue { s, b }
    }

    pub fn identity() -> Self {
        LogGlue { s: c(0.0, 0.0), b: c(0.0, 0.0) }
    }

    /// The affine map downstairs: `z ↦ e^s z + b`.
    pub fn descended(&self) -> AffineMap {
        AffineMap { a: self.s.exp(), b: self.b }
    }

    pub fn apply(&self, z: C) -> Result<C, AffineError> {
        let one = c(1.0, 0.0);
        let inner = one + self.b * (-z - self.s).exp();
        Ok(z + self.s + log_principal(inner)?)
    }

    /// Exact inverse, domain included: `G_{-s, -e^{-s} b}`.
    pub fn inverse(&self) -> LogGlue {
        LogGlue { s: -self.s, b: -(-self.s).exp() * self.b }
    }

    /// `G(z) ~ z + s` as `Re z → +∞`; true when the correction term is tiny.
    pub fn is_translation_like(&self, z: C) -> bool {
        (self.b * (-z - self.s).exp()).norm() < 1e-3
    }
}

/// Reduce an angle to the representative in `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % TAU;
    if t > PI {
        t -= TAU;
    } else if t <= -PI {
        t += TAU;
    }
    t
}

/// Nearest integer `k` with `x ≈ base + k·2π`.
pub fn branch_index(x: f64, base: f64) -> i64 {
    ((x - base) / TAU).round() as i64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C, b: C, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn compose_basic() {
        let id = AffineMap::identity();
        let g = AffineMap::new(c(2.0, 0.0), c(3.0, 0.0));
        assert_eq!(id.compose(&g), g);

        // f=(2,1), g=(3,0): checked by evaluating both routes at z=0 and z=1.
        let f = AffineMap::new(c(2.0, 0.0), c(1.0, 0.0));
        let g = AffineMap::new(c(3.0, 0.0), c(0.0, 0.0));
        let h = f.compose(&g);
        for z in [c(0.0, 0.0), c(1.0, 0.0)] {
            assert!(close(h.apply(z), f.apply(g.apply(z)), 1e-15));
        }
        assert!(close(h.a, c(6.0, 0.0), 1e-15));
        assert!(close(h.b, c(1.0, 0.0), 1e-15));
    }

    #[test]
    fn residue_one_holonomy_is_translation() {
        // a = exp(-2πi·res) with res = 1 gives linear factor 1.
        let res = c(1.0, 0.0);
        let a = (-TAU * I * res).exp();
        let f = AffineMap::new(a, c(0.3, 0.7));
        match f.classify() {
            MapClass::Translation { .. } => {}
            other => panic!("expected translation, got {other:?}"),
        }
    }

    #[test]
    fn invert_round_trip() {
        let f = AffineMap::new(c(2.0, 0.0), c(4.0, 0.0));
        let fi = f.inverse().unwrap();
        assert!(close(fi.a, c(0.5, 0.0), 1e-15));
        assert!(close(fi.b, c(-2.0, 0.0), 1e-15));
        for z in [c(0.7, -0.3), c(-5.0, 2.0)] {
            assert!(close(f.compose(&fi).apply(z), z, 1e-12));
        }
        let t = AffineMap::translation(c(0.0, 3.0));
        assert!(close(t.inverse().unwrap().b, c(0.0, -3.0), 1e-15));
        assert!(AffineMap::new(c(0.0, 0.0), c(1.0, 0.0)).inverse().is_err());
    }

    #[test]
    fn classify_cases() {
        assert_eq!(AffineMap::identity().classify(), MapClass::Identity);
        match AffineMap::new(c(2.0, 0.0), c(0.0, 0.0)).classify() {
            MapClass::Dilation { factor, fixed } => {
                assert!((factor - 2.0).abs() < 1e-15);
                assert!(fixed.norm() < 1e-15);
            }
            other => panic!("expected dilation, got {other:?}"),
        }
        match AffineMap::new(I, c(0.0, 0.0)).classify() {
            MapClass::Spiral { arg, modulus, fixed } => {
                assert!((arg - PI / 2.0).abs() < 1e-12);
                assert!((modulus - 1.0).abs() < 1e-12);
                assert!(fixed.norm() < 1e-12);
            }
            other => panic!("expected spiral, got {other:?}"),
        }
    }

    #[test]
    fn log_glue_matches_descended_map() {
        let g = LogGlue::new(c(0.0, 0.0), c(0.0, 0.0));
        assert!(close(g.apply(c(0.4, 0.2)).unwrap(), c(0.4, 0.2), 1e-15));

        // s=0, b=1, z=0: exp(result) = 2.
        let g = LogGlue::new(c(0.0, 0.0), c(1.0, 0.0));
        let w = g.apply(c(0.0, 0.0)).unwrap();
        assert!((w.re - 2.0f64.ln()).abs() < 1e-12);
        assert!(w.im.abs() < 1e-12);

        let g = LogGlue::new(c(0.3, -0.9), c(0.2, 0.5));
        for z in [c(2.0, 0.1), c(3.0, -4.0), c(1.5, 7.0)] {
            let w = g.apply(z).unwrap();
            let lhs = w.exp();
            let rhs = g.s.exp() * z.exp() + g.b;
            assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        }
    }

    #[test]
    fn log_glue_inverse_law_on_right_half_plane() {
        let g = LogGlue::new(c(0.2, 0.4), c(-0.3, 0.8));
        let gi = g.inverse();
        for z in [c(3.0, 0.0), c(4.0, 2.0), c(5.0, -1.0)] {
            let w = gi.apply(g.apply(z).unwrap()).unwrap();
            assert!(close(w, z, 1e-12));
        }
    }

    #[test]
    fn log_glue_commutes_with_vertical_period() {
        let g = LogGlue::new(c(-0.1, 0.6), c(0.4, -0.2));
        for z in [c(2.5, 0.3), c(3.0, -2.0)] {
            let lhs = g.apply(z + TAU * I).unwrap();
            let rhs = g.apply(z).unwrap() + TAU * I;
            assert!(close(lhs, rhs, 1e-12));
        }
    }

    #[test]
    fn log_glue_rejects_cut() {
        // 1 + b e^{-z-s} lands on the negative real axis.
        let g = LogGlue::new(c(0.0, 0.0), c(-2.0, 0.0));
        assert!(matches!(g.apply(c(0.0, 0.0)), Err(AffineError::OnSlit { .. })));
    }
}
