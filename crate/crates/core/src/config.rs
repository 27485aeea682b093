//! Global numeric tolerances and budgets.
//!
//! All geometry in this crate is double precision; the tolerances below leave
//! headroom above machine epsilon. They can be adjusted globally (`set`) or
//! through the `AFFSURF_EPS` / `AFFSURF_BUDGET_PIVOTS` environment variables.

use std::sync::RwLock;

#[derive(Debug, Clone, Copy)]
pub struct Config {
    /// Threshold below which a linear factor counts as zero.
    pub eps_zero: f64,
    /// Geometric coincidence tolerance, scaled by a local diameter where one exists.
    pub eps_geom: f64,
    /// Angular tolerance in radians.
    pub eps_arg: f64,
    /// Relative apex-hit tolerance for geodesic tracing.
    pub eps_hit: f64,
    /// Default crossing budget for a single trace.
    pub max_crossings: usize,
    /// Pivot budget for a full Delaunay spine traversal.
    pub max_pivots: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            eps_zero: 1e-12,
            eps_geom: 1e-9,
            eps_arg: 1e-9,
            eps_hit: 1e-7,
            max_crossings: 10_000,
            max_pivots: 100_000,
        }
    }
}

static CONFIG: RwLock<Option<Config>> = RwLock::new(None);

fn from_env() -> Config {
    let mut cfg = Config::default();
    if let Ok(v) = std::env::var("AFFSURF_EPS") {
        if let Ok(eps) = v.parse::<f64>() {
            if (1e-14..=1e-4).contains(&eps) {
                cfg.eps_geom = eps;
            }
        }
    }
    if let Ok(v) = std::env::var("AFFSURF_BUDGET_PIVOTS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                cfg.max_pivots = n;
            }
        }
    }
    cfg
}

pub fn get() -> Config {
    let guard = CONFIG.read().unwrap();
    match *guard {
        Some(cfg) => cfg,
        None => {
            drop(guard);
            let cfg = from_env();
            *CONFIG.write().unwrap() = Some(cfg);
            cfg
        }
    }
}

pub fn set(cfg: Config) {
    *CONFIG.write().unwrap() = Some(cfg);
}
