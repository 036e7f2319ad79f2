//! Golden-section minimization on a logarithmic scale, with bracket
//! expansion when the minimizer lands on an edge.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenConfig {
    /// Target relative width of the final bracket.
    pub rel_tol: f64,
    /// Number of times an edge may be pushed outward after a boundary hit.
    pub max_expansions: u32,
    /// Factor applied to the offending edge on each expansion.
    pub expansion_factor: f64,
    /// If set, probe `x·(1±rel_tol)` after convergence and walk downhill so
    /// that the returned point is a discrete local minimum at that spacing.
    pub polish: bool,
    /// Fail instead of returning when the minimizer is still on an edge
    /// after all expansions.
    pub fail_on_boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOutcome {
    pub x: f64,
    pub value: f64,
    pub boundary_hit: bool,
    pub lo: f64,
    pub hi: f64,
    pub expansions: u32,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Edge {
    Lower,
    Upper,
}

struct Counted<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(f64) -> Result<f64>> Counted<F> {
    fn call(&mut self, x: f64) -> Result<f64> {
        self.evaluations += 1;
        let v = (self.f)(x)?;
        if v.is_nan() {
            return Err(Error::Search {
                message: format!("objective is NaN at {x}"),
                lo: x,
                hi: x,
                expansions: 0,
            });
        }
        Ok(v)
    }
}

/// One golden-section pass over `[ln lo, ln hi]`. Returns the best point and
/// which edge (if any) it is stuck to.
fn golden_pass<F: FnMut(f64) -> Result<f64>>(
    f: &mut Counted<F>,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<(f64, f64, Option<Edge>)> {
    let (a0, b0) = (lo.ln(), hi.ln());
    let (mut a, mut b) = (a0, b0);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f.call(c.exp())?;
    let mut fd = f.call(d.exp())?;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f.call(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f.call(d.exp())?;
        }
    }
    let (t, v) = if fc <= fd { (c, fc) } else { (d, fd) };
    let edge = if t - a0 <= tol {
        Some(Edge::Lower)
    } else if b0 - t <= tol {
        Some(Edge::Upper)
    } else {
        None
    };
    Ok((t.exp(), v, edge))
}

/// Minimizes `f` over `[lo, hi]` (both positive) by golden-section search in
/// `ln x`.
pub fn minimize_log<F>(f: F, lo: f64, hi: f64, config: &GoldenConfig) -> Result<SearchOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Search {
            message: "bracket must satisfy 0 < lo < hi".into(),
            lo,
            hi,
            expansions: 0,
        });
    }
    let tol = config.rel_tol.ln_1p();
    let mut f = Counted { f, evaluations: 0 };
    let (mut lo, mut hi) = (lo, hi);
    let mut expansions = 0;
    let (mut x, mut value, mut edge) = golden_pass(&mut f, lo, hi, tol)?;
    while let Some(side) = edge {
        if expansions >= config.max_expansions {
            break;
        }
        expansions += 1;
        match side {
            Edge::Lower => lo /= config.expansion_factor,
            Edge::Upper => hi *= config.expansion_factor,
        }
        (x, value, edge) = golden_pass(&mut f, lo, hi, tol)?;
    }

    if edge.is_some() && config.fail_on_boundary {
        return Err(Error::Search {
            message: format!("minimizer {x} stuck at the bracket edge"),
            lo,
            hi,
            expansions,
        });
    }

    if config.polish && edge.is_none() {
        let step = 1.0 + config.rel_tol;
        let up = f.call(x * step)?;
        let down = f.call(x / step)?;
        let (dir, mut next_value) = if up < value && up <= down {
            (step, up)
        } else if down < value {
            (1.0 / step, down)
        } else {
            (1.0, value)
        };
        if dir != 1.0 {
            // Walk downhill; the golden pass leaves us within a couple of
            // steps of the discrete minimum.
            loop {
                x *= dir;
                value = next_value;
                let probe = f.call(x * dir)?;
                if probe >= value {
                    break;
                }
                next_value = probe;
            }
        }
    }

    Ok(SearchOutcome {
        x,
        value,
        boundary_hit: edge.is_some(),
        lo,
        hi,
        expansions,
        evaluations: f.evaluations,
    })
}
