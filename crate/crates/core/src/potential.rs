//! Potential landscape, barrier heights and valley events.
//!
//! The potential is piecewise constant on unit cells, `V(x) = V(floor x)`,
//! so every quantity here reduces to the integer grid.

use serde::Serialize;

use crate::env::Environment;
use crate::error::PotentialError;
use crate::law::Safety;

fn cell(x: f64) -> i64 {
    x.floor() as i64
}

fn out_of_window(env: &Environment, index: i64) -> PotentialError {
    PotentialError::OutOfWindow {
        index,
        lo: env.lo(),
        hi: env.hi(),
    }
}

fn potential_cell(env: &Environment, m: i64) -> Result<f64, PotentialError> {
    if env.potential_values().is_none() {
        return Err(PotentialError::OriginOutsideWindow {
            lo: env.lo(),
            hi: env.hi(),
        });
    }
    env.potential_at(m).ok_or_else(|| out_of_window(env, m))
}

/// `V(x)` for real `x`.
pub fn potential(env: &Environment, x: f64) -> Result<f64, PotentialError> {
    potential_cell(env, cell(x))
}

/// Barrier heights of an interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Barrier {
    /// Largest rise `V(q) - V(p)`, `p <= q`.
    pub plus: f64,
    /// Largest drop `V(p) - V(q)`, `p <= q`.
    pub minus: f64,
    /// `min(plus, minus)`.
    pub height: f64,
}

fn interval_cells<'a>(env: &'a Environment, a: f64, c: f64) -> Result<&'a [f64], PotentialError> {
    if !(a < c) {
        return Err(PotentialError::InvalidInterval { a, c });
    }
    let (ma, mc) = (cell(a), cell(c));
    potential_cell(env, ma)?;
    potential_cell(env, mc)?;
    let v = env.potential_values().expect("checked above");
    Ok(&v[(ma - env.lo()) as usize..=(mc - env.lo()) as usize])
}

/// `H_+`, `H_-` and `H` on `[a, c]` in one pass (maximal rise / drop).
pub fn barrier_heights(env: &Environment, a: f64, c: f64) -> Result<Barrier, PotentialError> {
    let cells = interval_cells(env, a, c)?;
    let (mut low, mut high) = (cells[0], cells[0]);
    let (mut rise, mut drop) = (0.0f64, 0.0f64);
    for &v in cells {
        low = low.min(v);
        high = high.max(v);
        rise = rise.max(v - low);
        drop = drop.max(high - v);
    }
    Ok(Barrier {
        plus: rise,
        minus: drop,
        height: rise.min(drop),
    })
}

/// Reference evaluation of the barrier heights straight from the
/// split-point definition: for every split cell `b`,
/// `max_{[b,c]} V - min_{[a,b]} V` and its mirror. Quadratic in the length.
pub fn barrier_heights_quadratic(env: &Environment, a: f64, c: f64) -> Result<Barrier, PotentialError> {
    let cells = interval_cells(env, a, c)?;
    let len = cells.len();
    let mut plus = f64::NEG_INFINITY;
    let mut minus = f64::NEG_INFINITY;
    for b in 0..len {
        let left_min = cells[..=b].iter().copied().fold(f64::INFINITY, f64::min);
        let left_max = cells[..=b].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let right_min = cells[b..].iter().copied().fold(f64::INFINITY, f64::min);
        let right_max = cells[b..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        plus = plus.max(right_max - left_min);
        minus = minus.max(left_max - right_min);
    }
    Ok(Barrier {
        plus,
        minus,
        height: plus.min(minus),
    })
}

/// For the integer interval `[a, c]` returns `(a_bar, b, c_bar)`: `b` the
/// (leftmost) potential minimum, `a_bar` the (leftmost) maximum on `[a, b]`
/// and `c_bar` the (rightmost) maximum on `[b, c]`.
pub fn reduce_to_maxima(env: &Environment, a: i64, c: i64) -> Result<(i64, i64, i64), PotentialError> {
    let cells = interval_cells(env, a as f64, c as f64)?;
    let arg = |range: std::ops::RangeInclusive<usize>, better: fn(f64, f64) -> bool| {
        let mut best = *range.start();
        for i in range {
            if better(cells[i], cells[best]) {
                best = i;
            }
        }
        best
    };
    let b = arg(0..=cells.len() - 1, |x, y| x < y);
    let a_bar = arg(0..=b, |x, y| x > y);
    let mut c_bar = b;
    for i in b..cells.len() {
        if cells[i] >= cells[c_bar] {
            c_bar = i;
        }
    }
    Ok((a + a_bar as i64, a + b as i64, a + c_bar as i64))
}

/// Floor of a width in sites, snapping values within 1e-9 of an integer so
/// that widths built as `w / ln n` reproduce `w` exactly.
fn floor_span(v: f64) -> i64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r as i64
    } else {
        v.floor() as i64
    }
}

/// Outcome of a valley test at one center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ValleyDescriptor {
    pub center: i64,
    pub b1: f64,
    pub b2: f64,
    pub h: f64,
    pub k: Safety,
    pub n: f64,
    pub holds: bool,
}

impl ValleyDescriptor {
    /// Integer hull `[x + floor(-b1 ln n), x + floor(b2 ln n)]`.
    pub fn hull(&self) -> (i64, i64) {
        hull(self.center, self.b1, self.b2, self.n.ln())
    }
}

fn hull(x: i64, b1: f64, b2: f64, ln_n: f64) -> (i64, i64) {
    (x + floor_span(-b1 * ln_n), x + floor_span(b2 * ln_n))
}

fn depth_reached(rise: f64, depth: f64) -> bool {
    rise >= depth - 1e-12 * depth.abs().max(1.0)
}

/// Tests the valley event at center `x`: every site of the hull is safe at
/// level `k`, `V(x)` is the minimum over the hull (ties allowed), and the
/// potential rises by at least `h ln n` to both hull endpoints.
pub fn detect_valley(
    env: &Environment,
    x: i64,
    b1: f64,
    b2: f64,
    h: f64,
    n: f64,
    k: Safety,
) -> Result<ValleyDescriptor, PotentialError> {
    if !(b1 > 0.0 && b2 > 0.0 && h > 0.0) {
        return Err(PotentialError::InvalidParameters(format!(
            "b1 = {b1}, b2 = {b2}, h = {h} must all be positive"
        )));
    }
    if !(n >= 2.0) {
        return Err(PotentialError::InvalidParameters(format!("n = {n} must be at least 2")));
    }
    let ln_n = n.ln();
    let (left, right) = hull(x, b1, b2, ln_n);
    let v_left = potential_cell(env, left)?;
    let v_right = potential_cell(env, right)?;
    let v_x = potential_cell(env, x)?;
    let safe = (left..=right).all(|i| k.admits(env.site(i).expect("inside hull").zero));
    let minimal = (left..=right).all(|i| v_x <= env.potential_at(i).expect("inside hull"));
    let depth = h * ln_n;
    let holds = safe && minimal && depth_reached(v_left - v_x, depth) && depth_reached(v_right - v_x, depth);
    Ok(ValleyDescriptor {
        center: x,
        b1,
        b2,
        h,
        k,
        n,
        holds,
    })
}

/// All holding valleys with integer half-widths (in sites), ordered by
/// center, then `b1`, then `b2`.
pub fn scan_valleys(env: &Environment, n: f64, k: Safety, h: f64) -> Vec<ValleyDescriptor> {
    let Some(values) = env.potential_values() else {
        return Vec::new();
    };
    if !(n >= 2.0 && h > 0.0) {
        return Vec::new();
    }
    let ln_n = n.ln();
    let depth = h * ln_n;
    let lo = env.lo();
    let len = values.len();
    let safe: Vec<bool> = env.sites().iter().map(|t| k.admits(t.zero)).collect();
    let mut out = Vec::new();
    for ci in 0..len {
        if !safe[ci] {
            continue;
        }
        let v_x = values[ci];
        let reach = |step: isize| {
            let mut widths = Vec::new();
            let mut w = 1usize;
            loop {
                let j = ci as isize + step * w as isize;
                if j < 0 || j as usize >= len {
                    break;
                }
                let j = j as usize;
                if !safe[j] || values[j] < v_x {
                    break;
                }
                if depth_reached(values[j] - v_x, depth) {
                    widths.push(w);
                }
                w += 1;
            }
            widths
        };
        let lefts = reach(-1);
        if lefts.is_empty() {
            continue;
        }
        let rights = reach(1);
        for &w1 in &lefts {
            for &w2 in &rights {
                out.push(ValleyDescriptor {
                    center: lo + ci as i64,
                    b1: w1 as f64 / ln_n,
                    b2: w2 as f64 / ln_n,
                    h,
                    k,
                    n,
                    holds: true,
                });
            }
        }
    }
    out
}
