//! Annealed survival curves, exponent fits in regime coordinates and the
//! simple-random-walk exit-time check.

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{sample_window_member, Environment};
use crate::error::AnnealedError;
use crate::law::{Regime, SiteLaw, Triple};
use crate::rates::{stretched_bracket, Prediction};
use crate::stats::{compensated_sum, weighted_line_fit, CompensatedSum};
use crate::walk::{hitting_time_log_tail, quenched_survival_dp, KillingWalkSpec, WindowPolicy};

/// One grid point of an annealed curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub n: usize,
    /// Mean over environments of the bracket midpoint.
    pub p: f64,
    pub stderr: f64,
    /// Mean of the lower (absorbing) bounds.
    pub lower: f64,
    /// Mean of the upper (escape) bounds.
    pub upper: f64,
}

/// Provenance of a simulated curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveMeta {
    pub law_digest: String,
    pub seed: u64,
    pub n_envs: usize,
    pub r: f64,
    pub policy: WindowPolicy,
}

/// Estimated `P(tau > n)` along a grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub points: Vec<CurvePoint>,
    pub meta: Option<CurveMeta>,
}

pub const CSV_HEADER: &str = "n,p,stderr,lower,upper";

impl SurvivalCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for pt in &self.points {
            out.push_str(&format!("{},{},{},{},{}\n", pt.n, pt.p, pt.stderr, pt.lower, pt.upper));
        }
        out
    }

    /// Reads the CSV form; the header line is required.
    pub fn parse_csv(text: &str) -> Result<Self, AnnealedError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => {
                return Err(AnnealedError::Parse {
                    line: 1,
                    message: format!("expected header '{CSV_HEADER}'"),
                })
            }
        }
        let mut points = Vec::new();
        for (i, line) in lines {
            let bad = |message: String| AnnealedError::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 5 {
                return Err(bad(format!("expected 5 fields, found {}", fields.len())));
            }
            let n = fields[0]
                .trim()
                .parse()
                .map_err(|_| bad(format!("invalid n '{}'", fields[0])))?;
            let mut v = [0.0; 4];
            for (slot, f) in v.iter_mut().zip(&fields[1..]) {
                *slot = f.trim().parse().map_err(|_| bad(format!("invalid number '{f}'")))?;
            }
            points.push(CurvePoint {
                n,
                p: v[0],
                stderr: v[1],
                lower: v[2],
                upper: v[3],
            });
        }
        Ok(SurvivalCurve { points, meta: None })
    }
}

/// Powers of two `2^lo ..= 2^hi`.
pub fn power_grid(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|j| 1usize << j).collect()
}

/// Default grid `2^7 ..= 2^13`.
pub fn default_grid() -> Vec<usize> {
    power_grid(7, 13)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnealedConfig {
    pub r: f64,
    pub grid: Vec<usize>,
    pub n_envs: usize,
    pub seed: u64,
    pub policy: WindowPolicy,
}

impl AnnealedConfig {
    fn validate(&self) -> Result<(), AnnealedError> {
        if self.grid.is_empty() || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AnnealedError::InvalidConfig("grid must be nonempty and increasing".into()));
        }
        if self.n_envs < 2 {
            return Err(AnnealedError::InvalidConfig("need at least 2 environments".into()));
        }
        if !(0.0..=1.0).contains(&self.r) {
            return Err(AnnealedError::InvalidConfig(format!("killing probability {} outside [0, 1]", self.r)));
        }
        Ok(())
    }
}

/// Lower and upper survival bounds at the grid points for one environment.
fn environment_bounds(law: &SiteLaw, cfg: &AnnealedConfig, member: u64) -> Result<Vec<(f64, f64)>, AnnealedError> {
    let n_max = *cfg.grid.last().expect("validated");
    let half = cfg.policy.half_width(n_max) as i64;
    let env = sample_window_member(law, cfg.seed, member, -half, half);
    let spec = KillingWalkSpec::new(&env, cfg.r, 0, n_max, cfg.policy)?;
    let b = quenched_survival_dp(&spec)?;
    Ok(cfg.grid.iter().map(|&n| (b.lower[n], b.upper[n])).collect())
}

/// `P(tau > n) = E[P_omega(tau > n)]` estimated from `n_envs` sampled
/// environments, one DP sweep each. Environments are addressed by index and
/// the reduction runs in index order, so the curve does not depend on the
/// worker count.
pub fn annealed_survival(law: &SiteLaw, cfg: &AnnealedConfig) -> Result<SurvivalCurve, AnnealedError> {
    cfg.validate()?;
    let per_env: Vec<Vec<(f64, f64)>> = (0..cfg.n_envs as u64)
        .into_par_iter()
        .map(|m| environment_bounds(law, cfg, m))
        .collect::<Result<_, _>>()?;
    let count = cfg.n_envs as f64;
    let points = cfg
        .grid
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            let mids: Vec<f64> = per_env.iter().map(|e| 0.5 * (e[g].0 + e[g].1)).collect();
            let mean = compensated_sum(mids.iter().copied()) / count;
            let var = compensated_sum(mids.iter().map(|m| (m - mean) * (m - mean))) / (count - 1.0);
            CurvePoint {
                n,
                p: mean,
                stderr: (var / count).sqrt(),
                lower: compensated_sum(per_env.iter().map(|e| e[g].0)) / count,
                upper: compensated_sum(per_env.iter().map(|e| e[g].1)) / count,
            }
        })
        .collect();
    Ok(SurvivalCurve {
        points,
        meta: Some(CurveMeta {
            law_digest: law.digest(),
            seed: cfg.seed,
            n_envs: cfg.n_envs,
            r: cfg.r,
            policy: cfg.policy,
        }),
    })
}

/// Largest number of environments visited by exhaustive enumeration.
pub const MAX_EXHAUSTIVE_ENVIRONMENTS: u64 = 5_000_000;

/// Calls `visit(weight, env)` for every atom assignment of the sites
/// `[-half, half]`, `weight` being the product of the atom weights.
fn for_each_environment(
    law: &SiteLaw,
    half: usize,
    mut visit: impl FnMut(f64, &Environment),
) -> Result<(), AnnealedError> {
    let atoms = law.atoms();
    let sites = 2 * half + 1;
    let total = (atoms.len() as u64).checked_pow(sites as u32);
    if total.map_or(true, |t| t > MAX_EXHAUSTIVE_ENVIRONMENTS) {
        return Err(AnnealedError::InvalidConfig(format!(
            "{} atoms on {sites} sites is too many environments to enumerate",
            atoms.len()
        )));
    }
    let mut digits = vec![0usize; sites];
    loop {
        let triples: Vec<Triple> = digits.iter().map(|&d| atoms[d].triple).collect();
        let weight: f64 = digits.iter().map(|&d| atoms[d].weight).product();
        visit(weight, &Environment::new(-(half as i64), triples)?);
        // odometer increment
        let mut i = 0;
        loop {
            if i == sites {
                return Ok(());
            }
            digits[i] += 1;
            if digits[i] < atoms.len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// `E[f(omega)]` over every atom assignment of the sites `[-half, half]`.
pub fn annealed_exhaustive_with(
    law: &SiteLaw,
    half: usize,
    f: impl Fn(&Environment) -> f64,
) -> Result<f64, AnnealedError> {
    let mut acc = CompensatedSum::new();
    for_each_environment(law, half, |w, env| acc.add(w * f(env)))?;
    Ok(acc.value())
}

/// Exact annealed `P(tau > t)`, `t = 0..=n`, by enumerating every
/// environment on `[-n, n]`.
pub fn annealed_exhaustive(law: &SiteLaw, r: f64, n: usize) -> Result<Vec<f64>, AnnealedError> {
    if !(0.0..=1.0).contains(&r) {
        return Err(AnnealedError::InvalidConfig(format!("killing probability {r} outside [0, 1]")));
    }
    let mut acc = vec![CompensatedSum::new(); n + 1];
    for_each_environment(law, n, |w, env| {
        let spec = KillingWalkSpec::new(env, r, 0, n, WindowPolicy::Strict).expect("validated");
        let s = quenched_survival_dp(&spec).expect("window covers the range");
        for (a, v) in acc.iter_mut().zip(&s.lower) {
            a.add(w * v);
        }
    })?;
    Ok(acc.iter().map(CompensatedSum::value).collect())
}

/// Fit coordinates per regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Coordinates {
    /// `ln p` against `ln n`.
    LogLog,
    /// `ln(-ln p)` against `ln ln n`.
    LogNegLogVsLogLog,
    /// `ln(-ln p)` against `ln n`.
    LogNegLogVsLog,
}

/// Weighted least-squares line in regime coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub regime: Regime,
    pub coordinates: Coordinates,
    pub slope: f64,
    /// 95% confidence half-width of the slope.
    pub slope_half_width: f64,
    pub intercept: f64,
    pub intercept_half_width: f64,
    pub residual_rms: f64,
    pub points: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// Intermediate regime: `-ln p / ln^{1+kappa} n` with the slope pinned at
    /// `1 + kappa` (weighted geometric mean over the points).
    pub pinned_coefficient: Option<f64>,
}

/// Minimum number of usable grid points for a fit.
pub const MIN_FIT_POINTS: usize = 4;
const Z95: f64 = 1.959963984540054;

/// Fits the curve in the coordinates of `regime`. Points with `p` in
/// `(0, 1)` and relative error below 1/2 are used.
pub fn fit_exponent(curve: &SurvivalCurve, regime: &Regime) -> Result<FitResult, AnnealedError> {
    let coordinates = match regime {
        Regime::Polynomial => Coordinates::LogLog,
        Regime::Intermediate { .. } => Coordinates::LogNegLogVsLogLog,
        Regime::StretchedExponential { .. } => Coordinates::LogNegLogVsLog,
        Regime::Unclassified => return Err(AnnealedError::UnclassifiedRegime),
    };
    if curve.points.iter().all(|p| p.p <= 0.0 || p.p >= 1.0) {
        return Err(AnnealedError::DegenerateCurve);
    }
    let usable: Vec<&CurvePoint> = curve
        .points
        .iter()
        .filter(|p| p.p > 0.0 && p.p < 1.0 && p.stderr >= 0.0 && p.stderr / p.p < 0.5 && p.n >= 2)
        .collect();
    if usable.len() < MIN_FIT_POINTS {
        return Err(AnnealedError::InsufficientData {
            usable: usable.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    let mut x = Vec::with_capacity(usable.len());
    let mut y = Vec::with_capacity(usable.len());
    let mut w = Vec::with_capacity(usable.len());
    for pt in &usable {
        let ln_n = (pt.n as f64).ln();
        let ln_p = pt.p.ln();
        // delta method: sd of the transformed ordinate
        let sd = match coordinates {
            Coordinates::LogLog => {
                x.push(ln_n);
                y.push(ln_p);
                pt.stderr / pt.p
            }
            Coordinates::LogNegLogVsLogLog => {
                x.push(ln_n.ln());
                y.push((-ln_p).ln());
                pt.stderr / (pt.p * ln_p.abs())
            }
            Coordinates::LogNegLogVsLog => {
                x.push(ln_n);
                y.push((-ln_p).ln());
                pt.stderr / (pt.p * ln_p.abs())
            }
        };
        w.push(1.0 / (sd * sd + 1e-30));
    }
    let fit = weighted_line_fit(&x, &y, &w).ok_or(AnnealedError::InsufficientData {
        usable: usable.len(),
        needed: MIN_FIT_POINTS,
    })?;
    let pinned_coefficient = match *regime {
        Regime::Intermediate { kappa, .. } => {
            let sw = compensated_sum(w.iter().copied());
            let mean = compensated_sum(x.iter().zip(&y).zip(&w).map(|((xi, yi), wi)| wi * (yi - (1.0 + kappa) * xi))) / sw;
            Some(mean.exp())
        }
        _ => None,
    };
    Ok(FitResult {
        regime: *regime,
        coordinates,
        slope: fit.slope,
        slope_half_width: Z95 * fit.slope_se,
        intercept: fit.intercept,
        intercept_half_width: Z95 * fit.intercept_se,
        residual_rms: fit.residual_rms,
        points: fit.points,
        n_min: usable.first().map_or(0, |p| p.n),
        n_max: usable.last().map_or(0, |p| p.n),
        pinned_coefficient,
    })
}

/// Fits over the nested windows `n >= start` for each start.
pub fn nested_window_fits(
    curve: &SurvivalCurve,
    regime: &Regime,
    starts: &[usize],
) -> Result<Vec<FitResult>, AnnealedError> {
    starts
        .iter()
        .map(|&s| {
            let sub = SurvivalCurve {
                points: curve.points.iter().filter(|p| p.n >= s).copied().collect(),
                meta: None,
            };
            fit_exponent(&sub, regime)
        })
        .collect()
}

/// `(l^2 / n) ln P(U >= n)` for the symmetric holding-free walk from 0,
/// absorbed at `-l` and `l`.
pub fn srw_exit_check(l: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let l = l as i64;
    let env = Environment::homogeneous(-l, l, Triple::new(0.5, 0.0, 0.5)).expect("valid triple");
    let tail = hitting_time_log_tail(&env, -l, l, 0, n - 1).expect("valid interval");
    (l * l) as f64 / n as f64 * tail[n - 1]
}

/// Relative tolerance of the polynomial exponent comparison.
pub const POLYNOMIAL_REL_TOL: f64 = 0.5;

/// Outcome of comparing a fit against a prediction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub predicted: Prediction,
    pub fitted: f64,
    pub bracket: [f64; 2],
    pub pass: bool,
}

/// Polynomial: `-slope` within `[0.5 D, 1.5 D]`. Intermediate: the pinned
/// coefficient within the coefficient bracket. Stretched: the slope within
/// `[kappa/(1+5kappa), kappa]`.
pub fn compare(prediction: &Prediction, fit: &FitResult) -> Result<Verdict, AnnealedError> {
    let (fitted, bracket) = match *prediction {
        Prediction::Polynomial { exponent } => (
            -fit.slope,
            [(1.0 - POLYNOMIAL_REL_TOL) * exponent, (1.0 + POLYNOMIAL_REL_TOL) * exponent],
        ),
        Prediction::Intermediate { lower, upper, .. } => (
            fit.pinned_coefficient.ok_or_else(|| {
                AnnealedError::InvalidConfig("fit was not made in intermediate coordinates".into())
            })?,
            [lower, upper],
        ),
        Prediction::StretchedExponential { kappa, .. } => {
            let (a, b) = stretched_bracket(kappa);
            (fit.slope, [a, b])
        }
    };
    Ok(Verdict {
        predicted: *prediction,
        fitted,
        bracket,
        pass: fitted >= bracket[0] && fitted <= bracket[1],
    })
}
