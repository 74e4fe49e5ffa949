//! Large-deviation exponents: log-MGFs of the conditioned log-ratio, their
//! Legendre transforms, the polynomial-regime exponents `C_k`, `D_k`, the
//! tilt roots `t_k^±`, the intermediate-regime exponents and the decay
//! predictions per regime.

use serde::Serialize;

use crate::error::RateError;
use crate::ext::ExtReal;
use crate::law::{LimitQuantities, Regime, Safety, SiteLaw};

/// Which power of `rho` is tilted: `rho^t` or `rho^-t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Tolerance on the derivative of the Legendre objective.
pub const LEGENDRE_TOL: f64 = 1e-10;
/// Absolute tolerance on the tilt roots.
pub const ROOT_TOL: f64 = 1e-12;
/// Relative accuracy target of the grid infimum of `C_k`.
pub const GRID_TOL: f64 = 1e-4;

const GRID_POINTS: usize = 64;
const GRID_ROUNDS: usize = 8;
const GRID_SPAN: (f64, f64) = (1e-2, 1e2);

/// Law of `±ln rho` conditioned on `w_zero <= 1/k`.
#[derive(Clone, Debug)]
struct Conditioned {
    values: Vec<f64>,
    log_weights: Vec<f64>,
    ln_p_safe: f64,
}

fn logsumexp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl Conditioned {
    fn new(law: &SiteLaw, k: Safety, sign: Sign) -> Result<Self, RateError> {
        let p = law.safe_probability(k);
        if !(p > 0.0) {
            return Err(RateError::EmptyConditioning);
        }
        let ln_p_safe = p.ln().min(0.0);
        let (values, log_weights) = law
            .atoms()
            .iter()
            .filter(|a| k.admits(a.triple.zero))
            .map(|a| (sign.factor() * a.triple.log_rho(), a.weight.ln() - ln_p_safe))
            .unzip();
        Ok(Conditioned {
            values,
            log_weights,
            ln_p_safe,
        })
    }

    fn log_mgf(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        logsumexp(self.values.iter().zip(&self.log_weights).map(|(x, lw)| lw + t * x))
    }

    /// Mean of the exponentially tilted law, `d/dt log_mgf`.
    fn tilted_mean(&self, t: f64) -> f64 {
        let exps: Vec<f64> = self
            .values
            .iter()
            .zip(&self.log_weights)
            .map(|(x, lw)| lw + t * x)
            .collect();
        let m = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for (x, e) in self.values.iter().zip(&exps) {
            let w = (e - m).exp();
            num += w * x;
            den += w;
        }
        num / den
    }

    fn ess_sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn mean(&self) -> f64 {
        self.tilted_mean(0.0)
    }

    fn at_edge(&self, x: f64) -> bool {
        let sup = self.ess_sup();
        (x - sup).abs() <= 1e-12 * sup.abs().max(1.0)
    }

    /// `sup_{t >= 0} (t x - log_mgf(t))`, `+inf` above the essential sup.
    fn legendre(&self, x: f64) -> f64 {
        let sup = self.ess_sup();
        if self.at_edge(x) {
            // The supremum is only reached as t -> inf: -ln P(X = sup).
            let top: Vec<f64> = self
                .values
                .iter()
                .zip(&self.log_weights)
                .filter(|(v, _)| self.at_edge(**v))
                .map(|(_, lw)| *lw)
                .collect();
            return (-logsumexp(top.iter().copied())).max(0.0);
        }
        if x > sup {
            return f64::INFINITY;
        }
        if x <= self.mean() {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.tilted_mean(hi) < x {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        let mut t = hi;
        for _ in 0..400 {
            t = 0.5 * (lo + hi);
            let g = x - self.tilted_mean(t);
            if g.abs() < LEGENDRE_TOL {
                break;
            }
            if g > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        (t * x - self.log_mgf(t)).max(0.0)
    }

    /// `b * legendre(h / b)`, the value of `sup_t {h t - b log_mgf(t)}`.
    fn scaled_legendre(&self, h: f64, b: f64) -> f64 {
        let v = self.legendre(h / b);
        if v.is_infinite() {
            v
        } else {
            b * v
        }
    }

    fn tilt_root(&self) -> Result<f64, RateError> {
        if self.ln_p_safe >= 0.0 {
            return Err(RateError::DegenerateKilling);
        }
        if !(self.ess_sup() > 0.0) {
            return Err(RateError::NoPositiveRoot);
        }
        let f = |t: f64| self.log_mgf(t) + self.ln_p_safe;
        let mut hi = 1.0;
        while f(hi) < 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while hi - lo > ROOT_TOL * 0.1 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// One side of `C_k`: `-b ln P + b legendre(h / b)`.
    fn side(&self, h: f64, b: f64) -> f64 {
        -b * self.ln_p_safe + self.scaled_legendre(h, b)
    }

    /// Infimum of [`Self::side`] over `b > 0` by a geometric grid around
    /// `h / ess sup`, zoomed in around the best point.
    fn side_inf(&self, h: f64) -> Result<(f64, f64), RateError> {
        let sup = self.ess_sup();
        if !(sup > 0.0) {
            return Err(RateError::NoPositiveRoot);
        }
        let scale = h / sup;
        let (mut lo, mut hi) = (GRID_SPAN.0 * scale, GRID_SPAN.1 * scale);
        let mut best = (f64::NAN, f64::INFINITY);
        for _ in 0..=GRID_ROUNDS {
            let ratio = (hi / lo).powf(1.0 / (GRID_POINTS - 1) as f64);
            let points: Vec<f64> = (0..GRID_POINTS).map(|i| lo * ratio.powi(i as i32)).collect();
            for &b in &points {
                let v = self.side(h, b);
                if v < best.1 {
                    best = (b, v);
                }
            }
            let centre = best.0;
            lo = centre / ratio;
            hi = centre * ratio;
        }
        Ok(best)
    }
}

/// `ln E(rho^{±t} | w_zero <= 1/k)`.
pub fn log_mgf(law: &SiteLaw, k: Safety, t: f64, sign: Sign) -> Result<f64, RateError> {
    Ok(Conditioned::new(law, k, sign)?.log_mgf(t))
}

/// `sup_{t >= 0} {t x - log_mgf(t)}`; `+inf` beyond the essential supremum.
pub fn legendre(law: &SiteLaw, k: Safety, x: f64, sign: Sign) -> Result<f64, RateError> {
    Ok(Conditioned::new(law, k, sign)?.legendre(x))
}

fn check_positive(name: &str, v: f64) -> Result<(), RateError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(RateError::InvalidArgument(format!("{name} = {v} must be positive and finite")))
    }
}

/// `C_k(b1, b2, h)`; `b1` goes with `rho^t`, `b2` with `rho^-t`.
pub fn c_k(law: &SiteLaw, k: Safety, b1: f64, b2: f64, h: f64) -> Result<f64, RateError> {
    check_positive("b1", b1)?;
    check_positive("b2", b2)?;
    check_positive("h", h)?;
    let plus = Conditioned::new(law, k, Sign::Plus)?;
    let minus = Conditioned::new(law, k, Sign::Minus)?;
    Ok(plus.side(h, b1) + minus.side(h, b2))
}

/// Unique `t > 0` with `E(rho^{±t} | w_zero <= 1/k) = 1 / P(w_zero <= 1/k)`.
pub fn t_root(law: &SiteLaw, k: Safety, sign: Sign) -> Result<f64, RateError> {
    Conditioned::new(law, k, sign)?.tilt_root()
}

/// `D_k(h) = h (t_k^+ + t_k^-)`.
pub fn d_k(law: &SiteLaw, k: Safety, h: f64) -> Result<f64, RateError> {
    check_positive("h", h)?;
    Ok(h * (t_root(law, k, Sign::Plus)? + t_root(law, k, Sign::Minus)?))
}

/// Numerical infimum of `C_k(., ., h)` over `b1, b2 > 0`, with its minimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridInfimum {
    pub value: f64,
    pub b1: f64,
    pub b2: f64,
}

/// Infimum of `C_k` by adaptive geometric grids. `C_k` separates into a
/// `b1` part and a `b2` part, each convex, so the axes are searched apart.
pub fn grid_inf_c_k(law: &SiteLaw, k: Safety, h: f64) -> Result<GridInfimum, RateError> {
    check_positive("h", h)?;
    let (b1, v1) = Conditioned::new(law, k, Sign::Plus)?.side_inf(h)?;
    let (b2, v2) = Conditioned::new(law, k, Sign::Minus)?.side_inf(h)?;
    Ok(GridInfimum { value: v1 + v2, b1, b2 })
}

/// `D_k` at one safety level, or why it is undefined there.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelRate {
    pub k: Safety,
    pub d_k: Option<f64>,
    pub note: Option<String>,
}

/// `D_k(h)` from both routes plus its values along a `k` grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DkReport {
    pub k: Safety,
    pub h: f64,
    pub t_plus: f64,
    pub t_minus: f64,
    pub d_k: f64,
    pub grid_infimum: GridInfimum,
    pub discrepancy: f64,
    pub k_grid: Vec<LevelRate>,
}

/// Levels at which `D_k` is tabulated.
pub const K_GRID: [f64; 8] = [2.0, 3.0, 5.0, 10.0, 30.0, 100.0, 1000.0, f64::INFINITY];

pub fn d_k_report(law: &SiteLaw, k: Safety, h: f64) -> Result<DkReport, RateError> {
    let t_plus = t_root(law, k, Sign::Plus)?;
    let t_minus = t_root(law, k, Sign::Minus)?;
    check_positive("h", h)?;
    let d = h * (t_plus + t_minus);
    let grid_infimum = grid_inf_c_k(law, k, h)?;
    let k_grid = K_GRID
        .iter()
        .map(|&level| {
            let level = if level.is_infinite() {
                Safety::Infinite
            } else {
                Safety::Level(level)
            };
            match d_k(law, level, h) {
                Ok(v) => LevelRate {
                    k: level,
                    d_k: Some(v),
                    note: None,
                },
                Err(e) => LevelRate {
                    k: level,
                    d_k: None,
                    note: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(DkReport {
        k,
        h,
        t_plus,
        t_minus,
        d_k: d,
        discrepancy: (grid_infimum.value - d).abs(),
        grid_infimum,
        k_grid,
    })
}

/// Limits entering the intermediate-regime exponents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntermediateInputs {
    pub eps_plus: f64,
    pub eps_minus: f64,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub a_plus: ExtReal,
    pub a_minus: ExtReal,
    pub a0_plus: ExtReal,
    pub a0_minus: ExtReal,
}

impl IntermediateInputs {
    pub fn from_limits(lim: &LimitQuantities) -> Result<Self, RateError> {
        let (eps_plus, eps_minus) = (lim.eps_plus.unwrap_or(0.0), lim.eps_minus.unwrap_or(0.0));
        if !(eps_plus > 0.0 && eps_minus > 0.0) {
            return Err(RateError::NontrivialityViolation { eps_plus, eps_minus });
        }
        let undefined = |name: &str| RateError::InvalidArgument(format!("limit {name} is undefined"));
        Ok(IntermediateInputs {
            eps_plus,
            eps_minus,
            delta_plus: lim.delta_plus.ok_or_else(|| undefined("delta_plus"))?,
            delta_minus: lim.delta_minus.ok_or_else(|| undefined("delta_minus"))?,
            a_plus: lim.a_plus.ok_or_else(|| undefined("a_plus"))?,
            a_minus: lim.a_minus.ok_or_else(|| undefined("a_minus"))?,
            a0_plus: lim.a0_plus.ok_or_else(|| undefined("a0_plus"))?,
            a0_minus: lim.a0_minus.ok_or_else(|| undefined("a0_minus"))?,
        })
    }

    /// `D = min{1, a^-} / eps^+ + min{1, a^+} / eps^-`.
    pub fn d(&self) -> f64 {
        min1(self.a_minus) / self.eps_plus + min1(self.a_plus) / self.eps_minus
    }

    /// `C^-(b1, h)`.
    pub fn c_minus(&self, b1: f64, h: f64) -> f64 {
        let m = min1(self.a_minus.min(self.a0_minus));
        (h + self.delta_plus * b1 + m * (-h + b1 * self.eps_minus)) / (self.eps_minus + self.delta_plus)
    }

    /// `C^+(b2, h)`.
    pub fn c_plus(&self, b2: f64, h: f64) -> f64 {
        let m = min1(self.a_plus.min(self.a0_plus));
        (h + self.delta_minus * b2 + m * (-h + b2 * self.eps_plus)) / (self.eps_plus + self.delta_minus)
    }
}

fn min1(a: ExtReal) -> f64 {
    a.min(ExtReal::ONE).value()
}

/// Intermediate-regime exponents at one admissible `(b1, b2, h)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntermediateExponents {
    pub h: f64,
    pub b1: f64,
    pub b2: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub c: f64,
    pub d: f64,
}

fn admissible(b: f64, min: f64) -> Result<(), RateError> {
    if b >= min * (1.0 - 1e-12) {
        Ok(())
    } else {
        Err(RateError::OutsideAdmissibleRange { b, min })
    }
}

/// `C^±`, `C` and `D`; requires `b1 >= h / eps^-` and `b2 >= h / eps^+`.
pub fn intermediate_exponents(
    inputs: &IntermediateInputs,
    h: f64,
    b1: f64,
    b2: f64,
) -> Result<IntermediateExponents, RateError> {
    check_positive("h", h)?;
    admissible(b1, h / inputs.eps_minus)?;
    admissible(b2, h / inputs.eps_plus)?;
    let c_plus = inputs.c_plus(b2, h);
    let c_minus = inputs.c_minus(b1, h);
    let c = min1(inputs.a_minus) * c_plus + min1(inputs.a_plus) * c_minus;
    Ok(IntermediateExponents {
        h,
        b1,
        b2,
        c_plus,
        c_minus,
        c,
        d: inputs.d(),
    })
}

/// Decay prediction for `P(tau > n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Prediction {
    /// `ln P(tau > n) / -ln n -> exponent`.
    Polynomial { exponent: f64 },
    /// `ln P(tau > n) / -ln^{1+kappa} n` eventually within `[lower, upper]`.
    Intermediate { kappa: f64, lower: f64, upper: f64 },
    /// `ln(-ln P(tau > n)) / ln n` eventually within `[lower, upper]`.
    StretchedExponential { kappa: f64, lower: f64, upper: f64 },
}

impl Prediction {
    /// Interval the fitted quantity should fall in (a point for polynomial).
    pub fn bracket(&self) -> (f64, f64) {
        match *self {
            Prediction::Polynomial { exponent } => (exponent, exponent),
            Prediction::Intermediate { lower, upper, .. } => (lower, upper),
            Prediction::StretchedExponential { lower, upper, .. } => (lower, upper),
        }
    }
}

/// Coefficient bracket `[c D kappa^kappa / (1+kappa)^(1+kappa), c D]`.
pub fn intermediate_bracket(kappa: f64, c: f64, d: f64) -> (f64, f64) {
    let factor = (kappa * kappa.ln() - (1.0 + kappa) * (1.0 + kappa).ln()).exp();
    (c * d * factor, c * d)
}

/// Exponent bracket `[kappa / (1 + 5 kappa), kappa]`.
pub fn stretched_bracket(kappa: f64) -> (f64, f64) {
    (kappa / (1.0 + 5.0 * kappa), kappa)
}

/// Regime-specific prediction for the law classified in `lim`.
pub fn predicted_decay(law: &SiteLaw, lim: &LimitQuantities) -> Result<Prediction, RateError> {
    match lim.regime {
        Regime::Polynomial => Ok(Prediction::Polynomial {
            exponent: d_k(law, Safety::Infinite, 1.0)?,
        }),
        Regime::Intermediate { kappa, c } => {
            let d = IntermediateInputs::from_limits(lim)?.d();
            let (lower, upper) = intermediate_bracket(kappa, c, d);
            Ok(Prediction::Intermediate { kappa, lower, upper })
        }
        Regime::StretchedExponential { kappa, .. } => {
            let (lower, upper) = stretched_bracket(kappa);
            Ok(Prediction::StretchedExponential { kappa, lower, upper })
        }
        Regime::Unclassified => Err(RateError::UnclassifiedRegime),
    }
}

/// Lattice step of the values: the largest `s` with every value an integer
/// multiple of `s` (up to 1e-9 relative), searched among `v_min / q`.
fn lattice_step(values: &[f64]) -> Option<f64> {
    let base = values
        .iter()
        .map(|v| v.abs())
        .filter(|v| *v > 1e-15)
        .fold(f64::INFINITY, f64::min);
    if base.is_infinite() {
        return Some(1.0);
    }
    (1..=1000u32)
        .map(|q| base / q as f64)
        .find(|s| values.iter().all(|v| ((v / s) - (v / s).round()).abs() < 1e-9))
}

/// `-(1/m) ln P(S_m >= m x)` for `S_m` a sum of `m` i.i.d. copies of the
/// conditioned `±ln rho`, by exact convolution on its lattice.
pub fn lattice_tail_exponent(law: &SiteLaw, k: Safety, sign: Sign, m: usize, x: f64) -> Result<f64, RateError> {
    if m == 0 {
        return Err(RateError::InvalidArgument("m must be positive".into()));
    }
    let cond = Conditioned::new(law, k, sign)?;
    let step = lattice_step(&cond.values).ok_or(RateError::NonLattice)?;
    let ints: Vec<i64> = cond.values.iter().map(|v| (v / step).round() as i64).collect();
    let (lo, hi) = (*ints.iter().min().unwrap(), *ints.iter().max().unwrap());
    let width = (hi - lo) as usize;
    // log-probabilities of S_j - j lo, indexed from 0
    let mut dist = vec![0.0f64];
    for _ in 0..m {
        let mut next = vec![f64::NEG_INFINITY; dist.len() + width];
        for (i, &lp) in dist.iter().enumerate() {
            if lp == f64::NEG_INFINITY {
                continue;
            }
            for (&j, &lw) in ints.iter().zip(&cond.log_weights) {
                let slot = &mut next[i + (j - lo) as usize];
                let v = lp + lw;
                *slot = if *slot == f64::NEG_INFINITY {
                    v
                } else {
                    let (a, b) = if *slot > v { (*slot, v) } else { (v, *slot) };
                    a + (b - a).exp().ln_1p()
                };
            }
        }
        dist = next;
    }
    let threshold = m as f64 * x / step - 1e-9;
    let tail = dist
        .iter()
        .enumerate()
        .filter(|(i, _)| (*i as i64 + m as i64 * lo) as f64 >= threshold)
        .map(|(_, lp)| *lp);
    let ln_p = logsumexp(tail.collect::<Vec<_>>().into_iter());
    Ok(-ln_p / m as f64)
}

/// Polynomial-regime block of a [`RateReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolynomialRates {
    pub report: DkReport,
    /// `C_k` on a geometric `(b1, b2)` grid around the minimizer.
    pub c_k_grid: Vec<[f64; 3]>,
}

/// Intermediate-regime block of a [`RateReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntermediateRates {
    pub inputs: IntermediateInputs,
    /// Exponents at the admissible corner `b1 = h/eps^-`, `b2 = h/eps^+`.
    pub at_corner: IntermediateExponents,
}

/// Everything the `rates` command reports for one law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub regime: Regime,
    pub law_digest: String,
    pub legendre_tol: f64,
    pub root_tol: f64,
    pub grid_tol: f64,
    pub polynomial: Option<PolynomialRates>,
    pub intermediate: Option<IntermediateRates>,
    pub stretched_bracket: Option<[f64; 2]>,
    pub prediction: Option<Prediction>,
}

/// Assembles the report for the classified regime. `D_k` is always attempted
/// at level `k`; regime-specific blocks are filled when they apply.
pub fn rate_report(law: &SiteLaw, lim: &LimitQuantities, k: Safety, h: f64) -> Result<RateReport, RateError> {
    let mut report = RateReport {
        regime: lim.regime,
        law_digest: law.digest(),
        legendre_tol: LEGENDRE_TOL,
        root_tol: ROOT_TOL,
        grid_tol: GRID_TOL,
        polynomial: None,
        intermediate: None,
        stretched_bracket: None,
        prediction: predicted_decay(law, lim).ok(),
    };
    match lim.regime {
        Regime::Polynomial => {
            let dk = d_k_report(law, k, h)?;
            let (b1, b2) = (dk.grid_infimum.b1, dk.grid_infimum.b2);
            let mut grid = Vec::with_capacity(400);
            for i in 0..20 {
                for j in 0..20 {
                    let f1 = 10f64.powf(-1.0 + 2.0 * i as f64 / 19.0);
                    let f2 = 10f64.powf(-1.0 + 2.0 * j as f64 / 19.0);
                    let (x, y) = (b1 * f1, b2 * f2);
                    grid.push([x, y, c_k(law, k, x, y, h)?]);
                }
            }
            report.polynomial = Some(PolynomialRates { report: dk, c_k_grid: grid });
        }
        Regime::Intermediate { .. } | Regime::StretchedExponential { .. } => {
            let inputs = IntermediateInputs::from_limits(lim)?;
            let at_corner = intermediate_exponents(&inputs, h, h / inputs.eps_minus, h / inputs.eps_plus)?;
            report.intermediate = Some(IntermediateRates { inputs, at_corner });
            if let Regime::StretchedExponential { kappa, .. } = lim.regime {
                let (a, b) = stretched_bracket(kappa);
                report.stretched_bracket = Some([a, b]);
            }
        }
        Regime::Unclassified => return Err(RateError::UnclassifiedRegime),
    }
    Ok(report)
}
