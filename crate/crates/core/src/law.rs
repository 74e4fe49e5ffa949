//! Site laws: finite discrete distributions of the transition triple
//! `(w_plus, w_zero, w_minus)` of a single site.
//!
//! Besides validation and sampling support this module computes the tail
//! quantities that decide the decay regime: the probabilities `p_n^+`,
//! `p_n^-`, `p_n^0` of drift/neutral sites that are "safe at level n"
//! (`w_zero <= 1/n`), the essential extremes `eps_n^±`, `delta_n^±` of the
//! log-ratio on those sites, and their limits.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::LawError;
use crate::ext::ExtReal;
use crate::stats::{compensated_sum, weighted_line_fit};

/// Tolerance for triple and weight normalization.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// `|ln rho| <= NEUTRAL_TOL` classifies a site as neutral.
pub const NEUTRAL_TOL: f64 = 1e-12;
/// Relative change over the last decade below which a limit counts as reached.
pub const STABILIZATION_TOL: f64 = 1e-3;

/// Transition probabilities of one site: step right, hold, step left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Triple {
    pub plus: f64,
    pub zero: f64,
    pub minus: f64,
}

impl Triple {
    pub const fn new(plus: f64, zero: f64, minus: f64) -> Self {
        Triple { plus, zero, minus }
    }

    /// `rho = w_minus / w_plus`.
    pub fn rho(&self) -> f64 {
        self.minus / self.plus
    }

    pub fn log_rho(&self) -> f64 {
        self.minus.ln() - self.plus.ln()
    }

    fn check(&self) -> Result<(), String> {
        let parts = [self.plus, self.zero, self.minus];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(format!("triple {self} has a negative or non-finite entry"));
        }
        let sum = self.plus + self.zero + self.minus;
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(format!("triple {self} sums to {sum}"));
        }
        Ok(())
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.plus, self.zero, self.minus)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Atom {
    pub triple: Triple,
    pub weight: f64,
}

impl Atom {
    pub const fn new(plus: f64, zero: f64, minus: f64, weight: f64) -> Self {
        Atom {
            triple: Triple::new(plus, zero, minus),
            weight,
        }
    }
}

/// Safety level `k` of a site: a site is safe when `w_zero <= 1/k`.
/// `Infinite` demands `w_zero = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Safety {
    Level(f64),
    Infinite,
}

impl Safety {
    pub fn threshold(&self) -> f64 {
        match *self {
            Safety::Level(k) => 1.0 / k,
            Safety::Infinite => 0.0,
        }
    }

    pub fn admits(&self, hold: f64) -> bool {
        match *self {
            Safety::Level(k) => hold <= 1.0 / k + 1e-15,
            Safety::Infinite => hold == 0.0,
        }
    }
}

impl fmt::Display for Safety {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Safety::Level(k) => write!(f, "{k}"),
            Safety::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for Safety {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Safety::Infinite);
        }
        let k: f64 = s.parse().map_err(|_| format!("invalid safety level '{s}'"))?;
        if !(k > 0.0) {
            return Err(format!("safety level must be positive, got {k}"));
        }
        if k.is_infinite() {
            Ok(Safety::Infinite)
        } else {
            Ok(Safety::Level(k))
        }
    }
}

/// Validates a candidate atom list and returns its ellipticity floor
/// `min over atoms of min(w_plus, w_minus)`.
pub fn validate_ue(atoms: &[Atom]) -> Result<f64, LawError> {
    if atoms.is_empty() {
        return Err(LawError::Malformed("law has no atoms".into()));
    }
    for (i, atom) in atoms.iter().enumerate() {
        atom.triple
            .check()
            .map_err(|m| LawError::Malformed(format!("atom {i}: {m}")))?;
        if !atom.weight.is_finite() || atom.weight < 0.0 {
            return Err(LawError::Malformed(format!(
                "atom {i} has invalid weight {}",
                atom.weight
            )));
        }
    }
    let total = compensated_sum(atoms.iter().map(|a| a.weight));
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(LawError::Malformed(format!("weights sum to {total}")));
    }
    let mut floor = f64::INFINITY;
    for (index, atom) in atoms.iter().enumerate() {
        let t = atom.triple;
        if t.plus <= 0.0 || t.minus <= 0.0 {
            return Err(LawError::EllipticityViolation {
                index,
                plus: t.plus,
                minus: t.minus,
            });
        }
        floor = floor.min(t.plus.min(t.minus));
    }
    Ok(floor)
}

/// A validated, uniformly elliptic site law.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteLaw {
    atoms: Vec<Atom>,
    floor: f64,
    cumulative: Vec<f64>,
}

impl SiteLaw {
    /// Validates the atoms; zero-weight atoms are dropped.
    pub fn new(atoms: Vec<Atom>) -> Result<Self, LawError> {
        let floor = validate_ue(&atoms)?;
        let atoms: Vec<Atom> = atoms.into_iter().filter(|a| a.weight > 0.0).collect();
        let mut cumulative = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for a in &atoms {
            acc += a.weight;
            cumulative.push(acc);
        }
        Ok(SiteLaw {
            atoms,
            floor,
            cumulative,
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Uniform ellipticity floor `eps_0`.
    pub fn ellipticity_floor(&self) -> f64 {
        self.floor
    }

    /// Index of the atom selected by a uniform `u` in `[0, 1)`.
    pub fn atom_index(&self, u: f64) -> usize {
        let total = *self.cumulative.last().expect("nonempty law");
        let target = u * total;
        let idx = self.cumulative.partition_point(|&c| c <= target);
        idx.min(self.atoms.len() - 1)
    }

    pub fn sample_triple(&self, u: f64) -> Triple {
        self.atoms[self.atom_index(u)].triple
    }

    /// `P(w_zero <= 1/k)`.
    pub fn safe_probability(&self, k: Safety) -> f64 {
        compensated_sum(
            self.atoms
                .iter()
                .filter(|a| k.admits(a.triple.zero))
                .map(|a| a.weight),
        )
    }

    /// Hex SHA-256 of the canonical text form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    /// Canonical text form, one `w_plus w_zero w_minus weight` line per atom.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for a in &self.atoms {
            out.push_str(&format!(
                "{:?} {:?} {:?} {:?}\n",
                a.triple.plus, a.triple.zero, a.triple.minus, a.weight
            ));
        }
        out
    }

    /// Parses the plain-text law format.
    ///
    /// Either atom lines `w_plus w_zero w_minus weight`, or a single
    /// `construct q=<decay> eps=<f> n0=<int> N=<int>` line. `#` starts a
    /// comment; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, LawError> {
        let mut atoms = Vec::new();
        let mut construct: Option<(usize, ConstructSpec)> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("construct") {
                let spec = ConstructSpec::parse(rest).map_err(|message| LawError::Parse {
                    line: line_no,
                    message,
                })?;
                if construct.is_some() {
                    return Err(LawError::Parse {
                        line: line_no,
                        message: "more than one construct line".into(),
                    });
                }
                construct = Some((line_no, spec));
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(LawError::Parse {
                    line: line_no,
                    message: format!("expected 4 numbers, found {}", fields.len()),
                });
            }
            let mut v = [0.0; 4];
            for (slot, field) in v.iter_mut().zip(&fields) {
                *slot = field.parse().map_err(|_| LawError::Parse {
                    line: line_no,
                    message: format!("invalid number '{field}'"),
                })?;
            }
            atoms.push(Atom::new(v[0], v[1], v[2], v[3]));
        }
        match construct {
            Some((line, _)) if !atoms.is_empty() => Err(LawError::Parse {
                line,
                message: "construct line cannot be mixed with atom lines".into(),
            }),
            Some((_, spec)) => Ok(spec.build()?.law),
            None => SiteLaw::new(atoms),
        }
    }
}

/// Tail quantities at level `n`.
///
/// The `eps`/`delta` fields are `None` when their conditioning set is empty.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailQuantities {
    pub n: u64,
    pub p_plus: f64,
    pub p_minus: f64,
    pub p_zero: f64,
    pub eps_plus: Option<f64>,
    pub eps_minus: Option<f64>,
    pub delta_plus: Option<f64>,
    pub delta_minus: Option<f64>,
    /// No atom satisfies `w_zero <= 1/n`.
    pub empty_conditioning: bool,
}

impl TailQuantities {
    pub fn min_p(&self) -> f64 {
        self.p_plus.min(self.p_minus)
    }
}

fn opt_max(acc: Option<f64>, v: f64) -> Option<f64> {
    Some(acc.map_or(v, |a| a.max(v)))
}

fn opt_min(acc: Option<f64>, v: f64) -> Option<f64> {
    Some(acc.map_or(v, |a| a.min(v)))
}

/// Exact tail quantities at level `n` by summation over atoms.
pub fn tail_quantities(law: &SiteLaw, n: u64) -> TailQuantities {
    assert!(n >= 1, "level n must be positive");
    let safety = Safety::Level(n as f64);
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    let mut zero = Vec::new();
    let (mut eps_plus, mut eps_minus, mut delta_plus, mut delta_minus) = (None, None, None, None);
    let mut any = false;
    for atom in law.atoms().iter().filter(|a| safety.admits(a.triple.zero)) {
        any = true;
        let l = atom.triple.log_rho();
        if l.abs() <= NEUTRAL_TOL {
            zero.push(atom.weight);
            delta_plus = opt_min(delta_plus, 0.0);
            delta_minus = opt_min(delta_minus, 0.0);
        } else if l > 0.0 {
            plus.push(atom.weight);
            eps_plus = opt_max(eps_plus, l);
            delta_plus = opt_min(delta_plus, l);
        } else {
            minus.push(atom.weight);
            eps_minus = opt_max(eps_minus, -l);
            delta_minus = opt_min(delta_minus, -l);
        }
    }
    // Ascending order keeps long tails of tiny weights accurate.
    let sum = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        compensated_sum(v)
    };
    TailQuantities {
        n,
        p_plus: sum(plus),
        p_minus: sum(minus),
        p_zero: sum(zero),
        eps_plus,
        eps_minus,
        delta_plus,
        delta_minus,
        empty_conditioning: !any,
    }
}

/// Decay regime of `min(p_n^+, p_n^-)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Regime {
    /// `min p_n` stays bounded away from zero.
    Polynomial,
    /// `-ln min p_n ~ c ln^kappa n`.
    Intermediate { kappa: f64, c: f64 },
    /// `-ln min p_n ~ c n^kappa`.
    StretchedExponential { kappa: f64, c: f64 },
    /// `min p_n = 0` for some finite n.
    Unclassified,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Polynomial => write!(f, "Polynomial"),
            Regime::Intermediate { kappa, c } => write!(f, "Intermediate(kappa={kappa}, c={c})"),
            Regime::StretchedExponential { kappa, c } => {
                write!(f, "StretchedExponential(kappa={kappa}, c={c})")
            }
            Regime::Unclassified => write!(f, "Unclassified"),
        }
    }
}

/// Least-squares fit of `y = c * g^kappa + d` with the offset `d` profiled out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProfileFit {
    pub kappa: f64,
    pub c: f64,
    pub offset: f64,
    pub residual_rms: f64,
}

const KAPPA_RANGE: (f64, f64) = (0.05, 5.0);

fn fit_at_kappa(g: &[f64], y: &[f64], kappa: f64) -> Option<ProfileFit> {
    let x: Vec<f64> = g.iter().map(|v| v.powf(kappa)).collect();
    let fit = weighted_line_fit(&x, y, &vec![1.0; x.len()])?;
    Some(ProfileFit {
        kappa,
        c: fit.slope,
        offset: fit.intercept,
        residual_rms: fit.residual_rms,
    })
}

/// Profile least squares over kappa: log grid, then golden-section polish.
pub fn profile_power_fit(g: &[f64], y: &[f64]) -> Option<ProfileFit> {
    const GRID: usize = 240;
    let (lo, hi) = (KAPPA_RANGE.0.ln(), KAPPA_RANGE.1.ln());
    let kappa_at = |i: usize| (lo + (hi - lo) * i as f64 / (GRID - 1) as f64).exp();
    let rms_at = |k: f64| {
        fit_at_kappa(g, y, k)
            .filter(|f| f.c > 0.0)
            .map_or(f64::INFINITY, |f| f.residual_rms)
    };
    let scores: Vec<f64> = (0..GRID).map(|i| rms_at(kappa_at(i))).collect();
    let (best, best_score) = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, s)| (i, *s))?;
    if !best_score.is_finite() {
        return None;
    }
    let mut a = kappa_at(best.saturating_sub(1)).ln();
    let mut b = kappa_at((best + 1).min(GRID - 1)).ln();
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (rms_at(x1.exp()), rms_at(x2.exp()));
    for _ in 0..80 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = rms_at(x1.exp());
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = rms_at(x2.exp());
        }
    }
    let polished = fit_at_kappa(g, y, ((a + b) / 2.0).exp()).filter(|f| f.c > 0.0);
    let grid_best = fit_at_kappa(g, y, kappa_at(best))?;
    match polished {
        Some(p) if p.residual_rms <= grid_best.residual_rms => Some(p),
        _ => Some(grid_best),
    }
}

/// Both candidate fits used to classify a vanishing `min p_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegimeFits {
    /// `-ln min p_n` against `ln n`.
    pub intermediate: Option<ProfileFit>,
    /// `-ln min p_n` against `n`.
    pub stretched: Option<ProfileFit>,
}

/// Limits of the tail quantities as read off a geometric level grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitQuantities {
    pub n_max: u64,
    pub eps_plus: Option<f64>,
    pub eps_minus: Option<f64>,
    pub delta_plus: Option<f64>,
    pub delta_minus: Option<f64>,
    pub a_plus: Option<ExtReal>,
    pub a_minus: Option<ExtReal>,
    pub a0_plus: Option<ExtReal>,
    pub a0_minus: Option<ExtReal>,
    pub min_p: f64,
    pub regime: Regime,
    /// Every limit changed by less than `STABILIZATION_TOL` over the last decade.
    pub stable: bool,
    /// Names of the quantities that failed the stabilization check.
    pub unstable: Vec<String>,
    pub fits: Option<RegimeFits>,
    pub grid: Vec<TailQuantities>,
}

/// Geometric level grid `round(10^(j/10))`, deduplicated, ending at `n_max`.
pub fn level_grid(n_max: u64) -> Vec<u64> {
    let mut grid = Vec::new();
    let mut j = 0;
    loop {
        let n = 10f64.powf(j as f64 / 10.0).round() as u64;
        if n > n_max {
            break;
        }
        if grid.last() != Some(&n) {
            grid.push(n);
        }
        j += 1;
    }
    if grid.last() != Some(&n_max) {
        grid.push(n_max);
    }
    grid
}

fn rel_change(reference: f64, last: f64) -> f64 {
    if reference == last {
        0.0
    } else {
        (last - reference).abs() / last.abs().max(reference.abs())
    }
}

fn opt_stable(reference: Option<f64>, last: Option<f64>) -> bool {
    match (reference, last) {
        (None, None) => true,
        (Some(a), Some(b)) => rel_change(a, b) < STABILIZATION_TOL,
        _ => false,
    }
}

/// Limit quantities and regime classification up to level `n_max >= 100`.
pub fn limit_quantities(law: &SiteLaw, n_max: u64) -> LimitQuantities {
    assert!(n_max >= 100, "n_max must be at least 100");
    let levels = level_grid(n_max);
    let grid: Vec<TailQuantities> = levels.iter().map(|&n| tail_quantities(law, n)).collect();
    let last = grid.last().expect("nonempty grid").clone();
    let reference = grid
        .iter()
        .rev()
        .find(|t| t.n * 10 <= n_max)
        .expect("grid reaches n_max / 10")
        .clone();

    let ln_plus = ExtReal::ln_prob(last.p_plus);
    let ln_minus = ExtReal::ln_prob(last.p_minus);
    let ln_zero = ExtReal::ln_prob(last.p_zero);

    let mut unstable = Vec::new();
    let checks = [
        ("eps_plus", opt_stable(reference.eps_plus, last.eps_plus)),
        ("eps_minus", opt_stable(reference.eps_minus, last.eps_minus)),
        ("delta_plus", opt_stable(reference.delta_plus, last.delta_plus)),
        ("delta_minus", opt_stable(reference.delta_minus, last.delta_minus)),
        ("min_p", rel_change(reference.min_p(), last.min_p()) < STABILIZATION_TOL),
    ];
    for (name, ok) in checks {
        if !ok {
            unstable.push(name.to_string());
        }
    }

    let vanishes = grid.iter().any(|t| t.min_p() <= 0.0);
    let mut fits = None;
    let regime = if vanishes {
        Regime::Unclassified
    } else if rel_change(reference.min_p(), last.min_p()) < STABILIZATION_TOL {
        Regime::Polynomial
    } else {
        let pts: Vec<&TailQuantities> = grid.iter().filter(|t| t.n >= 10).collect();
        let y: Vec<f64> = pts.iter().map(|t| -t.min_p().ln()).collect();
        let ln_n: Vec<f64> = pts.iter().map(|t| (t.n as f64).ln()).collect();
        let n: Vec<f64> = pts.iter().map(|t| t.n as f64).collect();
        let f = RegimeFits {
            intermediate: profile_power_fit(&ln_n, &y),
            stretched: profile_power_fit(&n, &y),
        };
        fits = Some(f);
        match (f.intermediate, f.stretched) {
            (Some(i), Some(s)) if s.residual_rms < i.residual_rms => Regime::StretchedExponential {
                kappa: s.kappa,
                c: s.c,
            },
            (Some(i), _) => Regime::Intermediate {
                kappa: i.kappa,
                c: i.c,
            },
            (None, Some(s)) => Regime::StretchedExponential {
                kappa: s.kappa,
                c: s.c,
            },
            (None, None) => Regime::Unclassified,
        }
    };

    LimitQuantities {
        n_max,
        eps_plus: last.eps_plus,
        eps_minus: last.eps_minus,
        delta_plus: last.delta_plus,
        delta_minus: last.delta_minus,
        a_plus: ExtReal::log_ratio(ln_minus, ln_plus),
        a_minus: ExtReal::log_ratio(ln_plus, ln_minus),
        a0_plus: ExtReal::log_ratio(ln_zero, ln_plus),
        a0_minus: ExtReal::log_ratio(ln_zero, ln_minus),
        min_p: last.min_p(),
        regime,
        stable: unstable.is_empty(),
        unstable,
        fits,
        grid,
    }
}

/// Named decay sequences for the construction of laws with prescribed
/// `min(p_n^+, p_n^-)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Decay {
    /// `q_n = n^-a`
    Pow { a: f64 },
    /// `q_n = b^n`
    Geo { b: f64 },
    /// `q_n = exp(-c ln^kappa n)`
    ExpLog { c: f64, kappa: f64 },
    /// `q_n = exp(-c n^kappa)`
    ExpPow { c: f64, kappa: f64 },
}

impl Decay {
    pub fn eval(&self, n: u64) -> f64 {
        let x = n as f64;
        match *self {
            Decay::Pow { a } => x.powf(-a),
            Decay::Geo { b } => b.powf(x),
            Decay::ExpLog { c, kappa } => (-c * x.ln().powf(kappa)).exp(),
            Decay::ExpPow { c, kappa } => (-c * x.powf(kappa)).exp(),
        }
    }
}

impl fmt::Display for Decay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decay::Pow { a } => write!(f, "pow:{a}"),
            Decay::Geo { b } => write!(f, "geo:{b}"),
            Decay::ExpLog { c, kappa } => write!(f, "explog:{c},{kappa}"),
            Decay::ExpPow { c, kappa } => write!(f, "exppow:{c},{kappa}"),
        }
    }
}

impl FromStr for Decay {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, args) = s
            .split_once(':')
            .ok_or_else(|| format!("decay '{s}' must look like name:args"))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("invalid decay arguments '{args}'"))?;
        let want = |k: usize| {
            if nums.len() == k {
                Ok(())
            } else {
                Err(format!("decay '{name}' takes {k} argument(s)"))
            }
        };
        match name {
            "pow" => want(1).map(|_| Decay::Pow { a: nums[0] }),
            "geo" => want(1).map(|_| Decay::Geo { b: nums[0] }),
            "explog" => want(2).map(|_| Decay::ExpLog {
                c: nums[0],
                kappa: nums[1],
            }),
            "exppow" => want(2).map(|_| Decay::ExpPow {
                c: nums[0],
                kappa: nums[1],
            }),
            other => Err(format!("unknown decay '{other}'")),
        }
    }
}

/// Parameters of a `construct` line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConstructSpec {
    pub decay: Decay,
    pub eps: f64,
    pub n0: u64,
    pub n_trunc: u64,
}

impl ConstructSpec {
    /// Parses `q=<decay> eps=<f> n0=<int> N=<int>` (the part after `construct`).
    pub fn parse(s: &str) -> Result<Self, String> {
        let (mut decay, mut eps, mut n0, mut n_trunc) = (None, None, None, None);
        for token in s.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, found '{token}'"))?;
            let bad = || format!("invalid value for {key}: '{value}'");
            match key {
                "q" => decay = Some(value.parse::<Decay>()?),
                "eps" => eps = Some(value.parse::<f64>().map_err(|_| bad())?),
                "n0" => n0 = Some(value.parse::<u64>().map_err(|_| bad())?),
                "N" => n_trunc = Some(value.parse::<u64>().map_err(|_| bad())?),
                other => return Err(format!("unknown construct key '{other}'")),
            }
        }
        Ok(ConstructSpec {
            decay: decay.ok_or("construct needs q=")?,
            eps: eps.ok_or("construct needs eps=")?,
            n0: n0.ok_or("construct needs n0=")?,
            n_trunc: n_trunc.ok_or("construct needs N=")?,
        })
    }

    pub fn build(&self) -> Result<ConstructedLaw, LawError> {
        let decay = self.decay;
        construct_law(|n| decay.eval(n), self.eps, self.n0, self.n_trunc)
    }
}

impl fmt::Display for ConstructSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "construct q={} eps={} n0={} N={}",
            self.decay, self.eps, self.n0, self.n_trunc
        )
    }
}

/// Result of [`construct_law`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConstructedLaw {
    pub law: SiteLaw,
    /// Normalizer `c = q_{n0}`; the law has `p_m^± = q_m / (2c)`.
    pub normalizer: f64,
    /// Mass `q_{N+1} / c` folded into the last pair of atoms.
    pub residual_weight: f64,
}

/// Builds the law on atoms `Pi_n^±`, `n0 <= n <= N`, with
/// `P(Pi_n^+) = P(Pi_n^-) = (q_n - q_{n+1}) / (2c)`, `c = q_{n0}`, and the
/// truncated tail folded into `n = N`.
///
/// `Pi_n^+ = ((1+eps)/(2+eps) (1-1/n), 1/n, 1/(2+eps) (1-1/n))` and `Pi_n^-`
/// is its mirror image, so `|ln rho| = ln(1+eps)` on every atom and
/// `p_m^+ = p_m^- = q_m / (2c)` for `n0 <= m <= N`.
pub fn construct_law(
    q: impl Fn(u64) -> f64,
    eps: f64,
    n0: u64,
    n_trunc: u64,
) -> Result<ConstructedLaw, LawError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(LawError::InvalidSequence(format!("eps must be positive, got {eps}")));
    }
    if n0 < 2 {
        return Err(LawError::InvalidSequence(
            "n0 must be at least 2 (Pi_1 has no moving mass)".into(),
        ));
    }
    if n_trunc < n0 {
        return Err(LawError::InvalidSequence(format!(
            "truncation index {n_trunc} below n0 = {n0}"
        )));
    }
    let values: Vec<f64> = (n0..=n_trunc + 1).map(&q).collect();
    for (i, w) in values.windows(2).enumerate() {
        let n = n0 + i as u64;
        if !(w[0] > 0.0) || w[0] > 1.0 || !w[0].is_finite() {
            return Err(LawError::InvalidSequence(format!(
                "q_{n} = {} is not in (0, 1]",
                w[0]
            )));
        }
        if w[1] > w[0] {
            return Err(LawError::InvalidSequence(format!(
                "q increases between n = {n} and n = {}",
                n + 1
            )));
        }
    }
    let tail = *values.last().expect("nonempty");
    if tail < 0.0 || !tail.is_finite() {
        return Err(LawError::InvalidSequence(format!("q_(N+1) = {tail} is invalid")));
    }
    let c = values[0];
    let mut atoms = Vec::with_capacity(2 * values.len());
    let big = (1.0 + eps) / (2.0 + eps);
    let small = 1.0 / (2.0 + eps);
    for (i, n) in (n0..=n_trunc).enumerate() {
        let weight = if n == n_trunc {
            values[i] / (2.0 * c)
        } else {
            (values[i] - values[i + 1]) / (2.0 * c)
        };
        if weight == 0.0 {
            continue;
        }
        let hold = 1.0 / n as f64;
        let moving = 1.0 - hold;
        atoms.push(Atom::new(big * moving, hold, small * moving, weight));
        atoms.push(Atom::new(small * moving, hold, big * moving, weight));
    }
    let law = SiteLaw::new(atoms)?;
    Ok(ConstructedLaw {
        law,
        normalizer: c,
        residual_weight: tail / c,
    })
}
