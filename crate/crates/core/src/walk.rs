//! Quenched computations for the killed walk: survival by dynamic
//! programming, exit-time tails, Monte Carlo replicas and an exhaustive
//! path oracle.

use rayon::prelude::*;
use serde::Serialize;

use crate::env::Environment;
use crate::error::WalkError;
use crate::law::Triple;
use crate::rng::{self, FAMILY_WALK};
use crate::stats::CompensatedSum;

/// How far the DP tracks the walk around its start.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum WindowPolicy {
    /// Track the full reachable range `[start - n, start + n]`.
    Strict,
    /// Track at most `cap` sites on each side; beyond that the survival is
    /// bracketed.
    Capped(usize),
}

impl WindowPolicy {
    /// Half-width actually tracked for horizon `n`.
    pub fn half_width(&self, n: usize) -> usize {
        match *self {
            WindowPolicy::Strict => n,
            WindowPolicy::Capped(cap) => cap.min(n),
        }
    }
}

/// What happens to a walker stepping past the tracked window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Boundary {
    /// The walker is counted as dead: a lower bound on survival.
    Absorbing,
    /// The walker is counted as surviving forever: an upper bound.
    Escape,
}

impl Boundary {
    fn ghost(self) -> f64 {
        match self {
            Boundary::Absorbing => 0.0,
            Boundary::Escape => 1.0,
        }
    }
}

/// A killed walk on a fixed environment.
#[derive(Clone, Copy, Debug)]
pub struct KillingWalkSpec<'a> {
    pub env: &'a Environment,
    pub r: f64,
    pub start: i64,
    pub n: usize,
    pub policy: WindowPolicy,
}

impl<'a> KillingWalkSpec<'a> {
    pub fn new(env: &'a Environment, r: f64, start: i64, n: usize, policy: WindowPolicy) -> Result<Self, WalkError> {
        if !(0.0..=1.0).contains(&r) {
            return Err(WalkError::InvalidKilling(r));
        }
        if !env.contains(start) {
            return Err(WalkError::OutOfWindow {
                index: start,
                lo: env.lo(),
                hi: env.hi(),
            });
        }
        Ok(KillingWalkSpec {
            env,
            r,
            start,
            n,
            policy,
        })
    }

    fn require_range(&self, half: usize) -> Result<(), WalkError> {
        let need_lo = self.start - half as i64;
        let need_hi = self.start + half as i64;
        if need_lo < self.env.lo() || need_hi > self.env.hi() {
            return Err(WalkError::WindowTooSmall {
                lo: self.env.lo(),
                hi: self.env.hi(),
                need_lo,
                need_hi,
            });
        }
        Ok(())
    }
}

/// Survival probabilities `P(tau > t)`, `t = 0..=n`, bracketed by the two
/// boundary treatments. Without truncation both bounds coincide.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalBracket {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Tracked half-width.
    pub half_width: usize,
    /// The window covered the reachable range, so `lower == upper` is exact.
    pub exact: bool,
}

impl SurvivalBracket {
    pub fn midpoint(&self, t: usize) -> f64 {
        0.5 * (self.lower[t] + self.upper[t])
    }

    pub fn width(&self, t: usize) -> f64 {
        self.upper[t] - self.lower[t]
    }

    pub fn max_width(&self) -> f64 {
        (0..self.lower.len()).map(|t| self.width(t)).fold(0.0, f64::max)
    }
}

/// Per-site coefficients of the survival recursion on `[start - w, start + w]`.
struct Coefficients {
    plus: Vec<f64>,
    hold: Vec<f64>,
    minus: Vec<f64>,
}

impl Coefficients {
    fn new(spec: &KillingWalkSpec<'_>, half: usize) -> Self {
        let len = 2 * half + 1;
        let mut c = Coefficients {
            plus: Vec::with_capacity(len),
            hold: Vec::with_capacity(len),
            minus: Vec::with_capacity(len),
        };
        for x in spec.start - half as i64..=spec.start + half as i64 {
            let t = spec.env.site(x).expect("range checked");
            c.plus.push(t.plus);
            c.hold.push(t.zero * (1.0 - spec.r));
            c.minus.push(t.minus);
        }
        c
    }
}

/// Backward recursion `f_t(x) = w+ f(x+1) + w- f(x-1) + w0 (1-r) f(x)`,
/// `f_0 = 1`, read at the start. `f_u` is only needed within distance
/// `n - u` of the start, so the work is triangular.
fn survival_sweep(coef: &Coefficients, half: usize, n: usize, boundary: Boundary) -> Vec<f64> {
    let centre = half + 1;
    let len = 2 * half + 3;
    let ghost = boundary.ghost();
    let mut old = vec![1.0; len];
    old[0] = ghost;
    old[len - 1] = ghost;
    let mut new = old.clone();
    let mut s = Vec::with_capacity(n + 1);
    s.push(1.0);
    for u in 1..=n {
        let range = half.min(n - u);
        let (a, b) = (centre - range, centre + range);
        for i in a..=b {
            let j = i - 1;
            new[i] = coef.plus[j] * old[i + 1] + coef.minus[j] * old[i - 1] + coef.hold[j] * old[i];
        }
        std::mem::swap(&mut old, &mut new);
        s.push(old[centre]);
    }
    s
}

/// `P_omega(tau > t)` for `t = 0..=n`, bracketed under the window policy.
pub fn quenched_survival_dp(spec: &KillingWalkSpec<'_>) -> Result<SurvivalBracket, WalkError> {
    let half = spec.policy.half_width(spec.n);
    spec.require_range(half)?;
    let coef = Coefficients::new(spec, half);
    let lower = survival_sweep(&coef, half, spec.n, Boundary::Absorbing);
    // The ghost cells are read only when the walk can reach them.
    let exact = half + 1 > spec.n;
    let upper = if exact {
        lower.clone()
    } else {
        survival_sweep(&coef, half, spec.n, Boundary::Escape)
    };
    Ok(SurvivalBracket {
        lower,
        upper,
        half_width: half,
        exact,
    })
}

fn check_interval(env: &Environment, a: i64, c: i64, start: i64) -> Result<(), WalkError> {
    if !(a < c && a <= start && start <= c) {
        return Err(WalkError::InvalidInterval { a, start, c });
    }
    for x in [a, c] {
        if !env.contains(x) {
            return Err(WalkError::OutOfWindow {
                index: x,
                lo: env.lo(),
                hi: env.hi(),
            });
        }
    }
    Ok(())
}

/// Rescaling threshold of the log-space exit tail.
const RESCALE_BELOW: f64 = 1e-200;

/// Runs the exit recursion on `[a, c]` and feeds `ln P(U > t)` to `sink`
/// until it returns `false` or `n` steps are done.
fn exit_sweep(env: &Environment, a: i64, c: i64, start: i64, n: usize, mut sink: impl FnMut(usize, f64) -> bool) {
    if start == a || start == c {
        for t in 0..=n {
            if !sink(t, f64::NEG_INFINITY) {
                return;
            }
        }
        return;
    }
    let len = (c - a + 1) as usize;
    let sites: Vec<Triple> = (a..=c).map(|x| *env.site(x).expect("checked")).collect();
    let mut old = vec![1.0; len];
    old[0] = 0.0;
    old[len - 1] = 0.0;
    let mut new = old.clone();
    let pos = (start - a) as usize;
    let mut log_scale = 0.0;
    if !sink(0, 0.0) {
        return;
    }
    for t in 1..=n {
        for i in 1..len - 1 {
            let w = &sites[i];
            new[i] = w.plus * old[i + 1] + w.minus * old[i - 1] + w.zero * old[i];
        }
        std::mem::swap(&mut old, &mut new);
        let top = old.iter().copied().fold(0.0, f64::max);
        if top > 0.0 && top < RESCALE_BELOW {
            for v in old.iter_mut() {
                *v /= top;
            }
            log_scale += top.ln();
        }
        let v = old[pos];
        let lv = if v > 0.0 { v.ln() + log_scale } else { f64::NEG_INFINITY };
        if !sink(t, lv) {
            return;
        }
    }
}

/// `P^start(U_{a,c} > t)`, `t = 0..=n`, with `U` the hitting time of
/// `{a, c}` and no killing.
pub fn hitting_time_tail(env: &Environment, a: i64, c: i64, start: i64, n: usize) -> Result<Vec<f64>, WalkError> {
    Ok(hitting_time_log_tail(env, a, c, start, n)?.into_iter().map(f64::exp).collect())
}

/// `ln P^start(U_{a,c} > t)`, renormalized so that deep tails do not
/// underflow.
pub fn hitting_time_log_tail(env: &Environment, a: i64, c: i64, start: i64, n: usize) -> Result<Vec<f64>, WalkError> {
    check_interval(env, a, c, start)?;
    let mut out = Vec::with_capacity(n + 1);
    exit_sweep(env, a, c, start, n, |_, lv| {
        out.push(lv);
        true
    });
    Ok(out)
}

/// Smallest `t <= max_n` with `P^start(U_{a,c} > t) <= 1/2`.
pub fn median_exit_time(env: &Environment, a: i64, c: i64, start: i64, max_n: usize) -> Result<Option<usize>, WalkError> {
    check_interval(env, a, c, start)?;
    let mut found = None;
    let half = 0.5f64.ln();
    exit_sweep(env, a, c, start, max_n, |t, lv| {
        if lv <= half {
            found = Some(t);
            false
        } else {
            true
        }
    });
    Ok(found)
}

/// Same environment with holding removed: `(w+, 0, w-) / (w+ + w-)`.
/// The ratio `rho` and hence the potential are unchanged.
pub fn collapse_holding(env: &Environment) -> Environment {
    let sites = env
        .sites()
        .iter()
        .map(|t| {
            let moving = t.plus + t.minus;
            let plus = t.plus / moving;
            Triple::new(plus, 0.0, 1.0 - plus)
        })
        .collect();
    Environment::new(env.lo(), sites).expect("collapsed sites stay elliptic")
}

/// Fate of one simulated walker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Extinction {
    /// Killed at step `t` (`tau = t`).
    Killed(usize),
    /// Still alive after `n` steps.
    Survived,
}

/// Simulates replica `replica` of the walk with explicit kill coins on
/// holding steps. Needs the window to cover `[start - n, start + n]`.
pub fn mc_walk(spec: &KillingWalkSpec<'_>, seed: u64, replica: u64) -> Result<Extinction, WalkError> {
    spec.require_range(spec.n)?;
    Ok(simulate(spec, seed, replica))
}

fn simulate(spec: &KillingWalkSpec<'_>, seed: u64, replica: u64) -> Extinction {
    let mut rng = rng::stream(seed, FAMILY_WALK, 0, replica as i64);
    let mut x = spec.start;
    for t in 1..=spec.n {
        let w = spec.env.site(x).expect("range checked");
        let u = rng::unit_f64(&mut rng);
        if u < w.plus {
            x += 1;
        } else if u < w.plus + w.minus {
            x -= 1;
        } else if rng::unit_f64(&mut rng) < spec.r {
            return Extinction::Killed(t);
        }
    }
    Extinction::Survived
}

/// Survival fraction over a batch of replicas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub replicas: u64,
    pub survived: u64,
    pub fraction: f64,
    /// Binomial standard error of `fraction`.
    pub stderr: f64,
}

/// Runs replicas `0..replicas` in parallel; the count does not depend on
/// the worker count.
pub fn mc_survival(spec: &KillingWalkSpec<'_>, seed: u64, replicas: u64) -> Result<McEstimate, WalkError> {
    spec.require_range(spec.n)?;
    let survived = (0..replicas)
        .into_par_iter()
        .filter(|&i| simulate(spec, seed, i) == Extinction::Survived)
        .count() as u64;
    let fraction = survived as f64 / replicas.max(1) as f64;
    Ok(McEstimate {
        replicas,
        survived,
        fraction,
        stderr: (fraction * (1.0 - fraction) / replicas.max(1) as f64).sqrt(),
    })
}

/// Largest horizon accepted by [`enumerate_paths`].
pub const MAX_ENUMERATION_HORIZON: usize = 14;

/// `P_omega(tau > n)` by summing over all `3^n` trajectories.
pub fn enumerate_paths(spec: &KillingWalkSpec<'_>) -> Result<f64, WalkError> {
    if spec.n > MAX_ENUMERATION_HORIZON {
        return Err(WalkError::HorizonTooLarge {
            n: spec.n,
            max: MAX_ENUMERATION_HORIZON,
        });
    }
    spec.require_range(spec.n)?;
    let mut acc = CompensatedSum::new();
    paths(spec, spec.start, spec.n, 1.0, &mut acc);
    Ok(acc.value())
}

fn paths(spec: &KillingWalkSpec<'_>, x: i64, left: usize, weight: f64, acc: &mut CompensatedSum) {
    if left == 0 {
        acc.add(weight);
        return;
    }
    let w = spec.env.site(x).expect("range checked");
    paths(spec, x + 1, left - 1, weight * w.plus, acc);
    paths(spec, x - 1, left - 1, weight * w.minus, acc);
    paths(spec, x, left - 1, weight * w.zero * (1.0 - spec.r), acc);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn holding_env(half: i64) -> Environment {
        Environment::homogeneous(-half, half, Triple::new(0.25, 0.5, 0.25)).unwrap()
    }

    #[test]
    fn no_killing_survives() {
        let env = holding_env(20);
        let spec = KillingWalkSpec::new(&env, 0.0, 0, 20, WindowPolicy::Strict).unwrap();
        let s = quenched_survival_dp(&spec).unwrap();
        assert!(s.lower.iter().all(|&v| v == 1.0));
        assert!(s.exact);
    }

    #[test]
    fn homogeneous_holding_halves() {
        let env = holding_env(30);
        let spec = KillingWalkSpec::new(&env, 1.0, 0, 30, WindowPolicy::Strict).unwrap();
        let s = quenched_survival_dp(&spec).unwrap();
        for (t, v) in s.lower.iter().enumerate() {
            assert!((v - 0.5f64.powi(t as i32)).abs() < 1e-15 * 0.5f64.powi(t as i32).max(1e-300));
        }
    }

    #[test]
    fn single_step_closed_form() {
        let env = Environment::new(-1, vec![Triple::new(0.3, 0.2, 0.5); 3]).unwrap();
        let spec = KillingWalkSpec::new(&env, 0.4, 0, 1, WindowPolicy::Strict).unwrap();
        let want = 0.3 + 0.5 + 0.2 * 0.6;
        assert!((enumerate_paths(&spec).unwrap() - want).abs() < 1e-15);
        assert!((quenched_survival_dp(&spec).unwrap().lower[1] - want).abs() < 1e-15);
        let spec0 = KillingWalkSpec::new(&env, 0.4, 0, 0, WindowPolicy::Strict).unwrap();
        assert_eq!(enumerate_paths(&spec0).unwrap(), 1.0);
    }

    #[test]
    fn strict_window_must_cover() {
        let env = holding_env(5);
        let spec = KillingWalkSpec::new(&env, 0.5, 0, 6, WindowPolicy::Strict).unwrap();
        assert!(matches!(
            quenched_survival_dp(&spec),
            Err(WalkError::WindowTooSmall { .. })
        ));
        let capped = KillingWalkSpec::new(&env, 0.5, 0, 6, WindowPolicy::Capped(5)).unwrap();
        let b = quenched_survival_dp(&capped).unwrap();
        assert!(!b.exact);
        assert!(b.lower.iter().zip(&b.upper).all(|(l, u)| l <= u));
    }

    #[test]
    fn capped_bracket_contains_exact() {
        let sites = (0..81)
            .map(|i| if i % 3 == 0 { Triple::new(0.3, 0.4, 0.3) } else { Triple::new(0.5, 0.0, 0.5) })
            .collect();
        let env = Environment::new(-40, sites).unwrap();
        let exact = quenched_survival_dp(&KillingWalkSpec::new(&env, 0.7, 0, 40, WindowPolicy::Strict).unwrap()).unwrap();
        let capped = quenched_survival_dp(&KillingWalkSpec::new(&env, 0.7, 0, 40, WindowPolicy::Capped(8)).unwrap()).unwrap();
        for t in 0..=40 {
            assert!(capped.lower[t] <= exact.lower[t] + 1e-15);
            assert!(capped.upper[t] >= exact.lower[t] - 1e-15);
        }
    }

    #[test]
    fn invalid_arguments() {
        let env = holding_env(3);
        assert!(matches!(
            KillingWalkSpec::new(&env, 1.5, 0, 2, WindowPolicy::Strict),
            Err(WalkError::InvalidKilling(_))
        ));
        assert!(matches!(
            KillingWalkSpec::new(&env, 0.5, 9, 2, WindowPolicy::Strict),
            Err(WalkError::OutOfWindow { .. })
        ));
        let env = holding_env(20);
        let spec = KillingWalkSpec::new(&env, 0.5, 0, 15, WindowPolicy::Strict).unwrap();
        assert!(matches!(enumerate_paths(&spec), Err(WalkError::HorizonTooLarge { .. })));
    }

    #[test]
    fn exit_tail_basics() {
        let env = Environment::homogeneous(-5, 5, Triple::new(0.5, 0.0, 0.5)).unwrap();
        let at_a = hitting_time_tail(&env, -3, 3, -3, 10).unwrap();
        assert!(at_a.iter().all(|&v| v == 0.0));
        let inside = hitting_time_tail(&env, -3, 3, 0, 50).unwrap();
        assert_eq!(inside[0], 1.0);
        assert_eq!(inside[2], 1.0);
        assert!(inside.windows(2).all(|w| w[1] <= w[0]));
        assert!(matches!(
            hitting_time_tail(&env, -3, 9, 0, 5),
            Err(WalkError::OutOfWindow { .. })
        ));
    }

    #[test]
    fn log_tail_survives_underflow() {
        let env = Environment::homogeneous(-3, 3, Triple::new(0.5, 0.0, 0.5)).unwrap();
        let lt = hitting_time_log_tail(&env, -2, 2, 0, 4000).unwrap();
        let rate = (std::f64::consts::PI / 4.0).cos().ln();
        // two steps at a time decay by cos^2(pi/4)
        let d = lt[4000] - lt[3998];
        assert!((d - 2.0 * rate).abs() < 1e-9, "{d}");
        assert!(lt[4000] < -1000.0);
    }

    #[test]
    fn collapse_preserves_potential() {
        let env = Environment::new(
            -2,
            vec![
                Triple::new(0.25, 0.5, 0.25),
                Triple::new(0.6, 0.1, 0.3),
                Triple::new(0.2, 0.3, 0.5),
                Triple::new(0.4, 0.0, 0.6),
            ],
        )
        .unwrap();
        let c = collapse_holding(&env);
        assert_eq!(*c.site(-2).unwrap(), Triple::new(0.5, 0.0, 0.5));
        for m in -2..=1 {
            assert!((c.potential_at(m).unwrap() - env.potential_at(m).unwrap()).abs() < 1e-12);
        }
        assert_eq!(collapse_holding(&c), c);
    }

    #[test]
    fn mc_deterministic_and_close() {
        let env = holding_env(10);
        let spec = KillingWalkSpec::new(&env, 1.0, 0, 10, WindowPolicy::Strict).unwrap();
        let a: Vec<_> = (0..50).map(|i| mc_walk(&spec, 9, i).unwrap()).collect();
        let b: Vec<_> = (0..50).map(|i| mc_walk(&spec, 9, i).unwrap()).collect();
        assert_eq!(a, b);
        let est = mc_survival(&spec, 9, 100_000).unwrap();
        let p = 0.5f64.powi(10);
        let sigma = (p * (1.0 - p) / 1e5).sqrt();
        assert!((est.fraction - p).abs() < 4.0 * sigma);
        let free = KillingWalkSpec { r: 0.0, ..spec };
        assert!((0..100).all(|i| mc_walk(&free, 1, i).unwrap() == Extinction::Survived));
    }
}
