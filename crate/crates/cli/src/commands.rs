//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::Args;
use serde::Serialize;
use serde_json::json;

use rwre_killing::annealed::{
    self, annealed_survival, fit_exponent, power_grid, srw_exit_check, AnnealedConfig, SurvivalCurve,
};
use rwre_killing::env::{sample_window, Environment};
use rwre_killing::law::{limit_quantities, ConstructSpec, Decay, Regime, Safety, SiteLaw};
use rwre_killing::rates::{predicted_decay, rate_report};
use rwre_killing::walk::{quenched_survival_dp, KillingWalkSpec, WindowPolicy};
use rwre_killing::{AnnealedError, LawError, RateError, WalkError};

use crate::output::{emit, json};
use crate::{EXIT_NUMERICAL, EXIT_VALIDATION};

/// A failed command with its exit status.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type Outcome = Result<(), Failure>;

fn invalid(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        error: error.into(),
    }
}

fn numerical(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_NUMERICAL,
        error: error.into(),
    }
}

fn rate_failure(e: RateError) -> Failure {
    match e {
        RateError::InvalidArgument(_) | RateError::OutsideAdmissibleRange { .. } => invalid(e),
        _ => numerical(e),
    }
}

fn walk_failure(e: WalkError) -> Failure {
    match e {
        WalkError::HorizonTooLarge { .. } => numerical(e),
        _ => invalid(e),
    }
}

fn annealed_failure(e: AnnealedError) -> Failure {
    match e {
        AnnealedError::InsufficientData { .. } | AnnealedError::DegenerateCurve | AnnealedError::UnclassifiedRegime => {
            numerical(e)
        }
        AnnealedError::Walk(w) => walk_failure(w),
        _ => invalid(e),
    }
}

/// Where a law comes from: a law file or an inline construction.
#[derive(Args, Debug, Serialize)]
pub struct LawSource {
    /// Law file: `w_plus w_zero w_minus weight` lines or one `construct` line.
    #[arg(long, conflicts_with = "construct")]
    law: Option<PathBuf>,
    /// Inline construction, e.g. "q=explog:1,1 eps=1 n0=2 N=100000".
    #[arg(long)]
    construct: Option<String>,
}

impl LawSource {
    fn load(&self) -> Result<SiteLaw, Failure> {
        match (&self.law, &self.construct) {
            (Some(path), _) => load_law(path),
            (None, Some(spec)) => {
                let spec = ConstructSpec::parse(spec).map_err(|m| invalid(anyhow!("--construct: {m}")))?;
                Ok(spec.build().map_err(|e| invalid(anyhow!("--construct: {e}")))?.law)
            }
            (None, None) => Err(invalid(anyhow!("a law is required: pass --law or --construct"))),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(invalid)
}

fn load_law(path: &Path) -> Result<SiteLaw, Failure> {
    let text = read(path)?;
    SiteLaw::parse(&text).map_err(|e| match e {
        LawError::Parse { line, message } => invalid(anyhow!("{}:{line}: {message}", path.display())),
        other => invalid(anyhow!("{}: {other}", path.display())),
    })
}

fn load_curve(path: &Path) -> Result<SurvivalCurve, Failure> {
    let text = read(path)?;
    SurvivalCurve::parse_csv(&text).map_err(|e| match e {
        AnnealedError::Parse { line, message } => invalid(anyhow!("{}:{line}: {message}", path.display())),
        other => invalid(anyhow!("{}: {other}", path.display())),
    })
}

fn policy(cap: Option<usize>) -> WindowPolicy {
    cap.map_or(WindowPolicy::Strict, WindowPolicy::Capped)
}

fn check_n_max(n_max: u64) -> Result<(), Failure> {
    if n_max < 100 {
        return Err(invalid(anyhow!("--n-max must be at least 100, got {n_max}")));
    }
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    source: LawSource,
    /// Largest level of the tail-quantity grid.
    #[arg(long, default_value_t = 100_000)]
    n_max: u64,
    /// Write the limit quantities as JSON.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn validate(a: &ValidateArgs) -> Outcome {
    check_n_max(a.n_max)?;
    let law = a.source.load()?;
    let lim = limit_quantities(&law, a.n_max);
    println!("law = {}", law.digest());
    println!("atoms = {}", law.atoms().len());
    println!("epsilon_0 = {}", law.ellipticity_floor());
    println!("regime = {}", lim.regime);
    println!("stable = {}", lim.stable);
    if let Some(out) = &a.out {
        let body = json(&lim).map_err(numerical)?;
        emit(Some(out), &body, "validate", &json!({"args": a, "law": law.digest()}), None).map_err(invalid)?;
    }
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct ConstructArgs {
    /// Decay of q_n: pow:a, geo:b, explog:c,kappa or exppow:c,kappa.
    #[arg(long)]
    q: String,
    #[arg(long)]
    eps: f64,
    /// First level (at least 2).
    #[arg(long)]
    n0: u64,
    /// Truncation level N.
    #[arg(long = "n-trunc")]
    n_trunc: u64,
    /// Write the law file here instead of stdout.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn construct(a: &ConstructArgs) -> Outcome {
    let decay: Decay = a.q.parse().map_err(|m: String| invalid(anyhow!("--q: {m}")))?;
    let spec = ConstructSpec {
        decay,
        eps: a.eps,
        n0: a.n0,
        n_trunc: a.n_trunc,
    };
    let built = spec.build().map_err(invalid)?;
    let body = format!(
        "# construct {spec}\n# normalizer {}\n# residual weight {}\n{}",
        built.normalizer,
        built.residual_weight,
        built.law.to_text()
    );
    emit(a.out.as_deref(), &body, "construct", a, None).map_err(invalid)
}

#[derive(Args, Debug, Serialize)]
pub struct RatesArgs {
    #[command(flatten)]
    source: LawSource,
    /// Valley depth h.
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    /// Safety level k (a number or "inf").
    #[arg(long, default_value = "inf")]
    k: String,
    #[arg(long, default_value_t = 100_000)]
    n_max: u64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn rates(a: &RatesArgs) -> Outcome {
    check_n_max(a.n_max)?;
    let k: Safety = a.k.parse().map_err(|m: String| invalid(anyhow!("--k: {m}")))?;
    let law = a.source.load()?;
    let lim = limit_quantities(&law, a.n_max);
    let report = rate_report(&law, &lim, k, a.h).map_err(rate_failure)?;
    let body = json(&json!({
        "tool": "rwrek",
        "version": env!("CARGO_PKG_VERSION"),
        "report": report,
    }))
    .map_err(numerical)?;
    emit(a.out.as_deref(), &body, "rates", &json!({"args": a, "law": law.digest()}), None).map_err(invalid)
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateQuenchedArgs {
    /// Environment file (`offset <lo>` then one triple per line).
    #[arg(long, conflicts_with_all = ["law", "construct"])]
    env: Option<PathBuf>,
    /// Sample the environment from a law instead (needs --seed).
    #[command(flatten)]
    source: LawSource,
    #[arg(long)]
    seed: Option<u64>,
    /// Killing probability per holding step.
    #[arg(long)]
    r: f64,
    /// Horizon.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    start: i64,
    /// Track at most this many sites on each side and report the bracket.
    #[arg(long)]
    window_cap: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn simulate_quenched(a: &SimulateQuenchedArgs) -> Outcome {
    let policy = policy(a.window_cap);
    let env = match &a.env {
        Some(path) => Environment::parse(&read(path)?).map_err(|e| invalid(anyhow!("{}: {e}", path.display())))?,
        None => {
            let law = a.source.load()?;
            let seed = a
                .seed
                .ok_or_else(|| invalid(anyhow!("--seed is required when sampling an environment")))?;
            let half = policy.half_width(a.n) as i64;
            sample_window(&law, seed, a.start - half, a.start + half)
        }
    };
    let spec = KillingWalkSpec::new(&env, a.r, a.start, a.n, policy).map_err(walk_failure)?;
    let b = quenched_survival_dp(&spec).map_err(walk_failure)?;
    let mut body = String::from("t,survival_lower,survival_upper\n");
    for t in 0..=a.n {
        body.push_str(&format!("{t},{},{}\n", b.lower[t], b.upper[t]));
    }
    let config = json!({"args": a, "env": Environment::to_text(&env)});
    emit(a.out.as_deref(), &body, "simulate-quenched", &config, a.seed).map_err(invalid)
}

/// `lo:hi` for the powers of two `2^lo..=2^hi`, or a comma-separated list.
fn parse_grid(spec: &str) -> Result<Vec<usize>, Failure> {
    let bad = || invalid(anyhow!("--grid: expected 'lo:hi' exponents or a comma list, got '{spec}'"));
    if let Some((lo, hi)) = spec.split_once(':') {
        let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi || hi > 40 {
            return Err(bad());
        }
        return Ok(power_grid(lo, hi));
    }
    spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateAnnealedArgs {
    #[command(flatten)]
    source: LawSource,
    #[arg(long)]
    r: f64,
    /// Grid: "7:13" for 2^7..2^13, or a list like "100,200,400".
    #[arg(long, default_value = "7:13")]
    grid: String,
    /// Number of sampled environments.
    #[arg(long, default_value_t = 500)]
    envs: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    window_cap: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn simulate_annealed(a: &SimulateAnnealedArgs) -> Outcome {
    let law = a.source.load()?;
    let cfg = AnnealedConfig {
        r: a.r,
        grid: parse_grid(&a.grid)?,
        n_envs: a.envs,
        seed: a.seed,
        policy: policy(a.window_cap),
    };
    let curve = annealed_survival(&law, &cfg).map_err(annealed_failure)?;
    let config = json!({"args": a, "law": law.digest()});
    emit(a.out.as_deref(), &curve.to_csv(), "simulate-annealed", &config, Some(a.seed)).map_err(invalid)
}

fn parse_regime(spec: &str) -> Result<Regime, Failure> {
    let bad = || invalid(anyhow!("--regime: expected polynomial, intermediate:<kappa> or stretched:<kappa>, got '{spec}'"));
    let (kind, kappa) = match spec.split_once(':') {
        Some((k, v)) => (k, Some(v.trim().parse::<f64>().map_err(|_| bad())?)),
        None => (spec, None),
    };
    match (kind.trim(), kappa) {
        ("polynomial", None) => Ok(Regime::Polynomial),
        ("intermediate", Some(kappa)) if kappa > 0.0 => Ok(Regime::Intermediate { kappa, c: f64::NAN }),
        ("stretched", Some(kappa)) if kappa > 0.0 => Ok(Regime::StretchedExponential { kappa, c: f64::NAN }),
        _ => Err(bad()),
    }
}

#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    /// Curve CSV (`n,p,stderr,lower,upper`).
    #[arg(long)]
    curve: PathBuf,
    /// Regime coordinates; without it the regime is classified from the law.
    #[arg(long)]
    regime: Option<String>,
    #[command(flatten)]
    source: LawSource,
    #[arg(long, default_value_t = 100_000)]
    n_max: u64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn fit(a: &FitArgs) -> Outcome {
    let curve = load_curve(&a.curve)?;
    let regime = match &a.regime {
        Some(spec) => parse_regime(spec)?,
        None => {
            check_n_max(a.n_max)?;
            limit_quantities(&a.source.load()?, a.n_max).regime
        }
    };
    let result = fit_exponent(&curve, &regime).map_err(annealed_failure)?;
    let body = json(&result).map_err(numerical)?;
    let config = json!({"args": a, "curve": curve.to_csv()});
    emit(a.out.as_deref(), &body, "fit", &config, None).map_err(invalid)
}

#[derive(Args, Debug, Serialize)]
pub struct SrwCheckArgs {
    /// Half-width of the interval [-l, l].
    #[arg(long)]
    l: usize,
    /// Time horizon.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

/// Relative tolerance of the simple-random-walk check.
const SRW_TOL: f64 = 0.05;

pub fn srw_check(a: &SrwCheckArgs) -> Outcome {
    if a.l < 1 {
        return Err(invalid(anyhow!("--l must be positive")));
    }
    let value = srw_exit_check(a.l, a.n);
    let target = -std::f64::consts::PI.powi(2) / 8.0;
    let rel = ((value - target) / target).abs();
    let pass = rel <= SRW_TOL;
    let body = json(&json!({
        "l": a.l,
        "n": a.n,
        "value": value,
        "target": target,
        "relative_error": rel,
        "tolerance": SRW_TOL,
        "pass": pass,
    }))
    .map_err(numerical)?;
    if a.out.is_some() {
        println!("value = {value}");
        println!("relative error = {rel} ({})", if pass { "pass" } else { "fail" });
    }
    emit(a.out.as_deref(), &body, "srw-check", a, None).map_err(invalid)
}

#[derive(Args, Debug, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    source: LawSource,
    #[arg(long)]
    curve: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    n_max: u64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn compare(a: &CompareArgs) -> Outcome {
    check_n_max(a.n_max)?;
    let law = a.source.load()?;
    let curve = load_curve(&a.curve)?;
    let lim = limit_quantities(&law, a.n_max);
    let prediction = predicted_decay(&law, &lim).map_err(rate_failure)?;
    let fit = fit_exponent(&curve, &lim.regime).map_err(annealed_failure)?;
    let verdict = annealed::compare(&prediction, &fit).map_err(annealed_failure)?;
    let body = json(&json!({
        "predicted": verdict.predicted,
        "fitted": verdict.fitted,
        "bracket": verdict.bracket,
        "pass": verdict.pass,
        "fit": fit,
    }))
    .map_err(numerical)?;
    let config = json!({"args": a, "law": law.digest(), "curve": curve.to_csv()});
    emit(a.out.as_deref(), &body, "compare", &config, None).map_err(invalid)
}
