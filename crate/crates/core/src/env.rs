//! Finite windows of a random environment.

use crate::error::LawError;
use crate::law::{SiteLaw, Triple, NORMALIZATION_TOL};
use crate::rng;

/// Sites `lo..=hi` of an environment with their log-ratios and, when the
/// window contains the origin, the potential at every integer of the window.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    lo: i64,
    sites: Vec<Triple>,
    log_rho: Vec<f64>,
    potential: Option<Vec<f64>>,
}

impl Environment {
    /// Builds an environment from sites starting at index `lo`. Every triple
    /// must be normalized with positive `w_plus` and `w_minus`.
    pub fn new(lo: i64, sites: Vec<Triple>) -> Result<Self, LawError> {
        if sites.is_empty() {
            return Err(LawError::Malformed("environment has no sites".into()));
        }
        for (i, t) in sites.iter().enumerate() {
            let x = lo + i as i64;
            let sum = t.plus + t.zero + t.minus;
            if [t.plus, t.zero, t.minus].iter().any(|p| !p.is_finite() || *p < 0.0)
                || (sum - 1.0).abs() > NORMALIZATION_TOL
            {
                return Err(LawError::Malformed(format!("site {x}: invalid triple {t}")));
            }
            if t.plus <= 0.0 || t.minus <= 0.0 {
                return Err(LawError::EllipticityViolation {
                    index: i,
                    plus: t.plus,
                    minus: t.minus,
                });
            }
        }
        let log_rho: Vec<f64> = sites.iter().map(Triple::log_rho).collect();
        let hi = lo + sites.len() as i64 - 1;
        let potential = (lo <= 0 && hi >= 0).then(|| cumulative_potential(lo, &log_rho));
        Ok(Environment {
            lo,
            sites,
            log_rho,
            potential,
        })
    }

    /// Every site in `lo..=hi` carries the same triple.
    pub fn homogeneous(lo: i64, hi: i64, triple: Triple) -> Result<Self, LawError> {
        assert!(lo <= hi);
        Environment::new(lo, vec![triple; (hi - lo + 1) as usize])
    }

    /// Builds an environment from prescribed log-ratios with zero holding.
    pub fn from_log_rho(lo: i64, log_rho: &[f64]) -> Result<Self, LawError> {
        let sites = log_rho
            .iter()
            .map(|&l| {
                let rho = l.exp();
                let plus = 1.0 / (1.0 + rho);
                Triple::new(plus, 0.0, 1.0 - plus)
            })
            .collect();
        Environment::new(lo, sites)
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.sites.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, x: i64) -> bool {
        x >= self.lo && x <= self.hi()
    }

    pub fn sites(&self) -> &[Triple] {
        &self.sites
    }

    pub fn site(&self, x: i64) -> Option<&Triple> {
        self.contains(x).then(|| &self.sites[(x - self.lo) as usize])
    }

    pub fn log_rho(&self, x: i64) -> Option<f64> {
        self.contains(x).then(|| self.log_rho[(x - self.lo) as usize])
    }

    /// Potential at integer `m`; `None` outside the window or when the
    /// window misses the origin.
    pub fn potential_at(&self, m: i64) -> Option<f64> {
        let v = self.potential.as_ref()?;
        self.contains(m).then(|| v[(m - self.lo) as usize])
    }

    /// Potential on the whole window, indexed from `lo`.
    pub fn potential_values(&self) -> Option<&[f64]> {
        self.potential.as_deref()
    }

    /// Copy of the sites `lo..=hi` (clipped to the window).
    pub fn restrict(&self, lo: i64, hi: i64) -> Option<Environment> {
        let lo = lo.max(self.lo);
        let hi = hi.min(self.hi());
        if lo > hi {
            return None;
        }
        let a = (lo - self.lo) as usize;
        let b = (hi - self.lo) as usize;
        Environment::new(lo, self.sites[a..=b].to_vec()).ok()
    }

    /// Text form: `offset <lo>` followed by `w_plus w_zero w_minus` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!("offset {}\n", self.lo);
        for t in &self.sites {
            out.push_str(&format!("{:?} {:?} {:?}\n", t.plus, t.zero, t.minus));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, LawError> {
        let mut offset = None;
        let mut sites = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("offset") {
                if offset.is_some() || !sites.is_empty() {
                    return Err(LawError::Parse {
                        line: line_no,
                        message: "offset must appear once, before the sites".into(),
                    });
                }
                offset = Some(rest.trim().parse::<i64>().map_err(|_| LawError::Parse {
                    line: line_no,
                    message: format!("invalid offset '{}'", rest.trim()),
                })?);
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(LawError::Parse {
                    line: line_no,
                    message: format!("expected 3 numbers, found {}", fields.len()),
                });
            }
            let mut v = [0.0; 3];
            for (slot, field) in v.iter_mut().zip(&fields) {
                *slot = field.parse().map_err(|_| LawError::Parse {
                    line: line_no,
                    message: format!("invalid number '{field}'"),
                })?;
            }
            sites.push(Triple::new(v[0], v[1], v[2]));
        }
        let lo = offset.ok_or(LawError::Parse {
            line: 1,
            message: "missing 'offset <lo>' header".into(),
        })?;
        Environment::new(lo, sites)
    }
}

/// `V(m) = sum_{i=0}^{m} ln rho_i` for `m > 0`, `V(0) = 0`,
/// `V(m) = -sum_{i=m}^{-1} ln rho_i` for `m < 0`.
fn cumulative_potential(lo: i64, log_rho: &[f64]) -> Vec<f64> {
    let hi = lo + log_rho.len() as i64 - 1;
    let at = |x: i64| log_rho[(x - lo) as usize];
    let mut v = vec![0.0; log_rho.len()];
    let mut acc = 0.0;
    for m in 1..=hi {
        acc = if m == 1 { at(0) + at(1) } else { acc + at(m) };
        v[(m - lo) as usize] = acc;
    }
    acc = 0.0;
    for m in (lo..=-1).rev() {
        acc += at(m);
        v[(m - lo) as usize] = -acc;
    }
    v
}

/// Samples sites `lo..=hi` i.i.d. from `law`. Site `x` depends only on
/// `(seed, x)`.
pub fn sample_window(law: &SiteLaw, seed: u64, lo: i64, hi: i64) -> Environment {
    sample_window_member(law, seed, 0, lo, hi)
}

/// Like [`sample_window`] for environment number `member` of a batch.
pub fn sample_window_member(law: &SiteLaw, seed: u64, member: u64, lo: i64, hi: i64) -> Environment {
    assert!(lo <= hi, "empty window");
    let sites = (lo..=hi)
        .map(|x| law.sample_triple(rng::site_uniform(seed, member, x)))
        .collect();
    Environment::new(lo, sites).expect("law atoms are valid triples")
}
