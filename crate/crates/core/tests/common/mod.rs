#![allow(dead_code)]

use rwre_killing::law::{Atom, SiteLaw, Triple};
use rwre_killing::rng::{stream, unit_f64};
use rwre_killing::Environment;

pub fn law_a() -> SiteLaw {
    SiteLaw::new(vec![
        Atom::new(0.75, 0.0, 0.25, 0.4),
        Atom::new(0.25, 0.0, 0.75, 0.4),
        Atom::new(0.25, 0.5, 0.25, 0.2),
    ])
    .unwrap()
}

/// Triple with holding `0.6 * hold` and both moving parts at least a
/// tenth of the moving mass.
pub fn triple_from(u: f64, hold: f64) -> Triple {
    let zero = hold * 0.6;
    let moving = 1.0 - zero;
    let plus = moving * (0.1 + 0.8 * u);
    Triple::new(plus, zero, moving - plus)
}

/// Seeded random law: one right-biased and one left-biased atom without
/// holding, plus `extra` atoms of which the first holds.
pub fn seeded_law(seed: u64, extra: usize) -> SiteLaw {
    let mut rng = stream(seed, 0x7465_7374, 0, 0);
    let mut u = || unit_f64(&mut rng);
    let mut atoms = Vec::new();
    let p = 0.55 + 0.4 * u();
    atoms.push(Atom::new(p, 0.0, 1.0 - p, 0.2 + u()));
    let q = 0.05 + 0.4 * u();
    atoms.push(Atom::new(q, 0.0, 1.0 - q, 0.2 + u()));
    for i in 0..extra {
        let hold = if i == 0 { 0.1 + 0.8 * u() } else { u() * u() };
        let moving = 1.0 - hold;
        let plus = moving * (0.1 + 0.8 * u());
        atoms.push(Atom::new(plus, hold, moving - plus, 0.05 + u()));
    }
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    for a in &mut atoms {
        a.weight /= total;
    }
    SiteLaw::new(atoms).unwrap()
}

/// Environment on `[lo, lo + len)` with sites drawn from seeded uniforms.
pub fn seeded_env(seed: u64, lo: i64, len: usize, hold_prob: f64) -> Environment {
    let mut rng = stream(seed, 0x656e_7674, 0, 0);
    let sites = (0..len)
        .map(|_| {
            let hold = if unit_f64(&mut rng) < hold_prob { unit_f64(&mut rng) } else { 0.0 };
            triple_from(unit_f64(&mut rng), hold)
        })
        .collect();
    Environment::new(lo, sites).unwrap()
}
