//! Training samples, the monofact (Good-Turing) estimator, missing mass and
//! the concentration radii relating them.

use crate::error::{Error, Result};
use crate::prob::{FactoidDist, FactoidSet, FactoidUniverse, BOTTOM};
use crate::stats::NeumaierSum;

/// An i.i.d. training sample x_train with its multiplicity table.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    universe: FactoidUniverse,
    draws: Vec<usize>,
    counts: Vec<(usize, u64)>,
    observed: FactoidSet,
}

impl TrainingSample {
    pub fn new(universe: FactoidUniverse, draws: Vec<usize>) -> Result<Self> {
        for &y in &draws {
            universe.check_index(y)?;
        }
        let mut sorted = draws.clone();
        sorted.sort_unstable();
        let mut counts: Vec<(usize, u64)> = Vec::new();
        for y in sorted {
            match counts.last_mut() {
                Some((last, c)) if *last == y => *c += 1,
                _ => counts.push((y, 1)),
            }
        }
        let mut observed: Vec<usize> = counts.iter().map(|&(y, _)| y).collect();
        if observed.first() != Some(&BOTTOM) {
            observed.insert(0, BOTTOM);
        }
        Ok(Self {
            universe,
            draws,
            counts,
            observed: FactoidSet::from_sorted_unchecked(observed),
        })
    }

    pub fn universe(&self) -> FactoidUniverse {
        self.universe
    }

    pub fn n(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn draws(&self) -> &[usize] {
        &self.draws
    }

    /// (factoid, multiplicity) for every drawn factoid, sorted by index.
    pub fn counts(&self) -> &[(usize, u64)] {
        &self.counts
    }

    pub fn multiplicity(&self, y: usize) -> u64 {
        self.counts
            .binary_search_by_key(&y, |&(i, _)| i)
            .map_or(0, |pos| self.counts[pos].1)
    }

    /// O = {draws} ∪ {⊥}.
    pub fn observed(&self) -> &FactoidSet {
        &self.observed
    }

    pub fn is_observed(&self, y: usize) -> bool {
        self.observed.contains(y)
    }

    /// |U| = |Y ∖ O|.
    pub fn unobserved_len(&self) -> usize {
        self.observed.complement_len(&self.universe)
    }

    /// Non-⊥ factoids drawn exactly once.
    pub fn singleton_count(&self) -> usize {
        self.counts
            .iter()
            .filter(|&&(y, c)| y != BOTTOM && c == 1)
            .count()
    }
}

/// MF̂: fraction of the n draws that are non-⊥ factoids appearing exactly once.
pub fn monofact_estimate(sample: &TrainingSample) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(sample.singleton_count() as f64 / sample.n() as f64)
}

/// Generic Good-Turing estimate: singletons among all atoms, ⊥ included.
pub fn good_turing_estimate(sample: &TrainingSample) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let singletons = sample.counts().iter().filter(|&&(_, c)| c == 1).count();
    Ok(singletons as f64 / sample.n() as f64)
}

/// p(U), the mass of factoids outside O.
pub fn missing_mass(p: &FactoidDist, sample: &TrainingSample) -> Result<f64> {
    p.universe().check_same(&sample.universe())?;
    p.mass_outside(sample.observed())
}

/// Generic missing mass: p of everything not drawn, ⊥ included.
pub fn generic_missing_mass(p: &FactoidDist, sample: &TrainingSample) -> Result<f64> {
    let m = missing_mass(p, sample)?;
    if sample.multiplicity(BOTTOM) == 0 {
        Ok(m + p.prob(BOTTOM))
    } else {
        Ok(m)
    }
}

/// Exact E[generic missing mass] = Σ_y p(y)(1 − p(y))^n.
pub fn expected_missing_mass(p: &FactoidDist, n: usize) -> f64 {
    expected_power_sum(p, n as i32)
}

/// Exact E[generic Good-Turing] = Σ_y p(y)(1 − p(y))^{n−1}.
pub fn expected_good_turing(p: &FactoidDist, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    Ok(expected_power_sum(p, n as i32 - 1))
}

fn expected_power_sum(p: &FactoidDist, exponent: i32) -> f64 {
    let mut s = NeumaierSum::new();
    for &(_, w) in p.atoms() {
        s.add(w * (1.0 - w).powi(exponent));
    }
    let bg = p.background();
    if bg > 0.0 {
        s.add(p.background_count() as f64 * bg * (1.0 - bg).powi(exponent));
    }
    s.total()
}

fn check_delta(delta: f64, max: f64) -> Result<()> {
    if delta > 0.0 && delta <= max {
        Ok(())
    } else {
        Err(Error::param(
            "delta",
            format!("must lie in (0, {max}], got {delta}"),
        ))
    }
}

fn check_n(n: usize) -> Result<f64> {
    if n == 0 {
        Err(Error::param("n", "must be at least 1"))
    } else {
        Ok(n as f64)
    }
}

/// Two-sided radius 3·sqrt(ln(4/δ)/n) for |missing mass − GT|.
pub fn good_turing_radius(delta: f64, n: usize) -> Result<f64> {
    check_delta(delta, 1.0)?;
    let n = check_n(n)?;
    Ok(3.0 * ((4.0 / delta).ln() / n).sqrt())
}

/// One-sided radius sqrt(6·ln(2/δ)/n) for missing mass ≥ GT − radius.
pub fn missing_mass_lower_radius(delta: f64, n: usize) -> Result<f64> {
    // 1/3 itself arrives as δ/3 with rounding.
    check_delta(delta, 1.0 / 3.0 + 1e-12)?;
    let n = check_n(n)?;
    Ok((6.0 * (2.0 / delta).ln() / n).sqrt())
}

/// Unsimplified two-sided radius 1/n + 2.42·sqrt(ln(4/δ)/n).
pub fn good_turing_radius_unsimplified(delta: f64, n: usize) -> Result<f64> {
    check_delta(delta, 1.0)?;
    let n = check_n(n)?;
    Ok(1.0 / n + 2.42 * ((4.0 / delta).ln() / n).sqrt())
}

/// Unsimplified one-sided radius 1/n + 2.14·sqrt(ln(2/δ)/n).
pub fn missing_mass_lower_radius_unsimplified(delta: f64, n: usize) -> Result<f64> {
    check_delta(delta, 1.0)?;
    let n = check_n(n)?;
    Ok(1.0 / n + 2.14 * ((2.0 / delta).ln() / n).sqrt())
}
