//! Learning algorithms mapping a training sample to a generated factoid
//! distribution g.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{monofact_estimate, TrainingSample};
use crate::prob::{FactoidDist, BOTTOM};
use crate::worlds::WorldInstance;

pub const DEFAULT_LAPLACE_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LmAlgorithm {
    /// Spreads MF̂ uniformly over U and 1 − MF̂ uniformly over O.
    MonofactMemorizer,
    Empirical,
    Laplace { alpha: f64 },
    Uniform,
    /// Returns the true p; not a learning algorithm.
    Oracle,
    /// λ·δ_⊥ + (1 − λ)·base.
    YayMixture { base: Box<LmAlgorithm>, lambda: f64 },
}

impl LmAlgorithm {
    pub fn validate(&self) -> Result<()> {
        match self {
            LmAlgorithm::Laplace { alpha } if !(alpha.is_finite() && *alpha > 0.0) => Err(
                Error::param("alpha", format!("must be positive, got {alpha}")),
            ),
            LmAlgorithm::YayMixture { base, lambda } => {
                if !(0.0..=1.0).contains(lambda) {
                    return Err(Error::param(
                        "lambda",
                        format!("must lie in [0, 1], got {lambda}"),
                    ));
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }

    /// False for algorithms that read the hidden truth.
    pub fn is_learning_algorithm(&self) -> bool {
        match self {
            LmAlgorithm::Oracle => false,
            LmAlgorithm::YayMixture { base, .. } => base.is_learning_algorithm(),
            _ => true,
        }
    }

    pub fn label(&self) -> String {
        match self {
            LmAlgorithm::MonofactMemorizer => "monofact_memorizer".into(),
            LmAlgorithm::Empirical => "empirical".into(),
            LmAlgorithm::Laplace { alpha } => format!("laplace({alpha})"),
            LmAlgorithm::Uniform => "uniform".into(),
            LmAlgorithm::Oracle => "oracle".into(),
            LmAlgorithm::YayMixture { base, lambda } => {
                format!("yay_mixture({}, {lambda})", base.label())
            }
        }
    }

    /// Trains on `sample`; `truth` is read only by the oracle.
    pub fn train(&self, sample: &TrainingSample, truth: Option<&FactoidDist>) -> Result<FactoidDist> {
        self.validate()?;
        let universe = sample.universe();
        match self {
            LmAlgorithm::MonofactMemorizer => {
                // With documents identified with factoids, choosing a
                // document for each generated factoid is the identity.
                let mf = monofact_estimate(sample)?;
                let observed = sample.observed();
                let unobserved = sample.unobserved_len();
                if unobserved == 0 {
                    if mf > 0.0 {
                        return Err(Error::Unsupported(
                            "memorizer needs an unobserved factoid when MF > 0".into(),
                        ));
                    }
                    return Ok(FactoidDist::uniform(universe));
                }
                let on_observed = (1.0 - mf) / observed.len() as f64;
                let atoms = observed.iter().map(|y| (y, on_observed)).collect();
                FactoidDist::from_parts(universe, atoms, mf / unobserved as f64)
            }
            LmAlgorithm::Empirical => {
                if sample.is_empty() {
                    return Err(Error::EmptySample);
                }
                FactoidDist::from_weights(
                    universe,
                    sample.counts().iter().map(|&(y, c)| (y, c as f64)),
                )
            }
            LmAlgorithm::Laplace { alpha } => {
                let denom = sample.n() as f64 + alpha * universe.size() as f64;
                let atoms = sample
                    .counts()
                    .iter()
                    .map(|&(y, c)| (y, (c as f64 + alpha) / denom))
                    .collect();
                FactoidDist::from_parts(universe, atoms, alpha / denom)
            }
            LmAlgorithm::Uniform => Ok(FactoidDist::uniform(universe)),
            LmAlgorithm::Oracle => {
                let truth = truth.ok_or_else(|| {
                    Error::param("truth", "the oracle needs the true distribution")
                })?;
                universe.check_same(&truth.universe())?;
                Ok(truth.clone())
            }
            LmAlgorithm::YayMixture { base, lambda } => {
                let g = base.train(sample, truth)?;
                mix_with_bottom(&g, *lambda)
            }
        }
    }
}

/// λ·δ_⊥ + (1 − λ)·g.
fn mix_with_bottom(g: &FactoidDist, lambda: f64) -> Result<FactoidDist> {
    let keep = 1.0 - lambda;
    let mut atoms: Vec<(usize, f64)> = g.atoms().iter().map(|&(y, w)| (y, keep * w)).collect();
    match atoms.iter_mut().find(|(y, _)| *y == BOTTOM) {
        Some((_, w)) => *w += lambda,
        None => atoms.push((BOTTOM, keep * g.prob(BOTTOM) + lambda)),
    }
    FactoidDist::from_parts(g.universe(), atoms, keep * g.background())
}

/// g(H): generated mass outside the world's facts.
pub fn hallucination_rate(g: &FactoidDist, world: &WorldInstance) -> Result<f64> {
    g.universe().check_same(&world.universe())?;
    g.mass_outside(world.facts())
}
