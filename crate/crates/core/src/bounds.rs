//! Closed-form lower-bound right-hand sides and the exhaustive and Monte
//! Carlo verifiers for the underlying theorem and lemmas.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{coarsen, BinningSpec, Partition};
use crate::error::{Error, Result};
use crate::estimators::TrainingSample;
use crate::harness::TrialRecord;
use crate::lms::LmAlgorithm;
use crate::prob::{FactoidDist, FactoidSet, FactoidUniverse, SeededRng, BOTTOM};
use crate::stats::{normal_upper_quantile, normal_upper_tail, Direction, EventFrequency, Moments};
use crate::worlds::{posterior_sampler_uniform_world, WorldModel};

/// Slack used when comparing a bound's sides.
pub const SATISFACTION_SLACK: f64 = 1e-12;

/// Largest universe the exhaustive sweeps accept.
pub const MAX_EXHAUSTIVE_UNIVERSE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub delta: f64,
    pub b: u32,
    pub epsilon: f64,
    pub s: f64,
    pub r: f64,
    pub n: usize,
    pub k_types: usize,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::param("delta", format!("must lie in (0, 1], got {}", self.delta)));
        }
        if self.b == 0 {
            return Err(Error::param("b", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::param("epsilon", format!("must lie in [0, 1], got {}", self.epsilon)));
        }
        if !self.s.is_finite() {
            return Err(Error::param("s", "must be finite"));
        }
        if !(self.r >= 1.0 && self.r.is_finite()) {
            return Err(Error::param("r", format!("must be at least 1, got {}", self.r)));
        }
        if self.n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        if self.k_types == 0 {
            return Err(Error::param("k_types", "must be at least 1"));
        }
        Ok(())
    }

    /// 3·m·e^(-s)/δ.
    fn sparsity_term(&self, m: f64) -> f64 {
        3.0 * m * (-self.s).exp() / self.delta
    }

    /// sqrt(6·ln(6k/δ)/n).
    fn sampling_term(&self, k: f64) -> f64 {
        (6.0 * (6.0 * k / self.delta).ln() / self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEvaluation {
    /// Observed hallucination rate g(H).
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub vacuous: bool,
}

impl BoundEvaluation {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        let vacuous = rhs <= 0.0;
        Self {
            lhs,
            rhs,
            satisfied: vacuous || lhs >= rhs - SATISFACTION_SLACK,
            vacuous,
        }
    }
}

fn skeleton(mf: f64, mc: f64, sparsity: f64, sampling: f64) -> f64 {
    mf - mc - sparsity - sampling
}

/// MF̂ − Mc_b − 3e^(-s)/δ − sqrt(6 ln(6/δ)/n), for regular worlds.
pub fn cor1_rhs(mf: f64, mc: f64, p: &BoundParams) -> f64 {
    skeleton(mf, mc, p.sparsity_term(1.0), p.sampling_term(1.0))
}

/// Regular facts only: third term 3·r·n·e^(-s)/δ.
pub fn cor_balfact_rhs(mf: f64, mc: f64, p: &BoundParams) -> f64 {
    skeleton(mf, mc, p.sparsity_term(p.r * p.n as f64), p.sampling_term(1.0))
}

/// Diagnostic variant of [`cor_balfact_rhs`] that keeps the observed |O|
/// instead of bounding it by n: third term 3·r·(1 + |O|)·e^(-s)/(2δ).
pub fn cor_balfact_observed_rhs(mf: f64, mc: f64, p: &BoundParams, observed: usize) -> f64 {
    skeleton(
        mf,
        mc,
        p.sparsity_term(p.r * (1 + observed) as f64 / 2.0),
        p.sampling_term(1.0),
    )
}

/// Regular facts and probabilities: third term 3·r·e^(-s)/δ.
pub fn cor_general_rhs(mf: f64, mc: f64, p: &BoundParams) -> f64 {
    skeleton(mf, mc, p.sparsity_term(p.r), p.sampling_term(1.0))
}

/// Per-type bound with k types: 3k·e^(-s)/δ and sqrt(6 ln(6k/δ)/n).
pub fn cor_types_rhs(mf_i: f64, mc_i: f64, p: &BoundParams) -> f64 {
    let k = p.k_types as f64;
    skeleton(mf_i, mc_i, p.sparsity_term(k), p.sampling_term(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedWidthVariant {
    /// Uses TV(p^{B(g,ε)}, g).
    Tv,
    /// Uses Mis_ε(p, g) and subtracts ε.
    Mis,
}

pub fn cor_fixed_width_rhs(mf: f64, value: f64, p: &BoundParams, variant: FixedWidthVariant) -> f64 {
    let base = cor1_rhs(mf, value, p);
    match variant {
        FixedWidthVariant::Tv => base,
        FixedWidthVariant::Mis => base - p.epsilon,
    }
}

/// The three equivalent total-variation forms: max over subsets
/// (exhaustive), half L1, and sum of positive parts.
pub fn tv_three_forms(a: &FactoidDist, b: &FactoidDist) -> Result<(f64, f64, f64)> {
    a.universe().check_same(&b.universe())?;
    let size = a.universe().size();
    if size > 20 {
        return Err(Error::param("universe", "subset enumeration needs at most 20 factoids"));
    }
    let da = a.to_dense();
    let db = b.to_dense();
    let mut best = 0.0f64;
    for mask in 0u32..(1u32 << size) {
        let mut diff = 0.0;
        for y in 0..size {
            if mask >> y & 1 == 1 {
                diff += da[y] - db[y];
            }
        }
        best = best.max(diff.abs());
    }
    Ok((best, a.tv_distance(b)?, a.tv_positive_part(b)?))
}

/// Closed-form right side of the main theorem for a uniform (k = 0)
/// permuted power-law posterior: (N−m)/|U| + |O|·(N−m)/(N·|U|) with
/// m = |O ∖ ⊥|.
pub fn theorem_main_rhs_uniform(universe_size: usize, fact_count: usize, observed: &FactoidSet) -> Result<f64> {
    let o = observed.len() + usize::from(!observed.contains(BOTTOM));
    let m = o - 1;
    if m > fact_count {
        return Err(Error::InconsistentSample);
    }
    let u = universe_size - o;
    if u == 0 {
        return Ok(0.0);
    }
    let free = (fact_count - m) as f64;
    Ok(free / u as f64 + o as f64 * free / (fact_count as f64 * u as f64))
}

/// A (g, Π) pair to test the main theorem on.
#[derive(Debug, Clone)]
pub struct TheoremProbe {
    pub label: String,
    pub g: FactoidDist,
    pub partition: Partition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub label: String,
    pub lhs_mean: f64,
    pub lhs_stderr: f64,
    pub rhs_exact: f64,
    pub pass: bool,
}

fn uniform_world_params(model: &WorldModel) -> Result<(usize, usize)> {
    match model {
        WorldModel::PermutedPowerLaw {
            universe_size,
            fact_count,
            exponent,
        } if *exponent == 0.0 => Ok((*universe_size, *fact_count)),
        _ => Err(Error::Unsupported(
            "theorem checks need a permuted power-law world with k = 0".into(),
        )),
    }
}

/// Monte Carlo estimate of E_ν[(p(U) − ‖p^Π − g‖_TV − g(H))_+] over exact
/// posterior draws, against the closed-form right side. Passes when
/// lhs ≤ rhs + 3·stderr.
pub fn verify_theorem_main_mc<R: Rng + ?Sized>(
    model: &WorldModel,
    observed: &FactoidSet,
    probe: &TheoremProbe,
    samples: usize,
    rng: &mut R,
) -> Result<TheoremCheck> {
    let (size, facts) = uniform_world_params(model)?;
    if samples < 2 {
        return Err(Error::param("samples", "need at least 2 posterior draws"));
    }
    let universe = model.universe();
    universe.check_same(&probe.g.universe())?;
    universe.check_same(&probe.partition.universe())?;
    let mut observed = observed.clone();
    observed.insert(BOTTOM);
    let rhs_exact = theorem_main_rhs_uniform(size, facts, &observed)?;

    let mut values = Vec::with_capacity(samples);
    for _ in 0..samples {
        let world = posterior_sampler_uniform_world(model, &observed, rng)?;
        let p = world.p();
        let missing = p.mass_outside(&observed)?;
        let tv = coarsen(p, &probe.partition)?.tv_distance(&probe.g)?;
        let gh = probe.g.mass_outside(world.facts())?;
        values.push((missing - tv - gh).max(0.0));
    }
    let m = Moments::of(&values);
    Ok(TheoremCheck {
        label: probe.label.clone(),
        lhs_mean: m.mean,
        lhs_stderr: m.std_err(),
        rhs_exact,
        pass: m.mean <= rhs_exact + 3.0 * m.std_err(),
    })
}

/// The standard probe set: six learners under adaptive, fixed-width and
/// exact-value binning, a random g with a random partition, and the
/// memorizer with singletons.
pub fn theorem_main_probes<R: Rng + ?Sized>(sample: &TrainingSample, b: u32, epsilon: f64, rng: &mut R) -> Result<Vec<TheoremProbe>> {
    let universe = sample.universe();
    let learners = [
        LmAlgorithm::MonofactMemorizer,
        LmAlgorithm::Empirical,
        LmAlgorithm::Laplace { alpha: 0.5 },
        LmAlgorithm::Uniform,
        LmAlgorithm::YayMixture {
            base: Box::new(LmAlgorithm::Empirical),
            lambda: 0.99,
        },
        LmAlgorithm::YayMixture {
            base: Box::new(LmAlgorithm::MonofactMemorizer),
            lambda: 0.5,
        },
    ];
    let specs = [
        BinningSpec::Adaptive { bins: b },
        BinningSpec::FixedWidth { epsilon },
        BinningSpec::ExactValue,
    ];
    let mut probes = Vec::new();
    for alg in &learners {
        let g = alg.train(sample, None)?;
        for spec in specs {
            probes.push(TheoremProbe {
                label: format!("{} / {}", alg.label(), spec.label()),
                partition: spec.partition(&g)?,
                g: g.clone(),
            });
        }
    }
    let size = universe.size();
    let g = FactoidDist::from_weights(universe, (0..size).map(|y| (y, rng.random::<f64>())))?;
    let blocks = rng.random_range(1..=size);
    let labels: Vec<usize> = (0..size).map(|_| rng.random_range(0..blocks)).collect();
    probes.push(TheoremProbe {
        label: "random g / random partition".into(),
        g,
        partition: Partition::from_labels(universe, &labels)?,
    });
    probes.push(TheoremProbe {
        label: "monofact_memorizer / singletons".into(),
        g: LmAlgorithm::MonofactMemorizer.train(sample, None)?,
        partition: Partition::singletons(universe),
    });
    Ok(probes)
}

/// Monte Carlo check of the posterior marginals behind the closed form:
/// every y ∈ U must have Pr[y ∈ F] within a Bonferroni-adjusted 3σ of
/// (N − m)/|U|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub expected: f64,
    pub max_abs_z: f64,
    pub z_limit: f64,
    pub pass: bool,
}

pub fn validate_posterior_marginals<R: Rng + ?Sized>(
    model: &WorldModel,
    observed: &FactoidSet,
    draws: usize,
    rng: &mut R,
) -> Result<MarginalCheck> {
    let (size, facts) = uniform_world_params(model)?;
    let mut observed = observed.clone();
    observed.insert(BOTTOM);
    let unobserved: Vec<usize> = (0..size).filter(|&y| !observed.contains(y)).collect();
    if unobserved.is_empty() || draws == 0 {
        return Err(Error::param("draws", "need draws and a non-empty U"));
    }
    let expected = (facts - (observed.len() - 1)) as f64 / unobserved.len() as f64;
    let mut hits = vec![0usize; size];
    for _ in 0..draws {
        let world = posterior_sampler_uniform_world(model, &observed, rng)?;
        for y in world.facts().iter() {
            hits[y] += 1;
        }
    }
    let sd = (expected * (1.0 - expected) / draws as f64).sqrt();
    let max_abs_z = unobserved
        .iter()
        .map(|&y| {
            let dev = (hits[y] as f64 / draws as f64 - expected).abs();
            if sd == 0.0 {
                if dev == 0.0 { 0.0 } else { f64::INFINITY }
            } else {
                dev / sd
            }
        })
        .fold(0.0, f64::max);
    // Family-wise two-sided level of a single 3σ test.
    let family_tail = 2.0 * normal_upper_tail(3.0);
    let z_limit = normal_upper_quantile(family_tail / (2.0 * unobserved.len() as f64));
    Ok(MarginalCheck {
        expected,
        max_abs_z,
        z_limit,
        pass: max_abs_z <= z_limit,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeatViolation {
    pub partition: Vec<Vec<usize>>,
    pub subset: Vec<usize>,
    /// None for the expectation inequality, Some(i) for the pointwise
    /// chain on instance i.
    pub instance: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeatReport {
    pub partitions: usize,
    pub subsets: usize,
    pub checks: usize,
    pub violations: Vec<MeatViolation>,
}

/// All set partitions of {0..n} as block labels (restricted growth strings).
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut labels = vec![0usize; n];
    fn rec(i: usize, max: usize, labels: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == labels.len() {
            out.push(labels.clone());
            return;
        }
        for l in 0..=max + 1 {
            labels[i] = l;
            rec(i + 1, max.max(l), labels, out);
        }
    }
    rec(1, 0, &mut labels, &mut out);
    out
}

/// Exhaustive check of E_ν[(p(S) − p^Π(S))_+] ≤ |Y∖S|·max_{y∈S} E_ν[p(y)]
/// over every partition Π and non-empty S, plus the pointwise chain
/// (p(S) − p^Π(S))_+ ≤ Σ_B p(S∩B)|B∖S|/|B| ≤ Σ_B p(S∩B)|B∖S|/|S∩B|
/// on every instance.
pub fn verify_lemma_meat_exhaustive(model: &WorldModel, tolerance: f64) -> Result<MeatReport> {
    let WorldModel::Explicit(instances) = model else {
        return Err(Error::Unsupported("the exhaustive sweep needs an explicit world".into()));
    };
    let size = model.universe_size();
    if size > MAX_EXHAUSTIVE_UNIVERSE {
        return Err(Error::param(
            "universe",
            format!("at most {MAX_EXHAUSTIVE_UNIVERSE} factoids for exhaustive sweeps, got {size}"),
        ));
    }
    let dense: Vec<(f64, Vec<f64>)> = instances.iter().map(|(w, i)| (*w, i.p().to_dense())).collect();
    let mean: Vec<f64> = (0..size)
        .map(|y| dense.iter().map(|(w, p)| w * p[y]).sum())
        .collect();
    let partitions = set_partitions(size);
    let subsets = (1usize << size) - 1;

    let violations: Vec<MeatViolation> = partitions
        .par_iter()
        .flat_map_iter(|labels| check_partition(labels, &dense, &mean, tolerance))
        .collect();
    Ok(MeatReport {
        partitions: partitions.len(),
        subsets,
        checks: partitions.len() * subsets * (1 + dense.len()),
        violations,
    })
}

fn check_partition(labels: &[usize], dense: &[(f64, Vec<f64>)], mean: &[f64], tolerance: f64) -> Vec<MeatViolation> {
    let size = labels.len();
    let blocks = labels.iter().max().map_or(0, |m| m + 1);
    let block_size: Vec<usize> = (0..blocks)
        .map(|b| labels.iter().filter(|&&l| l == b).count())
        .collect();
    let coarse: Vec<Vec<f64>> = dense
        .iter()
        .map(|(_, p)| {
            let mut mass = vec![0.0; blocks];
            for y in 0..size {
                mass[labels[y]] += p[y];
            }
            (0..size).map(|y| mass[labels[y]] / block_size[labels[y]] as f64).collect()
        })
        .collect();
    let to_blocks = || -> Vec<Vec<usize>> {
        (0..blocks)
            .map(|b| (0..size).filter(|&y| labels[y] == b).collect())
            .collect()
    };

    let mut out = Vec::new();
    for mask in 1usize..(1 << size) {
        let in_s = |y: usize| mask >> y & 1 == 1;
        let outside = (0..size).filter(|&y| !in_s(y)).count();
        let max_mean = (0..size).filter(|&y| in_s(y)).map(|y| mean[y]).fold(0.0, f64::max);
        let rhs = outside as f64 * max_mean;
        let mut lhs = 0.0;
        for (i, ((w, p), q)) in dense.iter().zip(&coarse).enumerate() {
            let ps: f64 = (0..size).filter(|&y| in_s(y)).map(|y| p[y]).sum();
            let qs: f64 = (0..size).filter(|&y| in_s(y)).map(|y| q[y]).sum();
            let gap = (ps - qs).max(0.0);
            lhs += w * gap;

            let mut by_block = 0.0;
            let mut by_overlap = 0.0;
            for b in 0..blocks {
                let members = (0..size).filter(|&y| labels[y] == b);
                let (mut p_in, mut n_in, mut n_out) = (0.0, 0usize, 0usize);
                for y in members {
                    if in_s(y) {
                        p_in += p[y];
                        n_in += 1;
                    } else {
                        n_out += 1;
                    }
                }
                by_block += p_in * n_out as f64 / block_size[b] as f64;
                if n_in > 0 {
                    by_overlap += p_in * n_out as f64 / n_in as f64;
                }
            }
            if gap > by_block + tolerance || by_block > by_overlap + tolerance {
                out.push(MeatViolation {
                    partition: to_blocks(),
                    subset: (0..size).filter(|&y| in_s(y)).collect(),
                    instance: Some(i),
                    lhs: gap,
                    rhs: by_block.min(by_overlap),
                });
            }
        }
        if lhs > rhs + tolerance {
            out.push(MeatViolation {
                partition: to_blocks(),
                subset: (0..size).filter(|&y| in_s(y)).collect(),
                instance: None,
                lhs,
                rhs,
            });
        }
    }
    out
}

/// Randomized explicit world for exhaustive sweeps: `instances` fact
/// distributions with random support and weights.
pub fn random_explicit_world(universe_size: usize, instances: usize, seed: u64) -> Result<WorldModel> {
    let universe = FactoidUniverse::new(universe_size)?;
    let mut rng = SeededRng::new(seed);
    let mut out = Vec::with_capacity(instances);
    while out.len() < instances {
        let weights: Vec<(usize, f64)> = (1..universe_size)
            .map(|y| (y, if rng.random::<f64>() < 0.6 { rng.random::<f64>() } else { 0.0 }))
            .collect();
        let Ok(p) = FactoidDist::from_weights(universe, weights) else {
            continue;
        };
        out.push((rng.random::<f64>() + 0.1, crate::worlds::WorldInstance::new(p)?));
    }
    WorldModel::explicit(out)
}

/// TV-form agreement over random pairs on universes of 2..=max_universe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TvSweep {
    pub pairs: usize,
    pub max_disagreement: f64,
}

pub fn verify_tv_forms(max_universe: usize, pairs_per_size: usize, seed: u64) -> Result<TvSweep> {
    let mut rng = SeededRng::new(seed);
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for size in 2..=max_universe {
        let universe = FactoidUniverse::new(size)?;
        for _ in 0..pairs_per_size {
            let a = FactoidDist::from_weights(universe, (0..size).map(|y| (y, rng.random::<f64>())))?;
            let b = FactoidDist::from_weights(universe, (0..size).map(|y| (y, rng.random::<f64>())))?;
            let (m, h, q) = tv_three_forms(&a, &b)?;
            worst = worst.max((m - h).abs()).max((h - q).abs()).max((m - q).abs());
            pairs += 1;
        }
    }
    Ok(TvSweep {
        pairs,
        max_disagreement: worst,
    })
}

/// Frequencies of the two events combined in the corollary proofs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    /// g(H) ≥ p(U) − TV − (3/(2δ))·posterior term; needs ≥ 1 − 2δ/3.
    pub eq9: EventFrequency,
    /// p(U) ≥ MF̂ − sqrt(6 ln(6/δ)/n); needs ≥ 1 − δ/3.
    pub eq10: EventFrequency,
    pub pass: bool,
}

pub const MIN_MARKOV_TRIALS: usize = 100;

pub fn verify_markov_step(trials: &[TrialRecord], delta: f64) -> Result<MarkovReport> {
    if trials.len() < MIN_MARKOV_TRIALS {
        return Err(Error::param(
            "trials",
            format!("need at least {MIN_MARKOV_TRIALS} trials, got {}", trials.len()),
        ));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::param("delta", format!("must lie in (0, 1], got {delta}")));
    }
    let eq9 = EventFrequency::from_flags(
        trials.iter().filter_map(|t| t.eq9_holds),
        1.0 - 2.0 * delta / 3.0,
        Direction::AtLeast,
    );
    let eq10 = EventFrequency::from_flags(
        trials.iter().map(|t| t.eq10_holds),
        1.0 - delta / 3.0,
        Direction::AtLeast,
    );
    let pass = (eq9.trials == 0 || eq9.pass) && eq10.pass;
    Ok(MarkovReport { eq9, eq10, pass })
}
