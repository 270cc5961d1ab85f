//! Seeded experiment orchestration: per-trial pipeline, parallel runs,
//! aggregation, and the concentration / upper-bound / theorem suites.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    cor1_rhs, cor_balfact_observed_rhs, cor_balfact_rhs, cor_fixed_width_rhs, cor_general_rhs,
    cor_types_rhs, theorem_main_probes, validate_posterior_marginals, verify_markov_step,
    verify_theorem_main_mc, BoundEvaluation, BoundParams, FixedWidthVariant, MarginalCheck,
    MarkovReport, TheoremCheck, MIN_MARKOV_TRIALS, SATISFACTION_SLACK,
};
use crate::calibration::{generative_calibration_error, miscalibration, BinningSpec};
use crate::error::{Error, Result};
use crate::estimators::{
    generic_missing_mass, good_turing_estimate, good_turing_radius, missing_mass,
    missing_mass_lower_radius, monofact_estimate, TrainingSample,
};
use crate::lms::{hallucination_rate, LmAlgorithm};
use crate::prob::{derive_seed, FactoidDist, SeededRng, BOTTOM};
use crate::stats::{Direction, EventFrequency, Moments};
use crate::worlds::{posterior_term, WorldInstance, WorldModel};

/// Bound parameters as configured; s, r and k default from the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSettings {
    pub delta: f64,
    pub b: u32,
    pub epsilon: f64,
    pub s: Option<f64>,
    pub r: Option<f64>,
    pub k_types: Option<usize>,
}

impl Default for BoundSettings {
    fn default() -> Self {
        Self {
            delta: 0.1,
            b: 10,
            epsilon: 0.1,
            s: None,
            r: None,
            k_types: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub world: WorldModel,
    pub n: usize,
    pub algorithm: LmAlgorithm,
    pub bound: BoundSettings,
    pub trials: usize,
    pub seed: u64,
}

/// Which corollaries have their assumptions met by the configured world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckPlan {
    /// Regular world: the plain, fixed-width TV and Mis_ε corollaries.
    pub regular: bool,
    /// r-regular facts and probabilities are known.
    pub r_regular: bool,
    /// Every type of a multi-type world is regular.
    pub types: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedBounds {
    pub params: BoundParams,
    pub plan: CheckPlan,
}

const SPARSITY_SLACK: f64 = 1e-12;

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.algorithm.validate()?;
        if self.n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        if self.world.universe_size() <= self.n + 1 {
            return Err(Error::param(
                "n",
                format!(
                    "U would be empty: universe has {} factoids, need more than n + 1 = {}",
                    self.world.universe_size(),
                    self.n + 1
                ),
            ));
        }
        if self.trials == 0 {
            return Err(Error::param("trials", "must be at least 1"));
        }
        self.resolve_bounds().map(|_| ())
    }

    /// Binning schemes evaluated per trial.
    pub fn binnings(&self) -> [BinningSpec; 3] {
        [
            BinningSpec::ExactValue,
            BinningSpec::Adaptive { bins: self.bound.b },
            BinningSpec::FixedWidth {
                epsilon: self.bound.epsilon,
            },
        ]
    }

    pub fn resolve_bounds(&self) -> Result<ResolvedBounds> {
        let b = &self.bound;
        let world_s = match self.world.type_sparsities() {
            Some(per_type) => per_type.into_iter().fold(f64::INFINITY, f64::min),
            None => self.world.sparsity(),
        };
        let s = match b.s {
            Some(s) if s > world_s + SPARSITY_SLACK => {
                return Err(Error::param(
                    "s",
                    format!("the world is only {world_s}-sparse, got s = {s}"),
                ))
            }
            Some(s) => s,
            None => world_s,
        };
        let known = self.world.known_regularity();
        let (r, r_known) = match (b.r, known) {
            (Some(r), Some(r0)) if r < r0 => {
                return Err(Error::param(
                    "r",
                    format!("the world is only {r0}-regular, got r = {r}"),
                ))
            }
            (Some(r), _) => (r, true),
            (None, Some(r0)) => (r0, true),
            (None, None) => (1.0, false),
        };
        let types = self.world.type_regularities();
        let type_count = types.as_ref().map_or(1, Vec::len);
        let k_types = match b.k_types {
            Some(k) if k != type_count => {
                return Err(Error::param(
                    "k_types",
                    format!("the world has {type_count} types, got {k}"),
                ))
            }
            _ => type_count,
        };
        let params = BoundParams {
            delta: b.delta,
            b: b.b,
            epsilon: b.epsilon,
            s,
            r,
            n: self.n,
            k_types,
        };
        params.validate()?;
        let plan = CheckPlan {
            regular: r_known && r == 1.0,
            r_regular: r_known,
            types: types.is_some_and(|t| t.iter().all(|r| *r == Some(1.0))),
        };
        Ok(ResolvedBounds { params, plan })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRecord {
    pub mf: f64,
    pub missing_mass: f64,
    pub halluc_rate: f64,
    pub mc_adaptive_b: f64,
    pub cor_types: BoundEvaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    pub n: usize,
    /// |O|, ⊥ included.
    pub observed: usize,
    pub mf: f64,
    pub missing_mass: f64,
    pub halluc_rate: f64,
    pub mc_exact: f64,
    pub mc_adaptive_b: f64,
    pub tv_fixed_eps: f64,
    pub mis_eps: f64,
    /// KL(p ‖ g).
    pub kl: f64,
    pub cor1: BoundEvaluation,
    pub corbal: BoundEvaluation,
    pub corbal_observed_rhs: f64,
    pub corg: BoundEvaluation,
    pub corb2: BoundEvaluation,
    pub corb4: BoundEvaluation,
    pub posterior_term: Option<f64>,
    pub eq9_holds: Option<bool>,
    pub eq10_holds: bool,
    pub types: Vec<TypeRecord>,
}

/// Everything computed for one trial, with the intermediate objects.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub world: WorldInstance,
    pub sample: TrainingSample,
    pub g: FactoidDist,
}

pub fn run_trial(cfg: &ExperimentConfig, trial: u64) -> Result<TrialRecord> {
    run_trial_detailed(cfg, trial).map(|o| o.record)
}

/// World → sample → train → metrics → bounds, seeded by (seed, trial).
pub fn run_trial_detailed(cfg: &ExperimentConfig, trial: u64) -> Result<TrialOutcome> {
    cfg.validate()?;
    let resolved = cfg.resolve_bounds()?;
    let params = resolved.params;
    let seed = derive_seed(cfg.seed, trial);
    let mut rng = SeededRng::new(seed);

    let world = cfg.world.sample_world(&mut rng)?;
    let p = world.p();
    let sample = TrainingSample::new(p.universe(), p.sample_iid(cfg.n, &mut rng)?)?;
    let g = cfg.algorithm.train(&sample, Some(p))?;

    let mf = monofact_estimate(&sample)?;
    let missing = missing_mass(p, &sample)?;
    let gh = hallucination_rate(&g, &world)?;
    let [exact, adaptive, fixed] = cfg.binnings();
    let mc_exact = miscalibration(p, &g, exact)?;
    let mc_adaptive_b = miscalibration(p, &g, adaptive)?;
    let tv_fixed_eps = miscalibration(p, &g, fixed)?;
    let mis_eps = generative_calibration_error(p, &g, params.epsilon)?;
    let kl = p.kl_divergence(&g)?;

    let term = posterior_term(&cfg.world, &sample)?;
    let eq9_holds = term.map(|t| {
        gh >= missing - mc_adaptive_b - 3.0 / (2.0 * params.delta) * t - SATISFACTION_SLACK
    });
    let radius = missing_mass_lower_radius(params.delta / 3.0, cfg.n)?;
    let eq10_holds = missing >= mf - radius - SATISFACTION_SLACK;

    let mut types = Vec::new();
    if let Some(ranges) = cfg.world.type_ranges() {
        for range in ranges {
            let start = range.start;
            let local_draws = sample
                .draws()
                .iter()
                .map(|&y| if range.contains(&y) { y - start + 1 } else { BOTTOM })
                .collect();
            let p_i = p.project(range.clone())?;
            let g_i = g.project(range)?;
            let local = TrainingSample::new(p_i.universe(), local_draws)?;
            let world_i = WorldInstance::new(p_i)?;
            let mf_i = monofact_estimate(&local)?;
            let gh_i = hallucination_rate(&g_i, &world_i)?;
            let mc_i = miscalibration(world_i.p(), &g_i, adaptive)?;
            types.push(TypeRecord {
                mf: mf_i,
                missing_mass: missing_mass(world_i.p(), &local)?,
                halluc_rate: gh_i,
                mc_adaptive_b: mc_i,
                cor_types: BoundEvaluation::new(gh_i, cor_types_rhs(mf_i, mc_i, &params)),
            });
        }
    }

    let record = TrialRecord {
        trial,
        seed,
        n: cfg.n,
        observed: sample.observed().len(),
        mf,
        missing_mass: missing,
        halluc_rate: gh,
        mc_exact,
        mc_adaptive_b,
        tv_fixed_eps,
        mis_eps,
        kl,
        cor1: BoundEvaluation::new(gh, cor1_rhs(mf, mc_adaptive_b, &params)),
        corbal: BoundEvaluation::new(gh, cor_balfact_rhs(mf, mc_adaptive_b, &params)),
        corbal_observed_rhs: cor_balfact_observed_rhs(
            mf,
            mc_adaptive_b,
            &params,
            sample.observed().len(),
        ),
        corg: BoundEvaluation::new(gh, cor_general_rhs(mf, mc_adaptive_b, &params)),
        corb2: BoundEvaluation::new(
            gh,
            cor_fixed_width_rhs(mf, tv_fixed_eps, &params, FixedWidthVariant::Tv),
        ),
        corb4: BoundEvaluation::new(
            gh,
            cor_fixed_width_rhs(mf, mis_eps, &params, FixedWidthVariant::Mis),
        ),
        posterior_term: term,
        eq9_holds,
        eq10_holds,
        types,
    };
    Ok(TrialOutcome {
        record,
        world,
        sample,
        g,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub name: String,
    /// Whether the world satisfies the corollary's assumptions.
    pub checked: bool,
    pub satisfaction: EventFrequency,
    #[serde(with = "crate::stats::nonfinite")]
    pub vacuous_fraction: f64,
}

impl BoundSummary {
    fn from_evaluations(name: &str, checked: bool, evals: &[BoundEvaluation], delta: f64) -> Self {
        let vacuous = evals.iter().filter(|e| e.vacuous).count();
        Self {
            name: name.to_string(),
            checked,
            satisfaction: EventFrequency::from_flags(
                evals.iter().map(|e| e.satisfied),
                1.0 - delta,
                Direction::AtLeast,
            ),
            vacuous_fraction: if evals.is_empty() {
                f64::NAN
            } else {
                vacuous as f64 / evals.len() as f64
            },
        }
    }

    /// Unchecked bounds never fail a run.
    pub fn pass(&self) -> bool {
        !self.checked || self.satisfaction.pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub trials: usize,
    pub algorithm: String,
    pub params: BoundParams,
    pub plan: CheckPlan,
    pub bounds: Vec<BoundSummary>,
    pub metrics: BTreeMap<String, Moments>,
    pub markov: Option<MarkovReport>,
    pub pass: bool,
}

pub fn aggregate(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Result<AggregateReport> {
    let ResolvedBounds { params, plan } = cfg.resolve_bounds()?;
    let delta = params.delta;
    let pick = |f: fn(&TrialRecord) -> BoundEvaluation| records.iter().map(f).collect::<Vec<_>>();
    let mut bounds = vec![
        BoundSummary::from_evaluations("cor1", plan.regular, &pick(|r| r.cor1), delta),
        BoundSummary::from_evaluations("corbal", plan.r_regular, &pick(|r| r.corbal), delta),
        BoundSummary::from_evaluations("corg", plan.r_regular, &pick(|r| r.corg), delta),
        BoundSummary::from_evaluations("corb2", plan.regular, &pick(|r| r.corb2), delta),
        BoundSummary::from_evaluations("corb4", plan.regular, &pick(|r| r.corb4), delta),
    ];
    let type_count = records.first().map_or(0, |r| r.types.len());
    for i in 0..type_count {
        let evals: Vec<BoundEvaluation> = records.iter().map(|r| r.types[i].cor_types).collect();
        bounds.push(BoundSummary::from_evaluations(
            &format!("cor_types_{}", i + 1),
            plan.types,
            &evals,
            delta,
        ));
    }

    let mut metrics = BTreeMap::new();
    let columns: [(&str, fn(&TrialRecord) -> f64); 9] = [
        ("mf", |r| r.mf),
        ("missing_mass", |r| r.missing_mass),
        ("halluc_rate", |r| r.halluc_rate),
        ("mc_exact", |r| r.mc_exact),
        ("mc_adaptive_b", |r| r.mc_adaptive_b),
        ("tv_fixed_eps", |r| r.tv_fixed_eps),
        ("mis_eps", |r| r.mis_eps),
        ("kl", |r| r.kl),
        ("observed", |r| r.observed as f64),
    ];
    for (name, f) in columns {
        let values: Vec<f64> = records.iter().map(f).collect();
        metrics.insert(name.to_string(), Moments::of(&values));
    }

    let markov = if records.len() >= MIN_MARKOV_TRIALS {
        Some(verify_markov_step(records, delta)?)
    } else {
        None
    };
    let pass = bounds.iter().all(BoundSummary::pass);
    Ok(AggregateReport {
        trials: records.len(),
        algorithm: cfg.algorithm.label(),
        params,
        plan,
        bounds,
        metrics,
        markov,
        pass,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub aggregate: AggregateReport,
}

/// Runs every trial in parallel on the current rayon pool; records come
/// back in trial order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let records = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            run_trial(cfg, t).map_err(|e| Error::Trial {
                trial: t,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(cfg, &records)?;
    Ok(ExperimentOutput { records, aggregate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquashCheck {
    pub mean_good_turing: f64,
    pub mean_missing_mass: f64,
    pub mean_difference: f64,
    pub std_err: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtReport {
    pub n: usize,
    pub delta: f64,
    pub two_sided_radius: f64,
    pub one_sided_radius: f64,
    /// |MF̂ − p(U)| > 3·sqrt(ln(4/δ)/n); must be ≤ δ.
    pub two_sided: EventFrequency,
    /// p(U) < MF̂ − sqrt(6 ln(6/δ)/n); must be ≤ δ/3.
    pub one_sided: EventFrequency,
    /// Generic Good-Turing against generic missing mass.
    pub squash: SquashCheck,
    /// Largest |MF̂ − GT| seen; at most 1/n.
    pub max_bottom_discrepancy: f64,
    pub pass: bool,
}

pub const MIN_GT_TRIALS: usize = 100;

/// Monte Carlo validation of the Good-Turing concentration radii.
pub fn run_gt_concentration(p: &FactoidDist, n: usize, delta: f64, trials: usize, seed: u64) -> Result<GtReport> {
    if trials < MIN_GT_TRIALS {
        return Err(Error::param(
            "trials",
            format!("need at least {MIN_GT_TRIALS} trials, got {trials}"),
        ));
    }
    let two_sided_radius = good_turing_radius(delta, n)?;
    let one_sided_radius = missing_mass_lower_radius(delta / 3.0, n)?;
    let sampler = p.sampler();
    let rows = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = SeededRng::child(seed, t);
            let draws = (0..n).map(|_| sampler.sample(&mut rng)).collect();
            let s = TrainingSample::new(p.universe(), draws)?;
            Ok((
                monofact_estimate(&s)?,
                missing_mass(p, &s)?,
                good_turing_estimate(&s)?,
                generic_missing_mass(p, &s)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let two_sided = EventFrequency::from_flags(
        rows.iter().map(|&(mf, mm, _, _)| (mf - mm).abs() > two_sided_radius),
        delta,
        Direction::AtMost,
    );
    let one_sided = EventFrequency::from_flags(
        rows.iter().map(|&(mf, mm, _, _)| mm < mf - one_sided_radius),
        delta / 3.0,
        Direction::AtMost,
    );
    let diffs: Vec<f64> = rows.iter().map(|&(_, _, gt, gm)| gt - gm).collect();
    let d = Moments::of(&diffs);
    let gt_mean = Moments::of(&rows.iter().map(|r| r.2).collect::<Vec<_>>()).mean;
    let mm_mean = Moments::of(&rows.iter().map(|r| r.3).collect::<Vec<_>>()).mean;
    let se = d.std_err();
    let (lower, upper) = (-3.0 * se, 1.0 / n as f64 + 3.0 * se);
    let squash = SquashCheck {
        mean_good_turing: gt_mean,
        mean_missing_mass: mm_mean,
        mean_difference: d.mean,
        std_err: se,
        lower,
        upper,
        pass: d.mean >= lower && d.mean <= upper,
    };
    let max_bottom_discrepancy = rows
        .iter()
        .map(|&(mf, _, gt, _)| (mf - gt).abs())
        .fold(0.0, f64::max);
    let pass = two_sided.pass
        && one_sided.pass
        && squash.pass
        && max_bottom_discrepancy <= 1.0 / n as f64 + 1e-15;
    Ok(GtReport {
        n,
        delta,
        two_sided_radius,
        one_sided_radius,
        two_sided,
        one_sided,
        squash,
        max_bottom_discrepancy,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundReport {
    pub radius: f64,
    /// g(H) ≤ MF̂; must hold in every trial.
    pub certainty: EventFrequency,
    /// Mc_∞ ≤ 3·sqrt(ln(4/δ)/n); must hold in ≥ 1 − δ of trials.
    pub calibration: EventFrequency,
    pub pass: bool,
}

/// The memorizer's hallucination / calibration guarantee, by Monte Carlo.
pub fn run_upper_bound_check(world: &WorldModel, n: usize, delta: f64, trials: usize, seed: u64) -> Result<UpperBoundReport> {
    world.validate()?;
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    let radius = good_turing_radius(delta, n)?;
    let rows = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = SeededRng::child(seed, t);
            let w = world.sample_world(&mut rng)?;
            if w.p().prob(BOTTOM) != 0.0 {
                return Err(Error::Unsupported("the check needs p(⊥) = 0".into()));
            }
            let s = TrainingSample::new(w.universe(), w.p().sample_iid(n, &mut rng)?)?;
            let g = LmAlgorithm::MonofactMemorizer.train(&s, None)?;
            let mf = monofact_estimate(&s)?;
            let gh = hallucination_rate(&g, &w)?;
            let mc = miscalibration(w.p(), &g, BinningSpec::ExactValue)?;
            Ok((gh <= mf + SATISFACTION_SLACK, mc <= radius))
        })
        .collect::<Result<Vec<_>>>()?;
    let certainty = EventFrequency::from_flags(rows.iter().map(|r| r.0), 1.0, Direction::AtLeast);
    let calibration =
        EventFrequency::from_flags(rows.iter().map(|r| r.1), 1.0 - delta, Direction::AtLeast);
    let pass = certainty.pass && calibration.pass;
    Ok(UpperBoundReport {
        radius,
        certainty,
        calibration,
        pass,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremReport {
    pub observed: usize,
    pub unobserved: usize,
    pub marginals: MarginalCheck,
    pub probes: Vec<TheoremCheck>,
    pub pass: bool,
}

/// Draws one world and training sample, then checks the main theorem for
/// the standard probe set using `posterior_samples` exact posterior draws
/// per probe.
pub fn run_theorem_main(
    world: &WorldModel,
    n: usize,
    b: u32,
    epsilon: f64,
    posterior_samples: usize,
    seed: u64,
) -> Result<TheoremReport> {
    let mut rng = SeededRng::child(seed, 0);
    let w = world.sample_world(&mut rng)?;
    let sample = TrainingSample::new(w.universe(), w.p().sample_iid(n, &mut rng)?)?;
    let observed = sample.observed().clone();
    let marginals = validate_posterior_marginals(
        world,
        &observed,
        posterior_samples,
        &mut SeededRng::child(seed, 1),
    )?;
    let probes = theorem_main_probes(&sample, b, epsilon, &mut SeededRng::child(seed, 2))?;
    let checks = probes
        .par_iter()
        .enumerate()
        .map(|(i, probe)| {
            let mut rng = SeededRng::child(seed, 3 + i as u64);
            verify_theorem_main_mc(world, &observed, probe, posterior_samples, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = marginals.pass && checks.iter().all(|c| c.pass);
    Ok(TheoremReport {
        observed: observed.len(),
        unobserved: sample.unobserved_len(),
        marginals,
        probes: checks,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(algorithm: LmAlgorithm) -> ExperimentConfig {
        ExperimentConfig {
            world: WorldModel::permuted_power_law(20_000, 100, 0.0).unwrap(),
            n: 200,
            algorithm,
            bound: BoundSettings::default(),
            trials: 8,
            seed: 42,
        }
    }

    #[test]
    fn oracle_record() {
        let r = run_trial(&small_cfg(LmAlgorithm::Oracle), 0).unwrap();
        assert_eq!(r.halluc_rate, 0.0);
        assert!(r.mc_exact < 1e-12);
        assert!(r.cor1.satisfied);
    }

    #[test]
    fn memorizer_record() {
        let cfg = small_cfg(LmAlgorithm::MonofactMemorizer);
        for t in 0..4 {
            let r = run_trial(&cfg, t).unwrap();
            assert!(r.halluc_rate <= r.mf + 1e-12);
        }
    }

    #[test]
    fn trials_are_deterministic_and_order_free() {
        let cfg = small_cfg(LmAlgorithm::Laplace { alpha: 0.5 });
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        let mut reversed: Vec<TrialRecord> = (0..cfg.trials as u64)
            .rev()
            .map(|t| run_trial(&cfg, t).unwrap())
            .collect();
        reversed.sort_by_key(|r| r.trial);
        assert_eq!(reversed, a.records);
    }

    #[test]
    fn single_trial_aggregate() {
        let cfg = ExperimentConfig {
            trials: 1,
            ..small_cfg(LmAlgorithm::Empirical)
        };
        let out = run_experiment(&cfg).unwrap();
        let r = &out.records[0];
        assert_eq!(out.aggregate.metrics["mf"].mean, r.mf);
        assert_eq!(out.aggregate.metrics["mf"].std_dev, 0.0);
        assert_eq!(
            out.aggregate.bounds[0].satisfaction.frequency,
            if r.cor1.satisfied { 1.0 } else { 0.0 }
        );
        assert!(out.aggregate.markov.is_none());
    }

    #[test]
    fn zero_sparsity_is_always_vacuous() {
        let cfg = ExperimentConfig {
            bound: BoundSettings {
                s: Some(0.0),
                ..BoundSettings::default()
            },
            ..small_cfg(LmAlgorithm::Uniform)
        };
        let out = run_experiment(&cfg).unwrap();
        for b in &out.aggregate.bounds {
            assert_eq!(b.vacuous_fraction, 1.0, "{}", b.name);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_cfg(LmAlgorithm::Empirical);
        cfg.n = 19_999;
        assert!(cfg.validate().unwrap_err().to_string().contains("U would be empty"));
        let mut cfg = small_cfg(LmAlgorithm::Empirical);
        cfg.bound.s = Some(100.0);
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg(LmAlgorithm::Empirical);
        cfg.bound.k_types = Some(2);
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg(LmAlgorithm::Empirical);
        cfg.world = WorldModel::w5(3, 3, 3, 3).unwrap();
        cfg.n = 10;
        cfg.bound.r = Some(2.0);
        assert!(cfg.validate().is_err());
        cfg.bound.r = None;
        let plan = cfg.resolve_bounds().unwrap().plan;
        assert!(!plan.regular && plan.r_regular);
    }

    #[test]
    fn w5_trials_have_exact_posterior_terms() {
        let cfg = ExperimentConfig {
            world: WorldModel::w5(3, 3, 4, 4).unwrap(),
            n: 5,
            trials: 4,
            ..small_cfg(LmAlgorithm::MonofactMemorizer)
        };
        for t in 0..4 {
            let r = run_trial(&cfg, t).unwrap();
            assert!(r.posterior_term.is_some());
            assert!(r.eq9_holds.is_some());
        }
    }

    #[test]
    fn gt_point_mass_never_violates() {
        let p = FactoidDist::point_mass(crate::prob::FactoidUniverse::new(5).unwrap(), 2).unwrap();
        let r = run_gt_concentration(&p, 50, 0.2, 100, 1).unwrap();
        assert_eq!(r.two_sided.successes, 0);
        assert_eq!(r.one_sided.successes, 0);
        assert!(r.pass);
        assert!(run_gt_concentration(&p, 50, 0.2, 99, 1).is_err());
    }

    #[test]
    fn upper_bound_certainty_on_w5() {
        let w = WorldModel::w5(3, 3, 3, 3).unwrap();
        let r = run_upper_bound_check(&w, 20, 0.1, 50, 3).unwrap();
        assert_eq!(r.certainty.frequency, 1.0);
    }
}
