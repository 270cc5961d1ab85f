//! World distributions: parametric and explicit priors over fact
//! distributions p, exact posterior samplers, and sparsity / regularity
//! analysis.

use std::ops::Range;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::TrainingSample;
use crate::prob::{FactoidDist, FactoidSet, FactoidUniverse, BOTTOM};
use crate::stats::NeumaierSum;

/// One draw p ~ D_world together with its fact set F = supp(p) ∪ {⊥}.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldInstance {
    p: FactoidDist,
    facts: FactoidSet,
}

impl WorldInstance {
    /// `p` must have explicit support (no background mass).
    pub fn new(p: FactoidDist) -> Result<Self> {
        let mut facts = p.support().ok_or_else(|| {
            Error::Unsupported("world distributions need an explicit support".into())
        })?;
        facts.insert(BOTTOM);
        Ok(Self { p, facts })
    }

    pub fn p(&self) -> &FactoidDist {
        &self.p
    }

    pub fn universe(&self) -> FactoidUniverse {
        self.p.universe()
    }

    /// F, always containing ⊥.
    pub fn facts(&self) -> &FactoidSet {
        &self.facts
    }

    pub fn is_fact(&self, y: usize) -> bool {
        self.facts.contains(y)
    }

    pub fn fact_count(&self) -> usize {
        self.facts.len()
    }

    /// |H| = |Y ∖ F|.
    pub fn hallucination_count(&self) -> usize {
        self.facts.complement_len(&self.universe())
    }

    /// ln(|H| / |F|).
    pub fn sparsity(&self) -> f64 {
        (self.hallucination_count() as f64 / self.fact_count() as f64).ln()
    }
}

/// A component of a multi-type world and its share of the total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeComponent {
    pub world: WorldModel,
    pub weight: f64,
}

/// A prior D_world over fact distributions.
#[derive(Debug, Clone, PartialEq)]
pub enum WorldModel {
    /// Uniformly random N-subset F of Y ∖ {⊥} in random order σ, with
    /// p(σ(i)) ∝ i^(-k).
    PermutedPowerLaw {
        universe_size: usize,
        fact_count: usize,
        exponent: f64,
    },
    /// Every (person, date) eats one uniformly random (food, location);
    /// p is uniform over those facts.
    W5 {
        people: usize,
        dates: usize,
        foods: usize,
        locations: usize,
    },
    /// Disjoint contiguous index ranges, one per component, after ⊥.
    MultiType(Vec<TypeComponent>),
    /// Finite prior: (weight, instance) pairs.
    Explicit(Vec<(f64, WorldInstance)>),
}

impl WorldModel {
    pub fn permuted_power_law(universe_size: usize, fact_count: usize, exponent: f64) -> Result<Self> {
        let m = WorldModel::PermutedPowerLaw {
            universe_size,
            fact_count,
            exponent,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn w5(people: usize, dates: usize, foods: usize, locations: usize) -> Result<Self> {
        let m = WorldModel::W5 {
            people,
            dates,
            foods,
            locations,
        };
        m.validate()?;
        Ok(m)
    }

    /// Weights are normalized to sum to one.
    pub fn multi_type(mut types: Vec<TypeComponent>) -> Result<Self> {
        let total: f64 = types.iter().map(|t| t.weight).sum();
        if total > 0.0 && total.is_finite() {
            for t in types.iter_mut() {
                t.weight /= total;
            }
        }
        let m = WorldModel::MultiType(types);
        m.validate()?;
        Ok(m)
    }

    /// Prior weights are normalized to sum to one.
    pub fn explicit(mut instances: Vec<(f64, WorldInstance)>) -> Result<Self> {
        let total: f64 = instances.iter().map(|(w, _)| *w).sum();
        if total > 0.0 && total.is_finite() {
            for (w, _) in instances.iter_mut() {
                *w /= total;
            }
        }
        let m = WorldModel::Explicit(instances);
        m.validate()?;
        Ok(m)
    }

    /// Every instance of a W5 world as an explicit prior. Only feasible for
    /// tiny parameters.
    pub fn w5_explicit(people: usize, dates: usize, foods: usize, locations: usize) -> Result<Self> {
        WorldModel::w5(people, dates, foods, locations)?;
        let slots = people * dates;
        let choices = foods * locations;
        let count = (choices as f64).powi(slots as i32);
        if count > 1e6 {
            return Err(Error::param(
                "world",
                format!("{count} W5 instances are too many to enumerate"),
            ));
        }
        let universe = FactoidUniverse::new(slots * choices + 1)?;
        let count = count as usize;
        let mut instances = Vec::with_capacity(count);
        for code in 0..count {
            let mut rem = code;
            let facts: FactoidSet = (0..slots)
                .map(|slot| {
                    let c = rem % choices;
                    rem /= choices;
                    1 + slot * choices + c
                })
                .collect();
            let p = FactoidDist::uniform_over(universe, &facts)?;
            instances.push((1.0 / count as f64, WorldInstance::new(p)?));
        }
        WorldModel::explicit(instances)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WorldModel::PermutedPowerLaw {
                universe_size,
                fact_count,
                exponent,
            } => {
                FactoidUniverse::new(*universe_size)?;
                if *fact_count == 0 {
                    return Err(Error::param("fact_count", "must be at least 1"));
                }
                if *fact_count > universe_size - 1 {
                    return Err(Error::param(
                        "fact_count",
                        format!(
                            "{fact_count} facts do not fit in {} non-⊥ factoids",
                            universe_size - 1
                        ),
                    ));
                }
                if !(exponent.is_finite() && *exponent >= 0.0) {
                    return Err(Error::param(
                        "exponent",
                        format!("must be finite and non-negative, got {exponent}"),
                    ));
                }
                Ok(())
            }
            WorldModel::W5 {
                people,
                dates,
                foods,
                locations,
            } => {
                for (name, v) in [
                    ("people", people),
                    ("dates", dates),
                    ("foods", foods),
                    ("locations", locations),
                ] {
                    if *v == 0 {
                        return Err(Error::param(name, "must be at least 1"));
                    }
                }
                people
                    .checked_mul(*dates)
                    .and_then(|x| x.checked_mul(*foods))
                    .and_then(|x| x.checked_mul(*locations))
                    .and_then(|x| x.checked_add(1))
                    .ok_or_else(|| Error::param("world", "W5 universe size overflows"))?;
                Ok(())
            }
            WorldModel::MultiType(types) => {
                if types.is_empty() {
                    return Err(Error::param("types", "need at least one type"));
                }
                for t in types {
                    if matches!(t.world, WorldModel::MultiType(_)) {
                        return Err(Error::param("types", "multi-type worlds cannot nest"));
                    }
                    if !(t.weight.is_finite() && t.weight > 0.0) {
                        return Err(Error::param(
                            "type_weights",
                            format!("must be positive, got {}", t.weight),
                        ));
                    }
                    t.world.validate()?;
                }
                let total: f64 = types.iter().map(|t| t.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::param("type_weights", format!("sum to {total}")));
                }
                Ok(())
            }
            WorldModel::Explicit(instances) => {
                let first = instances
                    .first()
                    .ok_or_else(|| Error::param("instances", "need at least one instance"))?;
                for (w, inst) in instances {
                    if !(w.is_finite() && *w > 0.0) {
                        return Err(Error::param(
                            "prior",
                            format!("weights must be positive, got {w}"),
                        ));
                    }
                    first.1.universe().check_same(&inst.universe())?;
                }
                let total: f64 = instances.iter().map(|(w, _)| *w).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::param("prior", format!("weights sum to {total}")));
                }
                Ok(())
            }
        }
    }

    pub fn universe_size(&self) -> usize {
        match self {
            WorldModel::PermutedPowerLaw { universe_size, .. } => *universe_size,
            WorldModel::W5 {
                people,
                dates,
                foods,
                locations,
            } => people * dates * foods * locations + 1,
            WorldModel::MultiType(types) => {
                1 + types.iter().map(|t| t.world.universe_size() - 1).sum::<usize>()
            }
            WorldModel::Explicit(instances) => instances[0].1.universe().size(),
        }
    }

    pub fn universe(&self) -> FactoidUniverse {
        FactoidUniverse::new(self.universe_size()).expect("validated model")
    }

    /// Global index ranges of the components of a multi-type world.
    pub fn type_ranges(&self) -> Option<Vec<Range<usize>>> {
        let WorldModel::MultiType(types) = self else {
            return None;
        };
        let mut start = 1;
        Some(
            types
                .iter()
                .map(|t| {
                    let end = start + t.world.universe_size() - 1;
                    let r = start..end;
                    start = end;
                    r
                })
                .collect(),
        )
    }

    /// The largest s with |F| ≤ e^(-s)|H| for every instance.
    pub fn sparsity(&self) -> f64 {
        let ratio = |facts: usize, universe: usize| ((universe - facts) as f64 / facts as f64).ln();
        match self {
            WorldModel::PermutedPowerLaw {
                universe_size,
                fact_count,
                ..
            } => ratio(fact_count + 1, *universe_size),
            WorldModel::W5 { people, dates, .. } => {
                ratio(people * dates + 1, self.universe_size())
            }
            WorldModel::MultiType(types) => {
                let facts: usize = types.iter().map(|t| max_fact_count(&t.world) - 1).sum();
                ratio(facts + 1, self.universe_size())
            }
            WorldModel::Explicit(instances) => instances
                .iter()
                .map(|(_, inst)| inst.sparsity())
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Per-type sparsity of a multi-type world.
    pub fn type_sparsities(&self) -> Option<Vec<f64>> {
        let WorldModel::MultiType(types) = self else {
            return None;
        };
        Some(types.iter().map(|t| t.world.sparsity()).collect())
    }

    /// Regularity constant r known analytically: 1 for permuted power-law
    /// worlds and n_people·n_dates for W5. Types of different density make
    /// a multi-type world irregular as a whole.
    pub fn known_regularity(&self) -> Option<f64> {
        match self {
            WorldModel::PermutedPowerLaw { .. } => Some(1.0),
            WorldModel::W5 { people, dates, .. } => Some((people * dates) as f64),
            WorldModel::MultiType(_) | WorldModel::Explicit(_) => None,
        }
    }

    /// Per-type regularity constants of a multi-type world.
    pub fn type_regularities(&self) -> Option<Vec<Option<f64>>> {
        let WorldModel::MultiType(types) = self else {
            return None;
        };
        Some(types.iter().map(|t| t.world.known_regularity()).collect())
    }

    /// Whether the world is known to be regular (r = 1).
    pub fn is_regular(&self) -> bool {
        self.known_regularity() == Some(1.0)
    }

    pub fn sample_world<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WorldInstance> {
        match self {
            WorldModel::PermutedPowerLaw {
                universe_size,
                fact_count,
                exponent,
            } => {
                let universe = FactoidUniverse::new(*universe_size)?;
                let mut facts: Vec<usize> = index::sample(rng, universe_size - 1, *fact_count)
                    .into_iter()
                    .map(|i| i + 1)
                    .collect();
                facts.shuffle(rng);
                let weights = power_law_weights(*fact_count, *exponent);
                let atoms = facts.into_iter().zip(weights).collect();
                WorldInstance::new(FactoidDist::from_parts(universe, atoms, 0.0)?)
            }
            WorldModel::W5 {
                people,
                dates,
                foods,
                locations,
            } => {
                let universe = self.universe();
                let choices = foods * locations;
                let facts: FactoidSet = (0..people * dates)
                    .map(|slot| 1 + slot * choices + rng.random_range(0..choices))
                    .collect();
                WorldInstance::new(FactoidDist::uniform_over(universe, &facts)?)
            }
            WorldModel::MultiType(types) => {
                let universe = self.universe();
                let ranges = self.type_ranges().expect("multi-type");
                let mut atoms = Vec::new();
                for (t, range) in types.iter().zip(ranges) {
                    let local = t.world.sample_world(rng)?;
                    for &(y, w) in local.p().atoms() {
                        if y != BOTTOM {
                            atoms.push((range.start + y - 1, t.weight * w));
                        }
                    }
                }
                WorldInstance::new(FactoidDist::from_parts(universe, atoms, 0.0)?)
            }
            WorldModel::Explicit(instances) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (w, inst) in instances {
                    acc += w;
                    if u < acc {
                        return Ok(inst.clone());
                    }
                }
                Ok(instances.last().expect("validated").1.clone())
            }
        }
    }
}

/// Largest |F| (⊥ included) any instance can have.
fn max_fact_count(model: &WorldModel) -> usize {
    match model {
        WorldModel::PermutedPowerLaw { fact_count, .. } => fact_count + 1,
        WorldModel::W5 { people, dates, .. } => people * dates + 1,
        WorldModel::MultiType(types) => {
            1 + types.iter().map(|t| max_fact_count(&t.world) - 1).sum::<usize>()
        }
        WorldModel::Explicit(instances) => instances
            .iter()
            .map(|(_, i)| i.fact_count())
            .max()
            .unwrap_or(1),
    }
}

/// Normalized i^(-k) for i = 1..=n.
pub fn power_law_weights(n: usize, exponent: f64) -> Vec<f64> {
    if exponent == 0.0 {
        return vec![1.0 / n as f64; n];
    }
    let raw: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-exponent)).collect();
    let total: NeumaierSum = raw.iter().copied().collect();
    let total = total.total();
    raw.into_iter().map(|w| w / total).collect()
}

/// Exact posterior draw for a uniform (k = 0) permuted power-law world:
/// F = (O ∖ ⊥) plus a uniform (N − |O ∖ ⊥|)-subset of U, p uniform on F.
pub fn posterior_sampler_uniform_world<R: Rng + ?Sized>(
    model: &WorldModel,
    observed: &FactoidSet,
    rng: &mut R,
) -> Result<WorldInstance> {
    let (universe_size, fact_count) = match model {
        WorldModel::PermutedPowerLaw {
            universe_size,
            fact_count,
            exponent,
        } if *exponent == 0.0 => (*universe_size, *fact_count),
        _ => {
            return Err(Error::Unsupported(
                "exact posterior sampling needs a permuted power-law world with k = 0".into(),
            ))
        }
    };
    let universe = FactoidUniverse::new(universe_size)?;
    observed.check_in(&universe)?;
    let mut observed = observed.clone();
    observed.insert(BOTTOM);
    let seen = observed.len() - 1;
    if seen > fact_count {
        return Err(Error::InconsistentSample);
    }
    let unobserved = observed.complement_len(&universe);
    let mut facts: Vec<usize> = observed.iter().filter(|&y| y != BOTTOM).collect();
    facts.extend(
        index::sample(rng, unobserved, fact_count - seen)
            .into_iter()
            .map(|r| observed.nth_absent(r)),
    );
    let facts: FactoidSet = facts.into_iter().collect();
    WorldInstance::new(FactoidDist::uniform_over(universe, &facts)?)
}

/// Per-sample sparsity and regularity of a world.
#[derive(Debug, Clone)]
pub struct RegularityReport {
    /// min over instances of ln(|H|/|F|).
    pub s: f64,
    pub r_facts: f64,
    pub r_probs: f64,
    /// max_{y∈U} Pr[y∈F | sample].
    pub max_fact_prob: f64,
    /// max_{y∈U} E[p(y) | sample].
    pub max_expected_prob: f64,
    pub conditioning_sample: TrainingSample,
}

impl RegularityReport {
    /// max_{y∈U} Pr[y∈F] + |O|·max_{y∈U} E[p(y)].
    pub fn posterior_term(&self) -> f64 {
        self.max_fact_prob
            + self.conditioning_sample.observed().len() as f64 * self.max_expected_prob
    }
}

/// Ratio max·|U| / total, taken as 1 when nothing is left to spread.
fn regularity_ratio(max: f64, unobserved: usize, total: f64) -> f64 {
    if total <= 0.0 {
        1.0
    } else {
        (max * unobserved as f64 / total).max(1.0)
    }
}

/// Exact posterior enumeration over an explicit world:
/// weight ∝ prior × Π_i p(draw_i).
pub fn analyze_regularity(model: &WorldModel, sample: &TrainingSample) -> Result<RegularityReport> {
    let WorldModel::Explicit(instances) = model else {
        return Err(Error::Unsupported(
            "regularity enumeration needs an explicit world".into(),
        ));
    };
    let universe = model.universe();
    universe.check_same(&sample.universe())?;

    let log_weights: Vec<f64> = instances
        .iter()
        .map(|(prior, inst)| {
            sample.counts().iter().fold(prior.ln(), |acc, &(y, c)| {
                acc + c as f64 * inst.p().prob(y).ln()
            })
        })
        .collect();
    let max_log = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max_log == f64::NEG_INFINITY {
        return Err(Error::InconsistentSample);
    }
    let raw: Vec<f64> = log_weights.iter().map(|l| (l - max_log).exp()).collect();
    let z: f64 = raw.iter().sum();
    let posterior: Vec<f64> = raw.into_iter().map(|w| w / z).collect();

    let size = universe.size();
    let mut fact_prob = vec![NeumaierSum::new(); size];
    let mut expected_p = vec![NeumaierSum::new(); size];
    for (w, (_, inst)) in posterior.iter().zip(instances) {
        if *w == 0.0 {
            continue;
        }
        for y in inst.facts().iter() {
            fact_prob[y].add(*w);
        }
        for &(y, py) in inst.p().atoms() {
            expected_p[y].add(w * py);
        }
    }

    let unobserved: Vec<usize> = (0..size).filter(|&y| !sample.is_observed(y)).collect();
    let mut max_fact_prob = 0.0f64;
    let mut max_expected_prob = 0.0f64;
    let mut facts_in_u = NeumaierSum::new();
    let mut mass_in_u = NeumaierSum::new();
    for &y in &unobserved {
        let pf = fact_prob[y].total();
        let ep = expected_p[y].total();
        max_fact_prob = max_fact_prob.max(pf);
        max_expected_prob = max_expected_prob.max(ep);
        facts_in_u.add(pf);
        mass_in_u.add(ep);
    }
    Ok(RegularityReport {
        s: model.sparsity(),
        r_facts: regularity_ratio(max_fact_prob, unobserved.len(), facts_in_u.total()),
        r_probs: regularity_ratio(max_expected_prob, unobserved.len(), mass_in_u.total()),
        max_fact_prob,
        max_expected_prob,
        conditioning_sample: sample.clone(),
    })
}

/// Exact W5 posterior analysis. The posterior factorizes over (person, date)
/// slots, so each slot's food×location choices are enumerated on their own
/// instead of enumerating the (foods·locations)^(people·dates) instances.
pub fn analyze_w5_regularity(model: &WorldModel, sample: &TrainingSample) -> Result<RegularityReport> {
    let WorldModel::W5 {
        people,
        dates,
        foods,
        locations,
    } = model
    else {
        return Err(Error::Unsupported("expected a W5 world".into()));
    };
    let universe = model.universe();
    universe.check_same(&sample.universe())?;
    let slots = people * dates;
    let choices = foods * locations;

    // The observed choice per slot, if any; ⊥ has zero mass in every instance.
    let mut pinned: Vec<Option<usize>> = vec![None; slots];
    for &(y, _) in sample.counts() {
        if y == BOTTOM {
            return Err(Error::InconsistentSample);
        }
        let slot = (y - 1) / choices;
        let choice = (y - 1) % choices;
        match pinned[slot] {
            Some(c) if c != choice => return Err(Error::InconsistentSample),
            _ => pinned[slot] = Some(choice),
        }
    }

    let slot_mass = 1.0 / slots as f64;
    let mut max_fact_prob = 0.0f64;
    let mut max_expected_prob = 0.0f64;
    let mut facts_in_u = NeumaierSum::new();
    let mut mass_in_u = NeumaierSum::new();
    let mut unobserved = 0usize;
    for (slot, pin) in pinned.iter().enumerate() {
        // Posterior over this slot's choice: uniform over consistent ones.
        let consistent: Vec<usize> = match pin {
            Some(c) => vec![*c],
            None => (0..choices).collect(),
        };
        let w = 1.0 / consistent.len() as f64;
        for c in 0..choices {
            let y = 1 + slot * choices + c;
            if sample.is_observed(y) {
                continue;
            }
            unobserved += 1;
            let pf = if consistent.contains(&c) { w } else { 0.0 };
            let ep = pf * slot_mass;
            max_fact_prob = max_fact_prob.max(pf);
            max_expected_prob = max_expected_prob.max(ep);
            facts_in_u.add(pf);
            mass_in_u.add(ep);
        }
    }
    debug_assert_eq!(unobserved, sample.unobserved_len());
    Ok(RegularityReport {
        s: model.sparsity(),
        r_facts: regularity_ratio(max_fact_prob, unobserved, facts_in_u.total()),
        r_probs: regularity_ratio(max_expected_prob, unobserved, mass_in_u.total()),
        max_fact_prob,
        max_expected_prob,
        conditioning_sample: sample.clone(),
    })
}

/// Worst-case W5 regularity over training samples. By symmetry the
/// posterior depends only on how many slots the sample pins down, so one
/// sample per count covers every case.
pub fn w5_worst_case_regularity(model: &WorldModel) -> Result<(f64, f64)> {
    let WorldModel::W5 {
        people,
        dates,
        foods,
        locations,
    } = model
    else {
        return Err(Error::Unsupported("expected a W5 world".into()));
    };
    let slots = people * dates;
    let choices = foods * locations;
    let mut worst = (1.0f64, 1.0f64);
    for pinned in 0..=slots {
        let draws: Vec<usize> = (0..pinned).map(|slot| 1 + slot * choices).collect();
        let sample = TrainingSample::new(model.universe(), draws)?;
        let report = analyze_w5_regularity(model, &sample)?;
        worst.0 = worst.0.max(report.r_facts);
        worst.1 = worst.1.max(report.r_probs);
    }
    Ok(worst)
}

/// max_{y∈U} Pr[y∈F] + |O|·max_{y∈U} E[p(y)] under the posterior given the
/// sample; an upper bound for power-law worlds with k > 0, None where no
/// closed form or enumeration is available.
pub fn posterior_term(model: &WorldModel, sample: &TrainingSample) -> Result<Option<f64>> {
    let observed = sample.observed().len();
    let unobserved = sample.unobserved_len();
    match model {
        WorldModel::PermutedPowerLaw {
            fact_count,
            exponent,
            ..
        } => {
            let seen = observed - 1;
            if seen > *fact_count {
                return Err(Error::InconsistentSample);
            }
            if unobserved == 0 {
                return Ok(Some(0.0));
            }
            let free = (fact_count - seen) as f64;
            let fact_prob = free / unobserved as f64;
            if *exponent == 0.0 {
                Ok(Some(fact_prob + observed as f64 * fact_prob / *fact_count as f64))
            } else {
                // E[p(y)] = E[p(U)]/|U| ≤ 1/|U| by symmetry.
                Ok(Some(fact_prob + observed as f64 / unobserved as f64))
            }
        }
        WorldModel::W5 { .. } => Ok(Some(analyze_w5_regularity(model, sample)?.posterior_term())),
        WorldModel::Explicit(_) => Ok(Some(analyze_regularity(model, sample)?.posterior_term())),
        WorldModel::MultiType(_) => Ok(None),
    }
}
