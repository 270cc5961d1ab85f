//! Partitions of the factoid universe, coarsening, the three binning
//! schemes (exact value, adaptive equal-mass, fixed log-width) and the
//! miscalibration metrics built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{FactoidDist, FactoidUniverse};
use crate::stats::NeumaierSum;

/// Relative tolerance for treating two probabilities as the same value.
pub const VALUE_TOLERANCE: f64 = 1e-12;

/// Slack used when comparing cumulative masses against bin quantiles.
const CUMULATIVE_SLACK: f64 = 1e-12;

/// A partition of the universe into non-empty disjoint blocks.
///
/// Blocks list their members explicitly, except that one block may also own
/// every index that no block lists (the "rest"). This keeps partitions of
/// very large universes small when most factoids share a block.
#[derive(Debug, Clone)]
pub struct Partition {
    universe: FactoidUniverse,
    blocks: Vec<Vec<usize>>,
    rest: Option<usize>,
    rest_count: usize,
    lookup: Vec<(usize, u32)>,
}

impl Partition {
    /// A partition whose blocks explicitly cover the whole universe.
    pub fn from_blocks(universe: FactoidUniverse, blocks: Vec<Vec<usize>>) -> Result<Self> {
        Self::with_rest(universe, blocks, None)
    }

    /// A partition where block `rest` additionally owns every unlisted index.
    pub fn with_rest(
        universe: FactoidUniverse,
        mut blocks: Vec<Vec<usize>>,
        rest: Option<usize>,
    ) -> Result<Self> {
        let mut lookup = Vec::with_capacity(blocks.iter().map(Vec::len).sum());
        for (b, block) in blocks.iter_mut().enumerate() {
            block.sort_unstable();
            for &y in block.iter() {
                universe.check_index(y)?;
                lookup.push((y, b as u32));
            }
        }
        lookup.sort_unstable();
        if let Some(pair) = lookup.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidPartition(format!(
                "factoid {} appears in more than one block",
                pair[0].0
            )));
        }
        let rest_count = universe.size() - lookup.len();
        let rest = match rest {
            Some(r) if r >= blocks.len() => {
                return Err(Error::InvalidPartition(format!(
                    "rest block {r} does not exist"
                )))
            }
            Some(r) if rest_count > 0 => Some(r),
            _ if rest_count > 0 => {
                return Err(Error::InvalidPartition(format!(
                    "{rest_count} factoids are not covered by any block"
                )))
            }
            _ => None,
        };
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() && rest != Some(b) {
                return Err(Error::InvalidPartition(format!("block {b} is empty")));
            }
        }
        Ok(Self {
            universe,
            blocks,
            rest,
            rest_count,
            lookup,
        })
    }

    /// The single-block partition {Y}.
    pub fn whole(universe: FactoidUniverse) -> Self {
        Self::with_rest(universe, vec![Vec::new()], Some(0)).expect("valid")
    }

    /// All singletons; materializes one block per factoid.
    pub fn singletons(universe: FactoidUniverse) -> Self {
        Self::from_blocks(universe, (0..universe.size()).map(|y| vec![y]).collect())
            .expect("valid")
    }

    /// Partition from a block label per factoid (labels need not be
    /// contiguous; block order follows first appearance).
    pub fn from_labels(universe: FactoidUniverse, labels: &[usize]) -> Result<Self> {
        if labels.len() != universe.size() {
            return Err(Error::UniverseMismatch {
                left: universe.size(),
                right: labels.len(),
            });
        }
        let mut order: Vec<usize> = Vec::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (y, &label) in labels.iter().enumerate() {
            let b = match order.iter().position(|&l| l == label) {
                Some(b) => b,
                None => {
                    order.push(label);
                    blocks.push(Vec::new());
                    order.len() - 1
                }
            };
            blocks[b].push(y);
        }
        Self::from_blocks(universe, blocks)
    }

    pub fn universe(&self) -> FactoidUniverse {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Explicitly listed members of block `b`.
    pub fn members(&self, b: usize) -> &[usize] {
        &self.blocks[b]
    }

    pub fn owns_rest(&self, b: usize) -> bool {
        self.rest == Some(b)
    }

    pub fn block_size(&self, b: usize) -> usize {
        self.blocks[b].len() + if self.owns_rest(b) { self.rest_count } else { 0 }
    }

    pub fn block_of(&self, y: usize) -> usize {
        match self.lookup.binary_search_by_key(&y, |&(i, _)| i) {
            Ok(pos) => self.lookup[pos].1 as usize,
            Err(_) => self.rest.expect("every index is covered"),
        }
    }

    /// Blocks with every member enumerated; intended for small universes.
    pub fn to_dense_blocks(&self) -> Vec<Vec<usize>> {
        let mut out = self.blocks.clone();
        if let Some(r) = self.rest {
            let listed: Vec<usize> = self.lookup.iter().map(|&(y, _)| y).collect();
            let mut j = 0;
            for y in 0..self.universe.size() {
                if j < listed.len() && listed[j] == y {
                    j += 1;
                } else {
                    out[r].push(y);
                }
            }
            out[r].sort_unstable();
        }
        out
    }

    /// D(B) for every block B.
    pub fn block_masses(&self, dist: &FactoidDist) -> Result<Vec<f64>> {
        self.universe.check_same(&dist.universe())?;
        let mut sums = vec![NeumaierSum::new(); self.blocks.len()];
        let mut listed_in_block = vec![0usize; self.blocks.len()];
        for &(y, w) in dist.atoms() {
            let b = self.block_of(y);
            sums[b].add(w);
            listed_in_block[b] += 1;
        }
        let background = dist.background();
        Ok(sums
            .into_iter()
            .enumerate()
            .map(|(b, mut s)| {
                let unlisted = self.block_size(b) - listed_in_block[b];
                s.add(background * unlisted as f64);
                s.total()
            })
            .collect())
    }
}

/// The Π-coarsening of `p`: each factoid gets its block's average mass.
pub fn coarsen(p: &FactoidDist, partition: &Partition) -> Result<FactoidDist> {
    let masses = partition.block_masses(p)?;
    let values: Vec<f64> = masses
        .iter()
        .enumerate()
        .map(|(b, m)| m / partition.block_size(b) as f64)
        .collect();
    let mut atoms = Vec::new();
    for (b, value) in values.iter().enumerate() {
        atoms.extend(partition.members(b).iter().map(|&y| (y, *value)));
    }
    let background = partition.rest.map_or(0.0, |r| values[r]);
    FactoidDist::from_parts(p.universe(), atoms, background)
}

/// How to bin a generator's probabilities before coarsening.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BinningSpec {
    /// One block per distinct probability value.
    ExactValue,
    /// `bins` blocks of roughly equal generation mass.
    Adaptive { bins: u32 },
    /// Bins of multiplicative width (1 - epsilon) in probability.
    FixedWidth { epsilon: f64 },
}

impl BinningSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BinningSpec::ExactValue => Ok(()),
            BinningSpec::Adaptive { bins } if bins >= 1 => Ok(()),
            BinningSpec::Adaptive { bins } => {
                Err(Error::param("b", format!("must be at least 1, got {bins}")))
            }
            BinningSpec::FixedWidth { epsilon } if (0.0..=1.0).contains(&epsilon) => Ok(()),
            BinningSpec::FixedWidth { epsilon } => Err(Error::param(
                "epsilon",
                format!("must lie in [0, 1], got {epsilon}"),
            )),
        }
    }

    pub fn partition(&self, g: &FactoidDist) -> Result<Partition> {
        self.validate()?;
        match *self {
            BinningSpec::ExactValue => Ok(exact_value_partition(g)),
            BinningSpec::Adaptive { bins } => adaptive_partition(g, bins),
            BinningSpec::FixedWidth { epsilon } => fixed_width_partition(g, epsilon),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            BinningSpec::ExactValue => "exact".to_string(),
            BinningSpec::Adaptive { bins } => format!("adaptive_b{bins}"),
            BinningSpec::FixedWidth { epsilon } => format!("fixed_width_eps{epsilon}"),
        }
    }
}

/// Factoids sharing (up to [`VALUE_TOLERANCE`]) one probability under g.
#[derive(Debug)]
struct Level {
    value: f64,
    members: Vec<usize>,
    has_background: bool,
    mass: f64,
}

fn same_value(representative: f64, v: f64) -> bool {
    v - representative <= VALUE_TOLERANCE * representative.abs().max(v.abs())
}

fn value_levels(g: &FactoidDist) -> Vec<Level> {
    // None stands for the background pseudo-atom.
    let mut items: Vec<(f64, Option<usize>)> =
        g.atoms().iter().map(|&(y, w)| (w, Some(y))).collect();
    if g.background_count() > 0 {
        items.push((g.background(), None));
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut levels: Vec<Level> = Vec::new();
    let mut masses: Vec<NeumaierSum> = Vec::new();
    for (v, item) in items {
        let start_new = match levels.last() {
            Some(level) => !same_value(level.value, v),
            None => true,
        };
        if start_new {
            levels.push(Level {
                value: v,
                members: Vec::new(),
                has_background: false,
                mass: 0.0,
            });
            masses.push(NeumaierSum::new());
        }
        let level = levels.last_mut().unwrap();
        let mass = masses.last_mut().unwrap();
        match item {
            Some(y) => {
                level.members.push(y);
                mass.add(v);
            }
            None => {
                level.has_background = true;
                mass.add(v * g.background_count() as f64);
            }
        }
    }
    for (level, mass) in levels.iter_mut().zip(masses) {
        level.members.sort_unstable();
        level.mass = mass.total();
    }
    levels
}

/// Merges runs of consecutive levels with equal keys into blocks.
fn partition_from_levels<K: PartialEq>(
    universe: FactoidUniverse,
    levels: Vec<Level>,
    keys: &[K],
) -> Partition {
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut rest = None;
    let mut last_key: Option<&K> = None;
    for (level, key) in levels.into_iter().zip(keys) {
        if last_key != Some(key) {
            blocks.push(Vec::new());
            last_key = Some(key);
        }
        let b = blocks.len() - 1;
        blocks[b].extend(level.members);
        if level.has_background {
            rest = Some(b);
        }
    }
    Partition::with_rest(universe, blocks, rest).expect("levels form a partition")
}

/// B(g): one block per distinct value of g, sorted by value.
pub fn exact_value_partition(g: &FactoidDist) -> Partition {
    let levels = value_levels(g);
    let keys: Vec<usize> = (0..levels.len()).collect();
    partition_from_levels(g.universe(), levels, &keys)
}

/// Thresholds t_1..t_b of the adaptive partition V_b(g), where
/// t_i = sup{ z : Σ_{y: g(y) ≤ z} g(y) ≤ i/b }.
pub fn adaptive_thresholds(g: &FactoidDist, bins: u32) -> Result<Vec<f64>> {
    BinningSpec::Adaptive { bins }.validate()?;
    let levels = value_levels(g);
    let mut cumulative = Vec::with_capacity(levels.len());
    let mut acc = NeumaierSum::new();
    for level in &levels {
        acc.add(level.mass);
        cumulative.push(acc.total());
    }
    let b = bins as f64;
    let mut thresholds = Vec::with_capacity(bins as usize);
    let mut j = 0;
    for i in 1..bins {
        let quantile = i as f64 / b;
        // The step function first exceeds i/b at level j; the sup of the
        // sub-level set is that level's value (not attained).
        while j < levels.len() && cumulative[j] <= quantile + CUMULATIVE_SLACK {
            j += 1;
        }
        thresholds.push(if j < levels.len() { levels[j].value } else { 1.0 });
    }
    thresholds.push(1.0);
    Ok(thresholds)
}

/// V_b(g): interval blocks [0,t_1], (t_1,t_2], ..., (t_{b-1},1] with empty
/// intervals dropped.
pub fn adaptive_partition(g: &FactoidDist, bins: u32) -> Result<Partition> {
    BinningSpec::Adaptive { bins }.validate()?;
    let levels = value_levels(g);
    let b = bins as f64;
    // Level j lies in the first bin i with C(level j-1) <= i/b.
    let mut keys = Vec::with_capacity(levels.len());
    let mut below = NeumaierSum::new();
    for level in &levels {
        let c = below.total();
        let bin = ((b * (c - CUMULATIVE_SLACK)).ceil().max(1.0)).min(b) as u64;
        keys.push(bin);
        below.add(level.mass);
    }
    Ok(partition_from_levels(g.universe(), levels, &keys))
}

/// Index i of the log-width interval ((1-ε)^{i+1}, (1-ε)^i] containing v > 0.
fn log_bin_index(v: f64, epsilon: f64) -> u64 {
    let q = 1.0 - epsilon;
    let guess = (v.ln() / q.ln()).floor().max(0.0);
    let mut i = guess as u64;
    while i > 0 && v > q.powf(i as f64) {
        i -= 1;
    }
    while v <= q.powf((i + 1) as f64) {
        i += 1;
    }
    i
}

/// B(g, ε): bins ((1-ε)^{i+1}, (1-ε)^i] plus a block of zero-probability
/// factoids. ε = 0 gives B(g) and ε = 1 gives {Y}.
pub fn fixed_width_partition(g: &FactoidDist, epsilon: f64) -> Result<Partition> {
    BinningSpec::FixedWidth { epsilon }.validate()?;
    if epsilon == 0.0 {
        return Ok(exact_value_partition(g));
    }
    if epsilon == 1.0 {
        return Ok(Partition::whole(g.universe()));
    }
    let levels = value_levels(g);
    // Key None is the zero block; Some(i) is interval i.
    let keys: Vec<Option<u64>> = levels
        .iter()
        .map(|l| (l.value > 0.0).then(|| log_bin_index(l.value, epsilon)))
        .collect();
    Ok(partition_from_levels(g.universe(), levels, &keys))
}

/// ‖p^Π − g‖_TV with Π built from g by `spec`.
pub fn miscalibration(p: &FactoidDist, g: &FactoidDist, spec: BinningSpec) -> Result<f64> {
    p.universe().check_same(&g.universe())?;
    let partition = spec.partition(g)?;
    coarsen(p, &partition)?.tv_distance(g)
}

/// Mis_ε(p, g) = ½ Σ_{B ∈ B(g,ε)} |p(B) − g(B)|.
pub fn generative_calibration_error(p: &FactoidDist, g: &FactoidDist, epsilon: f64) -> Result<f64> {
    p.universe().check_same(&g.universe())?;
    let partition = fixed_width_partition(g, epsilon)?;
    let pm = partition.block_masses(p)?;
    let gm = partition.block_masses(g)?;
    let s: NeumaierSum = pm.iter().zip(&gm).map(|(a, b)| (a - b).abs()).collect();
    Ok(0.5 * s.total())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    /// Mean generator probability of the bin's factoids.
    pub bin_value: f64,
    pub g_mass: f64,
    pub p_mass: f64,
    pub bin_size: usize,
}

/// One row per block, in increasing order of generator probability.
pub fn reliability_curve(
    p: &FactoidDist,
    g: &FactoidDist,
    spec: BinningSpec,
) -> Result<Vec<ReliabilityRow>> {
    p.universe().check_same(&g.universe())?;
    let partition = spec.partition(g)?;
    let pm = partition.block_masses(p)?;
    let gm = partition.block_masses(g)?;
    let mut rows: Vec<ReliabilityRow> = (0..partition.len())
        .map(|b| {
            let bin_size = partition.block_size(b);
            ReliabilityRow {
                bin_value: gm[b] / bin_size as f64,
                g_mass: gm[b],
                p_mass: pm[b],
                bin_size,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.bin_value.total_cmp(&b.bin_value));
    Ok(rows)
}
