//! Finite distributions over the factoid universe.
//!
//! A [`FactoidDist`] stores an explicit list of atoms plus a constant
//! background probability shared by every index that is not listed. Plain
//! sparse distributions have a zero background; LMs such as the uniform or
//! Laplace-smoothed models put most of their mass on the background, which
//! keeps universes of 10^7 factoids cheap.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::NeumaierSum;

/// Index of the empty fact ⊥.
pub const BOTTOM: usize = 0;

/// Tolerance applied when checking that probabilities sum to one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Drift that constructors silently renormalize away.
const RENORMALIZE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FactoidUniverse {
    size: usize,
}

impl FactoidUniverse {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::UniverseTooSmall(size));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bottom(&self) -> usize {
        BOTTOM
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index < self.size {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index,
                size: self.size,
            })
        }
    }

    pub fn check_same(&self, other: &FactoidUniverse) -> Result<()> {
        if self.size == other.size {
            Ok(())
        } else {
            Err(Error::UniverseMismatch {
                left: self.size,
                right: other.size,
            })
        }
    }
}

/// Sorted, duplicate-free set of factoid indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct FactoidSet {
    items: Vec<usize>,
}

impl FactoidSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_sorted_unchecked(items: Vec<usize>) -> Self {
        debug_assert!(items.windows(2).all(|w| w[0] < w[1]));
        Self { items }
    }

    pub fn contains(&self, y: usize) -> bool {
        self.items.binary_search(&y).is_ok()
    }

    pub fn insert(&mut self, y: usize) -> bool {
        match self.items.binary_search(&y) {
            Ok(_) => false,
            Err(pos) => {
                self.items.insert(pos, y);
                true
            }
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.items
    }

    pub fn max(&self) -> Option<usize> {
        self.items.last().copied()
    }

    /// Number of universe indices outside the set.
    pub fn complement_len(&self, universe: &FactoidUniverse) -> usize {
        universe.size() - self.items.len()
    }

    /// The r-th (0-based) smallest index not in the set.
    pub fn nth_absent(&self, r: usize) -> usize {
        nth_absent(&self.items, r)
    }

    pub fn check_in(&self, universe: &FactoidUniverse) -> Result<()> {
        match self.max() {
            Some(m) => universe.check_index(m),
            None => Ok(()),
        }
    }
}

impl FromIterator<usize> for FactoidSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut items: Vec<usize> = iter.into_iter().collect();
        items.sort_unstable();
        items.dedup();
        Self { items }
    }
}

/// A probability distribution over a [`FactoidUniverse`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoidDist {
    universe: FactoidUniverse,
    /// Sorted by index, unique.
    atoms: Vec<(usize, f64)>,
    /// Probability of each index absent from `atoms`.
    background: f64,
}

impl FactoidDist {
    /// Builds a distribution from non-negative weights and normalizes them.
    /// Repeated indices accumulate.
    pub fn from_weights<I>(universe: FactoidUniverse, weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (index, weight) in weights {
            universe.check_index(index)?;
            check_weight(index, weight)?;
            *acc.entry(index).or_insert(0.0) += weight;
        }
        let total: NeumaierSum = acc.values().copied().collect();
        let total = total.total();
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        let atoms = acc
            .into_iter()
            .filter(|&(_, w)| w > 0.0)
            .map(|(y, w)| (y, w / total))
            .collect();
        Ok(Self {
            universe,
            atoms,
            background: 0.0,
        })
    }

    /// Builds a distribution from explicit atom probabilities plus a
    /// background probability for every unlisted index. The total must be
    /// within 1e-6 of one; the result is renormalized exactly.
    pub fn from_parts(
        universe: FactoidUniverse,
        mut atoms: Vec<(usize, f64)>,
        background: f64,
    ) -> Result<Self> {
        atoms.sort_unstable_by_key(|&(y, _)| y);
        for pair in atoms.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::param(
                    "atoms",
                    format!("factoid {} listed twice", pair[0].0),
                ));
            }
        }
        for &(y, w) in &atoms {
            universe.check_index(y)?;
            check_weight(y, w)?;
        }
        if !background.is_finite() || background < 0.0 {
            return Err(Error::param(
                "background",
                format!("must be a finite non-negative probability, got {background}"),
            ));
        }
        let background_count = universe.size() - atoms.len();
        let background = if background_count == 0 { 0.0 } else { background };
        let mut total: NeumaierSum = atoms.iter().map(|&(_, w)| w).collect();
        total.add(background * background_count as f64);
        let total = total.total();
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        if (total - 1.0).abs() > RENORMALIZE_SLACK {
            return Err(Error::NotNormalized { sum: total });
        }
        if background == 0.0 {
            atoms.retain(|&(_, w)| w > 0.0);
        }
        for (_, w) in atoms.iter_mut() {
            *w /= total;
        }
        Ok(Self {
            universe,
            atoms,
            background: background / total,
        })
    }

    pub fn point_mass(universe: FactoidUniverse, y: usize) -> Result<Self> {
        universe.check_index(y)?;
        Ok(Self {
            universe,
            atoms: vec![(y, 1.0)],
            background: 0.0,
        })
    }

    pub fn uniform(universe: FactoidUniverse) -> Self {
        Self {
            universe,
            atoms: Vec::new(),
            background: 1.0 / universe.size() as f64,
        }
    }

    pub fn uniform_over(universe: FactoidUniverse, set: &FactoidSet) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::ZeroMass);
        }
        set.check_in(&universe)?;
        let w = 1.0 / set.len() as f64;
        Ok(Self {
            universe,
            atoms: set.iter().map(|y| (y, w)).collect(),
            background: 0.0,
        })
    }

    /// Dense vector form; intended for small universes.
    pub fn from_dense(universe: FactoidUniverse, probs: &[f64]) -> Result<Self> {
        if probs.len() != universe.size() {
            return Err(Error::UniverseMismatch {
                left: universe.size(),
                right: probs.len(),
            });
        }
        Self::from_weights(universe, probs.iter().copied().enumerate())
    }

    pub fn universe(&self) -> FactoidUniverse {
        self.universe
    }

    pub fn atoms(&self) -> &[(usize, f64)] {
        &self.atoms
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    /// Number of indices carrying the background probability.
    pub fn background_count(&self) -> usize {
        self.universe.size() - self.atoms.len()
    }

    pub fn prob(&self, y: usize) -> f64 {
        match self.atoms.binary_search_by_key(&y, |&(i, _)| i) {
            Ok(pos) => self.atoms[pos].1,
            Err(_) if y < self.universe.size() => self.background,
            Err(_) => 0.0,
        }
    }

    pub fn is_listed(&self, y: usize) -> bool {
        self.atoms.binary_search_by_key(&y, |&(i, _)| i).is_ok()
    }

    pub fn support_size(&self) -> usize {
        let explicit = self.atoms.iter().filter(|&&(_, w)| w > 0.0).count();
        if self.background > 0.0 {
            explicit + self.background_count()
        } else {
            explicit
        }
    }

    /// The support as an explicit set. Only valid when the background is zero.
    pub fn support(&self) -> Option<FactoidSet> {
        (self.background == 0.0).then(|| {
            FactoidSet::from_sorted_unchecked(
                self.atoms
                    .iter()
                    .filter(|&&(_, w)| w > 0.0)
                    .map(|&(y, _)| y)
                    .collect(),
            )
        })
    }

    pub fn total_mass(&self) -> f64 {
        let mut s: NeumaierSum = self.atoms.iter().map(|&(_, w)| w).collect();
        s.add(self.background * self.background_count() as f64);
        s.total()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![self.background; self.universe.size()];
        for &(y, w) in &self.atoms {
            v[y] = w;
        }
        v
    }

    /// D(S) for a set of factoids.
    pub fn mass_of(&self, set: &FactoidSet) -> Result<f64> {
        set.check_in(&self.universe)?;
        let mut s = NeumaierSum::new();
        let mut background_hits = 0usize;
        merge_sorted(
            &self.atoms,
            set.as_slice(),
            |w, in_set| {
                if in_set {
                    s.add(w);
                }
            },
            || background_hits += 1,
        );
        s.add(self.background * background_hits as f64);
        Ok(s.total())
    }

    /// D(Y \ S), summed directly over the complement.
    pub fn mass_outside(&self, set: &FactoidSet) -> Result<f64> {
        set.check_in(&self.universe)?;
        let mut s = NeumaierSum::new();
        let mut background_hits = 0usize;
        merge_sorted(
            &self.atoms,
            set.as_slice(),
            |w, in_set| {
                if !in_set {
                    s.add(w);
                }
            },
            || background_hits += 1,
        );
        let outside_background = self.background_count() - background_hits;
        s.add(self.background * outside_background as f64);
        Ok(s.total())
    }

    /// Total variation distance, computed as half the L1 distance.
    pub fn tv_distance(&self, other: &FactoidDist) -> Result<f64> {
        self.universe.check_same(&other.universe)?;
        let mut s = NeumaierSum::new();
        for_each_joint(self, other, |a, b, mult| s.add((a - b).abs() * mult as f64));
        Ok(0.5 * s.total())
    }

    /// Total variation distance as the sum of positive parts of (self - other).
    pub fn tv_positive_part(&self, other: &FactoidDist) -> Result<f64> {
        self.universe.check_same(&other.universe)?;
        let mut s = NeumaierSum::new();
        for_each_joint(self, other, |a, b, mult| {
            s.add((a - b).max(0.0) * mult as f64)
        });
        Ok(s.total())
    }

    /// KL(self || model) in nats; +inf when self puts mass outside supp(model).
    pub fn kl_divergence(&self, model: &FactoidDist) -> Result<f64> {
        self.universe.check_same(&model.universe)?;
        let mut s = NeumaierSum::new();
        let mut infinite = false;
        for_each_joint(self, model, |a, b, mult| {
            if a > 0.0 {
                if b <= 0.0 {
                    infinite = true;
                } else {
                    s.add(a * (a / b).ln() * mult as f64);
                }
            }
        });
        if infinite {
            return Ok(f64::INFINITY);
        }
        // Rounding can push an exact zero slightly negative.
        Ok(s.total().max(0.0))
    }

    /// Restriction to a contiguous index range, viewed as its own universe:
    /// local index 0 is ⊥ and absorbs all mass outside the range, local
    /// index i >= 1 is global index `range.start + i - 1`.
    pub fn project(&self, range: Range<usize>) -> Result<FactoidDist> {
        if range.start == 0 || range.end > self.universe.size() || range.is_empty() {
            return Err(Error::param(
                "range",
                format!(
                    "{range:?} must be a non-empty range of non-⊥ indices below {}",
                    self.universe.size()
                ),
            ));
        }
        let local = FactoidUniverse::new(range.len() + 1)?;
        let lo = self.atoms.partition_point(|&(y, _)| y < range.start);
        let hi = self.atoms.partition_point(|&(y, _)| y < range.end);
        let inside = &self.atoms[lo..hi];
        let background_inside = range.len() - inside.len();
        let mut in_range: NeumaierSum = inside.iter().map(|&(_, w)| w).collect();
        in_range.add(self.background * background_inside as f64);
        let bottom_mass = (1.0 - in_range.total()).max(0.0);
        let mut atoms = Vec::with_capacity(inside.len() + 1);
        atoms.push((BOTTOM, bottom_mass));
        atoms.extend(inside.iter().map(|&(y, w)| (y - range.start + 1, w)));
        let background = if background_inside > 0 {
            self.background
        } else {
            0.0
        };
        FactoidDist::from_parts(local, atoms, background)
    }

    pub fn sampler(&self) -> FactoidSampler {
        FactoidSampler::new(self)
    }

    /// `n` independent draws.
    pub fn sample_iid<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(Error::param("n", "at least one draw is required"));
        }
        let sampler = self.sampler();
        Ok((0..n).map(|_| sampler.sample(rng)).collect())
    }
}

fn check_weight(index: usize, weight: f64) -> Result<()> {
    if !weight.is_finite() {
        return Err(Error::NonFiniteWeight { index });
    }
    if weight < 0.0 {
        return Err(Error::NegativeWeight { index, weight });
    }
    Ok(())
}

/// Walks the union of `atoms` and `set` in index order. `on_atom` receives
/// each atom weight with its set membership; `on_background_member` fires for
/// set members that are not atoms.
fn merge_sorted(
    atoms: &[(usize, f64)],
    set: &[usize],
    mut on_atom: impl FnMut(f64, bool),
    mut on_background_member: impl FnMut(),
) {
    let (mut i, mut j) = (0, 0);
    while i < atoms.len() || j < set.len() {
        match (atoms.get(i), set.get(j)) {
            (Some(&(y, w)), Some(&s)) if y == s => {
                on_atom(w, true);
                i += 1;
                j += 1;
            }
            (Some(&(y, w)), Some(&s)) if y < s => {
                on_atom(w, false);
                i += 1;
            }
            (Some(&(_, w)), None) => {
                on_atom(w, false);
                i += 1;
            }
            _ => {
                on_background_member();
                j += 1;
            }
        }
    }
}

/// Calls `f(a(y), b(y), multiplicity)` once per index listed in either
/// distribution, then once for all remaining indices (where both sit at their
/// background values).
pub(crate) fn for_each_joint(a: &FactoidDist, b: &FactoidDist, mut f: impl FnMut(f64, f64, usize)) {
    let (xs, ys) = (&a.atoms, &b.atoms);
    let (mut i, mut j) = (0, 0);
    let mut union = 0usize;
    while i < xs.len() || j < ys.len() {
        union += 1;
        match (xs.get(i), ys.get(j)) {
            (Some(&(yx, wx)), Some(&(yy, wy))) if yx == yy => {
                f(wx, wy, 1);
                i += 1;
                j += 1;
            }
            (Some(&(yx, wx)), Some(&(yy, _))) if yx < yy => {
                f(wx, b.background, 1);
                i += 1;
            }
            (Some(&(_, wx)), None) => {
                f(wx, b.background, 1);
                i += 1;
            }
            (_, Some(&(_, wy))) => {
                f(a.background, wy, 1);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    let rest = a.universe.size() - union;
    if rest > 0 {
        f(a.background, b.background, rest);
    }
}

enum SamplerItem {
    Atom(usize),
    Background,
}

/// Alias-table sampler for a [`FactoidDist`]. Background mass is drawn as a
/// single bucket and resolved to a uniformly chosen unlisted index.
pub struct FactoidSampler {
    alias: Option<WeightedAliasIndex<f64>>,
    items: Vec<SamplerItem>,
    listed: Vec<usize>,
    background_count: usize,
}

impl FactoidSampler {
    fn new(dist: &FactoidDist) -> Self {
        let mut items = Vec::new();
        let mut weights = Vec::new();
        for &(y, w) in &dist.atoms {
            if w > 0.0 {
                items.push(SamplerItem::Atom(y));
                weights.push(w);
            }
        }
        let background_count = dist.background_count();
        if dist.background > 0.0 && background_count > 0 {
            items.push(SamplerItem::Background);
            weights.push(dist.background * background_count as f64);
        }
        let alias = if items.len() > 1 {
            Some(WeightedAliasIndex::new(weights).expect("positive finite weights"))
        } else {
            None
        };
        Self {
            alias,
            items,
            listed: dist.atoms.iter().map(|&(y, _)| y).collect(),
            background_count,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let k = match &self.alias {
            Some(alias) => alias.sample(rng),
            None => 0,
        };
        match self.items[k] {
            SamplerItem::Atom(y) => y,
            SamplerItem::Background => {
                let r = rng.random_range(0..self.background_count as u64) as usize;
                self.nth_unlisted(r)
            }
        }
    }

    fn nth_unlisted(&self, r: usize) -> usize {
        nth_absent(&self.listed, r)
    }
}

/// The r-th (0-based) index not present in the sorted slice `listed`.
fn nth_absent(listed: &[usize], r: usize) -> usize {
    // listed[j] - j counts absent indices below listed[j]; it is
    // non-decreasing in j.
    let (mut lo, mut hi) = (0usize, listed.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if listed[mid] - mid <= r {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    r + lo
}

/// Deterministic generator with a portable output stream.
#[derive(Debug, Clone)]
pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Independent child generator for `(master_seed, stream)`.
    pub fn child(master_seed: u64, stream: u64) -> Self {
        Self::new(derive_seed(master_seed, stream))
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Counter-based child seed; independent of the order streams are requested.
pub fn derive_seed(master_seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}
