//! Search over `d`-element subsets of a crosstalk matrix for the best key rate.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`), seeded from a `u64`.
//! The GA gives every child its own ChaCha stream, numbered by generation and
//! slot, so evaluating a generation in parallel cannot change the result.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crosstalk::CrosstalkMatrix;
use crate::error::{Error, Result};
use crate::qkd::secret_key_rate;

/// Sorted, distinct indices into the parent matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubsetGenome(Vec<usize>);

impl SubsetGenome {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        let before = indices.len();
        indices.dedup();
        if indices.len() != before {
            return Err(Error::InvalidArgument("subset indices must be distinct".into()));
        }
        if indices.last().is_some_and(|&i| i >= n) {
            return Err(Error::InvalidArgument(format!("subset index out of range for {n} modes")));
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn random(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Self {
        let mut v = index::sample(rng, n, d).into_vec();
        v.sort_unstable();
        Self(v)
    }
}

/// Key rate of the subset, `-inf` when its submatrix is all zeros.
pub fn subset_fitness(m: &CrosstalkMatrix, subset: &[usize]) -> f64 {
    let mut diag = 0.0;
    let mut total = 0.0;
    for &i in subset {
        let row = m.row(i);
        for &j in subset {
            total += row[j];
        }
        diag += row[i];
    }
    if total <= 0.0 {
        return f64::NEG_INFINITY;
    }
    secret_key_rate(subset.len(), 1.0 - diag / total).rate_bits
}

fn check_dimension(m: &CrosstalkMatrix, d: usize) -> Result<()> {
    if d < 2 || d > m.dim() {
        return Err(Error::InvalidArgument(format!("subset size {d} must be in 2..={}", m.dim())));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    /// Independent uniform draws; repeats are possible and counted.
    Independent,
    /// Uniform draws without repeats across the sample.
    Distinct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetStats {
    pub samples: usize,
    pub mean: f64,
    /// Sample standard deviation (zero for a single sample).
    pub stddev: f64,
    pub max: f64,
    pub argmax: SubsetGenome,
    /// Draws that repeated an earlier subset.
    pub duplicates: usize,
}

/// Key-rate statistics over `n_samples` uniformly drawn `d`-subsets.
pub fn random_subset_stats(m: &CrosstalkMatrix, d: usize, n_samples: usize, seed: u64) -> Result<SubsetStats> {
    random_subset_stats_with(m, d, n_samples, seed, Sampling::Independent)
}

pub fn random_subset_stats_with(
    m: &CrosstalkMatrix,
    d: usize,
    n_samples: usize,
    seed: u64,
    sampling: Sampling,
) -> Result<SubsetStats> {
    check_dimension(m, d)?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    let n = m.dim();
    if sampling == Sampling::Distinct && binomial(n, d) < n_samples as u128 {
        return Err(Error::InvalidArgument(format!("only {} distinct subsets of size {d} exist", binomial(n, d))));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(n_samples);
    let mut subsets = Vec::with_capacity(n_samples);
    let mut duplicates = 0;
    while subsets.len() < n_samples {
        let g = SubsetGenome::random(&mut rng, n, d);
        if !seen.insert(g.clone()) {
            if sampling == Sampling::Distinct {
                continue;
            }
            duplicates += 1;
        }
        subsets.push(g);
    }

    let rates: Vec<f64> = subsets.par_iter().map(|g| subset_fitness(m, g.indices())).collect();
    let count = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / count;
    let stddev = if rates.len() > 1 {
        (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (count - 1.0)).sqrt()
    } else {
        0.0
    };
    let (best, max) =
        rates.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &r)| if r > acc.1 { (i, r) } else { acc });
    Ok(SubsetStats { samples: n_samples, mean, stddev, max, argmax: subsets[best].clone(), duplicates })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    pub population: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub elite_count: usize,
    pub rng_seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self { population: 50, generations: 200, mutation_rate: 0.3, elite_count: 2, rng_seed: 0 }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.generations == 0 {
            return Err(Error::InvalidArgument("population and generations must be positive".into()));
        }
        if !(self.mutation_rate > 0.0 && self.mutation_rate < 1.0) {
            return Err(Error::InvalidArgument(format!("mutation_rate must be in (0, 1), got {}", self.mutation_rate)));
        }
        if self.elite_count >= self.population {
            return Err(Error::InvalidArgument("elite_count must be below population".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub best: SubsetGenome,
    pub rate: f64,
    /// Generation 0 is the random initial population.
    pub trace: Vec<GenerationStats>,
}

fn stream_rng(seed: u64, generation: usize, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 32) | slot as u64);
    rng
}

fn tournament<'a>(rng: &mut ChaCha8Rng, pop: &'a [(SubsetGenome, f64)]) -> &'a SubsetGenome {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    if b.1 > a.1 {
        &b.0
    } else {
        &a.0
    }
}

/// Union of both parents, down-sampled uniformly to `d` members.
fn crossover(rng: &mut ChaCha8Rng, a: &SubsetGenome, b: &SubsetGenome, d: usize) -> SubsetGenome {
    let mut pool: Vec<usize> = a.0.iter().chain(&b.0).copied().collect();
    pool.sort_unstable();
    pool.dedup();
    let mut child: Vec<usize> = index::sample(rng, pool.len(), d).into_iter().map(|k| pool[k]).collect();
    child.sort_unstable();
    SubsetGenome(child)
}

/// Swaps one member for a uniformly chosen non-member.
fn mutate(rng: &mut ChaCha8Rng, g: &mut SubsetGenome, n: usize) {
    let d = g.0.len();
    if d == n {
        return;
    }
    let out = rng.random_range(0..d);
    let mut pick = rng.random_range(0..n - d);
    // pick-th index not in the genome
    let mut incoming = 0;
    for i in 0..n {
        if g.0.binary_search(&i).is_err() {
            if pick == 0 {
                incoming = i;
                break;
            }
            pick -= 1;
        }
    }
    g.0[out] = incoming;
    g.0.sort_unstable();
}

fn ranked(pop: &[(SubsetGenome, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&i, &j| pop[j].1.total_cmp(&pop[i].1).then_with(|| pop[i].0.cmp(&pop[j].0)));
    order
}

/// Generational GA over `d`-subsets maximizing the key rate.
///
/// Tournament selection of size 2, union-then-downsample crossover, swap
/// mutation with probability `mutation_rate` per child, and `elite_count`
/// best individuals copied unchanged into the next generation.
pub fn ga_optimize(m: &CrosstalkMatrix, d: usize, params: &GaParams) -> Result<GaResult> {
    check_dimension(m, d)?;
    params.validate()?;
    let n = m.dim();
    let seed = params.rng_seed;

    let evaluate = |genomes: Vec<SubsetGenome>| -> Vec<(SubsetGenome, f64)> {
        genomes
            .into_par_iter()
            .map(|g| {
                let f = subset_fitness(m, g.indices());
                (g, f)
            })
            .collect()
    };

    let initial: Vec<SubsetGenome> = (0..params.population)
        .into_par_iter()
        .map(|slot| SubsetGenome::random(&mut stream_rng(seed, 0, slot), n, d))
        .collect();
    let mut pop = evaluate(initial);
    let mut trace = Vec::with_capacity(params.generations + 1);
    let mut best = pop[ranked(&pop)[0]].clone();

    let record = |generation: usize, pop: &[(SubsetGenome, f64)]| {
        let top = pop.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let finite: Vec<f64> = pop.iter().map(|p| p.1).filter(|f| f.is_finite()).collect();
        let mean = if finite.is_empty() { f64::NEG_INFINITY } else { finite.iter().sum::<f64>() / finite.len() as f64 };
        GenerationStats { generation, best: top, mean }
    };
    trace.push(record(0, &pop));

    for generation in 1..=params.generations {
        let order = ranked(&pop);
        let elites: Vec<(SubsetGenome, f64)> = order[..params.elite_count].iter().map(|&i| pop[i].clone()).collect();
        let children: Vec<SubsetGenome> = (params.elite_count..params.population)
            .into_par_iter()
            .map(|slot| {
                let mut rng = stream_rng(seed, generation, slot);
                let a = tournament(&mut rng, &pop);
                let b = tournament(&mut rng, &pop);
                let mut child = crossover(&mut rng, a, b, d);
                if rng.random_bool(params.mutation_rate) {
                    mutate(&mut rng, &mut child, n);
                }
                child
            })
            .collect();
        let mut next = elites;
        next.extend(evaluate(children));
        pop = next;

        let top = &pop[ranked(&pop)[0]];
        if top.1 > best.1 {
            best = top.clone();
        }
        trace.push(record(generation, &pop));
    }

    Ok(GaResult { best: best.0, rate: best.1, trace })
}

pub const DEFAULT_EXHAUSTIVE_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: SubsetGenome,
    pub rate: f64,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

pub fn exhaustive_search(m: &CrosstalkMatrix, d: usize) -> Result<SearchResult> {
    exhaustive_search_capped(m, d, DEFAULT_EXHAUSTIVE_CAP)
}

/// Best subset over all `C(n, d)` candidates; ties go to the
/// lexicographically smallest index set.
pub fn exhaustive_search_capped(m: &CrosstalkMatrix, d: usize, cap: u128) -> Result<SearchResult> {
    check_dimension(m, d)?;
    let n = m.dim();
    let count = binomial(n, d);
    if count > cap {
        return Err(Error::TooManySubsets { count, cap });
    }
    let mut current: Vec<usize> = (0..d).collect();
    let mut best = (current.clone(), subset_fitness(m, &current));
    while next_combination(&mut current, n) {
        let f = subset_fitness(m, &current);
        if f > best.1 {
            best = (current.clone(), f);
        }
    }
    Ok(SearchResult { best: SubsetGenome(best.0), rate: best.1 })
}

/// Advances to the next combination in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
