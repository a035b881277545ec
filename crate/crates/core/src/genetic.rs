//! Genetic algorithm over fixed-length binary chromosomes.
//!
//! Generation 0 is uniform random. Each later generation keeps the fittest
//! `elitism_fraction` unchanged and fills the rest with offspring: two
//! parents are drawn by linear-rank selection, recombined by single-point
//! crossover with probability `p_crossover`, and every gene of each child is
//! flipped with probability `p_mutation`.
//!
//! Each generation draws from its own seeded stream and fitness is evaluated
//! after all offspring exist, so parallel evaluation does not change results.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{mean, median};
use crate::matrix::BinaryMatrix;
use crate::rng::{self, Rng};

pub const SELECTION_OPERATOR: &str = "linear-rank";

/// Offspring redraws allowed per slot before a feasibility predicate is
/// declared unsatisfiable.
const MAX_REDRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Chromosome {
    genes: Vec<u8>,
}

impl Chromosome {
    pub fn new(genes: Vec<u8>) -> Result<Self> {
        if let Some(j) = genes.iter().position(|&g| g > 1) {
            return Err(Error::NonBinaryValue {
                row: 1,
                column: j.to_string(),
                value: genes[j].to_string(),
            });
        }
        Ok(Chromosome { genes })
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .enumerate()
            .map(|(j, c)| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::NonBinaryValue {
                    row: 1,
                    column: j.to_string(),
                    value: other.to_string(),
                }),
            })
            .collect::<Result<Vec<u8>>>()
            .map(|genes| Chromosome { genes })
    }

    pub fn random(p: usize, rng: &mut Rng) -> Self {
        Chromosome {
            genes: (0..p).map(|_| rng.gen::<bool>() as u8).collect(),
        }
    }

    pub fn genes(&self) -> &[u8] {
        &self.genes
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.genes.iter().map(|&g| g as usize).sum()
    }
}

impl std::fmt::Display for Chromosome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &g in &self.genes {
            f.write_str(if g == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaConfig {
    #[serde(default = "defaults::pop_size")]
    pub pop_size: usize,
    /// Number of populations, counting the random initial one.
    #[serde(default = "defaults::generations")]
    pub generations: usize,
    #[serde(default = "defaults::p_mutation")]
    pub p_mutation: f64,
    #[serde(default = "defaults::p_crossover")]
    pub p_crossover: f64,
    #[serde(default = "defaults::elitism_fraction")]
    pub elitism_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn pop_size() -> usize {
        500
    }
    pub fn generations() -> usize {
        100
    }
    pub fn p_mutation() -> f64 {
        0.10
    }
    pub fn p_crossover() -> f64 {
        0.80
    }
    pub fn elitism_fraction() -> f64 {
        0.05
    }
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            pop_size: defaults::pop_size(),
            generations: defaults::generations(),
            p_mutation: defaults::p_mutation(),
            p_crossover: defaults::p_crossover(),
            elitism_fraction: defaults::elitism_fraction(),
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("ga: {m}")));
        for (name, v) in [
            ("p_mutation", self.p_mutation),
            ("p_crossover", self.p_crossover),
            ("elitism_fraction", self.elitism_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.pop_size < 2 {
            return bad("pop_size must be at least 2".into());
        }
        if self.generations == 0 {
            return bad("generations must be at least 1".into());
        }
        if self.elitism_fraction > 0.0 && self.elitism_fraction * (self.pop_size as f64) < 1.0 {
            return bad(format!(
                "elitism_fraction {} keeps no member of a population of {}",
                self.elitism_fraction, self.pop_size
            ));
        }
        Ok(())
    }

    /// Members carried over unchanged each generation.
    pub fn n_elite(&self) -> usize {
        ((self.elitism_fraction * self.pop_size as f64).round() as usize).min(self.pop_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    members: Vec<Chromosome>,
    fitness: Vec<f64>,
}

impl Population {
    pub fn new(members: Vec<Chromosome>, fitness: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("population is empty"));
        }
        if members.len() != fitness.len() {
            return Err(Error::invalid(format!(
                "{} members but {} fitness values",
                members.len(),
                fitness.len()
            )));
        }
        let p = members[0].len();
        if let Some(c) = members.iter().find(|c| c.len() != p) {
            return Err(Error::DimensionMismatch { expected: p, found: c.len() });
        }
        Ok(Population { members, fitness })
    }

    /// Scores every row of `genes` with `fitness`.
    pub fn evaluate<F>(genes: &BinaryMatrix, fitness: F) -> Result<Self>
    where
        F: Fn(&[u8]) -> f64 + Sync,
    {
        let members: Vec<Chromosome> = genes
            .iter_rows()
            .map(|r| Chromosome { genes: r.to_vec() })
            .collect();
        let fit = score(&members, &fitness)?;
        Population::new(members, fit)
    }

    pub fn members(&self) -> &[Chromosome] {
        &self.members
    }

    pub fn fitness(&self) -> &[f64] {
        &self.fitness
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn n_genes(&self) -> usize {
        self.members[0].len()
    }

    /// Members as a `pop_size x p` matrix.
    pub fn to_matrix(&self) -> BinaryMatrix {
        let p = self.n_genes();
        let mut data = Vec::with_capacity(self.len() * p);
        for c in &self.members {
            data.extend_from_slice(&c.genes);
        }
        BinaryMatrix::from_vec(self.len(), p, data).expect("chromosomes are binary")
    }

    pub fn best(&self) -> (&Chromosome, f64) {
        let i = (0..self.len())
            .max_by(|&a, &b| self.fitness[a].total_cmp(&self.fitness[b]).then(b.cmp(&a)))
            .expect("non-empty");
        (&self.members[i], self.fitness[i])
    }

    pub fn stats(&self) -> GenerationStats {
        GenerationStats {
            best: self.fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: mean(&self.fitness),
            median: median(&self.fitness),
        }
    }

    /// Indices from least to most fit; ties keep index order.
    fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.fitness[a].total_cmp(&self.fitness[b]).then(a.cmp(&b)));
        idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub best: f64,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaTrace {
    pub selection: String,
    pub config: GaConfig,
    pub generations: Vec<GenerationStats>,
    pub final_population: Population,
}

/// Linear-rank sampler: the member of rank `r` (1 = least fit) is drawn with
/// probability `r / (N (N + 1) / 2)`.
pub struct RankSelector {
    order: Vec<usize>,
    total: u64,
}

impl RankSelector {
    pub fn new(pop: &Population) -> Self {
        let n = pop.len() as u64;
        RankSelector {
            order: pop.ranking(),
            total: n * (n + 1) / 2,
        }
    }

    /// Index of the selected member.
    pub fn sample(&self, rng: &mut Rng) -> usize {
        let u = rng.gen_range(0..self.total);
        // smallest rank r with r (r + 1) / 2 > u
        let mut r = ((((8 * u + 1) as f64).sqrt() - 1.0) / 2.0) as u64;
        while r * (r + 1) / 2 > u {
            r -= 1;
        }
        while (r + 1) * (r + 2) / 2 <= u {
            r += 1;
        }
        self.order[r as usize]
    }
}

pub fn rank_select<'a>(pop: &'a Population, rng: &mut Rng) -> &'a Chromosome {
    &pop.members[RankSelector::new(pop).sample(rng)]
}

/// Genes at positions `>= cut` (0-based) are exchanged; `cut = p` leaves both
/// parents intact.
pub fn single_point_crossover(a: &Chromosome, b: &Chromosome, cut: usize) -> Result<(Chromosome, Chromosome)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    if cut > a.len() {
        return Err(Error::IndexOutOfRange { index: cut, len: a.len() + 1 });
    }
    let mut x = a.genes.clone();
    let mut y = b.genes.clone();
    x[cut..].swap_with_slice(&mut y[cut..]);
    Ok((Chromosome { genes: x }, Chromosome { genes: y }))
}

pub fn mutate(c: &Chromosome, p_mutation: f64, rng: &mut Rng) -> Chromosome {
    Chromosome {
        genes: c
            .genes
            .iter()
            .map(|&g| if rng.gen_bool(p_mutation) { g ^ 1 } else { g })
            .collect(),
    }
}

fn score<F>(members: &[Chromosome], fitness: &F) -> Result<Vec<f64>>
where
    F: Fn(&[u8]) -> f64 + Sync,
{
    let values: Vec<f64> = members.par_iter().map(|c| fitness(&c.genes)).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteFitness {
            chromosome: members[i].to_string(),
            value: values[i],
        });
    }
    Ok(values)
}

pub fn evolve<F>(fitness: F, p: usize, config: &GaConfig) -> Result<GaTrace>
where
    F: Fn(&[u8]) -> f64 + Sync,
{
    evolve_with(fitness, |_: &[u8]| true, p, config)
}

/// Like [`evolve`], redrawing any chromosome that `accept` rejects.
pub fn evolve_with<F, A>(fitness: F, accept: A, p: usize, config: &GaConfig) -> Result<GaTrace>
where
    F: Fn(&[u8]) -> f64 + Sync,
    A: Fn(&[u8]) -> bool,
{
    config.validate()?;
    if p == 0 {
        return Err(Error::invalid("chromosomes need at least one gene"));
    }
    let n = config.pop_size;
    let n_elite = config.n_elite();

    let mut rng = rng::stream(config.seed, 0);
    let mut members = Vec::with_capacity(n);
    while members.len() < n {
        let c = redraw(&accept, || Chromosome::random(p, &mut rng))?;
        members.push(c);
    }
    let fit = score(&members, &fitness)?;
    let mut pop = Population::new(members, fit)?;
    let mut generations = vec![pop.stats()];

    for g in 1..config.generations {
        let mut rng = rng::stream(config.seed, g as u64);
        let ranking = pop.ranking();
        let selector = RankSelector {
            total: (n as u64) * (n as u64 + 1) / 2,
            order: ranking.clone(),
        };

        let mut next = Vec::with_capacity(n);
        let mut next_fit = Vec::with_capacity(n_elite);
        for &i in ranking.iter().rev().take(n_elite) {
            next.push(pop.members[i].clone());
            next_fit.push(pop.fitness[i]);
        }
        let mut children = Vec::with_capacity(n - n_elite + 1);
        while children.len() < n - n_elite {
            let want = (n - n_elite - children.len()).min(2);
            let pair = redraw_pair(&accept, want, || breed(&pop, &selector, config, p, &mut rng))?;
            children.extend(pair);
        }
        children.truncate(n - n_elite);
        next_fit.extend(score(&children, &fitness)?);
        next.extend(children);
        pop = Population::new(next, next_fit)?;
        generations.push(pop.stats());
    }

    Ok(GaTrace {
        selection: SELECTION_OPERATOR.into(),
        config: config.clone(),
        generations,
        final_population: pop,
    })
}

fn breed(pop: &Population, selector: &RankSelector, config: &GaConfig, p: usize, rng: &mut Rng) -> [Chromosome; 2] {
    let a = &pop.members[selector.sample(rng)];
    let b = &pop.members[selector.sample(rng)];
    let (x, y) = if p > 1 && rng.gen_bool(config.p_crossover) {
        let cut = rng.gen_range(1..p);
        single_point_crossover(a, b, cut).expect("cut in range")
    } else {
        (a.clone(), b.clone())
    };
    [mutate(&x, config.p_mutation, rng), mutate(&y, config.p_mutation, rng)]
}

fn redraw<A, G>(accept: &A, mut draw: G) -> Result<Chromosome>
where
    A: Fn(&[u8]) -> bool,
    G: FnMut() -> Chromosome,
{
    for _ in 0..MAX_REDRAWS {
        let c = draw();
        if accept(&c.genes) {
            return Ok(c);
        }
    }
    Err(Error::invalid("feasibility predicate rejected every candidate chromosome"))
}

/// Draws pairs until `want` acceptable children are available.
fn redraw_pair<A, G>(accept: &A, want: usize, mut draw: G) -> Result<Vec<Chromosome>>
where
    A: Fn(&[u8]) -> bool,
    G: FnMut() -> [Chromosome; 2],
{
    let mut out = Vec::with_capacity(want);
    for _ in 0..MAX_REDRAWS {
        for c in draw() {
            if out.len() < want && accept(&c.genes) {
                out.push(c);
            }
        }
        if out.len() == want {
            return Ok(out);
        }
    }
    Err(Error::invalid("feasibility predicate rejected every candidate chromosome"))
}
