//! Genetic search over learning rate and batch size.
//!
//! Every generation each individual trains one epoch with its own genome.
//! Fitness is the change in validation MAE over that epoch (more negative
//! is better). The best `elite_count` individuals pass through untouched;
//! the remaining slots are filled with children whose genome is one of the
//! four (learning rate, batch size) pairings of two random parents, with the
//! learning rate then nudged by -10%, 0 or +10%. A child inherits the
//! weights of the better-ranked of its two parents.
//!
//! All randomness is drawn from ChaCha streams keyed by the run seed, the
//! generation and the individual, so runs are reproducible.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::WindowedDataset;
use crate::model::{build_model, clone_model, evaluate, train_epoch, Model, ModelError, ModelSpec, TrainConfig};
use crate::nn::LossKind;

pub const DEFAULT_LR_POOL: [f64; 5] = [1e-2, 5e-3, 1e-3, 5e-4, 1e-4];
pub const DEFAULT_BATCH_POOL: [usize; 5] = [32, 64, 128, 256, 512];

#[derive(Debug, Error)]
pub enum GaError {
    #[error("invalid GA config: {0}")]
    InvalidConfig(String),
    #[error("individual {0} has not been evaluated")]
    UnevaluatedPopulation(usize),
    #[error("need at least two individuals to breed, have {0}")]
    InsufficientParents(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Genome {
    pub learning_rate: f64,
    pub batch_size: usize,
}

/// Outcome of an individual's training epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub train_mse: f64,
    pub train_mae: f64,
    pub val_mse: f64,
    pub val_mae: f64,
    /// Validation MAE after the epoch.
    pub loss_current: f64,
    /// `loss_current - loss_prev`
    pub delta_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub model: Model,
    /// 0 for the first generation, otherwise the loss carried over from
    /// the parent (or from itself, for elites).
    pub loss_prev: f64,
    pub evaluation: Option<Evaluation>,
}

impl Individual {
    pub fn new(genome: Genome, model: Model, loss_prev: f64) -> Self {
        Self {
            genome,
            model,
            loss_prev,
            evaluation: None,
        }
    }

    pub fn loss_current(&self) -> Option<f64> {
        self.evaluation.map(|e| e.loss_current)
    }

    pub fn delta_loss(&self) -> Option<f64> {
        self.evaluation.map(|e| e.delta_loss)
    }
}

/// Learning-rate mutation step, one of -1, 0, +1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MutationFactor(i8);

impl MutationFactor {
    pub const DOWN: Self = Self(-1);
    pub const KEEP: Self = Self(0);
    pub const UP: Self = Self(1);

    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self(rng.random_range(-1..=1))
    }

    pub fn value(self) -> i8 {
        self.0
    }

    /// `lr + factor * lr / 10`; batch size is untouched.
    pub fn apply(self, genome: Genome) -> Genome {
        // lr + f·lr/10 written as a product so the result is exactly
        // lr·0.9 or lr·1.1.
        let scale = match self.0 {
            -1 => 0.9,
            0 => 1.0,
            _ => 1.1,
        };
        let learning_rate = genome.learning_rate * scale;
        debug_assert!(learning_rate > 0.0);
        Genome {
            learning_rate,
            batch_size: genome.batch_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaConfig {
    pub population_size: usize,
    pub elite_count: usize,
    pub generations: usize,
    pub lr_pool: Vec<f64>,
    pub batch_pool: Vec<usize>,
    pub seed: u64,
    /// Training loss used by every individual.
    pub loss: LossKind,
    /// When false the mutation factor is always 0.
    pub mutation: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 10,
            elite_count: 2,
            generations: 10,
            lr_pool: DEFAULT_LR_POOL.to_vec(),
            batch_pool: DEFAULT_BATCH_POOL.to_vec(),
            seed: 0,
            loss: LossKind::Mae,
            mutation: true,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), GaError> {
        let bad = |m: &str| Err(GaError::InvalidConfig(m.to_string()));
        if self.population_size == 0 {
            return bad("population size must be positive");
        }
        if self.elite_count >= self.population_size {
            return bad("elite count must be smaller than the population");
        }
        if self.generations == 0 {
            return bad("at least one generation is required");
        }
        if self.lr_pool.is_empty() || self.batch_pool.is_empty() {
            return bad("learning-rate and batch-size pools must be non-empty");
        }
        if self.lr_pool.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            return bad("learning rates must be positive");
        }
        if self.batch_pool.contains(&0) {
            return bad("batch sizes must be positive");
        }
        Ok(())
    }
}

const STREAM_INIT: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_BREED: u64 = 3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Shuffle seed for individual `index` in `generation` (both 0-based).
pub fn training_seed(cfg: &GaConfig, generation: usize, index: usize) -> u64 {
    stream_seed(cfg.seed, &[STREAM_TRAIN, generation as u64, index as u64])
}

/// Random stream used to breed generation `generation + 1` from `generation`.
pub fn breeding_rng(cfg: &GaConfig, generation: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, &[STREAM_BREED, generation as u64]))
}

/// Clones `base` into every slot and draws each genome uniformly from the
/// two pools.
pub fn init_population(base: &Model, cfg: &GaConfig) -> Result<Vec<Individual>, GaError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, &[STREAM_INIT]));
    Ok((0..cfg.population_size)
        .map(|_| {
            let genome = Genome {
                learning_rate: cfg.lr_pool[rng.random_range(0..cfg.lr_pool.len())],
                batch_size: cfg.batch_pool[rng.random_range(0..cfg.batch_pool.len())],
            };
            Individual::new(genome, clone_model(base), 0.0)
        })
        .collect())
}

/// Trains every individual for one epoch with its own genome and records
/// its losses. `generation` is 0-based and only keys the shuffle streams.
pub fn evaluate_generation(
    population: &mut [Individual],
    train: &WindowedDataset,
    val: &WindowedDataset,
    cfg: &GaConfig,
    generation: usize,
) -> Result<(), GaError> {
    for (index, ind) in population.iter_mut().enumerate() {
        let tc = TrainConfig {
            learning_rate: ind.genome.learning_rate,
            batch_size: ind.genome.batch_size,
            loss: cfg.loss,
            shuffle_seed: training_seed(cfg, generation, index),
        };
        let tm = train_epoch(&mut ind.model, train, &tc, 0)?;
        let (val_mse, val_mae) = evaluate(&ind.model, val)?;
        ind.evaluation = Some(Evaluation {
            train_mse: tm.mse,
            train_mae: tm.mae,
            val_mse,
            val_mae,
            loss_current: val_mae,
            delta_loss: val_mae - ind.loss_prev,
        });
    }
    Ok(())
}

/// Population indices ranked by Δloss, most negative first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    pub ranked: Vec<usize>,
    pub elite_count: usize,
}

impl Selection {
    pub fn elites(&self) -> &[usize] {
        &self.ranked[..self.elite_count]
    }

    /// The whole ranked population.
    pub fn parents(&self) -> &[usize] {
        &self.ranked
    }

    /// Rank position of a population index (0 is best).
    pub fn rank_of(&self, index: usize) -> usize {
        self.ranked.iter().position(|&i| i == index).expect("index in population")
    }
}

/// Sorts by Δloss ascending; ties keep population order.
pub fn select(population: &[Individual], elite_count: usize) -> Result<Selection, GaError> {
    let deltas = population
        .iter()
        .enumerate()
        .map(|(i, ind)| ind.delta_loss().ok_or(GaError::UnevaluatedPopulation(i)))
        .collect::<Result<Vec<f64>, _>>()?;
    if elite_count > population.len() {
        return Err(GaError::InvalidConfig(format!(
            "{elite_count} elites requested from {} individuals",
            population.len()
        )));
    }
    let mut ranked: Vec<usize> = (0..population.len()).collect();
    ranked.sort_by(|&a, &b| deltas[a].total_cmp(&deltas[b]));
    Ok(Selection { ranked, elite_count })
}

/// One of the four (learning rate, batch size) pairings, uniformly.
pub fn crossover<R: Rng + ?Sized>(a: &Genome, b: &Genome, rng: &mut R) -> Genome {
    let pick = rng.random_range(0..4u8);
    Genome {
        learning_rate: if pick & 0b10 == 0 { a.learning_rate } else { b.learning_rate },
        batch_size: if pick & 0b01 == 0 { a.batch_size } else { b.batch_size },
    }
}

pub fn mutate<R: Rng + ?Sized>(genome: &Genome, rng: &mut R) -> (Genome, MutationFactor) {
    let factor = MutationFactor::draw(rng);
    (factor.apply(*genome), factor)
}

/// Builds the next population: elites first (unchanged apart from
/// `loss_prev`), then children.
pub fn next_generation<R: Rng + ?Sized>(
    population: &[Individual],
    cfg: &GaConfig,
    rng: &mut R,
) -> Result<Vec<Individual>, GaError> {
    if population.len() < 2 {
        return Err(GaError::InsufficientParents(population.len()));
    }
    let selection = select(population, cfg.elite_count)?;
    let carried = |ind: &Individual| ind.loss_current().expect("selected individuals are evaluated");

    let mut next = Vec::with_capacity(population.len());
    for &i in selection.elites() {
        let elite = &population[i];
        next.push(Individual::new(elite.genome, clone_model(&elite.model), carried(elite)));
    }
    while next.len() < population.len() {
        let pair = sample(rng, population.len(), 2);
        let (a, b) = (pair.index(0), pair.index(1));
        let child = crossover(&population[a].genome, &population[b].genome, rng);
        let child = if cfg.mutation { mutate(&child, rng).0 } else { child };
        let lineage = if selection.rank_of(a) < selection.rank_of(b) { a } else { b };
        let parent = &population[lineage];
        next.push(Individual::new(child, clone_model(&parent.model), carried(parent)));
    }
    Ok(next)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndividualReport {
    /// 1-based position in the generation.
    pub individual: usize,
    pub genome: Genome,
    pub evaluation: Evaluation,
    pub loss_prev: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationReport {
    /// 1-based.
    pub generation: usize,
    pub individuals: Vec<IndividualReport>,
    /// 0-based index of the lowest validation MAE.
    pub best: usize,
}

impl GenerationReport {
    pub fn from_population(generation: usize, population: &[Individual]) -> Result<Self, GaError> {
        let individuals = population
            .iter()
            .enumerate()
            .map(|(i, ind)| {
                Ok(IndividualReport {
                    individual: i + 1,
                    genome: ind.genome,
                    evaluation: ind.evaluation.ok_or(GaError::UnevaluatedPopulation(i))?,
                    loss_prev: ind.loss_prev,
                })
            })
            .collect::<Result<Vec<_>, GaError>>()?;
        Ok(Self {
            generation,
            best: best_index(population)?,
            individuals,
        })
    }
}

/// Lowest validation MAE; the first one wins ties.
pub fn best_index(population: &[Individual]) -> Result<usize, GaError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, ind) in population.iter().enumerate() {
        let mae = ind.evaluation.ok_or(GaError::UnevaluatedPopulation(i))?.val_mae;
        if best.is_none_or(|(_, b)| mae < b) {
            best = Some((i, mae));
        }
    }
    best.map(|(i, _)| i).ok_or(GaError::InsufficientParents(0))
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub reports: Vec<GenerationReport>,
    /// Lowest validation MAE of the last generation.
    pub best: Individual,
}

/// Builds the base model from `base_spec` and evolves it for
/// `cfg.generations` generations.
pub fn run_evolution(
    base_spec: &ModelSpec,
    cfg: &GaConfig,
    train: &WindowedDataset,
    val: &WindowedDataset,
) -> Result<Evolution, GaError> {
    let base = build_model(base_spec)?;
    evolve_from(&base, cfg, train, val)
}

pub fn evolve_from(
    base: &Model,
    cfg: &GaConfig,
    train: &WindowedDataset,
    val: &WindowedDataset,
) -> Result<Evolution, GaError> {
    cfg.validate()?;
    let mut population = init_population(base, cfg)?;
    let mut reports = Vec::with_capacity(cfg.generations);
    for generation in 0..cfg.generations {
        evaluate_generation(&mut population, train, val, cfg, generation)?;
        reports.push(GenerationReport::from_population(generation + 1, &population)?);
        if generation + 1 < cfg.generations {
            population = next_generation(&population, cfg, &mut breeding_rng(cfg, generation))?;
        }
    }
    let best = best_index(&population)?;
    Ok(Evolution {
        reports,
        best: population.swap_remove(best),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CellType;
    use crate::nn::ParamSet;

    fn tiny_model() -> Model {
        build_model(&ModelSpec {
            hidden_dims: vec![2, 2],
            window_len: 2,
            n_features: 2,
            ..ModelSpec::new(CellType::Lstm, 1)
        })
        .unwrap()
    }

    fn with_delta(genome: Genome, delta: f64) -> Individual {
        let mut ind = Individual::new(genome, tiny_model(), 0.0);
        ind.evaluation = Some(Evaluation {
            train_mse: 0.0,
            train_mae: 0.0,
            val_mse: 0.0,
            val_mae: delta,
            loss_current: delta,
            delta_loss: delta,
        });
        ind
    }

    fn g(lr: f64, b: usize) -> Genome {
        Genome {
            learning_rate: lr,
            batch_size: b,
        }
    }

    #[test]
    fn mutation_arithmetic() {
        let base = g(0.001, 64);
        assert!((MutationFactor::UP.apply(base).learning_rate - 0.0011).abs() < 1e-18);
        assert!((MutationFactor::DOWN.apply(base).learning_rate - 0.0009).abs() < 1e-18);
        assert_eq!(MutationFactor::KEEP.apply(base), base);
        assert_eq!(MutationFactor::UP.apply(base).batch_size, 64);
    }

    #[test]
    fn crossover_of_identical_parents() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = g(1e-3, 64);
        for _ in 0..20 {
            assert_eq!(crossover(&p, &p, &mut rng), p);
        }
    }

    #[test]
    fn crossover_stays_in_combinations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, b) = (g(1e-3, 64), g(1e-4, 128));
        for _ in 0..100 {
            let c = crossover(&a, &b, &mut rng);
            assert!([1e-3, 1e-4].contains(&c.learning_rate));
            assert!([64, 128].contains(&c.batch_size));
        }
    }

    #[test]
    fn selection_order_and_ties() {
        let pop = vec![
            with_delta(g(1e-3, 32), -0.2),
            with_delta(g(1e-3, 32), -0.5),
            with_delta(g(1e-3, 32), 0.1),
        ];
        let s = select(&pop, 2).unwrap();
        assert_eq!(s.elites(), &[1, 0]);
        assert_eq!(s.parents(), &[1, 0, 2]);

        let flat = vec![with_delta(g(1e-3, 32), 0.0); 4];
        assert_eq!(select(&flat, 2).unwrap().elites(), &[0, 1]);
        let none = select(&flat, 0).unwrap();
        assert!(none.elites().is_empty());
        assert_eq!(none.parents().len(), 4);
    }

    #[test]
    fn selection_needs_evaluation() {
        let pop = vec![with_delta(g(1e-3, 32), 0.0), Individual::new(g(1e-3, 32), tiny_model(), 0.0)];
        assert!(matches!(select(&pop, 1), Err(GaError::UnevaluatedPopulation(1))));
    }

    #[test]
    fn init_population_clones_base() {
        let base = tiny_model();
        let cfg = GaConfig::default();
        let pop = init_population(&base, &cfg).unwrap();
        assert_eq!(pop.len(), 10);
        assert!(pop.iter().all(|i| i.model.tensors() == base.tensors() && i.loss_prev == 0.0));
        let again = init_population(&base, &cfg).unwrap();
        let genomes = |p: &[Individual]| p.iter().map(|i| i.genome).collect::<Vec<_>>();
        assert_eq!(genomes(&pop), genomes(&again));

        let single = GaConfig {
            lr_pool: vec![1e-3],
            batch_pool: vec![64],
            ..GaConfig::default()
        };
        assert!(init_population(&base, &single)
            .unwrap()
            .iter()
            .all(|i| i.genome == g(1e-3, 64)));
    }

    #[test]
    fn config_validation() {
        let bad = [
            GaConfig { elite_count: 10, ..GaConfig::default() },
            GaConfig { lr_pool: vec![], ..GaConfig::default() },
            GaConfig { batch_pool: vec![0], ..GaConfig::default() },
            GaConfig { lr_pool: vec![-1e-3], ..GaConfig::default() },
            GaConfig { generations: 0, ..GaConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(GaError::InvalidConfig(_))), "{cfg:?}");
        }
    }

    #[test]
    fn next_generation_structure() {
        let pop: Vec<Individual> = (0..10)
            .map(|i| with_delta(g(1e-3 * (i + 1) as f64, 32 * (i + 1)), 0.05 - 0.01 * i as f64))
            .collect();
        let cfg = GaConfig::default();
        let next = next_generation(&pop, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(next.len(), 10);
        // Most negative deltas belong to the last two individuals.
        assert_eq!(next[0].genome, pop[9].genome);
        assert_eq!(next[1].genome, pop[8].genome);
        assert_eq!(next[0].loss_prev, pop[9].loss_current().unwrap());
        for child in &next[2..] {
            assert!(child.evaluation.is_none());
            let lr_ok = pop.iter().any(|p| {
                [MutationFactor::DOWN, MutationFactor::KEEP, MutationFactor::UP]
                    .iter()
                    .any(|f| f.apply(p.genome).learning_rate == child.genome.learning_rate)
            });
            assert!(lr_ok, "{:?}", child.genome);
            assert!(pop.iter().any(|p| p.genome.batch_size == child.genome.batch_size));
        }
    }

    #[test]
    fn breeding_needs_two() {
        let pop = vec![with_delta(g(1e-3, 32), 0.0)];
        let cfg = GaConfig {
            population_size: 1,
            elite_count: 0,
            ..GaConfig::default()
        };
        assert!(matches!(
            next_generation(&pop, &cfg, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(GaError::InsufficientParents(1))
        ));
    }

    #[test]
    fn seeds_differ_per_stream() {
        let cfg = GaConfig::default();
        assert_ne!(training_seed(&cfg, 0, 0), training_seed(&cfg, 0, 1));
        assert_ne!(training_seed(&cfg, 0, 1), training_seed(&cfg, 1, 0));
        assert_eq!(training_seed(&cfg, 3, 4), training_seed(&cfg, 3, 4));
    }
}
