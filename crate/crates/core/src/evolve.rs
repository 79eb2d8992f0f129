//! Island-model evolutionary search over selector parameters.
//!
//! A genome is a fixed-length real vector: five quality weights, the change
//! and diversity coefficients, an integer-quantized suppression gap, the
//! motion weight, and three {0,1} flags (cumulative slotting, peak
//! alignment, motion term). Islands evolve independently under tournament
//! selection and truncation survival, exchanging their best member around a
//! ring at a fixed interval. Every random draw comes from a stream keyed by
//! (seed, island, generation), so runs are reproducible and a run resumed
//! from a checkpoint is bit-identical to one that never stopped, provided
//! timing is deterministic.

use crate::metrics::{combined_objective, EvidenceInstance, MetricError, ObjectiveConfig, SelectionOutcome};
use crate::parallel;
use crate::selector::{psfr_select, SelectionRequest, SelectorError, SelectorParams, SlotMode};
use crate::signals::SignalTrack;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("invalid genome: {0}")]
    InvalidGenome(String),
    #[error("no cached signals for video {0}")]
    MissingSignals(String),
    #[error("invalid evolve config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint {}: {reason}", path.display())]
    Checkpoint { path: PathBuf, reason: String },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const GENE_COUNT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GeneKind {
    Real,
    Integer,
    Flag,
}

const GENE_BOUNDS: [(f64, f64); GENE_COUNT] = [
    (0.0, 1.0),  // w_corners
    (0.0, 1.0),  // w_central
    (0.0, 1.0),  // w_edge
    (0.0, 1.0),  // w_entropy
    (0.0, 1.0),  // w_low
    (0.0, 2.0),  // w_change
    (0.0, 2.0),  // lambda_div
    (0.0, 30.0), // nms_gap
    (0.0, 1.0),  // w_motion
    (0.0, 1.0),  // slot_cumulative
    (0.0, 1.0),  // peak_align
    (0.0, 1.0),  // use_motion
];

const GENE_KINDS: [GeneKind; GENE_COUNT] = [
    GeneKind::Real,
    GeneKind::Real,
    GeneKind::Real,
    GeneKind::Real,
    GeneKind::Real,
    GeneKind::Real,
    GeneKind::Real,
    GeneKind::Integer,
    GeneKind::Real,
    GeneKind::Flag,
    GeneKind::Flag,
    GeneKind::Flag,
];

pub const GENE_NAMES: [&str; GENE_COUNT] = [
    "w_corners",
    "w_central",
    "w_edge",
    "w_entropy",
    "w_low",
    "w_change",
    "lambda_div",
    "nms_gap",
    "w_motion",
    "slot_cumulative",
    "peak_align",
    "use_motion",
];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Genome {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<u64>,
    pub genes: [f64; GENE_COUNT],
}

impl Genome {
    pub fn new(id: u64, genes: [f64; GENE_COUNT]) -> Self {
        Genome {
            id,
            parent_id: None,
            genes,
        }
    }
}

/// The all-zero genome: zero weights, uniform-time slots, no peak
/// alignment, no suppression. Every frame scores identically, so the
/// selector degenerates to one pick at the start of each equal time slot.
pub fn uniform_equivalent_genome(id: u64) -> Genome {
    Genome::new(id, [0.0; GENE_COUNT])
}

/// Encodes selector parameters as a genome. Exact for every value the
/// decoder can produce, since f32 widens losslessly to f64.
pub fn params_to_genome(id: u64, params: &SelectorParams) -> Genome {
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    Genome::new(
        id,
        [
            params.w[0] as f64,
            params.w[1] as f64,
            params.w[2] as f64,
            params.w[3] as f64,
            params.w[4] as f64,
            params.w_change as f64,
            params.lambda_div as f64,
            params.nms_gap as f64,
            params.w_motion as f64,
            flag(params.slot_mode == SlotMode::CumulativeChange),
            flag(params.peak_align),
            flag(params.use_motion),
        ],
    )
}

/// Decodes a genome into selector parameters, rejecting out-of-bounds
/// genes, fractional values in the integer gene, and flags that are not
/// exactly 0 or 1.
pub fn genome_to_params(genome: &Genome) -> Result<SelectorParams, EvolveError> {
    for (i, &g) in genome.genes.iter().enumerate() {
        let (lo, hi) = GENE_BOUNDS[i];
        if !g.is_finite() || g < lo || g > hi {
            return Err(EvolveError::InvalidGenome(format!(
                "gene {} ({}) = {g} outside [{lo}, {hi}]",
                i, GENE_NAMES[i]
            )));
        }
        match GENE_KINDS[i] {
            GeneKind::Integer if g.fract() != 0.0 => {
                return Err(EvolveError::InvalidGenome(format!(
                    "gene {} ({}) = {g} must be an integer",
                    i, GENE_NAMES[i]
                )));
            }
            GeneKind::Flag if g != 0.0 && g != 1.0 => {
                return Err(EvolveError::InvalidGenome(format!(
                    "gene {} ({}) = {g} must be 0 or 1",
                    i, GENE_NAMES[i]
                )));
            }
            _ => {}
        }
    }
    let g = &genome.genes;
    Ok(SelectorParams {
        w: [
            g[0] as f32,
            g[1] as f32,
            g[2] as f32,
            g[3] as f32,
            g[4] as f32,
        ],
        w_change: g[5] as f32,
        lambda_div: g[6] as f32,
        nms_gap: g[7] as usize,
        slot_mode: if g[9] == 1.0 {
            SlotMode::CumulativeChange
        } else {
            SlotMode::UniformTime
        },
        peak_align: g[10] == 1.0,
        use_motion: g[11] == 1.0,
        w_motion: g[8] as f32,
    })
}

/// Gaussian perturbation scaled by each gene's range, clamped to bounds.
/// The integer gene is rounded after clamping; flags flip with probability
/// `flip_prob`. With `sigma = 0` and `flip_prob = 0` the child's genes are
/// bit-identical to the parent's.
pub fn mutate(
    parent: &Genome,
    sigma: f64,
    flip_prob: f64,
    rng: &mut ChaCha8Rng,
    child_id: u64,
) -> Genome {
    let mut genes = parent.genes;
    for (i, gene) in genes.iter_mut().enumerate() {
        let (lo, hi) = GENE_BOUNDS[i];
        match GENE_KINDS[i] {
            GeneKind::Flag => {
                let u: f64 = rng.random();
                if u < flip_prob {
                    *gene = 1.0 - *gene;
                }
            }
            kind => {
                let n: f64 = rng.sample(StandardNormal);
                *gene = (*gene + n * sigma * (hi - lo)).clamp(lo, hi);
                if kind == GeneKind::Integer {
                    *gene = gene.round();
                }
            }
        }
    }
    Genome {
        id: child_id,
        parent_id: Some(parent.id),
        genes,
    }
}

fn random_genome(rng: &mut ChaCha8Rng, id: u64) -> Genome {
    let mut genes = [0.0; GENE_COUNT];
    for (i, gene) in genes.iter_mut().enumerate() {
        let (lo, hi) = GENE_BOUNDS[i];
        *gene = match GENE_KINDS[i] {
            GeneKind::Real => rng.random_range(lo..=hi),
            GeneKind::Integer => rng.random_range((lo as i64)..=(hi as i64)) as f64,
            GeneKind::Flag => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    0.0
                }
            }
        };
    }
    Genome::new(id, genes)
}

/// One independent random stream per (seed, island, generation); island
/// init uses generation 0 and evolution steps use 1-based generations.
fn stream_rng(seed: u64, island: u64, generation: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&island.to_le_bytes());
    key[16..24].copy_from_slice(&generation.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TimingMode {
    /// Selection latency is measured and fed into the time penalty.
    Wallclock,
    /// Latency is pinned to zero so scores depend only on the picks.
    #[default]
    DeterministicZero,
}

/// Everything a fitness evaluation needs: cached signal tracks keyed by
/// video id, the instances (all with supervision), and the objective.
pub struct EvalContext<'a> {
    pub tracks: &'a BTreeMap<String, SignalTrack>,
    pub instances: &'a [EvidenceInstance],
    pub objective: ObjectiveConfig,
    pub timing: TimingMode,
}

/// Runs the selector with the genome's parameters on every instance and
/// returns the combined objective. Selector failures on an instance score
/// zero for that instance rather than aborting the evaluation.
pub fn evaluate_genome(genome: &Genome, ctx: &EvalContext) -> Result<f64, EvolveError> {
    let params = genome_to_params(genome)?;
    let mut results = Vec::with_capacity(ctx.instances.len());
    for inst in ctx.instances {
        let track = ctx
            .tracks
            .get(&inst.video_id)
            .ok_or_else(|| EvolveError::MissingSignals(inst.video_id.clone()))?;
        let req = SelectionRequest {
            track,
            candidates: &inst.candidates,
            budget: ctx.objective.budget_k,
        };
        let (indices, elapsed_s) = match psfr_select(&req, &params) {
            Ok(r) => {
                let elapsed = match ctx.timing {
                    TimingMode::Wallclock => r.elapsed_s,
                    TimingMode::DeterministicZero => 0.0,
                };
                (r.indices, elapsed)
            }
            // An unusable instance scores zero via the empty selection.
            Err(_) => (Vec::new(), 0.0),
        };
        results.push(SelectionOutcome {
            instance_id: inst.instance_id.clone(),
            indices,
            elapsed_s,
            valid: None,
        });
    }
    Ok(combined_objective(&results, ctx.instances, &ctx.objective)?.j)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvolveConfig {
    pub islands: usize,
    pub population: usize,
    pub generations: usize,
    pub sigma: f64,
    pub flip_prob: f64,
    pub migration_interval: usize,
    pub archive_size: usize,
    pub seed: u64,
    pub objective: ObjectiveConfig,
    pub timing: TimingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            islands: 4,
            population: 16,
            generations: 50,
            sigma: 0.1,
            flip_prob: 0.05,
            migration_interval: 5,
            archive_size: 10,
            seed: 0,
            objective: ObjectiveConfig::default(),
            timing: TimingMode::DeterministicZero,
            checkpoint_dir: None,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<(), EvolveError> {
        if self.islands == 0 {
            return Err(EvolveError::InvalidConfig("need at least one island".into()));
        }
        if self.population < 2 {
            return Err(EvolveError::InvalidConfig(
                "population must be at least 2".into(),
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(EvolveError::InvalidConfig(format!(
                "sigma must be finite and non-negative, got {}",
                self.sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(EvolveError::InvalidConfig(format!(
                "flip_prob must lie in [0, 1], got {}",
                self.flip_prob
            )));
        }
        if self.migration_interval == 0 {
            return Err(EvolveError::InvalidConfig(
                "migration_interval must be at least 1".into(),
            ));
        }
        if self.archive_size == 0 {
            return Err(EvolveError::InvalidConfig(
                "archive_size must be at least 1".into(),
            ));
        }
        self.objective.validate()?;
        Ok(())
    }

    /// Identity for resume compatibility: everything except where
    /// checkpoints are written.
    fn core(&self) -> EvolveConfig {
        EvolveConfig {
            checkpoint_dir: None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub j: f64,
}

pub const CHECKPOINT_SCHEMA: u32 = 1;

/// Full search state; serialized as the per-generation checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvolveState {
    pub schema_version: u32,
    pub config: EvolveConfig,
    /// Completed generations (0 right after initialization).
    pub generation: usize,
    pub islands: Vec<Vec<Individual>>,
    pub archive: Vec<Individual>,
    pub history: Vec<f64>,
    pub evaluations: u64,
    pub uniform_j: f64,
    pub next_id: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvolveReport {
    pub best_params: SelectorParams,
    #[serde(rename = "best_J")]
    pub best_j: f64,
    pub uniform_j: f64,
    pub history: Vec<f64>,
    pub evaluations: u64,
    pub config: EvolveConfig,
    pub archive: Vec<Individual>,
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), EvolveError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))?;
    serde_json::to_writer_pretty(&mut tmp, value)?;
    tmp.persist(path).map_err(|e| EvolveError::Io(e.error))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<EvolveState, EvolveError> {
    let data = std::fs::read(path)?;
    let state: EvolveState =
        serde_json::from_slice(&data).map_err(|e| EvolveError::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    if state.schema_version != CHECKPOINT_SCHEMA {
        return Err(EvolveError::Checkpoint {
            path: path.to_path_buf(),
            reason: format!(
                "schema version {} is not {CHECKPOINT_SCHEMA}",
                state.schema_version
            ),
        });
    }
    Ok(state)
}

fn checkpoint_path(dir: &Path, generation: usize) -> PathBuf {
    dir.join(format!("checkpoint-{generation:04}.json"))
}

/// Descending by fitness, ascending genome id on ties.
fn by_fitness_desc(a: &Individual, b: &Individual) -> std::cmp::Ordering {
    b.j.partial_cmp(&a.j)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.genome.id.cmp(&b.genome.id))
}

fn evaluate_all(genomes: Vec<Genome>, ctx: &EvalContext) -> Result<Vec<Individual>, EvolveError> {
    let scored = parallel::map_collect(&genomes, |g| evaluate_genome(g, ctx));
    genomes
        .into_iter()
        .zip(scored)
        .map(|(genome, j)| Ok(Individual { genome, j: j? }))
        .collect()
}

fn global_best(islands: &[Vec<Individual>]) -> &Individual {
    islands
        .iter()
        .flatten()
        .min_by(|a, b| by_fitness_desc(a, b))
        .expect("populations are never empty")
}

fn merge_archive(archive: &mut Vec<Individual>, fresh: &[Individual], cap: usize) {
    let mut pool: Vec<Individual> = archive.drain(..).collect();
    pool.extend_from_slice(fresh);
    pool.sort_by(by_fitness_desc);
    for ind in pool {
        if archive.len() == cap {
            break;
        }
        if !archive.iter().any(|a| a.genome.genes == ind.genome.genes) {
            archive.push(ind);
        }
    }
}

fn init_state(cfg: &EvolveConfig, ctx: &EvalContext) -> Result<EvolveState, EvolveError> {
    let mut next_id = 0u64;
    let mut genomes: Vec<Genome> = Vec::with_capacity(cfg.islands * cfg.population);
    for island in 0..cfg.islands {
        let mut rng = stream_rng(cfg.seed, island as u64, 0);
        genomes.push(uniform_equivalent_genome(next_id));
        next_id += 1;
        for _ in 1..cfg.population {
            genomes.push(random_genome(&mut rng, next_id));
            next_id += 1;
        }
    }
    let evaluations = genomes.len() as u64;
    let individuals = evaluate_all(genomes, ctx)?;
    // Every island seeds the same uniform-equivalent genome; read its score
    // off the first island before sorting disturbs the layout.
    let uniform_j = individuals[0].j;
    let mut islands: Vec<Vec<Individual>> = individuals
        .chunks(cfg.population)
        .map(|c| {
            let mut isl = c.to_vec();
            isl.sort_by(by_fitness_desc);
            isl
        })
        .collect();
    let mut archive = Vec::new();
    let flat: Vec<Individual> = islands.iter().flatten().cloned().collect();
    merge_archive(&mut archive, &flat, cfg.archive_size);
    for isl in &mut islands {
        isl.sort_by(by_fitness_desc);
    }
    let best = global_best(&islands).j;
    Ok(EvolveState {
        schema_version: CHECKPOINT_SCHEMA,
        config: cfg.clone(),
        generation: 0,
        islands,
        archive,
        history: vec![best],
        evaluations,
        uniform_j,
        next_id,
    })
}

/// Runs (or resumes) the search and returns the report plus final state.
///
/// History holds the global best after initialization and after each
/// generation; with parents always eligible to survive it never decreases.
pub fn run_evolution(
    cfg: &EvolveConfig,
    ctx: &EvalContext,
    resume: Option<EvolveState>,
) -> Result<(EvolveReport, EvolveState), EvolveError> {
    cfg.validate()?;
    let mut state = match resume {
        Some(state) => {
            if state.config.core() != cfg.core() {
                return Err(EvolveError::InvalidConfig(
                    "checkpoint was produced under a different configuration".into(),
                ));
            }
            if state.generation > cfg.generations {
                return Err(EvolveError::InvalidConfig(format!(
                    "checkpoint is at generation {} but the run stops at {}",
                    state.generation, cfg.generations
                )));
            }
            let mut state = state;
            state.config = cfg.clone();
            state
        }
        None => {
            let state = init_state(cfg, ctx)?;
            if let Some(dir) = &cfg.checkpoint_dir {
                write_json_atomic(&checkpoint_path(dir, 0), &state)?;
            }
            state
        }
    };

    while state.generation < cfg.generations {
        let generation = state.generation + 1;

        // Breed deterministically: one stream per island per generation.
        let mut offspring: Vec<Genome> = Vec::with_capacity(cfg.islands * cfg.population);
        for island in 0..cfg.islands {
            let mut rng = stream_rng(cfg.seed, island as u64, generation as u64);
            let parents = &state.islands[island];
            for o in 0..cfg.population {
                let a = rng.random_range(0..parents.len());
                let b = rng.random_range(0..parents.len());
                let winner = if parents[a].j >= parents[b].j {
                    &parents[a]
                } else {
                    &parents[b]
                };
                let child_id = state.next_id + (island * cfg.population + o) as u64;
                offspring.push(mutate(
                    &winner.genome,
                    cfg.sigma,
                    cfg.flip_prob,
                    &mut rng,
                    child_id,
                ));
            }
        }
        state.next_id += (cfg.islands * cfg.population) as u64;
        state.evaluations += offspring.len() as u64;
        let children = evaluate_all(offspring, ctx)?;

        // Truncation survival over parents plus children keeps the best
        // individual unconditionally, so elites persist.
        for (island, kids) in children.chunks(cfg.population).enumerate() {
            let pool = &mut state.islands[island];
            pool.extend_from_slice(kids);
            pool.sort_by(by_fitness_desc);
            pool.truncate(cfg.population);
        }

        // Ring migration: every island's best replaces its neighbor's
        // worst, all transfers based on the pre-migration populations.
        if cfg.islands > 1 && generation % cfg.migration_interval == 0 {
            let bests: Vec<Individual> = state
                .islands
                .iter()
                .map(|isl| isl[0].clone())
                .collect();
            for (i, best) in bests.into_iter().enumerate() {
                let dst = (i + 1) % cfg.islands;
                let worst = state.islands[dst].len() - 1;
                state.islands[dst][worst] = best;
                state.islands[dst].sort_by(by_fitness_desc);
            }
        }

        merge_archive(&mut state.archive, &children, cfg.archive_size);
        state.history.push(global_best(&state.islands).j);
        state.generation = generation;

        if let Some(dir) = &cfg.checkpoint_dir {
            write_json_atomic(&checkpoint_path(dir, generation), &state)?;
        }
    }

    let best = global_best(&state.islands).clone();
    let report = EvolveReport {
        best_params: genome_to_params(&best.genome)?,
        best_j: best.j,
        uniform_j: state.uniform_j,
        history: state.history.clone(),
        evaluations: state.evaluations,
        config: cfg.clone(),
        archive: state.archive.clone(),
    };
    Ok((report, state))
}
