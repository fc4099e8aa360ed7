//! Rotating classwise greedy over imagewise (or objectwise) prototypes.
//!
//! For a candidate `i` of class `c` the score is
//!
//! ```text
//! s(i, c) = lambda_c * sum_{j in P_c} cos(p_i, p_j) - sum_{j in Q_c} cos(p_i, q_j)
//! ```
//!
//! where `P_c` is the unselected pool (including `i` itself) and `Q_c` the
//! prototypes of already selected images. Both sums are cached per candidate:
//! a pick moves every prototype of the picked image from `P` to `Q`, so each
//! remaining candidate loses one term from its representativeness sum and
//! gains the same term in its diversity sum.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{dot, unit, Dataset};
use crate::prototypes::{Prototype, PrototypeIndex};
use crate::selection::{Lambda, Method, PickLog, SelectionConfig, SelectionResult};

/// Pools smaller than this are updated on the calling thread.
const PARALLEL_MIN_POOL: usize = 8192;

/// Scores closer to the maximum than `TIE_TOLERANCE * (1 + lambda * |P_c| + |Q_c|)`
/// count as tied; the bound scales with the largest magnitude a score can take.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
struct ClassPool {
    dim: usize,
    /// Unit prototype vectors, row-major, in index order (ascending image id).
    units: Vec<f64>,
    image_ids: Vec<usize>,
    in_pool: Vec<bool>,
    pool_size: usize,
    rep: Vec<f64>,
    div: Vec<f64>,
}

impl ClassPool {
    fn new(protos: &[Prototype], eligible: &[bool], dim: usize) -> Result<Self> {
        let n = protos.len();
        let mut units = Vec::with_capacity(n * dim);
        for p in protos {
            units.extend(unit(&p.vector)?);
        }
        let in_pool: Vec<bool> = protos.iter().map(|p| eligible[p.image_id]).collect();
        let mut pool = Self {
            dim,
            units,
            image_ids: protos.iter().map(|p| p.image_id).collect(),
            pool_size: in_pool.iter().filter(|&&b| b).count(),
            in_pool,
            rep: vec![0.0; n],
            div: vec![0.0; n],
        };
        // Symmetric fill; each sum still accumulates its partners in ascending order.
        for i in 0..n {
            if !pool.in_pool[i] {
                continue;
            }
            for j in i..n {
                if !pool.in_pool[j] {
                    continue;
                }
                let c = dot(pool.unit(i), pool.unit(j));
                pool.rep[i] += c;
                if j != i {
                    pool.rep[j] += c;
                }
            }
        }
        Ok(pool)
    }

    fn unit(&self, pos: usize) -> &[f64] {
        &self.units[pos * self.dim..(pos + 1) * self.dim]
    }

    fn score(&self, pos: usize, lambda: f64) -> f64 {
        lambda * self.rep[pos] - self.div[pos]
    }

    /// Highest score in the pool; ties (within [`TIE_TOLERANCE`]) go to the
    /// lowest position, i.e. the lowest image id.
    fn best(&self, lambda: f64) -> Option<usize> {
        let live = || (0..self.in_pool.len()).filter(|&p| self.in_pool[p]);
        let max = live().map(|p| self.score(p, lambda)).fold(f64::NEG_INFINITY, f64::max);
        let retired = self.in_pool.len() - self.pool_size;
        let tol = TIE_TOLERANCE * (1.0 + lambda.abs() * self.pool_size as f64 + retired as f64);
        live().find(|&p| self.score(p, lambda) >= max - tol)
    }

    /// Moves `pos` from P to Q and updates every remaining candidate's sums.
    fn retire(&mut self, pos: usize) {
        debug_assert!(self.in_pool[pos]);
        self.in_pool[pos] = false;
        self.pool_size -= 1;
        let dim = self.dim;
        let retired: Vec<f64> = self.unit(pos).to_vec();
        let units = &self.units;
        let in_pool = &self.in_pool;
        let update = |(j, (rep, div)): (usize, (&mut f64, &mut f64))| {
            if in_pool[j] {
                let c = dot(&units[j * dim..(j + 1) * dim], &retired);
                *rep -= c;
                *div += c;
            }
        };
        if self.rep.len() < PARALLEL_MIN_POOL {
            self.rep
                .iter_mut()
                .zip(self.div.iter_mut())
                .enumerate()
                .for_each(update);
        } else {
            self.rep
                .par_iter_mut()
                .zip(self.div.par_iter_mut())
                .enumerate()
                .with_min_len(1024)
                .for_each(update);
        }
    }
}

/// Greedy state: per-class pools `P_c` / `Q_c` with cached sums, and the
/// selected image set.
#[derive(Debug, Clone)]
pub struct SelectionState<'a> {
    index: &'a PrototypeIndex,
    pools: Vec<ClassPool>,
    /// `Q_c` membership per class
    retired: Vec<Vec<bool>>,
    selected: Vec<bool>,
    order: Vec<usize>,
}

impl<'a> SelectionState<'a> {
    pub fn new(dataset: &Dataset, index: &'a PrototypeIndex, eligible: &[bool]) -> Result<Self> {
        let pools = (0..index.num_classes())
            .map(|c| ClassPool::new(index.class(c), eligible, dataset.dim()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            index,
            retired: pools.iter().map(|p| vec![false; p.in_pool.len()]).collect(),
            pools,
            selected: vec![false; index.num_images()],
            order: Vec::new(),
        })
    }

    pub fn index(&self) -> &PrototypeIndex {
        self.index
    }

    pub fn pool_size(&self, class_id: usize) -> usize {
        self.pools[class_id].pool_size
    }

    pub fn pool_sizes(&self) -> Vec<usize> {
        self.pools.iter().map(|p| p.pool_size).collect()
    }

    pub fn in_pool(&self, class_id: usize, pos: usize) -> bool {
        self.pools[class_id].in_pool[pos]
    }

    pub fn in_selected(&self, class_id: usize, pos: usize) -> bool {
        self.retired[class_id][pos]
    }

    pub fn is_selected(&self, image_id: usize) -> bool {
        self.selected[image_id]
    }

    /// Selected images in pick order.
    pub fn selected(&self) -> &[usize] {
        &self.order
    }

    /// Cached `sum_{j in P_c} cos(p_pos, p_j)`, self term included.
    pub fn rep_sum(&self, class_id: usize, pos: usize) -> f64 {
        self.pools[class_id].rep[pos]
    }

    /// Cached `sum_{j in Q_c} cos(p_pos, q_j)`.
    pub fn div_sum(&self, class_id: usize, pos: usize) -> f64 {
        self.pools[class_id].div[pos]
    }

    pub fn recompute_rep_sum(&self, class_id: usize, pos: usize) -> f64 {
        let pool = &self.pools[class_id];
        (0..pool.in_pool.len())
            .filter(|&j| pool.in_pool[j])
            .map(|j| dot(pool.unit(pos), pool.unit(j)))
            .sum()
    }

    pub fn recompute_div_sum(&self, class_id: usize, pos: usize) -> f64 {
        let pool = &self.pools[class_id];
        (0..pool.in_pool.len())
            .filter(|&j| self.retired[class_id][j])
            .map(|j| dot(pool.unit(pos), pool.unit(j)))
            .sum()
    }

    pub fn score(&self, class_id: usize, pos: usize, lambda: f64) -> Result<f64> {
        let pool = self
            .pools
            .get(class_id)
            .ok_or_else(|| Error::InvalidConfig(format!("no class {class_id}")))?;
        if !pool.in_pool.get(pos).copied().unwrap_or(false) {
            return Err(Error::InvalidConfig(format!(
                "candidate {pos} of class {class_id} is not in the unselected pool"
            )));
        }
        Ok(pool.score(pos, lambda))
    }

    /// Position of the argmax candidate of a class, if its pool is non-empty.
    pub fn best(&self, class_id: usize, lambda: f64) -> Option<usize> {
        self.pools[class_id].best(lambda)
    }

    pub fn image_of(&self, class_id: usize, pos: usize) -> usize {
        self.pools[class_id].image_ids[pos]
    }

    /// Adds an image to the selection and retires all of its prototypes.
    pub fn pick(&mut self, image_id: usize) {
        assert!(!self.selected[image_id], "image {image_id} picked twice");
        self.selected[image_id] = true;
        self.order.push(image_id);
        for &(c, pos) in self.index.image_members(image_id) {
            if self.pools[c].in_pool[pos] {
                self.pools[c].retire(pos);
                self.retired[c][pos] = true;
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepTrace {
    pub step: usize,
    pub class_id: usize,
    pub picked_image_id: usize,
    pub pool_sizes: Vec<usize>,
    pub micros: u64,
}

pub fn select(dataset: &Dataset, index: &PrototypeIndex, config: &SelectionConfig) -> Result<SelectionResult> {
    select_traced(dataset, index, config, |_| {})
}

/// Like [`select`], calling `trace` after every pick.
pub fn select_traced(
    dataset: &Dataset,
    index: &PrototypeIndex,
    config: &SelectionConfig,
    trace: impl FnMut(&StepTrace),
) -> Result<SelectionResult> {
    config.validate(dataset)?;
    if index.mode() != config.candidate_mode {
        return Err(Error::InvalidConfig(format!(
            "prototypes built as {:?}, config asks for {:?}",
            index.mode(),
            config.candidate_mode
        )));
    }
    let eligible = config.eligible_images(dataset);
    let state = SelectionState::new(dataset, index, &eligible)?;
    run_greedy(state, config, trace)
}

fn run_greedy(
    mut state: SelectionState<'_>,
    config: &SelectionConfig,
    mut trace: impl FnMut(&StepTrace),
) -> Result<SelectionResult> {
    let order = config.class_order(state.index.num_classes());
    let mut log = PickLog::new(state.index.num_images(), state.index.num_classes());
    'rounds: loop {
        let mut progressed = false;
        for &c in &order {
            if log.len() >= config.target_count {
                break 'rounds;
            }
            let started = Instant::now();
            let Some(pos) = state.best(c, config.lambda.for_class(c)) else {
                continue;
            };
            let image = state.image_of(c, pos);
            state.pick(image);
            let micros = started.elapsed().as_micros() as u64;
            log.push(image, Some(c));
            if config.record_timing {
                log.push_micros(micros);
            }
            trace(&StepTrace {
                step: log.len() - 1,
                class_id: c,
                picked_image_id: image,
                pool_sizes: state.pool_sizes(),
                micros,
            });
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
    let method = match config.candidate_mode {
        crate::prototypes::CandidateMode::Imagewise => Method::Csod,
        crate::prototypes::CandidateMode::Objectwise => Method::CsodObjectwise,
    };
    Ok(log.finish(method, config))
}

/// One run per lambda over a shared prototype index and shared initial sums.
pub fn sweep_lambda(
    dataset: &Dataset,
    index: &PrototypeIndex,
    config: &SelectionConfig,
    lambdas: &[f64],
) -> Result<Vec<SelectionResult>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidConfig("empty lambda list".into()));
    }
    let configs: Vec<SelectionConfig> = lambdas
        .iter()
        .map(|&l| SelectionConfig {
            lambda: Lambda::Global(l),
            ..config.clone()
        })
        .collect();
    for c in &configs {
        c.validate(dataset)?;
    }
    let eligible = config.eligible_images(dataset);
    let initial = SelectionState::new(dataset, index, &eligible)?;
    configs
        .par_iter()
        .map(|c| run_greedy(initial.clone(), c, |_| {}))
        .collect()
}
