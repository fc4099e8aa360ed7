//! Comparison methods: random variants, herding, k-center greedy and
//! facility-location greedy.
//!
//! Image-level methods use one vector per image, the mean of its object
//! features. Rotating methods visit classes in the configured order and give
//! each class one pick per turn from the untaken images that contain it.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{dot, norm, unit, Dataset};
use crate::prototypes::image_feature;
use crate::selection::{AnnotationRange, Method, PickLog, SelectionConfig, SelectionResult};

pub const RETRY_BUDGET: usize = 10_000;

/// Whole-image vectors indexed by image id.
pub fn image_features(dataset: &Dataset) -> Vec<Vec<f64>> {
    dataset
        .manifest
        .images_by_id()
        .map(|img| image_feature(dataset, &img.objects))
        .collect()
}

fn class_pools(dataset: &Dataset, eligible: &[bool]) -> Vec<Vec<usize>> {
    let mut pools = vec![Vec::new(); dataset.num_classes()];
    for img in dataset.manifest.images_by_id() {
        if eligible[img.id] {
            for c in img.classes() {
                pools[c].push(img.id);
            }
        }
    }
    pools
}

fn annotation_total(dataset: &Dataset, ids: &[usize]) -> usize {
    ids.iter()
        .map(|&id| dataset.manifest.image(id).map_or(0, |i| i.objects.len()))
        .sum()
}

/// Class rotation. `choose(class, available)` returns an index into
/// `available` (untaken images containing the class, ascending id). With
/// quotas, a class stops getting turns once it reaches its quota; if every
/// class is blocked before the target, the rotation continues without quotas.
fn rotate(
    dataset: &Dataset,
    config: &SelectionConfig,
    eligible: &[bool],
    mut quota: Option<Vec<usize>>,
    mut choose: impl FnMut(usize, &[usize]) -> usize,
) -> PickLog {
    let pools = class_pools(dataset, eligible);
    let order = config.class_order(dataset.num_classes());
    let mut log = PickLog::new(dataset.num_images(), dataset.num_classes());
    let mut turns = vec![0usize; dataset.num_classes()];
    'rounds: loop {
        let mut progressed = false;
        for &c in &order {
            if log.len() >= config.target_count {
                break 'rounds;
            }
            if quota.as_ref().is_some_and(|q| turns[c] >= q[c]) {
                continue;
            }
            let available: Vec<usize> = pools[c].iter().copied().filter(|&id| !log.is_taken(id)).collect();
            if available.is_empty() {
                continue;
            }
            let image = available[choose(c, &available)];
            log.push(image, Some(c));
            turns[c] += 1;
            progressed = true;
        }
        if !progressed {
            if quota.take().is_some() {
                continue;
            }
            break;
        }
    }
    log
}

fn uniform_pass(dataset: &Dataset, config: &SelectionConfig, eligible: &[bool], rng: &mut ChaCha8Rng) -> PickLog {
    rotate(dataset, config, eligible, None, |_, avail| {
        rng.random_range(0..avail.len())
    })
}

pub fn random_full(dataset: &Dataset, config: &SelectionConfig) -> Result<SelectionResult> {
    config.validate(dataset)?;
    let eligible = config.eligible_images(dataset);
    let ids: Vec<usize> = (0..dataset.num_images()).filter(|&i| eligible[i]).collect();
    let present: Vec<bool> = class_pools(dataset, &eligible).iter().map(|p| !p.is_empty()).collect();
    let n = config.target_count.min(ids.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..RETRY_BUDGET {
        let picked: Vec<usize> = sample(&mut rng, ids.len(), n).into_iter().map(|i| ids[i]).collect();
        let mut seen = vec![false; dataset.num_classes()];
        for &id in &picked {
            for obj in &dataset.manifest.image(id).unwrap().objects {
                seen[obj.class_id] = true;
            }
        }
        if seen.iter().zip(&present).all(|(&s, &p)| s || !p) {
            let mut log = PickLog::new(dataset.num_images(), dataset.num_classes());
            for id in picked {
                log.push(id, None);
            }
            return Ok(log.finish(Method::RandomFull, config));
        }
    }
    Err(Error::RetryBudgetExhausted {
        method: "random-full",
        retries: RETRY_BUDGET,
    })
}

pub fn random_uniform(dataset: &Dataset, config: &SelectionConfig) -> Result<SelectionResult> {
    config.validate(dataset)?;
    let eligible = config.eligible_images(dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(uniform_pass(dataset, config, &eligible, &mut rng).finish(Method::RandomUniform, config))
}

/// Per-class quotas proportional to `counts`, largest-remainder rounded so
/// they sum to `total`. Remainder ties go to the lower class id.
pub fn ratio_quotas(counts: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = counts.iter().sum();
    if sum == 0 {
        return vec![0; counts.len()];
    }
    let mut quotas: Vec<usize> = counts.iter().map(|&c| c * total / sum).collect();
    let assigned: usize = quotas.iter().sum();
    let mut by_remainder: Vec<usize> = (0..counts.len()).collect();
    by_remainder.sort_by_key(|&i| (std::cmp::Reverse(counts[i] * total % sum), i));
    for &i in by_remainder.iter().take(total - assigned) {
        quotas[i] += 1;
    }
    quotas
}

pub fn random_ratio(dataset: &Dataset, config: &SelectionConfig) -> Result<SelectionResult> {
    config.validate(dataset)?;
    let eligible = config.eligible_images(dataset);
    let counts: Vec<usize> = class_pools(dataset, &eligible).iter().map(Vec::len).collect();
    let quotas = ratio_quotas(&counts, config.target_count);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let log = rotate(dataset, config, &eligible, Some(quotas), |_, avail| {
        rng.random_range(0..avail.len())
    });
    Ok(log.finish(Method::RandomRatio, config))
}

/// Repeats the uniform rotation until the sample's total annotation count
/// falls in `config.annotation_range` (unbounded when unset).
pub fn random_annotation_range(dataset: &Dataset, config: &SelectionConfig) -> Result<SelectionResult> {
    config.validate(dataset)?;
    let range = config.annotation_range.unwrap_or(AnnotationRange { lo: 0, hi: None });
    let eligible = config.eligible_images(dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..RETRY_BUDGET {
        let log = uniform_pass(dataset, config, &eligible, &mut rng);
        let result = log.finish(Method::RandomAnnoRange, config);
        if range.contains(annotation_total(dataset, &result.selected_image_ids)) {
            return Ok(result);
        }
    }
    Err(Error::RetryBudgetExhausted {
        method: "random-anno-range",
        retries: RETRY_BUDGET,
    })
}

/// Rotation that takes, on each class turn, the untaken image with the most
/// annotations (ties to the lowest id).
pub fn random_annotation_max(dataset: &Dataset, config: &SelectionConfig) -> Result<SelectionResult> {
    config.validate(dataset)?;
    let eligible = config.eligible_images(dataset);
    let counts: Vec<usize> = dataset.manifest.images_by_id().map(|i| i.objects.len()).collect();
    let log = rotate(dataset, config, &eligible, None, |_, avail| {
        let mut best = 0;
        for (k, &id) in avail.iter().enumerate() {
            if counts[id] > counts[avail[best]] {
                best = k;
            }
        }
        best
    });
    Ok(log.finish(Method::RandomAnnoMax, config))
}

fn argmax_by(avail: &[usize], mut value: impl FnMut(usize) -> f64) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, &id) in avail.iter().enumerate() {
        let v = value(id);
        if k == 0 || v > best.1 {
            best = (k, v);
        }
    }
    best.0
}

/// Classwise herding: for class `c` with mean image feature `mu`, start at
/// `w = mu`, pick `argmax <w, x>`, then `w += mu - x`.
pub fn herding(dataset: &Dataset, config: &SelectionConfig) -> Result<SelectionResult> {
    config.validate(dataset)?;
    let eligible = config.eligible_images(dataset);
    let features = image_features(dataset);
    let dim = dataset.dim();
    let means: Vec<Vec<f64>> = class_pools(dataset, &eligible)
        .iter()
        .map(|pool| {
            let mut mu = vec![0.0; dim];
            for &id in pool {
                mu.iter_mut().zip(&features[id]).for_each(|(m, x)| *m += x);
            }
            if !pool.is_empty() {
                mu.iter_mut().for_each(|m| *m /= pool.len() as f64);
            }
            mu
        })
        .collect();
    let mut weights = means.clone();
    let log = rotate(dataset, config, &eligible, None, |c, avail| {
        let k = argmax_by(avail, |id| dot(&weights[c], &features[id]));
        let picked = &features[avail[k]];
        for ((w, m), x) in weights[c].iter_mut().zip(&means[c]).zip(picked) {
            *w += m - x;
        }
        k
    });
    Ok(log.finish(Method::Herding, config))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Farthest-first traversal seeded with the image nearest the global mean.
pub fn kcenter_greedy(dataset: &Dataset, config: &SelectionConfig) -> Result<SelectionResult> {
    config.validate(dataset)?;
    let eligible = config.eligible_images(dataset);
    let features = image_features(dataset);
    let ids: Vec<usize> = (0..dataset.num_images()).filter(|&i| eligible[i]).collect();
    let mut log = PickLog::new(dataset.num_images(), dataset.num_classes());
    if ids.is_empty() {
        return Ok(log.finish(Method::Kcenter, config));
    }
    let mut mean = vec![0.0; dataset.dim()];
    for &id in &ids {
        mean.iter_mut().zip(&features[id]).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= ids.len() as f64);
    let first = ids[argmax_by(&ids, |id| -euclidean(&features[id], &mean))];
    log.push(first, None);
    let mut min_dist: Vec<f64> = ids
        .iter()
        .map(|&id| euclidean(&features[id], &features[first]))
        .collect();
    while log.len() < config.target_count.min(ids.len()) {
        let mut best: Option<(usize, f64)> = None;
        for (k, &id) in ids.iter().enumerate() {
            if !log.is_taken(id) && best.is_none_or(|(_, d)| min_dist[k] > d) {
                best = Some((k, min_dist[k]));
            }
        }
        let Some((k, _)) = best else { break };
        let picked = ids[k];
        log.push(picked, None);
        for (m, &id) in min_dist.iter_mut().zip(&ids) {
            *m = m.min(euclidean(&features[id], &features[picked]));
        }
    }
    Ok(log.finish(Method::Kcenter, config))
}

/// Facility-location objective `f(S) = sum_i max_{j in S} cos(x_i, x_j)` over
/// a ground set of image features. An empty selection covers each point at
/// -1, the lowest possible cosine, so `f` is monotone and submodular.
#[derive(Debug, Clone)]
pub struct FacilityLocation {
    units: Vec<Vec<f64>>,
    coverage: Vec<f64>,
}

impl FacilityLocation {
    pub fn new(features: &[Vec<f64>]) -> Result<Self> {
        Ok(Self {
            units: features.iter().map(|f| unit(f)).collect::<Result<_>>()?,
            coverage: vec![-1.0; features.len()],
        })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        dot(&self.units[i], &self.units[j])
    }

    /// `f` of the current selection.
    pub fn current_value(&self) -> f64 {
        self.coverage.iter().sum()
    }

    /// `f(S)` for an arbitrary set, independent of the current selection.
    pub fn value(&self, set: &[usize]) -> f64 {
        (0..self.len())
            .map(|i| set.iter().map(|&j| self.similarity(i, j)).fold(-1.0, f64::max))
            .sum()
    }

    /// Marginal gain of `x` with respect to the current selection.
    pub fn gain(&self, x: usize) -> f64 {
        self.coverage
            .iter()
            .enumerate()
            .map(|(i, &cur)| (self.similarity(i, x) - cur).max(0.0))
            .sum()
    }

    pub fn insert(&mut self, x: usize) {
        for i in 0..self.coverage.len() {
            let s = dot(&self.units[i], &self.units[x]);
            if s > self.coverage[i] {
                self.coverage[i] = s;
            }
        }
    }
}

/// Greedy marginal-gain maximization of [`FacilityLocation`] over the
/// eligible images, with classwise rotation of the candidate pool.
pub fn facility_location_greedy(dataset: &Dataset, config: &SelectionConfig) -> Result<SelectionResult> {
    config.validate(dataset)?;
    let eligible = config.eligible_images(dataset);
    let features = image_features(dataset);
    let ids: Vec<usize> = (0..dataset.num_images()).filter(|&i| eligible[i]).collect();
    let mut ground_pos = vec![usize::MAX; dataset.num_images()];
    for (k, &id) in ids.iter().enumerate() {
        ground_pos[id] = k;
    }
    let ground: Vec<Vec<f64>> = ids.iter().map(|&id| features[id].clone()).collect();
    let mut objective = FacilityLocation::new(&ground)?;
    let log = rotate(dataset, config, &eligible, None, |_, avail| {
        let k = argmax_by(avail, |id| objective.gain(ground_pos[id]));
        objective.insert(ground_pos[avail[k]]);
        k
    });
    Ok(log.finish(Method::FacilityLocation, config))
}

/// Radius of the smallest ball family centred on `centers` covering all
/// `points`, in Euclidean distance.
pub fn covering_radius(points: &[Vec<f64>], centers: &[usize]) -> f64 {
    points
        .iter()
        .map(|p| {
            centers
                .iter()
                .map(|&c| euclidean(p, &points[c]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

pub fn mean_distance_to(points: &[&[f64]], target: &[f64]) -> f64 {
    let dim = target.len();
    let mut mean = vec![0.0; dim];
    for p in points {
        mean.iter_mut().zip(p.iter()).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= points.len() as f64);
    let diff: Vec<f64> = mean.iter().zip(target).map(|(a, b)| a - b).collect();
    norm(&diff)
}
