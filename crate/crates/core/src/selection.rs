//! Configuration and result types shared by every selection method, plus the
//! eligibility rules (exclusions and per-class pre-sampling) they all honor.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::prototypes::CandidateMode;
use crate::{baselines, csod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Csod,
    CsodObjectwise,
    RandomFull,
    RandomUniform,
    RandomRatio,
    RandomAnnoRange,
    RandomAnnoMax,
    Herding,
    Kcenter,
    FacilityLocation,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Csod,
        Method::CsodObjectwise,
        Method::RandomFull,
        Method::RandomUniform,
        Method::RandomRatio,
        Method::RandomAnnoRange,
        Method::RandomAnnoMax,
        Method::Herding,
        Method::Kcenter,
        Method::FacilityLocation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Csod => "csod",
            Method::CsodObjectwise => "csod-objectwise",
            Method::RandomFull => "random-full",
            Method::RandomUniform => "random-uniform",
            Method::RandomRatio => "random-ratio",
            Method::RandomAnnoRange => "random-anno-range",
            Method::RandomAnnoMax => "random-anno-max",
            Method::Herding => "herding",
            Method::Kcenter => "kcenter",
            Method::FacilityLocation => "facility-location",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Balance weight between the representativeness and diversity terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Lambda {
    Global(f64),
    PerClass(Vec<f64>),
}

impl Lambda {
    pub fn for_class(&self, class_id: usize) -> f64 {
        match self {
            Lambda::Global(l) => *l,
            Lambda::PerClass(ls) => ls[class_id],
        }
    }
}

/// Per-count balance weights: (target count, lambda).
pub const DEFAULT_LAMBDAS: [(usize, f64); 4] = [(100, 0.025), (200, 0.04375), (500, 0.0625), (1000, 0.125)];

/// Default lambda for a target count: table lookup, geometric interpolation
/// between table entries, clamped to the end entries outside the table.
pub fn default_lambda(target_count: usize) -> f64 {
    let n = target_count as f64;
    let (first, last) = (DEFAULT_LAMBDAS[0], DEFAULT_LAMBDAS[DEFAULT_LAMBDAS.len() - 1]);
    if target_count <= first.0 {
        return first.1;
    }
    if target_count >= last.0 {
        return last.1;
    }
    for w in DEFAULT_LAMBDAS.windows(2) {
        let ((n0, l0), (n1, l1)) = (w[0], w[1]);
        if target_count == n0 {
            return l0;
        }
        if target_count < n1 {
            let t = (n.ln() - (n0 as f64).ln()) / ((n1 as f64).ln() - (n0 as f64).ln());
            return (l0.ln() + t * (l1.ln() - l0.ln())).exp();
        }
    }
    last.1
}

/// Inclusive bound on a sample's total annotation count; `hi = None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRange {
    pub lo: usize,
    pub hi: Option<usize>,
}

impl AnnotationRange {
    pub fn contains(&self, n: usize) -> bool {
        n >= self.lo && self.hi.is_none_or(|hi| n <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    pub target_count: usize,
    pub lambda: Lambda,
    /// Class visiting order; `None` is ascending.
    pub class_order: Option<Vec<usize>>,
    pub presample_per_class: Option<usize>,
    pub excluded_image_ids: BTreeSet<usize>,
    pub seed: u64,
    pub candidate_mode: CandidateMode,
    pub annotation_range: Option<AnnotationRange>,
    /// Fill `stats.step_micros`. Off by default so result files are reproducible.
    pub record_timing: bool,
}

impl SelectionConfig {
    pub fn new(target_count: usize) -> Self {
        Self {
            target_count,
            lambda: Lambda::Global(default_lambda(target_count)),
            class_order: None,
            presample_per_class: None,
            excluded_image_ids: BTreeSet::new(),
            seed: 0,
            candidate_mode: CandidateMode::Imagewise,
            annotation_range: None,
            record_timing: false,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Lambda::Global(lambda);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_excluded(mut self, ids: impl IntoIterator<Item = usize>) -> Self {
        self.excluded_image_ids.extend(ids);
        self
    }

    pub fn class_order(&self, num_classes: usize) -> Vec<usize> {
        self.class_order.clone().unwrap_or_else(|| (0..num_classes).collect())
    }

    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        let c = dataset.num_classes();
        if self.target_count == 0 {
            return Err(Error::InvalidConfig("target count must be positive".into()));
        }
        match &self.lambda {
            Lambda::Global(l) if !(l.is_finite() && *l >= 0.0) => {
                return Err(Error::InvalidConfig(format!("lambda {l} must be finite and >= 0")));
            }
            Lambda::PerClass(ls) => {
                if ls.len() != c {
                    return Err(Error::InvalidConfig(format!(
                        "{} per-class lambdas for {c} classes",
                        ls.len()
                    )));
                }
                if let Some(l) = ls.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
                    return Err(Error::InvalidConfig(format!("lambda {l} must be finite and >= 0")));
                }
            }
            _ => {}
        }
        if let Some(order) = &self.class_order {
            let set: BTreeSet<usize> = order.iter().copied().collect();
            if order.len() != c || set.len() != c || set.iter().any(|&k| k >= c) {
                return Err(Error::InvalidConfig(format!(
                    "class order {order:?} is not a permutation of 0..{c}"
                )));
            }
        }
        if self.presample_per_class == Some(0) {
            return Err(Error::InvalidConfig("presample cap must be positive".into()));
        }
        if let Some(&id) = self.excluded_image_ids.iter().find(|&&id| id >= dataset.num_images()) {
            return Err(Error::UnknownImage(id));
        }
        if let Some(r) = self.annotation_range {
            if r.hi.is_some_and(|hi| hi < r.lo) {
                return Err(Error::InvalidConfig(format!(
                    "annotation range {}..{:?} is empty",
                    r.lo, r.hi
                )));
            }
        }
        let available = dataset.num_images() - self.excluded_image_ids.len();
        if self.target_count > available {
            return Err(Error::InvalidConfig(format!(
                "target count {} exceeds the {available} non-excluded images",
                self.target_count
            )));
        }
        Ok(())
    }

    /// Images a method may pick: everything not excluded, further restricted
    /// to the pre-sampled union when a cap is set.
    pub fn eligible_images(&self, dataset: &Dataset) -> Vec<bool> {
        let mut eligible: Vec<bool> = (0..dataset.num_images())
            .map(|id| !self.excluded_image_ids.contains(&id))
            .collect();
        if let Some(cap) = self.presample_per_class {
            let chosen = presample(dataset, cap, self.seed, &eligible);
            for (id, e) in eligible.iter_mut().enumerate() {
                *e = *e && chosen.contains(&id);
            }
        }
        eligible
    }
}

/// For each class in ascending order, draws up to `per_class_cap` images
/// containing it (uniformly, without replacement) from the not-yet-drawn
/// eligible images.
pub fn presample(dataset: &Dataset, per_class_cap: usize, seed: u64, eligible: &[bool]) -> BTreeSet<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = BTreeSet::new();
    for class_id in 0..dataset.num_classes() {
        let candidates: Vec<usize> = dataset
            .manifest
            .images_by_id()
            .filter(|img| eligible[img.id] && !taken.contains(&img.id) && img.contains_class(class_id))
            .map(|img| img.id)
            .collect();
        let k = per_class_cap.min(candidates.len());
        for i in sample(&mut rng, candidates.len(), k) {
            taken.insert(candidates[i]);
        }
    }
    taken
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionStatus {
    Complete,
    /// Every candidate pool drained before reaching the target count.
    Partial,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionStats {
    /// Picks attributed to each class's turn.
    pub per_class_picks: Vec<usize>,
    /// Class whose turn produced each pick (`None` for methods without turns).
    pub step_classes: Vec<Option<usize>>,
    pub step_micros: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionResult {
    pub method: Method,
    /// In pick order.
    pub selected_image_ids: Vec<usize>,
    pub config_echo: SelectionConfig,
    pub stats: SelectionStats,
    pub status: SelectionStatus,
}

impl SelectionResult {
    pub fn is_partial(&self) -> bool {
        self.status == SelectionStatus::Partial
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

/// Accumulates picks for a method run.
#[derive(Debug)]
pub(crate) struct PickLog {
    taken: Vec<bool>,
    ids: Vec<usize>,
    stats: SelectionStats,
}

impl PickLog {
    pub(crate) fn new(num_images: usize, num_classes: usize) -> Self {
        Self {
            taken: vec![false; num_images],
            ids: Vec::new(),
            stats: SelectionStats {
                per_class_picks: vec![0; num_classes],
                ..Default::default()
            },
        }
    }

    pub(crate) fn push(&mut self, image_id: usize, class_id: Option<usize>) {
        debug_assert!(!self.taken[image_id]);
        self.taken[image_id] = true;
        self.ids.push(image_id);
        if let Some(c) = class_id {
            self.stats.per_class_picks[c] += 1;
        }
        self.stats.step_classes.push(class_id);
    }

    pub(crate) fn push_micros(&mut self, micros: u64) {
        self.stats.step_micros.push(micros);
    }

    pub(crate) fn is_taken(&self, image_id: usize) -> bool {
        self.taken[image_id]
    }

    pub(crate) fn len(&self) -> usize {
        self.ids.len()
    }

    pub(crate) fn finish(self, method: Method, config: &SelectionConfig) -> SelectionResult {
        let status = if self.ids.len() < config.target_count {
            SelectionStatus::Partial
        } else {
            SelectionStatus::Complete
        };
        SelectionResult {
            method,
            selected_image_ids: self.ids,
            config_echo: config.clone(),
            stats: self.stats,
            status,
        }
    }
}

/// Runs any method by identifier.
pub fn run(dataset: &Dataset, method: Method, config: &SelectionConfig) -> Result<SelectionResult> {
    match method {
        Method::Csod | Method::CsodObjectwise => {
            let mut config = config.clone();
            if method == Method::CsodObjectwise {
                config.candidate_mode = CandidateMode::Objectwise;
            }
            let index = crate::prototypes::build(dataset, config.candidate_mode);
            let mut result = csod::select(dataset, &index, &config)?;
            result.method = method;
            Ok(result)
        }
        Method::RandomFull => baselines::random_full(dataset, config),
        Method::RandomUniform => baselines::random_uniform(dataset, config),
        Method::RandomRatio => baselines::random_ratio(dataset, config),
        Method::RandomAnnoRange => baselines::random_annotation_range(dataset, config),
        Method::RandomAnnoMax => baselines::random_annotation_max(dataset, config),
        Method::Herding => baselines::herding(dataset, config),
        Method::Kcenter => baselines::kcenter_greedy(dataset, config),
        Method::FacilityLocation => baselines::facility_location_greedy(dataset, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lambda_table() {
        assert_eq!(default_lambda(100), 0.025);
        assert_eq!(default_lambda(200), 0.04375);
        assert_eq!(default_lambda(500), 0.0625);
        assert_eq!(default_lambda(1000), 0.125);
        assert_eq!(default_lambda(20), 0.025);
        assert_eq!(default_lambda(5000), 0.125);
        // geometric midpoint of 100 and 200 in log-count space
        let mid = default_lambda(141);
        assert!(mid > 0.025 && mid < 0.04375);
        let exact = (0.025f64 * 0.04375).sqrt();
        let at = ((141f64.ln() - 100f64.ln()) / (200f64.ln() - 100f64.ln())) * (0.04375f64 / 0.025).ln();
        assert!((mid - 0.025 * at.exp()).abs() < 1e-15);
        assert!((default_lambda(141) - exact).abs() < 1e-3);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn annotation_range_bounds() {
        let r = AnnotationRange {
            lo: 700,
            hi: Some(1100),
        };
        assert!(r.contains(700) && r.contains(1100) && !r.contains(1101) && !r.contains(699));
        assert!(AnnotationRange { lo: 0, hi: None }.contains(usize::MAX));
    }

    #[test]
    fn config_json_round_trip() {
        let mut cfg = SelectionConfig::new(200).with_excluded([3, 1]);
        cfg.lambda = Lambda::PerClass(vec![0.5, 1e10]);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: SelectionConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }
}
