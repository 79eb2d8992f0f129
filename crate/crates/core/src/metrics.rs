//! Selection quality metrics against frame-level evidence annotations.
//!
//! An instance carries one or more alternative ground-truth evidence sets;
//! every metric aggregates across them with min, so a selection is only as
//! good as its worst grounding. The combined objective multiplies inclusion
//! by a smooth time penalty and zeroes instances whose selections break the
//! contract (outside the candidates, over budget, duplicated, unsorted, or
//! over the time cap).

use crate::selector::validate_selection;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("instance {instance_id}: no weight for ground-truth frame {frame}")]
    MissingWeight { instance_id: String, frame: usize },
    #[error("invalid objective config: {0}")]
    InvalidConfig(String),
    #[error("results ({results}) and instances ({instances}) are not aligned")]
    Alignment { results: usize, instances: usize },
    #[error("result {position} is for {result_id:?} but instance is {instance_id:?}")]
    IdMismatch {
        position: usize,
        result_id: String,
        instance_id: String,
    },
    #[error("invalid instance {instance_id}: {reason}")]
    InvalidInstance { instance_id: String, reason: String },
    #[error("annotations line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One evaluation instance: the candidate frames a selector may use and
/// the ground-truth evidence sets it is judged against.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceInstance {
    pub instance_id: String,
    pub video_id: String,
    pub candidates: Vec<usize>,
    pub evidence_sets: Vec<Vec<usize>>,
    /// Optional per-frame relevance weights; must cover every ground-truth
    /// frame when present.
    pub weights: Option<BTreeMap<usize, f64>>,
}

/// JSON wire form: weights keys are strings because JSON object keys are.
#[derive(Serialize, Deserialize)]
struct WireInstance {
    instance_id: String,
    video_id: String,
    candidates: Vec<usize>,
    evidence_sets: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<BTreeMap<String, f64>>,
}

impl Serialize for EvidenceInstance {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        WireInstance {
            instance_id: self.instance_id.clone(),
            video_id: self.video_id.clone(),
            candidates: self.candidates.clone(),
            evidence_sets: self.evidence_sets.clone(),
            weights: self
                .weights
                .as_ref()
                .map(|w| w.iter().map(|(k, v)| (k.to_string(), *v)).collect()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EvidenceInstance {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = WireInstance::deserialize(deserializer)?;
        let weights = match wire.weights {
            None => None,
            Some(map) => {
                let mut out = BTreeMap::new();
                for (k, v) in map {
                    let frame: usize = k.parse().map_err(|_| {
                        serde::de::Error::custom(format!("weight key {k:?} is not a frame index"))
                    })?;
                    out.insert(frame, v);
                }
                Some(out)
            }
        };
        Ok(EvidenceInstance {
            instance_id: wire.instance_id,
            video_id: wire.video_id,
            candidates: wire.candidates,
            evidence_sets: wire.evidence_sets,
            weights,
        })
    }
}

impl EvidenceInstance {
    pub fn has_supervision(&self) -> bool {
        !self.evidence_sets.is_empty()
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let fail = |reason: String| {
            Err(MetricError::InvalidInstance {
                instance_id: self.instance_id.clone(),
                reason,
            })
        };
        if !self.candidates.windows(2).all(|w| w[0] < w[1]) {
            return fail("candidates must be strictly increasing".into());
        }
        if self.evidence_sets.is_empty() {
            return fail("no evidence sets".into());
        }
        for (m, g) in self.evidence_sets.iter().enumerate() {
            if g.is_empty() {
                return fail(format!("evidence set {m} is empty"));
            }
        }
        if let Some(w) = &self.weights {
            if w.values().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return fail("weights must be finite and non-negative".into());
            }
        }
        Ok(())
    }
}

/// Splits instances into those with supervision and a count of those
/// without, which evaluation drops.
pub fn drop_missing_supervision(
    instances: Vec<EvidenceInstance>,
) -> (Vec<EvidenceInstance>, usize) {
    let total = instances.len();
    let kept: Vec<EvidenceInstance> = instances
        .into_iter()
        .filter(|i| i.has_supervision())
        .collect();
    let dropped = total - kept.len();
    (kept, dropped)
}

/// Reads JSON Lines annotations; blank lines are skipped.
pub fn read_annotations(path: &Path) -> Result<Vec<EvidenceInstance>, MetricError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: EvidenceInstance =
            serde_json::from_str(&line).map_err(|source| MetricError::Parse {
                line: i + 1,
                source,
            })?;
        out.push(inst);
    }
    Ok(out)
}

fn hits(selected: &BTreeSet<usize>, evidence: &[usize]) -> usize {
    evidence.iter().filter(|t| selected.contains(t)).count()
}

fn as_set(selection: &[usize]) -> BTreeSet<usize> {
    selection.iter().copied().collect()
}

/// 1 iff every evidence set is hit by at least one selected frame.
pub fn inclusion(selection: &[usize], inst: &EvidenceInstance) -> f64 {
    let s = as_set(selection);
    let all_hit = inst.evidence_sets.iter().all(|g| hits(&s, g) > 0);
    if all_hit && !inst.evidence_sets.is_empty() {
        1.0
    } else {
        0.0
    }
}

/// Worst-case precision: min over evidence sets of |S n G| / |S|.
pub fn intersection(selection: &[usize], inst: &EvidenceInstance) -> f64 {
    let s = as_set(selection);
    if s.is_empty() {
        return 0.0;
    }
    let worst = inst
        .evidence_sets
        .iter()
        .map(|g| hits(&s, g) as f64 / s.len() as f64)
        .fold(f64::INFINITY, f64::min);
    if worst.is_finite() {
        worst
    } else {
        0.0
    }
}

/// Worst-case F-beta with beta^2 = 2: per set, 3PR / (2P + R), zero when
/// both precision and recall vanish.
pub fn f_sqrt2(selection: &[usize], inst: &EvidenceInstance) -> f64 {
    let s = as_set(selection);
    let worst = inst
        .evidence_sets
        .iter()
        .map(|g| {
            if s.is_empty() || g.is_empty() {
                return 0.0;
            }
            let h = hits(&s, g) as f64;
            let p = h / s.len() as f64;
            let r = h / g.len() as f64;
            if p == 0.0 && r == 0.0 {
                0.0
            } else {
                3.0 * p * r / (2.0 * p + r)
            }
        })
        .fold(f64::INFINITY, f64::min);
    if worst.is_finite() {
        worst
    } else {
        0.0
    }
}

/// Worst-case captured weight fraction: min over evidence sets of the
/// selected weight over the total set weight. Uniform weights when absent.
pub fn weighted_intersection(
    selection: &[usize],
    inst: &EvidenceInstance,
) -> Result<f64, MetricError> {
    let s = as_set(selection);
    let mut worst = f64::INFINITY;
    for g in &inst.evidence_sets {
        let (mut captured, mut total) = (0.0f64, 0.0f64);
        for &t in g {
            let w = match &inst.weights {
                None => 1.0,
                Some(map) => *map.get(&t).ok_or_else(|| MetricError::MissingWeight {
                    instance_id: inst.instance_id.clone(),
                    frame: t,
                })?,
            };
            total += w;
            if s.contains(&t) {
                captured += w;
            }
        }
        let frac = if total > 0.0 { captured / total } else { 0.0 };
        worst = worst.min(frac);
    }
    if worst.is_finite() {
        Ok(worst.min(1.0))
    } else {
        Ok(0.0)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ObjectiveConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub t_max: f64,
    pub budget_k: usize,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            alpha: 0.95,
            gamma: 1.0,
            t_max: 15.0,
            budget_k: 16,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(MetricError::InvalidConfig(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(MetricError::InvalidConfig(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(MetricError::InvalidConfig(format!(
                "t_max must be positive, got {}",
                self.t_max
            )));
        }
        if self.budget_k == 0 {
            return Err(MetricError::InvalidConfig("budget_k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Smooth time penalty: alpha^(clip(t / T_max, 0, 1)^gamma). Equals 1 at
/// t = 0 and alpha for all t >= T_max, both exactly.
pub fn time_factor(elapsed_s: f64, cfg: &ObjectiveConfig) -> f64 {
    let ratio = (elapsed_s / cfg.t_max).clamp(0.0, 1.0).powf(cfg.gamma);
    if ratio == 0.0 {
        1.0
    } else if ratio == 1.0 {
        cfg.alpha
    } else {
        (cfg.alpha.ln() * ratio).exp()
    }
}

/// A selector's answer for one instance, as exchanged on disk.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SelectionOutcome {
    pub instance_id: String,
    #[serde(rename = "selected")]
    pub indices: Vec<usize>,
    pub elapsed_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstanceMetrics {
    pub instance_id: String,
    pub inclusion: f64,
    pub intersection: f64,
    pub f_sqrt2: f64,
    pub w_inter: f64,
    pub time_factor: f64,
    /// inclusion * time_factor, zeroed when the selection is invalid.
    pub contribution: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub instances: Vec<InstanceMetrics>,
    #[serde(rename = "J")]
    pub j: f64,
    pub incl: f64,
    pub inter: f64,
    pub f_sqrt2: f64,
    pub w_inter: f64,
    pub n: usize,
    pub invalid: usize,
}

/// Scores aligned (selection, instance) pairs. Instances must already be
/// filtered to those with supervision. Invalid selections contribute zero
/// to every aggregate; J is the mean of inclusion times the time factor.
pub fn combined_objective(
    results: &[SelectionOutcome],
    instances: &[EvidenceInstance],
    cfg: &ObjectiveConfig,
) -> Result<MetricReport, MetricError> {
    cfg.validate()?;
    if results.len() != instances.len() {
        return Err(MetricError::Alignment {
            results: results.len(),
            instances: instances.len(),
        });
    }
    let mut rows = Vec::with_capacity(results.len());
    let mut invalid = 0usize;
    for (pos, (res, inst)) in results.iter().zip(instances).enumerate() {
        if !res.instance_id.is_empty() && res.instance_id != inst.instance_id {
            return Err(MetricError::IdMismatch {
                position: pos,
                result_id: res.instance_id.clone(),
                instance_id: inst.instance_id.clone(),
            });
        }
        inst.validate()?;
        let ok = validate_selection(
            &res.indices,
            &inst.candidates,
            cfg.budget_k,
            res.elapsed_s,
            Some(cfg.t_max),
        )
        .is_ok();
        let row = if ok {
            let phi = time_factor(res.elapsed_s, cfg);
            let incl = inclusion(&res.indices, inst);
            InstanceMetrics {
                instance_id: inst.instance_id.clone(),
                inclusion: incl,
                intersection: intersection(&res.indices, inst),
                f_sqrt2: f_sqrt2(&res.indices, inst),
                w_inter: weighted_intersection(&res.indices, inst)?,
                time_factor: phi,
                contribution: incl * phi,
                valid: true,
            }
        } else {
            invalid += 1;
            InstanceMetrics {
                instance_id: inst.instance_id.clone(),
                inclusion: 0.0,
                intersection: 0.0,
                f_sqrt2: 0.0,
                w_inter: 0.0,
                time_factor: 0.0,
                contribution: 0.0,
                valid: false,
            }
        };
        rows.push(row);
    }
    let n = rows.len();
    let mean = |f: fn(&InstanceMetrics) -> f64| {
        if n == 0 {
            0.0
        } else {
            rows.iter().map(f).sum::<f64>() / n as f64
        }
    };
    Ok(MetricReport {
        j: mean(|r| r.contribution),
        incl: mean(|r| r.inclusion),
        inter: mean(|r| r.intersection),
        f_sqrt2: mean(|r| r.f_sqrt2),
        w_inter: mean(|r| r.w_inter),
        n,
        invalid,
        instances: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(candidates: Vec<usize>, evidence_sets: Vec<Vec<usize>>) -> EvidenceInstance {
        EvidenceInstance {
            instance_id: "i0".into(),
            video_id: "v0".into(),
            candidates,
            evidence_sets,
            weights: None,
        }
    }

    #[test]
    fn inclusion_requires_every_evidence_set() {
        let i = inst((0..10).collect(), vec![vec![5, 6], vec![9]]);
        assert_eq!(inclusion(&[1, 5], &i), 0.0);
        let i = inst((0..10).collect(), vec![vec![5], vec![1, 2]]);
        assert_eq!(inclusion(&[1, 5], &i), 1.0);
        assert_eq!(inclusion(&[], &i), 0.0);
    }

    #[test]
    fn intersection_is_worst_case_precision() {
        let i = inst((0..10).collect(), vec![vec![1, 2]]);
        assert_eq!(intersection(&[1, 2, 3, 4], &i), 0.5);
        assert_eq!(intersection(&[1, 2], &i), 1.0);
        let i = inst((0..10).collect(), vec![vec![1, 2], vec![2]]);
        assert_eq!(intersection(&[1, 2], &i), 0.5);
        assert_eq!(intersection(&[], &i), 0.0);
    }

    #[test]
    fn f_sqrt2_matches_direct_evaluation() {
        // Perfect selection.
        let i = inst((0..10).collect(), vec![vec![3, 4]]);
        assert_eq!(f_sqrt2(&[3, 4], &i), 1.0);
        // P = 0.5, R = 1 -> 3 * 0.5 / (2 * 0.5 + 1) = 0.75.
        let i = inst((0..10).collect(), vec![vec![3]]);
        assert_eq!(f_sqrt2(&[2, 3], &i), 0.75);
        // Disjoint.
        assert_eq!(f_sqrt2(&[7, 8], &i), 0.0);
    }

    #[test]
    fn f_sqrt2_lies_between_precision_and_recall() {
        let evidence = vec![1usize, 4, 6, 9, 12];
        for sel in [vec![1usize, 2], vec![4, 6, 7, 8], vec![1, 4, 6, 9, 12, 13]] {
            let i = inst((0..20).collect(), vec![evidence.clone()]);
            let s: BTreeSet<usize> = sel.iter().copied().collect();
            let h = evidence.iter().filter(|t| s.contains(t)).count() as f64;
            let (p, r) = (h / s.len() as f64, h / evidence.len() as f64);
            if p > 0.0 && r > 0.0 {
                let f = f_sqrt2(&sel, &i);
                assert!(f >= p.min(r) - 1e-12 && f <= p.max(r) + 1e-12, "{sel:?}: {f}");
            }
        }
    }

    #[test]
    fn weighted_intersection_follows_the_mass() {
        let mut i = inst((0..10).collect(), vec![vec![1, 2]]);
        // Uniform weights: recall of the set.
        assert_eq!(weighted_intersection(&[1, 2, 5], &i).unwrap(), 1.0);
        assert_eq!(weighted_intersection(&[9], &i).unwrap(), 0.0);
        // Weighted: w1 = 3, w2 = 1, picking frame 1 captures 3/4.
        i.weights = Some(BTreeMap::from([(1, 3.0), (2, 1.0)]));
        assert_eq!(weighted_intersection(&[1], &i).unwrap(), 0.75);
        // A ground-truth frame without a weight is an error.
        i.evidence_sets = vec![vec![1, 2, 7]];
        assert!(matches!(
            weighted_intersection(&[1], &i),
            Err(MetricError::MissingWeight { frame: 7, .. })
        ));
    }

    #[test]
    fn metrics_ignore_evidence_list_order() {
        let sets = vec![vec![2, 3], vec![8], vec![5, 6, 7]];
        let mut rev = sets.clone();
        rev.reverse();
        let a = inst((0..12).collect(), sets);
        let b = inst((0..12).collect(), rev);
        let sel = [2, 5, 8, 9];
        assert_eq!(inclusion(&sel, &a), inclusion(&sel, &b));
        assert_eq!(intersection(&sel, &a), intersection(&sel, &b));
        assert_eq!(f_sqrt2(&sel, &a), f_sqrt2(&sel, &b));
        assert_eq!(
            weighted_intersection(&sel, &a).unwrap(),
            weighted_intersection(&sel, &b).unwrap()
        );
    }

    #[test]
    fn adding_frames_never_decreases_inclusion() {
        let i = inst((0..16).collect(), vec![vec![3, 4], vec![10]]);
        let mut sel: Vec<usize> = vec![];
        let mut prev = inclusion(&sel, &i);
        for t in [1usize, 3, 7, 10, 12] {
            sel.push(t);
            let cur = inclusion(&sel, &i);
            assert!(cur >= prev);
            prev = cur;
        }
        assert_eq!(prev, 1.0);
    }

    #[test]
    fn time_factor_hits_exact_boundary_values() {
        let cfg = ObjectiveConfig::default();
        assert_eq!(time_factor(0.0, &cfg), 1.0);
        assert_eq!(time_factor(15.0, &cfg), 0.95);
        assert_eq!(time_factor(40.0, &cfg), 0.95, "clipped beyond the cap");
        let mid = time_factor(7.5, &cfg);
        assert!((mid - 0.95f64.powf(0.5)).abs() < 1e-6, "got {mid}");
        // Non-increasing in t.
        let mut prev = 1.0f64;
        for step in 0..=30 {
            let v = time_factor(step as f64 * 0.5, &cfg);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn objective_config_is_validated() {
        for bad in [
            ObjectiveConfig {
                alpha: 0.0,
                ..Default::default()
            },
            ObjectiveConfig {
                alpha: 1.5,
                ..Default::default()
            },
            ObjectiveConfig {
                gamma: 0.0,
                ..Default::default()
            },
            ObjectiveConfig {
                t_max: 0.0,
                ..Default::default()
            },
            ObjectiveConfig {
                budget_k: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?} must be rejected");
        }
        assert!(ObjectiveConfig::default().validate().is_ok());
    }

    fn outcome(id: &str, indices: Vec<usize>, elapsed_s: f64) -> SelectionOutcome {
        SelectionOutcome {
            instance_id: id.into(),
            indices,
            elapsed_s,
            valid: None,
        }
    }

    #[test]
    fn objective_matches_hand_computation() {
        let cfg = ObjectiveConfig::default();
        // One instance, inclusion 1 at the time cap: J = alpha.
        let insts = vec![inst((0..10).collect(), vec![vec![4]])];
        let report =
            combined_objective(&[outcome("i0", vec![4], 15.0)], &insts, &cfg).unwrap();
        assert_eq!(report.j, 0.95);
        assert_eq!(report.n, 1);
        assert_eq!(report.invalid, 0);

        // All selections invalid: J = 0.
        let report =
            combined_objective(&[outcome("i0", vec![99], 0.0)], &insts, &cfg).unwrap();
        assert_eq!(report.j, 0.0);
        assert_eq!(report.invalid, 1);
        assert!(!report.instances[0].valid);

        // Two instances with contributions 1 and 0: J = 0.5.
        let insts2 = vec![
            inst((0..10).collect(), vec![vec![4]]),
            inst((0..10).collect(), vec![vec![7]]),
        ];
        let results = vec![outcome("i0", vec![4], 0.0), outcome("i0", vec![3], 0.0)];
        let report = combined_objective(&results, &insts2, &cfg).unwrap();
        assert_eq!(report.j, 0.5);
        assert_eq!(report.invalid, 0);
    }

    #[test]
    fn over_budget_time_and_size_are_zeroed() {
        let cfg = ObjectiveConfig {
            budget_k: 2,
            ..Default::default()
        };
        let insts = vec![inst((0..10).collect(), vec![vec![1]])];
        // Too many indices.
        let report =
            combined_objective(&[outcome("i0", vec![1, 2, 3], 0.0)], &insts, &cfg).unwrap();
        assert_eq!(report.invalid, 1);
        // Over the time cap.
        let report =
            combined_objective(&[outcome("i0", vec![1], 16.0)], &insts, &cfg).unwrap();
        assert_eq!(report.invalid, 1);
        assert_eq!(report.j, 0.0);
    }

    #[test]
    fn misaligned_inputs_are_errors() {
        let cfg = ObjectiveConfig::default();
        let insts = vec![inst((0..4).collect(), vec![vec![1]])];
        assert!(matches!(
            combined_objective(&[], &insts, &cfg),
            Err(MetricError::Alignment { .. })
        ));
        assert!(matches!(
            combined_objective(&[outcome("other", vec![1], 0.0)], &insts, &cfg),
            Err(MetricError::IdMismatch { .. })
        ));
    }

    #[test]
    fn annotations_round_trip_with_string_weight_keys() {
        let line = r#"{"instance_id":"q1","video_id":"v1","candidates":[0,2,4],"evidence_sets":[[2],[4]],"weights":{"2":1.5,"4":0.25}}"#;
        let inst: EvidenceInstance = serde_json::from_str(line).unwrap();
        assert_eq!(inst.weights.as_ref().unwrap()[&2], 1.5);
        let back = serde_json::to_string(&inst).unwrap();
        let again: EvidenceInstance = serde_json::from_str(&back).unwrap();
        assert_eq!(again, inst);
        // Bad weight key.
        let bad = r#"{"instance_id":"q","video_id":"v","candidates":[],"evidence_sets":[[1]],"weights":{"x":1.0}}"#;
        assert!(serde_json::from_str::<EvidenceInstance>(bad).is_err());
    }

    #[test]
    fn unsupervised_instances_are_dropped_and_counted() {
        let a = inst(vec![0, 1], vec![vec![1]]);
        let mut b = inst(vec![0, 1], vec![]);
        b.instance_id = "empty".into();
        let (kept, dropped) = drop_missing_supervision(vec![a.clone(), b]);
        assert_eq!(kept, vec![a]);
        assert_eq!(dropped, 1);
    }

    /// Exhaustive reference computations structured differently from the
    /// implementations: explicit loops over raw vectors, no set types.
    mod oracle {
        use super::super::EvidenceInstance;

        fn inter_count(sel: &[usize], g: &[usize]) -> usize {
            let mut n = 0;
            for &t in g {
                if sel.contains(&t) {
                    n += 1;
                }
            }
            n
        }

        pub fn inclusion(sel: &[usize], inst: &EvidenceInstance) -> f64 {
            for g in &inst.evidence_sets {
                if inter_count(sel, g) == 0 {
                    return 0.0;
                }
            }
            1.0
        }

        pub fn intersection(sel: &[usize], inst: &EvidenceInstance) -> f64 {
            if sel.is_empty() {
                return 0.0;
            }
            let mut worst = f64::INFINITY;
            for g in &inst.evidence_sets {
                worst = worst.min(inter_count(sel, g) as f64 / sel.len() as f64);
            }
            worst
        }

        pub fn f_sqrt2(sel: &[usize], inst: &EvidenceInstance) -> f64 {
            let mut worst = f64::INFINITY;
            for g in &inst.evidence_sets {
                let f = if sel.is_empty() {
                    0.0
                } else {
                    let h = inter_count(sel, g) as f64;
                    let p = h / sel.len() as f64;
                    let r = h / g.len() as f64;
                    if p == 0.0 && r == 0.0 {
                        0.0
                    } else {
                        3.0 * p * r / (2.0 * p + r)
                    }
                };
                worst = worst.min(f);
            }
            worst
        }

        pub fn weighted(sel: &[usize], inst: &EvidenceInstance) -> f64 {
            let mut worst = f64::INFINITY;
            for g in &inst.evidence_sets {
                let mut num = 0.0;
                let mut den = 0.0;
                for &t in g {
                    let w = inst
                        .weights
                        .as_ref()
                        .map(|m| m[&t])
                        .unwrap_or(1.0);
                    den += w;
                    if sel.contains(&t) {
                        num += w;
                    }
                }
                worst = worst.min(if den > 0.0 { num / den } else { 0.0 });
            }
            worst
        }
    }

    #[test]
    fn random_instances_match_the_oracle_exactly() {
        // Small deterministic LCG so the cases are reproducible.
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = move |bound: usize| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as usize) % bound
        };
        for case in 0..300 {
            let t = 2 + next(19);
            let m = 1 + next(3);
            let mut evidence_sets = Vec::new();
            for _ in 0..m {
                let len = 1 + next(4.min(t));
                let mut g: Vec<usize> = (0..len).map(|_| next(t)).collect();
                g.sort_unstable();
                g.dedup();
                evidence_sets.push(g);
            }
            let sel_len = next(9.min(t + 1));
            let mut sel: Vec<usize> = (0..sel_len).map(|_| next(t)).collect();
            sel.sort_unstable();
            sel.dedup();
            let weights = if next(2) == 0 {
                None
            } else {
                Some(
                    (0..t)
                        .map(|f| (f, (1 + next(5)) as f64 * 0.5))
                        .collect::<BTreeMap<usize, f64>>(),
                )
            };
            let inst = EvidenceInstance {
                instance_id: format!("case{case}"),
                video_id: "v".into(),
                candidates: (0..t).collect(),
                evidence_sets,
                weights,
            };
            assert_eq!(inclusion(&sel, &inst), oracle::inclusion(&sel, &inst));
            assert_eq!(intersection(&sel, &inst), oracle::intersection(&sel, &inst));
            assert_eq!(f_sqrt2(&sel, &inst), oracle::f_sqrt2(&sel, &inst));
            assert_eq!(
                weighted_intersection(&sel, &inst).unwrap(),
                oracle::weighted(&sel, &inst)
            );
        }
    }
}
