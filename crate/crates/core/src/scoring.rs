//! Reward and score arithmetic: composite rewards, expert totals and grades,
//! standard-deviation analysis of RL sample groups, and the single/multi
//! condition task mixing schedule.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sample reward channels for reward-driven fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub structural_iou: f64,
    pub omniaid: f64,
    pub longclip: f64,
    pub hpsv3: f64,
}

impl RewardVector {
    pub fn validate(&self) -> Result<()> {
        let all = [self.structural_iou, self.omniaid, self.longclip, self.hpsv3];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("reward channels must be finite"));
        }
        if !(0.0..=1.0).contains(&self.structural_iou) {
            return Err(Error::domain(format!(
                "structural IoU {} outside [0, 1]",
                self.structural_iou
            )));
        }
        Ok(())
    }

    fn channels(&self) -> [f64; 4] {
        [self.structural_iou, self.omniaid, self.longclip, self.hpsv3]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub structural_iou: f64,
    pub omniaid: f64,
    pub longclip: f64,
    pub hpsv3: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self::uniform()
    }
}

impl RewardWeights {
    pub fn uniform() -> Self {
        Self {
            structural_iou: 1.0,
            omniaid: 1.0,
            longclip: 1.0,
            hpsv3: 1.0,
        }
    }

    fn as_array(&self) -> [f64; 4] {
        [self.structural_iou, self.omniaid, self.longclip, self.hpsv3]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            structural_iou: self.structural_iou * factor,
            omniaid: self.omniaid * factor,
            longclip: self.longclip * factor,
            hpsv3: self.hpsv3 * factor,
        }
    }
}

/// Affine map of `[lo, hi]` onto `[0, 1]`, clamped outside the range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub lo: f64,
    pub hi: f64,
}

impl MinMax {
    pub const IDENTITY: MinMax = MinMax { lo: 0.0, hi: 1.0 };

    pub fn apply(&self, v: f64) -> f64 {
        ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
}

/// Per-channel normalisers. IoU, OmniAID and LongCLIP already live in
/// `[0, 1]`; HPSv3 is mapped from `[0, 10]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardNormalizers {
    pub structural_iou: MinMax,
    pub omniaid: MinMax,
    pub longclip: MinMax,
    pub hpsv3: MinMax,
}

impl Default for RewardNormalizers {
    fn default() -> Self {
        Self {
            structural_iou: MinMax::IDENTITY,
            omniaid: MinMax::IDENTITY,
            longclip: MinMax::IDENTITY,
            hpsv3: MinMax { lo: 0.0, hi: 10.0 },
        }
    }
}

impl RewardNormalizers {
    pub fn identity() -> Self {
        Self {
            structural_iou: MinMax::IDENTITY,
            omniaid: MinMax::IDENTITY,
            longclip: MinMax::IDENTITY,
            hpsv3: MinMax::IDENTITY,
        }
    }

    fn as_array(&self) -> [MinMax; 4] {
        [self.structural_iou, self.omniaid, self.longclip, self.hpsv3]
    }

    fn validate(&self) -> Result<()> {
        for n in self.as_array() {
            if !(n.lo.is_finite() && n.hi.is_finite() && n.hi > n.lo) {
                return Err(Error::domain(format!("normaliser range [{}, {}] is empty", n.lo, n.hi)));
            }
        }
        Ok(())
    }
}

/// Weighted mean of normalised reward channels.
pub fn composite_reward(v: &RewardVector, weights: &RewardWeights, normalizers: &RewardNormalizers) -> Result<f64> {
    v.validate()?;
    normalizers.validate()?;
    let w = weights.as_array();
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::domain("reward weights must be finite and non-negative"));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::domain("reward weights sum to zero"));
    }
    let num: f64 = v
        .channels()
        .iter()
        .zip(normalizers.as_array())
        .zip(w)
        .map(|((x, n), wi)| wi * n.apply(*x))
        .sum();
    Ok(num / total)
}

/// Expert panel scores. Each is on the 1–5 scale, or exactly 0 for an
/// abstention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub aesthetic: f64,
    pub spatial_consistency: f64,
    pub plausibility: f64,
}

impl ScoreCard {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("aesthetic", self.aesthetic),
            ("spatial_consistency", self.spatial_consistency),
            ("plausibility", self.plausibility),
        ] {
            if !(v == 0.0 || (1.0..=5.0).contains(&v)) {
                return Err(Error::domain(format!("{name} score {v} outside the 1-5 scale")));
            }
        }
        Ok(())
    }
}

pub const AESTHETIC_WEIGHT: f64 = 0.4;
pub const SPATIAL_WEIGHT: f64 = 0.3;
pub const PLAUSIBILITY_WEIGHT: f64 = 0.3;

/// Unrounded weighted total: 0.4·aesthetic + 0.3·spatial + 0.3·plausibility.
pub fn expert_total(card: &ScoreCard) -> Result<f64> {
    card.validate()?;
    Ok(AESTHETIC_WEIGHT * card.aesthetic + SPATIAL_WEIGHT * card.spatial_consistency + PLAUSIBILITY_WEIGHT * card.plausibility)
}

/// Rounds half away from zero at `decimals` places after snapping off binary
/// representation noise below 1e-9, so a total of exactly 3.675 displays as
/// 3.68.
pub fn round_display(x: f64, decimals: i32) -> f64 {
    let snapped = (x * 1e9).round() / 1e9;
    let scale = 10f64.powi(decimals);
    (snapped * scale).round() / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grade {
    S,
    A,
    B,
    C,
    D,
}

impl Grade {
    pub const ALL: [Grade; 5] = [Grade::S, Grade::A, Grade::B, Grade::C, Grade::D];
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Grade::S => "S",
            Grade::A => "A",
            Grade::B => "B",
            Grade::C => "C",
            Grade::D => "D",
        };
        f.write_str(s)
    }
}

/// S ≥ 4.0; A in [3.5, 4.0); B in [2.5, 3.5); C in (1.0, 2.5); D ≤ 1.0.
pub fn grade(total: f64) -> Grade {
    if total >= 4.0 {
        Grade::S
    } else if total >= 3.5 {
        Grade::A
    } else if total >= 2.5 {
        Grade::B
    } else if total > 1.0 {
        Grade::C
    } else {
        Grade::D
    }
}

/// Share of samples per tier, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeDistribution {
    pub counts: [usize; 5],
    pub percentages: [f64; 5],
}

pub fn grade_distribution(totals: &[f64]) -> GradeDistribution {
    let mut counts = [0usize; 5];
    for t in totals {
        counts[grade(*t) as usize] += 1;
    }
    let n = totals.len().max(1) as f64;
    GradeDistribution {
        counts,
        percentages: counts.map(|c| 100.0 * c as f64 / n),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdEstimator {
    /// Bessel-corrected, divides by `n - 1`.
    #[default]
    Sample,
    /// Divides by `n`.
    Population,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGroup {
    pub id: String,
    /// Population label such as `dpo` or `nft`.
    pub population: String,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub id: String,
    pub population: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub population: String,
    pub groups: usize,
    pub mean_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationRatio {
    pub numerator: String,
    pub denominator: String,
    /// `mean_std(numerator) / mean_std(denominator)`; infinite when the
    /// denominator spread is zero.
    pub ratio: f64,
    pub numerator_larger: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdReport {
    pub estimator: StdEstimator,
    pub groups: Vec<GroupStats>,
    pub populations: Vec<PopulationSummary>,
    /// Present when exactly two populations occur; the first-seen population
    /// is the numerator.
    pub comparison: Option<PopulationRatio>,
}

/// Mean and standard deviation via Welford's single-pass update.
fn welford(samples: &[f64], estimator: StdEstimator) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, x) in samples.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let n = samples.len() as f64;
    let denom = match estimator {
        StdEstimator::Sample => n - 1.0,
        StdEstimator::Population => n,
    };
    (mean, (m2.max(0.0) / denom).sqrt())
}

pub fn group_std_report(groups: &[SampleGroup], estimator: StdEstimator) -> Result<StdReport> {
    let mut stats = Vec::with_capacity(groups.len());
    for g in groups {
        if g.samples.len() < 2 {
            return Err(Error::invalid(format!(
                "group {} has {} samples; at least 2 are required",
                g.id,
                g.samples.len()
            )));
        }
        if g.samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("group {} has a non-finite sample", g.id)));
        }
        let (mean, std) = welford(&g.samples, estimator);
        stats.push(GroupStats {
            id: g.id.clone(),
            population: g.population.clone(),
            n: g.samples.len(),
            mean,
            std,
        });
    }

    let mut populations: Vec<PopulationSummary> = Vec::new();
    for s in &stats {
        match populations.iter_mut().find(|p| p.population == s.population) {
            Some(p) => {
                p.groups += 1;
                p.mean_std += s.std;
            }
            None => populations.push(PopulationSummary {
                population: s.population.clone(),
                groups: 1,
                mean_std: s.std,
            }),
        }
    }
    for p in &mut populations {
        p.mean_std /= p.groups as f64;
    }

    let comparison = match populations.as_slice() {
        [a, b] => Some(PopulationRatio {
            numerator: a.population.clone(),
            denominator: b.population.clone(),
            ratio: if b.mean_std > 0.0 { a.mean_std / b.mean_std } else { f64::INFINITY },
            numerator_larger: a.mean_std > b.mean_std,
        }),
        _ => None,
    };

    Ok(StdReport {
        estimator,
        groups: stats,
        populations,
        comparison,
    })
}

/// Probabilities of drawing a single-condition vs a multi-condition task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixRatio {
    pub p_single: f64,
    pub p_multi: f64,
}

pub const MIX_START_SINGLE: f64 = 1.0;
pub const MIX_FINAL_SINGLE: f64 = 0.2;
pub const MIX_FINAL_MULTI: f64 = 0.8;

/// Linear warmup of the single-condition share from 10:0 down to the stable
/// 2:8 split, reached at `step == warmup_steps`.
pub fn mix_schedule(step: u64, warmup_steps: u64) -> Result<MixRatio> {
    if warmup_steps == 0 {
        return Err(Error::domain("warmup must be at least one step"));
    }
    if step >= warmup_steps {
        return Ok(MixRatio {
            p_single: MIX_FINAL_SINGLE,
            p_multi: MIX_FINAL_MULTI,
        });
    }
    let t = step as f64 / warmup_steps as f64;
    let p_single = MIX_START_SINGLE - (MIX_START_SINGLE - MIX_FINAL_SINGLE) * t;
    Ok(MixRatio {
        p_single,
        p_multi: 1.0 - p_single,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn card(a: f64, s: f64, p: f64) -> ScoreCard {
        ScoreCard {
            aesthetic: a,
            spatial_consistency: s,
            plausibility: p,
        }
    }

    #[test]
    fn expert_totals_from_table() {
        let t = expert_total(&card(2.66, 3.33, 3.79)).unwrap();
        assert!((t - 3.200).abs() < 1e-12);
        let t = expert_total(&card(1.26, 1.66, 1.80)).unwrap();
        assert!((t - 1.542).abs() < 1e-12);
        assert_eq!(round_display(t, 2), 1.54);
        let t = expert_total(&card(3.20, 4.28, 3.91)).unwrap();
        assert!((t - 3.737).abs() < 1e-12);
        assert_eq!(round_display(t, 2), 3.74);
        assert_eq!(expert_total(&card(0.0, 0.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn half_way_totals_round_up() {
        let t = expert_total(&card(3.21, 4.12, 3.85)).unwrap();
        assert_eq!(round_display(t, 2), 3.68);
    }

    #[test]
    fn out_of_scale_scores_rejected() {
        assert!(expert_total(&card(0.5, 3.0, 3.0)).is_err());
        assert!(expert_total(&card(5.1, 3.0, 3.0)).is_err());
        assert!(expert_total(&card(f64::NAN, 3.0, 3.0)).is_err());
    }

    #[test]
    fn grade_boundaries() {
        assert_eq!(grade(3.737), Grade::A);
        assert_eq!(grade(4.0), Grade::S);
        assert_eq!(grade(3.5), Grade::A);
        assert_eq!(grade(3.4999), Grade::B);
        assert_eq!(grade(2.5), Grade::B);
        assert_eq!(grade(2.4999), Grade::C);
        assert_eq!(grade(1.0001), Grade::C);
        assert_eq!(grade(1.0), Grade::D);
        assert_eq!(grade(0.0), Grade::D);
    }

    #[test]
    fn grade_sweep_is_a_partition() {
        for i in 0..=5000 {
            let t = i as f64 * 0.001;
            let hits = [
                t >= 4.0,
                (3.5..4.0).contains(&t),
                (2.5..3.5).contains(&t),
                t > 1.0 && t < 2.5,
                t <= 1.0,
            ];
            assert_eq!(hits.iter().filter(|h| **h).count(), 1, "total {t}");
            assert!(hits[grade(t) as usize], "total {t}");
        }
    }

    #[test]
    fn distribution_percentages() {
        let d = grade_distribution(&[4.2, 3.6, 3.7, 0.5]);
        assert_eq!(d.counts, [1, 2, 0, 0, 1]);
        assert_eq!(d.percentages, [25.0, 50.0, 0.0, 0.0, 25.0]);
    }

    #[test]
    fn composite_examples() {
        let n = RewardNormalizers::identity();
        let v = RewardVector {
            structural_iou: 0.7,
            omniaid: 0.2,
            longclip: 0.8,
            hpsv3: 0.5,
        };
        let r = composite_reward(&v, &RewardWeights::uniform(), &n).unwrap();
        assert!((r - 0.55).abs() < 1e-12);
        let only_iou = RewardWeights {
            structural_iou: 1.0,
            omniaid: 0.0,
            longclip: 0.0,
            hpsv3: 0.0,
        };
        assert_eq!(composite_reward(&v, &only_iou, &n).unwrap(), 0.7);
        let same = RewardVector {
            structural_iou: 0.3,
            omniaid: 0.3,
            longclip: 0.3,
            hpsv3: 0.3,
        };
        let w = RewardWeights {
            structural_iou: 2.0,
            omniaid: 0.5,
            longclip: 7.0,
            hpsv3: 1.0,
        };
        assert!((composite_reward(&same, &w, &n).unwrap() - 0.3).abs() < 1e-12);
        assert!(composite_reward(&v, &RewardWeights::uniform().scaled(0.0), &n).is_err());
    }

    #[test]
    fn default_normalizer_maps_hps() {
        let v = RewardVector {
            structural_iou: 1.0,
            omniaid: 1.0,
            longclip: 1.0,
            hpsv3: 5.0,
        };
        let r = composite_reward(&v, &RewardWeights::uniform(), &RewardNormalizers::default()).unwrap();
        assert!((r - 0.875).abs() < 1e-12);
    }

    #[test]
    fn std_examples() {
        let g = |id: &str, pop: &str, s: &[f64]| SampleGroup {
            id: id.into(),
            population: pop.into(),
            samples: s.to_vec(),
        };
        let rep = group_std_report(&[g("a", "dpo", &[3.0, 3.0]), g("b", "dpo", &[0.0, 2.0])], StdEstimator::Sample).unwrap();
        assert_eq!(rep.groups[0].std, 0.0);
        assert!((rep.groups[1].std - 2f64.sqrt()).abs() < 1e-15);
        assert!(rep.comparison.is_none());
        let pop = group_std_report(&[g("b", "dpo", &[0.0, 2.0])], StdEstimator::Population).unwrap();
        assert!((pop.groups[0].std - 1.0).abs() < 1e-15);
        assert!(group_std_report(&[g("c", "nft", &[1.0])], StdEstimator::Sample).is_err());
    }

    #[test]
    fn schedule_points() {
        let r = mix_schedule(0, 1000).unwrap();
        assert_eq!((r.p_single, r.p_multi), (1.0, 0.0));
        let r = mix_schedule(1000, 1000).unwrap();
        assert_eq!((r.p_single, r.p_multi), (0.2, 0.8));
        let r = mix_schedule(5000, 1000).unwrap();
        assert_eq!((r.p_single, r.p_multi), (0.2, 0.8));
        let r = mix_schedule(500, 1000).unwrap();
        assert!((r.p_single - 0.6).abs() < 1e-15 && (r.p_multi - 0.4).abs() < 1e-15);
        assert!(mix_schedule(0, 0).is_err());
    }

    proptest! {
        #[test]
        fn schedule_sums_to_one_and_decreases(step in 0u64..5000, warmup in 1u64..3000) {
            let a = mix_schedule(step, warmup).unwrap();
            let b = mix_schedule(step + 1, warmup).unwrap();
            prop_assert!((a.p_single + a.p_multi - 1.0).abs() <= 1e-12);
            prop_assert!(b.p_single <= a.p_single);
            prop_assert!(a.p_single >= 0.2 && a.p_single <= 1.0);
        }

        #[test]
        fn composite_scale_invariant(
            v in proptest::array::uniform4(0.0f64..1.0),
            w in proptest::array::uniform4(0.01f64..5.0),
            lambda in 0.01f64..100.0,
        ) {
            let rv = RewardVector { structural_iou: v[0], omniaid: v[1], longclip: v[2], hpsv3: v[3] };
            let rw = RewardWeights { structural_iou: w[0], omniaid: w[1], longclip: w[2], hpsv3: w[3] };
            let n = RewardNormalizers::identity();
            let a = composite_reward(&rv, &rw, &n).unwrap();
            let b = composite_reward(&rv, &rw.scaled(lambda), &n).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
