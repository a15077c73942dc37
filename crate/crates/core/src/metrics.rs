//! Tracking metrics: FP/FN rates, IDS, MOTP, MOTA, IDF1, DetA, AssA, HOTA,
//! and threshold sweeps.
//!
//! Both rates are normalised by the ground-truth point count, so
//! `MOTA = 1 - (FP rate + FN rate) / 100 - IDS / gt_total` holds on every
//! report. HOTA here is the single-threshold geometric mean of DetA and AssA.
//! A metric whose denominator is zero is `None`, never 0 or 100.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::ProjectionContext;
use crate::matcher::{
    associate_aligned, count_id_switches, match_aligned_frames, match_frames_by_time, AssociationResult,
    FrameAlignment, FrameMatchResult, DEFAULT_THRESHOLD_M,
};
use crate::trajectory::{Category, TrajectorySet};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CountSummary {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ids: usize,
    pub tpa: usize,
    pub fpa: usize,
    pub fna: usize,
    pub gt_total: usize,
    pub det_total: usize,
    pub sum_tp_distance_m: f64,
}

impl CountSummary {
    /// Point-matching counts of a sequence of frames (association counts left at zero).
    pub fn from_frames(frames: &[FrameMatchResult]) -> Self {
        let mut c = CountSummary::default();
        for f in frames {
            c.tp += f.tp.len();
            c.fp += f.fp.len();
            c.fn_ += f.fn_.len();
            c.gt_total += f.gt_count;
            c.det_total += f.det_count();
            c.sum_tp_distance_m += f.tp_distance_sum();
        }
        c.ids = count_id_switches(frames);
        c
    }

    pub fn with_association(mut self, a: &AssociationResult) -> Self {
        self.tpa = a.tpa;
        self.fpa = a.fpa;
        self.fna = a.fna;
        self
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

/// Mean distance of true positives.
pub fn compute_motp(c: &CountSummary) -> Option<f64> {
    ratio(c.sum_tp_distance_m, c.tp as f64)
}

/// `1 - (FP + FN + IDS) / gt_total`, as a fraction.
pub fn compute_mota(c: &CountSummary) -> Option<f64> {
    ratio((c.fp + c.fn_ + c.ids) as f64, c.gt_total as f64).map(|r| 1.0 - r)
}

pub fn compute_idp(c: &CountSummary) -> Option<f64> {
    ratio(c.tpa as f64, (c.tpa + c.fpa) as f64)
}

pub fn compute_idr(c: &CountSummary) -> Option<f64> {
    ratio(c.tpa as f64, (c.tpa + c.fna) as f64)
}

/// Harmonic mean of IDP and IDR: `2 TPA / (2 TPA + FPA + FNA)`.
pub fn compute_idf1(c: &CountSummary) -> Option<f64> {
    ratio(2.0 * c.tpa as f64, (2 * c.tpa + c.fpa + c.fna) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HotaScores {
    pub deta: Option<f64>,
    pub assa: Option<f64>,
    pub hota: Option<f64>,
}

pub fn compute_hota(c: &CountSummary) -> HotaScores {
    let deta = ratio(c.tp as f64, (c.tp + c.fp + c.fn_) as f64);
    let assa = ratio(c.tpa as f64, (c.tpa + c.fpa + c.fna) as f64);
    let hota = deta.zip(assa).map(|(d, a)| (d * a).sqrt());
    HotaScores { deta, assa, hota }
}

/// One row of a results table: one trial and one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub category: Category,
    pub trial_id: String,
    pub fp_rate_pct: Option<f64>,
    pub fn_rate_pct: Option<f64>,
    pub ids: usize,
    pub mota_pct: Option<f64>,
    pub motp_m: Option<f64>,
    pub idf1_pct: Option<f64>,
    pub deta_pct: Option<f64>,
    pub assa_pct: Option<f64>,
    pub hota_pct: Option<f64>,
    pub counts: CountSummary,
}

impl MetricsReport {
    pub fn from_counts(category: Category, trial_id: impl Into<String>, counts: CountSummary) -> Self {
        let pct = |x: Option<f64>| x.map(|v| 100.0 * v);
        let gt = counts.gt_total as f64;
        let hota = compute_hota(&counts);
        Self {
            category,
            trial_id: trial_id.into(),
            fp_rate_pct: pct(ratio(counts.fp as f64, gt)),
            fn_rate_pct: pct(ratio(counts.fn_ as f64, gt)),
            ids: counts.ids,
            mota_pct: pct(compute_mota(&counts)),
            motp_m: compute_motp(&counts),
            idf1_pct: pct(compute_idf1(&counts)),
            deta_pct: pct(hota.deta),
            assa_pct: pct(hota.assa),
            hota_pct: pct(hota.hota),
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub threshold_m: f64,
    pub max_gap_s: Option<f64>,
    pub same_category_only: bool,
    pub trial_id: String,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            threshold_m: DEFAULT_THRESHOLD_M,
            max_gap_s: None,
            same_category_only: true,
            trial_id: "trial".to_string(),
        }
    }
}

/// Everything produced while evaluating one category of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub alignment: FrameAlignment,
    pub frames: Vec<FrameMatchResult>,
    pub association: AssociationResult,
}

fn category_sets(det: &TrajectorySet, gt: &TrajectorySet, category: Category) -> Result<(TrajectorySet, TrajectorySet)> {
    let gt = gt.filter_category(category);
    if gt.is_empty() {
        return Err(Error::EmptyCategory(category.to_string()));
    }
    Ok((det.filter_category(category), gt))
}

/// Full pipeline for one category: alignment, point matching, ID switches and association.
pub fn evaluate(
    det: &TrajectorySet,
    gt: &TrajectorySet,
    latency_s: f64,
    category: Category,
    ctx: &ProjectionContext,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    let (det, gt) = category_sets(det, gt, category)?;
    let alignment = match_frames_by_time(&det, &gt, latency_s, opts.max_gap_s)?;
    let frames = match_aligned_frames(&det, &gt, &alignment, opts.threshold_m, ctx, opts.same_category_only)?;
    let association = associate_aligned(&det, &gt, &alignment, opts.threshold_m, ctx, opts.same_category_only)?;
    let counts = CountSummary::from_frames(&frames).with_association(&association);
    check_counts(&counts)?;
    Ok(Evaluation {
        report: MetricsReport::from_counts(category, opts.trial_id.clone(), counts),
        alignment,
        frames,
        association,
    })
}

fn check_counts(c: &CountSummary) -> Result<()> {
    if c.tp + c.fn_ != c.gt_total || c.tp + c.fp != c.det_total {
        return Err(Error::Consistency(format!("point counts do not balance: {c:?}")));
    }
    if c.tpa + c.fpa != c.det_total || c.tpa + c.fna != c.gt_total || c.tpa > c.tp {
        return Err(Error::Consistency(format!("association counts do not balance: {c:?}")));
    }
    Ok(())
}

/// Metrics for one category at one threshold, with default options.
pub fn compute_report(
    det: &TrajectorySet,
    gt: &TrajectorySet,
    latency_s: f64,
    threshold_m: f64,
    category: Category,
    ctx: &ProjectionContext,
) -> Result<MetricsReport> {
    let opts = EvalOptions {
        threshold_m,
        ..EvalOptions::default()
    };
    Ok(evaluate(det, gt, latency_s, category, ctx, &opts)?.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweep {
    pub category: Category,
    pub thresholds_m: Vec<f64>,
    pub fp_rate_pct: Vec<f64>,
    pub fn_rate_pct: Vec<f64>,
}

/// FP and FN rates of the point-matching pipeline at each threshold.
pub fn threshold_sweep(
    det: &TrajectorySet,
    gt: &TrajectorySet,
    latency_s: f64,
    thresholds_m: &[f64],
    category: Category,
    ctx: &ProjectionContext,
) -> Result<ThresholdSweep> {
    threshold_sweep_with(det, gt, latency_s, thresholds_m, category, ctx, None)
}

pub fn threshold_sweep_with(
    det: &TrajectorySet,
    gt: &TrajectorySet,
    latency_s: f64,
    thresholds_m: &[f64],
    category: Category,
    ctx: &ProjectionContext,
    max_gap_s: Option<f64>,
) -> Result<ThresholdSweep> {
    if thresholds_m.is_empty() {
        return Err(Error::InvalidArgument("no thresholds given".into()));
    }
    if thresholds_m.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument("thresholds must be positive and finite".into()));
    }
    if thresholds_m.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("thresholds must be strictly ascending".into()));
    }
    let (det, gt) = category_sets(det, gt, category)?;
    let alignment = match_frames_by_time(&det, &gt, latency_s, max_gap_s)?;

    let mut sweep = ThresholdSweep {
        category,
        thresholds_m: thresholds_m.to_vec(),
        fp_rate_pct: Vec::with_capacity(thresholds_m.len()),
        fn_rate_pct: Vec::with_capacity(thresholds_m.len()),
    };
    for &threshold in thresholds_m {
        let frames = match_aligned_frames(&det, &gt, &alignment, threshold, ctx, true)?;
        let c = CountSummary::from_frames(&frames);
        if c.gt_total == 0 {
            return Err(Error::InsufficientData(format!(
                "no {category} ground truth overlaps the detections in time"
            )));
        }
        sweep.fp_rate_pct.push(100.0 * c.fp as f64 / c.gt_total as f64);
        sweep.fn_rate_pct.push(100.0 * c.fn_ as f64 / c.gt_total as f64);
    }
    let rising = |v: &[f64]| v.windows(2).any(|w| w[1] > w[0]);
    if rising(&sweep.fp_rate_pct) || rising(&sweep.fn_rate_pct) {
        return Err(Error::Consistency(format!(
            "rates increase with threshold: fp {:?}, fn {:?}",
            sweep.fp_rate_pct, sweep.fn_rate_pct
        )));
    }
    Ok(sweep)
}
