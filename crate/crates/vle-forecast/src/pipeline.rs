//! The feature pipeline: from a validated [`RawBundle`] to the fixed
//! 15-column frame the models consume.
//!
//! Stages, in driver order ([`build_features`]):
//!
//! 1. aggregate clicks per (module, presentation, student, day);
//! 2. fill missing unregistration dates with the course-end constant;
//! 3. derive `total_reg_days = unregistration_date - registration_date`;
//! 4. average assessment weights per (module, presentation);
//! 5. inner-join demographics, registration, weights, and daily clicks into
//!    one row per student active day;
//! 6. ordinally encode categoricals against lexicographically sorted
//!    vocabularies (missing becomes -1);
//! 7. keep only rows up to a cutoff at a percentage of the observed date
//!    range (optionally a row-count cutoff instead);
//! 8. optionally clamp the registration span to the cutoff (leak-free mode)
//!    and optionally collapse to one row per student;
//! 9. zero out the columns excluded by the feature subset;
//! 10. split stratified by class, then standardize with moments fitted on
//!     the training rows only.
//!
//! The frame always stays 15 columns wide; subsets zero columns rather than
//! dropping them. Every transform parameter lands in [`TransformSidecar`] so
//! a persisted frame can be reloaded, re-split, and scored byte-identically.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Outcome, RawBundle, RegistrationRow, N_CLASSES};

pub const N_FEATURES: usize = 15;

/// Column order of every feature frame.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "code_module",
    "code_presentation",
    "gender",
    "region",
    "highest_education",
    "imd_band",
    "age_band",
    "num_of_prev_attempts",
    "studied_credits",
    "disability",
    "registration_date",
    "total_reg_days",
    "weight",
    "date",
    "total_clicks",
];

/// Indices of the ordinally encoded columns.
pub const CATEGORICAL_FEATURES: [usize; 8] = [0, 1, 2, 3, 4, 5, 6, 9];

pub const IDX_REGISTRATION_DATE: usize = 10;
pub const IDX_TOTAL_REG_DAYS: usize = 11;
pub const IDX_WEIGHT: usize = 12;
pub const IDX_DATE: usize = 13;
pub const IDX_TOTAL_CLICKS: usize = 14;

pub type PipelineResult<T> = Result<T, PipelineError>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("negative registration span {span} for student {student} in ({module}, {presentation})")]
    NegativeRegistrationSpan {
        module: String,
        presentation: String,
        student: u32,
        span: i32,
    },
    #[error("unregistration_date still missing for student {student} in ({module}, {presentation}); fill before deriving")]
    MissingUnregistration {
        module: String,
        presentation: String,
        student: u32,
    },
    #[error("unknown category {value:?} in column {column}")]
    UnknownCategory { column: String, value: String },
    #[error("duration percentage must lie in (0, 100] (got {0})")]
    InvalidPercentage(f64),
    #[error("temporal filter produced an empty frame")]
    EmptySlice,
    #[error("cannot split: class {0} has fewer than 2 rows")]
    DegenerateClass(String),
    #[error("train fraction must lie in (0, 1) (got {0})")]
    InvalidTrainFraction(f64),
    #[error("class weight for {class} must be positive (got {weight})")]
    NonPositiveClassWeight { class: String, weight: f64 },
    #[error("need at least 2 rows, frame has {0}")]
    TooFewRows(usize),
    #[error("student sample fraction must lie in (0, 1] (got {0})")]
    InvalidSampleFraction(f64),
    #[error("{0}")]
    Format(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("sidecar serialization: {0}")]
    Json(#[from] serde_json::Error),
}

// ============================================================================
// Config
// ============================================================================

/// Which columns carry data; the rest are zeroed in place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    /// Demographics plus registration features.
    Demo,
    /// Demographics plus clickstream (activity date and daily clicks).
    DemoClick,
    /// Demographics, clickstream, and the mean assessment weight.
    DemoClickAssess,
    All,
}

impl FeatureSet {
    pub fn mask(self) -> [bool; N_FEATURES] {
        let mut m = [false; N_FEATURES];
        for flag in &mut m[..=IDX_TOTAL_REG_DAYS] {
            *flag = true;
        }
        match self {
            FeatureSet::Demo => {}
            FeatureSet::DemoClick => {
                m[IDX_DATE] = true;
                m[IDX_TOTAL_CLICKS] = true;
            }
            FeatureSet::DemoClickAssess | FeatureSet::All => {
                m[IDX_DATE] = true;
                m[IDX_TOTAL_CLICKS] = true;
                m[IDX_WEIGHT] = true;
            }
        }
        m
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Demo => "demo",
            FeatureSet::DemoClick => "demo+click",
            FeatureSet::DemoClickAssess => "demo+click+assess",
            FeatureSet::All => "all",
        }
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "demo" => Ok(FeatureSet::Demo),
            "demo+click" => Ok(FeatureSet::DemoClick),
            "demo+click+assess" => Ok(FeatureSet::DemoClickAssess),
            "all" => Ok(FeatureSet::All),
            other => Err(format!(
                "unknown feature set {other:?} (expected demo, demo+click, demo+click+assess, or all)"
            )),
        }
    }
}

/// How the duration cutoff is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffMode {
    /// Keep rows whose date is at most `min + pct/100 * (max - min)`.
    DateRange,
    /// Keep the first `round(pct/100 * n)` rows after sorting by date.
    RowIndex,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub duration_pct: f64,
    pub feature_set: FeatureSet,
    pub cutoff_mode: CutoffMode,
    /// Collapse to one row per student after filtering.
    pub per_student: bool,
    /// Clamp total_reg_days so it never encodes post-cutoff information.
    pub no_leak: bool,
    pub train_frac: f64,
    pub seed: u64,
    /// Fill constant for missing unregistration dates.
    pub fill_unregistration: i32,
    /// Optional seeded student-level subsample applied before everything.
    pub student_sample_frac: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            duration_pct: 100.0,
            feature_set: FeatureSet::All,
            cutoff_mode: CutoffMode::DateRange,
            per_student: false,
            no_leak: false,
            train_frac: 0.70,
            seed: 0,
            fill_unregistration: 270,
            student_sample_frac: None,
        }
    }
}

/// Per-class loss weights in label order (Distinction, Fail, Pass, Withdrawn).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub [f64; N_CLASSES]);

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights([1.5, 1.5, 1.0, 1.0])
    }
}

impl ClassWeights {
    pub fn new(weights: [f64; N_CLASSES]) -> PipelineResult<Self> {
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(PipelineError::NonPositiveClassWeight {
                    class: Outcome::ALL[i].as_str().to_string(),
                    weight: w,
                });
            }
        }
        Ok(ClassWeights(weights))
    }

    pub fn get(&self, label: u8) -> f64 {
        self.0[label as usize]
    }
}

// ============================================================================
// Intermediate shapes
// ============================================================================

/// One aggregated activity day.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyClickRow {
    pub module: String,
    pub presentation: String,
    pub student: u32,
    pub date: i32,
    pub total_clicks: u64,
}

/// Clicks summed per (module, presentation, student, day), sorted by key.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DailyClicks {
    pub rows: Vec<DailyClickRow>,
}

/// A merged row before encoding: raw categorical text plus numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedRow {
    pub module: String,
    pub presentation: String,
    pub student: u32,
    pub date: i32,
    pub gender: String,
    pub region: String,
    pub highest_education: String,
    pub imd_band: Option<String>,
    pub age_band: String,
    pub disability: String,
    pub num_of_prev_attempts: f64,
    pub studied_credits: f64,
    pub registration_date: f64,
    pub total_reg_days: f64,
    pub weight: f64,
    pub total_clicks: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MergedFrame {
    pub rows: Vec<MergedRow>,
}

/// Identity of a feature row; survives every transform.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId {
    pub module: String,
    pub presentation: String,
    pub student: u32,
    pub date: i32,
}

/// Everything needed to reproduce or invert the frame's transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSidecar {
    pub format: String,
    pub feature_names: Vec<String>,
    /// Sorted vocabulary per categorical column.
    pub vocabularies: BTreeMap<String, Vec<String>>,
    /// Per-column moments fitted on the training rows; std is the raw
    /// population standard deviation (0 for constant columns).
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub duration_pct: f64,
    /// Realized cutoff in day units.
    pub cutoff_date: Option<f64>,
    pub cutoff_mode: CutoffMode,
    pub feature_set: FeatureSet,
    pub per_student: bool,
    pub no_leak: bool,
    pub train_frac: f64,
    pub seed: u64,
    pub fill_unregistration: i32,
    pub student_sample_frac: Option<f64>,
}

pub const SIDECAR_FORMAT: &str = "vle-forecast-sidecar-v1";

impl TransformSidecar {
    fn new(cfg: &PipelineConfig) -> Self {
        TransformSidecar {
            format: SIDECAR_FORMAT.to_string(),
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            vocabularies: BTreeMap::new(),
            means: vec![0.0; N_FEATURES],
            stds: vec![1.0; N_FEATURES],
            duration_pct: cfg.duration_pct,
            cutoff_date: None,
            cutoff_mode: cfg.cutoff_mode,
            feature_set: cfg.feature_set,
            per_student: cfg.per_student,
            no_leak: cfg.no_leak,
            train_frac: cfg.train_frac,
            seed: cfg.seed,
            fill_unregistration: cfg.fill_unregistration,
            student_sample_frac: cfg.student_sample_frac,
        }
    }
}

/// The encoded (and eventually scaled) frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub rows: Vec<[f64; N_FEATURES]>,
    pub labels: Vec<u8>,
    pub ids: Vec<RowId>,
    pub sidecar: TransformSidecar,
}

impl FeatureFrame {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Clone of the rows at `indices`, same sidecar.
    pub fn subset(&self, indices: &[usize]) -> FeatureFrame {
        FeatureFrame {
            rows: indices.iter().map(|&i| self.rows[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            sidecar: self.sidecar.clone(),
        }
    }

    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        let mut counts = [0; N_CLASSES];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Flat row-major copy of the feature matrix.
    pub fn matrix(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows.len() * N_FEATURES);
        for row in &self.rows {
            out.extend_from_slice(row);
        }
        out
    }
}

// ============================================================================
// Stage 1-5: aggregate, fill, derive, weights, merge
// ============================================================================

/// Sums clicks per (module, presentation, student, day).
///
/// Total clicks are conserved: the sum over the result equals the sum of
/// `sum_click` over `studentVle.csv`.
pub fn aggregate_clicks(bundle: &RawBundle) -> DailyClicks {
    let mut acc: HashMap<(&str, &str, u32, i32), u64> = HashMap::new();
    for r in &bundle.student_vle {
        *acc.entry((
            r.code_module.as_str(),
            r.code_presentation.as_str(),
            r.id_student,
            r.date,
        ))
        .or_insert(0) += r.sum_click as u64;
    }
    let mut keys: Vec<(&str, &str, u32, i32)> = acc.keys().copied().collect();
    keys.sort_unstable();
    DailyClicks {
        rows: keys
            .into_iter()
            .map(|k| DailyClickRow {
                module: k.0.to_string(),
                presentation: k.1.to_string(),
                student: k.2,
                date: k.3,
                total_clicks: acc[&k],
            })
            .collect(),
    }
}

fn fill_registration_rows(rows: &[RegistrationRow], fill: i32) -> Vec<RegistrationRow> {
    rows.iter()
        .map(|r| {
            let mut r = r.clone();
            if r.unregistration_date.is_none() {
                r.unregistration_date = Some(fill);
            }
            r
        })
        .collect()
}

/// Returns a bundle whose missing unregistration dates are set to `fill`.
pub fn fill_unregistration(bundle: &RawBundle, fill: i32) -> RawBundle {
    let mut out = bundle.clone();
    out.student_registration = fill_registration_rows(&bundle.student_registration, fill);
    out
}

/// `total_reg_days` per (module, presentation, student).
///
/// Requires unregistration dates to be filled already. Rows without a
/// registration date are skipped (and counted); a negative span is an error.
pub fn derive_total_reg_days(
    rows: &[RegistrationRow],
) -> PipelineResult<BTreeMap<(String, String, u32), i32>> {
    let mut out = BTreeMap::new();
    let mut skipped = 0usize;
    for r in rows {
        let Some(reg) = r.registration_date else {
            skipped += 1;
            continue;
        };
        let unreg = r
            .unregistration_date
            .ok_or_else(|| PipelineError::MissingUnregistration {
                module: r.code_module.clone(),
                presentation: r.code_presentation.clone(),
                student: r.id_student,
            })?;
        let span = unreg - reg;
        if span < 0 {
            return Err(PipelineError::NegativeRegistrationSpan {
                module: r.code_module.clone(),
                presentation: r.code_presentation.clone(),
                student: r.id_student,
                span,
            });
        }
        out.insert(
            (
                r.code_module.clone(),
                r.code_presentation.clone(),
                r.id_student,
            ),
            span,
        );
    }
    if skipped > 0 {
        log::warn!("{skipped} registration rows lack date_registration; their students are dropped");
    }
    Ok(out)
}

/// Mean assessment weight per (module, presentation) over the courses table.
///
/// Missing weights are excluded from the mean; a course without any weighted
/// assessment gets 0 with a warning.
pub fn average_assessment_weight(bundle: &RawBundle) -> BTreeMap<(String, String), f64> {
    let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for c in &bundle.courses {
        sums.insert((c.code_module.clone(), c.code_presentation.clone()), (0.0, 0));
    }
    for a in &bundle.assessments {
        if let Some(w) = a.weight {
            let e = sums
                .entry((a.code_module.clone(), a.code_presentation.clone()))
                .or_insert((0.0, 0));
            e.0 += w;
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(k, (sum, n))| {
            if n == 0 {
                log::warn!("({}, {}) has no weighted assessments; mean weight set to 0", k.0, k.1);
                (k, 0.0)
            } else {
                (k, sum / n as f64)
            }
        })
        .collect()
}

/// Inner join: demographics, registration span, mean weight, daily clicks.
///
/// One output row per daily-click row whose student resolves in both
/// `studentInfo` and `studentRegistration` (with a registration date).
/// Students with no VLE activity contribute no rows. Output order follows the
/// sorted daily-click keys.
pub fn merge_tables(
    bundle: &RawBundle,
    daily: &DailyClicks,
    weights: &BTreeMap<(String, String), f64>,
) -> PipelineResult<MergedFrame> {
    let trd = derive_total_reg_days(&bundle.student_registration)?;

    let mut info: HashMap<(&str, &str, u32), &crate::ingest::StudentInfoRow> = HashMap::new();
    for r in &bundle.student_info {
        info.insert(
            (r.code_module.as_str(), r.code_presentation.as_str(), r.id_student),
            r,
        );
    }
    let mut regs: HashMap<(&str, &str, u32), &RegistrationRow> = HashMap::new();
    for r in &bundle.student_registration {
        regs.insert(
            (r.code_module.as_str(), r.code_presentation.as_str(), r.id_student),
            r,
        );
    }

    let mut rows = Vec::with_capacity(daily.rows.len());
    let mut unmatched = 0usize;
    let mut missing_weight_groups: Vec<(String, String)> = Vec::new();
    for d in &daily.rows {
        let key = (d.module.as_str(), d.presentation.as_str(), d.student);
        let (Some(i), Some(r)) = (info.get(&key), regs.get(&key)) else {
            unmatched += 1;
            continue;
        };
        let Some(reg_date) = r.registration_date else {
            unmatched += 1;
            continue;
        };
        let span_key = (d.module.clone(), d.presentation.clone(), d.student);
        let Some(&span) = trd.get(&span_key) else {
            unmatched += 1;
            continue;
        };
        let wkey = (d.module.clone(), d.presentation.clone());
        let weight = match weights.get(&wkey) {
            Some(&w) => w,
            None => {
                if !missing_weight_groups.contains(&wkey) {
                    missing_weight_groups.push(wkey);
                }
                0.0
            }
        };
        rows.push(MergedRow {
            module: d.module.clone(),
            presentation: d.presentation.clone(),
            student: d.student,
            date: d.date,
            gender: i.gender.clone(),
            region: i.region.clone(),
            highest_education: i.highest_education.clone(),
            imd_band: i.imd_band.clone(),
            age_band: i.age_band.clone(),
            disability: i.disability.clone(),
            num_of_prev_attempts: i.num_of_prev_attempts as f64,
            studied_credits: i.studied_credits as f64,
            registration_date: reg_date as f64,
            total_reg_days: span as f64,
            weight,
            total_clicks: d.total_clicks as f64,
            label: i.final_result.label(),
        });
    }
    if unmatched > 0 {
        log::warn!("{unmatched} daily-click rows had no resolvable student and were dropped");
    }
    for (m, p) in missing_weight_groups {
        log::warn!("({m}, {p}) missing from the weight table; weight set to 0");
    }
    Ok(MergedFrame { rows })
}

// ============================================================================
// Stage 6: encoding
// ============================================================================

fn categorical_value(row: &MergedRow, feature: usize) -> Option<&str> {
    match feature {
        0 => Some(&row.module),
        1 => Some(&row.presentation),
        2 => Some(&row.gender),
        3 => Some(&row.region),
        4 => Some(&row.highest_education),
        5 => row.imd_band.as_deref(),
        6 => Some(&row.age_band),
        9 => Some(&row.disability),
        _ => unreachable!("feature {feature} is not categorical"),
    }
}

fn numeric_value(row: &MergedRow, feature: usize) -> f64 {
    match feature {
        7 => row.num_of_prev_attempts,
        8 => row.studied_credits,
        10 => row.registration_date,
        11 => row.total_reg_days,
        12 => row.weight,
        13 => row.date as f64,
        14 => row.total_clicks,
        _ => unreachable!("feature {feature} is not numeric"),
    }
}

/// Builds sorted vocabularies from the frame and encodes it.
///
/// Each categorical value maps to its index in the lexicographically sorted
/// vocabulary of values present in the frame; missing values map to -1.
pub fn encode_categoricals(merged: &MergedFrame) -> (FeatureFrame, BTreeMap<String, Vec<String>>) {
    let mut vocabularies: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for &f in &CATEGORICAL_FEATURES {
        let mut values: Vec<String> = merged
            .rows
            .iter()
            .filter_map(|r| categorical_value(r, f))
            .map(|s| s.to_string())
            .collect();
        values.sort_unstable();
        values.dedup();
        vocabularies.insert(FEATURE_NAMES[f].to_string(), values);
    }
    let frame = encode_with_vocabularies(merged, &vocabularies)
        .expect("vocabularies built from the same frame cover every value");
    (frame, vocabularies)
}

/// Encodes against existing vocabularies; unseen values are an error.
pub fn encode_with_vocabularies(
    merged: &MergedFrame,
    vocabularies: &BTreeMap<String, Vec<String>>,
) -> PipelineResult<FeatureFrame> {
    let mut rows = Vec::with_capacity(merged.rows.len());
    let mut labels = Vec::with_capacity(merged.rows.len());
    let mut ids = Vec::with_capacity(merged.rows.len());
    for r in &merged.rows {
        let mut row = [0.0f64; N_FEATURES];
        for f in 0..N_FEATURES {
            if CATEGORICAL_FEATURES.contains(&f) {
                let name = FEATURE_NAMES[f];
                row[f] = match categorical_value(r, f) {
                    None => -1.0,
                    Some(v) => {
                        let vocab = vocabularies.get(name).ok_or_else(|| {
                            PipelineError::Format(format!("sidecar lacks a vocabulary for {name}"))
                        })?;
                        match vocab.binary_search_by(|probe| probe.as_str().cmp(v)) {
                            Ok(i) => i as f64,
                            Err(_) => {
                                return Err(PipelineError::UnknownCategory {
                                    column: name.to_string(),
                                    value: v.to_string(),
                                })
                            }
                        }
                    }
                };
            } else {
                row[f] = numeric_value(r, f);
            }
        }
        rows.push(row);
        labels.push(r.label);
        ids.push(RowId {
            module: r.module.clone(),
            presentation: r.presentation.clone(),
            student: r.student,
            date: r.date,
        });
    }
    let mut sidecar = TransformSidecar::new(&PipelineConfig::default());
    sidecar.vocabularies = vocabularies.clone();
    Ok(FeatureFrame {
        rows,
        labels,
        ids,
        sidecar,
    })
}

// ============================================================================
// Stage 7-8: temporal filter, leak clamp, per-student collapse
// ============================================================================

/// Keeps rows up to the duration cutoff and sorts by date (stable).
///
/// Percentages outside (0, 100] are rejected; an empty result is an error.
/// The realized cutoff is recorded in the sidecar. Growing the percentage
/// never drops a surviving row: the survivors at `p1 <= p2` are a subset of
/// the survivors at `p2`.
pub fn temporal_filter(
    frame: FeatureFrame,
    pct: f64,
    mode: CutoffMode,
) -> PipelineResult<FeatureFrame> {
    if !(pct > 0.0 && pct <= 100.0) || !pct.is_finite() {
        return Err(PipelineError::InvalidPercentage(pct));
    }
    if frame.rows.is_empty() {
        return Err(PipelineError::EmptySlice);
    }
    let mut order: Vec<usize> = (0..frame.n_rows()).collect();
    order.sort_by_key(|&i| (frame.ids[i].date, i));

    let kept: Vec<usize>;
    let cutoff: f64;
    match mode {
        CutoffMode::DateRange => {
            let min = frame.ids[order[0]].date as f64;
            let max = frame.ids[*order.last().unwrap()].date as f64;
            cutoff = min + pct / 100.0 * (max - min);
            kept = order
                .into_iter()
                .take_while(|&i| frame.ids[i].date as f64 <= cutoff)
                .collect();
        }
        CutoffMode::RowIndex => {
            let n = ((pct / 100.0) * frame.n_rows() as f64).round() as usize;
            if n == 0 {
                return Err(PipelineError::EmptySlice);
            }
            kept = order.into_iter().take(n.min(frame.n_rows())).collect();
            cutoff = frame.ids[*kept.last().unwrap()].date as f64;
        }
    }
    if kept.is_empty() {
        return Err(PipelineError::EmptySlice);
    }
    let mut out = frame.subset(&kept);
    out.sidecar.duration_pct = pct;
    out.sidecar.cutoff_mode = mode;
    out.sidecar.cutoff_date = Some(cutoff);
    Ok(out)
}

/// Clamps `total_reg_days` to what is observable at the cutoff:
/// `max(0, min(span, cutoff - registration_date))`.
///
/// Requires raw (unscaled) columns; the driver runs it right after filtering.
pub fn clamp_registration_span(frame: &mut FeatureFrame, cutoff: f64) {
    for row in &mut frame.rows {
        let reg = row[IDX_REGISTRATION_DATE];
        let observable = (cutoff - reg).max(0.0);
        row[IDX_TOTAL_REG_DAYS] = row[IDX_TOTAL_REG_DAYS].min(observable);
    }
    frame.sidecar.no_leak = true;
}

/// Collapses to one row per student: clicks summed, date = latest surviving
/// activity day. Demographic and registration columns are constant per
/// student already. Output sorted by (module, presentation, student).
pub fn collapse_per_student(frame: FeatureFrame) -> FeatureFrame {
    let mut groups: BTreeMap<(String, String, u32), Vec<usize>> = BTreeMap::new();
    for (i, id) in frame.ids.iter().enumerate() {
        groups
            .entry((id.module.clone(), id.presentation.clone(), id.student))
            .or_default()
            .push(i);
    }
    let mut rows = Vec::with_capacity(groups.len());
    let mut labels = Vec::with_capacity(groups.len());
    let mut ids = Vec::with_capacity(groups.len());
    for (_, members) in groups {
        let last = *members
            .iter()
            .max_by_key(|&&i| (frame.ids[i].date, i))
            .unwrap();
        let mut row = frame.rows[last];
        row[IDX_TOTAL_CLICKS] = members.iter().map(|&i| frame.rows[i][IDX_TOTAL_CLICKS]).sum();
        row[IDX_DATE] = frame.ids[last].date as f64;
        rows.push(row);
        labels.push(frame.labels[last]);
        ids.push(frame.ids[last].clone());
    }
    let mut sidecar = frame.sidecar;
    sidecar.per_student = true;
    FeatureFrame {
        rows,
        labels,
        ids,
        sidecar,
    }
}

// ============================================================================
// Stage 9-10: subset mask, split, scaling
// ============================================================================

/// Zeroes the columns excluded by the subset.
pub fn apply_feature_mask(frame: &mut FeatureFrame, set: FeatureSet) {
    let mask = set.mask();
    for row in &mut frame.rows {
        for f in 0..N_FEATURES {
            if !mask[f] {
                row[f] = 0.0;
            }
        }
    }
    frame.sidecar.feature_set = set;
}

/// Seeded stratified partition of `labels` into (train, test) index sets.
///
/// Per class the train share is `round(train_frac * class_count)` within one
/// row (largest-remainder balancing keeps the overall train size at
/// `round(train_frac * n)`). Index sets come back sorted; the same seed
/// always produces the same partition. A class present with a single row
/// cannot be stratified and is an error.
pub fn split_indices(
    labels: &[u8],
    train_frac: f64,
    seed: u64,
) -> PipelineResult<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(PipelineError::InvalidTrainFraction(train_frac));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); N_CLASSES];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() == 1 {
            return Err(PipelineError::DegenerateClass(
                Outcome::ALL[c].as_str().to_string(),
            ));
        }
    }

    let n = labels.len();
    let target_total = (train_frac * n as f64).round() as usize;
    let mut base: Vec<usize> = Vec::with_capacity(N_CLASSES);
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(N_CLASSES);
    for (c, members) in by_class.iter().enumerate() {
        let exact = train_frac * members.len() as f64;
        base.push(exact.floor() as usize);
        remainders.push((c, exact - exact.floor()));
    }
    let mut extras = target_total.saturating_sub(base.iter().sum::<usize>());
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut take = base;
    for &(c, _) in &remainders {
        if extras == 0 {
            break;
        }
        if take[c] < by_class[c].len() {
            take[c] += 1;
            extras -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(target_total);
    let mut test = Vec::with_capacity(n - target_total);
    for (c, members) in by_class.iter().enumerate() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        train.extend_from_slice(&shuffled[..take[c]]);
        test.extend_from_slice(&shuffled[take[c]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Frame-level wrapper around [`split_indices`].
pub fn stratified_split(
    frame: &FeatureFrame,
    train_frac: f64,
    seed: u64,
) -> PipelineResult<(FeatureFrame, FeatureFrame)> {
    let (train, test) = split_indices(&frame.labels, train_frac, seed)?;
    Ok((frame.subset(&train), frame.subset(&test)))
}

/// Population mean and standard deviation per column over `indices`,
/// restricted to masked-in columns.
pub fn fit_scaler(
    rows: &[[f64; N_FEATURES]],
    indices: &[usize],
    mask: &[bool; N_FEATURES],
) -> ([f64; N_FEATURES], [f64; N_FEATURES]) {
    let mut means = [0.0; N_FEATURES];
    let mut stds = [1.0; N_FEATURES];
    if indices.is_empty() {
        return (means, stds);
    }
    let n = indices.len() as f64;
    for f in 0..N_FEATURES {
        if !mask[f] {
            continue;
        }
        let mean = indices.iter().map(|&i| rows[i][f]).sum::<f64>() / n;
        let var = indices
            .iter()
            .map(|&i| {
                let d = rows[i][f] - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        means[f] = mean;
        stds[f] = var.sqrt();
    }
    (means, stds)
}

/// Standardizes masked-in columns in place; constant columns become all 0.
pub fn apply_scaler(
    rows: &mut [[f64; N_FEATURES]],
    means: &[f64; N_FEATURES],
    stds: &[f64; N_FEATURES],
    mask: &[bool; N_FEATURES],
) {
    for row in rows {
        for f in 0..N_FEATURES {
            if !mask[f] {
                continue;
            }
            row[f] = if stds[f] == 0.0 {
                0.0
            } else {
                (row[f] - means[f]) / stds[f]
            };
        }
    }
}

// ============================================================================
// Correlation
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationEntry {
    pub feature: String,
    pub r: f64,
    /// True when the feature (or the label column) is constant; r is 0 then.
    pub zero_variance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationTable {
    /// Sorted by |r| descending, ties in feature order.
    pub entries: Vec<CorrelationEntry>,
}

/// Pearson correlation of every feature column against the class label.
pub fn pearson_correlation(frame: &FeatureFrame) -> PipelineResult<CorrelationTable> {
    let n = frame.n_rows();
    if n < 2 {
        return Err(PipelineError::TooFewRows(n));
    }
    let nf = n as f64;
    let y_mean = frame.labels.iter().map(|&l| l as f64).sum::<f64>() / nf;
    let y_var = frame
        .labels
        .iter()
        .map(|&l| {
            let d = l as f64 - y_mean;
            d * d
        })
        .sum::<f64>()
        / nf;
    let y_std = y_var.sqrt();

    let mut entries: Vec<(usize, CorrelationEntry)> = Vec::with_capacity(N_FEATURES);
    for f in 0..N_FEATURES {
        let x_mean = frame.rows.iter().map(|r| r[f]).sum::<f64>() / nf;
        let x_var = frame
            .rows
            .iter()
            .map(|r| {
                let d = r[f] - x_mean;
                d * d
            })
            .sum::<f64>()
            / nf;
        let x_std = x_var.sqrt();
        let (r, zero_variance) = if x_std == 0.0 || y_std == 0.0 {
            (0.0, true)
        } else {
            let cov = frame
                .rows
                .iter()
                .zip(frame.labels.iter())
                .map(|(row, &l)| (row[f] - x_mean) * (l as f64 - y_mean))
                .sum::<f64>()
                / nf;
            (cov / (x_std * y_std), false)
        };
        entries.push((
            f,
            CorrelationEntry {
                feature: FEATURE_NAMES[f].to_string(),
                r,
                zero_variance,
            },
        ));
    }
    entries.sort_by(|a, b| {
        b.1.r
            .abs()
            .partial_cmp(&a.1.r.abs())
            .unwrap()
            .then(a.0.cmp(&b.0))
    });
    Ok(CorrelationTable {
        entries: entries.into_iter().map(|(_, e)| e).collect(),
    })
}

// ============================================================================
// Student subsampling
// ============================================================================

/// Keeps a seeded fraction of students (by studentInfo key) across all
/// student-keyed tables. Courses, assessments, and VLE sites are untouched.
pub fn sample_students(
    bundle: &RawBundle,
    frac: f64,
    seed: u64,
) -> PipelineResult<RawBundle> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(PipelineError::InvalidSampleFraction(frac));
    }
    let mut keys: Vec<(String, String, u32)> = bundle
        .student_info
        .iter()
        .map(|r| (r.code_module.clone(), r.code_presentation.clone(), r.id_student))
        .collect();
    keys.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A);
    keys.shuffle(&mut rng);
    let kept = ((frac * keys.len() as f64).ceil() as usize).min(keys.len());
    let keep: std::collections::HashSet<(String, String, u32)> =
        keys.into_iter().take(kept).collect();

    let mut out = bundle.clone();
    out.student_info.retain(|r| {
        keep.contains(&(r.code_module.clone(), r.code_presentation.clone(), r.id_student))
    });
    out.student_registration.retain(|r| {
        keep.contains(&(r.code_module.clone(), r.code_presentation.clone(), r.id_student))
    });
    out.student_vle.retain(|r| {
        keep.contains(&(r.code_module.clone(), r.code_presentation.clone(), r.id_student))
    });
    let students: std::collections::HashSet<u32> = keep.iter().map(|k| k.2).collect();
    out.student_assessment.retain(|r| students.contains(&r.id_student));
    Ok(out)
}

// ============================================================================
// Driver
// ============================================================================

/// Runs the whole pipeline and returns the complete scaled frame.
///
/// The frame contains both prospective splits; callers recover the partition
/// with [`split_indices`] on the frame's labels using the sidecar's
/// `train_frac` and `seed`. Scaling moments are fitted on the train rows
/// only. The result is deterministic in (bundle, config).
pub fn build_features(bundle: &RawBundle, cfg: &PipelineConfig) -> PipelineResult<FeatureFrame> {
    let sampled;
    let bundle = match cfg.student_sample_frac {
        Some(frac) if frac < 1.0 => {
            sampled = sample_students(bundle, frac, cfg.seed)?;
            &sampled
        }
        Some(frac) => {
            // Validate even when the fraction is a no-op.
            if !(frac > 0.0 && frac <= 1.0) {
                return Err(PipelineError::InvalidSampleFraction(frac));
            }
            bundle
        }
        None => bundle,
    };

    let filled = fill_registration_rows(&bundle.student_registration, cfg.fill_unregistration);
    let working = RawBundle {
        student_registration: filled,
        ..bundle.clone()
    };
    let daily = aggregate_clicks(&working);
    let weights = average_assessment_weight(&working);
    let merged = merge_tables(&working, &daily, &weights)?;
    let (frame, vocabularies) = encode_categoricals(&merged);

    let mut frame = temporal_filter(frame, cfg.duration_pct, cfg.cutoff_mode)?;
    let cutoff = frame.sidecar.cutoff_date.expect("filter records the cutoff");
    if cfg.no_leak {
        clamp_registration_span(&mut frame, cutoff);
    }
    if cfg.per_student {
        frame = collapse_per_student(frame);
    }
    apply_feature_mask(&mut frame, cfg.feature_set);

    let (train_idx, _) = split_indices(&frame.labels, cfg.train_frac, cfg.seed)?;
    let mask = cfg.feature_set.mask();
    let (means, stds) = fit_scaler(&frame.rows, &train_idx, &mask);
    apply_scaler(&mut frame.rows, &means, &stds, &mask);

    frame.sidecar = TransformSidecar {
        vocabularies,
        means: means.to_vec(),
        stds: stds.to_vec(),
        cutoff_date: Some(cutoff),
        ..TransformSidecar::new(cfg)
    };
    frame.sidecar.duration_pct = cfg.duration_pct;
    Ok(frame)
}

// ============================================================================
// Persistence
// ============================================================================

/// Writes `features.csv` and `sidecar.json` into `dir`.
///
/// Floats are written in shortest round-trip form, so reloading reproduces
/// the frame exactly and identical inputs produce byte-identical files.
pub fn save_features(frame: &FeatureFrame, dir: &Path) -> PipelineResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let csv_path = dir.join("features.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|source| PipelineError::Csv {
        path: csv_path.clone(),
        source,
    })?;
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.extend_from_slice(&["label", "code_module", "code_presentation", "id_student", "date"]);
    w.write_record(&header).map_err(|source| PipelineError::Csv {
        path: csv_path.clone(),
        source,
    })?;
    for i in 0..frame.n_rows() {
        let mut record: Vec<String> = frame.rows[i].iter().map(|v| v.to_string()).collect();
        record.push(frame.labels[i].to_string());
        record.push(frame.ids[i].module.clone());
        record.push(frame.ids[i].presentation.clone());
        record.push(frame.ids[i].student.to_string());
        record.push(frame.ids[i].date.to_string());
        w.write_record(&record).map_err(|source| PipelineError::Csv {
            path: csv_path.clone(),
            source,
        })?;
    }
    w.flush().map_err(|source| PipelineError::Io {
        path: csv_path.clone(),
        source,
    })?;

    let sidecar_path = dir.join("sidecar.json");
    let file = std::fs::File::create(&sidecar_path).map_err(|source| PipelineError::Io {
        path: sidecar_path.clone(),
        source,
    })?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &frame.sidecar)?;
    Ok(())
}

/// Loads a frame from a `features.csv` with its sibling `sidecar.json`.
pub fn load_features(features_csv: &Path) -> PipelineResult<FeatureFrame> {
    let sidecar_path = features_csv.with_file_name("sidecar.json");
    let file = std::fs::File::open(&sidecar_path).map_err(|source| PipelineError::Io {
        path: sidecar_path.clone(),
        source,
    })?;
    let sidecar: TransformSidecar = serde_json::from_reader(std::io::BufReader::new(file))?;
    if sidecar.format != SIDECAR_FORMAT {
        return Err(PipelineError::Format(format!(
            "unsupported sidecar format {:?}",
            sidecar.format
        )));
    }
    if sidecar.means.len() != N_FEATURES || sidecar.stds.len() != N_FEATURES {
        return Err(PipelineError::Format(
            "sidecar moments do not match the 15-column layout".to_string(),
        ));
    }

    let mut reader = csv::Reader::from_path(features_csv).map_err(|source| PipelineError::Csv {
        path: features_csv.to_path_buf(),
        source,
    })?;
    let headers = reader
        .headers()
        .map_err(|source| PipelineError::Csv {
            path: features_csv.to_path_buf(),
            source,
        })?
        .clone();
    let expected_cols = N_FEATURES + 5;
    if headers.len() != expected_cols {
        return Err(PipelineError::Format(format!(
            "features file has {} columns, expected {expected_cols}",
            headers.len()
        )));
    }
    for (i, name) in FEATURE_NAMES.iter().enumerate() {
        if headers.get(i) != Some(name) {
            return Err(PipelineError::Format(format!(
                "features column {i} is {:?}, expected {name:?}",
                headers.get(i).unwrap_or("<none>")
            )));
        }
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|source| PipelineError::Csv {
            path: features_csv.to_path_buf(),
            source,
        })?;
        let field = |i: usize| -> PipelineResult<&str> {
            record.get(i).ok_or_else(|| {
                PipelineError::Format(format!("features row {} is short", line + 2))
            })
        };
        let mut row = [0.0f64; N_FEATURES];
        for (f, slot) in row.iter_mut().enumerate() {
            *slot = field(f)?.parse().map_err(|e| {
                PipelineError::Format(format!("features row {}: {e}", line + 2))
            })?;
        }
        let label: u8 = field(N_FEATURES)?.parse().map_err(|e| {
            PipelineError::Format(format!("features row {} label: {e}", line + 2))
        })?;
        if label as usize >= N_CLASSES {
            return Err(PipelineError::Format(format!(
                "features row {}: label {label} out of range",
                line + 2
            )));
        }
        rows.push(row);
        labels.push(label);
        ids.push(RowId {
            module: field(N_FEATURES + 1)?.to_string(),
            presentation: field(N_FEATURES + 2)?.to_string(),
            student: field(N_FEATURES + 3)?.parse().map_err(|e| {
                PipelineError::Format(format!("features row {} id_student: {e}", line + 2))
            })?,
            date: field(N_FEATURES + 4)?.parse().map_err(|e| {
                PipelineError::Format(format!("features row {} date: {e}", line + 2))
            })?,
        });
    }
    Ok(FeatureFrame {
        rows,
        labels,
        ids,
        sidecar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{StudentVleRow, VleRow};
    use crate::synth::{generate_bundle_in_memory, SynthConfig};

    fn synth_bundle(n: usize, seed: u64) -> RawBundle {
        let cfg = SynthConfig {
            n_students: n,
            seed,
            ..SynthConfig::default()
        };
        generate_bundle_in_memory(&cfg).unwrap().0
    }

    fn vle_row(student: u32, site: u32, date: i32, clicks: u32) -> StudentVleRow {
        StudentVleRow {
            code_module: "AAA".into(),
            code_presentation: "2014J".into(),
            id_student: student,
            id_site: site,
            date,
            sum_click: clicks,
        }
    }

    #[test]
    fn aggregate_sums_across_sites_and_conserves_clicks() {
        let bundle = RawBundle {
            student_vle: vec![
                vle_row(1, 10, 0, 3),
                vle_row(1, 11, 0, 5),
                vle_row(1, 10, 1, 2),
                vle_row(2, 10, 0, 7),
                vle_row(1, 10, 0, 1), // same site and day twice is legal
            ],
            ..RawBundle::default()
        };
        let daily = aggregate_clicks(&bundle);
        assert_eq!(daily.rows.len(), 3);
        assert_eq!(daily.rows[0].total_clicks, 9); // student 1 day 0: 3+5+1
        assert_eq!(daily.rows[1].total_clicks, 2);
        assert_eq!(daily.rows[2].total_clicks, 7);
        let before: u64 = bundle.student_vle.iter().map(|r| r.sum_click as u64).sum();
        let after: u64 = daily.rows.iter().map(|r| r.total_clicks).sum();
        assert_eq!(before, after);
        // Keys unique and sorted.
        for w in daily.rows.windows(2) {
            let ka = (&w[0].module, &w[0].presentation, w[0].student, w[0].date);
            let kb = (&w[1].module, &w[1].presentation, w[1].student, w[1].date);
            assert!(ka < kb);
        }
    }

    #[test]
    fn fill_touches_only_missing_unregistration() {
        let bundle = synth_bundle(50, 1);
        let filled = fill_unregistration(&bundle, 270);
        for (a, b) in bundle
            .student_registration
            .iter()
            .zip(filled.student_registration.iter())
        {
            match a.unregistration_date {
                Some(v) => assert_eq!(b.unregistration_date, Some(v)),
                None => assert_eq!(b.unregistration_date, Some(270)),
            }
        }
    }

    #[test]
    fn derive_span_and_negative_error() {
        let mut rows = vec![RegistrationRow {
            code_module: "AAA".into(),
            code_presentation: "2014J".into(),
            id_student: 1,
            registration_date: Some(-30),
            unregistration_date: Some(270),
        }];
        let spans = derive_total_reg_days(&rows).unwrap();
        assert_eq!(spans[&("AAA".into(), "2014J".into(), 1)], 300);

        rows[0].registration_date = Some(50);
        rows[0].unregistration_date = Some(20);
        assert!(matches!(
            derive_total_reg_days(&rows),
            Err(PipelineError::NegativeRegistrationSpan { span: -30, .. })
        ));

        rows[0].registration_date = None;
        let spans = derive_total_reg_days(&rows).unwrap();
        assert!(spans.is_empty());

        rows[0].registration_date = Some(0);
        rows[0].unregistration_date = None;
        assert!(matches!(
            derive_total_reg_days(&rows),
            Err(PipelineError::MissingUnregistration { .. })
        ));
    }

    #[test]
    fn mean_weight_per_course() {
        let bundle = synth_bundle(10, 2);
        let weights = average_assessment_weight(&bundle);
        // Weights are 10,15,20,25,30 shifted by 4 per course index.
        assert!((weights[&("AAA".into(), "2014J".into())] - 20.0).abs() < 1e-12);
        assert!((weights[&("BBB".into(), "2014J".into())] - 24.0).abs() < 1e-12);
    }

    #[test]
    fn course_without_assessments_gets_zero_weight() {
        let mut bundle = synth_bundle(10, 3);
        bundle.assessments.retain(|a| a.code_module != "BBB");
        let weights = average_assessment_weight(&bundle);
        assert_eq!(weights[&("BBB".into(), "2014J".into())], 0.0);
    }

    #[test]
    fn merge_joins_each_active_day_once() {
        let bundle = synth_bundle(80, 4);
        let filled = fill_unregistration(&bundle, 270);
        let daily = aggregate_clicks(&filled);
        let weights = average_assessment_weight(&filled);
        let merged = merge_tables(&filled, &daily, &weights).unwrap();
        assert_eq!(merged.rows.len(), daily.rows.len());
        for r in &merged.rows {
            assert!(r.total_reg_days >= 0.0);
            assert!(r.total_clicks >= 1.0);
        }
    }

    #[test]
    fn merge_skips_unknown_students() {
        let mut bundle = synth_bundle(20, 5);
        bundle.student_vle.push(vle_row(999_999, 1, 3, 4));
        let filled = fill_unregistration(&bundle, 270);
        let daily = aggregate_clicks(&filled);
        let weights = average_assessment_weight(&filled);
        let merged = merge_tables(&filled, &daily, &weights).unwrap();
        assert!(merged.rows.iter().all(|r| r.student != 999_999));
    }

    #[test]
    fn students_without_vle_rows_contribute_nothing() {
        let mut bundle = synth_bundle(20, 6);
        let victim = bundle.student_info[0].id_student;
        bundle.student_vle.retain(|r| r.id_student != victim);
        let filled = fill_unregistration(&bundle, 270);
        let daily = aggregate_clicks(&filled);
        let weights = average_assessment_weight(&filled);
        let merged = merge_tables(&filled, &daily, &weights).unwrap();
        assert!(merged.rows.iter().all(|r| r.student != victim));
    }

    fn encoded_frame(n: usize, seed: u64) -> FeatureFrame {
        let bundle = synth_bundle(n, seed);
        let filled = fill_unregistration(&bundle, 270);
        let daily = aggregate_clicks(&filled);
        let weights = average_assessment_weight(&filled);
        let merged = merge_tables(&filled, &daily, &weights).unwrap();
        encode_categoricals(&merged).0
    }

    #[test]
    fn vocabularies_are_sorted_and_codes_match() {
        let bundle = synth_bundle(100, 7);
        let filled = fill_unregistration(&bundle, 270);
        let daily = aggregate_clicks(&filled);
        let weights = average_assessment_weight(&filled);
        let merged = merge_tables(&filled, &daily, &weights).unwrap();
        let (frame, vocab) = encode_categoricals(&merged);
        for values in vocab.values() {
            let mut sorted = values.clone();
            sorted.sort();
            assert_eq!(values, &sorted);
        }
        // gender F < M: a row with gender M must encode to 1.
        let g = &vocab["gender"];
        if g.len() == 2 {
            assert_eq!(g, &vec!["F".to_string(), "M".to_string()]);
            let m_row = merged.rows.iter().position(|r| r.gender == "M").unwrap();
            assert_eq!(frame.rows[m_row][2], 1.0);
        }
        // Missing imd_band encodes to -1 and never enters the vocabulary.
        if let Some(i) = merged.rows.iter().position(|r| r.imd_band.is_none()) {
            assert_eq!(frame.rows[i][5], -1.0);
        }
        assert!(!vocab["imd_band"].iter().any(|v| v.is_empty()));
    }

    #[test]
    fn unseen_category_is_an_error() {
        let bundle = synth_bundle(30, 8);
        let filled = fill_unregistration(&bundle, 270);
        let daily = aggregate_clicks(&filled);
        let weights = average_assessment_weight(&filled);
        let mut merged = merge_tables(&filled, &daily, &weights).unwrap();
        let (_, vocab) = encode_categoricals(&merged);
        merged.rows[0].region = "Atlantis".into();
        match encode_with_vocabularies(&merged, &vocab) {
            Err(PipelineError::UnknownCategory { column, value }) => {
                assert_eq!(column, "region");
                assert_eq!(value, "Atlantis");
            }
            other => panic!("expected UnknownCategory, got {other:?}"),
        }
    }

    #[test]
    fn filter_full_duration_keeps_everything() {
        let frame = encoded_frame(60, 9);
        let n = frame.n_rows();
        let out = temporal_filter(frame, 100.0, CutoffMode::DateRange).unwrap();
        assert_eq!(out.n_rows(), n);
        for w in out.ids.windows(2) {
            assert!(w[0].date <= w[1].date);
        }
    }

    #[test]
    fn filter_uniform_dates_cuts_at_percentage() {
        let mut frame = encoded_frame(30, 10);
        // Rewrite dates to 0..=100 round-robin.
        for (i, id) in frame.ids.iter_mut().enumerate() {
            id.date = (i % 101) as i32;
        }
        let out = temporal_filter(frame, 20.0, CutoffMode::DateRange).unwrap();
        assert!(out.ids.iter().all(|id| id.date <= 20));
        assert!(out.ids.iter().any(|id| id.date == 20));
    }

    #[test]
    fn filter_survivors_nest_as_percentage_grows() {
        let frame = encoded_frame(50, 11);
        let small = temporal_filter(frame.clone(), 20.0, CutoffMode::DateRange).unwrap();
        let large = temporal_filter(frame, 40.0, CutoffMode::DateRange).unwrap();
        let large_ids: std::collections::HashSet<&RowId> = large.ids.iter().collect();
        for id in &small.ids {
            assert!(large_ids.contains(id));
        }
    }

    #[test]
    fn filter_row_index_mode_counts_rows() {
        let frame = encoded_frame(40, 12);
        let n = frame.n_rows();
        let out = temporal_filter(frame, 25.0, CutoffMode::RowIndex).unwrap();
        assert_eq!(out.n_rows(), ((0.25 * n as f64).round() as usize).max(1));
    }

    #[test]
    fn filter_rejects_bad_percentages() {
        let frame = encoded_frame(10, 13);
        assert!(matches!(
            temporal_filter(frame.clone(), 0.0, CutoffMode::DateRange),
            Err(PipelineError::InvalidPercentage(_))
        ));
        assert!(matches!(
            temporal_filter(frame.clone(), 101.0, CutoffMode::DateRange),
            Err(PipelineError::InvalidPercentage(_))
        ));
        let empty = FeatureFrame {
            rows: vec![],
            labels: vec![],
            ids: vec![],
            sidecar: frame.sidecar.clone(),
        };
        assert!(matches!(
            temporal_filter(empty, 50.0, CutoffMode::DateRange),
            Err(PipelineError::EmptySlice)
        ));
    }

    #[test]
    fn leak_clamp_bounds_span_by_cutoff() {
        let mut frame = encoded_frame(60, 14);
        frame = temporal_filter(frame, 10.0, CutoffMode::DateRange).unwrap();
        let cutoff = frame.sidecar.cutoff_date.unwrap();
        let before: Vec<f64> = frame.rows.iter().map(|r| r[IDX_TOTAL_REG_DAYS]).collect();
        clamp_registration_span(&mut frame, cutoff);
        for (row, &b) in frame.rows.iter().zip(before.iter()) {
            let clamped = row[IDX_TOTAL_REG_DAYS];
            assert!(clamped <= b + 1e-12);
            assert!(clamped <= (cutoff - row[IDX_REGISTRATION_DATE]).max(0.0) + 1e-12);
            assert!(clamped >= 0.0);
        }
    }

    #[test]
    fn per_student_collapse_sums_clicks() {
        let frame = encoded_frame(40, 15);
        let total_before: f64 = frame.rows.iter().map(|r| r[IDX_TOTAL_CLICKS]).sum();
        let students: std::collections::HashSet<u32> =
            frame.ids.iter().map(|id| id.student).collect();
        let collapsed = collapse_per_student(frame);
        assert_eq!(collapsed.n_rows(), students.len());
        let total_after: f64 = collapsed.rows.iter().map(|r| r[IDX_TOTAL_CLICKS]).sum();
        assert!((total_before - total_after).abs() < 1e-9);
        for (row, id) in collapsed.rows.iter().zip(collapsed.ids.iter()) {
            assert_eq!(row[IDX_DATE], id.date as f64);
        }
    }

    #[test]
    fn demo_mask_zeroes_click_and_assessment_columns() {
        let mut frame = encoded_frame(30, 16);
        apply_feature_mask(&mut frame, FeatureSet::Demo);
        for row in &frame.rows {
            assert_eq!(row[IDX_WEIGHT], 0.0);
            assert_eq!(row[IDX_DATE], 0.0);
            assert_eq!(row[IDX_TOTAL_CLICKS], 0.0);
            assert!(row[IDX_TOTAL_REG_DAYS] != 0.0 || row[IDX_REGISTRATION_DATE] != 0.0);
        }
    }

    #[test]
    fn split_is_stratified_within_one_row() {
        let mut labels = Vec::new();
        for c in 0..4u8 {
            labels.extend(std::iter::repeat_n(c, 25));
        }
        let (train, test) = split_indices(&labels, 0.70, 42).unwrap();
        assert_eq!(train.len(), 70);
        assert_eq!(test.len(), 30);
        let mut counts = [0usize; 4];
        for &i in &train {
            counts[labels[i] as usize] += 1;
        }
        for &c in &counts {
            assert!(c == 17 || c == 18, "per-class train count {c}");
        }
        // Partition: no overlap, full cover.
        let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn split_same_seed_same_partition() {
        let labels: Vec<u8> = (0..97).map(|i| (i % 4) as u8).collect();
        let a = split_indices(&labels, 0.70, 5).unwrap();
        let b = split_indices(&labels, 0.70, 5).unwrap();
        assert_eq!(a, b);
        let c = split_indices(&labels, 0.70, 6).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn split_rejects_single_row_class() {
        let mut labels = vec![2u8; 20];
        labels.push(3);
        match split_indices(&labels, 0.70, 1) {
            Err(PipelineError::DegenerateClass(c)) => assert_eq!(c, "Withdrawn"),
            other => panic!("expected DegenerateClass, got {other:?}"),
        }
    }

    #[test]
    fn scaler_standardizes_train_columns() {
        let mut frame = encoded_frame(120, 17);
        let mask = FeatureSet::All.mask();
        let (train, _) = split_indices(&frame.labels, 0.70, 7).unwrap();
        let (means, stds) = fit_scaler(&frame.rows, &train, &mask);
        apply_scaler(&mut frame.rows, &means, &stds, &mask);
        for f in 0..N_FEATURES {
            if stds[f] == 0.0 {
                assert!(frame.rows.iter().all(|r| r[f] == 0.0));
                continue;
            }
            let n = train.len() as f64;
            let mean = train.iter().map(|&i| frame.rows[i][f]).sum::<f64>() / n;
            let var = train
                .iter()
                .map(|&i| (frame.rows[i][f] - mean).powi(2))
                .sum::<f64>()
                / n;
            assert!(mean.abs() < 1e-9, "column {f} train mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-9, "column {f} train std");
        }
    }

    #[test]
    fn correlation_known_values_and_order() {
        let sidecar = TransformSidecar::new(&PipelineConfig::default());
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut ids = Vec::new();
        for i in 0..8 {
            let mut row = [0.0; N_FEATURES];
            row[0] = i as f64; // perfectly anti-aligned with label below
            row[1] = 5.0; // constant
            rows.push(row);
            labels.push(if i < 4 { 3 } else { 0 });
            ids.push(RowId {
                module: "AAA".into(),
                presentation: "2014J".into(),
                student: i as u32,
                date: i,
            });
        }
        let frame = FeatureFrame {
            rows,
            labels,
            ids,
            sidecar,
        };
        let table = pearson_correlation(&frame).unwrap();
        assert_eq!(table.entries[0].feature, "code_module");
        assert!(table.entries[0].r < -0.8);
        let constant = table
            .entries
            .iter()
            .find(|e| e.feature == "code_presentation")
            .unwrap();
        assert_eq!(constant.r, 0.0);
        assert!(constant.zero_variance);
        for w in table.entries.windows(2) {
            assert!(w[0].r.abs() >= w[1].r.abs() - 1e-15);
        }
    }

    #[test]
    fn correlation_needs_two_rows() {
        let frame = encoded_frame(10, 18).subset(&[0]);
        assert!(matches!(
            pearson_correlation(&frame),
            Err(PipelineError::TooFewRows(1))
        ));
    }

    #[test]
    fn build_features_deterministic_and_scaled() {
        let bundle = synth_bundle(150, 19);
        let cfg = PipelineConfig {
            duration_pct: 40.0,
            seed: 3,
            ..PipelineConfig::default()
        };
        let a = build_features(&bundle, &cfg).unwrap();
        let b = build_features(&bundle, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.n_rows() > 0);
        assert_eq!(a.sidecar.duration_pct, 40.0);
        assert!(a.sidecar.cutoff_date.is_some());
        // Every id resolves to exactly one studentInfo row.
        let students: std::collections::HashSet<(String, String, u32)> = bundle
            .student_info
            .iter()
            .map(|r| (r.code_module.clone(), r.code_presentation.clone(), r.id_student))
            .collect();
        for id in &a.ids {
            assert!(students.contains(&(id.module.clone(), id.presentation.clone(), id.student)));
        }
    }

    #[test]
    fn build_features_demo_subset_zeroes_masked_columns() {
        let bundle = synth_bundle(100, 20);
        let cfg = PipelineConfig {
            feature_set: FeatureSet::Demo,
            seed: 1,
            ..PipelineConfig::default()
        };
        let frame = build_features(&bundle, &cfg).unwrap();
        for row in &frame.rows {
            assert_eq!(row[IDX_TOTAL_CLICKS], 0.0);
            assert_eq!(row[IDX_WEIGHT], 0.0);
            assert_eq!(row[IDX_DATE], 0.0);
        }
    }

    #[test]
    fn save_load_round_trips_exactly() {
        let bundle = synth_bundle(60, 21);
        let cfg = PipelineConfig {
            seed: 9,
            ..PipelineConfig::default()
        };
        let frame = build_features(&bundle, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_features(&frame, dir.path()).unwrap();
        let reloaded = load_features(&dir.path().join("features.csv")).unwrap();
        assert_eq!(frame, reloaded);
    }

    #[test]
    fn save_twice_is_byte_identical() {
        let bundle = synth_bundle(40, 22);
        let frame = build_features(&bundle, &PipelineConfig::default()).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        save_features(&frame, a.path()).unwrap();
        save_features(&frame, b.path()).unwrap();
        for name in ["features.csv", "sidecar.json"] {
            assert_eq!(
                std::fs::read(a.path().join(name)).unwrap(),
                std::fs::read(b.path().join(name)).unwrap()
            );
        }
    }

    #[test]
    fn sample_students_keeps_fraction() {
        let bundle = synth_bundle(100, 23);
        let sampled = sample_students(&bundle, 0.10, 4).unwrap();
        assert_eq!(sampled.student_info.len(), 10);
        assert_eq!(sampled.student_registration.len(), 10);
        let kept: std::collections::HashSet<u32> =
            sampled.student_info.iter().map(|r| r.id_student).collect();
        assert!(sampled.student_vle.iter().all(|r| kept.contains(&r.id_student)));
        // Deterministic.
        let again = sample_students(&bundle, 0.10, 4).unwrap();
        assert_eq!(sampled, again);
    }

    #[test]
    fn class_weight_defaults_and_validation() {
        let w = ClassWeights::default();
        assert_eq!(w.get(Outcome::Distinction.label()), 1.5);
        assert_eq!(w.get(Outcome::Fail.label()), 1.5);
        assert_eq!(w.get(Outcome::Pass.label()), 1.0);
        assert_eq!(w.get(Outcome::Withdrawn.label()), 1.0);
        assert!(matches!(
            ClassWeights::new([1.0, 0.0, 1.0, 1.0]),
            Err(PipelineError::NonPositiveClassWeight { .. })
        ));
    }

    #[test]
    fn vle_table_untouched_by_sampling() {
        let bundle = synth_bundle(30, 24);
        let sampled = sample_students(&bundle, 0.5, 1).unwrap();
        let before: Vec<&VleRow> = bundle.vle.iter().collect();
        let after: Vec<&VleRow> = sampled.vle.iter().collect();
        assert_eq!(before, after);
    }
}
