//! Gaussian-kernel SVM detectors and action-unit recognition metrics.
//!
//! Training is sequential minimal optimization with second-order working
//! set selection. Each action unit gets its own binary detector; a
//! sequence's predicted set is every unit whose detector fires.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Box constraint.
    pub c: f64,
    /// Kernel width; `None` uses `1 / (dim * variance of all features)`.
    pub gamma: Option<f64>,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Multiplier on `c` for the positive class.
    pub positive_weight: f64,
    pub max_iterations: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 10.0,
            gamma: None,
            tol: 1e-3,
            positive_weight: 1.0,
            max_iterations: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub positive_weight: f64,
    pub iterations: usize,
}

#[inline]
fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// `1 / (dim * variance)` over every feature value; `1 / dim` when the
/// features are constant.
pub fn default_gamma(features: &[Vec<f64>]) -> f64 {
    let dim = features.first().map_or(1, Vec::len).max(1) as f64;
    let n = features.iter().map(Vec::len).sum::<usize>() as f64;
    if n == 0.0 {
        return 1.0 / dim;
    }
    let mean = features.iter().flatten().sum::<f64>() / n;
    let var = features.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (dim * var)
    } else {
        1.0 / dim
    }
}

pub fn train_svm(features: &[Vec<f64>], labels: &[i8], params: &SvmParams) -> Result<SvmModel> {
    let n = features.len();
    if n != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{n} samples, {} labels",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
        return Err(Error::InvalidArgument(format!("label {bad} is not +1 or -1")));
    }
    if !labels.contains(&1) || !labels.contains(&-1) {
        return Err(Error::SingleClass);
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch("features differ in length".into()));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature".into()));
    }
    if !(params.c > 0.0 && params.tol > 0.0 && params.positive_weight > 0.0) {
        return Err(Error::InvalidArgument("c, tol and class weight must be positive".into()));
    }
    let gamma = params.gamma.unwrap_or_else(|| default_gamma(features));

    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let bound: Vec<f64> = labels
        .iter()
        .map(|&l| if l > 0 { params.c * params.positive_weight } else { params.c })
        .collect();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = rbf(&features[i], &features[j], gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let at_upper = |a: &[f64], i: usize| a[i] >= bound[i];
    let at_lower = |a: &[f64], i: usize| a[i] <= 0.0;

    let mut iterations = 0;
    while iterations < params.max_iterations {
        // First index: largest violation among those that can move up.
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let movable = if y[t] > 0.0 { !at_upper(&alpha, t) } else { !at_lower(&alpha, t) };
            if movable && -y[t] * grad[t] >= g_max {
                g_max = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else { break };
        // Second index: largest second-order gain among those that can move down.
        let mut g_max2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best = f64::INFINITY;
        for t in 0..n {
            let movable = if y[t] > 0.0 { !at_lower(&alpha, t) } else { !at_upper(&alpha, t) };
            if !movable {
                continue;
            }
            let v = y[t] * grad[t];
            g_max2 = g_max2.max(v);
            let diff = g_max + v;
            if diff > 0.0 {
                let quad = k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t];
                let gain = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                if gain <= best {
                    best = gain;
                    j_sel = Some(t);
                }
            }
        }
        if g_max + g_max2 < params.tol {
            break;
        }
        let Some(j) = j_sel else { break };
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ci, cj) = (bound[i], bound[j]);
        if y[i] != y[j] {
            let quad = (k[i * n + i] + k[j * n + j] + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = (k[i * n + i] + k[j * n + j] - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    }

    // Offset: average over free vectors, else the midpoint of the feasible range.
    let (mut upper, mut lower) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_count) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if at_upper(&alpha, t) {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if at_lower(&alpha, t) {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free_sum += yg;
            free_count += 1;
        }
    }
    let rho = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        (upper + lower) / 2.0
    };

    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(features[t].clone());
            dual_coef.push(alpha[t] * y[t]);
        }
    }
    Ok(SvmModel {
        support_vectors,
        dual_coef,
        bias: -rho,
        gamma,
        c: params.c,
        positive_weight: params.positive_weight,
        iterations,
    })
}

impl SvmModel {
    pub fn dim(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }

    /// Box bound of a support vector with the given sign.
    pub fn bound(&self, label: i8) -> f64 {
        if label > 0 {
            self.c * self.positive_weight
        } else {
            self.c
        }
    }
}

/// `sum_i alpha_i y_i K(sv_i, x) + b`; positive means the class is present.
pub fn decision(model: &SvmModel, x: &[f64]) -> Result<f64> {
    if let Some(d) = model.dim() {
        if d != x.len() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {d} features, got {}",
                x.len()
            )));
        }
    }
    Ok(model
        .support_vectors
        .iter()
        .zip(&model.dual_coef)
        .map(|(sv, a)| a * rbf(sv, x, model.gamma))
        .sum::<f64>()
        + model.bias)
}

/// Facial action unit number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Au(pub u16);

impl fmt::Display for Au {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Set of action units, written `1+2+4`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct AuSet(pub BTreeSet<Au>);

impl AuSet {
    pub fn new(units: impl IntoIterator<Item = u16>) -> Self {
        Self(units.into_iter().map(Au).collect())
    }

    pub fn contains(&self, au: Au) -> bool {
        self.0.contains(&au)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = Au> + '_ {
        self.0.iter().copied()
    }

    pub fn is_disjoint(&self, other: &AuSet) -> bool {
        self.0.is_disjoint(&other.0)
    }

    pub fn is_subset(&self, other: &AuSet) -> bool {
        self.0.is_subset(&other.0)
    }
}

impl Ord for AuSet {
    /// Single units first, then lexicographic.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.len() > 1, &self.0).cmp(&(other.len() > 1, &other.0))
    }
}

impl PartialOrd for AuSet {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for AuSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "none");
        }
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("+"))
    }
}

impl FromStr for AuSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(AuSet::default());
        }
        s.split('+')
            .map(|p| {
                p.trim()
                    .parse::<u16>()
                    .map(Au)
                    .map_err(|_| Error::Format(format!("bad action unit {p:?} in {s:?}")))
            })
            .collect::<Result<BTreeSet<_>>>()
            .map(AuSet)
    }
}

impl From<AuSet> for String {
    fn from(s: AuSet) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for AuSet {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Every action unit whose detector output is positive.
pub fn predict_au_set(detectors: &BTreeMap<Au, SvmModel>, feature: &[f64]) -> Result<AuSet> {
    let mut out = BTreeSet::new();
    for (au, model) in detectors {
        if decision(model, feature)? > 0.0 {
            out.insert(*au);
        }
    }
    Ok(AuSet(out))
}

/// Builds a set from per-unit decision values.
pub fn au_set_from_decisions(decisions: impl IntoIterator<Item = (Au, f64)>) -> AuSet {
    AuSet(
        decisions
            .into_iter()
            .filter(|(_, d)| *d > 0.0)
            .map(|(au, _)| au)
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuPrediction {
    pub sequence_id: String,
    pub predicted: AuSet,
    pub truth: AuSet,
}

impl AuPrediction {
    pub fn new(sequence_id: impl Into<String>, predicted: AuSet, truth: AuSet) -> Self {
        Self {
            sequence_id: sequence_id.into(),
            predicted,
            truth,
        }
    }

    pub fn outcome(&self) -> Outcome {
        if self.predicted == self.truth {
            Outcome::Exact
        } else if self.predicted.is_disjoint(&self.truth) {
            Outcome::Disjoint
        } else {
            Outcome::Partial
        }
    }

    /// Whether the prediction names a unit absent from the truth.
    pub fn has_extra(&self) -> bool {
        !self.predicted.is_subset(&self.truth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Exact,
    /// Wrong but overlapping ("missing or extra").
    Partial,
    /// No unit in common ("false").
    Disjoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedCount {
    pub predicted: AuSet,
    pub count: usize,
}

/// Outcomes for all test sequences sharing one ground-truth combination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionRow {
    pub truth: AuSet,
    pub sequences: usize,
    pub exact: usize,
    pub partial: Vec<PredictedCount>,
    pub disjoint: Vec<PredictedCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total: usize,
    pub exact: usize,
    pub partial: usize,
    pub disjoint: usize,
    /// Sequences whose prediction contains a unit absent from the truth.
    pub false_alarms: usize,
    pub recognition_rate: f64,
    pub false_alarm_rate: f64,
    pub rows: Vec<ConfusionRow>,
}

pub fn evaluate(predictions: &[AuPrediction]) -> Result<Metrics> {
    if predictions.is_empty() {
        return Err(Error::Empty("no predictions to evaluate"));
    }
    #[derive(Default)]
    struct Acc {
        sequences: usize,
        exact: usize,
        partial: BTreeMap<AuSet, usize>,
        disjoint: BTreeMap<AuSet, usize>,
    }
    let mut rows: BTreeMap<AuSet, Acc> = BTreeMap::new();
    let (mut exact, mut partial, mut disjoint, mut false_alarms) = (0, 0, 0, 0);
    for p in predictions {
        let row = rows.entry(p.truth.clone()).or_default();
        row.sequences += 1;
        match p.outcome() {
            Outcome::Exact => {
                exact += 1;
                row.exact += 1;
            }
            Outcome::Partial => {
                partial += 1;
                *row.partial.entry(p.predicted.clone()).or_default() += 1;
            }
            Outcome::Disjoint => {
                disjoint += 1;
                *row.disjoint.entry(p.predicted.clone()).or_default() += 1;
            }
        }
        if p.has_extra() {
            false_alarms += 1;
        }
    }
    let total = predictions.len();
    let counts = |m: BTreeMap<AuSet, usize>| {
        m.into_iter()
            .map(|(predicted, count)| PredictedCount { predicted, count })
            .collect()
    };
    Ok(Metrics {
        total,
        exact,
        partial,
        disjoint,
        false_alarms,
        recognition_rate: exact as f64 / total as f64,
        false_alarm_rate: false_alarms as f64 / total as f64,
        rows: rows
            .into_iter()
            .map(|(truth, a)| ConfusionRow {
                truth,
                sequences: a.sequences,
                exact: a.exact,
                partial: counts(a.partial),
                disjoint: counts(a.disjoint),
            })
            .collect(),
    })
}

fn outcome_cell(counts: &[PredictedCount]) -> String {
    if counts.is_empty() {
        return "0".into();
    }
    counts
        .iter()
        .map(|c| format!("{}({})", c.count, c.predicted))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Metrics {
    /// Aligned text table: one row per ground-truth combination, then
    /// totals and the two rates.
    pub fn render_table(&self, title: &str) -> String {
        let mut lines: Vec<[String; 5]> = vec![[
            "AUs".into(),
            "Sequences".into(),
            "True".into(),
            "Missing or extra".into(),
            "False".into(),
        ]];
        for r in &self.rows {
            lines.push([
                r.truth.to_string(),
                r.sequences.to_string(),
                r.exact.to_string(),
                outcome_cell(&r.partial),
                outcome_cell(&r.disjoint),
            ]);
        }
        lines.push([
            "Total".into(),
            self.total.to_string(),
            self.exact.to_string(),
            self.partial.to_string(),
            self.disjoint.to_string(),
        ]);
        let mut widths = [0usize; 5];
        for l in &lines {
            for (w, cell) in widths.iter_mut().zip(l) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let _ = writeln!(out, "{title}");
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        let _ = writeln!(out, "R  {:.1}%", 100.0 * self.recognition_rate);
        let _ = writeln!(out, "F  {:.1}%", 100.0 * self.false_alarm_rate);
        out
    }
}
