//! Training, evaluation and the four-arm comparison.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use log::{info, warn};
use mbda_core::classify::{
    au_set_from_decisions, decision, evaluate, train_svm, AuPrediction, AuSet, Metrics,
};
use serde::Serialize;

use crate::bundle::{Detector, ModelBundle};
use crate::config::{FaceGroup, PipelineConfig};
use crate::dataset::{Dataset, Split};
use crate::error::{PipelineError, Result};
use crate::features::{build_features, prepare, Method, Prepared};

/// Trains one detector per vocabulary unit on the training split of
/// already prepared sequences.
pub fn train_prepared(
    prepared: &[Prepared],
    method: Method,
    config: &PipelineConfig,
) -> Result<ModelBundle> {
    let train: Vec<&Prepared> = prepared.iter().filter(|p| p.split == Split::Train).collect();
    if train.is_empty() {
        return Err(PipelineError::Dataset("empty training split".into()));
    }
    let mut detectors = Vec::new();
    let mut skipped = Vec::new();
    for au in config.vocabulary() {
        let positives = train.iter().filter(|p| p.labels.contains(au)).count();
        if positives == 0 || positives == train.len() {
            let reason = if positives == 0 {
                "no positive training sequences"
            } else {
                "no negative training sequences"
            };
            warn!("{method}: skipping AU {au}: {reason}");
            skipped.push((au, reason.to_string()));
            continue;
        }
        let (features, x) = build_features(method, au, &train, config)?;
        let labels: Vec<i8> = train
            .iter()
            .map(|p| if p.labels.contains(au) { 1 } else { -1 })
            .collect();
        let svm = train_svm(&x, &labels, &config.svm)?;
        info!(
            "{method}: AU {au}: {positives} positives, {} features, {} support vectors",
            features.dim(),
            svm.support_vectors.len()
        );
        detectors.push(Detector { features, svm });
    }
    Ok(ModelBundle {
        method,
        config: config.clone(),
        detectors,
        skipped,
    })
}

pub fn train_pipeline(dataset: &Dataset, method: Method, config: &PipelineConfig) -> Result<ModelBundle> {
    let prepared = prepare(dataset, config, method.uses_appearance())?;
    train_prepared(&prepared, method, config)
}

/// Predicted set for one sequence over every detector in the bundle.
pub fn predict(bundle: &ModelBundle, p: &Prepared) -> Result<AuSet> {
    let decisions = bundle
        .detectors
        .iter()
        .map(|d| Ok((d.features.au, decision(&d.svm, &d.features.feature(p)?)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(au_set_from_decisions(decisions))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMetrics {
    pub group: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub method: String,
    /// Upper and lower tables pooled.
    pub overall: Metrics,
    pub groups: Vec<GroupMetrics>,
    pub predictions: Vec<AuPrediction>,
}

fn restrict(set: &AuSet, keep: &BTreeSet<mbda_core::classify::Au>) -> AuSet {
    AuSet(set.0.intersection(keep).copied().collect())
}

fn title(method: Method) -> &'static str {
    match method {
        Method::Mbda => "Appearance (MBDA) + Geometric (2DBDA)",
        Method::TwodbdaBda => "Appearance (2DBDA + BDA) + Geometric (2DBDA)",
        Method::Mda => "Appearance (MDA) + Geometric (2DBDA)",
        Method::GeometricOnly => "Only Geometric (2DBDA)",
    }
}

/// Scores the test split. Each face group is scored on the sequences that
/// carry at least one of its units, with both sets restricted to the group.
pub fn eval_prepared(bundle: &ModelBundle, prepared: &[Prepared]) -> Result<Report> {
    let config = &bundle.config;
    let test: Vec<&Prepared> = prepared.iter().filter(|p| p.split == Split::Test).collect();
    if test.is_empty() {
        return Err(PipelineError::EmptyTestSplit);
    }
    for p in &test {
        if let Some(au) = p.labels.iter().find(|au| !config.aus.contains_key(au)) {
            return Err(PipelineError::Dataset(format!(
                "sequence {} is labeled with AU {au}, which the bundle does not cover",
                p.id
            )));
        }
    }
    let predictions = test
        .iter()
        .map(|p| Ok(AuPrediction::new(p.id.clone(), predict(bundle, p)?, p.labels.clone())))
        .collect::<Result<Vec<_>>>()?;

    let mut groups = Vec::new();
    let mut pooled = Vec::new();
    for group in [FaceGroup::Upper, FaceGroup::Lower] {
        let keep: BTreeSet<_> = config
            .aus
            .iter()
            .filter(|(_, s)| s.group == group)
            .map(|(au, _)| *au)
            .collect();
        let restricted: Vec<AuPrediction> = predictions
            .iter()
            .filter(|p| !restrict(&p.truth, &keep).is_empty())
            .map(|p| {
                AuPrediction::new(
                    p.sequence_id.clone(),
                    restrict(&p.predicted, &keep),
                    restrict(&p.truth, &keep),
                )
            })
            .collect();
        if restricted.is_empty() {
            continue;
        }
        groups.push(GroupMetrics {
            group: group.name().to_string(),
            metrics: evaluate(&restricted)?,
        });
        pooled.extend(restricted);
    }
    Ok(Report {
        method: bundle.method.name().to_string(),
        overall: evaluate(&pooled)?,
        groups,
        predictions,
    })
}

pub fn eval_pipeline(bundle: &ModelBundle, dataset: &Dataset) -> Result<Report> {
    let prepared = prepare(dataset, &bundle.config, bundle.method.uses_appearance())?;
    eval_prepared(bundle, &prepared)
}

impl Report {
    pub fn render(&self) -> Result<String> {
        let method: Method = self.method.parse()?;
        let mut out = String::new();
        for g in &self.groups {
            out.push_str(&g.metrics.render_table(&format!("{}, {} face", title(method), g.group)));
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "Overall  R {:.1}%  F {:.1}%  ({} of {} exact)",
            100.0 * self.overall.recognition_rate,
            100.0 * self.overall.false_alarm_rate,
            self.overall.exact,
            self.overall.total
        );
        Ok(out)
    }

    /// Writes `metrics.json` and `table.txt`.
    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out)?;
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(out.join("metrics.json"), json)?;
        std::fs::write(out.join("table.txt"), self.render()?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub method: String,
    pub recognition_rate: f64,
    pub false_alarm_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    pub reports: Vec<Report>,
}

/// Runs every arm on one shared preparation of the dataset.
pub fn compare(dataset: &Dataset, config: &PipelineConfig) -> Result<Comparison> {
    let prepared = prepare(dataset, config, true)?;
    compare_prepared(&prepared, config)
}

pub fn compare_prepared(prepared: &[Prepared], config: &PipelineConfig) -> Result<Comparison> {
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for method in Method::ALL {
        info!("compare: training {method}");
        let bundle = train_prepared(prepared, method, config)?;
        let report = eval_prepared(&bundle, prepared)?;
        rows.push(CompareRow {
            method: method.name().to_string(),
            recognition_rate: report.overall.recognition_rate,
            false_alarm_rate: report.overall.false_alarm_rate,
        });
        reports.push(report);
    }
    Ok(Comparison { rows, reports })
}

impl Comparison {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| PipelineError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:<width$}  {:>6}  {:>6}\n", "method", "R", "F");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>5.1}%  {:>5.1}%",
                r.method,
                100.0 * r.recognition_rate,
                100.0 * r.false_alarm_rate
            );
        }
        out
    }

    /// Writes `compare.csv`, `compare.txt` and one table per arm.
    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("compare.csv"), self.to_csv()?)?;
        std::fs::write(out.join("compare.txt"), self.to_text())?;
        for r in &self.reports {
            std::fs::write(out.join(format!("table_{}.txt", r.method)), r.render()?)?;
        }
        Ok(())
    }
}
