//! Per-sequence inputs and per-action-unit feature extractors for the four
//! experiment arms.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use mbda_core::classify::{Au, AuSet};
use mbda_core::discriminant::{fit_bda, fit_mbda, fit_mda, project, Subspace};
use mbda_core::eigen::sym_eig;
use mbda_core::gabor::{difference_tensor, make_bank, GaborBank};
use mbda_core::geometric::{displacement_matrix, fit_geometric_subspace, geometric_feature};
use mbda_core::{Matrix, Tensor};

use crate::config::{FaceGroup, PipelineConfig};
use crate::dataset::{Dataset, Split};
use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Mbda,
    TwodbdaBda,
    Mda,
    GeometricOnly,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Mbda,
        Method::TwodbdaBda,
        Method::Mda,
        Method::GeometricOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mbda => "mbda",
            Method::TwodbdaBda => "twodbda_bda",
            Method::Mda => "mda",
            Method::GeometricOnly => "geometric_only",
        }
    }

    pub fn uses_appearance(self) -> bool {
        self != Method::GeometricOnly
    }

    fn tag(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == tag)
            .ok_or_else(|| PipelineError::Bundle(format!("unknown method tag {tag}")))
    }

    pub(crate) fn to_tag(self) -> u8 {
        self.tag()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown method {s:?}")))
    }
}

/// Everything the extractors need from one sequence.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: String,
    pub subject: u32,
    pub split: Split,
    pub labels: AuSet,
    /// Difference Gabor tensor (rows x cols x kernels x time).
    pub appearance: Option<Tensor>,
    /// Displacement matrix for each face region.
    pub geometric: BTreeMap<FaceGroup, Matrix>,
}

pub fn gabor_bank(config: &PipelineConfig) -> Result<GaborBank> {
    Ok(make_bank(
        config.gabor_orientations,
        config.gabor_scales,
        config.gabor_base_wavelength,
    )?)
}

/// Computes appearance tensors (when asked) and displacement matrices for
/// every sequence.
pub fn prepare(dataset: &Dataset, config: &PipelineConfig, appearance: bool) -> Result<Vec<Prepared>> {
    let bank = if appearance { Some(gabor_bank(config)?) } else { None };
    let regions = [FaceGroup::Upper, FaceGroup::Lower]
        .into_iter()
        .map(|g| Ok((g, config.region(g)?)))
        .collect::<Result<Vec<_>>>()?;
    dataset
        .samples
        .iter()
        .map(|s| {
            let appearance = match &bank {
                Some(bank) => Some(difference_tensor(
                    &s.frames,
                    bank,
                    config.t_target,
                    config.downsample,
                )?),
                None => None,
            };
            let mut geometric = BTreeMap::new();
            if config.geometric {
                let track = s.track.as_ref().ok_or_else(|| {
                    PipelineError::Dataset(format!("sequence {} has no landmark track", s.id))
                })?;
                for (g, region) in &regions {
                    geometric.insert(*g, displacement_matrix(track, region, config.t_target)?);
                }
            }
            Ok(Prepared {
                id: s.id.clone(),
                subject: s.subject,
                split: s.split,
                labels: s.labels.clone(),
                appearance,
                geometric,
            })
        })
        .collect()
}

/// Per-feature affine map to zero mean and unit variance on the training
/// set. Constant features are only centered.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn fit(features: &[Vec<f64>]) -> Self {
        let dim = features.first().map_or(0, Vec::len);
        let n = features.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for f in features {
            mean.iter_mut().zip(f).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; dim];
        for f in features {
            for ((s, v), m) in var.iter_mut().zip(f).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var
            .iter()
            .map(|&v| if v.sqrt() > 1e-12 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}

/// Principal-component step: `(x - mean)` times the columns of `basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `d x q`.
    pub basis: Matrix,
}

impl Pca {
    /// Smallest number of leading components whose variance reaches
    /// `fraction` of the total, at most `max`.
    pub fn fit(samples: &[Vec<f64>], fraction: f64, max: usize) -> Result<Self> {
        let n = samples.len();
        let d = samples.first().ok_or(mbda_core::Error::Empty("no samples"))?.len();
        let mean: Vec<f64> = (0..d)
            .map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n as f64)
            .collect();
        let centered: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| s.iter().zip(&mean).map(|(v, m)| v - m).collect())
            .collect();
        // Eigenvectors of the smaller of X^T X and X X^T.
        let (values, vectors) = if n < d {
            let mut gram = Matrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = mbda_core::matrix::dot(&centered[i], &centered[j]);
                    gram[(i, j)] = v;
                    gram[(j, i)] = v;
                }
            }
            let e = sym_eig(&gram)?;
            let mut cols = Vec::new();
            for (k, &lambda) in e.eigenvalues.iter().enumerate() {
                if lambda <= 0.0 {
                    break;
                }
                let u = e.vector(k);
                let mut v = vec![0.0; d];
                for (x, ui) in centered.iter().zip(&u) {
                    v.iter_mut().zip(x).for_each(|(a, b)| *a += ui * b);
                }
                let nv = mbda_core::matrix::norm(&v);
                v.iter_mut().for_each(|a| *a /= nv);
                cols.push(v);
            }
            (e.eigenvalues, cols)
        } else {
            let mut cov = Matrix::zeros(d, d);
            for x in &centered {
                for i in 0..d {
                    for j in i..d {
                        cov[(i, j)] += x[i] * x[j];
                    }
                }
            }
            for i in 0..d {
                for j in 0..i {
                    cov[(i, j)] = cov[(j, i)];
                }
            }
            let e = sym_eig(&cov)?;
            let cols = (0..d).map(|k| e.vector(k)).collect();
            (e.eigenvalues, cols)
        };
        let total: f64 = values.iter().filter(|v| **v > 0.0).sum();
        let mut keep = 0;
        let mut acc = 0.0;
        while keep < vectors.len() && keep < max.max(1) {
            if values[keep] <= 0.0 {
                break;
            }
            acc += values[keep];
            keep += 1;
            if acc >= fraction * total {
                break;
            }
        }
        let keep = keep.max(1).min(vectors.len().max(1));
        let basis = if vectors.is_empty() {
            let mut b = Matrix::zeros(d, 1);
            b[(0, 0)] = 1.0;
            b
        } else {
            Matrix::from_columns(&vectors[..keep])?
        };
        Ok(Self { mean, basis })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let c: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        Ok(self.basis.transpose().matvec(&c)?)
    }
}

/// Learned appearance reduction for one action unit.
#[derive(Debug, Clone, PartialEq)]
pub enum AppearanceModel {
    None,
    /// One multilinear subspace over the whole tensor (MBDA or MDA).
    Multilinear(Subspace),
    /// Independent order-2 subspaces per (kernel, frame) slice, an optional
    /// principal-component step, then vector BDA (`q x r` columns).
    SliceBda {
        slices: Vec<Subspace>,
        pca: Option<Pca>,
        bda: Matrix,
    },
}

/// Splits an appearance tensor into its `kernels * time` image slices,
/// kernel index fastest.
pub fn slices(t: &Tensor) -> Result<Vec<Tensor>> {
    let d = t.dims();
    if d.len() != 4 {
        return Err(PipelineError::Config(format!("expected an order-4 tensor, got {d:?}")));
    }
    let area = d[0] * d[1];
    Ok(t.as_slice()
        .chunks(area)
        .map(|c| Tensor::from_vec(&[d[0], d[1]], c.to_vec()))
        .collect::<mbda_core::Result<Vec<_>>>()?)
}

impl AppearanceModel {
    pub fn feature(&self, z: Option<&Tensor>) -> Result<Vec<f64>> {
        let need = || {
            z.ok_or_else(|| PipelineError::Config("appearance tensor was not computed".into()))
        };
        match self {
            AppearanceModel::None => Ok(Vec::new()),
            AppearanceModel::Multilinear(s) => Ok(project(need()?, s)?.into_vec()),
            AppearanceModel::SliceBda { slices: subs, pca, bda } => {
                let parts = slices(need()?)?;
                if parts.len() != subs.len() {
                    return Err(PipelineError::Config(format!(
                        "{} slices for {} slice subspaces",
                        parts.len(),
                        subs.len()
                    )));
                }
                let concat = concat_slices(&parts, subs)?;
                let reduced = match pca {
                    Some(p) => p.apply(&concat)?,
                    None => concat,
                };
                Ok(bda.transpose().matvec(&reduced)?)
            }
        }
    }
}

fn concat_slices(parts: &[Tensor], subs: &[Subspace]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (x, s) in parts.iter().zip(subs) {
        out.extend(project(x, s)?.into_vec());
    }
    Ok(out)
}

/// Feature extractor for one action unit's detector.
#[derive(Debug, Clone, PartialEq)]
pub struct AuFeatureModel {
    pub au: Au,
    pub group: FaceGroup,
    pub appearance: AppearanceModel,
    pub geometric: Option<Subspace>,
    pub standardizer: Standardizer,
}

impl AuFeatureModel {
    /// Appearance part followed by the geometric part, before scaling.
    pub fn raw_feature(&self, p: &Prepared) -> Result<Vec<f64>> {
        let mut f = self.appearance.feature(p.appearance.as_ref())?;
        if let Some(s) = &self.geometric {
            let m = p.geometric.get(&self.group).ok_or_else(|| {
                PipelineError::Config(format!("no displacement matrix for sequence {}", p.id))
            })?;
            f.extend(geometric_feature(m, s)?);
        }
        Ok(f)
    }

    pub fn feature(&self, p: &Prepared) -> Result<Vec<f64>> {
        let raw = self.raw_feature(p)?;
        if raw.len() != self.standardizer.mean.len() {
            return Err(PipelineError::Config(format!(
                "feature length {} does not match the trained length {}",
                raw.len(),
                self.standardizer.mean.len()
            )));
        }
        Ok(self.standardizer.apply(&raw))
    }

    pub fn dim(&self) -> usize {
        self.standardizer.mean.len()
    }
}

fn split_by_label<'a, T>(
    train: &'a [&'a Prepared],
    au: Au,
    get: impl Fn(&'a Prepared) -> Result<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for p in train {
        if p.labels.contains(au) {
            pos.push(get(p)?);
        } else {
            neg.push(get(p)?);
        }
    }
    if pos.is_empty() {
        return Err(PipelineError::NoPositives(au.0));
    }
    Ok((pos, neg))
}

fn appearance_of(p: &Prepared) -> Result<Tensor> {
    p.appearance
        .clone()
        .ok_or_else(|| PipelineError::Config(format!("no appearance tensor for {}", p.id)))
}

fn fit_appearance(
    method: Method,
    au: Au,
    train: &[&Prepared],
    config: &PipelineConfig,
) -> Result<AppearanceModel> {
    match method {
        Method::GeometricOnly => Ok(AppearanceModel::None),
        Method::Mbda => {
            let (pos, neg) = split_by_label(train, au, appearance_of)?;
            Ok(AppearanceModel::Multilinear(fit_mbda(
                &pos,
                &neg,
                &config.appearance_config(),
            )?))
        }
        Method::Mda => {
            let (pos, neg) = split_by_label(train, au, appearance_of)?;
            Ok(AppearanceModel::Multilinear(fit_mda(
                &pos,
                &neg,
                &config.appearance_config(),
            )?))
        }
        Method::TwodbdaBda => {
            let (pos, neg) = split_by_label(train, au, |p| slices(&appearance_of(p)?))?;
            let count = pos[0].len();
            let mut subs = Vec::with_capacity(count);
            for k in 0..count {
                let sp: Vec<Tensor> = pos.iter().map(|s| s[k].clone()).collect();
                let sn: Vec<Tensor> = neg.iter().map(|s| s[k].clone()).collect();
                subs.push(fit_mbda(&sp, &sn, &config.slice_config())?);
            }
            let vp = pos
                .iter()
                .map(|s| concat_slices(s, &subs))
                .collect::<Result<Vec<_>>>()?;
            let vn = neg
                .iter()
                .map(|s| concat_slices(s, &subs))
                .collect::<Result<Vec<_>>>()?;
            let pca = if config.pca_variance > 0.0 {
                let all: Vec<Vec<f64>> = vp.iter().chain(&vn).cloned().collect();
                Some(Pca::fit(&all, config.pca_variance, config.pca_max)?)
            } else {
                None
            };
            let (vp, vn) = match &pca {
                Some(p) => (
                    vp.iter().map(|v| p.apply(v)).collect::<Result<Vec<_>>>()?,
                    vn.iter().map(|v| p.apply(v)).collect::<Result<Vec<_>>>()?,
                ),
                None => (vp, vn),
            };
            let r = config.bda_dims.min(vp[0].len());
            let bda = fit_bda(&vp, &vn, r, &config.eigen())?;
            Ok(AppearanceModel::SliceBda { slices: subs, pca, bda })
        }
    }
}

/// Fits the extractor for `au` on the training sequences and returns it
/// with the scaled training features in input order.
pub fn build_features(
    method: Method,
    au: Au,
    train: &[&Prepared],
    config: &PipelineConfig,
) -> Result<(AuFeatureModel, Vec<Vec<f64>>)> {
    let group = config.group_of(au)?;
    if !train.iter().any(|p| p.labels.contains(au)) {
        return Err(PipelineError::NoPositives(au.0));
    }
    let appearance = fit_appearance(method, au, train, config)?;
    let geometric = if config.geometric {
        let (pos, neg) = split_by_label(train, au, |p| {
            p.geometric.get(&group).cloned().ok_or_else(|| {
                PipelineError::Config(format!("no displacement matrix for {}", p.id))
            })
        })?;
        Some(fit_geometric_subspace(
            &pos,
            &neg,
            config.geometric_dims,
            &config.geometric_config(),
        )?)
    } else {
        None
    };
    if appearance == AppearanceModel::None && geometric.is_none() {
        return Err(PipelineError::Config(
            "geometric_only needs geometric features enabled".into(),
        ));
    }
    let mut model = AuFeatureModel {
        au,
        group,
        appearance,
        geometric,
        standardizer: Standardizer::identity(0),
    };
    let raw = train
        .iter()
        .map(|p| model.raw_feature(p))
        .collect::<Result<Vec<_>>>()?;
    model.standardizer = if config.standardize {
        Standardizer::fit(&raw)
    } else {
        Standardizer::identity(raw[0].len())
    };
    let features = raw.iter().map(|f| model.standardizer.apply(f)).collect();
    Ok((model, features))
}

/// MBDA appearance features concatenated with the geometric features.
pub fn build_mbda_features(
    au: Au,
    train: &[&Prepared],
    config: &PipelineConfig,
) -> Result<(AuFeatureModel, Vec<Vec<f64>>)> {
    build_features(Method::Mbda, au, train, config)
}

/// Per-slice 2-D BDA, vector BDA on the concatenation, plus geometric
/// features.
pub fn build_2dbda_bda_features(
    au: Au,
    train: &[&Prepared],
    config: &PipelineConfig,
) -> Result<(AuFeatureModel, Vec<Vec<f64>>)> {
    build_features(Method::TwodbdaBda, au, train, config)
}
