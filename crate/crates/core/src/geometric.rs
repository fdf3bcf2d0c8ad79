//! Landmark-track displacement features.
//!
//! A track holds per-frame positions of facial grid points. The
//! displacement matrix stacks, for frames 2..t, each selected point's x
//! offset from frame 1 followed by every y offset; it is reduced by an
//! order-2 biased discriminant fit (separate row and column transforms).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::discriminant::{fit_mbda, project, MbdaConfig, Subspace};
use crate::error::{Error, Result};
use crate::gabor::resample_indices;
use crate::matrix::Matrix;
use crate::tensor::Tensor;

/// Number of points in the facial grid.
pub const GRID_POINTS: u32 = 113;

/// Per-frame landmark positions. `frames[f][i]` is the `(x, y)` position of
/// `point_ids[i]` in frame `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkTrack {
    point_ids: Vec<u32>,
    frames: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    frame: usize,
    point_id: u32,
    x: f64,
    y: f64,
}

impl LandmarkTrack {
    pub fn new(point_ids: Vec<u32>, frames: Vec<Vec<[f64; 2]>>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a track needs at least two frames, got {}",
                frames.len()
            )));
        }
        if frames.iter().any(|f| f.len() != point_ids.len()) {
            return Err(Error::DimensionMismatch(
                "every frame needs one position per point".into(),
            ));
        }
        Ok(Self { point_ids, frames })
    }

    pub fn point_ids(&self) -> &[u32] {
        &self.point_ids
    }

    pub fn frames(&self) -> &[Vec<[f64; 2]>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Same displacement applied to every point of every frame.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            point_ids: self.point_ids.clone(),
            frames: self
                .frames
                .iter()
                .map(|f| f.iter().map(|[x, y]| [x + dx, y + dy]).collect())
                .collect(),
        }
    }

    /// Parses `frame,point_id,x,y` CSV with one-based frame numbers.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut by_frame: BTreeMap<usize, BTreeMap<u32, [f64; 2]>> = BTreeMap::new();
        for row in rdr.deserialize() {
            let row: TrackRow = row?;
            if row.frame == 0 {
                return Err(Error::Format("frame numbers are one-based".into()));
            }
            by_frame
                .entry(row.frame)
                .or_default()
                .insert(row.point_id, [row.x, row.y]);
        }
        let ids: Vec<u32> = by_frame
            .values()
            .next()
            .map(|f| f.keys().copied().collect())
            .unwrap_or_default();
        let mut frames = Vec::with_capacity(by_frame.len());
        for (expected, (frame, points)) in (1..).zip(&by_frame) {
            if *frame != expected {
                return Err(Error::Format(format!("frame {expected} missing from track")));
            }
            if points.keys().ne(ids.iter()) {
                return Err(Error::Format(format!("frame {frame} has a different point set")));
            }
            frames.push(points.values().copied().collect());
        }
        Self::new(ids, frames)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (f, positions) in self.frames.iter().enumerate() {
            for (id, [x, y]) in self.point_ids.iter().zip(positions) {
                w.serialize(TrackRow {
                    frame: f + 1,
                    point_id: *id,
                    x: *x,
                    y: *y,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Named subset of grid point ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub name: String,
    pub ids: Vec<u32>,
}

impl RegionSpec {
    pub fn new(name: impl Into<String>, ids: Vec<u32>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::InvalidArgument("empty region".into()));
        }
        if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > GRID_POINTS) {
            return Err(Error::InvalidArgument(format!(
                "point id {bad} outside 1..={GRID_POINTS}"
            )));
        }
        Ok(Self {
            name: name.into(),
            ids,
        })
    }

    /// Grid points in the upper part of the face (brows and eyes).
    pub fn upper_face() -> Self {
        Self::from_band("upper", 0.0, 0.46)
    }

    /// Grid points in the lower part of the face (nose, mouth and chin).
    pub fn lower_face() -> Self {
        Self::from_band("lower", 0.54, 1.0)
    }

    fn from_band(name: &str, v_min: f64, v_max: f64) -> Self {
        let ids = canonical_grid()
            .into_iter()
            .filter(|(_, _, v)| *v >= v_min && *v <= v_max)
            .map(|(id, _, _)| id)
            .collect();
        Self {
            name: name.into(),
            ids,
        }
    }
}

/// Reference grid layout in normalized face coordinates `(id, u, v)`, with
/// `u` across and `v` down the face, both in `(0, 1)`.
pub fn canonical_grid() -> Vec<(u32, f64, f64)> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (1..=GRID_POINTS)
        .map(|id| {
            let k = f64::from(id) - 0.5;
            let r = (k / f64::from(GRID_POINTS)).sqrt();
            let theta = golden * f64::from(id);
            (id, 0.5 + 0.44 * r * theta.cos(), 0.5 + 0.46 * r * theta.sin())
        })
        .collect()
}

/// `2P' x (t_target - 1)` matrix of displacements from frame 1.
pub fn displacement_matrix(track: &LandmarkTrack, region: &RegionSpec, t_target: usize) -> Result<Matrix> {
    let columns = region
        .ids
        .iter()
        .map(|id| {
            track
                .point_ids
                .iter()
                .position(|p| p == id)
                .ok_or(Error::MissingPoint(*id))
        })
        .collect::<Result<Vec<_>>>()?;
    let frames = resample_indices(track.len(), t_target)?;
    let p = columns.len();
    let base = &track.frames[frames[0]];
    let mut out = Matrix::zeros(2 * p, t_target - 1);
    for (col, &f) in frames.iter().skip(1).enumerate() {
        let pos = &track.frames[f];
        for (i, &c) in columns.iter().enumerate() {
            out[(i, col)] = pos[c][0] - base[c][0];
            out[(p + i, col)] = pos[c][1] - base[c][1];
        }
    }
    Ok(out)
}

/// Order-2 biased discriminant fit on displacement matrices.
pub fn fit_geometric_subspace(
    positives: &[Matrix],
    negatives: &[Matrix],
    target_dims: (usize, usize),
    config: &MbdaConfig,
) -> Result<Subspace> {
    let to_tensors = |ms: &[Matrix]| ms.iter().map(Tensor::from_matrix).collect::<Vec<_>>();
    let config = MbdaConfig {
        target_dims: vec![target_dims.0, target_dims.1],
        ..config.clone()
    };
    fit_mbda(&to_tensors(positives), &to_tensors(negatives), &config)
}

/// Projects a displacement matrix and flattens it (rows fastest).
pub fn geometric_feature(mat: &Matrix, subspace: &Subspace) -> Result<Vec<f64>> {
    Ok(project(&Tensor::from_matrix(mat), subspace)?.into_vec())
}
