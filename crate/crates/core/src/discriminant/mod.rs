//! Biased and multilinear discriminant analysis.
//!
//! A [`Subspace`] holds one projection matrix per tensor mode, each stored
//! as `d_out x d_in` so it left-multiplies the mode unfolding. Projecting a
//! sample applies every mode product in turn.

mod mbda;
mod mda;
mod serial;

pub use mbda::{fit_bda, fit_mbda, scatter_pair_mode, MbdaState, ModeUpdate, ScatterPair};
pub use mda::{fit_mda, mda_scatter_mode, MdaScatter};

use serde::{Deserialize, Serialize};

use crate::eigen::EigenConfig;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tensor::Tensor;

/// Settings for the alternating per-mode solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbdaConfig {
    /// Output extent per mode.
    pub target_dims: Vec<usize>,
    pub max_iterations: usize,
    /// Relative change of the objective between full iterations below which
    /// the fit stops.
    pub tolerance: f64,
    pub eigen: EigenConfig,
}

impl MbdaConfig {
    pub fn new(target_dims: Vec<usize>) -> Self {
        Self {
            target_dims,
            max_iterations: 5,
            tolerance: 1e-4,
            eigen: EigenConfig::default(),
        }
    }

    /// Appearance-tensor defaults: rows x cols x kernels x time reduced to
    /// `3 x 4 x 1 x 1`.
    pub fn appearance_default() -> Self {
        Self::new(vec![3, 4, 1, 1])
    }

    pub fn with_eigen(mut self, eigen: EigenConfig) -> Self {
        self.eigen = eigen;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    /// Checks the configuration against the input extents.
    pub fn validate(&self, input_dims: &[usize]) -> Result<()> {
        if self.target_dims.len() != input_dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} target dims for order-{} samples",
                self.target_dims.len(),
                input_dims.len()
            )));
        }
        for (j, (&t, &d)) in self.target_dims.iter().zip(input_dims).enumerate() {
            if t == 0 || t > d {
                return Err(Error::InvalidArgument(format!(
                    "target dim {t} for mode {j} with extent {d}"
                )));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidArgument("negative tolerance".into()));
        }
        Ok(())
    }
}

/// Per-mode projections learned by a discriminant fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    /// `w_j`, one `d_out x d_in` matrix per mode.
    pub projections: Vec<Matrix>,
    pub iterations_run: usize,
    /// Objective after every mode update from the second iteration on.
    pub objective_trace: Vec<f64>,
    /// Eigenvalues from the last solve of each mode.
    pub eigenvalues: Vec<Vec<f64>>,
    /// Whether sqrt-eigenvalue weighting had to clamp a negative eigenvalue.
    pub clamped: bool,
    pub config: MbdaConfig,
}

impl Subspace {
    /// Identity projections for samples of the given extents.
    pub fn identity(dims: &[usize]) -> Self {
        Self {
            projections: dims.iter().map(|&d| Matrix::identity(d)).collect(),
            iterations_run: 0,
            objective_trace: Vec::new(),
            eigenvalues: vec![Vec::new(); dims.len()],
            clamped: false,
            config: MbdaConfig::new(dims.to_vec()),
        }
    }

    /// Wraps explicit projection matrices.
    pub fn from_projections(projections: Vec<Matrix>) -> Self {
        let dims: Vec<usize> = projections.iter().map(Matrix::rows).collect();
        let order = projections.len();
        Self {
            projections,
            iterations_run: 0,
            objective_trace: Vec::new(),
            eigenvalues: vec![Vec::new(); order],
            clamped: false,
            config: MbdaConfig::new(dims),
        }
    }

    pub fn order(&self) -> usize {
        self.projections.len()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.projections.iter().map(Matrix::cols).collect()
    }

    pub fn output_dims(&self) -> Vec<usize> {
        self.projections.iter().map(Matrix::rows).collect()
    }

    pub fn output_len(&self) -> usize {
        self.output_dims().iter().product()
    }

    fn check_input(&self, dims: &[usize]) -> Result<()> {
        if dims != self.input_dims().as_slice() {
            return Err(Error::DimensionMismatch(format!(
                "sample dims {dims:?}, subspace expects {:?}",
                self.input_dims()
            )));
        }
        Ok(())
    }
}

/// `z x_1 w_1 x_2 w_2 ... x_D w_D`.
pub fn project(z: &Tensor, s: &Subspace) -> Result<Tensor> {
    s.check_input(z.dims())?;
    project_modes(z, &s.projections, None)
}

/// Applies every projection except the one for `skip`. Modes that shrink
/// the tensor the most go first.
pub(crate) fn project_modes(z: &Tensor, w: &[Matrix], skip: Option<usize>) -> Result<Tensor> {
    let mut order: Vec<usize> = (0..w.len())
        .filter(|&j| Some(j) != skip && !w[j].is_identity())
        .collect();
    order.sort_by(|&a, &b| {
        let ra = w[a].rows() as f64 / w[a].cols() as f64;
        let rb = w[b].rows() as f64 / w[b].cols() as f64;
        ra.total_cmp(&rb).then(a.cmp(&b))
    });
    let mut out: Option<Tensor> = None;
    for j in order {
        let src = out.as_ref().unwrap_or(z);
        out = Some(src.mode_product(&w[j], j)?);
    }
    Ok(out.unwrap_or_else(|| z.clone()))
}

/// Ratio of summed squared projected distances of negatives and positives
/// from the projected positive centroid.
pub fn objective(positives: &[Tensor], negatives: &[Tensor], s: &Subspace) -> Result<f64> {
    let centroid = Tensor::mean(positives)?;
    let projected_centroid = project(&centroid, s)?;
    let mut numerator = 0.0;
    for y in negatives {
        numerator += project(y, s)?.sq_distance(&projected_centroid)?;
    }
    let mut denominator = 0.0;
    for x in positives {
        denominator += project(x, s)?.sq_distance(&projected_centroid)?;
    }
    ratio(numerator, denominator)
}

pub(crate) fn ratio(numerator: f64, denominator: f64) -> Result<f64> {
    if !(denominator > f64::MIN_POSITIVE) {
        return Err(Error::ZeroDenominator);
    }
    Ok(numerator / denominator)
}

/// Shared validation for two sample groups.
pub(crate) fn check_samples(a: &[Tensor], b: &[Tensor]) -> Result<Vec<usize>> {
    let first = a.first().or(b.first()).ok_or(Error::Empty("no samples"))?;
    let dims = first.dims().to_vec();
    if let Some(bad) = a.iter().chain(b).find(|t| t.dims() != dims.as_slice()) {
        return Err(Error::DimensionMismatch(format!(
            "sample dims {:?} vs {:?}",
            bad.dims(),
            dims
        )));
    }
    Ok(dims)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: &[usize], seed: u64) -> Tensor {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Tensor::from_fn(dims, |_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .unwrap()
    }

    #[test]
    fn identity_projection_is_noop() {
        let z = t(&[2, 3, 2], 1);
        assert_eq!(project(&z, &Subspace::identity(&[2, 3, 2])).unwrap(), z);
        assert!(project(&z, &Subspace::identity(&[2, 3])).is_err());
    }

    #[test]
    fn objective_of_identical_sets_is_one() {
        let xs = vec![t(&[2, 2], 1), t(&[2, 2], 2), t(&[2, 2], 3)];
        let s = Subspace::identity(&[2, 2]);
        assert_eq!(objective(&xs, &xs, &s).unwrap(), 1.0);
    }

    #[test]
    fn objective_scales_quadratically() {
        let xs = vec![t(&[3], 1), t(&[3], 2)];
        let ys = vec![t(&[3], 5), t(&[3], 6)];
        let m = Tensor::mean(&xs).unwrap();
        let doubled: Vec<Tensor> = ys
            .iter()
            .map(|y| m.add(&y.sub(&m).unwrap().scale(2.0)).unwrap())
            .collect();
        let s = Subspace::identity(&[3]);
        let a = objective(&xs, &ys, &s).unwrap();
        let b = objective(&xs, &doubled, &s).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_positive_scatter_is_reported() {
        let x = t(&[2, 2], 1);
        let err = objective(&[x.clone(), x.clone()], &[t(&[2, 2], 2)], &Subspace::identity(&[2, 2]));
        assert!(matches!(err, Err(Error::ZeroDenominator)));
    }

    #[test]
    fn config_validation() {
        let c = MbdaConfig::new(vec![2, 5]);
        assert!(c.validate(&[3, 4]).is_err());
        assert!(c.validate(&[3, 5]).is_ok());
        assert!(c.validate(&[3, 5, 1]).is_err());
        assert!(MbdaConfig::new(vec![1]).with_max_iterations(0).validate(&[2]).is_err());
    }
}
