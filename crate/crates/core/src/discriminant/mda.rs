//! Two-class multilinear Fisher analysis, the symmetric baseline.
//!
//! Per mode: between-class scatter of the class means about the global
//! mean (weighted by class size) against the within-class scatter of each
//! sample about its own class mean, both with the other modes projected.

use crate::eigen::solve_with_config;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tensor::Tensor;

use super::mbda::{projection_from, run_alternating};
use super::{check_samples, project_modes, ratio, MbdaConfig, Subspace};

#[derive(Debug, Clone)]
pub struct MdaScatter {
    pub between: Matrix,
    pub within: Matrix,
}

struct MdaState {
    /// Class samples centered on their own class mean.
    centered: Vec<Tensor>,
    /// `(class mean - global mean, class size)`.
    offsets: Vec<(Tensor, f64)>,
    projections: Vec<Matrix>,
    eigenvalues: Vec<Vec<f64>>,
    clamped: bool,
    config: MbdaConfig,
}

impl MdaState {
    fn new(class_a: &[Tensor], class_b: &[Tensor], config: &MbdaConfig) -> Result<Self> {
        if class_a.len() < 2 || class_b.len() < 2 {
            return Err(Error::InvalidArgument(
                "each class needs at least two samples".into(),
            ));
        }
        let dims = check_samples(class_a, class_b)?;
        config.validate(&dims)?;
        Self::with_projections(
            class_a,
            class_b,
            dims.iter().map(|&d| Matrix::identity(d)).collect(),
            config,
        )
    }

    fn with_projections(
        class_a: &[Tensor],
        class_b: &[Tensor],
        projections: Vec<Matrix>,
        config: &MbdaConfig,
    ) -> Result<Self> {
        let mean_a = Tensor::mean(class_a)?;
        let mean_b = Tensor::mean(class_b)?;
        let global = Tensor::mean(class_a.iter().chain(class_b))?;
        let mut centered = Vec::with_capacity(class_a.len() + class_b.len());
        for x in class_a {
            centered.push(x.sub(&mean_a)?);
        }
        for x in class_b {
            centered.push(x.sub(&mean_b)?);
        }
        let order = projections.len();
        Ok(Self {
            centered,
            offsets: vec![
                (mean_a.sub(&global)?, class_a.len() as f64),
                (mean_b.sub(&global)?, class_b.len() as f64),
            ],
            projections,
            eigenvalues: vec![Vec::new(); order],
            clamped: false,
            config: config.clone(),
        })
    }

    fn scatter(&self, mode: usize) -> Result<MdaScatter> {
        let d = self.projections[mode].cols();
        let mut between = Matrix::zeros(d, d);
        for (offset, n) in &self.offsets {
            project_modes(offset, &self.projections, Some(mode))?.add_mode_gram_to(
                mode,
                *n,
                &mut between,
            )?;
        }
        let mut within = Matrix::zeros(d, d);
        for x in &self.centered {
            project_modes(x, &self.projections, Some(mode))?.add_mode_gram_to(
                mode,
                1.0,
                &mut within,
            )?;
        }
        Ok(MdaScatter { between, within })
    }

    fn update_mode(&mut self, mode: usize) -> Result<()> {
        let s = self.scatter(mode)?;
        let k = self.config.target_dims[mode];
        let result = solve_with_config(&s.between, &s.within, k, &self.config.eigen)?;
        let (w, clamped) = projection_from(&result, &self.config.eigen);
        self.clamped |= clamped;
        self.eigenvalues[mode] = result.eigenvalues;
        self.projections[mode] = w;
        Ok(())
    }

    /// Fisher ratio of projected between-class to within-class scatter.
    fn objective(&self) -> Result<f64> {
        let mut between = 0.0;
        for (offset, n) in &self.offsets {
            between += n * project_modes(offset, &self.projections, None)?.sq_norm();
        }
        let mut within = 0.0;
        for x in &self.centered {
            within += project_modes(x, &self.projections, None)?.sq_norm();
        }
        ratio(between, within)
    }
}

/// Mode-`mode` between/within scatters under the projections of `subspace`.
pub fn mda_scatter_mode(
    class_a: &[Tensor],
    class_b: &[Tensor],
    subspace: &Subspace,
    mode: usize,
) -> Result<MdaScatter> {
    if class_a.is_empty() || class_b.is_empty() {
        return Err(Error::Empty("both classes need samples"));
    }
    let dims = check_samples(class_a, class_b)?;
    if dims != subspace.input_dims() {
        return Err(Error::DimensionMismatch(format!(
            "samples {dims:?}, subspace {:?}",
            subspace.input_dims()
        )));
    }
    if mode >= dims.len() {
        return Err(Error::InvalidMode {
            mode,
            order: dims.len(),
        });
    }
    MdaState::with_projections(class_a, class_b, subspace.projections.clone(), &subspace.config)?
        .scatter(mode)
}

/// Alternating two-class Fisher fit with the same iteration and stopping
/// rules as [`super::fit_mbda`].
pub fn fit_mda(class_a: &[Tensor], class_b: &[Tensor], config: &MbdaConfig) -> Result<Subspace> {
    let mut state = MdaState::new(class_a, class_b, config)?;
    let order = state.projections.len();
    let (iterations_run, objective_trace) = run_alternating(
        config,
        order,
        &mut state,
        MdaState::update_mode,
        MdaState::objective,
    )?;
    Ok(Subspace {
        projections: state.projections,
        iterations_run,
        objective_trace,
        eigenvalues: state.eigenvalues,
        clamped: state.clamped,
        config: state.config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_classes_have_no_between_scatter() {
        let a: Vec<Tensor> = (0..3)
            .map(|s| Tensor::from_fn(&[2, 2], |ix| (ix[0] + 2 * ix[1] + s) as f64).unwrap())
            .collect();
        let s = mda_scatter_mode(&a, &a, &Subspace::identity(&[2, 2]), 0).unwrap();
        assert!(s.between.as_slice().iter().all(|v| *v == 0.0));
        assert!(s.within.trace() > 0.0);
    }

    #[test]
    fn needs_two_per_class() {
        let x = Tensor::zeros(&[2]).unwrap();
        let cfg = MbdaConfig::new(vec![1]);
        assert!(fit_mda(&[x.clone()], &[x.clone(), x.clone()], &cfg).is_err());
    }
}
