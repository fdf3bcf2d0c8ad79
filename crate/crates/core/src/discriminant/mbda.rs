//! Biased discriminant analysis on vectors and its multilinear extension.
//!
//! All scatters are taken about the positive centroid: the positive scatter
//! is minimized while the negative scatter is maximized. For tensors the
//! problem is solved one mode at a time with every other mode's projection
//! held fixed, which turns each step into a generalized eigenproblem on the
//! mode-`j` scatter matrices.

use crate::eigen::{solve_with_config, weight_by_sqrt_eigenvalues, EigenConfig, EigenResult};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tensor::Tensor;

use super::{check_samples, project_modes, ratio, MbdaConfig, Subspace};

/// Mode-`j` scatter matrices and the positive centroid they are centered on.
#[derive(Debug, Clone)]
pub struct ScatterPair {
    /// Scatter of the negatives about the positive centroid.
    pub sy: Matrix,
    /// Scatter of the positives about their centroid.
    pub sx: Matrix,
    pub centroid: Tensor,
}

/// Builds the mode-`mode` scatter pair with every other mode projected by
/// the current matrices of `subspace`.
pub fn scatter_pair_mode(
    positives: &[Tensor],
    negatives: &[Tensor],
    subspace: &Subspace,
    mode: usize,
) -> Result<ScatterPair> {
    if positives.is_empty() {
        return Err(Error::Empty("no positive samples"));
    }
    let dims = check_samples(positives, negatives)?;
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
    let centroid = Tensor::mean(positives)?;
    let sx = accumulate(positives, &centroid, &subspace.projections, mode)?;
    let sy = accumulate(negatives, &centroid, &subspace.projections, mode)?;
    Ok(ScatterPair { sy, sx, centroid })
}

fn accumulate(samples: &[Tensor], centre: &Tensor, w: &[Matrix], mode: usize) -> Result<Matrix> {
    let d = w[mode].cols();
    let mut acc = Matrix::zeros(d, d);
    for s in samples {
        let reduced = project_modes(&s.sub(centre)?, w, Some(mode))?;
        reduced.add_mode_gram_to(mode, 1.0, &mut acc)?;
    }
    Ok(acc)
}

fn accumulate_centered(samples: &[Tensor], w: &[Matrix], mode: usize) -> Result<Matrix> {
    let d = w[mode].cols();
    let mut acc = Matrix::zeros(d, d);
    for s in samples {
        project_modes(s, w, Some(mode))?.add_mode_gram_to(mode, 1.0, &mut acc)?;
    }
    Ok(acc)
}

/// Turns the top eigenvectors into a `k x d` projection.
pub(crate) fn projection_from(result: &EigenResult, config: &EigenConfig) -> (Matrix, bool) {
    if config.sqrt_weighting {
        let (basis, clamped) = weight_by_sqrt_eigenvalues(result);
        (basis.transpose(), clamped)
    } else {
        (result.eigenvectors.transpose(), false)
    }
}

/// Outcome of one mode update.
#[derive(Debug, Clone)]
pub struct ModeUpdate {
    pub mode: usize,
    pub sy: Matrix,
    pub sx: Matrix,
    pub result: EigenResult,
    /// Projection for this mode before the update.
    pub previous: Matrix,
}

/// Alternating solver state. Samples are stored centered on the positive
/// centroid, which leaves every projected distance unchanged.
#[derive(Debug, Clone)]
pub struct MbdaState {
    positives: Vec<Tensor>,
    negatives: Vec<Tensor>,
    centroid: Tensor,
    projections: Vec<Matrix>,
    eigenvalues: Vec<Vec<f64>>,
    clamped: bool,
    config: MbdaConfig,
}

impl MbdaState {
    pub fn new(positives: &[Tensor], negatives: &[Tensor], config: &MbdaConfig) -> Result<Self> {
        if positives.is_empty() {
            return Err(Error::Empty("no positive samples"));
        }
        if negatives.is_empty() {
            return Err(Error::Empty("no negative samples"));
        }
        let dims = check_samples(positives, negatives)?;
        config.validate(&dims)?;
        let centroid = Tensor::mean(positives)?;
        let center = |ts: &[Tensor]| -> Result<Vec<Tensor>> {
            ts.iter().map(|t| t.sub(&centroid)).collect()
        };
        Ok(Self {
            positives: center(positives)?,
            negatives: center(negatives)?,
            projections: dims.iter().map(|&d| Matrix::identity(d)).collect(),
            eigenvalues: vec![Vec::new(); dims.len()],
            clamped: false,
            centroid,
            config: config.clone(),
        })
    }

    pub fn projections(&self) -> &[Matrix] {
        &self.projections
    }

    pub fn centroid(&self) -> &Tensor {
        &self.centroid
    }

    /// Current mode-`mode` scatter matrices `(S_y, S_x)`.
    pub fn scatter(&self, mode: usize) -> Result<(Matrix, Matrix)> {
        let sy = accumulate_centered(&self.negatives, &self.projections, mode)?;
        let sx = accumulate_centered(&self.positives, &self.projections, mode)?;
        Ok((sy, sx))
    }

    /// Solves the mode-`mode` problem and replaces that projection at once.
    pub fn update_mode(&mut self, mode: usize) -> Result<ModeUpdate> {
        if mode >= self.projections.len() {
            return Err(Error::InvalidMode {
                mode,
                order: self.projections.len(),
            });
        }
        let (sy, sx) = self.scatter(mode)?;
        let k = self.config.target_dims[mode];
        let result = solve_with_config(&sy, &sx, k, &self.config.eigen)?;
        let (w, clamped) = projection_from(&result, &self.config.eigen);
        self.clamped |= clamped;
        self.eigenvalues[mode] = result.eigenvalues.clone();
        let previous = std::mem::replace(&mut self.projections[mode], w);
        Ok(ModeUpdate {
            mode,
            sy,
            sx,
            result,
            previous,
        })
    }

    /// Objective at the current projections.
    pub fn objective(&self) -> Result<f64> {
        let sum = |ts: &[Tensor]| -> Result<f64> {
            ts.iter()
                .map(|t| project_modes(t, &self.projections, None).map(|p| p.sq_norm()))
                .sum()
        };
        ratio(sum(&self.negatives)?, sum(&self.positives)?)
    }

    pub fn into_subspace(self, iterations_run: usize, objective_trace: Vec<f64>) -> Subspace {
        Subspace {
            projections: self.projections,
            iterations_run,
            objective_trace,
            eigenvalues: self.eigenvalues,
            clamped: self.clamped,
            config: self.config,
        }
    }
}

/// Runs the alternating solver. Every projection starts as the identity;
/// modes are updated in order and each new projection is used immediately.
/// Iteration stops after `max_iterations` or once the objective changes by
/// less than `tolerance` (relative) between full iterations.
pub fn fit_mbda(positives: &[Tensor], negatives: &[Tensor], config: &MbdaConfig) -> Result<Subspace> {
    let mut state = MbdaState::new(positives, negatives, config)?;
    let order = state.projections.len();
    let (iterations, trace) = run_alternating(
        config,
        order,
        &mut state,
        |s, j| s.update_mode(j).map(|_| ()),
        MbdaState::objective,
    )?;
    Ok(state.into_subspace(iterations, trace))
}

/// Shared alternating loop. Returns the number of iterations run and the
/// objective recorded after each mode update from the second iteration on.
pub(crate) fn run_alternating<S>(
    config: &MbdaConfig,
    order: usize,
    state: &mut S,
    mut update: impl FnMut(&mut S, usize) -> Result<()>,
    objective: impl Fn(&S) -> Result<f64>,
) -> Result<(usize, Vec<f64>)> {
    let mut trace = Vec::new();
    let mut previous: Option<f64> = None;
    let mut iterations = 0;
    'outer: for iteration in 1..=config.max_iterations {
        iterations = iteration;
        for mode in 0..order {
            update(state, mode)?;
            if iteration >= 2 {
                match objective(state) {
                    Ok(v) => trace.push(v),
                    // Positives collapsed onto their centroid: nothing left to improve.
                    Err(Error::ZeroDenominator) => break 'outer,
                    Err(e) => return Err(e),
                }
            }
        }
        let current = if iteration >= 2 {
            *trace.last().expect("recorded above")
        } else {
            match objective(state) {
                Ok(v) => v,
                Err(Error::ZeroDenominator) => break,
                Err(e) => return Err(e),
            }
        };
        if let Some(prev) = previous {
            if (current - prev).abs() <= config.tolerance * prev.abs() {
                break;
            }
        }
        previous = Some(current);
    }
    Ok((iterations, trace))
}

/// Vector biased discriminant analysis. Returns a `d x r` matrix whose
/// columns are the top generalized eigenvectors of the negative versus
/// positive scatter, both taken about the positive mean.
pub fn fit_bda(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    r: usize,
    config: &EigenConfig,
) -> Result<Matrix> {
    let d = positives
        .first()
        .ok_or(Error::Empty("no positive samples"))?
        .len();
    if let Some(bad) = positives.iter().chain(negatives).find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} among length-{d} samples",
            bad.len()
        )));
    }
    if r == 0 || r > d {
        return Err(Error::InvalidArgument(format!("target dim {r} for length {d}")));
    }
    let n = positives.len() as f64;
    let mut mean = vec![0.0; d];
    for x in positives {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let scatter = |samples: &[Vec<f64>]| {
        let mut s = Matrix::zeros(d, d);
        let mut diff = vec![0.0; d];
        for x in samples {
            for ((o, v), m) in diff.iter_mut().zip(x).zip(&mean) {
                *o = v - m;
            }
            for i in 0..d {
                for j in i..d {
                    s[(i, j)] += diff[i] * diff[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                s[(i, j)] = s[(j, i)];
            }
        }
        s
    };
    let sx = scatter(positives);
    let sy = scatter(negatives);
    let result = solve_with_config(&sy, &sx, r, config)?;
    let (w, _) = projection_from(&result, config);
    Ok(w.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Tensor {
        Tensor::from_vec(&[x.len()], x.to_vec()).unwrap()
    }

    #[test]
    fn hand_computed_bda() {
        let pos = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let neg = vec![vec![0.5, 1.0], vec![0.5, -1.0]];
        let eig = EigenConfig {
            regularizer: crate::eigen::Regularizer::Fixed(1e-6),
            ..Default::default()
        };
        let w = fit_bda(&pos, &neg, 1, &eig).unwrap();
        assert_eq!(w.shape(), (2, 1));
        assert!(w[(0, 0)].abs() < 1e-12);
        assert!((w[(1, 0)] - 1.0).abs() < 1e-12);

        let pos_t: Vec<Tensor> = pos.iter().map(|x| v(x)).collect();
        let neg_t: Vec<Tensor> = neg.iter().map(|x| v(x)).collect();
        let pair = scatter_pair_mode(&pos_t, &neg_t, &Subspace::identity(&[2]), 0).unwrap();
        assert_eq!(pair.sx, Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.0]]).unwrap());
        assert_eq!(pair.sy, Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 2.0]]).unwrap());
    }

    #[test]
    fn single_positive_has_zero_scatter() {
        let x = Tensor::from_fn(&[2, 3], |ix| (ix[0] * 3 + ix[1]) as f64).unwrap();
        let y = x.scale(2.0);
        let pair = scatter_pair_mode(&[x.clone()], &[y], &Subspace::identity(&[2, 3]), 1).unwrap();
        assert!(pair.sx.as_slice().iter().all(|v| *v == 0.0));
        assert_eq!(pair.centroid, x);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let x = v(&[1.0, 2.0]);
        let s = Subspace::identity(&[2]);
        assert!(scatter_pair_mode(&[], &[x.clone()], &s, 0).is_err());
        assert!(scatter_pair_mode(&[x.clone()], &[v(&[1.0])], &s, 0).is_err());
        assert!(scatter_pair_mode(&[x.clone()], &[x.clone()], &s, 1).is_err());
        let cfg = MbdaConfig::new(vec![1]);
        assert!(fit_mbda(&[x.clone()], &[], &cfg).is_err());
        assert!(fit_bda(&[vec![1.0]], &[vec![1.0, 2.0]], 1, &EigenConfig::default()).is_err());
        assert!(fit_bda(&[vec![1.0]], &[vec![2.0]], 2, &EigenConfig::default()).is_err());
    }

    #[test]
    fn degenerate_positives_without_ridge_fail() {
        let x = v(&[1.0, 2.0]);
        let cfg = MbdaConfig::new(vec![1]).with_eigen(EigenConfig {
            regularizer: crate::eigen::Regularizer::Fixed(0.0),
            ..Default::default()
        });
        let err = fit_mbda(&[x.clone(), x.clone()], &[v(&[0.0, 1.0])], &cfg);
        assert!(matches!(err, Err(Error::NotPositiveDefinite { .. })));
    }
}
