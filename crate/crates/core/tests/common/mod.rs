//! Independent oracles shared by the integration tests and the acceptance
//! target. Every `check_*` function returns a description of the first
//! failure instead of panicking.

#![allow(dead_code)]

use mbda_core::classify::{decision, evaluate, train_svm, AuPrediction, AuSet, SvmModel, SvmParams};
use mbda_core::discriminant::{objective, scatter_pair_mode};
use mbda_core::eigen::solve_generalized;
use mbda_core::{fit_bda, fit_mbda, fit_mda, EigenConfig, MbdaConfig, Matrix, Regularizer, Subspace, Tensor};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor {
    Tensor::from_fn(dims, |_| gaussian(rng)).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| gaussian(rng)).collect();
    Matrix::from_row_major(rows, cols, data).unwrap()
}

pub fn random_dims(rng: &mut ChaCha8Rng, max_order: usize, max_extent: usize) -> Vec<usize> {
    let order = rng.gen_range(1..=max_order);
    (0..order).map(|_| rng.gen_range(1..=max_extent)).collect()
}

/// Every multi-index of `dims`, first index fastest.
pub fn indices(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut ix = vec![0; dims.len()];
    for _ in 0..total {
        out.push(ix.clone());
        for (i, d) in ix.iter_mut().zip(dims) {
            *i += 1;
            if *i < *d {
                break;
            }
            *i = 0;
        }
    }
    out
}

/// `Y[.., k, ..] = sum_i W[k, i] Z[.., i, ..]` by explicit loops.
pub fn mode_product_oracle(z: &Tensor, w: &Matrix, mode: usize) -> Tensor {
    let mut dims = z.dims().to_vec();
    dims[mode] = w.rows();
    let mut out = Tensor::zeros(&dims).unwrap();
    for ix in indices(&dims) {
        let mut src = ix.clone();
        let mut acc = 0.0;
        for i in 0..z.dims()[mode] {
            src[mode] = i;
            acc += w[(ix[mode], i)] * z.get(&src);
        }
        out.set(&ix, acc);
    }
    out
}

pub fn project_oracle(z: &Tensor, ws: &[Matrix]) -> Tensor {
    ws.iter()
        .enumerate()
        .fold(z.clone(), |t, (j, w)| mode_product_oracle(&t, w, j))
}

pub fn sq_dist_oracle(a: &Tensor, b: &Tensor) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn max_rel_entry(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

/// Largest principal angle between the column spaces of two full-rank
/// `d x r` matrices.
pub fn max_principal_angle(a: &Matrix, b: &Matrix) -> f64 {
    let qa = to_na(a).qr().q();
    let qb = to_na(b).qr().q();
    let s = (qa.transpose() * qb).singular_values();
    s.iter().fold(1.0f64, |m, v| m.min(*v)).min(1.0).acos()
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Matrix {
    let b = random_matrix(rng, n, n);
    b.matmul(&b.transpose()).unwrap().add_identity(shift)
}

/// Generalized eigenvalues by nalgebra: Cholesky whitening plus a dense
/// symmetric solve, descending.
pub fn na_generalized_eigenvalues(sy: &Matrix, sx: &Matrix) -> Vec<f64> {
    let l = to_na(sx).cholesky().expect("SPD right-hand side").l();
    let linv = l.clone().try_inverse().expect("invertible factor");
    let c = &linv * to_na(sy) * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

pub fn check_tensor_suite(cases: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut worst_product = 0.0f64;
    let mut worst_distance = 0.0f64;
    for case in 0..cases {
        let dims = if case == 0 {
            vec![5, 5, 5, 5]
        } else {
            random_dims(&mut rng, 4, 5)
        };
        let z = random_tensor(&mut rng, &dims);
        let z2 = random_tensor(&mut rng, &dims);
        let distance = z.sq_distance(&z2).map_err(|e| e.to_string())?;
        worst_distance = worst_distance.max(rel_err(distance, sq_dist_oracle(&z, &z2)));
        for mode in 0..dims.len() {
            let m = z.unfold(mode).map_err(|e| e.to_string())?;
            let back = Tensor::fold(&m, mode, &dims).map_err(|e| e.to_string())?;
            if back.as_slice() != z.as_slice() {
                return Err(format!("fold(unfold) differs for dims {dims:?} mode {mode}"));
            }
            let rows = rng.gen_range(1..=5);
            let w = random_matrix(&mut rng, rows, dims[mode]);
            let got = z.mode_product(&w, mode).map_err(|e| e.to_string())?;
            let want = mode_product_oracle(&z, &w, mode);
            if got.dims() != want.dims() {
                return Err(format!("mode product dims {:?} vs {:?}", got.dims(), want.dims()));
            }
            worst_product = worst_product.max(max_rel_entry(got.as_slice(), want.as_slice()));
            let unfolded = z
                .unfold(mode)
                .and_then(|a| Ok(a.sub(&z2.unfold(mode)?)?.frobenius_norm().powi(2)))
                .map_err(|e| e.to_string())?;
            worst_distance = worst_distance.max(rel_err(distance, unfolded));
        }
    }
    if worst_product > 1e-12 {
        return Err(format!("mode product relative error {worst_product:.2e}"));
    }
    if worst_distance > 1e-12 {
        return Err(format!("distance relative error {worst_distance:.2e}"));
    }
    Ok(format!(
        "{cases} cases, product err {worst_product:.1e}, distance err {worst_distance:.1e}"
    ))
}

pub fn check_eigen_suite(pairs: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut worst_residual = 0.0f64;
    let mut worst_oracle = 0.0f64;
    let mut worst_congruence = 0.0f64;
    for _ in 0..pairs {
        let n = rng.gen_range(1..=20);
        let sy = random_spd(&mut rng, n, 0.0);
        let sx = random_spd(&mut rng, n, 0.5);
        let r = solve_generalized(&sy, &sx, n, 0.0).map_err(|e| e.to_string())?;
        let (fy, fx) = (sy.frobenius_norm(), sx.frobenius_norm());
        for (i, &lambda) in r.eigenvalues.iter().enumerate() {
            let a = r.vector(i);
            let lhs = sy.matvec(&a).unwrap();
            let rhs = sx.matvec(&a).unwrap();
            let res = lhs
                .iter()
                .zip(&rhs)
                .map(|(l, x)| (l - lambda * x).powi(2))
                .sum::<f64>()
                .sqrt();
            worst_residual = worst_residual.max(res / (fy + lambda.abs() * fx));
        }
        let oracle = na_generalized_eigenvalues(&sy, &sx);
        worst_oracle = worst_oracle.max(max_rel_entry(&r.eigenvalues, &oracle));

        let a = Matrix::identity(n).add(&random_matrix(&mut rng, n, n).scale(0.3 / (n as f64).sqrt())).unwrap();
        let congruent = |s: &Matrix| a.transpose().matmul(s).unwrap().matmul(&a).unwrap();
        let c = solve_generalized(&congruent(&sy), &congruent(&sx), n, 0.0).map_err(|e| e.to_string())?;
        worst_congruence = worst_congruence.max(max_rel_entry(&r.eigenvalues, &c.eigenvalues));
    }
    if worst_residual > 1e-8 {
        return Err(format!("generalized residual {worst_residual:.2e}"));
    }
    if worst_oracle > 1e-9 {
        return Err(format!("eigenvalues differ from dense oracle by {worst_oracle:.2e}"));
    }
    if worst_congruence > 1e-9 {
        return Err(format!("congruence changes eigenvalues by {worst_congruence:.2e}"));
    }
    Ok(format!(
        "{pairs} pairs, residual {worst_residual:.1e}, oracle {worst_oracle:.1e}, congruence {worst_congruence:.1e}"
    ))
}

fn trace_quadratic(w: &Matrix, s: &Matrix) -> f64 {
    w.matmul(s).unwrap().matmul(&w.transpose()).unwrap().trace()
}

fn random_samples(rng: &mut ChaCha8Rng, n: usize, dims: &[usize], shift: f64) -> Vec<Tensor> {
    (0..n)
        .map(|_| random_tensor(rng, dims).map(|v| v + shift))
        .collect()
}

/// Distance-sum ratio against the mode-`j` trace ratio for random
/// candidate projections.
pub fn check_ratio_identity(instances: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let order = rng.gen_range(1..=4);
        let dims: Vec<usize> = (0..order).map(|_| rng.gen_range(2..=4)).collect();
        let (n_pos, n_neg) = (rng.gen_range(2..=6), rng.gen_range(2..=6));
        let pos = random_samples(&mut rng, n_pos, &dims, 0.0);
        let neg = random_samples(&mut rng, n_neg, &dims, 0.5);
        let ws: Vec<Matrix> = dims
            .iter()
            .map(|&d| {
                let rows = rng.gen_range(1..=d);
                random_matrix(&mut rng, rows, d)
            })
            .collect();
        let subspace = Subspace::from_projections(ws.clone());

        let mean = Tensor::mean(&pos).unwrap();
        let centre = project_oracle(&mean, &ws);
        let dist_sum = |ts: &[Tensor]| -> f64 {
            ts.iter().map(|t| sq_dist_oracle(&project_oracle(t, &ws), &centre)).sum()
        };
        let (num, den) = (dist_sum(&neg), dist_sum(&pos));
        let by_distance = num / den;
        let lib = objective(&pos, &neg, &subspace).map_err(|e| e.to_string())?;
        worst = worst.max(rel_err(lib, by_distance));

        for mode in 0..order {
            let pair = scatter_pair_mode(&pos, &neg, &subspace, mode).map_err(|e| e.to_string())?;
            let tn = trace_quadratic(&ws[mode], &pair.sy);
            let td = trace_quadratic(&ws[mode], &pair.sx);
            worst = worst
                .max(rel_err(tn, num))
                .max(rel_err(td, den))
                .max(rel_err(tn / td, by_distance));
        }
    }
    if worst > 1e-10 {
        return Err(format!("trace ratio differs from distance ratio by {worst:.2e}"));
    }
    Ok(format!("{instances} instances, worst relative error {worst:.1e}"))
}

pub fn check_rank1_monotone(instances: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let dims = [3, 3, 2, 2];
    let config = MbdaConfig::new(vec![1; 4])
        .with_max_iterations(8)
        .with_tolerance(0.0)
        .with_eigen(EigenConfig {
            regularizer: Regularizer::Fixed(0.0),
            ..Default::default()
        });
    let mut steps = 0;
    for instance in 0..instances {
        let pos = random_samples(&mut rng, 8, &dims, 0.0);
        let neg = random_samples(&mut rng, 12, &dims, 0.3);
        let s = fit_mbda(&pos, &neg, &config).map_err(|e| e.to_string())?;
        for pair in s.objective_trace.windows(2) {
            steps += 1;
            if pair[1] < pair[0] - 1e-9 * pair[0].abs() {
                return Err(format!(
                    "instance {instance}: objective fell from {} to {}",
                    pair[0], pair[1]
                ));
            }
        }
    }
    Ok(format!("{instances} instances, {steps} non-decreasing steps"))
}

fn mean_vec(xs: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; xs[0].len()];
    for x in xs {
        for (a, v) in m.iter_mut().zip(x) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= xs.len() as f64);
    m
}

fn vectors(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|i| gaussian(rng) * (1.0 + i as f64 * 0.3) + shift).collect())
        .collect()
}

fn as_tensors(xs: &[Vec<f64>]) -> Vec<Tensor> {
    xs.iter().map(|x| Tensor::from_vec(&[x.len()], x.clone()).unwrap()).collect()
}

/// Order-1 fits against vector BDA and closed-form two-class Fisher.
pub fn check_reductions(instances: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut worst_bda = 0.0f64;
    let mut worst_fda = 0.0f64;
    for _ in 0..instances {
        let d = rng.gen_range(3..=7);
        let r = rng.gen_range(1..=d.min(3));
        let pos = vectors(&mut rng, 12, d, 0.0);
        let neg = vectors(&mut rng, 20, d, 1.0);
        let eigen = EigenConfig::default();
        let bda = fit_bda(&pos, &neg, r, &eigen).map_err(|e| e.to_string())?;
        let config = MbdaConfig::new(vec![r]).with_eigen(eigen);
        let mbda = fit_mbda(&as_tensors(&pos), &as_tensors(&neg), &config).map_err(|e| e.to_string())?;
        worst_bda = worst_bda.max(max_principal_angle(&bda, &mbda.projections[0].transpose()));

        let exact = EigenConfig {
            regularizer: Regularizer::Fixed(0.0),
            ..Default::default()
        };
        let mda = fit_mda(&as_tensors(&pos), &as_tensors(&neg), &MbdaConfig::new(vec![1]).with_eigen(exact))
            .map_err(|e| e.to_string())?;
        let (ma, mb) = (mean_vec(&pos), mean_vec(&neg));
        let mut sw = DMatrix::<f64>::zeros(d, d);
        for (xs, m) in [(&pos, &ma), (&neg, &mb)] {
            for x in xs.iter() {
                let v = DMatrix::from_fn(d, 1, |i, _| x[i] - m[i]);
                sw += &v * v.transpose();
            }
        }
        let diff = DMatrix::from_fn(d, 1, |i, _| ma[i] - mb[i]);
        let fisher = sw.lu().solve(&diff).expect("invertible within scatter");
        let fisher = Matrix::from_row_major(d, 1, fisher.iter().copied().collect()).unwrap();
        worst_fda = worst_fda.max(max_principal_angle(&fisher, &mda.projections[0].transpose()));
    }
    if worst_bda >= 1e-6 {
        return Err(format!("order-1 MBDA is {worst_bda:.2e} rad from vector BDA"));
    }
    if worst_fda >= 1e-6 {
        return Err(format!("order-1 MDA is {worst_fda:.2e} rad from Fisher direction"));
    }
    Ok(format!(
        "{instances} instances, BDA angle {worst_bda:.1e} rad, FDA angle {worst_fda:.1e} rad"
    ))
}

/// Expands a confusion table (`truth, sequences, exact, partial, disjoint`
/// with cells like `1(1+2+4), 2(7)`) into one prediction per sequence.
pub fn predictions_from_table(text: &str) -> Vec<AuPrediction> {
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 5, "bad row {line:?}");
        let truth: AuSet = cols[0].parse().unwrap();
        let sequences: usize = cols[1].parse().unwrap();
        let exact: usize = cols[2].parse().unwrap();
        let mut rows: Vec<AuSet> = vec![truth.clone(); exact];
        for cell in &cols[3..] {
            if cell.trim() == "0" {
                continue;
            }
            for item in cell.split(", ") {
                let (count, set) = item.trim_end_matches(')').split_once('(').unwrap();
                let set: AuSet = set.parse().unwrap();
                rows.extend(std::iter::repeat(set).take(count.parse().unwrap()));
            }
        }
        assert_eq!(rows.len(), sequences, "row {line:?} does not add up");
        for (i, predicted) in rows.into_iter().enumerate() {
            out.push(AuPrediction::new(format!("{}#{i}", cols[0]), predicted, truth.clone()));
        }
    }
    out
}

pub const UPPER_TABLE: &str = include_str!("../fixtures/upper_mbda.tsv");
pub const LOWER_TABLE: &str = include_str!("../fixtures/lower_mbda.tsv");

pub fn check_metric_replay() -> Check {
    let mut lines = Vec::new();
    for (name, text, r, f) in [
        ("upper", UPPER_TABLE, 89.2, 6.7),
        ("lower", LOWER_TABLE, 96.4, 2.1),
    ] {
        let m = evaluate(&predictions_from_table(text)).map_err(|e| e.to_string())?;
        let (got_r, got_f) = (100.0 * m.recognition_rate, 100.0 * m.false_alarm_rate);
        if (got_r - r).abs() > 0.05 || (got_f - f).abs() > 0.05 {
            return Err(format!(
                "{name}: R {got_r:.2}% F {got_f:.2}%, expected {r}% and {f}%"
            ));
        }
        lines.push(format!("{name} R {got_r:.1}% F {got_f:.1}%"));
    }
    Ok(lines.join(", "))
}

/// Largest KKT violation over the training set, measured as in the dual
/// optimality conditions with box bounds from the model.
pub fn kkt_violation(model: &SvmModel, xs: &[Vec<f64>], ys: &[i8]) -> f64 {
    let mut worst = 0.0f64;
    for (x, &y) in xs.iter().zip(ys) {
        let f = decision(model, x).unwrap();
        let margin = f64::from(y) * f;
        let alpha = model
            .support_vectors
            .iter()
            .position(|sv| sv == x)
            .map_or(0.0, |i| model.dual_coef[i].abs());
        let bound = model.bound(y);
        let violation = if alpha <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if alpha >= bound {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs() / (1.0 + f.abs())
        };
        worst = worst.max(violation);
    }
    worst
}

pub fn xor_fixture() -> (Vec<Vec<f64>>, Vec<i8>) {
    (
        vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
        vec![-1, -1, 1, 1],
    )
}

pub fn separable_fixture(seed: u64) -> (Vec<Vec<f64>>, Vec<i8>) {
    let mut rng = rng(seed);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..40 {
        let y: i8 = if i % 2 == 0 { 1 } else { -1 };
        let c = 3.0 * f64::from(y);
        xs.push(vec![c + 0.5 * gaussian(&mut rng), c + 0.5 * gaussian(&mut rng), 0.5 * gaussian(&mut rng)]);
        ys.push(y);
    }
    (xs, ys)
}

pub fn check_svm() -> Check {
    let mut lines = Vec::new();
    let xor_params = SvmParams {
        gamma: Some(1.0),
        c: 10.0,
        ..Default::default()
    };
    let (sep_x, sep_y) = separable_fixture(5);
    let (xor_x, xor_y) = xor_fixture();
    for (name, xs, ys, params) in [
        ("xor", xor_x, xor_y, xor_params),
        ("separable", sep_x, sep_y, SvmParams::default()),
    ] {
        let model = train_svm(&xs, &ys, &params).map_err(|e| e.to_string())?;
        let correct = xs
            .iter()
            .zip(&ys)
            .filter(|(x, &y)| decision(&model, x).unwrap() * f64::from(y) > 0.0)
            .count();
        if correct != xs.len() {
            return Err(format!("{name}: {correct} of {} correct", xs.len()));
        }
        let violation = kkt_violation(&model, &xs, &ys);
        if violation > params.tol {
            return Err(format!("{name}: KKT violation {violation:.2e} above tol {}", params.tol));
        }
        lines.push(format!("{name} 100%, KKT {violation:.1e}"));
    }
    Ok(lines.join(", "))
}

/// Default appearance fit on full-size tensors.
pub fn check_projection_shape(seed: u64) -> Check {
    let mut rng = rng(seed);
    let dims = [57, 102, 16, 4];
    let pos = random_samples(&mut rng, 3, &dims, 0.0);
    let neg = random_samples(&mut rng, 4, &dims, 0.2);
    let s = fit_mbda(&pos, &neg, &MbdaConfig::appearance_default()).map_err(|e| e.to_string())?;
    let out = mbda_core::project(&pos[0], &s).map_err(|e| e.to_string())?;
    if out.dims() != [3, 4, 1, 1] {
        return Err(format!("projected dims {:?}", out.dims()));
    }
    Ok(format!("{dims:?} -> {:?} after {} iterations", out.dims(), s.iterations_run))
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
