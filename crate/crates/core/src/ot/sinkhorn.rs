use super::{validate_problem, Coupling, SinkhornParams, SolverError};
use crate::cost::CostMatrix;
use crate::matrix::Matrix;

// Warm-up schedule: epsilon grows by this factor per stage, from the target
// up to the cost range.
const WARMUP_FACTOR: f64 = 4.0;
const WARMUP_ITERATIONS: usize = 100;
const WARMUP_TOLERANCE: f64 = 1e-4;

/// `log sum_j exp(shift_j + row_j)`, stabilized by the maximum term.
#[inline]
fn logsumexp(shift: &[f64], row: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (s, r) in shift.iter().zip(row) {
        max = max.max(s + r);
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut sum = 0.0;
    for (s, r) in shift.iter().zip(row) {
        sum += (s + r - max).exp();
    }
    max + sum.ln()
}

/// Below this a shifted kernel sum has lost precision; use the direct form.
const MIN_SHIFTED_SUM: f64 = 1e-290;

/// `exp` of each row of `log_kernel` shifted by the row maximum, so that
/// `LSE_j(x_j + K_ij) = max(x) + shift_i + ln sum_j exp(x_j - max(x)) E_ij`.
/// Rows whose shifted entries underflow are marked for the direct form.
struct ShiftedKernel {
    exp: Matrix,
    shift: Vec<f64>,
    direct: Vec<bool>,
}

impl ShiftedKernel {
    fn new(log_kernel: &Matrix) -> Self {
        let mut exp = Matrix::zeros(log_kernel.rows(), log_kernel.cols());
        let mut shift = Vec::with_capacity(log_kernel.rows());
        let mut direct = Vec::with_capacity(log_kernel.rows());
        for p in 0..log_kernel.rows() {
            let row = log_kernel.row(p);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut underflow = false;
            for (e, k) in exp.row_mut(p).iter_mut().zip(row) {
                *e = (k - max).exp();
                underflow |= *e < f64::MIN_POSITIVE;
            }
            shift.push(max);
            direct.push(underflow);
        }
        ShiftedKernel { exp, shift, direct }
    }

    /// `out_p = LSE_j(x_j + K_pj)` for every row `p`.
    fn logsumexp_rows(&self, log_kernel: &Matrix, x: &[f64], weights: &mut [f64], out: &mut [f64]) {
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (w, xi) in weights.iter_mut().zip(x) {
            *w = (xi - max).exp();
        }
        for (p, o) in out.iter_mut().enumerate() {
            let sum = if self.direct[p] { 0.0 } else { dot(self.exp.row(p), weights) };
            *o = if sum > MIN_SHIFTED_SUM {
                max + self.shift[p] + sum.ln()
            } else {
                logsumexp(x, log_kernel.row(p))
            };
        }
    }
}

/// Dot product with four fixed accumulators; the order is deterministic.
#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let tail: f64 = xc.remainder().iter().zip(yc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in xc.zip(yc) {
        for k in 0..4 {
            acc[k] += a[k] * b[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Active-support problem at one epsilon: `kernel = -C / eps`.
struct Scaled<'a> {
    kernel: Matrix,
    kernel_t: Matrix,
    rows: ShiftedKernel,
    cols: ShiftedKernel,
    log_a: &'a [f64],
    log_b: &'a [f64],
    a: &'a [f64],
}

impl<'a> Scaled<'a> {
    fn new(costs: &Matrix, epsilon: f64, log_a: &'a [f64], log_b: &'a [f64], a: &'a [f64]) -> Self {
        let inv = 1.0 / epsilon;
        let data = costs.as_slice().iter().map(|c| -c * inv).collect();
        let kernel = Matrix::from_vec(costs.rows(), costs.cols(), data).unwrap();
        let kernel_t = kernel.transpose();
        Scaled {
            rows: ShiftedKernel::new(&kernel),
            cols: ShiftedKernel::new(&kernel_t),
            kernel_t,
            kernel,
            log_a,
            log_b,
            a,
        }
    }

    /// Sinkhorn sweeps on the scaled potentials `u = f / eps`, `v = g / eps`
    /// until the row residual is at most `tol`. Returns the sweep count.
    fn iterate(&self, u: &mut [f64], v: &mut [f64], max_iterations: usize, tol: f64) -> usize {
        let mut lse_u = vec![0.0; u.len()];
        let mut lse_v = vec![0.0; v.len()];
        let mut weights_v = vec![0.0; v.len()];
        let mut weights_u = vec![0.0; u.len()];
        let mut iterations = 0;
        while iterations < max_iterations {
            // Row masses of the current plan are exp(u_i + lse_i). Columns are
            // exact after every v update, so rows decide convergence.
            self.rows.logsumexp_rows(&self.kernel, v, &mut weights_v, &mut lse_u);
            let residual = lse_u
                .iter()
                .zip(u.iter())
                .zip(self.a)
                .map(|((l, up), ap)| ((up + l).exp() - ap).abs())
                .fold(0.0, f64::max);
            if iterations > 0 && residual <= tol {
                break;
            }
            for (p, l) in lse_u.iter().enumerate() {
                u[p] = self.log_a[p] - l;
            }
            self.cols.logsumexp_rows(&self.kernel_t, u, &mut weights_u, &mut lse_v);
            for (q, l) in lse_v.iter().enumerate() {
                v[q] = self.log_b[q] - l;
            }
            iterations += 1;
        }
        iterations
    }
}

fn rescale(x: &mut [f64], factor: f64) {
    x.iter_mut().for_each(|v| *v *= factor);
}

/// Entropy-regularized optimal transport by log-domain Sinkhorn iterations.
///
/// Minimizes `<C, P> - epsilon * H(P)` over plans with row sums `a` and column
/// sums `b`. Rows and columns with zero weight are removed before iterating
/// and come back as exact zeros, so zero-mass padding leaves the plan on the
/// remaining support unchanged bit for bit.
///
/// Iterates the scaled dual potentials
/// `u_i = log a_i - LSE_j(v_j - C_ij / eps)` and
/// `v_j = log b_j - LSE_i(u_i - C_ij / eps)` until the row residual drops to
/// `marginal_tolerance` (columns are exact after each `v` update). With
/// `warm_start`, short runs at geometrically larger epsilons first bring the
/// potentials close to their final values; the fixed point is unchanged.
/// Running out of iterations is not an error; `converged` is false instead.
pub fn sinkhorn(
    cost: &CostMatrix,
    a: &[f64],
    b: &[f64],
    params: &SinkhornParams,
) -> Result<Coupling, SolverError> {
    params.validate()?;
    validate_problem(cost, a, b)?;

    let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    let mut active = Matrix::zeros(rows.len(), cols.len());
    for (p, &i) in rows.iter().enumerate() {
        let src = cost.row(i);
        for (dst, &j) in active.row_mut(p).iter_mut().zip(&cols) {
            *dst = src[j];
        }
    }
    let active_a: Vec<f64> = rows.iter().map(|&i| a[i]).collect();
    let log_a: Vec<f64> = active_a.iter().map(|w| w.ln()).collect();
    let log_b: Vec<f64> = cols.iter().map(|&j| b[j].ln()).collect();

    let mut u = vec![0.0; rows.len()];
    let mut v = vec![0.0; cols.len()];
    let mut iterations = 0;
    let mut current = params.epsilon;
    if params.warm_start {
        let range = active.max().max(0.0);
        let mut schedule = Vec::new();
        let mut eps = params.epsilon * WARMUP_FACTOR;
        while eps < range {
            schedule.push(eps);
            eps *= WARMUP_FACTOR;
        }
        for &eps in schedule.iter().rev() {
            rescale(&mut u, current / eps);
            rescale(&mut v, current / eps);
            let stage = Scaled::new(&active, eps, &log_a, &log_b, &active_a);
            let tol = WARMUP_TOLERANCE.max(params.marginal_tolerance);
            iterations += stage.iterate(&mut u, &mut v, WARMUP_ITERATIONS, tol);
            current = eps;
        }
    }
    rescale(&mut u, current / params.epsilon);
    rescale(&mut v, current / params.epsilon);
    let target = Scaled::new(&active, params.epsilon, &log_a, &log_b, &active_a);
    iterations += target.iterate(&mut u, &mut v, params.max_iterations, params.marginal_tolerance);

    let mut plan = Matrix::zeros(a.len(), b.len());
    for (p, &i) in rows.iter().enumerate() {
        let k = target.kernel.row(p);
        let out = plan.row_mut(i);
        for (q, &j) in cols.iter().enumerate() {
            out[j] = (u[p] + v[q] + k[q]).exp();
        }
    }
    Ok(Coupling::from_plan(
        plan,
        cost,
        a,
        b,
        iterations,
        params.marginal_tolerance,
    ))
}
