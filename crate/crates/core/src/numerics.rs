//! Random streams, small dense linear algebra, and the Adagrad minimizer.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A reproducible stream of random draws identified by `(seed, stream_id)`.
///
/// Streams with the same identity replay the same sequence. Child streams
/// obtained with [`RandomStream::substream`] are independent of the parent
/// and of each other, so work split across threads stays deterministic as
/// long as every unit of work owns its substream.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RandomStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derives the `index`-th child stream. Depends only on this stream's
    /// identity, not on how many draws have been consumed from it.
    pub fn substream(&self, index: u64) -> RandomStream {
        let key = splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(0x5bd1_e995)));
        RandomStream::new(key, index)
    }

    /// One standard-normal draw.
    pub fn gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// `dim` i.i.d. standard-normal draws.
    pub fn gaussian_vector(&mut self, dim: usize) -> Result<Vec<f64>> {
        if dim == 0 {
            return Err(Error::invalid("gaussian_vector: dim must be at least 1"));
        }
        Ok((0..dim).map(|_| self.gaussian()).collect())
    }

    /// Uniform draw on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::invalid(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::invalid(format!(
                "matrix has {} columns but vector has length {}",
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// Matrix built from the listed rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Least-squares solution plus conditioning diagnostics.
#[derive(Clone, Debug)]
pub struct LeastSquaresSolution {
    pub x: Vec<f64>,
    /// Condition number of `HᵀH` before any ridge is added.
    pub condition_number: f64,
    /// `‖Hx − b‖`.
    pub residual_norm: f64,
    /// Total ridge actually applied (requested ridge plus any automatic floor).
    pub ridge_used: f64,
}

impl LeastSquaresSolution {
    pub fn floored(&self, requested: f64) -> bool {
        self.ridge_used > requested
    }
}

/// Pivots above this condition number are treated as a failed factorization.
const MAX_CONDITION: f64 = 1e12;

/// Minimizes `‖Hx − b‖² + ridge·‖x‖²` through the normal equations.
///
/// When the Cholesky factorization fails, or `HᵀH + ridge·I` is numerically
/// singular, a ridge floor of `1e-10·trace(HᵀH)/K` is added (growing tenfold
/// until the factorization succeeds).
pub fn least_squares_solve(h: &DenseMatrix, b: &[f64], ridge: f64) -> Result<LeastSquaresSolution> {
    let (m, k) = (h.rows(), h.cols());
    if m == 0 || k == 0 {
        return Err(Error::invalid("least_squares_solve: empty system"));
    }
    if b.len() != m {
        return Err(Error::invalid(format!(
            "least_squares_solve: H has {m} rows but b has length {}",
            b.len()
        )));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::invalid("least_squares_solve: ridge must be finite and nonnegative"));
    }
    if h.as_slice().iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least_squares_solve input".into()));
    }

    let hm = DMatrix::from_row_slice(m, k, h.as_slice());
    let gram = hm.transpose() * &hm;
    let rhs = hm.transpose() * DVector::from_column_slice(b);

    let eig = gram.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let condition_number = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };

    let trace = gram.trace();
    let mut floor = 1e-10 * if trace > 0.0 { trace / k as f64 } else { 1.0 };
    let mut ridge_used = ridge;
    let x = loop {
        let mut a = gram.clone();
        for i in 0..k {
            a[(i, i)] += ridge_used;
        }
        let shifted_cond = if lmin + ridge_used > 0.0 {
            (lmax + ridge_used) / (lmin + ridge_used)
        } else {
            f64::INFINITY
        };
        if shifted_cond <= MAX_CONDITION {
            if let Some(ch) = a.cholesky() {
                break ch.solve(&rhs);
            }
        }
        ridge_used = ridge + floor;
        floor *= 10.0;
        if !floor.is_finite() {
            return Err(Error::NonFinite("least_squares_solve: ridge floor diverged".into()));
        }
    };

    let x: Vec<f64> = x.iter().copied().collect();
    let fitted = h.mul_vec(&x)?;
    let residual_norm = fitted
        .iter()
        .zip(b)
        .map(|(f, y)| (f - y) * (f - y))
        .sum::<f64>()
        .sqrt();
    Ok(LeastSquaresSolution {
        x,
        condition_number,
        residual_norm,
        ridge_used,
    })
}

/// Denominator stabilizer for Adagrad.
pub const ADAGRAD_DELTA: f64 = 1e-8;

/// Adagrad with a fixed base step size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adagrad {
    pub step: f64,
    pub iters: usize,
}

impl Default for Adagrad {
    fn default() -> Self {
        Adagrad {
            step: 1.0,
            iters: 100,
        }
    }
}

/// Outcome of a tracked Adagrad run.
#[derive(Clone, Debug)]
pub struct AdagradRun {
    /// Best iterate seen (lowest objective), including the start point.
    pub best: Vec<f64>,
    pub best_value: f64,
    pub initial_value: f64,
    /// Iterate after the final update.
    pub last: Vec<f64>,
    /// Best-so-far objective after each evaluation.
    pub best_so_far: Vec<f64>,
}

impl Adagrad {
    pub fn new(step: f64, iters: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::invalid("adagrad step must be positive"));
        }
        if iters == 0 {
            return Err(Error::invalid("adagrad iters must be at least 1"));
        }
        Ok(Adagrad { step, iters })
    }

    /// Runs `iters` updates and returns the final iterate.
    pub fn minimize<F>(&self, mut grad_fn: F, theta0: &[f64]) -> Result<Vec<f64>>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let mut theta = theta0.to_vec();
        let mut acc = vec![0.0; theta.len()];
        for it in 0..self.iters {
            let g = grad_fn(&theta);
            self.update(&mut theta, &mut acc, &g, it)?;
        }
        Ok(theta)
    }

    /// Like [`Adagrad::minimize`] but also evaluates the objective and keeps
    /// the best iterate. `value_grad` returns `(f(θ), ∇f(θ))`.
    pub fn minimize_tracked<F>(&self, mut value_grad: F, theta0: &[f64]) -> Result<AdagradRun>
    where
        F: FnMut(&[f64]) -> (f64, Vec<f64>),
    {
        let mut theta = theta0.to_vec();
        let mut acc = vec![0.0; theta.len()];
        let mut best = theta.clone();
        let mut best_value = f64::INFINITY;
        let mut initial_value = f64::NAN;
        let mut best_so_far = Vec::with_capacity(self.iters + 1);
        for it in 0..=self.iters {
            let (value, g) = value_grad(&theta);
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("adagrad objective at iteration {it}: {value}")));
            }
            if it == 0 {
                initial_value = value;
            }
            if value < best_value {
                best_value = value;
                best.clone_from(&theta);
            }
            best_so_far.push(best_value);
            // exact zero: nothing left to improve
            if it == self.iters || value == 0.0 {
                break;
            }
            self.update(&mut theta, &mut acc, &g, it)?;
        }
        Ok(AdagradRun {
            best,
            best_value,
            initial_value,
            last: theta,
            best_so_far,
        })
    }

    fn update(&self, theta: &mut [f64], acc: &mut [f64], g: &[f64], it: usize) -> Result<()> {
        if g.len() != theta.len() {
            return Err(Error::invalid(format!(
                "gradient has length {} but parameters have length {}",
                g.len(),
                theta.len()
            )));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "adagrad gradient component {i} at iteration {it}: {}",
                g[i]
            )));
        }
        for ((t, a), gi) in theta.iter_mut().zip(acc.iter_mut()).zip(g) {
            *a += gi * gi;
            *t -= self.step * gi / (*a + ADAGRAD_DELTA).sqrt();
        }
        Ok(())
    }
}

/// Free-function form of [`Adagrad::minimize`].
pub fn adagrad_minimize<F>(grad_fn: F, theta0: &[f64], step: f64, iters: usize) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    Adagrad::new(step, iters)?.minimize(grad_fn, theta0)
}

/// Value at 1-indexed rank `⌈tau·n⌉` of the ascending-sorted values
/// (rank 1 when `tau = 0`).
pub fn empirical_quantile(values: &[f64], tau: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("empirical_quantile: empty input"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("empirical_quantile: tau {tau} not in [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[quantile_rank(sorted.len(), tau)])
}

/// Zero-based index selected by the ceiling-rank convention.
pub(crate) fn quantile_rank(n: usize, tau: f64) -> usize {
    // tolerate representation error such as 0.3 * 10 = 3.0000000000000004
    let rank = (tau * n as f64 - 1e-9).ceil().max(1.0) as usize;
    rank.min(n) - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_stream_is_reproducible() {
        let a = RandomStream::new(7, 0).gaussian_vector(3).unwrap();
        let b = RandomStream::new(7, 0).gaussian_vector(3).unwrap();
        assert_eq!(a, b);
        let c = RandomStream::new(7, 1).gaussian_vector(3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_moments() {
        let mut s = RandomStream::new(11, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| s.gaussian()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 0.02, "mean {mean}");
        assert!((var - 1.0).abs() <= 0.05, "var {var}");
    }

    #[test]
    fn gaussian_vector_rejects_zero_dim() {
        assert!(RandomStream::new(1, 0).gaussian_vector(0).is_err());
    }

    #[test]
    fn substreams_ignore_consumed_state() {
        let mut a = RandomStream::new(3, 9);
        let fresh = a.substream(4).gaussian_vector(5).unwrap();
        a.gaussian_vector(10).unwrap();
        assert_eq!(fresh, a.substream(4).gaussian_vector(5).unwrap());
        assert_ne!(fresh, a.substream(5).gaussian_vector(5).unwrap());
    }

    #[test]
    fn least_squares_identity() {
        let h = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let sol = least_squares_solve(&h, &[3.0, -1.0], 0.0).unwrap();
        assert!((sol.x[0] - 3.0).abs() < 1e-12 && (sol.x[1] + 1.0).abs() < 1e-12);
        assert_eq!(sol.ridge_used, 0.0);
    }

    #[test]
    fn least_squares_consistent_overdetermined() {
        let h = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let sol = least_squares_solve(&h, &[1.0, 2.0, 3.0], 0.0).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-10);
        assert!((sol.x[1] - 2.0).abs() < 1e-10);
        assert!(sol.residual_norm < 1e-10);
    }

    #[test]
    fn least_squares_rank_one_symmetric() {
        let h = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let sol = least_squares_solve(&h, &[2.0, 2.0], 1e-8).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-4, "{:?}", sol.x);
        assert!((sol.x[1] - 1.0).abs() < 1e-4, "{:?}", sol.x);
    }

    #[test]
    fn least_squares_singular_without_ridge_gets_floor() {
        let h = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let sol = least_squares_solve(&h, &[2.0, 2.0], 0.0).unwrap();
        assert!(sol.floored(0.0));
        assert!(sol.condition_number.is_infinite() || sol.condition_number > 1e12);
        assert!((sol.x[0] - 1.0).abs() < 1e-4 && (sol.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn least_squares_shape_errors() {
        let h = DenseMatrix::zeros(2, 2);
        assert!(least_squares_solve(&h, &[1.0], 0.0).is_err());
        assert!(DenseMatrix::new(2, 2, vec![0.0; 3]).is_err());
    }

    fn reference_adagrad_scalar(mut theta: f64, step: f64, iters: usize) -> f64 {
        let mut acc = 0.0;
        for _ in 0..iters {
            let g = 2.0 * theta;
            acc += g * g;
            theta -= step * g / (acc + 1e-8_f64).sqrt();
        }
        theta
    }

    #[test]
    fn adagrad_scalar_quadratic_matches_reference() {
        let got = adagrad_minimize(|t| vec![2.0 * t[0]], &[5.0], 1.0, 100).unwrap();
        let want = reference_adagrad_scalar(5.0, 1.0, 100);
        assert_eq!(got[0], want);
        assert!(got[0].abs() < 0.1, "{}", got[0]);
    }

    #[test]
    fn adagrad_zero_gradient_is_fixed_point() {
        let got = adagrad_minimize(|t| vec![0.0; t.len()], &[1.0, 2.0], 1.0, 100).unwrap();
        assert_eq!(got, vec![1.0, 2.0]);
    }

    #[test]
    fn adagrad_default_is_projection_setting() {
        assert_eq!(Adagrad::default(), Adagrad { step: 1.0, iters: 100 });
    }

    #[test]
    fn adagrad_rejects_non_finite_gradient() {
        let err = adagrad_minimize(|_| vec![f64::NAN], &[1.0], 1.0, 3).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn adagrad_converges_on_convex_quadratic() {
        // f(x) = (x0 - 1)^2 + 3 (x1 + 2)^2 + x0 x1
        let grad = |t: &[f64]| vec![2.0 * (t[0] - 1.0) + t[1], 6.0 * (t[1] + 2.0) + t[0]];
        // analytic minimizer: solve [[2,1],[1,6]] x = [2, -12]
        let det = 2.0 * 6.0 - 1.0;
        let x0 = (2.0 * 6.0 - 1.0 * -12.0) / det;
        let x1 = (2.0 * -12.0 - 1.0 * 2.0) / det;
        let got = adagrad_minimize(grad, &[0.0, 0.0], 0.5, 10_000).unwrap();
        assert!((got[0] - x0).abs() < 1e-3 && (got[1] - x1).abs() < 1e-3, "{got:?}");
    }

    #[test]
    fn tracked_run_best_never_increases() {
        let run = Adagrad::new(1.0, 50)
            .unwrap()
            .minimize_tracked(|t| (t[0].powi(4), vec![4.0 * t[0].powi(3)]), &[1.5])
            .unwrap();
        assert!(run.best_so_far.windows(2).all(|w| w[1] <= w[0]));
        assert!(run.best_value <= run.initial_value);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(empirical_quantile(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 2.0);
        assert_eq!(empirical_quantile(&[5.0], 0.37).unwrap(), 5.0);
        assert_eq!(empirical_quantile(&[3.0, 1.0, 2.0], 1.0).unwrap(), 3.0);
        assert_eq!(empirical_quantile(&[3.0, 1.0, 2.0], 0.0).unwrap(), 1.0);
        assert!(empirical_quantile(&[], 0.5).is_err());
    }
}
