//! Factor updates for `min ‖V − WH‖²` over `W ≥ 0` or `H ≥ 0` with the other
//! two matrices fixed, and the masked-gradient KKT residual used for stopping.
//!
//! The `H` updates run the `W` kernels on the transposed problem
//! `V' ≈ H'W'`, so both factors share one implementation.

use ndarray::{Array2, ArrayView2, ArrayViewMut2, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::largest_eigenvalue_psd;

/// Nonnegative factors: `w` is `T × K` (profiles), `h` is `K × N` (weights).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
}

impl FactorPair {
    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    pub fn product(&self) -> Array2<f64> {
        self.w.dot(&self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMethod {
    /// One or more Gauss-Seidel sweeps of exact column updates.
    Hals,
    /// Accelerated projected gradient with a monotone safeguard.
    Nesterov,
}

impl UpdateMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            UpdateMethod::Hals => "hals",
            UpdateMethod::Nesterov => "nesterov",
        }
    }
}

impl std::str::FromStr for UpdateMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hals" => Ok(UpdateMethod::Hals),
            "nesterov" | "nenmf" => Ok(UpdateMethod::Nesterov),
            other => Err(format!("unknown update method `{other}` (expected hals or nesterov)")),
        }
    }
}

/// KKT residuals and objective at one iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopState {
    /// `‖R(W)‖²_F`
    pub kkt_w: f64,
    /// `‖R(H)‖²_F`
    pub kkt_h: f64,
    /// `‖V − WH‖²_F`
    pub objective: f64,
    pub iteration: usize,
}

impl StopState {
    pub fn kkt(&self) -> f64 {
        self.kkt_w + self.kkt_h
    }
}

/// Result of one factor update. `degenerate` lists components whose Gram
/// diagonal (or whole Gram matrix) vanished and were left untouched.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UpdateOutcome {
    pub degenerate: Vec<usize>,
}

/// HALS update of every column of `factor` (rows × K) against
/// `cross = V·Hᵀ` (rows × K) and `gram = H·Hᵀ` (K × K).
fn hals_kernel(
    mut factor: ArrayViewMut2<f64>,
    cross: &Array2<f64>,
    gram: &Array2<f64>,
    sweeps: usize,
) -> UpdateOutcome {
    let (rows, rank) = factor.dim();
    let mut outcome = UpdateOutcome::default();
    for k in 0..rank {
        if !(gram[[k, k]] > 0.0) {
            outcome.degenerate.push(k);
        }
    }
    for _ in 0..sweeps {
        for k in 0..rank {
            let gkk = gram[[k, k]];
            if !(gkk > 0.0) {
                continue;
            }
            let gram_col = gram.column(k);
            for i in 0..rows {
                let row = factor.row(i);
                let fitted: f64 = row.iter().zip(gram_col.iter()).map(|(a, b)| a * b).sum();
                let next = row[k] + (cross[[i, k]] - fitted) / gkk;
                factor[[i, k]] = next.max(0.0);
            }
        }
    }
    outcome
}

/// Value of `tr(X G Xᵀ) − 2⟨X, C⟩`, i.e. `‖V − XH‖²` up to the constant `‖V‖²`.
fn reduced_objective(x: &Array2<f64>, cross: &Array2<f64>, gram: &Array2<f64>) -> f64 {
    let xg = x.dot(gram);
    Zip::from(&xg).and(x).and(cross).fold(0.0, |acc, &a, &b, &c| acc + b * (a - 2.0 * c))
}

fn projected_step(point: &Array2<f64>, cross: &Array2<f64>, gram: &Array2<f64>, lipschitz: f64) -> Array2<f64> {
    let mut grad = point.dot(gram);
    grad -= cross;
    Zip::from(&mut grad).and(point).for_each(|g, &p| *g = (p - *g / lipschitz).max(0.0));
    grad
}

/// Accelerated projected gradient for the same subproblem as [`hals_kernel`].
fn nesterov_kernel(
    mut factor: ArrayViewMut2<f64>,
    cross: &Array2<f64>,
    gram: &Array2<f64>,
    inner_iters: usize,
) -> UpdateOutcome {
    let lipschitz = largest_eigenvalue_psd(gram);
    if !(lipschitz > 0.0) {
        return UpdateOutcome { degenerate: (0..gram.nrows()).collect() };
    }
    let mut current = factor.to_owned();
    let mut f_current = reduced_objective(&current, cross, gram);
    let mut extrapolated = current.clone();
    let mut alpha = 1.0_f64;
    for _ in 0..inner_iters {
        let mut next = projected_step(&extrapolated, cross, gram, lipschitz);
        let mut f_next = reduced_objective(&next, cross, gram);
        if f_next > f_current {
            // Momentum overshot: restart from a plain projected-gradient step.
            next = projected_step(&current, cross, gram, lipschitz);
            f_next = reduced_objective(&next, cross, gram);
            alpha = 1.0;
            if f_next > f_current {
                break;
            }
            extrapolated = next.clone();
        } else {
            let alpha_next = 0.5 * (1.0 + (1.0 + 4.0 * alpha * alpha).sqrt());
            let beta = (alpha - 1.0) / alpha_next;
            extrapolated = &next + &((&next - &current) * beta);
            alpha = alpha_next;
        }
        let stalled = next == current;
        current = next;
        f_current = f_next;
        if stalled {
            break;
        }
    }
    factor.assign(&current);
    UpdateOutcome::default()
}

/// Exact HALS column updates of `W`: `w_k ← max(0, w_k + (VHᵀ − WHHᵀ)_{:,k} / (HHᵀ)_{kk})`.
pub fn update_w_hals(w: &mut Array2<f64>, h: &Array2<f64>, v: ArrayView2<f64>, sweeps: usize) -> UpdateOutcome {
    let cross = v.dot(&h.t());
    let gram = h.dot(&h.t());
    hals_kernel(w.view_mut(), &cross, &gram, sweeps)
}

/// HALS row updates of `H`, via the transposed problem.
pub fn update_h_hals(w: &Array2<f64>, h: &mut Array2<f64>, v: ArrayView2<f64>, sweeps: usize) -> UpdateOutcome {
    let cross = v.t().dot(w);
    let gram = w.t().dot(w);
    hals_kernel(h.view_mut().reversed_axes(), &cross, &gram, sweeps)
}

/// Accelerated projected-gradient update of `W` with step `1/L`,
/// `L = λ_max(HHᵀ)`.
pub fn update_w_nesterov(
    w: &mut Array2<f64>,
    h: &Array2<f64>,
    v: ArrayView2<f64>,
    inner_iters: usize,
) -> UpdateOutcome {
    let cross = v.dot(&h.t());
    let gram = h.dot(&h.t());
    nesterov_kernel(w.view_mut(), &cross, &gram, inner_iters)
}

pub fn update_h_nesterov(
    w: &Array2<f64>,
    h: &mut Array2<f64>,
    v: ArrayView2<f64>,
    inner_iters: usize,
) -> UpdateOutcome {
    let cross = v.t().dot(w);
    let gram = w.t().dot(w);
    nesterov_kernel(h.view_mut().reversed_axes(), &cross, &gram, inner_iters)
}

/// Updates `factor` (rows × K) given `cross` (rows × K) and `gram` (K × K)
/// precomputed by the caller: `(VHᵀ, HHᵀ)` for `W`, `(VᵀW, WᵀW)` for `Hᵀ`.
pub(crate) fn update_factor(
    method: UpdateMethod,
    factor: ArrayViewMut2<f64>,
    cross: &Array2<f64>,
    gram: &Array2<f64>,
    hals_sweeps: usize,
    nesterov_inner: usize,
) -> UpdateOutcome {
    match method {
        UpdateMethod::Hals => hals_kernel(factor, cross, gram, hals_sweeps),
        UpdateMethod::Nesterov => nesterov_kernel(factor, cross, gram, nesterov_inner),
    }
}

/// Step size constant used by the accelerated updates: largest eigenvalue of
/// the Gram matrix, by power iteration.
pub fn lipschitz_constant(gram: &Array2<f64>) -> f64 {
    largest_eigenvalue_psd(gram)
}

/// Masked-gradient KKT residuals
/// `R(W) = |(WH − V)Hᵀ| ⊙ 1[W ≠ 0]`, `R(H) = |Wᵀ(WH − V)| ⊙ 1[H ≠ 0]`.
pub fn kkt_residual(w: &Array2<f64>, h: &Array2<f64>, v: ArrayView2<f64>) -> StopState {
    let mut residual = w.dot(h);
    residual -= &v;
    kkt_from_residual(w, h, &residual)
}

/// Same as [`kkt_residual`] with `WH − V` already formed.
pub(crate) fn kkt_from_residual(w: &Array2<f64>, h: &Array2<f64>, residual: &Array2<f64>) -> StopState {
    let grad_w = residual.dot(&h.t());
    let grad_h = w.t().dot(residual);
    let masked = |grad: &Array2<f64>, factor: &Array2<f64>| {
        Zip::from(grad)
            .and(factor)
            .fold(0.0, |acc, &g, &f| if f != 0.0 { acc + g * g } else { acc })
    };
    StopState {
        kkt_w: masked(&grad_w, w),
        kkt_h: masked(&grad_h, h),
        objective: residual.iter().map(|r| r * r).sum(),
        iteration: 0,
    }
}

/// Refills all-zero columns of `W` and all-zero rows of `H` with positive
/// noise of size `1e-12 · scale`. Returns how many components were touched.
pub fn reseed_zero_components<R: Rng + ?Sized>(pair: &mut FactorPair, scale: f64, rng: &mut R) -> usize {
    let magnitude = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut touched = 0;
    for mut col in pair.w.columns_mut() {
        if col.iter().all(|&x| x == 0.0) {
            col.mapv_inplace(|_| magnitude * (1.0 - rng.random::<f64>()));
            touched += 1;
        }
    }
    for mut row in pair.h.rows_mut() {
        if row.iter().all(|&x| x == 0.0) {
            row.mapv_inplace(|_| magnitude * (1.0 - rng.random::<f64>()));
            touched += 1;
        }
    }
    touched
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>())
    }

    fn objective(w: &Array2<f64>, h: &Array2<f64>, v: &Array2<f64>) -> f64 {
        (w.dot(h) - v).mapv(|x| x * x).sum()
    }

    fn instance(seed: u64) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random(12, 9, &mut rng);
        let w = random(12, 3, &mut rng);
        let h = random(3, 9, &mut rng);
        (w, h, v)
    }

    #[test]
    fn exact_product_is_fixed_point() {
        let (w, h, _) = instance(1);
        let v = w.dot(&h);
        let (mut w2, mut h2) = (w.clone(), h.clone());
        update_w_hals(&mut w2, &h, v.view(), 1);
        update_h_hals(&w, &mut h2, v.view(), 1);
        assert!((&w2 - &w).iter().all(|d| d.abs() < 1e-12));
        assert!((&h2 - &h).iter().all(|d| d.abs() < 1e-12));
        let (mut w3, mut h3) = (w.clone(), h.clone());
        update_w_nesterov(&mut w3, &h, v.view(), 20);
        update_h_nesterov(&w, &mut h3, v.view(), 20);
        assert!((&w3 - &w).iter().all(|d| d.abs() < 1e-12));
        assert!((&h3 - &h).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn rank_one_with_unit_weights_gives_clipped_row_means() {
        let v = array![[1.0, 3.0], [-4.0, 2.0], [0.5, 0.5]];
        let h = array![[1.0, 1.0]];
        let mut w = array![[0.3], [0.7], [0.1]];
        update_w_hals(&mut w, &h, v.view(), 1);
        assert_eq!(w, array![[2.0], [0.0], [0.5]]);
    }

    #[test]
    fn rank_one_h_update_mirrors_w() {
        let v = array![[1.0, -4.0, 0.5], [3.0, 2.0, 0.5]];
        let w = array![[1.0], [1.0]];
        let mut h = array![[0.3, 0.7, 0.1]];
        update_h_hals(&w, &mut h, v.view(), 1);
        assert_eq!(h, array![[2.0, 0.0, 0.5]]);
    }

    #[test]
    fn updates_do_not_increase_objective() {
        for seed in 0..20 {
            let (w, h, v) = instance(seed);
            let before = objective(&w, &h, &v);
            let slack = 1e-10 * (1.0 + before);
            let mut w1 = w.clone();
            update_w_hals(&mut w1, &h, v.view(), 1);
            assert!(objective(&w1, &h, &v) <= before + slack);
            let mut h1 = h.clone();
            update_h_hals(&w, &mut h1, v.view(), 1);
            assert!(objective(&w, &h1, &v) <= before + slack);
            let mut w2 = w.clone();
            update_w_nesterov(&mut w2, &h, v.view(), 20);
            assert!(objective(&w2, &h, &v) <= before + slack);
            let mut h2 = h.clone();
            update_h_nesterov(&w, &mut h2, v.view(), 20);
            assert!(objective(&w, &h2, &v) <= before + slack);
            assert!(w1.iter().chain(h1.iter()).chain(w2.iter()).chain(h2.iter()).all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn single_nesterov_step_is_projected_gradient() {
        let (w, h, v) = instance(4);
        let gram = h.dot(&h.t());
        let lip = lipschitz_constant(&gram);
        let expected = (&w - &((w.dot(&gram) - v.dot(&h.t())) / lip)).mapv(|x| x.max(0.0));
        let mut w1 = w.clone();
        update_w_nesterov(&mut w1, &h, v.view(), 1);
        assert!((&w1 - &expected).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn hals_and_nesterov_agree_on_convex_subproblem() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let v = random(30, 20, &mut rng);
        let h = random(4, 20, &mut rng);
        let start = random(30, 4, &mut rng);
        let mut w_hals = start.clone();
        for _ in 0..2000 {
            update_w_hals(&mut w_hals, &h, v.view(), 1);
        }
        let mut w_nest = start;
        update_w_nesterov(&mut w_nest, &h, v.view(), 50);
        let a = objective(&w_hals, &h, &v);
        let b = objective(&w_nest, &h, &v);
        assert!((a - b).abs() <= 1e-6 * a, "hals {a} vs nesterov {b}");
    }

    #[test]
    fn kkt_matches_loop_oracle() {
        let (mut w, h, v) = instance(5);
        w[[0, 1]] = 0.0;
        let state = kkt_residual(&w, &h, v.view());
        let (t, k, n) = (w.nrows(), w.ncols(), h.ncols());
        let mut resid = Array2::<f64>::zeros((t, n));
        for i in 0..t {
            for j in 0..n {
                let mut s = -v[[i, j]];
                for q in 0..k {
                    s += w[[i, q]] * h[[q, j]];
                }
                resid[[i, j]] = s;
            }
        }
        let (mut kw, mut kh, mut obj) = (0.0, 0.0, 0.0);
        for i in 0..t {
            for q in 0..k {
                let g: f64 = (0..n).map(|j| resid[[i, j]] * h[[q, j]]).sum();
                if w[[i, q]] != 0.0 {
                    kw += g * g;
                }
            }
        }
        for q in 0..k {
            for j in 0..n {
                let g: f64 = (0..t).map(|i| w[[i, q]] * resid[[i, j]]).sum();
                if h[[q, j]] != 0.0 {
                    kh += g * g;
                }
            }
        }
        for r in resid.iter() {
            obj += r * r;
        }
        assert!((state.kkt_w - kw).abs() <= 1e-12 * kw.max(1.0));
        assert!((state.kkt_h - kh).abs() <= 1e-12 * kh.max(1.0));
        assert!((state.objective - obj).abs() <= 1e-12 * obj.max(1.0));
    }

    #[test]
    fn kkt_vanishes_at_exact_fit_and_masks_zero_factor() {
        let (w, h, _) = instance(6);
        let v = w.dot(&h);
        let s = kkt_residual(&w, &h, v.view());
        assert!(s.kkt_w < 1e-24 && s.kkt_h < 1e-24);
        let (_, h, v) = instance(7);
        let zero = Array2::zeros((12, 3));
        assert_eq!(kkt_residual(&zero, &h, v.view()).kkt_w, 0.0);
    }

    #[test]
    fn degenerate_components_are_flagged_and_reseeded() {
        let (mut w, mut h, v) = instance(8);
        h.row_mut(1).fill(0.0);
        let before = w.clone();
        let out = update_w_hals(&mut w, &h, v.view(), 1);
        assert_eq!(out.degenerate, vec![1]);
        assert_eq!(w.column(1), before.column(1));
        let mut pair = FactorPair { w, h };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(reseed_zero_components(&mut pair, 1.0, &mut rng), 1);
        assert!(pair.h.row(1).iter().all(|x| *x > 0.0 && *x <= 1e-12));

        let zero_h = Array2::zeros((3, 9));
        let mut w = before.clone();
        let out = update_w_nesterov(&mut w, &zero_h, v.view(), 5);
        assert_eq!(out.degenerate.len(), 3);
        assert_eq!(w, before);
    }
}
