//! Latent factor models trained by alternating least squares.
//!
//! Three objectives share the machinery here:
//!
//! * [`wmf_train`]: implicit-feedback weighted MF over the full binary matrix,
//!   with confidence `1 + alpha` on observed entries and `1` elsewhere.
//! * [`mf_train`]: MF restricted to the observed entries.
//! * [`joint_train`]: the observed-entry user-item loss plus an item-item
//!   loss `sum (V_ij - Y_i . Z_j)^2` over the support of `V`, optionally with
//!   nonnegativity enforced by projecting each solved row onto `[0, inf)`.
//!
//! Every row update solves its K x K regularized normal equations exactly,
//! so without projection each sweep cannot increase the objective.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{add_diagonal, add_outer, axpy, cholesky_solve, dot};
use crate::sparse::{CsrMatrix, SparseBinaryMatrix};

/// Row-major latent matrix: one length-`k` vector per user or item.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    rows: usize,
    k: usize,
    data: Vec<f64>,
}

impl FactorMatrix {
    pub fn zeros(rows: usize, k: usize) -> Self {
        FactorMatrix {
            rows,
            k,
            data: vec![0.0; rows * k],
        }
    }

    pub fn from_vec(rows: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * k {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{k} factor matrix",
                data.len()
            )));
        }
        Ok(FactorMatrix { rows, k, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.k..(r + 1) * self.k]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.k..(r + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.k)
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `F^T F`, K x K row-major.
    fn gram(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.k * self.k];
        for row in self.iter_rows() {
            add_outer(&mut g, row, 1.0);
        }
        g
    }
}

/// Training knobs shared by all objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Latent dimension.
    pub k: usize,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub lambda_z: f64,
    /// WMF confidence weight on observed entries.
    pub alpha: f64,
    /// SPPMI shift.
    pub shift_k: u32,
    pub sweeps: usize,
    pub seed: u64,
    pub init_scale: f64,
    pub nonneg: bool,
    /// Multiplier on the item-item loss term.
    pub item_item_weight: f64,
    /// Sum the item-item loss over every (i, j) pair, treating missing `V`
    /// entries as zeros, instead of over the support only.
    pub item_item_dense_zeros: bool,
    /// Training stops once the relative loss change of a sweep is below this.
    pub tol: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            k: 20,
            lambda_x: 0.1,
            lambda_y: 0.1,
            lambda_z: 0.1,
            alpha: 10.0,
            shift_k: 1,
            sweeps: 50,
            seed: 0,
            init_scale: 0.1,
            nonneg: true,
            item_item_weight: 1.0,
            item_item_dense_zeros: false,
            tol: 1e-6,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.into(),
            })
        };
        if self.k == 0 {
            return bad("k", "latent dimension must be at least 1");
        }
        for (name, v) in [
            ("lambda_x", self.lambda_x),
            ("lambda_y", self.lambda_y),
            ("lambda_z", self.lambda_z),
            ("alpha", self.alpha),
            ("item_item_weight", self.item_item_weight),
            ("tol", self.tol),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, "must be a finite nonnegative number");
            }
        }
        if self.sweeps == 0 {
            return bad("sweeps", "must be at least 1");
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale", "must be positive");
        }
        if self.shift_k == 0 {
            return bad("shift_k", "must be at least 1");
        }
        Ok(())
    }
}

/// User factors `x`, item factors `y` and, for the joint model, item
/// context factors `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub x: FactorMatrix,
    pub y: FactorMatrix,
    pub z: Option<FactorMatrix>,
}

impl FactorModel {
    pub fn k(&self) -> usize {
        self.x.k
    }

    pub fn n_users(&self) -> usize {
        self.x.rows
    }

    pub fn n_items(&self) -> usize {
        self.y.rows
    }

    /// `X_u . Y_i`
    pub fn predict_score(&self, u: usize, i: usize) -> Result<f64> {
        if u >= self.n_users() {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: u,
                size: self.n_users(),
            });
        }
        if i >= self.n_items() {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: i,
                size: self.n_items(),
            });
        }
        Ok(dot(self.x.row(u), self.y.row(i)))
    }

    pub fn is_finite(&self) -> bool {
        let finite = |m: &FactorMatrix| m.data.iter().all(|v| v.is_finite());
        finite(&self.x) && finite(&self.y) && self.z.as_ref().is_none_or(finite)
    }

    pub fn is_nonneg(&self) -> bool {
        let nonneg = |m: &FactorMatrix| m.data.iter().all(|&v| v >= 0.0);
        nonneg(&self.x) && nonneg(&self.y) && self.z.as_ref().is_none_or(nonneg)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Objective after each completed sweep.
    pub loss_per_sweep: Vec<f64>,
    pub converged: bool,
    pub sweeps_run: usize,
}

/// Objective split into its terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub user_item: f64,
    pub item_item: f64,
    pub regularization: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.user_item + self.item_item + self.regularization
    }
}

/// Draws every entry i.i.d. uniform on `[0, init_scale]` from `hyper.seed`.
/// `x` is drawn first, then `y`, then `z`, so the user and item factors do
/// not depend on `with_context`.
pub fn init_factors(
    n_users: usize,
    n_items: usize,
    hyper: &Hyperparams,
    with_context: bool,
) -> Result<FactorModel> {
    hyper.validate()?;
    if n_users == 0 || n_items == 0 {
        return Err(Error::EmptyInput("user or item dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut draw = |rows: usize| {
        let data = (0..rows * hyper.k)
            .map(|_| rng.gen::<f64>() * hyper.init_scale)
            .collect();
        FactorMatrix {
            rows,
            k: hyper.k,
            data,
        }
    };
    let x = draw(n_users);
    let y = draw(n_items);
    let z = with_context.then(|| draw(n_items));
    Ok(FactorModel { x, y, z })
}

/// Solves the prepared normal equations into `rhs`, then projects.
fn solve_into(
    gram: &mut [f64],
    rhs: &mut [f64],
    k: usize,
    nonneg: bool,
    block: &'static str,
    row: usize,
) -> Result<()> {
    if !cholesky_solve(gram, rhs, k) {
        return Err(Error::Singular { block, row });
    }
    if nonneg {
        for v in rhs.iter_mut() {
            *v = v.max(0.0);
        }
    }
    Ok(())
}

/// Runs sweeps until `hyper.sweeps` is exhausted or the relative loss change
/// drops below `hyper.tol`.
fn run_sweeps<S, L>(
    hyper: &Hyperparams,
    model: &mut FactorModel,
    mut sweep: S,
    loss: L,
) -> Result<TrainReport>
where
    S: FnMut(&mut FactorModel) -> Result<()>,
    L: Fn(&FactorModel) -> f64,
{
    let mut report = TrainReport::default();
    let mut prev = loss(model);
    for _ in 0..hyper.sweeps {
        sweep(model)?;
        let cur = loss(model);
        report.loss_per_sweep.push(cur);
        report.sweeps_run += 1;
        if prev == 0.0 || (prev - cur).abs() < hyper.tol * prev.abs() {
            report.converged = true;
            break;
        }
        prev = cur;
    }
    Ok(report)
}

fn check_model_shape(model: &FactorModel, n_users: usize, n_items: usize, k: usize) -> Result<()> {
    if model.n_users() != n_users || model.n_items() != n_items || model.k() != k {
        return Err(Error::DimensionMismatch(format!(
            "model is {}x{} with K={}, data is {n_users}x{n_items} with K={k}",
            model.n_users(),
            model.n_items(),
            model.k()
        )));
    }
    if let Some(z) = &model.z {
        if z.rows != n_items || z.k != k {
            return Err(Error::DimensionMismatch(format!(
                "context factors are {}x{}, expected {n_items}x{k}",
                z.rows, z.k
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// WMF

/// Weighted objective of the implicit-feedback model: every cell contributes
/// `c (p - X_u . Y_i)^2` with `p = 1, c = 1 + alpha` on the support of `r`
/// and `p = 0, c = 1` elsewhere.
pub fn wmf_loss(
    r: &SparseBinaryMatrix,
    model: &FactorModel,
    hyper: &Hyperparams,
) -> Result<LossParts> {
    check_model_shape(model, r.rows(), r.cols(), hyper.k)?;
    let gy = model.y.gram();
    let k = hyper.k;
    let mut fit = 0.0;
    let mut tmp = vec![0.0; k];
    for u in 0..r.rows() {
        let xu = model.x.row(u);
        // x_u^T (Y^T Y) x_u covers every cell with target 0 and weight 1
        for (p, t) in tmp.iter_mut().enumerate() {
            *t = dot(&gy[p * k..(p + 1) * k], xu);
        }
        fit += dot(xu, &tmp);
        for &i in r.row(u) {
            let s = dot(xu, model.y.row(i));
            fit += (1.0 + hyper.alpha) * (1.0 - s) * (1.0 - s) - s * s;
        }
    }
    Ok(LossParts {
        user_item: fit,
        item_item: 0.0,
        regularization: hyper.lambda_x * model.x.squared_norm()
            + hyper.lambda_y * model.y.squared_norm(),
    })
}

/// One half-sweep of WMF: re-solves every row of `target` against `fixed`.
fn wmf_half_sweep(
    pattern: &SparseBinaryMatrix,
    fixed: &FactorMatrix,
    target: &mut FactorMatrix,
    alpha: f64,
    lambda: f64,
    nonneg: bool,
    block: &'static str,
) -> Result<()> {
    let k = fixed.k;
    let base = fixed.gram();
    let mut a = vec![0.0; k * k];
    let mut b = vec![0.0; k];
    for row in 0..target.rows {
        a.copy_from_slice(&base);
        b.iter_mut().for_each(|v| *v = 0.0);
        for &j in pattern.row(row) {
            let f = fixed.row(j);
            add_outer(&mut a, f, alpha);
            axpy(&mut b, f, 1.0 + alpha);
        }
        add_diagonal(&mut a, k, lambda);
        solve_into(&mut a, &mut b, k, nonneg, block, row)?;
        target.row_mut(row).copy_from_slice(&b);
    }
    Ok(())
}

/// Implicit-feedback weighted matrix factorization by ALS.
pub fn wmf_train(
    r: &SparseBinaryMatrix,
    hyper: &Hyperparams,
) -> Result<(FactorModel, TrainReport)> {
    hyper.validate()?;
    if r.nnz() == 0 {
        return Err(Error::EmptyInput("user-item matrix support"));
    }
    let mut model = init_factors(r.rows(), r.cols(), hyper, false)?;
    let rt =
        SparseBinaryMatrix::from_positions(r.cols(), r.rows(), r.positions().map(|(u, i)| (i, u)))?;
    let report = run_sweeps(
        hyper,
        &mut model,
        |m| {
            let FactorModel { x, y, .. } = m;
            wmf_half_sweep(r, y, x, hyper.alpha, hyper.lambda_x, hyper.nonneg, "user")?;
            wmf_half_sweep(&rt, x, y, hyper.alpha, hyper.lambda_y, hyper.nonneg, "item")
        },
        |m| {
            wmf_loss(r, m, hyper)
                .map(|l| l.total())
                .unwrap_or(f64::INFINITY)
        },
    )?;
    Ok((model, report))
}

// ---------------------------------------------------------------------------
// Observed-entry MF

/// `sum over support (r - X_u . Y_i)^2 + lambda_x |X|^2 + lambda_y |Y|^2`
pub fn masked_loss(r: &CsrMatrix, model: &FactorModel, hyper: &Hyperparams) -> Result<LossParts> {
    check_model_shape(model, r.rows(), r.cols(), hyper.k)?;
    Ok(LossParts {
        user_item: observed_fit(r, model),
        item_item: 0.0,
        regularization: hyper.lambda_x * model.x.squared_norm()
            + hyper.lambda_y * model.y.squared_norm(),
    })
}

fn observed_fit(r: &CsrMatrix, model: &FactorModel) -> f64 {
    r.iter()
        .map(|(u, i, v)| {
            let e = v - dot(model.x.row(u), model.y.row(i));
            e * e
        })
        .sum()
}

fn masked_half_sweep(
    data: &CsrMatrix,
    fixed: &FactorMatrix,
    target: &mut FactorMatrix,
    lambda: f64,
    nonneg: bool,
    block: &'static str,
) -> Result<()> {
    let k = fixed.k;
    let mut a = vec![0.0; k * k];
    let mut b = vec![0.0; k];
    for row in 0..target.rows {
        a.iter_mut().for_each(|v| *v = 0.0);
        b.iter_mut().for_each(|v| *v = 0.0);
        let (cols, vals) = data.row(row);
        for (&j, &v) in cols.iter().zip(vals) {
            let f = fixed.row(j);
            add_outer(&mut a, f, 1.0);
            axpy(&mut b, f, v);
        }
        add_diagonal(&mut a, k, lambda);
        solve_into(&mut a, &mut b, k, nonneg, block, row)?;
        target.row_mut(row).copy_from_slice(&b);
    }
    Ok(())
}

/// Matrix factorization over the observed entries of `r` only.
pub fn mf_train(r: &CsrMatrix, hyper: &Hyperparams) -> Result<(FactorModel, TrainReport)> {
    hyper.validate()?;
    let mut model = init_factors(r.rows(), r.cols(), hyper, false)?;
    let rt = r.transpose();
    let report = run_sweeps(
        hyper,
        &mut model,
        |m| {
            let FactorModel { x, y, .. } = m;
            masked_half_sweep(r, y, x, hyper.lambda_x, hyper.nonneg, "user")?;
            masked_half_sweep(&rt, x, y, hyper.lambda_y, hyper.nonneg, "item")
        },
        |m| {
            masked_loss(r, m, hyper)
                .map(|l| l.total())
                .unwrap_or(f64::INFINITY)
        },
    )?;
    Ok((model, report))
}

// ---------------------------------------------------------------------------
// Joint user-item / item-item model

/// Block coordinate solver for the joint objective
///
/// ```text
/// sum_{(u,i) in R} (R_ui - X_u.Y_i)^2 + w sum_{(i,j) in V} (V_ij - Y_i.Z_j)^2
///     + lambda_x |X|^2 + lambda_y |Y|^2 + lambda_z |Z|^2
/// ```
pub struct JointSolver<'a> {
    r: &'a CsrMatrix,
    r_t: CsrMatrix,
    v: &'a CsrMatrix,
    v_t: CsrMatrix,
    hyper: &'a Hyperparams,
}

impl<'a> JointSolver<'a> {
    pub fn new(r: &'a CsrMatrix, v: &'a CsrMatrix, hyper: &'a Hyperparams) -> Result<Self> {
        hyper.validate()?;
        if v.rows() != v.cols() || v.rows() != r.cols() {
            return Err(Error::DimensionMismatch(format!(
                "item-item matrix is {}x{} but the user-item matrix has {} items",
                v.rows(),
                v.cols(),
                r.cols()
            )));
        }
        Ok(JointSolver {
            r,
            r_t: r.transpose(),
            v,
            v_t: v.transpose(),
            hyper,
        })
    }

    fn check(&self, model: &FactorModel) -> Result<()> {
        check_model_shape(model, self.r.rows(), self.r.cols(), self.hyper.k)?;
        if model.z.is_none() {
            return Err(Error::DimensionMismatch(
                "joint model needs context factors".into(),
            ));
        }
        Ok(())
    }

    /// Re-solves every user row given `Y`.
    pub fn update_users(&self, model: &mut FactorModel) -> Result<()> {
        self.check(model)?;
        let h = self.hyper;
        masked_half_sweep(self.r, &model.y, &mut model.x, h.lambda_x, h.nonneg, "user")
    }

    /// Re-solves every item row given `X` and `Z`.
    pub fn update_items(&self, model: &mut FactorModel) -> Result<()> {
        self.check(model)?;
        let h = self.hyper;
        let k = h.k;
        let w = h.item_item_weight;
        let FactorModel { x, y, z } = model;
        let z = z.as_ref().expect("checked");
        let dense_base = h.item_item_dense_zeros.then(|| z.gram());
        let mut a = vec![0.0; k * k];
        let mut b = vec![0.0; k];
        for i in 0..y.rows {
            a.iter_mut().for_each(|v| *v = 0.0);
            b.iter_mut().for_each(|v| *v = 0.0);
            let (users, ratings) = self.r_t.row(i);
            for (&u, &rv) in users.iter().zip(ratings) {
                let xu = x.row(u);
                add_outer(&mut a, xu, 1.0);
                axpy(&mut b, xu, rv);
            }
            let (ctx, vals) = self.v.row(i);
            match &dense_base {
                Some(g) => axpy(&mut a, g, w),
                None => {
                    for &j in ctx {
                        add_outer(&mut a, z.row(j), w);
                    }
                }
            }
            for (&j, &vv) in ctx.iter().zip(vals) {
                axpy(&mut b, z.row(j), w * vv);
            }
            add_diagonal(&mut a, k, h.lambda_y);
            solve_into(&mut a, &mut b, k, h.nonneg, "item", i)?;
            y.row_mut(i).copy_from_slice(&b);
        }
        Ok(())
    }

    /// Re-solves every context row given `Y`.
    pub fn update_contexts(&self, model: &mut FactorModel) -> Result<()> {
        self.check(model)?;
        let h = self.hyper;
        let k = h.k;
        let w = h.item_item_weight;
        let FactorModel { y, z, .. } = model;
        let z = z.as_mut().expect("checked");
        let dense_base = h.item_item_dense_zeros.then(|| y.gram());
        let mut a = vec![0.0; k * k];
        let mut b = vec![0.0; k];
        for j in 0..z.rows {
            a.iter_mut().for_each(|v| *v = 0.0);
            b.iter_mut().for_each(|v| *v = 0.0);
            let (items, vals) = self.v_t.row(j);
            match &dense_base {
                Some(g) => axpy(&mut a, g, w),
                None => {
                    for &i in items {
                        add_outer(&mut a, y.row(i), w);
                    }
                }
            }
            for (&i, &vv) in items.iter().zip(vals) {
                axpy(&mut b, y.row(i), w * vv);
            }
            add_diagonal(&mut a, k, h.lambda_z);
            solve_into(&mut a, &mut b, k, h.nonneg, "context", j)?;
            z.row_mut(j).copy_from_slice(&b);
        }
        Ok(())
    }

    /// Users, then items, then contexts.
    pub fn sweep(&self, model: &mut FactorModel) -> Result<()> {
        self.update_users(model)?;
        self.update_items(model)?;
        self.update_contexts(model)
    }

    pub fn loss_parts(&self, model: &FactorModel) -> Result<LossParts> {
        self.check(model)?;
        let h = self.hyper;
        let z = model.z.as_ref().expect("checked");
        let item_item = if h.item_item_dense_zeros {
            let mut total = 0.0;
            for i in 0..model.y.rows {
                let yi = model.y.row(i);
                for j in 0..z.rows {
                    let e = self.v.get(i, j).unwrap_or(0.0) - dot(yi, z.row(j));
                    total += e * e;
                }
            }
            total
        } else {
            self.v
                .iter()
                .map(|(i, j, vv)| {
                    let e = vv - dot(model.y.row(i), z.row(j));
                    e * e
                })
                .sum()
        };
        Ok(LossParts {
            user_item: observed_fit(self.r, model),
            item_item: h.item_item_weight * item_item,
            regularization: h.lambda_x * model.x.squared_norm()
                + h.lambda_y * model.y.squared_norm()
                + h.lambda_z * z.squared_norm(),
        })
    }

    pub fn loss(&self, model: &FactorModel) -> Result<f64> {
        self.loss_parts(model).map(|l| l.total())
    }

    /// Analytic gradient of [`JointSolver::loss`] with respect to `X`, `Y`
    /// and `Z`, without projection.
    pub fn gradient(
        &self,
        model: &FactorModel,
    ) -> Result<(FactorMatrix, FactorMatrix, FactorMatrix)> {
        self.check(model)?;
        let h = self.hyper;
        let z = model.z.as_ref().expect("checked");
        let k = h.k;
        let mut gx = FactorMatrix::zeros(model.x.rows, k);
        let mut gy = FactorMatrix::zeros(model.y.rows, k);
        let mut gz = FactorMatrix::zeros(z.rows, k);
        for (u, i, rv) in self.r.iter() {
            let e = rv - dot(model.x.row(u), model.y.row(i));
            axpy(gx.row_mut(u), model.y.row(i), -2.0 * e);
            axpy(gy.row_mut(i), model.x.row(u), -2.0 * e);
        }
        let w = h.item_item_weight;
        let mut item_item_term = |i: usize, j: usize, vv: f64| {
            let e = vv - dot(model.y.row(i), z.row(j));
            axpy(gy.row_mut(i), z.row(j), -2.0 * w * e);
            axpy(gz.row_mut(j), model.y.row(i), -2.0 * w * e);
        };
        if h.item_item_dense_zeros {
            for i in 0..model.y.rows {
                for j in 0..z.rows {
                    item_item_term(i, j, self.v.get(i, j).unwrap_or(0.0));
                }
            }
        } else {
            for (i, j, vv) in self.v.iter() {
                item_item_term(i, j, vv);
            }
        }
        axpy(gx.as_mut_slice(), model.x.as_slice(), 2.0 * h.lambda_x);
        axpy(gy.as_mut_slice(), model.y.as_slice(), 2.0 * h.lambda_y);
        axpy(gz.as_mut_slice(), z.as_slice(), 2.0 * h.lambda_z);
        Ok((gx, gy, gz))
    }
}

/// Trains the joint user-item / item-item model from a fresh initialization.
pub fn joint_train(
    r: &CsrMatrix,
    v: &CsrMatrix,
    hyper: &Hyperparams,
) -> Result<(FactorModel, TrainReport)> {
    let solver = JointSolver::new(r, v, hyper)?;
    let mut model = init_factors(r.rows(), r.cols(), hyper, true)?;
    let report = run_sweeps(
        hyper,
        &mut model,
        |m| solver.sweep(m),
        |m| solver.loss(m).unwrap_or(f64::INFINITY),
    )?;
    Ok((model, report))
}

/// Value of the joint objective.
pub fn joint_loss(
    r: &CsrMatrix,
    v: &CsrMatrix,
    model: &FactorModel,
    hyper: &Hyperparams,
) -> Result<f64> {
    JointSolver::new(r, v, hyper)?.loss(model)
}

/// Gradient triple `(dX, dY, dZ)` of the joint objective.
pub fn joint_grad(
    r: &CsrMatrix,
    v: &CsrMatrix,
    model: &FactorModel,
    hyper: &Hyperparams,
) -> Result<(FactorMatrix, FactorMatrix, FactorMatrix)> {
    JointSolver::new(r, v, hyper)?.gradient(model)
}

// ---------------------------------------------------------------------------
// Ranking

/// The `k` best-scoring items for user `u` outside `exclude`, descending by
/// score with ties going to the lower item index. Returns fewer than `k`
/// items when not enough candidates remain.
pub fn recommend_topk(
    model: &FactorModel,
    u: usize,
    k: usize,
    exclude: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "must be at least 1".into(),
        });
    }
    if u >= model.n_users() {
        return Err(Error::IndexOutOfRange {
            what: "user",
            index: u,
            size: model.n_users(),
        });
    }
    let m = model.n_items();
    let mut skip = vec![false; m];
    for &i in exclude {
        if i < m {
            skip[i] = true;
        }
    }
    let xu = model.x.row(u);
    let mut scored: Vec<(usize, f64)> = (0..m)
        .filter(|&i| !skip[i])
        .map(|i| (i, dot(xu, model.y.row(i))))
        .collect();
    let order = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(order);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper(k: usize) -> Hyperparams {
        Hyperparams {
            k,
            nonneg: false,
            ..Hyperparams::default()
        }
    }

    fn model_from(x: &[f64], y: &[f64], z: Option<&[f64]>, k: usize) -> FactorModel {
        FactorModel {
            x: FactorMatrix::from_vec(x.len() / k, k, x.to_vec()).unwrap(),
            y: FactorMatrix::from_vec(y.len() / k, k, y.to_vec()).unwrap(),
            z: z.map(|z| FactorMatrix::from_vec(z.len() / k, k, z.to_vec()).unwrap()),
        }
    }

    #[test]
    fn init_is_deterministic_and_in_range() {
        let h = Hyperparams {
            k: 4,
            seed: 11,
            init_scale: 0.1,
            ..Hyperparams::default()
        };
        let a = init_factors(5, 7, &h, true).unwrap();
        let b = init_factors(5, 7, &h, true).unwrap();
        assert_eq!(a, b);
        let all =
            a.x.as_slice()
                .iter()
                .chain(a.y.as_slice())
                .chain(a.z.as_ref().unwrap().as_slice());
        assert!(all.into_iter().all(|&v| (0.0..=0.1).contains(&v)));
        let c = init_factors(5, 7, &h, false).unwrap();
        assert!(c.z.is_none());
        assert_eq!((c.x, c.y), (a.x, a.y));
        assert!(init_factors(0, 7, &h, false).is_err());
    }

    #[test]
    fn hyperparams_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        assert!(Hyperparams {
            k: 0,
            ..Hyperparams::default()
        }
        .validate()
        .is_err());
        assert!(Hyperparams {
            lambda_y: -1.0,
            ..Hyperparams::default()
        }
        .validate()
        .is_err());
        assert!(Hyperparams {
            sweeps: 0,
            ..Hyperparams::default()
        }
        .validate()
        .is_err());
        assert!(Hyperparams {
            init_scale: 0.0,
            ..Hyperparams::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn predict_by_hand() {
        let m = model_from(&[1.0, 2.0, 0.0, 0.0], &[3.0, 0.5], None, 2);
        assert_eq!(m.predict_score(0, 0).unwrap(), 4.0);
        assert_eq!(m.predict_score(1, 0).unwrap(), 0.0);
        assert!(m.predict_score(2, 0).is_err());
        assert!(m.predict_score(0, 1).is_err());
    }

    #[test]
    fn joint_loss_by_hand() {
        let r = CsrMatrix::from_triplets(1, 1, [(0, 0, 1.0)]).unwrap();
        let v = CsrMatrix::from_triplets(1, 1, [(0, 0, 0.3)]).unwrap();
        let m = model_from(&[0.5], &[1.0], Some(&[0.2]), 1);
        let h = Hyperparams {
            k: 1,
            lambda_x: 0.1,
            lambda_y: 0.1,
            lambda_z: 0.1,
            ..Hyperparams::default()
        };
        let l = joint_loss(&r, &v, &m, &h).unwrap();
        assert!((l - 0.389).abs() < 1e-12);

        let doubled = Hyperparams {
            item_item_weight: 2.0,
            ..h.clone()
        };
        let solver = JointSolver::new(&r, &v, &h).unwrap();
        let solver2 = JointSolver::new(&r, &v, &doubled).unwrap();
        let (a, b) = (
            solver.loss_parts(&m).unwrap(),
            solver2.loss_parts(&m).unwrap(),
        );
        assert_eq!(b.item_item, 2.0 * a.item_item);
        assert_eq!(b.user_item, a.user_item);
    }

    #[test]
    fn joint_loss_zero_case_and_shape_errors() {
        let r = CsrMatrix::empty(2, 3);
        let v = CsrMatrix::empty(3, 3);
        let h = hyper(2);
        let zero = FactorModel {
            x: FactorMatrix::zeros(2, 2),
            y: FactorMatrix::zeros(3, 2),
            z: Some(FactorMatrix::zeros(3, 2)),
        };
        assert_eq!(joint_loss(&r, &v, &zero, &h).unwrap(), 0.0);
        let (gx, gy, gz) = joint_grad(&r, &v, &zero, &h).unwrap();
        assert!(gx
            .as_slice()
            .iter()
            .chain(gy.as_slice())
            .chain(gz.as_slice())
            .all(|&g| g == 0.0));
        assert!(joint_loss(&r, &CsrMatrix::empty(2, 2), &zero, &h).is_err());
        let no_z = FactorModel {
            z: None,
            ..zero.clone()
        };
        assert!(joint_loss(&r, &v, &no_z, &h).is_err());
        assert!(joint_loss(&CsrMatrix::empty(3, 3), &v, &zero, &h).is_err());
    }

    #[test]
    fn regularizer_only_gradient() {
        let r = CsrMatrix::empty(2, 2);
        let v = CsrMatrix::empty(2, 2);
        let h = Hyperparams {
            lambda_x: 0.3,
            ..hyper(2)
        };
        let m = init_factors(
            2,
            2,
            &Hyperparams {
                seed: 5,
                ..h.clone()
            },
            true,
        )
        .unwrap();
        let (gx, _, _) = joint_grad(&r, &v, &m, &h).unwrap();
        for (g, x) in gx.as_slice().iter().zip(m.x.as_slice()) {
            assert!((g - 0.6 * x).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_user_row_gets_zero_factor() {
        // user 1 has no observations
        let r = SparseBinaryMatrix::from_positions(2, 2, [(0, 0), (0, 1)]).unwrap();
        let h = Hyperparams {
            k: 2,
            alpha: 0.0,
            sweeps: 5,
            ..hyper(2)
        };
        let (m, _) = mf_train(r.as_csr(), &h).unwrap();
        assert!(m.x.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singular_system_names_the_row() {
        let r = CsrMatrix::from_triplets(2, 2, [(0, 0, 1.0)]).unwrap();
        let h = Hyperparams {
            lambda_x: 0.0,
            lambda_y: 0.0,
            ..hyper(2)
        };
        let err = mf_train(&r, &h).unwrap_err();
        assert!(
            matches!(err, Error::Singular { block: "user", .. }),
            "{err:?}"
        );
    }

    #[test]
    fn wmf_rejects_empty_support() {
        let r = SparseBinaryMatrix::from_positions(2, 2, []).unwrap();
        assert!(wmf_train(&r, &hyper(2)).is_err());
    }

    #[test]
    fn wmf_identity_fit() {
        let r = SparseBinaryMatrix::from_positions(2, 2, [(0, 0), (1, 1)]).unwrap();
        let h = Hyperparams {
            k: 2,
            alpha: 0.0,
            lambda_x: 1e-3,
            lambda_y: 1e-3,
            sweeps: 50,
            tol: 0.0,
            seed: 3,
            ..hyper(2)
        };
        let (m, report) = wmf_train(&r, &h).unwrap();
        assert_eq!(report.sweeps_run, 50);
        let loss = wmf_loss(&r, &m, &h).unwrap();
        assert!(loss.user_item < 1e-3, "{loss:?}");
    }

    #[test]
    fn joint_nonneg_projection() {
        let r =
            CsrMatrix::from_triplets(3, 3, [(0, 0, 1.0), (1, 1, 1.0), (2, 0, 1.0), (2, 2, 1.0)])
                .unwrap();
        let v = CsrMatrix::from_triplets(3, 3, [(0, 2, 0.7), (2, 0, 0.7)]).unwrap();
        let h = Hyperparams {
            k: 2,
            nonneg: true,
            sweeps: 30,
            ..Hyperparams::default()
        };
        let (m, report) = joint_train(&r, &v, &h).unwrap();
        assert!(m.is_nonneg());
        assert!(m.is_finite());
        assert!(report.sweeps_run >= 1);
    }

    #[test]
    fn topk_ordering_and_ties() {
        let m = model_from(&[1.0], &[0.1, 0.9, 0.5], None, 1);
        let top: Vec<_> = recommend_topk(&m, 0, 2, &[])
            .unwrap()
            .into_iter()
            .map(|p| p.0)
            .collect();
        assert_eq!(top, vec![1, 2]);
        let one = recommend_topk(&m, 0, 3, &[0, 1]).unwrap();
        assert_eq!(one, vec![(2, 0.5)]);
        let tied = model_from(&[1.0], &[0.5, 0.7, 0.7, 0.5], None, 1);
        let top: Vec<_> = recommend_topk(&tied, 0, 4, &[])
            .unwrap()
            .into_iter()
            .map(|p| p.0)
            .collect();
        assert_eq!(top, vec![1, 2, 0, 3]);
        assert!(recommend_topk(&m, 0, 0, &[]).is_err());
        assert!(recommend_topk(&m, 1, 1, &[]).is_err());
        assert_eq!(recommend_topk(&m, 0, 10, &[]).unwrap().len(), 3);
    }
}
