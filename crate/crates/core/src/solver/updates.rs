//! Closed-form block updates of the augmented Lagrangian.
//!
//! Split variables follow the constraints `V1 = E U`, `V2 = U`, `V3 = V2 W`,
//! `V4 = U`, `V5 = U`; `D1..D5` are the scaled multipliers. Each update is the
//! exact minimizer of its block.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::grid::{GramFactor, GuidanceOperator};

/// Iterates and scaled multipliers of the ADMM.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub u: DMatrix<f64>,
    pub v1: DMatrix<f64>,
    pub v2: DMatrix<f64>,
    pub v3: DMatrix<f64>,
    pub v4: DMatrix<f64>,
    pub v5: DMatrix<f64>,
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    pub d3: DMatrix<f64>,
    pub d4: DMatrix<f64>,
    pub d5: DMatrix<f64>,
    pub iteration: usize,
}

impl SolverState {
    /// Feasible start: `U = 1/M` everywhere, split variables consistent with
    /// `U`, multipliers zero.
    pub fn initial(e: &DMatrix<f64>, op: &GuidanceOperator) -> Self {
        let m = e.ncols();
        let n = op.dims().len();
        let u = DMatrix::from_element(m, n, 1.0 / m as f64);
        let v1 = e * &u;
        let v3 = op.apply(&u);
        Self {
            d1: DMatrix::zeros(v1.nrows(), n),
            d2: DMatrix::zeros(m, n),
            d3: DMatrix::zeros(m, 4 * n),
            d4: DMatrix::zeros(m, n),
            d5: DMatrix::zeros(m, n),
            v1,
            v2: u.clone(),
            v3,
            v4: u.clone(),
            v5: u.clone(),
            u,
            iteration: 0,
        }
    }
}

/// Entrywise `sign(x) max(|x| - t, 0)`.
pub fn soft_threshold(x: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    x.map(|v| soft_scalar(v, t))
}

#[inline]
fn soft_scalar(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Entrywise `max(x, 0)`, the projection onto the nonnegative orthant.
pub fn project_nonnegative(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.map(|v| v.max(0.0))
}

/// Projection onto `{U : 1^T u_i = 1}`: shifts every column by
/// `(1 - sum) / M`.
pub fn project_sum_to_one(x: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.nrows() as f64;
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let shift = (1.0 - col.sum()) / m;
        col.add_scalar_mut(shift);
    }
    out
}

/// Factorization of `E^T E + 3 I`, reused by every `U` update.
pub fn u_system(e: &DMatrix<f64>) -> Cholesky<f64, Dyn> {
    let m = e.ncols();
    let g = e.transpose() * e + DMatrix::identity(m, m) * 3.0;
    Cholesky::new(g).expect("E^T E + 3I is positive definite")
}

/// `U = (E^T E + 3I)^{-1} (E^T F1 + F2 + F4 + F5)` with `Fk = Vk + Dk`.
pub fn update_u(s: &SolverState, e: &DMatrix<f64>, system: &Cholesky<f64, Dyn>) -> DMatrix<f64> {
    let mut rhs = e.tr_mul(&(&s.v1 + &s.d1));
    rhs += &s.v2;
    rhs += &s.d2;
    rhs += &s.v4;
    rhs += &s.d4;
    rhs += &s.v5;
    rhs += &s.d5;
    system.solve(&rhs)
}

/// `V1 = (Y + mu (E U - D1)) / (1 + mu)`.
pub fn update_v1(s: &SolverState, y: &DMatrix<f64>, e: &DMatrix<f64>, mu: f64) -> DMatrix<f64> {
    v1_from_product(y, &(e * &s.u), &s.d1, mu)
}

pub(crate) fn v1_from_product(
    y: &DMatrix<f64>,
    eu: &DMatrix<f64>,
    d1: &DMatrix<f64>,
    mu: f64,
) -> DMatrix<f64> {
    let scale = 1.0 / (1.0 + mu);
    DMatrix::from_fn(y.nrows(), y.ncols(), |r, c| {
        (y[(r, c)] + mu * (eu[(r, c)] - d1[(r, c)])) * scale
    })
}

/// `V2 = (U - D2 + (V3 + D3) W^T) (I + W W^T)^{-1}`.
pub fn update_v2(s: &SolverState, op: &GuidanceOperator, gram: &GramFactor) -> DMatrix<f64> {
    let mut rhs = op.apply_transpose(&(&s.v3 + &s.d3));
    rhs += &s.u;
    rhs -= &s.d2;
    gram.solve(&rhs)
}

/// `V3 = soft(V2 W - D3, lambda / mu)`.
pub fn update_v3(s: &SolverState, op: &GuidanceOperator, lambda: f64, mu: f64) -> DMatrix<f64> {
    v3_from_product(&op.apply(&s.v2), &s.d3, lambda / mu)
}

pub(crate) fn v3_from_product(v2w: &DMatrix<f64>, d3: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    v2w.zip_map(d3, |a, b| soft_scalar(a - b, t))
}

/// `V4 = max(U - D4, 0)`.
pub fn update_v4(s: &SolverState) -> DMatrix<f64> {
    (&s.u - &s.d4).map(|v| v.max(0.0))
}

/// `V5 = (U - D5) + R`, the projection of `U - D5` onto the sum-to-one set.
pub fn update_v5(s: &SolverState) -> DMatrix<f64> {
    project_sum_to_one(&(&s.u - &s.d5))
}

/// Multiplier ascent `Dk <- Dk - (constraint lhs) + Vk` for all five blocks.
pub fn update_duals(s: &mut SolverState, e: &DMatrix<f64>, op: &GuidanceOperator) {
    let eu = e * &s.u;
    let v2w = op.apply(&s.v2);
    dual_step(s, &eu, &v2w);
}

pub(crate) fn dual_step(s: &mut SolverState, eu: &DMatrix<f64>, v2w: &DMatrix<f64>) {
    s.d1 += &s.v1;
    s.d1 -= eu;
    s.d2 += &s.v2;
    s.d2 -= &s.u;
    s.d3 += &s.v3;
    s.d3 -= v2w;
    s.d4 += &s.v4;
    s.d4 -= &s.u;
    s.d5 += &s.v5;
    s.d5 -= &s.u;
}
