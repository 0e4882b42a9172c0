//! ADMM driver for weighted-TV constrained unmixing.
//!
//! The iteration is the two-block ADMM on `x = (U, V3)` and
//! `z = (V1, V2, V4, V5)`: `U` and `V3` are separable given the second block, and
//! `V1, V2, V4, V5` are separable given the first, so every sweep is an exact
//! block minimization.
//!
//! The data block is run in the column space of `E`. With the thin QR
//! factorization `E = Q R` and `Y = Q Q^T Y + Y_perp`, the `V1` and `D1` updates
//! keep their components along `Y_perp` proportional to `Y_perp`, with scalar
//! coefficients obeying
//!
//! ```text
//! alpha' = (1 - mu beta) / (1 + mu),   beta' = beta + alpha'
//! ```
//!
//! so the `L`-dimensional iteration is reproduced exactly by a `min(L, M)`
//! dimensional one plus two scalars. Residuals and the objective include the
//! `Y_perp` contributions.

use nalgebra::DMatrix;

use crate::data::{AbundanceImage, EndmemberLibrary, SpectralCube};
use crate::error::{Error, Result};
use crate::grid::GuidanceOperator;

use super::updates::{
    dual_step, u_system, update_u, update_v2, update_v4, update_v5, v1_from_product,
    v3_from_product, SolverState,
};
use super::{ResidualPoint, SolverOptions, UnmixResult};

/// Solves `min 1/2 ||Y - E A||_F^2 + lambda ||A W||_{1,1}` over column-stochastic
/// `A`.
pub fn unmix(
    cube: &SpectralCube,
    endmembers: &EndmemberLibrary,
    op: &GuidanceOperator,
    opts: &SolverOptions,
) -> Result<UnmixResult> {
    opts.validate()?;
    if cube.bands() != endmembers.bands() {
        return Err(Error::validation(format!(
            "cube has {} bands, endmembers have {}",
            cube.bands(),
            endmembers.bands()
        )));
    }
    if cube.dims() != op.dims() {
        return Err(Error::validation(
            "difference operator and cube are on different grids",
        ));
    }

    let e = endmembers.data();
    let y = cube.data();
    let qr = e.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let y_range = q.tr_mul(y);
    let perp_sq = (y - &q * &y_range).norm_squared();

    let (lambda, mu) = (opts.lambda, opts.mu);
    let system = u_system(&r);
    let gram = op.gram_factor();

    let mut s = SolverState::initial(&r, op);
    let mut beta = 0.0f64;
    let mut v2w = op.apply(&s.v2);

    let mut objective_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut converged = false;

    while s.iteration < opts.max_iterations {
        // first block
        s.u = update_u(&s, &r, &system);
        let ru = &r * &s.u;
        s.v3 = v3_from_product(&v2w, &s.d3, lambda / mu);

        // second block
        let v1_old = std::mem::replace(&mut s.v1, v1_from_product(&y_range, &ru, &s.d1, mu));
        let alpha = (1.0 - mu * beta) / (1.0 + mu);
        let v2_new = update_v2(&s, op, &gram);
        let v2_old = std::mem::replace(&mut s.v2, v2_new);
        let v4_new = update_v4(&s);
        let v4_old = std::mem::replace(&mut s.v4, v4_new);
        let v5_new = update_v5(&s);
        let v5_old = std::mem::replace(&mut s.v5, v5_new);
        let v2w_old = std::mem::replace(&mut v2w, op.apply(&s.v2));

        let primal_sq = (&s.v1 - &ru).norm_squared()
            + alpha * alpha * perp_sq
            + (&s.v2 - &s.u).norm_squared()
            + (&s.v3 - &v2w).norm_squared()
            + (&s.v4 - &s.u).norm_squared()
            + (&s.v5 - &s.u).norm_squared();

        dual_step(&mut s, &ru, &v2w);
        beta += alpha;
        s.iteration += 1;

        let mut dual_u = r.tr_mul(&(&s.v1 - &v1_old));
        dual_u += &s.v2 - &v2_old;
        dual_u += &s.v4 - &v4_old;
        dual_u += &s.v5 - &v5_old;
        let dual = mu * (dual_u.norm_squared() + (&v2w - &v2w_old).norm_squared()).sqrt();
        let primal = primal_sq.sqrt();

        let ax = (ru.norm_squared() + 3.0 * s.u.norm_squared() + s.v3.norm_squared()).sqrt();
        let bz = (s.v1.norm_squared()
            + alpha * alpha * perp_sq
            + s.v2.norm_squared()
            + v2w.norm_squared()
            + s.v4.norm_squared()
            + s.v5.norm_squared())
        .sqrt();
        let mut dual_scale = r.tr_mul(&s.d1);
        dual_scale += &s.d2;
        dual_scale += &s.d4;
        dual_scale += &s.d5;
        let aty = mu * (dual_scale.norm_squared() + s.d3.norm_squared()).sqrt();

        let fit = (&y_range - &ru).norm_squared() + perp_sq;
        let objective = 0.5 * fit + lambda * op.tv_norm(&s.u);
        if !objective.is_finite() || !primal.is_finite() || !dual.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite iterate at iteration {}",
                s.iteration
            )));
        }
        objective_trace.push(objective);
        residual_trace.push(ResidualPoint { primal, dual });

        let rel_primal = primal / ax.max(bz).max(f64::MIN_POSITIVE);
        let rel_dual = dual / aty.max(f64::MIN_POSITIVE);
        if rel_primal <= opts.tolerance && rel_dual <= opts.tolerance {
            converged = true;
            break;
        }
    }

    let abundances = AbundanceImage::constrained(cube.dims(), extract_abundances(&s.u))?;
    Ok(UnmixResult {
        abundances,
        objective_trace,
        residual_trace,
        iterations_used: s.iteration,
        converged,
        outer_iterations: 1,
    })
}

/// Maps the final iterate onto the simplex: clip negatives, then rescale each
/// column by its sum; a column that clips to zero becomes uniform.
pub fn extract_abundances(u: &DMatrix<f64>) -> DMatrix<f64> {
    let m = u.nrows();
    let mut a = u.map(|v| v.max(0.0));
    for mut col in a.column_iter_mut() {
        let sum = col.sum();
        if sum > 0.0 {
            col /= sum;
        } else {
            col.fill(1.0 / m as f64);
        }
    }
    a
}

/// `1/2 ||Y - E A||_F^2 + lambda ||A W||_{1,1}`.
pub fn objective(
    cube: &SpectralCube,
    endmembers: &EndmemberLibrary,
    op: &GuidanceOperator,
    lambda: f64,
    a: &DMatrix<f64>,
) -> f64 {
    let fit = (cube.data() - endmembers.data() * a).norm_squared();
    0.5 * fit + lambda * op.tv_norm(a)
}
