//! Reweighted-l1 outer loop for weights that depend on the abundances.

use crate::data::{EndmemberLibrary, SpectralCube, SurfaceModel};
use crate::error::{Error, Result};
use crate::grid::build_difference_operator;
use crate::guidance::{compute_weights, GuidanceSources, WeightConfig, WeightKind};

use super::{unmix, SolverOptions, UnmixResult};

/// Alternates a full ADMM solve with recomputing the weights from the current
/// abundances (w-A or w-A-DSM).
///
/// The first solve uses uniform weights (w-A) or DSM-only weights (w-A-DSM).
/// Stops after `outer_max` solves or once the relative Frobenius change of the
/// abundances between consecutive solves drops below `outer_tolerance`.
pub fn reweighted_unmix(
    cube: &SpectralCube,
    endmembers: &EndmemberLibrary,
    dsm: Option<&SurfaceModel>,
    cfg: &WeightConfig,
    opts: &SolverOptions,
) -> Result<UnmixResult> {
    if !cfg.kind.uses_abundances() {
        return Err(Error::Usage(format!(
            "reweighting needs an abundance-based weight kind, got {}",
            cfg.kind
        )));
    }
    opts.validate()?;
    let dims = cube.dims();
    let initial_kind = if cfg.kind == WeightKind::ADsm {
        WeightKind::Dsm
    } else {
        WeightKind::None
    };
    let initial = WeightConfig {
        kind: initial_kind,
        ..*cfg
    };
    let mut weights = compute_weights(
        dims,
        &initial,
        GuidanceSources {
            dsm,
            ..Default::default()
        },
    )?;

    let mut objective_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut iterations_used = 0;
    let mut previous: Option<UnmixResult> = None;

    for round in 1..=opts.outer_max {
        let op = build_difference_operator(weights)?;
        let mut result = unmix(cube, endmembers, &op, opts)?;
        objective_trace.extend_from_slice(&result.objective_trace);
        residual_trace.extend_from_slice(&result.residual_trace);
        iterations_used += result.iterations_used;

        let settled = previous.as_ref().is_some_and(|prev| {
            let before = prev.abundances.data();
            let change = (result.abundances.data() - before).norm();
            change <= opts.outer_tolerance * before.norm()
        });
        if settled || round == opts.outer_max {
            result.objective_trace = objective_trace;
            result.residual_trace = residual_trace;
            result.iterations_used = iterations_used;
            result.outer_iterations = round;
            return Ok(result);
        }
        weights = compute_weights(
            dims,
            cfg,
            GuidanceSources {
                dsm,
                abundances: Some(&result.abundances),
                ..Default::default()
            },
        )?;
        previous = Some(result);
    }
    unreachable!("outer_max >= 1 is validated")
}
