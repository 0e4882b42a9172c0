//! Abundance RMSE metrics and (kind, lambda, sigma) parameter sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::data::{AbundanceImage, EndmemberLibrary, SpectralCube, SurfaceModel};
use crate::error::{Error, Result};
use crate::grid::{build_difference_operator, GuidanceOperator};
use crate::guidance::{compute_weights, GuidanceSources, WeightConfig, WeightKind};
use crate::solver::{reweighted_unmix, unmix, SolverOptions, UnmixResult};

fn check_shapes(truth: &AbundanceImage, estimate: &AbundanceImage) -> Result<()> {
    let (t, e) = (truth.data(), estimate.data());
    if t.shape() != e.shape() || truth.dims() != estimate.dims() {
        return Err(Error::validation(format!(
            "truth is {}x{}, estimate is {}x{}",
            t.nrows(),
            t.ncols(),
            e.nrows(),
            e.ncols()
        )));
    }
    Ok(())
}

/// `sqrt(sum (a - a_hat)^2 / (N M))`.
pub fn rmse_whole(truth: &AbundanceImage, estimate: &AbundanceImage) -> Result<f64> {
    check_shapes(truth, estimate)?;
    let d = truth.data() - estimate.data();
    Ok((d.norm_squared() / d.len() as f64).sqrt())
}

/// RMSE over the masked pixels only.
pub fn rmse_edge(truth: &AbundanceImage, estimate: &AbundanceImage, mask: &[bool]) -> Result<f64> {
    check_shapes(truth, estimate)?;
    if mask.len() != truth.dims().len() {
        return Err(Error::validation(format!(
            "mask has {} entries for {} pixels",
            mask.len(),
            truth.dims().len()
        )));
    }
    let (t, e) = (truth.data(), estimate.data());
    let mut sum = 0.0;
    let mut pixels = 0usize;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        sum += (t.column(i) - e.column(i)).norm_squared();
        pixels += 1;
    }
    if pixels == 0 {
        return Err(Error::validation("edge mask selects no pixels"));
    }
    Ok((sum / (pixels * t.nrows()) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub lambdas: Vec<f64>,
    /// Values for both `sigma_primary` and `sigma_height`.
    pub sigmas: Vec<f64>,
    pub weight_kinds: Vec<WeightKind>,
}

pub const DEFAULT_LAMBDAS: [f64; 6] = [0.001, 0.05, 0.1, 0.5, 1.0, 1.5];
pub const DEFAULT_SIGMAS: [f64; 5] = [1e-5, 1e-4, 0.001, 0.01, 0.1];

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            sigmas: DEFAULT_SIGMAS.to_vec(),
            weight_kinds: WeightKind::ALL.to_vec(),
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.sigmas.is_empty() || self.weight_kinds.is_empty() {
            return Err(Error::validation("sweep grid lists must be non-empty"));
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::validation("sweep lambdas must be finite and >= 0"));
        }
        if self.sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::validation("sweep sigmas must be finite and > 0"));
        }
        Ok(())
    }

    /// `(sigma_primary, sigma_height)` pairs swept for `kind`; `None` marks an
    /// unused sigma.
    pub fn sigma_pairs(&self, kind: WeightKind) -> Vec<(Option<f64>, Option<f64>)> {
        let s = &self.sigmas;
        match (kind.uses_primary_sigma(), kind.uses_dsm()) {
            (false, false) => vec![(None, None)],
            (true, false) => s.iter().map(|&p| (Some(p), None)).collect(),
            (false, true) => s.iter().map(|&h| (None, Some(h))).collect(),
            (true, true) => s
                .iter()
                .flat_map(|&p| s.iter().map(move |&h| (Some(p), Some(h))))
                .collect(),
        }
    }

    /// Every `(kind, lambda, sigma_primary, sigma_height)` cell in sweep order.
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut cells = Vec::new();
        for &kind in &self.weight_kinds {
            for (sigma_primary, sigma_height) in self.sigma_pairs(kind) {
                for &lambda in &self.lambdas {
                    cells.push(SweepCell {
                        kind,
                        lambda,
                        sigma_primary,
                        sigma_height,
                    });
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub kind: WeightKind,
    pub lambda: f64,
    pub sigma_primary: Option<f64>,
    pub sigma_height: Option<f64>,
}

impl SweepCell {
    fn weight_config(&self) -> Result<WeightConfig> {
        WeightConfig::new(
            self.kind,
            self.sigma_primary.unwrap_or(1.0),
            self.sigma_height.unwrap_or(1.0),
        )
    }

    fn sort_key(&self) -> (WeightKind, f64, f64, f64) {
        (
            self.kind,
            self.lambda,
            self.sigma_primary.unwrap_or(0.0),
            self.sigma_height.unwrap_or(0.0),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub kind: WeightKind,
    pub lambda: f64,
    pub sigma_primary: Option<f64>,
    pub sigma_height: Option<f64>,
    /// `+inf` when the solve failed.
    pub rmse_whole: f64,
    pub rmse_edge: f64,
    pub iterations_used: usize,
    pub wall_time_seconds: f64,
}

impl SweepRecord {
    pub fn cell(&self) -> SweepCell {
        SweepCell {
            kind: self.kind,
            lambda: self.lambda,
            sigma_primary: self.sigma_primary,
            sigma_height: self.sigma_height,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.rmse_whole.is_finite()
    }
}

/// Inputs of a sweep: the observation, its guidance maps and the ground truth.
#[derive(Debug, Clone, Copy)]
pub struct SweepInputs<'a> {
    pub cube: &'a SpectralCube,
    pub endmembers: &'a EndmemberLibrary,
    pub dsm: Option<&'a SurfaceModel>,
    pub truth: &'a AbundanceImage,
    pub edge_mask: &'a [bool],
}

impl<'a> SweepInputs<'a> {
    pub fn from_scene(scene: &'a crate::simgen::Scene) -> Self {
        Self {
            cube: &scene.cube,
            endmembers: &scene.endmembers,
            dsm: Some(&scene.dsm),
            truth: &scene.truth_abundances,
            edge_mask: &scene.edge_mask,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// One record per cell, in [`SweepGrid::cells`] order.
    pub records: Vec<SweepRecord>,
    /// Best record per kind, in the grid's kind order.
    pub best: Vec<SweepRecord>,
}

/// Solves one cell: reweighted for abundance-based kinds, a single ADMM run
/// otherwise.
pub fn solve_cell(
    inputs: &SweepInputs<'_>,
    cell: &SweepCell,
    opts: &SolverOptions,
) -> Result<UnmixResult> {
    let cfg = cell.weight_config()?;
    let opts = SolverOptions {
        lambda: cell.lambda,
        ..*opts
    };
    if cell.kind.uses_abundances() {
        return reweighted_unmix(inputs.cube, inputs.endmembers, inputs.dsm, &cfg, &opts);
    }
    let op = operator_for(inputs, &cfg)?;
    unmix(inputs.cube, inputs.endmembers, &op, &opts)
}

fn operator_for(inputs: &SweepInputs<'_>, cfg: &WeightConfig) -> Result<GuidanceOperator> {
    let weights = compute_weights(
        inputs.cube.dims(),
        cfg,
        GuidanceSources {
            cube: Some(inputs.cube),
            dsm: inputs.dsm,
            abundances: None,
        },
    )?;
    build_difference_operator(weights)
}

fn evaluate_cell(inputs: &SweepInputs<'_>, cell: &SweepCell, opts: &SolverOptions) -> SweepRecord {
    let start = Instant::now();
    let scored = solve_cell(inputs, cell, opts).and_then(|res| {
        let whole = rmse_whole(inputs.truth, &res.abundances)?;
        let edge = rmse_edge(inputs.truth, &res.abundances, inputs.edge_mask)?;
        Ok((whole, edge, res.iterations_used))
    });
    let (rmse_whole, rmse_edge, iterations_used) = scored.unwrap_or((f64::INFINITY, f64::INFINITY, 0));
    SweepRecord {
        kind: cell.kind,
        lambda: cell.lambda,
        sigma_primary: cell.sigma_primary,
        sigma_height: cell.sigma_height,
        rmse_whole,
        rmse_edge,
        iterations_used,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs every cell of `grid` in parallel and picks the lowest-`rmse_whole`
/// record per kind, ties going to the smaller lambda, then the smaller sigmas.
pub fn sweep(inputs: &SweepInputs<'_>, grid: &SweepGrid, opts: &SolverOptions) -> Result<SweepOutcome> {
    grid.validate()?;
    opts.validate()?;
    if inputs.edge_mask.iter().all(|&m| !m) {
        return Err(Error::validation("edge mask selects no pixels"));
    }
    if grid.weight_kinds.iter().any(|k| k.uses_dsm()) && inputs.dsm.is_none() {
        return Err(Error::Usage("DSM-based kinds need a DSM".into()));
    }
    let records: Vec<SweepRecord> = grid
        .cells()
        .par_iter()
        .map(|cell| evaluate_cell(inputs, cell, opts))
        .collect();
    let best = best_per_kind(&records, &grid.weight_kinds);
    Ok(SweepOutcome { records, best })
}

fn better(a: &SweepRecord, b: &SweepRecord) -> bool {
    match a.rmse_whole.total_cmp(&b.rmse_whole) {
        std::cmp::Ordering::Equal => {
            let (ka, kb) = (a.cell().sort_key(), b.cell().sort_key());
            (ka.1, ka.2, ka.3) < (kb.1, kb.2, kb.3)
        }
        ord => ord.is_lt(),
    }
}

/// Lowest-`rmse_whole` record of each kind in `kinds` that has records.
pub fn best_per_kind(records: &[SweepRecord], kinds: &[WeightKind]) -> Vec<SweepRecord> {
    kinds
        .iter()
        .filter_map(|&k| {
            records
                .iter()
                .filter(|r| r.kind == k)
                .fold(None::<&SweepRecord>, |best, r| match best {
                    Some(b) if !better(r, b) => Some(b),
                    _ => Some(r),
                })
                .cloned()
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per record; `scene` labels the scene each outcome came from.
pub fn records_csv(outcomes: &[(String, SweepOutcome)]) -> String {
    let mut out =
        String::from("scene,kind,lambda,sigma_primary,sigma_height,rmse_whole,rmse_edge,iterations_used\n");
    for (scene, outcome) in outcomes {
        for r in &outcome.records {
            let _ = writeln!(
                out,
                "{scene},{},{},{},{},{},{},{}",
                r.kind,
                r.lambda,
                opt(r.sigma_primary),
                opt(r.sigma_height),
                r.rmse_whole,
                r.rmse_edge,
                r.iterations_used
            );
        }
    }
    out
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per kind: mean best `rmse_whole` and `rmse_edge` over scenes, with standard
/// deviations. With one scene this is that scene's best record.
#[derive(Debug, Clone, PartialEq)]
pub struct KindSummary {
    pub kind: WeightKind,
    pub rmse_whole: (f64, f64),
    pub rmse_edge: (f64, f64),
}

pub fn summarize(outcomes: &[SweepOutcome], kinds: &[WeightKind]) -> Vec<KindSummary> {
    kinds
        .iter()
        .filter_map(|&kind| {
            let best: Vec<&SweepRecord> = outcomes
                .iter()
                .filter_map(|o| o.best.iter().find(|r| r.kind == kind))
                .collect();
            if best.is_empty() {
                return None;
            }
            let whole: Vec<f64> = best.iter().map(|r| r.rmse_whole).collect();
            let edge: Vec<f64> = best.iter().map(|r| r.rmse_edge).collect();
            Some(KindSummary {
                kind,
                rmse_whole: mean_std(&whole),
                rmse_edge: mean_std(&edge),
            })
        })
        .collect()
}

/// `kind,rmse_whole,rmse_edge,rmse_whole_std,rmse_edge_std`.
pub fn summary_csv(summary: &[KindSummary]) -> String {
    let mut out = String::from("kind,rmse_whole,rmse_edge,rmse_whole_std,rmse_edge_std\n");
    for s in summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.kind, s.rmse_whole.0, s.rmse_edge.0, s.rmse_whole.1, s.rmse_edge.1
        );
    }
    out
}

/// Which sigma a per-lambda curve uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaSlice {
    /// The best sigma at each lambda.
    PerLambda,
    /// The sigma of the kind's overall best record, held fixed.
    Global,
}

impl SigmaSlice {
    pub fn as_str(self) -> &'static str {
        match self {
            SigmaSlice::PerLambda => "per_lambda_best",
            SigmaSlice::Global => "global_best",
        }
    }
}

/// RMSE-versus-lambda curve of one kind in one scene, ordered by lambda.
pub fn lambda_curve(outcome: &SweepOutcome, kind: WeightKind, slice: SigmaSlice) -> Vec<SweepRecord> {
    let of_kind: Vec<&SweepRecord> = outcome.records.iter().filter(|r| r.kind == kind).collect();
    let mut lambdas: Vec<f64> = of_kind.iter().map(|r| r.lambda).collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let global = outcome.best.iter().find(|r| r.kind == kind);
    lambdas
        .into_iter()
        .filter_map(|lambda| {
            let at: Vec<SweepRecord> = of_kind
                .iter()
                .filter(|r| r.lambda == lambda)
                .map(|r| (*r).clone())
                .collect();
            match slice {
                SigmaSlice::PerLambda => best_per_kind(&at, &[kind]).pop(),
                SigmaSlice::Global => {
                    let g = global?;
                    at.into_iter().find(|r| {
                        r.sigma_primary == g.sigma_primary && r.sigma_height == g.sigma_height
                    })
                }
            }
        })
        .collect()
}

/// Mean over scenes of the per-lambda curves, both slices:
/// `kind,slice,lambda,rmse_whole,rmse_edge,rmse_whole_std,rmse_edge_std`.
pub fn lambda_curves_csv(outcomes: &[SweepOutcome], kinds: &[WeightKind]) -> String {
    let mut out =
        String::from("kind,slice,lambda,rmse_whole,rmse_edge,rmse_whole_std,rmse_edge_std\n");
    for &kind in kinds {
        for slice in [SigmaSlice::PerLambda, SigmaSlice::Global] {
            let mut by_lambda: BTreeMap<u64, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for o in outcomes {
                for r in lambda_curve(o, kind, slice) {
                    let e = by_lambda
                        .entry(r.lambda.to_bits())
                        .or_insert((r.lambda, Vec::new(), Vec::new()));
                    e.1.push(r.rmse_whole);
                    e.2.push(r.rmse_edge);
                }
            }
            let mut rows: Vec<_> = by_lambda.into_values().collect();
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (lambda, whole, edge) in rows {
                let (w, ws) = mean_std(&whole);
                let (e, es) = mean_std(&edge);
                let _ = writeln!(out, "{kind},{},{lambda},{w},{e},{ws},{es}", slice.as_str());
            }
        }
    }
    out
}

/// Per-cell mean and standard deviation over scenes:
/// `kind,lambda,sigma_primary,sigma_height,rmse_whole_mean,rmse_whole_std,rmse_edge_mean,rmse_edge_std,scenes`.
pub fn aggregate_csv(outcomes: &[SweepOutcome]) -> String {
    type Key = (WeightKind, u64, Option<u64>, Option<u64>);
    let mut cells: BTreeMap<Key, (SweepCell, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for o in outcomes {
        for r in &o.records {
            let key = (
                r.kind,
                r.lambda.to_bits(),
                r.sigma_primary.map(f64::to_bits),
                r.sigma_height.map(f64::to_bits),
            );
            let e = cells.entry(key).or_insert((r.cell(), Vec::new(), Vec::new()));
            e.1.push(r.rmse_whole);
            e.2.push(r.rmse_edge);
        }
    }
    let mut rows: Vec<_> = cells.into_values().collect();
    rows.sort_by(|a, b| {
        let (ka, kb) = (a.0.sort_key(), b.0.sort_key());
        ka.0.cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(ka.2.total_cmp(&kb.2))
            .then(ka.3.total_cmp(&kb.3))
    });
    let mut out = String::from(
        "kind,lambda,sigma_primary,sigma_height,rmse_whole_mean,rmse_whole_std,rmse_edge_mean,rmse_edge_std,scenes\n",
    );
    for (cell, whole, edge) in rows {
        let (w, ws) = mean_std(&whole);
        let (e, es) = mean_std(&edge);
        let _ = writeln!(
            out,
            "{},{},{},{},{w},{ws},{e},{es},{}",
            cell.kind,
            cell.lambda,
            opt(cell.sigma_primary),
            opt(cell.sigma_height),
            whole.len()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridDims;
    use crate::simgen::{generate_scene, SceneSpec};
    use nalgebra::DMatrix;

    fn image(m: usize, n: usize, v: &[f64]) -> AbundanceImage {
        AbundanceImage::unconstrained(GridDims::new(1, n).unwrap(), DMatrix::from_column_slice(m, n, v))
            .unwrap()
    }

    #[test]
    fn rmse_examples() {
        let t = image(2, 2, &[0.5, 0.5, 0.2, 0.8]);
        assert_eq!(rmse_whole(&t, &t).unwrap(), 0.0);
        assert!((rmse_whole(&image(1, 1, &[1.0]), &image(1, 1, &[0.9])).unwrap() - 0.1).abs() < 1e-15);
        let e = image(2, 2, &[0.6, 0.4, 0.3, 0.7]);
        assert!((rmse_whole(&t, &e).unwrap() - 0.1).abs() < 1e-12);
        assert!(rmse_whole(&t, &image(2, 1, &[0.5, 0.5])).is_err());
    }

    #[test]
    fn rmse_edge_examples() {
        let t = image(2, 3, &[0.5, 0.5, 0.2, 0.8, 1.0, 0.0]);
        let e = image(2, 3, &[0.6, 0.4, 0.5, 0.4, 0.9, 0.2]);
        let all = [true; 3];
        assert_eq!(rmse_edge(&t, &e, &all).unwrap(), rmse_whole(&t, &e).unwrap());
        let off = image(2, 3, &[0.5, 0.5, 0.2, 0.8, 0.7, 0.3]);
        assert_eq!(rmse_edge(&t, &off, &[true, true, false]).unwrap(), 0.0);
        // errors (0.3, 0.4) at the single masked pixel
        let v = rmse_edge(&t, &e, &[false, true, false]).unwrap();
        assert!((v - (0.25f64 / 2.0).sqrt()).abs() < 1e-12);
        assert!(rmse_edge(&t, &e, &[false; 3]).is_err());
        assert!(rmse_edge(&t, &e, &[true; 2]).is_err());
    }

    #[test]
    fn rmse_is_symmetric_and_bounded_by_worst_pixel() {
        let t = image(2, 3, &[0.5, 0.5, 0.2, 0.8, 1.0, 0.0]);
        let e = image(2, 3, &[0.6, 0.4, 0.5, 0.4, 0.9, 0.2]);
        assert_eq!(rmse_whole(&t, &e).unwrap(), rmse_whole(&e, &t).unwrap());
        let worst = (0..3)
            .map(|i| ((t.data().column(i) - e.data().column(i)).norm_squared() / 2.0).sqrt())
            .fold(0.0, f64::max);
        assert!(rmse_edge(&t, &e, &[true, false, true]).unwrap() <= worst);
    }

    fn small_scene() -> crate::simgen::Scene {
        let mut spec = SceneSpec::new(GridDims::new(8, 8).unwrap(), 3, 12, 3, 2);
        // weak coupling keeps all three classes on an 8x8 grid
        spec.potts_beta = 1.0;
        generate_scene(&spec, None).unwrap()
    }

    #[test]
    fn single_cell_sweep() {
        let scene = small_scene();
        let grid = SweepGrid {
            lambdas: vec![0.05],
            sigmas: vec![0.01],
            weight_kinds: vec![WeightKind::Dsm],
        };
        let out = sweep(&SweepInputs::from_scene(&scene), &grid, &SolverOptions::default()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.best, out.records);
        assert_eq!(records_csv(&[("s".into(), out.clone())]).lines().count(), 2);
        assert_eq!(summary_csv(&summarize(&[out], &grid.weight_kinds)).lines().count(), 2);
    }

    #[test]
    fn unweighted_records_ignore_sigma() {
        let scene = small_scene();
        let grid = SweepGrid {
            lambdas: vec![0.05, 0.1],
            sigmas: vec![0.01, 0.1],
            weight_kinds: vec![WeightKind::None, WeightKind::Hi, WeightKind::HiDsm],
        };
        assert_eq!(grid.cells().len(), 2 + 4 + 8);
        let inputs = SweepInputs::from_scene(&scene);
        let opts = SolverOptions::default();
        let out = sweep(&inputs, &grid, &opts).unwrap();
        assert!(out.records.iter().all(|r| r.succeeded()));
        assert!(out
            .records
            .iter()
            .filter(|r| r.kind == WeightKind::None)
            .all(|r| r.sigma_primary.is_none() && r.sigma_height.is_none()));
        // sigma does not enter uniform weights
        let a = solve_cell(
            &inputs,
            &SweepCell {
                kind: WeightKind::None,
                lambda: 0.05,
                sigma_primary: Some(0.01),
                sigma_height: None,
            },
            &opts,
        )
        .unwrap();
        let b = solve_cell(
            &inputs,
            &SweepCell {
                kind: WeightKind::None,
                lambda: 0.05,
                sigma_primary: Some(10.0),
                sigma_height: Some(3.0),
            },
            &opts,
        )
        .unwrap();
        assert_eq!(a, b);
        // order-insensitive: a reversed grid yields the same records
        let mut reversed = grid.clone();
        reversed.weight_kinds.reverse();
        reversed.lambdas.reverse();
        let again = sweep(&inputs, &reversed, &opts).unwrap();
        for r in &out.records {
            let twin = again.records.iter().find(|s| s.cell() == r.cell()).unwrap();
            assert_eq!((r.rmse_whole, r.rmse_edge), (twin.rmse_whole, twin.rmse_edge));
        }
        assert_eq!(best_per_kind(&again.records, &grid.weight_kinds).len(), 3);
    }

    fn record(kind: WeightKind, lambda: f64, sigma: Option<f64>, whole: f64) -> SweepRecord {
        SweepRecord {
            kind,
            lambda,
            sigma_primary: sigma,
            sigma_height: None,
            rmse_whole: whole,
            rmse_edge: whole * 2.0,
            iterations_used: 1,
            wall_time_seconds: 0.0,
        }
    }

    #[test]
    fn best_breaks_ties_by_lambda_then_sigma() {
        let recs = vec![
            record(WeightKind::Hi, 0.5, Some(0.1), 0.01),
            record(WeightKind::Hi, 0.1, Some(0.1), 0.01),
            record(WeightKind::Hi, 0.1, Some(0.01), 0.01),
            record(WeightKind::Hi, 0.05, Some(0.01), 0.02),
            record(WeightKind::Hi, 0.05, Some(0.01), f64::INFINITY),
        ];
        let best = best_per_kind(&recs, &[WeightKind::Hi, WeightKind::Dsm]);
        assert_eq!(best, vec![recs[2].clone()]);
    }

    #[test]
    fn curves_and_aggregates() {
        let recs = vec![
            record(WeightKind::Hi, 0.1, Some(0.1), 0.03),
            record(WeightKind::Hi, 0.1, Some(0.01), 0.01),
            record(WeightKind::Hi, 0.5, Some(0.1), 0.02),
            record(WeightKind::Hi, 0.5, Some(0.01), 0.04),
        ];
        let best = best_per_kind(&recs, &[WeightKind::Hi]);
        let o = SweepOutcome { records: recs, best };
        let per = lambda_curve(&o, WeightKind::Hi, SigmaSlice::PerLambda);
        assert_eq!(per.iter().map(|r| r.rmse_whole).collect::<Vec<_>>(), vec![0.01, 0.02]);
        let global = lambda_curve(&o, WeightKind::Hi, SigmaSlice::Global);
        assert_eq!(global.iter().map(|r| r.rmse_whole).collect::<Vec<_>>(), vec![0.01, 0.04]);
        let csv = lambda_curves_csv(&[o.clone(), o.clone()], &[WeightKind::Hi]);
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.contains("hi,global_best,0.5,0.04,0.08,0,0\n"));
        let agg = aggregate_csv(&[o.clone(), o]);
        assert_eq!(agg.lines().count(), 5);
        assert!(agg.contains("hi,0.1,0.01,,0.01,0,0.02,0,2\n"));
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
    }
}
