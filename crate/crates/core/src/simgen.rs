//! Synthetic piecewise-homogeneous scenes.
//!
//! A scene is a Potts label map, one random simplex abundance vector per label,
//! the rendered noisy cube, a label-aligned DSM with its own noise, and the edge
//! mask of the clean DSM. Every random draw comes from a ChaCha8 stream derived
//! from the scene seed, one stream per component, so scenes are bitwise
//! reproducible.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::data::{AbundanceImage, EndmemberLibrary, SpectralCube, SurfaceModel};
use crate::error::{Error, Result};
use crate::grid::{Direction, GridDims};

/// Gibbs sweeps per label map.
pub const POTTS_SWEEPS: usize = 200;

/// Label maps missing a class are redrawn up to this many times.
const POTTS_ATTEMPTS: u64 = 64;

/// Resamples allowed per endmember before giving up on angular separation.
pub const ENDMEMBER_RESAMPLES: usize = 100;

/// Minimum pairwise spectral angle of synthetic endmembers, in degrees.
pub const MIN_SPECTRAL_ANGLE_DEG: f64 = 10.0;

pub const DEFAULT_POTTS_BETA: f64 = 3.0;
pub const DEFAULT_SNR_HSI_DB: f64 = 20.0;
pub const DEFAULT_SNR_DSM_DB: f64 = 50.0;
/// Height of the first class above ground.
pub const DEFAULT_BASE_HEIGHT: f64 = 2.0;
/// Ratio between consecutive default class heights.
pub const DEFAULT_HEIGHT_RATIO: f64 = 3.0;

const LABEL_STREAM: u64 = 1;
const ABUNDANCE_STREAM: u64 = 2;
const ENDMEMBER_STREAM: u64 = 3;
const CUBE_NOISE_STREAM: u64 = 4;
const DSM_NOISE_STREAM: u64 = 5;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub dims: GridDims,
    pub num_endmembers: usize,
    pub num_bands: usize,
    pub num_regions: usize,
    pub potts_beta: f64,
    pub snr_hsi_db: f64,
    pub snr_dsm_db: f64,
    pub class_heights: Vec<f64>,
    pub seed: u64,
}

impl Default for SceneSpec {
    /// 64x64 grid, 5 endmembers, 100 bands, 5 regions.
    fn default() -> Self {
        Self::new(GridDims::new(64, 64).expect("nonzero"), 5, 100, 5, 0)
    }
}

impl SceneSpec {
    /// Spec with default coupling, SNRs and class heights `0, 2, 6, 18, ...`.
    pub fn new(
        dims: GridDims,
        num_endmembers: usize,
        num_bands: usize,
        num_regions: usize,
        seed: u64,
    ) -> Self {
        Self {
            dims,
            num_endmembers,
            num_bands,
            num_regions,
            potts_beta: DEFAULT_POTTS_BETA,
            snr_hsi_db: DEFAULT_SNR_HSI_DB,
            snr_dsm_db: DEFAULT_SNR_DSM_DB,
            class_heights: default_class_heights(num_regions),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_regions < 2 {
            return Err(Error::validation("at least two regions are required"));
        }
        if self.dims.len() < self.num_regions {
            return Err(Error::validation(format!(
                "{} pixels cannot hold {} regions",
                self.dims.len(),
                self.num_regions
            )));
        }
        if self.num_endmembers == 0 || self.num_bands < self.num_endmembers {
            return Err(Error::validation(format!(
                "need 1 <= endmembers <= bands, got M = {}, L = {}",
                self.num_endmembers, self.num_bands
            )));
        }
        if !(self.potts_beta.is_finite() && self.potts_beta >= 0.0) {
            return Err(Error::validation("Potts coupling must be finite and >= 0"));
        }
        if self.snr_hsi_db.is_nan() || self.snr_dsm_db.is_nan() {
            return Err(Error::validation("SNR must not be NaN"));
        }
        if self.class_heights.len() != self.num_regions {
            return Err(Error::validation(format!(
                "{} class heights for {} regions",
                self.class_heights.len(),
                self.num_regions
            )));
        }
        if self.class_heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::validation("class heights must be finite"));
        }
        if min_height_gap(&self.class_heights) == 0.0 {
            return Err(Error::validation("class heights must be pairwise distinct"));
        }
        Ok(())
    }

    /// Half the smallest gap between class heights.
    pub fn default_edge_threshold(&self) -> f64 {
        0.5 * min_height_gap(&self.class_heights)
    }
}

/// `0, base, base ratio, base ratio^2, ...`.
///
/// The height kernel only sees `|h_i - h_j| / (h_i + h_j)`, so a constant ratio
/// gives every pair of adjacent classes the same contrast. Equal steps would make
/// boundaries between tall classes nearly invisible to it.
pub fn default_class_heights(num_regions: usize) -> Vec<f64> {
    (0..num_regions)
        .map(|k| match k {
            0 => 0.0,
            _ => DEFAULT_BASE_HEIGHT * DEFAULT_HEIGHT_RATIO.powi(k as i32 - 1),
        })
        .collect()
}

fn min_height_gap(heights: &[f64]) -> f64 {
    let mut sorted = heights.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub labels: Vec<usize>,
    pub truth_abundances: AbundanceImage,
    pub endmembers: EndmemberLibrary,
    pub cube: SpectralCube,
    pub dsm: SurfaceModel,
    pub dsm_clean: SurfaceModel,
    pub edge_mask: Vec<bool>,
}

/// Gibbs-sampled Potts labels in `0..num_regions`, every class present.
pub fn sample_potts_labels(spec: &SceneSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let q = spec.num_regions;
    for attempt in 0..POTTS_ATTEMPTS {
        let seed = spec
            .seed
            .wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let labels = gibbs_sweeps(spec.dims, q, spec.potts_beta, &mut stream_rng(seed, LABEL_STREAM));
        let mut present = vec![false; q];
        for &l in &labels {
            present[l] = true;
        }
        if present.iter().all(|&p| p) {
            return Ok(labels);
        }
    }
    Err(Error::Generation(format!(
        "no label map with all {q} classes after {POTTS_ATTEMPTS} attempts"
    )))
}

fn gibbs_sweeps(dims: GridDims, q: usize, beta: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..dims.len()).map(|_| rng.random_range(0..q)).collect();
    // exp(beta * agreeing neighbors) for 0..=4 agreeing neighbors
    let boltzmann: Vec<f64> = (0..=4).map(|k| (beta * k as f64).exp()).collect();
    let mut counts = vec![0usize; q];
    let mut probs = vec![0.0; q];
    for _ in 0..POTTS_SWEEPS {
        for i in 0..dims.len() {
            counts.fill(0);
            for d in Direction::ALL {
                if let Some(j) = dims.neighbor(i, d) {
                    counts[labels[j]] += 1;
                }
            }
            let mut total = 0.0;
            for k in 0..q {
                probs[k] = boltzmann[counts[k]];
                total += probs[k];
            }
            let mut u = rng.random::<f64>() * total;
            let mut pick = q - 1;
            for (k, &p) in probs.iter().enumerate() {
                if u < p {
                    pick = k;
                    break;
                }
                u -= p;
            }
            labels[i] = pick;
        }
    }
    labels
}

/// One Dirichlet(1, ..., 1) draw per label value shared by every pixel of
/// that label.
pub fn sample_region_abundances(
    dims: GridDims,
    labels: &[usize],
    num_endmembers: usize,
    seed: u64,
) -> Result<AbundanceImage> {
    if labels.len() != dims.len() {
        return Err(Error::validation(format!(
            "{} labels for {} pixels",
            labels.len(),
            dims.len()
        )));
    }
    if num_endmembers == 0 {
        return Err(Error::validation("need at least one endmember"));
    }
    let classes = labels.iter().max().map_or(0, |&l| l + 1);
    let mut rng = stream_rng(seed, ABUNDANCE_STREAM);
    let vectors: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let raw: Vec<f64> = (0..num_endmembers)
                .map(|_| rng.sample::<f64, _>(Exp1))
                .collect();
            let sum: f64 = raw.iter().sum();
            raw.iter().map(|v| v / sum).collect()
        })
        .collect();
    let a = DMatrix::from_fn(num_endmembers, dims.len(), |m, i| vectors[labels[i]][m]);
    AbundanceImage::constrained(dims, a)
}

/// `M` smooth spectra in `[0.05, 1]`, sums of 3 to 6 Gaussian bumps, with
/// pairwise spectral angle at least [`MIN_SPECTRAL_ANGLE_DEG`].
pub fn synth_endmembers(bands: usize, count: usize, seed: u64) -> Result<EndmemberLibrary> {
    if count == 0 || bands < count {
        return Err(Error::validation(format!(
            "need 1 <= endmembers <= bands, got M = {count}, L = {bands}"
        )));
    }
    let mut rng = stream_rng(seed, ENDMEMBER_STREAM);
    let min_cos = MIN_SPECTRAL_ANGLE_DEG.to_radians().cos();
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(count);
    for m in 0..count {
        let mut found = None;
        for _ in 0..ENDMEMBER_RESAMPLES {
            let candidate = bump_spectrum(bands, &mut rng);
            if accepted.iter().all(|s| cosine(s, &candidate) <= min_cos) {
                found = Some(candidate);
                break;
            }
        }
        match found {
            Some(s) => accepted.push(s),
            None => {
                return Err(Error::Generation(format!(
                    "endmember {m} not separated by {MIN_SPECTRAL_ANGLE_DEG} degrees after {ENDMEMBER_RESAMPLES} resamples"
                )))
            }
        }
    }
    let e = DMatrix::from_fn(bands, count, |l, m| accepted[m][l]);
    EndmemberLibrary::new(e)
}

fn bump_spectrum(bands: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let span = bands.max(2) as f64 - 1.0;
    let bumps: Vec<(f64, f64, f64)> = (0..rng.random_range(3..=6))
        .map(|_| {
            let center = rng.random::<f64>() * span;
            let width = span * (0.03 + 0.2 * rng.random::<f64>());
            let amplitude = 0.2 + 0.8 * rng.random::<f64>();
            (center, width.max(0.5), amplitude)
        })
        .collect();
    let raw: Vec<f64> = (0..bands)
        .map(|l| {
            bumps
                .iter()
                .map(|&(c, w, a)| a * (-0.5 * ((l as f64 - c) / w).powi(2)).exp())
                .sum()
        })
        .collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    raw.iter()
        .map(|v| (0.05 + 0.95 * v / max).clamp(0.05, 1.0))
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Reads a library written by [`crate::io::write_endmembers_csv`].
pub fn load_endmembers(path: &Path) -> Result<EndmemberLibrary> {
    crate::io::read_endmembers_csv(path)
}

/// Gaussian noise variance giving `snr_db` on a signal of energy `energy`
/// spread over `count` samples; zero for `snr_db = +inf`.
pub fn noise_variance(energy: f64, count: usize, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        energy / (count as f64 * 10f64.powf(snr_db / 10.0))
    }
}

/// `10 log10(signal energy / noise energy)`.
pub fn realized_snr_db(signal: &[f64], noisy: &[f64]) -> f64 {
    let s: f64 = signal.iter().map(|v| v * v).sum();
    let n: f64 = signal.iter().zip(noisy).map(|(a, b)| (a - b).powi(2)).sum();
    10.0 * (s / n).log10()
}

/// `Y = E A + noise` with i.i.d. Gaussian noise at `snr_db`.
pub fn render_cube(
    endmembers: &EndmemberLibrary,
    abundances: &AbundanceImage,
    snr_db: f64,
    seed: u64,
) -> Result<SpectralCube> {
    if endmembers.count() != abundances.count() {
        return Err(Error::validation(format!(
            "{} endmembers for {} abundance rows",
            endmembers.count(),
            abundances.count()
        )));
    }
    if snr_db.is_nan() {
        return Err(Error::validation("SNR must not be NaN"));
    }
    let mut y = endmembers.data() * abundances.data();
    let var = noise_variance(y.norm_squared(), y.len(), snr_db);
    if var > 0.0 {
        let sd = var.sqrt();
        let mut rng = stream_rng(seed, CUBE_NOISE_STREAM);
        for v in y.iter_mut() {
            *v += sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    SpectralCube::new(abundances.dims(), y)
}

/// Label-aligned DSM: clean heights, the additive noise realization, and the
/// noisy surface. Both surfaces are shifted to minimum 0, so
/// `noisy = clean + noise` holds only up to a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct DsmSample {
    pub noisy: SurfaceModel,
    pub clean: SurfaceModel,
    pub noise: Vec<f64>,
}

pub fn synth_dsm(
    dims: GridDims,
    labels: &[usize],
    class_heights: &[f64],
    snr_db: f64,
    seed: u64,
) -> Result<DsmSample> {
    if labels.len() != dims.len() {
        return Err(Error::validation(format!(
            "{} labels for {} pixels",
            labels.len(),
            dims.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= class_heights.len()) {
        return Err(Error::validation(format!(
            "label {l} has no class height ({} given)",
            class_heights.len()
        )));
    }
    if snr_db.is_nan() {
        return Err(Error::validation("SNR must not be NaN"));
    }
    let clean: Vec<f64> = labels.iter().map(|&l| class_heights[l]).collect();
    let energy: f64 = clean.iter().map(|h| h * h).sum();
    let sd = noise_variance(energy, clean.len(), snr_db).sqrt();
    let mut rng = stream_rng(seed, DSM_NOISE_STREAM);
    let noise: Vec<f64> = if sd > 0.0 {
        (0..clean.len())
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    } else {
        vec![0.0; clean.len()]
    };
    let noisy = clean.iter().zip(&noise).map(|(h, n)| h + n).collect();
    Ok(DsmSample {
        noisy: SurfaceModel::from_heights(dims, noisy)?,
        clean: SurfaceModel::from_heights(dims, clean)?,
        noise,
    })
}

/// Pixels whose forward-difference gradient magnitude exceeds `threshold`;
/// differences across the right and bottom border are 0.
pub fn extract_edge_mask(dsm: &SurfaceModel, threshold: f64) -> Result<Vec<bool>> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::validation(format!(
            "edge threshold must be positive and finite, got {threshold}"
        )));
    }
    let dims = dsm.dims();
    let h = dsm.heights();
    Ok((0..dims.len())
        .map(|i| {
            let diff = |d| dims.neighbor(i, d).map_or(0.0, |j| h[j] - h[i]);
            let (dx, dy) = (diff(Direction::Right), diff(Direction::Down));
            (dx * dx + dy * dy).sqrt() > threshold
        })
        .collect())
}

/// Full scene from `spec`. Endmembers are synthesized unless supplied.
pub fn generate_scene(spec: &SceneSpec, endmembers: Option<EndmemberLibrary>) -> Result<Scene> {
    spec.validate()?;
    let endmembers = match endmembers {
        Some(e) => {
            if e.count() != spec.num_endmembers || e.bands() != spec.num_bands {
                return Err(Error::validation(format!(
                    "endmember library is {}x{}, scene expects {}x{}",
                    e.bands(),
                    e.count(),
                    spec.num_bands,
                    spec.num_endmembers
                )));
            }
            e
        }
        None => synth_endmembers(spec.num_bands, spec.num_endmembers, spec.seed)?,
    };
    let labels = sample_potts_labels(spec)?;
    let truth = sample_region_abundances(spec.dims, &labels, spec.num_endmembers, spec.seed)?;
    let cube = render_cube(&endmembers, &truth, spec.snr_hsi_db, spec.seed)?;
    let dsm = synth_dsm(
        spec.dims,
        &labels,
        &spec.class_heights,
        spec.snr_dsm_db,
        spec.seed,
    )?;
    let edge_mask = extract_edge_mask(&dsm.clean, spec.default_edge_threshold())?;
    Ok(Scene {
        spec: spec.clone(),
        labels,
        truth_abundances: truth,
        endmembers,
        cube,
        dsm: dsm.noisy,
        dsm_clean: dsm.clean,
        edge_mask,
    })
}
