//! Per-edge weights derived from guidance maps.
//!
//! Every guidance source produces a similarity kernel on each directed edge,
//!
//! ```text
//! k(u, v) = exp( -(1 / sigma) * ||u - v||^2 / ||u + v||^2 )
//! ```
//!
//! evaluated on spectra, first principal component scores, abundance vectors or
//! DSM heights. Kernels are then normalized per pixel so that the weights of the
//! existing neighbors of pixel `i` sum to one. Combined kinds add a height
//! kernel to the primary kernel before normalizing.
//!
//! Kernels are carried as log-similarities and normalized with a per-pixel
//! max-shift. This is the same quotient as dividing by the plain kernel sum, but
//! it stays defined when every kernel of a pixel underflows (tiny sigma on a
//! noisy guidance map); in that case the weight concentrates on the most similar
//! neighbors instead of becoming 0/0.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::{AbundanceImage, SpectralCube, SurfaceModel};
use crate::error::{Error, Result};
use crate::grid::{Direction, EdgeWeights, GridDims};

pub const DEFAULT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WeightKind {
    None,
    Hi,
    Pc1,
    A,
    Dsm,
    HiDsm,
    Pc1Dsm,
    ADsm,
}

impl WeightKind {
    pub const ALL: [WeightKind; 8] = [
        WeightKind::None,
        WeightKind::Hi,
        WeightKind::Pc1,
        WeightKind::A,
        WeightKind::Dsm,
        WeightKind::HiDsm,
        WeightKind::Pc1Dsm,
        WeightKind::ADsm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WeightKind::None => "none",
            WeightKind::Hi => "hi",
            WeightKind::Pc1 => "pc1",
            WeightKind::A => "a",
            WeightKind::Dsm => "dsm",
            WeightKind::HiDsm => "hi-dsm",
            WeightKind::Pc1Dsm => "pc1-dsm",
            WeightKind::ADsm => "a-dsm",
        }
    }

    pub fn uses_dsm(self) -> bool {
        matches!(
            self,
            WeightKind::Dsm | WeightKind::HiDsm | WeightKind::Pc1Dsm | WeightKind::ADsm
        )
    }

    pub fn uses_abundances(self) -> bool {
        matches!(self, WeightKind::A | WeightKind::ADsm)
    }

    /// Whether `sigma_primary` enters the weights.
    pub fn uses_primary_sigma(self) -> bool {
        !matches!(self, WeightKind::None | WeightKind::Dsm)
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let norm = norm.strip_prefix("w-").unwrap_or(&norm);
        WeightKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .or(match norm {
                "no-weight" => Some(WeightKind::None),
                _ => None,
            })
            .ok_or_else(|| Error::Usage(format!("unknown weight kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightConfig {
    pub kind: WeightKind,
    /// `sigma_y^2`, `sigma_p^2` or `sigma_a^2` depending on `kind`.
    pub sigma_primary: f64,
    /// `sigma_h^2`, used by every DSM-bearing kind.
    pub sigma_height: f64,
    pub epsilon_denominator: f64,
}

impl WeightConfig {
    pub fn new(kind: WeightKind, sigma_primary: f64, sigma_height: f64) -> Result<Self> {
        let cfg = Self {
            kind,
            sigma_primary,
            sigma_height,
            epsilon_denominator: DEFAULT_EPSILON,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn uniform() -> Self {
        Self {
            kind: WeightKind::None,
            sigma_primary: 1.0,
            sigma_height: 1.0,
            epsilon_denominator: DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_primary", self.sigma_primary),
            ("sigma_height", self.sigma_height),
            ("epsilon_denominator", self.epsilon_denominator),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// `ln k(u, v)`; zero when `u == v`.
pub fn log_similarity(u: &[f64], v: &[f64], sigma: f64, eps: f64) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let (mut diff, mut sum) = (0.0, 0.0);
    for (&a, &b) in u.iter().zip(v) {
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    if diff == 0.0 {
        return 0.0;
    }
    -(diff / sum.max(eps)) / sigma
}

/// Unnormalized similarity kernel in `[0, 1]`.
pub fn similarity_kernel(u: &[f64], v: &[f64], sigma: f64, eps: f64) -> f64 {
    log_similarity(u, v, sigma, eps).exp()
}

/// Log-similarities on every existing directed edge.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelField {
    dims: GridDims,
    planes: [Vec<f64>; 4],
}

impl KernelField {
    pub fn from_fn(dims: GridDims, mut log_k: impl FnMut(usize, usize) -> f64) -> Self {
        let n = dims.len();
        let mut planes = [
            vec![f64::NEG_INFINITY; n],
            vec![f64::NEG_INFINITY; n],
            vec![f64::NEG_INFINITY; n],
            vec![f64::NEG_INFINITY; n],
        ];
        for i in 0..n {
            for d in Direction::ALL {
                if let Some(j) = dims.neighbor(i, d) {
                    planes[d.block()][i] = log_k(i, j);
                }
            }
        }
        Self { dims, planes }
    }

    /// Builds a field from plain kernel values (`0` allowed).
    pub fn from_kernels(dims: GridDims, mut k: impl FnMut(usize, Direction, usize) -> f64) -> Self {
        let mut field = Self::from_fn(dims, |_, _| 0.0);
        for i in 0..dims.len() {
            for d in Direction::ALL {
                if let Some(j) = dims.neighbor(i, d) {
                    field.planes[d.block()][i] = k(i, d, j).ln();
                }
            }
        }
        field
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn log_kernel(&self, i: usize, d: Direction) -> f64 {
        self.planes[d.block()][i]
    }

    pub fn kernel(&self, i: usize, d: Direction) -> f64 {
        self.log_kernel(i, d).exp()
    }
}

/// Normalizes the sum of one or more kernel fields over each neighborhood.
fn normalize(fields: &[&KernelField]) -> EdgeWeights {
    let dims = fields[0].dims;
    debug_assert!(fields.iter().all(|f| f.dims == dims));
    let mut out = EdgeWeights::zeros(dims);
    let mut raw = [0.0f64; 4];
    for i in 0..dims.len() {
        let mut shift = f64::NEG_INFINITY;
        for d in Direction::ALL {
            if dims.neighbor(i, d).is_some() {
                for f in fields {
                    shift = shift.max(f.log_kernel(i, d));
                }
            }
        }
        let degree = dims.degree(i);
        if degree == 0 {
            continue;
        }
        let mut total = 0.0;
        for d in Direction::ALL {
            raw[d.block()] = if dims.neighbor(i, d).is_none() {
                0.0
            } else if shift == f64::NEG_INFINITY {
                // every kernel is exactly zero
                1.0
            } else {
                fields.iter().map(|f| (f.log_kernel(i, d) - shift).exp()).sum()
            };
            total += raw[d.block()];
        }
        for d in Direction::ALL {
            out.set(i, d, raw[d.block()] / total);
        }
    }
    out
}

/// `w_ij = 1 / |N(i)|`.
pub fn uniform_weights(dims: GridDims) -> EdgeWeights {
    EdgeWeights::from_fn(dims, |i, _, _| 1.0 / dims.degree(i) as f64)
}

pub fn cube_kernel(cube: &SpectralCube, sigma: f64, eps: f64) -> KernelField {
    let y = cube.data();
    KernelField::from_fn(cube.dims(), |i, j| {
        log_similarity(y.column(i).as_slice(), y.column(j).as_slice(), sigma, eps)
    })
}

pub fn abundance_kernel(a: &AbundanceImage, sigma: f64, eps: f64) -> KernelField {
    let data = a.data();
    KernelField::from_fn(a.dims(), |i, j| {
        log_similarity(data.column(i).as_slice(), data.column(j).as_slice(), sigma, eps)
    })
}

fn scalar_kernel(dims: GridDims, values: &[f64], sigma: f64, eps: f64) -> KernelField {
    KernelField::from_fn(dims, |i, j| {
        log_similarity(&values[i..=i], &values[j..=j], sigma, eps)
    })
}

pub fn pc_kernel(pc: &PrincipalComponentMap, sigma: f64, eps: f64) -> KernelField {
    scalar_kernel(pc.dims, &pc.values, sigma, eps)
}

pub fn dsm_kernel(dsm: &SurfaceModel, sigma: f64, eps: f64) -> KernelField {
    scalar_kernel(dsm.dims(), dsm.heights(), sigma, eps)
}

/// w-HI: similarity between neighboring spectra, using `sigma_primary`.
pub fn weights_from_cube(cube: &SpectralCube, cfg: &WeightConfig) -> EdgeWeights {
    normalize(&[&cube_kernel(cube, cfg.sigma_primary, cfg.epsilon_denominator)])
}

/// w-PC1: similarity between first-principal-component scores.
pub fn weights_from_pc(pc: &PrincipalComponentMap, cfg: &WeightConfig) -> EdgeWeights {
    normalize(&[&pc_kernel(pc, cfg.sigma_primary, cfg.epsilon_denominator)])
}

/// w-A: similarity between abundance vectors.
pub fn weights_from_abundances(a: &AbundanceImage, cfg: &WeightConfig) -> EdgeWeights {
    normalize(&[&abundance_kernel(a, cfg.sigma_primary, cfg.epsilon_denominator)])
}

/// w-DSM: similarity between heights, using `sigma_height`.
pub fn weights_from_dsm(dsm: &SurfaceModel, cfg: &WeightConfig) -> EdgeWeights {
    normalize(&[&dsm_kernel(dsm, cfg.sigma_height, cfg.epsilon_denominator)])
}

/// `w_ij = (k_primary(i, j) + k_height(i, j)) / Q_i`.
pub fn combined_weights(primary: &KernelField, height: &KernelField) -> Result<EdgeWeights> {
    if primary.dims != height.dims {
        return Err(Error::validation("kernel fields are on different grids"));
    }
    Ok(normalize(&[primary, height]))
}

/// Scores of the first principal component, shifted to a minimum of zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalComponentMap {
    dims: GridDims,
    values: Vec<f64>,
}

impl PrincipalComponentMap {
    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// First principal component of the pixel spectra.
///
/// The loading is the dominant eigenvector of the band covariance. Its sign is
/// chosen so the loading has a nonnegative inner product with the mean
/// spectrum, and scores are shifted so their minimum is 0. A constant image
/// yields the all-zero map.
pub fn first_principal_component(cube: &SpectralCube) -> Result<PrincipalComponentMap> {
    let dims = cube.dims();
    let n = dims.len();
    if n < 2 {
        return Err(Error::validation("principal components need at least 2 pixels"));
    }
    let y = cube.data();
    let mean: DVector<f64> = y.column_mean();
    let mut centered = y.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let energy = y.norm_squared();
    let zero = || PrincipalComponentMap {
        dims,
        values: vec![0.0; n],
    };

    let (top_value, loading) = if y.nrows() <= n {
        let cov = &centered * centered.transpose();
        let (val, vec) = dominant_eigenpair(cov);
        (val, vec)
    } else {
        let gram = centered.transpose() * &centered;
        let (val, v) = dominant_eigenpair(gram);
        let u = &centered * v;
        let norm = u.norm();
        if norm == 0.0 {
            return Ok(zero());
        }
        (val, u / norm)
    };
    if !(top_value > 1e-20 * energy) {
        return Ok(zero());
    }

    let mut loading = loading;
    let orient = loading.dot(&mean);
    let flip = if orient != 0.0 {
        orient < 0.0
    } else {
        let imax = loading.iamax();
        loading[imax] < 0.0
    };
    if flip {
        loading.neg_mut();
    }
    let scores: Vec<f64> = centered
        .column_iter()
        .map(|c| loading.dot(&c))
        .collect();
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PrincipalComponentMap {
        dims,
        values: scores.into_iter().map(|s| s - min).collect(),
    })
}

fn dominant_eigenpair(sym: DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = SymmetricEigen::new(sym);
    let (k, &val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty matrix");
    (val, eig.eigenvectors.column(k).into_owned())
}

/// Guidance inputs available to [`compute_weights`].
#[derive(Debug, Clone, Copy, Default)]
pub struct GuidanceSources<'a> {
    pub cube: Option<&'a SpectralCube>,
    pub dsm: Option<&'a SurfaceModel>,
    pub abundances: Option<&'a AbundanceImage>,
}

/// Builds the weights of any kind from the sources it needs.
pub fn compute_weights(
    dims: GridDims,
    cfg: &WeightConfig,
    sources: GuidanceSources<'_>,
) -> Result<EdgeWeights> {
    cfg.validate()?;
    let eps = cfg.epsilon_denominator;
    let need = |what: &str| Error::Usage(format!("weight kind {} requires {what}", cfg.kind));
    let check = |d: GridDims| {
        if d == dims {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "guidance map is {}x{}, expected {}x{}",
                d.height(),
                d.width(),
                dims.height(),
                dims.width()
            )))
        }
    };
    let cube = || -> Result<&SpectralCube> {
        let c = sources.cube.ok_or_else(|| need("a hyperspectral cube"))?;
        check(c.dims())?;
        Ok(c)
    };
    let height = || -> Result<KernelField> {
        let dsm = sources.dsm.ok_or_else(|| need("a DSM"))?;
        check(dsm.dims())?;
        Ok(dsm_kernel(dsm, cfg.sigma_height, eps))
    };
    let abundances = || -> Result<&AbundanceImage> {
        let a = sources.abundances.ok_or_else(|| need("abundances"))?;
        check(a.dims())?;
        Ok(a)
    };

    Ok(match cfg.kind {
        WeightKind::None => uniform_weights(dims),
        WeightKind::Hi => weights_from_cube(cube()?, cfg),
        WeightKind::Pc1 => weights_from_pc(&first_principal_component(cube()?)?, cfg),
        WeightKind::A => weights_from_abundances(abundances()?, cfg),
        WeightKind::Dsm => normalize(&[&height()?]),
        WeightKind::HiDsm => {
            combined_weights(&cube_kernel(cube()?, cfg.sigma_primary, eps), &height()?)?
        }
        WeightKind::Pc1Dsm => {
            let pc = first_principal_component(cube()?)?;
            combined_weights(&pc_kernel(&pc, cfg.sigma_primary, eps), &height()?)?
        }
        WeightKind::ADsm => combined_weights(
            &abundance_kernel(abundances()?, cfg.sigma_primary, eps),
            &height()?,
        )?,
    })
}
