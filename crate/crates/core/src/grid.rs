//! Pixel grid, 4-neighborhood and the weighted difference operator.
//!
//! Pixels are linearized in row-major order: pixel `(row, col)` has index
//! `row * width + col`. The difference operator `W` is an `N x 4N` matrix made of
//! four `N x N` blocks `[W_left W_right W_up W_down]`. Column `d * N + i` holds
//! `+w` at row `i` and `-w` at row `j = neighbor(i, d)`, so that column `(d, i)` of
//! `A W` is `w_ij (a_i - a_j)`. Columns of border pixels without a neighbor in
//! direction `d` are zero.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridDims {
    height: usize,
    width: usize,
}

impl GridDims {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::validation(format!(
                "grid dimensions must be positive, got {height}x{width}"
            )));
        }
        Ok(Self { height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of pixels `N`.
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    /// Unchecked neighbor lookup; `i` must be a valid pixel index.
    #[inline]
    pub fn neighbor(&self, i: usize, d: Direction) -> Option<usize> {
        let (row, col) = self.coords(i);
        match d {
            Direction::Left => (col > 0).then(|| i - 1),
            Direction::Right => (col + 1 < self.width).then(|| i + 1),
            Direction::Up => (row > 0).then(|| i - self.width),
            Direction::Down => (row + 1 < self.height).then(|| i + self.width),
        }
    }

    /// Number of existing neighbors `|N(i)|`.
    pub fn degree(&self, i: usize) -> usize {
        Direction::ALL
            .iter()
            .filter(|&&d| self.neighbor(i, d).is_some())
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    /// Block order of `W`.
    pub const ALL: [Direction; 4] = [
        Direction::Left,
        Direction::Right,
        Direction::Up,
        Direction::Down,
    ];

    pub fn block(self) -> usize {
        match self {
            Direction::Left => 0,
            Direction::Right => 1,
            Direction::Up => 2,
            Direction::Down => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

/// Linear index of the neighbor of pixel `i` in direction `d`, or `None` on the
/// corresponding border.
pub fn neighbor_index(i: usize, d: Direction, dims: GridDims) -> Result<Option<usize>> {
    if i >= dims.len() {
        return Err(Error::Index {
            index: i,
            len: dims.len(),
        });
    }
    Ok(dims.neighbor(i, d))
}

/// Per-directed-edge weights `w_ij`, one plane of `N` values per direction.
/// Entries for missing neighbors are always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    dims: GridDims,
    planes: [Vec<f64>; 4],
}

impl EdgeWeights {
    pub fn zeros(dims: GridDims) -> Self {
        let n = dims.len();
        Self {
            dims,
            planes: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    /// Builds weights from a function evaluated on every existing directed edge
    /// `(i, d, j)`.
    pub fn from_fn(dims: GridDims, mut f: impl FnMut(usize, Direction, usize) -> f64) -> Self {
        let mut out = Self::zeros(dims);
        for i in 0..dims.len() {
            for d in Direction::ALL {
                if let Some(j) = dims.neighbor(i, d) {
                    out.planes[d.block()][i] = f(i, d, j);
                }
            }
        }
        out
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn get(&self, i: usize, d: Direction) -> f64 {
        self.planes[d.block()][i]
    }

    /// Sets `w_ij`; ignored when the edge does not exist.
    pub fn set(&mut self, i: usize, d: Direction, w: f64) {
        if self.dims.neighbor(i, d).is_some() {
            self.planes[d.block()][i] = w;
        }
    }

    pub fn plane(&self, d: Direction) -> &[f64] {
        &self.planes[d.block()]
    }

    /// `sum_{j in N(i)} w_ij`.
    pub fn neighbor_sum(&self, i: usize) -> f64 {
        self.planes.iter().map(|p| p[i]).sum()
    }

    /// Iterates over existing directed edges as `(i, d, j, w_ij)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, Direction, usize, f64)> + '_ {
        Direction::ALL.into_iter().flat_map(move |d| {
            (0..self.dims.len()).filter_map(move |i| {
                self.dims
                    .neighbor(i, d)
                    .map(|j| (i, d, j, self.planes[d.block()][i]))
            })
        })
    }
}

/// The weighted difference operator `W` (`N x 4N`) induced by a set of edge
/// weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceOperator {
    weights: EdgeWeights,
}

/// Validates the weights and wraps them as the operator `W`.
pub fn build_difference_operator(weights: EdgeWeights) -> Result<GuidanceOperator> {
    for (i, d, _, w) in weights.edges() {
        if !w.is_finite() || !(0.0..=1.0).contains(&w) {
            return Err(Error::validation(format!(
                "weight {w} for pixel {i} direction {} outside [0, 1]",
                d.name()
            )));
        }
    }
    Ok(GuidanceOperator { weights })
}

impl GuidanceOperator {
    pub fn dims(&self) -> GridDims {
        self.weights.dims
    }

    pub fn weights(&self) -> &EdgeWeights {
        &self.weights
    }

    /// Number of columns of `W` (`4N`).
    pub fn cols(&self) -> usize {
        4 * self.dims().len()
    }

    /// `A W` for an `M x N` matrix `A`; returns `M x 4N`.
    pub fn apply(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dims().len();
        assert_eq!(a.ncols(), n, "apply: column count must equal pixel count");
        let m = a.nrows();
        let mut out = DMatrix::zeros(m, 4 * n);
        let src = a.as_slice();
        let dst = out.as_mut_slice();
        for (i, d, j, w) in self.weights.edges() {
            if w == 0.0 {
                continue;
            }
            let c = d.block() * n + i;
            let (ai, aj) = (&src[i * m..(i + 1) * m], &src[j * m..(j + 1) * m]);
            for ((o, x), y) in dst[c * m..(c + 1) * m].iter_mut().zip(ai).zip(aj) {
                *o = w * (x - y);
            }
        }
        out
    }

    /// `B W^T` for an `M x 4N` matrix `B`; returns `M x N`.
    pub fn apply_transpose(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dims().len();
        assert_eq!(b.ncols(), 4 * n, "apply_transpose: expected 4N columns");
        let m = b.nrows();
        let mut out = DMatrix::zeros(m, n);
        let src = b.as_slice();
        let dst = out.as_mut_slice();
        for (i, d, j, w) in self.weights.edges() {
            if w == 0.0 {
                continue;
            }
            let c = d.block() * n + i;
            for (r, &v) in src[c * m..(c + 1) * m].iter().enumerate() {
                dst[i * m + r] += w * v;
                dst[j * m + r] -= w * v;
            }
        }
        out
    }

    /// `||A W||_{1,1}`, i.e. `sum_i sum_{j in N(i)} w_ij ||a_i - a_j||_1`.
    pub fn tv_norm(&self, a: &DMatrix<f64>) -> f64 {
        let n = self.dims().len();
        assert_eq!(a.ncols(), n);
        let m = a.nrows();
        let src = a.as_slice();
        let mut total = 0.0;
        for (i, _, j, w) in self.weights.edges() {
            if w == 0.0 {
                continue;
            }
            let (ai, aj) = (&src[i * m..(i + 1) * m], &src[j * m..(j + 1) * m]);
            let diff: f64 = ai.iter().zip(aj).map(|(x, y)| (x - y).abs()).sum();
            total += w * diff;
        }
        total
    }

    /// Dense `N x 4N` copy of `W`. Only sensible on small grids.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dims().len();
        let mut out = DMatrix::zeros(n, 4 * n);
        for (i, d, j, w) in self.weights.edges() {
            let c = d.block() * n + i;
            out[(i, c)] = w;
            out[(j, c)] = -w;
        }
        out
    }

    /// Cholesky factorization of the Gram matrix `I + W W^T`.
    pub fn gram_factor(&self) -> GramFactor {
        GramFactor::new(self)
    }
}

/// Solves `X (I + W W^T) = B` for an `M x N` right-hand side.
pub fn gram_solve(op: &GuidanceOperator, b: &DMatrix<f64>) -> DMatrix<f64> {
    op.gram_factor().solve(b)
}

/// Cholesky factor of `I + W W^T`.
///
/// `W W^T` is a weighted graph Laplacian on the 4-neighborhood, so `I + W W^T`
/// has five nonzeros per row. Pixels are reordered along the shorter grid axis,
/// which keeps the half-bandwidth at `min(height, width)`, and the factor is
/// computed densely inside the band. The Gram matrix is well conditioned
/// (eigenvalues in `[1, 1 + 2 max degree]`), so factor entries decay
/// geometrically away from the two coupled diagonals; entries below
/// [`GramFactor::DROP_TOLERANCE`] times their diagonal are then dropped, which
/// perturbs solutions far below `f64` precision.
#[derive(Debug, Clone)]
pub struct GramFactor {
    n: usize,
    /// Internal ordering of pixel `i`.
    perm: Vec<usize>,
    diag: Vec<f64>,
    /// Strictly lower part in compressed rows.
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl GramFactor {
    pub const DROP_TOLERANCE: f64 = 1e-20;

    fn new(op: &GuidanceOperator) -> Self {
        let dims = op.dims();
        let n = dims.len();
        let (h, w) = (dims.height(), dims.width());
        let transpose = h < w;
        let perm: Vec<usize> = (0..n)
            .map(|i| {
                let (r, c) = dims.coords(i);
                if transpose {
                    c * h + r
                } else {
                    i
                }
            })
            .collect();
        let bw = h.min(w);
        let stride = bw + 1;
        // Lower band of I + W W^T; row r holds columns r - bw ..= r.
        let mut band = vec![0.0; n * stride];
        for r in 0..n {
            band[r * stride + bw] = 1.0;
        }
        for (i, _, j, wt) in op.weights.edges() {
            let w2 = wt * wt;
            if w2 == 0.0 {
                continue;
            }
            let (pi, pj) = (perm[i], perm[j]);
            band[pi * stride + bw] += w2;
            band[pj * stride + bw] += w2;
            let (hi, lo) = if pi > pj { (pi, pj) } else { (pj, pi) };
            band[hi * stride + bw - (hi - lo)] -= w2;
        }
        for r in 0..n {
            let r0 = r.saturating_sub(bw);
            for c in r0..=r {
                let k0 = r0.max(c.saturating_sub(bw));
                let mut s = band[r * stride + bw - (r - c)];
                let row_r = &band[r * stride + bw - (r - k0)..r * stride + bw - (r - c)];
                let row_c = &band[c * stride + bw - (c - k0)..c * stride + bw];
                s -= row_r.iter().zip(row_c).map(|(x, y)| x * y).sum::<f64>();
                if c == r {
                    band[r * stride + bw] = s.sqrt();
                } else {
                    band[r * stride + bw - (r - c)] = s / band[c * stride + bw];
                }
            }
        }
        let mut diag = Vec::with_capacity(n);
        let mut row_start = Vec::with_capacity(n + 1);
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        for r in 0..n {
            row_start.push(cols.len());
            let d = band[r * stride + bw];
            for c in r.saturating_sub(bw)..r {
                let l = band[r * stride + bw - (r - c)];
                if l.abs() > Self::DROP_TOLERANCE * d {
                    cols.push(c);
                    vals.push(l);
                }
            }
            diag.push(d);
        }
        row_start.push(cols.len());
        Self {
            n,
            perm,
            diag,
            row_start,
            cols,
            vals,
        }
    }

    /// Forward and back substitution on each length-`n` chunk of `z`.
    fn substitute(&self, z: &mut [f64]) {
        let n = self.n;
        for r in 0..n {
            let (p0, p1) = (self.row_start[r], self.row_start[r + 1]);
            let (cols, vals) = (&self.cols[p0..p1], &self.vals[p0..p1]);
            for zr in z.chunks_exact_mut(n) {
                let s: f64 = cols.iter().zip(vals).map(|(&c, l)| l * zr[c]).sum();
                zr[r] = (zr[r] - s) / self.diag[r];
            }
        }
        for r in (0..n).rev() {
            let (p0, p1) = (self.row_start[r], self.row_start[r + 1]);
            let (cols, vals) = (&self.cols[p0..p1], &self.vals[p0..p1]);
            for zr in z.chunks_exact_mut(n) {
                let xr = zr[r] / self.diag[r];
                zr[r] = xr;
                for (&c, l) in cols.iter().zip(vals) {
                    zr[c] -= l * xr;
                }
            }
        }
    }

    /// Solves `(I + W W^T) x = b` in place (`b` in pixel order).
    pub fn solve_vec(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut z = vec![0.0; self.n];
        for (i, &p) in self.perm.iter().enumerate() {
            z[p] = b[i];
        }
        self.substitute(&mut z);
        for (i, &p) in self.perm.iter().enumerate() {
            b[i] = z[p];
        }
    }

    /// Solves `X (I + W W^T) = B`, all rows in one sweep over the factor.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.ncols(), self.n);
        let (m, n) = (b.nrows(), self.n);
        // one contiguous vector per row of B, in internal pixel order
        let mut z = vec![0.0; m * n];
        for (i, &p) in self.perm.iter().enumerate() {
            for r in 0..m {
                z[r * n + p] = b[(r, i)];
            }
        }
        self.substitute(&mut z);
        DMatrix::from_fn(m, n, |r, i| z[r * n + self.perm[i]])
    }
}
