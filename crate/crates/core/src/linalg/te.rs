use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{DftPlan, Grid};
use crate::linalg::{filter_from_eigenvalues, ConvFilter};

/// Dense translationally-equivariant matrix together with the filter it was built from.
///
/// Rows are indexed `i * c_out + k`, columns `j * c_in + s`, and
/// `W[(i,k),(j,s)] = w[(j - i) mod n][k][s]`.
#[derive(Debug, Clone)]
pub struct TeMatrix {
    pub dense: DMatrix<f64>,
    pub generator: ConvFilter,
}

impl TeMatrix {
    /// Checks `W[(i+p,k),(j+p,s)] = W[(i,k),(j,s)]` for every shift `p`.
    pub fn is_shift_invariant(&self, tol: f64) -> bool {
        let f = &self.generator;
        let g = f.grid();
        let (co, ci) = (f.c_out(), f.c_in());
        for p in 0..g.pixels() {
            for i in 0..g.pixels() {
                for j in 0..g.pixels() {
                    for k in 0..co {
                        for s in 0..ci {
                            let a = self.dense[(i * co + k, j * ci + s)];
                            let b = self.dense[(g.add(i, p) * co + k, g.add(j, p) * ci + s)];
                            if (a - b).abs() > tol {
                                return false;
                            }
                        }
                    }
                }
            }
        }
        true
    }
}

/// Eigenvalues `lambda_t = sum_j v_j w^{t j}` of the circulant generated by `v`.
pub fn circulant_eigenvalues(v: &[f64]) -> Vec<Complex64> {
    if v.is_empty() {
        return Vec::new();
    }
    DftPlan::new(Grid::line(v.len())).eigenvalues(v)
}

pub fn te_matrix(f: &ConvFilter) -> TeMatrix {
    let g = f.grid();
    let p = g.pixels();
    let (co, ci) = (f.c_out(), f.c_in());
    let mut dense = DMatrix::zeros(p * co, p * ci);
    for i in 0..p {
        for j in 0..p {
            let off = g.sub(j, i);
            for k in 0..co {
                for s in 0..ci {
                    dense[(i * co + k, j * ci + s)] = f.w(off, k, s);
                }
            }
        }
    }
    TeMatrix {
        dense,
        generator: f.clone(),
    }
}

/// Recovers the generating filter of a dense TE matrix from its first block row.
/// The matrix is assumed shift-invariant; use [`TeMatrix::is_shift_invariant`] to check.
pub fn filter_from_te_dense(grid: Grid, c_out: usize, c_in: usize, a: &DMatrix<f64>) -> Result<ConvFilter> {
    let p = grid.pixels();
    if a.nrows() != p * c_out || a.ncols() != p * c_in {
        return Err(Error::dim(format!(
            "matrix {}x{} is not {}x{}",
            a.nrows(),
            a.ncols(),
            p * c_out,
            p * c_in
        )));
    }
    Ok(ConvFilter::from_fn(grid, c_out, c_in, |j, k, s| a[(k, j * c_in + s)]))
}

/// Per-frequency channel-mixing blocks `(B_t)_{k,s} = lambda_t(w_{:,k,s})`.
pub fn frequency_blocks(f: &ConvFilter) -> Vec<DMatrix<Complex64>> {
    let plan = DftPlan::new(f.grid());
    let p = f.grid().pixels();
    let (co, ci) = (f.c_out(), f.c_in());
    let mut blocks = vec![DMatrix::zeros(co, ci); p];
    for k in 0..co {
        for s in 0..ci {
            let lam = plan.eigenvalues(&f.tap(k, s));
            for (t, l) in lam.into_iter().enumerate() {
                blocks[t][(k, s)] = l;
            }
        }
    }
    blocks
}

/// Inverse of [`frequency_blocks`]: the real filter whose per-frequency blocks
/// are `blocks` (imaginary residue from non-Hermitian input is dropped).
pub fn filter_from_blocks(grid: Grid, blocks: &[DMatrix<Complex64>]) -> Result<ConvFilter> {
    let p = grid.pixels();
    if blocks.len() != p {
        return Err(Error::dim(format!("{} blocks for {p} frequencies", blocks.len())));
    }
    let (co, ci) = blocks[0].shape();
    if blocks.iter().any(|b| b.shape() != (co, ci)) {
        return Err(Error::dim("frequency blocks differ in shape"));
    }
    let mut f = ConvFilter::zeros(grid, co, ci);
    let mut lam = vec![Complex64::new(0.0, 0.0); p];
    for k in 0..co {
        for s in 0..ci {
            for (t, l) in lam.iter_mut().enumerate() {
                *l = blocks[t][(k, s)];
            }
            for (j, v) in filter_from_eigenvalues(grid, &lam).into_iter().enumerate() {
                f.set_w(j, k, s, v);
            }
        }
    }
    Ok(f)
}

/// Singular system of one frequency block, sorted by descending value.
#[derive(Debug, Clone)]
pub struct FreqComponent {
    pub freq: usize,
    pub values: Vec<f64>,
    /// `c_out x r` channel mixing of the left directions.
    pub left: DMatrix<Complex64>,
    /// `c_in x r` channel mixing of the right directions.
    pub right: DMatrix<Complex64>,
}

/// One singular value of a TE matrix, indexed by frequency and channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqEntry {
    pub freq: usize,
    pub channel: usize,
    pub value: f64,
}

/// Frequency-indexed singular value decomposition of a TE matrix.
#[derive(Debug, Clone)]
pub struct FreqSvd {
    pub grid: Grid,
    pub c_out: usize,
    pub c_in: usize,
    pub components: Vec<FreqComponent>,
}

pub(crate) fn sorted_svd(b: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>, DMatrix<Complex64>) {
    let svd = b.clone().svd(true, true);
    let u = svd.u.expect("requested u");
    let v = svd.v_t.expect("requested v_t").adjoint();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &c| svd.singular_values[c].total_cmp(&svd.singular_values[a]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let left = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let right = DMatrix::from_fn(v.nrows(), order.len(), |r, c| v[(r, order[c])]);
    (values, left, right)
}

impl FreqSvd {
    pub fn from_blocks(grid: Grid, blocks: &[DMatrix<Complex64>]) -> Result<Self> {
        if blocks.len() != grid.pixels() {
            return Err(Error::dim(format!(
                "{} blocks for {} frequencies",
                blocks.len(),
                grid.pixels()
            )));
        }
        let (c_out, c_in) = blocks[0].shape();
        let components = blocks
            .iter()
            .enumerate()
            .map(|(t, b)| {
                let (values, left, right) = sorted_svd(b);
                FreqComponent {
                    freq: t,
                    values,
                    left,
                    right,
                }
            })
            .collect();
        Ok(FreqSvd {
            grid,
            c_out,
            c_in,
            components,
        })
    }

    pub fn entries(&self) -> Vec<FreqEntry> {
        self.components
            .iter()
            .flat_map(|c| {
                c.values.iter().enumerate().map(move |(ch, &value)| FreqEntry {
                    freq: c.freq,
                    channel: ch,
                    value,
                })
            })
            .collect()
    }

    /// All singular values sorted in descending order.
    pub fn values_sorted(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.components.iter().flat_map(|c| c.values.iter().copied()).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    pub fn s_max(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.values.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Entries with `s > tol * s_max` (empty for the zero spectrum).
    pub fn nonzero_entries(&self, tol: f64) -> Vec<FreqEntry> {
        let smax = self.s_max();
        if smax <= 0.0 {
            return Vec::new();
        }
        self.entries()
            .into_iter()
            .filter(|e| e.value > tol * smax)
            .collect()
    }

    pub fn rank(&self, tol: f64) -> usize {
        self.nonzero_entries(tol).len()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.values.iter())
            .map(|s| s * s)
            .sum()
    }

    /// Unit Fourier mode `phi_t(j) = w^{t j} / sqrt(n)`.
    fn fourier_mode(&self, t: usize) -> Vec<Complex64> {
        let p = self.grid.pixels();
        let scale = 1.0 / (p as f64).sqrt();
        (0..p).map(|j| self.grid.phase(t, j) * scale).collect()
    }

    /// Full-length left singular vector `phi_t (x) u_c`, indexed `i * c_out + k`.
    pub fn left_direction(&self, t: usize, c: usize) -> DVector<Complex64> {
        let comp = &self.components[t];
        let phi = self.fourier_mode(t);
        DVector::from_fn(phi.len() * self.c_out, |r, _| {
            phi[r / self.c_out] * comp.left[(r % self.c_out, c)]
        })
    }

    /// Full-length right singular vector `phi_t (x) v_c`, indexed `j * c_in + s`.
    pub fn right_direction(&self, t: usize, c: usize) -> DVector<Complex64> {
        let comp = &self.components[t];
        let phi = self.fourier_mode(t);
        DVector::from_fn(phi.len() * self.c_in, |r, _| {
            phi[r / self.c_in] * comp.right[(r % self.c_in, c)]
        })
    }

    /// Dense matrix `sum_{t,c} s_{t,c} left_{t,c} right_{t,c}^H` (real part).
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let p = self.grid.pixels();
        let mut acc = DMatrix::<Complex64>::zeros(p * self.c_out, p * self.c_in);
        for comp in &self.components {
            for (c, &s) in comp.values.iter().enumerate() {
                if s == 0.0 {
                    continue;
                }
                let l = self.left_direction(comp.freq, c);
                let r = self.right_direction(comp.freq, c);
                acc += (l * r.adjoint()) * Complex64::new(s, 0.0);
            }
        }
        acc.map(|z| z.re)
    }
}

pub fn frequency_svd(f: &ConvFilter) -> FreqSvd {
    FreqSvd::from_blocks(f.grid(), &frequency_blocks(f)).expect("one block per frequency")
}

/// Product of singular values above `tol * s_max`; 1 for the zero spectrum.
pub fn pseudo_det(svd: &FreqSvd, tol: f64) -> f64 {
    svd.nonzero_entries(tol).iter().map(|e| e.value).product()
}

/// `log |A|_+`, computed without overflow.
pub fn log_pseudo_det(svd: &FreqSvd, tol: f64) -> f64 {
    svd.nonzero_entries(tol).iter().map(|e| e.value.ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_filter_matrix() {
        let g = Grid::line(2);
        let f = ConvFilter::new(g, 1, 1, vec![3.0, 5.0], vec![0.0]).unwrap();
        let w = te_matrix(&f).dense;
        assert_eq!(w, DMatrix::from_row_slice(2, 2, &[3.0, 5.0, 5.0, 3.0]));
    }

    #[test]
    fn impulse_gives_identity_blocks() {
        let f = ConvFilter::impulse(Grid::line(4), 3);
        assert_eq!(te_matrix(&f).dense, DMatrix::identity(12, 12));
        for b in frequency_blocks(&f) {
            assert!((b - DMatrix::identity(3, 3)).norm() < 1e-15);
        }
    }

    #[test]
    fn eigenvalues_of_three_point_average() {
        let mut v = vec![0.0; 8];
        v[0] = 1.0 / 3.0;
        v[1] = 1.0 / 3.0;
        v[2] = 1.0 / 3.0;
        let lam = circulant_eigenvalues(&v);
        for (t, l) in lam.iter().enumerate() {
            let w = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * t as f64 / 8.0);
            let expect = (Complex64::new(1.0, 0.0) + w + w * w) / 3.0;
            assert!((l - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn pseudo_det_of_diagonal_spectrum() {
        let g = Grid::line(1);
        let f = ConvFilter::from_fn(g, 3, 3, |_, k, s| if k == s { [2.0, 3.0, 0.0][k] } else { 0.0 });
        let svd = frequency_svd(&f);
        assert!((pseudo_det(&svd, 1e-6) - 6.0).abs() < 1e-12);
        assert_eq!(pseudo_det(&frequency_svd(&ConvFilter::zeros(g, 2, 2)), 1e-6), 1.0);
    }
}
