//! Uniform periodic grids and their ε-scaled Fourier duals.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::exec::Exec;

/// Periodic grid on `Π_i [-L_i, L_i)` with `n_i` points per axis
/// (powers of two). Points are stored row-major, last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGrid {
    counts: Vec<usize>,
    half_widths: Vec<f64>,
}

impl SpatialGrid {
    pub fn new(counts: &[usize], half_widths: &[f64]) -> Result<Self> {
        if counts.is_empty() || counts.len() > 2 || counts.len() != half_widths.len() {
            return Err(Error::param(
                "grid",
                format!("need 1 or 2 axes with matching widths, got {counts:?} / {half_widths:?}"),
            ));
        }
        if let Some(n) = counts.iter().find(|n| !n.is_power_of_two() || **n < 2) {
            return Err(Error::param("grid", format!("axis size {n} is not a power of two ≥ 2")));
        }
        if half_widths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::param("grid", "half-widths must be positive"));
        }
        Ok(SpatialGrid {
            counts: counts.to_vec(),
            half_widths: half_widths.to_vec(),
        })
    }

    /// Square grid: same count and half-width on each of `dim` axes.
    pub fn cube(dim: usize, n: usize, half_width: f64) -> Result<Self> {
        Self::new(&vec![n; dim], &vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn half_widths(&self) -> &[f64] {
        &self.half_widths
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * self.half_widths[axis] / self.counts[axis] as f64
    }

    /// Volume element `Π_i Δx_i`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        -self.half_widths[axis] + i as f64 * self.spacing(axis)
    }

    pub fn multi_index(&self, p: usize) -> [usize; 2] {
        if self.dim() == 1 {
            [p, 0]
        } else {
            [p / self.counts[1], p % self.counts[1]]
        }
    }

    pub fn point(&self, p: usize) -> Vec<f64> {
        let idx = self.multi_index(p);
        (0..self.dim()).map(|a| self.coordinate(a, idx[a])).collect()
    }

    /// Angular wavenumber of FFT index `m` on `axis`, in `[-π/Δx, π/Δx)`.
    pub fn wavenumber(&self, axis: usize, m: usize) -> f64 {
        let n = self.counts[axis];
        let signed = if m < n / 2 { m as isize } else { m as isize - n as isize };
        PI * signed as f64 / self.half_widths[axis]
    }

    /// Dual momentum spacing `Δξ = 2πε / (nΔx)` on `axis`.
    pub fn momentum_spacing(&self, axis: usize, eps: f64) -> f64 {
        PI * eps / self.half_widths[axis]
    }

    /// `|k|²` at flattened FFT index `p`.
    pub fn wavenumber_sq(&self, p: usize) -> f64 {
        let idx = self.multi_index(p);
        (0..self.dim()).map(|a| self.wavenumber(a, idx[a]).powi(2)).sum()
    }

    /// True if FFT index `p` lies in the outer `fraction` of the momentum
    /// lattice along some axis.
    pub fn in_outer_band(&self, p: usize, fraction: f64) -> bool {
        let idx = self.multi_index(p);
        (0..self.dim()).any(|a| {
            let kmax = PI / self.spacing(a);
            self.wavenumber(a, idx[a]).abs() >= (1.0 - fraction) * kmax
        })
    }
}

/// Forward/inverse FFT over a grid-shaped complex plane.
#[derive(Clone)]
pub struct GridFft {
    counts: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for GridFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridFft").field("counts", &self.counts).finish()
    }
}

impl GridFft {
    pub fn new(grid: &SpatialGrid) -> Self {
        let mut planner = FftPlanner::new();
        let forward = grid.counts().iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = grid.counts().iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        GridFft {
            counts: grid.counts().to_vec(),
            forward,
            inverse,
        }
    }

    pub fn forward(&self, data: &mut [Complex64], exec: Exec) {
        self.transform(data, &self.forward, exec);
    }

    /// Inverse transform including the `1/n` normalisation.
    pub fn inverse(&self, data: &mut [Complex64], exec: Exec) {
        self.transform(data, &self.inverse, exec);
        let scale = 1.0 / data.len() as f64;
        exec.for_chunks_mut(data, 8192, |_, c| c.iter_mut().for_each(|v| *v *= scale));
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>], exec: Exec) {
        match self.counts.len() {
            1 => rows(data, &plans[0], self.counts[0], Exec::Sequential),
            _ => {
                let (n0, n1) = (self.counts[0], self.counts[1]);
                rows(data, &plans[1], n1, exec);
                let mut t = transpose(data, n0, n1, exec);
                rows(&mut t, &plans[0], n0, exec);
                let back = transpose(&t, n1, n0, exec);
                data.copy_from_slice(&back);
            }
        }
    }
}

fn rows(data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>, len: usize, exec: Exec) {
    let rows_per_chunk = (16_384 / len).max(1);
    exec.for_chunks_mut(data, rows_per_chunk * len, |_, chunk| {
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(chunk, &mut scratch);
    });
}

/// Transposes a row-major `r×c` array into a row-major `c×r` array.
fn transpose(data: &[Complex64], r: usize, c: usize, exec: Exec) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); r * c];
    exec.for_chunks_mut(&mut out, r, |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = data[j * c + i];
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_geometry() {
        let g = SpatialGrid::new(&[8, 4], &[2.0, 1.0]).unwrap();
        assert_eq!(g.len(), 32);
        assert_eq!(g.spacing(0), 0.5);
        assert_eq!(g.point(5), vec![-1.5, -0.5]);
        assert_eq!(g.spacing(0) * 8.0, 4.0);
        // momentum lattice symmetric about 0 apart from the Nyquist point
        let ks: Vec<f64> = (0..8).map(|m| g.wavenumber(0, m)).collect();
        assert_eq!(ks[0], 0.0);
        assert_eq!(ks[1], -ks[7]);
        assert!(SpatialGrid::new(&[6], &[1.0]).is_err());
        assert!(SpatialGrid::new(&[8], &[-1.0]).is_err());
    }

    #[test]
    fn fft_roundtrip_and_plane_wave() {
        let g = SpatialGrid::new(&[16, 32], &[1.0, 2.0]).unwrap();
        let fft = GridFft::new(&g);
        let mut data: Vec<Complex64> = (0..g.len())
            .map(|p| {
                let x = g.point(p);
                Complex64::from_polar(1.0, g.wavenumber(0, 3) * x[0] + g.wavenumber(1, 30) * x[1])
            })
            .collect();
        let orig = data.clone();
        fft.forward(&mut data, Exec::Parallel);
        let peak = data
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap()
            .0;
        assert_eq!(g.multi_index(peak), [3, 30]);
        fft.inverse(&mut data, Exec::Sequential);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
