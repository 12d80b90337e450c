//! Matrix-valued potentials described by their spectral data.
//!
//! A model is the list of modes `(E_j, Π_j)` with closed-form gradients; the
//! matrix `M(x) = Σ_j E_j(x) Π_j(x)` is always reconstructed from them.
//! Numerical diagonalisation appears only in tests, as a cross-check.

mod catalog;

pub use catalog::{
    builtin_catalog, conormal_rotating, degenerate_k, model_by_name, scalar_free, scalar_well, smooth_cutoff,
    smooth_cutoff_derivative, transverse_crossing, CATALOG_NAMES,
};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::SpatialGrid;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<Complex64> + Send + Sync>;
pub type MatrixGradFn = Arc<dyn Fn(&[f64]) -> Vec<DMatrix<Complex64>> + Send + Sync>;

/// One spectral branch `(E_j, Π_j)` together with its gradients.
#[derive(Clone)]
pub struct ModeSpec {
    pub name: String,
    pub eigenvalue: ScalarFn,
    pub projector: MatrixFn,
    pub gradient_eigenvalue: VectorFn,
    /// One matrix per spatial axis: `∂_i Π_j(x)`.
    pub gradient_projector: MatrixGradFn,
}

impl fmt::Debug for ModeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModeSpec").field("name", &self.name).finish()
    }
}

/// Hypersurface `{γ = 0}` on which two eigenvalues meet.
#[derive(Clone)]
pub struct CrossingSpec {
    pub gamma: ScalarFn,
    pub gradient_gamma: VectorFn,
    pub involved_modes: (usize, usize),
}

impl fmt::Debug for CrossingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CrossingSpec")
            .field("involved_modes", &self.involved_modes)
            .finish()
    }
}

impl CrossingSpec {
    /// Crossing along the hyperplane `x_axis = 0`.
    pub fn coordinate_plane(dim: usize, axis: usize, modes: (usize, usize)) -> Self {
        let mut grad = vec![0.0; dim];
        grad[axis] = 1.0;
        CrossingSpec {
            gamma: Arc::new(move |x: &[f64]| x[axis]),
            gradient_gamma: Arc::new(move |_: &[f64]| grad.clone()),
            involved_modes: modes,
        }
    }
}

/// Immutable matrix potential on `R^d` with values in `N×N` hermitian matrices.
#[derive(Clone, Debug)]
pub struct PotentialModel {
    pub label: String,
    pub dim: usize,
    pub matrix_dim: usize,
    pub modes: Vec<ModeSpec>,
    pub crossings: Vec<CrossingSpec>,
    /// Half-width `L` of the declared domain box `[-L, L]^d`.
    pub half_width: f64,
    pub params: BTreeMap<String, f64>,
}

pub const DEFAULT_HALF_WIDTH: f64 = 4.0;

impl PotentialModel {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn with_half_width(mut self, half_width: f64) -> Self {
        self.half_width = half_width;
        self.params.insert("box".into(), half_width);
        self
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|v| v.abs() <= self.half_width)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !self.contains(x) {
            return Err(Error::Domain {
                point: x.to_vec(),
                half_width: self.half_width,
                dim: self.dim,
            });
        }
        Ok(())
    }

    pub(crate) fn check_mode(&self, j: usize) -> Result<()> {
        if j >= self.modes.len() {
            return Err(Error::Mode {
                mode: j,
                modes: self.modes.len(),
            });
        }
        Ok(())
    }

    /// `E_j(x)`; valid on all of `R^d`, no domain check.
    pub fn eigenvalue(&self, j: usize, x: &[f64]) -> f64 {
        (self.modes[j].eigenvalue)(x)
    }

    pub fn gradient_eigenvalue(&self, j: usize, x: &[f64]) -> Vec<f64> {
        (self.modes[j].gradient_eigenvalue)(x)
    }

    pub fn projector(&self, j: usize, x: &[f64]) -> DMatrix<Complex64> {
        (self.modes[j].projector)(x)
    }

    /// Reconstructs `M(x) = Σ_j E_j(x) Π_j(x)`.
    pub fn eval_potential(&self, x: &[f64]) -> Result<DMatrix<Complex64>> {
        self.check_point(x)?;
        Ok(self.potential_unchecked(x))
    }

    pub(crate) fn potential_unchecked(&self, x: &[f64]) -> DMatrix<Complex64> {
        let n = self.matrix_dim;
        let mut m = DMatrix::zeros(n, n);
        for mode in &self.modes {
            let e = (mode.eigenvalue)(x);
            m += (mode.projector)(x) * Complex64::new(e, 0.0);
        }
        m
    }

    pub fn eval_projectors(&self, x: &[f64]) -> Result<Vec<DMatrix<Complex64>>> {
        self.check_point(x)?;
        Ok(self.modes.iter().map(|m| (m.projector)(x)).collect())
    }

    /// `B_j(x, ξ) = ½ ξ·∇Π_j(x)`.
    pub fn eval_b(&self, j: usize, x: &[f64], xi: &[f64]) -> Result<DMatrix<Complex64>> {
        self.check_mode(j)?;
        self.check_point(x)?;
        if xi.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: xi.len(),
            });
        }
        let grads = (self.modes[j].gradient_projector)(x);
        let n = self.matrix_dim;
        let mut b = DMatrix::zeros(n, n);
        for (g, &p) in grads.iter().zip(xi) {
            b += g * Complex64::new(0.5 * p, 0.0);
        }
        Ok(b)
    }

    /// Samples eigenvalues and projectors at every grid point.
    pub fn sample_on_grid(&self, grid: &SpatialGrid) -> Result<SampledModel> {
        self.sample_on_grid_with(grid, Exec::Parallel)
    }

    pub fn sample_on_grid_with(&self, grid: &SpatialGrid, exec: Exec) -> Result<SampledModel> {
        if grid.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: grid.dim(),
            });
        }
        if grid.half_widths().iter().any(|&l| l > self.half_width * (1.0 + 1e-12)) {
            return Err(Error::Domain {
                point: grid.half_widths().to_vec(),
                half_width: self.half_width,
                dim: self.dim,
            });
        }
        let n_modes = self.n_modes();
        let nn = self.matrix_dim * self.matrix_dim;
        let points = grid.len();
        let per_point = exec.map_range(points, |p| {
            let x = grid.point(p);
            let mut e = Vec::with_capacity(n_modes);
            let mut proj = Vec::with_capacity(n_modes * nn);
            for mode in &self.modes {
                e.push((mode.eigenvalue)(&x));
                let pm = (mode.projector)(&x);
                // row-major flattening
                for a in 0..self.matrix_dim {
                    for b in 0..self.matrix_dim {
                        proj.push(pm[(a, b)]);
                    }
                }
            }
            (e, proj)
        });
        let mut eigenvalues = Vec::with_capacity(points * n_modes);
        let mut projectors = Vec::with_capacity(points * n_modes * nn);
        for (e, p) in per_point {
            eigenvalues.extend(e);
            projectors.extend(p);
        }
        Ok(SampledModel {
            matrix_dim: self.matrix_dim,
            n_modes,
            points,
            eigenvalues,
            projectors,
        })
    }
}

/// Eigenvalues and projectors tabulated on a grid, reused by the propagator,
/// the mode-mass diagnostics and the resolvent operator.
#[derive(Clone, Debug)]
pub struct SampledModel {
    pub matrix_dim: usize,
    pub n_modes: usize,
    pub points: usize,
    /// `eigenvalues[p * n_modes + j]`
    pub eigenvalues: Vec<f64>,
    /// Row-major `N×N` blocks: `projectors[(p * n_modes + j) * N² + a * N + b]`
    pub projectors: Vec<Complex64>,
}

impl SampledModel {
    pub fn eigenvalue(&self, p: usize, j: usize) -> f64 {
        self.eigenvalues[p * self.n_modes + j]
    }

    pub fn projector(&self, p: usize, j: usize) -> &[Complex64] {
        let nn = self.matrix_dim * self.matrix_dim;
        let start = (p * self.n_modes + j) * nn;
        &self.projectors[start..start + nn]
    }

    /// `M(x_p)` as a row-major block.
    pub fn matrix(&self, p: usize) -> Vec<Complex64> {
        let nn = self.matrix_dim * self.matrix_dim;
        let mut m = vec![Complex64::new(0.0, 0.0); nn];
        for j in 0..self.n_modes {
            let e = self.eigenvalue(p, j);
            for (mv, pv) in m.iter_mut().zip(self.projector(p, j)) {
                *mv += pv * e;
            }
        }
        m
    }

    /// Largest violation of idempotence, orthogonality, hermiticity and
    /// completeness over all sampled points.
    pub fn max_projector_defect(&self) -> f64 {
        let n = self.matrix_dim;
        let mut worst: f64 = 0.0;
        for p in 0..self.points {
            let mut sum = vec![Complex64::new(0.0, 0.0); n * n];
            for j in 0..self.n_modes {
                let pj = self.projector(p, j);
                for (s, v) in sum.iter_mut().zip(pj) {
                    *s += v;
                }
                worst = worst.max(projector_defect(pj, n));
                for k in (j + 1)..self.n_modes {
                    let pk = self.projector(p, k);
                    worst = worst.max(max_abs(&matmul(pj, pk, n)));
                }
            }
            for a in 0..n {
                sum[a * n + a] -= 1.0;
            }
            worst = worst.max(max_abs(&sum));
        }
        worst
    }
}

pub(crate) fn matmul(a: &[Complex64], b: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

fn max_abs(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// max(‖P² − P‖, ‖P − P^†‖) entrywise.
fn projector_defect(p: &[Complex64], n: usize) -> f64 {
    let sq = matmul(p, p, n);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((sq[i * n + j] - p[i * n + j]).norm());
            worst = worst.max((p[i * n + j] - p[j * n + i].conj()).norm());
        }
    }
    worst
}
