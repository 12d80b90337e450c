use nalgebra::DMatrix;
use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::classical::PhasePoint;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::SpatialGrid;
use crate::model::{PotentialModel, SampledModel};

/// `N`-component field on a grid, stored one plane per component.
#[derive(Clone, Debug)]
pub struct Wavefunction {
    pub grid: SpatialGrid,
    pub eps: f64,
    pub components: Vec<Vec<Complex64>>,
    pub time: f64,
}

impl Wavefunction {
    pub fn zeros(grid: SpatialGrid, eps: f64, matrix_dim: usize) -> Self {
        let n = grid.len();
        Wavefunction {
            grid,
            eps,
            components: vec![vec![Complex64::new(0.0, 0.0); n]; matrix_dim],
            time: 0.0,
        }
    }

    pub fn matrix_dim(&self) -> usize {
        self.components.len()
    }

    /// `|ψ(x_p)|²`
    pub fn density(&self, p: usize) -> f64 {
        self.components.iter().map(|c| c[p].norm_sqr()).sum()
    }

    pub fn norm_sq(&self, exec: Exec) -> f64 {
        exec.sum_range(self.grid.len(), |p| self.density(p)) * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq(Exec::Parallel).sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.components {
            c.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Position expectation `⟨x_axis⟩ / ‖ψ‖²`.
    pub fn mean_position(&self, axis: usize) -> f64 {
        let n = self.grid.len();
        let num = Exec::Parallel.sum_range(n, |p| self.density(p) * self.grid.point(p)[axis]);
        let den = Exec::Parallel.sum_range(n, |p| self.density(p));
        num / den
    }
}

/// Unit vector spanning the range of `Π_j(x₀)`: its largest column, normalised.
pub fn polarization_vector(projector: &DMatrix<Complex64>) -> Vec<Complex64> {
    let best = (0..projector.ncols())
        .max_by(|&a, &b| projector.column(a).norm().total_cmp(&projector.column(b).norm()))
        .unwrap_or(0);
    let col = projector.column(best);
    let n = col.norm();
    col.iter().map(|v| v / n).collect()
}

/// Gaussian wave packet `exp(−Σ_i (x_i−x₀ᵢ)²/(2σ_i²)) exp(iξ₀·x/ε) · polarization`,
/// normalised to 1 on the grid.
pub fn gaussian_state(
    grid: &SpatialGrid,
    eps: f64,
    center: &PhasePoint,
    widths: &[f64],
    polarization: &[Complex64],
) -> Result<Wavefunction> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param("eps", "must be positive"));
    }
    if center.dim() != grid.dim() || widths.len() != grid.dim() {
        return Err(Error::Dimension {
            expected: grid.dim(),
            got: center.dim(),
        });
    }
    if widths.iter().any(|w| w.is_nan() || *w <= 0.0) {
        return Err(Error::param("sigma", "widths must be positive"));
    }
    let mut outside = 0.0;
    for (a, (&x0, &s)) in center.x.iter().zip(widths).enumerate() {
        let l = grid.half_widths()[a];
        if x0.abs() >= l {
            return Err(Error::Geometry(format!("center {x0} outside box half-width {l}")));
        }
        // |ψ|² has standard deviation σ/√2 along each axis
        outside += 0.5 * erfc((l - x0) / s) + 0.5 * erfc((l + x0) / s);
    }
    if outside > 1e-8 {
        return Err(Error::Geometry(format!(
            "Gaussian mass outside the box is {outside:e} (> 1e-8)"
        )));
    }
    let pnorm = polarization.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let pol: Vec<Complex64> = polarization.iter().map(|v| v / pnorm).collect();
    let mut psi = Wavefunction::zeros(grid.clone(), eps, pol.len());
    for p in 0..grid.len() {
        let x = grid.point(p);
        let mut expo = 0.0;
        let mut phase = 0.0;
        for a in 0..grid.dim() {
            let d = x[a] - center.x[a];
            expo -= d * d / (2.0 * widths[a] * widths[a]);
            phase += center.xi[a] * x[a] / eps;
        }
        let amp = Complex64::from_polar(expo.exp(), phase);
        for (c, v) in psi.components.iter_mut().zip(&pol) {
            c[p] = amp * v;
        }
    }
    let norm = psi.norm();
    psi.scale(1.0 / norm);
    Ok(psi)
}

/// Isotropic coherent state on mode `j`, polarised along `Π_j(x₀)`.
/// `sigma = None` uses `σ₀ = √ε`.
pub fn coherent_state(
    model: &PotentialModel,
    grid: &SpatialGrid,
    eps: f64,
    center: &PhasePoint,
    mode: usize,
    sigma: Option<f64>,
) -> Result<Wavefunction> {
    model.check_mode(mode)?;
    let sigma = sigma.unwrap_or_else(|| eps.sqrt());
    let pol = polarization_vector(&model.projector(mode, &center.x));
    gaussian_state(grid, eps, center, &vec![sigma; grid.dim()], &pol)
}

/// `m_j = Σ_x ψ^†Π_j(x)ψ Δx^d` for every mode.
pub fn mode_masses(sampled: &SampledModel, psi: &Wavefunction, exec: Exec) -> Vec<f64> {
    let n = sampled.matrix_dim;
    let m = sampled.n_modes;
    let mut masses = exec.sum_range_vec(psi.grid.len(), m, |p, acc| {
        for (j, slot) in acc.iter_mut().enumerate() {
            let proj = sampled.projector(p, j);
            let mut s = Complex64::new(0.0, 0.0);
            for a in 0..n {
                let pa = psi.components[a][p].conj();
                for b in 0..n {
                    s += pa * proj[a * n + b] * psi.components[b][p];
                }
            }
            *slot += s.re;
        }
    });
    let dv = psi.grid.cell_volume();
    masses.iter_mut().for_each(|v| *v *= dv);
    masses
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{conormal_rotating, degenerate_k, transverse_crossing};

    #[test]
    fn constant_projector_state_has_one_component() {
        let model = transverse_crossing();
        let grid = SpatialGrid::new(&[512], &[4.0]).unwrap();
        let psi = coherent_state(&model, &grid, 0.01, &PhasePoint::new(vec![0.0], vec![1.0]), 0, None).unwrap();
        assert!(psi.components[1].iter().all(|v| v.norm() == 0.0));
        assert!((psi.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn initial_mode_mass_of_polarized_state() {
        // direct quadrature oracle: ∫|g|² v^†Π(x)v for the rotating projector
        let model = conormal_rotating(1.0);
        let eps = 1e-2;
        let grid = SpatialGrid::new(&[2048], &[4.0]).unwrap();
        let x0 = 1.0;
        let psi = coherent_state(&model, &grid, eps, &PhasePoint::new(vec![x0], vec![0.5]), 0, None).unwrap();
        let sampled = model.sample_on_grid(&grid).unwrap();
        let m = mode_masses(&sampled, &psi, Exec::Parallel);
        assert!((m[0] + m[1] - 1.0).abs() < 1e-12);
        assert!(m[0] >= 1.0 - 0.02, "{m:?}");
        assert!(m[1] <= 0.02);

        let s = eps.sqrt();
        let mut oracle = 0.0;
        let mut total = 0.0;
        let h = 1e-4;
        let mut x = x0 - 10.0 * s;
        while x < x0 + 10.0 * s {
            let w = (-(x - x0) * (x - x0) / (s * s)).exp();
            let d = 0.5 * (x * x - x0 * x0);
            oracle += w * d.cos().powi(2) * h;
            total += w * h;
            x += h;
        }
        assert!((m[0] - oracle / total).abs() < 1e-6, "{} vs {}", m[0], oracle / total);
    }

    #[test]
    fn geometry_errors() {
        let model = degenerate_k(0.5).with_half_width(1.0);
        let grid = SpatialGrid::new(&[64, 64], &[1.0, 1.0]).unwrap();
        let c = PhasePoint::new(vec![0.0, 0.0], vec![0.0, 1.0]);
        assert!(matches!(
            coherent_state(&model, &grid, 0.2, &c, 0, None),
            Err(Error::Geometry(_))
        ));
        let off = PhasePoint::new(vec![2.0, 0.0], vec![0.0, 1.0]);
        assert!(coherent_state(&model, &grid, 0.001, &off, 0, None).is_err());
    }
}
