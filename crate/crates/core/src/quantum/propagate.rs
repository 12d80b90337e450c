use num_complex::Complex64;

use super::wavefunction::{mode_masses, Wavefunction};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::GridFft;
use crate::model::{PotentialModel, SampledModel};

/// Fraction of the momentum lattice (per axis, at each end) watched by the
/// aliasing guard.
pub const ALIASING_BAND: f64 = 0.1;
/// Largest momentum mass tolerated in that band.
pub const ALIASING_LIMIT: f64 = 1e-6;

const CHUNK: usize = 4096;

/// Strang split-step propagator for a fixed model, grid, ε and time step.
///
/// One step is `U_V(dt/2) · F⁻¹ e^{−i dt ε|k|²/2} F · U_V(dt/2)` with the
/// pointwise potential factor `U_V(τ) = Σ_j e^{−iτE_j(x)/ε} Π_j(x)`.
pub struct Propagator {
    eps: f64,
    dt: f64,
    matrix_dim: usize,
    sampled: SampledModel,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    fft: GridFft,
    grid: crate::grid::SpatialGrid,
    exec: Exec,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("eps", &self.eps)
            .field("dt", &self.dt)
            .field("grid", &self.grid)
            .finish()
    }
}

impl Propagator {
    pub fn new(model: &PotentialModel, psi: &Wavefunction, dt: f64, exec: Exec) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        if psi.matrix_dim() != model.matrix_dim {
            return Err(Error::Dimension {
                expected: model.matrix_dim,
                got: psi.matrix_dim(),
            });
        }
        let grid = psi.grid.clone();
        let sampled = model.sample_on_grid_with(&grid, exec)?;
        let eps = psi.eps;
        let n = model.matrix_dim;
        let nn = n * n;
        let mut half_potential = vec![Complex64::new(0.0, 0.0); grid.len() * nn];
        exec.for_chunks_mut(&mut half_potential, CHUNK * nn, |ci, chunk| {
            for (k, block) in chunk.chunks_mut(nn).enumerate() {
                let p = ci * CHUNK + k;
                for j in 0..sampled.n_modes {
                    let phase = Complex64::from_polar(1.0, -0.5 * dt * sampled.eigenvalue(p, j) / eps);
                    for (b, pr) in block.iter_mut().zip(sampled.projector(p, j)) {
                        *b += phase * pr;
                    }
                }
            }
        });
        let mut kinetic = vec![Complex64::new(0.0, 0.0); grid.len()];
        exec.for_chunks_mut(&mut kinetic, CHUNK, |ci, chunk| {
            for (k, v) in chunk.iter_mut().enumerate() {
                let p = ci * CHUNK + k;
                *v = Complex64::from_polar(1.0, -0.5 * dt * eps * grid.wavenumber_sq(p));
            }
        });
        Ok(Propagator {
            eps,
            dt,
            matrix_dim: n,
            sampled,
            half_potential,
            kinetic,
            fft: GridFft::new(&grid),
            grid,
            exec,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sampled(&self) -> &SampledModel {
        &self.sampled
    }

    #[allow(clippy::needless_range_loop)]
    fn apply_half_potential(&self, psi: &mut Wavefunction) {
        let n = self.matrix_dim;
        let nn = n * n;
        let u = &self.half_potential;
        if n == 1 {
            self.exec.for_chunks_mut(&mut psi.components[0], CHUNK, |ci, chunk| {
                for (k, v) in chunk.iter_mut().enumerate() {
                    *v *= u[ci * CHUNK + k];
                }
            });
            return;
        }
        self.exec
            .for_plane_chunks_mut(&mut psi.components, CHUNK, |ci, planes| {
                let len = planes[0].len();
                let mut tmp = vec![Complex64::new(0.0, 0.0); n];
                for k in 0..len {
                    let p = ci * CHUNK + k;
                    let block = &u[p * nn..(p + 1) * nn];
                    for (a, t) in tmp.iter_mut().enumerate() {
                        *t = (0..n).map(|b| block[a * n + b] * planes[b][k]).sum();
                    }
                    for (a, t) in tmp.iter().enumerate() {
                        planes[a][k] = *t;
                    }
                }
            });
    }

    fn apply_kinetic(&self, psi: &mut Wavefunction) {
        for c in &mut psi.components {
            self.fft.forward(c, self.exec);
            let kin = &self.kinetic;
            self.exec.for_chunks_mut(c, CHUNK, |ci, chunk| {
                for (k, v) in chunk.iter_mut().enumerate() {
                    *v *= kin[ci * CHUNK + k];
                }
            });
            self.fft.inverse(c, self.exec);
        }
    }

    pub fn step(&self, psi: &mut Wavefunction) {
        self.apply_half_potential(psi);
        self.apply_kinetic(psi);
        self.apply_half_potential(psi);
        psi.time += self.dt;
    }

    /// Momentum mass in the outer band of the lattice, relative to the total.
    pub fn outer_momentum_fraction(&self, psi: &Wavefunction) -> f64 {
        let n = self.grid.len();
        let mut band = 0.0;
        let mut total = 0.0;
        for c in &psi.components {
            let mut hat = c.clone();
            self.fft.forward(&mut hat, self.exec);
            total += self.exec.sum_range(n, |p| hat[p].norm_sqr());
            band += self.exec.sum_range(n, |p| {
                if self.grid.in_outer_band(p, ALIASING_BAND) {
                    hat[p].norm_sqr()
                } else {
                    0.0
                }
            });
        }
        if total == 0.0 {
            0.0
        } else {
            band / total
        }
    }

    pub fn check_aliasing(&self, psi: &Wavefunction) -> Result<()> {
        let frac = self.outer_momentum_fraction(psi);
        if frac > ALIASING_LIMIT {
            return Err(Error::Resolution(format!(
                "{frac:e} of the momentum mass sits in the outer {}% of the lattice at t = {} (ε = {}); refine the grid",
                ALIASING_BAND * 100.0,
                psi.time,
                self.eps
            )));
        }
        Ok(())
    }
}

/// Per-mode masses sampled along a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModeMassSeries {
    pub mode_names: Vec<String>,
    pub times: Vec<f64>,
    pub masses: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
}

impl ModeMassSeries {
    pub fn push(&mut self, t: f64, masses: Vec<f64>, norm_sq: f64) {
        self.times.push(t);
        self.masses.push(masses);
        self.norms.push(norm_sq.sqrt());
    }

    /// `max_t |m_j(t) − m_j(0)|`
    pub fn max_deviation(&self, j: usize) -> f64 {
        let m0 = self.masses[0][j];
        self.masses.iter().map(|m| (m[j] - m0).abs()).fold(0.0, f64::max)
    }

    pub fn last(&self, j: usize) -> f64 {
        self.masses.last().map_or(f64::NAN, |m| m[j])
    }
}

fn step_count(horizon: f64, dt: f64) -> Result<(usize, f64)> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::param("horizon", "must be positive"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", "must be positive"));
    }
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, horizon / steps as f64))
}

/// Propagates `psi` to `horizon`, calling `observe` at `t = 0` and after
/// every `stride`-th step (always including the final one). The aliasing
/// guard runs at each observation.
fn run<F>(
    model: &PotentialModel,
    psi: &mut Wavefunction,
    horizon: f64,
    dt: f64,
    snapshots: usize,
    exec: Exec,
    mut observe: F,
) -> Result<()>
where
    F: FnMut(&Propagator, &Wavefunction),
{
    let (steps, dt) = step_count(horizon, dt)?;
    let prop = Propagator::new(model, psi, dt, exec)?;
    let stride = (steps / snapshots.max(1)).max(1);
    prop.check_aliasing(psi)?;
    observe(&prop, psi);
    for i in 1..=steps {
        prop.step(psi);
        if i % stride == 0 || i == steps {
            prop.check_aliasing(psi)?;
            observe(&prop, psi);
        }
    }
    Ok(())
}

/// Propagates and returns roughly `snapshots` evenly spaced states
/// (plus the initial one).
pub fn propagate(
    model: &PotentialModel,
    psi: &Wavefunction,
    horizon: f64,
    dt: f64,
    snapshots: usize,
    exec: Exec,
) -> Result<Vec<Wavefunction>> {
    let mut state = psi.clone();
    let mut out = Vec::new();
    run(model, &mut state, horizon, dt, snapshots, exec, |_, s| {
        out.push(s.clone())
    })?;
    Ok(out)
}

/// Propagates and records the mode-mass series; returns the final state.
pub fn simulate(
    model: &PotentialModel,
    psi: &Wavefunction,
    horizon: f64,
    dt: f64,
    snapshots: usize,
    exec: Exec,
) -> Result<(Wavefunction, ModeMassSeries)> {
    let mut state = psi.clone();
    let mut series = ModeMassSeries {
        mode_names: model.modes.iter().map(|m| m.name.clone()).collect(),
        ..Default::default()
    };
    run(model, &mut state, horizon, dt, snapshots, exec, |prop, s| {
        let masses = mode_masses(prop.sampled(), s, exec);
        series.push(s.time, masses, s.norm_sq(exec));
    })?;
    Ok((state, series))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::PhasePoint;
    use crate::grid::SpatialGrid;
    use crate::model::{degenerate_k, scalar_free, transverse_crossing};
    use crate::quantum::coherent_state;

    #[test]
    fn free_packet_moves_classically() {
        let model = scalar_free();
        let grid = SpatialGrid::new(&[1024], &[4.0]).unwrap();
        let eps = 0.02;
        let psi = coherent_state(&model, &grid, eps, &PhasePoint::new(vec![-1.0], vec![1.0]), 0, None).unwrap();
        let (end, series) = simulate(&model, &psi, 1.5, eps / 10.0, 10, Exec::Parallel).unwrap();
        assert!((end.norm() - 1.0).abs() < 1e-10);
        assert!((end.mean_position(0) - 0.5).abs() < 1e-6);
        assert!(series.norms.iter().all(|n| (n - 1.0).abs() < 1e-10));
    }

    #[test]
    fn commuting_projectors_keep_masses_fixed() {
        let model = transverse_crossing();
        let grid = SpatialGrid::new(&[1024], &[4.0]).unwrap();
        let eps = 0.02;
        let mut psi = coherent_state(&model, &grid, eps, &PhasePoint::new(vec![0.5], vec![0.0]), 0, None).unwrap();
        // put some weight on the second component as well
        for (a, b) in psi.components[1].clone().iter_mut().zip(psi.components[0].clone()) {
            *a = b * 0.5;
        }
        let other = psi.components[0].iter().map(|v| v * 0.5).collect();
        psi.components[1] = other;
        let n = psi.norm();
        psi.scale(1.0 / n);
        let (_, series) = simulate(&model, &psi, 1.0, eps / 20.0, 20, Exec::Parallel).unwrap();
        assert!(series.max_deviation(0) < 1e-12);
        assert!(series.max_deviation(1) < 1e-12);
    }

    #[test]
    fn no_transfer_when_projectors_are_constant() {
        let eps = 0.02;
        let model = degenerate_k(0.0).with_half_width(3.0);
        let grid = SpatialGrid::new(&[256, 256], &[3.0, 3.0]).unwrap();
        let psi = coherent_state(
            &model,
            &grid,
            eps,
            &PhasePoint::new(vec![0.0, 0.0], vec![0.0, 1.0]),
            0,
            None,
        )
        .unwrap();
        let (_, series) = simulate(&model, &psi, 1.0, eps / 10.0, 10, Exec::Parallel).unwrap();
        assert!(series.max_deviation(0) < 2e-2);
        for (m, n) in series.masses.iter().zip(&series.norms) {
            assert!((m[0] + m[1] - n * n).abs() < 1e-9);
        }
    }

    #[test]
    fn aliasing_guard_fires_on_underresolved_state() {
        let model = scalar_free();
        let grid = SpatialGrid::new(&[64], &[4.0]).unwrap();
        // wavenumber ξ₀/ε = 23 sits past 90% of the lattice edge π/Δx ≈ 25.1
        let psi = coherent_state(&model, &grid, 0.1, &PhasePoint::new(vec![0.0], vec![2.3]), 0, Some(0.6)).unwrap();
        let r = simulate(&model, &psi, 0.1, 0.01, 1, Exec::Sequential);
        assert!(matches!(r, Err(Error::Resolution(_))), "{r:?}");
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let model = degenerate_k(0.5).with_half_width(3.0);
        let grid = SpatialGrid::new(&[64, 64], &[3.0, 3.0]).unwrap();
        let psi = coherent_state(
            &model,
            &grid,
            0.1,
            &PhasePoint::new(vec![0.0, 0.0], vec![0.0, 1.0]),
            0,
            None,
        )
        .unwrap();
        let (a, sa) = simulate(&model, &psi, 0.2, 0.01, 4, Exec::Parallel).unwrap();
        let (b, sb) = simulate(&model, &psi, 0.2, 0.01, 4, Exec::Sequential).unwrap();
        assert_eq!(sa, sb);
        for (ca, cb) in a.components.iter().zip(&b.components) {
            assert!(ca.iter().zip(cb).all(|(x, y)| x == y));
        }
    }
}
