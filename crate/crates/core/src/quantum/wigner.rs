use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::wavefunction::Wavefunction;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::PotentialModel;

/// Fraction of the box (at each end) that must hold no more than
/// [`BOUNDARY_MASS_LIMIT`] of `|ψ|²` before a Wigner transform.
pub const BOUNDARY_BAND: f64 = 0.1;
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-8;

/// Discrete Wigner function of a one-dimensional state on the lattice
/// `x = x0 + i·dx`, `ξ = xi0 + l·dxi`. Arrays are x-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerData {
    pub eps: f64,
    pub nx: usize,
    pub nxi: usize,
    pub x0: f64,
    pub dx: f64,
    pub xi0: f64,
    pub dxi: f64,
    pub total: Vec<f64>,
    /// `tr(Π_j W)` per mode, empty when no model was supplied.
    pub modes: Vec<(String, Vec<f64>)>,
}

impl WignerData {
    pub fn value(&self, ix: usize, il: usize) -> f64 {
        self.total[ix * self.nxi + il]
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.x0 + ix as f64 * self.dx
    }

    pub fn xi(&self, il: usize) -> f64 {
        self.xi0 + il as f64 * self.dxi
    }

    /// `Σ W Δx Δξ`
    pub fn total_mass(&self) -> f64 {
        self.total.iter().sum::<f64>() * self.dx * self.dxi
    }

    /// `Σ_ξ W Δξ` per x row.
    pub fn position_marginal(&self) -> Vec<f64> {
        self.total
            .chunks(self.nxi)
            .map(|row| row.iter().sum::<f64>() * self.dxi)
            .collect()
    }

    /// `Σ_x W Δx` per ξ column.
    pub fn momentum_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.nxi];
        for row in self.total.chunks(self.nxi) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v * self.dx;
            }
        }
        out
    }

    /// Lattice point `(x, ξ)` of the largest value of `W`.
    pub fn argmax(&self) -> (f64, f64) {
        let (best, _) =
            self.total.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
            );
        (self.x(best / self.nxi), self.xi(best % self.nxi))
    }
}

/// `W(x_j, ξ_l) = (Δx/(πε)) Σ_m ψ(x_{j+m}) ψ(x_{j−m})^† e^{−2πi l m/n}` with
/// `ψ` taken as zero outside the box, `ξ_l = πεl/(nΔx)` and `l` running over
/// `[−n/2, n/2)`.
/// The ξ-sum of each row is exactly `|ψ(x_j)|²`. Only every `subsample`-th
/// x row is kept. With a model, `tr(Π_j(x) W)` is returned per mode too.
pub fn wigner_transform(
    psi: &Wavefunction,
    model: Option<&PotentialModel>,
    subsample: usize,
    exec: Exec,
) -> Result<WignerData> {
    let grid = &psi.grid;
    if grid.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: grid.dim(),
        });
    }
    if subsample == 0 || !grid.len().is_multiple_of(subsample) {
        return Err(Error::param("subsample", "must be a positive divisor of the grid size"));
    }
    let n = grid.len();
    let dx = grid.spacing(0);
    let l = grid.half_widths()[0];
    let nc = psi.matrix_dim();
    if let Some(m) = model {
        if m.dim != 1 || m.matrix_dim != nc {
            return Err(Error::Dimension {
                expected: nc,
                got: m.matrix_dim,
            });
        }
    }

    let total_sq: f64 = (0..n).map(|p| psi.density(p)).sum();
    let edge: f64 = (0..n)
        .filter(|&p| grid.coordinate(0, p).abs() > (1.0 - BOUNDARY_BAND) * l)
        .map(|p| psi.density(p))
        .sum();
    if total_sq > 0.0 && edge / total_sq > BOUNDARY_MASS_LIMIT {
        return Err(Error::Geometry(format!(
            "{:e} of |ψ|² lies in the outer {}% of the box; enlarge the box before a Wigner transform",
            edge / total_sq,
            BOUNDARY_BAND * 100.0
        )));
    }

    let eps = psi.eps;
    let sampled = match model {
        Some(m) => Some(m.sample_on_grid_with(grid, exec)?),
        None => None,
    };
    let n_modes = sampled.as_ref().map_or(0, |s| s.n_modes);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let prefactor = dx / (PI * eps);
    let rows: Vec<usize> = (0..n).step_by(subsample).collect();

    // each row: total followed by one block per mode
    let computed: Vec<Vec<f64>> = exec.map(&rows, |&j| {
        let mut corr = vec![vec![Complex64::new(0.0, 0.0); n]; nc * nc];
        // lag m is stored at slot m mod n; |m| ≤ min(j, n−1−j) keeps both ends inside
        let reach = j.min(n - 1 - j).min(n / 2 - 1);
        for m in 0..=reach {
            for a in 0..nc {
                for b in 0..nc {
                    let c = &mut corr[a * nc + b];
                    c[m] = psi.components[a][j + m] * psi.components[b][j - m].conj();
                    if m > 0 {
                        c[n - m] = psi.components[a][j - m] * psi.components[b][j + m].conj();
                    }
                }
            }
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for c in &mut corr {
            fft.process_with_scratch(c, &mut scratch);
        }
        let mut out = vec![0.0; n * (1 + n_modes)];
        for il in 0..n {
            // fftshift: output column il holds frequency il − n/2
            let f = (il + n / 2) % n;
            let tr: f64 = (0..nc).map(|a| corr[a * nc + a][f].re).sum();
            out[il] = prefactor * tr;
            if let Some(s) = &sampled {
                for jm in 0..n_modes {
                    let proj = s.projector(j, jm);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for a in 0..nc {
                        for b in 0..nc {
                            acc += proj[b * nc + a] * corr[a * nc + b][f];
                        }
                    }
                    out[(1 + jm) * n + il] = prefactor * acc.re;
                }
            }
        }
        out
    });

    let nx = rows.len();
    let mut total = Vec::with_capacity(nx * n);
    let mut modes: Vec<(String, Vec<f64>)> = match model {
        Some(m) => m
            .modes
            .iter()
            .map(|s| (s.name.clone(), Vec::with_capacity(nx * n)))
            .collect(),
        None => Vec::new(),
    };
    for row in &computed {
        total.extend_from_slice(&row[..n]);
        for (jm, (_, data)) in modes.iter_mut().enumerate() {
            data.extend_from_slice(&row[(1 + jm) * n..(2 + jm) * n]);
        }
    }
    if total.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Wigner transform".into()));
    }
    let dxi = PI * eps / (n as f64 * dx);
    Ok(WignerData {
        eps,
        nx,
        nxi: n,
        x0: grid.coordinate(0, 0),
        dx: dx * subsample as f64,
        xi0: -(n as f64 / 2.0) * dxi,
        dxi,
        total,
        modes,
    })
}
