use super::wavefunction::Wavefunction;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::PotentialModel;

/// Histogram of the per-mode densities `ψ^†Π_jψ` against `y = x₁/ε^α`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoScaleProfile {
    pub alpha: f64,
    pub eps: f64,
    pub r0: f64,
    /// `bins + 1` edges spanning `[−R₀, R₀]`.
    pub edges: Vec<f64>,
    pub mode_names: Vec<String>,
    /// `mass[j][b]` for mode `j` and finite bin `b`.
    pub mass: Vec<Vec<f64>>,
    pub neg_inf: Vec<f64>,
    pub pos_inf: Vec<f64>,
}

impl TwoScaleProfile {
    pub fn total_mass(&self) -> f64 {
        self.finite_mass() + self.neg_inf.iter().sum::<f64>() + self.pos_inf.iter().sum::<f64>()
    }

    pub fn finite_mass(&self) -> f64 {
        self.mass.iter().flatten().sum()
    }

    pub fn overflow_mass(&self) -> f64 {
        self.total_mass() - self.finite_mass()
    }
}

pub fn two_scale_profile(
    model: &PotentialModel,
    psi: &Wavefunction,
    alpha: f64,
    r0: f64,
    bins: usize,
    exec: Exec,
) -> Result<TwoScaleProfile> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::param("alpha", "must lie in (0, 1/2)"));
    }
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::param("r0", "must be positive"));
    }
    if bins == 0 {
        return Err(Error::param("bins", "must be at least 1"));
    }
    let sampled = model.sample_on_grid_with(&psi.grid, exec)?;
    let scale = psi.eps.powf(alpha);
    let width = 2.0 * r0 / bins as f64;
    let m = sampled.n_modes;
    let nc = sampled.matrix_dim;
    // layout per mode: [−∞, bins..., +∞]
    let slots = bins + 2;
    let acc = exec.sum_range_vec(psi.grid.len(), m * slots, |p, out| {
        let y = psi.grid.point(p)[0] / scale;
        let slot = if y < -r0 {
            0
        } else if y > r0 {
            bins + 1
        } else {
            1 + (((y + r0) / width) as usize).min(bins - 1)
        };
        for j in 0..m {
            let proj = sampled.projector(p, j);
            let mut s = 0.0;
            for a in 0..nc {
                let pa = psi.components[a][p].conj();
                for b in 0..nc {
                    s += (pa * proj[a * nc + b] * psi.components[b][p]).re;
                }
            }
            out[j * slots + slot] += s;
        }
    });
    let dv = psi.grid.cell_volume();
    let mut mass = Vec::with_capacity(m);
    let mut neg_inf = Vec::with_capacity(m);
    let mut pos_inf = Vec::with_capacity(m);
    for j in 0..m {
        let row = &acc[j * slots..(j + 1) * slots];
        neg_inf.push(row[0] * dv);
        pos_inf.push(row[bins + 1] * dv);
        mass.push(row[1..=bins].iter().map(|v| v * dv).collect());
    }
    Ok(TwoScaleProfile {
        alpha,
        eps: psi.eps,
        r0,
        edges: (0..=bins).map(|b| -r0 + b as f64 * width).collect(),
        mode_names: model.modes.iter().map(|s| s.name.clone()).collect(),
        mass,
        neg_inf,
        pos_inf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::PhasePoint;
    use crate::grid::SpatialGrid;
    use crate::model::degenerate_k;
    use crate::quantum::{gaussian_state, polarization_vector};

    fn packet(eps: f64, x1: f64, w1: f64) -> (PotentialModel, Wavefunction) {
        let model = degenerate_k(0.5).with_half_width(3.0);
        let grid = SpatialGrid::new(&[256, 128], &[3.0, 3.0]).unwrap();
        let center = PhasePoint::new(vec![x1, 0.0], vec![0.0, 1.0]);
        let pol = polarization_vector(&model.projector(0, &center.x));
        let psi = gaussian_state(&grid, eps, &center, &[w1, eps.sqrt()], &pol).unwrap();
        (model, psi)
    }

    #[test]
    fn concentrated_packet_stays_in_finite_bins() {
        let eps: f64 = 0.01;
        let alpha = 0.3;
        let (model, psi) = packet(eps, 0.0, eps.powf(alpha));
        let prof = two_scale_profile(&model, &psi, alpha, 6.0, 48, Exec::Parallel).unwrap();
        assert!((prof.total_mass() - psi.norm_sq(Exec::Parallel)).abs() < 1e-9);
        assert!(prof.finite_mass() >= 1.0 - 1e-3);
        assert!(prof.overflow_mass() < 1e-3);
    }

    #[test]
    fn packet_away_from_crossing_escapes_to_infinity() {
        let eps: f64 = 1e-3;
        let (model, psi) = packet(eps, 1.2, 0.1);
        let prof = two_scale_profile(&model, &psi, 0.25, 4.0, 16, Exec::Parallel).unwrap();
        assert!(prof.pos_inf.iter().sum::<f64>() > 1.0 - 1e-9);
        assert!((prof.total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn alpha_outside_range_is_rejected() {
        let (model, psi) = packet(0.01, 0.0, 0.1);
        assert!(two_scale_profile(&model, &psi, 0.5, 1.0, 4, Exec::Parallel).is_err());
        assert!(two_scale_profile(&model, &psi, 0.0, 1.0, 4, Exec::Parallel).is_err());
    }
}
