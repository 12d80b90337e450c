use std::f64::consts::PI;

use super::propagate::simulate;
use super::wavefunction::{gaussian_state, polarization_vector};
use crate::classical::PhasePoint;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::SpatialGrid;
use crate::model::degenerate_k;

/// Setup of the mode-transfer experiment on `degenerate_k(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferConfig {
    pub k: f64,
    pub eps_list: Vec<f64>,
    pub eta: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub grid_n: usize,
    pub half_width: f64,
    /// Time step as a multiple of ε.
    pub dt_factor: f64,
    /// The initial x₁-width is `ε^alpha_init`; the x₂-width is `√ε`.
    pub alpha_init: f64,
    pub snapshots: usize,
    pub exec: Exec,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            k: 0.5,
            eps_list: vec![0.02, 0.01],
            eta: 1.0,
            a_plus: 1.0,
            a_minus: 0.0,
            grid_n: 512,
            half_width: 3.0,
            dt_factor: 1.0 / 40.0,
            alpha_init: 0.5,
            snapshots: 20,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferRow {
    pub eps: f64,
    pub t: f64,
    pub m_plus: f64,
    pub m_minus: f64,
    pub norm: f64,
    pub predicted_plus: f64,
}

/// `a₊cos²(kπηt) + a₋sin²(kπηt)`
pub fn predicted_plus_mass(k: f64, eta: f64, t: f64, a_plus: f64, a_minus: f64) -> f64 {
    let c = (k * PI * eta * t).cos().powi(2);
    a_plus * c + a_minus * (1.0 - c)
}

/// Runs one propagation per initial polarization with nonzero weight,
/// starting from a Gaussian at `x = 0` with momentum `(0, η)`, up to
/// `t = 1/η`, and combines the mode masses with weights `a₊, a₋`.
pub fn transfer_experiment(cfg: &TransferConfig) -> Result<Vec<TransferRow>> {
    if !(cfg.eta > 0.0 && cfg.eta.is_finite()) {
        return Err(Error::param("eta", "must be positive"));
    }
    if cfg.a_plus < 0.0 || cfg.a_minus < 0.0 || (cfg.a_plus + cfg.a_minus - 1.0).abs() > 1e-12 {
        return Err(Error::param(
            "a_plus",
            "a_plus and a_minus must be nonnegative and sum to 1",
        ));
    }
    if cfg.eps_list.is_empty() {
        return Err(Error::param("eps_list", "must not be empty"));
    }
    let model = degenerate_k(cfg.k).with_half_width(cfg.half_width);
    let grid = SpatialGrid::cube(2, cfg.grid_n, cfg.half_width)?;
    let center = PhasePoint::new(vec![0.0, 0.0], vec![0.0, cfg.eta]);
    let horizon = 1.0 / cfg.eta;
    let mut rows = Vec::new();
    for &eps in &cfg.eps_list {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::param("eps", "must be positive"));
        }
        let widths = [eps.powf(cfg.alpha_init), eps.sqrt()];
        let dt = cfg.dt_factor * eps;
        let mut combined: Option<Vec<TransferRow>> = None;
        for (mode, weight) in [(0usize, cfg.a_plus), (1usize, cfg.a_minus)] {
            if weight == 0.0 {
                continue;
            }
            let pol = polarization_vector(&model.projector(mode, &center.x));
            let psi = gaussian_state(&grid, eps, &center, &widths, &pol)?;
            let (_, series) = simulate(&model, &psi, horizon, dt, cfg.snapshots, cfg.exec)?;
            let run: Vec<TransferRow> = series
                .times
                .iter()
                .zip(&series.masses)
                .zip(&series.norms)
                .map(|((&t, m), &nrm)| TransferRow {
                    eps,
                    t,
                    m_plus: weight * m[0],
                    m_minus: weight * m[1],
                    norm: weight * nrm * nrm,
                    predicted_plus: predicted_plus_mass(cfg.k, cfg.eta, t, cfg.a_plus, cfg.a_minus),
                })
                .collect();
            combined = Some(match combined {
                None => run,
                Some(prev) => prev
                    .into_iter()
                    .zip(run)
                    .map(|(a, b)| TransferRow {
                        m_plus: a.m_plus + b.m_plus,
                        m_minus: a.m_minus + b.m_minus,
                        norm: a.norm + b.norm,
                        ..a
                    })
                    .collect(),
            });
        }
        rows.extend(combined.unwrap_or_default());
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PotentialModel;
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    // tr(Π⁺(x₂=ηt) Π⁺(0) Π⁺(ηt)) from the explicit projector matrices
    fn overlap_oracle(model: &PotentialModel, x2: f64) -> f64 {
        let p1: DMatrix<Complex64> = model.projector(0, &[0.0, x2]);
        let p0 = model.projector(0, &[0.0, 0.0]);
        (&p1 * &p0 * &p1).trace().re
    }

    #[test]
    fn prediction_matches_projector_overlap() {
        for &k in &[0.0, 0.25, 0.5, 0.8] {
            let model = degenerate_k(k);
            for &t in &[0.0, 0.3, 1.0] {
                let oracle = overlap_oracle(&model, t);
                assert!((predicted_plus_mass(k, 1.0, t, 1.0, 0.0) - oracle).abs() < 1e-12);
            }
        }
        assert!(predicted_plus_mass(0.5, 1.0, 1.0, 1.0, 0.0).abs() < 1e-15);
        assert_eq!(predicted_plus_mass(0.0, 1.0, 1.0, 0.7, 0.3), 0.7);
        assert!((predicted_plus_mass(0.25, 1.0, 1.0, 1.0, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn small_mixed_run_conserves_total_mass() {
        let cfg = TransferConfig {
            eps_list: vec![0.05],
            a_plus: 0.6,
            a_minus: 0.4,
            grid_n: 128,
            snapshots: 4,
            ..Default::default()
        };
        let rows = transfer_experiment(&cfg).unwrap();
        assert_eq!(rows.first().unwrap().t, 0.0);
        assert!((rows.last().unwrap().t - 1.0).abs() < 1e-12);
        for r in &rows {
            assert!((r.m_plus + r.m_minus - r.norm).abs() < 1e-9);
            assert!((r.norm - 1.0).abs() < 1e-9);
        }
        // half-turn of the frame swaps the two weights
        let last = rows.last().unwrap();
        assert!((last.m_plus - 0.4).abs() < 0.15, "{last:?}");
    }

    #[test]
    fn weights_must_sum_to_one() {
        let cfg = TransferConfig {
            a_plus: 0.5,
            a_minus: 0.2,
            ..Default::default()
        };
        assert!(transfer_experiment(&cfg).is_err());
    }
}
