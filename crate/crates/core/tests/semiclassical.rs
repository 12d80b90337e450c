use crosslab::classical::{integrate_trajectory, PhasePoint};
use crosslab::model::{conormal_rotating, scalar_free, transverse_crossing, PotentialModel};
use crosslab::quantum::{coherent_state, propagate, wigner_transform, WignerData};
use crosslab::resolvent::{scaling_sweep, SweepOptions};
use crosslab::{Exec, SpatialGrid};

/// Wigner peak and first moments against the classical flow at `t = 1`.
fn transport(model: &PotentialModel, start: &PhasePoint, eps: f64) -> (WignerData, (f64, f64), (f64, f64), PhasePoint) {
    let grid = SpatialGrid::cube(1, 1024, 4.0).unwrap();
    let psi = coherent_state(model, &grid, eps, start, 0, None).unwrap();
    let end = propagate(model, &psi, 1.0, eps / 20.0, 1, Exec::default())
        .unwrap()
        .pop()
        .unwrap();
    let w = wigner_transform(&end, None, 1, Exec::default()).unwrap();
    let mass = w.total_mass();
    let mx: f64 = w
        .position_marginal()
        .iter()
        .enumerate()
        .map(|(i, v)| v * w.x(i))
        .sum::<f64>()
        * w.dx
        / mass;
    let mk: f64 = w
        .momentum_marginal()
        .iter()
        .enumerate()
        .map(|(l, v)| v * w.xi(l))
        .sum::<f64>()
        * w.dxi
        / mass;
    let cl = integrate_trajectory(model, 0, start, 1.0, 1e-3).unwrap().last().clone();
    let peak = w.argmax();
    (w, peak, (mx, mk), cl)
}

#[test]
fn wigner_peak_follows_the_classical_flow() {
    for (model, start) in [
        (scalar_free(), PhasePoint::new(vec![-0.5], vec![1.0])),
        (conormal_rotating(1.0), PhasePoint::new(vec![1.0], vec![0.5])),
    ] {
        let mut mean_gap = Vec::new();
        for eps in [0.04, 0.02] {
            let (w, (x, xi), (mx, mk), cl) = transport(&model, &start, eps);
            assert!(
                (x - cl.x[0]).abs() <= 2.0 * w.dx + eps,
                "{} eps={eps}: x {x} vs {}",
                model.label,
                cl.x[0]
            );
            assert!(
                (xi - cl.xi[0]).abs() <= 2.0 * w.dxi + eps,
                "{} eps={eps}: xi {xi} vs {}",
                model.label,
                cl.xi[0]
            );
            mean_gap.push(((mx - cl.x[0]).powi(2) + (mk - cl.xi[0]).powi(2)).sqrt());
        }
        assert!(
            mean_gap[1] < mean_gap[0] || mean_gap[1] < 1e-8,
            "{}: discrepancy {:?} does not shrink",
            model.label,
            mean_gap
        );
    }
}

#[test]
fn free_sweep_is_grid_independent() {
    let eps_list = [0.2, 0.1, 0.05];
    let coarse = scaling_sweep(&scalar_free(), &eps_list, &SweepOptions::default()).unwrap();
    let fine = scaling_sweep(
        &scalar_free(),
        &eps_list,
        &SweepOptions {
            grid_n: 8192,
            ..SweepOptions::default()
        },
    )
    .unwrap();
    for eps in eps_list {
        let (a, b) = (coarse.sup_for(eps).unwrap(), fine.sup_for(eps).unwrap());
        assert!((a - b).abs() <= 0.05 * a, "eps={eps}: {a} vs {b}");
    }
}

#[test]
fn transverse_crossing_scales_like_one_over_eps() {
    let opts = SweepOptions {
        energy: (0.8, 1.2),
        grid_n: 4096,
        half_width: 8.0,
        cap_strength: 10.0,
        ..SweepOptions::default()
    };
    let res = scaling_sweep(&transverse_crossing(), &[0.2, 0.1, 0.05], &opts).unwrap();
    let slope = res.slope.expect("three successful eps");
    assert!((slope + 1.0).abs() <= 0.3, "slope {slope}");
    for p in &res.probes {
        assert!(p.samples.iter().all(|s| s.norm > 0.0));
    }
}
