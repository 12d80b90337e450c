use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{RunKind, ScenarioConfig};
use super::emit::{encode_wigner, sha256_hex, svg_heatmap, svg_line_plot, Cell, CsvTable, Emitter, RunManifest};
use crate::classical::{
    flow_invariance_flag, integrate_trajectory, nondegeneracy_test, nontrapping_check, symbol_decomposition,
    tangency_order, NontrapOptions, PhaseFn, PhasePoint, DEFAULT_K_MAX, DEFAULT_TOL_BRACKET, DEFAULT_TOL_TANGENCY,
};
use crate::exec::Exec;
use crate::grid::SpatialGrid;
use crate::model::{model_by_name, PotentialModel};
use crate::quantum::{coherent_state, propagate, simulate, transfer_experiment, wigner_transform, TransferConfig};
use crate::resolvent::{scaling_sweep, NormOptions, SweepOptions};

/// Process-level settings that are not part of the scenario itself.
#[derive(Clone, Debug, Default)]
pub struct RunSettings {
    pub out_dir: Option<PathBuf>,
    pub exec: Exec,
}

/// One-line human summary plus the manifest of a finished run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary: String,
    pub manifest: RunManifest,
}

const DEFAULT_SEED: u64 = 7;

/// Validates the configuration, runs the experiment, writes all outputs and
/// `manifest.json` into the output directory.
pub fn run(config: &ScenarioConfig, settings: &RunSettings) -> anyhow::Result<RunOutcome> {
    config.validate()?;
    let start = Instant::now();
    let name = config.model.name.as_deref().unwrap_or_default();
    let kind = config.run.kind.expect("validated");
    let model = model_by_name(name, &config.model.params).with_context(|| format!("model `{name}`"))?;
    let dir = settings
        .out_dir
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut emit = Emitter::new(&dir)?;
    let ctx = Ctx {
        cfg: config,
        model,
        exec: settings.exec,
        seed: config.output.seed.unwrap_or(DEFAULT_SEED),
    };
    let summary = match kind {
        RunKind::Trajectory => ctx.trajectory(&mut emit),
        RunKind::Classify => ctx.classify(&mut emit),
        RunKind::Nontrap => ctx.nontrap(&mut emit),
        RunKind::Simulate => ctx.simulate(&mut emit),
        RunKind::Transfer => ctx.transfer(&mut emit),
        RunKind::Resolvent => ctx.resolvent(&mut emit),
        RunKind::Wigner => ctx.wigner(&mut emit),
    }
    .with_context(|| format!("{kind} run failed"))?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        kind: kind.to_string(),
        config_sha256: sha256_hex(config.to_toml_string()?.as_bytes()),
        wall_time_s: start.elapsed().as_secs_f64(),
        files: emit.files().to_vec(),
    };
    emit.json("manifest.json", &manifest)?;
    Ok(RunOutcome { summary, manifest })
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    model: PotentialModel,
    exec: Exec,
    seed: u64,
}

fn names(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}{i}")).collect()
}

impl Ctx<'_> {
    fn center(&self) -> anyhow::Result<PhasePoint> {
        let p = &self.cfg.params;
        let x = p.center_x.clone().unwrap_or_default();
        let xi = p.center_xi.clone().unwrap_or_default();
        if x.len() != self.model.dim {
            bail!(
                "params.center_x has {} entries, model `{}` has dimension {}",
                x.len(),
                self.model.label,
                self.model.dim
            );
        }
        Ok(PhasePoint::new(x, xi))
    }

    fn mode(&self) -> usize {
        self.cfg.params.mode.unwrap_or(0)
    }

    fn grid(&self) -> anyhow::Result<SpatialGrid> {
        let counts = self.cfg.params.grid.clone().unwrap_or_default();
        if counts.len() != self.model.dim {
            bail!(
                "params.grid has {} axes, model `{}` has dimension {}",
                counts.len(),
                self.model.label,
                self.model.dim
            );
        }
        let l = self.cfg.params.half_width.unwrap_or(self.model.half_width);
        Ok(SpatialGrid::new(&counts, &vec![l; counts.len()])?)
    }

    fn boxed_model(&self) -> PotentialModel {
        let l = self.cfg.params.half_width.unwrap_or(self.model.half_width);
        self.model.clone().with_half_width(l)
    }

    fn trajectory(&self, emit: &mut Emitter) -> anyhow::Result<String> {
        let p = &self.cfg.params;
        let p0 = self.center()?;
        let step = p.step.unwrap_or(1e-3);
        let traj = integrate_trajectory(&self.model, self.mode(), &p0, p.horizon.unwrap_or(1.0), step)?;
        let d = self.model.dim;
        let mut header = vec!["t".to_string()];
        header.extend(names("x", d));
        header.extend(names("xi", d));
        header.push("energy".into());
        let mut table = CsvTable::new(header);
        let flow_j = self.mode();
        for (t, q) in &traj.samples {
            let mut row = vec![*t];
            row.extend(&q.x);
            row.extend(&q.xi);
            row.push(crate::classical::symbol(&self.model, flow_j, q));
            table.push_numbers(&row);
        }
        emit.csv("trajectory.csv", &table)?;
        let series: Vec<(String, Vec<(f64, f64)>)> = (0..d)
            .map(|a| {
                (
                    format!("x{}", a + 1),
                    traj.samples.iter().map(|(t, q)| (*t, q.x[a])).collect(),
                )
            })
            .collect();
        emit.svg("trajectory.svg", &svg_line_plot("trajectory", "t", "x", &series)?)?;
        Ok(format!(
            "trajectory: {} samples, final x = {:?}, energy drift {:.3e}",
            traj.samples.len(),
            traj.last().x,
            traj.max_energy_drift(&self.model)
        ))
    }

    fn classify(&self, emit: &mut Emitter) -> anyhow::Result<String> {
        #[derive(Serialize)]
        struct ModeReport {
            mode: String,
            order: String,
            derivatives: Vec<f64>,
            flow_invariant: bool,
        }
        #[derive(Serialize)]
        struct Report {
            model: String,
            x: Vec<f64>,
            xi: Vec<f64>,
            crossing: usize,
            k_max: usize,
            modes: Vec<ModeReport>,
            bracket: Option<f64>,
            nondegenerate: Option<bool>,
        }
        let p = &self.cfg.params;
        let point = self.center()?;
        let ci = p.crossing.unwrap_or(0);
        let crossing = self
            .model
            .crossings
            .get(ci)
            .with_context(|| format!("model `{}` has no crossing #{ci}", self.model.label))?;
        let k_max = p.k_max.unwrap_or(DEFAULT_K_MAX);
        let tol = p.tol.unwrap_or(DEFAULT_TOL_TANGENCY);
        let horizon = p.horizon.unwrap_or(1.0);
        let mut modes = Vec::new();
        for &j in [crossing.involved_modes.0, crossing.involved_modes.1].iter() {
            let rep = tangency_order(&self.model, j, crossing, &point, k_max, tol)?;
            let inv = flow_invariance_flag(&self.model, j, crossing, &point, horizon, 1e-8)?;
            modes.push(ModeReport {
                mode: self.model.modes[j].name.clone(),
                order: rep.order.to_string(),
                derivatives: rep.derivatives,
                flow_invariant: inv,
            });
        }
        let (bracket, nondegenerate) = if self.model.matrix_dim == 2 {
            let phi = symbol_decomposition(&self.model)?;
            let g = crossing.gamma.clone();
            let gamma: PhaseFn = Arc::new(move |q: &PhasePoint| g(&q.x));
            match nondegeneracy_test(&phi, &gamma, &point, DEFAULT_TOL_BRACKET) {
                Ok(r) => (Some(r.bracket), Some(r.nondegenerate)),
                Err(_) => (None, None),
            }
        } else {
            (None, None)
        };
        let summary = modes
            .iter()
            .map(|m| format!("{}: order {} (flow-invariant: {})", m.mode, m.order, m.flow_invariant))
            .collect::<Vec<_>>()
            .join("; ");
        emit.json(
            "classify.json",
            &Report {
                model: self.model.label.clone(),
                x: point.x.clone(),
                xi: point.xi.clone(),
                crossing: ci,
                k_max,
                modes,
                bracket,
                nondegenerate,
            },
        )?;
        Ok(format!("classify: {summary}"))
    }

    /// Random seeds on each energy shell: positions uniform in a ball of
    /// radius `seed_radius` where the shell is reachable, momentum
    /// directions uniform.
    fn shell_seeds(&self, energy: f64, count: usize, radius: f64, rng: &mut ChaCha8Rng) -> Vec<PhasePoint> {
        let d = self.model.dim;
        let j = self.mode();
        let mut out = Vec::new();
        let mut attempts = 0;
        while out.len() < count && attempts < 1000 * count {
            attempts += 1;
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-radius..radius)).collect();
            if x.iter().map(|v| v * v).sum::<f64>() > radius * radius || !self.model.contains(&x) {
                continue;
            }
            let kinetic = energy - self.model.eigenvalue(j, &x);
            if kinetic <= 0.0 {
                continue;
            }
            let mut dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n < 1e-3 {
                continue;
            }
            let speed = (2.0 * kinetic).sqrt();
            dir.iter_mut().for_each(|v| *v *= speed / n);
            out.push(PhasePoint::new(x, dir));
        }
        out
    }

    fn nontrap(&self, emit: &mut Emitter) -> anyhow::Result<String> {
        let p = &self.cfg.params;
        let defaults = NontrapOptions::default();
        let opts = NontrapOptions {
            horizon: p.horizon.unwrap_or(defaults.horizon),
            r_escape: p.r_escape.unwrap_or(defaults.r_escape),
            step: p.step.unwrap_or(defaults.step),
            ..defaults
        };
        let count = p.seeds.unwrap_or(16);
        let radius = p.seed_radius.unwrap_or(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut table = CsvTable::new([
            "energy",
            "seed",
            "escaped",
            "escape_time",
            "escape_time_backward",
            "max_radius",
        ]);
        let mut lines = Vec::new();
        for &energy in p.energy.as_deref().unwrap_or_default() {
            let seeds = self.shell_seeds(energy, count, radius, &mut rng);
            if seeds.is_empty() {
                lines.push(format!("E={energy}: no reachable seeds"));
                continue;
            }
            let verdicts = nontrapping_check(&self.model, self.mode(), energy, &seeds, &opts, self.exec)?;
            let escaped = verdicts.iter().filter(|v| v.escaped).count();
            for (i, v) in verdicts.iter().enumerate() {
                let time = |t: Option<f64>| t.map_or(Cell::Empty, Cell::Num);
                table.push(vec![
                    Cell::Num(energy),
                    Cell::Num(i as f64),
                    Cell::Text(if v.escaped { "1" } else { "0" }.into()),
                    time(v.escape_time),
                    time(v.escape_time_backward),
                    Cell::Num(v.max_radius_reached),
                ]);
            }
            lines.push(format!(
                "E={energy}: {escaped}/{} seeds escaped ({})",
                verdicts.len(),
                if escaped == verdicts.len() {
                    "nontrapping"
                } else {
                    "trapping detected"
                }
            ));
        }
        emit.csv("nontrap.csv", &table)?;
        Ok(format!("nontrap: {}", lines.join("; ")))
    }

    fn simulate(&self, emit: &mut Emitter) -> anyhow::Result<String> {
        let p = &self.cfg.params;
        let eps = p.eps.as_ref().expect("validated")[0];
        let grid = self.grid()?;
        let model = self.boxed_model();
        let psi = coherent_state(&model, &grid, eps, &self.center()?, self.mode(), p.sigma)?;
        let dt = p.dt.unwrap_or(eps / 20.0);
        let (end, series) = simulate(
            &model,
            &psi,
            p.horizon.expect("validated"),
            dt,
            p.snapshots.unwrap_or(50),
            self.exec,
        )?;
        let mut header = vec!["t".to_string()];
        header.extend(series.mode_names.iter().map(|n| format!("m_{n}")));
        header.push("norm".into());
        let mut table = CsvTable::new(header);
        for ((t, m), n) in series.times.iter().zip(&series.masses).zip(&series.norms) {
            let mut row = vec![*t];
            row.extend(m);
            row.push(*n);
            table.push_numbers(&row);
        }
        emit.csv("masses.csv", &table)?;
        let plot: Vec<(String, Vec<(f64, f64)>)> = series
            .mode_names
            .iter()
            .enumerate()
            .map(|(j, n)| {
                (
                    format!("m_{n}"),
                    series
                        .times
                        .iter()
                        .zip(&series.masses)
                        .map(|(t, m)| (*t, m[j]))
                        .collect(),
                )
            })
            .collect();
        emit.svg("masses.svg", &svg_line_plot("mode masses", "t", "mass", &plot)?)?;
        let masses: Vec<String> = series
            .mode_names
            .iter()
            .enumerate()
            .map(|(j, n)| format!("m_{n} = {:.6}", series.last(j)))
            .collect();
        Ok(format!(
            "simulate: t = {:.4}, {}, norm = {:.12}",
            end.time,
            masses.join(", "),
            end.norm()
        ))
    }

    fn transfer(&self, emit: &mut Emitter) -> anyhow::Result<String> {
        if !self.model.label.starts_with("degenerate_k") {
            bail!("transfer runs on model `degenerate_k`, not `{}`", self.model.label);
        }
        let p = &self.cfg.params;
        let defaults = TransferConfig::default();
        let a_plus = p.a_plus.unwrap_or_else(|| p.a_minus.map_or(1.0, |a| 1.0 - a));
        let cfg = TransferConfig {
            k: self.model.params.get("k").copied().unwrap_or(defaults.k),
            eps_list: p.eps.clone().expect("validated"),
            eta: p.eta.unwrap_or(defaults.eta),
            a_plus,
            a_minus: p.a_minus.unwrap_or(1.0 - a_plus),
            grid_n: p.grid.as_ref().map_or(defaults.grid_n, |g| g[0]),
            half_width: p.half_width.unwrap_or(defaults.half_width),
            dt_factor: p.dt.unwrap_or(defaults.dt_factor),
            alpha_init: p.alpha.unwrap_or(defaults.alpha_init),
            snapshots: p.snapshots.unwrap_or(defaults.snapshots),
            exec: self.exec,
        };
        let rows = transfer_experiment(&cfg)?;
        let mut masses = CsvTable::new(["eps", "t", "m_plus", "m_minus", "norm"]);
        let mut prediction = CsvTable::new(["eps", "t", "m_plus_pred"]);
        for r in &rows {
            masses.push_numbers(&[r.eps, r.t, r.m_plus, r.m_minus, r.norm]);
            prediction.push_numbers(&[r.eps, r.t, r.predicted_plus]);
        }
        emit.csv("masses.csv", &masses)?;
        emit.csv("prediction.csv", &prediction)?;
        let mut plot = Vec::new();
        for &eps in &cfg.eps_list {
            let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.eps == eps).map(|r| (r.t, r.m_plus)).collect();
            plot.push((format!("m_plus, eps={eps}"), pts));
        }
        plot.push((
            "m_plus predicted".into(),
            rows.iter()
                .filter(|r| r.eps == cfg.eps_list[0])
                .map(|r| (r.t, r.predicted_plus))
                .collect(),
        ));
        emit.svg("masses.svg", &svg_line_plot("mode transfer", "t", "m_plus", &plot)?)?;
        let finals: Vec<String> = cfg
            .eps_list
            .iter()
            .filter_map(|&eps| rows.iter().rev().find(|r| r.eps == eps))
            .map(|r| {
                format!(
                    "eps={}: m_plus(T) = {:.5} (predicted {:.5})",
                    r.eps, r.m_plus, r.predicted_plus
                )
            })
            .collect();
        Ok(format!("transfer k={}: {}", cfg.k, finals.join("; ")))
    }

    fn resolvent(&self, emit: &mut Emitter) -> anyhow::Result<String> {
        let p = &self.cfg.params;
        let defaults = SweepOptions::default();
        let energy = p.energy.as_ref().expect("validated");
        let opts = SweepOptions {
            energy: (energy[0], energy[1]),
            s: p.s.unwrap_or(defaults.s),
            eta_min: p.eta_min.unwrap_or(defaults.eta_min),
            coarse_points: p.coarse_points.unwrap_or(defaults.coarse_points),
            refine_steps: p.refine_steps.unwrap_or(defaults.refine_steps),
            grid_n: p.grid.as_ref().map_or(defaults.grid_n, |g| g[0]),
            half_width: p.half_width.unwrap_or(defaults.half_width),
            cap_strength: p.cap_strength.unwrap_or(defaults.cap_strength),
            norm: NormOptions {
                seed: self.seed,
                ..defaults.norm
            },
            exec: self.exec,
        };
        let eps_list = p.eps.as_ref().expect("validated");
        let result = scaling_sweep(&self.model, eps_list, &opts)?;
        let mut table = CsvTable::new(["eps", "rez", "imz", "norm"]);
        for probe in &result.probes {
            for s in &probe.samples {
                table.push_numbers(&[probe.eps, s.re, s.im, s.norm]);
            }
        }
        let slope_cell = result.slope.map_or(Cell::Empty, Cell::Num);
        table.push(vec![Cell::Text("slope".into()), Cell::Empty, Cell::Empty, slope_cell]);
        emit.csv("resolvent.csv", &table)?;
        let mut sups = CsvTable::new(["eps", "sup", "rez", "imz", "sup_at_smallest_im"]);
        for probe in &result.probes {
            sups.push(vec![
                Cell::Num(probe.eps),
                Cell::Num(probe.sup),
                Cell::Num(probe.sup_z.0),
                Cell::Num(probe.sup_z.1),
                Cell::Text(if probe.sup_at_smallest_im { "1" } else { "0" }.into()),
            ]);
        }
        emit.csv("sup.csv", &sups)?;
        if !result.probes.is_empty() {
            let pts: Vec<(f64, f64)> = result.probes.iter().map(|p| (p.eps.ln(), p.sup.ln())).collect();
            emit.svg(
                "sup.svg",
                &svg_line_plot("weighted resolvent norm", "log eps", "log sup", &[("sup".into(), pts)])?,
            )?;
        }
        let mut summary: Vec<String> = result
            .probes
            .iter()
            .map(|p| format!("eps={}: sup={:.5e}", p.eps, p.sup))
            .collect();
        for (eps, e) in &result.failures {
            summary.push(format!("eps={eps}: failed ({e})"));
        }
        match result.slope {
            Some(s) => summary.push(format!("slope {s:.4}")),
            None => summary.push("slope unavailable (fewer than 3 successful eps)".into()),
        }
        Ok(format!("resolvent: {}", summary.join("; ")))
    }

    fn wigner(&self, emit: &mut Emitter) -> anyhow::Result<String> {
        let p = &self.cfg.params;
        let eps = p.eps.as_ref().expect("validated")[0];
        let grid = self.grid()?;
        let model = self.boxed_model();
        let mut psi = coherent_state(&model, &grid, eps, &self.center()?, self.mode(), p.sigma)?;
        if let Some(h) = p.horizon {
            let states = propagate(&model, &psi, h, p.dt.unwrap_or(eps / 20.0), 1, self.exec)?;
            psi = states.into_iter().last().expect("at least the initial state");
        }
        let w = wigner_transform(&psi, Some(&model), p.subsample.unwrap_or(1), self.exec)?;
        emit.write_bytes("wigner.bin", &encode_wigner(&w, &w.total)?)?;
        for (name, data) in &w.modes {
            emit.write_bytes(&format!("wigner_{name}.bin"), &encode_wigner(&w, data)?)?;
        }
        let xr = (w.x(0), w.x(w.nx - 1));
        let yr = (w.xi(0), w.xi(w.nxi - 1));
        emit.svg(
            "wigner.svg",
            &svg_heatmap("Wigner function", "x", "ξ", &w.total, w.nx, w.nxi, xr, yr)?,
        )?;
        let (x, xi) = w.argmax();
        Ok(format!(
            "wigner: t = {:.4}, peak at (x, ξ) = ({x:.5}, {xi:.5}), mass = {:.9}",
            psi.time,
            w.total_mass()
        ))
    }
}
