//! Weighted resolvent norms `‖⟨x⟩^{-s}(P(ε) − z)^{-1}⟨x⟩^{-s}‖` for
//! one-dimensional models and their scaling in ε.
//!
//! `P(ε) = −(ε²/2)Δ + M(x)` uses the spectral Laplacian on a periodic grid.
//! Resolvent probes add a complex absorbing potential `−i sgn(Im z) W(x)` in
//! the outer part of the box. Linear solves use GMRES preconditioned by a
//! banded LU of an eighth-order finite-difference version of the operator.

mod linalg;

use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::{GridFft, SpatialGrid};
use crate::model::PotentialModel;
use linalg::{gmres, BandLu};

pub const CAP_FRACTION: f64 = 0.15;
pub const CAP_STRENGTH: f64 = 1.0;
pub const DEFAULT_S: f64 = 1.0;
pub const DEFAULT_ETA_MIN: f64 = 1e-4;
/// Largest accepted `‖(P − z)u − f‖ / ‖f‖` after a solve.
pub const RESIDUAL_LIMIT: f64 = 1e-8;

const GMRES_TOL: f64 = 1e-11;
const GMRES_RESTART: usize = 40;
const GMRES_MAX_ITER: usize = 2000;
const FD_STENCIL: [f64; 5] = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];

/// `P(ε)` sampled on a one-dimensional grid, with the weight `⟨x⟩^{-s}` and
/// absorbing profile `W(x)`. Vectors interleave components: `u[p·N + a]`.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    grid: SpatialGrid,
    eps: f64,
    s: f64,
    matrix_dim: usize,
    potential: Vec<f64>,
    weight: Vec<f64>,
    cap: Vec<f64>,
    kinetic: Vec<f64>,
    fft: GridFft,
}

/// Builds the operator. `max_energy` is the top of the energy window to be
/// probed and fixes the resolution requirement of 8 points per local
/// wavelength `2πε/√(2(max_energy − min M))`.
pub fn build_operator(
    model: &PotentialModel,
    grid: &SpatialGrid,
    eps: f64,
    s: f64,
    max_energy: f64,
) -> Result<DiscreteOperator> {
    build_operator_with_cap(model, grid, eps, s, max_energy, CAP_STRENGTH)
}

/// [`build_operator`] with a chosen peak strength of the absorbing profile.
pub fn build_operator_with_cap(
    model: &PotentialModel,
    grid: &SpatialGrid,
    eps: f64,
    s: f64,
    max_energy: f64,
    cap_strength: f64,
) -> Result<DiscreteOperator> {
    if !(cap_strength >= 0.0 && cap_strength.is_finite()) {
        return Err(Error::param("cap_strength", "must be nonnegative"));
    }
    if model.dim != 1 || grid.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: model.dim.max(grid.dim()),
        });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param("eps", "must be positive"));
    }
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::param("s", "must be nonnegative"));
    }
    let sampled = model.sample_on_grid(grid)?;
    let n = grid.len();
    let nm = model.matrix_dim;
    let mut potential = Vec::with_capacity(n * nm * nm);
    let mut vmin = f64::INFINITY;
    for p in 0..n {
        for v in sampled.matrix(p) {
            if v.im.abs() > 1e-12 * (1.0 + v.re.abs()) {
                return Err(Error::param(
                    "model",
                    "resolvent probes need a real symmetric potential",
                ));
            }
            potential.push(v.re);
        }
        for j in 0..sampled.n_modes {
            vmin = vmin.min(sampled.eigenvalue(p, j));
        }
    }
    let dx = grid.spacing(0);
    let k_max = max_energy - vmin;
    if k_max > 0.0 {
        let limit = 2.0 * std::f64::consts::PI * eps / (8.0 * (2.0 * k_max).sqrt());
        if dx > limit {
            return Err(Error::Resolution(format!(
                "Δx = {dx:.3e} exceeds {limit:.3e} (8 points per wavelength at kinetic energy {k_max:.3}, ε = {eps})"
            )));
        }
    }
    let l = grid.half_widths()[0];
    let start = (1.0 - CAP_FRACTION) * l;
    let mut weight = Vec::with_capacity(n);
    let mut cap = Vec::with_capacity(n);
    let mut kinetic = Vec::with_capacity(n);
    for p in 0..n {
        let x = grid.coordinate(0, p);
        weight.push((1.0 + x * x).powf(-0.5 * s));
        let d = (x.abs() - start).max(0.0) / (l - start);
        cap.push(cap_strength * d * d);
        kinetic.push(0.5 * eps * eps * grid.wavenumber_sq(p));
    }
    Ok(DiscreteOperator {
        grid: grid.clone(),
        eps,
        s,
        matrix_dim: nm,
        potential,
        weight,
        cap,
        kinetic,
        fft: GridFft::new(grid),
    })
}

impl DiscreteOperator {
    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn weight_exponent(&self) -> f64 {
        self.s
    }

    pub fn matrix_dim(&self) -> usize {
        self.matrix_dim
    }

    /// Length of the vectors the operator acts on.
    pub fn size(&self) -> usize {
        self.grid.len() * self.matrix_dim
    }

    /// Fourier multipliers `ε²k²/2` in FFT order.
    pub fn kinetic_multipliers(&self) -> &[f64] {
        &self.kinetic
    }

    /// `P u` without absorption.
    pub fn apply(&self, u: &[C]) -> Vec<C> {
        let n = self.grid.len();
        let nm = self.matrix_dim;
        let mut out = vec![C::new(0.0, 0.0); u.len()];
        let mut plane = vec![C::new(0.0, 0.0); n];
        for a in 0..nm {
            for p in 0..n {
                plane[p] = u[p * nm + a];
            }
            self.fft.forward(&mut plane, Exec::Sequential);
            for (v, k) in plane.iter_mut().zip(&self.kinetic) {
                *v *= k;
            }
            self.fft.inverse(&mut plane, Exec::Sequential);
            for p in 0..n {
                out[p * nm + a] = plane[p];
            }
        }
        for p in 0..n {
            let m = &self.potential[p * nm * nm..(p + 1) * nm * nm];
            for a in 0..nm {
                let mut acc = C::new(0.0, 0.0);
                for b in 0..nm {
                    acc += m[a * nm + b] * u[p * nm + b];
                }
                out[p * nm + a] += acc;
            }
        }
        out
    }

    /// `(P − i sgn(Im z) W − z) u`
    pub fn apply_shifted(&self, u: &[C], z: C) -> Vec<C> {
        let mut out = self.apply(u);
        let sign = z.im.signum();
        let nm = self.matrix_dim;
        for (i, (o, v)) in out.iter_mut().zip(u).enumerate() {
            *o -= (C::new(0.0, sign * self.cap[i / nm]) + z) * v;
        }
        out
    }

    /// Multiplies by `⟨x⟩^{-s}` in place.
    pub fn apply_weight(&self, u: &mut [C]) {
        let nm = self.matrix_dim;
        for (i, v) in u.iter_mut().enumerate() {
            *v *= self.weight[i / nm];
        }
    }

    /// Dense matrix of `P` (no absorption), for small grids.
    pub fn dense_matrix(&self) -> nalgebra::DMatrix<C> {
        let size = self.size();
        let mut m = nalgebra::DMatrix::zeros(size, size);
        let mut e = vec![C::new(0.0, 0.0); size];
        for j in 0..size {
            e[j] = C::new(1.0, 0.0);
            for (i, v) in self.apply(&e).into_iter().enumerate() {
                m[(i, j)] = v;
            }
            e[j] = C::new(0.0, 0.0);
        }
        m
    }

    /// Factorised solver for `(P − i sgn(Im z) W − z) u = f`.
    pub fn shifted_solver(&self, z: C) -> Result<ShiftedSolver<'_>> {
        if z.im == 0.0 || !z.im.is_finite() || !z.re.is_finite() {
            return Err(Error::param("z", "needs a finite, nonzero imaginary part"));
        }
        let n = self.grid.len();
        let nm = self.matrix_dim;
        let size = n * nm;
        let bw = 4 * nm;
        let mut lu = BandLu::zeros(size, bw, bw);
        let dx = self.grid.spacing(0);
        let scale = -0.5 * self.eps * self.eps / (dx * dx);
        let sign = z.im.signum();
        for p in 0..n {
            for a in 0..nm {
                let i = p * nm + a;
                lu.add(i, i, C::new(scale * FD_STENCIL[0], -sign * self.cap[p]) - z);
                for (d, c) in FD_STENCIL.iter().enumerate().skip(1) {
                    if p >= d {
                        lu.add(i, (p - d) * nm + a, C::new(scale * c, 0.0));
                    }
                    if p + d < n {
                        lu.add(i, (p + d) * nm + a, C::new(scale * c, 0.0));
                    }
                }
                for b in 0..nm {
                    lu.add(i, p * nm + b, C::new(self.potential[p * nm * nm + a * nm + b], 0.0));
                }
            }
        }
        if !lu.factor() {
            return Err(Error::Solver {
                re_z: z.re,
                im_z: z.im,
                condition: f64::INFINITY,
                reason: "singular preconditioner".into(),
            });
        }
        Ok(ShiftedSolver { op: self, z, lu })
    }
}

/// Solver for one spectral parameter `z`.
#[derive(Debug)]
pub struct ShiftedSolver<'a> {
    op: &'a DiscreteOperator,
    z: C,
    lu: BandLu,
}

impl ShiftedSolver<'_> {
    pub fn z(&self) -> C {
        self.z
    }

    /// `(P − i sgn(Im z) W − z)^{-1} f`, with the residual verified against
    /// [`RESIDUAL_LIMIT`].
    pub fn solve(&self, f: &[C]) -> Result<Vec<C>> {
        let mut x = f.to_vec();
        self.lu.solve_in_place(&mut x);
        let out = gmres(
            |v| self.op.apply_shifted(v, self.z),
            |v| self.lu.solve_in_place(v),
            f,
            &mut x,
            GMRES_RESTART,
            GMRES_MAX_ITER,
            GMRES_TOL,
        );
        if !out.relative_residual.is_finite() || out.relative_residual > RESIDUAL_LIMIT {
            return Err(Error::Solver {
                re_z: self.z.re,
                im_z: self.z.im,
                condition: self.lu.pivot_ratio(),
                reason: format!(
                    "GMRES residual {:.3e} after {} iterations",
                    out.relative_residual, out.iterations
                ),
            });
        }
        Ok(x)
    }

    /// Solve with the adjoint operator. `P` is real symmetric and the
    /// absorption is diagonal, so the adjoint is the entrywise conjugate.
    pub fn solve_adjoint(&self, f: &[C]) -> Result<Vec<C>> {
        let g: Vec<C> = f.iter().map(|v| v.conj()).collect();
        Ok(self.solve(&g)?.into_iter().map(|v| v.conj()).collect())
    }
}

/// Power-iteration controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions {
            tol: 1e-4,
            max_iter: 300,
            seed: 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate {
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest singular value of `A = ⟨x⟩^{-s} R(z) ⟨x⟩^{-s}` by power iteration
/// on `A*A` from a real random start vector. The returned value `‖Av‖` for
/// the current unit iterate is a lower bound that increases to the norm.
pub fn weighted_resolvent_norm(op: &DiscreteOperator, z: C, opts: &NormOptions) -> Result<NormEstimate> {
    let solver = op.shifted_solver(z)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<C> = (0..op.size())
        .map(|_| C::new(rng.random_range(-1.0..1.0), 0.0))
        .collect();
    let nv = linalg::norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut prev = 0.0;
    let mut sigma = 0.0;
    for it in 1..=opts.max_iter.max(1) {
        let mut w = v.clone();
        op.apply_weight(&mut w);
        let mut w = solver.solve(&w)?;
        op.apply_weight(&mut w);
        sigma = linalg::norm(&w);
        if it > 1 && (sigma - prev).abs() <= opts.tol * sigma {
            return Ok(NormEstimate {
                norm: sigma,
                iterations: it,
                converged: true,
            });
        }
        prev = sigma;
        op.apply_weight(&mut w);
        let mut u = solver.solve_adjoint(&w)?;
        op.apply_weight(&mut u);
        let nu = linalg::norm(&u);
        if nu == 0.0 || !nu.is_finite() {
            return Err(Error::NonFinite("power iteration".into()));
        }
        v = u.into_iter().map(|x| x / nu).collect();
    }
    Ok(NormEstimate {
        norm: sigma,
        iterations: opts.max_iter,
        converged: false,
    })
}

/// Settings of one ε-sweep over the window `Re z ∈ energy`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub energy: (f64, f64),
    pub s: f64,
    pub eta_min: f64,
    /// Number of equispaced `Re z` samples at `Im z = eta_min`.
    pub coarse_points: usize,
    /// Golden-section steps around the best coarse sample.
    pub refine_steps: usize,
    pub grid_n: usize,
    pub half_width: f64,
    pub cap_strength: f64,
    pub norm: NormOptions,
    pub exec: Exec,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            energy: (0.5, 1.5),
            s: DEFAULT_S,
            eta_min: DEFAULT_ETA_MIN,
            coarse_points: 21,
            refine_steps: 12,
            grid_n: 4096,
            half_width: 25.0,
            cap_strength: CAP_STRENGTH,
            norm: NormOptions::default(),
            exec: Exec::Parallel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZSample {
    pub re: f64,
    pub im: f64,
    pub norm: f64,
}

/// Sampled weighted norms at one ε and their supremum.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolventProbeResult {
    pub eps: f64,
    pub samples: Vec<ZSample>,
    pub sup: f64,
    pub sup_z: (f64, f64),
    /// Whether, along the `Im z` ladder at the best `Re z`, the largest norm
    /// sits at the smallest `|Im z|` (within 1e−3 relative).
    pub sup_at_smallest_im: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingResult {
    pub probes: Vec<ResolventProbeResult>,
    pub failures: Vec<(f64, String)>,
    /// Least-squares slope of `log sup` against `log ε`, when at least three
    /// ε succeeded.
    pub slope: Option<f64>,
}

impl ScalingResult {
    pub fn sup_for(&self, eps: f64) -> Option<f64> {
        self.probes.iter().find(|p| p.eps == eps).map(|p| p.sup)
    }
}

fn sample_seed(base: u64, eps: f64, z: C) -> u64 {
    base ^ eps.to_bits().rotate_left(41) ^ z.re.to_bits().rotate_left(17) ^ z.im.abs().to_bits()
}

/// Weighted norm at one `z` with the seed derived from `(ε, z)`, so results
/// do not depend on evaluation order.
pub fn probe_norm(op: &DiscreteOperator, z: C, opts: &NormOptions) -> Result<f64> {
    let o = NormOptions {
        seed: sample_seed(opts.seed, op.eps, z),
        ..*opts
    };
    Ok(weighted_resolvent_norm(op, z, &o)?.norm)
}

/// Probes one ε: coarse scan of `Re z` at `Im z = eta_min`, golden-section
/// refinement around the best sample, then an `Im z` ladder from 1 down to
/// `eta_min` at the refined `Re z`.
pub fn resolvent_probe(model: &PotentialModel, eps: f64, opts: &SweepOptions) -> Result<ResolventProbeResult> {
    let (e0, e1) = opts.energy;
    if e0.is_nan() || e1.is_nan() || e1 < e0 || opts.coarse_points == 0 {
        return Err(Error::param("energy", "needs lo ≤ hi and at least one sample"));
    }
    if !(opts.eta_min > 0.0 && opts.eta_min < 1.0) {
        return Err(Error::param("eta_min", "must lie in (0, 1)"));
    }
    let boxed = model.clone().with_half_width(opts.half_width);
    let grid = SpatialGrid::new(&[opts.grid_n], &[opts.half_width])?;
    let op = build_operator_with_cap(&boxed, &grid, eps, opts.s, e1, opts.cap_strength)?;
    let eta = opts.eta_min;
    let coarse: Vec<f64> = if opts.coarse_points == 1 {
        vec![0.5 * (e0 + e1)]
    } else {
        (0..opts.coarse_points)
            .map(|i| e0 + (e1 - e0) * i as f64 / (opts.coarse_points - 1) as f64)
            .collect()
    };
    let norms = opts
        .exec
        .map(&coarse, |&re| probe_norm(&op, C::new(re, eta), &opts.norm))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let mut samples: Vec<ZSample> = coarse
        .iter()
        .zip(&norms)
        .map(|(&re, &norm)| ZSample { re, im: eta, norm })
        .collect();

    let best = (0..norms.len()).fold(0, |b, i| if norms[i] > norms[b] { i } else { b });
    let mut lo = coarse[best.saturating_sub(1)];
    let mut hi = coarse[(best + 1).min(coarse.len() - 1)];
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let eval = |re: f64, samples: &mut Vec<ZSample>| -> Result<f64> {
        let v = probe_norm(&op, C::new(re, eta), &opts.norm)?;
        samples.push(ZSample { re, im: eta, norm: v });
        Ok(v)
    };
    if hi > lo {
        let mut a = hi - g * (hi - lo);
        let mut b = lo + g * (hi - lo);
        let mut fa = eval(a, &mut samples)?;
        let mut fb = eval(b, &mut samples)?;
        for _ in 0..opts.refine_steps {
            if fa >= fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - g * (hi - lo);
                fa = eval(a, &mut samples)?;
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + g * (hi - lo);
                fb = eval(b, &mut samples)?;
            }
        }
    }
    let peak = samples
        .iter()
        .filter(|s| s.im == eta)
        .fold(samples[0], |b, s| if s.norm > b.norm { *s } else { b });

    let decades = (-eta.log10()).ceil() as i32;
    let mut ladder: Vec<f64> = (0..decades).map(|k| 10f64.powi(-k)).filter(|&v| v > eta).collect();
    ladder.push(eta);
    let ladder_norms = opts
        .exec
        .map(&ladder[..ladder.len() - 1], |&im| {
            probe_norm(&op, C::new(peak.re, im), &opts.norm)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let ladder_max = ladder_norms.iter().cloned().fold(0.0, f64::max);
    for (&im, &norm) in ladder.iter().zip(&ladder_norms) {
        samples.push(ZSample { re: peak.re, im, norm });
    }
    let sup_at_smallest_im = peak.norm >= ladder_max * (1.0 - 1e-3);
    let top = samples
        .iter()
        .fold(samples[0], |b, s| if s.norm > b.norm { *s } else { b });
    Ok(ResolventProbeResult {
        eps,
        samples,
        sup: top.norm,
        sup_z: (top.re, top.im),
        sup_at_smallest_im,
    })
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Runs [`resolvent_probe`] for every ε and fits the scaling exponent.
/// Failures at individual ε are recorded instead of aborting the sweep.
pub fn scaling_sweep(model: &PotentialModel, eps_list: &[f64], opts: &SweepOptions) -> Result<ScalingResult> {
    if eps_list.is_empty() {
        return Err(Error::param("eps_list", "must not be empty"));
    }
    let mut probes = Vec::new();
    let mut failures = Vec::new();
    for &eps in eps_list {
        match resolvent_probe(model, eps, opts) {
            Ok(p) => probes.push(p),
            Err(e @ (Error::Dimension { .. } | Error::Parameter { .. } | Error::Domain { .. })) => return Err(e),
            Err(e) => failures.push((eps, e.to_string())),
        }
    }
    let slope = (probes.len() >= 3).then(|| {
        let x: Vec<f64> = probes.iter().map(|p| p.eps.ln()).collect();
        let y: Vec<f64> = probes.iter().map(|p| p.sup.ln()).collect();
        fit_slope(&x, &y)
    });
    Ok(ScalingResult {
        probes,
        failures,
        slope,
    })
}
