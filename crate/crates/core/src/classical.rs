//! Classical dynamics of the mode symbols `λ_j(x, ξ) = ½|ξ|² + E_j(x)`.
//!
//! Flows are integrated with fixed-step RK4. On top of the integrator sit the
//! nontrapping test, the contact-order classifier of a flow against a
//! hypersurface `{γ = 0}`, a finite witness that a flow line stays inside the
//! hypersurface, and the Poisson-bracket non-degeneracy test for 2×2 crossings.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{CrossingSpec, PotentialModel};

/// A point `(x, ξ)` of phase space `T*R^d`. Also used for tangent vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, xi: Vec<f64>) -> Self {
        assert_eq!(x.len(), xi.len(), "position and momentum must have equal length");
        PhasePoint { x, xi }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.xi).all(|v| v.is_finite())
    }

    /// `self + a · v`
    pub fn add_scaled(&self, a: f64, v: &PhasePoint) -> PhasePoint {
        PhasePoint {
            x: self.x.iter().zip(&v.x).map(|(p, q)| p + a * q).collect(),
            xi: self.xi.iter().zip(&v.xi).map(|(p, q)| p + a * q).collect(),
        }
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.xi.iter().zip(&other.xi))
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn radius(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `x · ξ`
    pub fn radial_momentum(&self) -> f64 {
        self.x.iter().zip(&self.xi).map(|(a, b)| a * b).sum()
    }
}

/// A vector field on phase space.
pub trait PhaseField: Sync {
    fn eval(&self, p: &PhasePoint) -> PhasePoint;
}

impl<F> PhaseField for F
where
    F: Fn(&PhasePoint) -> PhasePoint + Sync,
{
    fn eval(&self, p: &PhasePoint) -> PhasePoint {
        self(p)
    }
}

/// Hamilton field `H_j = (ξ, -∇E_j(x))` of one mode of a model.
#[derive(Clone, Copy)]
pub struct ModeFlow<'a> {
    pub model: &'a PotentialModel,
    pub mode: usize,
}

impl<'a> ModeFlow<'a> {
    pub fn new(model: &'a PotentialModel, mode: usize) -> Result<Self> {
        model.check_mode(mode)?;
        Ok(ModeFlow { model, mode })
    }

    pub fn symbol(&self, p: &PhasePoint) -> f64 {
        symbol(self.model, self.mode, p)
    }
}

impl PhaseField for ModeFlow<'_> {
    fn eval(&self, p: &PhasePoint) -> PhasePoint {
        let force = self.model.gradient_eigenvalue(self.mode, &p.x);
        PhasePoint {
            x: p.xi.clone(),
            xi: force.into_iter().map(|f| -f).collect(),
        }
    }
}

/// `λ_j(x, ξ) = ½|ξ|² + E_j(x)`
pub fn symbol(model: &PotentialModel, j: usize, p: &PhasePoint) -> f64 {
    0.5 * p.xi.iter().map(|v| v * v).sum::<f64>() + model.eigenvalue(j, &p.x)
}

pub fn hamilton_field(model: &PotentialModel, j: usize, p: &PhasePoint) -> Result<PhasePoint> {
    check_dim(model, p)?;
    Ok(ModeFlow::new(model, j)?.eval(p))
}

fn check_dim(model: &PotentialModel, p: &PhasePoint) -> Result<()> {
    if p.dim() != model.dim {
        return Err(Error::Dimension {
            expected: model.dim,
            got: p.dim(),
        });
    }
    Ok(())
}

/// One classical Runge–Kutta step of size `h` (negative `h` runs backward).
pub fn rk4_step<F: PhaseField + ?Sized>(field: &F, p: &PhasePoint, h: f64) -> PhasePoint {
    let k1 = field.eval(p);
    let k2 = field.eval(&p.add_scaled(0.5 * h, &k1));
    let k3 = field.eval(&p.add_scaled(0.5 * h, &k2));
    let k4 = field.eval(&p.add_scaled(h, &k3));
    let mut out = p.clone();
    let w = h / 6.0;
    for i in 0..p.dim() {
        out.x[i] += w * (k1.x[i] + 2.0 * k2.x[i] + 2.0 * k3.x[i] + k4.x[i]);
        out.xi[i] += w * (k1.xi[i] + 2.0 * k2.xi[i] + 2.0 * k3.xi[i] + k4.xi[i]);
    }
    out
}

/// Flows `p` for signed time `t` using steps no longer than `max_step`.
pub fn flow_for<F: PhaseField + ?Sized>(field: &F, p: &PhasePoint, t: f64, max_step: f64) -> PhasePoint {
    if t == 0.0 {
        return p.clone();
    }
    let n = (t.abs() / max_step).ceil().max(1.0) as usize;
    let h = t / n as f64;
    let mut q = p.clone();
    for _ in 0..n {
        q = rk4_step(field, &q, h);
    }
    q
}

/// Sampled integral curve of one mode.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub mode: usize,
    pub samples: Vec<(f64, PhasePoint)>,
    pub energy: f64,
    pub step: f64,
}

impl Trajectory {
    pub fn last(&self) -> &PhasePoint {
        &self.samples.last().expect("trajectory has at least one sample").1
    }

    /// `max_t |λ_j(ρ(t)) − λ_j(ρ(0))|`
    pub fn max_energy_drift(&self, model: &PotentialModel) -> f64 {
        self.samples
            .iter()
            .map(|(_, p)| (symbol(model, self.mode, p) - self.energy).abs())
            .fold(0.0, f64::max)
    }

    /// Linear interpolation of the sampled curve at time `t`.
    pub fn at(&self, t: f64) -> PhasePoint {
        let i = self.samples.partition_point(|(s, _)| *s < t);
        if i == 0 {
            return self.samples[0].1.clone();
        }
        if i >= self.samples.len() {
            return self.last().clone();
        }
        let (t0, p0) = &self.samples[i - 1];
        let (t1, p1) = &self.samples[i];
        let w = (t - t0) / (t1 - t0);
        let diff = p1.add_scaled(-1.0, p0);
        p0.add_scaled(w, &diff)
    }
}

/// Integrates mode `j` from `p0` over `[0, horizon]` at fixed step `h`,
/// recording every step.
pub fn integrate_trajectory(
    model: &PotentialModel,
    j: usize,
    p0: &PhasePoint,
    horizon: f64,
    h: f64,
) -> Result<Trajectory> {
    check_dim(model, p0)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::param("h", "step must be positive"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::param("horizon", "must be positive"));
    }
    let flow = ModeFlow::new(model, j)?;
    let steps = (horizon / h).round().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut p = p0.clone();
    samples.push((0.0, p.clone()));
    for i in 1..=steps {
        let next = rk4_step(&flow, &p, dt);
        if !next.is_finite() {
            return Err(Error::Integration {
                last_valid_time: (i - 1) as f64 * dt,
            });
        }
        p = next;
        samples.push((i as f64 * dt, p.clone()));
    }
    Ok(Trajectory {
        mode: j,
        samples,
        energy: symbol(model, j, p0),
        step: dt,
    })
}

/// Integrates many seeds; output order follows seed order.
pub fn integrate_batch(
    model: &PotentialModel,
    j: usize,
    seeds: &[PhasePoint],
    horizon: f64,
    h: f64,
    exec: Exec,
) -> Vec<Result<Trajectory>> {
    exec.map(seeds, |p| integrate_trajectory(model, j, p, horizon, h))
}

/// Parameters of the escape test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NontrapOptions {
    pub horizon: f64,
    pub r_escape: f64,
    pub step: f64,
    /// Further steps over which `|x|` must keep increasing.
    pub confirm_steps: usize,
}

impl Default for NontrapOptions {
    fn default() -> Self {
        NontrapOptions {
            horizon: 50.0,
            r_escape: 10.0,
            step: 1e-3,
            confirm_steps: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NontrappingVerdict {
    pub energy: f64,
    /// Escaped in both time directions.
    pub escaped: bool,
    /// Forward escape time.
    pub escape_time: Option<f64>,
    pub escape_time_backward: Option<f64>,
    pub max_radius_reached: f64,
}

struct Escape {
    time: Option<f64>,
    max_radius: f64,
}

fn escape_in_direction(flow: &ModeFlow<'_>, seed: &PhasePoint, opts: &NontrapOptions, sign: f64) -> Result<Escape> {
    let h = sign * opts.step;
    let steps = (opts.horizon / opts.step).ceil() as usize;
    let mut p = seed.clone();
    let mut max_radius = p.radius();
    let mut candidate: Option<(usize, f64)> = None;
    let mut confirmed = 0usize;
    for i in 1..=steps {
        let next = rk4_step(flow, &p, h);
        if !next.is_finite() {
            return Err(Error::Integration {
                last_valid_time: sign * (i - 1) as f64 * opts.step,
            });
        }
        let r_prev = p.radius();
        p = next;
        let r = p.radius();
        max_radius = max_radius.max(r);
        match candidate {
            None => {
                if r > opts.r_escape && sign * p.radial_momentum() > 0.0 {
                    candidate = Some((i, r));
                    confirmed = 0;
                }
            }
            Some((start, _)) => {
                if r > r_prev {
                    confirmed += 1;
                    if confirmed >= opts.confirm_steps {
                        return Ok(Escape {
                            time: Some(start as f64 * opts.step),
                            max_radius,
                        });
                    }
                } else {
                    candidate = None;
                }
            }
        }
    }
    Ok(Escape { time: None, max_radius })
}

/// Escape test for every seed on the energy shell `λ_j = energy`, forward
/// and backward in time. A seed escapes when `|x|` passes `r_escape` moving
/// outward and keeps growing for `confirm_steps` more steps.
pub fn nontrapping_check(
    model: &PotentialModel,
    j: usize,
    energy: f64,
    seeds: &[PhasePoint],
    opts: &NontrapOptions,
    exec: Exec,
) -> Result<Vec<NontrappingVerdict>> {
    let flow = ModeFlow::new(model, j)?;
    for s in seeds {
        check_dim(model, s)?;
        let residual = (flow.symbol(s) - energy).abs();
        if residual > 1e-8 {
            return Err(Error::OffManifold {
                residual,
                tolerance: 1e-8,
            });
        }
    }
    exec.map(seeds, |seed| {
        let fwd = escape_in_direction(&flow, seed, opts, 1.0)?;
        let bwd = escape_in_direction(&flow, seed, opts, -1.0)?;
        Ok(NontrappingVerdict {
            energy,
            escaped: fwd.time.is_some() && bwd.time.is_some(),
            escape_time: fwd.time,
            escape_time_backward: bwd.time,
            max_radius_reached: fwd.max_radius.max(bwd.max_radius),
        })
    })
    .into_iter()
    .collect()
}

/// Contact order of a flow with a hypersurface at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContactOrder {
    /// `H^i γ = 0` for `i ≤ k` and `H^{k+1} γ ≠ 0`.
    Finite(usize),
    /// No non-vanishing derivative up to order `k_max + 1`.
    AtLeast(usize),
}

impl std::fmt::Display for ContactOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ContactOrder::Finite(k) => write!(f, "{k}"),
            ContactOrder::AtLeast(k) => write!(f, ">={k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangencyReport {
    pub point: PhasePoint,
    pub order: ContactOrder,
    /// `H^k γ(p)` for `k = 1, 2, …`, up to the first non-vanishing value
    /// (or up to `k_max + 1`).
    pub derivatives: Vec<f64>,
}

pub const DEFAULT_K_MAX: usize = 8;
pub const DEFAULT_TOL_TANGENCY: f64 = 1e-7;

/// Longest RK4 substep used when sampling `γ` along short arcs.
const ARC_SUBSTEP: f64 = 1e-4;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Central difference for the `k`-th derivative of `g` at 0 with spacing `h`
/// (error `O(h²)`, even in `h`).
fn central_difference(g: &dyn Fn(f64) -> f64, k: usize, h: f64) -> f64 {
    let half = k as f64 / 2.0;
    let mut acc = 0.0;
    for i in 0..=k {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binomial(k, i) * g((half - i as f64) * h);
    }
    acc / h.powi(k as i32)
}

/// Two Richardson levels over spacings `h, h/2, h/4`.
fn richardson_derivative(g: &dyn Fn(f64) -> f64, k: usize, h: f64) -> f64 {
    let d0 = central_difference(g, k, h);
    let d1 = central_difference(g, k, h / 2.0);
    let d2 = central_difference(g, k, h / 4.0);
    let r0 = (4.0 * d1 - d0) / 3.0;
    let r1 = (4.0 * d2 - d1) / 3.0;
    (16.0 * r1 - r0) / 15.0
}

/// Iterated Lie derivatives `H^k γ` along `field`, by Richardson-extrapolated
/// finite differences of `t ↦ γ(φ_t(p))` with spacing `10⁻²/(k+1)`.
pub fn tangency_order_along<F: PhaseField + ?Sized>(
    field: &F,
    gamma: &dyn Fn(&PhasePoint) -> f64,
    p: &PhasePoint,
    k_max: usize,
    tol: f64,
) -> Result<TangencyReport> {
    let g0 = gamma(p);
    if g0.abs() > 1e-9 {
        return Err(Error::OffManifold {
            residual: g0.abs(),
            tolerance: 1e-9,
        });
    }
    let g = |t: f64| gamma(&flow_for(field, p, t, ARC_SUBSTEP));
    let mut derivatives = Vec::new();
    for k in 1..=k_max + 1 {
        let h = 1e-2 / (k + 1) as f64;
        let d = richardson_derivative(&g, k, h);
        derivatives.push(d);
        if d.abs() > tol {
            return Ok(TangencyReport {
                point: p.clone(),
                order: ContactOrder::Finite(k - 1),
                derivatives,
            });
        }
    }
    Ok(TangencyReport {
        point: p.clone(),
        order: ContactOrder::AtLeast(k_max),
        derivatives,
    })
}

/// Contact order of `H_j` with the crossing hypersurface at `p`.
pub fn tangency_order(
    model: &PotentialModel,
    j: usize,
    crossing: &CrossingSpec,
    p: &PhasePoint,
    k_max: usize,
    tol: f64,
) -> Result<TangencyReport> {
    check_dim(model, p)?;
    let flow = ModeFlow::new(model, j)?;
    let gamma = |q: &PhasePoint| (crossing.gamma)(&q.x);
    tangency_order_along(&flow, &gamma, p, k_max, tol)
}

/// True iff the flow line through `p` stays within `tol` of `{γ = 0}` over
/// `[0, horizon]`; distance measured as `|γ| / |∇γ|`.
pub fn flow_invariance_flag(
    model: &PotentialModel,
    j: usize,
    crossing: &CrossingSpec,
    p: &PhasePoint,
    horizon: f64,
    tol: f64,
) -> Result<bool> {
    let traj = integrate_trajectory(model, j, p, horizon, 1e-3)?;
    Ok(traj.samples.iter().all(|(_, q)| {
        let g = (crossing.gamma)(&q.x);
        let grad = (crossing.gradient_gamma)(&q.x);
        let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        g.abs() <= tol * norm.max(f64::MIN_POSITIVE)
    }))
}

pub type PhaseFn = Arc<dyn Fn(&PhasePoint) -> f64 + Send + Sync>;

/// Scalar/trace-free split `Q = φ₀ Id + [[φ₁, φ₂ + iφ₃], [φ₂ − iφ₃, −φ₁]]`
/// of the full symbol `½|ξ|² Id + M(x)` of a 2×2 model.
pub fn symbol_decomposition(model: &PotentialModel) -> Result<[PhaseFn; 4]> {
    if model.matrix_dim != 2 {
        return Err(Error::param("model", "symbol decomposition needs N = 2"));
    }
    let entry = |model: PotentialModel, f: fn(&nalgebra::DMatrix<Complex64>) -> f64| -> PhaseFn {
        Arc::new(move |p: &PhasePoint| f(&model.potential_unchecked(&p.x)))
    };
    let m = model.clone();
    let phi0: PhaseFn = Arc::new(move |p: &PhasePoint| {
        let pot = m.potential_unchecked(&p.x);
        0.5 * p.xi.iter().map(|v| v * v).sum::<f64>() + 0.5 * (pot[(0, 0)].re + pot[(1, 1)].re)
    });
    Ok([
        phi0,
        entry(model.clone(), |m| 0.5 * (m[(0, 0)].re - m[(1, 1)].re)),
        entry(model.clone(), |m| m[(0, 1)].re),
        entry(model.clone(), |m| m[(0, 1)].im),
    ])
}

/// `{f, g} = ∇_ξ f · ∇_x g − ∇_x f · ∇_ξ g` by central differences.
pub fn poisson_bracket(f: &dyn Fn(&PhasePoint) -> f64, g: &dyn Fn(&PhasePoint) -> f64, p: &PhasePoint, h: f64) -> f64 {
    let d = p.dim();
    let partial = |fun: &dyn Fn(&PhasePoint) -> f64, momentum: bool, i: usize| {
        let mut up = p.clone();
        let mut dn = p.clone();
        if momentum {
            up.xi[i] += h;
            dn.xi[i] -= h;
        } else {
            up.x[i] += h;
            dn.x[i] -= h;
        }
        (fun(&up) - fun(&dn)) / (2.0 * h)
    };
    (0..d)
        .map(|i| partial(f, true, i) * partial(g, false, i) - partial(f, false, i) * partial(g, true, i))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NondegeneracyResult {
    pub bracket: f64,
    pub nondegenerate: bool,
}

pub const DEFAULT_TOL_BRACKET: f64 = 1e-6;

/// Evaluates `{φ₀, γ}` at a crossing point `p` (where `φ₁ = φ₂ = φ₃ = 0`).
pub fn nondegeneracy_test(
    phi: &[PhaseFn; 4],
    gamma: &PhaseFn,
    p: &PhasePoint,
    tol_bracket: f64,
) -> Result<NondegeneracyResult> {
    let residual = phi[1..].iter().map(|f| f(p).abs()).fold(0.0, f64::max);
    if residual > 1e-9 {
        return Err(Error::OffManifold {
            residual,
            tolerance: 1e-9,
        });
    }
    let bracket = poisson_bracket(phi[0].as_ref(), gamma.as_ref(), p, 1e-5);
    Ok(NondegeneracyResult {
        bracket,
        nondegenerate: bracket.abs() > tol_bracket,
    })
}
