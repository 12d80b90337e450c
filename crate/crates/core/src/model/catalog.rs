use std::collections::BTreeMap;
use std::f64::consts::{E, PI};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{CrossingSpec, ModeSpec, PotentialModel, DEFAULT_HALF_WIDTH};
use crate::error::{Error, Result};

pub const CATALOG_NAMES: [&str; 5] = [
    "degenerate_k",
    "transverse_crossing",
    "scalar_free",
    "scalar_well",
    "conormal_rotating",
];

fn real2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<Complex64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(a, 0.0),
            Complex64::new(b, 0.0),
            Complex64::new(c, 0.0),
            Complex64::new(d, 0.0),
        ],
    )
}

fn scalar1(v: f64) -> DMatrix<Complex64> {
    DMatrix::from_element(1, 1, Complex64::new(v, 0.0))
}

/// `exp(-1/|t|)`, extended by 0 at `t = 0`.
fn flat_exp(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        (-1.0 / t.abs()).exp()
    }
}

/// `d/dt exp(-1/|t|) = sgn(t) exp(-1/|t|) / t²`, extended by 0 at `t = 0`.
fn flat_exp_derivative(t: f64) -> f64 {
    let e = flat_exp(t);
    if e == 0.0 {
        0.0
    } else {
        t.signum() * e / (t * t)
    }
}

/// Smooth cutoff vanishing on `[0, 1]` and positive outside:
/// `exp(-1/(s-1))` for `s > 1`, `exp(1/s)` for `s < 0`.
pub fn smooth_cutoff(s: f64) -> f64 {
    if s > 1.0 {
        (-1.0 / (s - 1.0)).exp()
    } else if s < 0.0 {
        (1.0 / s).exp()
    } else {
        0.0
    }
}

pub fn smooth_cutoff_derivative(s: f64) -> f64 {
    if s > 1.0 {
        let u = s - 1.0;
        (-1.0 / u).exp() / (u * u)
    } else if s < 0.0 {
        -(1.0 / s).exp() / (s * s)
    } else {
        0.0
    }
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Two-level potential `M = χ(x₂)x₁ Id + exp(-1/|x₁|) V(x₂)` whose
/// projectors rotate with `x₂` at rate `k`. The crossing set is `{x₁ = 0}`
/// and, for `x₂ ∈ [0, 1]`, every force vanishes there.
pub fn degenerate_k(k: f64) -> PotentialModel {
    let plus = ModeSpec {
        name: "plus".into(),
        eigenvalue: Arc::new(|x: &[f64]| smooth_cutoff(x[1]) * x[0] + flat_exp(x[0])),
        gradient_eigenvalue: Arc::new(|x: &[f64]| {
            vec![
                smooth_cutoff(x[1]) + flat_exp_derivative(x[0]),
                smooth_cutoff_derivative(x[1]) * x[0],
            ]
        }),
        projector: Arc::new(move |x: &[f64]| {
            let a = k * PI * x[1];
            real2(
                a.cos().powi(2),
                0.5 * (2.0 * a).sin(),
                0.5 * (2.0 * a).sin(),
                a.sin().powi(2),
            )
        }),
        gradient_projector: Arc::new(move |x: &[f64]| {
            let a = 2.0 * k * PI * x[1];
            let kp = k * PI;
            vec![
                DMatrix::zeros(2, 2),
                real2(-kp * a.sin(), kp * a.cos(), kp * a.cos(), kp * a.sin()),
            ]
        }),
    };
    let minus = ModeSpec {
        name: "minus".into(),
        eigenvalue: Arc::new(|x: &[f64]| smooth_cutoff(x[1]) * x[0] - flat_exp(x[0])),
        gradient_eigenvalue: Arc::new(|x: &[f64]| {
            vec![
                smooth_cutoff(x[1]) - flat_exp_derivative(x[0]),
                smooth_cutoff_derivative(x[1]) * x[0],
            ]
        }),
        projector: Arc::new(move |x: &[f64]| {
            let a = k * PI * x[1];
            real2(
                a.sin().powi(2),
                -0.5 * (2.0 * a).sin(),
                -0.5 * (2.0 * a).sin(),
                a.cos().powi(2),
            )
        }),
        gradient_projector: Arc::new(move |x: &[f64]| {
            let a = 2.0 * k * PI * x[1];
            let kp = k * PI;
            vec![
                DMatrix::zeros(2, 2),
                real2(kp * a.sin(), -kp * a.cos(), -kp * a.cos(), -kp * a.sin()),
            ]
        }),
    };
    PotentialModel {
        label: format!("degenerate_k(k={k})"),
        dim: 2,
        matrix_dim: 2,
        modes: vec![plus, minus],
        crossings: vec![CrossingSpec::coordinate_plane(2, 0, (0, 1))],
        half_width: DEFAULT_HALF_WIDTH,
        params: params(&[("k", k), ("box", DEFAULT_HALF_WIDTH)]),
    }
}

/// `E_± = ±x` with fixed projectors `diag(1,0)`, `diag(0,1)`.
pub fn transverse_crossing() -> PotentialModel {
    let mode = |name: &str, sign: f64, diag: (f64, f64)| ModeSpec {
        name: name.into(),
        eigenvalue: Arc::new(move |x: &[f64]| sign * x[0]),
        gradient_eigenvalue: Arc::new(move |_: &[f64]| vec![sign]),
        projector: Arc::new(move |_: &[f64]| real2(diag.0, 0.0, 0.0, diag.1)),
        gradient_projector: Arc::new(|_: &[f64]| vec![DMatrix::zeros(2, 2)]),
    };
    PotentialModel {
        label: "transverse_crossing".into(),
        dim: 1,
        matrix_dim: 2,
        modes: vec![mode("plus", 1.0, (1.0, 0.0)), mode("minus", -1.0, (0.0, 1.0))],
        crossings: vec![CrossingSpec::coordinate_plane(1, 0, (0, 1))],
        half_width: DEFAULT_HALF_WIDTH,
        params: params(&[("box", DEFAULT_HALF_WIDTH)]),
    }
}

fn scalar_model(label: &str, e: super::ScalarFn, de: super::VectorFn, extra: &[(&str, f64)]) -> PotentialModel {
    let mode = ModeSpec {
        name: "scalar".into(),
        eigenvalue: e,
        gradient_eigenvalue: de,
        projector: Arc::new(|_: &[f64]| scalar1(1.0)),
        gradient_projector: Arc::new(|_: &[f64]| vec![scalar1(0.0)]),
    };
    let mut p = params(extra);
    p.insert("box".into(), DEFAULT_HALF_WIDTH);
    PotentialModel {
        label: label.into(),
        dim: 1,
        matrix_dim: 1,
        modes: vec![mode],
        crossings: Vec::new(),
        half_width: DEFAULT_HALF_WIDTH,
        params: p,
    }
}

/// Free particle, `M ≡ 0`.
pub fn scalar_free() -> PotentialModel {
    scalar_model(
        "scalar_free",
        Arc::new(|_: &[f64]| 0.0),
        Arc::new(|_: &[f64]| vec![0.0]),
        &[],
    )
}

/// Well with bottom 0 at the origin, rim of height `depth` at `|x| = 1`,
/// decaying to 0 at infinity: `E(x) = depth · e · x² exp(-x²)`.
pub fn scalar_well(depth: f64) -> PotentialModel {
    let a = depth * E;
    scalar_model(
        "scalar_well",
        Arc::new(move |x: &[f64]| a * x[0] * x[0] * (-x[0] * x[0]).exp()),
        Arc::new(move |x: &[f64]| {
            let t = x[0];
            vec![a * (2.0 * t - 2.0 * t.powi(3)) * (-t * t).exp()]
        }),
        &[("depth", depth)],
    )
}

/// `E_± = ±x` with eigenvectors rotated by `θ(x) = κx²/2`. The projector
/// gradient `θ'(x) = κx` vanishes on the crossing `{x = 0}`.
pub fn conormal_rotating(kappa: f64) -> PotentialModel {
    let mode = |name: &str, sign: f64| ModeSpec {
        name: name.into(),
        eigenvalue: Arc::new(move |x: &[f64]| sign * x[0]),
        gradient_eigenvalue: Arc::new(move |_: &[f64]| vec![sign]),
        projector: Arc::new(move |x: &[f64]| {
            let t2 = kappa * x[0] * x[0];
            let (s, c) = t2.sin_cos();
            real2(
                0.5 * (1.0 + sign * c),
                0.5 * sign * s,
                0.5 * sign * s,
                0.5 * (1.0 - sign * c),
            )
        }),
        gradient_projector: Arc::new(move |x: &[f64]| {
            let t2 = kappa * x[0] * x[0];
            let dt = kappa * x[0];
            let (s, c) = t2.sin_cos();
            vec![real2(-sign * dt * s, sign * dt * c, sign * dt * c, sign * dt * s)]
        }),
    };
    PotentialModel {
        label: "conormal_rotating".into(),
        dim: 1,
        matrix_dim: 2,
        modes: vec![mode("plus", 1.0), mode("minus", -1.0)],
        crossings: vec![CrossingSpec::coordinate_plane(1, 0, (0, 1))],
        half_width: DEFAULT_HALF_WIDTH,
        params: params(&[("kappa", kappa), ("box", DEFAULT_HALF_WIDTH)]),
    }
}

/// Every built-in scenario with its default parameters.
pub fn builtin_catalog() -> Vec<PotentialModel> {
    vec![
        degenerate_k(0.5),
        transverse_crossing(),
        scalar_free(),
        scalar_well(1.0),
        conormal_rotating(1.0),
    ]
}

/// Builds a catalog model from its name and parameter map. Unknown
/// parameters are rejected; `box` sets the domain half-width.
pub fn model_by_name(name: &str, params: &BTreeMap<String, f64>) -> Result<PotentialModel> {
    let allowed: &[&str] = match name {
        "degenerate_k" => &["k", "box"],
        "scalar_well" => &["depth", "box"],
        "conormal_rotating" => &["kappa", "box"],
        "transverse_crossing" | "scalar_free" => &["box"],
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::param(
            "model.params",
            format!("unknown parameter `{bad}` for model `{name}` (allowed: {allowed:?})"),
        ));
    }
    let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
    let model = match name {
        "degenerate_k" => degenerate_k(get("k", 0.5)),
        "scalar_well" => scalar_well(get("depth", 1.0)),
        "conormal_rotating" => conormal_rotating(get("kappa", 1.0)),
        "transverse_crossing" => transverse_crossing(),
        _ => scalar_free(),
    };
    let half_width = get("box", DEFAULT_HALF_WIDTH);
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(Error::param("model.params.box", "must be a positive number"));
    }
    Ok(model.with_half_width(half_width))
}
