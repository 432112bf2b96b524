//! Functionals on `M = ℝ × ℝ × H¹_r` and their derivatives.
//!
//! With `μ = e^λ` and a target mass `m`:
//!
//! * `F(u) = ½‖∇u‖² − ∫G(u)`
//! * `Î(λ,u) = ½‖∇u‖² + (e^λ/2)‖u‖² − ∫G(u)`
//! * `I(λ,u) = Î(λ,u) − (e^λ/2)m`
//! * `P(λ,u) = (N−2)/2 ‖∇u‖² + N((e^λ/2)‖u‖² − ∫G(u))`
//! * `J(θ,λ,u) = I(λ, u(x/e^θ))`
//!
//! Everything is computed from the discrete norms of a [`Profile`]. The
//! dilation in `J` enters only through the exact scaling of those norms,
//! so `J` and its partial derivatives are consistent to rounding.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Profile;
use crate::nonlin::Nonlinearity;
use crate::numerics::SymBanded;

/// A point `(θ, λ, u)` of the augmented space.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPoint {
    pub theta: f64,
    pub lambda: f64,
    pub u: Profile,
}

impl AugmentedPoint {
    pub fn new(theta: f64, lambda: f64, u: Profile) -> Self {
        Self { theta, lambda, u }
    }

    /// Same point with `u ↦ −u`.
    pub fn mirrored(&self) -> Self {
        Self {
            theta: self.theta,
            lambda: self.lambda,
            u: self.u.scaled(-1.0),
        }
    }
}

/// Energies at `(θ, λ, u)`. `F`, `Ihat`, `I`, `P` and `mass` refer to the
/// dilated profile `u(x/e^θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub theta: f64,
    pub lambda: f64,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "Ihat")]
    pub ihat: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "P")]
    pub p: f64,
    pub mass: f64,
    pub m: f64,
    pub grad_sq: f64,
    pub potential: f64,
}

impl EnergyReport {
    pub const CSV_HEADER: &'static str = "theta,lambda,F,Ihat,I,J,P,mass";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.theta, self.lambda, self.f, self.ihat, self.i, self.j, self.p, self.mass
        )
    }
}

/// Scaled norms of `u(x/e^θ)`: `(‖∇·‖², ‖·‖², ∫G)`.
#[derive(Debug, Clone, Copy)]
struct Parts {
    grad_sq: f64,
    mass: f64,
    potential: f64,
}

fn check_finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation(what.to_string()))
    }
}

fn parts(theta: f64, u: &Profile, nl: &Nonlinearity) -> Result<Parts> {
    let n = u.dim() as f64;
    let sg = ((n - 2.0) * theta).exp();
    let sm = (n * theta).exp();
    let g_int: Vec<f64> = u.values.iter().map(|&v| nl.big_g(v)).collect();
    Ok(Parts {
        grad_sq: check_finite(sg * u.grad_sq(), "gradient energy")?,
        mass: check_finite(sm * u.mass(), "mass")?,
        potential: check_finite(sm * u.grid.integrate(&g_int), "potential integral of G")?,
    })
}

/// All functionals at `pt` in one pass.
pub fn energies(pt: &AugmentedPoint, nl: &Nonlinearity, m: f64) -> Result<EnergyReport> {
    if !pt.theta.is_finite() || !pt.lambda.is_finite() {
        return Err(Error::Domain("theta and lambda must be finite".into()));
    }
    let q = parts(pt.theta, &pt.u, nl)?;
    let mu = pt.lambda.exp();
    let n = pt.u.dim() as f64;
    let f = 0.5 * q.grad_sq - q.potential;
    let ihat = f + 0.5 * mu * q.mass;
    let i = ihat - 0.5 * mu * m;
    let p = n * (i + 0.5 * m * mu) - q.grad_sq;
    let j = i;
    let rep = EnergyReport {
        theta: pt.theta,
        lambda: pt.lambda,
        f,
        ihat,
        i,
        j,
        p,
        mass: q.mass,
        m,
        grad_sq: q.grad_sq,
        potential: q.potential,
    };
    check_finite(rep.ihat + rep.p, "energies")?;
    Ok(rep)
}

/// `P(λ,u)` from its defining formula, without passing through `I`.
pub fn pohozaev(lambda: f64, u: &Profile, nl: &Nonlinearity) -> Result<f64> {
    let q = parts(0.0, u, nl)?;
    let n = u.dim() as f64;
    Ok(0.5 * (n - 2.0) * q.grad_sq + n * (0.5 * lambda.exp() * q.mass - q.potential))
}

/// `‖∇u‖² + e^λ‖u‖² − ∫g(u)u`.
pub fn nehari(lambda: f64, u: &Profile, nl: &Nonlinearity) -> f64 {
    let gu: Vec<f64> = u.values.iter().map(|&v| nl.g(v) * v).collect();
    u.grad_sq() + lambda.exp() * u.mass() - u.grid.integrate(&gu)
}

/// A tangent vector `(α, ν, h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub alpha: f64,
    pub nu: f64,
    pub h: Profile,
}

impl Tangent {
    pub fn negated(&self) -> Tangent {
        Tangent {
            alpha: -self.alpha,
            nu: -self.nu,
            h: self.h.scaled(-1.0),
        }
    }
}

/// `sqrt(α² + ν² + e^{(N−2)θ}‖∇h‖² + e^{Nθ}‖h‖²)`.
pub fn metric_norm(theta: f64, t: &Tangent) -> f64 {
    let n = t.h.dim() as f64;
    (t.alpha * t.alpha
        + t.nu * t.nu
        + ((n - 2.0) * theta).exp() * t.h.grad_sq()
        + (n * theta).exp() * t.h.mass())
    .sqrt()
}

/// Partial derivatives of `J` at a point.
#[derive(Debug, Clone)]
pub struct Differential {
    pub d_theta: f64,
    pub d_lambda: f64,
    /// `∂_uJ` as a covector on the free nodes: `∂_uJ·h = Σ cᵢhᵢ`.
    pub covector: Vec<f64>,
    /// Riesz representative of `∂_uJ` in the metric at `θ`.
    pub riesz: Profile,
    /// `‖∂_uJ‖_*`.
    pub u_dual_norm: f64,
    /// Full dual norm `sqrt(∂_θJ² + ∂_λJ² + ‖∂_uJ‖_*²)`.
    pub dual_norm: f64,
}

impl Differential {
    /// Pairing of the differential with a tangent vector.
    pub fn apply(&self, t: &Tangent) -> f64 {
        self.d_theta * t.alpha
            + self.d_lambda * t.nu
            + self.covector.iter().zip(&t.h.values).map(|(c, h)| c * h).sum::<f64>()
    }

    /// The metric gradient `(∂_θJ, ∂_λJ, riesz)`.
    pub fn gradient(&self) -> Tangent {
        Tangent {
            alpha: self.d_theta,
            nu: self.d_lambda,
            h: self.riesz.clone(),
        }
    }
}

/// `e^{(N−2)θ}A + e^{Nθ}W` restricted to the free nodes.
pub fn metric_matrix(theta: f64, u: &Profile) -> SymBanded {
    let grid = &u.grid;
    let n = grid.dim() as f64;
    let k = grid.unknowns();
    let mut mat = grid.stiffness().truncated(k).combine(((n - 2.0) * theta).exp(), &SymBanded::zeros(k, 0), 0.0);
    let w: Vec<f64> = grid.weights()[..k].iter().map(|w| w * (n * theta).exp()).collect();
    mat.add_diagonal(&w);
    mat
}

/// Solves `M_θ v = c` on the free nodes.
pub fn riesz_solve(theta: f64, u: &Profile, c: &[f64]) -> Result<Vec<f64>> {
    let chol = metric_matrix(theta, u)
        .cholesky()
        .ok_or_else(|| Error::Evaluation("metric matrix is not positive definite".into()))?;
    Ok(chol.solve(c))
}

/// `∂_uJ` covector at `(θ, λ, u)`.
pub fn u_covector(theta: f64, lambda: f64, u: &Profile, nl: &Nonlinearity) -> Vec<f64> {
    let grid = &u.grid;
    let n = grid.dim() as f64;
    let k = grid.unknowns();
    let mu = lambda.exp();
    let au = grid.stiffness().matvec(&u.values);
    let sg = ((n - 2.0) * theta).exp();
    let sm = (n * theta).exp();
    (0..k)
        .map(|i| {
            let v = u.values[i];
            sg * au[i] + sm * grid.weights()[i] * (mu * v - nl.g(v))
        })
        .collect()
}

pub fn differential(pt: &AugmentedPoint, nl: &Nonlinearity, m: f64) -> Result<Differential> {
    let rep = energies(pt, nl, m)?;
    let mu = pt.lambda.exp();
    let d_theta = rep.p;
    let d_lambda = 0.5 * mu * (rep.mass - m);
    let covector = u_covector(pt.theta, pt.lambda, &pt.u, nl);
    if covector.iter().any(|c| !c.is_finite()) {
        return Err(Error::Evaluation("u-differential".into()));
    }
    let mut v = riesz_solve(pt.theta, &pt.u, &covector)?;
    let u_sq: f64 = covector.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().max(0.0);
    v.push(0.0);
    let riesz = Profile {
        grid: pt.u.grid.clone(),
        values: v,
    };
    Ok(Differential {
        d_theta,
        d_lambda,
        covector,
        riesz,
        u_dual_norm: u_sq.sqrt(),
        dual_norm: (d_theta * d_theta + d_lambda * d_lambda + u_sq).sqrt(),
    })
}

/// Criticality residuals of `I` at `(λ, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PSPResidual {
    /// `|∂_λI| = (e^λ/2)|‖u‖² − m|`.
    #[serde(rename = "dI_dlambda")]
    pub di_dlambda: f64,
    /// `‖∂_uI‖` in the dual of `H¹`.
    pub grad_u_norm: f64,
    /// `|P(λ,u)|`.
    pub pohozaev: f64,
    /// `I(λ,u)`, signed.
    pub level: f64,
}

impl PSPResidual {
    pub fn max_residual(&self) -> f64 {
        self.di_dlambda.max(self.grad_u_norm).max(self.pohozaev)
    }
}

pub fn psp_residual(lambda: f64, u: &Profile, nl: &Nonlinearity, m: f64) -> Result<PSPResidual> {
    let d = differential(&AugmentedPoint::new(0.0, lambda, u.clone()), nl, m)?;
    let rep = energies(&AugmentedPoint::new(0.0, lambda, u.clone()), nl, m)?;
    Ok(PSPResidual {
        di_dlambda: d.d_lambda.abs(),
        grad_u_norm: d.u_dual_norm,
        pohozaev: d.d_theta.abs(),
        level: rep.i,
    })
}

/// Verdict on a sequence `(λₙ, uₙ)` of approximate critical points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompactnessDiagnosis {
    pub residuals_vanish: bool,
    pub level_limit: f64,
    /// Smallest distance in `ℝ × H¹` between two entries of the tail half.
    pub tail_separation: f64,
    pub lambda_unbounded: bool,
    pub profile_vanishes: bool,
    /// Residuals and level converge but the tail has no Cauchy pair.
    pub non_compact: bool,
}

/// Inspects a PSP sequence. `tol` is the threshold for "vanishing".
pub fn diagnose_sequence(
    points: &[(f64, Profile)],
    residuals: &[PSPResidual],
    tol: f64,
) -> Result<CompactnessDiagnosis> {
    if points.len() != residuals.len() || points.len() < 4 {
        return Err(Error::Domain("diagnosis needs at least four matched points".into()));
    }
    let n = points.len();
    let tail = &points[n / 2..];
    let last = residuals[n - 1];
    let decreasing = residuals
        .windows(2)
        .all(|w| w[1].max_residual() <= w[0].max_residual() * (1.0 + 1e-12) + f64::MIN_POSITIVE);
    let residuals_vanish = decreasing && last.max_residual() < tol;
    let mut sep = f64::INFINITY;
    for a in 0..tail.len() {
        for b in a + 1..tail.len() {
            let du = tail[a].1.axpy(-1.0, &tail[b].1)?;
            let h1 = du.grad_sq() + du.mass();
            let dl = tail[a].0 - tail[b].0;
            sep = sep.min((dl * dl + h1).sqrt());
        }
    }
    let lams: Vec<f64> = points.iter().map(|p| p.0.abs()).collect();
    let lambda_unbounded = lams.windows(2).all(|w| w[1] > w[0]) && lams[n - 1] - lams[n / 2] >= 1.0;
    let profile_vanishes = tail.iter().all(|p| (p.1.grad_sq() + p.1.mass()).sqrt() < tol);
    let non_compact = residuals_vanish && last.level.abs() < tol && sep >= 0.5;
    Ok(CompactnessDiagnosis {
        residuals_vanish,
        level_limit: last.level,
        tail_separation: sep,
        lambda_unbounded,
        profile_vanishes,
        non_compact,
    })
}

/// Rescales `u` onto `‖∇v‖² + (e^λ−C)‖v‖² = δ‖v‖_{p+1}^{p+1}` along its
/// ray. Returns `None` when the ray never meets the set.
pub fn nehari_type_scaling(lambda: f64, u: &Profile, c_delta: f64, delta: f64) -> Option<f64> {
    let p = 1.0 + 4.0 / u.dim() as f64;
    let quad = u.grad_sq() + (lambda.exp() - c_delta) * u.mass();
    let top = u.lebesgue_integral(p + 1.0);
    if !(quad > 0.0) || !(top > 0.0) {
        return None;
    }
    Some((quad / (delta * top)).powf(1.0 / (p - 1.0)))
}

/// Lower bound `δ^{−2/(p−1)}(e^λ − C_δ)E₀`.
pub fn envelope_lower_bound(lambda: f64, dim: usize, c_delta: f64, delta: f64, e0: f64) -> f64 {
    let p = 1.0 + 4.0 / dim as f64;
    delta.powf(-2.0 / (p - 1.0)) * (lambda.exp() - c_delta) * e0
}

/// One sampled ray of the lower estimate: `(Î(λ, t·u), bound)` with `t·u`
/// on the Nehari-type set.
pub fn lower_estimate_on_ray(
    lambda: f64,
    u: &Profile,
    nl: &Nonlinearity,
    delta: f64,
    e0: f64,
) -> Result<Option<(f64, f64)>> {
    let c = nl.envelope_constant(delta)?;
    if lambda.exp() < c + 1.0 {
        return Ok(None);
    }
    let Some(t) = nehari_type_scaling(lambda, u, c, delta) else {
        return Ok(None);
    };
    let v = u.scaled(t);
    let rep = energies(&AugmentedPoint::new(0.0, lambda, v), nl, 0.0)?;
    Ok(Some((rep.ihat, envelope_lower_bound(lambda, u.dim(), c, delta, e0))))
}

/// The region `Ω_m` and the lower bound `B_m` of `I` on its boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaRegion {
    pub m: f64,
    pub dim: usize,
    pub e0: f64,
    pub delta_m: f64,
    pub c_delta: f64,
    pub lambda_m: f64,
}

/// Margin in `δ_m^{−2/(p−1)}E₀ = (1 + margin)·m/2`.
pub const DELTA_MARGIN: f64 = 0.1;

impl OmegaRegion {
    pub fn new(nl: &Nonlinearity, m: f64, e0: f64) -> Result<Self> {
        if !(m > 0.0) || !(e0 > 0.0) {
            return Err(Error::Domain("Omega_m needs m > 0 and E0 > 0".into()));
        }
        let dim = nl.dim;
        let p = nl.critical_exponent();
        let delta_m = ((1.0 + DELTA_MARGIN) * 0.5 * m / e0).powf(-(p - 1.0) / 2.0);
        let c_delta = nl.envelope_constant(delta_m)?;
        Ok(Self {
            m,
            dim,
            e0,
            delta_m,
            c_delta,
            lambda_m: (c_delta + 1.0).ln(),
        })
    }

    fn quad_gap(&self, lambda: f64, u: &Profile) -> f64 {
        let p = 1.0 + 4.0 / self.dim as f64;
        u.grad_sq() + (lambda.exp() - self.c_delta) * u.mass() - self.delta_m * u.lebesgue_integral(p + 1.0)
    }

    /// Closure membership test.
    pub fn contains(&self, lambda: f64, u: &Profile) -> bool {
        lambda >= self.lambda_m && self.quad_gap(lambda, u) >= 0.0
    }

    /// Closed-form lower bound of `I` on `∂Ω_m`.
    pub fn lower_bound(&self) -> f64 {
        let p = 1.0 + 4.0 / self.dim as f64;
        let k = self.delta_m.powf(-2.0 / (p - 1.0)) * self.e0;
        // on the Nehari-type part: k(e^λ − C) − e^λ m/2 is increasing in λ
        let mu_m = self.lambda_m.exp();
        let c0 = k * (mu_m - self.c_delta) - 0.5 * mu_m * self.m;
        let c1 = -0.5 * mu_m * self.m;
        c0.min(c1)
    }

    /// Projects the ray through `(λ, u)` onto `∂Ω_m`: on the Nehari-type
    /// part when `λ ≥ λ_m`, otherwise on the `λ = λ_m` slice.
    pub fn boundary_point(&self, lambda: f64, u: &Profile) -> Option<(f64, Profile)> {
        if lambda >= self.lambda_m {
            let t = nehari_type_scaling(lambda, u, self.c_delta, self.delta_m)?;
            Some((lambda, u.scaled(t)))
        } else {
            let t = nehari_type_scaling(self.lambda_m, u, self.c_delta, self.delta_m)?;
            Some((self.lambda_m, u.scaled(0.5 * t)))
        }
    }
}
