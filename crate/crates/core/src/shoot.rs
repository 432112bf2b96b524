//! Radial bound states of `−u″ − ((N−1)/r)u′ + e^λ u = g(u)`.
//!
//! Shooting in the initial height `s = u(0)` brackets a state with a given
//! number of interior zeros. The bracketed trajectory is sampled on the
//! grid, completed by its exponential tail, and then polished by Newton's
//! method on the discrete Euler–Lagrange system
//! `A u + W(μu − g(u)) = 0`. The discrete system is the exact gradient of
//! the discrete `Î`, so the Nehari identity holds to solver precision and
//! the Pohozaev identity to discretization accuracy.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{energies, nehari, AugmentedPoint};
use crate::error::{Error, Result};
use crate::grid::{default_rmax, make_grid, Norm, Profile, RadialGrid};
use crate::nonlin::{log_lattice, Nonlinearity};
use crate::numerics::{bracketed_root, Banded, BandedCholesky};
use crate::ode::{State, Stepper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Decay,
    /// Escape to `±∞` after a turning point, with the sign of `u`.
    Blowup(i8),
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShotOutcome {
    pub classification: Classification,
    pub node_count: usize,
    pub exit_radius: f64,
}

/// How the grid for a bound state is chosen.
#[derive(Debug, Clone)]
pub enum GridPolicy {
    Fixed(Arc<RadialGrid>),
    /// `R = lengths/√μ` with `n` nodes.
    DecayScaled { lengths: f64, n: usize },
}

impl GridPolicy {
    pub fn grid_for(&self, dim: usize, lambda: f64) -> Result<Arc<RadialGrid>> {
        match self {
            GridPolicy::Fixed(g) => {
                if g.dim() != dim {
                    return Err(Error::GridMismatch(format!("grid is {}-dimensional, problem is {dim}", g.dim())));
                }
                Ok(Arc::clone(g))
            }
            GridPolicy::DecayScaled { lengths, n } => make_grid(dim, lengths / lambda.exp().sqrt(), *n),
        }
    }
}

pub const DEFAULT_NODES: usize = 4001;

#[derive(Debug, Clone)]
pub struct ShootOptions {
    pub ode_tol: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub grid: GridPolicy,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            ode_tol: 1e-12,
            newton_tol: 1e-12,
            max_newton: 60,
            grid: GridPolicy::DecayScaled {
                lengths: crate::grid::DECAY_LENGTHS,
                n: DEFAULT_NODES,
            },
        }
    }
}

impl ShootOptions {
    pub fn with_grid(grid: Arc<RadialGrid>) -> Self {
        Self {
            grid: GridPolicy::Fixed(grid),
            ..Self::default()
        }
    }
}

/// One solution on a branch `λ ↦ u_λ`.
#[derive(Debug, Clone)]
pub struct BranchSample {
    pub lambda: f64,
    pub k: usize,
    pub u: Profile,
    pub ihat: f64,
    pub mass: f64,
    /// `|P(λ,u)|`.
    pub pohozaev_residual: f64,
    /// `|‖∇u‖² + e^λ‖u‖² − ∫g(u)u|`.
    pub nehari_residual: f64,
    pub u0: f64,
}

impl BranchSample {
    pub const CSV_HEADER: &'static str = "lambda,k,u0,Ihat,mass,pohozaev_residual";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.lambda, self.k, self.u0, self.ihat, self.mass, self.pohozaev_residual
        )
    }

    /// `|P|/(1 + |Î|)`.
    pub fn scaled_pohozaev(&self) -> f64 {
        self.pohozaev_residual / (1.0 + self.ihat.abs())
    }

    /// Nehari residual over `‖u‖²_{H¹}`.
    pub fn scaled_nehari(&self) -> f64 {
        let h1 = self.u.grad_sq() + self.u.mass();
        if h1 == 0.0 {
            0.0
        } else {
            self.nehari_residual / h1
        }
    }

    pub fn accepted(&self, tol: f64) -> bool {
        self.scaled_pohozaev() <= tol && self.scaled_nehari() <= tol
    }

    fn from_profile(nl: &Nonlinearity, lambda: f64, k: usize, u: Profile) -> Result<Self> {
        let rep = energies(&AugmentedPoint::new(0.0, lambda, u.clone()), nl, 0.0)?;
        let p = crate::energy::pohozaev(lambda, &u, nl)?;
        Ok(Self {
            lambda,
            k,
            ihat: rep.ihat,
            mass: rep.mass,
            pohozaev_residual: p.abs(),
            nehari_residual: nehari(lambda, &u, nl).abs(),
            u0: u.values[0],
            u,
        })
    }
}

struct Shooter<'a> {
    nl: &'a Nonlinearity,
    dim: f64,
    mu: f64,
    tol: f64,
    xi_star: f64,
}

enum Phase {
    Approaching,
    Receding,
}

struct Run {
    outcome: ShotOutcome,
    samples: Vec<f64>,
}

impl<'a> Shooter<'a> {
    fn new(nl: &'a Nonlinearity, lambda: f64, tol: f64) -> Result<Self> {
        let mu = lambda.exp();
        let xi_star = linear_crossover(nl, mu)?;
        Ok(Self {
            nl,
            dim: nl.dim as f64,
            mu,
            tol,
            xi_star,
        })
    }

    fn rhs(&self, r: f64, y: &State) -> State {
        [y[1], -(self.dim - 1.0) / r * y[1] + self.mu * y[0] - self.nl.g(y[0])]
    }

    /// Series start `u = s + c r² + d r⁴`.
    fn series(&self, s: f64, r: f64) -> State {
        let f = self.mu * s - self.nl.g(s);
        let c = f / (2.0 * self.dim);
        let d = (self.mu - self.nl.dg(s)) * c / (4.0 * self.dim + 8.0);
        [s + c * r * r + d * r.powi(4), 2.0 * c * r + 4.0 * d * r.powi(3)]
    }

    /// Integrates from the origin. Stops once `stop_nodes` zeros are seen,
    /// on escape, decay, or at the radial limit. When `radii` is given,
    /// the solution is recorded there until the run stops.
    fn run(&self, s: f64, stop_nodes: usize, radii: Option<&[f64]>) -> Run {
        let sq = self.mu.sqrt();
        let r_limit = 100.0 / sq;
        let window = 6.0 / sq;
        let blow = 10.0 * s.abs().max(self.xi_star);
        let curv = (self.mu + self.nl.dg(s).abs()).sqrt();
        let r0 = (1e-3 / curv).min(1e-3 / sq);
        let mut samples = Vec::new();
        let mut next = 0usize;
        if let Some(rs) = radii {
            while next < rs.len() && rs[next] <= r0 {
                samples.push(self.series(s, rs[next])[0]);
                next += 1;
            }
        }
        let outcome = |classification, nodes, r| ShotOutcome {
            classification,
            node_count: nodes,
            exit_radius: r,
        };
        let f0 = self.mu * s - self.nl.g(s);
        if s == 0.0 || f0 * s >= 0.0 {
            // |u| has a minimum at the origin
            return Run {
                outcome: outcome(Classification::Blowup(if s >= 0.0 { 1 } else { -1 }), 0, 0.0),
                samples,
            };
        }
        let mut y = self.series(s, r0);
        let mut r = r0;
        let mut stepper = Stepper::new(self.tol, self.tol * 1e-3 * s.abs(), r0);
        let mut f = |t: f64, y: &State| self.rhs(t, y);
        let mut nodes = 0usize;
        let mut phase = Phase::Approaching;
        let mut decay_since: Option<f64> = None;
        let sign = |v: f64| if v >= 0.0 { 1i8 } else { -1i8 };
        loop {
            let target = match radii {
                Some(rs) if next < rs.len() => rs[next].min(r_limit),
                _ => r_limit,
            };
            let prev = y;
            let Some(rn) = stepper.step(&mut f, r, &mut y, target) else {
                return Run {
                    outcome: outcome(Classification::Undetermined, nodes, r),
                    samples,
                };
            };
            r = rn;
            if let Some(rs) = radii {
                if next < rs.len() && r >= rs[next] {
                    samples.push(y[0]);
                    next += 1;
                }
            }
            if prev[0] != 0.0 && y[0].signum() != prev[0].signum() {
                nodes += 1;
                phase = Phase::Receding;
                decay_since = None;
                if nodes >= stop_nodes {
                    return Run {
                        outcome: outcome(Classification::Undetermined, nodes, r),
                        samples,
                    };
                }
            }
            let moving_away = y[0] * y[1] > 0.0;
            match phase {
                Phase::Receding if !moving_away => phase = Phase::Approaching,
                Phase::Approaching if moving_away => {
                    return Run {
                        outcome: outcome(Classification::Blowup(sign(y[0])), nodes, r),
                        samples,
                    };
                }
                _ => {}
            }
            if y[0].abs() > blow {
                return Run {
                    outcome: outcome(Classification::Blowup(sign(y[0])), nodes, r),
                    samples,
                };
            }
            let env = s.abs() * (-0.5 * sq * r).exp();
            if y[0].abs() <= env && y[1].abs() <= sq * env && matches!(phase, Phase::Approaching) {
                let start = *decay_since.get_or_insert(r);
                if r - start >= window {
                    return Run {
                        outcome: outcome(Classification::Decay, nodes, start),
                        samples,
                    };
                }
            } else {
                decay_since = None;
            }
            if r >= r_limit {
                return Run {
                    outcome: outcome(Classification::Undetermined, nodes, r),
                    samples,
                };
            }
        }
    }
}

/// Smallest `ξ > 0` with `g(ξ) = μξ`; shots below it escape at once.
fn linear_crossover(nl: &Nonlinearity, mu: f64) -> Result<f64> {
    let lat = log_lattice(4000, 1e-10, 1e10);
    let h = |x: f64| nl.g(x) - mu * x;
    let idx = lat.iter().position(|&x| h(x) > 0.0).ok_or_else(|| Error::BracketNotFound {
        nodes: 0,
        s_lo: 1e-10,
        s_hi: 1e10,
    })?;
    if idx == 0 {
        return Ok(lat[0]);
    }
    bracketed_root(h, lat[idx - 1], lat[idx], 1e-15, 200).ok_or_else(|| Error::Evaluation("crossover root".into()))
}

/// Shoots from `u(0) = s`, `u′(0) = 0`.
pub fn shoot(nl: &Nonlinearity, lambda: f64, s: f64) -> Result<ShotOutcome> {
    shoot_with_tol(nl, lambda, s, ShootOptions::default().ode_tol)
}

pub fn shoot_with_tol(nl: &Nonlinearity, lambda: f64, s: f64, tol: f64) -> Result<ShotOutcome> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("initial height must be positive (got {s})")));
    }
    if !lambda.is_finite() {
        return Err(Error::Domain("lambda must be finite".into()));
    }
    let sh = Shooter::new(nl, lambda, tol)?;
    Ok(sh.run(s, 64, None).outcome)
}

fn too_many(sh: &Shooter, s: f64, k: usize) -> bool {
    sh.run(s, k + 1, None).outcome.node_count > k
}

/// Brackets the initial height of the `k`-node state: `(lo, hi)` with at
/// most `k` zeros at `lo` and more at `hi`.
pub fn bracket_height(nl: &Nonlinearity, lambda: f64, k: usize, tol: f64) -> Result<(f64, f64)> {
    let sh = Shooter::new(nl, lambda, tol)?;
    let s_start = sh.xi_star * (1.0 + 1e-9);
    let mut lo = s_start;
    let mut hi = None;
    let mut s = s_start;
    for _ in 0..800 {
        s *= 1.05;
        if too_many(&sh, s, k) {
            hi = Some(s);
            break;
        }
        lo = s;
    }
    let mut hi = hi.ok_or(Error::BracketNotFound {
        nodes: k,
        s_lo: s_start,
        s_hi: s,
    })?;
    while (hi - lo) > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if too_many(&sh, mid, k) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

/// Samples the bracketed trajectory on `grid` and attaches the tail.
fn initial_profile(nl: &Nonlinearity, lambda: f64, k: usize, lo: f64, hi: f64, grid: &Arc<RadialGrid>, tol: f64) -> Result<Profile> {
    let sh = Shooter::new(nl, lambda, tol)?;
    let r = grid.nodes();
    let a = sh.run(lo, usize::MAX, Some(r)).samples;
    let b = sh.run(hi, usize::MAX, Some(r)).samples;
    let len = a.len().min(b.len());
    let mut cut = (0..len).find(|&i| (a[i] - b[i]).abs() > 1e-7 * lo).unwrap_or(len);
    // Both shots share the integration error, which can carry them through
    // a spurious zero or back up the tail before they separate.
    let mut crossings = 0;
    let mut peaked = k == 0;
    for i in 1..cut {
        if a[i] * a[i - 1] < 0.0 {
            crossings += 1;
        }
        let shrinking = a[i].abs() < a[i - 1].abs();
        if crossings == k && shrinking {
            peaked = true;
        }
        let regrowing = peaked && !shrinking && a[i].abs() < 1e-3 * lo;
        if crossings > k || regrowing {
            cut = i;
            break;
        }
    }
    // stay on the part where |u| still decreases
    while cut > 2 && a[cut - 1].abs() > a[cut - 2].abs() && a[cut - 2] * a[cut - 1] > 0.0 {
        cut -= 1;
    }
    if cut < 4 {
        return Err(Error::BracketNotFound {
            nodes: k,
            s_lo: lo,
            s_hi: hi,
        });
    }
    let sq = lambda.exp().sqrt();
    let dim = nl.dim as f64;
    let ic = cut - 1;
    let (rc, uc) = (r[ic], a[ic]);
    let mut values = vec![0.0; r.len()];
    for i in 0..r.len() - 1 {
        values[i] = if i <= ic {
            a[i]
        } else {
            uc * (r[i] / rc).powf(-(dim - 1.0) / 2.0) * (-sq * (r[i] - rc)).exp()
        };
    }
    Profile::new(Arc::clone(grid), values)
}

fn residual(nl: &Nonlinearity, mu: f64, u: &Profile) -> Vec<f64> {
    let grid = &u.grid;
    let au = grid.stiffness().matvec(&u.values);
    (0..grid.unknowns())
        .map(|i| au[i] + grid.weights()[i] * (mu * u.values[i] - nl.g(u.values[i])))
        .collect()
}

fn dual_norm(chol: &BandedCholesky, r: &[f64]) -> f64 {
    let v = chol.solve(r);
    v.iter().zip(r).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}

/// Newton's method on `A u + W(μu − g(u)) = 0` with backtracking on the
/// `H¹`-dual residual. Returns the polished profile and the final residual.
pub fn polish(nl: &Nonlinearity, lambda: f64, guess: &Profile, tol: f64, max_iter: usize) -> Result<(Profile, f64)> {
    let mu = lambda.exp();
    let grid = Arc::clone(&guess.grid);
    let k = grid.unknowns();
    let chol = crate::energy::metric_matrix(0.0, guess)
        .cholesky()
        .ok_or_else(|| Error::Evaluation("H1 Gram matrix".into()))?;
    let mut u = guess.clone();
    u.values[k] = 0.0;
    let mut res = residual(nl, mu, &u);
    let mut rn = dual_norm(&chol, &res);
    let mut stall = 0;
    for it in 0..max_iter {
        let scale = 1.0 + u.norm(Norm::H1)?;
        if rn <= tol * scale {
            return Ok((u, rn));
        }
        let stiff = grid.stiffness().truncated(k);
        let mut jac: Banded = stiff.to_general();
        for i in 0..k {
            let d = jac.get(i, i) + grid.weights()[i] * (mu - nl.dg(u.values[i]));
            jac.set(i, i, d);
        }
        let step = jac.solve(&res).ok_or(Error::PolishDivergence {
            residual: rn,
            iterations: it,
        })?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = u.clone();
            for i in 0..k {
                trial.values[i] -= t * step[i];
            }
            let tr = residual(nl, mu, &trial);
            let tn = dual_norm(&chol, &tr);
            if tn.is_finite() && tn < rn * (1.0 - 1e-4 * t) {
                stall = if tn > 0.5 * rn { stall + 1 } else { 0 };
                u = trial;
                res = tr;
                rn = tn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || stall > 8 {
            // rounding floor
            if rn <= 1e4 * tol * scale {
                return Ok((u, rn));
            }
            return Err(Error::PolishDivergence {
                residual: rn,
                iterations: it,
            });
        }
    }
    let scale = 1.0 + u.norm(Norm::H1)?;
    if rn <= 1e4 * tol * scale {
        return Ok((u, rn));
    }
    Err(Error::PolishDivergence {
        residual: rn,
        iterations: max_iter,
    })
}

fn check_state(nl: &Nonlinearity, lambda: f64, k: usize, u: Profile) -> Result<BranchSample> {
    let amp = u.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if amp < 1e-8 {
        return Err(Error::PolishDivergence {
            residual: f64::NAN,
            iterations: 0,
        });
    }
    if u.node_count() != k {
        // the bracket collapsed onto a state with a different nodal pattern
        return Err(Error::BracketNotFound {
            nodes: k,
            s_lo: u.values[0],
            s_hi: u.values[0],
        });
    }
    BranchSample::from_profile(nl, lambda, k, u)
}

/// The radial state with exactly `k` interior zeros, normalized to
/// `u(0) > 0`.
pub fn find_bound_state(nl: &Nonlinearity, lambda: f64, k: usize, opts: &ShootOptions) -> Result<BranchSample> {
    if let Some(l0) = nl.lambda0()?.finite() {
        if lambda >= l0 {
            return Err(Error::Domain(format!("lambda = {lambda} is not below lambda0 = {l0}")));
        }
    }
    let grid = opts.grid.grid_for(nl.dim, lambda)?;
    let (lo, hi) = bracket_height(nl, lambda, k, opts.ode_tol)?;
    let guess = initial_profile(nl, lambda, k, lo, hi, &grid, opts.ode_tol)?;
    let (u, _) = polish(nl, lambda, &guess, opts.newton_tol, opts.max_newton)?;
    check_state(nl, lambda, k, u)
}

/// Moves a solution to a nearby `λ`: profile rescaled as for a pure power
/// of exponent `q` (when given), then polished. Falls back to shooting.
pub fn continue_branch(
    nl: &Nonlinearity,
    prev: &BranchSample,
    lambda: f64,
    q: Option<f64>,
    opts: &ShootOptions,
) -> Result<BranchSample> {
    let ratio = (lambda - prev.lambda).exp();
    let theta = -0.5 * ratio.ln();
    let amp = q.map(|q| ratio.powf(1.0 / (q - 1.0))).unwrap_or(1.0);
    let attempt = prev.u.dilate(theta).and_then(|v| {
        let (u, _) = polish(nl, lambda, &v.scaled(amp), opts.newton_tol, opts.max_newton)?;
        check_state(nl, lambda, prev.k, u)
    });
    match attempt {
        Ok(s) => Ok(s),
        Err(_) => {
            let o = ShootOptions {
                grid: GridPolicy::Fixed(Arc::clone(&prev.u.grid)),
                ..opts.clone()
            };
            find_bound_state(nl, lambda, prev.k, &o)
        }
    }
}

/// Independent solves over `lambdas`, merged in input order.
pub fn branch_sweep(nl: &Nonlinearity, lambdas: &[f64], k: usize, opts: &ShootOptions) -> Vec<Result<BranchSample>> {
    lambdas.par_iter().map(|&l| find_bound_state(nl, l, k, opts)).collect()
}

/// Ground state of `−Δu + u = |u|^{p−1}u` at `p = 1 + 4/N`.
pub fn ground_state_critical(dim: usize, opts: &ShootOptions) -> Result<BranchSample> {
    let nl = Nonlinearity::pure_power(1.0 + 4.0 / dim as f64, dim)?;
    find_bound_state(&nl, 0.0, 0, opts)
}

/// `E₀`, the least energy of `−Δu + u = |u|^{p−1}u`.
pub fn least_energy_e0(dim: usize, opts: &ShootOptions) -> Result<f64> {
    Ok(ground_state_critical(dim, opts)?.ihat)
}

/// Default grid for a problem at `λ`.
pub fn default_grid(dim: usize, lambda: f64) -> Result<Arc<RadialGrid>> {
    make_grid(dim, default_rmax(lambda.exp()), DEFAULT_NODES)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soliton_shots() {
        let nl = Nonlinearity::pure_power(3.0, 1).unwrap();
        let o = shoot(&nl, 0.0, 2f64.sqrt()).unwrap();
        assert_eq!(o.classification, Classification::Decay);
        assert_eq!(o.node_count, 0);
        let o = shoot(&nl, 0.0, 2.0 * 2f64.sqrt()).unwrap();
        assert!(o.node_count >= 1 || matches!(o.classification, Classification::Blowup(_)));
        let o = shoot(&nl, 0.0, 1e-3).unwrap();
        assert_eq!(o.classification, Classification::Blowup(1));
        assert_eq!(o.node_count, 0);
        assert!(shoot(&nl, 0.0, -1.0).is_err());
    }

    #[test]
    fn soliton_state() {
        let nl = Nonlinearity::pure_power(3.0, 1).unwrap();
        let b = find_bound_state(&nl, 0.0, 0, &ShootOptions::default()).unwrap();
        assert!((b.u0 - 2f64.sqrt()).abs() < 1e-6, "u0 = {}", b.u0);
        assert!((b.ihat / (4.0 / 3.0) - 1.0).abs() < 1e-6, "Ihat = {}", b.ihat);
        assert!(b.accepted(1e-6));
    }
}
