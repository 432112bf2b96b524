//! Mountain-pass levels and the deformation flow on the augmented space.
//!
//! The path route relaxes a discrete string joining `0` to a profile with
//! `Î < 0`: interior images descend the preconditioned gradient with the
//! tangential part removed, the highest image climbs along the tangent, and
//! the string is redistributed by arclength at a fixed cadence. The
//! stabilized maximum is the path level.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{differential, energies, metric_norm, u_covector, AugmentedPoint, EnergyReport, Tangent};
use crate::error::{Error, Result};
use crate::grid::{Profile, RadialGrid};
use crate::nonlin::Nonlinearity;
use crate::numerics::{BandedCholesky, SymBanded};
use crate::shoot::{find_bound_state, GridPolicy, ShootOptions};

/// A discrete path `0 = ζ₀, ζ₁, …, ζ_M` at fixed `λ`.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub lambda: f64,
    pub nodes: Vec<Profile>,
    /// `Î(λ, ζⱼ)`.
    pub values: Vec<f64>,
}

impl PathEnsemble {
    pub fn max_index(&self) -> usize {
        let mut best = 0;
        for (j, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = j;
            }
        }
        best
    }

    pub fn level(&self) -> f64 {
        self.values[self.max_index()]
    }

    /// Starts at zero and ends below zero energy.
    pub fn is_admissible(&self) -> bool {
        self.nodes.first().map(|u| u.is_zero()).unwrap_or(false) && self.values.last().map(|v| *v < 0.0).unwrap_or(false)
    }
}

#[derive(Debug, Clone)]
pub struct PathOptions {
    pub nodes: usize,
    pub reparam_every: usize,
    pub max_sweeps: usize,
    /// Relaxation step in the preconditioned metric.
    pub step: f64,
    /// Sweeps of plain relaxation before the top image starts climbing.
    pub warmup: usize,
    /// Stop when the climbing image's scaled gradient falls below this.
    pub tol: f64,
    pub grid: GridPolicy,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            nodes: 32,
            reparam_every: 10,
            max_sweeps: 5000,
            step: 0.5,
            warmup: 30,
            tol: 1e-9,
            grid: ShootOptions::default().grid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub level: f64,
    pub max_index: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub ensemble: PathEnsemble,
    pub level: f64,
    pub sweeps: usize,
    /// Scaled gradient at the climbing image.
    pub residual: f64,
    pub converged: bool,
    pub history: Vec<SweepRecord>,
}

impl PathResult {
    pub const CSV_HEADER: &'static str = "sweep,level,max_index,residual";

    pub fn history_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for h in &self.history {
            out.push_str(&format!("{},{:.17e},{},{:.17e}\n", h.sweep, h.level, h.max_index, h.residual));
        }
        out
    }
}

/// Largest relative move of one image per sweep.
const STEP_CAP: f64 = 0.1;

fn ihat(nl: &Nonlinearity, lambda: f64, u: &Profile) -> Result<f64> {
    Ok(energies(&AugmentedPoint::new(0.0, lambda, u.clone()), nl, 0.0)?.ihat)
}

/// `A + μW` on the free nodes, used as metric and preconditioner.
fn preconditioner(grid: &RadialGrid, mu: f64) -> Result<(SymBanded, BandedCholesky)> {
    let k = grid.unknowns();
    let mut p = grid.stiffness().truncated(k);
    let w: Vec<f64> = grid.weights()[..k].iter().map(|w| mu * w).collect();
    p.add_diagonal(&w);
    let chol = p.cholesky().ok_or_else(|| Error::Evaluation("path preconditioner".into()))?;
    Ok((p, chol))
}

fn p_dot(p: &SymBanded, a: &[f64], b: &[f64]) -> f64 {
    let k = p.dim();
    let pb = p.matvec(&b[..k]);
    a[..k].iter().zip(&pb).map(|(x, y)| x * y).sum()
}

/// Straight path from zero to a Gaussian bump `t·exp(−r²/L²)` with
/// `Î(λ, ·) < 0`, searched over widths and heights.
pub fn initial_path(nl: &Nonlinearity, lambda: f64, grid: &Arc<RadialGrid>, nodes: usize) -> Result<PathEnsemble> {
    if nodes < 3 {
        return Err(Error::Config {
            field: "path.nodes".into(),
            message: format!("a path needs at least 3 nodes (got {nodes})"),
        });
    }
    let decay = (-0.5 * lambda).exp();
    let mut end = None;
    'search: for lw in [0.5, 1.0, 2.0, 4.0] {
        let width = lw * decay;
        if width > grid.rmax() / 16.0 {
            break;
        }
        for lt in 0..60 {
            let t = 0.5 * 1.25f64.powi(lt);
            let u = grid.sample(|r| t * (-(r / width).powi(2)).exp());
            let e = ihat(nl, lambda, &u)?;
            if e < 0.0 {
                end = Some(u);
                break 'search;
            }
        }
    }
    let end = end.ok_or_else(|| {
        Error::Geometry(format!(
            "no bump with negative energy at lambda = {lambda}; lambda may be at or above lambda0"
        ))
    })?;
    let path: Vec<Profile> = (0..nodes).map(|j| end.scaled(j as f64 / (nodes - 1) as f64)).collect();
    let values = path.iter().map(|u| ihat(nl, lambda, u)).collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble {
        lambda,
        nodes: path,
        values,
    })
}

/// Redistributes `nodes[a..=b]` at equal arclength, endpoints fixed.
fn reparametrize(p: &SymBanded, nodes: &mut [Profile], a: usize, b: usize) {
    if b <= a + 1 {
        return;
    }
    let mut s = vec![0.0];
    for j in a..b {
        let d: Vec<f64> = nodes[j + 1].values.iter().zip(&nodes[j].values).map(|(x, y)| x - y).collect();
        s.push(s[s.len() - 1] + p_dot(p, &d, &d).max(0.0).sqrt());
    }
    let total = s[s.len() - 1];
    if total <= 0.0 {
        return;
    }
    let old: Vec<Vec<f64>> = nodes[a..=b].iter().map(|u| u.values.clone()).collect();
    let count = b - a;
    let mut seg = 0;
    for i in 1..count {
        let target = total * i as f64 / count as f64;
        while seg + 1 < count && s[seg + 1] < target {
            seg += 1;
        }
        let span = s[seg + 1] - s[seg];
        let t = if span > 0.0 { (target - s[seg]) / span } else { 0.0 };
        let v = &mut nodes[a + i].values;
        for (q, (x, y)) in v.iter_mut().zip(old[seg].iter().zip(&old[seg + 1])) {
            *q = (1.0 - t) * x + t * y;
        }
    }
}

/// Mountain-pass level `a_mp(λ)` by path relaxation.
pub fn mp_level_path(nl: &Nonlinearity, lambda: f64, opts: &PathOptions) -> Result<PathResult> {
    if let Some(l0) = nl.lambda0()?.finite() {
        if lambda >= l0 {
            return Err(Error::Geometry(format!("lambda = {lambda} is not below lambda0 = {l0}")));
        }
    }
    let grid = opts.grid.grid_for(nl.dim, lambda)?;
    let mut ens = initial_path(nl, lambda, &grid, opts.nodes)?;
    let mu = lambda.exp();
    let (p, chol) = preconditioner(&grid, mu)?;
    let k = grid.unknowns();
    let last = ens.nodes.len() - 1;
    let mut history = Vec::new();
    let mut climbing: Option<usize> = None;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut sweeps = 0;
    for sweep in 0..opts.max_sweeps {
        sweeps = sweep + 1;
        let top = ens.max_index();
        if sweep >= opts.warmup && top > 0 && top < last {
            climbing = Some(top);
        }
        let snapshot: Vec<Profile> = ens.nodes.clone();
        // past the top, images already below zero energy stay put: the
        // functional is unbounded below there
        let moving: Vec<usize> = (1..last).filter(|&j| j <= top || ens.values[j] >= 0.0).collect();
        let updates: Vec<(usize, Vec<f64>, f64)> = moving
            .into_par_iter()
            .map(|j| {
                let u = &snapshot[j];
                let c = u_covector(0.0, lambda, u, nl);
                let v = chol.solve(&c);
                let mut tau: Vec<f64> = snapshot[j + 1].values[..k]
                    .iter()
                    .zip(&snapshot[j - 1].values[..k])
                    .map(|(a, b)| a - b)
                    .collect();
                let tn = p_dot(&p, &tau, &tau).max(0.0).sqrt();
                if tn > 0.0 {
                    tau.iter_mut().for_each(|t| *t /= tn);
                }
                let along: f64 = c.iter().zip(&tau).map(|(a, b)| a * b).sum();
                let factor = if climbing == Some(j) { 2.0 } else { 1.0 };
                let mut dir: Vec<f64> = v.iter().zip(&tau).map(|(vi, ti)| vi - factor * along * ti).collect();
                let gnorm = c.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt();
                let unorm = p_dot(&p, &u.values, &u.values).max(0.0).sqrt();
                let dnorm = p_dot(&p, &dir, &dir).max(0.0).sqrt();
                let cap = STEP_CAP * unorm.max(1e-3);
                if opts.step * dnorm > cap {
                    let f = cap / (opts.step * dnorm);
                    dir.iter_mut().for_each(|d| *d *= f);
                }
                (j, dir, gnorm / (1.0 + unorm))
            })
            .collect();
        for (j, dir, g) in updates {
            if climbing == Some(j) {
                residual = g;
            }
            let v = &mut ens.nodes[j].values;
            for (x, d) in v[..k].iter_mut().zip(&dir) {
                *x -= opts.step * d;
            }
        }
        if (sweep + 1) % opts.reparam_every == 0 {
            match climbing {
                Some(c) => {
                    reparametrize(&p, &mut ens.nodes, 0, c);
                    reparametrize(&p, &mut ens.nodes, c, last);
                }
                None => reparametrize(&p, &mut ens.nodes, 0, last),
            }
        }
        ens.values = ens.nodes.par_iter().map(|u| ihat(nl, lambda, u)).collect::<Result<Vec<_>>>()?;
        let level = ens.level();
        history.push(SweepRecord {
            sweep,
            level,
            max_index: ens.max_index(),
            residual,
        });
        if climbing.is_some() && residual < opts.tol {
            converged = true;
            break;
        }
    }
    if !ens.is_admissible() {
        return Err(Error::Geometry("relaxed path lost its negative-energy endpoint".into()));
    }
    Ok(PathResult {
        level: ens.level(),
        ensemble: ens,
        sweeps,
        residual,
        converged,
        history,
    })
}

/// `a_mp(λ)` as the energy of the least-energy radial state.
pub fn mp_level_least_energy(nl: &Nonlinearity, lambda: f64, opts: &ShootOptions) -> Result<f64> {
    Ok(find_bound_state(nl, lambda, 0, opts)?.ihat)
}

/// The metric gradient together with the two pseudo-gradient inequalities
/// evaluated at the point.
#[derive(Debug, Clone)]
pub struct PseudoGradient {
    pub v: Tangent,
    pub v_norm: f64,
    /// `‖dJ‖_*`.
    pub dual_norm: f64,
    /// `dJ·V`.
    pub pairing: f64,
    /// `‖V‖ ≤ 2‖dJ‖_*`.
    pub bounded: bool,
    /// `dJ·V ≥ ‖dJ‖_*²`, up to rounding.
    pub descent: bool,
    /// `dJ = 0`; the flow stops here.
    pub critical: bool,
}

pub fn pseudo_gradient(pt: &AugmentedPoint, nl: &Nonlinearity, m: f64) -> Result<PseudoGradient> {
    let d = differential(pt, nl, m)?;
    let v = d.gradient();
    let v_norm = metric_norm(pt.theta, &v);
    let pairing = d.apply(&v);
    let dn = d.dual_norm;
    let slack = 1e-10 * dn * dn;
    Ok(PseudoGradient {
        bounded: v_norm <= 2.0 * dn * (1.0 + 1e-12),
        descent: pairing >= dn * dn - slack,
        critical: dn == 0.0,
        v,
        v_norm,
        dual_norm: dn,
        pairing,
    })
}

/// Level-window cutoff: 1 on `[b−ε̄/2, b+ε̄/2]`, 0 outside `[b−ε̄, b+ε̄]`.
pub fn level_cutoff(s: f64, b: f64, eps_bar: f64) -> f64 {
    let d = (s - b).abs();
    if d <= 0.5 * eps_bar {
        1.0
    } else if d >= eps_bar {
        0.0
    } else {
        2.0 * (eps_bar - d) / eps_bar
    }
}

/// Residual proxy for the distance to the critical set: 0 below `ρ/2`,
/// 1 above `ρ`.
pub fn neighborhood_cutoff(residual: f64, rho: f64) -> f64 {
    if residual >= rho {
        1.0
    } else if residual <= 0.5 * rho {
        0.0
    } else {
        2.0 * residual / rho - 1.0
    }
}

#[derive(Debug, Clone)]
pub struct FlowOptions {
    pub b: f64,
    pub eps_bar: f64,
    pub rho: f64,
    pub max_steps: usize,
    /// Initial (and largest) time step.
    pub dt: f64,
    pub min_dt: f64,
    pub theta_cap: f64,
    /// Flow time after which the trajectory stops.
    pub t_end: f64,
}

impl FlowOptions {
    pub fn new(b: f64, eps_bar: f64, rho: f64) -> Self {
        Self {
            b,
            eps_bar,
            rho,
            max_steps: 200,
            dt: 0.05,
            min_dt: 1e-12,
            theta_cap: 0.1,
            t_end: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowStep {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub report: EnergyReport,
    pub grad_norm: f64,
    pub psi: f64,
    pub phi: f64,
}

impl FlowStep {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.step, self.report.theta, self.report.lambda, self.report.j, self.report.p, self.grad_norm, self.psi, self.phi
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowEnd {
    MaxSteps,
    /// Residual proxy switched the flow off.
    Critical,
    /// `J` left the level window.
    LeftWindow,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub points: Vec<AugmentedPoint>,
    pub steps: Vec<FlowStep>,
    pub end: FlowEnd,
}

impl FlowTrace {
    pub const CSV_HEADER: &'static str = "step,theta,lambda,J,P,grad_norm,psi,phi";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for s in &self.steps {
            out.push_str(&s.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn is_monotone(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].report.j <= w[0].report.j)
    }

    /// The start point is never moved.
    pub fn is_identity(&self) -> bool {
        self.points.len() == 1
    }

    pub fn last(&self) -> &AugmentedPoint {
        self.points.last().expect("trace has a start point")
    }
}

fn flow_record(step: usize, t: f64, dt: f64, pt: &AugmentedPoint, nl: &Nonlinearity, m: f64, opts: &FlowOptions) -> Result<(FlowStep, PseudoGradient)> {
    let report = energies(pt, nl, m)?;
    let pg = pseudo_gradient(pt, nl, m)?;
    let psi = level_cutoff(report.j, opts.b, opts.eps_bar);
    let phi = neighborhood_cutoff(pg.dual_norm, opts.rho);
    Ok((
        FlowStep {
            step,
            t,
            dt,
            report,
            grad_norm: pg.dual_norm,
            psi,
            phi,
        },
        pg,
    ))
}

/// Explicit descent along `−φψ V/‖V‖` with backtracking: a step of length
/// `dt` is accepted when `J` drops by at least `½·dt·φψ‖dJ‖_*`.
pub fn deform(start: &AugmentedPoint, nl: &Nonlinearity, m: f64, opts: &FlowOptions) -> Result<FlowTrace> {
    if !(opts.eps_bar > 0.0) || !(opts.rho > 0.0) || !(opts.dt > 0.0) {
        return Err(Error::Config {
            field: "flow".into(),
            message: "eps_bar, rho and dt must be positive".into(),
        });
    }
    let mut pt = start.clone();
    let (first, mut pg) = flow_record(0, 0.0, 0.0, &pt, nl, m, opts)?;
    let mut steps = vec![first];
    let mut points = vec![pt.clone()];
    let mut dt = opts.dt;
    let mut t = 0.0;
    let k = pt.u.grid.unknowns();
    let end = loop {
        let cur = *steps.last().expect("nonempty");
        let weight = cur.psi * cur.phi;
        if cur.psi == 0.0 {
            break FlowEnd::LeftWindow;
        }
        if cur.phi == 0.0 || pg.critical {
            break FlowEnd::Critical;
        }
        if steps.len() > opts.max_steps {
            break FlowEnd::MaxSteps;
        }
        if t >= opts.t_end {
            break FlowEnd::TimeLimit;
        }
        let speed = weight / pg.v_norm;
        let accepted = loop {
            let mut h = dt.min(opts.t_end - t);
            if (h * speed * pg.v.alpha).abs() > opts.theta_cap {
                h = opts.theta_cap / (speed * pg.v.alpha).abs();
            }
            let c = h * speed;
            let mut u = pt.u.clone();
            for (x, d) in u.values[..k].iter_mut().zip(&pg.v.h.values) {
                *x -= c * d;
            }
            let trial = AugmentedPoint::new(pt.theta - c * pg.v.alpha, pt.lambda - c * pg.v.nu, u);
            let ok = energies(&trial, nl, m)
                .map(|r| r.j <= cur.report.j - 0.5 * h * weight * pg.dual_norm)
                .unwrap_or(false);
            if ok {
                break Some((trial, h));
            }
            dt = 0.5 * h;
            if dt < opts.min_dt {
                break None;
            }
        };
        let (next, h) = accepted.ok_or_else(|| Error::StalledFlow {
            steps: steps.len() - 1,
            reason: format!(
                "no step above {:e} decreases J at J = {:e}, |dJ| = {:e}",
                opts.min_dt, cur.report.j, pg.dual_norm
            ),
        })?;
        t += h;
        pt = next;
        let (rec, next_pg) = flow_record(steps.len(), t, h, &pt, nl, m, opts)?;
        pg = next_pg;
        steps.push(rec);
        points.push(pt.clone());
        dt = (1.5 * h).min(opts.dt);
    };
    Ok(FlowTrace { points, steps, end })
}

/// Upper estimate of `b₁` from a relaxed path at `λ`: the point first
/// travels from `(λ+R, 0)` down to `(λ, 0)` and then along the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct B1Estimate {
    pub lambda: f64,
    /// Largest `I` met along the constructed path.
    pub b1_upper: f64,
    /// `a_mp(λ) − (e^λ/2)m`.
    pub bound: f64,
    pub holds: bool,
}

pub fn b1_upper_bound(path: &PathEnsemble, m: f64, lift: f64) -> B1Estimate {
    let lambda = path.lambda;
    let mu = lambda.exp();
    let mut top = f64::NEG_INFINITY;
    // λ-segment at u = 0, where I = −e^φ m/2
    for i in 0..=16 {
        let phi = lambda + lift * (1.0 - i as f64 / 16.0);
        top = top.max(-0.5 * phi.exp() * m);
    }
    for v in &path.values {
        top = top.max(v - 0.5 * mu * m);
    }
    let bound = path.level() - 0.5 * mu * m;
    B1Estimate {
        lambda,
        b1_upper: top,
        bound,
        holds: top <= bound + 1e-12 * (1.0 + bound.abs()),
    }
}

/// `Î(λ, u(x/ν))` at each `ν`, through the interpolating dilation.
pub fn dilation_profile(nl: &Nonlinearity, lambda: f64, u: &Profile, nus: &[f64]) -> Result<Vec<(f64, f64)>> {
    nus.iter()
        .map(|&nu| {
            let v = u.dilate(nu.ln())?;
            Ok((nu, ihat(nl, lambda, &v)?))
        })
        .collect()
}

/// For `Î(λ,u) < 0`, `ν ↦ Î(λ, u(x/ν))` decreases on the sampled `ν ≥ 1`.
pub fn descends_through_dilation(nl: &Nonlinearity, lambda: f64, u: &Profile, nus: &[f64]) -> Result<bool> {
    if ihat(nl, lambda, u)? >= 0.0 {
        return Err(Error::Domain("dilation descent needs a profile with negative energy".into()));
    }
    let vals = dilation_profile(nl, lambda, u, nus)?;
    Ok(vals.windows(2).all(|w| w[1].1 < w[0].1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn cutoffs() {
        assert_eq!(level_cutoff(-1.0, -1.0, 0.2), 1.0);
        assert_eq!(level_cutoff(-1.25, -1.0, 0.2), 0.0);
        assert!((level_cutoff(-1.15, -1.0, 0.2) - 0.5).abs() < 1e-12);
        assert_eq!(neighborhood_cutoff(0.0, 1e-3), 0.0);
        assert_eq!(neighborhood_cutoff(2e-3, 1e-3), 1.0);
    }

    #[test]
    fn pseudo_gradient_at_zero_profile() {
        let nl = Nonlinearity::pure_power(2.0, 2).unwrap();
        let g = make_grid(2, 20.0, 401).unwrap();
        let pt = AugmentedPoint::new(0.0, 0.3, g.zeros());
        let m = 5.0;
        let pg = pseudo_gradient(&pt, &nl, m).unwrap();
        let expect = -0.5 * 0.3f64.exp() * m;
        assert_eq!(pg.v.alpha, 0.0);
        assert!((pg.v.nu - expect).abs() < 1e-15 * expect.abs());
        assert!(pg.v.h.is_zero());
        assert!((pg.v_norm - pg.dual_norm).abs() <= 1e-15 * pg.dual_norm);
        assert!((pg.pairing - pg.dual_norm.powi(2)).abs() <= 1e-14 * pg.pairing);
        assert!(pg.bounded && pg.descent);
    }

    #[test]
    fn flow_below_window_is_identity() {
        let nl = Nonlinearity::pure_power(2.0, 2).unwrap();
        let g = make_grid(2, 20.0, 401).unwrap();
        let pt = AugmentedPoint::new(0.0, 2.0, g.zeros());
        // J = −e²·m/2 ≈ −18.5, far below the window
        let tr = deform(&pt, &nl, 5.0, &FlowOptions::new(-1.0, 0.5, 1e-3)).unwrap();
        assert!(tr.is_identity());
        assert_eq!(tr.end, FlowEnd::LeftWindow);
    }

    #[test]
    fn reparametrize_equalizes_spacing() {
        let g = make_grid(2, 10.0, 101).unwrap();
        let (p, _) = preconditioner(&g, 1.0).unwrap();
        let bump = g.sample(|r| (-r * r).exp());
        let ts = [0.0, 0.05, 0.1, 0.7, 1.0];
        let mut nodes: Vec<Profile> = ts.iter().map(|t| bump.scaled(*t)).collect();
        reparametrize(&p, &mut nodes, 0, 4);
        for (j, u) in nodes.iter().enumerate() {
            let t = u.values[0] / bump.values[0];
            assert!((t - j as f64 / 4.0).abs() < 1e-12);
        }
    }
}
