//! Acceptance run. Each criterion prints one line; the binary exits
//! nonzero when any of them fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scalar_field_lab::energy::nehari;
use scalar_field_lab::grid::default_rmax;
use scalar_field_lab::mass::{InfLocation, Method};
use scalar_field_lab::*;

type Verdict = std::result::Result<(bool, String), String>;

/// Solutions accepted by any criterion, for the residual audit.
#[derive(Default)]
struct Audit {
    entries: Vec<(String, f64, f64)>,
}

impl Audit {
    fn scaled(nl: &Nonlinearity, lambda: f64, u: &Profile) -> (f64, f64) {
        let scale = u.grad_sq() + lambda.exp() * u.mass();
        let p = scalar_field_lab::energy::pohozaev(lambda, u, nl).unwrap_or(f64::NAN);
        (p.abs() / scale, nehari(lambda, u, nl).abs() / scale)
    }

    fn branch(&mut self, label: &str, nl: &Nonlinearity, s: &BranchSample) {
        let (p, n) = Self::scaled(nl, s.lambda, &s.u);
        self.entries.push((label.to_string(), p, n));
    }

    fn report(&mut self, label: &str, nl: &Nonlinearity, r: &SolveReport) {
        let (p, n) = Self::scaled(nl, r.lambda_star, &r.u);
        self.entries.push((label.to_string(), p, n));
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn random_profile(rng: &mut ChaCha8Rng, grid: &Arc<RadialGrid>) -> Profile {
    let terms: Vec<(f64, f64)> = (0..3).map(|_| (rng.gen_range(-1.5..1.5), rng.gen_range(1.0..5.0))).collect();
    let mut u = grid.sample(|r| terms.iter().map(|(a, w)| a * (-(r / w).powi(2)).exp()).sum());
    let last = u.values.len() - 1;
    u.values[last] = 0.0;
    u
}

fn fixtures() -> Vec<Nonlinearity> {
    let mut out = Vec::new();
    for dim in 1..=3 {
        out.push(Nonlinearity::pure_power(3.0, dim).unwrap());
        out.push(Nonlinearity::pure_power(2.0, dim).unwrap());
        out.push(Nonlinearity::saturating(3.0, 2.0, dim).unwrap());
    }
    out
}

fn c1_exact_identities(_: &mut Audit) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let nls = fixtures();
    let grids: Vec<_> = (1..=3).map(|d| make_grid(d, 20.0, 201).unwrap()).collect();
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let nl = &nls[i % nls.len()];
        let grid = &grids[nl.dim - 1];
        let u = random_profile(&mut rng, grid);
        let theta = rng.gen_range(-1.0..1.0);
        let lambda = rng.gen_range(-3.0..1.0);
        let m = rng.gen_range(0.1..50.0);
        let rep = energies(&AugmentedPoint::new(theta, lambda, u.clone()), nl, m).map_err(|e| e.to_string())?;
        // Independent evaluation straight from the grid.
        let n = nl.dim as f64;
        let (sg, sm, mu) = (((n - 2.0) * theta).exp(), (n * theta).exp(), lambda.exp());
        let grad = sg * grid.dirichlet_energy(&u.values);
        let mass = sm * grid.integrate(&u.values.iter().map(|v| v * v).collect::<Vec<_>>());
        let pot = sm * grid.integrate(&u.values.iter().map(|&v| nl.big_g(v)).collect::<Vec<_>>());
        let f = 0.5 * grad - pot;
        let i_direct = f + 0.5 * mu * (mass - m);
        let p_def = 0.5 * (n - 2.0) * grad + n * (0.5 * mu * mass - pot);
        let p_ident = n * (i_direct + 0.5 * m * mu) - grad;
        let scale = grad + pot.abs() + mu * (mass + m);
        worst = worst
            .max((rep.i - i_direct).abs() / scale)
            .max((rep.i - (rep.f + 0.5 * mu * (rep.mass - m))).abs() / scale)
            .max((p_def - p_ident).abs() / scale)
            .max((rep.p - p_def).abs() / scale);
    }
    Ok((worst <= 1e-12, format!("worst relative deviation {worst:.2e} over 1000 points")))
}

/// Observed order of central differences of `t ↦ J(pt + t·dir)`.
fn fd_order(j: impl Fn(f64) -> f64, exact: f64) -> f64 {
    let err = |h: f64| ((j(h) - j(-h)) / (2.0 * h) - exact).abs();
    let (e1, e2) = (err(0.02), err(0.01));
    let floor = 1e-10 * (1.0 + exact.abs());
    if e1 <= floor {
        // Exact to rounding: no truncation error to measure.
        return f64::INFINITY;
    }
    (e1 / e2.max(f64::MIN_POSITIVE)).log2()
}

fn c2_differential(_: &mut Audit) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let nls = fixtures();
    let grids: Vec<_> = (1..=3).map(|d| make_grid(d, 20.0, 201).unwrap()).collect();
    let mut worst = f64::INFINITY;
    for i in 0..100 {
        let nl = &nls[i % nls.len()];
        let grid = &grids[nl.dim - 1];
        let u = random_profile(&mut rng, grid);
        let h = random_profile(&mut rng, grid);
        let theta = rng.gen_range(-1.0..1.0);
        let lambda = rng.gen_range(-2.0..1.0);
        let m = rng.gen_range(0.5..20.0);
        let pt = AugmentedPoint::new(theta, lambda, u.clone());
        let d = differential(&pt, nl, m).map_err(|e| e.to_string())?;
        let j = |th: f64, la: f64, v: &Profile| energies(&AugmentedPoint::new(th, la, v.clone()), nl, m).unwrap().j;
        let o_theta = fd_order(|t| j(theta + t, lambda, &u), d.d_theta);
        let o_lambda = fd_order(|t| j(theta, lambda + t, &u), d.d_lambda);
        let tangent = Tangent { alpha: 0.0, nu: 0.0, h: h.clone() };
        let o_u = fd_order(|t| j(theta, lambda, &u.axpy(t, &h).unwrap()), d.apply(&tangent));
        worst = worst.min(o_theta).min(o_lambda).min(o_u);
    }
    Ok((worst >= 1.9, format!("smallest observed order {worst:.3} over 100 points and 3 partials")))
}

fn c3_soliton(audit: &mut Audit) -> Verdict {
    let nl = Nonlinearity::pure_power(3.0, 1).unwrap();
    let s = find_bound_state(&nl, 0.0, 0, &ShootOptions::default()).map_err(|e| e.to_string())?;
    audit.branch("soliton", &nl, &s);
    let du = (s.u0 - 2f64.sqrt()).abs();
    let di = rel(s.ihat, 4.0 / 3.0);
    Ok((du <= 1e-6 && di <= 1e-6, format!("|u(0) − √2| = {du:.2e}, Î rel. error {di:.2e}")))
}

fn c4_scaling(audit: &mut Audit) -> Verdict {
    let grid = make_grid(2, default_rmax((-1.0f64).exp()), 4001).map_err(|e| e.to_string())?;
    let opts = ShootOptions::with_grid(grid);
    let nl = Nonlinearity::pure_power(2.0, 2).unwrap();
    let kappa_e = 3.0 / 1.0 - 1.0;
    let kappa_m = kappa_e - 1.0;
    let mut worst = 0.0f64;
    let base = find_bound_state(&nl, 0.0, 0, &opts).map_err(|e| e.to_string())?;
    audit.branch("scaling q=2", &nl, &base);
    for l in [-1.0, 1.0] {
        let s = find_bound_state(&nl, l, 0, &opts).map_err(|e| e.to_string())?;
        audit.branch("scaling q=2", &nl, &s);
        worst = worst.max(rel(s.ihat / base.ihat, (kappa_e * l).exp()));
        worst = worst.max(rel(s.mass / base.mass, (kappa_m * l).exp()));
    }
    let crit = Nonlinearity::pure_power(3.0, 2).unwrap();
    let lo = find_bound_state(&crit, -1.0, 0, &opts).map_err(|e| e.to_string())?;
    let hi = find_bound_state(&crit, 1.0, 0, &opts).map_err(|e| e.to_string())?;
    audit.branch("scaling q=3", &crit, &lo);
    audit.branch("scaling q=3", &crit, &hi);
    let dev = (hi.mass / lo.mass - 1.0).abs();
    Ok((
        worst <= 1e-4 && dev < 1e-4,
        format!("worst scaling-law deviation {worst:.2e}; critical mass ratio deviation {dev:.2e}"),
    ))
}

fn c6_mountain_pass(_: &mut Audit) -> Verdict {
    let nl = Nonlinearity::pure_power(2.0, 2).unwrap();
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for l in [-1.0, 0.0] {
        let path = mp_level_path(&nl, l, &PathOptions::default()).map_err(|e| e.to_string())?;
        let least = mp_level_least_energy(&nl, l, &ShootOptions::default()).map_err(|e| e.to_string())?;
        let r = rel(path.level, least);
        worst = worst.max(r);
        notes.push(format!("λ={l}: {:.6} vs {:.6}", path.level, least));
    }
    Ok((worst <= 1e-2, format!("{}; worst rel. gap {worst:.2e}", notes.join(", "))))
}

fn c7_critical_mass(audit: &mut Audit) -> Verdict {
    let nl = Nonlinearity::pure_power(3.0, 2).unwrap();
    let opts = ShootOptions::default();
    let curve = threshold_curve(&nl, 0, (-2.0, 2.0), 9, &opts).map_err(|e| e.to_string())?;
    let q = find_bound_state(&nl, 0.0, 0, &opts).map_err(|e| e.to_string())?;
    audit.branch("ground state q=3", &nl, &q);
    let r = rel(curve.m_k, q.mass);
    let spread = curve.ratio_spread();
    Ok((
        r <= 5e-3 && spread <= 1e-3 && curve.gaps.is_empty(),
        format!("m0 = {:.8}, ‖Q‖² = {:.8}, rel. {r:.2e}, ratio spread {spread:.2e}", curve.m_k, q.mass),
    ))
}

fn c8_headline(audit: &mut Audit) -> Verdict {
    let nl = Nonlinearity::pure_power(2.0, 2).unwrap();
    let base = find_bound_state(&nl, 0.0, 0, &ShootOptions::default()).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut notes = Vec::new();
    for factor in [2.0, 4.0] {
        let m = factor * base.mass;
        let mut so = SolveOptions::default();
        so.sphere.grid_lambda = factor.ln();
        let bmp = solve_normalized(&nl, m, Method::BranchRootFind, &so).map_err(|e| e.to_string())?;
        let sph = minimize_on_sphere(&nl, m, &so.sphere).map_err(|e| e.to_string())?;
        audit.report("normalized q=2", &nl, &bmp);
        audit.report("sphere q=2", &nl, &sph);
        let r = rel(bmp.i, sph.f);
        ok &= r <= 1e-2 && bmp.mu > 0.0 && sph.mu > 0.0;
        notes.push(format!("m={m:.4}: 𝓘={:.8} b={:.8} rel {r:.1e} μ=({:.4},{:.4})", sph.f, bmp.i, sph.mu, bmp.mu));
    }
    Ok((ok, notes.join("; ")))
}

fn c9_dichotomy(audit: &mut Audit) -> Verdict {
    let nl = Nonlinearity::saturating(3.0, 2.0, 2).unwrap();
    let curve = threshold_curve(&nl, 0, (-12.0, -0.5), 24, &ShootOptions::default()).map_err(|e| e.to_string())?;
    let m0 = curve.m_k;
    let sphere = SphereOptions {
        grid_lambda: -5.0,
        ..SphereOptions::default()
    };
    let mut ok = true;
    let mut notes = Vec::new();
    for f in [0.8, 0.9, 0.95, 1.1, 1.25] {
        let r = minimize_on_sphere(&nl, f * m0, &sphere).map_err(|e| e.to_string())?;
        let agrees = if f > 1.0 {
            r.f < 0.0 && !r.zero_suspected
        } else {
            r.zero_suspected || r.f >= 0.0
        };
        if f > 1.0 {
            audit.report("sphere saturating", &nl, &r);
        }
        ok &= agrees;
        notes.push(format!("{f}·m0: {}{:.3e}", if r.zero_suspected { "≈0 " } else { "" }, r.f));
    }
    let edge = if matches!(curve.inf_location, InfLocation::Interior(_)) { "" } else { " (boundary)" };
    Ok((ok, format!("m0 = {m0:.6}{edge}; {}", notes.join(", "))))
}

fn c10_flow(audit: &mut Audit) -> Verdict {
    let nl = Nonlinearity::pure_power(2.0, 2).unwrap();
    let shoot = ShootOptions {
        grid: GridPolicy::DecayScaled { lengths: 32.0, n: 801 },
        ..ShootOptions::default()
    };
    let base = find_bound_state(&nl, 0.0, 0, &shoot).map_err(|e| e.to_string())?;
    let m = 2.0 * base.mass;
    let so = SolveOptions {
        shoot: shoot.clone(),
        ..SolveOptions::default()
    };
    let crit = solve_normalized(&nl, m, Method::BranchRootFind, &so).map_err(|e| e.to_string())?;
    audit.report("flow critical point", &nl, &crit);
    let b = crit.i;
    let eps_bar = 0.5 * b.abs();
    let mut opts = FlowOptions::new(b, eps_bar, 1e-6);
    opts.max_steps = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut monotone, mut identity, mut mirrored) = (0, 0, 0);
    let mut below = 0;
    for _ in 0..20 {
        let bump = random_profile(&mut rng, &crit.u.grid);
        let u = crit.u.scaled(rng.gen_range(0.6..1.4)).axpy(rng.gen_range(-0.2..0.2), &bump).map_err(|e| e.to_string())?;
        let start = AugmentedPoint::new(rng.gen_range(-0.3..0.3), crit.lambda_star + rng.gen_range(-0.5..0.5), u);
        let start_j = energies(&start, &nl, m).map_err(|e| e.to_string())?.j;
        let tr = deform(&start, &nl, m, &opts).map_err(|e| e.to_string())?;
        let tm = deform(&start.mirrored(), &nl, m, &opts).map_err(|e| e.to_string())?;
        monotone += tr.is_monotone() as usize;
        if start_j < b - eps_bar {
            below += 1;
            identity += tr.is_identity() as usize;
        }
        let same = tr.points.len() == tm.points.len()
            && tr.points.iter().zip(&tm.points).all(|(p, q)| *q == p.mirrored());
        mirrored += same as usize;
    }
    let ok = monotone == 20 && identity == below && mirrored == 20;
    Ok((
        ok,
        format!("monotone {monotone}/20, identity {identity}/{below} below b−ε̄, mirrored {mirrored}/20"),
    ))
}

fn c11_subadditivity(audit: &mut Audit) -> Verdict {
    let nl = Nonlinearity::pure_power(2.0, 2).unwrap();
    let base = find_bound_state(&nl, 0.0, 0, &ShootOptions::default()).map_err(|e| e.to_string())?;
    let m = 2.0 * base.mass;
    let energy_tol = VerifyOptions::default().energy_tol;
    let whole = minimize_on_sphere(&nl, m, &SphereOptions { grid_lambda: 2f64.ln(), ..SphereOptions::default() })
        .map_err(|e| e.to_string())?;
    let half = minimize_on_sphere(&nl, m / 2.0, &SphereOptions::default()).map_err(|e| e.to_string())?;
    audit.report("sphere q=2", &nl, &whole);
    audit.report("sphere q=2", &nl, &half);
    let margin = 2.0 * half.f - whole.f;
    Ok((
        margin > 10.0 * energy_tol,
        format!("𝓘_m = {:.8}, 2𝓘_(m/2) = {:.8}, margin {margin:.3e}", whole.f, 2.0 * half.f),
    ))
}

fn c12_vanishing(_: &mut Audit) -> Verdict {
    let nl = Nonlinearity::pure_power(2.0, 2).unwrap();
    let grid = make_grid(2, 20.0, 201).map_err(|e| e.to_string())?;
    let m = 10.0;
    let mut points = Vec::new();
    let mut res = Vec::new();
    for n in 1..=20 {
        let l = -(n as f64);
        res.push(psp_residual(l, &grid.zeros(), &nl, m).map_err(|e| e.to_string())?);
        points.push((l, grid.zeros()));
    }
    let d = diagnose_sequence(&points, &res, 1e-6).map_err(|e| e.to_string())?;
    let last = res.last().unwrap();
    Ok((
        d.residuals_vanish && d.non_compact && d.level_limit.abs() < 1e-6,
        format!(
            "final residual {:.2e}, level {:.2e}, tail separation {:.2}, non-compact {}",
            last.max_residual(),
            last.level,
            d.tail_separation,
            d.non_compact
        ),
    ))
}

fn main() {
    type Check = fn(&mut Audit) -> Verdict;
    let criteria: [(u32, &str, u64, Check); 11] = [
        (1, "exact identities", 10, c1_exact_identities),
        (2, "differential of J vs finite differences", 60, c2_differential),
        (3, "one-dimensional soliton", 5, c3_soliton),
        (4, "pure-power scaling", 60, c4_scaling),
        (6, "mountain-pass identification", 300, c6_mountain_pass),
        (7, "critical mass", 120, c7_critical_mass),
        (8, "constrained infimum equals mountain-pass value", 600, c8_headline),
        (9, "threshold dichotomy", 900, c9_dichotomy),
        (10, "deformation flow contract", 300, c10_flow),
        (11, "sub-additivity", 600, c11_subadditivity),
        (12, "vanishing sequence at level zero", 1, c12_vanishing),
    ];
    let mut audit = Audit::default();
    let mut failed = 0;
    let mut lines = Vec::new();
    for (id, name, budget, check) in criteria {
        let t0 = Instant::now();
        let out = check(&mut audit);
        let took = t0.elapsed();
        let (pass, detail) = match out {
            Ok((p, d)) => (p && took <= Duration::from_secs(budget), d),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !pass as usize;
        let line = format!(
            "criterion {id:>2} {}: {name}: {detail} [{:.2}s of {budget}s]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
        println!("{line}");
        lines.push((id, line));
    }
    let worst = audit
        .entries
        .iter()
        .map(|(_, p, n)| p.max(*n))
        .fold(0.0f64, f64::max);
    let offenders: Vec<_> = audit.entries.iter().filter(|(_, p, n)| p.max(*n) > 1e-6).map(|e| e.0.clone()).collect();
    let pass5 = offenders.is_empty() && !audit.entries.is_empty();
    failed += !pass5 as usize;
    println!(
        "criterion  5 {}: Pohozaev and Nehari residuals: worst scaled residual {worst:.2e} over {} accepted solutions{}",
        if pass5 { "PASS" } else { "FAIL" },
        audit.entries.len(),
        if offenders.is_empty() { String::new() } else { format!(", offenders {offenders:?}") }
    );
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
