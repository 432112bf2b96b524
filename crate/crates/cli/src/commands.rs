use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use scalar_field_lab::mass::{ClaimStatus, InfLocation};
use scalar_field_lab::minimax::FlowEnd;
use scalar_field_lab::{
    branch_sweep, deform, energies, find_bound_state, minimize_on_sphere, mp_level_least_energy, mp_level_path,
    solve_normalized, threshold_curve, verify_identities, AugmentedPoint, BranchSample, Error, FlowOptions, Method,
    PathOptions, Profile, SolveOptions, SolveReport, SphereOptions, VerifyOptions,
};

use crate::config::{ConfigError, MethodSpec, RunConfig};
use crate::output::{ClaimOutcome, Sink};

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Numerical(Error),
    Io(std::io::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { field, message } => Failure::Config(ConfigError::Field { field, message }),
            other => Failure::Numerical(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

/// What a successful run reports back for the manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub claims: Vec<ClaimOutcome>,
}

impl Outcome {
    pub fn claims_pass(&self) -> bool {
        self.claims.iter().all(|c| c.status != "fail")
    }

    fn push(&mut self, label: &str, pass: bool) {
        self.claims.push(ClaimOutcome {
            paper_ref: label.into(),
            status: if pass { "pass" } else { "fail" }.into(),
        });
    }
}

fn profile_csv(u: &Profile) -> String {
    let mut out = String::from("r,u\n");
    for (r, v) in u.grid.nodes().iter().zip(&u.values) {
        out.push_str(&format!("{r:.17e},{v:.17e}\n"));
    }
    out
}

#[derive(Serialize)]
struct StateSummary {
    lambda: f64,
    k: usize,
    u0: f64,
    #[serde(rename = "Ihat")]
    ihat: f64,
    mass: f64,
    pohozaev_residual: f64,
    nehari_residual: f64,
    node_count: usize,
    rmax: f64,
    nodes: usize,
}

impl StateSummary {
    fn new(s: &BranchSample) -> Self {
        Self {
            lambda: s.lambda,
            k: s.k,
            u0: s.u0,
            ihat: s.ihat,
            mass: s.mass,
            pohozaev_residual: s.pohozaev_residual,
            nehari_residual: s.nehari_residual,
            node_count: s.u.node_count(),
            rmax: s.u.grid.rmax(),
            nodes: s.u.grid.len(),
        }
    }
}

fn lattice(window: (f64, f64), samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|i| window.0 + (window.1 - window.0) * i as f64 / (samples - 1) as f64)
        .collect()
}

pub fn classify(cfg: &RunConfig, out: &mut Sink) -> Result<Outcome, Failure> {
    #[derive(Serialize)]
    struct Report {
        dim: usize,
        conditions: scalar_field_lab::nonlin::ConditionReport,
        standing_hypotheses_hold: bool,
        lambda0: Option<scalar_field_lab::nonlin::Lambda0>,
        lambda0_error: Option<String>,
    }
    let nl = cfg.nonlinearity()?;
    let conditions = nl.classify();
    let (lambda0, lambda0_error) = match nl.lambda0() {
        Ok(l) => (Some(l), None),
        Err(e) => (None, Some(e.to_string())),
    };
    out.json(
        "classify.json",
        &Report {
            dim: nl.dim,
            standing_hypotheses_hold: conditions.standing_hypotheses_hold(),
            conditions,
            lambda0,
            lambda0_error,
        },
    )?;
    Ok(Outcome::default())
}

pub fn ground_state(cfg: &RunConfig, out: &mut Sink) -> Result<Outcome, Failure> {
    let nl = cfg.nonlinearity()?;
    let s = find_bound_state(&nl, cfg.lambda.value, cfg.k, &cfg.shoot_options()?)?;
    out.json("ground_state.json", &StateSummary::new(&s))?;
    out.write("profile.csv", &profile_csv(&s.u))?;
    let mut o = Outcome::default();
    o.push("Pohozaev and Nehari residuals below tolerance", s.accepted(cfg.tolerances.pohozaev));
    Ok(o)
}

pub fn branch(cfg: &RunConfig, out: &mut Sink) -> Result<Outcome, Failure> {
    let nl = cfg.nonlinearity()?;
    let lambdas = cfg
        .lambda
        .values
        .clone()
        .unwrap_or_else(|| lattice(cfg.lambda.window, cfg.lambda.samples));
    let results = branch_sweep(&nl, &lambdas, cfg.k, &cfg.shoot_options()?);
    let mut csv = format!("{}\n", BranchSample::CSV_HEADER);
    let mut gaps = Vec::new();
    let mut accepted = true;
    for (l, r) in lambdas.iter().zip(&results) {
        match r {
            Ok(s) => {
                csv.push_str(&s.csv_row());
                csv.push('\n');
                accepted &= s.accepted(cfg.tolerances.pohozaev);
            }
            Err(e) => gaps.push(serde_json::json!({ "lambda": l, "error": e.to_string() })),
        }
    }
    if gaps.len() == lambdas.len() {
        return Err(Failure::Numerical(results.into_iter().find_map(|r| r.err()).expect("all failed")));
    }
    out.write("branch.csv", &csv)?;
    out.json("branch.json", &serde_json::json!({ "k": cfg.k, "samples": lambdas.len() - gaps.len(), "gaps": gaps }))?;
    let mut o = Outcome::default();
    o.push("Pohozaev and Nehari residuals below tolerance", accepted);
    Ok(o)
}

pub fn mp_level(cfg: &RunConfig, out: &mut Sink) -> Result<Outcome, Failure> {
    let nl = cfg.nonlinearity()?;
    let lambda = cfg.lambda.value;
    let opts = PathOptions {
        nodes: cfg.path.nodes,
        max_sweeps: cfg.path.max_sweeps,
        grid: cfg.grid_policy()?,
        ..PathOptions::default()
    };
    let path = mp_level_path(&nl, lambda, &opts)?;
    let least = mp_level_least_energy(&nl, lambda, &cfg.shoot_options()?)?;
    let gap = (path.level - least).abs() / least.abs();
    out.write("path_history.csv", &path.history_csv())?;
    out.json(
        "mp_level.json",
        &serde_json::json!({
            "lambda": lambda,
            "path_level": path.level,
            "least_energy": least,
            "relative_gap": gap,
            "sweeps": path.sweeps,
            "converged": path.converged,
            "residual": path.residual,
        }),
    )?;
    let mut o = Outcome::default();
    o.push("path minimax level equals the least energy", path.converged && gap <= cfg.tolerances.identity);
    Ok(o)
}

pub fn thresholds(cfg: &RunConfig, out: &mut Sink) -> Result<Outcome, Failure> {
    let nl = cfg.nonlinearity()?;
    let shoot = cfg.shoot_options()?;
    let mut summary = Vec::new();
    let mut prev: Option<f64> = None;
    let mut ordered = true;
    for k in 0..=cfg.thresholds.k_max {
        let c = threshold_curve(&nl, k, cfg.lambda.window, cfg.lambda.samples, &shoot)?;
        out.write(&format!("threshold_k{k}.csv"), &c.to_csv())?;
        if let Some(p) = prev {
            ordered &= c.m_k >= p;
        }
        prev = Some(c.m_k);
        let location = match c.inf_location {
            InfLocation::Interior(l) => serde_json::json!(l),
            InfLocation::LeftBoundary => serde_json::json!("left boundary (limit)"),
            InfLocation::RightBoundary => serde_json::json!("right boundary (limit)"),
        };
        summary.push(serde_json::json!({
            "k": k,
            "m_k": c.m_k,
            "window": c.window,
            "inf_location": location,
            "ratio_spread": c.ratio_spread(),
            "gaps": c.gaps,
        }));
    }
    out.json("thresholds.json", &summary)?;
    let mut o = Outcome::default();
    o.push("thresholds are nondecreasing in the node count", ordered);
    Ok(o)
}

fn solve_options(cfg: &RunConfig) -> Result<SolveOptions, Failure> {
    let shoot = cfg.shoot_options()?;
    Ok(SolveOptions {
        window: cfg.lambda.window,
        samples: cfg.lambda.samples,
        mass_tol: cfg.tolerances.mass,
        sphere: SphereOptions {
            grid: shoot.grid.clone(),
            grid_lambda: cfg.sphere.grid_lambda,
            max_iter: cfg.sphere.max_iter,
            tol: cfg.sphere.tol,
            ..SphereOptions::default()
        },
        shoot,
        flow_start: cfg.solve.flow_start,
        ..SolveOptions::default()
    })
}

fn method(m: MethodSpec) -> Method {
    match m {
        MethodSpec::BranchRootFind => Method::BranchRootFind,
        MethodSpec::DeformFlow => Method::DeformFlow,
        MethodSpec::SphereMinimize => Method::SphereMinimize,
    }
}

fn mass_runs(
    cfg: &RunConfig,
    out: &mut Sink,
    stem: &str,
    run: impl Fn(f64) -> Result<SolveReport, Error>,
) -> Result<Outcome, Failure> {
    let mut reports = Vec::new();
    let mut o = Outcome::default();
    for (i, m) in cfg.masses()?.into_iter().enumerate() {
        let r = run(m)?;
        out.write(&format!("{stem}_profile_{i}.csv"), &profile_csv(&r.u))?;
        o.push(
            &format!("normalized solution invariants at m = {m}"),
            r.zero_suspected || r.satisfies_invariants(cfg.tolerances.pohozaev),
        );
        reports.push(r);
    }
    out.json(&format!("{stem}.json"), &reports)?;
    Ok(o)
}

pub fn solve(cfg: &RunConfig, out: &mut Sink) -> Result<Outcome, Failure> {
    let nl = cfg.nonlinearity()?;
    let so = solve_options(cfg)?;
    let meth = method(cfg.solve.method);
    mass_runs(cfg, out, "solve", |m| solve_normalized(&nl, m, meth, &so))
}

pub fn minimize(cfg: &RunConfig, out: &mut Sink) -> Result<Outcome, Failure> {
    let nl = cfg.nonlinearity()?;
    let so = solve_options(cfg)?;
    mass_runs(cfg, out, "minimize", |m| minimize_on_sphere(&nl, m, &so.sphere))
}

pub fn verify(cfg: &RunConfig, out: &mut Sink) -> Result<Outcome, Failure> {
    let nl = cfg.nonlinearity()?;
    let opts = VerifyOptions {
        solve: solve_options(cfg)?,
        threshold_samples: cfg.lambda.samples,
        identity_tol: cfg.tolerances.identity,
        energy_tol: cfg.tolerances.energy,
        pohozaev_tol: cfg.tolerances.pohozaev,
    };
    let mut o = Outcome::default();
    let mut reports = Vec::new();
    for m in cfg.masses()? {
        let rep = verify_identities(&nl, m, &opts)?;
        for c in &rep.claims {
            o.claims.push(ClaimOutcome {
                paper_ref: format!("{} (m = {m})", c.paper_ref),
                status: match c.status {
                    ClaimStatus::Pass => "pass",
                    ClaimStatus::Fail => "fail",
                    ClaimStatus::Skipped => "skipped",
                }
                .into(),
            });
        }
        reports.push(rep);
    }
    out.json("claims.json", &reports)?;
    Ok(o)
}

pub fn flow(cfg: &RunConfig, out: &mut Sink) -> Result<Outcome, Failure> {
    #[derive(Serialize)]
    struct Run {
        start: usize,
        start_j: f64,
        end_j: f64,
        steps: usize,
        end: FlowEnd,
        monotone: bool,
        below_window: bool,
        identity: bool,
        mirrored: bool,
    }
    let nl = cfg.nonlinearity()?;
    let m = cfg.mass.m.ok_or_else(|| ConfigError::Field {
        field: "mass.m".into(),
        message: "flow needs `mass.m`".into(),
    })?;
    let so = solve_options(cfg)?;
    let crit = solve_normalized(&nl, m, Method::BranchRootFind, &so)?;
    let b = crit.i;
    let eps_bar = cfg.flow.window_fraction * b.abs();
    let mut fo = FlowOptions::new(b, eps_bar, cfg.flow.rho);
    fo.max_steps = cfg.flow.max_steps;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let spread = cfg.flow.spread;
    let grid = crit.u.grid.clone();
    let mut runs = Vec::new();
    for i in 0..cfg.flow.starts {
        let (a, w): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0) / crit.mu.sqrt());
        let bump = grid.sample(|r| a * (-(r / w).powi(2)).exp());
        let u = crit
            .u
            .scaled(1.0 + rng.gen_range(-spread..spread))
            .axpy(spread, &bump)?;
        let start = AugmentedPoint::new(
            rng.gen_range(-spread..spread),
            crit.lambda_star + rng.gen_range(-spread..spread),
            u,
        );
        let start_j = energies(&start, &nl, m)?.j;
        let tr = deform(&start, &nl, m, &fo)?;
        let tm = deform(&start.mirrored(), &nl, m, &fo)?;
        let mirrored = tr.points.len() == tm.points.len() && tr.points.iter().zip(&tm.points).all(|(p, q)| *q == p.mirrored());
        out.write(&format!("flow_{i:02}.csv"), &tr.to_csv())?;
        runs.push(Run {
            start: i,
            start_j,
            end_j: tr.steps.last().expect("trace has a start").report.j,
            steps: tr.steps.len() - 1,
            end: tr.end,
            monotone: tr.is_monotone(),
            below_window: start_j < b - eps_bar,
            identity: tr.is_identity(),
            mirrored,
        });
    }
    out.json(
        "flow.json",
        &serde_json::json!({ "m": m, "b": b, "eps_bar": eps_bar, "rho": cfg.flow.rho, "runs": runs }),
    )?;
    let mut o = Outcome::default();
    o.push("every flow trace is J-monotone", runs.iter().all(|r| r.monotone));
    o.push("flow is the identity below the level window", runs.iter().all(|r| !r.below_window || r.identity));
    o.push("flow commutes with u -> -u", runs.iter().all(|r| r.mirrored));
    Ok(o)
}
