//! Nonlinearities `g` and their primitives `G(ξ) = ∫₀^ξ g`.
//!
//! Four families are built in. [`Nonlinearity::classify`] checks each one
//! against the standing hypotheses:
//!
//! * (g1) `g` is continuous,
//! * (g2) `g(ξ)/ξ → 0` as `ξ → 0`,
//! * (g3) `|g(ξ)|/|ξ|^p → 0` as `|ξ| → ∞`, where `p = 1 + 4/N`,
//! * (g4) `G(ξ₀) > 0` for some `ξ₀ > 0`,
//! * (g5) `g` is odd.
//!
//! It also checks the two small-amplitude alternatives: the mass-subcritical
//! blow-up `g(ξ)/(|ξ|^{4/N} ξ) → ∞`, and the critical-or-weaker bound
//! `limsup |g|/|ξ|^p < ∞`. At most one of them can hold.
//!
//! The closed-form families are classified analytically. Tabulated data
//! leads only to sampled judgements, and an unknown tail is reported as
//! such instead of being guessed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::golden_max;

/// One term `c·|ξ|^{e-1}ξ` of a combined power nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub coefficient: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interp {
    Linear,
    MonotoneCubic,
}

/// How a tabulated `g` behaves beyond its samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TailRule {
    /// Evaluate by linear extrapolation, but refuse to draw asymptotic
    /// conclusions.
    #[default]
    Undetermined,
    /// Fit a power law to the outermost samples. Accepted only if
    /// successive local exponents agree.
    PowerFit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PowerLaw {
    exponent: f64,
    coefficient: f64,
}

/// Sampled `g` with an interpolation rule and cumulative primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
    cum: Vec<f64>,
    zero_offset: f64,
    odd_extension: bool,
    interp: Interp,
    tail: TailRule,
    right_fit: Option<PowerLaw>,
    left_fit: Option<PowerLaw>,
    head_exponent: Option<f64>,
}

impl Table {
    /// Builds a table from `(ξ, g)` samples with strictly increasing `ξ`.
    ///
    /// Samples confined to `ξ ≥ 0` are extended oddly. Otherwise the samples
    /// must bracket zero.
    pub fn new(points: &[(f64, f64)], interp: Interp, tail: TailRule) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Domain("a tabulated nonlinearity needs at least two samples".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Domain(format!(
                    "tabulated xi must be strictly increasing (found {} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if points.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::Domain("tabulated samples must be finite".into()));
        }
        let mut x: Vec<f64> = points.iter().map(|p| p.0).collect();
        let mut y: Vec<f64> = points.iter().map(|p| p.1).collect();
        let odd_extension = x[0] >= 0.0;
        if odd_extension {
            if x[0] == 0.0 {
                if y[0] != 0.0 {
                    return Err(Error::Domain("odd extension requires g(0) = 0".into()));
                }
            } else {
                x.insert(0, 0.0);
                y.insert(0, 0.0);
            }
        } else if *x.last().unwrap() <= 0.0 {
            return Err(Error::Domain("tabulated samples must bracket xi = 0".into()));
        }
        // Linear segments use secant slopes, looked up per segment.
        let d = match interp {
            Interp::Linear => vec![0.0; x.len()],
            Interp::MonotoneCubic => pchip_slopes(&x, &y),
        };
        let mut t = Table {
            x,
            y,
            d,
            cum: Vec::new(),
            zero_offset: 0.0,
            odd_extension,
            interp,
            tail,
            right_fit: None,
            left_fit: None,
            head_exponent: None,
        };
        let mut cum = vec![0.0; t.x.len()];
        for i in 1..t.x.len() {
            cum[i] = cum[i - 1] + t.segment_integral(i - 1, 1.0);
        }
        t.cum = cum;
        t.zero_offset = t.integral_from_start(0.0);
        if tail == TailRule::PowerFit {
            let n = t.x.len();
            let right: Vec<(f64, f64)> = (n.saturating_sub(3)..n).map(|i| (t.x[i], t.y[i])).collect();
            t.right_fit = fit_power(&right);
            if !odd_extension {
                let left: Vec<(f64, f64)> = (0..3.min(n)).rev().map(|i| (t.x[i], t.y[i])).collect();
                t.left_fit = fit_power(&left);
            }
            let head: Vec<(f64, f64)> = t
                .x
                .iter()
                .zip(&t.y)
                .filter(|(a, _)| **a > 0.0)
                .take(3)
                .map(|(a, b)| (*a, *b))
                .collect();
            t.head_exponent = fit_power(&head).map(|f| f.exponent);
        }
        Ok(t)
    }

    /// Parses two-column `ξ g` text (whitespace or comma separated, `#`
    /// comments allowed).
    pub fn from_text(text: &str, interp: Interp, tail: TailRule) -> Result<Self> {
        let mut pts = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            if cols.len() != 2 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected two columns, found {}", cols.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno + 1,
                    message: e.to_string(),
                })
            };
            pts.push((parse(cols[0])?, parse(cols[1])?));
        }
        Table::new(&pts, interp, tail)
    }

    fn slopes(&self, i: usize) -> (f64, f64) {
        match self.interp {
            Interp::Linear => {
                let s = (self.y[i + 1] - self.y[i]) / (self.x[i + 1] - self.x[i]);
                (s, s)
            }
            Interp::MonotoneCubic => (self.d[i], self.d[i + 1]),
        }
    }

    /// `∫` over the first `tau ∈ [0, 1]` fraction of segment `i`.
    fn segment_integral(&self, i: usize, tau: f64) -> f64 {
        let h = self.x[i + 1] - self.x[i];
        let (d0, d1) = self.slopes(i);
        let t2 = tau * tau;
        let t3 = t2 * tau;
        let t4 = t3 * tau;
        let h00 = tau - t3 + 0.5 * t4;
        let h10 = 0.5 * t2 - 2.0 * t3 / 3.0 + 0.25 * t4;
        let h01 = t3 - 0.5 * t4;
        let h11 = -t3 / 3.0 + 0.25 * t4;
        h * (h00 * self.y[i] + h10 * h * d0 + h01 * self.y[i + 1] + h11 * h * d1)
    }

    fn locate(&self, xi: f64) -> usize {
        let k = self.x.partition_point(|&v| v <= xi);
        k.saturating_sub(1).min(self.x.len() - 2)
    }

    fn eval_inner(&self, xi: f64) -> (f64, f64) {
        let n = self.x.len();
        let x0 = self.x[0];
        let xn = self.x[n - 1];
        if xi > xn {
            let yn = self.y[n - 1];
            return match self.right_fit {
                Some(f) => (f.coefficient * xi.powf(f.exponent), f.exponent * f.coefficient * xi.powf(f.exponent - 1.0)),
                None => {
                    let (_, s) = self.slopes(n - 2);
                    (yn + s * (xi - xn), s)
                }
            };
        }
        if xi < x0 {
            let y0 = self.y[0];
            return match self.left_fit {
                Some(f) => {
                    let a = -xi;
                    (-f.coefficient * a.powf(f.exponent), f.exponent * f.coefficient * a.powf(f.exponent - 1.0))
                }
                None => {
                    let (s, _) = self.slopes(0);
                    (y0 + s * (xi - x0), s)
                }
            };
        }
        let i = self.locate(xi);
        let h = self.x[i + 1] - self.x[i];
        let t = (xi - self.x[i]) / h;
        let (d0, d1) = self.slopes(i);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let g = h00 * self.y[i] + h10 * h * d0 + h01 * self.y[i + 1] + h11 * h * d1;
        let dh00 = (6.0 * t2 - 6.0 * t) / h;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = (-6.0 * t2 + 6.0 * t) / h;
        let dh11 = 3.0 * t2 - 2.0 * t;
        let dg = dh00 * self.y[i] + dh10 * d0 + dh01 * self.y[i + 1] + dh11 * d1;
        (g, dg)
    }

    fn integral_from_start(&self, xi: f64) -> f64 {
        let n = self.x.len();
        let x0 = self.x[0];
        let xn = self.x[n - 1];
        if xi > xn {
            let base = self.cum[n - 1];
            let yn = self.y[n - 1];
            return match self.right_fit {
                Some(f) => {
                    let e1 = f.exponent + 1.0;
                    base + f.coefficient * (xi.powf(e1) - xn.powf(e1)) / e1
                }
                None => {
                    let (_, s) = self.slopes(n - 2);
                    let dx = xi - xn;
                    base + yn * dx + 0.5 * s * dx * dx
                }
            };
        }
        if xi < x0 {
            let y0 = self.y[0];
            return match self.left_fit {
                Some(f) => {
                    let e1 = f.exponent + 1.0;
                    // ∫_{x0}^{xi} -c|t|^e dt with t < 0
                    let a = -xi;
                    let a0 = -x0;
                    f.coefficient * (a.powf(e1) - a0.powf(e1)) / e1
                }
                None => {
                    let (s, _) = self.slopes(0);
                    let dx = xi - x0;
                    y0 * dx + 0.5 * s * dx * dx
                }
            };
        }
        let i = self.locate(xi);
        let tau = (xi - self.x[i]) / (self.x[i + 1] - self.x[i]);
        self.cum[i] + self.segment_integral(i, tau)
    }

    fn g(&self, xi: f64) -> f64 {
        if self.odd_extension && xi < 0.0 {
            -self.eval_inner(-xi).0
        } else {
            self.eval_inner(xi).0
        }
    }

    fn prim(&self, xi: f64) -> f64 {
        if self.odd_extension {
            self.integral_from_start(xi.abs()) - self.zero_offset
        } else {
            self.integral_from_start(xi) - self.zero_offset
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.y.iter().copied())
    }

    pub fn tail_rule(&self) -> TailRule {
        self.tail
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = del[0];
        d[1] = del[0];
        return d;
    }
    for i in 1..n - 1 {
        if del[i - 1] * del[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let mut s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            s = 0.0;
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            s = 3.0 * d0;
        }
        s
    };
    d[0] = end(h[0], h[1], del[0], del[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

/// Log-log power fit through samples ordered outward. Accepted when the
/// two successive local exponents agree within 2%.
fn fit_power(pts: &[(f64, f64)]) -> Option<PowerLaw> {
    if pts.len() < 3 {
        return None;
    }
    let ax: Vec<f64> = pts.iter().map(|p| p.0.abs()).collect();
    let ay: Vec<f64> = pts.iter().map(|p| p.1.abs()).collect();
    if ax.iter().any(|&v| v <= 0.0) || ay.iter().any(|&v| v <= 0.0) {
        return None;
    }
    if pts.iter().map(|p| p.1.signum() * p.0.signum()).any(|s| s != pts[0].1.signum() * pts[0].0.signum()) {
        return None;
    }
    let e1 = (ay[1] / ay[0]).ln() / (ax[1] / ax[0]).ln();
    let e2 = (ay[2] / ay[1]).ln() / (ax[2] / ax[1]).ln();
    if (e1 - e2).abs() > 0.02 * e2.abs().max(1.0) {
        return None;
    }
    // Richardson-style: trust the outermost local exponent.
    let exponent = e2;
    let last = pts[2];
    let coefficient = last.1.abs() / last.0.abs().powf(exponent) * (last.1 * last.0).signum();
    Some(PowerLaw { exponent, coefficient })
}

#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearityKind {
    PurePower { q: f64 },
    CombinedPower { terms: Vec<PowerTerm> },
    /// `g(ξ) = |ξ|^{q-1} ξ / (1 + |ξ|^s)`
    Saturating { q: f64, s: f64 },
    Tabulated(Table),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    pub kind: NonlinearityKind,
    /// Spatial dimension `N`.
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CondStatus {
    Pass,
    Fail,
    NotApplicable,
    /// A sampled judgement could not decide the condition.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trilean {
    Holds,
    Fails,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub g1: CondStatus,
    pub g2: CondStatus,
    pub g3: CondStatus,
    pub g4: CondStatus,
    pub g5: CondStatus,
    /// `g(ξ)/(|ξ|^{4/N}ξ) → ∞` as `ξ → 0`.
    pub cond_02: Trilean,
    /// `limsup_{ξ→0} |g(ξ)|/|ξ|^p < ∞`.
    pub cond_112: Trilean,
    pub notes: String,
}

impl ConditionReport {
    pub fn standing_hypotheses_hold(&self) -> bool {
        [self.g1, self.g2, self.g3, self.g4].iter().all(|c| *c == CondStatus::Pass)
    }
}

/// `λ₀ = log(2 sup G(ξ)/ξ²)`, which may be infinite or undecidable from data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda0 {
    Finite(f64),
    Infinite,
    Undetermined,
}

impl Lambda0 {
    /// `λ < λ₀`, treating an undetermined threshold as unbounded.
    pub fn admits(&self, lambda: f64) -> bool {
        match self {
            Lambda0::Finite(l) => lambda < *l,
            Lambda0::Infinite | Lambda0::Undetermined => true,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Lambda0::Finite(l) => Some(*l),
            _ => None,
        }
    }
}

const EXP_TOL: f64 = 0.02;
/// Inflation applied to the lattice optimum of the envelope constant.
pub const ENVELOPE_SAFETY: f64 = 1.05;

/// Log-spaced magnitudes `lo..=hi`.
pub fn log_lattice(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

impl Nonlinearity {
    pub fn new(kind: NonlinearityKind, dim: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::Config {
                field: "N".into(),
                message: "dimension must be at least 1".into(),
            });
        }
        match &kind {
            NonlinearityKind::PurePower { q } if !(*q > 1.0) || !q.is_finite() => {
                return Err(Error::Config {
                    field: "nonlinearity.q".into(),
                    message: format!("pure power exponent must exceed 1 (got {q})"),
                })
            }
            NonlinearityKind::CombinedPower { terms } => {
                if terms.is_empty() {
                    return Err(Error::Config {
                        field: "nonlinearity.terms".into(),
                        message: "at least one term is required".into(),
                    });
                }
                if let Some(t) = terms.iter().find(|t| !(t.exponent > 1.0) || !t.coefficient.is_finite()) {
                    return Err(Error::Config {
                        field: "nonlinearity.terms".into(),
                        message: format!("exponents must exceed 1 (got {})", t.exponent),
                    });
                }
            }
            NonlinearityKind::Saturating { q, s } if !(*q > 1.0) || !(*s > 0.0) => {
                return Err(Error::Config {
                    field: "nonlinearity".into(),
                    message: format!("saturating kind needs q > 1 and s > 0 (got q={q}, s={s})"),
                })
            }
            _ => {}
        }
        Ok(Self { kind, dim })
    }

    pub fn pure_power(q: f64, dim: usize) -> Result<Self> {
        Self::new(NonlinearityKind::PurePower { q }, dim)
    }

    pub fn saturating(q: f64, s: f64, dim: usize) -> Result<Self> {
        Self::new(NonlinearityKind::Saturating { q, s }, dim)
    }

    pub fn combined(terms: &[(f64, f64)], dim: usize) -> Result<Self> {
        let terms = terms
            .iter()
            .map(|&(coefficient, exponent)| PowerTerm { coefficient, exponent })
            .collect();
        Self::new(NonlinearityKind::CombinedPower { terms }, dim)
    }

    /// Mass-critical exponent `p = 1 + 4/N`.
    pub fn critical_exponent(&self) -> f64 {
        1.0 + 4.0 / self.dim as f64
    }

    pub fn is_odd(&self) -> bool {
        match &self.kind {
            NonlinearityKind::Tabulated(t) => t.odd_extension,
            _ => true,
        }
    }

    /// `g(ξ)`. Finite for finite input.
    pub fn g(&self, xi: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::PurePower { q } => signed_pow(xi, *q),
            NonlinearityKind::CombinedPower { terms } => {
                let a = xi.abs();
                let mag: f64 = terms.iter().map(|t| t.coefficient * a.powf(t.exponent)).sum();
                if xi < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
            NonlinearityKind::Saturating { q, s } => {
                let a = xi.abs();
                let mag = a.powf(*q) / (1.0 + a.powf(*s));
                if xi < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
            NonlinearityKind::Tabulated(t) => t.g(xi),
        }
    }

    /// `g'(ξ)`, the derivative of the interpolant for tabulated data.
    pub fn dg(&self, xi: f64) -> f64 {
        let a = xi.abs();
        match &self.kind {
            NonlinearityKind::PurePower { q } => q * a.powf(q - 1.0),
            NonlinearityKind::CombinedPower { terms } => {
                terms.iter().map(|t| t.coefficient * t.exponent * a.powf(t.exponent - 1.0)).sum()
            }
            NonlinearityKind::Saturating { q, s } => {
                let as_ = a.powf(*s);
                let den = 1.0 + as_;
                (q * a.powf(q - 1.0) * den - s * a.powf(q + s - 1.0)) / (den * den)
            }
            NonlinearityKind::Tabulated(t) => {
                if t.odd_extension {
                    t.eval_inner(a).1
                } else {
                    t.eval_inner(xi).1
                }
            }
        }
    }

    /// `G(ξ) = ∫₀^ξ g`.
    pub fn big_g(&self, xi: f64) -> f64 {
        let a = xi.abs();
        match &self.kind {
            NonlinearityKind::PurePower { q } => a.powf(q + 1.0) / (q + 1.0),
            NonlinearityKind::CombinedPower { terms } => terms
                .iter()
                .map(|t| t.coefficient * a.powf(t.exponent + 1.0) / (t.exponent + 1.0))
                .sum(),
            NonlinearityKind::Saturating { q, s } => saturating_primitive(a, *q, *s),
            NonlinearityKind::Tabulated(t) => t.prim(xi),
        }
    }

    /// `(g(ξ), G(ξ))`, rejecting non-finite input.
    pub fn eval_pair(&self, xi: f64) -> Result<(f64, f64)> {
        if !xi.is_finite() {
            return Err(Error::Domain(format!("nonlinearity evaluated at non-finite xi = {xi}")));
        }
        Ok((self.g(xi), self.big_g(xi)))
    }

    pub fn classify(&self) -> ConditionReport {
        let p = self.critical_exponent();
        use CondStatus::*;
        let pass_if = |b: bool| if b { Pass } else { Fail };
        let tri = |b: bool| if b { Trilean::Holds } else { Trilean::Fails };
        match &self.kind {
            NonlinearityKind::PurePower { q } => ConditionReport {
                g1: Pass,
                g2: pass_if(*q > 1.0),
                g3: pass_if(*q < p),
                g4: Pass,
                g5: Pass,
                cond_02: tri(*q < p),
                cond_112: tri(*q >= p),
                notes: format!("pure power q = {q}, mass-critical exponent p = {p}"),
            },
            NonlinearityKind::Saturating { q, s } => ConditionReport {
                g1: Pass,
                g2: pass_if(*q > 1.0),
                g3: pass_if(q - s < p),
                g4: Pass,
                g5: Pass,
                cond_02: tri(*q < p),
                cond_112: tri(*q >= p),
                notes: format!("saturating q = {q}, s = {s}: |g| ~ |xi|^{} at infinity, p = {p}", q - s),
            },
            NonlinearityKind::CombinedPower { terms } => {
                let live: Vec<&PowerTerm> = terms.iter().filter(|t| t.coefficient != 0.0).collect();
                if live.is_empty() {
                    return ConditionReport {
                        g1: Pass,
                        g2: Pass,
                        g3: Pass,
                        g4: Fail,
                        g5: Pass,
                        cond_02: Trilean::Fails,
                        cond_112: Trilean::Holds,
                        notes: "all coefficients vanish: g = 0".into(),
                    };
                }
                let lo = live.iter().min_by(|a, b| a.exponent.total_cmp(&b.exponent)).unwrap();
                let hi = live.iter().max_by(|a, b| a.exponent.total_cmp(&b.exponent)).unwrap();
                let g4 = log_lattice(4001, 1e-8, 1e8).into_iter().any(|x| self.big_g(x) > 0.0);
                ConditionReport {
                    g1: Pass,
                    g2: pass_if(lo.exponent > 1.0),
                    g3: pass_if(hi.exponent < p),
                    g4: pass_if(g4),
                    g5: Pass,
                    cond_02: tri(lo.exponent < p && lo.coefficient > 0.0),
                    cond_112: tri(lo.exponent >= p),
                    notes: format!(
                        "combined power: leading exponent {} near 0, {} at infinity; (g4) by lattice search",
                        lo.exponent, hi.exponent
                    ),
                }
            }
            NonlinearityKind::Tabulated(t) => {
                let mut notes = vec!["tabulated: continuity from interpolation".to_string()];
                let g4 = t.samples().any(|(x, _)| x != 0.0 && self.big_g(x) > 0.0)
                    || log_lattice(400, 1e-6, t.x.last().copied().unwrap_or(1.0).abs().max(1e-6))
                        .into_iter()
                        .any(|x| self.big_g(x) > 0.0);
                let g5 = if t.odd_extension {
                    notes.push("odd extension of one-sided samples".into());
                    Pass
                } else {
                    let sym = t.samples().all(|(x, y)| {
                        let other = self.g(-x);
                        (other + y).abs() <= 1e-12 * (1.0 + y.abs())
                    });
                    pass_if(sym)
                };
                let (g2, cond_02, cond_112) = match t.head_exponent {
                    Some(e) => {
                        notes.push(format!("head exponent fit {e:.4}"));
                        let g2 = if e > 1.0 + EXP_TOL {
                            Pass
                        } else if e < 1.0 - EXP_TOL {
                            Fail
                        } else {
                            Inconclusive
                        };
                        let (c02, c112) = if e < p - EXP_TOL {
                            (Trilean::Holds, Trilean::Fails)
                        } else if e > p + EXP_TOL {
                            (Trilean::Fails, Trilean::Holds)
                        } else {
                            (Trilean::Undetermined, Trilean::Undetermined)
                        };
                        (g2, c02, c112)
                    }
                    None => {
                        notes.push("behaviour at 0 undetermined".into());
                        (Inconclusive, Trilean::Undetermined, Trilean::Undetermined)
                    }
                };
                let mut tails = vec![t.right_fit];
                if !t.odd_extension {
                    tails.push(t.left_fit);
                }
                let g3 = if tails.iter().all(|f| f.is_some()) {
                    let worst = tails.iter().map(|f| f.unwrap().exponent).fold(f64::MIN, f64::max);
                    notes.push(format!("tail exponent fit {worst:.4}"));
                    if worst < p - EXP_TOL {
                        Pass
                    } else if worst > p + EXP_TOL {
                        Fail
                    } else {
                        Inconclusive
                    }
                } else {
                    notes.push("tail undetermined".into());
                    Inconclusive
                };
                ConditionReport {
                    g1: Pass,
                    g2,
                    g3,
                    g4: pass_if(g4),
                    g5,
                    cond_02,
                    cond_112,
                    notes: notes.join("; "),
                }
            }
        }
    }

    /// `sup_{ξ≠0} G(ξ)/ξ²` by lattice scan refined with golden section in
    /// `log|ξ|`. Only meaningful when the supremum is attained.
    fn scanned_sup_ratio(&self, hi: f64) -> f64 {
        let lat = log_lattice(10_000, 1e-8, hi);
        let mut best = f64::NEG_INFINITY;
        let mut arg = (0usize, 1.0f64);
        for sign in [1.0, -1.0] {
            for (i, &a) in lat.iter().enumerate() {
                let x = sign * a;
                let r = self.big_g(x) / (x * x);
                if r > best {
                    best = r;
                    arg = (i, sign);
                }
            }
        }
        let (i, sign) = arg;
        let lo = lat[i.saturating_sub(1)].ln();
        let up = lat[(i + 1).min(lat.len() - 1)].ln();
        let (_, refined) = golden_max(
            |t| {
                let x = sign * t.exp();
                self.big_g(x) / (x * x)
            },
            lo,
            up,
            1e-12,
        );
        best.max(refined)
    }

    /// `λ₀ = log(2 sup G/ξ²)`; a nonpositive supremum is a (g4) violation.
    pub fn lambda0(&self) -> Result<Lambda0> {
        let finite = |sup: f64| {
            if sup <= 0.0 {
                Err(Error::G4Violation { sup })
            } else {
                Ok(Lambda0::Finite((2.0 * sup).ln()))
            }
        };
        match &self.kind {
            NonlinearityKind::PurePower { .. } => Ok(Lambda0::Infinite),
            NonlinearityKind::Saturating { q, s } => {
                let tail = q - s;
                if tail > 1.0 {
                    Ok(Lambda0::Infinite)
                } else if tail == 1.0 {
                    // g/ξ increases to 1, so G/ξ² increases to 1/2.
                    finite(0.5)
                } else {
                    finite(self.scanned_sup_ratio(1e8))
                }
            }
            NonlinearityKind::CombinedPower { terms } => {
                let live: Vec<&PowerTerm> = terms.iter().filter(|t| t.coefficient != 0.0).collect();
                match live.iter().max_by(|a, b| a.exponent.total_cmp(&b.exponent)) {
                    Some(hi) if hi.coefficient > 0.0 => Ok(Lambda0::Infinite),
                    Some(_) => finite(self.scanned_sup_ratio(1e8)),
                    None => Err(Error::G4Violation { sup: 0.0 }),
                }
            }
            NonlinearityKind::Tabulated(t) => {
                let xmax = t.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let tails: Vec<Option<PowerLaw>> = if t.odd_extension {
                    vec![t.right_fit]
                } else {
                    vec![t.right_fit, t.left_fit]
                };
                // Without a tail the samples cannot bound G/ξ² beyond the table.
                if tails.iter().any(|f| f.is_none()) {
                    return Ok(Lambda0::Undetermined);
                }
                let mut infinite = false;
                for f in tails.iter().flatten() {
                    if f.exponent > 1.0 + EXP_TOL && f.coefficient > 0.0 {
                        infinite = true;
                    } else if (f.exponent - 1.0).abs() <= EXP_TOL {
                        return Ok(Lambda0::Undetermined);
                    }
                }
                if infinite {
                    Ok(Lambda0::Infinite)
                } else {
                    finite(self.scanned_sup_ratio(1e8 * xmax.max(1.0)))
                }
            }
        }
    }

    /// Lattice optimum of the smallest `C` with
    /// `ξ g(ξ) ≤ C ξ² + δ |ξ|^{p+1}`, before inflation.
    pub fn envelope_optimum(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::Domain(format!("envelope delta must be positive and finite (got {delta})")));
        }
        let report = self.classify();
        if report.g2 != CondStatus::Pass {
            return Err(Error::Infeasible {
                limit: "g(xi)/xi as xi -> 0".into(),
            });
        }
        if report.g3 != CondStatus::Pass {
            return Err(Error::Infeasible {
                limit: "|g(xi)|/|xi|^p as |xi| -> infinity".into(),
            });
        }
        let p = self.critical_exponent();
        let h = |x: f64| (x * self.g(x) - delta * x.abs().powf(p + 1.0)) / (x * x);
        let lat = log_lattice(10_000, 1e-8, 1e8);
        let mut best = 0.0f64;
        let mut arg: Option<(usize, f64)> = None;
        for sign in [1.0, -1.0] {
            for (i, &a) in lat.iter().enumerate() {
                let v = h(sign * a);
                if v > best {
                    best = v;
                    arg = Some((i, sign));
                }
            }
        }
        if let Some((i, sign)) = arg {
            let lo = lat[i.saturating_sub(1)].ln();
            let up = lat[(i + 1).min(lat.len() - 1)].ln();
            let (_, refined) = golden_max(|t| h(sign * t.exp()), lo, up, 1e-13);
            best = best.max(refined);
        }
        Ok(best)
    }

    /// Envelope constant `C_δ`: the lattice optimum inflated by
    /// [`ENVELOPE_SAFETY`].
    pub fn envelope_constant(&self, delta: f64) -> Result<f64> {
        Ok(ENVELOPE_SAFETY * self.envelope_optimum(delta)?)
    }
}

fn signed_pow(xi: f64, q: f64) -> f64 {
    let mag = xi.abs().powf(q);
    if xi < 0.0 {
        -mag
    } else {
        mag
    }
}

/// `∫₀^a t^q/(1+t^s) dt` for `a ≥ 0`.
fn saturating_primitive(a: f64, q: f64, s: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    if q == 3.0 && s == 2.0 {
        let a2 = a * a;
        return 0.5 * (a2 - a2.ln_1p());
    }
    if s == q - 1.0 && q == 2.0 {
        // t²/(1+t) = t - 1 + 1/(1+t)
        return 0.5 * a * a - a + a.ln_1p();
    }
    // Composite Gauss–Legendre on geometrically graded pieces of [0, a].
    let (gx, gw) = gl16();
    let f = |t: f64| t.powf(q) / (1.0 + t.powf(s));
    let mut edges = vec![0.0];
    let mut e = a;
    let mut stack = Vec::new();
    while e > a * 1e-12 && e > 1e-300 {
        stack.push(e);
        e *= 0.25;
    }
    stack.reverse();
    edges.extend(stack);
    let mut total = 0.0;
    for w in edges.windows(2) {
        let (l, r) = (w[0], w[1]);
        let half = 0.5 * (r - l);
        let mid = 0.5 * (r + l);
        total += gx.iter().zip(gw.iter()).map(|(x, wt)| wt * f(mid + half * x)).sum::<f64>() * half;
    }
    total
}

fn gl16() -> (&'static [f64], &'static [f64]) {
    use std::sync::OnceLock;
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let r = RULE.get_or_init(|| crate::numerics::gauss_legendre(16));
    (&r.0, &r.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(nl: &Nonlinearity, x: f64) {
        // h-refinement: the error ratio of a central difference drops ~4x.
        let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|h| ((nl.big_g(x + h) - nl.big_g(x - h)) / (2.0 * h) - nl.g(x)).abs())
            .collect();
        let scale = 1.0 + nl.g(x).abs();
        assert!(errs[2] <= 1e-4 * scale, "x={x} errs={errs:?}");
        if errs[0] > 1e-11 * scale {
            assert!(errs[1] < errs[0] * 0.5 && errs[2] < errs[1] * 0.5, "x={x} errs={errs:?}");
        }
    }

    #[test]
    fn pure_power_pair() {
        let nl = Nonlinearity::pure_power(3.0, 2).unwrap();
        let (g, big) = nl.eval_pair(2.0).unwrap();
        assert_eq!(g, 8.0);
        assert_eq!(big, 4.0);
        assert_eq!(nl.eval_pair(0.0).unwrap(), (0.0, 0.0));
        assert!(nl.eval_pair(f64::NAN).is_err());
    }

    #[test]
    fn saturating_primitive_closed_form_and_quadrature() {
        let nl = Nonlinearity::saturating(3.0, 2.0, 2).unwrap();
        let (g, big) = nl.eval_pair(1.0).unwrap();
        assert_eq!(g, 0.5);
        assert!((big - 0.5 * (1.0 - 2f64.ln())).abs() < 1e-15);
        assert!((big - 0.15343).abs() < 1e-5);
        // cross-check the closed form against the generic quadrature branch
        for &a in &[0.01, 0.3, 1.0, 4.0, 50.0] {
            let quad = {
                let (gx, gw) = gl16();
                let n = 400;
                let h = a / n as f64;
                (0..n)
                    .map(|k| {
                        let (l, r) = (k as f64 * h, (k + 1) as f64 * h);
                        let half = 0.5 * (r - l);
                        let mid = 0.5 * (r + l);
                        gx.iter().zip(gw).map(|(x, w)| w * (mid + half * x).powi(3) / (1.0 + (mid + half * x).powi(2))).sum::<f64>() * half
                    })
                    .sum::<f64>()
            };
            assert!((quad - nl.big_g(a)).abs() < 1e-12 * (1.0 + quad), "a={a}");
        }
        let other = Nonlinearity::saturating(3.5, 1.5, 3).unwrap();
        for &x in &[0.05, 0.7, 2.0, 9.0] {
            fd_check(&other, x);
        }
    }

    #[test]
    fn primitive_is_antiderivative_for_every_kind() {
        let table = Table::new(
            &[(0.0, 0.0), (0.5, 0.1), (1.0, 0.6), (2.0, 3.0), (4.0, 9.0)],
            Interp::MonotoneCubic,
            TailRule::Undetermined,
        )
        .unwrap();
        let kinds = vec![
            Nonlinearity::pure_power(2.0, 2).unwrap(),
            Nonlinearity::pure_power(2.5, 3).unwrap(),
            Nonlinearity::combined(&[(1.0, 2.0), (-0.2, 2.5)], 2).unwrap(),
            Nonlinearity::saturating(3.0, 2.0, 2).unwrap(),
            Nonlinearity::new(NonlinearityKind::Tabulated(table), 2).unwrap(),
        ];
        for nl in &kinds {
            assert_eq!(nl.big_g(0.0), 0.0);
            for &x in &[-3.3, -0.7, 0.21, 0.9, 1.7, 3.1, 6.0] {
                fd_check(nl, x);
                if nl.is_odd() {
                    assert_eq!(nl.g(-x), -nl.g(x));
                    assert_eq!(nl.big_g(-x), nl.big_g(x));
                }
            }
        }
    }

    #[test]
    fn classification_examples() {
        let r = Nonlinearity::pure_power(2.0, 2).unwrap().classify();
        assert!(r.standing_hypotheses_hold());
        assert_eq!(r.g5, CondStatus::Pass);
        assert_eq!(r.cond_02, Trilean::Holds);
        assert_eq!(r.cond_112, Trilean::Fails);

        let r = Nonlinearity::pure_power(3.0, 2).unwrap().classify();
        assert_eq!(r.g3, CondStatus::Fail);
        assert_eq!(r.cond_112, Trilean::Holds);

        // g(ξ) = ξ² as a two-sided table: not odd.
        let pts: Vec<(f64, f64)> = (-40..=40).map(|i| i as f64 * 0.1).map(|x| (x, x * x)).collect();
        let t = Table::new(&pts, Interp::MonotoneCubic, TailRule::PowerFit).unwrap();
        let r = Nonlinearity::new(NonlinearityKind::Tabulated(t), 2).unwrap().classify();
        assert_eq!(r.g5, CondStatus::Fail);
        assert_eq!(r.g1, CondStatus::Pass);
        assert_eq!(r.g4, CondStatus::Pass);
        assert_ne!((r.cond_02, r.cond_112), (Trilean::Holds, Trilean::Holds));
    }

    #[test]
    fn lambda0_examples() {
        assert_eq!(Nonlinearity::pure_power(3.0, 2).unwrap().lambda0().unwrap(), Lambda0::Infinite);
        let sat = Nonlinearity::saturating(3.0, 2.0, 2).unwrap();
        assert_eq!(sat.lambda0().unwrap(), Lambda0::Finite(0.0));
        // independent 1-D scan oracle of G/ξ²
        let scan = log_lattice(20_000, 1e-4, 1e7)
            .into_iter()
            .map(|x| 0.5 * (1.0 - (x * x).ln_1p() / (x * x)))
            .fold(f64::MIN, f64::max);
        assert!((scan - 0.5).abs() < 1e-6);

        let neg = Nonlinearity::combined(&[(-1.0, 2.0)], 2).unwrap();
        assert!(matches!(neg.lambda0(), Err(Error::G4Violation { .. })));

        let t = Table::new(&[(0.0, 0.0), (1.0, 1.0), (2.0, 8.0)], Interp::Linear, TailRule::Undetermined).unwrap();
        let tab = Nonlinearity::new(NonlinearityKind::Tabulated(t), 2).unwrap();
        assert_eq!(tab.lambda0().unwrap(), Lambda0::Undetermined);
    }

    #[test]
    fn lambda0_consistent_with_sign_of_reduced_primitive() {
        let nl = Nonlinearity::saturating(2.5, 2.0, 2).unwrap();
        let l0 = nl.lambda0().unwrap().finite().unwrap();
        let lat = log_lattice(5000, 1e-6, 1e6);
        let exists = |lam: f64| lat.iter().any(|&x| nl.big_g(x) - 0.5 * lam.exp() * x * x > 0.0);
        assert!(exists(l0 - 0.05));
        assert!(!exists(l0 + 1e-9));
    }

    #[test]
    fn envelope_examples() {
        let nl = Nonlinearity::pure_power(2.0, 2).unwrap();
        let opt = nl.envelope_optimum(1.0).unwrap();
        assert!((opt - 0.25).abs() < 1e-10, "opt = {opt}");
        let c = nl.envelope_constant(1.0).unwrap();
        assert!((c - 1.05 * 0.25).abs() < 1e-10);
        // monotone in delta
        let cs: Vec<f64> = [0.25, 0.5, 1.0, 4.0, 16.0].iter().map(|&d| nl.envelope_constant(d).unwrap()).collect();
        assert!(cs.windows(2).all(|w| w[1] <= w[0]));
        assert!(matches!(
            Nonlinearity::pure_power(3.0, 2).unwrap().envelope_constant(0.5),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn envelope_holds_on_lattice() {
        let p = 3.0;
        for nl in [
            Nonlinearity::pure_power(2.0, 2).unwrap(),
            Nonlinearity::saturating(3.0, 2.0, 2).unwrap(),
            Nonlinearity::combined(&[(1.0, 1.5), (0.5, 2.5)], 2).unwrap(),
        ] {
            for delta in [0.1, 1.0] {
                let c = nl.envelope_constant(delta).unwrap();
                for a in log_lattice(10_000, 1e-8, 1e8) {
                    for x in [a, -a] {
                        let lhs = x * nl.g(x);
                        let rhs = c * x * x + delta * x.abs().powf(p + 1.0);
                        assert!(lhs <= rhs * (1.0 + 1e-12), "x={x}");
                    }
                }
            }
        }
    }

    #[test]
    fn tabulated_parse_and_errors() {
        let t = Table::from_text("# xi g\n0 0\n1, 1\n2 8\n", Interp::Linear, TailRule::Undetermined).unwrap();
        let nl = Nonlinearity::new(NonlinearityKind::Tabulated(t), 2).unwrap();
        assert!((nl.g(1.5) - 4.5).abs() < 1e-15);
        assert!((nl.big_g(1.0) - 0.5).abs() < 1e-15);
        assert!((nl.g(-1.5) + 4.5).abs() < 1e-15);
        assert!(Table::from_text("0 0\n1 1\n1 2\n", Interp::Linear, TailRule::Undetermined).is_err());
        assert!(matches!(
            Table::from_text("0 0\n1\n", Interp::Linear, TailRule::Undetermined),
            Err(Error::Parse { line: 2, .. })
        ));
        let r = nl.classify();
        assert_eq!(r.g3, CondStatus::Inconclusive);
        assert_eq!(r.cond_02, Trilean::Undetermined);
    }
}
