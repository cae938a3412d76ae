//! Physical and numerical parameters, their validation, and the
//! `key=value` text format they are read from.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Treatment of the contact-line boundary condition on the substrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Boundary values are unknowns relaxed with friction `pe_s`.
    Dynamic,
    /// Boundary values are slaved to the interior through the Young condition.
    Equilibrium,
}

impl FromStr for BoundaryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dynamic" => Ok(Self::Dynamic),
            "equilibrium" => Ok(Self::Equilibrium),
            _ => Err(Error::Config(format!("bad bc_kind `{s}`"))),
        }
    }
}

impl fmt::Display for BoundaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dynamic => "dynamic",
            Self::Equilibrium => "equilibrium",
        })
    }
}

/// Dimensionless model constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub cn: f64,
    pub pi_coeff: f64,
    pub ex: f64,
    pub pe_phi: f64,
    pub pe_psi: f64,
    pub pe_s: f64,
    /// Equilibrium contact angle in radians.
    pub theta_s: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub bc_kind: BoundaryKind,
}

/// `γ₂ − γ₁` implied by Young's relation `cos θ_s = 3√2(γ₂ − γ₁)/4`.
pub fn tension_difference(theta_s: f64) -> f64 {
    4.0 * theta_s.cos() / (3.0 * SQRT_2)
}

impl ModelParams {
    /// Builds parameters with `γ₁ + γ₂ = 0` and the tension difference
    /// derived from `theta_s`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cn: f64,
        pi_coeff: f64,
        ex: f64,
        pe_phi: f64,
        pe_psi: f64,
        pe_s: f64,
        theta_s: f64,
        bc_kind: BoundaryKind,
    ) -> Self {
        let mut p = Self {
            cn,
            pi_coeff,
            ex,
            pe_phi,
            pe_psi,
            pe_s,
            theta_s,
            gamma1: 0.0,
            gamma2: 0.0,
            bc_kind,
        };
        p.set_gamma_sum(0.0);
        p
    }

    /// Default constants used throughout the benchmark runs (`Cn = 0.025`,
    /// `θ_s = 120°`).
    pub fn benchmark() -> Self {
        Self::new(
            0.025,
            0.1481,
            1.0,
            20.0,
            100.0,
            1.0 / 500.0,
            120f64.to_radians(),
            BoundaryKind::Dynamic,
        )
    }

    /// Re-derives `γ₁, γ₂` from `theta_s` keeping the given sum.
    pub fn set_gamma_sum(&mut self, sum: f64) {
        let diff = tension_difference(self.theta_s);
        self.gamma1 = 0.5 * (sum - diff);
        self.gamma2 = 0.5 * (sum + diff);
    }

    pub fn gamma_sum(&self) -> f64 {
        self.gamma1 + self.gamma2
    }

    /// Constant mobility of the phase field.
    pub fn mobility_phi(&self) -> f64 {
        1.0 / self.pe_phi
    }

    /// Degenerate surfactant mobility `ψ(1−ψ)/Pe_ψ`; negative outside `[0, 1]`.
    pub fn mobility_psi(&self, psi: f64) -> f64 {
        psi * (1.0 - psi) / self.pe_psi
    }

    pub fn mobility_psi_prime(&self, psi: f64) -> f64 {
        (1.0 - 2.0 * psi) / self.pe_psi
    }
}

/// Inner optimizer used for each JKO subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Unpreconditioned three-operator primal-dual iteration.
    Pd3o,
    /// Preconditioned primal-dual iteration with FFT-based dual steps.
    PrePd,
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pd3o" => Ok(Self::Pd3o),
            "prepd" => Ok(Self::PrePd),
            _ => Err(Error::Config(format!("bad solver `{s}`"))),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pd3o => "pd3o",
            Self::PrePd => "prepd",
        })
    }
}

/// How the preconditioned dual proximal step is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualProxMode {
    /// Exact trust-region solve in the `C₂⁻¹` metric.
    Exact,
    /// Euclidean ball projection followed by one `C₂` inversion.
    InexactProjection,
}

impl FromStr for DualProxMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Self::Exact),
            "inexact" | "inexact_projection" => Ok(Self::InexactProjection),
            _ => Err(Error::Config(format!("bad dual_prox_mode `{s}`"))),
        }
    }
}

impl fmt::Display for DualProxMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::InexactProjection => "inexact",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    pub method: SolverKind,
    /// Primal step / preconditioner scale.
    pub lambda: f64,
    /// Re-derive `lambda` from the grid and the local Lipschitz bound before
    /// every step (`lambda=auto`).
    pub auto_lambda: bool,
    /// Dual step of PD3O. `None` picks `0.99 / (λ λ_max(AAᵀ))`.
    pub sigma: Option<f64>,
    /// Radius of the relaxed constraint `‖Au − b‖ ≤ δ`.
    pub delta: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub iter_max: usize,
    pub dual_prox_mode: DualProxMode,
    /// Lipschitz bound of `∇E`. `None` means "estimate at the initial state".
    pub lipschitz_estimate: Option<f64>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            method: SolverKind::PrePd,
            lambda: 100.0,
            auto_lambda: false,
            sigma: None,
            delta: 1e-7,
            eps1: 1e-5,
            eps2: 1e-5,
            iter_max: 20_000,
            dual_prox_mode: DualProxMode::InexactProjection,
            lipschitz_estimate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeParams {
    /// Smallest step; also the step used when `adaptive` is off.
    pub dt_min: f64,
    pub dt_max: f64,
    pub beta: f64,
    pub t_end: f64,
    pub adaptive: bool,
}

impl TimeParams {
    pub fn fixed(dt: f64, t_end: f64) -> Self {
        Self {
            dt_min: dt,
            dt_max: dt,
            beta: 1e4,
            t_end,
            adaptive: false,
        }
    }
}

/// Constraint violations found by [`validate`]; empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.violations.push(msg.into());
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.violations.join("; "))
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// Checks every parameter invariant that does not depend on the grid.
pub fn validate(model: &ModelParams, solver: &SolverParams, time: &TimeParams) -> ValidationReport {
    let mut r = ValidationReport::default();
    r.check(positive(model.cn), "cn must be > 0");
    r.check(positive(model.pi_coeff), "pi_coeff must be > 0");
    r.check(positive(model.ex), "ex must be > 0");
    r.check(positive(model.pe_phi), "pe_phi must be > 0");
    r.check(positive(model.pe_psi), "pe_psi must be > 0");
    match model.bc_kind {
        BoundaryKind::Dynamic => r.check(positive(model.pe_s), "pe_s must be > 0"),
        BoundaryKind::Equilibrium => r.check(
            model.pe_s.is_finite() && model.pe_s >= 0.0,
            "pe_s must be >= 0",
        ),
    }
    r.check(
        model.theta_s > 0.0 && model.theta_s < PI,
        "theta_s must lie in (0, pi)",
    );
    let young = model.theta_s.cos() - 3.0 * SQRT_2 * (model.gamma2 - model.gamma1) / 4.0;
    r.check(
        young.abs() <= 1e-12,
        format!("gamma1/gamma2 violate Young's relation (residual {young:e})"),
    );

    r.check(positive(solver.lambda), "lambda must be > 0");
    if let Some(s) = solver.sigma {
        r.check(positive(s), "sigma must be > 0");
    }
    r.check(positive(solver.delta), "delta must be > 0");
    r.check(positive(solver.eps1), "eps1 must be > 0");
    r.check(positive(solver.eps2), "eps2 must be > 0");
    r.check(solver.iter_max > 0, "iter_max must be > 0");
    if let Some(l) = solver.lipschitz_estimate {
        r.check(positive(l), "lipschitz_estimate must be > 0");
    }

    r.check(positive(time.dt_min), "dt_min must be > 0");
    r.check(positive(time.dt_max), "dt_max must be > 0");
    r.check(time.dt_min <= time.dt_max, "dt_min > dt_max");
    r.check(
        time.beta.is_finite() && (0.0..=1e12).contains(&time.beta),
        "beta must lie in [0, 1e12]",
    );
    r.check(time.t_end.is_finite() && time.t_end >= 0.0, "t_end must be >= 0");
    r
}

/// Step-size conditions that need the spectral bound `λ_max(AAᵀ)` and the
/// Lipschitz constant of `∇E`.
pub fn validate_steps(solver: &SolverParams, lambda_max_aat: f64, lipschitz: f64) -> ValidationReport {
    let mut r = ValidationReport::default();
    if lipschitz > 0.0 {
        r.check(
            solver.lambda < 2.0 / lipschitz,
            format!("lambda = {} violates lambda < 2/L = {}", solver.lambda, 2.0 / lipschitz),
        );
    }
    if solver.method == SolverKind::Pd3o {
        let sigma = solver.sigma.unwrap_or_else(|| default_sigma(solver.lambda, lambda_max_aat));
        r.check(
            sigma * solver.lambda < 1.0 / lambda_max_aat,
            format!(
                "sigma*lambda = {} violates sigma*lambda < 1/lambda_max(AA^T) = {}",
                sigma * solver.lambda,
                1.0 / lambda_max_aat
            ),
        );
    }
    r
}

pub fn default_sigma(lambda: f64, lambda_max_aat: f64) -> f64 {
    0.99 / (lambda * lambda_max_aat)
}

/// Parses `key=value` lines. Blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad value `{value}` for `{key}`"))),
    }
}

impl ModelParams {
    /// Applies one key; returns `Ok(false)` if the key is not a model key.
    ///
    /// Setting `pe_s = 0` switches to the equilibrium boundary condition.
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "cn" => self.cn = parse_num(key, value)?,
            "pi_coeff" => self.pi_coeff = parse_num(key, value)?,
            "ex" => self.ex = parse_num(key, value)?,
            "pe_phi" => self.pe_phi = parse_num(key, value)?,
            "pe_psi" => self.pe_psi = parse_num(key, value)?,
            "pe_s" => {
                self.pe_s = parse_num(key, value)?;
                if self.pe_s == 0.0 && self.bc_kind == BoundaryKind::Dynamic {
                    log::info!("pe_s = 0: switching to the equilibrium boundary condition");
                    self.bc_kind = BoundaryKind::Equilibrium;
                }
            }
            "theta_s" | "theta_deg" => {
                let sum = self.gamma_sum();
                let v: f64 = parse_num(key, value)?;
                self.theta_s = if key == "theta_deg" { v.to_radians() } else { v };
                self.set_gamma_sum(sum);
            }
            "gamma1" => self.gamma1 = parse_num(key, value)?,
            "gamma2" => self.gamma2 = parse_num(key, value)?,
            "bc_kind" => self.bc_kind = value.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("cn", self.cn.to_string()),
            ("pi_coeff", self.pi_coeff.to_string()),
            ("ex", self.ex.to_string()),
            ("pe_phi", self.pe_phi.to_string()),
            ("pe_psi", self.pe_psi.to_string()),
            ("pe_s", self.pe_s.to_string()),
            ("theta_s", self.theta_s.to_string()),
            ("gamma1", self.gamma1.to_string()),
            ("gamma2", self.gamma2.to_string()),
            ("bc_kind", self.bc_kind.to_string()),
        ]
    }
}

impl SolverParams {
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "method" | "solver" => self.method = value.parse()?,
            "lambda" => match value {
                "auto" => self.auto_lambda = true,
                v => {
                    self.lambda = parse_num(key, v)?;
                    self.auto_lambda = false;
                }
            },
            "sigma" => {
                self.sigma = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "delta" => self.delta = parse_num(key, value)?,
            "eps1" => self.eps1 = parse_num(key, value)?,
            "eps2" => self.eps2 = parse_num(key, value)?,
            "iter_max" => self.iter_max = parse_num(key, value)?,
            "dual_prox_mode" => self.dual_prox_mode = value.parse()?,
            "lipschitz_estimate" => {
                self.lipschitz_estimate = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        let opt = |o: Option<f64>| o.map_or_else(|| "auto".to_string(), |v| v.to_string());
        vec![
            ("method", self.method.to_string()),
            ("lambda", if self.auto_lambda { "auto".to_string() } else { self.lambda.to_string() }),
            ("sigma", opt(self.sigma)),
            ("delta", self.delta.to_string()),
            ("eps1", self.eps1.to_string()),
            ("eps2", self.eps2.to_string()),
            ("iter_max", self.iter_max.to_string()),
            ("dual_prox_mode", self.dual_prox_mode.to_string()),
            ("lipschitz_estimate", opt(self.lipschitz_estimate)),
        ]
    }
}

impl TimeParams {
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "dt_min" => self.dt_min = parse_num(key, value)?,
            "dt_max" => self.dt_max = parse_num(key, value)?,
            "beta" => self.beta = parse_num(key, value)?,
            "t_end" => self.t_end = parse_num(key, value)?,
            "adaptive" => self.adaptive = parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dt_min", self.dt_min.to_string()),
            ("dt_max", self.dt_max.to_string()),
            ("beta", self.beta.to_string()),
            ("t_end", self.t_end.to_string()),
            ("adaptive", self.adaptive.to_string()),
        ]
    }
}
