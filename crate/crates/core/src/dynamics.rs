//! Pseudo-spectral time integration of the parabolic–elliptic system
//!
//! ```text
//! u_t + (-Delta)^{alpha/2} u + div(u grad v) = 0,   Delta v - gamma v + u = 0
//! ```
//!
//! with a second-order exponential Runge–Kutta scheme, CFL-limited steps and
//! a numerical blowup proxy.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{GridSpec, ScalarField, VectorField};
use crate::kernel::{check_alpha, check_gamma, frac_power, MultiplierOp};
use crate::moments::{BumpProbe, MomentSeries};
use crate::spectral::Spectral;

/// Full description of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub grid: GridSpec,
    pub t_end: f64,
    /// Upper bound on every step.
    pub dt_initial: f64,
    pub dt_min: f64,
    pub cfl_safety: f64,
    pub blowup_linf_factor: f64,
    pub dealias: bool,
    pub diagnostic_stride: usize,
    pub moment_probes: Vec<BumpProbe>,
    /// When false only the linear part is integrated (diagnostic mode).
    pub nonlinearity: bool,
    /// Tail mass is measured outside `|x| >= tail_radius_fraction * L`.
    pub tail_radius_fraction: f64,
    /// Allowed tail mass relative to `|M|`.
    pub tail_tolerance: f64,
    /// Allowed fraction of flux energy removed by dealiasing.
    pub resolution_tolerance: f64,
    pub max_steps: usize,
}

impl SimConfig {
    /// Defaults for everything except the physical parameters and grid.
    pub fn new(alpha: f64, gamma: f64, grid: GridSpec) -> Self {
        Self {
            alpha,
            gamma,
            grid,
            t_end: 1.0,
            dt_initial: 1e-2,
            dt_min: 1e-9,
            cfl_safety: 0.5,
            blowup_linf_factor: 1e3,
            dealias: true,
            diagnostic_stride: 10,
            moment_probes: Vec::new(),
            nonlinearity: true,
            tail_radius_fraction: 0.375,
            tail_tolerance: 1e-6,
            resolution_tolerance: 1e-3,
            max_steps: 10_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        check_gamma(self.gamma)?;
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::out_of_range(
                    name,
                    format!("must be positive, got {v}"),
                ))
            }
        };
        positive("t_end", self.t_end)?;
        positive("dt_initial", self.dt_initial)?;
        positive("dt_min", self.dt_min)?;
        positive("blowup_linf_factor", self.blowup_linf_factor)?;
        if self.dt_min >= self.dt_initial {
            return Err(Error::out_of_range("dt_min", "must be below dt_initial"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety < 1.0) {
            return Err(Error::out_of_range("cfl_safety", "must lie in (0, 1)"));
        }
        if self.diagnostic_stride == 0 {
            return Err(Error::out_of_range("diagnostic_stride", "must be positive"));
        }
        if !(self.tail_radius_fraction > 0.0 && self.tail_radius_fraction <= 0.5) {
            return Err(Error::out_of_range(
                "tail_radius_fraction",
                "must lie in (0, 1/2]",
            ));
        }
        Ok(())
    }
}

/// Density at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub u: ScalarField,
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind")]
pub enum Verdict {
    ReachedTEnd,
    BlowupDetected { t_star: f64 },
    Unresolved { t: f64, reason: String },
}

impl Verdict {
    pub fn is_blowup(&self) -> bool {
        matches!(self, Verdict::BlowupDetected { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::ReachedTEnd => "ReachedTEnd",
            Verdict::BlowupDetected { .. } => "BlowupDetected",
            Verdict::Unresolved { .. } => "Unresolved",
        }
    }
}

/// One sampled diagnostics row (probe columns live in the moment series).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticRow {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub linf: f64,
    pub l2: f64,
    pub l4: f64,
    pub tail_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub verdict: Verdict,
    pub diagnostics: MomentSeries,
    pub rows: Vec<DiagnosticRow>,
    pub final_state: SimState,
    pub steps: usize,
    pub initial_mass: f64,
    /// First time the dealiasing filter removed more than the tolerance.
    pub resolution_lost_at: Option<f64>,
    /// First time the mass outside the tail radius exceeded its tolerance.
    pub tail_violation_at: Option<f64>,
    /// Largest relative mass drift observed while resolved.
    pub max_mass_drift: f64,
    /// Most negative `min u / max|u|` observed while resolved.
    pub min_negativity: f64,
}

impl SimOutcome {
    /// Relative mass drift between the initial and final state.
    pub fn final_mass_drift(&self) -> f64 {
        relative_drift(self.final_state.u.total_mass(), self.initial_mass)
    }

    pub fn is_resolved(&self) -> bool {
        self.resolution_lost_at.is_none()
            && self.tail_violation_at.is_none()
            && !matches!(self.verdict, Verdict::Unresolved { .. })
    }
}

fn relative_drift(m: f64, m0: f64) -> f64 {
    if m0 == 0.0 {
        m.abs()
    } else {
        ((m - m0) / m0).abs()
    }
}

/// `grad (-Delta + gamma)^{-1} u` via the multiplier `i k / (|k|^2 + gamma)`.
pub fn compute_velocity(u: &ScalarField, gamma: f64) -> Result<VectorField> {
    let helm = MultiplierOp::helmholtz_inverse(gamma)?;
    let mut spectral = Spectral::new(*u.grid());
    let mut modes = spectral.forward(u.values());
    for (c, &k2) in modes.iter_mut().zip(spectral.k_squared()) {
        *c *= helm.symbol(k2);
    }
    let (gx, gy) = spectral.gradient(&modes);
    VectorField::new(*u.grid(), gx, gy)
}

/// Quantities produced while evaluating the nonlinear term.
#[derive(Debug, Clone)]
struct FluxEval {
    n_hat: Vec<Complex64>,
    max_grad_v: f64,
    dropped_fraction: f64,
}

fn phi_functions(z: f64) -> (f64, f64, f64) {
    // e^z, (e^z - 1)/z, (e^z - 1 - z)/z^2
    if z.abs() < 1e-2 {
        let mut p1 = 0.0;
        let mut p2 = 0.0;
        let mut term = 1.0; // z^k / k!
        for k in 0..10 {
            let kf = k as f64;
            if k > 0 {
                term *= z / kf;
            }
            p1 += term / (kf + 1.0);
            p2 += term / ((kf + 1.0) * (kf + 2.0));
        }
        (z.exp(), p1, p2)
    } else {
        let em1 = z.exp_m1();
        (em1 + 1.0, em1 / z, (em1 - z) / (z * z))
    }
}

/// Per-grid integrator with precomputed symbols.
pub struct Solver {
    config: SimConfig,
    spectral: Spectral,
    lin: Vec<f64>,
    helm: Vec<f64>,
    cache_dt: f64,
    e: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
}

impl std::fmt::Debug for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solver")
            .field("config", &self.config)
            .finish()
    }
}

impl Solver {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let spectral = Spectral::new(config.grid);
        let helm_op = MultiplierOp::helmholtz_inverse(config.gamma)?;
        let lin = spectral
            .k_squared()
            .iter()
            .map(|&k2| frac_power(k2, config.alpha))
            .collect();
        let helm = spectral
            .k_squared()
            .iter()
            .map(|&k2| helm_op.symbol(k2))
            .collect();
        let len = config.grid.len();
        Ok(Self {
            config: config.clone(),
            spectral,
            lin,
            helm,
            cache_dt: f64::NAN,
            e: vec![0.0; len],
            p1: vec![0.0; len],
            p2: vec![0.0; len],
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    fn set_dt(&mut self, dt: f64) {
        if dt == self.cache_dt {
            return;
        }
        for k in 0..self.lin.len() {
            let (e, p1, p2) = phi_functions(-self.lin[k] * dt);
            self.e[k] = e;
            self.p1[k] = p1;
            self.p2[k] = p2;
        }
        self.cache_dt = dt;
    }

    /// `N(u) = -div(u grad v)` in spectral form, from spectral `u`.
    fn flux(&mut self, u_hat: &[Complex64]) -> FluxEval {
        let len = u_hat.len();
        let u = self.spectral.inverse(u_hat.to_vec());
        let v_hat: Vec<Complex64> = u_hat.iter().zip(&self.helm).map(|(c, h)| c * h).collect();
        let (gx, gy) = self.spectral.gradient(&v_hat);
        let mut max_grad_v: f64 = 0.0;
        let mut fx = Vec::with_capacity(len);
        let mut fy = Vec::with_capacity(len);
        for k in 0..len {
            max_grad_v = max_grad_v.max(gx[k].hypot(gy[k]));
            fx.push(u[k] * gx[k]);
            fy.push(u[k] * gy[k]);
        }
        let mut fx_hat = self.spectral.forward(&fx);
        let mut fy_hat = self.spectral.forward(&fy);
        let dropped_fraction = self.spectral.energy_beyond_cutoff(&[&fx_hat, &fy_hat]);
        if self.config.dealias {
            self.spectral.dealias(&mut fx_hat);
            self.spectral.dealias(&mut fy_hat);
        }
        let mut n_hat = self.spectral.divergence_hat(&fx_hat, &fy_hat);
        for c in n_hat.iter_mut() {
            *c = -*c;
        }
        FluxEval {
            n_hat,
            max_grad_v,
            dropped_fraction,
        }
    }

    fn zero_flux(&self) -> FluxEval {
        FluxEval {
            n_hat: vec![Complex64::default(); self.config.grid.len()],
            max_grad_v: 0.0,
            dropped_fraction: 0.0,
        }
    }

    fn eval(&mut self, u_hat: &[Complex64]) -> FluxEval {
        if self.config.nonlinearity {
            self.flux(u_hat)
        } else {
            self.zero_flux()
        }
    }

    /// One exponential RK2 step given `N` at the current state.
    fn advance(&mut self, u_hat: &[Complex64], n0: &[Complex64], dt: f64) -> Vec<Complex64> {
        self.set_dt(dt);
        let a: Vec<Complex64> = (0..u_hat.len())
            .map(|k| u_hat[k] * self.e[k] + n0[k] * (dt * self.p1[k]))
            .collect();
        let n1 = self.eval(&a).n_hat;
        (0..a.len())
            .map(|k| a[k] + (n1[k] - n0[k]) * (dt * self.p2[k]))
            .collect()
    }

    /// Stable step from the CFL rule, capped by `dt_initial`.
    fn cfl_dt(&self, max_grad_v: f64) -> f64 {
        let dx = self.config.grid.dx();
        let mut limit = dx.powf(self.config.alpha);
        if max_grad_v > 0.0 {
            limit = limit.min(dx / max_grad_v);
        }
        (self.config.cfl_safety * limit).min(self.config.dt_initial)
    }

    /// Advances a real state by `dt`.
    pub fn step(&mut self, state: &SimState, dt: f64) -> Result<SimState> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::out_of_range("dt", format!("need dt > 0, got {dt}")));
        }
        if state.u.grid() != &self.config.grid {
            return Err(Error::GridMismatch);
        }
        let u_hat = self.spectral.forward(state.u.values());
        let n0 = self.eval(&u_hat).n_hat;
        let next = self.advance(&u_hat, &n0, dt);
        let values = self.spectral.inverse(next);
        let u = ScalarField::from_raw(self.config.grid, values);
        if !u.is_finite() {
            return Err(Error::IntegrationFailure {
                t: state.t + dt,
                detail: "non-finite density".into(),
            });
        }
        Ok(SimState { t: state.t + dt, u })
    }
}

/// One exponential RK2 step of size `dt`.
pub fn step(state: &SimState, dt: f64, config: &SimConfig) -> Result<SimState> {
    Solver::new(config)?.step(state, dt)
}

/// Step-level history used by the blowup proxy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub linf: f64,
}

/// `true` when `max|u|` exceeds `blowup_linf_factor` times its initial
/// value, or when the last proposed step fell below `dt_min` while `max|u|`
/// was increasing. `history[0]` must describe the initial state.
pub fn detect_blowup(state: &SimState, history: &[StepRecord], config: &SimConfig) -> bool {
    let Some(first) = history.first() else {
        return false;
    };
    let linf = state.u.max_abs();
    if first.linf > 0.0 && linf > config.blowup_linf_factor * first.linf {
        return true;
    }
    if let [.., prev, last] = history {
        if last.dt < config.dt_min && last.linf > prev.linf {
            return true;
        }
    }
    false
}

/// Integrates from `u0` until `t_end`, blowup detection or loss of the
/// periodic-box approximation.
pub fn run(config: &SimConfig, u0: &ScalarField) -> Result<SimOutcome> {
    let mut solver = Solver::new(config)?;
    if u0.grid() != &config.grid {
        return Err(Error::GridMismatch);
    }
    if !u0.is_finite() {
        return Err(Error::out_of_range("u0", "non-finite initial data"));
    }
    let mass0 = u0.total_mass();
    let grid = config.grid;
    let tail_radius = config.tail_radius_fraction * grid.box_length();
    let nonnegative = u0.min() >= 0.0;
    let mut series = MomentSeries::new(mass0, config.alpha, config.gamma, &config.moment_probes)?;
    let mut rows = Vec::new();
    let mut history = vec![StepRecord {
        t: 0.0,
        dt: 0.0,
        linf: u0.max_abs(),
    }];

    let mut u_hat = solver.spectral.forward(u0.values());
    let mut state = SimState {
        t: 0.0,
        u: u0.clone(),
    };
    let mut steps = 0usize;
    let mut resolution_lost_at = None;
    let mut tail_violation_at = None;
    let mut max_mass_drift: f64 = 0.0;
    let mut min_negativity: f64 = 0.0;
    let mut last_dt = 0.0;

    let record = |state: &SimState,
                  dt: f64,
                  series: &mut MomentSeries,
                  rows: &mut Vec<DiagnosticRow>|
     -> Result<()> {
        series.record(state.t, &state.u)?;
        let n = series.len() - 1;
        rows.push(DiagnosticRow {
            t: state.t,
            dt,
            mass: state.u.total_mass(),
            linf: series.linf[n],
            l2: series.l2[n],
            l4: series.l4[n],
            tail_mass: state.u.tail_mass(tail_radius),
        });
        Ok(())
    };

    let verdict = loop {
        let eval = solver.eval(&u_hat);
        let sampled = steps.is_multiple_of(config.diagnostic_stride);
        if sampled {
            record(&state, last_dt, &mut series, &mut rows)?;
        }
        if eval.dropped_fraction > config.resolution_tolerance && resolution_lost_at.is_none() {
            resolution_lost_at = Some(state.t);
        }
        if resolution_lost_at.is_none() && tail_violation_at.is_none() {
            let m = state.u.total_mass();
            max_mass_drift = max_mass_drift.max(relative_drift(m, mass0));
            if nonnegative {
                let top = state.u.max_abs();
                if top > 0.0 {
                    min_negativity = min_negativity.min(state.u.min() / top);
                }
            }
        }
        let tail = state.u.tail_mass(tail_radius);
        if tail > config.tail_tolerance * mass0.abs().max(f64::MIN_POSITIVE)
            && tail_violation_at.is_none()
        {
            tail_violation_at = Some(state.t);
        }
        if detect_blowup(&state, &history, config) {
            break Verdict::BlowupDetected { t_star: state.t };
        }
        let remaining = config.t_end - state.t;
        if remaining <= 1e-12 * config.t_end {
            break unresolved_verdict(resolution_lost_at, tail_violation_at, tail_radius)
                .unwrap_or(Verdict::ReachedTEnd);
        }
        if steps >= config.max_steps {
            break Verdict::Unresolved {
                t: state.t,
                reason: "step budget exhausted".into(),
            };
        }
        let dt_cfl = solver.cfl_dt(eval.max_grad_v);
        if dt_cfl < config.dt_min {
            history.push(StepRecord {
                t: state.t,
                dt: dt_cfl,
                linf: state.u.max_abs(),
            });
            if detect_blowup(&state, &history, config) {
                break Verdict::BlowupDetected { t_star: state.t };
            }
            break Verdict::Unresolved {
                t: state.t,
                reason: "time step collapsed without growth".into(),
            };
        }
        let dt = dt_cfl.min(remaining);
        let next = solver.advance(&u_hat, &eval.n_hat, dt);
        let values = solver.spectral.inverse(next.clone());
        let u = ScalarField::from_raw(grid, values);
        if !u.is_finite() {
            break Verdict::Unresolved {
                t: state.t,
                reason: "non-finite density".into(),
            };
        }
        u_hat = next;
        state = SimState { t: state.t + dt, u };
        steps += 1;
        last_dt = dt;
        history.push(StepRecord {
            t: state.t,
            dt,
            linf: state.u.max_abs(),
        });
        if history.len() > 64 {
            history.drain(1..history.len() - 8);
        }
    };
    if rows.last().map(|r| r.t) != Some(state.t) {
        record(&state, last_dt, &mut series, &mut rows)?;
    }
    Ok(SimOutcome {
        verdict,
        diagnostics: series,
        rows,
        final_state: state,
        steps,
        initial_mass: mass0,
        resolution_lost_at,
        tail_violation_at,
        max_mass_drift,
        min_negativity,
    })
}

/// Verdict for a run that reached `t_end` after losing resolution or
/// leaking mass into the outer band; the earliest failure wins.
fn unresolved_verdict(
    resolution_lost_at: Option<f64>,
    tail_violation_at: Option<f64>,
    tail_radius: f64,
) -> Option<Verdict> {
    let dealias = resolution_lost_at.map(|t| Verdict::Unresolved {
        t,
        reason: "dealiasing removed more than the tolerated flux energy".into(),
    });
    let tail = tail_violation_at.map(|t| Verdict::Unresolved {
        t,
        reason: format!("tail mass exceeded tolerance outside |x| >= {tail_radius:.3}"),
    });
    match (resolution_lost_at, tail_violation_at) {
        (Some(a), Some(b)) if b < a => tail,
        (Some(_), _) => dealias,
        _ => tail,
    }
}

/// Writes the diagnostics table: `t, dt, mass, linf, l2, l4, tail_mass`
/// followed by `probe{k}_w_R, probe{k}_M_R, probe{k}_rhs_lower_bound`.
pub fn write_diagnostics(outcome: &SimOutcome, w: impl std::io::Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["t", "dt", "mass", "linf", "l2", "l4", "tail_mass"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for k in 0..outcome.diagnostics.probes.len() {
        header.push(format!("probe{k}_w_R"));
        header.push(format!("probe{k}_M_R"));
        header.push(format!("probe{k}_rhs_lower_bound"));
    }
    out.write_record(&header)?;
    for (i, r) in outcome.rows.iter().enumerate() {
        let mut rec = vec![r.t, r.dt, r.mass, r.linf, r.l2, r.l4, r.tail_mass];
        for p in &outcome.diagnostics.probes {
            rec.push(p.w[i]);
            rec.push(p.m[i]);
            rec.push(p.bound[i].rhs);
        }
        out.write_record(rec.iter().map(|v| format!("{v:.17e}")))?;
    }
    out.flush()?;
    Ok(())
}
