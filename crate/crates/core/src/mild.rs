//! Duhamel formulation with classical diffusion: heat trajectories, the
//! bilinear interaction term, weighted trajectory norms and Picard iteration.
//!
//! The interaction term is integrated by product integration in Fourier
//! space: between time nodes the divergence of the flux is interpolated
//! linearly and integrated exactly against the propagator weight
//! `exp(-(t - s)|k|^2)`, which absorbs the `(t - s)^{-1/2}` singularity of
//! the gradient kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{make_gaussian, GridSpec, ScalarField};
use crate::kernel::{check_gamma, MultiplierOp};
use crate::spectral::Spectral;

/// `sup_{0 < t <= T} t^{1/sigma - 1/p} ||u(t)||_p`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WeightedNorm {
    pub p: f64,
    pub sigma: f64,
    /// Right end `T` of the window; may be infinite.
    pub t_max: f64,
}

impl WeightedNorm {
    pub fn new(p: f64, sigma: f64, t_max: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::out_of_range(
                "p",
                format!("need 1 < p < inf, got {p}"),
            ));
        }
        if !(sigma >= 1.0 && sigma < p) {
            return Err(Error::out_of_range(
                "sigma",
                format!("need 1 <= sigma < p, got {sigma}"),
            ));
        }
        if !(t_max > 0.0) {
            return Err(Error::out_of_range(
                "t_max",
                format!("need T > 0, got {t_max}"),
            ));
        }
        Ok(Self { p, sigma, t_max })
    }

    /// The local-existence norm `sup t^{1 - 1/p} ||u||_p` (`sigma = 1`).
    pub fn local(p: f64, t_max: f64) -> Result<Self> {
        Self::new(p, 1.0, t_max)
    }

    /// Time weight exponent `1/sigma - 1/p`.
    pub fn exponent(&self) -> f64 {
        1.0 / self.sigma - 1.0 / self.p
    }

    /// Exponent `1 - 1/sigma` from the decay interpolation (kept apart from
    /// the concavity radius of the moment probes).
    pub fn decay_interp_eps(&self) -> f64 {
        1.0 - 1.0 / self.sigma
    }
}

/// Fields at strictly increasing positive times on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    nodes: Vec<f64>,
    fields: Vec<ScalarField>,
}

impl Trajectory {
    pub fn new(nodes: Vec<f64>, fields: Vec<ScalarField>) -> Result<Self> {
        check_nodes(&nodes)?;
        if fields.len() != nodes.len() {
            return Err(Error::out_of_range(
                "fields",
                format!("{} fields for {} nodes", fields.len(), nodes.len()),
            ));
        }
        let grid = *fields[0].grid();
        if fields.iter().any(|f| f.grid() != &grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { nodes, fields })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn grid(&self) -> &GridSpec {
        self.fields[0].grid()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn last(&self) -> &ScalarField {
        &self.fields[self.fields.len() - 1]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            nodes: self.nodes.clone(),
            fields: self.fields.iter().map(|f| f.scaled(c)).collect(),
        }
    }

    fn check_compatible(&self, other: &Trajectory) -> Result<()> {
        if self.grid() != other.grid() {
            return Err(Error::GridMismatch);
        }
        if self.nodes != other.nodes {
            return Err(Error::out_of_range(
                "nodes",
                "trajectories use different time nodes",
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Trajectory) -> Result<Self> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &Trajectory) -> Result<Self> {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &Trajectory, c: f64) -> Result<Self> {
        self.check_compatible(other)?;
        let fields = self
            .fields
            .iter()
            .zip(&other.fields)
            .map(|(a, b)| a.add_scaled(c, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            nodes: self.nodes.clone(),
            fields,
        })
    }
}

fn check_nodes(nodes: &[f64]) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::out_of_range("nodes", "no time nodes"));
    }
    if !(nodes[0] > 0.0) || nodes.iter().any(|t| !t.is_finite()) {
        return Err(Error::out_of_range(
            "nodes",
            "nodes must be positive and finite",
        ));
    }
    if nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::out_of_range(
            "nodes",
            "nodes must be strictly increasing",
        ));
    }
    Ok(())
}

/// Geometric nodes `T r^{-k}` from `t_min` up to `T` inclusive.
pub fn geometric_nodes(t_max: f64, t_min: f64, ratio: f64) -> Result<Vec<f64>> {
    if !(t_max > 0.0 && t_min > 0.0 && t_min <= t_max && ratio > 1.0) {
        return Err(Error::out_of_range(
            "nodes",
            format!("bad geometric node spec T={t_max}, t_min={t_min}, ratio={ratio}"),
        ));
    }
    let count = ((t_max / t_min).ln() / ratio.ln() + 1e-9).floor() as i32;
    Ok((0..=count).rev().map(|k| t_max * ratio.powi(-k)).collect())
}

/// Default nodes: ratio `2^{1/4}` from `T/1024` to `T` (41 nodes).
pub fn default_nodes(t_max: f64) -> Result<Vec<f64>> {
    geometric_nodes(t_max, t_max / 1024.0, 2f64.powf(0.25))
}

/// `w_0(t) = e^{t Delta} u0` at each node.
pub fn heat_trajectory(u0: &ScalarField, norm: &WeightedNorm, nodes: &[f64]) -> Result<Trajectory> {
    check_nodes(nodes)?;
    if nodes[nodes.len() - 1] > norm.t_max {
        return Err(Error::out_of_range(
            "nodes",
            "nodes extend beyond the norm window",
        ));
    }
    let mut spectral = Spectral::new(*u0.grid());
    let u_hat = spectral.forward(u0.values());
    let fields = nodes
        .iter()
        .map(|&t| {
            let modes: Vec<Complex64> = u_hat
                .iter()
                .zip(spectral.k_squared())
                .map(|(c, &k2)| c * (-t * k2).exp())
                .collect();
            ScalarField::from_raw(*u0.grid(), spectral.inverse(modes))
        })
        .collect();
    Trajectory::new(nodes.to_vec(), fields)
}

/// `max over nodes t <= T of t^{1/sigma - 1/p} ||u(t)||_p`.
pub fn weighted_norm(traj: &Trajectory, norm: &WeightedNorm) -> Result<f64> {
    let e = norm.exponent();
    let mut best: f64 = 0.0;
    for (t, f) in traj.nodes.iter().zip(&traj.fields) {
        if *t <= norm.t_max {
            best = best.max(t.powf(e) * f.lp_norm(norm.p)?);
        }
    }
    Ok(best)
}

/// `B(u, z)(t)` with its quadrature error estimate (max-norm difference to
/// the rule that holds the integrand at its panel average).
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearValue {
    pub field: ScalarField,
    pub error_estimate: f64,
}

/// Divergence spectra `i k . (u grad v[z])` at every node, ready for repeated
/// evaluation of `B(u, z)` at different times.
pub struct Interaction {
    spectral: Spectral,
    nodes: Vec<f64>,
    div_hat: Vec<Vec<Complex64>>,
}

impl Interaction {
    pub fn new(u: &Trajectory, z: &Trajectory, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        u.check_compatible(z)?;
        let helm = MultiplierOp::helmholtz_inverse(gamma)?;
        let mut spectral = Spectral::new(*u.grid());
        let mut div_hat = Vec::with_capacity(u.len());
        for (uf, zf) in u.fields.iter().zip(&z.fields) {
            let mut z_hat = spectral.forward(zf.values());
            for (c, &k2) in z_hat.iter_mut().zip(spectral.k_squared()) {
                *c *= helm.symbol(k2);
            }
            let (vx, vy) = spectral.gradient(&z_hat);
            let fx: Vec<f64> = uf.values().iter().zip(&vx).map(|(a, b)| a * b).collect();
            let fy: Vec<f64> = uf.values().iter().zip(&vy).map(|(a, b)| a * b).collect();
            let fx_hat = spectral.forward(&fx);
            let fy_hat = spectral.forward(&fy);
            div_hat.push(spectral.divergence_hat(&fx_hat, &fy_hat));
        }
        Ok(Self {
            spectral,
            nodes: u.nodes.clone(),
            div_hat,
        })
    }

    /// Evaluates `B(u, z)(t)` for `0 < t <= t_m`. On `[0, t_1]` the
    /// integrand is held at its value at `t_1`.
    pub fn evaluate(&mut self, t: f64) -> Result<BilinearValue> {
        let t_last = self.nodes[self.nodes.len() - 1];
        if !(t > 0.0 && t <= t_last * (1.0 + 1e-12)) {
            return Err(Error::out_of_range(
                "t",
                format!("B evaluated at {t} outside (0, {t_last}]"),
            ));
        }
        let len = self.div_hat[0].len();
        // Panels [a, b] with integrand values (index or interpolated).
        let mut panels: Vec<(f64, f64, usize, usize, f64)> = Vec::new();
        panels.push((0.0, self.nodes[0].min(t), 0, 0, 0.0));
        let mut tail: Option<(f64, usize, f64)> = None;
        for i in 0..self.nodes.len() - 1 {
            let (a, b) = (self.nodes[i], self.nodes[i + 1]);
            if b <= t {
                panels.push((a, b, i, i + 1, 1.0));
            } else if a < t {
                tail = Some((a, i, (t - a) / (b - a)));
                break;
            } else {
                break;
            }
        }
        let mut acc = vec![Complex64::default(); len];
        let mut diff = vec![Complex64::default(); len];
        let k2 = self.spectral.k_squared().to_vec();
        let mut add_panel =
            |a: f64, b: f64, fa: &dyn Fn(usize) -> Complex64, fb: &dyn Fn(usize) -> Complex64| {
                let h = b - a;
                if h <= 0.0 {
                    return;
                }
                for m in 0..len {
                    let lam = k2[m];
                    let x = lam * h;
                    let (i0, i1) = panel_weights(x);
                    let decay = (-lam * (t - b)).exp() * h;
                    let (va, vb) = (fa(m), fb(m));
                    acc[m] += (va * i1 + vb * (i0 - i1)) * decay;
                    diff[m] += (va - vb) * ((i1 - 0.5 * i0) * decay);
                }
            };
        for &(a, b, ia, ib, _) in &panels {
            let d = &self.div_hat;
            add_panel(a, b, &|m| d[ia][m], &|m| d[ib][m]);
        }
        if let Some((a, i, frac)) = tail {
            let d = &self.div_hat;
            add_panel(a, t, &|m| d[i][m], &|m| {
                d[i][m] * (1.0 - frac) + d[i + 1][m] * frac
            });
        }
        for c in acc.iter_mut() {
            *c = -*c;
        }
        let grid = *self.spectral.grid();
        let values = self.spectral.inverse(acc);
        let field = ScalarField::new(grid, values)
            .map_err(|_| Error::Quadrature(format!("non-finite interaction term at t = {t}")))?;
        let err = self.spectral.inverse(diff);
        let error_estimate = err.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(BilinearValue {
            field,
            error_estimate,
        })
    }

    /// `B(u, z)` at every node. Uses the same panels as [`Interaction::evaluate`]
    /// but carries the accumulated integral from node to node with the
    /// propagator, so the cost is linear in the number of nodes.
    pub fn at_nodes(&mut self) -> Result<Trajectory> {
        let k2 = self.spectral.k_squared().to_vec();
        let len = k2.len();
        let mut acc = vec![Complex64::default(); len];
        let mut fields = Vec::with_capacity(self.nodes.len());
        let mut prev = 0.0;
        for j in 0..self.nodes.len() {
            let t = self.nodes[j];
            let h = t - prev;
            let ia = j.saturating_sub(1);
            for m in 0..len {
                let x = k2[m] * h;
                let (i0, i1) = panel_weights(x);
                let (va, vb) = (self.div_hat[ia][m], self.div_hat[j][m]);
                acc[m] = acc[m] * (-x).exp() + (va * i1 + vb * (i0 - i1)) * h;
            }
            prev = t;
            let values = self.spectral.inverse(acc.iter().map(|c| -c).collect());
            let field = ScalarField::new(*self.spectral.grid(), values).map_err(|_| {
                Error::Quadrature(format!("non-finite interaction term at t = {t}"))
            })?;
            fields.push(field);
        }
        Trajectory::new(self.nodes.clone(), fields)
    }
}

/// `int_0^1 e^{-x r} r dr` and `int_0^1 e^{-x r} dr` combined as
/// `(I0, I1) = ((1 - e^{-x})/x, (1 - e^{-x}(1 + x))/x^2)`.
fn panel_weights(x: f64) -> (f64, f64) {
    if x < 1e-3 {
        (
            1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0,
            0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0,
        )
    } else {
        let e = (-x).exp();
        (-(-x).exp_m1() / x, (1.0 - e * (1.0 + x)) / (x * x))
    }
}

/// `B(u, z)(t) = -int_0^t grad e^{(t-s) Delta} . (u(s) grad (-Delta + gamma)^{-1} z(s)) ds`.
pub fn bilinear_b(u: &Trajectory, z: &Trajectory, t: f64, gamma: f64) -> Result<BilinearValue> {
    Interaction::new(u, z, gamma)?.evaluate(t)
}

/// Outcome of the Picard iteration `w_{n+1} = w_0 + B(w_n, w_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardReport {
    /// `|||w_n|||` for `n = 0, 1, ...`.
    pub iterate_norms: Vec<f64>,
    /// `|||w_{n+1} - w_n|||`.
    pub increment_norms: Vec<f64>,
    /// Successive increment ratios.
    pub ratios: Vec<f64>,
    pub converged: bool,
    /// Ratio `>= 1` for three consecutive steps, or non-finite iterates.
    pub diverged: bool,
    pub limit: Trajectory,
}

impl PicardReport {
    pub fn iterations(&self) -> usize {
        self.increment_norms.len()
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Iterates until the increment falls below `tol * |||w_0|||` or `n_max`
/// increments have been taken.
pub fn picard_iterate(
    u0: &ScalarField,
    gamma: f64,
    norm: &WeightedNorm,
    nodes: &[f64],
    n_max: usize,
    tol: f64,
) -> Result<PicardReport> {
    if n_max < 2 {
        return Err(Error::out_of_range("n_max", "need at least two iterations"));
    }
    check_gamma(gamma)?;
    let w0 = heat_trajectory(u0, norm, nodes)?;
    let r0 = weighted_norm(&w0, norm)?;
    let mut report = PicardReport {
        iterate_norms: vec![r0],
        increment_norms: Vec::new(),
        ratios: Vec::new(),
        converged: false,
        diverged: false,
        limit: w0.clone(),
    };
    if r0 == 0.0 {
        report.converged = true;
        return Ok(report);
    }
    let mut w = w0.clone();
    let mut streak = 0;
    for _ in 0..n_max {
        let b = match Interaction::new(&w, &w, gamma).and_then(|mut i| i.at_nodes()) {
            Ok(b) => b,
            Err(Error::Quadrature(_)) => {
                report.diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let next = w0.add(&b)?;
        let inc = weighted_norm(&next.sub(&w)?, norm)?;
        let size = weighted_norm(&next, norm)?;
        if let Some(&prev) = report.increment_norms.last() {
            let ratio = inc / prev;
            report.ratios.push(ratio);
            streak = if ratio >= 1.0 { streak + 1 } else { 0 };
        }
        report.increment_norms.push(inc);
        report.iterate_norms.push(size);
        w = next;
        if !(inc.is_finite() && size.is_finite()) || streak >= 3 {
            report.diverged = true;
            break;
        }
        if inc <= tol * r0 {
            report.converged = report.ratios.last().is_none_or(|&r| r < 1.0);
            break;
        }
    }
    report.limit = w;
    Ok(report)
}

/// `sup over pairs of |||B(u, z)||| / (|||u||| |||z|||)`, each pair measured
/// over its own node window.
pub fn measure_eta(
    pairs: &[(Trajectory, Trajectory)],
    gamma: f64,
    p: f64,
    sigma: f64,
) -> Result<f64> {
    let mut eta: f64 = 0.0;
    for (u, z) in pairs {
        let norm = WeightedNorm::new(p, sigma, u.nodes[u.len() - 1])?;
        let b = Interaction::new(u, z, gamma)?.at_nodes()?;
        let denom = weighted_norm(u, &norm)? * weighted_norm(z, &norm)?;
        if denom > 0.0 {
            eta = eta.max(weighted_norm(&b, &norm)? / denom);
        }
    }
    Ok(eta)
}

/// Heat trajectories of unit-mass Gaussians with log-uniform widths drawn
/// from `seed`. Each sample lives on its own grid (`N = n`, `L = 40 width`)
/// with window `T = 4 width^2`, so the family spans length scales rather
/// than refining one.
pub fn gaussian_samples(
    seed: u64,
    count: usize,
    width_range: (f64, f64),
    n: usize,
) -> Result<Vec<Trajectory>> {
    let (lo, hi) = width_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::out_of_range("width_range", "need 0 < lo <= hi"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let width = (lo.ln() + (hi.ln() - lo.ln()) * rng.gen::<f64>()).exp();
            let grid = GridSpec::new(n, 40.0 * width)?;
            let u0 = make_gaussian(grid, 1.0, [0.0, 0.0], width)?;
            let t_max = 4.0 * width * width;
            let norm = WeightedNorm::local(2.0, t_max)?;
            heat_trajectory(&u0, &norm, &default_nodes(t_max)?)
        })
        .collect()
}

/// Measured `eta(gamma)` and the least-squares slope of `log eta` against
/// `log gamma`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EtaStudy {
    pub gammas: Vec<f64>,
    pub eta: Vec<f64>,
    pub exponent: f64,
    /// `1/sigma - 1`.
    pub expected: f64,
}

pub fn eta_scaling_study(
    gammas: &[f64],
    p: f64,
    sigma: f64,
    samples: &[Trajectory],
) -> Result<EtaStudy> {
    let (lo, hi) = gammas
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &g| (a.min(g), b.max(g)));
    if !(lo > 0.0 && hi / lo >= 100.0 * (1.0 - 1e-12)) {
        return Err(Error::out_of_range(
            "gammas",
            "need positive gammas spanning two decades",
        ));
    }
    let pairs: Vec<(Trajectory, Trajectory)> =
        samples.iter().map(|s| (s.clone(), s.clone())).collect();
    let eta = gammas
        .iter()
        .map(|&g| measure_eta(&pairs, g, p, sigma))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = gammas.iter().map(|g| g.ln()).collect();
    let ys: Vec<f64> = eta.iter().map(|e| e.ln()).collect();
    Ok(EtaStudy {
        gammas: gammas.to_vec(),
        exponent: ls_slope(&xs, &ys),
        eta,
        expected: 1.0 / sigma - 1.0,
    })
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn default_nodes_are_geometric() {
        let nodes = default_nodes(1.0).unwrap();
        assert_eq!(nodes.len(), 41);
        assert!((nodes[0] - 1.0 / 1024.0).abs() < 1e-15);
        assert_eq!(nodes[40], 1.0);
        for w in nodes.windows(2) {
            assert!((w[1] / w[0] - 2f64.powf(0.25)).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_validation() {
        assert!(WeightedNorm::new(1.0, 1.0, 1.0).is_err());
        assert!(WeightedNorm::new(1.5, 1.5, 1.0).is_err());
        assert!(WeightedNorm::new(1.5, 1.2, 0.0).is_err());
        let n = WeightedNorm::new(1.5, 1.2, 1.0).unwrap();
        assert!((n.exponent() - (1.0 / 1.2 - 1.0 / 1.5)).abs() < 1e-15);
    }

    #[test]
    fn single_mode_heat_trajectory() {
        let grid = GridSpec::new(16, 2.0 * PI).unwrap();
        let u0 = ScalarField::from_fn(grid, |x, y| (2.0 * x + y).cos());
        let norm = WeightedNorm::local(1.5, 1.0).unwrap();
        let traj = heat_trajectory(&u0, &norm, &[0.1, 0.5, 1.0]).unwrap();
        for (t, f) in traj.nodes().iter().zip(traj.fields()) {
            let want = u0.scaled((-5.0 * t).exp());
            assert!(f.sub(&want).unwrap().max_abs() < 1e-14);
        }
    }

    #[test]
    fn panel_weights_branches_agree() {
        let x: f64 = 1e-3;
        let e = (-x).exp();
        let exact = (-(-x).exp_m1() / x, (1.0 - e * (1.0 + x)) / (x * x));
        let series = {
            let y = x * (1.0 - 1e-12);
            panel_weights(y)
        };
        assert!((exact.0 - series.0).abs() < 1e-12);
        assert!((exact.1 - series.1).abs() < 1e-9);
    }

    #[test]
    fn b_vanishes_on_zero_inputs() {
        let grid = GridSpec::new(32, 8.0).unwrap();
        let u0 = make_gaussian(grid, 1.0, [0.0, 0.0], 0.8).unwrap();
        let norm = WeightedNorm::local(1.5, 1.0).unwrap();
        let nodes = default_nodes(1.0).unwrap();
        let u = heat_trajectory(&u0, &norm, &nodes).unwrap();
        let zero = u.scaled(0.0);
        assert_eq!(
            bilinear_b(&zero, &u, 0.7, 1.0).unwrap().field.max_abs(),
            0.0
        );
        assert_eq!(
            bilinear_b(&u, &zero, 0.7, 1.0).unwrap().field.max_abs(),
            0.0
        );
        assert!(bilinear_b(&u, &u, 1.5, 1.0).is_err());
    }

    #[test]
    fn node_recursion_matches_direct_evaluation() {
        let grid = GridSpec::new(32, 8.0).unwrap();
        let u0 = make_gaussian(grid, 2.0, [0.3, 0.0], 0.8).unwrap();
        let z0 = make_gaussian(grid, 1.0, [-0.5, 0.2], 0.9).unwrap();
        let norm = WeightedNorm::local(1.5, 1.0).unwrap();
        let nodes = default_nodes(1.0).unwrap();
        let u = heat_trajectory(&u0, &norm, &nodes).unwrap();
        let z = heat_trajectory(&z0, &norm, &nodes).unwrap();
        let mut inter = Interaction::new(&u, &z, 0.5).unwrap();
        let all = inter.at_nodes().unwrap();
        for k in [0, 7, 23, 40] {
            let direct = inter.evaluate(nodes[k]).unwrap().field;
            let scale = direct.max_abs();
            assert!(all.fields()[k].sub(&direct).unwrap().max_abs() < 1e-12 * scale.max(1e-300));
        }
    }
}
