//! Verification harness: energy-decay checks, per-step energy inequalities,
//! the discrete Gronwall bound, the log-interpolation probe, stability scans
//! and convergence-rate studies.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{self, ModelConfig, ModelKind, Nonlinearity, StabilizationPlan, StabilizerOrder};
use crate::spectral::{Cutoff, Grid, Norm, SpectralField};
use crate::stepper::{self, make_initial, InitKind, Scheme, StepperState};

/// Relative slack for the energy-decay check: `tol = 1e-10 · max(1, |E₀|)`.
pub const ENERGY_DECAY_REL_TOL: f64 = 1e-10;

pub fn energy_tolerance(e0: f64) -> f64 {
    ENERGY_DECAY_REL_TOL * e0.abs().max(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunParams {
    pub model: ModelKind,
    pub nu: f64,
    pub nonlinearity: Nonlinearity,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub cutoff: Cutoff,
    pub tau: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub beta: Option<f64>,
    pub s_op: StabilizerOrder,
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RunRow {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub mass: f64,
    pub linf: f64,
    pub diff_l2: f64,
    pub residual: f64,
    pub lemma_margin: f64,
}

/// Per-step time series of a run. Row `i` describes the state after step `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub params: RunParams,
    pub initial_energy: f64,
    pub initial_mass: f64,
    pub rows: Vec<RunRow>,
    /// Last state reached, present only for completed runs.
    pub final_field: Option<SpectralField>,
}

impl RunRecord {
    pub fn new(params: RunParams, initial_energy: f64, initial_mass: f64) -> Self {
        Self {
            params,
            initial_energy,
            initial_mass,
            rows: Vec::new(),
            final_field: None,
        }
    }

    /// `E₀, E₁, …, E_n`.
    pub fn energies(&self) -> Vec<f64> {
        std::iter::once(self.initial_energy)
            .chain(self.rows.iter().map(|r| r.energy))
            .collect()
    }

    pub fn final_energy(&self) -> f64 {
        self.rows.last().map_or(self.initial_energy, |r| r.energy)
    }

    pub fn min_lemma_margin(&self) -> f64 {
        self.rows.iter().map(|r| r.lemma_margin).fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_mass(&self) -> f64 {
        self.rows.iter().map(|r| r.mass.abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonotoneReport {
    pub pass: bool,
    /// Index `n + 1` of the first `E_{n+1} > E_n + tol`.
    pub first_violation_step: Option<usize>,
    /// `max_n (E_{n+1} - E_n)`, clamped at zero.
    pub max_increase: f64,
}

/// Checks `E_{n+1} ≤ E_n + tol` along a series `E₀, E₁, …`.
pub fn check_energy_series(energies: &[f64], tol: f64) -> MonotoneReport {
    let mut first = None;
    let mut max_increase: f64 = 0.0;
    for (n, w) in energies.windows(2).enumerate() {
        let inc = w[1] - w[0];
        max_increase = max_increase.max(inc);
        if first.is_none() && !(inc <= tol) {
            first = Some(n + 1);
        }
    }
    MonotoneReport {
        pass: first.is_none(),
        first_violation_step: first,
        max_increase,
    }
}

pub fn check_energy_monotone(record: &RunRecord, tol: f64) -> MonotoneReport {
    check_energy_series(&record.energies(), tol)
}

/// Slack `RHS - LHS` of the per-step energy inequality given precomputed parts.
///
/// CH (`diff = ‖u^{n+1}-u^n‖₂`, `sup = ‖u‖∞`):
/// `E₁ - E₀ + (A + ½ + √(2ν/τ)) diff² ≤ diff² (sup₀² + ½ sup₁²)`.
///
/// MBE (`diff = ‖∇(h^{n+1}-h^n)‖₂`, `sup = ‖∇h‖∞`):
/// `E₁ - E₀ + (A + ½ + √(2ν/τ)) diff² ≤ diff² · 3/2 · max(sup₀², sup₁²)`.
#[allow(clippy::too_many_arguments)]
pub fn lemma_margin_from_parts(
    kind: ModelKind,
    e0: f64,
    e1: f64,
    diff: f64,
    sup0: f64,
    sup1: f64,
    nu: f64,
    tau: f64,
    a: f64,
) -> f64 {
    let d2 = diff * diff;
    let lhs = e1 - e0 + (a + 0.5 + (2.0 * nu / tau).sqrt()) * d2;
    let rhs = match kind {
        ModelKind::Ch => d2 * (sup0 * sup0 + 0.5 * sup1 * sup1),
        ModelKind::Mbe => d2 * 1.5 * (sup0 * sup0).max(sup1 * sup1),
    };
    rhs - lhs
}

/// Margin of the CH per-step inequality for consecutive iterates.
pub fn lemma_z2_margin(u_n: &SpectralField, u_np1: &SpectralField, nu: f64, tau: f64, a: f64) -> f64 {
    let diff = (u_np1 - u_n).norm(Norm::L2);
    lemma_margin_from_parts(
        ModelKind::Ch,
        models::energy_ch(u_n, nu),
        models::energy_ch(u_np1, nu),
        diff,
        u_n.norm(Norm::Linf),
        u_np1.norm(Norm::Linf),
        nu,
        tau,
        a,
    )
}

/// Margin of the MBE per-step inequality for consecutive iterates.
pub fn lemma_z2p_margin(h_n: &SpectralField, h_np1: &SpectralField, nu: f64, tau: f64, a: f64) -> f64 {
    let diff = (h_np1 - h_n).norm(Norm::Hdot1);
    lemma_margin_from_parts(
        ModelKind::Mbe,
        models::energy_mbe(h_n, nu),
        models::energy_mbe(h_np1, nu),
        diff,
        h_n.grad_sup_norm(),
        h_np1.grad_sup_norm(),
        nu,
        tau,
        a,
    )
}

/// Upper bound on `y_m` for nonnegative sequences with
/// `(y_{n+1} - y_n)/τ ≤ α_n y_n + β_n`:
///
/// `exp(τ Σ_{n<m} α_n) y₀ + τ Σ_{k<m} exp(τ Σ_{k<j<m} α_j) β_k`.
pub fn discrete_gronwall(y0: f64, alphas: &[f64], betas: &[f64], tau: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    for seq in [alphas, betas] {
        if seq.len() < m {
            return Err(Error::LengthMismatch {
                needed: m,
                got: seq.len(),
            });
        }
    }
    let nonneg = |v: f64| v >= 0.0 && v.is_finite();
    if !nonneg(y0) || !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument("y0 must be nonnegative and tau positive".into()));
    }
    if !alphas[..m].iter().chain(&betas[..m]).all(|v| nonneg(*v)) {
        return Err(Error::InvalidArgument("alphas and betas must be nonnegative".into()));
    }
    // suffix sums Σ_{j>k} α_j, accumulated backwards
    let mut tail = CompensatedSum::default();
    let mut forcing = CompensatedSum::default();
    for k in (0..m).rev() {
        forcing.add((tau * tail.value()).exp() * betas[k]);
        tail.add(alphas[k]);
    }
    Ok((tau * tail.value()).exp() * y0 + tau * forcing.value())
}

/// Neumaier summation, so the result does not depend on summation order in practice.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// `‖f‖∞ / (‖f‖_{Ḣ¹} log(3 + ‖f‖_{H^s}))`, zero for the zero field.
pub fn log_interp_ratio(f: &SpectralField, s: f64) -> Result<f64> {
    if !(s > 1.0) {
        return Err(Error::InvalidArgument(format!("s must exceed 1, got {s}")));
    }
    let c0 = f.coeffs()[0];
    if c0.re != 0.0 || c0.im != 0.0 {
        return Err(Error::MeanNonZero { coeff0: c0.re });
    }
    let h1 = f.norm(Norm::Hdot1);
    if h1 == 0.0 {
        return Ok(0.0);
    }
    Ok(f.norm(Norm::Linf) / (h1 * (3.0 + f.norm(Norm::Hs(s))).ln()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogInterpSummary {
    pub count: usize,
    pub max_ratio: f64,
    pub mean_ratio: f64,
}

/// Log-interpolation ratios over seeded random band-limited fields with bands
/// cycling through `1..=N` and amplitudes spread over several decades.
pub fn log_interp_corpus(grid: &Arc<Grid>, count: usize, seed: u64, s: f64) -> Result<LogInterpSummary> {
    let ratios = (0..count)
        .map(|i| {
            let band = 1 + i % grid.n();
            let amplitude = 10f64.powi((i % 7) as i32 - 3);
            let f = make_initial(
                &InitKind::RandomBandlimited {
                    seed: seed.wrapping_add(i as u64),
                    amplitude,
                    band,
                },
                grid,
            )?;
            log_interp_ratio(&f, s)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let mean_ratio = if count == 0 {
        0.0
    } else {
        ratios.iter().sum::<f64>() / count as f64
    };
    Ok(LogInterpSummary {
        count,
        max_ratio,
        mean_ratio,
    })
}

/// Values swept by a stability scan.
#[derive(Clone, Debug, PartialEq)]
pub enum StabilizationAxis {
    /// Safety factors, turned into `A` through the stabilization rule.
    Beta(Vec<f64>),
    /// Direct values of `A`.
    A(Vec<f64>),
}

impl StabilizationAxis {
    pub fn len(&self) -> usize {
        match self {
            Self::Beta(v) | Self::A(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub tau: f64,
    pub beta: Option<f64>,
    pub a: f64,
    pub monotone: bool,
    pub first_violation_step: Option<usize>,
    pub final_energy: f64,
    pub diverged: bool,
    pub completed_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
}

impl ScanTable {
    /// Smallest `A` giving a monotone run at this `τ`.
    pub fn minimal_stabilizing_a(&self, tau: f64) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.tau == tau && r.monotone)
            .map(|r| r.a)
            .min_by(f64::total_cmp)
    }

    /// Smallest `β` for which the rows of every scanned `τ` are monotone.
    pub fn minimal_uniform_beta(&self) -> Option<f64> {
        let mut betas: Vec<f64> = self.rows.iter().filter_map(|r| r.beta).collect();
        betas.sort_by(f64::total_cmp);
        betas.dedup();
        betas.into_iter().find(|b| {
            self.rows
                .iter()
                .filter(|r| r.beta == Some(*b))
                .all(|r| r.monotone)
        })
    }
}

/// Runs every `(τ, A)` cell and checks energy decay. Divergent cells are
/// recorded as non-monotone. Cells run in parallel; rows keep parameter order
/// (`τ` outer, stabilization inner).
pub fn stability_scan(
    config: &ModelConfig,
    init: &SpectralField,
    taus: &[f64],
    axis: &StabilizationAxis,
    s_op: StabilizerOrder,
    n_steps: usize,
) -> Result<ScanTable> {
    if taus.is_empty() || axis.is_empty() {
        return Err(Error::InvalidArgument("tau and stabilization lists must be nonempty".into()));
    }
    let mut u0 = init.project_to_cutoff();
    u0.remove_mean();
    let plans: Vec<StabilizationPlan> = match axis {
        StabilizationAxis::Beta(betas) => betas
            .iter()
            .map(|b| Ok(models::resolve_a(config, &u0, *b)?.with_order(s_op)))
            .collect::<Result<_>>()?,
        StabilizationAxis::A(values) => values
            .iter()
            .map(|a| StabilizationPlan::with_a(*a, s_op))
            .collect::<Result<_>>()?,
    };
    for tau in taus {
        if !(*tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
    }
    let cells: Vec<(f64, StabilizationPlan)> = taus
        .iter()
        .flat_map(|t| plans.iter().map(move |p| (*t, *p)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|(tau, plan)| {
            let (record, diverged) = match stepper::run(&u0, config, plan, *tau, n_steps, |_, _| {}) {
                Ok(r) => (r, false),
                Err(aborted) => (aborted.record, true),
            };
            let report = check_energy_monotone(&record, energy_tolerance(record.initial_energy));
            let first_violation_step = if diverged {
                report.first_violation_step.or(Some(record.rows.len() + 1))
            } else {
                report.first_violation_step
            };
            ScanRow {
                tau: *tau,
                beta: plan.beta,
                a: plan.a,
                monotone: report.pass && !diverged,
                first_violation_step,
                final_energy: record.final_energy(),
                diverged,
                completed_steps: record.rows.len(),
            }
        })
        .collect();
    Ok(ScanTable { rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatePoint {
    pub resolution: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateEstimate {
    pub points: Vec<RatePoint>,
    /// Least-squares slope of `log error` against `log resolution`; requires at
    /// least three points.
    pub fitted_order: Option<f64>,
    pub r_squared: Option<f64>,
}

impl RateEstimate {
    pub fn from_points(points: Vec<RatePoint>) -> Self {
        let fit = fit_order(&points);
        Self {
            points,
            fitted_order: fit.map(|f| f.0),
            r_squared: fit.map(|f| f.1),
        }
    }
}

/// `(slope, r²)` of the log-log least-squares line, `None` with fewer than 3
/// usable points or no spread in resolution.
pub fn fit_order(points: &[RatePoint]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.resolution > 0.0 && p.error > 0.0)
        .map(|p| (p.resolution.ln(), p.error.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, r2))
}

/// Error measure matching the convergence estimates: `L²` for CH, `Ḣ¹` for MBE.
pub fn model_error(kind: ModelKind, diff: &SpectralField) -> f64 {
    match kind {
        ModelKind::Ch => diff.norm(Norm::L2),
        ModelKind::Mbe => diff.norm(Norm::Hdot1),
    }
}

/// Reference solution used by [`temporal_convergence`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TemporalReference {
    /// Same scheme with `τ_ref = min(τ) / factor` (`factor ≥ 16`).
    Refined { factor: usize },
    /// `û(k, t) = û₀(k) e^{-ν|k|⁴t}`, exact for the linear problem.
    ExactLinear,
}

fn steps_for(t_final: f64, tau: f64) -> Result<usize> {
    let ratio = t_final / tau;
    let steps = ratio.round();
    if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio {
        return Err(Error::InvalidArgument(format!(
            "T = {t_final} is not an integer multiple of tau = {tau}"
        )));
    }
    Ok(steps as usize)
}

/// Advances `steps` steps of the scheme without diagnostics.
pub fn evolve(
    init: &SpectralField,
    config: &ModelConfig,
    plan: &StabilizationPlan,
    tau: f64,
    steps: usize,
) -> Result<SpectralField> {
    let scheme = Scheme::new(*config, *plan, tau, init.grid())?;
    let mut u = StepperState::new(init, tau)?.field;
    for n in 0..steps {
        u = scheme.advance(&u).map_err(|e| Error::Divergence {
            step: n + 1,
            reason: e.to_string(),
        })?;
    }
    Ok(u)
}

/// `e^{-ν|k|⁴t}` applied to `init`.
pub fn exact_linear_solution(init: &SpectralField, nu: f64, t: f64) -> SpectralField {
    let mut u = init.project_to_cutoff();
    u.remove_mean();
    u.apply_multiplier(|k| {
        let k2 = (k[0] * k[0] + k[1] * k[1]) as f64;
        (-nu * k2 * k2 * t).exp()
    })
}

/// Errors at `T` for each `τ` against a reference, with a fitted order.
pub fn temporal_convergence(
    config: &ModelConfig,
    plan: &StabilizationPlan,
    init: &SpectralField,
    tau_list: &[f64],
    t_final: f64,
    reference: TemporalReference,
) -> Result<RateEstimate> {
    if tau_list.is_empty() {
        return Err(Error::InvalidArgument("tau list is empty".into()));
    }
    if tau_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument(
            "tau list must be strictly decreasing (repeated entries give a degenerate fit)".into(),
        ));
    }
    let steps: Vec<usize> = tau_list
        .iter()
        .map(|t| steps_for(t_final, *t))
        .collect::<Result<_>>()?;
    let tau_min = *tau_list.last().expect("nonempty");
    let reference_field = match reference {
        TemporalReference::ExactLinear => {
            if config.nonlinearity != Nonlinearity::Off {
                return Err(Error::InvalidArgument(
                    "the closed-form reference requires the linear problem".into(),
                ));
            }
            exact_linear_solution(init, config.nu, t_final)
        }
        TemporalReference::Refined { factor } => {
            if factor < 16 {
                return Err(Error::InvalidArgument(format!(
                    "reference refinement factor must be at least 16, got {factor}"
                )));
            }
            let n_ref = steps.last().expect("nonempty") * factor;
            evolve(init, config, plan, tau_min / factor as f64, n_ref)?
        }
    };
    let points = tau_list
        .par_iter()
        .zip(steps.par_iter())
        .map(|(tau, n)| {
            let u = evolve(init, config, plan, *tau, *n)?;
            Ok(RatePoint {
                resolution: *tau,
                error: model_error(config.kind, &(&u - &reference_field)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateEstimate::from_points(points))
}

/// How `A` is chosen for a spatial study (fixed across all resolutions).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpatialStabilization {
    /// Stabilization rule evaluated on the reference-resolution initial field.
    Beta(f64),
    A(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpatialRow {
    pub n: usize,
    pub error: f64,
    /// Error of `Π_N u₀` against the reference initial field.
    pub projection_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpatialStudy {
    pub n_ref: usize,
    pub reference_norm: f64,
    pub rows: Vec<SpatialRow>,
}

impl SpatialStudy {
    /// Local algebraic orders `log(e_i/e_{i+1}) / log(N_{i+1}/N_i)`.
    pub fn local_orders(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| (w[0].error / w[1].error).ln() / (w[1].n as f64 / w[0].n as f64).ln())
            .collect()
    }

    /// Rows whose error lies above `floor_rel · ‖reference‖`.
    pub fn pre_floor(&self, floor_rel: f64) -> &[SpatialRow] {
        let floor = floor_rel * self.reference_norm;
        let end = self
            .rows
            .iter()
            .position(|r| r.error <= floor)
            .unwrap_or(self.rows.len());
        &self.rows[..end]
    }

    /// Errors decrease and local orders strictly increase over the rows above
    /// the floor; needs at least three such rows to say anything.
    pub fn is_superalgebraic(&self, floor_rel: f64) -> Option<bool> {
        let rows = self.pre_floor(floor_rel);
        if rows.len() < 3 {
            return None;
        }
        let sub = SpatialStudy {
            n_ref: self.n_ref,
            reference_norm: self.reference_norm,
            rows: rows.to_vec(),
        };
        let decreasing = rows.windows(2).all(|w| w[1].error < w[0].error);
        let orders = sub.local_orders();
        let accelerating = orders.windows(2).all(|w| w[1] > w[0]);
        Some(decreasing && accelerating)
    }
}

/// Largest reference cutoff accepted by [`spatial_convergence`].
pub const MAX_REFERENCE_N: usize = 512;

/// Errors at `T` for each `N` against a run at `N_ref = 2 max(N)`, all with
/// the same `τ` and `A`.
pub fn spatial_convergence(
    config: &ModelConfig,
    n_list: &[usize],
    cutoff: Cutoff,
    tau: f64,
    t_final: f64,
    init: &InitKind,
    stabilization: SpatialStabilization,
) -> Result<SpatialStudy> {
    if n_list.is_empty() {
        return Err(Error::InvalidArgument("N list is empty".into()));
    }
    if n_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("N list must be strictly increasing".into()));
    }
    let n_ref = 2 * n_list.last().expect("nonempty");
    if n_ref > MAX_REFERENCE_N {
        return Err(Error::Capacity {
            n: n_ref,
            m: crate::spectral::GridSpec::default_size(MAX_REFERENCE_N),
        });
    }
    let steps = steps_for(t_final, tau)?;
    let ref_grid = Grid::with_cutoff(n_ref, cutoff)?;
    let ref_init = make_initial(init, &ref_grid)?;
    let plan = match stabilization {
        SpatialStabilization::Beta(b) => models::resolve_a(config, &ref_init, b)?,
        SpatialStabilization::A(a) => StabilizationPlan::with_a(a, StabilizerOrder::Laplacian)?,
    };
    let reference = evolve(&ref_init, config, &plan, tau, steps)?;
    let rows = n_list
        .par_iter()
        .map(|n| {
            let grid = Grid::with_cutoff(*n, cutoff)?;
            let u0 = make_initial(init, &grid)?;
            let u = evolve(&u0, config, &plan, tau, steps)?;
            Ok(SpatialRow {
                n: *n,
                error: model_error(config.kind, &(&u.resample(&ref_grid) - &reference)),
                projection_error: model_error(config.kind, &(&u0.resample(&ref_grid) - &ref_init)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpatialStudy {
        n_ref,
        reference_norm: model_error(config.kind, &reference),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepper::{run, step_ch, step_mbe};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Arc<Grid> {
        Grid::with_cutoff(n, Cutoff::EuclideanBall).unwrap()
    }

    #[test]
    fn monotone_series_examples() {
        let r = check_energy_series(&[3.0; 10], 1e-10);
        assert!(r.pass);
        assert_eq!(r.max_increase, 0.0);
        let tol = 1e-10;
        let mut e = vec![5.0, 4.0, 3.0, 3.0, 2.0];
        e[3] = e[2] + 2.0 * tol;
        let r = check_energy_series(&e, tol);
        assert!(!r.pass);
        assert_eq!(r.first_violation_step, Some(3));
        assert!((r.max_increase - 2.0 * tol).abs() < 1e-15);
        // pass(tol) ⇒ pass(tol') for tol' ≥ tol
        assert!(check_energy_series(&e, 3.0 * tol).pass);
    }

    #[test]
    fn lemma_margin_fixed_point_is_zero() {
        let g = grid(8);
        let z = SpectralField::zeros(&g);
        assert_eq!(lemma_z2_margin(&z, &z, 0.1, 0.1, 1.0), 0.0);
        assert_eq!(lemma_z2p_margin(&z, &z, 0.1, 0.1, 1.0), 0.0);
    }

    #[test]
    fn lemma_margins_nonnegative_for_scheme_iterates() {
        let g = grid(16);
        for seed in 0..4 {
            let init = make_initial(&InitKind::RandomBandlimited { seed, amplitude: 1.2, band: 12 }, &g).unwrap();
            for (nu, tau) in [(0.1, 0.5), (1.0, 1e-3), (0.05, 10.0)] {
                let cfg = ModelConfig::ch(nu).unwrap();
                let plan = models::resolve_a(&cfg, &init, 1.0).unwrap();
                let s = StepperState::new(&init, tau).unwrap();
                let (n, d) = step_ch(&s, nu, &plan).unwrap();
                let margin = lemma_z2_margin(&s.field, &n.field, nu, tau, plan.a);
                let scale = 1.0 + d.energy_before.abs();
                assert!(margin >= -1e-10 * scale, "{margin}");
                assert!((margin - d.lemma_margin).abs() <= 1e-9 * scale);

                let cfg = ModelConfig::mbe(nu).unwrap();
                let h0 = init.scaled(0.3);
                let plan = models::resolve_a(&cfg, &h0, 1.0).unwrap();
                let s = StepperState::new(&h0, tau).unwrap();
                let (n, d) = step_mbe(&s, nu, &plan).unwrap();
                let margin = lemma_z2p_margin(&s.field, &n.field, nu, tau, plan.a);
                assert!(margin >= -1e-10 * (1.0 + d.energy_before.abs()), "{margin}");
            }
        }
    }

    fn brute_force_recursion(y0: f64, a: &[f64], b: &[f64], tau: f64, m: usize) -> f64 {
        let mut y = y0;
        for n in 0..m {
            y += tau * (a[n] * y + b[n]);
        }
        y
    }

    #[test]
    fn gronwall_examples() {
        assert!((discrete_gronwall(1.0, &[0.0, 0.0], &[1.0, 1.0], 1.0, 2).unwrap() - 3.0).abs() < 1e-15);
        let (y0, a, tau, m) = (2.0, 0.3, 0.1, 25);
        let v = discrete_gronwall(y0, &vec![a; m], &vec![0.0; m], tau, m).unwrap();
        let want = y0 * (m as f64 * tau * a).exp();
        assert!((v - want).abs() <= 1e-14 * want);
        assert!(matches!(
            discrete_gronwall(1.0, &[0.0], &[0.0, 0.0], 1.0, 2),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(discrete_gronwall(1.0, &[-1.0], &[0.0], 1.0, 1).is_err());
    }

    #[test]
    fn gronwall_bounds_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let m = rng.gen_range(1..40);
            let tau = rng.gen_range(1e-3..1.0);
            let a: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..3.0)).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..3.0)).collect();
            let y0 = rng.gen_range(0.0..5.0);
            let y = brute_force_recursion(y0, &a, &b, tau, m);
            let bound = discrete_gronwall(y0, &a, &b, tau, m).unwrap();
            assert!(y <= bound * (1.0 + 1e-14), "{y} > {bound}");
        }
    }

    #[test]
    fn log_interp_examples() {
        let g = grid(4);
        assert_eq!(log_interp_ratio(&SpectralField::zeros(&g), 1.5).unwrap(), 0.0);
        assert!(log_interp_ratio(&SpectralField::zeros(&g), 1.0).is_err());
        let s = make_initial(&InitKind::SingleMode { mode: [1, 0], amplitude: 1.0 }, &g).unwrap();
        // ‖sin‖_{H^{3/2}}² = (2π)^{-2} Σ (1+|k|³)|ŝ|² = 2 · 2π², so the norm is 2π
        let want = 1.0 / ((2.0 * PI * PI).sqrt() * (3.0 + 2.0 * PI).ln());
        assert!((log_interp_ratio(&s, 1.5).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn log_interp_corpus_finite() {
        let summary = log_interp_corpus(&grid(16), 100, 1, 1.5).unwrap();
        assert_eq!(summary.count, 100);
        assert!(summary.max_ratio.is_finite() && summary.max_ratio > 0.0);
    }

    #[test]
    fn scan_single_cell_matches_direct_run() {
        let g = grid(12);
        let init = make_initial(&InitKind::RandomBandlimited { seed: 3, amplitude: 1.0, band: 8 }, &g).unwrap();
        let cfg = ModelConfig::ch(0.2).unwrap();
        let t = stability_scan(&cfg, &init, &[0.05], &StabilizationAxis::A(vec![4.0]), StabilizerOrder::Laplacian, 40).unwrap();
        assert_eq!(t.rows.len(), 1);
        let plan = StabilizationPlan::with_a(4.0, StabilizerOrder::Laplacian).unwrap();
        let rec = run(&init, &cfg, &plan, 0.05, 40, |_, _| {}).unwrap();
        let rep = check_energy_monotone(&rec, energy_tolerance(rec.initial_energy));
        assert_eq!(t.rows[0].monotone, rep.pass);
        assert_eq!(t.rows[0].final_energy, rec.final_energy());
        assert!(stability_scan(&cfg, &init, &[], &StabilizationAxis::A(vec![1.0]), StabilizerOrder::Laplacian, 5).is_err());
    }

    #[test]
    fn unstabilized_large_steps_lose_monotonicity() {
        let g = grid(16);
        let init = make_initial(&InitKind::RandomBandlimited { seed: 1, amplitude: 1.0, band: 16 }, &g).unwrap();
        let cfg = ModelConfig::ch(0.1).unwrap();
        let t = stability_scan(
            &cfg,
            &init,
            &[1.0],
            &StabilizationAxis::Beta(vec![1.0]),
            StabilizerOrder::Laplacian,
            100,
        )
        .unwrap();
        assert!(t.rows[0].monotone);
        let t0 = stability_scan(&cfg, &init, &[1.0], &StabilizationAxis::A(vec![0.0]), StabilizerOrder::Laplacian, 100).unwrap();
        assert!(!t0.rows[0].monotone);
    }

    #[test]
    fn fit_order_exact_power_law() {
        let pts: Vec<RatePoint> = [1.0, 0.5, 0.25, 0.125]
            .iter()
            .map(|h| RatePoint { resolution: *h, error: 3.0 * h * h })
            .collect();
        let (p, r2) = fit_order(&pts).unwrap();
        assert!((p - 2.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
        assert!(fit_order(&pts[..2]).is_none());
    }

    #[test]
    fn temporal_rejects_bad_lists() {
        let g = grid(8);
        let init = make_initial(&InitKind::SingleMode { mode: [1, 0], amplitude: 0.5 }, &g).unwrap();
        let cfg = ModelConfig::ch(0.5).unwrap();
        let plan = StabilizationPlan::with_a(1.0, StabilizerOrder::Laplacian).unwrap();
        let r = |taus: &[f64], t: f64| temporal_convergence(&cfg, &plan, &init, taus, t, TemporalReference::Refined { factor: 16 });
        assert!(r(&[1e-2, 1e-2, 5e-3], 0.1).is_err());
        assert!(r(&[3e-2, 1e-2], 0.1).is_err());
        assert!(r(&[], 0.1).is_err());
    }

    #[test]
    fn linear_temporal_order_is_one() {
        let g = grid(8);
        let init = make_initial(&InitKind::TwoMode { modes: [[1, 0], [1, 1]], amplitudes: [1.0, 0.5] }, &g).unwrap();
        let cfg = ModelConfig::ch(0.5).unwrap().linear();
        let plan = StabilizationPlan::with_a(0.0, StabilizerOrder::Laplacian).unwrap();
        let est = temporal_convergence(&cfg, &plan, &init, &[4e-3, 2e-3, 1e-3, 5e-4], 0.1, TemporalReference::ExactLinear).unwrap();
        let p = est.fitted_order.unwrap();
        assert!((p - 1.0).abs() < 0.02, "{p}");
    }

    #[test]
    fn spatial_single_and_bandlimited() {
        let cfg = ModelConfig::ch(0.5).unwrap().linear();
        let init = InitKind::TwoMode { modes: [[1, 0], [0, 2]], amplitudes: [0.5, 0.3] };
        let study = spatial_convergence(&cfg, &[4, 6, 8], Cutoff::EuclideanBall, 1e-3, 1e-2, &init, SpatialStabilization::A(1.0)).unwrap();
        for r in &study.rows {
            assert_eq!(r.projection_error, 0.0);
            assert!(r.error <= 1e-12, "{}", r.error);
        }
        let one = spatial_convergence(&cfg, &[4], Cutoff::EuclideanBall, 1e-3, 1e-2, &init, SpatialStabilization::A(1.0)).unwrap();
        assert_eq!(one.rows.len(), 1);
        assert!(one.local_orders().is_empty());
        assert_eq!(one.is_superalgebraic(1e-12), None);
    }
}
