//! Stabilized semi-implicit stepping.
//!
//! Both schemes share the per-mode update
//!
//! ```text
//! û¹(k) = [(1 + Aτ|k|^{2s}) û⁰(k) + τ N̂(k)] / (1 + ντ|k|⁴ + Aτ|k|^{2s})
//! ```
//!
//! where `N̂ = -|k|² Π_N f(u⁰)^` for Cahn–Hilliard and `N̂ = Π_N (ik · g(∇h⁰)^)`
//! for MBE. The nonlinearity is evaluated pointwise on the physical grid; with
//! `M ≥ 4N + 2` its projection onto the retained band carries no aliasing error.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::analysis::{lemma_margin_from_parts, RunParams, RunRecord, RunRow};
use crate::error::{Error, Result};
use crate::models::{self, ModelConfig, ModelKind, Nonlinearity, StabilizationPlan};
use crate::spectral::{Grid, GridSpec, Norm, PhysicalField, SpectralField};

/// Runs are aborted once the energy exceeds this multiple of the initial energy.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct StepperState {
    pub field: SpectralField,
    pub step: usize,
    pub time: f64,
    pub tau: f64,
}

impl StepperState {
    /// Initial state `u⁰ = Π_N u₀` with the mean removed.
    pub fn new(init: &SpectralField, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        let mut field = init.project_to_cutoff();
        field.remove_mean();
        Ok(Self {
            field,
            step: 0,
            time: 0.0,
            tau,
        })
    }

    fn advanced(&self, field: SpectralField) -> Self {
        let step = self.step + 1;
        Self {
            field,
            step,
            time: step as f64 * self.tau,
            tau: self.tau,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub energy_before: f64,
    pub energy_after: f64,
    /// `‖u^{n+1} - u^n‖₂`
    pub diff_l2: f64,
    /// `‖∇(u^{n+1} - u^n)‖₂`
    pub diff_grad_l2: f64,
    pub linf_before: f64,
    pub linf_after: f64,
    /// `‖·‖₂` of the scheme residual evaluated at the computed iterate.
    pub residual: f64,
    /// Slack in the per-step energy inequality (negative means violated).
    pub lemma_margin: f64,
}

/// Precomputed per-mode factors for one `(model, plan, τ, grid)` combination.
#[derive(Clone, Debug)]
pub struct Scheme {
    config: ModelConfig,
    plan: StabilizationPlan,
    tau: f64,
    grid: Arc<Grid>,
    /// `1 + Aτ|k|^{2s}`
    explicit: Vec<f64>,
    /// `1 / (1 + ντ|k|⁴ + Aτ|k|^{2s})`
    inv_implicit: Vec<f64>,
    in_band: Vec<bool>,
    enforce_mean_zero: bool,
}

impl Scheme {
    pub fn new(config: ModelConfig, plan: StabilizationPlan, tau: f64, grid: &Arc<Grid>) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        if !(plan.a >= 0.0 && plan.a.is_finite()) {
            return Err(Error::InvalidArgument(format!("A must be nonnegative, got {}", plan.a)));
        }
        let spec = grid.spec();
        let len = grid.len();
        let mut explicit = Vec::with_capacity(len);
        let mut inv_implicit = Vec::with_capacity(len);
        let mut in_band = Vec::with_capacity(len);
        for idx in 0..len {
            let k2 = grid.k2(idx);
            let stab = plan.a * tau * plan.s_op.symbol(k2);
            explicit.push(1.0 + stab);
            inv_implicit.push(1.0 / (1.0 + config.nu * tau * k2 * k2 + stab));
            in_band.push(spec.in_cutoff(grid.wavenumber(idx)));
        }
        Ok(Self {
            config,
            plan,
            tau,
            grid: Arc::clone(grid),
            explicit,
            inv_implicit,
            in_band,
            enforce_mean_zero: true,
        })
    }

    /// With enforcement off, the `k = 0` mode is carried by the update formula
    /// instead of being reset to zero.
    pub fn enforce_mean_zero(mut self, on: bool) -> Self {
        self.enforce_mean_zero = on;
        self
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn plan(&self) -> &StabilizationPlan {
        &self.plan
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// The explicit term `N̂` (already projected onto the band).
    pub fn nonlinear_term(&self, u: &SpectralField) -> Result<SpectralField> {
        if u.grid().spec() != self.grid.spec() {
            return Err(Error::GridMismatch);
        }
        if self.config.nonlinearity == Nonlinearity::Off {
            return Ok(SpectralField::zeros(&self.grid));
        }
        self.nonlinear_from(&self.samples(u))
    }

    fn samples(&self, u: &SpectralField) -> Samples {
        match self.config.kind {
            ModelKind::Ch => Samples::Values(u.to_physical_unchecked()),
            ModelKind::Mbe => Samples::Gradient(Box::new(u.gradient_physical())),
        }
    }

    /// Physical-space data of `u` shared by the explicit term and the diagnostics.
    fn probe(&self, u: &SpectralField) -> Probe {
        let nu = self.config.nu;
        let samples = self.samples(u);
        let (energy, linf, sup) = match &samples {
            Samples::Values(phys) => {
                let linf = phys.max_abs();
                (models::energy_ch_sampled(u, phys, nu), linf, linf)
            }
            Samples::Gradient(grad) => {
                let sup = grad[0]
                    .values()
                    .iter()
                    .zip(grad[1].values())
                    .map(|(a, b)| a.hypot(*b))
                    .fold(0.0, f64::max);
                (models::energy_mbe_sampled(u, grad, nu), u.norm(Norm::Linf), sup)
            }
        };
        Probe {
            energy,
            linf,
            sup,
            samples,
        }
    }

    fn nonlinear_from(&self, samples: &Samples) -> Result<SpectralField> {
        if self.config.nonlinearity == Nonlinearity::Off {
            return Ok(SpectralField::zeros(&self.grid));
        }
        let mut term = match samples {
            Samples::Values(phys) => models::f_ch(phys).to_spectral()?.laplacian(),
            Samples::Gradient(grad) => {
                let [gx, gy] = models::g_mbe(grad);
                &gx.to_spectral()?.partial(0) + &gy.to_spectral()?.partial(1)
            }
        };
        for (c, keep) in term.coeffs_mut().iter_mut().zip(&self.in_band) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        Ok(term)
    }

    /// `u^{n+1}` from `u^n` given the explicit term.
    fn solve(&self, u: &SpectralField, nl: &SpectralField) -> SpectralField {
        let mut next = SpectralField::zeros(&self.grid);
        let tau = self.tau;
        for (idx, out) in next.coeffs_mut().iter_mut().enumerate() {
            if self.in_band[idx] {
                *out = (u.coeffs()[idx] * self.explicit[idx] + nl.coeffs()[idx] * tau)
                    * self.inv_implicit[idx];
            }
        }
        if self.enforce_mean_zero {
            next.remove_mean();
        }
        next
    }

    /// One application of the scheme, without diagnostics.
    pub fn advance(&self, u: &SpectralField) -> Result<SpectralField> {
        let nl = self.nonlinear_term(u)?;
        let next = self.solve(u, &nl);
        if !next.is_finite() {
            return Err(Error::NonFinite("scheme update"));
        }
        Ok(next)
    }

    /// `‖(u¹ - u⁰)/τ + νΔ²u¹ + A|k|^{2s}(u¹ - u⁰) - N̂‖₂`.
    pub fn residual(&self, u0: &SpectralField, u1: &SpectralField, nl: &SpectralField) -> f64 {
        let nu = self.config.nu;
        let (a, tau) = (self.plan.a, self.tau);
        let mut r = SpectralField::zeros(&self.grid);
        for (idx, out) in r.coeffs_mut().iter_mut().enumerate() {
            let k2 = self.grid.k2(idx);
            let d = u1.coeffs()[idx] - u0.coeffs()[idx];
            *out = d / tau + u1.coeffs()[idx] * (nu * k2 * k2) + d * (a * self.plan.s_op.symbol(k2))
                - nl.coeffs()[idx];
        }
        r.norm(Norm::L2)
    }

    /// One step with full diagnostics. `energy_before` may be passed in when the
    /// caller already knows it.
    pub fn step_with(
        &self,
        state: &StepperState,
        energy_before: Option<f64>,
    ) -> Result<(StepperState, StepDiagnostics)> {
        let mut probe = self.probe(&state.field);
        if let Some(e) = energy_before {
            probe.energy = e;
        }
        let (next, diag, _) = self.step_probed(state, probe)?;
        Ok((next, diag))
    }

    pub fn step(&self, state: &StepperState) -> Result<(StepperState, StepDiagnostics)> {
        self.step_with(state, None)
    }

    /// Step reusing the probe of `state.field`; also returns the probe of the new field.
    fn step_probed(
        &self,
        state: &StepperState,
        probe0: Probe,
    ) -> Result<(StepperState, StepDiagnostics, Probe)> {
        let divergence = |reason: &str| Error::Divergence {
            step: state.step + 1,
            reason: reason.to_string(),
        };
        let u0 = &state.field;
        let nl = self.nonlinear_from(&probe0.samples)?;
        let u1 = self.solve(u0, &nl);
        if !u1.is_finite() {
            return Err(divergence("non-finite coefficient"));
        }
        let probe1 = self.probe(&u1);
        if !probe1.energy.is_finite() {
            return Err(divergence("non-finite energy"));
        }
        let diff = &u1 - u0;
        let diff_l2 = diff.norm(Norm::L2);
        let diff_grad_l2 = diff.norm(Norm::Hdot1);
        let diff_norm = match self.config.kind {
            ModelKind::Ch => diff_l2,
            ModelKind::Mbe => diff_grad_l2,
        };
        let lemma_margin = lemma_margin_from_parts(
            self.config.kind,
            probe0.energy,
            probe1.energy,
            diff_norm,
            probe0.sup,
            probe1.sup,
            self.config.nu,
            self.tau,
            self.plan.a,
        );
        let diag = StepDiagnostics {
            energy_before: probe0.energy,
            energy_after: probe1.energy,
            diff_l2,
            diff_grad_l2,
            linf_before: probe0.linf,
            linf_after: probe1.linf,
            residual: self.residual(u0, &u1, &nl),
            lemma_margin,
        };
        Ok((state.advanced(u1), diag, probe1))
    }
}

enum Samples {
    Values(PhysicalField),
    Gradient(Box<[PhysicalField; 2]>),
}

struct Probe {
    energy: f64,
    linf: f64,
    /// `‖u‖∞` for CH, `‖∇h‖∞` for MBE.
    sup: f64,
    samples: Samples,
}

fn step_model(
    kind: ModelKind,
    state: &StepperState,
    nu: f64,
    plan: &StabilizationPlan,
) -> Result<(StepperState, StepDiagnostics)> {
    let config = ModelConfig::new(kind, nu)?;
    Scheme::new(config, *plan, state.tau, state.field.grid())?.step(state)
}

/// One step of the stabilized Cahn–Hilliard scheme.
pub fn step_ch(
    state: &StepperState,
    nu: f64,
    plan: &StabilizationPlan,
) -> Result<(StepperState, StepDiagnostics)> {
    step_model(ModelKind::Ch, state, nu, plan)
}

/// One step of the stabilized MBE scheme.
pub fn step_mbe(
    state: &StepperState,
    nu: f64,
    plan: &StabilizationPlan,
) -> Result<(StepperState, StepDiagnostics)> {
    step_model(ModelKind::Mbe, state, nu, plan)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub enforce_mean_zero: bool,
    /// Recorded in the run parameters only.
    pub seed: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            enforce_mean_zero: true,
            seed: None,
        }
    }
}

/// A run that stopped early; `record` holds every completed step.
#[derive(Debug, Clone, ThisError)]
#[error("run aborted after {} completed steps: {error}", record.rows.len())]
pub struct RunAborted {
    pub record: RunRecord,
    pub error: Error,
}

/// Advances `n_steps` steps, calling `observer` after each one.
pub fn run(
    init: &SpectralField,
    config: &ModelConfig,
    plan: &StabilizationPlan,
    tau: f64,
    n_steps: usize,
    observer: impl FnMut(&StepperState, &StepDiagnostics),
) -> std::result::Result<RunRecord, RunAborted> {
    run_with(init, config, plan, tau, n_steps, &RunOptions::default(), observer)
}

pub fn run_with(
    init: &SpectralField,
    config: &ModelConfig,
    plan: &StabilizationPlan,
    tau: f64,
    n_steps: usize,
    opts: &RunOptions,
    mut observer: impl FnMut(&StepperState, &StepDiagnostics),
) -> std::result::Result<RunRecord, RunAborted> {
    let spec = init.grid().spec();
    let params = RunParams {
        model: config.kind,
        nu: config.nu,
        nonlinearity: config.nonlinearity,
        n: spec.n,
        m: spec.m,
        cutoff: spec.cutoff,
        tau,
        a: plan.a,
        beta: plan.beta,
        s_op: plan.s_op,
        seed: opts.seed,
    };
    let empty = |error: Error| RunAborted {
        record: RunRecord::new(params.clone(), f64::NAN, 0.0),
        error,
    };
    if n_steps == 0 {
        return Err(empty(Error::InvalidArgument("n_steps must be at least 1".into())));
    }
    let scheme = Scheme::new(*config, *plan, tau, init.grid())
        .map_err(empty)?
        .enforce_mean_zero(opts.enforce_mean_zero);
    let mut state = if opts.enforce_mean_zero {
        StepperState::new(init, tau).map_err(empty)?
    } else {
        let mut s = StepperState::new(init, tau).map_err(empty)?;
        s.field = init.project_to_cutoff();
        s
    };
    let mut probe = scheme.probe(&state.field);
    let e0 = probe.energy;
    let mut record = RunRecord::new(params, e0, models::mass(&state.field));
    let limit = DIVERGENCE_FACTOR * e0.max(f64::MIN_POSITIVE);
    for _ in 0..n_steps {
        let (next, diag, next_probe) = match scheme.step_probed(&state, probe) {
            Ok(r) => r,
            Err(error) => return Err(RunAborted { record, error }),
        };
        if diag.energy_after > limit {
            return Err(RunAborted {
                record,
                error: Error::Divergence {
                    step: next.step,
                    reason: format!("energy {:e} exceeds {DIVERGENCE_FACTOR:e} E(u0)", diag.energy_after),
                },
            });
        }
        observer(&next, &diag);
        record.rows.push(RunRow {
            step: next.step,
            time: next.time,
            energy: diag.energy_after,
            mass: models::mass(&next.field),
            linf: diag.linf_after,
            diff_l2: diag.diff_l2,
            residual: diag.residual,
            lemma_margin: diag.lemma_margin,
        });
        probe = next_probe;
        state = next;
    }
    record.final_field = Some(state.field);
    Ok(record)
}

/// Initial-data families. Every constructed field is mean-zero, Hermitian and
/// supported inside the grid's cutoff set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitKind {
    /// Independent uniform coefficients on `|k| ≤ band` (in the grid's cutoff
    /// shape), rescaled so the grid maximum of `|u|` equals `amplitude`.
    #[serde(rename = "random")]
    RandomBandlimited { seed: u64, amplitude: f64, band: usize },
    /// `amplitude · sin(k·x)`.
    SingleMode { mode: [i64; 2], amplitude: f64 },
    /// `a₁ sin(k₁·x) + a₂ cos(k₂·x)`.
    TwoMode { modes: [[i64; 2]; 2], amplitudes: [f64; 2] },
    /// `amplitude · exp(κ(cos(x₁-π) - 1) + κ(cos(x₂-π) - 1))` minus its mean;
    /// entire but not band-limited.
    Bump { kappa: f64, amplitude: f64 },
}

fn set_sin(f: &mut SpectralField, k: [i64; 2], amplitude: f64) -> Result<()> {
    let scale = (2.0 * std::f64::consts::PI).powi(2) / 2.0;
    let c = f.coeff(k) + Complex64::new(0.0, -amplitude * scale);
    f.set_mode(k, c)
}

fn set_cos(f: &mut SpectralField, k: [i64; 2], amplitude: f64) -> Result<()> {
    let scale = (2.0 * std::f64::consts::PI).powi(2) / 2.0;
    let c = f.coeff(k) + Complex64::new(amplitude * scale, 0.0);
    f.set_mode(k, c)
}

fn check_mode(spec: &GridSpec, k: [i64; 2]) -> Result<()> {
    if k == [0, 0] || !spec.in_cutoff(k) {
        return Err(Error::InvalidArgument(format!(
            "mode {k:?} must be nonzero and inside the cutoff N = {}",
            spec.n
        )));
    }
    Ok(())
}

pub fn make_initial(kind: &InitKind, grid: &Arc<Grid>) -> Result<SpectralField> {
    let spec = grid.spec();
    let mut field = match kind {
        InitKind::RandomBandlimited {
            seed,
            amplitude,
            band,
        } => {
            if *band == 0 || *band > spec.n {
                return Err(Error::InvalidArgument(format!(
                    "band must lie in 1..={}, got {band}",
                    spec.n
                )));
            }
            // Built on a canonical grid for `band` so that the same seed gives the
            // same function on every target grid.
            let canon = Grid::new(GridSpec::with_default_size(*band, spec.cutoff)?);
            let mut f = SpectralField::zeros(&canon);
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let b = *band as i64;
            for k1 in 0..=b {
                for k2 in -b..=b {
                    if (k1 == 0 && k2 <= 0) || !spec.cutoff.contains([k1, k2], *band) {
                        continue;
                    }
                    let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    f.set_mode([k1, k2], c)?;
                }
            }
            let sup = f.norm(Norm::Linf);
            let f = if sup > 0.0 { f.scaled(amplitude / sup) } else { f };
            f.resample(grid)
        }
        InitKind::SingleMode { mode, amplitude } => {
            check_mode(&spec, *mode)?;
            let mut f = SpectralField::zeros(grid);
            set_sin(&mut f, *mode, *amplitude)?;
            f
        }
        InitKind::TwoMode { modes, amplitudes } => {
            let mut f = SpectralField::zeros(grid);
            check_mode(&spec, modes[0])?;
            check_mode(&spec, modes[1])?;
            set_sin(&mut f, modes[0], amplitudes[0])?;
            set_cos(&mut f, modes[1], amplitudes[1])?;
            f
        }
        InitKind::Bump { kappa, amplitude } => {
            if !(*kappa > 0.0 && kappa.is_finite()) {
                return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa}")));
            }
            let (k, a) = (*kappa, *amplitude);
            let pi = std::f64::consts::PI;
            SpectralField::sample_projected(grid, move |x, y| {
                a * (k * ((x - pi).cos() - 1.0) + k * ((y - pi).cos() - 1.0)).exp()
            })?
        }
    };
    field.remove_mean();
    Ok(field.project_to_cutoff())
}
