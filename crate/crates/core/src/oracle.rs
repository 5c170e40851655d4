//! Independent verification machinery: the well-mixed closed form, a
//! deliberately naive reference stepper, the dual-porosity coefficient
//! comparison, and the uniformity statistic.
//!
//! Everything here exists to check the production path from a second
//! route; none of it shares code with the optimized kernel.

use crate::config::{BoundaryParams, PulseSchedule, RobinVariant};
use crate::error::OracleError;
use crate::grid::ScalarField2D;
use crate::kinetics::{mtc, mtc_kalamiza, KalamizaParams, MtcParams};
use crate::transport::{ConcentrationState, NEGATIVE_CLAMP_FLOOR};

/// Parameters of the zero-gradient reduction of the transport system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellMixedParams {
    pub porosity_eps: f64,
    /// Transfer coefficient at clock zero, 1/s.
    pub mu0: f64,
    pub tau: f64,
    pub c_e0: f64,
    pub c_re0: f64,
}

/// Exact solution of the exchange ODEs with `mu(t) = mu0 exp(-t/tau)`
/// and no spatial gradients:
///
/// ```text
/// delta(t) = (CE0 - CRE0) exp(-(mu0 tau / eps)(1 - e^{-t/tau}))
/// CE = m + (1-eps) delta,  CRE = m - eps delta
/// ```
///
/// where `m = eps CE0 + (1-eps) CRE0` is the conserved mixture mean
/// (the gap contracts at rate `mu/eps` because `1 + (1-eps)/eps = 1/eps`).
pub fn well_mixed_closed_form(p: &WellMixedParams, t: f64) -> (f64, f64) {
    let m = p.porosity_eps * p.c_e0 + (1.0 - p.porosity_eps) * p.c_re0;
    let log_decay = -(p.mu0 * p.tau / p.porosity_eps) * (1.0 - (-t / p.tau).exp());
    let delta = (p.c_e0 - p.c_re0) * log_decay.exp();
    (m + (1.0 - p.porosity_eps) * delta, m - p.porosity_eps * delta)
}

/// The closed form packaged with its parameters, including the
/// segment-chained extension to a full pulse schedule.
#[derive(Debug, Clone, Copy)]
pub struct WellMixedSolution {
    pub params: WellMixedParams,
}

impl WellMixedSolution {
    pub fn new(params: WellMixedParams) -> Self {
        WellMixedSolution { params }
    }

    /// Single decay segment starting at clock zero.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        well_mixed_closed_form(&self.params, t)
    }

    /// Multi-pulse closed form: the gap decay factor is the product of
    /// per-segment factors — `exp(-(mu0/eps) s)` across an ON span of
    /// length `s` (clock pinned at zero) and the single-segment factor
    /// across each OFF span. Times beyond the schedule hold the final
    /// value.
    pub fn eval_pulsed(&self, schedule: &PulseSchedule, t: f64) -> (f64, f64) {
        let p = &self.params;
        let m = p.porosity_eps * p.c_e0 + (1.0 - p.porosity_eps) * p.c_re0;
        let mut log_decay = 0.0;
        let mut remaining = t.max(0.0);
        for _ in 0..schedule.pulse_count_pn {
            if remaining <= 0.0 {
                break;
            }
            let on = remaining.min(schedule.on_time_tep);
            log_decay += -(p.mu0 / p.porosity_eps) * on;
            remaining -= on;
            if remaining <= 0.0 {
                break;
            }
            let off = remaining.min(schedule.off_time_tm);
            log_decay += -(p.mu0 * p.tau / p.porosity_eps) * (1.0 - (-off / p.tau).exp());
            remaining -= off;
        }
        let delta = (p.c_e0 - p.c_re0) * log_decay.exp();
        (m + (1.0 - p.porosity_eps) * delta, m - p.porosity_eps * delta)
    }
}

/// Naive index-by-index reference step, used for bit-level equivalence
/// testing of the optimized kernel. Ghost values come from the same
/// outward-normal Robin closure, evaluated through a branchy accessor
/// instead of hoisted boundary handling. Verification-only: small grids.
pub fn brute_force_step(
    state: &ConcentrationState,
    mu_now: f64,
    dt: f64,
    diffusivity: f64,
    porosity_eps: f64,
    boundary: &BoundaryParams,
) -> ConcentrationState {
    let nx = state.c_e.nx();
    let ny = state.c_e.ny();
    assert!(nx <= 11 && ny <= 11, "reference stepper is restricted to small grids");
    let dx = state.c_e.dx();
    let dy = state.c_e.dy();
    let a = diffusivity * dt / (dx * dx);
    let c = diffusivity * dt / (dy * dy);
    let dd = (1.0 - porosity_eps) / porosity_eps * mu_now * dt;
    let b = 1.0 - (2.0 * a + 2.0 * c + dd);
    let far = match boundary.robin {
        RobinVariant::OutwardLoss => -1.0,
        RobinVariant::LiteralPaper => 1.0,
    };

    let ce = |i: isize, j: isize| -> f64 {
        let (nxm, nym) = (nx as isize - 1, ny as isize - 1);
        if (0..=nxm).contains(&i) && (0..=nym).contains(&j) {
            state.c_e.at(i as usize, j as usize)
        } else if i == -1 {
            state.c_e.at(1, j as usize) - 2.0 * dx * boundary.beta * state.c_e.at(0, j as usize)
        } else if i == nxm + 1 {
            state.c_e.at(nx - 2, j as usize)
                + far * 2.0 * dx * boundary.beta * state.c_e.at(nx - 1, j as usize)
        } else if j == -1 {
            state.c_e.at(i as usize, 1) - 2.0 * dy * boundary.beta * state.c_e.at(i as usize, 0)
        } else if j == nym + 1 {
            state.c_e.at(i as usize, ny - 2)
                + far * 2.0 * dy * boundary.beta * state.c_e.at(i as usize, ny - 1)
        } else {
            unreachable!("5-point stencil never reaches corner ghosts")
        }
    };

    let clamp = |v: f64| -> f64 {
        if (NEGATIVE_CLAMP_FLOOR..0.0).contains(&v) {
            0.0
        } else {
            v
        }
    };

    let mut next = state.clone();
    for j in 0..ny {
        for i in 0..nx {
            let (is, js) = (i as isize, j as isize);
            let v = a * (ce(is - 1, js) + ce(is + 1, js))
                + b * state.c_e.at(i, j)
                + c * (ce(is, js - 1) + ce(is, js + 1))
                + dd * state.c_re.at(i, j);
            next.c_e.set(i, j, clamp(v));
            let w = state.c_re.at(i, j)
                + mu_now * dt * (state.c_e.at(i, j) - state.c_re.at(i, j));
            next.c_re.set(i, j, clamp(w));
        }
    }
    next.time = state.time + dt;
    next
}

/// The model coefficient `mu(t) = (P f_p / r_c) exp(-t/tau)` bundled with
/// the pore fraction it was evaluated at.
#[derive(Debug, Clone, Copy)]
pub struct ModelMtc {
    pub pore_fraction: f64,
    pub params: MtcParams,
}

impl ModelMtc {
    pub fn prefactor(&self) -> f64 {
        self.params.permeability_p * self.pore_fraction / self.params.cell_radius_rc
    }

    pub fn eval(&self, clock: f64) -> f64 {
        mtc(clock, self.pore_fraction, &self.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtcComparison {
    /// Largest |mu - mu_k| / max(mu, mu_k) over the sampled horizon.
    pub max_rel_gap: f64,
    pub prefactor_ratio: f64,
}

/// Samples both transfer coefficients on `[0, horizon]` and reports the
/// worst relative gap plus the prefactor ratio. With a shared resealing
/// constant the gap is pure prefactor scaling and time-independent.
pub fn compare_mtc_curves(
    model: &ModelMtc,
    kalamiza: &KalamizaParams,
    horizon: f64,
    samples: usize,
) -> MtcComparison {
    assert!(samples >= 2 && horizon > 0.0);
    let mut max_rel_gap = 0.0_f64;
    for k in 0..samples {
        let t = horizon * k as f64 / (samples - 1) as f64;
        let a = model.eval(t);
        let b = mtc_kalamiza(t, kalamiza);
        let denom = a.abs().max(b.abs());
        if denom > 0.0 {
            max_rel_gap = max_rel_gap.max((a - b).abs() / denom);
        }
    }
    MtcComparison {
        max_rel_gap,
        prefactor_ratio: model.prefactor() / kalamiza.prefactor(),
    }
}

/// Everything the coefficient-model comparison produces: both sampled
/// curves, the gap summary, and the center-probe intracellular series
/// from a full transport run under each coefficient.
#[derive(Debug, Clone)]
pub struct KalamizaComparisonData {
    pub sample_times: Vec<f64>,
    pub mu_model: Vec<f64>,
    pub mu_kalamiza: Vec<f64>,
    pub model_prefactor: f64,
    pub kalamiza_prefactor: f64,
    pub comparison: MtcComparison,
    /// (time, CRE at the domain center) under the model coefficient.
    pub probe_model: Vec<(f64, f64)>,
    pub probe_kalamiza: Vec<(f64, f64)>,
}

/// Runs the dual-porosity comparison: sample both coefficients over one
/// OFF window, then integrate the transport system once per coefficient
/// and record the intracellular concentration at the domain center.
pub fn kalamiza_comparison(
    config: &crate::config::ValidatedConfig,
    field: &crate::field::FieldSolution,
) -> Result<KalamizaComparisonData, crate::error::SimError> {
    use crate::config::validate;
    use crate::kinetics::pore_fraction;
    use crate::transport::run_schedule;

    let center = (0.5 * config.tissue.length_l, 0.5 * config.tissue.length_l);
    let mut probe_cfg = config.config().clone();
    probe_cfg.probes = vec![center];
    let probe_cfg = validate(&probe_cfg)?;

    let fp = pore_fraction(field.e_mag.mean(), &config.electro);
    let model = ModelMtc { pore_fraction: fp, params: MtcParams::from_config(config) };
    let kalamiza = KalamizaParams::comparison_defaults(config);

    let horizon = config.pulses.off_time_tm;
    let samples = 501;
    let comparison = compare_mtc_curves(&model, &kalamiza, horizon, samples);
    let sample_times: Vec<f64> = (0..samples)
        .map(|k| horizon * k as f64 / (samples - 1) as f64)
        .collect();
    let mu_model = sample_times.iter().map(|&t| model.eval(t)).collect();
    let mu_kalamiza = sample_times.iter().map(|&t| mtc_kalamiza(t, &kalamiza)).collect();

    let run_model = run_schedule(&probe_cfg, model.prefactor())?;
    let run_kalamiza = run_schedule(&probe_cfg, kalamiza.prefactor())?;
    let extract = |run: &crate::output::RunOutput| {
        run.probe_series
            .records()
            .iter()
            .map(|r| (r.time, r.values[0].1))
            .collect::<Vec<_>>()
    };

    Ok(KalamizaComparisonData {
        sample_times,
        mu_model,
        mu_kalamiza,
        model_prefactor: model.prefactor(),
        kalamiza_prefactor: kalamiza.prefactor(),
        comparison,
        probe_model: extract(&run_model),
        probe_kalamiza: extract(&run_kalamiza),
    })
}

/// Coefficient of variation (stddev/mean) over all nodes; the uniformity
/// metric of the intracellular distribution.
// The negated comparison treats a NaN mean as degenerate too.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn uniformity(field: &ScalarField2D) -> Result<f64, OracleError> {
    let n = field.values().len() as f64;
    let mean = field.values().iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(OracleError::DegenerateField);
    }
    let var = field
        .values()
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    Ok(var.sqrt() / mean)
}
