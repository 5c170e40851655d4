//! Parameter sweeps: one simulation per axis value, run in parallel,
//! summarized into a report.

use rayon::prelude::*;

use crate::config::{validate_with, SimulationConfig, ValidateOptions, ValidatedConfig};
use crate::error::{ConfigError, SimError, SweepError, Violation};
use crate::field::{solve_field, FieldSolution, DEFAULT_FIELD_TOL, DEFAULT_MAX_PICARD};
use crate::oracle::uniformity;
use crate::output::RunOutput;
use crate::transport::run_pulses;

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Boundary loss rate beta, 1/mm.
    Beta,
    /// Drug permeability P, mm/s.
    Permeability,
    /// Pulse count PN (values must be positive integers).
    PulseCount,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::Beta => "beta",
            SweepAxis::Permeability => "permeability",
            SweepAxis::PulseCount => "pulses",
        }
    }

    pub fn units(self) -> &'static str {
        match self {
            SweepAxis::Beta => "1/mm",
            SweepAxis::Permeability => "mm/s",
            SweepAxis::PulseCount => "count",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "beta" => Ok(SweepAxis::Beta),
            "permeability" => Ok(SweepAxis::Permeability),
            "pulses" => Ok(SweepAxis::PulseCount),
            other => Err(format!("unknown sweep axis `{other}` (expected beta, permeability, or pulses)")),
        }
    }
}

/// Applies one axis value to a config copy.
pub fn apply_axis(config: &mut SimulationConfig, axis: SweepAxis, value: f64) -> Result<(), ConfigError> {
    match axis {
        SweepAxis::Beta => config.boundary.beta = value,
        SweepAxis::Permeability => config.drug.permeability_p = value,
        SweepAxis::PulseCount => {
            if value < 1.0 || value.fract() != 0.0 || value > u32::MAX as f64 {
                return Err(ConfigError::Invalid(vec![Violation {
                    field: "pulses.count".into(),
                    reason: format!("pulse-count sweep values must be positive integers, got {value}"),
                }]));
            }
            config.pulses.pulse_count_pn = value as u32;
        }
    }
    Ok(())
}

/// Scalar summary of one sweep member.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepMemberSummary {
    pub value: f64,
    pub final_ecs_mass: f64,
    pub final_ics_mass: f64,
    pub final_boundary_loss: f64,
    /// Coefficient of variation of the final intracellular field; NaN
    /// when the field is identically zero.
    pub cov_cre: f64,
    /// x coordinates of the y = L/2 transect, mm.
    pub transect_x: Vec<f64>,
    /// C_RE along that transect at the final time.
    pub transect_cre: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub members: Vec<SweepMemberSummary>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub report: SweepReport,
    /// Full run outputs, aligned with `report.members`.
    pub runs: Vec<RunOutput>,
}

/// Runs one simulation per axis value, fully parallel across members.
///
/// The electrode problem is identical across all three axes, so the field
/// is solved once and shared. A failed member fails the whole sweep with
/// a per-member report.
pub fn run_sweep(
    base: &SimulationConfig,
    axis: SweepAxis,
    values: &[f64],
    opts: ValidateOptions,
) -> Result<SweepOutcome, SweepError> {
    if values.is_empty() {
        return Err(SweepError::EmptyValues);
    }

    let mut failures: Vec<(f64, SimError)> = Vec::new();
    let mut members: Vec<(f64, ValidatedConfig)> = Vec::new();
    for &value in values {
        let mut config = base.clone();
        let validated = apply_axis(&mut config, axis, value)
            .and_then(|()| validate_with(&config, opts));
        match validated {
            Ok(v) => members.push((value, v)),
            Err(e) => failures.push((value, SimError::Config(e))),
        }
    }
    if !failures.is_empty() {
        return Err(SweepError::Members(failures));
    }

    let field: FieldSolution =
        match solve_field(&members[0].1, DEFAULT_FIELD_TOL, DEFAULT_MAX_PICARD) {
            Ok(f) => f,
            Err(e) => return Err(SweepError::Members(vec![(members[0].0, SimError::Field(e))])),
        };

    let results: Vec<(f64, Result<RunOutput, SimError>)> = members
        .par_iter()
        .map(|(value, validated)| {
            let run = run_pulses(validated, &field).map_err(SimError::Transport);
            (*value, run)
        })
        .collect();

    let mut runs = Vec::with_capacity(results.len());
    let mut summaries = Vec::with_capacity(results.len());
    let mut failures: Vec<(f64, SimError)> = Vec::new();
    for (value, result) in results {
        match result {
            Ok(run) => {
                summaries.push(summarize(value, &run));
                runs.push(run);
            }
            Err(e) => failures.push((value, e)),
        }
    }
    if !failures.is_empty() {
        return Err(SweepError::Members(failures));
    }

    Ok(SweepOutcome {
        report: SweepReport { axis, members: summaries },
        runs,
    })
}

fn summarize(value: f64, run: &RunOutput) -> SweepMemberSummary {
    let last = run.ledger.final_record();
    let c_re = &run.final_state.c_re;
    let j_mid = ((c_re.ny() - 1) as f64 / 2.0).round() as usize;
    let transect_x = (0..c_re.nx()).map(|i| c_re.x(i)).collect();
    let transect_cre = (0..c_re.nx()).map(|i| c_re.at(i, j_mid)).collect();
    SweepMemberSummary {
        value,
        final_ecs_mass: last.ecs_mass,
        final_ics_mass: last.ics_mass,
        final_boundary_loss: last.boundary_loss_cum,
        cov_cre: uniformity(c_re).map_or(f64::NAN, |c| c),
        transect_x,
        transect_cre,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimulationConfig;

    fn fast_base() -> SimulationConfig {
        let mut cfg = SimulationConfig::table1();
        cfg.pulses.pulse_count_pn = 2;
        cfg.pulses.off_time_tm = 5.0;
        cfg
    }

    #[test]
    fn empty_values_are_rejected() {
        let err = run_sweep(&fast_base(), SweepAxis::Beta, &[], ValidateOptions::default());
        assert!(matches!(err, Err(SweepError::EmptyValues)));
    }

    #[test]
    fn invalid_member_fails_with_report() {
        let err = run_sweep(
            &fast_base(),
            SweepAxis::Beta,
            &[0.1, -3.0],
            ValidateOptions::default(),
        )
        .unwrap_err();
        match err {
            SweepError::Members(failures) => {
                assert_eq!(failures.len(), 1);
                assert_eq!(failures[0].0, -3.0);
            }
            other => panic!("expected member failures, got {other:?}"),
        }
    }

    #[test]
    fn pulse_axis_requires_integer_values() {
        let mut cfg = fast_base();
        assert!(apply_axis(&mut cfg, SweepAxis::PulseCount, 2.5).is_err());
        assert!(apply_axis(&mut cfg, SweepAxis::PulseCount, 0.0).is_err());
        assert!(apply_axis(&mut cfg, SweepAxis::PulseCount, 4.0).is_ok());
        assert_eq!(cfg.pulses.pulse_count_pn, 4);
    }

    #[test]
    fn beta_sweep_produces_ordered_members() {
        let outcome = run_sweep(
            &fast_base(),
            SweepAxis::Beta,
            &[0.0, 0.2],
            ValidateOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.report.members.len(), 2);
        assert_eq!(outcome.report.members[0].value, 0.0);
        assert_eq!(outcome.report.members[1].value, 0.2);
        // Loss only accrues with beta > 0.
        assert!(outcome.report.members[0].final_boundary_loss.abs() < 1e-15);
        assert!(outcome.report.members[1].final_boundary_loss > 0.0);
        assert_eq!(outcome.report.members[0].transect_cre.len(), 101);
    }
}
