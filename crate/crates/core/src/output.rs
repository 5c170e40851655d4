//! Run artifacts and their on-disk formats.
//!
//! Every file is plain delimited text with a `#` metadata block that
//! declares units. Floats print with shortest round-trip formatting, so
//! identical runs produce byte-identical files and every value re-parses
//! to the same bits.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::config::{manifest_to_toml, ProvenanceEcho, SimulationConfig};
use crate::field::FieldSolution;
use crate::grid::ScalarField2D;
use crate::oracle::{KalamizaComparisonData, MtcComparison};
use crate::sweep::{SweepOutcome, SweepReport};
use crate::transport::{ConcentrationState, MassLedger};

pub const TOOL_NAME: &str = "epsim";

pub fn tool_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Time series at the configured probe points.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSeries {
    points: Vec<(f64, f64)>,
    records: Vec<ProbeRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub time: f64,
    /// One (CE, CRE) pair per probe point.
    pub values: Vec<(f64, f64)>,
}

impl ProbeSeries {
    pub fn new(points: Vec<(f64, f64)>) -> Self {
        ProbeSeries { points, records: Vec::new() }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn push(&mut self, time: f64, values: Vec<(f64, f64)>) {
        debug_assert_eq!(values.len(), self.points.len());
        self.records.push(ProbeRecord { time, values });
    }

    pub fn records(&self) -> &[ProbeRecord] {
        &self.records
    }

    pub fn last_time(&self) -> Option<f64> {
        self.records.last().map(|r| r.time)
    }

    /// The record whose time is closest to `t`.
    pub fn nearest_record(&self, t: f64) -> Option<&ProbeRecord> {
        self.records
            .iter()
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
    }
}

/// Full grids captured at one requested time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub c_e: ScalarField2D,
    pub c_re: ScalarField2D,
}

/// Everything needed to reproduce and audit a run. Serialized as
/// `manifest.toml`, which doubles as a loadable config document.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    /// Reserved reproducibility seed; the kernel is deterministic.
    pub seed: u64,
    pub allow_unstable: bool,
    pub unstable: bool,
    pub stability_limit: f64,
    pub total_time: f64,
    /// Mean field magnitude the membrane state was derived from, V/mm.
    pub mean_field: Option<f64>,
    pub pore_fraction: Option<f64>,
    /// Transfer coefficient at pulse time, 1/s.
    pub mu0: f64,
    pub max_conservation_residual: f64,
    pub conservation_tol: f64,
    pub clamped_negatives: u64,
    pub config: SimulationConfig,
}

impl RunManifest {
    pub fn provenance(&self) -> ProvenanceEcho {
        ProvenanceEcho {
            tool: TOOL_NAME.to_string(),
            version: tool_version().to_string(),
            seed: self.seed,
            allow_unstable: self.allow_unstable,
            unstable: self.unstable,
            stability_limit_s: self.stability_limit,
            total_time_s: self.total_time,
            mean_field_v_per_mm: self.mean_field,
            pore_fraction: self.pore_fraction,
            mtc_at_pulse_per_s: self.mu0,
            max_conservation_residual: self.max_conservation_residual,
            conservation_tol: self.conservation_tol,
            clamped_negatives: self.clamped_negatives,
        }
    }

    pub fn to_toml(&self) -> String {
        manifest_to_toml(&self.provenance(), &self.config)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub probe_series: ProbeSeries,
    pub snapshots: Vec<Snapshot>,
    pub ledger: MassLedger,
    pub final_state: ConcentrationState,
    /// Converged potential/field/conductivity grids, attached on request.
    pub field_export: Option<FieldSolution>,
}

/// Renders a grid in the snapshot text format.
pub fn grid_to_string(field: &ScalarField2D, time: Option<f64>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# quantity: {}", field.quantity().label());
    let _ = writeln!(s, "# units: {}", field.quantity().units());
    let _ = writeln!(s, "# nx: {}", field.nx());
    let _ = writeln!(s, "# ny: {}", field.ny());
    let _ = writeln!(s, "# dx: {} mm", field.dx());
    let _ = writeln!(s, "# dy: {} mm", field.dy());
    if let Some(t) = time {
        let _ = writeln!(s, "# time: {t} s");
    }
    for j in 0..field.ny() {
        let row = field.row(j);
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

pub fn probes_to_csv(series: &ProbeSeries) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# units: time s, concentrations a.u.");
    for (k, (x, y)) in series.points().iter().enumerate() {
        let _ = writeln!(s, "# probe p{k}: x = {x} mm, y = {y} mm");
    }
    s.push_str("time");
    for k in 0..series.points().len() {
        let _ = write!(s, ",p{k}_ce,p{k}_cre");
    }
    s.push('\n');
    for r in series.records() {
        let _ = write!(s, "{}", r.time);
        for (ce, cre) in &r.values {
            let _ = write!(s, ",{ce},{cre}");
        }
        s.push('\n');
    }
    s
}

pub fn ledger_to_csv(ledger: &MassLedger) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# units: time s, masses a.u.*mm^2, residual dimensionless");
    let _ = writeln!(
        s,
        "# clamped_negatives: {} (summed magnitude {})",
        ledger.clamped_negatives(),
        ledger.clamped_magnitude()
    );
    s.push_str("time,ecs_mass,ics_mass,boundary_loss_cum,residual\n");
    for r in ledger.records() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.time, r.ecs_mass, r.ics_mass, r.boundary_loss_cum, r.residual
        );
    }
    s
}

/// Writes manifest, probe series, ledger, snapshots, and the optional
/// field export under `dir`.
pub fn write_run_output(out: &RunOutput, dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("manifest.toml"), out.manifest.to_toml())?;
    std::fs::write(dir.join("probes.csv"), probes_to_csv(&out.probe_series))?;
    std::fs::write(dir.join("ledger.csv"), ledger_to_csv(&out.ledger))?;

    let snap_dir = dir.join("snapshots");
    std::fs::create_dir_all(&snap_dir)?;
    for (k, snap) in out.snapshots.iter().enumerate() {
        std::fs::write(
            snap_dir.join(format!("snap_{k:04}_ce.txt")),
            grid_to_string(&snap.c_e, Some(snap.time)),
        )?;
        std::fs::write(
            snap_dir.join(format!("snap_{k:04}_cre.txt")),
            grid_to_string(&snap.c_re, Some(snap.time)),
        )?;
    }

    if let Some(field) = &out.field_export {
        let field_dir = dir.join("field");
        std::fs::create_dir_all(&field_dir)?;
        std::fs::write(field_dir.join("phi.txt"), grid_to_string(&field.phi, None))?;
        std::fs::write(field_dir.join("e_mag.txt"), grid_to_string(&field.e_mag, None))?;
        std::fs::write(field_dir.join("sigma.txt"), grid_to_string(&field.sigma, None))?;
    }
    Ok(())
}

pub fn sweep_report_to_csv(report: &SweepReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# axis: {} ({})", report.axis.label(), report.axis.units());
    let _ = writeln!(s, "# units: masses a.u.*mm^2, cov dimensionless");
    s.push_str("value,final_ecs_mass,final_ics_mass,boundary_loss_cum,cov_cre,member_dir\n");
    for (k, m) in report.members.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},member_{k:02}",
            m.value, m.final_ecs_mass, m.final_ics_mass, m.final_boundary_loss, m.cov_cre
        );
    }
    s
}

fn transect_to_csv(member: &crate::sweep::SweepMemberSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# C_RE along y = L/2 at the final time; units: x mm, cre a.u.");
    s.push_str("x,cre\n");
    for (x, v) in member.transect_x.iter().zip(&member.transect_cre) {
        let _ = writeln!(s, "{x},{v}");
    }
    s
}

/// Writes the sweep report plus one full run directory per member.
pub fn write_sweep_outputs(outcome: &SweepOutcome, dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("sweep_report.csv"), sweep_report_to_csv(&outcome.report))?;
    for (k, (member, run)) in outcome.report.members.iter().zip(&outcome.runs).enumerate() {
        let member_dir = dir.join(format!("member_{k:02}"));
        write_run_output(run, &member_dir)?;
        std::fs::write(member_dir.join("transect.csv"), transect_to_csv(member))?;
    }
    Ok(())
}

fn gap_summary_to_toml(cmp: &MtcComparison, model_prefactor: f64, kalamiza_prefactor: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model_prefactor_per_s = {model_prefactor}");
    let _ = writeln!(s, "kalamiza_prefactor_per_s = {kalamiza_prefactor}");
    let _ = writeln!(s, "prefactor_ratio = {}", cmp.prefactor_ratio);
    let _ = writeln!(s, "max_rel_gap = {}", cmp.max_rel_gap);
    s
}

/// Writes the coefficient curves, both probe series, and the gap summary.
pub fn write_kalamiza_outputs(data: &KalamizaComparisonData, dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut s = String::new();
    let _ = writeln!(s, "# units: time s, coefficients 1/s");
    s.push_str("time,mu_model,mu_kalamiza\n");
    for ((t, a), b) in data.sample_times.iter().zip(&data.mu_model).zip(&data.mu_kalamiza) {
        let _ = writeln!(s, "{t},{a},{b}");
    }
    std::fs::write(dir.join("mtc_curves.csv"), s)?;

    let mut p = String::new();
    let _ = writeln!(p, "# C_RE at the domain center for both coefficient models");
    let _ = writeln!(p, "# units: time s, concentrations a.u.");
    p.push_str("time,cre_model,cre_kalamiza\n");
    for ((t, a), (_, b)) in data.probe_model.iter().zip(&data.probe_kalamiza) {
        let _ = writeln!(p, "{t},{a},{b}");
    }
    std::fs::write(dir.join("probe_cre.csv"), p)?;

    std::fs::write(
        dir.join("gap_summary.toml"),
        gap_summary_to_toml(&data.comparison, data.model_prefactor, data.kalamiza_prefactor),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Quantity;

    #[test]
    fn grid_format_declares_metadata_and_round_trips() {
        let f = ScalarField2D::from_fn(3, 2, 0.5, 1.0, Quantity::Concentration, |x, y| x + y);
        let text = grid_to_string(&f, Some(12.5));
        assert!(text.contains("# quantity: concentration"));
        assert!(text.contains("# units: a.u."));
        assert!(text.contains("# nx: 3"));
        assert!(text.contains("# time: 12.5 s"));
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 2);
        let parsed: Vec<f64> = rows[1].split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(parsed, vec![1.0, 1.5, 2.0]);
    }

    #[test]
    fn probe_csv_declares_points_and_units() {
        let mut series = ProbeSeries::new(vec![(0.5, 0.5)]);
        series.push(0.0, vec![(1.0, 2.0)]);
        series.push(1.0, vec![(3.0, 4.0)]);
        let text = probes_to_csv(&series);
        assert!(text.contains("# probe p0: x = 0.5 mm, y = 0.5 mm"));
        assert!(text.contains("time,p0_ce,p0_cre"));
        assert!(text.ends_with("1,3,4\n"));
    }
}
