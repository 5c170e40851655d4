//! Simulation parameters, validation, and the unit-suffixed config format.
//!
//! Internal units are fixed: lengths mm, times s, potentials V,
//! conductivities S/m. Config files carry an explicit unit on every
//! dimensioned value and the loader converts (see [`crate::units`]).
//! [`validate`] turns a [`SimulationConfig`] into a [`ValidatedConfig`],
//! collecting every violated invariant rather than stopping at the first.

use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Violation};
use crate::units::{format_quantity, parse_quantity, Dimension};

/// Default resealing constant, seconds.
///
/// No measured value exists for the pore-resealing e-folding time in this
/// parameter set; resealing acts on a time scale of minutes, and 120 s
/// keeps the transfer coefficient decaying visibly over a 100-200 s rest
/// window. Every run manifest echoes the value actually used.
pub const DEFAULT_RESEALING_TAU: f64 = 120.0;

/// Default conservation tolerance for the mass ledger residual.
pub const DEFAULT_CONSERVATION_TOL: f64 = 1e-8;

/// Default probe recording stride, seconds of simulated time.
pub const DEFAULT_PROBE_STRIDE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TissueParams {
    /// Side length L of the square tissue, mm.
    pub length_l: f64,
    /// Minimum electrical conductivity, S/m.
    pub sigma_min: f64,
    /// Maximum electrical conductivity, S/m.
    pub sigma_max: f64,
    /// Reversible-electroporation threshold field, V/mm.
    pub e_rev: f64,
    /// Irreversible-electroporation threshold field, V/mm.
    pub e_irrev: f64,
    /// Conductivity sigmoid shape parameter (dimensionless).
    pub gamma1: f64,
    /// Conductivity sigmoid shape parameter (dimensionless).
    pub gamma2: f64,
    /// Extracellular volume fraction (dimensionless).
    pub porosity_eps: f64,
    /// Cell radius, mm.
    pub cell_radius_rc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrugParams {
    /// Effective extracellular diffusion coefficient, mm^2/s.
    pub diffusivity_d: f64,
    /// Membrane drug permeability, mm/s.
    pub permeability_p: f64,
    /// Injected dose (dimensionless count).
    pub dose_nd: f64,
    /// Width of the regularized point source as a fraction of L.
    pub delta_width_d: f64,
    /// Injection point (x, y) in mm; the source column sits at x = 0.
    pub injection_center: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectroParams {
    /// Potential on the y = 0 electrode, V.
    pub phi0: f64,
    /// Potential on the y = L electrode, V.
    pub phi_l: f64,
    /// Pore-fraction sigmoid midpoint, V/mm.
    pub ef_fit: f64,
    /// Pore-fraction sigmoid width, V/mm.
    pub bf_fit: f64,
    /// Pore resealing constant, s.
    pub resealing_tau: f64,
}

/// Pulse train: `pulse_count_pn` repetitions of ON (`on_time_tep`) followed
/// by OFF (`off_time_tm`). The resealing clock resets at each pulse start
/// and is held at zero while the pulse is on.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    pub pulse_count_pn: u32,
    /// Pulse length (ON time), s.
    pub on_time_tep: f64,
    /// Mass-transfer window (OFF time), s.
    pub off_time_tm: f64,
}

impl PulseSchedule {
    pub fn cycle_time(&self) -> f64 {
        self.on_time_tep + self.off_time_tm
    }

    /// Total simulated time, `PN * (t_ep + t_M)`.
    pub fn total_time(&self) -> f64 {
        self.pulse_count_pn as f64 * self.cycle_time()
    }

    /// End time of cycle `k` (0-based).
    pub fn cycle_end(&self, k: u32) -> f64 {
        (k + 1) as f64 * self.cycle_time()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Node count along x (M1).
    pub nx: usize,
    /// Node count along y (M2).
    pub ny: usize,
    /// Node spacing, mm.
    pub dx: f64,
    pub dy: f64,
    /// Time step, s.
    pub dt: f64,
}

/// Explicit FTCS stability bound: dt must stay strictly below
/// `(1/2) * dx^2 dy^2 / (D (dx^2 + dy^2))`.
pub fn stability_limit(grid: &GridSpec, diffusivity: f64) -> f64 {
    debug_assert!(grid.dx > 0.0 && grid.dy > 0.0 && diffusivity > 0.0);
    let dx2 = grid.dx * grid.dx;
    let dy2 = grid.dy * grid.dy;
    0.5 * (dx2 * dy2) / (diffusivity * (dx2 + dy2))
}

/// Which sign the drug-loss Robin condition takes on the far faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobinVariant {
    /// Outward-normal loss on all four faces: dC/dn = -beta*C.
    OutwardLoss,
    /// The boundary conditions exactly as printed in the source model,
    /// which gain mass on the x = L and y = L faces. Kept for comparison.
    LiteralPaper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryParams {
    /// Rate of mass loss at the tissue boundary, 1/mm.
    pub beta: f64,
    pub robin: RobinVariant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub tissue: TissueParams,
    pub drug: DrugParams,
    pub electro: ElectroParams,
    pub pulses: PulseSchedule,
    pub grid: GridSpec,
    pub boundary: BoundaryParams,
    /// Snapshot times in s; `None` means the end of every pulse cycle.
    pub snapshot_times: Option<Vec<f64>>,
    /// Probe points (x, y) in mm.
    pub probes: Vec<(f64, f64)>,
    /// Probe recording stride, s of simulated time.
    pub probe_stride: f64,
    /// Acceptable mass-ledger residual (relative, dimensionless).
    pub conservation_tol: f64,
}

impl SimulationConfig {
    /// The reference parameter set: 1 mm square tissue, 60 V across
    /// parallel plates, 10 pulses of 1 ms with 100 s rest, dose 100 at
    /// (0, 0.5L), beta = 0.1/mm.
    pub fn table1() -> Self {
        SimulationConfig {
            tissue: TissueParams {
                length_l: 1.0,
                sigma_min: 0.0,
                sigma_max: 0.241,
                e_rev: 46.0,
                e_irrev: 70.0,
                gamma1: 8.0,
                gamma2: 10.0,
                porosity_eps: 0.18,
                cell_radius_rc: 0.05,
            },
            drug: DrugParams {
                diffusivity_d: 1e-3,
                permeability_p: 5e-4,
                dose_nd: 100.0,
                delta_width_d: 0.1,
                injection_center: (0.0, 0.5),
            },
            electro: ElectroParams {
                phi0: 0.0,
                phi_l: 60.0,
                ef_fit: 65.8,
                bf_fit: 7.5,
                resealing_tau: DEFAULT_RESEALING_TAU,
            },
            pulses: PulseSchedule {
                pulse_count_pn: 10,
                on_time_tep: 1e-3,
                off_time_tm: 100.0,
            },
            grid: GridSpec {
                nx: 101,
                ny: 101,
                dx: 0.01,
                dy: 0.01,
                dt: 0.02,
            },
            boundary: BoundaryParams {
                beta: 0.1,
                robin: RobinVariant::OutwardLoss,
            },
            snapshot_times: None,
            probes: vec![(0.5, 0.5)],
            probe_stride: DEFAULT_PROBE_STRIDE,
            conservation_tol: DEFAULT_CONSERVATION_TOL,
        }
    }
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self::table1()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ValidateOptions {
    /// Accept a dt above the stability limit; the resulting config is
    /// tagged unstable and every run output carries the tag.
    pub allow_unstable: bool,
}

/// A [`SimulationConfig`] whose invariants have all been checked.
///
/// Immutable after construction; safe to share across concurrent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    config: SimulationConfig,
    stability_limit: f64,
    unstable: bool,
}

impl ValidatedConfig {
    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn stability_limit(&self) -> f64 {
        self.stability_limit
    }

    /// True when dt exceeds the stability bound (only possible via
    /// [`ValidateOptions::allow_unstable`]).
    pub fn is_unstable(&self) -> bool {
        self.unstable
    }
}

impl Deref for ValidatedConfig {
    type Target = SimulationConfig;

    fn deref(&self) -> &SimulationConfig {
        &self.config
    }
}

pub fn validate(config: &SimulationConfig) -> Result<ValidatedConfig, ConfigError> {
    validate_with(config, ValidateOptions::default())
}

// Checks are written as negated comparisons so NaN parameters fail them.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn validate_with(
    config: &SimulationConfig,
    opts: ValidateOptions,
) -> Result<ValidatedConfig, ConfigError> {
    let mut v: Vec<Violation> = Vec::new();
    let mut fail = |field: &str, reason: String| {
        v.push(Violation {
            field: field.to_string(),
            reason,
        });
    };

    let t = &config.tissue;
    if !(t.length_l > 0.0) {
        fail("tissue.length", format!("tissue length must be positive, got {}", t.length_l));
    }
    if !(t.sigma_min >= 0.0) {
        fail("tissue.sigma_min", "minimum conductivity must be >= 0".into());
    }
    if !(t.sigma_max > t.sigma_min) {
        fail(
            "tissue.sigma_max",
            format!("sigma_max ({}) must exceed sigma_min ({})", t.sigma_max, t.sigma_min),
        );
    }
    if !(t.e_rev > 0.0) {
        fail("tissue.e_rev", "reversible threshold must be positive".into());
    }
    if !(t.e_irrev > t.e_rev) {
        fail(
            "tissue.e_irrev",
            format!("e_irrev ({}) must exceed e_rev ({})", t.e_irrev, t.e_rev),
        );
    }
    if !(t.porosity_eps > 0.0 && t.porosity_eps < 1.0) {
        fail("tissue.porosity", "porosity must be in (0,1)".into());
    }
    if !(t.cell_radius_rc > 0.0) {
        fail("tissue.cell_radius", "cell radius must be positive".into());
    }
    if !(t.gamma2 > 0.0) {
        fail("tissue.gamma2", "gamma2 must be positive".into());
    }

    let d = &config.drug;
    if !(d.diffusivity_d > 0.0) {
        fail("drug.diffusivity", "diffusivity must be positive".into());
    }
    if !(d.permeability_p >= 0.0) {
        fail("drug.permeability", "permeability must be >= 0".into());
    }
    if !(d.dose_nd >= 0.0) {
        fail("drug.dose", "dose must be >= 0".into());
    }
    if !(d.delta_width_d > 0.0 && d.delta_width_d < 1.0) {
        fail("drug.delta_width", "delta width must be in (0,1)".into());
    }
    if !inside_domain(d.injection_center, t.length_l) {
        fail(
            "drug.injection_center",
            format!(
                "injection center ({}, {}) must lie inside [0,{}]^2",
                d.injection_center.0, d.injection_center.1, t.length_l
            ),
        );
    }

    let e = &config.electro;
    if !(e.bf_fit > 0.0) {
        fail("electro.b_f", "pore sigmoid width must be positive".into());
    }
    if !(e.resealing_tau > 0.0) {
        fail("electro.resealing_tau", "resealing constant must be positive".into());
    }

    let p = &config.pulses;
    if p.pulse_count_pn < 1 {
        fail("pulses.count", "pulse count must be >= 1".into());
    }
    if !(p.on_time_tep > 0.0) {
        fail("pulses.on_time", "ON time must be positive".into());
    }
    if !(p.off_time_tm > 0.0) {
        fail("pulses.off_time", "OFF time must be positive".into());
    }

    let g = &config.grid;
    if g.nx < 3 || g.ny < 3 {
        fail("grid.nx", "grid needs at least 3 nodes per axis".into());
    }
    if !(g.dx > 0.0 && g.dy > 0.0) {
        fail("grid.dx", "node spacings must be positive".into());
    }
    if !(g.dt > 0.0) {
        fail("grid.dt", "time step must be positive".into());
    }
    let span_tol = 1e-12 * t.length_l.max(f64::MIN_POSITIVE);
    if g.nx >= 2 && g.dx > 0.0 && ((g.nx - 1) as f64 * g.dx - t.length_l).abs() > span_tol {
        fail(
            "grid.dx",
            format!("(nx-1)*dx = {} does not span the tissue length {}", (g.nx - 1) as f64 * g.dx, t.length_l),
        );
    }
    if g.ny >= 2 && g.dy > 0.0 && ((g.ny - 1) as f64 * g.dy - t.length_l).abs() > span_tol {
        fail(
            "grid.dy",
            format!("(ny-1)*dy = {} does not span the tissue length {}", (g.ny - 1) as f64 * g.dy, t.length_l),
        );
    }

    let mut limit = f64::NAN;
    let mut unstable = false;
    if g.dx > 0.0 && g.dy > 0.0 && d.diffusivity_d > 0.0 {
        limit = stability_limit(g, d.diffusivity_d);
        if g.dt >= limit {
            if opts.allow_unstable {
                unstable = true;
            } else {
                fail(
                    "grid.dt",
                    format!("dt violates stability bound: dt = {} s, limit = {} s", g.dt, limit),
                );
            }
        }
    }

    let b = &config.boundary;
    if !(b.beta >= 0.0) {
        fail("boundary.beta", "boundary loss rate must be >= 0".into());
    }

    for (k, &pt) in config.probes.iter().enumerate() {
        if !inside_domain(pt, t.length_l) {
            fail(
                &format!("probes[{k}]"),
                format!("probe ({}, {}) must lie inside [0,{}]^2", pt.0, pt.1, t.length_l),
            );
        }
    }
    if let Some(times) = &config.snapshot_times {
        for (k, &st) in times.iter().enumerate() {
            if !(st >= 0.0) {
                fail(&format!("snapshot_times[{k}]"), "snapshot time must be >= 0".into());
            }
        }
    }
    if !(config.probe_stride > 0.0) {
        fail("output.probe_stride", "probe stride must be positive".into());
    }
    if !(config.conservation_tol > 0.0) {
        fail("output.conservation_tol", "conservation tolerance must be positive".into());
    }

    if v.is_empty() {
        Ok(ValidatedConfig {
            config: config.clone(),
            stability_limit: limit,
            unstable,
        })
    } else {
        Err(ConfigError::Invalid(v))
    }
}

fn inside_domain(p: (f64, f64), l: f64) -> bool {
    p.0 >= 0.0 && p.0 <= l && p.1 >= 0.0 && p.1 <= l
}

// ---------------------------------------------------------------------
// Config file format
// ---------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTissue {
    length: String,
    sigma_min: String,
    sigma_max: String,
    e_rev: String,
    e_irrev: String,
    gamma1: f64,
    gamma2: f64,
    porosity: f64,
    cell_radius: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrug {
    diffusivity: String,
    permeability: String,
    dose: f64,
    delta_width: f64,
    injection_center: [String; 2],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElectro {
    phi0: String,
    phi_l: String,
    e_f: String,
    b_f: String,
    #[serde(default)]
    resealing_tau: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPulses {
    count: u32,
    on_time: String,
    off_time: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nx: usize,
    ny: usize,
    dx: String,
    dy: String,
    dt: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    beta: String,
    #[serde(default)]
    robin: Option<RobinVariant>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    snapshot_times: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    probes: Option<Vec<[String; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    probe_stride: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    conservation_tol: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    tissue: RawTissue,
    drug: RawDrug,
    electro: RawElectro,
    pulses: RawPulses,
    grid: RawGrid,
    boundary: RawBoundary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<RawOutput>,
}

/// Provenance block of a run manifest. Manifests embed the resolved
/// config under `[config.*]`, so a manifest is itself a loadable config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvenanceEcho {
    pub tool: String,
    pub version: String,
    /// Reserved reproducibility seed; the kernel itself is deterministic.
    pub seed: u64,
    pub allow_unstable: bool,
    pub unstable: bool,
    pub stability_limit_s: f64,
    pub total_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_field_v_per_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pore_fraction: Option<f64>,
    pub mtc_at_pulse_per_s: f64,
    pub max_conservation_residual: f64,
    pub conservation_tol: f64,
    pub clamped_negatives: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifestDoc {
    provenance: ProvenanceEcho,
    config: RawConfig,
}

/// A config parsed from disk, possibly carrying manifest provenance.
#[derive(Debug)]
pub struct LoadedConfig {
    pub config: SimulationConfig,
    pub provenance: Option<ProvenanceEcho>,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// Parses either a bare config document or a run manifest.
pub fn parse_config_str(text: &str) -> Result<LoadedConfig, ConfigError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    if table.contains_key("config") {
        let doc: RawManifestDoc =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(LoadedConfig {
            config: resolve(&doc.config)?,
            provenance: Some(doc.provenance),
        })
    } else {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(LoadedConfig {
            config: resolve(&raw)?,
            provenance: None,
        })
    }
}

fn resolve(raw: &RawConfig) -> Result<SimulationConfig, ConfigError> {
    let q = parse_quantity;
    let tissue = TissueParams {
        length_l: q(&raw.tissue.length, Dimension::Length, "tissue.length")?,
        sigma_min: q(&raw.tissue.sigma_min, Dimension::Conductivity, "tissue.sigma_min")?,
        sigma_max: q(&raw.tissue.sigma_max, Dimension::Conductivity, "tissue.sigma_max")?,
        e_rev: q(&raw.tissue.e_rev, Dimension::FieldStrength, "tissue.e_rev")?,
        e_irrev: q(&raw.tissue.e_irrev, Dimension::FieldStrength, "tissue.e_irrev")?,
        gamma1: raw.tissue.gamma1,
        gamma2: raw.tissue.gamma2,
        porosity_eps: raw.tissue.porosity,
        cell_radius_rc: q(&raw.tissue.cell_radius, Dimension::Length, "tissue.cell_radius")?,
    };
    let drug = DrugParams {
        diffusivity_d: q(&raw.drug.diffusivity, Dimension::Diffusivity, "drug.diffusivity")?,
        permeability_p: q(&raw.drug.permeability, Dimension::Velocity, "drug.permeability")?,
        dose_nd: raw.drug.dose,
        delta_width_d: raw.drug.delta_width,
        injection_center: (
            q(&raw.drug.injection_center[0], Dimension::Length, "drug.injection_center[0]")?,
            q(&raw.drug.injection_center[1], Dimension::Length, "drug.injection_center[1]")?,
        ),
    };
    let electro = ElectroParams {
        phi0: q(&raw.electro.phi0, Dimension::Voltage, "electro.phi0")?,
        phi_l: q(&raw.electro.phi_l, Dimension::Voltage, "electro.phi_l")?,
        ef_fit: q(&raw.electro.e_f, Dimension::FieldStrength, "electro.e_f")?,
        bf_fit: q(&raw.electro.b_f, Dimension::FieldStrength, "electro.b_f")?,
        resealing_tau: match &raw.electro.resealing_tau {
            Some(s) => q(s, Dimension::Time, "electro.resealing_tau")?,
            None => DEFAULT_RESEALING_TAU,
        },
    };
    let pulses = PulseSchedule {
        pulse_count_pn: raw.pulses.count,
        on_time_tep: q(&raw.pulses.on_time, Dimension::Time, "pulses.on_time")?,
        off_time_tm: q(&raw.pulses.off_time, Dimension::Time, "pulses.off_time")?,
    };
    let grid = GridSpec {
        nx: raw.grid.nx,
        ny: raw.grid.ny,
        dx: q(&raw.grid.dx, Dimension::Length, "grid.dx")?,
        dy: q(&raw.grid.dy, Dimension::Length, "grid.dy")?,
        dt: q(&raw.grid.dt, Dimension::Time, "grid.dt")?,
    };
    let boundary = BoundaryParams {
        beta: q(&raw.boundary.beta, Dimension::InverseLength, "boundary.beta")?,
        robin: raw.boundary.robin.unwrap_or(RobinVariant::OutwardLoss),
    };
    let out = raw.output.as_ref();
    let snapshot_times = match out.and_then(|o| o.snapshot_times.as_ref()) {
        Some(times) => Some(
            times
                .iter()
                .enumerate()
                .map(|(k, s)| q(s, Dimension::Time, &format!("output.snapshot_times[{k}]")))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    let probes = match out.and_then(|o| o.probes.as_ref()) {
        Some(pts) => pts
            .iter()
            .enumerate()
            .map(|(k, p)| {
                Ok((
                    q(&p[0], Dimension::Length, &format!("output.probes[{k}][0]"))?,
                    q(&p[1], Dimension::Length, &format!("output.probes[{k}][1]"))?,
                ))
            })
            .collect::<Result<Vec<_>, ConfigError>>()?,
        None => vec![(0.5 * tissue.length_l, 0.5 * tissue.length_l)],
    };
    let probe_stride = match out.and_then(|o| o.probe_stride.as_ref()) {
        Some(s) => q(s, Dimension::Time, "output.probe_stride")?,
        None => DEFAULT_PROBE_STRIDE,
    };
    let conservation_tol = out
        .and_then(|o| o.conservation_tol)
        .unwrap_or(DEFAULT_CONSERVATION_TOL);

    Ok(SimulationConfig {
        tissue,
        drug,
        electro,
        pulses,
        grid,
        boundary,
        snapshot_times,
        probes,
        probe_stride,
        conservation_tol,
    })
}

fn to_raw(config: &SimulationConfig) -> RawConfig {
    let f = format_quantity;
    RawConfig {
        tissue: RawTissue {
            length: f(config.tissue.length_l, Dimension::Length),
            sigma_min: f(config.tissue.sigma_min, Dimension::Conductivity),
            sigma_max: f(config.tissue.sigma_max, Dimension::Conductivity),
            e_rev: f(config.tissue.e_rev, Dimension::FieldStrength),
            e_irrev: f(config.tissue.e_irrev, Dimension::FieldStrength),
            gamma1: config.tissue.gamma1,
            gamma2: config.tissue.gamma2,
            porosity: config.tissue.porosity_eps,
            cell_radius: f(config.tissue.cell_radius_rc, Dimension::Length),
        },
        drug: RawDrug {
            diffusivity: f(config.drug.diffusivity_d, Dimension::Diffusivity),
            permeability: f(config.drug.permeability_p, Dimension::Velocity),
            dose: config.drug.dose_nd,
            delta_width: config.drug.delta_width_d,
            injection_center: [
                f(config.drug.injection_center.0, Dimension::Length),
                f(config.drug.injection_center.1, Dimension::Length),
            ],
        },
        electro: RawElectro {
            phi0: f(config.electro.phi0, Dimension::Voltage),
            phi_l: f(config.electro.phi_l, Dimension::Voltage),
            e_f: f(config.electro.ef_fit, Dimension::FieldStrength),
            b_f: f(config.electro.bf_fit, Dimension::FieldStrength),
            resealing_tau: Some(f(config.electro.resealing_tau, Dimension::Time)),
        },
        pulses: RawPulses {
            count: config.pulses.pulse_count_pn,
            on_time: f(config.pulses.on_time_tep, Dimension::Time),
            off_time: f(config.pulses.off_time_tm, Dimension::Time),
        },
        grid: RawGrid {
            nx: config.grid.nx,
            ny: config.grid.ny,
            dx: f(config.grid.dx, Dimension::Length),
            dy: f(config.grid.dy, Dimension::Length),
            dt: f(config.grid.dt, Dimension::Time),
        },
        boundary: RawBoundary {
            beta: f(config.boundary.beta, Dimension::InverseLength),
            robin: Some(config.boundary.robin),
        },
        output: Some(RawOutput {
            snapshot_times: config
                .snapshot_times
                .as_ref()
                .map(|ts| ts.iter().map(|&t| f(t, Dimension::Time)).collect()),
            probes: Some(
                config
                    .probes
                    .iter()
                    .map(|&(x, y)| [f(x, Dimension::Length), f(y, Dimension::Length)])
                    .collect(),
            ),
            probe_stride: Some(f(config.probe_stride, Dimension::Time)),
            conservation_tol: Some(config.conservation_tol),
        }),
    }
}

/// Serializes a config as a standalone unit-suffixed TOML document.
pub fn config_to_toml(config: &SimulationConfig) -> String {
    toml::to_string_pretty(&to_raw(config)).expect("config serialization cannot fail")
}

/// Serializes a run manifest: provenance plus the resolved config.
pub fn manifest_to_toml(provenance: &ProvenanceEcho, config: &SimulationConfig) -> String {
    let doc = RawManifestDoc {
        provenance: provenance.clone(),
        config: to_raw(config),
    };
    toml::to_string_pretty(&doc).expect("manifest serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stability_limit_reference_values() {
        let g = GridSpec { nx: 101, ny: 101, dx: 0.01, dy: 0.01, dt: 0.02 };
        assert!((stability_limit(&g, 1e-3) - 0.025).abs() < 1e-15 * 0.025);
        let g2 = GridSpec { nx: 51, ny: 101, dx: 0.02, dy: 0.01, dt: 0.02 };
        assert!((stability_limit(&g2, 1e-3) - 0.04).abs() < 1e-15 * 0.04);
    }

    #[test]
    fn stability_limit_square_grid_reduces() {
        // dx = dy collapses the bound to dx^2 / (4 D).
        let g = GridSpec { nx: 11, ny: 11, dx: 0.3, dy: 0.3, dt: 1.0 };
        let d = 2.5e-2;
        let expect = 0.3 * 0.3 / (4.0 * d);
        assert!((stability_limit(&g, d) - expect).abs() < 1e-15 * expect);
    }

    #[test]
    fn table1_with_default_dt_is_valid() {
        let cfg = SimulationConfig::table1();
        let v = validate(&cfg).unwrap();
        assert!((v.stability_limit() - 0.025).abs() < 1e-15 * 0.025);
        assert!(!v.is_unstable());
    }

    #[test]
    fn dt_above_limit_is_rejected() {
        let mut cfg = SimulationConfig::table1();
        cfg.grid.dt = 0.2;
        let err = validate(&cfg).unwrap_err();
        match err {
            ConfigError::Invalid(violations) => {
                assert!(violations.iter().any(|v| v.field == "grid.dt"
                    && v.reason.contains("stability bound")));
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn dt_exactly_at_limit_is_rejected() {
        let mut cfg = SimulationConfig::table1();
        cfg.grid.dt = 0.025;
        assert!(validate(&cfg).is_err());
    }

    #[test]
    fn allow_unstable_tags_the_config() {
        let mut cfg = SimulationConfig::table1();
        cfg.grid.dt = 0.2;
        let v = validate_with(&cfg, ValidateOptions { allow_unstable: true }).unwrap();
        assert!(v.is_unstable());
    }

    #[test]
    fn zero_porosity_is_rejected() {
        let mut cfg = SimulationConfig::table1();
        cfg.tissue.porosity_eps = 0.0;
        let err = validate(&cfg).unwrap_err();
        match err {
            ConfigError::Invalid(violations) => {
                assert!(violations
                    .iter()
                    .any(|v| v.reason.contains("porosity must be in (0,1)")));
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn validation_is_idempotent() {
        let cfg = SimulationConfig::table1();
        let v1 = validate(&cfg).unwrap();
        let v2 = validate(v1.config()).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn grid_span_mismatch_is_rejected() {
        let mut cfg = SimulationConfig::table1();
        cfg.grid.dx = 0.011;
        assert!(validate(&cfg).is_err());
    }

    #[test]
    fn probe_outside_domain_is_rejected() {
        let mut cfg = SimulationConfig::table1();
        cfg.probes.push((1.5, 0.5));
        assert!(validate(&cfg).is_err());
    }

    #[test]
    fn violations_accumulate() {
        let mut cfg = SimulationConfig::table1();
        cfg.tissue.porosity_eps = 2.0;
        cfg.drug.diffusivity_d = -1.0;
        cfg.boundary.beta = -0.1;
        match validate(&cfg).unwrap_err() {
            ConfigError::Invalid(violations) => assert!(violations.len() >= 3),
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn toml_round_trip_is_bit_exact() {
        let cfg = SimulationConfig::table1();
        let text = config_to_toml(&cfg);
        let back = parse_config_str(&text).unwrap().config;
        assert_eq!(cfg, back);
        // And a second serialization is byte-identical.
        assert_eq!(text, config_to_toml(&back));
    }

    #[test]
    fn loader_rejects_unknown_keys() {
        let mut text = config_to_toml(&SimulationConfig::table1());
        text.push_str("\n[extras]\nfoo = 1\n");
        assert!(parse_config_str(&text).is_err());
        let text2 = config_to_toml(&SimulationConfig::table1()).replace("[tissue]", "[tissue]\nbogus = 3");
        assert!(parse_config_str(&text2).is_err());
    }

    #[test]
    fn loader_converts_units() {
        let text = config_to_toml(&SimulationConfig::table1())
            .replace("cell_radius = \"0.05 mm\"", "cell_radius = \"50 um\"")
            .replace("on_time = \"0.001 s\"", "on_time = \"1 ms\"");
        let cfg = parse_config_str(&text).unwrap().config;
        assert_eq!(cfg.tissue.cell_radius_rc, 0.05);
        assert_eq!(cfg.pulses.on_time_tep, 1e-3);
    }

    #[test]
    fn missing_tau_falls_back_to_documented_default() {
        let mut text = String::new();
        for line in config_to_toml(&SimulationConfig::table1()).lines() {
            if !line.starts_with("resealing_tau") {
                text.push_str(line);
                text.push('\n');
            }
        }
        let cfg = parse_config_str(&text).unwrap().config;
        assert_eq!(cfg.electro.resealing_tau, DEFAULT_RESEALING_TAU);
    }

    #[test]
    fn manifest_documents_are_loadable_configs() {
        let cfg = SimulationConfig::table1();
        let prov = ProvenanceEcho {
            tool: "epsim".into(),
            version: "0.0.0".into(),
            seed: 0,
            allow_unstable: false,
            unstable: false,
            stability_limit_s: 0.025,
            total_time_s: 1000.01,
            mean_field_v_per_mm: Some(60.0),
            pore_fraction: Some(0.3157),
            mtc_at_pulse_per_s: 3.15e-3,
            max_conservation_residual: 1e-13,
            conservation_tol: 1e-8,
            clamped_negatives: 0,
        };
        let text = manifest_to_toml(&prov, &cfg);
        let loaded = parse_config_str(&text).unwrap();
        assert_eq!(loaded.config, cfg);
        assert_eq!(loaded.provenance.unwrap().seed, 0);
    }

    proptest! {
        #[test]
        fn stability_limit_is_symmetric_and_scales(
            dx in 1e-4f64..1.0,
            dy in 1e-4f64..1.0,
            d in 1e-6f64..1.0,
        ) {
            let g1 = GridSpec { nx: 3, ny: 3, dx, dy, dt: 1.0 };
            let g2 = GridSpec { nx: 3, ny: 3, dx: dy, dy: dx, dt: 1.0 };
            prop_assert_eq!(stability_limit(&g1, d), stability_limit(&g2, d));
            let scaled = stability_limit(&g1, 2.0 * d);
            prop_assert!((scaled * 2.0 * d - stability_limit(&g1, d) * d).abs()
                <= 1e-12 * (stability_limit(&g1, d) * d).abs());
        }

        #[test]
        fn quantities_round_trip_through_config_text(
            dose in 0.0f64..1e4,
            dt_frac in 0.01f64..0.99,
            beta in 0.0f64..10.0,
            tau in 1e-3f64..1e4,
        ) {
            let mut cfg = SimulationConfig::table1();
            cfg.drug.dose_nd = dose;
            cfg.grid.dt = dt_frac * 0.025;
            cfg.boundary.beta = beta;
            cfg.electro.resealing_tau = tau;
            let back = parse_config_str(&config_to_toml(&cfg)).unwrap().config;
            prop_assert_eq!(cfg.drug.dose_nd.to_bits(), back.drug.dose_nd.to_bits());
            prop_assert_eq!(cfg.grid.dt.to_bits(), back.grid.dt.to_bits());
            prop_assert_eq!(cfg.boundary.beta.to_bits(), back.boundary.beta.to_bits());
            prop_assert_eq!(cfg.electro.resealing_tau.to_bits(), back.electro.resealing_tau.to_bits());
        }
    }
}
