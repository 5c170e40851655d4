//! Membrane kinetics: field-dependent conductivity, pore fraction, and
//! the mass-transfer coefficient with pore resealing.
//!
//! All operations here are pure scalar functions; applying them across a
//! grid is the caller's loop. The resealing clock is owned by the pulse
//! scheduler and passed in.

use crate::config::{ElectroParams, SimulationConfig, TissueParams};

/// Tissue conductivity as a sigmoid of the local field magnitude:
/// `(sigma_max - sigma_min) / (1 + gamma1 * exp(-(E - a)/b)) + sigma_min`
/// with `a = (E_rev + E_irrev)/2` and `b = (E_irrev - E_rev)/gamma2`.
pub fn conductivity(e_mag: f64, tissue: &TissueParams) -> f64 {
    let a = 0.5 * (tissue.e_rev + tissue.e_irrev);
    let b = (tissue.e_irrev - tissue.e_rev) / tissue.gamma2;
    (tissue.sigma_max - tissue.sigma_min) / (1.0 + tissue.gamma1 * ((a - e_mag) / b).exp())
        + tissue.sigma_min
}

/// Pore fraction of reversibly electroporated cells:
/// `[1 + exp((E_f - E)/b_f)]^-1`, monotone increasing in E.
pub fn pore_fraction(e_mag: f64, electro: &ElectroParams) -> f64 {
    1.0 / (1.0 + ((electro.ef_fit - e_mag) / electro.bf_fit).exp())
}

/// Scalar inputs of the mass-transfer coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtcParams {
    pub permeability_p: f64,
    pub cell_radius_rc: f64,
    pub resealing_tau: f64,
}

impl MtcParams {
    pub fn from_config(config: &SimulationConfig) -> Self {
        MtcParams {
            permeability_p: config.drug.permeability_p,
            cell_radius_rc: config.tissue.cell_radius_rc,
            resealing_tau: config.electro.resealing_tau,
        }
    }
}

/// Mass-transfer coefficient `(P * f_p / r_c) * exp(-clock/tau)`, 1/s.
///
/// `clock` is the time since the last pulse started; it is pinned at zero
/// while a pulse is on, so decay only accrues during the rest window.
pub fn mtc(clock: f64, pore_fraction: f64, p: &MtcParams) -> f64 {
    debug_assert!(clock >= 0.0);
    p.permeability_p * pore_fraction / p.cell_radius_rc * (-clock / p.resealing_tau).exp()
}

/// Inputs of the dual-porosity comparison coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalamizaParams {
    pub fp_k: f64,
    /// Membrane thickness, mm.
    pub membrane_thickness_dm: f64,
    pub diffusivity_d: f64,
    pub cell_radius_rc: f64,
    pub resealing_tau: f64,
}

impl KalamizaParams {
    /// The published comparison settings: f_p = 2.7e-7, d_m = 5e-6 mm,
    /// with diffusivity, cell radius, and tau taken from the config.
    pub fn comparison_defaults(config: &SimulationConfig) -> Self {
        KalamizaParams {
            fp_k: 2.7e-7,
            membrane_thickness_dm: 5e-6,
            diffusivity_d: config.drug.diffusivity_d,
            cell_radius_rc: config.tissue.cell_radius_rc,
            resealing_tau: config.electro.resealing_tau,
        }
    }

    /// Prefactor `3 D f_p / (d_m r_c)`, 1/s.
    pub fn prefactor(&self) -> f64 {
        3.0 * self.diffusivity_d * self.fp_k / (self.membrane_thickness_dm * self.cell_radius_rc)
    }
}

/// Dual-porosity mass-transfer coefficient with the resealing factor
/// appended: `(3 D f_p / (d_m r_c)) * exp(-clock/tau)`.
pub fn mtc_kalamiza(clock: f64, p: &KalamizaParams) -> f64 {
    debug_assert!(clock >= 0.0);
    p.prefactor() * (-clock / p.resealing_tau).exp()
}

/// Spatially uniform membrane state of a run: the pore fraction set by the
/// applied field, the transfer coefficient at pulse time, and the
/// scheduler-owned resealing clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembraneState {
    pub pore_fraction_fp: f64,
    /// Transfer coefficient at clock zero, 1/s.
    pub mu0: f64,
    pub resealing_tau: f64,
    /// Seconds since the last pulse started.
    pub clock: f64,
}

impl MembraneState {
    pub fn new(pore_fraction_fp: f64, mu0: f64, resealing_tau: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&pore_fraction_fp));
        debug_assert!(mu0 >= 0.0);
        MembraneState { pore_fraction_fp, mu0, resealing_tau, clock: 0.0 }
    }

    /// Current transfer coefficient, `mu0 * exp(-clock/tau)`.
    pub fn mu(&self) -> f64 {
        self.mu0 * (-self.clock / self.resealing_tau).exp()
    }

    /// A pulse starts: pores reopen, the clock resets.
    pub fn reset_clock(&mut self) {
        self.clock = 0.0;
    }

    pub fn advance_clock(&mut self, dt: f64) {
        debug_assert!(dt >= 0.0);
        self.clock += dt;
    }
}
