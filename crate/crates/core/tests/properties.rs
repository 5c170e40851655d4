//! Cross-module invariants: pulse scheduling against manual stepping and
//! the chained closed form, ledger closure under both Robin variants,
//! and the shipped reference config.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use epsim_core::config::{
    parse_config_str, validate, BoundaryParams, GridSpec, PulseSchedule, RobinVariant,
    SimulationConfig,
};
use epsim_core::field::{solve_field, DEFAULT_FIELD_TOL, DEFAULT_MAX_PICARD};
use epsim_core::kinetics::{mtc, pore_fraction, MtcParams};
use epsim_core::oracle::{WellMixedParams, WellMixedSolution};
use epsim_core::transport::{
    ftcs_step, init_concentration, probe, run_pulses, ConcentrationState, StepCoefficients,
};

fn fast_config() -> SimulationConfig {
    let mut cfg = SimulationConfig::table1();
    cfg.pulses.pulse_count_pn = 3;
    cfg.pulses.off_time_tm = 10.0;
    cfg
}

/// The pulse engine must be exactly the documented schedule semantics:
/// one partial ON step with the clock pinned, then OFF steps with the
/// coefficient sampled at each step start. Replaying that by hand through
/// the public single-step operation must reproduce the fields bit for bit.
#[test]
fn pulse_engine_matches_manual_replay_bitwise() {
    let cfg = validate(&fast_config()).unwrap();
    let field = solve_field(&cfg, DEFAULT_FIELD_TOL, DEFAULT_MAX_PICARD).unwrap();
    let engine_out = run_pulses(&cfg, &field).unwrap();

    let mu0 = mtc(
        0.0,
        pore_fraction(field.e_mag.mean(), &cfg.electro),
        &MtcParams::from_config(&cfg),
    );
    let eps = cfg.tissue.porosity_eps;
    let grid = &cfg.grid;
    let tau = cfg.electro.resealing_tau;
    let mut state = init_concentration(&cfg);
    for _pulse in 0..cfg.pulses.pulse_count_pn {
        // ON: t_ep < dt, a single partial step at full coefficient.
        let coeffs =
            StepCoefficients::new(grid.dx, grid.dy, cfg.drug.diffusivity_d, eps, mu0, cfg.pulses.on_time_tep);
        state = ftcs_step(&state, mu0, &coeffs, &cfg.boundary, eps).unwrap().0;
        // OFF: full dt steps, coefficient decayed by the clock at the
        // step start.
        let steps = (cfg.pulses.off_time_tm / grid.dt).round() as usize;
        let mut clock = 0.0;
        for _ in 0..steps {
            let mu = mu0 * (-clock / tau).exp();
            let coeffs =
                StepCoefficients::new(grid.dx, grid.dy, cfg.drug.diffusivity_d, eps, mu, grid.dt);
            state = ftcs_step(&state, mu, &coeffs, &cfg.boundary, eps).unwrap().0;
            clock += grid.dt;
        }
    }

    for (a, b) in engine_out.final_state.c_e.values().iter().zip(state.c_e.values()) {
        assert_eq!(a.to_bits(), b.to_bits(), "extracellular fields diverged");
    }
    for (a, b) in engine_out.final_state.c_re.values().iter().zip(state.c_re.values()) {
        assert_eq!(a.to_bits(), b.to_bits(), "intracellular fields diverged");
    }
}

/// A spatially uniform closed system reduces to the exchange ODEs, so the
/// stepped schedule must land on the segment-chained closed form at first
/// order in dt.
#[test]
fn uniform_schedule_converges_to_chained_closed_form() {
    let grid = GridSpec { nx: 26, ny: 26, dx: 0.04, dy: 0.04, dt: 0.1 };
    let schedule = PulseSchedule { pulse_count_pn: 3, on_time_tep: 0.5, off_time_tm: 20.0 };
    let params = WellMixedParams {
        porosity_eps: 0.18,
        mu0: 3.1575848e-3,
        tau: 120.0,
        c_e0: 2.0,
        c_re0: 0.25,
    };
    let solution = WellMixedSolution::new(params);
    let boundary = BoundaryParams { beta: 0.0, robin: RobinVariant::OutwardLoss };
    let diffusivity = 1e-3;

    let run_with_dt = |dt: f64| -> f64 {
        let mut state = ConcentrationState::uniform(&grid, params.c_e0, params.c_re0);
        let mut worst = 0.0_f64;
        for _pulse in 0..schedule.pulse_count_pn {
            let on_steps = (schedule.on_time_tep / dt).round() as usize;
            for _ in 0..on_steps {
                let coeffs = StepCoefficients::new(grid.dx, grid.dy, diffusivity, params.porosity_eps, params.mu0, dt);
                state = ftcs_step(&state, params.mu0, &coeffs, &boundary, params.porosity_eps).unwrap().0;
            }
            let off_steps = (schedule.off_time_tm / dt).round() as usize;
            let mut clock = 0.0;
            for _ in 0..off_steps {
                let mu = params.mu0 * (-clock / params.tau).exp();
                let coeffs = StepCoefficients::new(grid.dx, grid.dy, diffusivity, params.porosity_eps, mu, dt);
                state = ftcs_step(&state, mu, &coeffs, &boundary, params.porosity_eps).unwrap().0;
                clock += dt;
            }
            let elapsed = state.time;
            let (ce_exact, cre_exact) = solution.eval_pulsed(&schedule, elapsed);
            let ce = state.c_e.at(13, 13);
            let cre = state.c_re.at(13, 13);
            worst = worst
                .max(((ce - ce_exact) / ce_exact).abs())
                .max(((cre - cre_exact) / cre_exact).abs());
        }
        worst
    };

    let coarse = run_with_dt(0.1);
    let fine = run_with_dt(0.05);
    assert!(coarse <= 1e-3, "coarse error {coarse}");
    let ratio = fine / coarse;
    assert!(
        (0.35..=0.65).contains(&ratio),
        "halving dt should halve the error: {coarse} -> {fine} (ratio {ratio})"
    );
}

/// Both Robin variants keep the ledger closed; the literal printed signs
/// retain more mass because the far faces gain.
#[test]
fn ledger_closes_under_both_robin_variants() {
    let mut outward_cfg = fast_config();
    outward_cfg.boundary.beta = 0.3;
    let mut literal_cfg = outward_cfg.clone();
    literal_cfg.boundary.robin = RobinVariant::LiteralPaper;

    let v_out = validate(&outward_cfg).unwrap();
    let v_lit = validate(&literal_cfg).unwrap();
    let field = solve_field(&v_out, DEFAULT_FIELD_TOL, DEFAULT_MAX_PICARD).unwrap();
    let out = run_pulses(&v_out, &field).unwrap();
    let lit = run_pulses(&v_lit, &field).unwrap();

    assert!(out.ledger.max_residual() <= 1e-8, "outward residual {}", out.ledger.max_residual());
    assert!(lit.ledger.max_residual() <= 1e-8, "literal residual {}", lit.ledger.max_residual());
    let loss_out = out.ledger.final_record().boundary_loss_cum;
    let loss_lit = lit.ledger.final_record().boundary_loss_cum;
    assert!(loss_out > 0.0);
    assert!(loss_lit < loss_out, "printed signs must lose less: {loss_lit} vs {loss_out}");
}

/// Bilinear probing stays inside the bounds of the four surrounding
/// nodes.
#[test]
fn probe_respects_cell_bounds() {
    let cfg = validate(&fast_config()).unwrap();
    let mut state = init_concentration(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for v in state.c_e.values_mut() {
        *v = rng.random_range(0.0..5.0);
    }
    for _ in 0..500 {
        let x: f64 = rng.random_range(0.0..1.0);
        let y: f64 = rng.random_range(0.0..1.0);
        let (ce, _) = probe(&state, (x, y)).unwrap();
        let i = ((x / cfg.grid.dx).floor() as usize).min(cfg.grid.nx - 2);
        let j = ((y / cfg.grid.dy).floor() as usize).min(cfg.grid.ny - 2);
        let corners = [
            state.c_e.at(i, j),
            state.c_e.at(i + 1, j),
            state.c_e.at(i, j + 1),
            state.c_e.at(i + 1, j + 1),
        ];
        let lo = corners.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(ce >= lo - 1e-12 && ce <= hi + 1e-12, "({x},{y}): {ce} not in [{lo},{hi}]");
    }
}

/// The checked-in reference config must resolve to the built-in defaults.
#[test]
fn shipped_reference_config_matches_builtin_defaults() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/table1.toml");
    let text = std::fs::read_to_string(path).unwrap();
    let loaded = parse_config_str(&text).unwrap();
    assert!(loaded.provenance.is_none());
    assert_eq!(loaded.config, SimulationConfig::table1());
}
