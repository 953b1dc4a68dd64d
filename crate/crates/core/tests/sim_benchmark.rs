//! Closed-loop runs on the two-mode benchmark: stage timing, mismatch
//! propagation against an RK4 oracle, determinism, and the randomized
//! admissible-signal sweep with per-sample dominance and per-boundary
//! Lyapunov checks.

mod common;

use common::{benchmark_options, benchmark_quantizer, benchmark_signal, benchmark_system, rk4};
use dwellcert::certify::certify;
use dwellcert::model::{self, AdtParams, ModeId, SwitchingSignal};
use dwellcert::numerics::vec_norm_inf;
use dwellcert::sim::{self, SimConfig};
use nalgebra::DVector;

#[test]
fn benchmark_run_reproduces_stage_timing() {
    let sys = benchmark_system();
    let cert = certify(&sys, &benchmark_options(256)).unwrap();
    let qcfg = benchmark_quantizer();
    let simcfg = SimConfig {
        x0: DVector::from_vec(vec![-3.0, 3.0]),
        signal: benchmark_signal(),
        t_end: 20.0,
        substep: None,
        record_intersample: false,
    };
    let log = sim::run(&sys, &simcfg, &qcfg, &cert).unwrap();
    assert_eq!(log.summary.zoom_out_end, Some(1.0));
    assert_eq!(log.summary.first_nonzero_u, Some(2.0));
    assert!(log.summary.e_dominance_ok);
    assert!(log.summary.cycle_contraction_ok);
    // Strong contraction by the horizon.
    let x0_norm = 18f64.sqrt();
    assert!(
        log.summary.final_state_norm < 0.1 * x0_norm,
        "final norm {}",
        log.summary.final_state_norm
    );
}

#[test]
fn switch_free_run_decays_geometrically() {
    let sys = benchmark_system();
    let cert = certify(&sys, &benchmark_options(256)).unwrap();
    let qcfg = benchmark_quantizer();
    let signal = SwitchingSignal::new(ModeId(1), vec![], 40.0).unwrap();
    let simcfg = SimConfig {
        x0: DVector::from_vec(vec![2.0, -1.5]),
        signal,
        t_end: 40.0,
        substep: None,
        record_intersample: false,
    };
    let log = sim::run(&sys, &simcfg, &qcfg, &cert).unwrap();
    assert!(log.summary.e_dominance_ok && log.summary.cycle_contraction_ok);
    assert!(
        log.summary.final_state_norm < 1e-3,
        "final norm {}",
        log.summary.final_state_norm
    );
    // Iterated cycle contraction: V at the j-th boundary under nu^jV0.
    let nu1 = cert.mode_cert(ModeId(1)).unwrap().nu_p;
    let boundaries: Vec<&sim::SampleRecord> = log
        .records
        .iter()
        .filter(|r| r.is_sample && r.boundary.is_some())
        .collect();
    let v0 = boundaries[0].v.unwrap();
    for (j, rec) in boundaries.iter().enumerate().skip(1) {
        let bound = nu1.powi(j as i32) * v0 * (1.0 + 1e-9);
        assert!(
            rec.v.unwrap() <= bound,
            "cycle {j}: V = {} > {bound}",
            rec.v.unwrap()
        );
    }
}

#[test]
fn mismatch_propagation_matches_rk4() {
    // Plant in mode 2, controller still in mode 1, over one sampling
    // interval: the exact augmented exponential against fixed-step RK4.
    let sys = benchmark_system();
    let x = DVector::from_vec(vec![1.3, -0.4]);
    let xi = DVector::from_vec(vec![0.9, 0.2]);
    let (x_exact, xi_exact) =
        sim::propagate(&sys, &x, &xi, ModeId(2), Some(ModeId(1)), 0.5).unwrap();

    let a2 = sys.mode(ModeId(2)).unwrap().a.clone();
    let b2 = sys.mode(ModeId(2)).unwrap().b.clone();
    let k1 = sys.mode(ModeId(1)).unwrap().k.clone();
    let acl1 = sys.mode(ModeId(1)).unwrap().a_cl();
    let mut z0 = DVector::zeros(4);
    z0.rows_mut(0, 2).copy_from(&x);
    z0.rows_mut(2, 2).copy_from(&xi);
    let field = |_t: f64, z: &DVector<f64>| {
        let xs = z.rows(0, 2).into_owned();
        let xis = z.rows(2, 2).into_owned();
        let dx = &a2 * &xs + &b2 * &k1 * &xis;
        let dxi = &acl1 * &xis;
        let mut dz = DVector::zeros(4);
        dz.rows_mut(0, 2).copy_from(&dx);
        dz.rows_mut(2, 2).copy_from(&dxi);
        dz
    };
    let z_rk4 = rk4(&field, z0, 0.0, 0.5, 5000);
    assert!(vec_norm_inf(&(&x_exact - z_rk4.rows(0, 2).into_owned())) < 1e-6);
    assert!(vec_norm_inf(&(&xi_exact - z_rk4.rows(2, 2).into_owned())) < 1e-6);
}

#[test]
fn runs_are_deterministic() {
    let sys = benchmark_system();
    let cert = certify(&sys, &benchmark_options(128)).unwrap();
    let qcfg = benchmark_quantizer();
    let simcfg = SimConfig {
        x0: DVector::from_vec(vec![-3.0, 3.0]),
        signal: benchmark_signal(),
        t_end: 20.0,
        substep: Some(0.1),
        record_intersample: true,
    };
    let a = sim::run(&sys, &simcfg, &qcfg, &cert).unwrap();
    let b = sim::run(&sys, &simcfg, &qcfg, &cert).unwrap();
    assert_eq!(a.records.len(), b.records.len());
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(ra.t, rb.t);
        assert_eq!(ra.x, rb.x);
        assert_eq!(ra.xi, rb.xi);
        assert_eq!(ra.e_bound, rb.e_bound);
    }
    let mut csv_a = Vec::new();
    let mut csv_b = Vec::new();
    sim::write_trajectory_csv(&a, &mut csv_a).unwrap();
    sim::write_trajectory_csv(&b, &mut csv_b).unwrap();
    assert_eq!(csv_a, csv_b);
}

#[test]
fn randomized_admissible_runs_keep_all_invariants() {
    let sys = benchmark_system();
    let cert = certify(&sys, &benchmark_options(256)).unwrap();
    let qcfg = benchmark_quantizer();
    let adt = AdtParams::new(1, cert.tau_a_min * 1.01).unwrap();
    let mut switches_seen = 0;
    for seed in 0..200u64 {
        let signal =
            model::random_signal(seed, &adt, 2.6, 20.0, &sys.mode_ids(), None).unwrap();
        assert!(model::validate_signal(&signal, sys.tau_s(), &adt).passed());
        switches_seen += signal.events().len();
        let x0 = DVector::from_vec(vec![
            -10.0 + 20.0 * ((seed as f64 * 0.37) % 1.0),
            -10.0 + 20.0 * ((seed as f64 * 0.71) % 1.0),
        ]);
        let simcfg = SimConfig {
            x0,
            signal,
            t_end: 20.0,
            substep: None,
            record_intersample: false,
        };
        let log = sim::run(&sys, &simcfg, &qcfg, &cert).unwrap();
        let report = sim::check_invariants(&log, &cert).unwrap();
        assert!(report.all_ok(), "seed {seed}: {report:?}");
    }
    assert!(switches_seen > 50, "only {switches_seen} switches exercised");
}

#[test]
fn signal_generator_self_check_1000_seeds() {
    let sys = benchmark_system();
    let adt = AdtParams::new(1, 5.8).unwrap();
    for seed in 0..1000u64 {
        let signal =
            model::random_signal(seed, &adt, 2.6, 60.0, &sys.mode_ids(), None).unwrap();
        let report = model::validate_signal(&signal, sys.tau_s(), &adt);
        assert!(report.passed(), "seed {seed}: {report}");
        // At most one switch in any sampling interval on a fine grid.
        let mut t = sys.tau_s();
        while t <= signal.horizon() {
            assert!(signal.count_switches(t - sys.tau_s(), t).unwrap() <= 1);
            t += 0.1;
        }
    }
}

#[test]
fn switches_exactly_at_sampling_instants() {
    // A switch landing on a sample time belongs to the new mode at that
    // sample (right-continuity) and is detected immediately; the interval
    // split degenerates to a zero-length segment.
    let sys = benchmark_system();
    let cert = certify(&sys, &benchmark_options(256)).unwrap();
    let qcfg = benchmark_quantizer();
    let signal = SwitchingSignal::new(
        ModeId(1),
        vec![
            dwellcert::model::SwitchEvent {
                time: 3.0,
                mode: ModeId(2),
            },
            dwellcert::model::SwitchEvent {
                time: 9.0,
                mode: ModeId(1),
            },
            dwellcert::model::SwitchEvent {
                time: 15.5,
                mode: ModeId(2),
            },
        ],
        20.0,
    )
    .unwrap();
    let adt = AdtParams::new(1, 5.8).unwrap();
    assert!(model::validate_signal(&signal, sys.tau_s(), &adt).passed());
    let simcfg = SimConfig {
        x0: DVector::from_vec(vec![4.0, -1.0]),
        signal,
        t_end: 20.0,
        substep: None,
        record_intersample: false,
    };
    let log = sim::run(&sys, &simcfg, &qcfg, &cert).unwrap();
    let report = sim::check_invariants(&log, &cert).unwrap();
    assert!(report.all_ok(), "{report:?}");
    // The t = 3.0 switch is detected at the t = 3.0 sample itself: the
    // records at 3.0 must already carry the new controller mode.
    let rec = log
        .records
        .iter()
        .find(|r| r.is_sample && r.t == 3.0)
        .unwrap();
    assert_eq!(rec.plant_mode, ModeId(2));
    assert_eq!(rec.ctrl_mode, Some(ModeId(2)));
    assert!(matches!(
        rec.boundary,
        Some(dwellcert::codec::BoundaryEvent::SwitchDetected { from: ModeId(1), .. })
    ));
}

#[test]
fn zoom_out_window_resets_across_switches_and_overflow_bits() {
    // Large initial state: overflow bits stay 1 for a while, and two early
    // switches force constant-mode window restarts before zoom-out can end.
    let sys = benchmark_system();
    let cert = certify(&sys, &benchmark_options(256)).unwrap();
    let qcfg = benchmark_quantizer();
    let signal = SwitchingSignal::new(
        ModeId(1),
        vec![
            dwellcert::model::SwitchEvent {
                time: 1.0,
                mode: ModeId(2),
            },
            dwellcert::model::SwitchEvent {
                time: 4.0,
                mode: ModeId(1),
            },
        ],
        30.0,
    )
    .unwrap();
    let adt = AdtParams::new(1, 3.0).unwrap();
    assert!(model::validate_signal(&signal, sys.tau_s(), &adt).passed());
    let simcfg = SimConfig {
        x0: DVector::from_vec(vec![200.0, -300.0]),
        signal,
        t_end: 30.0,
        substep: None,
        record_intersample: false,
    };
    let log = sim::run(&sys, &simcfg, &qcfg, &cert).unwrap();
    let ones = log
        .symbols
        .iter()
        .filter(|(_, _, s)| s.payload == dwellcert::codec::Payload::OverflowBit(1))
        .count();
    assert!(ones >= 1, "expected overflow bits for the large initial state");
    assert!(log.summary.zoom_out_end.is_some());
    assert!(log.summary.e_dominance_ok && log.summary.cycle_contraction_ok);
}

#[test]
fn zoom_out_completes_within_window_bound() {
    // Once the overflow bits stabilize to zero, a constant-mode window of
    // length eta must appear within (m - 1) * eta samples.
    let sys = benchmark_system();
    let cert = certify(&sys, &benchmark_options(128)).unwrap();
    let qcfg = benchmark_quantizer();
    let adt = AdtParams::new(1, 5.8).unwrap();
    let m = dwellcert::certify::zoom_out_window_count(&adt, cert.eta, sys.tau_s()).unwrap();
    for seed in 100..140u64 {
        let signal =
            model::random_signal(seed, &adt, 2.6, 40.0, &sys.mode_ids(), None).unwrap();
        let simcfg = SimConfig {
            x0: DVector::from_vec(vec![5.0, -7.0]),
            signal,
            t_end: 40.0,
            substep: None,
            record_intersample: false,
        };
        let log = sim::run(&sys, &simcfg, &qcfg, &cert).unwrap();
        let zoom_end = log.summary.zoom_out_end.expect("zoom-out finishes");
        // First sample where bits have stabilized to zero for good.
        let mut stable_from = 0.0;
        for rec in log.records.iter().filter(|r| r.is_sample) {
            if let Some(dwellcert::codec::Payload::OverflowBit(1)) = rec.payload {
                stable_from = rec.t + sys.tau_s();
            }
            if rec.stage == dwellcert::codec::Stage::ZoomIn {
                break;
            }
        }
        let slack = ((m - 1) as usize * cert.eta + cert.eta) as f64 * sys.tau_s();
        assert!(
            zoom_end <= stable_from + slack,
            "seed {seed}: zoom_end {zoom_end} vs stable_from {stable_from} + {slack}"
        );
    }
}
