//! Shared fixtures and independent oracles for the integration tests: the
//! two-mode benchmark system, an adaptive Simpson quadrature for matrix
//! integrands, and a fixed-step RK4 integrator.

#![allow(dead_code)]

use dwellcert::certify::{CertifyOptions, ModeParams};
use dwellcert::model::{ModeDef, ModeId, SwitchEvent, SwitchingSignal};
use dwellcert::numerics::Mat;
use dwellcert::{QuantizerConfig, SwitchedSystem};
use nalgebra::DVector;

/// The two-mode benchmark plant used throughout the acceptance suite.
pub fn benchmark_system() -> SwitchedSystem {
    let mode1 = ModeDef {
        id: ModeId(1),
        a: Mat::from_row_slice(2, 2, &[0.0, -1.0, -1.0, -2.0]),
        b: Mat::from_row_slice(2, 1, &[1.0, -1.0]),
        c: Mat::from_row_slice(1, 2, &[1.0, 1.0]),
        k: Mat::from_row_slice(1, 2, &[-1.0, 2.0]),
    };
    let mode2 = ModeDef {
        id: ModeId(2),
        a: Mat::from_row_slice(2, 2, &[1.0, 2.0, -2.0, -1.0]),
        b: Mat::from_row_slice(2, 1, &[-2.0, 1.0]),
        c: Mat::from_row_slice(1, 2, &[1.0, -1.0]),
        k: Mat::from_row_slice(1, 2, &[1.0, -1.0]),
    };
    SwitchedSystem::new(vec![mode1, mode2], 0.5).unwrap()
}

/// Benchmark certification parameters: Q = I, kappa = (1.124, 1.09),
/// rho = (47, 80), N = 11.
pub fn benchmark_options(grid_points: u32) -> CertifyOptions {
    CertifyOptions {
        n_quant: 11,
        grid_points,
        safety_factor: 1.0,
        mode_params: vec![
            (
                ModeId(1),
                ModeParams {
                    q: Some(Mat::identity(2, 2)),
                    kappa: Some(1.124),
                    rho: Some(47.0),
                },
            ),
            (
                ModeId(2),
                ModeParams {
                    q: Some(Mat::identity(2, 2)),
                    kappa: Some(1.09),
                    rho: Some(80.0),
                },
            ),
        ],
    }
}

pub fn benchmark_quantizer() -> QuantizerConfig {
    QuantizerConfig::new(11, 0.1, 1.0).unwrap()
}

/// Benchmark switching signal: dwell 2.6 (initial interval), then gaps of
/// exactly 5.8, satisfying the ADT bound with N0 = 1, tau_a = 5.8.
pub fn benchmark_signal() -> SwitchingSignal {
    SwitchingSignal::new(
        ModeId(1),
        vec![
            SwitchEvent {
                time: 2.6,
                mode: ModeId(2),
            },
            SwitchEvent {
                time: 8.4,
                mode: ModeId(1),
            },
            SwitchEvent {
                time: 14.2,
                mode: ModeId(2),
            },
        ],
        20.0,
    )
    .unwrap()
}

/// Adaptive Simpson quadrature of a matrix-valued integrand, entrywise error
/// control. Independent of the augmented-exponential route it checks.
pub fn adaptive_simpson<F: Fn(f64) -> Mat>(f: &F, a: f64, b: f64, tol: f64) -> Mat {
    fn simpson(fa: &Mat, fm: &Mat, fb: &Mat, h: f64) -> Mat {
        (fa + fm * 4.0 + fb) * (h / 6.0)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> Mat>(
        f: &F,
        a: f64,
        b: f64,
        fa: &Mat,
        fm: &Mat,
        fb: &Mat,
        whole: &Mat,
        tol: f64,
        depth: u32,
    ) -> Mat {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, &flm, fm, m - a);
        let right = simpson(fm, &frm, fb, b - m);
        let combined = &left + &right;
        let err = (&combined - whole).abs().max();
        if depth == 0 || err <= 15.0 * tol {
            let correction = (&combined - whole) / 15.0;
            return combined + correction;
        }
        recurse(f, a, m, fa, &flm, fm, &left, tol * 0.5, depth - 1)
            + recurse(f, m, b, fm, &frm, fb, &right, tol * 0.5, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    if (b - a).abs() == 0.0 {
        return &fa * 0.0;
    }
    let whole = simpson(&fa, &fm, &fb, b - a);
    recurse(f, a, b, &fa, &fm, &fb, &whole, tol, 40)
}

/// Classic fixed-step RK4 on a linear vector field `x' = m(t) x`.
pub fn rk4<F: Fn(f64, &DVector<f64>) -> DVector<f64>>(
    f: &F,
    mut x: DVector<f64>,
    t0: f64,
    t1: f64,
    steps: usize,
) -> DVector<f64> {
    let h = (t1 - t0) / steps as f64;
    let mut t = t0;
    for _ in 0..steps {
        let k1 = f(t, &x);
        let k2 = f(t + 0.5 * h, &(&x + &k1 * (0.5 * h)));
        let k3 = f(t + 0.5 * h, &(&x + &k2 * (0.5 * h)));
        let k4 = f(t + h, &(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t += h;
    }
    x
}

/// Deterministic pseudo-random matrix with entries in [-1, 1].
pub fn seeded_matrix(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    Mat::from_fn(rows, cols, |_, _| next())
}
