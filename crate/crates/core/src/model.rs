//! The switched plant, its per-mode feedback gains, switching signals, and
//! the slow-switching (dwell time / average dwell time) validation.
//!
//! A signal is right-continuous and piecewise constant: at an event time the
//! new mode is already active.

use crate::numerics::{self, Mat, NumericsError};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Identifier of a plant mode.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ModeId(pub u32);

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("system needs at least one mode")]
    NoModes,
    #[error("duplicate mode id {0}")]
    DuplicateModeId(ModeId),
    #[error("unknown mode id {0}")]
    UnknownMode(ModeId),
    #[error("mode {mode}: {what} must be {expected}, got {got}")]
    BadDimensions {
        mode: ModeId,
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("mode {mode}: matrix {what} has non-finite entries")]
    NonFiniteEntries { mode: ModeId, what: &'static str },
    #[error("sampling period must be positive and finite, got {0}")]
    BadSamplingPeriod(f64),
    #[error("switching signal: event times must be strictly increasing within (0, horizon]")]
    BadEventTimes,
    #[error("switching signal: consecutive modes must differ at every event")]
    NoOpSwitch,
    #[error("switching signal: horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("time {t} outside signal domain [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("interval requires s < t, got s={s}, t={t}")]
    EmptyInterval { s: f64, t: f64 },
    #[error("average dwell time parameters: N0 must be >= 1")]
    BadN0,
    #[error("average dwell time parameters: tau_a must be positive and finite, got {0}")]
    BadTauA(f64),
    #[error("mode {0} unobservable at this sampling rate: no eta <= n gives full column rank")]
    UnobservableAtRate(ModeId),
    #[error("signal generator: {0}")]
    GeneratorInfeasible(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// One mode of the plant: dynamics `(A, B, C)` and its feedback gain `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDef {
    pub id: ModeId,
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub k: Mat,
}

impl ModeDef {
    /// Closed-loop matrix `A + B K`.
    pub fn a_cl(&self) -> Mat {
        &self.a + &self.b * &self.k
    }
}

/// The switched plant: modes plus the sampling period.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    modes: Vec<ModeDef>,
    tau_s: f64,
    n: usize,
    m: usize,
    p: usize,
}

impl SwitchedSystem {
    pub fn new(modes: Vec<ModeDef>, tau_s: f64) -> Result<Self, ModelError> {
        if modes.is_empty() {
            return Err(ModelError::NoModes);
        }
        if !(tau_s.is_finite() && tau_s > 0.0) {
            return Err(ModelError::BadSamplingPeriod(tau_s));
        }
        let n = modes[0].a.nrows();
        let m = modes[0].b.ncols();
        let p = modes[0].c.nrows();
        for md in &modes {
            let dims = [
                ("A", &md.a, (n, n)),
                ("B", &md.b, (n, m)),
                ("C", &md.c, (p, n)),
                ("K", &md.k, (m, n)),
            ];
            for (what, mat, (er, ec)) in dims {
                if mat.nrows() != er || mat.ncols() != ec {
                    return Err(ModelError::BadDimensions {
                        mode: md.id,
                        what,
                        expected: format!("{er}x{ec}"),
                        got: format!("{}x{}", mat.nrows(), mat.ncols()),
                    });
                }
                if mat.iter().any(|x| !x.is_finite()) {
                    return Err(ModelError::NonFiniteEntries { mode: md.id, what });
                }
            }
        }
        for (i, md) in modes.iter().enumerate() {
            if modes[..i].iter().any(|other| other.id == md.id) {
                return Err(ModelError::DuplicateModeId(md.id));
            }
        }
        Ok(Self {
            modes,
            tau_s,
            n,
            m,
            p,
        })
    }

    pub fn modes(&self) -> &[ModeDef] {
        &self.modes
    }

    pub fn mode(&self, id: ModeId) -> Result<&ModeDef, ModelError> {
        self.modes
            .iter()
            .find(|m| m.id == id)
            .ok_or(ModelError::UnknownMode(id))
    }

    pub fn mode_ids(&self) -> Vec<ModeId> {
        self.modes.iter().map(|m| m.id).collect()
    }

    pub fn tau_s(&self) -> f64 {
        self.tau_s
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Output dimension.
    pub fn p(&self) -> usize {
        self.p
    }

    /// `max_p ||A_p||_inf`, the open-loop growth rate bound.
    pub fn max_a_norm_inf(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| numerics::op_norm_inf(&m.a))
            .fold(0.0, f64::max)
    }
}

/// One switching event: at `time` the signal jumps to `mode`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub time: f64,
    pub mode: ModeId,
}

/// Right-continuous piecewise-constant mode schedule on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSignal {
    sigma0: ModeId,
    events: Vec<SwitchEvent>,
    horizon: f64,
}

impl SwitchingSignal {
    pub fn new(
        sigma0: ModeId,
        events: Vec<SwitchEvent>,
        horizon: f64,
    ) -> Result<Self, ModelError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ModelError::BadHorizon(horizon));
        }
        let mut prev_t = 0.0;
        let mut prev_mode = sigma0;
        for ev in &events {
            if !ev.time.is_finite() || ev.time <= prev_t || ev.time > horizon {
                return Err(ModelError::BadEventTimes);
            }
            if ev.mode == prev_mode {
                return Err(ModelError::NoOpSwitch);
            }
            prev_t = ev.time;
            prev_mode = ev.mode;
        }
        Ok(Self {
            sigma0,
            events,
            horizon,
        })
    }

    pub fn sigma0(&self) -> ModeId {
        self.sigma0
    }

    pub fn events(&self) -> &[SwitchEvent] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `sigma(t)` under right-continuity: at an event time, the new mode.
    pub fn mode_at(&self, t: f64) -> Result<ModeId, ModelError> {
        if !t.is_finite() || t < 0.0 || t > self.horizon {
            return Err(ModelError::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let mut mode = self.sigma0;
        for ev in &self.events {
            if ev.time <= t {
                mode = ev.mode;
            } else {
                break;
            }
        }
        Ok(mode)
    }

    /// Number of switching times in the half-open interval `(s, t]`.
    pub fn count_switches(&self, s: f64, t: f64) -> Result<usize, ModelError> {
        if !(s.is_finite() && t.is_finite()) || s >= t {
            return Err(ModelError::EmptyInterval { s, t });
        }
        Ok(self
            .events
            .iter()
            .filter(|ev| ev.time > s && ev.time <= t)
            .count())
    }
}

/// Average dwell time parameters: `N_sigma(t, s) <= N0 + (t - s) / tau_a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdtParams {
    pub n0: u32,
    pub tau_a: f64,
}

impl AdtParams {
    pub fn new(n0: u32, tau_a: f64) -> Result<Self, ModelError> {
        if n0 < 1 {
            return Err(ModelError::BadN0);
        }
        if !(tau_a.is_finite() && tau_a > 0.0) {
            return Err(ModelError::BadTauA(tau_a));
        }
        Ok(Self { n0, tau_a })
    }
}

/// Per-mode validation outcome.
#[derive(Debug, Clone)]
pub struct ModeReport {
    pub mode: ModeId,
    /// `A + B K` Hurwitz; on failure `max_re_closed_loop` is the witness.
    pub hurwitz_ok: bool,
    pub max_re_closed_loop: f64,
    /// Stacked discrete observability matrix over n blocks has rank n.
    pub observability_ok: bool,
}

/// Validation report for a whole system.
#[derive(Debug, Clone)]
pub struct SystemReport {
    pub modes: Vec<ModeReport>,
}

impl SystemReport {
    pub fn passed(&self) -> bool {
        self.modes
            .iter()
            .all(|m| m.hurwitz_ok && m.observability_ok)
    }
}

impl fmt::Display for SystemReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.modes {
            writeln!(
                f,
                "mode {}: closed loop {} (max Re lambda = {:+.6}), sampled observability {}",
                m.mode,
                if m.hurwitz_ok { "Hurwitz" } else { "NOT Hurwitz" },
                m.max_re_closed_loop,
                if m.observability_ok { "ok" } else { "FAILED" },
            )?;
        }
        Ok(())
    }
}

/// Checks, per mode, that `A_p + B_p K_p` is Hurwitz and that the sampled
/// pair `(C_p, e^{A_p tau_s})` is observable (rank-n stack over n blocks).
pub fn validate_system(sys: &SwitchedSystem) -> Result<SystemReport, ModelError> {
    let mut modes = Vec::with_capacity(sys.modes().len());
    for md in sys.modes() {
        let acl = md.a_cl();
        let max_re = acl
            .complex_eigenvalues()
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max);
        let w = stack_w(md, sys.tau_s(), sys.n())?;
        let observability_ok = rank_is_full(&w, sys.n());
        modes.push(ModeReport {
            mode: md.id,
            hurwitz_ok: max_re < 0.0,
            max_re_closed_loop: max_re,
            observability_ok,
        });
    }
    Ok(SystemReport { modes })
}

fn rank_is_full(w: &Mat, n: usize) -> bool {
    let sv = w.clone().singular_values();
    let smax = sv.max();
    smax > 0.0 && sv.iter().filter(|s| **s > 1e-9 * smax).count() >= n
}

/// Observability stack: rows `C_p e^{A_p l tau_s}` for `l = 0..eta-1`.
pub fn stack_w(mode: &ModeDef, tau_s: f64, eta: usize) -> Result<Mat, ModelError> {
    let n = mode.a.nrows();
    let p = mode.c.nrows();
    let mut w = Mat::zeros(eta * p, n);
    for l in 0..eta {
        let block = &mode.c * numerics::mat_exp(&mode.a, l as f64 * tau_s)?;
        w.view_mut((l * p, 0), (p, n)).copy_from(&block);
    }
    Ok(w)
}

/// Smallest `eta >= 1` such that the observability stack has full column
/// rank; capped at `eta = n`.
pub fn eta_of_mode(mode: &ModeDef, tau_s: f64) -> Result<usize, ModelError> {
    let n = mode.a.nrows();
    for eta in 1..=n {
        if rank_is_full(&stack_w(mode, tau_s, eta)?, n) {
            return Ok(eta);
        }
    }
    Err(ModelError::UnobservableAtRate(mode.id))
}

/// A dwell-time violation: the offending gap between consecutive switches.
#[derive(Debug, Clone, Copy)]
pub struct DwellViolation {
    pub from: f64,
    pub to: f64,
    pub gap: f64,
}

/// An average-dwell-time violation, witnessed by a pair of switch times.
#[derive(Debug, Clone, Copy)]
pub struct AdtViolation {
    pub t_first: f64,
    pub t_last: f64,
    pub count: usize,
    pub allowed: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SignalReport {
    pub dwell_violations: Vec<DwellViolation>,
    pub adt_violations: Vec<AdtViolation>,
}

impl SignalReport {
    pub fn passed(&self) -> bool {
        self.dwell_violations.is_empty() && self.adt_violations.is_empty()
    }
}

impl fmt::Display for SignalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return writeln!(f, "signal admissible: dwell-time and ADT checks pass");
        }
        for v in &self.dwell_violations {
            writeln!(
                f,
                "dwell violation: gap {:.6} on ({:.6}, {:.6}) below the sampling period",
                v.gap, v.from, v.to
            )?;
        }
        for v in &self.adt_violations {
            writeln!(
                f,
                "ADT violation: {} switches over [{:.6}, {:.6}] exceed allowance {:.6}",
                v.count, v.t_first, v.t_last, v.allowed
            )?;
        }
        Ok(())
    }
}

const VALIDATION_SLACK: f64 = 1e-9;

/// Dwell-time and average-dwell-time validation.
///
/// Dwell: every gap between consecutive switches, and from 0 to the first
/// switch, is at least `tau_s`. ADT: for every pair of switch times
/// `T_i <= T_j`, `(j - i + 1) <= N0 + (T_j - T_i)/tau_a`; it suffices to
/// check pairs of switch times since the count is piecewise constant and the
/// worst window approaches `T_i` from below.
pub fn validate_signal(signal: &SwitchingSignal, tau_s: f64, adt: &AdtParams) -> SignalReport {
    let mut report = SignalReport::default();
    let times: Vec<f64> = signal.events().iter().map(|e| e.time).collect();
    let mut prev = 0.0;
    for &t in &times {
        let gap = t - prev;
        if gap < tau_s * (1.0 - VALIDATION_SLACK) {
            report.dwell_violations.push(DwellViolation {
                from: prev,
                to: t,
                gap,
            });
        }
        prev = t;
    }
    for i in 0..times.len() {
        for j in i..times.len() {
            let count = j - i + 1;
            let allowed = adt.n0 as f64 + (times[j] - times[i]) / adt.tau_a;
            if count as f64 > allowed * (1.0 + VALIDATION_SLACK) {
                report.adt_violations.push(AdtViolation {
                    t_first: times[i],
                    t_last: times[j],
                    count,
                    allowed,
                });
            }
        }
    }
    report
}

/// Deterministic random admissible signal.
///
/// Switch times are placed constructively: each next switch sits at the
/// earliest time allowed by `dwell_min` and the pairwise ADT constraints,
/// plus a seeded jitter. Successive modes are drawn uniformly from the other
/// modes.
pub fn random_signal(
    seed: u64,
    adt: &AdtParams,
    dwell_min: f64,
    horizon: f64,
    mode_ids: &[ModeId],
    sigma0: Option<ModeId>,
) -> Result<SwitchingSignal, ModelError> {
    if mode_ids.is_empty() {
        return Err(ModelError::GeneratorInfeasible("no mode ids given".into()));
    }
    if !(dwell_min.is_finite() && dwell_min > 0.0) {
        return Err(ModelError::GeneratorInfeasible(format!(
            "dwell_min must be positive and finite, got {dwell_min}"
        )));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(ModelError::BadHorizon(horizon));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma0 = match sigma0 {
        Some(id) => {
            if !mode_ids.contains(&id) {
                return Err(ModelError::UnknownMode(id));
            }
            id
        }
        None => mode_ids[rng.random_range(0..mode_ids.len())],
    };
    let mut events = Vec::new();
    if mode_ids.len() >= 2 {
        let mut times: Vec<f64> = Vec::new();
        let mut current = sigma0;
        loop {
            let j = times.len(); // index of the switch being placed
            let prev = times.last().copied().unwrap_or(0.0);
            // Earliest admissible time: dwell floor plus every pairwise ADT
            // bound t >= T_i + (j - i + 2 - N0) * tau_a over existing i.
            let mut lb = prev + dwell_min;
            for (i, &ti) in times.iter().enumerate() {
                let needed = (j - i + 2) as f64 - adt.n0 as f64;
                if needed > 0.0 {
                    lb = lb.max(ti + needed * adt.tau_a);
                }
            }
            let jitter: f64 = rng.random_range(0.0..0.25 * adt.tau_a);
            let t = lb + jitter;
            if t > horizon {
                break;
            }
            let others: Vec<ModeId> =
                mode_ids.iter().copied().filter(|m| *m != current).collect();
            let next = others[rng.random_range(0..others.len())];
            times.push(t);
            events.push(SwitchEvent {
                time: t,
                mode: next,
            });
            current = next;
        }
    }
    SwitchingSignal::new(sigma0, events, horizon)
}
