//! The encoder/decoder pair: one deterministic state machine replicated on
//! both sides of the channel.
//!
//! Zoom-out stage: the encoder sends one overflow bit per sample against the
//! growing threshold `mu_k`; once `eta_p` consecutive in-range samples with a
//! constant transmitted mode are seen, both sides derive the initial error
//! bound and switch to zoom-in. Zoom-in stage: the output hypercube around
//! the predicted output is split into `N^p` boxes and the box index is
//! transmitted; at cycle end the estimate is reconstructed through the
//! observability stack, and after a detected switch the bound is re-inflated
//! from the pair constants and the cycle restarts.
//!
//! Both sides advance exclusively through [`Codec::encode_sample`] /
//! [`Codec::decode_symbol`], which run the identical transition code; fed
//! the same symbol stream they remain field-for-field bit-identical.

use crate::certify::Certificate;
use crate::model::{ModeId, SwitchedSystem};
use crate::numerics::{self, Mat};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("quantizer alphabet N must be an odd integer >= 3, got {0}")]
    BadAlphabet(u32),
    #[error("mu0 must be positive and finite, got {0}")]
    BadMu0(f64),
    #[error("chi must be positive and finite, got {0}")]
    BadChi(f64),
    #[error("certificate alphabet N = {cert} does not match quantizer N = {quantizer}")]
    AlphabetMismatch { cert: u32, quantizer: u32 },
    #[error("quantizer overflow at sample {sample}: |y - y_hat|_inf = {deviation:.6e} exceeds box radius {radius:.6e} (cycle mode {mode}); the switching signal is inadmissible or an invariant is broken")]
    Overflow {
        sample: u64,
        mode: ModeId,
        radius: f64,
        deviation: f64,
    },
    #[error("no pair constants for switch {p} -> {q}; mode missing from certificate")]
    UnknownPair { p: ModeId, q: ModeId },
    #[error("unknown mode {0} in symbol")]
    UnknownMode(ModeId),
    #[error("payload kind does not match codec stage (stage {stage:?}, sample {sample})")]
    PayloadKindMismatch { stage: Stage, sample: u64 },
    #[error("box index {index} outside 1..={max}")]
    InvalidBoxIndex { index: u64, max: u64 },
    #[error("output vector has {got} entries, expected {expected}")]
    BadOutputDim { got: usize, expected: usize },
    #[error("switch detected {k} samples into a cycle of length {eta}; dwell-time assumption broken")]
    SwitchPastCycle { k: usize, eta: usize },
}

/// Quantizer configuration: odd alphabet size `N`, initial threshold `mu0`,
/// zoom-out rate margin `chi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    n: u32,
    mu0: f64,
    chi: f64,
}

impl QuantizerConfig {
    pub fn new(n: u32, mu0: f64, chi: f64) -> Result<Self, CodecError> {
        if n < 3 || n.is_multiple_of(2) {
            return Err(CodecError::BadAlphabet(n));
        }
        if !(mu0.is_finite() && mu0 > 0.0) {
            return Err(CodecError::BadMu0(mu0));
        }
        if !(chi.is_finite() && chi > 0.0) {
            return Err(CodecError::BadChi(chi));
        }
        Ok(Self { n, mu0, chi })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }
}

/// Zoom-out threshold `mu_n = exp((1+chi) max_p ||A_p||_inf n tau_s) mu0`.
pub fn mu(n_index: u64, cfg: &QuantizerConfig, sys: &SwitchedSystem) -> f64 {
    let rate = (1.0 + cfg.chi) * sys.max_a_norm_inf() * sys.tau_s();
    (rate * n_index as f64).exp() * cfg.mu0
}

/// Codec stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    ZoomOut,
    ZoomIn,
}

/// Symbol payload: a zoom-out overflow bit or a zoom-in box index in
/// `1..=N^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payload {
    OverflowBit(u8),
    BoxIndex(u64),
}

/// One transmitted symbol: the sampled mode plus the payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Symbol {
    pub mode: ModeId,
    pub payload: Payload,
}

/// Zoom-out window bookkeeping: consecutive in-range samples with constant
/// transmitted mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoomOutWindow {
    pub start: u64,
    pub mode: ModeId,
    pub zeros: usize,
}

/// Cycle-boundary event applied while processing a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryEvent {
    /// First zoom-in cycle opened after the zoom-out stage finished.
    ZoomOutFinished,
    /// Estimate reconstructed at the end of a switch-free cycle.
    Reconstructed,
    /// Switch from `from` detected `k` samples into the cycle.
    SwitchDetected { from: ModeId, k: usize },
}

/// The full shared encoder/decoder state. Fed the same symbols, two
/// instances stay bit-identical after every step.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecState {
    pub stage: Stage,
    /// Index of the next sample to process.
    pub k: u64,
    /// State estimate at the current sample time.
    pub xi: DVector<f64>,
    /// Certified error bound at the current sample (0 during zoom-out).
    pub e_bound: f64,
    /// Cycle start sample index `k0`.
    pub cycle_start: u64,
    /// Controller's active mode (None until the first cycle opens).
    pub cycle_mode: Option<ModeId>,
    /// Error bound at the cycle start, `E_{k0}`.
    pub cycle_e: f64,
    /// Estimate at the cycle start, `xi(k0 tau_s)`.
    pub xi_cycle_start: DVector<f64>,
    /// Samples into the current cycle.
    pub samples_into_cycle: usize,
    pub window: Option<ZoomOutWindow>,
    /// Set between zoom-out completion and the first cycle sample.
    pub pending_cycle_start: bool,
    /// Decoded `center - prediction` residuals of the current cycle.
    pub center_offsets: Vec<DVector<f64>>,
    /// Boundary event applied while processing the current sample, if any.
    pub last_boundary: Option<BoundaryEvent>,
}

struct ModeTables {
    id: ModeId,
    c: Mat,
    k_gain: Mat,
    a_cl: Mat,
    /// `e^{(A+BK) tau_s}`, the per-sample estimate propagation.
    phi_ctrl: Mat,
    /// `e^{A eta tau_s}`, the reconstruction propagation.
    exp_a_eta: Mat,
    w_dagger: Mat,
    eta: usize,
    theta: f64,
    /// `||C e^{A l tau_s}||_inf` for l = 0..eta-1: box radii per bound unit.
    r_factors: Vec<f64>,
    /// `||e^{A l tau_s}||_inf` for l = 0..eta: in-cycle bound growth.
    e_factors: Vec<f64>,
    /// `e^{max_q ||A_q|| tau_s} ||e^{A (eta-1) tau_s}||_inf ||W+||_inf`.
    zoom_factor: f64,
}

struct CodecTables {
    modes: Vec<ModeTables>,
    /// `(p, q) -> (delta_bar, gamma_prime_bar)` arrays over k.
    pairs: BTreeMap<(u32, u32), (Vec<f64>, Vec<f64>)>,
    mu_rate: f64,
    mu0: f64,
    n_quant: u32,
    p_dim: usize,
    n_dim: usize,
}

impl CodecTables {
    fn mode(&self, id: ModeId) -> Result<&ModeTables, CodecError> {
        self.modes
            .iter()
            .find(|m| m.id == id)
            .ok_or(CodecError::UnknownMode(id))
    }

    fn mu_at(&self, k: u64) -> f64 {
        (self.mu_rate * k as f64).exp() * self.mu0
    }

    fn box_count(&self) -> u64 {
        (self.n_quant as u64).pow(self.p_dim as u32)
    }
}

/// Encoder or decoder instance; construct matched pairs with
/// [`Codec::new_pair`].
pub struct Codec {
    tables: Arc<CodecTables>,
    state: CodecState,
}

impl Codec {
    /// Builds an encoder/decoder pair sharing precomputed tables.
    pub fn new_pair(
        sys: &SwitchedSystem,
        cert: &Certificate,
        cfg: &QuantizerConfig,
    ) -> Result<(Codec, Codec), CodecError> {
        if cert.n_quant != cfg.n {
            return Err(CodecError::AlphabetMismatch {
                cert: cert.n_quant,
                quantizer: cfg.n,
            });
        }
        let max_a = sys.max_a_norm_inf();
        let tau_s = sys.tau_s();
        let mut modes = Vec::new();
        for mc in &cert.modes {
            let md = sys
                .mode(mc.mode)
                .map_err(|_| CodecError::UnknownMode(mc.mode))?;
            let a_cl = md.a_cl();
            let phi_ctrl = numerics::mat_exp(&a_cl, tau_s).expect("square");
            let exp_a_eta = numerics::mat_exp(&md.a, mc.eta_p as f64 * tau_s).expect("square");
            let mut r_factors = Vec::with_capacity(mc.eta_p);
            let mut e_factors = Vec::with_capacity(mc.eta_p + 1);
            for l in 0..=mc.eta_p {
                let e_al = numerics::mat_exp(&md.a, l as f64 * tau_s).expect("square");
                e_factors.push(numerics::op_norm_inf(&e_al));
                if l < mc.eta_p {
                    r_factors.push(numerics::op_norm_inf(&(&md.c * &e_al)));
                }
            }
            let w_dagger_norm = numerics::op_norm_inf(&mc.w_dagger);
            let zoom_factor = (max_a * tau_s).exp() * e_factors[mc.eta_p - 1] * w_dagger_norm;
            modes.push(ModeTables {
                id: mc.mode,
                c: md.c.clone(),
                k_gain: md.k.clone(),
                a_cl,
                phi_ctrl,
                exp_a_eta,
                w_dagger: mc.w_dagger.clone(),
                eta: mc.eta_p,
                theta: mc.theta_p,
                r_factors,
                e_factors,
                zoom_factor,
            });
        }
        let mut pairs = BTreeMap::new();
        for pc in &cert.pairs {
            pairs.insert(
                (pc.p.0, pc.q.0),
                (pc.delta_bar.clone(), pc.gamma_prime_bar.clone()),
            );
        }
        let tables = Arc::new(CodecTables {
            modes,
            pairs,
            mu_rate: (1.0 + cfg.chi) * max_a * tau_s,
            mu0: cfg.mu0,
            n_quant: cfg.n,
            p_dim: sys.p(),
            n_dim: sys.n(),
        });
        let state = CodecState {
            stage: Stage::ZoomOut,
            k: 0,
            xi: DVector::zeros(sys.n()),
            e_bound: 0.0,
            cycle_start: 0,
            cycle_mode: None,
            cycle_e: 0.0,
            xi_cycle_start: DVector::zeros(sys.n()),
            samples_into_cycle: 0,
            window: None,
            pending_cycle_start: false,
            center_offsets: Vec::new(),
            last_boundary: None,
        };
        let enc = Codec {
            tables: tables.clone(),
            state: state.clone(),
        };
        let dec = Codec { tables, state };
        Ok((enc, dec))
    }

    pub fn state(&self) -> &CodecState {
        &self.state
    }

    /// Encodes the sampled output under the sampled mode, advancing the
    /// shared state.
    pub fn encode_sample(
        &mut self,
        y: &DVector<f64>,
        sigma_k: ModeId,
    ) -> Result<Symbol, CodecError> {
        if y.len() != self.tables.p_dim {
            return Err(CodecError::BadOutputDim {
                got: y.len(),
                expected: self.tables.p_dim,
            });
        }
        self.step_begin(sigma_k)?;
        let payload = self.quantize(y)?;
        self.step_end(sigma_k, payload)?;
        Ok(Symbol {
            mode: sigma_k,
            payload,
        })
    }

    /// Applies a received symbol, advancing the shared state exactly as the
    /// encoder did.
    pub fn decode_symbol(&mut self, sym: &Symbol) -> Result<(), CodecError> {
        self.step_begin(sym.mode)?;
        match (self.state.stage, sym.payload) {
            (Stage::ZoomOut, Payload::OverflowBit(_)) | (Stage::ZoomIn, Payload::BoxIndex(_)) => {}
            _ => {
                return Err(CodecError::PayloadKindMismatch {
                    stage: self.state.stage,
                    sample: self.state.k,
                })
            }
        }
        self.step_end(sym.mode, sym.payload)
    }

    /// Control input `K_p xi(t)` at `dt` past the current sample (zero during
    /// zoom-out). `xi` is propagated under the closed-loop controller flow.
    pub fn control_input(&self, dt: f64) -> DVector<f64> {
        match (self.state.stage, self.state.cycle_mode) {
            (Stage::ZoomIn, Some(mode)) if !self.state.pending_cycle_start => {
                let mt = self.tables.mode(mode).expect("cycle mode in tables");
                let xi_t = if dt == 0.0 {
                    self.state.xi.clone()
                } else {
                    numerics::mat_exp(&mt.a_cl, dt).expect("square") * &self.state.xi
                };
                &mt.k_gain * xi_t
            }
            _ => DVector::zeros(self.tables.modes[0].k_gain.nrows()),
        }
    }

    /// Advances the estimate to this sample and applies any cycle-boundary
    /// transition, leaving the state ready to quantize the sample.
    fn step_begin(&mut self, mode: ModeId) -> Result<(), CodecError> {
        self.state.last_boundary = None;
        self.tables.mode(mode)?;
        if self.state.stage != Stage::ZoomIn {
            return Ok(());
        }
        if self.state.pending_cycle_start {
            self.open_cycle(mode, self.state.cycle_e);
            self.state.pending_cycle_start = false;
            self.state.last_boundary = Some(BoundaryEvent::ZoomOutFinished);
            return Ok(());
        }
        let cycle_mode = self.state.cycle_mode.expect("zoom-in has a cycle mode");
        // One sampling interval elapsed under the cycle mode's controller.
        let mt = self.tables.mode(cycle_mode)?;
        self.state.xi = &mt.phi_ctrl * &self.state.xi;
        self.state.samples_into_cycle += 1;
        if mode != cycle_mode {
            self.cycle_switch_update(cycle_mode, mode)?;
        } else if self.state.samples_into_cycle == mt.eta {
            self.cycle_end_reconstruct(cycle_mode)?;
        } else {
            let growth = self.tables.mode(cycle_mode)?.e_factors[self.state.samples_into_cycle];
            self.state.e_bound = growth * self.state.cycle_e;
        }
        Ok(())
    }

    /// Opens a fresh cycle at the current sample with the given bound.
    fn open_cycle(&mut self, mode: ModeId, e: f64) {
        self.state.cycle_mode = Some(mode);
        self.state.cycle_start = self.state.k;
        self.state.samples_into_cycle = 0;
        self.state.xi_cycle_start = self.state.xi.clone();
        self.state.cycle_e = e;
        self.state.e_bound = e;
        self.state.center_offsets.clear();
    }

    /// End of a switch-free cycle: reconstruct the estimate from the decoded
    /// box centers and contract the bound by `theta_p`.
    fn cycle_end_reconstruct(&mut self, mode: ModeId) -> Result<(), CodecError> {
        let mt = self.tables.mode(mode)?;
        let p_dim = self.tables.p_dim;
        let mut stack = DVector::zeros(mt.eta * p_dim);
        for (l, off) in self.state.center_offsets.iter().enumerate() {
            stack.rows_mut(l * p_dim, p_dim).copy_from(off);
        }
        let e_hat = &mt.w_dagger * stack;
        let xi_new = &self.state.xi + &mt.exp_a_eta * e_hat;
        let e_new = mt.theta * self.state.cycle_e;
        self.state.xi = xi_new;
        self.open_cycle(mode, e_new);
        self.state.last_boundary = Some(BoundaryEvent::Reconstructed);
        Ok(())
    }

    /// Switch detected at this sample: re-inflate the bound from the pair
    /// constants, discard the cycle's measurements, restart under the new
    /// mode. The estimate keeps its propagated value.
    fn cycle_switch_update(&mut self, from: ModeId, to: ModeId) -> Result<(), CodecError> {
        let k = self.state.samples_into_cycle;
        let eta = self.tables.mode(from)?.eta;
        if k == 0 || k > eta {
            return Err(CodecError::SwitchPastCycle { k, eta });
        }
        let (delta, gamma_prime) = self
            .tables
            .pairs
            .get(&(from.0, to.0))
            .ok_or(CodecError::UnknownPair { p: from, q: to })?;
        let xi0_norm = numerics::vec_norm_inf(&self.state.xi_cycle_start);
        let e_new = delta[k - 1] * xi0_norm + gamma_prime[k - 1] * self.state.cycle_e;
        self.open_cycle(to, e_new);
        self.state.last_boundary = Some(BoundaryEvent::SwitchDetected { from, k });
        Ok(())
    }

    /// Quantizes the output in the geometry established by `step_begin`.
    fn quantize(&self, y: &DVector<f64>) -> Result<Payload, CodecError> {
        match self.state.stage {
            Stage::ZoomOut => {
                let in_range = numerics::vec_norm_inf(y) <= self.tables.mu_at(self.state.k);
                Ok(Payload::OverflowBit(u8::from(!in_range)))
            }
            Stage::ZoomIn => {
                let mode = self.state.cycle_mode.expect("zoom-in has a cycle mode");
                let mt = self.tables.mode(mode)?;
                let y_hat = &mt.c * &self.state.xi;
                let radius = mt.r_factors[self.state.samples_into_cycle] * self.state.cycle_e;
                let deviation = numerics::vec_norm_inf(&(y - &y_hat));
                if deviation > radius {
                    return Err(CodecError::Overflow {
                        sample: self.state.k,
                        mode,
                        radius,
                        deviation,
                    });
                }
                let n = self.tables.n_quant as u64;
                let mut index: u64 = 0;
                let mut weight: u64 = 1;
                for i in 0..self.tables.p_dim {
                    // Boundary points fall into the lower-index box; the
                    // clamp only absorbs the exact upper-edge case.
                    let digit = (((y[i] - y_hat[i] + radius) * n as f64) / (2.0 * radius))
                        .floor()
                        .clamp(0.0, (n - 1) as f64) as u64;
                    index += digit * weight;
                    weight *= n;
                }
                Ok(Payload::BoxIndex(index + 1))
            }
        }
    }

    /// Absorbs the payload: window bookkeeping in zoom-out, center storage
    /// and estimate propagation in zoom-in; advances the sample counter.
    fn step_end(&mut self, mode: ModeId, payload: Payload) -> Result<(), CodecError> {
        match payload {
            Payload::OverflowBit(bit) => {
                if self.state.stage != Stage::ZoomOut {
                    return Err(CodecError::PayloadKindMismatch {
                        stage: self.state.stage,
                        sample: self.state.k,
                    });
                }
                if bit == 0 {
                    let extend = matches!(self.state.window, Some(w) if w.mode == mode);
                    if extend {
                        if let Some(w) = &mut self.state.window {
                            w.zeros += 1;
                        }
                    } else {
                        self.state.window = Some(ZoomOutWindow {
                            start: self.state.k,
                            mode,
                            zeros: 1,
                        });
                    }
                } else {
                    self.state.window = None;
                }
                if let Some(w) = self.state.window {
                    if w.zeros >= self.tables.mode(w.mode)?.eta {
                        self.finish_zoom_out(w.mode)?;
                    }
                }
            }
            Payload::BoxIndex(index) => {
                if self.state.stage != Stage::ZoomIn {
                    return Err(CodecError::PayloadKindMismatch {
                        stage: self.state.stage,
                        sample: self.state.k,
                    });
                }
                let max = self.tables.box_count();
                if index < 1 || index > max {
                    return Err(CodecError::InvalidBoxIndex { index, max });
                }
                let mode_t = self.state.cycle_mode.expect("zoom-in has a cycle mode");
                let mt = self.tables.mode(mode_t)?;
                let radius = mt.r_factors[self.state.samples_into_cycle] * self.state.cycle_e;
                let n = self.tables.n_quant as u64;
                let mut rem = index - 1;
                let mut offset = DVector::zeros(self.tables.p_dim);
                for i in 0..self.tables.p_dim {
                    let digit = (rem % n) as f64;
                    rem /= n;
                    offset[i] = (2.0 * digit + 1.0) * radius / n as f64 - radius;
                }
                self.state.center_offsets.push(offset);
            }
        }
        self.state.k += 1;
        Ok(())
    }

    /// Zoom-out window complete at the current sample: fix the initial error
    /// bound and arm the first cycle, which opens at the next sample.
    fn finish_zoom_out(&mut self, window_mode: ModeId) -> Result<(), CodecError> {
        let mt = self.tables.mode(window_mode)?;
        let e_initial = mt.zoom_factor * self.tables.mu_at(self.state.k);
        self.state.stage = Stage::ZoomIn;
        self.state.pending_cycle_start = true;
        self.state.cycle_e = e_initial;
        self.state.xi = DVector::zeros(self.tables.n_dim);
        self.state.window = None;
        Ok(())
    }
}

/// Writes the symbol trace CSV: `k,t,mode,payload_kind,payload_value`.
pub fn write_symbol_trace<W: Write>(symbols: &[(u64, f64, Symbol)], mut out: W) -> io::Result<()> {
    writeln!(out, "k,t,mode,payload_kind,payload_value")?;
    for (k, t, sym) in symbols {
        let (kind, value) = match sym.payload {
            Payload::OverflowBit(b) => ("overflow_bit", b as u64),
            Payload::BoxIndex(i) => ("box_index", i),
        };
        writeln!(out, "{k},{t:.16e},{},{kind},{value}", sym.mode)?;
    }
    Ok(())
}
