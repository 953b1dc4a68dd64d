//! Derived constants of the encoding-and-control strategy: the data-rate
//! bound and minimum alphabet size, per-mode closed-loop maps and Lyapunov
//! pairs with their contraction rates, pairwise switch constants, the global
//! rates, the minimum average dwell time, and the zoom-out window count.
//!
//! Maxima over the intersample switch position `tau in [0, tau_s]` are taken
//! on a uniform closed grid (`grid_points` intervals, both endpoints
//! included); an optional safety factor inflates the grid maxima. Everything
//! else is exact to matrix-exponential accuracy.

use crate::model::{self, AdtParams, ModeDef, ModeId, SwitchedSystem};
use crate::numerics::{self, mat_rows, Mat, NumericsError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("mode {mode}: data rate insufficient: theta = {theta:.6} >= 1 (alphabet size N = {n} too small for data-rate bound {lhs:.6})")]
    DataRateInsufficient {
        mode: ModeId,
        theta: f64,
        lhs: f64,
        n: u32,
    },
    #[error("mode {mode}: rho = {rho} too small, must strictly exceed beta/(1 - theta^2) = {min:.6}")]
    RhoTooSmall { mode: ModeId, rho: f64, min: f64 },
    #[error("mode {mode}: kappa must be > 1, got {kappa}")]
    KappaOutOfRange { mode: ModeId, kappa: f64 },
    #[error("mode {mode}: rho must be positive and finite, got {rho}")]
    BadRho { mode: ModeId, rho: f64 },
    #[error("alphabet size N must be an odd integer >= 3, got {0}")]
    BadAlphabet(u32),
    #[error("grid_points must be >= 2, got {0}")]
    BadGrid(u32),
    #[error("safety factor must be >= 1, got {0}")]
    BadSafetyFactor(f64),
    #[error("pair certificate requires p != q, got p = q = {0}")]
    SamePair(ModeId),
    #[error("no certificate for mode {0}")]
    MissingModeCert(ModeId),
    #[error("certificate infeasible: nu = {0:.6} >= 1")]
    InfeasibleNu(f64),
    #[error("zoom-out ADT condition violated: tau_a = {tau_a} must exceed eta*tau_s = {floor}")]
    ZoomOutAdt { tau_a: f64, floor: f64 },
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Per-mode certificate: observability data, data-rate bound, closed-loop
/// maps, Lyapunov pair and contraction rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeCert {
    pub mode: ModeId,
    pub eta_p: usize,
    #[serde(with = "mat_rows")]
    pub w_dagger: Mat,
    pub lhs4: f64,
    pub theta_p: f64,
    #[serde(with = "mat_rows")]
    pub abar: Mat,
    #[serde(with = "mat_rows")]
    pub bbar: Mat,
    #[serde(rename = "Q_p", with = "mat_rows")]
    pub q_p: Mat,
    pub kappa_p: f64,
    pub rho_p: f64,
    #[serde(rename = "P_p", with = "mat_rows")]
    pub p_p: Mat,
    pub alpha_p: f64,
    pub beta_p: f64,
    pub nu_p: f64,
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
}

/// Ordered-pair certificate for a switch from `p` to `q`, with one entry per
/// detection delay `k = 1..=eta_p` (index `k-1` in the arrays).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairCert {
    pub p: ModeId,
    pub q: ModeId,
    #[serde(rename = "H_pq", with = "mat_rows")]
    pub h_pq: Mat,
    pub delta_bar: Vec<f64>,
    pub gamma_prime_bar: Vec<f64>,
    pub gamma_bar: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub beta_bar: Vec<f64>,
    pub nu_bar: Vec<f64>,
}

/// Complete certificate for a system at a given alphabet size and grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub modes: Vec<ModeCert>,
    pub pairs: Vec<PairCert>,
    pub eta: usize,
    pub nu: f64,
    pub nu_bar: Option<f64>,
    pub tau_a_min: f64,
    #[serde(rename = "N")]
    pub n_quant: u32,
    pub grid_points: u32,
}

impl Certificate {
    pub fn mode_cert(&self, id: ModeId) -> Result<&ModeCert, CertifyError> {
        self.modes
            .iter()
            .find(|m| m.mode == id)
            .ok_or(CertifyError::MissingModeCert(id))
    }

    pub fn pair_cert(&self, p: ModeId, q: ModeId) -> Option<&PairCert> {
        self.pairs.iter().find(|c| c.p == p && c.q == q)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Left side of the data-rate condition for one mode:
/// `||e^{A eta tau_s} W+||_inf * max_{0<=k<eta} ||C e^{A k tau_s}||_inf`.
pub fn data_rate_lhs(mode: &ModeDef, tau_s: f64) -> Result<f64, CertifyError> {
    let eta = model::eta_of_mode(mode, tau_s)?;
    let w = model::stack_w(mode, tau_s, eta)?;
    let w_dagger = numerics::pinv_left(&w)?;
    Ok(data_rate_lhs_with(mode, tau_s, eta, &w_dagger)?)
}

fn data_rate_lhs_with(
    mode: &ModeDef,
    tau_s: f64,
    eta: usize,
    w_dagger: &Mat,
) -> Result<f64, NumericsError> {
    let growth = numerics::mat_exp(&mode.a, eta as f64 * tau_s)? * w_dagger;
    let mut output_max: f64 = 0.0;
    for k in 0..eta {
        let ck = &mode.c * numerics::mat_exp(&mode.a, k as f64 * tau_s)?;
        output_max = output_max.max(numerics::op_norm_inf(&ck));
    }
    Ok(numerics::op_norm_inf(&growth) * output_max)
}

/// Smallest admissible alphabet sizes: `N_int` is the least integer strictly
/// above `max_p` of the data-rate bound, `N_odd` the least odd integer
/// `>= max(3, N_int)`.
pub fn min_admissible_n(sys: &SwitchedSystem) -> Result<(u32, u32), CertifyError> {
    let mut lhs_max: f64 = 0.0;
    for mode in sys.modes() {
        lhs_max = lhs_max.max(data_rate_lhs(mode, sys.tau_s())?);
    }
    let n_int = (lhs_max.floor() as u32) + 1;
    let base = n_int.max(3);
    let n_odd = if base % 2 == 1 { base } else { base + 1 };
    Ok((n_int, n_odd))
}

/// Discrete closed-loop maps over one cycle of length `eta * tau_s`:
/// `Abar = e^{(A+BK) eta tau_s}` and the cross Gramian
/// `Bbar = integral_0^{eta tau_s} e^{(A+BK)(eta tau_s - t)} B K e^{A t} dt`.
pub fn closed_loop_maps(
    mode: &ModeDef,
    tau_s: f64,
    eta: usize,
) -> Result<(Mat, Mat), CertifyError> {
    let acl = mode.a_cl();
    let horizon = eta as f64 * tau_s;
    let abar = numerics::mat_exp(&acl, horizon)?;
    let bk = &mode.b * &mode.k;
    let bbar = numerics::cross_gramian(&acl, &bk, &mode.a, horizon)?;
    Ok((abar, bbar))
}

/// Per-mode certification parameters, all optional: defaults are `Q_p = I`,
/// `kappa_p = 2`, `rho_p = 2 beta_p / (1 - theta_p^2)`.
#[derive(Debug, Clone, Default)]
pub struct ModeParams {
    pub q: Option<Mat>,
    pub kappa: Option<f64>,
    pub rho: Option<f64>,
}

/// Builds the per-mode certificate: solves the Lyapunov equation and derives
/// `alpha_p`, `beta_p`, `theta_p`, `nu_p`, enforcing `theta_p < 1` and
/// `rho_p > beta_p / (1 - theta_p^2)`.
pub fn mode_cert(
    mode: &ModeDef,
    tau_s: f64,
    params: &ModeParams,
    n_quant: u32,
) -> Result<ModeCert, CertifyError> {
    if n_quant < 3 || n_quant.is_multiple_of(2) {
        return Err(CertifyError::BadAlphabet(n_quant));
    }
    let n = mode.a.nrows();
    let kappa = params.kappa.unwrap_or(2.0);
    if !(kappa.is_finite() && kappa > 1.0) {
        return Err(CertifyError::KappaOutOfRange {
            mode: mode.id,
            kappa,
        });
    }
    let q = params.q.clone().unwrap_or_else(|| Mat::identity(n, n));

    let eta = model::eta_of_mode(mode, tau_s)?;
    let w = model::stack_w(mode, tau_s, eta)?;
    let w_dagger = numerics::pinv_left(&w)?;
    let lhs4 = data_rate_lhs_with(mode, tau_s, eta, &w_dagger)?;
    let theta = lhs4 / n_quant as f64;
    if theta >= 1.0 {
        return Err(CertifyError::DataRateInsufficient {
            mode: mode.id,
            theta,
            lhs: lhs4,
            n: n_quant,
        });
    }

    let (abar, bbar) = closed_loop_maps(mode, tau_s, eta)?;
    let p = numerics::dlyap(&abar, &q)?;
    let (q_min, _) = numerics::eig_extremes_sym(&q)?;
    let (p_min, p_max) = numerics::eig_extremes_sym(&p)?;
    let alpha = q_min / kappa;
    let cross = numerics::op_norm_2(&(abar.transpose() * &p * &bbar));
    let quad = numerics::op_norm_2(&(bbar.transpose() * &p * &bbar));
    let beta = n as f64 * (kappa / (kappa - 1.0) * cross * cross / q_min + quad);

    let rho_floor = beta / (1.0 - theta * theta);
    let rho = params.rho.unwrap_or(2.0 * rho_floor);
    if !(rho.is_finite() && rho > 0.0) {
        return Err(CertifyError::BadRho { mode: mode.id, rho });
    }
    if rho <= rho_floor {
        return Err(CertifyError::RhoTooSmall {
            mode: mode.id,
            rho,
            min: rho_floor,
        });
    }
    let nu = (1.0 - alpha / p_max).max(beta / rho + theta * theta);
    Ok(ModeCert {
        mode: mode.id,
        eta_p: eta,
        w_dagger,
        lhs4,
        theta_p: theta,
        abar,
        bbar,
        q_p: q,
        kappa_p: kappa,
        rho_p: rho,
        p_p: p,
        alpha_p: alpha,
        beta_p: beta,
        nu_p: nu,
        lambda_min_p: p_min,
        lambda_max_p: p_max,
    })
}

/// Geometric part of a pair certificate: the grid maxima that depend only on
/// the plant matrices and the grid, not on the Lyapunov parameters.
#[derive(Debug, Clone)]
pub struct PairGeometry {
    pub p: ModeId,
    pub q: ModeId,
    pub h_pq: Mat,
    pub delta_bar: Vec<f64>,
    pub gamma_prime_bar: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub beta_bar: Vec<f64>,
}

/// Sweeps the switch position `tau` over the closed uniform grid and records
/// the maxima of the four switch-transition coefficients for every detection
/// delay `k = 1..=eta_p`.
pub fn pair_geometry(
    sys: &SwitchedSystem,
    p_id: ModeId,
    q_id: ModeId,
    eta_p: usize,
    grid_points: u32,
    safety_factor: f64,
) -> Result<PairGeometry, CertifyError> {
    if p_id == q_id {
        return Err(CertifyError::SamePair(p_id));
    }
    if grid_points < 2 {
        return Err(CertifyError::BadGrid(grid_points));
    }
    if !(safety_factor.is_finite() && safety_factor >= 1.0) {
        return Err(CertifyError::BadSafetyFactor(safety_factor));
    }
    let mp = sys.mode(p_id)?;
    let mq = sys.mode(q_id)?;
    let tau_s = sys.tau_s();
    let sqrt_n = (sys.n() as f64).sqrt();
    let acl = mp.a_cl();
    let h_pq = (&mq.a - &mp.a) + (&mq.b - &mp.b) * &mp.k;
    let bq_kp = &mq.b * &mp.k;
    let bp_kp = &mp.b * &mp.k;

    let mut delta_bar = Vec::with_capacity(eta_p);
    let mut gamma_prime_bar = Vec::with_capacity(eta_p);
    let mut alpha_bar = Vec::with_capacity(eta_p);
    let mut beta_bar = Vec::with_capacity(eta_p);
    for k in 1..=eta_p {
        let offset = (k - 1) as f64 * tau_s;
        let prop = numerics::mat_exp(&acl, offset)?;
        let (mut d, mut gp, mut a, mut b) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..=grid_points {
            let tau = tau_s * i as f64 / grid_points as f64;
            let exp_aq = numerics::mat_exp(&mq.a, tau_s - tau)?;
            let m2 = numerics::shifted_cross_gramian(&mq.a, &bq_kp, &acl, tau, tau_s)? * &prop;
            let dterm = numerics::shifted_cross_gramian(&mq.a, &h_pq, &acl, tau, tau_s)? * &prop;
            d = d.max(numerics::op_norm_inf(&dterm));
            let gpterm = &exp_aq * numerics::mat_exp(&mp.a, offset + tau)?;
            gp = gp.max(numerics::op_norm_inf(&gpterm));
            let aterm = &exp_aq * numerics::mat_exp(&acl, offset + tau)? + &m2;
            a = a.max(numerics::op_norm_2(&aterm));
            let gram = numerics::cross_gramian(&acl, &bp_kp, &mp.a, offset + tau)?;
            let bterm = &exp_aq * gram - &m2;
            b = b.max(numerics::op_norm_2(&bterm));
        }
        delta_bar.push(d * safety_factor);
        gamma_prime_bar.push(gp * safety_factor);
        alpha_bar.push(a * safety_factor);
        beta_bar.push(sqrt_n * b * safety_factor);
    }
    Ok(PairGeometry {
        p: p_id,
        q: q_id,
        h_pq,
        delta_bar,
        gamma_prime_bar,
        alpha_bar,
        beta_bar,
    })
}

/// Switch growth rate for one detection delay:
/// `max{ 2(lmax(P_q) a^2 + rho_q d^2)/lmin(P_p), 2(lmax(P_q) b^2 + rho_q g^2)/rho_p }`.
#[allow(clippy::too_many_arguments)]
pub fn nu_bar_value(
    lambda_max_q: f64,
    rho_q: f64,
    lambda_min_p: f64,
    rho_p: f64,
    delta: f64,
    gamma: f64,
    alpha: f64,
    beta: f64,
) -> f64 {
    let state_term = 2.0 * (lambda_max_q * alpha * alpha + rho_q * delta * delta) / lambda_min_p;
    let bound_term = 2.0 * (lambda_max_q * beta * beta + rho_q * gamma * gamma) / rho_p;
    state_term.max(bound_term)
}

/// Couples a pair geometry with the two mode certificates into a full pair
/// certificate (adds `gamma_bar = delta_bar + gamma_prime_bar` and `nu_bar`).
pub fn pair_cert(geom: &PairGeometry, cert_p: &ModeCert, cert_q: &ModeCert) -> PairCert {
    let eta_p = geom.delta_bar.len();
    let mut gamma_bar = Vec::with_capacity(eta_p);
    let mut nu_bar = Vec::with_capacity(eta_p);
    for k in 0..eta_p {
        let g = geom.delta_bar[k] + geom.gamma_prime_bar[k];
        gamma_bar.push(g);
        nu_bar.push(nu_bar_value(
            cert_q.lambda_max_p,
            cert_q.rho_p,
            cert_p.lambda_min_p,
            cert_p.rho_p,
            geom.delta_bar[k],
            g,
            geom.alpha_bar[k],
            geom.beta_bar[k],
        ));
    }
    PairCert {
        p: geom.p,
        q: geom.q,
        h_pq: geom.h_pq.clone(),
        delta_bar: geom.delta_bar.clone(),
        gamma_prime_bar: geom.gamma_prime_bar.clone(),
        gamma_bar,
        alpha_bar: geom.alpha_bar.clone(),
        beta_bar: geom.beta_bar.clone(),
        nu_bar,
    }
}

/// `nu = max_p nu_p` and `nu_bar = max_{p != q} max_k nu_bar_{p,q}(k)`;
/// `nu_bar` is absent for single-mode systems (no switches possible).
pub fn global_rates(modes: &[ModeCert], pairs: &[PairCert]) -> (f64, Option<f64>) {
    let nu = modes.iter().map(|m| m.nu_p).fold(0.0, f64::max);
    let nu_bar = pairs
        .iter()
        .flat_map(|p| p.nu_bar.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    (nu, if pairs.is_empty() { None } else { Some(nu_bar) })
}

/// Minimum average dwell time `(1 + log(nu_bar)/log(1/nu)) * eta * tau_s`;
/// when `nu_bar <= 1` (or absent) the zoom-out floor `eta * tau_s` binds.
pub fn min_adt(nu: f64, nu_bar: Option<f64>, eta: usize, tau_s: f64) -> Result<f64, CertifyError> {
    if nu >= 1.0 {
        return Err(CertifyError::InfeasibleNu(nu));
    }
    let floor = eta as f64 * tau_s;
    match nu_bar {
        Some(nb) if nb > 1.0 => Ok((1.0 + nb.ln() / (1.0 / nu).ln()) * floor),
        _ => Ok(floor),
    }
}

/// Smallest integer `m` strictly greater than
/// `(tau_a / (tau_a - tau_0)) * (N0 - tau_0 / tau_a)` with `tau_0 = eta tau_s`:
/// some window of length `tau_0` within any span of `(m-1) tau_0` is
/// switch-free.
pub fn zoom_out_window_count(
    adt: &AdtParams,
    eta: usize,
    tau_s: f64,
) -> Result<u32, CertifyError> {
    let tau0 = eta as f64 * tau_s;
    if adt.tau_a <= tau0 {
        return Err(CertifyError::ZoomOutAdt {
            tau_a: adt.tau_a,
            floor: tau0,
        });
    }
    let bound = adt.tau_a / (adt.tau_a - tau0) * (adt.n0 as f64 - tau0 / adt.tau_a);
    // Strictly-greater with a dust tolerance for bounds that are exact
    // integers up to rounding (e.g. the N0 = 1 cancellation to 1).
    let m = (bound + 1e-9 * bound.abs().max(1.0)).floor() + 1.0;
    Ok(m as u32)
}

/// Options for [`certify`].
#[derive(Debug, Clone)]
pub struct CertifyOptions {
    pub n_quant: u32,
    pub grid_points: u32,
    pub safety_factor: f64,
    /// Per-mode `(Q, kappa, rho)` overrides; modes without an entry use the
    /// defaults.
    pub mode_params: Vec<(ModeId, ModeParams)>,
}

impl CertifyOptions {
    pub fn new(n_quant: u32) -> Self {
        Self {
            n_quant,
            grid_points: 1024,
            safety_factor: 1.0,
            mode_params: Vec::new(),
        }
    }

    fn params_for(&self, id: ModeId) -> ModeParams {
        self.mode_params
            .iter()
            .find(|(m, _)| *m == id)
            .map(|(_, p)| p.clone())
            .unwrap_or_default()
    }
}

/// Runs the full certification: per-mode certificates, all ordered pair
/// certificates, global rates and the minimum average dwell time.
pub fn certify(sys: &SwitchedSystem, opts: &CertifyOptions) -> Result<Certificate, CertifyError> {
    let geoms = pair_geometries(sys, opts)?;
    certify_with_geometry(sys, opts, &geoms)
}

/// Precomputes the grid maxima for every ordered pair. These do not depend
/// on `N`, `Q`, `kappa` or `rho`, so sweeps over those parameters can reuse
/// them.
pub fn pair_geometries(
    sys: &SwitchedSystem,
    opts: &CertifyOptions,
) -> Result<Vec<PairGeometry>, CertifyError> {
    let mut geoms = Vec::new();
    for mp in sys.modes() {
        let eta_p = model::eta_of_mode(mp, sys.tau_s())?;
        for mq in sys.modes() {
            if mp.id == mq.id {
                continue;
            }
            geoms.push(pair_geometry(
                sys,
                mp.id,
                mq.id,
                eta_p,
                opts.grid_points,
                opts.safety_factor,
            )?);
        }
    }
    Ok(geoms)
}

/// Certification with precomputed pair geometry (see [`pair_geometries`]).
pub fn certify_with_geometry(
    sys: &SwitchedSystem,
    opts: &CertifyOptions,
    geoms: &[PairGeometry],
) -> Result<Certificate, CertifyError> {
    let mut modes = Vec::new();
    for mode in sys.modes() {
        let params = opts.params_for(mode.id);
        modes.push(mode_cert(mode, sys.tau_s(), &params, opts.n_quant)?);
    }
    let mut pairs = Vec::new();
    for geom in geoms {
        let cp = modes
            .iter()
            .find(|m| m.mode == geom.p)
            .ok_or(CertifyError::MissingModeCert(geom.p))?;
        let cq = modes
            .iter()
            .find(|m| m.mode == geom.q)
            .ok_or(CertifyError::MissingModeCert(geom.q))?;
        pairs.push(pair_cert(geom, cp, cq));
    }
    let eta = modes.iter().map(|m| m.eta_p).max().unwrap_or(1);
    let (nu, nu_bar) = global_rates(&modes, &pairs);
    let tau_a_min = min_adt(nu, nu_bar, eta, sys.tau_s())?;
    Ok(Certificate {
        modes,
        pairs,
        eta,
        nu,
        nu_bar,
        tau_a_min,
        n_quant: opts.n_quant,
        grid_points: opts.grid_points,
    })
}
