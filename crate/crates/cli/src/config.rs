//! JSON run configuration: schema types (unknown keys rejected) and
//! conversion into the library's domain types.

use dwellcert::certify::{CertifyOptions, ModeParams};
use dwellcert::model::{AdtParams, ModeDef, ModeId, SwitchEvent, SwitchingSignal};
use dwellcert::numerics::{mat_rows, Mat};
use dwellcert::{QuantizerConfig, SwitchedSystem};
use serde::Deserialize;

#[derive(Debug)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error at {}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(path: &str, message: impl ToString) -> ConfigError {
    ConfigError {
        path: path.to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub quantizer: QuantizerBlock,
    #[serde(default)]
    pub certification: Option<CertificationBlock>,
    #[serde(default)]
    pub signal: Option<SignalBlock>,
    #[serde(default)]
    pub simulation: Option<SimulationBlock>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub tau_s: f64,
    pub modes: Vec<ModeBlock>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeBlock {
    pub id: u32,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerBlock {
    #[serde(rename = "N")]
    pub n: u32,
    pub mu0: f64,
    pub chi: f64,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CertificationBlock {
    #[serde(default)]
    pub grid_points: Option<u32>,
    #[serde(default)]
    pub safety_factor: Option<f64>,
    #[serde(default)]
    pub modes: Vec<ModeParamsBlock>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeParamsBlock {
    pub mode: u32,
    #[serde(default, rename = "Q")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalBlock {
    #[serde(default)]
    pub sigma0: Option<u32>,
    #[serde(default)]
    pub events: Option<Vec<EventBlock>>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default, rename = "N0")]
    pub n0: Option<u32>,
    #[serde(default)]
    pub tau_a: Option<f64>,
    #[serde(default)]
    pub generator: Option<GeneratorBlock>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventBlock {
    pub t: f64,
    pub mode: u32,
}

#[derive(Debug, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct GeneratorBlock {
    pub seed: u64,
    pub dwell_min: f64,
    #[serde(rename = "N0")]
    pub n0: u32,
    pub tau_a: f64,
    pub horizon: f64,
    #[serde(default)]
    pub sigma0: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    pub x0: Vec<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub record_intersample: bool,
    #[serde(default)]
    pub substep: Option<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| err("<root>", e))
    }

    pub fn build_system(&self) -> Result<SwitchedSystem, ConfigError> {
        let mut modes = Vec::new();
        for (i, mb) in self.system.modes.iter().enumerate() {
            let path = |field: &str| format!("system.modes[{i}].{field}");
            let mode = ModeDef {
                id: ModeId(mb.id),
                a: parse_mat(&mb.a, &path("A"))?,
                b: parse_mat(&mb.b, &path("B"))?,
                c: parse_mat(&mb.c, &path("C"))?,
                k: parse_mat(&mb.k, &path("K"))?,
            };
            modes.push(mode);
        }
        SwitchedSystem::new(modes, self.system.tau_s).map_err(|e| err("system", e))
    }

    pub fn build_quantizer(&self) -> Result<QuantizerConfig, ConfigError> {
        QuantizerConfig::new(self.quantizer.n, self.quantizer.mu0, self.quantizer.chi)
            .map_err(|e| err("quantizer", e))
    }

    pub fn build_certify_options(&self, grid_override: Option<u32>) -> Result<CertifyOptions, ConfigError> {
        let mut opts = CertifyOptions::new(self.quantizer.n);
        if let Some(block) = &self.certification {
            if let Some(g) = block.grid_points {
                opts.grid_points = g;
            }
            if let Some(s) = block.safety_factor {
                opts.safety_factor = s;
            }
            for (i, mp) in block.modes.iter().enumerate() {
                let q = match &mp.q {
                    Some(rows) => Some(parse_mat(rows, &format!("certification.modes[{i}].Q"))?),
                    None => None,
                };
                opts.mode_params.push((
                    ModeId(mp.mode),
                    ModeParams {
                        q,
                        kappa: mp.kappa,
                        rho: mp.rho,
                    },
                ));
            }
        }
        if let Some(g) = grid_override {
            opts.grid_points = g;
        }
        Ok(opts)
    }

    /// Builds the signal (explicit or generated) plus its declared ADT
    /// parameters.
    pub fn build_signal(
        &self,
        sys: &SwitchedSystem,
        seed_override: Option<u64>,
    ) -> Result<(SwitchingSignal, AdtParams), ConfigError> {
        let block = self
            .signal
            .as_ref()
            .ok_or_else(|| err("signal", "missing signal block"))?;
        match (&block.events, &block.generator) {
            (Some(_), Some(_)) => Err(err(
                "signal",
                "give either explicit events or a generator, not both",
            )),
            (Some(events), None) => {
                let sigma0 = block
                    .sigma0
                    .ok_or_else(|| err("signal.sigma0", "required with explicit events"))?;
                let horizon = block
                    .horizon
                    .ok_or_else(|| err("signal.horizon", "required with explicit events"))?;
                let n0 = block
                    .n0
                    .ok_or_else(|| err("signal.N0", "required with explicit events"))?;
                let tau_a = block
                    .tau_a
                    .ok_or_else(|| err("signal.tau_a", "required with explicit events"))?;
                let evs = events
                    .iter()
                    .map(|e| SwitchEvent {
                        time: e.t,
                        mode: ModeId(e.mode),
                    })
                    .collect();
                let signal = SwitchingSignal::new(ModeId(sigma0), evs, horizon)
                    .map_err(|e| err("signal.events", e))?;
                let adt = AdtParams::new(n0, tau_a).map_err(|e| err("signal", e))?;
                Ok((signal, adt))
            }
            (None, Some(generator)) => {
                let adt = AdtParams::new(generator.n0, generator.tau_a)
                    .map_err(|e| err("signal.generator", e))?;
                let seed = seed_override.unwrap_or(generator.seed);
                let signal = dwellcert::model::random_signal(
                    seed,
                    &adt,
                    generator.dwell_min,
                    generator.horizon,
                    &sys.mode_ids(),
                    generator.sigma0.map(ModeId),
                )
                .map_err(|e| err("signal.generator", e))?;
                Ok((signal, adt))
            }
            (None, None) => Err(err(
                "signal",
                "need either explicit events or a generator block",
            )),
        }
    }
}

fn parse_mat(rows: &[Vec<f64>], path: &str) -> Result<Mat, ConfigError> {
    mat_rows::from_rows(rows).map_err(|m| err(path, m))
}
