//! The four vision brains: architecture manifest, preprocessing, forward pass,
//! output scaling and weight files.

mod preprocess;
mod weights;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub use preprocess::{bilinear_resize, preprocess, PreprocessSpec};
pub use weights::{
    load_weights, read_weights, save_weights, write_weights, ModelWeights, WEIGHTS_VERSION,
};

use crate::error::{Error, Result};
use crate::pilots::{CommandLimits, DriveCommand};
use crate::tensor_nn::{LayerSpec, Network, ParamSet, Tensor};

/// Source text of the architecture manifest.
pub const MANIFEST: &str = include_str!("architectures.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    #[serde(rename = "pilotnet")]
    PilotNet,
    #[serde(rename = "deepest_lstm_tiny_pilotnet")]
    DeepestLstmTinyPilotNet,
    #[serde(rename = "pilotnet_x3")]
    PilotNetX3,
    #[serde(rename = "memdccp")]
    MemDccp,
}

impl ModelName {
    pub const ALL: [ModelName; 4] = [
        ModelName::PilotNet,
        ModelName::DeepestLstmTinyPilotNet,
        ModelName::PilotNetX3,
        ModelName::MemDccp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::PilotNet => "pilotnet",
            ModelName::DeepestLstmTinyPilotNet => "deepest_lstm_tiny_pilotnet",
            ModelName::PilotNetX3 => "pilotnet_x3",
            ModelName::MemDccp => "memdccp",
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pilotnet" => Ok(ModelName::PilotNet),
            "deepest_lstm_tiny_pilotnet" | "deepest_lstm_tiny" => {
                Ok(ModelName::DeepestLstmTinyPilotNet)
            }
            "pilotnet_x3" => Ok(ModelName::PilotNetX3),
            "memdccp" => Ok(ModelName::MemDccp),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    SingleFrame,
    #[serde(rename = "sequence_of_3")]
    SequenceOf3,
}

impl InputKind {
    pub fn frames(self) -> usize {
        match self {
            InputKind::SingleFrame => 1,
            InputKind::SequenceOf3 => 3,
        }
    }
}

/// Full-size networks or the reduced ones trained on desk-scale renders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Full,
    #[default]
    Desk,
}

#[derive(Deserialize)]
struct ManifestArch {
    input: [usize; 3],
    layers: Vec<LayerSpec>,
}

#[derive(Deserialize)]
struct ManifestEntry {
    input_kind: InputKind,
    full: ManifestArch,
    desk: ManifestArch,
}

fn manifest() -> &'static BTreeMap<String, ManifestEntry> {
    static PARSED: OnceLock<BTreeMap<String, ManifestEntry>> = OnceLock::new();
    PARSED.get_or_init(|| toml::from_str(MANIFEST).expect("architecture manifest is valid TOML"))
}

/// A brain's architecture: layer list, input contract and the validated network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub name: ModelName,
    pub scale: Scale,
    pub input_kind: InputKind,
    /// Per-frame `(H, W, C)` after preprocessing.
    pub input_shape: [usize; 3],
    network: Network,
}

impl ModelSpec {
    /// Identifier recorded in weight files, e.g. `memdccp` or `memdccp-desk`.
    pub fn id(&self) -> String {
        match self.scale {
            Scale::Full => self.name.as_str().to_string(),
            Scale::Desk => format!("{}-desk", self.name),
        }
    }

    pub fn layers(&self) -> &[LayerSpec] {
        self.network.layers()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn count_layers(&self, kind: &str) -> usize {
        self.layers().iter().filter(|l| l.kind() == kind).count()
    }

    pub fn init_weights(&self, seed: u64) -> ModelWeights {
        ModelWeights {
            spec_id: self.id(),
            params: self.network.init_params(seed),
        }
    }

    pub fn zero_weights(&self) -> ModelWeights {
        ModelWeights {
            spec_id: self.id(),
            params: self.network.zero_params(),
        }
    }

    pub fn preprocess_spec(&self, horizon_row: usize) -> PreprocessSpec {
        PreprocessSpec {
            horizon_row,
            height: self.input_shape[0],
            width: self.input_shape[1],
        }
    }

    /// Human-readable listing of every layer with its hyperparameters and output shape.
    pub fn describe(&self) -> String {
        let mut out = format!(
            "{} ({:?}, {:?}, input {:?}, {} parameters)\n",
            self.id(),
            self.scale,
            self.input_kind,
            self.input_shape,
            param_count(self)
        );
        let shapes = self.network.activation_shapes();
        for (i, layer) in self.layers().iter().enumerate() {
            let hyper = toml::to_string(layer)
                .unwrap_or_default()
                .replace('\n', " ");
            out.push_str(&format!(
                "  {i:>2} {:<16} -> {:?}  {}\n",
                layer.kind(),
                shapes[i + 1],
                hyper.trim()
            ));
        }
        out
    }
}

/// Full-size architecture.
pub fn build_model(name: ModelName) -> ModelSpec {
    build_model_at(name, Scale::Full)
}

pub fn build_model_at(name: ModelName, scale: Scale) -> ModelSpec {
    let entry = manifest()
        .get(name.as_str())
        .unwrap_or_else(|| panic!("manifest has no entry for {name}"));
    let arch = match scale {
        Scale::Full => &entry.full,
        Scale::Desk => &entry.desk,
    };
    let network_input: Vec<usize> = match entry.input_kind {
        InputKind::SingleFrame => arch.input.to_vec(),
        InputKind::SequenceOf3 => [3].into_iter().chain(arch.input).collect(),
    };
    let network = Network::new(&network_input, arch.layers.clone())
        .unwrap_or_else(|e| panic!("manifest entry {name} ({scale:?}) is inconsistent: {e}"));
    ModelSpec {
        name,
        scale,
        input_kind: entry.input_kind,
        input_shape: arch.input,
        network,
    }
}

/// Looks a model up by name string.
pub fn build_model_named(name: &str, scale: Scale) -> Result<ModelSpec> {
    Ok(build_model_at(name.parse()?, scale))
}

pub fn param_count(spec: &ModelSpec) -> usize {
    spec.network.param_count()
}

/// Assembles the network input from preprocessed frames ordered oldest to newest.
pub fn brain_input(spec: &ModelSpec, frames: &[Tensor]) -> Result<Tensor> {
    let want = spec.input_kind.frames();
    if frames.len() != want {
        return Err(Error::InvalidArgument(format!(
            "{} takes {want} frame(s) ({:?}), got {}",
            spec.name,
            spec.input_kind,
            frames.len()
        )));
    }
    for f in frames {
        if f.shape() != spec.input_shape {
            return Err(Error::shape(
                "forward_brain",
                format!("frame {:?}, expected {:?}", f.shape(), spec.input_shape),
            ));
        }
    }
    match spec.input_kind {
        InputKind::SingleFrame => Ok(frames[0].clone()),
        InputKind::SequenceOf3 => Tensor::stack(frames),
    }
}

/// `(v_norm, w_norm)` in `[0,1] x [-1,1]`.
pub fn forward_brain(
    spec: &ModelSpec,
    weights: &ModelWeights,
    frames: &[Tensor],
) -> Result<(f64, f64)> {
    let x = brain_input(spec, frames)?;
    forward_params(spec, &weights.params, &x)
}

pub(crate) fn forward_params(
    spec: &ModelSpec,
    params: &ParamSet,
    x: &Tensor,
) -> Result<(f64, f64)> {
    let y = spec.network.forward(params, x)?;
    let d = y.data();
    Ok((d[0].clamp(0.0, 1.0), d[1].clamp(-1.0, 1.0)))
}

pub fn denormalize(v_norm: f64, w_norm: f64, limits: CommandLimits) -> DriveCommand {
    DriveCommand {
        v: v_norm * limits.v_max,
        w: w_norm * limits.w_max,
    }
}

pub fn normalize(cmd: DriveCommand, limits: CommandLimits) -> (f64, f64) {
    (cmd.v / limits.v_max, cmd.w / limits.w_max)
}
