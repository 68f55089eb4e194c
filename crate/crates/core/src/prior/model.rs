//! Encoder/decoder weights, normalization and persistence.

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

pub const PRIOR_SCHEMA: &str = "handsynth-prior/1";
pub const DEFAULT_LATENT_DIM: usize = 64;
pub const DEFAULT_HIDDEN_DIM: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// `y = x·W + b` with `W` stored `in×out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    /// `1×out`.
    pub bias: Array2<f64>,
    pub activation: Activation,
}

impl Linear {
    /// Uniform `±1/√in` for weight and bias.
    fn init(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize, activation: Activation) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((inputs, outputs), || rng.random_range(-bound..bound));
        let bias = Array2::from_shape_simple_fn((1, outputs), || rng.random_range(-bound..bound));
        Self {
            weight,
            bias,
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let y = x.dot(&self.weight) + &self.bias;
        match self.activation {
            Activation::Relu => y.mapv(|v| v.max(0.0)),
            Activation::None => y,
        }
    }
}

/// Root-centering followed by division by one global scale, so that zero
/// (the masked value) stays the root location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Normalization {
    pub root_joint: usize,
    /// Meters per normalized unit.
    pub scale: f64,
}

impl Normalization {
    /// Scale chosen as the RMS root-relative coordinate over `poses`.
    pub fn fit(poses: &[Array2<f64>], root_joint: usize) -> Result<Self> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for p in poses {
            let c = root_center(p, root_joint);
            sum += c.iter().map(|v| v * v).sum::<f64>();
            count += c.len();
        }
        let scale = (sum / count.max(1) as f64).sqrt();
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Degenerate("poses have no spread around the root joint".into()));
        }
        Ok(Self { root_joint, scale })
    }

    /// `J×3` pose to a normalized `1×3J` row.
    pub fn encode(&self, pose: &Array2<f64>) -> Array2<f64> {
        let c = root_center(pose, self.root_joint) / self.scale;
        let n = c.len();
        c.into_shape_with_order((1, n)).expect("contiguous")
    }

    /// Normalized `1×3J` row back to a root-centered `J×3` pose in meters.
    pub fn decode(&self, flat: &Array2<f64>) -> Array2<f64> {
        let j = flat.len() / 3;
        let rows: Vec<f64> = flat.iter().map(|v| v * self.scale).collect();
        Array2::from_shape_vec((j, 3), rows).expect("3J values")
    }
}

pub fn root_center(pose: &Array2<f64>, root_joint: usize) -> Array2<f64> {
    let root = pose.row(root_joint).to_owned();
    pose - &root.insert_axis(Axis(0))
}

/// Trained VAE over root-centered 3D poses.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel {
    pub num_joints: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub normalization: Normalization,
    /// `3J→h` ReLU, two `h→h` ReLU, `h→h`, then the `h→2·latent` head.
    pub encoder: Vec<Linear>,
    /// `latent→h`, five `h→h` ReLU, `h→h`, then the `h→3J` head.
    pub decoder: Vec<Linear>,
}

impl PriorModel {
    pub fn new(
        num_joints: usize,
        latent_dim: usize,
        hidden_dim: usize,
        normalization: Normalization,
        seed: u64,
    ) -> Result<Self> {
        if num_joints == 0 || latent_dim == 0 || hidden_dim == 0 {
            return Err(Error::InvalidInput("prior dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = 3 * num_joints;
        let (h, l) = (hidden_dim, latent_dim);
        use Activation::{None as Id, Relu};
        let enc_shapes = [(input, h, Relu), (h, h, Relu), (h, h, Relu), (h, h, Id), (h, 2 * l, Id)];
        let mut dec_shapes = vec![(l, h, Id)];
        dec_shapes.extend([(h, h, Relu); 5]);
        dec_shapes.extend([(h, h, Id), (h, input, Id)]);
        let encoder = enc_shapes
            .iter()
            .map(|&(i, o, a)| Linear::init(&mut rng, i, o, a))
            .collect();
        let decoder = dec_shapes
            .iter()
            .map(|&(i, o, a)| Linear::init(&mut rng, i, o, a))
            .collect();
        let model = Self {
            num_joints,
            latent_dim,
            hidden_dim,
            normalization,
            encoder,
            decoder,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        3 * self.num_joints
    }

    pub fn validate(&self) -> Result<()> {
        let chain = |layers: &[Linear], input: usize, output: usize, name: &str| -> Result<()> {
            let mut width = input;
            for (i, layer) in layers.iter().enumerate() {
                if layer.inputs() != width || layer.bias.dim() != (1, layer.outputs()) {
                    return Err(Error::Schema(format!(
                        "{name} layer {i}: weight {:?} and bias {:?} do not follow width {width}",
                        layer.weight.dim(),
                        layer.bias.dim()
                    )));
                }
                width = layer.outputs();
            }
            if width != output {
                return Err(Error::Schema(format!(
                    "{name} ends at width {width}, expected {output}"
                )));
            }
            Ok(())
        };
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return Err(Error::Schema("encoder and decoder need at least one layer".into()));
        }
        chain(&self.encoder, self.input_dim(), 2 * self.latent_dim, "encoder")?;
        chain(&self.decoder, self.latent_dim, self.input_dim(), "decoder")?;
        if !(self.normalization.scale.is_finite() && self.normalization.scale > 0.0)
            || self.normalization.root_joint >= self.num_joints
        {
            return Err(Error::Schema(
                "normalization needs a positive scale and a valid root joint".into(),
            ));
        }
        Ok(())
    }

    pub fn layers(&self) -> impl Iterator<Item = &Linear> {
        self.encoder.iter().chain(&self.decoder)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Linear> {
        self.encoder.iter_mut().chain(self.decoder.iter_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Posterior mean and log-variance for normalized inputs (`B×3J`).
    pub fn encode(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let out = self.encoder.iter().fold(x.clone(), |h, layer| layer.forward(&h));
        let l = self.latent_dim;
        (
            out.slice(ndarray::s![.., ..l]).to_owned(),
            out.slice(ndarray::s![.., l..]).to_owned(),
        )
    }

    /// Normalized reconstructions (`B×3J`) from latents (`B×latent`).
    pub fn decode(&self, z: &Array2<f64>) -> Array2<f64> {
        self.decoder.iter().fold(z.clone(), |h, layer| layer.forward(&h))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&PriorDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PriorDocument = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct LayerDocument {
    name: String,
    inputs: usize,
    outputs: usize,
    activation: Activation,
    /// Row-major `inputs×outputs`.
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct PriorDocument {
    schema: String,
    num_joints: usize,
    latent_dim: usize,
    hidden_dim: usize,
    normalization: Normalization,
    encoder: Vec<LayerDocument>,
    decoder: Vec<LayerDocument>,
}

impl From<&PriorModel> for PriorDocument {
    fn from(m: &PriorModel) -> Self {
        let layers = |prefix: &str, ls: &[Linear]| {
            ls.iter()
                .enumerate()
                .map(|(i, l)| LayerDocument {
                    name: format!("{prefix}.{i}"),
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    activation: l.activation,
                    weight: l.weight.iter().copied().collect(),
                    bias: l.bias.iter().copied().collect(),
                })
                .collect()
        };
        Self {
            schema: PRIOR_SCHEMA.into(),
            num_joints: m.num_joints,
            latent_dim: m.latent_dim,
            hidden_dim: m.hidden_dim,
            normalization: m.normalization,
            encoder: layers("encoder", &m.encoder),
            decoder: layers("decoder", &m.decoder),
        }
    }
}

impl TryFrom<PriorDocument> for PriorModel {
    type Error = Error;

    fn try_from(doc: PriorDocument) -> Result<Self> {
        if doc.schema != PRIOR_SCHEMA {
            return Err(Error::Schema(format!(
                "prior schema {:?}, expected {PRIOR_SCHEMA:?}",
                doc.schema
            )));
        }
        let layers = |ls: Vec<LayerDocument>| -> Result<Vec<Linear>> {
            ls.into_iter()
                .map(|l| {
                    let weight = Array2::from_shape_vec((l.inputs, l.outputs), l.weight)
                        .map_err(|_| shape_err("prior layer weight", format!("{}x{}", l.inputs, l.outputs), &l.name))?;
                    let bias = Array2::from_shape_vec((1, l.outputs), l.bias)
                        .map_err(|_| shape_err("prior layer bias", l.outputs, &l.name))?;
                    Ok(Linear {
                        weight,
                        bias,
                        activation: l.activation,
                    })
                })
                .collect()
        };
        let model = PriorModel {
            num_joints: doc.num_joints,
            latent_dim: doc.latent_dim,
            hidden_dim: doc.hidden_dim,
            normalization: doc.normalization,
            encoder: layers(doc.encoder)?,
            decoder: layers(doc.decoder)?,
        };
        model.validate()?;
        Ok(model)
    }
}
