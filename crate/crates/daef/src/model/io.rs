//! Versioned JSON model files.
//!
//! Floats are written as shortest round-trip decimals, so `load(save(m))`
//! reproduces every matrix bitwise. The same document doubles as the model
//! payload of federation broadcasts.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::anomaly::FittedThreshold;
use crate::linalg::{Matrix, SvdThin};
use crate::model::{Architecture, DaefModel};
use crate::rolann::RolannPartial;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelIoError {
    #[error("unsupported model format version {found} (expected {MODEL_FORMAT_VERSION})")]
    VersionMismatch { found: i64 },
    #[error("model document violates the schema: {0}")]
    SchemaError(String),
    #[error("corrupt model payload: {0}")]
    CorruptPayload(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format_version: u32,
    architecture: Architecture,
    encoder: EncoderDoc,
    decoder: Vec<DecoderLayerDoc>,
    threshold: Option<FittedThreshold>,
}

#[derive(Serialize, Deserialize)]
struct EncoderDoc {
    weights: Matrix,
    u: Matrix,
    s: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DecoderLayerDoc {
    weights: Matrix,
    bias: Vec<f64>,
    knowledge: Vec<RolannPartial>,
}

impl From<&DaefModel> for ModelDoc {
    fn from(model: &DaefModel) -> Self {
        ModelDoc {
            format_version: MODEL_FORMAT_VERSION,
            architecture: model.arch.clone(),
            encoder: EncoderDoc {
                weights: model.encoder_weights.clone(),
                u: model.encoder_knowledge.u.clone(),
                s: model.encoder_knowledge.s.clone(),
            },
            decoder: model
                .decoder_weights
                .iter()
                .zip(&model.decoder_biases)
                .zip(&model.layer_knowledge)
                .map(|((weights, bias), knowledge)| DecoderLayerDoc {
                    weights: weights.clone(),
                    bias: bias.clone(),
                    knowledge: knowledge.clone(),
                })
                .collect(),
            threshold: model.threshold.clone(),
        }
    }
}

impl ModelDoc {
    fn into_model(self) -> Result<DaefModel, ModelIoError> {
        let schema = |msg: String| ModelIoError::SchemaError(msg);
        let arch = self.architecture;
        arch.validate().map_err(|e| schema(e.to_string()))?;
        let sizes = &arch.layer_sizes;
        let (m0, m1) = (sizes[0], sizes[1]);
        if self.encoder.weights.rows() != m0 || self.encoder.weights.cols() != m1 {
            return Err(schema(format!(
                "encoder weights are {}x{}, architecture says {}x{}",
                self.encoder.weights.rows(),
                self.encoder.weights.cols(),
                m0,
                m1
            )));
        }
        if self.encoder.u.rows() != m0 || self.encoder.u.cols() != self.encoder.s.len() {
            return Err(schema("encoder factorization shape inconsistent".into()));
        }
        let layers = arch.decoder_layer_count();
        if self.decoder.len() != layers {
            return Err(schema(format!(
                "{} decoder layers in document, architecture says {layers}",
                self.decoder.len()
            )));
        }
        let mut decoder_weights = Vec::with_capacity(layers);
        let mut decoder_biases = Vec::with_capacity(layers);
        let mut layer_knowledge = Vec::with_capacity(layers);
        for (d, layer) in self.decoder.into_iter().enumerate() {
            let (in_dim, out_dim) = (sizes[d + 1], sizes[d + 2]);
            if layer.weights.rows() != in_dim || layer.weights.cols() != out_dim {
                return Err(schema(format!(
                    "decoder layer {d} weights are {}x{}, expected {}x{}",
                    layer.weights.rows(),
                    layer.weights.cols(),
                    in_dim,
                    out_dim
                )));
            }
            if layer.bias.len() != out_dim {
                return Err(schema(format!(
                    "decoder layer {d} bias has length {}, expected {out_dim}",
                    layer.bias.len()
                )));
            }
            if !layer.bias.iter().all(|v| v.is_finite()) {
                return Err(schema(format!("decoder layer {d} bias not finite")));
            }
            let aug = if d + 1 < layers {
                out_dim + 1
            } else {
                in_dim + 1
            };
            for (j, p) in layer.knowledge.iter().enumerate() {
                if p.m.len() != aug || p.u.rows() != aug || p.u.cols() != p.s.len() {
                    return Err(schema(format!(
                        "decoder layer {d} knowledge {j} shape inconsistent"
                    )));
                }
            }
            decoder_weights.push(layer.weights);
            decoder_biases.push(layer.bias);
            layer_knowledge.push(layer.knowledge);
        }
        Ok(DaefModel {
            arch,
            encoder_weights: self.encoder.weights,
            decoder_weights,
            decoder_biases,
            encoder_knowledge: SvdThin {
                u: self.encoder.u,
                s: self.encoder.s,
            },
            layer_knowledge,
            threshold: self.threshold,
        })
    }
}

pub fn save<W: Write>(model: &DaefModel, mut sink: W) -> Result<(), ModelIoError> {
    let doc = ModelDoc::from(model);
    serde_json::to_writer_pretty(&mut sink, &doc)
        .map_err(|e| ModelIoError::CorruptPayload(e.to_string()))?;
    sink.write_all(b"\n")?;
    Ok(())
}

pub fn load<R: Read>(mut source: R) -> Result<DaefModel, ModelIoError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ModelIoError::CorruptPayload(e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_i64())
        .ok_or_else(|| ModelIoError::SchemaError("missing format_version".into()))?;
    if found != MODEL_FORMAT_VERSION as i64 {
        return Err(ModelIoError::VersionMismatch { found });
    }
    let doc: ModelDoc =
        serde_json::from_value(value).map_err(|e| ModelIoError::SchemaError(e.to_string()))?;
    doc.into_model()
}

// Model broadcasts carry the same document the file format uses.
impl Serialize for DaefModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ModelDoc::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DaefModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = ModelDoc::deserialize(deserializer)?;
        doc.into_model().map_err(serde::de::Error::custom)
    }
}
