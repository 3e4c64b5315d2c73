//! Wire format for knowledge exchanged between nodes.
//!
//! Every packet carries only aggregate quantities — U·S products, solver
//! partials, solved weights — whose dimensions are functions of layer widths
//! alone. Nothing in a payload scales with the local sample count except
//! scalar counters, and the codec enforces that structurally on both encode
//! and decode.

use serde::{Deserialize, Serialize};

use super::FederationError;
use crate::linalg::Matrix;
use crate::model::{Architecture, DaefModel};
use crate::rolann::RolannPartial;

pub const PACKET_FORMAT_VERSION: u32 = 1;

/// Per-node thin-SVD summary of a local data block: the U·diag(S) product
/// and how many samples produced it. The sample-side factor is never
/// computed, so the block cannot be reconstructed from this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderStats {
    pub us_product: Matrix,
    pub sample_count: usize,
}

/// Envelope for everything that crosses the broker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgePacket {
    pub format_version: u32,
    pub session_id: String,
    pub node_id: String,
    /// Strictly increasing per sender; receivers drop repeats, which makes
    /// at-least-once delivery safe.
    pub sequence: u64,
    pub body: PacketBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PacketBody {
    /// Session opening: the architecture (seed included) every node must use.
    Init { architecture: Architecture },
    /// A node's local encoder contribution.
    EncoderStats {
        us_product: Matrix,
        sample_count: usize,
    },
    /// A node's per-neuron solver partials for one decoder layer. Empty when
    /// the node holds no samples.
    LayerPartials {
        layer_index: usize,
        partials: Vec<RolannPartial>,
    },
    /// Aggregator results sent back to the nodes.
    ModelBroadcast { payload: BroadcastPayload },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum BroadcastPayload {
    /// Merged encoder: weights plus the truncated factorization.
    Encoder {
        weights: Matrix,
        u: Matrix,
        s: Vec<f64>,
    },
    /// One solved decoder layer.
    Layer {
        layer_index: usize,
        weights: Matrix,
        bias: Vec<f64>,
    },
    /// The assembled global model (same document as the model file format).
    Model { model: Box<DaefModel> },
}

impl KnowledgePacket {
    pub fn new(session_id: &str, node_id: &str, sequence: u64, body: PacketBody) -> Self {
        Self {
            format_version: PACKET_FORMAT_VERSION,
            session_id: session_id.to_string(),
            node_id: node_id.to_string(),
            sequence,
            body,
        }
    }
}

fn check_factor_shape(context: &str, u: &Matrix, s_len: usize) -> Result<(), FederationError> {
    if u.cols() > u.rows() {
        return Err(FederationError::Codec(format!(
            "{context}: factor has {} columns for {} rows; width may not exceed the feature dimension",
            u.cols(),
            u.rows()
        )));
    }
    if u.cols() != s_len {
        return Err(FederationError::Codec(format!(
            "{context}: {} singular values for {} columns",
            s_len,
            u.cols()
        )));
    }
    Ok(())
}

fn check_partial(context: &str, p: &RolannPartial) -> Result<(), FederationError> {
    check_factor_shape(context, &p.u, p.s.len())?;
    if p.m.len() != p.u.rows() {
        return Err(FederationError::Codec(format!(
            "{context}: accumulator length {} does not match factor rows {}",
            p.m.len(),
            p.u.rows()
        )));
    }
    Ok(())
}

/// Structural schema check: versions match and no payload dimension can grow
/// with the sample count.
pub fn validate_packet(packet: &KnowledgePacket) -> Result<(), FederationError> {
    if packet.format_version != PACKET_FORMAT_VERSION {
        return Err(FederationError::Codec(format!(
            "unsupported packet format version {}",
            packet.format_version
        )));
    }
    match &packet.body {
        PacketBody::Init { architecture } => architecture
            .validate()
            .map_err(|e| FederationError::Codec(e.to_string())),
        PacketBody::EncoderStats { us_product, .. } => {
            check_factor_shape("encoder stats", us_product, us_product.cols())
        }
        PacketBody::LayerPartials {
            layer_index,
            partials,
        } => {
            for (j, p) in partials.iter().enumerate() {
                check_partial(&format!("layer {layer_index} partial {j}"), p)?;
            }
            Ok(())
        }
        PacketBody::ModelBroadcast { payload } => match payload {
            BroadcastPayload::Encoder { weights, u, s } => {
                check_factor_shape("encoder broadcast", u, s.len())?;
                check_factor_shape("encoder weights", weights, weights.cols())
            }
            BroadcastPayload::Layer { weights, bias, .. } => {
                if bias.len() != weights.cols() {
                    return Err(FederationError::Codec(format!(
                        "layer broadcast: bias length {} for {} outputs",
                        bias.len(),
                        weights.cols()
                    )));
                }
                Ok(())
            }
            BroadcastPayload::Model { .. } => Ok(()),
        },
    }
}

pub fn encode_packet(packet: &KnowledgePacket) -> Result<Vec<u8>, FederationError> {
    validate_packet(packet)?;
    serde_json::to_vec(packet).map_err(|e| FederationError::Codec(e.to_string()))
}

pub fn decode_packet(bytes: &[u8]) -> Result<KnowledgePacket, FederationError> {
    let packet: KnowledgePacket =
        serde_json::from_slice(bytes).map_err(|e| FederationError::Codec(e.to_string()))?;
    validate_packet(&packet)?;
    Ok(packet)
}
