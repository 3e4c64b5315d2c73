//! Multi-node training over a simulated pub/sub broker.
//!
//! Two protocols:
//!
//! - **Layer-synchronous** ([`run_layer_sync`]): one round per layer. Nodes
//!   publish local encoder statistics, then per-layer solver partials; the
//!   aggregator merges and broadcasts solved weights before the next layer.
//!   Because both merges are exact, the global model matches centralized
//!   training on the concatenated data.
//! - **Post-hoc** ([`post_hoc_merge`], [`run_post_hoc`]): nodes train
//!   complete local models, exchange stored knowledge once, and re-solve.
//!   This is the one-shot scheme: merged encoder weights change the hidden
//!   representations the decoder partials were computed under, so the result
//!   is deterministic and well-formed but not equal to centralized training.
//!
//! Only aggregates cross the broker: U·S products, (M, U, S) partials, and
//! solved weights. Sample counts travel as scalars.

mod broker;
mod packet;
mod transport;

pub use broker::{topic_matches, Broker, Subscription};
pub use packet::{
    decode_packet, encode_packet, validate_packet, BroadcastPayload, EncoderStats, KnowledgePacket,
    PacketBody, PACKET_FORMAT_VERSION,
};
pub use transport::{read_frame, write_frame};

use std::time::{Duration, Instant};

use crate::linalg::{dsvd_merge, svd_thin, truncate, LinalgError, Matrix, SvdThin};
use crate::model::{self, Architecture, DaefModel, ModelError, ModelKnowledge};
use crate::rng::SplitMix64;
use crate::rolann::{self, Activation, RolannError, RolannPartial};

#[derive(Debug, thiserror::Error)]
pub enum FederationError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("payload of {size} bytes exceeds the {cap}-byte cap")]
    PayloadTooLarge { size: usize, cap: usize },
    #[error("node {node} timed out during {round}")]
    NodeTimeout { node: String, round: String },
    #[error("session aborted: {0}")]
    SessionAborted(String),
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("seed mismatch: local {local}, foreign {foreign}")]
    SeedMismatch { local: u64, foreign: u64 },
    #[error("codec error: {0}")]
    Codec(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Rolann(#[from] RolannError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FedMode {
    LayerSync,
    PostHoc,
}

/// A federated training session: the architecture (seed included) that every
/// node must share, the roster, and which roster entry aggregates.
#[derive(Debug, Clone)]
pub struct FedSession {
    pub session_id: String,
    pub architecture: Architecture,
    pub mode: FedMode,
    pub roster: Vec<String>,
    /// Roster index of the aggregating node; the initiator by default.
    pub aggregator: usize,
    pub round_timeout: Duration,
    /// Worker threads for local training in the one-shot protocol.
    pub workers: usize,
}

impl FedSession {
    pub fn new(session_id: &str, architecture: Architecture, mode: FedMode, nodes: usize) -> Self {
        Self {
            session_id: session_id.to_string(),
            architecture,
            mode,
            roster: (0..nodes).map(|i| format!("node-{i}")).collect(),
            aggregator: 0,
            round_timeout: Duration::from_secs(30),
            workers: 1,
        }
    }

    fn topic_init(&self) -> String {
        format!("daef/{}/init", self.session_id)
    }

    fn topic_encoder(&self) -> String {
        format!("daef/{}/encoder", self.session_id)
    }

    fn topic_layer(&self, layer: usize) -> String {
        format!("daef/{}/layer/{layer}", self.session_id)
    }

    fn topic_model(&self) -> String {
        format!("daef/{}/model", self.session_id)
    }
}

/// Thin SVD of a local block, shared as the U·diag(S) product. The
/// sample-side factor is never formed, so the packet reveals the column
/// space and spectrum of the block but not the samples.
pub fn local_encoder_stats(x: &Matrix) -> Result<EncoderStats, FederationError> {
    let svd = svd_thin(x)?;
    Ok(EncoderStats {
        us_product: svd.us_product(),
        sample_count: x.cols(),
    })
}

/// Merges per-node encoder statistics into the global encoder: one SVD of
/// the concatenated products, truncated to the latent width. Nodes that
/// contributed no samples are skipped.
pub fn aggregate_encoder(
    stats: &[EncoderStats],
    m1: usize,
) -> Result<(Matrix, SvdThin), FederationError> {
    let live: Vec<&EncoderStats> = stats.iter().filter(|s| s.sample_count > 0).collect();
    let first = live.first().ok_or(LinalgError::EmptyInput)?;
    let rows = first.us_product.rows();
    for s in &live {
        if s.us_product.rows() != rows {
            return Err(FederationError::ShapeMismatch(format!(
                "encoder stats rows differ ({} vs {})",
                rows,
                s.us_product.rows()
            )));
        }
    }
    let products: Vec<&Matrix> = live.iter().map(|s| &s.us_product).collect();
    let merged = svd_thin(&Matrix::hconcat(&products)?)?;
    let truncated = truncate(&merged, m1)?;
    Ok((truncated.u.clone(), truncated))
}

/// Per-neuron solver partials of one layer on local data.
fn layer_partials(
    inputs: &Matrix,
    targets: &Matrix,
    act: Activation,
    clamp_eps: f64,
) -> Result<Vec<RolannPartial>, RolannError> {
    (0..targets.rows())
        .map(|j| {
            let ws = rolann::make_workset(inputs, targets.row(j), act, clamp_eps)?;
            rolann::compute_partial(&ws)
        })
        .collect()
}

/// Folds per-node partial lists (skipping nodes without samples) in roster
/// order. A single contributor passes through untouched.
fn merge_partial_lists(
    lists: &[Vec<RolannPartial>],
) -> Result<Vec<RolannPartial>, FederationError> {
    let mut merged: Option<Vec<RolannPartial>> = None;
    for list in lists.iter().filter(|l| !l.is_empty()) {
        merged = Some(match merged {
            None => list.clone(),
            Some(acc) => {
                if acc.len() != list.len() {
                    return Err(FederationError::ShapeMismatch(format!(
                        "nodes disagree on neuron count ({} vs {})",
                        acc.len(),
                        list.len()
                    )));
                }
                acc.iter()
                    .zip(list)
                    .map(|(a, b)| rolann::merge_partials(a, b))
                    .collect::<Result<_, _>>()?
            }
        });
    }
    merged
        .ok_or_else(|| FederationError::InvalidParameter("no node contributed any samples".into()))
}

/// Shared helper: wait on a subscription until `extract` matches, skipping
/// duplicates and unrelated traffic.
fn wait_for<T>(
    sub: &Subscription,
    deadline: Instant,
    round: &str,
    waiting_on: &str,
    mut extract: impl FnMut(&KnowledgePacket) -> Option<T>,
) -> Result<T, FederationError> {
    loop {
        let now = Instant::now();
        if now >= deadline {
            return Err(FederationError::NodeTimeout {
                node: waiting_on.to_string(),
                round: round.to_string(),
            });
        }
        match sub.recv_timeout(deadline - now) {
            Ok(packet) => {
                if let Some(value) = extract(&packet) {
                    return Ok(value);
                }
            }
            Err(_) => {
                return Err(FederationError::NodeTimeout {
                    node: waiting_on.to_string(),
                    round: round.to_string(),
                })
            }
        }
    }
}

/// Collects one matching packet per roster node, deduplicating re-deliveries
/// by (node, sequence). Results come back in roster order.
fn collect_from_all<T>(
    sub: &Subscription,
    roster: &[String],
    deadline: Instant,
    round: &str,
    mut extract: impl FnMut(&KnowledgePacket) -> Option<T>,
) -> Result<Vec<T>, FederationError> {
    let mut slots: Vec<Option<T>> = roster.iter().map(|_| None).collect();
    let mut seen: std::collections::HashSet<(String, u64)> = Default::default();
    let mut remaining = roster.len();
    while remaining > 0 {
        let now = Instant::now();
        if now >= deadline {
            break;
        }
        let packet = match sub.recv_timeout(deadline - now) {
            Ok(p) => p,
            Err(_) => break,
        };
        let Some(idx) = roster.iter().position(|n| *n == packet.node_id) else {
            continue;
        };
        if !seen.insert((packet.node_id.clone(), packet.sequence)) {
            continue; // at-least-once duplicate
        }
        if let Some(value) = extract(&packet) {
            if slots[idx].is_none() {
                slots[idx] = Some(value);
                remaining -= 1;
            }
        }
    }
    if remaining > 0 {
        let missing = slots
            .iter()
            .position(|s| s.is_none())
            .map(|i| roster[i].clone())
            .unwrap_or_default();
        return Err(FederationError::NodeTimeout {
            node: missing,
            round: round.to_string(),
        });
    }
    Ok(slots.into_iter().map(|s| s.expect("filled")).collect())
}

/// Runs the layer-synchronous protocol: every roster entry becomes a thread
/// that exchanges packets through the broker; the aggregator merges and
/// broadcasts per round and finally publishes the assembled global model
/// (retained on the model topic). `local_data[i] = None` simulates a node
/// with no samples; it participates but contributes nothing to the merges.
///
/// The returned model equals centralized training on the column-concatenated
/// data, bitwise for a single node and within merge rounding otherwise.
pub fn run_layer_sync(
    session: &FedSession,
    broker: &Broker,
    local_data: &[Option<Matrix>],
) -> Result<DaefModel, FederationError> {
    if session.mode != FedMode::LayerSync {
        return Err(FederationError::InvalidParameter(
            "session is not in layer_sync mode".into(),
        ));
    }
    run_session(session, broker, local_data)
}

fn run_session(
    session: &FedSession,
    broker: &Broker,
    local_data: &[Option<Matrix>],
) -> Result<DaefModel, FederationError> {
    session.architecture.validate()?;
    if local_data.len() != session.roster.len() {
        return Err(FederationError::InvalidParameter(format!(
            "{} data blocks for {} roster nodes",
            local_data.len(),
            session.roster.len()
        )));
    }
    if session.aggregator >= session.roster.len() {
        return Err(FederationError::InvalidParameter(
            "aggregator index outside roster".into(),
        ));
    }
    for (i, block) in local_data.iter().enumerate() {
        if let Some(x) = block {
            if x.rows() != session.architecture.input_dim() {
                return Err(FederationError::ShapeMismatch(format!(
                    "node {i} holds {} features, architecture expects {}",
                    x.rows(),
                    session.architecture.input_dim()
                )));
            }
        }
    }
    broker.open_session(&session.session_id);

    // Everyone subscribes before anyone publishes, so no round is missed.
    let subs: Vec<Subscription> = session
        .roster
        .iter()
        .map(|_| broker.subscribe(&format!("daef/{}/#", session.session_id)))
        .collect();

    let results: Vec<Result<DaefModel, FederationError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = subs
            .into_iter()
            .enumerate()
            .map(|(idx, sub)| {
                let data = local_data[idx].as_ref();
                scope.spawn(move || node_main(session, broker, sub, idx, data))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("node thread panicked"))
            .collect()
    });

    let mut model = None;
    for (idx, result) in results.into_iter().enumerate() {
        match result {
            Ok(m) => {
                if model.is_none() {
                    model = Some(m);
                }
            }
            Err(e) => {
                return Err(FederationError::SessionAborted(format!(
                    "node {}: {e}",
                    session.roster[idx]
                )))
            }
        }
    }
    Ok(model.expect("non-empty roster"))
}

/// One node's life: follow the rounds, contribute local knowledge, apply the
/// aggregator's broadcasts. The aggregator runs the same loop plus the merge
/// and broadcast duties.
fn node_main(
    session: &FedSession,
    broker: &Broker,
    sub: Subscription,
    node_idx: usize,
    data: Option<&Matrix>,
) -> Result<DaefModel, FederationError> {
    let node_id = session.roster[node_idx].clone();
    let aggregator_id = session.roster[session.aggregator].clone();
    let is_aggregator = node_idx == session.aggregator;
    let arch = &session.architecture;
    let act = arch.hidden_activation;
    let mut sequence = 0u64;
    let mut publish = |topic: &str, body: PacketBody, retain: bool| {
        let packet = KnowledgePacket::new(&session.session_id, &node_id, sequence, body);
        sequence += 1;
        broker.publish(topic, &packet, retain).map(|_| ())
    };
    let deadline = || Instant::now() + session.round_timeout;

    // Round 0: the initiator announces the session (retained).
    if is_aggregator {
        publish(
            &session.topic_init(),
            PacketBody::Init {
                architecture: arch.clone(),
            },
            true,
        )?;
    }
    let announced = wait_for(&sub, deadline(), "init", &aggregator_id, |p| {
        match &p.body {
            PacketBody::Init { architecture } => Some(architecture.clone()),
            _ => None,
        }
    })?;
    if announced != *arch {
        return Err(FederationError::ArchitectureMismatch(
            "init packet disagrees with the session architecture".into(),
        ));
    }

    // Encoder round: publish local statistics, aggregator merges, everyone
    // adopts the broadcast weights.
    let stats = match data {
        Some(x) => local_encoder_stats(x)?,
        None => EncoderStats {
            us_product: Matrix::zeros(arch.input_dim(), 1),
            sample_count: 0,
        },
    };
    publish(
        &session.topic_encoder(),
        PacketBody::EncoderStats {
            us_product: stats.us_product.clone(),
            sample_count: stats.sample_count,
        },
        false,
    )?;
    if is_aggregator {
        let collected = collect_from_all(
            &sub,
            &session.roster,
            deadline(),
            "encoder statistics",
            |p| match &p.body {
                PacketBody::EncoderStats {
                    us_product,
                    sample_count,
                } => Some(EncoderStats {
                    us_product: us_product.clone(),
                    sample_count: *sample_count,
                }),
                _ => None,
            },
        )?;
        let (weights, knowledge) = aggregate_encoder(&collected, arch.latent_dim())?;
        publish(
            &session.topic_encoder(),
            PacketBody::ModelBroadcast {
                payload: BroadcastPayload::Encoder {
                    weights,
                    u: knowledge.u.clone(),
                    s: knowledge.s.clone(),
                },
            },
            false,
        )?;
    }
    let (encoder_weights, encoder_knowledge) = wait_for(
        &sub,
        deadline(),
        "encoder broadcast",
        &aggregator_id,
        |p| match &p.body {
            PacketBody::ModelBroadcast {
                payload: BroadcastPayload::Encoder { weights, u, s },
            } => Some((
                weights.clone(),
                SvdThin {
                    u: u.clone(),
                    s: s.clone(),
                },
            )),
            _ => None,
        },
    )?;

    let mut hidden = match data {
        Some(x) => Some(encoder_weights.transpose_matmul(x)?.map(|z| act.value(z))),
        None => None,
    };

    // Decoder rounds: one per layer, hidden layers first, then the linear
    // output layer against the original local inputs.
    let mut stream = SplitMix64::new(arch.init_seed);
    let total_layers = arch.decoder_layer_count();
    let mut decoder_weights = Vec::with_capacity(total_layers);
    let mut decoder_biases = Vec::with_capacity(total_layers);
    let mut layer_knowledge = Vec::with_capacity(total_layers);

    for layer in 0..total_layers {
        let last = layer + 1 == total_layers;
        // Every node replays the same stream, so these draws agree across the
        // roster without ever being transmitted.
        let aux = if last {
            None
        } else {
            let m_l = arch.layer_sizes[layer + 1];
            let m_next = arch.layer_sizes[layer + 2];
            let w = model::init::xavier_uniform(&mut stream, m_l, m_next);
            let b = model::init::normal_bias(&mut stream, m_next);
            Some((w, b))
        };

        let partials = match (&hidden, data) {
            (Some(h), Some(x)) => {
                if last {
                    layer_partials(h, x, Activation::Linear, arch.clamp_eps)?
                } else {
                    let (aux_w, aux_b) = aux.as_ref().expect("hidden layer has aux net");
                    let h_c1 = aux_w
                        .transpose_matmul(h)?
                        .add_col_vector(aux_b)
                        .map_err(FederationError::Linalg)?
                        .map(|z| act.value(z));
                    layer_partials(&h_c1, h, act, arch.clamp_eps)?
                }
            }
            _ => Vec::new(),
        };
        publish(
            &session.topic_layer(layer),
            PacketBody::LayerPartials {
                layer_index: layer,
                partials,
            },
            false,
        )?;

        if is_aggregator {
            let lists = collect_from_all(
                &sub,
                &session.roster,
                deadline(),
                &format!("layer {layer} partials"),
                |p| match &p.body {
                    PacketBody::LayerPartials {
                        layer_index,
                        partials,
                    } if *layer_index == layer => Some(partials.clone()),
                    _ => None,
                },
            )?;
            let merged = merge_partial_lists(&lists)?;
            let (weights, bias) = if last {
                let in_dim = arch.layer_sizes[total_layers];
                let out_dim = arch.input_dim();
                let mut w = Matrix::zeros(in_dim, out_dim);
                let mut b = vec![0.0; out_dim];
                for (j, partial) in merged.iter().enumerate() {
                    let solved = rolann::solve_weights(partial, arch.lambda_last)?;
                    for i in 0..in_dim {
                        w[(i, j)] = solved[i];
                    }
                    b[j] = solved[in_dim];
                }
                (w, b)
            } else {
                let in_dim = arch.layer_sizes[layer + 1];
                let out_dim = arch.layer_sizes[layer + 2];
                let mut w = Matrix::zeros(in_dim, out_dim);
                for (j, partial) in merged.iter().enumerate() {
                    let solved = rolann::solve_weights(partial, arch.lambda_hidden)?;
                    for k in 0..out_dim {
                        w[(j, k)] = solved[k];
                    }
                }
                let (_, aux_b) = aux.as_ref().expect("hidden layer has aux net");
                (w, aux_b.clone())
            };
            layer_knowledge.push(merged);
            publish(
                &session.topic_layer(layer),
                PacketBody::ModelBroadcast {
                    payload: BroadcastPayload::Layer {
                        layer_index: layer,
                        weights,
                        bias,
                    },
                },
                false,
            )?;
        }

        let (weights, bias) = wait_for(
            &sub,
            deadline(),
            &format!("layer {layer} broadcast"),
            &aggregator_id,
            |p| match &p.body {
                PacketBody::ModelBroadcast {
                    payload:
                        BroadcastPayload::Layer {
                            layer_index,
                            weights,
                            bias,
                        },
                } if *layer_index == layer => Some((weights.clone(), bias.clone())),
                _ => None,
            },
        )?;
        if let Some(h) = &hidden {
            let pre = weights.transpose_matmul(h)?.add_col_vector(&bias)?;
            hidden = Some(if last { pre } else { pre.map(|z| act.value(z)) });
        }
        decoder_weights.push(weights);
        decoder_biases.push(bias);
    }

    // Final round: the aggregator assembles and retains the global model.
    if is_aggregator {
        let model = DaefModel {
            arch: arch.clone(),
            encoder_weights,
            decoder_weights,
            decoder_biases,
            encoder_knowledge,
            layer_knowledge,
            threshold: None,
        };
        publish(
            &session.topic_model(),
            PacketBody::ModelBroadcast {
                payload: BroadcastPayload::Model {
                    model: Box::new(model),
                },
            },
            true,
        )?;
    }
    wait_for(
        &sub,
        deadline(),
        "final model",
        &aggregator_id,
        |p| match &p.body {
            PacketBody::ModelBroadcast {
                payload: BroadcastPayload::Model { model },
            } => Some((**model).clone()),
            _ => None,
        },
    )
}

/// Merges two knowledge sets: encoder factorizations combine through one SVD
/// (re-truncated to the latent width, since only the truncated factor is ever
/// shared), and per-neuron partials add.
pub fn merge_knowledge(
    a: &ModelKnowledge,
    b: &ModelKnowledge,
) -> Result<ModelKnowledge, FederationError> {
    if a.arch.init_seed != b.arch.init_seed {
        return Err(FederationError::SeedMismatch {
            local: a.arch.init_seed,
            foreign: b.arch.init_seed,
        });
    }
    if a.arch != b.arch {
        return Err(FederationError::ArchitectureMismatch(
            "knowledge sets have differing architectures".into(),
        ));
    }
    if a.layers.len() != b.layers.len() {
        return Err(FederationError::ShapeMismatch(format!(
            "knowledge sets have {} vs {} layers",
            a.layers.len(),
            b.layers.len()
        )));
    }
    let merged_encoder = dsvd_merge(&[a.encoder.clone(), b.encoder.clone()])?;
    let encoder = truncate(&merged_encoder, a.arch.latent_dim())?;
    let mut layers = Vec::with_capacity(a.layers.len());
    for (layer, (ours, theirs)) in a.layers.iter().zip(&b.layers).enumerate() {
        if ours.len() != theirs.len() {
            return Err(FederationError::ShapeMismatch(format!(
                "layer {layer}: {} partials vs {}",
                ours.len(),
                theirs.len()
            )));
        }
        let merged: Vec<RolannPartial> = ours
            .iter()
            .zip(theirs)
            .map(|(x, y)| rolann::merge_partials(x, y))
            .collect::<Result<_, _>>()?;
        layers.push(merged);
    }
    Ok(ModelKnowledge {
        arch: a.arch.clone(),
        encoder,
        layers,
    })
}

/// Rebuilds a model from merged knowledge: the truncated encoder factor
/// becomes the encoder weights and every decoder weight is re-solved. Hidden
/// biases carry over from the local model (they are seed-derived, and the
/// seeds were required to match). Any fitted threshold is dropped — it
/// described the old training errors.
fn apply_knowledge(
    local: &DaefModel,
    knowledge: ModelKnowledge,
) -> Result<DaefModel, FederationError> {
    let mut model = local.clone();
    model.encoder_weights = knowledge.encoder.u.clone();
    model.encoder_knowledge = knowledge.encoder;
    let (weights, biases) = model.resolve_decoder_from_knowledge(&knowledge.layers)?;
    model.layer_knowledge = knowledge.layers;
    model.decoder_weights = weights;
    model.decoder_biases = biases;
    model.threshold = None;
    Ok(model)
}

/// Folds foreign knowledge into a locally trained model: encoder
/// factorizations merge through one SVD, per-neuron partials add, and every
/// decoder weight is re-solved from the merged knowledge. Requires identical
/// architectures and seeds (the hidden biases and auxiliary projections are
/// seed-derived).
pub fn post_hoc_merge(
    local: &DaefModel,
    foreign: &ModelKnowledge,
) -> Result<DaefModel, FederationError> {
    let merged = merge_knowledge(&local.export_knowledge(), foreign)?;
    apply_knowledge(local, merged)
}

/// One-shot federation: every node trains locally, publishes its knowledge
/// (encoder statistics plus per-layer partials), and folds everyone else's
/// into its own model. Returns the per-node merged models in roster order.
pub fn run_post_hoc(
    session: &FedSession,
    broker: &Broker,
    local_data: &[Matrix],
) -> Result<Vec<DaefModel>, FederationError> {
    if session.mode != FedMode::PostHoc {
        return Err(FederationError::InvalidParameter(
            "session is not in post_hoc mode".into(),
        ));
    }
    session.architecture.validate()?;
    if local_data.len() != session.roster.len() {
        return Err(FederationError::InvalidParameter(format!(
            "{} data blocks for {} roster nodes",
            local_data.len(),
            session.roster.len()
        )));
    }
    broker.open_session(&session.session_id);
    let arch = &session.architecture;
    let layers = arch.decoder_layer_count();

    // Local training, then a single knowledge publication per node.
    let models: Vec<DaefModel> = local_data
        .iter()
        .map(|x| model::train(x, arch, 1, session.workers))
        .collect::<Result<_, _>>()?;

    let subs: Vec<Subscription> = session
        .roster
        .iter()
        .map(|_| broker.subscribe(&format!("daef/{}/#", session.session_id)))
        .collect();
    for (idx, model) in models.iter().enumerate() {
        let node_id = &session.roster[idx];
        let mut sequence = 0u64;
        let knowledge = model.export_knowledge();
        let stats_body = PacketBody::EncoderStats {
            us_product: knowledge.encoder.us_product(),
            sample_count: local_data[idx].cols(),
        };
        broker.publish(
            &session.topic_encoder(),
            &KnowledgePacket::new(&session.session_id, node_id, sequence, stats_body),
            false,
        )?;
        sequence += 1;
        for (layer, partials) in knowledge.layers.iter().enumerate() {
            let body = PacketBody::LayerPartials {
                layer_index: layer,
                partials: partials.clone(),
            };
            broker.publish(
                &session.topic_layer(layer),
                &KnowledgePacket::new(&session.session_id, node_id, sequence, body),
                false,
            )?;
            sequence += 1;
        }
    }

    // Each node gathers the whole one-shot exchange (packets of every kind
    // interleave on the wire), reassembles per-node knowledge, and merges in
    // roster order.
    let deadline = Instant::now() + session.round_timeout;
    let mut merged_models = Vec::with_capacity(models.len());
    for (idx, (model, sub)) in models.iter().zip(&subs).enumerate() {
        let mut encoders: Vec<Option<Matrix>> = session.roster.iter().map(|_| None).collect();
        let mut layer_lists: Vec<Vec<Option<Vec<RolannPartial>>>> =
            session.roster.iter().map(|_| vec![None; layers]).collect();
        let mut seen: std::collections::HashSet<(String, u64)> = Default::default();
        let mut missing = session.roster.len() * (1 + layers);
        while missing > 0 {
            let now = Instant::now();
            if now >= deadline {
                return Err(FederationError::NodeTimeout {
                    node: session.roster[idx].clone(),
                    round: "post-hoc exchange".into(),
                });
            }
            let Ok(packet) = sub.recv_timeout(deadline - now) else {
                return Err(FederationError::NodeTimeout {
                    node: session.roster[idx].clone(),
                    round: "post-hoc exchange".into(),
                });
            };
            let Some(node) = session.roster.iter().position(|n| *n == packet.node_id) else {
                continue;
            };
            if !seen.insert((packet.node_id.clone(), packet.sequence)) {
                continue;
            }
            match packet.body {
                PacketBody::EncoderStats { us_product, .. } if encoders[node].is_none() => {
                    encoders[node] = Some(us_product);
                    missing -= 1;
                }
                PacketBody::LayerPartials {
                    layer_index,
                    partials,
                } if layer_index < layers && layer_lists[node][layer_index].is_none() => {
                    layer_lists[node][layer_index] = Some(partials);
                    missing -= 1;
                }
                _ => {}
            }
        }

        // Fold in roster order, rebuilding every contribution (own included)
        // from the gathered packets, so all nodes compute the identical total
        // and their merged models agree bitwise.
        let _ = idx;
        let mut total: Option<ModelKnowledge> = None;
        for node in 0..session.roster.len() {
            let knowledge = ModelKnowledge {
                arch: arch.clone(),
                encoder: svd_thin(encoders[node].as_ref().expect("gathered"))?,
                layers: layer_lists[node]
                    .iter()
                    .map(|l| l.clone().expect("gathered"))
                    .collect(),
            };
            total = Some(match total {
                None => knowledge,
                Some(acc) => merge_knowledge(&acc, &knowledge)?,
            });
        }
        merged_models.push(apply_knowledge(model, total.expect("non-empty roster"))?);
    }
    Ok(merged_models)
}
