//! In-process pub/sub broker with the topic, retained-message, and ordering
//! contract the node protocol is written against: per-publisher order is
//! preserved, delivery is at-least-once (an optional knob re-delivers every
//! k-th message so dedup paths stay exercised), and the last retained message
//! per topic greets late subscribers.

use std::collections::{BTreeMap, HashSet};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Mutex;
use std::time::Duration;

use super::packet::{encode_packet, KnowledgePacket};
use super::FederationError;

const DEFAULT_PAYLOAD_CAP: usize = 64 << 20;

pub struct Broker {
    payload_cap: usize,
    redeliver_every: Option<u64>,
    inner: Mutex<Inner>,
}

#[derive(Default)]
struct Inner {
    sessions: HashSet<String>,
    retained: BTreeMap<String, KnowledgePacket>,
    subscribers: Vec<SubEntry>,
    publish_count: u64,
}

struct SubEntry {
    filter: String,
    tx: Sender<KnowledgePacket>,
}

/// Receiving end of a subscription; the queue outlives slow consumers and
/// preserves arrival order.
pub struct Subscription {
    rx: Receiver<KnowledgePacket>,
}

impl Subscription {
    pub fn recv_timeout(&self, timeout: Duration) -> Result<KnowledgePacket, RecvTimeoutError> {
        self.rx.recv_timeout(timeout)
    }

    pub fn try_recv(&self) -> Option<KnowledgePacket> {
        self.rx.try_recv().ok()
    }
}

impl Default for Broker {
    fn default() -> Self {
        Self::new()
    }
}

impl Broker {
    pub fn new() -> Self {
        Self {
            payload_cap: DEFAULT_PAYLOAD_CAP,
            redeliver_every: None,
            inner: Mutex::new(Inner::default()),
        }
    }

    /// Payload cap in encoded bytes, and an optional "duplicate every k-th
    /// publish" knob for exercising at-least-once handling.
    pub fn with_options(payload_cap: usize, redeliver_every: Option<u64>) -> Self {
        Self {
            payload_cap,
            redeliver_every,
            inner: Mutex::new(Inner::default()),
        }
    }

    pub fn open_session(&self, session_id: &str) {
        self.inner
            .lock()
            .unwrap()
            .sessions
            .insert(session_id.to_string());
    }

    /// Publishes to every matching subscriber. Returns how many deliveries
    /// were made (duplicates included).
    pub fn publish(
        &self,
        topic: &str,
        packet: &KnowledgePacket,
        retain: bool,
    ) -> Result<usize, FederationError> {
        let encoded = encode_packet(packet)?;
        if encoded.len() > self.payload_cap {
            return Err(FederationError::PayloadTooLarge {
                size: encoded.len(),
                cap: self.payload_cap,
            });
        }
        let mut inner = self.inner.lock().unwrap();
        if !inner.sessions.contains(&packet.session_id) {
            return Err(FederationError::UnknownSession(packet.session_id.clone()));
        }
        inner.publish_count += 1;
        let duplicate = self
            .redeliver_every
            .map(|k| k > 0 && inner.publish_count.is_multiple_of(k))
            .unwrap_or(false);
        let mut delivered = 0;
        inner.subscribers.retain(|sub| {
            if !topic_matches(&sub.filter, topic) {
                return true;
            }
            if sub.tx.send(packet.clone()).is_err() {
                return false; // receiver dropped
            }
            delivered += 1;
            if duplicate && sub.tx.send(packet.clone()).is_ok() {
                delivered += 1;
            }
            true
        });
        if retain {
            inner.retained.insert(topic.to_string(), packet.clone());
        }
        Ok(delivered)
    }

    /// Subscribes to a topic filter (`+` one level, trailing `#` the rest).
    /// Retained messages on matching topics are delivered immediately, in
    /// topic order.
    pub fn subscribe(&self, filter: &str) -> Subscription {
        let (tx, rx) = mpsc::channel();
        let mut inner = self.inner.lock().unwrap();
        for (topic, packet) in &inner.retained {
            if topic_matches(filter, topic) {
                let _ = tx.send(packet.clone());
            }
        }
        inner.subscribers.push(SubEntry {
            filter: filter.to_string(),
            tx,
        });
        Subscription { rx }
    }
}

/// MQTT-style matching: `+` matches one level, a trailing `#` matches any
/// remainder (including none).
pub fn topic_matches(filter: &str, topic: &str) -> bool {
    let mut fparts = filter.split('/').peekable();
    let mut tparts = topic.split('/');
    loop {
        match (fparts.next(), tparts.next()) {
            (Some("#"), _) => return fparts.peek().is_none(),
            (Some("+"), Some(_)) => {}
            (Some(f), Some(t)) if f == t => {}
            (None, None) => return true,
            _ => return false,
        }
    }
}
