use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::codec::{self, CodecError, Digest32, MAX_OVERHEAD};
use super::{ObjectRecord, TaskObjectSet};
use crate::model::ObjectRef;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Edge,
    Cloud,
}

impl Endpoint {
    pub fn other(self) -> Endpoint {
        match self {
            Endpoint::Edge => Endpoint::Cloud,
            Endpoint::Cloud => Endpoint::Edge,
        }
    }

    /// The device-facing link that reaches this endpoint.
    pub fn uplink(self) -> Link {
        match self {
            Endpoint::Edge => Link::MobileEdge,
            Endpoint::Cloud => Link::MobileCloud,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    MobileEdge,
    MobileCloud,
    EdgeCloud,
}

impl Link {
    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCounters {
    pub proxy_bytes: u64,
    pub payload_bytes: u64,
    pub delta_bytes: u64,
}

impl LinkCounters {
    pub fn total(&self) -> u64 {
        self.proxy_bytes + self.payload_bytes + self.delta_bytes
    }

    fn add(&mut self, t: &Transfer) {
        self.proxy_bytes += t.proxy_bytes;
        self.payload_bytes += t.payload_bytes;
        self.delta_bytes += t.delta_bytes;
    }
}

/// Bytes moved by one synchronization step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Transfer {
    pub proxy_bytes: u64,
    pub payload_bytes: u64,
    pub delta_bytes: u64,
    /// Objects materialized on demand, each costing one request round trip.
    pub fetches: u32,
}

impl Transfer {
    pub fn total(&self) -> u64 {
        self.proxy_bytes + self.payload_bytes + self.delta_bytes
    }

    fn merge(&mut self, o: Transfer) {
        self.proxy_bytes += o.proxy_bytes;
        self.payload_bytes += o.payload_bytes;
        self.delta_bytes += o.delta_bytes;
        self.fetches += o.fetches;
    }
}

/// Size-only preview of a lazy, differential upload.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UploadPlan {
    /// Every object in full, no proxies.
    pub eager_bytes: u64,
    pub effective_bytes: u64,
    pub fetches: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyncError {
    #[error("object `{0}` is not cached at {1:?}")]
    UnknownObject(String, Endpoint),
    #[error("object `{id}` version {got} is older than cached version {cached}")]
    VersionRegressed { id: String, got: u64, cached: u64 },
    #[error("object `{id}` version {version} changed content without a version bump")]
    VersionConflict { id: String, version: u64 },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Cached {
    version: u64,
    size: u64,
    /// Size of the change that produced this version from the previous one.
    last_change: u64,
    digest: Option<Digest32>,
    payload: Option<Vec<u8>>,
}

fn delta_estimate(size: u64, changed: u64) -> Transfer {
    let delta = changed.saturating_add(MAX_OVERHEAD as u64);
    if delta < size {
        Transfer { delta_bytes: delta, ..Default::default() }
    } else {
        Transfer { payload_bytes: size, ..Default::default() }
    }
}

/// What each remote endpoint holds, as known by the sender, plus per-link
/// byte counters.
#[derive(Clone, Debug, Default)]
pub struct SyncLedger {
    caches: HashMap<(Endpoint, String), Cached>,
    counters: [LinkCounters; 3],
}

impl SyncLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn counters(&self, link: Link) -> LinkCounters {
        self.counters[link.slot()]
    }

    pub fn cached_version(&self, endpoint: Endpoint, object_id: &str) -> Option<u64> {
        self.caches.get(&(endpoint, object_id.to_string())).map(|c| c.version)
    }

    fn charge(&mut self, link: Link, t: &Transfer) {
        self.counters[link.slot()].add(t);
    }

    /// Ships one object's payload from the device to `endpoint`, as a delta
    /// against the cached copy when there is one.
    pub fn sync_object(&mut self, endpoint: Endpoint, record: &ObjectRecord) -> Result<Transfer, SyncError> {
        let key = (endpoint, record.object_id.clone());
        let new_digest = codec::digest(&record.payload);
        let size = record.payload.len() as u64;
        let t = match self.caches.get(&key) {
            Some(c) if record.version < c.version => {
                return Err(SyncError::VersionRegressed {
                    id: record.object_id.clone(),
                    got: record.version,
                    cached: c.version,
                })
            }
            Some(c) if record.version == c.version => {
                if c.digest.is_some_and(|d| d != new_digest) {
                    return Err(SyncError::VersionConflict { id: record.object_id.clone(), version: record.version });
                }
                Transfer::default()
            }
            Some(Cached { payload: Some(old), .. }) => {
                let delta = codec::diff_encode(old, &record.payload);
                Transfer { delta_bytes: delta.encoded_len() as u64, ..Default::default() }
            }
            _ => Transfer { payload_bytes: size, ..Default::default() },
        };
        let last_change = t.delta_bytes.max(t.payload_bytes);
        self.caches.insert(
            key,
            Cached {
                version: record.version,
                size,
                last_change,
                digest: Some(new_digest),
                payload: Some(record.payload.clone()),
            },
        );
        self.charge(endpoint.uplink(), &t);
        Ok(t)
    }

    /// Lazy upload of a whole object set: proxies for everything, payloads
    /// (or deltas) for referred objects only.
    pub fn send_task_objects(
        &mut self,
        endpoint: Endpoint,
        set: &TaskObjectSet,
        proxy_header: u64,
    ) -> Result<Transfer, SyncError> {
        let proxies = Transfer { proxy_bytes: proxy_header * set.objects.len() as u64, ..Default::default() };
        self.charge(endpoint.uplink(), &proxies);
        let mut total = proxies;
        for (obj, referred) in &set.objects {
            if *referred {
                let mut t = self.sync_object(endpoint, obj)?;
                t.fetches = 1;
                total.merge(t);
            }
        }
        Ok(total)
    }

    fn sized_transfer(&self, endpoint: Endpoint, obj: &ObjectRef) -> Transfer {
        match self.caches.get(&(endpoint, obj.id.clone())) {
            Some(c) if c.version >= obj.version => Transfer::default(),
            Some(_) => delta_estimate(obj.bytes, obj.changed_bytes),
            None => Transfer { payload_bytes: obj.bytes, ..Default::default() },
        }
    }

    /// Previews a lazy, differential upload of size-only objects.
    pub fn plan_upload(&self, endpoint: Endpoint, objects: &[ObjectRef], proxy_header: u64) -> UploadPlan {
        let mut plan = UploadPlan {
            eager_bytes: objects.iter().map(|o| o.bytes).sum(),
            effective_bytes: proxy_header * objects.len() as u64,
            fetches: 0,
        };
        for obj in objects.iter().filter(|o| o.referred) {
            let t = self.sized_transfer(endpoint, obj);
            plan.effective_bytes += t.total();
            if t.total() > 0 {
                plan.fetches += 1;
            }
        }
        plan
    }

    /// Performs the upload previewed by [`SyncLedger::plan_upload`].
    pub fn commit_upload(&mut self, endpoint: Endpoint, objects: &[ObjectRef], proxy_header: u64) -> Transfer {
        let mut total = Transfer { proxy_bytes: proxy_header * objects.len() as u64, ..Default::default() };
        for obj in objects.iter().filter(|o| o.referred) {
            let mut t = self.sized_transfer(endpoint, obj);
            if t.total() > 0 {
                t.fetches = 1;
            }
            total.merge(t);
            let key = (endpoint, obj.id.clone());
            let newer = self.caches.get(&key).is_none_or(|c| c.version < obj.version);
            if newer {
                self.caches.insert(
                    key,
                    Cached {
                        version: obj.version,
                        size: obj.bytes,
                        last_change: obj.changed_bytes,
                        digest: None,
                        payload: None,
                    },
                );
            }
        }
        self.charge(endpoint.uplink(), &total);
        total
    }

    /// Eager upload of size-only objects: every object in full, no caching.
    pub fn commit_eager(&mut self, endpoint: Endpoint, objects: &[ObjectRef]) -> Transfer {
        let t = Transfer { payload_bytes: objects.iter().map(|o| o.bytes).sum(), ..Default::default() };
        self.charge(endpoint.uplink(), &t);
        t
    }

    /// Brings the other endpoint up to date with `from`'s copy. The bytes are
    /// charged to the edge-cloud link and never to a device link.
    pub fn propagate(&mut self, from: Endpoint, object_id: &str) -> Result<u64, SyncError> {
        let src = self
            .caches
            .get(&(from, object_id.to_string()))
            .cloned()
            .ok_or_else(|| SyncError::UnknownObject(object_id.to_string(), from))?;
        let dst_key = (from.other(), object_id.to_string());
        let t = match self.caches.get(&dst_key) {
            Some(d) if d.version >= src.version => Transfer::default(),
            Some(Cached { payload: Some(old), .. }) if src.payload.is_some() => {
                let delta = codec::diff_encode(old, src.payload.as_deref().unwrap());
                Transfer { delta_bytes: delta.encoded_len() as u64, ..Default::default() }
            }
            Some(d) if d.version + 1 == src.version => delta_estimate(src.size, src.last_change),
            _ => Transfer { payload_bytes: src.size, ..Default::default() },
        };
        if t.total() > 0 || !self.caches.contains_key(&dst_key) {
            self.caches.insert(dst_key, src);
        }
        self.charge(Link::EdgeCloud, &t);
        Ok(t.total())
    }

    pub fn propagate_edge_cloud(&mut self, object_id: &str) -> Result<u64, SyncError> {
        self.propagate(Endpoint::Edge, object_id)
    }
}
