//! Object synchronization for offloaded invocations: lazy transmission
//! (proxies first, payloads only for objects the remote side touches) and
//! differential updates against a cached prior version.

pub mod codec;
mod ledger;

pub use codec::{diff_apply, diff_apply_bytes, diff_encode, CodecError, Delta, DeltaOp};
pub use ledger::{Endpoint, Link, LinkCounters, SyncError, SyncLedger, Transfer, UploadPlan};

/// Default size of one object proxy on the wire: id, digest and version.
pub const DEFAULT_PROXY_HEADER: u64 = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectRecord {
    pub object_id: String,
    pub version: u64,
    pub payload: Vec<u8>,
}

/// The objects reachable from one offloaded invocation, each flagged with
/// whether the remote execution actually dereferences it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaskObjectSet {
    pub objects: Vec<(ObjectRecord, bool)>,
}

impl TaskObjectSet {
    /// Bytes shipped when every object travels in full.
    pub fn eager_bytes(&self) -> u64 {
        self.objects.iter().map(|(o, _)| o.payload.len() as u64).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LazyTransfer {
    pub bytes: u64,
    pub transmitted_ids: Vec<String>,
}

/// One proxy per object plus the payloads of referred objects.
pub fn lazy_bytes(set: &TaskObjectSet, proxy_header: u64) -> LazyTransfer {
    debug_assert!(proxy_header > 0);
    let mut bytes = proxy_header * set.objects.len() as u64;
    let mut transmitted_ids = Vec::new();
    for (obj, referred) in &set.objects {
        if *referred {
            bytes += obj.payload.len() as u64;
            transmitted_ids.push(obj.object_id.clone());
        }
    }
    LazyTransfer { bytes, transmitted_ids }
}
