//! Namespace capability model: the metadata directory, namespace creation,
//! derivation, recursive revocation, and access validation.
//!
//! Everything here is a pure state transition on the directory; no timing is
//! attached. The simulator layers cycle costs on top of these operations.

use std::collections::BTreeMap;

use thiserror::Error;

/// Identifier of a namespace. Id 0 is reserved as the null namespace and is
/// never allocated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NamespaceId(pub u64);

impl NamespaceId {
    pub const NULL: NamespaceId = NamespaceId(0);

    pub fn is_null(self) -> bool {
        self.0 == 0
    }
}

/// A 64-bit word paired with a validity tag. Only words produced by
/// `ns_create`/`ns_derive`, or copied whole through a tag-preserving path,
/// carry `tag = true`. Arithmetic and partial-width stores clear the tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TaggedWord {
    pub value: u64,
    pub tag: bool,
}

impl TaggedWord {
    pub fn capability(id: NamespaceId) -> Self {
        TaggedWord { value: id.0, tag: true }
    }

    pub fn data(value: u64) -> Self {
        TaggedWord { value, tag: false }
    }

    pub fn id(self) -> NamespaceId {
        NamespaceId(self.value)
    }
}

/// Read/write/execute permission triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Permissions {
    pub read: bool,
    pub write: bool,
    pub exec: bool,
}

impl Permissions {
    pub const RW: Permissions = Permissions { read: true, write: true, exec: false };
    pub const R: Permissions = Permissions { read: true, write: false, exec: false };

    pub fn new(read: bool, write: bool, exec: bool) -> Self {
        Permissions { read, write, exec }
    }

    /// Encoding used by the `ns.create`/`ns.derive` instructions:
    /// bit 0 = read, bit 1 = write, bit 2 = execute.
    pub fn from_bits(bits: u64) -> Self {
        Permissions {
            read: bits & 1 != 0,
            write: bits & 2 != 0,
            exec: bits & 4 != 0,
        }
    }

    pub fn to_bits(self) -> u64 {
        (self.read as u64) | (self.write as u64) << 1 | (self.exec as u64) << 2
    }

    /// True when every bit of `self` is also granted by `parent`
    /// (monotonic non-increase under derivation).
    pub fn within(self, parent: Permissions) -> bool {
        (!self.read || parent.read) && (!self.write || parent.write) && (!self.exec || parent.exec)
    }

    pub fn allows(self, kind: AccessKind) -> bool {
        match kind {
            AccessKind::Read => self.read,
            AccessKind::Write => self.write,
            AccessKind::Execute => self.exec,
        }
    }
}

/// The three ways a namespace can be touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
    Execute,
}

/// Metadata held by the directory for one namespace.
///
/// `min_bound`/`max_bound` are inclusive byte offsets into the hierarchy's
/// address-space abstraction. All namespaces of one hierarchy share
/// `page_table_ppn` and `root_ns_id`; a root entry has `parent_ns_id = 0`
/// and `root_ns_id` equal to its own id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NamespaceMetadata {
    pub min_bound: u64,
    pub max_bound: u64,
    pub perms: Permissions,
    pub valid: bool,
    pub page_table_ppn: u64,
    pub root_ns_id: NamespaceId,
    pub parent_ns_id: NamespaceId,
    pub children_head: NamespaceId,
}

/// Number of metadata words written when an entry is stored. Used by the
/// timing model to charge directory stores for create/derive.
pub const METADATA_WORDS: u64 = 8;

/// Directory entry: the metadata plus the sibling link of the intrusive
/// children list (`children_head` in the parent, `next_sibling` here).
#[derive(Debug, Clone, Copy)]
pub struct DirEntry {
    pub meta: NamespaceMetadata,
    pub next_sibling: NamespaceId,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum CapError {
    #[error("min bound exceeds max bound")]
    InvalidBounds,
    #[error("capability word is untagged")]
    UntaggedCapability,
    #[error("namespace has been revoked")]
    RevokedNamespace,
    #[error("namespace id not present in directory")]
    NotFound,
    #[error("child bounds exceed parent bounds")]
    BoundsExceedParent,
    #[error("child permissions exceed parent permissions")]
    PermsExceedParent,
}

/// Why an access was denied. Ordered: a revoked namespace reports `Revoked`
/// even if the access would also be out of bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultReason {
    Revoked,
    PermissionDenied,
    OutOfBounds,
}

/// Outcome of validating one access against namespace metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessDecision {
    Allow,
    Fault(FaultReason),
}

impl AccessDecision {
    pub fn is_allow(self) -> bool {
        matches!(self, AccessDecision::Allow)
    }
}

/// Validate one access of `size_bytes` at `offset` against `meta`.
///
/// Allows iff the entry is valid, the permission bit for `kind` is set, and
/// `[offset, offset + size_bytes - 1]` lies inside `[min_bound, max_bound]`
/// without 64-bit wraparound. Never panics; `size_bytes = 0` is rejected as
/// out of bounds.
pub fn check_access(
    meta: &NamespaceMetadata,
    offset: u64,
    size_bytes: u64,
    kind: AccessKind,
) -> AccessDecision {
    if !meta.valid {
        return AccessDecision::Fault(FaultReason::Revoked);
    }
    if !meta.perms.allows(kind) {
        return AccessDecision::Fault(FaultReason::PermissionDenied);
    }
    if size_bytes == 0 {
        return AccessDecision::Fault(FaultReason::OutOfBounds);
    }
    let end = match offset.checked_add(size_bytes - 1) {
        Some(e) => e,
        None => return AccessDecision::Fault(FaultReason::OutOfBounds),
    };
    if offset < meta.min_bound || end > meta.max_bound {
        return AccessDecision::Fault(FaultReason::OutOfBounds);
    }
    AccessDecision::Allow
}

/// The shared namespace directory. One logical store for the whole system;
/// ids resolve to a home shard with `shard_of`. Ids are allocated as
/// `(node_index << 48) | serial` with per-node serial counters, so they are
/// globally unique without coordination and never reused within a run.
#[derive(Debug, Clone)]
pub struct NamespaceDirectory {
    entries: BTreeMap<u64, DirEntry>,
    next_local_serial: Vec<u64>,
    next_page_table_ppn: u64,
    node_count: usize,
}

pub const NODE_ID_SHIFT: u32 = 48;

impl NamespaceDirectory {
    pub fn new(node_count: usize) -> Self {
        assert!(node_count >= 1);
        NamespaceDirectory {
            entries: BTreeMap::new(),
            next_local_serial: vec![1; node_count],
            next_page_table_ppn: 1,
            node_count,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Home shard of an id: `id mod node_count`.
    pub fn shard_of(&self, id: NamespaceId) -> usize {
        (id.0 % self.node_count as u64) as usize
    }

    fn alloc_id(&mut self, node: usize) -> NamespaceId {
        let serial = self.next_local_serial[node];
        self.next_local_serial[node] += 1;
        NamespaceId(((node as u64) << NODE_ID_SHIFT) | serial)
    }

    /// Create a fresh root namespace with the given bounds and permissions.
    /// A new (empty) page table handle is allocated for the hierarchy.
    pub fn create(
        &mut self,
        requesting_node: usize,
        min: u64,
        max: u64,
        perms: Permissions,
    ) -> Result<TaggedWord, CapError> {
        if min > max {
            return Err(CapError::InvalidBounds);
        }
        let id = self.alloc_id(requesting_node);
        let pt_ppn = self.next_page_table_ppn;
        self.next_page_table_ppn += 1;
        let meta = NamespaceMetadata {
            min_bound: min,
            max_bound: max,
            perms,
            valid: true,
            page_table_ppn: pt_ppn,
            root_ns_id: id,
            parent_ns_id: NamespaceId::NULL,
            children_head: NamespaceId::NULL,
        };
        self.entries.insert(id.0, DirEntry { meta, next_sibling: NamespaceId::NULL });
        Ok(TaggedWord::capability(id))
    }

    /// Derive a child namespace from `parent`. Bounds must be contained in
    /// the parent's bounds and permissions must not exceed the parent's.
    /// The child shares the parent's page table and root id, and is linked
    /// at the head of the parent's children list.
    pub fn derive(
        &mut self,
        requesting_node: usize,
        parent: TaggedWord,
        min: u64,
        max: u64,
        perms: Permissions,
    ) -> Result<TaggedWord, CapError> {
        if !parent.tag {
            return Err(CapError::UntaggedCapability);
        }
        let pmeta = self.entries.get(&parent.value).ok_or(CapError::NotFound)?.meta;
        if !pmeta.valid {
            return Err(CapError::RevokedNamespace);
        }
        if min > max {
            return Err(CapError::InvalidBounds);
        }
        if min < pmeta.min_bound || max > pmeta.max_bound {
            return Err(CapError::BoundsExceedParent);
        }
        if !perms.within(pmeta.perms) {
            return Err(CapError::PermsExceedParent);
        }
        let id = self.alloc_id(requesting_node);
        let meta = NamespaceMetadata {
            min_bound: min,
            max_bound: max,
            perms,
            valid: true,
            page_table_ppn: pmeta.page_table_ppn,
            root_ns_id: pmeta.root_ns_id,
            parent_ns_id: parent.id(),
            children_head: NamespaceId::NULL,
        };
        let old_head = pmeta.children_head;
        self.entries.insert(id.0, DirEntry { meta, next_sibling: old_head });
        self.entries.get_mut(&parent.value).unwrap().meta.children_head = id;
        Ok(TaggedWord::capability(id))
    }

    /// Revoke `target` and every transitive descendant. Entries are kept in
    /// the directory (ids are never reused) but marked invalid. Returns the
    /// ids that were invalidated; revoking an already-revoked namespace is
    /// an error, which surfaces double-free bugs.
    pub fn revoke(&mut self, target: TaggedWord) -> Result<Vec<NamespaceId>, CapError> {
        if !target.tag {
            return Err(CapError::UntaggedCapability);
        }
        let entry = self.entries.get(&target.value).ok_or(CapError::NotFound)?;
        if !entry.meta.valid {
            return Err(CapError::RevokedNamespace);
        }
        let mut revoked = Vec::new();
        let mut stack = vec![target.id()];
        while let Some(id) = stack.pop() {
            let entry = self.entries.get_mut(&id.0).expect("child link points at live entry");
            if entry.meta.valid {
                entry.meta.valid = false;
                revoked.push(id);
            }
            let mut child = entry.meta.children_head;
            while !child.is_null() {
                stack.push(child);
                child = self.entries[&child.0].next_sibling;
            }
        }
        Ok(revoked)
    }

    /// Look up the metadata for `id`. Identical result regardless of which
    /// node asks; the directory is one system-level store.
    pub fn lookup(&self, id: NamespaceId) -> Option<&NamespaceMetadata> {
        self.entries.get(&id.0).map(|e| &e.meta)
    }

    pub fn entry(&self, id: NamespaceId) -> Option<&DirEntry> {
        self.entries.get(&id.0)
    }

    /// Iterate all entries in id order. Used by invariant checks and tests.
    pub fn iter(&self) -> impl Iterator<Item = (NamespaceId, &DirEntry)> {
        self.entries.iter().map(|(id, e)| (NamespaceId(*id), e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Walk the whole directory and verify the hierarchy invariants:
    /// bounds within parent bounds, permissions within parent permissions,
    /// shared root id and page table within a hierarchy, and root-entry
    /// self-consistency. Returns the first violation found.
    pub fn verify_invariants(&self) -> Result<(), String> {
        for (id, entry) in self.iter() {
            let meta = &entry.meta;
            if id.is_null() {
                return Err("directory holds an entry for the null id".into());
            }
            if meta.min_bound > meta.max_bound {
                return Err(format!("{id:?}: min bound exceeds max"));
            }
            if meta.parent_ns_id.is_null() {
                if meta.root_ns_id != id {
                    return Err(format!("{id:?}: root entry does not name itself as root"));
                }
            } else {
                let parent = self
                    .lookup(meta.parent_ns_id)
                    .ok_or_else(|| format!("{id:?}: dangling parent link"))?;
                if meta.min_bound < parent.min_bound || meta.max_bound > parent.max_bound {
                    return Err(format!("{id:?}: bounds exceed parent"));
                }
                if !meta.perms.within(parent.perms) {
                    return Err(format!("{id:?}: permissions exceed parent"));
                }
                if meta.root_ns_id != parent.root_ns_id {
                    return Err(format!("{id:?}: root id differs from parent"));
                }
                if meta.page_table_ppn != parent.page_table_ppn {
                    return Err(format!("{id:?}: page table differs from parent"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir(nodes: usize) -> NamespaceDirectory {
        NamespaceDirectory::new(nodes)
    }

    #[test]
    fn create_root_namespace() {
        let mut d = dir(1);
        let cap = d.create(0, 0, 32767, Permissions::RW).unwrap();
        assert!(cap.tag);
        let meta = d.lookup(cap.id()).unwrap();
        assert_eq!(meta.min_bound, 0);
        assert_eq!(meta.max_bound, 32767);
        assert!(meta.perms.read && meta.perms.write && !meta.perms.exec);
        assert!(meta.valid);
        assert!(meta.parent_ns_id.is_null());
        assert_eq!(meta.root_ns_id, cap.id());
    }

    #[test]
    fn create_rejects_inverted_bounds() {
        let mut d = dir(1);
        assert_eq!(d.create(0, 8, 4, Permissions::RW), Err(CapError::InvalidBounds));
    }

    #[test]
    fn successive_creates_yield_distinct_tagged_ids() {
        let mut d = dir(1);
        let a = d.create(0, 0, 15, Permissions::R).unwrap();
        let b = d.create(0, 0, 15, Permissions::R).unwrap();
        assert_ne!(a.value, b.value);
        assert!(a.tag && b.tag);
    }

    #[test]
    fn ids_encode_allocating_node() {
        let mut d = dir(4);
        let a = d.create(3, 0, 0, Permissions::R).unwrap();
        assert_eq!(a.value >> NODE_ID_SHIFT, 3);
        assert_eq!(a.value & 0xffff_ffff_ffff, 1);
    }

    #[test]
    fn derive_copies_root_and_page_table() {
        let mut d = dir(1);
        let parent = d.create(0, 0, 32767, Permissions::RW).unwrap();
        let child = d.derive(0, parent, 0, 16383, Permissions::R).unwrap();
        let pm = *d.lookup(parent.id()).unwrap();
        let cm = *d.lookup(child.id()).unwrap();
        assert_eq!(cm.root_ns_id, parent.id());
        assert_eq!(cm.page_table_ppn, pm.page_table_ppn);
        assert_eq!(cm.parent_ns_id, parent.id());
        assert_eq!(pm.children_head, child.id());
    }

    #[test]
    fn derive_rejects_wider_bounds() {
        let mut d = dir(1);
        let parent = d.create(0, 0, 32767, Permissions::RW).unwrap();
        assert_eq!(
            d.derive(0, parent, 0, 65535, Permissions::R),
            Err(CapError::BoundsExceedParent)
        );
    }

    #[test]
    fn derive_rejects_wider_perms() {
        let mut d = dir(1);
        let parent = d.create(0, 0, 1023, Permissions::R).unwrap();
        assert_eq!(
            d.derive(0, parent, 0, 1023, Permissions::RW),
            Err(CapError::PermsExceedParent)
        );
    }

    #[test]
    fn derive_from_revoked_parent_fails() {
        let mut d = dir(1);
        let parent = d.create(0, 0, 1023, Permissions::RW).unwrap();
        d.revoke(parent).unwrap();
        assert_eq!(
            d.derive(0, parent, 0, 15, Permissions::R),
            Err(CapError::RevokedNamespace)
        );
    }

    #[test]
    fn derive_requires_tag() {
        let mut d = dir(1);
        let parent = d.create(0, 0, 1023, Permissions::RW).unwrap();
        let forged = TaggedWord::data(parent.value);
        assert_eq!(
            d.derive(0, forged, 0, 15, Permissions::R),
            Err(CapError::UntaggedCapability)
        );
    }

    #[test]
    fn revoke_leaf_counts_one_and_blocks_access() {
        let mut d = dir(1);
        let leaf = d.create(0, 0, 4095, Permissions::RW).unwrap();
        let revoked = d.revoke(leaf).unwrap();
        assert_eq!(revoked.len(), 1);
        let meta = d.lookup(leaf.id()).unwrap();
        assert_eq!(
            check_access(meta, 0, 4, AccessKind::Read),
            AccessDecision::Fault(FaultReason::Revoked)
        );
    }

    #[test]
    fn revoke_is_recursive_over_the_subtree() {
        let mut d = dir(1);
        let parent = d.create(0, 0, 4095, Permissions::RW).unwrap();
        let a = d.derive(0, parent, 0, 1023, Permissions::RW).unwrap();
        let _b = d.derive(0, parent, 1024, 2047, Permissions::R).unwrap();
        let c = d.derive(0, a, 0, 511, Permissions::R).unwrap();
        let revoked = d.revoke(parent).unwrap();
        assert_eq!(revoked.len(), 4);
        let meta = d.lookup(c.id()).unwrap();
        assert_eq!(
            check_access(meta, 0, 1, AccessKind::Read),
            AccessDecision::Fault(FaultReason::Revoked)
        );
    }

    #[test]
    fn double_revoke_is_an_error() {
        let mut d = dir(1);
        let ns = d.create(0, 0, 63, Permissions::RW).unwrap();
        d.revoke(ns).unwrap();
        assert_eq!(d.revoke(ns), Err(CapError::RevokedNamespace));
    }

    #[test]
    fn sibling_revocation_leaves_other_children_valid() {
        let mut d = dir(1);
        let parent = d.create(0, 0, 4095, Permissions::RW).unwrap();
        let a = d.derive(0, parent, 0, 1023, Permissions::RW).unwrap();
        let b = d.derive(0, parent, 1024, 2047, Permissions::RW).unwrap();
        d.revoke(a).unwrap();
        assert!(d.lookup(b.id()).unwrap().valid);
        assert!(d.lookup(parent.id()).unwrap().valid);
    }

    #[test]
    fn check_access_examples() {
        let meta = NamespaceMetadata {
            min_bound: 0,
            max_bound: 4095,
            perms: Permissions::R,
            valid: true,
            page_table_ppn: 1,
            root_ns_id: NamespaceId(1),
            parent_ns_id: NamespaceId::NULL,
            children_head: NamespaceId::NULL,
        };
        assert_eq!(check_access(&meta, 0, 4, AccessKind::Read), AccessDecision::Allow);
        assert_eq!(
            check_access(&meta, 4093, 4, AccessKind::Read),
            AccessDecision::Fault(FaultReason::OutOfBounds)
        );
        assert_eq!(
            check_access(&meta, 0, 8, AccessKind::Write),
            AccessDecision::Fault(FaultReason::PermissionDenied)
        );
        let dead = NamespaceMetadata { valid: false, ..meta };
        assert_eq!(
            check_access(&dead, 0, 1, AccessKind::Read),
            AccessDecision::Fault(FaultReason::Revoked)
        );
    }

    #[test]
    fn offset_size_wraparound_is_out_of_bounds() {
        let meta = NamespaceMetadata {
            min_bound: 0,
            max_bound: u64::MAX,
            perms: Permissions::RW,
            valid: true,
            page_table_ppn: 1,
            root_ns_id: NamespaceId(1),
            parent_ns_id: NamespaceId::NULL,
            children_head: NamespaceId::NULL,
        };
        assert_eq!(
            check_access(&meta, u64::MAX, 2, AccessKind::Read),
            AccessDecision::Fault(FaultReason::OutOfBounds)
        );
    }

    #[test]
    fn fault_priority_revoked_over_permission_over_bounds() {
        let meta = NamespaceMetadata {
            min_bound: 0,
            max_bound: 7,
            perms: Permissions::R,
            valid: false,
            page_table_ppn: 1,
            root_ns_id: NamespaceId(1),
            parent_ns_id: NamespaceId::NULL,
            children_head: NamespaceId::NULL,
        };
        // Revoked wins even when the access is also out of bounds and
        // lacks the permission bit.
        assert_eq!(
            check_access(&meta, 100, 8, AccessKind::Write),
            AccessDecision::Fault(FaultReason::Revoked)
        );
        let alive = NamespaceMetadata { valid: true, ..meta };
        assert_eq!(
            check_access(&alive, 100, 8, AccessKind::Write),
            AccessDecision::Fault(FaultReason::PermissionDenied)
        );
    }

    #[test]
    fn lookup_null_and_unknown_ids() {
        let mut d = dir(2);
        assert!(d.lookup(NamespaceId::NULL).is_none());
        assert!(d.lookup(NamespaceId(999)).is_none());
        let a = d.create(1, 0, 0, Permissions::R).unwrap();
        assert!(d.lookup(a.id()).is_some());
    }

    #[test]
    fn shard_assignment_is_modular() {
        let d = dir(4);
        assert_eq!(d.shard_of(NamespaceId(5)), 1);
        assert_eq!(d.shard_of(NamespaceId(8)), 0);
    }

    #[test]
    fn create_and_derive_never_mutate_existing_entries() {
        let mut d = dir(2);
        let a = d.create(0, 0, 8191, Permissions::RW).unwrap();
        let b = d.derive(0, a, 0, 4095, Permissions::RW).unwrap();
        let snapshot: Vec<(u64, NamespaceMetadata)> = d
            .iter()
            .map(|(id, e)| {
                // The children list head moves on derive; bounds and
                // permissions must not.
                (id.0, NamespaceMetadata { children_head: NamespaceId::NULL, ..e.meta })
            })
            .collect();
        d.create(1, 0, 100, Permissions::R).unwrap();
        d.derive(1, b, 0, 63, Permissions::R).unwrap();
        for (id, before) in snapshot {
            let after = d.lookup(NamespaceId(id)).unwrap();
            assert_eq!(before.min_bound, after.min_bound);
            assert_eq!(before.max_bound, after.max_bound);
            assert_eq!(before.perms, after.perms);
            assert_eq!(before.valid, after.valid);
        }
        d.verify_invariants().unwrap();
    }
}
