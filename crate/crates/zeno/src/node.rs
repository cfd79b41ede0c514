//! Per-node architectural and microarchitectural state: register files,
//! performance counters, the L1/L2 structures, the namespace MMU (metadata
//! cache + N-TLB), and the remote-data cache.

use serde::Serialize;

use crate::cap::{FaultReason, NamespaceMetadata};
use crate::config::SystemConfig;
use crate::isa::Program;
use crate::mem::{LruCache, Page};

/// Location of a physical page: owning node plus page number in that
/// node's store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhysLoc {
    pub node: usize,
    pub ppn: u64,
}

/// Cycle attribution for one instruction. Every stall cycle lands in
/// exactly one bucket; `total` is always the sum of the four.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Charge {
    pub cpu: u64,
    pub nlb: u64,
    pub local: u64,
    pub global: u64,
}

impl Charge {
    pub fn total(&self) -> u64 {
        self.cpu + self.nlb + self.local + self.global
    }

    pub fn merge(&mut self, other: Charge) {
        self.cpu += other.cpu;
        self.nlb += other.nlb;
        self.local += other.local;
        self.global += other.global;
    }
}

/// Committed-instruction and cycle counters plus hit/miss counts for every
/// modeled structure. `total_cycles` equals the sum of the four cycle
/// buckets at all times.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PerfCounters {
    pub instructions_committed: u64,
    pub total_cycles: u64,
    pub cpu_cycles: u64,
    pub nlb_cycles: u64,
    pub local_mem_cycles: u64,
    pub global_mem_cycles: u64,
    pub ntlb_hits: u64,
    pub ntlb_misses: u64,
    pub mdc_hits: u64,
    pub mdc_misses: u64,
    pub l1d_hits: u64,
    pub l1d_misses: u64,
    pub l1i_hits: u64,
    pub l1i_misses: u64,
    pub l2_hits: u64,
    pub l2_misses: u64,
    pub remote_cache_hits: u64,
    pub remote_cache_misses: u64,
}

impl PerfCounters {
    pub fn apply(&mut self, charge: Charge) {
        self.cpu_cycles += charge.cpu;
        self.nlb_cycles += charge.nlb;
        self.local_mem_cycles += charge.local;
        self.global_mem_cycles += charge.global;
        self.total_cycles += charge.total();
        debug_assert_eq!(
            self.total_cycles,
            self.cpu_cycles + self.nlb_cycles + self.local_mem_cycles + self.global_mem_cycles
        );
    }
}

/// Reasons a node can fault. Capability violations, translation failures,
/// and decode-level problems all land here; a fault halts the node but not
/// the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FaultKind {
    Revoked,
    PermissionDenied,
    OutOfBounds,
    UntaggedCapability,
    NamespaceNotFound,
    NullNamespace,
    UnmappedPage,
    InvalidBounds,
    BoundsExceedParent,
    PermsExceedParent,
    MetadataCacheMiss,
    MisroutedRequest,
    BadJumpTarget,
    PcOutOfRange,
}

impl From<FaultReason> for FaultKind {
    fn from(r: FaultReason) -> Self {
        match r {
            FaultReason::Revoked => FaultKind::Revoked,
            FaultReason::PermissionDenied => FaultKind::PermissionDenied,
            FaultReason::OutOfBounds => FaultKind::OutOfBounds,
        }
    }
}

impl From<crate::cap::CapError> for FaultKind {
    fn from(e: crate::cap::CapError) -> Self {
        use crate::cap::CapError::*;
        match e {
            InvalidBounds => FaultKind::InvalidBounds,
            UntaggedCapability => FaultKind::UntaggedCapability,
            RevokedNamespace => FaultKind::Revoked,
            NotFound => FaultKind::NamespaceNotFound,
            BoundsExceedParent => FaultKind::BoundsExceedParent,
            PermsExceedParent => FaultKind::PermsExceedParent,
        }
    }
}

/// A recorded fault: which node, where in its program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FaultRecord {
    pub node: usize,
    pub kind: FaultKind,
    pub pc: usize,
    pub source_line: u32,
}

/// Counter snapshot recorded by a `statmark` instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StatmarkRecord {
    pub node: usize,
    pub mark: i64,
    pub counters: PerfCounters,
}

/// Conservation bookkeeping for the network interface.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NetCounters {
    pub requests_sent: u64,
    pub responses_received: u64,
    pub faults_received: u64,
}

pub(crate) const ILINE_BIT: u64 = 1 << 57;

/// Cache-line key for a physical data address.
pub(crate) fn dline_key(loc: PhysLoc, page_offset: u64) -> u64 {
    ((loc.node as u64) << 58) | (loc.ppn << 6) | (page_offset >> 6)
}

/// Cache-line key for an instruction fetch (16 instructions per line).
pub(crate) fn iline_key(pc: usize) -> u64 {
    ILINE_BIT | (pc as u64 >> 4)
}

/// Key for a remote-data-cache block.
pub(crate) fn block_key(loc: PhysLoc) -> u64 {
    ((loc.node as u64) << 40) | loc.ppn
}

/// One Zeno node: in-order core state plus its private memory structures.
pub struct Node {
    pub regs: [u64; 32],
    /// Extended registers: 64-bit value plus capability tag. e0 is the
    /// hardwired null capability.
    pub eregs: [(u64, bool); 32],
    pub pc: usize,
    pub halted: bool,
    pub fault: Option<FaultRecord>,
    pub program: Program,
    pub counters: PerfCounters,
    pub net: NetCounters,
    pub statmarks: Vec<StatmarkRecord>,
    // Microarchitecture. L1/L2 track presence for timing; data is always
    // backed by physical pages or remote-cache block copies.
    pub(crate) l1i: LruCache<u64>,
    pub(crate) l1d: LruCache<u64>,
    pub(crate) l2: LruCache<u64>,
    pub(crate) mdc: LruCache<u64, NamespaceMetadata>,
    pub(crate) ntlb: LruCache<(u64, u64), PhysLoc>,
    /// Remote-data cache: software-coherent block copies in local DRAM.
    pub(crate) rcache: LruCache<u64, Box<Page>>,
    /// Legacy private address space (baseline mode, namespace 0):
    /// virtual page -> local ppn.
    pub(crate) legacy_pt: std::collections::BTreeMap<u64, u64>,
    /// Probe key streams for replay-based analysis, captured when
    /// `trace_nlb` is set.
    pub mdc_probe_trace: Vec<u64>,
    pub ntlb_probe_trace: Vec<(u64, u64)>,
}

impl Node {
    pub fn new(config: &SystemConfig, program: Program) -> Self {
        let l1_lines = (config.l1_kb * 1024 / 64).max(1);
        let l2_lines = (config.l2_kb * 1024 / 64).max(1);
        Node {
            regs: [0; 32],
            eregs: [(0, false); 32],
            pc: program.entry,
            halted: false,
            fault: None,
            program,
            counters: PerfCounters::default(),
            net: NetCounters::default(),
            statmarks: Vec::new(),
            l1i: LruCache::new(l1_lines, config.cache_ways),
            l1d: LruCache::new(l1_lines, config.cache_ways),
            l2: LruCache::new(l2_lines, config.cache_ways),
            mdc: LruCache::new(config.mdc_entries, config.mdc_ways),
            ntlb: LruCache::new(config.ntlb_entries, config.ntlb_ways),
            rcache: LruCache::new(config.remote_cache_blocks, 0),
            legacy_pt: std::collections::BTreeMap::new(),
            mdc_probe_trace: Vec::new(),
            ntlb_probe_trace: Vec::new(),
        }
    }

    pub fn read_x(&self, r: u8) -> u64 {
        if r == 0 {
            0
        } else {
            self.regs[r as usize]
        }
    }

    pub fn write_x(&mut self, r: u8, v: u64) {
        if r != 0 {
            self.regs[r as usize] = v;
        }
    }

    pub fn read_e(&self, r: u8) -> (u64, bool) {
        if r == 0 {
            (0, false)
        } else {
            self.eregs[r as usize]
        }
    }

    pub fn write_e(&mut self, r: u8, value: u64, tag: bool) {
        if r != 0 {
            self.eregs[r as usize] = (value, tag);
        }
    }

    /// Drop every L1/L2 line belonging to the given remote block. Keeps the
    /// caches consistent when a block copy is invalidated or evicted.
    pub(crate) fn drop_block_lines(&mut self, loc: PhysLoc) {
        let base = dline_key(loc, 0);
        self.l1d.invalidate_matching(|k, _| *k >= base && *k < base + 64);
        self.l2.invalidate_matching(|k, _| *k >= base && *k < base + 64);
    }
}
