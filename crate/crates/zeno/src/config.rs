//! Run configuration: structure sizes, latencies, execution mode. All
//! values load from a TOML key-value file and every field has a documented
//! default, so a config file only needs the keys it overrides.

use serde::{Deserialize, Serialize};

/// Cycle costs of the modeled components. All counts are in core clock
/// cycles and can be overridden from the run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyConfig {
    /// L1 hit service time, charged on every data access that reaches L1.
    pub l1_hit: u64,
    /// L2 probe/hit time, charged when an access misses L1.
    pub l2_hit: u64,
    /// Local DRAM access (also the cost of one directory-shard word access).
    pub dram_access: u64,
    /// Parallel N-TLB + metadata-cache probe, charged when the lookup is on
    /// the critical path (see the node model).
    pub nlb_lookup: u64,
    /// Page-table walker state-machine time per walk.
    pub walker_step: u64,
    /// Per-hop router traversal time.
    pub router_hop: u64,
    /// Per-flit link serialization time.
    pub link_flit: u64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig {
            l1_hit: 2,
            l2_hit: 10,
            dram_access: 100,
            nlb_lookup: 2,
            walker_step: 10,
            router_hop: 3,
            link_flit: 5,
        }
    }
}

/// Simulation mode: the full capability machine, or the unprotected
/// extended-addressing baseline used for normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Zeno,
    XbgasBaseline,
}

impl Mode {
    pub fn is_baseline(self) -> bool {
        matches!(self, Mode::XbgasBaseline)
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Zeno => "zeno",
            Mode::XbgasBaseline => "baseline",
        }
    }
}

/// Where the physical pages of a freshly created namespace live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PageHoming {
    /// All pages on the creating node.
    #[default]
    Creator,
    /// Pages distributed round-robin across nodes starting at the creator,
    /// so one namespace transparently spans machines.
    RoundRobin,
}

/// Behavior of the metadata cache on a miss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MdcMissPolicy {
    /// Fetch the metadata from its directory shard, walker-style.
    #[default]
    Fetch,
    /// Raise a fault and let software sort it out.
    Fault,
}

/// Full system configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    pub mesh_width: usize,
    pub mesh_height: usize,
    /// N-TLB capacity in entries.
    pub ntlb_entries: usize,
    /// Metadata cache capacity in entries.
    pub mdc_entries: usize,
    /// Associativity for the N-TLB and metadata cache; 0 = fully associative.
    pub ntlb_ways: usize,
    pub mdc_ways: usize,
    pub l1_kb: usize,
    pub l2_kb: usize,
    pub cache_ways: usize,
    /// Remote-data cache capacity in 4 KiB blocks.
    pub remote_cache_blocks: usize,
    pub latency: LatencyConfig,
    pub mode: Mode,
    pub page_homing: PageHoming,
    pub mdc_miss_policy: MdcMissPolicy,
    /// Payload bytes carried per link flit.
    pub flit_bytes: u64,
    /// Size of the boot namespace every node receives a capability to in e1.
    pub boot_ns_bytes: u64,
    /// Abort the run when the global clock passes this without all nodes
    /// halting.
    pub deadlock_budget: u64,
    pub seed: u64,
    /// Record an event trace (Allow decisions, transfers). Test use only;
    /// costs memory.
    pub trace_events: bool,
    /// Record the metadata-cache / N-TLB probe key streams for replay.
    pub trace_nlb: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            mesh_width: 2,
            mesh_height: 2,
            ntlb_entries: 32,
            mdc_entries: 32,
            ntlb_ways: 0,
            mdc_ways: 0,
            l1_kb: 32,
            l2_kb: 256,
            cache_ways: 8,
            remote_cache_blocks: 1024,
            latency: LatencyConfig::default(),
            mode: Mode::Zeno,
            page_homing: PageHoming::Creator,
            mdc_miss_policy: MdcMissPolicy::Fetch,
            flit_bytes: 8,
            boot_ns_bytes: 4096,
            deadlock_budget: 1_000_000_000,
            seed: 42,
            trace_events: false,
            trace_nlb: false,
        }
    }
}

impl SystemConfig {
    pub fn node_count(&self) -> usize {
        self.mesh_width * self.mesh_height
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        let cfg: SystemConfig = toml::from_str(text)?;
        cfg.validate().map_err(serde::de::Error::custom)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.mesh_width == 0 || self.mesh_height == 0 {
            return Err("mesh dimensions must be at least 1".into());
        }
        for (name, v) in [
            ("ntlb_entries", self.ntlb_entries),
            ("mdc_entries", self.mdc_entries),
            ("l1_kb", self.l1_kb),
            ("l2_kb", self.l2_kb),
            ("remote_cache_blocks", self.remote_cache_blocks),
        ] {
            if v == 0 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        if self.flit_bytes == 0 {
            return Err("flit_bytes must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SystemConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_overrides_subset_of_keys() {
        let cfg = SystemConfig::from_toml(
            "mesh_width = 4\nmesh_height = 4\nmode = \"xbgas_baseline\"\n[latency]\nl1_hit = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.node_count(), 16);
        assert_eq!(cfg.mode, Mode::XbgasBaseline);
        assert_eq!(cfg.latency.l1_hit, 3);
        assert_eq!(cfg.latency.l2_hit, 10);
    }

    #[test]
    fn invalid_mesh_rejected() {
        assert!(SystemConfig::from_toml("mesh_width = 0\n").is_err());
    }
}
