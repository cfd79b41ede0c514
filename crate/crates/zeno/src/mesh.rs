//! 2D-mesh interconnect model: coordinates, dimension-ordered hop counts,
//! and the round-trip latency formula. Links carry no contention state, so
//! latency is a closed form of the configuration.

use crate::cap::NamespaceId;
use crate::config::LatencyConfig;

/// Position of a node in the mesh. Node ids map row-major:
/// `id = y * width + x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshCoord {
    pub x: usize,
    pub y: usize,
}

impl MeshCoord {
    pub fn of_node(node: usize, width: usize) -> Self {
        MeshCoord { x: node % width, y: node / width }
    }

    pub fn node_id(&self, width: usize) -> usize {
        self.y * width + self.x
    }
}

/// Hop count under dimension-ordered XY routing: the Manhattan distance.
pub fn route_hops(src: MeshCoord, dst: MeshCoord) -> u64 {
    (src.x.abs_diff(dst.x) + src.y.abs_diff(dst.y)) as u64
}

pub fn node_hops(a: usize, b: usize, width: usize) -> u64 {
    route_hops(MeshCoord::of_node(a, width), MeshCoord::of_node(b, width))
}

/// Round-trip wire latency for a request carrying `payload_bytes`:
/// `2 * hops * router_hop + 2 * link_flit * ceil(payload / flit_bytes)`.
/// Serving-node access time is added by the caller.
pub fn round_trip_latency(lat: &LatencyConfig, flit_bytes: u64, hops: u64, payload_bytes: u64) -> u64 {
    let flits = payload_bytes.div_ceil(flit_bytes).max(1);
    2 * hops * lat.router_hop + 2 * lat.link_flit * flits
}

/// What a remote request asks the serving node to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestKind {
    /// Fetch one 4 KiB block for the origin's remote-data cache.
    ReadBlock,
    /// Uncached word read (synchronization flags).
    ReadWord,
    /// Posted write of up to one block.
    WriteBlock,
    /// Metadata fetch from a directory shard.
    DirectoryRead,
    /// Metadata store(s) to a directory shard.
    DirectoryWrite,
    /// Metadata-cache shootdown for a set of revoked ids.
    Invalidate,
}

/// A message on the mesh. Every data-kind request names the namespace it
/// acts for; there is no raw-physical remote access on the wire.
#[derive(Debug, Clone)]
pub struct RemoteRequest {
    pub kind: RequestKind,
    pub ns_id: NamespaceId,
    pub offset: u64,
    pub size: u64,
    pub origin: usize,
    pub dest: usize,
    pub payload: Vec<u8>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_hops_to_self() {
        let c = MeshCoord { x: 0, y: 0 };
        assert_eq!(route_hops(c, c), 0);
    }

    #[test]
    fn manhattan_distance_in_4x4() {
        assert_eq!(route_hops(MeshCoord { x: 0, y: 0 }, MeshCoord { x: 3, y: 3 }), 6);
    }

    #[test]
    fn max_distance_in_8x8_is_14() {
        let mut max = 0;
        for a in 0..64 {
            for b in 0..64 {
                max = max.max(node_hops(a, b, 8));
            }
        }
        assert_eq!(max, 14);
    }

    #[test]
    fn coord_node_bijection() {
        for node in 0..48 {
            assert_eq!(MeshCoord::of_node(node, 6).node_id(6), node);
        }
    }

    #[test]
    fn latency_closed_form_one_hop_block() {
        let lat = LatencyConfig::default();
        // 4096 bytes over 8-byte flits at one hop:
        // 2*1*3 + 2*5*512 = 6 + 5120.
        assert_eq!(round_trip_latency(&lat, 8, 1, 4096), 5126);
    }

    #[test]
    fn latency_symmetry() {
        let lat = LatencyConfig::default();
        for (a, b) in [(0usize, 5usize), (3, 12), (7, 8)] {
            let ab = round_trip_latency(&lat, 8, node_hops(a, b, 4), 256);
            let ba = round_trip_latency(&lat, 8, node_hops(b, a, 4), 256);
            assert_eq!(ab, ba);
        }
    }
}
