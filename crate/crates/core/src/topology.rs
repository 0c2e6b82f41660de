//! Distribution-grid endpoints and radio access points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::message::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Dms,
    Substation,
    HvaLv,
    SwitchNode,
    PvPlant,
    WindFarm,
    LteBaseStation,
    DmrAccessPoint,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Dms => "dms",
            NodeKind::Substation => "substation",
            NodeKind::HvaLv => "hva_lv",
            NodeKind::SwitchNode => "switch",
            NodeKind::PvPlant => "pv_plant",
            NodeKind::WindFarm => "wind_farm",
            NodeKind::LteBaseStation => "lte_bs",
            NodeKind::DmrAccessPoint => "dmr_ap",
        }
    }

    /// Nodes polled by the DMS.
    pub fn is_monitored(self) -> bool {
        matches!(self, NodeKind::Substation | NodeKind::HvaLv | NodeKind::PvPlant | NodeKind::WindFarm)
    }

    pub fn is_der(self) -> bool {
        matches!(self, NodeKind::PvPlant | NodeKind::WindFarm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDescriptor {
    pub id: NodeId,
    pub kind: NodeKind,
    pub x_km: f64,
    pub y_km: f64,
}

impl NodeDescriptor {
    fn dist2(&self, x: f64, y: f64) -> f64 {
        (self.x_km - x).powi(2) + (self.y_km - y).powi(2)
    }
}

// Keeps topology draws independent of every other seeded stream.
const TOPOLOGY_STREAM: u64 = 0x746f_706f;

/// Lays out the federation's nodes.
///
/// Order: DMS, substations, HVA/LV, switches, PV plants, wind farms, LTE base
/// stations, DMR access point. The DMR access point sits at the centre of the
/// square; LTE base stations sit at the centres of equal vertical strips; all
/// other nodes are uniform in the square.
pub fn generate_topology(cfg: &ScenarioConfig, seed: u64) -> Vec<NodeDescriptor> {
    let side = cfg.region_side_km;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TOPOLOGY_STREAM);
    let counts = &cfg.topology;
    let mut nodes = Vec::new();
    let mut push = |kind: NodeKind, x: f64, y: f64| {
        let id = NodeId(nodes.len() as u32);
        nodes.push(NodeDescriptor { id, kind, x_km: x, y_km: y });
    };
    let uniform = [
        (NodeKind::Dms, 1),
        (NodeKind::Substation, counts.substation),
        (NodeKind::HvaLv, counts.hva_lv),
        (NodeKind::SwitchNode, counts.switch),
        (NodeKind::PvPlant, counts.pv_plant),
        (NodeKind::WindFarm, counts.wind_farm),
    ];
    for (kind, n) in uniform {
        for _ in 0..n {
            let x = rng.random_range(0.0..=side);
            let y = rng.random_range(0.0..=side);
            push(kind, x, y);
        }
    }
    let strips = cfg.lte_bs_count;
    for i in 0..strips {
        let x = (i as f64 + 0.5) * side / strips as f64;
        push(NodeKind::LteBaseStation, x, side / 2.0);
    }
    push(NodeKind::DmrAccessPoint, side / 2.0, side / 2.0);
    nodes
}

/// Read-only view over a generated node list.
#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<NodeDescriptor>,
    dms: NodeId,
    base_stations: Vec<NodeId>,
}

impl Topology {
    pub fn new(nodes: Vec<NodeDescriptor>) -> Self {
        let dms = nodes.iter().find(|n| n.kind == NodeKind::Dms).map(|n| n.id).expect("topology has a DMS");
        let base_stations = nodes.iter().filter(|n| n.kind == NodeKind::LteBaseStation).map(|n| n.id).collect();
        Topology { nodes, dms, base_stations }
    }

    pub fn generate(cfg: &ScenarioConfig) -> Self {
        Self::new(generate_topology(cfg, cfg.seed))
    }

    pub fn nodes(&self) -> &[NodeDescriptor] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &NodeDescriptor {
        &self.nodes[id.0 as usize]
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.node(id).kind
    }

    pub fn dms(&self) -> NodeId {
        self.dms
    }

    pub fn monitored(&self) -> impl Iterator<Item = &NodeDescriptor> {
        self.nodes.iter().filter(|n| n.kind.is_monitored())
    }

    pub fn of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &NodeDescriptor> {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    /// Base stations ordered from nearest to farthest from `id`; ties keep
    /// the lower base-station index first.
    pub fn base_stations_by_distance(&self, id: NodeId) -> Vec<usize> {
        let node = self.node(id);
        let mut order: Vec<usize> = (0..self.base_stations.len()).collect();
        order.sort_by(|&a, &b| {
            let da = self.node(self.base_stations[a]).dist2(node.x_km, node.y_km);
            let db = self.node(self.base_stations[b]).dist2(node.x_km, node.y_km);
            da.total_cmp(&db).then(a.cmp(&b))
        });
        order
    }
}
