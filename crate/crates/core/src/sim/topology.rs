use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MobileId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl LinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Gateway,
    Internal,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub label: String,
    pub cluster: ClusterId,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    /// Packets per slot.
    pub rate: u32,
}

#[derive(Debug, Clone)]
pub struct Cluster {
    pub id: ClusterId,
    pub nodes: Vec<NodeId>,
    pub gateways: Vec<NodeId>,
    pub internals: Vec<NodeId>,
    pub links: Vec<LinkId>,
}

#[derive(Debug, Clone)]
pub struct Mobile {
    pub id: MobileId,
    pub label: String,
    pub contacts: Vec<NodeId>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("unknown topology builder `{0}`")]
    UnknownBuilder(String),
    #[error("{what} must be at least 1")]
    TooSmall { what: &'static str },
    #[error("{gateways} gateways requested for a cluster of {size} nodes")]
    TooManyGateways { gateways: usize, size: usize },
    #[error("link {from}->{to} crosses clusters")]
    CrossClusterLink { from: String, to: String },
    #[error("mobile {mobile} lists non-gateway {node}")]
    ContactNotGateway { mobile: String, node: String },
    #[error("no node labelled `{0}`")]
    UnknownLabel(String),
}

/// Clustered network: wireless links inside clusters, mobiles between gateways.
#[derive(Debug, Clone)]
pub struct TopologyGraph {
    nodes: Vec<Node>,
    clusters: Vec<Cluster>,
    links: Vec<Link>,
    mobiles: Vec<Mobile>,
}

impl TopologyGraph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster(&self, id: ClusterId) -> &Cluster {
        &self.clusters[id.0 as usize]
    }

    pub fn cluster_of(&self, n: NodeId) -> ClusterId {
        self.nodes[n.index()].cluster
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.index()]
    }

    pub fn mobiles(&self) -> &[Mobile] {
        &self.mobiles
    }

    pub fn is_gateway(&self, n: NodeId) -> bool {
        self.nodes[n.index()].role == Role::Gateway
    }

    pub fn label(&self, n: NodeId) -> &str {
        &self.nodes[n.index()].label
    }

    pub fn by_label(&self, label: &str) -> Result<NodeId, TopologyError> {
        self.nodes
            .iter()
            .find(|n| n.label == label)
            .map(|n| n.id)
            .ok_or_else(|| TopologyError::UnknownLabel(label.to_string()))
    }

    pub fn gateways(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| n.role == Role::Gateway).map(|n| n.id)
    }

    pub fn has_link(&self, from: NodeId, to: NodeId) -> bool {
        self.links.iter().any(|l| l.from == from && l.to == to)
    }

    pub fn in_contact_list(&self, m: MobileId, g: NodeId) -> bool {
        self.mobiles[m.0 as usize].contacts.contains(&g)
    }

    /// Re-check the structural invariants; builders call this before returning.
    pub fn validate(&self) -> Result<(), TopologyError> {
        for c in &self.clusters {
            let all: BTreeSet<_> = c.nodes.iter().collect();
            let gw: BTreeSet<_> = c.gateways.iter().collect();
            let int: BTreeSet<_> = c.internals.iter().collect();
            debug_assert!(gw.is_disjoint(&int));
            debug_assert_eq!(gw.union(&int).count(), all.len());
        }
        for l in &self.links {
            if self.cluster_of(l.from) != self.cluster_of(l.to) {
                return Err(TopologyError::CrossClusterLink {
                    from: self.label(l.from).into(),
                    to: self.label(l.to).into(),
                });
            }
        }
        for m in &self.mobiles {
            for &g in &m.contacts {
                if !self.is_gateway(g) {
                    return Err(TopologyError::ContactNotGateway {
                        mobile: m.label.clone(),
                        node: self.label(g).into(),
                    });
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Incremental construction used by the named builders and by tests.
#[derive(Debug, Default)]
pub struct TopologyBuilder {
    nodes: Vec<Node>,
    clusters: Vec<Cluster>,
    links: Vec<Link>,
    mobiles: Vec<Mobile>,
}

impl TopologyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cluster(&mut self) -> ClusterId {
        let id = ClusterId(self.clusters.len() as u32);
        self.clusters.push(Cluster {
            id,
            nodes: vec![],
            gateways: vec![],
            internals: vec![],
            links: vec![],
        });
        id
    }

    pub fn node(&mut self, cluster: ClusterId, label: impl Into<String>, role: Role) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { id, label: label.into(), cluster, role });
        let c = &mut self.clusters[cluster.0 as usize];
        c.nodes.push(id);
        match role {
            Role::Gateway => c.gateways.push(id),
            Role::Internal => c.internals.push(id),
        }
        id
    }

    pub fn link(&mut self, from: NodeId, to: NodeId, rate: u32) -> LinkId {
        let id = LinkId(self.links.len() as u32);
        self.links.push(Link { id, from, to, rate });
        let c = self.nodes[from.index()].cluster;
        self.clusters[c.0 as usize].links.push(id);
        id
    }

    pub fn both_ways(&mut self, a: NodeId, b: NodeId, rate: u32) {
        self.link(a, b, rate);
        self.link(b, a, rate);
    }

    pub fn mobile(&mut self, label: impl Into<String>, contacts: Vec<NodeId>) -> MobileId {
        let id = MobileId(self.mobiles.len() as u32);
        self.mobiles.push(Mobile { id, label: label.into(), contacts });
        id
    }

    pub fn build(self) -> Result<TopologyGraph, TopologyError> {
        let g = TopologyGraph {
            nodes: self.nodes,
            clusters: self.clusters,
            links: self.links,
            mobiles: self.mobiles,
        };
        g.validate()?;
        Ok(g)
    }
}

/// Named builder with its sizes, as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologySpec {
    /// Two clusters joined by mobiles. The left cluster is a chain of
    /// `source_len` nodes ending in its gateway; the right one a chain of
    /// `dest_len` nodes starting at its gateway.
    LineCluster {
        source_len: usize,
        dest_len: usize,
        #[serde(default = "one")]
        mobiles: usize,
        /// One-way links pointing from source to gateway and gateway to destination.
        #[serde(default)]
        directed: bool,
        #[serde(default = "one_u32")]
        capacity: u32,
    },
    /// `clusters` grids of rows x cols with `gateways` gateways each;
    /// mobile k visits gateway k of every cluster.
    GridCluster {
        rows: usize,
        cols: usize,
        clusters: usize,
        gateways: usize,
        #[serde(default = "one_u32")]
        capacity: u32,
    },
    /// Linkless regions of stationaries, all reachable by one mobile.
    StarOfRegions { regions: Vec<usize> },
}

fn one() -> usize {
    1
}

fn one_u32() -> u32 {
    1
}

pub fn build_topology(spec: &TopologySpec) -> Result<TopologyGraph, TopologyError> {
    match *spec {
        TopologySpec::LineCluster { source_len, dest_len, mobiles, directed, capacity } => {
            line_cluster(source_len, dest_len, mobiles, directed, capacity)
        }
        TopologySpec::GridCluster { rows, cols, clusters, gateways, capacity } => {
            grid_cluster(rows, cols, clusters, gateways, capacity)
        }
        TopologySpec::StarOfRegions { ref regions } => star_of_regions(regions),
    }
}

/// Look up a builder by name with default sizes, for the CLI's listing.
pub fn builder_names() -> &'static [&'static str] {
    &["line-cluster", "grid-cluster", "star-of-regions"]
}

pub fn check_builder_name(name: &str) -> Result<(), TopologyError> {
    if builder_names().contains(&name) {
        Ok(())
    } else {
        Err(TopologyError::UnknownBuilder(name.to_string()))
    }
}

/// Left cluster nodes are returned hop-ordered: index 0 is the gateway
/// (hop 1) and the last entry is the source (hop `source_len`).
pub fn line_cluster(
    source_len: usize,
    dest_len: usize,
    mobiles: usize,
    directed: bool,
    capacity: u32,
) -> Result<TopologyGraph, TopologyError> {
    if source_len < 1 {
        return Err(TopologyError::TooSmall { what: "source cluster size" });
    }
    if dest_len < 1 {
        return Err(TopologyError::TooSmall { what: "destination cluster size" });
    }
    let mut b = TopologyBuilder::new();
    let left = b.cluster();
    let gw_num = 104.max(100 + source_len - 1);
    let gs = b.node(left, format!("1.{gw_num}"), Role::Gateway);
    let mut chain = vec![gs];
    for hop in 2..=source_len {
        let num = 100 + source_len - hop;
        chain.push(b.node(left, format!("1.{num}"), Role::Internal));
    }
    for w in chain.windows(2) {
        // w[1] is one hop further from the gateway than w[0]
        if directed {
            b.link(w[1], w[0], capacity);
        } else {
            b.both_ways(w[1], w[0], capacity);
        }
    }

    let right = b.cluster();
    let gw_num = 103.max(100 + dest_len - 1);
    let gd = b.node(right, format!("2.{gw_num}"), Role::Gateway);
    let mut chain = vec![gd];
    for k in (0..dest_len - 1).rev() {
        chain.push(b.node(right, format!("2.{}", 100 + k), Role::Internal));
    }
    for w in chain.windows(2) {
        if directed {
            b.link(w[0], w[1], capacity);
        } else {
            b.both_ways(w[0], w[1], capacity);
        }
    }
    for m in 0..mobiles {
        b.mobile(format!("0.{}", 100 + m), vec![gs, gd]);
    }
    b.build()
}

pub fn grid_cluster(
    rows: usize,
    cols: usize,
    clusters: usize,
    gateways: usize,
    capacity: u32,
) -> Result<TopologyGraph, TopologyError> {
    if rows < 1 || cols < 1 {
        return Err(TopologyError::TooSmall { what: "grid side" });
    }
    if clusters < 1 {
        return Err(TopologyError::TooSmall { what: "cluster count" });
    }
    if gateways < 1 {
        return Err(TopologyError::TooSmall { what: "gateway count" });
    }
    let size = rows * cols;
    if gateways > size {
        return Err(TopologyError::TooManyGateways { gateways, size });
    }
    // gateway cells: spread over the grid from the far corner inward
    let gw_cells: Vec<usize> = (0..gateways).map(|k| (size - 1 - k * size / gateways) % size).collect();
    let mut b = TopologyBuilder::new();
    let mut per_cluster_gw = Vec::new();
    for c in 0..clusters {
        let cid = b.cluster();
        let mut ids = Vec::with_capacity(size);
        for cell in 0..size {
            let role = if gw_cells.contains(&cell) { Role::Gateway } else { Role::Internal };
            ids.push(b.node(cid, format!("{}.{}", c + 1, 100 + cell), role));
        }
        for r in 0..rows {
            for col in 0..cols {
                let here = ids[r * cols + col];
                if col + 1 < cols {
                    b.both_ways(here, ids[r * cols + col + 1], capacity);
                }
                if r + 1 < rows {
                    b.both_ways(here, ids[(r + 1) * cols + col], capacity);
                }
            }
        }
        per_cluster_gw.push(gw_cells.iter().map(|&cell| ids[cell]).collect::<Vec<_>>());
    }
    for k in 0..gateways {
        let contacts = per_cluster_gw.iter().map(|g| g[k]).collect();
        b.mobile(format!("0.{}", 100 + k), contacts);
    }
    b.build()
}

pub fn star_of_regions(regions: &[usize]) -> Result<TopologyGraph, TopologyError> {
    if regions.is_empty() {
        return Err(TopologyError::TooSmall { what: "region count" });
    }
    let mut b = TopologyBuilder::new();
    let mut all = Vec::new();
    let mut n = 0;
    for &size in regions {
        if size < 1 {
            return Err(TopologyError::TooSmall { what: "region size" });
        }
        let cid = b.cluster();
        for _ in 0..size {
            n += 1;
            all.push(b.node(cid, format!("S{n}"), Role::Gateway));
        }
    }
    b.mobile("mule", all);
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_two_clusters() {
        let g = line_cluster(2, 3, 1, false, 1).unwrap();
        assert_eq!(g.clusters().len(), 2);
        let gw: Vec<_> = g.gateways().map(|n| g.label(n).to_string()).collect();
        assert_eq!(gw, vec!["1.104", "2.103"]);
        assert_eq!(g.mobiles().len(), 1);
        assert_eq!(g.mobiles()[0].contacts.len(), 2);
        assert!(g.by_label("2.101").is_ok());
        assert!(g.by_label("2.100").is_ok());
    }

    #[test]
    fn grid_sim_net() {
        let g = grid_cluster(3, 4, 3, 2, 1).unwrap();
        assert_eq!(g.nodes().len(), 36);
        assert_eq!(g.gateways().count(), 6);
        assert_eq!(g.mobiles().len(), 2);
    }

    #[test]
    fn degenerate_line() {
        let g = line_cluster(1, 1, 0, false, 1).unwrap();
        assert_eq!(g.clusters().len(), 2);
        assert!(g.clusters().iter().all(|c| c.nodes.len() == 1));
        assert!(g.mobiles().is_empty());
        assert!(g.links().is_empty());
    }

    #[test]
    fn errors() {
        assert_eq!(
            line_cluster(0, 1, 1, false, 1).unwrap_err(),
            TopologyError::TooSmall { what: "source cluster size" }
        );
        assert_eq!(
            grid_cluster(1, 2, 1, 3, 1).unwrap_err(),
            TopologyError::TooManyGateways { gateways: 3, size: 2 }
        );
        assert!(check_builder_name("ring").is_err());
        let spec: Result<TopologySpec, _> = toml::from_str("builder = \"ring\"");
        assert!(spec.is_err());
    }

    #[test]
    fn directed_line_orientation() {
        let g = line_cluster(3, 2, 1, true, 1).unwrap();
        let gs = g.by_label("1.104").unwrap();
        let s = g.by_label("1.100").unwrap();
        let mid = g.by_label("1.101").unwrap();
        assert!(g.has_link(s, mid) && g.has_link(mid, gs));
        assert!(!g.has_link(gs, mid));
        let gd = g.by_label("2.103").unwrap();
        let d = g.by_label("2.100").unwrap();
        assert!(g.has_link(gd, d));
    }
}
