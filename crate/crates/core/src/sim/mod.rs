//! Slotted time, seeded randomness, topology and the metrics stream.

pub mod clock;
pub mod metrics;
pub mod rng;
pub mod topology;

pub use clock::SlotClock;
pub use metrics::{MetricsError, MetricsSink, Record};
pub use rng::{stream_id, stream_rng, StreamKind};
pub use topology::{
    build_topology, ClusterId, LinkId, MobileId, NodeId, Role, TopologyError, TopologyGraph,
    TopologySpec,
};
