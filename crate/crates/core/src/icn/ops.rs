//! Threshold rules and closed forms used by the two-scale engine.

use super::IcnError;
use crate::bp::Packet;
use crate::sim::NodeId;

/// Gateway pair minimizing u_s^{gs} + u_{gs}^{gd} + u_{gd}^d; ties go to the lowest pair.
pub fn select_gateways(
    source_gateways: &[NodeId],
    dest_gateways: &[NodeId],
    cost: impl Fn(NodeId, NodeId) -> f64,
) -> Option<(NodeId, NodeId)> {
    let mut best: Option<((NodeId, NodeId), f64)> = None;
    for &gs in source_gateways {
        for &gd in dest_gateways {
            let c = cost(gs, gd);
            match best {
                Some((pair, bc)) if c > bc || (c == bc && (gs, gd) > pair) => {}
                _ => best = Some(((gs, gd), c)),
            }
        }
    }
    best.map(|b| b.0)
}

/// Packets to move from a type-II into a type-I queue: η (capped by what is
/// there) iff the threshold strictly exceeds the type-I length.
pub fn threshold_transfer(theta: f64, type1_len: usize, type2_len: usize, eta: usize) -> usize {
    if theta > type1_len as f64 {
        eta.min(type2_len)
    } else {
        0
    }
}

/// θ = u / K with K = T / |cluster|.
pub fn threshold(u: usize, super_slot: u64, cluster_size: usize) -> f64 {
    u as f64 * cluster_size as f64 / super_slot as f64
}

/// Length a gateway advertises for an inter-cluster backlog.
pub fn advertise_gateway_queue(backlog: usize, super_slot: u64) -> f64 {
    backlog as f64 / super_slot as f64
}

/// Destination-gateway release: η (capped) iff ĥq/T ≥ q.
pub fn destination_gateway_release(backlog: usize, type1_len: usize, super_slot: u64, eta: usize) -> usize {
    if advertise_gateway_queue(backlog, super_slot) >= type1_len as f64 {
        eta.min(backlog)
    } else {
        0
    }
}

/// A mobile never hands a packet back to the gateway it took it from.
pub fn loop_prevention_filter(packet: &Packet, candidate: NodeId) -> bool {
    packet.last_gateway != Some(candidate)
}

/// Commodity with the largest strictly positive differential, lowest id on ties.
pub fn exchange_commodity(
    commodities: &[NodeId],
    sender: impl Fn(NodeId) -> f64,
    receiver: impl Fn(NodeId) -> f64,
) -> Option<NodeId> {
    let mut best: Option<(NodeId, f64)> = None;
    for &c in commodities {
        let d = sender(c) - receiver(c);
        if d <= 0.0 {
            continue;
        }
        match best {
            Some((bc, bd)) if d < bd || (d == bd && c > bc) => {}
            _ => best = Some((c, d)),
        }
    }
    best.map(|b| b.0)
}

/// Lower bound on pickup delay under plain back-pressure and upper bound
/// under BP+SR for the directed line with a shuttling mobile.
pub fn bpsr_delay_bounds(cluster_size: usize, super_slot: u64, gamma: f64, eps: f64) -> Result<(f64, f64), IcnError> {
    if cluster_size < 2 {
        return Err(IcnError::Domain("cluster size must be at least 2".into()));
    }
    if super_slot < 1 {
        return Err(IcnError::Domain("super slot must be at least 1".into()));
    }
    if !(gamma > 0.0 && eps >= 0.0 && gamma + eps < 1.0) {
        return Err(IcnError::Domain("need 0 < gamma + eps < 1".into()));
    }
    let n = cluster_size as f64;
    let t = super_slot as f64;
    Ok(((n - 1.0) * (2.0 * t * (1.0 - gamma - eps) - 1.0), n * n + 3.0 * t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    #[test]
    fn gateway_selection() {
        assert_eq!(select_gateways(&[n(1)], &[n(5)], |_, _| 3.0), Some((n(1), n(5))));
        // u_s = {gA:10, gB:50}, u_gA^gD = 100, u_gB^gD = 20
        let (ga, gb, gd) = (n(1), n(2), n(5));
        let cost = |gs: NodeId, _gd: NodeId| if gs == ga { 10.0 + 100.0 } else { 50.0 + 20.0 };
        assert_eq!(select_gateways(&[ga, gb], &[gd], cost), Some((gb, gd)));
        assert_eq!(select_gateways(&[n(3), n(2)], &[n(9), n(8)], |_, _| 1.0), Some((n(2), n(8))));
    }

    #[test]
    fn source_transfer() {
        let theta = threshold(500, 1000, 10);
        assert_eq!(theta, 5.0);
        assert_eq!(threshold_transfer(theta, 4, 500, 10), 10);
        assert_eq!(threshold_transfer(theta, 5, 500, 10), 0);
        assert_eq!(threshold_transfer(threshold(0, 1000, 10), 0, 0, 10), 0);
        assert_eq!(threshold(800, 1000, 10), 8.0);
        assert_eq!(threshold_transfer(8.0, 3, 900, 10), 10);
    }

    #[test]
    fn advertisement_and_release() {
        assert_eq!(advertise_gateway_queue(0, 6000), 0.0);
        assert!((advertise_gateway_queue(50000, 6000) - 8.333333333333334).abs() < 1e-12);
        assert_eq!(advertise_gateway_queue(6000, 6000), 1.0);
        assert_eq!(destination_gateway_release(6000, 1, 6000, 3), 3);
        assert_eq!(destination_gateway_release(0, 0, 6000, 3), 0);
        assert_eq!(destination_gateway_release(12000, 1, 6000, 3), 3);
        assert_eq!(destination_gateway_release(5999, 1, 6000, 3), 0);
    }

    #[test]
    fn exchange_choice() {
        let gx = n(4);
        assert_eq!(exchange_commodity(&[gx], |_| 2000.0, |_| 0.0), Some(gx));
        assert_eq!(exchange_commodity(&[gx], |_| 7.0, |_| 7.0), None);
        assert_eq!(exchange_commodity(&[n(1), n(2)], |c| if c == n(1) { 3.0 } else { 9.0 }, |_| 1.0), Some(n(2)));
    }

    #[test]
    fn delay_bounds() {
        let (lo, hi) = bpsr_delay_bounds(2, 100, 0.2, 0.05).unwrap();
        assert!((lo - 149.0).abs() < 1e-9);
        assert!((hi - 304.0).abs() < 1e-9);
        let (l3, _) = bpsr_delay_bounds(3, 100, 0.2, 0.05).unwrap();
        assert!((l3 - lo - 149.0).abs() < 1e-9);
        let (ld, _) = bpsr_delay_bounds(4, 100, 0.5, 0.5 - 1e-12).unwrap();
        assert!((ld + 3.0).abs() < 1e-6);
        assert!(bpsr_delay_bounds(1, 100, 0.2, 0.05).is_err());
        assert!(bpsr_delay_bounds(3, 100, 0.6, 0.5).is_err());
    }

    #[test]
    fn loop_filter() {
        let mut p = Packet {
            id: 0,
            flow: 0,
            created: 0,
            dest: n(0),
            src_gateway: None,
            dst_gateway: None,
            last_gateway: Some(n(1)),
            shadow: false,
            picked_at: None,
        };
        assert!(!loop_prevention_filter(&p, n(1)));
        assert!(loop_prevention_filter(&p, n(2)));
        p.last_gateway = None;
        assert!(loop_prevention_filter(&p, n(1)));
    }
}
