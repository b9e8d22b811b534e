use std::collections::BTreeSet;

/// A packet reaching the destination. Frame numbers are global; a block
/// covers frames `start .. start + size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrival {
    Data { seq: u64, block_start: u64, block_size: u32 },
    Coded { block_start: u64, block_size: u32 },
}

/// What the destination sends back. Frame numbers are the next expected one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckEvent {
    /// Everything below `next` has arrived or been decoded.
    Ack { next: u64 },
    /// Innovative out-of-order packet; `dof` counts what is held toward `next`.
    PseudoAck { next: u64, dof: u32 },
    DuplicateAck { next: u64 },
}

/// Destination state: the smallest missing frame and what is held for its block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Receiver {
    pub next: u64,
    block: Option<(u64, u32)>,
    ahead: BTreeSet<u64>,
    coded: u32,
}

impl Receiver {
    pub fn new() -> Self {
        Self::default()
    }

    fn holds_next(&self, start: u64, size: u32) -> bool {
        start <= self.next && self.next < start + size as u64
    }

    fn enter_block(&mut self, start: u64, size: u32) {
        if self.block != Some((start, size)) {
            self.block = Some((start, size));
            self.coded = 0;
        }
    }

    fn missing(&self, start: u64, size: u32) -> u64 {
        let end = start + size as u64;
        (end - self.next) - self.ahead.range(self.next..end).count() as u64
    }

    /// Decode the block if enough degrees of freedom are in; returns true if it did.
    fn try_decode(&mut self) -> bool {
        let Some((start, size)) = self.block else { return false };
        if !self.holds_next(start, size) || self.missing(start, size) > self.coded as u64 {
            return false;
        }
        let end = start + size as u64;
        self.next = end;
        self.ahead = self.ahead.split_off(&end);
        self.coded = 0;
        self.block = None;
        self.advance();
        true
    }

    fn advance(&mut self) {
        while self.ahead.remove(&self.next) {
            self.next += 1;
        }
    }

    fn dof(&self, start: u64, size: u32) -> u32 {
        let end = start + size as u64;
        self.ahead.range(self.next..end).count() as u32 + self.coded
    }
}

/// Classify an arrival: the next expected frame draws a cumulative ACK, an
/// innovative packet for the next expected frame's block draws a pseudo-ACK,
/// anything else a duplicate ACK.
pub fn dest_ack_logic(rx: &mut Receiver, pkt: Arrival) -> AckEvent {
    match pkt {
        Arrival::Data { seq, block_start, block_size } => {
            if seq < rx.next || rx.ahead.contains(&seq) {
                return AckEvent::DuplicateAck { next: rx.next };
            }
            if seq == rx.next {
                rx.next += 1;
                rx.advance();
                if rx.holds_next(block_start, block_size) {
                    rx.enter_block(block_start, block_size);
                    rx.try_decode();
                }
                return AckEvent::Ack { next: rx.next };
            }
            if rx.holds_next(block_start, block_size) && seq < block_start + block_size as u64 {
                rx.enter_block(block_start, block_size);
                rx.ahead.insert(seq);
                if rx.try_decode() {
                    return AckEvent::Ack { next: rx.next };
                }
                return AckEvent::PseudoAck { next: rx.next, dof: rx.dof(block_start, block_size) };
            }
            AckEvent::DuplicateAck { next: rx.next }
        }
        Arrival::Coded { block_start, block_size } => {
            if !rx.holds_next(block_start, block_size) {
                return AckEvent::DuplicateAck { next: rx.next };
            }
            rx.enter_block(block_start, block_size);
            rx.coded += 1;
            if rx.try_decode() {
                AckEvent::Ack { next: rx.next }
            } else {
                AckEvent::PseudoAck { next: rx.next, dof: rx.dof(block_start, block_size) }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(seq: u64, start: u64, size: u32) -> Arrival {
        Arrival::Data { seq, block_start: start, block_size: size }
    }

    fn coded(start: u64, size: u32) -> Arrival {
        Arrival::Coded { block_start: start, block_size: size }
    }

    #[test]
    fn in_order_data_is_acked() {
        let mut rx = Receiver::new();
        assert_eq!(dest_ack_logic(&mut rx, data(0, 0, 3)), AckEvent::Ack { next: 1 });
        assert_eq!(dest_ack_logic(&mut rx, data(1, 0, 3)), AckEvent::Ack { next: 2 });
    }

    #[test]
    fn coded_packets_fill_the_block() {
        // P1..P4 are frames 0..4; only P1 arrives, then three coded packets
        let mut rx = Receiver::new();
        let events: Vec<_> = [data(0, 0, 4), coded(0, 4), coded(0, 4), coded(0, 4)]
            .into_iter()
            .map(|p| dest_ack_logic(&mut rx, p))
            .collect();
        assert_eq!(
            events,
            vec![
                AckEvent::Ack { next: 1 },
                AckEvent::PseudoAck { next: 1, dof: 1 },
                AckEvent::PseudoAck { next: 1, dof: 2 },
                AckEvent::Ack { next: 4 },
            ]
        );
        // the next block starts at P5
        assert_eq!(dest_ack_logic(&mut rx, data(4, 4, 5)), AckEvent::Ack { next: 5 });
    }

    #[test]
    fn unhelpful_packets_draw_duplicates() {
        // P1, P3, P4 lost; P2 arrives, then P5..P7 of the next block
        let mut rx = Receiver::new();
        assert_eq!(dest_ack_logic(&mut rx, data(1, 0, 4)), AckEvent::PseudoAck { next: 0, dof: 1 });
        for seq in 4..7 {
            assert_eq!(dest_ack_logic(&mut rx, data(seq, 4, 5)), AckEvent::DuplicateAck { next: 0 });
        }
        assert_eq!(dest_ack_logic(&mut rx, coded(4, 5)), AckEvent::DuplicateAck { next: 0 });
        assert_eq!(dest_ack_logic(&mut rx, data(1, 0, 4)), AckEvent::DuplicateAck { next: 0 });
    }
}
