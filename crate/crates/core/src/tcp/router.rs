use std::collections::VecDeque;

/// What a run of packets carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BurstKind {
    /// Data packets `first .. first + len` of the block.
    Data { first: u32 },
    Coded,
}

/// Packets of one block and kind queued together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Burst {
    pub block: u64,
    pub kind: BurstKind,
    pub len: u32,
}

impl Burst {
    pub fn coded(block: u64, len: u32) -> Self {
        Self { block, kind: BurstKind::Coded, len }
    }

    pub fn data(block: u64, first: u32, len: u32) -> Self {
        Self { block, kind: BurstKind::Data { first }, len }
    }

    /// First `n` packets and the rest.
    fn split_front(self, n: u32) -> (Burst, Burst) {
        let n = n.min(self.len);
        let rest_kind = match self.kind {
            BurstKind::Data { first } => BurstKind::Data { first: first + n },
            BurstKind::Coded => BurstKind::Coded,
        };
        (Burst { len: n, ..self }, Burst { kind: rest_kind, len: self.len - n, ..self })
    }
}

/// Per-connection queues at a wireless router: a FIFO for high priority and
/// a LIFO for low priority. `buffer` caps each queue between slots; `None`
/// keeps nothing from one slot to the next.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RouterQueues {
    high: VecDeque<Burst>,
    low: Vec<Burst>,
    pub buffer: Option<u32>,
}

impl RouterQueues {
    pub fn new(buffer: Option<u32>) -> Self {
        Self { high: VecDeque::new(), low: Vec::new(), buffer }
    }

    pub fn high_len(&self) -> u32 {
        self.high.iter().map(|b| b.len).sum()
    }

    pub fn low_len(&self) -> u32 {
        self.low.iter().map(|b| b.len).sum()
    }

    /// Packets of `block` still waiting in either queue.
    pub fn queued(&self, block: u64) -> u32 {
        self.high.iter().chain(&self.low).filter(|b| b.block == block).map(|b| b.len).sum()
    }

    fn trim(&mut self) {
        match self.buffer {
            None => {
                self.high.clear();
                self.low.clear();
            }
            Some(cap) => {
                // tail drop for the FIFO
                let mut excess = self.high_len().saturating_sub(cap);
                while excess > 0 {
                    let Some(b) = self.high.back_mut() else { break };
                    let cut = excess.min(b.len);
                    b.len -= cut;
                    excess -= cut;
                    if b.len == 0 {
                        self.high.pop_back();
                    }
                }
                // the LIFO sheds its oldest packets, at the bottom
                let mut excess = self.low_len().saturating_sub(cap);
                let mut drop_front = 0;
                for b in self.low.iter_mut() {
                    if excess == 0 {
                        break;
                    }
                    let cut = excess.min(b.len);
                    if let BurstKind::Data { first } = b.kind {
                        b.kind = BurstKind::Data { first: first + cut };
                    }
                    b.len -= cut;
                    excess -= cut;
                    if b.len == 0 {
                        drop_front += 1;
                    }
                }
                self.low.drain(..drop_front);
            }
        }
    }
}

/// Enqueue this slot's arrivals and send up to `capacity` packets: high
/// priority first in FIFO order, then low priority newest first.
pub fn router_serve(
    q: &mut RouterQueues,
    capacity: u32,
    incoming_high: &[Burst],
    incoming_low: &[Burst],
) -> (Vec<Burst>, Vec<Burst>) {
    q.high.extend(incoming_high.iter().copied().filter(|b| b.len > 0));
    q.low.extend(incoming_low.iter().copied().filter(|b| b.len > 0));
    let mut left = capacity;
    let mut sent_high = Vec::new();
    while left > 0 {
        let Some(b) = q.high.pop_front() else { break };
        let (now, rest) = b.split_front(left);
        left -= now.len;
        sent_high.push(now);
        if rest.len > 0 {
            q.high.push_front(rest);
        }
    }
    let mut sent_low = Vec::new();
    while left > 0 {
        let Some(b) = q.low.pop() else { break };
        // newest packets sit at the back of a burst
        let (older, newest) = b.split_front(b.len.saturating_sub(left));
        left -= newest.len;
        sent_low.push(newest);
        if older.len > 0 {
            q.low.push(older);
        }
    }
    q.trim();
    (sent_high, sent_low)
}

pub fn total(bursts: &[Burst]) -> u32 {
    bursts.iter().map(|b| b.len).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn singles(n: u64) -> Vec<Burst> {
        (0..n).map(|k| Burst::coded(k, 1)).collect()
    }

    #[test]
    fn saturation_cases() {
        let mut q = RouterQueues::new(None);
        let (h, l) = router_serve(&mut q, 7, &[Burst::data(0, 0, 7)], &singles(5));
        assert_eq!((total(&h), total(&l)), (7, 0));
        let (h, l) = router_serve(&mut q, 7, &[], &[Burst::coded(1, 7)]);
        assert_eq!((total(&h), total(&l)), (0, 7));
    }

    #[test]
    fn low_priority_is_lifo() {
        let mut q = RouterQueues::new(None);
        let (h, l) = router_serve(&mut q, 7, &[Burst::data(0, 0, 3)], &singles(10));
        assert_eq!((total(&h), total(&l)), (3, 4));
        let blocks: Vec<u64> = l.iter().map(|b| b.block).collect();
        assert_eq!(blocks, vec![9, 8, 7, 6]);
    }

    #[test]
    fn fifo_splits_and_carries() {
        let mut q = RouterQueues::new(Some(10));
        let (h, _) = router_serve(&mut q, 4, &[Burst::data(2, 0, 6)], &[]);
        assert_eq!(h, vec![Burst::data(2, 0, 4)]);
        let (h, _) = router_serve(&mut q, 4, &[Burst::data(3, 0, 1)], &[]);
        assert_eq!(h, vec![Burst::data(2, 4, 2), Burst::data(3, 0, 1)]);
    }

    #[test]
    fn buffers_are_capped() {
        let mut q = RouterQueues::new(Some(5));
        router_serve(&mut q, 2, &[Burst::data(0, 0, 20)], &[Burst::coded(0, 8), Burst::coded(1, 8)]);
        assert_eq!(q.high_len(), 5);
        assert_eq!(q.low_len(), 5);
        // the oldest low packets went first
        assert!(q.low.iter().all(|b| b.block == 1));
        let (h, _) = router_serve(&mut q, 1, &[], &[]);
        assert_eq!(h, vec![Burst::data(0, 2, 1)]);
    }
}
