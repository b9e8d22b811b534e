/// Slot counter with the slow time scale derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotClock {
    t: u64,
    period: u64,
}

impl SlotClock {
    /// `period` is the number of slots per super slot; zero is bumped to one.
    pub fn new(period: u64) -> Self {
        Self { t: 0, period: period.max(1) }
    }

    pub fn at(t: u64, period: u64) -> Self {
        Self { t, period: period.max(1) }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn tau(&self) -> u64 {
        self.t / self.period
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    /// True on the first slot of a super slot.
    pub fn at_boundary(&self) -> bool {
        self.t.is_multiple_of(self.period)
    }

    pub fn advance(self) -> Self {
        Self { t: self.t + 1, period: self.period }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries() {
        let c = SlotClock::at(0, 1000).advance();
        assert_eq!((c.t(), c.tau()), (1, 0));
        let c = SlotClock::at(999, 1000).advance();
        assert_eq!((c.t(), c.tau()), (1000, 1));
        assert!(c.at_boundary());
        let c = SlotClock::at(1999, 1000).advance();
        assert_eq!((c.t(), c.tau()), (2000, 2));
    }
}
