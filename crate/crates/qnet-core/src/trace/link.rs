use super::schedule::TraceSchedule;

/// Every delivery opportunity moves one MTU worth of bytes.
pub const MTU_BYTES: u64 = 1500;

/// Byte-accounted FIFO link shaped by a delivery-opportunity schedule.
///
/// Sends must arrive in non-decreasing time order (the event loops do). The
/// delivery time of a packet is the millisecond whose opportunity covers its
/// last byte, walking opportunities in order from the later of "now" and the
/// end of the committed backlog. Skipped opportunities are gone for good.
#[derive(Debug, Clone)]
pub struct EmulatedLink {
    sched: TraceSchedule,
    cycle: u64,
    idx: usize,
    used_in_line: u64,
    last_send_ms: u64,
    /// Total bytes accepted / opportunity lines consumed or skipped, for the
    /// conservation invariants.
    bytes_sent: u64,
    lines_passed: u64,
}

impl EmulatedLink {
    pub fn new(sched: TraceSchedule) -> Self {
        EmulatedLink {
            sched,
            cycle: 0,
            idx: 0,
            used_in_line: 0,
            last_send_ms: 0,
            bytes_sent: 0,
            lines_passed: 0,
        }
    }

    pub fn schedule(&self) -> &TraceSchedule {
        &self.sched
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn lines_passed(&self) -> u64 {
        self.lines_passed
    }

    fn line_time(&self) -> u64 {
        self.sched.times()[self.idx] + self.cycle * self.sched.period()
    }

    fn advance_line(&mut self) {
        self.lines_passed += 1;
        self.idx += 1;
        if self.idx == self.sched.times().len() {
            self.idx = 0;
            self.cycle += 1;
        }
        self.used_in_line = 0;
    }

    /// Queues `bytes` at `now_ms` and returns the millisecond the last byte
    /// clears the link.
    pub fn send(&mut self, bytes: u64, now_ms: u64) -> u64 {
        assert!(bytes > 0, "packet must carry bytes");
        assert!(
            now_ms >= self.last_send_ms,
            "sends must be time-ordered per link"
        );
        self.last_send_ms = now_ms;
        self.bytes_sent += bytes;

        // Opportunities strictly before `now` are wasted unless the backlog
        // already consumed into the current line at a time >= now.
        while self.line_time() < now_ms {
            self.advance_line();
        }

        let mut remaining = bytes;
        loop {
            let avail = MTU_BYTES - self.used_in_line;
            if avail == 0 {
                self.advance_line();
                continue;
            }
            let take = remaining.min(avail);
            self.used_in_line += take;
            remaining -= take;
            if remaining == 0 {
                return self.line_time();
            }
            self.advance_line();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::parse_trace_text;

    fn link(text: &str) -> EmulatedLink {
        EmulatedLink::new(parse_trace_text(text).unwrap())
    }

    #[test]
    fn small_packet_rides_one_opportunity() {
        let mut l = link("3\n10\n");
        assert_eq!(l.send(1024, 3), 3);
    }

    #[test]
    fn payload_larger_than_mtu_needs_two() {
        // One opportunity per ms: 3000 bytes complete at the second one.
        let mut l = link("1\n2\n3\n4\n");
        assert_eq!(l.send(3000, 0), 2);
    }

    #[test]
    fn leftover_bytes_serve_the_next_packet() {
        // Opportunities at ms 0 (well, 0 is rejected; shift to 1) and 5.
        let mut l = link("1\n5\n");
        // First 1024-byte packet completes at ms 1 leaving 476 spare bytes;
        // the second packet uses them and finishes at ms 5.
        assert_eq!(l.send(1024, 0), 1);
        assert_eq!(l.send(1024, 0), 5);
    }

    #[test]
    fn idle_gaps_forfeit_opportunities() {
        let mut l = link("1\n2\n3\n100\n");
        assert_eq!(l.send(1500, 1), 1);
        // Nothing pending at ms 2-3; at ms 50 those lines are gone and only
        // the ms-100 line remains in this cycle.
        assert_eq!(l.send(1500, 50), 100);
        // First line of cycle 2 sits at 100 + 1 = 101.
        assert_eq!(l.send(1500, 100), 101);
    }

    #[test]
    fn wraps_cyclically_with_last_timestamp_as_period() {
        let mut l = link("2\n4\n");
        assert_eq!(l.send(1500, 0), 2);
        assert_eq!(l.send(1500, 0), 4);
        // Cycle 2: opportunities at 6 and 8.
        assert_eq!(l.send(1500, 0), 6);
        assert_eq!(l.send(1500, 0), 8);
        assert_eq!(l.send(1500, 9), 10);
    }

    #[test]
    fn delivery_order_is_fifo() {
        let mut l = link("1\n2\n3\n4\n5\n");
        let mut prev = 0;
        for k in 0..5 {
            let d = l.send(700, k);
            assert!(d >= prev, "FIFO deliveries must be ordered");
            prev = d;
        }
    }

    #[test]
    fn byte_conservation_bound() {
        let mut l = link("1\n1\n2\n3\n");
        let mut rng = crate::rng::stream(3, 9);
        use rand::Rng;
        let mut now = 0u64;
        for _ in 0..200 {
            now += rng.gen_range(0..3);
            let d = l.send(rng.gen_range(1..=2000), now);
            assert!(d >= now);
        }
        // Every line passed contributes at most MTU bytes; the current line
        // may be partially used.
        assert!(l.bytes_sent() <= (l.lines_passed() + 1) * MTU_BYTES);
    }
}
