use std::collections::VecDeque;

use rand::Rng;
use rand_pcg::Pcg64Mcg;

use super::Measurement;
use crate::rng::{stream, STREAM_FACILITY};

/// The network-plus-cloud model: one unbounded FIFO queue and one server.
///
/// The in-service packet departs in a slot with probability `q`; on
/// departure the queue head is promoted immediately but cannot itself depart
/// until the next slot, so every packet spends at least one slot in service.
#[derive(Debug, Clone)]
pub struct FacilityState {
    q: f64,
    queue: VecDeque<Measurement>,
    in_service: Option<Measurement>,
    rng: Pcg64Mcg,
    rng_seed: u64,
    arrived: u64,
    departed: u64,
}

impl FacilityState {
    pub fn new(q: f64, seed: u64) -> Self {
        assert!(q > 0.0 && q <= 1.0, "q must be in (0,1], got {q}");
        FacilityState {
            q,
            queue: VecDeque::new(),
            in_service: None,
            rng: stream(seed, STREAM_FACILITY),
            rng_seed: seed,
            arrived: 0,
            departed: 0,
        }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Packets currently inside the facility (waiting + in service).
    pub fn in_flight(&self) -> usize {
        self.queue.len() + usize::from(self.in_service.is_some())
    }

    pub fn arrived(&self) -> u64 {
        self.arrived
    }

    pub fn departed(&self) -> u64 {
        self.departed
    }

    /// A packet entering an idle facility begins service immediately;
    /// otherwise it waits at the queue tail.
    pub fn enqueue(&mut self, m: Measurement) {
        self.arrived += 1;
        if self.in_service.is_none() {
            debug_assert!(self.queue.is_empty());
            self.in_service = Some(m);
        } else {
            self.queue.push_back(m);
        }
    }

    /// Advances one slot. The in-service packet departs with probability
    /// `q`; the returned measurement (if any) reaches the agent at the next
    /// decision instant.
    pub fn step(&mut self) -> Option<Measurement> {
        let packet = self.in_service?;
        if self.rng.gen::<f64>() < self.q {
            self.departed += 1;
            self.in_service = self.queue.pop_front();
            Some(packet)
        } else {
            None
        }
    }
}
