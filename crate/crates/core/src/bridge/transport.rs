use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;
use core::fmt::Display;

/// Addressable participant of the bridge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Station,
    Robot(u8),
}

/// Carries raw frame bytes between endpoints. Delivery decisions are made by the channel model
/// before `send`, so a transport only has to move bytes.
pub trait Transport {
    type Error: Display;

    fn send(&mut self, to: Endpoint, bytes: &[u8]) -> Result<(), Self::Error>;

    /// Next pending datagram for `at`, if any.
    fn recv(&mut self, at: Endpoint) -> Result<Option<Vec<u8>>, Self::Error>;
}

/// Deterministic FIFO queues per endpoint.
#[derive(Debug, Clone, Default)]
pub struct InProcessTransport {
    queues: BTreeMap<Endpoint, VecDeque<Vec<u8>>>,
    sent: u64,
}

impl InProcessTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn frames_sent(&self) -> u64 {
        self.sent
    }
}

impl Transport for InProcessTransport {
    type Error = core::convert::Infallible;

    fn send(&mut self, to: Endpoint, bytes: &[u8]) -> Result<(), Self::Error> {
        self.queues.entry(to).or_default().push_back(bytes.to_vec());
        self.sent += 1;
        Ok(())
    }

    fn recv(&mut self, at: Endpoint) -> Result<Option<Vec<u8>>, Self::Error> {
        Ok(self.queues.get_mut(&at).and_then(VecDeque::pop_front))
    }
}
