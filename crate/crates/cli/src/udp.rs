//! Loopback UDP transport for socket demos.
//!
//! The station binds a fixed port and every robot an ephemeral one. Datagram arrival depends on
//! the OS scheduler, so runs over this transport are not reproducible.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{Ipv4Addr, SocketAddr, UdpSocket};

use tending_core::bridge::{Endpoint, Transport, FRAME_LEN};

#[derive(Debug)]
pub struct UdpTransport {
    sockets: BTreeMap<Endpoint, UdpSocket>,
    addrs: BTreeMap<Endpoint, SocketAddr>,
    out: UdpSocket,
}

impl UdpTransport {
    /// Binds the station on `127.0.0.1:station_port` (0 picks a free port) and `robots` robot
    /// sockets.
    pub fn bind(station_port: u16, robots: usize) -> std::io::Result<Self> {
        let mut sockets = BTreeMap::new();
        let mut addrs = BTreeMap::new();
        let mut add = |ep: Endpoint, port: u16| -> std::io::Result<()> {
            let s = UdpSocket::bind((Ipv4Addr::LOCALHOST, port))?;
            s.set_nonblocking(true)?;
            addrs.insert(ep, s.local_addr()?);
            sockets.insert(ep, s);
            Ok(())
        };
        add(Endpoint::Station, station_port)?;
        for id in 0..robots {
            let id =
                u8::try_from(id).map_err(|_| std::io::Error::new(ErrorKind::InvalidInput, "robot ids are 8-bit"))?;
            add(Endpoint::Robot(id), 0)?;
        }
        let out = UdpSocket::bind((Ipv4Addr::LOCALHOST, 0))?;
        Ok(Self { sockets, addrs, out })
    }

    pub fn station_addr(&self) -> SocketAddr {
        self.addrs[&Endpoint::Station]
    }
}

impl Transport for UdpTransport {
    type Error = std::io::Error;

    fn send(&mut self, to: Endpoint, bytes: &[u8]) -> std::io::Result<()> {
        let addr = self
            .addrs
            .get(&to)
            .ok_or_else(|| std::io::Error::new(ErrorKind::NotFound, format!("no socket for {to:?}")))?;
        self.out.send_to(bytes, addr).map(drop)
    }

    fn recv(&mut self, at: Endpoint) -> std::io::Result<Option<Vec<u8>>> {
        let Some(sock) = self.sockets.get(&at) else {
            return Ok(None);
        };
        let mut buf = [0u8; 2 * FRAME_LEN];
        match sock.recv(&mut buf) {
            Ok(n) => Ok(Some(buf[..n].to_vec())),
            Err(e) if e.kind() == ErrorKind::WouldBlock => Ok(None),
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::{Duration, Instant};

    #[test]
    fn loopback_delivery() {
        let mut t = UdpTransport::bind(0, 2).unwrap();
        assert!(t.recv(Endpoint::Robot(1)).unwrap().is_none());
        t.send(Endpoint::Robot(1), &[7; FRAME_LEN]).unwrap();
        let deadline = Instant::now() + Duration::from_secs(2);
        let got = loop {
            if let Some(b) = t.recv(Endpoint::Robot(1)).unwrap() {
                break b;
            }
            assert!(Instant::now() < deadline, "datagram never arrived");
            std::thread::sleep(Duration::from_millis(1));
        };
        assert_eq!(got, vec![7; FRAME_LEN]);
        assert!(t.recv(Endpoint::Robot(0)).unwrap().is_none());
        assert!(t.send(Endpoint::Robot(9), &[0]).is_err());
    }
}
