//! UDP transport: a command sender with ACK and bounded retransmit, and the
//! haptic simulator endpoint.

use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::Serialize;

use super::haptic::HapticState;
use super::protocol::{decode, encode_ack, encode_datagram, encode_state, Command, Datagram};

pub const DEFAULT_DECODER_PORT: u16 = 7801;
pub const DEFAULT_SIMULATOR_PORT: u16 = 7802;

#[derive(Clone, Debug, PartialEq)]
pub struct SenderConfig {
    /// Retransmissions after the first attempt.
    pub retries: u32,
    pub ack_timeout: Duration,
}

impl Default for SenderConfig {
    fn default() -> Self {
        SenderConfig {
            retries: 3,
            ack_timeout: Duration::from_millis(200),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Delivery {
    Acked { attempts: u32 },
    Lost { attempts: u32 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SendStats {
    pub commands: u64,
    pub datagrams: u64,
    pub acked: u64,
    pub lost: u64,
    /// Last STATE report seen from the simulator.
    pub last_state: Option<(u32, f64)>,
}

#[derive(Debug)]
pub struct CommandSender {
    socket: UdpSocket,
    peer: SocketAddr,
    cfg: SenderConfig,
    pub stats: SendStats,
}

impl CommandSender {
    pub fn bind(local: impl ToSocketAddrs, peer: impl ToSocketAddrs, cfg: SenderConfig) -> io::Result<Self> {
        let socket = UdpSocket::bind(local)?;
        let peer = peer
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no peer address"))?;
        Ok(CommandSender {
            socket,
            peer,
            cfg,
            stats: SendStats::default(),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    /// Send `cmd` and wait for its ACK, retransmitting up to `retries` times.
    pub fn send(&mut self, cmd: &Command) -> io::Result<Delivery> {
        let bytes = encode_datagram(cmd).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        self.stats.commands += 1;
        let mut buf = [0u8; 64];
        for attempt in 1..=self.cfg.retries + 1 {
            self.socket.send_to(&bytes, self.peer)?;
            self.stats.datagrams += 1;
            let deadline = Instant::now() + self.cfg.ack_timeout;
            loop {
                let left = deadline.saturating_duration_since(Instant::now());
                if left.is_zero() {
                    break;
                }
                self.socket.set_read_timeout(Some(left))?;
                let n = match self.socket.recv_from(&mut buf) {
                    Ok((n, _)) => n,
                    Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => break,
                    Err(e) => return Err(e),
                };
                match decode(&buf[..n]) {
                    Ok(Datagram::Ack { seq }) if seq == cmd.seq => {
                        self.stats.acked += 1;
                        return Ok(Delivery::Acked { attempts: attempt });
                    }
                    Ok(Datagram::State { seq, position }) => self.stats.last_state = Some((seq, position)),
                    Ok(other) => debug!("ignoring {other:?} while waiting for ACK {}", cmd.seq),
                    Err(e) => warn!("malformed datagram from simulator: {e}"),
                }
            }
            if attempt <= self.cfg.retries {
                debug!("no ACK for seq {} (attempt {attempt}), retransmitting", cmd.seq);
            }
        }
        self.stats.lost += 1;
        warn!(
            "loss event: command seq {} dropped after {} attempts",
            cmd.seq,
            self.cfg.retries + 1
        );
        Ok(Delivery::Lost {
            attempts: self.cfg.retries + 1,
        })
    }

    /// Collect STATE reports that arrived after the last ACK.
    pub fn drain_states(&mut self, wait: Duration) -> io::Result<()> {
        let mut buf = [0u8; 64];
        let deadline = Instant::now() + wait;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(());
            }
            self.socket.set_read_timeout(Some(left))?;
            match self.socket.recv_from(&mut buf) {
                Ok((n, _)) => {
                    if let Ok(Datagram::State { seq, position }) = decode(&buf[..n]) {
                        self.stats.last_state = Some((seq, position));
                    }
                }
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => return Ok(()),
                Err(e) => return Err(e),
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SimulatorStats {
    pub received: u64,
    pub applied: u64,
    pub stale: u64,
    pub dropped: u64,
    pub malformed: u64,
}

type DropFilter = Box<dyn FnMut(&Command) -> bool + Send>;

/// Single-threaded event loop applying COMMAND datagrams to a
/// [`HapticState`]. Every received COMMAND is acknowledged, stale ones
/// included, and followed by a STATE report.
pub struct Simulator {
    socket: UdpSocket,
    pub state: HapticState,
    pub stats: SimulatorStats,
    /// `(seq, position)` after every applied command.
    pub trace: Vec<(u32, f64)>,
    drop_filter: Option<DropFilter>,
}

impl Simulator {
    pub fn bind(addr: impl ToSocketAddrs, step_cm: f64) -> io::Result<Self> {
        Ok(Simulator {
            socket: UdpSocket::bind(addr)?,
            state: HapticState::new(step_cm),
            stats: SimulatorStats::default(),
            trace: Vec::new(),
            drop_filter: None,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    /// Silently discard incoming commands for which `f` returns true, as if
    /// the network had lost them.
    pub fn set_drop_filter(&mut self, f: impl FnMut(&Command) -> bool + Send + 'static) {
        self.drop_filter = Some(Box::new(f));
    }

    fn handle(&mut self, bytes: &[u8], from: SocketAddr) -> io::Result<Option<(u32, f64)>> {
        let cmd = match decode(bytes) {
            Ok(Datagram::Command(c)) => c,
            Ok(other) => {
                debug!("simulator ignoring {other:?}");
                return Ok(None);
            }
            Err(e) => {
                self.stats.malformed += 1;
                warn!("simulator: {e}");
                return Ok(None);
            }
        };
        self.stats.received += 1;
        if let Some(f) = self.drop_filter.as_mut() {
            if f(&cmd) {
                self.stats.dropped += 1;
                return Ok(None);
            }
        }
        let applied = self.state.apply(&cmd);
        self.socket.send_to(&encode_ack(cmd.seq), from)?;
        self.socket.send_to(&encode_state(self.state.last_seq, self.state.position), from)?;
        if applied {
            self.stats.applied += 1;
            self.trace.push((cmd.seq, self.state.position));
            Ok(Some((cmd.seq, self.state.position)))
        } else {
            self.stats.stale += 1;
            Ok(None)
        }
    }

    /// Serve until `stop` is set or no datagram arrives for `idle`.
    pub fn run(
        &mut self,
        stop: &AtomicBool,
        idle: Option<Duration>,
        mut on_update: impl FnMut(u32, f64),
    ) -> io::Result<()> {
        let poll = Duration::from_millis(20);
        self.socket.set_read_timeout(Some(poll))?;
        let mut buf = [0u8; 128];
        let mut last = Instant::now();
        while !stop.load(Ordering::Relaxed) {
            match self.socket.recv_from(&mut buf) {
                Ok((n, from)) => {
                    last = Instant::now();
                    if let Some((seq, pos)) = self.handle(&buf[..n], from)? {
                        on_update(seq, pos);
                    }
                }
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                    if idle.is_some_and(|d| last.elapsed() >= d) {
                        break;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}
