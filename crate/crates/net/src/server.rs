//! Websocket control server.
//!
//! One driver thread owns the [`Simulation`]; each client connection runs on
//! its own thread and talks to the driver only through a command channel and
//! a bounded outbox. A slow client loses its oldest snapshots, never stalls
//! the driver.

use std::collections::VecDeque;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use ccsim_core::sim::{SimCommand, SimEvent, Simulation};
use tungstenite::{Message, WebSocket};

use crate::pacing::Pacer;
use crate::protocol::{ClientCommand, ServerMessage};
use crate::Result;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: String,
    /// Snapshots buffered per client before the oldest are dropped.
    pub queue_depth: usize,
    /// Simulated seconds per wall second; 0 runs unpaced.
    pub speed: f64,
    pub start_paused: bool,
    /// Client socket read timeout; bounds outbound latency.
    pub poll: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8765".into(),
            queue_depth: 256,
            speed: 1.0,
            start_paused: false,
            poll: Duration::from_millis(5),
        }
    }
}

#[derive(Debug)]
enum Outgoing {
    Snapshot(String),
    Other(String),
}

#[derive(Debug, Default)]
struct Outbox {
    queue: VecDeque<Outgoing>,
    snapshots: usize,
    dropped: u64,
}

#[derive(Debug)]
struct ClientSlot {
    id: u64,
    depth: usize,
    outbox: Mutex<Outbox>,
}

impl ClientSlot {
    fn push(&self, msg: Outgoing) {
        let mut ob = self.outbox.lock().unwrap();
        if let Outgoing::Snapshot(_) = msg {
            if ob.snapshots >= self.depth {
                if let Some(i) = ob.queue.iter().position(|m| matches!(m, Outgoing::Snapshot(_))) {
                    ob.queue.remove(i);
                    ob.snapshots -= 1;
                    ob.dropped += 1;
                }
            }
            ob.snapshots += 1;
        }
        ob.queue.push_back(msg);
    }

    fn take(&self) -> (Vec<Outgoing>, u64) {
        let mut ob = self.outbox.lock().unwrap();
        ob.snapshots = 0;
        let dropped = std::mem::take(&mut ob.dropped);
        (ob.queue.drain(..).collect(), dropped)
    }
}

enum Inbound {
    Join(Arc<ClientSlot>),
    Leave(u64),
    Command(u64, ClientCommand),
}

/// A running server. Dropping it without [`ServerHandle::shutdown`] leaves
/// the threads running until process exit.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    driver: Option<JoinHandle<Simulation>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("ws://{}", self.addr)
    }

    /// Blocks until the driver exits; for servers started with
    /// [`serve_until`] and stopped through their flag.
    pub fn join(mut self) -> Option<Simulation> {
        let sim = self.driver.take().and_then(|d| d.join().ok());
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(a) = self.accept.take() {
            let _ = a.join();
        }
        sim
    }

    /// Stops every thread and returns the simulation in its final state.
    pub fn shutdown(self) -> Option<Simulation> {
        self.stop.store(true, Ordering::SeqCst);
        self.join()
    }
}

pub fn serve(sim: Simulation, cfg: ServerConfig) -> Result<ServerHandle> {
    serve_until(sim, cfg, Arc::new(AtomicBool::new(false)))
}

/// Like [`serve`], stopping when `stop` is set.
pub fn serve_until(mut sim: Simulation, cfg: ServerConfig, stop: Arc<AtomicBool>) -> Result<ServerHandle> {
    let listener = TcpListener::bind(&cfg.bind)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = mpsc::channel::<Inbound>();
    if cfg.start_paused {
        sim.apply(SimCommand::Pause)?;
    }
    log::info!("control server listening on ws://{addr}");

    let driver = {
        let stop = Arc::clone(&stop);
        let cfg = cfg.clone();
        thread::Builder::new()
            .name("sim-driver".into())
            .spawn(move || drive(sim, &cfg, rx, &stop))?
    };
    let accept = {
        let stop = Arc::clone(&stop);
        thread::Builder::new().name("ws-accept".into()).spawn(move || {
            let next_id = AtomicU64::new(1);
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let slot = Arc::new(ClientSlot {
                    id: next_id.fetch_add(1, Ordering::SeqCst),
                    depth: cfg.queue_depth.max(1),
                    outbox: Mutex::default(),
                });
                let tx = tx.clone();
                let stop = Arc::clone(&stop);
                let poll = cfg.poll;
                let _ = thread::Builder::new()
                    .name(format!("ws-client-{}", slot.id))
                    .spawn(move || client_session(stream, slot, tx, &stop, poll));
            }
        })?
    };
    Ok(ServerHandle {
        addr,
        stop,
        accept: Some(accept),
        driver: Some(driver),
    })
}

fn client_session(stream: TcpStream, slot: Arc<ClientSlot>, tx: Sender<Inbound>, stop: &AtomicBool, poll: Duration) {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
    // Snapshots are small frames; do not let Nagle hold them back.
    let _ = stream.set_nodelay(true);
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            log::warn!("websocket handshake with {peer} failed: {e}");
            return;
        }
    };
    let timeouts = ws
        .get_ref()
        .set_read_timeout(Some(poll))
        .and_then(|_| ws.get_ref().set_write_timeout(Some(poll)));
    if timeouts.is_err() || tx.send(Inbound::Join(Arc::clone(&slot))).is_err() {
        return;
    }
    log::info!("client {} connected from {peer}", slot.id);
    let reason = run_client(&mut ws, &slot, &tx, stop);
    log::info!("client {} disconnected: {reason}", slot.id);
    let _ = ws.close(None);
    let _ = ws.flush();
    let _ = tx.send(Inbound::Leave(slot.id));
}

fn would_block(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn run_client(ws: &mut WebSocket<TcpStream>, slot: &ClientSlot, tx: &Sender<Inbound>, stop: &AtomicBool) -> String {
    // While the socket cannot take more bytes, messages stay in the bounded
    // outbox rather than piling up in the websocket write buffer.
    let mut backlogged = false;
    loop {
        if stop.load(Ordering::SeqCst) {
            return "server stopping".into();
        }
        if backlogged {
            match ws.flush() {
                Ok(()) => backlogged = false,
                Err(e) if would_block(&e) => {}
                Err(e) => return e.to_string(),
            }
        }
        if !backlogged {
            let (msgs, dropped) = slot.take();
            let drop_event =
                (dropped > 0).then(|| ServerMessage::Event(SimEvent::SnapshotsDropped { count: dropped }).to_json());
            let texts = drop_event.into_iter().chain(msgs.into_iter().map(|m| {
                let (Outgoing::Snapshot(t) | Outgoing::Other(t)) = m;
                t
            }));
            for text in texts {
                match ws.write(Message::text(text)) {
                    Ok(()) => {}
                    Err(e) if would_block(&e) => backlogged = true,
                    Err(e) => return e.to_string(),
                }
            }
            match ws.flush() {
                Ok(()) => {}
                Err(e) if would_block(&e) => backlogged = true,
                Err(e) => return e.to_string(),
            }
        }
        match ws.read() {
            Ok(Message::Text(text)) => match ClientCommand::parse(&text) {
                Ok(cmd) => {
                    if tx.send(Inbound::Command(slot.id, cmd)).is_err() {
                        return "simulation stopped".into();
                    }
                }
                Err((id, reason)) => slot.push(Outgoing::Other(ServerMessage::Error { id, reason }.to_json())),
            },
            Ok(Message::Binary(_)) => slot.push(Outgoing::Other(
                ServerMessage::Error {
                    id: None,
                    reason: "binary frames are not supported".into(),
                }
                .to_json(),
            )),
            Ok(Message::Close(_)) => return "closed by peer".into(),
            Ok(_) => {}
            Err(e) if would_block(&e) => {}
            Err(e) => return e.to_string(),
        }
    }
}

struct Clients(Vec<Arc<ClientSlot>>);

impl Clients {
    fn broadcast(&self, msg: &ServerMessage) {
        let text = msg.to_json();
        let snapshot = matches!(msg, ServerMessage::Snapshot(_));
        for c in &self.0 {
            c.push(if snapshot {
                Outgoing::Snapshot(text.clone())
            } else {
                Outgoing::Other(text.clone())
            });
        }
    }

    fn send_to(&self, id: u64, msg: &ServerMessage) {
        if let Some(c) = self.0.iter().find(|c| c.id == id) {
            c.push(Outgoing::Other(msg.to_json()));
        }
    }
}

fn period_of(sim: &Simulation, speed: f64) -> Duration {
    if speed > 0.0 {
        Duration::from_secs_f64(sim.config().chamber.tick / speed)
    } else {
        Duration::ZERO
    }
}

fn drive(mut sim: Simulation, cfg: &ServerConfig, rx: Receiver<Inbound>, stop: &AtomicBool) -> Simulation {
    let mut clients = Clients(Vec::new());
    let mut pacer = Pacer::new(period_of(&sim, cfg.speed));
    let mut was_running = !sim.is_paused();
    let idle = Duration::from_millis(20);
    while !stop.load(Ordering::SeqCst) {
        let running = !sim.is_paused();
        if running && !was_running {
            pacer.reset();
        }
        was_running = running;
        let wait = if sim.wants_tick() {
            pacer.deadline().saturating_duration_since(Instant::now())
        } else {
            idle
        };
        match rx.recv_timeout(wait) {
            Ok(msg) => {
                handle_inbound(&mut sim, &mut clients, msg);
                continue;
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => {
                if !sim.wants_tick() {
                    thread::sleep(idle);
                }
            }
        }
        let stepping = sim.is_paused() && sim.wants_tick();
        if sim.wants_tick() && (stepping || pacer.is_due()) {
            match sim.tick() {
                Ok(()) => clients.broadcast(&ServerMessage::Snapshot(sim.snapshot())),
                Err(e) => {
                    log::error!("tick failed: {e}; pausing");
                    let _ = sim.apply(SimCommand::Pause);
                    clients.broadcast(&ServerMessage::Error {
                        id: None,
                        reason: format!("tick failed: {e}"),
                    });
                }
            }
            for ev in sim.drain_events() {
                clients.broadcast(&ServerMessage::Event(ev));
            }
            if !stepping {
                pacer.advance();
            }
        }
    }
    sim
}

fn handle_inbound(sim: &mut Simulation, clients: &mut Clients, msg: Inbound) {
    match msg {
        Inbound::Join(slot) => {
            slot.push(Outgoing::Other(ServerMessage::Snapshot(sim.snapshot()).to_json()));
            clients.0.push(slot);
        }
        Inbound::Leave(id) => clients.0.retain(|c| c.id != id),
        Inbound::Command(client, ClientCommand { id, command }) => {
            let reply = match sim.apply(command) {
                Ok(()) => ServerMessage::Ack { id },
                Err(e) => ServerMessage::Error {
                    id,
                    reason: e.to_string(),
                },
            };
            clients.send_to(client, &reply);
            for ev in sim.drain_events() {
                clients.broadcast(&ServerMessage::Event(ev));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slot(depth: usize) -> ClientSlot {
        ClientSlot {
            id: 1,
            depth,
            outbox: Mutex::default(),
        }
    }

    #[test]
    fn outbox_drops_oldest_snapshots_only() {
        let s = slot(2);
        s.push(Outgoing::Snapshot("s1".into()));
        s.push(Outgoing::Other("ack".into()));
        s.push(Outgoing::Snapshot("s2".into()));
        s.push(Outgoing::Snapshot("s3".into()));
        s.push(Outgoing::Snapshot("s4".into()));
        let (msgs, dropped) = s.take();
        let texts: Vec<String> = msgs
            .into_iter()
            .map(|m| match m {
                Outgoing::Snapshot(t) | Outgoing::Other(t) => t,
            })
            .collect();
        assert_eq!(texts, vec!["ack", "s3", "s4"]);
        assert_eq!(dropped, 2);
        assert_eq!(s.take().1, 0);
    }
}
