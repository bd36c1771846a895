//! Exports path loss to an external RF emulator over a newline-delimited
//! TCP text protocol, plus a mock endpoint for tests.
//!
//! The simulation thread only ever touches a single-slot mailbox; a worker
//! thread owns the socket, so endpoint latency or outages never stall ticks.

use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use ccsim_core::sim::PathLossSink;
use serde::{Deserialize, Serialize};

use crate::{NetError, Result};

pub const VALUE_PLACEHOLDER: &str = "{val}";
pub const INDEX_PLACEHOLDER: &str = "{idx}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeConfig {
    pub host: String,
    pub port: u16,
    pub command_template: String,
    pub channel_index: u32,
    /// Minimum spacing between pushes, seconds. Values offered faster are coalesced.
    pub min_interval: f64,
    /// First reconnect delay, seconds; doubles per attempt up to `max_backoff`.
    pub reconnect_backoff: f64,
    pub max_backoff: f64,
    /// Consecutive failed connection attempts before the bridge gives up.
    pub max_retries: u32,
    /// Seconds allowed for connecting and for each reply line.
    pub io_timeout: f64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 9090,
            command_template: "channelmod modify {idx} ploss {val}".into(),
            channel_index: 0,
            min_interval: 0.1,
            reconnect_backoff: 1.0,
            max_backoff: 30.0,
            max_retries: 8,
            io_timeout: 2.0,
        }
    }
}

impl BridgeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NetError::Config(m));
        if self.command_template.matches(VALUE_PLACEHOLDER).count() != 1 {
            return bad(format!("command_template must contain exactly one {VALUE_PLACEHOLDER}"));
        }
        if self.command_template.matches(INDEX_PLACEHOLDER).count() > 1 {
            return bad(format!("command_template may contain {INDEX_PLACEHOLDER} at most once"));
        }
        if self.command_template.contains('\n') {
            return bad("command_template must be a single line".into());
        }
        if !(self.min_interval >= 0.0 && self.min_interval.is_finite()) {
            return bad("min_interval must be >= 0".into());
        }
        if !(self.reconnect_backoff > 0.0 && self.max_backoff >= self.reconnect_backoff) {
            return bad("need 0 < reconnect_backoff <= max_backoff".into());
        }
        if !(self.io_timeout > 0.0 && self.io_timeout.is_finite()) {
            return bad("io_timeout must be > 0".into());
        }
        if self.host.is_empty() {
            return bad("host must not be empty".into());
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }

    /// The command line for `value_db`, formatted to one decimal.
    pub fn render(&self, value_db: f64) -> Result<String> {
        if !value_db.is_finite() {
            return Err(NetError::NonFinite(value_db));
        }
        Ok(self
            .command_template
            .replace(INDEX_PLACEHOLDER, &self.channel_index.to_string())
            .replace(VALUE_PLACEHOLDER, &format!("{value_db:.1}")))
    }

    /// Delays before successive reconnect attempts: doubling, capped.
    pub fn backoff_delays(&self) -> impl Iterator<Item = Duration> {
        let cap = self.max_backoff;
        std::iter::successors(Some(self.reconnect_backoff), move |d| Some((d * 2.0).min(cap)))
            .map(Duration::from_secs_f64)
    }
}

/// One line-oriented TCP session with the RF endpoint.
#[derive(Debug)]
pub struct RfSession {
    addr: String,
    writer: TcpStream,
    reader: BufReader<TcpStream>,
    greeting: Option<String>,
}

impl RfSession {
    /// Single connection attempt. A greeting line, if the endpoint sends one
    /// promptly, is consumed and kept.
    pub fn connect(cfg: &BridgeConfig) -> Result<Self> {
        let addr = cfg.endpoint();
        let timeout = Duration::from_secs_f64(cfg.io_timeout);
        let endpoint = |reason: String| NetError::Endpoint {
            addr: addr.clone(),
            reason,
        };
        let target = addr
            .to_socket_addrs()
            .map_err(|e| endpoint(e.to_string()))?
            .next()
            .ok_or_else(|| endpoint("no address".into()))?;
        let stream = TcpStream::connect_timeout(&target, timeout).map_err(|e| endpoint(e.to_string()))?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout.min(Duration::from_millis(300))))?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut line = String::new();
        let greeting = match reader.read_line(&mut line) {
            Ok(n) if n > 0 => Some(line.trim_end().to_string()),
            _ => None,
        };
        stream.set_read_timeout(Some(timeout))?;
        if let Some(g) = &greeting {
            log::info!(target: "rf", "connected to {addr}: {g}");
        } else {
            log::info!(target: "rf", "connected to {addr}");
        }
        Ok(Self {
            addr,
            writer: stream,
            reader,
            greeting,
        })
    }

    pub fn greeting(&self) -> Option<&str> {
        self.greeting.as_deref()
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    /// Sends `value_db` through the template and returns the reply line.
    pub fn push(&mut self, cfg: &BridgeConfig, value_db: f64) -> Result<String> {
        let line = cfg.render(value_db)?;
        self.send_line(&line)
    }

    /// Sends one raw line and waits for the reply line.
    pub fn send_line(&mut self, line: &str) -> Result<String> {
        let endpoint = |reason: String| NetError::Endpoint {
            addr: self.addr.clone(),
            reason,
        };
        log::debug!(target: "rf", "> {line}");
        self.writer
            .write_all(format!("{line}\n").as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| endpoint(e.to_string()))?;
        let mut reply = String::new();
        match self.reader.read_line(&mut reply) {
            Ok(0) => Err(endpoint("connection closed".into())),
            Ok(_) => {
                let reply = reply.trim_end().to_string();
                log::debug!(target: "rf", "< {reply}");
                Ok(reply)
            }
            Err(e) => Err(endpoint(e.to_string())),
        }
    }
}

#[derive(Debug, Default)]
struct Mailbox {
    pending: Option<(f64, u64)>,
    in_flight: bool,
    closed: bool,
}

#[derive(Debug, Default)]
struct Shared {
    mailbox: Mutex<Mailbox>,
    wake: Condvar,
    sent: AtomicU64,
    failed: AtomicBool,
    last_sent: Mutex<Option<String>>,
    status: Mutex<Vec<String>>,
}

impl Shared {
    fn report(&self, status: String) {
        log::info!(target: "rf", "{status}");
        self.status.lock().unwrap().push(status);
    }

    fn closed(&self) -> bool {
        self.mailbox.lock().unwrap().closed
    }

    /// Sleeps up to `d`, returning early when the bridge closes.
    fn sleep_unless_closed(&self, d: Duration) {
        let deadline = Instant::now() + d;
        let mut mb = self.mailbox.lock().unwrap();
        while !mb.closed {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            mb = self.wake.wait_timeout(mb, deadline - now).unwrap().0;
        }
    }
}

/// Background exporter: `offer` never blocks; the worker pushes the latest
/// offered value, reconnecting with backoff when the link drops. Clones
/// share one worker, which stops when the last clone is dropped.
#[derive(Clone)]
pub struct BridgeHandle {
    inner: Arc<Inner>,
}

struct Inner {
    cfg: BridgeConfig,
    shared: Arc<Shared>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl Inner {
    fn shutdown(&self) {
        self.shared.mailbox.lock().unwrap().closed = true;
        self.shared.wake.notify_all();
        if let Some(w) = self.worker.lock().unwrap().take() {
            let _ = w.join();
        }
    }
}

impl Drop for Inner {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl BridgeHandle {
    pub fn start(cfg: BridgeConfig) -> Result<Self> {
        cfg.validate()?;
        let shared = Arc::new(Shared::default());
        let worker = {
            let cfg = cfg.clone();
            let shared = Arc::clone(&shared);
            thread::Builder::new()
                .name("rf-bridge".into())
                .spawn(move || run_worker(&cfg, &shared))?
        };
        Ok(Self {
            inner: Arc::new(Inner {
                cfg,
                shared,
                worker: Mutex::new(Some(worker)),
            }),
        })
    }

    fn shared(&self) -> &Shared {
        &self.inner.shared
    }

    pub fn config(&self) -> &BridgeConfig {
        &self.inner.cfg
    }

    /// Queues `value_db`, replacing any value not yet sent.
    pub fn offer(&self, value_db: f64, tick: u64) {
        if !value_db.is_finite() {
            log::warn!(target: "rf", "tick {tick}: non-finite path loss {value_db} not exported");
            return;
        }
        let mut mb = self.shared().mailbox.lock().unwrap();
        mb.pending = Some((value_db, tick));
        self.shared().wake.notify_all();
    }

    /// Lines the endpoint acknowledged.
    pub fn sent_count(&self) -> u64 {
        self.shared().sent.load(Ordering::SeqCst)
    }

    /// The last line the endpoint acknowledged.
    pub fn last_sent(&self) -> Option<String> {
        self.shared().last_sent.lock().unwrap().clone()
    }

    pub fn is_failed(&self) -> bool {
        self.shared().failed.load(Ordering::SeqCst)
    }

    /// Waits until every offered value has been sent or superseded.
    /// Returns false on timeout or if the bridge failed.
    pub fn flush(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let shared = self.shared();
        let mut mb = shared.mailbox.lock().unwrap();
        loop {
            if self.is_failed() {
                return false;
            }
            if mb.pending.is_none() && !mb.in_flight {
                return true;
            }
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            mb = shared.wake.wait_timeout(mb, deadline - now).unwrap().0;
        }
    }

    /// Stops the worker for every clone, sending any pending value first
    /// if the link is up.
    pub fn close(&self) {
        self.inner.shutdown();
    }
}

impl PathLossSink for BridgeHandle {
    fn offer(&self, value_db: f64, tick: u64) {
        BridgeHandle::offer(self, value_db, tick);
    }

    fn drain_status(&self) -> Vec<String> {
        std::mem::take(&mut *self.shared().status.lock().unwrap())
    }

    fn is_failed(&self) -> bool {
        BridgeHandle::is_failed(self)
    }
}

fn connect_with_retry(cfg: &BridgeConfig, shared: &Shared) -> Option<RfSession> {
    let mut delays = cfg.backoff_delays();
    for attempt in 1..=cfg.max_retries.max(1) {
        if shared.closed() {
            return None;
        }
        match RfSession::connect(cfg) {
            Ok(s) => {
                shared.report(format!("connected to {}", cfg.endpoint()));
                return Some(s);
            }
            Err(e) if attempt < cfg.max_retries => {
                let d = delays.next().expect("backoff is unbounded");
                shared.report(format!(
                    "connect attempt {attempt} failed ({e}); retrying in {:.1} s",
                    d.as_secs_f64()
                ));
                shared.sleep_unless_closed(d);
            }
            Err(e) => {
                shared.report(format!("giving up on {} after {attempt} attempts: {e}", cfg.endpoint()));
            }
        }
    }
    shared.failed.store(true, Ordering::SeqCst);
    shared.wake.notify_all();
    None
}

fn run_worker(cfg: &BridgeConfig, shared: &Shared) {
    let min_interval = Duration::from_secs_f64(cfg.min_interval);
    let mut session = connect_with_retry(cfg, shared);
    if session.is_none() {
        return;
    }
    let mut last_send: Option<Instant> = None;
    loop {
        let (value, tick) = {
            let mut mb = shared.mailbox.lock().unwrap();
            loop {
                if mb.pending.is_none() {
                    if mb.closed {
                        return;
                    }
                    mb = shared.wake.wait(mb).unwrap();
                    continue;
                }
                let ready_at = last_send.map(|t| t + min_interval);
                match ready_at {
                    Some(t) if Instant::now() < t && !mb.closed => {
                        let wait = t - Instant::now();
                        mb = shared.wake.wait_timeout(mb, wait).unwrap().0;
                    }
                    _ => break,
                }
            }
            mb.in_flight = true;
            mb.pending.take().expect("checked above")
        };
        if session.is_none() {
            session = connect_with_retry(cfg, shared);
        }
        let outcome = match session.as_mut() {
            Some(s) => s.push(cfg, value),
            None => {
                let mut mb = shared.mailbox.lock().unwrap();
                mb.in_flight = false;
                shared.wake.notify_all();
                return;
            }
        };
        last_send = Some(Instant::now());
        let mut mb = shared.mailbox.lock().unwrap();
        match outcome {
            Ok(reply) => {
                shared.sent.fetch_add(1, Ordering::SeqCst);
                *shared.last_sent.lock().unwrap() = cfg.render(value).ok();
                if reply.starts_with("error") {
                    log::warn!(target: "rf", "tick {tick}: endpoint rejected command: {reply}");
                }
            }
            Err(e) => {
                drop(mb);
                shared.report(format!("link lost ({e}); reconnecting"));
                session = None;
                mb = shared.mailbox.lock().unwrap();
                // Resend unless a newer value superseded this one.
                if mb.pending.is_none() {
                    mb.pending = Some((value, tick));
                }
            }
        }
        mb.in_flight = false;
        shared.wake.notify_all();
    }
}

/// Parses the default command grammar: `... modify <idx> ... ploss <val>`.
pub fn parse_command(line: &str) -> Option<(u32, f64)> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let after = |key: &str| tokens.iter().position(|t| *t == key).and_then(|i| tokens.get(i + 1));
    let idx = after("modify")?.parse().ok()?;
    let val: f64 = after("ploss")?.parse().ok()?;
    val.is_finite().then_some((idx, val))
}

#[derive(Debug, Default)]
struct MockState {
    records: Mutex<Vec<(u32, f64)>>,
    lines: Mutex<Vec<String>>,
    delay: Mutex<Duration>,
    streams: Mutex<Vec<TcpStream>>,
    connections: AtomicUsize,
    drop_next: AtomicBool,
    stop: AtomicBool,
}

/// Loopback stand-in for the RF emulator's control channel. Replies
/// `ok <idx> <val>` to well-formed commands and `error: ...` otherwise.
pub struct MockRfServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    accept: Option<JoinHandle<()>>,
}

pub const MOCK_GREETING: &str = "mock rf endpoint ready";

impl MockRfServer {
    /// Binds an ephemeral loopback port.
    pub fn start() -> Result<Self> {
        Self::start_on(0)
    }

    pub fn start_on(port: u16) -> Result<Self> {
        let listener = TcpListener::bind(("127.0.0.1", port))?;
        let addr = listener.local_addr()?;
        let state = Arc::new(MockState::default());
        let accept = {
            let state = Arc::clone(&state);
            thread::Builder::new().name("mock-rf-accept".into()).spawn(move || {
                for stream in listener.incoming() {
                    if state.stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    state.connections.fetch_add(1, Ordering::SeqCst);
                    if let Ok(clone) = stream.try_clone() {
                        state.streams.lock().unwrap().push(clone);
                    }
                    let state = Arc::clone(&state);
                    thread::spawn(move || serve_mock_client(stream, &state));
                }
            })?
        };
        Ok(Self {
            addr,
            state,
            accept: Some(accept),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    /// Bridge config pointing at this mock.
    pub fn bridge_config(&self) -> BridgeConfig {
        BridgeConfig {
            host: "127.0.0.1".into(),
            port: self.port(),
            ..BridgeConfig::default()
        }
    }

    /// Delay applied before answering each line.
    pub fn set_response_delay(&self, d: Duration) {
        *self.state.delay.lock().unwrap() = d;
    }

    /// Parsed `(index, value)` pairs, in arrival order.
    pub fn records(&self) -> Vec<(u32, f64)> {
        self.state.records.lock().unwrap().clone()
    }

    /// Every line received, including malformed ones.
    pub fn lines(&self) -> Vec<String> {
        self.state.lines.lock().unwrap().clone()
    }

    pub fn last_value(&self) -> Option<f64> {
        self.records().last().map(|r| r.1)
    }

    pub fn connections(&self) -> usize {
        self.state.connections.load(Ordering::SeqCst)
    }

    /// Closes every open client connection from the server side.
    pub fn disconnect_clients(&self) {
        for s in self.state.streams.lock().unwrap().drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
    }

    /// The next line received is discarded unanswered and its connection closed.
    pub fn drop_next_command(&self) {
        self.state.drop_next.store(true, Ordering::SeqCst);
    }
}

impl Drop for MockRfServer {
    fn drop(&mut self) {
        self.state.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        self.disconnect_clients();
        if let Some(a) = self.accept.take() {
            let _ = a.join();
        }
    }
}

fn serve_mock_client(stream: TcpStream, state: &MockState) {
    let Ok(read_half) = stream.try_clone() else { return };
    let _ = stream.set_nodelay(true);
    let mut writer = stream;
    if writer.write_all(format!("{MOCK_GREETING}\n").as_bytes()).is_err() {
        return;
    }
    let mut reader = BufReader::new(read_half);
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => return,
            Ok(_) => {}
        }
        let cmd = line.trim_end().to_string();
        if state.drop_next.swap(false, Ordering::SeqCst) {
            let _ = writer.shutdown(Shutdown::Both);
            return;
        }
        let delay = *state.delay.lock().unwrap();
        if !delay.is_zero() {
            thread::sleep(delay);
        }
        state.lines.lock().unwrap().push(cmd.clone());
        let reply = match parse_command(&cmd) {
            Some((idx, val)) => {
                state.records.lock().unwrap().push((idx, val));
                format!("ok {idx} {val:.1}")
            }
            None => format!("error: malformed command `{cmd}`"),
        };
        if writer.write_all(format!("{reply}\n").as_bytes()).is_err() {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_default_template() {
        let cfg = BridgeConfig::default();
        assert_eq!(cfg.render(63.32).unwrap(), "channelmod modify 0 ploss 63.3");
        assert_eq!(cfg.render(43.35).unwrap().split(' ').next_back(), Some("43.4"));
        assert!(matches!(cfg.render(f64::NAN), Err(NetError::NonFinite(_))));
        assert!(cfg.render(f64::INFINITY).is_err());
    }

    #[test]
    fn template_validation() {
        let with = |t: &str| BridgeConfig {
            command_template: t.into(),
            ..BridgeConfig::default()
        };
        assert!(with("set {val}").validate().is_ok());
        assert!(with("set {idx} {val} {val}").validate().is_err());
        assert!(with("set {idx}").validate().is_err());
        assert!(with("{idx} {idx} {val}").validate().is_err());
        let c = BridgeConfig {
            min_interval: -0.1,
            ..BridgeConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn backoff_doubles_then_caps() {
        let secs: Vec<f64> = BridgeConfig::default()
            .backoff_delays()
            .take(8)
            .map(|d| d.as_secs_f64())
            .collect();
        assert_eq!(secs, vec![1.0, 2.0, 4.0, 8.0, 16.0, 30.0, 30.0, 30.0]);
    }

    #[test]
    fn parses_commands() {
        assert_eq!(parse_command("channelmod modify 0 ploss 63.3"), Some((0, 63.3)));
        assert_eq!(parse_command("channelmod modify 2 ploss 40"), Some((2, 40.0)));
        assert_eq!(parse_command("channelmod modify x ploss 1"), None);
        assert_eq!(parse_command("hello"), None);
        assert_eq!(parse_command("modify 0 ploss NaN"), None);
    }
}
