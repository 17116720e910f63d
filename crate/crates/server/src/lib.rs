//! Live sessions over WebSocket.
//!
//! One loop thread owns the [`Session`] and advances it in real time (scaled
//! by [`ServeConfig::speed`]). Each connection runs on its own thread and
//! talks to the loop only through channels: client text frames go in,
//! serialized [`ServerMessage`]s come out. Every accepted control message is
//! recorded in the event log, so the log replays to the same run.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use tactile_nav::scenario::protocol::{ClientMessage, CostmapUpdate, ServerMessage, Snapshot};
use tactile_nav::scenario::{Scenario, ScenarioError, Session};
use tungstenite::Message;

/// How often idle threads wake to check for work and shutdown.
const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone)]
pub struct ServeConfig {
    /// Simulated seconds per wall-clock second; 1.0 is real time.
    pub speed: f64,
    /// Most snapshots sent to one client per wall-clock second.
    pub snapshot_rate: f64,
    /// Event log file, written as the session runs.
    pub log_path: Option<PathBuf>,
    pub start_paused: bool,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self { speed: 1.0, snapshot_rate: 20.0, log_path: None, start_paused: false }
    }
}

#[derive(Debug)]
pub enum ServeError {
    Io(io::Error),
    Scenario(ScenarioError),
    Config(String),
}

impl std::fmt::Display for ServeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ServeError::Io(e) => write!(f, "{e}"),
            ServeError::Scenario(e) => write!(f, "{e}"),
            ServeError::Config(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ServeError {}

impl From<io::Error> for ServeError {
    fn from(e: io::Error) -> Self {
        ServeError::Io(e)
    }
}

enum ToLoop {
    Connected { id: u64, outbox: Sender<String> },
    Text { id: u64, text: String },
    Disconnected { id: u64 },
}

/// A running server. Dropping it without calling [`ServerHandle::shutdown`]
/// leaves the threads running.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: JoinHandle<()>,
    runner: JoinHandle<io::Result<Vec<String>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops the server and returns the complete event log.
    pub fn shutdown(self) -> io::Result<Vec<String>> {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.acceptor.join();
        self.runner.join().map_err(|_| io::Error::other("session loop panicked"))?
    }

    /// Blocks until the session loop exits, which only happens on an I/O
    /// error writing the log.
    pub fn wait(self) -> io::Result<Vec<String>> {
        let out = self.runner.join().map_err(|_| io::Error::other("session loop panicked"))?;
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.acceptor.join();
        out
    }
}

/// Binds `addr` and starts serving `scenario`.
pub fn serve(scenario: Scenario, addr: impl ToSocketAddrs, cfg: ServeConfig) -> Result<ServerHandle, ServeError> {
    if !(cfg.speed > 0.0 && cfg.speed.is_finite()) {
        return Err(ServeError::Config(format!("speed must be positive, got {}", cfg.speed)));
    }
    if !(cfg.snapshot_rate > 0.0 && cfg.snapshot_rate <= 20.0) {
        return Err(ServeError::Config(format!("snapshot_rate must be in (0, 20], got {}", cfg.snapshot_rate)));
    }
    let session = Session::new(scenario).map_err(ServeError::Scenario)?;
    let log_file = cfg.log_path.as_ref().map(File::create).transpose()?;
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();

    let runner = {
        let stop = stop.clone();
        thread::Builder::new().name("session".into()).spawn(move || run_loop(session, cfg, log_file, rx, &stop))?
    };
    let acceptor = {
        let stop = stop.clone();
        thread::Builder::new().name("accept".into()).spawn(move || accept_loop(listener, tx, stop))?
    };
    log::info!("serving on ws://{addr}");
    Ok(ServerHandle { addr, stop, acceptor, runner })
}

fn accept_loop(listener: TcpListener, to_loop: Sender<ToLoop>, stop: Arc<AtomicBool>) {
    let ids = AtomicU64::new(1);
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = ids.fetch_add(1, Ordering::SeqCst);
                let (to_loop, stop) = (to_loop.clone(), stop.clone());
                log::debug!("connection {id} from {peer}");
                let spawned = thread::Builder::new()
                    .name(format!("conn-{id}"))
                    .spawn(move || connection(stream, id, to_loop, stop));
                if let Err(e) = spawned {
                    log::warn!("cannot start connection thread: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
}

fn connection(stream: TcpStream, id: u64, to_loop: Sender<ToLoop>, stop: Arc<AtomicBool>) {
    let setup = stream.set_nonblocking(false).and_then(|_| stream.set_nodelay(true));
    if let Err(e) = setup {
        log::debug!("connection {id}: {e}");
        return;
    }
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            log::debug!("connection {id}: handshake failed: {e}");
            return;
        }
    };
    if let Err(e) = ws.get_ref().set_read_timeout(Some(POLL)) {
        log::debug!("connection {id}: {e}");
        return;
    }
    let (outbox, inbox) = mpsc::channel();
    if to_loop.send(ToLoop::Connected { id, outbox }).is_err() {
        return;
    }
    'conn: while !stop.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Message::Text(t)) => {
                if to_loop.send(ToLoop::Text { id, text: t.to_string() }).is_err() {
                    break;
                }
            }
            Ok(Message::Binary(b)) => {
                let text = String::from_utf8_lossy(&b).into_owned();
                if to_loop.send(ToLoop::Text { id, text }).is_err() {
                    break;
                }
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => {
                log::debug!("connection {id}: {e}");
                break;
            }
        }
        loop {
            match inbox.try_recv() {
                Ok(text) => {
                    if let Err(e) = ws.send(Message::text(text)) {
                        log::debug!("connection {id}: send failed: {e}");
                        break 'conn;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => break 'conn,
            }
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    let _ = to_loop.send(ToLoop::Disconnected { id });
}

struct Client {
    outbox: Sender<String>,
    last_seq: Option<u64>,
    sent: u64,
    costmap: Option<Vec<u8>>,
    dirty: bool,
    last_snapshot: Option<Instant>,
}

impl Client {
    fn send(&mut self, msg: impl FnOnce(u64) -> ServerMessage) {
        self.sent += 1;
        let text = serde_json::to_string(&msg(self.sent)).expect("server messages serialize");
        let _ = self.outbox.send(text);
    }
}

struct Loop {
    session: Session,
    paused: bool,
    clients: BTreeMap<u64, Client>,
    next_tick: Instant,
}

impl Loop {
    fn period(&self, speed: f64) -> Duration {
        Duration::from_secs_f64(self.session.world().dt() / speed)
    }

    fn reject(&mut self, id: u64, seq: Option<u64>, text: &str, error: String) {
        self.session.record_rejected(text, &error);
        if let Some(c) = self.clients.get_mut(&id) {
            c.send(|s| ServerMessage::Error { seq: s, ack: seq, message: error });
        }
    }

    fn handle_text(&mut self, id: u64, text: &str, speed: f64) {
        let msg: ClientMessage = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(e) => {
                let seq = serde_json::from_str::<serde_json::Value>(text).ok().and_then(|v| v.get("seq")?.as_u64());
                return self.reject(id, seq, text, format!("malformed message: {e}"));
            }
        };
        let seq = msg.seq();
        let Some(client) = self.clients.get_mut(&id) else { return };
        if let Some(last) = client.last_seq.filter(|&last| seq <= last) {
            return self.reject(id, Some(seq), text, format!("sequence number {seq} does not follow {last}"));
        }
        client.last_seq = Some(seq);
        let result = match &msg {
            ClientMessage::Step { .. } if !self.paused => Err("step is only accepted while paused".to_string()),
            _ => self.session.apply_control(&msg).map_err(|e| e.to_string()),
        };
        if result.is_ok() && matches!(msg, ClientMessage::Step { .. }) {
            self.session.tick();
        }
        match result {
            Ok(()) => {
                match msg {
                    ClientMessage::Pause { .. } => self.paused = true,
                    ClientMessage::Resume { .. } => {
                        self.paused = false;
                        self.next_tick = Instant::now() + self.period(speed);
                    }
                    _ => {}
                }
                if let Some(c) = self.clients.get_mut(&id) {
                    c.send(|s| ServerMessage::Ack { seq: s, ack: seq });
                }
                self.mark_dirty();
            }
            Err(e) => self.reject(id, Some(seq), text, e),
        }
    }

    fn mark_dirty(&mut self) {
        for c in self.clients.values_mut() {
            c.dirty = true;
        }
    }

    fn send_snapshots(&mut self, min_interval: Duration) {
        let now = Instant::now();
        let view = self.session.view(self.paused);
        let composite = self.session.composite();
        for c in self.clients.values_mut() {
            if !c.dirty || c.last_snapshot.is_some_and(|t| now.duration_since(t) < min_interval) {
                continue;
            }
            let costmap = CostmapUpdate::new(c.costmap.as_deref(), composite);
            let snapshot = Snapshot { seq: 0, view: view.clone(), costmap };
            c.send(|s| ServerMessage::Snapshot(Snapshot { seq: s, ..snapshot }));
            c.costmap = Some(composite.as_slice().to_vec());
            c.dirty = false;
            c.last_snapshot = Some(now);
        }
    }
}

fn run_loop(
    session: Session,
    cfg: ServeConfig,
    mut log_file: Option<File>,
    rx: Receiver<ToLoop>,
    stop: &AtomicBool,
) -> io::Result<Vec<String>> {
    let min_interval = Duration::from_secs_f64(1.0 / cfg.snapshot_rate);
    let mut st = Loop { session, paused: cfg.start_paused, clients: BTreeMap::new(), next_tick: Instant::now() };
    st.next_tick = Instant::now() + st.period(cfg.speed);
    let mut log = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        let running = !st.paused && !st.session.is_finished();
        let wait = if running { st.next_tick.saturating_duration_since(Instant::now()).min(POLL) } else { POLL };
        let mut first = match rx.recv_timeout(wait) {
            Ok(m) => Some(m),
            Err(RecvTimeoutError::Timeout) => None,
            Err(RecvTimeoutError::Disconnected) => break,
        };
        while let Some(m) = first.take().or_else(|| rx.try_recv().ok()) {
            match m {
                ToLoop::Connected { id, outbox } => {
                    let client =
                        Client { outbox, last_seq: None, sent: 0, costmap: None, dirty: true, last_snapshot: None };
                    st.clients.insert(id, client);
                }
                ToLoop::Text { id, text } => st.handle_text(id, &text, cfg.speed),
                ToLoop::Disconnected { id } => {
                    st.clients.remove(&id);
                }
            }
        }

        let now = Instant::now();
        if !st.paused && !st.session.is_finished() && now >= st.next_tick {
            st.session.tick();
            st.mark_dirty();
            let period = st.period(cfg.speed);
            st.next_tick += period;
            // fall behind rather than burst when the host is slow
            if st.next_tick + period < now {
                st.next_tick = now + period;
            }
        }

        let lines = st.session.take_log();
        if let Some(f) = log_file.as_mut() {
            for l in &lines {
                writeln!(f, "{l}")?;
            }
            if !lines.is_empty() {
                f.flush()?;
            }
        }
        log.extend(lines);
        st.send_snapshots(min_interval);
    }
    log.extend(st.session.take_log());
    Ok(log)
}
