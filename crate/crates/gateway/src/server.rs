//! Live session server.
//!
//! Threads: one acceptor per endpoint, one I/O thread (two for TCP) per
//! client, and the fixed-rate control loop. Clients and loop share only
//! the [`LatestSlot`] observation and an event channel; the loop owns the
//! session state and never blocks on the network.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use rehab_core::controller::{ControlLoop, ControlWeights, PatientObservation};
use rehab_core::log::{persist, session_file_name};
use rehab_core::plant::PlantState;
use rehab_core::reference::HoganSegment;
use rehab_core::session::{
    score_repetitions, Condition, Phase, Protocol, RepTrace, SessionConfig, SessionEngine, SessionRecord,
};
use rehab_core::signal::{resample_uniform, TimedSample, VelocityEstimator};
use rehab_core::KinematicTrace;

use crate::calibration::{angle_from_position, ArcCalibration};
use crate::slot::{LatestSlot, SlotStats};
use crate::wire::{self, Ava, AvaFlags, Command, ErrCode, Message, WireError, MAX_LINE};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Core(#[from] rehab_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub bind: IpAddr,
    /// Line-protocol TCP port; 0 picks a free port.
    pub port: u16,
    /// WebSocket port carrying the same lines; `None` disables it.
    pub ws_port: Option<u16>,
    pub tick: Duration,
    pub staleness: Duration,
    /// Silence after which the session pauses.
    pub idle_timeout: Duration,
    /// Continuous staleness during a repetition that aborts it.
    pub rep_abort_after: Duration,
    pub rom_deg: f64,
    pub eta: f64,
    pub condition: Condition,
    /// Prescribed movement the avatar is guided by.
    pub exercise: HoganSegment,
    pub session: SessionConfig,
    pub calibration_path: Option<PathBuf>,
    pub log_dir: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 7700,
            ws_port: None,
            tick: Duration::from_millis(10),
            staleness: Duration::from_millis(100),
            idle_timeout: Duration::from_secs(5),
            rep_abort_after: Duration::from_secs(1),
            rom_deg: 120.0,
            eta: rehab_core::controller::DEFAULT_ETA,
            condition: Condition::Adaptive,
            exercise: HoganSegment::new(0.0, 90.0, 3.0).expect("valid default"),
            session: SessionConfig::default(),
            calibration_path: None,
            log_dir: None,
        }
    }
}

impl GatewayConfig {
    /// Session configuration with the gateway's timing and plant overrides.
    pub fn effective_session(&self) -> Result<SessionConfig, GatewayError> {
        let mut s = self.session;
        let tick = self.tick.as_secs_f64();
        if !(tick > 0.0) {
            return Err(GatewayError::Config("tick must be positive".into()));
        }
        s.control.horizon.tick = tick;
        if s.control.horizon.horizon < tick {
            s.control.horizon.horizon = tick;
        }
        s.control.staleness = self.staleness.as_secs_f64();
        s.control.params.rom_deg = self.rom_deg;
        s.eta = self.eta;
        s.control.horizon.validate()?;
        s.control.params.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy)]
struct Observation {
    theta: f64,
    /// Gateway clock, seconds since start.
    recv: f64,
}

enum Event {
    Connected { conn: u64, outbox: Sender<String> },
    Sample { conn: u64, theta: f64, sent_ms: f64, recv_ms: f64 },
    Command { conn: u64, cmd: Command },
    Activity { conn: u64 },
    Disconnected { conn: u64 },
}

/// Control-loop timing counters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoopStats {
    pub ticks: u64,
    /// Ticks that started more than one period late.
    pub overruns: u64,
    pub max_lateness_ms: f64,
    pub aborted_reps: u64,
}

struct Shared {
    start: Instant,
    shutdown: AtomicBool,
    active: AtomicBool,
    next_conn: AtomicU64,
    slot: LatestSlot<Observation>,
    calibration: Mutex<Option<ArcCalibration>>,
    calibration_path: Option<PathBuf>,
    rom_deg: f64,
    sessions: Mutex<Vec<SessionRecord>>,
    stats: Mutex<LoopStats>,
}

impl Shared {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

pub struct GatewayHandle {
    shared: Arc<Shared>,
    tcp_addr: SocketAddr,
    ws_addr: Option<SocketAddr>,
    threads: Vec<JoinHandle<()>>,
    control: Option<JoinHandle<()>>,
}

impl GatewayHandle {
    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp_addr
    }

    pub fn ws_addr(&self) -> Option<SocketAddr> {
        self.ws_addr
    }

    /// Completed sessions so far.
    pub fn sessions(&self) -> Vec<SessionRecord> {
        lock(&self.shared.sessions).clone()
    }

    pub fn slot_stats(&self) -> SlotStats {
        self.shared.slot.stats()
    }

    pub fn loop_stats(&self) -> LoopStats {
        *lock(&self.shared.stats)
    }

    pub fn calibration(&self) -> Option<ArcCalibration> {
        *lock(&self.shared.calibration)
    }

    /// Blocks until the control loop exits.
    pub fn wait(mut self) {
        if let Some(h) = self.control.take() {
            let _ = h.join();
        }
    }

    /// Stops all threads and returns the completed sessions.
    pub fn shutdown(mut self) -> Vec<SessionRecord> {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.control.take() {
            let _ = h.join();
        }
        for h in self.threads.drain(..) {
            let _ = h.join();
        }
        self.sessions()
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Binds the endpoints and starts the gateway threads.
pub fn serve(cfg: GatewayConfig) -> Result<GatewayHandle, GatewayError> {
    let session_cfg = cfg.effective_session()?;
    let tcp = TcpListener::bind((cfg.bind, cfg.port))?;
    let ws = cfg.ws_port.map(|p| TcpListener::bind((cfg.bind, p))).transpose()?;
    let tcp_addr = tcp.local_addr()?;
    let ws_addr = ws.as_ref().map(|l| l.local_addr()).transpose()?;

    let calibration = match &cfg.calibration_path {
        Some(p) if p.exists() => {
            let c = ArcCalibration::load(p)?;
            info!("loaded calibration from {}", p.display());
            Some(c)
        }
        _ => None,
    };
    let shared = Arc::new(Shared {
        start: Instant::now(),
        shutdown: AtomicBool::new(false),
        active: AtomicBool::new(false),
        next_conn: AtomicU64::new(1),
        slot: LatestSlot::new(),
        calibration: Mutex::new(calibration),
        calibration_path: cfg.calibration_path.clone(),
        rom_deg: cfg.rom_deg,
        sessions: Mutex::new(Vec::new()),
        stats: Mutex::new(LoopStats::default()),
    });
    let (tx, rx) = mpsc::channel();

    let tick_ms = cfg.tick.as_secs_f64() * 1e3;
    info!("control loop: tick {tick_ms} ms ({:.1} Hz), condition {}", 1e3 / tick_ms, cfg.condition);
    info!("line protocol on {tcp_addr}");
    if let Some(a) = ws_addr {
        info!("websocket on ws://{a}");
    }

    let mut threads = Vec::new();
    {
        let (shared, tx) = (shared.clone(), tx.clone());
        threads.push(thread::Builder::new().name("accept-tcp".into()).spawn(move || accept_loop(tcp, shared, tx, Kind::Tcp))?);
    }
    if let Some(ws) = ws {
        let (shared, tx) = (shared.clone(), tx.clone());
        threads.push(thread::Builder::new().name("accept-ws".into()).spawn(move || accept_loop(ws, shared, tx, Kind::Ws))?);
    }
    drop(tx);
    let mut state = LoopState::new(&cfg, session_cfg, shared.clone())?;
    let control = thread::Builder::new().name("control".into()).spawn(move || state.run(rx))?;
    Ok(GatewayHandle { shared, tcp_addr, ws_addr, threads, control: Some(control) })
}

#[derive(Clone, Copy)]
enum Kind {
    Tcp,
    Ws,
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, events: Sender<Event>, kind: Kind) {
    if let Err(e) = listener.set_nonblocking(true) {
        warn!("listener: {e}");
        return;
    }
    while !shared.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let _ = stream.set_nonblocking(false);
                let _ = stream.set_nodelay(true);
                let busy = shared.active.compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst).is_err();
                let (shared, events) = (shared.clone(), events.clone());
                let spawned = thread::Builder::new().name(format!("client-{peer}")).spawn(move || {
                    let result = match (kind, busy) {
                        (Kind::Tcp, true) => reject_tcp(stream),
                        (Kind::Ws, true) => reject_ws(stream),
                        (Kind::Tcp, false) => run_tcp_client(stream, &shared, &events),
                        (Kind::Ws, false) => run_ws_client(stream, &shared, &events),
                    };
                    if let Err(e) = result {
                        debug!("client {peer}: {e}");
                    }
                });
                if let Err(e) = spawned {
                    warn!("cannot spawn client thread: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
            Err(e) => {
                warn!("accept: {e}");
                thread::sleep(Duration::from_millis(20));
            }
        }
    }
}

fn busy_line() -> String {
    WireError::new(ErrCode::Busy, "another client is connected").to_message().to_string()
}

fn reject_tcp(mut stream: TcpStream) -> io::Result<()> {
    stream.write_all(format!("{}\n", busy_line()).as_bytes())?;
    stream.shutdown(std::net::Shutdown::Both)
}

fn reject_ws(stream: TcpStream) -> io::Result<()> {
    let mut ws = tungstenite::accept(stream).map_err(io::Error::other)?;
    ws.send(tungstenite::Message::Text(busy_line())).map_err(io::Error::other)?;
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}

/// Per-client ingestion context.
struct Client<'a> {
    conn: u64,
    shared: &'a Shared,
    events: &'a Sender<Event>,
}

impl Client<'_> {
    fn connect(shared: &Shared, events: &Sender<Event>) -> (u64, Receiver<String>, Sender<String>) {
        let conn = shared.next_conn.fetch_add(1, Ordering::SeqCst);
        let (otx, orx) = mpsc::channel();
        let _ = events.send(Event::Connected { conn, outbox: otx.clone() });
        (conn, orx, otx)
    }

    /// Handles one incoming line; returns an immediate reply, if any.
    fn handle(&self, line: Result<String, WireError>) -> Option<Message> {
        let msg = match line.and_then(|l| wire::parse(&l)) {
            Ok(m) => m,
            Err(e) => {
                let _ = self.events.send(Event::Activity { conn: self.conn });
                return Some(e.to_message());
            }
        };
        match msg {
            Message::Pos { x, y, z, t } => {
                let recv = self.shared.now();
                let cal = *lock(&self.shared.calibration);
                let Some(cal) = cal else {
                    let _ = self.events.send(Event::Activity { conn: self.conn });
                    return Some(WireError::new(ErrCode::NoCal, "send CAL before POS").to_message());
                };
                match angle_from_position([x, y, z], &cal, self.shared.rom_deg) {
                    Ok(r) => {
                        self.shared.slot.put(Observation { theta: r.angle, recv });
                        let _ = self.events.send(Event::Sample {
                            conn: self.conn,
                            theta: r.angle,
                            sent_ms: t,
                            recv_ms: recv * 1e3,
                        });
                        None
                    }
                    Err(e) => Some(e.to_message()),
                }
            }
            Message::Cal { .. } => {
                let _ = self.events.send(Event::Activity { conn: self.conn });
                match ArcCalibration::from_message(&msg) {
                    Ok(cal) => {
                        *lock(&self.shared.calibration) = Some(cal);
                        if let Some(path) = &self.shared.calibration_path {
                            if let Err(e) = cal.save(path) {
                                warn!("cannot save calibration to {}: {e}", path.display());
                            }
                        }
                        Some(cal.to_message())
                    }
                    Err(e) => Some(e.to_message()),
                }
            }
            Message::Cmd(cmd) => {
                let _ = self.events.send(Event::Command { conn: self.conn, cmd });
                None
            }
            Message::Ping(id) => Some(Message::Pong(id)),
            other => {
                let _ = self.events.send(Event::Activity { conn: self.conn });
                debug!("ignoring client message {other}");
                None
            }
        }
    }

    fn disconnect(&self) {
        let _ = self.events.send(Event::Disconnected { conn: self.conn });
        self.shared.active.store(false, Ordering::SeqCst);
    }
}

/// Reads `\n`-terminated lines of at most [`MAX_LINE`] bytes, discarding
/// the remainder of longer lines.
struct LineReader<R> {
    inner: BufReader<R>,
    buf: Vec<u8>,
    overflow: bool,
}

enum ReadOutcome {
    Line(Result<String, WireError>),
    Idle,
    Eof,
}

impl<R: io::Read> LineReader<R> {
    fn new(inner: R) -> Self {
        Self { inner: BufReader::new(inner), buf: Vec::with_capacity(MAX_LINE + 2), overflow: false }
    }

    fn next(&mut self) -> io::Result<ReadOutcome> {
        loop {
            let available = match self.inner.fill_buf() {
                Ok(b) => b,
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                    return Ok(ReadOutcome::Idle)
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            };
            if available.is_empty() {
                return Ok(ReadOutcome::Eof);
            }
            let (chunk, done) = match available.iter().position(|&b| b == b'\n') {
                Some(i) => (&available[..i], Some(i + 1)),
                None => (available, None),
            };
            if self.buf.len() + chunk.len() > MAX_LINE + 1 {
                self.overflow = true;
            } else if !self.overflow {
                self.buf.extend_from_slice(chunk);
            }
            let used = done.unwrap_or(chunk.len());
            self.inner.consume(used);
            if done.is_some() {
                let bytes = std::mem::take(&mut self.buf);
                let line = if std::mem::take(&mut self.overflow) {
                    Err(WireError::bad(format!("line longer than {MAX_LINE} bytes")))
                } else {
                    String::from_utf8(bytes).map_err(|_| WireError::bad("line is not UTF-8"))
                };
                return Ok(ReadOutcome::Line(line));
            }
        }
    }
}

fn run_tcp_client(stream: TcpStream, shared: &Shared, events: &Sender<Event>) -> io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_millis(50)))?;
    let (conn, outbox_rx, outbox) = Client::connect(shared, events);
    let client = Client { conn, shared, events };
    let mut writer = stream.try_clone()?;
    let writer_thread = thread::spawn(move || {
        for line in outbox_rx {
            if writer.write_all(line.as_bytes()).and_then(|_| writer.write_all(b"\n")).is_err() {
                break;
            }
        }
    });
    let mut reader = LineReader::new(stream.try_clone()?);
    let result = loop {
        if shared.shutdown.load(Ordering::SeqCst) {
            break Ok(());
        }
        match reader.next() {
            Ok(ReadOutcome::Line(line)) => {
                if let Some(reply) = client.handle(line) {
                    if outbox.send(reply.to_string()).is_err() {
                        break Ok(());
                    }
                }
            }
            Ok(ReadOutcome::Idle) => {}
            Ok(ReadOutcome::Eof) => break Ok(()),
            Err(e) => break Err(e),
        }
    };
    client.disconnect();
    drop(outbox);
    let _ = stream.shutdown(std::net::Shutdown::Both);
    let _ = writer_thread.join();
    result
}

fn run_ws_client(stream: TcpStream, shared: &Shared, events: &Sender<Event>) -> io::Result<()> {
    use tungstenite::{Error as WsError, Message as WsMessage};

    let handshake = tungstenite::accept(stream.try_clone()?);
    let mut ws = match handshake {
        Ok(ws) => ws,
        Err(e) => {
            shared.active.store(false, Ordering::SeqCst);
            return Err(io::Error::other(e.to_string()));
        }
    };
    stream.set_read_timeout(Some(Duration::from_millis(1)))?;
    let (conn, outbox_rx, _outbox) = Client::connect(shared, events);
    let client = Client { conn, shared, events };
    let result = loop {
        if shared.shutdown.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            break Ok(());
        }
        let reply = match ws.read() {
            Ok(WsMessage::Text(text)) => client.handle(Ok(text)),
            Ok(WsMessage::Binary(_)) => Some(WireError::bad("binary frames are not accepted").to_message()),
            Ok(WsMessage::Close(_)) => break Ok(()),
            Ok(_) => None,
            Err(WsError::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => None,
            Err(WsError::ConnectionClosed | WsError::AlreadyClosed) => break Ok(()),
            Err(e) => break Err(io::Error::other(e.to_string())),
        };
        let mut out: Vec<String> = reply.map(|m| m.to_string()).into_iter().collect();
        while let Ok(line) = outbox_rx.try_recv() {
            out.push(line);
        }
        let mut failed = None;
        for line in out {
            if let Err(e) = ws.send(WsMessage::Text(line)) {
                failed = Some(e);
                break;
            }
        }
        if let Some(e) = failed {
            break match e {
                WsError::ConnectionClosed | WsError::AlreadyClosed => Ok(()),
                e => Err(io::Error::other(e.to_string())),
            };
        }
    };
    client.disconnect();
    result
}

struct Recording {
    start: f64,
    samples: Vec<TimedSample>,
    stale_for: f64,
}

struct ActiveSession {
    phase: Phase,
    weights: ControlWeights,
    adapted: bool,
    reps: Vec<RepTrace>,
    aborts_of_current_rep: u32,
    min_offset_ms: f64,
}

struct LoopState {
    shared: Arc<Shared>,
    cfg: SessionConfig,
    tick: f64,
    idle_timeout: f64,
    rep_abort_after: f64,
    exercise: HoganSegment,
    log_dir: Option<PathBuf>,
    engine: SessionEngine,
    ctl: ControlLoop,
    estimator: VelocityEstimator,
    client: Option<(u64, Sender<String>)>,
    condition: Condition,
    phase_override: Option<Phase>,
    session: Option<ActiveSession>,
    recording: Option<Recording>,
    last_obs: Option<PatientObservation>,
    last_activity: f64,
    paused: bool,
    ia_live: f64,
    writers: Vec<JoinHandle<()>>,
}

impl LoopState {
    fn new(gw: &GatewayConfig, cfg: SessionConfig, shared: Arc<Shared>) -> Result<Self, GatewayError> {
        let ctl = ControlLoop::new(cfg.control, ControlWeights::follower(cfg.eta), PlantState::at_rest(gw.exercise.theta0))?;
        if let Some(dir) = &gw.log_dir {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self {
            shared,
            cfg,
            tick: cfg.control.horizon.tick,
            idle_timeout: gw.idle_timeout.as_secs_f64(),
            rep_abort_after: gw.rep_abort_after.as_secs_f64(),
            exercise: gw.exercise,
            log_dir: gw.log_dir.clone(),
            engine: SessionEngine::new(cfg).with_condition(gw.condition),
            ctl,
            estimator: VelocityEstimator::new(cfg.velocity_window_ms),
            client: None,
            condition: gw.condition,
            phase_override: None,
            session: None,
            recording: None,
            last_obs: None,
            last_activity: 0.0,
            paused: false,
            ia_live: 0.0,
            writers: Vec::new(),
        })
    }

    fn run(&mut self, events: Receiver<Event>) {
        let period = Duration::from_secs_f64(self.tick);
        let mut next = self.shared.start + period;
        while !self.shared.shutdown.load(Ordering::SeqCst) {
            let now = Instant::now();
            if now < next {
                thread::sleep(next - now);
            }
            let late = Instant::now().saturating_duration_since(next).as_secs_f64();
            {
                let mut st = lock(&self.shared.stats);
                st.ticks += 1;
                st.max_lateness_ms = st.max_lateness_ms.max(late * 1e3);
                if late > self.tick {
                    st.overruns += 1;
                }
            }
            // Skip missed periods rather than bursting to catch up.
            next += period;
            while next < Instant::now() {
                next += period;
            }
            let t = self.shared.now();
            self.drain(&events, t);
            self.step(t);
        }
        for w in self.writers.drain(..) {
            let _ = w.join();
        }
    }

    fn reply(&mut self, msg: &Message) {
        if let Some((_, out)) = &self.client {
            if out.send(msg.to_string()).is_err() {
                self.client = None;
            }
        }
    }

    fn drain(&mut self, events: &Receiver<Event>, t: f64) {
        loop {
            let ev = match events.try_recv() {
                Ok(ev) => ev,
                Err(_) => return,
            };
            let current = self.client.as_ref().map(|(c, _)| *c);
            match ev {
                Event::Sample { conn, .. } | Event::Command { conn, .. } | Event::Activity { conn }
                    if Some(conn) != current =>
                {
                    debug!("dropping event from departed client {conn}");
                }
                Event::Connected { conn, outbox } => {
                    info!("client {conn} connected");
                    self.client = Some((conn, outbox));
                    self.last_activity = t;
                    self.paused = false;
                }
                Event::Disconnected { conn } => {
                    if current == Some(conn) {
                        info!("client {conn} disconnected");
                        self.client = None;
                        if self.recording.is_some() {
                            self.abort_rep("client disconnected");
                        }
                    }
                }
                Event::Sample { theta, sent_ms, recv_ms, .. } => {
                    self.touch(t);
                    self.estimator.push(TimedSample::new(theta, sent_ms));
                    if let Some(rec) = &mut self.recording {
                        if rec.samples.last().is_none_or(|s| sent_ms > s.t_ms) {
                            rec.samples.push(TimedSample::new(theta, sent_ms));
                        }
                        if let Some(s) = &mut self.session {
                            s.min_offset_ms = s.min_offset_ms.min(recv_ms - sent_ms);
                        }
                    }
                }
                Event::Command { cmd, .. } => {
                    self.touch(t);
                    let reply = match self.command(cmd, t) {
                        Ok(()) => Message::Cmd(cmd),
                        Err(e) => e.to_message(),
                    };
                    self.reply(&reply);
                }
                Event::Activity { .. } => self.touch(t),
            }
        }
    }

    fn touch(&mut self, t: f64) {
        self.last_activity = t;
        if self.paused {
            info!("activity resumed");
            self.paused = false;
        }
    }

    fn command(&mut self, cmd: Command, t: f64) -> Result<(), WireError> {
        match cmd {
            Command::Start => {
                if self.recording.is_some() {
                    return Err(WireError::bad("a repetition is already running"));
                }
                if self.session.is_none() {
                    self.session = Some(self.open_session());
                }
                let w = self.session.as_ref().expect("opened").weights;
                self.ctl.set_weights(w).map_err(|e| WireError::bad(e.to_string()))?;
                self.ctl.set_segment(Some(self.exercise));
                self.ctl.take_records();
                self.recording = Some(Recording { start: t, samples: Vec::new(), stale_for: 0.0 });
                Ok(())
            }
            Command::Stop => {
                let Some(rec) = self.recording.take() else {
                    return Err(WireError::bad("no repetition is running"));
                };
                self.ctl.set_segment(None);
                let (avatar, events, saturation_events) = self.ctl.take_records();
                let stale_ticks = events.iter().filter(|e| matches!(e, rehab_core::controller::LoopEvent::Stale { .. })).count();
                let patient = repetition_trace(&rec.samples, self.cfg.metric_dt).map_err(|e| WireError::bad(e.to_string()))?;
                let session = self.session.as_mut().expect("recording implies session");
                session.aborts_of_current_rep = 0;
                let index = session.reps.len();
                session.reps.push(RepTrace { index, patient, avatar, saturation_events, stale_ticks });
                if session.reps.len() >= self.cfg.reps {
                    self.close_session();
                }
                Ok(())
            }
            Command::Phase(p) => {
                self.idle_between_sessions()?;
                self.phase_override = Some(p);
                Ok(())
            }
            Command::Condition(c) => {
                self.idle_between_sessions()?;
                self.condition = c;
                self.engine.set_condition(Some(c));
                Ok(())
            }
        }
    }

    fn idle_between_sessions(&self) -> Result<(), WireError> {
        if self.session.is_some() {
            Err(WireError::bad("a session is in progress"))
        } else {
            Ok(())
        }
    }

    fn protocol(&self) -> Protocol {
        self.condition.protocol(self.cfg.eta).expect("condition weights are valid")
    }

    fn open_session(&mut self) -> ActiveSession {
        let protocol = self.protocol();
        let n = self.engine.history().len();
        let phase = self.phase_override.unwrap_or(if n < protocol.awing_trials { Phase::Awing } else { Phase::Pawing });
        let (weights, adapted) = match phase {
            Phase::Awing => (ControlWeights::follower(self.cfg.eta), false),
            Phase::Pawing => self.engine.next_weights(&protocol.policy),
        };
        info!("session {} opened: {phase}, alpha_p {}, alpha_s {}", n + 1, weights.alpha_p, weights.alpha_s);
        ActiveSession { phase, weights, adapted, reps: Vec::new(), aborts_of_current_rep: 0, min_offset_ms: f64::INFINITY }
    }

    fn close_session(&mut self) {
        let Some(s) = self.session.take() else { return };
        let traces: Vec<&KinematicTrace> = s.reps.iter().map(|r| &r.patient).collect();
        let score = match score_repetitions(&traces, &self.cfg) {
            Ok(score) => score,
            Err(e) => {
                warn!("session discarded: {e}");
                return;
            }
        };
        let offset = s.min_offset_ms.is_finite().then_some(s.min_offset_ms);
        let record = self.engine.finish(s.phase, s.weights, s.adapted, &self.exercise, score, s.reps, None, offset);
        info!("session {} scored: I_A {:.4}, flags {:?}", record.n, record.ia, record.flags);
        self.ia_live = record.ia;
        self.engine.push(record.clone());
        if let Some(dir) = &self.log_dir {
            let path = dir.join(session_file_name(record.n));
            let rec = record.clone();
            self.writers.push(thread::spawn(move || {
                if let Err(e) = persist(&rec, &path) {
                    warn!("cannot write {}: {e}", path.display());
                }
            }));
        }
        lock(&self.shared.sessions).push(record);
    }

    fn abort_rep(&mut self, why: &str) {
        self.recording = None;
        self.ctl.set_segment(None);
        self.ctl.take_records();
        lock(&self.shared.stats).aborted_reps += 1;
        if let Some(s) = &mut self.session {
            s.aborts_of_current_rep += 1;
            if s.aborts_of_current_rep >= 2 {
                warn!("repetition {} aborted twice ({why}); session abandoned", s.reps.len() + 1);
                self.session = None;
            } else {
                warn!("repetition {} aborted ({why}); it may be retried once", s.reps.len() + 1);
            }
        }
    }

    fn step(&mut self, t: f64) {
        if let Some(o) = self.shared.slot.take() {
            let v = self.estimator.estimate().value;
            self.last_obs = Some(PatientObservation { theta: o.theta, theta_dot: v, t: o.recv });
        }
        if !self.paused && t - self.last_activity > self.idle_timeout {
            info!("no client activity for {:.1} s; pausing", t - self.last_activity);
            self.paused = true;
            if self.recording.is_some() {
                self.abort_rep("idle timeout");
            }
        }
        let mut flags = AvaFlags { paused: self.paused, recording: self.recording.is_some(), ..AvaFlags::default() };
        if !self.paused {
            let exercise_t = self.recording.as_ref().map_or(0.0, |r| t - r.start);
            match self.ctl.tick(t, exercise_t, self.last_obs.as_ref()) {
                Ok(out) => {
                    flags.stale = out.stale;
                    flags.saturated = out.saturated;
                }
                Err(e) => warn!("control tick failed: {e}"),
            }
            if let Some(rec) = &mut self.recording {
                rec.stale_for = if flags.stale { rec.stale_for + self.tick } else { 0.0 };
                if rec.stale_for > self.rep_abort_after {
                    self.abort_rep("patient stream stale");
                    flags.recording = false;
                }
            }
        }
        if self.client.is_some() {
            let s = self.ctl.state();
            let w = self.ctl.weights();
            let ava = Ava {
                theta: s.theta,
                theta_dot: s.theta_dot,
                alpha_p: w.alpha_p,
                alpha_s: w.alpha_s,
                ia_live: self.ia_live,
                t: (t * 1e3).round(),
                flags,
            };
            self.reply(&Message::Ava(ava));
        }
    }
}

/// Uniform patient trace from sender-timestamped samples, time zero at the
/// first sample.
pub fn repetition_trace(samples: &[TimedSample], dt: f64) -> rehab_core::Result<KinematicTrace> {
    let t0 = samples.first().map_or(0.0, |s| s.t_ms);
    let shifted: Vec<TimedSample> = samples.iter().map(|s| TimedSample::new(s.value, s.t_ms - t0)).collect();
    resample_uniform(&shifted, dt)
}
