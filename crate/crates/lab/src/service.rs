//! Live session service: JSON wire frames, a hub that owns the sessions,
//! and a TCP server speaking one frame per line.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use jobmarket_core::model::{SessionId, SubjectId};
use jobmarket_core::session::{recover, Action, Session, SessionEvent, SessionSetup, SubjectView};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::formats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    Join,
    StateSync,
    Action,
    Ack,
    Error,
    Payoff,
}

/// One frame. `seq` is the client's action counter; the server echoes it
/// on ACK and reports the last accepted one on STATE_SYNC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub kind: MessageKind,
    #[serde(default)]
    pub session_id: Option<SessionId>,
    #[serde(default)]
    pub subject_id: Option<SubjectId>,
    #[serde(default)]
    pub seq: Option<u64>,
    #[serde(default)]
    pub payload: Value,
}

impl WireMessage {
    pub fn join(session: &str, subject: &str) -> Self {
        WireMessage {
            kind: MessageKind::Join,
            session_id: Some(session.into()),
            subject_id: Some(subject.into()),
            seq: None,
            payload: Value::Null,
        }
    }

    pub fn action(session: &str, subject: &str, seq: u64, action: &Action) -> Self {
        WireMessage {
            kind: MessageKind::Action,
            session_id: Some(session.into()),
            subject_id: Some(subject.into()),
            seq: Some(seq),
            payload: serde_json::to_value(action).unwrap_or(Value::Null),
        }
    }

    fn reply(kind: MessageKind, session: Option<&SessionId>, subject: Option<&SubjectId>, seq: Option<u64>, payload: Value) -> Self {
        WireMessage {
            kind,
            session_id: session.cloned(),
            subject_id: subject.cloned(),
            seq,
            payload,
        }
    }

    fn error(session: Option<&SessionId>, subject: Option<&SubjectId>, seq: Option<u64>, code: &str, message: &str) -> Self {
        Self::reply(
            MessageKind::Error,
            session,
            subject,
            seq,
            json!({ "code": code, "message": message }),
        )
    }

    /// The `code` of an ERROR frame.
    pub fn error_code(&self) -> Option<&str> {
        (self.kind == MessageKind::Error)
            .then(|| self.payload.get("code").and_then(Value::as_str))
            .flatten()
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).unwrap_or_default();
        s.push('\n');
        s
    }
}

/// Frames produced by one input: `reply` goes back to the sender, `push`
/// to other connected subjects.
#[derive(Debug, Default)]
pub struct Outbox {
    pub reply: Vec<WireMessage>,
    pub push: Vec<(SessionId, SubjectId, WireMessage)>,
    /// Set when the input was an accepted JOIN.
    pub joined: Option<(SessionId, SubjectId)>,
}

#[derive(Default)]
struct Client {
    last_seq: Option<u64>,
    last_reply: Vec<WireMessage>,
    synced: Option<SubjectView>,
    payoff_sent: bool,
}

struct Live {
    session: Session,
    clients: BTreeMap<SubjectId, Client>,
    log: Option<File>,
}

impl Live {
    fn persist(&mut self, events: &[SessionEvent]) -> io::Result<()> {
        match &mut self.log {
            Some(f) if !events.is_empty() => formats::append_events(f, events),
            _ => Ok(()),
        }
    }

    fn last_ts(&self) -> u64 {
        self.session.events().last().map_or(0, |e| e.ts)
    }

    /// STATE_SYNC if the subject's view changed (always with `force`), and
    /// PAYOFF the first time a payoff is visible.
    fn sync(&mut self, subject: &SubjectId, force: bool) -> Vec<WireMessage> {
        let Some(view) = self.session.view(subject) else {
            return Vec::new();
        };
        let sid = self.session.session_id().clone();
        let client = self.clients.entry(subject.clone()).or_default();
        let mut out = Vec::new();
        if force || client.synced.as_ref() != Some(&view) {
            out.push(WireMessage::reply(
                MessageKind::StateSync,
                Some(&sid),
                Some(subject),
                client.last_seq,
                serde_json::to_value(&view).unwrap_or(Value::Null),
            ));
        }
        if let (Some(p), false) = (view.payoff, client.payoff_sent) {
            out.push(WireMessage::reply(
                MessageKind::Payoff,
                Some(&sid),
                Some(subject),
                None,
                serde_json::to_value(p).unwrap_or(Value::Null),
            ));
            client.payoff_sent = true;
        }
        client.synced = Some(view);
        out
    }

    /// Syncs every joined subject other than `except`.
    fn push_all(&mut self, except: Option<&SubjectId>, out: &mut Outbox) {
        let sid = self.session.session_id().clone();
        let joined: Vec<SubjectId> = self.clients.keys().filter(|s| Some(*s) != except).cloned().collect();
        for s in joined {
            for m in self.sync(&s, false) {
                out.push.push((sid.clone(), s.clone(), m));
            }
        }
    }
}

/// Owns the live sessions. Each call takes the current time in ms on the
/// service clock; it is raised to the session's last timestamp if behind.
pub struct Hub {
    sessions: BTreeMap<SessionId, Live>,
    log_dir: Option<PathBuf>,
}

impl Hub {
    pub fn new(log_dir: Option<PathBuf>) -> Hub {
        Hub {
            sessions: BTreeMap::new(),
            log_dir,
        }
    }

    pub fn log_path(dir: &Path, id: &SessionId) -> PathBuf {
        dir.join(format!("{id}.jsonl"))
    }

    /// Opens a session, or rebuilds it from its log if one exists in the
    /// log directory. A recovered log must start with the same setup.
    pub fn open(&mut self, setup: SessionSetup, now: u64) -> Result<()> {
        let id = setup.session_id.clone();
        if self.sessions.contains_key(&id) {
            bail!("session {id} is already open");
        }
        let (session, log) = match &self.log_dir {
            None => (Session::open(setup, now)?, None),
            Some(dir) => {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = Self::log_path(dir, &id);
                let prior = match File::open(&path) {
                    Ok(f) => formats::read_events(f, true).with_context(|| format!("reading {}", path.display()))?,
                    Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
                    Err(e) => return Err(e).with_context(|| format!("opening {}", path.display())),
                };
                let session = if prior.is_empty() {
                    Session::open(setup, now)?
                } else {
                    let s = recover(&prior).with_context(|| format!("recovering {}", path.display()))?;
                    if s.setup() != &setup {
                        bail!("log {} belongs to a different session setup", path.display());
                    }
                    s
                };
                // rewrite so a torn tail or regenerated effects are on disk
                let tmp = path.with_extension("jsonl.tmp");
                formats::save_events(&tmp, session.events())?;
                fs::rename(&tmp, &path)?;
                let log = OpenOptions::new().append(true).open(&path)?;
                (session, Some(log))
            }
        };
        self.sessions.insert(
            id,
            Live {
                session,
                clients: BTreeMap::new(),
                log,
            },
        );
        Ok(())
    }

    pub fn session(&self, id: &SessionId) -> Option<&Session> {
        self.sessions.get(id).map(|l| &l.session)
    }

    pub fn session_ids(&self) -> impl Iterator<Item = &SessionId> {
        self.sessions.keys()
    }

    /// Latest timestamp in any session log.
    pub fn clock_floor(&self) -> u64 {
        self.sessions.values().map(Live::last_ts).max().unwrap_or(0)
    }

    pub fn handle_line(&mut self, line: &str, now: u64) -> Outbox {
        match serde_json::from_str::<WireMessage>(line) {
            Ok(m) => self.handle(m, now),
            Err(e) => Outbox {
                reply: vec![WireMessage::error(None, None, None, "malformed", &e.to_string())],
                ..Outbox::default()
            },
        }
    }

    pub fn handle(&mut self, msg: WireMessage, now: u64) -> Outbox {
        let mut out = Outbox::default();
        let (sid, subject) = (msg.session_id.as_ref(), msg.subject_id.as_ref());
        let err = |code: &str, text: &str| WireMessage::error(sid, subject, msg.seq, code, text);
        let (Some(sid), Some(subject)) = (sid, subject) else {
            out.reply.push(err("malformed", "session_id and subject_id are required"));
            return out;
        };
        let Some(live) = self.sessions.get_mut(sid) else {
            out.reply.push(err("unknown_session", &format!("no session {sid}")));
            return out;
        };
        if live.session.phase(subject).is_none() {
            out.reply.push(err("unknown_subject", &format!("{subject} is not on the roster")));
            return out;
        }
        let now = now.max(live.last_ts());
        match msg.kind {
            MessageKind::Join => {
                let client = live.clients.entry(subject.clone()).or_default();
                client.payoff_sent = false;
                out.reply = live.sync(subject, true);
                out.joined = Some((sid.clone(), subject.clone()));
            }
            MessageKind::Action => {
                let Some(seq) = msg.seq else {
                    out.reply.push(err("malformed", "ACTION needs a seq"));
                    return out;
                };
                let last = live.clients.get(subject).and_then(|c| c.last_seq);
                if last == Some(seq) {
                    // duplicate submission: no transition, same answer
                    let mut reply = live.clients[subject].last_reply.clone();
                    reply.extend(live.sync(subject, true));
                    out.reply = reply;
                    return out;
                }
                if last.is_some_and(|l| seq < l) {
                    out.reply.push(err("stale_seq", &format!("seq {seq} is below {}", last.unwrap_or(0))));
                    return out;
                }
                let action: Action = match serde_json::from_value(msg.payload.clone()) {
                    Ok(a) => a,
                    Err(e) => {
                        out.reply.push(err("malformed", &format!("bad action: {e}")));
                        return out;
                    }
                };
                let first = match live.session.apply(subject, action, now) {
                    Ok(events) => {
                        if let Err(e) = live.persist(&events) {
                            out.reply.push(err("storage", &e.to_string()));
                        }
                        WireMessage::reply(MessageKind::Ack, Some(sid), Some(subject), Some(seq), json!({ "events": events.len() }))
                    }
                    Err(e) => {
                        let ev = live.session.note_rejection(Some(subject), &e.to_string(), now);
                        if let Err(e) = live.persist(std::slice::from_ref(&ev)) {
                            out.reply.push(err("storage", &e.to_string()));
                        }
                        WireMessage::error(Some(sid), Some(subject), Some(seq), e.code(), &e.to_string())
                    }
                };
                let client = live.clients.entry(subject.clone()).or_default();
                client.last_seq = Some(seq);
                client.last_reply = vec![first.clone()];
                out.reply.push(first);
                out.reply.extend(live.sync(subject, true));
                live.push_all(Some(subject), &mut out);
            }
            other => {
                out.reply.push(err("malformed", &format!("clients may not send {other:?}")));
            }
        }
        out
    }

    /// Closes expired timed tasks in every session.
    pub fn tick(&mut self, now: u64) -> Outbox {
        let mut out = Outbox::default();
        for live in self.sessions.values_mut() {
            let now = now.max(live.last_ts());
            let events = live.session.tick(now);
            if events.is_empty() {
                continue;
            }
            // a failed write surfaces on the next recovery as a shorter log
            let _ = live.persist(&events);
            live.push_all(None, &mut out);
        }
        out
    }
}

struct Shared {
    hub: Hub,
    conns: BTreeMap<(SessionId, SubjectId), Vec<(u64, TcpStream)>>,
}

impl Shared {
    fn deliver(&mut self, push: Vec<(SessionId, SubjectId, WireMessage)>) {
        for (sid, subject, m) in push {
            if let Some(streams) = self.conns.get_mut(&(sid, subject)) {
                let line = m.to_line();
                streams.retain_mut(|(_, s)| s.write_all(line.as_bytes()).is_ok());
            }
        }
    }
}

/// Milliseconds since start, offset so it never runs behind a recovered log.
#[derive(Clone, Copy)]
struct Clock {
    start: Instant,
    floor: u64,
}

impl Clock {
    fn now(&self) -> u64 {
        self.floor + self.start.elapsed().as_millis() as u64
    }
}

pub struct Server {
    pub addr: SocketAddr,
    stop: Arc<AtomicBool>,
    shared: Arc<Mutex<Shared>>,
    threads: Vec<JoinHandle<()>>,
}

fn lock(m: &Mutex<Shared>) -> MutexGuard<'_, Shared> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Server {
    /// Serves `hub` on `addr` until [`Server::shutdown`]. Timers are checked
    /// every `tick_ms`.
    pub fn start(hub: Hub, addr: &str, tick_ms: u64) -> io::Result<Server> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let clock = Clock {
            start: Instant::now(),
            floor: hub.clock_floor(),
        };
        let shared = Arc::new(Mutex::new(Shared {
            hub,
            conns: BTreeMap::new(),
        }));
        let stop = Arc::new(AtomicBool::new(false));

        let ticker = {
            let (shared, stop) = (shared.clone(), stop.clone());
            thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    thread::sleep(Duration::from_millis(tick_ms.max(1)));
                    let mut g = lock(&shared);
                    let out = g.hub.tick(clock.now());
                    g.deliver(out.push);
                }
            })
        };

        let acceptor = {
            let (shared, stop) = (shared.clone(), stop.clone());
            let next_id = Arc::new(AtomicU64::new(0));
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::Relaxed) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let id = next_id.fetch_add(1, Ordering::Relaxed);
                    let shared = shared.clone();
                    thread::spawn(move || connection(stream, id, shared, clock));
                }
            })
        };

        Ok(Server {
            addr,
            stop,
            shared,
            threads: vec![ticker, acceptor],
        })
    }

    /// Stops accepting, closes client connections and waits for the
    /// background threads.
    pub fn shutdown(self) {
        self.stop.store(true, Ordering::Relaxed);
        let _ = TcpStream::connect(self.addr);
        {
            let g = lock(&self.shared);
            for streams in g.conns.values() {
                for (_, s) in streams {
                    let _ = s.shutdown(Shutdown::Both);
                }
            }
        }
        for t in self.threads {
            let _ = t.join();
        }
    }

    /// Runs `f` against the hub, e.g. to inspect sessions.
    pub fn with_hub<T>(&self, f: impl FnOnce(&Hub) -> T) -> T {
        f(&lock(&self.shared).hub)
    }
}

fn connection(stream: TcpStream, id: u64, shared: Arc<Mutex<Shared>>, clock: Clock) {
    let Ok(mut writer) = stream.try_clone() else { return };
    let reader = BufReader::new(stream);
    let mut keys = Vec::new();
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let mut g = lock(&shared);
        let out = g.hub.handle_line(&line, clock.now());
        if let Some(key) = out.joined.clone() {
            if let Ok(w) = writer.try_clone() {
                g.conns.entry(key.clone()).or_default().push((id, w));
                keys.push(key);
            }
        }
        let mut ok = true;
        for m in &out.reply {
            ok &= writer.write_all(m.to_line().as_bytes()).is_ok();
        }
        g.deliver(out.push);
        if !ok {
            break;
        }
    }
    let mut g = lock(&shared);
    for key in keys {
        if let Some(v) = g.conns.get_mut(&key) {
            v.retain(|(c, _)| *c != id);
        }
    }
}

/// Session setups for the `[serve]` section of a config. Manager sessions
/// share the configured pool.
pub fn setups_from_config(cfg: &crate::config::RunConfig) -> Result<Vec<SessionSetup>> {
    use jobmarket_core::session::{ManagerSetup, SessionRole};
    let needs_pool = cfg.serve.sessions.iter().any(|s| s.role == SessionRole::ManagerSession);
    let manager = if needs_pool {
        let data = crate::study::load_pool(cfg)?;
        Some(ManagerSetup {
            pool: data.pool,
            outcomes: data.outcomes,
        })
    } else {
        None
    };
    Ok(cfg
        .serve
        .sessions
        .iter()
        .map(|s| {
            let mut config = cfg.session_config();
            config.rng_seed = s.seed.unwrap_or(cfg.seed);
            SessionSetup {
                session_id: SessionId(s.id.clone()),
                role: s.role,
                roster: s.roster.iter().map(|r| SubjectId(r.clone())).collect(),
                config,
                manager: (s.role == SessionRole::ManagerSession).then(|| manager.clone()).flatten(),
            }
        })
        .collect())
}
