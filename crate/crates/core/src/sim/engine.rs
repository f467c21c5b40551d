use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::eabehp::{satisfies, AttributeSet};
use crate::protocol::{
    Alert, AlertCode, Deployment, Dest, EcuNode, Event, MsgType, Output, ProtocolError, ProvisionedVehicle,
    SecurityAgent, SessionId,
};
use crate::DeviceId;

use super::frame::{fragment, frame_time_ns, BusConfig, CanFdFrame, Reassembly};
use super::{CostModel, NodeClass, SimError};

/// Node index used for injected (attacker) frames.
pub const ATTACKER_INDEX: u8 = 0xff;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    /// Price the operation log with the cost tables.
    #[default]
    Table,
    /// Charge the measured wall time of each handler.
    Live,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub bus: BusConfig,
    pub costs: CostModel,
    pub mode: CostMode,
    pub sa_class: NodeClass,
    /// Ack collection window, measured from the last ack.
    pub window_ns: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            bus: BusConfig::default(),
            costs: CostModel::reference(),
            mode: CostMode::Table,
            sa_class: NodeClass::Sa1400,
            window_ns: 50_000_000,
        }
    }
}

/// A message put on the bus by an outside node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Injection {
    pub at_ns: u64,
    pub to: Dest,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TraceKind {
    ComputeStart,
    ComputeEnd,
    TxStart,
    TxEnd,
    Rx,
    Abort,
    Alert,
    Session,
}

impl TraceKind {
    pub fn label(self) -> &'static str {
        match self {
            TraceKind::ComputeStart => "compute-start",
            TraceKind::ComputeEnd => "compute-end",
            TraceKind::TxStart => "tx-start",
            TraceKind::TxEnd => "tx-end",
            TraceKind::Rx => "rx",
            TraceKind::Abort => "abort",
            TraceKind::Alert => "alert",
            TraceKind::Session => "session",
        }
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub time_ns: u64,
    pub node: String,
    pub kind: TraceKind,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    Abort,
    Stall,
    /// A receiver outside the policy completed mutual authentication.
    Leak,
    ReplayRejected,
    TamperRejected,
    /// Curious-SA scan found no secret and a unique time key.
    ScanClean,
    /// An attack went unnoticed.
    Undetected,
}

impl RunStatus {
    pub const ALL: [RunStatus; 8] = [
        RunStatus::Ok,
        RunStatus::Abort,
        RunStatus::Stall,
        RunStatus::Leak,
        RunStatus::ReplayRejected,
        RunStatus::TamperRejected,
        RunStatus::ScanClean,
        RunStatus::Undetected,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Abort => "abort",
            RunStatus::Stall => "stall",
            RunStatus::Leak => "leak",
            RunStatus::ReplayRejected => "replay-rejected",
            RunStatus::TamperRejected => "tamper-rejected",
            RunStatus::ScanClean => "scan-clean",
            RunStatus::Undetected => "undetected",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One whole message handed to a bus controller.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BusMessage {
    pub time_ns: u64,
    pub from: DeviceId,
    pub to: Dest,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct SimReport {
    pub status: RunStatus,
    pub total_ns: u64,
    /// Time during which at least one node was computing.
    pub crypto_ns: u64,
    /// Time during which the bus carried a frame.
    pub bus_ns: u64,
    pub frames: usize,
    pub trace: Vec<TraceEvent>,
    pub alerts: Vec<(u64, Alert)>,
    pub completions: BTreeMap<SessionId, u64>,
    pub mutual_auth: BTreeSet<(DeviceId, DeviceId)>,
    /// Fatal alerts not explained by a receiver failing the policy.
    pub unexpected_aborts: Vec<Alert>,
    pub stuck: Vec<String>,
    pub bus_log: Vec<BusMessage>,
}

impl SimReport {
    pub fn seconds(ns: u64) -> f64 {
        ns as f64 / 1e9
    }

    pub fn total_s(&self) -> f64 {
        Self::seconds(self.total_ns)
    }

    /// The stall as an error, naming the stuck sessions.
    pub fn check_stall(&self) -> Result<(), SimError> {
        if self.stuck.is_empty() {
            Ok(())
        } else {
            Err(SimError::Stall(self.stuck.clone()))
        }
    }

    pub fn fatal_alerts(&self) -> impl Iterator<Item = &Alert> {
        self.alerts.iter().map(|(_, a)| a).filter(|a| a.code.is_fatal())
    }

    pub fn write_trace_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time_s", "node", "kind", "detail"])?;
        for e in &self.trace {
            out.write_record([
                format!("{:.9}", Self::seconds(e.time_ns)),
                e.node.clone(),
                e.kind.to_string(),
                e.detail.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn trace_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_trace_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 csv")
    }

    pub fn alerts_csv(&self) -> String {
        let mut s = String::from(Alert::CSV_HEADER);
        s.push('\n');
        for (t, a) in &self.alerts {
            s.push_str(&a.csv_line(Self::seconds(*t)));
            s.push('\n');
        }
        s
    }
}

enum Actor {
    Sa,
    Ecu(DeviceId),
    Attacker,
}

enum Task {
    Start(u64),
    Bytes(Vec<u8>),
    Idle,
}

struct Station {
    actor: Actor,
    device: DeviceId,
    index: u8,
    class: NodeClass,
    label: String,
    busy: bool,
    inbox: VecDeque<Task>,
    held: Option<Output>,
    /// Frames waiting for the bus, keyed by (can_id, sequence).
    mailbox: BTreeMap<(u16, u64), (CanFdFrame, Dest)>,
    next_msg_id: u8,
    window_gen: u64,
}

#[derive(Debug)]
enum Ev {
    Begin(usize),
    ComputeDone(usize),
    TxEnd {
        station: usize,
        frame: CanFdFrame,
        to: Dest,
    },
    Window {
        station: usize,
        gen: u64,
    },
    Inject {
        bytes: Vec<u8>,
        to: Dest,
    },
}

/// Priority class per message type; lower transmits first.
fn class_of(bytes: &[u8]) -> u16 {
    match bytes.first().copied().and_then(MsgType::from_u8) {
        Some(MsgType::Challenge | MsgType::RequestChallenge | MsgType::PartialResult) => 0,
        Some(MsgType::Hello | MsgType::Request | MsgType::CredentialSubmit) => 1,
        Some(MsgType::CipherPublish) => 2,
        Some(MsgType::KeyDigest | MsgType::ReceiverAck | MsgType::GroupList) => 3,
        None => 7,
    }
}

fn describe(bytes: &[u8]) -> String {
    let name = bytes
        .first()
        .copied()
        .and_then(MsgType::from_u8)
        .map(|t| t.name())
        .unwrap_or("unknown");
    if bytes.len() >= 3 {
        format!(
            "{name} from={} len={}",
            u16::from_be_bytes([bytes[1], bytes[2]]),
            bytes.len()
        )
    } else {
        format!("{name} len={}", bytes.len())
    }
}

/// Discrete-event simulation of one provisioned vehicle.
pub struct Simulator {
    deployment: Deployment,
    cfg: SimConfig,
    vehicle: ProvisionedVehicle,
    sa: SecurityAgent,
    nodes: BTreeMap<DeviceId, EcuNode>,
    satisfying: BTreeSet<(DeviceId, DeviceId)>,
    pairs: BTreeSet<(DeviceId, DeviceId)>,
}

impl Simulator {
    pub fn new(deployment: &Deployment, cfg: SimConfig, seed: u64) -> Result<Self, SimError> {
        cfg.bus.validate()?;
        if deployment.senders.len() + deployment.receivers.len() > 250 {
            return Err(SimError::Config("at most 250 ECUs fit the identifier space".into()));
        }
        let (vehicle, sa, nodes) = deployment.instantiate(seed)?;
        let mut satisfying = BTreeSet::new();
        let mut pairs = BTreeSet::new();
        for r in &deployment.receivers {
            let attrs = AttributeSet::new(deployment.n_attrs, r.attrs.iter().copied()).map_err(ProtocolError::from)?;
            for s in &r.senders {
                let spec = deployment.senders.iter().find(|x| x.id == *s).expect("validated");
                pairs.insert((r.id, *s));
                if satisfies(&spec.policy, &attrs) {
                    satisfying.insert((r.id, *s));
                }
            }
        }
        Ok(Simulator {
            deployment: deployment.clone(),
            cfg,
            vehicle,
            sa,
            nodes,
            satisfying,
            pairs,
        })
    }

    pub fn vehicle(&self) -> &ProvisionedVehicle {
        &self.vehicle
    }

    pub fn sa(&self) -> &SecurityAgent {
        &self.sa
    }

    pub fn node(&self, id: DeviceId) -> Option<&EcuNode> {
        self.nodes.get(&id)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// `(receiver, sender)` pairs whose receiver satisfies the sender's policy.
    pub fn satisfying_pairs(&self) -> &BTreeSet<(DeviceId, DeviceId)> {
        &self.satisfying
    }

    pub fn run_epoch(&mut self, r_k: u64) -> Result<SimReport, SimError> {
        self.run_epoch_with(r_k, &[])
    }

    /// Runs one epoch to completion. `injections` are transmitted by an
    /// extra node with the lowest index priority.
    pub fn run_epoch_with(&mut self, r_k: u64, injections: &[Injection]) -> Result<SimReport, SimError> {
        Run::new(self, injections, None).go(r_k)
    }

    /// Like [`Simulator::run_epoch_with`], but every honest message passes
    /// through `tamper` (with its send order) before it is fragmented.
    pub fn run_epoch_tampered(
        &mut self,
        r_k: u64,
        injections: &[Injection],
        tamper: &mut dyn FnMut(usize, &mut Vec<u8>),
    ) -> Result<SimReport, SimError> {
        Run::new(self, injections, Some(tamper)).go(r_k)
    }
}

struct Run<'a> {
    sim: &'a mut Simulator,
    stations: Vec<Station>,
    by_device: BTreeMap<DeviceId, usize>,
    events: BTreeMap<(u64, u64), Ev>,
    seq: u64,
    now: u64,
    bus_busy: bool,
    reassembly: BTreeMap<(usize, u8), Reassembly>,
    report: SimReport,
    compute_open: Vec<(u64, u64)>,
    frame_seq: u64,
    tamper: Option<Tamper<'a>>,
    sent: usize,
}

/// Rewrites honest message `i` before it is fragmented.
type Tamper<'a> = &'a mut dyn FnMut(usize, &mut Vec<u8>);

impl<'a> Run<'a> {
    fn new(sim: &'a mut Simulator, injections: &[Injection], tamper: Option<Tamper<'a>>) -> Self {
        let mut stations = vec![Station::new(
            Actor::Sa,
            sim.deployment.sa_id,
            0,
            sim.cfg.sa_class,
            "sa".into(),
        )];
        for (i, id) in sim.nodes.keys().enumerate() {
            stations.push(Station::new(
                Actor::Ecu(*id),
                *id,
                (i + 1) as u8,
                NodeClass::Ecu,
                format!("ecu{id}"),
            ));
        }
        let mut run = Run {
            sim,
            by_device: BTreeMap::new(),
            stations,
            events: BTreeMap::new(),
            seq: 0,
            now: 0,
            bus_busy: false,
            reassembly: BTreeMap::new(),
            report: SimReport {
                status: RunStatus::Ok,
                total_ns: 0,
                crypto_ns: 0,
                bus_ns: 0,
                frames: 0,
                trace: Vec::new(),
                alerts: Vec::new(),
                completions: BTreeMap::new(),
                mutual_auth: BTreeSet::new(),
                unexpected_aborts: Vec::new(),
                stuck: Vec::new(),
                bus_log: Vec::new(),
            },
            compute_open: Vec::new(),
            frame_seq: 0,
            tamper,
            sent: 0,
        };
        for (i, s) in run.stations.iter().enumerate() {
            run.by_device.insert(s.device, i);
        }
        if !injections.is_empty() {
            run.stations.push(Station::new(
                Actor::Attacker,
                DeviceId(u16::MAX),
                ATTACKER_INDEX,
                NodeClass::Ecu,
                "attacker".into(),
            ));
            for inj in injections {
                run.schedule(
                    inj.at_ns,
                    Ev::Inject {
                        bytes: inj.bytes.clone(),
                        to: inj.to,
                    },
                );
            }
        }
        run
    }

    fn schedule(&mut self, at: u64, ev: Ev) {
        self.events.insert((at, self.seq), ev);
        self.seq += 1;
    }

    fn trace(&mut self, station: usize, kind: TraceKind, detail: String) {
        self.report.trace.push(TraceEvent {
            time_ns: self.now,
            node: self.stations[station].label.clone(),
            kind,
            detail,
        });
    }

    fn go(mut self, r_k: u64) -> Result<SimReport, SimError> {
        for i in 0..self.stations.len() {
            if !matches!(self.stations[i].actor, Actor::Attacker) {
                self.stations[i].inbox.push_back(Task::Start(r_k));
                self.schedule(0, Ev::Begin(i));
            }
        }
        let mut idle_kicked = false;
        loop {
            while let Some(((t, _), ev)) = self.events.pop_first() {
                self.now = t;
                self.step(ev)?;
            }
            if self.unfinished().is_empty() {
                break;
            }
            if idle_kicked {
                self.report.stuck = self.unfinished();
                self.fire_timeouts();
                break;
            }
            // Queue drained with open sessions: give windows a last chance.
            idle_kicked = true;
            for i in 1..self.stations.len() {
                if matches!(self.stations[i].actor, Actor::Ecu(_)) {
                    self.stations[i].inbox.push_back(Task::Idle);
                    self.schedule(self.now, Ev::Begin(i));
                }
            }
        }
        self.finish()
    }

    /// Protocol timers of every open session expire at the current instant.
    fn fire_timeouts(&mut self) {
        for i in 1..self.stations.len() {
            let Actor::Ecu(id) = self.stations[i].actor else {
                continue;
            };
            let out = self.sim.nodes.get_mut(&id).expect("station").on_timeout();
            for a in out.alerts {
                self.trace(i, TraceKind::Abort, format!("{} step={} {}", a.session, a.step, a.code));
                self.report.unexpected_aborts.push(a);
                self.report.alerts.push((self.now, a));
            }
        }
    }

    fn unfinished(&self) -> Vec<String> {
        let mut out = Vec::new();
        for n in self.sim.nodes.values() {
            if let Some(s) = n.sender() {
                if !s.is_finished() {
                    out.push(SessionId::Sender(n.id()).to_string());
                }
            }
            for r in n.receivers() {
                if !r.is_finished() {
                    out.push(
                        SessionId::Receiver {
                            id: n.id(),
                            sender: r.sender_id(),
                        }
                        .to_string(),
                    );
                }
            }
        }
        out
    }

    fn step(&mut self, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::Begin(i) => self.begin(i),
            Ev::ComputeDone(i) => self.compute_done(i),
            Ev::TxEnd { station, frame, to } => self.tx_end(station, frame, to),
            Ev::Window { station, gen } => {
                if self.stations[station].window_gen == gen {
                    self.stations[station].inbox.push_back(Task::Idle);
                    self.begin(station)?;
                }
                Ok(())
            }
            Ev::Inject { bytes, to } => {
                let idx = self.stations.len() - 1;
                self.enqueue_message(idx, bytes, to)?;
                self.arbitrate()
            }
        }
    }

    /// Runs the next queued task on an idle station.
    fn begin(&mut self, i: usize) -> Result<(), SimError> {
        if self.stations[i].busy {
            return Ok(());
        }
        let Some(task) = self.stations[i].inbox.pop_front() else {
            return Ok(());
        };
        let label = match &task {
            Task::Start(_) => "start".to_string(),
            Task::Bytes(b) => describe(b),
            Task::Idle => "window".to_string(),
        };
        let clock = Instant::now();
        let out = match (&self.stations[i].actor, task) {
            (Actor::Sa, Task::Start(_)) => {
                self.sim.sa.begin_epoch();
                Output::default()
            }
            (Actor::Sa, Task::Bytes(b)) => self.sim.sa.handle_bytes(&b),
            (Actor::Ecu(id), Task::Start(r_k)) => self
                .sim
                .nodes
                .get_mut(id)
                .expect("station")
                .start_epoch(r_k.to_be_bytes())?,
            (Actor::Ecu(id), Task::Bytes(b)) => self.sim.nodes.get_mut(id).expect("station").handle_bytes(&b),
            (Actor::Ecu(id), Task::Idle) => self.sim.nodes.get_mut(id).expect("station").on_idle(),
            _ => Output::default(),
        };
        let elapsed = clock.elapsed().as_nanos() as u64;
        if out.is_empty() {
            return self.begin(i);
        }
        let cost = match self.sim.cfg.mode {
            CostMode::Table => self.sim.cfg.costs.price_ns(self.stations[i].class, &out.ops)?,
            CostMode::Live => elapsed,
        };
        self.trace(i, TraceKind::ComputeStart, label);
        self.compute_open.push((self.now, self.now + cost));
        self.stations[i].busy = true;
        self.stations[i].held = Some(out);
        self.schedule(self.now + cost, Ev::ComputeDone(i));
        Ok(())
    }

    fn compute_done(&mut self, i: usize) -> Result<(), SimError> {
        let out = self.stations[i].held.take().expect("held output");
        self.stations[i].busy = false;
        self.trace(i, TraceKind::ComputeEnd, format!("ops={}", out.ops.len()));
        for a in out.alerts {
            let kind = if a.code.is_fatal() {
                TraceKind::Abort
            } else {
                TraceKind::Alert
            };
            self.trace(i, kind, format!("{} step={} {}", a.session, a.step, a.code));
            if a.code.is_fatal() {
                self.report.completions.entry(a.session).or_insert(self.now);
                let expected = matches!(
                    (a.code, a.session),
                    (AlertCode::WrongKey, SessionId::Receiver { id, sender })
                        if !self.sim.satisfying.contains(&(id, sender))
                );
                if !expected {
                    self.report.unexpected_aborts.push(a);
                }
            }
            self.report.alerts.push((self.now, a));
        }
        for e in out.events {
            match &e {
                Event::MutualAuthOk { receiver, sender } => {
                    self.report.mutual_auth.insert((*receiver, *sender));
                    self.report.completions.insert(
                        SessionId::Receiver {
                            id: *receiver,
                            sender: *sender,
                        },
                        self.now,
                    );
                }
                Event::WindowClosed { sender, .. } => {
                    self.report.completions.insert(SessionId::Sender(*sender), self.now);
                }
                Event::AckRecorded { .. } => {
                    let st = &mut self.stations[i];
                    st.window_gen += 1;
                    let gen = st.window_gen;
                    let at = self.now + self.sim.cfg.window_ns;
                    self.schedule(at, Ev::Window { station: i, gen });
                }
                _ => {}
            }
            self.trace(i, TraceKind::Session, e.to_string());
        }
        for m in out.messages {
            self.enqueue_message(i, m.msg.encode(), m.to)?;
        }
        self.begin(i)?;
        self.arbitrate()
    }

    fn enqueue_message(&mut self, i: usize, mut bytes: Vec<u8>, to: Dest) -> Result<(), SimError> {
        if !matches!(self.stations[i].actor, Actor::Attacker) {
            if let Some(t) = self.tamper.as_mut() {
                t(self.sent, &mut bytes);
            }
            self.sent += 1;
        }
        let st = &mut self.stations[i];
        let can_id = (class_of(&bytes) << 8) | st.index as u16;
        let msg_id = st.next_msg_id;
        st.next_msg_id = st.next_msg_id.wrapping_add(1);
        for f in fragment(&bytes, msg_id, can_id)? {
            self.stations[i].mailbox.insert((can_id, self.frame_seq), (f, to));
            self.frame_seq += 1;
        }
        self.report.bus_log.push(BusMessage {
            time_ns: self.now,
            from: self.stations[i].device,
            to,
            bytes,
        });
        Ok(())
    }

    /// Starts the next frame if the bus is idle: lowest can_id, then lowest
    /// node index.
    fn arbitrate(&mut self) -> Result<(), SimError> {
        if self.bus_busy {
            return Ok(());
        }
        let winner = self
            .stations
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.mailbox.keys().next().map(|k| ((k.0, s.index), i)))
            .min();
        let Some((_, i)) = winner else { return Ok(()) };
        let (_, (frame, to)) = self.stations[i].mailbox.pop_first().expect("non-empty");
        let dt = frame_time_ns(frame.payload.len(), &self.sim.cfg.bus)?;
        self.trace(
            i,
            TraceKind::TxStart,
            format!(
                "id=0x{:03x} msg={} frag={}/{}",
                frame.can_id,
                frame.msg_id(),
                frame.frag_index(),
                frame.frag_total()
            ),
        );
        self.bus_busy = true;
        self.report.bus_ns += dt;
        self.report.frames += 1;
        self.schedule(self.now + dt, Ev::TxEnd { station: i, frame, to });
        Ok(())
    }

    fn recipients(&self, from: usize, bytes: &[u8], to: Dest) -> Vec<usize> {
        match to {
            Dest::Unicast(d) => self.by_device.get(&d).copied().into_iter().collect(),
            Dest::Broadcast => {
                let claimed = (bytes.len() >= 3).then(|| DeviceId(u16::from_be_bytes([bytes[1], bytes[2]])));
                let subs = claimed.map(|c| self.sim.deployment.subscribers(c)).unwrap_or_default();
                if subs.is_empty() {
                    (0..self.stations.len())
                        .filter(|i| *i != from && !matches!(self.stations[*i].actor, Actor::Attacker))
                        .collect()
                } else {
                    subs.iter().filter_map(|d| self.by_device.get(d).copied()).collect()
                }
            }
        }
    }

    fn tx_end(&mut self, from: usize, frame: CanFdFrame, to: Dest) -> Result<(), SimError> {
        self.bus_busy = false;
        self.trace(
            from,
            TraceKind::TxEnd,
            format!(
                "id=0x{:03x} msg={} frag={}",
                frame.can_id,
                frame.msg_id(),
                frame.frag_index()
            ),
        );
        let msg_id = frame.msg_id();
        let done = self.reassembly.entry((from, msg_id)).or_default().push(frame);
        if let Some(done) = done {
            self.reassembly.remove(&(from, msg_id));
            let bytes = done?;
            for r in self.recipients(from, &bytes, to) {
                self.trace(r, TraceKind::Rx, describe(&bytes));
                self.stations[r].inbox.push_back(Task::Bytes(bytes.clone()));
                self.begin(r)?;
            }
        }
        self.arbitrate()
    }

    fn finish(mut self) -> Result<SimReport, SimError> {
        self.report.total_ns = self.report.trace.last().map_or(0, |e| e.time_ns);
        let mut spans = std::mem::take(&mut self.compute_open);
        spans.sort_unstable();
        let mut busy = 0;
        let mut cur: Option<(u64, u64)> = None;
        for (a, b) in spans {
            match cur {
                Some((s, e)) if a <= e => cur = Some((s, e.max(b))),
                Some((s, e)) => {
                    busy += e - s;
                    cur = Some((a, b));
                }
                None => cur = Some((a, b)),
            }
        }
        if let Some((s, e)) = cur {
            busy += e - s;
        }
        self.report.crypto_ns = busy;

        let leaked = self.report.mutual_auth.iter().any(|p| !self.sim.satisfying.contains(p));
        let missing = self.sim.satisfying.iter().any(|p| !self.report.mutual_auth.contains(p));
        self.report.status = if !self.report.stuck.is_empty() {
            RunStatus::Stall
        } else if leaked {
            RunStatus::Leak
        } else if !self.report.unexpected_aborts.is_empty() || missing {
            RunStatus::Abort
        } else {
            RunStatus::Ok
        };
        debug_assert!(self.sim.pairs.is_superset(&self.sim.satisfying));
        Ok(self.report)
    }
}

impl Station {
    fn new(actor: Actor, device: DeviceId, index: u8, class: NodeClass, label: String) -> Self {
        Station {
            actor,
            device,
            index,
            class,
            label,
            busy: false,
            inbox: VecDeque::new(),
            held: None,
            mailbox: BTreeMap::new(),
            next_msg_id: 0,
            window_gen: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ScenarioConfig;

    fn tiny(senders: usize, receivers: usize) -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.group.preset = Some("tiny".into());
        c.costs.extrapolate = true;
        c.nodes.n_sys_att = 4;
        c.nodes.n_rx_att = 2;
        c.nodes.senders = senders;
        c.nodes.receivers_per_sender = receivers;
        c
    }

    fn run(c: &ScenarioConfig) -> SimReport {
        let mut sim = Simulator::new(&c.deployment().unwrap(), c.sim_config().unwrap(), c.seed).unwrap();
        sim.run_epoch(c.r_k).unwrap()
    }

    #[test]
    fn one_to_one_finishes_with_mutual_auth() {
        let r = run(&tiny(1, 1));
        assert_eq!(r.status, RunStatus::Ok, "{:?}", r.alerts);
        let last_session = r.trace.iter().rev().find(|e| e.kind == TraceKind::Session).unwrap();
        assert!(r
            .trace
            .iter()
            .any(|e| e.detail.starts_with("mutual-auth-ok receiver=101 sender=1")));
        assert!(
            last_session.detail.starts_with("mutual-auth-ok"),
            "{}",
            last_session.detail
        );
        assert!(r.total_ns >= r.crypto_ns.max(r.bus_ns));
    }

    #[test]
    fn deterministic_traces() {
        let c = tiny(1, 3);
        assert_eq!(run(&c).trace_csv(), run(&c).trace_csv());
    }

    #[test]
    fn trace_conservation() {
        let r = run(&tiny(2, 3));
        assert!(r.trace.windows(2).all(|w| w[0].time_ns <= w[1].time_ns));
        let count = |k| r.trace.iter().filter(|e| e.kind == k).count();
        assert_eq!(count(TraceKind::TxStart), count(TraceKind::TxEnd));
        assert_eq!(count(TraceKind::TxStart), r.frames);
        assert_eq!(count(TraceKind::ComputeStart), count(TraceKind::ComputeEnd));
        let csv = r.trace_csv();
        assert!(csv.starts_with("time_s,node,kind,detail\n"));
    }

    #[test]
    fn faster_data_phase_is_faster() {
        let mut c = tiny(1, 2);
        c.bus.data_rate = 1e6;
        let slow = run(&c).total_ns;
        c.bus.data_rate = 8e6;
        assert!(run(&c).total_ns < slow);
    }

    #[test]
    fn higher_priority_message_finishes_first() {
        let mut c = tiny(2, 2);
        c.group.preset = Some("sim512".into());
        let r = run(&c);
        assert_eq!(r.status, RunStatus::Ok);
        // Both senders publish at the same instant; sender 1 has the lower
        // node index and therefore wins every frame.
        let publish_end = |node: &str| {
            r.trace
                .iter()
                .filter(|e| e.node == node && e.kind == TraceKind::TxEnd && e.detail.starts_with("id=0x2"))
                .map(|e| e.time_ns)
                .max()
                .unwrap()
        };
        let ecu2_first = r
            .trace
            .iter()
            .find(|e| e.node == "ecu2" && e.kind == TraceKind::TxStart && e.detail.starts_with("id=0x2"))
            .unwrap()
            .time_ns;
        assert!(publish_end("ecu1") < publish_end("ecu2"));
        assert!(publish_end("ecu1") <= ecu2_first);
    }

    #[test]
    fn non_satisfying_receiver_is_not_an_abort() {
        let mut c = tiny(1, 3);
        c.group.preset = Some("sim512".into());
        c.nodes.non_satisfying = 1;
        let r = run(&c);
        assert_eq!(r.status, RunStatus::Ok, "{:?}", r.unexpected_aborts);
        assert_eq!(r.mutual_auth.len(), 2);
        assert!(r.alerts.iter().any(|(_, a)| a.code == AlertCode::WrongKey));
    }

    #[test]
    fn window_timer_closes_without_expected_count() {
        let mut c = tiny(1, 2);
        c.nodes.close_on_expected = false;
        c.nodes.window_ms = 5.0;
        let r = run(&c);
        assert_eq!(r.status, RunStatus::Ok);
        let closed = r.completions[&SessionId::Sender(DeviceId(1))];
        let last_ack = r
            .trace
            .iter()
            .filter(|e| e.detail.starts_with("ack-recorded"))
            .map(|e| e.time_ns)
            .max()
            .unwrap();
        assert!(closed >= last_ack + 5_000_000);
    }

    #[test]
    fn injected_replay_is_rejected() {
        let c = tiny(1, 1);
        let dep = c.deployment().unwrap();
        let mut sim = Simulator::new(&dep, c.sim_config().unwrap(), 3).unwrap();
        let first = sim.run_epoch(1).unwrap();
        let inj: Vec<Injection> = first
            .bus_log
            .iter()
            .map(|m| Injection {
                at_ns: 0,
                to: m.to,
                bytes: m.bytes.clone(),
            })
            .collect();
        let r = sim.run_epoch_with(2, &inj).unwrap();
        assert!(r
            .alerts
            .iter()
            .any(|(_, a)| a.code == AlertCode::Replay || a.code == AlertCode::BadMac));
        assert!(r.trace.iter().any(|e| e.node == "attacker"));
    }

    #[test]
    fn lost_challenge_stalls_with_timeouts() {
        let c = tiny(1, 2);
        let mut sim = Simulator::new(&c.deployment().unwrap(), c.sim_config().unwrap(), 4).unwrap();
        let mut garble = |_: usize, b: &mut Vec<u8>| {
            if b[0] == MsgType::Challenge as u8 {
                b.truncate(3);
            }
        };
        let r = sim.run_epoch_tampered(1, &[], &mut garble).unwrap();
        assert_eq!(r.status, RunStatus::Stall, "{:?} {:?}", r.alerts, r.stuck);
        assert!(r.check_stall().is_err());
        assert!(r.stuck.contains(&"sender:1".to_string()), "{:?}", r.stuck);
        assert!(r.fatal_alerts().any(|a| a.code == AlertCode::Timeout));
    }
}
