//! Forwarding state machines for PCBB, CBB and EMDV.
//!
//! All three share the sender side: rear neighbors decide what goes into the
//! message (nobody behind: no candidate; one: candidate only; more: candidate
//! plus, for PCBB and CBB, a contention segment `[MinB, MaxB]`). On the
//! receiving side the candidate rebroadcasts at once, vehicles inside the
//! segment wait a distance-dependent contention time and give up if they hear
//! the message again, and everybody else drops it. EMDV keeps only the
//! candidate rule.
//!
//! EMDV here is the single-forwarder scheme as summarized above, not the full
//! original protocol: it has no forwarding-area geometry and no
//! retransmission counters.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::beaconing::NeighborTable;
use crate::forwarder::{
    cbb_boundaries_from, cluster_distances, farthest, pcbb_boundaries, Boundaries, PcbbOutcome, PcbbParams,
};
use crate::types::{classify, distance, EmergencyMessage, MsgKey, Payload, Position, SimTime, VehicleId};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "lowercase")
)]
pub enum ProtocolKind {
    Pcbb,
    Cbb,
    Emdv,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [ProtocolKind::Pcbb, ProtocolKind::Cbb, ProtocolKind::Emdv];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Pcbb => "pcbb",
            ProtocolKind::Cbb => "cbb",
            ProtocolKind::Emdv => "emdv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A scripted danger: at `t_ms` the vehicle nearest `origin_x_m` detects it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct DangerEvent {
    pub t_ms: u64,
    pub code: u8,
    pub origin_x_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct ProtocolParams {
    pub kind: ProtocolKind,
    /// Rebroadcast hops allowed after the original transmission.
    pub hop_cap: u8,
    pub danger_schedule: Vec<DangerEvent>,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            kind: ProtocolKind::Pcbb,
            hop_cap: 4,
            danger_schedule: (1..=9)
                .map(|s| DangerEvent {
                    t_ms: s * 1_000,
                    code: 1,
                    origin_x_m: 1_900.0,
                })
                .collect(),
        }
    }
}

/// `T_c = t_slot * (1 - dis / max_b) * 100` microseconds.
pub fn contention_time(dis: f64, max_b: f64, t_slot_us: f64) -> Result<f64, Error> {
    if max_b.is_nan() || max_b <= 0.0 {
        return Err(Error::ZeroMaxBoundary);
    }
    let dis = dis.clamp(0.0, max_b);
    Ok(t_slot_us * ((1.0 - dis / max_b) * 100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Idle,
    CandidateForwarder,
    SegmentContender,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pending {
    pub msg: EmergencyMessage,
    pub fire_at: SimTime,
    pub role: Role,
    /// Hop number the rebroadcast will carry.
    pub hop: u8,
}

/// Per-vehicle protocol memory.
#[derive(Debug, Clone, Default)]
pub struct ForwardingState {
    seen: BTreeSet<MsgKey>,
    pending: BTreeMap<MsgKey, Pending>,
    /// Last lBest this vehicle derived from its own progress list. Used as
    /// pBest on the next PCBB send and piggybacked on beacons.
    last_l_best: Option<f64>,
    pub decode_errors: u32,
}

impl ForwardingState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn has_seen(&self, key: MsgKey) -> bool {
        self.seen.contains(&key)
    }

    pub fn mark_seen(&mut self, key: MsgKey) -> bool {
        self.seen.insert(key)
    }

    pub fn pending(&self, key: MsgKey) -> Option<&Pending> {
        self.pending.get(&key)
    }

    pub fn last_l_best(&self) -> Option<f64> {
        self.last_l_best
    }

    pub fn role(&self) -> Role {
        let mut role = Role::Idle;
        for p in self.pending.values() {
            if p.role == Role::CandidateForwarder {
                return Role::CandidateForwarder;
            }
            role = p.role;
        }
        role
    }

    fn cancel(&mut self, key: MsgKey) -> Option<Pending> {
        self.pending.remove(&key)
    }
}

/// What a vehicle knows about itself when it decides.
#[derive(Debug, Clone, Copy)]
pub struct NodeView<'a> {
    pub id: VehicleId,
    pub position: Position,
    pub heading: i8,
    pub nt: &'a NeighborTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPlan {
    pub candidate: Option<(VehicleId, f64)>,
    pub boundaries: Option<Boundaries>,
    pub pcbb: Option<PcbbOutcome>,
}

/// Chooses the candidate and contention segment for a vehicle about to send
/// or rebroadcast.
pub fn plan_forwarding<R: Rng + ?Sized>(
    kind: ProtocolKind,
    node: &NodeView<'_>,
    state: &mut ForwardingState,
    params: &PcbbParams,
    rng: &mut R,
) -> ForwardPlan {
    let rear = node.nt.rear_neighbors(node.position, node.heading);
    let candidate = farthest(&rear);
    let mut plan = ForwardPlan {
        candidate,
        boundaries: None,
        pcbb: None,
    };
    let Some((_, dis)) = candidate else {
        return plan;
    };
    if rear.len() < 2 {
        return plan;
    }
    let dists: Vec<f64> = rear.iter().map(|&(_, d)| d).collect();
    match kind {
        ProtocolKind::Emdv => {}
        ProtocolKind::Cbb => {
            plan.boundaries = cbb_boundaries_from(&dists, params.n_max).ok();
        }
        ProtocolKind::Pcbb => {
            let pl = cluster_distances(&dists);
            let g_best = node.nt.gbest_from_crnt();
            if let Ok(out) = pcbb_boundaries(&pl, state.last_l_best, g_best, dis, params, rng) {
                state.last_l_best = Some(out.state.l_best);
                plan.boundaries = Some(out.boundaries);
                plan.pcbb = Some(out);
            } else {
                plan.boundaries = cbb_boundaries_from(&dists, params.n_max).ok();
            }
        }
    }
    plan
}

fn apply_plan(msg: &mut EmergencyMessage, plan: &ForwardPlan) {
    msg.candidate_id = plan.candidate.map(|(id, _)| id);
    msg.min_b = plan.boundaries.map(|b| b.min_b as f32);
    msg.max_b = plan.boundaries.map(|b| b.max_b as f32);
    if let Some((lo, hi)) = msg.boundaries() {
        // f32 rounding must not collapse the segment
        if lo >= hi {
            msg.min_b = None;
            msg.max_b = None;
        }
    }
}

/// Builds the original emergency message for a detected danger and marks
/// it seen by its sender.
#[allow(clippy::too_many_arguments)]
pub fn on_danger_detected<R: Rng + ?Sized>(
    kind: ProtocolKind,
    node: &NodeView<'_>,
    state: &mut ForwardingState,
    danger_code: u8,
    t: SimTime,
    msg_id: u32,
    params: &PcbbParams,
    rng: &mut R,
) -> Result<(EmergencyMessage, ForwardPlan), Error> {
    let code = classify(danger_code)?;
    let plan = plan_forwarding(kind, node, state, params, rng);
    let mut data = [0u8; 12];
    data[..8].copy_from_slice(&node.position.x.to_le_bytes());
    data[8..].copy_from_slice(&node.position.lane.to_le_bytes());
    let mut msg = EmergencyMessage {
        sender_id: node.id,
        code,
        timestamp: t,
        msg_id,
        data: Payload::from_slice(&data)?,
        candidate_id: None,
        min_b: None,
        max_b: None,
    };
    apply_plan(&mut msg, &plan);
    state.mark_seen(msg.key());
    Ok((msg, plan))
}

/// The rebroadcast keeps the identity, code, timestamp and payload of the
/// original and carries this vehicle's own candidate and segment.
pub fn rebroadcast_message<R: Rng + ?Sized>(
    kind: ProtocolKind,
    node: &NodeView<'_>,
    state: &mut ForwardingState,
    original: &EmergencyMessage,
    params: &PcbbParams,
    rng: &mut R,
) -> (EmergencyMessage, ForwardPlan) {
    let plan = plan_forwarding(kind, node, state, params, rng);
    let mut msg = original.clone();
    apply_plan(&mut msg, &plan);
    (msg, plan)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxContext {
    pub t: SimTime,
    /// Where the transmitter was when it sent this copy.
    pub tx_origin: Position,
    /// Hop number of the received copy; the original is hop 0.
    pub hop: u8,
    pub hop_cap: u8,
    pub t_slot_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReceiveAction {
    RebroadcastNow,
    ScheduleContention {
        fire_at: SimTime,
    },
    Drop,
    /// Already seen. Any rebroadcast this vehicle had pending for the message
    /// has been withdrawn.
    Duplicate {
        cancelled: bool,
    },
}

pub fn on_emergency_received(
    kind: ProtocolKind,
    node: &NodeView<'_>,
    state: &mut ForwardingState,
    msg: &EmergencyMessage,
    rx: &RxContext,
) -> ReceiveAction {
    let key = msg.key();
    if !state.mark_seen(key) {
        let cancelled = state.cancel(key).is_some();
        return ReceiveAction::Duplicate { cancelled };
    }
    if !msg.code.is_forwardable() || rx.hop >= rx.hop_cap {
        return ReceiveAction::Drop;
    }
    let action = match kind {
        ProtocolKind::Emdv => emdv_behavior(node, msg),
        ProtocolKind::Pcbb | ProtocolKind::Cbb => contention_decision(node, msg, rx),
    };
    let role = match action {
        ReceiveAction::RebroadcastNow => Role::CandidateForwarder,
        ReceiveAction::ScheduleContention { .. } => Role::SegmentContender,
        _ => return action,
    };
    let fire_at = match action {
        ReceiveAction::ScheduleContention { fire_at } => fire_at,
        _ => rx.t,
    };
    state.pending.insert(
        key,
        Pending {
            msg: msg.clone(),
            fire_at,
            role,
            hop: rx.hop + 1,
        },
    );
    action
}

fn contention_decision(node: &NodeView<'_>, msg: &EmergencyMessage, rx: &RxContext) -> ReceiveAction {
    if msg.candidate_id == Some(node.id) {
        return ReceiveAction::RebroadcastNow;
    }
    let Some((lo, hi)) = msg.boundaries() else {
        return ReceiveAction::Drop;
    };
    let behind = (rx.tx_origin.x - node.position.x) * node.heading as f64 > 0.0;
    let dis = distance(rx.tx_origin, node.position);
    if !behind || dis < lo as f64 || dis > hi as f64 {
        return ReceiveAction::Drop;
    }
    match contention_time(dis, hi as f64, rx.t_slot_us) {
        Ok(wait) => ReceiveAction::ScheduleContention {
            fire_at: rx.t + SimTime(libm::round(wait) as u64),
        },
        Err(_) => ReceiveAction::Drop,
    }
}

/// Only the designated candidate forwards.
pub fn emdv_behavior(node: &NodeView<'_>, msg: &EmergencyMessage) -> ReceiveAction {
    if msg.candidate_id == Some(node.id) {
        ReceiveAction::RebroadcastNow
    } else {
        ReceiveAction::Drop
    }
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum FireAction {
    Rebroadcast(Pending),
    Cancel,
}

/// A pending rebroadcast comes due. It goes ahead unless it was withdrawn
/// after hearing another copy, or another copy is on the air right now.
pub fn contention_fire(state: &mut ForwardingState, key: MsgKey, same_msg_on_air: bool) -> FireAction {
    match state.cancel(key) {
        Some(p) if !same_msg_on_air => FireAction::Rebroadcast(p),
        _ => FireAction::Cancel,
    }
}

/// Withdraws a pending rebroadcast, e.g. when the MAC hands it back.
pub fn withdraw(state: &mut ForwardingState, key: MsgKey) -> Option<Pending> {
    state.cancel(key)
}
