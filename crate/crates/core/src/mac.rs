//! 802.11p-style timing: frame airtime, slotted backoff and carrier-sense
//! deferral.
//!
//! A station that wants the medium first waits for DIFS of idle channel and
//! then counts its backoff down one slot at a time. The countdown freezes
//! whenever the channel turns busy and resumes, after a fresh DIFS, once it is
//! idle again. Broadcast frames are never acknowledged, so there is no
//! retransmission and the contention window never grows; SIFS and `cw_max`
//! are carried for completeness only.

use alloc::vec::Vec;

use rand::Rng;

use crate::types::SimTime;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct MacParams {
    pub slot_us: u64,
    pub sifs_us: u64,
    pub difs_us: u64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub data_rate_bps: u64,
    pub plcp_us: u64,
    pub symbol_us: u64,
    /// Backoff counts slots when set; when cleared the contention window is
    /// read as microseconds and the countdown runs in 1 us steps.
    pub cw_in_slots: bool,
}

impl Default for MacParams {
    fn default() -> Self {
        Self {
            slot_us: 16,
            sifs_us: 32,
            difs_us: 64,
            cw_min: 15,
            cw_max: 1023,
            data_rate_bps: 6_000_000,
            plcp_us: 8,
            symbol_us: 8,
            cw_in_slots: true,
        }
    }
}

impl MacParams {
    /// Duration of one backoff step.
    pub fn backoff_unit_us(&self) -> u64 {
        if self.cw_in_slots {
            self.slot_us
        } else {
            1
        }
    }
}

/// PLCP header plus the payload rounded up to whole OFDM symbols.
pub fn tx_duration(params: &MacParams, payload_bytes: usize) -> u64 {
    let bits = payload_bytes as u64 * 8;
    // bits per symbol = rate * symbol duration; kept as a fraction to stay exact
    let num = bits * 1_000_000;
    let den = params.data_rate_bps * params.symbol_us;
    params.plcp_us + num.div_ceil(den) * params.symbol_us
}

/// Uniform integer in `[0, cw]`.
pub fn draw_backoff<R: Rng + ?Sized>(cw: u32, rng: &mut R) -> u32 {
    rng.gen_range(0..=cw)
}

fn slots_elapsed(params: &MacParams, since: SimTime, now: SimTime) -> u64 {
    let idle = now.saturating_sub(since).as_us();
    idle.saturating_sub(params.difs_us) / params.backoff_unit_us()
}

/// Start time of a frame that becomes ready at `t_ready` with `backoff`
/// steps to count, given every interval `[start, end)` during which this
/// station senses the channel busy.
///
/// A busy period that begins exactly when the countdown reaches zero does not
/// stop the transmission: both stations go on the air in the same slot.
pub fn csma_start_time(params: &MacParams, t_ready: SimTime, backoff: u32, busy: &[(SimTime, SimTime)]) -> SimTime {
    let unit = params.backoff_unit_us();
    let mut t = t_ready;
    let mut remaining = backoff as u64;
    loop {
        while let Some(&(_, end)) = busy.iter().find(|&&(s, e)| s <= t && t < e) {
            t = end;
        }
        let fire = t + SimTime(params.difs_us + remaining * unit);
        let next = busy.iter().map(|&(s, _)| s).filter(|&s| s > t).min();
        match next {
            Some(s) if s < fire => {
                remaining -= slots_elapsed(params, t, s).min(remaining);
                t = s;
            }
            _ => return fire,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Access {
    Idle,
    Counting { since: SimTime, remaining: u64 },
    Frozen { remaining: u64 },
}

/// Incremental form of [`csma_start_time`] for an event-driven engine.
///
/// The owner reports every sensed transmission start and end; whenever a
/// method returns a fire time the owner schedules an attempt for it and, when
/// the attempt comes due, checks [`Csma::fire_time`] still matches before
/// transmitting.
#[derive(Debug, Clone)]
pub struct Csma {
    access: Access,
    sensed: u32,
}

impl Default for Csma {
    fn default() -> Self {
        Self::new()
    }
}

impl Csma {
    pub fn new() -> Self {
        Self {
            access: Access::Idle,
            sensed: 0,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.access == Access::Idle
    }

    pub fn channel_busy(&self) -> bool {
        self.sensed > 0
    }

    pub fn fire_time(&self, params: &MacParams) -> Option<SimTime> {
        match self.access {
            Access::Counting { since, remaining } => {
                Some(since + SimTime(params.difs_us + remaining * params.backoff_unit_us()))
            }
            _ => None,
        }
    }

    /// Begins contending for the medium at `t`.
    pub fn request(&mut self, params: &MacParams, t: SimTime, backoff: u32) -> Option<SimTime> {
        let remaining = backoff as u64;
        self.access = if self.sensed == 0 {
            Access::Counting { since: t, remaining }
        } else {
            Access::Frozen { remaining }
        };
        self.fire_time(params)
    }

    pub fn sense_start(&mut self, params: &MacParams, t: SimTime) {
        self.sensed += 1;
        if self.sensed != 1 {
            return;
        }
        if let Access::Counting { since, remaining } = self.access {
            if self.fire_time(params).is_some_and(|f| f > t) {
                let done = slots_elapsed(params, since, t).min(remaining);
                self.access = Access::Frozen {
                    remaining: remaining - done,
                };
            }
        }
    }

    pub fn sense_end(&mut self, params: &MacParams, t: SimTime) -> Option<SimTime> {
        debug_assert!(self.sensed > 0);
        self.sensed = self.sensed.saturating_sub(1);
        if self.sensed == 0 {
            if let Access::Frozen { remaining } = self.access {
                self.access = Access::Counting { since: t, remaining };
                return self.fire_time(params);
            }
        }
        None
    }

    /// The countdown completed and the frame went on the air, or the
    /// attempt was abandoned.
    pub fn reset(&mut self) {
        self.access = Access::Idle;
    }
}

/// Replays a sensed busy trace through [`Csma`] and returns the start time.
/// Intervals are `[start, end)` and may overlap.
pub fn replay_csma(params: &MacParams, t_ready: SimTime, backoff: u32, busy: &[(SimTime, SimTime)]) -> SimTime {
    // (time, is_start); ends sort before starts at the same instant
    let mut edges: Vec<(SimTime, bool)> = busy.iter().flat_map(|&(s, e)| [(s, true), (e, false)]).collect();
    edges.sort();
    let mut csma = Csma::new();
    let mut requested = false;
    for &(t, is_start) in &edges {
        if !requested && t > t_ready {
            csma.request(params, t_ready, backoff);
            requested = true;
        }
        if requested {
            if let Some(fire) = csma.fire_time(params) {
                if fire < t || (fire == t && is_start) {
                    return fire;
                }
            }
        }
        if is_start {
            csma.sense_start(params, t);
        } else {
            csma.sense_end(params, t);
        }
    }
    if !requested {
        csma.request(params, t_ready, backoff);
    }
    csma.fire_time(params)
        .expect("channel idle after the last busy interval")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p() -> MacParams {
        MacParams::default()
    }

    #[test]
    fn shipped_defaults() {
        let m = p();
        assert_eq!((m.slot_us, m.sifs_us, m.difs_us), (16, 32, 64));
        assert_eq!((m.cw_min, m.cw_max), (15, 1023));
        assert_eq!((m.data_rate_bps, m.plcp_us, m.symbol_us), (6_000_000, 8, 8));
    }

    #[test]
    fn airtime() {
        assert_eq!(tx_duration(&p(), 512), 696);
        assert_eq!(tx_duration(&p(), 6), 16);
        assert_eq!(tx_duration(&p(), 7), 24);
        assert_eq!(tx_duration(&p(), 1), 16);
    }

    #[test]
    fn backoff_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(draw_backoff(0, &mut rng), 0);
        let n = 100_000;
        let draws: Vec<u32> = (0..n).map(|_| draw_backoff(15, &mut rng)).collect();
        assert!(draws.iter().all(|&b| b <= 15));
        let mean = draws.iter().map(|&b| b as f64).sum::<f64>() / n as f64;
        assert!((mean - 7.5).abs() < 0.05, "mean {mean}");
        let again = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..32).map(|_| draw_backoff(15, &mut r)).collect::<Vec<_>>()
        };
        assert_eq!(again(9), again(9));
    }

    #[test]
    fn idle_channel_start() {
        let t0 = SimTime(1_000);
        assert_eq!(csma_start_time(&p(), t0, 0, &[]), SimTime(1_064));
        assert_eq!(csma_start_time(&p(), t0, 3, &[]), SimTime(1_112));
        assert_eq!(replay_csma(&p(), t0, 3, &[]), SimTime(1_112));
    }

    #[test]
    fn defers_while_busy() {
        let t0 = SimTime(0);
        let busy = [(SimTime(0), SimTime(700))];
        assert_eq!(csma_start_time(&p(), t0, 0, &busy), SimTime(764));
        assert_eq!(csma_start_time(&p(), t0, 2, &busy), SimTime(796));
    }

    #[test]
    fn countdown_freezes_and_resumes() {
        // DIFS ends at 64, two slots done by 96, busy at 100 freezes with 3 left
        let busy = [(SimTime(100), SimTime(800))];
        assert_eq!(csma_start_time(&p(), SimTime(0), 5, &busy), SimTime(800 + 64 + 3 * 16));
        // busy inside DIFS: nothing counted
        let busy = [(SimTime(30), SimTime(200))];
        assert_eq!(csma_start_time(&p(), SimTime(0), 5, &busy), SimTime(200 + 64 + 5 * 16));
    }

    #[test]
    fn busy_at_fire_instant_still_transmits() {
        let busy = [(SimTime(112), SimTime(800))];
        assert_eq!(csma_start_time(&p(), SimTime(0), 3, &busy), SimTime(112));
        assert_eq!(replay_csma(&p(), SimTime(0), 3, &busy), SimTime(112));
    }

    #[test]
    fn microsecond_window_reading() {
        let m = MacParams {
            cw_in_slots: false,
            ..p()
        };
        assert_eq!(csma_start_time(&m, SimTime(0), 15, &[]), SimTime(79));
    }

    #[test]
    fn frozen_countdown_never_decreases() {
        let m = p();
        let mut c = Csma::new();
        c.request(&m, SimTime(0), 10);
        c.sense_start(&m, SimTime(64 + 4 * 16 + 3));
        // frozen with 6 left; a long busy stretch must not eat slots
        c.sense_start(&m, SimTime(500));
        c.sense_end(&m, SimTime(900));
        assert_eq!(c.fire_time(&m), None);
        let fire = c.sense_end(&m, SimTime(5_000)).unwrap();
        assert_eq!(fire, SimTime(5_000 + 64 + 6 * 16));
    }

    fn arb_busy() -> impl Strategy<Value = Vec<(SimTime, SimTime)>> {
        proptest::collection::vec((0u64..4_000, 1u64..800), 0..8)
            .prop_map(|v| v.into_iter().map(|(s, d)| (SimTime(s), SimTime(s + d))).collect())
    }

    proptest! {
        #[test]
        fn incremental_agrees_with_closed_form(
            t_ready in 0u64..3_000,
            backoff in 0u32..=15,
            busy in arb_busy(),
            slots in proptest::bool::ANY,
        ) {
            let m = MacParams { cw_in_slots: slots, ..p() };
            let a = csma_start_time(&m, SimTime(t_ready), backoff, &busy);
            let b = replay_csma(&m, SimTime(t_ready), backoff, &busy);
            prop_assert_eq!(a, b);
            prop_assert!(a >= SimTime(t_ready + m.difs_us));
            // never starts strictly inside a busy interval
            prop_assert!(!busy.iter().any(|&(s, e)| s < a && a < e));
        }

        #[test]
        fn duration_monotone(bytes in 1usize..4_000) {
            prop_assert!(tx_duration(&p(), 2 * bytes) >= tx_duration(&p(), bytes));
            prop_assert!(tx_duration(&p(), bytes + 1) >= tx_duration(&p(), bytes));
        }
    }
}
