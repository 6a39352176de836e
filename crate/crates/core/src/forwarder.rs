//! Forwarder selection: the farthest-neighbor candidate, CBB threshold
//! boundaries, density clustering into a progress list, segment fitness, the
//! single-step PSO update and PCBB boundaries.
//!
//! All distances are meters from the sender, measured only over neighbors
//! behind it.

use alloc::vec::Vec;

use rand::Rng;

use crate::beaconing::NeighborTable;
use crate::types::{Position, VehicleId};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct PcbbParams {
    /// Number of equal slices the candidate distance is cut into by CBB.
    pub n_max: u32,
    /// Inertia weight is drawn uniformly from this range on every update.
    pub w_range: (f64, f64),
    pub c1: f64,
    pub c2: f64,
    /// `rand1` and `rand2` are drawn uniformly from this range.
    pub rand_range: (f64, f64),
}

impl Default for PcbbParams {
    fn default() -> Self {
        Self {
            n_max: 10,
            w_range: (0.1, 0.5),
            c1: 2.0,
            c2: 2.0,
            rand_range: (0.1, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundaries {
    pub min_b: f64,
    pub max_b: f64,
}

impl Boundaries {
    pub fn contains(&self, d: f64) -> bool {
        self.min_b <= d && d <= self.max_b
    }
}

/// One row of the progress list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentStats {
    /// Distance from the sender to the segment's farthest member.
    pub progress: f64,
    /// Farthest minus nearest member.
    pub length: f64,
    pub vehicle_count: u32,
    pub fitness: f64,
}

impl SegmentStats {
    pub fn new(progress: f64, length: f64, vehicle_count: u32) -> Self {
        Self {
            progress,
            length,
            vehicle_count,
            fitness: segment_fitness(progress, vehicle_count, length),
        }
    }
}

/// Segments in ascending progress order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProgressList {
    pub segments: Vec<SegmentStats>,
}

impl ProgressList {
    pub fn from_segments(mut segments: Vec<SegmentStats>) -> Self {
        segments.sort_by(|a, b| a.progress.total_cmp(&b.progress));
        Self { segments }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Highest fitness; equal fitness goes to the farther segment.
    pub fn best(&self) -> Option<&SegmentStats> {
        self.segments
            .iter()
            .max_by(|a, b| a.fitness.total_cmp(&b.fitness).then(a.progress.total_cmp(&b.progress)))
    }
}

/// Farthest rear neighbor; equal distances go to the lower id.
pub fn select_candidate(nt: &NeighborTable, sender_pos: Position, heading: i8) -> Option<(VehicleId, f64)> {
    farthest(&nt.rear_neighbors(sender_pos, heading))
}

pub fn farthest(rear: &[(VehicleId, f64)]) -> Option<(VehicleId, f64)> {
    rear.iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
}

/// `(nei_n / n_max - 1) * 100`, in percent.
pub fn success_percentage(nei_n: usize, n_max: u32) -> f64 {
    (nei_n as f64 / n_max as f64 - 1.0) * 100.0
}

/// A segment is accepted when its success percentage exceeds `n_max` percent.
pub fn success_passes(nei_n: usize, n_max: u32) -> bool {
    // (nei_n / n_max - 1) * 100 > n_max, in integers so 11 of 10 sits exactly on the line
    let n = n_max as i128;
    (nei_n as i128 - n) * 100 > n * n
}

pub fn cbb_boundaries(nt: &NeighborTable, sender_pos: Position, heading: i8, n_max: u32) -> Result<Boundaries, Error> {
    cbb_boundaries_from(&distances(&nt.rear_neighbors(sender_pos, heading)), n_max)
}

/// CBB: `MaxB` is the candidate distance and the last segment grows by
/// `Dis / n_max` until the neighbors inside it pass the success threshold,
/// reaching the sender (`MinB = 0`) after `n_max` slices.
pub fn cbb_boundaries_from(rear_distances: &[f64], n_max: u32) -> Result<Boundaries, Error> {
    if rear_distances.len() < 2 {
        return Err(Error::TooFewNeighbors {
            needed: 2,
            found: rear_distances.len(),
        });
    }
    let n_max = n_max.max(1);
    let dis = rear_distances.iter().copied().fold(f64::MIN, f64::max);
    let dif = dis / n_max as f64;
    for k in 1..n_max {
        let min_b = dis - k as f64 * dif;
        let inside = rear_distances.iter().filter(|&&d| d >= min_b && d <= dis).count();
        if success_passes(inside, n_max) {
            return Ok(Boundaries { min_b, max_b: dis });
        }
    }
    Ok(Boundaries { min_b: 0.0, max_b: dis })
}

/// `progress * vehicle_count / length`, truncated toward zero; zero-length
/// segments score 0.
pub fn segment_fitness(progress: f64, vehicle_count: u32, length: f64) -> f64 {
    if length <= 0.0 {
        return 0.0;
    }
    libm::trunc(progress * vehicle_count as f64 / length)
}

pub fn cluster_segments(nt: &NeighborTable, sender_pos: Position, heading: i8) -> ProgressList {
    cluster_distances(&distances(&nt.rear_neighbors(sender_pos, heading)))
}

/// Density clustering. Walking neighbors from farthest to nearest, each
/// vehicle joins the current segment while the gap to its predecessor is
/// below twice the previous gap; the first comparison always joins, and so
/// does a vehicle at exactly the same distance as its predecessor. A wider
/// gap starts a new segment at that vehicle.
pub fn cluster_distances(rear_distances: &[f64]) -> ProgressList {
    let mut sorted = rear_distances.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let Some((&first, rest)) = sorted.split_first() else {
        return ProgressList::default();
    };

    // (progress, nearest, count)
    let mut open = (first, first, 1u32);
    let mut closed = Vec::new();
    let mut prev_d = first;
    let mut prev_gap: Option<f64> = None;
    for &d in rest {
        let gap = prev_d - d;
        // vehicles level with their predecessor never open a segment, so
        // segments never share a distance
        let joins = gap <= 0.0 || prev_gap.is_none_or(|g| gap < 2.0 * g);
        if joins {
            open.1 = d;
            open.2 += 1;
        } else {
            closed.push(open);
            open = (d, d, 1);
        }
        prev_gap = Some(gap);
        prev_d = d;
    }
    closed.push(open);

    ProgressList::from_segments(
        closed
            .into_iter()
            .map(|(progress, nearest, count)| SegmentStats::new(progress, progress - nearest, count))
            .collect(),
    )
}

fn distances(rear: &[(VehicleId, f64)]) -> Vec<f64> {
    rear.iter().map(|&(_, d)| d).collect()
}

/// Inputs of one PSO step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsoState {
    pub l_best: f64,
    pub p_best: f64,
    pub g_best: f64,
}

/// One velocity-style update:
/// `fit = lBest*w + c1*r1*(pBest - lBest) + c2*r2*(gBest - lBest)` and the
/// new lBest is `pBest + fit`.
pub fn pso_update(state: &PsoState, c1: f64, c2: f64, w: f64, r1: f64, r2: f64) -> (f64, f64) {
    let fit = state.l_best * w + c1 * r1 * (state.p_best - state.l_best) + c2 * r2 * (state.g_best - state.l_best);
    (fit, state.p_best + fit)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsoDraw {
    pub w: f64,
    pub r1: f64,
    pub r2: f64,
}

impl PsoDraw {
    pub fn sample<R: Rng + ?Sized>(params: &PcbbParams, rng: &mut R) -> Self {
        let mut uniform = |(lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let w = uniform(params.w_range);
        let r1 = uniform(params.rand_range);
        let r2 = uniform(params.rand_range);
        Self { w, r1, r2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcbbOutcome {
    pub boundaries: Boundaries,
    /// The PSO inputs actually used, after fallbacks.
    pub state: PsoState,
    pub fit: f64,
    pub new_l_best: f64,
}

/// PCBB boundaries with freshly drawn PSO coefficients.
pub fn pcbb_boundaries<R: Rng + ?Sized>(
    pl: &ProgressList,
    p_best: Option<f64>,
    g_best: Option<f64>,
    candidate_dis: f64,
    params: &PcbbParams,
    rng: &mut R,
) -> Result<PcbbOutcome, Error> {
    if pl.is_empty() {
        return Err(Error::EmptyProgressList);
    }
    let draw = PsoDraw::sample(params, rng);
    pcbb_boundaries_with(pl, p_best, g_best, candidate_dis, params, draw)
}

/// PCBB boundaries for fixed coefficients. lBest is the progress of the
/// best-fitness segment; a missing pBest or gBest falls back to lBest. The
/// PSO result becomes `MinB`, clamped into `[0, Dis - 1]`.
pub fn pcbb_boundaries_with(
    pl: &ProgressList,
    p_best: Option<f64>,
    g_best: Option<f64>,
    candidate_dis: f64,
    params: &PcbbParams,
    draw: PsoDraw,
) -> Result<PcbbOutcome, Error> {
    let best = pl.best().ok_or(Error::EmptyProgressList)?;
    if candidate_dis.is_nan() || candidate_dis <= 0.0 {
        return Err(Error::NonPositiveDistance(candidate_dis));
    }
    let l_best = best.progress;
    let state = PsoState {
        l_best,
        p_best: p_best.unwrap_or(l_best),
        g_best: g_best.unwrap_or(l_best),
    };
    let (fit, new_l_best) = pso_update(&state, params.c1, params.c2, draw.w, draw.r1, draw.r2);
    let ceiling = (candidate_dis - 1.0).max(0.0);
    let min_b = if new_l_best.is_nan() {
        0.0
    } else {
        new_l_best.clamp(0.0, ceiling)
    };
    Ok(PcbbOutcome {
        boundaries: Boundaries {
            min_b,
            max_b: candidate_dis,
        },
        state,
        fit,
        new_l_best,
    })
}
