//! Gaps between same-lane vehicles, their action features, and the reachable subset.

use serde::{Deserialize, Serialize};

use crate::trajectory::{plan_to_gap, EgoKinematics, GapBound, GapRegion, PlannerConfig, Trajectory};
use crate::world::VehicleState;
use crate::Result;

/// Sensor range in meters, ahead and behind.
pub const DEFAULT_SENSOR_RANGE: f64 = 80.0;

/// Lateral tolerance for "settled in the gap".
pub const REACHED_LATERAL_TOL: f64 = 0.2;

/// Identity of a gap: its bounding vehicles and lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GapId {
    pub follower_id: Option<u32>,
    pub leader_id: Option<u32>,
    pub lane_index: usize,
}

/// Continuous description of a gap as seen from the ego.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapFeatures {
    pub d_rel: f64,
    pub v_rel: f64,
    pub lane_rel: i32,
    /// Leader position minus follower position, meters.
    pub len: f64,
    /// 0 when this is the gap selected at the previous decision, else 1.
    pub af: u8,
}

impl GapFeatures {
    /// Network input with the default sensor range as length scale.
    pub fn network_input(&self) -> [f64; 5] {
        self.to_input(DEFAULT_SENSOR_RANGE)
    }

    /// Network input: `(d_rel, v_rel, lane_rel, len / sensor_range, af)`.
    pub fn to_input(&self, sensor_range: f64) -> [f64; 5] {
        [
            self.d_rel,
            self.v_rel,
            self.lane_rel as f64,
            self.len / sensor_range,
            self.af as f64,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub id: GapId,
    pub region: GapRegion,
    /// Virtual boundary positions used when a side is open.
    pub rear_position: f64,
    pub front_position: f64,
    pub reference_speed: f64,
    pub features: GapFeatures,
}

impl Gap {
    pub fn lane(&self) -> usize {
        self.id.lane_index
    }

    pub fn reference_position(&self) -> f64 {
        0.5 * (self.rear_position + self.front_position)
    }

    /// Ego is on the gap's lane, near its center line, and between the bounds.
    pub fn holds(&self, ego: &VehicleState) -> bool {
        if ego.lane_index != self.lane() || ego.d.abs() >= REACHED_LATERAL_TOL {
            return false;
        }
        let behind_ok = self.region.follower.map_or(true, |f| ego.rear() >= f.s);
        let ahead_ok = self.region.leader.map_or(true, |l| ego.s <= l.s - l.length);
        behind_ok && ahead_ok
    }
}

/// Features of `gap` relative to `ego`.
///
/// The gap's reference point is the midpoint of its bounding positions and
/// its speed the mean of its bounding speeds; open sides use the virtual
/// boundary at `±sensor_range` and the single bounding vehicle's speed.
pub fn gap_features(
    gap: &Gap,
    ego: &VehicleState,
    desired_speed: f64,
    sensor_range: f64,
    previously_selected: Option<GapId>,
) -> GapFeatures {
    GapFeatures {
        d_rel: (gap.reference_position() - ego.s) / sensor_range,
        v_rel: (gap.reference_speed - ego.v) / desired_speed,
        lane_rel: gap.lane() as i32 - ego.lane_index as i32,
        len: gap.front_position - gap.rear_position,
        af: u8::from(previously_selected != Some(gap.id)),
    }
}

/// Observation settings shared by the gap and state encoders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapContext {
    pub sensor_range: f64,
    pub desired_speed: f64,
    pub lane_count: usize,
}

/// Every gap on the ego lane and its direct neighbours, in lane then position order.
///
/// `view` must be the sensed vehicles at the same instant. Each lane yields the
/// gap behind its rear-most vehicle, one gap per adjacent pair, and the gap
/// ahead of its front-most vehicle; an empty lane yields one open gap.
pub fn enumerate_gaps(
    view: &[VehicleState],
    ego: &VehicleState,
    ctx: &GapContext,
    previously_selected: Option<GapId>,
) -> Vec<Gap> {
    let lo = ego.lane_index.saturating_sub(1);
    let hi = (ego.lane_index + 1).min(ctx.lane_count - 1);
    let mut out = Vec::new();
    for lane in lo..=hi {
        let mut on_lane: Vec<&VehicleState> = view.iter().filter(|v| v.lane_index == lane).collect();
        on_lane.sort_by(|a, b| a.s.total_cmp(&b.s).then(a.id.cmp(&b.id)));
        let mut bounds: Vec<Option<&VehicleState>> = Vec::with_capacity(on_lane.len() + 2);
        bounds.push(None);
        bounds.extend(on_lane.iter().map(|v| Some(*v)));
        bounds.push(None);
        for pair in bounds.windows(2) {
            let (follower, leader) = (pair[0], pair[1]);
            let reference_speed = match (follower, leader) {
                (Some(f), Some(l)) => 0.5 * (f.v + l.v),
                (Some(b), None) | (None, Some(b)) => b.v,
                (None, None) => ego.v,
            };
            let mut gap = Gap {
                id: GapId {
                    follower_id: follower.map(|v| v.id),
                    leader_id: leader.map(|v| v.id),
                    lane_index: lane,
                },
                region: GapRegion {
                    lane,
                    follower: follower.map(GapBound::from),
                    leader: leader.map(GapBound::from),
                },
                rear_position: follower.map_or(ego.s - ctx.sensor_range, |v| v.s),
                front_position: leader.map_or(ego.s + ctx.sensor_range, |v| v.s),
                reference_speed,
                features: GapFeatures {
                    d_rel: 0.0,
                    v_rel: 0.0,
                    lane_rel: 0,
                    len: 0.0,
                    af: 1,
                },
            };
            gap.features = gap_features(
                &gap,
                ego,
                ctx.desired_speed,
                ctx.sensor_range,
                previously_selected,
            );
            out.push(gap);
        }
    }
    out
}

/// A gap with the best plan that reaches it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachableGap {
    pub gap: Gap,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSet {
    pub decision_time: f64,
    pub gaps: Vec<ReachableGap>,
}

impl GapSet {
    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn find(&self, id: GapId) -> Option<&ReachableGap> {
        self.gaps.iter().find(|g| g.gap.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = GapId> + '_ {
        self.gaps.iter().map(|g| g.gap.id)
    }
}

/// Keeps the gaps the planner can reach within its horizon, each with its best plan.
pub fn reachable_gaps(
    gaps: &[Gap],
    ego: &EgoKinematics,
    view: &[VehicleState],
    desired_speed: f64,
    planner: &PlannerConfig,
    decision_time: f64,
) -> Result<GapSet> {
    let mut out = Vec::new();
    for gap in gaps {
        if let Some(trajectory) = plan_to_gap(ego, &gap.region, desired_speed, view, planner)? {
            out.push(ReachableGap {
                gap: gap.clone(),
                trajectory,
            });
        }
    }
    Ok(GapSet {
        decision_time,
        gaps: out,
    })
}
