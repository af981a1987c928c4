use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::idm::idm_from_gap;
use super::{DriverParams, Scenario, VehicleState, SIM_DT, VEHICLE_WIDTH};

/// Hysteresis a surrounding vehicle needs before it prefers an adjacent lane.
const LANE_CHANGE_GAIN: f64 = 5.0;
/// Look-ahead over which the ego's lateral motion reserves a lane.
const EGO_CLAIM_HORIZON: f64 = 1.0;

/// Snapshot of the road at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    pub step: u64,
    /// Surrounding vehicles, ordered by id.
    pub vehicles: Vec<VehicleState>,
    pub ego: VehicleState,
    pub ego_lateral_velocity: f64,
    pub ego_lateral_acceleration: f64,
    /// Set once any two vehicle rectangles have overlapped.
    pub collision_flag: bool,
    /// Set once the ego was part of an overlap.
    pub ego_collision: bool,
}

/// Target ego state at the end of a world step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoSetpoint {
    pub s: f64,
    /// Lateral position measured from the center of lane 0.
    pub lateral: f64,
    pub v: f64,
    pub a: f64,
    pub lateral_v: f64,
    pub lateral_a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: f64,
    pub id: u32,
    pub lane: usize,
    pub s: f64,
    pub d: f64,
    pub v: f64,
    pub a: f64,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str = "time,id,lane,s,d,v,a";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.time, self.id, self.lane, self.s, self.d, self.v, self.a
        )
    }
}

/// Deterministic microsimulator built from a [`Scenario`].
#[derive(Debug, Clone)]
pub struct World {
    state: WorldState,
    drivers: Vec<DriverParams>,
    lane_count: usize,
    lane_width: f64,
    road_length: f64,
    ego_desired_speed: f64,
    dt: f64,
    steps_per_second: u64,
    rng: ChaCha8Rng,
}

impl World {
    pub fn new(scenario: &Scenario) -> Self {
        Self::with_dt(scenario, SIM_DT)
    }

    pub fn with_dt(scenario: &Scenario, dt: f64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        let mut pairs: Vec<_> = scenario
            .vehicles
            .iter()
            .map(|v| (v.state, v.driver))
            .collect();
        pairs.sort_by_key(|(s, _)| s.id);
        let (vehicles, drivers) = pairs.into_iter().unzip();
        Self {
            state: WorldState {
                time: 0.0,
                step: 0,
                vehicles,
                ego: scenario.ego_start,
                ego_lateral_velocity: 0.0,
                ego_lateral_acceleration: 0.0,
                collision_flag: false,
                ego_collision: false,
            },
            drivers,
            lane_count: scenario.lane_count,
            lane_width: scenario.lane_width,
            road_length: scenario.road_length,
            ego_desired_speed: scenario.ego_desired_speed,
            dt,
            steps_per_second: (1.0 / dt).round().max(1.0) as u64,
            rng: ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x5eed_1d3a_0000_0001),
        }
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn ego(&self) -> &VehicleState {
        &self.state.ego
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn lane_count(&self) -> usize {
        self.lane_count
    }

    pub fn lane_width(&self) -> f64 {
        self.lane_width
    }

    pub fn road_length(&self) -> f64 {
        self.road_length
    }

    pub fn driver(&self, id: u32) -> Option<&DriverParams> {
        self.state
            .vehicles
            .iter()
            .position(|v| v.id == id)
            .map(|i| &self.drivers[i])
    }

    /// Ego setpoint that holds the current ego state (used before any plan exists).
    pub fn ego_setpoint(&self) -> EgoSetpoint {
        let e = &self.state.ego;
        EgoSetpoint {
            s: e.s,
            lateral: e.lateral(self.lane_width),
            v: e.v,
            a: e.a,
            lateral_v: self.state.ego_lateral_velocity,
            lateral_a: self.state.ego_lateral_acceleration,
        }
    }

    /// Lanes whose area the ego rectangle currently intersects.
    pub fn ego_lanes(&self) -> impl Iterator<Item = usize> + '_ {
        let y = self.state.ego.lateral(self.lane_width);
        let w = self.lane_width;
        (0..self.lane_count).filter(move |&l| {
            let center = l as f64 * w;
            y + VEHICLE_WIDTH / 2.0 > center - w / 2.0 && y - VEHICLE_WIDTH / 2.0 < center + w / 2.0
        })
    }

    /// Lanes the ego overlaps now or will overlap after `EGO_CLAIM_HORIZON`
    /// at its current lateral velocity. Surrounding drivers respect these
    /// when changing lanes.
    fn ego_claims_lane(&self, lane: usize) -> bool {
        let w = self.lane_width;
        let y = self.state.ego.lateral(w);
        let ahead = y + self.state.ego_lateral_velocity * EGO_CLAIM_HORIZON;
        let center = lane as f64 * w;
        let (lo, hi) = (y.min(ahead) - VEHICLE_WIDTH / 2.0, y.max(ahead) + VEHICLE_WIDTH / 2.0);
        hi > center - w / 2.0 && lo < center + w / 2.0
    }

    /// Advances one step of `dt`; the ego lands exactly on `ego`.
    pub fn step(&mut self, ego: &EgoSetpoint) {
        let accelerations = self.surrounding_accelerations();
        let dt = self.dt;
        for (v, a) in self.state.vehicles.iter_mut().zip(accelerations) {
            let next_v = v.v + a * dt;
            if next_v < 0.0 {
                // stops inside the step
                v.s += if a < 0.0 { -v.v * v.v / (2.0 * a) } else { 0.0 };
                v.v = 0.0;
            } else {
                v.s += v.v * dt + 0.5 * a * dt * dt;
                v.v = next_v;
            }
            v.a = a;
        }

        let lane = (ego.lateral / self.lane_width)
            .round()
            .clamp(0.0, (self.lane_count - 1) as f64) as usize;
        let e = &mut self.state.ego;
        e.s = ego.s;
        e.v = ego.v.max(0.0);
        e.a = ego.a;
        e.lane_index = lane;
        e.d = ego.lateral - lane as f64 * self.lane_width;
        self.state.ego_lateral_velocity = ego.lateral_v;
        self.state.ego_lateral_acceleration = ego.lateral_a;

        self.state.step += 1;
        self.state.time = self.state.step as f64 * dt;
        if self.state.step % self.steps_per_second == 0 {
            self.lane_changes();
        }
        self.remove_exited();
        self.detect_collisions();
    }

    /// Steps once per setpoint.
    pub fn advance(&mut self, controls: &[EgoSetpoint]) {
        for c in controls {
            self.step(c);
        }
    }

    pub fn trace_rows(&self) -> Vec<TraceRow> {
        let t = self.state.time;
        std::iter::once(&self.state.ego)
            .chain(self.state.vehicles.iter())
            .map(|v| TraceRow {
                time: t,
                id: v.id,
                lane: v.lane_index,
                s: v.s,
                d: v.d,
                v: v.v,
                a: v.a,
            })
            .collect()
    }

    /// Nearest vehicle ahead of front position `s` on `lane`, ego included
    /// when its rectangle intersects the lane. Returns (rear, speed).
    fn leader_on_lane(&self, lane: usize, s: f64, skip: Option<usize>) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64, f64)> = None; // (front, rear, v)
        for (i, v) in self.state.vehicles.iter().enumerate() {
            if Some(i) == skip || v.lane_index != lane || v.s <= s {
                continue;
            }
            if best.map_or(true, |b| v.s < b.0) {
                best = Some((v.s, v.rear(), v.v));
            }
        }
        let e = &self.state.ego;
        if e.s > s && self.ego_claims_lane(lane) && best.map_or(true, |b| e.s < b.0) {
            best = Some((e.s, e.rear(), e.v));
        }
        best.map(|b| (b.1, b.2))
    }

    /// Nearest vehicle behind front position `s` on `lane`.
    /// Returns (front, speed, driver) where driver is None for the ego.
    fn follower_on_lane(
        &self,
        lane: usize,
        s: f64,
        skip: Option<usize>,
    ) -> Option<(f64, f64, Option<usize>)> {
        let mut best: Option<(f64, f64, Option<usize>)> = None;
        for (i, v) in self.state.vehicles.iter().enumerate() {
            if Some(i) == skip || v.lane_index != lane || v.s > s {
                continue;
            }
            if best.map_or(true, |b| v.s > b.0) {
                best = Some((v.s, v.v, Some(i)));
            }
        }
        let e = &self.state.ego;
        if e.s <= s && self.ego_claims_lane(lane) && best.map_or(true, |b| e.s > b.0) {
            best = Some((e.s, e.v, None));
        }
        best
    }

    fn surrounding_accelerations(&self) -> Vec<f64> {
        // Per-lane ordering by front position; the ego joins every lane it touches.
        let mut lanes: Vec<Vec<(f64, f64, f64, bool)>> = vec![Vec::new(); self.lane_count]; // (front, rear, v, is_ego)
        for v in &self.state.vehicles {
            lanes[v.lane_index].push((v.s, v.rear(), v.v, false));
        }
        let e = &self.state.ego;
        for l in self.ego_lanes() {
            lanes[l].push((e.s, e.rear(), e.v, true));
        }
        for lane in &mut lanes {
            lane.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        self.state
            .vehicles
            .iter()
            .zip(&self.drivers)
            .map(|(v, p)| {
                let lane = &lanes[v.lane_index];
                let idx = lane.partition_point(|x| x.0 <= v.s);
                // an ego merging alongside is not yet ahead of this vehicle
                let leader = lane[idx..]
                    .iter()
                    .find(|x| !(x.3 && x.1 <= v.s))
                    .map(|&(_, rear, lv, _)| (rear - v.s, lv));
                idm_from_gap(v.v, leader, p).value()
            })
            .collect()
    }

    fn ego_driver(&self) -> DriverParams {
        DriverParams {
            v0: self.ego_desired_speed,
            ..DriverParams::default()
        }
    }

    fn lane_changes(&mut self) {
        for i in 0..self.state.vehicles.len() {
            let u: f64 = self.rng.gen();
            let p = self.drivers[i];
            if u >= p.lane_change_prob_per_s {
                continue;
            }
            let me = self.state.vehicles[i];
            let current_gap = self
                .leader_on_lane(me.lane_index, me.s, Some(i))
                .map_or(f64::INFINITY, |(rear, _)| rear - me.s);
            if current_gap.is_infinite() {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            let candidates = [me.lane_index + 1, me.lane_index.wrapping_sub(1)];
            for &target in &candidates {
                if target >= self.lane_count {
                    continue;
                }
                let leader = self.leader_on_lane(target, me.s, Some(i));
                let follower = self.follower_on_lane(target, me.s, Some(i));
                let gap_ahead = leader.map_or(f64::INFINITY, |(rear, _)| rear - me.s);
                if gap_ahead <= p.s0 || gap_ahead <= current_gap + LANE_CHANGE_GAIN {
                    continue;
                }
                if idm_from_gap(me.v, leader.map(|(r, lv)| (r - me.s, lv)), &p).value() < -p.b_comf
                {
                    continue;
                }
                if let Some((f_front, f_v, f_idx)) = follower {
                    let fp = f_idx.map_or_else(|| self.ego_driver(), |k| self.drivers[k]);
                    let gap_behind = me.rear() - f_front;
                    if gap_behind <= fp.s0
                        || idm_from_gap(f_v, Some((gap_behind, me.v)), &fp).value() < -fp.b_comf
                    {
                        continue;
                    }
                }
                if best.map_or(true, |(_, g)| gap_ahead > g) {
                    best = Some((target, gap_ahead));
                }
            }
            if let Some((target, _)) = best {
                let v = &mut self.state.vehicles[i];
                v.lane_index = target;
                v.d = 0.0;
            }
        }
    }

    fn remove_exited(&mut self) {
        let road = self.road_length;
        let mut k = 0;
        while k < self.state.vehicles.len() {
            if self.state.vehicles[k].rear() > road {
                self.state.vehicles.remove(k);
                self.drivers.remove(k);
            } else {
                k += 1;
            }
        }
    }

    fn detect_collisions(&mut self) {
        let w = self.lane_width;
        let e = self.state.ego;
        let ey = e.lateral(w);
        let overlap = |a: &VehicleState, ay: f64, b: &VehicleState, by: f64| {
            (ay - by).abs() < VEHICLE_WIDTH && a.rear() < b.s && b.rear() < a.s
        };
        let mut ego_hit = false;
        for v in &self.state.vehicles {
            if overlap(&e, ey, v, v.lateral(w)) {
                ego_hit = true;
            }
        }
        let mut other_hit = false;
        let vs = &self.state.vehicles;
        'outer: for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                if overlap(&vs[i], vs[i].lateral(w), &vs[j], vs[j].lateral(w)) {
                    other_hit = true;
                    break 'outer;
                }
            }
        }
        if ego_hit {
            self.state.ego_collision = true;
        }
        if ego_hit || other_hit {
            self.state.collision_flag = true;
        }
    }
}

/// One simulation step of `world` through the given setpoints.
pub fn step_world(world: &mut World, ego_controls: &[EgoSetpoint]) {
    world.advance(ego_controls);
}

/// Vehicles whose front position lies within `range_m` of the ego, any lane.
pub fn sensor_view(state: &WorldState, range_m: f64) -> Vec<VehicleState> {
    state
        .vehicles
        .iter()
        .filter(|v| (v.s - state.ego.s).abs() <= range_m)
        .copied()
        .collect()
}
