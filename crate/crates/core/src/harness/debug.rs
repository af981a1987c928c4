use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::agents::DriveSettings;
use crate::gaps::{enumerate_gaps, reachable_gaps, GapContext, GapId};
use crate::trajectory::{sample_trajectories, EgoKinematics};
use crate::world::{sensor_view, Scenario, VehicleState, World};
use crate::Result;

/// Input of the planner inspection command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDebugInput {
    pub scenario: Scenario,
    /// Replaces the scenario's ego start state when given.
    #[serde(default)]
    pub ego: Option<VehicleState>,
    #[serde(default)]
    pub previously_selected: Option<GapId>,
}

/// Parses and validates a plan-debug input document.
pub fn parse_plan_debug_input(text: &str) -> Result<PlanDebugInput> {
    let mut input: PlanDebugInput = serde_json::from_str(text)?;
    if let Some(ego) = input.ego {
        input.scenario.ego_start = ego;
    }
    input.scenario.validate()?;
    Ok(input)
}

/// One JSON line per enumerated gap and per lattice candidate, gap lines
/// first, followed by a summary of the reachable set.
pub fn plan_debug(input: &PlanDebugInput, settings: &DriveSettings) -> Result<Vec<String>> {
    let scenario = &input.scenario;
    let world = World::new(scenario);
    let mut settings = settings.clone();
    settings.planner.lane_count = scenario.lane_count;
    settings.planner.lane_width = scenario.lane_width;
    let view = sensor_view(world.state(), settings.sensor_range);
    let ego_vehicle = *world.ego();
    let ego = EgoKinematics::from_world(&world);
    let ctx = GapContext {
        sensor_range: settings.sensor_range,
        desired_speed: scenario.ego_desired_speed,
        lane_count: scenario.lane_count,
    };
    let gaps = enumerate_gaps(&view, &ego_vehicle, &ctx, input.previously_selected);
    let gapset = reachable_gaps(&gaps, &ego, &view, scenario.ego_desired_speed, &settings.planner, 0.0)?;
    let mut lines = Vec::new();
    for gap in &gaps {
        let best = gapset.find(gap.id);
        lines.push(
            json!({
                "type": "gap",
                "id": gap.id,
                "features": gap.features,
                "rear_position": gap.rear_position,
                "front_position": gap.front_position,
                "reference_speed": gap.reference_speed,
                "reachable": best.is_some(),
                "best_cost": best.map(|b| b.trajectory.cost.total),
            })
            .to_string(),
        );
    }
    for gap in &gaps {
        let candidates = sample_trajectories(&ego, &gap.region, scenario.ego_desired_speed, &view, &settings.planner)?;
        for t in candidates {
            let ends_inside = gap.region.contains(t.end_s(), t.duration, ego.length);
            lines.push(
                json!({
                    "type": "candidate",
                    "gap": gap.id,
                    "duration": t.duration,
                    "end_s": t.end_s(),
                    "end_speed": t.end_speed(),
                    "mean_speed": t.mean_speed(),
                    "ends_inside_gap": ends_inside,
                    "cost": t.cost,
                    "feasibility": t.feasibility,
                })
                .to_string(),
            );
        }
    }
    lines.push(
        json!({
            "type": "gapset",
            "reachable": gapset.ids().collect::<Vec<_>>(),
        })
        .to_string(),
    );
    Ok(lines)
}
