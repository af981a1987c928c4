use super::{DriverParams, VehicleState};

/// Result of an IDM evaluation; `Emergency` marks a non-positive bumper gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IdmOutcome {
    Nominal(f64),
    Emergency(f64),
}

impl IdmOutcome {
    pub fn value(self) -> f64 {
        match self {
            IdmOutcome::Nominal(a) | IdmOutcome::Emergency(a) => a,
        }
    }
}

/// Intelligent Driver Model acceleration of `follower` behind an optional `leader`.
///
/// The desired dynamic gap uses `max(0, vT + vΔv / 2√(ab))`, the usual guard
/// against negative gaps when the leader pulls away quickly.
pub fn idm_acceleration(
    follower: &VehicleState,
    leader: Option<&VehicleState>,
    params: &DriverParams,
) -> IdmOutcome {
    idm_from_gap(
        follower.v,
        leader.map(|l| (l.rear() - follower.s, l.v)),
        params,
    )
}

/// Same law with the bumper gap and leader speed given directly.
pub(crate) fn idm_from_gap(v: f64, leader: Option<(f64, f64)>, p: &DriverParams) -> IdmOutcome {
    let free = 1.0 - (v / p.v0).powf(p.delta);
    let interaction = match leader {
        None => 0.0,
        Some((gap, _)) if gap <= 0.0 => return IdmOutcome::Emergency(-p.b_emergency),
        Some((gap, v_leader)) => {
            let dv = v - v_leader;
            let dynamic = v * p.time_headway + v * dv / (2.0 * (p.a_max * p.b_comf).sqrt());
            let s_star = p.s0 + dynamic.max(0.0);
            (s_star / gap).powi(2)
        }
    };
    let a = p.a_max * (free - interaction);
    IdmOutcome::Nominal(a.clamp(-p.b_emergency, p.a_max))
}
