"""Intelligent-driver-model fleet following the controlled pair.

The trailing fleet vehicles are point masses under the IDM car-following
law, integrated semi-implicitly: acceleration from pre-update states,
speed first, then gap from the new speeds.  Within one step every
follower reads its predecessor's pre-update state, so the update is
order-invariant; gaps integrate both vehicles' new speeds, which keeps
them consistent with positions advanced by each vehicle's new speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

from .dynamics import LongitudinalState
from .errors import CollisionError, InvalidParameterError

EQUILIBRIUM_GAP_CAP_M = 100.0


@dataclass(frozen=True)
class IdmParams:
    """IDM parameter set.

    Attributes:
        max_accel: accel headroom a [m/s^2].
        comfort_decel: comfortable braking b [m/s^2].
        min_spacing: standstill spacing s0 [m].
        time_gap: desired time gap tau_d [s].
        exponent: free-flow exponent delta.
        desired_speed: free-flow speed [m/s], taken from the scenario's
            lead-vehicle profile maximum when built via the scenario path.
    """

    max_accel: float
    comfort_decel: float
    min_spacing: float
    time_gap: float
    exponent: float
    desired_speed: float

    def __post_init__(self):
        for name in ("max_accel", "comfort_decel", "min_spacing",
                     "time_gap", "desired_speed"):
            if not getattr(self, name) > 0.0:
                raise InvalidParameterError(
                    f"IDM {name} must be positive, got {getattr(self, name)}")
        if not self.exponent > 0.0:
            raise InvalidParameterError(
                f"IDM exponent must be positive, got {self.exponent}")


def idm_accel(speed: float, dv: float, gap: float, p: IdmParams) -> float:
    """IDM acceleration for one follower.

    Args:
        speed: follower speed [m/s].
        dv: closing rate, follower speed minus predecessor speed [m/s].
        gap: bumper-to-bumper gap [m]; must be positive.

    Raises:
        CollisionError: the gap is zero or negative.
    """
    if gap <= 0.0:
        raise CollisionError(f"gap {gap:.3f} m is not positive")
    s_star = p.min_spacing + p.time_gap * speed \
        + speed * dv / (2.0 * math.sqrt(p.max_accel * p.comfort_decel))
    s_star = max(p.min_spacing, s_star)
    return p.max_accel * (1.0 - (speed / p.desired_speed) ** p.exponent
                          - (s_star / gap) ** 2)


def equilibrium_gap(speed: float, p: IdmParams) -> float:
    """Steady-state gap at a given common speed.

    Diverges as speed approaches the desired speed; capped at
    EQUILIBRIUM_GAP_CAP_M so profile-derived desired speeds cannot blow
    up scenario initialization.
    """
    if speed < 0.0:
        raise InvalidParameterError(f"speed must be nonnegative, got {speed}")
    q = (speed / p.desired_speed) ** p.exponent
    if q >= 1.0:
        return EQUILIBRIUM_GAP_CAP_M
    s_star = p.min_spacing + p.time_gap * speed
    return min(EQUILIBRIUM_GAP_CAP_M, s_star / math.sqrt(1.0 - q))


def step_fleet(states: list[LongitudinalState], lead_speed_pre: float,
               lead_speed_post: float, p: IdmParams, dt: float,
               step_index: int | None = None) -> list[LongitudinalState]:
    """Advance the chained fleet by one step.

    states[0] follows the external lead vehicle; states[i] follows
    states[i-1].  lead_speed_pre / lead_speed_post are the lead's speeds
    before and after its own update this step.

    Returns the new states; each state's accel field records the IDM
    acceleration applied over the step.

    Raises:
        CollisionError: some follower's gap was not positive, with the
            vehicle index and step attached.
    """
    new: list[LongitudinalState] = []
    pred_pre = lead_speed_pre
    pred_post = lead_speed_post
    for i, s in enumerate(states):
        try:
            a = idm_accel(s.speed, s.speed - pred_pre, s.gap, p)
        except CollisionError as exc:
            raise CollisionError(str(exc), step=step_index,
                                 vehicle=f"fleet[{i}]") from None
        v_new = max(0.0, s.speed + dt * a)
        gap_new = s.gap + dt * (pred_post - v_new)
        new.append(LongitudinalState(gap=gap_new, speed=v_new, accel=a))
        pred_pre = s.speed
        pred_post = v_new
    return new
