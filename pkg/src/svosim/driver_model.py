"""Interactive human-driver model: feature cost, best response, weight fit.

The modeled driver (HV0) follows the automated vehicle and plans by
minimizing a linear combination of four penalty features over the
horizon: squared acceleration, squared shortfall from the speed limit,
squared speed difference to its leader, and absolute offset from its
desired following distance d_D = v tau_H + d_s.  The best response is a
single-shooting solve over the control sequence; gap and speed-bound
constraints enter as quadratic penalties.

Weights can be fitted offline from demonstration files by matching
feature expectations (deterministic MaxEnt approximation): the gradient
is the gap between features accumulated by re-planned model rollouts and
the demonstrations' own feature sums.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from . import defaults
from .dynamics import (DiscreteDynamics, HorizonMaps, LongitudinalState,
                       build_horizon_maps, hold_last, step)
from .errors import FitDivergenceError, InvalidParameterError, TraceParseError

FEATURE_NAMES = ("accel_sq", "speed_deficit_sq", "rel_speed_sq", "gap_offset")

_NEWTON_MAX_ITERS = 200
_NEWTON_GRAD_TOL = 1e-9
_POLISH_EPS = defaults.SMOOTH_EPS_SHARP
_FALLBACK_GRAD_TOL = 1e-5
_FEASIBILITY_TOL = 1e-6
_ESCALATION_FACTOR = 32.0
# three rounds reach weight ~3e8; a follower held against its minimum
# gap equilibrates at incursion ~ cost slope / penalty weight, which
# needs that much to land beyond the 1e-6 feasibility tolerance
_MAX_ESCALATIONS = 3


@dataclass(frozen=True)
class FeatureVector:
    """Per-stage driver cost features; all components are >= 0."""

    accel_sq: float
    speed_deficit_sq: float
    rel_speed_sq: float
    gap_offset: float

    def as_array(self) -> np.ndarray:
        return np.array([self.accel_sq, self.speed_deficit_sq,
                         self.rel_speed_sq, self.gap_offset])


@dataclass(frozen=True)
class DriverWeights:
    """Feature weights plus the headway parameters that shape f_rd.

    Attributes:
        w: weight per feature, all finite and >= 0.
        tau_headway: observed minimum time headway [s], > 0.
        min_gap: standstill clearance [m], > 0.
    """

    w: tuple
    tau_headway: float
    min_gap: float

    def __post_init__(self):
        arr = np.asarray(self.w, dtype=float)
        if arr.shape != (4,):
            raise InvalidParameterError(f"expected 4 weights, got {self.w!r}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise InvalidParameterError(
                f"weights must be finite and >= 0, got {self.w!r}")
        if not self.tau_headway > 0:
            raise InvalidParameterError(
                f"tau_headway must be positive, got {self.tau_headway}")
        if not self.min_gap > 0:
            raise InvalidParameterError(
                f"min_gap must be positive, got {self.min_gap}")
        object.__setattr__(self, "w", tuple(float(v) for v in arr))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.w, dtype=float)


@dataclass(frozen=True)
class HumanConstraints:
    """State constraints for the modeled driver (no control bounds)."""

    v_min: float
    v_max: float
    d_min: float

    def __post_init__(self):
        if not (0.0 <= self.v_min < self.v_max):
            raise InvalidParameterError(
                f"need 0 <= v_min < v_max, got [{self.v_min}, {self.v_max}]")
        if not self.d_min > 0:
            raise InvalidParameterError(
                f"d_min must be positive, got {self.d_min}")


@dataclass(frozen=True)
class Demonstration:
    """Recorded human car-following segment at fixed dt."""

    t: np.ndarray
    gaps: np.ndarray
    speeds: np.ndarray
    accels: np.ndarray
    leader_speeds: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        n = len(self.t)
        if n == 0:
            raise InvalidParameterError("demonstration is empty")
        for name in ("gaps", "speeds", "accels", "leader_speeds", "controls"):
            if len(getattr(self, name)) != n:
                raise InvalidParameterError(
                    f"demonstration column {name} has mismatched length")
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidParameterError(
                    f"demonstration column {name} has non-finite entries")
        if n > 1:
            steps = np.diff(self.t)
            bad = np.nonzero(np.abs(steps - steps[0]) > 1e-6)[0]
            if bad.size:
                raise InvalidParameterError(
                    f"non-uniform dt at sample {bad[0] + 1}: "
                    f"{steps[bad[0]]:.8f} vs {steps[0]:.8f}")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def __len__(self) -> int:
        return len(self.t)

    def state(self, i: int) -> LongitudinalState:
        return LongitudinalState(float(self.gaps[i]), float(self.speeds[i]),
                                 float(self.accels[i]))


def features(x_h: LongitudinalState, v_leader: float, v_limit: float,
             tau_headway: float, min_gap: float) -> FeatureVector:
    """Stage features of the driver cost at one state.

    Args:
        x_h: driver state; gap is measured to its leader.
        v_leader: leader (AV) speed at the same instant.
        v_limit: speed limit.
    """
    desired_gap = x_h.speed * tau_headway + min_gap
    return FeatureVector(
        accel_sq=x_h.accel ** 2,
        speed_deficit_sq=(v_limit - x_h.speed) ** 2,
        rel_speed_sq=(v_leader - x_h.speed) ** 2,
        gap_offset=abs(desired_gap - x_h.gap),
    )


def human_stage_cost(fv: FeatureVector, weights: DriverWeights) -> float:
    """Weighted stage cost, the dot product of weights and features."""
    return float(weights.as_array() @ fv.as_array())


@dataclass(frozen=True)
class BestResponse:
    """Solution of one driver best-response problem.

    cost is the true (unsmoothed, unpenalized) feature cost along the
    response; max_violation the worst state-constraint violation.
    """

    controls: np.ndarray
    gaps: np.ndarray
    speeds: np.ndarray
    accels: np.ndarray
    cost: float
    feasible: bool
    max_violation: float


class _ResponseProblem:
    """Smoothed, penalized single-shooting objective in the control vector."""

    def __init__(self, maps: HorizonMaps, x0: LongitudinalState,
                 leader_speeds: np.ndarray, weights: DriverWeights,
                 hc: HumanConstraints, v_limit: float, penalty: float,
                 eps: float = defaults.SMOOTH_EPS):
        n = maps.n_steps
        if len(leader_speeds) != n + 1:
            raise InvalidParameterError(
                f"need {n + 1} leader-speed samples, got {len(leader_speeds)}")
        self.maps = maps
        self.weights = weights
        self.hc = hc
        self.v_limit = v_limit
        self.penalty = penalty
        self.lead_dyn = leader_speeds[:n]       # held over [k, k+1)
        self.lead_at = leader_speeds[1:]        # aligned with states 1..N
        self.g0, self.v0, self.a0 = maps.free_response(x0, self.lead_dyn)
        w_a, w_ds, w_rs, w_rd = weights.as_array()
        self.w_a, self.w_ds, self.w_rs, self.w_rd = w_a, w_ds, w_rs, w_rd
        self.offset_map = weights.tau_headway * maps.speed_u - maps.gap_u
        self.eps = eps

    def traj(self, u: np.ndarray):
        m = self.maps
        return (m.gap_u @ u + self.g0, m.speed_u @ u + self.v0,
                m.accel_u @ u + self.a0)

    def value_grad(self, u: np.ndarray):
        g, v, a = self.traj(u)
        w = self.weights
        off = v * w.tau_headway + w.min_gap - g
        smooth = np.sqrt(off * off + self.eps * self.eps)
        viol_d = np.maximum(0.0, self.hc.d_min - g)
        viol_lo = np.maximum(0.0, self.hc.v_min - v)
        viol_hi = np.maximum(0.0, v - self.hc.v_max)
        f = (self.w_a * a @ a
             + self.w_ds * np.sum((self.v_limit - v) ** 2)
             + self.w_rs * np.sum((self.lead_at - v) ** 2)
             + self.w_rd * np.sum(smooth)
             + self.penalty * (viol_d @ viol_d + viol_lo @ viol_lo
                               + viol_hi @ viol_hi))
        dsm = off / smooth
        df_da = 2.0 * self.w_a * a
        df_dv = (-2.0 * self.w_ds * (self.v_limit - v)
                 - 2.0 * self.w_rs * (self.lead_at - v)
                 + self.w_rd * dsm * w.tau_headway
                 + self.penalty * (-2.0 * viol_lo + 2.0 * viol_hi))
        df_dg = (-self.w_rd * dsm - 2.0 * self.penalty * viol_d)
        m = self.maps
        grad = m.accel_u.T @ df_da + m.speed_u.T @ df_dv + m.gap_u.T @ df_dg
        return f, grad

    def hessian(self, u: np.ndarray):
        g, v, a = self.traj(u)
        w = self.weights
        off = v * w.tau_headway + w.min_gap - g
        smooth_sq = off * off + self.eps * self.eps
        curve = self.eps * self.eps / (smooth_sq * np.sqrt(smooth_sq))
        return self._assemble_hessian(g, v, curve)

    def mm_hessian(self, u: np.ndarray):
        """Hessian of the reweighted-least-squares upper bound.

        Replaces each smoothed-abs gap term with the quadratic that
        touches it at the current iterate and majorizes it everywhere;
        the resulting step stays well scaled when an iterate is far from
        the term's kink, where the true curvature collapses.
        """
        g, v, _ = self.traj(u)
        w = self.weights
        off = v * w.tau_headway + w.min_gap - g
        curve = 1.0 / np.sqrt(off * off + self.eps * self.eps)
        return self._assemble_hessian(g, v, curve)

    def _assemble_hessian(self, g, v, gap_curve):
        m = self.maps
        H = 2.0 * self.w_a * (m.accel_u.T @ m.accel_u)
        dv = np.full(m.n_steps, 2.0 * (self.w_ds + self.w_rs))
        dv += 2.0 * self.penalty * ((v < self.hc.v_min) | (v > self.hc.v_max))
        H += (m.speed_u * dv[:, None]).T @ m.speed_u
        dg = 2.0 * self.penalty * (g < self.hc.d_min)
        H += (m.gap_u * dg[:, None]).T @ m.gap_u
        H += (self.offset_map
              * (self.w_rd * gap_curve)[:, None]).T @ self.offset_map
        return H

    def leader_sensitivity(self, u: np.ndarray, speed_grad: np.ndarray):
        """Adjoint gradient in the leader speed samples at a solved response.

        For a scalar whose gradient in the response speed samples is
        speed_grad, returns its total gradient in the n + 1 leader speed
        samples, accounting for the response controls shifting with the
        leader through the stationarity of this objective.  Valid only
        at a minimizer of this problem.
        """
        g, v, _ = self.traj(u)
        w = self.weights
        off = v * w.tau_headway + w.min_gap - g
        smooth_sq = off * off + self.eps * self.eps
        psi_curve = self.eps * self.eps / (smooth_sq * np.sqrt(smooth_sq))
        m = self.maps
        y = np.linalg.solve(self.hessian(u) + 1e-10 * np.eye(len(u)),
                            m.speed_u.T @ speed_grad)
        yv = m.speed_u @ y
        dv_diag = (2.0 * (self.w_ds + self.w_rs)
                   + 2.0 * self.penalty * ((v < self.hc.v_min)
                                           | (v > self.hc.v_max)))
        dg_diag = 2.0 * self.penalty * (g < self.hc.d_min)
        cross_dyn = (m.accel_p.T @ (2.0 * self.w_a * (m.accel_u @ y))
                     + m.speed_p.T @ (dv_diag * yv)
                     + m.gap_p.T @ (dg_diag * (m.gap_u @ y))
                     + (w.tau_headway * m.speed_p - m.gap_p).T
                     @ (self.w_rd * psi_curve * (self.offset_map @ y)))
        out = np.zeros(len(u) + 1)
        # the first n samples drive the response states directly
        out[:len(u)] = m.speed_p.T @ speed_grad - cross_dyn
        # samples 1..n also enter the relative-speed feature
        out[1:] += 2.0 * self.w_rs * yv
        return out

    def true_cost(self, u: np.ndarray) -> float:
        g, v, a = self.traj(u)
        w = self.weights
        off = v * w.tau_headway + w.min_gap - g
        return float(self.w_a * a @ a
                     + self.w_ds * np.sum((self.v_limit - v) ** 2)
                     + self.w_rs * np.sum((self.lead_at - v) ** 2)
                     + self.w_rd * np.sum(np.abs(off)))

    def max_violation(self, u: np.ndarray) -> float:
        g, v, _ = self.traj(u)
        return float(max(np.max(self.hc.d_min - g, initial=0.0),
                         np.max(self.hc.v_min - v, initial=0.0),
                         np.max(v - self.hc.v_max, initial=0.0)))


def _newton_minimize(prob: _ResponseProblem, u0: np.ndarray) -> np.ndarray:
    """Damped Newton with a reweighted-least-squares fallback direction.

    The full Newton step overshoots badly when an iterate sits far from
    a gap-term kink relative to the smoothing width (the true curvature
    there scales like eps^2), so a rejected step falls back to the
    majorizer step instead of backtracking along the bad direction.
    """
    u = u0.copy()
    f, grad = prob.value_grad(u)
    n = len(u)
    reg = 1e-10 * np.eye(n)
    for _ in range(_NEWTON_MAX_ITERS):
        if np.max(np.abs(grad)) <= _NEWTON_GRAD_TOL:
            return u
        f_before = f
        moved = False
        try:
            direction = np.linalg.solve(prob.hessian(u) + reg, -grad)
        except np.linalg.LinAlgError:
            direction = None
        if direction is not None:
            slope = grad @ direction
            if slope < 0:
                cand = u + direction
                f_new, grad_new = prob.value_grad(cand)
                if f_new <= f + 1e-4 * slope:
                    u, f, grad = cand, f_new, grad_new
                    moved = True
        if not moved:
            try:
                direction = np.linalg.solve(prob.mm_hessian(u) + reg, -grad)
            except np.linalg.LinAlgError:
                direction = -grad
            slope = grad @ direction
            if slope > -1e-16:
                return u
            t = 1.0
            while t > 1e-12:
                cand = u + t * direction
                f_new, grad_new = prob.value_grad(cand)
                if f_new <= f + 1e-4 * t * slope:
                    u, f, grad = cand, f_new, grad_new
                    moved = True
                    break
                t *= 0.5
        if not moved:
            break
        # descent below the rounding floor of f means the remaining
        # gradient cannot be realized as measurable progress
        if f_before - f <= 1e-15 * max(1.0, abs(f)):
            break
    if np.max(np.abs(grad)) > _FALLBACK_GRAD_TOL:
        res = minimize(lambda z: prob.value_grad(z), u, jac=True,
                       method="L-BFGS-B",
                       options={"maxiter": 200, "ftol": 1e-14, "gtol": 1e-10})
        if res.fun < f:
            u = res.x
    return u


def respond_to_leader(x0: LongitudinalState, leader_speeds,
                      weights: DriverWeights, hc: HumanConstraints,
                      disc: DiscreteDynamics, n_steps: int,
                      v_limit: float,
                      warm_start: np.ndarray | None = None,
                      refine: bool = True,
                      eps: float = defaults.SMOOTH_EPS) -> BestResponse:
    """Best response of the driver to a known leader speed trajectory.

    Args:
        leader_speeds: n_steps + 1 samples, leader speed at the current
            instant and after each of the n_steps intervals.
        warm_start: previous control sequence to refine; zeros otherwise.
        refine: escalate the constraint penalty to the feasibility
            tolerance and finish with a sharp-smoothing re-solve.  Keep
            it on for returned responses; callers that difference the
            solution map (and need it cheap, not certificate-grade)
            turn it off.
        eps: smoothing half-width of the main solve.  The refine
            re-solve finishes at least as sharp as the default polish
            width regardless.

    When refining, the constraint penalty starts at the configured
    weight and is escalated (x32, at most three times) whenever the
    solved trajectory still violates a state constraint beyond 1e-6; a
    violation that survives escalation marks the response infeasible
    (best effort, no abort).  The sharp re-solve exists because the
    coarse smoothing that keeps the main solve well conditioned leaves
    a visible true-cost gradient when a stage sits near the desired-gap
    kink.
    """
    maps = build_horizon_maps(disc, n_steps)
    leader_speeds = np.asarray(leader_speeds, dtype=float)
    u = (np.zeros(n_steps) if warm_start is None
         else np.asarray(warm_start, dtype=float).copy())
    penalty = defaults.PENALTY_WEIGHT
    prob = _ResponseProblem(maps, x0, leader_speeds, weights, hc,
                            v_limit, penalty, eps=eps)
    u = _newton_minimize(prob, u)
    if refine:
        escalations = 0
        while (prob.max_violation(u) > _FEASIBILITY_TOL
               and escalations < _MAX_ESCALATIONS):
            penalty *= _ESCALATION_FACTOR
            escalations += 1
            prob = _ResponseProblem(maps, x0, leader_speeds, weights, hc,
                                    v_limit, penalty, eps=eps)
            u = _newton_minimize(prob, u)
        prob = _ResponseProblem(maps, x0, leader_speeds, weights, hc,
                                v_limit, penalty, eps=min(eps, _POLISH_EPS))
        u = _newton_minimize(prob, u)
    gaps, speeds, accels = prob.traj(u)
    viol = prob.max_violation(u)
    return BestResponse(controls=u, gaps=gaps, speeds=speeds, accels=accels,
                        cost=prob.true_cost(u),
                        feasible=bool(viol <= _FEASIBILITY_TOL),
                        max_violation=viol)


def response_speed_sensitivity(x0: LongitudinalState, leader_speeds,
                               controls, weights: DriverWeights,
                               hc: HumanConstraints, disc: DiscreteDynamics,
                               n_steps: int, v_limit: float, speed_grad,
                               eps: float = defaults.SMOOTH_EPS) -> np.ndarray:
    """Leader-speed gradient of a scalar of the response speeds.

    controls must be the solution respond_to_leader(refine=False) found
    for the same inputs and the same eps; the result accounts for the
    response shifting with the leader profile through that solve's
    stationarity.  speed_grad is the scalar's gradient in the response
    speed samples; the result has one entry per leader speed sample
    (n_steps + 1).
    """
    maps = build_horizon_maps(disc, n_steps)
    prob = _ResponseProblem(maps, x0, np.asarray(leader_speeds, dtype=float),
                            weights, hc, v_limit, defaults.PENALTY_WEIGHT,
                            eps=eps)
    return prob.leader_sensitivity(np.asarray(controls, dtype=float),
                                   np.asarray(speed_grad, dtype=float))


def best_response(x_av: LongitudinalState, x_human: LongitudinalState,
                  u_av_seq, pv_preview, weights: DriverWeights,
                  hc: HumanConstraints, disc: DiscreteDynamics,
                  v_limit: float,
                  warm_start: np.ndarray | None = None) -> BestResponse:
    """Driver best response to a committed AV control plan.

    The AV trajectory implied by u_av_seq against the lead-vehicle
    preview is rolled out first; the driver then optimizes against the
    resulting AV speed profile.  Deterministic; infeasible instances
    come back flagged rather than raising.

    Args:
        x_av: AV state (gap to the lead vehicle, speed, accel).
        x_human: driver state (gap to the AV, speed, accel).
        u_av_seq: AV control sequence, one entry per horizon step.
        pv_preview: lead-vehicle speed preview, extended by holding the
            last sample if shorter than the horizon.
    """
    u_av_seq = np.asarray(u_av_seq, dtype=float)
    n = len(u_av_seq)
    maps = build_horizon_maps(disc, n)
    pv = hold_last(pv_preview, n)
    _, av_speeds, _ = maps.rollout(x_av, u_av_seq, pv)
    leader_speeds = np.concatenate([[x_av.speed], av_speeds])
    return respond_to_leader(x_human, leader_speeds, weights, hc, disc, n,
                             v_limit, warm_start=warm_start)


# ---------------------------------------------------------------------------
# Demonstration files


DEMO_HEADER = ["t", "gap_m", "speed_mps", "accel_mps2", "leader_speed_mps",
               "control_mps2"]


def load_demonstration_csv(path) -> Demonstration:
    """Parse one demonstration CSV.

    Raises:
        TraceParseError: wrong header, malformed numbers, or a time
            column whose spacing varies by more than 1e-6 s (the message
            names the first offending line).
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceParseError(f"{path}: empty file") from None
        if [h.strip() for h in header] != DEMO_HEADER:
            raise TraceParseError(
                f"{path}: expected header {','.join(DEMO_HEADER)}, "
                f"got {','.join(header)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(DEMO_HEADER):
                raise TraceParseError(
                    f"{path}: expected {len(DEMO_HEADER)} fields",
                    line=lineno)
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise TraceParseError(
                    f"{path}: malformed number in {row!r}",
                    line=lineno) from None
    if not rows:
        raise TraceParseError(f"{path}: no data rows")
    cols = np.array(rows).T
    t = cols[0]
    if len(t) > 1:
        steps = np.diff(t)
        bad = np.nonzero(np.abs(steps - steps[0]) > 1e-6)[0]
        if bad.size:
            raise TraceParseError(
                f"{path}: non-uniform dt ({steps[bad[0]]:.8f} s vs "
                f"{steps[0]:.8f} s)", line=int(bad[0]) + 3)
    return Demonstration(t=t, gaps=cols[1], speeds=cols[2], accels=cols[3],
                         leader_speeds=cols[4], controls=cols[5])


def save_demonstration_csv(path, demo: Demonstration) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DEMO_HEADER)
        for i in range(len(demo)):
            writer.writerow([repr(float(v)) for v in
                             (demo.t[i], demo.gaps[i], demo.speeds[i],
                              demo.accels[i], demo.leader_speeds[i],
                              demo.controls[i])])


# ---------------------------------------------------------------------------
# Weight fitting


@dataclass(frozen=True)
class FitResult:
    weights: DriverWeights
    iterations: int
    converged: bool
    demo_features: np.ndarray
    model_features: np.ndarray
    mismatch: np.ndarray


def estimate_tau_headway(demos) -> float:
    """Observed minimum time headway over all moving samples (> 1 m/s)."""
    best = np.inf
    for demo in demos:
        moving = demo.speeds > 1.0
        if np.any(moving):
            best = min(best, float(np.min(demo.gaps[moving]
                                          / demo.speeds[moving])))
    if not np.isfinite(best):
        raise InvalidParameterError(
            "no demonstration sample moves faster than 1 m/s; "
            "cannot estimate a time headway")
    if best <= 0:
        raise InvalidParameterError(
            f"estimated time headway {best:.4f} s is not positive")
    return best


def _demo_feature_sum(demo: Demonstration, weights: DriverWeights,
                      v_limit: float) -> np.ndarray:
    total = np.zeros(4)
    for i in range(len(demo)):
        total += features(demo.state(i), float(demo.leader_speeds[i]),
                          v_limit, weights.tau_headway,
                          weights.min_gap).as_array()
    return total


def _model_feature_sum(demo: Demonstration, weights: DriverWeights,
                       hc: HumanConstraints, disc: DiscreteDynamics,
                       v_limit: float, n_steps: int) -> np.ndarray:
    """Features along a receding-horizon re-plan of the demonstration."""
    x = demo.state(0)
    total = features(x, float(demo.leader_speeds[0]), v_limit,
                     weights.tau_headway, weights.min_gap).as_array()
    warm = None
    for i in range(len(demo) - 1):
        preview = hold_last(demo.leader_speeds[i:], n_steps + 1)
        resp = respond_to_leader(x, preview, weights, hc, disc, n_steps,
                                 v_limit, warm_start=warm)
        warm = np.append(resp.controls[1:], resp.controls[-1])
        x = step(disc, x, float(resp.controls[0]),
                 float(demo.leader_speeds[i]))
        total += features(x, float(demo.leader_speeds[i + 1]), v_limit,
                          weights.tau_headway, weights.min_gap).as_array()
    return total


def fit_weights_maxent(demos, w0: DriverWeights, learn_rate: float = 0.2,
                       max_iters: int = 150, tol: float = 0.05, *,
                       hc: HumanConstraints, disc: DiscreteDynamics,
                       v_limit: float,
                       n_steps: int = defaults.HORIZON_STEPS,
                       tau_override: float | None = None,
                       weight_cap: float = 1e3) -> FitResult:
    """Fit driver weights by feature-expectation matching.

    Projected gradient ascent on the demonstration likelihood under the
    deterministic max-entropy approximation: ascent direction is the
    model-minus-demo feature expectation, each component normalized by
    the empirical feature scale so a single learn rate serves features
    of different units.  Weights are clipped to >= 0 after each update.

    The time headway parameter is estimated once from the demos (minimum
    gap/speed over samples moving faster than 1 m/s) unless tau_override
    pins it.

    Raises:
        FitDivergenceError: a weight exceeded weight_cap.
    """
    if not demos:
        raise InvalidParameterError("need at least one demonstration")
    tau = float(tau_override) if tau_override is not None \
        else estimate_tau_headway(demos)
    current = DriverWeights(w=w0.w, tau_headway=tau, min_gap=w0.min_gap)
    demo_feats = np.mean([_demo_feature_sum(d, current, v_limit)
                          for d in demos], axis=0)
    scale = np.maximum(np.abs(demo_feats), 1e-8)

    model_feats = np.zeros(4)
    mismatch = np.full(4, np.inf)
    converged = False
    iterations = 0
    for it in range(max_iters):
        model_feats = np.mean([_model_feature_sum(d, current, hc, disc,
                                                  v_limit, n_steps)
                               for d in demos], axis=0)
        mismatch = np.abs(model_feats - demo_feats) / scale
        if np.max(mismatch) <= tol:
            converged = True
            break
        grad = (model_feats - demo_feats) / scale
        new_w = np.maximum(0.0, current.as_array() + learn_rate * grad)
        if np.any(new_w > weight_cap):
            raise FitDivergenceError(
                f"weight fitting diverged at iteration {it}: {new_w}",
                iteration=it, weights=new_w, mismatch=mismatch)
        current = DriverWeights(w=tuple(new_w), tau_headway=tau,
                                min_gap=current.min_gap)
        iterations = it + 1
    return FitResult(weights=current, iterations=iterations,
                     converged=converged, demo_features=demo_feats,
                     model_features=model_feats, mismatch=mismatch)
