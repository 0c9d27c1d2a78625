"""Piecewise horizontal curves in hypersurfaces, and steering between points.

The integrator follows controls expressed over the local horizontal
tangent frame of a hypersurface (or over the horizontal frame itself when
given a bare manifold), re-deriving the frame at every stage and
projecting back onto the level set after every step.  The steering search
descends the chart distance to the target greedily and falls back to
commutator maneuvers (four-segment bracket loops) when the reachable
directions stall.  Failure is an informative result, not an exception:
connectivity genuinely fails in low-dimensional traps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import expr as ex
from .curves import CurveDiagnostics, HorizontalCurve, Segment
from .errors import (CharacteristicEncounter, ExtensionFailure, NearOrigin,
                     NotOnSurface, StepFailure)
from .hypersurface import (Hypersurface, _frozen_frame_choice,
                           _gram_schmidt_tangent, _normal_pipeline,
                           project_to_surface)
from .manifold import Manifold, lie_bracket_field

__all__ = [
    "SteerParams", "Failure", "HorizontalityReport",
    "integrate_control", "commutator_maneuver", "steer",
    "check_horizontality", "h1_trap_invariant",
]


@dataclass(frozen=True)
class SteerParams:
    dt: float = 1e-3
    horizon: float = 60.0
    stall_threshold: float = 1e-4   # minimum cost decrease per unit time
    maneuver_epsilon: float = 0.15  # largest commutator loop leg
    epsilon_floor: float = 1e-4
    tol_endpoint: float = 1e-3
    seed: int = 0
    char_tol: float = 1e-3          # abort threshold for the normal fraction
    chunk: float = 0.1              # greedy segment duration cap
    hard_weight: float = 5.0        # endgame weight of the bracket-only gap
    phase_radius: float = 0.25      # switch to the weighted endgame cost here
    leg_length: float = 0.15        # waypoint spacing along the chord
    surface_tol: float = 1e-9
    max_kicks: int = 20

    def __post_init__(self):
        for name in ("dt", "horizon", "stall_threshold", "maneuver_epsilon",
                     "epsilon_floor", "tol_endpoint", "chunk"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Failure:
    reason: str
    best_distance: float
    curve: HorizontalCurve
    stall: dict = field(default_factory=dict)
    witness: str | None = None

    def as_dict(self):
        out = {"reason": self.reason, "best_distance": self.best_distance,
               "stall": self.stall}
        if self.witness:
            out["witness"] = self.witness
        return out


# ---------------------------------------------------------------------------
# Local steering frame


def _control_rank(space):
    if isinstance(space, Hypersurface):
        return space.manifold.rank - 1
    return space.rank


def _manifold_of(space):
    return space.manifold if isinstance(space, Hypersurface) else space


def _steering_frame(space, x, char_tol, time=None, drop=None):
    """Rows are the chart vectors of the admissible unit directions at x.

    For a hypersurface this is the horizontal tangent frame; the
    characteristic guard fires here so every integrator stage is
    protected.  ``drop`` pins the orthogonalization choice (frozen per
    segment so the frame stays smooth along one control leg).
    """
    man = _manifold_of(space)
    F = man.frame_matrix(x)
    if not isinstance(space, Hypersurface):
        return F[:, :man.rank].T
    k = man.rank
    _, grad = space.phi_and_gradient(x)
    g = F.T @ grad
    gh = g[:k]
    full = float(np.sqrt(g @ g))
    horiz = float(np.sqrt(gh @ gh))
    if full == 0.0 or horiz <= char_tol * full:
        raise CharacteristicEncounter(
            f"normal fraction {horiz / max(full, 1e-300):.3e} <= {char_tol:g}",
            point=np.asarray(x, dtype=float), time=time)
    v = gh / horiz
    if drop is None:
        drop = int(np.argmax(np.abs(v)))
    taus = _gram_schmidt_rows(v, drop)
    return taus @ F[:, :k].T


def _frame_choice(space, x, char_tol):
    """Drop index of the steering frame at x (None in ambient mode)."""
    if not isinstance(space, Hypersurface):
        return None
    man = space.manifold
    F = man.frame_matrix(x)
    _, grad = space.phi_and_gradient(x)
    g = F[:, :man.rank].T @ grad
    return int(np.argmax(np.abs(g)))


def _tangent_basis(space, x, frame):
    """(n_hat, rows): chart unit normal and a chart-orthonormal basis of
    the steering-frame span within the tangent space at x."""
    _, grad = space.phi_and_gradient(x)
    n_hat = grad / np.linalg.norm(grad)
    rows = []
    for row in frame:
        w = row - (row @ n_hat) * n_hat
        for r in rows:
            w = w - (w @ r) * r
        norm = np.linalg.norm(w)
        if norm > 1e-12:
            rows.append(w / norm)
    return n_hat, rows


def _gap_cost(gap, basis, hard_weight):
    n_hat, rows = basis
    reach = np.zeros_like(gap)
    for r in rows:
        reach = reach + (gap @ r) * r
    hard = gap - (gap @ n_hat) * n_hat - reach
    return float(np.linalg.norm(reach) + hard_weight * np.linalg.norm(hard))


def _gram_schmidt_rows(v, drop, eps=1e-12):
    """Float-only counterpart of the dual-capable tangent orthogonalization
    (same drop rule and processing order)."""
    k = len(v)
    rows = np.empty((k - 1, k))
    count = 0
    for i in range(k):
        if i == drop:
            continue
        w = -v[i] * v
        w[i] += 1.0
        for r in range(count):
            row = rows[r]
            w = w - (w @ row) * row
        norm_sq = w @ w
        if norm_sq <= eps:
            raise ExtensionFailure("tangent orthogonalization degenerated")
        rows[count] = w / np.sqrt(norm_sq)
        count += 1
    return rows


# ---------------------------------------------------------------------------
# Integration


class _CurveRecorder:
    def __init__(self, p0, m):
        self.times = [0.0]
        self.points = [np.asarray(p0, dtype=float).copy()]
        self.speeds = [0.0]
        self.segments = []
        self.seg_speeds = []
        self.breaks = [0]

    def extend(self, seg_times, seg_points, speed, segment):
        base = self.times[-1]
        for t, p in zip(seg_times[1:], seg_points[1:]):
            self.times.append(base + t)
            self.points.append(p)
            self.speeds.append(speed)
        self.segments.append(segment)
        self.seg_speeds.append(speed)
        self.breaks.append(len(self.times) - 1)

    def current(self):
        return self.points[-1]

    def elapsed(self):
        return self.times[-1]

    def snapshot(self):
        return (len(self.times), len(self.segments))

    def rollback(self, snap):
        n_samples, n_segments = snap
        del self.times[n_samples:]
        del self.points[n_samples:]
        del self.speeds[n_samples:]
        del self.segments[n_segments:]
        del self.seg_speeds[n_segments:]
        del self.breaks[n_segments + 1:]

    def build(self, diagnostics):
        return HorizontalCurve(
            times=np.array(self.times),
            points=np.array(self.points),
            speeds=np.array(self.speeds),
            segments=tuple(self.segments),
            segment_breaks=tuple(self.breaks) if self.segments else (),
            segment_speeds=tuple(self.seg_speeds),
            diagnostics=diagnostics,
        )


def _integrate_segment(space, x0, control, duration, params, drop=None):
    """RK4 integration of one constant-control segment.

    Returns (times, points) including the initial sample; the state is
    projected back to the surface after every step and the normal
    fraction is guarded along the way.  The orthogonalization drop index
    is frozen over the segment (callers may pin it over several segments,
    e.g. for the legs of one commutator loop, so that a control index
    keeps meaning the same frame field).
    """
    man = _manifold_of(space)
    control = np.asarray(control, dtype=float)
    on_surface = isinstance(space, Hypersurface)
    # at least 4 samples per segment so the horizontality check can use
    # high-order one-sided stencils at segment boundaries
    steps = max(3, int(round(duration / params.dt)))
    h = duration / steps
    if drop is None:
        drop = _frame_choice(space, x0, params.char_tol)

    def velocity(x):
        frame = _steering_frame(space, x, params.char_tol, drop=drop)
        return frame.T @ control

    x = np.asarray(x0, dtype=float).copy()
    times = [0.0]
    points = [x.copy()]
    for s in range(steps):
        t = s * h
        try:
            k1 = velocity(x)
            k2 = velocity(x + 0.5 * h * k1)
            k3 = velocity(x + 0.5 * h * k2)
            k4 = velocity(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if on_surface:
                x = project_to_surface(space, x)
        except CharacteristicEncounter:
            raise
        except Exception as exc:  # singular frame, Newton divergence, domain
            raise StepFailure(f"integration failed: {exc}", time=t) from exc
        times.append(t + h)
        points.append(x.copy())
    return times, points


def integrate_control(space, p0, schedule, params=None, drop=None):
    """Integrate a piecewise-constant control schedule into a curve.

    ``space`` is a Hypersurface (controls over the horizontal tangent
    frame, surface projection active) or a Manifold (controls over the
    horizontal frame).  ``schedule`` is an iterable of
    ``(control_vector, duration)`` pairs.
    """
    params = params or SteerParams()
    man = _manifold_of(space)
    p0 = np.asarray(p0, dtype=float)
    if isinstance(space, Hypersurface):
        value = abs(space.phi_at(p0))
        if value > 1e-6:
            raise NotOnSurface(f"|phi(p0)| = {value:.3e}")
        p0 = project_to_surface(space, p0)
    rec = _CurveRecorder(p0, man.dim)
    for control, duration in schedule:
        control = np.asarray(control, dtype=float)
        if len(control) != _control_rank(space):
            raise ValueError("control dimension does not match the frame")
        if duration <= 0:
            continue
        times, points = _integrate_segment(space, rec.current(), control,
                                           duration, params, drop=drop)
        rec.extend(times, points, float(np.linalg.norm(control)),
                   Segment(control=control, duration=float(duration)))
    return _finalize(space, rec, params)


def _finalize(space, rec, params, endpoint_target=None):
    curve = rec.build(CurveDiagnostics())
    drift = None
    if isinstance(space, Hypersurface):
        drift = float(max(abs(space.phi_at(q)) for q in curve.points))
    report = check_horizontality(space, curve)
    diag = CurveDiagnostics(
        max_phi_drift=drift,
        max_horizontality_residual=report.max_residual,
        endpoint_error=(float(np.linalg.norm(curve.end - endpoint_target))
                        if endpoint_target is not None else None),
    )
    return replace(curve, diagnostics=diag)


# ---------------------------------------------------------------------------
# Commutator maneuvers


def _maneuver_schedule(a, b, eps, r):
    ea = np.zeros(r); ea[a] = 1.0
    eb = np.zeros(r); eb[b] = 1.0
    return [(ea, eps), (eb, eps), (-ea, eps), (-eb, eps)]


def commutator_maneuver(space, p, a, b, eps, params=None):
    """Four-segment bracket loop: flow +a, +b, -a, -b for time eps each.

    The net displacement approximates eps^2 [T_a, T_b](p) up to higher
    order in eps, where T_a, T_b are the steering frame fields.  The
    orthogonalization choice is pinned at p for the whole loop so the
    legs cancel properly.
    """
    params = params or SteerParams()
    r = _control_rank(space)
    if not (0 <= a < r and 0 <= b < r):
        raise ValueError("maneuver indices out of range")
    if eps == 0.0:
        return integrate_control(space, p, [], params)
    drop = _frame_choice(space, np.asarray(p, dtype=float), params.char_tol)
    return integrate_control(space, p, _maneuver_schedule(a, b, eps, r),
                             params, drop=drop)


# ---------------------------------------------------------------------------
# Steering


def steer(space, p, q, params=None):
    """Find a horizontal curve in the surface from p to q.

    Greedy descent of the chart distance over the admissible frame, with
    commutator maneuvers once the aligned fraction of the remaining
    displacement falls below ``stall_threshold``.  Returns a
    HorizontalCurve on success (endpoint within ``tol_endpoint`` of q) or
    a :class:`Failure` record; characteristic encounters are converted to
    failures.
    """
    params = params or SteerParams()
    man = _manifold_of(space)
    rng = np.random.default_rng(params.seed)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if isinstance(space, Hypersurface):
        for name, pt in (("p", p), ("q", q)):
            value = abs(space.phi_at(pt))
            if value > 1e-6:
                raise NotOnSurface(f"|phi({name})| = {value:.3e}")
        p = project_to_surface(space, p)
        q = project_to_surface(space, q)

    rec = _CurveRecorder(p, man.dim)
    stall_info = {"stalls": 0, "maneuvers": 0, "kicks": 0, "skips": 0}
    waypoints = _waypoints(space, p, q, params.leg_length)
    leg = 0

    def cost_at(x, target, weight):
        """Steering potential at x toward the current waypoint.

        The gap is split over a chart orthonormal basis of the tangent
        space: the part spanned by the steering frame counts with weight
        one, the remaining tangent direction (reachable only through
        bracket loops) with ``weight``; the off-surface component is
        geometric slack.  The caller fixes the weight per decision (1 in
        transit far from the target, ``hard_weight`` in the endgame) so
        every accept/reject comparison uses a single consistent scale.
        """
        frame = _steering_frame(space, x, params.char_tol)
        gap = target - x
        tau_part = frame @ gap
        if weight <= 1.0 or not isinstance(space, Hypersurface):
            # transit: plain chart distance (the normal slack bends the
            # path around the surface for free)
            return float(np.linalg.norm(gap)), frame, tau_part, None
        basis = _tangent_basis(space, x, frame)
        return _gap_cost(gap, basis, weight), frame, tau_part, basis

    def commit(control, duration):
        times, points = _integrate_segment(space, rec.current(), control,
                                           duration, params)
        rec.extend(times, points, float(np.linalg.norm(control)),
                   Segment(control=np.asarray(control, dtype=float),
                           duration=float(duration)))

    def attempt(target, weight):
        """One greedy line-search move or one maneuver under a fixed
        potential; True when the curve progressed."""
        x = rec.current()
        cost0, frame, tau_part, _basis = cost_at(x, target, weight)
        aligned = float(np.linalg.norm(tau_part))
        if aligned > 0.1 * params.tol_endpoint:
            u = tau_part / aligned
            duration = max(params.dt, min(params.chunk, aligned))
            for _ in range(6):
                snap = rec.snapshot()
                commit(u, duration)
                new_cost = cost_at(rec.current(), target, weight)[0]
                if new_cost <= cost0 - params.stall_threshold * duration:
                    return True
                rec.rollback(snap)
                duration *= 0.5
                if duration < params.dt:
                    break
        return _steer_try_maneuvers(space, rec, target, params,
                                    lambda y: cost_at(y, target, weight),
                                    weight, rng, stall_info)

    def kick():
        if stall_info["kicks"] >= params.max_kicks or _control_rank(space) < 2:
            return False
        u = rng.normal(size=_control_rank(space))
        norm = np.linalg.norm(u)
        if norm == 0:
            return False
        u /= norm
        snap = rec.snapshot()
        try:
            times, points = _integrate_segment(space, rec.current(), u,
                                               params.chunk, params)
            rec.extend(times, points, 1.0,
                       Segment(control=u, duration=float(params.chunk)))
            stall_info["kicks"] += 1
            return True
        except (CharacteristicEncounter, StepFailure):
            rec.rollback(snap)
            return False

    leg_tol = max(params.tol_endpoint, 0.25 * params.leg_length)
    try:
        while True:
            x = rec.current()
            if float(np.linalg.norm(x - q)) <= params.tol_endpoint:
                return _finalize(space, rec, params, endpoint_target=q)
            if rec.elapsed() >= params.horizon:
                return _fail(space, rec, params, q, "time horizon exhausted",
                             stall_info)
            # advance through waypoints that are already close enough
            while (leg < len(waypoints) - 1
                   and np.linalg.norm(x - waypoints[leg]) <= leg_tol):
                leg += 1
            target = waypoints[leg]
            final_leg = leg == len(waypoints) - 1
            dist_leg = float(np.linalg.norm(x - target))
            transit = dist_leg > params.phase_radius
            if attempt(target, 1.0 if transit else params.hard_weight):
                continue
            stall_info["stalls"] += 1
            # a stalled transit often has a bracket-only gap the distance
            # potential cannot see: escalate to the weighted potential
            if transit and attempt(target, params.hard_weight):
                continue
            if kick():
                continue
            if not final_leg:
                # waypoints are suggestions: skip an unreachable one
                leg += 1
                stall_info["skips"] += 1
                continue
            return _fail(space, rec, params, q,
                         "stalled below maneuver resolution", stall_info)
    except CharacteristicEncounter as enc:
        info = dict(stall_info)
        info["characteristic_point"] = ([float(v) for v in enc.point]
                                        if enc.point is not None else None)
        return _fail(space, rec, params, q,
                     "characteristic point encountered", info)


def _waypoints(space, p, q, spacing):
    """Chord points projected onto the surface, ending exactly at q.

    Unprojectable chord points (degenerate gradients deep inside) are
    dropped; the list always ends with q itself.
    """
    dist = float(np.linalg.norm(q - p))
    if not isinstance(space, Hypersurface) or dist <= spacing:
        return [np.asarray(q, dtype=float)]
    count = int(np.ceil(dist / spacing))
    points = []
    for i in range(1, count):
        s = i / count
        chord = (1.0 - s) * p + s * q
        try:
            z = project_to_surface(space, chord)
        except Exception:
            continue
        points.append(z)
    points.append(np.asarray(q, dtype=float))
    return points


def _steering_field(space, index, char_tol):
    """Steering frame field `index` as a chart-coefficient callable (for
    bracket predictions; dual-capable through the pipeline)."""
    man = _manifold_of(space)

    if not isinstance(space, Hypersurface):
        return man.frame[index]

    def fn(coords):
        base = [ex.base_value(c) for c in coords]
        _, drop, order = _frozen_frame_choice(space, base, char_tol)
        _, taus = _normal_pipeline(space, coords, drop, order)
        tau = taus[index]
        out = [0.0] * man.dim
        for i in range(man.rank):
            vals = man.frame[i](coords)
            out = [o + tau[i] * v for o, v in zip(out, vals)]
        return out

    return fn


def _bracket_table(space, x0, params):
    """Chart vectors [T_a, T_b](x0) for all a < b of the steering frame."""
    r = _control_rank(space)
    fields = [_steering_field(space, a, params.char_tol) for a in range(r)]
    table = {}
    for a in range(r):
        for b in range(a + 1, r):
            try:
                table[(a, b)] = np.array(
                    lie_bracket_field(fields[a], fields[b])(list(x0)),
                    dtype=float)
            except Exception:
                continue
    return table


def _steer_try_maneuvers(space, rec, q, params, cost_at, weight, rng,
                         stall_info):
    """Commit the best cost-reducing commutator maneuver.

    The loop leg is sized from the bracket prediction so one maneuver
    cancels (most of) the gap component along its bracket direction:
    eps = sqrt(|gap . B| / |B|^2), clipped to the configured range.
    Candidates are ranked by the cost of the predicted endpoint,
    validated by integration with rollback, and a half-size variant is
    kept in reserve; a seeded random kick perturbs genuine dead ends.
    """
    r = _control_rank(space)
    x0 = rec.current().copy()
    cost0, _, _, basis = cost_at(x0)
    gap = q - x0
    table = _bracket_table(space, x0, params)

    def predicted_cost(new_gap):
        if basis is None:
            return float(np.linalg.norm(new_gap))
        return _gap_cost(new_gap, basis, weight)

    candidates = []
    for (a, b), bracket in table.items():
        norm2 = float(bracket @ bracket)
        if norm2 <= 1e-20:
            continue
        along = float(gap @ bracket) / norm2   # signed multiple of bracket
        if along < 0:
            # reversed leg order realizes the negated bracket
            a, b = b, a
            bracket = -bracket
            along = -along
        eps = min(float(np.sqrt(along)), params.maneuver_epsilon)
        if eps < params.epsilon_floor:
            continue
        for scale in (1.0, 0.5):
            e = eps * scale
            if e < params.epsilon_floor:
                continue
            pred = predicted_cost(gap - e * e * bracket)
            if pred < cost0 - 1e-12:
                candidates.append((pred, e, a, b))
    candidates.sort()
    drop0 = _frame_choice(space, x0, params.char_tol)
    for pred, eps, a, b in candidates[:4]:
        snap = rec.snapshot()
        try:
            for control, duration in _maneuver_schedule(a, b, eps, r):
                times, points = _integrate_segment(
                    space, rec.current(), control, duration, params,
                    drop=drop0)
                rec.extend(times, points, 1.0,
                           Segment(control=np.asarray(control, dtype=float),
                                   duration=float(duration)))
        except (CharacteristicEncounter, StepFailure, ExtensionFailure):
            rec.rollback(snap)
            continue
        realized = cost_at(rec.current())[0]
        # demand a real fraction of the predicted improvement, otherwise
        # micro-accepts burn the time budget without progress
        if cost0 - realized >= 0.25 * (cost0 - pred):
            stall_info["maneuvers"] += 1
            return True
        rec.rollback(snap)
    return False


def _fail(space, rec, params, q, reason, stall_info):
    curve = _finalize(space, rec, params, endpoint_target=q)
    witness = _conserved_ratio_witness(space, curve, q)
    if witness is None:
        reason = reason + " (inconclusive)"
    return Failure(reason=reason,
                   best_distance=float(np.linalg.norm(curve.end - q)),
                   curve=curve, stall=dict(stall_info), witness=witness)


def _conserved_ratio_witness(space, curve, q, tol=1e-6):
    """Detect the planar trap of the 3-dimensional Heisenberg geometry:
    inside {t = 0} every horizontal curve keeps y/x constant, so targets
    on a different ray are unreachable."""
    man = _manifold_of(space)
    if man.heisenberg_n != 1 or not isinstance(space, Hypersurface):
        return None
    pts = curve.points
    if np.max(np.abs(pts[:, 2])) > 1e-6 or abs(q[2]) > 1e-6:
        return None
    x, y = pts[:, 0], pts[:, 1]
    if np.min(np.abs(x)) < 1e-6 or abs(q[0]) < 1e-6:
        return None
    ratios = y / x
    if np.max(np.abs(ratios - ratios[0])) > tol:
        return None
    if abs(q[1] / q[0] - ratios[0]) <= tol:
        return None
    return ("conserved ratio y/x = {:.6g}: horizontal curves in this "
            "surface satisfy y = C x, target ray has y/x = {:.6g}"
            .format(ratios[0], q[1] / q[0]))


# ---------------------------------------------------------------------------
# Horizontality checking


@dataclass(frozen=True)
class HorizontalityReport:
    times: np.ndarray
    residuals: np.ndarray
    max_residual: float


def _fd_velocities(curve):
    """Per-sample finite-difference velocities, stencils confined to one
    segment (velocities jump at control switches).  Uses 4th-order
    centered stencils in segment interiors, lower order near boundaries."""
    times, points = curve.times, curve.points
    n = len(times)
    vel = np.full_like(points, np.nan)
    have = np.zeros(n, dtype=bool)
    for sl in curve.segment_slices():
        a, b = sl.start, sl.stop - 1
        count = b - a + 1
        if count < 2:
            continue
        h = (times[b] - times[a]) / (count - 1)
        for i in range(a, b + 1):
            li, ri = i - a, b - i
            if li >= 2 and ri >= 2:
                v = (points[i - 2] - 8 * points[i - 1]
                     + 8 * points[i + 1] - points[i + 2]) / (12 * h)
            elif li == 0 and ri >= 3:
                v = (-11 * points[i] + 18 * points[i + 1]
                     - 9 * points[i + 2] + 2 * points[i + 3]) / (6 * h)
            elif ri == 0 and li >= 3:
                v = (11 * points[i] - 18 * points[i - 1]
                     + 9 * points[i - 2] - 2 * points[i - 3]) / (6 * h)
            elif li >= 1 and ri >= 2:
                v = (-2 * points[i - 1] - 3 * points[i]
                     + 6 * points[i + 1] - points[i + 2]) / (6 * h)
            elif ri >= 1 and li >= 2:
                v = (2 * points[i + 1] + 3 * points[i]
                     - 6 * points[i - 1] + points[i - 2]) / (6 * h)
            elif li >= 1 and ri >= 1:
                v = (points[i + 1] - points[i - 1]) / (2 * h)
            elif li == 0:
                v = (points[i + 1] - points[i]) / h
            else:
                v = (points[i] - points[i - 1]) / h
            if not have[i]:
                vel[i] = v
                have[i] = True
    return vel, have


def check_horizontality(space, curve, mode="general"):
    """Residual series measuring how horizontal the sampled curve is.

    ``mode="heisenberg"`` uses the closed-form constraint
    2 t' = sum(y_i x_i' - x_i y_i'); ``mode="general"`` measures the
    complement frame components of finite-difference velocities, plus the
    normal component when a surface is supplied.
    """
    man = _manifold_of(space)
    if len(curve.times) < 2:
        return HorizontalityReport(times=curve.times,
                                   residuals=np.zeros(len(curve.times)),
                                   max_residual=0.0)
    vel, have = _fd_velocities(curve)
    n = len(curve.times)
    residuals = np.zeros(n)
    on_surface = isinstance(space, Hypersurface)
    if mode == "heisenberg":
        nH = man.heisenberg_n
        if nH is None:
            raise ValueError("heisenberg mode needs a Heisenberg manifold")
        for i in range(n):
            if not have[i]:
                continue
            pt, v = curve.points[i], vel[i]
            s = 2.0 * v[2 * nH]
            for j in range(nH):
                s -= pt[nH + j] * v[j] - pt[j] * v[nH + j]
            residuals[i] = abs(s)
    elif mode == "general":
        for i in range(n):
            if not have[i]:
                continue
            pt, v = curve.points[i], vel[i]
            comps = man.frame_components(v, pt)
            res = float(np.linalg.norm(comps[man.rank:]))
            if on_surface:
                from .hypersurface import unit_horizontal_normal_components
                try:
                    vn = unit_horizontal_normal_components(space, pt)
                    res = float(np.hypot(res, comps[:man.rank] @ vn))
                except Exception:
                    pass
            residuals[i] = res
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return HorizontalityReport(times=curve.times, residuals=residuals,
                               max_residual=float(np.max(residuals)))


def h1_trap_invariant(curve, plane_tol=1e-6, x_floor=1e-6):
    """Deviation of y/x along a curve in the plane {t = 0} of the
    3-dimensional Heisenberg chart.  NearOrigin if |x| dips below the
    floor (the ratio is then meaningless)."""
    pts = curve.points
    if pts.shape[1] != 3:
        raise ValueError("expected curve samples in a 3-dimensional chart")
    if np.max(np.abs(pts[:, 2])) > plane_tol:
        raise ValueError("curve does not lie in the plane {t = 0}")
    x = pts[:, 0]
    if np.min(np.abs(x)) < x_floor:
        raise NearOrigin(f"|x| fell below {x_floor:g} along the curve")
    ratios = pts[:, 1] / x
    return float(np.max(np.abs(ratios - ratios[0])))
