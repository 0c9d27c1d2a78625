"""Implicit hypersurfaces in a framed sub-Riemannian manifold.

A hypersurface is the zero set of a scalar chart expression phi.  In the
orthonormal frame all normal data reduces to the frame gradient
(X_1 phi, ..., X_m phi): the unit Riemannian normal has those frame
components (normalized), the horizontal normal keeps the first k of them,
and a point is characteristic exactly when that horizontal part vanishes.

The unit horizontal normal and a horizontal tangent frame extend off the
surface by evaluating the same formulas at nearby points (they are normal
data of the neighboring level sets); those extensions feed the covariant
derivatives behind the second fundamental form and the divergences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .connection import gamma, covariant_derivative_along, levi_civita_table
from .errors import (CharacteristicPoint, ExtensionFailure, NewtonDivergence,
                     NotCarnot, NotOnSurface, NotTangent, ZeroGradient)
from .manifold import Manifold

__all__ = [
    "Hypersurface", "HorizontalTangentFrame", "CurvatureReport",
    "CharacteristicCluster", "gauge_sphere", "coordinate_hyperplane",
    "frame_gradient", "unit_horizontal_normal_components",
    "tangent_frame_sections", "characteristic_ratio_batch",
    "horizontal_normal", "characteristic_ratio", "is_characteristic",
    "find_characteristic_points", "horizontal_tangent_frame",
    "second_fundamental_form", "mean_curvature_divergence_form",
    "tangent_divergence", "surface_divergence", "project_to_surface",
]

DEFAULT_CHAR_TOL = 1e-8
SURFACE_TOL = 1e-8


@dataclass(frozen=True)
class Hypersurface:
    phi: ex.Expr
    manifold: Manifold
    name: str = "surface"

    @staticmethod
    def from_string(source, manifold, name="surface"):
        return Hypersurface(ex.parse(source, manifold.variables), manifold, name)

    def phi_at(self, p):
        return float(ex.evaluate(self.phi, [float(v) for v in p]))

    def phi_and_gradient(self, p):
        """(phi, chart gradient) at a float point, one compiled call."""
        fn = self.__dict__.get("_phi_grad_fn")
        if fn is None:
            nodes = [self.phi] + [ex.differentiate(self.phi, b)
                                  for b in range(self.manifold.dim)]
            raw = ex.compile_many(nodes)

            def fn(pt):
                vals = raw([float(v) for v in pt])
                return float(vals[0]), np.array(vals[1:], dtype=float)

            object.__setattr__(self, "_phi_grad_fn", fn)
        return fn(p)


def gauge_sphere(manifold, radius=1.0, name="gauge-sphere"):
    """Unit set of the gauge norm ((|x|^2+|y|^2)^2 + t^2)^(1/4) on a
    Heisenberg manifold (level written without the fourth root)."""
    n = manifold.heisenberg_n
    if n is None:
        raise ValueError("gauge_sphere needs a Heisenberg manifold")
    sq = None
    for j in range(2 * n):
        term = ex.pow_const(ex.var(j, manifold.variables[j]), 2)
        sq = term if sq is None else ex.add(sq, term)
    phi = ex.add(ex.pow_const(sq, 2),
                 ex.pow_const(ex.var(2 * n, manifold.variables[2 * n]), 2))
    phi = ex.sub(phi, ex.const(float(radius) ** 4))
    return Hypersurface(phi, manifold, name)


def coordinate_hyperplane(manifold, variable, level=0.0, name=None):
    """The hyperplane {variable = level}."""
    idx = list(manifold.variables).index(variable)
    phi = ex.sub(ex.var(idx, variable), ex.const(level))
    return Hypersurface(phi, manifold, name or f"{variable}={level}")


# ---------------------------------------------------------------------------
# Normal data (dual-capable pipeline)


def _chart_gradient(surface, coords):
    """All chart partials of phi at coords; entries may be duals/arrays.

    Every coordinate is lifted to the new dual layer (inactive slots with
    zero derivative): lifting only the active slot would confuse the new
    layer with dual layers already present in the incoming coords.  For
    plain float coords a single evaluation with a vector-valued seed
    produces the whole gradient at once.
    """
    m = surface.manifold.dim
    if all(isinstance(c, float) for c in coords):
        eye = np.eye(m)
        seeded = [ex.Dual(c, eye[b]) for b, c in enumerate(coords)]
        d = ex.deriv_part(ex.evaluate(surface.phi, seeded))
        if isinstance(d, np.ndarray):
            return list(np.broadcast_to(d, (m,)).astype(float))
        return [0.0] * m
    out = []
    for b in range(m):
        seeded = [ex.Dual(c, 1.0 if a == b else 0.0)
                  for a, c in enumerate(coords)]
        out.append(ex.deriv_part(ex.evaluate(surface.phi, seeded)))
    return out


def _frame_gradient(surface, coords, count=None):
    """g_a = X_a phi at coords for the first *count* frame fields
    (all of them by default); dual-capable."""
    man = surface.manifold
    grad = _chart_gradient(surface, coords)
    fields = man.frame if count is None else man.frame[:count]
    out = []
    for f in fields:
        comps = f(coords)
        total = 0.0
        for c, g in zip(comps, grad):
            total = total + c * g
        out.append(total)
    return out


def frame_gradient(surface, p):
    """(X_1 phi, ..., X_m phi) at p as a float vector."""
    _, grad = surface.phi_and_gradient(p)
    F = surface.manifold.frame_matrix(p)
    return F.T @ grad


def horizontal_normal(surface, p, zero_tol=1e-14):
    """Horizontal part of the unit Riemannian normal, and its magnitude.

    Returns ``(n_h, ratio)`` where ``n_h`` is a chart vector and ``ratio``
    is |n_h| (between 0 and 1, the cosine between the Riemannian normal
    and the horizontal bundle).  Raises ZeroGradient where the surface is
    not smooth.
    """
    man = surface.manifold
    p = list(map(float, p))
    g = frame_gradient(surface, p)
    full = float(np.linalg.norm(g))
    if full <= zero_tol:
        raise ZeroGradient(f"frame gradient vanishes at {p}")
    k = man.rank
    ratio = float(np.linalg.norm(g[:k]) / full)
    F = man.frame_matrix(p)
    n_h = F[:, :k] @ (g[:k] / full)
    return n_h, ratio


def characteristic_ratio(surface, p):
    return horizontal_normal(surface, p)[1]


def is_characteristic(surface, p, tol=DEFAULT_CHAR_TOL, surface_tol=SURFACE_TOL):
    """True iff the horizontal normal fraction at p is below tol.

    The point must lie on the surface (|phi| within ``surface_tol`` of
    zero after gradient scaling), otherwise NotOnSurface is raised.
    """
    p = list(map(float, p))
    value = surface.phi_at(p)
    g = frame_gradient(surface, p)
    scale = max(1.0, float(np.linalg.norm(g)))
    if abs(value) > surface_tol * scale:
        raise NotOnSurface(f"|phi({p})| = {abs(value):.3e}")
    return characteristic_ratio(surface, p) <= tol


def unit_horizontal_normal_components(surface, p, char_tol=DEFAULT_CHAR_TOL):
    """Frame components (length k) of the unit horizontal normal at p."""
    man = surface.manifold
    g = frame_gradient(surface, p)
    k = man.rank
    full = float(np.linalg.norm(g))
    if full == 0.0:
        raise ZeroGradient(f"frame gradient vanishes at {list(p)}")
    h = float(np.linalg.norm(g[:k]))
    if h <= char_tol * full:
        raise CharacteristicPoint(f"characteristic point {list(p)}")
    return g[:k] / h


# ---------------------------------------------------------------------------
# Horizontal tangent frame


@dataclass(frozen=True)
class HorizontalTangentFrame:
    point: np.ndarray
    normal_components: np.ndarray     # (k,) frame components of the unit normal
    normal_chart: np.ndarray          # (m,) chart vector
    tangent_components: np.ndarray    # (k-1, k)
    tangent_chart: np.ndarray         # (k-1, m)
    dropped_index: int
    order: tuple


def _gram_schmidt_tangent(v, drop, order, eps=1e-12):
    """Orthonormal horizontal tangent basis from candidates e_i - v_i v.

    All scalar arithmetic; entries may be dual numbers.  The candidate
    list and the processing order are fixed by the caller so that the
    construction is a smooth function of the base point.
    """
    k = len(v)
    taus = []
    for i in order:
        w = [-(v[i]) * v[j] for j in range(k)]
        w[i] = w[i] + 1.0
        for tau in taus:
            dot = 0.0
            for a in range(k):
                dot = dot + w[a] * tau[a]
            w = [w[a] - dot * tau[a] for a in range(k)]
        norm_sq = 0.0
        for a in range(k):
            norm_sq = norm_sq + w[a] * w[a]
        base = ex.base_value(norm_sq)
        if base <= eps:
            raise ExtensionFailure(
                f"tangent orthogonalization degenerated on index {i}")
        inv = 1.0 / ex.d_sqrt(norm_sq)
        taus.append([w[a] * inv for a in range(k)])
    return taus


def _normal_pipeline(surface, coords, drop, order, char_tol=DEFAULT_CHAR_TOL):
    """Unit horizontal normal and tangent frame components at coords.

    Dual-capable; ``drop`` and ``order`` must be frozen from the base
    point so that the result is a smooth function of coords.
    """
    man = surface.manifold
    k = man.rank
    g = _frame_gradient(surface, coords, count=k)
    norm_sq = 0.0
    for a in range(k):
        norm_sq = norm_sq + g[a] * g[a]
    inv = 1.0 / ex.d_sqrt(norm_sq)
    v = [g[a] * inv for a in range(k)]
    taus = _gram_schmidt_tangent(v, drop, order)
    return v, taus


def _frozen_frame_choice(surface, p, char_tol):
    v = unit_horizontal_normal_components(surface, p, char_tol)
    drop = int(np.argmax(np.abs(v)))
    order = tuple(i for i in range(len(v)) if i != drop)
    return v, drop, order


def horizontal_tangent_frame(surface, p, char_tol=DEFAULT_CHAR_TOL):
    """Unit horizontal normal plus an orthonormal horizontal tangent basis.

    Deterministic: the frame index with the largest normal component is
    dropped and the remaining candidates are orthogonalized in index
    order.  Raises CharacteristicPoint when the normal fraction is below
    ``char_tol``.
    """
    man = surface.manifold
    p = np.asarray(p, dtype=float)
    _, drop, order = _frozen_frame_choice(surface, p, char_tol)
    v, taus = _normal_pipeline(surface, list(p), drop, order, char_tol)
    v = np.array(v, dtype=float)
    taus = np.array(taus, dtype=float)
    F = man.frame_matrix(p)
    Fh = F[:, :man.rank]
    return HorizontalTangentFrame(
        point=p,
        normal_components=v,
        normal_chart=Fh @ v,
        tangent_components=taus,
        tangent_chart=taus @ Fh.T,
        dropped_index=drop,
        order=order,
    )


class _NormalSection:
    """Unit-horizontal-normal extension as a frame-component section."""

    def __init__(self, surface, drop, order):
        self.surface = surface
        self.drop = drop
        self.order = order

    def value(self, coords):
        v, _ = _normal_pipeline(self.surface, coords, self.drop, self.order)
        return v

    def at(self, p):
        return np.array(self.value(list(map(float, p))), dtype=float)


class _TangentSection:
    """One horizontal tangent frame field of the pipeline extension."""

    def __init__(self, surface, index, drop, order):
        self.surface = surface
        self.index = index
        self.drop = drop
        self.order = order

    def value(self, coords):
        _, taus = _normal_pipeline(self.surface, coords, self.drop, self.order)
        return taus[self.index]

    def at(self, p):
        return np.array(self.value(list(map(float, p))), dtype=float)


def tangent_frame_sections(surface, p, char_tol=DEFAULT_CHAR_TOL):
    """Ambient sections extending the unit normal and the tangent frame."""
    _, drop, order = _frozen_frame_choice(surface, p, char_tol)
    normal = _NormalSection(surface, drop, order)
    taus = [_TangentSection(surface, i, drop, order)
            for i in range(len(order))]
    return normal, taus


# ---------------------------------------------------------------------------
# Curvature


@dataclass(frozen=True)
class CurvatureReport:
    point: np.ndarray
    h: np.ndarray                  # (k-1, k-1) scalar second fundamental form
    principal_curvatures: np.ndarray
    mean_curvature: float
    gaussian_curvature: float
    asymmetry: float               # max |h - h^T|; see notes in the README

    def as_dict(self):
        return {
            "h": self.h.tolist(),
            "principal_curvatures": self.principal_curvatures.tolist(),
            "mean_curvature": self.mean_curvature,
            "gaussian_curvature": self.gaussian_curvature,
            "asymmetry": self.asymmetry,
        }


def second_fundamental_form(surface, p, char_tol=DEFAULT_CHAR_TOL):
    """Scalar second fundamental form of the horizontal tangent frame.

    Entries are h[a, b] = -< D_{tau_a} tau_b , V > = < D_{tau_a} V , tau_b >,
    oriented so that on a Carnot group the trace equals the divergence
    form of the mean curvature.  Principal curvatures come from the
    symmetrized matrix; the asymmetry of the raw matrix is reported.
    """
    man = surface.manifold
    p = np.asarray(p, dtype=float)
    frame = horizontal_tangent_frame(surface, p, char_tol)
    normal, taus = tangent_frame_sections(surface, p, char_tol)
    G = gamma(man, p)
    r = len(taus)
    h = np.zeros((r, r))
    v = frame.normal_components
    for a in range(r):
        u_comps = frame.tangent_components[a]
        for b in range(r):
            d = covariant_derivative_along(man, u_comps, taus[b], p, G)
            h[a, b] = -float(d @ v)
    sym = 0.5 * (h + h.T)
    kappas = np.linalg.eigvalsh(sym)
    return CurvatureReport(
        point=p,
        h=h,
        principal_curvatures=kappas,
        mean_curvature=float(np.trace(h)),
        gaussian_curvature=float(np.prod(kappas)),
        asymmetry=float(np.max(np.abs(h - h.T))),
    )


def mean_curvature_divergence_form(surface, p, char_tol=DEFAULT_CHAR_TOL):
    """sum_i X_i(V^i) at p, valid on Carnot groups only.

    V is the unit horizontal normal extended off the surface by its
    defining formula; on a Carnot frame this equals the trace of the
    second fundamental form.
    """
    man = surface.manifold
    if not man.carnot:
        raise NotCarnot(f"{man.name} is not certified as a Carnot group")
    p = np.asarray(p, dtype=float)
    _, drop, order = _frozen_frame_choice(surface, p, char_tol)
    F = man.frame_matrix(p)
    k = man.rank
    total = 0.0
    for i in range(k):
        seeded = [ex.Dual(x, d) for x, d in zip(p, F[:, i])]
        v, _ = _normal_pipeline(surface, seeded, drop, order)
        total += ex.deriv_part(v[i])
    return float(total)


# ---------------------------------------------------------------------------
# Divergences on the surface


def tangent_divergence(surface, Y, p, char_tol=DEFAULT_CHAR_TOL,
                       tangency_tol=1e-7):
    """sum_a < D_{tau_a} Y , tau_a > over the horizontal tangent frame.

    Y must be a horizontal section tangent to the surface at p
    (NotTangent otherwise).
    """
    man = surface.manifold
    p = np.asarray(p, dtype=float)
    frame = horizontal_tangent_frame(surface, p, char_tol)
    y = Y.at(p)
    scale = max(1.0, float(np.linalg.norm(y)))
    if abs(float(y @ frame.normal_components)) > tangency_tol * scale:
        raise NotTangent(f"section is not tangent to the surface at {list(p)}")
    G = gamma(man, p)
    total = 0.0
    for a in range(len(frame.tangent_components)):
        u = frame.tangent_components[a]
        d = covariant_derivative_along(man, u, Y, p, G)
        total += float(d @ u)
    return float(total)


def surface_divergence(surface, Y, p):
    """Riemannian divergence of the tangent field Y within the surface.

    Computed as the trace of u -> nabla_u Y over a full orthonormal basis
    of the tangent space, with nabla assembled from the Levi-Civita
    coefficient table of the extension metric.
    """
    man = surface.manifold
    p = np.asarray(p, dtype=float)
    m, k = man.dim, man.rank
    g = frame_gradient(surface, p)
    full = float(np.linalg.norm(g))
    if full == 0.0:
        raise ZeroGradient(f"frame gradient vanishes at {list(p)}")
    n = g / full
    basis = _orthonormal_complement(n)
    F = man.frame_matrix(p)
    lc = levi_civita_table(man, p)
    y = np.zeros(m)
    y[:k] = Y.at(p)
    total = 0.0
    for e in basis:
        chart = F @ e
        seeded = [ex.Dual(x, d) for x, d in zip(p, chart)]
        dy = np.zeros(m)
        dy[:k] = [ex.deriv_part(val) for val in Y.value(seeded)]
        nabla = dy + np.einsum("a,b,abc->c", e, y, lc)
        total += float(nabla @ e)
    return float(total)


def _orthonormal_complement(n, eps=1e-12):
    """Deterministic orthonormal basis of the hyperplane orthogonal to n."""
    m = len(n)
    drop = int(np.argmax(np.abs(n)))
    basis = []
    for i in range(m):
        if i == drop:
            continue
        w = -n[i] * n
        w[i] += 1.0
        for b in basis:
            w = w - (w @ b) * b
        norm = np.linalg.norm(w)
        if norm <= eps:
            raise ExtensionFailure("tangent basis degenerated")
        basis.append(w / norm)
    return basis


# ---------------------------------------------------------------------------
# Surface projection and characteristic scan


def project_to_surface(surface, p, tol=1e-12, max_iter=50):
    """Newton step along the chart gradient of phi until |phi| < tol."""
    x = np.asarray(p, dtype=float).copy()
    phi_fn = ex.compiled(surface.phi)
    if abs(float(phi_fn(list(x)))) < tol:
        return x
    for _ in range(max_iter):
        value, grad = surface.phi_and_gradient(x)
        if abs(value) < tol:
            return x
        denom = float(grad @ grad)
        if denom == 0.0:
            raise NewtonDivergence(f"zero chart gradient at {list(x)}")
        x = x - value * grad / denom
    raise NewtonDivergence(
        f"projection did not converge after {max_iter} iterations")


@dataclass(frozen=True)
class CharacteristicCluster:
    point: np.ndarray
    ratio: float
    objective: float
    members: int


def find_characteristic_points(surface, grid=10_000, tol=1e-6,
                               cluster_radius=1e-3, max_iter=40,
                               surface_guard=1e-10):
    """Grid-seeded search for characteristic points on the surface.

    Every seed of a product grid over the domain box is projected onto
    the surface and driven down the objective  sum_i (X_i phi)^2  by a
    Gauss-Newton iteration constrained to the surface.  Converged points
    with objective below tol^2 are merged into clusters by proximity.
    An empty result is a valid outcome (noncharacteristic surface).
    """
    man = surface.manifold
    m = man.dim
    seeds = _grid_seeds(man.domain, grid)
    x, ok = _project_batch(surface, seeds)
    x = x[ok]
    if len(x) == 0:
        return []
    for _ in range(max_iter):
        r, J = _residual_jacobian_batch(surface, x)
        grad = _chart_gradient_batch(surface, x)
        norms = np.linalg.norm(grad, axis=1, keepdims=True)
        good = norms[:, 0] > surface_guard
        x, r, J, grad, norms = x[good], r[good], J[good], grad[good], norms[good]
        if len(x) == 0:
            return []
        n_hat = grad / norms
        P = np.eye(m)[None, :, :] - np.einsum("na,nb->nab", n_hat, n_hat)
        A = np.einsum("nia,nib->nab", J, J)
        gvec = np.einsum("nia,ni->na", J, r)
        PAP = np.einsum("nab,nbc,ncd->nad", P, A, P)
        reg = np.einsum("na,nb->nab", n_hat, n_hat) + 1e-12 * np.eye(m)[None]
        rhs = -np.einsum("nab,nb->na", P, gvec)
        d = np.linalg.solve(PAP + reg, rhs[..., None])[..., 0]
        step = np.linalg.norm(d, axis=1)
        cap = 0.5
        big = step > cap
        d[big] *= (cap / step[big])[:, None]
        x = x + d
        x, ok = _project_batch(surface, x)
        x = x[ok]
        if len(x) == 0:
            return []
        if np.max(step[ok] if len(step) == len(ok) else step) < 1e-14:
            break
    r, _ = _residual_jacobian_batch(surface, x)
    psi = np.einsum("ni,ni->n", r, r)
    keep = psi < tol * tol
    return _cluster(surface, x[keep], psi[keep], cluster_radius)


def _grid_seeds(domain, grid):
    m = len(domain)
    if isinstance(grid, int):
        per = max(2, int(np.ceil(grid ** (1.0 / m))))
        counts = [per] * m
        total = grid
    else:
        counts = [int(c) for c in grid]
        total = int(np.prod(counts))
    axes = [np.linspace(lo, hi, c) for (lo, hi), c in zip(domain, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    return pts[:total]


def _project_batch(surface, x, tol=1e-12, iters=60):
    x = np.asarray(x, dtype=float).copy()
    ok = np.ones(len(x), dtype=bool)
    for _ in range(iters):
        vals = _phi_batch(surface, x)
        active = ok & (np.abs(vals) >= tol)
        if not np.any(active):
            break
        grad = _chart_gradient_batch(surface, x[active])
        denom = np.einsum("na,na->n", grad, grad)
        dead = denom < 1e-300
        step = np.zeros_like(grad)
        nz = ~dead
        step[nz] = (vals[active][nz] / denom[nz])[:, None] * grad[nz]
        xa = x[active]
        xa[nz] -= step[nz]
        x[active] = xa
        if np.any(dead):
            idx = np.where(active)[0][dead]
            ok[idx] = False
    vals = _phi_batch(surface, x)
    ok &= np.abs(vals) < 1e-9
    ok &= np.all(np.isfinite(x), axis=1)
    return x, ok


def _phi_batch(surface, x):
    cols = [x[:, b] for b in range(x.shape[1])]
    out = ex.evaluate(surface.phi, cols)
    return np.broadcast_to(np.asarray(out, dtype=float), (len(x),)).copy()


def _chart_gradient_batch(surface, x):
    n, m = x.shape
    seeds = np.eye(m)[:, :, None]          # (m, m, 1), broadcasts against (n,)
    cols = [ex.Dual(x[:, b], seeds[b]) for b in range(m)]
    d = ex.deriv_part(ex.evaluate(surface.phi, cols))
    if not isinstance(d, np.ndarray):
        return np.zeros((n, m))
    return np.broadcast_to(d, (m, n)).T.astype(float)


def _frame_gradient_batch(surface, x):
    """g[n, a] = (X_a phi)(x_n) for the horizontal fields only."""
    man = surface.manifold
    n, m = x.shape
    grad = _chart_gradient_batch(surface, x)
    out = np.zeros((n, man.rank))
    cols = [x[:, c] for c in range(m)]
    for a in range(man.rank):
        comps = man.frame[a](cols)
        acc = np.zeros(n)
        for b in range(m):
            acc += np.broadcast_to(np.asarray(comps[b], dtype=float), (n,)) * grad[:, b]
        out[:, a] = acc
    return out


def characteristic_ratio_batch(surface, x):
    man = surface.manifold
    n, m = x.shape
    grad_h = _frame_gradient_batch(surface, x)
    grad = _chart_gradient_batch(surface, x)
    comp = np.zeros((n, m - man.rank))
    cols = [x[:, c] for c in range(m)]
    for a in range(man.rank, m):
        comps = man.frame[a](cols)
        acc = np.zeros(n)
        for b in range(m):
            acc += np.broadcast_to(np.asarray(comps[b], dtype=float), (n,)) * grad[:, b]
        comp[:, a - man.rank] = acc
    h = np.linalg.norm(grad_h, axis=1)
    full = np.sqrt(h ** 2 + np.einsum("na,na->n", comp, comp))
    return h / np.maximum(full, 1e-300)


def _residual_jacobian_batch(surface, x):
    """Residuals g_i = X_i phi and their chart Jacobian, batched.

    The Jacobian column for coordinate c is one dual evaluation of the
    whole frame-gradient pipeline over the batch (nested duals inside for
    the chart gradient of phi).
    """
    man = surface.manifold
    n, m = x.shape
    k = man.rank
    r = _frame_gradient_batch(surface, x)
    J = np.zeros((n, k, m))
    ones = np.ones(n)
    for c in range(m):
        cols = [ex.Dual(x[:, b], ones) if b == c else x[:, b] for b in range(m)]
        gvals = _frame_gradient(surface, cols, count=k)
        for i in range(k):
            J[:, i, c] = np.broadcast_to(
                np.asarray(ex.deriv_part(gvals[i]), dtype=float), (n,))
    return r, J


def _cluster(surface, points, objectives, radius):
    order = np.argsort(objectives)
    reps = []
    for idx in order:
        p = points[idx]
        placed = False
        for rep in reps:
            if np.linalg.norm(p - rep["point"]) <= radius:
                rep["members"] += 1
                placed = True
                break
        if not placed:
            reps.append({"point": p.copy(), "objective": float(objectives[idx]),
                         "members": 1})
    out = []
    for rep in reps:
        try:
            ratio = characteristic_ratio(surface, rep["point"])
        except ZeroGradient:
            ratio = 0.0
        out.append(CharacteristicCluster(
            point=rep["point"], ratio=ratio,
            objective=rep["objective"], members=rep["members"]))
    out.sort(key=lambda c: tuple(np.round(c.point, 9)))
    return out
