"""The intrinsic nonholonomic connection on the horizontal bundle.

The connection differentiates horizontal sections along horizontal
directions and is determined by the frame brackets alone:

    D_U V = sum_i U(V^i) X_i + sum_{i,j,l} U^j V^i Gamma_ij^l X_l

with coefficients (all brackets projected to the horizontal bundle,
inner products in the orthonormal frame)

    Gamma_ij^l = -1/2 ( <[X_i,X_j], X_l> + <[X_j,X_l], X_i> + <[X_i,X_l], X_j> ).

This is the unique R-bilinear operator that is function-linear in the
direction, Leibniz in the section, metric compatible, and whose
antisymmetrization recovers the horizontal part of the commutator; it
coincides with the horizontal projection of the Levi-Civita connection of
any metric extension that keeps the complement orthogonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .curves import CurveDiagnostics, HorizontalCurve, Segment
from .errors import SingularFrame, StepFailure
from .manifold import lie_bracket_field

__all__ = [
    "GammaTensor", "HorizontalSection", "AxiomReport",
    "gamma", "covariant_derivative", "covariant_derivative_components",
    "covariant_derivative_along", "horizontal_divergence",
    "riemannian_divergence", "levi_civita", "levi_civita_table",
    "torsion_residual", "verify_axioms", "verify_projection",
    "geodesic_integrate",
]


# ---------------------------------------------------------------------------
# Sections


@dataclass(frozen=True)
class HorizontalSection:
    """Horizontal vector field stored as frame components V^i.

    Components are Exprs over the chart variables, or arbitrary callables
    ``coords -> scalar`` that accept dual numbers (used for sections built
    procedurally, e.g. unit-normal extensions of hypersurfaces).
    """

    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @staticmethod
    def from_strings(sources, variables):
        return HorizontalSection(tuple(ex.parse(s, variables) for s in sources))

    @staticmethod
    def constant(coeffs):
        return HorizontalSection(tuple(ex.const(c) for c in coeffs))

    @staticmethod
    def frame_field(k, i):
        """The section whose components are the i-th unit vector."""
        return HorizontalSection.constant([1.0 if j == i else 0.0 for j in range(k)])

    def value(self, coords):
        return [ex.evaluate(c, coords) for c in self.components]

    def at(self, p):
        return np.array(self.value(list(map(float, p))), dtype=float)

    def chart_field(self, manifold):
        """As a chart-coefficient field, for brackets and flows."""
        fields = manifold.frame
        m = manifold.dim

        def fn(coords):
            comps = self.value(coords)
            out = [0.0] * m
            for i, ci in enumerate(comps):
                vals = fields[i](coords)
                out = [o + ci * v for o, v in zip(out, vals)]
            return out

        return fn

    def chart_vector(self, manifold, p):
        p = list(map(float, p))
        F = manifold.frame_matrix(p)
        comps = self.at(p)
        return F[:, :len(comps)] @ comps

    def scaled_by(self, f):
        """Section with components f * V^i for a scalar Expr/callable f."""
        def make(comp):
            def fn(coords):
                return ex.evaluate(f, coords) * ex.evaluate(comp, coords)
            return fn
        return HorizontalSection(tuple(make(c) for c in self.components))


def _section_directional(section, coords, direction):
    """Derivatives of all components along a chart direction (dual eval)."""
    seeded = [ex.Dual(x, d) for x, d in zip(coords, direction)]
    vals = section.value(seeded)
    return [ex.deriv_part(v) for v in vals]


# ---------------------------------------------------------------------------
# Connection coefficients


@dataclass(frozen=True)
class GammaTensor:
    """Connection coefficients Gamma[i, j, l] at a point.

    Index meaning: D over the direction X_j of the section X_i has
    X_l-component Gamma[i, j, l].  Residuals of the two structural
    identities are computed at construction time:

    * ``zero_residual``       : Gamma[j,i,l] + Gamma[l,i,j] = 0
      (equivalent to metric compatibility),
    * ``commutator_residual`` : Gamma[i,j,l] - Gamma[j,i,l] =
      <[X_j,X_i], X_l>  (horizontal part).
    """

    point: np.ndarray
    values: np.ndarray            # shape (k, k, k)
    zero_residual: float
    commutator_residual: float

    def __getitem__(self, idx):
        return self.values[idx]


def _horizontal_bracket_components(manifold, p):
    """C[a, b, :] = frame components of [X_a, X_b](p), a,b horizontal."""
    k, m = manifold.rank, manifold.dim
    C = np.zeros((k, k, m))
    for a in range(k):
        for b in range(a + 1, k):
            vec = lie_bracket_field(manifold.frame[a], manifold.frame[b])(list(p))
            comps = manifold.frame_components(np.array(vec, dtype=float), p)
            C[a, b] = comps
            C[b, a] = -comps
    return C


def gamma(manifold, p):
    """Connection coefficients of the nonholonomic connection at p."""
    p = np.asarray(p, dtype=float)
    k = manifold.rank
    C = _horizontal_bracket_components(manifold, p)[:, :, :k]
    G = np.zeros((k, k, k))
    for i in range(k):
        for j in range(k):
            for l in range(k):
                G[i, j, l] = -0.5 * (C[i, j, l] + C[j, l, i] + C[i, l, j])
    # antisymmetry in (section, output) with the direction slot fixed
    zero_res = float(np.max(np.abs(G + G.transpose(2, 1, 0))))
    comm = G - G.transpose(1, 0, 2)                      # G[i,j,l] - G[j,i,l]
    want = np.transpose(C, (1, 0, 2))                    # <[X_j, X_i], X_l>
    comm_res = float(np.max(np.abs(comm - want)))
    return GammaTensor(point=p, values=G, zero_residual=zero_res,
                       commutator_residual=comm_res)


# ---------------------------------------------------------------------------
# Covariant derivative


def covariant_derivative_along(manifold, u_comps, V, p, gamma_tensor=None):
    """Frame components of D_u V at p for a horizontal direction u.

    ``u_comps`` are the k frame components of the direction vector at p;
    the connection is function-linear in the direction, so no extension
    of u is needed.
    """
    p = list(map(float, p))
    k = manifold.rank
    u_comps = np.asarray(u_comps, dtype=float)
    F = manifold.frame_matrix(p)
    u_chart = F[:, :k] @ u_comps
    dV = np.array(_section_directional(V, p, u_chart), dtype=float)
    G = (gamma_tensor if gamma_tensor is not None else gamma(manifold, p)).values
    v_comps = V.at(p)
    correction = np.einsum("j,i,ijl->l", u_comps, v_comps, G)
    return dV + correction


def covariant_derivative_components(manifold, U, V, p, gamma_tensor=None):
    """Frame components (length k) of D_U V at p."""
    u_comps = U.at(p)
    return covariant_derivative_along(manifold, u_comps, V, p, gamma_tensor)


def covariant_derivative(manifold, U, V, p, gamma_tensor=None):
    """D_U V at p as a chart vector (horizontal by construction)."""
    comps = covariant_derivative_components(manifold, U, V, p, gamma_tensor)
    F = manifold.frame_matrix(list(map(float, p)))
    return F[:, :manifold.rank] @ comps


def horizontal_divergence(manifold, V, p):
    """sum_i <D_{X_i} V, X_i> at p."""
    p = list(map(float, p))
    k = manifold.rank
    F = manifold.frame_matrix(p)
    G = gamma(manifold, p).values
    v_comps = V.at(p)
    total = 0.0
    for i in range(k):
        dV = _section_directional(V, p, F[:, i])
        total += dV[i] + float(v_comps @ G[:, i, i])
    return float(total)


def riemannian_divergence(manifold, V, p):
    """Full divergence of the horizontal field V for the extension metric."""
    p = list(map(float, p))
    m, k = manifold.dim, manifold.rank
    F = manifold.frame_matrix(p)
    lc = levi_civita_table(manifold, p)
    v = V.at(p)
    total = 0.0
    for a in range(m):
        dV = _section_directional(V, p, F[:, a])
        if a < k:
            total += dV[a]
        total += float(v @ lc[a, :k, a])
    return float(total)


# ---------------------------------------------------------------------------
# Levi-Civita coefficients over the full orthonormal frame


def _full_bracket_components(manifold, p):
    m = manifold.dim
    C = np.zeros((m, m, m))
    for a in range(m):
        for b in range(a + 1, m):
            vec = lie_bracket_field(manifold.frame[a], manifold.frame[b])(list(p))
            comps = manifold.frame_components(np.array(vec, dtype=float), p)
            C[a, b] = comps
            C[b, a] = -comps
    return C


def levi_civita_table(manifold, p):
    """lc[a, b, c] = < nabla_{X_a} X_b , X_c > for the extension metric.

    Computed from the frame brackets by the Koszul formula specialized to
    orthonormal frames:  2 lc(a,b,c) = C(a,b;c) - C(a,c;b) - C(b,c;a).
    """
    p = list(map(float, p))
    C = _full_bracket_components(manifold, p)
    lc = 0.5 * (C - np.einsum("acb->abc", C) - np.einsum("bca->abc", C))
    return lc


def levi_civita(manifold, a, b, c, p):
    """Single coefficient < nabla_{X_a} X_b , X_c > at p (0-based indices)."""
    return float(levi_civita_table(manifold, p)[a, b, c])


def torsion_residual(manifold, p):
    """max |lc(a,b,:) - lc(b,a,:) - C(a,b,:)| over the full frame."""
    p = list(map(float, p))
    C = _full_bracket_components(manifold, p)
    lc = 0.5 * (C - np.einsum("acb->abc", C) - np.einsum("bca->abc", C))
    return float(np.max(np.abs(lc - np.einsum("bac->abc", lc) - C)))


# ---------------------------------------------------------------------------
# Axiom verification


@dataclass(frozen=True)
class AxiomReport:
    compatibility: float
    symmetry: float
    leibniz: float
    linearity: float

    @property
    def max_residual(self):
        return max(self.compatibility, self.symmetry, self.leibniz,
                   self.linearity)

    def as_dict(self):
        return {
            "compatibility": self.compatibility,
            "symmetry": self.symmetry,
            "leibniz": self.leibniz,
            "linearity": self.linearity,
        }


def verify_axioms(manifold, U, V, W, p, gamma_perturbation=None):
    """Residuals of the four defining identities on concrete sections at p.

    * compatibility : U <V,W> = <D_U V, W> + <V, D_U W>
    * symmetry      : D_U V - D_V U = horizontal part of [U, V]
    * leibniz       : D_U (f V) = (U f) V + f D_U V    with f = W^1
    * linearity     : D_{f U} V = f D_U V

    ``gamma_perturbation`` (internal test hook) adds a constant to the
    coefficient tensor before use, to prove the checks can fail.
    """
    p = list(map(float, p))
    k = manifold.rank
    F = manifold.frame_matrix(p)
    G = gamma(manifold, p)
    if gamma_perturbation:
        G = GammaTensor(G.point, G.values + gamma_perturbation,
                        G.zero_residual, G.commutator_residual)

    u = U.at(p)
    v = V.at(p)
    w = W.at(p)
    u_chart = F[:, :k] @ u
    duv = covariant_derivative_components(manifold, U, V, p, G)
    duw = covariant_derivative_components(manifold, U, W, p, G)
    dvu = covariant_derivative_components(manifold, V, U, p, G)

    # compatibility
    def inner_vw(coords):
        vv = V.value(coords)
        ww = W.value(coords)
        total = 0.0
        for a, b in zip(vv, ww):
            total = total + a * b
        return total

    lhs = ex.deriv_part(inner_vw([ex.Dual(x, d) for x, d in zip(p, u_chart)]))
    compat = abs(lhs - float(duv @ w + v @ duw))

    # symmetry
    bracket = lie_bracket_field(U.chart_field(manifold), V.chart_field(manifold))(p)
    bracket_h = manifold.frame_components(np.array(bracket, dtype=float), p)[:k]
    symmetry = float(np.max(np.abs((duv - dvu) - bracket_h)))

    # Leibniz with f = first component of W
    f = W.components[0]
    f_p = float(ex.evaluate(f, p))
    uf = ex.deriv_part(ex.evaluate(f, [ex.Dual(x, d) for x, d in zip(p, u_chart)]))
    d_ufv = covariant_derivative_components(manifold, U, V.scaled_by(f), p, G)
    leibniz = float(np.max(np.abs(d_ufv - (uf * v + f_p * duv))))

    # function-linearity in the direction
    d_fuv = covariant_derivative_components(manifold, U.scaled_by(f), V, p, G)
    linearity = float(np.max(np.abs(d_fuv - f_p * duv)))

    return AxiomReport(compatibility=compat, symmetry=symmetry,
                       leibniz=leibniz, linearity=linearity)


def verify_projection(manifold, U, V, p):
    """|D_U V - horizontal part of nabla_U V| at p (chart norm).

    nabla is assembled from the Levi-Civita coefficient table; horizontal
    sections have vanishing complement components, so nabla_U V =
    sum_i U(V^i) X_i + sum_{j,i} U^j V^i nabla_{X_j} X_i.
    """
    p = list(map(float, p))
    m, k = manifold.dim, manifold.rank
    F = manifold.frame_matrix(p)
    lc = levi_civita_table(manifold, p)
    u = U.at(p)
    v = V.at(p)
    u_chart = F[:, :k] @ u
    dV = np.array(_section_directional(V, p, u_chart), dtype=float)
    nabla_comps = np.zeros(m)
    nabla_comps[:k] += dV
    nabla_comps += np.einsum("j,i,jic->c", u, v, lc[:k, :k, :])
    projected = F[:, :k] @ nabla_comps[:k]
    d_chart = covariant_derivative(manifold, U, V, p)
    return float(np.linalg.norm(d_chart - projected))


# ---------------------------------------------------------------------------
# Nonholonomic geodesics


def geodesic_integrate(manifold, p0, c0, duration, dt):
    """Integrate  x' = sum c^i X_i(x),  c' = - Gamma(x)(c, c)  with RK4.

    The returned curve conserves the frame speed |c| up to integrator
    error whenever the coefficient tensor satisfies its compatibility
    identity; the observed drift is stored in the diagnostics.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    k = manifold.rank
    x = np.asarray(p0, dtype=float).copy()
    c = np.asarray(c0, dtype=float).copy()
    if len(c) != k:
        raise ValueError("initial frame velocity must have length rank")

    steps = max(1, int(round(duration / dt))) if duration > 0 else 0
    h = duration / steps if steps else 0.0

    def rhs(state):
        xx, cc = state[:manifold.dim], state[manifold.dim:]
        try:
            F = manifold.frame_matrix(xx)
            G = gamma(manifold, xx).values
        except SingularFrame as exc:
            raise StepFailure(f"frame degenerated: {exc}") from exc
        dx = F[:, :k] @ cc
        dc = -np.einsum("j,i,ijl->l", cc, cc, G)
        return np.concatenate([dx, dc])

    state = np.concatenate([x, c])
    times = [0.0]
    points = [state[:manifold.dim].copy()]
    speeds = [float(np.linalg.norm(c))]
    for s in range(steps):
        t = s * h
        try:
            k1 = rhs(state)
            k2 = rhs(state + 0.5 * h * k1)
            k3 = rhs(state + 0.5 * h * k2)
            k4 = rhs(state + h * k3)
        except StepFailure as exc:
            raise StepFailure(str(exc), time=t) from exc
        state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        times.append(t + h)
        points.append(state[:manifold.dim].copy())
        speeds.append(float(np.linalg.norm(state[manifold.dim:])))

    speeds = np.array(speeds)
    energy0 = speeds[0] ** 2
    diag = CurveDiagnostics(
        max_energy_drift=float(np.max(np.abs(speeds ** 2 - energy0))) if len(speeds) else 0.0)
    return HorizontalCurve(
        times=np.array(times),
        points=np.array(points),
        speeds=speeds,
        segments=(Segment(control=np.asarray(c0, dtype=float), duration=duration),),
        segment_breaks=(0, len(times) - 1),
        diagnostics=diag,
    )
