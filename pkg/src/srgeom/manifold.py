"""Sub-Riemannian manifolds presented by a global orthonormal frame.

A manifold here is a single chart (a box in R^m) carrying an ordered frame
of m vector fields.  The first k fields span the horizontal bundle and are
declared orthonormal for the sub-Riemannian metric; the remaining m-k
fields span the chosen complement and are declared orthonormal for the
extension metric.  All metric quantities therefore reduce to frame
components, obtained by solving the frame matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import expr as ex
from .errors import (DomainError, GradingViolation, JacobiViolation,
                     NotHorizontal, SingularFrame)

__all__ = [
    "VectorField", "Manifold", "GrowthVector",
    "lie_bracket", "lie_bracket_field", "frame_components",
    "horizontal_projection", "growth_vector",
    "make_heisenberg", "make_carnot", "rotate_horizontal_frame",
    "contact_curvature_form", "contact_nondegeneracy",
]

CONDITION_LIMIT = 1e12
DEFAULT_RANK_TOL = 1e-9


@dataclass(frozen=True)
class VectorField:
    """Vector field given by chart components (coefficients of d/dx^a)."""

    coefficients: tuple

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(self.coefficients))

    def __call__(self, coords):
        return [ex.evaluate(c, coords) for c in self.coefficients]

    def at(self, p):
        return np.array(self(list(p)), dtype=float)

    @staticmethod
    def from_strings(sources, variables):
        return VectorField(tuple(ex.parse(s, variables) for s in sources))


def _field_call(f, coords):
    # f is a VectorField or any callable coords -> list of scalars
    return f(coords)


def _field_directional(f, coords, direction):
    """Components of (direction . nabla) f at coords; all dual-capable."""
    seeded = [ex.Dual(x, d) for x, d in zip(coords, direction)]
    vals = _field_call(f, seeded)
    return [ex.deriv_part(v) for v in vals]


def lie_bracket_field(f, g):
    """The commutator [f, g] as an evaluable field.

    Works for Expr-backed fields and for fields that are themselves
    brackets; each nesting adds one dual layer to the evaluation.
    """

    def bracket(coords):
        fv = _field_call(f, coords)
        gv = _field_call(g, coords)
        dg = _field_directional(g, coords, fv)
        df = _field_directional(f, coords, gv)
        return [a - b for a, b in zip(dg, df)]

    return bracket


def lie_bracket(f, g, p):
    """[f, g] evaluated at the point p, as a chart vector."""
    return np.array(lie_bracket_field(f, g)(list(map(float, p))), dtype=float)


@dataclass(frozen=True)
class GrowthVector:
    """Dimensions of the bracket flag L_1 subset L_2 subset ... at a point."""

    dims: tuple
    degree: int | None   # first depth reaching the chart dimension, or None
    depth_searched: int

    @property
    def full(self):
        return self.degree is not None

    def __str__(self):
        if self.full:
            return f"{list(self.dims)} (degree {self.degree})"
        return f"{list(self.dims)} (not full by depth {self.depth_searched})"


@dataclass(frozen=True)
class Manifold:
    name: str
    dim: int
    rank: int
    variables: tuple
    frame: tuple            # m VectorFields; first `rank` horizontal
    domain: tuple           # m pairs (lo, hi)
    contact_form: tuple | None = None   # m Exprs, or None
    carnot: bool = False
    heisenberg_n: int | None = None
    structure_constants: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (0 < self.rank < self.dim):
            raise ValueError("need 0 < rank < dim")
        if len(self.frame) != self.dim:
            raise ValueError("frame must contain dim fields")
        for f in self.frame:
            if len(f.coefficients) != self.dim:
                raise ValueError("every frame field needs dim coefficients")
        if len(self.domain) != self.dim:
            raise ValueError("domain box must have dim intervals")

    # -- frame linear algebra -------------------------------------------------

    def frame_matrix(self, p):
        """Matrix whose column a is frame field a evaluated at p."""
        fn = self.__dict__.get("_frame_matrix_fn")
        if fn is None:
            fn = self._build_frame_matrix_fn()
            object.__setattr__(self, "_frame_matrix_fn", fn)
        return fn(p)

    def _build_frame_matrix_fn(self):
        nodes = [c for f in self.frame for c in f.coefficients]
        if all(isinstance(c, ex.Expr) for c in nodes):
            raw = ex.compile_many(nodes)
            m = self.dim

            def fn(p):
                vals = raw([float(v) for v in p])
                return np.array(vals, dtype=float).reshape(m, m).T

            return fn

        def fn(p):
            return np.column_stack([f.at(p) for f in self.frame])

        return fn

    def frame_components(self, v, p):
        return frame_components(v, self, p)

    def horizontal_projection(self, v, p):
        return horizontal_projection(v, self, p)

    def g_inner(self, u, v, p):
        """Inner product of tangent vectors for the orthogonal extension."""
        cu = self.frame_components(u, p)
        cv = self.frame_components(v, p)
        return float(cu @ cv)

    def gc_inner(self, u, v, p, tol=1e-9):
        """Sub-Riemannian inner product; u, v must be horizontal at p."""
        cu = self.frame_components(u, p)
        cv = self.frame_components(v, p)
        k = self.rank
        for c, w in ((cu, u), (cv, v)):
            tail = np.linalg.norm(c[k:])
            if tail > tol * max(1.0, np.linalg.norm(c)):
                raise NotHorizontal(f"vector {w} is not horizontal at {p}")
        return float(cu[:k] @ cv[:k])

    def contains(self, p):
        return all(lo <= x <= hi for x, (lo, hi) in zip(p, self.domain))

    def center(self):
        return np.array([(lo + hi) / 2.0 for lo, hi in self.domain])

    def sample_points(self, count, rng, margin=0.0):
        lo = np.array([a for a, _ in self.domain])
        hi = np.array([b for _, b in self.domain])
        span = hi - lo
        return rng.uniform(lo + margin * span, hi - margin * span,
                           size=(count, self.dim))


def frame_components(v, manifold, p):
    """Solve F(p) c = v; raises SingularFrame on ill-conditioned frames."""
    F = manifold.frame_matrix(p)
    cond = np.linalg.cond(F)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularFrame(f"frame condition number {cond:.3e} at {list(p)}")
    return np.linalg.solve(F, np.asarray(v, dtype=float))


def horizontal_projection(v, manifold, p):
    """Projection of v onto the horizontal bundle at p (chart vector)."""
    c = frame_components(v, manifold, p)
    F = manifold.frame_matrix(p)
    k = manifold.rank
    return F[:, :k] @ c[:k]


# ---------------------------------------------------------------------------
# Growth vector / Chow condition


def growth_vector(manifold, p, max_depth=6, rank_tol=DEFAULT_RANK_TOL):
    """Span dimensions of iterated brackets of the horizontal frame at p.

    Depth-one fields are the horizontal frame fields; depth d+1 adds all
    brackets of horizontal fields with depth-d fields.  Ranks use singular
    values relative to the largest one.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    p = list(map(float, p))
    k, m = manifold.rank, manifold.dim
    generators = list(manifold.frame[:k])
    level = list(generators)
    vectors = [np.array(f(p), dtype=float) for f in level]
    dims = []
    degree = None
    for depth in range(1, max_depth + 1):
        if depth > 1:
            new_level = []
            for g in generators:
                for h in level:
                    new_level.append(lie_bracket_field(g, h))
            level = new_level
            vectors.extend(np.array(f(p), dtype=float) for f in level)
        dim = _span_dim(vectors, rank_tol)
        dims.append(dim)
        if dim == m:
            degree = depth
            break
        # NB: a stalled dimension cannot end the search early; the flag can
        # stall at one depth and grow at the next (Martinet at x = 0).
    return GrowthVector(tuple(dims), degree, len(dims))


def _span_dim(vectors, rank_tol):
    A = np.array(vectors, dtype=float)
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


# ---------------------------------------------------------------------------
# Built-in constructors


def _default_box(m, half=5.0):
    return tuple((-half, half) for _ in range(m))


def make_heisenberg(n, box_half=5.0):
    """Heisenberg group of dimension 2n+1 with its standard frame.

    Chart variables x1..xn, y1..yn, t.  The horizontal frame fields are
    d/dx_j + 2 y_j d/dt and d/dy_j - 2 x_j d/dt; the complement field is
    d/dt.  All nontrivial commutators are [X_j, X_{n+j}] = -4 d/dt.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    m = 2 * n + 1
    variables = tuple([f"x{j+1}" for j in range(n)]
                      + [f"y{j+1}" for j in range(n)] + ["t"])
    zero, one = ex.const(0.0), ex.const(1.0)
    fields = []
    for j in range(n):
        coeffs = [zero] * m
        coeffs[j] = one
        coeffs[m - 1] = ex.mul(ex.const(2.0), ex.var(n + j, variables[n + j]))
        fields.append(VectorField(tuple(coeffs)))
    for j in range(n):
        coeffs = [zero] * m
        coeffs[n + j] = one
        coeffs[m - 1] = ex.mul(ex.const(-2.0), ex.var(j, variables[j]))
        fields.append(VectorField(tuple(coeffs)))
    coeffs = [zero] * m
    coeffs[m - 1] = one
    fields.append(VectorField(tuple(coeffs)))

    # contact form: (1/4) dt + (1/2) sum(x_i dy_i - y_i dx_i)
    eta = []
    for j in range(n):
        eta.append(ex.mul(ex.const(-0.5), ex.var(n + j, variables[n + j])))
    for j in range(n):
        eta.append(ex.mul(ex.const(0.5), ex.var(j, variables[j])))
    eta.append(ex.const(0.25))

    return Manifold(
        name=f"heisenberg-{n}",
        dim=m,
        rank=2 * n,
        variables=variables,
        frame=tuple(fields),
        domain=_default_box(m, box_half),
        contact_form=tuple(eta),
        carnot=True,
        heisenberg_n=n,
    )


# Taylor coefficients of z / (1 - e^(-z)); the series that expresses a
# left-invariant field in exponential coordinates through iterated adjoints.
_ADJOINT_SERIES = [
    Fraction(1), Fraction(1, 2), Fraction(1, 12), Fraction(0),
    Fraction(-1, 720), Fraction(0), Fraction(1, 30240), Fraction(0),
    Fraction(-1, 1209600), Fraction(0),
]


def make_carnot(structure_constants, grading, name="carnot", box_half=5.0,
                tol=1e-10):
    """Carnot group from structure constants in exponential coordinates.

    Parameters
    ----------
    structure_constants : mapping or iterable
        Either ``{(i, j): {l: c}}`` or an iterable of ``(i, j, l, c)``
        quadruples (0-based indices) meaning ``[e_i, e_j] = sum c e_l``.
        Antisymmetric counterparts are filled in automatically.
    grading : sequence of int
        Layer dimensions ``[dim V_1, dim V_2, ...]``; the basis is ordered
        layer by layer and the horizontal rank is ``dim V_1``.

    The frame consists of the left-invariant fields of the group whose
    algebra has these constants, written in exponential coordinates of the
    first kind (the chart in which the Heisenberg presentation takes its
    familiar polynomial form).  Grading relations and the Jacobi identity
    are validated numerically before any field is built.
    """
    grading = [int(d) for d in grading]
    if not grading or any(d <= 0 for d in grading):
        raise ValueError("grading must be positive layer dimensions")
    n = sum(grading)
    steps = len(grading)
    c = _dense_constants(structure_constants, n)

    layer_of = np.zeros(n, dtype=int)
    start = 0
    for s, d in enumerate(grading, start=1):
        layer_of[start:start + d] = s
        start += d

    _validate_grading(c, layer_of, steps, tol)
    _validate_jacobi(c, tol)

    variables = tuple(f"x{i+1}" for i in range(n))
    xs = [ex.var(i, variables[i]) for i in range(n)]

    fields = []
    for b in range(n):
        vec = [ex.const(1.0) if d == b else ex.const(0.0) for d in range(n)]
        total = list(vec)
        for r in range(1, steps):
            coef = _ADJOINT_SERIES[r]
            vec = _symbolic_adjoint(c, xs, vec)
            if coef == 0:
                continue
            cf = ex.const(float(coef))
            total = [ex.add(t, ex.mul(cf, v)) for t, v in zip(total, vec)]
        fields.append(VectorField(tuple(total)))

    manifold = Manifold(
        name=name,
        dim=n,
        rank=grading[0],
        variables=variables,
        frame=tuple(fields),
        domain=_default_box(n, box_half),
        carnot=True,
        structure_constants=c,
    )
    _check_bracket_table(manifold, c, tol)
    return manifold


def _dense_constants(structure_constants, n):
    c = np.zeros((n, n, n))
    if hasattr(structure_constants, "items"):
        items = []
        for (i, j), row in structure_constants.items():
            for l, value in row.items():
                items.append((i, j, l, value))
    else:
        items = [tuple(q) for q in structure_constants]
    for i, j, l, value in items:
        i, j, l = int(i), int(j), int(l)
        if not (0 <= i < n and 0 <= j < n and 0 <= l < n):
            raise ValueError(f"bracket index out of range: {(i, j, l)}")
        if i == j and value != 0.0:
            raise ValueError(f"[e_{i}, e_{i}] must vanish")
        c[i, j, l] = float(value)
        c[j, i, l] = -float(value)
    return c


def _validate_grading(c, layer_of, steps, tol):
    n = len(layer_of)
    for i in range(n):
        for j in range(n):
            target = layer_of[i] + layer_of[j]
            for l in range(n):
                if abs(c[i, j, l]) <= tol:
                    continue
                if target > steps or layer_of[l] != target:
                    raise GradingViolation(
                        f"[e_{i}, e_{j}] has component on e_{l} "
                        f"(layer {layer_of[l]}, expected layer {target})",
                        triple=(i, j, l))


def _validate_jacobi(c, tol):
    n = c.shape[0]
    # sum over cyclic permutations of [[e_i, e_j], e_l]
    jac = (np.einsum("ije,eld->ijld", c, c)
           + np.einsum("jle,eid->ijld", c, c)
           + np.einsum("lie,ejd->ijld", c, c))
    worst = np.unravel_index(np.argmax(np.abs(jac)), jac.shape)
    if abs(jac[worst]) > tol:
        i, j, l, _ = worst
        raise JacobiViolation(
            f"Jacobi identity fails on (e_{i}, e_{j}, e_{l}) "
            f"with residual {abs(jac[worst]):.3e}", triple=(int(i), int(j), int(l)))


def _symbolic_adjoint(c, xs, vec):
    """Coefficient Exprs of [sum_a x_a e_a, sum_e vec_e e_e]."""
    n = len(xs)
    out = [ex.const(0.0) for _ in range(n)]
    for a in range(n):
        for e in range(n):
            if isinstance(vec[e], ex.Const) and vec[e].value == 0.0:
                continue
            for d in range(n):
                if c[a, e, d] == 0.0:
                    continue
                term = ex.mul(ex.const(c[a, e, d]), ex.mul(xs[a], vec[e]))
                out[d] = ex.add(out[d], term)
    return out


def _check_bracket_table(manifold, c, tol):
    origin = np.zeros(manifold.dim)
    for i in range(manifold.dim):
        for j in range(i + 1, manifold.dim):
            got = lie_bracket(manifold.frame[i], manifold.frame[j], origin)
            want = c[i, j]
            if np.max(np.abs(got - want)) > tol:
                raise ValueError(
                    f"bracket table mismatch at identity for ({i}, {j}): "
                    f"{got} vs {want}")


def rotate_horizontal_frame(manifold, rotation, name=None):
    """New manifold whose horizontal frame is A(x) . X for an orthogonal
    matrix field A given as a k x k grid of Exprs (or parseable strings)."""
    k, m = manifold.rank, manifold.dim
    A = [[_as_expr(rotation[i][j], manifold.variables) for j in range(k)]
         for i in range(k)]
    new_fields = []
    for i in range(k):
        coeffs = [ex.const(0.0) for _ in range(m)]
        for j in range(k):
            for a in range(m):
                coeffs[a] = ex.add(coeffs[a],
                                   ex.mul(A[i][j], manifold.frame[j].coefficients[a]))
        new_fields.append(VectorField(tuple(coeffs)))
    frame = tuple(new_fields) + tuple(manifold.frame[k:])
    return replace(manifold,
                   name=name or f"{manifold.name}-rotated",
                   frame=frame,
                   carnot=False,
                   heisenberg_n=None,
                   structure_constants=None)


def _as_expr(src, variables):
    if isinstance(src, ex.Expr):
        return src
    return ex.parse(src, variables)


# ---------------------------------------------------------------------------
# Contact structure


def contact_curvature_form(manifold, u, v, p, eta=None, tol=1e-9):
    """Curvature dη(U, V)(p) of the contact form, for horizontal u, v.

    U, V are the constant-frame-component extensions of u, v; dη is
    computed by the Cartan formula  U(η(V)) - V(η(U)) - η([U, V]).
    """
    eta = tuple(eta) if eta is not None else manifold.contact_form
    if eta is None:
        raise ValueError("manifold carries no contact form")
    p = list(map(float, p))
    k = manifold.rank
    cu = manifold.frame_components(u, p)
    cv = manifold.frame_components(v, p)
    for c, w in ((cu, u), (cv, v)):
        if np.linalg.norm(c[k:]) > tol * max(1.0, np.linalg.norm(c)):
            raise NotHorizontal(f"vector {w} is not horizontal at {p}")

    U = _horizontal_combination_field(manifold, cu[:k])
    V = _horizontal_combination_field(manifold, cv[:k])

    def eta_of(f):
        def fn(coords):
            fv = f(coords)
            total = 0.0
            for a in range(manifold.dim):
                total = total + ex.evaluate(eta[a], coords) * fv[a]
            return total
        return fn

    u_chart = np.asarray(u, dtype=float)
    v_chart = np.asarray(v, dtype=float)
    d_eta_v = _scalar_directional(eta_of(V), p, u_chart)
    d_eta_u = _scalar_directional(eta_of(U), p, v_chart)
    bracket = lie_bracket_field(U, V)(p)
    eta_bracket = sum(ex.evaluate(eta[a], p) * bracket[a]
                      for a in range(manifold.dim))
    return float(d_eta_v - d_eta_u - eta_bracket)


def contact_nondegeneracy(manifold, p, eta=None):
    """|det| of the k x k matrix of curvature-form values on the frame."""
    k = manifold.rank
    p = list(map(float, p))
    F = manifold.frame_matrix(p)
    omega = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            omega[i, j] = contact_curvature_form(manifold, F[:, i], F[:, j], p,
                                                 eta=eta)
            omega[j, i] = -omega[i, j]
    return abs(float(np.linalg.det(omega)))


def _horizontal_combination_field(manifold, coeffs):
    """Field with constant frame components: sum coeffs_i X_i."""
    fields = manifold.frame
    m = manifold.dim

    def fn(coords):
        out = [0.0] * m
        for i, ci in enumerate(coeffs):
            if ci == 0.0:
                continue
            vals = fields[i](coords)
            out = [o + ci * v for o, v in zip(out, vals)]
        return out

    return fn


def _scalar_directional(fn, p, direction):
    seeded = [ex.Dual(x, d) for x, d in zip(p, direction)]
    return ex.deriv_part(fn(seeded))
