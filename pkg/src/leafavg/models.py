"""Concrete foliation models of round spheres and their dilation cones.

Three families are implemented, each exposing the same two capabilities:
an exact or statistical leaf average for polynomials, and a same-leaf
predicate for point pairs.

* :class:`FiniteGroupModel` -- orbits of a finite orthogonal matrix group.
* :class:`TorusModel` -- orbit closures of a torus acting by rotations on
  complex coordinate planes, encoded by an integer weight matrix.
* :class:`IsoparametricModel` -- level sets of a Cartan-Munzner polynomial;
  leaf averages come from a coarea-weighted kernel estimator on sphere
  samples.

Group and torus leaf averages are closed-form (Reynolds-style) and exact in
rational mode.  The isoparametric estimator is seeded and bitwise
reproducible for a fixed ``(seed, worker_count)``.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DimensionMismatch,
    EffectiveSampleTooSmall,
    GroupTooLarge,
    NearSingularLeaf,
    NonOrthogonalGenerator,
    NotCartanMunzner,
    OffSphere,
    ScalarModeMismatch,
)
from .exactlinalg import integer_left_kernel
from .polynomials import (
    EXACT,
    FLOAT,
    Polynomial,
    format_polynomial,
    radius_squared,
    sphere_inner,
)

_TWO_PI = 2.0 * math.pi


# -- sphere sampling ---------------------------------------------------------


def sample_sphere_many(count: int, ambient_dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points on the unit sphere: normalized standard normals."""
    points = rng.standard_normal((count, ambient_dim))
    norms = np.linalg.norm(points, axis=1)
    bad = norms < 1e-12
    while bad.any():  # astronomically rare, but keeps the contract clean
        points[bad] = rng.standard_normal((int(bad.sum()), ambient_dim))
        norms = np.linalg.norm(points, axis=1)
        bad = norms < 1e-12
    return points / norms[:, None]


def sample_sphere(ambient_dim: int, seed: int) -> np.ndarray:
    """One uniform sphere point, deterministic in the seed."""
    rng = np.random.default_rng(seed)
    return sample_sphere_many(1, ambient_dim, rng)[0]


# -- matrices ----------------------------------------------------------------


def _as_matrix(entries, ambient_dim: int, mode: str):
    rows = []
    for row in entries:
        if len(row) != ambient_dim:
            raise DimensionMismatch(f"matrix row length {len(row)} != {ambient_dim}")
        if mode == EXACT:
            rows.append(tuple(Fraction(x) for x in row))
        else:
            rows.append(tuple(float(x) for x in row))
    if len(rows) != ambient_dim:
        raise DimensionMismatch(f"matrix has {len(rows)} rows, expected {ambient_dim}")
    return tuple(rows)


def _infer_mode(matrices) -> str:
    for matrix in matrices:
        for row in matrix:
            for x in row:
                if isinstance(x, float):
                    return FLOAT
    return EXACT


def _identity(ambient_dim: int, mode: str):
    one = Fraction(1) if mode == EXACT else 1.0
    zero = Fraction(0) if mode == EXACT else 0.0
    return tuple(
        tuple(one if i == j else zero for j in range(ambient_dim))
        for i in range(ambient_dim)
    )


def _mat_mul(a, b):
    n = len(a)
    bt = list(zip(*b))
    return tuple(
        tuple(sum(x * y for x, y in zip(row, col)) for col in bt) for row in a
    )


def _mat_vec(m, v):
    return tuple(sum(x * y for x, y in zip(row, v)) for row in m)


def _mat_close(a, b, tol: float) -> bool:
    return all(
        abs(float(x) - float(y)) <= tol for ra, rb in zip(a, b) for x, y in zip(ra, rb)
    )


def _is_orthogonal(m, mode: str, tol: float) -> bool:
    n = len(m)
    prod = _mat_mul(tuple(zip(*m)), m)
    ident = _identity(n, mode)
    if mode == EXACT:
        return prod == ident
    return _mat_close(prod, ident, tol)


def compose_with_matrix(f: Polynomial, matrix) -> Polynomial:
    """The pullback ``x -> f(M x)`` for a square matrix over f's scalars."""
    dim = f.ambient_dim
    # monomial matrices (signed permutations and friends) map monomials to
    # monomials; worth a fast path since most desk-scale groups live there
    structure = []
    for row in matrix:
        nz = [(j, c) for j, c in enumerate(row) if c != 0]
        if len(nz) != 1:
            structure = None
            break
        structure.append(nz[0])
    if structure is not None:
        terms: Dict[Tuple[int, ...], object] = {}
        for expo, coeff in f.terms.items():
            new = [0] * dim
            c = coeff
            for i, e in enumerate(expo):
                if e:
                    j, entry = structure[i]
                    new[j] += e
                    c = c * entry ** e
            key = tuple(new)
            c = terms.get(key, 0) + c
            if c == 0:
                terms.pop(key, None)
            else:
                terms[key] = c
        return Polynomial(dim, terms, f.mode)

    rows = [
        Polynomial(dim, {tuple(1 if k == j else 0 for k in range(dim)): c
                         for j, c in enumerate(row) if c != 0}, f.mode)
        for row in matrix
    ]
    powers: Dict[Tuple[int, int], Polynomial] = {}

    def power(i: int, e: int) -> Polynomial:
        key = (i, e)
        got = powers.get(key)
        if got is None:
            got = rows[i] ** e
            powers[key] = got
        return got

    out = Polynomial.zero(dim, f.mode)
    for expo, coeff in f.terms.items():
        term = Polynomial.constant(dim, coeff, f.mode)
        for i, e in enumerate(expo):
            if e:
                term = term * power(i, e)
        out = out + term
    return out


# -- finite matrix groups ----------------------------------------------------


class FiniteGroupModel:
    """Orbit foliation of a finite group of orthogonal matrices.

    Leaves are the (finite) orbits; the leaf average is the group average
    ``(1/|G|) sum_g f(g x)``, computed by exact substitution.
    """

    kind = "finite_group"

    def __init__(self, ambient_dim: int, elements, generators, mode: str, name: str = ""):
        self.ambient_dim = ambient_dim
        self.elements = tuple(elements)
        self.generators = tuple(generators)
        self.mode = mode
        self.name = name or f"finite_group(dim={ambient_dim}, order={len(self.elements)})"

    @property
    def order(self) -> int:
        return len(self.elements)

    def describe(self) -> str:
        return self.name

    def reynolds(self, f: Polynomial) -> Polynomial:
        """Group average of ``f``; exact in rational mode."""
        if f.ambient_dim != self.ambient_dim:
            raise DimensionMismatch("polynomial dimension does not match group")
        if f.mode != self.mode:
            raise ScalarModeMismatch(
                f"{self.mode} model cannot average a {f.mode} polynomial"
            )
        total = Polynomial.zero(self.ambient_dim, f.mode)
        for g in self.elements:
            total = total + compose_with_matrix(f, g)
        weight = Fraction(1, self.order) if f.mode == EXACT else 1.0 / self.order
        return total.scale(weight)

    def same_leaf(self, p, q, tol: float) -> bool:
        """True when some group element carries ``p`` to within ``tol`` of ``q``."""
        p = tuple(p)
        q = tuple(q)
        if len(p) != self.ambient_dim or len(q) != self.ambient_dim:
            raise DimensionMismatch("point dimension does not match group")
        for g in self.elements:
            image = _mat_vec(g, p)
            if tol == 0:
                if all(x == y for x, y in zip(image, q)):
                    return True
            else:
                dist_sq = sum((float(x) - float(y)) ** 2 for x, y in zip(image, q))
                if dist_sq < tol * tol:
                    return True
        return False

    def orbit(self, p) -> List[tuple]:
        p = tuple(p)
        return [_mat_vec(g, p) for g in self.elements]

    def random_leaf_mate(self, p, rng: np.random.Generator):
        g = self.elements[int(rng.integers(self.order))]
        return _mat_vec(g, tuple(p))


def group_closure(
    generators,
    max_group_size: int = 512,
    *,
    mode: Optional[str] = None,
    tol_orth: float = 1e-9,
    tol_dedup: float = 1e-9,
    name: str = "",
) -> FiniteGroupModel:
    """Close a generator list under products into a :class:`FiniteGroupModel`.

    Breadth-first and deterministic.  Raises :class:`NonOrthogonalGenerator`
    for a bad generator and :class:`GroupTooLarge` when the closure exceeds
    ``max_group_size`` (the signature of an infinite or huge group).
    """
    generators = list(generators)
    if not generators:
        raise ValueError("at least one generator is required")
    if max_group_size < 1:
        raise ValueError("max_group_size must be positive")
    ambient_dim = len(generators[0])
    if mode is None:
        mode = _infer_mode(generators)
    gens = [_as_matrix(g, ambient_dim, mode) for g in generators]
    for g in gens:
        if not _is_orthogonal(g, mode, tol_orth):
            raise NonOrthogonalGenerator(f"generator is not orthogonal within {tol_orth}")

    identity = _identity(ambient_dim, mode)
    elements = [identity]
    if mode == EXACT:
        seen = {identity}
    queue = [identity]
    while queue:
        current = queue.pop(0)
        for g in gens:
            prod = _mat_mul(current, g)
            if mode == EXACT:
                if prod in seen:
                    continue
                seen.add(prod)
            else:
                if any(_mat_close(prod, e, tol_dedup) for e in elements):
                    continue
            elements.append(prod)
            queue.append(prod)
            if len(elements) > max_group_size:
                raise GroupTooLarge(
                    f"group closure exceeded {max_group_size} elements"
                )
    return FiniteGroupModel(ambient_dim, elements, gens, mode, name=name)


# -- torus actions -----------------------------------------------------------

# Tiny exact Gaussian-rational helpers; coefficients during the torus
# complexification are pairs (re, im) of Fractions.

_ZERO = (Fraction(0), Fraction(0))


def _gadd(a, b):
    return (a[0] + b[0], a[1] + b[1])


def _gmul(a, b):
    return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])


def _ipow(k: int):
    return ((Fraction(1), Fraction(0)), (Fraction(0), Fraction(1)),
            (Fraction(-1), Fraction(0)), (Fraction(0), Fraction(-1)))[k % 4]


@lru_cache(maxsize=None)
def _complexify_pair(p: int, q: int):
    """Expansion of ``x^p y^q`` in ``z = x + i y``: map (a, b) -> coefficient."""
    out: Dict[Tuple[int, int], tuple] = {}
    base = Fraction(1, 2 ** (p + q))
    iq = _ipow(-q % 4)
    for s in range(p + 1):
        cs = math.comb(p, s)
        for t in range(q + 1):
            sign = -1 if (q - t) % 2 else 1
            coeff = (base * cs * math.comb(q, t) * sign, Fraction(0))
            coeff = _gmul(coeff, iq)
            key = (s + t, (p + q) - (s + t))
            out[key] = _gadd(out.get(key, _ZERO), coeff)
    return out


@lru_cache(maxsize=None)
def _realify_pair(a: int, b: int):
    """Expansion of ``z^a zbar^b`` in real coordinates: (px, py) -> coefficient."""
    out: Dict[Tuple[int, int], tuple] = {}
    for s in range(a + 1):
        ca = math.comb(a, s)
        for t in range(b + 1):
            coeff = _gmul(
                (Fraction(ca * math.comb(b, t)), Fraction(0)),
                _ipow((a - s) - (b - t)),
            )
            key = (s + t, (a + b) - (s + t))
            out[key] = _gadd(out.get(key, _ZERO), coeff)
    return out


class TorusModel:
    """Orbit-closure foliation of a torus rotating complex coordinate planes.

    Coordinates come in ``m`` planes ``(x_{2j+1}, x_{2j+2})`` followed by
    ``n_fix`` fixed coordinates.  Row ``j`` of the integer ``weight_matrix``
    gives the rotation speeds of plane ``j`` in each torus parameter.  A
    complex monomial ``z^a zbar^b`` survives averaging precisely when
    ``W^T (a - b) = 0``; this is both the leaf-average formula and, through
    the saturated kernel lattice of ``W``, the same-leaf phase test.
    """

    kind = "torus"

    def __init__(self, weight_matrix, n_fix: int = 0, name: str = ""):
        rows = [tuple(int(x) for x in row) for row in weight_matrix]
        if not rows:
            raise ValueError("weight matrix needs at least one row (one plane)")
        width = len(rows[0])
        if width < 1 or any(len(r) != width for r in rows):
            raise ValueError("weight matrix rows must share a positive length")
        if n_fix < 0:
            raise ValueError("n_fix must be non-negative")
        self.weight_matrix = tuple(rows)
        self.n_planes = len(rows)
        self.torus_rank = width
        self.n_fix = n_fix
        self.ambient_dim = 2 * self.n_planes + n_fix
        self.mode = EXACT  # integer weights; averages of exact input are exact
        self.name = name or f"torus(weights={rows}, n_fix={n_fix})"

    def describe(self) -> str:
        return self.name

    # -- averaging ---------------------------------------------------------

    def _balanced(self, imbalance: Sequence[int]) -> bool:
        return all(
            sum(self.weight_matrix[j][t] * imbalance[j] for j in range(self.n_planes)) == 0
            for t in range(self.torus_rank)
        )

    def reynolds(self, f: Polynomial) -> Polynomial:
        """Torus average: complexify, keep weight-balanced terms, realify."""
        if f.ambient_dim != self.ambient_dim:
            raise DimensionMismatch("polynomial dimension does not match torus model")
        was_float = f.mode == FLOAT
        exact = f.to_exact() if was_float else f

        m = self.n_planes
        complex_terms: Dict[tuple, tuple] = {}
        for expo, coeff in exact.terms.items():
            partial = {((), ()): (coeff, Fraction(0))}
            for j in range(m):
                expansion = _complexify_pair(expo[2 * j], expo[2 * j + 1])
                nxt: Dict[tuple, tuple] = {}
                for (ab, _fixed), c in partial.items():
                    for pair, pc in expansion.items():
                        key = (ab + (pair,), ())
                        val = _gmul(c, pc)
                        nxt[key] = _gadd(nxt.get(key, _ZERO), val)
                partial = nxt
            fixed = expo[2 * m:]
            for (ab, _), c in partial.items():
                key = (ab, fixed)
                complex_terms[key] = _gadd(complex_terms.get(key, _ZERO), c)

        real_terms: Dict[tuple, tuple] = {}
        for (ab, fixed), coeff in complex_terms.items():
            if coeff == _ZERO:
                continue
            if not self._balanced([a - b for a, b in ab]):
                continue
            partial = {(): coeff}
            for a, b in ab:
                expansion = _realify_pair(a, b)
                nxt = {}
                for prefix, c in partial.items():
                    for pair, pc in expansion.items():
                        key = prefix + pair
                        val = _gmul(c, pc)
                        nxt[key] = _gadd(nxt.get(key, _ZERO), val)
                partial = nxt
            for prefix, c in partial.items():
                key = prefix + fixed
                real_terms[key] = _gadd(real_terms.get(key, _ZERO), c)

        terms = {}
        for expo, (re, im) in real_terms.items():
            if im != 0:
                raise RuntimeError("torus average produced a non-real term")
            if re != 0:
                terms[expo] = re
        result = Polynomial(self.ambient_dim, terms, EXACT)
        return result.to_float() if was_float else result

    # -- leaves ------------------------------------------------------------

    def _split(self, p):
        planes = [(p[2 * j], p[2 * j + 1]) for j in range(self.n_planes)]
        return planes, tuple(p[2 * self.n_planes:])

    def same_leaf(self, p, q, tol: float) -> bool:
        """Orbit-closure test: radii, fixed coordinates, and phase lattice.

        Phases are compared against the saturated integer kernel of the
        active-plane weight rows; the angular tolerance for a kernel vector
        ``v`` is ``tol * max(1, |v|_1)``.
        """
        p = tuple(p)
        q = tuple(q)
        if len(p) != self.ambient_dim or len(q) != self.ambient_dim:
            raise DimensionMismatch("point dimension does not match torus model")
        planes_p, fixed_p = self._split(p)
        planes_q, fixed_q = self._split(q)
        for x, y in zip(fixed_p, fixed_q):
            if abs(float(x) - float(y)) > tol:
                return False
        radii_p = [math.hypot(float(x), float(y)) for x, y in planes_p]
        radii_q = [math.hypot(float(x), float(y)) for x, y in planes_q]
        for rp, rq in zip(radii_p, radii_q):
            if abs(rp - rq) > tol:
                return False
        active = [j for j in range(self.n_planes) if radii_p[j] > tol and radii_q[j] > tol]
        if not active:
            return True
        phases = []
        for j in active:
            xp, yp = (float(v) for v in planes_p[j])
            xq, yq = (float(v) for v in planes_q[j])
            phases.append(math.atan2(yq, xq) - math.atan2(yp, xp))
        sub = [self.weight_matrix[j] for j in active]
        for vec in integer_left_kernel(sub):
            total = sum(v * phi for v, phi in zip(vec, phases))
            wrapped = math.remainder(total, _TWO_PI)
            if abs(wrapped) > tol * max(1, sum(abs(v) for v in vec)):
                return False
        return True

    def _rational_rotation(self, tau: Fraction):
        den = 1 + tau * tau
        return ((1 - tau * tau) / den, 2 * tau / den)  # (cos, sin), exactly on S^1

    def random_leaf_mate(self, p, rng: np.random.Generator):
        """A point on the leaf of ``p``: exact rational rotation for exact
        input points, floating rotation otherwise."""
        p = tuple(p)
        if len(p) != self.ambient_dim:
            raise DimensionMismatch("point dimension does not match torus model")
        exact_in = all(not isinstance(x, float) for x in p)
        if exact_in:
            cos_sin = []
            for _ in range(self.torus_rank):
                tau = Fraction(int(rng.integers(-12, 13)), int(rng.integers(1, 13)))
                cos_sin.append(self._rational_rotation(tau))
            out = []
            for j in range(self.n_planes):
                c, s = Fraction(1), Fraction(0)
                for t in range(self.torus_rank):
                    w = self.weight_matrix[j][t]
                    ct, st = cos_sin[t]
                    if w < 0:
                        st = -st
                        w = -w
                    for _ in range(w):
                        c, s = c * ct - s * st, c * st + s * ct
                x, y = Fraction(p[2 * j]), Fraction(p[2 * j + 1])
                out.extend((c * x - s * y, s * x + c * y))
            out.extend(Fraction(x) for x in p[2 * self.n_planes:])
            return tuple(out)
        theta = rng.uniform(0.0, _TWO_PI, size=self.torus_rank)
        out = []
        for j in range(self.n_planes):
            angle = float(sum(self.weight_matrix[j][t] * theta[t] for t in range(self.torus_rank)))
            c, s = math.cos(angle), math.sin(angle)
            x, y = float(p[2 * j]), float(p[2 * j + 1])
            out.extend((c * x - s * y, s * x + c * y))
        out.extend(float(x) for x in p[2 * self.n_planes:])
        return tuple(out)


# -- isoparametric level sets ------------------------------------------------


def validate_munzner(F: Polynomial, g: int, *, tol: float = 1e-9):
    """Admission test for a degree-``g`` Cartan-Munzner candidate.

    Verifies symbolically that ``|grad F|^2 = g^2 r^(2g-2)`` and that the
    Laplacian of ``F`` is a scalar multiple ``c`` of ``r^(g-2)`` (forced to
    ``c = 0`` when ``g - 2`` is odd, where no such polynomial exists).
    Returns ``c``.  Exact-mode residuals must vanish identically; float-mode
    residual coefficients must stay below ``tol``.
    """
    if g < 1:
        raise NotCartanMunzner(f"degree must be positive, got {g}")
    if not F.is_homogeneous() or F.homogeneous_degree() != g or F.is_zero:
        raise NotCartanMunzner(f"candidate is not homogeneous of degree {g}")
    r2 = radius_squared(F.ambient_dim, F.mode)
    grad = F.gradient()
    grad_sq = Polynomial.zero(F.ambient_dim, F.mode)
    for part in grad:
        grad_sq = grad_sq + part * part
    target = (r2 ** (g - 1)).scale(g * g)
    grad_res = grad_sq - target

    lap = F.laplacian()
    if g >= 2 and (g - 2) % 2 == 0:
        radial = r2 ** ((g - 2) // 2)
        denom = sphere_inner(radial, radial)
        c = sphere_inner(lap, radial) / denom
        lap_res = lap - radial.scale(c)
    else:
        c = Fraction(0) if F.mode == EXACT else 0.0
        lap_res = lap

    if F.mode == EXACT:
        ok = grad_res.is_zero and lap_res.is_zero
    else:
        ok = grad_res.max_abs_coeff() <= tol and lap_res.max_abs_coeff() <= tol
    if not ok:
        raise NotCartanMunzner(
            "Cartan-Munzner identities fail",
            gradient_residual=format_polynomial(grad_res),
            laplacian_residual=format_polynomial(lap_res),
        )
    return c


class LevelSetSampler:
    """A reusable cloud of sphere samples for level-set averaging.

    Caches the sample points, the level values and the tangential gradient
    norm, so that averaging many polynomials over many levels costs one
    polynomial evaluation per polynomial.  Samples are drawn in
    ``worker_count`` chunks with independently derived seeds and concatenated
    in chunk order, which makes results bitwise reproducible for a fixed
    ``(seed, worker_count)``.
    """

    def __init__(self, model: "IsoparametricModel", seed, count: int, worker_count: int = 1):
        if worker_count < 1:
            raise ValueError("worker_count must be positive")
        self.model = model
        self.seed = seed
        self.count = count
        self.worker_count = worker_count
        chunk = count // worker_count
        sizes = [chunk + (1 if i < count % worker_count else 0) for i in range(worker_count)]
        root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        seeds = root.spawn(worker_count)
        parts = [
            sample_sphere_many(size, model.ambient_dim, np.random.default_rng(s))
            for size, s in zip(sizes, seeds)
        ]
        self.points = np.concatenate(parts, axis=0)
        self.level_values = model.F.eval_many(self.points)
        self.grad_norms = model.g * np.sqrt(np.clip(1.0 - self.level_values ** 2, 0.0, None))

    def weights(self, level: float, h: Optional[float] = None) -> np.ndarray:
        h = self.model.h if h is None else h
        u = (self.level_values - level) / h
        kernel = np.where(np.abs(u) < 1.0, 1.0 - u * u, 0.0)  # Epanechnikov, O(h^2) bias
        return self.grad_norms * kernel

    def leaf_average_values(
        self,
        values: np.ndarray,
        level: float,
        *,
        h: Optional[float] = None,
        min_ess: Optional[float] = None,
    ) -> Tuple[float, float]:
        """Weighted ratio estimate and delete-one jackknife standard error."""
        w = self.weights(level, h)
        sw = float(w.sum())
        if sw <= 0.0:
            raise EffectiveSampleTooSmall("no samples in the kernel window")
        min_ess = self.model.min_ess if min_ess is None else min_ess
        ess = sw * sw / float((w * w).sum())
        if ess < min_ess:
            raise EffectiveSampleTooSmall(
                f"effective sample size {ess:.1f} below minimum {min_ess}"
            )
        wf = w * values
        swf = float(wf.sum())
        estimate = swf / sw
        n = len(w)
        loo = (swf - wf) / (sw - w)
        centered = loo - loo.mean()
        se = math.sqrt((n - 1) / n * float(np.dot(centered, centered)))
        return estimate, se

    def leaf_average(self, f: Polynomial, level: float, **kwargs) -> Tuple[float, float]:
        return self.leaf_average_values(f.eval_many(self.points), level, **kwargs)


class IsoparametricModel:
    """Foliation of the sphere by level sets of a Cartan-Munzner polynomial.

    Admission runs the symbolic identity check; the resulting Laplacian
    scale ``c`` is stored on the model.  The leaf average of ``f`` at level
    ``t`` is estimated by coarea weighting:  ``sum w_i f(x_i) / sum w_i``
    with ``w_i = |grad_S F|(x_i) K_h(F(x_i) - t)`` over uniform sphere
    samples, where ``|grad_S F| = g sqrt(1 - F^2)`` on the unit sphere.

    ``symmetry`` may name a finite-group or torus model whose action
    preserves ``F``; it is only used to construct same-leaf companions for
    separation testing and is validated against ``F`` at construction.
    """

    kind = "isoparametric"

    def __init__(
        self,
        F: Polynomial,
        g: int,
        *,
        h: float = 0.05,
        sample_count: int = 100_000,
        tol_level: float = 1e-6,
        min_ess: float = 100.0,
        munzner_tol: float = 1e-9,
        symmetry=None,
        name: str = "",
    ):
        if not 0.0 < h < 1.0:
            raise ValueError("bandwidth h must lie in (0, 1)")
        self.F = F
        self.g = g
        self.c = validate_munzner(F, g, tol=munzner_tol)
        self.ambient_dim = F.ambient_dim
        self.h = h
        self.sample_count = sample_count
        self.tol_level = tol_level
        self.min_ess = min_ess
        self.mode = F.mode
        self.symmetry = symmetry
        self.name = name or f"isoparametric(g={g}, dim={self.ambient_dim})"
        if symmetry is not None:
            self._check_symmetry(symmetry)

    def describe(self) -> str:
        return self.name

    def _check_symmetry(self, symmetry):
        if symmetry.ambient_dim != self.ambient_dim:
            raise DimensionMismatch("symmetry model dimension does not match")
        if isinstance(symmetry, FiniteGroupModel):
            for gmat in symmetry.generators:
                pulled = compose_with_matrix(self.F.to_float(), [
                    [float(x) for x in row] for row in gmat
                ])
                if (pulled - self.F.to_float()).max_abs_coeff() > 1e-8:
                    raise ValueError("configured symmetry does not preserve the level polynomial")
        elif isinstance(symmetry, TorusModel):
            averaged = symmetry.reynolds(self.F.to_exact())
            if averaged != self.F.to_exact():
                raise ValueError("configured symmetry does not preserve the level polynomial")
        else:
            raise TypeError("symmetry must be a finite-group or torus model")

    # -- leaves ------------------------------------------------------------

    def _check_on_sphere(self, p, tol: float):
        norm = math.sqrt(sum(float(x) ** 2 for x in p))
        if abs(norm - 1.0) > tol:
            raise OffSphere(f"point norm {norm} is not 1 within {tol}")

    def level_of(self, p) -> float:
        return float(self.F.eval([float(x) for x in p]))

    def same_leaf(self, p, q, tol: Optional[float] = None) -> bool:
        """Level predicate ``|F(p) - F(q)| < tol`` for unit-sphere points."""
        tol = self.tol_level if tol is None else tol
        p = tuple(p)
        q = tuple(q)
        if len(p) != self.ambient_dim or len(q) != self.ambient_dim:
            raise DimensionMismatch("point dimension does not match model")
        sphere_tol = max(tol, 1e-9)
        self._check_on_sphere(p, sphere_tol)
        self._check_on_sphere(q, sphere_tol)
        return abs(self.level_of(p) - self.level_of(q)) < tol

    def random_leaf_mate(self, p, rng: np.random.Generator):
        if self.symmetry is None:
            return None
        return self.symmetry.random_leaf_mate(p, rng)

    # -- estimation --------------------------------------------------------

    def sampler(self, seed: int, count: Optional[int] = None, worker_count: int = 1) -> LevelSetSampler:
        return LevelSetSampler(self, seed, count or self.sample_count, worker_count)

    def leaf_average_mc(
        self,
        f: Polynomial,
        p,
        rng_seed: int,
        *,
        n: Optional[int] = None,
        h: Optional[float] = None,
        worker_count: int = 1,
        min_ess: Optional[float] = None,
    ) -> Tuple[float, float]:
        """Monte Carlo leaf average of ``f`` through ``p`` with jackknife SE.

        Refuses points within bandwidth of the focal levels ``F = +-1``.
        """
        if f.ambient_dim != self.ambient_dim:
            raise DimensionMismatch("polynomial dimension does not match model")
        p = tuple(p)
        self._check_on_sphere(p, 1e-8)
        h = self.h if h is None else h
        level = self.level_of(p)
        if abs(level) >= 1.0 - h:
            raise NearSingularLeaf(
                f"level {level:.6f} within bandwidth {h} of a focal level"
            )
        sampler = self.sampler(rng_seed, n, worker_count)
        return sampler.leaf_average(f, level, h=h, min_ess=min_ess)

    def fit_points(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform sphere points avoiding ``|F| > 1 - 2h`` (near-focal)."""
        out = []
        need = count
        while need > 0:
            batch = sample_sphere_many(max(4 * need, 32), self.ambient_dim, rng)
            levels = self.F.eval_many(batch)
            keep = batch[np.abs(levels) <= 1.0 - 2.0 * self.h]
            if len(keep) > 0:
                out.append(keep[:need])
                need -= len(out[-1])
        return np.concatenate(out, axis=0)


FoliationModel = (FiniteGroupModel, TorusModel, IsoparametricModel)


def reynolds(model, f: Polynomial) -> Polynomial:
    """Closed-form leaf average for the homogeneous (group/torus) models."""
    if isinstance(model, (FiniteGroupModel, TorusModel)):
        return model.reynolds(f)
    raise TypeError(f"{type(model).__name__} has no closed-form average; use the fit engine")


def same_leaf(model, p, q, tol: float) -> bool:
    return model.same_leaf(p, q, tol)


def has_exact_average(model) -> bool:
    return isinstance(model, (FiniteGroupModel, TorusModel))
