"""The leaf-averaging operator as a polynomial-to-polynomial map.

Group and torus models average exactly (closed form); isoparametric models
go through a two-stage statistical engine:

1. estimate the leaf average of ``f`` at sample points kept away from the
   focal levels, then
2. solve a column-scaled least-squares system for the coefficients of a
   homogeneous polynomial of the same degree (the degree-preserving ansatz;
   restriction of homogeneous polynomials to the sphere is injective, so the
   design matrix has full column rank for generic samples).

Every call returns an :class:`AveragingCertificate` carrying the operator
identity residuals (idempotence, leaf constancy, Laplacian commutation,
contraction slack, self-adjointness gap) plus fit diagnostics when the
statistical engine ran.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BasisDeficient, IdentityViolation, IllConditionedFit
from .models import IsoparametricModel, has_exact_average
from .polynomials import (
    EXACT,
    FLOAT,
    Polynomial,
    format_polynomial,
    monomial_basis,
    sphere_inner,
    sphere_mean,
    sphere_norm,
)

ENGINE_EXACT = "exact"
ENGINE_VANDERMONDE = "vandermonde_fit"
ENGINE_STRUCTURED = "structured_fit"

IDENTITY_NAMES = (
    "idempotence",
    "leaf_constancy",
    "laplacian_commutation",
    "contraction_slack",
    "selfadjoint_gap",
)


def cycle_probe(f: Polynomial) -> Polynomial:
    """Deterministic companion polynomial: rotate the coordinates of ``f``.

    Used as the second argument of self-adjointness checks; falls back to
    ``x1 * f`` when ``f`` is symmetric under the rotation.
    """
    terms = {}
    for expo, coeff in f.terms.items():
        terms[expo[-1:] + expo[:-1]] = coeff
    probe = Polynomial(f.ambient_dim, terms, f.mode)
    if probe == f:
        probe = Polynomial.variable(f.ambient_dim, 0, f.mode) * f
    return probe


def random_rational_points(
    ambient_dim: int, count: int, rng: np.random.Generator, denominator: int = 64
) -> List[tuple]:
    """Random rational points in the cube [-2, 2]^d (exact coordinates)."""
    raw = rng.integers(-2 * denominator, 2 * denominator + 1, size=(count, ambient_dim))
    return [tuple(Fraction(int(v), denominator) for v in row) for row in raw]


def weighted_exponent_patterns(degrees: Sequence[int], target: int) -> List[tuple]:
    """All exponent tuples ``e`` with ``sum(e_i * degrees_i) == target``.

    Deterministic order (first generator's exponent descending, and so on).
    """
    out: List[tuple] = []

    def rec(prefix: List[int], remaining: int, index: int):
        if index == len(degrees):
            if remaining == 0:
                out.append(tuple(prefix))
            return
        step = degrees[index]
        for e in range(remaining // step, -1, -1):
            rec(prefix + [e], remaining - e * step, index + 1)

    if target >= 0:
        rec([], target, 0)
    return out


def generator_products(generators: Sequence[Polynomial], target: int) -> List[Tuple[tuple, Polynomial]]:
    """Products of generators of total degree ``target`` (with multiplicity
    patterns), deduplicated by pattern, deterministic order."""
    degrees = [g.homogeneous_degree() for g in generators]
    out = []
    power_cache: Dict[Tuple[int, int], Polynomial] = {}

    def power(i: int, e: int) -> Polynomial:
        key = (i, e)
        if key not in power_cache:
            power_cache[key] = generators[i] ** e
        return power_cache[key]

    for pattern in weighted_exponent_patterns(degrees, target):
        if sum(pattern) == 0:
            continue  # the empty product is the constant, not a degree-d element
        poly = None
        for i, e in enumerate(pattern):
            if e:
                p = power(i, e)
                poly = p if poly is None else poly * p
        out.append((pattern, poly))
    return out


# -- certificates ------------------------------------------------------------


@dataclass
class AveragingCertificate:
    """Record of one application of the averaging operator.

    Residuals measure identity violations and are all non-negative; in
    particular ``contraction_slack`` is the amount by which the contraction
    inequality fails (0 whenever ``mean(f^2) >= mean([f]^2)`` holds, which
    is exact in rational mode).
    """

    model: str
    engine: str
    mode: str
    degree: int
    input_text: str
    average_text: str
    residuals: Dict[str, float]
    exact: bool
    seed: Optional[int] = None
    fit: Optional[dict] = None
    average_poly: Polynomial = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "engine": self.engine,
            "mode": self.mode,
            "degree": self.degree,
            "input": self.input_text,
            "average": self.average_text,
            "residuals": dict(sorted(self.residuals.items())),
            "exact": self.exact,
            "seed": self.seed,
            "fit": self.fit,
        }

    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)


@dataclass
class StructuredAverageResult:
    """Average expressed in the generator algebra's degree-m slice."""

    polynomial: Polynomial
    coefficients: List[float]
    patterns: List[tuple]
    residual_rms: float
    unstructured_residual_rms: float
    condition: float
    seed: int
    sample_count: int
    mc_samples: int
    point_ses: List[float]

    def to_dict(self) -> dict:
        return {
            "average": format_polynomial(self.polynomial),
            "coefficients": list(self.coefficients),
            "patterns": [list(p) for p in self.patterns],
            "residual_rms": self.residual_rms,
            "unstructured_residual_rms": self.unstructured_residual_rms,
            "condition": self.condition,
            "seed": self.seed,
            "sample_count": self.sample_count,
            "mc_samples": self.mc_samples,
            "max_point_se": max(self.point_ses, default=0.0),
        }


@dataclass
class IdentityReport:
    """Residuals of the operator identities for one (f, g) probe pair."""

    model: str
    engine: str
    residuals: Dict[str, float]
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "engine": self.engine,
            "residuals": dict(sorted(self.residuals.items())),
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


# -- exact engine ------------------------------------------------------------


def _certificate_exact(model, f: Polynomial, seed: int, probe: Optional[Polynomial]) -> AveragingCertificate:
    degree = f.homogeneous_degree()
    avg = model.reynolds(f)
    if not avg.is_zero and avg.homogeneous_degree() != degree:
        raise IdentityViolation("degree_preservation", float("inf"),
                                "average left the homogeneous degree slice")

    rng = np.random.default_rng(seed)
    if f.mode == EXACT:
        points = random_rational_points(model.ambient_dim, 4, rng)
    else:
        points = [tuple(map(float, row)) for row in rng.normal(size=(4, model.ambient_dim))]
    leaf_constancy = 0.0
    for p in points:
        mate = model.random_leaf_mate(p, rng)
        leaf_constancy = max(leaf_constancy, abs(float(avg.eval(mate) - avg.eval(p))))

    probe = cycle_probe(f) if probe is None else probe
    probe_avg = model.reynolds(probe)
    residuals = {
        "idempotence": sphere_norm(model.reynolds(avg) - avg),
        "leaf_constancy": leaf_constancy,
        "laplacian_commutation": sphere_norm(avg.laplacian() - model.reynolds(f.laplacian())),
        "contraction_slack": max(0.0, -float(sphere_mean(f * f) - sphere_mean(avg * avg))),
        "selfadjoint_gap": abs(float(sphere_inner(avg, probe) - sphere_inner(f, probe_avg))),
    }
    return AveragingCertificate(
        model=model.describe(),
        engine=ENGINE_EXACT,
        mode=f.mode,
        degree=degree,
        input_text=format_polynomial(f),
        average_text=format_polynomial(avg),
        residuals=residuals,
        exact=(f.mode == EXACT),
        seed=seed,
        fit=None,
        average_poly=avg,
    )


# -- statistical engine ------------------------------------------------------


class _FitContext:
    """Shared sample cloud, fit points and responses for one fit session."""

    def __init__(self, model: IsoparametricModel, degree: int, seed: int,
                 sample_points: Optional[int], mc_samples: Optional[int],
                 h: Optional[float], worker_count: int = 1):
        self.model = model
        self.degree = degree
        self.seed = seed
        self.h = model.h if h is None else h
        root = np.random.SeedSequence(seed)
        point_seed, cloud_seed = root.spawn(2)
        self.monomials = monomial_basis(model.ambient_dim, degree)
        # the restriction of the degree slice to the sphere is injective, so
        # 2x oversampling keeps the design full rank; never drop below it
        self.sample_count = max(sample_points or 0, 2 * len(self.monomials))
        self.points = model.fit_points(self.sample_count, np.random.default_rng(point_seed))
        self.levels = model.F.eval_many(self.points)
        self.mc_samples = mc_samples or model.sample_count
        self.sampler = model.sampler(cloud_seed, self.mc_samples)

    def responses(self, f: Polynomial) -> Tuple[np.ndarray, np.ndarray]:
        values = f.eval_many(self.sampler.points)
        est = np.empty(len(self.points))
        ses = np.empty(len(self.points))
        for j, level in enumerate(self.levels):
            est[j], ses[j] = self.sampler.leaf_average_values(values, float(level), h=self.h)
        return est, ses

    def design(self, monomials: Sequence[tuple]) -> np.ndarray:
        cols = [
            Polynomial.monomial(self.model.ambient_dim, expo, 1.0, FLOAT).eval_many(self.points)
            for expo in monomials
        ]
        return np.column_stack(cols)


def _scaled_lstsq(design: np.ndarray, rhs: np.ndarray, cond_cap: float):
    """Least squares with column scaling; returns (coeffs, condition, residual_rms)."""
    scales = np.linalg.norm(design, axis=0)
    scales[scales == 0.0] = 1.0
    scaled = design / scales
    sv = np.linalg.svd(scaled, compute_uv=False)
    positive = sv[sv > sv[0] * 1e-14] if len(sv) else sv
    condition = float(sv[0] / positive[-1]) if len(positive) else float("inf")
    if condition > cond_cap:
        raise IllConditionedFit(
            f"condition estimate {condition:.3e} above cap {cond_cap:.1e}; resample"
        )
    solution, *_ = np.linalg.lstsq(scaled, rhs, rcond=None)
    coeffs = solution / scales
    residual = design @ coeffs - rhs
    rms = math.sqrt(float(residual @ residual) / len(rhs))
    return coeffs, condition, rms


def _poly_from_coeffs(ambient_dim: int, monomials: Sequence[tuple], coeffs: np.ndarray) -> Polynomial:
    return Polynomial(ambient_dim, {e: float(c) for e, c in zip(monomials, coeffs)}, FLOAT)


def _fit_average(ctx: _FitContext, f: Polynomial, cond_cap: float):
    responses, ses = ctx.responses(f)
    design = ctx.design(ctx.monomials)
    coeffs, condition, rms = _scaled_lstsq(design, responses, cond_cap)
    return _poly_from_coeffs(ctx.model.ambient_dim, ctx.monomials, coeffs), responses, ses, condition, rms


def _certificate_fit(
    model: IsoparametricModel,
    f: Polynomial,
    seed: int,
    probe: Optional[Polynomial],
    sample_points: Optional[int],
    mc_samples: Optional[int],
    h: Optional[float],
    cond_cap: float,
) -> AveragingCertificate:
    degree = f.homogeneous_degree()
    f = f.to_float()
    ctx = _FitContext(model, degree, seed, sample_points, mc_samples, h)
    avg, responses, ses, condition, rms = _fit_average(ctx, f, cond_cap)

    # identity residuals, statistical versions reusing the same cloud
    avg_values = avg.eval_many(ctx.sampler.points)
    probe_levels = ctx.levels[: min(8, len(ctx.levels))]
    leaf_var = 0.0
    for level in probe_levels:
        e1, _ = ctx.sampler.leaf_average_values(avg_values, float(level), h=ctx.h)
        e2, _ = ctx.sampler.leaf_average_values(avg_values ** 2, float(level), h=ctx.h)
        leaf_var = max(leaf_var, e2 - e1 * e1)
    leaf_constancy = math.sqrt(max(leaf_var, 0.0))

    re_responses = np.empty(len(ctx.points))
    for j, level in enumerate(ctx.levels):
        re_responses[j], _ = ctx.sampler.leaf_average_values(avg_values, float(level), h=ctx.h)
    re_coeffs, _, _ = _scaled_lstsq(ctx.design(ctx.monomials), re_responses, cond_cap)
    avg_again = _poly_from_coeffs(model.ambient_dim, ctx.monomials, re_coeffs)
    idempotence = sphere_norm(avg_again - avg)

    lap_f = f.laplacian()
    if degree >= 2 and not lap_f.is_zero:
        lap_monomials = monomial_basis(model.ambient_dim, degree - 2)
        lap_responses, _ = ctx.responses(lap_f)
        lap_coeffs, _, _ = _scaled_lstsq(ctx.design(lap_monomials), lap_responses, cond_cap)
        lap_avg = _poly_from_coeffs(model.ambient_dim, lap_monomials, lap_coeffs)
    else:
        lap_avg = Polynomial.zero(model.ambient_dim, FLOAT)
    laplacian_commutation = sphere_norm(avg.laplacian() - lap_avg)

    probe = cycle_probe(f) if probe is None else probe.to_float()
    probe_responses, _ = ctx.responses(probe)
    probe_coeffs, _, _ = _scaled_lstsq(
        ctx.design(monomial_basis(model.ambient_dim, probe.homogeneous_degree())),
        probe_responses,
        cond_cap,
    )
    probe_avg = _poly_from_coeffs(
        model.ambient_dim, monomial_basis(model.ambient_dim, probe.homogeneous_degree()), probe_coeffs
    )
    selfadjoint_gap = abs(sphere_inner(avg, probe) - sphere_inner(f, probe_avg))

    residuals = {
        "idempotence": idempotence,
        "leaf_constancy": leaf_constancy,
        "laplacian_commutation": laplacian_commutation,
        "contraction_slack": max(0.0, -(sphere_mean(f * f) - sphere_mean(avg * avg))),
        "selfadjoint_gap": selfadjoint_gap,
    }
    fit = {
        "sample_count": ctx.sample_count,
        "mc_samples": ctx.mc_samples,
        "bandwidth": ctx.h,
        "condition": condition,
        "residual_rms": rms,
        "max_point_se": float(np.max(ses)) if len(ses) else 0.0,
    }
    return AveragingCertificate(
        model=model.describe(),
        engine=ENGINE_VANDERMONDE,
        mode=FLOAT,
        degree=degree,
        input_text=format_polynomial(f),
        average_text=format_polynomial(avg),
        residuals=residuals,
        exact=False,
        seed=seed,
        fit=fit,
        average_poly=avg,
    )


# -- public operations -------------------------------------------------------


def average(
    model,
    f: Polynomial,
    *,
    seed: int = 0,
    probe: Optional[Polynomial] = None,
    sample_points: Optional[int] = None,
    mc_samples: Optional[int] = None,
    h: Optional[float] = None,
    cond_cap: float = 1e8,
) -> AveragingCertificate:
    """Average a homogeneous polynomial, with a populated certificate.

    Exact engine for group/torus models; level-set fit engine for
    isoparametric models.
    """
    if not f.is_homogeneous():
        raise ValueError("average expects a homogeneous polynomial")
    if has_exact_average(model):
        return _certificate_exact(model, f, seed, probe)
    if isinstance(model, IsoparametricModel):
        return _certificate_fit(model, f, seed, probe, sample_points, mc_samples, h, cond_cap)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def average_structured(
    model: IsoparametricModel,
    f: Polynomial,
    gens,
    *,
    seed: int = 0,
    sample_points: Optional[int] = None,
    mc_samples: Optional[int] = None,
    h: Optional[float] = None,
    tol: float = 1e-2,
    cond_cap: float = 1e8,
) -> StructuredAverageResult:
    """Fit the average of ``f`` inside the generator algebra's degree slice.

    Much smaller and better conditioned than the full monomial fit; raises
    :class:`BasisDeficient` when the slice cannot explain the sampled leaf
    averages (residual RMS above ``tol``), which is evidence the generator
    set is incomplete.
    """
    if not f.is_homogeneous():
        raise ValueError("average_structured expects a homogeneous polynomial")
    degree = f.homogeneous_degree()
    generators = [p.to_float() for p in gens.generators]
    if not generators:
        raise BasisDeficient("empty generator set")
    products = generator_products(generators, degree)
    if not products:
        raise BasisDeficient(
            f"no generator products reach degree {degree}"
        )
    f = f.to_float()
    ctx = _FitContext(model, degree, seed, sample_points, mc_samples, h)
    responses, ses = ctx.responses(f)

    columns = [poly.eval_many(ctx.points) for _, poly in products]
    design = np.column_stack(columns)
    coeffs, condition, rms = _scaled_lstsq(design, responses, cond_cap)

    mono_coeffs, _, mono_rms = _scaled_lstsq(ctx.design(ctx.monomials), responses, cond_cap)

    if rms > tol:
        raise BasisDeficient(
            f"structured residual {rms:.4g} above tolerance {tol:g}", residual=rms
        )
    poly = Polynomial.zero(model.ambient_dim, FLOAT)
    for c, (_, basis_poly) in zip(coeffs, products):
        poly = poly + basis_poly.scale(float(c))
    return StructuredAverageResult(
        polynomial=poly,
        coefficients=[float(c) for c in coeffs],
        patterns=[pattern for pattern, _ in products],
        residual_rms=rms,
        unstructured_residual_rms=mono_rms,
        condition=condition,
        seed=seed,
        sample_count=ctx.sample_count,
        mc_samples=ctx.mc_samples,
        point_ses=[float(s) for s in ses],
    )


def verify_operator_identities(
    model,
    f: Polynomial,
    g: Polynomial,
    *,
    seed: int = 0,
    tol: Optional[float] = None,
    sample_points: Optional[int] = None,
    mc_samples: Optional[int] = None,
    h: Optional[float] = None,
) -> IdentityReport:
    """Check the five operator identities for the pair ``(f, g)``.

    (i) idempotence, (ii) self-adjointness of the sphere pairing,
    (iii) contraction, (iv) the module property over a basic multiplier,
    (v) commutation with the Laplacian.  Exact models are checked exactly
    (default tolerance 0 in rational mode, 1e-10 for floating matrix
    entries); isoparametric models statistically.
    Raises :class:`IdentityViolation` naming the worst offender.
    """
    if has_exact_average(model):
        if tol is None:
            tolerance = 0.0 if getattr(model, "mode", EXACT) == EXACT else 1e-10
        else:
            tolerance = tol
        avg_f = model.reynolds(f)
        avg_g = model.reynolds(g)
        residuals = {
            "idempotence": sphere_norm(model.reynolds(avg_f) - avg_f),
            "selfadjoint": abs(float(sphere_inner(avg_f, g) - sphere_inner(f, avg_g))),
            "contraction": max(0.0, -float(sphere_mean(f * f) - sphere_mean(avg_f * avg_f))),
            "module": sphere_norm(model.reynolds(avg_f * g) - avg_f * avg_g),
            "laplacian": sphere_norm(avg_f.laplacian() - model.reynolds(f.laplacian())),
        }
        engine = ENGINE_EXACT
    elif isinstance(model, IsoparametricModel):
        # statistical regime: residuals are scale-normalized by the operand
        # norms so the tolerance means the same thing for every probe
        tolerance = 0.05 if tol is None else tol
        cert_f = average(model, f, seed=seed, probe=g, sample_points=sample_points,
                         mc_samples=mc_samples, h=h)
        avg_f = cert_f.average_poly
        cert_g = average(model, g, seed=seed + 1, probe=f, sample_points=sample_points,
                         mc_samples=mc_samples, h=h)
        avg_g = cert_g.average_poly
        module_cert = average(model, (avg_f * g.to_float()), seed=seed + 2,
                              sample_points=sample_points, mc_samples=mc_samples, h=h)
        scale_f = max(sphere_norm(f), 1e-12)
        scale_g = max(sphere_norm(g), 1e-12)
        scale_lap = max(sphere_norm(f.laplacian()), scale_f)
        residuals = {
            "idempotence": cert_f.residuals["idempotence"] / scale_f,
            "selfadjoint": abs(sphere_inner(avg_f, g.to_float())
                               - sphere_inner(f.to_float(), avg_g)) / (scale_f * scale_g),
            "contraction": cert_f.residuals["contraction_slack"] / (scale_f * scale_f),
            "module": sphere_norm(module_cert.average_poly - avg_f * avg_g) / (scale_f * scale_g),
            "laplacian": cert_f.residuals["laplacian_commutation"] / scale_lap,
        }
        engine = ENGINE_VANDERMONDE
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")

    worst = max(residuals, key=lambda k: residuals[k])
    passed = residuals[worst] <= tolerance
    report = IdentityReport(
        model=model.describe(),
        engine=engine,
        residuals=residuals,
        tolerance=tolerance,
        passed=passed,
    )
    if not passed:
        error = IdentityViolation(worst, residuals[worst])
        error.report = report
        raise error
    return report
