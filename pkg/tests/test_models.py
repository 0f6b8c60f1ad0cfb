import math
from fractions import Fraction

import numpy as np
import pytest

from leafavg import (
    EXACT,
    FLOAT,
    EffectiveSampleTooSmall,
    GroupTooLarge,
    IsoparametricModel,
    NearSingularLeaf,
    NonOrthogonalGenerator,
    NotCartanMunzner,
    OffSphere,
    Polynomial,
    ScalarModeMismatch,
    group_closure,
    parse_polynomial,
    radius_squared,
    sample_sphere,
    validate_munzner,
)
from leafavg.models import LevelSetSampler, sample_sphere_many

from util import random_homogeneous


def P(text, dim, mode=EXACT):
    return parse_polynomial(text, dim, mode)


# -- group closure --------------------------------------------------------------


def test_closure_of_minus_identity():
    model = group_closure([[[-1, 0], [0, -1]]])
    assert model.order == 2


def test_closure_of_quarter_turn():
    model = group_closure([[[0, -1], [1, 0]]])
    assert model.order == 4


def test_closure_hyperoctahedral(b2_model):
    # swap and sign flip generate the order-8 hyperoctahedral group
    assert b2_model.order == 8


def test_closure_rejects_non_orthogonal():
    with pytest.raises(NonOrthogonalGenerator):
        group_closure([[[1, 1], [0, 1]]])


def test_closure_detects_infinite_group():
    # a rational rotation of infinite order: cos = 3/5, sin = 4/5
    gen = [[Fraction(3, 5), Fraction(-4, 5)], [Fraction(4, 5), Fraction(3, 5)]]
    with pytest.raises(GroupTooLarge):
        group_closure([gen], max_group_size=64)


def test_float_closure_dedup():
    s = math.sin(2 * math.pi / 3)
    rot = [[-0.5, -s], [s, -0.5]]
    refl = [[1.0, 0.0], [0.0, -1.0]]
    model = group_closure([rot, refl], mode=FLOAT)
    assert model.order == 6


# -- group averaging -------------------------------------------------------------


def test_reynolds_odd_function_vanishes():
    model = group_closure([[[-1, 0], [0, -1]]])
    assert model.reynolds(P("x1", 2)).is_zero


def test_reynolds_quarter_turn_symmetrizes(c4_model):
    assert c4_model.reynolds(P("x1^2", 2)) == P("1/2 * x1^2 + 1/2 * x2^2", 2)


def test_reynolds_mode_mismatch(c4_model):
    with pytest.raises(ScalarModeMismatch):
        c4_model.reynolds(P("x1", 2, FLOAT))


def test_reynolds_idempotent_and_leaf_constant(b3_model):
    rng = np.random.default_rng(5)
    f = random_homogeneous(3, 4, rng)
    avg = b3_model.reynolds(f)
    assert b3_model.reynolds(avg) == avg
    # exact leaf constancy at a rational point
    p = (Fraction(1, 3), Fraction(-2, 5), Fraction(7, 11))
    values = {avg.eval(q) for q in b3_model.orbit(p)}
    assert len(values) == 1


def test_same_leaf_group_antipodal():
    model = group_closure([[[-1, 0], [0, -1]]])
    assert model.same_leaf((0.3, -0.7), (-0.3, 0.7), 1e-12)
    assert not model.same_leaf((0.3, -0.7), (0.3, 0.7), 1e-12)


# -- torus models ----------------------------------------------------------------


def test_torus_reynolds_examples(t2_model):
    assert t2_model.reynolds(P("x1 * x3", 4)).is_zero
    assert t2_model.reynolds(P("x1^2", 4)) == P("1/2 * x1^2 + 1/2 * x2^2", 4)


def test_torus_reynolds_keeps_balanced_terms(hopf_model):
    # Re(z1 zbar2) is invariant for the diagonal circle
    invariant = P("x1 * x3 + x2 * x4", 4)
    assert hopf_model.reynolds(invariant) == invariant


def test_torus_reynolds_float_round_trip(t2_model):
    f = P("x1^2", 4, FLOAT)
    avg = t2_model.reynolds(f)
    assert avg.mode == FLOAT
    assert avg == P("0.5 * x1^2 + 0.5 * x2^2", 4, FLOAT)


def test_torus_reynolds_idempotent_degree_preserving(t2_model):
    rng = np.random.default_rng(11)
    for degree in (2, 3, 4, 6):
        f = random_homogeneous(4, degree, rng)
        avg = t2_model.reynolds(f)
        assert t2_model.reynolds(avg) == avg
        assert avg.is_zero or avg.homogeneous_degree() == degree
        lap = t2_model.reynolds(f.laplacian())
        assert avg.laplacian() == lap


def test_torus_same_leaf_equal_plane_radii(t2_model):
    a, b = 0.6, 0.8
    assert t2_model.same_leaf((a, 0, b, 0), (0, a, 0, b), 1e-9)
    assert not t2_model.same_leaf((a, 0, b, 0), (b, 0, a, 0), 1e-9)


def test_hopf_same_leaf_needs_equal_phase_difference(hopf_model):
    p = (0.6, 0.0, 0.8, 0.0)
    theta = 1.1
    both = (
        0.6 * math.cos(theta), 0.6 * math.sin(theta),
        0.8 * math.cos(theta), 0.8 * math.sin(theta),
    )
    one = (0.6 * math.cos(theta), 0.6 * math.sin(theta), 0.8, 0.0)
    assert hopf_model.same_leaf(p, both, 1e-9)
    assert not hopf_model.same_leaf(p, one, 1e-9)


def test_weighted_circle_same_leaf(circle12_model):
    p = (0.6, 0.0, 0.8, 0.0)
    theta = 0.7
    good = (
        0.6 * math.cos(theta), 0.6 * math.sin(theta),
        0.8 * math.cos(2 * theta), 0.8 * math.sin(2 * theta),
    )
    bad = (
        0.6 * math.cos(theta), 0.6 * math.sin(theta),
        0.8 * math.cos(theta), 0.8 * math.sin(theta),
    )
    assert circle12_model.same_leaf(p, good, 1e-9)
    assert not circle12_model.same_leaf(p, bad, 1e-9)


def test_torus_same_leaf_reflexive_symmetric(t2_model):
    rng = np.random.default_rng(13)
    for _ in range(10):
        p = tuple(rng.normal(size=4))
        q = t2_model.random_leaf_mate(p, rng)
        assert t2_model.same_leaf(p, p, 1e-9)
        assert t2_model.same_leaf(p, q, 1e-7)
        assert t2_model.same_leaf(q, p, 1e-7)


def test_torus_exact_rational_mate(circle12_model):
    rng = np.random.default_rng(17)
    p = (Fraction(3, 5), Fraction(4, 5), Fraction(1, 2), Fraction(-1, 3))
    mate = circle12_model.random_leaf_mate(p, rng)
    assert all(isinstance(x, Fraction) for x in mate)
    # exact invariance of an invariant polynomial on the exact mate
    invariant = P("x1^2 + x2^2", 4)
    assert invariant.eval(mate) == invariant.eval(p)
    cubic = P("x1^2 * x3 + 2 * x1 * x2 * x4 - x2^2 * x3", 4)  # Re(z1^2 zbar2)
    assert cubic.eval(mate) == cubic.eval(p)


def test_group_transitivity_exact(b2_model):
    p = (Fraction(2, 3), Fraction(-1, 7))
    rng = np.random.default_rng(23)
    q = b2_model.random_leaf_mate(p, rng)
    r = b2_model.random_leaf_mate(q, rng)
    assert b2_model.same_leaf(p, r, 0)


# -- Cartan-Munzner admission ------------------------------------------------------


def test_munzner_linear():
    assert validate_munzner(P("x1", 3), 1) == 0


def test_munzner_quadric():
    F = P("x1^2 + x2^2 - x3^2 - x4^2", 4)
    assert validate_munzner(F, 2) == 0


def test_munzner_unbalanced_quadric_nonzero_c():
    # x1^2 + x2^2 - 3 x3^2 is not Munzner (gradient identity fails)
    with pytest.raises(NotCartanMunzner):
        validate_munzner(P("x1^2 + x2^2 - 3 * x3^2", 3), 2)
    # but a balanced quadric with unequal multiplicities has c != 0:
    # F = x1^2 - x2^2 - x3^2 on R^3 has laplacian -2 = c
    c = validate_munzner(P("x1^2 - x2^2 - x3^2", 3), 2)
    assert c == -2


def test_munzner_rejects_sabotage():
    with pytest.raises(NotCartanMunzner) as info:
        validate_munzner(P("x1^2", 4), 2)
    assert info.value.gradient_residual is not None
    # residual is |grad F|^2 - 4 r^2 = -4 (x2^2 + x3^2 + x4^2)
    residual = parse_polynomial(info.value.gradient_residual, 4)
    assert residual == radius_squared(4).scale(-4) + P("4 * x1^2", 4)


def test_munzner_planar_cubic():
    assert validate_munzner(P("x1^3 - 3 * x1 * x2^2", 2), 3) == 0


def test_munzner_rejects_inhomogeneous():
    with pytest.raises(NotCartanMunzner):
        validate_munzner(P("x1^2 + x2", 2), 2)


def test_munzner_float_tolerance():
    s3 = math.sqrt(3.0)
    text = (
        "-1 * x5^3 + 3 * x1^2 * x5 + 3 * x2^2 * x5 - 1.5 * x3^2 * x5 "
        f"- 1.5 * x4^2 * x5 + {1.5 * s3!r} * x1 * x3^2 - {1.5 * s3!r} * x1 * x4^2 "
        f"+ {3.0 * s3!r} * x2 * x3 * x4"
    )
    F = parse_polynomial(text, 5, FLOAT)
    assert validate_munzner(F, 3) == 0.0
    # perturb one coefficient beyond tolerance
    bad = F + Polynomial(5, {(0, 1, 1, 1, 0): 1e-6}, FLOAT)
    with pytest.raises(NotCartanMunzner):
        validate_munzner(bad, 3)


# -- isoparametric leaves -----------------------------------------------------------


def test_iso_same_leaf_level_predicate(iso_g2_model):
    e1 = (1.0, 0.0, 0.0, 0.0)
    e2 = (0.0, 1.0, 0.0, 0.0)
    assert iso_g2_model.same_leaf(e1, e2, 1e-9)
    e3 = (0.0, 0.0, 1.0, 0.0)
    assert not iso_g2_model.same_leaf(e1, e3, 1e-9)


def test_iso_same_leaf_requires_sphere(iso_g2_model):
    with pytest.raises(OffSphere):
        iso_g2_model.same_leaf((2.0, 0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0), 1e-9)


def test_leaf_average_of_constant_is_exact(iso_g2_model):
    p = sample_sphere(4, 5)
    one = Polynomial.constant(4, 1)
    est, se = iso_g2_model.leaf_average_mc(one, p, rng_seed=1, n=20_000)
    assert est == 1.0


def test_leaf_average_of_level_polynomial(iso_g2_model):
    p = sample_sphere(4, 12)
    assert abs(iso_g2_model.level_of(p)) < 0.9
    est, se = iso_g2_model.leaf_average_mc(iso_g2_model.F, p, rng_seed=2, n=100_000)
    assert abs(est - iso_g2_model.level_of(p)) <= max(3 * se, 3e-3)


def test_leaf_average_matches_torus_oracle(iso_g2_model, t2_model):
    rng = np.random.default_rng(31)
    f = random_homogeneous(4, 4, rng)
    oracle = t2_model.reynolds(f)
    p = sample_sphere(4, 100)
    assert abs(iso_g2_model.level_of(p)) < 1 - 2 * iso_g2_model.h
    est, se = iso_g2_model.leaf_average_mc(f, p, rng_seed=3, n=400_000)
    truth = float(oracle.eval([float(x) for x in p]))
    assert abs(est - truth) <= 4 * se


def test_leaf_average_refuses_near_focal(iso_g2_model):
    with pytest.raises(NearSingularLeaf):
        iso_g2_model.leaf_average_mc(
            Polynomial.constant(4, 1), (1.0, 0.0, 0.0, 0.0), rng_seed=0
        )


def test_leaf_average_small_sample_guard(iso_g2_model):
    p = sample_sphere(4, 5)
    with pytest.raises(EffectiveSampleTooSmall):
        iso_g2_model.leaf_average_mc(
            Polynomial.constant(4, 1), p, rng_seed=0, n=50, min_ess=1000
        )


def test_leaf_average_bitwise_reproducible(iso_g2_model):
    p = sample_sphere(4, 9)
    f = parse_polynomial("x1^2", 4)
    a = iso_g2_model.leaf_average_mc(f, p, rng_seed=7, n=50_000, worker_count=3)
    b = iso_g2_model.leaf_average_mc(f, p, rng_seed=7, n=50_000, worker_count=3)
    assert a == b
    c = iso_g2_model.leaf_average_mc(f, p, rng_seed=8, n=50_000, worker_count=3)
    assert a != c


def test_sampler_reuse_matches_direct_call(iso_g2_model):
    sampler = LevelSetSampler(iso_g2_model, 7, 50_000, worker_count=3)
    f = parse_polynomial("x1^2", 4)
    p = sample_sphere(4, 9)
    level = iso_g2_model.level_of(p)
    direct = iso_g2_model.leaf_average_mc(f, p, rng_seed=7, n=50_000, worker_count=3)
    assert sampler.leaf_average(f, level) == direct


def test_symmetry_must_preserve_levels():
    F = P("x1^2 + x2^2 - x3^2 - x4^2", 4)
    # swapping x1 and x3 flips the sign of F, so it is not a level symmetry
    swap13 = group_closure([[
        [0, 0, 1, 0],
        [0, 1, 0, 0],
        [1, 0, 0, 0],
        [0, 0, 0, 1],
    ]])
    with pytest.raises(ValueError):
        IsoparametricModel(F, 2, symmetry=swap13)


# -- sphere sampling -----------------------------------------------------------------


def test_sample_sphere_unit_norm():
    p = sample_sphere(5, 42)
    assert abs(np.linalg.norm(p) - 1.0) < 1e-12


def test_sample_sphere_deterministic():
    assert np.array_equal(sample_sphere(3, 1), sample_sphere(3, 1))


def test_sample_sphere_second_moment():
    rng = np.random.default_rng(0)
    pts = sample_sphere_many(100_000, 3, rng)
    values = pts[:, 0] ** 2
    se = values.std(ddof=1) / math.sqrt(len(values))
    assert abs(values.mean() - 1.0 / 3.0) <= 3 * se
