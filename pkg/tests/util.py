"""Shared helpers for the test suite."""

from leafavg import EXACT, Polynomial, monomial_basis


def random_homogeneous(dim, degree, rng, n_terms=6, mode=EXACT):
    """Random sparse homogeneous polynomial with small integer coefficients."""
    basis = monomial_basis(dim, degree)
    picks = rng.choice(len(basis), size=min(n_terms, len(basis)), replace=False)
    coeffs = rng.integers(-5, 6, size=len(picks))
    terms = {basis[int(i)]: int(c) for i, c in zip(picks, coeffs) if c != 0}
    if not terms:
        terms = {basis[0]: 1}
    if mode != EXACT:
        terms = {e: float(c) for e, c in terms.items()}
    return Polynomial(dim, terms, mode)
