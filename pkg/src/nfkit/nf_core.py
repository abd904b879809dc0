"""Exact finite-dimensional correlation-splitting identities.

Everything here lives on a joint Gaussian vector ``V = (initial block,
excitation block)`` and polynomial functionals of it.  Two independent routes
to the same Gaussian expectations are provided:

* :func:`gaussian_expectation` computes moments by Wick pairing of central
  moments (the classic Isserlis construction), and
* :func:`averaged_shift_expectation` applies the three exponentiated
  second-order derivative operators (initial/initial, initial/excitation,
  excitation/excitation) to the polynomial and evaluates at the mean.

On polynomials both routes terminate after finitely many exact arithmetic
steps, so they must agree to roundoff; the test suite checks them against
each other and against the splitting identity
``E[u_t F] = m_t E[F] + sum_i C[i,t] E[dF/dv_i] + sum_j C[t,j] E[dF/du_j]``
with ``i`` running over initial-value variables and ``j`` over excitation
variables.  Covariance entries are used directly as discrete covariances
(unit quadrature weights); continuous-time weighting enters only in the
effective-intensity quadratures elsewhere.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import DegreeCapExceeded, DimensionMismatch, NonPositiveSemidefinite
from .polynomials import MultiPolynomial

DEFAULT_DEGREE_CAP = 12

SHIFT_KINDS = ("x0x0", "x0xi", "xixi")


@dataclass(frozen=True)
class VariableLayout:
    """Partition of the joint variables into initial and excitation blocks.

    Variables ``0 .. n_initial-1`` are initial values; the remaining
    ``n_components * n_times`` are excitation components flattened
    component-major, so component ``k`` at grid node ``n`` sits at
    ``n_initial + k * n_times + n``.
    """

    n_initial: int = 1
    n_components: int = 1
    n_times: int = 1

    def __post_init__(self):
        if self.n_initial < 1 or self.n_components < 1 or self.n_times < 1:
            raise DimensionMismatch("layout blocks must be non-empty")

    @property
    def total(self) -> int:
        return self.n_initial + self.n_components * self.n_times

    @property
    def initial_indices(self) -> range:
        return range(self.n_initial)

    @property
    def xi_indices(self) -> range:
        return range(self.n_initial, self.total)

    def xi_index(self, component: int, node: int) -> int:
        if not (0 <= component < self.n_components and 0 <= node < self.n_times):
            raise DimensionMismatch("component/node out of range")
        return self.n_initial + component * self.n_times + node

    def names(self) -> tuple[str, ...]:
        if self.n_initial == 1 and self.n_components == 1:
            return ("nu",) + tuple(f"u{n+1}" for n in range(self.n_times))
        initial = tuple(f"nu{i+1}" for i in range(self.n_initial))
        xi = tuple(
            f"u{k+1}_{n+1}" for k in range(self.n_components) for n in range(self.n_times)
        )
        return initial + xi

    @classmethod
    def scalar(cls, n_vars: int) -> "VariableLayout":
        if n_vars < 2:
            raise DimensionMismatch("scalar layout needs nu plus at least one grid variable")
        return cls(n_initial=1, n_components=1, n_times=n_vars - 1)


@dataclass(frozen=True)
class GaussianMomentSpec:
    """Mean vector and covariance matrix of the joint Gaussian variables."""

    mean: np.ndarray
    cov: np.ndarray
    _central_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise DimensionMismatch("mean (n,) and cov (n, n) required")
        scale = max(1.0, float(np.abs(cov).max()))
        if not np.allclose(cov, cov.T, atol=1e-12 * scale):
            raise NonPositiveSemidefinite("covariance must be symmetric")
        low = float(np.linalg.eigvalsh(0.5 * (cov + cov.T)).min())
        if low < -1e-10 * scale:
            raise NonPositiveSemidefinite(f"covariance eigenvalue {low:.3e} is negative")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return int(self.mean.size)


def _central_moment(spec: GaussianMomentSpec, idx: tuple[int, ...]) -> float:
    """Central Gaussian moment E[prod of zero-mean components at ``idx``].

    ``idx`` is a sorted tuple of variable indices with repetition; recursion
    pairs the first index with each distinct partner (Wick pairing), with
    memoization on the remaining multiset.
    """
    if len(idx) % 2 == 1:
        return 0.0
    if not idx:
        return 1.0
    cache = spec._central_cache
    hit = cache.get(idx)
    if hit is not None:
        return hit
    i0, rest = idx[0], idx[1:]
    total = 0.0
    prev = -1
    for pos, v in enumerate(rest):
        if v == prev:
            continue
        prev = v
        mult = 0
        for w in rest[pos:]:
            if w != v:
                break
            mult += 1
        c = spec.cov[i0, v]
        if c != 0.0:
            total += mult * c * _central_moment(spec, rest[:pos] + rest[pos + 1 :])
    cache[idx] = total
    return total


def isserlis_moment(exponents, spec: GaussianMomentSpec, cap: int = DEFAULT_DEGREE_CAP) -> float:
    """Exact mixed moment ``E[prod_i V_i^{e_i}]`` by Wick pairing.

    The mean is expanded binomially per variable and each resulting central
    moment summed over perfect pairings.  Total degree above ``cap``
    (default 12) raises :class:`DegreeCapExceeded` since the pairing count
    grows as (d-1)!!.
    """
    exps = tuple(int(e) for e in exponents)
    if len(exps) != spec.dim:
        raise DimensionMismatch(f"{len(exps)} exponents for {spec.dim} variables")
    if any(e < 0 for e in exps):
        raise ValueError("exponents must be non-negative")
    degree = sum(exps)
    if degree > cap:
        raise DegreeCapExceeded(f"total degree {degree} exceeds cap {cap}")

    active = [i for i, e in enumerate(exps) if e > 0]
    choices = []
    for i in active:
        if spec.mean[i] == 0.0:
            choices.append((exps[i],))
        else:
            choices.append(tuple(range(exps[i] + 1)))

    total = 0.0
    for ks in itertools.product(*choices):
        weight = 1.0
        idx: list[int] = []
        for i, k in zip(active, ks):
            e = exps[i]
            if k < e:
                weight *= comb(e, k) * spec.mean[i] ** (e - k)
            idx.extend([i] * k)
        total += weight * _central_moment(spec, tuple(idx))
    return total


def gaussian_expectation(
    p: MultiPolynomial, spec: GaussianMomentSpec, cap: int = DEFAULT_DEGREE_CAP
) -> float:
    """Expectation of a polynomial functional under the joint Gaussian."""
    if p.n_vars != spec.dim:
        raise DimensionMismatch(f"{p.n_vars}-variable polynomial for {spec.dim} variables")
    return sum(c * isserlis_moment(e, spec, cap) for e, c in p.canonical_terms())


# -- exponentiated quadratic shift operators ---------------------------------


def _operator_pairs(
    which: str, spec: GaussianMomentSpec, layout: VariableLayout, weights: np.ndarray | None
):
    """Coefficient list [(i, j, a)] of the generator ``sum a * d_i d_j``."""
    if which not in SHIFT_KINDS:
        raise ValueError(f"unknown shift kind {which!r}; expected one of {SHIFT_KINDS}")
    w = np.ones(layout.total)
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.size != layout.total - layout.n_initial:
            raise DimensionMismatch("one weight per excitation variable required")
        w[layout.n_initial :] = weights
    cov = spec.cov
    pairs = []
    if which == "x0x0":
        for i in layout.initial_indices:
            for j in layout.initial_indices:
                if j < i:
                    continue
                a = cov[i, j] * (0.5 if i == j else 1.0)
                if a != 0.0:
                    pairs.append((i, j, a))
    elif which == "x0xi":
        for i in layout.initial_indices:
            for j in layout.xi_indices:
                a = cov[i, j] * w[j]
                if a != 0.0:
                    pairs.append((i, j, a))
    else:
        for i in layout.xi_indices:
            for j in layout.xi_indices:
                if j < i:
                    continue
                a = cov[i, j] * w[i] * w[j] * (0.5 if i == j else 1.0)
                if a != 0.0:
                    pairs.append((i, j, a))
    return pairs


def _generator_apply(p: MultiPolynomial, pairs) -> MultiPolynomial:
    terms: dict[tuple, float] = {}
    for i, j, a in pairs:
        q = p.partial(i).partial(j)
        for e, c in q.terms.items():
            terms[e] = terms.get(e, 0.0) + a * c
    return MultiPolynomial(p.n_vars, terms, p.names)


def apply_quadratic_shift(
    p: MultiPolynomial,
    which: str,
    spec: GaussianMomentSpec,
    layout: VariableLayout | None = None,
    weights: np.ndarray | None = None,
) -> MultiPolynomial:
    """Apply one exponentiated quadratic shift operator to a polynomial.

    ``which`` selects the generator: ``"x0x0"`` is
    ``(1/2) sum C[i,i'] d_i d_i'`` over the initial block, ``"x0xi"`` is
    ``sum C[i,j] w_j d_i d_j`` over cross pairs, ``"xixi"`` is
    ``(1/2) sum C[j,j'] w_j w_j' d_j d_j'`` over the excitation block.  The
    exponential series terminates exactly because every generator
    application lowers the total degree by two.

    ``weights`` are per-excitation-node quadrature weights and default to
    one, which is the exact discrete-covariance convention used by all
    identity checks.
    """
    if p.n_vars != spec.dim:
        raise DimensionMismatch(f"{p.n_vars}-variable polynomial for {spec.dim} variables")
    layout = layout or VariableLayout.scalar(p.n_vars)
    if layout.total != p.n_vars:
        raise DimensionMismatch("layout does not match polynomial variable count")
    pairs = _operator_pairs(which, spec, layout, weights)
    result = p
    term = p
    k = 0
    while not term.is_zero():
        k += 1
        term = _generator_apply(term, pairs) * (1.0 / k)
        result = result + term
    return result


def averaged_shift_expectation(
    p: MultiPolynomial,
    spec: GaussianMomentSpec,
    layout: VariableLayout | None = None,
) -> float:
    """Expectation via the product of the three shift operators.

    Applies the initial/initial, cross and excitation/excitation operators
    (they commute, so the order is immaterial) and evaluates the resulting
    polynomial at the mean vector.  Agrees with
    :func:`gaussian_expectation` to roundoff.
    """
    layout = layout or VariableLayout.scalar(p.n_vars)
    out = p
    for which in SHIFT_KINDS:
        out = apply_quadratic_shift(out, which, spec, layout)
    return out.evaluate(spec.mean)


# -- the splitting identity ---------------------------------------------------


def nf_lhs(
    t_index: int,
    F: MultiPolynomial,
    spec: GaussianMomentSpec,
    cap: int = DEFAULT_DEGREE_CAP,
) -> float:
    """Left side ``E[u_t F]`` evaluated by Wick pairing."""
    u_t = MultiPolynomial.variable(t_index, F.n_vars, F.names)
    return gaussian_expectation(u_t * F, spec, cap)


def nf_rhs_terms(
    t_index: int,
    F: MultiPolynomial,
    spec: GaussianMomentSpec,
    layout: VariableLayout | None = None,
    cap: int = DEFAULT_DEGREE_CAP,
) -> tuple[float, float, float]:
    """The three split contributions (mean, initial block, excitation block).

    Zero means and zero covariances contribute exact stored zeros, so the
    classical uncorrelated, centred reduction is term-for-term exact.
    """
    layout = layout or VariableLayout.scalar(F.n_vars)
    if layout.total != F.n_vars or F.n_vars != spec.dim:
        raise DimensionMismatch("layout, polynomial and moment spec sizes must agree")
    if t_index not in layout.xi_indices:
        raise DimensionMismatch(f"t_index {t_index} does not name an excitation variable")

    m_t = spec.mean[t_index]
    mean_term = m_t * gaussian_expectation(F, spec, cap) if m_t != 0.0 else 0.0

    initial_term = 0.0
    for i in layout.initial_indices:
        c = spec.cov[i, t_index]
        if c != 0.0:
            initial_term += c * gaussian_expectation(F.partial(i), spec, cap)

    excitation_term = 0.0
    for j in layout.xi_indices:
        c = spec.cov[t_index, j]
        if c != 0.0:
            excitation_term += c * gaussian_expectation(F.partial(j), spec, cap)

    return mean_term, initial_term, excitation_term


def nf_rhs(
    t_index: int,
    F: MultiPolynomial,
    spec: GaussianMomentSpec,
    layout: VariableLayout | None = None,
    cap: int = DEFAULT_DEGREE_CAP,
) -> float:
    """Right side of the splitting identity (sum of the three terms)."""
    a, b, c = nf_rhs_terms(t_index, F, spec, layout, cap)
    return a + b + c


# -- operator lemmas -----------------------------------------------------------


@dataclass(frozen=True)
class LemmaReport:
    """Max-norm residuals of the operator-algebra lemmas on one polynomial."""

    linearity: dict
    derivative_commutation: dict
    ordering: float
    product_x0x0: float
    product_x0xi: float
    product_xixi: float

    @property
    def max_residual(self) -> float:
        vals = list(self.linearity.values()) + list(self.derivative_commutation.values())
        vals += [self.ordering, self.product_x0x0, self.product_x0xi, self.product_xixi]
        return max(vals)

    def as_dict(self) -> dict:
        out = {f"linearity_{k}": v for k, v in self.linearity.items()}
        out.update({f"commutation_{k}": v for k, v in self.derivative_commutation.items()})
        out["ordering"] = self.ordering
        out["product_x0x0"] = self.product_x0x0
        out["product_x0xi"] = self.product_x0xi
        out["product_xixi"] = self.product_xixi
        return out


def lemma_residuals(
    p: MultiPolynomial,
    spec: GaussianMomentSpec,
    layout: VariableLayout | None = None,
) -> LemmaReport:
    """Residuals of linearity, derivative commutation, mutual operator
    commutation (all six orderings) and the multiply-then-shift splits.

    All quantities are coefficient-table max norms and vanish exactly for
    constant polynomials.
    """
    layout = layout or VariableLayout.scalar(p.n_vars)
    shift = lambda q, which: apply_quadratic_shift(q, which, spec, layout)

    # linearity on an alternating split of the terms
    items = p.canonical_terms()
    p1 = MultiPolynomial(p.n_vars, dict(items[0::2]), p.names)
    p2 = MultiPolynomial(p.n_vars, dict(items[1::2]), p.names)
    alpha, beta = 0.7, -1.3
    linearity = {}
    for which in SHIFT_KINDS:
        lhs = shift(alpha * p1 + beta * p2, which)
        rhs = alpha * shift(p1, which) + beta * shift(p2, which)
        linearity[which] = lhs.distance(rhs)

    # each operator commutes with every partial derivative
    commutation = {}
    for which in SHIFT_KINDS:
        worst = 0.0
        for v in range(p.n_vars):
            worst = max(worst, shift(p, which).partial(v).distance(shift(p.partial(v), which)))
        commutation[which] = worst

    # all six orderings of the three operators agree
    composed = []
    for order in itertools.permutations(SHIFT_KINDS):
        q = p
        for which in order:
            q = shift(q, which)
        composed.append(q)
    ordering = max(composed[0].distance(q) for q in composed[1:])

    # multiplying by the last-node excitation variable, then shifting
    t = layout.xi_indices[-1]
    u_t = MultiPolynomial.variable(t, p.n_vars, p.names)
    ut_p = u_t * p

    product_x0x0 = shift(ut_p, "x0x0").distance(u_t * shift(p, "x0x0"))

    expect = u_t * shift(p, "x0xi")
    for i in layout.initial_indices:
        c = spec.cov[i, t]
        if c != 0.0:
            expect = expect + c * shift(p.partial(i), "x0xi")
    product_x0xi = shift(ut_p, "x0xi").distance(expect)

    expect = u_t * shift(p, "xixi")
    for j in layout.xi_indices:
        c = spec.cov[t, j]
        if c != 0.0:
            expect = expect + c * shift(p.partial(j), "xixi")
    product_xixi = shift(ut_p, "xixi").distance(expect)

    return LemmaReport(
        linearity=linearity,
        derivative_commutation=commutation,
        ordering=ordering,
        product_x0x0=product_x0x0,
        product_x0xi=product_x0xi,
        product_xixi=product_xixi,
    )


# -- randomized inputs for the verification suites ----------------------------


def random_moment_spec(rng: np.random.Generator, dim: int, scale: float = 1.0) -> GaussianMomentSpec:
    """Random well-conditioned moment spec (PSD by construction)."""
    a = rng.standard_normal((dim, dim))
    cov = (a @ a.T) * (scale**2 / dim) + 1e-3 * scale**2 * np.eye(dim)
    mean = rng.standard_normal(dim) * scale
    return GaussianMomentSpec(mean=mean, cov=cov)


def random_polynomial(
    rng: np.random.Generator,
    n_vars: int,
    max_degree: int,
    max_terms: int = 6,
    names: tuple[str, ...] | None = None,
) -> MultiPolynomial:
    """Random sparse polynomial with total degree at most ``max_degree``."""
    n_terms = int(rng.integers(1, max_terms + 1))
    terms: dict[tuple, float] = {}
    for _ in range(n_terms):
        degree = int(rng.integers(0, max_degree + 1))
        exps = [0] * n_vars
        for _ in range(degree):
            exps[int(rng.integers(0, n_vars))] += 1
        coeff = float(rng.uniform(-2.0, 2.0))
        key = tuple(exps)
        terms[key] = terms.get(key, 0.0) + coeff
    return MultiPolynomial(n_vars, terms, names)
