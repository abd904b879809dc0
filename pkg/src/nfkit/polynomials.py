"""Sparse multivariate polynomials over the variables (nu, u_1, ..., u_N).

Variable 0 (named ``nu``) plays the role of the initial value, the remaining
variables are the excitation at grid nodes.  Terms are stored as a dict from
exponent tuples to coefficients with no stored zeros, so algebra stays exact:
every operation below is integer/float arithmetic on finitely many terms and
the identity checks built on top are exact up to floating point roundoff.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import DimensionMismatch


def default_names(n_vars: int) -> tuple[str, ...]:
    """``nu, u1, ..., uN`` naming used by the scalar-theory checks."""
    return ("nu",) + tuple(f"u{i}" for i in range(1, n_vars))


class MultiPolynomial:
    """Polynomial in ``n_vars`` real variables with sparse term storage.

    Parameters
    ----------
    n_vars : int
        Number of variables; exponent tuples must carry exactly this length.
    terms : dict
        Mapping from exponent tuples to float coefficients.  Zero
        coefficients are dropped on construction.
    names : tuple of str, optional
        Per-variable display names used by ``to_text`` and the parser.
    """

    __slots__ = ("n_vars", "terms", "names")

    def __init__(self, n_vars: int, terms: dict | None = None, names: tuple[str, ...] | None = None):
        if n_vars < 1:
            raise DimensionMismatch("polynomial needs at least one variable")
        self.n_vars = int(n_vars)
        self.names = tuple(names) if names is not None else default_names(n_vars)
        if len(self.names) != self.n_vars:
            raise DimensionMismatch("one name per variable required")
        clean = {}
        for exps, coeff in (terms or {}).items():
            if len(exps) != n_vars:
                raise DimensionMismatch(f"exponent tuple {exps} does not match n_vars={n_vars}")
            if any(e < 0 for e in exps):
                raise ValueError("negative exponents are not polynomials")
            coeff = float(coeff)
            if coeff != 0.0:
                clean[tuple(int(e) for e in exps)] = clean.get(tuple(exps), 0.0) + coeff
        self.terms = {e: c for e, c in clean.items() if c != 0.0}

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, n_vars: int, names=None) -> "MultiPolynomial":
        return cls(n_vars, {}, names)

    @classmethod
    def constant(cls, value: float, n_vars: int, names=None) -> "MultiPolynomial":
        return cls(n_vars, {(0,) * n_vars: value}, names)

    @classmethod
    def variable(cls, index: int, n_vars: int, names=None) -> "MultiPolynomial":
        exps = [0] * n_vars
        exps[index] = 1
        return cls(n_vars, {tuple(exps): 1.0}, names)

    # -- algebra -----------------------------------------------------------

    def _check_compatible(self, other: "MultiPolynomial"):
        if self.n_vars != other.n_vars:
            raise DimensionMismatch(f"cannot combine {self.n_vars}-variable and {other.n_vars}-variable polynomials")

    def __add__(self, other):
        if np.isscalar(other):
            other = MultiPolynomial.constant(float(other), self.n_vars, self.names)
        self._check_compatible(other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0.0) + c
        return MultiPolynomial(self.n_vars, terms, self.names)

    __radd__ = __add__

    def __neg__(self):
        return MultiPolynomial(self.n_vars, {e: -c for e, c in self.terms.items()}, self.names)

    def __sub__(self, other):
        return self + (-other if isinstance(other, MultiPolynomial) else -float(other))

    def __mul__(self, other):
        if np.isscalar(other):
            return MultiPolynomial(
                self.n_vars, {e: c * float(other) for e, c in self.terms.items()}, self.names
            )
        self._check_compatible(other)
        terms: dict[tuple, float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                terms[key] = terms.get(key, 0.0) + c1 * c2
        return MultiPolynomial(self.n_vars, terms, self.names)

    __rmul__ = __mul__

    def partial(self, var: int) -> "MultiPolynomial":
        """Partial derivative with respect to variable ``var``."""
        if not 0 <= var < self.n_vars:
            raise DimensionMismatch(f"variable index {var} out of range")
        terms = {}
        for e, c in self.terms.items():
            if e[var] > 0:
                key = e[:var] + (e[var] - 1,) + e[var + 1 :]
                terms[key] = terms.get(key, 0.0) + c * e[var]
        return MultiPolynomial(self.n_vars, terms, self.names)

    def evaluate(self, point) -> float:
        point = np.asarray(point, dtype=float)
        if point.shape != (self.n_vars,):
            raise DimensionMismatch(f"evaluation point must have shape ({self.n_vars},)")
        total = 0.0
        for e, c in self.canonical_terms():
            v = c
            for x, p in zip(point, e):
                if p:
                    v *= x**p
            total += v
        return total

    __call__ = evaluate

    # -- inspection --------------------------------------------------------

    def total_degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def canonical_terms(self):
        """Terms in graded lexicographic order (degree first, then exponents)."""
        return sorted(self.terms.items(), key=lambda item: (sum(item[0]), item[0]))

    def coefficient(self, exps) -> float:
        return self.terms.get(tuple(exps), 0.0)

    def distance(self, other: "MultiPolynomial") -> float:
        """Max-norm distance between coefficient tables."""
        self._check_compatible(other)
        keys = set(self.terms) | set(other.terms)
        return max((abs(self.terms.get(k, 0.0) - other.terms.get(k, 0.0)) for k in keys), default=0.0)

    def __eq__(self, other):
        return (
            isinstance(other, MultiPolynomial)
            and self.n_vars == other.n_vars
            and self.terms == other.terms
        )

    def __repr__(self):
        return f"MultiPolynomial({self.to_text()!r})"

    def to_text(self) -> str:
        """Render in the plain-text term syntax accepted by :func:`parse_polynomial`."""
        if not self.terms:
            return "0"
        out = ""
        for e, c in self.canonical_terms():
            factors = [repr(abs(c))]
            for name, p in zip(self.names, e):
                if p == 1:
                    factors.append(name)
                elif p > 1:
                    factors.append(f"{name}^{p}")
            body = " * ".join(factors)
            if not out:
                out = ("-" if c < 0 else "") + body
            else:
                out += (" - " if c < 0 else " + ") + body
        return out


_FACTOR = re.compile(r"^([A-Za-z][A-Za-z0-9_]*)(?:\^(\d+))?$")


def _split_terms(text: str) -> list[str]:
    """Split on +/- term separators, keeping signs that belong to numbers
    (exponents like 3e-2, or a signed factor right after '*' or '^')."""
    pieces, buf, prev = [], [], ""
    for ch in text:
        if ch in "+-" and prev not in ("", "e", "E", "*", "^", "+", "-"):
            pieces.append("".join(buf))
            buf = [ch]
        else:
            buf.append(ch)
        if not ch.isspace():
            prev = ch
    pieces.append("".join(buf))
    return [p.strip() for p in pieces if p.strip()]


def parse_polynomial(text: str, n_vars: int, names: tuple[str, ...] | None = None) -> MultiPolynomial:
    """Parse ``"coeff * var^e * ..."`` terms joined by ``+``/``-``.

    Variables are named ``nu`` and ``u1..uN`` unless ``names`` overrides
    them (the vector checks use ``u<k>_<n>``).  A bare name means exponent 1,
    a bare number a constant term.
    """
    names = tuple(names) if names is not None else default_names(n_vars)
    if len(names) != n_vars:
        raise DimensionMismatch("one name per variable required")
    index = {name: i for i, name in enumerate(names)}
    stripped = text.strip()
    if not stripped:
        raise ValueError("empty polynomial text")
    pieces = _split_terms(stripped)
    terms: dict[tuple, float] = {}
    for piece in pieces:
        if not piece:
            continue
        sign = 1.0
        while piece and piece[0] in "+-":
            if piece[0] == "-":
                sign = -sign
            piece = piece[1:].strip()
        if not piece:
            raise ValueError(f"dangling sign in {text!r}")
        coeff = sign
        exps = [0] * n_vars
        for factor in (f.strip() for f in piece.split("*")):
            m = _FACTOR.match(factor)
            if m:
                name, power = m.group(1), int(m.group(2) or 1)
                if name not in index:
                    raise ValueError(f"unknown variable {name!r}; expected one of {names}")
                exps[index[name]] += power
            else:
                try:
                    coeff *= float(factor)
                except ValueError:
                    raise ValueError(f"cannot parse factor {factor!r} in {text!r}") from None
        key = tuple(exps)
        terms[key] = terms.get(key, 0.0) + coeff
    return MultiPolynomial(n_vars, terms, names)


# Small function aliases for callers that prefer the operation names over
# the method spelling.

def poly_add(p: MultiPolynomial, q: MultiPolynomial) -> MultiPolynomial:
    return p + q


def poly_mul(p: MultiPolynomial, q: MultiPolynomial) -> MultiPolynomial:
    return p * q


def poly_partial(p: MultiPolynomial, var: int) -> MultiPolynomial:
    return p.partial(var)


def poly_eval(p: MultiPolynomial, point) -> float:
    return p.evaluate(point)
