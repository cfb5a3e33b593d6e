"""Sparse multivariate polynomials with real coefficients.

A monomial is a tuple of nonnegative exponents, one per state variable.
Polynomials map monomials to float coefficients and are immutable; every
arithmetic result drops coefficients below ``PRUNE_TOL``.
"""

from __future__ import annotations

import itertools
import math
import re
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple, Union

import numpy as np

from cbcert import kernels

Monomial = Tuple[int, ...]
Number = Union[int, float]

PRUNE_TOL = 1e-12


class PolynomialSyntaxError(ValueError):
    pass


def glex_key(mono: Monomial) -> tuple:
    """Sort key for graded-lexicographic order (x1 > x2 > ... within a degree)."""
    return (sum(mono), tuple(-e for e in mono))


def monomial_basis(n_vars: int, max_degree: int, min_degree: int = 0) -> List[Monomial]:
    """All monomials with ``min_degree <= total degree <= max_degree``, graded-lex ordered.

    >>> monomial_basis(2, 2)
    [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    """
    if n_vars < 1:
        raise ValueError("n_vars must be positive")
    if max_degree < 0:
        return []
    out = []
    for d in range(max(min_degree, 0), max_degree + 1):
        # compositions of d into n_vars parts, lex-descending
        for combo in itertools.combinations_with_replacement(range(n_vars), d):
            mono = [0] * n_vars
            for i in combo:
                mono[i] += 1
            out.append(tuple(mono))
    out.sort(key=glex_key)
    return out


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


def mono_str(mono: Monomial) -> str:
    parts = []
    for i, e in enumerate(mono):
        if e == 1:
            parts.append(f"x{i + 1}")
        elif e > 1:
            parts.append(f"x{i + 1}^{e}")
    return "*".join(parts)


class Polynomial:
    """Immutable sparse polynomial in ``n_vars`` real variables."""

    __slots__ = ("_terms", "n_vars", "_compiled")

    def __init__(self, terms: Dict[Monomial, float] | None = None, n_vars: int = 1):
        if n_vars < 1:
            raise ValueError("n_vars must be positive")
        self.n_vars = n_vars
        clean: Dict[Monomial, float] = {}
        for mono, c in (terms or {}).items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != n_vars or any(e < 0 for e in mono):
                raise ValueError(f"bad monomial {mono} for {n_vars} variables")
            c = float(c)
            if abs(c) >= PRUNE_TOL:
                clean[mono] = clean.get(mono, 0.0) + c
        self._terms = {m: c for m, c in clean.items() if abs(c) >= PRUNE_TOL}
        self._compiled = None

    # construction helpers

    @classmethod
    def constant(cls, c: Number, n_vars: int) -> "Polynomial":
        return cls({(0,) * n_vars: c}, n_vars)

    @classmethod
    def variable(cls, i: int, n_vars: int) -> "Polynomial":
        """The coordinate polynomial x_{i+1} (``i`` is 0-based)."""
        mono = [0] * n_vars
        mono[i] = 1
        return cls({tuple(mono): 1.0}, n_vars)

    @classmethod
    def zero(cls, n_vars: int) -> "Polynomial":
        return cls({}, n_vars)

    @classmethod
    def from_basis(cls, basis: Sequence[Monomial], coeffs: Sequence[float], n_vars: int) -> "Polynomial":
        terms: Dict[Monomial, float] = {}
        for m, c in zip(basis, coeffs):
            terms[m] = terms.get(m, 0.0) + float(c)
        return cls(terms, n_vars)

    # inspection

    @property
    def terms(self) -> Dict[Monomial, float]:
        return dict(self._terms)

    def items(self) -> Iterator[Tuple[Monomial, float]]:
        return iter(sorted(self._terms.items(), key=lambda kv: glex_key(kv[0])))

    def monomials(self) -> List[Monomial]:
        return sorted(self._terms, key=glex_key)

    def coeff(self, mono: Monomial) -> float:
        return self._terms.get(tuple(mono), 0.0)

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(m) for m in self._terms), default=-1)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(sum(m) == 0 for m in self._terms)

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def __len__(self) -> int:
        return len(self._terms)

    # arithmetic

    def _check(self, other: "Polynomial") -> None:
        if self.n_vars != other.n_vars:
            raise ValueError(f"variable count mismatch: {self.n_vars} vs {other.n_vars}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(float(other), self.n_vars)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms = dict(self._terms)
        for m, c in other._terms.items():
            terms[m] = terms.get(m, 0.0) + c
        return Polynomial(terms, self.n_vars)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({m: -c for m, c in self._terms.items()}, self.n_vars)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other - self

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(float(other))
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms: Dict[Monomial, float] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = mono_mul(m1, m2)
                terms[m] = terms.get(m, 0.0) + c1 * c2
        return Polynomial(terms, self.n_vars)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(1.0 / float(other))
        return NotImplemented

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only nonnegative integer powers are supported")
        out = Polynomial.constant(1.0, self.n_vars)
        for _ in range(k):
            out = out * self
        return out

    def scale(self, a: float) -> "Polynomial":
        return Polynomial({m: a * c for m, c in self._terms.items()}, self.n_vars)

    # calculus

    def diff(self, i: int) -> "Polynomial":
        """Partial derivative with respect to x_{i+1}."""
        terms: Dict[Monomial, float] = {}
        for m, c in self._terms.items():
            if m[i] > 0:
                dm = list(m)
                dm[i] -= 1
                terms[tuple(dm)] = terms.get(tuple(dm), 0.0) + c * m[i]
        return Polynomial(terms, self.n_vars)

    def gradient(self) -> "PolynomialVector":
        return PolynomialVector([self.diff(i) for i in range(self.n_vars)])

    # evaluation

    def compiled(self) -> Tuple[np.ndarray, np.ndarray]:
        """(exponents[T, n], coefficients[T]) arrays for the batch kernels."""
        if self._compiled is None:
            monos = self.monomials()
            exps = np.array(monos, dtype=np.int64).reshape(len(monos), self.n_vars)
            coefs = np.array([self._terms[m] for m in monos], dtype=float)
            self._compiled = (exps, coefs)
        return self._compiled

    def __call__(self, x) -> float:
        return self.evaluate(x)

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.n_vars:
            raise ValueError(f"expected a point of dimension {self.n_vars}, got {x.shape[0]}")
        total = 0.0
        for m, c in self._terms.items():
            term = c
            for xi, e in zip(x, m):
                if e:
                    term *= xi**e
            total += term
        return total

    def evaluate_many(self, pts) -> np.ndarray:
        """Evaluate at each row of ``pts`` (shape [N, n_vars])."""
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(pts, dtype=float)))
        if pts.shape[1] != self.n_vars:
            raise ValueError(f"expected points of dimension {self.n_vars}, got {pts.shape[1]}")
        exps, coefs = self.compiled()
        return kernels.poly_eval(exps, coefs, pts)

    # comparison / formatting

    def almost_equal(self, other: "Polynomial", tol: float = 1e-9) -> bool:
        self._check(other)
        return (self - other).max_abs_coeff() <= tol

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.n_vars == other.n_vars and self._terms == other._terms

    def __hash__(self):
        return hash((self.n_vars, frozenset(self._terms.items())))

    def to_string(self, precision: int = 17) -> str:
        if not self._terms:
            return "0"
        chunks = []
        # highest degree first, x1 before x2 within a degree
        for m, c in sorted(self._terms.items(), key=lambda kv: (-sum(kv[0]), tuple(-e for e in kv[0]))):
            sign = "-" if c < 0 else "+"
            mag = format(abs(c), f".{precision}g")
            ms = mono_str(m)
            body = mag if not ms else (ms if mag == "1" else f"{mag}*{ms}")
            chunks.append((sign, body))
        first_sign, first_body = chunks[0]
        out = ("-" if first_sign == "-" else "") + first_body
        for sign, body in chunks[1:]:
            out += f" {sign} {body}"
        return out

    def __str__(self) -> str:
        return self.to_string(precision=6)

    def __repr__(self) -> str:
        return f"Polynomial({self.to_string(precision=6)!r}, n_vars={self.n_vars})"


class PolynomialVector(Sequence[Polynomial]):
    """An ordered tuple of polynomials sharing one variable count."""

    __slots__ = ("entries", "n_vars")

    def __init__(self, entries: Iterable[Polynomial], n_vars: int | None = None):
        self.entries = tuple(entries)
        counts = {p.n_vars for p in self.entries}
        if len(counts) > 1:
            raise ValueError(f"entries disagree on variable count: {sorted(counts)}")
        if counts:
            (self.n_vars,) = counts
            if n_vars is not None and n_vars != self.n_vars:
                raise ValueError("n_vars does not match entries")
        else:
            self.n_vars = n_vars if n_vars is not None else 0

    def __getitem__(self, i):
        return self.entries[i]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def evaluate(self, x) -> np.ndarray:
        return np.array([p.evaluate(x) for p in self.entries])

    __call__ = evaluate

    def evaluate_many(self, pts) -> np.ndarray:
        """Values at each row of ``pts``; shape [N, len(self)]."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if not self.entries:
            return np.zeros((pts.shape[0], 0))
        return np.stack([p.evaluate_many(pts) for p in self.entries], axis=1)

    def dot(self, other: "PolynomialVector") -> Polynomial:
        if len(self) != len(other):
            raise ValueError("length mismatch")
        out = Polynomial.zero(self.n_vars)
        for a, b in zip(self, other):
            out = out + a * b
        return out

    def __repr__(self) -> str:
        return f"PolynomialVector([{', '.join(str(p) for p in self.entries)}])"


def lie_derivative(
    B: Polynomial,
    f: Sequence[Polynomial],
    g: Sequence[Sequence[Polynomial]],
    u: Sequence[Polynomial],
) -> Polynomial:
    """grad(B) . (f + g u) for a control-affine field; ``g`` is n rows of m entries."""
    n = B.n_vars
    if len(f) != n:
        raise ValueError(f"f has {len(f)} entries, expected {n}")
    if len(g) not in (0, n):
        raise ValueError(f"g has {len(g)} rows, expected {n}")
    m = len(u)
    rows = g if g else [[] for _ in range(n)]
    out = Polynomial.zero(n)
    for i in range(n):
        if len(rows[i]) != m:
            raise ValueError(f"g row {i} has {len(rows[i])} entries, expected {m}")
        field = f[i]
        for j in range(m):
            field = field + rows[i][j] * u[j]
        out = out + B.diff(i) * field
    return out


# text syntax: "-7.635*x1^2 - 3.439*x1*x2 + 0.5*x1 + 7.402", with parentheses,
# "^" on any factor and division by constants

_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|x(?P<var>\d+)|(?P<op>[-+*/^()]))")


class _Parser:
    def __init__(self, text: str, n_vars: int):
        self.text, self.n = text, n_vars
        self.tokens = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m:
                col = pos + len(text[pos:]) - len(text[pos:].lstrip()) + 1
                raise PolynomialSyntaxError(f"unexpected {text[col - 1]!r} at column {col} in {text!r}")
            kind = "num" if m.group("num") else "var" if m.group("var") else m.group("op")
            raw = m.group(0).lstrip()
            value = m.group("num") or m.group("var") or raw
            self.tokens.append((kind, value, m.end() - len(raw) + 1, raw))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, what):
        if self.i < len(self.tokens):
            _, _, col, val = self.tokens[self.i]
            raise PolynomialSyntaxError(f"{what}: unexpected {val!r} at column {col} in {self.text!r}")
        raise PolynomialSyntaxError(f"{what}: input ends early in {self.text!r}")

    def parse(self) -> Polynomial:
        if not self.tokens:
            raise PolynomialSyntaxError("empty polynomial")
        p = self.expr()
        if self.i != len(self.tokens):
            self.fail("trailing input")
        return p

    def expr(self):
        p = self.term()
        while self.peek() in ("+", "-"):
            op = self.take()[0]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self):
        p = self.factor()
        while self.peek() in ("*", "/"):
            op = self.take()[0]
            q = self.factor()
            if op == "*":
                p = p * q
            else:
                if not q.is_constant() or q.is_zero():
                    raise PolynomialSyntaxError(f"division by a non-constant or zero in {self.text!r}")
                p = p * (1.0 / q.coeff((0,) * self.n))
        return p

    def factor(self):
        if self.peek() in ("+", "-"):
            op = self.take()[0]
            q = self.factor()
            return -q if op == "-" else q
        base = self.atom()
        if self.peek() == "^":
            self.take()
            if self.peek() != "num" or not self.tokens[self.i][1].isdigit():
                self.fail("exponent must be a nonnegative integer")
            base = base ** int(self.take()[1])
        return base

    def atom(self):
        kind = self.peek()
        if kind == "num":
            return Polynomial.constant(float(self.take()[1]), self.n)
        if kind == "var":
            _, val, col, _ = self.take()
            idx = int(val)
            if not 1 <= idx <= self.n:
                raise PolynomialSyntaxError(f"variable x{idx} out of range 1..{self.n} at column {col} in {self.text!r}")
            return Polynomial.variable(idx - 1, self.n)
        if kind == "(":
            self.take()
            p = self.expr()
            if self.peek() != ")":
                self.fail("missing ')'")
            self.take()
            return p
        self.fail("expected a number, variable or '('")


def parse_polynomial(text: str, n_vars: int) -> Polynomial:
    """Parse polynomial text over variables x1..xn (1-based)."""
    if not isinstance(text, str):
        raise PolynomialSyntaxError(f"expected a string, got {type(text).__name__}")
    return _Parser(text, n_vars).parse()


def count_monomials(n_vars: int, max_degree: int) -> int:
    return math.comb(n_vars + max_degree, max_degree)
