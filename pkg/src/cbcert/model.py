"""Problem and certificate data shared by synthesis, verification and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from cbcert.poly import Polynomial, PolynomialVector, lie_derivative


class ProblemError(ValueError):
    pass


@dataclass(frozen=True)
class Degrees:
    B: int = 2
    u: int = 1
    safe: int = 2
    init: int = 2
    enl: int = 2
    lam1: int = 2
    lam2: int = 0
    cont: int = 2
    loc: Optional[int] = None  # None: smallest even degree that matches the localized condition
    cbf: int = 2
    incl: int = 2

    def override(self, **kw) -> "Degrees":
        unknown = set(kw) - set(self.__dataclass_fields__)
        if unknown:
            raise ProblemError(f"unknown degree keys: {sorted(unknown)}")
        return replace(self, **{k: (None if v is None else int(v)) for k, v in kw.items()})


@dataclass(frozen=True)
class Epsilons:
    eps1: float = 1e-3
    eps2: float = 1e-3
    eps3: float = 1e-2


@dataclass
class SynthesisProblem:
    """Control-affine plant x' = f(x) + g(x) u with safe set {s >= 0},
    initial set {w >= 0} and input polytope {u : A u + b >= 0}."""

    n: int
    m: int
    f: PolynomialVector
    g: List[List[Polynomial]]
    s: Polynomial
    w: Polynomial
    A: np.ndarray
    b: np.ndarray
    degrees: Degrees = field(default_factory=Degrees)
    epsilons: Epsilons = field(default_factory=Epsilons)
    name: str = ""
    seed: int = 0

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if not isinstance(self.f, PolynomialVector):
            self.f = PolynomialVector(self.f, self.n)
        if len(self.f) != self.n:
            raise ProblemError(f"f has {len(self.f)} entries, expected {self.n}")
        if len(self.g) != self.n or any(len(row) != self.m for row in self.g):
            raise ProblemError(f"g must be {self.n}x{self.m}")
        for p in list(self.f) + [q for row in self.g for q in row] + [self.s, self.w]:
            if p.n_vars != self.n:
                raise ProblemError("polynomial variable count does not match state_dim")
        if self.A.shape != (self.b.shape[0], self.m):
            raise ProblemError(f"input_A must be {self.b.shape[0]}x{self.m}, got {self.A.shape}")
        if self.s.is_constant() or self.w.is_constant():
            raise ProblemError("safe and initial set polynomials must be nonconstant")
        self._check_bounded()

    def _check_bounded(self):
        # each coordinate of u must be bounded above and below over {A u + b >= 0}
        for j in range(self.m):
            for sgn in (1.0, -1.0):
                c = np.zeros(self.m)
                c[j] = -sgn
                res = linprog(c, A_ub=-self.A, b_ub=self.b, bounds=[(None, None)] * self.m, method="highs")
                if res.status == 3:
                    raise ProblemError(f"input set is unbounded along u{j + 1}")
                # status 2 (empty U) is left for synthesis to report as infeasible

    @property
    def h(self) -> int:
        return self.b.shape[0]

    def g_column(self, j: int) -> List[Polynomial]:
        return [self.g[i][j] for i in range(self.n)]

    def closed_loop(self, u: Sequence[Polynomial]) -> PolynomialVector:
        out = []
        for i in range(self.n):
            fi = self.f[i]
            for j in range(self.m):
                fi = fi + self.g[i][j] * u[j]
            out.append(fi)
        return PolynomialVector(out, self.n)

    def lie(self, B: Polynomial, u: Sequence[Polynomial]) -> Polynomial:
        return lie_derivative(B, list(self.f), self.g, list(u))

    def input_margin(self, u_values: np.ndarray) -> np.ndarray:
        """A u + b for an [N, m] array of inputs; shape [N, h]."""
        return np.atleast_2d(u_values) @ self.A.T + self.b

    def with_degrees(self, **kw) -> "SynthesisProblem":
        return replace(self, degrees=self.degrees.override(**kw))


@dataclass
class Certificate:
    B: Polynomial
    u: PolynomialVector
    sigma_safe: Optional[Polynomial] = None
    sigma_init: Optional[Polynomial] = None
    lam1: Optional[Polynomial] = None
    lam2: List[Polynomial] = field(default_factory=list)
    sigma_enl: Optional[Polynomial] = None
    mode: str = "CBC"
    alpha: Optional[float] = None
    sigma_cbf: Optional[Polynomial] = None
    witnesses: Dict[str, object] = field(default_factory=dict)
    iterations: int = 0

    @property
    def n_vars(self) -> int:
        return self.B.n_vars


def certificate_conditions(problem: SynthesisProblem, cert: Certificate) -> Dict[str, Polynomial]:
    """The SOS conditions with every multiplier substituted.

    In CBF mode the stored lam1 already equals alpha - sigma_cbf.
    """
    eps = problem.epsilons
    out = {}
    if cert.sigma_safe is not None:
        out["safe"] = -cert.B + cert.sigma_safe * problem.s - eps.eps1
    if cert.sigma_init is not None:
        out["init"] = cert.B - cert.sigma_init * problem.w
    if cert.lam1 is not None:
        out["lie"] = problem.lie(cert.B, cert.u) + cert.lam1 * cert.B - eps.eps2
    if cert.lam2:
        for r in range(problem.h):
            adm = Polynomial.constant(problem.b[r], problem.n)
            for j in range(problem.m):
                adm = adm + cert.u[j] * problem.A[r, j]
            out[f"adm{r + 1}"] = adm - cert.lam2[r] * cert.B
    return out
