"""Sum-of-squares programs compiled to block SDPs by coefficient matching.

Expressions are polynomials in x whose coefficients are affine forms in the
decision unknowns. Unknowns are free scalars, nonnegative scalars, or entries
of Gram matrices. Every SOS constraint gets its own Gram block Q over a
monomial vector Z and contributes the equalities coeff(expr) = coeff(Z'QZ).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from cbcert import sdp
from cbcert.poly import Monomial, Polynomial, glex_key, mono_mul, monomial_basis

CONST = -1  # key of the constant part inside an affine form

FREE, SOS, SCALAR = "free", "sos", "scalar"

DEFAULT_MATCH_TOL = 1e-6
DEFAULT_PSD_TOL = 1e-8


class SosError(RuntimeError):
    pass


class BilinearExpression(SosError):
    pass


class ExtractOnNonOptimal(SosError):
    pass


Affine = Dict[int, float]


def _aff_add(a: Affine, b: Affine, scale: float = 1.0) -> Affine:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0.0) + scale * v
    return out


def _aff_scale(a: Affine, s: float) -> Affine:
    return {k: s * v for k, v in a.items()}


def _aff_is_const(a: Affine) -> bool:
    return all(k == CONST or v == 0.0 for k, v in a.items())


class PolyExpr:
    """Polynomial whose coefficients are affine in the program's unknowns."""

    __slots__ = ("n_vars", "terms")

    def __init__(self, terms: Dict[Monomial, Affine], n_vars: int):
        self.n_vars = n_vars
        self.terms = terms

    @classmethod
    def from_poly(cls, p: Polynomial) -> "PolyExpr":
        return cls({m: {CONST: c} for m, c in p.items()}, p.n_vars)

    @classmethod
    def constant(cls, c: float, n_vars: int) -> "PolyExpr":
        return cls({(0,) * n_vars: {CONST: float(c)}}, n_vars)

    def _coerce(self, other) -> "PolyExpr":
        if isinstance(other, PolyExpr):
            if other.n_vars != self.n_vars:
                raise ValueError("variable count mismatch")
            return other
        if isinstance(other, Polynomial):
            if other.n_vars != self.n_vars:
                raise ValueError("variable count mismatch")
            return PolyExpr.from_poly(other)
        if isinstance(other, (int, float, np.floating, np.integer)):
            return PolyExpr.constant(float(other), self.n_vars)
        return NotImplemented

    def unknowns(self) -> set:
        return {k for a in self.terms.values() for k, v in a.items() if k != CONST and v != 0.0}

    def is_known(self) -> bool:
        return not self.unknowns()

    @property
    def degree(self) -> int:
        live = [m for m, a in self.terms.items() if any(v != 0.0 for v in a.values())]
        return max((sum(m) for m in live), default=0)

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms = dict(self.terms)
        for m, a in other.terms.items():
            terms[m] = _aff_add(terms.get(m, {}), a)
        return PolyExpr(terms, self.n_vars)

    __radd__ = __add__

    def __neg__(self):
        return PolyExpr({m: _aff_scale(a, -1.0) for m, a in self.terms.items()}, self.n_vars)

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
            return PolyExpr({m: _aff_scale(a, float(other)) for m, a in self.terms.items()}, self.n_vars)
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        if self.is_known():
            left, right = other, self.to_polynomial()
        elif other.is_known():
            left, right = self, other.to_polynomial()
        else:
            raise BilinearExpression("product of two expressions that both contain unknowns")
        terms: Dict[Monomial, Affine] = {}
        for m1, a in left.terms.items():
            for m2, c in right.items():
                m = mono_mul(m1, m2)
                terms[m] = _aff_add(terms.get(m, {}), a, c)
        return PolyExpr(terms, self.n_vars)

    __rmul__ = __mul__

    def diff(self, i: int) -> "PolyExpr":
        terms: Dict[Monomial, Affine] = {}
        for m, a in self.terms.items():
            if m[i] == 0:
                continue
            m2 = m[:i] + (m[i] - 1,) + m[i + 1:]
            terms[m2] = _aff_add(terms.get(m2, {}), a, float(m[i]))
        return PolyExpr(terms, self.n_vars)

    def at(self, x) -> "PolyExpr":
        """Evaluate in x, leaving a degree-0 expression affine in the unknowns."""
        x = np.asarray(x, dtype=float)
        acc: Affine = {}
        for m, a in self.terms.items():
            acc = _aff_add(acc, a, float(np.prod(x ** np.array(m))))
        return PolyExpr({(0,) * self.n_vars: acc}, self.n_vars)

    def coefficient(self, mono: Monomial) -> "PolyExpr":
        return PolyExpr({(0,) * self.n_vars: dict(self.terms.get(tuple(mono), {}))}, self.n_vars)

    def to_polynomial(self, values: Optional[np.ndarray] = None) -> Polynomial:
        """Substitute unknown values (or require none) and return a Polynomial."""
        terms = {}
        for m, a in self.terms.items():
            c = 0.0
            for k, v in a.items():
                if k == CONST:
                    c += v
                elif v != 0.0:
                    if values is None:
                        raise SosError("expression still contains unknowns")
                    c += v * values[k]
            terms[m] = c
        return Polynomial(terms, self.n_vars)

    def __repr__(self):
        return f"PolyExpr(deg={self.degree}, unknowns={len(self.unknowns())})"


ExprLike = Union[PolyExpr, Polynomial, float, int]


def as_expr(e: ExprLike, n_vars: int) -> PolyExpr:
    if isinstance(e, PolyExpr):
        return e
    if isinstance(e, Polynomial):
        return PolyExpr.from_poly(e)
    return PolyExpr.constant(float(e), n_vars)


class DecisionPoly(PolyExpr):
    """A polynomial unknown: free coefficients, an SOS Gram form, or a scalar."""

    __slots__ = ("id", "basis", "kind", "gram_block", "var_ids")

    def __init__(self, ident, basis, kind, terms, n_vars, gram_block=None, var_ids=()):
        super().__init__(terms, n_vars)
        self.id = ident
        self.basis = list(basis)
        self.kind = kind
        self.gram_block = gram_block
        self.var_ids = list(var_ids)

    def __repr__(self):
        return f"DecisionPoly(id={self.id}, kind={self.kind}, basis_len={len(self.basis)})"


@dataclass
class _GramBlock:
    basis: List[Monomial]
    var_ids: Dict[Tuple[int, int], int]  # (i, j), i <= j -> unknown index
    owner: str


@dataclass
class SosCertificateWitness:
    Q: np.ndarray
    Z: List[Monomial]
    residual: float
    min_eig: float = 0.0

    @property
    def strict(self) -> bool:
        """Exact positivity certified: min eig dominates the worst-case residual effect."""
        return self.min_eig > len(self.Z) * self.residual

    def __bool__(self):
        return True


@dataclass
class NotSos:
    reason: str
    residual: float = float("inf")

    def __bool__(self):
        return False


@dataclass
class SosConstraint:
    expr: PolyExpr
    block: int
    name: str


@dataclass
class SosProgram:
    n_vars: int
    newton_reduce: bool = False
    # unknown table: kind per index ("free", "nonneg", "gram")
    var_kind: List[str] = field(default_factory=list)
    var_loc: List[tuple] = field(default_factory=list)
    grams: List[_GramBlock] = field(default_factory=list)
    variables: List[DecisionPoly] = field(default_factory=list)
    sos_constraints: List[SosConstraint] = field(default_factory=list)
    linear_constraints: List[Tuple[Affine, str]] = field(default_factory=list)
    objective: Optional[Affine] = None
    objective_sense: str = "min"

    # unknown management

    def _new_unknown(self, kind: str, loc: tuple = ()) -> int:
        self.var_kind.append(kind)
        self.var_loc.append(loc)
        return len(self.var_kind) - 1

    def _new_gram(self, basis: List[Monomial], owner: str) -> Tuple[int, Dict[Monomial, Affine]]:
        k = len(self.grams)
        ids = {}
        terms: Dict[Monomial, Affine] = {}
        for i, j in itertools.combinations_with_replacement(range(len(basis)), 2):
            v = self._new_unknown("gram", (k, i, j))
            ids[(i, j)] = v
            m = mono_mul(basis[i], basis[j])
            a = terms.setdefault(m, {})
            a[v] = a.get(v, 0.0) + (1.0 if i == j else 2.0)
        self.grams.append(_GramBlock(list(basis), ids, owner))
        return k, terms

    @property
    def n_unknowns(self) -> int:
        return len(self.var_kind)

    # public builders

    def free_poly(self, basis: Sequence[Monomial], name: str = "") -> DecisionPoly:
        return declare_poly(self, basis, FREE, name=name)

    def sos_poly(self, degree: int, name: str = "", min_half_degree: int = 0) -> DecisionPoly:
        half = degree // 2
        return declare_poly(self, monomial_basis(self.n_vars, half, min_half_degree), SOS, name=name)

    def scalar(self, name: str = "", nonneg: bool = False) -> DecisionPoly:
        return declare_poly(self, [(0,) * self.n_vars], SCALAR, name=name, nonneg=nonneg)

    def add_sos(self, expr: ExprLike, name: str = "") -> int:
        return add_sos_constraint(self, expr, name=name)

    def add_linear(self, expr: ExprLike, sense: str = "==") -> None:
        """Constrain a degree-0 expression: ``expr == 0`` or ``expr >= 0``."""
        e = as_expr(expr, self.n_vars)
        if e.degree > 0:
            raise ValueError("linear constraints take x-independent expressions")
        if sense not in ("==", ">="):
            raise ValueError(f"unknown sense {sense!r}")
        aff = dict(e.terms.get((0,) * self.n_vars, {}))
        self.linear_constraints.append((aff, sense))

    def set_objective(self, expr: Optional[ExprLike], sense: str = "min") -> None:
        if expr is None:
            self.objective = None
            return
        e = as_expr(expr, self.n_vars)
        if e.degree > 0:
            raise ValueError("objective must be x-independent")
        if sense not in ("min", "max"):
            raise ValueError(f"unknown sense {sense!r}")
        self.objective = dict(e.terms.get((0,) * self.n_vars, {}))
        self.objective_sense = sense


def declare_poly(program: SosProgram, basis: Sequence[Monomial], kind: str, name: str = "",
                 nonneg: bool = False) -> DecisionPoly:
    basis = [tuple(int(e) for e in m) for m in basis]
    if len(set(basis)) != len(basis):
        raise ValueError("duplicate monomials in basis")
    if any(len(m) != program.n_vars for m in basis):
        raise ValueError("basis monomial length does not match n_vars")
    ident = name or f"v{len(program.variables)}"
    if kind == SOS:
        block, terms = program._new_gram(basis, ident)
        dp = DecisionPoly(ident, basis, SOS, terms, program.n_vars, gram_block=block)
    elif kind in (FREE, SCALAR):
        if kind == SCALAR and (len(basis) != 1 or sum(basis[0]) != 0):
            raise ValueError("a scalar has basis [1]")
        ids = []
        terms = {}
        for m in basis:
            v = program._new_unknown("nonneg" if nonneg else "free")
            ids.append(v)
            terms[m] = {v: 1.0}
        dp = DecisionPoly(ident, basis, kind, terms, program.n_vars, var_ids=ids)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    program.variables.append(dp)
    return dp


def _newton_half(support: List[Monomial], candidates: List[Monomial]) -> List[Monomial]:
    """Keep candidates m with 2m in the convex hull of the support."""
    from scipy.optimize import linprog

    pts = np.array(support, dtype=float)
    keep = []
    k = len(support)
    A_eq = np.vstack([pts.T, np.ones((1, k))])
    for m in candidates:
        target = np.concatenate([2.0 * np.array(m, dtype=float), [1.0]])
        res = linprog(np.zeros(k), A_eq=A_eq, b_eq=target, bounds=[(0, None)] * k, method="highs")
        if res.status == 0:
            keep.append(m)
    return keep


def add_sos_constraint(program: SosProgram, expr: ExprLike, name: str = "") -> int:
    e = as_expr(expr, program.n_vars)
    deg = e.degree
    half = math.ceil(deg / 2)
    basis = monomial_basis(program.n_vars, half)
    if program.newton_reduce:
        support = [m for m, a in e.terms.items() if any(v != 0.0 for v in a.values())]
        if support:
            basis = _newton_half(support, basis) or basis
    block, _ = program._new_gram(basis, name or f"c{len(program.sos_constraints)}")
    program.sos_constraints.append(SosConstraint(e, block, name or f"c{len(program.sos_constraints)}"))
    return len(program.sos_constraints) - 1


@dataclass
class CompiledProgram:
    """SdpProblem plus the maps needed to read the unknowns back."""

    problem: sdp.SdpProblem
    var_block: np.ndarray  # per unknown: sdp block index
    var_entry: List[tuple]  # per unknown: (i, j) for psd, (i,) otherwise
    n_unknowns: int


def compile(program: SosProgram, trace_bound: Optional[float] = None) -> CompiledProgram:
    """Build the SdpProblem; feasibility programs (no objective) use margin sense."""
    n_unk = program.n_unknowns
    free_ids = [v for v in range(n_unk) if program.var_kind[v] == "free"]
    nonneg_ids = [v for v in range(n_unk) if program.var_kind[v] == "nonneg"]
    ineq = [i for i, (_, s) in enumerate(program.linear_constraints) if s == ">="]

    blocks: List[sdp.Block] = [sdp.Block(sdp.PSD, len(g.basis)) for g in program.grams]
    var_block = np.zeros(n_unk, dtype=int)
    var_entry: List[tuple] = [()] * n_unk
    for v in range(n_unk):
        if program.var_kind[v] == "gram":
            k, i, j = program.var_loc[v]
            var_block[v] = k
            var_entry[v] = (i, j)
    b_free = b_lp = None
    if free_ids:
        b_free = len(blocks)
        blocks.append(sdp.Block(sdp.FREE, len(free_ids)))
        for pos, v in enumerate(free_ids):
            var_block[v] = b_free
            var_entry[v] = (pos,)
    n_lp = len(nonneg_ids) + len(ineq)
    if n_lp:
        b_lp = len(blocks)
        blocks.append(sdp.Block(sdp.LP, n_lp))
        for pos, v in enumerate(nonneg_ids):
            var_block[v] = b_lp
            var_entry[v] = (pos,)

    rows: List[Tuple[Affine, float]] = []
    for con in program.sos_constraints:
        gram = program.grams[con.block]
        diff = dict(con.expr.terms)
        for (i, j), v in gram.var_ids.items():
            m = mono_mul(gram.basis[i], gram.basis[j])
            a = dict(diff.get(m, {}))
            a[v] = a.get(v, 0.0) - (1.0 if i == j else 2.0)
            diff[m] = a
        for m in sorted(diff, key=glex_key):
            a = {k: c for k, c in diff[m].items() if c != 0.0}
            const = a.pop(CONST, 0.0)
            if not a:
                if abs(const) > 0.0:
                    # a monomial the Gram form cannot reach; keep as an unsatisfiable row
                    rows.append(({}, -const))
                continue
            rows.append((a, -const))
    slack_pos = len(nonneg_ids)
    for aff, sense in program.linear_constraints:
        a = {k: c for k, c in aff.items() if k != CONST and c != 0.0}
        const = aff.get(CONST, 0.0)
        if sense == ">=":
            a[("slack", slack_pos)] = -1.0
            slack_pos += 1
        rows.append((a, -const))

    m = len(rows)
    A = [np.zeros((m, b.size, b.size)) if b.kind == sdp.PSD else np.zeros((m, b.size)) for b in blocks]
    b_vec = np.zeros(m)
    for r, (a, rhs) in enumerate(rows):
        b_vec[r] = rhs
        for v, c in a.items():
            if isinstance(v, tuple):
                A[b_lp][r, v[1]] += c
                continue
            k = var_block[v]
            if program.var_kind[v] == "gram":
                i, j = var_entry[v]
                if i == j:
                    A[k][r, i, i] += c
                else:
                    A[k][r, i, j] += 0.5 * c
                    A[k][r, j, i] += 0.5 * c
            else:
                A[k][r, var_entry[v][0]] += c
    # unit infinity-norm rows
    scale = np.zeros(m)
    for blk, a in zip(blocks, A):
        if m:
            scale = np.maximum(scale, np.abs(a.reshape(m, -1)).max(axis=1, initial=0.0))
    scale[scale == 0] = 1.0
    for k, blk in enumerate(blocks):
        shape = (m,) + (1,) * (A[k].ndim - 1)
        A[k] = A[k] / scale.reshape(shape)
    b_vec = b_vec / scale

    C = [np.zeros((b.size, b.size)) if b.kind == sdp.PSD else np.zeros(b.size) for b in blocks]
    if program.objective is not None:
        sgn = 1.0 if program.objective_sense == "min" else -1.0
        for v, c in program.objective.items():
            if v == CONST:
                continue
            k = var_block[v]
            if program.var_kind[v] == "gram":
                i, j = var_entry[v]
                if i == j:
                    C[k][i, i] += sgn * c
                else:
                    C[k][i, j] += 0.5 * sgn * c
                    C[k][j, i] += 0.5 * sgn * c
            else:
                C[k][var_entry[v][0]] += sgn * c
        sense = "minimize"
    else:
        sense = "feasibility"
    if trace_bound is None:
        n_cone = sum(b.size for b in blocks if b.kind != sdp.FREE)
        data = max(1.0, float(np.max(np.abs(b_vec))) if m else 1.0)
        trace_bound = 100.0 * max(1, n_cone) * data
    problem = sdp.SdpProblem(blocks, A, b_vec, C, sense=sense, trace_bound=trace_bound)
    return CompiledProgram(problem, var_block, var_entry, n_unk)


def unknown_values(cp: CompiledProgram, X: Sequence[np.ndarray], program: SosProgram) -> np.ndarray:
    vals = np.zeros(cp.n_unknowns)
    for v in range(cp.n_unknowns):
        k = cp.var_block[v]
        e = cp.var_entry[v]
        vals[v] = X[k][e[0], e[1]] if program.var_kind[v] == "gram" else X[k][e[0]]
    return vals


def _project_psd(Q: np.ndarray) -> Tuple[np.ndarray, float]:
    Q = 0.5 * (Q + Q.T)
    w, V = np.linalg.eigh(Q)
    return (V * np.maximum(w, 0.0)) @ V.T, float(w[0]) if w.size else 0.0


def _gram_poly(basis, Q, n_vars) -> Polynomial:
    terms: Dict[Monomial, float] = {}
    for i, j in itertools.product(range(len(basis)), repeat=2):
        m = mono_mul(basis[i], basis[j])
        terms[m] = terms.get(m, 0.0) + Q[i, j]
    return Polynomial(terms, n_vars)


def _residual(p: Polynomial, q: Polynomial) -> float:
    return max(((p - q).max_abs_coeff()), 0.0) if not (p - q).is_zero() else 0.0


@dataclass
class SosSolution:
    status: str  # "Optimal" (strictly feasible), "Feasible" (validated witness), or a failure status
    values: Dict[str, Polynomial]
    by_var: Dict[int, Polynomial]
    witnesses: List[SosCertificateWitness]
    max_residual: float
    margin: Optional[float]
    objective: Optional[float]
    sdp: sdp.SdpSolution

    @property
    def ok(self) -> bool:
        return self.status in (sdp.OPTIMAL, "Feasible")

    def __getitem__(self, dp: DecisionPoly) -> Polynomial:
        return self.by_var[id(dp)]


def _materialize(program: SosProgram, cp: CompiledProgram, X, match_tol: float):
    """Project Grams onto the PSD cone and rebuild every polynomial and witness."""
    Xp = list(X)
    min_eigs = {}
    for k, g in enumerate(program.grams):
        Xp[k], min_eigs[k] = _project_psd(X[k])
    vals = unknown_values(cp, Xp, program)
    by_var, named = {}, {}
    for dp in program.variables:
        p = dp.to_polynomial(vals)
        by_var[id(dp)] = p
        named[dp.id] = p
    witnesses, worst = [], 0.0
    for con in program.sos_constraints:
        g = program.grams[con.block]
        Q = Xp[con.block]
        p = con.expr.to_polynomial(vals)
        res = _residual(p, _gram_poly(g.basis, Q, program.n_vars))
        w = np.linalg.eigvalsh(Q)[0] if Q.size else 0.0
        witnesses.append(SosCertificateWitness(Q, list(g.basis), res, float(w)))
        worst = max(worst, res)
    return by_var, named, witnesses, worst


def solve_program(program: SosProgram, settings: Optional[sdp.SdpSettings] = None,
                  match_tol: float = DEFAULT_MATCH_TOL, trace_bound: Optional[float] = None) -> SosSolution:
    """Compile, solve and validate. Non-strict solutions are accepted when the
    PSD-projected witnesses still match every constraint within ``match_tol``."""
    cp = compile(program, trace_bound=trace_bound)
    try:
        sol = sdp.solve(cp.problem, settings)
    except sdp.SdpError as exc:
        empty = sdp.SdpSolution([], np.zeros(0), [], type(exc).__name__, np.inf, np.inf, np.inf)
        return SosSolution(type(exc).__name__, {}, {}, [], np.inf, None, None, empty)
    usable = sol.status in (sdp.OPTIMAL, sdp.SLOW_PROGRESS) or (
        cp.problem.sense == "feasibility" and sol.raw_status in (sdp.OPTIMAL, sdp.SLOW_PROGRESS)
    )
    if not usable or not sol.X:
        return SosSolution(sol.status, {}, {}, [], np.inf, sol.margin, None, sol)
    by_var, named, wit, worst = _materialize(program, cp, sol.X, match_tol)
    lin_ok = _linear_ok(program, by_var, cp, sol, match_tol)
    if sol.status == sdp.OPTIMAL and worst <= match_tol and lin_ok:
        status = sdp.OPTIMAL
    elif worst <= match_tol and lin_ok:
        status = "Feasible"
    else:
        status = sdp.INFEASIBLE if sol.status in (sdp.OPTIMAL, sdp.INFEASIBLE) else sol.status
    obj = None
    if program.objective is not None:
        vals = unknown_values(cp, sol.X, program)
        obj = program.objective.get(CONST, 0.0) + sum(c * vals[v] for v, c in program.objective.items() if v != CONST)
    return SosSolution(status, named, by_var, wit, worst, sol.margin, obj, sol)


def _linear_ok(program, by_var, cp, sol, tol):
    if not program.linear_constraints:
        return True
    vals = unknown_values(cp, sol.X, program)
    for aff, sense in program.linear_constraints:
        r = aff.get(CONST, 0.0) + sum(c * vals[v] for v, c in aff.items() if v != CONST)
        if sense == "==" and abs(r) > tol:
            return False
        if sense == ">=" and r < -tol:
            return False
    return True


def extract(program: SosProgram, sol: sdp.SdpSolution, cp: Optional[CompiledProgram] = None) -> Dict[str, Polynomial]:
    """Map each declared DecisionPoly name to its solved Polynomial."""
    if sol.status != sdp.OPTIMAL:
        raise ExtractOnNonOptimal(f"solution status is {sol.status}")
    cp = cp or compile(program)
    vals = unknown_values(cp, sol.X, program)
    return {dp.id: dp.to_polynomial(vals) for dp in program.variables}


def check_sos(p: Polynomial, tol: float = DEFAULT_MATCH_TOL, newton_reduce: bool = False,
              settings: Optional[sdp.SdpSettings] = None) -> Union[SosCertificateWitness, NotSos]:
    """Search for a Gram witness of p; returns NotSos when none is found."""
    if p.is_zero():
        return SosCertificateWitness(np.zeros((1, 1)), [(0,) * p.n_vars], 0.0, 0.0)
    if p.degree % 2 == 1:
        # a top odd coefficient c can be balanced by an O(c^2) even term of the next degree,
        # so only coefficients above sqrt(tol) rule out a nearby SOS polynomial
        top = max(abs(c) for m, c in p.items() if sum(m) == p.degree)
        if top > math.sqrt(tol):
            return NotSos("odd degree")
    for m, c in p.items():
        if p.degree % 2 == 0 and sum(1 for e in m if e) <= 1 and sum(m) == p.degree and c < -tol:
            # a negative pure-power leading term makes p negative along that axis
            return NotSos("negative leading even term")
    prog = SosProgram(p.n_vars, newton_reduce=newton_reduce)
    prog.add_sos(p)
    res = solve_program(prog, settings=settings, match_tol=tol)
    if res.ok:
        return res.witnesses[0]
    return NotSos(f"solver status {res.status}", res.max_residual)
