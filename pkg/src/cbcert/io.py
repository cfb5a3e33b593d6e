"""JSON problem and certificate files, CSV writers."""

from __future__ import annotations

import csv
import json
import os
import time
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from cbcert import __version__
from cbcert.model import Certificate, Degrees, Epsilons, ProblemError, SynthesisProblem
from cbcert.poly import Polynomial, PolynomialSyntaxError, PolynomialVector, parse_polynomial

DATA_DIR = Path(__file__).parent / "data"
CERT_FORMAT = "cbcert-certificate"
MODES = ("cbc", "cbf")


class FileFormatError(ValueError):
    """Bad problem or certificate file; the message names the file and key path."""


def resolve(path) -> Path:
    """A path as given, or the name of a bundled file when no such path exists."""
    p = Path(path)
    if p.exists():
        return p
    bundled = DATA_DIR / p.name
    if p.parent == Path(".") and bundled.exists():
        return bundled
    return p


def bundled_files() -> Dict[str, Path]:
    return {p.name: p for p in sorted(DATA_DIR.glob("*.json"))}


def _read_json(path) -> Tuple[Path, dict]:
    p = resolve(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise FileFormatError(f"{path}: cannot read ({exc.strerror or exc})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{p}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise FileFormatError(f"{p}: top level must be a JSON object")
    return p, doc


class _Reader:
    def __init__(self, path, doc):
        self.path, self.doc = path, doc

    def err(self, key, msg):
        return FileFormatError(f"{self.path}: {key}: {msg}")

    def get(self, key, default=...):
        if key not in self.doc:
            if default is ...:
                raise self.err(key, "missing required key")
            return default
        return self.doc[key]

    def int_(self, key, default=...):
        v = self.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise self.err(key, f"expected a nonnegative integer, got {v!r}")
        return v

    def poly(self, value, key, n):
        try:
            return parse_polynomial(value, n)
        except PolynomialSyntaxError as exc:
            raise self.err(key, str(exc)) from exc

    def poly_list(self, key, n, length=None):
        v = self.get(key)
        if not isinstance(v, list):
            raise self.err(key, "expected a list of polynomial strings")
        if length is not None and len(v) != length:
            raise self.err(key, f"expected {length} entries, got {len(v)}")
        return [self.poly(t, f"{key}[{i}]", n) for i, t in enumerate(v)]

    def matrix(self, key, shape=None):
        v = self.get(key)
        try:
            a = np.array(v, dtype=float)
        except (TypeError, ValueError) as exc:
            raise self.err(key, "expected numbers") from exc
        if shape is not None and a.ndim != len(shape):
            raise self.err(key, f"expected a {len(shape)}-d array")
        if not np.all(np.isfinite(a)):
            raise self.err(key, "entries must be finite")
        return a


def load_problem(path) -> Tuple[SynthesisProblem, str]:
    """Parse a problem file; returns the problem and its mode ("cbc" or "cbf")."""
    p, doc = _read_json(path)
    r = _Reader(p, doc)
    n, m = r.int_("state_dim"), r.int_("input_dim")
    if n < 1 or m < 1:
        raise r.err("state_dim" if n < 1 else "input_dim", "must be at least 1")
    f = r.poly_list("f", n, n)
    g_raw = r.get("g")
    if not isinstance(g_raw, list) or len(g_raw) != n:
        raise r.err("g", f"expected {n} rows")
    g = []
    for i, row in enumerate(g_raw):
        if not isinstance(row, list) or len(row) != m:
            raise r.err(f"g[{i}]", f"expected {m} polynomial strings")
        g.append([r.poly(t, f"g[{i}][{j}]", n) for j, t in enumerate(row)])
    s = r.poly(r.get("safe_set"), "safe_set", n)
    w = r.poly(r.get("initial_set"), "initial_set", n)
    A = r.matrix("input_A", (0, 0))
    b = r.matrix("input_b", (0,))
    deg_raw = r.get("degrees", {}) or {}
    eps_raw = r.get("epsilons", {}) or {}
    if not isinstance(deg_raw, dict):
        raise r.err("degrees", "expected an object")
    if not isinstance(eps_raw, dict):
        raise r.err("epsilons", "expected an object")
    mode = str(r.get("mode", "cbc")).lower()
    if mode not in MODES:
        raise r.err("mode", f"expected one of {MODES}, got {mode!r}")
    seed = r.int_("seed", 0)
    try:
        degrees = parse_degrees(deg_raw)
        unknown = set(eps_raw) - set(Epsilons.__dataclass_fields__)
        if unknown:
            raise ProblemError(f"unknown epsilon keys {sorted(unknown)}")
        epsilons = Epsilons(**{k: float(v) for k, v in eps_raw.items()})
        if min(epsilons.eps1, epsilons.eps2, epsilons.eps3) <= 0:
            raise ProblemError("epsilons must be positive")
        problem = SynthesisProblem(n, m, PolynomialVector(f, n), g, s, w, A, b, degrees, epsilons,
                                   name=str(doc.get("name", p.stem)), seed=seed)
    except (ProblemError, TypeError, ValueError) as exc:
        if isinstance(exc, FileFormatError):
            raise
        raise FileFormatError(f"{p}: {exc}") from exc
    return problem, mode


def parse_degrees(values: Dict[str, Any], base: Optional[Degrees] = None) -> Degrees:
    base = base or Degrees()
    out = {}
    for k, v in values.items():
        if v is None or (isinstance(v, str) and v.lower() in ("auto", "none")):
            out[k] = None
            continue
        try:
            d = int(v)
        except (TypeError, ValueError):
            raise ProblemError(f"degree {k} must be an integer, got {v!r}") from None
        if d < 0:
            raise ProblemError(f"degree {k} must be nonnegative")
        out[k] = d
    return base.override(**out)


def problem_to_dict(problem: SynthesisProblem, mode: str = "cbc") -> dict:
    d = problem.degrees
    return {
        "name": problem.name,
        "state_dim": problem.n,
        "input_dim": problem.m,
        "f": [p.to_string() for p in problem.f],
        "g": [[q.to_string() for q in row] for row in problem.g],
        "safe_set": problem.s.to_string(),
        "initial_set": problem.w.to_string(),
        "input_A": problem.A.tolist(),
        "input_b": problem.b.tolist(),
        "degrees": {k: getattr(d, k) for k in d.__dataclass_fields__},
        "epsilons": {k: getattr(problem.epsilons, k) for k in problem.epsilons.__dataclass_fields__},
        "mode": mode,
        "seed": problem.seed,
    }


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the timestamp for reproducible files
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def _opt_str(p: Optional[Polynomial]):
    return None if p is None else p.to_string()


def certificate_to_dict(cert: Certificate, metadata: Optional[dict] = None) -> dict:
    meta = {"tool_version": __version__, "iterations": cert.iterations, "created": _timestamp()}
    meta.update(metadata or {})
    return {
        "format": CERT_FORMAT,
        "state_dim": cert.B.n_vars,
        "input_dim": len(cert.u),
        "mode": cert.mode,
        "B": cert.B.to_string(),
        "u": [p.to_string() for p in cert.u],
        "multipliers": {
            "sigma_safe": _opt_str(cert.sigma_safe),
            "sigma_init": _opt_str(cert.sigma_init),
            "lam1": _opt_str(cert.lam1),
            "lam2": [p.to_string() for p in cert.lam2],
            "sigma_enl": _opt_str(cert.sigma_enl),
            "sigma_cbf": _opt_str(cert.sigma_cbf),
        },
        "alpha": cert.alpha,
        "metadata": meta,
    }


def save_certificate(cert: Certificate, path, metadata: Optional[dict] = None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(certificate_to_dict(cert, metadata), indent=2) + "\n")
    return path


def load_certificate(path) -> Tuple[Certificate, dict]:
    """Parse a certificate file; returns the certificate and its metadata."""
    p, doc = _read_json(path)
    r = _Reader(p, doc)
    if doc.get("format", CERT_FORMAT) != CERT_FORMAT:
        raise r.err("format", f"expected {CERT_FORMAT!r}")
    n = r.int_("state_dim")
    B = r.poly(r.get("B"), "B", n)
    u = r.poly_list("u", n)
    mult = doc.get("multipliers", {}) or {}
    if not isinstance(mult, dict):
        raise r.err("multipliers", "expected an object")

    def opt(key):
        v = mult.get(key)
        return None if v is None else r.poly(v, f"multipliers.{key}", n)

    lam2_raw = mult.get("lam2", []) or []
    if not isinstance(lam2_raw, list):
        raise r.err("multipliers.lam2", "expected a list")
    lam2 = [r.poly(t, f"multipliers.lam2[{i}]", n) for i, t in enumerate(lam2_raw)]
    mode = str(doc.get("mode", "CBC")).upper()
    if mode.lower() not in MODES:
        raise r.err("mode", f"expected CBC or CBF, got {mode!r}")
    alpha = doc.get("alpha")
    meta = doc.get("metadata", {}) or {}
    cert = Certificate(B, PolynomialVector(u, n), opt("sigma_safe"), opt("sigma_init"), opt("lam1"), lam2,
                       opt("sigma_enl"), mode=mode, alpha=None if alpha is None else float(alpha),
                       sigma_cbf=opt("sigma_cbf"), iterations=int(meta.get("iterations", 0) or 0))
    if "input_dim" in doc and r.int_("input_dim") != len(u):
        raise r.err("u", f"input_dim is {doc['input_dim']} but {len(u)} inputs are given")
    return cert, meta


def check_compatible(problem: SynthesisProblem, cert: Certificate):
    if cert.B.n_vars != problem.n:
        raise FileFormatError(f"certificate state_dim {cert.B.n_vars} does not match problem state_dim {problem.n}")
    if len(cert.u) != problem.m:
        raise FileFormatError(f"certificate has {len(cert.u)} inputs, problem input_dim is {problem.m}")
    if cert.lam2 and len(cert.lam2) != problem.h:
        raise FileFormatError(f"certificate has {len(cert.lam2)} lam2 entries, problem has {problem.h} input rows")


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    return path


def write_trajectories(path, trajectories, n: int, m: int) -> Path:
    """Columns traj, t, x1..xn, u1..um."""
    header = ["traj", "t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]

    def rows():
        for k, tr in enumerate(trajectories):
            for t, x, u in zip(tr.times, tr.states, tr.inputs):
                yield [str(k), t, *x, *u]

    return write_csv(path, header, rows())


def write_grid(path, X, Y, Z) -> Path:
    return write_csv(path, ["x1", "x2", "value"], zip(X.ravel(), Y.ravel(), Z.ravel()))


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=False, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Polynomial):
        return o.to_string()
    raise TypeError(f"cannot serialize {type(o).__name__}")
