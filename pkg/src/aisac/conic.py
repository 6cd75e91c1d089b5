"""Small dense conic solver for Hermitian PSD programs.

Programs maximize a concave objective built from

* linear trace functionals ``tr(C X)``,
* ``sqrt`` of an affine trace expression (handled through an epigraph
  variable ``s`` with the rotated-cone constraint ``s**2 <= arg``),
* ``log`` of an affine trace expression (kept as a smooth objective term),

subject to affine trace inequalities/equalities, convex quadratic bounds
``lhs >= sum_i c_i * expr_i**2`` and PSD membership of every variable.

Each Hermitian ``n x n`` variable is stored in ``n**2`` real coordinates
over an orthonormal Hermitian basis, so the complex structure never leaves
this module.  The algorithm is the classic primal log-barrier method with
equality-constrained Newton centering and a phase-I feasibility search.
Multipliers are read off the central path.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "AffineExpr",
    "ConicProgram",
    "ConicSolution",
    "KKTReport",
    "ProgramError",
    "Variable",
    "dump_program",
    "solve",
    "validate_kkt",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max-iterations"

# rows are scaled by their largest coefficient, so natural margins can be tiny
PHASE1_MARGIN = 1e-10
CENTER_TOL = 1e-3


_STATS = {}


class ProgramError(ValueError):
    """Raised when a program is malformed."""


# --------------------------------------------------------------------------
# Modelling layer
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Variable:
    index: int
    dim: int
    name: str

    def trace(self, coef=None) -> "AffineExpr":
        """``tr(coef @ X)``; identity coefficient when ``coef`` is None."""
        if coef is None:
            coef = np.eye(self.dim)
        coef = np.asarray(coef, dtype=complex)
        if coef.shape != (self.dim, self.dim):
            raise ProgramError(
                f"coefficient shape {coef.shape} does not match variable "
                f"{self.name!r} of dimension {self.dim}"
            )
        return AffineExpr({self.index: coef})


class AffineExpr:
    """Real-valued ``sum_v tr(C_v X_v) + const`` with Hermitian ``C_v``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms or {})
        self.const = float(const)

    def _combine(self, other, sign):
        if isinstance(other, AffineExpr):
            terms = dict(self.terms)
            for k, c in other.terms.items():
                terms[k] = terms[k] + sign * c if k in terms else sign * c
            return AffineExpr(terms, self.const + sign * other.const)
        return AffineExpr(self.terms, self.const + sign * float(other))

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return AffineExpr({k: -c for k, c in self.terms.items()}, -self.const)

    def __mul__(self, scalar):
        scalar = float(scalar)
        return AffineExpr({k: scalar * c for k, c in self.terms.items()},
                          scalar * self.const)

    __rmul__ = __mul__

    def value(self, values) -> float:
        total = self.const
        for k, c in self.terms.items():
            total += float(np.real(np.vdot(c.conj().T, values[k])))
        return total

    def __repr__(self):
        return f"AffineExpr(vars={sorted(self.terms)}, const={self.const:g})"


def affine_sum(exprs) -> AffineExpr:
    total = AffineExpr()
    for e in exprs:
        total = total + e
    return total


@dataclass
class _Term:
    kind: str  # "linear" | "sqrt" | "log"
    weight: float
    expr: AffineExpr


@dataclass
class _Constraint:
    kind: str  # "ge" | "eq" | "quad"
    expr: AffineExpr
    squares: list = field(default_factory=list)  # [(coef, AffineExpr)]
    name: str = ""


def _is_hermitian(c, tol=1e-10):
    scale = max(1.0, float(np.max(np.abs(c))))
    return np.max(np.abs(c - c.conj().T)) <= tol * scale


def _is_psd(c, tol=1e-10):
    w = np.linalg.eigvalsh((c + c.conj().T) / 2)
    return w[0] >= -tol * max(1.0, float(np.max(np.abs(w))))


class ConicProgram:
    """Container for a maximization over Hermitian PSD variables."""

    def __init__(self):
        self.variables: list[Variable] = []
        self.objective: list[_Term] = []
        self.constant = 0.0
        self.constraints: list[_Constraint] = []

    def variable(self, dim: int, name: str | None = None) -> Variable:
        if dim < 1:
            raise ProgramError("variable dimension must be >= 1")
        v = Variable(len(self.variables), int(dim), name or f"X{len(self.variables)}")
        self.variables.append(v)
        return v

    def _check_expr(self, expr: AffineExpr):
        if not isinstance(expr, AffineExpr):
            raise ProgramError(f"expected AffineExpr, got {type(expr).__name__}")
        for k, c in expr.terms.items():
            if k >= len(self.variables):
                raise ProgramError(f"unknown variable index {k}")
            dim = self.variables[k].dim
            if c.shape != (dim, dim):
                raise ProgramError(f"coefficient for {self.variables[k].name} has shape {c.shape}")
            if not np.all(np.isfinite(c)):
                raise ProgramError("non-finite coefficient")
            if not _is_hermitian(c):
                raise ProgramError(f"coefficient for {self.variables[k].name} is not Hermitian")
        if not np.isfinite(expr.const):
            raise ProgramError("non-finite constant")

    def _check_nonnegative(self, expr: AffineExpr, what: str):
        # PSD variables with PSD coefficients and a nonnegative offset
        if expr.const < 0 or not all(_is_psd(c) for c in expr.terms.values()):
            raise ProgramError(f"{what} argument is not certifiably nonnegative")

    def add_linear(self, expr: AffineExpr, weight: float = 1.0):
        self._check_expr(expr)
        self.objective.append(_Term("linear", float(weight), expr))

    def add_sqrt(self, expr: AffineExpr, weight: float = 1.0):
        self._check_expr(expr)
        if weight < 0:
            raise ProgramError("sqrt term needs a nonnegative weight to stay concave")
        self._check_nonnegative(expr, "sqrt")
        self.objective.append(_Term("sqrt", float(weight), expr))

    def add_log(self, expr: AffineExpr, weight: float = 1.0):
        self._check_expr(expr)
        if weight < 0:
            raise ProgramError("log term needs a nonnegative weight to stay concave")
        self._check_nonnegative(expr, "log")
        self.objective.append(_Term("log", float(weight), expr))

    def add_constant(self, value: float):
        self.constant += float(value)

    def add_ge(self, expr: AffineExpr, name: str = ""):
        """Constrain ``expr >= 0``."""
        self._check_expr(expr)
        self.constraints.append(_Constraint("ge", expr, name=name))

    def add_eq(self, expr: AffineExpr, name: str = ""):
        """Constrain ``expr == 0``."""
        self._check_expr(expr)
        self.constraints.append(_Constraint("eq", expr, name=name))

    def add_quadratic_bound(self, lhs: AffineExpr, squares, name: str = ""):
        """Constrain ``lhs >= sum(c * e**2 for c, e in squares)`` with ``c > 0``."""
        self._check_expr(lhs)
        squares = [(float(c), e) for c, e in squares]
        for c, e in squares:
            if not c > 0:
                raise ProgramError("quadratic bound coefficients must be positive")
            self._check_expr(e)
        self.constraints.append(_Constraint("quad", lhs, squares, name=name))

    def objective_value(self, values) -> float:
        total = self.constant
        for term in self.objective:
            a = term.expr.value(values)
            if term.kind == "linear":
                total += term.weight * a
            elif term.kind == "sqrt":
                total += term.weight * np.sqrt(max(a, 0.0))
            else:
                total += term.weight * np.log(a) if a > 0 else -np.inf
        return float(total)


# --------------------------------------------------------------------------
# Real coordinates
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal basis of n x n Hermitian matrices, shape (n*n, n, n)."""
    basis = []
    r2 = 1 / np.sqrt(2)
    for i in range(n):
        e = np.zeros((n, n), complex)
        e[i, i] = 1
        basis.append(e)
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n), complex)
            e[i, j] = e[j, i] = r2
            basis.append(e)
            e = np.zeros((n, n), complex)
            e[i, j] = 1j * r2
            e[j, i] = -1j * r2
            basis.append(e)
    out = np.array(basis)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _flat_basis(n: int) -> np.ndarray:
    """Row ``a`` holds the row-major entries of basis matrix ``E_a``."""
    out = hermitian_basis(n).reshape(n * n, n * n)
    return out


@lru_cache(maxsize=None)
def _flat_basis_conj(n: int) -> np.ndarray:
    return np.ascontiguousarray(_flat_basis(n).conj())


def _coords(c: np.ndarray) -> np.ndarray:
    """Coordinates of the functional X -> tr(c X) in the Hermitian basis."""
    n = c.shape[0]
    # tr(c E_a) = sum_ij c_ij conj(E_a)_ij for Hermitian E_a
    return (_flat_basis_conj(n) @ c.reshape(-1)).real


@dataclass
class _Block:
    offset: int
    dim: int

    @property
    def size(self):
        return self.dim * self.dim

    def matrix(self, x):
        n = self.dim
        return (x[self.offset:self.offset + self.size] @ _flat_basis(n)).reshape(n, n)


class _Standard:
    """Program in real coordinates: max c.x + sum w log(a.x+b) s.t. rows."""

    def __init__(self, prog: ConicProgram):
        self.prog = prog
        self.blocks = []
        off = 0
        for v in prog.variables:
            self.blocks.append(_Block(off, v.dim))
            off += v.dim * v.dim
        n_sqrt = sum(t.kind == "sqrt" for t in prog.objective)
        self.n_matrix = off
        self.n = off + n_sqrt

        self.c = np.zeros(self.n)
        self.logs = []  # (w, a, b)
        self.lin = []  # (a, b, scale, user_index)
        self.eq = []  # (a, b, scale, user_index)
        self.quad = []  # (a, b, D, e, q, scale, user_index)

        s_idx = off
        for term in prog.objective:
            a, b = self.vec(term.expr)
            if term.kind == "linear":
                self.c += term.weight * a
            elif term.kind == "log":
                self.logs.append((term.weight, a, b))
            else:
                self.c[s_idx] += term.weight
                d = np.zeros(self.n)
                d[s_idx] = 1.0
                self.quad.append((a, b, d[None, :], np.zeros(1), np.ones(1), 1.0, None))
                s_idx += 1

        for ui, con in enumerate(prog.constraints):
            a, b = self.vec(con.expr)
            if con.kind == "quad":
                D = np.array([self.vec(e)[0] for _, e in con.squares])
                e = np.array([self.vec(e)[1] for _, e in con.squares])
                q = np.array([c for c, _ in con.squares])
                scale = max(np.max(np.abs(a), initial=0.0), abs(b),
                            np.max(q[:, None] * np.abs(D), initial=0.0),
                            np.max(q * e * e, initial=0.0), 1e-300)
                self.quad.append((a / scale, b / scale, D, e, q / scale, scale, ui))
            else:
                scale = max(np.max(np.abs(a), initial=0.0), abs(b), 1e-300)
                row = (a / scale, b / scale, scale, ui)
                (self.lin if con.kind == "ge" else self.eq).append(row)

        self.A = np.array([r[0] for r in self.eq]).reshape(len(self.eq), self.n)
        self.b = np.array([-r[1] for r in self.eq])
        self.G = np.array([r[0] for r in self.lin]).reshape(len(self.lin), self.n)
        self.h = np.array([r[1] for r in self.lin])
        self.nu = len(self.lin) + len(self.quad) + sum(b.dim for b in self.blocks)

    def vec(self, expr: AffineExpr):
        a = np.zeros(self.n)
        for k, c in expr.terms.items():
            blk = self.blocks[k]
            a[blk.offset:blk.offset + blk.size] += _coords(c)
        return a, expr.const

    def objective(self, x):
        f = float(self.c @ x)
        for w, a, b in self.logs:
            r = a @ x + b
            f += w * np.log(r) if r > 0 else -np.inf
        return f


# --------------------------------------------------------------------------
# Barrier machinery
# --------------------------------------------------------------------------


class _Barrier:
    """Log barrier of a _Standard program, optionally with a phase-I slack.

    With ``phase1`` every inequality (and every PSD block) is relaxed by an
    extra trailing coordinate ``s`` and the objective becomes ``-s``.
    ``shift`` relaxes inequalities by a fixed amount (used when the
    feasible set has no interior).
    """

    def __init__(self, std: _Standard, phase1=False, shift=0.0, reg=1.0):
        self.std = std
        self.phase1 = phase1
        self.shift = shift
        # phase I keeps ``x`` bounded: PSD barriers alone are unbounded below
        self.reg = reg if phase1 else 0.0
        self.n = std.n + (1 if phase1 else 0)
        self.nu = std.nu + (len(std.logs) + 1 if phase1 else 0)
        nx = std.n
        # quadratic rows stacked: value_i = a_i.x + b_i - sum_{rows r of i} q_r (D_r.x + e_r)^2
        nq = len(std.quad)
        self.qa = np.array([a for a, *_ in std.quad]).reshape(nq, nx)
        self.qb = np.array([b for _, b, *_ in std.quad])
        self.qD = (np.vstack([D for _, _, D, *_ in std.quad]) if nq else np.zeros((0, nx)))
        self.qe = np.concatenate([e for *_, e, _, _, _ in std.quad]) if nq else np.zeros(0)
        self.qq = np.concatenate([q for *_, q, _, _ in std.quad]) if nq else np.zeros(0)
        self.qowner = np.concatenate(
            [np.full(len(q), i) for i, (*_, q, _, _) in enumerate(std.quad)]).astype(int) \
            if nq else np.zeros(0, int)
        self.qO = np.zeros((nq, len(self.qowner)))
        self.qO[self.qowner, np.arange(len(self.qowner))] = 1.0
        nl = len(std.logs)
        self.lw = np.array([w for w, _, _ in std.logs])
        self.la = np.array([a for _, a, _ in std.logs]).reshape(nl, nx)
        self.lb = np.array([b for _, _, b in std.logs])
        # PSD blocks grouped by size for batched linear algebra
        groups = {}
        for blk in std.blocks:
            groups.setdefault(blk.dim, []).append(blk.offset)
        self.groups = []
        for dim, offs in groups.items():
            idx = np.array([np.arange(o, o + dim * dim) for o in offs])
            self.groups.append((dim, idx, _flat_basis(dim), _flat_basis_conj(dim)))

    def _split(self, x):
        if self.phase1:
            return x[:-1], x[-1]
        return x, 0.0

    def _mats(self, xs, s):
        """Stacked block matrices (shifted by ``shift + s``) per size group."""
        out = []
        lift = self.shift + s
        for dim, idx, F, _ in self.groups:
            m = (xs[idx] @ F).reshape(-1, dim, dim)
            if lift:
                m = m + lift * np.eye(dim)
            out.append(m)
        return out

    def slacks(self, x):
        std = self.std
        xs, s = self._split(x)
        lin = std.G @ xs + std.h + self.shift + s if len(std.lin) else np.zeros(0)
        if len(self.qb):
            r = self.qD @ xs + self.qe
            quad = self.qa @ xs + self.qb - self.qO @ (self.qq * r * r) + self.shift + s
        else:
            quad = np.zeros(0)
        logs = self.la @ xs + self.lb if len(self.lb) else np.zeros(0)
        if self.phase1:
            logs = logs + s
        return lin, quad, logs

    def _logdets(self, xs, s):
        """Sum of block log-determinants, or ``None`` outside the PSD interior."""
        total = 0.0
        for m in self._mats(xs, s):
            try:
                L = np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                return None
            total += 2.0 * float(np.sum(np.log(np.diagonal(L, axis1=1, axis2=2).real)))
        return total

    def in_domain(self, x):
        return self.value(x, 0.0) < np.inf

    def objective(self, x):
        if self.phase1:
            return -x[-1]
        return self.std.objective(x)

    def value(self, x, t):
        """t * (-objective) + barrier; +inf outside the domain."""
        lin, quad, logs = self.slacks(x)
        if (lin.size and lin.min() <= 0) or (quad.size and quad.min() <= 0) \
                or (logs.size and logs.min() <= 0):
            return np.inf
        xs, s = self._split(x)
        if self.phase1 and s + 1.0 <= 0:
            return np.inf
        ld = self._logdets(xs, s)
        if ld is None:
            return np.inf
        val = -np.log(lin).sum() - np.log(quad).sum() - ld
        if self.phase1:
            val += t * s - np.log(logs).sum() - np.log(s + 1.0)
            val += 0.5 * self.reg * float(xs @ xs)
        else:
            val -= t * self.std.objective(x)
        return float(val)

    def derivatives(self, x, t):
        std = self.std
        n = self.n
        nx = std.n
        g = np.zeros(n)
        H = np.zeros((n, n))
        lin, quad, logs = self.slacks(x)
        xs, s = self._split(x)
        gx = g[:nx]
        Hx = H[:nx, :nx]

        # objective
        if self.phase1:
            g[-1] += t
        else:
            g[:nx] -= t * std.c
            if len(self.lb):
                wr = self.lw / logs
                gx -= t * (wr @ self.la)
                Hx += t * (self.la.T * (wr / logs)) @ self.la
        # linear rows
        if len(lin):
            inv = 1.0 / lin
            gx -= inv @ std.G
            Hx += (std.G.T * inv ** 2) @ std.G
            if self.phase1:
                g[-1] -= inv.sum()
                cross = (inv ** 2) @ std.G
                H[:nx, -1] += cross
                H[-1, :nx] += cross
                H[-1, -1] += (inv ** 2).sum()
        # quadratic rows
        if len(quad):
            r = self.qD @ xs + self.qe
            grads = self.qa - 2.0 * self.qO @ ((self.qq * r)[:, None] * self.qD)
            inv = 1.0 / quad
            gx -= inv @ grads
            Hx += (grads.T * inv ** 2) @ grads
            Hx += (self.qD.T * (2.0 * self.qq * inv[self.qowner])) @ self.qD
            if self.phase1:
                g[-1] -= inv.sum()
                cross = (inv ** 2) @ grads
                H[:nx, -1] += cross
                H[-1, :nx] += cross
                H[-1, -1] += (inv ** 2).sum()
        # PSD blocks: d/dX -log det M = -M^-1, d2 = M^-1 (.) M^-1
        for (dim, idx, F, Fc), m in zip(self.groups, self._mats(xs, s)):
            minv = np.linalg.inv(m)
            minv = (minv + np.conj(np.swapaxes(minv, 1, 2))) / 2
            nb = len(idx)
            flat = minv.reshape(nb, -1)
            gx[idx] -= (flat @ Fc.T).real
            kr = np.einsum("bij,blk->bikjl", minv, minv).reshape(nb, dim * dim, dim * dim)
            Hb = (Fc @ kr @ F.T).real
            Hx[idx[:, :, None], idx[:, None, :]] += Hb
            if self.phase1:
                m2 = minv @ minv
                g[-1] -= np.trace(minv, axis1=1, axis2=2).real.sum()
                cross = (m2.reshape(nb, -1) @ Fc.T).real
                H[idx, -1] += cross
                H[-1, idx] += cross
                H[-1, -1] += np.trace(m2, axis1=1, axis2=2).real.sum()
        if self.phase1:
            # log arguments become barrier rows in phase I
            if len(logs):
                inv = 1.0 / logs
                gx -= inv @ self.la
                Hx += (self.la.T * inv ** 2) @ self.la
                g[-1] -= inv.sum()
                cross = (inv ** 2) @ self.la
                H[:nx, -1] += cross
                H[-1, :nx] += cross
                H[-1, -1] += (inv ** 2).sum()
            g[-1] -= 1.0 / (s + 1.0)
            gx += self.reg * xs
            Hx += self.reg * np.eye(nx)
            H[-1, -1] += 1.0 / (s + 1.0) ** 2
        return g, H


def _newton_step(g, H, A):
    n = len(g)
    if A.shape[0] == 0:
        try:
            L = np.linalg.cholesky(H)
            y = np.linalg.solve(L, -g)
            return np.linalg.solve(L.T, y), np.zeros(0)
        except np.linalg.LinAlgError:
            reg = 1e-12 * max(1.0, np.max(np.abs(np.diag(H))))
            return np.linalg.solve(H + reg * np.eye(n), -g), np.zeros(0)
    m = A.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = A.T
    K[n:, :n] = A
    rhs = np.concatenate([-g, np.zeros(m)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


@dataclass
class _PathResult:
    x: np.ndarray
    t: float
    w: np.ndarray
    iterations: int
    converged: bool


def _barrier_solve(bar: _Barrier, x0, A, tol, max_iter, stop=None, t0=None):
    """Barrier method from a strictly feasible ``x0`` (with ``A x0 = b``)."""
    x = x0.copy()
    if t0 is None:
        f0 = bar.objective(x)
        t0 = bar.nu / max(abs(f0), 1.0)
        t0 = min(max(t0, 1e-8), 1e8)
    t = t0
    mu = 20.0
    it = 0
    w = np.zeros(A.shape[0])
    while True:
        # centering; intermediate stages only need to be roughly centered
        last = bar.nu / t <= tol * max(1.0, abs(bar.objective(x)))
        ctol = 1e-10 if last or stop is not None else CENTER_TOL
        for _ in range(80):
            g, H = bar.derivatives(x, t)
            dx, w = _newton_step(g, H, A)
            dec = float(-g @ dx)
            if dec / 2 <= ctol:
                break
            step = 1.0
            f_cur = bar.value(x, t)
            while step > 1e-14:
                xn = x + step * dx
                fn = bar.value(xn, t)
                if fn <= f_cur - 0.01 * step * dec:
                    break
                step *= 0.5
            else:
                break
            x = xn
            it += 1
            if stop is not None and stop(x):
                return _PathResult(x, t, w / t, it, True)
            if it >= max_iter:
                return _PathResult(x, t, w / t, it, False)
        if stop is not None and stop(x):
            return _PathResult(x, t, w / t, it, True)
        obj = bar.objective(x)
        if bar.nu / t <= tol * max(1.0, abs(obj)):
            return _PathResult(x, t, w / t, it, True)
        t *= mu


# --------------------------------------------------------------------------
# Public solve / KKT
# --------------------------------------------------------------------------


@dataclass
class KKTReport:
    primal: float
    dual: float
    gap: float
    stationarity: float

    def max(self) -> float:
        return max(self.primal, self.dual, self.gap, self.stationarity)


@dataclass
class ConicSolution:
    values: list
    objective: float
    status: str
    kkt_residuals: KKTReport | None = None
    multipliers: list = field(default_factory=list)
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _initial_point(std: _Standard):
    if std.A.shape[0]:
        x0, *_ = np.linalg.lstsq(std.A, std.b, rcond=None)
        if np.max(np.abs(std.A @ x0 - std.b), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(std.b))):
            return None
    else:
        x0 = np.zeros(std.n)
    # push PSD blocks towards the identity inside the equality affine set
    return x0


def _hint_point(std: _Standard, start):
    """Real coordinates of user-supplied matrices, projected onto the equalities."""
    x = np.zeros(std.n)
    for blk, m in zip(std.blocks, start):
        m = np.asarray(m, complex)
        x[blk.offset:blk.offset + blk.size] = _coords((m + m.conj().T) / 2)
    # epigraph coordinates strictly inside their cones
    for a, b, D, e, q, scale, ui in std.quad:
        if ui is None:
            idx = int(np.flatnonzero(D[0])[0])
            x[idx] = 0.5 * np.sqrt(max(a @ x + b, 0.0))
    if std.A.shape[0]:
        r = std.A @ x - std.b
        x -= np.linalg.lstsq(std.A, r, rcond=None)[0]
        if np.max(np.abs(std.A @ x - std.b)) > 1e-9 * max(1.0, np.max(np.abs(std.b))):
            return None
    return x


def _phase1(std: _Standard, tol, max_iter, start=None):
    x0 = _hint_point(std, start) if start is not None else None
    lift = 1e-3
    if x0 is None:
        x0 = _initial_point(std)
        lift = 1.0
    if x0 is None:
        return None, np.inf, 0
    bar = _Barrier(std, phase1=True)
    lin, quad, logs = bar.slacks(np.append(x0, 0.0))
    worst = 0.0
    for arr in (lin, quad, logs):
        if len(arr):
            worst = max(worst, -np.min(arr))
    for blk in std.blocks:
        worst = max(worst, -np.linalg.eigvalsh(blk.matrix(x0))[0])
    s0 = worst + lift
    x = np.append(x0, s0)
    A = np.hstack([std.A, np.zeros((std.A.shape[0], 1))])
    res = _barrier_solve(bar, x, A, tol=tol, max_iter=max_iter,
                         stop=lambda z: z[-1] < -PHASE1_MARGIN, t0=max(1.0, bar.nu / s0))
    return res.x[:-1], res.x[-1], res.iterations


def solve(prog: ConicProgram, tol: float = 1e-7, max_iter: int = 200,
          dump_to=None, start=None) -> ConicSolution:
    """Solve ``prog``; ``max_iter`` bounds the Newton steps of each phase.

    ``tol`` is the relative duality-gap target of the barrier path.
    ``start`` optionally lists one matrix per variable (for instance the
    previous iterate of an outer loop) to seed the feasibility search; it
    does not need to be feasible.
    """
    if dump_to is not None:
        dump_program(prog, dump_to)
    if not prog.variables:
        raise ProgramError("program has no variables")
    std = _Standard(prog)

    x1, s, it1 = _phase1(std, tol=1e-9, max_iter=max_iter, start=start)
    if x1 is None or s > tol:
        return ConicSolution([], -np.inf, INFEASIBLE, iterations=it1)
    shift = 0.0
    if s >= -PHASE1_MARGIN:
        # feasible set without (numerical) interior: relax slightly
        shift = max(s, 0.0) + tol
    bar = _Barrier(std, shift=shift)
    if not bar.in_domain(x1):
        return ConicSolution([], -np.inf, INFEASIBLE, iterations=it1)
    res = _barrier_solve(bar, x1, std.A, tol=tol, max_iter=max_iter)
    _STATS["phase1"] = it1
    _STATS["phase2"] = res.iterations
    x = res.x
    values = [blk.matrix(x) for blk in std.blocks]
    values = [(m + m.conj().T) / 2 for m in values]
    status = OPTIMAL if res.converged else MAX_ITERATIONS

    # multipliers for user constraints, in user scaling
    lin, quad, _ = bar.slacks(x)
    mult = [0.0] * len(prog.constraints)
    for (a, b, scale, ui), sl in zip(std.lin, lin):
        mult[ui] = scale / (res.t * sl)
    for (a, b, D, e, q, scale, ui), sl in zip(std.quad, quad):
        if ui is not None:
            mult[ui] = scale / (res.t * sl)
    for (a, b, scale, ui), wv in zip(std.eq, res.w):
        # Newton system solved for -grad; sign follows max f - nu (Ax-b)
        mult[ui] = -wv * scale
    mult = _refine_multipliers(prog, values, mult)
    sol = ConicSolution(values, prog.objective_value(values), status,
                        multipliers=mult, iterations=it1 + res.iterations)
    sol.kkt_residuals = validate_kkt(prog, sol) if status == OPTIMAL else None
    return sol


def _grad_matrices(prog: ConicProgram, values, mult):
    """Hermitian gradient of the Lagrangian (without the PSD term) per variable."""
    grads = [np.zeros((v.dim, v.dim), complex) for v in prog.variables]

    def add(expr, w):
        for k, c in expr.terms.items():
            grads[k] += w * c

    for term in prog.objective:
        a = term.expr.value(values)
        if term.kind == "linear":
            add(term.expr, term.weight)
        elif term.kind == "sqrt":
            add(term.expr, term.weight / (2 * np.sqrt(max(a, 1e-300))))
        else:
            add(term.expr, term.weight / max(a, 1e-300))
    for con, lam in zip(prog.constraints, mult):
        if con.kind == "ge":
            add(con.expr, lam)
        elif con.kind == "eq":
            add(con.expr, -lam)
        else:
            add(con.expr, lam)
            for c, e in con.squares:
                add(e, -2.0 * lam * c * e.value(values))
    return grads


def _refine_multipliers(prog: ConicProgram, values, mult):
    """Least-squares multipliers for the returned point.

    Barrier estimates ``1/(t * slack)`` lose digits to cancellation near
    the boundary; fitting ``grad_X L(m) X = 0`` and ``m_i g_i = 0`` on the
    final point recovers them to the accuracy of ``X``.
    """
    m = len(prog.constraints)
    if m == 0:
        return []
    base = _grad_matrices(prog, values, [0.0] * m)
    cols = []
    comp = np.zeros((m, m))
    for i, con in enumerate(prog.constraints):
        unit = [0.0] * m
        unit[i] = 1.0
        # contribution of constraint i alone (linear in its multiplier)
        gi = _grad_matrices(prog, values, unit)
        cols.append(np.concatenate([
            np.concatenate([((g - b) @ x).real.ravel(), ((g - b) @ x).imag.ravel()])
            for g, b, x in zip(gi, base, values)]))
        if con.kind != "eq":
            v = con.expr.value(values)
            if con.kind == "quad":
                v -= sum(c * e.value(values) ** 2 for c, e in con.squares)
            comp[i, i] = v
    rhs = -np.concatenate([
        np.concatenate([(b @ x).real.ravel(), (b @ x).imag.ravel()])
        for b, x in zip(base, values)])
    M = np.vstack([np.array(cols).T, comp])
    rhs = np.concatenate([rhs, np.zeros(m)])
    sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    out = []
    for con, est, lam in zip(prog.constraints, mult, sol):
        lam = float(lam)
        if con.kind != "eq":
            lam = max(lam, 0.0)
        out.append(lam)
    return out


def validate_kkt(prog: ConicProgram, sol: ConicSolution) -> KKTReport:
    """Recompute KKT residuals of ``sol`` from the program data.

    The PSD multiplier of each variable is implied by stationarity,
    ``Z = -grad_X L``; residuals are

    * primal: worst constraint / PSD violation,
    * dual: negative inequality multipliers and negative eigenvalues of Z,
    * gap: complementary slackness of the scalar constraints,
    * stationarity: ``||Z X||_F``, which vanishes only on the optimal face.

    All are scaled by ``max(1, ||grad f||)``.
    """
    if sol.status != OPTIMAL:
        raise ValueError(f"cannot validate a solution with status {sol.status!r}")
    values = sol.values
    mult = sol.multipliers
    obj_grads = _grad_matrices(prog, values, [0.0] * len(prog.constraints))
    scale = max(1.0, max(np.linalg.norm(g) for g in obj_grads))

    primal = 0.0
    gap = 0.0
    dual = 0.0
    for con, lam in zip(prog.constraints, mult):
        v = con.expr.value(values)
        if con.kind == "quad":
            v -= sum(c * e.value(values) ** 2 for c, e in con.squares)
        if con.kind == "eq":
            primal = max(primal, abs(v))
        else:
            primal = max(primal, -v)
            dual = max(dual, -lam)
            gap += abs(lam * v)
    for x in values:
        primal = max(primal, -np.linalg.eigvalsh(x)[0])

    grads = _grad_matrices(prog, values, mult)
    stat = 0.0
    for g, x in zip(grads, values):
        z = -g
        dual = max(dual, -np.linalg.eigvalsh((z + z.conj().T) / 2)[0])
        stat = max(stat, float(np.linalg.norm(z @ x)))
    return KKTReport(primal / scale, dual / scale, gap / scale, stat / scale)


# --------------------------------------------------------------------------
# Debug dump
# --------------------------------------------------------------------------


def _fmt_matrix(c):
    rows = []
    for row in np.atleast_2d(c):
        rows.append(" ".join(f"{z.real:.12g},{z.imag:.12g}" for z in row))
    return "; ".join(rows)


def _fmt_expr(expr: AffineExpr, prog: ConicProgram):
    parts = [f"tr([{_fmt_matrix(c)}] {prog.variables[k].name})"
             for k, c in sorted(expr.terms.items())]
    parts.append(f"{expr.const:.12g}")
    return " + ".join(parts)


def dump_program(prog: ConicProgram, dest=None) -> str:
    """Render ``prog`` as plain text; write it to ``dest`` (path or stream)."""
    out = io.StringIO()
    out.write("# conic program (maximize)\n")
    for v in prog.variables:
        out.write(f"var {v.name} hermitian {v.dim}x{v.dim} psd\n")
    out.write(f"objective constant {prog.constant:.12g}\n")
    for term in prog.objective:
        out.write(f"objective {term.kind} {term.weight:.12g} : {_fmt_expr(term.expr, prog)}\n")
    for con in prog.constraints:
        label = f" [{con.name}]" if con.name else ""
        if con.kind == "quad":
            sq = " + ".join(f"{c:.12g}*({_fmt_expr(e, prog)})^2" for c, e in con.squares)
            out.write(f"subject_to{label} {_fmt_expr(con.expr, prog)} >= {sq}\n")
        else:
            op = ">=" if con.kind == "ge" else "=="
            out.write(f"subject_to{label} {_fmt_expr(con.expr, prog)} {op} 0\n")
    text = out.getvalue()
    if dest is not None:
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            with open(dest, "w", encoding="utf-8") as fh:
                fh.write(text)
    return text
