"""Lifted (PSD matrix) beamformers and rank-one extraction."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = ["LiftedBeamformerSet", "rank_one_extract", "reduce_rank", "dump_beamformers"]


def rank_one_extract(X: np.ndarray) -> tuple[np.ndarray, float]:
    """Dominant factor ``sqrt(l1) * v1`` of a PSD matrix and the ratio l2/l1.

    The global phase is fixed so that the first nonzero entry is real and
    nonnegative.  ``X = 0`` yields the zero vector with ratio 0.
    """
    X = np.asarray(X, dtype=complex)
    Xh = (X + X.conj().T) / 2
    w, vecs = np.linalg.eigh(Xh)
    l1 = w[-1]
    if l1 <= 0 or not np.isfinite(l1):
        return np.zeros(X.shape[0], complex), 0.0
    ratio = float(max(w[-2], 0.0) / l1) if len(w) > 1 else 0.0
    v = vecs[:, -1] * np.sqrt(l1)
    nz = np.flatnonzero(np.abs(v) > 1e-12 * np.max(np.abs(v)))
    if len(nz):
        v = v * np.exp(-1j * np.angle(v[nz[0]]))
    return v, ratio


def _hermitian_basis(r):
    out = []
    for i in range(r):
        E = np.zeros((r, r), complex)
        E[i, i] = 1
        out.append(E)
    for i in range(r):
        for j in range(i + 1, r):
            S = np.zeros((r, r), complex)
            S[i, j] = S[j, i] = 1 / np.sqrt(2)
            A = np.zeros((r, r), complex)
            A[i, j], A[j, i] = 1j / np.sqrt(2), -1j / np.sqrt(2)
            out += [S, A]
    return out


def reduce_rank(X: np.ndarray, functionals, rtol: float = 1e-9) -> np.ndarray:
    """PSD matrix of lowest reachable rank with the same ``tr(M X)`` for every
    Hermitian ``M`` in ``functionals``.

    When a convex program sees ``X`` only through such traces, the result is
    an equally optimal point.  Each pass moves along a direction inside the
    current range that leaves all traces fixed until one eigenvalue hits
    zero; it stops at rank one or when no such direction exists.
    """
    X = np.asarray(X, complex)
    X = (X + X.conj().T) / 2
    mats = [np.asarray(M, complex) for M in functionals]
    for _ in range(X.shape[0]):
        w, E = np.linalg.eigh(X)
        if w[-1] <= 0:
            break
        keep = w > rtol * w[-1]
        r = int(keep.sum())
        if r <= 1:
            break
        F = E[:, keep] * np.sqrt(w[keep])
        basis = _hermitian_basis(r)
        rows = []
        for M in mats:
            Mr = F.conj().T @ M @ F
            row = np.array([np.real(np.vdot(Mr, B)) for B in basis])
            n = np.linalg.norm(row)
            if n > 0:
                rows.append(row / n)
        if rows:
            _, sv, vt = np.linalg.svd(np.array(rows))
            rank = int(np.sum(sv > 1e-10 * sv[0])) if len(sv) else 0
            if rank >= len(basis):
                break
            coef = vt[rank]
        else:
            coef = np.zeros(len(basis))
            coef[0] = 1.0
        D = sum(c * B for c, B in zip(coef, basis))
        mu = np.linalg.eigvalsh(D)
        lam = mu[-1] if mu[-1] >= -mu[0] else mu[0]
        X = F @ (np.eye(r) - D / lam) @ F.conj().T
        X = (X + X.conj().T) / 2
    return X


def _empty(Q):
    return np.zeros((0, Q, Q), complex)


@dataclass(frozen=True)
class LiftedBeamformerSet:
    """``W`` (K,Q,Q), ``V`` (K,Q,Q), ``R`` and ``U`` (J,Q,Q) or empty when
    sensing is off.  Extracted vectors are filled by :meth:`extracted`."""

    W: np.ndarray
    V: np.ndarray
    R: np.ndarray
    U: np.ndarray
    w: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)
    r: np.ndarray | None = field(default=None, repr=False)
    u: np.ndarray | None = field(default=None, repr=False)
    rank_ratios: dict | None = field(default=None, repr=False)

    @classmethod
    def create(cls, W, V, R=None, U=None):
        W = np.asarray(W, complex)
        V = np.asarray(V, complex)
        Q = W.shape[-1] if W.size else V.shape[-1]
        R = _empty(Q) if R is None else np.asarray(R, complex).reshape(-1, Q, Q)
        U = _empty(Q) if U is None else np.asarray(U, complex).reshape(-1, Q, Q)
        return cls(W.reshape(-1, Q, Q), V.reshape(-1, Q, Q), R, U)

    @property
    def Q(self) -> int:
        return self.W.shape[-1]

    @property
    def sensing(self) -> bool:
        return self.R.shape[0] > 0

    @property
    def total_power(self) -> float:
        return float(np.trace(self.W, axis1=1, axis2=2).real.sum()
                     + np.trace(self.R, axis1=1, axis2=2).real.sum())

    def transmit_sum(self) -> np.ndarray:
        """``sum_k W_k + sum_j R_j``."""
        return self.W.sum(axis=0) + self.R.sum(axis=0)

    def replace(self, **kw) -> "LiftedBeamformerSet":
        kw.setdefault("w", None)
        kw.setdefault("v", None)
        kw.setdefault("r", None)
        kw.setdefault("u", None)
        kw.setdefault("rank_ratios", None)
        return replace(self, **kw)

    def normalized(self) -> "LiftedBeamformerSet":
        """Hermitian-symmetrized copy with unit-trace receive matrices."""

        def herm(x):
            return (x + np.conj(np.swapaxes(x, -1, -2))) / 2

        def unit(x):
            x = herm(x)
            tr = np.trace(x, axis1=1, axis2=2).real
            return x / np.where(tr > 0, tr, 1.0)[:, None, None]

        return self.replace(W=herm(self.W), V=unit(self.V), R=herm(self.R), U=unit(self.U))

    def extracted(self) -> "LiftedBeamformerSet":
        """Copy with the dominant-eigenpair vectors and rank ratios filled in."""
        ratios = {}
        out = {}
        for name in ("W", "V", "R", "U"):
            mats = getattr(self, name)
            vecs = []
            rs = []
            for X in mats:
                vec, ratio = rank_one_extract(X)
                vecs.append(vec)
                rs.append(ratio)
            out[name.lower()] = np.array(vecs).reshape(len(mats), self.Q)
            ratios[name] = rs
        return replace(self, rank_ratios=ratios, **out)

    def max_rank_ratio(self) -> float:
        ratios = (self.rank_ratios or self.extracted().rank_ratios)
        return max((r for rs in ratios.values() for r in rs), default=0.0)


def dump_beamformers(lifted: LiftedBeamformerSet, header: str = "") -> str:
    """Row-major ``re,im`` text dump of every matrix in the set."""
    lines = []
    if header:
        lines.append(f"# {header}")
    for name in ("W", "V", "R", "U"):
        for i, X in enumerate(getattr(lifted, name)):
            lines.append(f"{name}[{i}] {X.shape[0]}x{X.shape[1]}")
            for row in X:
                lines.append(" ".join(f"{z.real:.12g},{z.imag:.12g}" for z in row))
    return "\n".join(lines) + "\n"
