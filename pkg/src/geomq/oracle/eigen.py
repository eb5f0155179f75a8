"""Lowest eigenpairs of Hermitian operators (dense, shift-invert or LOBPCG)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["EigenResult", "StagnationError", "lowest_eigenpairs", "MAX_PAIRS"]

MAX_PAIRS = 32
DENSE_LIMIT = 1500


class StagnationError(RuntimeError):
    """The iteration stopped improving; ``ritz_history`` holds the Ritz values per step."""

    def __init__(self, message: str, ritz_history):
        super().__init__(message)
        self.ritz_history = ritz_history


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    method: str

    @property
    def relative_residuals(self) -> np.ndarray:
        return self.residuals / np.maximum(np.abs(self.values), 1.0)


def _as_matrix(op):
    if sp.issparse(op):
        return sp.csr_matrix(op)
    if isinstance(op, np.ndarray):
        return op
    if hasattr(op, "assemble"):
        return op.assemble()
    return None


def _residuals(op, vals, vecs):
    Av = np.column_stack([op @ vecs[:, j] for j in range(vecs.shape[1])]) if vecs.size else vecs
    return np.linalg.norm(Av - vecs * vals[None, :], axis=0) / np.linalg.norm(vecs, axis=0)


def lowest_eigenpairs(op, k: int = 1, tol: float = 1e-10, seed: int = 0, sigma: float | None = None,
                      method: str = "auto", maxiter: int = 2000) -> EigenResult:
    """``k`` smallest eigenvalues of a Hermitian operator.

    ``op`` may be a dense array, a sparse matrix, or a ``LinearOperator``
    (``TubeOperator`` supplies ``assemble``). Methods: ``dense``,
    ``shift-invert`` (ARPACK around ``sigma``, default 0 which is below the
    spectrum of a positive operator), ``lobpcg`` (matrix-free). The start
    vectors come from ``seed``, so results are reproducible bit for bit.
    """
    if k < 1 or k > MAX_PAIRS:
        raise ValueError(f"k must be in 1..{MAX_PAIRS}")
    n = op.shape[0]
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "shift-invert"
    rng = np.random.default_rng(seed)
    if method == "dense":
        A = _as_matrix(op)
        if A is None:
            A = op @ np.eye(n)
        A = A.toarray() if sp.issparse(A) else np.asarray(A)
        A = 0.5 * (A + A.conj().T)
        vals, vecs = sla.eigh(A, subset_by_index=(0, min(k, n) - 1))
    elif method == "shift-invert":
        A = _as_matrix(op)
        if A is None:
            raise ValueError("shift-invert needs an assembled matrix")
        v0 = rng.standard_normal(n)
        if np.iscomplexobj(A):
            v0 = v0 + 1j * rng.standard_normal(n)
        vals, vecs = spla.eigsh(sp.csc_matrix(A), k=k, sigma=0.0 if sigma is None else sigma,
                                which="LM", tol=0, v0=v0)
    elif method == "lobpcg":
        X = rng.standard_normal((n, k))
        if np.iscomplexobj(op) or getattr(op, "dtype", None) == complex:
            X = X + 1j * rng.standard_normal((n, k))
        lin = spla.aslinearoperator(op)
        # convergence is judged below from the true residuals
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            vals, vecs, hist = spla.lobpcg(lin, X, tol=tol, maxiter=maxiter, largest=False,
                                           retLambdaHistory=True)
        res = _residuals(op, np.asarray(vals), vecs)
        if np.any(res / np.maximum(np.abs(vals), 1.0) > tol * 10):
            raise StagnationError("LOBPCG stopped before reaching the residual target",
                                  [np.asarray(h).tolist() for h in hist])
    else:
        raise ValueError(f"unknown method {method!r}")
    vals = np.asarray(vals).real
    idx = np.argsort(vals, kind="stable")
    vals, vecs = vals[idx], vecs[:, idx]
    # fix the arbitrary phase of each vector so outputs are reproducible
    real = np.isrealobj(vecs)
    for j in range(vecs.shape[1]):
        i = int(np.argmax(np.abs(vecs[:, j])))
        ph = np.sign(vecs[i, j]) if real else np.exp(-1j * np.angle(vecs[i, j]))
        vecs[:, j] *= ph / np.linalg.norm(vecs[:, j])
    return EigenResult(vals, vecs, _residuals(op, vals, vecs), method)
