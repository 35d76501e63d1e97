"""Cost functions and benchmark problems with closed-form optima.

Each factory returns an :class:`OracleProblem` pairing a cost on one manifold
with its certified optimal value, computed by an independent route (dense
eigensolver or explicit closed form).  The solvers are validated against this
battery: whatever they return must match the certificate.

Gradients follow the Wirtinger convention ``g = 2 * df/d(conj(x))`` so that
``Df(x)[v] = Re(g^H v)``; see :mod:`riemopt.manifolds`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from .manifolds import (
    HPD,
    ComplexCircle,
    ComplexSphere,
    Grassmann,
    Manifold,
    Stiefel,
    herm,
)


@dataclass(frozen=True)
class CostFunction:
    """A smooth real cost over ambient coordinates.

    ``value(x)`` returns a float; ``euclidean_grad(x)`` returns ambient
    coordinates of the Wirtinger gradient; ``euclidean_hess_vec(x, v)`` is an
    optional Euclidean Hessian-vector product.  ``fd_gradient`` marks costs
    whose gradient is itself a finite-difference approximation, which relaxes
    the slope threshold used by the gradient check.
    """

    value: Callable[[Any], float]
    euclidean_grad: Callable[[Any], Any]
    euclidean_hess_vec: Optional[Callable[[Any, Any], Any]] = None
    fd_gradient: bool = False


@dataclass(frozen=True)
class OracleProblem:
    name: str
    manifold: Manifold
    cost: CostFunction
    optimum_value: float
    certificate_point: Any
    certificate: str
    unique: bool = True


def _require_hermitian(a: np.ndarray, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what}: expected a square matrix")
    scale = max(np.linalg.norm(a), 1e-300)
    if np.linalg.norm(a - a.conj().T) > 1e-12 * scale:
        raise ValueError(f"{what}: matrix is not Hermitian")
    return a


def rayleigh(a: np.ndarray) -> OracleProblem:
    """Rayleigh quotient minimization on the unit sphere.

    ``f(x) = Re(x^H A x)`` on ``||x|| = 1``; the minimum is the smallest
    eigenvalue of A, attained at the matching eigenvector.
    """
    a = _require_hermitian(a, "rayleigh")
    n = a.shape[0]
    evals, evecs = np.linalg.eigh(a)

    def value(x):
        return float(np.vdot(x, a @ x).real)

    def egrad(x):
        return 2.0 * (a @ x)

    return OracleProblem(
        name="rayleigh",
        manifold=ComplexSphere(n, 1.0),
        cost=CostFunction(value, egrad),
        optimum_value=float(evals[0]),
        certificate_point=np.ascontiguousarray(evecs[:, 0]),
        certificate="smallest eigenvalue of A at its eigenvector",
    )


def brockett(a: np.ndarray, k: int) -> OracleProblem:
    """Trace maximization over orthonormal frames.

    ``f(X) = -Re(trace(X^H A X))`` on the Stiefel manifold; the minimum is
    minus the sum of the k largest eigenvalues of A.
    """
    a = _require_hermitian(a, "brockett")
    n = a.shape[0]
    if k > n:
        raise ValueError("brockett: k must not exceed n")
    evals, evecs = np.linalg.eigh(a)

    def value(x):
        return float(-np.trace(x.conj().T @ a @ x).real)

    def egrad(x):
        return -2.0 * (a @ x)

    return OracleProblem(
        name="brockett",
        manifold=Stiefel(n, k),
        cost=CostFunction(value, egrad),
        optimum_value=float(-np.sum(evals[n - k:])),
        certificate_point=np.ascontiguousarray(evecs[:, n - k:]),
        certificate="minus the sum of the k largest eigenvalues of A",
    )


def phase_align(v: np.ndarray) -> OracleProblem:
    """Phase alignment under a constant-modulus constraint.

    ``f(x) = -|v^H x|^2`` on unit-modulus x; optimal phases copy those of v
    (up to one global phase) and the optimum is ``-(sum |v_i|)^2``.  Zero
    entries of v leave the matching phases free, so the optimizer is then
    non-unique.
    """
    v = np.asarray(v, dtype=complex)
    n = v.shape[0]
    unique = bool(np.all(np.abs(v) > 0))
    xstar = np.exp(1j * np.angle(v))
    xstar[np.abs(v) == 0] = 1.0

    def value(x):
        return float(-np.abs(np.vdot(v, x)) ** 2)

    def egrad(x):
        return -2.0 * v * np.vdot(v, x)

    return OracleProblem(
        name="phase_align",
        manifold=ComplexCircle(n),
        cost=CostFunction(value, egrad),
        optimum_value=float(-np.sum(np.abs(v)) ** 2),
        certificate_point=xstar,
        certificate="x_i = exp(j arg v_i), optimum -(sum |v_i|)^2",
        unique=unique,
    )


def subspace_fit(m: np.ndarray, p: int) -> OracleProblem:
    """Dominant-subspace extraction on the Grassmann manifold.

    ``f(X) = -Re(trace(X^H M X))`` depends only on span(X); the minimum is
    minus the sum of the p largest eigenvalues of M, attained at the dominant
    eigenspace.
    """
    m = _require_hermitian(m, "subspace_fit")
    n = m.shape[0]
    if p > n:
        raise ValueError("subspace_fit: p must not exceed n")
    evals, evecs = np.linalg.eigh(m)
    if evals[0] < -1e-10 * max(abs(evals[-1]), 1.0):
        raise ValueError("subspace_fit: matrix must be positive semidefinite")

    def value(x):
        return float(-np.trace(x.conj().T @ m @ x).real)

    def egrad(x):
        return -2.0 * (m @ x)

    return OracleProblem(
        name="subspace_fit",
        manifold=Grassmann(n, p),
        cost=CostFunction(value, egrad),
        optimum_value=float(-np.sum(evals[n - p:])),
        certificate_point=np.ascontiguousarray(evecs[:, n - p:]),
        certificate="dominant p-dimensional eigenspace of M",
    )


# -- HPD helpers (eigendecomposition-based matrix functions) -----------------

def _eigh_fun(a: np.ndarray, fn) -> np.ndarray:
    w, u = np.linalg.eigh(herm(a))
    return (u * fn(w)) @ u.conj().T


def hpd_logm(a: np.ndarray) -> np.ndarray:
    return _eigh_fun(a, np.log)


def hpd_sqrtm(a: np.ndarray) -> np.ndarray:
    return _eigh_fun(a, np.sqrt)


def hpd_inv_sqrtm(a: np.ndarray) -> np.ndarray:
    return _eigh_fun(a, lambda w: 1.0 / np.sqrt(w))


def hpd_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Affine-invariant distance ``||logm(a^-1/2 b a^-1/2)||_F``."""
    ai = hpd_inv_sqrtm(a)
    return float(np.linalg.norm(hpd_logm(ai @ b @ ai)))


def hpd_geodesic_midpoint(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    s = hpd_sqrtm(a)
    si = hpd_inv_sqrtm(a)
    return herm(s @ hpd_sqrtm(si @ b @ si) @ s)


def _hpd_log_map(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Riemannian log of y at x: ``x^1/2 logm(x^-1/2 y x^-1/2) x^1/2``."""
    s = hpd_sqrtm(x)
    si = hpd_inv_sqrtm(x)
    return herm(s @ hpd_logm(si @ y @ si) @ s)


def fd_euclidean_grad(value, fd_step: float = 1e-6):
    """Symmetric finite-difference Wirtinger gradient of a scalar cost.

    Differentiates along every real and imaginary coordinate direction of a
    complex matrix/vector argument.  Intended for costs whose analytic
    gradient is unavailable; quadratically more expensive than an analytic
    form, so only sensible at small sizes.
    """

    def egrad(x):
        x = np.asarray(x, dtype=complex)
        g = np.zeros_like(x)
        it = np.nditer(np.zeros(x.shape), flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            for direction in (1.0, 1.0j):
                e = np.zeros_like(x)
                e[idx] = direction
                fp = value(x + fd_step * e)
                fm = value(x - fd_step * e)
                d = (fp - fm) / (2.0 * fd_step)
                # df/d(conj x) picks up the conjugate pairing of directions
                g[idx] += d * direction
        return g

    return egrad


def hpd_mean(y1: np.ndarray, y2: np.ndarray, analytic_grad: bool = True) -> OracleProblem:
    """Two-matrix geometric mean on the HPD manifold.

    ``f(X) = d^2(X, Y1) + d^2(X, Y2)`` under the affine-invariant distance.
    The minimizer is the geodesic midpoint of Y1 and Y2 and the optimal value
    is ``d^2(Y1, Y2) / 2``.  With ``analytic_grad=False`` the gradient falls
    back to symmetric finite differences of the distance (slower, and checked
    against the looser slope threshold).
    """
    y1 = np.asarray(y1, dtype=complex)
    y2 = np.asarray(y2, dtype=complex)
    for y, tag in ((y1, "Y1"), (y2, "Y2")):
        _require_hermitian(y, f"hpd_mean {tag}")
        if np.linalg.eigvalsh(herm(y)).min() <= 0:
            raise ValueError(f"hpd_mean: {tag} is not positive definite")
    n = y1.shape[0]

    def value(x):
        return hpd_distance(x, y1) ** 2 + hpd_distance(x, y2) ** 2

    if analytic_grad:
        # Riemannian gradient of d^2(X, Y) is -2 Log_X(Y); pulling it back
        # through rgrad = X herm(g) X gives the Wirtinger form below.
        def egrad(x):
            xi = np.linalg.inv(x)
            rgrad = -2.0 * (_hpd_log_map(x, y1) + _hpd_log_map(x, y2))
            return herm(xi @ rgrad @ xi)

        cost = CostFunction(value, egrad)
    else:
        cost = CostFunction(value, fd_euclidean_grad(value), fd_gradient=True)

    midpoint = hpd_geodesic_midpoint(y1, y2)
    return OracleProblem(
        name="hpd_mean",
        manifold=HPD(n),
        cost=cost,
        optimum_value=0.5 * hpd_distance(y1, y2) ** 2,
        certificate_point=midpoint,
        certificate="geodesic midpoint of Y1 and Y2, value d^2(Y1,Y2)/2",
    )


def crandn_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return herm(g)


def standard_battery(seed: int = 0):
    """The fixed five-problem regression battery used by tests and the CLI."""
    rng = np.random.default_rng(seed)

    a16 = crandn_hermitian(rng, 16)
    a12 = crandn_hermitian(rng, 12)
    v64 = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    m10 = crandn_hermitian(rng, 10)
    m10 = m10 @ m10  # PSD
    b1 = crandn_hermitian(rng, 3)
    b2 = crandn_hermitian(rng, 3)
    y1 = b1 @ b1 + 0.5 * np.eye(3)
    y2 = b2 @ b2 + 0.5 * np.eye(3)

    return [
        rayleigh(a16),
        brockett(a12, 3),
        phase_align(v64),
        subspace_fit(m10, 2),
        hpd_mean(y1, y2),
    ]
