"""Manifold geometries for optimization with smooth nonconvex constraints.

Every manifold here is an embedded submanifold of a complex Euclidean space
(or a product of such spaces) and provides the five geometric operations the
solvers need:

- ``inner``           Riemannian metric on a tangent space
- ``project``         orthogonal projection of ambient coordinates onto a
                      tangent space (also the Euclidean-to-Riemannian
                      gradient map for the flat metric)
- ``retract``         map a tangent step back onto the manifold
- ``transport``       carry a tangent vector to another point's tangent space
- ``random_point`` / ``random_tangent``   feasible random draws

Points are plain complex ndarrays (tuples of ndarrays on products).  Tangent
vectors are wrapped in :class:`Tangent`, which remembers its base point so
that mixing tangent spaces is caught immediately instead of producing silent
garbage.

Conventions:
- The metric on all embedded manifolds is the real inner product
  ``Re(trace(u^H v))``; the HPD manifold carries the affine-invariant metric
  ``trace(x^-1 u x^-1 v)`` instead.
- Cost gradients follow the Wirtinger convention ``g = 2 * df/d(conj(x))``,
  so the directional derivative along ``v`` is ``Re(g^H v)`` and tangent
  projection of ``g`` yields the Riemannian gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

# Relative feasibility tolerance: retractions are exact up to rounding, so
# iterates must satisfy their defining constraint to this accuracy.
FEAS_TOL = 1e-10


class GeometryError(ValueError):
    """Base class for geometric contract violations."""


class FeasibilityError(GeometryError):
    """A point does not satisfy the manifold's defining constraint."""


class BaseMismatchError(GeometryError):
    """Tangent vectors from different tangent spaces were combined."""


class DegenerateStepError(GeometryError):
    """A retraction step annihilated the point (zero entry / rank loss)."""


class StepTooLongError(GeometryError):
    """A retraction left the feasible cone; the caller must shrink the step."""


# ---------------------------------------------------------------------------
# coordinate trees: a coordinate block is an ndarray, or a tuple of blocks on
# product manifolds.  These helpers keep the solver code shape-agnostic.

def tmap(fn, *trees):
    if isinstance(trees[0], tuple):
        return tuple(tmap(fn, *parts) for parts in zip(*trees))
    return fn(*trees)


def tree_vdot_real(u, v) -> float:
    """Real part of the flat complex inner product, summed over blocks."""
    if isinstance(u, tuple):
        return sum(tree_vdot_real(a, b) for a, b in zip(u, v))
    return float(np.vdot(u, v).real)


def tree_norm(u) -> float:
    return np.sqrt(max(tree_vdot_real(u, u), 0.0))


def tree_equal(a, b) -> bool:
    if a is b:
        return True
    if isinstance(a, tuple):
        return (
            isinstance(b, tuple)
            and len(a) == len(b)
            and all(tree_equal(x, y) for x, y in zip(a, b))
        )
    return isinstance(b, np.ndarray) and np.array_equal(a, b)


def tree_iszero(a) -> bool:
    if isinstance(a, tuple):
        return all(tree_iszero(x) for x in a)
    return not np.any(a)


def crandn(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard complex Gaussian draw, unit variance per complex entry."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def herm(a: np.ndarray) -> np.ndarray:
    """Hermitian part (A + A^H) / 2."""
    return (a + a.conj().T) / 2.0


@dataclass(frozen=True)
class Tangent:
    """A tangent vector: ambient coordinates plus the base point they live at.

    Supports the linear-space arithmetic solvers need (`+`, `-`, unary `-`,
    real scalar `*`).  Combining vectors with different base points raises
    :class:`BaseMismatchError`.
    """

    coords: Any
    base: Any

    def _require_same_base(self, other: "Tangent") -> None:
        if not tree_equal(self.base, other.base):
            raise BaseMismatchError("tangent vectors have different base points")

    def __add__(self, other: "Tangent") -> "Tangent":
        self._require_same_base(other)
        return Tangent(tmap(np.add, self.coords, other.coords), self.base)

    def __sub__(self, other: "Tangent") -> "Tangent":
        self._require_same_base(other)
        return Tangent(tmap(np.subtract, self.coords, other.coords), self.base)

    def __neg__(self) -> "Tangent":
        return Tangent(tmap(np.negative, self.coords), self.base)

    def __mul__(self, scalar) -> "Tangent":
        s = float(scalar)
        return Tangent(tmap(lambda c: s * c, self.coords), self.base)

    __rmul__ = __mul__


class Manifold:
    """Shared contract for all geometries.

    Subclasses implement the coordinate-level primitives (``_project``,
    ``_retract``, ``_inner``, ...) and this base class wraps them in the
    :class:`Tangent`-aware public API with base-point and feasibility checks.
    """

    name: str = "manifold"
    dim: int = 0          # intrinsic real dimension
    ambient_dim: int = 0  # real dimension of the ambient coordinate space

    # -- subclass primitives -------------------------------------------------

    def _feasibility_residual(self, x) -> float:
        raise NotImplementedError

    def _tangency_residual(self, x, coords) -> float:
        raise NotImplementedError

    def _project(self, x, ambient):
        raise NotImplementedError

    def _retract(self, x, coords):
        raise NotImplementedError

    def _inner(self, x, u, v) -> float:
        raise NotImplementedError

    def _random_point(self, rng):
        raise NotImplementedError

    def _egrad2rgrad(self, x, g):
        # Euclidean-to-Riemannian gradient; tangent projection is correct for
        # every flat-metric embedded manifold.  HPD overrides.
        return self._project(x, g)

    def _transport(self, x, y, coords):
        # Projection transport: reinterpret the ambient coordinates at y.
        return self._project(y, coords)

    def _zero(self, x):
        return tmap(np.zeros_like, x)

    # -- public API ----------------------------------------------------------

    def check_point(self, x, tol: float = FEAS_TOL) -> None:
        """Raise :class:`FeasibilityError` if ``x`` violates the constraint."""
        res = self._feasibility_residual(x)
        if not res <= tol:
            raise FeasibilityError(
                f"{self.name}: point infeasible, residual {res:.3e} > {tol:.1e}"
            )

    def feasibility_residual(self, x) -> float:
        return self._feasibility_residual(x)

    def tangency_residual(self, v: Tangent) -> float:
        return self._tangency_residual(v.base, v.coords)

    def inner(self, x, u: Tangent, v: Tangent) -> float:
        if not (tree_equal(u.base, x) and tree_equal(v.base, x)):
            raise BaseMismatchError(f"{self.name}: tangents not based at x")
        return self._inner(x, u.coords, v.coords)

    def norm(self, x, v: Tangent) -> float:
        return np.sqrt(max(self.inner(x, v, v), 0.0))

    def project(self, x, ambient) -> Tangent:
        return Tangent(self._project(x, ambient), x)

    def egrad_to_rgrad(self, x, g) -> Tangent:
        """Riemannian gradient from a Wirtinger Euclidean gradient."""
        return Tangent(self._egrad2rgrad(x, g), x)

    def retract(self, x, v: Tangent):
        """Map the tangent step ``v`` at ``x`` to a feasible point.

        ``retract(x, 0)`` returns ``x`` itself, exactly.
        """
        if not tree_equal(v.base, x):
            raise BaseMismatchError(f"{self.name}: tangent not based at x")
        if tree_iszero(v.coords):
            return x
        return self._retract(x, v.coords)

    def transport(self, x, y, v: Tangent) -> Tangent:
        """Carry ``v`` (based at ``x``) to the tangent space at ``y``."""
        if not tree_equal(v.base, x):
            raise BaseMismatchError(f"{self.name}: tangent not based at x")
        return Tangent(self._transport(x, y, v.coords), y)

    def random_point(self, rng: np.random.Generator):
        return self._random_point(rng)

    def random_tangent(self, x, rng: np.random.Generator) -> Tangent:
        """Unit-norm tangent vector from a projected Gaussian draw."""
        for _ in range(10):
            raw = tmap(lambda c: crandn(rng, c.shape), x)
            v = self.project(x, raw)
            n = self.norm(x, v)
            if n > 1e-12:
                return (1.0 / n) * v
        raise GeometryError(f"{self.name}: could not draw a nonzero tangent")

    def zero_tangent(self, x) -> Tangent:
        return Tangent(self._zero(x), x)

    def __repr__(self) -> str:
        return self.name


def _as_complex_vector(x, n: int, what: str) -> None:
    if np.shape(x) != (n,):
        raise GeometryError(f"{what}: expected shape ({n},), got {np.shape(x)}")


class ComplexCircle(Manifold):
    """Unit-modulus complex vectors: ``{x in C^n : |x_i| = 1}``.

    The geometry behind constant-modulus constraints (phase-only weights).
    Tangent space at x: ``{v : Re(conj(x_i) v_i) = 0}``.
    """

    def __init__(self, n: int):
        if n < 1:
            raise GeometryError("ComplexCircle: n must be positive")
        self.n = int(n)
        self.name = f"circle(C^{n})"
        self.dim = self.n
        self.ambient_dim = 2 * self.n

    def _feasibility_residual(self, x) -> float:
        _as_complex_vector(x, self.n, self.name)
        return float(np.max(np.abs(np.abs(x) - 1.0)))

    def _tangency_residual(self, x, v) -> float:
        return float(np.max(np.abs((np.conj(x) * v).real)))

    def _project(self, x, a):
        return a - (a * np.conj(x)).real * x

    def _retract(self, x, v):
        y = x + v
        m = np.abs(y)
        if np.any(m < 1e-300):
            raise DegenerateStepError(f"{self.name}: step annihilates an entry")
        return y / m

    def _inner(self, x, u, v) -> float:
        return float(np.vdot(u, v).real)

    def _random_point(self, rng):
        g = crandn(rng, self.n)
        m = np.abs(g)
        m[m == 0] = 1.0
        return g / m


class ComplexSphere(Manifold):
    """Complex vectors of fixed norm: ``{x in C^n : ||x|| = r}``.

    The natural home of a beamformer under a transmit-power budget ``r^2``.
    """

    def __init__(self, n: int, radius: float = 1.0):
        if n < 1:
            raise GeometryError("ComplexSphere: n must be positive")
        if not radius > 0:
            raise GeometryError("ComplexSphere: radius must be positive")
        self.n = int(n)
        self.radius = float(radius)
        self.name = f"sphere(C^{n}, r={radius:g})"
        self.dim = 2 * self.n - 1
        self.ambient_dim = 2 * self.n

    def _feasibility_residual(self, x) -> float:
        _as_complex_vector(x, self.n, self.name)
        nrm = np.sqrt(np.vdot(x, x).real)
        return float(abs(nrm - self.radius) / self.radius)

    def _tangency_residual(self, x, v) -> float:
        return float(abs(np.vdot(x, v).real) / self.radius)

    def _project(self, x, a):
        return a - (np.vdot(x, a).real / self.radius**2) * x

    def _retract(self, x, v):
        y = x + v
        n = np.sqrt(np.vdot(y, y).real)
        if n < 1e-300:
            raise DegenerateStepError(f"{self.name}: step annihilates the point")
        return (self.radius / n) * y

    def _inner(self, x, u, v) -> float:
        return float(np.vdot(u, v).real)

    def _random_point(self, rng):
        g = crandn(rng, self.n)
        n = np.linalg.norm(g)
        if n == 0:
            g = np.ones(self.n, dtype=complex)
            n = np.linalg.norm(g)
        return (self.radius / n) * g


class Oblique(Manifold):
    """n x m complex matrices with unit-norm columns (a product of spheres)."""

    def __init__(self, n: int, m: int):
        if n < 1 or m < 1:
            raise GeometryError("Oblique: dimensions must be positive")
        self.n = int(n)
        self.m = int(m)
        self.name = f"oblique(C^{n}x{m})"
        self.dim = self.m * (2 * self.n - 1)
        self.ambient_dim = 2 * self.n * self.m

    def _colnorms(self, x):
        return np.linalg.norm(x, axis=0)

    def _feasibility_residual(self, x) -> float:
        if np.shape(x) != (self.n, self.m):
            raise GeometryError(f"{self.name}: bad shape {np.shape(x)}")
        return float(np.max(np.abs(self._colnorms(x) - 1.0)))

    def _tangency_residual(self, x, v) -> float:
        return float(np.max(np.abs(np.sum(np.conj(x) * v, axis=0).real)))

    def _project(self, x, a):
        radial = np.sum(np.conj(x) * a, axis=0).real
        return a - x * radial[np.newaxis, :]

    def _retract(self, x, v):
        y = x + v
        norms = self._colnorms(y)
        if np.any(norms < 1e-300):
            raise DegenerateStepError(f"{self.name}: step annihilates a column")
        return y / norms[np.newaxis, :]

    def _inner(self, x, u, v) -> float:
        return float(np.vdot(u, v).real)

    def _random_point(self, rng):
        g = crandn(rng, (self.n, self.m))
        norms = self._colnorms(g)
        norms[norms == 0] = 1.0
        return g / norms[np.newaxis, :]


def _qr_positive(a: np.ndarray, name: str) -> np.ndarray:
    """Q factor of the thin QR with the diagonal of R made real positive."""
    q, r = np.linalg.qr(a)
    d = np.diagonal(r)
    if np.any(np.abs(d) < 1e-300):
        raise DegenerateStepError(f"{name}: step is rank deficient")
    return q * (d / np.abs(d))


class Stiefel(Manifold):
    """n x p complex matrices with orthonormal columns: ``X^H X = I_p``.

    Tangent space at X: ``{V : X^H V + V^H X = 0}``.  Retraction is the thin
    QR factor with a positive-diagonal sign convention, which is deterministic
    and first-order exact.
    """

    def __init__(self, n: int, p: int):
        if p < 1 or n < p:
            raise GeometryError("Stiefel: need 1 <= p <= n")
        self.n = int(n)
        self.p = int(p)
        self.name = f"stiefel(C^{n}x{p})"
        self.dim = 2 * self.n * self.p - self.p * self.p
        self.ambient_dim = 2 * self.n * self.p

    def _feasibility_residual(self, x) -> float:
        if np.shape(x) != (self.n, self.p):
            raise GeometryError(f"{self.name}: bad shape {np.shape(x)}")
        gram = x.conj().T @ x
        return float(np.linalg.norm(gram - np.eye(self.p)))

    def _tangency_residual(self, x, v) -> float:
        xtv = x.conj().T @ v
        return float(np.linalg.norm(xtv + xtv.conj().T))

    def _project(self, x, a):
        return a - x @ herm(x.conj().T @ a)

    def _retract(self, x, v):
        return _qr_positive(x + v, self.name)

    def _inner(self, x, u, v) -> float:
        return float(np.vdot(u, v).real)

    def _random_point(self, rng):
        return _qr_positive(crandn(rng, (self.n, self.p)), self.name)


class Grassmann(Manifold):
    """Subspaces of dimension p in C^n, represented by orthonormal bases.

    All operations are invariant under right-multiplication of the basis by a
    p x p unitary, so a point stands for the subspace, not the basis.  Tangent
    (horizontal) space at X: ``{V : X^H V = 0}``.
    """

    def __init__(self, n: int, p: int):
        if p < 1 or n < p:
            raise GeometryError("Grassmann: need 1 <= p <= n")
        self.n = int(n)
        self.p = int(p)
        self.name = f"grassmann(C^{n}, p={p})"
        self.dim = 2 * self.p * (self.n - self.p)
        self.ambient_dim = 2 * self.n * self.p

    def _feasibility_residual(self, x) -> float:
        if np.shape(x) != (self.n, self.p):
            raise GeometryError(f"{self.name}: bad shape {np.shape(x)}")
        gram = x.conj().T @ x
        return float(np.linalg.norm(gram - np.eye(self.p)))

    def _tangency_residual(self, x, v) -> float:
        return float(np.linalg.norm(x.conj().T @ v))

    def _project(self, x, a):
        return a - x @ (x.conj().T @ a)

    def _retract(self, x, v):
        return _qr_positive(x + v, self.name)

    def _inner(self, x, u, v) -> float:
        return float(np.vdot(u, v).real)

    def _random_point(self, rng):
        return _qr_positive(crandn(rng, (self.n, self.p)), self.name)

    def dist(self, a, b) -> float:
        return grassmann_dist(a, b)


def grassmann_dist(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic distance between the subspaces spanned by two bases.

    ``sqrt(sum(theta_i^2))`` where the principal angles ``theta_i`` come from
    the singular values of ``a^H b`` (clamped into [0, 1]).  Symmetric, zero
    iff the subspaces coincide, and independent of the basis representatives.
    """
    if np.shape(a) != np.shape(b):
        raise GeometryError(
            f"grassmann_dist: shape mismatch {np.shape(a)} vs {np.shape(b)}"
        )
    sigma = np.linalg.svd(np.asarray(a).conj().T @ np.asarray(b), compute_uv=False)
    theta = np.arccos(np.clip(sigma, 0.0, 1.0))
    return float(np.linalg.norm(theta))


class HPD(Manifold):
    """Hermitian positive definite n x n matrices with the affine-invariant
    metric ``<u, v>_x = trace(x^-1 u x^-1 v)``.

    The tangent space at every point is the set of Hermitian matrices; the
    metric, not the tangent space, carries the curvature.  Retraction is the
    second-order map ``x + v + v x^-1 v / 2``, which avoids the matrix
    exponential.  Transport is the identity on coordinates.
    """

    def __init__(self, n: int):
        if n < 1:
            raise GeometryError("HPD: n must be positive")
        self.n = int(n)
        self.name = f"hpd({n}x{n})"
        self.dim = self.n * self.n
        self.ambient_dim = 2 * self.n * self.n

    def _feasibility_residual(self, x) -> float:
        if np.shape(x) != (self.n, self.n):
            raise GeometryError(f"{self.name}: bad shape {np.shape(x)}")
        scale = max(np.linalg.norm(x), 1e-300)
        herm_res = np.linalg.norm(x - x.conj().T) / scale
        eigmin = float(np.linalg.eigvalsh(herm(x)).min())
        if eigmin <= 0:
            return np.inf
        return float(herm_res)

    def _tangency_residual(self, x, v) -> float:
        scale = max(np.linalg.norm(v), 1e-300)
        return float(np.linalg.norm(v - v.conj().T) / scale)

    def _project(self, x, a):
        return herm(a)

    def _egrad2rgrad(self, x, g):
        return x @ herm(g) @ x

    def _retract(self, x, v):
        with np.errstate(over="ignore", invalid="ignore"):
            y = herm(x + v + 0.5 * (v @ np.linalg.solve(x, v)))
        if not np.all(np.isfinite(y)):
            raise StepTooLongError(f"{self.name}: retraction overflowed")
        try:
            np.linalg.cholesky(y)
        except np.linalg.LinAlgError:
            raise StepTooLongError(
                f"{self.name}: retracted point lost positive definiteness"
            ) from None
        return y

    def _inner(self, x, u, v) -> float:
        xu = np.linalg.solve(x, u)
        xv = np.linalg.solve(x, v)
        return float(np.trace(xu @ xv).real)

    def _transport(self, x, y, coords):
        return coords

    def _random_point(self, rng):
        a = crandn(rng, (self.n, self.n))
        return herm(a.conj().T @ a) + 1e-3 * np.eye(self.n)


class Product(Manifold):
    """Cartesian product of manifolds; points and tangents are tuples.

    The metric is the sum of the factor metrics and every operation applies
    factorwise, which is exactly what multi-constraint problems need (for
    example one power sphere per beamforming vector).
    """

    def __init__(self, factors):
        factors = tuple(factors)
        if len(factors) < 2:
            raise GeometryError("Product: need at least two factors")
        self.factors = factors
        self.name = "product(" + ", ".join(f.name for f in factors) + ")"
        self.dim = sum(f.dim for f in factors)
        self.ambient_dim = sum(f.ambient_dim for f in factors)

    def _split(self, coords):
        if not isinstance(coords, tuple) or len(coords) != len(self.factors):
            raise GeometryError(
                f"{self.name}: expected a tuple of {len(self.factors)} blocks"
            )
        return coords

    def _feasibility_residual(self, x) -> float:
        parts = self._split(x)
        return max(f._feasibility_residual(p) for f, p in zip(self.factors, parts))

    def _tangency_residual(self, x, v) -> float:
        return max(
            f._tangency_residual(p, c)
            for f, p, c in zip(self.factors, self._split(x), self._split(v))
        )

    def _project(self, x, a):
        return tuple(
            f._project(p, c)
            for f, p, c in zip(self.factors, self._split(x), self._split(a))
        )

    def _egrad2rgrad(self, x, g):
        return tuple(
            f._egrad2rgrad(p, c)
            for f, p, c in zip(self.factors, self._split(x), self._split(g))
        )

    def _retract(self, x, v):
        return tuple(
            f._retract(p, c)
            for f, p, c in zip(self.factors, self._split(x), self._split(v))
        )

    def _inner(self, x, u, v) -> float:
        return sum(
            f._inner(p, a, b)
            for f, p, a, b in zip(
                self.factors, self._split(x), self._split(u), self._split(v)
            )
        )

    def _transport(self, x, y, coords):
        return tuple(
            f._transport(px, py, c)
            for f, px, py, c in zip(
                self.factors, self._split(x), self._split(y), self._split(coords)
            )
        )

    def _random_point(self, rng):
        return tuple(f._random_point(rng) for f in self.factors)
