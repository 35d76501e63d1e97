"""Independent numerical verification: derivative checks, retraction-order
checks, and brute-force grid search on low-dimensional charts.

The slope tests certify that a claimed gradient (or retraction) has the
correct first-order behaviour before any solver run trusts it: for a correct
gradient the residual ``f(R(x, t v)) - f(x) - t <grad, v>`` must vanish like
``t^2``.  Taking the median log-log slope across step-size decades, and
discarding samples at the numerical noise floor, makes the check robust to
cancellation error.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .costs import CostFunction
from .manifolds import (
    ComplexCircle,
    ComplexSphere,
    Manifold,
    Product,
)

NOISE_FLOOR = 1e-14
SLOPE_STEPS = 10.0 ** -np.arange(1, 8)  # t = 1e-1 .. 1e-7


class SlopeCheck(NamedTuple):
    order: float
    passed: bool
    vacuous: bool


def _fit_slope(ts, errs, floor: float) -> SlopeCheck:
    """Slope of log(err) vs log(t), robust to isolated bad samples.

    Samples at the numerical noise floor are discarded and the slope is the
    median of the successive per-decade slopes, which a single cancellation
    bump (or a contaminated endpoint) cannot tilt.
    """
    pts = [(np.log10(t), np.log10(e)) for t, e in zip(ts, errs) if e > floor]
    if len(pts) < 2:
        # every sample sits at the noise floor: nothing to certify against,
        # report a vacuous pass
        return SlopeCheck(np.inf, True, True)
    slopes = [
        (y2 - y1) / (x2 - x1)
        for (x1, y1), (x2, y2) in zip(pts, pts[1:])
    ]
    return SlopeCheck(float(np.median(slopes)), True, False)


def check_gradient(
    cost: CostFunction,
    manifold: Manifold,
    x,
    trials: int = 5,
    rng: Optional[np.random.Generator] = None,
    threshold: Optional[float] = None,
) -> SlopeCheck:
    """Slope test for the Riemannian gradient of ``cost`` at ``x``.

    For random unit tangents v, measures
    ``e(t) = |f(R(x, t v)) - f(x) - t <rgrad, v>|`` over t = 1e-1..1e-7 and
    estimates the log-log slope.  Returns the median slope across trials;
    passes at order >= 1.9 (>= 1.5 for finite-difference gradients).
    """
    if trials < 1:
        raise ValueError("check_gradient: trials must be >= 1")
    rng = rng or np.random.default_rng(0)
    if threshold is None:
        threshold = 1.5 if cost.fd_gradient else 1.9

    manifold.check_point(x)
    f0 = cost.value(x)
    grad = manifold.egrad_to_rgrad(x, cost.euclidean_grad(x))
    floor = NOISE_FLOOR * max(1.0, abs(f0))

    results = []
    for _ in range(trials):
        v = manifold.random_tangent(x, rng)
        df = manifold.inner(x, grad, v)
        errs = [
            abs(cost.value(manifold.retract(x, float(t) * v)) - f0 - float(t) * df)
            for t in SLOPE_STEPS
        ]
        results.append(_fit_slope(SLOPE_STEPS, errs, floor))

    non_vacuous = [r for r in results if not r.vacuous]
    if not non_vacuous:
        return SlopeCheck(np.inf, True, True)
    order = float(np.median([r.order for r in non_vacuous]))
    return SlopeCheck(order, order >= threshold, False)


def check_retraction(
    manifold: Manifold,
    trials: int = 5,
    rng: Optional[np.random.Generator] = None,
    threshold: float = 1.9,
) -> SlopeCheck:
    """Slope test for the first-order retraction condition.

    ``||R(x, t v) - (x + t v)||`` must be O(t^2) for the retraction to agree
    with the step to first order.
    """
    if trials < 1:
        raise ValueError("check_retraction: trials must be >= 1")
    rng = rng or np.random.default_rng(0)

    def ambient_gap(y, x, v, t):
        def leaf_gap(yl, xl, vl):
            return np.linalg.norm(np.ravel(yl - (xl + t * vl))) ** 2

        if isinstance(y, tuple):
            return np.sqrt(sum(leaf_gap(a, b, c) for a, b, c in zip(y, x, v)))
        return np.sqrt(leaf_gap(y, x, v))

    results = []
    for _ in range(trials):
        x = manifold.random_point(rng)
        v = manifold.random_tangent(x, rng)
        errs = [
            ambient_gap(manifold.retract(x, float(t) * v), x, v.coords, float(t))
            for t in SLOPE_STEPS
        ]
        results.append(_fit_slope(SLOPE_STEPS, errs, NOISE_FLOOR))

    non_vacuous = [r for r in results if not r.vacuous]
    if not non_vacuous:
        return SlopeCheck(np.inf, True, True)
    order = float(np.median([r.order for r in non_vacuous]))
    return SlopeCheck(order, order >= threshold, False)


# -- brute-force grid oracle -------------------------------------------------

MAX_GRID_EVALS = 4_000_000


@dataclass(frozen=True)
class _Axis:
    lo: float
    hi: float
    periodic: bool

    def samples(self, resolution: int) -> np.ndarray:
        if self.periodic:
            return np.linspace(self.lo, self.hi, resolution, endpoint=False)
        # fencepost sampling so grids at resolution r nest inside 2r
        return np.linspace(self.lo, self.hi, resolution + 1)


def _chart(manifold: Manifold, phase_invariant: bool):
    """Angle parametrization of a low-dimensional manifold.

    Returns ``(axes, to_point)`` where ``to_point(angles)`` produces a
    feasible point.  Circles use one angle per entry (the first entry is
    pinned to phase zero when the cost is globally phase invariant); spheres
    use the real spherical chart, which covers real-valued points only.
    """
    if isinstance(manifold, ComplexCircle):
        n = manifold.n
        drop = 1 if (phase_invariant and n > 1) else 0
        axes = [_Axis(0.0, 2 * np.pi, True) for _ in range(n - drop)]

        def to_point(angles):
            phases = np.concatenate([np.zeros(drop), np.asarray(angles)])
            return np.exp(1j * phases)

        return axes, to_point

    if isinstance(manifold, ComplexSphere):
        n, r = manifold.n, manifold.radius
        if n == 2:
            axes = [_Axis(0.0, 2 * np.pi, True)]

            def to_point(angles):
                (t,) = angles
                return r * np.array([np.cos(t), np.sin(t)], dtype=complex)

            return axes, to_point
        if n == 3:
            axes = [_Axis(0.0, np.pi, False), _Axis(0.0, 2 * np.pi, True)]

            def to_point(angles):
                t, p = angles
                return r * np.array(
                    [
                        np.sin(t) * np.cos(p),
                        np.sin(t) * np.sin(p),
                        np.cos(t),
                    ],
                    dtype=complex,
                )

            return axes, to_point
        raise ValueError("grid_oracle: sphere chart supports n <= 3 only")

    if isinstance(manifold, Product):
        factor_axes = []
        factor_maps = []
        for f in manifold.factors:
            axes, to_point = _chart(f, phase_invariant)
            factor_axes.append(axes)
            factor_maps.append(to_point)
        axes = [a for block in factor_axes for a in block]
        sizes = [len(block) for block in factor_axes]

        def to_point(angles):
            out = []
            k = 0
            for sz, fmap in zip(sizes, factor_maps):
                out.append(fmap(angles[k:k + sz]))
                k += sz
            return tuple(out)

        return axes, to_point

    raise ValueError(f"grid_oracle: no chart for {manifold.name}")


def grid_oracle(
    cost: CostFunction,
    manifold: Manifold,
    resolution: int,
    phase_invariant: bool = False,
):
    """Exhaustive minimization over a uniform angular grid.

    Ground-truth reference for low-dimensional problems: evaluates the cost
    at every grid point of the chart and returns ``(best_value, best_point)``.
    Accuracy is bounded by the cost's modulus of continuity times the grid
    spacing.  Refining the resolution by 2 never increases the result (the
    grids nest).
    """
    if resolution < 2 or resolution > 400:
        raise ValueError("grid_oracle: resolution must be in [2, 400]")
    axes, to_point = _chart(manifold, phase_invariant)
    if len(axes) > 4:
        raise ValueError(
            f"grid_oracle: chart dimension {len(axes)} exceeds the supported 4"
        )
    grids = [ax.samples(resolution) for ax in axes]
    total = int(np.prod([g.size for g in grids]))
    if total > MAX_GRID_EVALS:
        raise ValueError(f"grid_oracle: {total} evaluations exceed the budget")

    best_value = np.inf
    best_point = None
    for combo in itertools.product(*grids):
        pt = to_point(np.array(combo))
        val = cost.value(pt)
        if val < best_value:
            best_value = val
            best_point = pt
    return float(best_value), best_point


# -- battery for CI / CLI ----------------------------------------------------

@dataclass
class CheckRecord:
    name: str
    passed: bool
    detail: str


def geometry_battery(seed: int = 0, n_triples: int = 200):
    """Feasibility, idempotence, transport-linearity, and retraction-order
    checks across every manifold family.  Returns a list of CheckRecords."""
    from .manifolds import HPD, Grassmann, Oblique, Stiefel  # local: avoid cycle noise

    rng = np.random.default_rng(seed)
    zoo = [
        ComplexCircle(6),
        ComplexSphere(6, radius=2.0),
        Oblique(4, 3),
        Stiefel(5, 2),
        Grassmann(5, 2),
        HPD(3),
        Product((ComplexSphere(4, 1.5), ComplexCircle(3))),
    ]
    records = []
    for man in zoo:
        feas_worst = 0.0
        idem_worst = 0.0
        lin_worst = 0.0
        for _ in range(n_triples):
            x = man.random_point(rng)
            v = man.random_tangent(x, rng)
            t = float(rng.uniform(0.0, 1.0))
            y = man.retract(x, t * v)
            feas_worst = max(feas_worst, man.feasibility_residual(y))

            raw = man.random_tangent(x, rng).coords
            p1 = man.project(x, raw)
            p2 = man.project(x, p1.coords)
            gap = _coords_gap(p1.coords, p2.coords)
            idem_worst = max(idem_worst, gap)

            u = man.random_tangent(x, rng)
            w = man.random_tangent(x, rng)
            alpha, beta = 0.7, -1.3
            lhs = man.transport(x, y, alpha * u + beta * w)
            rhs = alpha * man.transport(x, y, u) + beta * man.transport(x, y, w)
            lin_worst = max(lin_worst, _coords_gap(lhs.coords, rhs.coords))
        records.append(CheckRecord(
            f"{man.name}: feasibility after retraction",
            feas_worst <= 1e-10,
            f"worst residual {feas_worst:.2e}",
        ))
        records.append(CheckRecord(
            f"{man.name}: projection idempotence",
            idem_worst <= 1e-12,
            f"worst gap {idem_worst:.2e}",
        ))
        records.append(CheckRecord(
            f"{man.name}: transport linearity",
            lin_worst <= 1e-12,
            f"worst gap {lin_worst:.2e}",
        ))
        ret = check_retraction(man, trials=5, rng=rng)
        records.append(CheckRecord(
            f"{man.name}: retraction order",
            ret.passed,
            f"order {ret.order:.2f}",
        ))
    return records


def _coords_gap(a, b) -> float:
    if isinstance(a, tuple):
        return max(_coords_gap(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def gradient_battery(seed: int = 0, points_per_cost: int = 5):
    """Gradient slope checks for every cost shipped in the package."""
    from .beamforming import PortGrid, SecrecyScenario, sample_channels, secrecy_cost
    from .costs import standard_battery

    rng = np.random.default_rng(seed)
    records = []
    for prob in standard_battery(seed):
        worst = np.inf
        for _ in range(points_per_cost):
            x = prob.manifold.random_point(rng)
            res = check_gradient(prob.cost, prob.manifold, x, trials=3, rng=rng)
            worst = min(worst, res.order)
        threshold = 1.5 if prob.cost.fd_gradient else 1.9
        records.append(CheckRecord(
            f"gradient[{prob.name}]",
            worst >= threshold,
            f"min order {worst:.2f}",
        ))

    scenario = SecrecyScenario(grid=PortGrid())
    worst = np.inf
    for rep in range(points_per_cost):
        ch = sample_channels(scenario, np.random.default_rng([seed, rep]))
        active = list(range(scenario.grid.n_active))
        hb, he = ch.restrict(active)
        manifold, cost = secrecy_cost(
            hb, he, scenario.noise_power, scenario.alpha, scenario.total_power
        )
        x = manifold.random_point(rng)
        res = check_gradient(cost, manifold, x, trials=3, rng=rng)
        worst = min(worst, res.order)
    records.append(CheckRecord(
        "gradient[secrecy]",
        worst >= 1.9,
        f"min order {worst:.2f}",
    ))
    return records


def run_battery(seed: int = 0, n_triples: int = 200, points_per_cost: int = 5):
    return geometry_battery(seed, n_triples) + gradient_battery(seed, points_per_cost)
