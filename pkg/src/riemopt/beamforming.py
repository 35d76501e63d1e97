"""Secure downlink beamforming with a fluid-antenna port grid.

A base station carries a small set of fluid antennas that can sit on any
subset of candidate ports in a planar region.  For each candidate subset it
transmits a confidential signal beamformer ``w`` toward the legitimate user
(Bob) plus an artificial-noise vector ``z`` to jam the eavesdropper (Eve),
splitting the power budget ``P`` as ``alpha P`` / ``(1 - alpha) P``.  The
fixed-power constraints put ``(w, z)`` on a product of two complex spheres,
so the secrecy-rate maximization runs directly on that manifold with the
solvers from :mod:`riemopt.solvers`.

The channel is a geometric multipath model: each of L paths contributes a
complex gain times the array steering vector of its direction, which makes
the per-port response position dependent and port selection meaningful.
Every random quantity is drawn from an explicit generator, so trials are
reproducible and parallelizable by stream.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .costs import CostFunction
from .manifolds import ComplexCircle, ComplexSphere, Product, crandn
from .solvers import SOLVERS, SolverConfig, SolverReport

LN2 = math.log(2.0)


class BudgetError(RuntimeError):
    """Exhaustive port search would exceed the subset budget."""


@dataclass(frozen=True)
class PortGrid:
    """Candidate antenna ports on a uniform planar grid.

    ``n_active`` antennas occupy a subset of the ``n_ports`` positions.
    Positions are in meters; the default layout is a near-square grid at
    half-wavelength spacing (4 x 2 for the default 8 ports).
    """

    n_ports: int = 8
    n_active: int = 4
    spacing: float = 0.5
    wavelength: float = 1.0
    positions: Optional[tuple] = None

    def __post_init__(self):
        if self.n_ports < 1 or self.n_active < 1:
            raise ValueError("PortGrid: counts must be positive")
        if self.n_active > self.n_ports:
            raise ValueError("PortGrid: n_active must not exceed n_ports")
        if self.wavelength <= 0 or self.spacing <= 0:
            raise ValueError("PortGrid: spacing and wavelength must be positive")
        if self.positions is None:
            rows = int(math.floor(math.sqrt(self.n_ports)))
            cols = int(math.ceil(self.n_ports / rows))
            pos = tuple(
                (self.spacing * (k % cols), self.spacing * (k // cols))
                for k in range(self.n_ports)
            )
            object.__setattr__(self, "positions", pos)
        else:
            object.__setattr__(self, "positions", tuple(map(tuple, self.positions)))
        if len(self.positions) != self.n_ports:
            raise ValueError("PortGrid: need one position per port")
        if len(set(self.positions)) != self.n_ports:
            raise ValueError("PortGrid: positions must be distinct")
        w, h = self.region
        for x, y in self.positions:
            if not (0 <= x / self.wavelength <= w and 0 <= y / self.wavelength <= h):
                raise ValueError("PortGrid: position outside the movement region")

    @property
    def region(self):
        """(width, height) of the movement region, in wavelengths."""
        xs = [p[0] for p in self.positions] if self.positions else [0.0]
        ys = [p[1] for p in self.positions] if self.positions else [0.0]
        return (max(xs) / self.wavelength, max(ys) / self.wavelength)

    def position_array(self, ports: Sequence[int]) -> np.ndarray:
        return np.array([self.positions[p] for p in ports], dtype=float)


def _default_solver_cfg() -> SolverConfig:
    # Monte-Carlo economy settings: sweep trials need thousands of solves,
    # and the secrecy objective is flat near its optimum well before 1e-6.
    return SolverConfig(grad_tol=1e-4, max_iters=100)


@dataclass
class SecrecyScenario:
    """Complete configuration of one benchmark experiment."""

    grid: PortGrid = field(default_factory=PortGrid)
    total_power: float = 1.0
    alpha: float = 0.8
    noise_power: float = 1.0
    n_paths: int = 4
    snr_grid_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    trials: int = 50
    seed: int = 0
    solver: str = "rtr"
    solver_cfg: SolverConfig = field(default_factory=_default_solver_cfg)

    def __post_init__(self):
        if self.total_power <= 0:
            raise ValueError("SecrecyScenario: total_power must be positive")
        if self.noise_power <= 0:
            raise ValueError("SecrecyScenario: noise_power must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("SecrecyScenario: alpha must be in (0, 1]")
        if self.n_paths < 1:
            raise ValueError("SecrecyScenario: n_paths must be >= 1")
        if self.solver not in SOLVERS:
            raise ValueError(f"SecrecyScenario: unknown solver '{self.solver}'")
        self.snr_grid_db = tuple(float(s) for s in self.snr_grid_db)


def steering_vector(positions, theta: float, phi: float, wavelength: float) -> np.ndarray:
    """Planar-array steering vector for arrival direction (theta, phi).

    Entry m is ``exp(j 2 pi / lambda * (x_m sin(theta) cos(phi)
    + y_m sin(theta) sin(phi)))``; all entries have unit modulus.
    """
    if wavelength <= 0:
        raise ValueError("steering_vector: wavelength must be positive")
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[0] == 0 or pos.shape[1] != 2:
        raise ValueError("steering_vector: positions must be a nonempty (m, 2) array")
    k = 2.0 * np.pi / wavelength
    proj = pos[:, 0] * (np.sin(theta) * np.cos(phi)) + pos[:, 1] * (
        np.sin(theta) * np.sin(phi)
    )
    return np.exp(1j * k * proj)


@dataclass(frozen=True)
class PathSet:
    """One receiver's multipath parameters: L gains and arrival angles."""

    gains: np.ndarray
    thetas: np.ndarray
    phis: np.ndarray


@dataclass(frozen=True)
class ChannelRealization:
    """Channels of Bob and Eve over a set of ports, plus the paths behind
    them, so the same fading realization can be restricted to any subset."""

    h_bob: np.ndarray
    h_eve: np.ndarray
    ports: tuple
    paths_bob: PathSet
    paths_eve: PathSet

    def restrict(self, subset: Sequence[int]):
        """Channel vectors over a subset of this realization's ports."""
        idx = [self.ports.index(p) for p in subset]
        return self.h_bob[idx], self.h_eve[idx]


def sample_paths(n_paths: int, rng: np.random.Generator) -> PathSet:
    """L i.i.d. paths: complex-Gaussian gains with variance 1/L (unit average
    power per port), elevation uniform on [0, pi/2], azimuth on [0, 2 pi)."""
    gains = crandn(rng, n_paths) / np.sqrt(n_paths)
    thetas = rng.uniform(0.0, np.pi / 2.0, n_paths)
    phis = rng.uniform(0.0, 2.0 * np.pi, n_paths)
    return PathSet(gains, thetas, phis)


def channel_from_paths(grid: PortGrid, paths: PathSet, ports: Sequence[int]) -> np.ndarray:
    pos = grid.position_array(ports)
    h = np.zeros(len(ports), dtype=complex)
    for g, th, ph in zip(paths.gains, paths.thetas, paths.phis):
        h += g * steering_vector(pos, th, ph, grid.wavelength)
    return h


def sample_channels(
    scenario: SecrecyScenario,
    rng: np.random.Generator,
    active_ports: Optional[Sequence[int]] = None,
) -> ChannelRealization:
    """Draw independent Bob and Eve channels over the given ports (all ports
    by default).  Deterministic for a fixed generator state."""
    ports = tuple(active_ports) if active_ports is not None else tuple(
        range(scenario.grid.n_ports)
    )
    paths_bob = sample_paths(scenario.n_paths, rng)
    paths_eve = sample_paths(scenario.n_paths, rng)
    return ChannelRealization(
        h_bob=channel_from_paths(scenario.grid, paths_bob, ports),
        h_eve=channel_from_paths(scenario.grid, paths_eve, ports),
        ports=ports,
        paths_bob=paths_bob,
        paths_eve=paths_eve,
    )


def secrecy_rate(w, z, h_bob, h_eve, noise_power: float) -> float:
    """Bob's rate minus Eve's rate, in bits/s/Hz, without the [.]+ clamp.

    ``z = None`` means no artificial noise.
    """
    if noise_power <= 0:
        raise ValueError("secrecy_rate: noise power must be positive")
    hb = np.asarray(h_bob, dtype=complex)
    he = np.asarray(h_eve, dtype=complex)
    w = np.asarray(w, dtype=complex)
    ab = abs(np.vdot(hb, w)) ** 2
    ae = abs(np.vdot(he, w)) ** 2
    if z is None:
        cb = ce = 0.0
    else:
        z = np.asarray(z, dtype=complex)
        cb = abs(np.vdot(hb, z)) ** 2
        ce = abs(np.vdot(he, z)) ** 2
    return (
        math.log1p(ab / (cb + noise_power)) - math.log1p(ae / (ce + noise_power))
    ) / LN2


def secrecy_manifold(n: int, alpha: float, total_power: float):
    """Feasible set of the beamformers: one power sphere per vector.

    ``alpha = 1`` puts all power in the signal, so the artificial-noise
    factor disappears and the manifold is a single sphere.
    """
    r_w = math.sqrt(alpha * total_power)
    if alpha >= 1.0:
        return ComplexSphere(n, r_w)
    r_z = math.sqrt((1.0 - alpha) * total_power)
    return Product((ComplexSphere(n, r_w), ComplexSphere(n, r_z)))


def secrecy_cost(h_bob, h_eve, noise_power: float, alpha: float, total_power: float):
    """Negated secrecy rate as a smooth cost on the beamforming manifold.

    Returns ``(manifold, cost)``.  The Wirtinger gradient is analytic; it must
    pass the gradient slope check before any benchmark run trusts it.
    Clamping at zero happens only at reporting time, never here, so the
    objective stays differentiable everywhere.
    """
    if not 0 < alpha <= 1:
        raise ValueError("secrecy_cost: alpha must be in (0, 1]")
    hb = np.ascontiguousarray(h_bob, dtype=complex)
    he = np.ascontiguousarray(h_eve, dtype=complex)
    n = hb.shape[0]
    s2 = float(noise_power)
    manifold = secrecy_manifold(n, alpha, total_power)
    pair = alpha < 1.0

    def value(pt):
        w, z = pt if pair else (pt, None)
        ab = abs(np.vdot(hb, w)) ** 2
        ae = abs(np.vdot(he, w)) ** 2
        cb = abs(np.vdot(hb, z)) ** 2 if pair else 0.0
        ce = abs(np.vdot(he, z)) ** 2 if pair else 0.0
        return -(math.log1p(ab / (cb + s2)) - math.log1p(ae / (ce + s2))) / LN2

    def egrad(pt):
        w, z = pt if pair else (pt, None)
        bw = np.vdot(hb, w)
        ew = np.vdot(he, w)
        ab = abs(bw) ** 2
        ae = abs(ew) ** 2
        if pair:
            bz = np.vdot(hb, z)
            ez = np.vdot(he, z)
            cb = abs(bz) ** 2
            ce = abs(ez) ** 2
        else:
            cb = ce = 0.0
        db = s2 + cb + ab
        de = s2 + ce + ae
        g_w = (-2.0 / LN2) * (hb * (bw / db) - he * (ew / de))
        if not pair:
            return g_w
        g_z = (2.0 / LN2) * (
            hb * (ab * bz / ((s2 + cb) * db)) - he * (ae * ez / ((s2 + ce) * de))
        )
        return (g_w, g_z)

    return manifold, CostFunction(value, egrad)


def mrt_init(h_bob, alpha: float, total_power: float, rng: np.random.Generator):
    """Feasible starting point: maximum-ratio transmission toward Bob, and an
    artificial-noise vector drawn in Bob's orthogonal complement so the
    jamming starts out invisible to the legitimate link."""
    hb = np.asarray(h_bob, dtype=complex)
    nb = np.linalg.norm(hb)
    if nb == 0:
        raise ValueError("mrt_init: Bob's channel is zero")
    n = hb.shape[0]
    w0 = math.sqrt(alpha * total_power) * (hb / nb)
    if alpha >= 1.0:
        return w0
    if n == 1:
        # no orthogonal complement in one dimension; jam at full power anyway
        u = np.exp(1j * rng.uniform(0, 2 * np.pi)) * np.ones(1, dtype=complex)
    else:
        u = None
        for _ in range(10):
            cand = crandn(rng, n)
            cand = cand - hb * (np.vdot(hb, cand) / nb**2)
            cn = np.linalg.norm(cand)
            if cn > 1e-12:
                u = cand / cn
                break
        if u is None:
            raise RuntimeError("mrt_init: failed to draw a perpendicular vector")
    z0 = math.sqrt((1.0 - alpha) * total_power) * u
    return (w0, z0)


def optimize_beamforming(
    scenario: SecrecyScenario,
    ch: ChannelRealization,
    active_ports: Sequence[int],
    rng: Optional[np.random.Generator] = None,
):
    """Run the configured solver on the secrecy cost from the MRT start.

    Returns ``(rate, point, report)`` with the rate clamped at zero; by
    monotone descent the unclamped final rate never falls below the rate of
    the initialization.
    """
    rng = rng or np.random.default_rng(scenario.seed)
    hb, he = ch.restrict(active_ports)
    manifold, cost = secrecy_cost(
        hb, he, scenario.noise_power, scenario.alpha, scenario.total_power
    )
    x0 = mrt_init(hb, scenario.alpha, scenario.total_power, rng)
    report = SOLVERS[scenario.solver](cost, manifold, x0, scenario.solver_cfg)
    rate = max(0.0, -report.final_cost)
    return rate, report.final_point, report


def constant_modulus_chart(h_bob, h_eve, noise_power, alpha, total_power):
    """Phase-only restriction of the secrecy problem.

    Fixes every beamformer entry to equal modulus (full power split evenly
    across antennas) and optimizes phases only.  The feasible set becomes a
    product of unit-modulus circles, small enough for the brute-force grid
    oracle to certify solver output.  Returns ``(manifold, cost)`` over the
    unit-circle variables.
    """
    if not 0 < alpha < 1:
        raise ValueError("constant_modulus_chart: alpha must be in (0, 1)")
    hb = np.asarray(h_bob, dtype=complex)
    n = hb.shape[0]
    c_w = math.sqrt(alpha * total_power / n)
    c_z = math.sqrt((1.0 - alpha) * total_power / n)
    _, cost = secrecy_cost(hb, h_eve, noise_power, alpha, total_power)

    def value(pt):
        u, s = pt
        return cost.value((c_w * u, c_z * s))

    def egrad(pt):
        u, s = pt
        gw, gz = cost.euclidean_grad((c_w * u, c_z * s))
        return (c_w * gw, c_z * gz)

    manifold = Product((ComplexCircle(n), ComplexCircle(n)))
    return manifold, CostFunction(value, egrad)


@dataclass(frozen=True)
class SubsetResult:
    ports: tuple
    rate: float
    iterations: int
    wall_time: float


@dataclass
class PortSelection:
    best_ports: tuple
    best_rate: float
    table: list
    best_report: SolverReport
    best_init_rate: float


MAX_SUBSETS = 10_000


def select_ports(
    scenario: SecrecyScenario,
    ch: ChannelRealization,
    rng: np.random.Generator,
    method: str = "exhaustive",
) -> PortSelection:
    """Pick the antenna-port subset with the best optimized secrecy rate.

    Exhaustive mode enumerates all ``C(n_ports, n_active)`` subsets in
    lexicographic order against a common fading realization, so the
    comparison isolates the positioning gain.  Ties keep the earliest subset.
    Above ``MAX_SUBSETS`` candidates exhaustive search refuses to run;
    ``method='greedy'`` grows the subset one port at a time by best marginal
    rate instead.
    """
    grid = scenario.grid
    if method == "exhaustive":
        n_subsets = math.comb(grid.n_ports, grid.n_active)
        if n_subsets > MAX_SUBSETS:
            raise BudgetError(
                f"{n_subsets} candidate subsets exceed the exhaustive budget "
                f"({MAX_SUBSETS}); rerun with method='greedy'"
            )
        candidates = itertools.combinations(range(grid.n_ports), grid.n_active)
        return _evaluate_subsets(scenario, ch, rng, candidates)
    if method == "greedy":
        return _greedy_select(scenario, ch, rng)
    raise ValueError(f"select_ports: unknown method '{method}'")


def _evaluate_subsets(scenario, ch, rng, candidates) -> PortSelection:
    table = []
    best = None
    best_report = None
    best_init = -np.inf
    for subset in candidates:
        subset = tuple(subset)
        rate, _, report = optimize_beamforming(scenario, ch, subset, rng)
        row = SubsetResult(subset, rate, report.iterations, report.wall_time)
        table.append(row)
        if best is None or rate > best.rate:
            best = row
            best_report = report
            best_init = -report.cost_trace[0]
    return PortSelection(best.ports, best.rate, table, best_report, best_init)


def _greedy_select(scenario, ch, rng) -> PortSelection:
    grid = scenario.grid
    current: list = []
    table = []
    best_report = None
    best_init = -np.inf
    best_rate = 0.0
    for _ in range(grid.n_active):
        stage_best = None
        stage_report = None
        stage_init = -np.inf
        for port in range(grid.n_ports):
            if port in current:
                continue
            subset = tuple(sorted(current + [port]))
            rate, _, report = optimize_beamforming(scenario, ch, subset, rng)
            row = SubsetResult(subset, rate, report.iterations, report.wall_time)
            table.append(row)
            if stage_best is None or rate > stage_best.rate:
                stage_best = row
                stage_report = report
                stage_init = -report.cost_trace[0]
        added = [p for p in stage_best.ports if p not in current]
        current.append(added[0])
        best_rate = stage_best.rate
        best_report = stage_report
        best_init = stage_init
    return PortSelection(tuple(sorted(current)), best_rate, table, best_report, best_init)


@dataclass(frozen=True)
class TrialResult:
    secrecy_rate: float  # clamped at zero
    selected_ports: tuple
    iterations: int
    wall_time: float
    init_rate: float     # unclamped rate of the MRT start
    final_rate: float    # unclamped optimized rate


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    asr: float
    asr_stderr: float
    mean_iters: float
    mean_time_s: float
    trials: int
    seed: int


@dataclass
class SweepResult:
    solver: str
    rows: list
    trials_by_snr: dict


def trial_rng(seed: int, snr_index: int, trial_index: int) -> np.random.Generator:
    """Independent, reproducible stream per (seed, SNR point, trial)."""
    return np.random.default_rng([seed, snr_index, trial_index])


def run_trial(scenario: SecrecyScenario, rng: np.random.Generator) -> TrialResult:
    """One Monte-Carlo trial: draw fading, select ports, optimize."""
    ch = sample_channels(scenario, rng)
    sel = select_ports(scenario, ch, rng)
    report = sel.best_report
    return TrialResult(
        secrecy_rate=sel.best_rate,
        selected_ports=sel.best_ports,
        iterations=report.iterations,
        wall_time=report.wall_time,
        init_rate=sel.best_init_rate,
        final_rate=-report.final_cost,
    )


def monte_carlo_sweep(scenario: SecrecyScenario) -> SweepResult:
    """Average secrecy rate and convergence effort across the SNR grid.

    For each SNR point, ``scenario.trials`` independent fading realizations
    are drawn from per-(snr, trial) generator streams; the transmit power is
    set to ``noise_power * 10^(snr/10)``.  Per-trial clamped rates average
    into the ASR.
    """
    if scenario.trials < 1:
        raise ValueError("monte_carlo_sweep: trials must be >= 1")
    rows = []
    trials_by_snr = {}
    for si, snr_db in enumerate(scenario.snr_grid_db):
        power = scenario.noise_power * 10.0 ** (snr_db / 10.0)
        at_snr = replace(scenario, total_power=power)
        results = [
            run_trial(at_snr, trial_rng(scenario.seed, si, ti))
            for ti in range(scenario.trials)
        ]
        rates = np.array([t.secrecy_rate for t in results])
        iters = np.array([t.iterations for t in results], dtype=float)
        times = np.array([t.wall_time for t in results])
        stderr = (
            float(np.std(rates, ddof=1) / np.sqrt(len(rates)))
            if len(rates) > 1
            else 0.0
        )
        rows.append(SweepRow(
            snr_db=float(snr_db),
            asr=float(np.mean(rates)),
            asr_stderr=stderr,
            mean_iters=float(np.mean(iters)),
            mean_time_s=float(np.mean(times)),
            trials=scenario.trials,
            seed=scenario.seed,
        ))
        trials_by_snr[float(snr_db)] = results
    return SweepResult(scenario.solver, rows, trials_by_snr)
