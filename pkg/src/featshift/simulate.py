"""Attack-scenario generation.

Builds sensor-network scenarios: a dependence graph, a precision matrix
Omega = I + w * A with the edge weight w calibrated so the mutual
information between a chosen center sensor and the rest hits a target,
Gaussian-copula sampling with arcsine (Beta(1/2,1/2)) marginals, and the
marginal-permutation attack that preserves every attacked column's marginal
while severing its dependence on the untouched columns.

MI is computed on the latent Gaussian correlation; the copula transform is
invertible and leaves it unchanged, so the declared difficulty applies to
the sampled data as well.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.linalg import lapack
from scipy.special import ndtr

from .errors import (
    InvalidArgumentError,
    InvalidDataError,
    UnreachableTargetError,
    WeightTooLargeError,
)
from .rng import as_rng, spawn_rng

PD_EIG_FLOOR = 1e-10
MI_TARGETS = (0.2, 0.1, 0.05, 0.01)
DEFAULT_CENTER = 12


class GraphKind(str, enum.Enum):
    COMPLETE = "complete"
    CYCLE = "cycle"
    GRID = "grid"
    RANDOM = "random"
    # path topology; the benchmark cells use CYCLE, this is an extra
    CHAIN = "chain"


@dataclass(frozen=True)
class GraphSpec:
    kind: GraphKind
    d: int
    edges: tuple[tuple[int, int], ...]
    edge_prob: float | None = None

    def __post_init__(self):
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise InvalidArgumentError(f"self-loop at node {i}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise InvalidArgumentError(f"duplicate edge {key}")
            if not (0 <= i < self.d and 0 <= j < self.d):
                raise InvalidArgumentError(f"edge {(i, j)} outside 0..{self.d - 1}")
            seen.add(key)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.d, self.d))
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1.0
        return A


def build_graph(
    kind: GraphKind | str,
    d: int,
    edge_prob: float = 0.1,
    rng: np.random.Generator | None = None,
) -> GraphSpec:
    """Construct a dependence graph of the requested topology.

    RANDOM draws an Erdos-Renyi graph and resamples until it has at least one
    edge, so the precision construction admits a nonzero weight.
    """
    kind = GraphKind(kind)
    if d < 2:
        raise InvalidArgumentError(f"need d >= 2 nodes, got {d}")
    if kind is GraphKind.COMPLETE:
        edges = [(i, j) for i in range(d) for j in range(i + 1, d)]
    elif kind is GraphKind.CYCLE:
        edges = [(i, (i + 1) % d) for i in range(d)]
        edges = [(min(i, j), max(i, j)) for i, j in edges]
        if d == 2:
            edges = [(0, 1)]
    elif kind is GraphKind.CHAIN:
        edges = [(i, i + 1) for i in range(d - 1)]
    elif kind is GraphKind.GRID:
        s = math.isqrt(d)
        if s * s != d:
            raise InvalidArgumentError(f"GRID requires a perfect-square node count, got {d}")
        edges = []
        for r in range(s):
            for c in range(s):
                v = r * s + c
                if c + 1 < s:
                    edges.append((v, v + 1))
                if r + 1 < s:
                    edges.append((v, v + s))
    else:
        if not 0.0 < edge_prob < 1.0:
            raise InvalidArgumentError(f"edge_prob must lie in (0,1), got {edge_prob}")
        rng = as_rng(rng)
        pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
        while True:
            mask = rng.random(len(pairs)) < edge_prob
            edges = [p for p, m in zip(pairs, mask) if m]
            if edges:
                break
        return GraphSpec(kind=kind, d=d, edges=tuple(edges), edge_prob=edge_prob)
    return GraphSpec(kind=kind, d=d, edges=tuple(sorted(edges)))


def precision_from_graph(g: GraphSpec, weight: float) -> np.ndarray:
    """Omega = I + weight * A(g), validated positive definite.

    The PD margin is checked by factoring Omega - floor*I, so a weight whose
    smallest eigenvalue dips to the floor (1e-10) is rejected; the error
    carries the 1-based leading minor where the factorization broke down.
    """
    omega = np.eye(g.d) + weight * g.adjacency()
    _, info = lapack.dpotrf(omega - PD_EIG_FLOOR * np.eye(g.d), lower=1)
    if info != 0:
        raise WeightTooLargeError(weight, int(info))
    return omega


def correlation_from_precision(omega: np.ndarray) -> np.ndarray:
    """Invert the precision matrix and renormalize to unit diagonal."""
    c, low = sla.cho_factor(omega, lower=True)
    sigma = sla.cho_solve((c, low), np.eye(omega.shape[0]))
    sigma = 0.5 * (sigma + sigma.T)
    inv_sd = 1.0 / np.sqrt(np.diag(sigma))
    corr = sigma * inv_sd[:, None] * inv_sd[None, :]
    np.fill_diagonal(corr, 1.0)
    return corr


def _chol_logdet(mat: np.ndarray) -> float:
    c, low = sla.cho_factor(mat, lower=True)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def gaussian_mi(corr: np.ndarray, A) -> float:
    """Mutual information I(x_A ; x_rest) of a Gaussian, in nats.

    MI = 0.5 * log( det Sigma_AA * det Sigma_rest / det Sigma ), computed by
    Cholesky log-determinants.
    """
    corr = np.asarray(corr, dtype=float)
    d = corr.shape[0]
    A = sorted(set(int(a) for a in A))
    if not A or len(A) >= d:
        raise InvalidArgumentError("index set must be a nonempty proper subset")
    if any(a < 0 or a >= d for a in A):
        raise InvalidArgumentError(f"index set {A} outside 0..{d - 1}")
    rest = [j for j in range(d) if j not in A]
    mi = 0.5 * (
        _chol_logdet(corr[np.ix_(A, A)])
        + _chol_logdet(corr[np.ix_(rest, rest)])
        - _chol_logdet(corr)
    )
    return max(mi, 0.0)


def max_stable_weight(g: GraphSpec) -> float:
    """Largest positive weight keeping I + w*A positive definite."""
    lam_min = float(np.linalg.eigvalsh(g.adjacency())[0])
    if lam_min >= 0.0:
        raise InvalidArgumentError("graph has no edges; any weight is vacuous")
    return -1.0 / lam_min


def calibrate_edge_weight(
    g: GraphSpec,
    center: int,
    target_mi: float,
    tol: float = 1e-4,
    max_iter: int = 200,
) -> float:
    """Bisect the edge weight until MI(center ; rest) hits ``target_mi``.

    Searches w in (0, 0.999 * PD-limit]. MI is continuous and increasing from
    f(0) = 0 on this bracket; if even the bracket top cannot reach the target
    (weak topology, or the center disconnected in a RANDOM draw), raises with
    the maximum attainable value so callers can resample.
    """
    if target_mi <= 0.0:
        raise InvalidArgumentError(f"target MI must be > 0, got {target_mi}")
    if not g.edges:
        raise UnreachableTargetError(target_mi, 0.0)

    def f(w: float) -> float:
        return gaussian_mi(correlation_from_precision(precision_from_graph(g, w)), [center])

    hi = 0.999 * max_stable_weight(g)
    f_hi = f(hi)
    if f_hi < target_mi - tol:
        raise UnreachableTargetError(target_mi, f_hi)
    lo = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = f(mid)
        if abs(val - target_mi) <= tol:
            return mid
        if val < target_mi:
            lo = mid
        else:
            hi = mid
    raise UnreachableTargetError(target_mi, f(0.5 * (lo + hi)))


# ---------------------------------------------------------------------------
# Copula sampling


def arcsine_quantile(u):
    """Quantile of Beta(1/2, 1/2): sin^2(pi*u/2), exact closed form."""
    u = np.asarray(u, dtype=float)
    if ((u < 0.0) | (u > 1.0)).any():
        raise InvalidArgumentError("arcsine quantile requires u in [0, 1]")
    out = np.square(np.sin(0.5 * np.pi * u))
    return float(out) if out.ndim == 0 else out


def arcsine_cdf(x):
    """CDF of Beta(1/2, 1/2): (2/pi) * asin(sqrt(x))."""
    x = np.asarray(x, dtype=float)
    if ((x < 0.0) | (x > 1.0)).any():
        raise InvalidArgumentError("arcsine cdf requires x in [0, 1]")
    out = (2.0 / np.pi) * np.arcsin(np.sqrt(x))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CopulaSpec:
    """Gaussian copula with arcsine marginals on the unit interval."""

    correlation: np.ndarray
    edge_weight: float = 0.0

    def __post_init__(self):
        corr = np.asarray(self.correlation, dtype=float)
        if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
            raise InvalidArgumentError(f"correlation must be square, got {corr.shape}")
        if not np.all(np.diag(corr) == 1.0):
            raise InvalidDataError("correlation diagonal must be exactly 1")
        _, info = lapack.dpotrf(corr, lower=1)
        if info != 0:
            raise InvalidDataError(f"correlation not positive definite (minor {int(info)})")
        object.__setattr__(self, "correlation", corr)

    @property
    def dim(self) -> int:
        return self.correlation.shape[0]


def sample_copula(spec: CopulaSpec, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw n rows: z ~ N(0, corr), u = Phi(z), x = arcsine_quantile(u)."""
    if n < 1:
        raise InvalidArgumentError(f"need n >= 1 samples, got {n}")
    rng = as_rng(rng)
    chol = np.linalg.cholesky(spec.correlation)
    z = rng.standard_normal((n, spec.dim)) @ chol.T
    return arcsine_quantile(ndtr(z))


@dataclass(frozen=True)
class AttackPlan:
    """Ground truth of a marginal attack: which columns, which permutation."""

    attacked: tuple[int, ...]
    permutation: np.ndarray
    onset: int | None = None

    def __post_init__(self):
        if len(self.attacked) == 0:
            raise InvalidArgumentError("attack must target at least one feature")
        perm = np.asarray(self.permutation)
        if not np.array_equal(np.sort(perm), np.arange(perm.shape[0])):
            raise InvalidArgumentError("permutation must be a bijection on row indices")


def marginal_attack(
    Y: np.ndarray, A, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, AttackPlan]:
    """Permute the rows of the attacked columns with one shared permutation.

    Every attacked column keeps its value multiset exactly (the marginal-KS
    blind spot); the joint of the attacked columns among themselves is also
    preserved, while their dependence on the remaining columns is severed.
    """
    Y = np.asarray(Y, dtype=float)
    attacked = tuple(sorted(set(int(a) for a in A)))
    if not attacked:
        raise InvalidArgumentError("attack must target at least one feature")
    if attacked[0] < 0 or attacked[-1] >= Y.shape[1]:
        raise InvalidArgumentError(f"attacked set {attacked} outside 0..{Y.shape[1] - 1}")
    rng = as_rng(rng)
    perm = rng.permutation(Y.shape[0])
    out = Y.copy()
    out[:, attacked] = Y[np.ix_(perm, attacked)]
    return out, AttackPlan(attacked=attacked, permutation=perm)


# ---------------------------------------------------------------------------
# Scenario assembly and replay files


@dataclass(frozen=True)
class Scenario:
    """Replayable description of one calibrated attack scenario."""

    graph: GraphSpec
    edge_weight: float
    mi_target: float
    center: int
    attacked: tuple[int, ...]
    seed: int

    def copula(self) -> CopulaSpec:
        corr = correlation_from_precision(precision_from_graph(self.graph, self.edge_weight))
        return CopulaSpec(correlation=corr, edge_weight=self.edge_weight)


def make_scenario(
    kind: GraphKind | str,
    d: int = 25,
    mi_target: float = 0.2,
    attacked=(DEFAULT_CENTER,),
    center: int = DEFAULT_CENTER,
    edge_prob: float = 0.1,
    seed: int = 0,
    tol: float = 1e-4,
    max_graph_tries: int = 64,
) -> Scenario:
    """Build a graph, calibrate its edge weight to the MI target, freeze it.

    RANDOM graphs that cannot reach the target (center isolated or the
    topology too weak) are resampled up to ``max_graph_tries`` times from the
    same seeded stream; other topologies propagate the unreachable error.
    """
    kind = GraphKind(kind)
    rng = spawn_rng(seed, "scenario-graph")
    last_exc = None
    for _ in range(max_graph_tries):
        graph = build_graph(kind, d, edge_prob=edge_prob, rng=rng)
        try:
            weight = calibrate_edge_weight(graph, center, mi_target, tol=tol)
        except UnreachableTargetError as exc:
            last_exc = exc
            if kind is GraphKind.RANDOM:
                continue
            raise
        return Scenario(
            graph=graph,
            edge_weight=weight,
            mi_target=mi_target,
            center=center,
            attacked=tuple(sorted(int(a) for a in attacked)),
            seed=seed,
        )
    raise last_exc


def scenario_to_json(scenario: Scenario) -> str:
    """Serialize everything needed to replay the scenario bit for bit."""
    payload = {
        "graph": {
            "kind": scenario.graph.kind.value,
            "d": scenario.graph.d,
            "edge_prob": scenario.graph.edge_prob,
            "edges": [list(e) for e in scenario.graph.edges],
        },
        "edge_weight": scenario.edge_weight,
        "mi_target": scenario.mi_target,
        "center": scenario.center,
        "attacked": list(scenario.attacked),
        "seed": scenario.seed,
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def scenario_from_json(text: str) -> Scenario:
    payload = json.loads(text)
    g = payload["graph"]
    graph = GraphSpec(
        kind=GraphKind(g["kind"]),
        d=int(g["d"]),
        edges=tuple((int(i), int(j)) for i, j in g["edges"]),
        edge_prob=g.get("edge_prob"),
    )
    return Scenario(
        graph=graph,
        edge_weight=float(payload["edge_weight"]),
        mi_target=float(payload["mi_target"]),
        center=int(payload["center"]),
        attacked=tuple(int(a) for a in payload["attacked"]),
        seed=int(payload["seed"]),
    )
