"""Diagnostic quantities: tracking errors, global performance, verdicts, bounds."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .attacks import AttackSpec, classify_imp, signal_series
from .dynamics import LtiModel
from .graph import DirectedGraph, GraphSpectrum

GROWTH_WINDOW_FRACTION = 0.2
GROWTH_REL_TOL = 0.05


def tracking_error(x, spectrum: GraphSpectrum) -> np.ndarray:
    """Local neighborhood tracking error eps_i = (1+h_i)^-1 sum_j a_ij (x_j - x_i).

    ``x`` is the global state, flat or stacked (N, n); the result is (N, n).
    Passing corrupted measurements gives the eps_bar variant.
    """
    n_agents = spectrum.normalized_laplacian.shape[0]
    X = np.asarray(x, dtype=float).reshape(n_agents, -1)
    return -spectrum.normalized_laplacian @ X


def global_performance(x, graph: DirectedGraph) -> float:
    """Gamma = sum_i sum_{j in N_i} ||x_i - x_j||^2 over ordered neighbor pairs.

    Bidirectional edges contribute twice, matching the double sum convention.
    """
    X = np.asarray(x, dtype=float).reshape(graph.n_agents, -1)
    diffs = X[:, None, :] - X[None, :, :]
    sq = (diffs ** 2).sum(axis=2)
    return float(sq[graph.adjacency > 0].sum())


@dataclass(frozen=True)
class MetricsFrame:
    """Per-step diagnostics recorded into the trace."""

    k: int
    eps: np.ndarray
    eps_bar: np.ndarray
    gamma: float
    consensus_err: np.ndarray  # per-agent inf-norm of x_i - x_hat_i
    divergence_flag: bool


def deviation_bound(model: LtiModel, spectrum: GraphSpectrum, ctrl,
                    n_attacked: int, attack_bound: float) -> float | None:
    """Attack-induced deviation term N_f ||B|| b_f / |lambda_min(A_c)|.

    Returns None (undefined) when A_c has a near-zero eigenvalue, and 0.0 when
    no agent is attacked.
    """
    if n_attacked == 0:
        return 0.0
    from .dynamics import assemble_closed_loop

    closed = assemble_closed_loop(model, spectrum, ctrl)
    lam_min = float(np.abs(closed.eigenvalues).min())
    if lam_min < 1e-9:
        return None
    b_norm = float(np.linalg.norm(model.B, ord=2))
    return n_attacked * b_norm * attack_bound / lam_min


class Verdict(enum.Enum):
    CONSENSUS = "CONSENSUS"
    BOUNDED_DEVIATION = "BOUNDED_DEVIATION"
    DESTABILIZE = "DESTABILIZE"


def _signal_is_nonzero(spec: AttackSpec, probe: int = 16) -> bool:
    series = signal_series(spec, spec.start_step + probe)
    return bool(np.abs(series).max() > 1e-12)


def destabilization_verdict(specs, model: LtiModel, spectrum: GraphSpectrum) -> Verdict:
    """Predicts DESTABILIZE iff some IMP-classified attack excites a root node.

    Sensor attacks enter the network through the Laplacian, whose left kernel
    is exactly the root eigenvector, so their projection S(k) vanishes
    identically; only actuator attacks can be root-directed.
    """
    specs = [s for s in specs if _signal_is_nonzero(s)]
    if not specs:
        return Verdict.CONSENSUS
    for spec in specs:
        if spec.channel != "actuator":
            continue
        if spec.agent in spectrum.root_set and classify_imp(spec, model).is_imp:
            return Verdict.DESTABILIZE
    return Verdict.BOUNDED_DEVIATION


@dataclass(frozen=True)
class GrowthAnalysis:
    """Empirical divergence decision from the ||x(k)||_inf series."""

    diverged: bool
    first_crossing: int | None
    growth_detected: bool
    tail_slope: float


def analyze_growth(inf_norms: np.ndarray, magnitude_threshold: float = 1e9) -> GrowthAnalysis:
    """Magnitude guard plus sustained-growth detection on windowed maxima.

    A run is divergent when the state norm crosses the magnitude threshold
    (or went non-finite upstream), or when the last two 20% windows show a
    sustained relative increase: a linear ramp keeps growing window over
    window, while converging or steadily oscillating runs do not.
    """
    s = np.asarray(inf_norms, dtype=float)
    crossing = None
    over = np.nonzero(~np.isfinite(s) | (s > magnitude_threshold))[0]
    if over.size:
        crossing = int(over[0])
    growth = False
    slope = 0.0
    T = s.size
    w = max(2, int(GROWTH_WINDOW_FRACTION * T))
    if T >= 10:
        w1 = s[T - 2 * w:T - w]
        w2 = s[T - w:]
        m1 = float(w1[np.isfinite(w1)].max(initial=0.0))
        m2 = float(w2[np.isfinite(w2)].max(initial=0.0))
        growth = (m2 - m1) > GROWTH_REL_TOL * max(m1, 1.0)
        ks = np.arange(T - T // 2, T, dtype=float)
        tail = s[T - T // 2:]
        finite = np.isfinite(tail)
        if finite.sum() >= 2:
            slope = float(np.polyfit(ks[finite], tail[finite], 1)[0])
    return GrowthAnalysis(
        diverged=bool(crossing is not None or growth),
        first_crossing=crossing,
        growth_detected=growth,
        tail_slope=slope,
    )


@dataclass(frozen=True)
class HinfBypassReport:
    """Dissociation between local tracking error and global disagreement.

    An attacker whose signal leaves every intact agent's tracking error at
    zero while the network disagrees defeats any scheme that attenuates the
    tracking error, which is what the L2-gain condition weighs.
    """

    intact_agents: tuple
    eps_energy_intact: float
    eps_energy_total: float
    attack_energy: float
    tail_eps_intact: float
    tail_gamma: float
    bypassed: bool


def hinf_bypass_report(trace, eps_floor: float = 1e-6, gamma_floor: float = 0.1) -> HinfBypassReport:
    """Energies and tail levels from a completed trace.

    Intact agents are those whose effective injection f_i stayed identically
    zero over the run.
    """
    f = trace.f  # (S, N, m)
    intact = tuple(int(i) for i in range(f.shape[1])
                   if np.abs(f[:, i, :]).max(initial=0.0) <= 1e-12)
    eps = trace.eps  # (S, N, n)
    energy_total = float((eps ** 2).sum())
    energy_intact = float((eps[:, list(intact), :] ** 2).sum()) if intact else 0.0
    attack_energy = float((f ** 2).sum())
    tail = trace.tail_slice()
    if intact:
        tail_eps = float(np.abs(eps[tail][:, list(intact), :]).max(initial=0.0))
    else:
        tail_eps = 0.0
    tail_gamma = float(trace.gamma[tail].max(initial=0.0))
    return HinfBypassReport(
        intact_agents=intact,
        eps_energy_intact=energy_intact,
        eps_energy_total=energy_total,
        attack_energy=attack_energy,
        tail_eps_intact=tail_eps,
        tail_gamma=tail_gamma,
        bypassed=bool(tail_eps < eps_floor and tail_gamma > gamma_floor),
    )
