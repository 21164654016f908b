"""Per-block SINR and throughput for a given cooperation matrix.

SE is estimated by Monte-Carlo over fading, aging, and channel-estimate
draws: partial MMSE precoders are built per draw from the estimates over
each UE's serving set, and the received gains

    gain_ik = sum_m sqrt(p_mi) D_mi conj(h_mk[t]) w_mi

are combined either with the use-and-forget hardening bound

    gamma_k = rho_k^2 |E{gain_kk}|^2 / (sum_i E{|gain_ik|^2} - |E{gain_kk}|^2 + n0)

or per draw (instantaneous SINR of every realization, ergodic-equivalent
output). The default slot is the block end (worst aging); a list of slots
averages the per-slot results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSnapshot, RadioConfig, aging_coefficient, estimate_variance_matrix
from .selection import CooperationMatrix, SelectionConstraints


@dataclass(frozen=True)
class PrecodingContext:
    """Serving sets and co-served interferer sets derived from D.

    serving_sets[k] lists the AP rows with D[m, k] = 1; interferer_sets[k]
    lists the UEs sharing at least one serving AP with k (always including k).
    """

    serving_sets: tuple
    interferer_sets: tuple

    @classmethod
    def from_matrix(cls, coop: CooperationMatrix) -> "PrecodingContext":
        d = coop.d
        share = (d.T.astype(int) @ d.astype(int)) > 0
        serving = []
        interferers = []
        for k in range(d.shape[1]):
            serving.append(np.flatnonzero(d[:, k]))
            s = np.flatnonzero(share[k])
            if k not in s:
                s = np.sort(np.append(s, k))
            interferers.append(s)
        return cls(serving_sets=tuple(serving), interferer_sets=tuple(interferers))


def split_powers(coop: CooperationMatrix, cfg: RadioConfig) -> np.ndarray:
    """Equal per-AP power split: p_mk = budget / W_m on serving links."""
    d = coop.d.astype(float)
    w = d.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(w > 0, cfg.tx_power_w / w, 0.0) * d
    return p


def radiated_powers(coop: CooperationMatrix, cfg: RadioConfig) -> np.ndarray:
    """Effective per-link powers entering the unit-norm precoded gains.

    Each serving link radiates its split budget p_mk on average; since the
    precoding direction w_k is normalized over the G_k serving APs
    (mean |w_mk|^2 = 1/G_k), the per-link scaling is p_mk * G_k so that
    E{p_eff |w_mk|^2} = p_mk. A UE's received power thus grows with its
    serving-set size, as the per-AP budget model implies.
    """
    return split_powers(coop, cfg) * np.maximum(coop.g_k, 1)[None, :]


def draw_estimates(h0: np.ndarray, r_gain: np.ndarray, z: np.ndarray, rng) -> np.ndarray:
    """Channel estimates with exact variance Z, correlated with h0.

    a = min(1, sqrt(Z/R)) reproduces the MMSE orthogonality Cov(est, h0) =
    a*sqrt(Z*R) whenever Z <= R and caps at full correlation otherwise.
    h0 may be (M, K) or batched (N, M, K).
    """
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(r_gain > 0, z / np.where(r_gain > 0, r_gain, 1.0), 0.0)
    a = np.minimum(1.0, np.sqrt(ratio))
    unit = np.where(r_gain > 0, h0 / np.sqrt(np.where(r_gain > 0, r_gain, 1.0)), 0.0)
    eps = (rng.standard_normal(h0.shape) + 1j * rng.standard_normal(h0.shape)) / np.sqrt(2.0)
    return np.sqrt(z) * (a * unit + np.sqrt(np.maximum(0.0, 1.0 - a**2)) * eps)


def precode_pmmse(
    ctx: PrecodingContext, estimates: np.ndarray, noise: float, powers_ue: np.ndarray
) -> np.ndarray:
    """Unit-norm partial MMSE precoders over each UE's serving set.

    w_k solves (sum_{i in S_k} p_i est_i est_i^H |_{M_k} + n0 I) w = est_k and
    is normalized per draw. ``estimates`` is (M, K) or (N, M, K); the return
    matches, with zeros outside the serving sets. When a serving set is larger
    than its interferer set the solve goes through the matrix-inversion-lemma
    form for speed (same result).
    """
    est = np.asarray(estimates)
    squeeze = est.ndim == 2
    if squeeze:
        est = est[None]
    n_draws, m_aps, k_ues = est.shape
    if len(ctx.serving_sets) != k_ues:
        raise ValueError("context and estimate dimensions disagree")
    w = np.zeros_like(est)
    for k in range(k_ues):
        idx = ctx.serving_sets[k]
        if idx.size == 0:
            continue
        s_set = ctx.interferer_sets[k]
        u = est[:, idx[:, None], s_set[None, :]]  # (N, G, S)
        p = powers_ue[s_set]
        b = est[:, idx, k]
        if idx.size <= s_set.size:
            a = np.einsum("ngs,s,nhs->ngh", u, p, u.conj())
            a[:, np.arange(idx.size), np.arange(idx.size)] += noise
            sol = np.linalg.solve(a, b[..., None])[..., 0]
        else:
            # Woodbury: (n0 I + U P U^H)^-1 b
            uhb = np.einsum("ngs,ng->ns", u.conj(), b)
            inner = np.einsum("ngs,ngt->nst", u.conj(), u)
            inner += np.diag(noise / p)[None]
            mid = np.linalg.solve(inner, uhb[..., None])[..., 0]
            sol = (b - np.einsum("ngs,ns->ng", u, mid)) / noise
        norm = np.linalg.norm(sol, axis=1, keepdims=True)
        sol = np.where(norm > 0, sol / np.where(norm > 0, norm, 1.0), 0.0)
        w[:, idx, k] = sol
    return w[0] if squeeze else w


def instant_sinr(
    ctx: PrecodingContext,
    h: np.ndarray,
    precoders: np.ndarray,
    powers: np.ndarray,
    rho,
    noise: float,
    estimator: str = "hardening",
) -> np.ndarray:
    """SINR per UE from Monte-Carlo received-gain draws.

    h and precoders are (N, M, K) draws; powers the per-link (M, K) split;
    rho the aging correlation (scalar or per-UE).

    "hardening" combines empirical means first (use-and-forget bound: the
    desired-signal square is subtracted from the total received moment to
    form the interference). "per-draw" evaluates the instantaneous SINR of
    every draw, conditioning the signal on the current realization, and
    returns the ergodic-equivalent SINR gamma with log2(1 + gamma) equal to
    the mean per-draw log2(1 + gamma_n); single-AP links are then not
    penalized by the missing channel hardening.
    """
    h = np.asarray(h)
    wmat = np.asarray(precoders)
    if h.ndim == 2:
        h = h[None]
    if wmat.ndim == 2:
        wmat = wmat[None]
    sw = np.sqrt(powers)[None] * wmat
    gains = np.einsum("nmk,nmi->nik", h.conj(), sw)
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    if rho.size == 1:
        rho = np.full(h.shape[2], rho[0])
    if estimator == "hardening":
        mu = gains.mean(axis=0)
        m2 = (np.abs(gains) ** 2).mean(axis=0)
        desired = np.abs(np.diagonal(mu)) ** 2
        interference = m2.sum(axis=0) - desired
        return rho**2 * desired / (interference + noise)
    if estimator == "per-draw":
        p2 = np.abs(gains) ** 2  # (N, i, k)
        k_idx = np.arange(h.shape[2])
        desired = p2[:, k_idx, k_idx]
        interference = p2.sum(axis=1) - desired
        gamma_n = rho[None, :] ** 2 * desired / (interference + noise)
        return np.expm1(np.log1p(gamma_n).mean(axis=0))
    raise ValueError(f"unknown SINR estimator {estimator!r}")


def spectral_efficiency(gamma, cfg: RadioConfig):
    """Per-UE SE (bit/s/Hz) and throughput with the pilot-overhead factor."""
    gamma = np.asarray(gamma, dtype=float)
    overhead = (cfg.block_len_slots - cfg.pilot_len_slots) / cfg.block_len_slots
    se = overhead * np.log2(1.0 + gamma)
    return se, cfg.bandwidth_hz * se


def evaluate_block(
    snap: ChannelSnapshot,
    coop: CooperationMatrix,
    pilots: np.ndarray,
    speeds,
    cfg: RadioConfig,
    n_mc: int = 500,
    seed=0,
    slots=None,
    estimator: str = "hardening",
):
    """Monte-Carlo SE for one block; returns (gamma, se, rate) per UE.

    Draws n_mc joint realizations of the block-start channel, its aged value
    at each requested slot, and the channel estimates; slot results are
    averaged (default: single worst-aging slot at the block end).
    ``estimator`` selects the SINR combination rule of instant_sinr.
    """
    if slots is None:
        slots = [cfg.block_len_slots]
    speeds = np.broadcast_to(np.asarray(speeds, dtype=float), (snap.n_ues,))
    rng = np.random.default_rng(seed)
    ctx = PrecodingContext.from_matrix(coop)
    powers = split_powers(coop, cfg)
    powers_eff = radiated_powers(coop, cfg)
    r = snap.channel_gain()
    shape = (n_mc, snap.n_aps, snap.n_ues)
    h0 = np.sqrt(r / 2.0)[None] * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    powers_ue = np.full(snap.n_ues, cfg.tx_power_w)

    gamma_acc = np.zeros(snap.n_ues)
    se_acc = np.zeros(snap.n_ues)
    rate_acc = np.zeros(snap.n_ues)
    for t in slots:
        z = estimate_variance_matrix(snap, pilots, t, speeds, cfg, powers)
        est = draw_estimates(h0, r[None], z[None], rng)
        w = precode_pmmse(ctx, est, snap.noise_power, powers_ue)
        rho = np.atleast_1d(aging_coefficient(t, speeds, cfg))
        g = np.sqrt(r / 2.0)[None] * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        h_t = rho[None, None, :] * h0 + np.sqrt(np.maximum(0.0, 1.0 - rho**2))[None, None, :] * g
        gamma = instant_sinr(ctx, h_t, w, powers_eff, rho, snap.noise_power, estimator=estimator)
        se, rate = spectral_efficiency(gamma, cfg)
        gamma_acc += gamma
        se_acc += se
        rate_acc += rate
    n_slots = len(slots)
    return gamma_acc / n_slots, se_acc / n_slots, rate_acc / n_slots


def objective_values(coop: CooperationMatrix, rates) -> tuple[float, float, int, float]:
    """(sum rate, Jain index over rates, total connections, PF objective).

    The proportional-fairness objective floors rates at 1 bit/s before the
    log to keep zero-rate UEs finite.
    """
    rates = np.asarray(rates, dtype=float)
    sum_rate = float(rates.sum())
    phi = _jain(rates)
    pf = float(np.log(np.maximum(rates, 1.0)).sum())
    return sum_rate, phi, coop.total_connections, pf


def _jain(values: np.ndarray) -> float:
    ssq = float(np.dot(values, values))
    if ssq == 0.0:
        return 1.0
    return float(values.sum()) ** 2 / (values.size * ssq)


@dataclass(frozen=True)
class ConstraintReport:
    """Counts of cap violations for one cooperation matrix."""

    w_violations: int
    g_violations: int
    nonbinary: int

    @property
    def ok(self) -> bool:
        return self.w_violations == 0 and self.g_violations == 0 and self.nonbinary == 0


def check_constraints(coop: CooperationMatrix, constraints: SelectionConstraints) -> ConstraintReport:
    """Count APs over the load cap and UEs over the serving-set cap."""
    d = np.asarray(coop.d)
    return ConstraintReport(
        w_violations=int(np.count_nonzero(d.sum(axis=1) > constraints.tau_p)),
        g_violations=int(np.count_nonzero(d.sum(axis=0) > constraints.g_max)),
        nonbinary=int(np.count_nonzero((d != 0) & (d != 1))),
    )


@dataclass
class MetricsReport:
    """Per-run metrics: per-block SE plus the aggregate objective values."""

    algorithm: str
    seed: int
    config_hash: str
    n_mc: int
    se_per_block: np.ndarray  # (K, T)
    g_per_block: np.ndarray  # (K, T)
    w_per_block: np.ndarray  # (M, T)
    rate_per_ue: np.ndarray  # (K,) mean over blocks
    sum_rate: float
    jain: float
    pf_objective: float
    mean_connections: float
    w_violation_blocks: int
    g_violation_blocks: int

    @property
    def n_ues(self) -> int:
        return self.se_per_block.shape[0]

    @property
    def n_blocks(self) -> int:
        return self.se_per_block.shape[1]

    @property
    def mean_g_per_ue(self) -> np.ndarray:
        return self.g_per_block.mean(axis=1)


def build_report(
    algorithm: str,
    seed: int,
    config_hash: str,
    n_mc: int,
    se_blocks: np.ndarray,
    rate_blocks: np.ndarray,
    g_blocks: np.ndarray,
    w_blocks: np.ndarray,
    constraints: SelectionConstraints,
) -> MetricsReport:
    """Aggregate per-block results into a MetricsReport."""
    rate_per_ue = rate_blocks.mean(axis=1)
    sum_rate = float(rate_per_ue.sum())
    pf = float(np.log(np.maximum(rate_per_ue, 1.0)).sum())
    w_bad = int(np.count_nonzero((w_blocks > constraints.tau_p).any(axis=0)))
    g_bad = int(np.count_nonzero((g_blocks > constraints.g_max).any(axis=0)))
    return MetricsReport(
        algorithm=algorithm,
        seed=seed,
        config_hash=config_hash,
        n_mc=n_mc,
        se_per_block=se_blocks,
        g_per_block=g_blocks,
        w_per_block=w_blocks,
        rate_per_ue=rate_per_ue,
        sum_rate=sum_rate,
        jain=_jain(rate_per_ue),
        pf_objective=pf,
        mean_connections=float(g_blocks.sum(axis=0).mean()),
        w_violation_blocks=w_bad,
        g_violation_blocks=g_bad,
    )


def export_cdf(report: MetricsReport) -> tuple[np.ndarray, np.ndarray]:
    """Plot-ready empirical CDF of per-UE-per-block SE.

    Returns (sorted values, ordinates i/n for i = 1..n).
    """
    values = np.sort(report.se_per_block.reshape(-1))
    n = values.size
    return values, np.arange(1, n + 1) / n


def write_report(report: MetricsReport, out_dir) -> None:
    """Serialize the report: metadata header, per-UE rows, aggregate rows,
    plus the raw per-block SE file for CDF plotting."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.txt"), "w") as f:
        f.write("# run metadata\n")
        f.write(f"algorithm = {report.algorithm}\n")
        f.write(f"seed = {report.seed}\n")
        f.write(f"config_hash = {report.config_hash}\n")
        f.write(f"blocks = {report.n_blocks}\n")
        f.write(f"n_mc = {report.n_mc}\n")
        f.write(f"pf_rate_floor_bps = 1\n")
        f.write("# per-ue\n")
        f.write("ue_id,mean_se,p95_se,mean_G\n")
        mean_se = report.se_per_block.mean(axis=1)
        p95_se = np.percentile(report.se_per_block, 95, axis=1)
        mean_g = report.mean_g_per_ue
        for k in range(report.n_ues):
            f.write(f"{k},{mean_se[k]:.10g},{p95_se[k]:.10g},{mean_g[k]:.10g}\n")
        f.write("# aggregate\n")
        f.write(f"sum_rate_bps = {report.sum_rate:.10g}\n")
        f.write(f"jain = {report.jain:.10g}\n")
        f.write(f"pf_objective = {report.pf_objective:.10g}\n")
        f.write(f"mean_connections = {report.mean_connections:.10g}\n")
        f.write(f"w_violation_blocks = {report.w_violation_blocks}\n")
        f.write(f"g_violation_blocks = {report.g_violation_blocks}\n")
    with open(os.path.join(out_dir, "se_blocks.csv"), "w") as f:
        f.write("block,ue_id,se,g\n")
        for t in range(report.n_blocks):
            for k in range(report.n_ues):
                f.write(f"{t},{k},{report.se_per_block[k, t]:.10g},{int(report.g_per_block[k, t])}\n")
