"""Serving-set selection: cooperation matrix, selection algorithms, MDP env.

All algorithms are pure functions of a channel snapshot and the selection
constraints; candidate APs are those at or above the outage threshold beta0,
and ties in beta always break toward the lowest AP index. UE iteration order
is ascending UE id, which matters for the eviction-based and fairness-driven
algorithms (documented order dependence).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .channel import ChannelSnapshot

#: sentinel action: end the current UE's round without connecting an AP
SKIP = -1


@dataclass(frozen=True)
class CooperationMatrix:
    """Binary M x K serving matrix; d[m, k] = 1 iff AP m serves UE k."""

    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d)
        if d.ndim != 2:
            raise ValueError("d must be an M x K matrix")
        if not np.all((d == 0) | (d == 1)):
            raise ValueError("d entries must be 0/1")
        d = d.astype(np.int8)
        object.__setattr__(self, "d", d)
        d.setflags(write=False)

    @property
    def g_k(self) -> np.ndarray:
        """Serving-set size per UE."""
        return self.d.sum(axis=0)

    @property
    def w_m(self) -> np.ndarray:
        """Served-UE count per AP."""
        return self.d.sum(axis=1)

    @property
    def total_connections(self) -> int:
        return int(self.d.sum())


@dataclass(frozen=True)
class SelectionConstraints:
    """Caps and thresholds shared by the selection algorithms.

    delta is the serving-set SNR fraction in (0, 1]; beta0 the linear outage
    SNR below which an AP is never a candidate; e_best the number of anchor
    APs for cluster-based selection.
    """

    g_max: int
    tau_p: int = 10
    delta: float = 0.95
    e_best: int = 1
    beta0: float = 0.01
    allow_tau_p_equality: bool = False

    def __post_init__(self):
        if not (0.0 < self.delta <= 1.0):
            raise ValueError("delta must lie in (0, 1]")
        if self.g_max < 1 or self.tau_p < 0 or self.e_best < 1:
            raise ValueError("g_max and e_best must be >= 1, tau_p >= 0")


def candidate_beta(snapshot: ChannelSnapshot, constraints: SelectionConstraints) -> np.ndarray:
    """beta with below-outage entries zeroed; all algorithms select from this."""
    return np.where(snapshot.beta >= constraints.beta0, snapshot.beta, 0.0)


def simplified_sinr(d_col: np.ndarray, beta_col: np.ndarray) -> float:
    """Selection-time SINR proxy: served SNR over unserved SNR plus one."""
    d_col = np.asarray(d_col, dtype=float)
    beta_col = np.asarray(beta_col, dtype=float)
    served = float(np.dot(d_col, beta_col))
    total = float(beta_col.sum())
    return served / (total - served + 1.0)


def simplified_sinr_all(d: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Vectorized simplified SINR per UE column."""
    served = np.einsum("mk,mk->k", np.asarray(d, dtype=float), beta)
    total = beta.sum(axis=0)
    return served / (total - served + 1.0)


def jain_index(values) -> float:
    """Jain's fairness index (sum v)^2 / (K sum v^2); all-zero input -> 1."""
    v = np.asarray(values, dtype=float)
    if v.size < 1:
        raise ValueError("need at least one value")
    ssq = float(np.dot(v, v))
    if ssq == 0.0:
        return 1.0
    return float(v.sum()) ** 2 / (v.size * ssq)


def _descending_order(beta_col: np.ndarray) -> np.ndarray:
    # stable sort on -beta keeps the lowest AP index first among ties
    return np.argsort(-beta_col, kind="stable")


def select_unifsrv_heu(
    snapshot: ChannelSnapshot, constraints: SelectionConstraints
) -> CooperationMatrix:
    """Fairness-threshold greedy serving-set growth.

    Every UE first connects its best candidate AP that still has spare load
    (the guard keeps the load cap hard even when many UEs share one best
    AP). Then, walking the per-UE AP ranks m = 2..M, a threshold alpha is
    set at the ascending-sorted simplified SINR of index ceil((1 - Phi) * K)
    (clamped to [1, K], Phi the current fairness index); only UEs strictly
    below alpha may add their rank-m AP, subject to the AP load cap tau_p,
    the serving-set cap g_max, and the delta SNR-fraction stop rule.
    Returned sets always satisfy both caps; the load check uses strict <
    unless allow_tau_p_equality is set.
    """
    beta = candidate_beta(snapshot, constraints)
    m_aps, k_ues = beta.shape
    order = np.stack([_descending_order(beta[:, k]) for k in range(k_ues)], axis=1)
    d = np.zeros((m_aps, k_ues), dtype=np.int8)
    total = beta.sum(axis=0)

    def load_ok(ap: int) -> bool:
        load = int(d[ap, :].sum())
        if constraints.allow_tau_p_equality:
            return load <= constraints.tau_p
        return load < constraints.tau_p

    # initial connection: best candidate AP with spare load, so the load cap
    # holds even when many UEs share one best AP
    for k in range(k_ues):
        for ap in order[:, k]:
            if beta[ap, k] <= 0.0:
                break
            if load_ok(ap):
                d[ap, k] = 1
                break
    s = simplified_sinr_all(d, beta)

    for rank in range(1, m_aps):
        phi = jain_index(s)
        idx = int(np.ceil((1.0 - phi) * k_ues))
        idx = min(max(idx, 1), k_ues)
        alpha = np.sort(s)[idx - 1]
        for k in range(k_ues):
            ap = order[rank, k]
            if beta[ap, k] <= 0.0:
                s[k] = simplified_sinr(d[:, k], beta[:, k])
                continue
            served = float(np.dot(d[:, k].astype(float), beta[:, k]))
            if (
                s[k] < alpha
                and load_ok(ap)
                and int(d[:, k].sum()) < constraints.g_max
                and served < constraints.delta * total[k]
            ):
                d[ap, k] = 1
            s[k] = simplified_sinr(d[:, k], beta[:, k])
    return CooperationMatrix(d=d)


def select_puc(snapshot: ChannelSnapshot, constraints: SelectionConstraints) -> CooperationMatrix:
    """Unconstrained best-SNR growth until the delta SNR fraction is reached.

    No load or serving-set caps apply; serving sets can violate both.
    """
    beta = candidate_beta(snapshot, constraints)
    m_aps, k_ues = beta.shape
    d = np.zeros((m_aps, k_ues), dtype=np.int8)
    for k in range(k_ues):
        col = beta[:, k]
        total = col.sum()
        order = _descending_order(col)
        served = 0.0
        for ap in order:
            if col[ap] <= 0.0:
                break
            if served < constraints.delta * total:
                d[ap, k] = 1
                served += col[ap]
            else:
                break
    return CooperationMatrix(d=d)


def select_puc_const(
    snapshot: ChannelSnapshot, constraints: SelectionConstraints
) -> CooperationMatrix:
    """Best-SNR growth with per-AP load enforced by weakest-UE eviction.

    Every UE attempts every candidate AP in descending beta (no stop rule); a
    full AP swaps in the newcomer only if the newcomer's beta beats the worst
    beta among the AP's current UEs. The result always satisfies the load cap.
    """
    beta = candidate_beta(snapshot, constraints)
    m_aps, k_ues = beta.shape
    d = np.zeros((m_aps, k_ues), dtype=np.int8)
    for k in range(k_ues):
        col = beta[:, k]
        order = _descending_order(col)
        for ap in order:
            if col[ap] <= 0.0:
                break
            served = np.flatnonzero(d[ap, :])
            if served.size < constraints.tau_p:
                d[ap, k] = 1
            elif served.size > 0:
                worst = served[np.argmin(beta[ap, served])]
                if beta[ap, worst] < beta[ap, k]:
                    d[ap, worst] = 0
                    d[ap, k] = 1
    return CooperationMatrix(d=d)


def select_cuc(
    snapshot: ChannelSnapshot, topo, constraints: SelectionConstraints
) -> CooperationMatrix:
    """Serve each UE with the full clusters of its e_best strongest APs."""
    if topo.cluster_of_ap is None:
        raise ValueError("CUC requires a topology with a built cluster grid")
    beta = candidate_beta(snapshot, constraints)
    m_aps, k_ues = beta.shape
    d = np.zeros((m_aps, k_ues), dtype=np.int8)
    for k in range(k_ues):
        col = beta[:, k]
        order = _descending_order(col)
        for ap in order[: constraints.e_best]:
            if col[ap] <= 0.0:
                break
            members = topo.cluster_of_ap == topo.cluster_of_ap[ap]
            d[members, k] = 1
    return CooperationMatrix(d=d)


def select_small_cell(
    snapshot: ChannelSnapshot, constraints: SelectionConstraints | None = None
) -> CooperationMatrix:
    """One AP per UE: the best-SNR candidate (lowest index on ties)."""
    beta = snapshot.beta if constraints is None else candidate_beta(snapshot, constraints)
    m_aps, k_ues = beta.shape
    d = np.zeros((m_aps, k_ues), dtype=np.int8)
    for k in range(k_ues):
        best = int(np.argmax(beta[:, k]))
        if beta[best, k] > 0.0:
            d[best, k] = 1
    return CooperationMatrix(d=d)


def select_full_cf(
    snapshot: ChannelSnapshot, constraints: SelectionConstraints | None = None
) -> CooperationMatrix:
    """Every candidate AP serves every UE (the unscaled upper bound)."""
    beta = snapshot.beta if constraints is None else candidate_beta(snapshot, constraints)
    return CooperationMatrix(d=(beta > 0.0).astype(np.int8))


@dataclass(frozen=True)
class MdpState:
    """Per-step observation: serving-set-masked beta plus serving-AP loads.

    ``load_head`` lists the load of each currently serving AP in connection
    order, zero-padded to g_max entries.
    """

    masked_beta: np.ndarray
    load_head: np.ndarray


@dataclass
class RewardWeights:
    step: float = 1.0
    round: float = 10.0
    episode: float = 2000.0


class ApSelectionEnv:
    """Sequential per-UE AP-connection environment with shaped rewards.

    UEs are processed in ascending id. Each step connects the chosen
    candidate AP to the current UE, rewarding the step with
    step_weight * beta / beta_max, or -1 when the chosen AP is already at
    the load cap (the connection is then refused, so the cap always holds).
    A UE's round ends after ``round_budget`` steps, when its serving set
    reaches g_max, or on the SKIP action; the round reward scales with how
    small the serving set stayed. The episode reward is the fairness-scaled
    sum of simplified SINRs over all UEs. Single-owner mutable state: use
    one environment per worker.
    """

    def __init__(
        self,
        snapshot: ChannelSnapshot,
        constraints: SelectionConstraints,
        weights: RewardWeights | None = None,
        round_budget: int = 100,
    ):
        self.beta = candidate_beta(snapshot, constraints)
        self.constraints = constraints
        self.weights = weights or RewardWeights()
        self.round_budget = round_budget
        self.m_aps, self.k_ues = self.beta.shape
        self.reset()

    def reset(self) -> MdpState:
        self.d = np.zeros((self.m_aps, self.k_ues), dtype=np.int8)
        self.current_ue = 0
        self.steps_in_round = 0
        self.connect_order: list[int] = []
        self.done = self.k_ues == 0
        return self._state()

    def action_space(self, ue: int | None = None) -> np.ndarray:
        """Candidate AP indices (beta at or above the outage threshold)."""
        k = self.current_ue if ue is None else ue
        return np.flatnonzero(self.beta[:, k] > 0.0)

    def _state(self) -> MdpState:
        k = min(self.current_ue, self.k_ues - 1)
        masked = self.d[:, k] * self.beta[:, k]
        loads = np.zeros(self.constraints.g_max, dtype=int)
        w = self.d.sum(axis=1)
        for i, ap in enumerate(self.connect_order[: self.constraints.g_max]):
            loads[i] = w[ap]
        return MdpState(masked_beta=masked, load_head=loads)

    def step(self, action: int):
        """Apply one connection action; returns (state, reward, done, info).

        info carries the reward components: r1 every step, r2 on the step
        that closes a round, r3 on the episode's final step.
        """
        if self.done:
            raise ValueError("episode finished; call reset()")
        k = self.current_ue
        info = {"r1": 0.0, "r2": 0.0, "r3": 0.0, "ue": k}
        space = self.action_space(k)
        round_over = False
        if action == SKIP:
            round_over = True
        else:
            if action not in space:
                raise ValueError(f"action {action} outside the action space of UE {k}")
            beta_max = float(self.beta[space, k].max())
            if int(self.d[action, :].sum()) >= self.constraints.tau_p:
                info["r1"] = -1.0
            else:
                info["r1"] = self.weights.step * float(self.beta[action, k]) / beta_max
                if not self.d[action, k]:
                    self.d[action, k] = 1
                    self.connect_order.append(action)
            self.steps_in_round += 1
            if (
                self.steps_in_round >= self.round_budget
                or int(self.d[:, k].sum()) >= self.constraints.g_max
            ):
                round_over = True

        if round_over:
            g = int(self.d[:, k].sum())
            info["r2"] = self.weights.round * (1.0 - g / self.m_aps)
            self.current_ue += 1
            self.steps_in_round = 0
            self.connect_order = []
            if self.current_ue >= self.k_ues:
                self.done = True
                s = simplified_sinr_all(self.d, self.beta)
                ssum = float(s.sum())
                ssq = float(np.dot(s, s))
                info["r3"] = 0.0 if ssq == 0.0 else self.weights.episode * ssum**3 / (self.k_ues * ssq)
        reward = info["r1"] + info["r2"] + info["r3"]
        return self._state(), reward, self.done, info

    def cooperation_matrix(self) -> CooperationMatrix:
        return CooperationMatrix(d=self.d.copy())


def greedy_policy(env: ApSelectionEnv, state: MdpState) -> int:
    """Pick the strongest not-yet-connected candidate AP with spare load.

    Returns SKIP when every admissible AP is connected or full. Deterministic:
    beta ties break toward the lowest AP index.
    """
    k = env.current_ue
    w = env.d.sum(axis=1)
    mask = (env.beta[:, k] > 0.0) & (env.d[:, k] == 0) & (w < env.constraints.tau_p)
    if not mask.any():
        return SKIP
    betas = np.where(mask, env.beta[:, k], -np.inf)
    return int(np.argmax(betas))


def run_episode(env: ApSelectionEnv, policy=greedy_policy):
    """Roll one full episode; returns (total return, CooperationMatrix, infos)."""
    state = env.reset()
    total = 0.0
    infos = []
    while not env.done:
        action = policy(env, state)
        state, reward, _, info = env.step(action)
        total += reward
        infos.append(info)
    return total, env.cooperation_matrix(), infos


def select_mdp_greedy(
    snapshot: ChannelSnapshot,
    constraints: SelectionConstraints,
    weights: RewardWeights | None = None,
    round_budget: int = 100,
) -> CooperationMatrix:
    """Serving sets produced by the greedy reference policy on the MDP env."""
    env = ApSelectionEnv(snapshot, constraints, weights=weights, round_budget=round_budget)
    _, coop, _ = run_episode(env, greedy_policy)
    return coop


def brute_force_selection(
    snapshot: ChannelSnapshot,
    constraints: SelectionConstraints,
    objective_weights: tuple[float, float, float],
) -> CooperationMatrix:
    """Exhaustive search over feasible cooperation matrices (tiny instances).

    Maximizes w_rate * sum(S) + w_fair * Phi'(S) - w_conn * connections over
    all 0/1 matrices satisfying the load and serving-set caps, with outage
    links forced off. Refuses instances with M*K > 20. Ties keep the first
    maximizer in lexicographic enumeration order of the flattened matrix.
    """
    beta = candidate_beta(snapshot, constraints)
    m_aps, k_ues = beta.shape
    if m_aps * k_ues > 20:
        raise ValueError(f"instance too large for enumeration: M*K = {m_aps * k_ues}")
    w_rate, w_fair, w_conn = objective_weights
    allowed = beta.reshape(-1) > 0.0
    best_obj = -np.inf
    best_d = np.zeros((m_aps, k_ues), dtype=np.int8)
    for bits in product((0, 1), repeat=m_aps * k_ues):
        flat = np.array(bits, dtype=np.int8)
        if np.any(flat & ~allowed):
            continue
        d = flat.reshape(m_aps, k_ues)
        if d.sum(axis=1).max(initial=0) > constraints.tau_p:
            continue
        if d.sum(axis=0).max(initial=0) > constraints.g_max:
            continue
        s = simplified_sinr_all(d, beta)
        obj = w_rate * float(s.sum()) + w_fair * jain_index(s) - w_conn * float(d.sum())
        if obj > best_obj:
            best_obj = obj
            best_d = d.copy()
    return CooperationMatrix(d=best_d)


ALGORITHMS = {
    "unifsrv-heu": "fairness-threshold heuristic",
    "puc": "unconstrained best-SNR growth",
    "puc-const": "load-capped growth with eviction",
    "cuc": "cluster-union selection",
    "small-cell": "single best AP",
    "full-cf": "all candidate APs",
    "mdp-greedy": "greedy policy on the selection MDP",
}


def run_algorithm(
    name: str,
    snapshot: ChannelSnapshot,
    constraints: SelectionConstraints,
    topo=None,
    mdp_round_budget: int = 100,
    mdp_weights: RewardWeights | None = None,
) -> CooperationMatrix:
    """Dispatch a selection algorithm by config key."""
    if name == "unifsrv-heu":
        return select_unifsrv_heu(snapshot, constraints)
    if name == "puc":
        return select_puc(snapshot, constraints)
    if name == "puc-const":
        return select_puc_const(snapshot, constraints)
    if name == "cuc":
        if topo is None:
            raise ValueError("cuc needs the cluster topology")
        return select_cuc(snapshot, topo, constraints)
    if name == "small-cell":
        return select_small_cell(snapshot, constraints)
    if name == "full-cf":
        return select_full_cf(snapshot, constraints)
    if name == "mdp-greedy":
        return select_mdp_greedy(
            snapshot, constraints, weights=mdp_weights, round_budget=mdp_round_budget
        )
    raise ValueError(f"unknown algorithm {name!r}; known: {sorted(ALGORITHMS)}")
