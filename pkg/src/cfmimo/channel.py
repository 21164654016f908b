"""Large-scale SNR and small-scale fading with intra-block channel aging.

Per block, a path-loss provider (three-slope log-distance with log-normal
shadowing, or an ingested path-loss map) yields the M x K path-loss matrix,
from which the average-SNR matrix beta = p / (L * n0) is formed. Within a
block, scalar Rayleigh channels decorrelate with UE motion following a
zeroth-order Bessel correlation; channel estimates carry the aged,
pilot-contaminated variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import j0

BOLTZMANN = 1.380649e-23
T0_KELVIN = 290.0
LIGHT_SPEED = 299792458.0


class MapParseError(ValueError):
    """Malformed path-loss map file; message names the offending line."""


@dataclass(frozen=True)
class RadioConfig:
    """Physical-layer constants shared by channel and evaluation.

    The per-AP transmit budget ``tx_power_w`` doubles as the baseline per-link
    power in beta; at evaluation time each AP splits it equally over its
    served UEs. ``estimate_form`` selects the channel-estimate variance
    model: "raw" follows the aged contamination quotient as given, "mmse" is
    the conventional saturating estimator bounded by the channel variance.
    """

    carrier_freq_hz: float = 2.0e9
    bandwidth_hz: float = 20.0e6
    noise_figure_db: float = 9.0
    slot_duration_s: float = 1.0e-4
    block_len_slots: int = 200
    pilot_len_slots: int = 10
    tx_power_w: float = 0.2
    ap_height_m: float = 12.5
    ue_height_m: float = 1.65
    shadowing_sigma_db: float = 8.0
    d0_m: float = 10.0
    dc_m: float = 50.0
    estimate_form: str = "raw"

    def __post_init__(self):
        if self.pilot_len_slots >= self.block_len_slots:
            raise ValueError("pilot length must be shorter than the block")
        for name in (
            "carrier_freq_hz", "bandwidth_hz", "slot_duration_s", "tx_power_w",
            "ap_height_m", "ue_height_m", "d0_m", "dc_m",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing_sigma_db must be >= 0")
        if self.estimate_form not in ("raw", "mmse"):
            raise ValueError(f"unknown estimate_form {self.estimate_form!r}")


def noise_power_w(cfg: RadioConfig) -> float:
    """Thermal noise power k_B * T0 * B scaled by the receiver noise figure."""
    return BOLTZMANN * T0_KELVIN * cfg.bandwidth_hz * 10.0 ** (cfg.noise_figure_db / 10.0)


def hata_offset_db(cfg: RadioConfig) -> float:
    """Fixed COST231-Hata offset; carrier frequency enters in MHz."""
    f_mhz = cfg.carrier_freq_hz / 1e6
    return (
        46.3
        + 33.9 * np.log10(f_mhz)
        - 13.82 * np.log10(cfg.ap_height_m)
        - (1.1 * np.log10(f_mhz) - 0.7) * cfg.ue_height_m
        + (1.56 * np.log10(f_mhz) - 0.8)
    )


def pathloss_three_slope(d, cfg: RadioConfig):
    """Three-slope log-distance path loss in dB, continuous at both breakpoints.

    Distances are given in meters and compared against the breakpoints in
    meters; inside the logarithms the COST231-Hata convention (km) applies.
    Below the near breakpoint the loss is constant, so the 1 m clamp only
    guards degenerate zero-distance inputs.
    """
    d = np.maximum(np.asarray(d, dtype=float), 1.0)
    l0 = hata_offset_db(cfg)
    dc_km = cfg.dc_m / 1e3
    d0_km = cfg.d0_m / 1e3
    d_km = d / 1e3
    near = l0 + 15.0 * np.log10(dc_km) + 20.0 * np.log10(d0_km)
    mid = l0 + 15.0 * np.log10(dc_km) + 20.0 * np.log10(d_km)
    far = l0 + 35.0 * np.log10(d_km)
    out = np.where(d > cfg.dc_m, far, np.where(d <= cfg.d0_m, near, mid))
    return out if out.ndim else float(out)


def apply_shadowing(pl_db: np.ndarray, sigma: float, seed) -> np.ndarray:
    """Add i.i.d. log-normal shadowing, one fixed draw per AP-UE pair."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return np.array(pl_db, dtype=float, copy=True)
    rng = np.random.default_rng(seed)
    return np.asarray(pl_db, dtype=float) + sigma * rng.standard_normal(np.shape(pl_db))


@dataclass(frozen=True)
class ChannelSnapshot:
    """Per-block large-scale state: path loss, noise, and average SNR beta."""

    beta: np.ndarray
    pathloss_db: np.ndarray
    noise_power: float

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float)
        if np.any(b < 0) or not np.all(np.isfinite(b)):
            raise ValueError("beta entries must be finite and non-negative")
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "pathloss_db", np.asarray(self.pathloss_db, dtype=float))
        b.setflags(write=False)
        self.pathloss_db.setflags(write=False)

    @property
    def n_aps(self) -> int:
        return self.beta.shape[0]

    @property
    def n_ues(self) -> int:
        return self.beta.shape[1]

    def channel_gain(self) -> np.ndarray:
        """Large-scale fading variance R = 1/L per link (0 where in outage)."""
        return np.where(np.isfinite(self.pathloss_db), 10.0 ** (-self.pathloss_db / 10.0), 0.0)


class LogDistanceProvider:
    """Three-slope path loss plus a per-(AP, UE) shadow field fixed for the run."""

    def __init__(self, topo, cfg: RadioConfig, n_ues: int, seed=0):
        self._ap_pos = topo.ap_positions
        self._cfg = cfg
        self._n_ues = n_ues
        if cfg.shadowing_sigma_db > 0:
            rng = np.random.default_rng(seed)
            self._shadow = cfg.shadowing_sigma_db * rng.standard_normal(
                (topo.n_aps, n_ues)
            )
        else:
            self._shadow = np.zeros((topo.n_aps, n_ues))

    def pathloss_db(self, positions: np.ndarray) -> np.ndarray:
        positions = np.asarray(positions, dtype=float)
        if positions.shape != (self._n_ues, 2):
            raise ValueError(f"expected ({self._n_ues}, 2) positions")
        diff = self._ap_pos[:, None, :] - positions[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        return pathloss_three_slope(dist, self._cfg) + self._shadow


class PathLossMap:
    """Grid-sampled path loss per AP with nearest-cell lookup.

    Cells absent from the ingested file are outage (+inf loss, beta = 0).
    """

    def __init__(self, dx, dy, origin, table, index_offset):
        self._dx = dx
        self._dy = dy
        self._origin = origin
        self._table = table  # (M, nx, ny), +inf where uncovered
        self._offset = index_offset

    def pathloss_db(self, positions: np.ndarray) -> np.ndarray:
        positions = np.asarray(positions, dtype=float)
        ix = np.rint((positions[:, 0] - self._origin[0]) / self._dx).astype(int) - self._offset[0]
        iy = np.rint((positions[:, 1] - self._origin[1]) / self._dy).astype(int) - self._offset[1]
        m, nx, ny = self._table.shape
        out = np.full((m, positions.shape[0]), np.inf)
        inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        out[:, inside] = self._table[:, ix[inside], iy[inside]]
        return out


def load_pathloss_map(path, topo) -> PathLossMap:
    """Parse a path-loss map file for ``topo``.

    Format: header ``grid_dx,grid_dy,origin_x,origin_y`` then rows
    ``ap_id,cell_ix,cell_iy,pathloss_db``. Every AP id must belong to the
    topology and appear at least once; duplicate cells and non-positive grid
    spacing are parse errors.
    """
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise MapParseError(f"{path}: empty map file")
    head = lines[0].split(",")
    if len(head) != 4:
        raise MapParseError(f"{path}:1: expected header 'grid_dx,grid_dy,origin_x,origin_y'")
    try:
        dx, dy, ox, oy = (float(v) for v in head)
    except ValueError:
        raise MapParseError(f"{path}:1: non-numeric header field") from None
    if dx <= 0 or dy <= 0:
        raise MapParseError(f"{path}:1: grid spacing must be positive and uniform per axis")

    rows: dict[tuple[int, int, int], float] = {}
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise MapParseError(f"{path}:{ln}: expected 'ap_id,cell_ix,cell_iy,pathloss_db'")
        try:
            ap = int(parts[0])
            cix, ciy = int(parts[1]), int(parts[2])
            pl = float(parts[3])
        except ValueError:
            raise MapParseError(f"{path}:{ln}: non-numeric field in {line!r}") from None
        if ap < 0 or ap >= topo.n_aps:
            raise MapParseError(f"{path}:{ln}: unknown AP id {ap}")
        if (ap, cix, ciy) in rows:
            raise MapParseError(f"{path}:{ln}: duplicate cell ({ap}, {cix}, {ciy})")
        rows[(ap, cix, ciy)] = pl
    if not rows:
        raise MapParseError(f"{path}: no map rows")
    seen_aps = {ap for ap, _, _ in rows}
    missing = sorted(set(range(topo.n_aps)) - seen_aps)
    if missing:
        raise MapParseError(f"{path}: no coverage rows for AP ids {missing}")

    ix_min = min(c[1] for c in rows)
    ix_max = max(c[1] for c in rows)
    iy_min = min(c[2] for c in rows)
    iy_max = max(c[2] for c in rows)
    table = np.full((topo.n_aps, ix_max - ix_min + 1, iy_max - iy_min + 1), np.inf)
    for (ap, cix, ciy), pl in rows.items():
        table[ap, cix - ix_min, ciy - iy_min] = pl
    return PathLossMap(dx, dy, (ox, oy), table, (ix_min, iy_min))


def save_pathloss_map(path, dx, dy, origin, entries) -> None:
    """Write a map file; ``entries`` iterates (ap_id, ix, iy, pathloss_db)."""
    with open(path, "w") as f:
        f.write(f"{dx:.10g},{dy:.10g},{origin[0]:.10g},{origin[1]:.10g}\n")
        for ap, ix, iy, pl in entries:
            f.write(f"{ap},{ix},{iy},{pl:.10g}\n")


def snapshot(topo, positions, provider, cfg: RadioConfig) -> ChannelSnapshot:
    """Evaluate the provider at the UE positions and form beta = p/(L*n0)."""
    pl_db = provider.pathloss_db(np.asarray(positions, dtype=float))
    n0 = noise_power_w(cfg)
    gain = np.where(np.isfinite(pl_db), 10.0 ** (-pl_db / 10.0), 0.0)
    beta = cfg.tx_power_w * gain / n0
    return ChannelSnapshot(beta=beta, pathloss_db=pl_db, noise_power=n0)


def aging_coefficient(t, v, cfg: RadioConfig):
    """Bessel channel-aging correlation at slot ``t`` for UE speed ``v``.

    rho = J0(2*pi * (v * f_c / c) * T_s * (t - tau_p - 1)); broadcasts over
    array-valued t or v.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    arg = (
        2.0 * np.pi * (v * cfg.carrier_freq_hz / LIGHT_SPEED)
        * cfg.slot_duration_s * (t - cfg.pilot_len_slots - 1)
    )
    out = j0(arg)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class FadingState:
    """Block-start Rayleigh state h0 ~ CN(0, R) plus the draw stream."""

    h0: np.ndarray
    r_gain: np.ndarray
    rng: np.random.Generator


def draw_fading(snap: ChannelSnapshot, seed) -> FadingState:
    """Draw the block-start channel matrix for one block."""
    rng = np.random.default_rng(seed)
    r = snap.channel_gain()
    h0 = np.sqrt(r / 2.0) * (
        rng.standard_normal(r.shape) + 1j * rng.standard_normal(r.shape)
    )
    return FadingState(h0=h0, r_gain=r, rng=rng)


def realize_channel(state: FadingState, t, v, cfg: RadioConfig) -> np.ndarray:
    """Aged channel h[t] = rho*h0 + sqrt(1-rho^2)*g with fresh g ~ CN(0, R).

    ``v`` may be scalar or per-UE (K,); the per-draw innovation g comes from
    the state's stream, so consecutive calls yield independent realizations.
    """
    rho = np.atleast_1d(aging_coefficient(t, v, cfg))[None, :]
    r = state.r_gain
    g = np.sqrt(r / 2.0) * (
        state.rng.standard_normal(r.shape) + 1j * state.rng.standard_normal(r.shape)
    )
    return rho * state.h0 + np.sqrt(np.maximum(0.0, 1.0 - rho**2)) * g


def assign_pilots(k: int, tau_p: int, seed, method: str = "random") -> np.ndarray:
    """Assign one of tau_p pilot indices to each UE.

    "random" draws uniformly (the default); "sequential" cycles ue % tau_p,
    which keeps copilot sets singletons whenever K <= tau_p.
    """
    if k < 1 or tau_p < 1:
        raise ValueError("need k >= 1 and tau_p >= 1")
    if method == "random":
        return np.random.default_rng(seed).integers(0, tau_p, size=k)
    if method == "sequential":
        return np.arange(k) % tau_p
    raise ValueError(f"unknown pilot assignment method {method!r}")


def copilot_mask(pilots: np.ndarray) -> np.ndarray:
    """(K, K) boolean matrix; entry [i, j] true iff i and j share a pilot."""
    p = np.asarray(pilots)
    return p[:, None] == p[None, :]


def estimate_variance(beta_mk, copilot_betas, t, v, cfg: RadioConfig, p_mk=None):
    """Variance Z of the aged MMSE channel estimate for one AP-UE link.

    ``copilot_betas`` holds beta from the same AP to every UE sharing the
    pilot (including this one). The aging factor uses the pilot-to-slot lag
    tau_p + 1 - t. Form "raw" applies the contamination quotient
    rho^2 * beta^2 * n0 / (p * sum(beta) * n0 + p) as given; form "mmse" is
    the conventional saturating estimator in channel-gain units,
    rho^2 * R * (beta*p*tau_p) / (sum(beta)*p*tau_p + 1), bounded by R.
    """
    p = cfg.tx_power_w if p_mk is None else p_mk
    n0 = noise_power_w(cfg)
    rho = aging_coefficient(cfg.pilot_len_slots + 1 - np.asarray(t, dtype=float), v, cfg)
    beta_mk = np.asarray(beta_mk, dtype=float)
    csum = np.sum(np.asarray(copilot_betas, dtype=float))
    if cfg.estimate_form == "raw":
        return rho**2 * beta_mk**2 * n0 / (p * csum * n0 + p)
    r_gain = beta_mk * n0 / p
    tp = cfg.pilot_len_slots
    return rho**2 * r_gain * (beta_mk * p * tp) / (csum * p * tp + 1.0)


def estimate_variance_matrix(
    snap: ChannelSnapshot, pilots: np.ndarray, t, speeds, cfg: RadioConfig, powers=None
) -> np.ndarray:
    """Vectorized Z over all links; ``powers`` is (M, K) per-link or None.

    Links with zero power (unserved under equal split) fall back to the
    config baseline so Z stays defined for inspection.
    """
    beta = snap.beta
    m, k = beta.shape
    p = np.full((m, k), cfg.tx_power_w) if powers is None else np.where(powers > 0, powers, cfg.tx_power_w)
    n0 = snap.noise_power
    rho = np.atleast_1d(
        aging_coefficient(cfg.pilot_len_slots + 1 - np.asarray(t, dtype=float), speeds, cfg)
    )[None, :]
    # contamination sum per (AP, pilot group), mapped back onto UE columns
    groups = np.asarray(pilots)
    csum = np.zeros_like(beta)
    for pid in np.unique(groups):
        cols = groups == pid
        csum[:, cols] = beta[:, cols].sum(axis=1, keepdims=True)
    if cfg.estimate_form == "raw":
        return rho**2 * beta**2 * n0 / (p * csum * n0 + p)
    r_gain = beta * n0 / p
    tp = cfg.pilot_len_slots
    return rho**2 * r_gain * (beta * p * tp) / (csum * p * tp + 1.0)
