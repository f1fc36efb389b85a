"""Embedded pilot block with zero guards, and the pilot-window measurement model.

Geometry (delay rows down, Doppler columns across, all Doppler arithmetic
mod N)::

    guard rows     l0-l_max .. l0-1          zeros
    pilot rows     l0      .. l0+P_m-1       pilot block (P_m x P_n at col k0)
    guard rows     l0+P_m  .. l0+P_m+l_max   zeros
    guard cols     k0-2*k_hat_max .. k0+P_n+2*k_hat_max   zeros (full band)

The received window spans delay rows ``l0 .. l0+P_m+l_max`` and Doppler
columns ``k0-k_hat_max .. k0+P_n+k_hat_max`` — every cell a channel tap can
reach from the pilot block, one further than the reachable set on each high
edge.  The guard band is one row/column wider than the spread on the far
side for the same reason, so data never leaks into the window.

Flattening convention (everywhere): delay index fastest, i.e. column-major
order of the (delay x Doppler) arrays.  Observation entry ``j + R_d * k``
is window cell (delay offset j, Doppler offset k) with
``R_d = P_m + l_max + 1``; measurement-matrix column ``l + (l_max+1) * q``
is tap-grid cell (delay l, Doppler column q), matching
``channel.response_vec``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frame import FrameConfig

__all__ = [
    "PilotLayout",
    "place_pilots",
    "pilot_frame",
    "build_measurement_matrix",
    "extract_observation",
    "scatter_observation",
]


@dataclass(eq=False)
class PilotLayout:
    """Placement and values of one embedded pilot block.

    ``l_max`` and ``k_hat_max`` describe the channel spread the guards must
    absorb (``k_hat_max`` includes the kernel truncation margin).  Pilot
    cells are unit-modulus points with deterministic pseudorandom phases
    drawn from ``phase_seed``, scaled to ``pilot_power`` per cell.
    """

    p_m: int
    p_n: int
    anchor_l: int
    anchor_k: int
    l_max: int
    k_hat_max: int
    m: int
    n: int
    pilot_power: float = 1.0
    phase_seed: int = 0

    def __post_init__(self) -> None:
        if self.p_m < 1 or self.p_n < 1:
            raise ValueError("pilot block must be at least 1x1")
        if self.pilot_power < 0:
            raise ValueError("pilot_power must be nonnegative")
        if self.anchor_l < self.l_max:
            raise ValueError(
                f"pilot delay anchor {self.anchor_l} must be >= l_max {self.l_max} "
                "so the window stays clear of the delay wrap"
            )
        if self.anchor_l + self.p_m + self.l_max > self.m - 1:
            raise ValueError("pilot-plus-guard delay extent exceeds the grid")
        if self.window_shape[1] > self.n:
            raise ValueError("observation window wraps onto itself along Doppler")
        if not 0 <= self.anchor_k < self.n:
            raise ValueError(f"anchor_k must lie in [0, {self.n})")

    @classmethod
    def for_channel(
        cls,
        cfg: FrameConfig,
        p_m: int,
        p_n: int,
        l_max: int,
        k_hat_max: int,
        pilot_power: float = 1.0,
        phase_seed: int = 0,
    ) -> "PilotLayout":
        """Layout at the default anchor: lowest legal delay row, centered Doppler."""
        return cls(
            p_m=p_m,
            p_n=p_n,
            anchor_l=l_max,
            anchor_k=cfg.n // 2,
            l_max=l_max,
            k_hat_max=k_hat_max,
            m=cfg.m,
            n=cfg.n,
            pilot_power=pilot_power,
            phase_seed=phase_seed,
        )

    @property
    def window_shape(self) -> tuple[int, int]:
        """(delay rows, Doppler cols) of the received observation window."""
        return (self.p_m + self.l_max + 1, self.p_n + 2 * self.k_hat_max + 1)

    @property
    def n_observations(self) -> int:
        r = self.window_shape
        return r[0] * r[1]

    @property
    def n_taps(self) -> int:
        return (self.l_max + 1) * (2 * self.k_hat_max + 1)

    @property
    def window_delays(self) -> np.ndarray:
        return self.anchor_l + np.arange(self.window_shape[0])

    @property
    def window_dopplers(self) -> np.ndarray:
        return (self.anchor_k - self.k_hat_max + np.arange(self.window_shape[1])) % self.n

    @property
    def guard_delays(self) -> np.ndarray:
        return np.arange(self.anchor_l - self.l_max, self.anchor_l + self.p_m + self.l_max + 1)

    @property
    def guard_dopplers(self) -> np.ndarray:
        width = min(self.p_n + 4 * self.k_hat_max + 1, self.n)
        return (self.anchor_k - 2 * self.k_hat_max + np.arange(width)) % self.n

    @property
    def pilot_values(self) -> np.ndarray:
        """Unit-modulus pilot cells scaled to pilot_power, deterministic in phase_seed."""
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.phase_seed)))
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(self.p_m, self.p_n))
        return np.sqrt(self.pilot_power) * np.exp(1j * phases)

    def total_pilot_power(self) -> float:
        return float(np.sum(np.abs(self.pilot_values) ** 2))

    def data_mask(self) -> np.ndarray:
        """Boolean (M, N) grid: True where data symbols may be placed."""
        mask = np.ones((self.m, self.n), dtype=bool)
        mask[np.ix_(self.guard_delays, self.guard_dopplers)] = False
        return mask

    def overhead(self) -> float:
        """Fraction of the grid consumed by the pilot block and its guards."""
        return 1.0 - self.data_mask().sum() / (self.m * self.n)

    def to_dict(self) -> dict:
        return {
            "p_m": self.p_m,
            "p_n": self.p_n,
            "anchor_l": self.anchor_l,
            "anchor_k": self.anchor_k,
            "l_max": self.l_max,
            "k_hat_max": self.k_hat_max,
            "m": self.m,
            "n": self.n,
            "pilot_power": self.pilot_power,
            "phase_seed": self.phase_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PilotLayout":
        return cls(**d)


def place_pilots(layout: PilotLayout, data: np.ndarray) -> np.ndarray:
    """Write the pilot block and zero guards into a copy of ``data``.

    Data symbols outside the guard band are untouched.
    """
    x = np.asarray(data)
    if x.shape != (layout.m, layout.n):
        raise ValueError(f"frame must have shape ({layout.m}, {layout.n}), got {x.shape}")
    out = x.astype(complex).copy()
    out[np.ix_(layout.guard_delays, layout.guard_dopplers)] = 0.0
    rows = layout.anchor_l + np.arange(layout.p_m)
    cols = (layout.anchor_k + np.arange(layout.p_n)) % layout.n
    out[np.ix_(rows, cols)] = layout.pilot_values
    return out


def pilot_frame(layout: PilotLayout) -> np.ndarray:
    """The frame as the estimator knows it: pilots and zeros only."""
    return place_pilots(layout, np.zeros((layout.m, layout.n), dtype=complex))


def build_measurement_matrix(layout: PilotLayout, cfg: FrameConfig) -> np.ndarray:
    """Pilot-window measurement operator, shape (n_observations, n_taps).

    Row (j, k) of the window lists the known transmitted symbols that each
    hypothesized tap would fold into that observation cell:
    ``Phi[j + R_d*k, l + (l_max+1)*q] = x_pilot[l0 + j - l, (k0 + k - q) mod N]``
    where column index q means Doppler shift ``q - k_hat_max``.  Every read
    lands inside the guard band, so entries are pilot values or zero and
    each row has at most P_m*P_n nonzeros.  The per-entry phase factor of
    the received-signal relation is deliberately not modeled here.
    """
    if (layout.m, layout.n) != (cfg.m, cfg.n):
        raise ValueError(
            f"layout grid ({layout.m}, {layout.n}) does not match config "
            f"({cfg.m}, {cfg.n})"
        )
    x_pf = pilot_frame(layout)
    r_d, r_k = layout.window_shape
    j = np.arange(r_d)
    k = np.arange(r_k)
    l = np.arange(layout.l_max + 1)
    q = np.arange(2 * layout.k_hat_max + 1)
    # broadcast to (r_d, r_k, l, q): delay read l0+j-l, Doppler read (k0+k-q) mod N
    delay_idx = layout.anchor_l + j[:, None, None, None] - l[None, None, :, None]
    dopp_idx = (layout.anchor_k + k[None, :, None, None] - q[None, None, None, :]) % layout.n
    delay_idx = np.broadcast_to(delay_idx, (r_d, r_k, l.size, q.size))
    dopp_idx = np.broadcast_to(dopp_idx, (r_d, r_k, l.size, q.size))
    phi = x_pf[delay_idx, dopp_idx]
    # flatten with delay fastest on both axes
    phi = phi.transpose(1, 0, 3, 2).reshape(r_k * r_d, q.size * l.size)
    return phi


def extract_observation(y_dd: np.ndarray, layout: PilotLayout) -> np.ndarray:
    """Crop the received window into a vector (delay-fastest order)."""
    y = np.asarray(y_dd)
    if y.shape != (layout.m, layout.n):
        raise ValueError(f"frame must have shape ({layout.m}, {layout.n}), got {y.shape}")
    win = y[np.ix_(layout.window_delays, layout.window_dopplers)]
    return win.reshape(-1, order="F")


def scatter_observation(obs: np.ndarray, layout: PilotLayout) -> np.ndarray:
    """Inverse of `extract_observation`: window vector back onto a zero grid."""
    obs = np.asarray(obs).reshape(-1)
    if obs.size != layout.n_observations:
        raise ValueError(f"observation length {obs.size} != {layout.n_observations}")
    out = np.zeros((layout.m, layout.n), dtype=complex)
    out[np.ix_(layout.window_delays, layout.window_dopplers)] = obs.reshape(
        layout.window_shape, order="F"
    )
    return out
