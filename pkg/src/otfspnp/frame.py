"""OTFS frame geometry and transforms.

Conventions used throughout the package:

* A delay-Doppler grid is a complex array of shape ``(M, N)`` with axis 0 the
  delay index ``l`` (0 .. M-1) and axis 1 the Doppler index ``k`` (0 .. N-1).
* Vectorization is column-major ("F" order): ``vec(X)[l + M*k] = X[l, k]``,
  i.e. the delay index runs fastest.  Every matrix operator in the package
  (time channel, DD channel, measurement matrix) follows this order.
* The time-domain signal is the concatenation of N blocks of M samples (plus
  ``zp_len`` trailing zeros per block when zero padding is on), block n being
  the inverse DFT across the Doppler axis of grid column ... see `modulate`.
* Transforms use unitary DFT matrices, built explicitly; sizes here are small
  enough that O(n^2) transforms are irrelevant to runtime.  A verified FFT
  path is available via ``use_fft=True``.

Gray mapping (square QAM, unit average energy): a symbol of ``b`` bits splits
into the first ``b/2`` bits (real axis) and last ``b/2`` bits (imag axis),
each read MSB-first as a Gray code selecting a PAM level.  Level ``g`` maps
to amplitude ``(L-1) - 2*gray_decode(g)`` with ``L = 2**(b/2)``, so for 4QAM
bit 0 carries the real sign and bit 1 the imag sign, 0 -> +, 1 -> -:

    00 -> (+1+1j)/sqrt(2)    01 -> (+1-1j)/sqrt(2)
    10 -> (-1+1j)/sqrt(2)    11 -> (-1-1j)/sqrt(2)

Constellation index q is the integer value of the full bit word, so the table
above is also the constellation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "FrameConfig",
    "dft_matrix",
    "qam_constellation",
    "isfft",
    "sfft",
    "modulate",
    "demodulate",
    "vec",
    "unvec",
    "map_bits",
    "demap_symbols",
    "hard_decisions",
    "bits_from_indices",
]


@lru_cache(maxsize=32)
def _dft_cached(n: int) -> np.ndarray:
    j = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(j, j) / n) / np.sqrt(n)


def dft_matrix(n: int) -> np.ndarray:
    """Unitary n-point DFT matrix F with F[a, b] = exp(-2j pi a b / n) / sqrt(n)."""
    if n < 1:
        raise ValueError(f"DFT size must be positive, got {n}")
    return _dft_cached(n).copy()


def _gray_decode(g: int) -> int:
    b = 0
    while g:
        b ^= g
        g >>= 1
    return b


def qam_constellation(order: int) -> np.ndarray:
    """Gray-mapped square QAM points, unit average energy, in index order.

    ``order`` must be an even power of two (4, 16, 64, ...).  Index q holds
    the point whose bit word (MSB first) has value q; see the module
    docstring for the mapping.
    """
    bits = int(round(np.log2(order)))
    if 2**bits != order or bits % 2 != 0:
        raise ValueError(f"QAM order must be an even power of two, got {order}")
    half = bits // 2
    levels = 2**half
    amp = np.array([(levels - 1) - 2 * _gray_decode(g) for g in range(levels)], dtype=float)
    re = amp[np.arange(order) >> half]
    im = amp[np.arange(order) & (levels - 1)]
    points = re + 1j * im
    return points / np.sqrt(np.mean(np.abs(points) ** 2))


@dataclass(eq=False)
class FrameConfig:
    """Static description of one OTFS frame.

    Parameters
    ----------
    m, n : int
        Delay (subcarrier) and Doppler (time-slot) bin counts.
    delta_f : float
        Subcarrier spacing in Hz.  The slot duration is ``1/delta_f``.
    f_c : float
        Carrier frequency in Hz (bookkeeping only; the discrete model is
        parameterized directly in bins).
    zp_len : int
        Zero-padding length in samples appended to each time block.
    constellation : ndarray
        Ordered complex points with unit average energy.
    """

    m: int
    n: int
    delta_f: float = 7.5e3
    f_c: float = 3.0e9
    zp_len: int = 0
    constellation: np.ndarray = field(default_factory=lambda: qam_constellation(4))

    def __post_init__(self) -> None:
        if self.m < 1 or self.n < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.m}x{self.n}")
        if self.zp_len < 0:
            raise ValueError(f"zp_len must be nonnegative, got {self.zp_len}")
        if self.delta_f <= 0:
            raise ValueError(f"delta_f must be positive, got {self.delta_f}")
        self.constellation = np.asarray(self.constellation, dtype=complex)
        mean_energy = float(np.mean(np.abs(self.constellation) ** 2))
        if abs(mean_energy - 1.0) > 1e-9:
            raise ValueError(f"constellation mean energy must be 1, got {mean_energy}")

    @property
    def slot_duration(self) -> float:
        """Slot duration T in seconds; T * delta_f = 1 by construction."""
        return 1.0 / self.delta_f

    @property
    def bits_per_symbol(self) -> int:
        return int(round(np.log2(len(self.constellation))))

    @property
    def block_len(self) -> int:
        """Samples per time block including zero padding."""
        return self.m + self.zp_len

    @property
    def grid_size(self) -> int:
        return self.m * self.n


def _check_grid(x: np.ndarray, cfg: FrameConfig, name: str) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != (cfg.m, cfg.n):
        raise ValueError(f"{name} must have shape ({cfg.m}, {cfg.n}), got {x.shape}")
    return x.astype(complex, copy=False)


def vec(grid: np.ndarray) -> np.ndarray:
    """Column-major (delay-fastest) vectorization."""
    return np.asarray(grid).reshape(-1, order="F")


def unvec(v: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    v = np.asarray(v)
    if v.size != cfg.grid_size:
        raise ValueError(f"vector length {v.size} does not match grid {cfg.m}x{cfg.n}")
    return v.reshape((cfg.m, cfg.n), order="F")


def isfft(x_dd: np.ndarray, cfg: FrameConfig, use_fft: bool = False) -> np.ndarray:
    """DD grid -> TF grid.

    ``X_TF[m', n'] = (1/sqrt(NM)) sum_k sum_l x[l, k] exp(j2pi(n'k/N - m'l/M))``.
    """
    x = _check_grid(x_dd, cfg, "x_dd")
    if use_fft:
        return np.fft.fft(np.fft.ifft(x, axis=1), axis=0) * np.sqrt(cfg.n / cfg.m)
    f_m = _dft_cached(cfg.m)
    f_n = _dft_cached(cfg.n)
    return f_m @ x @ f_n.conj().T


def sfft(x_tf: np.ndarray, cfg: FrameConfig, use_fft: bool = False) -> np.ndarray:
    """TF grid -> DD grid; exact inverse of `isfft`."""
    x = _check_grid(x_tf, cfg, "x_tf")
    if use_fft:
        return np.fft.fft(np.fft.ifft(x, axis=0), axis=1) * np.sqrt(cfg.m / cfg.n)
    f_m = _dft_cached(cfg.m)
    f_n = _dft_cached(cfg.n)
    return f_m.conj().T @ x @ f_n


def modulate(x_dd: np.ndarray, cfg: FrameConfig, with_zp: bool = True) -> np.ndarray:
    """DD grid -> time-domain sample stream.

    The chain ISFFT -> Heisenberg transform with a rectangular pulse
    collapses to an inverse DFT along the Doppler axis: block n of the
    stream is ``(X @ F_N^H)[:, n]``, equivalently
    ``x_T = (F_N^H kron I_M) vec(X)``.  With ``with_zp`` each block is
    extended by ``cfg.zp_len`` zeros.
    """
    x = _check_grid(x_dd, cfg, "x_dd")
    f_n = _dft_cached(cfg.n)
    blocks = x @ f_n.conj().T
    if with_zp and cfg.zp_len > 0:
        blocks = np.vstack([blocks, np.zeros((cfg.zp_len, cfg.n), dtype=complex)])
    return blocks.reshape(-1, order="F")


def demodulate(y_t: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Time-domain stream -> DD grid; inverse of `modulate`.

    Accepts either the stripped stream (length M*N) or the padded stream
    (length (M+zp_len)*N), in which case the padding samples are discarded
    first.
    """
    y = np.asarray(y_t).reshape(-1)
    if y.size == cfg.grid_size:
        blocks = y.reshape((cfg.m, cfg.n), order="F")
    elif y.size == cfg.block_len * cfg.n:
        blocks = y.reshape((cfg.block_len, cfg.n), order="F")[: cfg.m, :]
    else:
        raise ValueError(
            f"time signal length {y.size} matches neither {cfg.grid_size} "
            f"nor {cfg.block_len * cfg.n}"
        )
    f_n = _dft_cached(cfg.n)
    return blocks.astype(complex, copy=False) @ f_n


def map_bits(bits: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Bit vector -> DD symbol grid, filling the grid in vec order.

    Consecutive ``bits_per_symbol`` bits form one constellation index
    (MSB first); symbol i lands at flat (column-major) grid position i.
    """
    b = cfg.bits_per_symbol
    bits = np.asarray(bits).reshape(-1)
    if bits.size != cfg.grid_size * b:
        raise ValueError(f"need {cfg.grid_size * b} bits, got {bits.size}")
    if not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bits must be 0/1")
    weights = 1 << np.arange(b - 1, -1, -1)
    idx = bits.reshape(-1, b) @ weights
    return unvec(cfg.constellation[idx], cfg)


def hard_decisions(values: np.ndarray, constellation: np.ndarray) -> np.ndarray:
    """Nearest-point indices; ties break toward the lowest constellation index."""
    v = np.asarray(values).reshape(-1)
    d = np.abs(v[:, None] - np.asarray(constellation)[None, :])
    return np.argmin(d, axis=1)


def bits_from_indices(idx: np.ndarray, bits_per_symbol: int) -> np.ndarray:
    """Constellation indices -> bit vector (MSB first per symbol)."""
    idx = np.asarray(idx).reshape(-1)
    shifts = np.arange(bits_per_symbol - 1, -1, -1)
    return ((idx[:, None] >> shifts[None, :]) & 1).reshape(-1).astype(np.int8)


def demap_symbols(grid: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """DD grid -> bit vector via hard nearest-point decisions (vec order)."""
    g = _check_grid(grid, cfg, "grid")
    idx = hard_decisions(vec(g), cfg.constellation)
    return bits_from_indices(idx, cfg.bits_per_symbol)
