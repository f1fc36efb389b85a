"""Doubly dispersive channels on the delay-Doppler grid.

A channel is a set of discrete propagation paths, each with a complex gain,
an integer delay shift, and a Doppler shift that may sit between grid points
(integer bin ``k_i`` plus fractional offset ``kappa_i``).  Three consistent
views of the same channel are provided:

* ``build_time_channel`` — the sampled linear time-varying convolution, one
  lower-triangular banded block per time slot (zero padding removes
  inter-block interference).
* ``build_dd_channel`` — the dense delay-Doppler operator obtained by
  conjugating the time blocks with the Doppler-axis DFT.
* ``scalar_io_oracle`` — an independent entry-by-entry evaluation of the
  delay-Doppler input-output relation, used by tests as the ground truth for
  the matrix chain and by the harness to synthesize received frames.

Fractional Doppler leaks each path across Doppler bins with a Dirichlet
kernel; `eta` is its complex value and `g2_magnitude` its magnitude.  The
estimation target is the truncated tap grid from `build_truncated_response`:
delay support [0, l_max], Doppler support [-k_hat_max, k_hat_max] with
k_hat_max = k_max + N_i, keeping 2*N_i+1 kernel samples around each path.

Doppler phase stride
--------------------
With per-block zero padding the transmitted stream has ``M + zp_len``
samples per slot.  Whether the ZP samples advance the Doppler phase is a
modeling convention:

* ``stride="stream"`` (default): the phase counts every transmitted sample,
  including padding.  The Doppler kernel of slot-rate processing is then
  displaced by ``(k_i+kappa_i)*zp_len/M`` bins, which the oracle reproduces.
* ``stride="block"``: the phase counts data samples only; the delay-Doppler
  relation with kernel ``eta(q, kappa_i)`` is exact, and integer-Doppler
  channels stay exactly sparse.  The Monte-Carlo harness uses this stride.

Both strides satisfy matrix-chain == scalar-oracle to numerical precision.

Fractional delay has no realization in this sampled model; its effect on the
tap grid is *emulated* by an additional Dirichlet kernel along the delay
axis (``frac_delay`` on `PathSet`), available only in the scalar relation
and the truncated-response builder, and flagged as an emulation throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .frame import FrameConfig, dft_matrix

__all__ = [
    "PathSet",
    "sample_paths",
    "eta",
    "g2_magnitude",
    "build_truncated_response",
    "response_vec",
    "response_grid",
    "build_time_channel",
    "build_dd_channel",
    "apply_dd_channel",
    "perturb_channel",
    "scalar_io_oracle",
    "taps_to_paths",
]


@dataclass(eq=False)
class PathSet:
    """A doubly dispersive channel realization.

    Arrays are aligned per path: ``gains[i]`` travels with delay bin
    ``delays[i]`` and Doppler ``dopplers[i] + kappa[i]``.  ``trunc[i]`` is
    the number of Doppler kernel samples kept on each side of the path in
    the truncated tap model.  ``frac_delay`` is the delay-axis emulation
    offset (zero for the physical model).
    """

    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray
    kappa: np.ndarray
    l_max: int
    k_max: int
    trunc: np.ndarray
    frac_delay: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.gains = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        self.delays = np.atleast_1d(np.asarray(self.delays, dtype=int))
        self.dopplers = np.atleast_1d(np.asarray(self.dopplers, dtype=int))
        self.kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        self.trunc = np.broadcast_to(
            np.asarray(self.trunc, dtype=int), self.gains.shape
        ).copy()
        if self.frac_delay is None:
            self.frac_delay = np.zeros_like(self.kappa)
        self.frac_delay = np.atleast_1d(np.asarray(self.frac_delay, dtype=float))
        p = self.gains.size
        for name in ("delays", "dopplers", "kappa", "trunc", "frac_delay"):
            if getattr(self, name).size != p:
                raise ValueError(f"{name} must have one entry per path")
        if p < 1:
            raise ValueError("at least one path required")
        if self.l_max < 0 or self.k_max < 0:
            raise ValueError("l_max and k_max must be nonnegative")
        if np.any(self.delays < 0) or np.any(self.delays > self.l_max):
            raise ValueError(f"delays must lie in [0, {self.l_max}]")
        if np.any(np.abs(self.dopplers) > self.k_max):
            raise ValueError(f"Doppler bins must lie in [-{self.k_max}, {self.k_max}]")
        if np.any(np.abs(self.kappa) > 0.5) or np.any(np.abs(self.frac_delay) > 0.5):
            raise ValueError("fractional offsets must lie in [-1/2, 1/2]")
        if np.any(self.trunc < 0):
            raise ValueError("trunc must be nonnegative")

    @property
    def p(self) -> int:
        return self.gains.size

    @property
    def k_hat_max(self) -> int:
        """Doppler half-extent of the truncated tap grid."""
        return self.k_max + int(self.trunc.max())

    @property
    def is_integer(self) -> bool:
        return bool(np.all(self.kappa == 0) and np.all(self.frac_delay == 0))

    def to_dict(self) -> dict:
        return {
            "gains_re": self.gains.real.tolist(),
            "gains_im": self.gains.imag.tolist(),
            "delays": self.delays.tolist(),
            "dopplers": self.dopplers.tolist(),
            "kappa": self.kappa.tolist(),
            "frac_delay": self.frac_delay.tolist(),
            "l_max": int(self.l_max),
            "k_max": int(self.k_max),
            "trunc": self.trunc.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PathSet":
        gains = np.asarray(d["gains_re"], dtype=float) + 1j * np.asarray(
            d["gains_im"], dtype=float
        )
        return cls(
            gains=gains,
            delays=np.asarray(d["delays"]),
            dopplers=np.asarray(d["dopplers"]),
            kappa=np.asarray(d["kappa"]),
            l_max=int(d["l_max"]),
            k_max=int(d["k_max"]),
            trunc=np.asarray(d["trunc"]),
            frac_delay=np.asarray(d["frac_delay"]),
        )


def sample_paths(
    rng: np.random.Generator,
    p: int,
    l_max: int,
    k_max: int,
    fractional: bool = False,
    trunc: int = 2,
    fractional_delay: bool = False,
) -> PathSet:
    """Draw a random channel: gains CN(0, 1/P), uniform integer bins.

    ``fractional`` adds a uniform offset on [-1/2, 1/2] to each Doppler;
    ``fractional_delay`` does the same on the delay axis (emulation only).
    """
    if p < 1:
        raise ValueError(f"path count must be >= 1, got {p}")
    if l_max < 0 or k_max < 0:
        raise ValueError("l_max and k_max must be nonnegative")
    gains = (rng.standard_normal(p) + 1j * rng.standard_normal(p)) / np.sqrt(2.0 * p)
    delays = rng.integers(0, l_max + 1, size=p)
    dopplers = rng.integers(-k_max, k_max + 1, size=p)
    kappa = rng.uniform(-0.5, 0.5, size=p) if fractional else np.zeros(p)
    iota = rng.uniform(-0.5, 0.5, size=p) if fractional_delay else np.zeros(p)
    return PathSet(
        gains=gains,
        delays=delays,
        dopplers=dopplers,
        kappa=kappa,
        l_max=l_max,
        k_max=k_max,
        trunc=np.full(p, trunc),
        frac_delay=iota,
    )


def eta(q, kappa, n: int):
    """Doppler leakage kernel (1/N) sum_a exp(j 2 pi a (q+kappa) / N).

    Closed form (1 - e^{j2pi(q+kappa)}) / (N (1 - e^{j2pi(q+kappa)/N})) with
    the removable singularity at (q+kappa) == 0 (mod N) resolved to 1.
    Vectorized over ``q`` and/or ``kappa``.
    """
    if n < 1:
        raise ValueError(f"N must be >= 1, got {n}")
    x = np.asarray(q, dtype=float) + np.asarray(kappa, dtype=float)
    xm = x - n * np.round(x / n)  # representative of x mod N nearest zero
    singular = np.abs(xm) < 1e-12
    safe = np.where(singular, 1.0, x)
    num = 1.0 - np.exp(2j * np.pi * safe)
    den = n * (1.0 - np.exp(2j * np.pi * safe / n))
    out = np.where(singular, 1.0 + 0j, num / np.where(singular, 1.0, den))
    return out if out.ndim else complex(out)


def g2_magnitude(kprime, k_i, kappa_i, n: int):
    """|sin(pi d) / (N sin(pi d / N))| with d = kprime - k_i - kappa_i.

    Magnitude of the Doppler leakage at bin ``kprime`` for a path at
    ``k_i + kappa_i``; equals |eta| up to indexing and peaks at 1 on the
    nearest bin when the offset vanishes.
    """
    if n < 1:
        raise ValueError(f"N must be >= 1, got {n}")
    d = np.asarray(kprime, dtype=float) - np.asarray(k_i, dtype=float) - np.asarray(
        kappa_i, dtype=float
    )
    dm = d - n * np.round(d / n)
    singular = np.abs(dm) < 1e-12
    safe = np.where(singular, 1.0, d)
    out = np.where(
        singular,
        1.0,
        np.abs(np.sin(np.pi * safe)) / (n * np.abs(np.sin(np.pi * safe / n))),
    )
    return out if out.ndim else float(out)


def _delay_kernel(s, iota: float, m: int):
    """Delay-axis Dirichlet kernel for the fractional-delay emulation.

    Mirrors `eta` along delay: weight of the tap displaced by ``s`` bins for
    a path with fractional delay ``iota``; peaks near s = iota.
    """
    return eta(-np.asarray(s, dtype=float), iota, m)


def _check_truncation(paths: PathSet, cfg: FrameConfig) -> None:
    if paths.k_max + int(paths.trunc.max()) > (cfg.n - 1) / 2:
        raise ValueError(
            f"truncation exceeds grid: k_max + N_i = "
            f"{paths.k_max + int(paths.trunc.max())} > (N-1)/2 = {(cfg.n - 1) / 2}"
        )


def build_truncated_response(paths: PathSet, cfg: FrameConfig) -> np.ndarray:
    """Truncated tap grid, shape (l_max+1, 2*k_hat_max+1).

    Entry [l, k_hat_max + d] is the joint gain of delay bin l and Doppler
    offset d: each path deposits gains[i] * eta(q, kappa[i]) at
    d = dopplers[i] - q for q in [-N_i, N_i].  Paths with a fractional-delay
    emulation offset additionally spread along delay with the mirrored
    kernel; taps falling outside [0, l_max] are dropped.
    """
    _check_truncation(paths, cfg)
    k_hat = paths.k_hat_max
    h = np.zeros((paths.l_max + 1, 2 * k_hat + 1), dtype=complex)
    for i in range(paths.p):
        ni = int(paths.trunc[i])
        qs = np.arange(-ni, ni + 1)
        w_dopp = paths.gains[i] * eta(qs, paths.kappa[i], cfg.n)
        cols = k_hat + paths.dopplers[i] - qs
        if paths.frac_delay[i] == 0.0:
            h[paths.delays[i], cols] += w_dopp
        else:
            ss = np.arange(-ni, ni + 1)
            w_del = _delay_kernel(ss, paths.frac_delay[i], cfg.m)
            for s, wd in zip(ss, w_del):
                row = paths.delays[i] + s
                if 0 <= row <= paths.l_max:
                    h[row, cols] += wd * w_dopp
    return h


def response_vec(grid: np.ndarray) -> np.ndarray:
    """Column-major (delay-fastest) vectorization of a tap grid."""
    return np.asarray(grid).reshape(-1, order="F")


def response_grid(v: np.ndarray, l_max: int, k_hat_max: int) -> np.ndarray:
    v = np.asarray(v)
    shape = (l_max + 1, 2 * k_hat_max + 1)
    if v.size != shape[0] * shape[1]:
        raise ValueError(f"length {v.size} does not match tap grid {shape}")
    return v.reshape(shape, order="F")


def _stride_len(cfg: FrameConfig, stride: str) -> int:
    if stride == "stream":
        return cfg.block_len
    if stride == "block":
        return cfg.m
    raise ValueError(f"stride must be 'stream' or 'block', got {stride!r}")


def build_time_channel(
    paths: PathSet, cfg: FrameConfig, stride: str = "stream"
) -> np.ndarray:
    """Per-slot time-domain channel blocks, shape (N, M, M).

    Block n maps the M data samples of transmitted slot n to the M retained
    received samples:  H_n[p, p - l_i] += gains[i] * exp(j 2 pi
    (k_i+kappa_i) (n*S + p - l_i) / (M N)) for p >= l_i, with S the Doppler
    phase stride per slot (see module docstring).  Zero padding of at least
    l_max samples guarantees the blocks are exactly lower-triangular banded
    and the overall operator block-diagonal.
    """
    if cfg.zp_len < paths.l_max:
        raise ValueError(
            f"zp_len ({cfg.zp_len}) must cover the maximum delay ({paths.l_max})"
        )
    if np.any(paths.frac_delay != 0):
        raise ValueError(
            "fractional delay is an emulation on the tap grid; "
            "it has no time-domain realization"
        )
    s_len = _stride_len(cfg, stride)
    m, n = cfg.m, cfg.n
    blocks = np.zeros((n, m, m), dtype=complex)
    slots = np.arange(n)
    for i in range(paths.p):
        l_i = int(paths.delays[i])
        nu = (paths.dopplers[i] + paths.kappa[i]) / (m * n)
        rows = np.arange(l_i, m)
        # phase at global sample index n*S + p, referenced to the delayed sample
        phase = np.exp(2j * np.pi * nu * (slots[:, None] * s_len + rows[None, :] - l_i))
        blocks[:, rows, rows - l_i] += paths.gains[i] * phase
    return blocks


def build_dd_channel(h_t: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Dense MN x MN delay-Doppler operator (F_N kron I_M) H_T (F_N^H kron I_M).

    Row/column flat index is l + M*k (delay fastest), matching `frame.vec`.
    """
    h_t = np.asarray(h_t)
    if h_t.shape != (cfg.n, cfg.m, cfg.m):
        raise ValueError(
            f"time channel must have shape ({cfg.n}, {cfg.m}, {cfg.m}), got {h_t.shape}"
        )
    f_n = dft_matrix(cfg.n)
    out = np.einsum("an,nij,bn->aibj", f_n, h_t, f_n.conj(), optimize=True)
    return out.reshape(cfg.grid_size, cfg.grid_size)


def apply_dd_channel(h_t: np.ndarray, x_dd: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Apply the DD operator to a grid without materializing the dense matrix."""
    h_t = np.asarray(h_t)
    x = np.asarray(x_dd)
    if x.shape != (cfg.m, cfg.n):
        raise ValueError(f"x_dd must have shape ({cfg.m}, {cfg.n}), got {x.shape}")
    f_n = dft_matrix(cfg.n)
    s = x.astype(complex) @ f_n.conj().T
    y_t = np.einsum("nij,jn->in", h_t, s, optimize=True)
    return y_t @ f_n


def perturb_channel(
    h_dd: np.ndarray, epsilon: float, rng: np.random.Generator
) -> np.ndarray:
    """Channel-estimate error injection: H + E with E iid complex Gaussian.

    E is scaled so that E[||E||_F^2] = epsilon * ||H||_F^2 exactly, i.e.
    epsilon is the mean normalized estimate error energy.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    h = np.asarray(h_dd, dtype=complex)
    if epsilon == 0:
        return h.copy()
    entry_var = epsilon * float(np.sum(np.abs(h) ** 2)) / h.size
    e = (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)) * np.sqrt(
        entry_var / 2.0
    )
    return h + e


def noise_equivalent_error_power(h_dd: np.ndarray, epsilon: float, mn: int) -> float:
    """Per-entry interference power a perturbation of level epsilon induces.

    For unit-energy symbols the error term E x adds epsilon*||H||_F^2 / (MN)
    noise power per received entry; detectors that know epsilon fold this
    into their noise parameter.
    """
    return epsilon * float(np.sum(np.abs(np.asarray(h_dd)) ** 2)) / mn


def scalar_io_oracle(
    paths: PathSet,
    x_dd: np.ndarray,
    cfg: FrameConfig,
    pulse: str = "rect_zp",
    stride: str = "stream",
    trunc: str = "none",
    include_phase: bool = True,
) -> np.ndarray:
    """Noiseless received grid by direct per-tap summation.

    ``pulse="rect_zp"`` evaluates the rectangular-pulse relation with zero
    padding: circular in Doppler, truncating (no wrap) in delay, with the
    per-entry phase factor exp(j 2 pi (l - l_i)(k_i+kappa_i)/(MN)) unless
    ``include_phase=False``.  ``trunc="none"`` sums the full Doppler kernel
    (all N bins) with the stride-consistent effective offset, making the
    result exactly equal to the matrix chain; ``trunc="path"`` keeps
    2*N_i+1 kernel samples with the nominal offset — the estimation model
    that the pilot measurement matrix realizes.

    ``pulse="biorthogonal"`` evaluates the ideal-pulse relation instead:
    circular in both dimensions with the constant per-path phase
    exp(-j 2 pi l_i (k_i+kappa_i)/(MN)) and no per-entry phase.
    """
    x = np.asarray(x_dd)
    if x.shape != (cfg.m, cfg.n):
        raise ValueError(f"x_dd must have shape ({cfg.m}, {cfg.n}), got {x.shape}")
    if pulse not in ("rect_zp", "biorthogonal"):
        raise ValueError(f"pulse must be 'rect_zp' or 'biorthogonal', got {pulse!r}")
    if trunc not in ("none", "path"):
        raise ValueError(f"trunc must be 'none' or 'path', got {trunc!r}")
    m, n = cfg.m, cfg.n
    mn = m * n
    x = x.astype(complex)
    y = np.zeros_like(x)
    s_len = _stride_len(cfg, stride)
    for i in range(paths.p):
        l_i = int(paths.delays[i])
        k_i = int(paths.dopplers[i])
        nu = paths.dopplers[i] + paths.kappa[i]
        if trunc == "path":
            qs = np.arange(-int(paths.trunc[i]), int(paths.trunc[i]) + 1)
            kap = paths.kappa[i]
        elif pulse == "biorthogonal":
            # the ideal-pulse relation has no padding, hence no stride question
            qs = np.arange(n)
            kap = paths.kappa[i]
        else:
            qs = np.arange(n)
            # ZP samples advancing the phase displace the slot-rate kernel
            kap = paths.kappa[i] + nu * (s_len - m) / m
        w_dopp = paths.gains[i] * eta(qs, kap, n)

        if pulse == "biorthogonal":
            const = np.exp(-2j * np.pi * l_i * nu / mn)
            for q, wq in zip(qs, w_dopp):
                y += const * wq * np.roll(np.roll(x, k_i - q, axis=1), l_i, axis=0)
            continue

        if paths.frac_delay[i] == 0.0:
            spread = [(l_i, 1.0 + 0j)]
        else:
            ni = int(paths.trunc[i])
            ss = np.arange(-ni, ni + 1)
            w_del = _delay_kernel(ss, paths.frac_delay[i], cfg.m)
            # path-truncated mode mirrors the tap grid, which stops at l_max
            hi = paths.l_max if trunc == "path" else m - 1
            spread = [(l_i + int(s), wd) for s, wd in zip(ss, w_del) if 0 <= l_i + s <= hi]
        for l_t, wd in spread:
            rows = np.arange(l_t, m)
            if include_phase:
                phase = np.exp(2j * np.pi * (rows - l_t) * nu / mn)
            else:
                phase = np.ones(rows.size)
            for q, wq in zip(qs, w_dopp):
                shifted = np.roll(x, k_i - q, axis=1)
                y[rows, :] += (wd * wq) * phase[:, None] * shifted[: m - l_t, :]
    return y


def taps_to_paths(grid: np.ndarray, threshold: float = 0.0) -> PathSet:
    """Re-embed a tap grid as integer-Doppler paths (one per kept tap).

    Inverse of `build_truncated_response` for integer channels; used to turn
    an estimated tap grid back into time/DD channel operators.  Taps with
    magnitude <= ``threshold`` are dropped (at least one is always kept).
    """
    g = np.asarray(grid, dtype=complex)
    if g.ndim != 2 or g.shape[1] % 2 != 1:
        raise ValueError(f"tap grid must be (l_max+1, 2*k_hat_max+1), got {g.shape}")
    l_max = g.shape[0] - 1
    k_hat = (g.shape[1] - 1) // 2
    rows, cols = np.nonzero(np.abs(g) > threshold)
    if rows.size == 0:
        flat = int(np.argmax(np.abs(g)))
        rows, cols = np.array([flat // g.shape[1]]), np.array([flat % g.shape[1]])
    return PathSet(
        gains=g[rows, cols],
        delays=rows,
        dopplers=cols - k_hat,
        kappa=np.zeros(rows.size),
        l_max=l_max,
        k_max=k_hat,
        trunc=np.zeros(rows.size, dtype=int),
    )
