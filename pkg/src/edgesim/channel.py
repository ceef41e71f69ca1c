"""Block-fading channel generation and the link rate function.

Every quantity here is a power gain. Rayleigh fading therefore appears
directly as exponentially distributed gains, there is no amplitude-domain
sampling step. Logarithms are natural logs throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "FadingSpec",
    "ChannelState",
    "sample_state",
    "sample_block",
    "rate",
    "uniform_means",
]


def _mean_vector(value, n: int, name: str) -> np.ndarray:
    """Broadcast a scalar or per-link sequence of means to a length-n vector."""
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name}: expected a scalar or {n} values, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError(f"{name}: all means must be finite and strictly positive")
    return arr


@dataclass(frozen=True, eq=False)
class FadingSpec:
    """Static description of the fading environment for one network.

    Attributes:
        n_links: number of edge device pairs N.
        direct_mean: mean direct power gain per link (scalar or length N).
        interference_mean: mean interference power gain per link toward the
            core access point (scalar or length N).
        n_external: number of external interfering links.
        external_means: mean gain of each external link (length n_external).
        external_power: transmit power of the external interferers.
        noise_power: receiver noise power.
    """

    n_links: int
    direct_mean: float | Sequence[float] = 2.0
    interference_mean: float | Sequence[float] = 1.0
    n_external: int = 0
    external_means: Sequence[float] = field(default_factory=tuple)
    external_power: float = 1.0
    noise_power: float = 1.0

    def __post_init__(self):
        if int(self.n_links) < 1:
            raise ValueError("n_links must be at least 1")
        object.__setattr__(self, "n_links", int(self.n_links))
        object.__setattr__(
            self, "direct_mean", _mean_vector(self.direct_mean, self.n_links, "direct_mean")
        )
        object.__setattr__(
            self,
            "interference_mean",
            _mean_vector(self.interference_mean, self.n_links, "interference_mean"),
        )
        if int(self.n_external) < 0:
            raise ValueError("n_external must be nonnegative")
        object.__setattr__(self, "n_external", int(self.n_external))
        ext = np.array(self.external_means, dtype=float).reshape(-1)
        if ext.shape != (self.n_external,):
            raise ValueError(
                f"external_means: expected {self.n_external} values, got {ext.size}"
            )
        if ext.size and (not np.all(np.isfinite(ext)) or np.any(ext <= 0.0)):
            raise ValueError("external_means: all means must be finite and strictly positive")
        object.__setattr__(self, "external_means", ext)
        if not (np.isfinite(self.external_power) and self.external_power > 0.0):
            raise ValueError("external_power must be finite and strictly positive")
        if not (np.isfinite(self.noise_power) and self.noise_power > 0.0):
            raise ValueError("noise_power must be finite and strictly positive")


@dataclass(frozen=True, eq=False)
class ChannelState:
    """One slot's channel draw.

    Attributes:
        h: direct power gains, length N.
        g: interference power gains toward the core access point, length N.
        i_ext: aggregate external interference power at each receiver, length N.
    """

    h: np.ndarray
    g: np.ndarray
    i_ext: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        g = np.asarray(self.g, dtype=float)
        i_ext = np.asarray(self.i_ext, dtype=float)
        if not (h.shape == g.shape == i_ext.shape) or h.ndim != 1:
            raise ValueError("h, g, i_ext must be 1-d vectors of identical length")
        for name, arr in (("h", h), ("g", g), ("i_ext", i_ext)):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
                raise ValueError(f"{name}: entries must be finite and nonnegative")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "i_ext", i_ext)

    @property
    def n_links(self) -> int:
        return self.h.shape[0]


def sample_state(spec: FadingSpec, rng: np.random.Generator) -> ChannelState:
    """Draw one fresh channel state.

    Gains are independent across links and across calls. The aggregate
    external interference at link i is the sum over external links of
    external_power times an exponential draw with that link's mean gain.

    Args:
        spec: validated fading description.
        rng: the caller's random stream; successive calls with an identically
            seeded stream reproduce the identical state sequence.

    Returns:
        A ChannelState with vectors of length spec.n_links.
    """
    h = rng.exponential(spec.direct_mean)
    g = rng.exponential(spec.interference_mean)
    if spec.n_external:
        gains = rng.exponential(
            spec.external_means[:, None], size=(spec.n_external, spec.n_links)
        )
        i_ext = spec.external_power * gains.sum(axis=0)
    else:
        i_ext = np.zeros(spec.n_links)
    return ChannelState(h=h, g=g, i_ext=i_ext)


def sample_block(
    spec: FadingSpec, link_rngs: Sequence[np.random.Generator], n_slots: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw a block of channel states, one independent stream per link.

    Each link's draws come only from its own generator (consumed in a fixed
    order: direct gains, interference gains, then external gains), so adding
    links never perturbs the sequences of existing ones.

    Returns:
        (h, g, i_ext) arrays of shape (n_slots, n_links); row t is slot t.
    """
    n = spec.n_links
    if len(link_rngs) != n:
        raise ValueError(f"expected {n} link generators, got {len(link_rngs)}")
    h = np.empty((n_slots, n))
    g = np.empty((n_slots, n))
    i_ext = np.zeros((n_slots, n))
    for i in range(n):
        r = link_rngs[i]
        h[:, i] = r.exponential(spec.direct_mean[i], size=n_slots)
        g[:, i] = r.exponential(spec.interference_mean[i], size=n_slots)
        if spec.n_external:
            gains = r.exponential(
                spec.external_means[:, None], size=(spec.n_external, n_slots)
            )
            i_ext[:, i] = spec.external_power * gains.sum(axis=0)
    return h, g, i_ext


def rate(h_i, i_ext_i, power: float, noise: float):
    """Shannon rate of a link in nats per slot: log(1 + power*h / (i_ext + noise)).

    Accepts scalars or arrays (broadcast elementwise). Monotone increasing in
    h_i and decreasing in i_ext_i.
    """
    if not (power > 0.0 and np.isfinite(power)):
        raise ValueError("power must be finite and strictly positive")
    if not (noise > 0.0 and np.isfinite(noise)):
        raise ValueError("noise must be finite and strictly positive")
    h_i = np.asarray(h_i, dtype=float)
    i_ext_i = np.asarray(i_ext_i, dtype=float)
    out = np.log1p(power * h_i / (i_ext_i + noise))
    return float(out) if out.ndim == 0 else out


def uniform_means(rng: np.random.Generator, n: int, low: float, high: float) -> np.ndarray:
    """Draw n per-link mean gains uniformly from [low, high], held fixed afterwards.

    Used to build heterogeneous fading specs (per-link means chosen once at
    setup time) and external-interferer mean gains.
    """
    if not (0.0 < low <= high):
        raise ValueError("need 0 < low <= high")
    return rng.uniform(low, high, size=n)
