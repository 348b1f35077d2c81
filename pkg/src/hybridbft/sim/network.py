"""Latency model: region classes, jitter, partial synchrony, stragglers, rate cap."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .events import ms, sec


@dataclass
class NetworkConfig:
    preset: str = "wan"
    regions: int = 4
    intra_ms: float = 2.0
    inter_ms: float = 80.0
    latency_matrix_ms: list | None = None  # optional regions x regions override
    jitter: float = 0.1  # multiplicative, latency * U[1, 1 + jitter]
    gst_s: float = 0.0
    pre_gst_extra_ms: float = 0.0  # extra U[0, x] delay on messages sent before GST
    delta_ms: float = 2000.0  # post-GST bound on honest message delay
    stragglers: dict = field(default_factory=dict)  # replica id -> latency factor
    bytes_per_sec: float = 0.0  # 0 disables the size term
    rate_cap: int = 0  # discrete messages per (src, dst, window); 0 = unlimited
    rate_window_ms: float = 1000.0

    @classmethod
    def lan(cls, **kw) -> "NetworkConfig":
        base = dict(preset="lan", regions=1, intra_ms=0.5, inter_ms=0.5, delta_ms=100.0)
        base.update(kw)
        return cls(**base)

    def region_matrix_ms(self) -> np.ndarray:
        if self.latency_matrix_ms is not None:
            mat = np.asarray(self.latency_matrix_ms, dtype=float)
            if mat.shape != (self.regions, self.regions):
                raise ValueError("latency_matrix_ms must be regions x regions")
            return mat
        mat = np.full((self.regions, self.regions), float(self.inter_ms))
        np.fill_diagonal(mat, float(self.intra_ms))
        return mat

    def validate(self) -> None:
        if self.regions < 1:
            raise ValueError("network.regions must be >= 1")
        if self.jitter < 0 or self.delta_ms <= 0:
            raise ValueError("network.jitter must be >= 0 and delta_ms > 0")
        worst = float(self.region_matrix_ms().max()) * (1 + self.jitter)
        factors = sorted([1.0, 1.0] + [float(v) for v in self.stragglers.values()])
        worst *= factors[-1] * factors[-2]
        if worst > self.delta_ms:
            raise ValueError(f"network.delta_ms={self.delta_ms} is below the worst link latency {worst:.1f} ms")


class NetworkModel:
    """Samples per-message latencies between replicas (ids < n) and clients (ids >= n)."""

    def __init__(self, cfg: NetworkConfig, n: int, rng: np.random.Generator):
        self.cfg = cfg
        self.n = n
        self.rng = rng
        self.gst = sec(cfg.gst_s)
        self.delta = ms(cfg.delta_ms)
        self.extra = ms(cfg.pre_gst_extra_ms)
        self._region_ns = cfg.region_matrix_ms() * 1e6
        self._factor = {int(k): float(v) for k, v in cfg.stragglers.items()}
        idx = np.arange(n) % cfg.regions
        fac = np.array([self._factor.get(r, 1.0) for r in range(n)])
        self.base = self._region_ns[idx][:, idx] * fac[:, None] * fac[None, :]
        np.fill_diagonal(self.base, 0.0)
        self.window = max(1, ms(cfg.rate_window_ms))
        self._rate: dict = {}
        self.dropped = 0
        self.sent = 0
        self.phase_messages = 0
        self.max_post_gst_delay = 0
        self._buf = np.empty(0)
        self._pos = 0

    def _uniform(self) -> float:
        # scalar draws from a Generator are slow; pull them in blocks
        if self._pos >= len(self._buf):
            self._buf = self.rng.random(4096)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)

    def region(self, node: int) -> int:
        return (node if node < self.n else node - self.n) % self.cfg.regions

    def base_ns(self, src: int, dst: int) -> float:
        if src == dst:
            return 0.0
        if src < self.n and dst < self.n:
            return float(self.base[src, dst])
        lat = self._region_ns[self.region(src), self.region(dst)]
        return lat * self._factor.get(src, 1.0) * self._factor.get(dst, 1.0)

    def _size_ns(self, nbytes: int) -> int:
        if nbytes <= 0 or self.cfg.bytes_per_sec <= 0:
            return 0
        return int(nbytes * 1e9 / self.cfg.bytes_per_sec)

    def latency(self, src: int, dst: int, t: int, nbytes: int = 0) -> int:
        if src == dst:
            return 0
        lat = int(self.base_ns(src, dst) * (1.0 + self.cfg.jitter * self._uniform()))
        lat += self._size_ns(nbytes)
        if t < self.gst:
            lat += int(self.extra * self._uniform())
        else:
            lat = min(lat, self.delta)
            self.max_post_gst_delay = max(self.max_post_gst_delay, lat)
        return max(lat, 1)

    def send(self, src: int, dst: int, t: int, nbytes: int = 0) -> int | None:
        """Arrival time of a discrete message, or None if the rate cap drops it."""
        self.sent += 1
        if self.cfg.rate_cap > 0 and src != dst:
            key = (src, dst, t // self.window)
            count = self._rate.get(key, 0) + 1
            self._rate[key] = count
            if count > self.cfg.rate_cap:
                self.dropped += 1
                return None
        return t + self.latency(src, dst, t, nbytes)

    def sample_matrix(self, nbytes_row: int = -1, row: int = -1) -> tuple:
        """Jittered n x n replica latencies plus the pre-GST extra draw."""
        n = self.n
        lat = self.base * (1.0 + self.cfg.jitter * self.rng.random((n, n)))
        if row >= 0 and nbytes_row > 0:
            lat[row] += self._size_ns(nbytes_row)
            lat[row, row] = 0.0
        extra = self.extra * self.rng.random((n, n)) if self.extra > 0 else None
        return lat.astype(np.int64), extra

    def effective(self, lat: np.ndarray, extra, send: np.ndarray) -> np.ndarray:
        """Apply the partial-synchrony rule row by row given each sender's send time."""
        out = lat.copy()
        pre = send < self.gst
        if extra is not None and pre.any():
            out[pre] += extra[pre].astype(np.int64)
        post = ~pre
        if post.any():
            out[post] = np.minimum(out[post], self.delta)
        np.fill_diagonal(out, 0)
        return np.ascontiguousarray(out, dtype=np.int64)

    def count_phase(self, k: int) -> None:
        self.phase_messages += k
