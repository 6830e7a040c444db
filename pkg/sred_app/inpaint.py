"""
Fast Marching depth completion.

``inpaint_guided`` fills holes in the order given by a colour-guided priority
(distance to the initial hole boundary mixed with local guide similarity);
each hole pixel receives the weighted average of first-order extrapolations
from the known pixels of its square window, with weights

    w(p, q) = w_dst(p, q)^2 * w_g(p, q) * conf(q)
    w_dst   = d0^2 / |p - q|^2
    w_g     = exp(-|G(p) - G(q)|^2 / (2 sigma_g^2))
    conf    = 1 / (1 + 2 T_out(q))

``inpaint_classic`` is the unguided Telea march (direction, level and distance
weights) used by the FMM+BF baseline.

Both runs visit pixels in a fixed order so that a run is reproducible; ties
in the queue break on (priority, row, column). The guided run evaluates its
windows with numpy (strided window views over padded arrays); the Telea
march stays on plain Python floats.
"""
import heapq
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import DepthFrame, UINT16_MAX
from .errors import ConfigError, DataError, DimensionError
from .registration import RegisteredColor

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-3
INF = float('inf')

_NEIGHBORS4 = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True)
class InpaintConfig:
    radius: int = 5
    lam: float = 0.5
    sigma_g: Optional[float] = None
    d0: float = 1.0
    use_gradient: bool = True

    def __post_init__(self):
        if self.radius < 1:
            raise ConfigError(f"inpaint radius must be >= 1, got {self.radius}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"inpaint lambda must lie in [0, 1], got {self.lam}")
        if not self.d0 > 0:
            raise ConfigError(f"inpaint d0 must be positive, got {self.d0}")
        if self.sigma_g is not None and not self.sigma_g > 0:
            raise ConfigError(f"inpaint sigma_g must be positive, got {self.sigma_g}")


@dataclass(frozen=True)
class DistanceMap:
    T: np.ndarray
    T_max: float


def hole_mask(depth: DepthFrame) -> np.ndarray:
    """The initial hole set as a read-only boolean grid."""
    mask = depth.data == 0
    mask.setflags(write=False)
    return mask


def _boundary(mask: np.ndarray) -> np.ndarray:
    """Hole pixels with at least one known 4-neighbour."""
    known = np.pad(~mask, 1, constant_values=False)
    near_known = known[:-2, 1:-1] | known[2:, 1:-1] | known[1:-1, :-2] | known[1:-1, 2:]
    return mask & near_known


# ─── Distance map ────────────────────────────────────────────────────────────

def _eikonal(T, accepted, r: int, c: int, h: int, w: int) -> float:
    a = INF
    for cc in (c - 1, c + 1):
        if 0 <= cc < w and accepted[r][cc] and T[r][cc] < a:
            a = T[r][cc]
    b = INF
    for rr in (r - 1, r + 1):
        if 0 <= rr < h and accepted[rr][c] and T[rr][c] < b:
            b = T[rr][c]
    if a == INF and b == INF:
        return INF
    if a == INF or b == INF or abs(a - b) >= 1.0:
        return min(a, b) + 1.0
    return (a + b + math.sqrt(2.0 - (a - b) * (a - b))) / 2.0


def compute_distance_map(mask: np.ndarray) -> DistanceMap:
    """Fast-marching distance of every hole pixel to the initial hole boundary.

    Known pixels have T = 0, hole pixels next to a known pixel T = 1, and the
    remaining hole pixels are reached with the first-order upwind update.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.all():
        raise DataError("distance map needs at least one known pixel")
    h, w = mask.shape
    if not mask.any():
        T = np.zeros((h, w))
        T.setflags(write=False)
        return DistanceMap(T, 0.0)

    T = np.where(mask, INF, 0.0).tolist()
    accepted = (~mask).tolist()
    boundary = _boundary(mask)
    fixed = boundary.tolist()
    heap = []
    for r, c in zip(*np.nonzero(boundary)):
        r, c = int(r), int(c)
        T[r][c] = 1.0
        heap.append((1.0, r, c))
    heapq.heapify(heap)

    while heap:
        t, r, c = heapq.heappop(heap)
        if accepted[r][c] or t > T[r][c]:
            continue
        accepted[r][c] = True
        for dr, dc in _NEIGHBORS4:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h and 0 <= nc < w) or accepted[nr][nc] or fixed[nr][nc]:
                continue
            t_new = _eikonal(T, accepted, nr, nc, h, w)
            if t_new < T[nr][nc]:
                T[nr][nc] = t_new
                heapq.heappush(heap, (t_new, nr, nc))

    arr = np.array(T, dtype=np.float64)
    arr.setflags(write=False)
    return DistanceMap(arr, float(arr.max()))


# ─── Guided weights and priority ─────────────────────────────────────────────

def guide_array(guide) -> np.ndarray:
    """Guide colours scaled to [0, 1], shape (H, W, 3)."""
    data = guide.color.data if isinstance(guide, RegisteredColor) else np.asarray(guide)
    return data.astype(np.float64) / 255.0


def resolve_sigma(G: np.ndarray, cfg: InpaintConfig) -> float:
    if cfg.sigma_g is not None:
        return float(cfg.sigma_g)
    return max(float(np.std(G)), SIGMA_FLOOR)


def _guide_similarity(gp, gq, two_sigma2: float) -> float:
    e0 = gp[0] - gq[0]
    e1 = gp[1] - gq[1]
    e2 = gp[2] - gq[2]
    return math.exp(-(e0 * e0 + e1 * e1 + e2 * e2) / two_sigma2)


def _pair_weight(dr: int, dc: int, wg: float, t_q: float, d0: float) -> float:
    w_dst = d0 * d0 / (dr * dr + dc * dc)
    conf = 1.0 / (1.0 + 2.0 * t_q)
    return w_dst ** 2 * wg * conf


def _priority_value(t_p: float, t_max: float, s_g: float, lam: float) -> float:
    dist_term = t_p / t_max if t_max > 0 else 0.0
    return (1.0 - lam) * dist_term + lam * (1.0 - s_g)


def weight(p: Tuple[int, int], q: Tuple[int, int], guide, dist: DistanceMap,
           cfg: InpaintConfig = InpaintConfig()) -> float:
    """Contribution weight of known pixel q to hole pixel p (row, column pairs)."""
    if tuple(p) == tuple(q):
        raise ValueError("weight is undefined for p == q")
    G = guide_array(guide)
    sigma = resolve_sigma(G, cfg)
    wg = _guide_similarity(G[p].tolist(), G[q].tolist(), 2.0 * sigma * sigma)
    return _pair_weight(p[0] - q[0], p[1] - q[1], wg, float(dist.T[q]), cfg.d0)


def priority(p: Tuple[int, int], guide, dist: DistanceMap,
             cfg: InpaintConfig = InpaintConfig(), known: Optional[np.ndarray] = None) -> float:
    """Pr(p); lower values are filled first. ``known`` defaults to the initially known set."""
    G = guide_array(guide)
    sigma = resolve_sigma(G, cfg)
    if known is None:
        known = dist.T == 0
    known = np.array(known, dtype=bool)
    known[p] = False
    field = _GuideField(G, known, cfg.radius, 2.0 * sigma * sigma)
    s_g = field.similarity(np.array([p[0]]), np.array([p[1]]))[0]
    return _priority_value(float(dist.T[p]), dist.T_max, float(s_g), cfg.lam)


# Window stacks gathered per similarity call; bounds memory on large boundaries.
_CHUNK = 2048


def _one_sided(lo_ok, hi_ok, lo, mid, hi) -> np.ndarray:
    return np.where(lo_ok & hi_ok, (hi - lo) / 2.0,
                    np.where(hi_ok, hi - mid, np.where(lo_ok, mid - lo, 0.0)))


class _GuideField:
    """Guide colours and the known mask, padded by the window radius.

    ``known`` is a view into the padded mask, so marking a pixel known there
    updates every window read afterwards.
    """

    def __init__(self, G: np.ndarray, known: np.ndarray, radius: int, two_sigma2: float):
        self.G = G
        self.radius = radius
        self.two_sigma2 = two_sigma2
        pad = ((radius, radius), (radius, radius))
        size = 2 * radius + 1
        self.known_pad = np.pad(np.asarray(known, dtype=bool), pad, constant_values=False)
        self.known = self.known_pad[radius:-radius, radius:-radius]
        self._g_windows = sliding_window_view(np.pad(G, pad + ((0, 0),)), (size, size), axis=(0, 1))
        self._k_windows = sliding_window_view(self.known_pad, (size, size))

    def similarity(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """S_g per pixel: mean guide similarity to the known pixels of its window (pixel itself unknown)."""
        out = np.empty(len(rows))
        for start in range(0, len(rows), _CHUNK):
            r, c = rows[start:start + _CHUNK], cols[start:start + _CHUNK]
            diff = self._g_windows[r, c] - self.G[r, c][:, :, None, None]
            d2 = (diff * diff).sum(axis=1)
            known = self._k_windows[r, c]
            total = np.where(known, np.exp(-d2 / self.two_sigma2), 0.0).sum(axis=(1, 2))
            n = known.sum(axis=(1, 2))
            out[start:start + len(r)] = np.where(n > 0, total / np.maximum(n, 1), 0.0)
        return out


class GuidedInpainter:
    """One guided inpainting run: hole set, distance map, values and the priority queue."""

    def __init__(self, depth: DepthFrame, guide, cfg: InpaintConfig = InpaintConfig()):
        G = guide_array(guide)
        if G.shape[:2] != depth.shape:
            raise DimensionError(f"guide {G.shape[1]}x{G.shape[0]} does not match depth "
                                 f"{depth.width}x{depth.height}")
        self.cfg = cfg
        self.mask = hole_mask(depth)
        if self.mask.all():
            raise DataError("cannot inpaint a frame without any valid depth pixel")
        self.dist = compute_distance_map(self.mask)
        self.sigma = resolve_sigma(G, cfg)
        self.field = _GuideField(G, ~self.mask, cfg.radius, 2.0 * self.sigma * self.sigma)
        self.known = self.field.known
        rad = cfg.radius
        self._values_pad = np.pad(depth.data.astype(np.float64), rad)
        self.values = self._values_pad[rad:-rad, rad:-rad]
        self.order = []

    def priorities(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        lam, t_max = self.cfg.lam, self.dist.T_max
        dist_term = self.dist.T[rows, cols] / t_max if t_max > 0 else np.zeros(len(rows))
        return (1.0 - lam) * dist_term + lam * (1.0 - self.field.similarity(rows, cols))

    def gradients(self, rows: np.ndarray, cols: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(d/dcol, d/drow) of the current values over known pixels."""
        rad = self.cfg.radius
        K, I = self.field.known_pad, self._values_pad
        pr, pc = rows + rad, cols + rad
        mid = I[pr, pc]
        gx = _one_sided(K[pr, pc - 1], K[pr, pc + 1], I[pr, pc - 1], mid, I[pr, pc + 1])
        gy = _one_sided(K[pr - 1, pc], K[pr + 1, pc], I[pr - 1, pc], mid, I[pr + 1, pc])
        return gx, gy

    def fill(self, r: int, c: int) -> float:
        rad = self.cfg.radius
        wr, wc = np.nonzero(self.field.known_pad[r:r + 2 * rad + 1, c:c + 2 * rad + 1])
        qr, qc = wr + (r - rad), wc + (c - rad)
        dr, dc = r - qr, c - qc
        d0 = self.cfg.d0
        w_dst = d0 * d0 / (dr * dr + dc * dc)
        diff = self.field.G[qr, qc] - self.field.G[r, c]
        wg = np.exp(-(diff * diff).sum(axis=1) / self.field.two_sigma2)
        conf = 1.0 / (1.0 + 2.0 * self.dist.T[qr, qc])
        w = w_dst ** 2 * wg * conf
        known_values = self.values[qr, qc]
        est = known_values
        if self.cfg.use_gradient:
            gx, gy = self.gradients(qr, qc)
            est = known_values + (gx * dc + gy * dr)
        den = float(w.sum())
        # exp() can underflow to 0 for a tiny sigma_g; fall back to the plain mean
        value = float((w * est).sum()) / den if den > 0 else float(known_values.mean())
        self.values[r, c] = value
        self.known[r, c] = True
        self.order.append((r, c))
        return value

    def _boundary_near(self, r: int, c: int) -> Tuple[np.ndarray, np.ndarray]:
        """Unknown pixels of the window around (r, c) with a known 4-neighbour."""
        rad = self.cfg.radius
        h, w = self.mask.shape
        r0, r1 = max(0, r - rad) + rad, min(h, r + rad + 1) + rad
        c0, c1 = max(0, c - rad) + rad, min(w, c + rad + 1) + rad
        K = self.field.known_pad
        touch = (K[r0 - 1:r1 - 1, c0:c1] | K[r0 + 1:r1 + 1, c0:c1]
                 | K[r0:r1, c0 - 1:c1 - 1] | K[r0:r1, c0 + 1:c1 + 1])
        rows, cols = np.nonzero(~K[r0:r1, c0:c1] & touch)
        return rows + (r0 - rad), cols + (c0 - rad)

    def run(self) -> DepthFrame:
        version = np.zeros(self.mask.shape, dtype=np.int64)
        rows, cols = np.nonzero(_boundary(self.mask))
        heap = list(zip(self.priorities(rows, cols).tolist(), rows.tolist(), cols.tolist(),
                        [0] * len(rows)))
        heapq.heapify(heap)

        while heap:
            _, r, c, ver = heapq.heappop(heap)
            if self.known[r, c] or ver != version[r, c]:
                continue
            self.fill(r, c)
            rows, cols = self._boundary_near(r, c)
            if not len(rows):
                continue
            version[rows, cols] += 1
            for entry in zip(self.priorities(rows, cols).tolist(), rows.tolist(), cols.tolist(),
                             version[rows, cols].tolist()):
                heapq.heappush(heap, entry)

        out = np.clip(np.rint(self.values), 1, UINT16_MAX)
        out = np.where(self.mask, out, self.values)
        return DepthFrame(out.astype(np.uint16))


def inpaint_guided(depth: DepthFrame, guide, cfg: InpaintConfig = InpaintConfig()) -> DepthFrame:
    """Fill every hole of ``depth`` using the registered colour ``guide``."""
    if not depth.hole_mask().any():
        G = guide_array(guide)
        if G.shape[:2] != depth.shape:
            raise DimensionError("guide does not match depth dimensions")
        return DepthFrame(depth.data)
    inpainter = GuidedInpainter(depth, guide, cfg)
    result = inpainter.run()
    logger.debug("Guided inpainting filled %d pixels (T_max %.3f, sigma_g %.4f)",
                 len(inpainter.order), inpainter.dist.T_max, inpainter.sigma)
    return result


# ─── Classic Telea march ─────────────────────────────────────────────────────

_KNOWN, _BAND, _INSIDE = 0, 1, 2


class _TeleaMarch:
    def __init__(self, depth: DepthFrame, radius: int):
        self.h, self.w = depth.shape
        self.radius = radius
        mask = depth.data == 0
        self.mask = mask
        self.values = depth.data.astype(np.float64).tolist()
        self.T = np.where(mask, INF, 0.0).tolist()
        self.flags = np.where(mask, _INSIDE, _KNOWN).tolist()

    def _solve(self, r1, c1, r2, c2) -> float:
        h, w, flags, T = self.h, self.w, self.flags, self.T
        if not (0 <= r1 < h and 0 <= c1 < w) or not (0 <= r2 < h and 0 <= c2 < w):
            return INF
        known1 = flags[r1][c1] == _KNOWN
        known2 = flags[r2][c2] == _KNOWN
        if known1 and known2:
            t1, t2 = T[r1][c1], T[r2][c2]
            d = 2.0 - (t1 - t2) * (t1 - t2)
            if d > 0.0:
                root = math.sqrt(d)
                s = (t1 + t2 - root) / 2.0
                if s >= t1 and s >= t2:
                    return s
                s += root
                if s >= t1 and s >= t2:
                    return s
                return INF
        if known1:
            return 1.0 + T[r1][c1]
        if known2:
            return 1.0 + T[r2][c2]
        return INF

    def _arrival(self, r, c) -> float:
        return min(self._solve(r - 1, c, r, c - 1), self._solve(r - 1, c, r, c + 1),
                   self._solve(r + 1, c, r, c - 1), self._solve(r + 1, c, r, c + 1))

    def _available(self, r, c) -> bool:
        return 0 <= r < self.h and 0 <= c < self.w and self.flags[r][c] != _INSIDE

    def _central(self, grid, r, c) -> Tuple[float, float]:
        """(d/drow, d/dcol) of ``grid`` over non-inside pixels, one-sided at transitions."""
        up, down = self._available(r - 1, c), self._available(r + 1, c)
        if up and down:
            gr = (grid[r + 1][c] - grid[r - 1][c]) / 2.0
        elif down:
            gr = grid[r + 1][c] - grid[r][c]
        elif up:
            gr = grid[r][c] - grid[r - 1][c]
        else:
            gr = 0.0
        left, right = self._available(r, c - 1), self._available(r, c + 1)
        if left and right:
            gc = (grid[r][c + 1] - grid[r][c - 1]) / 2.0
        elif right:
            gc = grid[r][c + 1] - grid[r][c]
        elif left:
            gc = grid[r][c] - grid[r][c - 1]
        else:
            gc = 0.0
        return gr, gc

    def _fill(self, r, c) -> None:
        rad = self.radius
        t_p = self.T[r][c]
        tgr, tgc = self._central(self.T, r, c)
        num = 0.0
        den = 0.0
        for qr in range(max(0, r - rad), min(self.h, r + rad + 1)):
            for qc in range(max(0, c - rad), min(self.w, c + rad + 1)):
                if self.flags[qr][qc] == _INSIDE:
                    continue
                dr, dc = r - qr, c - qc
                norm2 = dr * dr + dc * dc
                norm = math.sqrt(norm2)
                if norm > rad:
                    continue
                direction = abs(dr * tgr + dc * tgc) / norm
                if direction == 0.0:
                    direction = 1e-6
                level = 1.0 / (1.0 + abs(self.T[qr][qc] - t_p))
                dst = 1.0 / norm2
                w = direction * dst * level
                igr, igc = self._central(self.values, qr, qc)
                num += w * (self.values[qr][qc] + (igr * dr + igc * dc))
                den += w
        self.values[r][c] = num / den

    def run(self) -> DepthFrame:
        heap = []
        band = ~self.mask & (np.pad(self.mask, 1)[:-2, 1:-1] | np.pad(self.mask, 1)[2:, 1:-1]
                             | np.pad(self.mask, 1)[1:-1, :-2] | np.pad(self.mask, 1)[1:-1, 2:])
        for r, c in zip(*np.nonzero(band)):
            r, c = int(r), int(c)
            self.flags[r][c] = _BAND
            heap.append((0.0, r, c))
        heapq.heapify(heap)
        while heap:
            _, r, c = heapq.heappop(heap)
            if self.flags[r][c] == _KNOWN:
                continue
            self.flags[r][c] = _KNOWN
            for dr, dc in _NEIGHBORS4:
                nr, nc = r + dr, c + dc
                if not (0 <= nr < self.h and 0 <= nc < self.w) or self.flags[nr][nc] != _INSIDE:
                    continue
                t_new = self._arrival(nr, nc)
                self.T[nr][nc] = t_new
                self._fill(nr, nc)
                self.flags[nr][nc] = _BAND
                heapq.heappush(heap, (t_new, nr, nc))
        out = np.clip(np.rint(np.array(self.values)), 1, UINT16_MAX)
        return DepthFrame(np.where(self.mask, out, np.asarray(self.values)).astype(np.uint16))


def inpaint_classic(depth: DepthFrame, radius: int = 5) -> DepthFrame:
    """Telea fast-marching fill with the original direction/level/distance weights."""
    if radius < 1:
        raise ConfigError(f"inpaint radius must be >= 1, got {radius}")
    mask = depth.hole_mask()
    if mask.all():
        raise DataError("cannot inpaint a frame without any valid depth pixel")
    if not mask.any():
        return DepthFrame(depth.data)
    return _TeleaMarch(depth, radius).run()
