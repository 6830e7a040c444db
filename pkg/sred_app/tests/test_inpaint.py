import math
from unittest import mock

import numpy as np
from django.test import SimpleTestCase
from scipy import ndimage

from sred_app.classic import fmm_bf
from sred_app.core import ColorFrame, DepthFrame
from sred_app.errors import ConfigError, DataError, DimensionError
from sred_app.inpaint import (GuidedInpainter, InpaintConfig, compute_distance_map, inpaint_classic,
                              inpaint_guided, priority, weight)
from sred_app.registration import RegisteredColor

INF = float('inf')


def _guide(rgb):
    rgb = np.asarray(rgb, dtype=np.uint8)
    return RegisteredColor(ColorFrame(rgb), np.ones(rgb.shape[:2], dtype=bool))


def _uniform_guide(h, w, value=128):
    return _guide(np.full((h, w, 3), value, dtype=np.uint8))


# ─── Brute-force references ──────────────────────────────────────────────────

def oracle_distance(mask):
    """Fast marching with a full scan for the next pixel instead of a heap."""
    h, w = len(mask), len(mask[0])
    T = [[INF if mask[r][c] else 0.0 for c in range(w)] for r in range(h)]
    accepted = [[not mask[r][c] for c in range(w)] for r in range(h)]
    fixed = [[False] * w for _ in range(h)]
    for r in range(h):
        for c in range(w):
            if mask[r][c] and any(0 <= r + dr < h and 0 <= c + dc < w and not mask[r + dr][c + dc]
                                  for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1))):
                T[r][c] = 1.0
                fixed[r][c] = True

    def solve(r, c):
        a = min([T[r][cc] for cc in (c - 1, c + 1) if 0 <= cc < w and accepted[r][cc]] or [INF])
        b = min([T[rr][c] for rr in (r - 1, r + 1) if 0 <= rr < h and accepted[rr][c]] or [INF])
        if a == INF and b == INF:
            return INF
        if a == INF or b == INF or abs(a - b) >= 1.0:
            return min(a, b) + 1.0
        return (a + b + math.sqrt(2.0 - (a - b) * (a - b))) / 2.0

    while True:
        pending = [(T[r][c], r, c) for r in range(h) for c in range(w)
                   if not accepted[r][c] and T[r][c] < INF]
        if not pending:
            break
        _, r, c = min(pending)
        accepted[r][c] = True
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and not accepted[nr][nc] and not fixed[nr][nc]:
                t = solve(nr, nc)
                if t < T[nr][nc]:
                    T[nr][nc] = t
    return T


def oracle_guided(depth, rgb, radius, lam, sigma, d0, use_gradient):
    """Fill loop that re-sorts every boundary pixel by (Pr, row, col) after each fill."""
    h, w = depth.shape
    mask = (depth == 0).tolist()
    T = oracle_distance(mask)
    t_max = max(max(row) for row in T)
    I = depth.astype(np.float64).tolist()
    known = [[not m for m in row] for row in mask]
    G = (rgb.astype(np.float64) / 255.0).tolist()
    two_sigma2 = 2.0 * sigma * sigma

    def wg(p, q):
        e0 = G[p[0]][p[1]][0] - G[q[0]][q[1]][0]
        e1 = G[p[0]][p[1]][1] - G[q[0]][q[1]][1]
        e2 = G[p[0]][p[1]][2] - G[q[0]][q[1]][2]
        return math.exp(-(e0 * e0 + e1 * e1 + e2 * e2) / two_sigma2)

    def window(r, c):
        for qr in range(max(0, r - radius), min(h, r + radius + 1)):
            for qc in range(max(0, c - radius), min(w, c + radius + 1)):
                if (qr, qc) != (r, c) and known[qr][qc]:
                    yield qr, qc

    def pr(r, c):
        sims = [wg((r, c), q) for q in window(r, c)]
        total = 0.0
        for s in sims:
            total += s
        s_g = total / len(sims) if sims else 0.0
        dist_term = T[r][c] / t_max if t_max > 0 else 0.0
        return (1.0 - lam) * dist_term + lam * (1.0 - s_g)

    def grad(r, c):
        def axis(lo_ok, hi_ok, lo, mid, hi):
            if lo_ok and hi_ok:
                return (hi - lo) / 2.0
            if hi_ok:
                return hi - mid
            if lo_ok:
                return mid - lo
            return 0.0
        gx = axis(c > 0 and known[r][c - 1], c < w - 1 and known[r][c + 1],
                  I[r][c - 1] if c > 0 else 0.0, I[r][c], I[r][c + 1] if c < w - 1 else 0.0)
        gy = axis(r > 0 and known[r - 1][c], r < h - 1 and known[r + 1][c],
                  I[r - 1][c] if r > 0 else 0.0, I[r][c], I[r + 1][c] if r < h - 1 else 0.0)
        return gx, gy

    while True:
        boundary = [(r, c) for r in range(h) for c in range(w) if not known[r][c] and any(
            0 <= r + dr < h and 0 <= c + dc < w and known[r + dr][c + dc]
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)))]
        if not boundary:
            break
        ranked = sorted((pr(r, c), r, c) for r, c in boundary)
        _, r, c = ranked[0]
        num = den = plain = 0.0
        n = 0
        for qr, qc in window(r, c):
            w_dst = d0 * d0 / ((r - qr) * (r - qr) + (c - qc) * (c - qc))
            wq = w_dst ** 2 * wg((r, c), (qr, qc)) * (1.0 / (1.0 + 2.0 * T[qr][qc]))
            est = I[qr][qc]
            if use_gradient:
                gx, gy = grad(qr, qc)
                est = est + (gx * (c - qc) + gy * (r - qr))
            num += wq * est
            den += wq
            plain += I[qr][qc]
            n += 1
        I[r][c] = num / den if den > 0 else plain / n
        known[r][c] = True
    out = np.clip(np.rint(np.array(I)), 1, 65535)
    return np.where(depth == 0, out, depth).astype(np.uint16)


def _fixture(seed):
    rng = np.random.default_rng(seed)
    h = w = 16
    if seed % 3 == 0:
        ys, xs = np.mgrid[0:h, 0:w]
        depth = (1000 + 37 * xs + 11 * ys).astype(np.uint16)
    else:
        depth = rng.integers(500, 3000, size=(h, w)).astype(np.uint16)
    n_holes = int(rng.integers(1, 21))
    if seed % 2 == 0:
        r0, c0 = rng.integers(1, 12, size=2)
        block = [(r0 + i, c0 + j) for i in range(4) for j in range(5)][:n_holes]
    else:
        flat = rng.choice(h * w, size=n_holes, replace=False)
        block = [(int(f) // w, int(f) % w) for f in flat]
    for r, c in block:
        depth[r, c] = 0
    rgb = rng.integers(0, 256, size=(h, w, 3)).astype(np.uint8)
    return depth, rgb


# ─── Distance map ────────────────────────────────────────────────────────────

class DistanceMapTests(SimpleTestCase):

    def test_no_holes(self):
        dist = compute_distance_map(np.zeros((4, 4), dtype=bool))
        self.assertEqual(dist.T_max, 0.0)
        self.assertFalse(dist.T.any())

    def test_single_hole_pixel(self):
        mask = np.zeros((3, 3), dtype=bool)
        mask[1, 1] = True
        self.assertEqual(compute_distance_map(mask).T[1, 1], 1.0)

    def test_centered_square_hole_against_euclidean_distance(self):
        mask = np.zeros((7, 7), dtype=bool)
        mask[2:5, 2:5] = True
        dist = compute_distance_map(mask)
        exact = ndimage.distance_transform_edt(mask)
        self.assertLess(float(np.max(np.abs(dist.T - exact))), 0.5)
        self.assertAlmostEqual(dist.T[3, 3], (2 + math.sqrt(2)) / 2)

    def test_eikonal_consistency(self):
        rng = np.random.default_rng(4)
        mask = rng.random((20, 20)) < 0.6
        mask[0, 0] = False
        T = compute_distance_map(mask).T
        self.assertTrue((T >= 0).all())
        self.assertLessEqual(float(np.max(np.abs(np.diff(T, axis=0)))), 1.0 + 1e-12)
        self.assertLessEqual(float(np.max(np.abs(np.diff(T, axis=1)))), 1.0 + 1e-12)

    def test_matches_full_scan_march(self):
        rng = np.random.default_rng(9)
        mask = rng.random((12, 12)) < 0.5
        mask[5, 5] = False
        np.testing.assert_array_equal(compute_distance_map(mask).T, np.array(oracle_distance(mask.tolist())))

    def test_all_hole_mask(self):
        with self.assertRaises(DataError):
            compute_distance_map(np.ones((3, 3), dtype=bool))


# ─── Weights and priority ────────────────────────────────────────────────────

class WeightTests(SimpleTestCase):

    def setUp(self):
        self.dist = compute_distance_map(np.zeros((4, 4), dtype=bool))

    def test_unit_weight(self):
        self.assertEqual(weight((1, 1), (1, 2), _uniform_guide(4, 4), self.dist, InpaintConfig()), 1.0)

    def test_diagonal_neighbour_squares_distance_weight(self):
        self.assertEqual(weight((1, 1), (2, 2), _uniform_guide(4, 4), self.dist, InpaintConfig()), 0.25)

    def test_guide_difference_of_two_sigma_squared(self):
        rgb = np.zeros((4, 4, 3), dtype=np.uint8)
        rgb[1, 2, 0] = 100
        sigma = (100 / 255.0) / math.sqrt(2)
        w = weight((1, 1), (1, 2), _guide(rgb), self.dist, InpaintConfig(sigma_g=sigma))
        self.assertAlmostEqual(w, math.exp(-1), places=12)

    def test_same_pixel(self):
        with self.assertRaises(ValueError):
            weight((1, 1), (1, 1), _uniform_guide(4, 4), self.dist)

    def test_config_ranges(self):
        with self.assertRaises(ConfigError):
            InpaintConfig(lam=1.5)
        with self.assertRaises(ConfigError):
            InpaintConfig(radius=0)


class PriorityTests(SimpleTestCase):
    # 4x7 frame with a 3-column hole strip: edge columns T = 1, middle column T = 2
    def setUp(self):
        mask = np.zeros((4, 7), dtype=bool)
        mask[:, 2:5] = True
        self.dist = compute_distance_map(mask)
        self.rgb = np.zeros((4, 7, 3), dtype=np.uint8)

    def test_strip_distances(self):
        self.assertEqual(self.dist.T_max, 2.0)
        self.assertEqual(self.dist.T[0, 2], 1.0)
        self.assertEqual(self.dist.T[0, 3], 2.0)

    def test_distance_only(self):
        pr = priority((0, 3), _guide(self.rgb), self.dist, InpaintConfig(lam=0.0, radius=1))
        self.assertEqual(pr, 1.0)

    def test_similarity_only(self):
        pr = priority((1, 2), _guide(self.rgb), self.dist, InpaintConfig(lam=1.0, radius=1))
        self.assertEqual(pr, 0.0)

    def test_even_mix(self):
        rgb = self.rgb.copy()
        rgb[1, 1] = 255
        cfg = InpaintConfig(lam=0.5, radius=1, sigma_g=1e-3)
        self.assertEqual(priority((0, 2), _guide(rgb), self.dist, cfg), 0.5)


# ─── Guided inpainting ───────────────────────────────────────────────────────

class GuidedInpaintTests(SimpleTestCase):

    def test_matches_brute_force_reference(self):
        configs = [
            dict(radius=5, lam=0.5, sigma_g=0.2, d0=1.0, use_gradient=True),
            dict(radius=3, lam=0.0, sigma_g=0.35, d0=1.0, use_gradient=True),
            dict(radius=2, lam=1.0, sigma_g=0.1, d0=2.0, use_gradient=False),
        ]
        for seed in range(24):
            depth, rgb = _fixture(seed)
            params = configs[seed % len(configs)]
            with self.subTest(seed=seed):
                got = inpaint_guided(DepthFrame(depth), _guide(rgb), InpaintConfig(**params))
                expected = oracle_guided(depth, rgb, params['radius'], params['lam'],
                                         params['sigma_g'], params['d0'], params['use_gradient'])
                np.testing.assert_array_equal(got.data, expected)

    def test_ramp_with_square_hole_and_uniform_guide(self):
        ys, xs = np.mgrid[0:16, 0:16]
        depth = (1200 + 20 * xs + 5 * ys).astype(np.uint16)
        depth[6:9, 6:9] = 0
        rgb = np.full((16, 16, 3), 77, dtype=np.uint8)
        cfg = InpaintConfig(sigma_g=0.5)
        got = inpaint_guided(DepthFrame(depth), _guide(rgb), cfg)
        expected = oracle_guided(depth, rgb, 5, 0.5, 0.5, 1.0, True)
        np.testing.assert_array_equal(got.data, expected)

    def test_constant_depth_fills_constant(self):
        depth = np.full((10, 10), 1000, dtype=np.uint16)
        depth[2:6, 3:8] = 0
        out = inpaint_guided(DepthFrame(depth), _guide(np.random.default_rng(0).integers(
            0, 256, size=(10, 10, 3))))
        self.assertTrue((out.data == 1000).all())

    def test_no_holes_is_identity(self):
        depth = np.random.default_rng(1).integers(1, 5000, size=(8, 8)).astype(np.uint16)
        out = inpaint_guided(DepthFrame(depth), _uniform_guide(8, 8))
        np.testing.assert_array_equal(out.data, depth)

    def test_range_without_gradient(self):
        rng = np.random.default_rng(2)
        depth = rng.integers(900, 1100, size=(16, 16)).astype(np.uint16)
        depth[rng.random((16, 16)) < 0.4] = 0
        known = depth[depth > 0]
        out = inpaint_guided(DepthFrame(depth), _uniform_guide(16, 16), InpaintConfig(use_gradient=False))
        self.assertGreaterEqual(int(out.data.min()), int(known.min()))
        self.assertLessEqual(int(out.data.max()), int(known.max()))

    def test_order_follows_distance_without_guide_term(self):
        depth = np.full((14, 14), 1500, dtype=np.uint16)
        depth[3:11, 2:12] = 0
        inpainter = GuidedInpainter(DepthFrame(depth), _uniform_guide(14, 14), InpaintConfig(lam=0.0))
        inpainter.run()
        order_t = [inpainter.dist.T[r, c] for r, c in inpainter.order]
        self.assertEqual(len(order_t), 80)
        self.assertTrue(all(b >= a for a, b in zip(order_t, order_t[1:])))

    def test_deterministic(self):
        depth, rgb = _fixture(5)
        a = inpaint_guided(DepthFrame(depth), _guide(rgb))
        b = inpaint_guided(DepthFrame(depth), _guide(rgb))
        np.testing.assert_array_equal(a.data, b.data)

    def test_all_hole_frame(self):
        with self.assertRaises(DataError):
            inpaint_guided(DepthFrame(np.zeros((4, 4), dtype=np.uint16)), _uniform_guide(4, 4))

    def test_guide_dimension_mismatch(self):
        depth = np.ones((4, 4), dtype=np.uint16)
        depth[1, 1] = 0
        with self.assertRaises(DimensionError):
            inpaint_guided(DepthFrame(depth), _uniform_guide(5, 4))


class WindowBatchTests(SimpleTestCase):
    """Window sums evaluated for many pixels at once."""

    def _frame(self):
        rng = np.random.default_rng(11)
        depth = rng.integers(800, 4000, size=(40, 48)).astype(np.uint16)
        depth[rng.random((40, 48)) < 0.1] = 0
        return DepthFrame(depth), _guide(rng.integers(0, 256, size=(40, 48, 3)))

    def test_batch_priorities_match_single_pixel_priority(self):
        depth, guide = self._frame()
        cfg = InpaintConfig(sigma_g=0.25)
        inpainter = GuidedInpainter(depth, guide, cfg)
        rows, cols = np.nonzero(depth.hole_mask())
        batch = inpainter.priorities(rows, cols)
        for k in range(0, len(rows), 7):
            p = (int(rows[k]), int(cols[k]))
            with self.subTest(pixel=p):
                self.assertAlmostEqual(batch[k], priority(p, guide, inpainter.dist, cfg), places=12)

    def test_chunk_size_does_not_change_the_result(self):
        depth, guide = self._frame()
        whole = inpaint_guided(depth, guide)
        with mock.patch('sred_app.inpaint._CHUNK', 5):
            chunked = inpaint_guided(depth, guide)
        np.testing.assert_array_equal(whole.data, chunked.data)
        self.assertEqual(whole.hole_count(), 0)


# ─── Classic inpainting ──────────────────────────────────────────────────────

def oracle_classic(depth, radius):
    """Telea march with a full scan of the narrow band instead of a heap."""
    KNOWN, BAND, INSIDE = 0, 1, 2
    h, w = depth.shape
    I = depth.astype(np.float64).tolist()
    flags = [[INSIDE if depth[r, c] == 0 else KNOWN for c in range(w)] for r in range(h)]
    T = [[INF if depth[r, c] == 0 else 0.0 for c in range(w)] for r in range(h)]
    inb = lambda r, c: 0 <= r < h and 0 <= c < w  # noqa: E731
    for r in range(h):
        for c in range(w):
            if flags[r][c] == KNOWN and any(inb(r + dr, c + dc) and depth[r + dr, c + dc] == 0
                                            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1))):
                flags[r][c] = BAND

    def solve(r1, c1, r2, c2):
        if not inb(r1, c1) or not inb(r2, c2):
            return INF
        k1, k2 = flags[r1][c1] == KNOWN, flags[r2][c2] == KNOWN
        if k1 and k2:
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
        if k1:
            return 1.0 + T[r1][c1]
        if k2:
            return 1.0 + T[r2][c2]
        return INF

    def avail(r, c):
        return inb(r, c) and flags[r][c] != INSIDE

    def central(grid, r, c):
        out = []
        for (lr, lc), (hr, hc) in (((r - 1, c), (r + 1, c)), ((r, c - 1), (r, c + 1))):
            lo, hi = avail(lr, lc), avail(hr, hc)
            if lo and hi:
                out.append((grid[hr][hc] - grid[lr][lc]) / 2.0)
            elif hi:
                out.append(grid[hr][hc] - grid[r][c])
            elif lo:
                out.append(grid[r][c] - grid[lr][lc])
            else:
                out.append(0.0)
        return out

    while True:
        band = [(T[r][c], r, c) for r in range(h) for c in range(w) if flags[r][c] == BAND]
        if not band:
            break
        _, r, c = min(band)
        flags[r][c] = KNOWN
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if not inb(nr, nc) or flags[nr][nc] != INSIDE:
                continue
            T[nr][nc] = min(solve(nr - 1, nc, nr, nc - 1), solve(nr - 1, nc, nr, nc + 1),
                            solve(nr + 1, nc, nr, nc - 1), solve(nr + 1, nc, nr, nc + 1))
            tgr, tgc = central(T, nr, nc)
            num = den = 0.0
            for qr in range(max(0, nr - radius), min(h, nr + radius + 1)):
                for qc in range(max(0, nc - radius), min(w, nc + radius + 1)):
                    if flags[qr][qc] == INSIDE:
                        continue
                    vr, vc = nr - qr, nc - qc
                    norm2 = vr * vr + vc * vc
                    norm = math.sqrt(norm2)
                    if norm > radius:
                        continue
                    direction = abs(vr * tgr + vc * tgc) / norm
                    if direction == 0.0:
                        direction = 1e-6
                    level = 1.0 / (1.0 + abs(T[qr][qc] - T[nr][nc]))
                    wq = direction * (1.0 / norm2) * level
                    igr, igc = central(I, qr, qc)
                    num += wq * (I[qr][qc] + (igr * vr + igc * vc))
                    den += wq
            I[nr][nc] = num / den
            flags[nr][nc] = BAND
    out = np.clip(np.rint(np.array(I)), 1, 65535)
    return np.where(depth == 0, out, depth).astype(np.uint16)


class ClassicInpaintTests(SimpleTestCase):

    def test_ramp_matches_reference(self):
        ys, xs = np.mgrid[0:16, 0:16]
        depth = (800 + 15 * xs + 9 * ys).astype(np.uint16)
        depth[5:9, 4:7] = 0
        np.testing.assert_array_equal(inpaint_classic(DepthFrame(depth), 5).data,
                                      oracle_classic(depth, 5))

    def test_random_fixtures_match_reference(self):
        for seed in range(6):
            depth, _ = _fixture(seed)
            with self.subTest(seed=seed):
                np.testing.assert_array_equal(inpaint_classic(DepthFrame(depth), 3).data,
                                              oracle_classic(depth, 3))

    def test_constant_fill(self):
        depth = np.full((9, 9), 2500, dtype=np.uint16)
        depth[2:7, 2:7] = 0
        self.assertTrue((inpaint_classic(DepthFrame(depth)).data == 2500).all())

    def test_identity_without_holes(self):
        depth = np.arange(1, 17, dtype=np.uint16).reshape(4, 4)
        np.testing.assert_array_equal(inpaint_classic(DepthFrame(depth)).data, depth)


class CompletenessTests(SimpleTestCase):

    def test_no_holes_remain_even_at_ninety_percent(self):
        for seed in range(4):
            rng = np.random.default_rng(100 + seed)
            depth = rng.integers(600, 4000, size=(24, 24)).astype(np.uint16)
            depth[rng.random((24, 24)) < 0.9] = 0
            depth[int(rng.integers(24)), int(rng.integers(24))] = 1234
            frame = DepthFrame(depth)
            guide = _guide(rng.integers(0, 256, size=(24, 24, 3)))
            with self.subTest(seed=seed):
                self.assertEqual(inpaint_guided(frame, guide).hole_count(), 0)
                self.assertEqual(inpaint_classic(frame).hole_count(), 0)
                self.assertEqual(fmm_bf(frame).hole_count(), 0)

    def test_single_valid_pixel(self):
        depth = np.zeros((6, 6), dtype=np.uint16)
        depth[0, 5] = 700
        frame = DepthFrame(depth)
        self.assertTrue((inpaint_guided(frame, _uniform_guide(6, 6)).data == 700).all())
        self.assertTrue((inpaint_classic(frame).data == 700).all())
