import tempfile
from pathlib import Path

import numpy as np
import torch
from django.test import SimpleTestCase

from sred_app.core import MODE_N2N, ColorFrame, DepthFrame
from sred_app.denoiser import (WEIGHTS_MAGIC, NetworkConfig, build_model, filter_count,
                               filter_evaluations_per_pixel, forward, infer, inference_windows,
                               load_weights, make_target, masked_l1, parameter_count, save_weights)
from sred_app.errors import ConfigError, DataError, DimensionError, FormatError
from sred_app.registration import CameraRig


def _zero_model(cfg=NetworkConfig()):
    model = build_model(cfg)
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()
    return model


class ArchitectureTests(SimpleTestCase):

    def test_filter_and_parameter_counts(self):
        model = build_model()
        self.assertEqual(filter_count(model), 1729)
        self.assertEqual(parameter_count(model), 1_260_865)

    def test_single_frame_mode(self):
        model = build_model(NetworkConfig.for_mode(MODE_N2N))
        self.assertEqual(model.cfg.in_channels, 1)
        self.assertEqual(parameter_count(model), 1_260_289)

    def test_filter_evaluations_per_pixel(self):
        self.assertEqual(filter_evaluations_per_pixel(), 189.625)

    def test_bad_filter_table(self):
        with self.assertRaises(ConfigError):
            NetworkConfig(filters=(32, 32, 48))
        with self.assertRaises(ConfigError):
            NetworkConfig(kernel_size=4)
        with self.assertRaises(ConfigError):
            NetworkConfig(filters=(32,), down_blocks=0, up_blocks=0)

    def test_kinect_resolution_keeps_shape(self):
        model = build_model()
        with torch.no_grad():
            out = forward(model, torch.rand(3, 424, 512))
        self.assertEqual(tuple(out.shape), (1, 424, 512))

    def test_zero_parameters_give_identity(self):
        x = torch.rand(2, 3, 40, 56)
        with torch.no_grad():
            out = _zero_model()(x)
        torch.testing.assert_close(out, x[:, -1:])

    def test_wrong_channel_count(self):
        with self.assertRaises(DimensionError):
            build_model()(torch.rand(1, 2, 32, 32))

    def test_same_seed_same_initialization(self):
        a, b = build_model(seed=3), build_model(seed=3)
        c = build_model(seed=4)
        for (name, pa), pb in zip(a.state_dict().items(), b.state_dict().values()):
            self.assertTrue(torch.equal(pa, pb), name)
        self.assertFalse(torch.equal(a.first[0].weight, c.first[0].weight))

    def test_initialization_does_not_touch_global_rng(self):
        torch.manual_seed(123)
        expected = torch.rand(4)
        torch.manual_seed(123)
        build_model(seed=9)
        torch.testing.assert_close(torch.rand(4), expected)

    def test_gradients_match_finite_differences(self):
        model = build_model(seed=1).double()
        x = torch.rand(1, 3, 32, 32, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
        params = list(model.parameters())
        gen = torch.Generator().manual_seed(1)
        direction = [torch.randn(p.shape, dtype=torch.float64, generator=gen) for p in params]

        loss = (model(x) ** 2).sum()
        grads = torch.autograd.grad(loss, params)
        analytic = sum(float((g * d).sum()) for g, d in zip(grads, direction))

        eps = 1e-6
        with torch.no_grad():
            for p, d in zip(params, direction):
                p.add_(eps * d)
            plus = float((model(x) ** 2).sum())
            for p, d in zip(params, direction):
                p.sub_(2 * eps * d)
            minus = float((model(x) ** 2).sum())
        numeric = (plus - minus) / (2 * eps)
        self.assertLess(abs(numeric - analytic), 1e-3 * max(1.0, abs(analytic)))


class LossTests(SimpleTestCase):

    def test_identical_prediction(self):
        y = torch.rand(2, 1, 8, 8)
        self.assertEqual(float(masked_l1(y, y, torch.ones_like(y))), 0.0)

    def test_only_valid_pixels_count(self):
        pred = torch.zeros(1, 1, 2, 2)
        target = torch.tensor([[[[1.0, 5.0], [1.0, 5.0]]]])
        valid = torch.tensor([[[[1.0, 0.0], [1.0, 0.0]]]])
        self.assertEqual(float(masked_l1(pred, target, valid)), 1.0)

    def test_nothing_valid(self):
        y = torch.rand(1, 1, 4, 4)
        self.assertEqual(float(masked_l1(y, y + 1, torch.zeros_like(y))), 0.0)


class WeightFileTests(SimpleTestCase):

    def test_round_trip(self):
        model = build_model(seed=2)
        with tempfile.TemporaryDirectory() as tmp:
            path = save_weights(model, Path(tmp) / 'w.sredw')
            self.assertTrue(path.read_bytes().startswith(WEIGHTS_MAGIC))
            loaded = load_weights(path)
        self.assertEqual(loaded.cfg, model.cfg)
        for name, tensor in model.state_dict().items():
            self.assertTrue(torch.equal(loaded.state_dict()[name], tensor), name)

    def test_single_frame_round_trip(self):
        model = build_model(NetworkConfig.for_mode(MODE_N2N))
        with tempfile.TemporaryDirectory() as tmp:
            loaded = load_weights(save_weights(model, Path(tmp) / 'w.sredw'))
        self.assertEqual(loaded.cfg.in_channels, 1)

    def test_bad_magic(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'w.sredw'
            path.write_bytes(b'NOTSRED' + bytes(64))
            with self.assertRaises(FormatError):
                load_weights(path)

    def test_single_entry_filter_table(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'w.sredw'
            path.write_bytes(WEIGHTS_MAGIC + np.asarray([1, 32, 3, 3, 0], dtype='<u4').tobytes())
            with self.assertRaisesMessage(FormatError, 'filter table'):
                load_weights(path)

    def test_truncated_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_weights(build_model(), Path(tmp) / 'w.sredw')
            path.write_bytes(path.read_bytes()[:-10])
            with self.assertRaises(FormatError):
                load_weights(path)

    def test_missing_file(self):
        with self.assertRaises(DataError):
            load_weights('/nonexistent/weights.sredw')


class InferenceTests(SimpleTestCase):

    def test_zero_model_returns_newest_frame(self):
        rng = np.random.default_rng(0)
        frames = [DepthFrame(rng.integers(500, 6000, size=(20, 30)).astype(np.uint16)) for _ in range(3)]
        out = infer(_zero_model(), *frames)
        diff = np.abs(out.data.astype(int) - frames[2].data.astype(int))
        self.assertLessEqual(int(diff.max()), 1)

    def test_frames_must_share_dimensions(self):
        a = DepthFrame(np.ones((8, 8), dtype=np.uint16))
        b = DepthFrame(np.ones((8, 9), dtype=np.uint16))
        with self.assertRaises(DimensionError):
            infer(_zero_model(), a, a, b)

    def test_windows(self):
        self.assertEqual(inference_windows(5, 'sred'), [(0, 1, 2), (1, 2, 3), (2, 3, 4)])
        self.assertEqual(len(inference_windows(5, MODE_N2N)), 5)


class TargetTests(SimpleTestCase):

    def test_hole_free_frame_is_unchanged(self):
        depth = DepthFrame(np.random.default_rng(1).integers(900, 1100, size=(12, 12)).astype(np.uint16))
        color = ColorFrame(np.full((12, 12, 3), 100, dtype=np.uint8))
        target = make_target(depth, color, CameraRig.identity(12, 12))
        np.testing.assert_array_equal(target.data, depth.data)

    def test_constant_frame_fills_constant(self):
        data = np.full((12, 12), 1500, dtype=np.uint16)
        data[4:8, 3:9] = 0
        color = ColorFrame(np.random.default_rng(2).integers(0, 256, size=(12, 12, 3)).astype(np.uint8))
        target = make_target(DepthFrame(data), color, CameraRig.identity(12, 12))
        self.assertTrue((target.data == 1500).all())
