import tempfile
from pathlib import Path

import cv2
import numpy as np
from django.test import SimpleTestCase

from sred_app.core import (MODE_N2N, MODE_N2STACK, ColorFrame, DepthFrame, FrameSequence,
                           NormalizedFrame, denormalize, load_color_png, load_depth_png,
                           load_manifest, normalize, read_manifest, save_color_png,
                           save_depth_png, save_manifest, split_samples, variant_samples,
                           window_training_samples, write_manifest)
from sred_app.errors import ConfigError, DataError, DimensionError, FormatError


class DepthFrameTests(SimpleTestCase):

    def test_hole_count(self):
        frame = DepthFrame(np.array([[0, 5], [7, 0]], dtype=np.uint16))
        self.assertEqual(frame.hole_count(), 2)
        self.assertEqual(frame.shape, (2, 2))

    def test_data_is_read_only(self):
        frame = DepthFrame(np.ones((3, 3), dtype=np.uint16))
        with self.assertRaises(ValueError):
            frame.data[0, 0] = 5

    def test_rejects_out_of_range(self):
        with self.assertRaises(DataError):
            DepthFrame(np.array([[70000.0]]))
        with self.assertRaises(DimensionError):
            DepthFrame(np.zeros(4, dtype=np.uint16))

    def test_normalized_frame_zeroes_invalid(self):
        nf = NormalizedFrame(np.full((2, 2), 0.5), np.array([[True, False], [True, True]]))
        self.assertEqual(nf.data[0, 1], 0.0)


class NormalizationTests(SimpleTestCase):

    def test_round_trip_within_one_millimetre(self):
        rng = np.random.default_rng(3)
        data = rng.integers(1, 8000, size=(16, 16)).astype(np.uint16)
        data[2, 3] = 0
        frame = DepthFrame(data)
        back = denormalize(normalize(frame))
        self.assertLessEqual(int(np.max(np.abs(back.data.astype(int) - data.astype(int)))), 1)
        self.assertEqual(back.data[2, 3], 0)

    def test_values_beyond_max_depth_clip(self):
        nf = normalize(DepthFrame(np.array([[9000]], dtype=np.uint16)), 8000)
        self.assertEqual(nf.data[0, 0], 1.0)

    def test_non_positive_max_depth(self):
        with self.assertRaises(ConfigError):
            normalize(DepthFrame(np.ones((2, 2), dtype=np.uint16)), 0)


class WindowTests(SimpleTestCase):

    def test_dilated_windows(self):
        samples = window_training_samples(10)
        self.assertEqual(len(samples), 6)
        self.assertEqual(samples[0].inputs, (0, 2, 4))
        self.assertEqual(samples[0].target, 3)
        for s in samples:
            self.assertNotIn(s.target, s.inputs)

    def test_five_frames_give_one_window(self):
        samples = window_training_samples(5)
        self.assertEqual([(s.inputs, s.target) for s in samples], [((0, 2, 4), 3)])

    def test_short_sequence(self):
        with self.assertRaises(DataError):
            window_training_samples(4)

    def test_variant_windows(self):
        n2stack = variant_samples(6, MODE_N2STACK)
        self.assertEqual((n2stack[0].inputs, n2stack[0].target), ((0, 1, 2), 3))
        n2n = variant_samples(3, MODE_N2N)
        self.assertEqual([(s.inputs, s.target) for s in n2n], [((0,), 1), ((1,), 2)])

    def test_unknown_mode(self):
        with self.assertRaises(ConfigError):
            variant_samples(10, 'noise2void')

    def test_split_sizes_and_determinism(self):
        samples = window_training_samples(104)
        train, val, test = split_samples(samples, 0.1, 0.04, seed=7)
        self.assertEqual((len(train), len(val), len(test)), (86, 10, 4))
        again = split_samples(samples, 0.1, 0.04, seed=7)
        self.assertEqual(train, again[0])
        self.assertEqual(set(train) | set(val) | set(test), set(samples))

    def test_split_rejects_bad_fraction(self):
        with self.assertRaises(ConfigError):
            split_samples(window_training_samples(20), 0.0, 0.04)


class FrameIOTests(SimpleTestCase):

    def test_depth_png_round_trip(self):
        data = np.arange(12, dtype=np.uint16).reshape(3, 4) * 1000
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'd.png'
            save_depth_png(DepthFrame(data), path)
            np.testing.assert_array_equal(load_depth_png(path).data, data)

    def test_depth_png_format_errors_name_the_property(self):
        with tempfile.TemporaryDirectory() as tmp:
            eight = Path(tmp) / 'eight.png'
            cv2.imwrite(str(eight), np.zeros((4, 4), dtype=np.uint8))
            with self.assertRaisesMessage(FormatError, 'bit depth 8'):
                load_depth_png(eight)
            rgb = Path(tmp) / 'rgb.png'
            cv2.imwrite(str(rgb), np.zeros((4, 4, 3), dtype=np.uint16))
            with self.assertRaisesMessage(FormatError, 'channel count 3'):
                load_depth_png(rgb)

    def test_missing_file(self):
        with self.assertRaises(DataError):
            load_depth_png('/nonexistent/depth.png')

    def test_color_png_keeps_rgb_order(self):
        data = np.zeros((2, 2, 3), dtype=np.uint8)
        data[..., 0] = 200
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'c.png'
            save_color_png(ColorFrame(data), path)
            np.testing.assert_array_equal(load_color_png(path).data, data)


class ManifestTests(SimpleTestCase):

    def _sequence(self):
        depth = tuple(DepthFrame(np.full((4, 4), 1000 + i, dtype=np.uint16)) for i in range(3))
        color = tuple(ColorFrame(np.full((4, 4, 3), 10 * i, dtype=np.uint8)) for i in range(3))
        return FrameSequence(depth, color, indices=(2, 5, 9))

    def test_save_and_load(self):
        seq = self._sequence()
        with tempfile.TemporaryDirectory() as tmp:
            manifest = save_manifest(seq, tmp, seed=11)
            self.assertTrue(manifest.read_text().startswith('# seed: 11'))
            loaded = load_manifest(manifest)
        self.assertEqual(loaded.indices, (2, 5, 9))
        self.assertEqual(loaded.depth[1].data[0, 0], 1001)
        self.assertTrue(loaded.has_color(2))

    def test_descending_indices_rejected(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_manifest(Path(tmp) / 'm.txt', [(3, 'a.png', None), (1, 'b.png', None)])
            with self.assertRaises(FormatError):
                read_manifest(path)

    def test_sequence_indices_must_ascend(self):
        frames = (DepthFrame(np.ones((2, 2), dtype=np.uint16)),) * 2
        with self.assertRaises(DataError):
            FrameSequence(frames, indices=(4, 4))
