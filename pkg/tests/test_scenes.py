import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_array_equal

from scenes import (
    CubeFormatError,
    HSICube,
    SceneError,
    block_labels,
    cube_from_bytes,
    cube_to_bytes,
    export_split_csv,
    extract_patch,
    extract_patches,
    generate_scene,
    load_cube,
    make_scene_spec,
    nearest_signature_accuracy,
    noise_residual,
    reflect_indices,
    save_cube,
    split_train_test,
)


def small_spec(**overrides):
    options = dict(num_classes=2, bands=6, rows=8, cols=8, num_true_bases=3, region_size=4, seed=1)
    options.update(overrides)
    return make_scene_spec(**options)


class TestSceneGeneration(unittest.TestCase):

    def test_noiseless_scene_is_exact(self):
        """Test that zero noise gives the class signatures and perfect 1-NN accuracy."""
        spec = small_spec(noise_amplitude=0.0, white_noise_sigma=0.0)
        cube = generate_scene(spec)
        for row in range(cube.rows):
            for col in range(cube.cols):
                assert_array_equal(cube.radiance[:, row, col], spec.signatures[cube.labels[row, col] - 1])
        self.assertEqual(nearest_signature_accuracy(cube, spec.signatures), 1.0)

    def test_same_seed_same_cube(self):
        """Test byte-identical cubes for equal seeds and different cubes otherwise."""
        first = cube_to_bytes(generate_scene(small_spec()))
        self.assertEqual(first, cube_to_bytes(generate_scene(small_spec())))
        self.assertNotEqual(first, cube_to_bytes(generate_scene(small_spec(seed=2))))

    def test_noise_lies_in_true_subspace(self):
        """Test a zero residual outside span(true bases) without white noise."""
        spec = small_spec(white_noise_sigma=0.0)
        cube = generate_scene(spec)
        for row, col in [(0, 0), (3, 5), (7, 7)]:
            self.assertLessEqual(noise_residual(cube, spec, row, col), 1e-9)

    def test_standard_noise_outweighs_signatures(self):
        """Test that default-amplitude noise is larger than any class separation."""
        spec = make_scene_spec()
        self.assertEqual(spec.noise_amplitude, 10.0)
        cube = generate_scene(spec)
        clean = spec.signatures[cube.labels.reshape(-1).astype(np.int64) - 1]
        noise = cube.radiance.reshape(spec.bands, -1).T - clean
        separation = max(np.linalg.norm(a - b) for a in spec.signatures for b in spec.signatures)
        self.assertGreater(np.linalg.norm(noise, axis=1).mean(), 2.0 * separation)

    def test_block_labels(self):
        """Test cyclic class numbering over square blocks."""
        labels = block_labels(4, 4, 2, 3)
        assert_array_equal(labels, [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 1, 1], [3, 3, 1, 1]])

    def test_invalid_requests(self):
        """Test oversize regions and identical signatures."""
        with self.assertRaises(SceneError):
            generate_scene(small_spec(region_size=16))
        spec = small_spec()
        with self.assertRaises(SceneError):
            type(spec)(num_classes=2, rows=8, cols=8, signatures=np.ones((2, 6)), true_bases=spec.true_bases,
                       noise_amplitude=1.0, white_noise_sigma=0.0, region_size=4, seed=0)


class TestCubeFormat(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.cube = HSICube(radiance=np.arange(8, dtype=np.float64).reshape(2, 2, 2),
                            labels=[[1, 0], [2, 1]], num_classes=2)

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def test_byte_accounting(self):
        """Test 24 header + 64 radiance + 8 label bytes for a 2-band 2×2 cube."""
        payload = cube_to_bytes(self.cube)
        self.assertEqual(len(payload), 96)
        self.assertEqual(payload[:4], b"HSIC")

    def test_file_round_trip(self):
        """Test that saved cubes load back bit for bit."""
        path = save_cube(self.cube, Path(self.temp_dir) / "scene.hsic")
        self.assertTrue(load_cube(path).equals(self.cube))

    def test_corrupt_payloads(self):
        """Test bad magic, truncation and trailing bytes."""
        payload = cube_to_bytes(self.cube)
        for bad in (b"XXXX" + payload[4:], payload[:-1], payload + b"\x00", payload[:10]):
            with self.assertRaises(CubeFormatError):
                cube_from_bytes(bad)

    def test_missing_file(self):
        """Test FileNotFoundError for a nonexistent cube."""
        with self.assertRaises(FileNotFoundError):
            load_cube(Path(self.temp_dir) / "absent.hsic")

    def test_label_beyond_class_count(self):
        """Test rejection of labels above num_classes."""
        with self.assertRaises(CubeFormatError):
            HSICube(radiance=np.zeros((1, 1, 2)), labels=[[0, 3]], num_classes=2)


class TestPatches(unittest.TestCase):

    def setUp(self):
        self.cube = generate_scene(small_spec())

    def test_single_pixel_patch(self):
        """Test that w = 1 gives the pixel's spectrum."""
        patch = extract_patch(self.cube, 2, 3, 1)
        self.assertEqual(patch.shape, (6, 1, 1))
        assert_array_equal(patch[:, 0, 0], self.cube.radiance[:, 2, 3])

    def test_interior_patch(self):
        """Test an interior 5×5 patch against a direct slice."""
        assert_array_equal(extract_patch(self.cube, 4, 4, 5), self.cube.radiance[:, 2:7, 2:7])

    def test_corner_patch_is_reflected(self):
        """Test mirror reflection at the (0, 0) corner."""
        patch = extract_patch(self.cube, 0, 0, 3)
        idx = [1, 0, 1]
        assert_array_equal(patch, self.cube.radiance[:, idx][:, :, idx])
        assert_array_equal(reflect_indices(np.array([-2, -1, 8, 9]), 8), [2, 1, 6, 5])

    def test_invalid_patch_requests(self):
        """Test even windows and unlabeled centers."""
        with self.assertRaises(SceneError):
            extract_patch(self.cube, 0, 0, 4)
        unlabeled = HSICube(radiance=np.zeros((1, 1, 1)), labels=[[0]], num_classes=1)
        with self.assertRaises(SceneError):
            extract_patch(unlabeled, 0, 0, 1)

    def test_extract_patches(self):
        """Test batch extraction keeps labels and coordinates."""
        coords = np.array([[0, 0, 1], [7, 7, 2]])
        patch_set = extract_patches(self.cube, coords, 3)
        self.assertEqual(len(patch_set), 2)
        self.assertEqual(patch_set.patches.shape, (2, 6, 3, 3))
        assert_array_equal(patch_set.labels, [1, 2])


class TestSplit(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.cube = generate_scene(small_spec())

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def test_counts_and_disjointness(self):
        """Test per-class training counts and a disjoint cover of labeled pixels."""
        split = split_train_test(self.cube, per_class=5, seed=0)
        for m in (1, 2):
            self.assertEqual(int(np.sum(split.train[:, 2] == m)), 5)
        train = {tuple(r) for r in split.train}
        test = {tuple(r) for r in split.test}
        self.assertFalse(train & test)
        self.assertEqual(len(train) + len(test), int(np.count_nonzero(self.cube.labels)))

    def test_same_seed_same_split(self):
        """Test deterministic splits."""
        first = split_train_test(self.cube, per_class=5, seed=3)
        second = split_train_test(self.cube, per_class=5, seed=3)
        assert_array_equal(first.train, second.train)
        assert_array_equal(first.test, second.test)

    def test_too_few_pixels(self):
        """Test that a class needs more labeled pixels than per_class."""
        with self.assertRaises(SceneError):
            split_train_test(self.cube, per_class=32, seed=0)

    def test_export_split_csv(self):
        """Test one CSV row per pixel with its role."""
        split = split_train_test(self.cube, per_class=5, seed=0)
        path = export_split_csv(split, Path(self.temp_dir) / "split.csv")
        lines = path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines[0], "row,col,class,role")
        self.assertEqual(len(lines) - 1, len(split.train) + len(split.test))
        self.assertEqual(sum(1 for line in lines if line.endswith(",train")), 10)


if __name__ == '__main__':
    unittest.main()
