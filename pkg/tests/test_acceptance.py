import os
import unittest

from config import build_config
from workflows import AcceptanceRunner, format_acceptance
from workflows.acceptance import median

TINY = dict(classes=2, bands=4, rows=8, cols=8, true_bases=2, region_size=4,
            k=4, d=8, neighbor_size=5, per_class=3, epochs=1, batch=2, eval_limit=8, lr=0.01)


class TestAcceptanceRunner(unittest.TestCase):

    def setUp(self):
        self.runner = AcceptanceRunner(build_config(TINY), seeds=[0])

    def test_needs_a_seed(self):
        """Test that an empty seed list is rejected."""
        with self.assertRaises(ValueError):
            AcceptanceRunner(build_config(TINY), seeds=[])

    def test_median(self):
        """Test the odd and even cases."""
        self.assertEqual(median([0.9, 0.7, 0.8]), 0.8)
        self.assertEqual(median([0.5, 1.0]), 0.75)

    def test_scenes_are_cached_per_noise_setting(self):
        """Test one generated cube per amplitude and sigma pair."""
        self.assertIs(self.runner.scene(), self.runner.scene())
        noiseless = self.runner.scene(noise_amplitude=0.0, white_noise_sigma=0.0)
        self.assertIsNot(noiseless, self.runner.scene())
        self.assertEqual(noiseless.bands, 4)

    def test_shared_runs_train_once(self):
        """Test that the w=5 full run is shared by the benefit and neighbor checks."""
        benefit = self.runner.check_denoise_benefit()
        neighbor = self.runner.check_neighbor_direction()
        self.assertEqual(len(self.runner._runs), 3)
        self.assertEqual(neighbor.per_seed["w=5"], benefit.per_seed["full"])
        self.assertEqual(list(benefit.medians), ["baseline", "full"])
        self.assertTrue(all(0.0 <= v <= 1.0 for v in benefit.medians.values()))

    def test_report_lines(self):
        """Test a status line per check followed by its per-seed values."""
        result = self.runner.check_training_helps()
        self.assertEqual(len(result.per_seed["final"]), 1)
        text = format_acceptance([result]).splitlines()
        self.assertEqual(len(text), 3)
        self.assertRegex(text[0], r"^(✅|❌) training helps: median epoch 0 \d\.\d{4}, final \d\.\d{4}$")
        self.assertTrue(text[1].startswith("   epoch 0: "))


@unittest.skipUnless(os.environ.get("HSI_DENOISE_SLOW"), "set HSI_DENOISE_SLOW=1 for desk-scale acceptance runs")
class TestDeskAcceptance(unittest.TestCase):

    def test_every_check_passes(self):
        """Test noiseless sanity, denoise benefit, neighbor direction and training on the standard scene."""
        results = AcceptanceRunner(build_config({})).run()
        print(format_acceptance(results))
        for result in results:
            self.assertTrue(result.passed, result.line())


if __name__ == '__main__':
    unittest.main()
