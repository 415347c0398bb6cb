"""
Tests for run configuration parsing and validation.
"""

import hashlib
import sys
import tempfile
import unittest
from pathlib import Path

import pandas as pd

# Add the src directory to the Python path
src_path = str(Path(__file__).parent.parent / 'src')
if src_path not in sys.path:
    sys.path.insert(0, src_path)

from common.config import DEFAULT_DRAWS, load_config, parse_config
from common.exceptions import ConfigError
from data_ingestion.panel import SeasonalMethod
from models.estimation.bvar import DEFAULT_GRID
from scenarios.forecast import ShockMode

CONFIG_DIR = Path(__file__).parent.parent / 'configs'


def minimal(**extra):
    raw = {
        "seed": 7,
        "dataset": "panel.csv",
        "variables": ["CO2", "AT", "SIE"],
        "prior": {"lambda1": 0.2},
    }
    raw.update(extra)
    return raw


class TestParseConfig(unittest.TestCase):

    def test_defaults(self):
        config = parse_config(minimal(), "/data", check_dataset=False)
        self.assertEqual(config.dataset, Path("/data/panel.csv"))
        self.assertEqual(config.names, ["CO2", "AT", "SIE"])
        self.assertEqual(config.lags, 12)
        self.assertEqual(config.prior.lambda1, 0.2)
        self.assertEqual(config.prior.lags, 12)
        self.assertEqual(config.draws, DEFAULT_DRAWS)
        self.assertIs(config.deseason_method, SeasonalMethod.DUMMY)
        self.assertIs(config.shock_mode, ShockMode.ZERO)
        self.assertEqual(config.out_dir, Path("/data/output"))
        self.assertIsNone(config.target)

    def test_variable_units_and_order(self):
        config = parse_config(minimal(variables=[{"name": "CO2", "units": "ppm"}, "SIE"]), check_dataset=False)
        self.assertEqual(config.variables[0].units, "ppm")
        self.assertEqual([v.ordering_index for v in config.variables], [0, 1])

    def test_required_and_unknown_keys(self):
        for key in ("seed", "dataset", "variables"):
            raw = minimal()
            del raw[key]
            with self.subTest(missing=key):
                with self.assertRaises(ConfigError):
                    parse_config(raw, check_dataset=False)
        with self.assertRaisesRegex(ConfigError, "unknown configuration keys"):
            parse_config(minimal(colour="blue"), check_dataset=False)
        raw = minimal()
        del raw["prior"]
        with self.assertRaisesRegex(ConfigError, "'prior' or 'grid'"):
            parse_config(raw, check_dataset=False)

    def test_invalid_values(self):
        cases = [
            {"seed": -1},
            {"seed": True},
            {"lags": 0},
            {"variables": ["CO2", "CO2"]},
            {"shocks": ["SIT"]},
            {"shut_sets": [["AT", "Cloud"]]},
            {"deseason": {"method": "x13"}},
            {"deseason": {"method": "bsm-evolving"}},
            {"deseason": {"month": 13}},
            {"prior": {"b_ar": 2.0}},
            {"grid": {"lambda5": [1.0]}},
            {"grid": {"lambda1": []}},
            {"orderings": {"short": ["CO2", "AT"]}},
            {"target": {"variable": "SIE", "month": 0}},
            {"forecast": {"shock_mode": "soft"}},
            {"window": {"start": "1980-13"}},
            {"dic_lags": [0]},
            {"scenarios": {"rcp": {"variable": "CO2"}}},
            {"target": "SIE"},
            {"target": ["SIE", 9]},
            {"target": {"variable": "SIE", "thresholds": ["low"]}},
            {"window": "1980-01"},
            {"deseason": "dummy"},
            {"forecast": 2100},
            {"prior": [0.2]},
            {"grid": {"lambda1": ["tight"]}},
            {"scenarios": ["rcp85.csv"]},
        ]
        for extra in cases:
            with self.subTest(extra=extra):
                with self.assertRaises(ConfigError):
                    parse_config(minimal(**extra), check_dataset=False)

    def test_grid_merges_with_defaults(self):
        raw = minimal(grid={"lambda1": [0.1, 0.3], "b_ar": 0.9})
        del raw["prior"]
        config = parse_config(raw, check_dataset=False)
        self.assertIsNone(config.prior)
        self.assertEqual(config.grid["lambda1"], (0.1, 0.3))
        self.assertEqual(config.grid["b_ar"], (0.9,))
        self.assertEqual(config.grid["lambda3"], tuple(DEFAULT_GRID["lambda3"]))

    def test_analysis_sections(self):
        config = parse_config(minimal(
            lags=3,
            window={"start": "1984-01", "end": "2018-12"},
            deseason={"method": "bsm-evolving", "month": 9, "skip": ["CO2"]},
            shut_sets=[["AT"], ["AT", "SIE"]],
            scenarios={"rcp85": {"variable": "CO2", "file": "rcp85.csv"}},
            frozen=[["AT"]],
            target={"variable": "SIE", "thresholds": [1]},
            orderings={"ice_first": ["SIE", "CO2", "AT"]},
            dic_lags=[1, {"lags": 3, "trend": True}],
            forecast={"end": "2100-12", "shock_mode": "sampled"},
            workers=4,
        ), "/runs", check_dataset=False)
        self.assertEqual(config.prior.lags, 3)
        self.assertEqual((config.window_start, config.window_end), ((1984, 1), (2018, 12)))
        self.assertIs(config.deseason_method, SeasonalMethod.BSM_EVOLVING)
        self.assertEqual(config.deseason_skip, ("CO2",))
        self.assertEqual(config.shut_sets, (("AT",), ("AT", "SIE")))
        self.assertEqual(config.scenarios[0].file, Path("/runs/rcp85.csv"))
        self.assertEqual(config.target.month, 9)
        self.assertEqual(config.target.thresholds, (1.0,))
        self.assertEqual(config.orderings["ice_first"], ("SIE", "CO2", "AT"))
        self.assertEqual(config.dic_lags, ((1, False), (3, True)))
        self.assertEqual(config.forecast_end, (2100, 12))
        self.assertIs(config.shock_mode, ShockMode.SAMPLED)

    def test_overrides(self):
        config = parse_config(minimal(), check_dataset=False)
        changed = config.with_overrides(seed=11, out_dir="elsewhere")
        self.assertEqual(changed.seed, 11)
        self.assertEqual(changed.out_dir, Path("elsewhere"))
        self.assertIs(config.with_overrides(), config)
        with self.assertRaises(ConfigError):
            config.with_overrides(seed=-3)


class TestLoadConfig(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        pd.DataFrame({"date": ["1980-01"], "CO2": [338.0], "AT": [250.0], "SIE": [14.0]}).to_csv(self.dir / "panel.csv", index=False)

    def tearDown(self):
        self.tmp.cleanup()

    def _write(self, text):
        path = self.dir / "run.yaml"
        path.write_text(text, encoding="utf-8")
        return path

    def test_hash_and_source(self):
        path = self._write("seed: 3\ndataset: panel.csv\nvariables: [CO2, AT, SIE]\nprior: {lambda1: 0.2}\n")
        config = load_config(path)
        self.assertEqual(config.sha256, hashlib.sha256(path.read_bytes()).hexdigest())
        self.assertEqual(config.source, path)
        self.assertEqual(config.dataset, self.dir / "panel.csv")

    def test_dataset_problems(self):
        path = self._write("seed: 3\ndataset: panel.csv\nvariables: [CO2, SIT]\nprior: {lambda1: 0.2}\n")
        with self.assertRaisesRegex(ConfigError, "SIT"):
            load_config(path)
        path = self._write("seed: 3\ndataset: absent.csv\nvariables: [CO2]\nprior: {lambda1: 0.2}\n")
        with self.assertRaisesRegex(ConfigError, "does not exist"):
            load_config(path)

    def test_unreadable_files(self):
        with self.assertRaises(ConfigError):
            load_config(self.dir / "missing.yaml")
        with self.assertRaises(ConfigError):
            load_config(self._write("seed: [unclosed\n"))
        with self.assertRaises(ConfigError):
            load_config(self._write("- just\n- a list\n"))


class TestPresets(unittest.TestCase):

    def test_presets_parse(self):
        expected = {"arctic_8.yaml": (8, 12), "arctic_18.yaml": (18, 3), "synthetic.yaml": (8, 3)}
        for name, (n_vars, lags) in expected.items():
            with self.subTest(preset=name):
                config = load_config(CONFIG_DIR / name, check_dataset=False)
                self.assertEqual(len(config.variables), n_vars)
                self.assertEqual(config.lags, lags)

    def test_benchmark_ordering(self):
        config = load_config(CONFIG_DIR / "arctic_8.yaml", check_dataset=False)
        self.assertEqual(config.names, ["CO2", "TCC", "PR", "AT", "SST", "SIE", "SIT", "Albedo"])
        self.assertEqual(config.window_start, (1980, 1))
        self.assertEqual(config.target.variable, "SIE")


if __name__ == '__main__':
    unittest.main()
