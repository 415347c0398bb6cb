"""
Tests for monthly panel ingestion, windowing and dummy deseasonalization.
"""

import io
import sys
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

# Add the src directory to the Python path
src_path = str(Path(__file__).parent.parent / 'src')
if src_path not in sys.path:
    sys.path.insert(0, src_path)

from common.exceptions import PanelError
from data_ingestion.panel import (
    SeasonalMethod,
    TimeSeriesPanel,
    VariableSpec,
    deseason_dummies,
    format_year_month,
    month_range,
    load_panel,
    parse_year_month,
    restrict_window,
    shift_month,
    specs_from_names,
    write_panel,
)

NAMES = ["CO2", "TCC", "PR", "AT", "SST", "SIE", "SIT", "Albedo"]


def _csv(dates, columns):
    frame = pd.DataFrame({"date": dates, **columns})
    return io.StringIO(frame.to_csv(index=False))


class TestDates(unittest.TestCase):
    """Year-month helpers."""

    def test_parse_and_format(self):
        self.assertEqual(parse_year_month("1980-01"), (1980, 1))
        self.assertEqual(parse_year_month("2018-12"), (2018, 12))
        self.assertEqual(format_year_month((1984, 3)), "1984-03")

    def test_invalid_dates(self):
        for value in ("1980-13", "1980/01", "80-01", ""):
            with self.subTest(value=value):
                with self.assertRaises(PanelError):
                    parse_year_month(value)

    def test_shift_across_years(self):
        self.assertEqual(shift_month((2018, 12), 1), (2019, 1))
        self.assertEqual(shift_month((2019, 1), -13), (2017, 12))
        self.assertEqual(len(month_range((1980, 1), 468)), 468)
        self.assertEqual(month_range((1980, 1), 468)[-1], (2018, 12))


class TestLoadPanel(unittest.TestCase):
    """load_panel contract cases."""

    def setUp(self):
        self.rng = np.random.default_rng(0)
        self.dates = [format_year_month(d) for d in month_range((1980, 1), 468)]

    def test_full_benchmark_shape(self):
        columns = {n: self.rng.normal(size=468) for n in NAMES}
        panel = load_panel(_csv(self.dates, columns), specs_from_names(NAMES))
        self.assertEqual(panel.n_obs, 468)
        self.assertEqual(panel.n_vars, 8)
        self.assertEqual(panel.start, (1980, 1))
        self.assertEqual(panel.end, (2018, 12))
        self.assertEqual(panel.names, NAMES)

    def test_single_column(self):
        source = _csv(["2000-01", "2000-02", "2000-03"], {"SIE": [1.0, 2.0, 3.0]})
        panel = load_panel(source, specs_from_names(["SIE"]))
        self.assertEqual((panel.n_obs, panel.n_vars), (3, 1))
        np.testing.assert_array_equal(panel.column("SIE"), [1.0, 2.0, 3.0])

    def test_gap_month_rejected(self):
        source = _csv(["2000-01", "2000-02", "2000-04"], {"SIE": [1.0, 2.0, 3.0]})
        with self.assertRaisesRegex(PanelError, "non-contiguous"):
            load_panel(source, specs_from_names(["SIE"]))

    def test_unknown_variable(self):
        source = _csv(["2000-01", "2000-02"], {"SIE": [1.0, 2.0]})
        with self.assertRaisesRegex(PanelError, "unknown variable"):
            load_panel(source, specs_from_names(["SIT"]))

    def test_unparsable_cell(self):
        source = _csv(["2000-01", "2000-02"], {"SIE": ["1.0", "abc"]})
        with self.assertRaisesRegex(PanelError, "unparsable"):
            load_panel(source, specs_from_names(["SIE"]))

    def test_ragged_edges_trimmed(self):
        source = _csv(
            ["2000-01", "2000-02", "2000-03", "2000-04"],
            {"SIE": ["", "2", "3", "4"], "SIT": ["1", "2", "3", "NA"]},
        )
        panel = load_panel(source, specs_from_names(["SIE", "SIT"]))
        self.assertEqual(panel.start, (2000, 2))
        self.assertEqual(panel.n_obs, 2)

    def test_interior_gap_rejected(self):
        source = _csv(["2000-01", "2000-02", "2000-03"], {"SIE": ["1", "", "3"]})
        with self.assertRaisesRegex(PanelError, "inside estimation window"):
            load_panel(source, specs_from_names(["SIE"]))

    def test_columns_follow_ordering_index(self):
        source = _csv(["2000-01", "2000-02"], {"A": [1.0, 2.0], "B": [10.0, 20.0]})
        specs = [VariableSpec("A", "", 1), VariableSpec("B", "", 0)]
        panel = load_panel(source, specs)
        self.assertEqual(panel.names, ["B", "A"])
        np.testing.assert_array_equal(panel.values[:, 0], [10.0, 20.0])

    def test_write_panel_reload_is_exact(self):
        columns = {n: self.rng.normal(size=468) * 1e3 for n in NAMES[:3]}
        panel = load_panel(_csv(self.dates, columns), specs_from_names(NAMES[:3]))
        buffer = io.StringIO()
        write_panel(panel, buffer)
        buffer.seek(0)
        reloaded = load_panel(buffer, specs_from_names(NAMES[:3]))
        np.testing.assert_array_equal(reloaded.values, panel.values)
        self.assertEqual(reloaded.start, panel.start)

    def test_panel_is_immutable(self):
        panel = TimeSeriesPanel((2000, 1), np.ones((3, 1)), specs_from_names(["x"]))
        with self.assertRaises(ValueError):
            panel.values[0, 0] = 2.0


class TestRestrictWindow(unittest.TestCase):

    def setUp(self):
        values = np.arange(468 * 2, dtype=float).reshape(468, 2)
        self.panel = TimeSeriesPanel((1980, 1), values, specs_from_names(["a", "b"]))

    def test_extended_model_window(self):
        sub = restrict_window(self.panel, "1984-01")
        self.assertEqual(sub.n_obs, 420)
        self.assertEqual(sub.start, (1984, 1))
        np.testing.assert_array_equal(sub.values[0], self.panel.values[48])

    def test_full_range_is_identity(self):
        sub = restrict_window(self.panel, "1980-01", "2018-12")
        np.testing.assert_array_equal(sub.values, self.panel.values)

    def test_end_before_start(self):
        with self.assertRaises(PanelError):
            restrict_window(self.panel, "1990-01", "1989-12")

    def test_outside_range(self):
        with self.assertRaises(PanelError):
            restrict_window(self.panel, "1979-12", "1985-01")


class TestDeseasonDummies(unittest.TestCase):
    """Month-dummy seasonal adjustment."""

    def setUp(self):
        self.n = 240
        self.pattern = np.array([3.0, 2.5, 1.0, -0.5, -2.0, -3.0, -2.5, -1.0, 0.5, 1.5, 0.5, 0.5])
        self.rng = np.random.default_rng(42)

    def _panel(self, columns):
        names = list(columns)
        values = np.column_stack([columns[n] for n in names])
        return TimeSeriesPanel((1980, 1), values, specs_from_names(names))

    def test_pure_pattern_is_absorbed(self):
        panel = self._panel({"x": np.tile(self.pattern, self.n // 12) + 7.0})
        adjusted, fit = deseason_dummies(panel)
        np.testing.assert_allclose(adjusted.values, 0.0, atol=1e-12)
        np.testing.assert_allclose(fit.monthly_means[:, 0], self.pattern + 7.0, atol=1e-12)
        self.assertIs(fit.method, SeasonalMethod.DUMMY)

    def test_trend_residual_month_means_are_zero(self):
        panel = self._panel({"x": np.arange(self.n, dtype=float)})
        adjusted, _ = deseason_dummies(panel)
        for m in range(1, 13):
            mask = panel.months == m
            self.assertAlmostEqual(adjusted.values[mask, 0].mean(), 0.0, delta=1e-10 * self.n)

    def test_skipped_column_unchanged(self):
        co2 = 338.0 + 0.15 * np.arange(self.n) + self.rng.normal(size=self.n)
        sie = np.tile(self.pattern, self.n // 12) + self.rng.normal(size=self.n)
        panel = self._panel({"CO2": co2, "SIE": sie})
        adjusted, fit = deseason_dummies(panel, skip={"CO2"})
        np.testing.assert_array_equal(adjusted.column("CO2"), panel.column("CO2"))
        np.testing.assert_array_equal(fit.monthly_means[:, 0], 0.0)
        self.assertEqual(fit.skipped, ("CO2",))

    def test_idempotent(self):
        panel = self._panel({"x": np.tile(self.pattern, self.n // 12) + self.rng.normal(size=self.n)})
        once, _ = deseason_dummies(panel)
        twice, fit = deseason_dummies(once)
        np.testing.assert_allclose(twice.values, once.values, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(fit.monthly_means, 0.0, atol=1e-12)

    def test_unknown_skip_rejected(self):
        panel = self._panel({"x": np.ones(self.n)})
        with self.assertRaises(PanelError):
            deseason_dummies(panel, skip={"y"})

    def test_level_offset_adds_back_month_mean(self):
        panel = self._panel({"SIE": np.tile(self.pattern, self.n // 12)})
        _, fit = deseason_dummies(panel)
        self.assertAlmostEqual(fit.level_offset("SIE", 9), self.pattern[8], places=12)
        with self.assertRaises(PanelError):
            fit.level_offset("SIE", 13)

    def test_short_panel_warns(self):
        panel = self._panel({"x": np.arange(18, dtype=float)})
        with self.assertLogs("data_ingestion.panel", level="WARNING"):
            deseason_dummies(panel)


if __name__ == '__main__':
    unittest.main()
