"""Unit tests for the plotting package.

Inputs are synthetic CSV files written directly against the published
header contract; the harness itself is never imported here.  Exact-slope
cases use step sizes of the form 4^-k so that both log2 coordinates are
integers and the least-squares answer is exact in floating point.
"""
from __future__ import annotations

import math
from pathlib import Path

import pytest

from mvsde_plots import (
    CSV_HEADER,
    PlotError,
    PlotSpec,
    fit_line,
    plot_converge,
    plot_moments,
    read_rows,
)
from mvsde_plots.cli import main

HEADER_LINE = ",".join(CSV_HEADER) + "\n"


def write_csv(path: Path, rows) -> Path:
    lines = [HEADER_LINE]
    for row in rows:
        lines.append(",".join(str(c) for c in row) + "\n")
    path.write_text("".join(lines), encoding="utf-8")
    return path


def converge_row(scheme: str, h: float, value: float, metric: str = "rmse"):
    return ("converge", "example-4.1", scheme, repr(h), 500, 4.0, 1, metric, repr(value))


def power_law_csv(path: Path, schemes=("pem", "bem"), exponent=0.5, ks=range(3, 8)):
    """rmse = coeff * h^exponent on h = 4^-k: exact log2 coordinates.

    sqrt is correctly rounded, so for exponent 1/2 every value is an exact
    power of two and the least-squares slope is exactly representable.
    """
    rows = []
    for i, scheme in enumerate(schemes):
        coeff = float(2 ** i)
        for k in ks:
            h = 4.0 ** -k
            value = coeff * (math.sqrt(h) if exponent == 0.5 else h ** exponent)
            rows.append(converge_row(scheme, h, value))
    return write_csv(path, rows)


class TestFitLine:
    def test_exact_line(self):
        slope, intercept = fit_line([0.0, 1.0, 2.0, 3.0], [3.0, 5.0, 7.0, 9.0])
        assert slope == 2.0
        assert intercept == 3.0

    def test_two_points(self):
        slope, intercept = fit_line([-4.0, -2.0], [1.0, 2.0])
        assert slope == 0.5
        assert intercept == 3.0

    def test_needs_two_points(self):
        with pytest.raises(PlotError, match="at least 2"):
            fit_line([1.0], [2.0])

    def test_needs_distinct_abscissae(self):
        with pytest.raises(PlotError, match="distinct"):
            fit_line([2.0, 2.0], [1.0, 3.0])

    def test_length_mismatch(self):
        with pytest.raises(PlotError, match="length"):
            fit_line([1.0, 2.0], [1.0])


class TestReadRows:
    def test_round_trip_types(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", [converge_row("pem", 0.015625, 0.125)])
        rows = read_rows(path)
        assert len(rows) == 1
        r = rows[0]
        assert (r.experiment, r.model, r.scheme) == ("converge", "example-4.1", "pem")
        assert r.h == 0.015625 and r.N == 500 and r.T == 4.0 and r.seed == 1
        assert r.metric == "rmse" and r.value == 0.125

    def test_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("experiment,scheme,value\nconverge,pem,1\n")
        with pytest.raises(PlotError, match=r":1: unexpected header"):
            read_rows(path)

    def test_rejects_empty_file(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("")
        with pytest.raises(PlotError, match=r":1: file is empty"):
            read_rows(path)

    def test_rejects_short_row(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text(HEADER_LINE + "converge,m,pem,0.5\n")
        with pytest.raises(PlotError, match=r":2: expected 9 fields, got 4"):
            read_rows(path)

    def test_rejects_bad_number_with_line(self, tmp_path):
        rows = [converge_row("pem", 0.5, 1.0), ("converge", "m", "pem", "oops", 1, 1, 1, "rmse", "1")]
        path = write_csv(tmp_path / "a.csv", rows)
        with pytest.raises(PlotError, match=r":3:"):
            read_rows(path)

    def test_skips_blank_lines(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text(HEADER_LINE + "\n" + ",".join(map(str, converge_row("pem", 0.5, 1.0))) + "\n\n")
        assert len(read_rows(path)) == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(PlotError, match="cannot read"):
            read_rows(tmp_path / "nope.csv")


class TestPlotSpec:
    def test_coerces_paths(self, tmp_path):
        spec = PlotSpec(csv_path=str(tmp_path / "a.csv"), out_path=str(tmp_path / "a.png"))
        assert isinstance(spec.csv_path, Path)
        assert isinstance(spec.out_path, Path)
        assert spec.reference_slope == 0.5

    def test_rejects_non_finite_slope(self, tmp_path):
        with pytest.raises(PlotError, match="finite"):
            PlotSpec(csv_path=tmp_path / "a", out_path=tmp_path / "b", reference_slope=float("nan"))

    def test_rejects_bad_dpi(self, tmp_path):
        with pytest.raises(PlotError, match="dpi"):
            PlotSpec(csv_path=tmp_path / "a", out_path=tmp_path / "b", dpi=0)


class TestPlotConverge:
    def test_exact_power_law_slopes(self, tmp_path):
        csv = power_law_csv(tmp_path / "a.csv")
        res = plot_converge(PlotSpec(csv_path=csv, out_path=tmp_path / "a.png"))
        assert res.schemes == ("bem", "pem")
        assert res.slopes == {"pem": 0.5, "bem": 0.5}
        assert res.points == {"pem": 5, "bem": 5}
        assert res.out_path.stat().st_size > 0

    def test_reference_overlays_power_law(self, tmp_path):
        # rmse = h^s data must sit exactly on the slope-s guide line
        # anchored at the smallest h.
        csv = power_law_csv(tmp_path / "a.csv", schemes=("pem",))
        res = plot_converge(PlotSpec(csv_path=csv, out_path=tmp_path / "a.png"))
        x0, y0 = res.reference_anchor
        assert (x0, y0) == (math.log2(4.0 ** -7), math.log2(math.sqrt(4.0 ** -7)))
        for r in read_rows(csv):
            if r.metric == "rmse":
                x, y = math.log2(r.h), math.log2(r.value)
                assert y == y0 + res.reference_slope * (x - x0)

    def test_intercepts_consistent(self, tmp_path):
        csv = power_law_csv(tmp_path / "a.csv", schemes=("bem",), exponent=1.0)
        res = plot_converge(PlotSpec(csv_path=csv, out_path=tmp_path / "a.png"))
        assert res.slopes["bem"] == 1.0
        for r in read_rows(csv):
            x, y = math.log2(r.h), math.log2(r.value)
            assert abs(y - (res.slopes["bem"] * x + res.intercepts["bem"])) < 1e-12

    def test_collects_harness_rates(self, tmp_path):
        rows = [converge_row("pem", 4.0 ** -k, math.sqrt(4.0 ** -k)) for k in range(3, 6)]
        rows.append(converge_row("pem", 0.0, 0.4931, metric="fit_rate"))
        csv = write_csv(tmp_path / "a.csv", rows)
        res = plot_converge(PlotSpec(csv_path=csv, out_path=tmp_path / "a.png"))
        assert res.harness_rates == {"pem": 0.4931}

    def test_never_mutates_input(self, tmp_path):
        csv = power_law_csv(tmp_path / "a.csv")
        before = csv.read_bytes()
        plot_converge(PlotSpec(csv_path=csv, out_path=tmp_path / "a.png"))
        assert csv.read_bytes() == before

    def test_identical_input_identical_pixels(self, tmp_path):
        csv = power_law_csv(tmp_path / "a.csv")
        res1 = plot_converge(PlotSpec(csv_path=csv, out_path=tmp_path / "one.png"))
        res2 = plot_converge(PlotSpec(csv_path=csv, out_path=tmp_path / "two.png"))
        assert res1.out_path.read_bytes() == res2.out_path.read_bytes()

    def test_zero_rmse_rows_excluded(self, tmp_path):
        rows = [converge_row("pem", 4.0 ** -k, math.sqrt(4.0 ** -k)) for k in range(3, 6)]
        rows.append(converge_row("pem", 4.0 ** -6, 0.0))
        csv = write_csv(tmp_path / "a.csv", rows)
        res = plot_converge(PlotSpec(csv_path=csv, out_path=tmp_path / "a.png"))
        assert res.points == {"pem": 3}
        assert res.slopes["pem"] == 0.5

    def test_single_usable_row_rejected(self, tmp_path):
        rows = [converge_row("pem", 0.25, 0.5), converge_row("pem", 0.125, 0.0)]
        csv = write_csv(tmp_path / "a.csv", rows)
        with pytest.raises(PlotError, match=r"scheme 'pem' has 1 usable"):
            plot_converge(PlotSpec(csv_path=csv, out_path=tmp_path / "a.png"))

    def test_no_rmse_rows_rejected(self, tmp_path):
        csv = write_csv(tmp_path / "a.csv", [converge_row("pem", 0.0, 0.5, metric="fit_rate")])
        with pytest.raises(PlotError, match="no positive rmse"):
            plot_converge(PlotSpec(csv_path=csv, out_path=tmp_path / "a.png"))

    def test_empty_selection_rejected(self, tmp_path):
        csv = write_csv(tmp_path / "a.csv",
                        [("moments", "m", "pem", "0.5", 1, 1, 1, "moment_2@t=0", "1.0")])
        with pytest.raises(PlotError, match="no rows with experiment='converge'"):
            plot_converge(PlotSpec(csv_path=csv, out_path=tmp_path / "a.png"))

    def test_experiment_filter_override(self, tmp_path):
        rows = [("study-b", "m", "pem", repr(4.0 ** -k), 1, 1, 1, "rmse", repr(4.0 ** -k))
                for k in range(2, 5)]
        csv = write_csv(tmp_path / "a.csv", rows)
        res = plot_converge(PlotSpec(csv_path=csv, out_path=tmp_path / "a.png", experiment="study-b"))
        assert res.slopes["pem"] == 1.0

    def test_suffixless_out_gets_png(self, tmp_path):
        csv = power_law_csv(tmp_path / "a.csv")
        res = plot_converge(PlotSpec(csv_path=csv, out_path=tmp_path / "figure"))
        assert res.out_path == tmp_path / "figure.png"
        assert res.out_path.stat().st_size > 0

    def test_creates_output_directory(self, tmp_path):
        csv = power_law_csv(tmp_path / "a.csv")
        out = tmp_path / "sub" / "dir" / "a.png"
        res = plot_converge(PlotSpec(csv_path=csv, out_path=out))
        assert res.out_path == out and out.stat().st_size > 0

    def test_custom_reference_slope(self, tmp_path):
        csv = power_law_csv(tmp_path / "a.csv")
        res = plot_converge(PlotSpec(csv_path=csv, out_path=tmp_path / "a.png", reference_slope=1.0))
        assert res.reference_slope == 1.0


def moment_row(scheme: str, t: float, value: float, order: int = 2, h: float = 0.015625):
    return ("moments", "example-4.1", scheme, repr(h), 500, 200.0, 1,
            f"moment_{order}@t={t!r}", repr(value))


class TestPlotMoments:
    def test_series_and_figure(self, tmp_path):
        rows = [moment_row("pem", 0.5 * i, 1.0 + i) for i in range(4)]
        rows += [moment_row("pem", 0.5 * i, 2.0 + i, order=4) for i in range(4)]
        csv = write_csv(tmp_path / "m.csv", rows)
        res = plot_moments(PlotSpec(csv_path=csv, out_path=tmp_path / "m.png"))
        assert res.schemes == ("pem",)
        assert res.orders == (2, 4)
        assert res.series == {("pem", 2): 4, ("pem", 4): 4}
        assert res.blowups == ()
        assert res.out_path.stat().st_size > 0

    def test_constant_series(self, tmp_path):
        csv = write_csv(tmp_path / "m.csv", [moment_row("bem", 1.0 * i, 1.0) for i in range(5)])
        res = plot_moments(PlotSpec(csv_path=csv, out_path=tmp_path / "m.png"))
        assert res.series == {("bem", 2): 5}
        assert res.out_path.stat().st_size > 0

    def test_blowup_marker_time(self, tmp_path):
        rows = [moment_row("em", 0.0, 100.0)]
        rows.append(("moments", "example-4.1", "em", "0.25", 100, 10.0, 1, "blowup_step", "7"))
        csv = write_csv(tmp_path / "m.csv", rows)
        res = plot_moments(PlotSpec(csv_path=csv, out_path=tmp_path / "m.png"))
        assert res.blowups == (("em", 7 * 0.25),)

    def test_zero_values_masked(self, tmp_path):
        rows = [moment_row("pem", 0.0, 1.0), moment_row("pem", 0.5, 0.0), moment_row("pem", 1.0, 4.0)]
        csv = write_csv(tmp_path / "m.csv", rows)
        res = plot_moments(PlotSpec(csv_path=csv, out_path=tmp_path / "m.png"))
        assert res.series == {("pem", 2): 2}

    def test_sup_rows_ignored(self, tmp_path):
        rows = [moment_row("pem", 0.0, 1.0), moment_row("pem", 1.0, 2.0)]
        rows.append(("moments", "example-4.1", "pem", "0.015625", 500, 200.0, 1, "sup_moment_2", "2.0"))
        csv = write_csv(tmp_path / "m.csv", rows)
        res = plot_moments(PlotSpec(csv_path=csv, out_path=tmp_path / "m.png"))
        assert res.series == {("pem", 2): 2}

    def test_no_series_rejected(self, tmp_path):
        csv = write_csv(tmp_path / "m.csv",
                        [("moments", "m", "pem", "0.5", 1, 1, 1, "sup_moment_2", "1.0")])
        with pytest.raises(PlotError, match="no moment series"):
            plot_moments(PlotSpec(csv_path=csv, out_path=tmp_path / "m.png"))

    def test_malformed_moment_time_rejected(self, tmp_path):
        csv = write_csv(tmp_path / "m.csv",
                        [("moments", "m", "pem", "0.5", 1, 1, 1, "moment_2@t=soon", "1.0")])
        with pytest.raises(PlotError, match="malformed metric"):
            plot_moments(PlotSpec(csv_path=csv, out_path=tmp_path / "m.png"))


class TestCli:
    def test_converge_happy_path(self, tmp_path, capsys):
        csv = power_law_csv(tmp_path / "a.csv")
        out = tmp_path / "fig.png"
        assert main(["converge", str(csv), "-o", str(out)]) == 0
        captured = capsys.readouterr()
        assert "pem fitted slope 0.5" in captured.out
        assert f"wrote {out}" in captured.out
        assert out.stat().st_size > 0

    def test_default_out_next_to_csv(self, tmp_path):
        csv = power_law_csv(tmp_path / "a.csv")
        assert main(["converge", str(csv)]) == 0
        assert (tmp_path / "a.png").stat().st_size > 0

    def test_moments_happy_path(self, tmp_path, capsys):
        rows = [moment_row("em", 0.0, 100.0)]
        rows.append(("moments", "example-4.1", "em", "0.25", 100, 10.0, 1, "blowup_step", "7"))
        csv = write_csv(tmp_path / "m.csv", rows)
        out = tmp_path / "m.png"
        assert main(["moments", str(csv), "-o", str(out)]) == 0
        captured = capsys.readouterr()
        assert "blow-up marker: em at t=1.75" in captured.out
        assert out.stat().st_size > 0

    def test_empty_csv_exits_1(self, tmp_path, capsys):
        csv = write_csv(tmp_path / "empty.csv", [])
        assert main(["converge", str(csv), "-o", str(tmp_path / "x.png")]) == 1
        assert "plot: error:" in capsys.readouterr().err

    def test_missing_file_exits_1(self, tmp_path, capsys):
        assert main(["converge", str(tmp_path / "nope.csv")]) == 1
        assert "cannot read" in capsys.readouterr().err

    def test_usage_error_exits_1(self):
        with pytest.raises(SystemExit) as exc:
            main(["bogus-command"])
        assert exc.value.code == 1

    def test_missing_command_exits_1(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 1

    def test_reference_slope_flag(self, tmp_path, capsys):
        csv = power_law_csv(tmp_path / "a.csv")
        assert main(["converge", str(csv), "-o", str(tmp_path / "f.png"), "--slope", "0.25"]) == 0
        assert "reference slope 0.25" in capsys.readouterr().out
