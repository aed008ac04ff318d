import csv
import json
import math
import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from mmdquant import cli
from mmdquant.errors import NumericalAbort
from mmdquant.sgd import IterationTrace, SgdConfig
from mmdquant.weights import Quantization, WeightKind

FAST = ["--max-iters", "400", "--no-plots"]


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def report(path):
    return cli.MmdReport.from_json((path / "report.json").read_text(encoding="utf-8"))


class TestQuantize:
    def test_closed_form_normal(self, tmp_path, capsys):
        code = cli.main(["quantize", "--method", "closedform", "--n", "5", "--ell", "0.5",
                         "--output-dir", str(tmp_path)])
        assert code == cli.EXIT_OK
        r = report(tmp_path)
        x = np.array(r.points)
        assert x.size == 5
        np.testing.assert_allclose(x, -x[::-1], atol=1e-8)
        np.testing.assert_allclose(sum(r.weights), 1.0, atol=1e-12)
        assert r.mmd_source == "closed_form"
        assert r.mmd > 0 and r.status == "ok"
        assert "mmd" in capsys.readouterr().out
        assert not (tmp_path / "trace.csv").exists()

    def test_single_point_uniform(self, tmp_path):
        code = cli.main(["quantize", "--target", "uniform", "--n", "1", "--seed", "3",
                         "--max-iters", "20000", "--no-plots", "--output-dir", str(tmp_path)])
        assert code == cli.EXIT_OK
        r = report(tmp_path)
        assert abs(r.points[0] - 0.5) <= 0.05
        assert r.weights == [1.0]

    def test_output_files(self, tmp_path):
        code = cli.main(["quantize", "--n", "3", "--max-iters", "300", "--trace-stride", "50",
                         "--output-dir", str(tmp_path)])
        assert code == cli.EXIT_OK
        with open(tmp_path / "points.csv", encoding="utf-8") as fh:
            assert fh.readline().strip() == "index,x,p"
        with open(tmp_path / "trace.csv", encoding="utf-8") as fh:
            assert fh.readline().strip() == "t,running_mmd_sq,x_0,x_1,x_2"
        trace = read_rows(tmp_path / "trace.csv")
        assert [int(r["t"]) for r in trace] == list(range(0, 301, 50))
        for name in ("density.svg", "embedding.svg"):
            assert (tmp_path / name).exists()

    def test_points_round_trip(self, tmp_path):
        cli.main(["quantize", "--n", "4", "--output-dir", str(tmp_path)] + FAST)
        r = report(tmp_path)
        x, p = cli.read_points_csv(tmp_path / "points.csv")
        assert x.tolist() == r.points
        assert p.tolist() == r.weights

    def test_format_float_round_trips(self):
        rng = np.random.default_rng(0)
        values = np.concatenate([rng.normal(size=200) * 10.0 ** rng.integers(-300, 300, 200),
                                 [0.1, 1 / 3, 2.0**-1074, np.nextafter(1.0, 2.0)]])
        for v in values:
            assert float(cli.format_float(v)) == v

    def test_report_revalidates_on_reload(self, tmp_path):
        cli.main(["quantize", "--n", "3", "--output-dir", str(tmp_path)] + FAST)
        text = (tmp_path / "report.json").read_text(encoding="utf-8")
        q = cli.MmdReport.from_json(text).quantization()
        assert isinstance(q, Quantization)
        data = json.loads(text)
        data["weights"][0] += 0.5
        with pytest.raises(Exception):
            cli.MmdReport(**data).quantization()

    def test_svg_well_formed_and_self_contained(self, tmp_path):
        cli.main(["quantize", "--n", "3", "--max-iters", "200", "--output-dir", str(tmp_path)])
        for name in ("density.svg", "embedding.svg"):
            text = (tmp_path / name).read_text(encoding="utf-8")
            root = ET.fromstring(text)
            assert root.tag.endswith("svg")
            for el in root.iter():
                for key, value in el.attrib.items():
                    if key.endswith("href"):
                        assert value.startswith("#"), value
            # namespace URIs in the metadata block are identifiers, not fetched resources
            assert not re.search(r"url\(\s*['\"]?(?!#)", text)
            assert "<image" not in text

    def test_svg_deterministic(self, tmp_path):
        for sub in ("a", "b"):
            cli.main(["quantize", "--n", "3", "--max-iters", "200",
                      "--output-dir", str(tmp_path / sub)])
        for name in ("density.svg", "embedding.svg"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_negative_weights_go_through_active_set(self, tmp_path):
        cli.main(["quantize", "--target", "uniform", "--n", "7", "--seed", "1",
                  "--output-dir", str(tmp_path)] + FAST)
        r = report(tmp_path)
        assert r.negative_weight_count > 0
        assert r.weight_kind == "simplex"
        assert min(r.weights) >= 0 and r.active_set

    def test_monte_carlo_mmd_for_non_analytic_pair(self, tmp_path):
        cli.main(["quantize", "--target", "exponential", "--nu", "2.5", "--n", "3",
                  "--output-dir", str(tmp_path)] + FAST)
        r = report(tmp_path)
        assert r.mmd_source == "monte_carlo"
        assert r.mmd_std_error > 0

    def test_penalized_method(self, tmp_path):
        code = cli.main(["quantize", "--method", "penalized", "--n", "3",
                         "--output-dir", str(tmp_path)] + FAST)
        assert code == cli.EXIT_OK
        assert report(tmp_path).weight_kind == "simplex"


class TestUsage:
    @pytest.mark.parametrize("argv", [
        ["quantize", "--n", "0"],
        ["quantize", "--n", "3", "--n", "4"],
        ["quantize", "--seed", "1", "--seed=2"],
        ["quantize", "--ell", "-1"],
        ["quantize", "--target", "cauchy"],
        ["quantize", "--method", "newton"],
        ["quantize", "--method", "closedform", "--target", "uniform"],
        ["quantize", "--method", "closedform", "--nu", "2.5"],
        ["quantize", "--plots", "--no-plots"],
        ["sweep", "--ns", "1,0"],
        ["frobnicate"],
        [],
    ])
    def test_usage_errors(self, argv, tmp_path):
        assert cli.main(argv + ["--output-dir", str(tmp_path)] if argv else argv) == cli.EXIT_USAGE

    def test_config_file_and_precedence(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("# comment\nn = 4\nseed = 9\nmax_iters = 50\nplots = false\n"
                        f"output_dir = {tmp_path / 'from-file'}\n", encoding="utf-8")
        _, opts = cli.parse_args(["quantize", "--config", str(conf), "--seed", "11"])
        assert opts["n"] == 4 and opts["max_iters"] == 50
        assert opts["seed"] == 11
        assert opts["plots"] is False
        assert str(opts["output_dir"]).endswith("from-file")
        _, opts = cli.parse_args(["quantize"])
        assert opts["n"] == 5 and opts["plots"] is True

    def test_bad_config_line(self, tmp_path):
        conf = tmp_path / "bad.conf"
        conf.write_text("n 4\n", encoding="utf-8")
        assert cli.main(["quantize", "--config", str(conf)]) == cli.EXIT_USAGE

    def test_environment_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
        _, opts = cli.parse_args(["quantize"])
        assert str(opts["output_dir"]) == str(tmp_path / "env")
        _, opts = cli.parse_args(["quantize", "--output-dir", str(tmp_path / "flag")])
        assert str(opts["output_dir"]) == str(tmp_path / "flag")

    def test_list_separators(self):
        _, opts = cli.parse_args(["sweep", "--targets", "normal:0,2;uniform", "--nus", "0.5,inf"])
        assert [t.label for t in opts["targets"]] == ["normal:0,2", "uniform:0,1"]
        assert opts["nus"] == [0.5, math.inf]


class TestNumericalAbort:
    def test_exit_code_and_partial_trace(self, tmp_path, monkeypatch):
        def abort(spec, target, cfg):
            trace = IterationTrace()
            trace.record(0, math.nan, [0.0, 1.0])
            trace.record(100, 0.25, [0.1, 0.9])
            raise NumericalAbort("forced", trace=trace)

        monkeypatch.setattr(cli, "sgd_quantize", abort)
        code = cli.main(["quantize", "--n", "2", "--output-dir", str(tmp_path)] + FAST)
        assert code == cli.EXIT_NUMERICAL
        assert code != cli.EXIT_USAGE
        rows = read_rows(tmp_path / "trace.csv")
        assert [r["t"] for r in rows] == ["0", "100"]
        assert json.loads((tmp_path / "report.json").read_text())["status"] == "numerical_abort"


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    assert cli.main(["sweep", "--seed", "4", "--output-dir", str(out)] + FAST) == cli.EXIT_OK
    return out


class TestSweep:
    def test_table_shape(self, sweep_dir):
        rows = read_rows(sweep_dir / "sweep.csv")
        assert list(rows[0]) == cli.SWEEP_HEADER
        assert len(rows) == 6
        assert {(r["ell"], r["nu"]) for r in rows} == {
            (e, v) for e in ("0.10000000000000001", "0.5") for v in ("0.5", "2.5", "inf")}
        assert all(float(r["mmd"]) > 0 and r["status"] == "ok" for r in rows)
        for i in range(6):
            r = report(sweep_dir / f"cell-{i:03d}")
            assert r.config["sgd"]["seed"] == 4 ^ i

    def test_rerun_identical_bytes(self, sweep_dir, tmp_path):
        cli.main(["sweep", "--seed", "4", "--output-dir", str(tmp_path)] + FAST)
        assert (tmp_path / "sweep.csv").read_bytes() == (sweep_dir / "sweep.csv").read_bytes()
        for i in range(6):
            for name in ("points.csv", "trace.csv"):
                a = (tmp_path / f"cell-{i:03d}" / name).read_bytes()
                assert a == (sweep_dir / f"cell-{i:03d}" / name).read_bytes()

    def test_workers_match_serial(self, sweep_dir, tmp_path):
        cli.main(["sweep", "--seed", "4", "--workers", "2", "--output-dir", str(tmp_path)] + FAST)
        assert (tmp_path / "sweep.csv").read_bytes() == (sweep_dir / "sweep.csv").read_bytes()

    def test_failed_cell_recorded(self, tmp_path, monkeypatch):
        real = cli.cmd_quantize

        def flaky(cfg):
            if cfg.n_points == 2:
                raise NumericalAbort("forced")
            return real(cfg)

        monkeypatch.setattr(cli, "cmd_quantize", flaky)
        code = cli.main(["sweep", "--ells", "0.5", "--nus", "inf", "--ns", "1,2,3",
                         "--output-dir", str(tmp_path)] + FAST)
        assert code == cli.EXIT_FAILED
        rows = read_rows(tmp_path / "sweep.csv")
        assert [r["status"] for r in rows] == ["ok", "numerical_abort", "ok"]
        assert rows[1]["mmd"] == "nan"

    def test_sweep_over_n_closed_form(self, tmp_path):
        cli.main(["sweep", "--method", "closedform", "--ells", "0.5", "--nus", "inf",
                  "--ns", "1,2,5", "--output-dir", str(tmp_path)])
        mmd = [float(r["mmd"]) for r in read_rows(tmp_path / "sweep.csv")]
        assert mmd[2] < mmd[1] < mmd[0]


def test_check_command(capsys):
    assert cli.main(["check"]) == cli.EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_experiment_config_validation(tmp_path):
    from mmdquant.distributions import Uniform

    with pytest.raises(Exception):
        cli.ExperimentConfig(Uniform(), cli.make_kernel(0.5, math.inf), 3, cli.Method.CLOSED_FORM,
                             SgdConfig(n_points=3), tmp_path)
    q = Quantization([0.0], [1.0], WeightKind.SUM_TO_ONE)
    assert q.n == 1
