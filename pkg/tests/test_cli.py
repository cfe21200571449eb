import json

import numpy as np
import pytest

from gmi.cli import main
from gmi.io import (
    canonical_json,
    complex_array,
    parse_complex_array,
    solution_from_dict,
)

BASE_CONFIG = {
    "schema_version": 1,
    "problem": {
        "increment": {"type": "gm", "s": [1], "mu": [1], "d": [1]},
        "signal_density": {"kind": "rational", "numerator": [1.0, 0.4],
                           "denominator": [1.0, -0.5], "scale": 1.0},
        "noise_density": {"kind": "constant", "matrix": [[0.5]]},
        "functional": {"type": "vector", "a": [[1.0], [0.7]]},
        "grid": 1024,
        "seed": 7,
    },
    "oracle": {"schedule": [1, 5, 10, 50], "tolerance": 0.02},
}


def write_config(tmp_path, config, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return path


class TestInterpolate:
    def test_writes_solution_and_csv(self, tmp_path):
        cfg = write_config(tmp_path, BASE_CONFIG)
        code = main(["interpolate", "--config", str(cfg),
                     "--output-dir", str(tmp_path), "--quiet"])
        assert code == 0
        data = json.loads((tmp_path / "solution.json").read_text())
        assert data["kind"] == "interpolation_solution"
        assert data["delta"] > 0
        csv_lines = (tmp_path / "spectral_characteristic.csv").read_text().splitlines()
        assert csv_lines[0] == "lambda,h0_re,h0_im"
        assert len(csv_lines) == 1 + 1024

    def test_round_trip(self, tmp_path):
        cfg = write_config(tmp_path, BASE_CONFIG)
        main(["interpolate", "--config", str(cfg), "--output-dir", str(tmp_path), "--quiet"])
        data = json.loads((tmp_path / "solution.json").read_text())
        parsed = solution_from_dict(data)
        assert parsed["increment"].s == (1,)
        assert parsed["functional"].N == 1
        assert parsed["c"].shape == (3, 1)
        assert parsed["delta"] == data["delta"]

    def test_determinism(self, tmp_path):
        cfg = write_config(tmp_path, BASE_CONFIG)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["interpolate", "--config", str(cfg), "--output-dir", str(out1), "--quiet"])
        main(["interpolate", "--config", str(cfg), "--output-dir", str(out2), "--quiet"])
        assert (out1 / "solution.json").read_bytes() == (out2 / "solution.json").read_bytes()
        assert (out1 / "spectral_characteristic.csv").read_bytes() == \
            (out2 / "spectral_characteristic.csv").read_bytes()


class TestExitCodes:
    def test_validation_error_is_2(self, tmp_path, capsys):
        bad = dict(BASE_CONFIG, schema_version=1)
        bad = json.loads(json.dumps(bad))
        bad["problem"]["grid"] = 1000  # not a power of two
        cfg = write_config(tmp_path, bad)
        code = main(["interpolate", "--config", str(cfg),
                     "--output-dir", str(tmp_path), "--quiet"])
        assert code == 2
        envelope = json.loads(capsys.readouterr().err.strip())
        assert envelope["code"] == "validation_error"
        assert "grid" in envelope["message"]

    def test_missing_config_is_2(self, tmp_path):
        code = main(["interpolate", "--config", str(tmp_path / "nope.json"),
                     "--output-dir", str(tmp_path), "--quiet"])
        assert code == 2

    def test_numerical_error_is_3(self, tmp_path, capsys):
        bad = json.loads(json.dumps(BASE_CONFIG))
        bad["problem"]["signal_density"] = {"kind": "zero", "dim": 1}
        bad["problem"]["noise_density"] = {"kind": "zero", "dim": 1}
        cfg = write_config(tmp_path, bad)
        code = main(["interpolate", "--config", str(cfg),
                     "--output-dir", str(tmp_path), "--quiet"])
        assert code == 3
        envelope = json.loads(capsys.readouterr().err.strip())
        assert "singular" in envelope["message"]

    def test_verification_failure_is_4(self, tmp_path, capsys):
        strict = json.loads(json.dumps(BASE_CONFIG))
        strict["oracle"] = {"schedule": [1], "tolerance": 1e-9}
        cfg = write_config(tmp_path, strict)
        code = main(["oracle-verify", "--config", str(cfg),
                     "--output-dir", str(tmp_path), "--quiet"])
        assert code == 4
        envelope = json.loads(capsys.readouterr().err.strip())
        assert envelope["code"] == "verification_failure"

    def test_oracle_pass_is_0(self, tmp_path):
        cfg = write_config(tmp_path, BASE_CONFIG)
        code = main(["oracle-verify", "--config", str(cfg),
                     "--output-dir", str(tmp_path), "--quiet"])
        assert code == 0
        table = json.loads((tmp_path / "convergence.json").read_text())
        assert table["pass"] is True
        assert [row["L"] for row in table["rows"]] == [1, 5, 10, 50]


class TestClassify:
    def test_example_conditions(self, tmp_path):
        cfg = write_config(tmp_path, {
            "schema_version": 1,
            "problem": {"increment": {
                "type": "fm", "R0": 1, "D0": 0.2,
                "factors": [{"s": 2, "R": 0, "D": 0.2}]}},
        })
        code = main(["classify", "--config", str(cfg),
                     "--output-dir", str(tmp_path), "--quiet"])
        assert code == 0
        report = json.loads((tmp_path / "classification.json").read_text())
        conds = {c["condition"]: c["satisfied"] for c in report["conditions"]}
        assert conds == {"|D0+D1| < 1/2": True, "|D1| < 1/2": True}
        assert report["stationary"] and report["long_memory"]


class TestCoeffs:
    def test_expansion_dump(self, tmp_path):
        cfg = write_config(tmp_path, {
            "schema_version": 1,
            "problem": {"increment": {"type": "gm", "s": [2, 3],
                                      "mu": [1, 1], "d": [1, 1]}},
            "coeffs": {"length": 7},
        })
        code = main(["coeffs", "--config", str(cfg),
                     "--output-dir", str(tmp_path), "--quiet"])
        assert code == 0
        dump = json.loads((tmp_path / "coefficients.json").read_text())
        assert dump["expansion"] == [1, 0, -1, -1, 0, 1]
        assert dump["inverse_series"] == [1, 0, 1, 1, 1, 1, 2, 1]

    def test_fractional_dump(self, tmp_path):
        cfg = write_config(tmp_path, {
            "schema_version": 1,
            "problem": {"increment": {
                "type": "fm", "R0": 0, "D0": 0.3, "factors": []}},
            "coeffs": {"length": 4},
        })
        code = main(["coeffs", "--config", str(cfg),
                     "--output-dir", str(tmp_path), "--quiet"])
        assert code == 0
        dump = json.loads((tmp_path / "coefficients.json").read_text())
        assert dump["series_minus"][1] == pytest.approx(-0.3)
        assert dump["series_plus"][1] == pytest.approx(0.3)


class TestCanonicalJson:
    def test_float_formatting_round_trips(self):
        values = [0.1, 1 / 3, 1e-17, 123456.789, np.pi]
        text = canonical_json({"x": values})
        parsed = json.loads(text)
        assert parsed["x"] == values

    def test_sorted_keys(self):
        assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'

    def test_complex_arrays(self):
        arr = np.array([[1 + 2j, 3 - 4j]])
        again = parse_complex_array(complex_array(arr))
        assert np.array_equal(arr, again)


class TestMinimaxCommand:
    def test_runs_and_reports(self, tmp_path):
        cfg = write_config(tmp_path, {
            "schema_version": 1,
            "problem": {
                "increment": {"type": "gm", "s": [1], "mu": [1], "d": [1]},
                "functional": {"type": "vector", "a": [[1.0]]},
                "grid": 1024,
                "seed": 3,
            },
            "minimax": {"f_class": {"kind": "D0_2", "p": 1.5},
                        "g_class": {"kind": "zero"},
                        "saddle_samples": 10},
        })
        code = main(["minimax", "--config", str(cfg),
                     "--output-dir", str(tmp_path), "--quiet"])
        assert code == 0
        result = json.loads((tmp_path / "minimax.json").read_text())
        assert result["converged"] is True
        assert result["delta0"] == pytest.approx(1.5, abs=1e-3)
        assert len(result["f0"]) == 1024
        from gmi.io import minimax_result_from_dict

        parsed = minimax_result_from_dict(result)
        assert parsed["f0"].shape == (1024, 1, 1)
        assert np.all(parsed["f0"].real >= 0)
        signal_csv = (tmp_path / "least_favorable_signal.csv").read_text().splitlines()
        assert signal_csv[0] == "lambda,f00_re,f00_im"
        assert len(signal_csv) == 1 + 1024
