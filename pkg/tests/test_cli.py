import csv
import json
import math
import subprocess
import sys

import pytest

from qstein.cli import SCENARIO_DIR, main
from qstein.divergences import neyman_pearson_simple
from qstein.operators import DensityOperator, save_operator, tensor_power
from qstein.random_states import random_density

SMALL_CHECK = {
    "checks": {
        "pinching": {"n_values": [1, 2], "trials": 2},
        "afw": False,
        "type_domination": {"alphabet_sizes": [2], "n_values": [1, 2]},
        "measure_domination": {"truncations": [1, 2], "n_values": [1, 2]},
        "sandwich": False,
        "convexify": {"trials": 1},
        "symmetrization": {"n_values": [2], "trials": 1},
        "stein": {"n_max": 4, "n_ref": 1, "quantum_n_max": 3},
        "dpi": {"trials": 1},
    }
}


@pytest.fixture
def state_file(tmp_path, rng):
    path = tmp_path / "a.json"
    save_operator(random_density(rng, 2), path)
    return str(path)


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


class TestDivergence:
    def test_umegaki_self(self, state_file, capsys):
        assert main(["divergence", "umegaki", state_file, state_file]) == 0
        out = capsys.readouterr().out
        value = float(out.split("=")[1].split()[0])
        assert abs(value) <= 1e-12

    def test_dh_closed_form(self, state_file, capsys, tmp_path):
        assert main(["divergence", "dh", "--eps", "0.1", state_file, state_file, "--out", str(tmp_path)]) == 0
        data = json.loads((tmp_path / "divergence-dh.json").read_text())
        assert math.isclose(data["beta"], 0.9, abs_tol=1e-9)
        assert math.isclose(data["bracket"]["lower"], -math.log2(0.9), abs_tol=1e-8)
        assert math.isclose(-math.log2(0.9), 0.15200309344504997, rel_tol=1e-15)
        assert (tmp_path / "divergence-dh.meta.json").exists()

    def test_named_states(self, capsys):
        assert main(["divergence", "umegaki", "@zero", "@mixed"]) == 0
        assert "= 1 bits" in capsys.readouterr().out

    def test_infinite(self, capsys):
        assert main(["divergence", "umegaki", "@zero", "@one"]) == 0
        assert "inf" in capsys.readouterr().out

    def test_missing_file(self, state_file):
        assert main(["divergence", "umegaki", state_file, "/nonexistent/b.json"]) == 2

    def test_dimension_mismatch(self, state_file, tmp_path, rng):
        other = tmp_path / "b.json"
        save_operator(random_density(rng, 3), other)
        assert main(["divergence", "umegaki", state_file, str(other)]) == 2

    def test_usage(self):
        assert main(["divergence", "renyi", "a", "b"]) == 2
        assert main([]) == 2


class TestScan:
    def test_bundled_sep_vs_werner(self, tmp_path):
        assert main(["scan", "sep-vs-werner", "--out", str(tmp_path)]) == 0
        for eps in ("0.1", "0.25"):
            with open(tmp_path / f"sep-vs-werner-eps{eps}.csv") as fh:
                rows = list(csv.DictReader(fh))
            assert [int(r["n"]) for r in rows] == [1, 2, 3]
            for r in rows:
                assert float(r["beta_lower"]) <= float(r["beta_upper"])
                assert float(r["relent_lower"]) <= float(r["relent_upper"])
            assert (tmp_path / f"sep-vs-werner-eps{eps}.meta.json").exists()

    def test_simple_matches_np(self, tmp_path):
        assert main(["scan", "simple-vs-simple", "--out", str(tmp_path), "--eps", "0.1"]) == 0
        with open(tmp_path / "simple-vs-simple-eps0.1.csv") as fh:
            rows = list(csv.DictReader(fh))
        p = DensityOperator.diagonal([0.5, 0.5])
        q = DensityOperator.diagonal([0.25, 0.75])
        for r in rows:
            n = int(r["n"])
            beta = neyman_pearson_simple(tensor_power(p, n), tensor_power(q, n), 0.1).beta
            assert math.isclose(float(r["beta_lower"]), beta, rel_tol=1e-10)
            assert math.isclose(float(r["beta_upper"]), beta, rel_tol=1e-10)

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["scan", "simple-vs-simple", "--out", str(a), "--nmax", "2"]) == 0
        assert main(["scan", "simple-vs-simple", "--out", str(b), "--nmax", "2"]) == 0
        for name in ("simple-vs-simple-eps0.1.csv", "simple-vs-simple-eps0.25.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_cap(self, tmp_path, capsys):
        assert main(["scan", "sep-vs-werner", "--nmax", "7", "--out", str(tmp_path)]) == 3
        assert "n=7" in capsys.readouterr().err

    def test_malformed_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"schema": 1,, }')
        assert main(["scan", str(bad)]) == 2
        assert "bad.json:1:14" in capsys.readouterr().err

    def test_invalid_eps(self, tmp_path):
        cfg = json.loads((SCENARIO_DIR / "simple-vs-simple.json").read_text())
        cfg["eps"] = [1.5]
        assert main(["scan", write_json(tmp_path / "c.json", cfg)]) == 2

    def test_missing_state_file(self, tmp_path):
        cfg = {"schema": 1, "scenario": "x", "null": {"kind": "IIDPower", "base": [{"file": "nope.json"}]},
               "alternative": {"base": ["zero"], "mode": "iid"}, "eps": [0.1], "n": {"min": 1, "max": 1}}
        assert main(["scan", write_json(tmp_path / "c.json", cfg)]) == 2

    def test_requires_config(self):
        assert main(["scan"]) == 2


class TestCheck:
    def test_passes_and_deterministic(self, tmp_path):
        cfg = write_json(tmp_path / "h.json", SMALL_CHECK)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["check", "--config", cfg, "--seed", "5", "--out", str(a)]) == 0
        assert main(["check", "--config", cfg, "--seed", "5", "--out", str(b)]) == 0
        assert (a / "check-report.json").read_bytes() == (b / "check-report.json").read_bytes()
        assert json.loads((a / "check-report.json").read_text())["seed"] == 5

    def test_injected(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "h.json", {"checks": {k: False for k in SMALL_CHECK["checks"]}})
        assert main(["check", "--config", cfg, "--inject-violation"]) == 1
        assert "FAIL" in capsys.readouterr().out

    def test_config_error(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "h.json", {"checks": {"pinching": {"nope": 1}}})
        assert main(["check", "--config", cfg]) == 2
        assert "checks.pinching.nope" in capsys.readouterr().err


class TestFamily:
    def test_enumerate(self, capsys):
        assert main(["family", "enumerate", "stab", "--qubits", "2"]) == 0
        assert len(json.loads(capsys.readouterr().out)) == 60

    def test_enumerate_out(self, tmp_path):
        assert main(["family", "enumerate", "stab", "--qubits", "1", "--out", str(tmp_path)]) == 0
        states = json.loads((tmp_path / "stabiliser-1q.json").read_text())
        assert len(states) == 6
        DensityOperator.from_dict(states[0])

    def test_audit_stab(self, capsys):
        assert main(["family", "audit", "stab", "--qubits", "1"]) == 0
        out = capsys.readouterr().out
        for key in ("Q.I(a)", "Q.I(b)", "Q.II", "Q.III"):
            line = next(l for l in out.splitlines() if l.startswith(key + " "))
            assert "pass" in line
        assert "Q.IV" in out

    def test_audit_av(self, capsys):
        main(["family", "audit", "av", "--base", "zero,plus"])
        out = capsys.readouterr().out
        line = next(l for l in out.splitlines() if l.startswith("Q.II "))
        assert "pass" in line

    def test_unsupported(self):
        assert main(["family", "enumerate", "sep"]) == 2
        assert main(["family", "audit", "magic"]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "qstein", "--version"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "qstein" in res.stdout
