import numpy as np
import pytest

from app.main import main
from app.services.matrix_io import read_matrix
from config import config
from tests.helpers import JORDAN_2, SMALL_SUITE, SWAP_2, UPPER_12, read_json, save


def stdout_fields(capsys) -> dict:
    fields = {}
    for line in capsys.readouterr().out.splitlines():
        key, _, value = line.partition(": ")
        fields[key] = value
    return fields


class TestTransformCommand:
    @pytest.mark.parametrize("t, expected", [
        (JORDAN_2, np.zeros((2, 2))),
        (np.diag([1.0, 2.0]), np.diag([1.0, 2.0])),
        (SWAP_2, np.sqrt(2) * np.array([[0, 1], [1, 0]])),
    ])
    def test_examples(self, tmp_path, t, expected):
        path = save(tmp_path, "t.json", t)
        assert main(["transform", path, "--out", str(tmp_path / "out")]) == 0
        np.testing.assert_allclose(read_matrix(tmp_path / "out" / "transform.json"), expected, atol=1e-12)

    def test_prints_summary(self, tmp_path, capsys):
        path = save(tmp_path, "t.json", np.diag([1.0, 2.0]))
        main(["transform", path, "--out", str(tmp_path)])
        fields = stdout_fields(capsys)
        assert float(fields["normality_residual"]) < 1e-12
        assert float(fields["norm"]) == pytest.approx(np.sqrt(5))

    def test_bad_json_exits_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["transform", str(path), "--out", str(tmp_path)]) == 2

    def test_missing_file_exits_2(self, tmp_path):
        assert main(["transform", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == 2


class TestIterateAndLimit:
    def test_iterate_dumps_matrices(self, tmp_path):
        path = save(tmp_path, "t.json", UPPER_12)
        out = tmp_path / "out"
        assert main(["iterate", path, "--steps", "3", "--dump-matrices", "--out", str(out)]) == 0
        assert len((out / "trajectory.csv").read_text().splitlines()) == 1 + 4
        for k in range(4):
            assert (out / f"iter_{k}.json").is_file()
        np.testing.assert_array_equal(read_matrix(out / "final.json"), read_matrix(out / "iter_3.json"))

    def test_limit_converges(self, tmp_path, capsys):
        path = save(tmp_path, "t.json", UPPER_12)
        assert main(["limit", path, "--out", str(tmp_path)]) == 0
        report = read_json(tmp_path / "report.json")
        assert report["converged"] is True
        assert report["method"] == "iteration"
        limit_matrix = read_matrix(tmp_path / "limit.json")
        np.testing.assert_allclose(np.sort(np.linalg.eigvals(limit_matrix).real), [1, 2], atol=1e-8)
        assert stdout_fields(capsys)["converged"] == "True"

    def test_normal_matrix_needs_no_iterations(self, tmp_path):
        path = save(tmp_path, "t.json", np.diag([1.0, 1j]))
        assert main(["limit", path, "--out", str(tmp_path)]) == 0
        assert read_json(tmp_path / "report.json")["iterations_used"] == 0

    def test_iteration_cap_exits_4(self, tmp_path):
        path = save(tmp_path, "t.json", np.array([[1, 5], [0, 2]]))
        assert main(["limit", path, "--max-iter", "1", "--out", str(tmp_path)]) == 4
        assert read_json(tmp_path / "report.json")["converged"] is False

    def test_reduce_singular(self, tmp_path):
        path = save(tmp_path, "t.json", JORDAN_2)
        assert main(["limit", path, "--reduce-singular", "--out", str(tmp_path)]) == 0
        assert read_json(tmp_path / "report.json")["method"] == "reduced"
        assert len((tmp_path / "trajectory.csv").read_text().splitlines()) == 3

    def test_cap_on_jordan_block_exits_4(self, tmp_path):
        path = save(tmp_path, "t.json", [[2, 50], [0, 2]])
        assert main(["limit", path, "--max-iter", "1", "--out", str(tmp_path)]) == 4
        report = read_json(tmp_path / "report.json")
        assert report["converged"] is False
        assert report["method"] == "iteration"

    def test_single_eigenvalue_identification_still_exits_4(self, tmp_path):
        path = save(tmp_path, "t.json", [[2, 50], [0, 2]])
        args = ["limit", path, "--max-iter", "1", "--identify-single-eigenvalue", "--out", str(tmp_path)]
        assert main(args) == 4
        report = read_json(tmp_path / "report.json")
        assert report["converged"] is False
        assert report["method"] == "single_eigenvalue"
        np.testing.assert_allclose(read_matrix(tmp_path / "limit.json"), 2 * np.eye(2), atol=1e-12)


class TestOrbitCommands:
    @pytest.mark.parametrize("diag, k_d, diffeo", [
        ("1,2", 2 * np.sqrt(2) / 3, "true"),
        ("1,-1", 0.0, "false"),
        ("1,i", np.sqrt(2) / 2, "true"),
        ("1,1", 0.0, "true"),
    ])
    def test_kd(self, capsys, tmp_path, diag, k_d, diffeo):
        assert main(["kd", "--diag", diag, "--out", str(tmp_path)]) == 0
        fields = stdout_fields(capsys)
        assert float(fields["k_d"]) == pytest.approx(k_d, abs=1e-15)
        assert fields["local_diffeo"] == diffeo

    def test_kd_with_zero_entry_exits_3(self, tmp_path):
        assert main(["kd", "--diag", "0,1", "--out", str(tmp_path)]) == 3

    def test_kd_with_bad_entry_exits_2(self, tmp_path):
        assert main(["kd", "--diag", "1,2j", "--out", str(tmp_path)]) == 2

    def test_kit(self, tmp_path):
        assert main(["kit", "--diag", "1,2", "--out", str(tmp_path)]) == 0
        kit = read_json(tmp_path / "kit.json")
        assert kit["summary"]["k_d"] == pytest.approx(2 * np.sqrt(2) / 3)
        assert kit["summary"]["a1_norm"] == pytest.approx(2 * np.sqrt(2) / 3, abs=1e-9)
        assert kit["summary"]["local_diffeo"] is True
        assert set(kit["matrices"]) == {"J", "K", "L", "M", "N", "R", "T_plus", "T_minus", "H", "H1", "H2"}
        m = kit["matrices"]["M"]
        assert m["data"][1][0] == pytest.approx(0.1380712, abs=1e-7)

    def test_kit_without_tangent_space(self, tmp_path):
        assert main(["kit", "--diag", "2,2", "--out", str(tmp_path)]) == 0
        assert read_json(tmp_path / "kit.json")["summary"]["local_diffeo_smallest_sv"] is None

    @pytest.mark.parametrize("diag", ["1,2", "1,2,3i", "1,-1"])
    def test_deriv_check(self, tmp_path, capsys, diag):
        assert main(["deriv-check", "--diag", diag, "--trials", "20", "--seed", "1", "--out", str(tmp_path)]) == 0
        fields = stdout_fields(capsys)
        assert float(fields["max_relative_error"]) <= float(fields["threshold"])
        assert float(fields["max_discretization_error"]) < 1e-6

    def test_deriv_check_needs_trials(self, tmp_path):
        assert main(["deriv-check", "--diag", "1,2", "--trials", "0", "--out", str(tmp_path)]) == 2


class TestSuiteCommands:
    def test_shipped_suite(self, tmp_path, capsys):
        assert main(["suite", str(SMALL_SUITE), "--out", str(tmp_path)]) == 0
        assert (tmp_path / "suite.csv").is_file()
        assert stdout_fields(capsys)["asserted_converged"] == "20/20"

    def test_missing_suite_config_exits_2(self, tmp_path):
        assert main(["suite", str(tmp_path / "absent.env"), "--out", str(tmp_path)]) == 2

    def test_rate(self, tmp_path, capsys):
        path = save(tmp_path, "t.json", UPPER_12)
        assert main(["rate", path, "--diag", "1,2", "--out", str(tmp_path)]) == 0
        rate = read_json(tmp_path / "rate.json")
        assert rate["satisfied"] is True
        assert stdout_fields(capsys)["satisfied"] == "true"

    def test_rate_from_computed_spectrum(self, tmp_path):
        path = save(tmp_path, "t.json", UPPER_12)
        assert main(["rate", path, "--out", str(tmp_path)]) == 0
        assert read_json(tmp_path / "rate.json")["k_d_bound"] == pytest.approx(2 * np.sqrt(2) / 3, abs=1e-6)


class TestMatrixCommands:
    def test_multiplicity(self, tmp_path, capsys):
        path = save(tmp_path, "t.json", JORDAN_2)
        assert main(["multiplicity", path, "--mu", "0", "--steps", "1", "--out", str(tmp_path)]) == 0
        rows = read_json(tmp_path / "multiplicity.json")["iterates"]
        assert rows[0] == {"iter": 0, "algebraic": 2, "geometric": 1}
        assert rows[1] == {"iter": 1, "algebraic": 2, "geometric": 2}
        assert "iter 0: algebraic 2, geometric 1" in capsys.readouterr().out

    def test_random_is_reproducible(self, tmp_path):
        for name in ("a", "b"):
            assert main(["random", "--size", "3", "--seed", "11", "--out", str(tmp_path / name)]) == 0
        assert (tmp_path / "a" / "random.json").read_bytes() == (tmp_path / "b" / "random.json").read_bytes()

    def test_random_with_spectrum(self, tmp_path):
        args = ["random", "--size", "3", "--spectrum", "1,2,3i", "--cond", "1", "--seed", "2", "--out", str(tmp_path)]
        assert main(args) == 0
        t = read_matrix(tmp_path / "random.json")
        np.testing.assert_allclose(t @ t.conj().T, t.conj().T @ t, atol=1e-12)
        np.testing.assert_allclose(np.sort_complex(np.linalg.eigvals(t)), [3j, 1, 2], atol=1e-9)


class TestUsage:
    def test_no_command(self):
        assert main([]) == 2

    def test_unknown_flag(self, tmp_path):
        assert main(["kd", "--diag", "1,2", "--bogus"]) == 2

    def test_bad_log_mode(self, monkeypatch, tmp_path):
        monkeypatch.setattr(config, "LOG_MODE", "loud")
        assert main(["kd", "--diag", "1,2", "--out", str(tmp_path)]) == 2

    def test_help(self):
        assert main(["--help"]) == 0
