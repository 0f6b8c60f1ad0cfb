import json
from pathlib import Path

import pytest

from leafavg import ConfigError
from leafavg.cli import (
    _CONFIG_DIR,
    load_config,
    main,
    model_from_config,
)

B3_MODEL = {
    "kind": "finite_group",
    "ambient_dim": 3,
    "generators": [
        [0, 1, 0, 1, 0, 0, 0, 0, 1],
        [1, 0, 0, 0, 0, 1, 0, 1, 0],
        [-1, 0, 0, 0, 1, 0, 0, 0, 1],
    ],
    "max_group_size": 96,
}


def write_config(path: Path, data: dict) -> Path:
    path.write_text(json.dumps(data))
    return path


# -- config handling ---------------------------------------------------------------


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")


def test_load_config_bad_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"model": }')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert "line 1" in str(info.value)


def test_load_config_requires_model(tmp_path):
    path = write_config(tmp_path / "nomodel.json", {"params": {}})
    with pytest.raises(ConfigError):
        load_config(path)


def test_model_from_config_nested_and_flat():
    nested = dict(B3_MODEL, generators=[
        [[0, 1, 0], [1, 0, 0], [0, 0, 1]],
        [[1, 0, 0], [0, 0, 1], [0, 1, 0]],
        [[-1, 0, 0], [0, 1, 0], [0, 0, 1]],
    ])
    assert model_from_config(nested).order == model_from_config(B3_MODEL).order == 48


def test_model_from_config_rational_strings():
    cfg = {
        "kind": "finite_group",
        "ambient_dim": 2,
        "generators": [["3/5", "-4/5", "4/5", "3/5"]],
        "max_group_size": 8,
    }
    from leafavg import GroupTooLarge
    with pytest.raises(GroupTooLarge):
        model_from_config(cfg)


def test_model_from_config_unknown_kind():
    with pytest.raises(ConfigError):
        model_from_config({"kind": "banana"})


def test_float_entry_in_exact_matrix_rejected():
    cfg = dict(B3_MODEL, mode="exact",
               generators=[[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]])
    with pytest.raises(ConfigError):
        model_from_config(cfg)


# -- tasks through main() -------------------------------------------------------------


def test_avg_task(tmp_path):
    out = tmp_path / "out"
    code = main(["avg", "--config", str(_CONFIG_DIR / "c4.json"), "--out", str(out)])
    assert code == 0
    payload = json.loads((out / "avg_certificate.json").read_text())
    assert payload["passed"] is True
    assert payload["engine"] == "exact"
    assert payload["residuals"]["idempotence"] == 0.0


def test_generators_task_with_molien_check(tmp_path):
    out = tmp_path / "out"
    code = main(["generators", "--config", str(_CONFIG_DIR / "b2.json"), "--out", str(out)])
    assert code == 0
    payload = json.loads((out / "generators.json").read_text())
    assert payload["molien_check"]["match"] is True
    assert [g["degree"] for g in payload["generators"]] == [2, 4]


def test_verify_task_corrupted_generators(tmp_path):
    gen_file = tmp_path / "gens.json"
    gen_file.write_text(json.dumps({
        "ambient_dim": 3,
        "mode": "exact",
        "degree_cap": 2,
        "generators": [{"degree": 2, "text": "x1^2 + x2^2"}],
        "dims_by_degree": {},
        "provenance": {"source": "deliberately corrupted"},
    }))
    config = write_config(tmp_path / "run.json", {
        "name": "corrupted",
        "model": B3_MODEL,
        "params": {"seed": 3, "generators_file": "gens.json"},
    })
    out = tmp_path / "out"
    code = main(["verify", "--config", str(config), "--out", str(out)])
    assert code == 2
    payload = json.loads((out / "verify_report.json").read_text())
    assert payload["passed"] is False
    kinds = {f["type"] for f in payload["failures"]}
    assert "IdentityViolation" in kinds


def test_verify_task_good_generators(tmp_path):
    config = write_config(tmp_path / "run.json", {
        "name": "b3",
        "model": B3_MODEL,
        "params": {"seed": 3, "D": 4},
    })
    out = tmp_path / "out"
    assert main(["verify", "--config", str(config), "--out", str(out)]) == 0


def test_separate_task_failure_exit_code(tmp_path):
    config = write_config(tmp_path / "run.json", {
        "name": "t2_r2_only",
        "model": {"kind": "torus", "weight_matrix": [[1, 0], [0, 1]], "n_fix": 0},
        "params": {
            "seed": 9,
            "num_pairs": 40,
            "tol_same": 1e-9,
            "generators": [{"degree": 2, "text": "x1^2 + x2^2 + x3^2 + x4^2"}],
        },
    })
    out = tmp_path / "out"
    code = main(["separate", "--config", str(config), "--out", str(out)])
    assert code == 2
    payload = json.loads((out / "separation_certificate.json").read_text())
    assert payload["verdict"] == "fail"
    assert payload["num_failures"] > 0


def test_export_task(tmp_path):
    out = tmp_path / "out"
    code = main(["export", "--config", str(_CONFIG_DIR / "hopf.json"), "--out", str(out)])
    assert code == 0
    lines = (out / "quotient_image.csv").read_text().strip().splitlines()
    assert len(lines) == 301  # header + rows from the config


def test_seed_override_changes_artifacts(tmp_path):
    out1, out2, out3 = (tmp_path / n for n in ("a", "b", "c"))
    config = str(_CONFIG_DIR / "b2.json")
    assert main(["separate", "--config", config, "--out", str(out1)]) == 0
    assert main(["separate", "--config", config, "--out", str(out2), "--seed", "123"]) == 0
    assert main(["separate", "--config", config, "--out", str(out3), "--seed", "123"]) == 0
    base = (out1 / "separation_certificate.json").read_bytes()
    alt = (out2 / "separation_certificate.json").read_bytes()
    alt2 = (out3 / "separation_certificate.json").read_bytes()
    assert alt != base
    assert alt == alt2


def test_missing_seed_is_config_error(tmp_path):
    config = write_config(tmp_path / "run.json", {
        "name": "no_seed",
        "model": {"kind": "torus", "weight_matrix": [[1], [1]], "n_fix": 0},
        "params": {"D": 2},
    })
    out = tmp_path / "out"
    assert main(["generators", "--config", str(config), "--out", str(out)]) == 1


def test_missing_config_is_error(tmp_path):
    assert main(["avg", "--out", str(tmp_path)]) == 1


def test_selftest_missing_configs(tmp_path, monkeypatch):
    import leafavg.cli as cli
    monkeypatch.setattr(cli, "_CONFIG_DIR", tmp_path)
    assert main(["selftest", "--out", str(tmp_path / "out")]) == 1


def test_avg_inhomogeneous_rejected(tmp_path):
    config = write_config(tmp_path / "run.json", {
        "name": "bad_f",
        "model": {"kind": "torus", "weight_matrix": [[1], [1]], "n_fix": 0},
        "params": {"seed": 1, "f": "x1^2 + x1"},
    })
    assert main(["avg", "--config", str(config), "--out", str(tmp_path / "out")]) == 1
