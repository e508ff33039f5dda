import json

import pytest

from dsbb84.cli import main

SMALL_CONSTANTS = {
    "n_block": 5,
    "m": 20000,
    "p_intensity": {"S": 0.4, "D": 0.5, "V": 0.1},
    "mu": {"S": 0.8, "D": 0.3, "V": 0.0},
    "p_basis_alice": 0.7,
    "p_basis_bob": 0.7,
    "n_verify": 16,
    "e_bit_assumed": 0.01,
    "eps_secrecy": 0.05,
}
SMALL_CHANNEL = {"eta_ch": 1.0, "e_mis": 0.002, "p_dark": 1e-6, "eta_det": 0.9}
FIBER_CONSTANTS = {
    "n_block": 10,
    "m": 100000,
    "p_intensity": {"S": 0.7, "D": 0.2, "V": 0.1},
    "mu": {"S": 0.5, "D": 0.1, "V": 0.001},
    "p_basis_alice": 0.8,
    "p_basis_bob": 0.8,
    "n_verify": 32,
    "e_bit_assumed": 0.03,
    "eps_secrecy": 1e-6,
}
FIBER_CHANNEL = {
    "loss_db_per_km": 0.2,
    "distance_km": 100.0,
    "e_mis": 0.01,
    "p_dark": 1e-6,
    "eta_det": 0.2,
}


@pytest.fixture
def config_files(tmp_path):
    paths = {}
    for name, obj in [
        ("small_constants", SMALL_CONSTANTS),
        ("small_channel", SMALL_CHANNEL),
        ("fiber_constants", FIBER_CONSTANTS),
        ("fiber_channel", FIBER_CHANNEL),
    ]:
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(obj))
        paths[name] = str(path)
    return paths


def test_keyrate_success(config_files, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    code = main([
        "keyrate",
        "--constants", config_files["small_constants"],
        "--channel", config_files["small_channel"],
        "--json", str(report_path),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "n_fin=622" in out
    report = json.loads(report_path.read_text())
    assert report["schema_version"] == 1
    assert report["command"] == "keyrate"
    assert report["constants"]["mu"]["S"] == 0.8
    assert report["channel"]["eta_ch"] == 1.0
    assert report["result"]["n_fin"] == 622
    assert report["result"]["abort"] is False


def test_keyrate_abort_exit_code(config_files, capsys):
    code = main([
        "keyrate",
        "--constants", config_files["fiber_constants"],
        "--channel", config_files["fiber_channel"],
    ])
    assert code == 1
    assert "abort" in capsys.readouterr().out


def test_simulate_writes_matching_hex_keys(config_files, tmp_path, capsys):
    keys_path = tmp_path / "keys.txt"
    report_path = tmp_path / "sim.json"
    argv = [
        "simulate",
        "--constants", config_files["small_constants"],
        "--channel", config_files["small_channel"],
        "--seed", "42",
        "--keys-out", str(keys_path),
        "--json", str(report_path),
    ]
    assert main(argv) == 0
    lines = keys_path.read_text().splitlines()
    assert len(lines) == 2
    assert lines[0] == lines[1]
    assert lines[0] == lines[0].lower()
    int(lines[0], 16)
    report = json.loads(report_path.read_text())
    assert report["seed"] == 42
    assert report["keys_match"] is True
    assert report["aborted"] is False
    n_fin = report["result"]["n_fin"]
    assert len(lines[0]) == 2 * ((n_fin + 7) // 8)

    rerun = tmp_path / "keys2.txt"
    argv[argv.index(str(keys_path))] = str(rerun)
    assert main(argv) == 0
    assert rerun.read_text() == keys_path.read_text()


def test_simulate_abort_exit_code(config_files, capsys):
    code = main([
        "simulate",
        "--constants", config_files["fiber_constants"],
        "--channel", config_files["fiber_channel"],
        "--seed", "1",
    ])
    assert code == 1
    assert "abort" in capsys.readouterr().out


def test_scan_reports_each_value(config_files, tmp_path, capsys):
    report_path = tmp_path / "scan.json"
    code = main([
        "scan",
        "--constants", config_files["small_constants"],
        "--channel", config_files["small_channel"],
        "--param", "mu_S",
        "--values", "0.5,0.8",
        "--json", str(report_path),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "mu_S=0.5" in out and "mu_S=0.8" in out
    report = json.loads(report_path.read_text())
    assert [row["value"] for row in report["rows"]] == [0.5, 0.8]
    assert report["rows"][1]["result"]["n_fin"] == 622


def test_scan_unknown_parameter_is_config_error(config_files, capsys):
    code = main([
        "scan",
        "--constants", config_files["small_constants"],
        "--channel", config_files["small_channel"],
        "--param", "bogus",
        "--values", "1.0",
    ])
    assert code == 2
    assert "configuration error" in capsys.readouterr().err


def test_verify_bounds_passes(capsys):
    code = main([
        "verify-bounds",
        "--n", "10000",
        "--q", "0.25",
        "--eps", "0.01",
        "--trials", "20000",
        "--seed", "3",
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "forward" in out and "reverse" in out


def test_missing_file_is_config_error(config_files, capsys):
    code = main([
        "keyrate",
        "--constants", "/nonexistent/c.json",
        "--channel", config_files["small_channel"],
    ])
    assert code == 2


def test_malformed_json_is_config_error(tmp_path, config_files, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code = main([
        "keyrate",
        "--constants", str(bad),
        "--channel", config_files["small_channel"],
    ])
    assert code == 2


def test_invalid_constants_is_config_error(tmp_path, config_files, capsys):
    wrong = dict(SMALL_CONSTANTS)
    wrong["mu"] = {"S": 0.1, "D": 0.3, "V": 0.0}
    path = tmp_path / "wrong.json"
    path.write_text(json.dumps(wrong))
    code = main([
        "keyrate",
        "--constants", str(path),
        "--channel", config_files["small_channel"],
    ])
    assert code == 2
    assert "configuration error" in capsys.readouterr().err