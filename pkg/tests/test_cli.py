import itertools

import numpy as np
import pytest
import yaml

from nomasim.cli import main
from nomasim.errors import ConfigurationError, ContractError
from nomasim.experiments import (load_config, parse_config, run_calibrate, run_grantfree_curve,
                                 run_link_curve)
from nomasim.experiments.report import (GRANTFREE_COLUMNS, LINK_COLUMNS, SUPPORTED_PAR_COLUMNS,
                                        companion_path, read_csv)
from nomasim.seeds import derive_stream_seed

TAGS = ("fading", "noise", "traffic", "signature", "shuffle")


def _link(**over):
    cfg = {"experiment": "link", "master_seed": 3, "n_trials": 40, "chunk_size": 20,
           "sweep": [4.0, 8.0],
           "schemes": [{"name": "pair", "users": [
               {"mode": "seq_dense", "scrambler_seed": 1, "spreading": {"length": 4, "index": 0}},
               {"mode": "seq_dense", "scrambler_seed": 2, "spreading": {"length": 4, "index": 1}}],
               "detector": {"kind": "mmse_mu"}}]}
    cfg.update(over)
    return cfg


def _gf(**over):
    cfg = {"experiment": "grantfree", "master_seed": 5, "n_trials": 2, "n_slots": 20,
           "sweep": [0.0, 0.05], "traffic": {"n_users": 6}}
    cfg.update(over)
    return cfg


def _write(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


# -- seeds ------------------------------------------------------------------


def test_seed_is_pure_function():
    assert derive_stream_seed(1, "noise", [2, 3]) == derive_stream_seed(1, "noise", (2, 3))
    assert 0 <= derive_stream_seed(1, "noise", [2, 3]) < 2 ** 64


def test_seed_collision_scan():
    seen = set()
    for tag, a, b in itertools.product(TAGS, range(50), range(40)):
        seen.add(derive_stream_seed(2024, tag, (a, b)))
    assert len(seen) == len(TAGS) * 50 * 40


def test_seed_unknown_tag():
    with pytest.raises(ContractError):
        derive_stream_seed(0, "weather", [])


# -- configuration ----------------------------------------------------------


def test_config_typo_names_the_field():
    cfg = _link()
    cfg["schemes"][0]["users"][0]["spreadin"] = cfg["schemes"][0]["users"][0].pop("spreading")
    with pytest.raises(ConfigurationError, match=r"schemes\.0\.users\.0"):
        parse_config(cfg)


@pytest.mark.parametrize("bad", [
    {"sweep": []},
    {"sweep": [5.0, 1.0]},
    {"n_trials": 0},
    {"experiment": "sweep"},
    {"snr_definition": "es_n0"},
])
def test_config_rejections(bad):
    with pytest.raises(ConfigurationError):
        parse_config(_link(**bad))


def test_config_kind_mismatch(tmp_path):
    with pytest.raises(ConfigurationError, match="command is 'grantfree'"):
        load_config(_write(tmp_path, _link()), "grantfree")


def test_bundled_configs_parse():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    files = sorted(root.glob("*.yaml"))
    assert files
    for f in files:
        load_config(f)


# -- link runner ------------------------------------------------------------


def test_link_csv_schema(tmp_path):
    out = tmp_path / "link.csv"
    rows = run_link_curve(parse_config(_link()), out)
    text = out.read_text().splitlines()
    assert text[0] == ",".join(LINK_COLUMNS)
    assert len(text) == 1 + 2 * 2 and len(rows) == 4
    for r in read_csv(out):
        assert 0.0 <= float(r["bler"]) <= 1.0
        assert float(r["sum_goodput_bits_per_re"]) >= 0.0


def test_link_single_user_high_snr(tmp_path):
    cfg = _link(n_trials=2000, chunk_size=500, sweep=[20.0], schemes=[{
        "name": "one", "users": [{"mode": "seq_dense", "spreading": {"length": 1}}],
        "detector": {"kind": "mf"}}])
    rows = run_link_curve(parse_config(cfg))
    assert rows[0]["bler"] < 1e-3


def test_link_worker_count_invariance(tmp_path):
    cfg = parse_config(_link())
    run_link_curve(cfg, tmp_path / "a.csv", 1)
    run_link_curve(cfg, tmp_path / "b.csv", 2)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


# -- grant-free runner ------------------------------------------------------


def test_grantfree_zero_rate(tmp_path):
    out = tmp_path / "gf.csv"
    rows, par = run_grantfree_curve(parse_config(_gf(sweep=[0.0])), out)
    assert {r["scheme"] for r in rows} == {"noma", "ofdma_baseline"}
    assert all(r["pdr"] == 0.0 and r["satisfied_ratio"] == 1.0 for r in rows)
    assert par == []
    assert out.read_text().splitlines()[0] == ",".join(GRANTFREE_COLUMNS)


def test_grantfree_supported_par_companion(tmp_path):
    out = tmp_path / "gf.csv"
    cfg = _gf(schemes=["ofdma_baseline"], supported_par={
        "target_pdr": 0.05, "tol": 0.01, "bracket": [0.0, 0.2], "grid_points": 3})
    _, par = run_grantfree_curve(parse_config(cfg), out)
    comp = companion_path(out, "supported_par")
    assert comp.read_text().splitlines()[0] == ",".join(SUPPORTED_PAR_COLUMNS)
    assert len(par) == 1 and 0.0 <= par[0]["supported_par"] <= 0.2


# -- calibration ------------------------------------------------------------


def test_calibrate_all_pass():
    rows = run_calibrate(parse_config({"experiment": "calibrate", "n_trials": 5}))
    assert len({r["name"] for r in rows}) == len(rows) == 8
    assert all(r["passed"] for r in rows)


def test_calibrate_fault_injection(tmp_path):
    rows = run_calibrate(parse_config({"experiment": "calibrate", "n_trials": 5}),
                         inject_fault="crc16_check_value")
    failed = [r["name"] for r in rows if not r["passed"]]
    assert failed == ["crc16_check_value"]


# -- command line -----------------------------------------------------------


def test_cli_link_and_rerun_identical(tmp_path, capsys):
    cfg = _write(tmp_path, _link())
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["link", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["link", "--config", str(cfg), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert "wrote 4 rows" in capsys.readouterr().out


def test_cli_master_seed_override(tmp_path):
    cfg = _write(tmp_path, _link(sweep=[2.0]))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["link", "--config", str(cfg), "--out", str(a)])
    main(["link", "--config", str(cfg), "--out", str(b), "--master-seed", "99"])
    assert a.read_bytes() != b.read_bytes()


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = _link()
    bad["schemes"][0]["detector"]["kind"] = "sphere"
    cfg = _write(tmp_path, bad)
    assert main(["link", "--config", str(cfg), "--out", str(tmp_path / "x.csv")]) == 2
    assert "schemes.0.detector.kind" in capsys.readouterr().err
    assert not (tmp_path / "x.csv").exists()


def test_cli_missing_file_and_bad_workers(tmp_path):
    assert main(["link", "--config", str(tmp_path / "nope.yaml"), "--out", "x.csv"]) == 2
    cfg = _write(tmp_path, _link())
    assert main(["link", "--config", str(cfg), "--out", "x.csv", "--workers", "0"]) == 2


def test_cli_grantfree(tmp_path, capsys):
    cfg = _write(tmp_path, _gf(sweep=[0.0]))
    out = tmp_path / "gf.csv"
    assert main(["grantfree", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(read_csv(out)) == 2


def test_cli_calibrate_exit_codes(tmp_path, capsys):
    out = tmp_path / "cal.csv"
    assert main(["calibrate", "--out", str(out)]) == 0
    assert "FAIL" not in capsys.readouterr().out
    assert main(["calibrate", "--out", str(out), "--inject-fault", "demap_vs_naive"]) == 1
    rows = {r["name"]: r["passed"] for r in read_csv(out)}
    assert rows["demap_vs_naive"] == "false"
    assert sum(v == "false" for v in rows.values()) == 1


def test_report_rejects_non_finite(tmp_path):
    from nomasim.experiments.report import write_csv
    with pytest.raises(ValueError):
        write_csv(tmp_path / "x.csv", ("a",), [{"a": float(np.nan)}])
