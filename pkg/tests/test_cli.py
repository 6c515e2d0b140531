import json
import stat

import pytest

from addressless.addrcodec import CipherKey, SaltParams, generate_address, RoutingPrefix
from addressless.cli import main
from addressless.config import ConfigError, load_config, margin_violation

T0 = 1_700_000_000_000
NOW = T0 + 5_000_000


def write_config(tmp_path, **over):
    key = tmp_path / "k.hex"
    if not key.exists():
        key.write_text("133457799bbcdff1\n")
    cfg = {
        "cipher": "reference-des",
        "key_file": "k.hex",
        "salt": {"t0_ms": T0, "step_x_ms": 1, "window": {"kind": "symmetric", "threshold_ms": 10_000}},
        "prefixes": ["2001:db8:1::/64"],
        "ports": {"entrance": 8080, "service": 80},
        "lb_strategy": "static",
        "cache_mode": "off",
        "idle_timeout": 300_000,
    }
    cfg.update(over)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_keygen_sizes_and_mode(tmp_path, capsys):
    assert main(["keygen", "--out", str(tmp_path / "a.hex")]) == 0
    text = (tmp_path / "a.hex").read_text().strip()
    assert len(text) == 16 and text == text.lower()
    assert len(CipherKey.from_hex(text).material) == 8
    assert stat.S_IMODE((tmp_path / "a.hex").stat().st_mode) == 0o600
    assert main(["keygen", "--cipher", "toy16", "--out", str(tmp_path / "t.hex")]) == 0
    assert len((tmp_path / "t.hex").read_text().strip()) == 4


def test_keygen_two_draws_differ(tmp_path):
    main(["keygen", "--out", str(tmp_path / "a.hex")])
    main(["keygen", "--out", str(tmp_path / "b.hex")])
    assert (tmp_path / "a.hex").read_text() != (tmp_path / "b.hex").read_text()


def test_keygen_refuses_overwrite(tmp_path, capsys):
    main(["keygen", "--out", str(tmp_path / "a.hex")])
    before = (tmp_path / "a.hex").read_text()
    assert main(["keygen", "--out", str(tmp_path / "a.hex")]) == 2
    assert (tmp_path / "a.hex").read_text() == before


def test_keygen_writes_loadable_config(tmp_path):
    cfgp = tmp_path / "c.json"
    assert main(["keygen", "--out", str(tmp_path / "k.hex"), "--config", str(cfgp),
                 "--t0-ms", "1234", "--prefix", "2001:db8:5::/64"]) == 0
    cfg = load_config(cfgp)
    assert cfg.salt == SaltParams.symmetric(1234, 1, 10_000)
    assert cfg.margin == pytest.approx(50.7123, abs=1e-4)


def test_load_config_example_margin(tmp_path):
    cfg = load_config(write_config(tmp_path))
    assert cfg.margin == pytest.approx(50.71, abs=0.01)
    assert cfg.salt.window == (0, 10_000)


def test_margin_policy_48_bit_suffix():
    msg = margin_violation(48, SaltParams.symmetric(T0, 1, 10_000))
    assert msg is not None and "34.71" in msg
    assert margin_violation(64, SaltParams.symmetric(T0, 1, 10_000)) is None


def test_margin_violation_rejected_unless_insecure(tmp_path):
    salt = {"t0_ms": T0, "step_x_ms": 1, "window": {"kind": "symmetric", "threshold_ms": 2**19}}
    path = write_config(tmp_path, salt=salt)
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    assert "margin" in str(exc.value)
    assert load_config(path, insecure=True).insecure


def test_toy16_requires_insecure(tmp_path):
    (tmp_path / "k.hex").write_text("a5c3\n")
    path = write_config(tmp_path, cipher="toy16")
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    assert any("toy16" in e for e in exc.value.errors)
    assert load_config(path, insecure=True).key.cipher == "toy16"


def test_config_collects_all_errors(tmp_path):
    path = write_config(
        tmp_path,
        cipher="rot13",
        salt={"t0_ms": -1, "step_x_ms": 0, "window": {"kind": "symmetric", "threshold_ms": 0}},
        prefixes=["2001:db8::/48"],
        lb_strategy="fastest",
        cache_mode="maybe",
        idle_timeout=0,
    )
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    assert len(exc.value.errors) >= 7


def test_config_asymmetric_window(tmp_path):
    salt = {"t0_ms": T0, "step_x_ms": 1,
            "window": {"kind": "asymmetric", "threshold1_ms": 500, "threshold2_ms": 9_500}}
    assert load_config(write_config(tmp_path, salt=salt)).salt.window == (-500, 9_500)


def test_config_bad_json_and_missing_key(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_config(bad)
    path = write_config(tmp_path, key_file="nope.hex")
    with pytest.raises(ConfigError):
        load_config(path)


def test_genaddr_and_verify(tmp_path, capsys):
    path = write_config(tmp_path)
    assert main(["genaddr", "--config", str(path), "--src", "2001:db8::a", "--now-ms", str(NOW)]) == 0
    da = capsys.readouterr().out.strip()
    cfg = load_config(path)
    assert da == str(generate_address("2001:db8::a", RoutingPrefix.parse("2001:db8:1::/64"), cfg.key, cfg.salt, NOW))
    args = ["verify", "--config", str(path), "--src", "2001:db8::a", "--dst", da]
    assert main(args + ["--now-ms", str(NOW + 100)]) == 0
    assert capsys.readouterr().out.strip() == "true"
    assert main(args + ["--now-ms", str(NOW + 20_000)]) == 1
    assert capsys.readouterr().out.strip() == "false"
    assert main(["verify", "--config", str(path), "--src", "2001:db8::a", "--dst", "2001:db8:9::1"]) == 1


def test_config_error_exit_code(tmp_path, capsys):
    path = write_config(tmp_path, prefixes=[])
    assert main(["genaddr", "--config", str(path), "--src", "::1"]) == 2
    assert "prefixes" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_sim_run(tmp_path):
    sc = tmp_path / "sc.json"
    sc.write_text(json.dumps({"kind": "legit", "clients": 20}))
    out = tmp_path / "m.json"
    assert main(["sim", "run", "--scenario", str(sc), "--seed", "3", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["metrics"]["admits"] == 20
    assert data["scenario"]["seed"] == 3


def test_sim_run_invalid_scenario(tmp_path, capsys):
    sc = tmp_path / "sc.json"
    sc.write_text(json.dumps({"kind": "replay"}))
    assert main(["sim", "run", "--scenario", str(sc)]) == 2
    assert "intercept_prob" in capsys.readouterr().err


def test_analyze_calculators(capsys):
    assert main(["analyze", "margin", "--bits", "64", "--p", "10000"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["safe"] and rep["margin"] == pytest.approx(50.7123, abs=1e-4)
    assert main(["analyze", "scantime", "--bits", "64", "--p", "10000"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["expected_time"] == pytest.approx(322122.55, abs=0.01)
    assert rep["unit"] == "formula units"
    assert main(["analyze", "margin", "--bits", "64"]) == 2


def test_analyze_generated_samples(tmp_path, capsys):
    path = write_config(tmp_path)
    assert main(["analyze", "entropy", "--config", str(path), "--count", "20000"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["n"] == 20000 and min(rep["entropy"]) > 0.95
    assert main(["analyze", "uniformity", "--config", str(path), "--count", "20000",
                 "--src", "2001:db8::1", "--src", "2001:db8::2"]) == 0
    assert json.loads(capsys.readouterr().out)["n"] == 20000


def test_analyze_suffix_file(tmp_path, capsys):
    f = tmp_path / "s.txt"
    f.write_text("8000000080000000\n0000000000000000\n")
    out = tmp_path / "scatter.csv"
    assert main(["analyze", "scatter", "--input", str(f), "--out", str(out)]) == 0
    assert out.read_text().splitlines() == ["x,y,tag", "0.5,0.5,collected", "0.0,0.0,collected"]
    assert main(["analyze", "uniformity", "--input", str(f)]) == 2
