import numpy as np
import pytest

from cgmpc.cli import main
from cgmpc.config import RunConfig, default_config_text, parse_text
from cgmpc.constants import ConfigurationError


def test_parse_values():
    vals = parse_text("# comment\nplant.A = [[1, 0.3], [0.01, 1]]\nreference.segments = [(0, -0.2744), (25, -0.2814)]\n"
                      "tuning.lambda_lower = None\n")
    assert vals["plant.A"] == [[1, 0.3], [0.01, 1]]
    assert vals["reference.segments"] == [(0, -0.2744), (25, -0.2814)]
    assert vals["tuning.lambda_lower"] is None
    with pytest.raises(ConfigurationError):
        parse_text("no equals sign")
    with pytest.raises(ConfigurationError):
        parse_text("a = [1,")


def test_lossless_roundtrip():
    cfg = RunConfig.default()
    again = RunConfig.from_text(cfg.to_text())
    assert again.values == cfg.values


def test_default_config_values(example_cfg, example):
    assert example_cfg.segments == [(0, -0.2744), (25, -0.2814)]
    np.testing.assert_array_equal(example_cfg.x0, [0.194, 0.0])
    b = example.bundle
    assert (b.gamma, b.rho, b.beta_w, b.beta_chi, b.lambda_upper, b.decay) == (0.999, 0.3, 200, 3, 90, 0.4)
    assert b.omega == pytest.approx(1 / 300)
    assert example.spec.N == 3


def test_unknown_and_missing_keys():
    with pytest.raises(ConfigurationError, match="unknown"):
        RunConfig.from_text(default_config_text() + "tuning.bogus = 1\n")
    with pytest.raises(ConfigurationError, match="missing"):
        RunConfig.from_text("plant.A = [[1]]\n")


def test_nonpd_weight_rejected():
    cfg = RunConfig.default().with_values(ocp__Q=[[1, 0], [0, -1]])
    with pytest.raises(ConfigurationError):
        cfg.build()


def write_cfg(tmp_path, cfg):
    p = tmp_path / "run.cfg"
    p.write_text(cfg.to_text(), encoding="utf-8")
    return str(p)


def test_cli_verify_default(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "alpha1 = 0.0571909584" in out and "eps_lower" in out


def test_cli_verify_bad_pi1(tmp_path, capsys):
    path = write_cfg(tmp_path, RunConfig.default().with_values(tuning__pi1=1.5))
    assert main(["verify", "--config", path]) == 1
    assert "[FAIL] A6" in capsys.readouterr().out


def test_cli_verify_nonpd_q(tmp_path, capsys):
    path = write_cfg(tmp_path, RunConfig.default().with_values(ocp__Q=[[1, 0], [0, 0]]))
    assert main(["verify", "--config", path]) == 1
    assert "A3" in capsys.readouterr().out


def test_cli_simulate_validation(tmp_path, capsys):
    assert main(["simulate", "--steps", "0", "--output", str(tmp_path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert "missing.cfg" in capsys.readouterr().err


def test_cli_simulate_assumption_failure(tmp_path, capsys):
    path = write_cfg(tmp_path, RunConfig.default().with_values(tuning__pi1=1.5))
    assert main(["simulate", "--config", path, "--steps", "2", "--output", str(tmp_path)]) == 2
    assert "A6" in capsys.readouterr().err


def test_cli_simulate_solver_failure(tmp_path, monkeypatch):
    import cgmpc.cli as cli
    from cgmpc.admm import SolverError

    def boom(_):
        raise SolverError("cap")

    monkeypatch.setattr(cli, "run_closed_loop", boom)
    assert main(["simulate", "--case", "a1", "--steps", "2", "--output", str(tmp_path)]) == 3


def test_cli_simulate_all_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["simulate", "--steps", "8", "--output", str(d), "--deterministic"]) == 0
    for name in ("a1.csv", "exact-desired.csv", "exact-governed.csv", "summary.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_cli_single_governed_case(tmp_path):
    assert main(["simulate", "--case", "exact-governed", "--steps", "4", "--output", str(tmp_path)]) == 0
    assert (tmp_path / "exact-governed.csv").exists()
    assert not (tmp_path / "summary.txt").exists()


def test_cli_estimate(tmp_path, capsys):
    assert main(["estimate", "--samples", "0"]) == 2
    path = write_cfg(tmp_path, RunConfig.default())
    outs = []
    for _ in range(2):
        assert main(["estimate", "--config", path, "--samples", "15", "--seed", "4"]) == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]
    assert "configured vs estimated" in outs[0]


def test_cli_estimate_infeasible_region(tmp_path, capsys):
    cfg = RunConfig.default().with_values(estimate__samples=5)
    path = write_cfg(tmp_path, cfg)
    # a state box 20x wider than the constraints leaves almost no feasible pairs
    import cgmpc.config as config_mod
    from cgmpc.constants import SamplerConfig

    orig = config_mod.RunConfig.sampler

    def wide(self, samples=None, seed=None):
        s = orig(self, samples, seed)
        return SamplerConfig(**{**s.__dict__, "x_scale": 20.0, "min_feasible": 5})

    config_mod.RunConfig.sampler = wide
    try:
        assert main(["estimate", "--config", path]) == 3
    finally:
        config_mod.RunConfig.sampler = orig
