import json
import os

import pytest

import probe
from core import config_manager as Config
from core.schemas import ExperimentConfig, GeneratorSpec
from features.experiments import (EXIT_ERROR, EXIT_INCONCLUSIVE, EXIT_PASS, FAIL, INCONCLUSIVE, PASS,
                                  judge, next_run_dir, run_experiment)


def _config(subcommand, tmp_path, **overrides):
    values = dict(out=str(tmp_path / "reports"), gen=GeneratorSpec(n=4), delta=0.05)
    values.update(overrides)
    return ExperimentConfig.from_settings(subcommand, Config.DEFAULT_CONFIG, **values)


def test_judge():
    assert judge("lower", 0.5, 0.6, 0.04, 0.05) == PASS
    assert judge("lower", 0.4, 0.6, 0.04, 0.05) == FAIL
    assert judge("upper", 0.7, 0.6, 0.04, 0.05) == PASS
    assert judge("upper", 0.8, 0.6, 0.04, 0.05) == FAIL
    assert judge("equal", 0.5, 0.53, 0.04, 0.05) == PASS
    assert judge("equal", 0.5, 0.55, 0.04, 0.05) == FAIL


def test_judge_exact_ignores_ci():
    """确定性比较不受 ci 影响"""
    assert judge("exact", 1.0 - 1e-9, 1.0, 0.0, 0.05) == PASS
    assert judge("exact", 0.99, 1.0, 10.0, 0.05) == FAIL


def test_judge_inconclusive_scales_with_spread():
    assert judge("lower", 0.0, 0.6, 0.1, 0.05) == INCONCLUSIVE
    assert judge("lower", 0.5, 0.6, 0.1, 0.05, spread=4.0) == PASS
    with pytest.raises(ValueError):
        judge("roughly", 0.5, 0.5, 0.0, 0.05)


def test_next_run_dir_never_overwrites(tmp_path):
    first = next_run_dir(str(tmp_path), "e2e", 7)
    second = next_run_dir(str(tmp_path), "e2e", 7)
    assert first.endswith("run-000")
    assert second.endswith("run-001")
    assert os.path.dirname(first) == str(tmp_path / "e2e" / "seed-7")


def test_verify_scheme_few_runs_inconclusive(tmp_path):
    """样本太少时 ci 过宽，整体判为 inconclusive"""
    result = run_experiment(_config("verify-scheme", tmp_path, runs=10, seed=1))
    assert result.status == EXIT_INCONCLUSIVE
    assert all(row.verdict == INCONCLUSIVE for row in result.report.rows)
    assert len(result.paths) == 2


def test_e2e_deterministic(tmp_path):
    """相同种子的报告逐字节一致，且写入新的 run 目录"""
    config = _config("e2e", tmp_path, runs=200, seed=3, chunk_size=64, max_workers=2)
    a = run_experiment(config)
    b = run_experiment(config)
    assert a.report.to_dict() == b.report.to_dict()
    base = tmp_path / "reports" / "e2e" / "seed-3"
    assert (base / "run-000" / "report.json").exists()
    assert (base / "run-001" / "report.csv").exists()
    with open(a.paths[-1], encoding="utf-8") as fa, open(b.paths[-1], encoding="utf-8") as fb:
        assert fa.read() == fb.read()

    serial = run_experiment(_config("e2e", tmp_path, runs=200, seed=3, chunk_size=64, max_workers=1), write=False)
    assert [row.to_dict() for row in serial.report.rows] == [row.to_dict() for row in a.report.rows]


def test_relaxation_passes(tmp_path):
    result = run_experiment(_config("relaxation", tmp_path, runs=3, seed=5), write=False)
    assert result.status == EXIT_PASS
    assert len(result.report.rows) == 9


def test_generate_writes_instance(tmp_path):
    path = tmp_path / "inst.json"
    result = run_experiment(_config("generate", tmp_path, seed=2, out=str(path)))
    assert result.status == EXIT_PASS
    assert result.paths == []
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["elements"] == [0, 1, 2, 3]


def _settings(tmp_path) -> str:
    path = str(tmp_path / "settings.json")
    assert Config.save_config(path, {"output": {"dir": str(tmp_path / "reports")}})
    return path


def _verdicts(result, tag):
    verdicts = [row.verdict for row in result.report.rows if row.tag == tag]
    assert verdicts, tag
    return verdicts


def test_verify_scheme_no_failures(tmp_path):
    """平衡性、闭式、停时鞅、嵌套输入单调性、阻塞期望：中等样本量下没有未通过的行"""
    result = run_experiment(_config("verify-scheme", tmp_path, runs=2000, seed=7), write=False)
    assert result.status in (EXIT_PASS, EXIT_INCONCLUSIVE)
    for tag in ("balance-guarantee", "conditional-probe-law", "optional-stopping", "nested-inputs",
                "blocking-expectation"):
        assert FAIL not in _verdicts(result, tag)


def test_verify_mapping_passes(tmp_path):
    states = tmp_path / "states.json"
    result = run_experiment(_config("verify-mapping", tmp_path, runs=300, seed=7, dump_states=str(states)),
                            write=False)
    assert result.status == EXIT_PASS
    assert result.report.details["violations"] == 0
    dumped = json.loads(states.read_text(encoding="utf-8"))
    assert dumped["states"][0]["step"] == 0


def test_kset_no_failures(tmp_path):
    result = run_experiment(_config("kset", tmp_path, runs=2000, seed=7), write=False)
    assert FAIL not in _verdicts(result, "kset-probe")
    assert _verdicts(result, "capacity") == [PASS]
    assert FAIL not in _verdicts(result, "kset-approximation")


def test_matching_no_failures(tmp_path):
    result = run_experiment(_config("matching", tmp_path, runs=2000, seed=7), write=False)
    for tag in ("gkps-marginal", "matching-probe", "matching-closed-form", "gkps-negative-correlation",
                "matching-approximation"):
        assert FAIL not in _verdicts(result, tag)


def test_combined_no_failures(tmp_path):
    result = run_experiment(_config("combined", tmp_path, runs=2000, seed=7), write=False)
    assert result.status in (EXIT_PASS, EXIT_INCONCLUSIVE)
    assert FAIL not in _verdicts(result, "combining")


def test_e2e_order_override(tmp_path):
    """--order 改变离线剪枝的顺序"""
    result = run_experiment(_config("e2e", tmp_path, runs=100, seed=3, order=[3, 2, 1, 0]), write=False)
    assert result.report.details["order"] == [3, 2, 1, 0]
    assert _verdicts(result, "pruning-monotone") == [PASS]
    _verdicts(result, "offline-pruning")
    plain = run_experiment(_config("e2e", tmp_path, runs=100, seed=3), write=False)
    assert plain.report.details["order"] == [0, 1, 2, 3]


def test_cli_usage_and_errors(tmp_path):
    settings = _settings(tmp_path)
    with pytest.raises(SystemExit) as info:
        probe.main(["fly"])
    assert info.value.code == 2
    assert probe.main(["e2e", "--gen", "{broken", "--seed", "1", "--config", settings]) == EXIT_ERROR
    assert probe.main(["e2e", "--seed", "1", "--b", "0.5", "--delta", "0.6", "--config", settings]) == EXIT_ERROR


def test_cli_explicit_config_must_exist(tmp_path):
    """显式给出的 --config 不存在或损坏时退出码为 4"""
    out = str(tmp_path / "g.json")
    missing = str(tmp_path / "missing.json")
    assert probe.main(["generate", "--seed", "2", "--out", out, "--config", missing]) == EXIT_ERROR
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    assert probe.main(["generate", "--seed", "2", "--out", out, "--config", str(broken)]) == EXIT_ERROR
    assert not os.path.exists(out)


def test_cli_generate(tmp_path, capsys):
    out = tmp_path / "g.json"
    code = probe.main(["generate", "--gen", '{"n": 3, "k_out": 0}', "--seed", "2", "--out", str(out),
                       "--config", _settings(tmp_path)])
    assert code == EXIT_PASS
    assert json.loads(out.read_text(encoding="utf-8"))["outer"] == []
