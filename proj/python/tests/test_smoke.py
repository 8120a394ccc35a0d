import os
from pathlib import Path

import numpy as np
import pytest

import fxrl

ROOT = Path(os.environ.get("FXRL_SOURCE_DIR", Path(__file__).resolve().parents[2]))
BASE = ROOT / "configs" / "base.yaml"

TINY = [
    "agent.training.total_timesteps=300",
    "agent.training.learn_start_steps=100",
    "agent.training.buffer_size=300",
    "agent.training.batch_size=16",
    "agent.training.target_update_interval=50",
    "agent.training.eval_interval=200",
    "agent.model.hidden_dims=[8, 8]",
    "data.bars=500",
]


def test_flat_dimension():
    assert fxrl.flat_dimension(24, 19, 10) == 476
    assert fxrl.flat_dimension(24, 19, 3) == 469


def test_environment_roundtrip():
    env = fxrl.Environment([BASE], ["data.bars=400"])
    obs, mask = env.reset(1)
    assert obs.shape == (476,)
    assert env.flat_dim == 476
    assert mask[:3] == [True, True, True]
    assert not any(mask[3:8])
    obs2, reward, done, info = env.step(1)
    assert obs2.shape == (476,)
    assert -1.0 <= reward <= 1.0
    assert info["executed_action"] == 1
    assert set(info["reward_components"]) >= {"profit", "liquidation"}
    with pytest.raises(fxrl.ContractError):
        env.step(99)


def test_simplified_environment():
    env = fxrl.Environment([BASE], ["environment.actions.mode=simplified", "data.bars=400"])
    obs, mask = env.reset(0)
    assert obs.shape == (469,)
    assert len(mask) == 3


def test_unknown_key_is_config_error():
    with pytest.raises(fxrl.ConfigError, match="reward.compnents"):
        fxrl.resolve_config([BASE], ["reward.compnents.profit.enabled=true"])


def test_config_hash_is_stable():
    a = fxrl.resolve_config([BASE])
    b = fxrl.resolve_config([BASE])
    assert a["hash"] == b["hash"]
    assert "hidden_dims" in a["yaml"]


def test_corpus_valid():
    report = fxrl.validate_configs(ROOT / "configs")
    assert report
    assert all(ok for _, ok, _ in report)


def test_synthetic_data_deterministic():
    a = fxrl.generate_synthetic(200, 5)
    b = fxrl.generate_synthetic(200, 5)
    np.testing.assert_array_equal(a["close"], b["close"])
    assert np.all(a["high"] >= np.maximum(a["open"], a["close"]))


def test_metrics_fixture():
    m = fxrl.compute_metrics([100.0, 110.0, 99.0, 105.0])
    assert m["max_drawdown"] == pytest.approx(0.10, rel=1e-12)


def test_benchmarks():
    bh = fxrl.run_benchmark("buy_and_hold", [BASE], ["data.bars=1000"])
    assert bh["trades"] == 1
    rnd = fxrl.run_benchmark("random", [BASE], ["data.bars=1000"])
    assert rnd["violations"] == 0
    assert abs(rnd["reconciliation_gap"]) <= 1e-6


def test_conformance():
    conf, sens = fxrl.run_conformance()
    assert len(conf) == 5 and all(ok for ok, _ in conf.values())
    assert len(sens) == 5 and all(ok for ok, _ in sens.values())


def test_training_and_backtest(tmp_path):
    run = fxrl.run_training([BASE], TINY, str(tmp_path), "tiny")
    assert run["steps"] == 300
    assert Path(run["checkpoint"]).exists()
    bt = fxrl.backtest(run["checkpoint"])
    assert bt["final_equity"] == run["final_equity"]
