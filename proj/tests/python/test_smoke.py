"""Smoke tests for the Python bindings: they must agree with small hand-computed values."""

import math

import pytest

import askac


def test_softmax_and_cross_entropy():
    p = askac.softmax([0.0, math.log(3.0)])
    assert p == pytest.approx([0.25, 0.75], abs=1e-12)
    assert askac.cross_entropy(0, [0.0, math.log(3.0)]) == pytest.approx(math.log(4.0), abs=1e-12)


def test_selector_arithmetic():
    errors = askac.value_errors([1.0, 2.0, 0.0], [0.0, 0.0, 0.0])
    assert errors == pytest.approx([1.0, 4.0, 0.0])
    loss = askac.value_loss(errors)
    assert loss == pytest.approx(5.0 / 3.0)
    # the first update from W = 0 gives R_u = 1
    w = askac.update_ewma(0.0, loss, 0.9)
    assert askac.unstable_rate(loss, w, 0.9) == pytest.approx(1.0)
    assert askac.unstable_count(1.0, 0.1, 2048) == 205
    assert askac.select_unstable([0.5, 2.0, 2.0, 1.0], 2) == [1, 2]
    assert askac.total_loss(1.0, 2.0, 4.0, 1.0, 0.5) == pytest.approx(5.0)


def test_environments_step():
    env = askac.CartPole(0.5)
    obs = env.reset(3)
    assert len(obs) == 4 and all(abs(x) <= 0.05 for x in obs)
    step = env.step(1)
    assert step.reward == 1.0 and not step.terminal
    door = askac.DoorKey(5)
    door.reset(0)
    assert isinstance(door.render(), dict)


def test_expert_and_protocol():
    assert askac.cartpole_expert([0.0, 0.0, 0.1, 0.0]) == 1
    assert askac.cartpole_expert([0.0, 0.0, -0.1, 0.0]) == 0
    assert '"type":"feedback"' in askac.protocol_feedback(7, 2)


def test_short_training_run(tmp_path):
    out = askac.run_experiment({"algo": "askppo", "env": "cartpole", "total_steps": "4096",
                                "seed": "0", "out": str(tmp_path / "run")})
    assert len(out["rows"]) == 2
    assert out["summary"]["total_steps"] == 4096
    for row in out["rows"]:
        assert 0.0 <= row["unstable_rate"] <= 1.0
    assert (tmp_path / "run" / "metrics.csv").exists()
