import json
import math
from pathlib import Path

import numpy as np
import pytest

import repsub

ROOT = Path(__file__).resolve().parents[2]
SCENARIO = ROOT / "scenarios" / "threepop.json"


@pytest.fixture(scope="module")
def threepop():
    return repsub.Scenario.load(str(SCENARIO))


def test_scenario_roundtrip(threepop):
    assert threepop.populations == 3
    assert threepop.actions == 2
    assert threepop.shares == pytest.approx([0.2, 0.3, 0.5])
    again = repsub.Scenario.from_json(threepop.to_json())
    assert again.hash() == threepop.hash()
    built = repsub.Scenario([0.2, 0.3, 0.5], [threepop.payoff(k) for k in range(3)])
    assert built.hash() == threepop.hash()


def test_invalid_scenario():
    with pytest.raises(ValueError):
        repsub.Scenario([0.5, 0.6], [[[1, 2], [3, 4]], [[1, 2], [3, 4]]])


def test_field_examples(threepop):
    x = repsub.first_action_shares([0.5, 0.5, 0.5])
    dx = repsub.field(threepop, x)
    assert dx[0][0] == pytest.approx(-0.5)
    assert dx[2][0] == pytest.approx(0.5)
    controlled = repsub.field(threepop, x, d=1.2, y_star=[1.0, 0.0])
    assert controlled[0][0] == pytest.approx(0.1)
    assert repsub.aggregate_output(threepop, x) == pytest.approx([0.5, 0.5])


def test_simulate_boundary_target(threepop):
    x0 = repsub.first_action_shares([0.01, 0.01, 0.01])
    traj = repsub.simulate(threepop, x0, d=1.2, y_star=[1.0, 0.0], x_star=repsub.first_action_shares([1, 1, 1]))
    assert traj["converged"]
    assert np.max(np.abs(traj["states"][-1][:, 0] - 1.0)) < 1e-3
    v = traj["observables"][:, 0]
    assert np.all(np.diff(v) <= 1e-8)
    assert traj["outputs"].shape == (len(traj["times"]), 2)


def test_portrait_bistability(threepop):
    starts = [repsub.first_action_shares(s) for s in
              ([0.01, 0.01, 0.01], [0.01, 0.99, 0.01], [0.99, 0.01, 0.01], [0.99, 0.99, 0.01], [0.5, 0.5, 0.01])]
    runs = repsub.phase_portrait(threepop, starts)
    ends = {tuple(np.round(r["states"][-1][:, 0]).astype(int)) for r in runs}
    assert ends == {(0, 0, 1), (0, 1, 1)}
    assert len(repsub.interior_grid(3, 2, 9)) == 729


def test_boundary_start_rejected(threepop):
    with pytest.raises(ValueError):
        repsub.simulate(threepop, repsub.first_action_shares([0.0, 0.5, 0.5]))


def test_target_equilibria_and_report(threepop):
    assert repsub.find_target_equilibria(threepop, [1.0, 0.0]) == [repsub.first_action_shares([1, 1, 1])]
    assert repsub.find_target_equilibria(threepop, [0.6, 0.4]) == []
    report = repsub.recommend_d(threepop, [0.8, 0.2], random_samples=20000)
    assert report["recommendation_made"]
    assert report["sup_dbar_estimate"] < 1.5
    assert report["recommended_d"] < 1.5


def test_lyapunov_terms(threepop):
    t = repsub.lyapunov_terms(threepop, repsub.first_action_shares([0.5] * 3),
                              repsub.first_action_shares([1, 1, 1]), [1.0, 0.0], 1.2)
    assert t["V"] == pytest.approx(math.log(2))
    assert t["F1"] == pytest.approx(0.15)
    assert t["F2"] == pytest.approx(1.0)
    assert t["Vdot"] == pytest.approx(-1.35)


def test_region_bounds(threepop):
    b = repsub.region_bounds(threepop, 1.2, [1.0, 0.0])
    assert b["M"][0] == pytest.approx(1.2 / 4.2)
    assert b["epsilon"] == pytest.approx(0.6 / 4.2)


def test_agents(threepop):
    out = repsub.run_agents(threepop, repsub.first_action_shares([0.5] * 3), agents=10000, rounds=1000,
                            d=1.2, y_star=[1.0, 0.0], seed=1)
    assert out["y"].shape == (1001, 2)
    assert out["y"][-1, 0] > 0.95
    assert np.allclose(out["paid_subsidy"], 1.2 * 10000)
    again = repsub.run_agents(threepop, repsub.first_action_shares([0.5] * 3), agents=10000, rounds=1000,
                              d=1.2, y_star=[1.0, 0.0], seed=1)
    assert np.array_equal(out["y"], again["y"])
    with pytest.raises(repsub.AssumptionViolation):
        repsub.run_agents(threepop, repsub.first_action_shares([0, 0, 0]), agents=1000, rounds=1,
                          d=1.2, y_star=[1.0, 0.0])


def test_cli(tmp_path):
    code, err = repsub.run_cli(["verify", "--scenario", str(SCENARIO), "--y-star", "1,0", "--out", str(tmp_path)])
    assert code == 0, err
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["sup_dbar_estimate"] < 1.2
    code, _ = repsub.run_cli(["verify", "--scenario", str(SCENARIO), "--y-star", "0.6,0.4", "--out", str(tmp_path)])
    assert code == 3
