import math

import numpy as np
import pytest

from proxopt import streams
from proxopt import Ball
from proxopt.engine import Constant, SaddleProblem, run
from proxopt.errors import InvalidArgument
from proxopt.experiments import (FieldScenario, LocalizationScenario, constraint_violation,
                                 resolve_monitor, run_field_experiment,
                                 run_localization_experiment)
from proxopt.graph import Network, make_grid
from proxopt.problems import LseRange, QuadraticProximity, SrlsObjective, lift_positions


# -- violation reporting -------------------------------------------------------

def test_violation_zero_for_identical_states():
    net = make_grid(2, 2)
    y = np.tile([0.3, 0.4, 0.1], (4, 1))
    for i in range(4):
        assert constraint_violation(net, y, "consensus", i) == 0.0


def test_consensus_violation_unit_distance():
    net = Network(2, [[0, 1]], np.zeros((2, 2)))
    y = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    assert constraint_violation(net, y, "consensus", 0) == 1.0


def test_proximity_violation_hand_value():
    l = np.array([[0.0, 0.0], [1.0, 0.0]])
    net = Network(2, [[0, 1]], l)
    con = LseRange(lift_positions(l))
    y = np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 0.0]])
    # ||yi-yj||^2 = 1 ; a = 1 ; b = 1 ; 0.5 * 0.5 * (1 + log(2e))
    expected = 0.25 * (1.0 + math.log(2 * math.e))
    assert constraint_violation(net, y, "proximity", 0, con) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(InvalidArgument):
        constraint_violation(net, y, "proximity", 5, con)
    with pytest.raises(InvalidArgument):
        constraint_violation(net, y, "other", 0)


def test_monitor_resolution():
    net = make_grid(3, 3, (3.0, 3.0))
    assert resolve_monitor(net, None, (1.5, 1.5)) == 4
    assert resolve_monitor(net, "center") == 4
    assert resolve_monitor(net, "mean") == "mean"
    assert resolve_monitor(net, 2) == 2
    with pytest.raises(InvalidArgument):
        resolve_monitor(net, 9)


# -- random field ---------------------------------------------------------------

def test_field_scenario_defaults():
    sc = FieldScenario()
    net = sc.network()
    assert net.n_nodes == 50 and (sc.rows, sc.cols) == (5, 10)
    R = sc.correlation(net)
    assert np.array_equal(R, R.T)
    assert np.linalg.eigvalsh(R).min() > -1e-12
    prob = sc.problem(net)
    assert np.all((prob.gamma > 0) & (prob.gamma <= 1))


def test_field_validation():
    with pytest.raises(InvalidArgument, match="T"):
        FieldScenario(T=-1)
    with pytest.raises(InvalidArgument, match="sigma2"):
        FieldScenario(sigma2=-1.0)
    with pytest.raises(InvalidArgument, match="truth"):
        FieldScenario(truth="zeros")
    with pytest.raises(InvalidArgument):
        run_field_experiment(FieldScenario(T=2, n_runs=1), seed=0, methods=["dogd"])


def test_field_noiseless_estimation_is_consistent():
    sc = FieldScenario(sigma2=0.0, T=2000, n_runs=2)
    res = run_field_experiment(sc, seed=0, monitor="mean")
    for m in res.methods:
        assert res.column(m, "std_err")[:, -1].max() <= 1e-3


def test_field_both_curves_decrease():
    res = run_field_experiment(FieldScenario(n_runs=5), seed=2, monitor="mean")
    for m in res.methods:
        ex = res.mean(m)["local_excess"]
        assert ex[-1] < ex[49] < ex[0]


def field_oracle(seed, T):
    """Straight-line two-node script for the field metrics."""
    gamma = math.exp(-1.0)
    R = np.array([[1.0, gamma], [gamma, 1.0]])
    a = b = lab = lba = 0.0
    obs = []
    rows = []
    for t in range(1, T + 1):
        th = 1.0 + math.sqrt(10.0) * streams.substream(seed, streams.OBS, 0, t).standard_normal((2, 1))[:, 0]
        obs.append(th)
        e = min(1e-2, 1e-2 * 100 / t)
        h = 0.5 * (a - b) ** 2
        na = a - e * (2 * (a - th[0]) + 0.5 * (lab + lba) * (a - b))
        nb = b - e * (2 * (b - th[1]) + 0.5 * (lab + lba) * (b - a))
        lab = max(0.0, (1 - e * 1e-5) * lab + e * (h - gamma))
        lba = max(0.0, (1 - e * 1e-5) * lba + e * (h - gamma))
        a, b = na, nb
        rows.append((t, e, a, b, 0.5 * (a - b) ** 2 - gamma, math.hypot(lab, lba)))
    obs = np.array(obs)
    s2 = np.mean(np.var(obs, axis=0, ddof=1))
    H = np.tile(np.eye(2), (T, 1))
    theta = obs.ravel()
    x_ref = R @ H.T @ np.linalg.solve(H @ R @ H.T + s2 * np.eye(2 * T), theta)
    return rows, x_ref


def test_field_two_node_metrics_match_oracle():
    sc = FieldScenario(rows=1, cols=2, side=2.0, T=30, n_runs=1)
    res = run_field_experiment(sc, seed=5, methods=["sp-proximity"])
    assert res.monitor == 0
    s = res.runs["sp-proximity"][0]
    rows, x_ref = field_oracle(5, 30)
    for k, (t, e, a, b, slack, dn) in enumerate(rows):
        assert s["t"][k] == t and s["eps"][k] == pytest.approx(e, abs=1e-15)
        assert s["local_obj"][k] == pytest.approx((a - 1) ** 2 + 10.0, abs=1e-10)
        assert s["F"][k] == pytest.approx((a - 1) ** 2 + (b - 1) ** 2 + 20.0, abs=1e-10)
        assert s["F_gap"][k] == pytest.approx((a - 1) ** 2 + (b - 1) ** 2, abs=1e-10)
        assert s["std_err"][k] == pytest.approx(abs(a - x_ref[0]), abs=1e-10)
        assert s["viol_raw"][k] == pytest.approx(slack, abs=1e-10)
        assert s["dual_norm"][k] == pytest.approx(dn, abs=1e-10)


def test_field_paper_formula_is_reported_separately():
    res = run_field_experiment(FieldScenario(T=20, n_runs=2), seed=1, paper_formula=True)
    assert res.extras["x_ref_paper"].shape == (2, 50)
    assert not np.allclose(res.extras["x_ref_paper"], res.extras["x_ref"])


def test_field_draw_truth_differs_per_replica():
    res = run_field_experiment(FieldScenario(T=10, n_runs=2, truth="draw"), seed=1)
    xt = res.extras["x_true"]
    assert not np.allclose(xt[0], xt[1])
    assert abs(xt.mean() - 1.0) < 1.0


def test_field_determinism_and_parallelism():
    sc = FieldScenario(T=40, n_runs=3)
    a = run_field_experiment(sc, seed=4)
    b = run_field_experiment(sc, seed=4, jobs=2)
    for m in a.methods:
        assert all(x.equals(y) for x, y in zip(a.runs[m], b.runs[m]))
        assert not a.runs[m][0].equals(a.runs[m][1])
    c = run_field_experiment(sc, seed=5)
    assert not a.runs["sp-proximity"][0].equals(c.runs["sp-proximity"][0])


def test_field_expected_objective_matches_monte_carlo():
    sc = FieldScenario(rows=1, cols=3, side=3.0)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 1))
    stream = streams.GaussianStream(np.ones((3, 1)), math.sqrt(sc.sigma2), seed=0)
    draws = stream.batch(100000)
    vals = np.sum((x[None] - draws) ** 2, axis=2)
    analytic = (x[:, 0] - 1.0) ** 2 + sc.sigma2
    se = vals.std(axis=0, ddof=1) / math.sqrt(len(vals))
    assert np.all(np.abs(vals.mean(axis=0) - analytic) <= 3 * se)


# -- localization ------------------------------------------------------------

def test_localization_validation():
    with pytest.raises(InvalidArgument, match="n_nodes"):
        LocalizationScenario(n_nodes=10)
    with pytest.raises(InvalidArgument, match="layout"):
        LocalizationScenario(layout="ring")
    with pytest.raises(InvalidArgument):
        run_localization_experiment(LocalizationScenario(T=2, n_runs=1), 0, methods=["lmmse-stream"])


def loc_oracle(pos_m, seed, T):
    pos = pos_m / 1000.0
    n = len(pos)
    src = pos.mean(axis=0)
    d = np.linalg.norm(pos - src, axis=1)
    sd = np.sqrt(2.0 * d)
    A = np.hstack([-2 * pos, np.ones((n, 1))])
    L = np.hstack([pos, np.zeros((n, 1))])
    y = streams.substream(seed, streams.INIT, 0).uniform(0.0, 1.0, (n, 3))
    r_eval = d + sd * streams.substream(seed, streams.EVAL, 0, 0).standard_normal((1000, n))
    b_eval = r_eval ** 2 - np.sum(pos ** 2, axis=1)
    nbrs = {0: [1], 1: [0, 2], 2: [1]}
    lam = {(i, j): 0.0 for i in nbrs for j in nbrs[i]}
    out = []
    for t in range(1, T + 1):
        r = d + sd * streams.substream(seed, streams.OBS, 0, t).standard_normal(n)
        b = r ** 2 - np.sum(pos ** 2, axis=1)
        e = min(10 ** -1.5, 10 ** -1.5 * 100 / t)
        new_y = y.copy()
        h = {}
        for i in range(n):
            g = 2 * A[i] * (A[i] @ y[i] - b[i])
            for j in nbrs[i]:
                ea = math.exp(np.sum((y[i] - L[i]) ** 2))
                eb = math.exp(np.sum((y[j] - L[j]) ** 2))
                h[i, j] = 0.5 * (np.sum((y[i] - y[j]) ** 2) + math.log(ea + eb))
                g = g + 0.5 * (lam[i, j] + lam[j, i]) * ((y[i] - y[j]) + ea / (ea + eb) * (y[i] - L[i]))
            new_y[i] = y[i] - e * g
        for key in lam:
            lam[key] = max(0.0, (1 - e * 1e-7) * lam[key] + e * h[key])
        y = new_y
        mon = 1
        obj = np.mean((A[mon] @ y[mon] - b_eval[:, mon]) ** 2)
        err = np.linalg.norm(y[mon, :2] - src)
        h1 = 0.0
        for j in nbrs[mon]:
            ea = math.exp(np.sum((y[mon] - L[mon]) ** 2))
            eb = math.exp(np.sum((y[j] - L[j]) ** 2))
            h1 += 0.5 * 0.5 * (np.sum((y[mon] - y[j]) ** 2) + math.log(ea + eb))
        out.append((obj, err, h1, math.sqrt(sum(v * v for v in lam.values()))))
    return out


def test_localization_three_node_path_matches_oracle():
    pos = np.array([[100.0, 200.0], [500.0, 600.0], [900.0, 300.0]])
    net = Network(3, [[0, 1], [1, 2]], pos)
    sc = LocalizationScenario(layout="uniform", n_nodes=3, T=50, n_runs=1)
    res = run_localization_experiment(sc, seed=8, methods=["sp-proximity"], net=net)
    assert res.monitor == 1
    s = res.runs["sp-proximity"][0]
    for k, (obj, err, h1, dn) in enumerate(loc_oracle(pos, 8, 50)):
        assert s["local_obj"][k] == pytest.approx(obj, abs=1e-10)
        assert s["std_err"][k] == pytest.approx(err, abs=1e-10)
        assert s["viol_raw"][k] == pytest.approx(h1, abs=1e-10)
        assert s["dual_norm"][k] == pytest.approx(dn, abs=1e-10)


def test_noiseless_two_node_localization():
    # one-dimensional anchors make the relaxed problem identifiable from two ranges
    pos = np.array([[0.0], [1.0]])
    net = Network(2, [[0, 1]], pos)
    source = pos[0]
    ranges = np.abs(pos[:, 0] - source[0])
    prob = SaddleProblem(SrlsObjective(pos), QuadraticProximity(), np.zeros(2), delta=1e-7,
                         projection=Ball(1e6), coupling=0.5)
    traj = run(prob, net, streams.FixedStream(ranges), Constant(0.05), 5000,
               np.array([[0.3, 0.2], [0.7, 0.9]]))
    assert np.all(np.abs(traj.x[-1, :, 0] - source[0]) <= 1e-2)


def test_consensus_multipliers_force_agreement():
    pos = np.array([[0.2, 0.1], [0.6, 0.8]])
    net = Network(2, [[0, 1]], pos)
    src = pos.mean(axis=0)
    ranges = np.linalg.norm(pos - src, axis=1)
    prob = SaddleProblem(SrlsObjective(pos), QuadraticProximity(), np.zeros(2), delta=0.0,
                         projection=Ball(1e6), coupling=0.5)
    traj = run(prob, net, streams.FixedStream(ranges), Constant(0.05), 10000,
               np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]))
    assert np.linalg.norm(traj.x[-1, 0] - traj.x[-1, 1]) <= 1e-3
    assert traj.lam[-1, 0] > 0


def test_localization_default_configuration_band():
    res = run_localization_experiment(LocalizationScenario(n_runs=4), seed=3,
                                      methods=["sp-proximity"], monitor="mean")
    se = res.mean("sp-proximity")["std_err"]
    assert np.all((se[199:] >= 0.1) & (se[199:] <= 1.0))


def test_localization_methods_share_initial_point_and_are_deterministic():
    sc = LocalizationScenario(n_nodes=16, T=30, n_runs=2)
    a = run_localization_experiment(sc, seed=1, keep_trajectories=True)
    b = run_localization_experiment(sc, seed=1, jobs=2)
    for m in a.methods:
        assert all(x.equals(y) for x, y in zip(a.runs[m], b.runs[m]))
    x0 = [a.trajectories[m][0].x[0] for m in a.methods]
    assert all(np.array_equal(x0[0], v) for v in x0[1:])
    assert np.all(a.trajectories["sp-consensus"][0].lam >= 0)
    assert a.trajectories["dogd"][0].lam.shape[1] == 0
