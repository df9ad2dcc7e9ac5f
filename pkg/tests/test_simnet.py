import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from relmix.estimators import DistEmConfig, dist_ls_em
from relmix.graphcore import Graph, incidence_matrix
from relmix.simnet import (LocalityError, RoundMessage, _Network, dump_message_log, message_log,
                           run_rounds)

from conftest import random_instance

CFG = DistEmConfig(p=0.1, alpha=0.1, beta=1.0)


def test_single_edge_first_round():
    g = Graph(2, ((1, 0),))
    A = incidence_matrix(g)
    b = np.array([0.7])
    run = run_rounds(g, b, CFG, rounds=1)
    tau = run.result.diagnostics["tau"]
    np.testing.assert_allclose(run.result.x_hat, tau / 0.01 * A.T @ b, rtol=1e-14)


@pytest.mark.parametrize("rounds", [1, 2, 5, 50])
def test_matches_matrix_form_example1(ex1, rounds):
    run = run_rounds(ex1["graph"], ex1["b"], CFG, rounds=rounds)
    ref = dist_ls_em(ex1["b"], ex1["A"], DistEmConfig(p=0.1, alpha=0.1, beta=1.0,
                                                      max_iter=rounds, tol=1e-300))
    assert ref.iterations == rounds
    np.testing.assert_allclose(run.result.x_hat, ref.x_hat, atol=1e-9, rtol=0)


def test_labels_lag_one_iterate(ex1):
    # after R rounds the nodes hold the labels computed from iterate R - 1
    run = run_rounds(ex1["graph"], ex1["b"], CFG, rounds=10)
    ref = dist_ls_em(ex1["b"], ex1["A"], DistEmConfig(p=0.1, alpha=0.1, beta=1.0,
                                                      max_iter=9, tol=1e-300))
    np.testing.assert_allclose(run.result.pi, ref.pi, atol=1e-12)
    assert run.result.diagnostics["labels_iterate"] == 9


def test_matches_matrix_form_random():
    for seed in range(3):
        ms = random_instance(40 + seed, n=15)
        A = incidence_matrix(ms.graph)
        cfg = DistEmConfig(p=0.1, alpha=0.05, beta=0.25)
        run = run_rounds(ms.graph, ms.b, cfg, rounds=30)
        ref = dist_ls_em(ms.b, A, DistEmConfig(p=0.1, alpha=0.05, beta=0.25,
                                               max_iter=30, tol=1e-300))
        np.testing.assert_allclose(run.result.x_hat, ref.x_hat, atol=1e-9, rtol=0)


def test_message_count(ex1):
    run = run_rounds(ex1["graph"], ex1["b"], CFG, rounds=7)
    log = message_log(run)
    assert len(log) == 7 * 2 * 6
    for r in range(1, 8):
        assert sum(m.round == r for m in log) == 12


def test_messages_are_local(ex1):
    run = run_rounds(ex1["graph"], ex1["b"], CFG, rounds=3)
    adjacent = {frozenset(e) for e in ex1["graph"].edges}
    for m in message_log(run):
        assert frozenset((m.sender, m.receiver)) in adjacent
        assert frozenset(ex1["graph"].edges[m.edge]) == frozenset((m.sender, m.receiver))


def test_non_adjacent_delivery_refused(ex1):
    net = _Network(ex1["graph"])
    inboxes = [dict() for _ in range(5)]
    adjacent = {frozenset(e) for e in ex1["graph"].edges}
    u, v = next((u, v) for u in range(5) for v in range(u + 1, 5)
                if frozenset((u, v)) not in adjacent)
    with pytest.raises(LocalityError):
        net.deliver(RoundMessage(1, u, v, 0, 1.0), inboxes)


def test_executor_matches_sequential(ex1):
    seq = run_rounds(ex1["graph"], ex1["b"], CFG, rounds=40)
    with ThreadPoolExecutor(4) as pool:
        par = run_rounds(ex1["graph"], ex1["b"], CFG, rounds=40, executor=pool)
    np.testing.assert_allclose(par.result.x_hat, seq.result.x_hat, atol=1e-12, rtol=0)


def test_logging_disabled(ex1):
    run = run_rounds(ex1["graph"], ex1["b"], CFG, rounds=2, log_messages=False)
    assert run.messages is None
    with pytest.raises(ValueError):
        message_log(run)


def test_dump_json_lines(ex1, tmp_path):
    run = run_rounds(ex1["graph"], ex1["b"], CFG, rounds=2)
    path = tmp_path / "log.jsonl"
    dump_message_log(run, path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(rows) == 24
    assert set(rows[0]) == {"round", "sender", "receiver", "edge", "payload"}
    assert rows[0]["round"] == 1 and rows[0]["payload"] == 0.0


def test_deterministic(ex1):
    a = run_rounds(ex1["graph"], ex1["b"], CFG, rounds=20)
    b = run_rounds(ex1["graph"], ex1["b"], CFG, rounds=20)
    assert np.array_equal(a.result.x_hat, b.result.x_hat)
    assert message_log(a) == message_log(b)


def test_stopping_rule(ex1):
    run = run_rounds(ex1["graph"], ex1["b"], CFG)
    ref = dist_ls_em(ex1["b"], ex1["A"], CFG)
    assert run.rounds == ref.iterations
    assert run.result.converged == ref.converged
    np.testing.assert_allclose(run.result.x_hat, ref.x_hat, atol=1e-9, rtol=0)
