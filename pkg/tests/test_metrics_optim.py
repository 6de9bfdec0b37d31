import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from n2n.encoder import WhitenConfig, schur_newton_whiten
from n2n.graph import Graph
from n2n.metrics import collapse_report, micro_f1, spectrum_stats
from n2n.optim import Adam
from n2n.tensor import Tape


def test_micro_f1_reference_values():
    assert micro_f1([1, 2, 3], [1, 2, 3]) == 1.0
    assert micro_f1([0, 0], [1, 1]) == 0.0
    assert micro_f1([0, 1, 2, 3], [0, 1, 2, 0]) == 0.75
    assert micro_f1([0, 1, 2, 3], [0, 1, 2, 0], subset=[3]) == 0.0
    with pytest.raises(ValueError):
        micro_f1([0], [0], subset=[])
    with pytest.raises(ValueError):
        micro_f1([0, 1], [0])


def test_rank_one_embeddings():
    rng = np.random.default_rng(0)
    h = rng.normal(size=(40, 1)) @ rng.normal(size=(1, 6))
    rep = collapse_report(h)
    assert rep.top_fraction == pytest.approx(1.0, abs=1e-6)
    assert rep.effective_rank == pytest.approx(1.0, abs=1e-6)
    assert not rep.degenerate


def test_whitened_embeddings_have_full_rank():
    h = np.random.default_rng(1).normal(size=(200, 16)) @ np.diag(np.linspace(0.1, 5, 16))
    z = schur_newton_whiten(Tape().constant(h), WhitenConfig(15, 1e-5)).value
    rep = collapse_report(z)
    assert rep.effective_rank >= 0.95 * 16


def test_constant_embeddings_are_degenerate():
    g = Graph.from_edges([0, 1], [1, 2])
    rep = collapse_report(np.ones((3, 4)), g)
    assert rep.degenerate
    assert rep.top_fraction == 1.0
    assert rep.effective_rank == 1.0
    assert rep.gtv == 0.0
    assert set(rep.to_dict()) == {"eigenvalues", "top_fraction", "effective_rank", "degenerate", "gtv"}


def test_solvers_agree():
    h = np.random.default_rng(2).normal(size=(30, 8))
    a = collapse_report(h, solver="jacobi")
    b = collapse_report(h, solver="numpy")
    np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, atol=1e-10)
    assert a.effective_rank == pytest.approx(b.effective_rank, rel=1e-9)
    with pytest.raises(ValueError):
        collapse_report(h, solver="qr")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=12))
def test_spectrum_stats_bounds(lam):
    top, rank, degenerate = spectrum_stats(lam)
    assert 0 < top <= 1.0 + 1e-12
    assert 1.0 <= rank <= len(lam)
    assert degenerate == (max(lam) <= 1e-12)


def test_adam_zero_grad_no_decay_keeps_params():
    p = np.array([[1.0, -2.0]])
    opt = Adam([p], lr=0.1)
    opt.step([np.zeros_like(p)])
    assert p.tolist() == [[1.0, -2.0]]


def test_adam_quadratic_bowl():
    target = np.array([[3.0, -1.0, 0.5]])
    p = np.zeros((1, 3))
    opt = Adam([p], lr=0.05)
    for _ in range(500):
        opt.step([2 * (p - target)])
    np.testing.assert_allclose(p, target, atol=1e-4)


def test_adam_decoupled_decay():
    p = np.array([[1.0]])
    opt = Adam([p], lr=0.1, l2=0.5)
    for _ in range(20):
        opt.step([None])
    assert 0 < p[0, 0] < 1.0 * 0.95 ** 20 + 1e-12


def test_adam_rejects_non_finite():
    p = np.zeros((1, 1))
    with pytest.raises(FloatingPointError, match="infonce"):
        Adam([p]).step([np.array([[np.nan]])], {"infonce": 1.0})
    with pytest.raises(ValueError):
        Adam([p]).step([np.zeros((2, 2))])
