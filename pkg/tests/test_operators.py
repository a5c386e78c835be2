import numpy as np
import pytest

from invdemand.dynamics import DiscreteState, make_grid, simulate_upwind
from invdemand.operators import (
    BadKappa,
    BadWindow,
    apply_observation,
    assemble_arc_end_operator,
    build_observation,
)


def shift(J, d, gain):
    M = np.zeros((J, J))
    for j in range(J - d):
        M[j + d, j] = gain
    return M


@pytest.mark.parametrize("arc, delay, gain", [(1, 10, 0.5), (2, 15, 0.1125), (3, 30, 0.55)])
def test_arc_end_operator_closed_form(ref_net, ref_grid, arc, delay, gain):
    op = assemble_arc_end_operator(ref_net, ref_grid, arc)
    assert op.delay == delay
    assert op.gain == pytest.approx(gain, abs=1e-15)
    np.testing.assert_allclose(op.matrix, shift(ref_grid.J, delay, gain), atol=1e-15)
    nz = op.matrix[op.matrix != 0]
    assert nz.size == ref_grid.J - delay
    assert np.all(nz == nz[0])


def test_operator_matches_simulation(ref_net, ref_grid):
    rng = np.random.default_rng(5)
    for arc in ref_net.arc_ids:
        M = assemble_arc_end_operator(ref_net, ref_grid, arc).matrix
        for _ in range(5):
            u = rng.standard_normal(ref_grid.J)
            trace = simulate_upwind(ref_net, ref_grid, u).end_trace(arc)
            assert np.abs(M @ u - trace).max() <= 1e-12


def _rows(obs):
    return list(zip(obs.arcs.tolist(), obs.js.tolist(), obs.qs.tolist()))


def test_c1_inflow_only(ref_net, ref_grid):
    obs = build_observation(ref_net, ref_grid, "C1", [1, 0, 0])
    assert _rows(obs) == [(1, j, 0) for j in range(ref_grid.J)]
    assert obs.inflow_mask.all()


def test_c1_all_arcs(ref_net, ref_grid):
    obs = build_observation(ref_net, ref_grid, "C1", [1, 1, 1])
    J = ref_grid.J
    expected = [(1, j, 0) for j in range(J)] + [(2, j, 5) for j in range(J)] + [(3, j, 20) for j in range(J)]
    assert _rows(obs) == expected


def test_c2_adds_second_half(ref_net, ref_grid):
    obs = build_observation(ref_net, ref_grid, "C2", [1, 1, 0])
    rows = _rows(obs)
    # arc (2) has points x = 0, 0.4, ..., 2.0; those with x >= 1 are q = 3, 4, 5
    arc2 = sorted({q for a, _, q in rows if a == 2})
    assert arc2 == [3, 4, 5]
    assert len(rows) == ref_grid.J * (1 + 3)


def test_c2_closed_interval_includes_midpoint(ref_net, ref_grid):
    obs = build_observation(ref_net, ref_grid, "C2", [0, 0, 1])
    # arc (3): dx = 0.1, x_q >= 1.0 gives q = 10..20
    assert sorted({q for a, _, q in _rows(obs) if a == 3}) == list(range(10, 21))


def test_c3_window(ref_net, ref_grid):
    obs = build_observation(ref_net, ref_grid, "C3", [1, 0, 0], t_hat=6.5)
    assert _rows(obs) == [(1, j, 0) for j in range(65, ref_grid.J)]
    assert obs.inflow_mask.sum() == ref_grid.J - 65
    assert not obs.inflow_mask[:65].any()


def test_empty_observation(ref_net, ref_grid):
    obs = build_observation(ref_net, ref_grid, "C2", [0, 0, 0])
    assert obs.n_rows == 0
    z = simulate_upwind(ref_net, ref_grid, np.ones(ref_grid.J))
    assert apply_observation(obs, z).shape == (0,)


def test_bad_kappa(ref_net, ref_grid):
    with pytest.raises(BadKappa):
        build_observation(ref_net, ref_grid, "C1", [1, -1, 0])
    with pytest.raises(BadKappa):
        build_observation(ref_net, ref_grid, "C1", [1, 1])


def test_bad_window(ref_net, ref_grid):
    with pytest.raises(BadWindow):
        build_observation(ref_net, ref_grid, "C3", [1, 0, 0], t_hat=10.0)


def test_zero_state_gives_zero(ref_net, ref_grid):
    obs = build_observation(ref_net, ref_grid, "C2", [1, 1, 1])
    z = simulate_upwind(ref_net, ref_grid, np.zeros(ref_grid.J))
    assert not apply_observation(obs, z).any()


def test_kappa_scaling_is_linear(ref_net, ref_grid):
    z = simulate_upwind(ref_net, ref_grid, np.random.default_rng(1).standard_normal(ref_grid.J))
    a = apply_observation(build_observation(ref_net, ref_grid, "C2", [1, 0.5, 2]), z)
    b = apply_observation(build_observation(ref_net, ref_grid, "C2", [2, 1, 4]), z)
    np.testing.assert_allclose(b, 2 * a, rtol=1e-15)


def test_impulse_observation(ref_net, ref_grid):
    u = np.zeros(ref_grid.J)
    u[0] = 1.0
    z = simulate_upwind(ref_net, ref_grid, u)
    y = apply_observation(build_observation(ref_net, ref_grid, "C1", [0, 1, 0]), z)
    expected = np.zeros(ref_grid.J)
    expected[15] = 0.1125
    np.testing.assert_allclose(y, expected, atol=1e-15)


def test_observation_superposition(ref_net, ref_grid):
    obs = build_observation(ref_net, ref_grid, "C2", [1, 1, 1])
    rng = np.random.default_rng(2)
    u1, u2 = rng.standard_normal((2, ref_grid.J))
    y = lambda u: apply_observation(obs, simulate_upwind(ref_net, ref_grid, u))  # noqa: E731
    assert np.abs(y(u1 + 3 * u2) - y(u1) - 3 * y(u2)).max() <= 1e-12


def test_state_on_other_grid_rejected(ref_net, ref_grid):
    obs = build_observation(ref_net, ref_grid, "C1", [1, 1, 1])
    other = make_grid(ref_net, 0.05, 10.0)
    z = simulate_upwind(ref_net, other, np.zeros(other.J))
    with pytest.raises(ValueError):
        apply_observation(obs, DiscreteState(other, z.z))
