import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from sigman.liouville import (
    RHO0,
    SIGMA_PLUS,
    ChannelSpec,
    build_superops,
    convergence_order,
    dissipator_expectation,
    exact_rk,
    exact_rk_series,
    propagator,
    unvec,
    vec,
    write_convergence_csv,
)
from sigman.qubit import ID2, SX, SY, SZ
from sigman.weights import combine_sigma, sigma_weights


def lindblad_rhs(h, ops):
    """Brute-force 2x2 master equation, independent of the vec machinery."""

    def f(rho):
        out = -1j * (h @ rho - rho @ h)
        for a, g in ops:
            ad = a.conj().T
            out = out + g * (a @ rho @ ad - 0.5 * (ad @ a @ rho + rho @ ad @ a))
        return out

    return f


def random_spec(rng, x=1.0):
    coeffs = rng.normal(size=4)
    h = coeffs[0] * ID2 + coeffs[1] * SX + coeffs[2] * SY + coeffs[3] * SZ
    ops = [(SIGMA_PLUS, rng.uniform(0, 1)), (SZ, rng.uniform(0, 1)), (SX, rng.uniform(0, 0.5))]
    return ChannelSpec(h, ops, x)


def test_vec_convention():
    a, b, rho = (np.random.default_rng(i).normal(size=(2, 2)) for i in range(3))
    np.testing.assert_allclose(vec(a @ rho @ b), np.kron(b.T, a) @ vec(rho))
    np.testing.assert_array_equal(unvec(vec(rho)), rho)


def test_spec_validation():
    with pytest.raises(ValueError):
        ChannelSpec(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        ChannelSpec(SZ, [(SZ, -0.1)])


def test_precession_commutator():
    h_super, _ = build_superops(ChannelSpec(SZ / 2))
    drho = h_super(RHO0)
    # only a sigma_y component
    assert abs(np.trace(SX @ drho)) < 1e-15 and abs(np.trace(SZ @ drho)) < 1e-15
    assert abs(np.trace(SY @ drho)) == pytest.approx(1.0)


def test_dephasing_dissipator():
    g = 0.37
    spec = ChannelSpec(np.zeros((2, 2)), [(SZ, g)], 1.0)
    _, l_super = build_superops(spec)
    np.testing.assert_allclose(l_super(RHO0), g * (SZ @ RHO0 @ SZ - RHO0), atol=1e-15)
    assert np.trace(SX @ l_super(RHO0)).real == pytest.approx(-2 * g)
    np.testing.assert_allclose(l_super(ID2 / 2), 0, atol=1e-15)
    x = 0.8
    assert dissipator_expectation(spec.with_x(x)) == pytest.approx(-2 * g * x)
    assert dissipator_expectation(spec.with_x(x), "trace") == pytest.approx(-g * x)


def test_amplitude_damping_expectation_bruteforce():
    g, x = 0.6, 0.3
    spec = ChannelSpec(np.zeros((2, 2)), [(SIGMA_PLUS, g)], x)
    ref = x * np.trace(SX @ lindblad_rhs(np.zeros((2, 2)), [(SIGMA_PLUS, g)])(RHO0)).real
    assert dissipator_expectation(spec) == pytest.approx(ref, abs=1e-15)
    assert ref == pytest.approx(-g * x / 2)


def test_unitary_only_expectation_zero():
    spec = ChannelSpec(0.7 * SY + 0.2 * SZ, [], 0.5)
    assert dissipator_expectation(spec) == 0
    assert dissipator_expectation(spec, "trace") == 0


def test_propagator_identity_at_zero():
    np.testing.assert_allclose(propagator(random_spec(np.random.default_rng(0), x=0.0)).matrix, np.eye(4), atol=1e-15)


def test_dephasing_closed_form():
    g, x = 0.3, 0.9
    spec = ChannelSpec(np.zeros((2, 2)), [(SZ, g)], x)
    for k in range(5):
        assert exact_rk(spec, k) == pytest.approx(np.exp(-2 * g * x * k), abs=1e-10)


def test_unitary_preserves_purity():
    spec = ChannelSpec(0.3 * SX + 1.1 * SY - 0.4 * SZ, [], 2.0)
    rho = propagator(spec)(RHO0)
    assert np.trace(rho @ rho).real == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_propagator_matches_ode(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, x=rng.uniform(0.1, 2))
    f = lindblad_rhs(spec.hamiltonian, spec.lindblad_ops)
    sol = solve_ivp(
        lambda t, y: f(y.reshape(2, 2)).ravel(), (0, spec.x), RHO0.ravel().astype(complex), rtol=1e-11, atol=1e-13
    )
    np.testing.assert_allclose(propagator(spec)(RHO0), sol.y[:, -1].reshape(2, 2), atol=1e-8)


@given(st.integers(0, 2**31))
def test_trace_and_hermiticity(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, x=rng.uniform(0, 3))
    K = propagator(spec)
    _, l_super = build_superops(spec)
    # trace functional vec(I)^dagger is a left fixed point
    np.testing.assert_allclose(vec(ID2).conj() @ K.matrix, vec(ID2).conj(), atol=1e-12)
    rho = K(RHO0)
    np.testing.assert_allclose(rho, rho.conj().T, atol=1e-12)
    assert abs(np.trace(l_super(RHO0))) < 1e-12


@given(st.integers(0, 2**31))
def test_rk_conventions(seed):
    spec = random_spec(np.random.default_rng(seed), x=0.4)
    proj = exact_rk_series(spec, 3)
    trace = exact_rk_series(spec, 3, "trace")
    assert proj[0] == 1 and trace[0] == pytest.approx(1.0)
    np.testing.assert_allclose(trace, (1 + proj) / 2, atol=1e-12)
    for k in range(4):
        assert exact_rk(spec, k) == pytest.approx(proj[k], abs=1e-12)


def test_rk_rejects_negative_k():
    with pytest.raises(ValueError):
        exact_rk(ChannelSpec(SZ), -1)


def test_first_order_coherent_cancellation():
    # purely coherent y rotation: <L> = 0 and sigma_n = O(x^(n+1)); R_k = cos(k theta)
    # is even in theta, so odd orders vanish too and n=2 already sits at x^4
    spec = ChannelSpec(0.7 * SY / 2, [], 1.0)
    for n, expected in ((1, 2), (2, 4), (3, 4)):
        errs = [abs(combine_sigma(sigma_weights(n), exact_rk_series(spec.with_x(x), n))) for x in (0.01, 0.02)]
        assert np.log2(errs[1] / errs[0]) == pytest.approx(expected, abs=0.05)
        assert expected >= n + 1


def test_full_revolution_invisible():
    spec = ChannelSpec(np.pi * SY, [], 1.0)  # angle 2 pi per repetition
    np.testing.assert_allclose(exact_rk_series(spec, 3), 1.0, atol=1e-12)
    assert combine_sigma(sigma_weights(3), exact_rk_series(spec, 3)) == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("n, slope, tol", [(1, 2, 0.3), (2, 3, 0.3), (3, 4, 0.4)])
def test_convergence_slopes(n, slope, tol):
    fam = ChannelSpec(0.7 * SY / 2, [(SZ, 0.3)], 1.0)
    res = convergence_order(fam, n, np.geomspace(1e-3, 1e-1, 9))
    assert not res.at_floor
    assert res.slope == pytest.approx(slope, abs=tol)


def test_convergence_floor_and_grid():
    fam = ChannelSpec(np.zeros((2, 2)), [], 1.0)
    res = convergence_order(fam, 2, np.geomspace(1e-3, 1e-1, 6))
    assert res.at_floor and res.slope is None
    with pytest.raises(ValueError):
        convergence_order(fam, 2, np.geomspace(1e-3, 1e-1, 5))
    with pytest.raises(ValueError):
        convergence_order(fam, 2, np.geomspace(1e-4, 1e-1, 8))


def test_convergence_csv(tmp_path):
    fam = ChannelSpec(0.7 * SY / 2, [(SZ, 0.3)], 1.0)
    res = [convergence_order(fam, n, np.geomspace(1e-3, 1e-1, 6)) for n in (2, 3)]
    write_convergence_csv(res, tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "n,x,sigma_n,L_expect,abs_error" and len(lines) == 13
