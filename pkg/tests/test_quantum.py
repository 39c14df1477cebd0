import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from circledirac.dirac import BracketTable
from circledirac.mechanics import a, e
from circledirac.quantum import (A, P_chi, EnergyParams, EntangledState, Lz, OperatorForm, alpha, angular_momentum,
                                 chi, energy, hamiltonian_bound, hamiltonian_LZ, lz_projections, momentum_operators,
                                 momentum_via_weyl, polar_wavefunction, quantize, r, reference_commutators,
                                 solve_momentum_ansatz, weyl_sigma3)
from circledirac.symexpr import equiv, simplify, sym

I = sp.I
BINDING = {"alpha": 0.3, "r": math.sqrt(10), "e": 1.0, "A": 0.5}


@pytest.fixture(scope="module")
def ansatz():
    return solve_momentum_ansatz()


@pytest.fixture(scope="module")
def forms(ansatz):
    return momentum_operators(ansatz)


# --- quantization ----------------------------------------------------------

def test_quantize_multiplies_every_entry_by_i(d2, ct2):
    for key, val in d2.particle_table.items():
        assert ct2.entries[key] == I * val


def test_quantize_rejects_non_dirac_tables():
    with pytest.raises(ValueError):
        quantize(BracketTable("poisson", {}, ()))


def test_commutators_match_closed_forms(d2, ct2):
    ps = d2.phase_space
    rel = ps.surface_relations()
    for pair, (_, val) in reference_commutators(ps).items():
        assert equiv(ct2[pair], val, rel), pair


def test_commutator_examples(d2, ct2):
    ps = d2.phase_space
    rel = ps.surface_relations()
    x1, y1, Px1, Py1 = ps.x(1), ps.y(1), ps.Px(1), ps.Py(1)
    assert equiv(ct2[(x1, Px1)], I * (1 - x1**2 / (2 * a**2)), rel)
    assert ct2[(x1, ps.x(2))] == 0
    L = x1 * Py1 - y1 * Px1
    assert equiv(ct2[(Px1, Py1)], I / (2 * a**2) * (-L + e * (x1 * ps.Ay(1) - y1 * ps.Ax(1))), rel)


def test_reduced_convention(d2, ct2):
    ps = d2.phase_space
    rel = ps.surface_relations()
    assert equiv(ct2.entry("x1", "P_x1", "reduced"), I * ps.y(1) ** 2 / (2 * a**2), rel)
    assert equiv(ct2.entry("y1", "P_y1", "reduced"), I * ps.x(1) ** 2 / (2 * a**2), rel)
    assert equiv(ct2.entry("P_x1", "x1", "reduced"), -I * ps.y(1) ** 2 / (2 * a**2), rel)
    assert ct2.entry("x1", "P_y1", "reduced") == ct2.entry("x1", "P_y1", "full")
    with pytest.raises(ValueError):
        ct2.entry("x1", "P_x1", "halfway")


# --- states ----------------------------------------------------------------

@pytest.mark.parametrize("coeffs, expected", [
    ((1 / math.sqrt(2), 0, 0, 1 / math.sqrt(2)), 1.0),
    ((1, 0, 0, 0), 0.0),
    ((0.8, 0, 0, 0.6), 0.96),
])
def test_concurrence_examples(coeffs, expected):
    assert EntangledState(2, coeffs).concurrence() == pytest.approx(expected, abs=1e-12)


def test_concurrence_rejects_unnormalized():
    with pytest.raises(ValueError):
        EntangledState(2, (1, 1, 0, 0)).concurrence()


def test_concurrence_bounds_on_random_states():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        v /= np.linalg.norm(v)
        c = EntangledState(2, tuple(v)).concurrence()
        assert 0 <= c <= 1 + 1e-12


def test_maximal_and_ghz_states():
    assert EntangledState.maximal().concurrence() == pytest.approx(1)
    g = EntangledState.ghz()
    assert g.arity == 3 and g.normalized
    with pytest.raises(ValueError):
        g.concurrence()


def test_polar_wavefunction_normalisation_constants():
    c1, c2, c3 = sym("chi1"), sym("chi2"), sym("chi3")
    psi2, psi3 = polar_wavefunction(2), polar_wavefunction(3)
    assert simplify(psi2.subs({c1: 0, c2: 0}) - sp.sqrt(2) * a**2) == 0
    assert simplify(psi3.subs({c1: 0, c2: 0, c3: 0}) - sp.sqrt(2) * a**3) == 0


# --- ansatz ----------------------------------------------------------------

def test_ansatz_solution(ansatz):
    assert simplify(ansatz.mu + sp.sin(chi)) == 0
    assert simplify(ansatz.nu - sp.cos(chi)) == 0
    assert simplify(ansatz.beta - (I * sp.cos(chi) + alpha * sp.sin(chi) + e * r * A)) == 0
    assert simplify(ansatz.gamma_fn - (I * sp.sin(chi) - alpha * sp.cos(chi) + e * r * A)) == 0


def test_ansatz_residuals(ansatz):
    assert ansatz.residuals["beta_ode"] == ansatz.residuals["gamma_ode"] == ansatz.residuals["eom"] == 0
    assert ansatz.residuals["finite_difference_max"] < 1e-8


def test_beta_at_origin(ansatz):
    assert ansatz.beta.subs({chi: 0, alpha: 0, A: 0}) == I


# --- operator forms ----------------------------------------------------------

def test_anticommutator_expansion(forms):
    expected = OperatorForm(I * sp.sin(chi) / r + I * e * A / alpha,
                            I * sp.cos(chi) / (2 * r) + alpha * sp.sin(chi) / r + e * A)
    assert (forms.anticommutator_x - expected).is_zero()


def test_direct_form_at_zero_parameters(forms):
    px = forms.printed_x.subs({alpha: 0, A: 0})
    assert (px - OperatorForm(I * sp.sin(chi) / r, I * sp.cos(chi) / r)).is_zero()


def test_discrepancies_are_reported(forms):
    d = forms.discrepancies()
    assert set(d) == {"anticommutator_x - ansatz_x", "anticommutator_y - ansatz_y", "printed_y - ansatz_y"}
    assert simplify(d["printed_y - ansatz_y"].deriv - 2 * I * sp.cos(chi) / r) == 0


@pytest.mark.parametrize("name", ["anticommutator_x", "anticommutator_y"])
def test_anticommutator_forms_are_hermitian(forms, name):
    assert getattr(forms, name).hermiticity_defect(16, 512, BINDING) < 1e-9


def test_direct_forms_are_not_hermitian(forms):
    assert forms.printed_x.hermiticity_defect(16, 512, BINDING) > 1e-3


def test_angular_momentum_is_diagonal():
    M = angular_momentum().matrix(4, 64, {"alpha": 0.25})
    assert np.allclose(M, np.diag(np.arange(-4, 5) - 0.25))


def test_conjugation_by_a_phase():
    op = OperatorForm(I, 0).conjugated(alpha * chi)
    f = sp.Function("f")(chi)
    lhs = sp.exp(I * alpha * chi) * OperatorForm(I, 0).apply(sp.exp(-I * alpha * chi) * f)
    assert simplify(sp.expand(lhs - op.apply(f))) == 0


def test_matrix_requires_bound_symbols():
    with pytest.raises(KeyError):
        angular_momentum().matrix(2, 16)


# --- Weyl ordering -----------------------------------------------------------

def test_weyl_orderings(ct2):
    w = weyl_sigma3(ct2)
    x1, y1 = sym("x1"), sym("y1")
    assert simplify(w.commutator_sum - I * (x1**2 + y1**2) / (2 * a**2)) == 0
    assert w.per_particle == I / 2
    assert w.summed == I
    assert simplify(w.difference - (-I + w.commutator_sum)) == 0


def test_momentum_via_weyl_is_hermitian():
    w = momentum_via_weyl()
    assert w.classical_identity
    for op in (w.px, w.py):
        assert op.hermiticity_defect(16, 512, {"alpha": 0.0, "r": 2.0}) < 1e-9
        assert op.hermiticity_defect(16, 512, {"alpha": 0.7, "r": 2.0}) < 1e-9
    expected = OperatorForm(I * sp.sin(chi) / r, I * sp.cos(chi) / (2 * r) + alpha * sp.sin(chi) / r)
    assert (w.px - expected).is_zero()


# --- Hamiltonians and energy -------------------------------------------------

def test_hamiltonian_lz_without_fields():
    H = hamiltonian_LZ().subs({A: 0, sym("V"): 0})
    assert simplify(H - (Lz**2 / (2 * r**2) + 1 / (8 * r**2))) == 0


def test_bound_hamiltonian():
    H = hamiltonian_bound()
    assert simplify(H - (P_chi**2 / (2 * r**2) + e**2 * A**2 - e * A / r * P_chi + e * sym("V"))) == 0


def test_energy_at_null_point():
    rep = energy(EnergyParams())
    assert rep.constrained == pytest.approx(0.00625)
    assert rep.unconstrained == 0
    assert rep.shift == pytest.approx(1 / 160, abs=1e-15)
    assert set(rep.reading) == {"constrained", "unconstrained"}


def test_energy_binding_is_embedded():
    rep = energy(EnergyParams(alpha=2.7))
    assert rep.binding["alpha_bar"] == pytest.approx(0.7)
    assert rep.binding["alpha_prime"] == pytest.approx(0.7)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2), st.floats(-1, 1))
def test_energy_is_real_without_charge(c, al, A_, V):
    assert energy(EnergyParams(chi=c, alpha=al, A=A_, V=V, e=0.0, x=1.0, y=3.0)).imaginary_part == 0


def test_energy_has_imaginary_part_with_charge():
    assert energy(EnergyParams(A=0.5, x=1.0, y=3.0)).has_imaginary_part


def test_lz_projections():
    from fractions import Fraction as F
    l1, l2, tot = lz_projections(F("0.5"), F("1.2"), F("0.3"))
    assert (l1, l2, tot) == (F("0.9"), F("0.2"), F("1.1"))


@given(st.fractions(-5, 5), st.fractions(-5, 5), st.fractions(-5, 5))
def test_lz_additivity_is_exact(c1, c2, al):
    l1, l2, tot = lz_projections(c1, c2, al)
    assert l1 + l2 == tot
