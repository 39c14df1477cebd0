import numpy as np
import pytest
import sympy as sp

from circledirac.checks import numeric_matrix
from circledirac.dirac import (FAMILIES, ChainError, ConstraintMatrix, DiracAlgebra, SingularConstraintMatrix,
                               SurfaceSampler, build_and_invert, classify, compare_with_reference, generate_chain,
                               make_chain, numeric, reference_brackets, reference_constraints, reference_delta,
                               reference_multiplier)
from circledirac.mechanics import LAM, P_LAM, U1, PhaseSpace, a, build_lagrangian, legendre, poisson, \
    total_hamiltonian
from circledirac.symexpr import equiv, simplify


def test_chain_matches_closed_form_constraints(d2):
    ps = d2.phase_space
    chain = d2.chain
    assert len(chain) == 4
    assert [c.generation for c in chain.constraints] == ["primary"] + ["secondary"] * 3
    for got, ref in zip(chain.exprs, reference_constraints(ps)):
        assert equiv(got, ref) or equiv(got, -ref)


def test_chain_terminates_by_solving_the_multiplier(d2):
    assert d2.chain.multiplier is not None
    assert d2.chain.termination == "multiplier solved"


def test_multiplier_lambda_coefficient_is_eight(d2):
    ps = d2.phase_space
    assert equiv(d2.chain.multiplier, reference_multiplier(ps, lam_coefficient=8))
    assert not equiv(d2.chain.multiplier, reference_multiplier(ps, lam_coefficient=4))


def test_multiplier_makes_last_constraint_consistent(d2):
    ps = d2.phase_space
    s4 = d2.chain.constraints[3].expr
    consistency = poisson(s4, d2.hamiltonian.expr, ps).subs(U1, d2.chain.multiplier)
    rel = ps.surface_relations()
    sampler = SurfaceSampler(ps, d2.chain, seed=5)
    f = numeric(rel.reduce(consistency.subs(P_LAM, 0)), ps)
    assert all(abs(f(b)) < 1e-9 for b in sampler.points(10))


def test_field_free_chain_drops_charge_terms():
    ps = PhaseSpace(2, potential=0)
    H2 = total_hamiltonian(legendre(build_lagrangian(2, ps=ps)))
    zero = {c: 0 for c in ps.field_components}
    chain = generate_chain(type(H2)(H2.expr.subs(zero), "total", ps))
    kin = sum(p**2 for p in ps.momenta)
    assert equiv(chain.exprs[3], kin - 2 * LAM * ps.radius_sq_total()) or \
        equiv(chain.exprs[3], -(kin - 2 * LAM * ps.radius_sq_total()))


def test_chain_cap_raises():
    ps = PhaseSpace(1, potential=0)
    H2 = total_hamiltonian(legendre(build_lagrangian(1, ps=ps)))
    with pytest.raises(ChainError):
        generate_chain(H2, max_iter=1)


def test_all_constraints_second_class(d2):
    assert d2.classification.all_second_class
    assert not d2.classification.phi_singular


def test_single_primary_is_first_class():
    ps = PhaseSpace(2)
    cls = classify(make_chain(ps, [P_LAM]))
    assert cls.classes == ("first",)


def test_duplicated_constraint_gives_singular_matrix(d2):
    ps = d2.phase_space
    s = d2.chain.exprs
    dup = make_chain(ps, [s[0], s[1], s[1], s[2]])
    assert classify(dup, SurfaceSampler(ps, d2.chain)).phi_singular
    with pytest.raises(SingularConstraintMatrix):
        build_and_invert(dup, SurfaceSampler(ps, d2.chain))


def test_phi_is_antisymmetric_and_determinant(d2):
    phi = d2.matrix.phi
    assert simplify(phi + phi.T) == sp.zeros(4, 4)
    R = d2.phase_space.radius_sq_total()
    assert equiv(d2.matrix.determinant, 16 * R**4)


@pytest.mark.parametrize("i,j", [(i, j) for i in range(4) for j in range(4)])
def test_delta_entries_match_closed_form(d2, i, j):
    ps = d2.phase_space
    assert equiv(d2.matrix.delta[i, j], reference_delta(ps)[i, j], ps.surface_relations())


def test_per_particle_reading_of_delta_differs(d2):
    ps = d2.phase_space
    rel = ps.surface_relations()
    alt = reference_delta(ps, rsq=a**2)
    assert not equiv(d2.matrix.delta[0, 3], alt[0, 3], rel)


def test_delta_times_phi_is_identity_numerically(d2):
    ps = d2.phase_space
    D, P = numeric_matrix(d2.matrix.delta, ps), numeric_matrix(d2.matrix.phi, ps)
    for b in SurfaceSampler(ps, d2.chain, seed=9).points(50):
        assert np.allclose(D(b) @ P(b), np.eye(4), atol=1e-9)


@pytest.mark.parametrize("pair", sorted(reference_brackets(PhaseSpace(2))))
def test_bracket_table_matches_families(d2, pair):
    ps = d2.phase_space
    assert compare_with_reference(d2.particle_table, ps)[pair]


def test_every_family_is_covered():
    fams = {fam for fam, _ in reference_brackets(PhaseSpace(2)).values()}
    assert fams == set(FAMILIES)


def test_bracket_examples(d2):
    ps = d2.phase_space
    t = d2.particle_table
    rel = ps.surface_relations()
    assert equiv(t[(ps.x(2), ps.Px(2))], 1 - ps.x(2) ** 2 / (2 * a**2), rel)
    assert t[(ps.x(1), ps.x(2))] == 0
    assert equiv(t[(ps.y(1), ps.Px(2))], -ps.x(2) * ps.y(1) / (2 * a**2), rel)
    assert d2.algebra.bracket(d2.chain.exprs[1], ps.Px(1)) == 0


def test_table_is_antisymmetric(d2):
    t = d2.particle_table
    for (u, v), val in t.items():
        assert t[(v, u)] == -val


def test_constraint_brackets_vanish_at_surface_points(d2):
    ps = d2.phase_space
    sampler = SurfaceSampler(ps, d2.chain, seed=4)
    pts = sampler.points(20)
    for s in d2.chain.exprs:
        for v in ps.canonical:
            f = numeric(d2.algebra.bracket(s, v, reduce=False), ps)
            assert max(abs(f(b)) for b in pts) < 1e-10


def test_degenerate_limit_is_poisson():
    ps = PhaseSpace(2)
    chain = make_chain(ps, [])
    alg = DiracAlgebra(chain, ConstraintMatrix(sp.zeros(0, 0), sp.zeros(0, 0), sp.Integer(1)))
    for u in ps.canonical:
        for v in ps.canonical:
            assert alg.bracket(u, v, reduce=False) == poisson(u, v, ps)


def test_single_particle_table(d1):
    ps = d1.phase_space
    t = d1.particle_table
    rel = ps.surface_relations()
    assert equiv(t[(ps.x(1), ps.Px(1))], 1 - ps.x(1) ** 2 / a**2, rel)
    assert equiv(t[(ps.x(1), ps.Py(1))], -ps.x(1) * ps.y(1) / a**2, rel)


def test_sampler_points_satisfy_constraints(d2):
    ps = d2.phase_space
    fs = [numeric(s, ps) for s in d2.chain.exprs]
    for b in SurfaceSampler(ps, d2.chain, seed=8).points(10):
        assert all(abs(f(b)) < 1e-9 for f in fs)
