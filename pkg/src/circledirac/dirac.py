"""Constraint chain, second-class constraint matrix and Dirac brackets."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import sympy as sp

from .mechanics import LAM, P_LAM, U1, HamiltonianModel, PhaseSpace, a, e, poisson
from .symexpr import Expr, compile_numeric, equiv, simplify, sym

MAX_CHAIN = 8


class ChainError(RuntimeError):
    pass


class SingularConstraintMatrix(RuntimeError):
    pass


@dataclass(frozen=True)
class Constraint:
    label: str
    expr: Expr
    generation: str  # "primary" | "secondary"
    klass: str | None = None  # "first" | "second"


@dataclass(frozen=True)
class ConstraintChain:
    constraints: tuple
    multiplier: Expr | None
    termination: str
    phase_space: PhaseSpace

    @property
    def exprs(self) -> list[Expr]:
        return [c.expr for c in self.constraints]

    def __len__(self):
        return len(self.constraints)


def _degree_in(term, variables) -> int:
    powers = term.as_powers_dict()
    return int(sum(powers.get(v, 0) for v in variables))


def _momentum_degree(term, ps: PhaseSpace) -> int:
    return _degree_in(term, ps.momenta + [P_LAM])


def _canonical_degree(term, ps: PhaseSpace) -> int:
    return _degree_in(term, ps.canonical)


def normalize_constraint(expr: Expr, ps: PhaseSpace) -> Expr:
    """Strip the rational content and fix the sign so that the term of highest
    momentum degree (then canonical degree) has a positive coefficient."""
    expr = simplify(expr)
    num, den = sp.fraction(expr)
    if den.free_symbols & set(ps.canonical):
        return expr
    content, prim = sp.expand(num).as_content_primitive()
    terms = sp.Add.make_args(sp.expand(prim))
    lead = max(terms, key=lambda t: (_momentum_degree(t, ps), _canonical_degree(t, ps),
                                     sp.default_sort_key(t.as_coeff_Mul()[1])))
    sign = -1 if lead.as_coeff_Mul()[0] < 0 else 1
    return sp.expand(sign * prim)


def generate_chain(H: HamiltonianModel, primaries=None, max_iter: int = MAX_CHAIN) -> ConstraintChain:
    """Iterate consistency conditions sigma_dot = {sigma, H} until u1 is fixed."""
    if H.variant != "total":
        raise ChainError("constraint generation needs the total Hamiltonian")
    ps = H.phase_space
    if primaries is None:
        primaries = [Constraint("sigma1", P_LAM, "primary")]
    chain = list(primaries)
    for _ in range(max_iter):
        sdot = poisson(chain[-1].expr, H.expr, ps)
        if sdot.has(U1):
            coeff = simplify(sp.diff(sdot, U1))
            if coeff == 0 or coeff.has(U1):
                raise ChainError("multiplier equation is not solvable")
            u1 = simplify(-(sdot - coeff * U1) / coeff)
            return ConstraintChain(tuple(chain), u1, "multiplier solved", ps)
        if sdot == 0:
            return ConstraintChain(tuple(chain), None, "consistency identically satisfied", ps)
        new = normalize_constraint(sdot, ps)
        if any(simplify(new - c.expr) == 0 for c in chain):
            return ConstraintChain(tuple(chain), None, "no new constraint", ps)
        chain.append(Constraint(f"sigma{len(chain) + 1}", new, "secondary"))
    raise ChainError(f"constraint chain did not close after {max_iter} iterations")


def make_chain(ps: PhaseSpace, exprs, labels=None) -> ConstraintChain:
    """Chain from explicit constraint expressions (for artificial systems)."""
    labels = labels or [f"sigma{i + 1}" for i in range(len(exprs))]
    cons = tuple(Constraint(lab, sp.sympify(x), "primary" if i == 0 else "secondary")
                 for i, (lab, x) in enumerate(zip(labels, exprs)))
    return ConstraintChain(cons, None, "given", ps)


# --------------------------------------------------------------------------
# numeric probing on the constraint surface


def probe_potential(ps: PhaseSpace) -> Expr:
    """Fixed non-trivial polynomial used when V is left generic."""
    k = ps.k
    return (ps.x(1) * ps.y(k) / 3 + ps.x(1) ** 2 * ps.y(1) / 5 + ps.y(k) ** 3 / 7
            + ps.x(k) * ps.y(1) ** 2 / 11)


def concretize(expr, ps: PhaseSpace, potential=None) -> Expr:
    """Replace a generic V(...) (and its derivatives) by ``potential``."""
    expr = sp.sympify(expr)
    if ps.potential != "generic":
        return expr
    potential = probe_potential(ps) if potential is None else sp.sympify(potential)
    lam = sp.Lambda(tuple(ps.coordinates), potential)
    return expr.replace(sp.Function("V"), lam).doit()


class SurfaceSampler:
    """Random points with every constraint sigma1..sigma4 satisfied.

    Positions are x_j = a cos(theta_j), y_j = a sin(theta_j); momenta are
    projected so that sum r.(P - eA) = 0; lam then solves sigma4.
    """

    def __init__(self, ps: PhaseSpace, chain: ConstraintChain | None = None, a_value=np.sqrt(10.0),
                 e_value=1.0, potential=None, seed=0):
        self.ps = ps
        self.a = float(a_value)
        self.e = float(e_value)
        self.rng = np.random.default_rng(seed)
        self.potential = potential
        self._lam = None
        if chain is not None and len(chain) >= 4:
            s4 = concretize(chain.constraints[3].expr, ps, potential)
            sol = sp.solve(s4, LAM)
            if len(sol) == 1:
                self._lam_names = [s.name for s in ps.canonical if s not in (LAM, P_LAM)] + [
                    s.name for s in ps.parameters]
                self._lam = compile_numeric(sol[0], self._lam_names)

    def point(self) -> dict[str, float]:
        ps, rng = self.ps, self.rng
        b = {"a": self.a, "e": self.e}
        for c in ps.field_components:
            b[c.name] = float(rng.uniform(-1, 1))
        if ps.potential == "constant":
            b["V"] = float(rng.uniform(-1, 1))
        r = []
        for j in ps.particles:
            th = rng.uniform(-np.pi, np.pi)
            b[ps.x(j).name], b[ps.y(j).name] = self.a * np.cos(th), self.a * np.sin(th)
            r += [b[ps.x(j).name], b[ps.y(j).name]]
        r = np.array(r)
        u = rng.normal(size=2 * ps.k)
        u -= (r @ u) / (r @ r) * r
        for idx, j in enumerate(ps.particles):
            b[ps.Px(j).name] = u[2 * idx] + self.e * b[ps.Ax(j).name]
            b[ps.Py(j).name] = u[2 * idx + 1] + self.e * b[ps.Ay(j).name]
        b["P_lam"] = 0.0
        if self._lam is not None:
            b["lam"] = complex(self._lam(*[b[n] for n in self._lam_names])).real
        else:
            b["lam"] = float(rng.uniform(-1, 1))
        return b

    def points(self, n: int) -> list[dict[str, float]]:
        return [self.point() for _ in range(n)]


def numeric(expr, ps: PhaseSpace, potential=None):
    """Compile ``expr`` to a function of a binding dict."""
    ex = concretize(expr, ps, potential)
    names = sorted(s.name for s in ex.free_symbols)
    f = compile_numeric(ex, names)
    return lambda b: complex(f(*[b[n] for n in names]))


def weakly_zero(expr, ps: PhaseSpace, sampler: SurfaceSampler, probes: int = 12, tol: float = 1e-10) -> bool:
    expr = simplify(expr)
    if expr == 0:
        return True
    reduced = ps.surface_relations().reduce(expr.xreplace({P_LAM: 0}))
    if reduced == 0:
        return True
    f = numeric(reduced, ps, sampler.potential)
    return all(abs(f(b)) < tol for b in sampler.points(probes))


# --------------------------------------------------------------------------
# classification and the constraint matrix


def constraint_brackets(chain: ConstraintChain) -> sp.Matrix:
    ps = chain.phase_space
    s = chain.exprs
    n = len(s)
    phi = sp.zeros(n, n)
    for i in range(n):
        for j in range(i + 1, n):
            phi[i, j] = poisson(s[i], s[j], ps)
            phi[j, i] = -phi[i, j]
    return phi


@dataclass(frozen=True)
class Classification:
    classes: tuple
    phi_singular: bool

    @property
    def all_second_class(self) -> bool:
        return all(c == "second" for c in self.classes)


def classify(chain: ConstraintChain, sampler: SurfaceSampler | None = None) -> Classification:
    """Second class iff some bracket with another constraint is weakly nonzero."""
    ps = chain.phase_space
    sampler = sampler or SurfaceSampler(ps, chain if len(chain) >= 4 else None)
    phi = constraint_brackets(chain)
    n = len(chain)
    nonzero = [[i != j and not weakly_zero(phi[i, j], ps, sampler) for j in range(n)] for i in range(n)]
    classes = tuple("second" if any(row) else "first" for row in nonzero)
    det = simplify(phi.det()) if n else sp.Integer(1)
    singular = weakly_zero(det, ps, sampler)
    return Classification(classes, singular)


@dataclass(frozen=True)
class ConstraintMatrix:
    phi: sp.Matrix
    delta: sp.Matrix
    determinant: Expr


def _placeholder_inverse(phi: sp.Matrix):
    """Adjugate / determinant computed over one placeholder symbol per
    distinct entry, then substituted back; keeps the cofactors small."""
    n = phi.shape[0]
    names: dict = {}
    generic = sp.zeros(n, n)
    for i in range(n):
        for j in range(n):
            if i < j and phi[i, j] != 0:
                names[phi[i, j]] = names.get(phi[i, j]) or sp.Dummy(f"phi{i + 1}{j + 1}")
                generic[i, j] = names[phi[i, j]]
                generic[j, i] = -names[phi[i, j]]
    back = {d: v for v, d in names.items()}
    det_g = sp.factor(generic.det())
    inv_g = generic.adjugate().applyfunc(lambda x: sp.factor(x / det_g) if x != 0 else x)
    det = simplify(det_g.xreplace(back))
    delta = inv_g.applyfunc(lambda x: simplify(x.xreplace(back)) if x != 0 else x)
    return det, delta


def build_and_invert(chain: ConstraintChain, sampler: SurfaceSampler | None = None) -> ConstraintMatrix:
    ps = chain.phase_space
    phi = constraint_brackets(chain)
    if simplify(phi + phi.T) != sp.zeros(*phi.shape):
        raise AssertionError("constraint bracket matrix is not antisymmetric")
    det, delta = _placeholder_inverse(phi)
    sampler = sampler or SurfaceSampler(ps, chain if len(chain) >= 4 else None)
    if weakly_zero(det, ps, sampler):
        raise SingularConstraintMatrix("constraint matrix is singular on the constraint surface")
    return ConstraintMatrix(phi, delta, det)


# --------------------------------------------------------------------------
# Dirac brackets


class DiracAlgebra:
    """Dirac bracket for a closed chain with its inverted constraint matrix.

    Brackets are computed off the surface; ``reduce=True`` applies the
    position constraint only afterwards (weak equality).
    """

    def __init__(self, chain: ConstraintChain, cm: ConstraintMatrix):
        self.chain = chain
        self.cm = cm
        self.ps = chain.phase_space
        self._with_constraints: dict = {}

    def _brackets_with_constraints(self, f, left: bool):
        key = (f, left)
        if key not in self._with_constraints:
            if left:
                vals = [poisson(f, s, self.ps) for s in self.chain.exprs]
            else:
                vals = [poisson(s, f, self.ps) for s in self.chain.exprs]
            self._with_constraints[key] = vals
        return self._with_constraints[key]

    def bracket(self, f, g, reduce: bool = True) -> Expr:
        f, g = sp.sympify(f), sp.sympify(g)
        fs = self._brackets_with_constraints(f, True)
        sg = self._brackets_with_constraints(g, False)
        out = poisson(f, g, self.ps)
        D = self.cm.delta
        n = len(fs)
        corr = sp.Add(*[fs[m] * D[m, k] * sg[k] for m in range(n) for k in range(n)
                        if fs[m] != 0 and D[m, k] != 0 and sg[k] != 0])
        out = simplify(out - corr)
        if reduce:
            out = self.ps.surface_relations().reduce(out)
        return out

    def table(self, variables=None, reduce: bool = True) -> "BracketTable":
        variables = list(variables or self.ps.canonical)
        entries = {}
        for i, u in enumerate(variables):
            entries[(u.name, u.name)] = sp.Integer(0)
            for v in variables[i + 1:]:
                val = self.bracket(u, v, reduce=reduce)
                entries[(u.name, v.name)] = val
                entries[(v.name, u.name)] = -val
        return BracketTable("dirac", entries, tuple(v.name for v in variables))


def dirac_bracket(f, g, cm: ConstraintMatrix, chain: ConstraintChain, reduce: bool = True) -> Expr:
    return DiracAlgebra(chain, cm).bracket(f, g, reduce)


def bracket_table(cm: ConstraintMatrix, chain: ConstraintChain, variables=None, reduce=True) -> "BracketTable":
    return DiracAlgebra(chain, cm).table(variables, reduce)


@dataclass(frozen=True)
class BracketTable:
    flavor: str  # "poisson" | "dirac" | "commutator"
    entries: dict
    variables: tuple

    def __getitem__(self, pair) -> Expr:
        u, v = (x if isinstance(x, str) else x.name for x in pair)
        return self.entries[(u, v)]

    def items(self):
        return self.entries.items()


# --------------------------------------------------------------------------
# closed-form reference expressions


def reference_constraints(ps: PhaseSpace) -> list[Expr]:
    """sigma1..sigma4 in closed form (r.grad V written out)."""
    V = ps.V
    R = ps.radius_sq_total()
    kin2 = sp.Add(*[px**2 + py**2 for px, py in (ps.kinetic_momentum(j) for j in ps.particles)])
    w = sp.Add(*[ps.x(j) * ps.kinetic_momentum(j)[0] + ps.y(j) * ps.kinetic_momentum(j)[1] for j in ps.particles])
    r_grad_V = sp.Add(*[q * sp.diff(V, q) for q in ps.coordinates])
    return [P_LAM, R - ps.k * a**2, w, kin2 - e * r_grad_V - 2 * LAM * R]


def reference_multiplier(ps: PhaseSpace, lam_coefficient: int = 4) -> Expr:
    """-(P - eA).(3e grad V + c lam r + e (r.grad) grad V) / (2 r^2).

    The closed form as usually quoted carries ``c = 4``; the consistency
    condition itself fixes ``c = 8`` (see tests).
    """
    V = ps.V
    R = ps.radius_sq_total()
    total = sp.Integer(0)
    for j in ps.particles:
        for q, pk in zip((ps.x(j), ps.y(j)), ps.kinetic_momentum(j)):
            grad = sp.diff(V, q)
            r_grad_grad = sp.Add(*[s * sp.diff(grad, s) for s in ps.coordinates])
            total += pk * (3 * e * grad + lam_coefficient * LAM * q + e * r_grad_grad)
    return -total / (2 * R)


def reference_delta(ps: PhaseSpace, rsq=None) -> sp.Matrix:
    """Inverse constraint matrix in closed form.

    ``rsq`` is the reading of r_k^2: the summed alias (default) or e.g.
    ``a**2`` for the per-particle reading. ``r grad V`` is (r.grad)V and
    ``r^2 grad^2 V`` is the Hessian of V contracted twice with r.
    """
    V = ps.V
    S = ps.radius_sq_total() if rsq is None else rsq
    kin2 = sp.Add(*[px**2 + py**2 for px, py in (ps.kinetic_momentum(j) for j in ps.particles)])
    w = sp.Add(*[ps.x(j) * ps.kinetic_momentum(j)[0] + ps.y(j) * ps.kinetic_momentum(j)[1] for j in ps.particles])
    qs = ps.coordinates
    r_grad_V = sp.Add(*[q * sp.diff(V, q) for q in qs])
    rr_hess_V = sp.Add(*[p * q * sp.diff(V, p, q) for p in qs for q in qs])
    top = -2 * kin2 - 4 * LAM * S - e * r_grad_V - e * rr_hess_V
    D = sp.zeros(4, 4)
    D[0, 1] = top / (4 * S**2)
    D[1, 0] = -D[0, 1]
    D[0, 2] = w / S**2
    D[2, 0] = -D[0, 2]
    D[0, 3] = -1 / (2 * S)
    D[3, 0] = 1 / (2 * S)
    D[1, 2] = -1 / (2 * S)
    D[2, 1] = 1 / (2 * S)
    return D


FAMILIES = ("xp_x", "yp_y", "x_jp_xk", "xp_y", "x_jp_yk", "xy", "p_xp_y", "p_xjp_yk", "p_x1p_x2")


def reference_brackets(ps: PhaseSpace) -> dict[tuple[str, str], tuple[str, Expr]]:
    """Closed-form Dirac brackets on the surface, keyed by variable pair and
    tagged with their family. The denominator is k a^2 (2a^2 for k = 2)."""
    D = ps.k * a**2
    out: dict = {}
    js = list(ps.particles)
    X, Y, PX, PY, AX, AY = ps.x, ps.y, ps.Px, ps.Py, ps.Ax, ps.Ay

    def put(u, v, fam, val):
        out[(u.name, v.name)] = (fam, val)

    for j in js:
        for k in js:
            if j == k:
                put(X(k), PX(k), "xp_x", 1 - X(k) ** 2 / D)
                put(Y(k), PY(k), "yp_y", 1 - Y(k) ** 2 / D)
                put(X(k), PY(k), "xp_y", -X(k) * Y(k) / D)
                put(Y(k), PX(k), "xp_y", -X(k) * Y(k) / D)
                put(X(k), Y(k), "xy", sp.Integer(0))
                Lz = X(k) * PY(k) - Y(k) * PX(k)
                put(PX(k), PY(k), "p_xp_y", (-Lz + e * (X(k) * AY(k) - Y(k) * AX(k))) / D)
            else:
                put(X(j), PX(k), "x_jp_xk", -X(j) * X(k) / D)
                put(Y(j), PY(k), "x_jp_xk", -Y(j) * Y(k) / D)
                put(X(j), PY(k), "x_jp_yk", -X(j) * Y(k) / D)
                put(Y(j), PX(k), "x_jp_yk", -X(k) * Y(j) / D)
                put(PX(j), PY(k), "p_xjp_yk",
                    ((Y(k) * PX(j) - X(j) * PY(k)) + e * (X(j) * AY(k) - AX(j) * Y(k))) / D)
                if j < k:
                    put(X(j), X(k), "xy", sp.Integer(0))
                    put(Y(j), Y(k), "xy", sp.Integer(0))
                    put(X(j), Y(k), "xy", sp.Integer(0))
                    put(Y(j), X(k), "xy", sp.Integer(0))
                    put(PX(j), PX(k), "p_x1p_x2",
                        ((X(k) * PX(j) - X(j) * PX(k)) + e * (X(j) * AX(k) - X(k) * AX(j))) / D)
                    put(PY(j), PY(k), "p_x1p_x2",
                        ((Y(k) * PY(j) - Y(j) * PY(k)) + e * (Y(j) * AY(k) - Y(k) * AY(j))) / D)
    return out


def compare_with_reference(table: BracketTable, ps: PhaseSpace) -> dict[tuple[str, str], bool]:
    rel = ps.surface_relations()
    return {pair: bool(equiv(table[pair], val, rel)) for pair, (_, val) in reference_brackets(ps).items()}


@dataclass
class Derivation:
    """Everything the derive command reports."""

    phase_space: PhaseSpace
    lagrangian: object
    hamiltonian: HamiltonianModel
    chain: ConstraintChain
    classification: Classification
    matrix: ConstraintMatrix
    algebra: DiracAlgebra = field(repr=False)

    @cached_property
    def table(self) -> BracketTable:
        """Brackets among every canonical variable, multiplier pair included."""
        return self.algebra.table()

    @cached_property
    def particle_table(self) -> BracketTable:
        """Brackets among the particle variables x, y, P_x, P_y only."""
        return self.algebra.table(self.phase_space.canonical[:-2])


def derive(k: int, potential="generic") -> Derivation:
    from .mechanics import build_lagrangian, legendre, total_hamiltonian

    ps = PhaseSpace(k, potential)
    L = build_lagrangian(k, True, ps)
    H2 = total_hamiltonian(legendre(L))
    chain = generate_chain(H2)
    sampler = SurfaceSampler(ps, chain)
    cls = classify(chain, sampler)
    chain = ConstraintChain(tuple(Constraint(c.label, c.expr, c.generation, k_) for c, k_ in
                                  zip(chain.constraints, cls.classes)), chain.multiplier, chain.termination, ps)
    cm = build_and_invert(chain, sampler)
    return Derivation(ps, L, H2, chain, cls, cm, DiracAlgebra(chain, cm))


__all__ = [
    "BracketTable", "ChainError", "Classification", "Constraint", "ConstraintChain", "ConstraintMatrix",
    "Derivation", "DiracAlgebra", "FAMILIES", "SingularConstraintMatrix", "SurfaceSampler", "bracket_table",
    "build_and_invert", "classify", "compare_with_reference", "concretize", "derive", "dirac_bracket",
    "generate_chain", "make_chain", "numeric", "probe_potential", "reference_brackets", "reference_constraints",
    "reference_delta", "reference_multiplier", "sym", "weakly_zero",
]
