"""Lagrangians, Legendre transform and Poisson brackets for k charges on a circle."""
from __future__ import annotations

from dataclasses import dataclass, field

import sympy as sp

from .symexpr import Expr, SideRelations, simplify, sym

# canonical multiplier pair and parameters
LAM = sym("lam")
P_LAM = sym("P_lam")
LAM_DOT = sym("lam_dot")
U1 = sym("u1")
a, e, A, V_SYM = sym("a"), sym("e"), sym("A"), sym("V")


def _indexed(prefix: str, j: int) -> sp.Symbol:
    return sym(f"{prefix}{j}")


@dataclass(frozen=True)
class PhaseSpace:
    """Extended phase space of ``k`` particles plus the multiplier pair.

    ``potential`` is ``"generic"`` (an undefined function V of every
    coordinate), ``"constant"`` (the plain symbol V) or an explicit sympy
    expression in the coordinates. Field components ``A_xj``, ``A_yj`` are
    uniform, so the Coulomb gauge holds identically.
    """

    k: int
    potential: object = "generic"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("particle count must be >= 1")

    # coordinates -----------------------------------------------------
    def x(self, j):
        return _indexed("x", j)

    def y(self, j):
        return _indexed("y", j)

    def Px(self, j):
        return _indexed("P_x", j)

    def Py(self, j):
        return _indexed("P_y", j)

    def Ax(self, j):
        return _indexed("A_x", j)

    def Ay(self, j):
        return _indexed("A_y", j)

    @property
    def particles(self):
        return range(1, self.k + 1)

    @property
    def coordinates(self) -> list[sp.Symbol]:
        return [q for j in self.particles for q in (self.x(j), self.y(j))]

    @property
    def momenta(self) -> list[sp.Symbol]:
        return [p for j in self.particles for p in (self.Px(j), self.Py(j))]

    @property
    def pairs(self) -> list[tuple[sp.Symbol, sp.Symbol]]:
        return list(zip(self.coordinates, self.momenta)) + [(LAM, P_LAM)]

    @property
    def canonical(self) -> list[sp.Symbol]:
        out = []
        for j in self.particles:
            out += [self.x(j), self.y(j), self.Px(j), self.Py(j)]
        return out + [LAM, P_LAM]

    @property
    def field_components(self) -> list[sp.Symbol]:
        return [c for j in self.particles for c in (self.Ax(j), self.Ay(j))]

    @property
    def parameters(self) -> list[sp.Symbol]:
        out = [a, e] + self.field_components
        if self.potential == "constant":
            out.append(V_SYM)
        return out

    @property
    def V(self) -> Expr:
        if self.potential == "generic":
            return sp.Function("V")(*self.coordinates)
        if self.potential == "constant":
            return V_SYM
        return sp.sympify(self.potential)

    def with_potential(self, potential) -> "PhaseSpace":
        return PhaseSpace(self.k, potential)

    # aliases ----------------------------------------------------------
    def radius_sq(self, j) -> Expr:
        """Per-particle alias r_j^2 = x_j^2 + y_j^2."""
        return self.x(j) ** 2 + self.y(j) ** 2

    def radius_sq_total(self) -> Expr:
        """Summed alias sum_j r_j^2 (equal to k a^2 on the surface)."""
        return sp.Add(*[self.radius_sq(j) for j in self.particles])

    def kinetic_momentum(self, j) -> tuple[Expr, Expr]:
        return self.Px(j) - e * self.Ax(j), self.Py(j) - e * self.Ay(j)

    def surface_relations(self) -> SideRelations:
        """sum_j (x_j^2 + y_j^2) = k a^2 solved for the last y_k^2."""
        return SideRelations.from_equations([(self.radius_sq_total(), self.k * a**2)])

    def uniform_field(self, magnitude) -> dict[str, object]:
        """Binding with every field component equal to ``magnitude``."""
        return {c.name: magnitude for c in self.field_components}


def velocity(q: sp.Symbol) -> sp.Symbol:
    return sym(f"{q.name}_dot")


@dataclass(frozen=True)
class LagrangianModel:
    terms: dict
    velocities: tuple
    constrained: bool
    phase_space: PhaseSpace | None = None

    @property
    def expr(self) -> Expr:
        return sp.Add(*self.terms.values())


@dataclass(frozen=True)
class HamiltonianModel:
    expr: Expr
    variant: str  # "raw" (H1) | "total" (H2) | "reduced" (H3)
    phase_space: PhaseSpace


@dataclass(frozen=True)
class DegeneracyReport:
    hessian: sp.Matrix
    determinant: Expr
    degenerate: bool
    null_directions: tuple = field(default=())


def build_lagrangian(k: int, constrained: bool = True, ps: PhaseSpace | None = None) -> LagrangianModel:
    """Charges (m = 1) in a scalar and uniform vector potential.

    With ``constrained`` the multiplier term ``-lam*(sum r_j^2 - k a^2)`` is
    added; the multiplier velocity is listed but never appears in L.
    """
    ps = ps or PhaseSpace(k)
    if ps.k != k:
        raise ValueError("phase space particle count does not match k")
    vel = []
    kinetic = coupling = sp.Integer(0)
    for j in ps.particles:
        xd, yd = velocity(ps.x(j)), velocity(ps.y(j))
        vel += [xd, yd]
        kinetic += sp.Rational(1, 2) * (xd**2 + yd**2)
        coupling += e * (xd * ps.Ax(j) + yd * ps.Ay(j))
    terms = {"kinetic": kinetic, "potential": -e * ps.V, "coupling": coupling}
    if constrained:
        terms["constraint"] = -LAM * (ps.radius_sq_total() - k * a**2)
        vel.append(LAM_DOT)
    return LagrangianModel(terms, tuple(vel), constrained, ps)


def hessian_degeneracy(L: LagrangianModel) -> DegeneracyReport:
    vel = list(L.velocities)
    H = sp.Matrix(len(vel), len(vel), lambda i, j: sp.diff(L.expr, vel[i], vel[j]))
    det = simplify(H.det())
    null = tuple(v for i, v in enumerate(vel) if all(H[i, c] == 0 for c in range(len(vel)))
                 and all(H[r, i] == 0 for r in range(len(vel))))
    return DegeneracyReport(H, det, det == 0, null)


class LegendreError(ValueError):
    pass


def legendre(L: LagrangianModel) -> HamiltonianModel:
    """Raw Hamiltonian H1 = sum p qdot - L, keeping ``P_lam * lam_dot``."""
    ps = L.phase_space
    report = hessian_degeneracy(L)
    if set(report.null_directions) - {LAM_DOT}:
        raise LegendreError(f"unsupported degenerate directions {report.null_directions}")
    regular = [v for v in L.velocities if v not in report.null_directions]
    coord_of = {velocity(q): (q, p) for q, p in ps.pairs}
    momenta_eqs = [sp.Eq(coord_of[v][1], sp.diff(L.expr, v)) for v in regular]
    sol = sp.solve(momenta_eqs, regular, dict=True)
    if len(sol) != 1:
        raise LegendreError("momentum definitions are not invertible")
    sol = sol[0]
    H = sum(coord_of[v][1] * sol[v] for v in regular) - L.expr.xreplace(sol)
    if LAM_DOT in report.null_directions:
        H += P_LAM * LAM_DOT
    return HamiltonianModel(simplify(H), "raw", ps)


def total_hamiltonian(H1: HamiltonianModel) -> HamiltonianModel:
    """H2: the multiplier velocity is absorbed into the arbitrary function u1."""
    return HamiltonianModel(H1.expr.xreplace({LAM_DOT: U1}), "total", H1.phase_space)


def reduced_hamiltonian(H2: HamiltonianModel) -> HamiltonianModel:
    """H3: impose P_lam = 0 and the position constraint."""
    ps = H2.phase_space
    h = H2.expr.xreplace({P_LAM: 0})
    return HamiltonianModel(ps.surface_relations().reduce(h), "reduced", ps)


def poisson(f, g, ps: PhaseSpace) -> Expr:
    f, g = sp.sympify(f), sp.sympify(g)
    out = sp.Integer(0)
    for q, p in ps.pairs:
        out += sp.diff(f, q) * sp.diff(g, p) - sp.diff(f, p) * sp.diff(g, q)
    return simplify(out)
