"""Quantized bracket algebra, entangled states, Hermitian momentum operators
and the closed-form energies of the two-particle system (hbar = 1)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .dirac import BracketTable, reference_brackets
from .mechanics import PhaseSpace, a, e
from .symexpr import Expr, simplify, sym

I = sp.I
chi, r, alpha, A = sym("chi"), sym("r"), sym("alpha"), sym("A")


# --------------------------------------------------------------------------
# commutators


@dataclass(frozen=True)
class CommutatorTable:
    entries: dict
    variables: tuple
    phase_space: PhaseSpace | None = None

    flavor = "commutator"

    def __getitem__(self, pair) -> Expr:
        u, v = (x if isinstance(x, str) else x.name for x in pair)
        return self.entries[(u, v)]

    def entry(self, u, v, convention: str = "full") -> Expr:
        """Commutator [u, v].

        ``reduced`` is the per-particle reading of the same-particle x-P_x and
        y-P_y entries: the constant i is replaced by i r_j^2 / (k a^2), which
        turns i(1 - x_j^2/(k a^2)) into i y_j^2/(k a^2). Other entries are
        identical in both conventions.
        """
        val = self[(u, v)]
        if convention == "full":
            return val
        if convention != "reduced":
            raise ValueError(f"unknown convention {convention!r}")
        ps = self.phase_space
        u, v = (x if isinstance(x, str) else x.name for x in (u, v))
        for j in ps.particles:
            for q, p in ((ps.x(j), ps.Px(j)), (ps.y(j), ps.Py(j))):
                if {u, v} == {q.name, p.name}:
                    sign = 1 if u == q.name else -1
                    shifted = val - sign * I * (1 - ps.radius_sq(j) / (ps.k * a**2))
                    return ps.surface_relations().reduce(simplify(shifted))
        return val


def quantize(bt: BracketTable, ps: PhaseSpace | None = None) -> CommutatorTable:
    """{ , } -> [ , ] / i, i.e. every commutator is i times the Dirac bracket."""
    if bt.flavor != "dirac":
        raise ValueError("only Dirac bracket tables are quantized")
    return CommutatorTable({k: I * v for k, v in bt.entries.items()}, bt.variables, ps)


def reference_commutators(ps: PhaseSpace) -> dict:
    return {pair: (fam, I * val) for pair, (fam, val) in reference_brackets(ps).items()}


# --------------------------------------------------------------------------
# states


@dataclass(frozen=True)
class EntangledState:
    """Pure state of two (or three) two-level subsystems.

    ``coefficients`` are (eps, gamma, eta, delta) for arity 2, or the two GHZ
    weights for arity 3.
    """

    arity: int
    coefficients: tuple
    tol: float = 1e-12

    def __post_init__(self):
        if self.arity not in (2, 3):
            raise ValueError("arity must be 2 or 3")

    @property
    def norm_sq(self) -> float:
        return sum(abs(c) ** 2 for c in self.coefficients)

    @property
    def normalized(self) -> bool:
        return abs(self.norm_sq - 1) <= self.tol

    def concurrence(self) -> float:
        if self.arity != 2:
            raise ValueError("concurrence is defined here for bipartite states only")
        if not self.normalized:
            raise ValueError(f"state is not normalized (norm^2 = {self.norm_sq})")
        eps, gam, eta, dlt = self.coefficients
        return 2 * abs(eps * dlt - gam * eta)

    @classmethod
    def maximal(cls) -> "EntangledState":
        s = 1 / math.sqrt(2)
        return cls(2, (s, 0.0, 0.0, s))

    @classmethod
    def ghz(cls) -> "EntangledState":
        s = 1 / math.sqrt(2)
        return cls(3, (s, s))


def polar_wavefunction(k: int = 2) -> Expr:
    """Psi(chi_1..chi_k) = c * exp(i prod chi) * exp(i sum chi), with the
    constant c = sqrt(2) a^k (sqrt(2) a^2 bipartite, sqrt(2) a^3 GHZ)."""
    chis = [sym(f"chi{j}") for j in range(1, k + 1)]
    return sp.sqrt(2) * a**k * sp.exp(I * sp.Mul(*chis)) * sp.exp(I * sp.Add(*chis))


# --------------------------------------------------------------------------
# first-order differential operators in chi


@dataclass(frozen=True)
class OperatorForm:
    """O f = deriv * df/dchi + mult * f."""

    deriv: Expr
    mult: Expr
    var: sp.Symbol = chi

    def apply(self, f) -> Expr:
        return self.deriv * sp.diff(f, self.var) + self.mult * f

    def __add__(self, other: "OperatorForm") -> "OperatorForm":
        return OperatorForm(self.deriv + other.deriv, self.mult + other.mult, self.var)

    def __sub__(self, other: "OperatorForm") -> "OperatorForm":
        return OperatorForm(self.deriv - other.deriv, self.mult - other.mult, self.var)

    def scale(self, c) -> "OperatorForm":
        return OperatorForm(c * self.deriv, c * self.mult, self.var)

    def simplified(self) -> "OperatorForm":
        return OperatorForm(simplify(self.deriv), simplify(self.mult), self.var)

    def is_zero(self) -> bool:
        s = self.simplified()
        return s.deriv == 0 and s.mult == 0

    def subs(self, mapping) -> "OperatorForm":
        return OperatorForm(self.deriv.subs(mapping), self.mult.subs(mapping), self.var)

    def anticommutator(self, g) -> "OperatorForm":
        """{self, g} for a multiplication operator g(chi)."""
        g = sp.sympify(g)
        return OperatorForm(2 * self.deriv * g, self.deriv * sp.diff(g, self.var) + 2 * self.mult * g, self.var)

    def conjugated(self, phase) -> "OperatorForm":
        """exp(i phase) O exp(-i phase)."""
        return OperatorForm(self.deriv, self.mult - I * self.deriv * sp.diff(phase, self.var), self.var)

    def _numeric(self, binding, nodes):
        out = []
        for part in (self.deriv, self.mult):
            part = sp.sympify(part).subs({sym(k): v for k, v in binding.items()})
            extra = part.free_symbols - {self.var}
            if extra:
                raise KeyError(f"unbound symbol(s): {sorted(s.name for s in extra)}")
            f = sp.lambdify(self.var, part, "numpy")
            out.append(np.broadcast_to(np.asarray(f(nodes), dtype=complex), nodes.shape))
        return out

    def matrix(self, N: int = 16, nodes: int = 512, binding=None) -> np.ndarray:
        """Matrix on exp(i n chi)/sqrt(2 pi), n = -N..N, by uniform quadrature."""
        binding = binding or {}
        x = 2 * np.pi * np.arange(nodes) / nodes
        d, m = self._numeric(binding, x)
        ns = np.arange(-N, N + 1)
        basis = np.exp(1j * np.outer(x, ns))
        applied = (d[:, None] * (1j * ns)[None, :] + m[:, None]) * basis
        return basis.conj().T @ applied / nodes

    def hermiticity_defect(self, N: int = 16, nodes: int = 512, binding=None) -> float:
        M = self.matrix(N, nodes, binding)
        return float(np.max(np.abs(M - M.conj().T)))


def angular_momentum() -> OperatorForm:
    """L_z = -i d/dchi - alpha."""
    return OperatorForm(-I, -alpha)


# --------------------------------------------------------------------------
# momentum ansatz


@dataclass(frozen=True)
class MomentumAnsatz:
    mu: Expr
    nu: Expr
    beta: Expr
    gamma_fn: Expr
    residuals: dict = field(default_factory=dict)

    def px(self) -> OperatorForm:
        return OperatorForm(-I * self.mu / r, self.beta / r)

    def py(self) -> OperatorForm:
        return OperatorForm(-I * self.nu / r, self.gamma_fn / r)


class AnsatzError(RuntimeError):
    pass


def _commutator_with_position(q, op: OperatorForm) -> Expr:
    f = sp.Function("f")(chi)
    return simplify((q * op.apply(f) - op.apply(q * f)) / f)


def solve_momentum_ansatz(fd_points: int = 50, fd_step: float = 1e-5, seed: int = 0) -> MomentumAnsatz:
    """Solve P_x = -(i/r) mu d + beta/r, P_y = -(i/r) nu d + gamma/r.

    mu, nu follow from [x, P_x] = i sin^2 chi and [y, P_y] = i cos^2 chi
    (x = r cos chi, y = r sin chi). beta, gamma solve
    beta' = -gamma + e r A, gamma' = beta - e r A; one integration constant is
    fixed by the equations of motion, the other is named alpha.
    """
    x, y = r * sp.cos(chi), r * sp.sin(chi)
    m_, n_ = sp.Symbol("mu_"), sp.Symbol("nu_")
    cx = _commutator_with_position(x, OperatorForm(-I * m_ / r, 0))
    cy = _commutator_with_position(y, OperatorForm(-I * n_ / r, 0))
    mu = sp.solve(sp.Eq(cx, I * sp.sin(chi) ** 2), m_)[0]
    nu = sp.solve(sp.Eq(cy, I * sp.cos(chi) ** 2), n_)[0]

    b, g = sp.Function("b"), sp.Function("g")
    sol = sp.dsolve([sp.Eq(b(chi).diff(chi), -g(chi) + e * r * A),
                     sp.Eq(g(chi).diff(chi), b(chi) - e * r * A)])
    beta = next(s.rhs for s in sol if s.lhs == b(chi))
    gam = next(s.rhs for s in sol if s.lhs == g(chi))
    consts = sorted(beta.free_symbols - {chi, e, r, A}, key=lambda s: s.name)
    # i beta cos + i gamma sin = -1 + i e r A (cos + sin) must hold for every chi
    eom = sp.expand(I * beta * sp.cos(chi) + I * gam * sp.sin(chi) + 1 - I * e * r * A * (sp.cos(chi) + sp.sin(chi)))
    eom = sp.expand(sp.trigsimp(eom))
    fixed = sp.solve(eom, consts, dict=True)
    if not fixed:
        raise AnsatzError("equations of motion admit no solution for the integration constants")
    fixed = fixed[0]
    beta, gam = beta.subs(fixed), gam.subs(fixed)
    free = sorted((beta.free_symbols | gam.free_symbols) - {chi, e, r, A}, key=lambda s: s.name)
    if len(free) != 1:
        raise AnsatzError(f"expected one free constant, found {free}")
    beta = sp.expand(sp.trigsimp(beta.subs(free[0], alpha)))
    gam = sp.expand(sp.trigsimp(gam.subs(free[0], alpha)))
    # orient alpha so that beta carries +alpha sin(chi)
    if sp.expand(beta.coeff(sp.sin(chi))).coeff(alpha) == -1:
        beta, gam = sp.expand(beta.subs(alpha, -alpha)), sp.expand(gam.subs(alpha, -alpha))

    res = {
        "beta_ode": simplify(sp.diff(beta, chi) + gam - e * r * A),
        "gamma_ode": simplify(sp.diff(gam, chi) - beta + e * r * A),
        "eom": simplify(I * beta * sp.cos(chi) + I * gam * sp.sin(chi) + 1
                        - I * e * r * A * (sp.cos(chi) + sp.sin(chi))),
    }
    if any(v != 0 for v in res.values()):
        raise AnsatzError(f"symbolic verification failed: {res}")

    # finite-difference check at random parameters
    rng = np.random.default_rng(seed)
    fb = sp.lambdify((chi, alpha, e, r, A), beta, "numpy")
    fg = sp.lambdify((chi, alpha, e, r, A), gam, "numpy")
    worst = 0.0
    for _ in range(fd_points):
        c, al, ee, rr, AA = rng.uniform(-np.pi, np.pi), *rng.uniform(-2, 2, 4)
        db = (fb(c + fd_step, al, ee, rr, AA) - fb(c - fd_step, al, ee, rr, AA)) / (2 * fd_step)
        dg = (fg(c + fd_step, al, ee, rr, AA) - fg(c - fd_step, al, ee, rr, AA)) / (2 * fd_step)
        worst = max(worst, abs(db + fg(c, al, ee, rr, AA) - ee * rr * AA),
                    abs(dg - fb(c, al, ee, rr, AA) + ee * rr * AA))
    res["finite_difference_max"] = float(worst)
    if worst > 1e-8:
        raise AnsatzError(f"finite-difference residual {worst:.3e} exceeds 1e-8")
    return MomentumAnsatz(simplify(mu), simplify(nu), beta, gam, res)


# --------------------------------------------------------------------------
# momentum operator forms


@dataclass(frozen=True)
class MomentumForms:
    ansatz_x: OperatorForm
    ansatz_y: OperatorForm
    printed_x: OperatorForm
    printed_y: OperatorForm
    anticommutator_x: OperatorForm
    anticommutator_y: OperatorForm

    def discrepancies(self) -> dict[str, OperatorForm]:
        """Differences between the constructions; non-zero entries are kept."""
        pairs = {
            "anticommutator_x - ansatz_x": (self.anticommutator_x, self.ansatz_x),
            "anticommutator_y - ansatz_y": (self.anticommutator_y, self.ansatz_y),
            "printed_x - ansatz_x": (self.printed_x, self.ansatz_x),
            "printed_y - ansatz_y": (self.printed_y, self.ansatz_y),
        }
        out = {}
        for name, (p, q) in pairs.items():
            d = (p - q).simplified()
            if not d.is_zero():
                out[name] = d
        return out


def momentum_operators(ansatz: MomentumAnsatz | None = None) -> MomentumForms:
    ansatz = ansatz or solve_momentum_ansatz()
    s, c = sp.sin(chi), sp.cos(chi)
    printed_x = OperatorForm(I * s / r, I * c / r + alpha * s / r + e * A)
    printed_y = OperatorForm(I * c / r, I * s / r - alpha * c / r + e * A)
    d = OperatorForm(I, 0)
    anti_x = d.anticommutator(s + e * r * A / alpha).conjugated(alpha * chi).scale(1 / (2 * r))
    anti_y = d.anticommutator(-c + e * r * A / alpha).conjugated(alpha * chi).scale(1 / (2 * r))
    return MomentumForms(ansatz.px().simplified(), ansatz.py().simplified(), printed_x, printed_y,
                         anti_x.simplified(), anti_y.simplified())


# --------------------------------------------------------------------------
# Weyl ordering of sigma3


@dataclass(frozen=True)
class WeylConstraint:
    left: Expr  # -i/2 + x P_x + y P_y - e r A
    right: Expr  # +i/2 + P_x x + P_y y - e r A
    difference: Expr  # left - right after using the commutators
    commutator_sum: Expr  # [x, P_x] + [y, P_y]
    per_particle: Expr  # commutator_sum with x^2 + y^2 = a^2
    summed: Expr  # commutator sum over all particles on the surface


def weyl_sigma3(ct: CommutatorTable, j: int = 1, convention: str = "reduced") -> WeylConstraint:
    ps = ct.phase_space
    X, Y, PX, PY = sp.symbols("X Y P_X P_Y", commutative=False)
    left = -I / 2 + X * PX + Y * PY - e * r * A
    right = I / 2 + PX * X + PY * Y - e * r * A

    def csum(k):
        return simplify(ct.entry(ps.x(k), ps.Px(k), convention) + ct.entry(ps.y(k), ps.Py(k), convention))

    cx = ct.entry(ps.x(j), ps.Px(j), convention)
    cy = ct.entry(ps.y(j), ps.Py(j), convention)
    cs = simplify(cx + cy)
    diff = sp.expand(sp.expand(left - right).subs({X * PX: PX * X + cx, Y * PY: PY * Y + cy}))
    per = simplify(cs.subs(ps.x(j) ** 2, a**2 - ps.y(j) ** 2))
    total = ps.surface_relations().reduce(sp.Add(*[csum(k) for k in ps.particles]))
    return WeylConstraint(left, right, simplify(diff), cs, per, total)


@dataclass(frozen=True)
class WeylMomenta:
    px: OperatorForm
    py: OperatorForm
    classical_identity: bool


def momentum_via_weyl() -> WeylMomenta:
    """P_x = -{y, L_z}/(2r^2) and P_y = {x, L_z}/(2r^2) once sigma_3W = 0."""
    L = angular_momentum()
    x, y = r * sp.cos(chi), r * sp.sin(chi)
    px = L.anticommutator(y).scale(-1 / (2 * r**2)).simplified()
    py = L.anticommutator(x).scale(1 / (2 * r**2)).simplified()
    qx, qy, Px, Py = sp.symbols("qx qy Px Py")
    rs = qx**2 + qy**2
    ident = simplify(Px * rs - (qx * (qx * Px + qy * Py) - qy * (qx * Py - qy * Px))) == 0
    return WeylMomenta(px, py, ident)


# --------------------------------------------------------------------------
# Hamiltonians and energies

Lz, P_r, P_chi, V = sym("L_z"), sym("P_r"), sym("P_chi"), sym("V")


def hamiltonian_LZ() -> Expr:
    return Lz**2 / (2 * r**2) - (I / 2 + e * r * A) ** 2 / (2 * r**2) - e * A * (P_r - e * A) + e * V


def hamiltonian_bound() -> Expr:
    """Comparison Hamiltonian of a charge bound by the potentials alone."""
    return P_chi**2 / (2 * r**2) + e**2 * A**2 - e * A / r * P_chi + e * V


alpha_bar, alpha_prime = sym("alpha_bar"), sym("alpha_prime")
xq, yq = sym("x"), sym("y")

ENERGY_READING = ("1/(2 r^2) multiplies every bracketed term through +eV; "
                  "1/(16 a^2) and the imaginary eA term are added outside")
COMPARISON_READING = ("1/(2 r^2) multiplies the first three terms; the eA, e^2A^2/2 and eV terms "
                      "are added outside")


def _angular_part():
    return (sp.Rational(1, 2) - (sp.Rational(1, 2) - alpha_bar)) ** 2 - alpha_bar * (2 * chi - 1) + (chi**2 - alpha)


def energy_expression() -> Expr:
    inner = (_angular_part() - e * A / (2 * a**2) * (chi - alpha_prime) * (xq - yq)
             + sp.Rational(1, 2) * e**2 * A**2 + e * V)
    return inner / (2 * r**2) + 1 / (16 * a**2) - I * e * A / (2 * a**2) * (r / 2 + xq + yq)


def comparison_energy_expression() -> Expr:
    return (_angular_part() / (2 * r**2) - e * A / r * (chi - alpha_prime)
            + sp.Rational(1, 2) * e**2 * A**2 + e * V)


@dataclass(frozen=True)
class EnergyParams:
    chi: float = 0.0
    alpha: float = 0.0
    A: float = 0.0
    V: float = 0.0
    e: float = 1.0
    a2: float = 10.0
    x: float = 0.0
    y: float = 0.0
    r2: float | None = None  # defaults to a2 (per-particle radius)

    def binding(self) -> dict[str, float]:
        r2 = self.a2 if self.r2 is None else self.r2
        return {
            "chi": self.chi, "alpha": self.alpha, "alpha_bar": self.alpha - math.floor(self.alpha),
            "alpha_prime": self.alpha - 2, "A": self.A, "V": self.V, "e": self.e,
            "a": math.sqrt(self.a2), "r": math.sqrt(r2), "x": self.x, "y": self.y,
        }


@dataclass(frozen=True)
class EnergyReport:
    constrained: complex
    unconstrained: complex
    shift: complex
    imaginary_part: float
    binding: dict
    reading: dict

    @property
    def has_imaginary_part(self) -> bool:
        return abs(self.imaginary_part) > 0


def energy(params: EnergyParams) -> EnergyReport:
    from .symexpr import evaluate

    b = params.binding()
    E = evaluate(energy_expression(), b)
    E0 = evaluate(comparison_energy_expression(), b)
    return EnergyReport(E, E0, E - E0, E.imag, b,
                        {"constrained": ENERGY_READING, "unconstrained": COMPARISON_READING})


def lz_projections(chi1, chi2, alpha_value):
    """(L_z^(1), L_z^(2), total) = (chi2 - abar, chi1 - abar, chi1 + chi2 - 2 abar).

    Works on floats or, for exact arithmetic, on Fraction inputs.
    """
    abar = alpha_value - math.floor(alpha_value)
    return chi2 - abar, chi1 - abar, chi1 + chi2 - 2 * abar
