"""Carreau-Yasuda stress-strain law and its frozen-coefficient viscosity."""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

EPS_REG = 1e-8  # strain floor for the degenerate power law (delta = 0)


def _constant_one(x):
    return np.ones(len(np.atleast_2d(x)))


@dataclass(frozen=True)
class CarreauYasuda:
    """sigma(x, E) = mu(x) (delta^alpha + |E|^alpha)^((r-2)/alpha) E.

    ``mu`` is a callable on (npts, 2) arrays with bounds ``mu_bounds``;
    the default is the constant 1.  ``eps_reg`` floors |E| when delta^alpha
    is smaller than eps_reg^alpha, which only matters for delta = 0.
    """
    r: float = 2.0
    delta: float = 1.0
    alpha: float = 2.0
    mu: Callable = field(default=_constant_one, compare=False)
    mu_bounds: tuple = (1.0, 1.0)
    eps_reg: float = EPS_REG

    def __post_init__(self):
        if not 1.0 < self.r <= 2.0:
            raise ValueError(f"r must lie in (1, 2], got {self.r}")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        lo, hi = self.mu_bounds
        if not 0 < lo <= hi:
            raise ValueError("mu bounds must satisfy 0 < mu_- <= mu_+")

    @property
    def r_conj(self):
        return self.r / (self.r - 1.0)

    @property
    def sigma_m(self):
        """Lower bound of the strong-monotonicity constant."""
        r = self.r
        return self.mu_bounds[0] * (r - 1) * 2.0 ** ((r - 1) * (r - 2) / r)

    @property
    def sigma_c(self):
        """Upper bound of the Hoelder-continuity constant."""
        r = self.r
        return self.mu_bounds[1] / (r - 1) * 2.0 ** ((2 * r * (2 - r) + 1) / r)

    def with_r(self, r):
        return CarreauYasuda(r=r, delta=self.delta, alpha=self.alpha, mu=self.mu,
                             mu_bounds=self.mu_bounds, eps_reg=self.eps_reg)


def frobenius(E):
    """|E| for tensors stored with trailing shape (2, 2) or flattened (4,)."""
    E = np.asarray(E, dtype=float)
    if E.shape[-2:] == (2, 2):
        return np.sqrt((E ** 2).sum(axis=(-2, -1)))
    return np.sqrt((E ** 2).sum(axis=-1))


def shear_factor(t, r, delta, alpha, eps_reg=EPS_REG):
    """(delta^alpha + t^alpha)^((r-2)/alpha) with the zero-strain cap."""
    t = np.asarray(t, dtype=float)
    if r == 2.0:
        return np.ones_like(t)
    base = delta ** alpha + t ** alpha
    base = np.maximum(base, eps_reg ** alpha)
    return base ** ((r - 2.0) / alpha)


def viscosity(law, r_eff, x, Z):
    """Frozen viscosity mu(x) (delta^alpha + |Z|^alpha)^((r_eff-2)/alpha).

    ``x`` has shape (npts, 2) and ``Z`` (npts, 2, 2) or (npts, 4).
    """
    return law.mu(x) * shear_factor(frobenius(Z), r_eff, law.delta, law.alpha, law.eps_reg)


def stress(law, x, E, r=None, symmetry_tol=1e-12):
    """Stress tensors for strain tensors E of shape (npts, 2, 2) or (2, 2)."""
    E = np.asarray(E, dtype=float)
    single = E.ndim == 2
    E = E.reshape(-1, 2, 2)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    asym = np.abs(E[:, 0, 1] - E[:, 1, 0])
    scale = np.maximum(1.0, np.abs(E).max(axis=(1, 2)))
    if np.any(asym > symmetry_tol * scale):
        raise ValueError("strain tensor is not symmetric")
    r = law.r if r is None else r
    nrm = frobenius(E)
    fac = _exact_factor(nrm, r, law.delta, law.alpha)
    S = (law.mu(x) * fac)[:, None, None] * E
    return S[0] if single else S


def _exact_factor(t, r, delta, alpha):
    """Uncapped shear factor; zero strain with delta = 0 maps to zero stress."""
    if r == 2.0:
        return np.ones_like(t)
    base = delta ** alpha + t ** alpha
    out = np.zeros_like(t)
    pos = base > 0
    out[pos] = base[pos] ** ((r - 2.0) / alpha)
    return out


def stress_flat(law, x, E4, r=None):
    """Stress for strains flattened to (npts, 4) (component order 11, 12, 21, 22)."""
    r = law.r if r is None else r
    fac = _exact_factor(frobenius(E4), r, law.delta, law.alpha)
    return (law.mu(x) * fac)[:, None] * E4


@dataclass
class Assumption1Report:
    n_samples: int
    sigma_c: float
    sigma_m: float
    continuity_violations: int
    monotonicity_violations: int
    worst_continuity_ratio: float   # max lhs / rhs, must be <= 1
    worst_monotonicity_ratio: float  # min lhs / rhs, must be >= 1
    model_bound_constant: float     # sampled c in the model monotonicity bound

    @property
    def ok(self):
        return self.continuity_violations == 0 and self.monotonicity_violations == 0


def _random_sym(rng, n, scale):
    A = rng.standard_normal((n, 2, 2)) * scale[:, None, None]
    return 0.5 * (A + A.transpose(0, 2, 1))


def check_assumption1(law, n_samples=10_000, seed=0, rtol=1e-12):
    """Sample symmetric pairs (tau, eta) and test continuity and monotonicity
    with the closed-form constant bounds ``law.sigma_c`` and ``law.sigma_m``.
    """
    rng = np.random.default_rng(seed)
    # log-uniform magnitudes so small and large strains are both exercised
    s1 = 10.0 ** rng.uniform(-4, 3, n_samples)
    s2 = 10.0 ** rng.uniform(-4, 3, n_samples)
    tau = _random_sym(rng, n_samples, s1)
    eta = _random_sym(rng, n_samples, s2)
    # a share of nearby pairs
    near = rng.random(n_samples) < 0.25
    eta[near] = tau[near] + _random_sym(rng, int(near.sum()), s1[near] * 1e-3)
    x = rng.random((n_samples, 2))
    r, d = law.r, law.delta
    st, se = stress(law, x, tau), stress(law, x, eta)
    diff = tau - eta
    nd = frobenius(diff)
    nt, ne = frobenius(tau), frobenius(eta)
    weight = (d ** r + nt ** r + ne ** r) ** ((r - 2) / r)
    cont_lhs = frobenius(st - se)
    cont_rhs = law.sigma_c * weight * nd
    mono_lhs = ((st - se) * diff).sum(axis=(1, 2))
    mono_rhs = law.sigma_m * weight * nd ** 2
    cont_bad = cont_lhs > cont_rhs * (1 + rtol)
    mono_bad = mono_lhs < mono_rhs * (1 - rtol)
    ok = nd > 0
    # model bound: {|x|-weighted difference}.(x - y) >= c |x-y|^2 (...)^((r-2)/r)
    wt = (d ** r + nt ** r) ** ((r - 2) / r)
    we = (d ** r + ne ** r) ** ((r - 2) / r)
    prod = ((wt[:, None, None] * tau - we[:, None, None] * eta) * diff).sum(axis=(1, 2))
    c_model = float(np.min(prod[ok] / (nd[ok] ** 2 * weight[ok])))
    return Assumption1Report(
        n_samples=n_samples, sigma_c=law.sigma_c, sigma_m=law.sigma_m,
        continuity_violations=int(cont_bad[ok].sum()),
        monotonicity_violations=int(mono_bad[ok].sum()),
        worst_continuity_ratio=float(np.max(cont_lhs[ok] / cont_rhs[ok])),
        worst_monotonicity_ratio=float(np.min(mono_lhs[ok] / mono_rhs[ok])),
        model_bound_constant=c_model,
    )

