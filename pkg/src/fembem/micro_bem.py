"""Boundary-element normal contact of a rigid rough indenter on an elastic half-space.

Units: lengths in um, moduli and pressures in N/um^2, forces in N.

The half-space is discretised into ``N x N`` square cells of side ``a``.
The compliance between two cells depends only on their integer offset
``(di, dj)``; with ``d = hypot(di, dj)`` it reads

    H(d) = a / (pi E) * (1 / d)              for d > 0
    H(0) = a / (pi E) * SELF_COMPLIANCE

i.e. the far field of the Boussinesq point-load solution with a lumped
self-term. ``SELF_COMPLIANCE`` is calibrated once so that the flat-punch
shape factors ``alpha(n)`` reproduce the reference values 0.778 ... 0.858
for n = 1 ... 6.
"""

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from .errors import ContactSolverError, CorrectionError, ParameterError
from .nnls import active_set_qp, block_pivoting_qp, kkt_residuals, polonsky_keer
from .rough_surface import RoughSurface

__all__ = [
    "SELF_COMPLIANCE",
    "CompositeElastic",
    "InfluenceOperator",
    "MicroContactSolution",
    "CorrectionResult",
    "ContactSolver",
    "composite_moduli",
    "build_influence",
    "solve_normal_contact",
    "flat_punch_alpha",
    "shape_factor",
    "corrected_pressure",
    "subtract_elastic_curve",
    "write_pressure_map",
]

SELF_COMPLIANCE = 2.11

# above this many candidate cells no dense block is ever factorised
DENSE_LIMIT = 5000
# up to this many candidates: Lawson-Hanson; beyond: conjugate-gradient
# estimate followed by a block-pivoting polish
PK_WARMUP = 64


@dataclass(frozen=True)
class CompositeElastic:
    E: float
    G: float

    @property
    def nu(self):
        return self.E / (2.0 * self.G) - 1.0


def composite_moduli(E1, nu1, E2, nu2):
    """Composite half-space equivalent to two elastic bodies in contact.

    ``E = [(1 - nu1^2)/E1 + (1 - nu2^2)/E2]^-1`` and
    ``G = [(2 - nu1)/(4 G1) + (2 - nu2)/(4 G2)]^-1`` with
    ``Gi = Ei / (2 (1 + nui))``. Pass ``E1=np.inf`` for a rigid body.
    """
    for E, nu in ((E1, nu1), (E2, nu2)):
        if not E > 0:
            raise ParameterError(f"Young's modulus must be positive, got {E}")
        if not -1.0 < nu < 0.5:
            raise ParameterError(f"Poisson ratio must lie in (-1, 0.5), got {nu}")
    compliance_E = (1 - nu1**2) / E1 + (1 - nu2**2) / E2
    G1 = E1 / (2 * (1 + nu1))
    G2 = E2 / (2 * (1 + nu2))
    compliance_G = (2 - nu1) / (4 * G1) + (2 - nu2) / (4 * G2)
    return CompositeElastic(E=1.0 / compliance_E, G=1.0 / compliance_G)


@dataclass(frozen=True, eq=False)
class InfluenceOperator:
    """Translation-invariant compliance kernel of an ``N x N`` cell grid.

    ``kernel[di + N - 1, dj + N - 1]`` is the displacement of a cell caused
    by unit pressure on a cell at offset ``(di, dj)`` [um per N/um^2].
    """

    N: int
    a: float
    E: float
    kernel: np.ndarray = field(repr=False)

    def coefficient(self, di, dj):
        return self.kernel[np.asarray(di) + self.N - 1, np.asarray(dj) + self.N - 1]

    def submatrix(self, idx):
        """Dense block of the ``N^2 x N^2`` matrix for flat cell indices `idx`."""
        idx = np.asarray(idx)
        i, j = np.divmod(idx, self.N)
        return self.kernel[i[:, None] - i[None, :] + self.N - 1,
                           j[:, None] - j[None, :] + self.N - 1]

    def dense(self):
        return self.submatrix(np.arange(self.N * self.N))

    def matvec(self, p):
        """Displacements ``H @ p`` for a full grid of pressures, by FFT."""
        N = self.N
        shape = self._fft_shape
        P = sfft.rfft2(np.reshape(p, (N, N)), s=shape)
        out = sfft.irfft2(P * self._kernel_hat, s=shape)[:N, :N]
        return out.reshape(np.shape(p))

    @property
    def _fft_shape(self):
        M = sfft.next_fast_len(2 * self.N - 1, real=True)
        return (M, M)

    @property
    def _kernel_hat(self):
        cache = self.__dict__.get("_khat")
        if cache is None:
            N = self.N
            M = self._fft_shape[0]
            circ = np.zeros((M, M))
            off = np.arange(-(N - 1), N)
            circ[np.ix_(off % M, off % M)] = self.kernel
            cache = sfft.rfft2(circ)
            self.__dict__["_khat"] = cache
        return cache


def build_influence(N, a, E):
    """Compliance kernel for an ``N x N`` grid of cells of side `a`."""
    if N < 1 or not a > 0 or not E > 0:
        raise ParameterError(f"invalid influence parameters N={N}, a={a}, E={E}")
    off = np.arange(-(N - 1), N, dtype=float)
    d = np.hypot(off[:, None], off[None, :])
    with np.errstate(divide="ignore"):
        k = np.where(d > 0, 1.0 / d, SELF_COMPLIANCE)
    return InfluenceOperator(N=N, a=float(a), E=float(E), kernel=k * a / (np.pi * E))


@dataclass
class MicroContactSolution:
    """Converged micro-scale contact state for one far-field approach."""

    g_n: float
    pressures: np.ndarray
    corrections: np.ndarray
    indentation: np.ndarray
    total_force: float
    mean_pressure: float
    contact_area_fraction: float
    active: np.ndarray
    iterations: int = 0
    kkt: tuple = (0.0, 0.0, 0.0)


@dataclass
class CorrectionResult:
    pressure: float
    displacement: float
    iterations: int
    error: float
    history: list = field(default_factory=list)
    solution: MicroContactSolution = None


class ContactSolver:
    """Displacement-controlled contact solver bound to one surface.

    The instance remembers the last pressure field and uses it to warm-start
    the next solve, which pays off along monotone loading paths. Results do
    not depend on the warm start: the quadratic program has a unique
    minimiser.
    """

    def __init__(self, surface, elastic, tol_kkt=1e-10, maxiter=None, dense_limit=DENSE_LIMIT):
        self.surface = surface
        self.elastic = elastic
        self.tol_kkt = tol_kkt
        N = surface.N
        self.maxiter = 10 * N * N if maxiter is None else maxiter
        self.dense_limit = dense_limit
        self.operator = _cached_influence(N, surface.cell_size, elastic.E)
        self.warm_start = None
        self.n_solves = 0

    def reset(self):
        self.warm_start = None

    def indentation(self, g_n):
        z = self.surface.heights
        return g_n - (z.max() - z)

    def solve(self, g_n, warm_start=None):
        if g_n < 0:
            raise ParameterError(f"far-field approach must be non-negative, got {g_n}")
        N = self.surface.N
        ubar = self.indentation(g_n)
        flat_u = ubar.ravel()
        cand = np.flatnonzero(flat_u > 0)
        p = np.zeros(N * N)
        iterations = 0
        self.n_solves += 1
        if cand.size:
            warm = warm_start if warm_start is not None else self.warm_start
            x0 = None if warm is None else np.asarray(warm, dtype=float).ravel()[cand]
            if x0 is not None and not np.any(x0 > 0):
                x0 = None
            uc = flat_u[cand]
            full = np.zeros(N * N)

            def matvec(v):
                full[cand] = v
                return self.operator.matvec(full)[cand]

            pc = None
            if cand.size <= PK_WARMUP:
                pc, _, iterations = active_set_qp(self.operator.submatrix(cand), uc, x0=x0,
                                                  tol=self.tol_kkt, maxiter=self.maxiter)
            elif cand.size <= self.dense_limit:
                x0, _, _ = polonsky_keer(matvec, uc, x0=x0, tol=1e-8, maxiter=self.maxiter)
                block = lambda idx: self.operator.submatrix(cand[idx])
                try:
                    pc, _, iterations = block_pivoting_qp(block, uc, x0=x0, tol=self.tol_kkt,
                                                          matvec=matvec)
                except ContactSolverError:
                    pc, _, iterations = active_set_qp(self.operator.submatrix(cand), uc,
                                                      x0=x0, tol=self.tol_kkt,
                                                      maxiter=self.maxiter)
            else:
                pc, _, iterations = polonsky_keer(matvec, uc, x0=x0, tol=self.tol_kkt,
                                                  maxiter=self.maxiter)
            p[cand] = pc
        w = self.operator.matvec(p) - flat_u
        # outside the overlap region w is the open gap of the deformed surface
        on = p > 0
        kkt = kkt_residuals(p[cand], w[cand]) if cand.size else (0.0, 0.0, 0.0)
        scale = max(float(flat_u.max()), 0.0)
        if kkt[1] > 1e-6 * scale:
            raise ContactSolverError("solution violates dual feasibility", iterations, kkt[1])
        self.warm_start = p.copy()
        a = self.surface.cell_size
        P = float(p.sum() * a * a)
        return MicroContactSolution(
            g_n=float(g_n),
            pressures=p.reshape(N, N),
            corrections=w.reshape(N, N),
            indentation=ubar,
            total_force=P,
            mean_pressure=P / self.surface.size**2,
            contact_area_fraction=float(on.sum()) / (N * N),
            active=np.flatnonzero(on),
            iterations=iterations,
            kkt=kkt,
        )


@lru_cache(maxsize=16)
def _cached_influence(N, a, E):
    return build_influence(N, a, E)


def solve_normal_contact(surface, elastic, g_n, warm_start=None, **kwargs):
    """One-shot contact solve; see `ContactSolver` for the reusable form."""
    return ContactSolver(surface, elastic, **kwargs).solve(g_n, warm_start=warm_start)


def flat_punch_alpha(n, elastic, w0=1.0, size=1.0, dense_limit=DENSE_LIMIT):
    """Shape factor ``alpha = E w0 / (l p_mean)`` of a flat square punch.

    The punch is the fully flat ``(2**n + 1)^2`` surface pressed by `w0`.
    The result does not depend on `w0`, `size` or the modulus.
    """
    if not 1 <= n <= 10:
        raise ParameterError(f"resolution exponent must be in [1, 10], got {n}")
    N = 2**n + 1
    flat = RoughSurface(np.zeros((N, N)), size)
    solver = ContactSolver(flat, elastic, dense_limit=dense_limit)
    sol = solver.solve(w0)
    return elastic.E * w0 / (size * sol.mean_pressure)


@lru_cache(maxsize=None)
def shape_factor(N):
    """Cached flat-punch factor for an ``N x N`` grid (``N = 2**n + 1``)."""
    n = (N - 1).bit_length() - 1
    if 2**n + 1 != N:
        raise ParameterError(f"grid size {N} is not of the form 2**n + 1")
    return flat_punch_alpha(n, CompositeElastic(E=1.0, G=1.0))


def corrected_pressure(surface, elastic, g_n, alpha, tol=1e-2, solver=None, max_iter=50):
    """Mean pressure due to roughness alone at macro gap `g_n`.

    Fixed point of ``delta = g_n + w0(p(delta))`` with
    ``w0(p) = alpha * p * l / E``; stops when the relative change of the mean
    pressure between two solves drops below `tol`. If the iterates start
    to oscillate the displacement update is halved.
    """
    if g_n < 0:
        raise ParameterError(f"gap must be non-negative, got {g_n}")
    if not tol > 0:
        raise ParameterError(f"tolerance must be positive, got {tol}")
    if solver is None:
        solver = ContactSolver(surface, elastic)
    compliance = alpha * surface.size / elastic.E

    sol = solver.solve(g_n)
    p_prev = sol.mean_pressure
    history = [p_prev]
    if p_prev == 0.0:
        return CorrectionResult(0.0, g_n, 1, 0.0, history, sol)

    delta = g_n
    damping = 1.0
    last_err = None
    for it in range(2, max_iter + 1):
        target = g_n + compliance * p_prev
        delta = delta + damping * (target - delta)
        sol = solver.solve(delta)
        p = sol.mean_pressure
        history.append(p)
        err = (p - p_prev) / p
        if abs(err) < tol:
            return CorrectionResult(p, delta, it, err, history, sol)
        if last_err is not None and err * last_err < 0:
            damping = 0.5
        last_err = err
        p_prev = p
    raise CorrectionError(f"elastic correction did not reach tol={tol}", history)


def subtract_elastic_curve(raw_curve, alpha, size, E):
    """Remove the flat-punch compliance from a total pressure-displacement curve.

    Each ``(delta, p)`` sample becomes ``(delta - alpha * p * size / E, p)``.
    A RuntimeWarning is issued when the result is not strictly increasing
    in displacement, which points at a wrong `alpha` or a unit mismatch.
    """
    c = np.array(raw_curve, dtype=float).reshape(-1, 2)
    out = c.copy()
    out[:, 0] = c[:, 0] - alpha * c[:, 1] * size / E
    if np.any(np.diff(out[:, 0]) <= 0):
        warnings.warn("elastic subtraction produced a non-monotone curve", RuntimeWarning,
                      stacklevel=2)
    return out


def write_pressure_map(solution, path):
    np.savetxt(path, solution.pressures, delimiter=",", fmt="%.12g")
