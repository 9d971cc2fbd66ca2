"""Micro-to-macro coupling strategies for the interface constitutive law.

Three ways of supplying ``p_n(g_n)`` and ``dp_n/dg_n`` to `newton_solve`:

* ``qn``  - two corrected BEM solves per call, forward-difference tangent;
* ``cqn`` - one corrected BEM solve per call, secant tangent against the
  last converged step (forward difference on the first step only);
* ``san`` - power law ``p = a g^b`` fitted off-line to BEM samples with
  the bulk compliance removed, with its exact derivative.
"""

import csv
import time
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import curve_fit

from .errors import FembemError, FitError, ParameterError
from .macro_fem import ConstitutiveResponse
from .micro_bem import ContactSolver, corrected_pressure, shape_factor
from .rough_surface import surface_stats

__all__ = [
    "CouplingState",
    "PowerLawFit",
    "qn_response",
    "cqn_response",
    "offline_sample_curve",
    "fit_power_law",
    "san_response",
    "QNLaw",
    "CQNLaw",
    "SANLaw",
    "make_laws",
    "timed_offline_fit",
]

# samples below this mean pressure are left out of the regression [N/um^2]
FIT_PRESSURE_FLOOR = 1e-12
# CQN secant denominators smaller than this reuse the last tangent [um]
SECANT_EPS = 1e-12


class CouplingState:
    """Micro-scale state attached to one Gauss point.

    Parameters
    ----------
    surface : RoughSurface
    elastic : CompositeElastic
    alpha : float, optional
        Flat-punch shape factor; computed for the surface grid if omitted.
    tol_corr : float
        Relative tolerance of the elastic correction loop.
    perturbation : float
        Relative finite-difference step for the QN tangent.
    pressure_fn : callable, optional
        Replaces the corrected BEM response ``g -> p`` (used to test the
        coupling logic against closed-form laws).
    """

    def __init__(self, surface, elastic, alpha=None, tol_corr=1e-2, perturbation=0.01,
                 pressure_fn=None):
        self.surface = surface
        self.elastic = elastic
        self.alpha = shape_factor(surface.N) if alpha is None and pressure_fn is None else alpha
        self.tol_corr = tol_corr
        self.perturbation = perturbation
        self.abs_floor = 1e-4 * surface_stats(surface).rms if surface is not None else 1e-12
        self.solver = ContactSolver(surface, elastic) if pressure_fn is None else None
        self.pressure_fn = pressure_fn
        self.prev_gap = 0.0
        self.prev_pressure = 0.0
        self.last_tangent = 0.0
        self.last_solution = None
        self.n_evaluations = 0

    @property
    def warm_start(self):
        return None if self.solver is None else self.solver.warm_start

    def pressure(self, g_n):
        """Corrected mean pressure at gap `g_n` and the area fraction."""
        self.n_evaluations += 1
        if g_n <= 0:
            return 0.0, 0.0
        if self.pressure_fn is not None:
            return float(self.pressure_fn(g_n)), 0.0
        res = corrected_pressure(self.surface, self.elastic, g_n, self.alpha,
                                 tol=self.tol_corr, solver=self.solver)
        self.last_solution = res.solution
        return res.pressure, res.solution.contact_area_fraction

    def commit(self, g_n, pressure):
        self.prev_gap = g_n
        self.prev_pressure = pressure


def qn_response(state, g_n):
    """Pressure at `g_n` and forward-difference tangent from a perturbed solve."""
    if g_n <= 0:
        return ConstitutiveResponse.open()
    p, area = state.pressure(g_n)
    micro = state.last_solution
    dg = max(state.perturbation * g_n, state.abs_floor)
    p_pert, _ = state.pressure(g_n + dg)
    tangent = (p_pert - p) / dg
    state.last_tangent = tangent
    return ConstitutiveResponse(p, tangent, area, micro)


def cqn_response(state, g_n, step_index):
    """Pressure at `g_n` with a secant tangent to the last converged step."""
    if step_index == 0:
        return qn_response(state, g_n)
    if g_n <= 0:
        return ConstitutiveResponse.open()
    p, area = state.pressure(g_n)
    dg = g_n - state.prev_gap
    if abs(dg) < SECANT_EPS:
        tangent = state.last_tangent
    else:
        tangent = (p - state.prev_pressure) / dg
        state.last_tangent = tangent
    return ConstitutiveResponse(p, tangent, area, state.last_solution)


@dataclass
class PowerLawFit:
    a: float
    b: float
    sse: float
    ssr: float
    sst: float
    r2: float
    n_samples: int = 0
    n_steps: int = 0
    delta_max: float = 0.0
    surface: str = ""
    area_curve: list = field(default_factory=list, repr=False)

    def pressure(self, g):
        g = np.asarray(g, dtype=float)
        return np.where(g > 0, self.a * np.maximum(g, 0.0) ** self.b, 0.0)

    def contact_area(self, p):
        """Area fraction interpolated from the off-line (pressure, area) samples."""
        if not self.area_curve:
            return 0.0
        pts = np.asarray(self.area_curve)
        return float(np.interp(p, pts[:, 0], pts[:, 1], left=0.0))

    _fields = ("a", "b", "sse", "ssr", "sst", "r2", "n_samples", "n_steps", "delta_max",
               "surface")

    def save(self, path):
        row = {k: v for k, v in asdict(self).items() if k in self._fields}
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self._fields)
            w.writeheader()
            w.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in row.items()})

    @classmethod
    def load(cls, path):
        with open(path, newline="") as fh:
            row = next(csv.DictReader(fh))
        kw = {k: float(row[k]) for k in ("a", "b", "sse", "ssr", "sst", "r2", "delta_max")}
        return cls(n_samples=int(row["n_samples"]), n_steps=int(row["n_steps"]),
                   surface=row["surface"], **kw)


def offline_sample_curve(surface, elastic, alpha, n_steps, delta_max, tol_corr=1e-2,
                         with_area=False, mode="far_field"):
    """Off-line roughness response ``(g_n, p_n)`` for the power-law fit.

    Parameters
    ----------
    surface, elastic, alpha
        Micro problem and flat-punch shape factor.
    n_steps : int
        Number of samples, at ``k * delta_max / n_steps`` for k = 1..n_steps.
    delta_max : float
        Largest imposed displacement [um].
    tol_corr : float
        Correction tolerance (``mode="gap"`` only).
    with_area : bool
        Append the contact-area fraction as a third column.
    mode : {"far_field", "gap"}
        ``"far_field"`` imposes the displacements on the half-space directly
        and removes the flat-punch compliance afterwards, so the returned
        gaps are ``delta - alpha p l / E``. ``"gap"`` runs the iterative
        correction at each gap instead; it needs ``delta_max`` to lie below
        the largest gap the roughness can accommodate.

    A single warm-started solver sweeps the monotone loading path.
    """
    if n_steps < 2:
        raise ParameterError(f"need at least 2 steps, got {n_steps}")
    if not delta_max > 0:
        raise ParameterError(f"delta_max must be positive, got {delta_max}")
    if mode not in ("far_field", "gap"):
        raise ParameterError(f"unknown sampling mode {mode!r}")
    solver = ContactSolver(surface, elastic)
    compliance = alpha * surface.size / elastic.E
    rows = []
    for d in delta_max * np.arange(1, n_steps + 1) / n_steps:
        try:
            if mode == "gap":
                res = corrected_pressure(surface, elastic, d, alpha, tol=tol_corr, solver=solver)
                g, p, sol = d, res.pressure, res.solution
            else:
                sol = solver.solve(d)
                p = sol.mean_pressure
                g = d - compliance * p
        except FembemError as exc:
            exc.add_note(f"while sampling displacement {d:.6g} um")
            raise
        rows.append((g, p, sol.contact_area_fraction))
    out = np.array(rows)
    return out if with_area else out[:, :2]


def fit_power_law(samples):
    """Least-squares fit of ``p = a g^b``.

    The initial guess comes from a straight line in log-log space; the
    regression itself is done on the untransformed pressures, so SSE, SSR
    and SST refer to pressures.
    """
    s = np.asarray(samples, dtype=float).reshape(-1, 2)
    g, p = s[:, 0], s[:, 1]
    keep = (g > 0) & (p > FIT_PRESSURE_FLOOR)
    g, p = g[keep], p[keep]
    if g.size < 3:
        raise FitError(f"need at least 3 positive samples, got {g.size}")
    if np.ptp(p) == 0:
        raise FitError("all pressures are equal")
    slope, intercept = np.polyfit(np.log(g), np.log(p), 1)
    # fit in scaled variables so both parameters are O(1)
    g0, p0 = g.max(), p.max()
    try:
        (c, b), _ = curve_fit(lambda x, c, b: c * x**b, g / g0, p / p0,
                              p0=(np.exp(intercept) * g0**slope / p0, slope), maxfev=20000)
    except RuntimeError as exc:
        raise FitError(f"power-law regression failed: {exc}") from None
    a = c * p0 / g0**b
    pred = a * g**b
    mean = p.mean()
    sse = float(np.sum((p - pred) ** 2))
    ssr = float(np.sum((pred - mean) ** 2))
    sst = float(np.sum((p - mean) ** 2))
    return PowerLawFit(a=float(a), b=float(b), sse=sse, ssr=ssr, sst=sst, r2=1.0 - sse / sst,
                       n_samples=int(g.size))


def san_response(fit, g_n):
    if g_n <= 0:
        return ConstitutiveResponse.open()
    p = fit.a * g_n**fit.b
    return ConstitutiveResponse(p, fit.a * fit.b * g_n ** (fit.b - 1.0), fit.contact_area(p))


class QNLaw:
    def __init__(self, state, tag=None):
        self.state = state
        self.tag = tag

    def begin_step(self, step):
        pass

    def _response(self, g_n):
        return qn_response(self.state, g_n)

    def evaluate(self, g_n):
        try:
            return self._response(g_n)
        except FembemError as exc:
            exc.add_note(f"at Gauss point {self.tag}, g_n = {g_n:.6g} um")
            raise

    def commit(self, g_n, response):
        self.state.commit(g_n, response.pressure)


class CQNLaw(QNLaw):
    step = 0

    def begin_step(self, step):
        self.step = step

    def _response(self, g_n):
        return cqn_response(self.state, g_n, self.step)


class SANLaw:
    def __init__(self, fit):
        self.fit = fit

    def begin_step(self, step):
        pass

    def evaluate(self, g_n):
        return san_response(self.fit, g_n)

    def commit(self, g_n, response):
        pass


def make_laws(strategy, n_elements, surface=None, elastic=None, fit=None, n_gauss=2, **state_kw):
    """One independent law per Gauss point for the chosen strategy."""
    strategy = strategy.lower()
    if strategy == "san":
        if fit is None:
            raise ParameterError("the san strategy needs a PowerLawFit")
        return [[SANLaw(fit) for _ in range(n_gauss)] for _ in range(n_elements)]
    cls = {"qn": QNLaw, "cqn": CQNLaw}.get(strategy)
    if cls is None:
        raise ParameterError(f"unknown coupling strategy {strategy!r}")
    return [[cls(CouplingState(surface, elastic, **state_kw), tag=(e, g)) for g in range(n_gauss)]
            for e in range(n_elements)]


def timed_offline_fit(surface, elastic, alpha, n_steps, delta_max, tol_corr=1e-2,
                      mode="far_field"):
    """Sample, fit and time the off-line stage; returns ``(fit, samples, seconds)``."""
    t0 = time.perf_counter()
    samples = offline_sample_curve(surface, elastic, alpha, n_steps, delta_max, tol_corr,
                                   with_area=True, mode=mode)
    fit = fit_power_law(samples[:, :2])
    seconds = time.perf_counter() - t0
    fit.n_steps = n_steps
    fit.delta_max = float(delta_max)
    fit.surface = surface.label
    fit.area_curve = [(float(p), float(a)) for p, a in samples[:, 1:3]]
    return fit, samples, seconds
