"""Two-block rough-interface benchmark: configuration, orchestration and output.

Two square elastic blocks of side ``L`` are stacked on a rough interface
whose micro-scale patch has side ``l``. The lower block rests on a
vertically constrained edge, the top edge of the upper block is pushed down
by ``delta``, and each block has one horizontal constraint at its top-left
node. A single interface element spans the contact line.
"""

import configparser
import csv
import dataclasses
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .macro_fem import MacroModel, newton_solve
from .micro_bem import (DENSE_LIMIT, ContactSolver, composite_moduli, corrected_pressure, flat_punch_alpha,
                        shape_factor, write_pressure_map)
from .rough_surface import generate_rmd, read_surface_xyz, surface_stats
from .scale_coupling import PowerLawFit, make_laws, timed_offline_fit

log = logging.getLogger(__name__)

__all__ = [
    "BenchmarkConfig",
    "RunOutputs",
    "build_two_block_model",
    "run_benchmark",
    "run_alpha_table",
    "run_offline_fit",
]

STRATEGIES = ("qn", "cqn", "san")
MM = 1000.0  # um per mm
CURVE_COLUMNS = ("step", "delta", "g_n", "P", "P_over_EA", "h_over_s", "Cmat_s_over_E",
                 "contact_area_fraction", "mean_pressure")


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(x)
    return f"{float(x):.12g}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


@dataclass
class BenchmarkConfig:
    """Benchmark parameters. Lengths of the geometry in mm, moduli in N/um^2.

    `delta_max` is a multiple of the RMS roughness ``s`` of the surface.
    `offline_mode` selects how the SAN samples are taken (see
    `offline_sample_curve`).
    """

    macro_size: float = 10.0
    micro_size: float = 1.0
    E1: float = 1.0
    nu1: float = 0.3
    E2: float = 1.0
    nu2: float = 0.3
    surface_n: int = 6
    hurst: float = 0.7
    seed: int = 42
    max_height: float = 50.0
    surface_file: str = None
    strategy: str = "qn"
    steps: int = 30
    delta_max: float = 3.0
    tol_corr: float = 1e-2
    tol_newton: float = 1e-9
    max_newton: int = 30
    offline_steps: int = 100
    offline_mode: str = "far_field"
    out: str = "bench_out"
    dump_maps: tuple = ()

    def __post_init__(self):
        self.strategy = self.strategy.lower()
        self.dump_maps = tuple(int(k) for k in self.dump_maps)
        self.validate()

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise ParameterError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        for name in ("tol_corr", "tol_newton", "macro_size", "micro_size", "max_height"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.steps < 1 or self.offline_steps < 2 or self.max_newton < 1:
            raise ParameterError("steps >= 1, offline_steps >= 2 and max_newton >= 1 required")
        if self.delta_max < 0:
            raise ParameterError(f"delta_max must be non-negative, got {self.delta_max}")
        if self.micro_size / self.macro_size > 0.2:
            warnings.warn(f"l/L = {self.micro_size / self.macro_size:.3g} weakens the scale "
                          "separation assumed by the coupling", RuntimeWarning, stacklevel=3)

    @classmethod
    def from_file(cls, path, **overrides):
        """Read the ``[benchmark]`` section of an INI file; `overrides` win."""
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise ParameterError(f"cannot read config file {path}")
        if not parser.has_section("benchmark"):
            raise ParameterError(f"{path} has no [benchmark] section")
        sec = parser["benchmark"]
        # option names are case-insensitive (E1 and e1 both work)
        names = {f.name.lower(): f.name for f in dataclasses.fields(cls)}
        unknown = set(sec) - set(names)
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for key, raw in sec.items():
            name = names[key]
            if name == "dump_maps":
                kw[name] = tuple(int(t) for t in raw.replace(",", " ").split())
            elif name in ("surface_n", "seed", "steps", "max_newton", "offline_steps"):
                kw[name] = sec.getint(key)
            elif name in ("strategy", "out", "surface_file", "offline_mode"):
                kw[name] = raw or None
            else:
                kw[name] = sec.getfloat(key)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def to_ini(self, path):
        parser = configparser.ConfigParser()
        sec = {}
        for k, v in dataclasses.asdict(self).items():
            if v is None:
                sec[k] = ""
            elif k == "dump_maps":
                sec[k] = " ".join(str(x) for x in v)
            else:
                sec[k] = str(v)
        parser["benchmark"] = sec
        with open(path, "w") as fh:
            parser.write(fh)

    def surface(self):
        if self.surface_file:
            surf = read_surface_xyz(self.surface_file)
            if not np.isclose(surf.size, self.micro_size * MM, rtol=1e-6):
                log.warning("surface file spans %.6g um, config says %.6g um",
                            surf.size, self.micro_size * MM)
            return surf
        return generate_rmd(self.surface_n, self.hurst, self.seed, self.max_height,
                            size=self.micro_size * MM)


@dataclass
class RunOutputs:
    curve: list
    residuals: list
    timing: list
    maps: list = field(default_factory=list)
    history: object = None
    fit: PowerLawFit = None
    offline_seconds: float = None
    failure: object = None
    out_dir: Path = None

    @property
    def converged(self):
        return self.failure is None

    def column(self, name):
        i = CURVE_COLUMNS.index(name)
        return np.array([row[i] for row in self.curve])


def build_two_block_model(L, E1, nu1, E2, nu2):
    """Macro mesh: one Q4 per block, one interface element between them.

    Lower block (body 2) nodes 0-3, upper block (body 1) nodes 4-7. The
    imposed displacement acts downwards on nodes 6 and 7.
    """
    coords = np.array([
        [0, 0], [L, 0], [L, L], [0, L],
        [0, L], [L, L], [L, 2 * L], [0, 2 * L],
    ], dtype=float)
    bulk = [((0, 1, 2, 3), E2, nu2), ((4, 5, 6, 7), E1, nu1)]
    interfaces = [(3, 2, 5, 4)]
    constraints = {1: 0.0, 3: 0.0, 13: -1.0, 15: -1.0, 6: 0.0, 14: 0.0}
    return MacroModel(coords, bulk, interfaces, constraints)


def run_benchmark(config, write=True):
    """Run the multiscale benchmark for one strategy and write its tables.

    Returns a `RunOutputs`; on Newton failure the converged part of the
    curve is still returned and written, together with ``failure.txt``.
    """
    surf = config.surface()
    stats = surface_stats(surf)
    s = stats.rms
    elastic = composite_moduli(config.E1, config.nu1, config.E2, config.nu2)
    L = config.macro_size * MM
    model = build_two_block_model(L, config.E1, config.nu1, config.E2, config.nu2)
    deltas = config.delta_max * s * np.arange(1, config.steps + 1) / config.steps
    alpha = shape_factor(surf.N)

    fit = None
    offline_seconds = None
    if config.strategy == "san":
        fit, _, offline_seconds = timed_offline_fit(
            surf, elastic, alpha, config.offline_steps, config.delta_max * s,
            tol_corr=config.tol_corr, mode=config.offline_mode)
        laws = make_laws("san", len(model.interfaces), fit=fit)
    else:
        laws = make_laws(config.strategy, len(model.interfaces), surface=surf, elastic=elastic,
                         alpha=alpha, tol_corr=config.tol_corr)

    history = newton_solve(model, laws, deltas, newton_tol=config.tol_newton,
                           max_iter=config.max_newton)

    A = L * 1.0
    curve, residuals, timing = [], [], []
    for rec in history.steps:
        for it, r in enumerate(rec.residuals):
            residuals.append((rec.step + 1, it, r))
        if not rec.converged:
            continue
        g = np.array([gp[0] for gp in rec.gauss])
        resp = [gp[1] for gp in rec.gauss]
        g_n = float(g.mean())
        P = rec.reaction
        curve.append((
            rec.step + 1, rec.delta, g_n, P, P / (elastic.E * A),
            (stats.max - stats.mean - g_n) / s,
            float(np.mean([r.tangent for r in resp])) * s / elastic.E,
            float(np.mean([r.contact_area_fraction for r in resp])),
            float(np.mean([r.pressure for r in resp])),
        ))
        timing.append((rec.step + 1, rec.seconds))

    out = RunOutputs(curve, residuals, timing, history=history, fit=fit,
                     offline_seconds=offline_seconds, failure=history.failure)
    if write:
        _write_outputs(out, config, surf, elastic, alpha)
    return out


def _write_outputs(out, config, surf, elastic, alpha):
    root = Path(config.out)
    root.mkdir(parents=True, exist_ok=True)
    out.out_dir = root
    config.to_ini(root / "config.ini")
    _write_csv(root / "curve.csv", CURVE_COLUMNS, out.curve)
    _write_csv(root / "residuals.csv", ("step", "iteration", "residual_norm"), out.residuals)
    _write_csv(root / "timing.csv", ("step", "seconds"), out.timing)
    if out.fit is not None:
        out.fit.save(root / "fit.csv")
        _write_csv(root / "offline_timing.csv", ("n_steps", "seconds"),
                   [(config.offline_steps, out.offline_seconds)])
    failure = root / "failure.txt"
    if out.failure is not None:
        err = out.failure
        failure.write_text(f"step {err.step + 1}: {err}\nresiduals: "
                           + " ".join(_fmt(r) for r in err.residuals) + "\n")
    elif failure.exists():
        failure.unlink()
    if config.dump_maps:
        maps = root / "maps"
        maps.mkdir(exist_ok=True)
        solver = ContactSolver(surf, elastic)
        rows = {row[0]: row for row in out.curve}
        for k in config.dump_maps:
            if k not in rows:
                log.warning("no converged step %d, map skipped", k)
                continue
            res = corrected_pressure(surf, elastic, rows[k][2], alpha, tol=config.tol_corr,
                                     solver=solver)
            path = maps / f"step_{k:04d}.csv"
            write_pressure_map(res.solution, path)
            out.maps.append(path)


def run_alpha_table(n_list, elastic, matrix_free=False, out=None):
    """Flat-punch shape factor for each resolution exponent in `n_list`.

    Resolutions ``n >= 7`` have more than 16k cells; they are refused
    unless `matrix_free` is set, in which case the FFT conjugate-gradient
    path is used.
    """
    rows = []
    for n in n_list:
        if n >= 7 and not matrix_free:
            raise ParameterError(f"n={n} needs the matrix-free path (matrix_free=True)")
        alpha = flat_punch_alpha(n, elastic, dense_limit=0 if n >= 7 else DENSE_LIMIT)
        rows.append((n, alpha))
        log.info("n=%d alpha=%.6f", n, alpha)
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        _write_csv(out, ("n", "alpha"), rows)
    return rows


def run_offline_fit(config, study_steps=None, write=True):
    """Off-line SAN stage for the configured surface.

    Returns ``(fit, seconds, study)`` where `study` lists
    ``(n_steps, a, b, R2, seconds)`` for each entry of `study_steps`.
    """
    surf = config.surface()
    s = surface_stats(surf).rms
    elastic = composite_moduli(config.E1, config.nu1, config.E2, config.nu2)
    alpha = shape_factor(surf.N)
    fit, _, seconds = timed_offline_fit(surf, elastic, alpha, config.offline_steps,
                                        config.delta_max * s, tol_corr=config.tol_corr,
                                        mode=config.offline_mode)
    study = []
    for k in study_steps or ():
        f, _, sec = timed_offline_fit(surf, elastic, alpha, k, config.delta_max * s,
                                      tol_corr=config.tol_corr, mode=config.offline_mode)
        study.append((k, f.a, f.b, f.r2, sec))
    if write:
        root = Path(config.out)
        root.mkdir(parents=True, exist_ok=True)
        fit.save(root / "fit.csv")
        _write_csv(root / "offline_timing.csv", ("n_steps", "seconds"),
                   [(config.offline_steps, seconds)])
        if study:
            _write_csv(root / "fit_study.csv", ("n_steps", "a", "b", "R2", "seconds"), study)
    return fit, seconds, study
