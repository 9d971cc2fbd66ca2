"""Plane-strain macro model with zero-thickness interface elements.

Everything is assembled in micrometres and newtons with a unit (1 um)
out-of-plane depth, so an interface pressure in N/um^2 becomes a line
traction in N/um without further conversion.

Interface element node order: nodes 1, 2 lie on the lower face, nodes 3, 4
on the upper face, with pairs (1, 4) and (2, 3) coincident. The gap is
``g = -R N L d``; a positive normal gap means the faces approach.
"""

import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import MeshError, NonConvergenceError

__all__ = [
    "GAUSS_POINTS",
    "ConstitutiveResponse",
    "InterfaceLaw",
    "MacroModel",
    "StepRecord",
    "SolveHistory",
    "interface_operators",
    "interface_gap",
    "interface_residual_stiffness",
    "q4_plane_strain_stiffness",
    "q4_stress",
    "plane_strain_matrix",
    "newton_solve",
]

GAUSS_POINTS = (-1.0 / np.sqrt(3.0), 1.0 / np.sqrt(3.0))

_L = np.array([
    [-1, 0, 0, 0, 0, 0, 1, 0],
    [0, -1, 0, 0, 0, 0, 0, 1],
    [0, 0, -1, 0, 1, 0, 0, 0],
    [0, 0, 0, -1, 0, 1, 0, 0],
], dtype=float)


@dataclass(frozen=True)
class ConstitutiveResponse:
    """Normal traction and its derivative at one Gauss point.

    The tangential traction and all tangential tangent entries are zero
    (frictionless contact).
    """

    pressure: float
    tangent: float
    contact_area_fraction: float = 0.0
    micro: object = field(default=None, compare=False, repr=False)

    @classmethod
    def open(cls):
        return cls(0.0, 0.0)


class InterfaceLaw(Protocol):
    """Per-Gauss-point constitutive callback used by `newton_solve`."""

    def begin_step(self, step: int) -> None: ...

    def evaluate(self, g_n: float) -> ConstitutiveResponse: ...

    def commit(self, g_n: float, response: ConstitutiveResponse) -> None: ...


def interface_operators(coords, xi):
    """Return ``(L, N, R, detJ)`` for an interface element at natural coordinate `xi`.

    `coords` holds the four node positions (4, 2); the geometry is taken from
    the lower face (nodes 1 and 2).
    """
    coords = np.asarray(coords, dtype=float)
    x1, x2 = coords[0], coords[1]
    length = float(np.hypot(*(x2 - x1)))
    if length <= 0:
        raise MeshError("interface element has zero length")
    t = (x2 - x1) / length
    n = np.array([-t[1], t[0]])
    R = np.array([[t[0], t[1]], [n[0], n[1]]])
    N1 = 0.5 * (1.0 - xi)
    N2 = 0.5 * (1.0 + xi)
    N = np.array([[N1, 0.0, N2, 0.0], [0.0, N1, 0.0, N2]])
    return _L, N, R, 0.5 * length


def _b_matrix(coords, xi):
    L, N, R, detJ = interface_operators(coords, xi)
    return -R @ N @ L, detJ


def interface_gap(d, coords):
    """Gaps ``(g_t, g_n)`` at both Gauss points, shape (2, 2)."""
    d = np.asarray(d, dtype=float)
    return np.array([_b_matrix(coords, xi)[0] @ d for xi in GAUSS_POINTS])


def interface_residual_stiffness(coords, responses):
    """Element residual (8,) and tangent (8, 8) from Gauss-point responses.

    ``R_e = det J sum_i B_i^T (0, p_i)`` and
    ``K_e = det J sum_i B_i^T diag(0, dp/dg) B_i`` with ``B = -R N L``.
    """
    Re = np.zeros(8)
    Ke = np.zeros((8, 8))
    for xi, resp in zip(GAUSS_POINTS, responses):
        B, detJ = _b_matrix(coords, xi)
        bn = B[1]
        Re += detJ * bn * resp.pressure
        Ke += detJ * resp.tangent * np.outer(bn, bn)
    return Re, Ke


def plane_strain_matrix(E, nu):
    c = E / ((1 + nu) * (1 - 2 * nu))
    return c * np.array([
        [1 - nu, nu, 0.0],
        [nu, 1 - nu, 0.0],
        [0.0, 0.0, 0.5 * (1 - 2 * nu)],
    ])


def _q4_b(coords, r, s):
    dN = 0.25 * np.array([
        [-(1 - s), (1 - s), (1 + s), -(1 + s)],
        [-(1 - r), -(1 + r), (1 + r), (1 - r)],
    ])
    J = dN @ coords
    detJ = np.linalg.det(J)
    if detJ <= 0:
        raise MeshError(f"non-positive Jacobian {detJ:.3e}; check node ordering")
    dNdx = np.linalg.solve(J, dN)
    B = np.zeros((3, 8))
    B[0, 0::2] = dNdx[0]
    B[1, 1::2] = dNdx[1]
    B[2, 0::2] = dNdx[1]
    B[2, 1::2] = dNdx[0]
    return B, detJ


def q4_plane_strain_stiffness(coords, E, nu, thickness=1.0):
    """Bilinear quadrilateral stiffness, 2x2 Gauss, counter-clockwise nodes."""
    coords = np.asarray(coords, dtype=float)
    D = plane_strain_matrix(E, nu)
    K = np.zeros((8, 8))
    for r in GAUSS_POINTS:
        for s in GAUSS_POINTS:
            B, detJ = _q4_b(coords, r, s)
            K += thickness * detJ * B.T @ D @ B
    return K


def q4_stress(coords, d, E, nu, r=0.0, s=0.0):
    """Stress ``(sxx, szz, sxz)`` at natural point ``(r, s)``."""
    B, _ = _q4_b(np.asarray(coords, dtype=float), r, s)
    return plane_strain_matrix(E, nu) @ B @ np.asarray(d, dtype=float)


@dataclass
class MacroModel:
    """Nodes, bulk quads, interface elements and displacement constraints.

    Parameters
    ----------
    coords : ndarray, shape (n_nodes, 2)
        Node positions [um].
    bulk : list of (nodes, E, nu)
        Four-node quads, counter-clockwise.
    interfaces : list of 4-tuples
        Interface element node quadruples (lower 1, lower 2, upper 3, upper 4).
    constraints : dict
        ``dof -> factor``; the imposed value at load level ``delta`` is
        ``factor * delta``. Use 0 for fixed dofs.
    """

    coords: np.ndarray
    bulk: list
    interfaces: list
    constraints: dict

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        for quad in self.interfaces:
            c = self.coords[list(quad)]
            scale = max(np.ptp(self.coords), 1.0)
            if (np.linalg.norm(c[0] - c[3]) > 1e-9 * scale
                    or np.linalg.norm(c[1] - c[2]) > 1e-9 * scale):
                raise MeshError(f"interface element {quad} pairs are not coincident")

    @property
    def n_dofs(self):
        return 2 * len(self.coords)

    @staticmethod
    def dofs(nodes):
        return np.array([[2 * k, 2 * k + 1] for k in nodes]).ravel()

    def bulk_stiffness(self):
        K = np.zeros((self.n_dofs, self.n_dofs))
        for nodes, E, nu in self.bulk:
            dofs = self.dofs(nodes)
            K[np.ix_(dofs, dofs)] += q4_plane_strain_stiffness(self.coords[list(nodes)], E, nu)
        return K

    def interface_gaps(self, d):
        """Gaps at every Gauss point, shape (n_interfaces, 2, 2)."""
        return np.array([interface_gap(d[self.dofs(q)], self.coords[list(q)])
                         for q in self.interfaces])

    def interface_force(self, responses):
        """Total normal force carried by the interfaces [N]."""
        total = 0.0
        for q, resp in zip(self.interfaces, responses):
            _, _, _, detJ = interface_operators(self.coords[list(q)], 0.0)
            total += detJ * sum(r.pressure for r in resp)
        return total


@dataclass
class StepRecord:
    step: int
    delta: float
    displacements: np.ndarray
    reaction: float
    residuals: list
    gauss: list
    seconds: float
    converged: bool = True


@dataclass
class SolveHistory:
    steps: list = field(default_factory=list)
    failure: NonConvergenceError = None

    @property
    def converged(self):
        return self.failure is None


def newton_solve(model, laws, deltas, newton_tol=1e-9, max_iter=30, reaction_dofs=None,
                 raise_on_failure=False):
    """Displacement-controlled Newton-Raphson over a load program.

    Parameters
    ----------
    model : MacroModel
    laws : list of list of InterfaceLaw
        ``laws[e][g]`` serves Gauss point `g` of interface element `e`.
    deltas : sequence of float
        Imposed displacement magnitude at each pseudo-time step.
    newton_tol : float
        Absolute tolerance on the Euclidean norm of the free-dof residual.
    max_iter : int
        Newton iterations allowed per step.
    reaction_dofs : sequence of int, optional
        Constrained dofs whose reactions are summed into `StepRecord.reaction`
        (default: every constrained dof with a zero factor that is vertical).
    raise_on_failure : bool
        Raise `NonConvergenceError` instead of recording it.

    Returns
    -------
    SolveHistory
        Converged steps; on failure, the partial history with ``failure`` set.
    """
    ndof = model.n_dofs
    fixed = np.array(sorted(model.constraints), dtype=int)
    factors = np.array([model.constraints[k] for k in fixed], dtype=float)
    free = np.setdiff1d(np.arange(ndof), fixed)
    if reaction_dofs is None:
        reaction_dofs = [k for k in fixed if k % 2 == 1 and model.constraints[k] == 0.0]
    reaction_dofs = np.asarray(reaction_dofs, dtype=int)
    K_bulk = model.bulk_stiffness()
    iface_dofs = [model.dofs(q) for q in model.interfaces]
    iface_coords = [model.coords[list(q)] for q in model.interfaces]

    d = np.zeros(ndof)
    history = SolveHistory()

    def assemble(d):
        gaps = model.interface_gaps(d)
        f = K_bulk @ d
        K = K_bulk.copy()
        responses = []
        for e, (dofs, coords) in enumerate(zip(iface_dofs, iface_coords)):
            resp = [laws[e][g].evaluate(float(gaps[e, g, 1])) for g in range(len(GAUSS_POINTS))]
            Re, Ke = interface_residual_stiffness(coords, resp)
            f[dofs] += Re
            K[np.ix_(dofs, dofs)] += Ke
            responses.append(resp)
        return f, K, gaps, responses

    for step, delta in enumerate(deltas):
        t0 = time.perf_counter()
        for row in laws:
            for law in row:
                law.begin_step(step)
        d[fixed] = factors * delta
        residuals = []
        converged = False
        for it in range(max_iter + 1):
            f, K, gaps, responses = assemble(d)
            r = f[free]
            norm = float(np.linalg.norm(r))
            residuals.append(norm)
            if norm < newton_tol:
                converged = True
                break
            if it == max_iter:
                break
            Kff = K[np.ix_(free, free)]
            try:
                dd = cho_solve(cho_factor(Kff), -r)
            except LinAlgError:
                dd = np.linalg.solve(Kff, -r)
            d[free] += dd
        seconds = time.perf_counter() - t0
        if not converged:
            err = NonConvergenceError("Newton-Raphson did not converge", step, residuals)
            if raise_on_failure:
                raise err
            history.failure = err
            history.steps.append(StepRecord(step, float(delta), d.copy(), float("nan"),
                                            residuals, [], seconds, converged=False))
            return history
        for e, row in enumerate(laws):
            for g, law in enumerate(row):
                law.commit(float(gaps[e, g, 1]), responses[e][g])
        gauss = [(float(gaps[e, g, 1]), resp) for e, resp_e in enumerate(responses)
                 for g, resp in enumerate(resp_e)]
        history.steps.append(StepRecord(step, float(delta), d.copy(),
                                        float(f[reaction_dofs].sum()), residuals,
                                        gauss, seconds))
    return history
