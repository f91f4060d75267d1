"""Velocity-space discretization: uniform truncated grid, FFT convolution
against the singular kernels, finite-difference calculus, conservation
projection, and the weighted norms.

Grid convention: the box is [-L, L)^3 sampled at v_i = -L + i h, h = 2L/N,
so v = 0 is a node for even N.  Linear convolutions are evaluated exactly on
the box by zero-padding to (2N)^3; the kernel's origin cell carries its exact
cell average so the integrable singularity keeps its mass.
"""

from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy.sparse.linalg import LinearOperator, cg

from . import accel
from .kernels import GAMMA_MIN, POLY, WeightSpec, as_gamma

CHECKPOINT_MAGIC = b"LNDU"
CHECKPOINT_VERSION = 1

SYM6 = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
A_COMPONENTS = ("a11", "a22", "a33", "a12", "a13", "a23")
B_COMPONENTS = ("b1", "b2", "b3")
_SYM_LOOKUP = ((0, 3, 4), (3, 1, 5), (4, 5, 2))  # (i,j) -> SYM6 slot


class CheckpointFormatError(ValueError):
    """Checkpoint file fails magic/version/size validation."""


class WeightResolutionError(ValueError):
    """Weight norm is dominated by the outermost grid shell."""


# ---------------------------------------------------------------------------
# finite-difference weights (Fornberg)
# ---------------------------------------------------------------------------

def fd_weights(x, x0, m):
    """Weights of derivatives 0..m at x0 from arbitrary nodes x (Fornberg)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def diff_matrix(nodes, order: int, width: int) -> np.ndarray:
    """Dense 1-D differentiation matrix: centered `width`-point stencils in the
    interior, one-sided stencils of the same order at the boundary."""
    n = len(nodes)
    half = width // 2
    out = np.zeros((n, n))
    for i in range(n):
        lo = min(max(i - half, 0), n - width)
        sel = slice(lo, lo + width)
        out[i, sel] = fd_weights(nodes[sel], nodes[i], order)[:, order]
    return out


# ---------------------------------------------------------------------------
# origin-cell regularization
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=32)
def unit_cube_power_integral(beta: float) -> float:
    """int over [-1/2,1/2]^3 of |u|^beta, beta > -3.

    Radial integration: the cube splits into six identical face pyramids, and
    int = (3/(beta+3)) * int over a face of (x^2+y^2+1/4)^(beta/2) dx dy.
    """
    if beta <= -3.0:
        raise ValueError("|u|^beta is not integrable on the cube for beta <= -3")
    nodes, weights = np.polynomial.legendre.leggauss(80)
    x = 0.5 * nodes[:, None]
    y = 0.5 * nodes[None, :]
    w2 = np.outer(weights, weights) * 0.25
    face = np.sum(w2 * (x * x + y * y + 0.25) ** (beta / 2.0))
    return 3.0 / (beta + 3.0) * face


def origin_cell_average(beta: float, h: float) -> float:
    """Exact average of |z|^beta over the h-cube centered at the origin."""
    return unit_cube_power_integral(beta) * h ** beta


def _kernel_component(g: float, comp: str):
    """(beta, angular factor, cube-symmetric angular average) of a kernel
    component written as K(z) = |z|^beta * afun(z)."""
    if comp in A_COMPONENTS:
        i, j = SYM6[A_COMPONENTS.index(comp)]
        if i == j:
            return g + 2.0, lambda zx, zy, zz, r2: 1.0 - (zx, zy, zz)[i] ** 2 / r2, 2.0 / 3.0
        return (g + 2.0,
                lambda zx, zy, zz, r2: -(zx, zy, zz)[i] * (zx, zy, zz)[j] / r2,
                0.0)
    if comp in B_COMPONENTS:
        i = B_COMPONENTS.index(comp)
        return (g + 1.0,
                lambda zx, zy, zz, r2: -2.0 * (zx, zy, zz)[i] / np.sqrt(r2),
                0.0)
    if comp == "c":
        if g == GAMMA_MIN:
            raise ValueError("the Coulomb c-kernel is a Dirac mass, not a field")
        coef = -2.0 * (g + 3.0)
        return g, lambda zx, zy, zz, r2: coef, coef
    if comp.startswith("radial:"):
        alpha = float(comp.split(":", 1)[1])
        return alpha, lambda zx, zy, zz, r2: 1.0, 1.0
    raise ValueError(f"unknown kernel component {comp!r}")


def _kernel_values(beta: float, afun, zx, zy, zz) -> np.ndarray:
    r2 = zx * zx + zy * zy + zz * zz
    r2 = np.where(r2 > 0.0, r2, 1.0)
    out = r2 ** (beta / 2.0) * afun(zx, zy, zz, r2)
    return np.ascontiguousarray(np.broadcast_to(out, np.broadcast_shapes(
        np.shape(zx), np.shape(zy), np.shape(zz))).astype(float))


def _cube_face_quadrature(side: float, q: int = 64):
    """Quadrature points and weights on the six faces of the centered cube."""
    nodes, weights = np.polynomial.legendre.leggauss(q)
    t = 0.5 * side * nodes
    w2 = (np.outer(weights, weights) * (0.5 * side) ** 2).ravel()
    x = np.repeat(t, q)
    y = np.tile(t, q)
    faces = []
    for axis in range(3):
        for sgn in (1.0, -1.0):
            p = [None, None, None]
            p[axis] = np.full_like(x, sgn * side / 2.0)
            p[(axis + 1) % 3] = x
            p[(axis + 2) % 3] = y
            normal = np.zeros(3)
            normal[axis] = sgn
            faces.append((p[0], p[1], p[2], normal))
    return faces, w2


@functools.lru_cache(maxsize=128)
def _lattice_singular_constant(gamma: float, comp: str, h: float,
                               mono: tuple = (0, 0, 0),
                               window: float = 5.0) -> float:
    """Renormalized moment deficit of the punctured midpoint lattice rule.

    For a homogeneous kernel K and monomial z^mono,

        tau = [h^3 sum_{0<z_j in cube} K z^mono - int_cube K z^mono]
              + (h^2/24) * flux of grad(K z^mono) over the cube boundary.

    The window dependence cancels between the two terms (per-cell midpoint
    errors telescope through the Laplacian), so tau is a property of the
    kernel and the lattice alone.  Applied to decaying g, the rule error is
    sum_mono tau_mono (-d/dv)^mono g(v) + higher order; compensating the low
    moments at the origin stencil removes the leading quadrature error of the
    singular convolution.
    """
    beta, afun, _ = _kernel_component(gamma, comp)

    def km(zx, zy, zz):
        base = _kernel_values(beta, afun, zx, zy, zz)
        for axis, power in enumerate(mono):
            if power:
                base = base * (zx, zy, zz)[axis] ** power
        return base

    reach = int(round(window / h))
    side = (2 * reach + 1) * h
    rng = np.arange(-reach, reach + 1) * h
    zx = rng[:, None, None]
    zy = rng[None, :, None]
    zz = rng[None, None, :]
    vals = km(zx, zy, zz)
    vals[reach, reach, reach] = 0.0
    lattice = h ** 3 * float(np.sum(vals))

    # exact cube integral via radial integration through the face pyramids
    deg = sum(mono)
    faces, w2 = _cube_face_quadrature(side)
    exact = 0.0
    flux = 0.0
    eps = 1.0e-6 * side
    for (px, py, pz, normal) in faces:
        exact += float(np.sum(w2 * km(px, py, pz))) * (side / 2.0) / (
            beta + 3.0 + deg)
        up = km(px + eps * normal[0], py + eps * normal[1], pz + eps * normal[2])
        dn = km(px - eps * normal[0], py - eps * normal[1], pz - eps * normal[2])
        flux += float(np.sum(w2 * (up - dn) / (2.0 * eps)))
    return (lattice - exact) + (h * h / 24.0) * flux


# ---------------------------------------------------------------------------
# grid and fields
# ---------------------------------------------------------------------------

class VelocityGrid:
    """Uniform lattice on [-L, L)^3 with N nodes per axis (N even, >= 8)."""

    def __init__(self, halfwidth: float, points_per_dim: int):
        L = float(halfwidth)
        N = int(points_per_dim)
        if L <= 0.0:
            raise ValueError("halfwidth must be positive")
        if N < 8:
            raise ValueError("need at least 8 points per dimension")
        if N % 2 != 0:
            raise ValueError("points_per_dim must be even")
        self.L = L
        self.N = N
        self.h = 2.0 * L / N
        self.axis = -L + self.h * np.arange(N)
        self.shape = (N, N, N)
        self.size = N ** 3
        self.cell_volume = self.h ** 3

        vx, vy, vz = np.meshgrid(self.axis, self.axis, self.axis, indexing="ij")
        self.vx, self.vy, self.vz = vx, vy, vz
        self.r2 = vx * vx + vy * vy + vz * vz
        self.radius = np.sqrt(self.r2)
        self.hv = np.sqrt(1.0 + self.r2)
        self.mu = (2.0 * math.pi) ** -1.5 * np.exp(-self.r2 / 2.0)

        self.d1 = diff_matrix(self.axis, 1, 5)
        self.d2 = diff_matrix(self.axis, 2, 5)
        # second-derivative boundary rows need 6 nodes for 4th order
        for i in (0, 1, N - 2, N - 1):
            lo = 0 if i < 2 else N - 6
            self.d2[i, :] = 0.0
            self.d2[i, lo:lo + 6] = fd_weights(self.axis[lo:lo + 6],
                                               self.axis[i], 2)[:, 2]
        self.d1t = np.ascontiguousarray(self.d1.T)
        self.d2t = np.ascontiguousarray(self.d2.T)

        self._weight_cache: dict = {}
        self._hv_pow_cache: dict = {}
        self._spectra_cache: dict = {}
        self._misc_cache: dict = {}

    def __repr__(self):
        return f"VelocityGrid(L={self.L}, N={self.N})"

    def same_as(self, other) -> bool:
        return isinstance(other, VelocityGrid) and self.L == other.L and self.N == other.N

    # -- cached node data ---------------------------------------------------

    def weight_values(self, w: WeightSpec) -> np.ndarray:
        if w not in self._weight_cache:
            self._weight_cache[w] = w.eval_hv(self.hv)
        return self._weight_cache[w]

    def hv_power(self, p: float) -> np.ndarray:
        key = round(float(p), 12)
        if key not in self._hv_pow_cache:
            self._hv_pow_cache[key] = self.hv ** p
        return self._hv_pow_cache[key]

    def field(self, values) -> "Field":
        return Field(self, values)

    def mu_field(self) -> "Field":
        return Field(self, self.mu)

    # -- differentiation ----------------------------------------------------

    def dapply(self, mat: np.ndarray, arr: np.ndarray, axis: int) -> np.ndarray:
        out = np.tensordot(mat, arr, axes=([1], [axis]))
        if axis:
            out = np.moveaxis(out, 0, axis)
        return np.ascontiguousarray(out)

    def grad(self, arr: np.ndarray):
        return tuple(self.dapply(self.d1, arr, a) for a in range(3))

    def grad_adjoint(self, comps):
        """Adjoint of grad in the h^3-weighted l2 sense: sum_a D1^T comp_a."""
        out = self.dapply(self.d1t, comps[0], 0)
        out += self.dapply(self.d1t, comps[1], 1)
        out += self.dapply(self.d1t, comps[2], 2)
        return out

    def hess(self, arr: np.ndarray):
        """Six independent second derivatives in SYM6 order."""
        gx = self.dapply(self.d1, arr, 0)
        gy = self.dapply(self.d1, arr, 1)
        return (
            self.dapply(self.d2, arr, 0),
            self.dapply(self.d2, arr, 1),
            self.dapply(self.d2, arr, 2),
            self.dapply(self.d1, gx, 1),
            self.dapply(self.d1, gx, 2),
            self.dapply(self.d1, gy, 2),
        )

    def aniso_grad(self, arr: np.ndarray):
        """P_v grad + <v> (I - P_v) grad, with P_v = Id at the origin node."""
        g = self.grad(arr)
        return accel.aniso_combine(self.vx, self.vy, self.vz, self.r2, self.hv, g)

    def aniso_weight_sym6(self):
        """C_ij = <v>^gamma-free anisotropy factor W^2 = P + <v>^2 (I-P), SYM6."""
        if "W2" not in self._misc_cache:
            r2 = np.where(self.r2 > 0.0, self.r2, 1.0)
            hv2 = self.hv ** 2
            comps = []
            for (i, j) in SYM6:
                vi = (self.vx, self.vy, self.vz)[i]
                vj = (self.vx, self.vy, self.vz)[j]
                p = vi * vj / r2
                if i == j:
                    p = np.where(self.r2 > 0.0, p, 1.0)
                    comps.append(p + hv2 * (1.0 - p))
                else:
                    p = np.where(self.r2 > 0.0, p, 0.0)
                    comps.append(p * (1.0 - hv2))
            self._misc_cache["W2"] = np.stack(comps)
        return self._misc_cache["W2"]

    # -- kernel spectra for FFT convolution ----------------------------------

    def _wrapped_offsets(self):
        n2 = 2 * self.N
        idx = np.arange(n2)
        return np.where(idx <= self.N - 1, idx, idx - n2) * self.h

    def kernel_spectrum(self, gamma: float, comp: str) -> np.ndarray:
        """Spectrum of the sampled kernel with singularity-corrected weights.

        Point samples misrepresent the |z|^beta singularity: every cell with
        center within a few h of the origin carries its exact cell average
        (analytic for the origin cell, Gauss-Legendre for its neighbors), and
        the origin weight absorbs the residual difference between the exact
        kernel integral and the lattice sum, so the rule integrates constants
        exactly.  The plane of offsets at -N h never enters the restricted
        convolution and is zeroed, keeping the sampled support symmetric.
        """
        g = as_gamma(gamma)
        key = (g, comp)
        if key in self._spectra_cache:
            return self._spectra_cache[key]
        if comp in B_COMPONENTS:
            # b_i = d_j a_ij taken as the discrete divergence of the sampled
            # (corrected) a-kernels; this is what makes the divergence form's
            # momentum/energy pairings cancel exactly in the double lattice sum
            i = B_COMPONENTS.index(comp)
            spec = np.zeros_like(self.kernel_spectrum(g, "a11"))
            for j in range(3):
                a_comp = A_COMPONENTS[_SYM_LOOKUP[i][j]]
                spec = spec + self._derivative_symbol(j) * self.kernel_spectrum(g, a_comp)
            self._spectra_cache[key] = spec
            return spec
        beta, afun, angfactor = _kernel_component(g, comp)
        offs = self._wrapped_offsets()
        z1 = offs[:, None, None]
        z2 = offs[None, :, None]
        z3 = offs[None, None, :]
        ker = _kernel_values(beta, afun, z1, z2, z3)
        ker[0, 0, 0] = 0.0
        ker[self.N, :, :] = 0.0
        ker[:, self.N, :] = 0.0
        ker[:, :, self.N] = 0.0

        if angfactor != 0.0:
            tau0 = _lattice_singular_constant(g, comp, self.h)
            ker[0, 0, 0] = -tau0 / self.cell_volume

        spec = sfft.rfftn(ker, workers=accel.thread_count())
        self._spectra_cache[key] = spec
        return spec

    def _derivative_symbol(self, axis: int) -> np.ndarray:
        """Fourier symbol of the 4th-order centered difference on the padded
        periodic lattice, shaped for the rfftn spectrum layout."""
        n2 = 2 * self.N
        if axis == 2:
            k = np.arange(self.N + 1)
        else:
            k = np.fft.fftfreq(n2, d=1.0 / n2)
        theta = 2.0 * np.pi * k / n2
        sym = 1j * (8.0 * np.sin(theta) - np.sin(2.0 * theta)) / (6.0 * self.h)
        shape = [1, 1, 1]
        shape[axis] = -1
        return sym.reshape(shape)

    def convolve_transform(self, values: np.ndarray) -> np.ndarray:
        """Forward transform of the zero-padded field, reusable across components."""
        n2 = 2 * self.N
        pad = np.zeros((n2, n2, n2))
        pad[:self.N, :self.N, :self.N] = values
        return sfft.rfftn(pad, workers=accel.thread_count())

    def convolve_from_transform(self, ghat: np.ndarray, gamma: float,
                                comp: str) -> np.ndarray:
        n2 = 2 * self.N
        spec = self.kernel_spectrum(gamma, comp)
        out = sfft.irfftn(ghat * spec, s=(n2, n2, n2), workers=accel.thread_count())
        return np.ascontiguousarray(out[:self.N, :self.N, :self.N]) * self.cell_volume


def build_grid(L: float, N: int) -> VelocityGrid:
    return VelocityGrid(L, N)


class Field:
    """A real scalar sample on a velocity grid.  Operations return new fields."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: VelocityGrid, values, check: bool = True):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            if values.size == grid.size:
                values = values.reshape(grid.shape)
            else:
                raise ValueError(f"field shape {values.shape} does not match {grid.shape}")
        if check and not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        self.grid = grid
        self.values = np.ascontiguousarray(values)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy(), check=False)

    def __add__(self, other):
        return Field(self.grid, self.values + _vals(other), check=False)

    def __sub__(self, other):
        return Field(self.grid, self.values - _vals(other), check=False)

    def __mul__(self, factor):
        return Field(self.grid, self.values * factor, check=False)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values, check=False)

    def l2(self) -> float:
        return math.sqrt(self.grid.cell_volume * float(np.sum(self.values ** 2)))


def _vals(x):
    return x.values if isinstance(x, Field) else x


def require_same_grid(*fields):
    g0 = fields[0].grid
    for f in fields[1:]:
        if not g0.same_as(f.grid):
            raise ValueError("fields live on different grids")
    return g0


# ---------------------------------------------------------------------------
# convolution API
# ---------------------------------------------------------------------------

def convolve_kernel(g: Field, component: str, gamma) -> Field:
    """h^3-weighted discrete convolution of a kernel component with g.

    Components: a11,a22,a33,a12,a13,a23 | b1,b2,b3 | c.  For gamma = -3 the
    c-component is the Dirac branch and returns -8 pi g directly.
    """
    gm = as_gamma(gamma)
    if component == "c" and gm == GAMMA_MIN:
        return Field(g.grid, -8.0 * math.pi * g.values, check=False)
    ghat = g.grid.convolve_transform(g.values)
    return Field(g.grid, g.grid.convolve_from_transform(ghat, gm, component),
                 check=False)


# ---------------------------------------------------------------------------
# differentiation / projection / anisotropic gradient
# ---------------------------------------------------------------------------

def differentiate(f: Field, order: str):
    """4th-order centered differences, one-sided at the box boundary.

    order='grad' gives (f_x, f_y, f_z); order='hess' the six SYM6 components.
    """
    if order == "grad":
        return tuple(Field(f.grid, c, check=False) for c in f.grid.grad(f.values))
    if order == "hess":
        return tuple(Field(f.grid, c, check=False) for c in f.grid.hess(f.values))
    raise ValueError("order must be 'grad' or 'hess'")


def aniso_gradient(f: Field):
    return tuple(Field(f.grid, c, check=False) for c in f.grid.aniso_grad(f.values))


class KernelProjector:
    """Projection onto the discrete span of {mu, v_i mu, (|v|^2-3)/sqrt6 mu}.

    Uses the discrete moment Gram matrix so that the projection is exactly
    idempotent and the five moments of the complement vanish to roundoff.
    """

    def __init__(self, grid: VelocityGrid):
        self.grid = grid
        e = (grid.r2 - 3.0) / math.sqrt(6.0)
        self.monomials = (np.ones(grid.shape), grid.vx, grid.vy, grid.vz, e)
        self.basis = np.stack([phi * grid.mu for phi in self.monomials])
        gram = np.empty((5, 5))
        for a in range(5):
            for b in range(5):
                gram[a, b] = grid.cell_volume * np.sum(
                    self.monomials[a] * self.basis[b])
        self.gram_inv = np.linalg.inv(gram)

    def moments_vector(self, values: np.ndarray) -> np.ndarray:
        return np.array([self.grid.cell_volume * np.sum(phi * values)
                         for phi in self.monomials])

    def split(self, values: np.ndarray):
        coeff = self.gram_inv @ self.moments_vector(values)
        pi0 = np.tensordot(coeff, self.basis, axes=(0, 0))
        return pi0, values - pi0


def projector(grid: VelocityGrid) -> KernelProjector:
    if "projector" not in grid._misc_cache:
        grid._misc_cache["projector"] = KernelProjector(grid)
    return grid._misc_cache["projector"]


def project_pi0(f: Field):
    """(pi0 part, complement) of the five-moment kernel projection."""
    pi0, rest = projector(f.grid).split(f.values)
    return Field(f.grid, pi0, check=False), Field(f.grid, rest, check=False)


def moments(f: Field):
    """(mass, momentum 3-vector, energy) by h^3-weighted sums."""
    g = f.grid
    w = g.cell_volume
    mass = w * float(np.sum(f.values))
    mom = np.array([w * float(np.sum(g.vx * f.values)),
                    w * float(np.sum(g.vy * f.values)),
                    w * float(np.sum(g.vz * f.values))])
    energy = w * float(np.sum(g.r2 * f.values))
    return mass, mom, energy


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

L2M = "L2m"
H1M = "H1m"
H1STAR = "H1star"
HMINUS1STAR = "Hminus1star"


@dataclass(frozen=True)
class NormSpec:
    space: str
    weight: WeightSpec
    gamma: float = -3.0


def _l2_weighted(grid, values, weight_sq) -> float:
    return math.sqrt(grid.cell_volume * accel.weighted_sumsq(weight_sq, values))


class H1StarGram:
    """SPD Gram operator of the H^1_* inner product acting on psi = m f."""

    def __init__(self, grid: VelocityGrid, weight: WeightSpec, gamma: float):
        self.grid = grid
        g = as_gamma(gamma)
        sigma = weight.sigma
        self.zero_order = grid.hv_power(g + sigma)
        w2 = grid.aniso_weight_sym6()
        hvg = grid.hv_power(g)
        self.c6 = w2 * hvg  # <v>^gamma W^2, SYM6 components
        # Jacobi-style diagonal estimate for preconditioning
        col_sq = np.sum(grid.d1 * grid.d1, axis=0)
        diag = self.zero_order.copy()
        for a in range(3):
            caa = self.c6[a]
            shape = [1, 1, 1]
            shape[a] = grid.N
            diag = diag + caa * col_sq.reshape(shape)
        self.inv_diag = 1.0 / diag

    def apply(self, psi: np.ndarray) -> np.ndarray:
        g = self.grid
        gx, gy, gz = g.grad(psi)
        c = self.c6
        tx = c[0] * gx + c[3] * gy + c[4] * gz
        ty = c[3] * gx + c[1] * gy + c[5] * gz
        tz = c[4] * gx + c[5] * gy + c[2] * gz
        out = self.zero_order * psi
        out += g.dapply(g.d1t, tx, 0)
        out += g.dapply(g.d1t, ty, 1)
        out += g.dapply(g.d1t, tz, 2)
        return out

    def solve(self, rhs: np.ndarray, rtol: float = 1.0e-12,
              maxiter: int = 5000) -> np.ndarray:
        n = self.grid.size
        shape = self.grid.shape
        op = LinearOperator((n, n), matvec=lambda x: self.apply(x.reshape(shape)).ravel())
        pre = LinearOperator((n, n), matvec=lambda x: (self.inv_diag.ravel() * x))
        x, info = cg(op, rhs.ravel(), rtol=rtol, atol=0.0, maxiter=maxiter, M=pre)
        if info != 0:
            raise RuntimeError(f"Gram solve did not converge (info={info})")
        return x.reshape(shape)


def h1star_gram(grid: VelocityGrid, weight: WeightSpec, gamma: float) -> H1StarGram:
    key = ("gram", weight, round(as_gamma(gamma), 12))
    if key not in grid._misc_cache:
        grid._misc_cache[key] = H1StarGram(grid, weight, gamma)
    return grid._misc_cache[key]


def norm(f: Field, spec: NormSpec) -> float:
    """Weighted norm per spec.space; the dual norm solves the Gram system."""
    g = f.grid
    gamma = as_gamma(spec.gamma)
    m = g.weight_values(spec.weight)
    if spec.space == L2M:
        return _l2_weighted(g, f.values, m * m)
    if spec.space == H1M:
        mf = m * f.values
        total = g.cell_volume * float(np.sum(mf * mf))
        for comp in g.grad(mf):
            total += g.cell_volume * float(np.sum(comp * comp))
        return math.sqrt(total)
    if spec.space == H1STAR:
        sigma = spec.weight.sigma
        mf = m * f.values
        w0 = g.hv_power(gamma + sigma)
        total = g.cell_volume * accel.weighted_sumsq(w0, mf)
        tg = accel.aniso_combine(g.vx, g.vy, g.vz, g.r2, g.hv, g.grad(mf))
        wg = g.hv_power(gamma)
        total += g.cell_volume * accel.weighted_dot3(wg, tg, tg)
        return math.sqrt(total)
    if spec.space == HMINUS1STAR:
        if spec.weight.kind != POLY:
            raise ValueError("the dual norm is defined for polynomial weights")
        mf = m * f.values
        if not np.any(mf):
            return 0.0
        gram = h1star_gram(g, spec.weight, gamma)
        sol = gram.solve(mf)
        val = g.cell_volume * float(np.sum(mf * sol))
        return math.sqrt(max(val, 0.0))
    raise ValueError(f"unknown norm space {spec.space!r}")


def boundary_norm_fraction(grid: VelocityGrid, weight: WeightSpec) -> float:
    """Share of ||m mu||^2 carried by the outermost node shell."""
    m = grid.weight_values(weight)
    w = (m * grid.mu) ** 2
    total = float(np.sum(w))
    interior = float(np.sum(w[1:-1, 1:-1, 1:-1]))
    return (total - interior) / total if total > 0.0 else 1.0


def check_weight_resolution(grid: VelocityGrid, weight: WeightSpec,
                            limit: float = 0.01) -> float:
    frac = boundary_norm_fraction(grid, weight)
    if frac > limit:
        raise WeightResolutionError(
            f"weight norm is boundary-dominated: outer-shell share {frac:.3g} "
            f"exceeds {limit:.3g}; enlarge the box or weaken the weight")
    return frac


# ---------------------------------------------------------------------------
# checkpoint and CSV io
# ---------------------------------------------------------------------------

def save_field(f: Field, path) -> None:
    """Binary checkpoint: magic LNDU, version u32, L f64, N u32, then values."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<d", f.grid.L))
        fh.write(struct.pack("<I", f.grid.N))
        fh.write(f.values.astype("<f8", copy=False).tobytes(order="C"))


def load_field(path, grid: VelocityGrid | None = None) -> Field:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointFormatError(f"bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}")
        (L,) = struct.unpack("<d", fh.read(8))
        (N,) = struct.unpack("<I", fh.read(4))
        raw = fh.read(N ** 3 * 8)
        if len(raw) != N ** 3 * 8:
            raise CheckpointFormatError("truncated checkpoint payload")
        values = np.frombuffer(raw, dtype="<f8").reshape((N, N, N))
    if grid is None:
        grid = VelocityGrid(L, N)
    elif grid.L != L or grid.N != N:
        raise CheckpointFormatError(
            f"checkpoint grid (L={L}, N={N}) does not match (L={grid.L}, N={grid.N})")
    return Field(grid, values.copy())


def export_field_csv(f: Field, path) -> None:
    g = f.grid
    with open(path, "w") as fh:
        fh.write("i,j,k,v1,v2,v3,value\n")
        for i in range(g.N):
            for j in range(g.N):
                base = f"{i},{j},"
                vi = g.axis[i]
                vj = g.axis[j]
                for k in range(g.N):
                    fh.write(f"{base}{k},{vi:.17g},{vj:.17g},{g.axis[k]:.17g},"
                             f"{f.values[i, j, k]:.17g}\n")
