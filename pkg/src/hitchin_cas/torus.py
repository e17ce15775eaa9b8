"""Flat two-torus model of the Hitchin and Hitchin-Witten connections.

M = R^2 / Z^2 with omega = 2 pi dx ^ dy, holomorphic coordinate z = x + tau y
and the prequantum connection nabla = d + 2 pi i k y dx on L^k (curvature
-i k omega).  A section is a function on R^2 with

    s(x + 1, y) = s(x, y),    s(x, y + 1) = exp(-2 pi i k x) s(x, y).

The family is flat, so lambda = 0 and F = 0.  The holomorphic sections are
s_j = sum_{m in j/k + Z} P(y + m) exp(pi i k tau (y + m)^2 + 2 pi i k m x)
with P = 1; every operator used below preserves this form with P a
polynomial, which gives exact derivatives for the basis.  Holonomies are
computed on an N x N grid with gauge-covariant central differences.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import sparse
from scipy.sparse.linalg import expm_multiply

TWO_PI = 2 * math.pi
OMEGA = TWO_PI * np.array([[0.0, 1.0], [-1.0, 0.0]])       # omega_{ab}, coordinates (x, y)
OMEGA_INV = np.linalg.inv(OMEGA)                              # omegaInv^{ab}: omegaInv . omega = Id

TRIVIALIZATION = {
    "omega": "2 pi dx ^ dy",
    "connection": "d + 2 pi i k y dx",
    "quasi_periodicity": "s(x+1,y) = s(x,y), s(x,y+1) = exp(-2 pi i k x) s(x,y)",
    "holomorphic_coordinate": "z = x + tau y",
    "basis": "s_j = exp(pi i k tau y^2) theta_j(x + tau y), j = 0..k-1",
}


class TorusError(ValueError):
    """Invalid model parameters or insufficient numerical resolution."""


def _check_tau(tau):
    tau = complex(tau)
    if not tau.imag > 0:
        raise TorusError(f"tau must lie in the upper half-plane, got {tau}")
    return tau


# ---------------------------------------------------------------- Kahler data

def complex_structure(tau):
    """(J, g, gInv) for the constant complex structure with z = x + tau y.

    J acts on tangent vectors, J d/dz = i d/dz, and g_{ab} = omega_{au} J^u_b."""
    tau = _check_tau(tau)
    # columns: d/dz, d/dzbar in the (d/dx, d/dy) basis
    dz = np.array([tau.conjugate(), -1.0]) / (tau.conjugate() - tau)
    dzb = np.array([tau, -1.0]) / (tau - tau.conjugate())
    E = np.column_stack([dz, dzb])
    J = (E @ np.diag([1j, -1j]) @ np.linalg.inv(E)).real
    g = OMEGA @ J
    return J, g, np.linalg.inv(g)


def projections(tau):
    """(pi10, pi01) on tangent vectors."""
    J, _, _ = complex_structure(tau)
    Id = np.eye(2)
    return (Id - 1j * J) / 2, (Id + 1j * J) / 2


def _dtau(fn, tau, v, eps):
    """Directional derivative along the real tangent v (a complex number).

    Richardson-extrapolated central differences, error O(eps^4)."""
    if eps < 1e-7:
        raise TorusError(f"step {eps} too small: finite differences cancel")
    tau = _check_tau(tau)
    if abs(v) == 0:
        raise TorusError("direction must be nonzero")

    def cd(h):
        return (fn(tau + h * v) - fn(tau - h * v)) / (2 * h)
    return (4 * cd(eps / 2) - cd(eps)) / 3


def compute_Gt(tau, v, eps=1e-3):
    """Gt(V)^{ab} from V[J] = Gt(V) . omega for V = v d/dtau + conj(v) d/dtaubar."""
    dJ = _dtau(lambda s: complex_structure(s)[0], tau, v, eps)
    return dJ @ OMEGA_INV


def compute_G(tau, v, eps=1e-3):
    """G(V): the (2,0)-part of Gt(V)."""
    Gt = compute_Gt(tau, v, eps)
    p10, _ = projections(tau)
    return p10 @ Gt @ p10.T


def kahler_checks(tau, v, eps=1e-3):
    """Residuals of the defining relations of G at tau along v."""
    Gt = compute_Gt(tau, v, eps)
    p10, p01 = projections(tau)
    dginv = _dtau(lambda s: complex_structure(s)[2], tau, v, eps)
    G = p10 @ Gt @ p10.T
    Gb = p01 @ Gt @ p01.T
    J, g, _ = complex_structure(tau)
    return {
        "J2": float(np.abs(J @ J + np.eye(2)).max()),
        "g_symmetric": float(np.abs(g - g.T).max()),
        "g_min_eig": float(np.linalg.eigvalsh((g + g.T) / 2).min()),
        "Gt_symmetric": float(np.abs(Gt - Gt.T).max()),
        "Gt_11_part": float(np.abs(p10 @ Gt @ p01.T).max()),
        "Gbar_conjugate": float(np.abs(np.conj(G) - Gb).max()),
        "dginv_plus_Gt": float(np.abs(dginv + Gt).max()),
    }


# ---------------------------------------------------------------- model

@dataclass
class TorusModel:
    k: int
    tau: complex = 1j
    t: complex | None = None
    N: int = 32
    tail: float = 1e-12
    bound: float | None = None          # theta truncation |y + m| <= bound

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise TorusError(f"level k must be a positive integer, got {self.k}")
        self.k = int(self.k)
        self.tau = _check_tau(self.tau)
        if self.t is None:
            self.t = complex(self.k, 0.0)
        self.t = complex(self.t)
        if abs(self.t.real - self.k) > 1e-12:
            raise TorusError(f"Re t must equal k = {self.k}, got {self.t}")

    @property
    def tbar(self):
        return self.t.conjugate()

    def mcut(self, tau=None):
        """Truncation |y + m| <= R with exp(-pi k Im(tau) R^2) below the tail tolerance."""
        tau = self.tau if tau is None else tau
        need = math.sqrt(-math.log(self.tail) / (math.pi * self.k * tau.imag))
        if self.bound is None:
            return need + 1.0
        mass = math.exp(-math.pi * self.k * tau.imag * self.bound ** 2)
        if mass > self.tail:
            raise TorusError(f"truncation bound {self.bound} leaves tail mass {mass:.1e} > {self.tail:.0e}")
        return self.bound


# ---------------------------------------------------------------- exact polynomial sections

class PolySection:
    """sum_{m in j/k + Z} P(y + m) exp(pi i k tau (y+m)^2 + 2 pi i k m x), P a polynomial."""

    def __init__(self, model, j, coeffs, tau=None):
        self.model = model
        self.j = j
        self.tau = model.tau if tau is None else tau
        self.P = np.trim_zeros(np.asarray(coeffs, dtype=complex), "b")
        if self.P.size == 0:
            self.P = np.zeros(1, complex)

    def _new(self, P):
        return PolySection(self.model, self.j, P, self.tau)

    def __add__(self, o):
        return self._new(npoly.polyadd(self.P, o.P))

    def __sub__(self, o):
        return self._new(npoly.polysub(self.P, o.P))

    def scale(self, c):
        return self._new(self.P * c)

    # covariant derivatives in the coordinate directions
    def nabla_x(self):
        return self._new(npoly.polymulx(self.P) * (2j * math.pi * self.model.k))

    def nabla_y(self):
        return self._new(npoly.polyadd(npoly.polyder(self.P) if self.P.size > 1 else [0],
                                       npoly.polymulx(self.P) * (2j * math.pi * self.model.k * self.tau)))

    def nabla(self, vec):
        """nabla along the constant complex vector vec = (vx, vy)."""
        return self.nabla_x().scale(vec[0]) + self.nabla_y().scale(vec[1])

    def dtau(self):
        """Derivative in tau at fixed coordinates (the trivial connection on sections)."""
        return self._new(npoly.polymulx(npoly.polymulx(self.P)) * (1j * math.pi * self.model.k)
                         if self.P.any() else self.P)

    def laplace(self, G):
        """G^{ab} nabla_a nabla_b for a constant symmetric G."""
        out = self._new([0])
        d = [self.nabla_x(), self.nabla_y()]
        for a in range(2):
            for b in range(2):
                if G[a][b] != 0:
                    dd = d[b].nabla_x() if a == 0 else d[b].nabla_y()
                    out = out + dd.scale(G[a][b])
        return out

    def dbar_residual(self):
        """|| nabla_{d/dzbar} s || / || s ||."""
        tau = self.tau
        vec = np.array([tau, -1.0]) / (tau - tau.conjugate())
        return self.nabla(vec).norm() / self.norm()

    # L^2 on the torus reduces to a Gaussian integral over the real line
    def inner(self, o):
        k, b = self.model.k, self.tau.imag
        xs, ws = np.polynomial.hermite.hermgauss(64)
        u = xs / math.sqrt(2 * math.pi * k * b)
        w = ws / math.sqrt(2 * math.pi * k * b)
        if self.j != o.j:
            return 0.0
        return complex(np.sum(w * np.conj(npoly.polyval(u, self.P)) * npoly.polyval(u, o.P)))

    def norm(self):
        return math.sqrt(max(self.inner(self).real, 0.0))

    def values(self, x, y, tau=None):
        """Values on the outer product of coordinate arrays x and y (indexed [a, b])."""
        tau = self.tau if tau is None else tau
        k = self.model.k
        x, y = np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float))
        R = self.model.mcut(tau) + 1 + float(np.abs(y).max())
        out = np.zeros((x.size, y.size), complex)
        for n in range(int(math.floor(-R - 1)), int(math.ceil(R + 1)) + 1):
            m = n + self.j / k
            w = y + m
            prof = npoly.polyval(w, self.P) * np.exp(1j * math.pi * k * tau * w * w)
            out += np.exp(2j * math.pi * k * m * x)[:, None] * prof[None, :]
        return out

    def on_grid(self, N, tau=None):
        """Values on the grid x_a = a/N, y_b = b/N (array indexed [a, b])."""
        g = np.arange(N) / N
        return self.values(g, g, tau)


def theta_basis(model, tau=None):
    """The k holomorphic sections s_0 .. s_{k-1}."""
    return [PolySection(model, j, [1.0], tau) for j in range(model.k)]


def basis_dimension(k):
    """Number of independent quasi-periodic holomorphic sections (Fourier supports j mod k)."""
    return len({j % k for j in range(k)})


def dbar_kernel_dimension(k, tau=1j, N=None, tol=0.1):
    """Numerical count of holomorphic sections: near-zero singular values of a
    forward-difference dbar with unitary links (no doubler modes).

    The first nonzero level sits at about sqrt(4 pi k / Im tau), so tol only
    has to separate it from the O(h) kernel."""
    tau = _check_tau(tau)
    N = N or max(24, 4 * k + 8)
    h = 1.0 / N
    n = N * N
    idx = np.arange(n).reshape(N, N)
    a, b = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    x, y = a * h, b * h
    phx = np.exp(2j * math.pi * k * y * h)
    phy = np.where(b + 1 == N, np.exp(-2j * math.pi * k * x), 1.0)
    T_x = sparse.csr_matrix((phx.ravel(), (idx.ravel(), idx[(a + 1) % N, b].ravel())), shape=(n, n))
    T_y = sparse.csr_matrix((phy.ravel(), (idx.ravel(), idx[a, (b + 1) % N].ravel())), shape=(n, n))
    one = sparse.identity(n)
    vec = np.array([tau, -1.0]) / (tau - tau.conjugate())
    D = (vec[0] * (T_x - one) + vec[1] * (T_y - one)) / h
    sv = np.linalg.svd(D.toarray(), compute_uv=False)
    return int(np.sum(sv < tol))


def hitchin_matrix(model, v=1.0, eps=1e-3):
    """Connection matrix of nabla^T_V + (1/4k) Delta_{G(V)} on the theta basis.

    Returns (matrix, residuals) with residuals[j] the relative distance of the
    covariant derivative of s_j from the span of the basis."""
    G = compute_G(model.tau, v, eps)
    basis = theta_basis(model)
    k = model.k
    M = np.zeros((k, k), complex)
    res = []
    for j, s in enumerate(basis):
        u = s.dtau().scale(v) + s.laplace(G).scale(1 / (4 * k))
        for i, e in enumerate(basis):
            M[i, j] = e.inner(u) / e.inner(e)
        proj = u
        for i, e in enumerate(basis):
            if e.j == u.j:
                proj = proj - e.scale(M[i, j])
        res.append(proj.norm() / s.norm())
    return M, res


def hitchin_transport_holomorphy(model, path_v=0.3 + 0.2j, steps=20, eps=1e-3):
    """Transport s_0 along tau -> tau + path_v with the Hitchin connection.

    The section is held as P(w) times the Gaussian at the current tau, so
    d/dsigma (P e) = -(1/4k) Delta_G (P e) becomes
    dP/dsigma = -(1/4k) Delta_G P - v pi i k w^2 P.  RK4 in sigma; returns
    the dbar residual of the transported section at the end point."""
    k = model.k

    def rhs(P, sig):
        tau = model.tau + sig * path_v
        sec = PolySection(model, 0, P, tau)
        G = compute_G(tau, path_v, eps)
        return (sec.laplace(G).scale(-1 / (4 * k)) - sec.dtau().scale(path_v)).P

    P = np.array([1.0 + 0j])
    h = 1.0 / steps
    for n in range(steps):
        sg = n * h
        k1 = rhs(P, sg)
        k2 = rhs(npoly.polyadd(P, h / 2 * k1), sg + h / 2)
        k3 = rhs(npoly.polyadd(P, h / 2 * k2), sg + h / 2)
        k4 = rhs(npoly.polyadd(P, h * k3), sg + h)
        P = npoly.polyadd(P, h / 6 * npoly.polyadd(npoly.polyadd(k1, 2 * k2), npoly.polyadd(2 * k3, k4)))
    return PolySection(model, 0, P, model.tau + path_v).dbar_residual()


# ---------------------------------------------------------------- grid model

class Grid:
    """N x N grid with gauge-covariant central differences on sections of L^k."""

    def __init__(self, k, N):
        if N < 4 * k + 8:              # Nyquist margin for the Gaussian profiles
            raise TorusError(f"grid N={N} below the resolution needed at level k={k} (N >= 4k+8)")
        self.k, self.N = k, N
        h = 1.0 / N
        n = N * N
        idx = np.arange(n).reshape(N, N)          # idx[a, b], x = a h, y = b h
        a, b = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
        x, y = a * h, b * h
        # forward transports: s(x+h) pulled back to x picks up exp(2 pi i k y h)
        ax = (a + 1) % N
        phx = np.exp(2j * math.pi * k * y * h)
        by = (b + 1) % N
        phy = np.where(b + 1 == N, np.exp(-2j * math.pi * k * x), 1.0)
        T_x = sparse.csr_matrix((phx.ravel(), (idx.ravel(), idx[ax, b].ravel())), shape=(n, n))
        T_y = sparse.csr_matrix((phy.ravel(), (idx.ravel(), idx[a, by].ravel())), shape=(n, n))
        # backward transports are the adjoints (unitary links)
        self.Dx = ((T_x - T_x.getH()) / (2 * h)).tocsr()
        self.Dy = ((T_y - T_y.getH()) / (2 * h)).tocsr()
        self.Sxx = (self.Dx @ self.Dx).tocsr()
        self.Syy = (self.Dy @ self.Dy).tocsr()
        self.Sxy = ((self.Dx @ self.Dy + self.Dy @ self.Dx) / 2).tocsr()

    def laplace(self, G):
        return G[0][0] * self.Sxx + 2 * G[0][1] * self.Sxy + G[1][1] * self.Syy

    def vec(self, arr):
        return arr.reshape(-1)


def connection_operator(grid, model, tau, v, mode, eps=1e-3):
    """A(V) with nabla_V = V + A(V) on the grid, V = v d/dtau + c.c."""
    G = compute_G(tau, v, eps)
    if mode == "hitchin":
        return grid.laplace(G) * (1 / (4 * model.k))
    if mode == "hitchin-witten":
        Gb = np.conj(G)
        return grid.laplace(G) * (1 / (2 * model.t)) - grid.laplace(Gb) * (1 / (2 * model.tbar))
    raise TorusError(f"unknown connection {mode!r}")


def _transport(grid, model, X, tau0, v, mode, steps, eps):
    """Solve dX/dsigma = -A(tau0 + sigma v, v) X on [0, 1] (fourth-order Magnus)."""
    h = 1.0 / steps
    c = math.sqrt(3) / 6
    for n in range(steps):
        s1, s2 = (n + 0.5 - c) * h, (n + 0.5 + c) * h
        A1 = connection_operator(grid, model, tau0 + s1 * v, v, mode, eps)
        A2 = connection_operator(grid, model, tau0 + s2 * v, v, mode, eps)
        Om = (-h / 2) * (A1 + A2) + (math.sqrt(3) * h * h / 12) * (A2 @ A1 - A1 @ A2)
        X = expm_multiply(Om, X)
    return X


def sample_sections(model, grid, tau=None):
    """Smooth test sections: the theta basis and one derivative of each."""
    cols = []
    for s in theta_basis(model, tau):
        cols.append(grid.vec(s.on_grid(grid.N)))
        d = s.nabla_x()
        cols.append(grid.vec(d.on_grid(grid.N)))
    X = np.column_stack(cols)
    return X / np.linalg.norm(X, axis=0)


@dataclass
class HolonomyResult:
    k: int
    t: complex
    tau: complex
    side: float
    mode: str
    N: int
    defect: float
    scalar: complex
    steps: int = 0
    extra: dict = field(default_factory=dict)

    def record(self):
        return {"k": self.k, "t": [self.t.real, self.t.imag], "tau": [self.tau.real, self.tau.imag],
                "side": self.side, "mode": self.mode, "resolution": self.N, "defect": self.defect,
                "scalar": [self.scalar.real, self.scalar.imag], "steps": self.steps}


def hw_holonomy(model, side=0.01, loop=(1.0, 1j), mode="hitchin-witten", steps=4, eps=1e-3):
    """Holonomy around the parallelogram tau, tau + side a, tau + side (a + b), tau + side b.

    Applied to sampled smooth sections; the defect is the relative distance of
    the result from a scalar multiple of the input."""
    grid = Grid(model.k, model.N)
    X0 = sample_sections(model, grid)
    a, b = (complex(z) * side for z in loop)
    tau = model.tau
    X = X0
    if side != 0:
        for start, v in ((tau, a), (tau + a, b), (tau + a + b, -a), (tau + b, -b)):
            X = _transport(grid, model, X, start, v, mode, steps, eps)
    c = np.vdot(X0, X) / np.vdot(X0, X0)
    defect = float(np.linalg.norm(X - c * X0) / (abs(c) * np.linalg.norm(X0)))
    return HolonomyResult(model.k, model.t, tau, side, mode, model.N, defect, complex(c), steps)


def hw_transport_holomorphy(model, path_v=0.3 + 0.2j, steps=8, eps=1e-3):
    """Transport s_0 along tau -> tau + path_v with the Hitchin-Witten connection on the grid.

    Returns the relative dbar residual at the end point, measured against the
    discretization floor of an exactly holomorphic section there."""
    grid = Grid(model.k, model.N)
    s0 = theta_basis(model)[0]
    X = grid.vec(s0.on_grid(grid.N))[:, None]
    X = _transport(grid, model, X, model.tau, path_v, "hitchin-witten", steps, eps)
    end = model.tau + path_v
    vec = np.array([end, -1.0]) / (end - end.conjugate())
    Dzb = vec[0] * grid.Dx + vec[1] * grid.Dy
    r = np.linalg.norm(Dzb @ X) / np.linalg.norm(X)
    ref = theta_basis(TorusModel(model.k, end, model.t, model.N), end)[0]
    R = grid.vec(ref.on_grid(grid.N, end))
    floor = np.linalg.norm(Dzb @ R) / np.linalg.norm(R)
    return float(r), float(floor)


def convergence(model, sides=(0.04, 0.02, 0.01), mode="hitchin-witten", steps=4):
    """Defect versus loop side and the successive ratios."""
    rows = [hw_holonomy(model, s, mode=mode, steps=steps) for s in sides]
    ratios = [rows[i].defect / rows[i + 1].defect for i in range(len(rows) - 1)]
    return rows, ratios


def to_json(records):
    return json.dumps(records, indent=2, sort_keys=True)


def to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["k", "t_re", "t_im", "tau_re", "tau_im", "side", "mode", "N", "defect"])
    for r in rows:
        w.writerow([r.k, r.t.real, r.t.imag, r.tau.real, r.tau.imag, r.side, r.mode, r.N, f"{r.defect:.6e}"])
    return buf.getvalue()
