"""Sample-path generation for the planar process (X1, X2) on uniform grids.

Three backends:

* Cholesky: exact joint factorization, O(n^3), the small-scale oracle.
* Spectral: synthesis from the one-sided spectral densities; the only
  backend that returns derivative samples X2' consistent with X2 (same
  frequency noise), and the one that realizes the regression construction
  X1 = rho1 X2' + rho2 Z literally.
* Circulant: FFT embedding of the (block) covariance, O(n log n); exact
  up to clipping of negative embedding eigenvalues, which is recorded.

Randomness is counter-based (Philox) keyed by (seed, stream): replication
``stream`` of a Monte Carlo run is reproducible independently of execution
order or worker count.
"""
from __future__ import annotations

import io
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .covmodel import CovarianceModel, ModelClass, classify
from .errors import (CapabilityError, ModelError, ParameterError,
                     ResolutionError, SamplerError)

__all__ = [
    "GridSpec",
    "SamplePath",
    "CholeskySampler",
    "SpectralSampler",
    "CirculantSampler",
    "sample_cholesky",
    "sample_spectral",
    "sample_circulant",
    "smooth_path",
    "bump_kernel",
    "export_path_csv",
    "load_path_csv",
    "export_path_npz",
    "load_path_npz",
    "model_spec_hash",
]

CHOLESKY_N_CAP = 4096
_EIG_TOL = -1e-10
_CLIP_WARN = 1e-8
_CLIP_FAIL = 1e-3


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid of n points spanning [0, T]."""

    T: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError("grid needs at least 2 points")
        if self.T <= 0:
            raise ParameterError("T must be positive")

    @property
    def dt(self) -> float:
        return self.T / (self.n - 1)

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n)

    @classmethod
    def from_dt(cls, T: float, dt: float) -> "GridSpec":
        return cls(T=T, n=int(round(T / dt)) + 1)


@dataclass(frozen=True)
class SamplePath:
    grid: GridSpec
    x1: np.ndarray
    x2: np.ndarray
    dx2: Optional[np.ndarray] = None
    seed: int = 0
    stream: int = 0
    backend: str = "?"
    meta: dict = field(default_factory=dict)

    def times(self) -> np.ndarray:
        return self.grid.times()


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & (2 ** 64 - 1),
                                                     stream & (2 ** 64 - 1)]))


def model_spec_hash(model: CovarianceModel) -> str:
    """Short stable hash of the model construction metadata."""
    import hashlib
    payload = json.dumps(model.meta, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# ----------------------------------------------------------------------
# Cholesky backend
# ----------------------------------------------------------------------
class CholeskySampler:
    """Exact sampler from the dense 2n x 2n joint covariance.

    The cross block is assembled entry-wise from r12 with the signed lag
    (E[X1(t_i) X2(t_j)] = r12(t_i - t_j)), which matters whenever r12 is
    not even.
    """

    def __init__(self, model: CovarianceModel, grid: GridSpec):
        if grid.n > CHOLESKY_N_CAP:
            raise ParameterError(
                f"cholesky backend capped at n = {CHOLESKY_N_CAP} points, got {grid.n}")
        self.model = model
        self.grid = grid
        t = grid.times()
        lag = t[:, None] - t[None, :]
        r1 = np.asarray(model.r1(np.abs(lag)), float)
        r2 = np.asarray(model.r2(np.abs(lag)), float)
        c = np.asarray(model.r12(lag), float)
        if np.max(np.abs(r1)) > 1.0 + 1e-12 or np.max(np.abs(r2)) > 1.0 + 1e-12:
            raise ModelError("|r(t)| > 1: not a correlation function")
        cov = np.block([[r1, c], [c.T, r2]])
        self.jitter = 0.0
        try:
            self._chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            emin = float(np.linalg.eigvalsh(cov).min())
            if emin < _EIG_TOL * max(1.0, float(np.max(np.diag(cov)))):
                raise ModelError(
                    f"joint covariance indefinite: smallest eigenvalue {emin:.3e}")
            self.jitter = 1e-12
            cov[np.diag_indices_from(cov)] += self.jitter
            self._chol = np.linalg.cholesky(cov)

    def sample(self, seed: int, stream: int = 0) -> SamplePath:
        n = self.grid.n
        z = _rng(seed, stream).standard_normal(2 * n)
        x = self._chol @ z
        return SamplePath(grid=self.grid, x1=x[:n], x2=x[n:], seed=seed,
                          stream=stream, backend="cholesky",
                          meta={"jitter": self.jitter,
                                "model": model_spec_hash(self.model)})

    def sample_refined(self, seed: int, stream: int = 0):
        """Sample on the dyadic refinement of the grid and restrict to every
        second point: the nested pair shares its randomness exactly (the
        coarse path is the fine one evaluated on the coarse grid)."""
        if not hasattr(self, "_fine_sampler"):
            self._fine_sampler = CholeskySampler(
                self.model, GridSpec(T=self.grid.T, n=2 * self.grid.n - 1))
        fine = self._fine_sampler.sample(seed, stream)
        coarse = SamplePath(grid=self.grid, x1=fine.x1[::2], x2=fine.x2[::2],
                            seed=seed, stream=stream, backend="cholesky",
                            meta={**fine.meta, "restricted": True})
        return coarse, fine


# ----------------------------------------------------------------------
# spectral backend
# ----------------------------------------------------------------------
class SpectralSampler:
    """Harmonic synthesis X2(t) = sum_j sqrt(f2(l_j) dl) [xi_j cos(l_j t)
    + eta_j sin(l_j t)], with the consistent derivative using the same
    (xi, eta).  X1 is built per the model class: independent noise for
    independent models, rho1 X2' + rho2 Z for the regression family.
    """

    def __init__(self, model: CovarianceModel, grid: GridSpec,
                 n_freq: int = 4096, lambda_max: Optional[float] = None):
        if n_freq < 256:
            raise ParameterError("n_freq must be at least 256")
        if model.f2 is None:
            raise CapabilityError("spectral backend needs f2")
        self.model = model
        self.grid = grid
        self.construction = model.meta.get("construction")
        if self.construction not in ("iid", "independent", "regression"):
            raise CapabilityError(
                "spectral backend supports iid/independent/regression models")
        if self.construction in ("iid", "independent") and model.f1 is None:
            raise CapabilityError("independent spectral synthesis needs f1")
        self.n_freq = n_freq
        lam_max = lambda_max if lambda_max is not None else self._default_lambda_max()
        dl = lam_max / n_freq
        self.lam = (np.arange(n_freq) + 0.5) * dl
        t = grid.times()
        self.cos = np.cos(np.outer(self.lam, t))
        self.sin = np.sin(np.outer(self.lam, t))
        self.amp2 = np.sqrt(np.asarray(model.f2(self.lam), float) * dl)
        mass2 = float(np.sum(self.amp2 ** 2))
        self.trunc2 = abs(1.0 - mass2)
        if self.trunc2 > 0.05:
            raise ModelError(
                f"f2 mass on the frequency window is {mass2:.4f}; spectrum "
                "unnormalized or lambda_max too small")
        if self.construction == "regression":
            fz = self._rz_density()
            self.amp_other = np.sqrt(np.asarray(fz(self.lam), float) * dl)
        else:
            self.amp_other = np.sqrt(np.asarray(model.f1(self.lam), float) * dl)
        self.trunc_other = abs(1.0 - float(np.sum(self.amp_other ** 2)))

    def _default_lambda_max(self):
        # expand until the tail mass of f2 is negligible
        from .quadrature import adaptive_quad
        lam = 8.0
        for _ in range(8):
            mass, _ = adaptive_quad(lambda x: float(self.model.f2(x)), 0.0, lam,
                                    1e-10, 1e-10)
            if abs(1.0 - mass) < 1e-6:
                return lam
            lam *= 2.0
        return lam

    def _rz_density(self):
        from .covmodel import family_from_name
        rz = dict(self.model.meta["rz"])
        fam = family_from_name(rz.pop("family"), **rz)
        if fam.f is None:
            raise CapabilityError("regression spectral synthesis needs the rZ spectrum")
        return fam.f

    def sample(self, seed: int, stream: int = 0) -> SamplePath:
        rng = _rng(seed, stream)
        xi, eta = rng.standard_normal((2, self.n_freq))
        x2 = (self.amp2 * xi) @ self.cos + (self.amp2 * eta) @ self.sin
        dx2 = (self.amp2 * self.lam * eta) @ self.cos - (self.amp2 * self.lam * xi) @ self.sin
        xo, eo = rng.standard_normal((2, self.n_freq))
        other = (self.amp_other * xo) @ self.cos + (self.amp_other * eo) @ self.sin
        if self.construction == "regression":
            rho1, rho2 = self.model.meta["rho1"], self.model.meta["rho2"]
            x1 = rho1 * dx2 + rho2 * other
        else:
            x1 = other
        return SamplePath(grid=self.grid, x1=x1, x2=x2, dx2=dx2, seed=seed,
                          stream=stream, backend="spectral",
                          meta={"n_freq": self.n_freq,
                                "covariance_truncation": max(self.trunc2, self.trunc_other),
                                "model": model_spec_hash(self.model)})

    def sample_refined(self, seed: int, stream: int = 0):
        """Same frequency noise, evaluated on the dyadic grid refinement."""
        coarse = self.sample(seed, stream)
        if not hasattr(self, "_fine_sampler"):
            self._fine_sampler = SpectralSampler(
                self.model, GridSpec(T=self.grid.T, n=2 * self.grid.n - 1),
                n_freq=self.n_freq, lambda_max=float(self.lam[-1] + self.lam[0]))
        return coarse, self._fine_sampler.sample(seed, stream)


# ----------------------------------------------------------------------
# circulant backend
# ----------------------------------------------------------------------
class CirculantSampler:
    """Circulant embedding; scalar per coordinate for independent models,
    2x2 block (Hermitian spectral matrices, per-frequency factorization)
    otherwise.  Negative embedding eigenvalues trigger padding doubling up
    to 8x, after which remaining negative mass is clipped and recorded."""

    def __init__(self, model: CovarianceModel, grid: GridSpec):
        self.model = model
        self.grid = grid
        self.independent = classify(model) in (ModelClass.INDEPENDENT, ModelClass.IID)
        self.clipped_mass = 0.0
        pad = 1
        while True:
            ok = self._build(pad)
            if ok or pad >= 8:
                break
            pad *= 2
        if self.clipped_mass > _CLIP_FAIL:
            raise SamplerError(
                f"circulant embedding clipped {self.clipped_mass:.2e} relative "
                "negative mass; model unsuitable for this backend")
        if self.clipped_mass > _CLIP_WARN:
            warnings.warn(f"circulant embedding clipped mass {self.clipped_mass:.2e}",
                          RuntimeWarning)

    def _lags(self, pad):
        n = self.grid.n
        L = 1 << int(math.ceil(math.log2(max(2 * (n - 1), 2) * pad)))
        k = np.arange(L)
        tau = np.where(k <= L // 2, k, k - L) * self.grid.dt
        return L, tau

    def _build(self, pad) -> bool:
        L, tau = self._lags(pad)
        self.L = L
        if self.independent:
            lam1 = np.fft.fft(np.asarray(self.model.r1(np.abs(tau)), float)).real
            lam2 = np.fft.fft(np.asarray(self.model.r2(np.abs(tau)), float)).real
            neg = -(lam1[lam1 < 0].sum() + lam2[lam2 < 0].sum())
            tot = np.abs(lam1).sum() + np.abs(lam2).sum()
            self.clipped_mass = float(neg / tot)
            self._amp1 = np.sqrt(np.clip(lam1, 0.0, None) / L)
            self._amp2 = np.sqrt(np.clip(lam2, 0.0, None) / L)
            return self.clipped_mass <= 1e-12  # float-noise negativity is fine
        # block case: per-frequency 2x2 Hermitian PSD factorization; the
        # synthesis below realizes E[X_j X_l^T] = c_{l-j}, so the block
        # sequence carries r12 transposed: (c_k)_{12} = r12(-tau_k)
        g11 = np.fft.fft(np.asarray(self.model.r1(np.abs(tau)), float))
        g22 = np.fft.fft(np.asarray(self.model.r2(np.abs(tau)), float))
        g12 = np.fft.fft(np.asarray(self.model.r12(-tau), float))
        g21 = np.fft.fft(np.asarray(self.model.r12(tau), float))
        G = np.empty((L, 2, 2), complex)
        G[:, 0, 0] = g11
        G[:, 1, 1] = g22
        G[:, 0, 1] = g12
        G[:, 1, 0] = g21
        G = 0.5 * (G + np.conj(np.transpose(G, (0, 2, 1))))
        w, v = np.linalg.eigh(G)
        neg = float(-w[w < 0].sum())
        tot = float(np.abs(w).sum())
        self.clipped_mass = neg / tot
        w = np.clip(w, 0.0, None)
        self._block_fac = v * np.sqrt(w / L)[:, None, :]
        return self.clipped_mass <= 1e-12

    def sample(self, seed: int, stream: int = 0) -> SamplePath:
        n = self.grid.n
        rng = _rng(seed, stream)
        meta = {"clipped_mass": self.clipped_mass,
                "model": model_spec_hash(self.model)}
        if self.independent:
            w1 = rng.standard_normal(self.L) + 1j * rng.standard_normal(self.L)
            w2 = rng.standard_normal(self.L) + 1j * rng.standard_normal(self.L)
            x1 = np.fft.fft(self._amp1 * w1)[:n].real
            x2 = np.fft.fft(self._amp2 * w2)[:n].real
        else:
            w = rng.standard_normal((self.L, 2)) + 1j * rng.standard_normal((self.L, 2))
            y = np.einsum("lij,lj->li", self._block_fac, w)
            z = np.fft.fft(y, axis=0)[:n]
            x1, x2 = z[:, 0].real, z[:, 1].real
        return SamplePath(grid=self.grid, x1=x1, x2=x2, seed=seed,
                          stream=stream, backend="circulant", meta=meta)

    def sample_batch(self, seed: int, streams) -> np.ndarray:
        """(len(streams), 2, n) array of paths, bit-identical to calling
        sample() per stream; the FFTs are batched for throughput."""
        m, n = len(streams), self.grid.n
        out = np.empty((m, 2, n))
        if self.independent:
            W = np.empty((m, 2, self.L), complex)
            for i, s in enumerate(streams):
                rng = _rng(seed, s)
                W[i, 0] = rng.standard_normal(self.L) + 1j * rng.standard_normal(self.L)
                W[i, 1] = rng.standard_normal(self.L) + 1j * rng.standard_normal(self.L)
            out[:, 0] = np.fft.fft(self._amp1 * W[:, 0], axis=-1)[:, :n].real
            out[:, 1] = np.fft.fft(self._amp2 * W[:, 1], axis=-1)[:, :n].real
        else:
            for i, s in enumerate(streams):
                rng = _rng(seed, s)
                w = rng.standard_normal((self.L, 2)) + 1j * rng.standard_normal((self.L, 2))
                y = np.einsum("lij,lj->li", self._block_fac, w)
                z = np.fft.fft(y, axis=0)[:n]
                out[i, 0], out[i, 1] = z[:, 0].real, z[:, 1].real
        return out


# ----------------------------------------------------------------------
# spec-surface wrappers
# ----------------------------------------------------------------------
def sample_cholesky(model, grid, seed, stream=0) -> SamplePath:
    return CholeskySampler(model, grid).sample(seed, stream)


def sample_spectral(model, grid, seed, stream=0, n_freq=4096) -> SamplePath:
    return SpectralSampler(model, grid, n_freq=n_freq).sample(seed, stream)


def sample_circulant(model, grid, seed, stream=0) -> SamplePath:
    return CirculantSampler(model, grid).sample(seed, stream)


# ----------------------------------------------------------------------
# pathwise smoothing
# ----------------------------------------------------------------------
def bump_kernel(u):
    """Compactly supported smooth bump on (-1, 1), unnormalized."""
    u = np.asarray(u, float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(np.abs(u) < 1.0,
                        np.exp(-1.0 / np.maximum(1.0 - u * u, 1e-300)), 0.0)


def smooth_path(path: SamplePath, epsilon: float, kernel=bump_kernel) -> SamplePath:
    """Replace x2 by its discrete convolution with the mass-normalized
    kernel psi_eps(t) = psi(t/eps)/eps; x1 untouched.  The path is
    reflected at both ends to handle the boundary."""
    dt = path.grid.dt
    if epsilon < 2.0 * dt:
        raise ResolutionError(
            f"epsilon = {epsilon:g} below 2*dt = {2 * dt:g}: kernel not "
            "resolvable on the grid")
    half = int(math.ceil(epsilon / dt))
    u = np.arange(-half, half + 1) * dt / epsilon
    w = kernel(u)
    w = w / w.sum()
    x2 = path.x2
    padded = np.concatenate([x2[half:0:-1], x2, x2[-2:-half - 2:-1]])
    sm = np.convolve(padded, w, mode="valid")
    return replace(path, x2=sm,
                   meta={**path.meta, "smoothed_epsilon": epsilon,
                         "boundary": "reflect"})


# ----------------------------------------------------------------------
# path import/export
# ----------------------------------------------------------------------
def export_path_csv(path: SamplePath, fileobj) -> None:
    """CSV columns (t, x1, x2[, dx2]); header comments record the model
    hash, seed, backend and diagnostics."""
    close = False
    if isinstance(fileobj, (str, bytes)):
        fileobj = open(fileobj, "w")
        close = True
    try:
        hdr = {"seed": path.seed, "stream": path.stream,
               "backend": path.backend, **path.meta}
        fileobj.write(f"# windlab-path {json.dumps(hdr, sort_keys=True, default=str)}\n")
        cols = "t,x1,x2" + (",dx2" if path.dx2 is not None else "")
        fileobj.write(cols + "\n")
        t = path.times()
        data = [t, path.x1, path.x2] + ([path.dx2] if path.dx2 is not None else [])
        for row in zip(*data):
            fileobj.write(",".join(f"{v:.17g}" for v in row) + "\n")
    finally:
        if close:
            fileobj.close()


def export_path_npz(path: SamplePath, file) -> None:
    """Binary column format: npz with t/x1/x2[/dx2] arrays and a JSON
    header string carrying the same metadata as the CSV export."""
    hdr = {"seed": path.seed, "stream": path.stream, "backend": path.backend,
           **path.meta}
    arrays = {"t": path.times(), "x1": path.x1, "x2": path.x2,
              "header": np.array(json.dumps(hdr, sort_keys=True, default=str))}
    if path.dx2 is not None:
        arrays["dx2"] = path.dx2
    np.savez(file, **arrays)


def load_path_npz(file) -> SamplePath:
    with np.load(file, allow_pickle=False) as data:
        t = data["t"]
        meta = json.loads(str(data["header"]))
        grid = GridSpec(T=float(t[-1] - t[0]), n=len(t))
        return SamplePath(grid=grid, x1=data["x1"], x2=data["x2"],
                          dx2=data["dx2"] if "dx2" in data else None,
                          seed=int(meta.get("seed", 0)),
                          stream=int(meta.get("stream", 0)),
                          backend=meta.get("backend", "file"), meta=meta)


def load_path_csv(fileobj) -> SamplePath:
    """Inverse of export_path_csv; accepts externally generated files with
    the same column layout."""
    close = False
    if isinstance(fileobj, (str, bytes)):
        fileobj = open(fileobj)
        close = True
    try:
        text = fileobj.read()
    finally:
        if close:
            fileobj.close()
    meta = {}
    lines = text.strip().splitlines()
    i = 0
    while lines[i].startswith("#"):
        if lines[i].startswith("# windlab-path "):
            meta = json.loads(lines[i][len("# windlab-path "):])
        i += 1
    cols = lines[i].split(",")
    arr = np.loadtxt(io.StringIO("\n".join(lines[i + 1:])), delimiter=",")
    if arr.ndim == 1:
        arr = arr[None, :]
    t = arr[:, 0]
    grid = GridSpec(T=float(t[-1] - t[0]), n=len(t))
    dx2 = arr[:, 3] if "dx2" in cols else None
    return SamplePath(grid=grid, x1=arr[:, 1], x2=arr[:, 2], dx2=dx2,
                      seed=int(meta.get("seed", 0)),
                      stream=int(meta.get("stream", 0)),
                      backend=meta.get("backend", "file"), meta=meta)
