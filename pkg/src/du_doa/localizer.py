"""Broadband diagonal-unloading steered response power and DOA extraction.

For one bin with CPSD ``Phi`` the unloaded matrix is ``T = tr(Phi) I - Phi``
and the narrowband power towards steering vector ``a`` is
``1 / (a^H T a)``. Each bin's map over the grid is divided by its own
maximum before the bins are summed.

The grid search never forms ``a^H T a`` by expanding the product. ``T`` is
PSD (the largest eigenvalue of a PSD matrix is at most its trace), so with a
Cholesky factor ``T = L L^H``

    a^H T a = |L^H a|^2

is a sum of nonnegative terms. The small denominators near the source
direction are therefore computed without cancellation, which is what keeps
the single-precision mode usable on large grids.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .array import ArrayGeometry, Direction, DirectionGrid, SteeringTable, steering_table
from .errors import ConfigurationError
from .spectral import CpsdStack

EPS_REL = 1e-12


@dataclass(frozen=True)
class SrpMap:
    frame_index: int
    values: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class DoaEstimate:
    frame_index: int
    time_s: float
    direction: Direction
    vad: bool
    grid_index: int = -1


def unloading_floor(trace: float, n_mics: int) -> float:
    return EPS_REL * max(trace * n_mics, 1.0)


def du_power(cpsd_bin: np.ndarray, steering: np.ndarray) -> float:
    """Narrowband DU power ``1 / max(eps, a^H (tr(Phi) I - Phi) a)`` for one bin."""
    phi = np.asarray(cpsd_bin, dtype=np.complex128)
    a = np.asarray(steering, dtype=np.complex128)
    m = phi.shape[0]
    tr = float(np.trace(phi).real)
    unloaded = tr * np.eye(m) - phi
    q = np.vdot(a, unloaded @ a).real
    return 1.0 / max(unloading_floor(tr, m), q)


def default_workers() -> int:
    env = os.environ.get("DU_DOA_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"DU_DOA_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


SHIFT_REL = 1e-10


def _unloaded_factors(matrices: np.ndarray, dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    """Real-form square-root factors of ``tr I - Phi`` for every bin.

    Returns ``(W, traces)`` with ``W`` of shape ``(B, 2M, 2M)`` in ``dtype``
    such that, for ``u = [Re a, Im a]`` and ``|a|^2 = M``,
    ``|u W|^2 = a^H (tr I - Phi) a + SHIFT_REL * tr * M``.

    The factor is a Cholesky factor of ``tr I - Phi + SHIFT_REL tr I``; the
    shift makes the (possibly singular) unloaded matrix positive definite
    and is subtracted again by the caller. Input that is not PSD falls back
    to an eigendecomposition with negative eigenvalues clipped.
    """
    traces = np.einsum("bmm->b", matrices).real
    m = matrices.shape[-1]
    scale = np.where(traces > 0, traces, 1.0)
    unloaded = (traces * (1.0 + SHIFT_REL))[:, None, None] * np.eye(m) - matrices
    try:
        f = np.linalg.cholesky(unloaded)
    except np.linalg.LinAlgError:
        lam, vec = np.linalg.eigh(unloaded)
        mu = np.clip(lam, SHIFT_REL * scale[:, None], None)
        f = vec * np.sqrt(mu)[:, None, :]
    fr, fi = f.real, f.imag
    w = np.concatenate(
        [np.concatenate([fr, -fi], axis=2), np.concatenate([fi, fr], axis=2)], axis=1
    )
    return np.ascontiguousarray(w, dtype=dtype), traces


def normalized_bin_maps(
    cpsd: CpsdStack, table: SteeringTable, workers: int = 1
) -> np.ndarray:
    """Per-bin DU maps divided by their maxima, shape ``(B, D)``.

    Rows of silent bins (zero trace) are all zero.
    """
    mats = np.asarray(cpsd.matrices, dtype=np.complex128)
    n_bins, n_dirs, n_mics = table.shape
    if mats.shape != (n_bins, n_mics, n_mics):
        raise ConfigurationError(
            f"CPSD stack {mats.shape} does not match steering table "
            f"({n_bins} bins, {n_mics} mics)"
        )
    dtype = table.cs.dtype
    w, traces = _unloaded_factors(mats, dtype)
    out = np.zeros((n_bins, n_dirs))
    live = np.flatnonzero(traces > 0)

    def work(chunk: np.ndarray) -> None:
        z = np.empty((n_dirs, 2 * n_mics), dtype=dtype)
        for b in chunk:
            np.matmul(table.cs[b], w[b], out=z)
            denom = np.einsum("dk,dk->d", z, z).astype(np.float64)
            denom -= SHIFT_REL * traces[b] * n_mics
            np.maximum(denom, unloading_floor(traces[b], n_mics), out=denom)
            # P / max(P) with P = 1 / denom
            np.divide(denom.min(), denom, out=out[b])

    if workers <= 1 or live.size < 2:
        work(live)
    else:
        chunks = [c for c in np.array_split(live, workers) if c.size]
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(work, chunks))
    return out


def broadband_srp(
    cpsd: CpsdStack, grid: DirectionGrid, table: SteeringTable, workers: int = 1
) -> SrpMap:
    """Sum of uniform-norm-normalized narrowband DU maps over the band."""
    if table.shape[1] != len(grid):
        raise ConfigurationError("steering table does not match the direction grid")
    per_bin = normalized_bin_maps(cpsd, table, workers)
    # row-by-row reduction in bin order keeps the result independent of `workers`
    values = np.add.reduce(per_bin, axis=0)
    return SrpMap(cpsd.frame_index, values)


def argmax_doa(
    srp: SrpMap, grid: DirectionGrid, *, time_s: float = 0.0, vad: bool = True
) -> DoaEstimate:
    """Grid direction of the map maximum; ties go to the lowest index."""
    if srp.values.size == 0:
        raise ConfigurationError("empty SRP map")
    idx = int(np.argmax(srp.values))
    return DoaEstimate(srp.frame_index, time_s, grid[idx], vad, idx)


class DuLocalizer:
    """Holds the steering table for one (geometry, grid, band) setup.

    ``dtype=np.float32`` halves table memory and roughly doubles grid-search
    speed; the factored denominators keep it accurate to ~1e-6 relative.
    """

    def __init__(
        self,
        geometry: ArrayGeometry,
        grid: DirectionGrid,
        freqs_hz,
        *,
        dtype=np.float64,
        workers: int | None = None,
    ):
        self.geometry = geometry
        self.grid = grid
        self.table = steering_table(geometry, grid, freqs_hz, dtype=dtype)
        self.workers = default_workers() if workers is None else max(1, int(workers))

    def srp(self, cpsd: CpsdStack) -> SrpMap:
        return broadband_srp(cpsd, self.grid, self.table, self.workers)

    def localize(self, cpsd: CpsdStack, *, time_s: float = 0.0, vad: bool = True) -> tuple[DoaEstimate, SrpMap]:
        srp = self.srp(cpsd)
        return argmax_doa(srp, self.grid, time_s=time_s, vad=vad), srp
