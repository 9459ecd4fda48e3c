"""Monte Carlo / quasi-Monte Carlo estimators over the Hilbert-Schmidt body.

Every estimator here follows one discipline:

* the sample stream is partitioned into fixed-size batches of ``2**20``
  points addressed by ``(replicate, batch_index)``;
* each batch reduces to *integer* tallies (counts of positive, separable,
  per-bin, per-grid-point events);
* tallies merge in sorted key order.

Because batch boundaries are fixed by ``n`` alone and integer sums do not
depend on execution order, results are byte-identical no matter how many
worker threads execute the batches.  Statistics (means, standard errors)
are formed only after the merge.

Probabilities are conditional on positivity: points of the parameter cube
that land outside the positive-semidefinite body are generated but excluded
from the denominator, mirroring how the flat measure on the cube restricts
to the normalized Hilbert-Schmidt measure on states.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .errors import InsufficientSamplesError
from .qstate import (
    Z_PAIRS,
    assemble_states,
    corr_det3,
    pt_corr_det4,
    xi_from_diag,
    z_psd_mask,
)
from .sampling import SequenceSpec, cube_to_bloore_batch, next_points
from .sepfun import DesfCurve, eval_desf_array

__all__ = [
    "EstimateResult",
    "DesfHistogram",
    "MinorSelector",
    "MINOR_BRANCH_TABLE",
    "minor_event_mask",
    "estimate_sep_probability",
    "estimate_abs_sep_probability",
    "estimate_desf",
    "estimate_minor_desf",
    "CurveComparison",
    "compare_curves",
    "binomial_two_sided_pvalue",
]

#: Fixed batch size; a power of two so low-discrepancy prefixes stay balanced.
BATCH_SIZE = 1 << 20


@dataclass(frozen=True)
class EstimateResult:
    """A conditional-probability estimate.

    ``n_effective`` counts the samples that satisfied the conditioning
    event (the denominator); ``n_total`` counts raw stream points.
    ``ci95`` is the two-standard-error interval.  ``replicate_means`` is
    populated only when the estimate pooled independent replicates.
    """

    mean: float
    stderr: float
    n_effective: int
    n_total: int
    ci95: tuple
    replicate_means: tuple = None

    @classmethod
    def from_counts(cls, hits: int, n_eff: int, n_total: int) -> "EstimateResult":
        if n_eff <= 0:
            raise InsufficientSamplesError(
                "no samples satisfied the conditioning event; increase n"
            )
        p = hits / n_eff
        se = math.sqrt(p * (1.0 - p) / n_eff)
        return cls(
            mean=p,
            stderr=se,
            n_effective=n_eff,
            n_total=n_total,
            ci95=(p - 2.0 * se, p + 2.0 * se),
        )


def _batch_plan(n: int):
    """Fixed partition of ``range(n)`` into (index, offset, size) batches."""
    plan = []
    idx = 0
    off = 0
    while off < n:
        size = min(BATCH_SIZE, n - off)
        plan.append((idx, off, size))
        idx += 1
        off += size
    return plan


def _run_batches(tasks, kernel, workers: int):
    """Run ``kernel(spec, offset, size)`` for every task and merge tallies.

    ``tasks`` is a list of ``(key, spec, offset, size)``; the merge walks
    keys in sorted order and sums the tally tuples elementwise into a dict
    keyed by the first element of ``key`` (the replicate id).
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    results = {}
    if workers == 1:
        for key, spec, off, size in tasks:
            results[key] = kernel(spec, off, size)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                key: pool.submit(kernel, spec, off, size)
                for key, spec, off, size in tasks
            }
            for key, fut in futures.items():
                results[key] = fut.result()
    merged = {}
    for key in sorted(results):
        rep = key[0]
        tally = results[key]
        if rep not in merged:
            merged[rep] = list(tally)
        else:
            acc = merged[rep]
            for i, part in enumerate(tally):
                acc[i] = acc[i] + part
    return merged


def _replicate_specs(spec: SequenceSpec, replicates: int):
    if replicates == 1:
        return [spec]
    return [spec.spawn(r) for r in range(replicates)]


def _default_replicates(spec: SequenceSpec) -> int:
    # Scrambled nets have no per-point error theory; independent
    # re-scramblings supply the spread.  A single pseudorandom or
    # unscrambled stream gets the binomial error instead.
    if spec.engine == "low_discrepancy" and spec.scramble:
        return 8
    return 1


def _pool_replicates(per_rep, n_total: int) -> EstimateResult:
    """Combine per-replicate (hits, n_eff) pairs into one estimate."""
    means = []
    n_eff = 0
    for hits, eff in per_rep:
        if eff <= 0:
            raise InsufficientSamplesError(
                "a replicate produced no conditioning samples; increase n"
            )
        means.append(hits / eff)
        n_eff += eff
    means = np.asarray(means)
    mean = float(means.mean())
    se = float(means.std(ddof=1) / math.sqrt(len(means)))
    return EstimateResult(
        mean=mean,
        stderr=se,
        n_effective=n_eff,
        n_total=n_total,
        ci95=(mean - 2.0 * se, mean + 2.0 * se),
        replicate_means=tuple(float(m) for m in means),
    )


def _conditional_estimate(spec, n, workers, replicates, kernel) -> EstimateResult:
    """Shared driver for scalar conditional-probability estimators."""
    if spec.dimension != 9:
        raise ValueError("state estimators need a 9-dimensional sequence spec")
    if n < 1:
        raise ValueError("n must be >= 1")
    if replicates is None:
        replicates = _default_replicates(spec)
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    specs = _replicate_specs(spec, replicates)
    n_per = n // replicates
    if n_per < 1:
        raise ValueError(f"n={n} is too small for {replicates} replicates")
    tasks = [
        ((rep, idx), specs[rep], off, size)
        for rep in range(replicates)
        for idx, off, size in _batch_plan(n_per)
    ]
    merged = _run_batches(tasks, kernel, workers)
    n_total = n_per * replicates
    if replicates == 1:
        hits, eff = merged[0][1], merged[0][0]
        return EstimateResult.from_counts(hits, eff, n_total)
    return _pool_replicates(
        [(merged[r][1], merged[r][0]) for r in range(replicates)], n_total
    )


def _sep_kernel(spec, offset, size):
    pts = next_points(spec, size, offset).points
    diag, z = cube_to_bloore_batch(pts)
    psd = z_psd_mask(z)
    n_psd = int(psd.sum())
    if n_psd == 0:
        return (0, 0)
    xi = xi_from_diag(diag[psd])
    n_sep = int((pt_corr_det4(z[psd], xi) >= 0.0).sum())
    return (n_psd, n_sep)


def _abs_sep_kernel(spec, offset, size):
    pts = next_points(spec, size, offset).points
    diag, z = cube_to_bloore_batch(pts)
    psd = z_psd_mask(z)
    n_psd = int(psd.sum())
    if n_psd == 0:
        return (0, 0)
    ev = np.linalg.eigvalsh(assemble_states(diag[psd], z[psd]))
    gap = ev[:, 3] - ev[:, 1] - 2.0 * np.sqrt(np.maximum(ev[:, 2] * ev[:, 0], 0.0))
    n_abs = int((gap <= 0.0).sum())
    return (n_psd, n_abs)


def estimate_sep_probability(
    spec: SequenceSpec, n: int, *, workers: int = 1, replicates: int = None
) -> EstimateResult:
    """P(separable | positive) under the Hilbert-Schmidt measure.

    For two qubits separability is exactly "the partial transpose has
    non-negative determinant", evaluated here on correlation coordinates so
    no eigensolve is needed.  ``n`` is the total cube-point budget, split
    evenly when replicates are pooled.
    """
    return _conditional_estimate(spec, n, workers, replicates, _sep_kernel)


def estimate_abs_sep_probability(
    spec: SequenceSpec, n: int, *, workers: int = 1, replicates: int = None
) -> EstimateResult:
    """P(absolutely separable | positive): separable in every global basis.

    Uses the spectral criterion l1 - l3 - 2 sqrt(l2 l4) <= 0 on the ordered
    eigenvalues, so each positive sample costs one symmetric eigensolve.
    """
    return _conditional_estimate(spec, n, workers, replicates, _abs_sep_kernel)


# ---------------------------------------------------------------------------
# Diagonal-entry separability function (conditional on xi)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DesfHistogram:
    """Binned estimate of P(separable | positive, xi).

    Counts falling outside the binned range are kept in the ``*_outside``
    totals so that ``(sum n_sep + n_sep_outside) / (sum n_psd +
    n_psd_outside)`` reproduces the unconditional estimate exactly.
    """

    bin_edges: np.ndarray
    n_psd: np.ndarray
    n_sep: np.ndarray
    n_psd_outside: int
    n_sep_outside: int
    n_total: int

    @property
    def xi_mid(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def ratio(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.n_psd > 0, self.n_sep / self.n_psd, np.nan)

    @property
    def stderr(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            r = self.ratio
            return np.where(
                self.n_psd > 0, np.sqrt(r * (1.0 - r) / self.n_psd), np.nan
            )

    def bin_index(self, x: float) -> int:
        """Index of the half-open bin [lo, hi) containing ``x``."""
        i = int(np.searchsorted(self.bin_edges, x, side="right")) - 1
        if not 0 <= i < len(self.n_psd):
            raise ValueError(f"{x} lies outside the binned range")
        return i

    def to_curve(self) -> DesfCurve:
        """The histogram as an empirical curve (empty bins become 0)."""
        values = np.nan_to_num(self.ratio, nan=0.0)
        return DesfCurve.empirical(self.bin_edges, values)


def _make_desf_kernel(edges: np.ndarray):
    nbins = len(edges) - 1
    lo, hi = edges[0], edges[-1]

    def kernel(spec, offset, size):
        pts = next_points(spec, size, offset).points
        diag, z = cube_to_bloore_batch(pts)
        psd = z_psd_mask(z)
        xi = xi_from_diag(diag[psd])
        sep = pt_corr_det4(z[psd], xi) >= 0.0
        inside = (xi >= lo) & (xi < hi)
        idx = np.searchsorted(edges, xi[inside], side="right") - 1
        h_psd = np.bincount(idx, minlength=nbins).astype(np.int64)
        h_sep = np.bincount(idx[sep[inside]], minlength=nbins).astype(np.int64)
        out_psd = int((~inside).sum())
        out_sep = int(sep[~inside].sum())
        return (h_psd, h_sep, out_psd, out_sep)

    return kernel


def estimate_desf(
    spec: SequenceSpec,
    n: int,
    *,
    bins: int = 101,
    ximax: float = 4.0,
    workers: int = 1,
) -> DesfHistogram:
    """Histogram estimate of the separability function of xi.

    Bins are uniform on ``[-ximax, ximax]``.  An odd ``bins`` puts xi = 0 at
    the center of the middle bin, which is what the intercept comparison
    wants.  Always single-stream (no replicate pooling): the per-bin counts
    are themselves the statistic.
    """
    if spec.dimension != 9:
        raise ValueError("the DESF estimator needs a 9-dimensional sequence spec")
    if n < 1:
        raise ValueError("n must be >= 1")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    if not (np.isfinite(ximax) and ximax > 0):
        raise ValueError("ximax must be positive and finite")
    edges = np.linspace(-ximax, ximax, bins + 1)
    kernel = _make_desf_kernel(edges)
    tasks = [((0, idx), spec, off, size) for idx, off, size in _batch_plan(n)]
    merged = _run_batches(tasks, kernel, workers)[0]
    h_psd, h_sep, out_psd, out_sep = merged
    return DesfHistogram(
        bin_edges=edges,
        n_psd=h_psd,
        n_sep=h_sep,
        n_psd_outside=out_psd,
        n_sep_outside=out_sep,
        n_total=n,
    )


# ---------------------------------------------------------------------------
# Single principal minors of the partial transpose
# ---------------------------------------------------------------------------

_PAIR_TO_SLOT = {pair: k for k, pair in enumerate(Z_PAIRS)}


@dataclass(frozen=True)
class MinorSelector:
    """Selects one principal minor of the partially transposed matrix.

    ``kind`` is ``"pair"`` (the 2x2 minor on rows/columns ``(i, j)``) or
    ``"delete"`` (the 3x3 minor that removes row/column ``k``).  Indices are
    1-based, matching the usual labelling of the four diagonal entries.
    """

    kind: str
    index: tuple

    def __post_init__(self):
        if self.kind == "pair":
            idx = tuple(int(v) for v in self.index)
            if len(idx) != 2 or not (1 <= idx[0] < idx[1] <= 4):
                raise ValueError(f"pair index must be 1 <= i < j <= 4, got {self.index}")
            object.__setattr__(self, "index", idx)
        elif self.kind == "delete":
            idx = tuple(int(v) for v in self.index)
            if len(idx) != 1 or not 1 <= idx[0] <= 4:
                raise ValueError(f"delete index must be a single 1..4, got {self.index}")
            object.__setattr__(self, "index", idx)
        else:
            raise ValueError(f"kind must be 'pair' or 'delete', got {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "MinorSelector":
        """Parse ``"pair:i,j"`` or ``"delete:k"``."""
        m = re.fullmatch(r"\s*pair\s*:\s*([1-4])\s*,\s*([1-4])\s*", text)
        if m:
            return cls("pair", (int(m.group(1)), int(m.group(2))))
        m = re.fullmatch(r"\s*delete\s*:\s*([1-4])\s*", text)
        if m:
            return cls("delete", (int(m.group(1)),))
        raise ValueError(f"cannot parse minor selector {text!r}")

    @property
    def branch_tag(self) -> str:
        """The closed-form curve this minor's conditional probability follows,
        or None for the four pairs the partial transpose leaves untouched."""
        return MINOR_BRANCH_TABLE.get((self.kind, self.index))

    def __str__(self) -> str:
        if self.kind == "pair":
            return f"pair:{self.index[0]},{self.index[1]}"
        return f"delete:{self.index[0]}"


#: Which closed-form branch each informative minor follows.  The partial
#: transpose moves exactly one correlation into rows/columns (2, 3) scaled by
#: e^xi and one into (1, 4) scaled by e^-xi; minors containing the former
#: follow the right-branch curves, the latter the left-branch ones.
MINOR_BRANCH_TABLE = {
    ("delete", (1,)): "three_right",
    ("delete", (4,)): "three_right",
    ("delete", (2,)): "three_left",
    ("delete", (3,)): "three_left",
    ("pair", (2, 3)): "two_right",
    ("pair", (1, 4)): "two_left",
}


def _pt_slots(z: np.ndarray, xi: float):
    """The six off-diagonal correlations of the partially transposed matrix,
    keyed by 1-based row/column pair."""
    e = math.exp(xi)
    return {
        (1, 2): z[:, 0],
        (1, 3): z[:, 1],
        (1, 4): z[:, 3] / e,
        (2, 3): z[:, 2] * e,
        (2, 4): z[:, 4],
        (3, 4): z[:, 5],
    }


def minor_event_mask(z: np.ndarray, xi: float, minor: MinorSelector) -> np.ndarray:
    """Whether the selected minor of the partial transpose is non-negative.

    Works purely in correlation coordinates: the minor of the full matrix is
    the correlation minor times a positive product of diagonal entries, so
    the sign never depends on which diagonal realizes ``xi``.
    """
    z = np.asarray(z, dtype=float)
    s = _pt_slots(z, float(xi))
    if minor.kind == "pair":
        return np.abs(s[minor.index]) <= 1.0
    k = minor.index[0]
    a, b, c = (i for i in (1, 2, 3, 4) if i != k)
    return corr_det3(s[(a, b)], s[(a, c)], s[(b, c)]) >= 0.0


def _make_minor_kernel(minor: MinorSelector, xi_grid: np.ndarray):
    def kernel(spec, offset, size):
        pts = next_points(spec, size, offset).points
        z = 2.0 * pts - 1.0
        keep = z_psd_mask(z)
        zk = z[keep]
        counts = [int(minor_event_mask(zk, xi, minor).sum()) for xi in xi_grid]
        return (int(keep.sum()), np.asarray(counts, dtype=np.int64))

    return kernel


def _grid_edges(grid: np.ndarray) -> np.ndarray:
    """Bin edges bracketing each grid point (midpoints between neighbors)."""
    if grid.size == 1:
        return np.array([grid[0] - 0.5, grid[0] + 0.5])
    mids = 0.5 * (grid[:-1] + grid[1:])
    first = grid[0] - (mids[0] - grid[0])
    last = grid[-1] + (grid[-1] - mids[-1])
    return np.concatenate(([first], mids, [last]))


def estimate_minor_desf(
    spec: SequenceSpec,
    n: int,
    minor: MinorSelector,
    xi_grid,
    *,
    workers: int = 1,
) -> DesfHistogram:
    """P(selected minor >= 0 | full matrix positive) at each xi in the grid.

    Samples correlations uniformly on the cube, conditions once on full
    positivity (which does not involve xi — only the constraint does, via
    the scaled entries of the partial transpose), and reuses the surviving
    sample at every grid point.  Estimates are therefore correlated across
    the grid but individually exact conditional binomials.

    The result is packaged as a histogram whose bins bracket the grid points
    (every bin shares the same ``n_psd``); ``ratio[k]`` and ``stderr[k]``
    are the estimate at ``xi_grid[k]``.  Requires a 6-dimensional sequence
    spec; raises :class:`InsufficientSamplesError` if nothing survives the
    positivity conditioning.
    """
    if spec.dimension != 6:
        raise ValueError("the minor estimator needs a 6-dimensional sequence spec")
    if n < 1:
        raise ValueError("n must be >= 1")
    grid = np.asarray(list(xi_grid), dtype=float)
    if grid.size == 0:
        raise ValueError("xi_grid must be non-empty")
    if not np.all(np.isfinite(grid)):
        raise ValueError("xi_grid must be finite")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise ValueError("xi_grid must be strictly increasing")
    kernel = _make_minor_kernel(minor, grid)
    tasks = [((0, idx), spec, off, size) for idx, off, size in _batch_plan(n)]
    n_psd, counts = _run_batches(tasks, kernel, workers)[0]
    if n_psd <= 0:
        raise InsufficientSamplesError(
            "no samples satisfied the positivity conditioning; increase n"
        )
    return DesfHistogram(
        bin_edges=_grid_edges(grid),
        n_psd=np.full(grid.size, n_psd, dtype=np.int64),
        n_sep=np.asarray(counts, dtype=np.int64),
        n_psd_outside=0,
        n_sep_outside=0,
        n_total=n,
    )


# ---------------------------------------------------------------------------
# Histogram-versus-curve comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurveComparison:
    """Per-bin residuals of a histogram against a reference curve.

    ``zscore`` uses the reference value for the binomial scale; bins with
    fewer than ``min_count`` conditioning samples are excluded (NaN) and
    counted in ``n_skipped``.  A bin whose reference sits exactly at 0 or 1
    has zero binomial width: its z-score is 0 when the residual is 0 and
    infinite otherwise.
    """

    xi_mid: np.ndarray
    residual: np.ndarray
    sigma: np.ndarray
    zscore: np.ndarray
    max_abs_z: float
    mean_signed: float
    n_used: int
    n_skipped: int


def compare_curves(
    hist: DesfHistogram, curve: DesfCurve, *, min_count: int = 10
) -> CurveComparison:
    """Compare a DESF histogram with a curve evaluated at bin midpoints."""
    mid = hist.xi_mid
    ref = eval_desf_array(curve, mid)
    used = hist.n_psd >= min_count
    residual = np.where(used, hist.ratio - ref, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        sigma = np.where(used, np.sqrt(ref * (1.0 - ref) / hist.n_psd), np.nan)
    z = np.full(mid.shape, np.nan)
    pos = used & (sigma > 0)
    z[pos] = residual[pos] / sigma[pos]
    flat = used & ~(sigma > 0)
    z[flat] = np.where(residual[flat] == 0.0, 0.0, np.inf)
    max_abs = float(np.max(np.abs(z[used]))) if used.any() else float("nan")
    mean_signed = float(np.mean(residual[used])) if used.any() else float("nan")
    return CurveComparison(
        xi_mid=mid,
        residual=residual,
        sigma=sigma,
        zscore=z,
        max_abs_z=max_abs,
        mean_signed=mean_signed,
        n_used=int(used.sum()),
        n_skipped=int((~used).sum()),
    )


def binomial_two_sided_pvalue(k: int, n: int, p: float) -> float:
    """Conservative two-sided exact binomial p-value (doubled tail).

    Used instead of a Gaussian z-score wherever the expected count in a bin
    is too small for the normal approximation.
    """
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    lo = binom.cdf(k, n, p)
    hi = binom.sf(k - 1, n, p)
    return float(min(1.0, 2.0 * min(lo, hi)))
