"""Gamma observation model for electropherogram peak heights.

Peak heights at allele a are gamma distributed with shape rho*D_a and scale
eta, where the effective dose D_a mixes each contributor's allele counts at
a with the stutter fraction xi of their counts one repeat unit above.
Heights at or below the detection threshold C are censored: they contribute
the gamma CDF at C instead of a density value.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

from .genotype import allele_key, allele_str

__all__ = [
    "MixtureModelParams",
    "EPGData",
    "gamma_logpdf",
    "gamma_logcdf",
    "allele_log_factor",
    "effective_dose",
    "marker_loglik",
    "counts_matrix",
]

NEG_INF = float("-inf")


@dataclass(frozen=True)
class MixtureModelParams:
    """Parameters (rho, xi, eta, phi) of the peak model plus the threshold.

    rho scales the total pre-amplification DNA amount, xi is the mean
    stutter proportion, eta the gamma scale in rfu, and phi the mixture
    proportions (one entry per contributor, summing to one; exact zeros are
    allowed and switch a contributor off).
    """

    rho: float
    xi: float
    eta: float
    phi: tuple[float, ...]
    threshold: float = 50.0

    def __post_init__(self):
        if not (self.rho > 0 and self.eta > 0):
            raise ValueError("rho and eta must be positive")
        if not (0 <= self.xi < 1):
            raise ValueError("xi must lie in [0, 1)")
        phi = tuple(float(p) for p in self.phi)
        if any(p < 0 for p in phi) or abs(sum(phi) - 1.0) > 1e-9:
            raise ValueError(f"phi must be nonnegative and sum to 1, got {phi}")
        if self.threshold < 0:
            raise ValueError("threshold must be nonnegative")
        object.__setattr__(self, "phi", phi)

    def replace(self, **kw) -> "MixtureModelParams":
        d = dict(
            rho=self.rho, xi=self.xi, eta=self.eta, phi=self.phi,
            threshold=self.threshold,
        )
        d.update(kw)
        return MixtureModelParams(**d)


class EPGData:
    """Observed peak heights per marker, keyed by allele.

    Censoring is applied at evaluation time: a stored height is treated as
    observed only when it exceeds the threshold.  Markers may be present
    with no peaks at all (fully dropped out); the CSV format cannot express
    such markers, so they survive only in-memory.
    """

    def __init__(self, peaks: dict[str, dict]):
        self.peaks: dict[str, dict[int, float]] = {}
        for marker, heights in peaks.items():
            self.peaks[marker] = {
                allele_key(a): float(z) for a, z in heights.items()
            }
            if any(z < 0 for z in self.peaks[marker].values()):
                raise ValueError(f"negative peak height at marker {marker!r}")

    @classmethod
    def from_keys(cls, peaks: dict[str, dict[int, float]]) -> "EPGData":
        epg = cls({})
        epg.peaks = {m: dict(h) for m, h in peaks.items()}
        return epg

    @property
    def markers(self) -> tuple[str, ...]:
        return tuple(self.peaks)

    def heights(self, marker: str) -> dict[int, float]:
        return self.peaks[marker]

    def observed(self, marker: str, threshold: float) -> dict[int, float]:
        return {a: z for a, z in self.peaks[marker].items() if z > threshold}

    @classmethod
    def from_csv(cls, text: str) -> "EPGData":
        peaks: dict[str, dict] = {}
        reader = csv.reader(l for l in text.splitlines() if l.strip())
        header = next(reader)
        if [h.strip().lower() for h in header[:3]] != ["marker", "allele", "height"]:
            raise ValueError("expected header marker,allele,height")
        for row in reader:
            peaks.setdefault(row[0], {})[row[1]] = float(row[2])
        return cls(peaks)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["marker", "allele", "height"])
        for marker, heights in self.peaks.items():
            for a in sorted(heights):
                w.writerow([marker, allele_str(a), repr(heights[a])])
        return buf.getvalue()

    @classmethod
    def load(cls, path) -> "EPGData":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_csv(fh.read())


def gamma_logpdf(z: float, shape: float, scale: float) -> float:
    if z <= 0 or shape <= 0:
        return NEG_INF
    return (
        (shape - 1.0) * math.log(z)
        - z / scale
        - shape * math.log(scale)
        - math.lgamma(shape)
    )


def gamma_logcdf(z: float, shape: float, scale: float) -> float:
    if shape <= 0:
        return 0.0  # point mass at zero height
    if z <= 0:
        return NEG_INF
    p = float(gammainc(shape, z / scale))
    return math.log(p) if p > 0 else NEG_INF


def allele_log_factor(z: float | None, shape: float, params: MixtureModelParams) -> float:
    """log L_a: density of an observed peak, CDF at C for a censored one."""
    if z is None:
        if shape == 0.0:
            return 0.0
        return gamma_logcdf(params.threshold, shape, params.eta)
    if shape == 0.0:
        return NEG_INF
    return gamma_logpdf(z, shape, params.eta)


def effective_dose(
    counts: np.ndarray, grid: tuple[int, ...], params: MixtureModelParams, a: int
) -> float:
    """D_a: stutter-adjusted dose at grid position ``a`` (an index into grid).

    One repeat unit above the position donates the fraction xi of its dose
    downward; a missing grid neighbour contributes nothing.
    """
    phi = params.phi
    own = sum(phi[i] * counts[i, a] for i in range(len(phi)))
    up = 0.0
    if a + 1 < len(grid) and grid[a + 1] == grid[a] + 10:
        up = sum(phi[i] * counts[i, a + 1] for i in range(len(phi)))
    return (1.0 - params.xi) * own + params.xi * up


def marker_loglik(
    peaks: dict[int, float],
    counts: np.ndarray,
    grid: tuple[int, ...],
    params: MixtureModelParams,
) -> float:
    """Sum of log allele factors over the grid for fixed allele counts.

    ``counts`` is contributors-by-grid; ``peaks`` maps allele key to raw
    height (censoring is applied here).  Raises on NaN, which can only come
    from invalid parameters; a legitimate impossibility returns -inf.
    """
    total = 0.0
    for a in range(len(grid)):
        z = peaks.get(grid[a])
        if z is not None and z <= params.threshold:
            z = None
        shape = params.rho * effective_dose(counts, grid, params, a)
        f = allele_log_factor(z, shape, params)
        if math.isnan(f):
            raise ValueError(
                f"non-finite allele factor at grid position {allele_str(grid[a])}"
            )
        total += f
    return total


def counts_matrix(genotypes, grid: tuple[int, ...]) -> np.ndarray:
    """Allele-count matrix (contributors x grid) from unordered pairs."""
    pos = {a: i for i, a in enumerate(grid)}
    out = np.zeros((len(genotypes), len(grid)), dtype=np.int64)
    for i, pair in enumerate(genotypes):
        for x in pair:
            out[i, pos[x]] += 1
    return out
