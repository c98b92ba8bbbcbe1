"""Maximum-likelihood parameter estimation and likelihood-ratio reports.

The peak-model parameters are optimized by Nelder-Mead on an unconstrained
reparameterization: log rho, logit xi, log eta, and stick-breaking
coordinates for the mixture proportions (entries pinned to zero are simply
left out).  Likelihood ratios are reported per marker and overall on the
log10 scale; by default both numerator and denominator are evaluated at the
parameters fitted under the defence hypothesis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .engine import NEG_INF, PreparedLikelihood
from .genotype import AlleleFrequencyTable, GenotypeProfile
from .ibd import IBDPatternDistribution
from .peakmodel import EPGData, MixtureModelParams

__all__ = ["Hypothesis", "MLEResult", "LRReport", "mle", "lr", "LR_POLICIES"]

LN10 = math.log(10.0)

#: 'minimize-the-ratio' appears in the literature but has no published
#: specification; it is named here so the CLI can reject it explicitly.
LR_POLICIES = ("shared_h0_mles", "separate_mles", "fixed_params")


@dataclass
class Hypothesis:
    """A mixture composition hypothesis.

    ``contributors`` are ordered slots mapping to phi entries.  Ids present
    in ``known`` carry full genotype profiles; ids covered by ``dist`` are
    untyped related; the rest are untyped unrelated.  ``typed`` holds
    genotyped non-contributors (conditioning evidence).  For multi-EPG
    analyses ``phi_zero[e]`` names contributors absent from EPG e.
    """

    name: str
    contributors: tuple[str, ...]
    known: dict[str, GenotypeProfile] = field(default_factory=dict)
    dist: IBDPatternDistribution | None = None
    typed: dict[str, GenotypeProfile] = field(default_factory=dict)
    theta: float = 0.0
    phi_zero: tuple[frozenset[str], ...] | None = None

    def __post_init__(self):
        self.contributors = tuple(str(c) for c in self.contributors)
        if self.phi_zero is not None:
            self.phi_zero = tuple(frozenset(s) for s in self.phi_zero)
            for s in self.phi_zero:
                bad = s - set(self.contributors)
                if bad:
                    raise ValueError(f"phi_zero names unknown contributors: {sorted(bad)}")

    def n_epgs(self) -> int:
        return len(self.phi_zero) if self.phi_zero is not None else 1

    def prepare(self, epgs, freqs: AlleleFrequencyTable) -> PreparedLikelihood:
        return PreparedLikelihood(
            epgs,
            freqs,
            self.contributors,
            known=self.known,
            dist=self.dist,
            typed=self.typed,
            theta=self.theta,
        )


@dataclass
class MLEResult:
    params: list[MixtureModelParams]  # one per EPG
    loglik: float
    n_evaluations: int
    start_logliks: list[float]

    @property
    def single(self) -> MixtureModelParams:
        if len(self.params) != 1:
            raise ValueError("multiple EPGs fitted; use .params")
        return self.params[0]


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


class _ParamCodec:
    """Packs per-EPG (rho, xi, eta, phi) into one unconstrained vector."""

    def __init__(self, contributors, phi_zero, threshold: float):
        self.n = len(contributors)
        self.threshold = threshold
        self.free: list[list[int]] = []
        for zeros in phi_zero:
            free = [i for i, c in enumerate(contributors) if c not in zeros]
            if not free:
                raise ValueError("every contributor has phi pinned to zero")
            self.free.append(free)

    def pack(self, plist: list[MixtureModelParams]) -> np.ndarray:
        out = []
        for p, free in zip(plist, self.free):
            out += [math.log(p.rho), _logit(p.xi), math.log(p.eta)]
            rem = 1.0
            for j in free[:-1]:
                v = p.phi[j] / rem if rem > 0 else 0.0
                v = min(max(v, 1e-12), 1 - 1e-12)
                out.append(_logit(v))
                rem -= p.phi[j]
        return np.array(out)

    def unpack(self, x: np.ndarray) -> list[MixtureModelParams]:
        plist = []
        k = 0
        for free in self.free:
            rho = math.exp(x[k])
            xi = _sigmoid(x[k + 1])
            eta = math.exp(x[k + 2])
            k += 3
            phi = [0.0] * self.n
            rem = 1.0
            for j in free[:-1]:
                v = _sigmoid(x[k])
                k += 1
                phi[j] = rem * v
                rem -= phi[j]
            phi[free[-1]] = max(rem, 0.0)
            total = sum(phi)
            phi = tuple(p / total for p in phi)
            plist.append(
                MixtureModelParams(rho=rho, xi=xi, eta=eta, phi=phi, threshold=self.threshold)
            )
        return plist


def _moment_init(epg: EPGData, n_free: int, threshold: float):
    """Rough (rho, eta) from per-marker total peak heights; uniform phi."""
    totals = [
        sum(z for z in epg.heights(m).values() if z > threshold) or threshold
        for m in epg.markers
    ]
    mean = float(np.mean(totals))
    var = float(np.var(totals))
    eta = min(max(var / mean if mean > 0 else 100.0, 10.0), 1e4)
    rho = min(max(mean / (2.0 * eta), 0.05), 1e3)
    phi = tuple([1.0 / n_free] * n_free)
    return rho, 0.05, eta, phi


def mle(
    epgs,
    hypothesis: Hypothesis,
    freqs: AlleleFrequencyTable,
    init: MixtureModelParams | list | None = None,
    n_starts: int = 5,
    seed: int = 0,
    threshold: float = 50.0,
    maxiter: int = 2000,
    fatol: float = 1e-8,
) -> MLEResult:
    """Maximize the hypothesis log-likelihood over (rho, xi, eta, phi).

    Derivative-free simplex search with ``n_starts`` seeded restarts around
    a moment-based initial point; the returned estimate is the best point
    seen across every objective evaluation, so it can never fall below any
    evaluated start.
    """
    epg_list = [epgs] if isinstance(epgs, EPGData) else list(epgs)
    n_epgs = len(epg_list)
    phi_zero = hypothesis.phi_zero or tuple(frozenset() for _ in range(n_epgs))
    if len(phi_zero) != n_epgs:
        raise ValueError("phi_zero length must match the number of EPGs")
    prep = hypothesis.prepare(epg_list, freqs)
    codec = _ParamCodec(hypothesis.contributors, phi_zero, threshold)

    if init is None:
        inits = []
        for epg, free in zip(epg_list, codec.free):
            rho, xi, eta, _ = _moment_init(epg, len(free), threshold)
            phi = [0.0] * codec.n
            for j in free:
                phi[j] = 1.0 / len(free)
            inits.append(
                MixtureModelParams(rho=rho, xi=xi, eta=eta, phi=tuple(phi), threshold=threshold)
            )
    else:
        inits = [init] if isinstance(init, MixtureModelParams) else list(init)
    x0 = codec.pack(inits)

    best: dict = {"x": None, "ll": NEG_INF}
    n_eval = [0]

    def objective(x):
        n_eval[0] += 1
        try:
            ll = prep.loglik(codec.unpack(x))
        except (OverflowError, ValueError):
            return 1e300
        if ll > best["ll"]:
            best["ll"] = ll
            best["x"] = np.array(x)
        return -ll if ll > NEG_INF else 1e300

    rng = np.random.default_rng(seed)
    start_logliks = []
    for s in range(max(n_starts, 1)):
        xs = x0 if s == 0 else x0 + rng.normal(0.0, 0.5, size=x0.shape)
        res = minimize(
            objective,
            xs,
            method="Nelder-Mead",
            options={"maxiter": maxiter, "fatol": fatol, "xatol": 1e-6},
        )
        start_logliks.append(-res.fun if res.fun < 1e300 else NEG_INF)
    if best["x"] is None:
        raise RuntimeError("likelihood was non-finite at every evaluated point")
    return MLEResult(
        params=codec.unpack(best["x"]),
        loglik=best["ll"],
        n_evaluations=n_eval[0],
        start_logliks=start_logliks,
    )


@dataclass
class LRReport:
    """Marker-wise and overall weight of evidence for H_p against H_0."""

    hp_name: str
    h0_name: str
    policy: str
    per_marker_log10: dict[str, float]
    overall_log10: float
    params_p: list[MixtureModelParams]
    params_0: list[MixtureModelParams]
    flags: dict[str, str]

    def to_dict(self) -> dict:
        def params_dict(plist):
            return [
                {
                    "rho": p.rho,
                    "xi": p.xi,
                    "eta": p.eta,
                    "phi": list(p.phi),
                    "threshold": p.threshold,
                }
                for p in plist
            ]

        return {
            "hp": self.hp_name,
            "h0": self.h0_name,
            "policy": self.policy,
            "per_marker_log10_lr": {
                m: _json_float(v) for m, v in self.per_marker_log10.items()
            },
            "overall_log10_lr": _json_float(self.overall_log10),
            "params_p": params_dict(self.params_p),
            "params_0": params_dict(self.params_0),
            "flags": self.flags,
        }

    def to_json(self, indent=2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def _json_float(v: float):
    if math.isnan(v):
        return "indeterminate"
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return v


def lr(
    epgs,
    h_p: Hypothesis,
    h_0: Hypothesis,
    freqs: AlleleFrequencyTable,
    policy: str = "shared_h0_mles",
    params=None,
    n_starts: int = 5,
    seed: int = 0,
    threshold: float = 50.0,
) -> LRReport:
    """log10 likelihood ratio of H_p against H_0, marker by marker.

    Policies: ``shared_h0_mles`` evaluates both hypotheses at the H_0
    maximum-likelihood parameters; ``separate_mles`` maximizes each side
    independently; ``fixed_params`` uses the supplied parameter sets for
    both sides.
    """
    if policy not in LR_POLICIES:
        raise ValueError(f"unknown policy {policy!r}; available: {LR_POLICIES}")
    epg_list = [epgs] if isinstance(epgs, EPGData) else list(epgs)
    if policy == "fixed_params":
        if params is None:
            raise ValueError("fixed_params policy needs params=")
        plist = [params] if isinstance(params, MixtureModelParams) else list(params)
        params_p = params_0 = plist
    elif policy == "shared_h0_mles":
        if h_p.contributors != h_0.contributors:
            raise ValueError(
                "shared_h0_mles requires identical contributor slots in both hypotheses"
            )
        fit0 = mle(epg_list, h_0, freqs, n_starts=n_starts, seed=seed, threshold=threshold)
        params_p = params_0 = fit0.params
    else:
        fitp = mle(epg_list, h_p, freqs, n_starts=n_starts, seed=seed, threshold=threshold)
        fit0 = mle(epg_list, h_0, freqs, n_starts=n_starts, seed=seed, threshold=threshold)
        params_p, params_0 = fitp.params, fit0.params

    mll_p = h_p.prepare(epg_list, freqs).marker_logliks(params_p)
    mll_0 = h_0.prepare(epg_list, freqs).marker_logliks(params_0)
    per_marker = {}
    flags = {}
    for m in mll_p:
        a, b = mll_p[m], mll_0[m]
        if a == NEG_INF and b == NEG_INF:
            per_marker[m] = math.nan
            flags[m] = "indeterminate (both hypotheses impossible)"
        elif b == NEG_INF:
            per_marker[m] = math.inf
            flags[m] = "H0 impossible"
        elif a == NEG_INF:
            per_marker[m] = -math.inf
            flags[m] = "Hp impossible"
        else:
            per_marker[m] = (a - b) / LN10
    finite = [v for v in per_marker.values() if math.isfinite(v)]
    if any(math.isnan(v) for v in per_marker.values()):
        overall = math.nan
    elif any(v == -math.inf for v in per_marker.values()):
        overall = -math.inf if not any(v == math.inf for v in per_marker.values()) else math.nan
    elif any(v == math.inf for v in per_marker.values()):
        overall = math.inf
    else:
        overall = math.fsum(per_marker[m] for m in sorted(per_marker))
    return LRReport(
        hp_name=h_p.name,
        h0_name=h_0.name,
        policy=policy,
        per_marker_log10=per_marker,
        overall_log10=overall,
        params_p=params_p,
        params_0=params_0,
        flags=flags,
    )
