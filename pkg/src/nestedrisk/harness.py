"""Deterministic Monte Carlo harness.

Laws, a counter-based sampler (draw (i, j) of a sample is a pure function of
(seed, i * m + j)), a replication runner whose output is byte-identical for
any worker count, and distributional summaries (histograms, KS distances)
for comparing replication tables against normal references.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.special import ndtri

from ._rng import counter_uniform, derive_seed
from .core import (DistributionOracle, normal_oracle, product_oracle,
                   two_point_oracle, uniform_oracle)
from .errors import ConfigError, EvaluationError
from .estimators import Sample

# ---------------------------------------------------------------------------
# Laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Normal:
    mean: float
    std: float

    def __post_init__(self):
        if self.std <= 0:
            raise ConfigError("normal std must be positive")

    def transform(self, u: np.ndarray) -> np.ndarray:
        return self.mean + self.std * ndtri(u)

    def moments(self) -> tuple[float, float]:
        return self.mean, self.std ** 2

    def oracle(self, nodes: int = 1000) -> DistributionOracle:
        return normal_oracle(self.mean, self.std, nodes=nodes)


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ConfigError("uniform law requires a < b")

    def transform(self, u: np.ndarray) -> np.ndarray:
        return self.a + (self.b - self.a) * u

    def moments(self) -> tuple[float, float]:
        return 0.5 * (self.a + self.b), (self.b - self.a) ** 2 / 12.0

    def oracle(self, nodes: int = 1000) -> DistributionOracle:
        return uniform_oracle(self.a, self.b, nodes=nodes)


@dataclass(frozen=True)
class TwoPoint:
    x1: float
    x2: float
    w: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.w < 1.0:
            raise ConfigError("two-point weight must lie in (0, 1)")

    def transform(self, u: np.ndarray) -> np.ndarray:
        return np.where(u < self.w, self.x1, self.x2)

    def moments(self) -> tuple[float, float]:
        mean = self.w * self.x1 + (1 - self.w) * self.x2
        var = self.w * (self.x1 - mean) ** 2 + (1 - self.w) * (self.x2 - mean) ** 2
        return mean, var

    def oracle(self, nodes: int = 1000) -> DistributionOracle:
        return two_point_oracle(self.x1, self.x2, self.w)


ScalarLaw = Normal | Uniform | TwoPoint


@dataclass(frozen=True)
class ProductLaw:
    """Independent scalar laws per coordinate."""

    laws: tuple

    def __post_init__(self):
        if not self.laws:
            raise ConfigError("product law needs at least one coordinate")

    def oracle(self, nodes: int = 1000) -> DistributionOracle:
        per = max(nodes // 10, 40) if len(self.laws) > 1 else nodes
        return product_oracle([law.oracle(per) for law in self.laws])


def law_dimension(law) -> int:
    return len(law.laws) if isinstance(law, ProductLaw) else 1


@dataclass(frozen=True)
class SamplerConfig:
    """A law plus the 64-bit seed of its deterministic stream."""

    law: object
    seed: int = 0

    @property
    def dimension(self) -> int:
        return law_dimension(self.law)


def sample(config: SamplerConfig, n: int) -> Sample:
    """Draw an n x m sample; entry (i, j) consumes counter i * m + j of the
    uniform stream keyed by config.seed, then maps through the coordinate
    law's inverse CDF."""
    if n < 1:
        raise ConfigError("sample size must be >= 1")
    m = law_dimension(config.law)
    u = counter_uniform(config.seed, 0, n * m).reshape(n, m)
    laws = config.law.laws if isinstance(config.law, ProductLaw) else (config.law,)
    cols = [laws[j].transform(u[:, j]) for j in range(m)]
    return Sample(np.stack(cols, axis=1))


def parse_law(text: str):
    """Parse a law string: ``normal:mean,std``, ``uniform:a,b``,
    ``two_point:x1,x2,w``; '*' joins coordinates into a product law."""
    parts = [p.strip() for p in text.split("*")]
    laws = []
    for part in parts:
        try:
            kind, _, argstr = part.partition(":")
            args = [float(v) for v in argstr.split(",")] if argstr else []
            kind = kind.strip().lower()
            if kind == "normal":
                laws.append(Normal(*args))
            elif kind == "uniform":
                laws.append(Uniform(*args))
            elif kind == "two_point":
                laws.append(TwoPoint(*args))
            else:
                raise ConfigError(f"unknown law {kind!r}")
        except TypeError as exc:
            raise ConfigError(f"bad law arguments in {part!r}: {exc}") from exc
    return laws[0] if len(laws) == 1 else ProductLaw(tuple(laws))


# ---------------------------------------------------------------------------
# Replications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Reference:
    """Reference normal for summaries: mean and variance of the estimator."""

    mean: float
    variance: float


@dataclass(frozen=True)
class TableSummary:
    mean: np.ndarray
    std: np.ndarray
    bias: np.ndarray | None
    ks: float | None


@dataclass(frozen=True)
class ReplicationTable:
    """Seeded replication outcomes plus the config echo and summary."""

    estimates: np.ndarray          # (R, d)
    config: dict
    reference: Reference | None
    summary: TableSummary

    @property
    def replications(self) -> int:
        return self.estimates.shape[0]

    def to_csv(self, out=None) -> str | None:
        """Estimates CSV: header replication,value[,coord...]; floats carry
        17 significant digits."""
        d = self.estimates.shape[1]
        header = "replication,value" + "".join(f",coord{i}" for i in range(1, d))
        lines = [header]
        for r in range(self.estimates.shape[0]):
            row = ",".join(format_float(v) for v in self.estimates[r])
            lines.append(f"{r},{row}")
        text = "\n".join(lines) + "\n"
        if out is None:
            return text
        _write_text(out, text)
        return None


def _table_summary(estimates: np.ndarray, reference: Reference | None) -> TableSummary:
    mean = estimates.mean(axis=0)
    std = estimates.std(axis=0, ddof=1) if estimates.shape[0] > 1 else np.zeros_like(mean)
    bias = None
    ks = None
    if reference is not None:
        bias = mean - reference.mean
        if estimates.shape[1] == 1 and estimates.shape[0] > 1 and reference.variance > 0:
            ks = ks_distance(estimates[:, 0], reference.mean, reference.variance)
    return TableSummary(mean, std, bias, ks)


def run_replications(estimator: Callable[[Sample], object],
                     config: SamplerConfig, n: int, replications: int,
                     *, seed: int | None = None,
                     reference: Reference | None = None,
                     workers: int = 1,
                     label: dict | None = None) -> ReplicationTable:
    """Run seeded replications of an estimator.

    Replication r draws a fresh sample from the stream keyed by
    hash64(seed, r) and applies ``estimator``; rows are assembled in
    replication order, so the table is identical for any worker count.
    """
    if replications < 1:
        raise ConfigError("replications must be >= 1")
    base_seed = config.seed if seed is None else int(seed)

    def one(r: int) -> np.ndarray:
        cfg = replace(config, seed=derive_seed(base_seed, r))
        s = sample(cfg, n)
        try:
            est = estimator(s)
        except EvaluationError as exc:
            raise EvaluationError(f"replication {r} failed: {exc}") from exc
        return np.asarray(est, dtype=float).reshape(-1)

    if workers <= 1:
        rows = [one(r) for r in range(replications)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(replications)))
    estimates = np.stack(rows, axis=0)

    echo = {"n": int(n), "replications": int(replications), "seed": int(base_seed),
            "law": repr(config.law)}
    if label:
        echo.update(label)
    return ReplicationTable(estimates, echo, reference,
                            _table_summary(estimates, reference))


# ---------------------------------------------------------------------------
# Distribution summaries
# ---------------------------------------------------------------------------

def ks_distance(values: np.ndarray, mean: float, variance: float) -> float:
    """Two-sided one-sample Kolmogorov-Smirnov distance against
    N(mean, variance)."""
    if variance <= 0:
        raise ConfigError("reference variance must be positive for a KS distance")
    x = np.sort(np.asarray(values, dtype=float))
    n = x.shape[0]
    from scipy.special import ndtr
    f = ndtr((x - mean) / np.sqrt(variance))
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def freedman_diaconis_bins(values: np.ndarray, lo: int = 10, hi: int = 100) -> int:
    """Freedman-Diaconis bin count clamped to [lo, hi]."""
    v = np.asarray(values, dtype=float)
    q75, q25 = np.percentile(v, [75, 25])
    iqr = q75 - q25
    span = v.max() - v.min()
    if iqr <= 0 or span <= 0:
        return lo
    width = 2.0 * iqr * v.shape[0] ** (-1.0 / 3.0)
    return int(np.clip(np.ceil(span / width), lo, hi))


@dataclass(frozen=True)
class Histogram:
    bin_left: np.ndarray
    bin_right: np.ndarray
    density: np.ndarray
    reference_density: np.ndarray

    def to_csv(self, out=None) -> str | None:
        lines = ["bin_left,bin_right,density,reference_density"]
        for row in zip(self.bin_left, self.bin_right, self.density,
                       self.reference_density):
            lines.append(",".join(format_float(v) for v in row))
        text = "\n".join(lines) + "\n"
        if out is None:
            return text
        _write_text(out, text)
        return None


@dataclass(frozen=True)
class DistributionSummary:
    mean: float
    bias: float
    std: float
    ks: float | None
    degenerate: bool
    reference: Reference
    histogram: Histogram | None


def summarize_distribution(table: ReplicationTable, reference: Reference,
                           bins: int | None = None, *,
                           coord: int = 0) -> DistributionSummary:
    """Density histogram over [min, max], the reference normal density at
    bin centers, bias/std, and the KS distance against the reference."""
    if table.replications < 2:
        raise ConfigError("summaries need at least two replications")
    vals = table.estimates[:, coord]
    mean = float(vals.mean())
    std = float(vals.std(ddof=1))
    bias = mean - reference.mean
    if std == 0.0 or reference.variance <= 0:
        return DistributionSummary(mean, bias, std, None, True, reference, None)

    nbins = bins if bins is not None else freedman_diaconis_bins(vals)
    density, edges = np.histogram(vals, bins=nbins,
                                  range=(vals.min(), vals.max()), density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    sd = np.sqrt(reference.variance)
    ref_density = np.exp(-0.5 * ((centers - reference.mean) / sd) ** 2) \
        / (sd * np.sqrt(2 * np.pi))
    hist = Histogram(edges[:-1], edges[1:], density, ref_density)
    ks = ks_distance(vals, reference.mean, reference.variance)
    return DistributionSummary(mean, bias, std, ks, False, reference, hist)


# ---------------------------------------------------------------------------
# Serialization helpers (17 significant digits everywhere)
# ---------------------------------------------------------------------------

def format_float(x) -> str:
    return format(float(x), ".17g")


def dumps_json(obj, indent: int = 0) -> str:
    """Minimal JSON emitter that renders floats with 17 significant digits."""
    pad = " " * indent

    def enc(v, depth: int) -> str:
        sp = "  " * depth
        spi = "  " * (depth + 1)
        if isinstance(v, dict):
            if not v:
                return "{}"
            items = [f'{spi}"{k}": {enc(val, depth + 1)}' for k, val in v.items()]
            return "{\n" + ",\n".join(items) + f"\n{sp}}}"
        if isinstance(v, (list, tuple, np.ndarray)):
            seq = list(np.asarray(v).tolist()) if isinstance(v, np.ndarray) else list(v)
            return "[" + ", ".join(enc(x, depth + 1) for x in seq) + "]"
        if isinstance(v, (bool, np.bool_)) or v is None:
            return "null" if v is None else ("true" if v else "false")
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return format_float(v)
        return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'

    return pad + enc(obj, 0) + "\n"


def summary_json(summary: DistributionSummary, config: dict) -> dict:
    """Summary document: {mean, bias, std, ks, reference, config}."""
    return {
        "mean": summary.mean,
        "bias": summary.bias,
        "std": summary.std,
        "ks": summary.ks,
        "degenerate": summary.degenerate,
        "reference": {"mean": summary.reference.mean,
                      "variance": summary.reference.variance},
        "config": config,
    }


def _write_text(out, text: str) -> None:
    if hasattr(out, "write"):
        out.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
