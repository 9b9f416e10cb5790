"""Plug-in estimators: empirical, kernel-smoothed, and mixtures per layer.

The empirical estimator replaces every expectation in the composition by a
sample mean over the same sample. The mixed estimator convolves the
empirical measure with a scaled kernel at a chosen subset J of layers: the
layer-j mean becomes (1/n) sum_i integral f_j(eta, X_i + z) dmu_h(z), where
mu_h is the kernel density scaled by the bandwidth h_n. For layers tagged as
power-max forms the uniform-kernel convolution has a closed form; everything
else goes through quadrature against the kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma as gamma_fn

import numpy as np

from .core import CompositeSpec, EtaChain, QuadratureRule, _eval_layer, _check_finite, validate_spec
from .errors import ConfigError, EvaluationError

_KERNEL_FAMILIES = ("uniform", "gaussian", "epanechnikov")


def _abs_moment_1d(family: str, q: float) -> float:
    """E|Y|^q for the unscaled one-dimensional kernel density."""
    if q == 0:
        return 1.0
    if family == "uniform":          # density 1/2 on [-1, 1]
        return 1.0 / (q + 1.0)
    if family == "epanechnikov":     # density (3/4)(1 - y^2) on [-1, 1]
        return 3.0 / ((q + 1.0) * (q + 3.0))
    if family == "gaussian":
        return 2.0 ** (q / 2.0) * gamma_fn((q + 1.0) / 2.0) / np.sqrt(np.pi)
    raise ConfigError(f"unknown kernel family {family!r}")


def _kernel_nodes_1d(family: str, count: int):
    """Nodes/weights integrating g against the kernel density in one dim."""
    if count < 3:
        raise ConfigError("convolution requires at least 3 nodes")
    if family == "gaussian":
        z, w = np.polynomial.hermite_e.hermegauss(count)
        return z, w / np.sqrt(2 * np.pi)
    z, w = np.polynomial.legendre.leggauss(count)
    if family == "uniform":
        return z, w * 0.5
    if family == "epanechnikov":
        return z, w * 0.75 * (1.0 - z * z)
    raise ConfigError(f"unknown kernel family {family!r}")


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric kernel density with precomputed absolute moments.

    ``m1`` and ``mp`` are E|Y| and E|Y|^p (Euclidean norm for dimension > 1),
    the quantities entering the strong-identity condition.
    """

    family: str
    dimension: int = 1
    moment_order: float = 1.0
    m1: float = field(init=False)
    mp: float = field(init=False)

    def __post_init__(self):
        if self.family not in _KERNEL_FAMILIES:
            raise ConfigError(f"kernel family must be one of {_KERNEL_FAMILIES}")
        if self.dimension < 1:
            raise ConfigError("kernel dimension must be >= 1")
        if self.moment_order < 1:
            raise ConfigError("kernel moment order must be >= 1")
        object.__setattr__(self, "m1", self._norm_moment(1.0))
        object.__setattr__(self, "mp", self._norm_moment(self.moment_order))

    def _norm_moment(self, q: float, nodes_per_dim: int = 64) -> float:
        if self.dimension == 1:
            return _abs_moment_1d(self.family, q)
        z, w = _kernel_nodes_1d(self.family, nodes_per_dim)
        grids = np.meshgrid(*([z] * self.dimension), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        wg = np.meshgrid(*([w] * self.dimension), indexing="ij")
        wts = np.prod(np.stack([g.ravel() for g in wg], axis=1), axis=1)
        return float(wts @ np.linalg.norm(pts, axis=1) ** q)

    def density(self, y: np.ndarray) -> np.ndarray:
        """Product kernel density at rows of y (shape (n, dimension))."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if self.family == "uniform":
            per = np.where(np.abs(y) <= 1.0, 0.5, 0.0)
        elif self.family == "epanechnikov":
            per = np.where(np.abs(y) <= 1.0, 0.75 * (1.0 - y * y), 0.0)
        else:
            per = np.exp(-0.5 * y * y) / np.sqrt(2 * np.pi)
        return np.prod(per, axis=1)

    def convolution_rule(self, nodes_per_dim: int) -> QuadratureRule:
        """Tensor nodes/weights for integrating against the kernel density."""
        z, w = _kernel_nodes_1d(self.family, nodes_per_dim)
        if self.dimension == 1:
            return QuadratureRule(z[:, None], w)
        grids = np.meshgrid(*([z] * self.dimension), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        wg = np.meshgrid(*([w] * self.dimension), indexing="ij")
        wts = np.prod(np.stack([g.ravel() for g in wg], axis=1), axis=1)
        return QuadratureRule(pts, wts)


@dataclass(frozen=True)
class BandwidthSchedule:
    """Bandwidth rule h_n: silverman (1.06 sigma n^{-1/5}) or power (a n^{-gamma})."""

    rule: str
    scale: float = 1.0
    exponent: float = 0.5

    def __post_init__(self):
        if self.rule not in ("silverman", "power"):
            raise ConfigError("bandwidth rule must be 'silverman' or 'power'")
        if self.scale <= 0:
            raise ConfigError("bandwidth scale must be positive")
        if self.rule == "power" and self.exponent <= 0:
            raise ConfigError("power-rule exponent must be positive")


def bandwidth(schedule: BandwidthSchedule, n: int, sigma_hat: float = 1.0) -> float:
    """Evaluate the schedule at sample size n.

    Silverman with sigma_hat = 0 is rejected: the bandwidth degenerates to
    zero and the caller should fall back to the empirical estimator.
    """
    if n < 1:
        raise ConfigError("sample size must be >= 1")
    if schedule.rule == "silverman":
        if sigma_hat <= 0:
            raise EvaluationError(
                "silverman bandwidth is degenerate (sigma_hat = 0); "
                "use the empirical estimator for this sample")
        return 1.06 * sigma_hat * n ** (-0.2)
    return schedule.scale * n ** (-schedule.exponent)


@dataclass(frozen=True)
class SmoothingPlan:
    """Which layers to smooth, with what kernel, and what bandwidth rule."""

    J: frozenset[int]
    kernel: KernelSpec
    schedule: BandwidthSchedule
    convolution_nodes: int = 64

    def __post_init__(self):
        object.__setattr__(self, "J", frozenset(int(j) for j in self.J))
        if any(j < 1 for j in self.J):
            raise ConfigError("smoothing layer indices must be >= 1")
        if self.convolution_nodes < 3:
            raise ConfigError("convolution requires at least 3 quadrature nodes")


@dataclass(frozen=True)
class Sample:
    """An n x m matrix of observations with finite entries."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 1:
            raise ConfigError("sample must be a nonempty n x m matrix")
        if not np.all(np.isfinite(data)):
            raise ConfigError("sample contains non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    def std_scale(self) -> float:
        """Scalar dispersion estimate: sqrt of mean per-coordinate variance
        (n-1 denominator); equals the sample standard deviation for m = 1."""
        if self.n < 2:
            return 0.0
        return float(np.sqrt(np.mean(np.var(self.data, axis=0, ddof=1))))


@dataclass(frozen=True)
class EstimateReport:
    """Plug-in estimate: value (eta_1 hat), the full chain, plan, and n."""

    value: np.ndarray
    chain: EtaChain
    plan: SmoothingPlan | None
    n: int


def _require_valid(spec: CompositeSpec, sample: Sample) -> None:
    if sample.m != spec.m:
        raise ConfigError(
            f"sample dimension {sample.m} does not match spec dimension {spec.m}")
    result = validate_spec(spec)
    if not result.ok:
        raise ConfigError("invalid spec: " + "; ".join(m.message for m in result.mismatches))


def _empirical_chain(spec: CompositeSpec, x: np.ndarray) -> EtaChain:
    """Per-layer sample means, innermost first, without validation."""
    etas: list[np.ndarray] = []
    eta = None
    for j in range(spec.k + 1, 0, -1):
        vals = _eval_layer(spec, j, eta, x)
        _check_finite(vals, j)
        eta = vals.mean(axis=0)
        etas.append(eta)
    return EtaChain(tuple(etas))


def estimate_empirical(spec: CompositeSpec, sample: Sample) -> EstimateReport:
    """Fully empirical plug-in estimate.

    Computes the per-layer sample means innermost first; because inner sums
    do not depend on the outer summation index, this equals the fully nested
    empirical sums evaluated directly.
    """
    _require_valid(spec, sample)
    chain = _empirical_chain(spec, sample.data)
    return EstimateReport(chain.value, chain, None, sample.n)


def _powermax_uniform_mean(gap: np.ndarray, p: float, h: float) -> float:
    """Mean over the sample of the uniform-kernel convolution of
    (max(0, gap + z))^p, z ~ U(-h, h): the tail-power closed form."""
    up = np.maximum(0.0, gap + h) ** (p + 1.0)
    dn = np.maximum(0.0, gap - h) ** (p + 1.0)
    return float(np.sum(up - dn) / (2.0 * gap.shape[0] * (p + 1.0) * h))


def uniform_kernel_powermax(sample: Sample, u: float, p: float, h: float) -> float:
    """Closed-form uniform-kernel smoothed mean of (max(0, X - u))^p.

    Equals (1/(2n(p+1)h)) sum_i [ (max(0, h + X_i - u))^{p+1}
    - (max(0, -h + X_i - u))^{p+1} ], the antiderivative of the tail power
    integrated over the kernel window.
    """
    if sample.m != 1:
        raise ConfigError("uniform_kernel_powermax requires a one-dimensional sample")
    if h <= 0:
        raise ConfigError("bandwidth h must be positive")
    if p <= 1:
        raise ConfigError("power p must exceed 1")
    return _powermax_uniform_mean(sample.data[:, 0] - u, p, h)


def _smoothed_layer_mean(spec: CompositeSpec, j: int, eta: np.ndarray | None,
                         sample: Sample, plan: SmoothingPlan, h: float) -> np.ndarray:
    layer = spec.layer(j)
    pm = layer.powermax
    if (pm is not None and pm.unit_slope and sample.m == 1
            and plan.kernel.family == "uniform"):
        gap = np.asarray(pm.gap(eta, sample.data), dtype=float).reshape(-1)
        return np.array([_powermax_uniform_mean(gap, pm.power, h)])
    rule = plan.kernel.convolution_rule(plan.convolution_nodes)
    offsets = rule.nodes * h                      # (q, m)
    x = sample.data                               # (n, m)
    n, q = x.shape[0], offsets.shape[0]
    shifted = (x[:, None, :] + offsets[None, :, :]).reshape(n * q, sample.m)
    vals = _eval_layer(spec, j, eta, shifted)
    _check_finite(vals, j)
    vals = vals.reshape(n, q, -1)
    per_sample = np.einsum("q,nqd->nd", rule.weights, vals)
    return per_sample.mean(axis=0)


def _mixed_chain(spec: CompositeSpec, sample: Sample, plan: SmoothingPlan,
                 h: float) -> EtaChain:
    """Mixed per-layer means at a fixed bandwidth, without validation."""
    x = sample.data
    etas: list[np.ndarray] = []
    eta = None
    for j in range(spec.k + 1, 0, -1):
        if j in plan.J:
            eta = _smoothed_layer_mean(spec, j, eta, sample, plan, h)
        else:
            vals = _eval_layer(spec, j, eta, x)
            _check_finite(vals, j)
            eta = vals.mean(axis=0)
        etas.append(eta)
    return EtaChain(tuple(etas))


def estimate_mixed(spec: CompositeSpec, sample: Sample,
                   plan: SmoothingPlan) -> EstimateReport:
    """Mixed plug-in estimate: smoothed means at layers in plan.J, empirical
    means elsewhere. With empty J the result is exactly estimate_empirical."""
    if not plan.J:
        report = estimate_empirical(spec, sample)
        return EstimateReport(report.value, report.chain, plan, report.n)
    _require_valid(spec, sample)
    if plan.kernel.dimension != sample.m:
        raise ConfigError(
            f"kernel dimension {plan.kernel.dimension} does not match sample "
            f"dimension {sample.m}")
    if any(j > spec.k + 1 for j in plan.J):
        raise ConfigError("smoothing set J references a layer beyond k+1")
    h = bandwidth(plan.schedule, sample.n, sample.std_scale())
    chain = _mixed_chain(spec, sample, plan, h)
    return EstimateReport(chain.value, chain, plan, sample.n)


@dataclass(frozen=True)
class IdentityCheck:
    """Outcome of the strong-approximate-identity check for a schedule.

    ``exponent_identity`` is the growth exponent e in
    sqrt(n) * max(h_n m1, h_n^p mp) ~ n^e; the check passes iff e < 0.
    ``exponent_s2b`` is the exponent of n h_n^2.
    """

    passes: bool
    s2b_ok: bool
    rule: str
    gamma: float
    exponent_identity: float
    exponent_s2b: float
    detail: str


def check_strong_identity(schedule: BandwidthSchedule, kernel: KernelSpec,
                          p: float) -> IdentityCheck:
    """Decide whether the kernel/bandwidth pair is a strong approximate
    identity of order p.

    For h_n = a n^{-gamma}: sqrt(n) h_n m1 ~ n^{1/2-gamma} and
    sqrt(n) h_n^p mp ~ n^{1/2-p*gamma}; with p >= 1 the binding exponent is
    1/2 - gamma, so the check passes exactly when gamma > 1/2. The same
    threshold governs n h_n^2 -> 0. Silverman has gamma = 1/5 and fails with
    growth exponent n^{0.3}.
    """
    if p < 1:
        raise ConfigError("order p must be >= 1")
    if not (np.isfinite(kernel.m1) and np.isfinite(kernel._norm_moment(p))):
        raise ConfigError("kernel moments m1, mp must be finite")
    gamma = 0.2 if schedule.rule == "silverman" else schedule.exponent
    e_id = max(0.5 - gamma, 0.5 - p * gamma)
    e_s2b = 1.0 - 2.0 * gamma
    passes = e_id < 0
    s2b_ok = e_s2b < 0
    if passes:
        detail = f"sqrt(n) moment bound decays like n^{e_id:g}"
    else:
        detail = f"sqrt(n) moment bound grows like n^{e_id:g}"
    if schedule.rule == "silverman":
        detail += " (silverman: gamma = 1/5 < 1/2)"
    return IdentityCheck(passes, s2b_ok, schedule.rule, gamma, e_id, e_s2b, detail)
