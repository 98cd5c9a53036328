"""Synthetic data generation, noisy-oracle candidates, and CSV ingestion.

The toy generator draws latent Gaussian covariates split into four blocks:
instruments (treatment assignment only), confounders (treatment and
outcomes), adjusters (outcomes only), and distractors (neither). Outcomes
are linear in the confounder/adjuster block. The returned ground truth
carries the noise-free conditional means, the per-unit treatment effect
``tau = mu1 - mu0``, and the realized propensities, so oracle analyses and
noisy-oracle candidate estimators can be built on top.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

PROPENSITY_CLIP = (0.1, 0.9)

_ARM_RESAMPLE_ATTEMPTS = 5


def _sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Observation:
    """One unit: covariates ``x``, binary treatment ``t``, outcome ``y``."""

    x: np.ndarray
    t: int
    y: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", _readonly(np.asarray(self.x, dtype=float)))
        if self.x.ndim != 1:
            raise ValueError("observation covariates must be a 1-d vector")
        if self.t not in (0, 1):
            raise ValueError(f"treatment must be 0 or 1, got {self.t!r}")
        if not np.isfinite(self.y):
            raise ValueError("outcome must be finite")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("covariates must be finite")


@dataclass(frozen=True)
class Dataset:
    """Column-major container for ``n`` observations with shared dimension ``d``.

    Invariants enforced at construction: at least one unit, finite values,
    binary treatment with both arms present.
    """

    x: np.ndarray
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        t = np.asarray(self.t, dtype=np.int64)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2:
            raise ValueError("covariate matrix must be 2-d (n, d)")
        n = x.shape[0]
        if n == 0:
            raise ValueError("dataset must be nonempty")
        if t.shape != (n,) or y.shape != (n,):
            raise ValueError("x, t, y must agree on the number of units")
        if not np.all((t == 0) | (t == 1)):
            raise ValueError("treatment column must be binary")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("covariates and outcomes must be finite")
        if t.min() == t.max():
            arm = int(t[0])
            raise ValueError(f"dataset contains only treatment arm {arm}; both arms required")
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "t", _readonly(t))
        object.__setattr__(self, "y", _readonly(y))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def observation(self, i: int) -> Observation:
        return Observation(x=self.x[i], t=int(self.t[i]), y=float(self.y[i]))

    def replace(self, i: int, obs: Observation) -> "Dataset":
        """Return a copy with unit ``i`` swapped for ``obs``."""
        if obs.x.shape != (self.d,):
            raise ValueError("replacement covariate dimension mismatch")
        x = self.x.copy()
        t = self.t.copy()
        y = self.y.copy()
        x[i] = obs.x
        t[i] = obs.t
        y[i] = obs.y
        return Dataset(x, t, y)


@dataclass(frozen=True)
class ToyGroundTruth:
    """Per-unit truth for the toy design.

    ``mu0``/``mu1`` are the noise-free conditional means, ``tau`` their
    difference, and ``e`` the realized propensity after clipping.
    """

    tau: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    e: np.ndarray

    def __post_init__(self) -> None:
        for name in ("tau", "mu0", "mu1", "e"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name), dtype=float)))
        if not np.array_equal(self.tau, self.mu1 - self.mu0):
            raise ValueError("tau must equal mu1 - mu0 elementwise")
        lo, hi = PROPENSITY_CLIP
        if self.e.min() < lo or self.e.max() > hi:
            raise ValueError(f"propensities must lie in [{lo}, {hi}]")

    @property
    def n(self) -> int:
        return self.tau.shape[0]


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian perturbation of the true effect: bias ``mean``, scale ``sd``."""

    mean: float
    sd: float

    def __post_init__(self) -> None:
        if self.sd < 0:
            raise ValueError("noise sd must be nonnegative")

    @property
    def population_mse(self) -> float:
        """Mean squared error of ``tau + N(mean, sd^2)`` against ``tau``."""
        return self.mean**2 + self.sd**2


def population_relative_error(a: NoiseSpec, b: NoiseSpec) -> float:
    """Population MSE gap between two noisy-oracle candidates."""
    return a.population_mse - b.population_mse


# Standard candidate suites used throughout the experiments: one with three
# competitive candidates plus four clearly inferior ones, and one where every
# non-winner sits just above the winner.
COMPETITIVE_PLUS_INFERIOR_SPECS: tuple[NoiseSpec, ...] = (
    NoiseSpec(0.0, 0.1),
    NoiseSpec(0.03, 0.1),
    NoiseSpec(0.03, 0.1),
    NoiseSpec(0.3, 0.1),
    NoiseSpec(0.3, 0.1),
    NoiseSpec(0.3, 0.1),
    NoiseSpec(0.3, 0.1),
)

NEAR_TIED_SPECS: tuple[NoiseSpec, ...] = (
    NoiseSpec(0.0, 0.1),
    NoiseSpec(0.03, 0.1),
    NoiseSpec(0.03, 0.1),
    NoiseSpec(0.03, 0.1),
    NoiseSpec(0.03, 0.1),
)


@dataclass(frozen=True)
class CandidateSet:
    """Fixed per-unit predictions of ``p >= 2`` candidate effect estimators."""

    predictions: np.ndarray

    def __post_init__(self) -> None:
        preds = np.asarray(self.predictions, dtype=float)
        if preds.ndim != 2:
            raise ValueError("predictions must be a (p, n) matrix")
        if preds.shape[0] < 2:
            raise ValueError("need at least two candidate estimators")
        if not np.all(np.isfinite(preds)):
            raise ValueError("candidate predictions must be finite")
        object.__setattr__(self, "predictions", _readonly(preds))

    @property
    def p(self) -> int:
        return self.predictions.shape[0]

    @property
    def n(self) -> int:
        return self.predictions.shape[1]


def generate_toy(
    n: int,
    dims: tuple[int, int, int, int],
    seed: int,
) -> tuple[Dataset, ToyGroundTruth]:
    """Sample the linear-outcome toy design.

    Covariates are standard normal in ``sum(dims)`` dimensions with block
    sizes ``(instruments, confounders, adjusters, distractors)``. The
    treatment logit is linear in the instrument/confounder block plus a
    unit-level standard normal shock, squashed and clipped to [0.1, 0.9].
    Conditional means are linear in the confounder/adjuster block, scaled by
    the block width; observed outcomes add per-arm noise with sd 0.5. Block
    weights are Uniform(-1, 1), fixed by the seed.

    Parameters
    ----------
    n : int
        Number of units, at least 20.
    dims : tuple of four ints
        Block sizes, each at least 1.
    seed : int
        Everything is a pure function of (n, dims, seed).

    Returns
    -------
    (Dataset, ToyGroundTruth)
    """
    if n < 20:
        raise ValueError("toy designs need n >= 20")
    if len(dims) != 4 or any(int(m) < 1 for m in dims):
        raise ValueError("dims must be four block sizes, each >= 1")
    m_inst, m_conf, m_adj, m_dist = (int(m) for m in dims)

    rng = np.random.default_rng(seed)
    w_treat = rng.uniform(-1.0, 1.0, m_inst + m_conf)
    w_mu0 = rng.uniform(-1.0, 1.0, m_conf + m_adj)
    w_mu1 = rng.uniform(-1.0, 1.0, m_conf + m_adj)

    x = rng.standard_normal((n, m_inst + m_conf + m_adj + m_dist))
    treat_block = x[:, : m_inst + m_conf]
    outcome_block = x[:, m_inst : m_inst + m_conf + m_adj]

    logit = treat_block @ w_treat + rng.standard_normal(n)
    e = np.clip(_sigmoid(logit), *PROPENSITY_CLIP)

    scale = m_conf + m_adj
    mu0 = outcome_block @ w_mu0 / scale
    mu1 = outcome_block @ w_mu1 / scale

    t = None
    for _ in range(_ARM_RESAMPLE_ATTEMPTS):
        draw = (rng.random(n) < e).astype(np.int64)
        if 0 < draw.sum() < n:
            t = draw
            break
    if t is None:
        raise RuntimeError(
            f"could not sample both treatment arms in {_ARM_RESAMPLE_ATTEMPTS} attempts"
        )

    noise0 = rng.normal(0.0, 0.5, n)
    noise1 = rng.normal(0.0, 0.5, n)
    y = np.where(t == 1, mu1 + noise1, mu0 + noise0)

    dataset = Dataset(x=x, t=t, y=y)
    truth = ToyGroundTruth(tau=mu1 - mu0, mu0=mu0, mu1=mu1, e=e)
    return dataset, truth


def make_candidates(
    truth: ToyGroundTruth,
    specs: list[NoiseSpec] | tuple[NoiseSpec, ...],
    seed: int,
) -> CandidateSet:
    """Build noisy-oracle candidates ``tau + N(mean_r, sd_r^2)`` per unit.

    Each candidate draws from its own child stream of ``seed``, so a prefix
    of ``specs`` yields bitwise-identical rows regardless of how many other
    specs follow.
    """
    if len(specs) < 2:
        raise ValueError("need at least two noise specs to form a candidate set")
    children = np.random.SeedSequence(seed).spawn(len(specs))
    rows = []
    for spec, child in zip(specs, children):
        rng = np.random.default_rng(child)
        rows.append(truth.tau + rng.normal(spec.mean, spec.sd, truth.n))
    return CandidateSet(np.vstack(rows))


def _parse_float(field: str, line_no: int, column: str) -> float:
    try:
        value = float(field)
    except ValueError as exc:
        raise ValueError(f"line {line_no}: cannot parse {column}={field!r} as a number") from exc
    if not np.isfinite(value):
        raise ValueError(f"line {line_no}: {column} must be finite, got {field!r}")
    return value


def ingest_dataset(path: str) -> Dataset:
    """Load a dataset from CSV with header ``x_0,...,x_{d-1},t,y``.

    Malformed rows raise ``ValueError`` naming the offending line;
    non-binary treatments and single-arm files are rejected.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 3 or header[-2:] != ["t", "y"]:
            raise ValueError(f"{path}: header must be x_0,...,x_{{d-1}},t,y")
        d = len(header) - 2
        expected = [f"x_{j}" for j in range(d)] + ["t", "y"]
        if header != expected:
            raise ValueError(f"{path}: header must be {','.join(expected)}")

        xs, ts, ys = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise ValueError(f"line {line_no}: expected {d + 2} fields, got {len(row)}")
            xs.append([_parse_float(v, line_no, f"x_{j}") for j, v in enumerate(row[:d])])
            t_val = _parse_float(row[d], line_no, "t")
            if t_val not in (0.0, 1.0):
                raise ValueError(f"line {line_no}: treatment must be 0 or 1, got {row[d]!r}")
            ts.append(int(t_val))
            ys.append(_parse_float(row[d + 1], line_no, "y"))

    if not xs:
        raise ValueError(f"{path}: no data rows")
    t = np.asarray(ts)
    if t.min() == t.max():
        raise ValueError(f"{path}: only treatment arm {int(t[0])} present; both arms required")
    return Dataset(x=np.asarray(xs), t=t, y=np.asarray(ys))


def ingest_predictions(path: str, n: int) -> CandidateSet:
    """Load candidate predictions from CSV with header ``tau_0,...,tau_{p-1}``.

    The file must contain exactly ``n`` rows, one per dataset unit.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        p = len(header)
        expected = [f"tau_{r}" for r in range(p)]
        if header != expected:
            raise ValueError(f"{path}: header must be tau_0,...,tau_{{p-1}}")

        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p:
                raise ValueError(f"line {line_no}: expected {p} fields, got {len(row)}")
            rows.append([_parse_float(v, line_no, f"tau_{r}") for r, v in enumerate(row)])

    if len(rows) != n:
        raise ValueError(f"{path}: expected {n} prediction rows, found {len(rows)}")
    return CandidateSet(np.asarray(rows).T)


def write_dataset_csv(dataset: Dataset, path: str) -> None:
    """Write a dataset in the ``x_0,...,x_{d-1},t,y`` format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x_{j}" for j in range(dataset.d)] + ["t", "y"])
        for i in range(dataset.n):
            writer.writerow(
                [repr(float(v)) for v in dataset.x[i]]
                + [int(dataset.t[i]), repr(float(dataset.y[i]))]
            )


def write_predictions_csv(candidates: CandidateSet, path: str) -> None:
    """Write candidate predictions in the ``tau_0,...,tau_{p-1}`` format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"tau_{r}" for r in range(candidates.p)])
        for i in range(candidates.n):
            writer.writerow([repr(float(v)) for v in candidates.predictions[:, i]])
