"""Scenario engineering: input distributions, Latin hypercube sampling,
synthetic time series, outlier injection, Monte Carlo references and the
contamination sweep.

Every random draw comes from a named sub-stream of one root seed
(``"series"``, ``"outliers"``, ``"lhs"``) so each stage can be re-seeded on
its own and results do not depend on scheduling order.
"""
from __future__ import annotations

import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats
from scipy.stats import qmc

from .dataset import Dataset, write_csv_atomic
from .errors import BreakdownExceededError, ConfigError, InputShapeError, RGPFError
from .powerflow import (NetworkCase, injections_to_inputs, outputs_from_solution, simulate_time_series,
                        solve_power_flow_batch)

log = logging.getLogger(__name__)

OUTLIER_TARGETS = ("vertical", "bad_leverage", "good_leverage")
MAD_FACTOR = 1.4826


def substream(root_seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Independent generator for the stream ``name`` and task ``index`` under ``root_seed``."""
    ss = np.random.SeedSequence([int(root_seed), zlib.crc32(name.encode()), int(index)])
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------

_PARAMS = {
    "weibull": ("shape", "scale"),
    "beta": ("a", "b"),
    "gaussian": ("mean", "std"),
    "student_t": ("dof", "loc", "scale"),
    "uniform": ("low", "high"),
    "constant": ("value",),
}
_POSITIVE = {"shape", "scale", "a", "b", "std", "dof"}


@dataclass(frozen=True)
class DistributionSpec:
    """A univariate input or noise distribution.

    >>> DistributionSpec.weibull(2.06, 7.1).mean()  # doctest: +ELLIPSIS
    6.29...
    """
    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in _PARAMS:
            raise ConfigError(f"unknown distribution {self.kind!r}; choose from {tuple(_PARAMS)}")
        names = _PARAMS[self.kind]
        if len(self.params) != len(names):
            raise ConfigError(f"{self.kind} takes parameters {names}, got {self.params}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        for n, v in zip(names, self.params):
            if not np.isfinite(v) or (n in _POSITIVE and not v > 0):
                raise ConfigError(f"{self.kind} parameter {n} must be finite"
                                  f"{' and > 0' if n in _POSITIVE else ''}, got {v}")
        if self.kind == "uniform" and not self.params[1] > self.params[0]:
            raise ConfigError("uniform needs high > low")

    @classmethod
    def weibull(cls, shape, scale):
        return cls("weibull", (shape, scale))

    @classmethod
    def beta(cls, a, b):
        return cls("beta", (a, b))

    @classmethod
    def gaussian(cls, mean, std):
        return cls("gaussian", (mean, std))

    @classmethod
    def student_t(cls, dof, loc=0.0, scale=1.0):
        return cls("student_t", (dof, loc, scale))

    @classmethod
    def uniform(cls, low=0.0, high=1.0):
        return cls("uniform", (low, high))

    @classmethod
    def constant(cls, value):
        return cls("constant", (value,))

    def frozen(self):
        p = self.params
        if self.kind == "weibull":
            return stats.weibull_min(p[0], scale=p[1])
        if self.kind == "beta":
            return stats.beta(p[0], p[1])
        if self.kind == "gaussian":
            return stats.norm(p[0], p[1])
        if self.kind == "student_t":
            return stats.t(p[0], loc=p[1], scale=p[2])
        if self.kind == "uniform":
            return stats.uniform(p[0], p[1] - p[0])
        return None

    def ppf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "constant":
            return np.full(u.shape, self.params[0])
        return self.frozen().ppf(u)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.ppf(rng.random(size))

    def mean(self) -> float:
        if self.kind == "constant":
            return self.params[0]
        return float(self.frozen().mean())

    def to_dict(self) -> dict:
        return {"kind": self.kind, **dict(zip(_PARAMS[self.kind], self.params))}

    @classmethod
    def from_dict(cls, d) -> "DistributionSpec":
        kind = d.get("kind")
        if kind not in _PARAMS:
            raise ConfigError(f"unknown distribution {kind!r}")
        try:
            return cls(kind, tuple(d[n] for n in _PARAMS[kind]))
        except KeyError as exc:
            raise ConfigError(f"{kind} distribution missing parameter {exc}") from None


WIND_DEFAULT = DistributionSpec.weibull(2.06, 7.1)
PV_DEFAULT = DistributionSpec.beta(2.06, 2.5)
OUTLIER_NOISE_DEFAULT = DistributionSpec.student_t(10)


def lhs_sample(specs, K: int, seed) -> np.ndarray:
    """K x d Latin hypercube sample mapped through each dimension's inverse CDF.

    ``seed`` is an integer or a ``numpy.random.Generator``.
    """
    specs = list(specs)
    if K < 1:
        raise ConfigError("LHS needs K >= 1")
    if not specs:
        return np.empty((K, 0))
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, "lhs")
    U = qmc.LatinHypercube(d=len(specs), seed=rng).random(K)
    return np.column_stack([s.ppf(U[:, j]) for j, s in enumerate(specs)])


# ---------------------------------------------------------------------------
# synthetic time series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeriesSpec:
    """Synthetic load and RES profile.

    Each bus load (P and Q separately) is the base value times ``1 + a_t``
    with ``a_t`` a stationary AR(1) process; RES outputs are i.i.d. draws
    (Weibull kW for wind, Beta fraction of capacity for PV) capped at capacity.
    ``measurement_noise`` is the training-output noise std relative to the
    output's own std.
    """
    phi: float = 0.95
    innovation_std: float = 0.03
    wind: DistributionSpec = WIND_DEFAULT
    pv: DistributionSpec = PV_DEFAULT
    measurement_noise: float = 0.0

    def __post_init__(self):
        if not self.measurement_noise >= 0:
            raise ConfigError("measurement noise must be >= 0")
        if not -1 < self.phi < 1:
            raise ConfigError("AR(1) coefficient must lie in (-1, 1)")
        if not self.innovation_std >= 0:
            raise ConfigError("innovation std must be >= 0")


def _ar1(rng, n: int, cols: int, phi: float, sd: float) -> np.ndarray:
    a = np.empty((n, cols))
    a[0] = rng.normal(0.0, sd / np.sqrt(1.0 - phi**2), cols)
    eps = rng.normal(0.0, sd, (n - 1, cols))
    for t in range(1, n):
        a[t] = phi * a[t - 1] + eps[t - 1]
    return a


def res_output(kind: str, capacity_kw: float, spec: DistributionSpec, u) -> np.ndarray:
    """RES active power (kW) from uniforms u via the inverse CDF."""
    v = spec.ppf(u)
    if kind == "pv":
        v = v * capacity_kw
    return np.clip(v, 0.0, capacity_kw)


def generate_profiles(case: NetworkCase, n: int, seed: int, spec: SeriesSpec = SeriesSpec()):
    """Load (kW, kVAr) and RES output (kW) series, each of shape (n, n_bus)."""
    if n < 1:
        raise ConfigError("series length must be >= 1")
    rng = substream(seed, "series")
    p0, q0 = case.base_injections()
    nb = case.n_bus
    p_load = -p0 * (1.0 + _ar1(rng, n, nb, spec.phi, spec.innovation_std))
    q_load = -q0 * (1.0 + _ar1(rng, n, nb, spec.phi, spec.innovation_std))
    res = np.zeros((n, nb))
    U = rng.random((n, len(case.res)))
    for j, unit in enumerate(case.res):
        dist = spec.wind if unit.kind == "wind" else spec.pv
        res[:, case.index[unit.bus]] += res_output(unit.kind, unit.capacity_kw, dist, U[:, j])
    return p_load, q_load, res


def generate_injections(case: NetworkCase, n: int, seed: int, spec: SeriesSpec = SeriesSpec()):
    """Net injection series (n x n_bus) in kW/kVAr: RES output minus load."""
    p_load, q_load, res = generate_profiles(case, n, seed, spec)
    return res - p_load, -q_load


def generate_datasets(case: NetworkCase, n_train: int, n_test: int, outputs, seed: int,
                      spec: SeriesSpec = SeriesSpec()) -> tuple[Dataset, Dataset]:
    """Simulate one continuous series and split it into train (1..n) and test (n+1..n+n*).

    Training outputs carry i.i.d. Gaussian measurement noise with standard
    deviation ``spec.measurement_noise`` times the std of each clean training
    output column; test outputs are the noise-free simulator values, used as
    the reference for error metrics.
    """
    if n_train < 1 or n_test < 1:
        raise ConfigError("train and test lengths must be >= 1")
    P, Q = generate_injections(case, n_train + n_test, seed, spec)
    ds = simulate_time_series(case, P, Q, outputs, np.arange(1, n_train + n_test + 1))
    train, test = ds.subset(slice(0, n_train)), ds.subset(slice(n_train, None))
    if spec.measurement_noise > 0:
        rng = substream(seed, "series", 1)
        sd = spec.measurement_noise * train.Y.std(axis=0)
        train.Y = train.Y + rng.normal(size=train.Y.shape) * sd
    return train, test


# ---------------------------------------------------------------------------
# outliers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OutlierSpec:
    fraction: float = 0.25
    targets: tuple = ("vertical", "bad_leverage")
    noise: DistributionSpec = OUTLIER_NOISE_DEFAULT
    magnitude_scale: float = 8.0
    placement: str = "prefix"

    def __post_init__(self):
        if not 0 <= self.fraction:
            raise ConfigError("outlier fraction must be >= 0")
        if self.fraction >= 0.5:
            raise BreakdownExceededError(
                f"outlier fraction {self.fraction} >= 0.5 exceeds the breakdown point of any "
                "regression-equivariant estimator")
        targets = tuple(self.targets)
        bad = [t for t in targets if t not in OUTLIER_TARGETS]
        if bad or not targets:
            raise ConfigError(f"outlier targets must be a non-empty subset of {OUTLIER_TARGETS}, got {targets}")
        object.__setattr__(self, "targets", targets)
        if self.placement not in ("prefix", "random"):
            raise ConfigError("placement must be 'prefix' or 'random'")
        if not self.magnitude_scale > 0:
            raise ConfigError("magnitude_scale must be > 0")

    def n_rows(self, n: int) -> int:
        return int(np.floor(self.fraction * n + 1e-12))

    def to_dict(self) -> dict:
        return {"fraction": self.fraction, "targets": list(self.targets), "noise": self.noise.to_dict(),
                "magnitude_scale": self.magnitude_scale, "placement": self.placement}

    @classmethod
    def from_dict(cls, d) -> "OutlierSpec":
        d = dict(d)
        if "noise" in d:
            d["noise"] = DistributionSpec.from_dict(d["noise"])
        if "targets" in d:
            d["targets"] = tuple(d["targets"])
        return cls(**d)


@dataclass
class CorruptionMask:
    rows: np.ndarray        # (n,) bool
    inputs: np.ndarray      # (n, d) bool
    outputs: np.ndarray     # (n, m) bool

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.rows)


def column_scale(A) -> np.ndarray:
    """Per-column 1.4826 * MAD, falling back to the std and then to 1."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    s = MAD_FACTOR * np.median(np.abs(A - np.median(A, axis=0)), axis=0)
    std = A.std(axis=0)
    return np.where(s > 0, s, np.where(std > 0, std, 1.0))


def case_simulator(case: NetworkCase, outputs):
    """Callable X -> (X', Y) that re-solves the network at the bus injections in X.

    The slack columns of X are ignored and replaced by the measured slack
    injection of the new solution, so (X', Y) is a consistent pair.
    """
    root = case.index[case.slack]

    def run(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        P = X[:, 0::2].copy()
        Q = X[:, 1::2].copy()
        p0, q0 = case.base_injections()
        P[:, root] = p0[root]
        Q[:, root] = q0[root]
        sol = solve_power_flow_batch(case, P, Q)
        return injections_to_inputs(case, P, Q, sol), outputs_from_solution(case, sol, outputs)

    return run


def inject_outliers(dataset: Dataset, spec: OutlierSpec, seed, simulator=None):
    """Corrupt floor(fraction * n) rows of a dataset.

    Rows are drawn additively from ``spec.noise`` times ``magnitude_scale``
    times the robust scale of each clean column.  ``vertical`` touches the
    outputs, ``bad_leverage`` the inputs; ``good_leverage`` moves the inputs
    and then makes the outputs consistent, through ``simulator`` when one is
    given (a callable ``X -> (X', Y)``) or along a least-squares linear trend
    fitted to the clean rows.

    Returns the corrupted copy and a :class:`CorruptionMask`.
    """
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, "outliers")
    n, d = dataset.X.shape
    m = dataset.Y.shape[1]
    out = dataset.copy()
    mask = CorruptionMask(np.zeros(n, bool), np.zeros((n, d), bool), np.zeros((n, m), bool))
    k = spec.n_rows(n)
    if spec.fraction > 0 and k < 1:
        raise ConfigError(f"fraction {spec.fraction} of {n} rows corrupts no row")
    if k == 0:
        return out, mask
    rows = np.arange(k) if spec.placement == "prefix" else np.sort(rng.choice(n, k, replace=False))
    mask.rows[rows] = True

    sx = column_scale(dataset.X)
    sy = column_scale(dataset.Y)
    amp = spec.magnitude_scale
    if "bad_leverage" in spec.targets:
        out.X[rows] += amp * sx * spec.noise.sample(rng, (k, d))
        mask.inputs[rows] = True
    if "vertical" in spec.targets:
        out.Y[rows] += amp * sy * spec.noise.sample(rng, (k, m))
        mask.outputs[rows] = True
    if "good_leverage" in spec.targets:
        # rows already moved by bad_leverage keep their inconsistent X
        good = rows if "bad_leverage" not in spec.targets else np.array([], int)
        if good.size:
            dX = amp * sx * spec.noise.sample(rng, (good.size, d))
            if simulator is not None:
                Xg, Yg = simulator(dataset.X[good] + dX)
                out.X[good] = Xg
                out.Y[good] = Yg + (out.Y[good] - dataset.Y[good])
            else:
                A = np.hstack([np.ones((n, 1)), dataset.X])
                coef, *_ = np.linalg.lstsq(A, dataset.Y, rcond=None)
                out.X[good] += dX
                out.Y[good] += dX @ coef[1:]
            mask.inputs[good] = True
            mask.outputs[good] = True
    return out, mask


# ---------------------------------------------------------------------------
# Monte Carlo reference
# ---------------------------------------------------------------------------

@dataclass
class EnsembleSummary:
    mean: np.ndarray
    std: np.ndarray
    p05: np.ndarray
    p50: np.ndarray
    p95: np.ndarray


@dataclass
class MonteCarloEnsemble:
    """Per-instance input samples (I, K, d) and simulator outputs (I, K, m)."""
    inputs: np.ndarray
    outputs: np.ndarray
    output_names: list = field(default_factory=list)
    timestamps: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.outputs.shape[1]

    def summary(self) -> EnsembleSummary:
        Y = self.outputs
        std = Y.std(axis=1, ddof=1) if self.K > 1 else np.zeros((Y.shape[0], Y.shape[2]))
        p05, p50, p95 = np.percentile(Y, [5, 50, 95], axis=1)
        return EnsembleSummary(Y.mean(axis=1), std, p05, p50, p95)

    def histogram(self, instance: int, output: int = 0, bins: int = 50):
        density, edges = np.histogram(self.outputs[instance, :, output], bins=bins, density=True)
        return edges[:-1], edges[1:], density


def monte_carlo(instance_specs, K: int, seed: int, simulator) -> MonteCarloEnsemble:
    """Generic Monte Carlo: LHS over each instance's specs, then ``simulator(samples) -> (X, Y)``.

    Instance ``i`` draws from sub-stream ``("lhs", i)``.
    """
    if K < 1:
        raise ConfigError("Monte Carlo needs K >= 1")
    Xs, Ys = [], []
    for i, specs in enumerate(instance_specs):
        S = lhs_sample(specs, K, substream(seed, "lhs", i))
        try:
            X, Y = simulator(S)
        except RGPFError as exc:
            raise type(exc)(f"Monte Carlo instance {i}: {exc}") from None
        Xs.append(np.atleast_2d(X))
        Ys.append(np.asarray(Y, dtype=float).reshape(K, -1))
    return MonteCarloEnsemble(np.stack(Xs), np.stack(Ys))


@dataclass(frozen=True)
class InstanceSpec:
    """Uncertain injections of one instance: a load distribution per bus
    (P and Q, kW/kVAr, positive = consumption) and one output distribution
    per RES unit."""
    p_load: tuple
    q_load: tuple
    res: tuple


def instance_from_loads(case: NetworkCase, p_load, q_load, rel_std: float = 0.05,
                        wind: DistributionSpec = WIND_DEFAULT, pv: DistributionSpec = PV_DEFAULT) -> InstanceSpec:
    """Gaussian loads N(L, rel_std |L|) around a nominal profile; zero loads stay constant."""
    def g(v):
        return DistributionSpec.gaussian(v, rel_std * abs(v)) if v != 0 and rel_std > 0 \
            else DistributionSpec.constant(v)
    res = tuple(wind if u.kind == "wind" else pv for u in case.res)
    return InstanceSpec(tuple(g(v) for v in p_load), tuple(g(v) for v in q_load), res)


def monte_carlo_reference(case: NetworkCase, instance_specs, K: int, seed: int, outputs) -> MonteCarloEnsemble:
    """Monte Carlo reference ensemble from the power-flow simulator.

    RES dimensions are sampled as LHS uniforms and mapped through the unit's
    inverse CDF with capping at capacity.
    """
    nb = case.n_bus
    Xs, Ys = [], []
    for i, inst in enumerate(instance_specs):
        if len(inst.p_load) != nb or len(inst.q_load) != nb or len(inst.res) != len(case.res):
            raise InputShapeError(f"instance {i} does not match the case dimensions")
        specs = [*inst.p_load, *inst.q_load, *(DistributionSpec.uniform() for _ in inst.res)]
        S = lhs_sample(specs, K, substream(seed, "lhs", i))
        P = -S[:, :nb]
        Q = -S[:, nb:2 * nb]
        for j, unit in enumerate(case.res):
            P[:, case.index[unit.bus]] += res_output(unit.kind, unit.capacity_kw, inst.res[j], S[:, 2 * nb + j])
        try:
            sol = solve_power_flow_batch(case, P, Q)
        except RGPFError as exc:
            raise type(exc)(f"Monte Carlo instance {i}: {exc}") from None
        Xs.append(injections_to_inputs(case, P, Q, sol))
        Ys.append(outputs_from_solution(case, sol, outputs))
    return MonteCarloEnsemble(np.stack(Xs), np.stack(Ys), list(outputs))


def write_ensemble_summary(path, ensemble: MonteCarloEnsemble, output: int = 0) -> None:
    s = ensemble.summary()
    ts = ensemble.timestamps if ensemble.timestamps is not None else np.arange(1, s.mean.shape[0] + 1)
    rows = ([str(int(t)), *(repr(float(a[i, output])) for a in (s.mean, s.std, s.p05, s.p50, s.p95))]
            for i, t in enumerate(ts))
    write_csv_atomic(path, ["timestamp", "mean", "std", "p05", "p50", "p95"], rows)


def write_histogram(path, ensemble: MonteCarloEnsemble, instance: int, output: int = 0, bins: int = 50) -> None:
    lo, hi, dens = ensemble.histogram(instance, output, bins)
    write_csv_atomic(path, ["bin_left", "bin_right", "density"],
                     ([repr(float(a)), repr(float(b)), repr(float(c))] for a, b, c in zip(lo, hi, dens)))


# ---------------------------------------------------------------------------
# metrics and sweep
# ---------------------------------------------------------------------------

def _pair(pred, ref):
    pred = np.asarray(pred, dtype=float).ravel()
    ref = np.asarray(ref, dtype=float).ravel()
    if pred.size != ref.size:
        raise InputShapeError(f"prediction has {pred.size} values, reference has {ref.size}")
    if pred.size == 0:
        raise InputShapeError("metrics need at least one value")
    return pred - ref


def rmse(pred, ref) -> float:
    e = _pair(pred, ref)
    return float(np.sqrt(np.mean(e * e)))


def mae(pred, ref) -> float:
    return float(np.mean(np.abs(_pair(pred, ref))))


@dataclass(frozen=True)
class Protocol:
    """Experiment constants: series lengths, outputs, model and outlier settings."""
    n_train: int = 150
    n_test: int = 60
    outputs: tuple = ("vmag_19",)
    model: object = None            # gp.ModelSpec template; mode is set per run
    outliers: OutlierSpec = field(default_factory=OutlierSpec)
    series: SeriesSpec = field(default_factory=SeriesSpec)
    modes: tuple = ("rpm", "gpm")

    def model_spec(self, mode: str):
        from .gp import ModelSpec
        base = self.model if self.model is not None else ModelSpec()
        return replace(base, mode=mode)


SWEEP_HEADER = ["fraction", "seed", "mode", "quantity", "rmse", "mae"]


@dataclass
class SweepRow:
    fraction: float
    seed: int
    mode: str
    quantity: str
    rmse: float
    mae: float
    error: str | None = None


def run_cell(case: NetworkCase, protocol: Protocol, fraction: float, seed: int) -> list[SweepRow]:
    """Generate, corrupt, train both modes and score on the clean test set for one (fraction, seed)."""
    from .gp import predict, train
    train_ds, test_ds = generate_datasets(case, protocol.n_train, protocol.n_test,
                                          list(protocol.outputs), seed, protocol.series)
    ospec = replace(protocol.outliers, fraction=fraction)
    sim = case_simulator(case, list(protocol.outputs)) if "good_leverage" in ospec.targets else None
    corrupted, _ = inject_outliers(train_ds, ospec, substream(seed, "outliers"), simulator=sim)
    rows = []
    for quantity in protocol.outputs:
        for mode in protocol.modes:
            try:
                model = train(corrupted.X, corrupted.y(quantity), protocol.model_spec(mode))
                pred = predict(model, test_ds.X, full_covariance=False).mean
                ref = test_ds.y(quantity)
                rows.append(SweepRow(fraction, seed, mode, quantity, rmse(pred, ref), mae(pred, ref)))
            except RGPFError as exc:
                log.warning("sweep cell fraction=%s seed=%s mode=%s failed: %s", fraction, seed, mode, exc)
                rows.append(SweepRow(fraction, seed, mode, quantity, np.nan, np.nan, str(exc)))
    return rows


def _cell_task(args):
    return run_cell(*args)


def contamination_sweep(case: NetworkCase, protocol: Protocol, fractions, seeds, jobs: int = 1) -> list[SweepRow]:
    """Test RMSE/MAE of every mode for each (fraction, seed); failures are recorded, not raised."""
    fractions = [float(f) for f in fractions]
    if any(not 0 <= f <= 0.25 for f in fractions):
        raise ConfigError("sweep fractions must lie in [0, 0.25]")
    tasks = [(case, protocol, f, int(s)) for f in fractions for s in seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell_task, tasks))
    else:
        results = [_cell_task(t) for t in tasks]
    return [row for cell in results for row in cell]


def sweep_means(rows) -> dict:
    """Mean RMSE over seeds keyed by (fraction, mode, quantity); failed cells are skipped."""
    acc: dict = {}
    for r in rows:
        if r.error is None:
            acc.setdefault((r.fraction, r.mode, r.quantity), []).append(r.rmse)
    return {k: float(np.mean(v)) for k, v in acc.items()}


def write_sweep_csv(path, rows) -> None:
    def cell(v):
        return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))
    write_csv_atomic(path, SWEEP_HEADER,
                     ([repr(float(r.fraction)), str(r.seed), r.mode, r.quantity, cell(r.rmse), cell(r.mae)]
                      for r in rows))
