"""Simulation lab: data-generating processes, Monte Carlo experiments, rolling forecasts.

Simulation accuracy is scored against the noise-free signal ``x'beta``
(MSFE on a fresh test sample of ``ceil(N / 2)`` rows, MSE on the training
rows). Rolling forecasts on observed data are scored against realized ``y``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from rsa_ensemble import baselines
from rsa_ensemble.errors import DegenerateSampleError, InvalidInputError, RsaError
from rsa_ensemble.linalg import Dataset, least_squares_min_norm
from rsa_ensemble.rsa import RsaConfig, fit_rsa
from rsa_ensemble.subsets import RngStream, broadcast_probs, draw_ensemble

DECAYS = {"poly": 0.51, "exp": 0.25}
PLACEMENTS = ("ordered", "random")
COVARIANCES = ("ar1", "random", "orthogonal")

# Stream namespaces (first element of the stream id).
_DGP_STREAM = 10
_REP_STREAM = 11
_ROLL_STREAM = 12


@dataclass(frozen=True)
class DgpConfig:
    """Linear DGP ``y = X beta + e``.

    ``alpha`` defaults to 0.51 for polynomial decay ``j^-alpha`` and 0.25 for
    exponential decay ``exp(-j^alpha)``. The noise variance is calibrated to
    ``snr`` unless ``sigma2`` is given. ``seed`` fixes beta's placement and a
    random covariance; replications redraw only the design and noise.
    """

    N: int
    K: int
    K_star: int
    decay: str = "poly"
    alpha: float | None = None
    placement: str = "random"
    cov: str = "ar1"
    rho: float = 0.9
    snr: float = 0.7
    sigma2: float | None = None
    seed: int = 0
    eig_range: tuple = (0.1, 2.0)

    def __post_init__(self):
        if self.N < 1 or self.K < 1 or not 1 <= self.K_star <= self.K:
            raise InvalidInputError(f"need N, K >= 1 and 1 <= K_star <= K, got {self}")
        if self.decay not in DECAYS:
            raise InvalidInputError(f"decay must be one of {tuple(DECAYS)}, got {self.decay!r}")
        if self.placement not in PLACEMENTS:
            raise InvalidInputError(f"placement must be one of {PLACEMENTS}, got {self.placement!r}")
        if self.cov not in COVARIANCES:
            raise InvalidInputError(f"cov must be one of {COVARIANCES}, got {self.cov!r}")
        if not -1.0 < self.rho < 1.0:
            raise InvalidInputError(f"rho must lie in (-1, 1), got {self.rho}")
        if self.sigma2 is None and not 0.0 < self.snr < 1.0:
            raise InvalidInputError(f"snr must lie in (0, 1), got {self.snr}")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise InvalidInputError(f"sigma2 must be positive, got {self.sigma2}")
        lo, hi = self.eig_range
        if not 0 < lo <= hi:
            raise InvalidInputError(f"eig_range must satisfy 0 < lo <= hi, got {self.eig_range}")
        if self.cov == "orthogonal" and self.K > self.N:
            raise InvalidInputError("orthogonal design needs K <= N")

    @property
    def decay_rate(self) -> float:
        return DECAYS[self.decay] if self.alpha is None else float(self.alpha)

    @property
    def n_test(self) -> int:
        return math.ceil(self.N / 2)


def gen_coefficients(cfg: DgpConfig, rng) -> np.ndarray:
    j = np.arange(1, cfg.K_star + 1, dtype=float)
    if cfg.decay == "poly":
        values = j ** (-cfg.decay_rate)
    else:
        values = np.exp(-(j ** cfg.decay_rate))
    beta = np.zeros(cfg.K)
    if cfg.placement == "ordered":
        beta[: cfg.K_star] = values
    else:
        g = rng.generator() if isinstance(rng, RngStream) else rng
        beta[g.permutation(cfg.K)[: cfg.K_star]] = values
    return beta


def ar1_covariance(K: int, rho: float) -> np.ndarray:
    idx = np.arange(K)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _haar_orthogonal(K, g):
    q, r = np.linalg.qr(g.standard_normal((K, K)))
    return q * np.sign(np.diag(r))


def gen_covariance(cfg: DgpConfig, rng) -> np.ndarray:
    """Covariance of the covariate rows.

    ``orthogonal`` returns the identity; the design itself then comes from
    :func:`make_orthogonal_design`.
    """
    if cfg.cov == "ar1":
        return ar1_covariance(cfg.K, cfg.rho)
    if cfg.cov == "orthogonal":
        return np.eye(cfg.K)
    g = rng.generator() if isinstance(rng, RngStream) else rng
    Q = _haar_orthogonal(cfg.K, g)
    lam = g.uniform(*cfg.eig_range, size=cfg.K)
    lam = lam / lam.mean()
    S = (Q * lam) @ Q.T
    return 0.5 * (S + S.T)


def sample_design(Sigma, N: int, rng) -> np.ndarray:
    """``N`` i.i.d. rows from N(0, Sigma)."""
    g = rng.generator() if isinstance(rng, RngStream) else rng
    Sigma = np.asarray(Sigma, dtype=float)
    K = Sigma.shape[0]
    Z = g.standard_normal((N, K))
    try:
        C = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        lam, V = np.linalg.eigh(Sigma)
        C = V * np.sqrt(np.clip(lam, 0.0, None))
    return Z @ C.T


def make_orthogonal_design(N: int, K: int, rng=None) -> np.ndarray:
    """Design with ``X'X = N I_K``: orthonormalized Gaussian columns scaled by sqrt(N)."""
    if K > N:
        raise InvalidInputError(f"orthogonal design needs K <= N, got K={K}, N={N}")
    if rng is None:
        g = np.random.default_rng(0)
    else:
        g = rng.generator() if isinstance(rng, RngStream) else rng
    q, _ = np.linalg.qr(g.standard_normal((N, K)))
    return q * np.sqrt(N)


def calibrate_sigma(beta, Sigma, snr: float) -> float:
    """Noise variance giving ``Var(x'b) / (Var(x'b) + s2) = snr``."""
    beta = np.asarray(beta, dtype=float)
    signal = float(beta @ np.asarray(Sigma, dtype=float) @ beta)
    if not signal > 0:
        raise InvalidInputError("signal variance beta' Sigma beta must be positive")
    if not 0.0 < snr < 1.0:
        raise InvalidInputError(f"snr must lie in (0, 1), got {snr}")
    return signal * (1.0 - snr) / snr


@dataclass(frozen=True)
class Dgp:
    """A realized DGP: fixed coefficients, covariance and noise variance."""

    cfg: DgpConfig
    beta: np.ndarray
    Sigma: np.ndarray
    sigma2: float

    @classmethod
    def build(cls, cfg: DgpConfig) -> "Dgp":
        beta = gen_coefficients(cfg, RngStream(cfg.seed, (_DGP_STREAM, 0)))
        Sigma = gen_covariance(cfg, RngStream(cfg.seed, (_DGP_STREAM, 1)))
        sigma2 = cfg.sigma2 if cfg.sigma2 is not None else calibrate_sigma(beta, Sigma, cfg.snr)
        return cls(cfg, beta, Sigma, float(sigma2))

    def draw(self, g: np.random.Generator):
        """One replication: ``(train Dataset, X_test)``."""
        cfg = self.cfg
        if cfg.cov == "orthogonal":
            X = make_orthogonal_design(cfg.N, cfg.K, g)
            X_test = g.standard_normal((cfg.n_test, cfg.K))
        else:
            X = sample_design(self.Sigma, cfg.N, g)
            X_test = sample_design(self.Sigma, cfg.n_test, g)
        y = X @ self.beta + math.sqrt(self.sigma2) * g.standard_normal(cfg.N)
        return Dataset(X, y), X_test


METHOD_KINDS = ("rsa", "naive", "mma", "rsr", "rpr", "ols", "oracle")


@dataclass(frozen=True)
class Method:
    """A named estimator recipe.

    ``params`` by kind: rsa ``p, M, L, first_round, sigma2``; naive ``p, M, L``;
    mma ``sigma2``; rsr and rpr ``P, B``; ols and oracle take none. A
    ``sigma2`` of ``"true"`` plugs in the DGP noise variance.
    """

    name: str
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise InvalidInputError(f"unknown method kind {self.kind!r}; expected one of {METHOD_KINDS}")

    def _sigma2(self, truth):
        s2 = self.params.get("sigma2")
        if s2 == "true":
            if truth is None:
                raise InvalidInputError(f"method {self.name}: sigma2='true' needs a known DGP")
            return truth.sigma2
        return None if s2 in (None, "estimate") else float(s2)

    def fit(self, data: Dataset, seed: int, truth: Dgp | None = None) -> np.ndarray:
        """Fit on ``data`` and return the K-vector of aggregated coefficients."""
        p = self.params
        if self.kind == "rsa":
            cfg = RsaConfig(probs=p.get("p", 0.1), M=p.get("M", 30), L=p.get("L", 30),
                            first_round=p.get("first_round", "mallows"),
                            sigma2=self._sigma2(truth), seed=seed)
            return fit_rsa(data, cfg).beta_agg
        if self.kind == "naive":
            probs = broadcast_probs(p.get("p", 0.1), data.K)
            ens = draw_ensemble(probs, p.get("M", 30), p.get("L", 30), seed)
            return baselines.fit_naive(data, ens).beta_agg
        if self.kind == "mma":
            return baselines.fit_nested_mma(data, sigma2=self._sigma2(truth)).beta_agg
        if self.kind == "rsr":
            return baselines.fit_rsr(data, int(p["P"]), int(p.get("B", baselines.DEFAULT_B)), seed).beta_agg
        if self.kind == "rpr":
            return baselines.fit_rpr(data, int(p["P"]), int(p.get("B", baselines.DEFAULT_B)), seed).beta_agg
        if self.kind == "ols":
            return least_squares_min_norm(data.X, data.y).beta
        if truth is None:
            raise InvalidInputError("the oracle method needs the true coefficients")
        return truth.beta.copy()

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "Method":
        d = dict(d)
        kind = d.pop("kind")
        name = d.pop("name", kind)
        return cls(name, kind, d)


@dataclass
class ExperimentResult:
    method: str
    msfe: np.ndarray
    mse: np.ndarray
    errors: list = field(default_factory=list)

    @property
    def reps(self) -> int:
        return self.msfe.shape[0]

    @property
    def failed(self) -> bool:
        return bool(self.errors)

    @staticmethod
    def _sd(x):
        x = x[np.isfinite(x)]
        return float(np.std(x, ddof=1)) if x.size > 1 else 0.0

    @property
    def msfe_mean(self) -> float:
        x = self.msfe[np.isfinite(self.msfe)]
        return float(x.mean()) if x.size else float("nan")

    @property
    def mse_mean(self) -> float:
        x = self.mse[np.isfinite(self.mse)]
        return float(x.mean()) if x.size else float("nan")

    @property
    def msfe_sd(self) -> float:
        return self._sd(self.msfe)

    @property
    def mse_sd(self) -> float:
        return self._sd(self.mse)


def replication_seed(seed: int, rep: int) -> int:
    """Seed shared by every method within replication ``rep``."""
    return int(RngStream(seed, (_REP_STREAM, rep, 1)).generator().integers(0, 2**63 - 1))


def _one_replication(dgp, methods, seed, rep):
    g = RngStream(seed, (_REP_STREAM, rep, 0)).generator()
    train, X_test = dgp.draw(g)
    method_seed = replication_seed(seed, rep)
    mu_train = train.X @ dgp.beta
    mu_test = X_test @ dgp.beta
    out = []
    for m in methods:
        try:
            coef = m.fit(train, method_seed, dgp)
        except (RsaError, np.linalg.LinAlgError) as exc:
            out.append((np.nan, np.nan, f"rep {rep}: {type(exc).__name__}: {exc}"))
            continue
        msfe = float(np.mean((X_test @ coef - mu_test) ** 2))
        mse = float(np.mean((train.X @ coef - mu_train) ** 2))
        out.append((msfe, mse, None))
    return out


def run_experiment(dgp: DgpConfig, methods, reps: int, seed: int,
                   threads: int | None = None) -> list:
    """Monte Carlo comparison of ``methods`` over ``reps`` independent replications."""
    if reps < 1:
        raise InvalidInputError(f"reps must be positive, got {reps}")
    methods = list(methods)
    if not methods:
        raise InvalidInputError("need at least one method")
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise InvalidInputError(f"method names must be unique, got {names}")
    realized = Dgp.build(dgp)

    def task(rep):
        return _one_replication(realized, methods, seed, rep)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(task, range(reps)))
    else:
        rows = [task(r) for r in range(reps)]

    results = []
    for i, m in enumerate(methods):
        msfe = np.array([r[i][0] for r in rows])
        mse = np.array([r[i][1] for r in rows])
        errors = [r[i][2] for r in rows if r[i][2] is not None]
        results.append(ExperimentResult(m.name, msfe, mse, errors))
    return results


@dataclass(frozen=True)
class HorizonScore:
    horizon: int
    msfe: float
    sd: float
    n_forecasts: int


def rolling_forecast(data: Dataset, window: int, horizons, method: Method, seed: int = 0,
                     threads: int | None = None) -> list:
    """Rolling-window out-of-sample evaluation.

    For each origin ``t`` (1-based) in ``window .. N - max(h)`` the method is
    fitted on rows ``t - window + 1 .. t`` and row ``t + h`` is forecast from
    its covariates for every horizon ``h``.
    """
    horizons = sorted({int(h) for h in horizons})
    if not horizons or horizons[0] < 1:
        raise InvalidInputError(f"horizons must be positive integers, got {horizons}")
    if window < 1:
        raise InvalidInputError(f"window must be positive, got {window}")
    hmax = horizons[-1]
    if window + hmax > data.N:
        raise DegenerateSampleError(
            f"need window + max(horizon) <= N rows, got {window} + {hmax} > {data.N}"
        )
    origins = range(window, data.N - hmax + 1)

    def task(t):
        sub = Dataset(data.X[t - window:t], data.y[t - window:t])
        s = int(RngStream(seed, (_ROLL_STREAM, t)).generator().integers(0, 2**63 - 1))
        coef = method.fit(sub, s)
        rows = [t - 1 + h for h in horizons]
        return (data.X[rows] @ coef - data.y[rows]) ** 2

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            errs = np.array(list(pool.map(task, origins)))
    else:
        errs = np.array([task(t) for t in origins])
    out = []
    for i, h in enumerate(horizons):
        e = errs[:, i]
        sd = float(np.std(e, ddof=1)) if e.size > 1 else 0.0
        out.append(HorizonScore(h, float(e.mean()), sd, int(e.size)))
    return out
