"""Monte Carlo experiments confronting simulated winding counts with the
theoretical moments and the central limit theorem.

All randomness is derived from the experiment seed through counter-based
streams indexed by replication, so results are independent of worker
count and execution order; reports serialize byte-identically for a fixed
config (timestamps live in a separate metadata sidecar).
"""
from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .covmodel import CovarianceModel, ModelClass, classify, model_from_spec
from .errors import AliasingError, ConfigError, WindlabError
from .gauss import (QuadrantCorr, conditional_cov, generic_regression,
                    joint_cov_matrix, quadrant_expectation,
                    quadrant_expectation_series)
from .moments import (expectation_rate, variance_bound_two_alpha,
                      variance_rate_general, variance_rate_independent)
from .pathgen import (CholeskySampler, CirculantSampler, GridSpec,
                      SpectralSampler, export_path_csv)
from .winding import count_windings_arrays, smoothed_winding

__all__ = [
    "ExperimentConfig",
    "CltReport",
    "run_expectation",
    "run_variance",
    "run_clt",
    "run_lemma_check",
    "run_smoothing",
    "run_experiment",
    "simulate_windings",
    "random_psd_quadrant",
    "quadrant_mc",
    "write_report",
]

SCHEMA = "windlab-report/1"
_CHUNK = 200


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------
@dataclass
class ExperimentConfig:
    model: dict
    kind: str = "expectation"
    backend: str = "circulant"
    t_ladder: list = field(default_factory=lambda: [100.0])
    dt: float = 0.01
    replications: int = 1000
    seed: int = 1
    workers: int = 1
    n_freq: int = 4096
    epsilon_ladder: Optional[list] = None
    correlations_file: Optional[str] = None
    lemma_mc_samples: int = 10_000_000
    lemma_random_sets: int = 500
    lemma_spot_cases: int = 20
    export_paths: int = 0
    out_dir: Optional[str] = None

    KINDS = ("expectation", "variance", "clt", "lemma_check", "smoothing")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"kind must be one of {self.KINDS}, got '{self.kind}'")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if list(self.t_ladder) != sorted(set(self.t_ladder)):
            raise ConfigError("t_ladder must be strictly increasing")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def build_model(self) -> CovarianceModel:
        return model_from_spec(self.model)


# ----------------------------------------------------------------------
# simulation engine
# ----------------------------------------------------------------------
def _make_sampler(model, grid, backend, n_freq):
    if backend == "circulant":
        return CirculantSampler(model, grid)
    if backend == "spectral":
        return SpectralSampler(model, grid, n_freq=n_freq)
    if backend == "cholesky":
        return CholeskySampler(model, grid)
    raise ConfigError(f"unknown backend '{backend}'")


def simulate_windings(model, T, dt, backend, seed, reps, workers=1,
                      n_freq=4096, keep_paths=0):
    """Winding counts for ``reps`` replications.

    Returns a dict with the per-replication signed counts (NaN where the
    aliasing guard rejected the path), agreement flags, and bookkeeping.
    """
    grid = GridSpec.from_dt(T, dt)
    sampler = _make_sampler(model, grid, backend, n_freq)
    chunks = [list(range(i, min(i + _CHUNK, reps))) for i in range(0, reps, _CHUNK)]

    def do_chunk(streams):
        n_w = np.full(len(streams), np.nan)
        agree = np.zeros(len(streams), dtype=bool)
        kept = []
        if isinstance(sampler, CirculantSampler):
            arr = sampler.sample_batch(seed, streams)
            pairs = ((arr[i, 0], arr[i, 1]) for i in range(len(streams)))
        else:
            pairs = ((p.x1, p.x2) for p in (sampler.sample(seed, s) for s in streams))
        for i, (x1, x2) in enumerate(pairs):
            if streams[i] < keep_paths:
                kept.append((streams[i], x1.copy(), x2.copy()))
            try:
                r = count_windings_arrays(x1, x2)
            except AliasingError:
                continue
            n_w[i] = r.n_w
            agree[i] = r.agreement
        return n_w, agree, kept

    if workers <= 1:
        parts = [do_chunk(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(do_chunk, chunks))
    n_w = np.concatenate([p[0] for p in parts])
    agree = np.concatenate([p[1] for p in parts])
    kept = [k for p in parts for k in p[2]]
    ok = ~np.isnan(n_w)
    return {
        "n_w": n_w, "accepted": ok, "agreement": agree,
        "n_rejected": int(np.count_nonzero(~ok)),
        "grid": grid, "sampler": sampler, "kept_paths": kept,
    }


def _mean_se(x):
    m = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else None
    return m, se


def _bootstrap_var_ci(x, n_boot=1000, level=0.99, seed=0):
    rng = np.random.default_rng(seed)
    n = len(x)
    idx = rng.integers(0, n, size=(n_boot, n))
    vs = np.var(x[idx], axis=1, ddof=1)
    a = (1.0 - level) / 2.0
    return float(np.quantile(vs, a)), float(np.quantile(vs, 1.0 - a))


def lattice_ks(counts, mean, sd):
    """One-sample KS of an integer-valued sample against Normal(mean, sd),
    compared at the continuity-corrected lattice edges k + 1/2.

    A raw KS against the continuous normal has a deterministic floor of
    about phi(0)/(2 sd) from the unit lattice alone, which swamps the
    sampling noise at desk scale; comparing the two step functions at the
    lattice edges removes it.  The continuous-case p-value is conservative
    for discrete data.
    """
    counts = np.sort(np.asarray(counts, float))
    n = len(counts)
    kk = np.arange(math.floor(counts[0]) - 1, math.ceil(counts[-1]) + 1)
    emp = np.searchsorted(counts, kk + 0.25, side="right") / n
    null = stats.norm.cdf((kk + 0.5 - mean) / sd)
    d = float(np.max(np.abs(emp - null)))
    return d, float(stats.kstwo.sf(d, n))


# ----------------------------------------------------------------------
# experiment runners
# ----------------------------------------------------------------------
def run_expectation(cfg: ExperimentConfig) -> dict:
    """MC mean of N_W vs T * expectation_rate, pass at 3 standard errors."""
    model = cfg.build_model()
    rate = expectation_rate(model)
    rows = []
    for T in cfg.t_ladder:
        sim = simulate_windings(model, T, cfg.dt, cfg.backend, cfg.seed,
                                cfg.replications, cfg.workers, cfg.n_freq,
                                keep_paths=cfg.export_paths)
        vals = sim["n_w"][sim["accepted"]]
        mean, se = _mean_se(vals)
        theory = T * rate
        row = {
            "T": T, "replications": cfg.replications,
            "n_rejected": sim["n_rejected"],
            "mc_mean": mean, "mc_se": se, "theory_mean": theory,
        }
        if se is None:
            row["pass"] = None
            row["note"] = "SE not available at M = 1"
        else:
            row["pass"] = bool(abs(mean - theory) <= 3.0 * se) if se > 0 else bool(mean == theory)
        rows.append(row)
        _maybe_export_paths(cfg, sim)
    ok = all(r["pass"] is not False for r in rows)
    return _report("expectation", cfg, {"expectation_rate": rate, "rows": rows}, ok)


def run_variance(cfg: ExperimentConfig) -> dict:
    """Sample Var(N_W)/T with a bootstrap CI against the theoretical rates,
    plus the horizon convergence trend."""
    model = cfg.build_model()
    independent = classify(model) in (ModelClass.INDEPENDENT, ModelClass.IID)
    v_inf = None
    indep_extras = {}
    if independent:
        rep = variance_rate_independent(model)
        v_inf = rep.v_inf
        indep_extras = {"v_inf": rep.v_inf, "v_inf_err": rep.v_inf_err,
                        **rep.extras}
    rows = []
    for T in cfg.t_ladder:
        sim = simulate_windings(model, T, cfg.dt, cfg.backend, cfg.seed,
                                cfg.replications, cfg.workers, cfg.n_freq)
        vals = sim["n_w"][sim["accepted"]]
        var_rate = float(np.var(vals, ddof=1)) / T if len(vals) > 1 else None
        lo, hi = (None, None)
        if var_rate is not None:
            lo, hi = _bootstrap_var_ci(vals, seed=cfg.seed + int(T * 1e3))
            lo, hi = lo / T, hi / T
        gen = variance_rate_general(model, T)
        ref = v_inf if independent else gen.v_t
        row = {
            "T": T, "replications": cfg.replications,
            "n_rejected": sim["n_rejected"],
            "var_rate": var_rate, "ci99_lo": lo, "ci99_hi": hi,
            "v_T_general": gen.v_t, "v_T_general_err": gen.v_t_err,
            "reference": ref,
        }
        if var_rate is not None and ref is not None:
            half = (hi - lo) / 2.0
            row["ci_covers_reference"] = bool(lo <= ref <= hi)
            row["abs_error"] = abs(var_rate - ref)
            row["tolerance"] = 0.05 * abs(ref) + half
            row["pass"] = bool(row["ci_covers_reference"]
                               and row["abs_error"] <= row["tolerance"])
        else:
            row["pass"] = None
        rows.append(row)
    errs = [r["abs_error"] for r in rows if r.get("abs_error") is not None]
    trend_ok = sum(b <= a for a, b in zip(errs, errs[1:]))
    body = {"independent": independent, **indep_extras, "rows": rows,
            "trend_improving_steps": trend_ok,
            "trend_steps": max(len(errs) - 1, 0)}
    ok = all(r["pass"] is not False for r in rows)
    return _report("variance", cfg, body, ok)


@dataclass
class CltReport:
    per_t: list
    v_inf: Optional[float]
    standardized_by: str

    def to_dict(self):
        return dict(self.__dict__)


def run_clt(cfg: ExperimentConfig) -> dict:
    """Kolmogorov-Smirnov test of (N_W - E N_W)/sqrt(T) against
    Normal(0, V_inf), with skewness/kurtosis moments."""
    model = cfg.build_model()
    rate = expectation_rate(model)
    independent = classify(model) in (ModelClass.INDEPENDENT, ModelClass.IID)
    v_inf = None
    standardized_by = "sample variance (V_inf unavailable)"
    if independent:
        try:
            v_inf = variance_rate_independent(model).v_inf
            standardized_by = "independent-case quadrature V_inf"
        except WindlabError:
            v_inf = None
    else:
        try:
            v_inf = variance_rate_general(model, max(cfg.t_ladder)).v_inf
            standardized_by = "general-case extrapolated V_inf"
        except WindlabError:
            v_inf = None
    per_t = []
    for T in cfg.t_ladder:
        sim = simulate_windings(model, T, cfg.dt, cfg.backend, cfg.seed,
                                cfg.replications, cfg.workers, cfg.n_freq)
        vals = sim["n_w"][sim["accepted"]]
        std_sample = (vals - T * rate) / math.sqrt(T)
        scale = math.sqrt(v_inf) if v_inf else float(np.std(std_sample, ddof=1))
        # lattice-edge KS on the raw counts == KS of the standardized
        # sample against Normal(0, scale) with the unit-lattice correction
        ks_d, ks_p = lattice_ks(vals, T * rate, scale * math.sqrt(T))
        m = len(std_sample)
        skew = float(stats.skew(std_sample))
        kurt = float(stats.kurtosis(std_sample))
        per_t.append({
            "T": T, "sample_size": m,
            "mean_nw": float(np.mean(vals)), "var_nw": float(np.var(vals, ddof=1)),
            "ks_distance": ks_d, "p_value": ks_p,
            "v_inf_used": v_inf,
            "skewness": skew, "skewness_se": math.sqrt(6.0 / m),
            "kurtosis": kurt, "kurtosis_se": math.sqrt(24.0 / m),
            "standardized_sample": [float(v) for v in std_sample],
            "small_t_regime": bool(T < 20.0),
        })
    report = CltReport(per_t=per_t, v_inf=v_inf, standardized_by=standardized_by)
    # no pass criterion in the pre-asymptotic regime
    ok = all(r["p_value"] > 0.01 for r in per_t if not r["small_t_regime"])
    return _report("clt", cfg, report.to_dict(), ok)


# ----------------------------------------------------------------------
# lemma oracle suite
# ----------------------------------------------------------------------
def random_psd_quadrant(rng, max_rho34=0.9) -> QuadrantCorr:
    """Random PSD correlation structure (Wishart-type, df = 6), rejected
    until |rho34| <= max_rho34."""
    while True:
        a = rng.standard_normal((4, 6))
        s = a @ a.T
        d = np.sqrt(np.diag(s))
        r = s / np.outer(d, d)
        if abs(r[2, 3]) <= max_rho34:
            return QuadrantCorr(rho12=r[0, 1], rho13=r[0, 2], rho14=r[0, 3],
                                rho23=r[1, 2], rho24=r[1, 3], rho34=r[2, 3])


def quadrant_mc(c: QuadrantCorr, n_samples: int, seed: int, chunk=2_000_000):
    """Plain MC estimate of E[X1 X2 1{X3>0} 1{X4>0}]; returns (mean, se)."""
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(c.matrix() + 1e-14 * np.eye(4))
    tot = tot2 = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        z = rng.standard_normal((m, 4)) @ chol.T
        y = z[:, 0] * z[:, 1] * (z[:, 2] > 0.0) * (z[:, 3] > 0.0)
        tot += float(y.sum())
        tot2 += float((y * y).sum())
        done += m
    mean = tot / n_samples
    se = math.sqrt(max(tot2 / n_samples - mean ** 2, 0.0) / n_samples)
    return mean, se


def _builtin_differentiable_models():
    from .covmodel import (bargmann_fock, make_iid_model,
                           make_independent_model, make_regression_model,
                           ornstein_uhlenbeck)
    bf, ou = bargmann_fock(), ornstein_uhlenbeck()
    return {
        "iid_bargmann_fock": make_iid_model(bf),
        "ou_x_bargmann_fock": make_independent_model(ou, bf),
        "regression_rho_0.3": make_regression_model(bf, bf, 0.3),
    }


def run_lemma_check(cfg: ExperimentConfig, closed_form_override=None) -> dict:
    """Oracle equivalence suite: closed form vs diagram series vs 4-D MC,
    and closed-form conditional covariance vs Schur regression.

    ``closed_form_override`` substitutes the closed-form evaluator; it
    exists so the suite can be mutation-tested (a deliberately wrong
    formula must make the checks fail).
    """
    closed = closed_form_override or quadrant_expectation
    rng = np.random.default_rng(cfg.seed)
    checks = {}

    series_err = 0.0
    for _ in range(cfg.lemma_random_sets):
        c = random_psd_quadrant(rng)
        series_err = max(series_err,
                         abs(closed(c) - quadrant_expectation_series(c, 80)))
    checks["closed_vs_series"] = {
        "sets": cfg.lemma_random_sets, "max_abs_diff": series_err,
        "tolerance": 1e-10, "pass": bool(series_err < 1e-10)}

    worst_z = 0.0
    spot_rows = []
    for i in range(cfg.lemma_spot_cases):
        c = random_psd_quadrant(rng)
        mc, se = quadrant_mc(c, cfg.lemma_mc_samples, seed=cfg.seed + 1000 + i)
        z = abs(closed(c) - mc) / se if se > 0 else 0.0
        worst_z = max(worst_z, z)
        spot_rows.append({"rho34": c.rho34, "closed": closed(c), "mc": mc,
                          "mc_se": se, "z": z})
    checks["closed_vs_mc"] = {
        "cases": cfg.lemma_spot_cases, "samples": cfg.lemma_mc_samples,
        "worst_z": worst_z, "tolerance_z": 4.0, "pass": bool(worst_z <= 4.0),
        "rows": spot_rows}

    lag_rng = np.random.default_rng(cfg.seed + 7)
    worst = 0.0
    for name, model in _builtin_differentiable_models().items():
        for _ in range(50):
            t = float(lag_rng.uniform(0.05, 8.0))
            closed_m = conditional_cov(model, t).matrix
            schur_m = generic_regression(joint_cov_matrix(model, t)).matrix
            worst = max(worst, float(np.max(np.abs(closed_m - schur_m))))
    checks["conditional_cov_vs_schur"] = {
        "lags_per_model": 50, "max_abs_diff": worst, "tolerance": 1e-10,
        "pass": bool(worst < 1e-10)}

    if cfg.correlations_file:
        rows = []
        data = np.loadtxt(cfg.correlations_file, delimiter=",", ndmin=2)
        for row in data:
            c = QuadrantCorr(*[float(v) for v in row[:6]])
            try:
                cf = closed(c)
                sr = quadrant_expectation_series(c, 80)
                rows.append({"corr": list(map(float, row[:6])), "closed": cf,
                             "series": sr, "abs_diff": abs(cf - sr),
                             "pass": bool(abs(cf - sr) < 1e-10)})
            except WindlabError as e:
                rows.append({"corr": list(map(float, row[:6])),
                             "error": str(e), "pass": False})
        checks["file_rows"] = rows

    ok = all(v["pass"] for k, v in checks.items() if isinstance(v, dict) and "pass" in v)
    if "file_rows" in checks:
        ok = ok and all(r["pass"] for r in checks["file_rows"])
    return _report("lemma_check", cfg, {"checks": checks}, ok)


def run_smoothing(cfg: ExperimentConfig) -> dict:
    """Winding of smoothed rough paths: stabilization statistics and the
    per-epsilon variance rates against the two-alpha bound."""
    model = cfg.build_model()
    if model.x2_differentiable:
        raise ConfigError("smoothing experiment expects a non-differentiable model")
    if not cfg.epsilon_ladder:
        raise ConfigError("smoothing experiment needs epsilon_ladder")
    eps = [float(e) for e in cfg.epsilon_ladder]
    bound = variance_bound_two_alpha(model, eps)  # raises HypothesisError early
    T = cfg.t_ladder[-1]
    grid = GridSpec.from_dt(T, cfg.dt)
    sampler = _make_sampler(model, grid, cfg.backend, cfg.n_freq)
    m = cfg.replications
    n_w = np.full((m, len(eps)), np.nan)
    stabilized = np.zeros(m, dtype=bool)
    for s in range(m):
        path = sampler.sample(cfg.seed, s)
        try:
            res = smoothed_winding(path, eps)
        except AliasingError:
            continue
        n_w[s] = [r.n_w for r in res.results]
        stabilized[s] = res.stabilized
    rows = []
    for j, e in enumerate(eps):
        vals = n_w[:, j][~np.isnan(n_w[:, j])]
        var_rate = float(np.var(vals, ddof=1)) / T if len(vals) > 1 else None
        se = var_rate * math.sqrt(2.0 / (len(vals) - 1)) if var_rate is not None else None
        row = {"epsilon": e, "var_rate": var_rate, "var_rate_se": se,
               "bound": bound.bound_v_inf}
        if var_rate is not None:
            row["pass"] = bool(var_rate <= bound.bound_v_inf + 3.0 * se)
        else:
            row["pass"] = None
        rows.append(row)
    body = {
        "bound": bound.to_dict(),
        "rows": rows,
        "stabilization_rate": (float(np.mean(stabilized)) if len(eps) > 1 else None),
        "stabilization_note": ("not assessable: epsilon ladder of length 1"
                               if len(eps) < 2 else None),
    }
    ok = all(r["pass"] is not False for r in rows)
    return _report("smoothing", cfg, body, ok)


_RUNNERS = {
    "expectation": run_expectation,
    "variance": run_variance,
    "clt": run_clt,
    "lemma_check": run_lemma_check,
    "smoothing": run_smoothing,
}


def run_experiment(cfg: ExperimentConfig) -> dict:
    return _RUNNERS[cfg.kind](cfg)


# ----------------------------------------------------------------------
# report plumbing
# ----------------------------------------------------------------------
def _report(kind, cfg, body, ok) -> dict:
    return {
        "schema": SCHEMA,
        "kind": kind,
        "config": asdict(cfg),
        "result": body,
        "pass": bool(ok),
    }


def _maybe_export_paths(cfg, sim):
    if not cfg.export_paths or not cfg.out_dir:
        return
    os.makedirs(os.path.join(cfg.out_dir, "paths"), exist_ok=True)
    grid = sim["grid"]
    for stream, x1, x2 in sim["kept_paths"]:
        from .pathgen import SamplePath
        p = SamplePath(grid=grid, x1=x1, x2=x2, seed=cfg.seed, stream=stream,
                       backend=cfg.backend, meta={})
        export_path_csv(p, os.path.join(cfg.out_dir, "paths",
                                        f"path_{stream:05d}.csv"))


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=True)


def _rows_of(report):
    body = report.get("result", {})
    for key in ("rows", "per_t"):
        if key in body:
            return body[key]
    return None


def report_to_csv(report: dict) -> str:
    """CSV mirror of the tabular section of a report."""
    rows = _rows_of(report)
    if not rows:
        return ""
    cols = [c for c in rows[0] if c != "standardized_sample"]
    out = [",".join(cols)]
    for r in rows:
        out.append(",".join(json.dumps(r.get(c), default=str) for c in cols))
    return "\n".join(out) + "\n"


def write_report(report: dict, out_dir: str, name: str = "report",
                 fmt: str = "json") -> str:
    """Write report + metadata sidecar; returns the report path.  The
    report file itself is byte-stable for a fixed config and seed; wall
    time lives in meta.json."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{name}.{'json' if fmt == 'json' else 'csv'}")
    payload = report_to_json(report) if fmt == "json" else report_to_csv(report)
    with open(path, "w") as fh:
        fh.write(payload)
    meta = {"written_at_unix": time.time(), "format": fmt}
    with open(os.path.join(out_dir, f"{name}.meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2)
    return path
