"""Seeded Monte Carlo replicates and statistical checks against the finite-N predictions.

A report is a pure function of its ExperimentConfig: replicate r at size N
uses seed ``derive_seed(root_seed, N, r)`` and aggregation runs in replicate
order, so JSON and CSV outputs are byte-identical across runs.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kernel import KernelSpec, discretize, kernel_from_dict, kernel_to_dict
from .rng import derive_seed
from .sampler import apply_W, sample_graph
from .spectra import (
    ConvergenceError,
    ResolventDomainError,
    adjacency_operator,
    operator_norm_W,
    resolvent_V,
    top_eigenpairs,
)
from .theory import PredictionSet, overlap_law, predictions

CHECKS = ("clt", "mean", "eigvec_align", "eigvec_flac", "norm_bound", "resolvent_identity")
MIN_REPLICATES = 100
MAX_FAILURE_FRACTION = 0.01

# artifact-chosen thresholds; every verdict reports them next to the raw statistics
CLT_DIAG_RTOL = 0.15
CLT_OFFDIAG_ATOL = 0.3
NORMALITY_Z = 4.0
C_MEAN = 5.0
TIGHTNESS_Q95 = 20.0
FLAC_MIN_CORR = 0.9
FLAC_VAR_RTOL = 0.25
NORM_ENVELOPE_C = 10.0
NORM_ENVELOPE_LOG_POWER = 2.0
NORM_MAX_VIOLATIONS = 0.01
BILINEAR_VAR_RANGE = (0.5, 2.0)
RESOLVENT_RTOL = 1e-8


class ExperimentError(RuntimeError):
    """More than 1% of replicates failed."""


class InsufficientReplicatesError(ValueError):
    pass


@dataclass(frozen=True)
class EpsRule:
    """eps = c * N**(-alpha); alpha = 0 is a constant sequence."""

    c: float
    alpha: float = 0.0

    def __call__(self, N: int) -> float:
        return self.c * float(N) ** (-self.alpha)

    @property
    def decays(self) -> bool:
        return self.alpha > 0

    def to_dict(self) -> dict:
        return {"c": self.c, "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d) -> "EpsRule":
        if isinstance(d, (int, float)):
            return cls(float(d))
        if "fixed" in d:
            return cls(float(d["fixed"]))
        return cls(float(d["c"]), float(d.get("alpha", 0.0)))


@dataclass(frozen=True)
class ExperimentConfig:
    kernel: KernelSpec
    N_list: tuple[int, ...]
    eps_rule: EpsRule
    replicates: int
    root_seed: int
    checks: tuple[str, ...] = CHECKS
    eps_infty: float | None = None
    workers: int = 1  # scheduling only; never changes the report

    def __post_init__(self):
        object.__setattr__(self, "N_list", tuple(int(n) for n in self.N_list))
        object.__setattr__(self, "checks", tuple(self.checks))
        unknown = set(self.checks) - set(CHECKS)
        if unknown:
            raise ValueError(f"unknown checks {sorted(unknown)}; choose from {CHECKS}")
        if self.replicates < 2:
            raise ValueError("need at least 2 replicates")
        if not self.N_list or min(self.N_list) < 32:
            raise ValueError("every N must be >= 32")
        limit = 2 / 3 if "eigvec_flac" in self.checks else 1.0
        if not 0 <= self.eps_rule.alpha < limit:
            raise ValueError(f"eps rule exponent must lie in [0, {limit:.3g})")
        for N in self.N_list:
            if self.eps_rule(N) * self.kernel.sup_bound > 1 + 1e-12:
                raise ValueError(f"eps * sup f > 1 at N = {N}")

    @property
    def resolved_eps_infty(self) -> float:
        if self.eps_infty is not None:
            return float(self.eps_infty)
        return 0.0 if self.eps_rule.decays else self.eps_rule.c

    def to_dict(self) -> dict:
        return {
            "kernel": kernel_to_dict(self.kernel),
            "N_list": list(self.N_list),
            "eps_rule": self.eps_rule.to_dict(),
            "replicates": self.replicates,
            "root_seed": self.root_seed,
            "checks": list(self.checks),
            "eps_infty": self.resolved_eps_infty,
        }

    @classmethod
    def from_dict(cls, d: dict, kernel: KernelSpec | None = None) -> "ExperimentConfig":
        if kernel is None:
            kernel = kernel_from_dict(d["kernel"])
        return cls(
            kernel=kernel,
            N_list=tuple(d["N_list"]),
            eps_rule=EpsRule.from_dict(d["eps_rule"]),
            replicates=int(d["replicates"]),
            root_seed=int(d["root_seed"]),
            checks=tuple(d.get("checks", CHECKS)),
            eps_infty=d.get("eps_infty"),
            workers=int(d.get("workers", 1)),
        )


@dataclass
class Record:
    """Statistics of one replicate. ``overlaps[i][j]`` is e_j'v for the eigenvector v of
    lambda_i(A), sign fixed by e_i'v >= 0; ``bilinear[i][j]`` is e_i'W e_j."""

    N: int
    replicate: int
    seed: int
    epsilon: float
    lambdas: list = field(default_factory=list)
    norm_W: float = math.nan
    overlaps: dict = field(default_factory=dict)
    bilinear: list = field(default_factory=list)
    resolvent_relerr: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "replicate": self.replicate,
            "seed": self.seed,
            "epsilon": self.epsilon,
            "lambdas": self.lambdas,
            "norm_W": self.norm_W,
            "overlaps": {str(i + 1): v for i, v in self.overlaps.items()},
            "bilinear": self.bilinear,
            "resolvent_relerr": {str(i + 1): v for i, v in self.resolvent_relerr.items()},
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Record":
        return cls(
            N=d["N"],
            replicate=d["replicate"],
            seed=d["seed"],
            epsilon=d["epsilon"],
            lambdas=d["lambdas"],
            norm_W=d["norm_W"],
            overlaps={int(i) - 1: v for i, v in d["overlaps"].items()},
            bilinear=d["bilinear"],
            resolvent_relerr={int(i) - 1: v for i, v in d["resolvent_relerr"].items()},
            error=d.get("error"),
        )


def run_replicate(spec: KernelSpec, N: int, epsilon: float, seed: int, replicate: int = 0,
                  isolated=(), resolvent: bool = False) -> Record:
    rec = Record(N=N, replicate=replicate, seed=seed, epsilon=epsilon)
    try:
        g = sample_graph(spec, N, epsilon, seed)
        e = discretize(spec, N)
        m = min(spec.rank + 1, N)
        pairs = top_eigenpairs(adjacency_operator(g), m, references=e)
        rec.lambdas = [p.value for p in pairs]
        rec.norm_W = operator_norm_W(g, spec)
        for i in isolated:
            rec.overlaps[i] = [float(x) for x in e @ pairs[i].vector]
        bil = e @ apply_W(g, spec, e.T)
        rec.bilinear = (0.5 * (bil + bil.T)).tolist()
        if resolvent:
            for i in isolated:
                mu = pairs[i].value
                if not rec.norm_W < mu:
                    rec.resolvent_relerr[i] = None
                    continue
                V = resolvent_V(g, spec, mu, norm_W=rec.norm_W)
                lam_v = np.linalg.eigvalsh(V)[::-1][i]
                rec.resolvent_relerr[i] = float(abs(lam_v - mu) / mu)
    except (ConvergenceError, ResolventDomainError) as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def _replicate_task(args):
    return run_replicate(*args)


# -- statistics -------------------------------------------------------------


def moment_zscores(x) -> dict:
    """Sample skewness and excess kurtosis with their z-scores under normality."""
    x = np.asarray(x, dtype=float)
    n = x.size
    d = x - x.mean()
    m2 = np.mean(d**2)
    if m2 == 0:
        return {"skew": math.nan, "excess_kurtosis": math.nan, "z_skew": math.nan, "z_kurtosis": math.nan}
    g1 = np.mean(d**3) / m2**1.5
    g2 = np.mean(d**4) / m2**2 - 3.0
    return {
        "skew": float(g1),
        "excess_kurtosis": float(g2),
        "z_skew": float(g1 / math.sqrt(6.0 / n)),
        "z_kurtosis": float(g2 / math.sqrt(24.0 / n)),
    }


def _normal_ok(z: dict, z_max: float) -> bool:
    return abs(z["z_skew"]) < z_max and abs(z["z_kurtosis"]) < z_max


def _quantiles(x) -> dict:
    x = np.asarray(x, dtype=float)
    q = np.quantile(x, [0.5, 0.9, 0.95])
    return {"q50": float(q[0]), "q90": float(q[1]), "q95": float(q[2]), "max": float(x.max())}


@dataclass
class Verdict:
    check: str
    passed: bool | None  # None: skipped
    thresholds: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    note: str = ""

    def to_dict(self) -> dict:
        return {"check": self.check, "passed": self.passed, "thresholds": self.thresholds,
                "stats": self.stats, "note": self.note}


def _ok_records(records):
    recs = [r for r in records if r.ok]
    return recs


def _require(records, n=MIN_REPLICATES):
    if len(records) < n:
        raise InsufficientReplicatesError(f"need at least {n} replicates, got {len(records)}")


def clt_check(records, pred: PredictionSet, *, diag_rtol=CLT_DIAG_RTOL,
              offdiag_atol=CLT_OFFDIAG_ATOL, z_max=NORMALITY_Z) -> Verdict:
    """Covariance of eps^{-1/2}(lambda_i - mean) over isolated i vs Sigma_G, plus moment normality."""
    recs = _ok_records(records)
    _require(recs)
    iso = list(pred.isolated)
    th = {"diag_rtol": diag_rtol, "offdiag_atol": offdiag_atol, "z_max": z_max}
    if not iso:
        return Verdict("clt", None, th, note="no isolated eigenvalue")
    lam = np.array([[r.lambdas[i] for i in iso] for r in recs])
    fl = (lam - lam.mean(axis=0)) / math.sqrt(pred.epsilon)
    emp = np.atleast_2d(np.cov(fl, rowvar=False))
    sig = pred.sigma_G
    passed = True
    for p in range(len(iso)):
        for q in range(len(iso)):
            if p == q:
                passed &= abs(emp[p, p] - sig[p, p]) <= diag_rtol * sig[p, p]
            else:
                passed &= abs(emp[p, q] - sig[p, q]) <= offdiag_atol
    zs = {str(i + 1): moment_zscores(fl[:, p]) for p, i in enumerate(iso)}
    passed &= all(_normal_ok(z, z_max) for z in zs.values())
    stats = {
        "replicates": len(recs),
        "empirical_cov": emp.tolist(),
        "sigma_G": sig.tolist(),
        "exact_sigma": pred.exact_sigma.tolist(),
        "moments": zs,
    }
    return Verdict("clt", bool(passed), th, stats)


def mean_check(records, pred: PredictionSet, *, c_mean=C_MEAN) -> Verdict:
    """|mean lambda_i - lambda_i(B)| <= c_mean (sqrt(eps) + 1/(N eps)) + 3 SE for isolated i."""
    recs = _ok_records(records)
    _require(recs)
    eps, N = pred.epsilon, pred.N
    slack = c_mean * (math.sqrt(eps) + 1.0 / (N * eps))
    th = {"c_mean": c_mean, "slack": slack}
    if not pred.isolated:
        return Verdict("mean", None, th, note="no isolated eigenvalue")
    passed = True
    per = {}
    for i in pred.isolated:
        lam = np.array([r.lambdas[i] for r in recs])
        se = float(lam.std(ddof=1) / math.sqrt(lam.size))
        mean = float(lam.mean())
        bound = slack + 3 * se
        gap = abs(mean - pred.lambda_B[i])
        entry = {"mean": mean, "se": se, "lambda_B": pred.lambda_B[i], "gap": gap, "bound": bound}
        passed &= gap <= bound
        if pred.rank_one_mean is not None:
            entry["rank_one_mean"] = pred.rank_one_mean
            entry["rank_one_gap"] = abs(mean - pred.rank_one_mean)
            passed &= entry["rank_one_gap"] <= bound
        per[str(i + 1)] = entry
    return Verdict("mean", bool(passed), th, {"replicates": len(recs), "components": per})


def eigvec_align_check(records, pred: PredictionSet, *, q95_max=TIGHTNESS_Q95) -> Verdict:
    """95th percentiles of N eps (1 - e_i'v) and N eps |e_j'v| stay below q95_max."""
    recs = _ok_records(records)
    _require(recs)
    ne = pred.N * pred.epsilon
    th = {"q95_max": q95_max}
    passed = True
    stats = {"replicates": len(recs), "self": {}, "cross": {}}
    for i in pred.isolated:
        ov = np.array([r.overlaps[i] for r in recs])
        q = _quantiles(ne * (1.0 - ov[:, i]))
        stats["self"][str(i + 1)] = q
        passed &= q["q95"] <= q95_max
        for j in range(len(pred.thetas)):
            if j == i:
                continue
            q = _quantiles(ne * np.abs(ov[:, j]))
            stats["cross"][f"{i + 1},{j + 1}"] = q
            passed &= q["q95"] <= q95_max
    if not pred.isolated:
        return Verdict("eigvec_align", None, th, stats, note="no isolated eigenvalue")
    return Verdict("eigvec_align", bool(passed), th, stats)


def eigvec_flac_check(records, pred: PredictionSet, *, min_corr=FLAC_MIN_CORR,
                      var_rtol=FLAC_VAR_RTOL, z_max=NORMALITY_Z) -> Verdict:
    """Per-replicate overlap law for e_j'v and normality of Z_ij = N sqrt(eps)(e_j'v - z)."""
    recs = _ok_records(records)
    _require(recs)
    th = {"min_corr": min_corr, "var_rtol": var_rtol, "z_max": z_max}
    if len(pred.thetas) < 2:
        return Verdict("eigvec_flac", None, th, note="rank 1: no cross overlaps")
    N, eps = pred.N, pred.epsilon
    thetas = pred.thetas
    passed = True
    pairs = {}
    notes = []
    for (i, j), z in sorted(pred.z_shift.items()):
        measured = np.array([r.overlaps[i][j] for r in recs])
        lam = np.array([r.lambdas[i] for r in recs])
        bil = np.array([r.bilinear[i][j] for r in recs])
        predicted = overlap_law(thetas[i], thetas[j], N * eps, pred.expected_W2[i, j], lam, bil)
        err = measured - predicted
        if measured.std() == 0 or predicted.std() == 0:
            corr = math.nan
            notes.append(f"({i + 1},{j + 1}): zero-variance series, correlation undefined")
        else:
            corr = float(np.corrcoef(measured, predicted)[0, 1])
        Z = N * math.sqrt(eps) * (measured - z)
        var_pred = (N**2 * eps * (thetas[i] / (thetas[i] - thetas[j])) ** 2
                    * pred.bilinear_cov[i, j] * eps / float(lam.mean()) ** 2)
        var_emp = float(Z.var(ddof=1))
        mz = moment_zscores(Z)
        ok_corr = corr >= min_corr  # NaN compares False
        ok_var = var_pred > 0 and abs(var_emp / var_pred - 1.0) <= var_rtol
        ok_norm = _normal_ok(mz, z_max)
        passed &= bool(ok_corr and ok_var and ok_norm)
        pairs[f"{i + 1},{j + 1}"] = {
            "corr": corr,
            "z_shift": z,
            "abs_error": _quantiles(np.abs(err)),
            "abs_error_scaled_q90": float(np.quantile(np.abs(err), 0.9) * N * math.sqrt(eps)),
            "Z_mean": float(Z.mean()),
            "Z_var": var_emp,
            "Z_var_predicted": var_pred,
            "moments": mz,
            "corr_ok": bool(ok_corr),
            "var_ok": bool(ok_var),
            "normality_ok": bool(ok_norm),
        }
    if not pairs:
        return Verdict("eigvec_flac", None, th, note="no (isolated i, j) pair with distinct thetas")
    return Verdict("eigvec_flac", bool(passed), th, {"replicates": len(recs), "pairs": pairs}, "; ".join(notes))


def eigvec_checks(records, pred: PredictionSet) -> list[Verdict]:
    return [eigvec_align_check(records, pred), eigvec_flac_check(records, pred)]


def norm_envelope(sup_bound: float, N: int, eps: float, c=NORM_ENVELOPE_C, log_power=NORM_ENVELOPE_LOG_POWER):
    """2 sqrt(M N eps) + c (N eps)^{1/4} (log N)^log_power."""
    return 2 * math.sqrt(sup_bound * N * eps) + c * (N * eps) ** 0.25 * math.log(N) ** log_power


def tail_checks(records, pred: PredictionSet, *, max_violations=NORM_MAX_VIOLATIONS,
                var_range=BILINEAR_VAR_RANGE) -> Verdict:
    """||W|| envelope violation rate and Var(e_i'W e_j) against its exact value."""
    recs = _ok_records(records)
    _require(recs)
    env = norm_envelope(pred.sup_bound, pred.N, pred.epsilon)
    norms = np.array([r.norm_W for r in recs])
    frac = float(np.mean(norms > env))
    passed = frac <= max_violations
    k = len(pred.thetas)
    bil = np.array([r.bilinear for r in recs])
    ratios = {}
    for i in range(k):
        for j in range(i, k):
            emp = float(bil[:, i, j].var(ddof=1)) / pred.epsilon
            exact = float(pred.bilinear_cov[i, j])
            if exact > 0:
                ratio = emp / exact
                ok = var_range[0] <= ratio <= var_range[1]
            else:
                ratio, ok = None, emp == 0.0
            ratios[f"{i + 1},{j + 1}"] = {"var_over_eps": emp, "exact": exact, "ratio": ratio, "ok": bool(ok)}
            passed &= ok
    th = {"envelope": env, "envelope_constant": NORM_ENVELOPE_C, "log_power": NORM_ENVELOPE_LOG_POWER,
          "max_violation_fraction": max_violations, "var_ratio_range": list(var_range)}
    stats = {"replicates": len(recs), "violation_fraction": frac, "norm_W": _quantiles(norms),
             "bilinear_var": ratios}
    return Verdict("norm_bound", bool(passed), th, stats)


def resolvent_identity_check(records, pred: PredictionSet, *, rtol=RESOLVENT_RTOL) -> Verdict:
    recs = _ok_records(records)
    errs, domain = [], 0
    for r in recs:
        for v in r.resolvent_relerr.values():
            if v is None:
                domain += 1
            else:
                errs.append(v)
    th = {"rtol": rtol}
    if not errs:
        return Verdict("resolvent_identity", None, th, {"domain_events": domain}, "no replicate with ||W|| < lambda_i")
    errs = np.asarray(errs)
    stats = {"evaluated": int(errs.size), "domain_events": domain, "max_relerr": float(errs.max())}
    return Verdict("resolvent_identity", bool(np.all(errs <= rtol)), th, stats)


# -- orchestration ----------------------------------------------------------


@dataclass
class RunResult:
    N: int
    epsilon: float
    predictions: PredictionSet
    records: list[Record]
    verdicts: dict[str, Verdict]
    summary: dict

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "epsilon": self.epsilon,
            "predictions": self.predictions.to_dict(),
            "summary": self.summary,
            "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()},
            "records": [r.to_dict() for r in self.records],
        }


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    runs: list[RunResult]

    @property
    def passed(self) -> bool:
        return not self.failed_checks

    @property
    def failed_checks(self) -> list[str]:
        return [f"N={run.N}:{name}" for run in self.runs for name, v in run.verdicts.items() if v.passed is False]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "passed": self.passed,
            "failed_checks": self.failed_checks,
            "runs": [run.to_dict() for run in self.runs],
        }

    def to_json(self) -> str:
        return json.dumps(json_safe(self.to_dict()), indent=1, sort_keys=True, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        return records_to_csv([r for run in self.runs for r in run.records], self.config.kernel.rank,
                              self.runs[0].predictions.isolated if self.runs else ())


def json_safe(obj):
    """Recursively convert numpy scalars and arrays to JSON types and non-finite floats to None."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return json_safe(obj.item())
    if isinstance(obj, np.ndarray):
        return json_safe(obj.tolist())
    return obj


def csv_columns(k: int, isolated) -> list[str]:
    cols = ["N", "replicate", "seed", "epsilon"]
    cols += [f"lambda_{p + 1}" for p in range(k + 1)]
    cols.append("norm_W")
    cols += [f"overlap_v{i + 1}_e{j + 1}" for i in isolated for j in range(k)]
    cols += [f"bilinear_e{i + 1}_e{j + 1}" for i in range(k) for j in range(i, k)]
    cols += [f"resolvent_relerr_{i + 1}" for i in isolated]
    cols.append("error")
    return cols


def records_to_csv(records, k: int, isolated) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_columns(k, isolated))

    def fmt(x):
        if x is None:
            return ""
        if isinstance(x, (float, np.floating)):
            return repr(float(x)) if math.isfinite(x) else ""
        return str(x)

    for r in records:
        lam = list(r.lambdas) + [None] * (k + 1 - len(r.lambdas))
        row = [r.N, r.replicate, r.seed, fmt(r.epsilon), *(fmt(x) for x in lam[: k + 1]), fmt(r.norm_W)]
        for i in isolated:
            ov = r.overlaps.get(i, [None] * k)
            row += [fmt(x) for x in ov]
        for i in range(k):
            for j in range(i, k):
                row.append(fmt(r.bilinear[i][j]) if r.bilinear else "")
        row += [fmt(r.resolvent_relerr.get(i)) for i in isolated]
        row.append(r.error or "")
        w.writerow(row)
    return buf.getvalue()


def evaluate(records, pred: PredictionSet, checks) -> dict[str, Verdict]:
    """Run the requested checks; checks needing more replicates than available are skipped."""
    fns = {
        "clt": clt_check,
        "mean": mean_check,
        "eigvec_align": eigvec_align_check,
        "eigvec_flac": eigvec_flac_check,
        "norm_bound": tail_checks,
        "resolvent_identity": resolvent_identity_check,
    }
    out = {}
    for name in CHECKS:
        if name not in checks:
            continue
        try:
            out[name] = fns[name](records, pred)
        except InsufficientReplicatesError as exc:
            out[name] = Verdict(name, None, note=str(exc))
    return out


def summarize(records, pred: PredictionSet) -> dict:
    recs = _ok_records(records)
    out = {
        "replicates": len(records),
        "failures": len(records) - len(recs),
        "regime_log8_over_Neps": math.log(pred.N) ** 8 / (pred.N * pred.epsilon),
    }
    if not recs:
        return out
    lam = np.array([r.lambdas for r in recs])
    out["lambda_mean"] = lam.mean(axis=0).tolist()
    out["lambda_sd"] = lam.std(axis=0, ddof=1).tolist() if len(recs) > 1 else None
    out["lambda_over_Neps_theta"] = [
        float(lam[:, i].mean() / (pred.N * pred.epsilon * t)) for i, t in enumerate(pred.thetas)
    ]
    out["norm_W_mean"] = float(np.mean([r.norm_W for r in recs]))
    return out


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    spec = config.kernel
    runs = []
    resolvent = "resolvent_identity" in config.checks
    for N in config.N_list:
        eps = config.eps_rule(N)
        pred = predictions(spec, N, eps, config.resolved_eps_infty)
        tasks = [
            (spec, N, eps, derive_seed(config.root_seed, N, r), r, pred.isolated, resolvent)
            for r in range(config.replicates)
        ]
        if config.workers > 1:
            with ProcessPoolExecutor(config.workers) as pool:
                records = list(pool.map(_replicate_task, tasks, chunksize=4))
        else:
            records = [_replicate_task(t) for t in tasks]
        failures = sum(not r.ok for r in records)
        if failures > MAX_FAILURE_FRACTION * len(records):
            raise ExperimentError(f"{failures} of {len(records)} replicates failed at N = {N}")
        verdicts = evaluate(records, pred, config.checks)
        runs.append(RunResult(N, eps, pred, records, verdicts, summarize(records, pred)))
    return ExperimentReport(config, runs)


def load_config(path) -> ExperimentConfig:
    """Config JSON: {"kernel": {...} | "kernel_path": "...", "N_list", "eps_rule", "replicates",
    "root_seed", "checks"?, "eps_infty"?, "workers"?}; kernel_path is relative to the config file."""
    from pathlib import Path

    from .kernel import load_kernel

    path = Path(path)
    d = json.loads(path.read_text(encoding="utf-8"))
    kernel = None
    if "kernel_path" in d:
        kernel = load_kernel(path.parent / d["kernel_path"])
    return ExperimentConfig.from_dict(d, kernel)
