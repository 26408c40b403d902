"""errg-spectra command line.

Exit status: 0 success, 1 failed verdicts (or an invalid kernel report),
2 bad arguments or malformed input, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import experiments, kernel, sampler, spectra, theory

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
BINARY_MAGIC = b"ERGS"
HIST_BINS = 30


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _checks(text):
    items = tuple(c.strip() for c in text.split(",") if c.strip())
    bad = set(items) - set(experiments.CHECKS)
    if bad:
        raise argparse.ArgumentTypeError(f"unknown checks {sorted(bad)}; choose from {','.join(experiments.CHECKS)}")
    return items


def _dump(obj) -> str:
    return json.dumps(experiments.json_safe(obj), indent=1, sort_keys=True, allow_nan=False) + "\n"


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _load_kernel(path):
    try:
        return kernel.load_kernel(path)
    except OSError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"invalid kernel file {path}: {exc}") from exc


def _read_sample(path):
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        if data[:4] == BINARY_MAGIC:
            return sampler.from_binary(data)
        return sampler.from_text(data.decode("utf-8"))
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise UsageError(f"invalid sample file {path}: {exc}") from exc


def cmd_validate_kernel(args):
    spec = _load_kernel(args.kernel_file or args.kernel)
    rep = kernel.validate(spec)
    d = rep.to_dict()
    d["kernel_id"] = spec.kernel_id
    _emit(_dump(d), args.out)
    return EXIT_OK if rep.ok else EXIT_FAILED


def cmd_sample(args):
    spec = _load_kernel(args.kernel)
    try:
        g = sampler.sample_graph(spec, args.N, args.eps, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    fmt = args.format or ("text" if str(args.out).endswith(".txt") else "binary")
    if fmt == "text":
        sampler.write_text(g, args.out)
    else:
        sampler.write_binary(g, args.out)
    sys.stderr.write(f"wrote {g.edge_count} edges (N={g.N}) to {args.out}\n")
    return EXIT_OK


def cmd_spectrum(args):
    spec = _load_kernel(args.kernel)
    g = _read_sample(args.sample)
    if g.kernel_id and g.kernel_id != spec.kernel_id:
        raise UsageError("sample was drawn from a different kernel")
    e = kernel.discretize(spec, g.N)
    m = min(args.m or spec.rank + 1, g.N)
    pairs = spectra.top_eigenpairs(spectra.adjacency_operator(g), m, references=e)
    out = {
        "N": g.N,
        "epsilon": g.epsilon,
        "kernel_id": spec.kernel_id,
        "seed": g.seed,
        "eigenpairs": [p.to_dict(e) for p in pairs],
        "norm_W": spectra.operator_norm_W(g, spec),
    }
    _emit(_dump(out), args.out)
    return EXIT_OK


def cmd_predict(args):
    spec = _load_kernel(args.kernel)
    if args.eps * spec.sup_bound > 1 + 1e-12:
        raise UsageError("eps * sup f exceeds 1")
    pred = theory.predictions(spec, args.N, args.eps, args.eps_infty)
    _emit(_dump(pred.to_dict()), args.out)
    return EXIT_OK


def _config_from_args(args):
    try:
        if args.config:
            cfg = experiments.load_config(args.config)
        else:
            if args.kernel is None or args.N is None or args.eps is None or args.replicates is None:
                raise UsageError("run needs CONFIG or all of --kernel --N --eps --replicates")
            cfg = experiments.ExperimentConfig(
                _load_kernel(args.kernel), tuple(args.N), experiments.EpsRule(args.eps, args.alpha),
                args.replicates, args.seed or 0,
            )
        overrides = {}
        if args.config:
            if args.replicates is not None:
                overrides["replicates"] = args.replicates
            if args.seed is not None:
                overrides["root_seed"] = args.seed
            if args.N is not None:
                overrides["N_list"] = tuple(args.N)
        if args.checks is not None:
            overrides["checks"] = args.checks
        if args.workers is not None:
            overrides["workers"] = args.workers
        if overrides:
            cfg = replace(cfg, **overrides)
        return cfg
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def cmd_run(args):
    cfg = _config_from_args(args)
    try:
        rep = experiments.run_experiment(cfg)
    except experiments.ExperimentError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FAILED
    prefix = Path(args.out)
    prefix.with_suffix(".json").write_text(rep.to_json(), encoding="utf-8")
    prefix.with_suffix(".csv").write_text(rep.to_csv(), encoding="utf-8")
    sys.stdout.write(render_summary(json.loads(rep.to_json())))
    return EXIT_OK if rep.passed else EXIT_FAILED


def _fmt(x):
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def render_summary(report: dict) -> str:
    """Human-readable summary of a report JSON."""
    lines = []
    cfg = report["config"]
    lines.append(f"kernel thetas: {cfg['kernel']['thetas']}")
    lines.append(f"replicates: {cfg['replicates']}  root seed: {cfg['root_seed']}  eps rule: {cfg['eps_rule']}")
    for run in report["runs"]:
        s = run["summary"]
        lines.append("")
        lines.append(f"N = {run['N']}  eps = {_fmt(run['epsilon'])}  failures = {s['failures']}"
                     f"  (log N)^8/(N eps) = {_fmt(s['regime_log8_over_Neps'])}")
        if "lambda_mean" in s:
            lines.append("  mean lambda: " + ", ".join(_fmt(x) for x in s["lambda_mean"]))
            lines.append("  mean lambda / (N eps theta): " + ", ".join(_fmt(x) for x in s["lambda_over_Neps_theta"]))
        for name, v in sorted(run["verdicts"].items()):
            status = {True: "PASS", False: "FAIL", None: "SKIP"}[v["passed"]]
            note = f"  ({v['note']})" if v["note"] else ""
            lines.append(f"  [{status}] {name}{note}")
    lines.append("")
    lines.append("overall: " + ("PASS" if report["passed"] else "FAIL " + " ".join(report["failed_checks"])))
    return "\n".join(lines) + "\n"


def _histogram_rows(samples, mean, var):
    counts, edges = np.histogram(samples, bins=HIST_BINS)
    width = edges[1] - edges[0]
    centers = 0.5 * (edges[:-1] + edges[1:])
    dens = counts / (len(samples) * width)
    pdf = norm.pdf(centers, loc=mean, scale=math.sqrt(var)) if var and var > 0 else np.full_like(centers, np.nan)
    return [(edges[b], edges[b + 1], centers[b], int(counts[b]), dens[b], pdf[b]) for b in range(len(counts))]


def _write_hist(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "center", "count", "empirical_density", "predicted_density"])
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def plot_data(report: dict, outdir: Path) -> list[Path]:
    """Histogram CSVs of standardized fluctuations next to their predicted Gaussian densities."""
    written = []
    for run in report["runs"]:
        pred = run["predictions"]
        recs = [r for r in run["records"] if r["error"] is None]
        if len(recs) < 2:
            continue
        eps, N = run["epsilon"], run["N"]
        iso = [i - 1 for i in pred["isolated_set"]]
        sigma = pred["Sigma_G"]["data"]
        for p, i in enumerate(iso):
            lam = np.array([r["lambdas"][i] for r in recs])
            fl = (lam - lam.mean()) / math.sqrt(eps)
            path = outdir / f"N{N}_lambda{i + 1}_fluctuation.csv"
            _write_hist(path, _histogram_rows(fl, 0.0, sigma[p][p]))
            written.append(path)
        flac = run["verdicts"].get("eigvec_flac")
        for key, z in sorted(pred["z_shift"].items()):
            i, j = (int(t) - 1 for t in key.split(","))
            ov = np.array([r["overlaps"][str(i + 1)][j] for r in recs])
            Z = N * math.sqrt(eps) * (ov - z)
            var = None
            if flac and flac.get("stats", {}).get("pairs", {}).get(key):
                var = flac["stats"]["pairs"][key]["Z_var_predicted"]
            path = outdir / f"N{N}_Z{i + 1}{j + 1}.csv"
            _write_hist(path, _histogram_rows(Z, float(Z.mean()), var))
            written.append(path)
    return written


def cmd_report(args):
    try:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid report JSON: {exc}") from exc
    outdir = Path(args.out) if args.out else Path(args.report).with_suffix("")
    outdir.mkdir(parents=True, exist_ok=True)
    text = render_summary(report)
    (outdir / "summary.txt").write_text(text, encoding="utf-8")
    written = plot_data(report, outdir)
    sys.stdout.write(text)
    sys.stderr.write(f"wrote summary.txt and {len(written)} histogram tables to {outdir}\n")
    return EXIT_OK if report["passed"] else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="errg-spectra", description="Outlier spectra of inhomogeneous Erdos-Renyi graphs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("validate-kernel", help="check a kernel JSON and print its ValidationReport")
    s.add_argument("kernel_file", nargs="?")
    s.add_argument("--kernel")
    s.add_argument("--out")
    s.set_defaults(func=cmd_validate_kernel)

    s = sub.add_parser("sample", help="draw one adjacency sample")
    s.add_argument("--kernel", required=True)
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--seed", type=_u64, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("binary", "text"))
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("spectrum", help="top eigenpairs and ||W|| of a sample file")
    s.add_argument("sample")
    s.add_argument("--kernel", required=True)
    s.add_argument("--m", type=int, help="number of eigenpairs (default rank + 1)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("predict", help="deterministic finite-N predictions")
    s.add_argument("--kernel", required=True)
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--eps-infty", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("run", help="Monte Carlo experiment; writes OUT.json and OUT.csv")
    s.add_argument("config", nargs="?")
    s.add_argument("--kernel")
    s.add_argument("--N", type=int, nargs="+")
    s.add_argument("--eps", type=float, help="eps = EPS * N^-ALPHA")
    s.add_argument("--alpha", type=float, default=0.0)
    s.add_argument("--seed", type=_u64)
    s.add_argument("--replicates", type=int)
    s.add_argument("--checks", type=_checks)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="text summary and histogram CSVs of a report JSON")
    s.add_argument("report")
    s.add_argument("--out", help="output directory (default: report path without suffix)")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "validate-kernel" and not (args.kernel_file or args.kernel):
            raise UsageError("validate-kernel needs a kernel file")
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
