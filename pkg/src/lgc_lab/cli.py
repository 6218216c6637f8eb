"""Experiment runner: `lgc run|validate <config>` and `lgc oracle <experiment> <instance>`."""
import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import AccuracyError, ConfigError, __version__
from . import experiments as X
from . import incidence, modelform
from .gabor import TAU_DROP

COMMON = {"experiment": (str, X.REQUIRED), "out": (str, ""), "flag_threshold": (float, 0.25)}

CONVENTIONS = {
    "incidence_rounding": incidence.ROUNDING,
    "incidence_wrap": incidence.WRAP,
    "modelform_shift": modelform.SHIFT_CONVENTION,
    "modelform_epsilon_default": modelform.EPSILON_DEFAULT,
    "gabor_tau_drop": TAU_DROP,
    "rng": "Philox keyed by (seed, crc32 of task tags)",
    "csv_float_format": "%.12g",
}


class RunConfig(dict):
    """Validated parameter map; `experiment` and `out` included."""

    @property
    def experiment(self):
        return self["experiment"]


def _parse_value(kind, text):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind in (int, float, str):
        if kind is int and any(ch in text for ch in ".eE") and float(text).is_integer():
            return int(float(text))
        return kind(text)
    base = {X.LIST_INT: int, X.LIST_FLOAT: float, X.LIST_STR: str}[kind]
    items = [item.strip() for item in text.split(",") if item.strip()]
    if not items:
        raise ValueError("empty list")
    if base is int:
        return [int(float(i)) if float(i).is_integer() else int(i) for i in items]
    return [base(i) for i in items]


def read_config_text(text):
    raw, errors = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key=value")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key in raw:
            errors.append(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw, errors


def validate_config(raw, errors=None):
    """Typed validation; raises ConfigError listing every offending field."""
    errors = list(errors or [])
    name = raw.get("experiment")
    if name is None:
        raise ConfigError("experiment: required key missing")
    if name not in X.EXPERIMENTS:
        raise ConfigError(f"experiment: unknown value {name!r}; expected one of {', '.join(X.EXPERIMENTS)}")
    exp = X.EXPERIMENTS[name]
    schema = {**COMMON, **exp.schema}
    cfg = RunConfig()
    for key in raw:
        if key not in schema:
            errors.append(f"{key}: unknown key for experiment {name}")
    for key, (kind, default) in schema.items():
        if key in raw:
            try:
                cfg[key] = _parse_value(kind, raw[key])
            except ValueError as exc:
                errors.append(f"{key}: {exc}")
        elif default is X.REQUIRED:
            errors.append(f"{key}: required key missing")
        else:
            cfg[key] = default
    if exp.gabor and "lams" in cfg:
        bad = [v for v in cfg["lams"] if v <= 100]
        if bad:
            errors.append(f"lams: Gabor experiments need lambda > 100, got {bad}")
    for key in ("lams", "ms", "j3s"):
        if key in cfg and any(v <= 0 for v in cfg[key]):
            errors.append(f"{key}: values must be positive")
    if name == "incidence":
        if any(m < 2 or m > 12 for m in cfg.get("ms", [])):
            errors.append("ms: grid exponents must lie in 2..12")
        if cfg.get("method") not in ("fast", "brute"):
            errors.append("method: expected fast or brute")
    if name == "kernel-l1":
        if cfg.get("preset") not in X.KERNEL_PRESETS:
            errors.append(f"preset: expected one of {', '.join(X.KERNEL_PRESETS)}")
        if cfg.get("sampler") not in ("auto", "grid", "mc"):
            errors.append("sampler: expected auto, grid or mc")
    if name == "decay-theorem":
        unknown = [p for p in cfg.get("presets", []) if p not in X.PROXY_PRESETS]
        if unknown:
            errors.append(f"presets: unknown {unknown}")
    if name == "vdc" and cfg.get("family") not in ("linear", "saddle", "random"):
        errors.append("family: expected linear, saddle or random")
    if name == "modelform-dichotomy" and not 0 < cfg.get("epsilon", 0.01) < 1.0 / 24:
        errors.append("epsilon: must lie in (0, 1/24)")
    if errors:
        raise ConfigError("; ".join(errors))
    return cfg


def load_config(path):
    with open(path) as fh:
        raw, errors = read_config_text(fh.read())
    return validate_config(raw, errors)


def _fmt(value):
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int) or (hasattr(value, "dtype") and value.dtype.kind in "iu"):
        return str(int(value))
    if isinstance(value, str):
        return value
    return "%.12g" % float(value)


def write_table(path, table):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.header)
        for row in table.rows:
            writer.writerow([_fmt(v) for v in row])


def sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def output_dir(cfg):
    root = os.environ.get("LGC_OUT", "runs")
    return cfg["out"] or os.path.join(root, cfg["experiment"])


def worker_count():
    try:
        return max(1, int(os.environ.get("LGC_WORKERS", "1")))
    except ValueError:
        raise ConfigError("LGC_WORKERS: expected a positive integer")


def _safe_task(args):
    func, task = args
    try:
        return func(task), None
    except AccuracyError as exc:
        return [], f"accuracy error in task {task!r}: {exc}"


def run(cfg: RunConfig, workers=None, log=print):
    """Execute the configured experiment; returns (exit status, outcome, output directory)."""
    exp = X.EXPERIMENTS[cfg.experiment]
    out = output_dir(cfg)
    os.makedirs(out, exist_ok=True)
    params = dict(cfg)
    if params.get("write_instances"):
        params["instances_dir"] = os.path.join(out, "instances")
        os.makedirs(params["instances_dir"], exist_ok=True)
    manifest = {
        "code_version": __version__,
        "config": {k: v for k, v in cfg.items()},
        "conventions": CONVENTIONS,
        "status": "running",
        "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    mpath = os.path.join(out, "manifest.json")
    with open(mpath, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
    t0 = time.time()
    tasks = exp.tasks(params)
    workers = worker_count() if workers is None else workers
    jobs = [(exp.task, task) for task in tasks]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_safe_task, jobs))
    else:
        results = [_safe_task(job) for job in jobs]
    rows, task_flags = [], []
    for res, flag in results:
        rows.extend(res)
        if flag:
            task_flags.append(flag)
    outcome = exp.finalize(params, rows)
    files, flags, n_rows = {}, [], 0
    for fname, table in outcome.tables.items():
        path = os.path.join(out, fname)
        write_table(path, table)
        files[fname] = sha256(path)
        n_rows += len(table.rows)
        flags.extend({"file": fname, "row": int(i), "reason": reason} for i, reason in table.flags)
    flagged = len(flags) + len(task_flags)
    summary = f"{cfg.experiment}, {outcome.fitted_exponent:.6g}, {outcome.pass_count}/{outcome.total}"
    manifest.update(
        status="complete",
        finished=time.strftime("%Y-%m-%dT%H:%M:%S"),
        wall_clock_seconds=round(time.time() - t0, 3),
        workers=workers,
        outputs=files,
        flags=flags,
        task_errors=task_flags,
        truncation={k: cfg[k] for k in ("N", "u_cutoff", "epsilon", "step", "count") if k in cfg},
        summary=summary,
        extra=outcome.extra,
    )
    with open(mpath, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
    log(summary)
    status = 0
    if flagged and flagged > cfg["flag_threshold"] * max(n_rows + len(task_flags), 1):
        log(f"{flagged} flagged rows exceed flag_threshold={cfg['flag_threshold']:g}")
        status = 3
    return status, outcome, out


def oracle(experiment, instance, log=print):
    """Force the brute-force path on one instance."""
    if experiment == "incidence":
        inst = incidence.read_instance(instance)
        fast = incidence.count_incidences(inst, "fast")
        brute = incidence.count_incidences(inst, "brute")
        log(f"incidence, fast={fast}, brute={brute}")
        return 0 if fast == brute else 3
    if experiment == "modelform-dichotomy":
        cfg = load_config(instance)
        status = 0
        for lam in cfg["lams"]:
            fast, brute = X.modelform_oracle(lam, cfg["seed"], cfg["N"])
            rel = abs(fast - brute) / abs(brute) if brute else abs(fast)
            log(f"modelform-dichotomy, lambda={lam}, fast={fast:.12g}, brute={brute:.12g}, rel={rel:.3g}")
            status = status or (3 if rel > 1e-3 else 0)
        return status
    raise ConfigError(f"experiment: no brute-force oracle for {experiment!r}")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="lgc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")
    p_or = sub.add_parser("oracle", help="brute-force reference on one instance")
    p_or.add_argument("experiment")
    p_or.add_argument("instance")
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"ok: {cfg.experiment}")
            return 0
        if args.command == "run":
            status, _, _ = run(load_config(args.config))
            return status
        return oracle(args.experiment, args.instance)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
