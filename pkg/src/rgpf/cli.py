"""Command-line front end: ``rgpf <command> [options]``.

Commands: generate, corrupt, train, predict, evaluate, sweep, demo-residuals.
Settings come from built-in defaults, then an optional JSON config
(``--config``), then command-line flags.  Exit codes: 0 ok, 2 config or
usage error, 3 simulation failure, 4 training failure, 5 file I/O error.
Errors are also reported as one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import gp
from .basis import BasisSpec
from .dataset import Dataset, read_csv, write_csv_atomic, write_text_atomic
from .errors import ArtifactIOError, ConfigError, RGPFError, TrainingError
from .kernels import KernelSpec
from .powerflow import load_case, parse_output
from .stochastic import (OutlierSpec, Protocol, SeriesSpec, case_simulator,
                         contamination_sweep, generate_datasets, generate_profiles, inject_outliers,
                         instance_from_loads, mae, monte_carlo_reference, rmse, substream, sweep_means,
                         write_ensemble_summary, write_histogram, write_sweep_csv)

log = logging.getLogger("rgpf")

DEFAULTS = {
    "case": "ieee33",
    "n_train": 150,
    "n_test": 60,
    "outputs": ["vmag_19"],
    "out_dir": "rgpf_out",
    "model": {"mode": "rpm", "basis": "quadratic", "kernel": "rbf", "alpha": None, "rq_form": "standard",
              "huber_c": 1.5, "ps_b": None, "n_starts": 5, "outer_max_iter": 20, "fixed_noise": None},
    "outliers": {"fraction": 0.25, "targets": ["vertical", "bad_leverage"],
                 "noise": {"kind": "student_t", "dof": 10.0, "loc": 0.0, "scale": 1.0},
                 "magnitude_scale": 8.0, "placement": "prefix"},
    "series": {"phi": 0.95, "innovation_std": 0.03, "measurement_noise": SeriesSpec().measurement_noise},
    "mc": {"samples": 0, "load_rel_std": 0.05, "bins": 50},
    "sweep": {"fractions": [0.0, 0.05, 0.1, 0.15, 0.2, 0.25], "seeds": [0, 1, 2, 3, 4]},
}

# flag dest -> config path
OVERRIDES = {
    "case": ("case",), "n_train": ("n_train",), "n_test": ("n_test",), "outputs": ("outputs",),
    "seed": ("seed",), "out_dir": ("out_dir",),
    "mode": ("model", "mode"), "basis": ("model", "basis"), "kernel": ("model", "kernel"),
    "alpha": ("model", "alpha"), "rq_form": ("model", "rq_form"), "huber_c": ("model", "huber_c"),
    "ps_b": ("model", "ps_b"), "n_starts": ("model", "n_starts"),
    "outer_max_iter": ("model", "outer_max_iter"), "fixed_noise": ("model", "fixed_noise"),
    "fraction": ("outliers", "fraction"), "targets": ("outliers", "targets"),
    "magnitude_scale": ("outliers", "magnitude_scale"), "placement": ("outliers", "placement"),
    "measurement_noise": ("series", "measurement_noise"),
    "mc_samples": ("mc", "samples"), "fractions": ("sweep", "fractions"), "seeds": ("sweep", "seeds"),
}


def config_schema() -> dict:
    text = resources.files("rgpf.data").joinpath("config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "noise":
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve_config(args) -> dict:
    """Defaults < config file < flags; the seed falls back to $RGPF_SEED, then 0."""
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        try:
            jsonschema.validate(doc, config_schema())
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config {args.config}: {path}: {exc.message}") from None
        cfg = _merge(cfg, doc)
    for dest, path in OVERRIDES.items():
        v = getattr(args, dest, None)
        if v is None:
            continue
        node = cfg
        for key in path[:-1]:
            node = node[key]
        node[path[-1]] = v
    if cfg.get("seed") is None:
        env = os.environ.get("RGPF_SEED")
        try:
            cfg["seed"] = int(env) if env not in (None, "") else 0
        except ValueError:
            raise ConfigError(f"RGPF_SEED must be an integer, got {env!r}") from None
    if cfg["n_train"] < 1 or cfg["n_test"] < 1:
        raise ConfigError(f"n_train and n_test must be >= 1 (got {cfg['n_train']}, {cfg['n_test']})")
    for name in cfg["outputs"]:
        parse_output(name)
    return cfg


def model_spec(cfg: dict, mode: str | None = None) -> gp.ModelSpec:
    m = cfg["model"]
    kernel = KernelSpec(m["kernel"], m["alpha"], m["rq_form"])
    return gp.ModelSpec(basis=m["basis"], kernel=kernel, mode=mode or m["mode"], huber_c=m["huber_c"],
                        ps_b=m["ps_b"], n_starts=m["n_starts"], outer_max_iter=m["outer_max_iter"],
                        fixed_noise=m["fixed_noise"])


def outlier_spec(cfg: dict) -> OutlierSpec:
    return OutlierSpec.from_dict(cfg["outliers"])


def series_spec(cfg: dict) -> SeriesSpec:
    s = cfg["series"]
    return SeriesSpec(phi=s["phi"], innovation_std=s["innovation_std"], measurement_noise=s["measurement_noise"])


def protocol(cfg: dict) -> Protocol:
    return Protocol(n_train=cfg["n_train"], n_test=cfg["n_test"], outputs=tuple(cfg["outputs"]),
                    model=model_spec(cfg), outliers=outlier_spec(cfg), series=series_spec(cfg))


def _case(cfg):
    return load_case(cfg["case"])


def _out(cfg, name) -> Path:
    return Path(cfg["out_dir"]) / name


def _check_dof(cfg, case) -> None:
    q = BasisSpec(cfg["model"]["basis"], 2 * case.n_bus).q
    if cfg["n_train"] <= q + 2:
        raise ConfigError(f"n_train={cfg['n_train']} must exceed q + 2 = {q + 2} for the "
                          f"{cfg['model']['basis']} basis on {case.n_bus} buses")


def _model_filename(output: str) -> str:
    bus, kind = parse_output(output)
    return f"model_{bus}_{kind}.json"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(cfg, args) -> int:
    case = _case(cfg)
    _check_dof(cfg, case)
    train, test = generate_datasets(case, cfg["n_train"], cfg["n_test"], cfg["outputs"], cfg["seed"],
                                    series_spec(cfg))
    train.to_csv(_out(cfg, "train.csv"))
    test.to_csv(_out(cfg, "test.csv"))
    print(f"train.csv: {len(train)} rows x {train.X.shape[1]} inputs + {train.Y.shape[1]} outputs")
    print(f"test.csv: {len(test)} rows x {test.X.shape[1]} inputs + {test.Y.shape[1]} outputs")

    K = cfg["mc"]["samples"]
    if K > 0:
        p_load, q_load, _ = generate_profiles(case, cfg["n_train"] + cfg["n_test"], cfg["seed"], series_spec(cfg))
        rel = cfg["mc"]["load_rel_std"]
        insts = [instance_from_loads(case, p, q, rel)
                 for p, q in zip(p_load[cfg["n_train"]:], q_load[cfg["n_train"]:])]
        ens = monte_carlo_reference(case, insts, K, cfg["seed"], cfg["outputs"])
        ens.timestamps = test.timestamps
        for j, name in enumerate(cfg["outputs"]):
            write_ensemble_summary(_out(cfg, f"mc_{name}.csv"), ens, j)
            write_histogram(_out(cfg, f"mc_{name}_hist.csv"), ens, 0, j, cfg["mc"]["bins"])
            if args.figures:
                from .report import plot_density
                lo, hi, dens = ens.histogram(0, j, cfg["mc"]["bins"])
                plot_density(_out(cfg, f"mc_{name}_hist.png"), lo, hi, dens, label=name)
        print(f"Monte Carlo reference: {len(insts)} instances x {K} samples -> mc_<output>.csv")
    return 0


def cmd_corrupt(cfg, args) -> int:
    ds = Dataset.from_csv(args.data)
    spec = outlier_spec(cfg)
    sim = None
    if "good_leverage" in spec.targets:
        sim = case_simulator(_case(cfg), ds.output_names)
    bad, mask = inject_outliers(ds, spec, substream(cfg["seed"], "outliers"), simulator=sim)
    out = Path(args.output) if args.output else _out(cfg, "train_corrupted.csv")
    bad.to_csv(out)
    rows = ([str(int(t)), str(int(mask.rows[i])), str(int(mask.inputs[i].sum())), str(int(mask.outputs[i].sum()))]
            for i, t in enumerate(ds.timestamps))
    write_csv_atomic(out.with_name(out.stem + "_mask.csv"),
                     ["timestamp", "corrupted", "inputs_touched", "outputs_touched"], rows)
    print(f"corrupted {int(mask.rows.sum())} of {len(ds)} rows ({', '.join(spec.targets)}) -> {out}")
    return 0


def _fmt_hp(hp) -> str:
    ls = hp.length_scales
    return (f"l in [{ls.min():.3g}, {ls.max():.3g}] (median {np.median(ls):.3g}), "
            f"tau2={hp.signal_variance:.4g}, sigma_n2={hp.noise_variance:.4g}")


def cmd_train(cfg, args) -> int:
    ds = Dataset.from_csv(args.data)
    spec = model_spec(cfg)
    names = [o for o in cfg["outputs"] if o in ds.output_names]
    if not names:
        raise ConfigError(f"none of the configured outputs {cfg['outputs']} is in {args.data} "
                          f"(columns: {ds.output_names})")
    for name in names:
        try:
            model = gp.train(ds.X, ds.y(name), spec)
        except TrainingError as exc:
            trace = {"output": name, "error": type(exc).__name__, "message": str(exc),
                     "trace": getattr(exc, "trace", [])}
            path = _out(cfg, "train_trace.json")
            write_text_atomic(path, json.dumps(gp._jsonable(trace), sort_keys=True, indent=1) + "\n")
            raise TrainingError(f"{name}: {exc} (trace written to {path})") from None
        model = dataclasses.replace(model, output_name=name)
        path = _out(cfg, _model_filename(name))
        gp.save_model(model, path)
        rounds = len(model.fit_trace) - 1
        print(f"{name}: mode={spec.mode} outer_rounds={rounds} converged={model.converged}")
        print(f"  {_fmt_hp(model.hp)}")
        if model.weights is not None:
            print(f"  leverage weights: {model.weights.n_downweighted} of {len(ds)} points with w < 1 "
                  f"(b={model.weights.b:.4g})")
        print(f"  -> {path}")
    return 0


def cmd_predict(cfg, args) -> int:
    model = gp.load_model(args.model)
    ds = Dataset.from_csv(args.data)
    pd = gp.predict(model, ds.X, noisy=args.noisy, full_covariance=False)
    out = Path(args.output) if args.output else _out(cfg, "predictions.csv")
    rows = ([str(int(t)), repr(float(m)), repr(float(s))] for t, m, s in zip(ds.timestamps, pd.mean, pd.per_point_std))
    write_csv_atomic(out, ["timestamp", "mean", "std"], rows)
    print(f"{len(ds)} predictions -> {out}")
    if args.figures:
        from .report import plot_predictions
        ref = ds.y(model.output_name) if model.output_name in ds.output_names else None
        plot_predictions(out.with_suffix(".png"), ds.timestamps, pd.mean, pd.per_point_std, ref,
                         label=model.output_name or "")
    return 0


def _column(path, preferred):
    header, rows = read_csv(path)
    for name in preferred:
        if name and name in header:
            j = header.index(name)
            try:
                return np.array([float(r[0]) for r in rows]), np.array([float(r[j]) for r in rows]), name
            except ValueError as exc:
                raise ArtifactIOError(f"{path}: non-numeric value ({exc})") from None
    raise ConfigError(f"{path} has none of the columns {[p for p in preferred if p]}")


def cmd_evaluate(cfg, args) -> int:
    quantity = args.quantity or cfg["outputs"][0]
    t_p, pred, _ = _column(args.predictions, ["mean", quantity])
    t_r, ref, _ = _column(args.reference, [quantity, "mean"])
    if t_p.shape != t_r.shape or not np.array_equal(t_p, t_r):
        raise ConfigError("prediction and reference timestamps do not match")
    metrics = {quantity: {"rmse": rmse(pred, ref), "mae": mae(pred, ref)}}
    text = json.dumps(metrics, sort_keys=True, indent=1)
    out = Path(args.output) if args.output else _out(cfg, "metrics.json")
    write_text_atomic(out, text + "\n")
    print(text)
    return 0


def cmd_sweep(cfg, args) -> int:
    case = _case(cfg)
    _check_dof(cfg, case)
    proto = protocol(cfg)
    rows = contamination_sweep(case, proto, cfg["sweep"]["fractions"], cfg["sweep"]["seeds"], jobs=args.jobs)
    out = _out(cfg, "sweep.csv")
    write_sweep_csv(out, rows)
    means = sweep_means(rows)
    print("fraction  mode  quantity  mean_rmse")
    for (f, mode, q), v in sorted(means.items()):
        print(f"{f:8.2f}  {mode:4s}  {q}  {v:.6g}")
    failed = [r for r in rows if r.error]
    if failed:
        print(f"{len(failed)} cell(s) failed; see the empty rmse entries in {out}")
    if args.figures:
        from .report import plot_sweep
        plot_sweep(out.with_suffix(".png"), rows)
    print(f"-> {out}")
    return 0


def cmd_demo_residuals(cfg, args) -> int:
    H, Sigma = gp.residual_demo_instance()
    _, W = gp.residual_sensitivity(H, Sigma)
    n = H.shape[0]
    e1 = np.zeros(n)
    e1[0] = 1.0
    r1 = gp.smearing_masking_demo(W, e1)
    e2 = gp.masking_pair(W, 0, 1)
    r2 = gp.smearing_masking_demo(W, e2)
    print("Smearing: one gross error on point 1 spreads into the other residuals")
    print(" i        e_i          r_i")
    for i in range(n):
        print(f"{i + 1:2d}  {e1[i]:10.4f}  {r1[i]: .4e}")
    print(f"nonzero residuals at error-free points: {int(np.sum(np.abs(r1[1:]) > 1e-12))}")
    print()
    print("Masking: two gross errors on points 1-2 cancel in their own residuals")
    print(" i        e_i          r_i")
    for i in range(n):
        print(f"{i + 1:2d}  {e2[i]:10.4f}  {r2[i]: .4e}")
    print(f"|r_1| = {abs(r2[0]):.3e}, |r_2| = {abs(r2[1]):.3e}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _csv_list(conv):
    def parse(text):
        try:
            return [conv(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("experiment settings (override the config file)")
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--seed", type=int, help="root seed (falls back to $RGPF_SEED)")
    g.add_argument("--out-dir", help="directory for artifacts")
    g.add_argument("--case", help="case JSON path or 'ieee33'")
    g.add_argument("--n-train", type=int)
    g.add_argument("--n-test", type=int)
    g.add_argument("--outputs", type=_csv_list(str), help="comma list such as vmag_19,vang_19")
    g.add_argument("--mode", choices=gp.MODES)
    g.add_argument("--basis", choices=("constant", "linear", "quadratic"))
    g.add_argument("--kernel", choices=("rbf", "exponential", "matern32", "rational_quadratic"))
    g.add_argument("--alpha", type=float)
    g.add_argument("--rq-form", choices=("standard", "composed"))
    g.add_argument("--huber-c", type=float)
    g.add_argument("--ps-b", type=float)
    g.add_argument("--n-starts", type=int)
    g.add_argument("--outer-max-iter", type=int)
    g.add_argument("--fixed-noise", type=float)
    g.add_argument("--fraction", type=float)
    g.add_argument("--targets", type=_csv_list(str))
    g.add_argument("--magnitude-scale", type=float)
    g.add_argument("--placement", choices=("prefix", "random"))
    g.add_argument("--measurement-noise", type=float)
    g.add_argument("--mc-samples", type=int)
    g.add_argument("--fractions", type=_csv_list(float))
    g.add_argument("--seeds", type=_csv_list(int))
    g.add_argument("--figures", action="store_true", help="also render PNG figures next to the CSVs")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="rgpf", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="simulate train.csv and test.csv")
    p = sub.add_parser("corrupt", parents=[common], help="inject outliers into a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--output")
    p = sub.add_parser("train", parents=[common], help="train one model per output quantity")
    p.add_argument("--data", required=True)
    p = sub.add_parser("predict", parents=[common], help="predict with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output")
    p.add_argument("--noisy", action="store_true", help="include the nugget in the predictive std")
    p = sub.add_parser("evaluate", parents=[common], help="RMSE/MAE of predictions against a reference")
    p.add_argument("--predictions", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--quantity")
    p.add_argument("--output")
    p = sub.add_parser("sweep", parents=[common], help="contamination sweep over fractions and seeds")
    p.add_argument("--jobs", type=int, default=1)
    sub.add_parser("demo-residuals", parents=[common], help="print the smearing/masking tables")
    return parser


COMMANDS = {"generate": cmd_generate, "corrupt": cmd_corrupt, "train": cmd_train, "predict": cmd_predict,
            "evaluate": cmd_evaluate, "sweep": cmd_sweep, "demo-residuals": cmd_demo_residuals}


def _report(exc: BaseException, code: int) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except RGPFError as exc:
        return _report(exc, exc.exit_code)
    except OSError as exc:
        return _report(exc, ArtifactIOError.exit_code)


if __name__ == "__main__":
    sys.exit(main())
