"""varsig command line: synth, train, retrieve, baseline_tv, and eval."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .baselines import TvConfig, tv_map_solve, write_history_csv
from .core import SystemId
from .datasets import (
    ToyQuadraticConfig,
    dataset_manifest,
    load_dataset,
    save_dataset,
    synth_hologram_dataset,
    synth_pulse_dataset,
    synth_toy_dataset,
    synth_video_dataset,
)
from .errors import VarsigError
from .metrics import MetricsReport, fidelity, psnr, write_report
from .model import ModelConfig, VariationalModel, build_forward_model
from .tensorfile import tensor_read, tensor_write
from .train import METHODS, Trainer, load_model, make_model

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_SYSTEM_MISMATCH = 4
EXIT_FAILURE = 5

_SYSTEM_NAMES = tuple(s.value for s in SystemId)


class CliError(Exception):
    """Error with a machine-parsable kind and a dedicated exit code."""

    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": str(message)}), file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    """argparse with single-line JSON errors on stderr."""

    def error(self, message):
        _emit_error("usage", message)
        raise SystemExit(EXIT_USAGE)


def _apply_thread_cap() -> None:
    raw = os.environ.get("VARSIG_THREADS")
    if not raw:
        return
    try:
        threads = int(raw)
        if threads < 1:
            raise ValueError
    except ValueError:
        raise CliError("usage", f"VARSIG_THREADS must be a positive integer, got {raw!r}",
                       EXIT_USAGE)
    import torch

    torch.set_num_threads(threads)
    try:
        import numba

        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass


# --- configuration ------------------------------------------------------------------


def _system_config_cls(system: SystemId):
    if system == SystemId.STREAKING:
        from .streaking import StreakingConfig

        return StreakingConfig
    if system == SystemId.VIDEO_CS:
        from .video_cs import VideoCsConfig

        return VideoCsConfig
    if system == SystemId.HOLOGRAM:
        from .fresnel import FresnelConfig

        return FresnelConfig
    return ToyQuadraticConfig


_CONFIG_KEYS = {"system", "seed", "paths", "model", "physics", "tv"}


def effective_config(args) -> dict:
    """Resolve CLI flag > config file > built-in default into one dict."""
    file_cfg: dict = {}
    config_path = getattr(args, "config", None)
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise CliError("missing_file", f"config file not found: {path}",
                           EXIT_MISSING_FILE)
        file_cfg = json.loads(path.read_text())
        unknown = set(file_cfg) - _CONFIG_KEYS
        if unknown:
            raise CliError("usage", f"unknown config keys: {sorted(unknown)}",
                           EXIT_USAGE)

    system_name = getattr(args, "system", None) or file_cfg.get("system", "hologram")
    try:
        system = SystemId(system_name)
    except ValueError:
        raise CliError("usage", f"unknown system {system_name!r}; expected one of "
                       f"{_SYSTEM_NAMES}", EXIT_USAGE)

    model = {**json.loads(ModelConfig().to_json()), **file_cfg.get("model", {})}
    physics_cls = _system_config_cls(system)
    physics = {**json.loads(physics_cls().to_json()), **file_cfg.get("physics", {})}
    tv = {**dataclasses.asdict(TvConfig()), **file_cfg.get("tv", {})}
    paths = {
        "data_root": "data", "artifact_dir": "artifacts", "report_dir": "reports",
        **file_cfg.get("paths", {}),
    }
    seed = int(file_cfg.get("seed", 0))
    if getattr(args, "seed", None) is not None:
        seed = int(args.seed)
        model["seed"] = seed
    return {
        "system": system.value,
        "seed": seed,
        "paths": paths,
        "model": model,
        "physics": physics,
        "tv": tv,
    }


def config_sha256(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _write_run_config(cfg: dict, out_dir: Path) -> str:
    sha = config_sha256(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_config.json").write_text(
        json.dumps({"sha256": sha, "config": cfg}, indent=2, sort_keys=True)
    )
    return sha


def _physics_config(cfg: dict):
    system = SystemId(cfg["system"])
    return _system_config_cls(system).from_json(json.dumps(cfg["physics"]))


def _forward_model(cfg: dict):
    return build_forward_model(cfg["system"], cfg["physics"])


def _require_file(path: Path, what: str) -> Path:
    if not path.exists():
        raise CliError("missing_file", f"{what} not found: {path}", EXIT_MISSING_FILE)
    return path


# --- subcommands --------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = effective_config(args)
    system = SystemId(cfg["system"])
    physics = _physics_config(cfg)
    count, seed = args.n, cfg["seed"]
    if system == SystemId.STREAKING:
        records = synth_pulse_dataset(physics, count, seed=seed)
    elif system == SystemId.VIDEO_CS:
        records = synth_video_dataset(physics, count, seed=seed)
    elif system == SystemId.HOLOGRAM:
        records = synth_hologram_dataset(physics, count, seed=seed)
    else:
        records = synth_toy_dataset(physics, count, seed=seed)
    out_root = Path(args.out or cfg["paths"]["data_root"])
    directory = save_dataset(records, out_root, args.split, _forward_model(cfg),
                             seed=seed)
    sha = _write_run_config(cfg, directory)
    if args.plots:
        _plot_record(records[0], system, directory / "preview.png")
    print(f"synth wrote {len(records)} records to {directory} sha256={sha}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = effective_config(args)
    system = SystemId(cfg["system"])
    data_root = Path(args.data or cfg["paths"]["data_root"])
    split_dir = data_root / system.value / args.split
    _require_file(split_dir / "manifest.json", "dataset manifest")
    manifest = dataset_manifest(data_root, system, args.split)
    if manifest["system"] != system.value:
        raise CliError("system_mismatch",
                       f"dataset system {manifest['system']!r} != requested "
                       f"{system.value!r}", EXIT_SYSTEM_MISMATCH)
    records = load_dataset(data_root, system, args.split)

    if args.method not in METHODS:
        raise CliError("usage", f"unknown method {args.method!r}", EXIT_USAGE)
    fm = _forward_model(cfg)
    model = make_model(args.method, fm, ModelConfig(**cfg["model"]))
    trainer = Trainer(model, records)
    history = trainer.run(epochs=args.epochs)

    out = Path(args.out or (Path(cfg["paths"]["artifact_dir"]) / args.method))
    model.save(out)
    sha = _write_run_config(cfg, out)
    _write_loss_curve(history, out / "loss_curve.csv")
    if args.plots:
        _plot_loss_curve(history, out / "loss_curve.png")
    final = history[-1].loss if history else float("nan")
    print(f"train {args.method} epochs={model.trained_epochs} "
          f"final_loss={final:.6g} artifact={out} sha256={sha}")
    return EXIT_OK


def cmd_retrieve(args) -> int:
    cfg = effective_config(args)
    artifact = Path(args.artifact)
    _require_file(artifact / "config.json", "model artifact")
    model = load_model(artifact)
    meas_path = _require_file(Path(args.measurement), "measurement file")
    g = tensor_read(meas_path)
    expected = model.fm.measurement_shape()
    if tuple(g.shape) != tuple(expected):
        raise CliError("system_mismatch",
                       f"measurement shape {tuple(g.shape)} does not match the "
                       f"artifact's system {model.fm.system_id.value} {expected}",
                       EXIT_SYSTEM_MISMATCH)

    n = args.instances
    if isinstance(model, VariationalModel):
        instances = model.retrieve_instances(g, n=n, seed=cfg["seed"])
    else:
        instances = [model.retrieve(g)] * n

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, inst in enumerate(instances):
        tensor_write(out / f"instance_{i:02d}.tns", inst.data)
        rows.append((i, fidelity(inst, g, model.fm)))
    with open(out / "fidelity.csv", "w") as fh:
        fh.write("instance,fidelity_db\n")
        for i, fid in rows:
            fh.write(f"{i},{fid:.17g}\n")
    sha = _write_run_config(cfg, out)
    if args.plots:
        _plot_instances(instances, out / "instances.png")
    mean_fid = float(np.mean([fid for _, fid in rows]))
    print(f"retrieve instances={n} mean_fidelity_db={mean_fid:.4f} "
          f"out={out} sha256={sha}")
    return EXIT_OK


def cmd_baseline_tv(args) -> int:
    cfg = effective_config(args)
    if args.lambda_tv is not None:
        cfg["tv"]["lambda_tv"] = float(args.lambda_tv)
    fm = _forward_model(cfg)
    meas_path = _require_file(Path(args.measurement), "measurement file")
    g = tensor_read(meas_path)
    expected = fm.measurement_shape()
    if tuple(g.shape) != tuple(expected):
        raise CliError("system_mismatch",
                       f"measurement shape {tuple(g.shape)} does not match "
                       f"system {fm.system_id.value} {expected}",
                       EXIT_SYSTEM_MISMATCH)
    result = tv_map_solve(g, fm, TvConfig(**cfg["tv"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tensor_write(out / "reconstruction.tns", result.f.data)
    write_history_csv(result.history, out / "history.csv")
    sha = _write_run_config(cfg, out)
    last = result.history[-1]
    print(f"baseline_tv iters={last[0]} objective={last[1]:.6g} "
          f"out={out} sha256={sha}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = effective_config(args)
    testset = Path(args.testset)
    _require_file(testset / "manifest.json", "testset manifest")
    manifest = json.loads((testset / "manifest.json").read_text())
    system = SystemId(manifest["system"])
    records = load_dataset(testset.parent.parent, system, testset.name)
    fm = build_forward_model(manifest["system"], manifest["fm_config"])

    reports: list[MetricsReport] = []
    taken: set[str] = set()
    for token in args.methods:
        if token == "tv":
            report = _eval_tv(records, fm, cfg)
        else:
            artifact = Path(token)
            _require_file(artifact / "config.json", "model artifact")
            model = load_model(artifact)
            if model.fm.system_id != system:
                raise CliError("system_mismatch",
                               f"artifact {artifact} is for system "
                               f"{model.fm.system_id.value!r}, testset is "
                               f"{system.value!r}", EXIT_SYSTEM_MISMATCH)
            report = _eval_model(model, records, fm, args.instances, cfg["seed"])
        report.method = _unique_method_name(report.method, taken)
        taken.add(report.method)
        reports.append(report)

    out = Path(args.out or cfg["paths"]["report_dir"])
    csv_path, json_path = write_report(reports, out)
    sha = _write_run_config(cfg, out)
    if args.plots:
        _plot_report(reports, out / "report.png")
    for rep in reports:
        print(f"eval method={rep.method} mean_psnr_db={rep.mean_psnr:.4f} "
              f"mean_fidelity_db={rep.mean_fidelity:.4f}")
    print(f"eval wrote {csv_path} and {json_path} sha256={sha}")
    return EXIT_OK


def _unique_method_name(kind: str, taken: set[str]) -> str:
    name = kind
    serial = 2
    while name in taken:
        name = f"{kind}_{serial}"
        serial += 1
    return name


def _eval_model(model, records, fm, instances: int, seed: int) -> MetricsReport:
    kind = getattr(model, "kind", "variational")
    report = MetricsReport(method=kind)
    for rec in records:
        if isinstance(model, VariationalModel):
            estimates = model.retrieve_instances(rec.g, n=instances, seed=seed)
        else:
            estimates = [model.retrieve(rec.g.data)]
        report.psnr_db.append(float(np.mean(
            [psnr(est, rec.f) for est in estimates])))
        report.fidelity_db.append(float(np.mean(
            [fidelity(est, rec.g, fm) for est in estimates])))
    return report


def _eval_tv(records, fm, cfg: dict) -> MetricsReport:
    tv_cfg = TvConfig(**cfg["tv"])
    report = MetricsReport(method="tv")
    for rec in records:
        result = tv_map_solve(rec.g, fm, tv_cfg)
        report.psnr_db.append(psnr(result.f, rec.f))
        report.fidelity_db.append(fidelity(result.f, rec.g, fm))
    return report


# --- small output helpers --------------------------------------------------------------


def _write_loss_curve(history, path: Path) -> None:
    keys = sorted({k for st in history for k in st.components})
    with open(path, "w") as fh:
        fh.write("epoch,loss" + "".join(f",{k}" for k in keys) + "\n")
        for st in history:
            cells = [str(st.epoch), f"{st.loss:.17g}"]
            cells += [f"{st.components.get(k, float('nan')):.17g}" for k in keys]
            fh.write(",".join(cells) + "\n")


def _matplotlib():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _plot_loss_curve(history, path: Path) -> None:
    plt = _matplotlib()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([st.epoch for st in history], [st.loss for st in history], marker="o")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("training loss")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_record(record, system: SystemId, path: Path) -> None:
    plt = _matplotlib()
    g = record.g.data
    fig, ax = plt.subplots(figsize=(5, 4))
    if g.ndim == 1:
        ax.plot(g)
    elif g.ndim == 2:
        ax.imshow(g, aspect="auto", origin="lower")
    else:
        ax.imshow(np.clip(g / max(g.max(), 1e-12), 0, 1))
    ax.set_title(f"{system.value} measurement")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_instances(instances, path: Path) -> None:
    plt = _matplotlib()
    n = len(instances)
    cols = min(n, 5)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(2.2 * cols, 2.2 * rows),
                             squeeze=False)
    for i in range(rows * cols):
        ax = axes[i // cols][i % cols]
        ax.axis("off")
        if i >= n:
            continue
        data = instances[i].data
        if data.ndim == 1:
            ax.plot(data)
            ax.axis("on")
        elif data.ndim == 2:
            ax.imshow(data)
        else:
            ax.imshow(np.clip(data.reshape(data.shape[0], data.shape[1], -1)[..., 0],
                              None, None))
        ax.set_title(f"instance {i}", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_report(reports, path: Path) -> None:
    plt = _matplotlib()
    fig, ax = plt.subplots(figsize=(6, 4))
    names = [rep.method for rep in reports]
    x = np.arange(len(names))
    ax.bar(x - 0.2, [rep.mean_psnr for rep in reports], width=0.4, label="PSNR (dB)")
    ax.bar(x + 0.2, [rep.mean_fidelity for rep in reports], width=0.4,
           label="fidelity (dB)")
    ax.set_xticks(x, names, rotation=15)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# --- parser -----------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="varsig",
                     description="variational signal retrieval toolkit")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON run config (default: built-ins)")
        p.add_argument("--seed", type=int, help="global seed (default 0)")

    p = sub.add_parser("synth", help="synthesize a dataset")
    common(p)
    p.add_argument("--system", choices=_SYSTEM_NAMES, help="measurement system")
    p.add_argument("--n", type=int, required=True, help="number of records")
    p.add_argument("--out", help="dataset root (default: paths.data_root)")
    p.add_argument("--split", default="train", help="split name (default train)")
    p.add_argument("--plots", action="store_true", help="write a preview PNG")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model or baseline")
    common(p)
    p.add_argument("--system", choices=_SYSTEM_NAMES, help="measurement system")
    p.add_argument("--method", default="variational", choices=METHODS,
                   help="training method (default variational)")
    p.add_argument("--data", help="dataset root (default: paths.data_root)")
    p.add_argument("--split", default="train", help="training split (default train)")
    p.add_argument("--epochs", type=int, help="override model.epochs")
    p.add_argument("--out", help="artifact directory")
    p.add_argument("--plots", action="store_true", help="write loss_curve.png")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("retrieve", help="draw reconstructions from an artifact")
    common(p)
    p.add_argument("--artifact", required=True, help="trained model directory")
    p.add_argument("--measurement", required=True, help="measurement .tns file")
    p.add_argument("--instances", type=int, default=1,
                   help="number of instances to draw (default 1)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--plots", action="store_true", help="write instances.png")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("baseline_tv", help="TV-regularized MAP reconstruction")
    common(p)
    p.add_argument("--system", choices=_SYSTEM_NAMES, help="measurement system")
    p.add_argument("--measurement", required=True, help="measurement .tns file")
    p.add_argument("--lambda", dest="lambda_tv", type=float,
                   help="TV weight (default 10^2.0)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_baseline_tv)

    p = sub.add_parser("eval", help="evaluate methods on a testset")
    common(p)
    p.add_argument("--methods", nargs="+", required=True,
                   help="artifact directories and/or the literal 'tv'")
    p.add_argument("--testset", required=True, help="dataset split directory")
    p.add_argument("--instances", type=int, default=1,
                   help="instances per record for variational models")
    p.add_argument("--out", help="report directory (default: paths.report_dir)")
    p.add_argument("--plots", action="store_true", help="write report.png")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    try:
        _apply_thread_cap()
        parser = build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        return args.func(args)
    except CliError as exc:
        _emit_error(exc.kind, str(exc))
        return exc.code
    except FileNotFoundError as exc:
        _emit_error("missing_file", str(exc))
        return EXIT_MISSING_FILE
    except VarsigError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_FAILURE
    except Exception as exc:  # pragma: no cover - last-resort guard
        _emit_error("unexpected", f"{type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
