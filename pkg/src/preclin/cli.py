"""Command-line entry point wiring the full pipeline.

Subcommands: ingest, label, split, train, evaluate, predict, trajectory,
synth.  Exit codes: 0 success, 1 usage error, 2 validation or
contamination error, 3 I/O error.  Every random choice is traced to an
explicit --seed (or a seed recorded in a config file); outputs carry no
timestamps so re-runs are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dataset import person_disjoint_split
from .errors import ConfigError, PreclinError
from .labeling import SCHEME_A, SCHEME_B, label_sessions, summarize_decisions
from .models.rvn import export_trajectory, load_trajectory
from .synth import SynthSpec, generate_cohort
from .training import (TrainConfig, default_model_config, encode_volume,
                       evaluate_model, load_model_checkpoint,
                       model_config_from_dict, predict_probs,
                       save_model_checkpoint, split_examples, train_pipeline)
from .volume_io import load_manifest, read_volume, write_manifest

TRAJECTORY_COLORS = ("green", "red", "blue", "yellow", "brown", "pink")

_SCHEME_FLAGS = {"A": SCHEME_A, "B": SCHEME_B}


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc


def _cmd_ingest(args) -> int:
    out = _out_dir(args)
    records = load_manifest(args.manifest)
    n_sessions = 0
    for record in records:
        for session in record.sessions:
            read_volume(session.volume_path)
            n_sessions += 1
    write_manifest(records, out / "manifest.jsonl")
    _write_json(out / "ingest_summary.json", {
        "n_subjects": len(records),
        "n_visits": sum(len(r.visits) for r in records),
        "n_sessions": n_sessions,
    })
    print(f"ingested {len(records)} subjects, {n_sessions} sessions")
    return 0


def _cmd_label(args) -> int:
    out = _out_dir(args)
    records = load_manifest(args.manifest)
    decisions = label_sessions(records, _SCHEME_FLAGS[args.scheme])
    with open(out / "labels.jsonl", "w", encoding="utf-8") as fh:
        for d in decisions:
            fh.write(json.dumps({
                "subject_id": d.session.subject_id,
                "session_day": d.session.day,
                "volume_path": d.session.volume_path,
                "label": d.label,
                "reason": d.reason,
                "matched_visit_day": d.matched_visit.day,
                "matched_diagnosis": d.matched_visit.diagnosis,
            }, sort_keys=True) + "\n")
    summary = summarize_decisions(decisions)
    _write_json(out / "labels_summary.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_split(args) -> int:
    out = _out_dir(args)
    try:
        ratios = tuple(float(r) for r in args.ratios.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --ratios {args.ratios!r}: {exc}") from exc
    records = load_manifest(args.manifest)
    assignment = person_disjoint_split(records, ratios, seed=args.seed)
    _write_json(out / "split.json", assignment)
    counts = {name: sum(1 for v in assignment.values() if v == name)
              for name in ("train", "val", "test")}
    print(json.dumps(counts, sort_keys=True))
    return 0


def _load_train_config(args) -> TrainConfig:
    data = _read_json(args.config) if args.config else {}
    for flag, key in (("model", "model"), ("epochs", "epochs"),
                      ("batch_size", "batch_size"), ("seed", "seed")):
        value = getattr(args, flag)
        if value is not None:
            data[key] = value
    if args.scheme is not None:
        data["scheme"] = _SCHEME_FLAGS[args.scheme]
    if "model" not in data:
        raise ConfigError("no model kind: pass --model or set it in --config")
    if "seed" not in data:
        raise ConfigError("no seed: pass --seed or set it in --config")
    data.setdefault("epochs", None)
    if data["epochs"] is None:
        from .optim import DEFAULT_EPOCHS
        data["epochs"] = DEFAULT_EPOCHS[data["model"]]
    return TrainConfig.from_dict(data)


def _load_model_config(kind: str, path):
    if path is None:
        return default_model_config(kind)
    return model_config_from_dict(kind, _read_json(path))


def _cmd_train(args) -> int:
    out = _out_dir(args)
    config = _load_train_config(args)
    model_config = _load_model_config(config.model, args.model_config)
    records = load_manifest(args.manifest)
    split_map = _read_json(args.split)
    result = train_pipeline(records, split_map, config, model_config)
    save_model_checkpoint(out / "checkpoint.bin", result, config, model_config)
    _write_json(out / "history.json", {
        "history": result.history,
        "best_epoch": result.best_epoch,
        "best_val_f1": result.best_val_f1,
        "train_subjects": result.train_subjects,
        "val_subjects": result.val_subjects,
    })
    print(f"best epoch {result.best_epoch} val F1 {result.best_val_f1:.4f}")
    return 0


def _cmd_evaluate(args) -> int:
    out = _out_dir(args)
    model, header = load_model_checkpoint(args.checkpoint)
    kind = header["kind"]
    model_config = model_config_from_dict(kind, header["config"])
    scheme = (_SCHEME_FLAGS[args.scheme] if args.scheme is not None
              else header.get("train_config", {}).get("scheme", SCHEME_A))
    records = load_manifest(args.manifest)
    split_map = _read_json(args.split)
    buckets = split_examples(records, split_map, scheme)
    report = evaluate_model(model, kind, model_config, records,
                            buckets["test"], header.get("train_subjects", []))
    _write_json(out / "report.json", report)
    with open(out / "predictions.jsonl", "w", encoding="utf-8") as fh:
        for row in report["predictions"]:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    print(json.dumps(report["metrics"], sort_keys=True))
    return 0


def _cmd_predict(args) -> int:
    out = _out_dir(args)
    model, header = load_model_checkpoint(args.checkpoint)
    kind = header["kind"]
    model_config = model_config_from_dict(kind, header["config"])
    volume = read_volume(args.volume)
    encoded = encode_volume(kind, model_config, volume).unsqueeze(0)
    prob = float(predict_probs(kind, model, encoded)[0])
    _write_json(out / "prediction.json", {
        "volume": str(args.volume),
        "probability": prob,
        "prediction": int(prob >= 0.5),
    })
    if kind == "rvn":
        _, traj = model.run(encoded.squeeze(0).squeeze(0).numpy(),
                            stochastic=False)
        export_trajectory(traj, volume.shape, out / "trajectory.json")
    print(f"probability {prob:.4f}")
    return 0


def _cmd_trajectory(args) -> int:
    out = _out_dir(args)
    trajectory, volume_shape = load_trajectory(args.trajectory)
    volume = read_volume(args.volume)
    if volume.shape != tuple(volume_shape):
        raise ConfigError(
            f"volume shape {volume.shape} does not match trajectory "
            f"shape {tuple(volume_shape)}")
    from .models.rvn import to_voxel_coords
    coords = [to_voxel_coords(loc, volume.shape) for loc in trajectory.locations]

    with open(out / "trajectory.txt", "w", encoding="utf-8") as fh:
        fh.write("step depth height width\n")
        for t, (z, y, x) in enumerate(coords, start=1):
            fh.write(f"{t} {z:.2f} {y:.2f} {x:.2f}\n")

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = len(coords)
    fig, axes = plt.subplots(1, n, figsize=(3 * n, 3.2))
    axes = [axes] if n == 1 else list(axes)
    for t, ax in enumerate(axes):
        z = int(round(coords[t][0]))
        z = min(max(z, 0), volume.shape[0] - 1)
        ax.imshow(volume.voxels[z], cmap="gray", interpolation="nearest")
        path = coords[: t + 1]
        ax.plot([c[2] for c in path], [c[1] for c in path],
                color="white", linewidth=1.0, zorder=1)
        for k, (_, y, x) in enumerate(path):
            ax.scatter([x], [y], s=60, zorder=2,
                       color=TRAJECTORY_COLORS[k % len(TRAJECTORY_COLORS)])
        ax.set_title(f"step {t + 1} (depth {z})", fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(out / "trajectory.png", dpi=100)
    plt.close(fig)
    print(f"wrote {out / 'trajectory.png'}")
    return 0


def _cmd_synth(args) -> int:
    out = _out_dir(args).resolve()
    data = _read_json(args.spec)
    if args.seed is not None:
        data["seed"] = args.seed
    if "seed" not in data:
        raise ConfigError("no seed: pass --seed or set it in the spec file")
    spec = SynthSpec.from_dict(data)
    truth = generate_cohort(spec, out)
    _write_json(out / "truth.json", {
        "manifest": truth.manifest_path,
        "lesion_center_voxel": list(truth.lesion_center_voxel),
        "converter_ids": truth.converter_ids,
        "intended": [
            {"subject_id": sid, "session_day": day, "label": label}
            for (sid, day), label in sorted(truth.intended.items())
        ],
    })
    n_pos = sum(1 for v in truth.intended.values() if v == "class1")
    print(f"generated {spec.n_subjects} subjects, "
          f"{len(truth.intended)} sessions ({n_pos} preclinical)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="preclin",
        description="Volumetric-scan classification pipeline for early "
                    "detection from longitudinal cohorts.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a manifest and its volumes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("label", help="assign class labels to scan sessions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scheme", choices=("A", "B"), default="A")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_label)

    p = sub.add_parser("split", help="person-disjoint train/val/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratios", default="0.65,0.20,0.15")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train a model on a labeled split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--model", choices=("cnn3d", "rvn", "transformer"))
    p.add_argument("--config", help="train config JSON")
    p.add_argument("--model-config", dest="model_config",
                   help="architecture overrides JSON")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", choices=("A", "B"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--scheme", choices=("A", "B"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("predict", help="score one volume with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--volume", required=True,
                   help="volume base path (without .json/.raw)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("trajectory",
                       help="plot a glimpse trajectory over its volume")
    p.add_argument("--trajectory", required=True, help="trajectory JSON")
    p.add_argument("--volume", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_trajectory)

    p = sub.add_parser("synth", help="generate a synthetic planted-lesion cohort")
    p.add_argument("--spec", required=True, help="cohort spec JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except PreclinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(run())


if __name__ == "__main__":
    entrypoint()
