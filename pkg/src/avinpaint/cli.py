"""``avinpaint`` command line.

Exit status: 0 on success, 1 for invalid input (bad flags, missing files,
incompatible checkpoint), 2 for runtime failures such as diverged training.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp, inpaint, metrics, synthdata
from .corruption import FIXED_GAP_SIZES, GapPlan, fixed_gap_plan, sample_gap_plan
from .ctc import read_phone_dict
from .data import Record, read_manifest, write_manifest
from .features import read_landmarks

log = logging.getLogger("avinpaint")

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

DEFAULTS = {
    "seed": 0,
    "batch_size": 8,
    "lr": 0.001,
    "lam": 0.001,
    "patience": 5,
    "max_epochs": 100,
    "hidden": 250,
    "layers": 3,
    "clip_norm": 5.0,
    "recognizer_hidden": 250,
    "recognizer_layers": 2,
    "gl_iters": 100,
    "beam_width": 20,
    "jobs": 1,
}

REPORT_COLUMNS = ["utterance_id", "variant", "gap_ms_total", "l1", "per", "stoi", "pesq_external"]


class UsageError(Exception):
    """Invalid user input; exits with status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}")
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise UsageError(f"{path}: unknown config keys {sorted(unknown)}")
    return cfg


def effective_config(args) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update(load_config(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _need_file(path, what):
    if not Path(path).is_file():
        raise UsageError(f"{what} not found: {path}")


def _data_dir(path):
    d = Path(path)
    for name in ("train.jsonl", "val.jsonl"):
        _need_file(d / name, "manifest")
    phones = d / "phones.txt"
    n_phones = len(read_phone_dict(phones)) if phones.is_file() else synthdata.N_PHONES
    return d, n_phones


# --- subcommands ------------------------------------------------------------

def cmd_synth(args, cfg):
    paths = synthdata.synth_dataset(args.out, args.train, args.val, args.test, cfg["seed"])
    for split, p in paths.items():
        print(f"{split}: {p}")


def _parse_mode(mode):
    if mode == "variable":
        return None
    if mode.startswith("fixed:"):
        try:
            ms = int(mode.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad mode {mode!r}")
        if ms <= 0:
            raise UsageError("fixed gap must be positive")
        if ms not in FIXED_GAP_SIZES:
            log.warning("fixed gap %d ms is not one of the standard sizes %s", ms, FIXED_GAP_SIZES)
        return ms
    raise UsageError(f"mode must be 'variable' or 'fixed:MS', got {mode!r}")


def cmd_corrupt(args, cfg):
    fixed = _parse_mode(args.mode)
    _need_file(args.manifest, "manifest")
    records = read_manifest(args.manifest)
    out = []
    for rec in records:
        n = dsp.read_wav(rec.wav).size
        utt_ms = 1000.0 * n / dsp.SAMPLE_RATE
        seed = synthdata.utterance_seed(cfg["seed"], rec.id)
        plan = sample_gap_plan(utt_ms, seed) if fixed is None else fixed_gap_plan(utt_ms, fixed, seed)
        out.append(Record(rec.id, rec.wav, rec.phones, rec.landmarks, plan))
    write_manifest(args.out, out)
    print(f"wrote {len(out)} records to {args.out}")


def _train_config(cfg, variant, n_phones):
    keys = ("batch_size", "lr", "lam", "patience", "max_epochs", "seed", "hidden", "layers", "clip_norm")
    return inpaint.TrainConfig(variant=variant, n_phones=n_phones, **{k: cfg[k] for k in keys})


def cmd_train(args, cfg):
    data_dir, n_phones = _data_dir(args.data)
    tcfg = _train_config(cfg, args.variant, n_phones)
    train_recs = read_manifest(data_dir / "train.jsonl")
    val_recs = read_manifest(data_dir / "val.jsonl")
    video = inpaint.uses_video(tcfg.variant)
    if video and any(r.landmarks is None for r in train_recs + val_recs):
        raise UsageError("audio-visual training needs landmarks for every utterance")
    norm, vstats = inpaint.fit_feature_stats(train_recs)
    train_set = inpaint.load_examples(train_recs, norm, vstats, with_video=video)
    val_set = inpaint.load_examples(val_recs, norm, vstats, with_video=video)
    model, history = inpaint.train(train_set, val_set, tcfg, norm, vstats if video else None)
    model.save(args.out)
    metrics_path = args.metrics or str(args.out) + ".metrics.csv"
    inpaint.write_history(metrics_path, history)
    best = min(history, key=lambda h: h.val_mse)
    print(f"{tcfg.variant}: {len(history)} epochs, best val_mse {best.val_mse:.5f} "
          f"at epoch {best.epoch}; checkpoint {args.out}")


def _clean_features(records, norm):
    feats, labels = [], []
    for rec in records:
        spec = inpaint.clean_log_spectrogram(dsp.read_wav(rec.wav))
        feats.append(dsp.normalize(spec, norm).values)
        labels.append(rec.phones)
    return feats, labels


def cmd_train_recognizer(args, cfg):
    data_dir, n_phones = _data_dir(args.data)
    train_recs = read_manifest(data_dir / "train.jsonl")
    val_recs = read_manifest(data_dir / "val.jsonl")
    norm, _ = inpaint.fit_feature_stats([Record(r.id, r.wav, r.phones) for r in train_recs])
    tf, tl = _clean_features(train_recs, norm)
    vf, vl = _clean_features(val_recs, norm)
    rec, history = metrics.train_recognizer(
        tf, tl, vf, vl, norm, n_phones=n_phones, hidden=cfg["recognizer_hidden"],
        layers=cfg["recognizer_layers"], batch_size=cfg["batch_size"], lr=cfg["lr"],
        max_epochs=cfg["max_epochs"], patience=cfg["patience"], seed=cfg["seed"],
        clip_norm=cfg["clip_norm"])
    rec.save(args.out)
    print(f"recognizer: {len(history)} epochs; checkpoint {args.out}")


def read_gaps_file(path) -> GapPlan:
    _need_file(path, "gap file")
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: {exc}")
    gaps = obj.get("gaps", []) if isinstance(obj, dict) else obj
    return GapPlan.from_list(gaps)


def _load_model(path):
    _need_file(path, "checkpoint")
    try:
        return inpaint.InpaintModel.load(path)
    except ValueError as exc:
        raise UsageError(str(exc))


def cmd_infer(args, cfg):
    model = _load_model(args.ckpt)
    if inpaint.uses_video(model.variant) and args.landmarks is None:
        raise UsageError(f"{model.variant} checkpoint needs visual input: pass --landmarks")
    _need_file(args.wav, "wav")
    wav = dsp.read_wav(args.wav)
    plan = read_gaps_file(args.gaps)
    plan.validate(1000.0 * wav.size / dsp.SAMPLE_RATE, min_gap_ms=1)
    lm = None
    if args.landmarks is not None and inpaint.uses_video(model.variant):
        _need_file(args.landmarks, "landmark file")
        lm = read_landmarks(args.landmarks)
    out = inpaint.infer(model, wav, plan, lm, gl_iters=cfg["gl_iters"])
    dsp.write_wav(args.out, out)
    print(f"wrote {args.out}")


# --- evaluation ---------------------------------------------------------------

@dataclass
class _EvalJob:
    ckpt: str
    recognizer: str | None
    record: Record
    gl_iters: int
    beam_width: int


_CACHE = {}


def _cached(kind, path):
    key = (kind, str(path))
    if key not in _CACHE:
        _CACHE[key] = inpaint.InpaintModel.load(path) if kind == "model" else metrics.Recognizer.load(path)
    return _CACHE[key]


def evaluate_record(job: _EvalJob) -> dict:
    model = _cached("model", job.ckpt)
    rec = job.record
    wav = dsp.read_wav(rec.wav)
    lm = read_landmarks(rec.landmarks) if inpaint.uses_video(model.variant) else None
    Y_hat, M, observed = inpaint.restore_spectrogram(model, wav, rec.gaps, lm)
    Y = dsp.normalize(dsp.log_magnitude(observed), model.norm).values
    l1 = metrics.masked_l1(Y_hat, Y, M) if M.any() else float("nan")
    restored = inpaint.waveform_from_restored(Y_hat, M, observed, model.norm, wav.size, job.gl_iters)
    per = float("nan")
    if job.recognizer is not None and rec.phones:
        hyp = _cached("recognizer", job.recognizer).recognize(restored, job.beam_width)
        per = metrics.per(hyp, rec.phones)
    return {"utterance_id": rec.id, "variant": model.variant, "gap_ms_total": rec.gaps.total_ms,
            "l1": l1, "per": per, "stoi": metrics.stoi(wav, restored), "pesq_external": ""}


def _fmt(v):
    if isinstance(v, float):
        return "" if np.isnan(v) else f"{v:.6f}"
    return v


def _attach_pesq(rows, path):
    _need_file(path, "PESQ csv")
    with open(path, newline="") as fh:
        table = {(r["utterance_id"], r.get("variant", "")): r["pesq"] for r in csv.DictReader(fh)}
    for row in rows:
        row["pesq_external"] = table.get((row["utterance_id"], row["variant"]),
                                         table.get((row["utterance_id"], ""), ""))


def aggregate_rows(rows):
    out = []
    for variant in sorted({r["variant"] for r in rows}):
        sel = [r for r in rows if r["variant"] == variant]
        agg = {"utterance_id": "__mean__", "variant": variant,
               "gap_ms_total": float(np.mean([r["gap_ms_total"] for r in sel])), "pesq_external": ""}
        for k in ("l1", "per", "stoi"):
            vals = [r[k] for r in sel if not np.isnan(r[k])]
            agg[k] = float(np.mean(vals)) if vals else float("nan")
        out.append(agg)
    return out


def write_report(path, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row[k]) for k in REPORT_COLUMNS})


def plot_gap_charts(rows, out_dir) -> list:
    """One SVG per metric: mean value against gap size, a line per variant."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "avinpaint"
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for metric, label in (("l1", "L1"), ("per", "PER"), ("stoi", "STOI")):
        fig, ax = plt.subplots(figsize=(4, 3))
        for variant in sorted({r["variant"] for r in rows}):
            by_gap = {}
            for r in rows:
                if r["variant"] == variant and not np.isnan(r[metric]):
                    by_gap.setdefault(r["gap_ms_total"], []).append(r[metric])
            if by_gap:
                gaps = sorted(by_gap)
                ax.plot(gaps, [np.mean(by_gap[g]) for g in gaps], marker="o", label=variant)
        ax.set_xscale("log", base=2)
        ax.set_xlabel("gap size (ms)")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
        if ax.lines:
            ax.legend()
        fig.tight_layout()
        path = out_dir / f"{metric}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written


def cmd_evaluate(args, cfg):
    for ck in args.ckpt:
        _load_model(ck)
    if args.recognizer is not None:
        _need_file(args.recognizer, "recognizer checkpoint")
    jobs = []
    for ck in args.ckpt:
        model = _cached("model", ck)
        for mf in args.manifest:
            _need_file(mf, "manifest")
            for rec in read_manifest(mf):
                if inpaint.uses_video(model.variant) and rec.landmarks is None:
                    raise UsageError(f"{rec.id}: {model.variant} checkpoint needs landmarks")
                jobs.append(_EvalJob(ck, args.recognizer, rec, cfg["gl_iters"], cfg["beam_width"]))
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(cfg["jobs"]) as pool:
            rows = list(pool.map(evaluate_record, jobs, chunksize=4))
    else:
        rows = [evaluate_record(j) for j in jobs]
    if args.pesq_csv:
        _attach_pesq(rows, args.pesq_csv)
    write_report(args.report, rows + aggregate_rows(rows))
    if args.plots:
        plot_gap_charts(rows, args.plots)
    print(f"wrote {len(rows)} rows to {args.report}")


# --- wiring -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--config", help="TOML file of key = value defaults")
    common.add_argument("--show-config", action="store_true", help="print the effective config and exit")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="avinpaint", description="Audio-visual speech inpainting toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--train", type=int, required=True)
    s.add_argument("--val", type=int, required=True)
    s.add_argument("--test", type=int, required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("corrupt", parents=[common], help="resample gap plans for a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--mode", required=True, help="'variable' or 'fixed:MS'")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_corrupt)

    training = argparse.ArgumentParser(add_help=False)
    for key in ("batch_size", "patience", "max_epochs", "hidden", "layers"):
        training.add_argument("--" + key.replace("_", "-"), dest=key, type=int)
    for key in ("lr", "lam", "clip_norm"):
        training.add_argument("--" + key.replace("_", "-"), dest=key, type=float)

    s = sub.add_parser("train", parents=[common, training], help="train an inpainting model")
    s.add_argument("--variant", required=True, choices=["a", "av", "a-mtl", "av-mtl"])
    s.add_argument("--data", required=True, help="directory with train.jsonl / val.jsonl")
    s.add_argument("--out", required=True)
    s.add_argument("--metrics", help="per-epoch CSV log (default: OUT.metrics.csv)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("train-recognizer", parents=[common, training], help="train the phone recognizer")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--recognizer-hidden", dest="recognizer_hidden", type=int)
    s.add_argument("--recognizer-layers", dest="recognizer_layers", type=int)
    s.set_defaults(func=cmd_train_recognizer)

    s = sub.add_parser("infer", parents=[common], help="restore a corrupted waveform")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--wav", required=True)
    s.add_argument("--gaps", required=True, help='JSON: {"gaps": [[start_ms, dur_ms], ...]} or a bare list')
    s.add_argument("--landmarks")
    s.add_argument("--out", required=True)
    s.add_argument("--gl-iters", dest="gl_iters", type=int)
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("evaluate", parents=[common], help="score checkpoints on manifests")
    s.add_argument("--ckpt", required=True, action="append")
    s.add_argument("--recognizer")
    s.add_argument("--manifest", required=True, action="append")
    s.add_argument("--report", required=True)
    s.add_argument("--plots")
    s.add_argument("--pesq-csv", help="CSV (utterance_id, variant, pesq) from an external PESQ tool")
    s.add_argument("--jobs", type=int)
    s.add_argument("--gl-iters", dest="gl_iters", type=int)
    s.add_argument("--beam-width", dest="beam_width", type=int)
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = effective_config(args)
        if args.show_config:
            for k in sorted(cfg):
                print(f"{k} = {cfg[k]!r}")
            return 0
        args.func(args, cfg)
    except (UsageError, ValueError, FileNotFoundError) as exc:
        print(f"avinpaint {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"avinpaint {args.command}: failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
