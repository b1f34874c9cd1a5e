"""Command-line entry point: ``dynfv <command> [options]``.

Options resolve as command-line flags, then ``--config`` file entries, then
built-in defaults. Relative paths are taken relative to ``--root``.

Exit status: 0 success, 1 module error, 2 usage error, 3 missing input,
4 file format or version mismatch.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .codebook import codebook_feature, load_codebook, save_codebook
from .dataset import Sequence, load_dataset, load_frames, load_mask, save_dataset
from .evaluation import DistanceMatrix, cmc, min_max_fuse, pur, rank_matches, rank_table
from .exceptions import DynfvError, FormatError
from .pooled import load_feature, save_feature
from .protocol import FEATURE_NAMES, ProtocolConfig, get_feature, run_protocol, window_ablation
from .synth import gen_identity_population, gen_tsd_population
from .trajectory import group_by_sequence, parse_trajectory_file

log = logging.getLogger("dynfv")

EXIT_ERROR, EXIT_USAGE, EXIT_MISSING, EXIT_FORMAT = 1, 2, 3, 4
FVE_SUFFIX = ".fve"

DEFAULTS = {
    "root": ".", "threads": 1, "verbose": False,
    "synth": {"ids": 20, "pool": 0, "seqs_per_id": 2, "population": "pairs", "distractors": 27,
              "appearance": "color", "pool_appearance": None, "frames": 3, "tracklets": 120,
              "noise": 0.05, "color_noise": 0.0, "color_jitter": 0.0},
    "train-codebook": {"feature": "dynfv", "input": None, "role": None, "persons": None,
                       "k": None, "windows": "5,9,14"},
    "encode": {"feature": "dynfv", "codebook": None, "mask": None},
    "evaluate": {"mode": "half-split", "features": "dynfv", "trials": 10, "input": None,
                 "probe_camera": None, "gallery_camera": None, "train_size": None,
                 "no_fuse": False, "encoded": None, "distances": None},
    "fuse": {"report": None},
    "ablate-windows": {"mode": "bk", "trials": 10, "input": None, "subsets": "5;9;14;5,9,14",
                       "probe_camera": None, "gallery_camera": None, "train_size": None},
    "plot-cmc": {"csv": None, "max_rank": None},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# -- option plumbing ---------------------------------------------------------

def _common(p):
    p.add_argument("--root", help="base directory for relative paths (default .)")
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--threads", type=int, help="worker threads (1 is bit-deterministic)")
    p.add_argument("--seed", type=int, help="random seed (default $DYNFV_SEED or 0)")
    p.add_argument("-v", "--verbose", action="store_true", default=None)


def build_parser():
    sup = argparse.SUPPRESS
    parser = _Parser(prog="dynfv", description=__doc__.splitlines()[0],
                     argument_default=sup)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_, description=help_, argument_default=sup)
        _common(p)
        return p

    p = cmd("synth", "write a synthetic dataset (TRK files, PNG crops, masks)")
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.add_argument("--ids", type=int, help="identities (targets for --population tsd)")
    p.add_argument("--pool", type=int, help="extra training-pool identities")
    p.add_argument("--seqs-per-id", type=int, help="cameras per identity (sequences per target)")
    p.add_argument("--population", choices=["pairs", "tsd"])
    p.add_argument("--distractors", type=int, help="distractor identities for tsd")
    p.add_argument("--appearance", choices=["color", "black"])
    p.add_argument("--pool-appearance", choices=["color", "black"])
    p.add_argument("--frames", type=int, help="frames per sequence")
    p.add_argument("--tracklets", type=int, help="tracklets per sequence")
    p.add_argument("--noise", type=float, help="velocity noise std (pixels/frame)")
    p.add_argument("--color-noise", type=float, help="per-pixel colour noise std")
    p.add_argument("--color-jitter", type=float, help="per-sequence clothing colour jitter std")

    p = cmd("train-codebook", "fit a DynFV or LDFV codebook on dataset sequences")
    p.add_argument("--feature", choices=["dynfv", "ldfv"])
    p.add_argument("--in", dest="input", help="dataset directory (default --root)")
    p.add_argument("--role", help="train on identities with this role (default pool, else all)")
    p.add_argument("--persons", help="comma-separated person ids to train on")
    p.add_argument("--k", type=int, help="Gaussians per model")
    p.add_argument("--windows", help="comma-separated window lengths (dynfv)")
    p.add_argument("--out", required=True, help="CBK1 codebook file")

    p = cmd("encode", "encode sequences into FVE1 feature files")
    p.add_argument("--feature", choices=list(FEATURE_NAMES))
    p.add_argument("--codebook", help="CBK1 file (dynfv and ldfv)")
    p.add_argument("--in", dest="input", required=True,
                   help="TRK file, frame directory <camera>/<person>, or dataset directory")
    p.add_argument("--mask", help="mask PNG applied to a TRK input")
    p.add_argument("--out", required=True, help="FVE1 file, or directory for several sequences")

    p = cmd("evaluate", "run a trial protocol and write a CMC/PUR report")
    _protocol_args(p)
    p.add_argument("--features", help="comma-separated feature names")
    p.add_argument("--no-fuse", action="store_true", default=None, help="skip score fusion")
    p.add_argument("--encoded", help="directory of precomputed <seq>.<feature>.fve files")
    p.add_argument("--distances", help="directory to write per-trial distance matrices")
    p.add_argument("--out", required=True, help="report JSON")

    p = cmd("fuse", "min-max fuse distance matrices")
    p.add_argument("matrices", nargs="+", help="distance matrix JSON files")
    p.add_argument("--out", required=True, help="fused distance matrix JSON")
    p.add_argument("--report", help="also rank the fused matrix, matching by person id")

    p = cmd("ablate-windows", "DynFV rank table per window-length subset")
    _protocol_args(p)
    p.add_argument("--subsets", help="subsets separated by ';', e.g. '5;9;14;5,9,14'")
    p.add_argument("--out", required=True, help="ablation report JSON")

    p = cmd("plot-cmc", "draw the CMC curves of a report as SVG plus CSV")
    p.add_argument("report", help="report JSON from evaluate")
    p.add_argument("--svg", required=True, help="output SVG")
    p.add_argument("--csv", help="output CSV (default: SVG path with .csv)")
    p.add_argument("--max-rank", type=int, help="last rank drawn")
    return parser


def _protocol_args(p):
    p.add_argument("--mode", choices=["half-split", "bk", "tsd"])
    p.add_argument("--trials", type=int)
    p.add_argument("--in", dest="input", help="dataset directory (default --root)")
    p.add_argument("--probe-camera")
    p.add_argument("--gallery-camera")
    p.add_argument("--train-size", type=int, help="bk: pool identities per trial")


def _coerce(text):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_config(path, command):
    """Flat ``key = value`` entries; ``[command]`` sections apply to one command."""
    out, section = {}, None
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = line.split("=", 1)
        if section in (None, "global", command):
            out[key.strip().replace("-", "_")] = _coerce(value)
    return out


def resolve_options(ns):
    """Merge defaults, config file and flags into one dict."""
    given = vars(ns)
    command = given["command"]
    opts = {k: v for k, v in DEFAULTS.items() if not isinstance(v, dict)}
    opts.update(DEFAULTS[command])
    opts["seed"] = int(os.environ.get("DYNFV_SEED", 0))
    if given.get("config"):
        cfg_path = Path(given["config"])
        if not cfg_path.is_absolute() and given.get("root"):
            cfg_path = Path(given["root"]) / cfg_path
        if not cfg_path.exists():
            raise FileNotFoundError(f"config file {cfg_path} not found")
        opts.update(read_config(cfg_path, command))
    opts.update({k: v for k, v in given.items() if v is not None})
    return opts


def _path(opts, p):
    p = Path(p)
    return p if p.is_absolute() else Path(opts["root"]) / p


def _write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _dataset(opts):
    root = _path(opts, opts["input"] or ".")
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {root} not found")
    return load_dataset(root)


# -- commands ----------------------------------------------------------------

def cmd_synth(o):
    if o["population"] == "tsd":
        ds = gen_tsd_population(o["ids"], o["seqs_per_id"], o["distractors"], o["seed"], o["noise"], o["tracklets"], o["frames"])
    else:
        ds = gen_identity_population(
            o["ids"], o["seqs_per_id"], noise=o["noise"], seed=o["seed"],
            n_tracklets=o["tracklets"], n_frames=o["frames"], appearance=o["appearance"],
            color_noise=o["color_noise"], color_jitter=o["color_jitter"], n_pool=o["pool"],
            pool_appearance=o["pool_appearance"] or o["appearance"])
    out = _path(o, o["out"])
    save_dataset(out, ds)
    print(f"wrote {len(ds.sequences)} sequences of {len(ds.persons())} identities to {out}")


def _training_sequences(o, ds):
    if o["persons"]:
        wanted = set(o["persons"].split(","))
        unknown = wanted - set(ds.persons())
        if unknown:
            raise DynfvError(f"unknown persons {sorted(unknown)}")
        return [s for s in ds.sequences if s.person_id in wanted]
    role = o["role"] or ("pool" if ds.persons("pool") else None)
    seqs = [s for s in ds.sequences if role is None or ds.role(s.person_id) == role]
    if not seqs:
        raise DynfvError(f"no sequences with role {role!r}")
    return seqs


def _windows(text):
    return tuple(int(a) for a in str(text).replace(" ", "").split(",") if a)


def cmd_train_codebook(o):
    ds = _dataset(o)
    seqs = _training_sequences(o, ds)
    feat = get_feature(o["feature"])
    if o["feature"] == "dynfv":
        feat.window_lengths = _windows(o["windows"])
    if o["k"]:
        feat.k = o["k"]
    cb = feat.train(seqs, seed=o["seed"], threads=o["threads"])
    out = _path(o, o["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_codebook(out, cb)
    print(f"trained {o['feature']} codebook on {len(seqs)} sequences -> {out}")


def _sequences_from_input(o, path):
    """Sequences named by ``--in``: TRK file, frame directory or dataset."""
    if not path.exists():
        raise FileNotFoundError(f"input {path} not found")
    if path.is_file():
        mask = load_mask(_path(o, o["mask"])) if o["mask"] else None
        groups = group_by_sequence(parse_trajectory_file(path))
        return [Sequence(sid, "", None, tracks, mask) for sid, tracks in groups.items()]
    if any(path.glob("*.png")) and not (path / "dataset.json").exists():
        cam_dir = path.parent
        mask = load_mask(cam_dir / "mask.png") if (cam_dir / "mask.png").exists() else None
        trk = cam_dir / "tracks.trk"
        tracks = group_by_sequence(parse_trajectory_file(trk)).get(path.name, []) if trk.exists() else []
        return [Sequence(path.name, cam_dir.name, load_frames(path), tracks, mask)]
    return load_dataset(path).sequences


def _seq_name(s):
    return s.key if s.camera_id else s.person_id


def cmd_encode(o):
    feat = get_feature(o["feature"])
    cb = None
    if feat.trainable:
        if not o["codebook"]:
            raise UsageError(f"--codebook is required for feature {o['feature']}")
        cb = load_codebook(_path(o, o["codebook"]))
        if codebook_feature(cb) != o["feature"]:
            raise FormatError(f"codebook holds {codebook_feature(cb)} models, not {o['feature']}")
    seqs = _sequences_from_input(o, _path(o, o["input"]))
    if not seqs:
        raise DynfvError("input holds no sequences")
    for s in seqs:
        if not feat.trainable or o["feature"] == "ldfv":
            if s.frames is None:
                raise DynfvError(f"{o['feature']} needs frames; {_seq_name(s)} has none")
    out = _path(o, o["out"])
    if len(seqs) == 1 and out.suffix == FVE_SUFFIX:
        out.parent.mkdir(parents=True, exist_ok=True)
        save_feature(out, feat.encode(seqs[0], cb))
        print(f"encoded {_seq_name(seqs[0])} -> {out}")
        return
    out.mkdir(parents=True, exist_ok=True)
    for s in seqs:
        save_feature(out / f"{_seq_name(s)}.{o['feature']}{FVE_SUFFIX}", feat.encode(s, cb))
    print(f"encoded {len(seqs)} sequences -> {out}")


def _config(o):
    return ProtocolConfig(o["mode"], o["trials"], o["seed"], o["probe_camera"],
                          o["gallery_camera"], o["train_size"], not o.get("no_fuse", False))


def _precomputed(o, names):
    if not o["encoded"]:
        return None
    folder = _path(o, o["encoded"])
    if not folder.is_dir():
        raise FileNotFoundError(f"encoded directory {folder} not found")
    out = {}
    for n in names:
        files = sorted(folder.glob(f"*.{n}{FVE_SUFFIX}"))
        if files:
            out[n] = {f.name[: -len(f".{n}{FVE_SUFFIX}")]: load_feature(f).values for f in files}
    return out


def cmd_evaluate(o):
    names = [n for n in o["features"].split(",") if n]
    ds = _dataset(o)
    folder = _path(o, o["distances"]) if o["distances"] else None

    def dump(trial, pass_index, d):
        _write_json(folder / f"trial{trial:02d}_pass{pass_index}_{d.feature_name}.json", d.to_json())
    res = run_protocol(_config(o), ds, names, _precomputed(o, names), o["threads"],
                       dump if folder else None)
    report = res.to_json()
    report["dataset"] = ds.name
    _write_json(_path(o, o["out"]), report)
    for n, r in res.features.items():
        t = r.table()
        print(f"{n:>16}  r1 {t['r1']:6.2f}  r5 {t['r5']:6.2f}  r10 {t['r10']:6.2f}  "
              f"r20 {t['r20']:6.2f}  PUR {t['pur']:6.2f}")


def cmd_fuse(o):
    mats = []
    for p in o["matrices"]:
        path = _path(o, p)
        if not path.exists():
            raise FileNotFoundError(f"distance matrix {path} not found")
        try:
            mats.append(DistanceMatrix.load(path))
        except (json.JSONDecodeError, KeyError) as exc:
            raise FormatError(f"{path}: not a distance matrix ({exc})") from None
    fused = min_max_fuse(mats)
    _write_json(_path(o, o["out"]), fused.to_json())
    if o["report"]:
        by_person = {}
        for g in fused.gallery:
            by_person.setdefault(str(g).split("@")[0], g)
        truth = {p: by_person.get(str(p).split("@")[0]) for p in fused.probes}
        M = rank_matches(fused, truth)
        curve = cmc(M)
        _write_json(_path(o, o["report"]), {"feature": fused.feature_name,
                                             "mean_cmc": curve.tolist(), "mean_pur": pur(M),
                                             "table": rank_table(curve, pur(M))})
    print(f"fused {len(mats)} matrices -> {_path(o, o['out'])}")


def cmd_ablate_windows(o):
    subsets = [_windows(s) for s in o["subsets"].split(";") if s.strip()]
    ds = _dataset(o)
    o = dict(o, no_fuse=True)
    rows = window_ablation(_config(o), ds, subsets, o["threads"])
    report = {"config": asdict(_config(o)), "dataset": ds.name, "rows": []}
    for (name, r), subset in zip(rows, subsets):
        row = {"windows": list(subset), "name": name, "mean_cmc": [float(v) for v in r.mean_cmc]}
        row.update(r.table())
        report["rows"].append(row)
        print(f"{name:>12}  r1 {row['r1']:6.2f}  r5 {row['r5']:6.2f}  r10 {row['r10']:6.2f}  "
              f"r20 {row['r20']:6.2f}  PUR {row['pur']:6.2f}")
    _write_json(_path(o, o["out"]), report)


def cmd_plot_cmc(o):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = _path(o, o["report"])
    if not path.exists():
        raise FileNotFoundError(f"report {path} not found")
    try:
        report = json.loads(path.read_text())
        curves = {n: np.asarray(f["mean_cmc"]) for n, f in report["features"].items()}
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: not an evaluate report ({exc})") from None
    top = o["max_rank"] or max(len(c) for c in curves.values())
    svg = _path(o, o["svg"])
    csv_path = _path(o, o["csv"]) if o["csv"] else svg.with_suffix(".csv")
    svg.parent.mkdir(parents=True, exist_ok=True)

    with matplotlib.rc_context({"svg.hashsalt": "dynfv", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 4))
        for n, c in curves.items():
            r = np.arange(1, min(top, len(c)) + 1)
            ax.plot(r, 100.0 * c[: len(r)], marker=".", label=n)
        ax.set_xlabel("rank")
        ax.set_ylabel("recognition rate (%)")
        ax.set_ylim(0, 100)
        ax.grid(alpha=0.3)
        ax.legend(loc="lower right")
        fig.savefig(svg, format="svg", metadata={"Date": None})
        plt.close(fig)

    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank"] + list(curves))
        for r in range(1, top + 1):
            w.writerow([r] + [f"{c[min(r, len(c)) - 1]:.6f}" for c in curves.values()])
    print(f"wrote {svg} and {csv_path}")


COMMANDS = {"synth": cmd_synth, "train-codebook": cmd_train_codebook, "encode": cmd_encode,
            "evaluate": cmd_evaluate, "fuse": cmd_fuse, "ablate-windows": cmd_ablate_windows,
            "plot-cmc": cmd_plot_cmc}


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        opts = resolve_options(ns)
        if opts["threads"] < 1:
            raise UsageError("--threads must be >= 1")
        logging.basicConfig(level=logging.INFO if opts["verbose"] else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[opts["command"]](opts)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"dynfv: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FormatError as exc:
        print(f"dynfv: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (DynfvError, ValueError, KeyError) as exc:
        print(f"dynfv: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
