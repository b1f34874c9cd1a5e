"""Evaluation protocols, score fusion and the command-line workflow.

Runs a small half-split experiment in-process, then drives the same steps
through the ``dynfv`` command line inside a temporary directory.

    python demos/protocol_and_cli.py
"""
import json
import tempfile
from pathlib import Path

from dynfv.cli import main
from dynfv.protocol import ProtocolConfig, run_protocol
from dynfv.synth import gen_identity_population

ds = gen_identity_population(16, seed=8, n_frames=1, noise=2.0, n_tracklets=40,
                             color_jitter=30.0, color_noise=20.0)
res = run_protocol(ProtocolConfig("half_split", trials=3, seed=0), ds, ["dynfv", "hist"])
for name, r in res.features.items():
    t = r.table()
    print(f"{name:>11}  rank-1 {t['r1']:6.2f}  rank-5 {t['r5']:6.2f}  PUR {t['pur']:6.2f}")

with tempfile.TemporaryDirectory() as root:
    base = ["--root", root, "--seed", "3"]
    main(["synth", *base, "--ids", "8", "--pool", "8", "--frames", "1", "--out", "ds"])
    main(["train-codebook", *base, "--in", "ds", "--feature", "dynfv", "--out", "dyn.cbk"])
    main(["encode", *base, "--feature", "dynfv", "--codebook", "dyn.cbk", "--in", "ds",
          "--out", "enc"])
    main(["evaluate", *base, "--in", "ds", "--mode", "bk", "--trials", "2",
          "--features", "dynfv,hist", "--encoded", "enc", "--out", "report.json"])
    main(["plot-cmc", *base, "report.json", "--svg", "cmc.svg", "--csv", "cmc.csv"])
    report = json.loads(Path(root, "report.json").read_text())
    print("report features:", sorted(report["features"]))
    print(Path(root, "cmc.csv").read_text().splitlines()[:3])
