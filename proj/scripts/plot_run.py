#!/usr/bin/env python3
"""Plots a run directory written by the bpnp tool. Not part of the tests."""

import argparse
import csv
import json
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_trace(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {k: [float(r[k]) for r in rows] for k in rows[0]} if rows else {}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("run", type=pathlib.Path)
    parser.add_argument("--out", type=pathlib.Path, default=None)
    args = parser.parse_args()

    manifest = json.loads((args.run / "manifest.json").read_text())
    trace = read_trace(args.run / "trace.csv")
    command = manifest["command"]

    panels = 2 if command in ("calib", "sfm", "pose") else 1
    fig = plt.figure(figsize=(5 * panels, 4))
    ax = fig.add_subplot(1, panels, 1)
    ax.semilogy(trace["epoch"], trace["loss"])
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")

    if command == "calib":
        ax = fig.add_subplot(1, 2, 2)
        for k in ("fx", "fy", "cx", "cy"):
            ax.plot(trace["epoch"], trace[k], label=k)
        ax.legend()
    elif command == "pose":
        ax = fig.add_subplot(1, 2, 2)
        ax.semilogy(trace["epoch"], trace["keypoint_rms"], label="keypoints")
        ax.semilogy(trace["epoch"], trace["target_reproj_rms"], label="pose")
        ax.set_ylabel("RMS vs target (px)")
        ax.legend()
    elif command == "sfm":
        ax = fig.add_subplot(1, 2, 2, projection="3d")
        pts = json.loads((args.run / "structure.json").read_text())["points"]
        ax.scatter(*zip(*pts), s=4)

    fig.tight_layout()
    fig.savefig(args.out or args.run / "plot.png", dpi=120)


if __name__ == "__main__":
    main()
