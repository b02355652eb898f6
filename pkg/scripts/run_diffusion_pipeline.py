#!/usr/bin/env python3
"""End-to-end desk-scale diffusion experiment.

Generates the training dataset and a fine-resolution evaluation dataset,
trains the operator, evaluates at base resolution, and sweeps zero-shot
super-resolution, writing all reports under --out.
"""
import argparse
import json
import subprocess
import sys
from pathlib import Path


def sh(*args):
    print("+", " ".join(str(a) for a in args))
    subprocess.run([sys.executable, "-m", "sno.cli", *map(str, args)], check=True)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/diffusion")
    ap.add_argument("--samples", type=int, default=1000)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    base_spec = {"task": "diffusion", "n_samples": args.samples, "resolution": 64,
                 "n_time": 64, "seed": args.seed}
    fine_spec = dict(base_spec, resolution=256, n_samples=max(args.samples // 5, 10),
                     seed=args.seed + 77)
    (out / "base_spec.json").write_text(json.dumps(base_spec))
    (out / "fine_spec.json").write_text(json.dumps(fine_spec))

    sh("gen", "--config", out / "base_spec.json", "--out", out / "base")
    sh("gen", "--config", out / "fine_spec.json", "--out", out / "fine")

    train_cfg = {"dataset": str(out / "base" / "dataset.bin"),
                 "model": {"width": 32, "n_layers": 4, "degree": 16, "seed": args.seed},
                 "train": {"epochs": args.epochs, "batch_size": 20, "lr": 1e-3,
                           "seed": args.seed}}
    (out / "train.json").write_text(json.dumps(train_cfg))
    sh("train", "--config", out / "train.json", "--out", out / "run")

    ckpt = out / "run" / "checkpoint.ckpt"
    sh("eval", ckpt, out / "base" / "dataset.bin", "--out", out / "eval")
    sh("superres", ckpt, out / "fine" / "dataset.bin", "64,128,256",
       "--resolution", "64", "--out", out / "superres")
    print(f"\nreports under {out}/")


if __name__ == "__main__":
    main()
