"""Reference classifier for the external evaluator protocol.

Reads the exchange manifest, "predicts" label round(mean pixel * (classes - 1))
for every image and answers on stdout with the accuracy plus a checksum of the
images it received. Used to check the exchange roundtrip end to end.

    python -m tensordenoise.defense.echo_classifier <manifest.json> [--answer 1.0]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..errors import TensorDenoiseError
from ..formats.container import read_tensor


def classify(manifest_path: Path) -> dict[str, float]:
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    images = read_tensor(manifest["images"])
    labels = read_tensor(manifest["labels"]).reshape(-1).astype(np.int64)
    num_classes = int(manifest["num_classes"])
    means = images.reshape(images.shape[0], -1).mean(axis=1)
    predicted = np.floor(means * (num_classes - 1) + 0.5).astype(np.int64)
    return {
        "accuracy": float(np.mean(predicted == labels)) if labels.size else 0.0,
        "checksum": float(images.sum()),
        "count": float(images.shape[0]),
    }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="echo-classifier")
    parser.add_argument("manifest", type=Path)
    parser.add_argument("--answer", type=float, default=None, help="Fixed accuracy to report")
    args = parser.parse_args(argv)
    try:
        response = classify(args.manifest)
    except (OSError, KeyError, ValueError, TensorDenoiseError) as e:
        print(f"echo-classifier: {e}", file=sys.stderr)
        return 1
    if args.answer is not None:
        response["accuracy"] = args.answer
    print(json.dumps(response))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
