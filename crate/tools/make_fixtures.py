"""Builds the MNIST test fixtures from the digit files of the npm `mnist`
package (MIT licensed, https://github.com/cazala/mnist).

    python3 tools/make_fixtures.py <package>/src/digits crates/core/tests/data

Writes a 1000-image IDX pair (the first 100 samples of each digit, shuffled)
and a 400-120-84-10 sigmoid MLP trained with scikit-learn on the remaining
samples, cropped to 20x20 like the Rust loader does.
"""

import gzip
import json
import random
import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.neural_network import MLPClassifier

HOLDOUT = 100


def load(digits_dir):
    per_digit = []
    for d in range(10):
        raw = json.loads((Path(digits_dir) / f"{d}.json").read_text())["data"]
        px = np.rint(np.asarray(raw, dtype=np.float64) * 255).astype(np.uint8)
        per_digit.append(px.reshape(-1, 28, 28))
    return per_digit


def crop(images):
    return images[:, 4:24, 4:24].reshape(len(images), 400).astype(np.float64) / 255.0


def write_idx(out, images, labels):
    with gzip.GzipFile(out / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        f.write(images.tobytes())
    with gzip.GzipFile(out / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    digits_dir, out = sys.argv[1], Path(sys.argv[2])
    per_digit = load(digits_dir)

    test = [(img, d) for d, imgs in enumerate(per_digit) for img in imgs[:HOLDOUT]]
    random.Random(7).shuffle(test)
    write_idx(out, np.stack([t[0] for t in test]), np.array([t[1] for t in test]))

    train_x = np.concatenate([crop(imgs[HOLDOUT:]) for imgs in per_digit])
    train_y = np.concatenate([np.full(len(imgs) - HOLDOUT, d) for d, imgs in enumerate(per_digit)])
    clf = MLPClassifier(hidden_layer_sizes=(120, 84), activation="logistic", max_iter=300, random_state=0)
    clf.fit(train_x, train_y)
    test_x = crop(np.stack([t[0] for t in test]))
    print("holdout accuracy", clf.score(test_x, np.array([t[1] for t in test])))

    weights = {
        "layer_dims": [400, 120, 84, 10],
        "weights": [[float(f"{v:.6g}") for v in w.reshape(-1)] for w in clf.coefs_],
        "biases": [[float(f"{v:.6g}") for v in b] for b in clf.intercepts_],
        "activation": "sigmoid",
    }
    (out / "mlp_400_120_84_10.json").write_text(json.dumps(weights, separators=(",", ":")))


if __name__ == "__main__":
    main()
