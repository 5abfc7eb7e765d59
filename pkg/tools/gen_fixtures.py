"""One-shot fixture generator. Run from the repo root:

    python tools/gen_fixtures.py

Everything under tests/fixtures/ is produced here and committed:

* npy/        - reference containers written by numpy's own np.save
* gradcheck/  - 20 seeded (scores, label) cases for the gradient check
* tinycnn/    - manifest + seeded weights, a deterministic input image, and
                golden logits computed by the pure-Python scalar reference
                in tests/oracles.py (independent of the package code)

Regenerating overwrites in place; the RNG seeds below pin every value.
"""

import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"

sys.path.insert(0, str(ROOT / "tests"))
from oracles import scalar_forward  # noqa: E402


def gen_npy_references():
    out = FIXTURES / "npy"
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "ref_1d_f8.npy", np.array([1.0, 2.0]))
    np.save(out / "ref_2x2_f8.npy", np.array([[1.0, 2.0], [3.0, 4.0]]))
    np.save(
        out / "ref_2x3_f4.npy",
        np.array([[0.5, 1.5, 2.5], [3.5, -4.5, 5.5]], dtype=np.float32),
    )
    print("npy references written")


def gen_gradcheck_cases():
    out = FIXTURES / "gradcheck"
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20250810)
    cases = []
    for _ in range(20):
        cases.append(
            {
                "label": int(rng.integers(0, 10)),
                "scores": rng.normal(scale=1.5, size=10).tolist(),
            }
        )
    (out / "cases.json").write_text(json.dumps({"k": 10, "cases": cases}, indent=2) + "\n")
    print("gradcheck cases written")


def _test_image(size=32):
    # Smooth diagonal ramp plus one bright blob: non-constant activations
    # everywhere, fully deterministic.
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    ramp = (x + y) / (2.0 * (size - 1))
    blob = np.exp(-(((x - 9.0) ** 2 + (y - 11.0) ** 2) / 18.0))
    img = 0.55 * ramp + 0.45 * blob
    return np.floor(255.0 * img + 0.5).astype(np.uint8)


def gen_tinycnn():
    out = FIXTURES / "tinycnn"
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(977)

    conv0_w = rng.normal(scale=0.45, size=(8, 1, 3, 3))
    conv0_b = rng.uniform(0.0, 0.08, size=8)
    conv1_w = rng.normal(scale=0.25, size=(10, 8, 3, 3))
    conv1_b = rng.uniform(0.0, 0.08, size=10)
    dense_w = rng.normal(scale=0.12, size=(10, 10 * 6 * 6))
    dense_b = rng.uniform(-0.05, 0.05, size=10)

    np.save(out / "conv0_w.npy", conv0_w)
    np.save(out / "conv0_b.npy", conv0_b)
    np.save(out / "conv1_w.npy", conv1_w)
    np.save(out / "conv1_b.npy", conv1_b)
    np.save(out / "dense_w.npy", dense_w)
    np.save(out / "dense_b.npy", dense_b)

    manifest = {
        "input_shape": [1, 32, 32],
        "classes": 10,
        "feature_layer": 4,
        "layers": [
            {"type": "conv", "weights": "conv0_w.npy", "bias": "conv0_b.npy"},
            {"type": "relu"},
            {"type": "maxpool"},
            {"type": "conv", "weights": "conv1_w.npy", "bias": "conv1_b.npy"},
            {"type": "relu"},
            {"type": "maxpool"},
            {"type": "dense", "weights": "dense_w.npy", "bias": "dense_b.npy"},
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    pixels = _test_image()
    Image.fromarray(pixels, mode="L").save(out / "input.png")

    # Golden outputs via the scalar reference (pure Python, no numpy math).
    image = (pixels.astype(np.float64) / 255.0)[None, :, :].tolist()
    layers = [
        ("conv", conv0_w.tolist(), conv0_b.tolist()),
        ("relu",),
        ("maxpool",),
        ("conv", conv1_w.tolist(), conv1_b.tolist()),
        ("relu",),
        ("maxpool",),
        ("dense", dense_w.tolist(), dense_b.tolist()),
    ]
    outputs = scalar_forward(layers, image)
    logits = np.array(outputs[-1])
    features = np.array(outputs[4])
    np.save(out / "golden_logits.npy", logits)

    assert features.shape == (10, 13, 13)
    assert logits.shape == (10,)
    assert features.max() > 0.0, "fixture features are dead"
    assert logits.std() > 1e-3, "fixture logits are (nearly) constant"
    print("tinycnn fixture written; logits:", np.round(logits, 4).tolist())


if __name__ == "__main__":
    gen_npy_references()
    gen_gradcheck_cases()
    gen_tinycnn()
