"""Smoke tests for the python module: core ops, file IO, and a miniature
generate/train/evaluate loop."""

import json
import math
import os
import sys
import tempfile

MODULE_DIR = os.environ.get("TASS_MODULE_DIR")
if MODULE_DIR:
    sys.path.insert(0, MODULE_DIR)
PACKAGE_DIR = os.environ.get("TASS_PACKAGE_DIR")
if PACKAGE_DIR:
    sys.path.insert(0, PACKAGE_DIR)

import tass  # noqa: E402


def check(name, ok):
    print(("PASS" if ok else "FAIL") + " " + name)
    if not ok:
        raise SystemExit(1)


def main():
    # core numerics
    js = tass.js_divergence([1.0, 0.0], [0.5, 0.5])
    check("js hand value", abs(js - 0.2157615543) < 1e-6)
    check("js symmetric", abs(js - tass.js_divergence([0.5, 0.5], [1.0, 0.0])) < 1e-12)

    sm = tass.softmax([math.log(1.0), math.log(3.0)])
    check("softmax hand value", abs(sm[0] - 0.25) < 1e-12 and abs(sm[1] - 0.75) < 1e-12)
    check("softmax normalized", abs(sum(sm) - 1.0) < 1e-9)

    pooled = tass.pool_sequence([[1.0], [3.0], [5.0], [7.0]], 2)
    check("pooling windows", pooled == [[2.0], [6.0]])
    check("pooling tail", tass.pool_sequence([[1.0], [3.0], [5.0]], 2) == [[2.0], [5.0]])

    with tempfile.TemporaryDirectory() as tmp:
        # tensor file round trip at f32 storage precision
        path = os.path.join(tmp, "t.tsr")
        values = [1.5, -2.25, 3.0, 0.125, 7.0, -0.5]
        tass.write_tensor(path, [2, 3], values)
        shape, back = tass.read_tensor(path)
        check("tensor round trip", shape == [2, 3] and back == values)

        # tiny generate -> train -> evaluate loop
        spec = {
            "k": 3, "d": 8, "h": 3, "w": 3, "t1": 4, "seed": 7,
            "train_videos": 10, "val_videos": 4, "questions_per_video": 2,
        }
        data_dir = os.path.join(tmp, "data")
        info = tass.generate_dataset(json.dumps(spec), data_dir)
        check("dataset generated", info["train_samples"] == 20)

        cfg = {
            "d": 8, "h": 3, "w": 3, "t": 2, "t2": 2, "n_heads": 2,
            "batch_size": 8, "epochs": 1, "lr": 1e-3, "seed": 3,
            "train_dir": os.path.join(data_dir, "train"),
            "val_dir": os.path.join(data_dir, "val"),
        }
        out_dir = os.path.join(tmp, "run")
        result = tass.train(json.dumps(cfg), out_dir)
        check("training ran", result["epochs"] == 1)
        check("loss finite", all(math.isfinite(x) for x in result["epoch_losses"]))

        report = tass.evaluate(os.path.join(out_dir, "checkpoint_final"),
                               os.path.join(data_dir, "val"), t2=2, batch_size=8)
        check("evaluation ran", report["n_samples"] == 8)
        check("accuracy in range", 0.0 <= report["overall_accuracy"] <= 1.0)

    # error surfaces as the bound exception type
    try:
        tass.js_divergence([0.4, 0.4], [0.5, 0.5])
        check("domain error raised", False)
    except tass.TassError:
        check("domain error raised", True)

    print("smoke tests passed")


if __name__ == "__main__":
    main()
