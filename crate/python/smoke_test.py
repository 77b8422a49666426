"""Smoke test for the `fpt` extension module.

Builds the extension with cargo unless FPT_MODULE_DIR points at a directory
holding an importable `fpt` module, then exercises the main calls against the
thyroid fixture.
"""

import json
import math
import os
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"


def import_fpt():
    module_dir = os.environ.get("FPT_MODULE_DIR")
    if not module_dir:
        subprocess.run(
            ["cargo", "build", "--release", "-p", "fpt-python"], cwd=ROOT, check=True
        )
        module_dir = tempfile.mkdtemp(prefix="fpt-")
        suffix = ".pyd" if sys.platform == "win32" else ".so"
        name = {"linux": "libfpt.so", "darwin": "libfpt.dylib", "win32": "fpt.dll"}
        built = ROOT / "target" / "release" / name.get(sys.platform, "libfpt.so")
        shutil.copy(built, Path(module_dir) / f"fpt{suffix}")
    sys.path.insert(0, module_dir)
    import fpt

    return fpt


def close(a, b, tol=1e-3):
    return math.isclose(a, b, abs_tol=tol)


def main():
    fpt = import_fpt()
    spec = DATA / "thyroid" / "spec.json"
    train = DATA / "thyroid" / "train.csv"
    patient = json.loads((DATA / "thyroid" / "demo-patient.json").read_text())

    model = fpt.Model.load(str(spec), str(train))
    print(model)

    stats = model.stats()
    assert stats["training_rows"] == 401, stats
    assert close(stats["mean_rows_per_realisation"], 2.51, 0.005), stats

    p1 = model.predict(patient)["probability"]
    p0 = model.predict(patient, class_=0)["probability"]
    assert close(p1, 0.427) and close(p0, 0.573), (p1, p0)
    print(f"demo patient: P(1) = {p1:.4f}, P(0) = {p0:.4f}")

    crisp = model.predict(patient, weighting="crisp")["probability"]
    assert 0.0 <= crisp <= 1.0

    decision = model.decide(patient, threshold=0.4)
    assert decision["label"] == 1, decision

    result = model.counterfactual(patient, {"NoduleSize": 25})
    assert close(result["factual"]["probability"], p1, 1e-9)
    assert close(result["counterfactual"]["probability"], 0.4, 1e-9), result
    print(f"NoduleSize 18 -> 25: delta {result['delta']:+.4f}")

    degrees = dict(model.degrees("LargeNodule", 18.0))
    assert close(degrees["1"], 0.8, 1e-9) and close(degrees["0"], 0.2, 1e-9), degrees

    tree = json.loads(model.tree_json())
    assert tree, "empty tree"

    try:
        model.predict({"Nope": "1"})
    except fpt.FptError as e:
        print(f"bad query rejected: {e}")
    else:
        raise AssertionError("bad query accepted")

    unseen = {"TIRADS": "TIR5", "Gender": "M", "50Plus": "0", "Thyroiditis": "1",
              "Struma": "1", "LargeNodule": "1"}
    try:
        model.predict(unseen, strict=True)
    except fpt.UndefinedError as e:
        print(f"strict query undefined: {e}")
    else:
        raise AssertionError("unseen combination answered in strict mode")
    assert 0.0 <= model.predict(unseen)["probability"] <= 1.0

    report = fpt.evaluate(str(spec), str(train), resamples=20, seed=3)
    again = fpt.evaluate(str(spec), str(train), resamples=20, seed=3, parallel=False)
    assert report == again
    assert [r["model"] for r in report["reports"]] == ["FPT", "PT"]
    print(f"evaluate: {len(report['reports'])} reports, deterministic")

    print("smoke test passed")


if __name__ == "__main__":
    main()
