import json
import math
from pathlib import Path

import numpy as np
import pytest

from faultengine.failure_model import Verdict
from faultengine.serialize import RunManifest, canonical_float, dumps, emit_report, sha256_file


def test_one_third_renders_nine_digits():
    assert '"p": 0.333333333' in dumps({"p": 1 / 3})


def test_canonical_forms():
    assert canonical_float(2.0 / 3.0) == 0.666666667
    assert canonical_float(math.inf) == "inf" and canonical_float(math.nan) == "nan"
    doc = json.loads(dumps({"b": np.float64(0.1) + np.float64(0.2), "a": Verdict.PERMANENT, "s": {3, 1}, "p": Path("x")}))
    assert doc == {"a": "Permanent", "b": 0.3, "p": "x", "s": [1, 3]}
    assert list(json.loads(dumps({"z": 1, "a": 2}))) == ["a", "z"]
    with pytest.raises(TypeError):
        dumps({"x": object()})


def test_same_result_same_bytes(tmp_path):
    result = {"entries": [{"device_id": "PDU2", "probability": 0.1 + 0.2}]}
    h1 = emit_report(result, tmp_path / "a.json")
    h2 = emit_report(dict(result), tmp_path / "b.json")
    assert h1 == h2 == sha256_file(tmp_path / "a.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit_report({"x": 1}, tmp_path / "missing" / "dir" / "r.json")


def test_manifest_lists_hashes(tmp_path):
    src = tmp_path / "in.txt"
    src.write_text("hello")
    m = RunManifest("fit", ["fit"], seed=3)
    m.add_input(src)
    out = tmp_path / "out.json"
    m.add_output(out, emit_report({"a": 1}, out))
    m.write(tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["inputs"][str(src)] == sha256_file(src)
    assert doc["outputs"][str(out)] == sha256_file(out)
    assert doc["seed"] == 3 and doc["subcommand"] == "fit"
