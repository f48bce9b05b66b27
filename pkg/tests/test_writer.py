# -*- coding: utf-8 -*-

import json

import numpy as np
import pytest

from core.errors import InvalidArgumentError
from core.writer import ResultWriter, file_checksum, format_value, to_jsonable


def test_format_value():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(np.float64(1.0) / 3.0) == format(1.0 / 3.0, ".17g")
    assert format_value(np.int64(7)) == "7"
    assert format_value(True) == "true"
    assert format_value(None) == ""
    assert format_value("flat") == "flat"


def test_to_jsonable_converts_numpy():
    payload = to_jsonable({"a": np.arange(3), "b": np.float64(0.5), "c": (np.bool_(True), float("nan"))})
    assert payload == {"a": [0, 1, 2], "b": 0.5, "c": [True, "nan"]}


def test_write_csv_registers_checksum(tmp_path):
    writer = ResultWriter(str(tmp_path / "out"))
    checksum = writer.write_csv("table.csv", ("t", "value"), [(0.5, 1.0 / 3.0), (1.0, 2)])
    path = tmp_path / "out" / "table.csv"
    assert path.read_text(encoding="utf-8") == "t,value\n0.5,0.33333333333333331\n1,2\n"
    assert writer.checksums == {"table.csv": checksum}
    assert file_checksum(str(path)) == checksum


def test_write_csv_rejects_ragged_rows(tmp_path):
    writer = ResultWriter(str(tmp_path))
    with pytest.raises(InvalidArgumentError):
        writer.write_csv("bad.csv", ("a", "b"), [(1, 2, 3)])


def test_write_json_sorted_and_optional_registration(tmp_path):
    writer = ResultWriter(str(tmp_path))
    writer.write_json("summary.json", {"z": 1, "a": np.float64(0.25)})
    writer.write_json("manifest.json", {"outputs": {}}, register=False)
    text = (tmp_path / "summary.json").read_text(encoding="utf-8")
    assert list(json.loads(text)) == ["a", "z"]
    assert set(writer.checksums) == {"summary.json"}
