import json
import math
import xml.etree.ElementTree as ET

import pytest

from kpz_ldp.svg import line_plot
from kpz_ldp.tables import format_table, read_table, records_json, write_table


def test_table_round_trip(tmp_path):
    rows = [{"a": 1, "b": 0.1, "c": "x", "d": True}, {"a": 2, "b": math.nan, "c": "y;z", "d": False}]
    path = tmp_path / "t.csv"
    write_table(path, "demo", ["a", "b", "c", "d"], rows)
    schema, back = read_table(path)
    assert schema == "demo"
    assert back[0] == rows[0]
    assert math.isnan(back[1]["b"]) and back[1]["c"] == "y;z" and back[1]["d"] is False


def test_floats_survive_exactly():
    text = format_table("demo", ["v"], [[1 / 3]])
    assert text.splitlines() == ["# kpz-ldp demo v1", "v", repr(1 / 3)]


def test_read_requires_header(tmp_path):
    path = tmp_path / "plain.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_table(path)


def test_json_maps_non_finite_to_null():
    recs = json.loads(records_json(["a", "b"], [[1.0, math.inf], {"a": 2.0, "b": 3.0}]))
    assert recs == [{"a": 1.0, "b": None}, {"a": 2.0, "b": 3.0}]


def test_svg_is_well_formed():
    text = line_plot([("up", [0, 1, 2], [0, 1, 4]), ("flat <&>", [0, 2], [1, 1])], "t", "x", "y")
    root = ET.fromstring(text)
    assert root.get("viewBox") == "0 0 800 600"
    ns = "{http://www.w3.org/2000/svg}"
    assert len(root.findall(f"{ns}polyline")) == 2
    assert any(el.text == "flat <&>" for el in root.iter(f"{ns}text"))


def test_svg_markers_and_non_finite_points():
    text = line_plot([("s", [0, 1, 2], [1, math.nan, 2])], markers=True)
    assert text.count("<circle") == 2
    with pytest.raises(ValueError):
        line_plot([("empty", [0.0], [math.inf])])
