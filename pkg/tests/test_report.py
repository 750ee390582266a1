import csv
import io
import json
import math

import jsonschema
import numpy as np
import pytest

from gaugecd.report import REPORT_SCHEMA, VerificationReport, dumps, format_number, parse_number


def sample_report():
    recs = [{"t": 0.1, "value": math.inf, "flag": True, "name": "a,b"},
            {"t": 1 / 3, "value": -math.inf, "flag": False, "name": "c"}]
    return VerificationReport("demo", False, 1e-3, ("t", "value", "flag", "name"), recs,
                              {"min_deficit": np.float64(-0.5), "violations": np.int64(2),
                               "steps": [{"a": 1.0}], "nan_value": math.nan})


class TestFormatting:
    def test_sentinels(self):
        assert format_number(math.inf) == "inf"
        assert format_number(-math.inf) == "-inf"
        assert format_number(math.nan) == "nan"

    def test_seventeen_digits(self):
        assert format_number(0.1) == "0.10000000000000001"
        assert float(format_number(1 / 3)) == 1 / 3

    def test_parse_round_trip(self):
        for v in (0.1, -2.5e-300, math.inf, -math.inf):
            assert parse_number(format_number(v)) == v
        assert math.isnan(parse_number("nan"))


class TestJson:
    def test_schema_valid(self):
        doc = json.loads(sample_report().to_json())
        jsonschema.validate(doc, REPORT_SCHEMA)

    def test_extended_reals_as_strings(self):
        doc = json.loads(sample_report().to_json())
        assert doc["records"][0]["value"] == "inf"
        assert doc["records"][1]["value"] == "-inf"
        assert doc["summary"]["nan_value"] == "nan"

    def test_numbers_exact(self):
        doc = json.loads(sample_report().to_json())
        assert doc["records"][1]["t"] == 1 / 3
        assert "0.33333333333333331" in sample_report().to_json()

    def test_deterministic(self):
        assert sample_report().to_json() == sample_report().to_json()

    def test_schema_rejects_extra(self):
        doc = json.loads(sample_report().to_json())
        doc["extra"] = 1
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(doc, REPORT_SCHEMA)

    def test_dumps_plain(self):
        assert json.loads(dumps({"a": [1.5, math.inf]})) == {"a": [1.5, "inf"]}


class TestCsv:
    def test_header_and_rows(self):
        text = sample_report().to_csv()
        assert "\r" not in text
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == ["t", "value", "flag", "name"]
        assert rows[1] == ["0.10000000000000001", "inf", "true", "a,b"]
        assert rows[2][1] == "-inf"

    def test_line(self):
        line = sample_report().line()
        assert line.startswith("FAIL demo") and "min_deficit" in line
