from pathlib import Path

import numpy as np
import pytest

from plecho_viz.tables import ParseError, read_table

DATA = Path(__file__).parent / "data"


def test_parse_canned_inputs():
    for name in ("sweep_A.txt", "pulse_AA.txt", "populations_AA.txt",
                 "echo_exact.txt", "ldos_d0.2.txt", "overlaps.txt"):
        table = read_table(DATA / name)
        assert table.data.ndim == 2
        assert len(table.columns) == table.data.shape[1]
        assert table.meta["kind"]


def test_column_access():
    t = read_table(DATA / "sweep_A.txt")
    assert np.all(np.diff(t.column("tau_total")) > 0)
    assert t.has_column("infidelity")
    with pytest.raises(ParseError, match="missing required column"):
        t.column("nope")
    with pytest.raises(ParseError, match="missing required columns"):
        t.require("tau_total", "sigma")


@pytest.mark.parametrize("text,fragment", [
    ("# other magic\n# columns: a\n1.0\n", "line 1"),
    ("# plecho-table v1\n# kind: x\n1.0\n", "data before the columns header"),
    ("# plecho-table v1\n# columns: a b\n1.0\n", "line 3"),
    ("# plecho-table v1\n# columns: a\nxyz\n", "non-numeric"),
    ("# plecho-table v1\n# nocolon\n# columns: a\n1.0\n", "without ':'"),
    ("# plecho-table v1\n# kind: x\n", "missing columns"),
])
def test_malformed_rejected(tmp_path, text, fragment):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(ParseError, match=fragment):
        read_table(p)


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ParseError):
        read_table(tmp_path / "ghost.txt")


def test_empty_data_allowed(tmp_path):
    p = tmp_path / "empty.txt"
    p.write_text("# plecho-table v1\n# kind: x\n# columns: a b\n")
    t = read_table(p)
    assert t.data.shape == (0, 2)
