import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ldcstats.io import (MatrixFile, MatrixFileError, RunConfigError, check_output_dir, format_float,
                         load_run_config, parse_run_config, read_matrix, write_matrix)


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=0, max_side=6),
                  elements=st.floats(allow_nan=False, width=64)))
def test_round_trip_bit_exact(data):
    back = MatrixFile.from_bytes(MatrixFile(data).to_bytes()).data
    assert back.shape == data.shape
    assert back.tobytes() == data.astype("<f8").tobytes()


def test_round_trip_signed_zero_and_nan(tmp_path):
    data = np.array([[0.0, -0.0, np.nan], [np.inf, -np.inf, 5e-324]])
    path = write_matrix(tmp_path / "a.ldcm", data)
    back = read_matrix(path).data
    assert back.tobytes() == data.tobytes()
    assert np.signbit(back[0, 1]) and not np.signbit(back[0, 0])


def test_header_layout():
    raw = MatrixFile(np.arange(6.0).reshape(2, 3)).to_bytes()
    assert raw[:4] == b"LDCM"
    assert struct.unpack_from("<HII", raw, 4) == (1, 2, 3)
    assert len(raw) == 14 + 6 * 8
    assert struct.unpack_from("<d", raw, 14 + 8)[0] == 1.0


def test_bad_files():
    raw = MatrixFile(np.ones((2, 2))).to_bytes()
    with pytest.raises(MatrixFileError, match="magic"):
        MatrixFile.from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(MatrixFileError, match="payload"):
        MatrixFile.from_bytes(raw[:-1])
    with pytest.raises(MatrixFileError):
        MatrixFile.from_bytes(raw[:5])
    with pytest.raises(MatrixFileError, match="version"):
        MatrixFile.from_bytes(raw[:4] + struct.pack("<H", 9) + raw[6:])
    with pytest.raises(MatrixFileError):
        MatrixFile(np.ones((2, 2, 2)))


def test_labels(tmp_path):
    path = write_matrix(tmp_path / "m.ldcm", np.eye(2), labels=["left", "right"])
    assert read_matrix(path).labels == ("left", "right")
    write_matrix(path, np.eye(2))
    assert read_matrix(path).labels is None
    with pytest.raises(MatrixFileError):
        MatrixFile(np.eye(2), ["one"])
    with pytest.raises(MatrixFileError):
        MatrixFile(np.eye(2), ["a\nb", "c"])


def test_one_dimensional_input_becomes_row():
    assert MatrixFile(np.array([1.0, 2.0])).data.shape == (1, 2)


CONFIG = """
[run]
kind = fig1
seed = 3
replications = 20

[experiment]
P = 40

[paths]
out_dir = results
"""


def test_parse_run_config(tmp_path):
    rc = parse_run_config(CONFIG, base_dir=tmp_path)
    assert (rc.kind, rc.seed, rc.replications) == ("fig1", 3, 20)
    assert rc.out_dir == tmp_path / "results"
    assert rc.experiment_config() == {"P": "40", "replications": 20}
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CONFIG, encoding="utf-8")
    assert load_run_config(cfg).out_dir == tmp_path / "results"


@pytest.mark.parametrize("text,needle", [
    ("[run]\nkind = fig1\n", "replications"),
    ("[run]\nreplications = 5\ncolour = red\n", "colour"),
    ("[run]\nreplications = 5\n[extras]\na = 1\n", "extras"),
    ("[run]\nreplications = 5\n[paths]\nin_dir = x\n", "in_dir"),
    ("[run]\nreplications = five\n", "integer"),
    ("[run]\nreplications = 0\n", "positive"),
    ("[run]\nreplications = 5\n[experiment]\nreplications = 4\n", "replications"),
    ("[run]\nreplications = 5\nreplications = 6\n", "malformed"),
])
def test_run_config_errors(text, needle):
    with pytest.raises(RunConfigError, match=needle):
        parse_run_config(text)


def test_output_dir_checks(tmp_path):
    assert check_output_dir(tmp_path / "a" / "b").is_dir()
    f = tmp_path / "file"
    f.write_text("x")
    with pytest.raises(NotADirectoryError):
        check_output_dir(f)


def test_format_float_round_trips():
    for x in (0.1, 1 / 3, 2.6, 1e-300, -7.0):
        s = format_float(x)
        assert float(s) == x
    assert format_float(0.1) == "0.10000000000000001"
