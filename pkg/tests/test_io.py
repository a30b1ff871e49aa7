import numpy as np
import pytest

from hqnoise.collector import NoisePair
from hqnoise.errors import FormatError
from hqnoise.io import read_pairs, read_scores, write_pairs


def _pairs(k=3, views=2, scored=False):
    rng = np.random.default_rng(0)
    out = []
    for i in range(k):
        z = rng.standard_normal((views, 4, 8, 8)).astype(np.float32).astype(np.float64)
        zt = z + rng.standard_normal(z.shape).astype(np.float32)
        ref = rng.standard_normal((4, 8, 8)).astype(np.float32).astype(np.float64)
        s = (0.1 * i, 0.2 * i) if scored else (None, None)
        out.append(NoisePair(z, zt, ref, 10 + i, 16, "triangular:6->2.5", 0.0, *s))
    return out


@pytest.mark.parametrize("scored", [False, True])
def test_roundtrip(tmp_path, scored):
    pairs = _pairs(scored=scored)
    path = tmp_path / "p.ednp"
    write_pairs(path, pairs)
    back = read_pairs(path)
    assert len(back) == 3
    for a, b in zip(pairs, back):
        assert a.seed == b.seed and b.n == 16 and b.gamma1 == "triangular:6->2.5"
        np.testing.assert_array_equal(a.z_T, b.z_T)
        np.testing.assert_allclose(a.z_tilde_T, b.z_tilde_T, rtol=1e-7)
        np.testing.assert_array_equal(a.I, b.I)
        assert (a.s_rd, a.s_hq) == (b.s_rd, b.s_hq)
    again = tmp_path / "q.ednp"
    write_pairs(again, back)
    assert path.read_bytes() == again.read_bytes()


def test_empty_file(tmp_path):
    write_pairs(tmp_path / "e", [])
    assert read_pairs(tmp_path / "e") == []


def test_format_errors(tmp_path):
    path = tmp_path / "p"
    write_pairs(path, _pairs())
    data = path.read_bytes()
    cases = {"magic": b"NOPE" + data[4:], "short": data[:-3], "long": data + b"\0" * 8,
             "version": data[:4] + b"\x09\x00" + data[6:]}
    for name, blob in cases.items():
        (tmp_path / name).write_bytes(blob)
        with pytest.raises(FormatError):
            read_pairs(tmp_path / name)


def test_inconsistent_shapes_rejected(tmp_path):
    pairs = _pairs()
    pairs[1].z_T = pairs[1].z_T[:1]
    with pytest.raises(FormatError):
        write_pairs(tmp_path / "x", pairs)


def test_read_scores(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("seed,s_rd,s_hq\n# comment\n1,0.5,0.3\n\n2\t0.1\t0.2\n")
    assert read_scores(path) == {1: (0.5, 0.3), 2: (0.1, 0.2)}
    path.write_text("1,0.5\n")
    with pytest.raises(FormatError):
        read_scores(path)
