import json
import warnings

import numpy as np
import pytest

from nrv.volume import (
    HistogramSummary,
    Kind,
    Provenance,
    Volume3D,
    combine_provenance,
    foreground_mask,
    histogram,
    load_volume,
    nearest_rank_percentile,
    nonlinear_rescale,
    save_volume,
    volume_bytes,
    volume_from_bytes,
)


def _raw(data, spacing=(1.0, 1.0, 1.0), provenance=Provenance.REAL):
    return Volume3D(np.asarray(data, dtype=np.uint16), spacing, Kind.RAW, provenance)


def _norm(data, spacing=(1.0, 1.0, 1.0), provenance=Provenance.REAL):
    return Volume3D(np.asarray(data, dtype=np.float32), spacing, Kind.NORMALIZED, provenance)


def percentile_oracle(values, p):
    """Smallest sample with at least p% of samples <= it, by linear scan."""
    s = sorted(values)
    n = len(s)
    for v in s:
        count = sum(1 for x in s if x <= v)
        if count * 100.0 >= p * n:
            return float(v)
    return float(s[-1])


def test_roundtrip_u16_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    data = rng.integers(0, 65536, size=(13, 9, 5), dtype=np.uint16)
    v = Volume3D(data, (0.325, 0.325, 1.0), Kind.RAW, Provenance.REAL)
    path = tmp_path / "a.nrv"
    save_volume(v, path)
    w = load_volume(path)
    assert w.dims == (13, 9, 5)
    assert w.spacing == (0.325, 0.325, 1.0)
    assert w.kind == Kind.RAW
    assert w.provenance == Provenance.REAL
    assert w.data.dtype == np.uint16
    np.testing.assert_array_equal(w.data, data)
    # second pass through bytes must be byte-identical
    assert volume_bytes(w) == volume_bytes(v)


def test_roundtrip_f32_bit_exact():
    rng = np.random.default_rng(11)
    data = rng.random(size=(6, 7, 8), dtype=np.float32)
    v = Volume3D(data, (1.0, 1.0, 2.0), Kind.NORMALIZED, Provenance.PREDICTED)
    w = volume_from_bytes(volume_bytes(v))
    assert w.provenance == Provenance.PREDICTED
    assert w.data.tobytes() == data.tobytes()


def test_payload_order_is_x_fastest():
    data = np.arange(2 * 2 * 2, dtype=np.uint16).reshape((2, 2, 2), order="F")
    # data[x, y, z] = x + 2*y + 4*z by construction
    v = Volume3D(data, (1.0, 1.0, 1.0), Kind.RAW, Provenance.REAL)
    blob = volume_bytes(v)
    payload = blob.split(b"\n", 1)[1]
    flat = np.frombuffer(payload, dtype="<u2")
    np.testing.assert_array_equal(flat, np.arange(8, dtype=np.uint16))


def test_header_is_single_json_line():
    v = _raw(np.zeros((2, 3, 4), dtype=np.uint16))
    header_line = volume_bytes(v).split(b"\n", 1)[0]
    header = json.loads(header_line)
    assert header["dims"] == [2, 3, 4]
    assert header["dtype"] == "u16"
    assert header["kind"] == "raw"
    assert header["provenance"] == "real"


def test_malformed_header_rejected():
    with pytest.raises(ValueError, match="no newline"):
        volume_from_bytes(b"{\"dims\": [1,1,1]}")
    with pytest.raises(ValueError, match="malformed header"):
        volume_from_bytes(b"not json\n\x00\x00")
    good = volume_bytes(_raw(np.zeros((2, 2, 2), dtype=np.uint16)))
    with pytest.raises(ValueError, match="size mismatch"):
        volume_from_bytes(good[:-2])
    with pytest.raises(ValueError, match="size mismatch"):
        volume_from_bytes(good + b"\x00\x00")


def test_unsupported_dtype_rejected():
    header = json.dumps({"dims": [1, 1, 1], "spacing_um": [1, 1, 1],
                         "dtype": "f64", "kind": "raw", "provenance": "real"})
    with pytest.raises(ValueError, match="unsupported dtype"):
        volume_from_bytes(header.encode() + b"\n" + b"\x00" * 8)


def test_volume_validation():
    with pytest.raises(ValueError, match="3-D"):
        Volume3D(np.zeros((4, 4), dtype=np.uint16), (1, 1, 1), Kind.RAW, Provenance.REAL)
    with pytest.raises(ValueError, match="spacing"):
        Volume3D(np.zeros((2, 2, 2), dtype=np.uint16), (1, 0, 1), Kind.RAW, Provenance.REAL)
    with pytest.raises(ValueError, match="float32"):
        Volume3D(np.zeros((2, 2, 2), dtype=np.uint16), (1, 1, 1), Kind.NORMALIZED, Provenance.REAL)
    with pytest.raises(ValueError, match="outside"):
        Volume3D(np.full((2, 2, 2), 1.5, dtype=np.float32), (1, 1, 1),
                 Kind.NORMALIZED, Provenance.REAL)
    v = _raw(np.zeros((2, 2, 2), dtype=np.uint16))
    with pytest.raises(ValueError):
        v.data[0, 0, 0] = 1


def test_provenance_combine_never_uplifts_to_real():
    assert combine_provenance(Provenance.REAL, Provenance.REAL) == Provenance.REAL
    assert combine_provenance(Provenance.REAL, Provenance.PREDICTED) == Provenance.PREDICTED
    assert combine_provenance(Provenance.PREDICTED, Provenance.MORPHED) == Provenance.MORPHED
    assert combine_provenance(Provenance.MORPHED, Provenance.REAL) == Provenance.MORPHED


def test_percentiles_match_linear_scan_oracle():
    rng = np.random.default_rng(3)
    for _ in range(25):
        n = int(rng.integers(1, 40))
        values = rng.integers(0, 50, size=n).astype(np.float64)
        s = np.sort(values)
        for p in (0, 1, 5, 25, 50, 75, 95, 99, 100):
            assert nearest_rank_percentile(s, p) == percentile_oracle(values, p)


def test_histogram_summary_fields():
    data = np.arange(1, 101, dtype=np.uint16).reshape((100, 1, 1))
    h = histogram(_raw(data))
    assert isinstance(h, HistogramSummary)
    # nearest-rank on 1..100: percentile p lands exactly on value p (p >= 1)
    assert h.percentiles[95] == 95.0
    assert h.percentiles[50] == 50.0
    assert h.percentiles[100] == 100.0
    assert h.percentiles[0] == 1.0
    assert h.max == 100.0
    assert h.mean == pytest.approx(50.5)
    assert h.stddev == pytest.approx(np.std(np.arange(1, 101)))


def test_rescale_pins_p95_and_max():
    data = np.arange(1, 101, dtype=np.uint16).reshape((100, 1, 1))
    out = nonlinear_rescale(_raw(data))
    assert out.kind == Kind.NORMALIZED
    d = out.data.ravel()
    assert d[94] == pytest.approx(0.75)      # value 95 is the 95th percentile
    assert d[99] == pytest.approx(1.0)       # max maps to 1.0
    assert d[49] == pytest.approx(0.75 * 50 / 95)
    assert d[96] == pytest.approx(0.75 + 0.25 * (97 - 95) / (100 - 95))


def test_rescale_monotone_many_volumes():
    rng = np.random.default_rng(19)
    for _ in range(60):
        data = rng.integers(0, 2000, size=(8, 8, 8), dtype=np.uint16)
        out = nonlinear_rescale(_raw(data)).data.ravel()
        flat = data.ravel()
        order = np.argsort(flat, kind="stable")
        diffs = np.diff(out[order])
        assert (diffs >= -1e-7).all()
        # equal inputs map to equal outputs
        same = np.diff(flat[order]) == 0
        assert np.allclose(diffs[same], 0.0)


def test_rescale_all_zero_warns():
    v = _raw(np.zeros((4, 4, 4), dtype=np.uint16))
    with pytest.warns(UserWarning, match="degenerate"):
        out = nonlinear_rescale(v)
    assert not out.data.any()
    assert out.kind == Kind.NORMALIZED


def test_rescale_sparse_p95_zero():
    # >95% zeros: p95 == 0, the upper segment must still reach 1.0
    data = np.zeros((10, 10, 10), dtype=np.uint16)
    data[0, 0, 0] = 40
    data[1, 0, 0] = 80
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = nonlinear_rescale(_raw(data))
    assert out.data[1, 0, 0] == pytest.approx(1.0)
    assert out.data[0, 0, 0] == pytest.approx(0.75 + 0.25 * 40 / 80)
    assert out.data[2, 0, 0] == 0.0


def test_rescale_rejects_normalized_input():
    with pytest.raises(ValueError, match="raw"):
        nonlinear_rescale(_norm(np.zeros((2, 2, 2), dtype=np.float32)))


def test_foreground_mask_matches_loop():
    rng = np.random.default_rng(23)
    data = rng.random(size=(5, 6, 7)).astype(np.float32)
    v = _norm(data)
    mask = foreground_mask(v, 0.4)
    count = 0
    for x in range(5):
        for y in range(6):
            for z in range(7):
                above = data[x, y, z] > 0.4
                assert mask[x, y, z] == above
                count += int(above)
    assert mask.sum() == count
    with pytest.raises(ValueError, match="threshold"):
        foreground_mask(v, 1.5)
    with pytest.raises(ValueError, match="normalized"):
        foreground_mask(_raw(np.zeros((2, 2, 2), dtype=np.uint16)), 0.1)
