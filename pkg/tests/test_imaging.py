import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from cocnn.errors import DataError, ShapeMismatch
from cocnn.evmdecode import decode_bytecode, instruction_bytes
from cocnn.imaging import (
    GreyImage,
    ImageMode,
    TransactionImageEncoder,
    combine_images,
    encode_bytecode_image,
    encode_transactions,
    encode_value_image,
    export_pgm,
    import_pgm,
    preprocess_transaction,
)
from cocnn.txcore import Transaction


def _tx(bytecode=b"", value=0):
    return Transaction(hash=None, bytecode=bytecode, value=value)


def test_empty_bytecode_image():
    img = encode_bytecode_image(decode_bytecode(b""))
    assert img.mode is ImageMode.BytecodeOnly and img.pixels.shape == (32, 32)
    assert not img.pixels.any()


def test_single_push_layout():
    px = encode_bytecode_image(decode_bytecode(b"\x60\x80")).pixels
    assert px[0, 0] == 0x60 and px[0, 1] == 0x80
    assert px.sum() == 0x60 + 0x80


def test_long_stream_truncated_to_prefix():
    code = bytes((i * 7) % 256 for i in range(2000))
    seq = decode_bytecode(bytes([0x5B]) * 2000)  # JUMPDEST, one byte per instruction
    px = encode_bytecode_image(seq).pixels
    assert (px == 0x5B).all()
    px = encode_bytecode_image(decode_bytecode(code)).pixels
    assert px.tobytes() == instruction_bytes(decode_bytecode(code))[:1024]


def test_value_row():
    assert not encode_value_image(0).pixels.any()
    one = encode_value_image(1).pixels
    assert one.shape == (1, 32) and one[0, 31] == 1 and one[0, :31].sum() == 0
    assert (encode_value_image(2 ** 256 - 1).pixels == 255).all()
    with pytest.raises(ValueError):
        encode_value_image(2 ** 256)


def test_value_row_big_endian_oracle():
    v = 0x0102_0304_0506_0708_090A
    row = encode_value_image(v).pixels[0]
    assert int.from_bytes(row.tobytes(), "big") == v


def test_combine():
    zero = combine_images(encode_bytecode_image(decode_bytecode(b"")), encode_value_image(0))
    assert zero.mode is ImageMode.Combined and zero.pixels.shape == (33, 32) and not zero.pixels.any()
    base = encode_bytecode_image(decode_bytecode(b"\x60\x80"))
    c = combine_images(base, encode_value_image(1))
    assert c.pixels[32, 31] == 1
    assert np.array_equal(c.pixels[:32], base.pixels)


def test_combine_rejects_wrong_modes():
    b = encode_bytecode_image(decode_bytecode(b""))
    with pytest.raises(ShapeMismatch):
        combine_images(b, b)
    with pytest.raises(ShapeMismatch):
        combine_images(encode_value_image(0), encode_value_image(0))


def test_grey_image_validates_shape_and_range():
    with pytest.raises(ShapeMismatch):
        GreyImage(np.zeros((31, 32)), ImageMode.BytecodeOnly)
    with pytest.raises(DataError):
        GreyImage(np.full((1, 32), 256), ImageMode.ValueRow)
    img = GreyImage(np.zeros((1, 32)), ImageMode.ValueRow)
    with pytest.raises(ValueError):
        img.pixels[0, 0] = 1


def test_fot_transaction():
    tx = _tx(value=1)
    img = preprocess_transaction(tx, with_value=True)
    assert not img.pixels[:32].any()
    assert img.pixels[32, 31] == 1 and img.pixels[32].sum() == 1
    blind = preprocess_transaction(tx, with_value=False)
    assert blind.mode is ImageMode.BytecodeOnly and not blind.pixels.any()
    assert blind == preprocess_transaction(_tx(value=10 ** 17), with_value=False)


def test_delegatecall_byte():
    px = preprocess_transaction(_tx(b"\xf4"), True).pixels
    assert px[0, 0] == 0xF4 and px.sum() == 0xF4


@settings(max_examples=80, deadline=None)
@given(st.binary(max_size=1200), st.integers(0, 2 ** 256 - 1), st.integers(0, 2 ** 256 - 1))
def test_value_locality(code, v1, v2):
    a = preprocess_transaction(_tx(code, v1), True).pixels
    b = preprocess_transaction(_tx(code, v2), True).pixels
    assert np.array_equal(a[:32], b[:32])
    assert np.array_equal(preprocess_transaction(_tx(code, v1), False).pixels,
                          preprocess_transaction(_tx(code, v2), False).pixels)


def test_batch_encoding_matches_single():
    rng = np.random.default_rng(3)
    txs = [_tx(rng.bytes(int(n)), int(rng.integers(0, 2 ** 62))) for n in rng.integers(0, 1500, 20)]
    for wv in (True, False):
        stack = encode_transactions(txs, wv)
        assert stack.dtype == np.uint8
        for tx, img in zip(txs, stack):
            assert np.array_equal(img, preprocess_transaction(tx, wv).pixels)
    assert encode_transactions([], True).shape == (0, 33, 32)


def test_pgm_one_pixel(tmp_path):
    p = tmp_path / "one.pgm"
    export_pgm(np.zeros((1, 1), dtype=np.uint8), p)
    assert p.read_bytes() == b"P5\n1 1\n255\n\x00"


def test_pgm_all_white(tmp_path):
    p = tmp_path / "w.pgm"
    export_pgm(GreyImage(np.full((1, 32), 255), ImageMode.ValueRow), p)
    assert p.read_bytes() == b"P5\n32 1\n255\n" + b"\xff" * 32


def test_pgm_round_trip(tmp_path, rng):
    px = rng.integers(0, 256, (33, 32)).astype(np.uint8)
    p = tmp_path / "r.pgm"
    export_pgm(GreyImage(px, ImageMode.Combined), p)
    assert np.array_equal(import_pgm(p), px)


def test_pgm_rejects_bad_input(tmp_path):
    with pytest.raises(ShapeMismatch):
        export_pgm(np.zeros(4), tmp_path / "x.pgm")
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(DataError):
        import_pgm(bad)


def test_encoder_estimator():
    enc = TransactionImageEncoder(with_value=False)
    assert clone(enc).get_params() == {"with_value": False}
    out = enc.fit_transform([_tx(b"\x60\x80", 5)])
    assert out.shape == (1, 32, 32) and out[0, 0, 0] == 0x60
