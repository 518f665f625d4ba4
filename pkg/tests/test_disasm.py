import pytest
from hypothesis import given, strategies as st

from evmscope.disasm import (
    NonHexCharacterError,
    OddLengthError,
    disassemble,
    load_contract,
    parse_hex,
)


def test_parse_hex_prefixed():
    assert parse_hex("0x6001") == bytes([0x60, 0x01])


def test_parse_hex_whitespace():
    assert parse_hex("6001\n") == bytes([0x60, 0x01])
    assert parse_hex("60 01\t60 02") == bytes([0x60, 0x01, 0x60, 0x02])


def test_parse_hex_case_insensitive():
    assert parse_hex("0xAbCd") == bytes([0xAB, 0xCD])


def test_parse_hex_rejects_non_hex():
    with pytest.raises(NonHexCharacterError):
        parse_hex("600g")


def test_parse_hex_rejects_odd_length():
    with pytest.raises(OddLengthError):
        parse_hex("600")


def test_disassemble_simple_add():
    ins = disassemble(parse_hex("6001600201"))
    assert [(i.offset, i.mnemonic, i.immediate) for i in ins] == [
        (0, "PUSH1", 1), (2, "PUSH1", 2), (4, "ADD", None)]


def test_disassemble_truncated_push_pads_right():
    ins = disassemble(bytes([0x61, 0xFF]))
    assert len(ins) == 1
    assert ins[0].mnemonic == "PUSH2"
    assert ins[0].immediate == 0xFF00


def test_disassemble_empty():
    assert disassemble(b"") == []


def test_disassemble_unknown_byte_is_invalid():
    ins = disassemble(bytes([0x0C]))
    assert ins[0].mnemonic == "INVALID"
    assert ins[0].info.is_terminal


@given(st.binary(max_size=512))
def test_roundtrip_reencoding(code):
    ins = disassemble(code)
    encoded = b"".join(i.encode() for i in ins)
    # identical except the zero padding of a trailing truncated PUSH
    assert encoded[:len(code)] == code
    assert len(encoded) >= len(code)
    assert all(b == 0 for b in encoded[len(code):])


@given(st.binary(min_size=1, max_size=512))
def test_offsets_tile_the_code(code):
    ins = disassemble(code)
    expected = 0
    for i in ins:
        assert i.offset == expected
        expected = i.next_offset
    assert expected >= len(code)
    assert expected - len(code) <= 32  # at most one padded push


@given(st.binary(max_size=256))
def test_immediates_fit_their_width(code):
    for i in disassemble(code):
        if i.info.immediate_bytes:
            assert 0 <= i.immediate < (1 << (8 * i.info.immediate_bytes))
        else:
            assert i.immediate is None


def test_load_contract_raw_hex(tmp_path):
    f = tmp_path / "raw.hex"
    f.write_text("0x6001600201\n")
    contract = load_contract(f)
    assert contract.runtime_code == parse_hex("6001600201")
    assert contract.creation_code is None
    assert contract.name == "raw"


def test_load_contract_envelope(tmp_path):
    f = tmp_path / "c.json"
    f.write_text('{"runtime": "0x00", "creation": "0x6000", "name": "demo", '
                 '"functions": {"0x3ccfd60b": {"signature": "withdraw()", "payable": false}}, '
                 '"source_map": {"0": 3}}')
    contract = load_contract(f)
    assert contract.runtime_code == b"\x00"
    assert contract.creation_code == bytes([0x60, 0x00])
    assert contract.name == "demo"
    assert contract.functions[0x3CCFD60B]["signature"] == "withdraw()"
    assert contract.source_map == {0: 3}


def test_load_contract_envelope_requires_runtime(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text('{"creation": "0x00"}')
    with pytest.raises(ValueError):
        load_contract(f)
