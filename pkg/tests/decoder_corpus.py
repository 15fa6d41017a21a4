"""Fixture corpus and reference-disassembler adapters for decoder checks.

Two independent disassemblers serve as oracles: pyevmasm (Istanbul table) and
evmdasm. Neither knows the Shanghai PUSH0 byte, pyevmasm also lacks BASEFEE,
and both use pre-merge names for 0x20 and 0x44. The adapters map those
spellings onto the Shanghai names and otherwise pass results through untouched.
"""

import evmdasm
import pyevmasm

ALIASES = {"SHA3": "KECCAK256", "DIFFICULTY": "PREVRANDAO", "GETPC": "PC"}
# bytes assigned after the reference tables were frozen
SHANGHAI_ONLY = {0x5F: "PUSH0"}
PYEVMASM_MISSING = {0x48: "BASEFEE", **SHANGHAI_ONLY}

_ADDR = bytes.fromhex("5b38da6a701c568545dcfcb03fcb875f56beddc4")


def _push(n: int) -> str:
    return f"{0x5F + n:02x}" + bytes(range(1, n + 1)).hex()


CORPUS = [(f"push{n}", _push(n)) for n in range(1, 33)] + [
    ("delegatecall", "f4"),
    ("call", "f1"),
    ("sstore", "55"),
    ("jumpdest", "5b"),
    ("add", "01"),
    ("solc_prologue", "6080604052"),
    ("solc_legacy_prologue", "606060405260043610603f576000357c0100000000000000000000000000000000000000000000000000000000900463ffffffff1680"),
    ("solc_callvalue_guard", "6080604052348015600f57600080fd5b50"),
    ("selector_dispatch", "60003560e01c8063a9059cbb14602d57806370a0823114603257600080fd5b005b00"),
    ("minimal_proxy", "363d3d373d3d3d363d73" + _ADDR.hex() + "5af43d82803e903d91602b57fd5bf3"),
    ("keccak_and_prevrandao", "6020600020445a"),
    ("basefee_push0", "485f5f5260206000f3"),
    ("unknown_bytes", "0c0d0e0f21a5b0fe"),
    ("log_and_swaps", "a0a1a2a3a4909f808f"),
    ("create_family", "f0f5f2fafdff"),
]

TRUNCATED = [
    ("push32_empty", "7f"),
    ("push32_partial", "7f" + "11" * 5),
    ("push2_one_byte", "600161ab"),
    ("push1_empty", "6001600260"),
    ("trailing_push20", "73" + _ADDR[:7].hex()),
]


def pyevmasm_listing(code: bytes):
    out = []
    for ins in pyevmasm.disassemble_all(code, fork="istanbul"):
        name = ALIASES.get(ins.name, ins.name)
        if ins.opcode in PYEVMASM_MISSING:
            name = PYEVMASM_MISSING[ins.opcode]
        imm = ins.operand.to_bytes(ins.operand_size, "big") if ins.operand_size else b""
        out.append((ins.pc, name, imm))
    return out


def evmdasm_listing(code: bytes):
    out, pc = [], 0
    for ins in evmdasm.EvmBytecode(code).disassemble():
        op = code[pc]
        name = ALIASES.get(ins.name, ins.name)
        if op in SHANGHAI_ONLY:
            name = SHANGHAI_ONLY[op]
        elif name.startswith(("UNKNOWN_", "UNOFFICIAL_")):
            name = "INVALID"
        elif name.startswith("INVALID_"):  # a truncated PUSH keeps its true name here
            name = f"PUSH{op - 0x5F}"
        imm = bytes(ins.operand_bytes or b"")
        out.append((pc, name, imm))
        pc += 1 + ins.length_of_operand
    return out


def ours_listing(seq, strip_padding=False):
    out = []
    for ins in seq:
        imm = ins.immediate
        if strip_padding and ins.truncated:
            imm = imm[:seq.source_len - ins.offset - 1]
        out.append((ins.offset, ins.mnemonic, imm))
    return out
