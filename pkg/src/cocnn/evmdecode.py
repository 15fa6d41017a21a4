"""Linear EVM bytecode disassembler.

The opcode table is frozen at the Shanghai instruction set (PUSH0 included).
Decoding is total: unknown bytes decode to ``INVALID`` and a PUSH that runs
past the end of the input is zero-padded and flagged ``truncated``.
"""

from __future__ import annotations

from dataclasses import dataclass

TABLE_VERSION = "shanghai"

_NAMED = {
    0x00: "STOP", 0x01: "ADD", 0x02: "MUL", 0x03: "SUB", 0x04: "DIV",
    0x05: "SDIV", 0x06: "MOD", 0x07: "SMOD", 0x08: "ADDMOD", 0x09: "MULMOD",
    0x0A: "EXP", 0x0B: "SIGNEXTEND",
    0x10: "LT", 0x11: "GT", 0x12: "SLT", 0x13: "SGT", 0x14: "EQ",
    0x15: "ISZERO", 0x16: "AND", 0x17: "OR", 0x18: "XOR", 0x19: "NOT",
    0x1A: "BYTE", 0x1B: "SHL", 0x1C: "SHR", 0x1D: "SAR",
    0x20: "KECCAK256",
    0x30: "ADDRESS", 0x31: "BALANCE", 0x32: "ORIGIN", 0x33: "CALLER",
    0x34: "CALLVALUE", 0x35: "CALLDATALOAD", 0x36: "CALLDATASIZE",
    0x37: "CALLDATACOPY", 0x38: "CODESIZE", 0x39: "CODECOPY",
    0x3A: "GASPRICE", 0x3B: "EXTCODESIZE", 0x3C: "EXTCODECOPY",
    0x3D: "RETURNDATASIZE", 0x3E: "RETURNDATACOPY", 0x3F: "EXTCODEHASH",
    0x40: "BLOCKHASH", 0x41: "COINBASE", 0x42: "TIMESTAMP", 0x43: "NUMBER",
    0x44: "PREVRANDAO", 0x45: "GASLIMIT", 0x46: "CHAINID",
    0x47: "SELFBALANCE", 0x48: "BASEFEE",
    0x50: "POP", 0x51: "MLOAD", 0x52: "MSTORE", 0x53: "MSTORE8",
    0x54: "SLOAD", 0x55: "SSTORE", 0x56: "JUMP", 0x57: "JUMPI", 0x58: "PC",
    0x59: "MSIZE", 0x5A: "GAS", 0x5B: "JUMPDEST", 0x5F: "PUSH0",
    0xF0: "CREATE", 0xF1: "CALL", 0xF2: "CALLCODE", 0xF3: "RETURN",
    0xF4: "DELEGATECALL", 0xF5: "CREATE2", 0xFA: "STATICCALL",
    0xFD: "REVERT", 0xFE: "INVALID", 0xFF: "SELFDESTRUCT",
}


def _build_table():
    table = [("INVALID", 0, False)] * 256
    for op, name in _NAMED.items():
        table[op] = (name, 0, True)
    for n in range(1, 33):
        table[0x5F + n] = (f"PUSH{n}", n, True)
    for n in range(1, 17):
        table[0x7F + n] = (f"DUP{n}", 0, True)
        table[0x8F + n] = (f"SWAP{n}", 0, True)
    for n in range(5):
        table[0xA0 + n] = (f"LOG{n}", 0, True)
    return tuple(table)


OPCODE_TABLE = _build_table()
MNEMONIC_TO_OPCODE = {name: op for op, (name, _, known) in enumerate(OPCODE_TABLE) if known}


def opcode_info(opcode: int) -> tuple[str, int, bool]:
    """Return ``(mnemonic, immediate_len, known)`` for one opcode byte."""
    if not 0 <= opcode <= 0xFF:
        raise ValueError(f"opcode out of byte range: {opcode}")
    return OPCODE_TABLE[opcode]


@dataclass(frozen=True)
class Instruction:
    offset: int
    opcode: int
    mnemonic: str
    immediate: bytes = b""
    truncated: bool = False

    def __str__(self):
        text = f"{self.offset:04x}: {self.mnemonic}"
        if self.immediate:
            text += f" 0x{self.immediate.hex()}"
        return text


@dataclass(frozen=True)
class InstructionSeq:
    instructions: tuple
    source_len: int
    table_version: str = TABLE_VERSION

    def __len__(self):
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)

    def __getitem__(self, idx):
        return self.instructions[idx]

    @property
    def mnemonics(self) -> list[str]:
        return [ins.mnemonic for ins in self.instructions]


def decode_bytecode(bytecode: bytes) -> InstructionSeq:
    code = bytes(bytecode)
    n = len(code)
    out = []
    pc = 0
    table = OPCODE_TABLE
    while pc < n:
        op = code[pc]
        name, width, _ = table[op]
        if width:
            imm = code[pc + 1:pc + 1 + width]
            short = len(imm) < width
            if short:
                imm = imm + bytes(width - len(imm))
            out.append(Instruction(pc, op, name, imm, short))
        else:
            out.append(Instruction(pc, op, name))
        pc += 1 + width
    return InstructionSeq(tuple(out), n)


def instruction_bytes(seq: InstructionSeq) -> bytes:
    """Flatten instructions back to bytes; truncated immediates keep their padding."""
    buf = bytearray()
    for ins in seq.instructions:
        buf.append(ins.opcode)
        buf += ins.immediate
    return bytes(buf)


def assemble(*items) -> bytes:
    """Tiny assembler for building templates and fixtures.

    Items are mnemonics (``"ADD"``), ``(mnemonic, immediate)`` pairs for PUSH
    instructions, or raw ``bytes`` spliced in verbatim.
    """
    buf = bytearray()
    for item in items:
        if isinstance(item, (bytes, bytearray)):
            buf += item
            continue
        if isinstance(item, str):
            name, imm = item, b""
        else:
            name, imm = item
        op = MNEMONIC_TO_OPCODE[name]
        width = OPCODE_TABLE[op][1]
        if isinstance(imm, int):
            imm = imm.to_bytes(width, "big")
        if len(imm) != width:
            raise ValueError(f"{name} takes {width} immediate bytes, got {len(imm)}")
        buf.append(op)
        buf += imm
    return bytes(buf)


def format_listing(seq: InstructionSeq) -> str:
    return "\n".join(str(ins) for ins in seq.instructions)
