"""Synthetic labeled transaction generator.

Normal traffic plus six attack classes. Attack bytecode is built from small
documented EVM templates with randomized fields (addresses, amounts, repeat
counts); it does not reproduce real exploit code.

Templates at a glance:

* Normal: plain ETH transfer (empty bytecode, lognormal value) or a benign
  contract interaction: deployment prologue ``0x6080604052`` plus random
  constructor bytes, or an ERC-20 ``transfer(address,uint256)`` call.
* DoS: a jackpot ``join`` call unit repeated until near the 1024-byte window,
  value between 0.5 and 5 ETH.
* OaU: PUSH32 boundary constants (0, 2**256-1) around ADD/SUB, large value.
* FoT: empty bytecode, value of 1..10**4 wei.
* Re: ``withdraw(uint256)`` selector followed by 2..8 CALL -> SSTORE units.
* DeC: proxy-style forwarding through DELEGATECALL to a random target.
* FDV: a bare call to a public-by-default function selector, value 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidClass, InvalidSpec
from .evmdecode import assemble
from .txcore import ClassLabel, Dataset, Transaction, make_rng, save_dataset

GENERATOR_VERSION = "1.0"
WEI_PER_ETH = 10 ** 18
UINT256_MAX = (1 << 256) - 1

DEFAULT_PROPORTIONS = {
    ClassLabel.Normal: 0.5034,
    ClassLabel.DoS: 0.0759,
    ClassLabel.OaU: 0.0966,
    ClassLabel.FoT: 0.1378,
    ClassLabel.Re: 0.0749,
    ClassLabel.DeC: 0.0741,
    ClassLabel.FDV: 0.0373,
}

DEPLOY_PROLOGUE = bytes.fromhex("6080604052")
ERC20_TRANSFER = bytes.fromhex("a9059cbb")
JACKPOT_JOIN = bytes.fromhex("b688a363")
WITHDRAW = bytes.fromhex("2e1a7d4d")
PROXY_SELECTORS = [bytes.fromhex(s) for s in ("3659cfe6", "4f1ef286", "d784d426", "c4d66de8")]
# initWallet(), kill(), changeOwner(address), setOwner(address), withdrawAll(), transferOwnership(address)
PUBLIC_SELECTORS = [
    bytes.fromhex(s) for s in ("e46dcfeb", "41c0e1b5", "a6f9dae1", "13af4035", "853828b6", "f2fde38b")
]


@dataclass
class GenSpec:
    total: int = 10_000
    proportions: dict = field(default_factory=lambda: dict(DEFAULT_PROPORTIONS))
    seed: int = 0
    plain_transfer_share: float = 0.75
    value_eth_lognormal: tuple = (math.log(0.1), 1.0)
    arrival_rate_per_s: float = 200.0

    def __post_init__(self):
        self.proportions = {ClassLabel.parse(k) if isinstance(k, str) else ClassLabel(k): float(v)
                            for k, v in self.proportions.items()}
        for label in ClassLabel:
            self.proportions.setdefault(label, 0.0)
        self.value_eth_lognormal = tuple(float(x) for x in self.value_eth_lognormal)

    def validate(self):
        if self.total < 1:
            raise InvalidSpec("total must be positive")
        if any(p < 0 for p in self.proportions.values()):
            raise InvalidSpec("proportions must be non-negative")
        if abs(sum(self.proportions.values()) - 1.0) > 1e-9:
            raise InvalidSpec(f"proportions sum to {sum(self.proportions.values())!r}, not 1")
        if not 0.0 <= self.plain_transfer_share <= 1.0:
            raise InvalidSpec("plain_transfer_share must lie in [0, 1]")
        if self.value_eth_lognormal[1] < 0:
            raise InvalidSpec("lognormal sigma must be non-negative")
        if self.arrival_rate_per_s <= 0:
            raise InvalidSpec("arrival_rate_per_s must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["proportions"] = {label.name: p for label, p in sorted(self.proportions.items())}
        d["value_eth_lognormal"] = list(self.value_eth_lognormal)
        return d


def class_counts(spec: GenSpec) -> dict:
    """round(total * p) per attack class; whatever is left goes to Normal."""
    counts = {}
    for label in ClassLabel:
        if label is not ClassLabel.Normal:
            counts[label] = int(math.floor(spec.total * spec.proportions[label] + 0.5))
    rest = spec.total - sum(counts.values())
    if rest < 0:
        raise InvalidSpec("rounded attack counts exceed total")
    counts[ClassLabel.Normal] = rest
    return {label: counts[label] for label in ClassLabel}


def _rand_bytes(rng, n: int) -> bytes:
    return rng.integers(0, 256, size=n, dtype=np.uint8).tobytes()


def _rand_address(rng) -> bytes:
    return _rand_bytes(rng, 20)


def _uint_between(rng, lo: int, hi: int) -> int:
    """Uniform-ish integer in [lo, hi] that also works beyond 64 bits."""
    span = hi - lo
    if span < (1 << 62):
        return lo + int(rng.integers(0, span + 1))
    nbytes = (span.bit_length() + 7) // 8 + 8
    return lo + int.from_bytes(_rand_bytes(rng, nbytes), "big") % (span + 1)


def _lognormal_wei(rng, mu: float, sigma: float) -> int:
    return max(1, int(rng.lognormal(mu, sigma) * WEI_PER_ETH))


def _tx(rng, bytecode: bytes, value: int, label: ClassLabel) -> Transaction:
    return Transaction(hash=_rand_bytes(rng, 32), bytecode=bytecode, value=value, label=label)


def generate_normal(rng, spec: GenSpec | None = None) -> Transaction:
    spec = spec or GenSpec()
    if rng.random() < spec.plain_transfer_share:
        mu, sigma = spec.value_eth_lognormal
        return _tx(rng, b"", _lognormal_wei(rng, mu, sigma), ClassLabel.Normal)
    if rng.random() < 0.5:
        body = DEPLOY_PROLOGUE + _rand_bytes(rng, int(rng.integers(64, 400)))
    else:
        amount = _uint_between(rng, 1, 10 ** 24)
        body = ERC20_TRANSFER + bytes(12) + _rand_address(rng) + amount.to_bytes(32, "big")
    value = 0 if rng.random() < 0.9 else _lognormal_wei(rng, math.log(0.01), 1.0)
    return _tx(rng, body, value, ClassLabel.Normal)


def _dos(rng):
    unit_count = int(rng.integers(30, 36))
    units = []
    for _ in range(unit_count):
        units.append(assemble(("PUSH4", JACKPOT_JOIN), ("PUSH20", _rand_address(rng)), "GAS", "CALL", "POP"))
    value = _uint_between(rng, WEI_PER_ETH // 2, 5 * WEI_PER_ETH)
    return b"".join(units), value


def _oau(rng):
    parts = []
    for _ in range(int(rng.integers(2, 7))):
        bound = 0 if rng.random() < 0.5 else UINT256_MAX
        operand = _uint_between(rng, 1, UINT256_MAX)
        op = "ADD" if bound == UINT256_MAX else "SUB"
        parts.append(assemble(("PUSH32", operand), ("PUSH32", bound), op, ("PUSH1", int(rng.integers(0, 16))), "SSTORE"))
    value = _uint_between(rng, 100 * WEI_PER_ETH, 10_000 * WEI_PER_ETH)
    return b"".join(parts), value


def _fot(rng):
    return b"", _uint_between(rng, 1, 10 ** 4)


def _re(rng):
    parts = [assemble(("PUSH4", WITHDRAW), ("PUSH32", _uint_between(rng, 1, 10 * WEI_PER_ETH)))]
    attacker = _rand_address(rng)
    for _ in range(int(rng.integers(2, 9))):
        parts.append(assemble(("PUSH20", attacker), "GAS", "CALL", ("PUSH1", 0), "SSTORE"))
    return b"".join(parts), 0


def _dec(rng):
    selector = PROXY_SELECTORS[int(rng.integers(len(PROXY_SELECTORS)))]
    code = assemble(
        ("PUSH4", selector),
        "CALLDATASIZE", ("PUSH1", 0), ("PUSH1", 0), "CALLDATACOPY",
        ("PUSH1", 0), "CALLDATASIZE", ("PUSH1", 0),
        ("PUSH20", _rand_address(rng)), "GAS", "DELEGATECALL",
        "RETURNDATASIZE", ("PUSH1", 0), ("PUSH1", 0), "RETURNDATACOPY",
    )
    return code, 0


def _fdv(rng):
    return PUBLIC_SELECTORS[int(rng.integers(len(PUBLIC_SELECTORS)))], 0


_ATTACKS = {
    ClassLabel.DoS: _dos,
    ClassLabel.OaU: _oau,
    ClassLabel.FoT: _fot,
    ClassLabel.Re: _re,
    ClassLabel.DeC: _dec,
    ClassLabel.FDV: _fdv,
}


def generate_attack(label, rng) -> Transaction:
    try:
        label = ClassLabel(label)
        make = _ATTACKS[label]
    except (ValueError, KeyError):
        raise InvalidClass(f"not an attack class: {label!r}") from None
    bytecode, value = make(rng)
    return _tx(rng, bytecode, value, label)


def generate_dataset(spec: GenSpec) -> Dataset:
    spec.validate()
    rng = make_rng(spec.seed, 0xDA7A)
    counts = class_counts(spec)
    labels = np.concatenate([np.full(n, int(label)) for label, n in counts.items()])
    labels = labels[rng.permutation(labels.size)]
    gaps = rng.exponential(1000.0 / spec.arrival_rate_per_s, size=labels.size)
    times = np.floor(np.cumsum(gaps)).astype(np.int64)

    txs = []
    for label, ts in zip(labels, times):
        label = ClassLabel(int(label))
        if label is ClassLabel.Normal:
            tx = generate_normal(rng, spec)
        else:
            tx = generate_attack(label, rng)
        txs.append(Transaction(tx.hash, tx.bytecode, tx.value, int(ts), label))
    meta = {"seed": spec.seed, "generator_version": GENERATOR_VERSION, "note": "synthetic attack-transaction dataset"}
    return Dataset(tuple(txs), meta)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_generated(spec: GenSpec, path) -> Dataset:
    """Generate, save the dataset and a sidecar JSON with every GenSpec field."""
    d = generate_dataset(spec)
    save_dataset(d, path)
    meta = dict(d.meta)
    meta["spec"] = spec.to_dict()
    meta["class_counts"] = {label.name: n for label, n in class_counts(spec).items()}
    sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return d
