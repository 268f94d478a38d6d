"""Broadcast-only TESLA: key chain, schedule, and receiver-side verification.

Verification order follows the receiver algorithm: receipt safety against the
GIC first, then the commitment (integrity), then the key chain (authenticity).
A tuple that fails receipt safety is never looked at cryptographically.
"""

from __future__ import annotations

import enum
import hmac
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .crypto import DEFAULT_PRIMITIVES, Primitives, Signer, Verifier, truncate_bits

ROOT_CONTEXT = b"gictime/tesla-root/v1|"


def _link(primitives: Primitives, index: int, key: bytes, n_k: int) -> bytes:
    # index salts each link so a key cannot be replayed at another chain position
    return truncate_bits(primitives.hash(b"link" + index.to_bytes(4, "big") + key), n_k)


@dataclass(frozen=True)
class RootCommitment:
    root: bytes
    length: int
    signature: bytes = b""

    def signed_bytes(self) -> bytes:
        return ROOT_CONTEXT + self.length.to_bytes(4, "big") + self.root

    def verify(self, verifier: Verifier) -> bool:
        return verifier.verify(self.signature, self.signed_bytes())


@dataclass(frozen=True)
class KeyChain:
    seed: bytes
    keys: tuple[bytes, ...]
    n_k: int
    root_commitment: RootCommitment

    @property
    def root(self) -> bytes:
        return self.keys[0]

    def __len__(self) -> int:
        return len(self.keys)


def derive_chain(
    seed: bytes,
    length: int,
    n_k: int = 128,
    signer: Signer | None = None,
    primitives: Primitives = DEFAULT_PRIMITIVES,
) -> KeyChain:
    """Build a chain with ``keys[i] = H(i, keys[i+1])``; ``keys[0]`` is the root.

    Keys are released in increasing index order, so the key at index ``i``
    hashes down to the root in exactly ``i`` steps.
    """
    if length < 1:
        raise ValueError("chain length must be at least 1")
    keys = [truncate_bits(primitives.hash(b"seed" + seed), n_k)]
    for index in range(length - 2, -1, -1):
        keys.append(_link(primitives, index, keys[-1], n_k))
    keys.reverse()
    commitment = RootCommitment(root=keys[0], length=length)
    if signer is not None:
        commitment = RootCommitment(keys[0], length, signer.sign(commitment.signed_bytes()))
    return KeyChain(seed=seed, keys=tuple(keys), n_k=n_k, root_commitment=commitment)


def verify_key(
    key: bytes,
    index: int,
    root: bytes,
    max_steps: int | None = None,
    primitives: Primitives = DEFAULT_PRIMITIVES,
) -> bool:
    if index < 0 or (max_steps is not None and index > max_steps):
        return False
    n_k = len(root) * 8
    if len(key) != len(root):
        return False
    for j in range(index - 1, -1, -1):
        key = _link(primitives, j, key, n_k)
    return hmac.compare_digest(key, root)


def commit(key: bytes, message: bytes, n_h: int, primitives: Primitives = DEFAULT_PRIMITIVES) -> bytes:
    return truncate_bits(primitives.mac(key, message), n_h)


@dataclass(frozen=True)
class MhkTuple:
    """A message, its commitment, and the schedule of the key that opens it.

    Times are provider-frame nanoseconds.
    """

    message: bytes
    commitment: bytes
    key_index: int
    t_m: int
    t_h: int
    t_k: int

    @property
    def spread(self) -> int:
        return min(self.t_k - self.t_h, self.t_k - self.t_m)


def compute_theta(schedule: Sequence[MhkTuple]) -> int:
    """Constellation-wide key-disclosure delay: the smallest commitment-to-key spread."""
    if not schedule:
        raise ValueError("schedule is empty")
    for item in schedule:
        if item.t_k <= max(item.t_m, item.t_h):
            raise ValueError(f"key {item.key_index} is released before its message/commitment")
    return min(item.spread for item in schedule)


@dataclass(frozen=True)
class TeslaInstance:
    schedule: tuple[MhkTuple, ...]
    chain: KeyChain
    theta_big: int
    label: str = "tesla"
    n_h: int = 32

    def __post_init__(self):
        if self.theta_big <= 0:
            raise ValueError("key-disclosure delay must be positive")
        if self.schedule and compute_theta(self.schedule) != self.theta_big:
            raise ValueError("theta_big does not match the schedule")

    def key(self, index: int) -> bytes:
        return self.chain.keys[index]

    def tuple_for(self, key_index: int) -> MhkTuple:
        for item in self.schedule:
            if item.key_index == key_index:
                return item
        raise KeyError(key_index)


def build_instance(
    chain: KeyChain,
    messages: Sequence[bytes],
    start: int,
    interval: int,
    theta_big: int,
    label: str = "tesla",
    n_h: int = 32,
    primitives: Primitives = DEFAULT_PRIMITIVES,
) -> TeslaInstance:
    """Simple m-h-k cadence: message and commitment together, key ``theta_big`` later."""
    if len(messages) > len(chain) - 1:
        raise ValueError(f"chain of {len(chain)} keys can open at most {len(chain) - 1} messages")
    schedule = []
    for i, message in enumerate(messages):
        index = i + 1
        t_h = start + i * interval
        schedule.append(
            MhkTuple(
                message=message,
                commitment=commit(chain.keys[index], message, n_h, primitives),
                key_index=index,
                t_m=t_h,
                t_h=t_h,
                t_k=t_h + theta_big,
            )
        )
    return TeslaInstance(tuple(schedule), chain, theta_big, label, n_h)


class ReceiptVerdict(enum.Enum):
    RECEIPT_SAFE = "receipt_safe"
    RECEIPT_UNSAFE = "receipt_unsafe"
    INTEGRITY_FAIL = "integrity_fail"
    AUTHENTICITY_FAIL = "authenticity_fail"
    AUTHENTIC = "authentic"


def _latest(times: int | Iterable[int]) -> int:
    if isinstance(times, int):
        return times
    return max(times)


def receipt_safety_check(
    tau_m: int | Iterable[int],
    tau_h: int | Iterable[int],
    t_k: int,
    lag_bound: int,
) -> bool:
    """``max(tau_m, tau_h) < t_k - lag_bound``.

    Receipt times are GIC readings; ``t_k`` is the scheduled release in
    provider time.  Several messages or commitments per key may be passed as
    iterables; the latest one governs.
    """
    return max(_latest(tau_m), _latest(tau_h)) < t_k - lag_bound


def authenticate(
    item: MhkTuple,
    released_key: bytes | None,
    chain_root: bytes,
    lag_bound: int,
    receipt_times: tuple[int | Iterable[int], int | Iterable[int]],
    chain_length: int | None = None,
    primitives: Primitives = DEFAULT_PRIMITIVES,
) -> ReceiptVerdict:
    """Run the three receiver checks in order and report the first failure.

    ``chain_root`` must already be verified against the provider signature.
    Without a released key the best available answer is ``RECEIPT_SAFE``.
    """
    tau_m, tau_h = receipt_times
    if not receipt_safety_check(tau_m, tau_h, item.t_k, lag_bound):
        return ReceiptVerdict.RECEIPT_UNSAFE
    if released_key is None:
        return ReceiptVerdict.RECEIPT_SAFE
    expected = commit(released_key, item.message, len(item.commitment) * 8, primitives)
    if not hmac.compare_digest(expected, item.commitment):
        return ReceiptVerdict.INTEGRITY_FAIL
    max_steps = chain_length - 1 if chain_length is not None else None
    if not verify_key(released_key, item.key_index, chain_root, max_steps, primitives):
        return ReceiptVerdict.AUTHENTICITY_FAIL
    return ReceiptVerdict.AUTHENTIC


def security_level(n_h: int, n_k: int) -> int:
    """Bits of forgery resistance before key release."""
    if n_h <= 0 or n_k <= 0:
        raise ValueError("bit lengths must be positive")
    return min(n_h, n_k)
