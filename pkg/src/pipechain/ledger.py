"""Ledger vocabulary: transactions, blocks, history windows, routing."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .merkle import BalanceProof, verify_proof


GENESIS_PREV_HASH = b"\x00" * 32


def transaction_id(src: int, dst: int, amount: int, entry_round: int, nonce: int) -> bytes:
    payload = b"".join(
        v.to_bytes(8, "big") for v in (src, dst, amount, entry_round, nonce)
    )
    return hashlib.sha256(payload).digest()


@dataclass(frozen=True)
class Transaction:
    """A transfer carrying balance proofs for both touched accounts.

    Construction never validates; admission rejects malformed instances.
    """

    src: int
    dst: int
    amount: int
    entry_round: int
    nonce: int
    src_proof: BalanceProof | None = None
    dst_proof: BalanceProof | None = None
    txid: bytes = b""

    def __post_init__(self) -> None:
        if not self.txid:
            object.__setattr__(
                self,
                "txid",
                transaction_id(self.src, self.dst, self.amount, self.entry_round, self.nonce),
            )

    def to_json_dict(self) -> dict:
        return {
            "src": self.src,
            "dst": self.dst,
            "amount": self.amount,
            "entry_round": self.entry_round,
            "nonce": self.nonce,
            "id": self.txid.hex(),
        }


@dataclass(frozen=True)
class AcceptedSeq:
    """One committee's confirmed, ordered output for one entry round."""

    committee: int
    round_index: int
    txs: tuple[Transaction, ...]


@dataclass(frozen=True)
class Block:
    """Constant-size block: 8-byte height plus two digests (72 bytes)."""

    height: int
    prev_hash: bytes
    state_root: bytes

    def to_bytes(self) -> bytes:
        return self.height.to_bytes(8, "big") + self.prev_hash + self.state_root

    def to_json_dict(self) -> dict:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash.hex(),
            "state_root": self.state_root.hex(),
        }


def block_hash(block: Block) -> bytes:
    return hashlib.sha256(block.to_bytes()).digest()


class BlockHistory:
    """The newest ``depth`` blocks; anything older is unusable as proof base."""

    def __init__(self, depth: int = 2) -> None:
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.depth = depth
        self._blocks: dict[int, Block] = {}

    def push(self, block: Block) -> None:
        if self._blocks and block.height <= max(self._blocks):
            raise ValueError("history must advance monotonically")
        self._blocks[block.height] = block
        while len(self._blocks) > self.depth:
            del self._blocks[min(self._blocks)]

    def get(self, height: int) -> Block | None:
        return self._blocks.get(height)

    def heights(self) -> tuple[int, ...]:
        return tuple(sorted(self._blocks))

    def newest(self) -> Block:
        return self._blocks[max(self._blocks)]

    def __contains__(self, height: int) -> bool:
        return height in self._blocks


def cc_index(src: int, committee_count: int) -> int:
    """Confirmation committee responsible for a source account."""
    digest = hashlib.sha256(src.to_bytes(8, "big")).digest()
    return int.from_bytes(digest[:8], "big") % committee_count


def portion_index(account: int, address_bits: int, leaf_count: int) -> int:
    """Leaf committee owning an address: contiguous equal address portions."""
    if leaf_count & (leaf_count - 1):
        raise ValueError("leaf_count must be a power of two")
    return account >> (address_bits - (leaf_count.bit_length() - 1))


def syntactic_failure(tx: Transaction, round_index: int, history: BlockHistory):
    """First admission failure for tx, plus how many proof folds were done.

    Checks shape, then that each proof's base block is still inside the
    truncated history, then the proofs themselves against that base's root.
    """
    folds = 0
    if tx.amount <= 0:
        return "amount", folds
    if tx.src == tx.dst:
        return "self_transfer", folds
    for proof in (tx.src_proof, tx.dst_proof):
        if proof is None:
            return "missing_proof", folds
        if proof.base_height >= round_index:
            return "future_proof", folds
        base = history.get(proof.base_height)
        if base is None:
            return "expired_proof", folds
        folds += 1
        if not verify_proof(proof, base.state_root):
            return "bad_proof", folds
    return None, folds


def syntactic_check(tx: Transaction, round_index: int, history: BlockHistory) -> bool:
    return syntactic_failure(tx, round_index, history)[0] is None
