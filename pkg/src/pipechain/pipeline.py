"""Root-hash pipeline: a tree of committees recomputing the state root.

Leaf committees each own one contiguous address portion and keep its pruned
subtree current with the newest confirmed sequence; inner committees fold
children digests pairwise, one tier per round.  The top of the tree emits
one constant-size block per round, lagging entry by the pipeline depth.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

from .ledger import Block, block_hash
from .merkle import (
    ConflictingPlaceholder,
    HashCounter,
    PathNotMaterialized,
    PrunedTree,
    build_pruned,
    node_hash,
)
from .provisioning import fold_levels


@dataclass(frozen=True)
class TierSpec:
    """One tier of inner committees, counted bottom-up from the leaves."""

    count: int
    child_count: int
    owned_levels: int
    base_level: int  # levels above the portion roots already folded below


@dataclass(frozen=True)
class RpcTopology:
    address_bits: int
    leaf_count: int
    hash_budget: int
    portion_levels: int  # tree levels above the portion roots (log2 leaf_count)
    portion_bits: int  # tree levels inside one portion (address_bits - portion_levels)
    tiers: tuple[TierSpec, ...]
    rpc_levels: int
    stages: int

    @property
    def inner_count(self) -> int:
        return sum(t.count for t in self.tiers)

    def portion_of(self, account: int) -> int:
        return account >> self.portion_bits

    def portion_range(self, portion: int) -> tuple[int, int]:
        lo = portion << self.portion_bits
        return lo, lo + (1 << self.portion_bits)

    def spine_positions(self, portion: int) -> tuple[tuple[int, int], ...]:
        """Global (level, index) of every pruned sibling a node storing this
        portion needs in order to fold up to the state root."""
        return tuple(
            (self.portion_bits + t, (portion >> t) ^ 1)
            for t in range(self.portion_levels)
        )

    def wnode_owner(self, level: int, index: int):
        """Committee computing the digest at a global position at or above
        the portion roots: ("leaf", portion) or ("inner", tier, index)."""
        above = level - self.portion_bits
        if above == 0:
            return ("leaf", index)
        if above < 0 or above > self.portion_levels:
            raise ValueError(f"position ({level}, {index}) not owned by the pipeline")
        for t, tier in enumerate(self.tiers):
            if tier.base_level < above <= tier.base_level + tier.owned_levels:
                top = tier.base_level + tier.owned_levels
                return ("inner", t, index >> (top - above))
        raise ValueError(f"no tier owns level offset {above}")

    def children_of(self, tier_index: int, index: int) -> tuple[tuple, ...]:
        """Ids of the committees feeding one inner committee, in fold order."""
        tier = self.tiers[tier_index]
        first = index * tier.child_count
        if tier_index == 0:
            return tuple(("leaf", first + c) for c in range(tier.child_count))
        return tuple(("inner", tier_index - 1, first + c) for c in range(tier.child_count))


def build_topology(leaf_count: int, hash_budget: int, address_bits: int) -> RpcTopology:
    if leaf_count < 1 or leaf_count & (leaf_count - 1):
        raise ValueError("leaf_count must be a power of two")
    portion_levels = leaf_count.bit_length() - 1
    if portion_levels >= address_bits:
        raise ValueError("every portion needs at least one address bit")
    per_tier = fold_levels(hash_budget)
    tiers = []
    base = 0
    while base < portion_levels:
        owned = min(per_tier, portion_levels - base)
        tiers.append(
            TierSpec(
                count=1 << (portion_levels - base - owned),
                child_count=1 << owned,
                owned_levels=owned,
                base_level=base,
            )
        )
        base += owned
    rpc_levels = 1 + len(tiers)
    return RpcTopology(
        address_bits=address_bits,
        leaf_count=leaf_count,
        hash_budget=hash_budget,
        portion_levels=portion_levels,
        portion_bits=address_bits - portion_levels,
        tiers=tuple(tiers),
        rpc_levels=rpc_levels,
        stages=rpc_levels + 1,
    )


def fold_digests(digests, counter: HashCounter | None = None):
    """Pairwise-fold a power-of-two digest list; returns (top, levels above
    the input, bottom first)."""
    n = len(digests)
    if n < 1 or n & (n - 1):
        raise ValueError("fold needs a power-of-two digest count")
    levels = []
    current = list(digests)
    while len(current) > 1:
        current = [
            node_hash(current[i], current[i + 1]) for i in range(0, len(current), 2)
        ]
        if counter is not None:
            counter.internal += len(current)
        levels.append(current)
    return current[0], levels


class LeafRpc:
    """Keeps one address portion's subtree synced to the confirmed stream.

    Each round it receives the newest confirmed transactions touching its
    portion (each carrying verified balance proofs), grafts proofs for
    addresses it has never materialized, replays its retained window for
    those fresh paths, applies the round's transfers, and returns the new
    portion digest.
    """

    def __init__(self, topology: RpcTopology, portion: int, genesis_entries) -> None:
        self.topology = topology
        self.portion = portion
        self.range = topology.portion_range(portion)
        self.counters = HashCounter()
        self.tree = build_pruned(
            genesis_entries,
            topology.address_bits,
            root_level=topology.portion_bits,
            root_index=portion,
            counters=self.counters,
        )
        self.last_digest = self.tree.root_hash()
        # the newest `stages` past inputs, oldest first; replayed only for
        # freshly grafted paths (whose proofs are based before this window)
        self.window: deque[tuple] = deque([()] * topology.stages, maxlen=topology.stages)
        self.failed_rounds = 0

    def in_range(self, account: int) -> bool:
        lo, hi = self.range
        return lo <= account < hi

    def _advance(self, incoming) -> bytes:
        tree = self.tree
        fresh: set[int] = set()
        for tx in incoming:
            for account, proof in ((tx.src, tx.src_proof), (tx.dst, tx.dst_proof)):
                if self.in_range(account) and not tree.has_leaf(account):
                    sub = replace(proof, siblings=proof.siblings[: tree.root_level])
                    tree.merge_proof(sub, prefer_existing=True)
                    fresh.add(account)
        if fresh:
            # catch freshly grafted balances up to the present: their proofs
            # are based before this window (healthy runs: no-op, since any
            # address touched in-window is already materialized)
            for past in self.window:
                for tx in past:
                    if tx.src in fresh:
                        tree.apply_update(tx.src, tree.balance_of(tx.src) - tx.amount)
                    if tx.dst in fresh:
                        tree.apply_update(tx.dst, tree.balance_of(tx.dst) + tx.amount)
        for tx in incoming:
            if self.in_range(tx.src):
                tree.apply_update(tx.src, tree.balance_of(tx.src) - tx.amount)
            if self.in_range(tx.dst):
                tree.apply_update(tx.dst, tree.balance_of(tx.dst) + tx.amount)
        return tree.root_hash()

    def process_round(self, incoming) -> tuple[bytes, bool]:
        """Returns (portion digest, ok). On missing/conflicting proof
        material the round is flagged and the previous digest stands."""
        ok = True
        try:
            digest = self._advance(incoming)
        except (PathNotMaterialized, ConflictingPlaceholder):
            self.failed_rounds += 1
            ok = False
            digest = self.last_digest
        self.window.append(tuple(incoming))
        self.last_digest = digest
        return digest, ok


class InnerRpc:
    """Folds its children's digests up a fixed slice of the tree."""

    def __init__(self, topology: RpcTopology, tier_index: int, index: int) -> None:
        self.topology = topology
        self.tier_index = tier_index
        self.index = index
        self.spec = topology.tiers[tier_index]
        self.counters = HashCounter()

    def fold_round(self, child_digests) -> tuple[bytes, dict]:
        """Returns (top digest, {global (level, index): digest} for every
        node this committee computed this round)."""
        spec = self.spec
        if len(child_digests) != spec.child_count:
            raise ValueError(
                f"tier {self.tier_index} rpc {self.index} expects "
                f"{spec.child_count} child digests, got {len(child_digests)}"
            )
        top, levels = fold_digests(child_digests, self.counters)
        computed: dict[tuple[int, int], bytes] = {}
        base = self.topology.portion_bits + spec.base_level
        for step, row in enumerate(levels):
            level = base + step + 1
            start = self.index << (spec.owned_levels - step - 1)
            for offset, digest in enumerate(row):
                computed[(level, start + offset)] = digest
        return top, computed


def next_block(prev_block: Block, state_root: bytes) -> Block:
    return Block(prev_block.height + 1, block_hash(prev_block), state_root)
