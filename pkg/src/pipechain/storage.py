"""Storage nodes: balance-proof servers for assigned address ranges.

A node keeps the pruned tree of its range plus frontier placeholders (the
digests of every external sibling subtree on the way to the root), applies
each block's confirmed transactions as they leave the pipeline, and cross
checks its recomputed root against the block it just received.
"""

from __future__ import annotations

from .merkle import (
    BalanceProof,
    HashCounter,
    NotStored,
    PrunedTree,
    leaf_digest,
    node_hash,
)


class StateDivergence(Exception):
    """Locally recomputed state root disagrees with an emitted block."""


class StorageNode:
    def __init__(
        self,
        topology,
        portion: int,
        replica: int,
        genesis_entries,
        spine_digests,
        genesis_block,
    ) -> None:
        self.topology = topology
        self.portion = portion
        self.replica = replica
        self.range = topology.portion_range(portion)
        self.counters = HashCounter()
        tree = PrunedTree(topology.address_bits, counters=self.counters)
        if topology.portion_levels:
            tree.ensure_node(topology.portion_bits, portion)
            for position, digest in spine_digests:
                tree.set_placeholder(*position, digest)
        for account, balance in genesis_entries:
            tree.ensure_path(account)
            tree.apply_update(account, balance)
        self.tree = tree
        if tree.root_hash() != genesis_block.state_root:
            raise StateDivergence("genesis root mismatch")
        self.latest_block = genesis_block

    def in_range(self, account: int) -> bool:
        lo, hi = self.range
        return lo <= account < hi

    def apply_confirmed(self, txs, frontier, new_block) -> None:
        """Apply one block's worth of relevant transactions plus the frontier
        digests published for the same entry round, then check the root."""
        tree = self.tree
        for position, digest in sorted(frontier.items()):
            tree.set_placeholder(*position, digest)
        for tx in txs:
            if self.in_range(tx.src):
                tree.ensure_path(tx.src)
                tree.apply_update(tx.src, tree.balance_of(tx.src) - tx.amount)
            if self.in_range(tx.dst):
                tree.ensure_path(tx.dst)
                tree.apply_update(tx.dst, tree.balance_of(tx.dst) + tx.amount)
        root = tree.root_hash()
        if root != new_block.state_root:
            raise StateDivergence(
                f"storage {self.portion}/{self.replica} root {root.hex()[:16]} != "
                f"block {new_block.height} root {new_block.state_root.hex()[:16]}"
            )
        self.latest_block = new_block

    def serve_proof(self, account: int) -> BalanceProof:
        """Balance proof against the newest applied block; untouched in-range
        addresses get their zero path materialized on demand."""
        if not self.in_range(account):
            raise NotStored(f"account {account} outside stored range")
        self.tree.ensure_path(account)
        return self.tree.make_proof(account, self.latest_block.height)

    def stored_accounts(self):
        return sorted(self.tree.materialized_accounts())

    def audit_stored(self) -> tuple[int, int]:
        """Re-derive every stored account's proof chain against the newest
        block root; returns (checked, failed).  Same math as serve_proof +
        verify_proof, folded in place."""
        tree = self.tree
        root = self.latest_block.state_root
        digest_at = tree.digest_at
        checked = failed = 0
        for account in self.stored_accounts():
            digest = leaf_digest(account, tree.balance_of(account))
            for level in range(tree.root_level):
                sibling = digest_at(level, (account >> level) ^ 1)
                if (account >> level) & 1:
                    digest = node_hash(sibling, digest)
                else:
                    digest = node_hash(digest, sibling)
            checked += 1
            if digest != root:
                failed += 1
        return checked, failed
