"""Deterministic round engine wiring committees, pipeline, storage, clients.

Everything advances in lockstep rounds.  Messages produced in round i are
delivered in round i+1 through per-destination queues; the only broadcast is
the newly emitted block.  Within a round the stages run in dependency order
(deliver, storage apply, client submissions, confirmation, leaf folds, inner
tiers bottom-up, block emission), which is observationally equivalent to the
committees running concurrently since all cross-committee data crosses the
round boundary through the queues.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, fields

from .committee import ConfirmationCommittee
from .ledger import (
    GENESIS_PREV_HASH,
    Block,
    BlockHistory,
    Transaction,
    cc_index,
)
from .merkle import DEFAULT_DIGESTS, PathNotMaterialized, build_pruned, verify_proof
from .oracle import LedgerOracle, NonNegativityViolation
from .pipeline import InnerRpc, LeafRpc, build_topology, fold_digests, next_block
from .storage import StateDivergence, StorageNode


@dataclass(frozen=True)
class SimConfig:
    """Complete description of one simulated deployment.

    f is the total client submissions per round (one round is the network
    delay bound, so a rate in transactions per second times the round length
    collapses to this single number), e the balance changes one leaf committee
    is provisioned for, j the hash budget of one pipeline committee, rho the
    storage replication factor.
    """

    seed: int = 1
    address_bits: int = 16
    f: int = 50
    n_c: int = 4
    leaf_count: int = 8
    j: int = 7
    e: int = 13
    rho: int = 1
    rounds: int = 200
    initial_accounts: int = 256
    initial_balance: int = 1_000_000
    oracle_enabled: bool = True

    def validated(self) -> "SimConfig":
        if self.address_bits < 1 or self.address_bits > 40:
            raise ValueError("address_bits out of range")
        for name in ("f", "n_c", "leaf_count", "j", "e", "rho", "rounds",
                     "initial_accounts", "initial_balance"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.leaf_count & (self.leaf_count - 1):
            raise ValueError("leaf_count must be a power of two")
        if self.leaf_count.bit_length() - 1 >= self.address_bits:
            raise ValueError("leaf_count too large for the address space")
        if self.initial_accounts > (1 << self.address_bits):
            raise ValueError("initial_accounts exceeds the address space")
        if not isinstance(self.oracle_enabled, bool):
            raise ValueError("oracle_enabled must be a boolean")
        return self

    @classmethod
    def from_mapping(cls, data) -> "SimConfig":
        known = {f.name: f.type for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for name, value in data.items():
            if name == "oracle_enabled":
                if not isinstance(value, bool):
                    raise ValueError("oracle_enabled must be a boolean")
            elif not isinstance(value, int) or isinstance(value, bool):
                raise ValueError(f"config key {name} must be an integer")
            kwargs[name] = value
        return cls(**kwargs).validated()

    def to_json_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class _Meter:
    msgs_in: int = 0
    msgs_out: int = 0
    hashes: int = 0
    processed: int = 0
    accepted: int = 0
    discarded: int = 0


@dataclass
class SimResult:
    config: SimConfig
    reports: list
    summary: dict

    @property
    def ok(self) -> bool:
        return self.summary["fatal"] is None and not self.summary["diverged"]


def report_lines(result: SimResult):
    """JSON-lines serialization: one object per round, then the summary."""
    import json

    for row in result.reports:
        yield json.dumps(row, sort_keys=True, separators=(",", ":"))
    yield json.dumps({"summary": result.summary}, sort_keys=True, separators=(",", ":"))


class _Bus:
    """In-flight messages keyed by delivery round and destination."""

    def __init__(self) -> None:
        self._queues: dict[int, dict] = {}
        self.pending = 0

    def send(self, deliver_round: int, dest, payload) -> None:
        self._queues.setdefault(deliver_round, {}).setdefault(dest, []).append(payload)
        self.pending += 1

    def pop_round(self, round_index: int) -> dict:
        for stale in [r for r in self._queues if r < round_index]:
            raise RuntimeError(f"undelivered messages for round {stale}")
        inbox = self._queues.pop(round_index, {})
        self.pending -= sum(len(v) for v in inbox.values())
        return inbox


class Simulation:
    def __init__(
        self,
        config: SimConfig,
        *,
        balanced_workload: bool = False,
        audit_proofs: bool = False,
        audit_sample: int = 4,
        expired_injection_rate: int = 0,
        drop_confirmed_round: int | None = None,
        interleave_probe: tuple[int, int] | None = None,
    ) -> None:
        cfg = config.validated()
        if balanced_workload and cfg.f % cfg.n_c:
            raise ValueError("balanced workload needs n_c | f")
        self.config = cfg
        self.balanced_workload = balanced_workload
        self.audit_proofs = audit_proofs
        self.audit_sample = audit_sample
        self.expired_injection_rate = expired_injection_rate
        self.drop_confirmed_round = drop_confirmed_round

        topo = build_topology(cfg.leaf_count, cfg.j, cfg.address_bits)
        self.topology = topo
        self.stages = topo.stages

        # -- genesis state ------------------------------------------------
        stride = (1 << cfg.address_bits) // cfg.initial_accounts
        genesis_entries = [
            (i * stride, cfg.initial_balance) for i in range(cfg.initial_accounts)
        ]
        genesis_tree = build_pruned(genesis_entries, cfg.address_bits)
        self.genesis_root = genesis_tree.root_hash()
        self.genesis_block = Block(0, GENESIS_PREV_HASH, self.genesis_root)
        self.latest_block = self.genesis_block
        self.history = BlockHistory(2)
        self.history.push(self.genesis_block)

        def tree_digest(level: int, index: int) -> bytes:
            try:
                return genesis_tree.digest_at(level, index)
            except PathNotMaterialized:
                return DEFAULT_DIGESTS[level]

        by_portion: dict[int, list] = {m: [] for m in range(cfg.leaf_count)}
        for account, balance in genesis_entries:
            by_portion[topo.portion_of(account)].append((account, balance))

        self.ccs = [
            ConfirmationCommittee(k, self.stages, cfg.address_bits)
            for k in range(cfg.n_c)
        ]
        self.leaf_rpcs = [
            LeafRpc(topo, m, by_portion[m]) for m in range(cfg.leaf_count)
        ]
        self.inner_rpcs = {
            (t, p): InnerRpc(topo, t, p)
            for t, tier in enumerate(topo.tiers)
            for p in range(tier.count)
        }
        self.storage = {
            (m, r): StorageNode(
                topo,
                m,
                r,
                by_portion[m],
                [(pos, tree_digest(*pos)) for pos in topo.spine_positions(m)],
                self.genesis_block,
            )
            for m in range(cfg.leaf_count)
            for r in range(cfg.rho)
        }
        self._storage_buffers = {key: {} for key in self.storage}

        # which storage nodes need each published spine digest
        self._spine_need: dict[tuple[int, int], list] = {}
        for m in range(cfg.leaf_count):
            for pos in topo.spine_positions(m):
                self._spine_need.setdefault(pos, []).extend(
                    ("storage", m, r) for r in range(cfg.rho)
                )

        self.committee_ids = (
            [("cc", k) for k in range(cfg.n_c)]
            + [("leaf", m) for m in range(cfg.leaf_count)]
            + [("inner",) + key for key in sorted(self.inner_rpcs)]
            + [("storage",) + key for key in sorted(self.storage)]
        )

        # -- pipeline latches: feed genesis digests into round 1 ----------
        self.bus = _Bus()
        level_digests = [leaf.last_digest for leaf in self.leaf_rpcs]
        for t, tier in enumerate(topo.tiers):
            tops = []
            for p in range(tier.count):
                group = level_digests[p * tier.child_count : (p + 1) * tier.child_count]
                for ordinal, digest in enumerate(group):
                    self.bus.send(1, ("inner", t, p), ("digest", ordinal, digest))
                tops.append(fold_digests(group)[0])
            level_digests = tops
        if level_digests[0] != self.genesis_root:
            raise RuntimeError("pipeline genesis fold disagrees with genesis tree")

        # -- clients and oracle --------------------------------------------
        self.client_view = dict(genesis_entries)
        self.oracle = (
            LedgerOracle(cfg.address_bits, dict(genesis_entries))
            if cfg.oracle_enabled
            else None
        )
        if self.oracle is not None and self.oracle.root() != self.genesis_root:
            raise RuntimeError("oracle genesis root disagrees with genesis tree")
        self.supply0 = cfg.initial_accounts * cfg.initial_balance
        self._nonce = 0
        self._cc_of: dict[int, int] = {}
        self.expected_roots: dict[int, bytes] = {}
        self.accepted_by_entry: dict[int, tuple] = {}
        self.accepted_counts: dict[int, int] = {}
        self.emitted_for_entry: dict[int, int] = {}
        self.injected_ids: set[bytes] = set()
        self.injected_outcomes: dict[str, int] = {}
        self._proof_pool: deque = deque(maxlen=4)

        self._probe_rounds: set[int] = set()
        self._probe_per_round = 0
        if interleave_probe and cfg.oracle_enabled:
            count, per_round = interleave_probe
            rng = random.Random(f"{cfg.seed}:probe")
            candidates = range(2, cfg.rounds + 1)
            self._probe_rounds = set(
                rng.sample(candidates, min(count, len(candidates)))
            )
            self._probe_per_round = per_round

    # -- helpers -----------------------------------------------------------

    def _committee_of(self, account: int) -> int:
        got = self._cc_of.get(account)
        if got is None:
            got = cc_index(account, self.config.n_c)
            self._cc_of[account] = got
        return got

    def _serve_proof(self, account: int, meters):
        node_key = (self.topology.portion_of(account), 0)
        node = self.storage[node_key]
        meter = meters[("storage",) + node_key]
        meter.msgs_in += 1
        meter.msgs_out += 1
        return node.serve_proof(account)

    def _generate_workload(self, entry_round: int, meters):
        cfg = self.config
        rng = random.Random(f"{cfg.seed}:workload:{entry_round}")
        view = self.client_view
        funded = [a for a in sorted(view) if view[a] > 0]
        truncated = False
        if self.balanced_workload:
            per_cc = cfg.f // cfg.n_c
            buckets: list[list[int]] = [[] for _ in range(cfg.n_c)]
            for account in funded:
                buckets[self._committee_of(account)].append(account)
            srcs = []
            for bucket in buckets:
                if len(bucket) < per_cc:
                    truncated = True
                srcs.extend(rng.sample(bucket, min(per_cc, len(bucket))))
        else:
            if len(funded) < cfg.f:
                truncated = True
            srcs = rng.sample(funded, min(cfg.f, len(funded)))
        involved = set(srcs)
        space = 1 << cfg.address_bits
        txs = []
        for src in srcs:
            while True:
                dst = rng.randrange(space)
                if dst not in involved:
                    break
            involved.add(dst)
            src_proof = self._serve_proof(src, meters)
            dst_proof = self._serve_proof(dst, meters)
            assert src_proof.balance == view[src], "client view out of sync"
            assert dst_proof.balance == view.get(dst, 0), "client view out of sync"
            amount = rng.randint(1, src_proof.balance)
            self._nonce += 1
            txs.append(
                Transaction(src, dst, amount, entry_round, self._nonce, src_proof, dst_proof)
            )
        return txs, truncated

    def _inject_expired(self, current_round: int, entry_round: int, meters):
        """Craft submissions whose source proofs are already outside the
        truncated history at admission time (base = entry_round - 4)."""
        cfg = self.config
        rng = random.Random(f"{cfg.seed}:inject:{current_round}")
        view = self.client_view
        funded = [a for a in sorted(view) if view[a] > 0]
        sample = rng.sample(funded, min(self.expired_injection_rate, len(funded)))
        self._proof_pool.append(
            (current_round, [(a, self._serve_proof(a, meters)) for a in sample])
        )
        txs = []
        for served_round, items in self._proof_pool:
            if served_round != current_round - 2:
                continue
            for account, stale_proof in items:
                while True:
                    dst = rng.randrange(1 << cfg.address_bits)
                    if dst != account:
                        break
                dst_proof = self._serve_proof(dst, meters)
                self._nonce += 1
                tx = Transaction(
                    account, dst, 1, entry_round, self._nonce, stale_proof, dst_proof
                )
                self.injected_ids.add(tx.txid)
                txs.append(tx)
        return txs

    @staticmethod
    def _interleave(per_committee, rng) -> list:
        queues = [deque(seq) for seq in per_committee if seq]
        merged = []
        while queues:
            pick = rng.randrange(len(queues))
            merged.append(queues[pick].popleft())
            if not queues[pick]:
                del queues[pick]
        return merged

    def _probe_interleavings(self, round_index: int, per_committee, expected: bytes):
        cfg = self.config
        checks = mismatches = 0
        base = self._probe_fork
        for i in range(self._probe_per_round):
            rng = random.Random(f"{cfg.seed}:probe:{round_index}:{i}")
            order = self._interleave(per_committee, rng)
            trial = base.fork()
            checks += 1
            try:
                got = trial.apply_sequence(order)
            except NonNegativityViolation:
                mismatches += 1
                continue
            if got != expected:
                mismatches += 1
        return checks, mismatches

    # -- the round ----------------------------------------------------------

    def run(self) -> SimResult:
        cfg = self.config
        reports = []
        totals = {
            "accepted": 0,
            "received": 0,
            "discard_reasons": {},
            "proof_disagreements": 0,
            "conservative_rejections": 0,
            "truncated_rounds": 0,
            "audit_checked": 0,
            "audit_failed": 0,
            "oracle_matches": 0,
            "oracle_mismatches": 0,
            "interleave_checks": 0,
            "interleave_mismatches": 0,
            "probe_rounds": 0,
            "supply_min": self.supply0,
            "supply_max": self.supply0,
            "leaf_failed_rounds": 0,
        }
        peaks = {"cc_tx": 0, "rpc_hashes": 0, "committee_msgs": 0, "backlog": 0}
        fatal = None
        diverged = False
        rounds_run = 0

        for round_index in range(1, cfg.rounds + 1):
            try:
                row = self._round(round_index, totals, peaks)
            except StateDivergence as exc:
                fatal = f"storage divergence: {exc}"
                diverged = True
                break
            except NonNegativityViolation as exc:
                fatal = f"non-negativity violation: {exc}"
                diverged = True
                break
            rounds_run += 1
            reports.append(row)
            if row["oracle"] == "mismatch":
                diverged = True
                fatal = f"oracle divergence at height {row['block_height']}"
                break

        latency_checked = latency_violations = 0
        for entry, height in self.emitted_for_entry.items():
            count = self.accepted_counts.get(entry, 0)
            latency_checked += count
            if count and height != entry + self.stages - 1:
                latency_violations += count

        summary = {
            "config": cfg.to_json_dict(),
            "stages": self.stages,
            "rpc_levels": self.topology.rpc_levels,
            "committees": {
                "cc": cfg.n_c,
                "leaf": cfg.leaf_count,
                "inner": self.topology.inner_count,
                "storage": cfg.leaf_count * cfg.rho,
            },
            "rounds_run": rounds_run,
            "blocks_emitted": rounds_run,
            "block_bytes": len(self.latest_block.to_bytes()),
            "accepted_total": totals["accepted"],
            "received_total": totals["received"],
            "discard_reasons": totals["discard_reasons"],
            "proof_disagreements": totals["proof_disagreements"],
            "conservative_rejections": totals["conservative_rejections"],
            "workload_truncated_rounds": totals["truncated_rounds"],
            "leaf_failed_rounds": totals["leaf_failed_rounds"],
            "supply": {
                "initial": self.supply0,
                "min": totals["supply_min"],
                "max": totals["supply_max"],
            },
            "latency": {
                "checked": latency_checked,
                "violations": latency_violations,
            },
            "audit": {
                "checked": totals["audit_checked"],
                "failed": totals["audit_failed"],
            },
            "oracle": {
                "enabled": cfg.oracle_enabled,
                "matches": totals["oracle_matches"],
                "mismatches": totals["oracle_mismatches"],
            },
            "interleave": {
                "rounds": totals["probe_rounds"],
                "checks": totals["interleave_checks"],
                "mismatches": totals["interleave_mismatches"],
            },
            "injected": {
                "count": len(self.injected_ids),
                "outcomes": self.injected_outcomes,
            },
            "peaks": peaks,
            "diverged": diverged,
            "fatal": fatal,
        }
        return SimResult(cfg, reports, summary)

    def _round(self, round_index: int, totals, peaks) -> dict:
        cfg = self.config
        topo = self.topology
        meters = {cid: _Meter() for cid in self.committee_ids}
        inbox = self.bus.pop_round(round_index)
        # per-item accounting: batched payloads count one message per item
        for cid, payloads in inbox.items():
            meter = meters.get(cid)
            if meter is None:
                continue
            for payload in payloads:
                kind = payload[0]
                if kind == "seq":
                    meter.msgs_in += len(payload[2])
                elif kind == "stxs":
                    meter.msgs_in += len(payload[3])
                elif kind == "frontier":
                    meter.msgs_in += len(payload[1])
                else:
                    meter.msgs_in += 1

        # block emitted last round enters every validator's history
        if self.latest_block.height == round_index - 1 and round_index > 1:
            self.history.push(self.latest_block)
        consumed_entry = round_index - self.stages
        for tx in self.accepted_by_entry.pop(consumed_entry, ()):
            view = self.client_view
            view[tx.src] = view.get(tx.src, 0) - tx.amount
            view[tx.dst] = view.get(tx.dst, 0) + tx.amount

        # -- storage: apply the newest block's confirmed data ---------------
        audit_checked = audit_failed = 0
        for key in sorted(self.storage):
            node = self.storage[key]
            cid = ("storage",) + key
            buffers = self._storage_buffers[key]
            block = None
            for payload in inbox.get(cid, ()):
                kind = payload[0]
                if kind == "stxs":
                    _, entry, committee, txs = payload
                    buffers.setdefault(entry, {"txs": [], "frontier": {}})[
                        "txs"
                    ].append((committee, txs))
                elif kind == "frontier":
                    for pos, entry, digest in payload[1]:
                        buffers.setdefault(entry, {"txs": [], "frontier": {}})[
                            "frontier"
                        ][pos] = digest
                elif kind == "block":
                    block = payload[1]
            if block is not None:
                entry = block.height - self.stages + 1
                parts = buffers.pop(entry, {"txs": [], "frontier": {}})
                txs = [
                    tx
                    for _, batch in sorted(parts["txs"], key=lambda item: item[0])
                    for tx in batch
                ]
                before = node.counters.total()
                node.apply_confirmed(txs, parts["frontier"], block)
                meter = meters[cid]
                meter.processed += len(txs)
                meter.hashes += node.counters.total() - before
                if self.audit_proofs:
                    checked, failed = node.audit_stored()
                    stored = node.stored_accounts()
                    offset = (round_index * self.audit_sample) % max(1, len(stored))
                    sample = stored[offset:][: self.audit_sample]
                    for account in sample:
                        proof = node.serve_proof(account)
                        checked += 1
                        if not verify_proof(proof, node.latest_block.state_root):
                            failed += 1
                    audit_checked += checked
                    audit_failed += failed
        totals["audit_checked"] += audit_checked
        totals["audit_failed"] += audit_failed

        # -- clients: fetch proofs and submit for entry round i+1 -----------
        truncated = False
        if round_index < cfg.rounds:
            entry_round = round_index + 1
            submissions, truncated = self._generate_workload(entry_round, meters)
            if self.expired_injection_rate and round_index >= 3:
                submissions.extend(
                    self._inject_expired(round_index, entry_round, meters)
                )
            for tx in submissions:
                committee = self._committee_of(tx.src)
                self.bus.send(round_index + 1, ("cc", committee), ("tx", tx))
            if truncated:
                totals["truncated_rounds"] += 1

        # -- confirmation committees ----------------------------------------
        merged: list[Transaction] = []
        per_committee_accepted = []
        round_discards = []
        for committee in self.ccs:
            cid = ("cc", committee.index)
            incoming = [
                payload[1]
                for payload in inbox.get(cid, ())
                if payload[0] == "tx"
            ]
            seq, discards, stats = committee.confirm_round(
                incoming, round_index, self.history
            )
            meter = meters[cid]
            meter.processed += stats.received
            meter.accepted += stats.accepted
            meter.discarded += len(discards)
            meter.hashes += stats.hashes
            totals["received"] += stats.received
            totals["accepted"] += stats.accepted
            totals["proof_disagreements"] += stats.proof_disagreements
            for reason, count in stats.discard_reasons.items():
                totals["discard_reasons"][reason] = (
                    totals["discard_reasons"].get(reason, 0) + count
                )
            peaks["cc_tx"] = max(peaks["cc_tx"], stats.received)
            merged.extend(seq.txs)
            per_committee_accepted.append(seq.txs)
            round_discards.extend(discards)
            for tx, reason in discards:
                if tx.txid in self.injected_ids:
                    self.injected_outcomes[reason] = (
                        self.injected_outcomes.get(reason, 0) + 1
                    )

        self.accepted_by_entry[round_index] = tuple(merged)
        self.accepted_counts[round_index] = len(merged)

        # -- oracle bookkeeping for this entry round -------------------------
        supply = None
        if self.oracle is not None:
            for tx, reason in round_discards:
                if reason == "insufficient" and self.oracle.balance(tx.src) >= tx.amount:
                    totals["conservative_rejections"] += 1
            probing = round_index in self._probe_rounds
            if probing:
                self._probe_fork = self.oracle.fork()
            expected = self.oracle.apply_sequence(merged)
            self.expected_roots[round_index] = expected
            if probing:
                checks, mismatches = self._probe_interleavings(
                    round_index, per_committee_accepted, expected
                )
                totals["probe_rounds"] += 1
                totals["interleave_checks"] += checks
                totals["interleave_mismatches"] += mismatches
                del self._probe_fork
            supply = self.oracle.total_supply()
            totals["supply_min"] = min(totals["supply_min"], supply)
            totals["supply_max"] = max(totals["supply_max"], supply)

        # -- route confirmed transactions downstream -------------------------
        routed = merged
        if self.drop_confirmed_round == round_index and merged:
            # fault hook: downstream copy silently loses one confirmed tx
            routed = merged[1:]
        leaf_batches: dict[int, dict[int, list]] = {}
        for tx in routed:
            for account in {tx.src, tx.dst}:
                portion = topo.portion_of(account)
                leaf_batches.setdefault(portion, {}).setdefault(
                    self._committee_of(tx.src), []
                ).append(tx)
        for portion in sorted(leaf_batches):
            for committee in sorted(leaf_batches[portion]):
                batch = tuple(dict.fromkeys(leaf_batches[portion][committee]))
                self.bus.send(
                    round_index + 1, ("leaf", portion), ("seq", committee, batch)
                )
                meters[("cc", committee)].msgs_out += len(batch)
                for rep in range(cfg.rho):
                    self.bus.send(
                        round_index + 1,
                        ("storage", portion, rep),
                        ("stxs", round_index, committee, batch),
                    )
                # identical copy to every replica: one multicast per item
                meters[("cc", committee)].msgs_out += len(batch)

        # -- leaf committees fold the previous entry round --------------------
        frontier_out = []  # (position, entry, digest, owner id)
        state_root = None
        for leaf in self.leaf_rpcs:
            cid = ("leaf", leaf.portion)
            batches = sorted(
                (payload for payload in inbox.get(cid, ()) if payload[0] == "seq"),
                key=lambda payload: payload[1],
            )
            incoming = [tx for _, _, batch in batches for tx in batch]
            before = leaf.counters.total()
            digest, ok = leaf.process_round(incoming)
            meter = meters[cid]
            meter.processed += len(incoming)
            meter.hashes += leaf.counters.total() - before
            if not ok:
                totals["leaf_failed_rounds"] += 1
            if topo.tiers:
                tier0 = topo.tiers[0]
                parent = leaf.portion // tier0.child_count
                ordinal = leaf.portion % tier0.child_count
                self.bus.send(
                    round_index + 1, ("inner", 0, parent), ("digest", ordinal, digest)
                )
                meter.msgs_out += 1
                frontier_out.append(
                    ((topo.portion_bits, leaf.portion), round_index - 1, digest, cid)
                )
            else:
                state_root = digest

        # -- inner tiers, bottom-up -------------------------------------------
        for t, tier in enumerate(topo.tiers):
            for p in range(tier.count):
                cid = ("inner", t, p)
                rpc = self.inner_rpcs[(t, p)]
                digests = [
                    payload[2]
                    for payload in sorted(
                        (pl for pl in inbox.get(cid, ()) if pl[0] == "digest"),
                        key=lambda payload: payload[1],
                    )
                ]
                assert len(digests) == tier.child_count, "pipeline latch underfilled"
                before = rpc.counters.total()
                top, computed = rpc.fold_round(digests)
                meter = meters[cid]
                meter.processed += len(digests)
                meter.hashes += rpc.counters.total() - before
                entry = round_index - 2 - t
                for pos, digest in computed.items():
                    if pos in self._spine_need:
                        frontier_out.append((pos, entry, digest, cid))
                if t + 1 < len(topo.tiers):
                    nxt = topo.tiers[t + 1]
                    self.bus.send(
                        round_index + 1,
                        ("inner", t + 1, p // nxt.child_count),
                        ("digest", p % nxt.child_count, top),
                    )
                    meter.msgs_out += 1
                else:
                    state_root = top

        # -- frontier digests to the storage nodes that need them -------------
        frontier_msgs: dict[tuple, list] = {}
        for pos, entry, digest, owner in frontier_out:
            dests = self._spine_need.get(pos, ())
            if dests:
                # identical digest fans out to its need set: one multicast
                meters[owner].msgs_out += 1
            for dest in dests:
                frontier_msgs.setdefault((owner, dest), []).append((pos, entry, digest))
        for (owner, dest), items in sorted(frontier_msgs.items()):
            self.bus.send(round_index + 1, dest, ("frontier", tuple(items)))

        # -- block emission ----------------------------------------------------
        assert state_root is not None
        block = next_block(self.latest_block, state_root)
        self.latest_block = block
        emitter = ("inner", len(topo.tiers) - 1, 0) if topo.tiers else ("leaf", 0)
        meters[emitter].msgs_out += 1  # one multicast: the only broadcast
        for cid in self.committee_ids:
            self.bus.send(round_index + 1, cid, ("block", block))
        entry = block.height - self.stages + 1
        self.emitted_for_entry[entry] = block.height

        verdict = "n/a"
        if self.oracle is not None:
            expected = self.expected_roots.pop(entry, self.genesis_root)
            if block.state_root == expected:
                verdict = "match"
                totals["oracle_matches"] += 1
            else:
                verdict = "mismatch"
                totals["oracle_mismatches"] += 1

        per_committee = []
        for cid in self.committee_ids:
            meter = meters[cid]
            per_committee.append(
                {
                    "id": "-".join(str(part) for part in cid),
                    "msgs_in": meter.msgs_in,
                    "msgs_out": meter.msgs_out,
                    "hashes": meter.hashes,
                    "processed": meter.processed,
                    "accepted": meter.accepted,
                    "discarded": meter.discarded,
                }
            )
            total_msgs = meter.msgs_in + meter.msgs_out
            peaks["committee_msgs"] = max(peaks["committee_msgs"], total_msgs)
            if cid[0] in ("leaf", "inner"):
                peaks["rpc_hashes"] = max(peaks["rpc_hashes"], meter.hashes)
        peaks["backlog"] = max(peaks["backlog"], self.bus.pending)

        return {
            "round": round_index,
            "block_height": block.height,
            "state_root": block.state_root.hex(),
            "oracle": verdict,
            "supply": supply,
            "backlog": self.bus.pending,
            "audit": {"checked": audit_checked, "failed": audit_failed},
            "truncated": truncated,
            "per_committee": per_committee,
        }
