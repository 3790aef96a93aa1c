"""Dimensioning formulas and the proportional-scaling experiment."""

from __future__ import annotations

from dataclasses import dataclass, replace


def fold_levels(hash_budget: int) -> int:
    """Levels of pairwise hashing one committee can finish in a round.

    A complete fold of L levels costs 2**L - 1 hashes, so the largest
    affordable L is floor(log2(hash_budget + 1)).
    """
    if hash_budget < 1:
        raise ValueError("hash_budget must be >= 1")
    return (hash_budget + 1).bit_length() - 1


def fold_capacity(hash_budget: int) -> int:
    """Hashes actually spent by a full affordable fold: 2**fold_levels - 1."""
    return (1 << fold_levels(hash_budget)) - 1


def _leaf_rpcs_needed(changes_per_round: int, leaf_capacity: int) -> int:
    # smallest power of two L with L * leaf_capacity >= changes_per_round
    exp = 0
    while (leaf_capacity << exp) < changes_per_round:
        exp += 1
    return 1 << exp


def min_committees(
    changes_per_round: int, leaf_capacity: int, hash_budget: int
) -> tuple[int, int]:
    """Minimum (leaf, inner) committee counts that keep every round's work
    within per-committee capacity under a uniform workload."""
    if changes_per_round < 1 or leaf_capacity < 1:
        raise ValueError("workload and capacity must be >= 1")
    leaf = _leaf_rpcs_needed(changes_per_round, leaf_capacity)
    inner = -(-(leaf - 1) // fold_capacity(hash_budget))
    return leaf, inner


@dataclass(frozen=True)
class Provisioning:
    changes_per_round: int
    leaf_capacity: int
    hash_budget: int
    fold_levels: int
    fold_capacity: int
    leaf_rpcs: int
    inner_rpcs: int
    cc_count: int
    rpc_levels: int
    stages: int

    @property
    def total_committees(self) -> int:
        return self.cc_count + self.leaf_rpcs + self.inner_rpcs


def provision_after_doubling(
    changes_per_round: int, leaf_capacity: int, hash_budget: int, cc_count: int = 0
) -> Provisioning:
    """Committee counts right after a doubling step: leaf RPCs run at half
    capacity (2m/e of them) so the system absorbs growth until the next
    doubling; inner RPCs are packed full-fold."""
    m, e = changes_per_round, leaf_capacity
    if m < 1 or e < 1:
        raise ValueError("workload and capacity must be >= 1")
    ratio, rem = divmod(m, e)
    if rem or ratio & (ratio - 1):
        raise ValueError("changes/capacity must be a power of two after doubling")
    leaf = 2 * ratio
    cap = fold_capacity(hash_budget)
    inner = -(-leaf // cap)
    levels = fold_levels(hash_budget)
    tree_levels = leaf.bit_length() - 1
    tiers = -(-tree_levels // levels) if tree_levels else 0
    rpc_levels = 1 + tiers
    return Provisioning(
        changes_per_round=m,
        leaf_capacity=e,
        hash_budget=hash_budget,
        fold_levels=levels,
        fold_capacity=cap,
        leaf_rpcs=leaf,
        inner_rpcs=inner,
        cc_count=cc_count,
        rpc_levels=rpc_levels,
        stages=rpc_levels + 1,
    )


def provision_minimal(
    changes_per_round: int, leaf_capacity: int, hash_budget: int, cc_count: int = 0
) -> Provisioning:
    """Smallest deployment that absorbs the stated steady workload."""
    leaf, inner = min_committees(changes_per_round, leaf_capacity, hash_budget)
    levels = fold_levels(hash_budget)
    tree_levels = leaf.bit_length() - 1
    tiers = -(-tree_levels // levels) if tree_levels else 0
    rpc_levels = 1 + tiers
    return Provisioning(
        changes_per_round=changes_per_round,
        leaf_capacity=leaf_capacity,
        hash_budget=hash_budget,
        fold_levels=levels,
        fold_capacity=fold_capacity(hash_budget),
        leaf_rpcs=leaf,
        inner_rpcs=inner,
        cc_count=cc_count,
        rpc_levels=rpc_levels,
        stages=rpc_levels + 1,
    )


@dataclass(frozen=True)
class ScaleRun:
    alpha: int
    config: object
    cc_count: int
    leaf_rpcs: int
    inner_rpcs: int
    stages: int
    committees_total: int
    peak_cc_tx: int
    peak_rpc_hashes: int
    peak_msgs: int
    block_bytes: int
    oracle_ok: bool
    well_provisioned: bool


def scale_experiment(base_config, alphas, *, rounds=None, progress=None):
    """Run the same workload-per-committee at alpha times the scale.

    base_config must itself be dimensioned per provision_after_doubling.
    Every run keeps the base seed, stratifies sources per committee, and is
    judged well-provisioned when the oracle matches every block, no single
    RPC exceeds its hash budget, and no committee sees more transactions
    than its per-round capacity.
    """
    from .engine import Simulation  # deferred: engine imports this module

    if base_config.f % base_config.n_c:
        raise ValueError("f must divide evenly across confirmation committees")
    prov0 = provision_after_doubling(2 * base_config.f, base_config.e, base_config.j)
    if prov0.leaf_rpcs != base_config.leaf_count:
        raise ValueError(
            "base config is not sized after-doubling: "
            f"leaf_count {base_config.leaf_count} != {prov0.leaf_rpcs}"
        )
    capacity = base_config.f // base_config.n_c
    runs: list[ScaleRun] = []
    for alpha in alphas:
        if alpha < 1 or int(alpha) != alpha:
            raise ValueError("alpha must be a positive integer")
        alpha = int(alpha)
        cfg = replace(
            base_config,
            f=alpha * base_config.f,
            n_c=alpha * base_config.n_c,
            leaf_count=alpha * base_config.leaf_count,
        )
        if rounds is not None:
            cfg = replace(cfg, rounds=rounds)
        prov = provision_after_doubling(2 * cfg.f, cfg.e, cfg.j, cfg.n_c)
        result = Simulation(cfg, balanced_workload=True).run()
        peaks = result.summary["peaks"]
        oracle_ok = result.ok and result.summary["oracle"]["mismatches"] == 0
        well = (
            oracle_ok
            and peaks["rpc_hashes"] <= cfg.j
            and peaks["cc_tx"] <= capacity
        )
        runs.append(
            ScaleRun(
                alpha=alpha,
                config=cfg,
                cc_count=cfg.n_c,
                leaf_rpcs=prov.leaf_rpcs,
                inner_rpcs=prov.inner_rpcs,
                stages=prov.stages,
                committees_total=prov.total_committees,
                peak_cc_tx=peaks["cc_tx"],
                peak_rpc_hashes=peaks["rpc_hashes"],
                peak_msgs=peaks["committee_msgs"],
                block_bytes=result.summary["block_bytes"],
                oracle_ok=oracle_ok,
                well_provisioned=well,
            )
        )
        if progress is not None:
            progress(runs[-1])
    return runs
