"""Deterministic epoch-driven simulation loop.

One epoch is one re-allocation round (nominally 30 minutes). Each epoch:
departed clients release their capacity, seeded arrivals join, every active
client re-requests (candidate filtering uses the load rates left by the
previous epoch, after which all held capacity is returned and the whole
allocation is rebuilt from scratch), the configured policy solves the joint
batch, the plan is applied, and per-client metrics are recorded.

Hit rate semantics: a client's achieved bandwidth is compared against the
best bandwidth it could have obtained this epoch, where the always-available
direct path counts as one of the options next to the capacity-feasible
candidate servers. A client that is correctly left on its direct path (no
candidate beats it) therefore scores 1.0, and the rate stays in (0, 1] for
every client with at least one candidate. Records are a pure function of
(scenario, config): running twice yields identical record streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ValidationError
from .model import AggregationServer, BBoxClient, baseline_bandwidth
from .scheduler import (
    AllocationPlan,
    Assignment,
    AssignmentLedger,
    DEFAULT_EXACT_CAP,
    RequestBatch,
    _usable_capacity,
    measure_gains,
    solve_exact,
    solve_greedy,
)
from .seeding import derive_seed, rng_for
from .topology import (
    DEFAULT_K_CANDIDATES,
    DEFAULT_LOAD_THRESHOLD,
    DEFAULT_RESERVE_MBPS,
    DistanceDecayNetwork,
    Scenario,
    candidate_subset,
    sample_client,
)

POLICY_NAMES = ("bass_exact", "bass_greedy", "random")

__all__ = [
    "POLICY_NAMES",
    "SimConfig",
    "ClientEpochRecord",
    "EpochRecord",
    "SimState",
    "hit_rate",
    "random_policy",
    "run_epoch",
    "run_simulation",
]


@dataclass(frozen=True)
class SimConfig:
    epochs: int
    policy: str = "bass_greedy"
    epoch_minutes: float = 30.0
    arrival_rate: float = 0.0
    session_epochs_mean: float | None = None
    k_candidates: int = DEFAULT_K_CANDIDATES
    load_threshold: float = DEFAULT_LOAD_THRESHOLD
    reserve_mbps: float = DEFAULT_RESERVE_MBPS
    seed: int = 0
    remeasure_noise: bool = False
    exact_cap: int = DEFAULT_EXACT_CAP
    realloc_throughput_floor_mbps: float | None = None
    wifi_links_per_client: int = 2
    cellular_links_per_client: int = 1

    def __post_init__(self) -> None:
        if not isinstance(self.epochs, int) or self.epochs < 0:
            raise ValidationError(f"epochs must be a non-negative integer, got {self.epochs!r}")
        if self.policy not in POLICY_NAMES:
            raise ValidationError(
                f"unknown policy {self.policy!r}; valid policies: {', '.join(POLICY_NAMES)}"
            )
        if not (math.isfinite(self.epoch_minutes) and self.epoch_minutes > 0):
            raise ValidationError(f"epoch_minutes must be positive, got {self.epoch_minutes!r}")
        if not (math.isfinite(self.arrival_rate) and self.arrival_rate >= 0):
            raise ValidationError(f"arrival_rate must be non-negative, got {self.arrival_rate!r}")
        if self.session_epochs_mean is not None and not (
            math.isfinite(self.session_epochs_mean) and self.session_epochs_mean >= 1.0
        ):
            raise ValidationError(
                f"session_epochs_mean must be >= 1 or None, got {self.session_epochs_mean!r}"
            )
        if not isinstance(self.k_candidates, int) or self.k_candidates < 1:
            raise ValidationError(f"k_candidates must be >= 1, got {self.k_candidates!r}")
        if not (0.0 <= self.load_threshold <= 1.0):
            raise ValidationError(f"load_threshold must be in [0, 1], got {self.load_threshold!r}")
        if not (math.isfinite(self.reserve_mbps) and self.reserve_mbps >= 0):
            raise ValidationError(f"reserve_mbps must be non-negative, got {self.reserve_mbps!r}")
        if not (0 <= self.seed < 2**64):
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.realloc_throughput_floor_mbps is not None and not (
            math.isfinite(self.realloc_throughput_floor_mbps)
            and self.realloc_throughput_floor_mbps >= 0
        ):
            raise ValidationError(
                "realloc_throughput_floor_mbps must be non-negative or None, "
                f"got {self.realloc_throughput_floor_mbps!r}"
            )


@dataclass(frozen=True)
class ClientEpochRecord:
    """Per-client outcome of one epoch."""

    client_id: str
    server_id: str | None
    candidate_count: int
    feasible_count: int
    b_baseline_mbps: float
    b_best_mbps: float
    b_achieved_mbps: float
    gain_mbps: float
    gamma: float | None
    chose_best: bool | None


@dataclass(frozen=True)
class EpochRecord:
    epoch_t: int
    plan: AllocationPlan
    clients: tuple[ClientEpochRecord, ...]
    server_load_rates: Mapping[str, float]
    n_active: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "clients", tuple(self.clients))
        object.__setattr__(self, "server_load_rates", dict(self.server_load_rates))


def hit_rate(b_achieved: float, b_best: float) -> float:
    """Achieved over best-achievable bandwidth; 1.0 means the best option was taken."""
    if not (isinstance(b_best, (int, float)) and math.isfinite(b_best) and b_best > 0):
        raise ValidationError(f"b_best must be positive, got {b_best!r}")
    if not (isinstance(b_achieved, (int, float)) and 0 < b_achieved <= b_best):
        raise ValidationError(
            f"b_achieved must satisfy 0 < b_achieved <= b_best, got {b_achieved!r} vs {b_best!r}"
        )
    return b_achieved / b_best


def random_policy(
    batch: RequestBatch,
    capacities: Mapping[str, float],
    seed: int,
    reserve_mbps: float = DEFAULT_RESERVE_MBPS,
) -> AllocationPlan:
    """Baseline policy: assign each client a uniformly random candidate.

    Candidates that no longer fit the remaining usable capacity are skipped;
    the draw is uniform over the ones that fit at that moment, so every plan
    is feasible by construction. Gains are ignored (they may be negative).
    """
    usable = _usable_capacity(batch, capacities, reserve_mbps)
    rng = rng_for(seed, "random-policy")
    assignments: dict[str, Assignment] = {}
    for client_id in batch.client_ids():
        feasible = [e for e in batch.entries[client_id] if e.b_via_mbps <= usable[e.server_id]]
        if not feasible:
            continue
        entry = feasible[rng.randrange(len(feasible))]
        assignments[client_id] = Assignment(
            server_id=entry.server_id,
            demand_mbps=entry.b_via_mbps,
            gain_mbps=entry.gain_mbps,
        )
        usable[entry.server_id] -= entry.b_via_mbps
    return AllocationPlan.from_assignments(assignments)


def _poisson(rng, lam: float) -> int:
    # Knuth's product method; fine for the small rates used here.
    if lam <= 0.0:
        return 0
    threshold = math.exp(-lam)
    count = 0
    product = 1.0
    while True:
        product *= rng.random()
        if product <= threshold:
            return count
        count += 1


@dataclass
class SimState:
    """Mutable simulation state owned by the single-threaded loop."""

    scenario: Scenario
    config: SimConfig
    net: DistanceDecayNetwork
    ledger: AssignmentLedger
    active: dict[str, BBoxClient]
    arrival_epoch: dict[str, int]
    next_client_index: int
    used_ids: set[str] = field(default_factory=set)
    epoch: int = 0


def new_state(scenario: Scenario, config: SimConfig, net: DistanceDecayNetwork | None = None) -> SimState:
    servers = [
        AggregationServer(
            id=s.id,
            location=s.location,
            total_capacity_mbps=s.total_capacity_mbps,
            remaining_capacity_mbps=s.remaining_capacity_mbps,
        )
        for s in scenario.agg_servers
    ]
    if net is None:
        net = DistanceDecayNetwork.for_scenario(scenario)
    active = {c.id: c for c in scenario.clients}
    return SimState(
        scenario=scenario,
        config=config,
        net=net,
        ledger=AssignmentLedger(servers, config.reserve_mbps),
        active=active,
        arrival_epoch={cid: 0 for cid in active},
        next_client_index=len(scenario.clients),
        used_ids=set(active),
    )


def _spawn_client(state: SimState) -> BBoxClient:
    while True:
        index = state.next_client_index
        state.next_client_index += 1
        client = sample_client(
            state.scenario.seed,
            index,
            state.scenario.net_params,
            [o.id for o in state.scenario.origins],
            wifi_links=state.config.wifi_links_per_client,
            cellular_links=state.config.cellular_links_per_client,
        )
        if client.id not in state.used_ids:
            return client


def run_epoch(state: SimState) -> EpochRecord:
    """Advance the simulation by one re-allocation round."""
    config = state.config
    t = state.epoch

    # 1. Departures return their capacity.
    if config.session_epochs_mean is not None:
        p_depart = 1.0 / config.session_epochs_mean
        for client_id in sorted(state.active):
            if state.arrival_epoch[client_id] >= t:
                continue
            if rng_for(config.seed, "depart", client_id, t).random() < p_depart:
                if state.ledger.assignment_of(client_id) is not None:
                    state.ledger.release(client_id)
                del state.active[client_id]
                del state.arrival_epoch[client_id]

    # 2. Seeded arrivals join the population.
    if config.arrival_rate > 0.0:
        n_new = _poisson(rng_for(config.seed, "arrivals", t), config.arrival_rate)
        for _ in range(n_new):
            client = _spawn_client(state)
            state.active[client.id] = client
            state.arrival_epoch[client.id] = t
            state.used_ids.add(client.id)

    # 3. Candidate subsets against the load left by the previous epoch
    #    (the scheduler filters on current load when requests come in).
    servers = list(state.ledger.servers.values())
    candidate_ids = {
        client_id: candidate_subset(
            state.active[client_id], servers, config.k_candidates, config.load_threshold
        )
        for client_id in sorted(state.active)
    }

    # 4. Every active client re-requests, so the whole allocation is rebuilt.
    state.ledger.release_all()

    # 5. Measure gains against the (possibly re-drawn) network.
    if config.remeasure_noise:
        state.net.noise_epoch = t
    baselines: dict[str, float] = {}
    entries = {}
    for client_id in sorted(state.active):
        client = state.active[client_id]
        baselines[client_id] = baseline_bandwidth(state.net.direct_link_bandwidths(client))
        chosen_servers = [state.ledger.servers[sid] for sid in candidate_ids[client_id]]
        if chosen_servers:
            entries[client_id] = measure_gains(client, chosen_servers, state.net)
    batch = RequestBatch.build(t, entries)

    # 6. Solve under the released capacities.
    capacities = {sid: server.remaining_capacity_mbps for sid, server in state.ledger.servers.items()}
    if config.policy == "bass_greedy":
        plan = solve_greedy(batch, capacities, config.reserve_mbps)
    elif config.policy == "bass_exact":
        plan = solve_exact(batch, capacities, config.reserve_mbps, client_cap=config.exact_cap)
    else:
        plan = random_policy(
            batch, capacities, derive_seed(config.seed, "policy", t), config.reserve_mbps
        )

    # 7. Commit.
    state.ledger.apply(plan)

    # 8. Per-client records.
    records = []
    for client_id in sorted(state.active):
        baseline = baselines[client_id]
        group = batch.entries.get(client_id, ())
        feasible = [
            e for e in group if e.b_via_mbps <= capacities[e.server_id] - config.reserve_mbps
        ]
        assignment = plan.assignments.get(client_id)
        if assignment is not None:
            achieved = assignment.demand_mbps
            gain = assignment.gain_mbps
        else:
            achieved = baseline
            gain = 0.0
        b_best = baseline
        for e in feasible:
            if e.b_via_mbps > b_best:
                b_best = e.b_via_mbps
        if group and b_best > 0 and achieved > 0:
            gamma = hit_rate(achieved, b_best)
            chose_best = achieved == b_best
        else:
            gamma = None
            chose_best = None
        records.append(
            ClientEpochRecord(
                client_id=client_id,
                server_id=assignment.server_id if assignment is not None else None,
                candidate_count=len(group),
                feasible_count=len(feasible),
                b_baseline_mbps=baseline,
                b_best_mbps=b_best,
                b_achieved_mbps=achieved,
                gain_mbps=gain,
                gamma=gamma,
                chose_best=chose_best,
            )
        )

    record = EpochRecord(
        epoch_t=t,
        plan=plan,
        clients=tuple(records),
        server_load_rates={
            sid: server.load_rate for sid, server in sorted(state.ledger.servers.items())
        },
        n_active=len(state.active),
    )
    state.epoch += 1
    return record


def run_simulation(
    scenario: Scenario, config: SimConfig, net: DistanceDecayNetwork | None = None
) -> list[EpochRecord]:
    """Fold run_epoch over the configured number of epochs."""
    state = new_state(scenario, config, net)
    return [run_epoch(state) for _ in range(config.epochs)]
