"""Aggregation round orchestration: grouping, messages, decoding, recovery.

Clients are integers 0..S-1.  An assignment splits them into mask-exchange
groups, each with a plus side and a minus side; every client rotates its
symbols by the summed channel phases to the opposite side, plus side
adding, minus side subtracting.  Summing all received messages cancels
every mask pairwise and leaves the exact digit sum.

Two protocol versions exist on the wire:

* ``alg1`` - group mask only.  Exact and minimal, but once a client is
  presumed dropped and its mask reconstructed, a late message from it can
  be unmasked by the aggregator.
* ``alg2`` - each message additionally carries a private uniform phase
  known only to its sender.  Recovery then needs mask shares for dropped
  clients and private phases for survivors, never both for one client, so
  late messages stay protected.

The dropout correction implemented here is
``+ sum(masks of dropped plus-side) - sum(masks of dropped minus-side)
- sum(private phases of survivors)`` with dropped-to-dropped channel terms
excluded; they cancel pairwise by reciprocity, which the test suite checks
exhaustively.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from . import fl, rng, turns
from .channel import ChannelMatrix, sample_round_channel
from .codec import (
    FecConfig,
    QuantizationConfig,
    bits_to_digits,
    digits_to_bits,
    dequantize_mean,
    decode_sum,
    fec_decode,
    fec_encode,
    modulate,
)
from .errors import (
    FramingError,
    InfeasibleGroupingError,
    InsufficientClientsError,
    SecurityFloorError,
    ShapeError,
    UnrecoverableRoundError,
)
from .masking import (
    MINUS,
    PLUS,
    MaskedSymbols,
    PrivatePhase,
    apply_mask,
    compute_group_mask,
    mask_shares,
    sample_private_phase,
)

if TYPE_CHECKING:
    from .cli import ScenarioConfig

ALG1 = "alg1"
ALG2 = "alg2"

TWO_GROUP = "two-group"
SUBGROUP = "subgroup"


@dataclass(frozen=True)
class GroupAssignment:
    """Per-client (group id, side tag) labels.

    Two-group mode is a single exchange group whose plus side and minus
    side are the two client groups; subgroup mode has `num_groups` groups
    whose sides are the two subgroups of size `subgroup_size` (the last
    group absorbs any remainder, split as evenly as possible).
    """

    mode: str
    group_of: tuple[int, ...]
    tag_of: tuple[str, ...]
    num_groups: int
    subgroup_size: int | None = None

    def __post_init__(self):
        if self.mode not in (TWO_GROUP, SUBGROUP):
            raise ValueError(f"unknown assignment mode {self.mode!r}")
        if len(self.group_of) != len(self.tag_of):
            raise ValueError("group and tag labels must cover the same clients")
        if any(tag not in (PLUS, MINUS) for tag in self.tag_of):
            raise ValueError("tags must be '+' or '-'")
        for g in range(self.num_groups):
            for tag in (PLUS, MINUS):
                if not self.side(g, tag):
                    raise ValueError(f"group {g} has an empty {tag!r} side")

    @property
    def num_clients(self) -> int:
        return len(self.group_of)

    def members(self, group: int) -> tuple[int, ...]:
        return tuple(i for i, g in enumerate(self.group_of) if g == group)

    def side(self, group: int, tag: str) -> tuple[int, ...]:
        return tuple(
            i for i, (g, t) in enumerate(zip(self.group_of, self.tag_of))
            if g == group and t == tag
        )

    def complementary_set(self, i: int) -> tuple[int, ...]:
        """Clients whose channel phases form i's group mask."""
        g, t = self.group_of[i], self.tag_of[i]
        other = MINUS if t == PLUS else PLUS
        return self.side(g, other)

    def cross_pair_count(self) -> int:
        """Unordered pairs that must estimate a phase: sum over groups of |plus|*|minus|."""
        return sum(
            len(self.side(g, PLUS)) * len(self.side(g, MINUS))
            for g in range(self.num_groups)
        )

    def plus_size(self) -> int:
        return sum(1 for t in self.tag_of if t == PLUS)

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "group_of": list(self.group_of),
            "tag_of": list(self.tag_of),
            "num_groups": self.num_groups,
            "subgroup_size": self.subgroup_size,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "GroupAssignment":
        return cls(
            mode=d["mode"],
            group_of=tuple(int(g) for g in d["group_of"]),
            tag_of=tuple(str(t) for t in d["tag_of"]),
            num_groups=int(d["num_groups"]),
            subgroup_size=None if d.get("subgroup_size") is None else int(d["subgroup_size"]),
        )


def assign_two_groups(num_clients: int, seed: int) -> GroupAssignment:
    """Random two-group split with at least two clients on each side.

    Splits violating the minimum are redrawn, so the result is
    deterministic for a given seed.
    """
    if num_clients < 4:
        raise InsufficientClientsError(
            f"two-group aggregation needs at least 4 clients, got {num_clients}"
        )
    gen = rng.keyed_generator(seed, rng.GROUPING_DOMAIN)
    while True:
        sides = gen.integers(0, 2, size=num_clients)
        plus = int(np.sum(sides == 0))
        if 2 <= plus <= num_clients - 2:
            break
    tags = tuple(PLUS if s == 0 else MINUS for s in sides)
    return GroupAssignment(mode=TWO_GROUP, group_of=(0,) * num_clients,
                           tag_of=tags, num_groups=1, subgroup_size=None)


def two_group_from_sides(plus_side: Iterable[int],
                         minus_side: Iterable[int]) -> GroupAssignment:
    """Explicit two-group layout (tests and demos)."""
    plus = tuple(plus_side)
    minus = tuple(minus_side)
    size = len(plus) + len(minus)
    if sorted(plus + minus) != list(range(size)):
        raise ValueError("sides must partition clients 0..S-1")
    tags = [MINUS] * size
    for i in plus:
        tags[i] = PLUS
    return GroupAssignment(mode=TWO_GROUP, group_of=(0,) * size,
                           tag_of=tuple(tags), num_groups=1, subgroup_size=None)


def assign_subgroups(num_clients: int, num_groups: int, subgroup_size: int,
                     seed: int) -> GroupAssignment:
    """Random split into `num_groups` groups of two subgroups of `subgroup_size`.

    Requires num_groups == num_clients // (2 * subgroup_size); the
    remainder joins the last group, split as evenly as possible between
    its sides (both stay >= subgroup_size).
    """
    if subgroup_size < 2:
        raise SecurityFloorError(
            "subgroup size must be at least 2: with a single counterpart, one "
            "revealed share exposes a client's whole mask"
        )
    if num_groups < 1:
        raise InfeasibleGroupingError(f"need at least one group, got {num_groups}")
    per_group = 2 * subgroup_size
    if num_clients < num_groups * per_group:
        raise InfeasibleGroupingError(
            f"{num_clients} clients cannot fill {num_groups} group(s) of {per_group}"
        )
    remainder = num_clients - num_groups * per_group
    if remainder >= per_group:
        raise InfeasibleGroupingError(
            f"{num_clients} clients at subgroup size {subgroup_size} need "
            f"{num_clients // per_group} groups, not {num_groups}"
        )
    order = rng.keyed_generator(seed, rng.GROUPING_DOMAIN).permutation(num_clients)
    group_of = [0] * num_clients
    tag_of = [PLUS] * num_clients
    start = 0
    for g in range(num_groups):
        size = per_group + (remainder if g == num_groups - 1 else 0)
        chunk = order[start:start + size]
        start += size
        plus_count = (size + 1) // 2
        for pos, client in enumerate(chunk):
            group_of[int(client)] = g
            tag_of[int(client)] = PLUS if pos < plus_count else MINUS
    return GroupAssignment(mode=SUBGROUP, group_of=tuple(group_of),
                           tag_of=tuple(tag_of), num_groups=num_groups,
                           subgroup_size=subgroup_size)


@dataclass(frozen=True)
class ClientMessage:
    """One client's uplink message for one iteration."""

    owner: int
    iteration: int
    masked: MaskedSymbols
    protocol_version: str

    def to_json_dict(self) -> dict:
        return {
            "owner": self.owner,
            "iteration": self.iteration,
            "direction": self.masked.direction,
            "mask_mode": self.masked.mask_mode,
            "version": self.protocol_version,
            "symbols": [int(s) for s in self.masked.symbols],
        }


def client_message(i: int, digits, assignment: GroupAssignment,
                   channel: ChannelMatrix, version: str, seed: int,
                   cfg: QuantizationConfig, *,
                   per_symbol: bool = False) -> ClientMessage:
    """Build client i's message: modulate, add private phase (alg2), rotate.

    The group-mask rotation direction follows the client's side tag: plus
    side adds its mask, minus side subtracts it.  The private phase is
    always added.
    """
    if version not in (ALG1, ALG2):
        raise ValueError(f"unknown protocol version {version!r}")
    if not (0 <= i < assignment.num_clients):
        raise IndexError(f"client {i} is not covered by the assignment")
    t = channel.iteration
    symbols = modulate(digits, cfg, owner=i, iteration=t)
    current = symbols
    if version == ALG2:
        private = sample_private_phase(i, t, seed, per_symbol=per_symbol,
                                       length=symbols.dimension)
        current = apply_mask(current, private.phase, PLUS)
    mask = compute_group_mask(i, assignment, channel, per_symbol=per_symbol,
                              length=symbols.dimension)
    masked = apply_mask(current, mask.phase, assignment.tag_of[i])
    return ClientMessage(owner=i, iteration=t, masked=masked,
                         protocol_version=version)


@dataclass(frozen=True)
class DecodedAggregate:
    """Mean gradient plus the exact integer digit sums it came from."""

    mean: np.ndarray
    digit_sums: np.ndarray


def ps_aggregate_and_decode(messages: Sequence[ClientMessage],
                            correction, num_contributors: int,
                            cfg: QuantizationConfig) -> DecodedAggregate:
    """Sum received phases, apply the correction, decode, and average.

    With every mask cancelled the per-element phase sum is an exact grid
    multiple; anything else raises ResidualMaskError.
    """
    if not messages:
        raise UnrecoverableRoundError("no messages arrived; nothing to decode")
    dims = {m.masked.dimension for m in messages}
    if len(dims) != 1:
        raise ShapeError(f"messages disagree on dimension: {sorted(dims)}")
    agg = turns.vector_total([m.masked.symbols for m in messages])
    agg = turns.add(agg, turns.reduce(correction))
    sums = decode_sum(agg, cfg)
    mean = dequantize_mean(sums, num_contributors, cfg)
    return DecodedAggregate(mean=mean, digit_sums=sums)


@dataclass
class CorrectionResult:
    """Correction phase plus the queries and reveals that produced it."""

    correction: int | np.ndarray
    queries: list = field(default_factory=list)
    reveals: list = field(default_factory=list)
    recovery_messages: int = 0
    private_phase_reveals: int = 0


def _check_recovery_feasible(dropped: frozenset[int],
                             assignment: GroupAssignment) -> list[int]:
    """Survivor list, or UnrecoverableRoundError when recovery cannot proceed.

    Every side of every group must keep at least one survivor: a dropped
    client with a fully-dropped complementary side has nobody left to
    reveal its mask shares, and a surviving client with a fully-dropped
    complementary side would have its whole mask exposed by those same
    reveals on top of its private phase.
    """
    survivors = [i for i in range(assignment.num_clients) if i not in dropped]
    if not survivors:
        raise UnrecoverableRoundError("every client dropped out")
    alive = set(survivors)
    for g in range(assignment.num_groups):
        for tag in (PLUS, MINUS):
            side = assignment.side(g, tag)
            if not alive.intersection(side):
                raise UnrecoverableRoundError(
                    f"the {tag!r} side of group {g} lost all its clients; "
                    "masks touching it can be neither reconstructed nor kept private"
                )
    return survivors


def _phase_json(phase) -> int | list[int]:
    if isinstance(phase, np.ndarray):
        return [int(p) for p in phase]
    return int(phase)


def _audit_reveal_safety(reveals: Sequence[Mapping],
                         assignment: GroupAssignment) -> None:
    """Check no client has both its private phase and its full mask revealed."""
    private = {r["client"] for r in reveals if r["kind"] == "private-phase"}
    exposed: dict[int, set[int]] = {}
    for r in reveals:
        if r["kind"] != "mask-share":
            continue
        # The share phi(dropped, revealer) is a component of both clients' masks.
        exposed.setdefault(r["dropped"], set()).add(r["revealer"])
        exposed.setdefault(r["revealer"], set()).add(r["dropped"])
    for client in private:
        comp = set(assignment.complementary_set(client))
        if comp and comp.issubset(exposed.get(client, set())):
            raise RuntimeError(
                f"reveal-safety audit failed: client {client}'s private phase "
                "and every share of its mask were both revealed"
            )


def dropout_correction(dropped: Iterable[int], assignment: GroupAssignment,
                       channel: ChannelMatrix,
                       private_phases: Mapping[int, PrivatePhase] | None,
                       *, per_symbol: bool = False,
                       length: int | None = None) -> CorrectionResult:
    """Correction the aggregator adds so survivors' sums decode exactly.

    Reconstructed masks of dropped plus-side clients are added and
    minus-side ones subtracted; with `private_phases` given (alg2) the
    survivors' private phases are subtracted as well.  The reveal log
    records every queried share, and the never-both rule is audited.
    """
    dropped = frozenset(int(i) for i in dropped)
    for i in dropped:
        if not (0 <= i < assignment.num_clients):
            raise IndexError(f"dropped client {i} is not in the assignment")
    survivors = _check_recovery_feasible(dropped, assignment)

    correction: int | np.ndarray
    correction = np.zeros(length, dtype=np.uint64) if per_symbol else 0
    result = CorrectionResult(correction=correction)

    for i in sorted(dropped):
        shares = mask_shares(i, survivors, assignment, channel,
                             per_symbol=per_symbol, length=length)
        result.queries.append(
            {"kind": "mask-shares", "dropped": i, "queried": [j for j, _ in shares]}
        )
        for j, phase in shares:
            result.reveals.append(
                {"kind": "mask-share", "dropped": i, "revealer": j,
                 "phase": _phase_json(phase)}
            )
        result.recovery_messages += len(shares)
        if per_symbol:
            rebuilt = turns.vector_total([phase for _, phase in shares])
        else:
            rebuilt = turns.total(phase for _, phase in shares)
        if assignment.tag_of[i] == PLUS:
            result.correction = turns.add(result.correction, rebuilt)
        else:
            result.correction = turns.sub(result.correction, rebuilt)

    if private_phases is not None:
        missing = [j for j in survivors if j not in private_phases]
        if missing:
            raise ValueError(f"missing private phases for survivors {missing}")
        result.queries.append({"kind": "private-phase", "queried": list(survivors)})
        for j in survivors:
            phase = private_phases[j].phase
            result.reveals.append(
                {"kind": "private-phase", "client": j, "phase": _phase_json(phase)}
            )
            result.correction = turns.sub(result.correction, phase)
        result.private_phase_reveals = len(survivors)

    _audit_reveal_safety(result.reveals, assignment)
    return result


@dataclass(frozen=True)
class RoundTranscript:
    """Everything one aggregation round produced, ready to serialize."""

    iteration: int
    assignment: GroupAssignment
    messages: tuple[ClientMessage, ...]
    dropped: tuple[int, ...]
    delayed: int | None
    delayed_discarded: bool | None
    correction_queries: tuple
    revealed_shares: tuple
    counters: dict
    num_contributors: int
    aggregate: tuple[int, ...]
    decoded_mean: tuple[float, ...]
    codec_metrics: dict

    def to_json_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "assignment": self.assignment.to_json_dict(),
            "messages": [m.to_json_dict() for m in self.messages],
            "dropped": list(self.dropped),
            "delayed": self.delayed,
            "delayed_discarded": self.delayed_discarded,
            "correction_queries": list(self.correction_queries),
            "revealed_shares": list(self.revealed_shares),
            "counters": dict(self.counters),
            "num_contributors": self.num_contributors,
            "aggregate": list(self.aggregate),
            "decoded_mean": list(self.decoded_mean),
            "codec_metrics": dict(self.codec_metrics),
        }


def run_round(digits_by_client: Sequence, assignment: GroupAssignment,
              channel: ChannelMatrix, cfg: QuantizationConfig, *,
              version: str = ALG1, seed: int, dropped: Iterable[int] = (),
              delayed: int | None = None, per_symbol: bool = False,
              naive_remedy: bool = False,
              fec: FecConfig | None = None) -> RoundTranscript:
    """One full aggregation round over prepared digit vectors.

    Dropped clients estimate phases but never transmit.  A delayed client
    is treated as dropped at aggregation time; under alg2 its late message
    is logged and discarded, while `naive_remedy` (the deliberately unsafe
    alg1 recovery used by the attack oracle) leaves it for the caller.
    """
    s = assignment.num_clients
    if len(digits_by_client) != s:
        raise ShapeError(
            f"need digits for all {s} clients, got {len(digits_by_client)}"
        )
    dims = {len(np.atleast_1d(d)) for d in digits_by_client}
    if len(dims) != 1:
        raise ShapeError(f"clients disagree on dimension: {sorted(dims)}")
    dimension = dims.pop()

    dropped = frozenset(int(i) for i in dropped)
    if delayed is not None:
        if delayed in dropped:
            raise ValueError(f"client {delayed} cannot be both dropped and delayed")
        if not (0 <= delayed < s):
            raise IndexError(f"delayed client {delayed} out of range")
    absent = dropped | ({delayed} if delayed is not None else set())

    # Phase estimation happens at round start for every cross pair, before
    # anyone can drop; count the unordered pairs actually recorded.
    estimated_pairs = set()
    for i in range(s):
        mask = compute_group_mask(i, assignment, channel,
                                  per_symbol=per_symbol,
                                  length=dimension if per_symbol else None)
        for a, b in mask.contributing_pairs:
            estimated_pairs.add((min(a, b), max(a, b)))

    senders = [i for i in range(s) if i not in absent]
    messages = tuple(
        client_message(i, digits_by_client[i], assignment, channel, version,
                       seed, cfg, per_symbol=per_symbol)
        for i in senders
    )

    payload_bits = cfg.payload_bits(dimension)
    fec_cfg = fec or FecConfig(scheme="none")
    redundancy = fec_cfg.redundancy_bits(payload_bits)
    for i in senders:
        bits = digits_to_bits(np.atleast_1d(digits_by_client[i]), cfg)
        recovered = bits_to_digits(fec_decode(fec_encode(bits, fec_cfg), fec_cfg), cfg)
        if not np.array_equal(recovered, np.atleast_1d(digits_by_client[i])):
            raise FramingError("FEC round-trip failed on a noiseless channel")

    delayed_discarded: bool | None = None
    if version == ALG2:
        private = {
            j: sample_private_phase(j, channel.iteration, seed,
                                    per_symbol=per_symbol,
                                    length=dimension if per_symbol else None)
            for j in senders
        }
        correction = dropout_correction(absent, assignment, channel, private,
                                        per_symbol=per_symbol,
                                        length=dimension if per_symbol else None)
        if delayed is not None:
            delayed_discarded = True
    elif absent:
        if not naive_remedy:
            raise UnrecoverableRoundError(
                "dropouts under the group-mask-only protocol cannot be "
                "recovered without exposing masks; use version 'alg2'"
            )
        correction = dropout_correction(absent, assignment, channel, None,
                                        per_symbol=per_symbol,
                                        length=dimension if per_symbol else None)
        if delayed is not None:
            delayed_discarded = False
    else:
        correction = CorrectionResult(correction=0)

    decoded = ps_aggregate_and_decode(messages, correction.correction,
                                      len(senders), cfg)

    counters = {
        "phase_estimations": len(estimated_pairs),
        "uplink_messages": len(messages),
        "recovery_messages": correction.recovery_messages,
        "private_phase_reveals": correction.private_phase_reveals,
    }
    return RoundTranscript(
        iteration=channel.iteration,
        assignment=assignment,
        messages=messages,
        dropped=tuple(sorted(dropped)),
        delayed=delayed,
        delayed_discarded=delayed_discarded,
        correction_queries=tuple(correction.queries),
        revealed_shares=tuple(correction.reveals),
        counters=counters,
        num_contributors=len(senders),
        aggregate=tuple(int(x) for x in decoded.digit_sums),
        decoded_mean=tuple(float(x) for x in decoded.mean),
        codec_metrics={
            "payload_bits": payload_bits,
            "redundancy_bits": redundancy,
            "symbols_per_message": dimension,
        },
    )


def run_iteration(state: "fl.ModelState", config: "ScenarioConfig", *,
                  datasets=None, assignment: GroupAssignment | None = None):
    """One federated round: gradients, masked aggregation, SGD step.

    Returns (transcript, updated state).  `datasets` and `assignment` may
    be passed in to avoid rebuilding them every round; both are derived
    deterministically from the config when omitted.
    """
    if datasets is None:
        datasets, _ = fl.make_synthetic_task(
            config.clients, config.dimension, config.samples_per_client, config.seed
        )
    if assignment is None:
        assignment = config.build_assignment()
    cfg = config.quantization()
    t = state.iteration
    chan = sample_round_channel(config.clients, t, config.seed)
    digits = [
        np.asarray(fl.quantized_digits(state.theta, datasets[i], cfg), dtype=np.int64)
        for i in range(config.clients)
    ]
    transcript = run_round(
        digits, assignment, chan, cfg,
        version=config.protocol_version,
        seed=config.seed,
        dropped=config.dropouts_for_round(t),
        delayed=config.delayed_client,
        per_symbol=config.per_symbol_masks,
        fec=config.fec_config(),
    )
    mean = np.asarray(transcript.decoded_mean, dtype=np.float64)
    theta = fl.sgd_update(state.theta, mean, state.learning_rate)
    new_state = fl.ModelState(theta=theta, iteration=t + 1,
                              learning_rate=state.learning_rate)
    return transcript, new_state
