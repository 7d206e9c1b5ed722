"""Duration-quantified dataset mixing.

Sequences are cut into fixed-length instances (2500 ticks of 33300 us =
83.25 s), instances are bundled into 333 s groups, and a training mix takes
k of 7 groups from the real pool and the rest from the synthetic pool, so the
real fraction moves in exact sevenths while the total duration stays fixed
at 2331 s. Validation/test plans use a fixed 360+320 / 180+160 second split
(real fraction 9/17 in both).

Plans are views over a sequence manifest: they reference (sequence id,
offset, length) ranges and never copy event data.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import CapacityError, FormatError

REAL = "real"
SYNTHETIC = "synthetic"
DOMAINS = (REAL, SYNTHETIC)
CONDITIONS = ("day", "night")

TICKS_PER_INSTANCE = 2500
TICK_PERIOD_US = 33300            # 0.0333 s on the integer microsecond grid
INSTANCE_US = TICKS_PER_INSTANCE * TICK_PERIOD_US   # 83.25 s
INSTANCES_PER_GROUP = 4
GROUP_US = INSTANCES_PER_GROUP * INSTANCE_US        # 333 s
MIX_STEPS = 7

VAL_REAL_US = 360_000_000
VAL_SYNTHETIC_US = 320_000_000
TEST_REAL_US = 180_000_000
TEST_SYNTHETIC_US = 160_000_000

MANIFEST_CSV_HEADER = "id,domain,condition,duration_us,path"


@dataclass(frozen=True)
class SequenceEntry:
    id: str
    domain: str
    condition: str
    duration: int
    path: str = ""

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise FormatError(f"unknown domain {self.domain!r}")
        if self.condition not in CONDITIONS:
            raise FormatError(f"unknown condition {self.condition!r}")
        if self.duration <= 0:
            raise FormatError(f"sequence duration must be positive, got {self.duration}")


@dataclass(frozen=True)
class Instance:
    sequence_id: str
    offset: int
    length: int

    def __post_init__(self):
        if self.offset < 0 or self.length <= 0:
            raise FormatError("instance offset/length out of range")


@dataclass(frozen=True)
class Group:
    instances: tuple

    @property
    def duration(self) -> int:
        return sum(i.length for i in self.instances)

    def sort_key(self):
        first = self.instances[0]
        return (first.sequence_id, first.offset)


@dataclass(frozen=True)
class MixPlan:
    k: int
    real_groups: tuple
    synthetic_groups: tuple
    real_us: int
    synthetic_us: int
    fraction_real: Fraction

    @property
    def total_us(self) -> int:
        return self.real_us + self.synthetic_us

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "steps": MIX_STEPS,
            "fraction_real": float(self.fraction_real),
            "fraction_real_exact": f"{self.fraction_real.numerator}/{self.fraction_real.denominator}",
            "real_us": self.real_us,
            "synthetic_us": self.synthetic_us,
            "total_us": self.total_us,
            "real_seconds": self.real_us / 1e6,
            "synthetic_seconds": self.synthetic_us / 1e6,
            "total_seconds": self.total_us / 1e6,
            "real_segments": _segments(self.real_groups),
            "synthetic_segments": _segments(self.synthetic_groups),
        }


@dataclass(frozen=True)
class SplitPlan:
    name: str
    real_segments: tuple
    synthetic_segments: tuple

    @property
    def real_us(self) -> int:
        return sum(s.length for s in self.real_segments)

    @property
    def synthetic_us(self) -> int:
        return sum(s.length for s in self.synthetic_segments)

    @property
    def fraction_real(self) -> Fraction:
        return Fraction(self.real_us, self.real_us + self.synthetic_us)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "real_us": self.real_us,
            "synthetic_us": self.synthetic_us,
            "fraction_real": float(self.fraction_real),
            "fraction_real_exact": f"{self.fraction_real.numerator}/{self.fraction_real.denominator}",
            "real_segments": [_seg(s) for s in self.real_segments],
            "synthetic_segments": [_seg(s) for s in self.synthetic_segments],
        }


def _seg(i: Instance) -> dict:
    return {"sequence_id": i.sequence_id, "offset_us": i.offset, "length_us": i.length}


def _segments(groups) -> list:
    return [[_seg(i) for i in g.instances] for g in groups]


def segment_instances(seq: SequenceEntry, ticks: int = TICKS_PER_INSTANCE,
                      tick_period_us: int = TICK_PERIOD_US) -> tuple[list[Instance], int]:
    """Greedily cut fixed-length instances from the front; returns (instances, remainder_us)."""
    if ticks <= 0 or tick_period_us <= 0:
        raise FormatError("ticks and tick period must be positive")
    length = ticks * tick_period_us
    instances = []
    offset = 0
    while offset + length <= seq.duration:
        instances.append(Instance(sequence_id=seq.id, offset=offset, length=length))
        offset += length
    return instances, seq.duration - offset


def build_groups(instances: Sequence[Instance],
                 per_group: int = INSTANCES_PER_GROUP) -> tuple[list[Group], list[Instance]]:
    """Bundle consecutive instances per_group at a time; returns (groups, leftovers)."""
    if per_group < 1:
        raise FormatError("per_group must be >= 1")
    ordered = sorted(instances, key=lambda i: (i.sequence_id, i.offset))
    n_full = len(ordered) // per_group
    groups = [Group(instances=tuple(ordered[i * per_group:(i + 1) * per_group]))
              for i in range(n_full)]
    return groups, ordered[n_full * per_group:]


def compose_mix(real_groups: Sequence[Group], synthetic_groups: Sequence[Group],
                k: int) -> MixPlan:
    """k sevenths real, (7 - k) sevenths synthetic, constant total duration."""
    if not 0 <= k <= MIX_STEPS:
        raise FormatError(f"k must be in [0, {MIX_STEPS}], got {k}")
    need_syn = MIX_STEPS - k
    if len(real_groups) < k:
        raise CapacityError(f"need {k} real groups, have {len(real_groups)}")
    if len(synthetic_groups) < need_syn:
        raise CapacityError(f"need {need_syn} synthetic groups, have {len(synthetic_groups)}")
    real = tuple(sorted(real_groups, key=Group.sort_key)[:k])
    syn = tuple(sorted(synthetic_groups, key=Group.sort_key)[:need_syn])
    durations = {g.duration for g in (*real, *syn)}
    if len(durations) > 1:
        raise FormatError(f"groups have unequal durations: {sorted(durations)}")
    real_us = sum(g.duration for g in real)
    syn_us = sum(g.duration for g in syn)
    return MixPlan(k=k, real_groups=real, synthetic_groups=syn,
                   real_us=real_us, synthetic_us=syn_us,
                   fraction_real=Fraction(k, MIX_STEPS))


def _take(pool: Sequence[SequenceEntry], needed: int, used: dict) -> list[Instance]:
    """Cut `needed` microseconds from the pool, resuming after prior cuts."""
    segments = []
    for seq in sorted(pool, key=lambda s: s.id):
        if needed <= 0:
            break
        offset = used.get(seq.id, 0)
        avail = seq.duration - offset
        if avail <= 0:
            continue
        take = min(avail, needed)
        segments.append(Instance(sequence_id=seq.id, offset=offset, length=take))
        used[seq.id] = offset + take
        needed -= take
    if needed > 0:
        raise CapacityError(f"pool short by {needed} us")
    return segments


def fixed_eval_split(real_pool: Sequence[SequenceEntry],
                     synthetic_pool: Sequence[SequenceEntry]) -> tuple[SplitPlan, SplitPlan]:
    """Fixed validation (360 s real + 320 s synthetic) and test (180 s + 160 s) plans."""
    used_real: dict = {}
    used_syn: dict = {}
    validation = SplitPlan(
        name="validation",
        real_segments=tuple(_take(real_pool, VAL_REAL_US, used_real)),
        synthetic_segments=tuple(_take(synthetic_pool, VAL_SYNTHETIC_US, used_syn)))
    test = SplitPlan(
        name="test",
        real_segments=tuple(_take(real_pool, TEST_REAL_US, used_real)),
        synthetic_segments=tuple(_take(synthetic_pool, TEST_SYNTHETIC_US, used_syn)))
    return validation, test


def check_disjoint(segment_sets: Sequence[Sequence[Instance]]) -> None:
    """Raise if any (sequence id, offset range) overlaps across the given sets."""
    ranges: list[tuple[str, int, int]] = []
    for segs in segment_sets:
        for s in segs:
            ranges.append((s.sequence_id, s.offset, s.offset + s.length))
    ranges.sort()
    for (id_a, a0, a1), (id_b, b0, b1) in zip(ranges, ranges[1:]):
        if id_a == id_b and b0 < a1:
            raise FormatError(f"overlapping segments in sequence {id_a!r}: "
                              f"[{a0}, {a1}) and [{b0}, {b1})")


def plan_segments(plan: MixPlan) -> list[Instance]:
    return [i for g in (*plan.real_groups, *plan.synthetic_groups) for i in g.instances]


# --------------------------------------------------------------------------
# Manifest IO (CSV or TOML)

def decode_manifest_csv(data: bytes) -> list[SequenceEntry]:
    text = data.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("empty manifest") from None
    if [h.strip() for h in header] != MANIFEST_CSV_HEADER.split(","):
        raise FormatError(f"expected header {MANIFEST_CSV_HEADER!r}")
    entries = []
    for lineno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 5:
            raise FormatError(f"row {lineno}: expected 5 fields, got {len(row)}")
        try:
            entries.append(SequenceEntry(id=row[0], domain=row[1], condition=row[2],
                                         duration=int(row[3]), path=row[4]))
        except ValueError:
            raise FormatError(f"row {lineno}: unparsable duration {row[3]!r}") from None
    return entries


def decode_manifest_toml(data: bytes) -> list[SequenceEntry]:
    try:
        import tomllib
    except ImportError:                      # Python < 3.11
        import tomli as tomllib
    try:
        doc = tomllib.loads(data.decode("utf-8"))
    except Exception as exc:
        raise FormatError(f"invalid TOML manifest: {exc}") from None
    entries = []
    for i, item in enumerate(doc.get("sequences", [])):
        try:
            entries.append(SequenceEntry(
                id=str(item["id"]), domain=str(item["domain"]),
                condition=str(item["condition"]), duration=int(item["duration_us"]),
                path=str(item.get("path", ""))))
        except KeyError as exc:
            raise FormatError(f"sequence {i}: missing key {exc}") from None
    return entries


def load_manifest(path: str) -> list[SequenceEntry]:
    with open(path, "rb") as fp:
        data = fp.read()
    if path.endswith(".toml"):
        return decode_manifest_toml(data)
    return decode_manifest_csv(data)


def encode_manifest_csv(entries: Sequence[SequenceEntry]) -> bytes:
    lines = [MANIFEST_CSV_HEADER + "\n"]
    for e in entries:
        lines.append(f"{e.id},{e.domain},{e.condition},{e.duration},{e.path}\n")
    return "".join(lines).encode()


def pool_groups(entries: Sequence[SequenceEntry], domain: str) -> list[Group]:
    """Segment and group every manifest sequence of one domain."""
    instances: list[Instance] = []
    for seq in sorted((e for e in entries if e.domain == domain), key=lambda s: s.id):
        cut, _rem = segment_instances(seq)
        instances.extend(cut)
    groups, _leftover = build_groups(instances)
    return groups
