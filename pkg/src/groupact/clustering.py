"""Seed-centered clustering of people into symmetric groups.

Seeds are people with a sudden body-size change or pairs whose mutual
correlation exceeds a threshold under one shared grouping label.  Seeds with
all-pairs label agreement merge; each seed's members are averaged per frame
into a seed representative, and everyone else joins the representative that
correlates best under a grouping label, or stays a singleton.  Only
person-to-representative values are consulted in the assignment step, which
sidesteps the asymmetry of the correlation metric.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import features as feats
from .seqmodel import ActivityModelBank, CorrelationEngine, CorrelationProfile
from .taxonomy import SINGLE
from .trackio import TrackSet


@dataclass(frozen=True)
class ClusterSeed:
    """A nucleus of one symmetric group.

    ``kind`` is "active" (single person with body-size change), "pair"
    (mutual high correlation), or "merged".  ``active_members`` records which
    members were active-person seeds; ``strength`` is the binding pair
    correlation (or the body-size change for active seeds), used only to
    resolve overlap conflicts deterministically.
    """

    members: tuple[int, ...]
    kind: str
    label: str | None = None
    active_members: tuple[int, ...] = ()
    strength: float = 0.0


@dataclass(frozen=True)
class SeedRepresentative:
    """Per-frame average of a seed's members over the correlation window."""

    seed: ClusterSeed
    members: tuple[int, ...]
    frame: int
    window: int

    def track(self, tracks: TrackSet) -> feats.EntityTrack:
        return feats.EntityTrack(tracks, self.members, self.frame - self.window, self.frame)


@dataclass(frozen=True)
class GroupAssignment:
    members: tuple[int, ...]
    seed_members: tuple[int, ...]
    assigned_members: tuple[int, ...]
    label: str | None


@dataclass(frozen=True)
class Partition:
    """Disjoint, exhaustive assignment of observable persons at one frame."""

    frame: int
    persons: tuple[int, ...]
    groups: tuple[GroupAssignment, ...]

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for g in self.groups:
            if seen.intersection(g.members):
                raise ValueError(f"overlapping groups at frame {self.frame}")
            seen.update(g.members)
        if seen != set(self.persons):
            raise ValueError(f"partition does not cover the frame-{self.frame} universe")

    def group_of(self, person: int) -> int:
        for i, g in enumerate(self.groups):
            if person in g.members:
                return i
        raise KeyError(person)

    def member_sets(self) -> list[frozenset[int]]:
        return [frozenset(g.members) for g in self.groups]


ProfileMap = dict[tuple[tuple[int, ...], tuple[int, ...]], CorrelationProfile | None]


def _person_profiles(
    bank: ActivityModelBank,
    tracks: TrackSet,
    t: int,
    persons,
    engine: CorrelationEngine | None,
) -> ProfileMap:
    items = [((a,), (b,)) for a in persons for b in persons if a != b]
    if engine is None:
        engine = CorrelationEngine(bank, tracks)
    return engine.profiles(items, t)


def _pair_label(profiles: ProfileMap, a: int, b: int) -> str | None:
    p = profiles.get(((a,), (b,)))
    return None if p is None else p.label


def detect_seeds(
    bank: ActivityModelBank,
    tracks: TrackSet,
    t: int,
    tc: float | None = None,
    to: float | None = None,
    profiles: ProfileMap | None = None,
    engine: CorrelationEngine | None = None,
) -> list[ClusterSeed]:
    """Active-person seeds plus mutually high-correlation pair seeds at frame t."""
    tc = bank.tc if tc is None else tc
    to = bank.to if to is None else to
    tax = bank.taxonomy
    present = tracks.observable_persons(t)
    if profiles is None:
        profiles = _person_profiles(bank, tracks, t, present, engine)
    seeds: list[ClusterSeed] = []
    for i in present:
        change = feats.body_size_change(tracks, i, t)
        if change > tc:
            seeds.append(ClusterSeed((i,), "active", None, (i,), change))
    for ia, a in enumerate(present):
        for b in present[ia + 1 :]:
            pab = profiles.get(((a,), (b,)))
            pba = profiles.get(((b,), (a,)))
            if pab is None or pba is None:
                continue
            if pab.label != pba.label or not tax.is_grouping(pab.label):
                continue
            lbl = pab.label
            if pab.values[lbl] > to and pba.values[lbl] > to:
                strength = min(pab.values[lbl], pba.values[lbl])
                seeds.append(ClusterSeed((a, b), "pair", lbl, (), strength))
    return seeds


def _cross_label_agreement(
    members_a, label_a, members_b, label_b, profiles: ProfileMap, tax
) -> str | None:
    """The single grouping label all cross pairs agree on, or None."""
    if label_a is not None and label_b is not None and label_a != label_b:
        return None
    candidate = label_a or label_b
    for x in members_a:
        for y in members_b:
            if x == y:
                continue
            for i, j in ((x, y), (y, x)):
                lbl = _pair_label(profiles, i, j)
                if lbl is None:
                    return None
                if candidate is None:
                    candidate = lbl
                if lbl != candidate:
                    return None
    if candidate is None or not tax.is_grouping(candidate):
        return None
    return candidate


def merge_seeds(
    seeds: list[ClusterSeed],
    profiles: ProfileMap,
    taxonomy=None,
) -> list[ClusterSeed]:
    """Merge seeds whose cross labels all agree on one grouping activity.

    Merging requires agreement over every ordered cross pair, so chained
    merges still imply all-pairs consistency inside the final seed.  Seeds
    that overlap but cannot merge are resolved in favour of the stronger
    seed; a stripped seed survives only with two or more members or an
    active remnant.
    """
    from .taxonomy import default_taxonomy

    tax = taxonomy or default_taxonomy()
    work = [
        {
            "members": set(s.members),
            "label": s.label,
            "active": set(s.active_members),
            "strength": s.strength,
            "merged": False,
        }
        for s in sorted(seeds, key=lambda s: (min(s.members), len(s.members), s.members))
    ]
    changed = True
    while changed:
        changed = False
        for i in range(len(work)):
            for j in range(i + 1, len(work)):
                a, b = work[i], work[j]
                lbl = _cross_label_agreement(
                    sorted(a["members"]), a["label"], sorted(b["members"]), b["label"],
                    profiles, tax,
                )
                if lbl is None:
                    continue
                a["members"] |= b["members"]
                a["active"] |= b["active"]
                a["label"] = lbl
                a["strength"] = max(a["strength"], b["strength"])
                a["merged"] = True
                del work[j]
                changed = True
                break
            if changed:
                break

    # disjointness: stronger seeds keep contested members
    order = sorted(
        range(len(work)),
        key=lambda i: (-work[i]["strength"], min(work[i]["members"])),
    )
    claimed: set[int] = set()
    out = []
    for i in order:
        w = work[i]
        kept = set(w["members"]) - claimed
        if not kept:
            continue
        if kept != w["members"]:
            # stripped by a stronger overlapping seed
            if len(kept) < 2 and not (kept & w["active"]):
                continue
            if len(kept) < 2:
                w["label"] = None  # lone active remnant loses the pair label
        claimed |= kept
        members = tuple(sorted(kept))
        kind = "merged" if w["merged"] else ("pair" if len(members) > 1 else "active")
        out.append(
            ClusterSeed(
                members, kind, w["label"],
                tuple(sorted(kept & w["active"])), w["strength"],
            )
        )
    out.sort(key=lambda s: s.members)
    return out


def seed_representatives(
    seeds: list[ClusterSeed], tracks: TrackSet, t: int, window: int
) -> list[SeedRepresentative]:
    """One per-frame member average per seed over the window ending at t."""
    return [SeedRepresentative(s, s.members, t, window) for s in seeds]


def assign_remaining(
    bank: ActivityModelBank,
    tracks: TrackSet,
    t: int,
    seeds: list[ClusterSeed],
    srs: list[SeedRepresentative],
    engine: CorrelationEngine | None = None,
) -> Partition:
    """Attach non-seed people to their best representative, or leave them single.

    Person i joins the representative K with the highest correlation value
    under i's best label toward K, provided that label is a grouping
    activity; only person-to-representative values are used.
    """
    tax = bank.taxonomy
    present = tracks.observable_persons(t)
    if engine is None:
        engine = CorrelationEngine(bank, tracks)
    seeded = {m for s in seeds for m in s.members}
    remaining = [p for p in present if p not in seeded]
    joined: dict[int, list[int]] = {i: [] for i in range(len(srs))}
    items = [((p,), sr.members) for p in remaining for sr in srs]
    profs = engine.profiles(items, t) if items else {}
    for p in remaining:
        best_idx = None
        best_val = -1.0
        for idx, sr in enumerate(srs):
            prof = profs.get(((p,), sr.members))
            if prof is None:
                continue
            lbl = prof.label
            if not tax.is_grouping(lbl):
                continue
            val = prof.values[lbl]
            if val > best_val:
                best_val, best_idx = val, idx
        if best_idx is not None:
            joined[best_idx].append(p)

    groups = []
    for idx, seed in enumerate(seeds):
        members = tuple(sorted(set(seed.members) | set(joined[idx])))
        label = seed.label
        if len(members) == 1 and label is None:
            label = SINGLE
        groups.append(
            GroupAssignment(members, seed.members, tuple(sorted(joined[idx])), label)
        )
    assigned_all = {m for g in groups for m in g.members}
    for p in present:
        if p not in assigned_all:
            groups.append(GroupAssignment((p,), (), (), SINGLE))
    groups.sort(key=lambda g: g.members)
    return Partition(t, tuple(present), tuple(groups))
