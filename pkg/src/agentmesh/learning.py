"""Per-user interpretation-policy store and the learning procedures around it.

Each agent's policy has two tiers: an immutable preset tier shared by all
users, and a learned tier acquired per user by memorizing disambiguation
answers. Feedback adjusts learned weights; a system or per-user reset drops
the learned tier and falls back to the presets.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

GLOBAL_USER = "GLOBAL"

#: Entry target meaning "this agent's own process unit".
SELF = "SELF"

_TOKEN_RE = re.compile(r"[a-z0-9']+")


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercased whole tokens of a request text."""
    return tuple(_TOKEN_RE.findall(text.lower()))


class LearningError(ValueError):
    pass


class KbFormatError(ValueError):
    """A knowledge-base file could not be parsed; the store is unchanged."""


@dataclass(frozen=True)
class PolicyEntry:
    """One interpretation rule: a token pattern mapped to a community or SELF.

    Single-token patterns match by token presence; multi-token patterns match
    the whole normalized request (memorization, deliberately without
    generalization).
    """

    pattern: tuple[str, ...]
    target: str
    provenance: str  # "preset" | "learned"
    weight: float = 1.0
    user: str = GLOBAL_USER
    created_step: int = 0

    def __post_init__(self):
        if not self.pattern:
            raise LearningError("empty pattern")
        if self.provenance not in ("preset", "learned"):
            raise LearningError(f"bad provenance {self.provenance!r}")
        if self.provenance == "preset" and self.user != GLOBAL_USER:
            raise LearningError("preset entries are global")
        if self.provenance == "learned" and self.user == GLOBAL_USER:
            raise LearningError("learned entries need a concrete user")
        if not 0.0 <= self.weight <= 1.0:
            raise LearningError(f"weight {self.weight} outside [0,1]")

    def matches(self, tokens: tuple[str, ...]) -> bool:
        if len(self.pattern) == 1:
            return self.pattern[0] in tokens
        return tokens == self.pattern


@dataclass
class LearningConfig:
    """Knobs for feedback-driven weight updates.

    Defaults are chosen so two consecutive negative feedbacks un-learn an
    entry (1.0 -> 0.5 -> 0.25 <= threshold), re-opening the request for
    disambiguation.
    """

    decay_factor: float = 0.5
    removal_threshold: float = 0.25
    reinforcement_fraction: float = 0.5


@dataclass
class Resolution:
    """Outcome of contradiction resolution: dispatch or ask the user."""

    kind: str  # "dispatch" | "ask-user"
    claimant: str | None = None
    question: str | None = None
    options: list[str] = field(default_factory=list)


def phrase_question(options: Iterable[str]) -> str:
    opts = list(options)
    if len(opts) == 1:
        return f"Do you mean {opts[0]}?"
    return f"Do you mean {', '.join(opts[:-1])} or {opts[-1]}?"


def resolve_by_priority(claims: list[tuple[str, int]]) -> Resolution:
    """Pick a unique strictly-dominant claimant by priority, else ask the user.

    `claims` is (claimant name, priority). Ties always go to the user; the
    question lists claimants in sorted order.
    """
    if not claims:
        raise LearningError("resolve needs at least one claim")
    by_claimant: dict[str, int] = {}
    for name, p in claims:
        by_claimant[name] = max(p, by_claimant.get(name, p))
    best = max(by_claimant.values())
    winners = sorted(name for name, p in by_claimant.items() if p == best)
    if len(winners) == 1 and len(by_claimant) > 1:
        return Resolution(kind="dispatch", claimant=winners[0])
    if len(by_claimant) == 1:
        return Resolution(kind="dispatch", claimant=winners[0])
    options = sorted(by_claimant)
    return Resolution(kind="ask-user", question=phrase_question(options), options=options)


class PolicyStore:
    """All agents' policies, keyed by agent name so replacements inherit them.

    The store is a single-writer resource; `view` snapshots the lookup order
    for one (agent, user) pair at interpretation time.
    """

    def __init__(self, config: LearningConfig | None = None):
        self.config = config or LearningConfig()
        self._preset: dict[str, list[PolicyEntry]] = {}
        self._learned: dict[str, dict[str, list[PolicyEntry]]] = {}
        self._step = 0

    def _tick(self) -> int:
        self._step += 1
        return self._step

    def register_presets(self, agent: str, entries: Iterable[PolicyEntry]) -> None:
        bucket = self._preset.setdefault(agent, [])
        for e in entries:
            if e.provenance != "preset":
                raise LearningError("register_presets takes preset entries only")
            bucket.append(replace(e, created_step=self._tick()))

    def view(self, agent: str, user: str) -> list[PolicyEntry]:
        """Entries for (agent, user): learned tier first, then presets.

        Within a tier: longer pattern first, then higher weight, then older.
        """
        learned = list(self._learned.get(agent, {}).get(user, []))
        preset = list(self._preset.get(agent, []))
        key = lambda e: (-len(e.pattern), -e.weight, e.created_step)
        return sorted(learned, key=key) + sorted(preset, key=key)

    def lookup(self, agent: str, user: str, text: str) -> list[PolicyEntry]:
        tokens = tokenize(text)
        return [e for e in self.view(agent, user) if e.matches(tokens)]

    def learn_mapping(
        self, agent: str, user: str, text: str, community: str, known_communities: set[str] | None = None
    ) -> PolicyEntry:
        """Memorize the whole normalized phrase as routing to `community`.

        Re-teaching the same mapping is a no-op; re-teaching the same phrase
        to a different target replaces the old entry (the user changed their
        mind, the old rule is now known wrong).
        """
        if known_communities is not None and community not in known_communities:
            raise LearningError(f"unknown community {community!r} for agent {agent!r}")
        pattern = tokenize(text)
        if not pattern:
            raise LearningError("cannot learn an empty phrase")
        bucket = self._learned.setdefault(agent, {}).setdefault(user, [])
        for i, e in enumerate(bucket):
            if e.pattern == pattern:
                if e.target == community:
                    return e
                new = PolicyEntry(pattern, community, "learned", 1.0, user, self._tick())
                bucket[i] = new
                return new
        new = PolicyEntry(pattern, community, "learned", 1.0, user, self._tick())
        bucket.append(new)
        return new

    def apply_feedback_conflict(self, agent: str, user: str, text: str, reward: float) -> None:
        """Adjust learned entries matching (user, text) per the reward's sign.

        Negative rewards decay the weight and eventually remove the entry;
        positive rewards close half the remaining gap to 1. No-op when no
        learned entry matches.
        """
        if reward == 0:
            return
        bucket = self._learned.get(agent, {}).get(user)
        if not bucket:
            return
        tokens = tokenize(text)
        cfg = self.config
        kept: list[PolicyEntry] = []
        for e in bucket:
            if not e.matches(tokens):
                kept.append(e)
                continue
            if reward < 0:
                w = e.weight * cfg.decay_factor
                if w <= cfg.removal_threshold:
                    continue  # un-learned; future requests re-query
            else:
                w = e.weight + (1.0 - e.weight) * cfg.reinforcement_fraction
            kept.append(replace(e, weight=min(1.0, max(0.0, w))))
        bucket[:] = kept

    def reset(self, scope: str = "system", user: str | None = None) -> None:
        """Drop learned entries: all of them, or one user's. Presets stay."""
        if scope == "system":
            self._learned.clear()
        elif scope == "user":
            if user is None:
                raise LearningError("user scope needs a user id")
            for per_agent in self._learned.values():
                per_agent.pop(user, None)
        else:
            raise LearningError(f"unknown reset scope {scope!r}")

    # -- persistence ------------------------------------------------------

    def dumps_kb(self) -> str:
        """Learned entries as text, one JSON record per line."""
        lines = []
        for agent in sorted(self._learned):
            for user in sorted(self._learned[agent]):
                for e in self._learned[agent][user]:
                    lines.append(
                        json.dumps(
                            {
                                "agent": agent,
                                "user": user,
                                "pattern": list(e.pattern),
                                "target": e.target,
                                "weight": e.weight,
                                "provenance": e.provenance,
                            },
                            ensure_ascii=False,
                            separators=(",", ":"),
                        )
                    )
        return "\n".join(lines) + ("\n" if lines else "")

    def save_kb(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps_kb(), encoding="utf-8")

    def loads_kb(self, text: str) -> None:
        """Replace the learned tier with the text's contents.

        Parses everything before touching the store, so a malformed input
        leaves prior state intact.
        """
        staged: dict[str, dict[str, list[PolicyEntry]]] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                entry = PolicyEntry(
                    pattern=tuple(raw["pattern"]),
                    target=raw["target"],
                    provenance=raw["provenance"],
                    weight=float(raw["weight"]),
                    user=raw["user"],
                    created_step=self._step + lineno,
                )
                agent = raw["agent"]
            except (json.JSONDecodeError, KeyError, TypeError, LearningError) as exc:
                raise KbFormatError(f"line {lineno}: {exc}") from None
            if entry.provenance != "learned":
                raise KbFormatError(f"line {lineno}: only learned entries are persisted")
            staged.setdefault(agent, {}).setdefault(entry.user, []).append(entry)
        self._learned = staged
        self._step += len(text.splitlines())

    def load_kb(self, path: str | Path) -> None:
        self.loads_kb(Path(path).read_text(encoding="utf-8"))

    def learned_entries(self) -> list[tuple[str, PolicyEntry]]:
        """(agent, entry) pairs for every learned entry; test/inspection aid."""
        out = []
        for agent in sorted(self._learned):
            for user in sorted(self._learned[agent]):
                out.extend((agent, e) for e in self._learned[agent][user])
        return out
