"""Multichannel slotted-ALOHA contention."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class ContentionOutcome:
    successes: list[tuple[int, int]]
    collided_channels: list[int]
    attempted: int
    idle_channels: int

    @property
    def busy_channels(self) -> int:
        return len(self.successes) + len(self.collided_channels)

    @property
    def winners(self) -> list[int]:
        return [user for user, _ in self.successes]


def contend(transmitters: Iterable[int], M: int, rng: np.random.Generator) -> ContentionOutcome:
    """Each transmitter picks one of ``M`` channels uniformly; lone occupants succeed.

    Channels are drawn in the order the transmitters are given.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    users = np.asarray(list(transmitters), dtype=int)
    channels = rng.integers(0, M, size=users.size)
    load = np.bincount(channels, minlength=M)
    alone = load[channels] == 1
    return ContentionOutcome(
        successes=[(int(u), int(c)) for u, c in zip(users[alone], channels[alone])],
        collided_channels=[int(c) for c in np.flatnonzero(load > 1)],
        attempted=int(users.size),
        idle_channels=int(np.count_nonzero(load == 0)),
    )
