"""Shared fixtures: the three-user two-window scenario and a desk-scale dataset.

The desk-scale dataset mimics the MovieLens-100K shape (943 users, 1682 items,
100000 rows, timestamps between 874724710 and 893286638) so runs exercise the
same configuration space. Point NEXTBATCH_ML100K_PATH at a real u.data file to
run against the original instead.
"""

from __future__ import annotations

import math
import os
import random
from bisect import bisect_right
from itertools import accumulate
from pathlib import Path

import pytest

from nextbatch.interactions import InteractionLog
from nextbatch.splitting import SplitConfig

# Background holds users u1/u2 and items 1/3/4. The first window covers
# [200, 300): u1 acts three times but only the earliest two become requests
# (truth items "2" and "6"), u2 once, u3 is unseen so far. The second window
# [300, 400] holds u3's next interaction, evaluable because u3 became known
# when the first window's data was released.
FIG1_EVENTS = [
    ("u1", "1", 50),
    ("u2", "4", 80),
    ("u1", "3", 120),
    ("u1", "2", 210),
    ("u2", "5", 230),
    ("u1", "6", 250),
    ("u3", "9", 260),
    ("u1", "7", 270),
    ("u3", "10", 400),
]

ML100K_N_USERS = 943
ML100K_N_ITEMS = 1682
ML100K_N_EVENTS = 100_000
ML100K_T_MIN = 874_724_710
ML100K_T_MAX = 893_286_638
ML100K_SPLIT_T = 875_156_710


@pytest.fixture
def fig1_log() -> InteractionLog:
    return InteractionLog.from_events(FIG1_EVENTS)


@pytest.fixture
def fig1_config() -> SplitConfig:
    return SplitConfig(
        t_background_end=200,
        n_windows=2,
        n_max_requests_per_user=2,
        include_unknown_users=False,
        include_unknown_items=True,
        k_values=(10,),
    )


def random_log(rng: random.Random, n_users=8, n_items=25, n_events=300, t_hi=1000) -> InteractionLog:
    events = [
        (
            f"u{rng.randrange(n_users)}",
            f"i{rng.randrange(n_items)}",
            rng.randrange(t_hi),
        )
        for _ in range(n_events)
    ]
    return InteractionLog.from_events(events)


def write_ml100k_shaped(path: Path) -> None:
    """Deterministic 100k-event file with the MovieLens-100K cardinalities.

    Item popularity is Zipf-like and the set of popular items drifts over
    time, so window-level scores move around instead of flatlining.
    """
    rng = random.Random(ML100K_T_MIN)
    n = ML100K_N_EVENTS

    timestamps = sorted(rng.randint(ML100K_T_MIN, ML100K_T_MAX) for _ in range(n))
    timestamps[0] = ML100K_T_MIN
    timestamps[-1] = ML100K_T_MAX

    user_weights = [1.0 / (r + 1) ** 0.7 for r in range(ML100K_N_USERS)]
    user_cdf = list(accumulate(user_weights))
    item_weights = [1.0 / (r + 1) ** 0.9 for r in range(ML100K_N_ITEMS)]
    item_cdf = list(accumulate(item_weights))

    def draw(cdf: list[float]) -> int:
        return bisect_right(cdf, rng.random() * cdf[-1])

    span = ML100K_T_MAX - ML100K_T_MIN
    users = list(range(1, ML100K_N_USERS + 1))
    items = list(range(1, ML100K_N_ITEMS + 1))
    rng.shuffle(users)
    rng.shuffle(items)

    rows = []
    for idx, t in enumerate(timestamps):
        if idx < ML100K_N_USERS:
            u = users[idx]
        else:
            u = draw(user_cdf) + 1
        if idx < ML100K_N_ITEMS:
            i = items[idx]
        else:
            # Rotate the popularity ranking as time advances, slowly enough
            # that neighboring windows still share most of their hot items.
            drift = int((t - ML100K_T_MIN) / span * 40)
            i = (draw(item_cdf) + drift) % ML100K_N_ITEMS + 1
        rating = rng.randint(1, 5)
        rows.append(f"{u}\t{i}\t{rating}\t{t}\n")

    rng.shuffle(rows)
    path.write_text("".join(rows), encoding="utf-8")


@pytest.fixture(scope="session")
def ml100k_path(tmp_path_factory) -> Path:
    override = os.environ.get("NEXTBATCH_ML100K_PATH")
    if override and Path(override).is_file():
        return Path(override)
    path = tmp_path_factory.mktemp("ml100k") / "u.data"
    write_ml100k_shaped(path)
    return path


def ndcg_at(rank: int | None, k: int) -> float:
    if rank is None or rank > k:
        return 0.0
    return 1.0 / math.log2(rank + 1)
