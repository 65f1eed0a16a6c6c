"""Procedural maps standing in for the StarCraft benchmark maps.

The generator scatters rectangular plateaus and long walls with gaps over a
64x64 field, so that majority-vote downscaling to 32x32 or 16x16 still
leaves corridors and chokepoints. ``data/maps`` ships 30 maps produced by
:func:`write_bundled_maps`.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .gridworld import GridMap, downscale_map, load_map, reachable_mask, save_map

BUNDLED_SIZE = 64
NUM_BUNDLED = 30
NUM_TEST_MAPS = 6


def random_map(rng: np.random.Generator, size: int = BUNDLED_SIZE, name: str = "map") -> GridMap:
    blocked = np.zeros((size, size), dtype=bool)
    unit = size // 16
    for _ in range(rng.integers(5, 10)):
        h = int(rng.integers(2, 5)) * unit
        w = int(rng.integers(2, 5)) * unit
        r = int(rng.integers(0, size - h + 1))
        c = int(rng.integers(0, size - w + 1))
        blocked[r:r + h, c:c + w] = True
    for _ in range(rng.integers(1, 3)):
        thick = int(rng.integers(1, 3)) * unit
        pos = int(rng.integers(2 * unit, size - 2 * unit - thick))
        gaps = rng.choice(size // unit, size=int(rng.integers(2, 4)), replace=False)
        wall = np.ones(size, dtype=bool)
        for g in gaps:
            wall[g * unit:(g + 2) * unit] = False
        if rng.random() < 0.5:
            blocked[pos:pos + thick, :] |= wall[None, :]
        else:
            blocked[:, pos:pos + thick] |= wall[:, None]
    passable = ~blocked
    return GridMap(_largest_component(passable), name=name)


def _largest_component(passable: np.ndarray) -> np.ndarray:
    """Block off every region except the largest connected one."""
    m = GridMap(passable)
    remaining = passable.copy()
    best = np.zeros_like(passable)
    while remaining.any():
        r, c = np.argwhere(remaining)[0]
        comp = reachable_mask(m, (int(r), int(c)))
        if comp.sum() > best.sum():
            best = comp
        remaining &= ~comp
    return best


def map_names() -> list[str]:
    return [f"synth{i:02d}" for i in range(NUM_BUNDLED)]


def write_bundled_maps(directory, seed: int = 2021) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    out = []
    for name in map_names():
        path = directory / f"{name}.map"
        save_map(random_map(rng, name=name), path)
        out.append(path)
    return out


def bundled_map_paths() -> list[Path]:
    root = resources.files("goalrec") / "data" / "maps"
    return [Path(str(root / f"{name}.map")) for name in map_names()]


def load_bundled_maps(size: int = BUNDLED_SIZE) -> dict[str, GridMap]:
    """Bundled maps, downscaled to ``size x size`` (keyed by name)."""
    if BUNDLED_SIZE % size:
        raise ValueError(f"size must divide {BUNDLED_SIZE}")
    maps = {}
    for path in bundled_map_paths():
        m = load_map(path)
        m = downscale_map(m, BUNDLED_SIZE // size)
        maps[m.name] = GridMap(_largest_component(m.passable), name=m.name)
    return maps


def bundled_split(size: int = 16) -> tuple[dict[str, GridMap], dict[str, GridMap]]:
    """Disjoint train and test map sets; the last six maps are held out for testing."""
    maps = load_bundled_maps(size)
    names = map_names()
    train = {n: maps[n] for n in names[:-NUM_TEST_MAPS]}
    test = {n: maps[n] for n in names[-NUM_TEST_MAPS:]}
    return train, test
