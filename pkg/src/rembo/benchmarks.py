"""Test functions embedded in a high-dimensional hypercube.

Each benchmark acts on ``d_e`` active coordinates of ``x`` in ``[-1, 1]^D``,
chosen by a seeded draw; the remaining coordinates are ignored. Active
coordinates are rescaled affinely to the function's native domain.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import RegistryError


def branin(z):
    x1, x2 = z[..., 0], z[..., 1]
    b = 5.1 / (4 * math.pi ** 2)
    c = 5 / math.pi
    t = 1 / (8 * math.pi)
    return (x2 - b * x1 ** 2 + c * x1 - 6) ** 2 + 10 * (1 - t) * np.cos(x1) + 10


def giunta(z):
    arg = 16 * z / 15 - 1
    return 0.6 + np.sum(np.sin(arg) + np.sin(arg) ** 2 + np.sin(4 * arg) / 50, axis=-1)


_H6_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H6_A = np.array([
    [10, 3, 17, 3.5, 1.7, 8],
    [0.05, 10, 17, 0.1, 8, 14],
    [3, 3.5, 1.7, 10, 17, 8],
    [17, 8, 0.05, 10, 0.1, 14],
])
_H6_P = 1e-4 * np.array([
    [1312, 1696, 5569, 124, 8283, 5886],
    [2329, 4135, 8307, 3736, 1004, 9991],
    [2348, 1451, 3522, 2883, 3047, 6650],
    [4047, 8828, 8732, 5743, 1091, 381],
])


def hartman6(z):
    inner = np.sum(_H6_A * (z[..., None, :] - _H6_P) ** 2, axis=-1)
    return -np.sum(_H6_ALPHA * np.exp(-inner), axis=-1)


def borehole(z):
    rw, r, Tu, Hu, Tl, Hl, L, Kw = (z[..., k] for k in range(8))
    lr = np.log(r / rw)
    return 2 * math.pi * Tu * (Hu - Hl) / (lr * (1 + 2 * L * Tu / (lr * rw ** 2 * Kw) + Tu / Tl))


def levy(z):
    w = 1 + (z - 1) / 4
    head = np.sin(math.pi * w[..., 0]) ** 2
    mid = np.sum((w[..., :-1] - 1) ** 2 * (1 + 10 * np.sin(math.pi * w[..., :-1] + 1) ** 2), axis=-1)
    tail = (w[..., -1] - 1) ** 2 * (1 + np.sin(2 * math.pi * w[..., -1]) ** 2)
    return head + mid + tail


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    func: Callable
    lower: tuple
    upper: tuple
    f_min: float
    argmin: tuple
    default_D: tuple = ()

    @property
    def d_e(self) -> int:
        return len(self.lower)


_BOREHOLE_LO = (0.05, 100.0, 63070.0, 990.0, 63.1, 700.0, 1120.0, 9855.0)
_BOREHOLE_HI = (0.15, 50000.0, 115600.0, 1110.0, 116.0, 820.0, 1680.0, 12045.0)
# monotone in every input: minimum at this corner
_BOREHOLE_ARGMIN = (0.05, 50000.0, 63070.0, 990.0, 63.1, 820.0, 1680.0, 9855.0)

REGISTRY = {
    "branin": BenchmarkSpec(
        "branin", branin, (-5.0, 0.0), (10.0, 15.0), 0.397887357729738,
        (math.pi, 2.275), (25, 100)),
    "giunta": BenchmarkSpec(
        "giunta", giunta, (-1.0, -1.0), (1.0, 1.0), 0.06447042053690566,
        (0.4673200277395354, 0.4673200169591304), (80,)),
    "hartman6": BenchmarkSpec(
        "hartman6", hartman6, (0.0,) * 6, (1.0,) * 6, -3.322368011415515,
        (0.20168952, 0.15001069, 0.47687398, 0.27533243, 0.31165162, 0.65730054), (50, 200)),
    "borehole": BenchmarkSpec(
        "borehole", borehole, _BOREHOLE_LO, _BOREHOLE_HI,
        float(borehole(np.array(_BOREHOLE_ARGMIN))), _BOREHOLE_ARGMIN, (50,)),
    "levy": BenchmarkSpec(
        "levy", levy, (-10.0,) * 10, (10.0,) * 10, 0.0, (1.0,) * 10, (80,)),
}


def name_key(name: str) -> int:
    """Stable integer key for a name (independent of hash randomization)."""
    return zlib.crc32(name.encode())


@dataclass(frozen=True, eq=False)
class Objective:
    """A benchmark lifted to ``[-1, 1]^D``.

    Attributes
    ----------
    spec : BenchmarkSpec
    D : int
    active : ndarray of int
        Indices of the coordinates the function depends on, in the order
        they feed the native arguments.
    """

    spec: BenchmarkSpec
    D: int
    active: np.ndarray
    seed: int | None = None

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def d_e(self) -> int:
        return self.spec.d_e

    @property
    def f_min(self) -> float:
        return self.spec.f_min

    def to_native(self, x):
        z = np.asarray(x, dtype=float)[..., self.active]
        lo = np.asarray(self.spec.lower)
        hi = np.asarray(self.spec.upper)
        return lo + (z + 1.0) * 0.5 * (hi - lo)

    def from_native(self, z):
        """A point of the hypercube (zeros off the active set) mapping to ``z``."""
        lo = np.asarray(self.spec.lower)
        hi = np.asarray(self.spec.upper)
        x = np.zeros(self.D)
        x[self.active] = 2.0 * (np.asarray(z, dtype=float) - lo) / (hi - lo) - 1.0
        return x

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.D:
            raise ValueError(f"expected points of dimension {self.D}, got {x.shape[-1]}")
        out = self.spec.func(self.to_native(x))
        return float(out) if np.ndim(out) == 0 else out

    def metadata(self) -> dict:
        return {
            "name": self.name, "D": self.D, "d_e": self.d_e, "seed": self.seed,
            "active": [int(i) for i in self.active], "f_min": self.f_min,
            "lower": list(self.spec.lower), "upper": list(self.spec.upper),
            "rescaling": "native = lower + (x + 1) / 2 * (upper - lower)",
        }


def make_objective(name: str, D: int, seed=None) -> Objective:
    """Instantiate a registered benchmark in dimension ``D``.

    The active coordinates depend only on ``(seed, name, D)``, so every
    method run with the same seed sees the same instance.

    Raises
    ------
    RegistryError
        For unknown names.
    """
    try:
        spec = REGISTRY[name.lower()]
    except KeyError:
        raise RegistryError(f"unknown objective {name!r}; known: {sorted(REGISTRY)}") from None
    if D < spec.d_e:
        raise ValueError(f"{name} needs D >= {spec.d_e}")
    if seed is None:
        rng = np.random.default_rng()
    else:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), name_key(spec.name), int(D)]))
    active = rng.choice(D, size=spec.d_e, replace=False)
    active.setflags(write=False)
    return Objective(spec, int(D), active, seed=None if seed is None else int(seed))
