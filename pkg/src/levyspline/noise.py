"""Impulsive (compound-Poisson) noise sampling on boxes.

A realization is a finite set of (location, amplitude) impulses: the count
is Poisson(rate * volume), locations are i.i.d. uniform on the box, and
amplitudes are i.i.d. from a catalog jump law.  Everything is keyed by an
explicit (seed, stream) pair so ensembles are reproducible draw for draw.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exponents import JumpLaw
from .grid import Box, fmt17

# Resource guard: reject fields whose expected impulse count exceeds this.
MAX_EXPECTED_COUNT = 1e9


class NoiseError(Exception):
    """Invalid sampling request or malformed impulse data."""


@dataclass(frozen=True)
class RngStream:
    """Root seed plus stream index; (seed, index) pins the draw sequence."""

    seed: int
    index: int = 0

    def generator(self):
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.index,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, index):
        return RngStream(self.seed, index)


@dataclass(frozen=True, eq=False)
class ImpulseField:
    """Finite impulse set w = sum_k a_k delta(. - x_k) on a box.

    locations has shape (count, dim), amplitudes shape (count,).  seed and
    stream record the RngStream that produced the field.
    """

    dim: int
    box: Box
    locations: np.ndarray
    amplitudes: np.ndarray
    rate: float
    seed: int
    stream: int = 0

    def __post_init__(self):
        locs = np.asarray(self.locations, dtype=float).reshape(-1, self.dim)
        amps = np.asarray(self.amplitudes, dtype=float).reshape(-1)
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "amplitudes", amps)
        if locs.shape[0] != amps.shape[0]:
            raise NoiseError("locations and amplitudes must pair up")
        if self.box.dim != self.dim:
            raise NoiseError("box dimension must match field dimension")
        if locs.size and not np.all(self.box.contains(locs)):
            raise NoiseError("every impulse location must lie inside the box")

    @property
    def count(self):
        return self.amplitudes.shape[0]


def sample_impulse_field(dim, box, lam, jumps, rng):
    """Draw one Poisson impulse field on `box` with rate `lam`.

    Draw order is fixed (count, then locations, then amplitudes) so the
    same RngStream always reproduces the same field.
    """
    if not lam > 0.0:
        raise NoiseError("rate lam must be positive")
    if box.dim != dim:
        raise NoiseError("box dimension must match dim")
    if not isinstance(jumps, JumpLaw):
        raise NoiseError("jumps must be a JumpLaw")
    mean_count = lam * box.volume
    if mean_count > MAX_EXPECTED_COUNT:
        raise NoiseError(
            f"expected impulse count {mean_count:.3g} exceeds guard {MAX_EXPECTED_COUNT:g}"
        )
    gen = rng.generator()
    count = int(gen.poisson(mean_count))
    lo = np.asarray(box.lo)
    lengths = np.asarray(box.lengths)
    locations = lo + gen.random((count, dim)) * lengths
    amplitudes = jumps.sample(gen, count)
    return ImpulseField(
        dim=dim,
        box=box,
        locations=locations,
        amplitudes=amplitudes,
        rate=float(lam),
        seed=rng.seed,
        stream=rng.index,
    )


def merge_margin(field, margin, jumps=None, two_sided=False):
    """Resample the field on a box enlarged by `margin` per axis.

    Causal operators only need the enlargement on the low side; pass
    two_sided=True for decaying two-sided kernels.  margin=0 returns the
    field unchanged.  The point-process law on the enlarged box is the
    same homogeneous Poisson law, so a fresh draw on the bigger box is an
    exact construction.
    """
    if margin < 0:
        raise NoiseError("margin must be nonnegative")
    if margin == 0:
        return field
    if jumps is None:
        raise NoiseError("margin resampling needs the jump law")
    bigger = field.box.expand(margin, margin if two_sided else 0.0)
    return sample_impulse_field(
        field.dim, bigger, field.rate, jumps, RngStream(field.seed, field.stream)
    )


def write_impulse_csv(field, path):
    """Write `# dim=.. box=.. lambda=.. seed=..` header plus x[,y],amplitude rows."""
    lines = [
        f"# dim={field.dim} box={field.box.format()} "
        f"lambda={fmt17(field.rate)} seed={field.seed}"
    ]
    for loc, amp in zip(field.locations, field.amplitudes):
        cols = [fmt17(v) for v in loc] + [fmt17(amp)]
        lines.append(",".join(cols))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_impulse_csv(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# "):
            raise NoiseError(f"{path}: missing impulse header")
        meta = dict(tok.split("=", 1) for tok in header[2:].split())
        dim = int(meta["dim"])
        box = Box.parse(meta["box"])
        rows = [line.strip() for line in fh if line.strip()]
    data = (
        np.array([[float(v) for v in row.split(",")] for row in rows])
        if rows
        else np.zeros((0, dim + 1))
    )
    return ImpulseField(
        dim=dim,
        box=box,
        locations=data[:, :dim],
        amplitudes=data[:, dim],
        rate=float(meta["lambda"]),
        seed=int(meta["seed"]),
    )


def restrict_to_box(field, box):
    """Drop impulses outside `box` (used when cropping margined fields)."""
    keep = box.contains(field.locations) if field.count else np.zeros(0, dtype=bool)
    return replace(
        field,
        box=box,
        locations=field.locations[keep],
        amplitudes=field.amplitudes[keep],
    )
