"""Counter-keyed random streams.

Every draw is a pure function of ``(seed, stream, *counters)``: the key is
hashed with :class:`numpy.random.SeedSequence` into a Philox key, so a block
drawn for iteration ``i`` at site ``l`` never depends on what was drawn
before it.  Resuming a run at any iteration therefore reproduces the noise
of the uninterrupted run.
"""

from __future__ import annotations

import numpy as np

# stream ids; fixed forever so snapshots stay reproducible
GATE = 1
MINIBATCH = 2
DATASET = 3
INIT = 4
AUX = 5


def generator(seed: int, stream: int, *counters: int) -> np.random.Generator:
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream)] + [int(c) for c in counters]
    ss = np.random.SeedSequence(words)
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))


def gate_uniforms(seed: int, iteration: int, site: int, n: int, c: int) -> np.ndarray:
    """``x[n, c] ~ U(0, 1)`` for one gate at one iteration."""
    return generator(seed, GATE, iteration, site).random((n, c))


def minibatch_indices(seed: int, iteration: int, population: int, batch: int) -> np.ndarray:
    return generator(seed, MINIBATCH, iteration).integers(0, population, size=batch)
