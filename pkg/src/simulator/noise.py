"""Counter-based exogenous noise keyed by (seed, subject, variable, time).

Every (seed, variable, t) triple selects a Philox key; each subject owns a
fixed window of counter blocks under that key. A draw therefore depends only
on its key and subject index, never on which other variables were sampled,
on the intervention arm, or on how subjects were split across workers.
"""
from dataclasses import dataclass
import hashlib

import numpy as np
from scipy.special import ndtri

# Column slots of a draw. Gumbel variates fill the tail, one per class.
STAY, GATE, NORMAL, AUX, NORMAL_AUX = range(5)
GUMBEL_START = 5
DEFAULT_WIDTH = 64
WORDS_PER_BLOCK = 4
_UNIT = 2.0 ** -53


def variable_id(variable):
    return int.from_bytes(hashlib.blake2b(variable.encode("utf-8"), digest_size=8).digest(), "little")


def stream_key(seed, variable, t):
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.SeedSequence([int(seed), variable_id(variable), int(t)]).generate_state(2, np.uint64)


@dataclass(frozen=True)
class NoiseDraw:
    """Uniform variates in (0, 1), one row per subject of [start, stop)."""

    seed: int
    variable: str
    t: int
    start: int
    uniforms: np.ndarray

    @property
    def n(self):
        return self.uniforms.shape[0]

    @property
    def stay(self):
        return self.uniforms[:, STAY]

    @property
    def gate(self):
        return self.uniforms[:, GATE]

    @property
    def aux(self):
        return self.uniforms[:, AUX]

    @property
    def normal(self):
        return ndtri(self.uniforms[:, NORMAL])

    @property
    def normal_aux(self):
        return ndtri(self.uniforms[:, NORMAL_AUX])

    def gumbel(self, k):
        if GUMBEL_START + k > self.uniforms.shape[1]:
            raise ValueError(f"noise width {self.uniforms.shape[1]} cannot hold {k} Gumbel slots")
        return -np.log(-np.log(self.uniforms[:, GUMBEL_START:GUMBEL_START + k]))

    def subset(self, mask):
        return NoiseDraw(self.seed, self.variable, self.t, self.start, self.uniforms[mask])


class NoiseSource:
    """Draws noise blocks for one simulation seed."""

    def __init__(self, seed, width=DEFAULT_WIDTH):
        if width <= GUMBEL_START:
            raise ValueError(f"noise width must exceed {GUMBEL_START}")
        self.seed = int(seed)
        self.width = int(width)
        self.blocks_per_subject = -(-self.width // WORDS_PER_BLOCK)

    def block(self, variable, t, start, stop):
        m = stop - start
        words = self.blocks_per_subject * WORDS_PER_BLOCK
        counter = np.array([start * self.blocks_per_subject, 0, 0, 0], dtype=np.uint64)
        bitgen = np.random.Philox(key=stream_key(self.seed, variable, t), counter=counter)
        raw = bitgen.random_raw(m * words).reshape(m, words)[:, : self.width]
        uniforms = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _UNIT
        return NoiseDraw(self.seed, variable, int(t), int(start), uniforms)


def derive_noise(seed, subject, variable, t, width=DEFAULT_WIDTH):
    """Noise for a single subject; equals the matching row of any block containing it."""
    return NoiseSource(seed, width).block(variable, t, subject, subject + 1)
