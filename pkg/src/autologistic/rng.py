"""Labeled, replayable random streams for reproducible Monte Carlo.

A :class:`RngStream` is identified by a master seed plus a path of labels
(ints or strings). Two streams with the same (seed, path) produce identical
draws on every run, platform, and worker layout; streams with different
paths are statistically independent. Draws are *replayable*: each call to
:meth:`RngStream.generator` returns a freshly seeded generator, so
``stream.uniforms(shape)`` is a pure function of (seed, path, shape). This
is what lets coupling-from-the-past re-read the random numbers of past
sweeps instead of storing them.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["RngStream"]

_INT_TAG = 0
_STR_TAG = 1


def _label_words(label) -> tuple[int, ...]:
    """Map one label to tagged uint32 words for SeedSequence spawn keys."""
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"integer labels must be nonnegative, got {label}")
        value = int(label)
        words = [_INT_TAG]
        while True:
            words.append(value & 0xFFFFFFFF)
            value >>= 32
            if value == 0:
                return tuple(words)
    if isinstance(label, str):
        digest = hashlib.blake2s(label.encode("utf-8"), digest_size=8).digest()
        return (
            _STR_TAG,
            int.from_bytes(digest[:4], "little"),
            int.from_bytes(digest[4:], "little"),
        )
    raise TypeError(f"stream labels must be int or str, got {type(label).__name__}")


class RngStream:
    """Deterministic stream tree rooted at a 64-bit seed.

    Parameters
    ----------
    seed : int
        Master seed.
    _path : tuple, internal
        Accumulated label words; use :meth:`child` instead of passing this.
    """

    def __init__(self, seed: int, _path: tuple = ()):
        self.seed = int(seed)
        self._path = _path

    def child(self, *labels) -> "RngStream":
        """Derive the sub-stream identified by ``labels``."""
        path = self._path
        for lab in labels:
            path = path + _label_words(lab)
        return RngStream(self.seed, path)

    def generator(self) -> np.random.Generator:
        """A freshly seeded Philox generator for this stream.

        Repeated calls return generators in the *same* initial state; the
        stream identity, not call order, determines the draws.
        """
        seq = np.random.SeedSequence(self.seed, spawn_key=self._path)
        return np.random.Generator(np.random.Philox(seq))

    def uniforms(self, shape) -> np.ndarray:
        """Uniform(0,1) array; identical on every call with the same shape."""
        return self.generator().random(shape)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self._path})"
