"""Reproducible random streams derived from a master seed."""

import zlib

import numpy as np

# Scope tags used by the runners. Codebooks and trials never share a tag, so
# changing the trial count leaves the codebook untouched.
CODEBOOK = "codebook"
TRIAL = "trial"


def _tag(scope_tag: str) -> int:
    return zlib.crc32(scope_tag.encode("utf-8"))


def seed_sequence(master_seed: int, scope_tag: str, index: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=(_tag(scope_tag), int(index)))


def derive_stream(master_seed: int, scope_tag: str, trial_index: int = 0) -> np.random.Generator:
    """Independent generator for ``(scope_tag, trial_index)`` under ``master_seed``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, scope_tag, trial_index)))


def derive_seed(master_seed: int, scope_tag: str, index: int = 0) -> int:
    """A 64-bit integer seed, e.g. for codebook generation."""
    return int(seed_sequence(master_seed, scope_tag, index).generate_state(1, np.uint64)[0])
