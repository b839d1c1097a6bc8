import numpy as np


def derive_seed(*keys: int) -> int:
    """Deterministic 63-bit child seed from a tuple of non-negative ints."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)
