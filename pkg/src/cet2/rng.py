"""Named deterministic random streams.

Every source of randomness (init, shuffle, gumbel, dropout, ...) derives its
own seed from the base seed plus a name, so adding or reordering consumers
cannot silently change another stream.
"""

import hashlib

import torch


def derive_seed(base_seed, *names):
    h = hashlib.sha256()
    h.update(str(int(base_seed)).encode())
    for name in names:
        h.update(b"\x00")
        h.update(str(name).encode())
    return int.from_bytes(h.digest()[:8], "little") % (2 ** 63 - 1)


def generator_for(base_seed, *names):
    gen = torch.Generator()
    gen.manual_seed(derive_seed(base_seed, *names))
    return gen
