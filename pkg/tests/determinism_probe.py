"""Run a shortened acceptance scenario and print a digest of every output.

Invoked in a subprocess with different NUMBA_NUM_THREADS values:

    python tests/determinism_probe.py consistent 3
"""

import hashlib
import sys

import numba

from acceptance_setups import SETUPS


def digest(result) -> str:
    h = hashlib.sha256()
    for img in result.images:
        h.update(img.values.tobytes())
    for q in result.q_sinograms:
        h.update(q.data.tobytes())
    for r in result.log:
        h.update(repr((r.iteration, r.d_data, r.d_image, r.beta, r.dp, r.reverted, r.skipped)).encode())
    return h.hexdigest()


if __name__ == "__main__":
    name, iters = sys.argv[1], int(sys.argv[2])
    res = SETUPS[name](iters)
    print(numba.get_num_threads(), digest(res))
