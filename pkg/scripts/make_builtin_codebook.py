"""Regenerate the shipped 4-RE, 4-point, 2-nonzero SCMA codebook set.

Parameters come from a random search over per-layer phase rotations
(multiples of pi/24) and a shared second-dimension permutation/rotation,
keeping the candidate with the largest minimum squared distance of the
6-layer superimposed constellation.
"""
import sys
from pathlib import Path

import numpy as np

from nomasim.sigpool import (BUILTIN_CODEBOOK_FILE, ScmaCodebook, build_sparse_patterns,
                             qpsk_points, save_codebooks)

PERM = [3, 0, 1, 2]
PSI = 0.7200809649337667
PHASE_STEPS = [[4, 11], [0, 11], [0, 11], [7, 7], [2, 11], [9, 2]]  # units of pi/24


def design() -> list[ScmaCodebook]:
    q = np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))
    gray = qpsk_points()
    # position of each labelled point in the angle-ordered list
    g = np.array([int(np.argmin(np.abs(q - p))) for p in gray])
    z1 = q[g]
    z2 = q[np.asarray(PERM)[g]] * np.exp(1j * PSI)
    books = []
    for u, pat in enumerate(build_sparse_patterns(4, 2)):
        a, b = pat.active
        ph = np.asarray(PHASE_STEPS[u]) * np.pi / 24
        cw = np.zeros((4, 4), complex)
        cw[:, a] = z1 * np.exp(1j * ph[0]) / np.sqrt(2)
        cw[:, b] = z2 * np.exp(1j * ph[1]) / np.sqrt(2)
        books.append(ScmaCodebook(4, 4, 2, cw))
    return books


def joint_min_d2(books) -> float:
    pts = np.zeros((1, 4), complex)
    for bk in books:
        pts = (pts[:, None, :] + bk.codewords[None]).reshape(-1, 4)
    best = np.inf
    for i in range(0, len(pts), 512):
        d = np.sum(np.abs(pts[i:i + 512, None] - pts[None]) ** 2, axis=2)
        d[d < 1e-12] = np.inf
        best = min(best, d.min())
    return best


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parents[1] / "src" / "nomasim" / "data" / BUILTIN_CODEBOOK_FILE)
    books = design()
    save_codebooks(out, books)
    print(f"wrote {out}; joint min d^2 = {joint_min_d2(books):.4f}")
