"""Walk through the low-dimensional sets of a random embedding.

Uses the one-dimensional embedding of the square spanned by (0.5, 0.2) and a
random two-dimensional embedding of [-1, 1]^8, and shows how the clamp map and
the back-projection place points in the hypercube.

    python3 demos/geometry_tour.py
"""

import numpy as np

from rembo import (Embedding, clamp_preimage, enclosing_box, gamma, in_intersection, in_union,
                   in_zonotope, phi, sample_embedding)
from rembo.diagnostics import volume_report


def line_example():
    emb = Embedding.from_matrix(np.array([[0.5], [0.2]]))
    print("line embedding, A =", emb.A.ravel())
    for t in (-6.0, -5.0, -2.0, 0.5, 2.0, 5.0, 6.0):
        y = np.array([t])
        print(f"  y={t:+.1f}  in U: {bool(in_union(y, emb))!s:5}  in I: {bool(in_intersection(y, emb))!s:5}"
              f"  in Z: {bool(in_zonotope(y, emb))!s:5}  phi(y) = {phi(y, emb)}")
    print("  zonotope half-width:", enclosing_box(emb))
    y = np.array([0.3])
    x = gamma(y, emb)
    print(f"  gamma({y[0]}) = {x}, B x = {emb.B @ x}")


def random_example():
    emb = sample_embedding(8, 2, seed=3)
    rng = np.random.default_rng(0)
    y = rng.uniform(-1, 1, size=8) @ emb.B.T
    x = gamma(y, emb)
    print("\nrandom embedding d=2, D=8")
    print("  y =", y.round(4))
    print("  gamma(y) =", x.round(4), " saturated:", int(np.sum(np.abs(x) > 1 - 1e-9)))
    print("  B gamma(y) - y =", (emb.B @ x - y))
    xc = phi(3 * y, emb)
    print("  phi(3y) =", xc.round(4))
    print("  pre-image of phi(3y):", clamp_preimage(xc, emb).round(6))
    vols = volume_report(emb, n_samples=200_000, seed=1)
    for key, est in vols.items():
        print(f"  Vol({key}) ~ {est.estimate:.4g} +- {est.stderr:.2g}")


if __name__ == "__main__":
    line_example()
    random_example()
