"""Geometry self-tests run by ``rembo diagnose``.

Each check compares a library routine with an independent computation
(convex hulls from scipy, brute-force vertex enumeration, Monte-Carlo
volumes) on a freshly drawn embedding and returns a :class:`Check`.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.spatial import Delaunay

from .embedding import equal_norm_tight_frame, sample_embedding
from .geometry import (clamp_area_density, enclosing_box, in_intersection, in_union,
                       in_zonotope, intersection_bounding_box, mc_volume,
                       union_bounding_box, zonotope_vertices_bruteforce)
from .mappings import gamma_batch, phi

MAX_ORACLE_D = 12


class Check(NamedTuple):
    name: str
    passed: bool
    detail: str


def hull_membership(y, vertices, tol=1e-9):
    """Membership in the convex hull of ``vertices`` (independent oracle)."""
    Y = np.atleast_2d(y)
    if vertices.shape[1] == 1:
        lo, hi = vertices.min(), vertices.max()
        return (Y[:, 0] >= lo - tol) & (Y[:, 0] <= hi + tol)
    tri = Delaunay(vertices)
    return tri.find_simplex(Y, tol=tol) >= 0


def check_orthonormality(emb, tol=1e-12) -> Check:
    err = emb.orthonormality_error()
    return Check("orthonormality", err <= tol, f"max |A^T A - I| = {err:.3g}")


def check_zonotope_oracle(emb, rng, n=1000, margin=1e-6) -> Check:
    """in_Z against the hull of all sign-vector images, away from the boundary."""
    if emb.D > MAX_ORACLE_D:
        return Check("in_Z vs hull oracle", True, f"skipped (D > {MAX_ORACLE_D})")
    verts = zonotope_vertices_bruteforce(emb)
    box = enclosing_box(emb)
    Y = rng.uniform(-box, box, size=(n, emb.d))
    if emb.d == 1:
        r = verts.max()
        inner = np.abs(Y[:, 0]) <= r - margin
        outer = np.abs(Y[:, 0]) <= r + margin
    else:
        # scale by (1 +- margin) to stay clear of the boundary on both sides
        inner = hull_membership(Y / (1 - margin), verts, tol=0.0)
        outer = hull_membership(Y / (1 + margin), verts, tol=0.0)
    clear = inner == outer
    got = in_zonotope(Y, emb)
    bad = int(np.count_nonzero(got[clear] != inner[clear]))
    return Check("in_Z vs hull oracle", bad == 0,
                 f"{bad} disagreements on {int(clear.sum())} points ({n - int(clear.sum())} boundary skips)")


def check_enclosing_box(emb, tol=1e-9) -> Check:
    if emb.D > MAX_ORACLE_D:
        return Check("enclosing box vs vertices", True, f"skipped (D > {MAX_ORACLE_D})")
    verts = zonotope_vertices_bruteforce(emb)
    err = float(np.max(np.abs(enclosing_box(emb) - np.max(np.abs(verts), axis=0))))
    return Check("enclosing box vs vertices", err <= tol, f"max error {err:.3g}")


def check_nesting(emb, rng, n=10_000) -> Check:
    """I within U, Z within its box, and central symmetry of Z and U."""
    box = 1.5 * np.maximum(enclosing_box(emb), union_bounding_box(emb))
    Y = rng.uniform(-box, box, size=(n, emb.d))
    inI, inU = in_intersection(Y, emb), in_union(Y, emb)
    inZ = in_zonotope(Y, emb)
    ebox = enclosing_box(emb)
    nest_iu = not np.any(inI & ~inU)
    nest_zb = not np.any(inZ & np.any(np.abs(Y) > ebox + 1e-9, axis=1))
    sym = np.array_equal(inZ, in_zonotope(-Y, emb)) and np.array_equal(inU, in_union(-Y, emb))
    ok = nest_iu and nest_zb and sym
    return Check("nesting and symmetry", ok,
                 f"I in U: {nest_iu}, Z in box: {nest_zb}, symmetric: {sym}")


def check_round_trip(emb, rng, n=1000, tol=1e-6) -> Check:
    """Back-projection is a bijection from Z onto the clamp image."""
    X0 = rng.uniform(-1, 1, size=(n, emb.D))
    Y = X0 @ emb.B.T
    X, inside, _ = gamma_batch(Y, emb)
    err_y = float(np.max(np.abs(X @ emb.B.T - Y))) if inside.all() else np.inf
    X2, inside2, _ = gamma_batch(X @ emb.B.T, emb)
    err_x = float(np.max(np.abs(X2 - X))) if inside2.all() else np.inf
    ok = inside.all() and err_y <= tol and err_x <= tol
    return Check("back-projection round trip", ok,
                 f"all inside: {bool(inside.all())}, |B g(y) - y| = {err_y:.3g}, |g(B x) - x| = {err_x:.3g}")


def check_clamp_idempotent(emb, rng, n=1000) -> Check:
    box = union_bounding_box(emb)
    Y = rng.uniform(-2 * box, 2 * box, size=(n, emb.d))
    X = phi(Y, emb)
    ok = bool(np.all(np.abs(X) <= 1.0)) and np.array_equal(np.clip(X, -1, 1), X)
    return Check("clamp image in hypercube", ok, f"{n} points")


def volume_report(emb, n_samples=200_000, seed=0) -> dict:
    """Monte-Carlo volumes of U, the clamp image, Z and I."""
    ubox = union_bounding_box(emb)
    ss = np.random.SeedSequence(seed)
    s_u, s_e, s_z, s_i = ss.spawn(4)
    return {
        "U": mc_volume(lambda Y: in_union(Y, emb), ubox, n_samples, s_u),
        "E": mc_volume(lambda Y: clamp_area_density(Y, emb), ubox, n_samples, s_e),
        "Z": mc_volume(lambda Y: in_zonotope(Y, emb), enclosing_box(emb), n_samples, s_z),
        "I": mc_volume(lambda Y: in_intersection(Y, emb), intersection_bounding_box(emb),
                       n_samples, s_i),
    }


def check_volumes(emb, n_samples=200_000, seed=0, k=3.0) -> Check:
    """Vol(U) >= Vol(E) >= Vol(Z), and Vol(Z) <= 2 Vol(I) for d = 2, up to k standard errors."""
    v = volume_report(emb, n_samples, seed)

    def geq(a, b, scale=1.0):
        diff = v[a].estimate - scale * v[b].estimate
        se = np.hypot(v[a].stderr, scale * v[b].stderr)
        return diff >= -k * se - 1e-12 * abs(v[a].estimate)

    # the factor-two bound between Z and I is a planar statement
    ok = bool(geq("U", "E") and geq("E", "Z") and (emb.d != 2 or geq("I", "Z", scale=0.5)))
    text = ", ".join(f"{key}={est.estimate:.4g}+-{est.stderr:.2g}" for key, est in v.items())
    return Check("volume ordering", ok, text + f", Z/I={v['Z'].estimate / v['I'].estimate:.4g}")


def run_diagnostics(d=2, D=5, seed=0, n_samples=200_000) -> list:
    """All geometry self-tests on a Gaussian embedding and a tight frame."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), d, D]))
    emb = sample_embedding(D, d, seed=seed)
    checks = [
        check_orthonormality(emb),
        check_zonotope_oracle(emb, rng),
        check_enclosing_box(emb),
        check_nesting(emb, rng),
        check_round_trip(emb, rng),
        check_clamp_idempotent(emb, rng),
    ]
    frame = equal_norm_tight_frame(D, d, seed=seed)
    checks.append(check_orthonormality(frame)._replace(name="tight frame orthonormality"))
    checks.append(check_volumes(frame, n_samples, seed))
    return checks
