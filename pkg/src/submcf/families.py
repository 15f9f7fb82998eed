"""Built-in initial immersions, keyed by family name."""

from __future__ import annotations

import math

import numpy as np

from .immersions import DiscreteImmersion, lift_immersion
from .spaces import AmbientSpace
from .submersions import SubmersionModel


def _count(length, h, minimum=8):
    return max(minimum, int(math.ceil(length / h)))


def plane_circle(radius=1.0, h=0.05, center=(0.0, 0.0), n=None):
    """Round circle in EUCLIDEAN(2)."""
    n = n or _count(2 * math.pi * radius, h)
    t = 2 * math.pi * np.arange(n) / n
    v = np.stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)], axis=1)
    return DiscreteImmersion.curve(AmbientSpace.euclidean(2), v)


def graded_circle(radius=1.0, n=64, ratio=2.0):
    """Plane circle whose edge lengths vary smoothly by the factor ``ratio``."""
    s = np.arange(n) / n
    w = 1.0 + (ratio - 1.0) * 0.5 * (1 - np.cos(2 * math.pi * s))
    t = 2 * math.pi * np.concatenate([[0.0], np.cumsum(w)[:-1]]) / w.sum()
    v = radius * np.stack([np.cos(t), np.sin(t)], axis=1)
    return DiscreteImmersion.curve(AmbientSpace.euclidean(2), v)


def geodesic_circle(rho=math.pi / 4, c=1.0, h=0.05, n=None):
    """Circle of geodesic radius ``rho`` about the north pole of S^2(c)."""
    R = 1.0 / math.sqrt(c)
    phi = math.sqrt(c) * rho
    n = n or _count(2 * math.pi * R * math.sin(phi), h)
    t = 2 * math.pi * np.arange(n) / n
    v = R * np.stack([math.sin(phi) * np.cos(t), math.sin(phi) * np.sin(t), np.full(n, math.cos(phi))], axis=1)
    space = AmbientSpace.round_sphere(2, c)
    return DiscreteImmersion.curve(space, space.retract(v))


def fs_circle(phi=0.6, c=1.0, h=0.05, n=None):
    """Circle of polar angle ``phi`` on the FS sphere (radius ``1/(2 sqrt c)``)."""
    R = 0.5 / math.sqrt(c)
    n = n or _count(2 * math.pi * R * math.sin(phi), h)
    t = 2 * math.pi * np.arange(n) / n
    v = R * np.stack([math.sin(phi) * np.cos(t), math.sin(phi) * np.sin(t), np.full(n, math.cos(phi))], axis=1)
    space = AmbientSpace.fs_sphere(c)
    return DiscreteImmersion.curve(space, space.retract(v))


def _torus_grid(n1, n2):
    tris = []
    for i in range(n1):
        i1 = (i + 1) % n1
        for j in range(n2):
            j1 = (j + 1) % n2
            a, b, cc, d = i * n2 + j, i1 * n2 + j, i1 * n2 + j1, i * n2 + j1
            tris += [(a, b, cc), (a, cc, d)]
    return np.array(tris)


def clifford_torus(h=0.05, r1=None, perturb=0.0, modes=(2, 3), n=None):
    """Torus ``|z1| = r1, |z2| = sqrt(1 - r1^2)`` in S^3(1), optionally perturbed.

    ``perturb`` scales the radius ratio by ``1 + perturb cos(m1 s) cos(m2 t)``.
    """
    r1 = 1 / math.sqrt(2) if r1 is None else r1
    r2 = math.sqrt(1 - r1 * r1)
    n1 = n or _count(2 * math.pi * r1, h)
    n2 = n or _count(2 * math.pi * r2, h)
    s = 2 * math.pi * np.arange(n1) / n1
    t = 2 * math.pi * np.arange(n2) / n2
    S, T = np.meshgrid(s, t, indexing="ij")
    a = np.full_like(S, r1) * (1 + perturb * np.cos(modes[0] * S) * np.cos(modes[1] * T))
    b = np.full_like(S, r2)
    v = np.stack([a * np.cos(S), a * np.sin(S), b * np.cos(T), b * np.sin(T)], axis=-1).reshape(-1, 4)
    space = AmbientSpace.round_sphere(3, 1.0)
    return DiscreteImmersion.surface(space, space.retract(v), _torus_grid(n1, n2))


def product_torus_r4(h=0.05, r1=1.0, r2=1.0):
    """Flat torus ``S^1(r1) x S^1(r2)`` in EUCLIDEAN(4) = C^2 (totally real)."""
    n1, n2 = _count(2 * math.pi * r1, h), _count(2 * math.pi * r2, h)
    s = 2 * math.pi * np.arange(n1) / n1
    t = 2 * math.pi * np.arange(n2) / n2
    S, T = np.meshgrid(s, t, indexing="ij")
    # coordinates (x1, x2, y1, y2) with z_j = x_j + i y_j
    v = np.stack([r1 * np.cos(S), r2 * np.cos(T), r1 * np.sin(S), r2 * np.sin(T)], axis=-1).reshape(-1, 4)
    return DiscreteImmersion.surface(AmbientSpace.euclidean(4), v, _torus_grid(n1, n2))


def icosphere(level):
    """Unit icosahedral sphere subdivided ``level`` times: (vertices, triangles)."""
    g = (1 + math.sqrt(5)) / 2
    V = [(-1, g, 0), (1, g, 0), (-1, -g, 0), (1, -g, 0), (0, -1, g), (0, 1, g),
         (0, -1, -g), (0, 1, -g), (g, 0, -1), (g, 0, 1), (-g, 0, -1), (-g, 0, 1)]
    F = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    V = [np.array(v, dtype=float) / np.linalg.norm(v) for v in V]
    for _ in range(level):
        cache, F2 = {}, []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = V[a] + V[b]
                V.append(m / np.linalg.norm(m))
                cache[key] = len(V) - 1
            return cache[key]

        for a, b, c in F:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            F2 += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        F = F2
    return np.array(V), np.array(F)


def _level_for(h, radius=1.0):
    # icosahedron edge on the unit sphere ~1.05; each level halves it
    return max(1, int(math.ceil(math.log2(1.05 * radius / h))))


def euclidean_sphere(radius=1.0, h=0.1):
    V, F = icosphere(_level_for(h, radius))
    return DiscreteImmersion.surface(AmbientSpace.euclidean(3), radius * V, F)


def equatorial_sphere(h=0.05, c=1.0, tilt=0.0):
    """Totally geodesic great 2-sphere ``x_3 = 0`` in S^3(c), optionally tilted."""
    R = 1 / math.sqrt(c)
    V, F = icosphere(_level_for(h, R))
    X = np.concatenate([R * V, np.zeros((len(V), 1))], axis=1)
    if tilt:
        ct, st = math.cos(tilt), math.sin(tilt)
        X = X @ np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, ct, st], [0, 0, -st, ct]], dtype=float)
    space = AmbientSpace.round_sphere(3, c)
    return DiscreteImmersion.surface(space, space.retract(X), F)


def hopf_torus(phi=0.6, c=1.0, lam=1.0, h=0.05, fiber_res=None):
    sub = SubmersionModel.hopf(c, lam)
    base = fs_circle(phi, c, h)
    fr = fiber_res or _count(sub.fiber_length, h)
    return sub, base, lift_immersion(sub, base, fr)


def heisenberg_cylinder(radius=1.0, h=0.05, fiber_res=None):
    sub = SubmersionModel.heisenberg_proj(1)
    base = plane_circle(radius, h)
    fr = fiber_res or _count(sub.fiber_length, h)
    return sub, base, lift_immersion(sub, base, fr)


def sasaki_circle_lift(phi=math.pi / 2, r=1.0, c=1.0, h=0.05, fiber_res=None):
    """Lift to the tangent sphere bundle of a latitude circle (great circle at ``phi = pi/2``)."""
    sub = SubmersionModel.sasaki_proj(r, c)
    R = 1 / math.sqrt(c)
    n = _count(2 * math.pi * R * math.sin(phi), h)
    t = 2 * math.pi * np.arange(n) / n
    v = R * np.stack([math.sin(phi) * np.cos(t), math.sin(phi) * np.sin(t), np.full(n, math.cos(phi))], axis=1)
    base = DiscreteImmersion.curve(sub.base, sub.base.retract(v))
    fr = fiber_res or _count(sub.fiber_length, h)
    return sub, base, lift_immersion(sub, base, fr)


#: name -> (builder, parameter schema, acceptance scenario it feeds)
CATALOG = {
    "plane_circle": (plane_circle, {"radius": "float>0", "h": "float>0"}, "flow: shrinks to a point at T = r^2/2"),
    "geodesic_circle": (geodesic_circle, {"rho": "float in (0, pi/sqrt(c))", "c": "float>0", "h": "float>0"},
                        "flow: circle-on-sphere ODE match"),
    "fs_circle": (fs_circle, {"phi": "float in (0, pi)", "c": "float>0", "h": "float>0"},
                  "commutation: Hopf base curve"),
    "clifford_torus": (clifford_torus, {"h": "float>0", "perturb": "float>=0"}, "flow: stationarity"),
    "equatorial_sphere": (equatorial_sphere, {"h": "float>0", "c": "float>0"}, "flow: stationarity"),
    "heisenberg_cylinder": (heisenberg_cylinder, {"radius": "float>0", "h": "float>0"},
                            "commutation: Heisenberg cylinder collapse"),
    "sasaki_circle_lift": (sasaki_circle_lift, {"phi": "float in (0, pi)", "r": "float>0", "c": "float>0",
                                                "h": "float>0"}, "identity: Sasaki lift norm"),
    "hopf_torus": (hopf_torus, {"phi": "float in (0, pi)", "c": "float>0", "lam": "float>0", "h": "float>0"},
                   "identity: Hopf lift norm"),
}


def build(name, **params):
    if name not in CATALOG:
        raise KeyError(name)
    return CATALOG[name][0](**params)
