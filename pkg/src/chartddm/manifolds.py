"""Built-in atlases: the 4-ball, B^2 x S^2, CP^2 and flat verification cases.

Balls are covered by a flat inner cube plus two collar charts
``[delta, 1] x [-r, r]^k`` that use stereographic coordinates on the
boundary sphere; the radial coordinate ``t = 1`` is the physical boundary.
"""
from __future__ import annotations

from math import pi, sqrt

import numpy as np

from .atlas import Atlas, Chart

INNER, NORTH, SOUTH = "inner", "north", "south"


def quadratic_bump(x, cut):
    """1 - (x/cut)^2 inside [-cut, cut], zero outside (per component, product)."""
    x = np.asarray(x)
    w = np.where(np.abs(x) > cut, 0.0, 1.0 - (x / cut) ** 2)
    return np.prod(w, axis=-1) if w.ndim > 1 else w


def ramp(t, start):
    """(t - start)/(1 - start) for t >= start, zero below."""
    return np.where(t < start, 0.0, (t - start) / (1.0 - start))


# -- ball factor: x-hat has k components, points have k + 1 ------------------

def _stereo(xh, sign):
    rho2 = np.sum(xh * xh, axis=1, keepdims=True)
    return np.concatenate([2 * xh / (1 + rho2), sign * (1 - rho2) / (1 + rho2)], axis=1)


def ball_embed(kind):
    if kind == INNER:
        return lambda x: np.array(x, dtype=np.float64)
    sign = 1.0 if kind == NORTH else -1.0
    return lambda x: x[:, :1] * _stereo(x[:, 1:], sign)


def _ball_from_inner(sign):
    def fn(x):
        norm = np.sqrt(np.sum(x * x, axis=1, keepdims=True))
        return np.concatenate([norm, x[:, :-1] / (norm + sign * x[:, -1:])], axis=1)
    return fn


def _invert_sphere_coords(xh):
    return xh / np.sum(xh * xh, axis=1, keepdims=True)


def _collar_swap(x):
    return np.concatenate([x[:, :1], _invert_sphere_coords(x[:, 1:])], axis=1)


def ball_transition(src, dst):
    if src == dst:
        return lambda x: np.array(x, dtype=np.float64)
    if src == INNER:
        return _ball_from_inner(1.0 if dst == NORTH else -1.0)
    if dst == INNER:
        return ball_embed(src)
    return _collar_swap


def ball_metric(kind, k):
    if kind == INNER:
        return lambda x: np.broadcast_to(np.eye(k + 1), (len(x), k + 1, k + 1)).copy()

    def fn(x):
        t = x[:, 0]
        rho2 = np.sum(x[:, 1:] ** 2, axis=1)
        g = np.zeros((len(x), k + 1, k + 1))
        g[:, 0, 0] = 1.0
        a = 4 * t**2 / (1 + rho2) ** 2
        for m in range(1, k + 1):
            g[:, m, m] = a
        return g
    return fn


def ball_sigma(kind, s_cut, delta_cut, r_cut):
    if kind == INNER:
        return lambda x: quadratic_bump(x, s_cut)
    return lambda x: ramp(x[:, 0], delta_cut) * quadratic_bump(x[:, 1:], r_cut)


def ball_bounds(kind, k, s, delta, r):
    if kind == INNER:
        return [(-s, s)] * (k + 1)
    return [(delta, 1.0)] + [(-r, r)] * k


def ball_classes(kind, k):
    return ("n1",) * (k + 1) if kind == INNER else ("n1",) + ("n2",) * k


# -- sphere factor S^k by two stereographic charts --------------------------

def sphere_embed(kind):
    sign = 1.0 if kind == NORTH else -1.0
    return lambda x: _stereo(x, sign)


def sphere_transition(src, dst):
    if src == dst:
        return lambda x: np.array(x, dtype=np.float64)
    return _invert_sphere_coords


def sphere_metric(k):
    def fn(x):
        c = 4 / (1 + np.sum(x * x, axis=1)) ** 2
        return c[:, None, None] * np.eye(k)[None]
    return fn


def _cut_params(s, delta, r):
    return 0.1 * delta + 0.9 * s, 0.9 * delta + 0.1 * s, 0.9 * r + 0.1


def _check_ball_params(s, delta, r, s_max):
    if not (0 < delta < s < s_max):
        raise ValueError(f"need 0 < delta < s < {s_max:.6g}, got s={s}, delta={delta}")
    if not r > 1:
        raise ValueError(f"need r > 1, got r={r}")


def _sin_last(embed):
    return lambda x: np.sin(pi * embed(x)[:, -1])


def make_b4(s=0.4, delta=0.2, r=1.2, b=0.0) -> Atlas:
    """Unit ball in R^4 with u = sin(pi y4)."""
    _check_ball_params(s, delta, r, 0.5)
    s_cut, d_cut, r_cut = _cut_params(s, delta, r)
    kinds = (INNER, NORTH, SOUTH)
    charts, exact, forcing = [], [], []
    for i, kind in enumerate(kinds):
        embed = ball_embed(kind)
        charts.append(
            Chart(
                id=i,
                bounds=tuple(ball_bounds(kind, 3, s, delta, r)),
                metric=ball_metric(kind, 3),
                sigma=ball_sigma(kind, s_cut, d_cut, r_cut),
                physical_faces=frozenset() if kind == INNER else frozenset({(0, 1)}),
                axis_classes=ball_classes(kind, 3),
                name=f"D{i + 1}",
                embed=embed,
            )
        )
        u = _sin_last(embed)
        exact.append(u)
        forcing.append(lambda x, u=u: (b + pi**2) * u(x))
    transitions = {
        (i, j): ball_transition(kinds[i], kinds[j])
        for i in range(3) for j in range(3) if i != j
    }
    return Atlas(
        name="b4",
        charts=tuple(charts),
        transitions=transitions,
        b=float(b),
        f=tuple(forcing),
        boundary=tuple(exact),
        exact=tuple(exact),
        params={"s": s, "delta": delta, "r": r},
    )


def make_b2xs2(s=0.6, delta=0.3, r=1.2, b=1.0) -> Atlas:
    """B^2 x S^2 with u = sin(pi y2) + y'3, six product charts."""
    _check_ball_params(s, delta, r, 1 / sqrt(2))
    s_cut, d_cut, r_cut = _cut_params(s, delta, r)
    ball_kinds = (INNER, NORTH, SOUTH)
    sphere_kinds = (NORTH, SOUTH)
    pairs = [(bk, sk) for bk in ball_kinds for sk in sphere_kinds]
    sphere_g = sphere_metric(2)
    charts, exact, forcing = [], [], []
    for cid, (bk, sk) in enumerate(pairs):
        bmetric = ball_metric(bk, 1)
        bsigma = ball_sigma(bk, s_cut, d_cut, r_cut)
        bembed, sembed = ball_embed(bk), sphere_embed(sk)

        def metric(x, bmetric=bmetric):
            g = np.zeros((len(x), 4, 4))
            g[:, :2, :2] = bmetric(x[:, :2])
            g[:, 2:, 2:] = sphere_g(x[:, 2:])
            return g

        def sigma(x, bsigma=bsigma):
            return bsigma(x[:, :2]) * quadratic_bump(x[:, 2:], r_cut)

        def embed(x, bembed=bembed, sembed=sembed):
            return np.concatenate([bembed(x[:, :2]), sembed(x[:, 2:])], axis=1)

        def u(x, embed=embed):
            y = embed(x)
            return np.sin(pi * y[:, 1]) + y[:, 4]

        def f(x, embed=embed):
            y = embed(x)
            return (b + pi**2) * np.sin(pi * y[:, 1]) + (b + 2) * y[:, 4]

        i, ip = ball_kinds.index(bk) + 1, sphere_kinds.index(sk) + 1
        charts.append(
            Chart(
                id=cid,
                bounds=tuple(ball_bounds(bk, 1, s, delta, r) + [(-r, r)] * 2),
                metric=metric,
                sigma=sigma,
                physical_faces=frozenset() if bk == INNER else frozenset({(0, 1)}),
                axis_classes=ball_classes(bk, 1) + ("n2", "n2"),
                name=f"D({i},{ip})",
                embed=embed,
            )
        )
        exact.append(u)
        forcing.append(f)

    transitions = {}
    for ci, (bi, si) in enumerate(pairs):
        for cj, (bj, sj) in enumerate(pairs):
            if ci == cj:
                continue
            bt, st = ball_transition(bi, bj), sphere_transition(si, sj)
            transitions[(ci, cj)] = (
                lambda x, bt=bt, st=st: np.concatenate([bt(x[:, :2]), st(x[:, 2:])], axis=1)
            )
    return Atlas(
        name="b2xs2",
        charts=tuple(charts),
        transitions=transitions,
        b=float(b),
        f=tuple(forcing),
        boundary=tuple(exact),
        exact=tuple(exact),
        params={"s": s, "delta": delta, "r": r},
    )


# -- CP^2 -------------------------------------------------------------------

def _cp2_homogeneous(k):
    """Chart k coordinates -> homogeneous vector with w_k = 1, shape (n, 3)."""
    others = [a for a in range(3) if a != k]

    def fn(x):
        w = np.empty((len(x), 3), dtype=np.complex128)
        w[:, k] = 1.0
        w[:, others[0]] = x[:, 0] + 1j * x[:, 1]
        w[:, others[1]] = x[:, 2] + 1j * x[:, 3]
        return w
    return fn


def _cp2_transition(k, l):
    hom = _cp2_homogeneous(k)
    others = [a for a in range(3) if a != l]

    def fn(x):
        w = hom(x)
        z = w[:, others] / w[:, l:l + 1]
        return np.stack([z[:, 0].real, z[:, 0].imag, z[:, 1].real, z[:, 1].imag], axis=1)
    return fn


# complex coordinate vectors of the real basis d/dx1..d/dx4
_CP2_BASIS = np.array([[1, 0], [1j, 0], [0, 1], [0, 1j]], dtype=np.complex128)


def fubini_study_metric(x):
    """Fubini-Study metric in affine coordinates z = (x1 + i x2, x3 + i x4).

    h_ab = ((1 + |z|^2) delta_ab - conj(z_a) z_b) / (1 + |z|^2)^2 and
    g(u, v) = Re sum h_ab u_a conj(v_b); equals the identity at the origin.
    """
    z = np.stack([x[:, 0] + 1j * x[:, 1], x[:, 2] + 1j * x[:, 3]], axis=1)
    q = 1 + np.sum(np.abs(z) ** 2, axis=1)
    h = (q[:, None, None] * np.eye(2)[None] - np.conj(z)[:, :, None] * z[:, None, :])
    h /= (q**2)[:, None, None]
    g = np.einsum("ia,nab,jb->nij", _CP2_BASIS, h, np.conj(_CP2_BASIS)).real
    return 0.5 * (g + np.swapaxes(g, 1, 2))


def cp2_projector(w):
    """Chart-independent embedding: flattened real/imag parts of w w* / |w|^2."""
    w = w / np.linalg.norm(w, axis=1, keepdims=True)
    P = w[:, :, None] * np.conj(w)[:, None, :]
    return np.concatenate([P.real.reshape(len(w), -1), P.imag.reshape(len(w), -1)], axis=1)


def make_cp2(r=1.2, b=1.0) -> Atlas:
    """CP^2 with three affine charts; no exact solution is attached."""
    if not r > 1:
        raise ValueError(f"need r > 1, got r={r}")
    if not b > 0:
        raise ValueError("CP^2 has no boundary, so b must be positive")
    r_cut = 0.9 * r + 0.1
    charts, forcing = [], []
    for k in range(3):
        hom = _cp2_homogeneous(k)

        def f(x, hom=hom):
            w = hom(x)
            return np.abs(w[:, 0]) ** 2 / np.sum(np.abs(w) ** 2, axis=1)

        charts.append(
            Chart(
                id=k,
                bounds=((-r, r),) * 4,
                metric=fubini_study_metric,
                sigma=lambda x: quadratic_bump(x, r_cut),
                axis_classes=("n2",) * 4,
                name=f"D{k}",
                embed=lambda x, hom=hom: cp2_projector(hom(x)),
            )
        )
        forcing.append(f)
    transitions = {(k, l): _cp2_transition(k, l) for k in range(3) for l in range(3) if k != l}
    return Atlas(
        name="cp2",
        charts=tuple(charts),
        transitions=transitions,
        b=float(b),
        f=tuple(forcing),
        params={"r": r},
    )


# -- flat verification atlases ---------------------------------------------

def _identity(x):
    return np.array(x, dtype=np.float64)


def _flat_metric(d):
    return lambda x: np.broadcast_to(np.eye(d), (len(x), d, d)).copy()


def _make_flat(name, d, overlap, charts, b):
    if charts not in (1, 2):
        raise ValueError("flat atlases have 1 or 2 charts")
    if charts == 2 and not 0 < overlap < 1:
        raise ValueError(f"need 0 < overlap < 1, got {overlap}")

    def u(x):
        return np.prod(np.sin(pi * x), axis=1)

    def f(x):
        return (b + d * pi**2) * u(x)

    all_faces = frozenset((a, s) for a in range(d) for s in (0, 1))
    if charts == 1:
        specs = [((0.0, 1.0), all_faces, lambda x: np.ones(len(x)))]
    else:
        c = 0.5 + overlap / 2
        cut = c - 0.1 * overlap
        specs = [
            ((0.0, c), all_faces - {(0, 1)}, lambda x: quadratic_bump(x[:, 0], cut)),
            ((1.0 - c, 1.0), all_faces - {(0, 0)}, lambda x: quadratic_bump(1.0 - x[:, 0], cut)),
        ]
    chart_list = [
        Chart(
            id=i,
            bounds=(first,) + ((0.0, 1.0),) * (d - 1),
            metric=_flat_metric(d),
            sigma=sigma,
            physical_faces=faces,
            name=f"D{i + 1}",
            embed=_identity,
        )
        for i, (first, faces, sigma) in enumerate(specs)
    ]
    transitions = {(i, j): _identity for i in range(charts) for j in range(charts) if i != j}
    n = len(chart_list)
    return Atlas(
        name=name,
        charts=tuple(chart_list),
        transitions=transitions,
        b=float(b),
        f=(f,) * n,
        boundary=(u,) * n,
        exact=(u,) * n,
        params={"overlap": overlap, "charts": charts},
    )


def make_flat_square(overlap=0.2, charts=2, b=0.0) -> Atlas:
    """[0,1]^2 split into [0, 0.5+ov/2] and [0.5-ov/2, 1] strips; u = sin sin."""
    return _make_flat("flat_square", 2, overlap, charts, b)


def make_flat_interval(overlap=0.2, charts=2, b=0.0) -> Atlas:
    return _make_flat("flat_interval", 1, overlap, charts, b)


BUILTINS = {
    "b4": make_b4,
    "b2xs2": make_b2xs2,
    "cp2": make_cp2,
    "flat_square": make_flat_square,
    "flat_interval": make_flat_interval,
}


def make_builtin_atlas(name: str, **params) -> Atlas:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown manifold {name!r}; choose from {sorted(BUILTINS)}") from None
    params = {k: v for k, v in params.items() if v is not None}
    return factory(**params)
