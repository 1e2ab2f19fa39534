"""Gradient-based attacks on :class:`ToyClassifier`.

Per-sample attacks accept a batch ``x`` of shape ``(N, D)`` (or a single
``(D,)`` vector) and return one perturbation row per input.  Universal
attacks return a single ``(D,)`` vector meant to be added to every input.
The FGSM family uses ``sign(0) = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import NonFiniteGradient, OptimizerDiverged, ZeroActivation
from .model import ToyClassifier, _batch

PER_SAMPLE = "per-sample"
UNIVERSAL = "universal"


@dataclass
class Perturbation:
    v: np.ndarray
    kind: str = PER_SAMPLE
    success: Optional[np.ndarray] = None  # per row; None when not tracked
    info: dict = field(default_factory=dict)

    def linf(self) -> np.ndarray:
        return np.abs(np.atleast_2d(self.v)).max(axis=1)

    def l2(self) -> np.ndarray:
        return np.linalg.norm(np.atleast_2d(self.v), axis=1)


def project(v: np.ndarray, eps: float, norm: str = "linf") -> np.ndarray:
    """Euclidean projection of each row onto the ``eps``-ball."""
    if norm == "linf":
        return np.clip(v, -eps, eps)
    if norm == "l2":
        v2 = np.atleast_2d(v)
        n = np.linalg.norm(v2, axis=1, keepdims=True)
        scale = np.minimum(1.0, eps / np.where(n == 0, 1.0, n))
        return (v2 * scale).reshape(np.shape(v))
    raise ValueError(f"unknown norm {norm!r}")


def _direction(g, norm):
    if norm == "linf":
        return np.sign(g)
    if norm == "l2":
        g2 = np.atleast_2d(g)
        n = np.linalg.norm(g2, axis=1, keepdims=True)
        return (g2 / np.where(n == 0, 1.0, n)).reshape(np.shape(g))
    raise ValueError(f"unknown norm {norm!r}")


def _checked(g):
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("gradient contains non-finite values")
    return g


def _unbatch(arr, single):
    return arr[0] if single else arr


def fgsm(m: ToyClassifier, x, y, eps: float, norm: str = "linf") -> Perturbation:
    if eps <= 0:
        raise ValueError("eps must be positive")
    g = _checked(m.input_gradient(x, y))
    return Perturbation(eps * _direction(g, norm))


def _iterate(m, x, labels, eps, alpha, steps, ascend, norm):
    xb, single = _batch(x)
    labels = np.broadcast_to(np.asarray(labels, dtype=int), (len(xb),))
    v = np.zeros_like(xb)
    worst = 0.0
    sgn = 1.0 if ascend else -1.0
    for _ in range(steps):
        g = _checked(m.input_gradient(xb + v, labels))
        v = project(v + sgn * alpha * _direction(g, norm), eps, norm)
        worst = max(worst, float(np.abs(v).max()) if norm == "linf" else float(np.linalg.norm(v, axis=1).max()))
    return _unbatch(v, single), worst


def _step_size(eps, alpha, steps):
    """Default step 2.5 * eps / steps; explicit steps above eps are clipped."""
    if steps < 1:
        raise ValueError("need at least one step")
    if eps <= 0 or (alpha is not None and alpha <= 0):
        raise ValueError("eps and alpha must be positive")
    alpha = 2.5 * eps / steps if alpha is None else alpha
    return min(alpha, eps)


def pgd(m: ToyClassifier, x, y, eps: float, alpha: Optional[float] = None, steps: int = 10,
        norm: str = "linf") -> Perturbation:
    """Iterated signed-gradient ascent on the loss, projected to the ball
    after every step.  Starts from the clean input."""
    alpha = _step_size(eps, alpha, steps)
    v, worst = _iterate(m, x, y, eps, alpha, steps, True, norm)
    return Perturbation(v, info={"max_iterate_norm": worst})


def least_likely(m: ToyClassifier, x) -> np.ndarray:
    return np.argmin(m.logits(x), axis=-1)


def ifgsm_ll(m: ToyClassifier, x, eps: float, alpha: Optional[float] = None, steps: int = 10,
             norm: str = "linf") -> Perturbation:
    """Iterative FGSM towards the least-likely class of the clean input."""
    alpha = _step_size(eps, alpha, steps)
    target = least_likely(m, x)
    v, worst = _iterate(m, x, target, eps, alpha, steps, False, norm)
    return Perturbation(v, info={"target": target, "max_iterate_norm": worst})


def deepfool(m: ToyClassifier, x, max_iter: int = 50, overshoot: float = 0.02) -> Perturbation:
    """Multiclass DeepFool.

    Each step linearizes the logit differences to every other class and
    jumps to the nearest linearized boundary.  The accumulated step is
    scaled by ``1 + overshoot`` when applied; ``info["pre_overshoot"]``
    holds the unscaled sum.  Rows that never flip are returned with
    ``success`` False and their last perturbation.
    """
    xb, single = _batch(x)
    n, _ = xb.shape
    pre = m.predict(xb)
    r_tot = np.zeros_like(xb)
    active = np.ones(n, dtype=bool)
    iters = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        z, jac = m.logit_jacobian(xb[idx] + (1 + overshoot) * r_tot[idx])
        cur = np.argmax(z, axis=1)
        done = cur != pre[idx]
        active[idx[done]] = False
        idx, z, jac = idx[~done], z[~done], jac[~done]
        if idx.size == 0:
            break
        k0 = pre[idx]
        local = np.arange(idx.size)
        w = jac - jac[local, k0][:, None, :]  # (n, C, D)
        f = z - z[local, k0][:, None]
        wn = np.linalg.norm(w, axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = np.abs(f) / wn
        dist[local, k0] = np.inf
        dist[wn == 0] = np.inf
        best = np.argmin(dist, axis=1)
        wl = w[local, best]
        fl = np.abs(f[local, best])
        # a zero margin would give a zero step; nudge off the boundary instead
        fl = np.maximum(fl, 1e-8)
        nrm2 = np.einsum("ij,ij->i", wl, wl)
        stuck = ~np.isfinite(dist[local, best])
        step = (fl / np.where(nrm2 == 0, 1.0, nrm2))[:, None] * wl
        step[stuck] = 0.0
        _checked(step)
        r_tot[idx] += step
        iters[idx] += 1
        active[idx[stuck]] = False
    v = (1 + overshoot) * r_tot
    success = m.predict(xb + v) != pre
    return Perturbation(
        _unbatch(v, single),
        success=_unbatch(success, single),
        info={"pre_overshoot": _unbatch(r_tot, single), "iterations": _unbatch(iters, single)},
    )


def _margin_and_grad(m, xa, pre, kappa):
    """``g = max(Z_pre - max_{j != pre} Z_j, -kappa)`` and its input gradient."""
    z = m.logits(xa)
    n = len(xa)
    rows = np.arange(n)
    other = z.copy()
    other[rows, pre] = -np.inf
    j = np.argmax(other, axis=1)
    raw = z[rows, pre] - z[rows, j]
    g = np.maximum(raw, -kappa)
    up = np.zeros_like(z)
    live = raw > -kappa
    up[rows[live], pre[live]] = 1.0
    up[rows[live], j[live]] = -1.0
    grad = m.vjp(xa, up)
    return g, grad, z


def cw(m: ToyClassifier, x, c: float = 1.0, kappa: float = 0.0, steps: int = 100, lr: float = 0.01,
       binary_search_steps: int = 5, box: Optional[tuple[float, float]] = None) -> Perturbation:
    """Carlini-Wagner L2 attack, untargeted.

    Minimizes ``||v||_2^2 + c * g(x + v)`` with Adam, where ``g`` is the
    margin of the clean label over the best other class, floored at
    ``-kappa``.  With ``box`` the adversarial point is kept inside
    ``[lo, hi]`` through a tanh change of variables.  ``c`` is refined per
    sample by binary search; the smallest successful perturbation seen is
    returned.
    """
    if c <= 0 and binary_search_steps < 1:
        raise ValueError("need c > 0 or at least one binary-search step")
    xb, single = _batch(x)
    n, d = xb.shape
    pre = m.predict(xb)

    if box is not None:
        lo, hi = box
        half = (hi - lo) / 2.0
        mid = (hi + lo) / 2.0
        w0 = np.arctanh(np.clip((xb - mid) / half, -1 + 1e-6, 1 - 1e-6))

        def to_x(w):
            return mid + half * np.tanh(w)

        def dx_dw(w):
            return half * (1.0 - np.tanh(w) ** 2)
    else:
        w0 = xb.copy()

        def to_x(w):
            return w

        def dx_dw(w):
            return 1.0

    const = np.full(n, float(c) if c > 0 else 1.0)
    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    best_l2 = np.full(n, np.inf)
    best_v = np.zeros_like(xb)
    last_v = np.zeros_like(xb)
    for _ in range(max(1, binary_search_steps)):
        w = w0.copy()
        mom = np.zeros_like(w)
        sq = np.zeros_like(w)
        found = np.zeros(n, dtype=bool)
        for t in range(1, steps + 1):
            xa = to_x(w)
            diff = xa - xb
            g, ggrad, z = _margin_and_grad(m, xa, pre, kappa)
            l2 = np.einsum("ij,ij->i", diff, diff)
            adv = np.argmax(z, axis=1) != pre
            better = adv & (l2 < best_l2)
            best_l2[better] = l2[better]
            best_v[better] = diff[better]
            found |= adv
            grad = (2.0 * diff + const[:, None] * ggrad) * dx_dw(w)
            if not np.all(np.isfinite(grad)):
                raise OptimizerDiverged("non-finite gradient in CW optimization")
            mom = 0.9 * mom + 0.1 * grad
            sq = 0.999 * sq + 0.001 * grad * grad
            mhat = mom / (1 - 0.9 ** t)
            shat = sq / (1 - 0.999 ** t)
            w = w - lr * mhat / (np.sqrt(shat) + 1e-8)
        last_v = to_x(w) - xb
        upper = np.where(found, np.minimum(upper, const), upper)
        lower = np.where(found, lower, np.maximum(lower, const))
        const = np.where(np.isfinite(upper), (lower + upper) / 2.0, const * 10.0)
    success = np.isfinite(best_l2)
    v = np.where(success[:, None], best_v, last_v)
    return Perturbation(_unbatch(v, single), success=_unbatch(success, single),
                        info={"l2": _unbatch(np.sqrt(np.where(success, best_l2, np.nan)), single)})


def uap(m: ToyClassifier, x, eps: float, th: float = 0.2, max_epochs: int = 10, norm: str = "linf",
        overshoot: float = 0.02, max_iter: int = 50, seed: Optional[int] = None) -> Perturbation:
    """Universal perturbation by accumulating DeepFool steps.

    Walks the samples (shuffled when ``seed`` is given); whenever the current
    ``v`` fails to fool a sample, that sample's DeepFool perturbation from
    ``x + v`` is added and ``v`` is projected back to the ``eps``-ball.
    Stops once the fooling rate over ``x`` reaches ``1 - th``.  The rate
    is not monotone across passes, so when the target is never reached the
    end-of-pass iterate with the highest rate is returned.
    """
    xb, _ = _batch(x)
    n, d = xb.shape
    if n == 0 or max_epochs < 1:
        raise ValueError("uap needs at least one sample and one epoch")
    clean = m.predict(xb)
    v = np.zeros(d)
    rng = np.random.default_rng(seed) if seed is not None else None
    best_v, best_rate = v, -1.0
    epochs = 0
    for epochs in range(1, max_epochs + 1):
        order = rng.permutation(n) if rng is not None else np.arange(n)
        for i in order:
            if m.predict(xb[i] + v) != clean[i]:
                continue
            dv = deepfool(m, xb[i] + v, max_iter=max_iter, overshoot=overshoot)
            if dv.success:
                v = project(v + dv.v, eps, norm)
        rate = float(np.mean(m.predict(xb + v) != clean))
        if rate > best_rate:
            best_v, best_rate = v, rate
        if rate >= 1.0 - th:
            break
    return Perturbation(best_v, kind=UNIVERSAL, success=None,
                        info={"fooling_rate": best_rate, "target_reached": best_rate >= 1.0 - th,
                              "epochs": epochs})


def gduap(m: ToyClassifier, eps: float, iters: int = 200, seed: int = 0, restarts: int = 20,
          max_retries: int = 10, norm: str = "linf") -> Perturbation:
    """Data-free universal perturbation.

    Maximizes the sum over layers of ``log ||l_i(v)||_2`` by projected
    signed-gradient ascent with backtracking, starting from a uniform draw
    in ``[-eps/10, eps/10]``.  Under the max-norm budget the ascent ends on
    a vertex of the box, which is then improved by single-coordinate sign
    flips.  Several random starts are tried and the best kept.
    """
    rng = np.random.default_rng(seed)
    d = m.input_dim
    best = None
    for _ in range(max(1, restarts)):
        for _retry in range(max_retries):
            v = rng.uniform(-eps / 10, eps / 10, size=d)
            obj, grad = m.log_activation_norms(v)
            if np.isfinite(obj):
                break
        else:
            raise ZeroActivation(f"all {max_retries} initializations gave a zero layer response")
        history = [float(obj)]
        step = eps / 4
        for _ in range(iters):
            if step < eps * 1e-7:
                break
            cand = project(v + step * _direction(grad, norm), eps, norm)
            c_obj, c_grad = m.log_activation_norms(cand)
            if c_obj > obj:
                v, obj, grad = cand, c_obj, c_grad
                history.append(float(obj))
                step = min(step * 1.5, 2 * eps)
            else:
                step *= 0.5
        if norm == "linf":
            v, obj, grad = _polish_vertex(m, v, obj, grad, eps, history)
        if best is None or obj > best[1]:
            best = (v, float(obj), history)
    v, obj, history = best
    return Perturbation(v, kind=UNIVERSAL, info={"objective": obj, "history": history})


def _polish_vertex(m, v, obj, grad, eps, history, max_passes=20):
    """Flip coordinates of ``v`` that sit on the box face while that raises
    the objective; every accepted flip is an ascent step inside the ball."""
    for _ in range(max_passes):
        improved = False
        for i in np.flatnonzero(np.abs(v) >= eps * (1 - 1e-12)):
            cand = v.copy()
            cand[i] = -cand[i]
            c_obj, c_grad = m.log_activation_norms(cand)
            if c_obj > obj:
                v, obj, grad = cand, c_obj, c_grad
                history.append(float(obj))
                improved = True
        if not improved:
            break
    return v, obj, grad
