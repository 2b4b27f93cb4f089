"""Per-pixel Gaussian-mixture background models (MOG and MOG2) and the KNN sample model.

The models are stored as ``(K, h*w)`` arrays. Both mixture models follow the
per-pixel update loop of the OpenCV reference implementations. Nearly every
pixel of a thermal frame matches its first component, so that case is handled
with dense array operations and only the remaining pixels go through the
general (gathered) path.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .base import KNN, MOG, MOG2, Segmenter, SegmenterSpec, register

_EPS = np.finfo(np.float32).eps


def _move(arrays: list[np.ndarray], src: int | np.ndarray, dst: np.ndarray) -> None:
    """Per column, move row ``src`` to row ``dst <= src`` and shift the rows in between down by one."""
    k = arrays[0].shape[0]
    rows = np.arange(k)[:, None]
    src = np.broadcast_to(src, dst.shape)
    idx = np.where((rows > dst) & (rows <= src), rows - 1, rows)
    idx = np.where(rows == dst, src, idx)
    for a in arrays:
        a[...] = np.take_along_axis(a, idx, axis=0)


def _last_true_before(cond: np.ndarray, limit: np.ndarray) -> np.ndarray:
    """Index + 1 of the last True row strictly above ``limit`` in each column (0 if none)."""
    k = cond.shape[0]
    c = cond & (np.arange(k)[:, None] < limit)
    any_ = c.any(axis=0)
    last = k - 1 - np.argmax(c[::-1], axis=0)
    return np.where(any_, last + 1, 0)


@register(MOG)
class MOGSegmenter(Segmenter):
    """Mixture of Gaussians (KaewTraKulPong & Bowden).

    Components are kept ordered by ``weight / sigma``. A pixel matches the first
    component within 2.5 sigma; unmatched pixels replace the weakest component.
    The background is the shortest prefix of components whose weights exceed
    ``backRatio`` (all components if none does), and a pixel is foreground unless
    it matched inside that prefix. Learning rate is ``1 / min(frames_seen, history)``.
    """

    MATCH_SIGMAS = 2.5
    INITIAL_WEIGHT = 0.05

    def __init__(self, spec: SegmenterSpec, seed: int = 0):
        super().__init__(spec, seed)
        p = spec.params
        self.history = int(p["history"])
        self.nmix = int(p["nmixtures"])
        self.back_ratio = float(p["backRatio"])
        noise_sigma = float(p.get("noiseSigma", 15.0))
        self.min_var = np.float32(noise_sigma ** 2)
        self.init_var = np.float32(4.0 * noise_sigma ** 2)
        self.init_key = np.float32(self.INITIAL_WEIGHT / (2.0 * noise_sigma))
        self.weight: Optional[np.ndarray] = None
        self.mean: Optional[np.ndarray] = None
        self.var: Optional[np.ndarray] = None
        self.key: Optional[np.ndarray] = None

    def _segment(self, px: np.ndarray) -> np.ndarray:
        x = px.reshape(-1)
        if self.weight is None:
            # rows past ``used`` are never touched, so large nmixtures cost little memory
            shape = (self.nmix, x.size)
            self.weight, self.mean = np.zeros(shape, np.float32), np.zeros(shape, np.float32)
            self.var, self.key = np.zeros(shape, np.float32), np.zeros(shape, np.float32)
            self.used = 0
        alpha = np.float32(1.0 / min(self.frames_seen, self.history))
        vt = np.float32(self.MATCH_SIGMAS ** 2)
        rows = min(self.used + 1, self.nmix)
        W, M, V, S = (a[:rows] for a in (self.weight, self.mean, self.var, self.key))

        # first component, dense
        w0 = W[0].copy()
        d = x - M[0]
        d2 = d * d
        hit0 = (w0 >= _EPS) & (d2 < vt * V[0])
        np.copyto(W[0], w0 + alpha * (1 - w0), where=hit0)
        np.copyto(M[0], M[0] + alpha * d, where=hit0)
        np.copyto(V[0], np.maximum(V[0] + alpha * (d2 - V[0]), self.min_var), where=hit0)
        np.divide(w0, np.sqrt(V[0]), out=S[0], where=hit0)

        rest = np.flatnonzero(~hit0)
        if rest.size:
            k_hit = self._general((W, M, V, S), rest, x[rest], alpha, vt)

        wsum = W.sum(axis=0)
        scale = np.float32(1) / wsum
        W *= scale
        S *= scale

        fg = np.zeros(x.size, dtype=bool)
        if rest.size:
            cum = np.cumsum(W[:, rest], axis=0)
            over = cum > self.back_ratio
            k_fg = np.where(over.any(axis=0), np.argmax(over, axis=0) + 1, rows)
            fg[rest] = k_hit >= k_fg
        return fg.reshape(px.shape)

    def _general(self, model, idx: np.ndarray, x: np.ndarray, alpha, vt) -> np.ndarray:
        W, M, V, S = (a[:, idx] for a in model)
        active = np.logical_and.accumulate(W >= _EPS, axis=0)
        d = x - M
        d2 = d * d
        match = active & (d2 < vt * V)
        matched = match.any(axis=0)
        hit = np.argmax(match, axis=0)
        n_active = active.sum(axis=0)

        # matched: update the hit component, then bubble it up by its sort key
        m = np.flatnonzero(matched)
        h = hit[m]
        w_old = W[h, m]
        W[h, m] = w_old + alpha * (1 - w_old)
        M[h, m] += alpha * d[h, m]
        V[h, m] = np.maximum(V[h, m] + alpha * (d2[h, m] - V[h, m]), self.min_var)
        S[h, m] = w_old / np.sqrt(V[h, m])

        k_hit = np.empty(x.size, dtype=np.int64)
        if m.size:
            sub = [W[:, m], M[:, m], V[:, m], S[:, m]]
            pos = _last_true_before(sub[3] >= S[h, m], h)
            _move(sub, h, pos)
            for a, s in zip((W, M, V, S), sub):
                a[:, m] = s
            k_hit[m] = pos

        # unmatched: replace the weakest component
        u = np.flatnonzero(~matched)
        if u.size:
            slot = np.minimum(n_active[u], self.nmix - 1)
            W[slot, u] = self.INITIAL_WEIGHT
            M[slot, u] = x[u]
            V[slot, u] = self.init_var
            S[slot, u] = self.init_key
            k_hit[u] = slot
            self.used = max(self.used, int(slot.max()) + 1)

        for a, s in zip(model, (W, M, V, S)):
            a[:, idx] = s
        return k_hit


@register(MOG2)
class MOG2Segmenter(Segmenter):
    """Adaptive Gaussian mixture (Zivkovic) with a variable number of components.

    ``thresh`` is the squared Mahalanobis distance for the background test;
    a sample fitting within 3 sigma updates that component, otherwise a new one
    is created. Components whose weight decays below the complexity prior are
    dropped. Learning rate is ``1 / min(2 * frames_seen, history)``.
    """

    VAR_THRESHOLD_GEN = 9.0
    VAR_INIT = 15.0
    VAR_MIN = 4.0
    VAR_MAX = 75.0
    COMPLEXITY_PRIOR = 0.05

    def __init__(self, spec: SegmenterSpec, seed: int = 0):
        super().__init__(spec, seed)
        p = spec.params
        self.history = int(p["history"])
        self.var_threshold = float(p["thresh"])
        self.nmix = int(p["nmixtures"])
        self.back_ratio = float(p["backRatio"])
        self.weight: Optional[np.ndarray] = None
        self.mean: Optional[np.ndarray] = None
        self.var: Optional[np.ndarray] = None

    def _segment(self, px: np.ndarray) -> np.ndarray:
        k, x = self.nmix, px.reshape(-1)
        if self.weight is None:
            self.weight = np.zeros((k, x.size), dtype=np.float32)
            self.mean = np.zeros((k, x.size), dtype=np.float32)
            self.var = np.full((k, x.size), self.VAR_INIT, dtype=np.float32)
        alpha = np.float32(1.0 / min(2 * self.frames_seen, self.history))
        prune = np.float32(-alpha * self.COMPLEXITY_PRIOR)
        tb, tg = np.float32(self.var_threshold), np.float32(self.VAR_THRESHOLD_GEN)
        W, M, V = self.weight, self.mean, self.var

        active = W > 0
        W *= np.float32(1) - alpha
        W += prune
        W *= active

        # first component, dense
        d = x - M[0]
        d2 = d * d
        background = active[0] & (d2 < tb * V[0])
        fit0 = active[0] & (d2 < tg * V[0])
        W[0] += alpha * fit0
        rate = np.where(fit0, alpha / np.where(fit0, W[0], 1), 0).astype(np.float32)
        M[0] += rate * d
        np.copyto(V[0], np.clip(V[0] + rate * (d2 - V[0]), self.VAR_MIN, self.VAR_MAX), where=fit0)

        rest = np.flatnonzero(~fit0)
        unfit = rest
        if rest.size:
            bg, fitted = self._general(rest, x[rest], active[:, rest], alpha, prune, tb, tg)
            background[rest] |= bg
            unfit = rest[~fitted]

        W[W < -prune] = 0
        if k > 1:
            holes = np.flatnonzero(((W[:-1] == 0) & (W[1:] > 0)).any(axis=0))
            if holes.size:
                sub = [a[:, holes] for a in (W, M, V)]
                order = np.argsort(sub[0] == 0, axis=0, kind="stable")
                for a, s in zip((W, M, V), sub):
                    a[:, holes] = np.take_along_axis(s, order, axis=0)
        total = W.sum(axis=0)
        np.divide(W, total, out=W, where=total > 0)

        self._add_modes(unfit, x[unfit], alpha)
        return ~background.reshape(px.shape)

    def _general(self, idx, x, active, alpha, prune, tb, tg) -> tuple[np.ndarray, np.ndarray]:
        """Components 1.. for pixels that did not fit component 0; returns (background, fitted).

        ``active`` marks the components in use before this frame's decay.
        """
        k = self.nmix
        W, M, V = (a[:, idx] for a in (self.weight, self.mean, self.var))
        d = x - M
        d2 = d * d
        kept = np.where(W < -prune, 0, W)
        before = np.cumsum(kept, axis=0) - kept
        fit = active & (d2 < tg * V)
        fit[0] = False
        fitted = fit.any(axis=0)
        f = np.where(fitted, np.argmax(fit, axis=0), k)
        reach = np.arange(k)[:, None] <= f[None]
        bg = (reach & active & (before < self.back_ratio) & (d2 < tb * V)).any(axis=0)

        m = np.flatnonzero(fitted)
        if m.size:
            h = f[m]
            wn = W[h, m] + alpha
            rate = alpha / wn
            W[h, m] = wn
            M[h, m] += rate * d[h, m]
            V[h, m] = np.clip(V[h, m] + rate * (d2[h, m] - V[h, m]), self.VAR_MIN, self.VAR_MAX)
            sub = [W[:, m], M[:, m], V[:, m]]
            pos = _last_true_before(kept[:, m] > wn, h)
            _move(sub, h, pos)
            for a, s in zip((W, M, V), sub):
                a[:, m] = s

        for a, s in zip((self.weight, self.mean, self.var), (W, M, V)):
            a[:, idx] = s
        return bg, fitted

    def _add_modes(self, idx: np.ndarray, x: np.ndarray, alpha) -> None:
        if not idx.size:
            return
        k = self.nmix
        W, M, V = (a[:, idx] for a in (self.weight, self.mean, self.var))
        n_active = (W > 0).sum(axis=0)
        slot = np.minimum(n_active, k - 1)
        cols = np.arange(idx.size)
        below = np.arange(k)[:, None] < slot
        W *= np.where(below, np.float32(1) - alpha, 1).astype(np.float32)
        W[slot, cols] = np.where(n_active == 0, 1, alpha)
        M[slot, cols] = x
        V[slot, cols] = self.VAR_INIT
        pos = _last_true_before(W > alpha, slot)
        _move([W, M, V], slot, pos)
        # replacing the weakest mode drops its weight, so renormalize
        W /= W.sum(axis=0)
        for a, s in zip((self.weight, self.mean, self.var), (W, M, V)):
            a[:, idx] = s


@register(KNN)
class KNNSegmenter(Segmenter):
    """Per-pixel sample reservoir; background iff at least ``k`` samples lie within ``thresh``.

    The reservoir holds ``min(history, max_samples)`` samples. Each frame a pixel
    overwrites one random sample with probability ``samples / history``, so a
    stored sample lives about ``history`` frames.
    """

    K = 2

    def __init__(self, spec: SegmenterSpec, seed: int = 0):
        super().__init__(spec, seed)
        p = spec.params
        self.history = int(p["history"])
        self.dist2 = float(p["thresh"])
        self.n_samples = max(1, min(self.history, int(p.get("max_samples", 20))))
        self.k = min(self.K, self.n_samples)
        self.rng = np.random.default_rng(seed)
        self.samples: Optional[np.ndarray] = None

    def _segment(self, px: np.ndarray) -> np.ndarray:
        if self.samples is None:
            self.samples = np.repeat(px[None], self.n_samples, axis=0).astype(np.float32)
        d = self.samples - px[None]
        close = np.count_nonzero(d * d <= self.dist2, axis=0)
        fg = close < self.k

        rate = self.n_samples / self.history
        upd = self.rng.random(px.shape) < rate
        ys, xs = np.nonzero(upd)
        slots = self.rng.integers(self.n_samples, size=ys.size)
        self.samples[slots, ys, xs] = px[ys, xs]
        return fg
