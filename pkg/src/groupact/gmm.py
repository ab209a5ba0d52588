"""Diagonal-covariance Gaussian mixtures with deterministic EM fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VAR_FLOOR = 1e-6
_LOG_2PI = float(np.log(2.0 * np.pi))


def logsumexp(a: np.ndarray, axis=None) -> np.ndarray | float:
    """log(sum(exp(a))) along ``axis``, safe for rows that are all -inf."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis)) + np.squeeze(m, axis=axis)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class GaussianMixture:
    """A mixture of axis-aligned Gaussians.

    ``weights`` has shape (k,), ``means`` and ``variances`` shape (k, d).
    Weights are positive and sum to one; every variance sits at or above
    the numerical floor so densities stay finite.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        var = np.asarray(self.variances, dtype=float)
        if mu.ndim != 2 or var.shape != mu.shape or w.shape != (mu.shape[0],):
            raise ValueError("inconsistent mixture parameter shapes")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(var))):
            raise ValueError("mixture parameters must be finite")
        if np.any(w <= 0) or abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")
        if np.any(var < VAR_FLOOR * (1.0 - 1e-9)):
            raise ValueError(f"variances below floor {VAR_FLOOR}")
        for arr in (w, mu, var):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_density(self, x: np.ndarray) -> np.ndarray:
        """Per-component log densities, shape (n, k) for x of shape (n, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"dimension mismatch: got {x.shape[1]}, expected {self.dim}")
        diff = x[:, None, :] - self.means[None, :, :]
        quad = np.sum(diff * diff / self.variances[None, :, :], axis=2)
        norm = np.sum(np.log(self.variances), axis=1) + self.dim * _LOG_2PI
        return -0.5 * (quad + norm[None, :])

    def log_density(self, x: np.ndarray) -> np.ndarray | float:
        """Log mixture density at ``x`` ((d,) or (n, d)); scalar for one point."""
        single = np.asarray(x).ndim == 1
        comp = self.component_log_density(x) + np.log(self.weights)[None, :]
        out = logsumexp(comp, axis=1)
        if single:
            return float(out[0]) if np.ndim(out) else float(out)
        return out

    def to_payload(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "GaussianMixture":
        return cls(
            weights=np.asarray(payload["weights"], dtype=float),
            means=np.asarray(payload["means"], dtype=float),
            variances=np.asarray(payload["variances"], dtype=float),
        )


def _kmeans(x: np.ndarray, k: int, rng: np.random.Generator, iters: int = 50) -> np.ndarray:
    """Plain Lloyd iteration; deterministic for a given generator state."""
    n = x.shape[0]
    idx = rng.choice(n, size=k, replace=False)
    centers = x[idx].copy()
    assign = np.zeros(n, dtype=int)
    for _ in range(iters):
        d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(d2, axis=1)
        for j in range(k):
            mask = new_assign == j
            if not np.any(mask):
                far = int(np.argmax(np.min(d2, axis=1)))
                centers[j] = x[far]
                new_assign[far] = j
            else:
                centers[j] = x[mask].mean(axis=0)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return centers


def fit_em(
    samples: np.ndarray,
    k: int,
    seed: int,
    max_iters: int = 200,
    tol: float = 1e-4,
    var_floor: float = VAR_FLOOR,
    return_history: bool = False,
):
    """Fit a k-component diagonal mixture by EM.

    Initialisation is seeded k-means, so identical inputs give bitwise
    identical parameters.  The per-iteration log-likelihood is
    non-decreasing; iteration stops when the relative improvement drops
    below ``tol`` or after ``max_iters`` rounds.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    n, d = x.shape
    if n < k:
        raise ValueError(f"need at least {k} samples, got {n}")
    if k == 1:
        mean = x.mean(axis=0, keepdims=True)
        var = np.maximum(x.var(axis=0, keepdims=True), var_floor)
        gm = GaussianMixture(np.array([1.0]), mean, var)
        if return_history:
            return gm, [float(np.sum(gm.log_density(x)))]
        return gm

    rng = np.random.default_rng(seed)
    centers = _kmeans(x, k, rng)
    d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    assign = np.argmin(d2, axis=1)
    weights = np.zeros(k)
    means = centers.copy()
    variances = np.empty((k, d))
    for j in range(k):
        mask = assign == j
        weights[j] = max(mask.sum(), 1.0)
        pts = x[mask] if np.any(mask) else x
        variances[j] = np.maximum(pts.var(axis=0), var_floor)
    weights /= weights.sum()

    history: list[float] = []
    prev = -np.inf
    for _ in range(max_iters):
        gm = GaussianMixture(weights, means, variances)
        comp = gm.component_log_density(x) + np.log(weights)[None, :]
        per_point = logsumexp(comp, axis=1)
        ll = float(np.sum(per_point))
        history.append(ll)
        resp = np.exp(comp - per_point[:, None])
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        weights = nk / nk.sum()
        means = (resp.T @ x) / nk[:, None]
        sq = (resp.T @ (x * x)) / nk[:, None]
        variances = np.maximum(sq - means * means, var_floor)
        if prev > -np.inf and ll - prev < tol * max(1.0, abs(prev)):
            break
        prev = ll

    gm = GaussianMixture(weights, means, variances)
    history.append(float(np.sum(gm.log_density(x))))
    if return_history:
        return gm, history
    return gm
