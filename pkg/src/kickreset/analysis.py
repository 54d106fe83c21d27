"""Steady-state statistics, extrapolations, scaling collapses, snapshots, intrinsic dimension."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .core import ModelParams

T_MAX_CYCLES = 1000


class NoSteadyWindowError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class NoCrossingError(ValueError):
    pass


def steady_window(params: ModelParams) -> tuple[float, float]:
    """(t_steady, t_max) = (max(2L, 10/p), 1000 T)."""
    if params.p <= 0:
        raise NoSteadyWindowError("no steady window for p = 0")
    t_min = max(2.0 * params.L, 10.0 / params.p)
    t_max = T_MAX_CYCLES * params.T
    if t_min >= t_max:
        raise NoSteadyWindowError(f"degenerate steady window: t_steady = {t_min} >= t_max = {t_max}")
    return t_min, t_max


# extrapolations ---------------------------------------------------------------

@dataclass(frozen=True)
class Extrapolation:
    x_inf: float
    a: float
    b: float
    cov: np.ndarray

    def __iter__(self):
        return iter((self.x_inf, self.a, self.b))

    @property
    def x_inf_err(self) -> float:
        return float(np.sqrt(self.cov[0, 0]))


def extrapolate_x2(L_values, x2_values, sigma=None) -> Extrapolation:
    """Least squares X^2(L) = X^2_inf + a/L + b/L^2.

    With ``sigma`` the fit is weighted and the covariance uses the given
    errors; otherwise it is scaled by the residual variance (nan for an exact
    three-point fit).
    """
    L = np.asarray(L_values, dtype=float)
    y = np.asarray(x2_values, dtype=float)
    if np.unique(L).size < 3:
        raise InsufficientDataError("need at least three distinct sizes")
    A = np.column_stack([np.ones_like(L), 1.0 / L, 1.0 / L**2])
    w = np.ones_like(L) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    Aw, yw = A * w[:, None], y * w
    if np.linalg.matrix_rank(Aw) < 3:
        raise InsufficientDataError("rank-deficient design")
    coef, *_ = np.linalg.lstsq(Aw, yw, rcond=None)
    cov = np.linalg.inv(Aw.T @ Aw)
    if sigma is None:
        dof = L.size - 3
        s2 = float(np.sum((yw - Aw @ coef) ** 2) / dof) if dof > 0 else float("nan")
        cov = cov * s2
    return Extrapolation(float(coef[0]), float(coef[1]), float(coef[2]), cov)


@dataclass(frozen=True)
class SlopeResult:
    a_inf: float
    clamped: bool
    L_mid: np.ndarray
    slopes: np.ndarray
    raw: float

    def __float__(self):
        return self.a_inf


def slope_extrapolation(L_values, S_values, triple_width: int = 1, poly_order: int = 2) -> SlopeResult:
    """Local slopes on triples (L_i, L_{i+w}, L_{i+2w}), extrapolated as a polynomial in 1/L.

    A negative extrapolated slope is clamped to 0.
    """
    order = np.argsort(L_values)
    L = np.asarray(L_values, dtype=float)[order]
    S = np.asarray(S_values, dtype=float)[order]
    w = int(triple_width)
    n_trip = L.size - 2 * w
    if w < 1 or n_trip < 2:
        raise InsufficientDataError("need enough sizes for at least two local triples")
    mids, slopes = [], []
    for i in range(n_trip):
        idx = [i, i + w, i + 2 * w]
        slopes.append(np.polyfit(L[idx], S[idx], 1)[0])
        mids.append(L[i + w])
    mids, slopes = np.array(mids), np.array(slopes)
    deg = min(poly_order, mids.size - 1)
    coef = np.polyfit(1.0 / mids, slopes, deg)
    raw = float(coef[-1])
    return SlopeResult(max(raw, 0.0), raw < 0, mids, slopes, raw)


def slope_bootstrap(L_values, samples, triple_width: int = 1, poly_order: int = 2, n_bootstrap: int = 200,
                    seed: int = 0) -> tuple[SlopeResult, float]:
    """slope_extrapolation of the sample means plus a bootstrap error of the raw a_inf.

    ``samples[k]`` holds per-trajectory values at size ``L_values[k]``; each
    size is resampled independently.
    """
    samples = [np.asarray(s, dtype=float) for s in samples]
    res = slope_extrapolation(L_values, [s.mean() for s in samples], triple_width, poly_order)
    rng = np.random.default_rng(seed)
    raws = []
    for _ in range(n_bootstrap):
        means = [s[rng.integers(0, s.size, s.size)].mean() for s in samples]
        raws.append(slope_extrapolation(L_values, means, triple_width, poly_order).raw)
    return res, float(np.std(raws, ddof=1)) if len(raws) > 1 else float("nan")


def curve_crossings(p, y1, y2) -> np.ndarray:
    """Points where two curves sampled on the same grid ``p`` cross (linear interpolation)."""
    p = np.asarray(p, dtype=float)
    d = np.asarray(y1, dtype=float) - np.asarray(y2, dtype=float)
    out = [p[i] for i in np.nonzero(d == 0)[0]]
    for i in np.nonzero(d[:-1] * d[1:] < 0)[0]:
        out.append(p[i] + d[i] / (d[i] - d[i + 1]) * (p[i + 1] - p[i]))
    return np.sort(np.array(out, dtype=float))


# finite-size scaling -------------------------------------------------------------

FORMS = ("binder", "qmi", "tau")


@dataclass
class ScalingResult:
    p_c: float
    nu: float
    eta: float | None = None
    z: float | None = None
    quality: float = 0.0
    half_widths: dict = field(default_factory=dict)
    converged: bool = True
    form: str = "binder"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def write_json(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def _prepare(datasets) -> list[tuple[int, np.ndarray, np.ndarray, np.ndarray]]:
    out = []
    for L in sorted(datasets):
        d = datasets[L]
        p, y = np.asarray(d[0], dtype=float), np.asarray(d[1], dtype=float)
        e = np.asarray(d[2], dtype=float) if len(d) > 2 and d[2] is not None else np.ones_like(y)
        o = np.argsort(p, kind="stable")
        out.append((int(L), p[o], y[o], e[o]))
    return out


def _rescale(data, form, p_c, nu, expo):
    xs, ys, es, labels = [], [], [], []
    for L, p, y, e in data:
        xs.append((p - p_c) * L ** (1.0 / nu))
        f = L ** (-expo) if form != "binder" else 1.0
        ys.append(y * f)
        es.append(e * f)
        labels.append(np.full(p.size, L))
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(es), np.concatenate(labels)


def collapse_cost(data, form: str, p_c: float, nu: float, expo: float = 0.0,
                  bandwidth_factor: float = 1.5, min_fraction: float = 0.5) -> float:
    """Mean squared deviation from a local-linear master curve built from the other sizes.

    Each point i is compared with a Gaussian-kernel local linear fit through
    the points of all other sizes (bandwidth = factor x median spacing of the
    pooled rescaled abscissas); points outside the other sizes' range are not
    scored.  Returns inf when fewer than ``min_fraction`` of the points can
    be scored.
    """
    if nu <= 0:
        return np.inf
    x, y, e, lab = _rescale(data, form, p_c, nu, expo)
    xs = np.sort(x)
    gaps = np.diff(xs)
    gaps = gaps[gaps > 0]
    if gaps.size == 0:
        return np.inf
    bw = bandwidth_factor * float(np.median(gaps))
    total, used = 0.0, 0
    for i in range(x.size):
        other = lab != lab[i]
        xo, yo, eo = x[other], y[other], e[other]
        if x[i] < xo.min() or x[i] > xo.max():
            continue
        k = np.exp(-0.5 * ((xo - x[i]) / bw) ** 2) / eo**2
        if np.count_nonzero(k > 1e-12 * k.max()) < 2:
            continue
        d = xo - x[i]
        S0, S1, S2 = k.sum(), (k * d).sum(), (k * d * d).sum()
        T0, T1 = (k * yo).sum(), (k * d * yo).sum()
        det = S0 * S2 - S1 * S1
        if det <= 1e-300 * max(S0 * S2, 1e-300):
            continue
        fit = (S2 * T0 - S1 * T1) / det
        var_fit = S2 / det  # intercept variance with weights 1/e^2
        total += (y[i] - fit) ** 2 / (e[i] ** 2 + var_fit)
        used += 1
    if used < max(3, min_fraction * x.size):
        return np.inf
    return total / used


def _expo_name(form):
    return {"binder": None, "qmi": "eta", "tau": "z"}[form]


def _fit_once(data, form, fixed, start, grid_pc, grid_nu, grid_expo, tol=1e-6, max_iter=4000, n_starts=4):
    free = [k for k in ("p_c", "nu", "expo") if k not in fixed and not (k == "expo" and form == "binder")]

    def unpack(theta):
        vals = dict(fixed)
        vals.update(zip(free, theta))
        if form == "binder":
            vals["expo"] = 0.0
        return vals["p_c"], vals["nu"], vals["expo"]

    def cost(theta):
        pc, nu, ex = unpack(theta)
        return collapse_cost(data, form, pc, nu, ex)

    # coarse grid, then simplex restarts from the best few grid points
    grids = {"p_c": grid_pc, "nu": grid_nu, "expo": grid_expo}
    mesh = np.meshgrid(*[grids[k] for k in free], indexing="ij")
    scored = []
    for theta in zip(*[m.ravel() for m in mesh]):
        c = cost(theta)
        if np.isfinite(c):
            scored.append((c, np.array(theta, dtype=float)))
    scored.sort(key=lambda t: t[0])
    starts = [t for _, t in scored[:n_starts]] or [np.array([start[k] for k in free], dtype=float)]
    best, best_c, ok = starts[0], scored[0][0] if scored else np.inf, False
    for x0 in starts:
        res = minimize(cost, x0, method="Nelder-Mead", options={"xatol": tol, "fatol": tol, "maxiter": max_iter})
        if res.fun < best_c:
            best, best_c = res.x, float(res.fun)
            ok = bool(res.success)
        elif not ok and res.success and res.fun <= best_c:
            ok = True
    return unpack(best), float(best_c), bool(ok and np.isfinite(best_c))


def fss_collapse(datasets: dict, form: str = "binder", p_c: float | None = None, nu: float = 1.0,
                 expo: float = 0.0, fix: dict | None = None, n_bootstrap: int = 200, seed: int = 0,
                 grid_size: int = 9) -> ScalingResult:
    """Fit y = L^expo f((p - p_c) L^(1/nu)) by minimizing :func:`collapse_cost`.

    ``datasets`` maps L to (p, y[, stderr]).  ``expo`` is eta for the qmi form
    and z for the tau form; the binder form has none.  ``fix`` holds values to
    keep constant (keys p_c, nu, expo).  Half-widths come from a bootstrap:
    parametric (Gaussian with the given errors) when errors are supplied,
    otherwise by resampling p-points within each size.
    """
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    data = _prepare(datasets)
    if len(data) < 3:
        raise InsufficientDataError("need at least three sizes")
    if any(d[1].size < 5 for d in data):
        raise InsufficientDataError("need at least five p-points per size")
    fixed = dict(fix or {})
    if form == "binder":
        fixed.pop("expo", None)
    p_all = np.concatenate([d[1] for d in data])
    pc0 = float(np.median(p_all)) if p_c is None else float(p_c)
    start = {"p_c": pc0, "nu": float(nu), "expo": float(expo)}
    grid_pc = np.linspace(p_all.min(), p_all.max(), grid_size)
    grid_nu = np.geomspace(0.3, 5.0, grid_size)
    grid_expo = np.linspace(expo - 1.0, expo + 1.0, 5)

    (pc, nu_f, ex), q, ok = _fit_once(data, form, fixed, start, grid_pc, grid_nu, grid_expo)

    has_err = all(np.any(d[3] != 1.0) for d in data) and all(np.all(d[3] > 0) for d in data)
    rng = np.random.default_rng(seed)
    boots = []
    local = {"p_c": pc, "nu": nu_f, "expo": ex}
    for _ in range(n_bootstrap):
        bd = {}
        for L, p, y, e in data:
            if has_err:
                bd[L] = (p, y + e * rng.standard_normal(y.size), e)
            else:
                idx = np.sort(rng.integers(0, p.size, p.size))
                bd[L] = (p[idx], y[idx], e[idx])
        bdata = _prepare(bd)
        # local restart around the central estimate
        (bpc, bnu, bex), bq, _ = _fit_once(bdata, form, fixed, local, [pc], [nu_f], [ex], n_starts=1)
        if np.isfinite(bq):
            boots.append((bpc, bnu, bex))
    half = {}
    if len(boots) > 1:
        b = np.array(boots)
        # half-width of the central 68% interval
        for j, k in enumerate(("p_c", "nu", "expo")):
            if k in fixed or (k == "expo" and form == "binder"):
                continue
            lo, hi = np.percentile(b[:, j], [16, 84])
            half[_expo_name(form) if k == "expo" else k] = float(0.5 * (hi - lo))
    res = ScalingResult(p_c=float(pc), nu=float(nu_f), quality=float(q) if np.isfinite(q) else float("inf"),
                        half_widths=half, converged=bool(ok and np.isfinite(q)), form=form)
    if form == "qmi":
        res.eta = float(ex)
    elif form == "tau":
        res.z = float(ex)
    return res


# threshold times ------------------------------------------------------------------

def tau_threshold(series, s0: float = 0.15, cycles=None, T: float = 1.0) -> float:
    """First time the linearly interpolated series reaches ``s0`` from above."""
    s = np.asarray(series, dtype=float)
    t = (np.arange(s.size) if cycles is None else np.asarray(cycles, dtype=float)) * T
    below = np.nonzero(s <= s0)[0]
    if below.size == 0:
        raise NoCrossingError(f"series never reaches s0 = {s0}")
    k = int(below[0])
    if k == 0:
        return float(t[0])
    s_a, s_b = s[k - 1], s[k]
    return float(t[k - 1] + (s_a - s0) / (s_a - s_b) * (t[k] - t[k - 1]))


def tau_bootstrap(samples: np.ndarray, s0: float = 0.15, cycles=None, T: float = 1.0,
                  n_bootstrap: int = 200, seed: int = 0) -> tuple[float, float]:
    """tau of the trajectory-averaged curve and its bootstrap standard error.

    ``samples`` has shape (n_trajectories, n_times).
    """
    samples = np.asarray(samples, dtype=float)
    tau = tau_threshold(samples.mean(axis=0), s0, cycles, T)
    rng = np.random.default_rng(seed)
    n = samples.shape[0]
    vals = []
    for _ in range(n_bootstrap):
        idx = rng.integers(0, n, n)
        try:
            vals.append(tau_threshold(samples[idx].mean(axis=0), s0, cycles, T))
        except NoCrossingError:
            continue
    err = float(np.std(vals, ddof=1)) if len(vals) > 1 else float("nan")
    return tau, err


# snapshots and intrinsic dimension ----------------------------------------------------

@dataclass
class SnapshotDataset:
    records: np.ndarray  # (n, m*L) uint8 bits
    m: int
    L: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.records = np.asarray(self.records, dtype=np.uint8)
        if self.records.ndim != 2 or self.records.shape[1] != self.m * self.L:
            raise ValueError("records must have shape (n, m*L)")
        if self.records.shape[0] < 2:
            raise ValueError("a dataset needs at least two records")

    @property
    def n(self) -> int:
        return self.records.shape[0]


def _index_bits(idx: np.ndarray, L: int) -> np.ndarray:
    # bit i of the basis index is site i
    return ((idx[:, None] >> np.arange(L)[None, :]) & 1).astype(np.uint8)


def make_snapshots(source, m: int, n: int, basis: str = "X", rng: np.random.Generator | None = None,
                   gap: int | None = None, burn_in: int = 0, params: dict | None = None) -> SnapshotDataset:
    """``n`` records of ``m`` Born samples each, advancing ``source`` by ``gap`` cycles in between.

    ``source`` exposes ``psi`` (current state) and ``advance(n_cycles)``;
    ``gap`` defaults to 4L.
    """
    from .observables import x_basis_probabilities

    psi = source.psi
    L = psi.shape[0].bit_length() - 1
    gap = 4 * L if gap is None else gap
    rng = np.random.default_rng(0) if rng is None else rng
    if burn_in:
        source.advance(burn_in)
    recs = np.empty((n, m * L), dtype=np.uint8)
    for r in range(n):
        psi = source.psi
        if basis == "X":
            prob = x_basis_probabilities(psi)
        elif basis == "Z":
            prob = psi.real**2 + psi.imag**2
        else:
            raise ValueError(f"basis must be 'X' or 'Z', got {basis!r}")
        prob = prob / prob.sum()
        cdf = np.cumsum(prob)
        idx = np.searchsorted(cdf, rng.random(m) * cdf[-1], side="right")
        idx = np.minimum(idx, prob.size - 1)
        recs[r] = _index_bits(idx, L).reshape(-1)
        if r < n - 1 and gap:
            source.advance(gap)
    return SnapshotDataset(recs, m, L, dict(params or {}))


def _pack(bits: np.ndarray) -> np.ndarray:
    """Pack bit rows into big-endian uint64 words (first bit most significant)."""
    n, width = bits.shape
    n_words = (width + 63) // 64
    pad = n_words * 64 - width
    b = np.concatenate([np.zeros((n, pad), dtype=np.uint8), bits], axis=1) if pad else bits
    by = np.packbits(b, axis=1, bitorder="big")  # (n, 8 * n_words)
    return by.reshape(n, n_words, 8)[:, :, ::-1].copy().view(np.uint64).reshape(n, n_words)


def _distances(words: np.ndarray, i0: int, i1: int, metric: str) -> np.ndarray:
    x = words[i0:i1, None, :] ^ words[None, :, :]
    if metric == "hamming":
        return np.bitwise_count(x).sum(axis=2).astype(float)
    if metric == "integer_xor":
        scale = 2.0 ** (64 * np.arange(words.shape[1] - 1, -1, -1))
        return (x.astype(float) * scale).sum(axis=2)
    raise ValueError(f"metric must be 'hamming' or 'integer_xor', got {metric!r}")


@dataclass(frozen=True)
class TwoNNResult:
    dimension: float
    n_unique: int
    n_kept: int
    discarded_fraction: float

    def __float__(self):
        return self.dimension


def twoNN(dataset, metric: str = "hamming", min_points: int = 100, chunk: int | None = None) -> TwoNNResult:
    """Two-nearest-neighbour maximum-likelihood intrinsic dimension with tie discarding.

    ``chunk`` rows of the distance matrix are formed at a time; by default it
    is chosen to keep the xor buffer near 64 MB.
    """
    bits = dataset.records if isinstance(dataset, SnapshotDataset) else np.asarray(dataset, dtype=np.uint8)
    uniq = np.unique(bits, axis=0)
    n = uniq.shape[0]
    if n < min_points:
        raise InsufficientDataError(f"only {n} distinct records, need {min_points}")
    words = _pack(uniq)
    if chunk is None:
        chunk = max(1, min(n, (8 << 20) // (n * words.shape[1])))
    r1 = np.empty(n)
    r2 = np.empty(n)
    for i0 in range(0, n, chunk):
        i1 = min(n, i0 + chunk)
        D = _distances(words, i0, i1, metric)
        D[np.arange(i1 - i0), np.arange(i0, i1)] = np.inf
        part = np.partition(D, 1, axis=1)[:, :2]
        r1[i0:i1], r2[i0:i1] = part[:, 0], part[:, 1]
    keep = (r1 > 0) & (r2 > r1)
    n_kept = int(keep.sum())
    if n_kept < min_points:
        raise InsufficientDataError(f"only {n_kept} usable points after discarding ties, need {min_points}")
    d = n_kept / float(np.sum(np.log(r2[keep] / r1[keep])))
    return TwoNNResult(d, n, n_kept, 1.0 - n_kept / n)


def twoNN_id(dataset, metric: str = "hamming", min_points: int = 100) -> float:
    return twoNN(dataset, metric, min_points).dimension


def synthetic_bit_dataset(n: int, dim: int, n_bits: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian points in ``dim`` dimensions mapped to bits by random hyperplanes.

    Each bit is sign(w . z + b) with w a uniform unit direction and b ~ N(0, 1),
    so the Hamming distance approximates the Euclidean one for many bits.
    """
    z = rng.standard_normal((n, dim))
    W = rng.standard_normal((dim, n_bits))
    W /= np.linalg.norm(W, axis=0)
    b = rng.standard_normal(n_bits)
    return (z @ W + b > 0).astype(np.uint8)


def log_log_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
