"""Maximum likelihood for the dynamic multinomial logit with correlated random effects.

For person i with transition records t and non-base outcomes j, the linear index is
V_itj = x_it' b_j + eta_ij and the base outcome's index is 0. The effects eta_i are
N(0, L L') and are integrated out with a tensor-product Gauss-Hermite rule through
eta_q = L u_q. In Heckman mode the initial state enters the same integral through a
multinomial equation with index z_i' theta_j + rho_j eta_ij.

Parameter vector layout, outcome-major within each block:
    B (P x m) | heterogeneity (Cholesky entries or one shared sigma) | Theta (Pz x m) | rho (m)
"""
from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, NamedTuple, Optional

import numpy as np
import pandas as pd
from scipy import linalg, optimize, stats
from scipy.special import log_softmax, logsumexp

from dynmlogit.errors import (
    CollinearDesign,
    ConfigInvalid,
    DimensionMismatch,
    NonFiniteLikelihood,
    NotConverged,
    SeparationDetected,
)
from dynmlogit.panel import DesignMatrix
from dynmlogit.quadrature import IntegrationRule, gauss_hermite
from dynmlogit.specs import FitOptions, ModelSpec

logger = logging.getLogger(__name__)

AUXILIARY_PREFIXES = ("mean_", "init_")
NEWTON_MAX_ITER = 25
HESSIAN_STEP = 1e-5
QUADRATURE_TOLERANCE = 1e-4


class Params(NamedTuple):
    B: np.ndarray
    L: np.ndarray
    Theta: Optional[np.ndarray]
    rho: Optional[np.ndarray]


@dataclass(frozen=True)
class ParameterLayout:
    columns: tuple[str, ...]
    outcomes: tuple[str, ...]
    base: int
    heterogeneity: str
    z_columns: tuple[str, ...] = ()

    @classmethod
    def for_design(cls, spec: ModelSpec, design: DesignMatrix) -> "ParameterLayout":
        return cls(
            columns=design.columns,
            outcomes=design.outcomes,
            base=design.base,
            heterogeneity=spec.heterogeneity,
            z_columns=design.z_columns if spec.uses_heckman else (),
        )

    @property
    def non_base(self) -> np.ndarray:
        return np.array([k for k in range(len(self.outcomes)) if k != self.base], dtype=np.int64)

    @property
    def non_base_labels(self) -> tuple[str, ...]:
        return tuple(self.outcomes[k] for k in self.non_base)

    @property
    def m(self) -> int:
        return len(self.outcomes) - 1

    @property
    def P(self) -> int:
        return len(self.columns)

    @property
    def Pz(self) -> int:
        return len(self.z_columns)

    @property
    def heckman(self) -> bool:
        return self.Pz > 0

    @property
    def dim(self) -> int:
        return {"none": 0, "random_effects": self.m, "shared": 1}[self.heterogeneity]

    @cached_property
    def basis(self) -> tuple[np.ndarray, ...]:
        """E_k with L = sum_k theta_k E_k (m x dim)."""
        if self.heterogeneity == "none":
            return ()
        if self.heterogeneity == "shared":
            return (np.ones((self.m, 1)),)
        out = []
        for i in range(self.m):
            for j in range(i + 1):
                E = np.zeros((self.m, self.m))
                E[i, j] = 1.0
                out.append(E)
        return tuple(out)

    @property
    def slices(self) -> dict[str, slice]:
        nb = self.m * self.P
        nh = len(self.basis)
        nz = self.m * self.Pz
        rho = self.m if self.heckman else 0
        return {
            "B": slice(0, nb),
            "het": slice(nb, nb + nh),
            "Theta": slice(nb + nh, nb + nh + nz),
            "rho": slice(nb + nh + nz, nb + nh + nz + rho),
        }

    @property
    def size(self) -> int:
        return self.slices["rho"].stop

    @cached_property
    def names(self) -> tuple[str, ...]:
        labels = self.non_base_labels
        names = [f"{o}:{c}" for o in labels for c in self.columns]
        if self.heterogeneity == "random_effects":
            names += [f"chol[{labels[i]},{labels[j]}]" for i in range(self.m) for j in range(i + 1)]
        elif self.heterogeneity == "shared":
            names.append("sigma")
        if self.heckman:
            names += [f"init:{o}:{c}" for o in labels for c in self.z_columns]
            names += [f"rho:{o}" for o in labels]
        return tuple(names)

    def unpack(self, theta: np.ndarray) -> Params:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.size,):
            raise DimensionMismatch(f"parameter vector has length {theta.shape}, layout needs {self.size}")
        s = self.slices
        B = theta[s["B"]].reshape(self.m, self.P).T
        L = self.cholesky(theta)
        if not self.heckman:
            return Params(B, L, None, None)
        Theta = theta[s["Theta"]].reshape(self.m, self.Pz).T
        return Params(B, L, Theta, theta[s["rho"]])

    def cholesky(self, theta: np.ndarray) -> np.ndarray:
        het = np.asarray(theta, dtype=float)[self.slices["het"]]
        L = np.zeros((self.m, self.dim))
        for value, E in zip(het, self.basis):
            L = L + value * E
        return L

    def covariance(self, theta: np.ndarray) -> np.ndarray:
        """Sigma_eta (m x m)."""
        L = self.cholesky(theta)
        return L @ L.T

    def index(self, name: str) -> int:
        return self.names.index(name)

    def coefficient_block(self) -> np.ndarray:
        """Positions of B and Theta entries (the separation guard watches these)."""
        s = self.slices
        return np.r_[np.arange(s["B"].start, s["B"].stop), np.arange(s["Theta"].start, s["Theta"].stop)]

    def to_json(self) -> dict:
        return {
            "columns": list(self.columns),
            "outcomes": list(self.outcomes),
            "base": self.base,
            "heterogeneity": self.heterogeneity,
            "z_columns": list(self.z_columns),
        }


# ── likelihood and score ────────────────────────────────────────────────────

def _person_contributions(
    layout: ParameterLayout,
    p: Params,
    X: np.ndarray,
    y: np.ndarray,
    person: np.ndarray,
    starts: np.ndarray,
    Z: Optional[np.ndarray],
    y_init: Optional[np.ndarray],
    rule: IntegrationRule,
    want_score: bool,
):
    """ln L_i (and per-person scores) for one contiguous block of persons."""
    nb = layout.non_base
    K = len(layout.outcomes)
    n = X.shape[0]
    Q = rule.size
    eta = rule.nodes @ p.L.T  # Q x m

    V = np.zeros((n, Q, K))
    V[:, :, nb] = (X @ p.B)[:, None, :] + eta[None, :, :]
    logp = log_softmax(V, axis=2)
    chosen = np.take_along_axis(logp, np.broadcast_to(y[:, None, None], (n, Q, 1)), axis=2)[:, :, 0]
    logf = np.add.reduceat(chosen, starts, axis=0)  # persons x Q

    if layout.heckman:
        N = Z.shape[0]
        V0 = np.zeros((N, Q, K))
        V0[:, :, nb] = (Z @ p.Theta)[:, None, :] + eta[None, :, :] * p.rho[None, None, :]
        logp0 = log_softmax(V0, axis=2)
        logf = logf + np.take_along_axis(logp0, np.broadcast_to(y_init[:, None, None], (N, Q, 1)), axis=2)[:, :, 0]

    a = logf + rule.log_weights[None, :]
    lli = logsumexp(a, axis=1)
    bad = ~np.isfinite(lli)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        rows = person == person[starts[i]]
        raise NonFiniteLikelihood(i, float(np.nanmax(np.abs(V[rows]))))
    if not want_score:
        return lli, None

    w = np.exp(a - lli[:, None])  # posterior node weights
    r = (y[:, None] == nb[None, :]).astype(float)[:, None, :] - np.exp(logp[:, :, nb])  # n x Q x m
    rbar = np.einsum("tq,tqj->tj", w[person - person[0]], r)
    blocks = [np.add.reduceat(X * rbar[:, [j]], starts, axis=0) for j in range(layout.m)]

    D = np.add.reduceat(r, starts, axis=0)  # persons x Q x m
    if layout.heckman:
        r0 = (y_init[:, None] == nb[None, :]).astype(float)[:, None, :] - np.exp(logp0[:, :, nb])
        D = D + r0 * p.rho[None, None, :]
    for E in layout.basis:
        A = rule.nodes @ E.T  # Q x m
        blocks.append(np.einsum("iq,iqj,qj->i", w, D, A)[:, None])
    if layout.heckman:
        r0bar = np.einsum("iq,iqj->ij", w, r0)
        blocks += [Z * r0bar[:, [j]] for j in range(layout.m)]
        blocks.append(np.einsum("iq,iqj,qj->ij", w, r0, eta))
    return lli, np.hstack(blocks)


def evaluate(
    layout: ParameterLayout,
    theta: np.ndarray,
    design: DesignMatrix,
    rule: IntegrationRule,
    want_score: bool = False,
    threads: int = 1,
):
    """Per-person ln L_i and, optionally, the per-person score matrix.

    Persons are split into contiguous chunks; results are concatenated in person
    order so totals do not depend on the number of threads.
    """
    p = layout.unpack(theta)
    N = design.n_persons
    starts = design.starts
    edges = np.r_[starts, design.n_records]
    n_chunks = 1 if threads <= 1 else min(N, 4 * threads)
    bounds = np.linspace(0, N, n_chunks + 1).astype(int)

    def work(k: int):
        a, b = bounds[k], bounds[k + 1]
        lo, hi = edges[a], edges[b]
        try:
            return _chunk(a, b, lo, hi)
        except NonFiniteLikelihood as e:
            raise NonFiniteLikelihood(int(design.person_ids[a + e.person]), e.index_value) from None

    def _chunk(a, b, lo, hi):
        return _person_contributions(
            layout,
            p,
            design.X[lo:hi],
            design.y[lo:hi],
            design.person[lo:hi],
            starts[a:b] - lo,
            None if design.Z is None or not layout.heckman else design.Z[a:b],
            None if design.y_init is None or not layout.heckman else design.y_init[a:b],
            rule,
            want_score,
        )

    if n_chunks == 1:
        parts = [work(0)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            parts = list(executor.map(work, range(n_chunks)))
    lli = np.concatenate([part[0] for part in parts])
    scores = np.vstack([part[1] for part in parts]) if want_score else None
    return lli, scores


def _rule_for(spec: ModelSpec, layout: ParameterLayout, nodes: Optional[int] = None) -> IntegrationRule:
    return gauss_hermite(nodes or spec.quadrature_nodes, layout.dim)


def log_likelihood(
    spec: ModelSpec,
    params: np.ndarray,
    design: DesignMatrix,
    nodes: Optional[int] = None,
    rule: Optional[IntegrationRule] = None,
    threads: int = 1,
) -> tuple[float, np.ndarray]:
    """(total, per-person) log-likelihood."""
    layout = ParameterLayout.for_design(spec, design)
    rule = rule or _rule_for(spec, layout, nodes)
    lli, _ = evaluate(layout, params, design, rule, threads=threads)
    return float(np.sum(lli)), lli


def gradient(
    spec: ModelSpec,
    params: np.ndarray,
    design: DesignMatrix,
    nodes: Optional[int] = None,
    rule: Optional[IntegrationRule] = None,
    threads: int = 1,
) -> np.ndarray:
    layout = ParameterLayout.for_design(spec, design)
    rule = rule or _rule_for(spec, layout, nodes)
    _, scores = evaluate(layout, params, design, rule, want_score=True, threads=threads)
    return scores.sum(axis=0)


def numeric_jacobian(fun: Callable[[np.ndarray], np.ndarray], theta: np.ndarray, rel_step: float = HESSIAN_STEP) -> np.ndarray:
    """Central-difference Jacobian, step rel_step * max(1, |theta_k|)."""
    theta = np.asarray(theta, dtype=float)
    f0 = np.atleast_1d(np.asarray(fun(theta), dtype=float))
    J = np.empty((f0.size, theta.size))
    for k in range(theta.size):
        h = rel_step * max(1.0, abs(theta[k]))
        up, down = theta.copy(), theta.copy()
        up[k] += h
        down[k] -= h
        J[:, k] = (np.ravel(fun(up)) - np.ravel(fun(down))) / (2.0 * h)
    return J


def collinear_columns(X: np.ndarray, columns, tol: float = 1e-9) -> list[str]:
    """Columns left outside the numerical rank by a column-pivoted QR."""
    if X.shape[1] == 0:
        return []
    norms = np.sqrt((X**2).mean(axis=0))
    scaled = X / np.where(norms > 0, norms, 1.0)
    R, piv = linalg.qr(scaled, mode="r", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > tol * max(d[0], 1e-300))) if d.size else 0
    return [columns[k] for k in piv[rank:]]


# ── fit result ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class FitResult:
    spec: ModelSpec
    layout: ParameterLayout
    params: np.ndarray
    cov: np.ndarray
    loglik: float
    grad_norm: float
    iterations: int
    converged: bool
    per_person: np.ndarray
    person_ids: np.ndarray
    design_manifest: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def names(self) -> tuple[str, ...]:
        return self.layout.names

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    @property
    def sigma_eta(self) -> np.ndarray:
        return self.layout.covariance(self.params)

    def coefficients(self) -> pd.DataFrame:
        """B as a (column x non-base outcome) frame."""
        p = self.layout.unpack(self.params)
        return pd.DataFrame(p.B, index=list(self.layout.columns), columns=list(self.layout.non_base_labels))

    def table(self) -> pd.DataFrame:
        z = np.divide(self.params, self.se, out=np.full_like(self.params, np.nan), where=self.se > 0)
        return pd.DataFrame(
            {"coef": self.params, "se": self.se, "z": z, "p": 2 * stats.norm.sf(np.abs(z))},
            index=pd.Index(self.names, name="parameter"),
        )

    def to_json(self) -> str:
        payload = {
            "spec": self.spec.model_dump(mode="json"),
            "layout": self.layout.to_json(),
            "names": list(self.names),
            "params": self.params.tolist(),
            "se": self.se.tolist(),
            "cov": self.cov.ravel().tolist(),
            "loglik": self.loglik,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "per_person": self.per_person.tolist(),
            "person_ids": self.person_ids.tolist(),
            "design_manifest": self.design_manifest,
            "diagnostics": self.diagnostics,
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        payload = json.loads(text)
        layout_doc = payload["layout"]
        layout = ParameterLayout(
            columns=tuple(layout_doc["columns"]),
            outcomes=tuple(layout_doc["outcomes"]),
            base=int(layout_doc["base"]),
            heterogeneity=layout_doc["heterogeneity"],
            z_columns=tuple(layout_doc["z_columns"]),
        )
        k = layout.size
        return cls(
            spec=ModelSpec.model_validate(payload["spec"]),
            layout=layout,
            params=np.asarray(payload["params"], dtype=float),
            cov=np.asarray(payload["cov"], dtype=float).reshape(k, k),
            loglik=float(payload["loglik"]),
            grad_norm=float(payload["grad_norm"]),
            iterations=int(payload["iterations"]),
            converged=bool(payload["converged"]),
            per_person=np.asarray(payload["per_person"], dtype=float),
            person_ids=np.asarray(payload["person_ids"], dtype=np.int64),
            design_manifest=payload.get("design_manifest", {}),
            diagnostics=payload.get("diagnostics", {}),
        )


# ── optimization ────────────────────────────────────────────────────────────

class _Objective:
    """Negative log-likelihood with its gradient, caching the last evaluation."""

    def __init__(self, layout, design, rule, threads):
        self.layout, self.design, self.rule, self.threads = layout, design, rule, threads
        self._key = None
        self._value = None

    def loglik_and_scores(self, theta):
        key = np.asarray(theta, dtype=float).tobytes()
        if key != self._key:
            self._value = evaluate(self.layout, theta, self.design, self.rule, want_score=True, threads=self.threads)
            self._key = key
        return self._value

    def loglik_grad(self, theta):
        lli, scores = self.loglik_and_scores(theta)
        return float(np.sum(lli)), scores.sum(axis=0)

    def __call__(self, theta):
        try:
            ll, g = self.loglik_grad(theta)
        except NonFiniteLikelihood:
            return np.inf, np.zeros_like(np.asarray(theta, dtype=float))
        return -ll, -g

    def hessian(self, theta) -> np.ndarray:
        H = numeric_jacobian(lambda t: self.loglik_grad(t)[1], theta)
        return 0.5 * (H + H.T)


def _guard(layout: ParameterLayout, bound: float):
    watched = layout.coefficient_block()

    def check(theta):
        values = np.abs(np.asarray(theta)[watched])
        if values.size and values.max() > bound:
            k = watched[int(np.argmax(values))]
            raise SeparationDetected(layout.names[k], float(theta[k]))

    return check


def _optimize(objective: _Objective, start: np.ndarray, options: FitOptions, polish: bool):
    layout = objective.layout
    guard = _guard(layout, options.separation_bound)
    state = {"it": 0}

    def callback(xk):
        state["it"] += 1
        guard(xk)
        if state["it"] % 25 == 0:
            logger.debug("iteration %d: loglik %.6f", state["it"], objective.loglik_grad(xk)[0])

    res = optimize.minimize(
        objective,
        start,
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={"maxiter": options.max_iter, "gtol": options.tol, "ftol": 1e-15, "maxcor": 20, "maxls": 50},
    )
    theta = np.asarray(res.x, dtype=float)
    guard(theta)
    ll, g = objective.loglik_grad(theta)
    iterations = int(res.nit)
    stop = "gradient" if np.max(np.abs(g)) <= options.tol else str(res.message)
    H = None

    if polish:
        for _ in range(NEWTON_MAX_ITER):
            if np.max(np.abs(g)) <= options.tol:
                stop = "gradient"
                break
            H = objective.hessian(theta)
            try:
                step = linalg.solve(-H, g, assume_a="sym")
            except (linalg.LinAlgError, ValueError):
                step = np.linalg.lstsq(-H, g, rcond=None)[0]
            t = 1.0
            while t > 1e-10:
                candidate = theta + t * step
                try:
                    ll_new, g_new = objective.loglik_grad(candidate)
                except NonFiniteLikelihood:
                    ll_new = -np.inf
                if ll_new >= ll - 1e-10 * max(1.0, abs(ll)):
                    break
                t *= 0.5
            else:
                stop = "step size underflow"
                break
            theta, ll, g = candidate, ll_new, g_new
            guard(theta)
            iterations += 1
        else:
            stop = "newton iteration limit"
        if np.max(np.abs(g)) <= options.tol:
            stop = "gradient"
    if H is None:
        H = objective.hessian(theta)
    return theta, ll, g, iterations, stop, H


def _warm_start(spec: ModelSpec, design: DesignMatrix, layout: ParameterLayout, options: FitOptions) -> np.ndarray:
    """Pooled estimates for B (auxiliary columns at 0), Cholesky diagonal 0.5."""
    start = np.zeros(layout.size)
    if layout.dim == 0 and not layout.heckman:
        return start
    keep = np.array([not c.startswith(AUXILIARY_PREFIXES) for c in design.columns])
    pooled_design = replace(design, X=design.X[:, keep], columns=tuple(np.array(design.columns)[keep]))
    pooled_layout = ParameterLayout(pooled_design.columns, layout.outcomes, layout.base, "none")
    objective = _Objective(pooled_layout, pooled_design, gauss_hermite(1, 0), options.threads)
    theta, *_ = _optimize(objective, np.zeros(pooled_layout.size), options, polish=False)
    B = np.zeros((layout.P, layout.m))
    B[keep] = pooled_layout.unpack(theta).B
    start[layout.slices["B"]] = B.T.ravel()
    het = layout.slices["het"]
    if layout.heterogeneity == "shared":
        start[het] = 0.5
    elif layout.heterogeneity == "random_effects":
        diag = [k for k, E in enumerate(layout.basis) if np.trace(E) == 1.0]
        start[het.start + np.array(diag, dtype=int)] = 0.5
    return start


def _sign_normalize(layout: ParameterLayout, theta: np.ndarray) -> np.ndarray:
    """+1/-1 per parameter making the Cholesky diagonal (or sigma) non-negative."""
    flip = np.ones(layout.size)
    if layout.dim == 0:
        return flip
    het = layout.slices["het"]
    if layout.heterogeneity == "shared":
        if theta[het.start] < 0:
            flip[het.start] = -1.0
        return flip
    # u is symmetric, so negating column c of L leaves the eta distribution unchanged
    L = layout.cholesky(theta)
    for c in range(layout.m):
        if L[c, c] < 0:
            for k, E in enumerate(layout.basis):
                if E[:, c].any():
                    flip[het.start + k] = -1.0
    return flip


def sandwich(hessian: np.ndarray, scores: np.ndarray, cluster: np.ndarray, correction: bool = False):
    """Cluster-robust covariance A^-1 M A^-1 with A = -H; returns (cov, used_pinv)."""
    A = -hessian
    used_pinv = False
    try:
        bread = linalg.inv(A)
        if not np.all(np.isfinite(bread)) or np.linalg.cond(A) > 1e14:
            raise linalg.LinAlgError("ill-conditioned information matrix")
    except linalg.LinAlgError:
        warnings.warn("Information matrix is singular. Using pseudo-inverse for the covariance matrix.")
        bread = np.linalg.pinv(A)
        used_pinv = True
    G = int(cluster.max()) + 1
    summed = np.zeros((G, scores.shape[1]))
    np.add.at(summed, cluster, scores)
    meat = summed.T @ summed
    cov = bread @ meat @ bread
    if correction and G > 1:
        cov *= G / (G - 1)
    return 0.5 * (cov + cov.T), used_pinv


def fit(spec: ModelSpec, design: DesignMatrix, options: FitOptions = FitOptions()) -> FitResult:
    """Estimate the model by L-BFGS-B with analytic scores, then Newton polishing.

    Standard errors are clustered (persons, or households for loan designs).
    Raises NotConverged when ``options.strict`` and the gradient stays above tol.
    """
    layout = ParameterLayout.for_design(spec, design)
    bad = collinear_columns(design.X, design.columns)
    if bad:
        raise CollinearDesign(bad)
    if layout.heckman:
        bad = collinear_columns(design.Z, design.z_columns)
        if bad:
            raise CollinearDesign([f"init:{c}" for c in bad])

    rule = _rule_for(spec, layout)
    if options.start is not None:
        start = np.asarray(options.start, dtype=float)
        if start.shape != (layout.size,):
            raise DimensionMismatch(f"start has length {start.size}, model has {layout.size} parameters")
    else:
        start = _warm_start(spec, design, layout, options)

    logger.info(
        "Fitting %s: %d parameters, %d persons, %d records, %d quadrature points",
        spec.name, layout.size, design.n_persons, design.n_records, rule.size,
    )
    objective = _Objective(layout, design, rule, options.threads)
    theta, ll, g, iterations, stop, H = _optimize(objective, start, options, polish=options.newton_polish)
    grad_norm = float(np.max(np.abs(g))) if g.size else 0.0
    converged = grad_norm <= options.tol
    if not converged:
        if options.strict:
            raise NotConverged(iterations, grad_norm, stop)
        logger.warning("Fit %s did not converge: |grad|_inf = %.3e (%s)", spec.name, grad_norm, stop)

    lli, scores = objective.loglik_and_scores(theta)
    cov, used_pinv = sandwich(H, scores, design.cluster, options.cluster_correction)
    flip = _sign_normalize(layout, theta)
    theta = theta * flip
    cov = cov * np.outer(flip, flip)

    for arr in (theta, cov, lli):
        arr.setflags(write=False)
    result = FitResult(
        spec=spec,
        layout=layout,
        params=theta,
        cov=cov,
        loglik=float(np.sum(lli)),
        grad_norm=grad_norm,
        iterations=iterations,
        converged=converged,
        per_person=lli,
        person_ids=design.person_ids,
        design_manifest=design.manifest,
        diagnostics={
            "stop_reason": stop,
            "pseudo_inverse": used_pinv,
            "quadrature_nodes": spec.quadrature_nodes,
            "n_clusters": int(design.cluster.max()) + 1,
        },
    )
    logger.info("Fit %s: loglik %.6f after %d iterations (%s)", spec.name, result.loglik, iterations, stop)
    if options.check_quadrature and layout.dim > 0:
        result = quadrature_check(result, design, nodes=options.check_nodes, threads=options.threads)
    return result


def fit_loan_model(spec: ModelSpec, design: DesignMatrix, options: FitOptions = FitOptions()) -> FitResult:
    """Static random-effects logit (binary) or multinomial logit (loan type)."""
    if spec.model != "loan":
        raise ConfigInvalid(f"specification {spec.name!r} is not a loan model")
    if design.manifest.get("model") != "loan":
        raise DimensionMismatch("design was not built for a loan specification")
    return fit(spec, design, options)


def quadrature_check(fit_result: FitResult, design: DesignMatrix, nodes: int = 15, threads: int = 1) -> FitResult:
    """Re-evaluate the log-likelihood with a finer rule and flag a large change."""
    layout = fit_result.layout
    if layout.dim == 0:
        delta = 0.0
    else:
        lli, _ = evaluate(layout, fit_result.params, design, gauss_hermite(nodes, layout.dim), threads=threads)
        delta = float(np.sum(lli)) - fit_result.loglik
    stable = abs(delta) <= QUADRATURE_TOLERANCE
    if not stable:
        logger.warning("Quadrature check: log-likelihood moves by %.3e at %d nodes", delta, nodes)
    diagnostics = {**fit_result.diagnostics, "quadrature_check_nodes": nodes,
                   "quadrature_delta": delta, "quadrature_stable": stable}
    return replace(fit_result, diagnostics=diagnostics)


# ── reporting ───────────────────────────────────────────────────────────────

def relative_risk_ratios(fit_result: FitResult) -> pd.DataFrame:
    """exp(b) for every outcome-equation coefficient, SE by the delta method."""
    table = fit_result.table()
    k = fit_result.layout.slices["B"]
    out = table.iloc[k].copy()
    parts = out.index.str.split(":", n=1)
    out.insert(0, "outcome", [p[0] for p in parts])
    out.insert(1, "column", [p[1] for p in parts])
    out["rrr"] = np.exp(out["coef"])
    out["rrr_se"] = out["rrr"] * out["se"]
    z = stats.norm.ppf(0.975)
    out["ci_low"] = np.exp(out["coef"] - z * out["se"])
    out["ci_high"] = np.exp(out["coef"] + z * out["se"])
    return out.reset_index(drop=True)


def _stars(p: float) -> str:
    if not np.isfinite(p):
        return ""
    return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.1 else ""


def render_rrr_table(fit_result: FitResult, digits: int = 3) -> str:
    """Plain-text table: one row per column, RRR with stars over (SE)."""
    rrr = relative_risk_ratios(fit_result)
    outcomes = list(fit_result.layout.non_base_labels)
    width = max(12, digits + 10)
    label_w = max(len(c) for c in fit_result.layout.columns) + 2
    lines = [" " * label_w + "".join(f"{o:>{width}}" for o in outcomes)]
    for column in fit_result.layout.columns:
        rows = rrr.loc[rrr["column"] == column].set_index("outcome")
        top = "".join(f"{rows.at[o, 'rrr']:.{digits}f}{_stars(rows.at[o, 'p']):<3}".rjust(width) for o in outcomes)
        bottom = "".join(f"({rows.at[o, 'rrr_se']:.{digits}f})   ".rjust(width) for o in outcomes)
        lines.append(f"{column:<{label_w}}{top}")
        lines.append(" " * label_w + bottom)
    lines.append("")
    lines.append(f"Log-likelihood: {fit_result.loglik:.3f}")
    lines.append(f"Persons: {len(fit_result.person_ids):,}")
    lines.append("Robust standard errors in parentheses; *** p<0.01, ** p<0.05, * p<0.1")
    return "\n".join(lines)


def heterogeneity_moments(fit_result: FitResult) -> pd.DataFrame:
    """Variances and covariances of the random effects with delta-method SEs."""
    layout = fit_result.layout
    if layout.dim == 0:
        return pd.DataFrame(columns=["moment", "value", "se"])
    labels = layout.non_base_labels
    pairs = [(i, j) for i in range(layout.m) for j in range(i + 1)]

    def moments(theta):
        S = layout.covariance(theta)
        return np.array([S[i, j] for i, j in pairs])

    J = numeric_jacobian(moments, fit_result.params)
    cov = J @ fit_result.cov @ J.T
    names = [f"Var(eta_{labels[i]})" if i == j else f"Cov(eta_{labels[j]},eta_{labels[i]})" for i, j in pairs]
    return pd.DataFrame({
        "moment": names,
        "value": moments(fit_result.params),
        "se": np.sqrt(np.clip(np.diag(cov), 0.0, None)),
    })
