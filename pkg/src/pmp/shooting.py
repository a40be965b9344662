from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from src.domain.errors import SingularJacobianError
from src.domain.interfaces import ControlRule
from src.domain.models import Scenario
from src.pmp.extremal import Extremal, integrate_extremal, rk4_batch
from src.pmp.hamiltonian import BilinearFlow
from src.pmp.rules import BangRule, rule_for_scenario

FD_STEP = 1e-7
COND_MAX = 1e12
MAX_HALVINGS = 20
DEFAULT_STARTS = 64
FAMILY_TOL = 1e-6

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max-iter"
STATUS_SINGULAR = "singular-jacobian"
STATUS_STALLED = "stalled"
STATUS_ANTIPODE = "antipode"


def _realify(v: np.ndarray) -> np.ndarray:
    return np.concatenate([v.real, v.imag], axis=-1) if np.iscomplexobj(v) else np.asarray(v, dtype=float)


def _tangent_basis(q: np.ndarray, complex_: bool) -> np.ndarray:
    """Real-orthonormal basis of covectors orthogonal to q (the sphere's tangent space)."""
    n = q.size
    _, _, vh = np.linalg.svd(_realify(q)[None], full_matrices=True)
    rest = vh[1:]
    return rest[:, :n] + 1j * rest[:, n:] if complex_ else rest


def _ambient_basis(n: int, complex_: bool) -> np.ndarray:
    eye = np.eye(n)
    return np.vstack([eye, 1j * eye]) if complex_ else eye


def _complement_basis(f: np.ndarray) -> np.ndarray:
    """Complex-orthonormal basis of the complement of span_C(f)."""
    _, _, vh = np.linalg.svd(np.asarray(f, dtype=complex)[None], full_matrices=True)
    return vh[1:]


class ShootingProblem:
    """Terminal defect of the PMP boundary value problem as a function of (p_in, T).

    Unknowns are coordinates of p_in in a real-orthonormal covector basis (the tangent
    space at q_in on spheres, the ambient space otherwise) plus T when time is free.
    """

    def __init__(
        self,
        scenario: Scenario,
        rule: ControlRule | None = None,
        n_steps: int | None = None,
        horizon: float | None = None,
        tol: float | None = None,
    ):
        if scenario.is_lindblad:
            raise ValueError("shooting runs on bilinear scenarios only")
        self.scenario = scenario
        self.rule = rule or rule_for_scenario(scenario)
        self.flow = BilinearFlow(scenario.bilinear)
        self.q_in = np.asarray(scenario.initial_state.entries)
        self.n_steps = n_steps or scenario.time.steps
        self.horizon = horizon or scenario.time.horizon
        self.time_free = scenario.time.free
        self.tol = tol or scenario.tolerances.shooting
        self.complex = scenario.representation.is_complex

        n = self.flow.n
        target = scenario.target
        on_sphere = scenario.bilinear.on_sphere
        if target.kind == "free" or not on_sphere:
            self.basis = _ambient_basis(n, self.complex)
        else:
            self.basis = _tangent_basis(self.q_in, self.complex)
        self.target_state = np.asarray(target.state, dtype=scenario.representation.dtype)

        if target.kind == "free":
            n_target = 2 * n if self.complex else n
        elif not on_sphere:
            n_target = n
        elif target.kind == "orbit" and self.complex:
            self.complement = _complement_basis(self.target_state)
            n_target = 2 * (n - 1) + 1
        else:
            self.target_tangent = _tangent_basis(self.target_state, self.complex)
            n_target = len(self.target_tangent)
        self.n_covector = len(self.basis)
        self.n_unknowns = self.n_covector + int(self.time_free)
        self.n_equations = n_target + int(self.time_free)
        if self.n_unknowns != self.n_equations:
            raise ValueError(
                f"shooting system is not square: {self.n_unknowns} unknowns, {self.n_equations} equations"
            )

    def covector(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return x[:, : self.n_covector] @ self.basis

    def coordinates(self, p_in: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p_in)
        return np.einsum("ka,ba->bk", self.basis.conj(), p).real

    def pack(self, p_in: np.ndarray, T: float | None = None) -> np.ndarray:
        x = self.coordinates(p_in)[0]
        if self.time_free:
            x = np.append(x, self.horizon if T is None else T)
        return x

    def durations(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.time_free:
            return X[:, -1].copy()
        return np.full(len(X), float(self.horizon))

    def endpoints(self, P: np.ndarray, T: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        q0 = np.broadcast_to(self.q_in, P.shape).astype(P.dtype)
        if isinstance(self.rule, BangRule):
            qT = np.empty_like(P)
            pT = np.empty_like(P)
            for b in range(len(P)):
                ext = integrate_extremal(self.scenario, P[b], T[b], self.rule, self.n_steps)
                qT[b] = ext.trajectory.final
                pT[b] = ext.costate.entries[-1]
            return qT, pT
        return rk4_batch(self.flow, self.rule, q0, P, T, self.n_steps)

    def target_equations(self, qT: np.ndarray, pT: np.ndarray) -> np.ndarray:
        kind = self.scenario.target.kind
        if kind == "free":
            kappa = -2.0 * self.rule.p0
            overlap = qT @ self.target_state.conj()
            return _realify(pT - kappa * overlap[:, None] * self.target_state[None])
        if not self.scenario.bilinear.on_sphere:
            return _realify(qT - self.target_state[None])
        if kind == "orbit" and self.complex:
            coeff = qT @ self.complement.conj().T
            transversal = np.einsum("ba,ba->b", pT.conj(), 1j * qT).real
            return np.column_stack([coeff.real, coeff.imag, transversal])
        return np.einsum("ia,ba->bi", self.target_tangent.conj(), qT).real

    def residual_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        P = self.covector(X)
        T = self.durations(X)
        bad = ~(np.isfinite(T) & (T > 0)) | ~np.all(np.isfinite(X), axis=1)
        T_safe = np.where(bad, self.horizon, T)
        P_safe = np.where(bad[:, None], self.basis[0][None], P)
        with np.errstate(over="ignore", invalid="ignore"):
            qT, pT = self.endpoints(P_safe, T_safe)
            res = self.target_equations(qT, pT)
            if self.time_free:
                q0 = np.broadcast_to(self.q_in, P_safe.shape).astype(P_safe.dtype)
                ham = self.rule.maximized_hamiltonian(self.flow, q0, P_safe)
                res = np.column_stack([res, ham])
        res[bad] = np.inf
        return res

    def reached_antipode(self, q_final: np.ndarray) -> bool:
        if self.scenario.target.kind != "point" or not self.scenario.bilinear.on_sphere:
            return False
        return bool(np.real(np.vdot(self.target_state, q_final)) < 0)

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.residual_batch(np.asarray(x)[None])[0]

    def extremal(self, x: np.ndarray) -> Extremal:
        x = np.asarray(x, dtype=float)
        return integrate_extremal(
            self.scenario, self.covector(x)[0], float(self.durations(x)[0]), self.rule, self.n_steps
        )


@dataclass
class ShootingResult:
    start: int
    x: np.ndarray
    p_in: np.ndarray
    T: float
    residual: float
    iterations: int
    status: str
    extremal: Extremal | None = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == STATUS_CONVERGED

    @property
    def cost(self) -> float | None:
        return None if self.extremal is None else self.extremal.cost


def _inf_norm(F: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        out = np.max(np.abs(F), axis=1) if F.shape[1] else np.zeros(len(F))
    return np.where(np.isfinite(out), out, np.inf)


def newton_batch(
    fun,
    X0: np.ndarray,
    tol: float,
    max_iter: int = 50,
    damping: float = 1.0,
    fd_step: float = FD_STEP,
):
    """Damped Newton on a batch of independent square systems.

    fun maps B x k to B x k. The Jacobian is a forward difference with relative step
    fd_step; steps are halved until the 2-norm of the residual strictly decreases.
    """
    X = np.array(X0, dtype=float)
    B, k = X.shape
    F = fun(X)
    norms = _inf_norm(F)
    status = np.full(B, "", dtype=object)
    iterations = np.zeros(B, dtype=int)
    eye = np.eye(k)

    for it in range(max_iter):
        status[(status == "") & (norms < tol)] = STATUS_CONVERGED
        active = np.flatnonzero(status == "")
        if active.size == 0:
            break
        Xa, Fa = X[active], F[active]
        H = fd_step * np.maximum(1.0, np.abs(Xa))
        pert = Xa[:, None, :] + eye[None] * H[:, None, :]
        Fp = fun(pert.reshape(-1, k)).reshape(active.size, k, -1)
        J = np.transpose((Fp - Fa[:, None, :]) / H[:, :, None], (0, 2, 1))

        steps = np.zeros_like(Xa)
        solvable = np.ones(active.size, dtype=bool)
        for i, b in enumerate(active):
            if not np.all(np.isfinite(J[i])):
                status[b] = STATUS_STALLED
                solvable[i] = False
                continue
            cond = np.linalg.cond(J[i])
            if not cond <= COND_MAX:
                logger.debug(f"newton start {b}: Jacobian condition {cond:.3e}, aborting")
                status[b] = STATUS_SINGULAR
                solvable[i] = False
                continue
            steps[i] = np.linalg.solve(J[i], -Fa[i])
        iterations[active] += 1

        pending = active[solvable]
        step = steps[solvable]
        base = np.linalg.norm(F[pending], axis=1)
        lam = np.full(pending.size, damping)
        for _ in range(MAX_HALVINGS):
            if pending.size == 0:
                break
            trial = X[pending] + lam[:, None] * step
            Ft = fun(trial)
            with np.errstate(invalid="ignore"):
                tn = np.linalg.norm(Ft, axis=1)
            ok = np.isfinite(tn) & (tn < base)
            X[pending[ok]] = trial[ok]
            F[pending[ok]] = Ft[ok]
            norms[pending[ok]] = _inf_norm(Ft[ok])
            keep = ~ok
            pending, step, base, lam = pending[keep], step[keep], base[keep], 0.5 * lam[keep]
        status[pending] = STATUS_STALLED
        logger.debug(f"newton iteration {it}: {int(np.sum(status == ''))} starts active")

    status[(status == "") & (norms < tol)] = STATUS_CONVERGED
    status[status == ""] = STATUS_MAX_ITER
    return X, F, norms, status, iterations


def _result(problem: ShootingProblem, start: int, x, norm, status, iterations, with_extremal=True):
    p_in = problem.covector(x)[0]
    T = float(problem.durations(x)[0])
    ext = None
    if with_extremal and status == STATUS_CONVERGED:
        ext = problem.extremal(x)
        if problem.reached_antipode(ext.trajectory.final):
            # the tangent equations vanish at -q_fi as well
            status = STATUS_ANTIPODE
    return ShootingResult(start, np.array(x), p_in, T, float(norm), int(iterations), str(status), ext)


def shoot(problem: ShootingProblem, guess, max_iter: int = 50, damping: float = 1.0) -> ShootingResult:
    """Damped Newton from one guess: a covector p_in, or (p_in, T) when time is free."""
    if isinstance(guess, tuple):
        p_in, T = guess
    else:
        p_in, T = guess, None
    p_in = np.asarray(p_in, dtype=problem.scenario.representation.dtype)
    x0 = problem.pack(p_in, T)
    if np.linalg.norm(x0[: problem.n_covector]) <= 1e-12:
        raise ValueError("the zero covector is excluded by nontriviality; pass a nonzero guess")
    X, _, norms, status, iterations = newton_batch(
        problem.residual_batch, x0[None], problem.tol, max_iter, damping
    )
    if status[0] == STATUS_SINGULAR:
        J = _jacobian(problem, X[0])
        raise SingularJacobianError(float(np.linalg.cond(J)))
    result = _result(problem, 0, X[0], norms[0], status[0], iterations[0])
    if not result.converged:
        logger.warning(f"shooting did not converge ({result.status}), residual {result.residual:.3e}")
    return result


def _jacobian(problem: ShootingProblem, x: np.ndarray) -> np.ndarray:
    h = FD_STEP * np.maximum(1.0, np.abs(x))
    pert = x[None] + np.eye(x.size) * h[:, None]
    F0 = problem.residual(x)
    Fp = problem.residual_batch(pert)
    return ((Fp - F0[None]) / h[:, None]).T


def sample_starts(problem: ShootingProblem, n_starts: int, seed: int, t_range=None) -> np.ndarray:
    """Seeded unit covectors on the normalization sphere, plus T0 when time is free."""
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((n_starts, problem.n_covector))
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    X = c
    if problem.time_free:
        P = c @ problem.basis
        q0 = np.broadcast_to(problem.q_in, P.shape).astype(P.dtype)
        X = problem.coordinates(problem.rule.normalize(problem.flow, q0, P))
        lo, hi = t_range or (0.5 * problem.horizon, 1.5 * problem.horizon)
        X = np.column_stack([X, rng.uniform(lo, hi, n_starts)])
    return X


def multi_start(
    problem: ShootingProblem,
    n_starts: int = DEFAULT_STARTS,
    seed: int = 0,
    t_range: tuple[float, float] | None = None,
    workers: int = 1,
    max_iter: int = 50,
    damping: float = 1.0,
) -> list[ShootingResult]:
    """Seeded multi-start shooting; results sorted by (residual, start index)."""
    X0 = sample_starts(problem, n_starts, seed, t_range)
    chunks = [c for c in np.array_split(np.arange(n_starts), max(1, workers)) if c.size]

    def run_chunk(idx: np.ndarray):
        return idx, newton_batch(problem.residual_batch, X0[idx], problem.tol, max_iter, damping)

    if len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            outputs = list(pool.map(run_chunk, chunks))
    else:
        outputs = [run_chunk(chunks[0])]

    results = []
    for idx, (X, _, norms, status, iterations) in outputs:
        for j, start in enumerate(idx):
            results.append(_result(problem, int(start), X[j], norms[j], status[j], iterations[j]))
    results.sort(key=lambda r: (r.residual, r.start))
    n_conv = sum(r.converged for r in results)
    logger.info(f"multi-start shooting: {n_conv}/{n_starts} starts converged")
    if n_conv < n_starts:
        logger.warning(f"{n_starts - n_conv} starts did not converge")
    return results


@dataclass
class ShootingFamily:
    T: float
    cost: float
    members: list[ShootingResult]

    @property
    def representative(self) -> ShootingResult:
        return self.members[0]


def group_families(results: list[ShootingResult], tol: float = FAMILY_TOL) -> list[ShootingFamily]:
    """Group converged extremals by (T, cost) within tol; cheapest family first."""
    families: list[ShootingFamily] = []
    for r in results:
        if not r.converged or r.cost is None:
            continue
        for fam in families:
            if abs(fam.T - r.T) <= tol and abs(fam.cost - r.cost) <= tol:
                fam.members.append(r)
                break
        else:
            families.append(ShootingFamily(r.T, r.cost, [r]))
    families.sort(key=lambda f: (f.cost, f.T))
    return families
