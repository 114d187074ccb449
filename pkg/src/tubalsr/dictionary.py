"""Dictionary learning for the t-product sparse model.

Training alternates two steps: ISTA-T for the codes with the dictionary
fixed, then an exact dictionary update with the codes fixed. The update runs
in the DFT domain. There it splits into per-frequency least-squares problems
coupled only through the per-atom norm constraints, and it is solved through
the Lagrange dual by projected Newton.

A spatial constraint ``||D(:, j, :)||_F^2 <= 1`` becomes
``sum_k ||D_hat_k(:, j)||^2 <= n3`` in the frequency domain (Parseval).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io import read_json, read_tns3, write_json, write_tns3
from .sparse import IstaConfig, ista_t, objective
from .tensor import as_tensor3

log = logging.getLogger(__name__)

__all__ = [
    "Dictionary",
    "DictionaryPair",
    "DualVariables",
    "DualResult",
    "SingularSystemError",
    "atom_norms",
    "dict_from_dual",
    "dual_objective",
    "newton_solve_dual",
    "update_dictionary",
    "gaussian_dictionary",
    "train_dictionary",
    "train_joint",
    "save_dictionary",
    "load_dictionary",
    "save_pair",
    "load_pair",
]

# Newton safeguards
HESS_RIDGE = 1e-10
MAX_NEWTON = 50
# M_k counts as singular when its smallest eigenvalue is below this fraction of the largest
SINGULAR_RTOL = 1e-13


class SingularSystemError(np.linalg.LinAlgError):
    """``A_k A_k^H + Lambda`` is singular for some frequency slice."""


@dataclass
class Dictionary:
    """Atoms ``D(:, j, :)`` of an ``n1 x r x n3`` dictionary.

    ``trace`` and ``codes`` are filled in by training; ``meta`` ends up in
    the JSON sidecar when saved.
    """

    atoms: np.ndarray
    trace: list = field(default_factory=list)
    codes: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def r(self):
        return self.atoms.shape[1]

    def satisfies_constraint(self, bound=1.0, slack=1e-9):
        return bool(np.all(atom_norms(self.atoms) ** 2 <= bound + slack))


@dataclass
class DictionaryPair:
    """Coupled fine/coarse dictionaries sharing one sparse code.

    ``coarse_patch`` is the spatial patch shape on the coarse map, ``scale``
    the up-sampling factor, ``value_range`` the dBm range mapped to [0, 1]
    before coding (``None`` leaves values untouched). With ``center`` the
    per-AP mean of each coarse patch is removed before coding and added back
    to the fine patch.
    """

    fine: Dictionary
    coarse: Dictionary
    coarse_patch: tuple = (4, 4)
    scale: int = 2
    stride: int = 2
    value_range: tuple | None = None
    center: bool = False

    def __post_init__(self):
        if self.fine.r != self.coarse.r:
            raise ValueError("fine and coarse dictionaries must have the same atom count")

    @property
    def fine_patch(self):
        return (self.coarse_patch[0] * self.scale, self.coarse_patch[1] * self.scale)


@dataclass
class DualVariables:
    lambdas: np.ndarray

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        if np.any(self.lambdas < 0):
            raise ValueError("dual variables must be non-negative")


@dataclass
class DualResult:
    dual: DualVariables
    kkt_residual: float
    n_iter: int
    converged: bool
    method: str = "newton"


def atom_norms(atoms):
    """Spatial Frobenius norm of every lateral slice ``D(:, j, :)``."""
    return np.sqrt(np.sum(np.asarray(atoms) ** 2, axis=(0, 2)))


class _DualProblem:
    """Dual of the constrained frequency-domain dictionary problem.

    Holds one representative per conjugate pair of frequency slices, with
    ``weights`` counting how many full-spectrum slices each stands for.
    """

    def __init__(self, t_hat, a_hat, weights, bound):
        self.t_hat = t_hat
        self.a_hat = a_hat
        self.w = np.asarray(weights, dtype=float)
        self.bound = float(bound)
        tk = np.moveaxis(t_hat, 2, 0)
        ak = np.moveaxis(a_hat, 2, 0)
        akh = np.conj(np.swapaxes(ak, 1, 2))
        self.B = tk @ akh  # T_k A_k^H, (n3, n1, r)
        self.G = ak @ akh  # A_k A_k^H, (n3, r, r)
        self.t_energy = float(np.sum(self.w * np.sum(np.abs(tk) ** 2, axis=(1, 2))))

    def _inverse(self, lam):
        M = self.G + np.diag(lam)[None, :, :]
        ev = np.linalg.eigvalsh(M)
        bad = ev[:, 0] <= SINGULAR_RTOL * np.maximum(ev[:, -1], np.finfo(float).tiny)
        if np.any(bad):
            raise SingularSystemError(
                f"A A^H + Lambda is singular at frequency slice {int(np.argmax(bad))}; add a ridge"
            )
        return np.linalg.inv(M)

    def dictionary(self, lam):
        P = self._inverse(lam)
        return self.B @ P  # (n3, n1, r)

    def evaluate(self, lam, need_hessian=True):
        P = self._inverse(lam)
        D = self.B @ P
        w = self.w[:, None, None]
        # Tr(B P B^H) = Re sum(D * conj(B))
        fit = float(np.sum(w * (D * self.B.conj()).real))
        value = self.t_energy - fit - self.bound * float(np.sum(lam))
        grad = np.sum(w * (D.real**2 + D.imag**2), axis=(0, 1)) - self.bound
        hess = None
        if need_hessian:
            Q = np.conj(np.swapaxes(D, 1, 2)) @ D  # D^H D
            hess = -2.0 * np.sum(w * (np.swapaxes(P, 1, 2) * Q).real, axis=0)
        return float(value), grad, hess, D


def _as_lambdas(dual):
    return dual.lambdas if isinstance(dual, DualVariables) else np.asarray(dual, dtype=float)


def _full_problem(t_hat, a_hat, bound):
    t_hat = np.asarray(t_hat, dtype=complex)
    a_hat = np.asarray(a_hat, dtype=complex)
    if t_hat.ndim != 3 or a_hat.ndim != 3:
        raise ValueError("frequency tensors must be 3-dimensional")
    if t_hat.shape[1] != a_hat.shape[1] or t_hat.shape[2] != a_hat.shape[2]:
        raise ValueError(f"shape mismatch: T_hat {t_hat.shape}, A_hat {a_hat.shape}")
    n3 = t_hat.shape[2]
    bound = n3 if bound is None else bound
    return _DualProblem(t_hat, a_hat, np.ones(n3), bound)


def dict_from_dual(t_hat, a_hat, dual):
    """Per-slice minimizer ``D_k = (T_k A_k^H)(A_k A_k^H + Lambda)^{-1}``.

    Inputs and output are full-spectrum frequency tensors; the result has
    shape ``n1 x r x n3``. Raises :class:`SingularSystemError` when a slice
    system is singular.
    """
    prob = _full_problem(t_hat, a_hat, None)
    return prob.dictionary(_as_lambdas(dual)).transpose(1, 2, 0)


def dual_objective(dual, t_hat, a_hat, bound=None):
    """Lagrange dual value, gradient and Hessian at ``dual``.

    ``value = sum_k (||T_k||^2 - Tr(T_k A_k^H (A_k A_k^H + Lambda)^{-1} A_k T_k^H))
    - bound * sum_j lambda_j``, where ``bound`` is the frequency-domain norm
    bound (``n3`` by default). The gradient entry ``j`` is
    ``sum_k ||D_k(:, j)||^2 - bound``.
    """
    prob = _full_problem(t_hat, a_hat, bound)
    value, grad, hess, _ = prob.evaluate(_as_lambdas(dual))
    return value, grad, hess


def _kkt_residual(lam, grad, bound):
    # zero iff lam >= 0, grad <= 0 and lam * grad = 0 (grad scaled to spatial norm units)
    return float(np.max(np.abs(np.minimum(lam, -grad / bound)), initial=0.0))


def _newton(prob, lam, iters, tol):
    n = lam.size
    method = "newton"
    try:
        value, grad, hess, _ = prob.evaluate(lam)
    except SingularSystemError:
        # push the start into the interior where the system is solvable
        lam = lam + 1e-8 * max(1.0, float(np.mean(np.abs(np.diagonal(prob.G, axis1=1, axis2=2)))))
        value, grad, hess, _ = prob.evaluate(lam)
    res = _kkt_residual(lam, grad, prob.bound)
    done = 0
    for it in range(1, iters + 1):
        if res < tol:
            break
        fixed = (lam <= 0.0) & (grad < 0.0)
        free = ~fixed
        direction = np.zeros(n)
        if method == "newton":
            try:
                h = -hess[np.ix_(free, free)] + HESS_RIDGE * np.eye(int(free.sum()))
                direction[free] = np.linalg.solve(h, grad[free])
                if not np.all(np.isfinite(direction)):
                    raise np.linalg.LinAlgError("non-finite Newton direction")
            except np.linalg.LinAlgError:
                log.warning("Hessian solve failed; falling back to gradient ascent")
                method = "gradient"
        if method == "gradient":
            direction = np.where(free, grad, 0.0) / it
        step = 1.0
        accepted = False
        for _ in range(60):
            cand = np.maximum(lam + step * direction, 0.0)
            try:
                c_val, c_grad, c_hess, _ = prob.evaluate(cand, need_hessian=method == "newton")
            except SingularSystemError:
                step *= 0.5
                continue
            # near the optimum the dual value is dominated by cancellation noise,
            # so a full step that shrinks the KKT residual is taken as is
            if step == 1.0 and _kkt_residual(cand, c_grad, prob.bound) < 0.5 * res:
                accepted = True
                break
            if c_val >= value + 1e-4 * float(grad @ (cand - lam)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        lam, value, grad, hess = cand, c_val, c_grad, c_hess
        res = _kkt_residual(lam, grad, prob.bound)
        done = it
    return DualResult(DualVariables(lam), res, done, res < tol, method)


def newton_solve_dual(t_hat, a_hat, init=None, iters=MAX_NEWTON, bound=None, tol=1e-10):
    """Maximize the dual over ``lambda >= 0`` by projected Newton.

    Variables sitting at zero with a negative gradient are held fixed; the
    Newton step on the rest is followed by projection onto ``lambda >= 0``
    and an Armijo backtracking search. If the Hessian system cannot be
    solved the method switches to gradient ascent with a diminishing step,
    reported as ``method == "gradient"``.
    """
    prob = _full_problem(t_hat, a_hat, bound)
    r = prob.G.shape[1]
    lam = np.zeros(r) if init is None else _as_lambdas(init).copy()
    if np.any(lam < 0):
        raise ValueError("initial dual variables must be non-negative")
    return _newton(prob, lam, iters, tol)


def _half_weights(n3):
    w = np.full(n3 // 2 + 1, 2.0)
    w[0] = 1.0
    if n3 % 2 == 0:
        w[-1] = 1.0
    return w


def update_dictionary(samples, codes, previous, bound=1.0, init=None):
    """Exact constrained dictionary update for fixed codes.

    Atoms whose code rows are all zero do not affect the fit and keep their
    previous values. Returns ``(atoms, DualResult)``.
    """
    x = as_tensor3(samples, "samples")
    a = as_tensor3(codes, "codes")
    prev = as_tensor3(previous, "previous")
    n3 = x.shape[2]
    used = np.sum(a**2, axis=(1, 2)) > 0
    atoms = prev.copy()
    if not np.any(used):
        return atoms, None
    prob = _DualProblem(np.fft.rfft(x, axis=2), np.fft.rfft(a[used], axis=2), _half_weights(n3), bound * n3)
    lam0 = np.zeros(int(used.sum())) if init is None else np.asarray(init, dtype=float)[used]
    try:
        result = _newton(prob, lam0, MAX_NEWTON, 1e-10)
        d_half = prob.dictionary(result.dual.lambdas)
    except SingularSystemError:
        log.warning("dictionary update skipped: singular code Gram matrix")
        return atoms, None
    atoms[:, used, :] = np.fft.irfft(d_half.transpose(1, 2, 0), n=n3, axis=2)
    # remove round-off violations of the norm bound
    norms = atom_norms(atoms)
    over = norms**2 > bound
    atoms[:, over, :] *= (np.sqrt(bound) / norms[over])[None, :, None]
    lambdas = np.zeros(prev.shape[1])
    lambdas[used] = result.dual.lambdas
    result.dual = DualVariables(lambdas)
    return atoms, result


def gaussian_dictionary(n1, r, n3, seed):
    """i.i.d. N(0, 1) entries, then each atom scaled to unit norm."""
    rng = np.random.default_rng(seed)
    atoms = rng.standard_normal((n1, r, n3))
    return atoms / atom_norms(atoms)[None, :, None]


def train_dictionary(samples, r, lam, num_iters, seed=0, ista=None, bound=1.0, callback=None):
    """Alternate ISTA-T coding and the frequency-domain dictionary update.

    ``samples`` is ``n1 x N x n3`` with one training patch per lateral
    slice. The ISTA-T stage warm-starts from the previous codes, and a
    dictionary update that would raise the objective is rejected, so
    ``trace`` (initial objective followed by one value per outer iteration)
    never increases. ``callback(iteration, atoms)`` runs after every outer
    iteration.
    """
    x = as_tensor3(samples, "samples")
    if num_iters < 1 or r < 1 or x.shape[1] == 0:
        raise ValueError("need num_iters >= 1, r >= 1 and at least one sample")
    ista = ista or IstaConfig(lam=lam, max_iters=200, rel_tol=1e-10)
    if ista.lam != lam:
        ista = IstaConfig(lam=lam, max_iters=ista.max_iters, rel_tol=ista.rel_tol)
    n1, _, n3 = x.shape
    atoms = gaussian_dictionary(n1, r, n3, seed)
    codes = np.zeros((r, x.shape[1], n3))
    trace = [objective(atoms, codes, x, lam)]
    lambdas = None
    for it in range(num_iters):
        code, _ = ista_t(atoms, x, ista, a0=codes)
        codes = code.code
        coded = objective(atoms, codes, x, lam)
        new_atoms, dual = update_dictionary(x, codes, atoms, bound=bound, init=lambdas)
        updated = objective(new_atoms, codes, x, lam)
        if updated <= coded:
            atoms = new_atoms
            if dual is not None:
                lambdas = dual.dual.lambdas
        else:
            updated = coded
        trace.append(updated)
        if callback is not None:
            callback(it + 1, atoms)
        log.debug("outer iteration %d: objective %.6g", it + 1, updated)
    meta = {"r": r, "lambda": lam, "iters": num_iters, "seed": seed, "bound": bound}
    return Dictionary(atoms=atoms, trace=trace, codes=codes, meta=meta)


def _split_pair(atoms, nf, nc):
    d_fine = atoms[:nf] * np.sqrt(nf)
    d_coarse = atoms[nf:] * np.sqrt(nc)
    scale = np.maximum(atom_norms(d_fine), atom_norms(d_coarse))
    scale[scale == 0] = 1.0
    return d_fine / scale[None, :, None], d_coarse / scale[None, :, None]


def train_joint(fine_patches, coarse_patches, r, lam, num_iters, seed=0, ista=None, callback=None, **pair_kw):
    """Train a coupled pair on fine patches stacked over coarse patches.

    Each block is scaled by ``1/sqrt(block rows)`` before stacking so neither
    resolution dominates. After the split the scaling is undone and every
    atom pair is divided by the larger of its two norms. Both dictionaries
    then meet the norm bound, and a code for one stays valid for the other.
    ``callback(iteration, pair)`` sees the split pair after every outer
    iteration.
    """
    fine = as_tensor3(fine_patches, "fine_patches")
    coarse = as_tensor3(coarse_patches, "coarse_patches")
    if fine.shape[1] != coarse.shape[1]:
        raise ValueError(f"patch counts differ: {fine.shape[1]} fine vs {coarse.shape[1]} coarse")
    if fine.shape[2] != coarse.shape[2]:
        raise ValueError("fine and coarse patches must share the tube dimension")
    nf, nc = fine.shape[0], coarse.shape[0]
    stacked = np.concatenate([fine / np.sqrt(nf), coarse / np.sqrt(nc)], axis=0)
    hook = None
    if callback is not None:
        def hook(it, atoms):
            f, c = _split_pair(atoms, nf, nc)
            callback(it, DictionaryPair(fine=Dictionary(f), coarse=Dictionary(c), **pair_kw))
    joint = train_dictionary(stacked, r, lam, num_iters, seed=seed, ista=ista, callback=hook)
    d_fine, d_coarse = _split_pair(joint.atoms, nf, nc)
    meta = dict(joint.meta, joint=True)
    return DictionaryPair(
        fine=Dictionary(d_fine, trace=joint.trace, meta=meta),
        coarse=Dictionary(d_coarse, trace=joint.trace, meta=meta),
        **pair_kw,
    )


def save_dictionary(stem, dic, **extra):
    write_tns3(f"{stem}.tns3", dic.atoms)
    meta = {"r": dic.r, **dic.meta, **extra}
    write_json(f"{stem}.json", meta)


def load_dictionary(stem):
    return Dictionary(atoms=read_tns3(f"{stem}.tns3"), meta=read_json(f"{stem}.json"))


def save_pair(directory, pair):
    """``fine``/``coarse`` dictionaries plus ``pair.json`` with the patch geometry."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_dictionary(directory / "fine", pair.fine)
    save_dictionary(directory / "coarse", pair.coarse)
    vr = None if pair.value_range is None else [float(v) for v in pair.value_range]
    write_json(directory / "pair.json", {
        "coarse_patch": list(pair.coarse_patch), "scale": pair.scale, "stride": pair.stride, "value_range": vr,
        "center": pair.center,
    })


def load_pair(directory):
    directory = Path(directory)
    geo = read_json(directory / "pair.json")
    vr = geo["value_range"]
    return DictionaryPair(
        fine=load_dictionary(directory / "fine"),
        coarse=load_dictionary(directory / "coarse"),
        coarse_patch=tuple(geo["coarse_patch"]),
        scale=geo["scale"],
        stride=geo["stride"],
        value_range=None if vr is None else tuple(vr),
        center=bool(geo.get("center", False)),
    )
