"""
Multilinear Gaussian expressions and their large deviation behaviour.

F = sum a_{k_1..k_n} prod g_{k_j}^{iota_j} over a finite support E. This
module enumerates pairing structures, evaluates F and the deviation
functional M, computes exact Gaussian moments (E[g^b conj(g)^c] = 1_{b=c} b!
per mode) and checks the stretched-exponential tail of |F| / M^{1/2} by
Monte Carlo.
"""

import itertools
import json
import logging
import math
import string
from collections import defaultdict
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import comb, factorial
from scipy.stats import linregress

from src.config import settings
from src.models.deviation_models import DeviationRow, MultilinearExpression, PairingStructure, TailReport
from src.models.operator_models import KernelMatrix
from src.models.spectral_models import SpectralField, half_width, shell_mask
from src.services.averaging_operators import twisted_transform, yb_norm
from src.services.gibbs_measures import gff_coefficients
from src.utils.exceptions import BudgetExceededException
from src.utils.parallel import chunked, parallel_map

logger = logging.getLogger(__name__)

Exponents = Tuple[int, ...]
WITNESS_STREAM = 7


def _signs_of(expr: Union[MultilinearExpression, Sequence[int]]) -> List[int]:
    return list(expr.signs) if isinstance(expr, MultilinearExpression) else list(expr)


def enumerate_pairings(expr: Union[MultilinearExpression, Sequence[int]]) -> List[PairingStructure]:
    """
    Every set of disjoint pairs (i, j), i < j, with iota_i = -iota_j.

    The empty pairing comes first. Raises BudgetExceededException above
    settings.max_pairing_arity indices.
    """
    signs = _signs_of(expr)
    n = len(signs)
    if n > settings.max_pairing_arity:
        raise BudgetExceededException(f"arity {n} exceeds the pairing budget {settings.max_pairing_arity}")
    found: List[List[Tuple[int, int]]] = []

    def extend(start: int, used: frozenset, pairs: List[Tuple[int, int]]) -> None:
        found.append(list(pairs))
        for i in range(start, n + 1):
            if i in used:
                continue
            for j in range(i + 1, n + 1):
                if j not in used and signs[i - 1] == -signs[j - 1]:
                    extend(i + 1, used | {i, j}, pairs + [(i, j)])

    extend(1, frozenset(), [])
    return [PairingStructure(n=n, signs=signs, pairs=pairs) for pairs in found]


def pairing_count(signs: Sequence[int]) -> int:
    """Closed form sum_k C(p, k) C(q, k) k! for p plus and q minus signs."""
    p = sum(1 for s in signs if s == 1)
    q = len(signs) - p
    return int(sum(comb(p, k, exact=True) * comb(q, k, exact=True) * math.factorial(k) for k in range(min(p, q) + 1)))


def _letters(n: int) -> str:
    return string.ascii_lowercase[:n]


def eval_F(expr: MultilinearExpression, g: np.ndarray) -> Union[complex, np.ndarray]:
    """
    F for one draw (shape (|E|,)) or a batch of draws (shape (trials, |E|)).
    """
    g = np.asarray(g, dtype=np.complex128)
    batch = g.ndim == 2
    draws = g if batch else g[None]
    letters = _letters(expr.n)
    operands = [expr.coefficients]
    for s in expr.signs:
        operands.append(draws if s == 1 else np.conj(draws))
    subscripts = letters + "," + ",".join("z" + c for c in letters) + "->z"
    values = np.einsum(subscripts, *operands, optimize=True)
    return values if batch else complex(values[0])


def pairing_block(expr: MultilinearExpression, structure: PairingStructure) -> float:
    """sum over free indices of (sum over paired values of |a|)^2 for one structure."""
    letters = list(_letters(expr.n))
    for i, j in structure.pairs:
        letters[j - 1] = letters[i - 1]
    output = "".join(letters[m - 1] for m in structure.free)
    reduced = np.einsum("".join(letters) + "->" + output, np.abs(expr.coefficients))
    return float(np.sum(np.asarray(reduced) ** 2))


def compute_M(expr: MultilinearExpression) -> float:
    """Deviation functional M: the pairing blocks summed over every pairing structure."""
    return float(sum(pairing_block(expr, structure) for structure in enumerate_pairings(expr)))


def isserlis_moment(exponents: Sequence[Tuple[int, int]]) -> int:
    """
    E prod_e g_e^{b_e} conj(g_e)^{c_e} for independent standard complex Gaussians.

    Args:
        exponents: (b_e, c_e) per mode

    Raises:
        BudgetExceededException: If the total degree exceeds settings.isserlis_degree_budget
    """
    degree = sum(b + c for b, c in exponents)
    if degree > settings.isserlis_degree_budget:
        raise BudgetExceededException(f"degree {degree} exceeds the budget {settings.isserlis_degree_budget}")
    value = 1
    for b, c in exponents:
        if b != c:
            return 0
        value *= math.factorial(b)
    return value


class GaussianPolynomial:
    """
    Polynomial in g_e and conj(g_e) stored as {exponents: coefficient}.

    The exponent key lists b_0..b_{E-1} followed by c_0..c_{E-1}.
    """

    def __init__(self, size: int, terms: Optional[Dict[Exponents, complex]] = None):
        self.size = size
        self.terms: Dict[Exponents, complex] = dict(terms or {})

    @classmethod
    def from_expression(cls, expr: MultilinearExpression) -> "GaussianPolynomial":
        terms: Dict[Exponents, complex] = defaultdict(complex)
        E = expr.size
        for index in zip(*np.nonzero(expr.coefficients)):
            key = [0] * (2 * E)
            for position, sign in zip(index, expr.signs):
                key[position if sign == 1 else E + position] += 1
            terms[tuple(key)] += complex(expr.coefficients[index])
        return cls(E, terms)

    @property
    def degree(self) -> int:
        return max((sum(key) for key in self.terms), default=0)

    def conjugate(self) -> "GaussianPolynomial":
        E = self.size
        return GaussianPolynomial(E, {key[E:] + key[:E]: np.conj(c) for key, c in self.terms.items()})

    def __mul__(self, other: "GaussianPolynomial") -> "GaussianPolynomial":
        terms: Dict[Exponents, complex] = defaultdict(complex)
        for (k1, c1), (k2, c2) in itertools.product(self.terms.items(), other.terms.items()):
            terms[tuple(a + b for a, b in zip(k1, k2))] += c1 * c2
        return GaussianPolynomial(self.size, {k: c for k, c in terms.items() if c != 0})

    def power(self, d: int) -> "GaussianPolynomial":
        result = GaussianPolynomial(self.size, {(0,) * (2 * self.size): 1.0 + 0j})
        for _ in range(d):
            result = result * self
        return result

    def expectation(self) -> complex:
        E = self.size
        return complex(sum(c * isserlis_moment(list(zip(key[:E], key[E:]))) for key, c in self.terms.items()))


def moment(expr: MultilinearExpression, d: int = 1) -> float:
    """
    Exact E|F|^{2d}, grouping the monomials of F^d by their charge b - c.

    Two monomials of F^d pair to a nonzero moment only when their charges agree,
    and then the moment is prod_e (b_e + c'_e)!.
    """
    degree = 2 * expr.n * d
    if degree > settings.isserlis_degree_budget:
        raise BudgetExceededException(f"degree {degree} exceeds the budget {settings.isserlis_degree_budget}")
    power = GaussianPolynomial.from_expression(expr).power(d)
    E = expr.size
    groups: Dict[Exponents, List[Tuple[Exponents, complex]]] = defaultdict(list)
    for key, c in power.terms.items():
        groups[tuple(b - g for b, g in zip(key[:E], key[E:]))].append((key, c))
    total = 0.0
    for members in groups.values():
        keys = np.array([key for key, _ in members])
        coeffs = np.array([c for _, c in members])
        b, c = keys[:, :E], keys[:, E:]
        weights = np.prod(factorial(b[:, None, :] + c[None, :, :]), axis=-1)
        total += float(np.real(coeffs @ weights @ np.conj(coeffs)))
    return total


def moment_domination(expr: MultilinearExpression, d: int = 1) -> Tuple[float, float]:
    """(E|F|^{2d}, E|G|^{2d}) where G carries |a| and fresh Gaussians."""
    return moment(expr, d), moment(expr.absolute(), d)


def isometry_ratio(expr: MultilinearExpression) -> float:
    """E|G|^2 / M."""
    M = compute_M(expr)
    return moment(expr.absolute(), 1) / M if M > 0 else 0.0


def standard_gaussians(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    draws = rng.standard_normal((2,) + tuple(shape))
    return (draws[0] + 1j * draws[1]) / math.sqrt(2.0)


def sample_F(expr: MultilinearExpression, trials: int, seed: int, workers: Optional[int] = None) -> np.ndarray:
    """|F| over ``trials`` draws; chunk c uses the stream SeedSequence(seed, spawn_key=(c,))."""

    def run(chunk: range) -> np.ndarray:
        index = chunk.start // settings.batch_size
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
        return np.abs(eval_F(expr, standard_gaussians(rng, (len(chunk), expr.size))))

    parts = parallel_map(run, chunked(trials, settings.batch_size), workers or settings.workers)
    return np.concatenate(parts) if parts else np.zeros(0)


def tail_check(
    expr: MultilinearExpression,
    A: Optional[float] = None,
    trials: Optional[int] = None,
    B: Optional[Sequence[float]] = None,
    seed: int = 0,
    theta: Optional[float] = None,
    workers: Optional[int] = None,
) -> TailReport:
    """
    Empirical P(|F| >= B M^{1/2}) on a ladder of B and the fitted tail shape.

    The slope of log(-log p) against log B over 2 <= B <= 6 is compared with
    1/n; only the shape is checked since the tail constant is not quantified.
    The A-certain bound |F| <= A^theta M^{1/2} is reported as a failure rate.
    """
    trials = trials or settings.tail_trials
    if trials < 10_000:
        raise ValueError(f"tail checks need at least 10^4 trials, got {trials}")
    theta = settings.theta if theta is None else theta
    A = float(A) if A is not None else max(float(expr.size), math.e)
    ladder = [float(b) for b in (B if B is not None else np.arange(1.0, 6.5, 0.5))]
    M = compute_M(expr)
    values = sample_F(expr, trials, seed, workers)
    if M == 0.0:
        exceedance = [0.0] * len(ladder)
        failures = 0.0
    else:
        scale = math.sqrt(M)
        exceedance = [float(np.mean(values >= b * scale)) for b in ladder]
        failures = float(np.mean(values > A ** theta * scale))

    fit = [(b, p) for b, p in zip(ladder, exceedance) if 2.0 <= b <= 6.0 and 0.0 < p < 1.0]
    slope = None
    if len(fit) >= 2:
        xs = np.log([b for b, _ in fit])
        ys = np.log(-np.log([p for _, p in fit]))
        slope = float(linregress(xs, ys).slope)
    else:
        logger.warning("tail fit skipped: fewer than two usable B values in [2, 6]")
    expected = 1.0 / expr.n
    return TailReport(
        n=expr.n,
        trials=trials,
        M=M,
        B=ladder,
        exceedance=exceedance,
        slope=slope,
        expected_slope=expected,
        slope_ok=None if slope is None else slope >= expected - 0.15,
        monotone=all(a >= b for a, b in zip(exceedance, exceedance[1:])),
        certainty_level=A,
        certainty_failures=failures,
    )


def l_norm(a: np.ndarray, lam: np.ndarray, delta: Optional[float] = None) -> float:
    """
    Auxiliary norm of a_{k}(lambda_1..lambda_n) on a uniform lambda grid.

    ``a`` has the flattened wavenumber axes first and n lambda axes last, each
    sampled on the increasing grid ``lam``:
    ||a||^2 = sum_k int (max_j <lambda_j>)^{delta^6} (|a|^2 + |d_lambda a|^2).
    """
    delta = settings.default_delta if delta is None else delta
    lam = np.asarray(lam, dtype=float)
    n = a.ndim - 1
    step = float(lam[1] - lam[0])
    grids = np.meshgrid(*([lam] * n), indexing="ij")
    weight = np.max(np.stack([np.sqrt(1.0 + g * g) for g in grids]), axis=0) ** (delta ** 6)
    density = np.abs(a) ** 2
    for axis in range(1, n + 1):
        density = density + np.abs(np.gradient(a, step, axis=axis)) ** 2
    return float(math.sqrt(step ** n * np.sum(weight[None] * density)))


def kernel_deviation_check(
    kernel: KernelMatrix,
    signs: Sequence[int],
    trials: int = 200,
    seed: int = 0,
    a: Optional[np.ndarray] = None,
    theta: Optional[float] = None,
) -> List[DeviationRow]:
    """
    Monte Carlo draws of the no-pairing multilinear form built from an h-kernel.

    M = sum_k sum_{k*} int a_k(lambda) prod_j g_{k*_j}^{iota_j} h~_{k_j k*_j}(lambda_j)^{iota_j}
    with the paired diagonal k*_1 = k*_2 removed, compared with
    N^theta ||h||^n ||a||_L. The Gaussians are drawn on the band modes and are
    independent of the low modes the kernel was built from. Supports n <= 2;
    ``a`` defaults to random coefficients times prod <lambda_j>^{-1}.
    """
    n = len(signs)
    if n not in (1, 2):
        raise ValueError("the kernel deviation check supports n = 1 or 2")
    theta = settings.theta if theta is None else theta
    transform = twisted_transform(kernel)
    order = np.argsort(transform.lambdas)
    lam = transform.lambdas[order]
    h = transform.values[order]
    rows = h.shape[1]
    cols = h.shape[2]
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    if a is None:
        decay = 1.0 / np.sqrt(1.0 + lam ** 2)
        a = standard_gaussians(rng, (rows,) * n)
        if n == 1:
            a = a[:, None] * decay[None, :]
        else:
            a = a[:, :, None, None] * decay[None, None, :, None] * decay[None, None, None, :]
    expected = (rows,) * n + (len(lam),) * n
    if a.shape != expected:
        raise ValueError(f"a must have shape {expected}, got {a.shape}")
    flat = a.reshape((rows ** n,) + (len(lam),) * n)
    bound = float(kernel.N) ** theta * yb_norm(transform, 0.0) ** n * l_norm(flat, lam)
    dl = transform.d_lambda
    H = [h if s == 1 else np.conj(h) for s in signs]
    pair_term = None
    if n == 2 and signs[0] == -signs[1]:
        pair_term = dl * dl * np.einsum("abpq,pac,qbc->c", a, H[0], H[1], optimize=True)

    out = []
    for trial in range(trials):
        g = standard_gaussians(rng, (cols,))
        u = [np.einsum("pkc,c->pk", Hj, g if s == 1 else np.conj(g)) for Hj, s in zip(H, signs)]
        if n == 1:
            value = dl * np.einsum("ap,pa->", a, u[0])
        else:
            value = dl * dl * np.einsum("abpq,pa,qb->", a, u[0], u[1], optimize=True)
            if pair_term is not None:
                value = value - np.sum(pair_term * np.abs(g) ** 2)
        magnitude = float(abs(value))
        out.append(DeviationRow(trial=trial, value=magnitude, bound=bound, ratio=magnitude / bound if bound > 0 else 0.0))
    return out


def measurability_witness(
    builder: Callable[[SpectralField], np.ndarray],
    field: SpectralField,
    L: float,
    seed: int,
) -> bool:
    """
    True when ``builder`` output is bitwise unchanged after the modes with
    <k> > L are redrawn from the Gaussian free field.
    """
    K = half_width(field.cutoff)
    low = shell_mask(K, L)
    fresh = gff_coefficients(field.cutoff, seed, 0, stream=WITNESS_STREAM)
    mixed = np.where(low, field.coeffs, fresh)
    other = SpectralField.from_coeffs(field.cutoff, mixed)
    return bool(np.array_equal(np.asarray(builder(field)), np.asarray(builder(other))))


def random_expression(
    n: int,
    support_size: int,
    seed: int,
    radius: int = 3,
    signs: Optional[Sequence[int]] = None,
) -> MultilinearExpression:
    """Random support points in [-radius, radius]^2 with complex Gaussian coefficients."""
    if support_size > (2 * radius + 1) ** 2:
        raise ValueError("support larger than the sampling box")
    rng = np.random.default_rng(seed)
    points = [(x, y) for x in range(-radius, radius + 1) for y in range(-radius, radius + 1)]
    chosen = rng.choice(len(points), size=support_size, replace=False)
    support = [points[i] for i in sorted(chosen)]
    signs = list(signs) if signs is not None else [int(s) for s in rng.choice([-1, 1], size=n)]
    coefficients = standard_gaussians(rng, (support_size,) * n)
    return MultilinearExpression(support=support, signs=signs, coefficients=coefficients)


def expression_from_dict(data: Dict, base_dir: Optional[Path] = None) -> MultilinearExpression:
    """
    Build an expression from its JSON description.

    Keys: ``support`` (list of [x, y]), ``signs``, and either ``coefficients``
    ({"real": nested list, "imag": nested list}) or ``coefficients_file`` (a
    .npy file relative to ``base_dir``).
    """
    support = [tuple(int(v) for v in point) for point in data["support"]]
    if "coefficients_file" in data:
        path = Path(data["coefficients_file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        coefficients = np.load(path)
    else:
        raw = data["coefficients"]
        coefficients = np.asarray(raw["real"], dtype=float) + 1j * np.asarray(raw.get("imag", 0.0), dtype=float)
    return MultilinearExpression(
        support=support,
        signs=list(data["signs"]),
        coefficients=coefficients,
        measurable_modes=data.get("measurable_modes"),
    )


def load_expressions(path: Path) -> List[MultilinearExpression]:
    """Read one expression or a list of expressions from a JSON file."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    items = data if isinstance(data, list) else [data]
    return [expression_from_dict(item, Path(path).parent) for item in items]
