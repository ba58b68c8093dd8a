"""
Exact lattice-point counts behind the arithmetic estimates.

Divisor counts in Z and Z[i] inside boxes, the triple set S of the basic
counting estimate, and the sets S1, S2, S3 with their plus variants and
Sigma-relaxed weighted sums. Every count is an exact integer obtained by
enumeration: the two largest discs are vectorized with numpy, the remaining
variables are looped over, and a budget guard runs before any enumeration.
"""

import itertools
import logging
import math
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.config import settings
from src.models.counting_models import CountingInstance, CountResult, LatticeTuple, SetName, Vector
from src.models.wick_models import SmallParams
from src.utils.exceptions import BudgetExceededException, InvalidInstanceException
from src.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

Gaussian = Tuple[int, int]
UNITS: Tuple[Gaussian, ...] = ((1, 0), (0, 1), (-1, 0), (0, -1))


def _factorize(n: int) -> Dict[int, int]:
    """Prime factorization of a positive integer by trial division."""
    factors: Dict[int, int] = {}
    p = 2
    while p * p <= n:
        while n % p == 0:
            factors[p] = factors.get(p, 0) + 1
            n //= p
        p += 1 if p == 2 else 2
    if n > 1:
        factors[n] = factors.get(n, 0) + 1
    return factors


def integer_divisors(m: int) -> List[int]:
    """All divisors of m in Z, both signs, in increasing order."""
    if m == 0:
        raise InvalidInstanceException("m = 0 has infinitely many divisors")
    positive = [1]
    for p, e in _factorize(abs(m)).items():
        positive = [d * p ** j for d in positive for j in range(e + 1)]
    return sorted([-d for d in positive] + positive)


def _gmul(a: Gaussian, b: Gaussian) -> Gaussian:
    return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])


def _gdivide(a: Gaussian, b: Gaussian) -> Optional[Gaussian]:
    """a / b when b divides a in Z[i], else None."""
    norm = b[0] * b[0] + b[1] * b[1]
    re = a[0] * b[0] + a[1] * b[1]
    im = a[1] * b[0] - a[0] * b[1]
    if re % norm or im % norm:
        return None
    return (re // norm, im // norm)


@lru_cache(maxsize=None)
def _two_squares(p: int) -> Gaussian:
    """(a, b) with a^2 + b^2 = p for a prime p = 1 mod 4."""
    a = 1
    while a * a < p:
        b = math.isqrt(p - a * a)
        if b * b == p - a * a:
            return (a, b)
        a += 1
    raise ValueError(f"{p} is not a sum of two squares")


def _as_gaussian(m: Union[int, complex, Gaussian]) -> Gaussian:
    if isinstance(m, tuple):
        return (int(m[0]), int(m[1]))
    if isinstance(m, complex):
        if m.real != int(m.real) or m.imag != int(m.imag):
            raise ValueError(f"{m} is not a Gaussian integer")
        return (int(m.real), int(m.imag))
    return (int(m), 0)


def gaussian_divisors(m: Union[int, complex, Gaussian]) -> List[Gaussian]:
    """
    All divisors of m in Z[i], found by factoring the norm |m|^2 over Z.

    2 contributes the prime 1+i, a prime p = 3 mod 4 stays prime, and a prime
    p = 1 mod 4 splits as pi * conj(pi) with the exponent of pi in m found by
    repeated exact division. The divisors are all unit multiples of products
    of these primes.
    """
    m = _as_gaussian(m)
    if m == (0, 0):
        raise InvalidInstanceException("m = 0 has infinitely many divisors")
    primes: List[Tuple[Gaussian, int]] = []
    for p, e in _factorize(m[0] * m[0] + m[1] * m[1]).items():
        if p == 2:
            primes.append(((1, 1), e))
        elif p % 4 == 3:
            primes.append(((p, 0), e // 2))
        else:
            pi = _two_squares(p)
            power = 0
            rest = m
            while power < e:
                quotient = _gdivide(rest, pi)
                if quotient is None:
                    break
                rest = quotient
                power += 1
            primes.append((pi, power))
            primes.append(((pi[0], -pi[1]), e - power))
    products: List[Gaussian] = [(1, 0)]
    for prime, e in primes:
        powers = [(1, 0)]
        for _ in range(e):
            powers.append(_gmul(powers[-1], prime))
        products = [_gmul(d, q) for d in products for q in powers]
    return sorted({_gmul(u, d) for u in UNITS for d in products})


def naive_integer_divisors(m: int) -> List[int]:
    """Divisors of m by trial division over 1..|m|; a slow cross-check."""
    if m == 0:
        raise InvalidInstanceException("m = 0 has infinitely many divisors")
    positive = [a for a in range(1, abs(m) + 1) if m % a == 0]
    return sorted([-a for a in positive] + positive)


def naive_gaussian_divisors(m: Union[int, complex, Gaussian]) -> List[Gaussian]:
    """
    Divisors of m by trial division: every a whose norm divides |m|^2 is
    tested with exact division. A slow cross-check of gaussian_divisors.
    """
    m = _as_gaussian(m)
    if m == (0, 0):
        raise InvalidInstanceException("m = 0 has infinitely many divisors")
    norm = m[0] * m[0] + m[1] * m[1]
    norms = [d for d in range(1, math.isqrt(norm) + 1) if norm % d == 0]
    norms = sorted(set(norms + [norm // d for d in norms]))
    found = []
    for n in norms:
        for x in range(-math.isqrt(n), math.isqrt(n) + 1):
            rest = n - x * x
            y = math.isqrt(rest)
            if y * y != rest:
                continue
            for candidate in {(x, y), (x, -y)}:
                if _gdivide(m, candidate) is not None:
                    found.append(candidate)
    return sorted(found)


def divisor_count_box(
    m: Union[int, complex, Gaussian],
    a0: complex,
    M: float,
    b0: complex,
    N: float,
    ring: str = "Z",
) -> int:
    """
    Number of (a, b) in the ring with ab = m, |a - a0| <= M and |b - b0| <= N.

    Raises:
        InvalidInstanceException: If m = 0
    """
    if ring == "Z":
        if isinstance(m, (tuple, complex)):
            raise ValueError("ring Z needs an integer m")
        pairs = [(complex(a), complex(m // a)) for a in integer_divisors(int(m))]
    elif ring in ("Z[i]", "Zi"):
        target = _as_gaussian(m)
        pairs = []
        for a in gaussian_divisors(target):
            b = _gdivide(target, a)
            pairs.append((complex(*a), complex(*b)))
    else:
        raise ValueError(f"unknown ring {ring!r}, expected 'Z' or 'Z[i]'")
    tolerance = 1e-12
    return sum(1 for a, b in pairs if abs(a - a0) <= M + tolerance and abs(b - b0) <= N + tolerance)


@lru_cache(maxsize=256)
def _disc_cached(cx: int, cy: int, radius: float) -> np.ndarray:
    r = int(math.floor(radius + 1e-12))
    xs, ys = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    keep = xs * xs + ys * ys <= radius * radius + 1e-9
    points = np.stack([xs[keep] + cx, ys[keep] + cy], axis=-1).astype(np.int64)
    points.setflags(write=False)
    return points


def disc_points(center: Vector, radius: float) -> np.ndarray:
    """Lattice points x with |x - center| <= radius, lexicographic."""
    return _disc_cached(int(center[0]), int(center[1]), float(radius))


def _no_pairing_mask(signed: Sequence[Tuple[np.ndarray, int]], shape: Tuple[int, ...]) -> np.ndarray:
    mask = np.ones(shape, dtype=bool)
    for (u, s), (w, t) in itertools.combinations(signed, 2):
        if s == -t:
            mask &= ~np.all(u == w, axis=-1)
    return mask


def has_pairing(vectors: Union[LatticeTuple, Sequence[Vector]], signs: Sequence[int], iota: int = 1) -> bool:
    """True when two vectors are equal with opposite signs; a LatticeTuple adds k (sign -1) and k' (sign iota)."""
    if isinstance(vectors, LatticeTuple):
        signed = vectors.signed_vectors(list(signs), iota)
    else:
        signed = list(zip(vectors, signs))
    return any(
        tuple(u) == tuple(w) and s == -t for (u, s), (w, t) in itertools.combinations(signed, 2)
    )


def count_S(
    N1: float,
    N2: float,
    N3: float,
    signs: Sequence[int],
    a: Vector,
    b: Vector,
    c: Vector,
    d: Vector,
    alpha: int,
    exclude_pairings: bool = True,
) -> int:
    """
    #{(x, y, z): i1 x + i2 y + i3 z = d, i1|x|^2 + i2|y|^2 + i3|z|^2 = alpha,
    |x - a| <= N1, |y - b| <= N2, |z - c| <= N3}, without pairings.

    x is solved from the linear constraint, so the enumeration runs over (y, z).
    """
    if not (2 * N1 >= N2 and 2 * N2 >= N3):
        raise InvalidInstanceException(f"sizes must decrease: {N1}, {N2}, {N3}")
    i1, i2, i3 = signs
    Y = disc_points(b, N2)[:, None, :]
    Z = disc_points(c, N3)[None, :, :]
    _guard(Y.shape[0] * Z.shape[1], "S")
    X = i1 * (np.asarray(d) - i2 * Y - i3 * Z)
    shift = X - np.asarray(a)
    mask = np.sum(shift * shift, axis=-1) <= N1 * N1 + 1e-9
    quadratic = i1 * np.sum(X * X, axis=-1) + i2 * np.sum(Y * Y, axis=-1) + i3 * np.sum(Z * Z, axis=-1)
    mask &= quadratic == alpha
    if exclude_pairings:
        mask &= _no_pairing_mask([(X, i1), (Y, i2), (Z, i3)], mask.shape)
    return int(np.count_nonzero(mask))


def count_S_bound(N2: float, N3: float, signs: Sequence[int], theta: Optional[float] = None) -> float:
    """N2^{1+theta} N3, or N2^theta N3^2 when i1 = i2."""
    theta = settings.theta if theta is None else theta
    if signs[0] == signs[1]:
        return N2 ** theta * N3 * N3
    return N2 ** (1.0 + theta) * N3


def _guard(visits: float, label: str) -> None:
    logger.debug("enumerating %s: %.3e tuple visits predicted", label, visits)
    if visits > settings.enumeration_budget:
        raise BudgetExceededException(
            f"{label} needs {visits:.3e} visits, above the budget {settings.enumeration_budget:.3e}"
        )


def _variables(instance: CountingInstance, which: SetName) -> Tuple[List[np.ndarray], List[int]]:
    centers = instance.box_centers if which != "S3" else [(0, 0)] * instance.n
    discs = [disc_points(c, N) for c, N in zip(centers, instance.sizes)]
    signs = list(instance.signs)
    if which == "S2":
        discs.append(disc_points((0, 0), instance.N0))
        signs.append(instance.iota)
    return discs, signs


def _evaluate(
    instance: CountingInstance,
    which: SetName,
    plus: bool,
    exclude_pairings: bool,
    vectors: List[np.ndarray],
    signs: List[int],
    relaxed: bool,
) -> Tuple[np.ndarray, np.ndarray]:
    k = sum(s * v for s, v in zip(signs, vectors)) - np.asarray(instance.d)
    shape = k.shape[:-1]
    ksq = np.sum(k * k, axis=-1)
    mask = np.ones(shape, dtype=bool)
    if which in ("S2", "S3"):
        mask &= ksq <= instance.N0 ** 2
    for i, R in enumerate(instance.R):
        gap = vectors[2 * i] - vectors[2 * i + 1]
        mask &= np.sum(gap * gap, axis=-1) <= R * R + 1e-9
    if plus:
        total = sum(instance.signs[j - 1] * vectors[j - 1] for j in instance.A)
        mask &= np.all(total == np.asarray(instance.d_prime), axis=-1)
    sq = [np.sum(v * v, axis=-1) for v in vectors]
    if which == "S3":
        top = max(instance.sizes)
        gamma_ok = np.zeros(shape, dtype=bool)
        for j, N in enumerate(instance.sizes):
            if 2 * N >= top:
                gamma_ok |= ((ksq >= instance.Gamma) & (instance.Gamma >= sq[j])) | (
                    (ksq <= instance.Gamma) & (instance.Gamma <= sq[j])
                )
        mask &= gamma_ok
    sigma = sum(s * q for s, q in zip(signs, sq)) - ksq
    if not relaxed:
        if which == "S3":
            mask &= np.abs(sigma - instance.alpha) <= instance.M + 1e-9
        else:
            mask &= sigma == instance.alpha
    if exclude_pairings:
        mask &= _no_pairing_mask([(k, -1)] + list(zip(vectors, signs)), shape)
    return mask, np.broadcast_to(sigma, shape)


def _enumerate(
    instance: CountingInstance,
    which: SetName,
    plus: bool,
    exclude_pairings: bool,
    relaxed: bool,
    a0: float,
    order: Optional[Sequence[int]],
) -> Tuple[int, float]:
    instance.check_hypotheses()
    if plus and not instance.A:
        raise InvalidInstanceException("the plus variant needs a non-empty index set A")
    discs, signs = _variables(instance, which)
    sizes = [len(d) for d in discs]
    _guard(float(np.prod([float(s) for s in sizes])), which + ("+" if plus else ""))
    order = list(order) if order is not None else sorted(range(len(discs)), key=lambda j: sizes[j])
    if sorted(order) != list(range(len(discs))):
        raise ValueError(f"order must be a permutation of 0..{len(discs) - 1}")
    inner = order[-2:]
    outer = order[:-2]
    count = 0
    weighted = 0.0
    for combo in itertools.product(*(range(sizes[j]) for j in outer)):
        vectors: List[np.ndarray] = [None] * len(discs)
        for j, index in zip(outer, combo):
            vectors[j] = discs[j][index]
        if len(inner) == 2:
            vectors[inner[0]] = discs[inner[0]][:, None, :]
            vectors[inner[1]] = discs[inner[1]][None, :, :]
        else:
            vectors[inner[0]] = discs[inner[0]]
        mask, sigma = _evaluate(instance, which, plus, exclude_pairings, vectors, signs, relaxed)
        count += int(np.count_nonzero(mask))
        if relaxed:
            weighted += float(np.sum((1.0 + (sigma[mask] - instance.alpha) ** 2) ** (-a0 / 2.0)))
    return count, weighted


def count_S123(
    instance: CountingInstance,
    which: SetName = "S1",
    plus: bool = False,
    exclude_pairings: bool = True,
    order: Optional[Sequence[int]] = None,
) -> int:
    """
    Exact size of S1, S2 or S3 (intersected with S+ when ``plus``).

    Variables are looped in ``order``, last innermost. The default sorts discs
    by size so the two largest form the innermost block, which is evaluated
    as one broadcast array; the Python loop then runs over the smallest boxes.
    Any permutation gives the same count.

    Raises:
        InvalidInstanceException: If the instance violates the hypotheses
        BudgetExceededException: If the predicted enumeration exceeds settings.enumeration_budget
    """
    return _enumerate(instance, which, plus, exclude_pairings, False, 0.0, order)[0]


def weighted_sum_E(
    instance: CountingInstance,
    which: SetName = "S1",
    a0: Optional[float] = None,
    plus: bool = False,
    exclude_pairings: bool = True,
) -> float:
    """Sum of <Sigma - alpha>^{-a0} over the set with its quadratic constraint removed."""
    a0 = SmallParams(delta=instance.delta).a0 if a0 is None else a0
    return _enumerate(instance, which, plus, exclude_pairings, True, a0, None)[1]


def rhs_bound(
    instance: CountingInstance,
    which: SetName = "S1",
    plus: bool = False,
    variant: str = "auto",
    weighted: bool = False,
) -> float:
    """
    Right side of the counting bound, divided by prod_i N_{2i-1}^{1+2 gamma0} / R_i.

    The (N_*)^{C/kappa} loss is taken as 1 and absorbed in the fitted batch
    constant. ``variant`` selects the S1 bound: "generic" uses (N1 N2)^{-1},
    "stronger" uses N1^{-2}, "auto" picks the stronger one when the largest
    size carries a minus sign (or lies in A for the plus variant). With
    ``weighted`` the factor M of S3 is dropped.
    """
    sizes = instance.sizes
    ordered = instance.ordered_sizes
    N1 = float(ordered[0])
    N2 = float(ordered[1]) if len(ordered) > 1 else 1.0
    top = sizes.index(ordered[0])
    gamma0 = SmallParams(delta=instance.delta).gamma0
    p = instance.p
    n_pr = float(max(sizes[: 2 * p])) if p else 1.0
    common = n_pr ** (2.0 * gamma0) * float(np.prod([float(N) ** 2 for N in sizes]))
    for i, R in enumerate(instance.R):
        common *= R / float(sizes[2 * i]) ** (1.0 + 2.0 * gamma0)
    outside = [sizes[j - 1] for j in instance.A if j >= 2 * p + 1]
    extra = 1.0 / min(N2, float(max(outside))) if plus and outside else 1.0
    M = 1.0 if weighted else instance.M

    if which == "S1":
        stronger = variant == "stronger" or (
            variant == "auto" and (instance.signs[top] == -1 or (plus and top + 1 in instance.A))
        )
        return common * (N1 ** -2 if stronger else 1.0 / (N1 * N2)) * extra
    if which == "S2":
        bound = common * instance.N0 / N1 * extra
        if plus and top + 1 in instance.A and top + 1 >= 2 * p + 1:
            bound = min(bound, common * instance.N0 / N1 ** 2)
        return bound
    base = common * M * max(N2 * N2, abs(instance.alpha)) / (N2 * N2) / (N1 * N1)
    if not plus:
        return base
    alternative = 1.0 / (N1 * N2 * N2)
    second = sorted(outside, reverse=True)
    if len(second) > 1:
        alternative = min(max(N2 * N2, abs(instance.alpha)) / (N1 * N2) ** 2 / second[1], alternative)
    return max(base * extra, common * M * alternative)


def random_instances(
    count: int,
    seed: int,
    n: int = 3,
    max_size: int = 8,
    which: SetName = "S1",
    p: int = 0,
    plus: bool = False,
    delta: Optional[float] = None,
) -> List[CountingInstance]:
    """
    Random instances built around a witness tuple so the sets are rarely empty.

    alpha (and d' for the plus variant) is read off a random tuple drawn from
    the boxes; pair blocks get equal sizes, opposite signs and R = N^{1-delta}.
    """
    if 2 * p > n:
        raise ValueError("2p cannot exceed n")
    delta = settings.default_delta if delta is None else delta
    rng = np.random.default_rng(seed)
    top = int(math.log2(max_size))
    instances = []
    for _ in range(count):
        sizes = [int(2 ** rng.integers(0, top + 1)) for _ in range(n)]
        signs = [int(rng.choice([-1, 1])) for _ in range(n)]
        for i in range(p):
            sizes[2 * i + 1] = sizes[2 * i]
            signs[2 * i + 1] = -signs[2 * i]
        R = [float(math.floor(sizes[2 * i] ** (1.0 - delta))) for i in range(p)]
        centers = [(0, 0)] * n if which == "S3" else [tuple(int(v) for v in rng.integers(-max_size, max_size + 1, 2)) for _ in range(n)]
        d = tuple(int(v) for v in rng.integers(-2, 3, 2))
        iota = int(rng.choice([-1, 1]))
        witness = [disc_points(c, N)[rng.integers(len(disc_points(c, N)))] for c, N in zip(centers, sizes)]
        k = sum(s * w for s, w in zip(signs, witness)) - np.asarray(d)
        alpha = sum(s * int(w @ w) for s, w in zip(signs, witness)) - int(k @ k)
        N0 = 1
        if which in ("S2", "S3"):
            N0 = max_size
        if which == "S2":
            k_prime = disc_points((0, 0), N0)[rng.integers(len(disc_points((0, 0), N0)))]
            k = k + iota * k_prime
            alpha = sum(s * int(w @ w) for s, w in zip(signs, witness)) + iota * int(k_prime @ k_prime) - int(k @ k)
        A = list(range(1, n + 1)) if plus else []
        d_prime = tuple(int(v) for v in sum(signs[j - 1] * witness[j - 1] for j in A)) if A else (0, 0)
        instances.append(CountingInstance(
            signs=signs, sizes=sizes, N0=N0, M=1.0, centers=centers, d=d, d_prime=d_prime,
            alpha=float(alpha), Gamma=float(rng.integers(0, max_size * max_size + 1)), iota=iota,
            p=p, R=R, A=A, delta=delta,
        ))
    return instances


def counting_batch(
    instances: Sequence[CountingInstance],
    which: SetName = "S1",
    plus: bool = False,
    weighted: bool = False,
    workers: Optional[int] = None,
) -> List[CountResult]:
    """Count every instance and report count / rhs_bound (and the weighted sum when asked)."""

    def run(instance: CountingInstance) -> CountResult:
        count = count_S123(instance, which, plus)
        bound = rhs_bound(instance, which, plus)
        total = weighted_sum_E(instance, which, plus=plus) if weighted else None
        ratio = count / bound if bound > 0 else (0.0 if count == 0 else float("inf"))
        return CountResult(
            which=which, plus=plus, n=instance.n, signs=instance.signs, sizes=instance.sizes,
            N0=instance.N0, alpha=instance.alpha, p=instance.p, count=count, weighted=total,
            rhs=bound, ratio=ratio,
        )

    results = parallel_map(run, list(instances), workers or settings.workers)
    if results:
        logger.info("%s%s batch of %d: max ratio %.3g", which, "+" if plus else "", len(results), max(r.ratio for r in results))
    return results
