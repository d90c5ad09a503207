"""Set families used as transmission schedules.

A family is an ordered list of subsets of ``[1..m]``; position ``j`` of the
list is the ``j``-th round of the schedule and a node transmits in that round
iff its label is in the set.

Three families are supported:

* (k, m)-selective: every nonempty S of size <= k is hit exactly once by
  some member;
* (k, m)-strongly selective: every element z of every such S is isolated
  (F cap S = {z}) by some member;
* (l, l^c) selecting-colliding (SCF): for disjoint known/unknown neighbour
  sets N_k (|N_k| < l) and N_uk != {} some member either hits N_uk once and
  misses N_k (condition A) or hits N_k once and N_uk at least once
  (condition B).

Randomised constructions loop "sample, verify, reseed".  Verification is
exhaustive when the instance is small enough and sampled otherwise; the
family records which.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
import os
import tempfile
from bisect import bisect_left
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

CONSTRUCTION_VERSION = 1
DEFAULT_EXHAUSTIVE_LIMIT = 50_000_000


class FamilyError(RuntimeError):
    pass


class ConstructionFailed(FamilyError):
    pass


class LimitExceeded(FamilyError):
    pass


class CacheCorrupt(FamilyError):
    pass


@dataclass
class SetFamily:
    """Ordered set system over ``[1..universe_max]`` stored in CSR form."""

    universe_max: int
    indptr: np.ndarray
    indices: np.ndarray
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    provenance: str = "custom"
    seed: int | None = None
    verified: str = "none"
    _index: dict | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_sets(cls, universe_max: int, sets: Iterable[Iterable[int]], **kw) -> "SetFamily":
        rows = [np.unique(np.asarray(list(s), dtype=np.int64)) for s in sets]
        for row in rows:
            if row.size and (row[0] < 1 or row[-1] > universe_max):
                raise ValueError(f"set {row.tolist()} leaves [1..{universe_max}]")
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        if rows:
            indptr[1:] = np.cumsum([r.size for r in rows])
        indices = np.concatenate(rows).astype(np.int32) if rows else np.zeros(0, dtype=np.int32)
        return cls(universe_max, indptr, indices, **kw)

    def __len__(self) -> int:
        return len(self.indptr) - 1

    def __getitem__(self, j: int) -> frozenset[int]:
        return frozenset(self.indices[self.indptr[j]:self.indptr[j + 1]].tolist())

    @property
    def sets(self) -> list[list[int]]:
        return [self.indices[self.indptr[j]:self.indptr[j + 1]].tolist() for j in range(len(self))]

    def rounds_of(self, x: int) -> np.ndarray:
        """Sorted positions of the members containing ``x``."""
        if self._index is None:
            rows = np.repeat(np.arange(len(self), dtype=np.int64), np.diff(self.indptr))
            order = np.argsort(self.indices, kind="stable")
            elems = self.indices[order]
            rows = rows[order]
            bounds = np.searchsorted(elems, np.arange(1, self.universe_max + 2))
            self._index = {"rows": rows, "bounds": bounds}
        if x < 1 or x > self.universe_max:
            return np.zeros(0, dtype=np.int64)
        b = self._index["bounds"]
        return self._index["rows"][b[x - 1]:b[x]]

    def rounds_list(self, x: int) -> list[int]:
        """``rounds_of`` as a cached Python list (cheap bisect in hot loops)."""
        cache = self.__dict__.setdefault("_lists", {})
        if x not in cache:
            cache[x] = self.rounds_of(x).tolist()
        return cache[x]

    def contains(self, j: int, x: int) -> bool:
        rows = self.rounds_list(x)
        k = bisect_left(rows, j)
        return k < len(rows) and rows[k] == j

    def dense(self) -> np.ndarray:
        """Boolean incidence matrix, rows = members, column x-1 = element x."""
        mat = np.zeros((len(self), self.universe_max), dtype=bool)
        rows = np.repeat(np.arange(len(self)), np.diff(self.indptr))
        mat[rows, self.indices - 1] = True
        return mat

    def masks(self) -> np.ndarray:
        if self.universe_max > 63:
            raise LimitExceeded("bitmask form needs universe_max <= 63")
        weights = np.left_shift(np.uint64(1), (self.indices.astype(np.uint64) - np.uint64(1)))
        out = np.zeros(len(self), dtype=np.uint64)
        rows = np.repeat(np.arange(len(self)), np.diff(self.indptr))
        np.bitwise_or.at(out, rows, weights)
        return out

    def concat(self, other: "SetFamily", **kw) -> "SetFamily":
        if other.universe_max != self.universe_max:
            raise ValueError("universe mismatch")
        indptr = np.concatenate([self.indptr, other.indptr[1:] + self.indptr[-1]])
        indices = np.concatenate([self.indices, other.indices])
        return SetFamily(self.universe_max, indptr, indices, **kw)

    def to_json(self) -> dict:
        body = {
            "kind": self.kind,
            "params": self.params,
            "seed": self.seed,
            "provenance": self.provenance,
            "verified": self.verified,
            "universe_max": self.universe_max,
            "sets": self.sets,
        }
        body["checksum"] = _checksum(body)
        return body

    @classmethod
    def from_json(cls, data: dict) -> "SetFamily":
        expected = data.get("checksum")
        body = {k: v for k, v in data.items() if k != "checksum"}
        if expected != _checksum(body):
            raise CacheCorrupt("family checksum mismatch")
        return cls.from_sets(
            data["universe_max"],
            data["sets"],
            kind=data["kind"],
            params=data["params"],
            provenance=data["provenance"],
            seed=data["seed"],
            verified=data["verified"],
        )


def _checksum(body: dict) -> str:
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _rng(seed: int, attempt: int, tag: str) -> np.random.Generator:
    salt = int.from_bytes(hashlib.sha256(tag.encode()).digest()[:4], "little")
    return np.random.default_rng([int(seed), int(attempt), salt])


def _random_rows(rng: np.random.Generator, count: int, m: int, p: float) -> list[np.ndarray]:
    rows: list[np.ndarray] = []
    chunk = max(1, 4_000_000 // max(m, 1))
    left = count
    while left > 0:
        take = min(chunk, left)
        mat = rng.random((take, m)) < p
        for row in mat:
            rows.append(np.flatnonzero(row) + 1)
        left -= take
    return rows


def _family_from_rows(m: int, rows: list[np.ndarray], drop_empty: bool = True, **kw) -> SetFamily:
    if drop_empty:
        rows = [r for r in rows if r.size]
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    if rows:
        indptr[1:] = np.cumsum([r.size for r in rows])
        indices = np.concatenate(rows).astype(np.int32)
    else:
        indices = np.zeros(0, dtype=np.int32)
    return SetFamily(m, indptr, indices, **kw)


def singleton_family(m: int, kind: str = "custom", params: dict | None = None) -> SetFamily:
    return SetFamily(
        m,
        np.arange(m + 1, dtype=np.int64),
        np.arange(1, m + 1, dtype=np.int32),
        kind=kind,
        params=params or {},
        provenance="singleton",
        verified="by-construction",
    )


# ---------------------------------------------------------------------------
# selective / strongly selective


def _subset_count(m: int, k: int) -> int:
    return sum(comb(m, j) for j in range(1, k + 1))


def _subset_batches(m: int, j: int, batch: int = 20_000):
    it = itertools.combinations(range(m), j)
    while True:
        block = list(itertools.islice(it, batch))
        if not block:
            return
        yield np.asarray(block, dtype=np.int64)


def _check_km(k: int, m: int) -> None:
    if not 1 <= k <= m:
        raise ValueError(f"need 1 <= k <= m, got k={k}, m={m}")


def verify_selective(
    family: SetFamily,
    k: int,
    m: int,
    *,
    mode: str = "exhaustive",
    limit: int = DEFAULT_EXHAUSTIVE_LIMIT,
    trials: int = 2000,
    seed: int = 0,
) -> bool:
    """Check that every nonempty subset of size <= k is hit exactly once."""
    _check_km(k, m)
    if family.universe_max != m:
        return False
    if mode == "sampled":
        return _sampled_selective(family, k, m, trials, seed, strong=False)
    count = _subset_count(m, k)
    if count * max(len(family), 1) > limit:
        raise LimitExceeded(f"{count} subsets x {len(family)} sets exceeds {limit}")
    if len(family) == 0:
        return False
    inc = family.dense().astype(np.int8)
    for j in range(1, k + 1):
        for idx in _subset_batches(m, j):
            hits = inc[:, idx].sum(axis=2)
            if not (hits == 1).any(axis=0).all():
                return False
    return True


def verify_strongly_selective(
    family: SetFamily,
    k: int,
    m: int,
    *,
    mode: str = "exhaustive",
    limit: int = DEFAULT_EXHAUSTIVE_LIMIT,
    trials: int = 2000,
    seed: int = 0,
) -> bool:
    """Check that every z of every subset S (|S| <= k) is isolated by some member."""
    _check_km(k, m)
    if family.universe_max != m:
        return False
    if mode == "sampled":
        return _sampled_selective(family, k, m, trials, seed, strong=True)
    count = _subset_count(m, k)
    if count * max(len(family), 1) > limit:
        raise LimitExceeded(f"{count} subsets x {len(family)} sets exceeds {limit}")
    if len(family) == 0:
        return False
    inc = family.dense()
    inc8 = inc.astype(np.int8)
    for j in range(1, k + 1):
        for idx in _subset_batches(m, j):
            once = inc8[:, idx].sum(axis=2) == 1
            for p in range(j):
                if not (once & inc[:, idx[:, p]]).any(axis=0).all():
                    return False
    return True


def _sampled_selective(family: SetFamily, k: int, m: int, trials: int, seed: int, strong: bool) -> bool:
    rng = _rng(seed, 0, "sample-selective")
    for _ in range(trials):
        size = int(rng.integers(1, k + 1))
        subset = (rng.choice(m, size=size, replace=False) + 1).tolist()
        rows = np.concatenate([family.rounds_of(x) for x in subset])
        uniq, counts = np.unique(rows, return_counts=True)
        once = set(uniq[counts == 1].tolist())
        if strong:
            for z in subset:
                if not once.intersection(family.rounds_of(z).tolist()):
                    return False
        elif not once:
            return False
    log.info("sampled verification passed %d trials", trials)
    return True


def _auto_verify(verify, family: SetFamily, args: tuple, limit: int, trials: int, seed: int) -> tuple[bool, str]:
    try:
        return verify(family, *args, mode="exhaustive", limit=limit), "exhaustive"
    except LimitExceeded:
        return verify(family, *args, mode="sampled", trials=trials, seed=seed), "sampled"


def selective_size_target(k: int, m: int, a: float = 2.0) -> list[int]:
    """Members drawn at density 2^-j, for j = 0..ceil(lg k)."""
    out = []
    for j in range(0, math.ceil(math.log2(k)) + 1):
        x = 2**j
        out.append(math.ceil(a * x * math.log2(math.e * m / min(x, m))))
    return out


def build_selective(
    k: int,
    m: int,
    strategy: str = "singleton",
    seed: int = 0,
    *,
    a: float = 2.0,
    retries: int = 50,
    limit: int = DEFAULT_EXHAUSTIVE_LIMIT,
    trials: int = 2000,
) -> SetFamily:
    _check_km(k, m)
    params = {"k": k, "m": m}
    if strategy == "singleton":
        return singleton_family(m, kind="selective", params=params)
    if strategy != "randomized":
        raise ValueError(f"unknown strategy {strategy!r}")
    sizes = selective_size_target(k, m, a)
    for attempt in range(retries):
        rng = _rng(seed, attempt, f"selective-{k}-{m}")
        rows: list[np.ndarray] = []
        for j, t in enumerate(sizes):
            rows.extend(_random_rows(rng, t, m, 2.0**-j))
        fam = _family_from_rows(m, rows, kind="selective", params=params, provenance="randomized", seed=seed)
        ok, how = _auto_verify(verify_selective, fam, (k, m), limit, trials, seed + attempt)
        if ok:
            fam.verified = how
            fam.params = {**params, "attempt": attempt}
            return fam
    raise ConstructionFailed(f"no verified ({k},{m})-selective family after {retries} attempts")


def strongly_selective_size_target(k: int, m: int, a: float = 1.0) -> int:
    km1 = max(k - 1, 1)
    return max(1, math.ceil(a * math.e * k * (math.log(m) + (k - 1) * math.log(math.e * m / km1))))


def build_strongly_selective(
    k: int,
    m: int,
    strategy: str = "singleton",
    seed: int = 0,
    *,
    a: float = 1.0,
    retries: int = 50,
    limit: int = DEFAULT_EXHAUSTIVE_LIMIT,
    trials: int = 2000,
) -> SetFamily:
    _check_km(k, m)
    params = {"k": k, "m": m}
    if strategy == "singleton":
        return singleton_family(m, kind="strongly_selective", params=params)
    if strategy != "randomized":
        raise ValueError(f"unknown strategy {strategy!r}")
    t = strongly_selective_size_target(k, m, a)
    for attempt in range(retries):
        rng = _rng(seed, attempt, f"ssf-{k}-{m}")
        fam = _family_from_rows(
            m, _random_rows(rng, t, m, 1.0 / k), kind="strongly_selective", params=params, provenance="randomized", seed=seed
        )
        ok, how = _auto_verify(verify_strongly_selective, fam, (k, m), limit, trials, seed + attempt)
        if ok:
            fam.verified = how
            fam.params = {**params, "attempt": attempt}
            return fam
    raise ConstructionFailed(f"no verified ({k},{m})-strongly-selective family after {retries} attempts")


# ---------------------------------------------------------------------------
# selecting-colliding families


def scf_part1_sizes(l: int, d: float) -> dict[int, int]:
    """Member count per sampling density 1/m, m = 2, 4, ..., 2^(floor(lg l)+1)."""
    lg = math.log2(l)
    return {2**j: math.ceil(d * l * 2**j * lg) for j in range(1, int(math.floor(lg)) + 2)}


def scf_size_bound(l: int, d: float) -> float:
    return 4 * d * l * l * math.log2(l)


def scf_pair_holds(family: SetFamily, known: Iterable[int], unknown: Iterable[int]) -> str | None:
    """Which condition ("A" or "B") some member satisfies for this pair, if any."""
    known = list(known)
    unknown = list(unknown)
    n_k = len(family)
    k_rows = np.concatenate([family.rounds_of(x) for x in known]) if known else np.zeros(0, dtype=np.int64)
    u_rows = np.concatenate([family.rounds_of(x) for x in unknown]) if unknown else np.zeros(0, dtype=np.int64)
    k_count = np.bincount(k_rows, minlength=n_k)
    u_count = np.bincount(u_rows, minlength=n_k)
    if np.any((k_count == 0) & (u_count == 1)):
        return "A"
    if np.any((k_count == 1) & (u_count >= 1)):
        return "B"
    return None


def _popcount(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a)


def _masks_of_size(universe: int, sizes: Sequence[int]) -> np.ndarray:
    out = []
    for s in sizes:
        for combo in itertools.combinations(range(universe), s):
            v = 0
            for b in combo:
                v |= 1 << b
            out.append(v)
    return np.asarray(out, dtype=np.uint64)


def scf_pair_count(l: int, c: int) -> int:
    u = l**c
    return sum(comb(u, x) for x in range(l)) * sum(comb(u, y) for y in range(1, l + 1))


def verify_scf(
    family: SetFamily,
    l: int,
    c: int,
    *,
    mode: str = "exhaustive",
    limit: int = DEFAULT_EXHAUSTIVE_LIMIT,
    trials: int = 2000,
    seed: int = 0,
) -> bool:
    """Selecting-colliding check over all disjoint (N_k, N_uk) pairs.

    With N_k nonempty: every N_uk of size < l needs condition A or B, and
    every N_uk of size exactly l needs B (B is upward closed in N_uk so this
    covers all larger N_uk).  With N_k empty B is impossible, so every
    nonempty N_uk needs A.
    """
    universe = l**c
    if family.universe_max != universe or len(family) == 0:
        return False
    if mode == "sampled":
        return _sampled_scf(family, l, universe, trials, seed)
    if universe > 63 or scf_pair_count(l, c) > limit:
        raise LimitExceeded(f"exhaustive SCF check for l={l}, c={c} is too large")

    F = family.masks()
    if not _scf_empty_known_ok(family, F, universe):
        return False
    K = _masks_of_size(universe, range(1, l))
    U = _masks_of_size(universe, range(1, l + 1))
    u_size = _popcount(U)
    hit_u = _popcount(F[:, None] & U[None, :])  # |F| x |U|
    once_u = (hit_u == 1).astype(np.float32)
    any_u = (hit_u >= 1).astype(np.float32)
    for start in range(0, len(K), 512):
        kb = K[start:start + 512]
        hit_k = _popcount(kb[:, None] & F[None, :])  # |K| x |F|
        a_ok = ((hit_k == 0).astype(np.float32) @ once_u) > 0
        b_ok = ((hit_k == 1).astype(np.float32) @ any_u) > 0
        disjoint = (kb[:, None] & U[None, :]) == 0
        need_b = (u_size == l)[None, :]
        ok = np.where(need_b, b_ok, a_ok | b_ok)
        if not np.all(ok | ~disjoint):
            return False
    return True


def _scf_empty_known_ok(family: SetFamily, F: np.ndarray, universe: int) -> bool:
    singles = {int(v) for v in F if v and int(v) & (int(v) - 1) == 0}
    if len(singles) == universe:
        return True
    if universe > 20:
        raise LimitExceeded("empty-known clause needs full subset enumeration")
    all_masks = np.arange(1, 2**universe, dtype=np.uint64)
    for start in range(0, len(all_masks), 1 << 14):
        block = all_masks[start:start + (1 << 14)]
        once = (_popcount(F[:, None] & block[None, :]) == 1).any(axis=0)
        if not once.all():
            return False
    return True


def _sampled_scf(family: SetFamily, l: int, universe: int, trials: int, seed: int) -> bool:
    rng = _rng(seed, 0, "sample-scf")
    for _ in range(trials):
        kx = int(rng.integers(1, l)) if l > 1 else 0
        uy = int(rng.integers(1, l + 1))
        if kx + uy > universe:
            continue
        picked = (rng.choice(universe, size=kx + uy, replace=False) + 1).tolist()
        known, unknown = picked[:kx], picked[kx:]
        got = scf_pair_holds(family, known, unknown)
        if got is None or (uy == l and kx and got != "B" and not _has_b(family, known, unknown)):
            return False
    log.info("sampled SCF verification passed %d trials", trials)
    return True


def _has_b(family: SetFamily, known, unknown) -> bool:
    n_k = len(family)
    k_count = np.bincount(np.concatenate([family.rounds_of(x) for x in known]), minlength=n_k)
    u_count = np.bincount(np.concatenate([family.rounds_of(x) for x in unknown]), minlength=n_k)
    return bool(np.any((k_count == 1) & (u_count >= 1)))


def build_scf(
    l: int,
    c: int,
    d: float = 4,
    seed: int = 0,
    *,
    ssf_strategy: str = "singleton",
    retries: int = 50,
    verify: str = "auto",
    limit: int = DEFAULT_EXHAUSTIVE_LIMIT,
    trials: int = 2000,
) -> SetFamily:
    """Random SCF_1 (densities 1/2 .. 1/2^(floor(lg l)+1)) followed by SSF(2l, l^c).

    ``verify`` is "auto" (exhaustive when feasible, else sampled),
    "exhaustive", "sampled" or "none".  Only a failed verification reseeds.
    """
    if l < 2 or c < 1:
        raise ValueError("need l >= 2 and c >= 1")
    universe = l**c
    params = {"l": l, "c": c, "d": d, "ssf": ssf_strategy}
    ssf = build_strongly_selective(min(2 * l, universe), universe, ssf_strategy, seed)
    sizes = scf_part1_sizes(l, d)
    for attempt in range(retries):
        rng = _rng(seed, attempt, f"scf-{l}-{c}-{d}")
        rows: list[np.ndarray] = []
        for m, t in sizes.items():
            rows.extend(_random_rows(rng, t, universe, 1.0 / m))
        part1 = _family_from_rows(universe, rows, drop_empty=False)
        fam = part1.concat(ssf, kind="scf", params={**params, "attempt": attempt}, provenance="randomized", seed=seed)
        if verify == "none":
            return fam
        if verify == "auto":
            ok, how = _auto_verify(verify_scf, fam, (l, c), limit, trials, seed + attempt)
        else:
            ok, how = verify_scf(fam, l, c, mode=verify, limit=limit, trials=trials, seed=seed + attempt), verify
        if ok:
            fam.verified = how
            return fam
    raise ConstructionFailed(f"no verified SCF({l},{l}^{c}) after {retries} attempts")


def scf_first_attempt_ok(l: int, c: int, d: float, seed: int = 0) -> bool:
    """Does the very first sample (no reseeding) verify exhaustively?"""
    try:
        build_scf(l, c, d, seed, retries=1, verify="exhaustive")
    except ConstructionFailed:
        return False
    return True


def smallest_density(candidates: Sequence[float] = (1, 2, 4, 8), ls: Sequence[int] = (2, 3, 4), c: int = 2, seed: int = 0) -> float:
    for d in candidates:
        if all(scf_first_attempt_ok(l, c, d, seed) for l in ls):
            return d
    raise ConstructionFailed("no candidate density verifies on the first attempt")


# ---------------------------------------------------------------------------
# cache


_BUILDERS = {
    "selective": lambda p, seed: build_selective(p["k"], p["m"], p.get("strategy", "singleton"), seed),
    "strongly_selective": lambda p, seed: build_strongly_selective(p["k"], p["m"], p.get("strategy", "singleton"), seed),
    "scf": lambda p, seed: build_scf(p["l"], p["c"], p.get("d", 4), seed, ssf_strategy=p.get("ssf", "singleton"), verify=p.get("verify", "auto")),
}


def default_cache_dir() -> Path:
    return Path(os.environ.get("ACKRADIO_CACHE", Path.home() / ".cache" / "ackradio"))


def cache_key(kind: str, params: dict, seed: int) -> str:
    blob = json.dumps({"kind": kind, "params": params, "seed": seed, "v": CONSTRUCTION_VERSION}, sort_keys=True)
    return f"{kind}-{hashlib.sha256(blob.encode()).hexdigest()[:20]}.json"


def family_cache_get_or_build(kind: str, params: dict, seed: int, cache_dir: str | Path | None = None) -> SetFamily:
    if kind not in _BUILDERS:
        raise ValueError(f"unknown family kind {kind!r}")
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / cache_key(kind, params, seed)
    if path.exists():
        try:
            return SetFamily.from_json(json.loads(path.read_text()))
        except (CacheCorrupt, ValueError, KeyError) as exc:
            log.warning("rebuilding %s: %s", path.name, exc)
    fam = _BUILDERS[kind](params, seed)
    fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        json.dump(fam.to_json(), fh, separators=(",", ":"))
    os.replace(tmp, path)
    return fam
