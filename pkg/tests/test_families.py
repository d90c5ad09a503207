import itertools
import json
import random

import numpy as np
import pytest

from ackradio import families as F
from ackradio.families import SetFamily


def sets_of(fam):
    return [set(s) for s in fam.sets]


# -- brute-force oracles, written against plain Python sets -----------------


def oracle_selective(sets, k, m, strong=False):
    for j in range(1, k + 1):
        for sub in itertools.combinations(range(1, m + 1), j):
            sub = set(sub)
            if strong:
                if not all(any(s & sub == {z} for s in sets) for z in sub):
                    return False
            elif not any(len(s & sub) == 1 for s in sets):
                return False
    return True


def oracle_scf(sets, l, c):
    universe = range(1, l**c + 1)
    masks = [sum(1 << x for x in s) for s in sets]

    def cond(known, unknown):
        a = b = False
        for s in masks:
            kk = bin(s & known).count("1")
            uu = bin(s & unknown).count("1")
            a |= kk == 0 and uu == 1
            b |= kk == 1 and uu >= 1
        return a, b

    def mask(xs):
        return sum(1 << x for x in xs)

    # empty known set: condition B is impossible, so A is needed for every unknown set
    for y in range(1, len(universe) + 1):
        for unk in itertools.combinations(universe, y):
            if not cond(0, mask(unk))[0]:
                return False
    for x in range(1, l):
        for kn in itertools.combinations(universe, x):
            rest = [u for u in universe if u not in kn]
            for y in range(1, l + 1):
                for unk in itertools.combinations(rest, y):
                    a, b = cond(mask(kn), mask(unk))
                    if y < l and not (a or b):
                        return False
                    if y == l and not b:
                        return False
    return True


# -- selective --------------------------------------------------------------


def test_singleton_selective():
    fam = F.build_selective(1, 4, "singleton")
    assert sets_of(fam) == [{1}, {2}, {3}, {4}]
    assert F.verify_selective(F.build_selective(4, 4, "singleton"), 4, 4)


def test_selective_verifier_examples():
    assert not F.verify_selective(SetFamily.from_sets(2, [{1, 2}]), 2, 2)
    assert F.verify_selective(F.singleton_family(4), 4, 4)


def test_randomized_selective_seed7():
    fam = F.build_selective(3, 16, "randomized", 7)
    assert fam.verified == "exhaustive"
    assert oracle_selective(sets_of(fam), 3, 16)


def test_strongly_selective_examples():
    assert sets_of(F.build_strongly_selective(2, 3, "singleton")) == [{1}, {2}, {3}]
    assert sets_of(F.build_strongly_selective(2, 2, "singleton")) == [{1}, {2}]
    assert F.verify_strongly_selective(SetFamily.from_sets(2, [{1, 2}, {1}, {2}]), 2, 2)
    assert not F.verify_strongly_selective(SetFamily.from_sets(2, [{1, 2}]), 2, 2)
    fam = F.build_strongly_selective(2, 8, "randomized", 3)
    assert oracle_selective(sets_of(fam), 2, 8, strong=True)
    assert F.verify_strongly_selective(fam, 2, 8)


@pytest.mark.parametrize("seed", range(20))
def test_verifiers_agree_with_oracle_on_random_families(seed):
    rng = random.Random(seed)
    m, k = rng.randint(2, 7), 0
    k = rng.randint(1, m)
    sets = [{x for x in range(1, m + 1) if rng.random() < 0.4} for _ in range(rng.randint(1, 10))]
    fam = SetFamily.from_sets(m, sets)
    assert F.verify_selective(fam, k, m) == oracle_selective(sets, k, m)
    assert F.verify_strongly_selective(fam, k, m) == oracle_selective(sets, k, m, strong=True)


def test_limit_exceeded():
    fam = F.singleton_family(64)
    with pytest.raises(F.LimitExceeded):
        F.verify_selective(fam, 8, 64, limit=1000)
    assert F.verify_selective(fam, 8, 64, mode="sampled", trials=200)


# -- selecting-colliding ----------------------------------------------------


@pytest.mark.parametrize("l", [2, 3])
def test_scf_examples(l):
    fam = F.build_scf(l, 2, 4, 1)
    assert fam.universe_max == l**2
    assert F.verify_scf(fam, l, 2)
    part1 = sum(F.scf_part1_sizes(l, 4).values())
    assert part1 <= F.scf_size_bound(l, 4)


def test_scf_bare_singletons_fail():
    fam = F.singleton_family(4)
    # {2} gives condition A for this pair, but a size-l unknown set needs B
    assert F.scf_pair_holds(fam, [1], [2, 3]) == "A"
    assert not any(len(s & {1}) == 1 and s & {2, 3} for s in sets_of(fam))
    assert not F.verify_scf(fam, 2, 2)
    assert not oracle_scf(sets_of(fam), 2, 2)


def test_scf_pair_with_b_witness():
    fam = SetFamily.from_sets(4, [{1, 2}, {1}, {2}, {3}, {4}])
    assert F.scf_pair_holds(fam, [1], [2, 3]) in ("A", "B")
    assert any(len(s & {1}) == 1 and s & {2, 3} for s in sets_of(fam))
    assert F.verify_scf(fam, 2, 2) == oracle_scf(sets_of(fam), 2, 2)


def test_scf_empty_family():
    assert not F.verify_scf(SetFamily.from_sets(4, []), 2, 2)


@pytest.mark.parametrize("seed", range(40))
def test_scf_verifier_matches_brute_force(seed):
    rng = random.Random(seed)
    p = rng.choice([0.3, 0.5, 0.7])
    sets = [{x for x in range(1, 5) if rng.random() < p} for _ in range(rng.randint(0, 12))]
    if rng.random() < 0.5:
        sets += [{x} for x in range(1, 5)]
    fam = SetFamily.from_sets(4, sets)
    assert F.verify_scf(fam, 2, 2) == oracle_scf(sets, 2, 2)


def test_scf_verifier_matches_brute_force_l3():
    fam = F.build_scf(3, 2, 1, 0, verify="none")
    assert F.verify_scf(fam, 3, 2) == oracle_scf(sets_of(fam), 3, 2)


# -- storage ------------------------------------------------------------------


def test_json_roundtrip_and_checksum():
    fam = F.build_selective(3, 16, "randomized", 7)
    data = fam.to_json()
    back = SetFamily.from_json(json.loads(json.dumps(data)))
    assert sets_of(back) == sets_of(fam)
    data["sets"][0] = data["sets"][0] + [16] if 16 not in data["sets"][0] else data["sets"][0][:-1]
    with pytest.raises(F.CacheCorrupt):
        SetFamily.from_json(data)


def test_cache_cold_warm_corrupt(tmp_path):
    params = {"l": 3, "c": 2, "d": 4}
    a = F.family_cache_get_or_build("scf", params, 1, tmp_path)
    files = list(tmp_path.glob("scf-*.json"))
    assert len(files) == 1
    raw = files[0].read_bytes()
    b = F.family_cache_get_or_build("scf", params, 1, tmp_path)
    assert sets_of(a) == sets_of(b) and b.verified == a.verified
    assert files[0].read_bytes() == raw
    files[0].write_text(raw.decode().replace('"sets":[[', '"sets":[[9,', 1))
    c = F.family_cache_get_or_build("scf", params, 1, tmp_path)
    assert sets_of(c) == sets_of(a)
    assert files[0].read_bytes() == raw


def test_membership_helpers():
    fam = SetFamily.from_sets(5, [{1, 2}, {3}, {2, 5}])
    assert list(fam.rounds_of(2)) == [0, 2]
    assert fam.contains(1, 3) and not fam.contains(0, 3)
    assert np.array_equal(fam.dense()[2], [False, True, False, False, True])
