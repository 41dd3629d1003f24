"""Cross-validation splits.

Test folds are disjoint and exhaustive; everything is a pure function of
(n, folds, seed). Fold 0's training part carries an extra 70/10 split: its
`core` (7/8 of the train part) is what gets optimized and its `val` (1/8)
is a held-out slice for hyperparameter sanity reporting. Other folds train
on their full train part.

`groups`, when given, keeps all samples of a group in the same test fold
(for datasets with repeated subjects); the synthetic benchmarks never set it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Fold:
    index: int
    train_idx: np.ndarray  # full train part
    test_idx: np.ndarray
    core_idx: np.ndarray   # subset of train_idx actually optimized
    val_idx: np.ndarray    # held-out validation slice (fold 0 only)


def split_indices(n: int, folds: int, seed: int,
                  groups: np.ndarray | None = None) -> list[Fold]:
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    if folds > n:
        raise ValueError(f"cannot make {folds} folds from {n} samples")

    rng = np.random.default_rng((int(seed), 3))
    if groups is None:
        perm = rng.permutation(n)
        test_chunks = np.array_split(perm, folds)
    else:
        groups = np.asarray(groups)
        if groups.shape[0] != n:
            raise ValueError("groups must have one entry per sample")
        unique = np.unique(groups)
        order = rng.permutation(unique.shape[0])
        buckets: list[list[int]] = [[] for _ in range(folds)]
        sizes = np.zeros(folds, dtype=np.int64)
        for g in unique[order]:
            members = np.flatnonzero(groups == g)
            smallest = int(np.argmin(sizes))
            buckets[smallest].extend(members.tolist())
            sizes[smallest] += members.size
        if min(len(b) for b in buckets) == 0:
            raise ValueError("group assignment left an empty fold; too few groups")
        test_chunks = [np.array(sorted(b)) for b in buckets]

    result = []
    for i, test in enumerate(test_chunks):
        in_test = np.zeros(n, dtype=bool)
        in_test[test] = True
        train = np.flatnonzero(~in_test)
        if i == 0:
            # 80% train part -> 70% core / 10% validation of the full dataset
            sub = np.random.default_rng((int(seed), 3, 1)).permutation(train.shape[0])
            n_val = train.shape[0] // 8
            val = train[sub[:n_val]]
            core = train[sub[n_val:]]
        else:
            val = np.empty(0, dtype=np.int64)
            core = train
        result.append(Fold(index=i, train_idx=train, test_idx=np.sort(test),
                           core_idx=np.sort(core), val_idx=np.sort(val)))
    return result


def split_folds(ds, folds: int, seed: int, groups=None) -> list[Fold]:
    return split_indices(len(ds), folds, seed, groups=groups)
