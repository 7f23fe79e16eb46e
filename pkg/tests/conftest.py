import math

import numpy as np
import pytest

from ecan.config import ModelSpec
from ecan.model import EcanModel


def naive_cosine(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    return dot / (math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b)))


def naive_knn(bank_rows, anchor, k):
    sims = [(naive_cosine(bank_rows[anchor], bank_rows[j]), j)
            for j in range(len(bank_rows)) if j != anchor]
    sims.sort(key=lambda t: (-t[0], t[1]))
    return [j for _, j in sims[:k]]


def naive_ncl(batch, indices, bank_rows, tau, k):
    """Double loop over anchors and bank rows, straight from the definition."""
    total = 0.0
    for f, i in zip(batch, indices):
        denom = sum(math.exp(naive_cosine(f, bank_rows[j]) / tau)
                    for j in range(len(bank_rows)) if j != i)
        for j in naive_knn(bank_rows, i, k):
            total -= math.log(math.exp(naive_cosine(f, bank_rows[j]) / tau) / denom)
    return total / len(indices)


def naive_scl(batch, indices, bank_rows, score_rows, tau):
    labels = [max(range(len(s)), key=lambda c: (s[c], -c)) for s in score_rows]
    total = 0.0
    for f, i in zip(batch, indices):
        positives = [j for j in range(len(bank_rows)) if j != i and labels[j] == labels[i]]
        if not positives:
            continue
        denom = sum(math.exp(naive_cosine(f, bank_rows[j]) / tau)
                    for j in range(len(bank_rows)) if j != i)
        term = sum(math.log(math.exp(naive_cosine(f, bank_rows[j]) / tau) / denom) for j in positives)
        total += -term / len(positives)
    return total / len(indices)


@pytest.fixture
def small_spec():
    return ModelSpec(input_dim=8, hidden=(16,), feature_dim=4, class_count=3)


@pytest.fixture
def small_model(small_spec):
    return EcanModel.init(small_spec, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
