"""Scalar helpers shared by the oracle implementations (loops only)."""

import math

COSINE_EPS = 1e-8


def as_matrix(m):
    return [[float(x) for x in row] for row in m]


def as_vector(v):
    return [float(x) for x in v]


def dot(a, b):
    total = 0.0
    for x, y in zip(a, b):
        total += x * y
    return total


def norm(a):
    total = 0.0
    for x in a:
        total += x * x
    return math.sqrt(total)


def cosine(a, b):
    return dot(a, b) / (max(norm(a), COSINE_EPS) * max(norm(b), COSINE_EPS))


def softmax_temp(xs, tau):
    m = max(xs)
    exps = [math.exp((x - m) / tau) for x in xs]
    total = 0.0
    for e in exps:
        total += e
    return [e / total for e in exps]


def logsumexp(xs):
    m = max(xs)
    total = 0.0
    for x in xs:
        total += math.exp(x - m)
    return m + math.log(total)


def mean(xs):
    total = 0.0
    for x in xs:
        total += x
    return total / len(xs)


def pstdev(xs):
    mu = mean(xs)
    total = 0.0
    for x in xs:
        total += (x - mu) * (x - mu)
    return math.sqrt(total / len(xs))
