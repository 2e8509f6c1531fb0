"""Central finite-difference gradient checking for the tape primitives.

`PRIMITIVE_CASES` maps each differentiable primitive to a sampler that
draws one random instance: a loss builder plus the leaf values it closes
over. The builder is re-invoked from scratch for every perturbed
evaluation, so anything stochastic inside it (dropout masks) must be
seeded per instance.
"""

import numpy as np

from cdgnn import autodiff as ad


def loss_value(build, values):
    tape = ad.Tape()
    leaves = {k: tape.leaf(v) for k, v in values.items()}
    return build(tape, leaves).item()


def max_relative_error(build, values, step=1e-5):
    """Worst-case deviation between tape gradients and central differences.

    Relative to max(|analytic|, |numeric|, 1e-5); the floor keeps the
    finite-difference noise floor (~1e-10 for O(1) losses) from
    dominating entries whose true gradient is essentially zero.
    """
    tape = ad.Tape()
    leaves = {k: tape.leaf(v) for k, v in values.items()}
    loss = build(tape, leaves)
    grads = ad.gradients(tape, loss, leaves)

    worst = 0.0
    for name, base in values.items():
        base = np.asarray(base, dtype=np.float64)
        for idx in np.ndindex(base.shape):
            bumped = {k: np.array(v, dtype=np.float64) for k, v in values.items()}
            bumped[name][idx] += step
            up = loss_value(build, bumped)
            bumped[name][idx] -= 2.0 * step
            down = loss_value(build, bumped)
            fd = (up - down) / (2.0 * step)
            g = grads[name][idx]
            worst = max(worst, abs(g - fd) / max(abs(g), abs(fd), 1e-5))
    return worst


def _functional(rng, shape):
    """Fixed random linear functional that makes a matrix output scalar."""
    r = rng.normal(size=shape)

    def reduce_to_scalar(t):
        return ad.sum_all(ad.multiply(t, r))

    return reduce_to_scalar


def _case_matmul(rng):
    values = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4, 2))}
    f = _functional(rng, (3, 2))
    return lambda tape, lv: f(ad.matmul(lv["a"], lv["b"])), values


def _case_add(rng):
    b_shape = (3, 4) if rng.random() < 0.5 else (1, 4)
    values = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=b_shape)}
    f = _functional(rng, (3, 4))
    return lambda tape, lv: f(ad.add(lv["a"], lv["b"])), values


def _case_subtract(rng):
    b_shape = (3, 4) if rng.random() < 0.5 else (3, 1)
    values = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=b_shape)}
    f = _functional(rng, (3, 4))
    return lambda tape, lv: f(ad.subtract(lv["a"], lv["b"])), values


def _case_multiply(rng):
    b_shape = (3, 4) if rng.random() < 0.5 else (1, 4)
    values = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=b_shape)}
    f = _functional(rng, (3, 4))
    return lambda tape, lv: f(ad.multiply(lv["a"], lv["b"])), values


def _case_scalar_power(rng):
    p = float(rng.choice([0.5, 0.7, 2.0, 3.0]))
    values = {"a": rng.uniform(0.3, 2.0, size=(3, 3))}
    f = _functional(rng, (3, 3))
    return lambda tape, lv: f(ad.scalar_power(lv["a"], p)), values


def _case_exp(rng):
    values = {"a": rng.uniform(-2.0, 2.0, size=(3, 3))}
    f = _functional(rng, (3, 3))
    return lambda tape, lv: f(ad.exp(lv["a"])), values


def _case_log(rng):
    values = {"a": rng.uniform(0.3, 3.0, size=(3, 3))}
    f = _functional(rng, (3, 3))
    return lambda tape, lv: f(ad.log(lv["a"])), values


def _case_sigmoid(rng):
    values = {"a": rng.uniform(-4.0, 4.0, size=(3, 3))}
    f = _functional(rng, (3, 3))
    return lambda tape, lv: f(ad.sigmoid(lv["a"])), values


def _case_relu(rng):
    a = rng.uniform(0.05, 2.0, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4))
    f = _functional(rng, (3, 4))
    return lambda tape, lv: f(ad.relu(lv["a"])), {"a": a}


def _case_row_softmax(rng):
    values = {"a": rng.normal(size=(3, 4))}
    f = _functional(rng, (3, 4))
    return lambda tape, lv: f(ad.row_softmax(lv["a"])), values


def _case_mean(rng):
    return lambda tape, lv: ad.mean(lv["a"]), {"a": rng.normal(size=(4, 3))}


def _case_sum(rng):
    return lambda tape, lv: ad.sum_all(lv["a"]), {"a": rng.normal(size=(4, 3))}


def _case_concat_cols(rng):
    values = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=(3, 3))}
    f = _functional(rng, (3, 5))
    return lambda tape, lv: f(ad.concat_cols(lv["a"], lv["b"])), values


def _case_dropout(rng):
    rate = float(rng.choice([0.3, 0.5]))
    seed = int(rng.integers(2**31))
    values = {"a": rng.normal(size=(4, 3))}
    f = _functional(rng, (4, 3))

    def build(tape, lv):
        return f(ad.dropout(lv["a"], rate, np.random.default_rng(seed)))

    return build, values


def _case_rbf_gram(rng):
    bw = float(rng.uniform(0.5, 2.0))
    values = {"a": rng.normal(size=(4, 3))}
    f = _functional(rng, (4, 4))
    return lambda tape, lv: f(ad.rbf_gram(lv["a"], bw)), values


def _case_center_gram(rng):
    values = {"k": rng.normal(size=(4, 4))}
    f = _functional(rng, (4, 4))
    return lambda tape, lv: f(ad.center_gram(lv["k"])), values


def _case_trace(rng):
    return lambda tape, lv: ad.trace(lv["k"]), {"k": rng.normal(size=(4, 4))}


def _case_take_rows(rng):
    idx = rng.integers(0, 5, size=4)  # duplicates exercise accumulation
    values = {"a": rng.normal(size=(5, 3))}
    f = _functional(rng, (4, 3))
    return lambda tape, lv: f(ad.take_rows(lv["a"], idx)), values


def _case_segment_mean(rng):
    seg = np.array([0, 0, 1, 1, 2, 2])
    values = {"a": rng.normal(size=(6, 3))}
    f = _functional(rng, (3, 3))
    return lambda tape, lv: f(ad.segment_mean_rows(lv["a"], seg, 3)), values


def _case_pick_class(rng):
    y = rng.integers(0, 3, size=4)
    values = {"a": rng.normal(size=(4, 3))}
    f = _functional(rng, (4, 1))
    return lambda tape, lv: f(ad.pick_class(ad.row_softmax(lv["a"]), y)), values


def _case_permute_rows(rng):
    perm = rng.permutation(5)
    values = {"a": rng.normal(size=(5, 3))}
    f = _functional(rng, (5, 3))
    return lambda tape, lv: f(ad.permute_rows(lv["a"], perm)), values


_PLAN_EDGES = np.array([[0, 1], [1, 2], [2, 3], [3, 4], [0, 2]])


def _case_masked_propagate(rng):
    plan = ad.PropagationPlan.from_edges(_PLAN_EDGES, 5)
    values = {
        "f": rng.normal(size=(5, 2)),
        "w": rng.uniform(0.1, 0.9, size=(5, 1)),
    }
    f = _functional(rng, (5, 2))
    return lambda tape, lv: f(ad.masked_propagate(lv["f"], lv["w"], plan)), values


def _case_masked_propagate_unweighted(rng):
    plan = ad.PropagationPlan.from_edges(_PLAN_EDGES, 5)
    values = {"f": rng.normal(size=(5, 2))}
    f = _functional(rng, (5, 2))
    return lambda tape, lv: f(ad.masked_propagate(lv["f"], None, plan)), values


def _case_composite(rng):
    """A deeper chain mixing several primitives into one scalar."""
    y = rng.integers(0, 2, size=3)
    values = {
        "a": rng.normal(size=(3, 4)),
        "w1": rng.normal(size=(4, 5)) * 0.7,
        "w2": rng.normal(size=(5, 2)) * 0.7,
    }

    def build(tape, lv):
        h = ad.sigmoid(ad.matmul(lv["a"], lv["w1"]))
        logits = ad.matmul(h, lv["w2"])
        p = ad.pick_class(ad.row_softmax(logits), y)
        return ad.multiply(ad.mean(ad.log(p)), -1.0)

    return build, values


PRIMITIVE_CASES = {
    "matmul": _case_matmul,
    "add": _case_add,
    "subtract": _case_subtract,
    "multiply": _case_multiply,
    "scalar_power": _case_scalar_power,
    "exp": _case_exp,
    "log": _case_log,
    "sigmoid": _case_sigmoid,
    "relu": _case_relu,
    "row_softmax": _case_row_softmax,
    "mean": _case_mean,
    "sum": _case_sum,
    "concat_cols": _case_concat_cols,
    "dropout": _case_dropout,
    "rbf_gram": _case_rbf_gram,
    "center_gram": _case_center_gram,
    "trace": _case_trace,
    "take_rows": _case_take_rows,
    "segment_mean_rows": _case_segment_mean,
    "pick_class": _case_pick_class,
    "permute_rows": _case_permute_rows,
    "masked_propagate": _case_masked_propagate,
    "masked_propagate_unweighted": _case_masked_propagate_unweighted,
    "composite": _case_composite,
}
