"""Built-in experiment configurations.

``paper-*`` presets mirror the full-size MNIST experiment matrix (long runs,
need the IDX files); ``desk-*`` presets are the reduced versions used by the
acceptance suite.
"""
from __future__ import annotations

import os

# the ring(10) schedule used for every distributed run
PAPER_SCHEDULE = dict(a=0.1, b=0.2525, delta1=0.1, delta2=1.0, epsilon=1e-5)
CENTRALIZED_SCHEDULE = dict(a=0.001, b=None, delta1=0.1, delta2=1.0, epsilon=1e-5)
PER_PARAMETER_UPSILON = dict(mode="per_parameter", value=0.2)


def mnist_dir() -> str:
    return os.environ.get("DETSGRAD_MNIST_DIR", "data/mnist")


def _mnist(partition, **extra):
    d = mnist_dir()
    return dict(kind="dataset", source="idx",
                images=f"{d}/train-images-idx3-ubyte", labels=f"{d}/train-labels-idx1-ubyte",
                test_images=f"{d}/t10k-images-idx3-ubyte", test_labels=f"{d}/t10k-labels-idx1-ubyte",
                partition=partition, hidden=[64, 32], activation="relu", **extra)


def _matrix(prefix, problem_r, problem_s, iters_r, iters_s, warmup_s, central_iters, cadence):
    base = dict(topology="ring(10)", cadence=cadence)
    out = {
        f"{prefix}-centralized": dict(base, algorithm="centralized_sgd", schedule=CENTRALIZED_SCHEDULE,
                                      problem=problem_r, max_iterations=central_iters),
        f"{prefix}-dist-sgd-r": dict(base, algorithm="dist_sgd_continuous", schedule=PAPER_SCHEDULE,
                                     problem=problem_r, max_iterations=iters_r),
        f"{prefix}-dist-sgd-s": dict(base, algorithm="dist_sgd_continuous", schedule=PAPER_SCHEDULE,
                                     problem=problem_s, max_iterations=iters_s),
        f"{prefix}-detsgrad-r": dict(base, algorithm="detsgrad", schedule=PAPER_SCHEDULE,
                                     upsilon0=PER_PARAMETER_UPSILON, problem=problem_r,
                                     max_iterations=iters_r),
        f"{prefix}-detsgrad-s": dict(base, algorithm="detsgrad",
                                     schedule=dict(PAPER_SCHEDULE, warmup=warmup_s),
                                     upsilon0=PER_PARAMETER_UPSILON, problem=problem_s,
                                     max_iterations=iters_s),
    }
    return out


def _build():
    p = {}
    # full size: 40 epochs at one sample per iteration, 4 warm-up epochs for single-class
    p.update(_matrix("paper-ring10", _mnist("random_iid", per_agent_count=6000), _mnist("single_class"),
                     240000, 216840, 21684, 600000, 1000))
    # desk size: 5000-image training subset, 20k iterations
    p.update(_matrix("desk-mnist", _mnist("random_iid", train_subset=5000), _mnist("single_class", train_subset=5000),
                     20000, 20000, 2000, 20000, 100))
    digits_r = dict(kind="dataset", source="digits", partition="random_iid", hidden=[64, 32])
    digits_s = dict(digits_r, partition="single_class")
    p.update(_matrix("desk-digits", digits_r, digits_s, 20000, 20000, 2000, 20000, 100))
    quartic = dict(kind="synthetic", name="quartic-saddle", dim=10, samples_per_agent=64)
    p["desk-quartic-detsgrad"] = dict(topology="ring(10)", algorithm="detsgrad", schedule=PAPER_SCHEDULE,
                                      problem=quartic, upsilon0=PER_PARAMETER_UPSILON,
                                      max_iterations=20000, cadence=100)
    p["desk-quartic-dist-sgd"] = dict(p["desk-quartic-detsgrad"], algorithm="dist_sgd_continuous")
    p["desk-quartic-decay"] = dict(p["desk-quartic-detsgrad"],
                                   schedule=dict(PAPER_SCHEDULE, epsilon=1.0), max_iterations=100000)
    return p


def presets() -> dict[str, dict]:
    """Name -> plain-dict SimConfig fields (rebuilt on each call so env changes apply)."""
    return _build()


def preset_names() -> list[str]:
    return sorted(_build())
