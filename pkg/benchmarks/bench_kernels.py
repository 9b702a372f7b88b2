"""Compiled vs pure-numpy kernels.

Each configuration runs in a fresh interpreter, once with numba and once with
CSSPA_NO_JIT=1, and reports wall time per iteration plus the largest
difference between the two averaged iterates.

    python benchmarks/bench_kernels.py [--horizon 20000] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from csspa import JIT_ENABLED, Schedule, build_quadratic_problem, run
from csspa.fair_spam import SpamSyntheticSpec, build_spam_problem, generate_spam_synthetic
from csspa.fair_classification import FairClfConfig, build_fair_clf_problem, generate_two_group

case, horizon, repeat = sys.argv[1], int(sys.argv[2]), int(sys.argv[3])
if case == "quadratic":
    problem = build_quadratic_problem(noise_std=0.1)
    schedule = Schedule(horizon=horizon, delta_scale=1e-4)
elif case == "fair_clf":
    problem = build_fair_clf_problem(generate_two_group(), FairClfConfig(tau=0.2, c=5.5))
    schedule = Schedule(horizon=horizon, delta_scale=1e-4)
else:
    data = generate_spam_synthetic(SpamSyntheticSpec(n_points=500, d_features=10))
    problem = build_spam_problem(data)
    schedule = Schedule(horizon=horizon, alpha0=0.01, delta_scale=1e-4)

start = time.perf_counter()
run(problem.with_seed(0), Schedule(horizon=10, alpha0=schedule.alpha0, delta_scale=1e-4))
warmup = time.perf_counter() - start
times = []
for _ in range(repeat):
    start = time.perf_counter()
    x_hat, _, _ = run(problem.with_seed(0), schedule, trace_stride=horizon)
    times.append(time.perf_counter() - start)
print(json.dumps({"jit": JIT_ENABLED, "warmup": warmup, "best": min(times),
                  "x_hat": x_hat.tolist()}))
"""


def measure(case, horizon, repeat, no_jit):
    env = dict(os.environ, CSSPA_NO_JIT="1" if no_jit else "0")
    out = subprocess.run([sys.executable, "-c", WORKER, case, str(horizon), str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--horizon", type=int, default=20000)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--cases", default="quadratic,fair_clf,fair_spam")
    args = parser.parse_args()

    print(f"{'case':<10} {'numba us/it':>12} {'numpy us/it':>12} {'speedup':>8} "
          f"{'compile s':>10} {'max |dx|':>10}")
    for case in args.cases.split(","):
        fast = measure(case, args.horizon, args.repeat, no_jit=False)
        slow = measure(case, args.horizon, args.repeat, no_jit=True)
        diff = max(abs(a - b) for a, b in zip(fast["x_hat"], slow["x_hat"]))
        per_fast = 1e6 * fast["best"] / args.horizon
        per_slow = 1e6 * slow["best"] / args.horizon
        print(f"{case:<10} {per_fast:12.2f} {per_slow:12.2f} {per_slow / per_fast:8.1f} "
              f"{fast['warmup']:10.2f} {diff:10.2e}")


if __name__ == "__main__":
    main()
