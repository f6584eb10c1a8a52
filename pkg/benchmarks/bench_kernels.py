#!/usr/bin/env python3
"""Compare the compiled kernel extension against the pure-numpy fallback.

Same measurement the `tripletplan bench` CLI verb prints; kept as a script
so the numbers are easy to grab in CI logs.
"""

import argparse

from tripletplan.cli import run_bench

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()
    print(run_bench(args.repeats))
