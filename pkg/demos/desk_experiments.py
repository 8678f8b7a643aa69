"""The three desk-scale experiments: material classification, shape completion, re-ID.

    python3 demos/desk_experiments.py material --seeds 0 1 2
    python3 demos/desk_experiments.py shape --seeds 0
    python3 demos/desk_experiments.py reid

Each takes minutes on one CPU core.
"""

import argparse
import json
import logging
import time

from tapsense import experiments as ex

BUILD = {"material": ex.build_material_objects, "shape": ex.build_shape_objects, "reid": ex.build_reid_objects}
RUN = {"material": ex.run_material, "shape": ex.run_shape, "reid": ex.run_reid}

parser = argparse.ArgumentParser()
parser.add_argument("task", choices=sorted(BUILD))
parser.add_argument("--seeds", type=int, nargs="+", default=[0])
args = parser.parse_args()
logging.basicConfig(level=logging.INFO, format="%(message)s")

t = time.time()
objects = BUILD[args.task]()
print(f"built {len(objects)} objects in {time.time() - t:.0f} s")
for seed in args.seeds:
    t = time.time()
    result = RUN[args.task](objects, seed)
    result = {k: v for k, v in result.items() if k not in ("pred", "truth")}
    print(json.dumps(result), f"({time.time() - t:.0f} s)")
