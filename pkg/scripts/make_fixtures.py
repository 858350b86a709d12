"""Regenerate the frozen test fixtures under tests/fixtures.

* bh_positive.json: an in-box B&H vector whose simulated returns pass the KS
  criterion against the bundled reference file, with its p-value.
* explore_model.json / explore_pool.csv / explore_expected.csv: a small
  synthetic-model surrogate, a fixed pool and the ``explore`` output for it.
"""
import json
import sys
from pathlib import Path

from abmsurrogate.active import LoopConfig, run_calibration
from abmsurrogate.cli import main
from abmsurrogate.labelers import BHLabeler, SyntheticLabeler
from abmsurrogate.sampling import draw_pool, write_pool_csv

OUT = Path(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures")
OUT.mkdir(parents=True, exist_ok=True)

lab = BHLabeler(kind_="real")
for v in draw_pool(lab.space, 200, "sobol", 2024):
    p = lab.safe_label(v)
    if p > 0.3:
        doc = {"names": lab.space.names, "vector": [float(x) for x in v], "noise": lab.noise,
               "abm_seed": lab.abm_seed, "p_value": p}
        (OUT / "bh_positive.json").write_text(json.dumps(doc, indent=1) + "\n")
        break

syn = SyntheticLabeler(rate=0.05, dimension=3)
run = run_calibration(syn, LoopConfig(budget=120, n_seed=35, pool_size=2000, hpo_trials=12,
                                      hpo_trials_late=6, sampler_seed=3, surrogate_seed=3))
run.model.save(OUT / "explore_model.json")
write_pool_csv(OUT / "explore_pool.csv", draw_pool(syn.space, 300, "uniform", 17), syn.space)
main(["explore", "--model", str(OUT / "explore_model.json"), "--pool", str(OUT / "explore_pool.csv"),
      "--out", str(OUT / "explore_expected.csv")])
