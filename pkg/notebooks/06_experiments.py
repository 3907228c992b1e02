# # Experiments from config files
#
# An experiment is a JSON config: target, flow, initialization, metric
# cadence, output location and seed. Bundled presets cover the mixture target,
# logistic regression and a small Bayesian network.

import json
import tempfile
from pathlib import Path

from vpflow import load_config, run_experiment
from vpflow.harness import preset_names

preset_names()

# ## A preset, shortened

cfg = load_config("bnn-synthetic")
print(json.dumps(cfg.to_dict()["flow"], indent=1))

out = Path(tempfile.mkdtemp())
records = run_experiment(cfg.with_changes(**{"flow.iterations": 200}), output_dir=out)
for r in records:
    print(r.iteration, round(r.elbo_neg_estimate, 3), round(r.predictive_loss, 4))

# The run wrote a CSV of records and a JSON summary next to it.

print((out / "records.csv").read_text().splitlines()[:3])
print(sorted(json.loads((out / "summary.json").read_text())))

# ## Sweeps
#
# ``with_changes`` takes dotted keys, which is all a sweep needs. The command
# line offers the same through ``vpflow sweep gmm --vary K=1,3,10``.

base = load_config("gmm").with_changes(**{"metrics.every": 500, "metrics.elbo_samples": 2000})
for K in (1, 3, 10):
    recs = run_experiment(base.with_changes(**{"init.K": K}), write=False)
    print(K, round(recs[-1].kl_estimate, 3))
