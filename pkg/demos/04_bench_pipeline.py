"""The benchmark pipeline on a small config: sweep, aggregate, emit."""

# %%
import tempfile
from dataclasses import replace
from pathlib import Path

from ofa_multitarget.bench import ExperimentConfig, emit_report, run_bench

cfg = ExperimentConfig.load(Path(__file__).resolve().parents[1] / "configs" / "smoke.json")
report = run_bench(replace(cfg, output_dir=None, jobs=1))

# %% cost ratio per k and the sign test behind the rejection/target correlation
print(report.cost_ratios("tiny-fixture"))
for test in report.tests:
    print(test["space"], "p =", test["p_value"], "significant:", test["significant"])

out_dir = Path(tempfile.mkdtemp())
for path in emit_report(report, out_dir):
    print(path.name)
print(out_dir.joinpath("table_accuracy_tiny-fixture.csv").read_text())
