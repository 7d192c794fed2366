"""Vanilla, top-down and bottom-up on ten latency targets: cost and accuracy."""

# %%
from ofa_multitarget import AccuracyModel, MultiTargetPlan, StrategyKind, get_space, run_strategy
from ofa_multitarget.estimators import default_latency_model

space = get_space("mobilenetv3")
lat = default_latency_model(space)
acc = AccuracyModel()
targets = tuple(float(t) for t in range(15, 61, 5))

# vanilla spends 500 iterations per target; the warm strategies spend 500 on the
# first target they process and 63 on each later one
plan = MultiTargetPlan(targets, n_first=500, n_rest=63, seed=0)
print("iteration budgets:", plan.vanilla_iteration_budget(), "vs", plan.warm_iteration_budget())

# %%
outs = {kind: run_strategy(kind, plan, space, lat, acc) for kind in StrategyKind}
base = outs[StrategyKind.VANILLA].total_evaluations
for kind, out in outs.items():
    print(f"{kind.value:>10}: {out.total_evaluations:6d} evaluations ({out.total_evaluations / base:.3f} of vanilla),"
          f" {out.total_wall_time:.1f} s, order {out.order_processed[:3]}...")

# %% per-target accuracy, one seed (the bench module averages over repetitions)
print("target  vanilla  top-down  bottom-up")
for t in targets:
    row = [outs[k].per_target[t].best.accuracy for k in StrategyKind]
    print(f"{t:6.0f}  " + "  ".join(f"{a:.4f}" for a in row))
