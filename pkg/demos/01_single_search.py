"""Walk through one latency-constrained search on the MobileNetV3-like space."""

# %%
from ofa_multitarget import AccuracyModel, SearchParams, brute_force_best, evolutionary_search, get_space
from ofa_multitarget.estimators import default_latency_model

space = get_space("mobilenetv3")
lat = default_latency_model(space)  # synthesized table, maximal config calibrated to 60 ms
acc = AccuracyModel()

print(space.name, "configs:", space.total_configs())
print("latency range: %.2f .. %.2f ms" % (lat.latency(space.minimal_config()), lat.latency(space.maximal_config())))

# %% one search under a 30 ms budget
out = evolutionary_search(space, lat, acc, 30.0, SearchParams(num_iterations=100), rng=0, record_log=True)
best = out.best
print("best accuracy %.4f at %.2f ms" % (best.accuracy, best.latency))
print("depths", best.config.depths, "resolution", best.config.resolution)
print("evaluations", out.evaluations, "rejected candidates", out.rejections)

# elitism: the best-so-far curve never goes down
curve = [row["best_accuracy"] for row in out.log]
print("first / last best:", round(curve[0], 4), round(curve[-1], 4))

# %% on the tiny fixture the search can be checked against exhaustive enumeration
tiny = get_space("tiny-fixture")
tiny_lat = default_latency_model(tiny)
for target in (4.0, 6.0, 8.0):
    found = evolutionary_search(tiny, tiny_lat, acc, target, SearchParams(16, 50), rng=1).best
    oracle = brute_force_best(tiny, tiny_lat, acc, target)
    print(target, "ms:", "matches oracle" if found.config == oracle.best_config else "differs from oracle")
