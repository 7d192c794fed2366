"""Tighter latency targets reject more candidates, so each search costs more."""

# %%
import statistics

from ofa_multitarget import AccuracyModel, SearchParams, derive_seed, evolutionary_search, get_space
from ofa_multitarget.estimators import default_latency_model

space = get_space("proxylessnas")
lat = default_latency_model(space)
params = SearchParams(num_iterations=50)

# %% mean rejections over five seeds per target
for target in (15.0, 25.0, 40.0, 60.0):
    outs = [evolutionary_search(space, lat, AccuracyModel(), target, params, rng=derive_seed(0, r)) for r in range(5)]
    rej = statistics.fmean(o.rejections for o in outs)
    secs = statistics.fmean(o.wall_time for o in outs)
    print(f"{target:5.0f} ms: {rej:9.1f} rejections, {secs:.2f} s per search")

# at 60 ms every config fits, so nothing is ever rejected
