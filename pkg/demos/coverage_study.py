"""A small coverage study: how often does the 95% interval contain the truth?"""
from ldpquant import build_pivot_table
from ldpquant.distributions import cauchy, normal
from ldpquant.experiments import ExperimentConfig, coverage_experiment, write_csv

pivot = build_pivot_table(alphas=[0.05], paths=20_000, grid_steps=1000)

for dist in (normal(), cauchy()):
    config = ExperimentConfig(distribution=dist, taus=(0.3, 0.8), rs=(0.5, 0.9), ns=(20_000,),
                              reps=200, seed=5)
    print(write_csv(coverage_experiment(config, pivot), "coverage"))
