"""Fit a Boltzmann machine to imperfect initial-state statistics.

Synthetic data are generated from a known model and dressed by the
detection error channel; the fit recovers the dressed one- and two-point
statistics.
"""
from _common import shipped
from rydberg_tj.initmodel import EmpiricalData, FitSettings, dressed_expectations, fit
from rydberg_tj.measurement import ErrorChannel
from rydberg_tj.runner import synthetic_model

cfg = shipped("initmodel_roundtrip.json")
region = tuple(cfg.block("initmodel")["region"])
truth = synthetic_model(cfg.geometry.n_sites, region, cfg.initial_config, cfg.seed("synthetic"))
ch = ErrorChannel()
data = EmpiricalData.from_model(truth, ch)
res = fit(data, FitSettings(seed=cfg.seed("fit")), ch, n_sites=cfg.geometry.n_sites)
d = dressed_expectations(res.model, ch)
print("cost vs truth:", f"{res.cost_true:.2e}")
print("max one-point error:", f"{abs(d['one'] - data.one).max():.1e}")
print("max two-point error:", f"{abs(d['two'] - data.two).max():.1e}")
