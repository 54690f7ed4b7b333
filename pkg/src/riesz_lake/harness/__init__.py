"""Scenario configs, runs, sweeps, Grönwall fits and the CLI."""
from .config import evaluate_rule, load_config, normalize
from .gronwall import fit_gronwall
from .runner import RunResult, read_diagnostics_csv, run_scenario
from .sweep import scaling_sweep

__all__ = ["evaluate_rule", "load_config", "normalize", "fit_gronwall", "RunResult", "read_diagnostics_csv", "run_scenario", "scaling_sweep"]
