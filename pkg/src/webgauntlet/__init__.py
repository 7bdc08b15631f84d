"""webgauntlet: a deterministic headless web environment for stress-testing web agents.

The package simulates small declarative task websites, applies seeded
perturbations to what the agent perceives and to how its actions land,
evaluates multi-checkpoint tasks against ground-truth state, and reports
robustness metrics across perturbation modes.
"""

__version__ = "0.1.0"
