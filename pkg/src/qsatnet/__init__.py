"""Deterministic desk-scale simulator for a three-tier satellite-terrestrial
quantum network: optical link budgets, entanglement-distillation rate
surfaces, a coordinated distribution protocol, and a hybrid
classical-quantum packet format."""

__version__ = "0.1.0"
