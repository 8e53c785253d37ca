"""repairkit: tooling for generate-and-validate program repair on Python projects."""

__version__ = "0.1.0"
