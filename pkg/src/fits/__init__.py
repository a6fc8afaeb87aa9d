"""Field test scenario toolkit: DSL, compiler, mission engine, analysis."""

__version__ = "0.1.0"
