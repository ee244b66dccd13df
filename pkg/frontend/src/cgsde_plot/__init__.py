"""CSV-driven figure rendering for the cgsde workbench."""

__version__ = "0.1.0"

from .render import KINDS, PlotSpec, RenderResult, SchemaError, render

__all__ = ["KINDS", "PlotSpec", "RenderResult", "SchemaError", "render"]
