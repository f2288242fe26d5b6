"""Figure rendering for wgf experiment CSV artifacts."""

__version__ = "0.1.0"

from wgf_plot.render import FigureKind, FigureSpec, RenderResult, render  # noqa: F401
from wgf_plot.schemas import SchemaError  # noqa: F401
