"""uowplots: figure rendering for uowlab sweep CSV outputs."""

__version__ = "0.1.0"

from .figures import (
    FIGURE_IDS,
    FigureDataError,
    FigureSpec,
    MissingColumnsError,
    build_figure,
    default_csv_name,
    read_table,
    render,
    render_directory,
)

__all__ = [
    "__version__",
    "FIGURE_IDS", "FigureDataError", "FigureSpec", "MissingColumnsError",
    "build_figure", "default_csv_name", "read_table", "render",
    "render_directory",
]
