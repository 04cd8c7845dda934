"""Render analysis CSVs from the fqb toolkit into PNG figures.

Four figure kinds, one per file in an analysis bundle's attribute directory:

* ``erc``            line plot of FNMR against the reject ratio
* ``proportions``    stacked subgroup shares over quality-threshold quantiles
* ``distributions``  overlaid per-subgroup quality histograms
* ``fnmr``           per-subgroup FNMR bars at each FMR target

This package only reads the documented CSV schemas; it never imports the
analysis code that produced them.
"""

from .render import FigureSpec, SchemaError, render

__version__ = "0.1.0"

__all__ = ["FigureSpec", "SchemaError", "render"]
