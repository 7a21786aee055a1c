"""
Optional figure files for the CLI (--plot).

One PNG next to each CSV; matplotlib runs on the Agg backend so no display is needed.
"""

import logging
import os
from typing import Dict, Sequence

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)


def line_plot(path: str, x: Sequence[float], curves: Dict[str, Sequence[float]], xlabel: str, ylabel: str,
              logy: bool = False, vline: float = None) -> str:
    """
    Save a line plot of several curves against a shared x axis.

    Args:
        path: CSV path; the figure goes to the same name with .png
        x: abscissa
        curves: label -> ordinate
        logy: logarithmic y axis
        vline: optional vertical marker (beta/beta_c = 1)

    Returns:
        str: figure path
    """
    figure_path = os.path.splitext(path)[0] + '.png'
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        for label, y in curves.items():
            ax.plot(x, y, label=label)
        if vline is not None:
            ax.axvline(vline, color='grey', linestyle='--', linewidth=0.8)
        if logy:
            ax.set_yscale('log')
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()
        fig.tight_layout()
        fig.savefig(figure_path, dpi=120)
    finally:
        plt.close(fig)
    logger.info(f"Saved figure {figure_path}")
    return figure_path
