"""Figures for the ``report`` command, written next to the tabular output."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "svg.hashsalt": "codedlab",
}


def _gc(ax, data):
    errs = np.asarray(data["errors"])
    ax.plot(np.arange(errs.size), errs, "o", ms=3)
    ax.set_xlabel("straggler set")
    ax.set_ylabel("decoding error")
    if errs.size and errs.max() > 0:
        ax.set_yscale("symlog", linthresh=1e-16)


def _cmm(ax, data):
    errs = np.asarray(data["errors"])
    ax.plot(np.arange(errs.size), errs, "o-", ms=3)
    ax.set_xlabel("trial")
    ax.set_ylabel("relative error")


def _sketch(ax, data):
    q = np.asarray(data["q"], dtype=float)
    med = np.asarray(data["median"])
    positive = med > 0
    ax.loglog(q[positive], med[positive], "o-", label="median error")
    if positive.any():
        ref = med[positive][0] * np.sqrt(q[positive][0] / q[positive])
        ax.loglog(q[positive], ref, "--", color="gray", label=r"$1/\sqrt{q}$")
    ax.set_xlabel("sketch size q")
    ax.set_ylabel("relative AMM error")
    ax.legend()


def _descend(ax, data):
    losses = np.asarray(data["losses"])
    ax.semilogy(np.arange(losses.size), losses, label="loss")
    ax.axhline(data["optimal"], color="gray", ls="--", label="optimum")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend()


PLOTTERS = {"gc": _gc, "cmm": _cmm, "sketch": _sketch, "descend": _descend}


def render(experiment: str, data: dict, path, title: str = ""):
    """Write one PNG; metadata is pinned so identical data gives identical bytes."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        PLOTTERS[experiment](ax, data)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        try:
            fig.savefig(path, format="png", metadata={"Software": None})
        finally:
            plt.close(fig)
