"""Figures written by the command-line runner (matplotlib, non-interactive backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .rb import rb_decay  # noqa: E402

# fixed metadata keeps SVG output stable between runs
_SVG_META = {"Date": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, metadata=_SVG_META)
    plt.close(fig)


def plot_chevron(cmap, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    extent = [cmap.durations[0] * 1e9, cmap.durations[-1] * 1e9,
              cmap.detunings[0] / 1e6, cmap.detunings[-1] / 1e6]
    im = ax.imshow(cmap.population, aspect="auto", origin="lower", extent=extent, vmin=0, vmax=1, cmap="viridis")
    fig.colorbar(im, ax=ax, label="transfer population")
    ax.set_xlabel("pulse length (ns)")
    ax.set_ylabel("drive detuning (MHz)")
    ax.set_title(f"{cmap.gate} chevron")
    _save(fig, path)


def plot_phase_scan(scan, gfit, path) -> None:
    d = np.array([s[0] for s in scan])
    phi = np.mod(np.array([s[2] for s in scan]), 2 * np.pi)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(d / 1e3, phi, "o", label="measured")
    if gfit is not None:
        grid = np.linspace(d.min(), d.max(), 200)
        ax.plot(grid / 1e3, np.mod(gfit(grid), 2 * np.pi), "-", label="geometric fit")
    ax.axhline(np.pi, color="0.6", lw=0.8, ls="--")
    ax.set_xlabel("detuning (kHz)")
    ax.set_ylabel("controlled phase (rad)")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_rb(result, path, purity=None) -> None:
    m = np.array(result.lengths, dtype=float)
    grid = np.linspace(0, m.max(), 200)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    series = [("reference", result.fidelities, result.fit)]
    if result.interleaved_fidelities is not None:
        series.append(("interleaved", result.interleaved_fidelities, result.interleaved_fit))
    for label, data, fit in series:
        line = ax.errorbar(m, data.mean(axis=1), yerr=data.std(axis=1), fmt="o", ms=4, capsize=2, label=label)
        ax.plot(grid, rb_decay(grid, fit.a, fit.p, fit.b), color=line[0].get_color(), lw=1)
    if purity is not None:
        ax.plot(m, purity.purities.mean(axis=1), "s", ms=3, label="purity")
    ax.set_xlabel("number of Cliffords m")
    ax.set_ylabel("sequence fidelity")
    ax.set_title(f"EPG = {result.epg:.4f}")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_histograms(hists, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for h in hists:
        centers = 0.5 * (h.edges[1:] + h.edges[:-1])
        ax.step(centers, h.counts, where="mid", label=f"m = {h.m} (std {h.std:.3g})")
    ax.set_xlabel("sequence fidelity")
    ax.set_ylabel("counts")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_sweep(parameter: str, unit: str, xs, epgs, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(xs, epgs, "o-")
    ax.set_xlabel(f"{parameter} ({unit})")
    ax.set_ylabel("error per gate")
    _save(fig, path)
