# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib import image as mpimg
from matplotlib.figure import Figure


class Visuals:
    """
    Figures and images written by experiments.

    Everything is drawn on detached :py:class:`matplotlib.figure.Figure`
    objects and saved to ``img_dir``, so no display is needed.
    """

    _heat = matplotlib.colormaps["viridis"].copy()
    _heat.set_bad(color=(0.85, 0.85, 0.85, 1.0))

    def __init__(self, img_dir=None, img_base="multifix", img_fmt="png"):
        """
        Parameters
        ----------
        img_dir: str or Path, optional
            Output directory; nothing is written without it.
        img_base: str
            File name prefix of the figures.
        img_fmt: str
        """
        self._img_dir = img_dir
        self._img_base = img_base
        self._img_fmt = img_fmt

    def is_enabled(self):
        return self._img_dir is not None

    def _path(self, name):
        directory = Path(self._img_dir)
        directory.mkdir(parents=True, exist_ok=True)
        return directory / f"{self._img_base}_{name}.{self._img_fmt}"

    def result_matrix(self, result, title="Balanced accuracy"):
        """
        Degradation sweep as an annotated matrix of mean ± std BAcc.

        Cells without a report are greyed out.

        Returns
        -------
        Figure
        """
        mean = np.ma.masked_invalid(result.mean_matrix())
        std = result.std_matrix()
        figure = Figure(figsize=(1.1 * mean.shape[1] + 2, 0.8 * mean.shape[0] + 1.5),
                        constrained_layout=True)
        ax = figure.subplots()
        image = ax.imshow(mean, cmap=self._heat, vmin=0.0, vmax=1.0)
        figure.colorbar(image, ax=ax, orientation="vertical", location="right")
        ax.set_xticks(np.arange(mean.shape[1]), labels=result.col_labels)
        ax.set_yticks(np.arange(mean.shape[0]), labels=result.row_labels)
        ax.set_xlabel("tabular sigma")
        ax.set_ylabel("image resolution")
        ax.set_title(title)
        for (row, col), value in np.ndenumerate(mean.filled(np.nan)):
            if np.isfinite(value):
                ax.annotate(f"{value:.2f}\n±{std[row, col]:.2f}", (col, row), ha="center",
                            va="center", size=7, color="white" if value < 0.6 else "black")
        if self.is_enabled():
            figure.savefig(self._path("matrix"))
        return figure

    def history(self, histories, title="Loss"):
        """
        Train and validation loss per epoch, one line pair per history.

        Parameters
        ----------
        histories: list of TrainingHistory
        """
        figure = Figure(figsize=(6, 4), constrained_layout=True)
        ax = figure.subplots()
        ax.set_facecolor("antiquewhite")
        for i, history in enumerate(histories):
            epochs = np.arange(1, len(history.train_loss) + 1)
            line = ax.plot(epochs, history.train_loss, linestyle="-", label=f"fold {i} train")[0]
            ax.plot(epochs, history.val_loss, linestyle="--", color=line.get_color(),
                    label=f"fold {i} val")
        ax.set_xlabel("epoch")
        ax.set_ylabel("cross-entropy")
        ax.set_title(title)
        ax.legend(fontsize=7)
        if self.is_enabled():
            figure.savefig(self._path("history"))
        return figure


def heatmap_image(heatmap):
    """Grayscale (H, W, 3) rendering of a heatmap."""
    values = np.clip(heatmap.values, 0.0, 1.0)
    return np.repeat(values[:, :, None], 3, axis=2)


def overlay_image(image, heatmap, alpha=0.6):
    """The input image darkened, with the heat added to the red channel."""
    pixels = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * (1.0 - alpha)
    pixels[:, :, 0] = np.clip(pixels[:, :, 0] + alpha * heatmap.values, 0.0, 1.0)
    return pixels


def save_png(path, pixels):
    mpimg.imsave(path, np.clip(pixels, 0.0, 1.0), format="png", metadata={"Software": None})
