"""
Rendering module.

Draws deterministic synthetic UI frames for generated traces (Pillow) and
plots learned execution graphs with essential and optional states marked
(matplotlib).
"""

import hashlib
import logging
import random
from collections import deque
from typing import Dict, List, Optional, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from PIL import Image, ImageDraw  # noqa: E402

from .graph_learn import LearnedModel  # noqa: E402
from .utils import PathLike, ensure_output_directory  # noqa: E402

logger = logging.getLogger(__name__)

RGB = Tuple[int, int, int]


class FrameRenderer:
    """Renders one synthetic screenshot per logical UI state."""

    # Background colours; any two differ by far more than the pixel delta.
    PALETTE: List[RGB] = [
        (32, 64, 160),    # blue
        (200, 60, 40),    # red
        (40, 150, 70),    # green
        (230, 200, 40),   # yellow
        (120, 40, 150),   # purple
        (30, 160, 170),   # teal
        (240, 140, 30),   # orange
        (90, 90, 90),     # grey
        (220, 110, 180),  # pink
        (140, 100, 40),   # brown
        (20, 20, 30),     # near black
        (235, 235, 240),  # near white
        (100, 180, 230),  # sky
        (170, 200, 60),   # lime
        (110, 30, 50),    # maroon
        (60, 110, 100),   # slate
    ]

    def __init__(self, width: int = 160, height: int = 120):
        """
        Initialize the renderer.

        Args:
            width: Frame width in pixels
            height: Frame height in pixels
        """
        self.width = width
        self.height = height
        self.title_height = 16
        self.patch_size = 3

    @staticmethod
    def _stable_seed(text: str) -> int:
        return int(hashlib.sha256(text.encode("utf-8")).hexdigest()[:8], 16)

    def colour_for(self, palette_index: int) -> RGB:
        return self.PALETTE[palette_index % len(self.PALETTE)]

    def render(self, name: str, palette_index: int, jitter: int = 0) -> Image.Image:
        """
        Draw the frame for a state.

        Args:
            name: State name; drives the layout and is printed in the title bar
            palette_index: Background colour slot
            jitter: Cosmetic variant; 0 is the clean frame, other values nudge
                a small corner patch by less than the pixel-change delta

        Returns:
            RGB image
        """
        background = self.colour_for(palette_index)
        img = Image.new("RGB", (self.width, self.height), background)
        draw = ImageDraw.Draw(img)

        bar = tuple(max(0, c - 60) for c in background)
        draw.rectangle([0, 0, self.width - 1, self.title_height - 1], fill=bar)
        draw.text((4, 2), name, fill=(255, 255, 255))

        # layout blocks seeded by the state name so each state has its own structure
        rng = random.Random(self._stable_seed(name))
        for _ in range(4):
            x0 = rng.randrange(4, self.width - 40)
            y0 = rng.randrange(self.title_height + 4, self.height - 30)
            w = rng.randrange(16, 36)
            h = rng.randrange(8, 24)
            shade = tuple(min(255, c + rng.randrange(40, 100)) for c in background)
            draw.rectangle([x0, y0, x0 + w, y0 + h], fill=shade, outline=(0, 0, 0))

        if jitter:
            nudge = 1 + (jitter - 1) % 4
            patch = tuple(min(255, c + nudge) if c < 128 else c - nudge for c in background)
            x1 = self.width - 2 - self.patch_size
            y1 = self.height - 2 - self.patch_size
            draw.rectangle([x1, y1, x1 + self.patch_size - 1, y1 + self.patch_size - 1], fill=patch)
        return img

    def save(self, img: Image.Image, output_path: PathLike) -> None:
        """Save a frame as PNG."""
        ensure_output_directory(output_path)
        img.save(output_path, format="PNG")


class ModelVisualizer:
    """Plots a learned execution graph."""

    ESSENTIAL_COLOUR = "#4CAF50"
    OPTIONAL_COLOUR = "#CCCCCC"

    def __init__(self):
        """Initialize the visualizer with default settings."""
        self.fig_size = (12, 7)

    def _layout(self, model: LearnedModel) -> Dict[int, Tuple[float, float]]:
        """Columns by BFS depth from the initial state, rows within a column."""
        graph = model.graph
        depth = {graph.initial: 0}
        queue = deque([graph.initial])
        while queue:
            n = queue.popleft()
            for s in graph.successors(n):
                if s not in depth:
                    depth[s] = depth[n] + 1
                    queue.append(s)
        columns: Dict[int, List[int]] = {}
        for n in sorted(depth):
            columns.setdefault(depth[n], []).append(n)
        positions = {}
        for d, members in columns.items():
            for row, n in enumerate(members):
                positions[n] = (float(d), -(row - (len(members) - 1) / 2.0))
        return positions

    def create_graph_visualization(self, model: LearnedModel, output_path: PathLike,
                                   title: Optional[str] = None) -> None:
        """
        Draw the merged graph; essential states green, optional grey, terminals bold.

        Args:
            model: Learned model to draw
            output_path: Path to save the output image
            title: Optional figure title
        """
        ensure_output_directory(output_path)
        graph = model.graph
        essential = set(model.tree.nodes)
        pos = self._layout(model)

        fig, ax = plt.subplots(1, 1, figsize=self.fig_size)
        ax.axis("off")

        for e in graph.edges:
            (x0, y0), (x1, y1) = pos[e.source], pos[e.target]
            label = ", ".join(kind for kind, _ in e.actions)
            ax.annotate("", xy=(x1, y1), xytext=(x0, y0),
                        arrowprops=dict(arrowstyle="->", color="black", shrinkA=18, shrinkB=18))
            if label:
                ax.text((x0 + x1) / 2, (y0 + y1) / 2 + 0.08, label, ha="center", fontsize=7)

        for node in graph.nodes:
            x, y = pos[node.id]
            colour = self.ESSENTIAL_COLOUR if node.id in essential else self.OPTIONAL_COLOUR
            ax.scatter([x], [y], s=1400, color=colour, edgecolors="black",
                       linewidths=3 if node.is_terminal else 1, zorder=3)
            ax.text(x, y, node.name, ha="center", va="center", fontsize=8, zorder=4)

        xs = [p[0] for p in pos.values()]
        ys = [p[1] for p in pos.values()]
        ax.set_xlim(min(xs) - 0.7, max(xs) + 0.7)
        ax.set_ylim(min(ys) - 1.0, max(ys) + 1.0)
        plt.title(title or "Execution graph (green = essential)", fontsize=14, fontweight="bold")

        plt.tight_layout()
        plt.savefig(output_path, dpi=120, facecolor="white")
        plt.close(fig)
        logger.info("Graph plot written to %s", output_path)
