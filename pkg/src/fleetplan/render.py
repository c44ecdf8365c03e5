"""Per-step SVG frames of the grid world.

Drawing conventions: red blocks for known obstacles, green blocks for
uncertain cells with transparency equal to the belief of being blocked,
yellow circles for agents, and a yellow pentagon on each goal region with
the remaining time printed beside it.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Circle, RegularPolygon, Rectangle

from .scenario import ScenarioConfig


def _cell_beliefs(config: ScenarioConfig, belief: list[float]) -> list[float]:
    """Marginal probability that each uncertain cell is blocked."""
    marginals = []
    for i in range(len(config.uncertain_cells)):
        marginals.append(sum(p for e, p in enumerate(belief) if (e >> i) & 1))
    return marginals


def render_frame(config: ScenarioConfig, record: dict, path: str | Path) -> None:
    width, height = config.width, config.height
    fig, ax = plt.subplots(figsize=(max(3, width * 0.8), max(3, height * 0.8)))
    ax.set_xlim(0, width)
    ax.set_ylim(0, height)
    ax.set_aspect("equal")
    ax.invert_yaxis()
    ax.set_xticks(range(width + 1))
    ax.set_yticks(range(height + 1))
    ax.grid(True, linewidth=0.5, color="0.8")
    ax.tick_params(labelbottom=False, labelleft=False, length=0)

    for x, y in config.obstacles:
        ax.add_patch(Rectangle((x, y), 1, 1, color="firebrick"))

    marginals = _cell_beliefs(config, record["belief"])
    for u, blocked in zip(config.uncertain_cells, marginals):
        x, y = u.cell
        ax.add_patch(Rectangle((x, y), 1, 1, color="forestgreen",
                               alpha=max(0.0, min(1.0, blocked))))

    t = record["t"]
    for event_task, goal_cells, t_end in _goal_regions(config, record):
        for x, y in goal_cells:
            ax.add_patch(RegularPolygon((x + 0.5, y + 0.5), numVertices=5,
                                        radius=0.35, color="gold"))
            ax.text(x + 0.78, y + 0.25, str(max(0, t_end - t)),
                    fontsize=9, color="black")

    for idx, s in enumerate(record["states"]):
        x, y = s % width, s // width
        ax.add_patch(Circle((x + 0.5, y + 0.5), 0.3, color="yellow", ec="black"))
        ax.text(x + 0.42, y + 0.58, str(idx), fontsize=9)

    ax.set_title(f"t = {t}")
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)


def _goal_regions(config: ScenarioConfig, record: dict):
    """Goal cells of tasks whose window is open at this record's time."""
    assigned = {v for v in record["assignment"].values() if v is not None}
    known = {tc.id: tc for tc in config.tasks}
    regions = []
    seen = set()
    for task_id in sorted(set(record["arrivals"]) | assigned):
        tc = known.get(task_id)
        if tc is not None and task_id not in seen:
            regions.append((task_id, [tuple(c) for c in tc.goal], tc.t_end))
            seen.add(task_id)
    return regions


def render_episode(config: ScenarioConfig, records: list[dict],
                   out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for record in records:
        path = out_dir / f"frame_{record['t']:04d}.svg"
        render_frame(config, record, path)
        paths.append(path)
    return paths
