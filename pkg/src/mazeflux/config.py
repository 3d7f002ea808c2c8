"""Structured experiment configuration: JSON schema, hashing, factories.

One JSON file drives every CLI stage.  All stage seeds derive from the single
root seed, so (config, seed) fully determines every output byte.

Schema (all keys required unless noted):

    {
      "seed": 1001,
      "corpus": {"n": 200},
      "source": {"energy": [0.1, 1.0], "mu_y": [-9.0, 9.0],
                  "sigma": [1.0, 1.0, 0.0]},
      "sensors": {"axis": "y", "count": 190, "lo": -9.0, "hi": 9.0},
      "tally": {"nx": 16, "ny": 16, "x_lo": -12.0, "x_hi": 52.0,
                 "y_lo": -12.0, "y_hi": 52.0, "normalization": 1000.0},
      "maze": "default",            # or {"domain": [...], "walls": [[material, x0,x1,y0,y1], ...]}
      "materials": {"concrete": {"sigma_total": 0.4, "scatter_prob": 0.9},
                     "air": {"sigma_total": 1e-4, "scatter_prob": 0.99}},
      "plan": {"particles_per_batch": 1000, "batches": 20},
      "subsets": [0.5, 0.9],
      "train": {"iterations": 40000, "lr": 0.001, "batch_functions": 16,
                 "points_per_function": 256, "log_every": 100},
      "baseline_train": {"iterations": 4000, ...},   # optional, defaults to "train"
      "timing": {"n_inference": 20}                  # optional
    }
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .geometry import (
    MATERIAL_AIR,
    MaterialXS,
    MazeConfig,
    MazeGeometry,
    Rect,
    build_maze,
    default_maze_config,
)
from .models import TrainConfig
from .rng import child_seed
from .source import SensorGrid, SourceRanges
from .transport import RunPlan, TallyGrid


@dataclass
class ExperimentConfig:
    seed: int
    corpus_n: int
    source_ranges: SourceRanges
    sensor_grid: SensorGrid
    tally_grid: TallyGrid
    maze: MazeConfig
    materials: dict
    plan: RunPlan
    subsets: tuple
    train: TrainConfig
    baseline_train: TrainConfig
    hidden: int = 80
    features: int = 80
    trunk_hidden: tuple = (80,)
    n_inference: int = 20
    raw: dict = field(default_factory=dict, repr=False)

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def stage_seed(self, stage: str) -> int:
        return child_seed(self.seed, stage)

    def geometry(self) -> MazeGeometry:
        return build_maze(self.maze)


def desk_config_dict(seed: int = 1001) -> dict:
    """Desk-scale defaults: quick to simulate, strong enough to train well."""
    return {
        "seed": seed,
        "corpus": {"n": 200},
        "source": {"energy": [0.1, 1.0], "mu_y": [-9.0, 9.0], "sigma": [1.0, 1.0, 0.0]},
        "sensors": {"axis": "y", "count": 190, "lo": -9.0, "hi": 9.0},
        "tally": {"nx": 16, "ny": 16, "x_lo": -12.0, "x_hi": 52.0,
                  "y_lo": -12.0, "y_hi": 52.0, "normalization": 1000.0},
        "maze": "default",
        "materials": {"concrete": {"sigma_total": 0.4, "scatter_prob": 0.9},
                      "air": {"sigma_total": 1e-4, "scatter_prob": 0.99}},
        "plan": {"particles_per_batch": 1000, "batches": 20},
        "subsets": [0.5, 0.9],
        "model": {"hidden": 80, "features": 80, "trunk_hidden": [80, 80]},
        "train": {"iterations": 30000, "lr": 0.001, "batch_functions": 16,
                  "points_per_function": 256, "log_every": 100},
        "baseline_train": {"iterations": 6000, "lr": 0.001, "batch_functions": 16,
                           "points_per_function": 128, "log_every": 100},
        "timing": {"n_inference": 20},
    }


def paper_config_dict(seed: int = 1001) -> dict:
    """Full-scale settings mirroring the reference experiment sizes."""
    d = desk_config_dict(seed)
    d["corpus"] = {"n": 1900}
    d["source"]["energy"] = [0.0, 1.0]
    d["tally"].update({"nx": 80, "ny": 80})
    d["plan"] = {"particles_per_batch": 100_000, "batches": 100}
    d["subsets"] = [0.5, 0.6, 0.7, 0.8, 0.9]
    d["model"] = {"hidden": 80, "features": 80, "trunk_hidden": [80]}
    d["train"]["iterations"] = 10_000
    return d


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigurationError(f"config is missing {context}.{key}")
    return mapping[key]


def _train_config(d: dict, seed: int) -> TrainConfig:
    try:
        return TrainConfig(
            iterations=int(d["iterations"]),
            lr=float(d["lr"]),
            batch_functions=int(d["batch_functions"]),
            points_per_function=int(d["points_per_function"]),
            log_every=int(d.get("log_every", 100)),
            seed=seed,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad training section: {exc}") from exc


def config_from_dict(d: dict) -> ExperimentConfig:
    """Validate and materialize a parsed JSON config."""
    try:
        seed = int(_require(d, "seed", "top level"))
        corpus_n = int(_require(_require(d, "corpus", "top level"), "n", "corpus"))
        s = _require(d, "source", "top level")
        ranges = SourceRanges(energy=tuple(s["energy"]), mu_y=tuple(s["mu_y"]),
                              sigma=tuple(s.get("sigma", (1.0, 1.0, 0.0))))
        g = _require(d, "sensors", "top level")
        sensor_grid = SensorGrid(axis=g["axis"], count=int(g["count"]),
                                 lo=float(g["lo"]), hi=float(g["hi"]))
        t = _require(d, "tally", "top level")
        tally_grid = TallyGrid(nx=int(t["nx"]), ny=int(t["ny"]),
                               x_lo=float(t["x_lo"]), x_hi=float(t["x_hi"]),
                               y_lo=float(t["y_lo"]), y_hi=float(t["y_hi"]),
                               normalization=float(t.get("normalization", 1000.0)))
        maze_spec = _require(d, "maze", "top level")
        if maze_spec == "default":
            maze = default_maze_config()
        else:
            dom = Rect(*[float(v) for v in maze_spec["domain"]])
            walls = tuple((w[0], Rect(float(w[1]), float(w[2]), float(w[3]), float(w[4])))
                          for w in maze_spec["walls"])
            maze = MazeConfig(domain=dom, background=maze_spec.get("background", MATERIAL_AIR),
                              regions=walls)
        mats = {}
        for name, xs in _require(d, "materials", "top level").items():
            mats[name] = MaterialXS(sigma_total=float(xs["sigma_total"]),
                                    scatter_prob=float(xs["scatter_prob"]))
        p = _require(d, "plan", "top level")
        plan = RunPlan(particles_per_batch=int(p["particles_per_batch"]),
                       batches=int(p["batches"]), seed=child_seed(seed, "plan"))
        subsets = tuple(float(f) for f in _require(d, "subsets", "top level"))
        model = d.get("model", {})
        hidden = int(model.get("hidden", 80))
        features = int(model.get("features", 80))
        trunk_hidden = tuple(int(v) for v in model.get("trunk_hidden", [hidden]))
        train = _train_config(_require(d, "train", "top level"), child_seed(seed, "train"))
        baseline = _train_config(d.get("baseline_train", d["train"]),
                                 child_seed(seed, "baseline"))
        n_inference = int(d.get("timing", {}).get("n_inference", 20))
    except ConfigurationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed config: {exc}") from exc
    return ExperimentConfig(seed=seed, corpus_n=corpus_n, source_ranges=ranges,
                            sensor_grid=sensor_grid, tally_grid=tally_grid,
                            maze=maze, materials=mats, plan=plan, subsets=subsets,
                            train=train, baseline_train=baseline,
                            hidden=hidden, features=features, trunk_hidden=trunk_hidden,
                            n_inference=n_inference, raw=d)


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigurationError(f"config {path} must be a JSON object")
    if seed_override is not None:
        d = dict(d)
        d["seed"] = int(seed_override)
    return config_from_dict(d)


def save_config(d: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)
        fh.write("\n")
