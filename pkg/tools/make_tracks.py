"""Regenerate the bundled lane-following tracks from their curvature profiles."""

import json
from pathlib import Path

from ctxskill.envs.lane import track_from_curvature

OUT = Path(__file__).resolve().parents[1] / "src" / "ctxskill" / "envs" / "tracks"

PROFILES = {
    # gentle S-curve, |kappa| <= 0.02 1/m
    "train": [(20.0, 0.0), (40.0, 0.02), (10.0, 0.0), (40.0, -0.02), (30.0, 0.0)],
    # two hairpins, |kappa| up to 0.06 1/m
    "eval": [(20.0, 0.0), (52.0, 0.06), (15.0, 0.0), (52.0, -0.06), (20.0, 0.0)],
}

if __name__ == "__main__":
    for name, segments in PROFILES.items():
        track = track_from_curvature(name, segments)
        d = track.to_dict()
        d["points"] = [[round(x, 9), round(y, 9)] for x, y in d["points"]]
        d["target"] = {k: round(v, 9) for k, v in d["target"].items()}
        (OUT / f"{name}.json").write_text(json.dumps(d, indent=1) + "\n")
        print(name, len(d["points"]), "points")
