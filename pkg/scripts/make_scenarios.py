"""Regenerate the scenario files bundled with the package."""

from pathlib import Path

from distbeam.scenarios import demo_scenario, interferer_near_mic_scenario, nlos_scenario, ring_scenario
from distbeam.scene import save_scenario

OUT = Path(__file__).resolve().parents[1] / "src" / "distbeam" / "data"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    header = {
        "demo": "# 12 mics in a 10 x 14 m room, one talker, one interferer, one chirp beacon.\n"
                "# The layout approximates a deployment whose exact coordinates are not public.\n",
        "ring": "# 12 mics on a circle around a single talker: equal signal, independent noise.\n",
        "nlos": "# Demo room; an obstacle (gain 0.5) sits between the talker and mic 7,\n"
                "# and a reflection reaches mic 7 1.5 ms after the direct path.\n",
        "interferer_near_mic9": "# Mics clustered around the talker except the 9th (index 8),\n"
                                "# which sits far away next to a weak interferer.\n",
    }
    builds = {
        "demo": demo_scenario(seed=7),
        "ring": ring_scenario(),
        "nlos": nlos_scenario(transmissivity=0.5),
        "interferer_near_mic9": interferer_near_mic_scenario(near=8),
    }
    for name, scn in builds.items():
        path = OUT / f"{name}.toml"
        save_scenario(scn, path)
        path.write_text(header[name] + "\n" + path.read_text())
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
