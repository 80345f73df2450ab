"""Regenerate the bundled scenario files from the demo builders."""
from pathlib import Path

from demonforge import demos
from demonforge.scenario_io import save_scenario

OUT = Path(__file__).resolve().parents[1] / "src" / "demonforge" / "scenarios"


def main():
    OUT.mkdir(exist_ok=True)
    for name, fn in demos.DEMOS.items():
        save_scenario(fn(), OUT / f"{name}.json")
    save_scenario(demos.szilard_qubit(erasure="finite-bath"), OUT / "szilard-finite-bath.json")
    s = demos.bell_local()
    s = s.replace(name="bell-local-optimize", optimize={
        "objective": "bound_slack:e", "budget": 5000, "restarts": 8, "seed": 0,
        "free_slots": [["A", 0], ["B", 0], ["A", 1], ["B", 1]],
    })
    save_scenario(s, OUT / "bell-local-optimize.json")


if __name__ == "__main__":
    main()
