"""Named experiment scenarios.

Ranges follow the three field experiments (tower at 570 m, building at
1200 m, landscape at 900 m); the scenes are synthetic analogues.
"""

PRESETS = {
    "default": {
        "config": {},
        "scene": {"kind": "two_plane", "dz": 1.2},
        "N": 10_000,
    },
    "fig2-analogue": {
        "config": {"range_l0": 570.0, "ref_slice": 11},
        "scene": {"kind": "two_plane", "dz": 9.0},
        "N": 10_000,
    },
    "fig3-analogue": {
        "config": {"range_l0": 1200.0},
        "scene": {"kind": "facade"},
        "N": 10_000,
    },
    "fig4-analogue": {
        "config": {"range_l0": 900.0, "grid_nx": 124, "grid_ny": 124},
        "scene": {"kind": "landscape"},
        "N": 10_000,
    },
    "edge-1000m": {
        "config": {"range_l0": 1000.0},
        "scene": {"kind": "edge"},
        "N": 10_000,
    },
}
