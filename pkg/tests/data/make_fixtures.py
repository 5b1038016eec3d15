"""Regenerates the hand-built DeepCAD-style fixtures in this directory."""
import json
from pathlib import Path

HERE = Path(__file__).parent / "deepcad"


def p(x, y):
    return {"x": x, "y": y, "z": 0.0}


def line(a, b):
    return {"type": "Line3D", "start_point": p(*a), "end_point": p(*b), "curve": "c"}


def frame(ox=0.0, oy=0.0, oz=0.0):
    return {"origin": {"x": ox, "y": oy, "z": oz}, "x_axis": {"x": 1.0, "y": 0.0, "z": 0.0},
            "y_axis": {"x": 0.0, "y": 1.0, "z": 0.0}, "z_axis": {"x": 0.0, "y": 0.0, "z": 1.0}}


def doc(loops_per_step, ops=None, extent=0.25):
    entities, sequence = {}, []
    for i, loops in enumerate(loops_per_step):
        sid, eid = f"sk{i}", f"ex{i}"
        entities[sid] = {"type": "Sketch", "name": f"Sketch{i}", "transform": frame(),
                         "profiles": {"pr0": {"loops": [{"is_outer": j == 0, "profile_curves": c}
                                                        for j, c in enumerate(loops)]}}}
        entities[eid] = {"type": "ExtrudeFeature", "profiles": [{"sketch": sid, "profile": "pr0"}],
                         "extent_one": {"distance": {"value": extent}},
                         "extent_type": "OneSideFeatureExtentType",
                         "operation": (ops or ["NewBodyFeatureOperation"] * len(loops_per_step))[i]}
        sequence.append({"type": "Sketch", "entity": sid})
        sequence.append({"type": "ExtrudeFeature", "entity": eid})
    return {"entities": entities, "sequence": sequence}


def rect(x0, y0, x1, y1):
    c = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    return [line(c[k], c[(k + 1) % 4]) for k in range(4)]


def main():
    HERE.mkdir(exist_ok=True)
    files = {
        "rectangle.json": doc([[rect(0.0, 0.0, 0.8, 0.4)]]),
        "plate_with_hole.json": doc([[rect(-0.5, -0.5, 0.5, 0.5),
                                      [{"type": "Circle3D", "center_point": p(0.0, 0.0), "radius": 0.2}]]]),
        # outline stored with shuffled, reversed curves as DeepCAD often does
        "slot.json": doc([[[line((0.0, 0.0), (1.0, 0.0)),
                            {"type": "Arc3D", "start_point": p(0.0, 0.0), "end_point": p(1.0, 0.0),
                             "center_point": p(0.5, 0.0), "radius": 0.5, "start_angle": 0.0,
                             "end_angle": 3.141592653589793, "reference_vector": p(1.0, 0.0)}]]]),
        "two_steps.json": doc([[rect(0.0, 0.0, 1.0, 1.0)], [rect(0.25, 0.25, 0.75, 0.75)]],
                              ["NewBodyFeatureOperation", "CutFeatureOperation"]),
        "spline.json": doc([[[{"type": "NurbsCurve3D", "start_point": p(0, 0), "end_point": p(1, 1)}]]]),
    }
    for name, d in files.items():
        (HERE / name).write_text(json.dumps(d, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
