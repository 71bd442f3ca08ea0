"""Render the three-object scene and print what the detector finds.

Run: python3 demos/detect_scene.py
"""
import time

from conicscan import detect_frame, render
from conicscan.synth import paper_scene


def main():
    frame = render(paper_scene(noise_sigma=0.005, seed=1))
    detect_frame(frame)  # first call compiles the kernels
    timings = {}
    t0 = time.perf_counter()
    found = detect_frame(frame, timings=timings)
    ms = (time.perf_counter() - t0) * 1e3
    for p in found:
        x, y, z = p.center
        extra = f"  half-angle {p.half_angle * 57.2958:5.1f} deg" if p.kind == "cone" else ""
        print(f"{p.kind:8s} r={p.radius:.3f} m  center=({x:+.3f}, {y:+.3f}, {z:.3f})  "
              f"support={p.support}{extra}")
    print(f"{ms:.1f} ms  " + "  ".join(f"{k}={v / 1e3:.1f}ms" for k, v in timings.items()
                                       if isinstance(v, float)))


if __name__ == "__main__":
    main()
