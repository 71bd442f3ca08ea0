"""Follow an exercise ball rolling toward the camera and report its speed.

Run: python3 demos/track_ball.py
"""
import numpy as np

from conicscan import Tracker, detect_frame, estimate_velocity, render
from conicscan.synth import SceneSpec, back_wall, exercise_ball, floor_plane


def main(speed=-0.5, frames=45, fps=30.0):
    scene = SceneSpec(objects=[exercise_ball(0.0, 3.0, velocity=(0.0, 0.0, speed))],
                      planes=[floor_plane(), back_wall(4.5)], noise_sigma=0.005, seed=3)
    tracker = Tracker()
    for i in range(frames):
        t = i / fps
        tracker.step(detect_frame(render(scene, t=t)), t)
    for tr in tracker.tracks:
        print(f"track {tr.id} {tr.kind}: position {np.round(tr.position, 3)}  "
              f"velocity {np.round(tr.velocity, 3)}  speed {estimate_velocity(tr):.3f} m/s")
    print(f"true speed {abs(speed):.3f} m/s")


if __name__ == "__main__":
    main()
