"""Dialogue-driven wayfinding robot simulator.

A desk-scale stack for guiding a person through a 2D indoor map: spoken-style
requests are parsed into intents, landmark references are grounded against a
scene either by embedding similarity or by a closed-vocabulary detector, and a
global A* route is tracked by a local sampling planner that keeps both the
robot disc and the trailing user's body rectangle out of obstacles.
"""

__version__ = "0.1.0"
