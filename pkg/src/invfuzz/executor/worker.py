"""Subprocess worker entry point for the built-in reference targets.

Run as `python -m invfuzz.executor.worker`. Seeded crash defects abort the
process for real, so the parent harness exercises genuine crash containment.
"""

from .protocol import serve

if __name__ == "__main__":
    serve(die_on_crash=True)
