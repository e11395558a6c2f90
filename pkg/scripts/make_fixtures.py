#!/usr/bin/env python3
"""Regenerate the shipped replay fixture sets under fixtures/.

Usage: python3 scripts/make_fixtures.py [output_dir]
"""

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "tests"))

from fixture_builder import build_fig2, build_intro  # noqa: E402


def main() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else REPO / "fixtures"
    fig2 = build_fig2(out / "fig2_scene")
    intro = build_intro(out / "intro")
    print(f"fig2 scene: {fig2['scene']}")
    print(f"fig2 config: {fig2['config']}")
    print(f"intro reference: {intro['ref']}")


if __name__ == "__main__":
    main()
