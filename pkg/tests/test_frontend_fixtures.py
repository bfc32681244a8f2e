"""Guard against frontend fixtures drifting from the engine's behavior.

The browser client's tests assert byte-equality against recorded streams;
this test fails when an engine change invalidates the committed fixtures
(regenerate with `python3 tools/make_frontend_fixtures.py`).
"""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "frontend" / "tests" / "fixtures"


@pytest.mark.skipif(not FIXTURES.exists(), reason="frontend fixtures not present")
def test_fixtures_match_current_engine_output():
    sys.path.insert(0, str(ROOT / "tools"))
    try:
        from make_frontend_fixtures import build_fixtures
    finally:
        sys.path.pop(0)
    for name, data in build_fixtures().items():
        committed = (FIXTURES / name).read_bytes()
        assert committed == data, (
            f"{name} is stale; run python3 tools/make_frontend_fixtures.py"
        )
