import os
import sys

from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_terminal_summary(terminalreporter):
    mods = [m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")]
    results = getattr(mods[0], "RESULTS", {}) if mods else {}
    if not results:
        return
    terminalreporter.section("acceptance gate")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
