import os
import sys
from pathlib import Path

from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

import _util  # noqa: E402

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_terminal_summary(terminalreporter):
    if not _util.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_util.VERDICTS):
        terminalreporter.write_line(_util.VERDICTS[n])
