import sys

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    numbered = sorted((k, v) for k, v in lines.items() if isinstance(k, int))
    for _, line in numbered:
        terminalreporter.write_line(line)
    for k, v in lines.items():
        if not isinstance(k, int):
            terminalreporter.write_line(v)
