import os

import pytest

_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_KEY] = {}
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("RCLBC_STRETCH") == "1":
        return
    skip = pytest.mark.skip(reason="stretch run; set RCLBC_STRETCH=1")
    for item in items:
        if "stretch" in item.keywords:
            item.add_marker(skip)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    rep = outcome.get_result()
    results = item.config.stash[_KEY]
    num, title = mark.args
    entry = results.setdefault(num, {"title": title, "status": "PASS", "seconds": 0.0})
    if rep.when == "call":
        entry["seconds"] += rep.duration
    if rep.skipped:
        entry["status"] = "SKIP"
    elif rep.failed:
        entry["status"] = "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash[_KEY]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        r = results[num]
        terminalreporter.write_line(f"criterion {num:2d} {r['status']:4s} {r['title']} ({r['seconds']:.1f}s)")
