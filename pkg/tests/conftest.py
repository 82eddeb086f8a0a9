"""Collects acceptance outcomes and prints one line per criterion."""

_RESULTS = "_acceptance_results"


def pytest_configure(config):
    setattr(config, _RESULTS, {})


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    results = getattr(item.config, _RESULTS)
    failed = call.excinfo is not None and call.when in ("setup", "call")
    if call.when == "call" or failed:
        detail = dict(item.user_properties).get("detail", "")
        if failed:
            detail = (detail + "; " if detail else "") + call.excinfo.typename
        results[number] = (title, not failed, detail)


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, _RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, ok, detail = results[number]
        line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}"
        if detail:
            line += f": {detail}"
        terminalreporter.write_line(line)
