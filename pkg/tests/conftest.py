import pytest


def pytest_configure(config):
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        number, title = mark.args
        details = [str(v) for k, v in item.user_properties if k == "detail"]
        entry = item.config._criteria.setdefault(number, {"title": title, "ok": True, "details": []})
        entry["ok"] &= rep.passed
        entry["details"].extend(details)
        if not rep.passed:
            entry["details"].append(f"{item.name} {rep.outcome}")


def pytest_terminal_summary(terminalreporter, config):
    criteria = config._criteria
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(criteria):
        entry = criteria[number]
        status = "PASS" if entry["ok"] else "FAIL"
        line = f"[{status}] criterion {number}: {entry['title']}"
        if entry["details"]:
            line += " | " + "; ".join(entry["details"])
        terminalreporter.write_line(line)
