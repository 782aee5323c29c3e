"""Shared pass/fail line registry for the acceptance tests."""

_LINES = []


def record(number: int, passed: bool, detail: str) -> str:
    line = "[criterion %2d] %s  %s" % (number, "PASS" if passed else "FAIL", detail)
    _LINES.append(line)
    print(line)
    return line


def lines():
    return list(_LINES)
