"""The acceptance suite, one test per criterion; each prints its PASS/FAIL line."""
import pytest

from projflat import verify


@pytest.mark.parametrize("index, check", list(enumerate(verify.CHECKS, 1)), ids=lambda v: getattr(v, "__name__", str(v)))
def test_acceptance(index, check, capsys):
    result = check()
    with capsys.disabled():
        print(f"\n[{index:>2}] {result.line()}")
    assert result.passed, result.line()
