import pytest

from properties import CASES, EXAMPLES, SUITES


class TestInvariants:
    @pytest.mark.parametrize("name", sorted(SUITES))
    def test_suite(self, name):
        before = CASES[name]
        SUITES[name]()
        assert CASES[name] - before >= EXAMPLES
