import pytest

from lobsift.durations import (
    NS_PER_MS,
    NS_PER_S,
    NS_PER_US,
    format_duration,
    hhmmss_to_ns,
    parse_duration,
)


def test_parse_known_values():
    assert parse_duration("500ms") == 500 * NS_PER_MS
    assert parse_duration("1s") == NS_PER_S
    assert parse_duration("50us") == 50 * NS_PER_US
    assert parse_duration("7ns") == 7
    assert parse_duration("2.5ms") == 2_500_000
    assert parse_duration(" 10 ms ") == 10 * NS_PER_MS


@pytest.mark.parametrize("bad", ["", "ms", "10", "10m", "ten ms", "-5ms"])
def test_parse_rejects(bad):
    with pytest.raises(ValueError):
        parse_duration(bad)


def test_format_picks_largest_exact_unit():
    assert format_duration(1_000_000_000) == "1s"
    assert format_duration(500 * NS_PER_MS) == "500ms"
    assert format_duration(1_500_000) == "1500us"
    assert format_duration(999) == "999ns"


def test_parse_format_round_trip():
    for text in ("1s", "250ms", "50us", "123ns", "90ms"):
        assert format_duration(parse_duration(text)) == text


def test_hhmmss():
    assert hhmmss_to_ns("09:20") == (9 * 3600 + 20 * 60) * NS_PER_S
    assert hhmmss_to_ns("15:25:30") == (15 * 3600 + 25 * 60 + 30) * NS_PER_S
    with pytest.raises(ValueError):
        hhmmss_to_ns("25:00")
