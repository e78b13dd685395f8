import pytest

from platoonsim.lanemap import oval_track, straight_track


@pytest.fixture(scope="session")
def track():
    return oval_track()


@pytest.fixture(scope="session")
def oval_map(track):
    return track.lane_map


@pytest.fixture(scope="session")
def straight_map():
    return straight_track()
