import pytest

from transitsim.fixtures import _assemble, build_city20, build_sg121


@pytest.fixture(scope="session")
def city20():
    return build_city20()


@pytest.fixture(scope="session")
def sg121():
    return build_sg121()


def make_line_network(n_stations: int, ride_s: int = 120, line_id: str = "L1", kind: str = "MRT"):
    """Single straight line with uniform ride times."""
    stations = [f"S{i:02d}" for i in range(1, n_stations + 1)]
    return _assemble({line_id: (kind, stations)}, lambda li, hop: ride_s)


def make_square_network(ride_s: int = 120):
    """Two 2-edge paths A->D: A-B-D on L1 and A-C-D on L2."""
    return _assemble(
        {"L1": ("MRT", ["A", "B", "D"]), "L2": ("MRT", ["A", "C", "D"])},
        lambda li, hop: ride_s,
    )
